"""Time-domain 2D acoustic forward modeling.

Pressure formulation on a regular grid, 2nd-order time stepping, 2nd- or
4th-order space.  The physical grid is extended by ``boundary_width`` cells on
the left/right/bottom where an exponentially tapered friction term damps the
field (sponge); the top edge is a free surface.  The friction form of the
sponge keeps the discrete propagator self-adjoint up to the velocity
weighting, which is what makes source/receiver reciprocity and the adjoint
gradient exact at the discrete level.

Source samples are injected at the nearest grid cell (optionally spread
bilinearly), scaled by dt^2 v^2 / (dx dz); receivers sample raw pressure.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from dfwi import kernels
from dfwi.errors import NumericalError
from dfwi.fields import AcquisitionGeometry, GridSpec

HALO = kernels.HALO

# Courant constants for the 2nd/4th-order stencils.
_COURANT = {2: 1.0, 4: 0.857}


@dataclass(frozen=True, eq=False)
class Wavelet:
    """Source signature sampled at the record rate."""

    nt: int
    dt: float
    samples: np.ndarray
    f0: float
    t0: float

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=np.float64)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.nt < 2 or self.dt <= 0:
            raise ValueError("wavelet needs nt >= 2 and dt > 0")
        if len(self.samples) != self.nt:
            raise ValueError("sample count does not match nt")

    @property
    def duration(self):
        return self.nt * self.dt


@dataclass(frozen=True)
class SolverConfig:
    boundary_width: int = 20
    boundary_taper: float = 0.0053
    spatial_order: int = 4
    courant_safety: float = 0.9
    bilinear_source: bool = False
    nan_check_interval: int = 25

    def __post_init__(self):
        if self.boundary_width < 10:
            raise ValueError("boundary_width must be >= 10 cells")
        if not 0 < self.courant_safety <= 1:
            raise ValueError("courant_safety must be in (0, 1]")
        if self.spatial_order not in (2, 4):
            raise ValueError("spatial_order must be 2 or 4")
        if self.boundary_taper <= 0:
            raise ValueError("boundary_taper must be positive")


@dataclass(frozen=True, eq=False)
class ShotGather:
    """Receiver-by-time pressure record for one source."""

    nt: int
    dt: float
    receiver_positions: tuple
    receiver_depth: float
    data: np.ndarray
    source_position: float
    source_depth: float

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.float64)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "receiver_positions", tuple(self.receiver_positions))
        if d.shape != (len(self.receiver_positions), self.nt):
            raise ValueError(f"gather shape {d.shape} does not match "
                             f"({len(self.receiver_positions)}, {self.nt})")
        if not np.all(np.isfinite(d)):
            raise ValueError("gather contains non-finite samples")

    def with_data(self, data):
        return ShotGather(self.nt, self.dt, self.receiver_positions, self.receiver_depth,
                          data, self.source_position, self.source_depth)


def ricker(f0, t0, dt, nt):
    """Ricker wavelet, unit peak at t0 (default 1/f0 when t0 is None)."""
    if f0 <= 0 or dt <= 0 or nt < 2:
        raise ValueError("need f0 > 0, dt > 0, nt >= 2")
    if f0 > 0.2 / dt:
        raise ValueError(f"f0 = {f0} Hz is too high for dt = {dt} s "
                         f"(aliasing guard f0 <= {0.2 / dt:.3g} Hz)")
    if t0 is None:
        t0 = 1.0 / f0
    t = np.arange(nt) * dt - t0
    arg = (np.pi * f0 * t) ** 2
    samples = (1.0 - 2.0 * arg) * np.exp(-arg)
    return Wavelet(nt=nt, dt=dt, samples=samples, f0=f0, t0=t0)


def cfl_max_dt(m, cfg):
    """Largest stable time step for this model and stencil."""
    v_max = float(np.max(m.v))
    h = min(m.grid.dx, m.grid.dz)
    return cfg.courant_safety * _COURANT[cfg.spatial_order] * h / (v_max * math.sqrt(2.0))


def paper_acquisition(grid, n_sources=32, n_receivers=64, depth_cells=1):
    """Sources and receivers evenly spread across the surface, one row deep."""
    if n_sources < 1 or n_receivers < 1:
        raise ValueError("need at least one source and one receiver")
    if n_sources > grid.nx or n_receivers > grid.nx:
        raise ValueError(f"counts ({n_sources} src / {n_receivers} rec) exceed nx = {grid.nx}")

    def spread(n):
        if n == 1:
            return (grid.extent_x / 2.0,)
        return tuple(np.linspace(0.0, grid.extent_x, n))

    depth = depth_cells * grid.dz
    return AcquisitionGeometry(source_positions=spread(n_sources),
                               receiver_positions=spread(n_receivers),
                               source_depth=depth, receiver_depth=depth)


class Workspace:
    """Extended-grid arrays and index maps shared by one simulation setup.

    Layout: the physical (nz, nx) grid is padded by W sponge cells on
    left/right/bottom (edge-replicated model), then by a 2-cell zero halo all
    around.  Physical cell (iz, ix) lives at array index (iz + 2, ix + W + 2).
    """

    def __init__(self, m, cfg, dt_record):
        grid = m.grid
        self.grid = grid
        self.cfg = cfg
        W = cfg.boundary_width
        self.W = W
        self.order = cfg.spatial_order
        self.inv_dx2 = 1.0 / grid.dx ** 2
        self.inv_dz2 = 1.0 / grid.dz ** 2

        dt_max = cfl_max_dt(m, cfg)
        self.dt_record = dt_record
        if dt_record <= dt_max:
            self.k_sub = 1
        else:
            self.k_sub = int(math.ceil(dt_record / dt_max - 1e-12))
        self.dt_sim = dt_record / self.k_sub

        v_ext = np.pad(np.asarray(m.v, dtype=np.float64), ((0, W), (W, W)), mode="edge")
        nz_e, nx_e = v_ext.shape
        self.shape_full = (nz_e + 2 * HALO, nx_e + 2 * HALO)
        self.v_full = np.zeros(self.shape_full)
        self.v_full[HALO:-HALO, HALO:-HALO] = v_ext
        self.c = np.zeros(self.shape_full)
        self.c[HALO:-HALO, HALO:-HALO] = (self.dt_sim * v_ext) ** 2

        # Friction profile: gamma = 1 - exp(-taper * depth-into-sponge), with
        # per-axis depths adding in the exponent (corners damp harder).
        depth_x = np.zeros(nx_e)
        depth_x[:W] = np.arange(W, 0, -1)
        depth_x[W + grid.nx:] = np.arange(1, W + 1)
        depth_z = np.zeros(nz_e)
        depth_z[grid.nz:] = np.arange(1, W + 1)
        total = depth_z[:, None] + depth_x[None, :]
        gamma_ext = 1.0 - np.exp(-cfg.boundary_taper * total)
        self.gamma = np.zeros(self.shape_full)
        self.gamma[HALO:-HALO, HALO:-HALO] = gamma_ext

        self.src_scale = 1.0 / (grid.dx * grid.dz)

    def cell(self, x_m, depth_m):
        """Nearest full-array index for a physical (x, depth) position."""
        ix = int(round(x_m / self.grid.dx))
        iz = int(round(depth_m / self.grid.dz))
        if not (0 <= ix < self.grid.nx and 0 <= iz < self.grid.nz):
            raise ValueError(f"position x={x_m} m, depth={depth_m} m is outside the grid")
        return iz + HALO, ix + self.W + HALO

    def source_cells(self, x_m, depth_m):
        """[(iz, ix, weight)] for a source; bilinear spread when configured."""
        if not self.cfg.bilinear_source:
            iz, ix = self.cell(x_m, depth_m)
            return [(iz, ix, 1.0)]
        fx = x_m / self.grid.dx
        fz = depth_m / self.grid.dz
        if not (0 <= fx <= self.grid.nx - 1 and 0 <= fz <= self.grid.nz - 1):
            raise ValueError(f"position x={x_m} m, depth={depth_m} m is outside the grid")
        x0, z0 = int(math.floor(fx)), int(math.floor(fz))
        x1, z1 = min(x0 + 1, self.grid.nx - 1), min(z0 + 1, self.grid.nz - 1)
        wx, wz = fx - x0, fz - z0
        cells = [(z0, x0, (1 - wz) * (1 - wx)), (z0, x1, (1 - wz) * wx),
                 (z1, x0, wz * (1 - wx)), (z1, x1, wz * wx)]
        return [(iz + HALO, ix + self.W + HALO, w) for iz, ix, w in cells if w > 0]

    def receiver_cells(self, positions, depth_m):
        idx = [self.cell(p, depth_m) for p in positions]
        iz = np.array([i for i, _ in idx], dtype=np.intp)
        ix = np.array([j for _, j in idx], dtype=np.intp)
        return iz, ix

    def fold_to_phys(self, g_full):
        """Adjoint of the edge-replicated padding: fold pad cells back."""
        nz, nx, W = self.grid.nz, self.grid.nx, self.W
        g = g_full[HALO:-HALO, HALO:-HALO]
        phys = g[:nz, W:W + nx].copy()
        phys[:, 0] += g[:nz, :W].sum(axis=1)
        phys[:, nx - 1] += g[:nz, W + nx:].sum(axis=1)
        phys[nz - 1, :] += g[nz:, W:W + nx].sum(axis=0)
        phys[nz - 1, 0] += g[nz:, :W].sum()
        phys[nz - 1, nx - 1] += g[nz:, W + nx:].sum()
        return phys

    def resample_wavelet(self, w):
        """Record-rate samples interpolated onto the simulation rate."""
        nt_sim = (w.nt - 1) * self.k_sub + 1
        if self.k_sub == 1:
            return np.array(w.samples), nt_sim
        t_rec = np.arange(w.nt) * w.dt
        t_sim = np.arange(nt_sim) * self.dt_sim
        return np.interp(t_sim, t_rec, w.samples), nt_sim


def run_shot(ws, src_cells, wavelet_sim, nt_record, rec_iz, rec_ix,
             store_history=False, monitor=None):
    """One forward simulation.  Returns (gather data, history or None).

    History frames (float32, full-array shape) hold p^n for n = 0..nt_sim-1.
    ``monitor(step, field)`` is called after every simulation step.
    """
    cfg = ws.cfg
    k = ws.k_sub
    nt_sim = (nt_record - 1) * k + 1
    p_old = np.zeros(ws.shape_full)
    p_cur = np.zeros(ws.shape_full)
    p_new = np.zeros(ws.shape_full)
    data = np.zeros((len(rec_ix), nt_record))
    history = None
    if store_history:
        history = np.zeros((nt_sim,) + ws.shape_full, dtype=np.float32)

    for n in range(nt_sim - 1):
        kernels.step_forward(p_new, p_cur, p_old, ws.c, ws.gamma,
                             ws.inv_dx2, ws.inv_dz2, ws.order)
        f = wavelet_sim[n] * ws.src_scale
        for iz, ix, wgt in src_cells:
            p_new[iz, ix] += ws.c[iz, ix] * (f * wgt)
        step = n + 1
        if step % cfg.nan_check_interval == 0 or step == nt_sim - 1:
            if not np.all(np.isfinite(p_new)):
                raise NumericalError(f"non-finite wavefield at step {step} of {nt_sim}")
        if step % k == 0:
            data[:, step // k] = p_new[rec_iz, rec_ix]
        if store_history:
            history[step] = p_new
        if monitor is not None:
            monitor(step, p_new, p_cur)
        p_old, p_cur, p_new = p_cur, p_new, p_old
    return data, history


def forward_model(m, geom, w, cfg=None, jobs=1):
    """Simulate every shot in the geometry; one ShotGather per source."""
    if cfg is None:
        cfg = SolverConfig()
    geom.validate_against(m.grid)
    ws = Workspace(m, cfg, w.dt)
    wavelet_sim, _ = ws.resample_wavelet(w)
    rec_iz, rec_ix = ws.receiver_cells(geom.receiver_positions, geom.receiver_depth)

    def one(sx):
        src = ws.source_cells(sx, geom.source_depth)
        data, _ = run_shot(ws, src, wavelet_sim, w.nt, rec_iz, rec_ix)
        return data

    if jobs > 1 and len(geom.source_positions) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(one, geom.source_positions))
    else:
        results = [one(sx) for sx in geom.source_positions]

    return [ShotGather(nt=w.nt, dt=w.dt,
                       receiver_positions=geom.receiver_positions,
                       receiver_depth=geom.receiver_depth,
                       data=data, source_position=sx,
                       source_depth=geom.source_depth)
            for sx, data in zip(geom.source_positions, results)]


def propagate(m, cfg, dt, nt, source_x, source_depth, amplitude_series, monitor=None):
    """Low-level single-shot propagation at a forced dt (no sub-stepping).

    Diagnostic surface for stability sweeps and energy monitoring; returns the
    final field.  A too-large dt is allowed here on purpose.
    """
    ws = Workspace(m, cfg, dt)
    ws.k_sub = 1
    ws.dt_sim = dt
    ws.c = np.zeros(ws.shape_full)
    ws.c[HALO:-HALO, HALO:-HALO] = (dt * ws.v_full[HALO:-HALO, HALO:-HALO]) ** 2
    src = ws.source_cells(source_x, source_depth)
    series = np.zeros(nt)
    series[:min(nt, len(amplitude_series))] = amplitude_series[:nt]
    iz, ix = ws.cell(source_x, source_depth)
    try:
        data, _ = run_shot(ws, src, series, nt, np.array([iz]), np.array([ix]),
                           monitor=monitor)
    except NumericalError:
        return None
    return data


def wavefield_energy(ws, p_new, p_cur):
    """Discrete leapfrog energy of a wavefield pair.

    E = sum((p_new - p_cur)^2 / c) - <p_new, lap(p_cur)>.  Conserved by the
    undamped scheme inside the CFL limit, strictly non-increasing under the
    friction sponge; the stability and absorption tests monitor this.
    """
    core = np.s_[HALO:-HALO, HALO:-HALO]
    lap = np.zeros(ws.shape_full)
    if ws.order == 4:
        c1x, c2x = (4.0 / 3.0) * ws.inv_dx2, (-1.0 / 12.0) * ws.inv_dx2
        c1z, c2z = (4.0 / 3.0) * ws.inv_dz2, (-1.0 / 12.0) * ws.inv_dz2
        c0 = -2.5 * ws.inv_dx2 - 2.5 * ws.inv_dz2
        lap[core] = (c1x * (p_cur[2:-2, 1:-3] + p_cur[2:-2, 3:-1])
                     + c2x * (p_cur[2:-2, :-4] + p_cur[2:-2, 4:])
                     + c1z * (p_cur[1:-3, 2:-2] + p_cur[3:-1, 2:-2])
                     + c2z * (p_cur[:-4, 2:-2] + p_cur[4:, 2:-2])
                     + c0 * p_cur[core])
    else:
        c0 = -2.0 * ws.inv_dx2 - 2.0 * ws.inv_dz2
        lap[core] = (ws.inv_dx2 * (p_cur[2:-2, 1:-3] + p_cur[2:-2, 3:-1])
                     + ws.inv_dz2 * (p_cur[1:-3, 2:-2] + p_cur[3:-1, 2:-2])
                     + c0 * p_cur[core])
    d = (p_new - p_cur)[core]
    cc = ws.c[core]
    return float(np.sum(d * d / cc)) - float(np.sum(p_new[core] * lap[core]))


# --- gather files: little-endian float32, receiver-major, JSON sidecar ------

def write_gather(path, g):
    path = str(path)
    if not path.endswith(".f32"):
        path += ".f32"
    arr = np.ascontiguousarray(g.data, dtype="<f4")
    with open(path, "wb") as f:
        f.write(arr.tobytes())
    meta = {"nt": g.nt, "dt": g.dt, "source_x": g.source_position,
            "source_depth": g.source_depth,
            "receiver_xs": list(g.receiver_positions),
            "receiver_depth": g.receiver_depth}
    with open(path[:-4] + ".json", "w") as f:
        import json
        json.dump(meta, f)
    return path


def read_gather(path):
    import json
    path = str(path)
    if not path.endswith(".f32"):
        path += ".f32"
    with open(path[:-4] + ".json") as f:
        meta = json.load(f)
    raw = np.fromfile(path, dtype="<f4")
    n_rec = len(meta["receiver_xs"])
    nt = int(meta["nt"])
    if raw.size != n_rec * nt:
        raise ValueError(f"{path}: expected {n_rec * nt} samples, found {raw.size}")
    return ShotGather(nt=nt, dt=float(meta["dt"]),
                      receiver_positions=tuple(meta["receiver_xs"]),
                      receiver_depth=float(meta.get("receiver_depth", 0.0)),
                      data=raw.reshape(n_rec, nt).astype(np.float64),
                      source_position=float(meta["source_x"]),
                      source_depth=float(meta.get("source_depth", 0.0)))

"""Classic iterative FWI: gradient descent on the waveform misfit under box
constraints, with an optional explicit smoothness (Tikhonov) term.

The diffusion prior replaces the explicit regularizer in the coupled loop, so
the default regularization weight is zero here.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from dfwi.adjoint import gradient
from dfwi.fields import VelocityModel


@dataclass(frozen=True)
class FwiConfig:
    n_iters: int = 50
    step_rule: str = "fixed_normalized"  # or "adam_like"
    lr: float = 25.0                     # m/s per iteration
    v_bounds: tuple = (1500.0, 4500.0)
    reg_weight: float = 0.0              # weight of the optional Tikhonov term
    tikhonov_enabled: bool = False
    mask_top_rows: int = 2

    def __post_init__(self):
        if self.n_iters < 0:
            raise ValueError("n_iters must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not self.v_bounds[0] < self.v_bounds[1]:
            raise ValueError("v_bounds must be ordered")
        if self.step_rule not in ("fixed_normalized", "adam_like"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass
class FwiResult:
    misfits: list = field(default_factory=list)       # J(m_i) before update i
    per_shot: list = field(default_factory=list)
    status: str = "ok"
    iterations: int = 0


def box_constrain(m, bounds):
    """Elementwise clamp of the velocity model to [lo, hi]."""
    lo, hi = bounds
    if not lo < hi:
        raise ValueError("bounds must be ordered")
    return VelocityModel(m.grid, np.clip(m.v, lo, hi))


def _tikhonov(v, weight):
    """Sum-of-squared-first-differences penalty and its exact gradient."""
    dxv = v[:, 1:] - v[:, :-1]
    dzv = v[1:, :] - v[:-1, :]
    val = weight * (float(np.sum(dxv ** 2)) + float(np.sum(dzv ** 2)))
    g = np.zeros_like(v)
    g[:, 1:] += 2.0 * weight * dxv
    g[:, :-1] -= 2.0 * weight * dxv
    g[1:, :] += 2.0 * weight * dzv
    g[:-1, :] -= 2.0 * weight * dzv
    return val, g


class _AdamLike:
    """Per-cell adaptive step; lr sets the asymptotic step size in m/s."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def step(self, g):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g ** 2
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def fwi_iterate(m0, d_obs, geom, w, solver_cfg, cfg, jobs=1, max_history_mb=512.0):
    """Run cfg.n_iters model updates; returns (final model, FwiResult).

    Early stop on an all-zero gradient with nonzero residual ("stalled") and
    on five consecutive misfit increases ("diverged").
    """
    m = m0
    result = FwiResult()
    adam = _AdamLike(m0.grid.shape, cfg.lr) if cfg.step_rule == "adam_like" else None
    grow_run = 0

    for it in range(cfg.n_iters):
        mis, grad = gradient(m, d_obs, geom, w, solver_cfg,
                             mask_top_rows=cfg.mask_top_rows,
                             max_history_mb=max_history_mb, jobs=jobs)
        j_val = mis.value
        g = np.array(grad.g)
        if cfg.tikhonov_enabled and cfg.reg_weight > 0:
            reg_val, reg_g = _tikhonov(np.asarray(m.v), cfg.reg_weight)
            j_val += reg_val
            g += reg_g
        result.misfits.append(j_val)
        result.per_shot.append(mis.per_shot)
        result.iterations = it + 1

        if len(result.misfits) >= 2 and result.misfits[-1] > result.misfits[-2]:
            grow_run += 1
            if grow_run >= 5:
                result.status = "diverged"
                break
        else:
            grow_run = 0

        g_max = float(np.abs(g).max())
        if g_max == 0.0:
            result.status = "stalled" if j_val > 0 else "ok"
            break

        if adam is not None:
            delta = adam.step(g)
        else:
            delta = cfg.lr * g / g_max
        m = box_constrain(VelocityModel(m.grid, m.v - delta), cfg.v_bounds)

    return m, result


def write_misfit_trace(path, result):
    """CSV trace: iteration, total J, then one column per shot."""
    n_shots = len(result.per_shot[0]) if result.per_shot else 0
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["iteration", "J"] + [f"J_shot{i}" for i in range(n_shots)])
        for i, (j, ps) in enumerate(zip(result.misfits, result.per_shot)):
            wr.writerow([i, repr(j)] + [repr(x) for x in ps])
    return path

"""Conditional noise-prediction network.

Encoder-decoder with skip connections operating on [noisy field, condition
field] stacked along channels; each residual block receives a projection of
the sinusoidal step embedding.  The final projection is zero-initialized, so
an untrained network predicts zero noise.
"""

from dataclasses import asdict, dataclass

import numpy as np

from dfwi.nn import autodiff as ad


@dataclass(frozen=True)
class ArchSpec:
    """Architecture descriptor; serialized verbatim into checkpoints."""

    in_channels: int = 2          # noisy field + condition field
    out_channels: int = 1
    base_channels: int = 32
    channel_mults: tuple = (1, 2, 2)
    time_dim: int = 64
    groups: int = 8

    def __post_init__(self):
        object.__setattr__(self, "channel_mults", tuple(int(m) for m in self.channel_mults))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("need at least one input and output channel")
        if len(self.channel_mults) < 2:
            raise ValueError("need at least two resolutions")

    @property
    def channels(self):
        return tuple(self.base_channels * m for m in self.channel_mults)

    @property
    def n_levels(self):
        return len(self.channel_mults)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) if k == "channel_mults" else v for k, v in d.items()})


class DenoiserParams:
    """Named parameter store plus its architecture descriptor."""

    def __init__(self, arch, params):
        self.arch = arch
        self.params = params
        self._last_out = None

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    @property
    def n_params(self):
        return sum(p.data.size for p in self.params.values())

    def named_arrays(self):
        return {name: p.data for name, p in sorted(self.params.items())}


def _conv_init(rng, o, c, k, dtype, zero=False):
    if zero:
        w = np.zeros((o, c, k, k), dtype=dtype)
    else:
        fan_in = c * k * k
        w = (rng.standard_normal((o, c, k, k)) * np.sqrt(2.0 / fan_in)).astype(dtype)
    return ad.parameter(w), ad.parameter(np.zeros(o, dtype=dtype))


def _linear_init(rng, dout, din, dtype):
    w = (rng.standard_normal((dout, din)) * np.sqrt(1.0 / din)).astype(dtype)
    return ad.parameter(w), ad.parameter(np.zeros(dout, dtype=dtype))


def _gn_init(c, dtype):
    return ad.parameter(np.ones(c, dtype=dtype)), ad.parameter(np.zeros(c, dtype=dtype))


def init_denoiser(arch, seed=0, dtype=np.float32):
    """Fresh parameter store for the given architecture."""
    rng = np.random.default_rng(seed)
    P = {}

    def conv(name, o, c, k=3, zero=False):
        P[name + ".w"], P[name + ".b"] = _conv_init(rng, o, c, k, dtype, zero)

    def lin(name, dout, din):
        P[name + ".w"], P[name + ".b"] = _linear_init(rng, dout, din, dtype)

    def gn(name, c):
        P[name + ".g"], P[name + ".b"] = _gn_init(c, dtype)

    def resblock(name, cin, cout):
        gn(f"{name}.gn1", cin)
        conv(f"{name}.conv1", cout, cin)
        lin(f"{name}.time", cout, arch.time_dim)
        gn(f"{name}.gn2", cout)
        conv(f"{name}.conv2", cout, cout)
        if cin != cout:
            conv(f"{name}.skip", cout, cin, k=1)

    ch = arch.channels
    lin("tmlp1", arch.time_dim, arch.time_dim)
    lin("tmlp2", arch.time_dim, arch.time_dim)
    conv("stem", ch[0], arch.in_channels)
    for i in range(arch.n_levels):
        resblock(f"enc{i}", ch[i], ch[i])
        if i < arch.n_levels - 1:
            conv(f"down{i}", ch[i + 1], ch[i])
    resblock("mid", ch[-1], ch[-1])
    for i in range(arch.n_levels - 2, -1, -1):
        conv(f"up{i}", ch[i], ch[i + 1])
        resblock(f"dec{i}", 2 * ch[i], ch[i])
    gn("out.gn", ch[0])
    conv("out", arch.out_channels, ch[0], zero=True)
    return DenoiserParams(arch, P)


def sinusoidal_embedding(t, dim):
    """Deterministic map from integer steps to a dim-vector (half sin, half cos)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _resblock_forward(P, name, x, temb, groups):
    h = ad.silu(ad.group_norm(x, P[f"{name}.gn1.g"], P[f"{name}.gn1.b"], groups))
    h = ad.conv2d(h, P[f"{name}.conv1.w"], P[f"{name}.conv1.b"])
    tproj = ad.linear(temb, P[f"{name}.time.w"], P[f"{name}.time.b"])
    h = ad.add_channel_bias(h, tproj)
    h = ad.silu(ad.group_norm(h, P[f"{name}.gn2.g"], P[f"{name}.gn2.b"], groups))
    h = ad.conv2d(h, P[f"{name}.conv2.w"], P[f"{name}.conv2.b"])
    if f"{name}.skip.w" in P:
        x = ad.conv2d(x, P[f"{name}.skip.w"], P[f"{name}.skip.b"], pad=0)
    return ad.add(h, x)


def denoiser_forward(dp, x_t, t, cond):
    """Predicted noise for noisy fields x_t (B,1,H,W) at steps t with condition.

    Conditioning is realized by concatenating the condition field as a second
    input channel.  Returns a Tensor of shape (B, out_channels, H, W).
    """
    arch = dp.arch
    x_t = np.asarray(x_t)
    cond = np.asarray(cond)
    if x_t.ndim != 4 or x_t.shape[1] != 1:
        raise ValueError(f"x_t must be (B,1,H,W), got {x_t.shape}")
    if cond.shape != x_t.shape:
        raise ValueError(f"condition shape {cond.shape} != input shape {x_t.shape}")
    H, W = x_t.shape[2:]
    factor = 2 ** (arch.n_levels - 1)
    if H % factor or W % factor:
        raise ValueError(f"spatial size {H}x{W} not divisible by {factor}")

    dtype = dp["stem.w"].dtype
    P = dp
    temb_raw = sinusoidal_embedding(t, arch.time_dim).astype(dtype)
    if temb_raw.shape[0] == 1 and x_t.shape[0] > 1:
        temb_raw = np.repeat(temb_raw, x_t.shape[0], axis=0)
    temb = ad.constant(temb_raw)
    temb = ad.linear(temb, P["tmlp1.w"], P["tmlp1.b"])
    temb = ad.silu(temb)
    temb = ad.linear(temb, P["tmlp2.w"], P["tmlp2.b"])

    h = ad.constant(np.concatenate([x_t, cond], axis=1).astype(dtype))
    h = ad.conv2d(h, P["stem.w"], P["stem.b"])
    skips = []
    for i in range(arch.n_levels):
        h = _resblock_forward(P, f"enc{i}", h, temb, arch.groups)
        skips.append(h)
        if i < arch.n_levels - 1:
            h = ad.conv2d(h, P[f"down{i}.w"], P[f"down{i}.b"], stride=2)
    h = _resblock_forward(P, "mid", h, temb, arch.groups)
    for i in range(arch.n_levels - 2, -1, -1):
        h = ad.upsample_nearest2(h)
        h = ad.conv2d(h, P[f"up{i}.w"], P[f"up{i}.b"])
        h = ad.concat_channels(h, skips[i])
        h = _resblock_forward(P, f"dec{i}", h, temb, arch.groups)
    h = ad.silu(ad.group_norm(h, P["out.gn.g"], P["out.gn.b"], arch.groups))
    out = ad.conv2d(h, P["out.w"], P["out.b"])
    dp._last_out = out
    return out


def denoiser_backward(dp, upstream):
    """Parameter gradients for the most recent forward pass.

    Returns {name: gradient array}; raises if no forward pass is recorded.
    """
    if dp._last_out is None:
        raise RuntimeError("denoiser_backward called without a recorded forward pass")
    out = dp._last_out
    dp._last_out = None
    for p in dp.params.values():
        p.grad = None
    ad.backward(out, upstream)
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in dp.params.items()}

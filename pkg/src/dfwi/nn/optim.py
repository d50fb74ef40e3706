"""Bias-corrected adaptive moment optimizer for the named parameter store."""

import numpy as np


def adam_init(dp):
    return {
        "m": {name: np.zeros_like(p.data) for name, p in dp.params.items()},
        "v": {name: np.zeros_like(p.data) for name, p in dp.params.items()},
        "t": 0,
        "skipped": 0,
    }


def adam_step(dp, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One update of every named segment; skips (and counts) non-finite steps."""
    for name in dp.params:
        if name not in grads:
            raise ValueError(f"missing gradient for segment {name!r}")
        if grads[name].shape != dp.params[name].data.shape:
            raise ValueError(f"gradient shape mismatch for segment {name!r}")
    if any(not np.all(np.isfinite(g)) for g in grads.values()):
        state["skipped"] += 1
        return state
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in dp.params.items():
        g = grads[name]
        m = state["m"][name]
        v = state["v"][name]
        m[...] = beta1 * m + (1 - beta1) * g
        v[...] = beta2 * v + (1 - beta2) * g * g
        p.data = p.data - (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.data.dtype)
    return state

"""Minimal define-by-run reverse-mode autodiff on numpy arrays.

Just enough machinery for the denoising network: conv2d (im2col + BLAS),
group normalization, SiLU, nearest upsampling, channel concat and small dense
layers.  Gradients are exact; the tests check every op against central finite
differences.
"""

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype


def constant(data):
    return Tensor(data)


def parameter(data):
    return Tensor(np.array(data), requires_grad=True)


def backward(out, upstream=None):
    """Reverse sweep from `out`; accumulates .grad on requires_grad tensors."""
    if upstream is None:
        if out.data.size != 1:
            raise ValueError("upstream gradient required for non-scalar output")
        upstream = np.ones_like(out.data)
    upstream = np.asarray(upstream, dtype=out.data.dtype)
    if upstream.shape != out.data.shape:
        raise ValueError(f"upstream shape {upstream.shape} != output shape {out.data.shape}")

    order = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    grads = {id(out): upstream}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg
        else:
            node.grad = g if node.grad is None else node.grad + g
    return out


def add(a, b):
    def bwd(g):
        return g, g
    return Tensor(a.data + b.data, parents=(a, b), backward=bwd)


def concat_channels(a, b):
    ca = a.data.shape[1]

    def bwd(g):
        return g[:, :ca], g[:, ca:]
    return Tensor(np.concatenate([a.data, b.data], axis=1), parents=(a, b), backward=bwd)


def silu(x):
    sig = 1.0 / (1.0 + np.exp(-x.data))
    out = x.data * sig

    def bwd(g):
        return (g * (sig * (1.0 + x.data * (1.0 - sig))),)
    return Tensor(out, parents=(x,), backward=bwd)


def linear(x, w, b):
    """x (B, Din) @ w.T (Din, Dout) + b."""
    out = x.data @ w.data.T + b.data

    def bwd(g):
        return g @ w.data, g.T @ x.data, g.sum(axis=0)
    return Tensor(out, parents=(x, w, b), backward=bwd)


def add_channel_bias(x, bias):
    """x (B,C,H,W) + bias (B,C) broadcast over the spatial axes."""
    out = x.data + bias.data[:, :, None, None]

    def bwd(g):
        return g, g.sum(axis=(2, 3))
    return Tensor(out, parents=(x, bias), backward=bwd)


def _im2col(x, kh, kw, stride, pad):
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    ho = (H + 2 * pad - kh) // stride + 1
    wo = (W + 2 * pad - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(B, C * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(dcols, x_shape, kh, kw, stride, pad, ho, wo):
    B, C, H, W = x_shape
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(B, C, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += d6[:, :, i, j]
    return dxp[:, :, pad:pad + H, pad:pad + W] if pad else dxp


def conv2d(x, w, b, stride=1, pad=1):
    """2D convolution; w (O, C, kh, kw), bias (O,)."""
    O, C, kh, kw = w.data.shape
    cols, ho, wo = _im2col(x.data, kh, kw, stride, pad)
    w2 = w.data.reshape(O, C * kh * kw)
    out = np.matmul(w2, cols) + b.data[:, None]
    out = out.reshape(x.data.shape[0], O, ho, wo)

    def bwd(g):
        gf = g.reshape(g.shape[0], O, ho * wo)
        cols_b, _, _ = _im2col(x.data, kh, kw, stride, pad)  # recompute, saves memory
        dw = np.matmul(gf, cols_b.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
        db = gf.sum(axis=(0, 2))
        dcols = np.matmul(w2.T, gf)
        dx = _col2im(dcols, x.data.shape, kh, kw, stride, pad, ho, wo)
        return dx, dw, db
    return Tensor(out, parents=(x, w, b), backward=bwd)


def group_norm(x, gamma, beta, groups, eps=1e-5):
    """Normalize over (C/groups, H, W) blocks per sample; affine per channel."""
    B, C, H, W = x.data.shape
    if C % groups:
        raise ValueError(f"channels {C} not divisible by {groups} groups")
    xg = x.data.reshape(B, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(B, C, H, W)
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def bwd(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dxhat = (g * gamma.data[None, :, None, None]).reshape(B, groups, -1)
        xh = xhat.reshape(B, groups, -1)
        n = xh.shape[2]
        dx = inv * (dxhat - dxhat.mean(axis=2, keepdims=True)
                    - xh * (dxhat * xh).sum(axis=2, keepdims=True) / n)
        return dx.reshape(B, C, H, W), dgamma, dbeta
    return Tensor(out, parents=(x, gamma, beta), backward=bwd)


def upsample_nearest2(x):
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def bwd(g):
        B, C, H2, W2 = g.shape
        return (g.reshape(B, C, H2 // 2, 2, W2 // 2, 2).sum(axis=(3, 5)),)
    return Tensor(out, parents=(x,), backward=bwd)


def mean_squared_error(pred, target):
    """Scalar mean((pred - target)^2); target is plain data."""
    target = np.asarray(target, dtype=pred.data.dtype)
    diff = pred.data - target
    out = np.asarray(np.mean(diff ** 2), dtype=pred.data.dtype)

    def bwd(g):
        return (g * diff * (2.0 / diff.size),)
    return Tensor(out, parents=(pred,), backward=bwd)

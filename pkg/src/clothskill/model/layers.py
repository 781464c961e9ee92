"""Forward/backward pairs for the layers of the affordance network.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache and returns the gradient w.r.t.
the input followed by the parameter gradients. Arrays are batch-first.
"""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-5
MASK_FILL = -1e9
_GELU_C = np.sqrt(2.0 / np.pi)


def linear_forward(x, w, b):
    return x @ w + b, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return dout @ w.T, x2.T @ d2, d2.sum(axis=0)


def layernorm_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def layernorm_backward(dout, cache):
    xhat, rstd, g = cache
    d = xhat.shape[-1]
    dg = (dout * xhat).reshape(-1, d).sum(axis=0)
    db = dout.reshape(-1, d).sum(axis=0)
    dxhat = dout * g
    dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def gelu_forward(x):
    inner = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(inner)
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_backward(dout, cache):
    x, t = cache
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * (x * x))
    return dout * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def attention_forward(x, p, prefix, heads, key_mask):
    """Multi-head self-attention. ``key_mask`` is (B, S) with True for attendable keys."""
    B, S, d = x.shape
    dh = d // heads
    q, cq = linear_forward(x, p[prefix + "wq"], p[prefix + "bq"])
    k, ck = x @ p[prefix + "wk"], (x, p[prefix + "wk"])
    v, cv = linear_forward(x, p[prefix + "wv"], p[prefix + "bv"])

    def split(t):
        return t.reshape(B, S, heads, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q), split(k), split(v)
    scale = 1.0 / np.sqrt(dh)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    scores = np.where(key_mask[:, None, None, :], scores, x.dtype.type(MASK_FILL))
    attn = softmax(scores, axis=-1)
    ctx = (attn @ vh).transpose(0, 2, 1, 3).reshape(B, S, d)
    out, co = linear_forward(ctx, p[prefix + "wo"], p[prefix + "bo"])
    return out, (cq, ck, cv, co, qh, kh, vh, attn, scale, heads, key_mask)


def attention_backward(dout, cache, prefix):
    cq, ck, cv, co, qh, kh, vh, attn, scale, heads, key_mask = cache
    B, H, S, dh = qh.shape
    grads = {}
    dctx, grads[prefix + "wo"], grads[prefix + "bo"] = linear_backward(dout, co)
    dctx = dctx.reshape(B, S, H, dh).transpose(0, 2, 1, 3)
    dattn = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores = np.where(key_mask[:, None, None, :], dscores, 0.0) * scale
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    def merge(t):
        return t.transpose(0, 2, 1, 3).reshape(B, S, H * dh)

    dx_q, grads[prefix + "wq"], grads[prefix + "bq"] = linear_backward(merge(dqh), cq)
    dx_k, grads[prefix + "wk"], _ = linear_backward(merge(dkh), ck)
    dx_v, grads[prefix + "wv"], grads[prefix + "bv"] = linear_backward(merge(dvh), cv)
    return dx_q + dx_k + dx_v, grads


def _im2col3(x):
    """(B, h, w, C) -> (B, h, w, 9C) with zero 'same' padding."""
    B, h, w, C = x.shape
    xp = np.zeros((B, h + 2, w + 2, C), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((B, h, w, 9, C), dtype=x.dtype)
    for dy in range(3):
        for dx in range(3):
            cols[:, :, :, dy * 3 + dx] = xp[:, dy:dy + h, dx:dx + w]
    return cols.reshape(B, h, w, 9 * C)


def _col2im3(dcols, C):
    B, h, w, _ = dcols.shape
    dcols = dcols.reshape(B, h, w, 9, C)
    dxp = np.zeros((B, h + 2, w + 2, C), dtype=dcols.dtype)
    for dy in range(3):
        for dx in range(3):
            dxp[:, dy:dy + h, dx:dx + w] += dcols[:, :, :, dy * 3 + dx]
    return dxp[:, 1:-1, 1:-1]


def conv3x3_forward(x, w, b=None):
    """3x3 stride-1 convolution, channels last. ``w`` is (9 * Cin, Cout)."""
    cols = _im2col3(x)
    out = cols @ w
    if b is not None:
        out = out + b
    return out, (cols, w, x.shape[-1])


def conv3x3_backward(dout, cache):
    cols, w, cin = cache
    d2 = dout.reshape(-1, dout.shape[-1])
    dw = cols.reshape(-1, cols.shape[-1]).T @ d2
    db = d2.sum(axis=0)
    dx = _col2im3(dout @ w.T, cin)
    return dx, dw, db


def upsample2_forward(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_backward(dout):
    B, H, W, C = dout.shape
    return dout.reshape(B, H // 2, 2, W // 2, 2, C).sum(axis=(2, 4))


def pixel_ce_forward(logits, targets, eps=1e-12):
    """Cross-entropy of the pixel softmax at the target index, floored at ``eps``.

    ``logits`` is (B, H*W); ``targets`` are flat pixel indices. Returns the mean
    loss and the cache.
    """
    B = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    nll = lse - z[np.arange(B), targets]
    cap = -np.log(eps)
    clipped = nll > cap
    per = np.minimum(nll, cap)
    return float(per.mean()), (z, lse, targets, clipped)


def pixel_ce_backward(cache):
    z, lse, targets, clipped = cache
    B = z.shape[0]
    p = np.exp(z - lse[:, None])
    p[np.arange(B), targets] -= 1.0
    p[clipped] = 0.0
    return p / B

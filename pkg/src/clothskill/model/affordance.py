"""Language-conditioned pixel affordance network.

Depth patches and instruction tokens are embedded, concatenated, and run
through a pre-norm transformer encoder. The image-token outputs are
reshaped to a grid and decoded by alternating 3x3 convolutions and 2x
nearest-neighbour upsampling into one logit per pixel; a softmax over all
pixels gives the heatmap.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from ..errors import ShapeMismatch, TrainingDiverged
from . import layers as L
from .tokenizer import PAD, tokenize, vocab_size

DEPTH_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    patch_size: int = 8
    dim: int = 64
    layers: int = 2
    heads: int = 4
    mlp_dim: int = 128
    vocab_size: int = 0  # 0 means "use the tokenizer's vocabulary"
    max_text_len: int = 12
    decoder_stages: int = 3
    dtype: str = "float32"

    def __post_init__(self):
        if self.vocab_size == 0:
            object.__setattr__(self, "vocab_size", vocab_size())
        if self.image_size % self.patch_size:
            raise ValueError("image size must be divisible by the patch size")
        if self.dim % self.heads:
            raise ValueError("embedding dim must be divisible by the head count")
        if (2 ** self.decoder_stages) * self.grid != self.image_size:
            raise ValueError("2**decoder_stages * (image_size / patch_size) must equal image_size")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid**2

    @property
    def seq_len(self) -> int:
        return self.n_patches + self.max_text_len

    def decoder_channels(self) -> list[int]:
        chans = [self.dim]
        for _ in range(self.decoder_stages):
            chans.append(max(8, chans[-1] // 2))
        return chans

    def to_dict(self) -> dict:
        return asdict(self)


class Batch(NamedTuple):
    images: np.ndarray  # (B, H, W) depth in meters
    tokens: np.ndarray  # (B, T) token ids
    pixels: np.ndarray  # (B, 2) target (px, py)


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    dt = np.dtype(config.dtype)
    d, P2 = config.dim, config.patch_size**2

    def normal(*shape, std=0.02):
        return (rng.standard_normal(shape) * std).astype(dt)

    def zeros(*shape):
        return np.zeros(shape, dtype=dt)

    p: dict[str, np.ndarray] = {
        "tok_emb": normal(config.vocab_size, d),
        "patch_w": normal(P2, d, std=1.0 / np.sqrt(P2)),
        "patch_b": zeros(d),
        "pos_img": normal(config.n_patches, d),
        "pos_txt": normal(config.max_text_len, d),
        "learn_img": normal(d),
        "learn_txt": normal(d),
        "type_emb": normal(2, d),
    }
    for l in range(config.layers):
        pre = f"layers.{l}."
        p[pre + "ln1_g"] = np.ones(d, dtype=dt)
        p[pre + "ln1_b"] = zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            p[pre + name] = normal(d, d, std=1.0 / np.sqrt(d))
        # no key bias: it shifts each query's scores by a constant, which softmax ignores
        for name in ("bq", "bv", "bo"):
            p[pre + name] = zeros(d)
        p[pre + "ln2_g"] = np.ones(d, dtype=dt)
        p[pre + "ln2_b"] = zeros(d)
        p[pre + "mlp_w1"] = normal(d, config.mlp_dim, std=1.0 / np.sqrt(d))
        p[pre + "mlp_b1"] = zeros(config.mlp_dim)
        p[pre + "mlp_w2"] = normal(config.mlp_dim, d, std=1.0 / np.sqrt(config.mlp_dim))
        p[pre + "mlp_b2"] = zeros(d)
    p["lnf_g"] = np.ones(d, dtype=dt)
    p["lnf_b"] = zeros(d)
    chans = config.decoder_channels()
    for s in range(config.decoder_stages):
        fan_in = 9 * chans[s]
        p[f"dec.{s}.w"] = normal(fan_in, chans[s + 1], std=np.sqrt(2.0 / fan_in))
        p[f"dec.{s}.b"] = zeros(chans[s + 1])
    # no bias on the output conv: a constant logit shift cancels in the pixel softmax
    p["out.w"] = normal(9 * chans[-1], 1, std=np.sqrt(1.0 / (9 * chans[-1])))
    return p


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_params(config, 0).items()}


def check_params(params: dict[str, np.ndarray], config: ModelConfig) -> None:
    want = param_shapes(config)
    if set(want) != set(params):
        missing = sorted(set(want) - set(params))
        extra = sorted(set(params) - set(want))
        raise ShapeMismatch(f"parameter names differ (missing {missing}, unexpected {extra})")
    for k, shape in want.items():
        if params[k].shape != shape:
            raise ShapeMismatch(f"{k} has shape {params[k].shape}, expected {shape}")


def normalize_depth(images: np.ndarray) -> np.ndarray:
    """Per-image min-max scaling to [0, 1]."""
    lo = images.min(axis=(-2, -1), keepdims=True)
    hi = images.max(axis=(-2, -1), keepdims=True)
    return (images - lo) / (hi - lo + DEPTH_EPS)


def _scale(size: int, model_size: int) -> int:
    if size < model_size or size % model_size:
        raise ShapeMismatch(f"image size {size} is not an integer multiple of the model size {model_size}")
    return size // model_size


def fit_image(depth: np.ndarray, size: int) -> np.ndarray:
    """Block-mean downsample a square depth image to ``size`` x ``size``."""
    d = np.asarray(depth, dtype=np.float32)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ShapeMismatch(f"expected a square depth image, got shape {d.shape}")
    f = _scale(d.shape[0], size)
    if f == 1:
        return d
    return d.reshape(size, f, size, f).mean(axis=(1, 3), dtype=np.float64).astype(np.float32)


def to_model_pixel(pixel, image_size: int, model_size: int) -> tuple[int, int]:
    f = _scale(image_size, model_size)
    return int(pixel[0]) // f, int(pixel[1]) // f


def from_model_pixel(pixel, image_size: int, model_size: int) -> tuple[int, int]:
    """Centre of the image block a model pixel covers (lower-right of the middle for even blocks)."""
    f = _scale(image_size, model_size)
    return int(pixel[0]) * f + f // 2, int(pixel[1]) * f + f // 2


def _patchify(x: np.ndarray, P: int) -> np.ndarray:
    B, H, W = x.shape
    g = H // P
    return x.reshape(B, g, P, g, P).transpose(0, 1, 3, 2, 4).reshape(B, g * g, P * P)


def forward_logits(params, images, tokens, config: ModelConfig, keep_cache: bool = False):
    """Batched forward pass: (B, H, W) depth + (B, T) tokens -> (B, H*W) logits."""
    dt = np.dtype(config.dtype)
    images = np.asarray(images)
    tokens = np.asarray(tokens)
    if images.ndim != 3 or images.shape[1:] != (config.image_size, config.image_size):
        raise ShapeMismatch(
            f"expected images of shape (B, {config.image_size}, {config.image_size}), got {images.shape}"
        )
    if tokens.shape != (images.shape[0], config.max_text_len):
        raise ShapeMismatch(f"expected tokens of shape ({images.shape[0]}, {config.max_text_len}), got {tokens.shape}")
    B, N, T, d = images.shape[0], config.n_patches, config.max_text_len, config.dim
    p = params
    cache: dict = {}

    patches = _patchify(normalize_depth(images.astype(np.float64)).astype(dt), config.patch_size)
    x_img, cache["patch"] = L.linear_forward(patches, p["patch_w"], p["patch_b"])
    x_img = x_img + p["pos_img"] + p["learn_img"] + p["type_emb"][0]
    x_txt = p["tok_emb"][tokens] + p["pos_txt"] + p["learn_txt"] + p["type_emb"][1]
    x = np.concatenate([x_img, x_txt], axis=1)
    key_mask = np.concatenate([np.ones((B, N), dtype=bool), tokens != PAD], axis=1)

    for l in range(config.layers):
        pre = f"layers.{l}."
        h, c_ln1 = L.layernorm_forward(x, p[pre + "ln1_g"], p[pre + "ln1_b"])
        a, c_att = L.attention_forward(h, p, pre, config.heads, key_mask)
        x = x + a
        h2, c_ln2 = L.layernorm_forward(x, p[pre + "ln2_g"], p[pre + "ln2_b"])
        m1, c_m1 = L.linear_forward(h2, p[pre + "mlp_w1"], p[pre + "mlp_b1"])
        g1, c_g = L.gelu_forward(m1)
        m2, c_m2 = L.linear_forward(g1, p[pre + "mlp_w2"], p[pre + "mlp_b2"])
        x = x + m2
        cache[l] = (c_ln1, c_att, c_ln2, c_m1, c_g, c_m2)
    x, cache["lnf"] = L.layernorm_forward(x, p["lnf_g"], p["lnf_b"])

    z = x[:, :N, :].reshape(B, config.grid, config.grid, d)
    for s in range(config.decoder_stages):
        z, c_conv = L.conv3x3_forward(z, p[f"dec.{s}.w"], p[f"dec.{s}.b"])
        z, c_act = L.gelu_forward(z)
        z = L.upsample2_forward(z)
        cache[f"dec{s}"] = (c_conv, c_act)
    out, cache["out"] = L.conv3x3_forward(z, p["out.w"])
    logits = out.reshape(B, -1)
    cache["tokens"] = tokens
    cache["shape"] = (B, N, T, d)
    return logits, (cache if keep_cache else None)


def backward_logits(dlogits, cache, params, config: ModelConfig) -> dict[str, np.ndarray]:
    p = params
    B, N, T, d = cache["shape"]
    S = config.image_size
    grads: dict[str, np.ndarray] = {}
    dz = dlogits.reshape(B, S, S, 1)
    dz, grads["out.w"], _ = L.conv3x3_backward(dz, cache["out"])
    for s in reversed(range(config.decoder_stages)):
        c_conv, c_act = cache[f"dec{s}"]
        dz = L.upsample2_backward(dz)
        dz = L.gelu_backward(dz, c_act)
        dz, grads[f"dec.{s}.w"], grads[f"dec.{s}.b"] = L.conv3x3_backward(dz, c_conv)

    dx = np.zeros((B, N + T, d), dtype=dz.dtype)
    dx[:, :N, :] = dz.reshape(B, N, d)
    dx, grads["lnf_g"], grads["lnf_b"] = L.layernorm_backward(dx, cache["lnf"])

    for l in reversed(range(config.layers)):
        pre = f"layers.{l}."
        c_ln1, c_att, c_ln2, c_m1, c_g, c_m2 = cache[l]
        dm, grads[pre + "mlp_w2"], grads[pre + "mlp_b2"] = L.linear_backward(dx, c_m2)
        dm = L.gelu_backward(dm, c_g)
        dh2, grads[pre + "mlp_w1"], grads[pre + "mlp_b1"] = L.linear_backward(dm, c_m1)
        dln2, grads[pre + "ln2_g"], grads[pre + "ln2_b"] = L.layernorm_backward(dh2, c_ln2)
        dx = dx + dln2
        dh, g_att = L.attention_backward(dx, c_att, pre)
        grads.update(g_att)
        dln1, grads[pre + "ln1_g"], grads[pre + "ln1_b"] = L.layernorm_backward(dh, c_ln1)
        dx = dx + dln1

    dimg, dtxt = dx[:, :N, :], dx[:, N:, :]
    _, grads["patch_w"], grads["patch_b"] = L.linear_backward(dimg, cache["patch"])
    grads["pos_img"] = dimg.sum(axis=0)
    grads["learn_img"] = dimg.sum(axis=(0, 1))
    grads["pos_txt"] = dtxt.sum(axis=0)
    grads["learn_txt"] = dtxt.sum(axis=(0, 1))
    type_g = np.zeros_like(p["type_emb"])
    type_g[0] = grads["learn_img"]
    type_g[1] = grads["learn_txt"]
    grads["type_emb"] = type_g
    tok_g = np.zeros_like(p["tok_emb"])
    np.add.at(tok_g, cache["tokens"].reshape(-1), dtxt.reshape(-1, d))
    grads["tok_emb"] = tok_g
    return {k: grads[k].astype(p[k].dtype, copy=False) for k in p}


def heatmap_from_logits(logits: np.ndarray, size: int) -> np.ndarray:
    return L.softmax(logits.astype(np.float64), axis=-1).reshape(-1, size, size)


def forward(params, depth_image, tokens, config: ModelConfig) -> np.ndarray:
    """Heatmap (H, W) for one depth image and one token sequence; sums to 1."""
    logits, _ = forward_logits(params, np.asarray(depth_image)[None], np.asarray(tokens)[None], config)
    return heatmap_from_logits(logits, config.image_size)[0]


def loss(heatmap: np.ndarray, target_pixel, eps: float = 1e-12) -> float:
    """Cross-entropy of a heatmap at ``target_pixel`` = (px, py)."""
    px, py = int(target_pixel[0]), int(target_pixel[1])
    return float(-np.log(max(float(heatmap[py, px]), eps)))


def flat_targets(pixels: np.ndarray, size: int) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.int64)
    return pixels[:, 1] * size + pixels[:, 0]


def grad(params, batch: Batch, config: ModelConfig) -> tuple[float, dict[str, np.ndarray]]:
    """Mean pixel cross-entropy over the batch and its exact gradient for every tensor."""
    logits, cache = forward_logits(params, batch.images, batch.tokens, config, keep_cache=True)
    value, ce_cache = L.pixel_ce_forward(logits, flat_targets(batch.pixels, config.image_size))
    dlogits = L.pixel_ce_backward(ce_cache).astype(logits.dtype)
    grads = backward_logits(dlogits, cache, params, config)
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in {k}")
    if not np.isfinite(value):
        raise TrainingDiverged("non-finite loss")
    return value, grads


def batch_loss(params, batch: Batch, config: ModelConfig) -> float:
    logits, _ = forward_logits(params, batch.images, batch.tokens, config)
    value, _ = L.pixel_ce_forward(logits, flat_targets(batch.pixels, config.image_size))
    return value


def argmax_pixel(heatmap: np.ndarray) -> tuple[int, int]:
    """(px, py) of the maximum; ties go to the lowest row-major index."""
    flat = int(np.argmax(heatmap))
    py, px = divmod(flat, heatmap.shape[1])
    return px, py


def predict_point(params, depth_image, instruction_text: str, config: ModelConfig) -> tuple[int, int]:
    """Argmax pixel in the coordinates of ``depth_image``, which may be an integer multiple of the model size."""
    depth_image = np.asarray(depth_image)
    tokens = tokenize(instruction_text, config.max_text_len)
    px = argmax_pixel(forward(params, fit_image(depth_image, config.image_size), tokens, config))
    return from_model_pixel(px, depth_image.shape[0], config.image_size)


def predict_points(params, images, texts, config: ModelConfig) -> np.ndarray:
    tokens = np.stack([tokenize(t, config.max_text_len) for t in texts])
    logits, _ = forward_logits(params, images, tokens, config)
    flat = np.argmax(heatmap_from_logits(logits, config.image_size).reshape(len(texts), -1), axis=1)
    return np.stack([flat % config.image_size, flat // config.image_size], axis=1)

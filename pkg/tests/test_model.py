import numpy as np
import pytest

from clothskill.errors import EmptyDataset, ShapeMismatch
from clothskill.model import (
    Batch,
    ModelConfig,
    TrainArrays,
    TrainHyper,
    argmax_pixel,
    forward,
    grad,
    init_params,
    load_checkpoint,
    loss,
    predict_point,
    save_checkpoint,
    tokenize,
    train,
)
from clothskill.model import layers as L
from clothskill.model.affordance import batch_loss, fit_image, forward_logits, from_model_pixel, to_model_pixel
from clothskill.model.tokenizer import PAD, UNK

SMALL = dict(image_size=16, patch_size=4, dim=8, layers=1, heads=2, mlp_dim=16, decoder_stages=2)

# parameter-name prefixes for each layer type
LAYER_TYPES = {
    "embedding": ("tok_emb", "pos_img", "pos_txt", "learn_img", "learn_txt", "type_emb", "patch_"),
    "attention": ("layers.0.wq", "layers.0.wk", "layers.0.wv", "layers.0.wo", "layers.0.bq", "layers.0.bv",
                  "layers.0.bo"),
    "layernorm": ("layers.0.ln", "lnf_"),
    "mlp": ("layers.0.mlp",),
    "conv": ("dec.", "out."),
}


def _batch(cfg, rng, n=3):
    images = 1.0 - 0.05 * rng.random((n, cfg.image_size, cfg.image_size))
    texts = ["Pick up the left sleeve of the T-shirt", "Fold it to the center", "Pick up the crotch of the trousers"]
    tokens = np.stack([tokenize(texts[i % 3], cfg.max_text_len) for i in range(n)])
    pixels = rng.integers(0, cfg.image_size, size=(n, 2))
    return Batch(images, tokens, pixels)


def test_tokenizer_examples():
    ids = tokenize("Pick up the left sleeve of the T-shirt")
    assert (ids != PAD).sum() == 9 and UNK not in ids
    assert (tokenize("") == PAD).all()
    z = tokenize("zzz")
    assert z[0] == UNK and (z[1:] == PAD).all()


def test_sequence_length():
    cfg = ModelConfig()
    assert cfg.n_patches == 64 and cfg.seq_len == 76


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(image_size=60)
    with pytest.raises(ValueError):
        ModelConfig(dim=30, heads=4)
    with pytest.raises(ValueError):
        ModelConfig(decoder_stages=2)


def test_heatmap_is_distribution(rng):
    cfg = ModelConfig()
    params = init_params(cfg, 0)
    b = _batch(cfg, rng, 1)
    h = forward(params, b.images[0], b.tokens[0], cfg)
    assert h.shape == (64, 64) and np.all(h > 0)
    assert abs(h.sum() - 1) < 1e-6


def test_pad_positions_are_masked(rng):
    cfg = ModelConfig(**SMALL, dtype="float64")
    params = init_params(cfg, 1)
    b = _batch(cfg, rng, 1)
    tokens = b.tokens[0]
    n = int((tokens != PAD).sum())
    params2 = dict(params)
    pos = params["pos_txt"].copy()
    pos[n:] = pos[n:][::-1]  # reshuffle what the PAD slots would see
    params2["pos_txt"] = pos
    assert np.allclose(forward(params, b.images[0], tokens, cfg), forward(params2, b.images[0], tokens, cfg),
                       atol=1e-12)


def test_shape_mismatch(rng):
    cfg = ModelConfig(**SMALL)
    with pytest.raises(ShapeMismatch):
        forward_logits(init_params(cfg), np.zeros((1, 8, 8)), np.zeros((1, 12), int), cfg)


def test_loss_examples():
    uniform = np.full((64, 64), 1 / 4096)
    assert loss(uniform, (3, 5)) == pytest.approx(np.log(4096))
    assert abs(loss(uniform, (3, 5)) - 8.3178) < 1e-4
    onehot = np.zeros((64, 64))
    onehot[5, 3] = 1
    assert loss(onehot, (3, 5)) == 0
    assert loss(onehot, (0, 0)) == pytest.approx(-np.log(1e-12))


def test_ce_gradient_sums_to_zero(rng):
    logits = rng.normal(size=(4, 50))
    _, cache = L.pixel_ce_forward(logits, rng.integers(0, 50, 4))
    assert np.allclose(L.pixel_ce_backward(cache).sum(axis=1), 0, atol=1e-15)


def _rel(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def fd_worst(layer_type: str, n_params: int = 25) -> float:
    """Worst relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(7)
    cfg = ModelConfig(**SMALL, dtype="float64")
    params = init_params(cfg, 3)
    # move norms and biases off their trivial init so every path is exercised
    for k in params:
        params[k] = params[k] + rng.normal(0, 0.1, params[k].shape)
    batch = _batch(cfg, rng)
    _, g = grad(params, batch, cfg)
    names = [k for k in params if k.startswith(LAYER_TYPES[layer_type])]
    used = set(batch.tokens.ravel())
    picks = []
    while len(picks) < n_params:
        k = names[rng.integers(len(names))]
        idx = tuple(int(rng.integers(s)) for s in params[k].shape)
        if k == "tok_emb" and idx[0] not in used:
            continue
        picks.append((k, idx))
    h = 1e-5
    worst = 0.0
    for k, idx in picks:
        orig = params[k][idx]
        params[k][idx] = orig + h
        up = batch_loss(params, batch, cfg)
        params[k][idx] = orig - h
        down = batch_loss(params, batch, cfg)
        params[k][idx] = orig
        worst = max(worst, _rel(g[k][idx], (up - down) / (2 * h)))
    return worst


@pytest.mark.parametrize("layer_type", sorted(LAYER_TYPES))
def test_gradients_match_finite_differences(layer_type):
    worst = fd_worst(layer_type)
    assert worst < 1e-5, f"{layer_type}: worst relative error {worst:.2e}"


def test_duplicated_batch_same_gradient(rng):
    cfg = ModelConfig(**SMALL, dtype="float64")
    params = init_params(cfg, 0)
    b = _batch(cfg, rng)
    doubled = Batch(*(np.concatenate([x, x]) for x in b))
    _, g1 = grad(params, b, cfg)
    _, g2 = grad(params, doubled, cfg)
    for k in g1:
        assert np.allclose(g1[k], g2[k], atol=1e-12, rtol=0)


def test_argmax_tie_break():
    h = np.zeros((64, 64))
    h[40, 12] = 1
    assert argmax_pixel(h) == (12, 40)
    h = np.zeros((8, 8))
    h[3, 3] = h[5, 5] = 1
    assert argmax_pixel(h) == (3, 3)


def test_resolution_bridge():
    img = np.arange(16, dtype=np.float32).reshape(4, 4)
    assert np.array_equal(fit_image(img, 2), [[2.5, 4.5], [10.5, 12.5]])
    assert to_model_pixel((127, 64), 128, 64) == (63, 32)
    assert from_model_pixel((63, 32), 128, 64) == (127, 65)
    with pytest.raises(ShapeMismatch):
        fit_image(np.zeros((100, 100)), 64)


def test_predict_point_in_bounds(rng):
    cfg = ModelConfig(**SMALL)
    params = init_params(cfg)
    u, v = predict_point(params, np.ones((32, 32)), "Fold it to the center", cfg)
    assert 0 <= u < 32 and 0 <= v < 32


def _toy_data(cfg, n, rng):
    b = _batch(cfg, rng, n)
    return TrainArrays(b.images, b.tokens, b.pixels)


def test_training_is_deterministic(tmp_path, rng):
    cfg = ModelConfig(**SMALL)
    data = _toy_data(cfg, 12, rng)
    hyper = TrainHyper(epochs=3, batch_size=4)
    p1, log1, _ = train(data, cfg, hyper, seed=5)
    p2, log2, _ = train(data, cfg, hyper, seed=5)
    assert log1 == log2
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_memorizes_one_sample(rng):
    cfg = ModelConfig(**SMALL)
    data = _toy_data(cfg, 1, rng)
    _, log, _ = train(data, cfg, TrainHyper(epochs=150, batch_size=1, lr=1e-2, patience=1000), seed=0)
    assert log[-1]["train_loss"] < 0.05


def test_resume_reproduces_next_epoch(tmp_path, rng):
    from clothskill.model.train import save_training_checkpoint

    cfg = ModelConfig(**SMALL)
    data = _toy_data(cfg, 10, rng)
    _, full_log, _ = train(data, cfg, TrainHyper(epochs=4, batch_size=4), seed=2)
    # checkpoint after two epochs, then continue to four
    params2, _, state2 = train(data, cfg, TrainHyper(epochs=2, batch_size=4), seed=2)
    save_training_checkpoint(tmp_path / "c.cafm", params2, cfg, state2)
    resumed, log, _ = train(data, cfg, TrainHyper(epochs=4, batch_size=4), seed=2, resume=tmp_path / "c.cafm")
    assert [r["epoch"] for r in log] == [0, 1, 2, 3]
    assert log[2]["train_loss"] == pytest.approx(full_log[2]["train_loss"], rel=1e-6)


def test_empty_dataset():
    cfg = ModelConfig(**SMALL)
    with pytest.raises(EmptyDataset):
        train(TrainArrays(np.zeros((0, 16, 16)), np.zeros((0, 12), int), np.zeros((0, 2), int)), cfg)


def test_checkpoint_roundtrip(tmp_path):
    cfg = ModelConfig(**SMALL)
    params = init_params(cfg, 4)
    save_checkpoint(tmp_path / "m.cafm", params, cfg, {"note": 1}, {"adam_m/x": np.ones(3)})
    assert (tmp_path / "m.cafm").read_bytes()[:4] == b"CAFM"
    back, cfg2, meta, extra = load_checkpoint(tmp_path / "m.cafm")
    assert cfg2 == cfg and meta == {"note": 1} and list(extra) == ["adam_m/x"]
    assert all(np.array_equal(back[k], params[k]) for k in params)
    (tmp_path / "bad").write_bytes(b"NOPE")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad")

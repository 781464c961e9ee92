import numpy as np
import pytest
from hypothesis import given, strategies as st

from clothskill.eval.metrics import erode, miou, particle_error, success, wrinkle_recall


def test_success_examples():
    pos = np.zeros((10, 3))
    ok, err = success(pos, pos)
    assert ok and err == 0
    ok, err = success(pos + [0.03, 0, 0], pos)
    assert not ok and err == pytest.approx(0.03)
    with pytest.raises(ValueError):
        particle_error(np.zeros((3, 3)), np.zeros((4, 3)))


@given(st.floats(0, 0.1), st.floats(0, 0.1), st.floats(0, 0.1))
def test_success_monotone_in_threshold(offset, t1, t2):
    lo, hi = sorted((t1, t2))
    pos = np.zeros((5, 3))
    if success(pos + [offset, 0, 0], pos, lo)[0]:
        assert success(pos + [offset, 0, 0], pos, hi)[0]


def test_miou_examples():
    a = np.zeros((6, 6), bool)
    a[1:3, 1:3] = True
    assert miou(a, a) == 1.0
    b = np.zeros_like(a)
    b[4:, 4:] = True
    assert miou(a, b) == 0.0
    shifted = np.roll(a, 1, axis=1)
    assert miou(a, shifted) == pytest.approx(1 / 3)
    assert miou(np.zeros_like(a), np.zeros_like(a)) == 1.0


@given(st.integers(0, 2**16 - 1), st.integers(0, 2**16 - 1))
def test_miou_symmetric(x, y):
    a = np.array([(x >> i) & 1 for i in range(16)], bool).reshape(4, 4)
    b = np.array([(y >> i) & 1 for i in range(16)], bool).reshape(4, 4)
    assert miou(a, b) == miou(b, a)
    assert 0 <= miou(a, b) <= 1


def test_erosion_drops_border():
    m = np.ones((5, 5), bool)
    e = erode(m)
    assert e.sum() == 9 and not e[0].any()


def test_wrinkle_recall_flat_is_zero():
    mask = np.ones((10, 10), bool)
    assert wrinkle_recall(np.full((10, 10), 0.97), mask) == 0.0


def test_wrinkle_recall_spike_counts_four_neighbours():
    depth = np.ones((11, 11))
    depth[5, 5] -= 0.05
    mask = np.ones((11, 11), bool)
    interior = erode(mask).sum()
    assert wrinkle_recall(depth, mask) == pytest.approx(4 / interior)
    assert wrinkle_recall(depth, mask, tau=np.inf) == 0.0


def test_wrinkle_recall_offset_invariant(rng):
    depth = 1 + 0.02 * rng.random((12, 12))
    mask = rng.random((12, 12)) > 0.2
    assert wrinkle_recall(depth, mask) == wrinkle_recall(depth + 0.3, mask)


def test_wrinkle_recall_empty_interior(caplog):
    assert wrinkle_recall(np.ones((4, 4)), np.zeros((4, 4), bool)) == 0.0
    assert "no interior" in caplog.text

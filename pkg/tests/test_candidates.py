import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from deepboundary import candidates


def stencil_oracle(img):
    """Literal per-pixel 3x3 central difference with clamped borders."""
    h, w = img.shape
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            right = img[r, min(c + 1, w - 1)]
            left = img[r, max(c - 1, 0)]
            down = img[min(r + 1, h - 1), c]
            up = img[max(r - 1, 0), c]
            gx = (right - left) / 2.0
            gy = (down - up) / 2.0
            out[r, c] = np.sqrt(gx * gx + gy * gy)
    peak = out.max()
    return out / peak if peak > 0 else out


class TestGradientProxy:
    def test_constant_image_zero(self):
        assert candidates.gradient_proxy(np.full((5, 7), 0.3)).max() == 0.0

    def test_vertical_step_edge(self):
        img = np.zeros((6, 10))
        img[:, 5:] = 1.0
        mag = candidates.gradient_proxy(img)
        assert np.all(mag[:, 4] == 1.0)
        assert np.all(mag[:, 5] == 1.0)
        assert np.all(mag[:, :3] == 0.0)
        assert np.all(mag[:, 7:] == 0.0)

    def test_matches_stencil_oracle(self):
        rng = np.random.default_rng(11)
        img = rng.random((16, 16))
        mine = candidates.gradient_proxy(img)
        assert np.allclose(mine, stencil_oracle(img), atol=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        img = rng.random((9, 9)) * 0.5
        a = candidates.gradient_proxy(img)
        b = candidates.gradient_proxy(img + 0.25)
        assert np.allclose(a, b, atol=1e-7)

    def test_degenerate_dims_rejected(self):
        with pytest.raises(ValueError):
            candidates.gradient_proxy(np.zeros((2, 5)))
        with pytest.raises(ValueError):
            candidates.gradient_proxy(np.zeros((5, 2)))


def components8(mask):
    _, count = ndimage.label(mask, structure=np.ones((3, 3)))
    return count


class TestThinning:
    def test_diagonal_line_unchanged(self):
        m = np.zeros((8, 8), dtype=np.float32)
        for i in range(1, 7):
            m[i, i] = 0.5 + i / 20.0
        assert np.array_equal(candidates.nms_thin(m), m)

    def test_thick_bar_connectivity(self):
        m = np.zeros((9, 12), dtype=np.float32)
        m[3:6, 1:11] = 1.0
        thin = candidates.nms_thin(m)
        fg = thin > 0
        # connectivity identical to the input (one component, none lost)
        assert components8(fg) == 1
        assert components8(m > 0) == 1
        # 1-px wide: no 2x2 block fully set
        quad = fg[:-1, :-1] & fg[1:, :-1] & fg[:-1, 1:] & fg[1:, 1:]
        assert not quad.any()
        # survivors keep their values and span the bar (ends may erode 1px)
        assert set(np.unique(thin)) <= {0.0, 1.0}
        cols = np.nonzero(fg.any(axis=0))[0]
        assert cols.min() <= 2 and cols.max() >= 9

    def test_all_zeros(self):
        z = np.zeros((6, 6), dtype=np.float32)
        assert np.array_equal(candidates.nms_thin(z), z)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**9))
    def test_idempotent_and_component_preserving(self, seed):
        rng = np.random.default_rng(seed)
        m = (rng.random((10, 10)) * (rng.random((10, 10)) < 0.45)).astype(
            np.float32)
        once = candidates.nms_thin(m)
        twice = candidates.nms_thin(once)
        assert np.array_equal(once, twice)
        assert components8(once > 0) == components8(m > 0)
        # survivors is a subset keeping original values
        assert np.all((once == 0) | (once == m))


class TestSelect:
    def test_threshold_one_empty(self):
        m = np.ones((4, 4), dtype=np.float32)
        assert len(candidates.select_candidates(m, threshold=1.0)) == 0

    def test_three_pixels_descending(self):
        m = np.zeros((5, 5), dtype=np.float32)
        m[1, 2] = 0.5
        m[3, 1] = 0.9
        m[4, 4] = 0.2
        cs = candidates.select_candidates(m, threshold=0.0, max_count=10)
        assert len(cs) == 3
        assert list(cs.scores) == pytest.approx([0.9, 0.5, 0.2])
        assert (cs.ys[0], cs.xs[0]) == (3.0, 1.0)

    def test_matches_filter_sort_truncate_oracle(self):
        rng = np.random.default_rng(21)
        m = rng.random((20, 20)).astype(np.float32)
        cs = candidates.select_candidates(m, threshold=0.1, max_count=100)
        # brute force: filter, sort by (-value, row-major), truncate
        entries = [(-float(m[r, c]), r * 20 + c, r, c)
                   for r in range(20) for c in range(20)
                   if m[r, c] > 0.1]
        entries.sort()
        expected = entries[:100]
        assert len(cs) == len(expected)
        for i, (nv, _, r, c) in enumerate(expected):
            assert (cs.ys[i], cs.xs[i], cs.scores[i]) == (r, c, -nv)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**9), st.floats(0.0, 1.0), st.integers(1, 50))
    def test_bounds_property(self, seed, threshold, max_count):
        rng = np.random.default_rng(seed)
        m = rng.random((8, 8)).astype(np.float32)
        cs = candidates.select_candidates(m, threshold, max_count)
        assert len(cs) <= max_count
        assert np.all(cs.scores > threshold)
        # no duplicate integer pixels
        pix = {(int(y), int(x)) for y, x in zip(cs.ys, cs.xs)}
        assert len(pix) == len(cs)


class TestCsv:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        m = rng.random((10, 10)).astype(np.float32)
        cs = candidates.select_candidates(m, 0.3, 40)
        path = tmp_path / "cands.csv"
        candidates.save_candidates_csv(cs, path)
        back = candidates.load_candidates_csv(path, (10, 10))
        assert np.allclose(back.xs, cs.xs, atol=1e-6)
        assert np.allclose(back.ys, cs.ys, atol=1e-6)
        assert np.allclose(back.scores, cs.scores, atol=1e-6)
        header = path.read_text().splitlines()[0]
        assert header == "x,y,score"

import numpy as np
import pytest

from deepboundary import features, tensor_io
from deepboundary.candidates import CandidateSet


def bilinear_oracle(plane, row, col):
    """Scalar-at-a-time bilinear sample, written independently."""
    h, w = plane.shape
    row = min(max(row, 0.0), h - 1.0)
    col = min(max(col, 0.0), w - 1.0)
    r0, c0 = int(np.floor(row)), int(np.floor(col))
    r1, c1 = int(np.ceil(row)), int(np.ceil(col))
    fr, fc = row - r0, col - c0
    top = float(plane[r0, c0]) * (1 - fc) + float(plane[r0, c1]) * fc
    bot = float(plane[r1, c0]) * (1 - fc) + float(plane[r1, c1]) * fc
    return top * (1 - fr) + bot * fr


class TestMapPoint:
    def test_identity_at_equal_dims(self):
        assert features.map_point(3.2, 4.7, (8, 8), (8, 8)) == (3.2, 4.7)

    def test_center_maps_to_center(self):
        assert features.map_point(3.5, 3.5, (4, 4), (8, 8)) == (1.5, 1.5)

    def test_origin_clamped(self):
        # (0 + 0.5) * 4/8 - 0.5 = -0.25, clamped to 0
        r, c = features.map_point(0.0, 0.0, (4, 4), (8, 8))
        assert (r, c) == (0.0, 0.0)
        rows, cols = features.map_points([0.0], [0.0], (4, 4), (8, 8))
        assert rows[0] == 0.0 and cols[0] == 0.0

    def test_formula_before_clamp(self):
        rows, cols = features.map_points([4.0], [7.0], (4, 6), (8, 12))
        assert rows[0] == pytest.approx((4.5) * 0.5 - 0.5)
        assert cols[0] == pytest.approx((7.5) * 0.5 - 0.5)


def make_stack(rng, specs, input_dims):
    layers = [(name, rng.random((c, h, w), dtype=np.float32))
              for name, c, h, w in specs]
    return tensor_io.stack_from_arrays(input_dims, layers)


class TestInterpolate:
    def test_constant_channel(self):
        arr = np.full((1, 5, 5), 0.7, dtype=np.float32)
        stack = tensor_io.stack_from_arrays((10, 10), [("a", arr)])
        for mode in features.MODES:
            d = features.interpolate_descriptor(stack, 3.3, 6.1, mode)
            assert d[0] == pytest.approx(0.7, abs=1e-6)

    def test_ramp_cell_center(self):
        plane = np.tile(np.arange(7, dtype=np.float32), (7, 1))[None]
        stack = tensor_io.stack_from_arrays((7, 7), [("ramp", plane)])
        for mode in features.MODES:
            d = features.interpolate_descriptor(stack, 3.0, 2.5, mode)
            assert d[0] == pytest.approx(2.5, abs=1e-6)

    def test_matches_bilinear_oracle(self):
        rng = np.random.default_rng(17)
        plane = rng.random((1, 7, 7), dtype=np.float32)
        stack = tensor_io.stack_from_arrays((7, 7), [("x", plane)])
        for _ in range(50):
            y = rng.random() * 6
            x = rng.random() * 6
            mine = features.interpolate_descriptor(stack, y, x, "bilinear")[0]
            assert mine == pytest.approx(bilinear_oracle(plane[0], y, x),
                                         abs=1e-6)

    def test_modes_agree_at_integral_coords(self):
        rng = np.random.default_rng(3)
        stack = make_stack(rng, [("a", 2, 6, 6)], (6, 6))
        da = features.interpolate_descriptor(stack, 4.0, 2.0, "bilinear")
        db = features.interpolate_descriptor(stack, 4.0, 2.0, "uniform4")
        assert np.allclose(da, db, atol=1e-6)
        dc = features.interpolate_descriptor(stack, 3.5, 2.5, "bilinear")
        dd = features.interpolate_descriptor(stack, 3.5, 2.5, "uniform4")
        assert np.allclose(dc, dd, atol=1e-6)

    def test_affine_field_exact(self):
        # bilinear interpolation reproduces a*row + b*col + c exactly
        h, w = 9, 11
        rows_g, cols_g = np.mgrid[0:h, 0:w].astype(np.float64)
        plane = (0.3 * rows_g - 0.7 * cols_g + 2.0).astype(np.float32)[None]
        stack = tensor_io.stack_from_arrays((18, 22), [("aff", plane)])
        rng = np.random.default_rng(8)
        for _ in range(40):
            y = rng.random() * 17
            x = rng.random() * 21
            r, c = features.map_point(y, x, (h, w), (18, 22))
            mine = features.interpolate_descriptor(stack, y, x, "bilinear")[0]
            assert mine == pytest.approx(0.3 * r - 0.7 * c + 2.0, abs=1e-5)


class TestBatch:
    def _stack_and_cands(self, seed=0, n=60):
        rng = np.random.default_rng(seed)
        stack = make_stack(
            rng, [("s1", 3, 16, 16), ("s2", 4, 8, 8), ("s3", 2, 4, 4)],
            (16, 16))
        ys = rng.random(n) * 15
        xs = rng.random(n) * 15
        cands = CandidateSet(ys, xs, np.ones(n), (16, 16))
        return stack, cands

    def test_single_candidate_matches(self):
        stack, cands = self._stack_and_cands(n=1)
        mat = features.batch_descriptors(stack, cands)
        single = features.interpolate_descriptor(stack, cands.ys[0],
                                                 cands.xs[0])
        assert np.array_equal(mat.values[0], single)

    def test_rowwise_equals_per_point(self):
        stack, cands = self._stack_and_cands()
        for mode in features.MODES:
            mat = features.batch_descriptors(stack, cands, mode)
            for i in range(0, len(cands), 7):
                single = features.interpolate_descriptor(
                    stack, cands.ys[i], cands.xs[i], mode)
                assert np.allclose(mat.values[i], single, atol=1e-6)

    def test_permutation_equivariance(self):
        stack, cands = self._stack_and_cands(seed=5)
        mat = features.batch_descriptors(stack, cands)
        perm = np.random.default_rng(1).permutation(len(cands))
        shuffled = CandidateSet(cands.ys[perm], cands.xs[perm],
                                cands.scores[perm], cands.image_dims)
        mat2 = features.batch_descriptors(stack, shuffled)
        assert np.array_equal(mat2.values, mat.values[perm])

    def test_jobs_do_not_change_result(self):
        stack, cands = self._stack_and_cands(seed=9, n=97)
        a = features.batch_descriptors(stack, cands, jobs=1)
        b = features.batch_descriptors(stack, cands, jobs=3)
        assert np.array_equal(a.values, b.values)

    def test_layer_slices(self):
        stack, cands = self._stack_and_cands()
        mat = features.batch_descriptors(stack, cands)
        assert mat.layer_slices() == [("s1", 0, 3), ("s2", 3, 7), ("s3", 7, 9)]
        assert mat.values.shape == (len(cands), 9)

    def test_disk_stack_streams(self, tmp_path):
        stack, cands = self._stack_and_cands(seed=2)
        manifest = tensor_io.write_stack(stack, tmp_path / "st")
        lazy = tensor_io.read_stack_manifest(manifest)
        a = features.batch_descriptors(stack, cands)
        b = features.batch_descriptors(lazy, cands)
        assert np.array_equal(a.values, b.values)

    def test_bad_mode_rejected(self):
        stack, cands = self._stack_and_cands(n=2)
        with pytest.raises(ValueError):
            features.batch_descriptors(stack, cands, mode="nearest")

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepboundary import regressor
from deepboundary.regressor import RegressorHead, TrainConfig


def tiny_head(seed=0, hidden=8, dim=4, dropout=0.5):
    return regressor.init_head(dim, hidden, dropout, seed)


class TestForward:
    def test_all_zero_parameters(self):
        head = RegressorHead(np.zeros((3, 2)), np.zeros(3), np.zeros(3), 0.0)
        x = np.random.default_rng(0).random((5, 2))
        assert np.all(regressor.forward(head, x) == 0.0)

    def test_identity_composition(self):
        head = RegressorHead(np.eye(1), np.zeros(1), np.ones(1), 0.0)
        assert regressor.forward(head, [[0.3]])[0] == pytest.approx(0.3)

    def test_dropout_expectation_unbiased(self):
        # Monte-Carlo check that inverted dropout keeps the pre-clamp mean;
        # use a positive-output head so the clamp does not bias the average.
        rng = np.random.default_rng(0)
        head = tiny_head(seed=3, hidden=16, dim=6)
        head.w2 = np.abs(head.w2) * 0.2
        head.b2 = 0.3
        x = rng.random((1, 6))
        reference = regressor.forward(head, x)[0]
        draws = np.empty(10000)
        droprng = np.random.default_rng(1234)
        for i in range(draws.shape[0]):
            draws[i] = regressor.forward(head, x, train_mode=True,
                                         rng=droprng)[0]
        assert abs(draws.mean() - reference) < 0.02

    def test_output_always_clamped(self):
        rng = np.random.default_rng(2)
        head = tiny_head(seed=9)
        head.w2 *= 50  # force saturation both ways
        y = regressor.forward(head, rng.random((200, 4)))
        assert y.min() >= 0.0 and y.max() <= 1.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            regressor.forward(tiny_head(), np.zeros((2, 7)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**9))
    def test_clamp_property(self, seed):
        rng = np.random.default_rng(seed)
        head = tiny_head(seed=seed % 100)
        head.w2 = head.w2 * rng.uniform(0, 30)
        out = regressor.forward(head, rng.standard_normal((16, 4)) * 3)
        assert np.all(out >= 0.0) and np.all(out <= 1.0)


class TestTrain:
    def test_single_sample_memorized(self):
        cfg = TrainConfig(learning_rate=0.05, momentum=0.0, batch_size=1,
                          dropout_rate=0.0, hidden=8, seed=0)
        head = regressor.init_head(3, cfg.hidden, cfg.dropout_rate, cfg.seed)
        x = np.array([[0.2, -0.4, 0.9]])
        y = np.array([0.8])
        trace = regressor.sgd_train(
            head, x, y, cfg, epochs=200,
            shuffle_rng=np.random.default_rng(0),
            dropout_rng=np.random.default_rng(1))
        assert trace[-1] < 1e-4
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))

    def test_linear_target_fit(self):
        rng = np.random.default_rng(6)
        w_star = rng.standard_normal(5) * 0.4
        x = rng.random((400, 5))
        y = np.clip(x @ w_star + 0.3, 0.0, 1.0)
        cfg = TrainConfig(learning_rate=0.02, momentum=0.9, batch_size=64,
                          dropout_rate=0.0, hidden=32, seed=1)
        head = regressor.init_head(5, cfg.hidden, cfg.dropout_rate, cfg.seed)
        regressor.sgd_train(head, x, y, cfg, epochs=300,
                            shuffle_rng=np.random.default_rng(2),
                            dropout_rng=np.random.default_rng(3))
        mse = float(np.mean((regressor.forward(head, x) - y) ** 2))
        assert mse < 1e-3

    def test_identical_seeds_bit_identical(self):
        rng = np.random.default_rng(0)
        x = rng.random((128, 6))
        y = rng.random(128)
        cfg = TrainConfig(epochs_phase1=3, epochs_phase2=2, hidden=16,
                          batch_size=32, seed=7)
        rep1 = regressor.train_protocol(x, y, x[:40], y[:40], cfg)
        rep2 = regressor.train_protocol(x, y, x[:40], y[:40], cfg)
        assert np.array_equal(rep1.head.w1, rep2.head.w1)
        assert np.array_equal(rep1.head.b1, rep2.head.b1)
        assert np.array_equal(rep1.head.w2, rep2.head.w2)
        assert rep1.head.b2 == rep2.head.b2
        assert rep1.trace_phase1 == rep2.trace_phase1

    def test_divergence_detected(self):
        cfg = TrainConfig(learning_rate=1e300, momentum=0.9, batch_size=16,
                          dropout_rate=0.0, hidden=8, seed=0)
        head = regressor.init_head(3, cfg.hidden, 0.0, 0)
        rng = np.random.default_rng(1)
        with np.errstate(all="ignore"), pytest.raises(
                regressor.TrainingDivergedError):
            regressor.sgd_train(head, rng.random((16, 3)), rng.random(16),
                                cfg, epochs=5,
                                shuffle_rng=np.random.default_rng(0),
                                dropout_rng=np.random.default_rng(1))


class TestBalance:
    def test_forced_min_rule(self):
        labels = np.array([0.1] * 10 + [0.3] * 5 + [0.6] * 8 + [0.9] * 2)
        idx = regressor.balance_quartiles(labels, seed=0)
        assert len(idx) == 8
        bins = regressor.quartile_bins(labels[idx])
        assert [int((bins == b).sum()) for b in range(4)] == [2, 2, 2, 2]

    def test_single_bin_returns_whole_bin(self):
        labels = np.full(7, 0.4)
        idx = regressor.balance_quartiles(labels, seed=1)
        assert sorted(idx) == list(range(7))

    def test_matches_binning_oracle(self):
        rng = np.random.default_rng(44)
        labels = rng.random(500)
        idx = regressor.balance_quartiles(labels, seed=3)
        # oracle: per-bin membership by direct comparison
        oracle_bins = [np.nonzero((labels >= lo) & (labels < hi))[0]
                       for lo, hi in ((0, .25), (.25, .5), (.5, .75))]
        oracle_bins.append(np.nonzero(labels >= 0.75)[0])
        m = min(len(b) for b in oracle_bins if len(b))
        picked_bins = regressor.quartile_bins(labels[idx])
        for b in range(4):
            members = set(oracle_bins[b])
            chosen = set(idx[picked_bins == b])
            assert len(chosen) == m
            assert chosen <= members
        assert len(set(idx)) == len(idx)  # without replacement

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            regressor.balance_quartiles(np.array([]), seed=0)


class TestMining:
    def test_perfect_head_no_mining(self):
        # head predicting exactly the labels: no false negatives
        x = np.linspace(0, 1, 11)[:, None]
        head = RegressorHead(np.array([[1.0]]), np.zeros(1), np.ones(1), 0.0,
                             dropout_rate=0.0)
        fn, tn = regressor.mine_hard_positives(head, x, x[:, 0],
                                               TrainConfig(seed=0))
        assert len(fn) == 0 and len(tn) == 0

    def test_zero_head_all_positives_missed(self):
        rng = np.random.default_rng(5)
        y = rng.random(40)
        x = rng.random((40, 3))
        head = RegressorHead(np.zeros((2, 3)), np.zeros(2), np.zeros(2), 0.0,
                             dropout_rate=0.0)
        fn, tn = regressor.mine_hard_positives(head, x, y, TrainConfig(seed=0))
        k = int((y >= 0.5).sum())
        assert len(fn) == k
        assert len(tn) == min(k, int((y < 0.5).sum()))

    def test_matches_filter_oracle(self):
        rng = np.random.default_rng(9)
        x = rng.random((100, 4))
        y = rng.random(100)
        head = tiny_head(seed=2, dim=4)
        cfg = TrainConfig(seed=11, fn_threshold=0.5)
        fn, tn = regressor.mine_hard_positives(head, x, y, cfg)
        preds = regressor.forward(head, x)
        fn_oracle = {i for i in range(100) if y[i] >= 0.5 and preds[i] < 0.5}
        tn_pool = {i for i in range(100) if y[i] < 0.5 and preds[i] < 0.5}
        assert set(fn) == fn_oracle
        assert set(tn) <= tn_pool
        assert len(tn) == min(len(fn_oracle), len(tn_pool))
        assert len(set(tn)) == len(tn)


class TestProbe:
    def test_zero_labels(self):
        rng = np.random.default_rng(0)
        mags, _ = regressor.linear_probe(rng.random((30, 6)), np.zeros(30),
                                         lam=1e-3)
        assert np.allclose(mags, 0.0, atol=1e-9)

    def test_single_channel_target(self):
        rng = np.random.default_rng(1)
        x = rng.random((80, 10))
        y = x[:, 4]
        mags, _ = regressor.linear_probe(x, y, lam=1e-8)
        assert np.argmax(mags) == 4

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(33)
        x = rng.random((50, 20))
        y = rng.random(50)
        lam = 0.37
        mags, _ = regressor.linear_probe(x, y, lam)
        w_oracle = np.linalg.solve(x.T @ x + lam * np.eye(20), x.T @ y)
        assert np.allclose(mags, np.abs(w_oracle), atol=1e-6)

    def test_layer_profile(self):
        rng = np.random.default_rng(2)
        x = rng.random((40, 6))
        y = rng.random(40)
        mags, profile = regressor.linear_probe(
            x, y, 0.1, layer_slices=[("lo", 0, 2), ("hi", 2, 6)])
        assert profile[0][0] == "lo"
        assert profile[0][1] == pytest.approx(np.abs(mags[:2]).mean())
        assert profile[1][1] == pytest.approx(np.abs(mags[2:]).mean())

    def test_bad_lambda(self):
        with pytest.raises(ValueError):
            regressor.linear_probe(np.ones((3, 2)), np.ones(3), 0.0)


class TestSerialization:
    def test_save_load_cycle(self, tmp_path):
        head = tiny_head(seed=21, hidden=6, dim=5)
        head.b2 = 0.25
        regressor.save_head(head, tmp_path / "head")
        back = regressor.load_head(tmp_path / "head")
        assert back.hidden == 6 and back.input_dim == 5
        assert back.dropout_rate == head.dropout_rate
        assert back.seed == head.seed
        assert np.allclose(back.w1, head.w1, atol=1e-6)
        assert back.b2 == pytest.approx(head.b2, abs=1e-7)

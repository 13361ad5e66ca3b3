"""The agreement-regression head and its training protocol.

A two-layer perceptron (ReLU hidden layer, linear output clamped to [0, 1])
maps each descriptor to the fraction of human annotators marking a boundary
there. Training is plain minibatch SGD with momentum on mean squared error:
quartile-balanced samples, a first phase, hard-positive mining against a
held-out pool, then a second phase on the augmented set. Every random draw
is a pure function of the config seed, so runs repeat bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor_io

# Stream tags for per-purpose RNGs derived from the config seed.
_SEED_INIT = 0
_SEED_BALANCE = 1
_SEED_SHUFFLE = 2
_SEED_DROPOUT = 3
_SEED_MINE = 4


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; the learning rate is too aggressive."""


@dataclass
class RegressorHead:
    w1: np.ndarray  # [hidden, input_dim]
    b1: np.ndarray  # [hidden]
    w2: np.ndarray  # [hidden]
    b2: float
    dropout_rate: float = 0.5
    seed: int = 0

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "RegressorHead":
        return RegressorHead(self.w1.copy(), self.b1.copy(), self.w2.copy(),
                             float(self.b2), self.dropout_rate, self.seed)


@dataclass
class TrainConfig:
    epochs_phase1: int = 25
    epochs_phase2: int = 25
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 256
    fn_threshold: float = 0.5
    dropout_rate: float = 0.5
    hidden: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.epochs_phase1 < 0 or self.epochs_phase2 < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")
        if not 0 < self.fn_threshold < 1:
            raise ValueError("fn threshold must lie in (0, 1)")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        if self.hidden < 1:
            raise ValueError("hidden width must be positive")


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag])


def init_head(input_dim: int, hidden: int = 1024, dropout_rate: float = 0.5,
              seed: int = 0) -> RegressorHead:
    rng = _rng(seed, _SEED_INIT)
    w1 = rng.standard_normal((hidden, input_dim)) / np.sqrt(input_dim)
    b1 = np.zeros(hidden)
    w2 = rng.standard_normal(hidden) / np.sqrt(hidden)
    return RegressorHead(w1, b1, w2, 0.0, dropout_rate, seed)


def forward(head: RegressorHead, descriptors, train_mode: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Predictions in [0, 1] for a batch of descriptors [n, input_dim].

    Training mode applies inverted dropout to the hidden layer: units are
    zeroed with probability dropout_rate and survivors scaled by
    1 / (1 - dropout_rate), so the inference pass needs no rescaling.
    """
    x = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    if x.shape[1] != head.input_dim:
        raise ValueError(
            f"descriptor dim {x.shape[1]} does not match head input "
            f"{head.input_dim}")
    hidden = np.maximum(x @ head.w1.T + head.b1, 0.0)
    if train_mode and head.dropout_rate > 0:
        if rng is None:
            rng = _rng(head.seed, _SEED_DROPOUT)
        keep = rng.random(hidden.shape) >= head.dropout_rate
        hidden = hidden * keep / (1.0 - head.dropout_rate)
    return np.clip(hidden @ head.w2 + head.b2, 0.0, 1.0)


def _forward_train(head, x, rng):
    """Forward pass that keeps the intermediates needed for the backward."""
    pre = x @ head.w1.T + head.b1
    act = np.maximum(pre, 0.0)
    if head.dropout_rate > 0:
        keep = rng.random(act.shape) >= head.dropout_rate
        mask = keep / (1.0 - head.dropout_rate)
    else:
        mask = np.ones_like(act)
    dropped = act * mask
    z = dropped @ head.w2 + head.b2
    y = np.clip(z, 0.0, 1.0)
    return pre, mask, dropped, z, y


def sgd_train(head: RegressorHead, descriptors, labels, cfg: TrainConfig,
              epochs: int, shuffle_rng: np.random.Generator,
              dropout_rng: np.random.Generator) -> list[float]:
    """Minibatch SGD with momentum on MSE, in place. Returns the loss trace
    (one mean-MSE entry per epoch, accumulated batch by batch)."""
    x = np.asarray(descriptors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape[0] < 1:
        raise ValueError("training needs at least one sample")
    if y.min() < 0 or y.max() > 1:
        raise ValueError("labels must lie in [0, 1]")
    # Overflow surfaces through the per-epoch finiteness check below, not
    # as warnings mid-batch.
    with np.errstate(over="ignore", invalid="ignore"):
        return _sgd_epochs(head, x, y, cfg, epochs, shuffle_rng, dropout_rng)


def _sgd_epochs(head, x, y, cfg, epochs, shuffle_rng, dropout_rng):
    n = x.shape[0]
    vel_w1 = np.zeros_like(head.w1)
    vel_b1 = np.zeros_like(head.b1)
    vel_w2 = np.zeros_like(head.w2)
    vel_b2 = 0.0
    trace = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            pre, mask, dropped, _, pred = _forward_train(head, xb, dropout_rng)
            err = pred - yb
            sq_sum += float(err @ err)
            # Straight-through clamp gradient: saturated predictions keep a
            # restoring force instead of going permanently dead.
            dz = 2.0 * err / len(idx)
            g_w2 = dz @ dropped
            g_b2 = float(dz.sum())
            dh = np.outer(dz, head.w2) * mask * (pre > 0)
            g_w1 = dh.T @ xb
            g_b1 = dh.sum(axis=0)
            vel_w1 = cfg.momentum * vel_w1 - cfg.learning_rate * g_w1
            vel_b1 = cfg.momentum * vel_b1 - cfg.learning_rate * g_b1
            vel_w2 = cfg.momentum * vel_w2 - cfg.learning_rate * g_w2
            vel_b2 = cfg.momentum * vel_b2 - cfg.learning_rate * g_b2
            head.w1 += vel_w1
            head.b1 += vel_b1
            head.w2 += vel_w2
            head.b2 = float(head.b2 + vel_b2)
        loss = sq_sum / n
        if not np.isfinite(loss) or not (
                np.all(np.isfinite(head.w1)) and np.all(np.isfinite(head.w2))
                and np.all(np.isfinite(head.b1)) and np.isfinite(head.b2)):
            raise TrainingDivergedError(
                f"diverged at epoch {epoch} (non-finite loss or parameters): "
                f"lower the learning rate (currently {cfg.learning_rate})")
        trace.append(loss)
    return trace


_QUARTILE_EDGES = (0.25, 0.5, 0.75)


def quartile_bins(labels) -> np.ndarray:
    """Bin index per label: [0,.25), [.25,.5), [.5,.75), [.75,1]."""
    y = np.asarray(labels, dtype=np.float64)
    return np.digitize(y, _QUARTILE_EDGES)


def balance_quartiles(labels, seed: int = 0) -> np.ndarray:
    """Indices of a label-balanced subset: m per nonempty quartile bin,
    where m is the smallest nonempty-bin count, drawn without replacement."""
    y = np.asarray(labels, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot balance an empty sample set")
    bins = quartile_bins(y)
    rng = _rng(seed, _SEED_BALANCE)
    members = [np.nonzero(bins == b)[0] for b in range(4)]
    counts = [len(m) for m in members if len(m)]
    m = min(counts)
    picked = []
    for mem in members:
        if not len(mem):
            continue
        choice = rng.choice(mem, size=m, replace=False)
        picked.append(np.sort(choice))
    return np.concatenate(picked)


def mine_hard_positives(head: RegressorHead, holdout_x, holdout_y,
                        cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """False negatives on the holdout plus an equal-count random draw of
    true negatives. Returns (fn_indices, tn_indices) into the holdout."""
    y = np.asarray(holdout_y, dtype=np.float64)
    preds = forward(head, holdout_x)
    t = cfg.fn_threshold
    fn = np.nonzero((y >= t) & (preds < t))[0]
    tn_pool = np.nonzero((y < t) & (preds < t))[0]
    rng = _rng(cfg.seed, _SEED_MINE)
    take = min(len(fn), len(tn_pool))
    tn = (np.sort(rng.choice(tn_pool, size=take, replace=False))
          if take else np.empty(0, dtype=np.int64))
    return fn, tn


@dataclass
class TrainReport:
    head: RegressorHead
    trace_phase1: list[float]
    trace_phase2: list[float]
    balanced_count: int
    fn_count_phase1: int
    fn_count_phase2: int
    mined_fn: int
    mined_tn: int
    counts: dict = field(default_factory=dict)


def train_protocol(descriptors, labels, holdout_x, holdout_y,
                   cfg: TrainConfig) -> TrainReport:
    """Balance -> phase 1 -> mine hard positives -> phase 2."""
    x = np.asarray(descriptors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    balanced = balance_quartiles(y, cfg.seed)
    xb, yb = x[balanced], y[balanced]
    head = init_head(x.shape[1], cfg.hidden, cfg.dropout_rate, cfg.seed)
    shuffle_rng = _rng(cfg.seed, _SEED_SHUFFLE)
    dropout_rng = _rng(cfg.seed, _SEED_DROPOUT)
    trace1 = sgd_train(head, xb, yb, cfg, cfg.epochs_phase1,
                       shuffle_rng, dropout_rng)
    fn, tn = mine_hard_positives(head, holdout_x, holdout_y, cfg)
    fn_count_phase1 = len(fn)
    hx = np.asarray(holdout_x, dtype=np.float64)
    hy = np.asarray(holdout_y, dtype=np.float64)
    aug_x = np.concatenate([xb, hx[fn], hx[tn]], axis=0)
    aug_y = np.concatenate([yb, hy[fn], hy[tn]])
    trace2 = sgd_train(head, aug_x, aug_y, cfg, cfg.epochs_phase2,
                       shuffle_rng, dropout_rng)
    preds = forward(head, hx)
    t = cfg.fn_threshold
    fn_count_phase2 = int(np.count_nonzero((hy >= t) & (preds < t)))
    return TrainReport(
        head=head, trace_phase1=trace1, trace_phase2=trace2,
        balanced_count=len(balanced), fn_count_phase1=fn_count_phase1,
        fn_count_phase2=fn_count_phase2, mined_fn=len(fn), mined_tn=len(tn),
        counts={"train": len(y), "holdout": len(hy),
                "augmented": len(aug_y)})


def linear_probe(descriptors, labels, lam: float, layer_slices=None):
    """Ridge regression weight magnitudes, per channel and per layer.

    Solved as least squares on the augmented system [X; sqrt(lam) I] so no
    normal equations are formed. layer_slices is an optional list of
    (name, start, stop) column ranges for the per-layer profile.
    """
    if lam <= 0:
        raise ValueError("ridge penalty must be positive")
    x = np.asarray(descriptors, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n, d = x.shape
    aug = np.vstack([x, np.sqrt(lam) * np.eye(d)])
    rhs = np.concatenate([y, np.zeros(d)])
    w, *_ = np.linalg.lstsq(aug, rhs, rcond=None)
    mags = np.abs(w)
    profile = None
    if layer_slices is not None:
        profile = [(name, float(mags[a:b].mean()))
                   for name, a, b in layer_slices]
    return mags, profile


_META_KEYS = ("hidden", "input_dim", "dropout_rate", "seed")


def save_head(head: RegressorHead, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensor_io.save_tensor(head.w1, directory / "w1.hflt")
    tensor_io.save_tensor(head.b1, directory / "b1.hflt")
    tensor_io.save_tensor(head.w2, directory / "w2.hflt")
    tensor_io.save_tensor(np.asarray([head.b2]), directory / "b2.hflt")
    meta = (f"hidden={head.hidden}\n"
            f"input_dim={head.input_dim}\n"
            f"dropout_rate={head.dropout_rate}\n"
            f"seed={head.seed}\n")
    (directory / "head.txt").write_text(meta, encoding="utf-8")


def load_head(directory) -> RegressorHead:
    directory = Path(directory)
    meta = {}
    for line in (directory / "head.txt").read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            meta[key.strip()] = val.strip()
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise ValueError(f"head metadata is missing keys: {missing}")
    w1 = tensor_io.load_tensor(directory / "w1.hflt").astype(np.float64)
    b1 = tensor_io.load_tensor(directory / "b1.hflt").astype(np.float64)
    w2 = tensor_io.load_tensor(directory / "w2.hflt").astype(np.float64)
    b2 = float(tensor_io.load_tensor(directory / "b2.hflt")[0])
    head = RegressorHead(w1, b1, w2, b2,
                         dropout_rate=float(meta["dropout_rate"]),
                         seed=int(meta["seed"]))
    if head.hidden != int(meta["hidden"]) or head.input_dim != int(meta["input_dim"]):
        raise ValueError("head tensors do not match the metadata dims")
    return head

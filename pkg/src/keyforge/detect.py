"""Detectors and their evaluation: delta-threshold with EER calibration,
logistic regression and a small MLP trained by gradient descent, stratified
cross-validation, ROC/AUC, and the operating-point sweep.

Both trained models standardize features internally with constants computed
from their own training data, so cross-validation never leaks fold-test
statistics. Gradients are analytic and are verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import EmptySample, NonFiniteLoss, SingleClass
from .features import feature_matrix
from .trace import Trace

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ThresholdDetector:
    """Predict HUMAN iff a session's delta exceeds the threshold."""

    threshold: float

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")

    def is_human(self, delta_value: float) -> bool:
        return delta_value > self.threshold


def fit_eer_threshold(human_deltas, automated_deltas) -> tuple[float, float, float]:
    """Equal-error-rate threshold on the human-vs-automated task.

    Candidates are the midpoints of consecutive pooled sorted delta values;
    the winner minimizes |FAR - FRR|, ties broken by smaller FAR + FRR, then
    by smaller threshold. Returns (threshold, far, frr) actually achieved.
    """
    human = np.sort(np.asarray(human_deltas, dtype=np.float64))
    auto = np.sort(np.asarray(automated_deltas, dtype=np.float64))
    if len(human) == 0 or len(auto) == 0:
        raise EmptySample("fit_eer_threshold needs non-empty samples")
    pooled = np.sort(np.concatenate([human, auto]))
    candidates = (pooled[:-1] + pooled[1:]) / 2.0
    if len(candidates) == 0:
        candidates = pooled  # single pooled value

    far = 1.0 - np.searchsorted(auto, candidates, side="right") / len(auto)
    frr = np.searchsorted(human, candidates, side="right") / len(human)
    diff = np.abs(far - frr)
    order = np.lexsort((candidates, far + frr, diff))
    best = order[0]
    return float(candidates[best]), float(far[best]), float(frr[best])


@dataclass(frozen=True)
class RocCurve:
    """(FPR, TPR, threshold) triples sorted by descending threshold, plus AUC
    computed by rank comparison with half-credit for ties."""

    points: tuple[tuple[float, float, float], ...]
    auc: float


def roc_auc(scores_pos, scores_neg) -> RocCurve:
    pos = np.asarray(scores_pos, dtype=np.float64)
    neg = np.asarray(scores_neg, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise EmptySample("roc_auc needs non-empty samples")

    # Pair counting in integer space (2*wins + ties) so the result matches a
    # brute-force enumeration bit for bit.
    sorted_neg = np.sort(neg)
    below = np.searchsorted(sorted_neg, pos, side="left")
    upto = np.searchsorted(sorted_neg, pos, side="right")
    twice_wins = int((2 * below + (upto - below)).sum())
    auc = twice_wins / (2 * len(pos) * len(neg))

    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    points = [(0.0, 0.0, float("inf"))]
    sorted_pos = np.sort(pos)
    for t in thresholds:
        tpr = 1.0 - np.searchsorted(sorted_pos, t, side="left") / len(pos)
        fpr = 1.0 - np.searchsorted(sorted_neg, t, side="left") / len(neg)
        points.append((float(fpr), float(tpr), float(t)))
    return RocCurve(points=tuple(points), auc=float(auc))


# ---------------------------------------------------------------------------
# Feature standardization shared by the trained models.


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring with zero-variance columns dropped (recorded)."""

    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray
    dropped: tuple[int, ...]

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        kept = np.flatnonzero(std > 0)
        dropped = tuple(int(i) for i in np.flatnonzero(std == 0))
        return cls(mean=mean[kept], std=std[kept], kept=kept, dropped=dropped)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x[:, self.kept] - self.mean) / self.std


def _check_classes(y: np.ndarray) -> None:
    if len(np.unique(y)) < 2:
        raise SingleClass("training labels contain a single class")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss_and_grad(w, b, x, y) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy and its analytic gradient."""
    z = x @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    resid = _sigmoid(z) - y
    grad_w = x.T @ resid / len(y)
    grad_b = float(resid.mean())
    return loss, grad_w, grad_b


@dataclass(frozen=True)
class LogisticConfig:
    lr: float = 0.5
    max_iter: int = 10_000
    tol: float = 1e-6


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    standardizer: Standardizer
    iterations: int

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.standardizer.apply(np.asarray(x)) @ self.weights + self.bias)


def train_logistic(features, labels, config: LogisticConfig | None = None) -> LogisticModel:
    """Full-batch gradient descent to gradient norm < tol or max_iter."""
    cfg = config or LogisticConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    _check_classes(y)
    std = Standardizer.fit(x)
    xs = std.apply(x)

    w = np.zeros(xs.shape[1])
    b = 0.0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        loss, gw, gb = logistic_loss_and_grad(w, b, xs, y)
        if not np.isfinite(loss):
            raise NonFiniteLoss(epoch=it, step=0, value=loss)
        if np.sqrt((gw * gw).sum() + gb * gb) < cfg.tol:
            break
        w -= cfg.lr * gw
        b -= cfg.lr * gb
    return LogisticModel(weights=w, bias=float(b), standardizer=std, iterations=it)


# ---------------------------------------------------------------------------
# MLP


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, int] = (64, 32)
    lr: float = 0.05
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0


def _init_mlp_params(n_in: int, hidden: tuple[int, int], rng: np.random.Generator) -> list[np.ndarray]:
    sizes = [n_in, *hidden, 1]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def mlp_loss_and_grad(params: Sequence[np.ndarray], x, y) -> tuple[float, list[np.ndarray]]:
    """Mean BCE and analytic gradients for the tanh MLP.

    params = [W1, b1, W2, b2, W3, b3]; output layer is a single logit.
    """
    w1, b1, w2, b2, w3, b3 = params
    h1 = np.tanh(x @ w1 + b1)
    h2 = np.tanh(h1 @ w2 + b2)
    z = (h2 @ w3 + b3).ravel()
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))

    dz = ((_sigmoid(z) - y) / len(y))[:, None]
    gw3 = h2.T @ dz
    gb3 = dz.sum(axis=0)
    dh2 = (dz @ w3.T) * (1.0 - h2 * h2)
    gw2 = h1.T @ dh2
    gb2 = dh2.sum(axis=0)
    dh1 = (dh2 @ w2.T) * (1.0 - h1 * h1)
    gw1 = x.T @ dh1
    gb1 = dh1.sum(axis=0)
    return loss, [gw1, gb1, gw2, gb2, gw3, gb3]


@dataclass(frozen=True)
class MlpModel:
    params: tuple[np.ndarray, ...]
    standardizer: Standardizer
    config: MlpConfig

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        xs = self.standardizer.apply(np.asarray(x))
        w1, b1, w2, b2, w3, b3 = self.params
        h1 = np.tanh(xs @ w1 + b1)
        h2 = np.tanh(h1 @ w2 + b2)
        return _sigmoid((h2 @ w3 + b3).ravel())


def train_mlp(features, labels, config: MlpConfig | None = None) -> MlpModel:
    """Seeded mini-batch gradient descent on cross-entropy."""
    cfg = config or MlpConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    _check_classes(y)
    std = Standardizer.fit(x)
    xs = std.apply(x)

    rng = np.random.default_rng(cfg.seed)
    params = _init_mlp_params(xs.shape[1], cfg.hidden, rng)
    n = len(y)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = mlp_loss_and_grad(params, xs[idx], y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch=epoch, step=start // cfg.batch_size, value=loss)
            for p, g in zip(params, grads):
                p -= cfg.lr * g
    return MlpModel(params=tuple(params), standardizer=std, config=cfg)


# ---------------------------------------------------------------------------
# Cross-validation


def stratified_kfold(labels, k: int = 5, seed: int = 42) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic stratified folds: per-class shuffled indices are split
    into k nearly equal chunks."""
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    test_chunks: list[list[np.ndarray]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for fold, chunk in enumerate(np.array_split(idx, k)):
            test_chunks[fold].append(chunk)
    folds = []
    all_idx = np.arange(len(y))
    for chunks in test_chunks:
        test_idx = np.sort(np.concatenate(chunks))
        train_idx = np.setdiff1d(all_idx, test_idx)
        folds.append((train_idx, test_idx))
    return folds


@dataclass(frozen=True)
class CvReport:
    fold_aucs: tuple[float, ...]
    fold_accuracies: tuple[float, ...]
    models: tuple
    folds: tuple

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.fold_aucs))

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))


def cross_validate(
    features,
    labels,
    trainer: Callable = train_logistic,
    k: int = 5,
    seed: int = 42,
) -> CvReport:
    """k-fold stratified CV; standardization happens inside the trainer so
    fold-test rows never touch the fold-train constants."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    folds = stratified_kfold(y, k=k, seed=seed)
    aucs, accs, models = [], [], []
    for train_idx, test_idx in folds:
        model = trainer(x[train_idx], y[train_idx])
        p = model.predict_proba(x[test_idx])
        y_test = y[test_idx]
        aucs.append(roc_auc(p[y_test == 1], p[y_test == 0]).auc)
        accs.append(float(((p > 0.5) == (y_test == 1)).mean()))
        models.append(model)
    return CvReport(
        fold_aucs=tuple(aucs),
        fold_accuracies=tuple(accs),
        models=tuple(models),
        folds=tuple(folds),
    )


# ---------------------------------------------------------------------------
# Attack evaluation and the operating sweep


class AttackEval(NamedTuple):
    apr: float
    mean_confidence: float
    n: int


def evaluate_attacks(detector, attack_corpora: dict[str, Sequence[Trace]]) -> dict[str, AttackEval]:
    """Attack pass rate and mean HUMAN confidence per attack corpus.

    `detector` is a ThresholdDetector (confidence is the 0/1 decision) or a
    trained model exposing predict_proba (confidence is the predicted HUMAN
    probability).
    """
    from .features import delta_values

    results = {}
    for name, traces in attack_corpora.items():
        traces = list(traces)
        if isinstance(detector, ThresholdDetector):
            deltas = delta_values(traces)
            decisions = deltas > detector.threshold
            conf = decisions.astype(np.float64)
        else:
            conf = detector.predict_proba(feature_matrix(traces))
            decisions = conf > 0.5
        results[name] = AttackEval(
            apr=float(decisions.mean()), mean_confidence=float(conf.mean()), n=len(traces)
        )
    return results


@dataclass(frozen=True)
class OperatingTable:
    """Rows of (threshold, human FRR, per-attack APR)."""

    thresholds: tuple[float, ...]
    frr: tuple[float, ...]
    apr: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "frr", *(f"apr_{name}" for name in self.apr)])
            for i, t in enumerate(self.thresholds):
                row = [repr(float(t)), repr(self.frr[i])]
                row += [repr(col[i]) for col in self.apr.values()]
                writer.writerow(row)


def operating_sweep(human_deltas, attack_deltas: dict[str, np.ndarray], thresholds) -> OperatingTable:
    """FRR and per-attack APR at each threshold (ascending)."""
    human = np.sort(np.asarray(human_deltas, dtype=np.float64))
    ts = [float(t) for t in thresholds]
    if len(human) == 0:
        raise EmptySample("operating_sweep needs human deltas")
    if ts != sorted(ts):
        raise ValueError("thresholds must be sorted ascending")
    frr = tuple(float(np.searchsorted(human, t, side="right") / len(human)) for t in ts)
    apr = {}
    for name, deltas in attack_deltas.items():
        d = np.sort(np.asarray(deltas, dtype=np.float64))
        if len(d) == 0:
            raise EmptySample(f"attack corpus {name!r} is empty")
        apr[name] = tuple(
            float(1.0 - np.searchsorted(d, t, side="right") / len(d)) for t in ts
        )
    return OperatingTable(thresholds=tuple(ts), frr=frr, apr=apr)


# ---------------------------------------------------------------------------
# Model serialization (versioned JSON, standardization constants embedded)


def save_model(model, path: str | Path) -> None:
    if isinstance(model, LogisticModel):
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "logistic",
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "iterations": model.iterations,
        }
    elif isinstance(model, MlpModel):
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "mlp",
            "params": [p.tolist() for p in model.params],
            "config": {
                "hidden": list(model.config.hidden),
                "lr": model.config.lr,
                "epochs": model.config.epochs,
                "batch_size": model.config.batch_size,
                "seed": model.config.seed,
            },
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    payload["standardizer"] = {
        "mean": model.standardizer.mean.tolist(),
        "std": model.standardizer.std.tolist(),
        "kept": model.standardizer.kept.tolist(),
        "dropped": list(model.standardizer.dropped),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {payload.get('format_version')!r}")
    std = Standardizer(
        mean=np.array(payload["standardizer"]["mean"]),
        std=np.array(payload["standardizer"]["std"]),
        kept=np.array(payload["standardizer"]["kept"], dtype=np.int64),
        dropped=tuple(payload["standardizer"]["dropped"]),
    )
    if payload["kind"] == "logistic":
        return LogisticModel(
            weights=np.array(payload["weights"]),
            bias=float(payload["bias"]),
            standardizer=std,
            iterations=int(payload["iterations"]),
        )
    if payload["kind"] == "mlp":
        cfg = MlpConfig(
            hidden=tuple(payload["config"]["hidden"]),
            lr=payload["config"]["lr"],
            epochs=payload["config"]["epochs"],
            batch_size=payload["config"]["batch_size"],
            seed=payload["config"]["seed"],
        )
        return MlpModel(
            params=tuple(np.array(p) for p in payload["params"]),
            standardizer=std,
            config=cfg,
        )
    raise ValueError(f"unknown model kind {payload['kind']!r}")

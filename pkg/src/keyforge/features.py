"""Detector features computed from an IKI sequence.

Seven primary features (delta through digraph_var) plus three temporal
diagnostics (autocorr1, skewness, kurtosis). All standard deviations and
variances use population (1/n) denominators so that two-element sequences
stay well-defined.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import TooShort, ZeroMean, ZeroVariance
from .trace import IkiSequence, Trace, extract_ikis

PAUSE_THRESHOLD_MS = 500.0
BURST_THRESHOLD_MS = 150.0
ENTROPY_BINS = 50
ENTROPY_RANGE_MS = 2000.0

# Column order of the feature CSV; the first seven features are the
# classifier input vector.
CORE_FEATURES = (
    "delta",
    "mean_iki",
    "var_iki",
    "pause_density",
    "burst_length",
    "entropy",
    "digraph_var",
)
DIAGNOSTIC_FEATURES = ("autocorr1", "skewness", "kurtosis")
ALL_FEATURES = CORE_FEATURES + DIAGNOSTIC_FEATURES


@dataclass(frozen=True)
class FeatureVector:
    """All ten per-session features. Degenerate (zero-variance) sequences get
    0.0 for the standardized moments rather than an error."""

    delta: float
    mean_iki: float
    var_iki: float
    pause_density: float
    burst_length: float
    entropy: float
    digraph_var: float
    autocorr1: float
    skewness: float
    kurtosis: float

    def core_array(self) -> np.ndarray:
        """The 7-feature classifier input, in CSV column order."""
        return np.array([getattr(self, name) for name in CORE_FEATURES])

    def full_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in ALL_FEATURES])


def _values(ikis: IkiSequence | np.ndarray) -> np.ndarray:
    if isinstance(ikis, IkiSequence):
        return ikis.values
    return np.asarray(ikis, dtype=np.float64)


def delta(ikis: IkiSequence | np.ndarray) -> float:
    """Coefficient of variation: population std over mean."""
    x = _values(ikis)
    if len(x) < 2:
        raise TooShort(f"delta needs >= 2 IKIs, got {len(x)}")
    m = x.mean()
    if m <= 0:
        raise ZeroMean("delta undefined for non-positive mean IKI")
    return float(x.std() / m)


def mean_iki(ikis: IkiSequence | np.ndarray) -> float:
    x = _values(ikis)
    if len(x) < 1:
        raise TooShort("mean_iki needs >= 1 IKI")
    return float(x.mean())


def var_iki(ikis: IkiSequence | np.ndarray) -> float:
    """Population variance in ms^2."""
    x = _values(ikis)
    if len(x) < 2:
        raise TooShort(f"var_iki needs >= 2 IKIs, got {len(x)}")
    return float(x.var())


def pause_density(ikis: IkiSequence | np.ndarray) -> float:
    """Fraction of IKIs strictly above 500 ms."""
    x = _values(ikis)
    if len(x) < 1:
        raise TooShort("pause_density needs >= 1 IKI")
    return float((x > PAUSE_THRESHOLD_MS).mean())


def burst_length(ikis: IkiSequence | np.ndarray) -> float:
    """Mean length (in IKIs) of maximal runs of IKIs strictly below 150 ms;
    0.0 when no such run exists. A single fast IKI counts as a run."""
    x = _values(ikis)
    fast = x < BURST_THRESHOLD_MS
    if not fast.any():
        return 0.0
    # Run lengths via boundaries of the fast mask.
    padded = np.concatenate(([False], fast, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, ends = edges[0::2], edges[1::2]
    return float(np.mean(ends - starts))


def iki_entropy(ikis: IkiSequence | np.ndarray) -> float:
    """Shannon entropy (bits) of the 50-bin histogram on [0, 2000) ms.

    Values at or above 2000 ms land in the top bin, so probabilities always
    sum to one.
    """
    x = _values(ikis)
    if len(x) < 1:
        raise TooShort("iki_entropy needs >= 1 IKI")
    width = ENTROPY_RANGE_MS / ENTROPY_BINS
    idx = np.minimum((x / width).astype(np.int64), ENTROPY_BINS - 1)
    counts = np.bincount(idx, minlength=ENTROPY_BINS)
    p = counts[counts > 0] / len(x)
    return float(-(p * np.log2(p)).sum())


def digraph_var(ikis: IkiSequence | np.ndarray) -> float:
    """Population std (ms) of consecutive IKI differences."""
    x = _values(ikis)
    if len(x) < 3:
        raise TooShort(f"digraph_var needs >= 3 IKIs, got {len(x)}")
    return float(np.diff(x).std())


def autocorr1(ikis: IkiSequence | np.ndarray) -> float:
    """Lag-1 sample autocorrelation, covariance form with 1/n denominators."""
    x = _values(ikis)
    if len(x) < 3:
        raise TooShort(f"autocorr1 needs >= 3 IKIs, got {len(x)}")
    c = x - x.mean()
    denom = (c * c).sum()
    if denom == 0:
        raise ZeroVariance("autocorr1 undefined for constant sequence")
    return float((c[:-1] * c[1:]).sum() / denom)


def skewness(ikis: IkiSequence | np.ndarray) -> float:
    """Standardized third moment (population)."""
    x = _values(ikis)
    if len(x) < 2:
        raise TooShort(f"skewness needs >= 2 IKIs, got {len(x)}")
    c = x - x.mean()
    m2 = (c * c).mean()
    if m2 == 0:
        raise ZeroVariance("skewness undefined for constant sequence")
    return float((c**3).mean() / m2**1.5)


def kurtosis(ikis: IkiSequence | np.ndarray) -> float:
    """Excess kurtosis: fourth standardized moment minus 3 (population)."""
    x = _values(ikis)
    if len(x) < 2:
        raise TooShort(f"kurtosis needs >= 2 IKIs, got {len(x)}")
    c = x - x.mean()
    m2 = (c * c).mean()
    if m2 == 0:
        raise ZeroVariance("kurtosis undefined for constant sequence")
    return float((c**4).mean() / m2**2 - 3.0)


def feature_vector(trace: Trace) -> FeatureVector:
    """All ten features from the trace's trimmed IKI sequence.

    Propagates TooShort/AllTrimmed from extraction. Zero-variance sequences
    (constant IKIs) yield 0.0 for autocorr1, skewness and kurtosis so that
    every field is always populated.
    """
    ikis = extract_ikis(trace)
    return features_from_ikis(ikis)


def features_from_ikis(ikis: IkiSequence | np.ndarray) -> FeatureVector:
    x = _values(ikis)

    def _or_zero(fn):
        try:
            return fn(x)
        except ZeroVariance:
            return 0.0

    return FeatureVector(
        delta=delta(x),
        mean_iki=mean_iki(x),
        var_iki=var_iki(x),
        pause_density=pause_density(x),
        burst_length=burst_length(x),
        entropy=iki_entropy(x),
        digraph_var=digraph_var(x),
        autocorr1=_or_zero(autocorr1),
        skewness=_or_zero(skewness),
        kurtosis=_or_zero(kurtosis),
    )


def write_feature_csv(traces: Iterable[Trace], path: str | Path) -> int:
    """Extract features for every trace and write the canonical feature CSV.

    Returns the number of rows written. Column order is fixed:
    session_id, label, then the ten feature columns.
    """
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "label", *ALL_FEATURES])
        for trace in traces:
            fv = feature_vector(trace)
            row = [trace.session_id, trace.label.value]
            row += [repr(float(getattr(fv, name))) for name in ALL_FEATURES]
            writer.writerow(row)
            n += 1
    return n


def feature_matrix(traces: Iterable[Trace]) -> np.ndarray:
    """(n_sessions, 7) matrix of core features, row order following traces."""
    return np.array([feature_vector(t).core_array() for t in traces])


def delta_values(traces: Iterable[Trace]) -> np.ndarray:
    """Per-session delta for a corpus."""
    return np.array([delta(extract_ikis(t)) for t in traces])

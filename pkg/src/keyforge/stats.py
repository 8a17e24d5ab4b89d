"""Effect sizes, hypothesis tests, exact binomial intervals, distribution
distances, and the two analytic non-identifiability bounds.

Conventions: Cohen's d uses the pooled SD with sample (n-1) variances and a
normal-approximation CI; p-values are floored at 1e-300; Jensen-Shannon
divergence uses log base 2 so it is bounded by [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import t as t_dist

from .errors import EmptySample, InvalidCounts, InvalidSpec, OutOfRange, TooShort, ZeroPooledVariance

P_FLOOR = 1e-300
DISTANCE_BINS = 50


def _phi(x: float) -> float:
    """Standard normal CDF via the stdlib erfc (correctly rounded)."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class EffectSize:
    d: float
    ci_low: float
    ci_high: float
    n1: int
    n2: int

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n1": self.n1,
            "n2": self.n2,
            "method": "pooled-SD Cohen's d, 95% normal-approximation CI",
        }


@dataclass(frozen=True)
class DistanceReport:
    js: float
    tv: float
    ks: float
    bin_count: int
    bin_range: tuple[float, float]

    def as_dict(self) -> dict:
        return {
            "js": self.js,
            "tv": self.tv,
            "ks": self.ks,
            "bin_count": self.bin_count,
            "bin_range": list(self.bin_range),
            "method": "JS/TV on common equal-width bins over the pooled range, log2; KS on empirical CDFs",
        }


def cohens_d(sample_a, sample_b) -> EffectSize:
    """Standardized mean difference (a minus b) with pooled SD."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise TooShort(f"cohens_d needs >= 2 per sample, got {n1} and {n2}")
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    pooled = ((n1 - 1) * var_a + (n2 - 1) * var_b) / (n1 + n2 - 2)
    if pooled == 0:
        raise ZeroPooledVariance("both samples are constant")
    d = float((a.mean() - b.mean()) / math.sqrt(pooled))
    se = math.sqrt((n1 + n2) / (n1 * n2) + d**2 / (2 * (n1 + n2)))
    return EffectSize(d=d, ci_low=d - 1.96 * se, ci_high=d + 1.96 * se, n1=n1, n2=n2)


def welch_t(sample_a, sample_b) -> tuple[float, float, float]:
    """Welch's t statistic, Welch-Satterthwaite df, and two-sided p.

    p uses the exact t distribution for df <= 200 and the normal
    approximation above (indistinguishable at that df); p is floored at
    1e-300. Two constant samples with equal means give (0, n1+n2-2, 1).
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise TooShort(f"welch_t needs >= 2 per sample, got {n1} and {n2}")
    va_n = a.var(ddof=1) / n1
    vb_n = b.var(ddof=1) / n2
    se2 = va_n + vb_n
    if se2 == 0:
        if a.mean() == b.mean():
            return 0.0, float(n1 + n2 - 2), 1.0
        return math.inf, float(n1 + n2 - 2), P_FLOOR
    t = float((a.mean() - b.mean()) / math.sqrt(se2))
    df = float(se2**2 / (va_n**2 / (n1 - 1) + vb_n**2 / (n2 - 1)))
    if df > 200:
        p = 2.0 * _phi(-abs(t))
    else:
        p = 2.0 * float(t_dist.sf(abs(t), df))
    return t, df, float(min(1.0, max(p, P_FLOOR)))


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial confidence interval via Beta quantiles."""
    k, n = int(successes), int(trials)
    if n < 1 or not 0 <= k <= n:
        raise InvalidCounts(f"need 0 <= k <= n with n >= 1, got k={k}, n={n}")
    alpha = 1.0 - level
    low = 0.0 if k == 0 else float(beta_dist.ppf(alpha / 2, k, n - k + 1))
    high = 1.0 if k == n else float(beta_dist.ppf(1 - alpha / 2, k + 1, n - k))
    return low, high


def binomial_test_vs_half(k: int, n: int) -> float:
    """Exact two-sided binomial p-value against p0 = 0.5.

    Minimum-likelihood convention: sums P(X = i) over all i whose point
    probability does not exceed P(X = k). Computed in log space; floored at
    1e-300. By symmetry this is P(X <= m) + P(X >= n - m) with m = min(k, n-k),
    clamped to 1 (k = n/2 gives exactly 1).
    """
    k, n = int(k), int(n)
    if n < 1 or not 0 <= k <= n:
        raise InvalidCounts(f"need 0 <= k <= n with n >= 1, got k={k}, n={n}")
    m = min(k, n - k)
    if 2 * m == n:
        return 1.0
    log_half_n = -n * math.log(2.0)
    # log P(X <= m), accumulated stably from the largest term down.
    log_terms = [
        math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1) + log_half_n
        for i in range(m + 1)
    ]
    peak = max(log_terms)
    log_tail = peak + math.log(sum(math.exp(t - peak) for t in log_terms))
    log_p = log_tail + math.log(2.0)  # symmetric upper tail
    if log_p >= 0:
        return 1.0
    return max(math.exp(log_p), P_FLOOR)


def distances(sample_a, sample_b, bins: int = DISTANCE_BINS) -> DistanceReport:
    """JS divergence (bits), total variation, and KS statistic between two
    samples.

    JS and TV use a common histogram: `bins` equal-width bins spanning the
    pooled [min, max]. KS is binning-free (sup distance between empirical
    CDFs over the pooled points).
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise EmptySample("distances needs non-empty samples")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        # All pooled mass in a single point: identical histograms.
        p = np.zeros(bins)
        q = np.zeros(bins)
        p[0] = q[0] = 1.0
    else:
        edges = np.linspace(lo, hi, bins + 1)
        p = np.histogram(a, bins=edges)[0] / len(a)
        q = np.histogram(b, bins=edges)[0] / len(b)

    m = 0.5 * (p + q)
    js = 0.5 * _kl_log2(p, m) + 0.5 * _kl_log2(q, m)
    tv = 0.5 * float(np.abs(p - q).sum())

    grid = np.sort(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), grid, side="right") / len(a)
    fb = np.searchsorted(np.sort(b), grid, side="right") / len(b)
    ks = float(np.abs(fa - fb).max())

    return DistanceReport(
        js=float(js), tv=tv, ks=ks, bin_count=bins, bin_range=(float(lo), float(hi))
    )


def _kl_log2(p: np.ndarray, m: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * np.log2(p[mask] / m[mask])).sum())


def bayes_error_from_d(d: float) -> float:
    """Bayes-optimal error for two equal-variance normals separated by
    effect size d: the standard normal CDF at -d/2."""
    return _phi(-d / 2.0)


def dpi_lower_bound(tv: float) -> float:
    """Lower bound on any classifier's error given total variation tv
    between the class-conditional feature distributions: (1 - tv) / 2."""
    if not 0.0 <= tv <= 1.0:
        raise OutOfRange(f"tv must be in [0, 1], got {tv}")
    return 0.5 * (1.0 - tv)


class NonIdentResult(NamedTuple):
    auc: float
    d: float
    best_feature: str
    logistic_auc: float


def nonident_harness(
    model,
    n: int,
    seed: int,
    copy_model=None,
    keystrokes: int = 300,
) -> NonIdentResult:
    """Empirical check of timing-only non-identifiability.

    Generates n composed and n copy-type sessions (by default from the SAME
    motor model, so motor independence holds by construction), extracts the
    7-feature vectors, and reports the AUC of the single most discriminative
    feature plus the delta effect size. Passing a different copy_model
    violates motor independence and should push the AUC away from 0.5,
    which is how the harness proves it has power.
    """
    # Local imports: detect/synth sit above stats in the layering.
    from .detect import cross_validate, roc_auc, train_logistic
    from .features import CORE_FEATURES, delta_values, feature_matrix
    from .synth import GeneratorKind, GeneratorSpec

    if n < 200:
        raise InvalidSpec(f"nonident_harness needs n >= 200 per label, got {n}")
    from .synth import gen_copy_type, gen_human

    composed = gen_human(model, GeneratorSpec(GeneratorKind.HUMAN, n, keystrokes, seed))
    copied = gen_copy_type(
        copy_model if copy_model is not None else model,
        GeneratorSpec(GeneratorKind.COPY_TYPE, n, keystrokes, seed + 1),
    )

    f_pos = feature_matrix(composed)
    f_neg = feature_matrix(copied)

    best_auc, best_name = 0.5, CORE_FEATURES[0]
    for j, name in enumerate(CORE_FEATURES):
        auc_j = roc_auc(f_pos[:, j], f_neg[:, j]).auc
        if abs(auc_j - 0.5) > abs(best_auc - 0.5):
            best_auc, best_name = auc_j, name

    x = np.vstack([f_pos, f_neg])
    y = np.concatenate([np.ones(n), np.zeros(n)])
    cv = cross_validate(x, y, trainer=train_logistic, seed=42)

    d = cohens_d(delta_values(composed), delta_values(copied)).d
    return NonIdentResult(
        auc=float(best_auc),
        d=float(d),
        best_feature=best_name,
        logistic_auc=float(cv.mean_auc),
    )

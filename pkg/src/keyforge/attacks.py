"""Timing-forgery generators and the AR(1) temporal patch.

All three attacks consume knowledge an attacker can obtain from public
keystroke data: the pooled empirical IKI distribution (histogram attack),
its first two moments plus digraph corrections (statistical impersonation),
or a generative sequence model (LSTM attack). Copy-type is not a forgery
and lives in the synth module as the relabeled human generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientData, InvalidSpec, TooShort, UntrainedModel
from .synth import GeneratorKind, GeneratorSpec, session_keys, session_rng
from .trace import (
    IkiSequence,
    ProvenanceLabel,
    Trace,
    extract_ikis,
    iki_digraphs,
    trace_from_ikis,
)

MIN_CDF_POOL = 100
MIN_DIGRAPH_OBS = 20
POSITIVITY_FLOOR_MS = 1.0


@dataclass(frozen=True)
class EmpiricalCdf:
    """Sorted pool of trimmed IKIs; supports inverse-CDF sampling."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=np.float64))
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if len(vals) < MIN_CDF_POOL:
            raise InsufficientData(
                f"empirical CDF needs >= {MIN_CDF_POOL} IKIs, got {len(vals)}"
            )

    def __len__(self) -> int:
        return len(self.values)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Order statistic at index ceil(u*n) for u uniform on (0, 1]."""
        u = 1.0 - rng.random(size)
        idx = np.ceil(u * len(self.values)).astype(np.int64) - 1
        return self.values[idx]


def build_cdf(corpus: Sequence[Trace]) -> EmpiricalCdf:
    """Pool the trimmed IKIs of every session into one empirical CDF."""
    pools = [extract_ikis(t).values for t in corpus]
    if not pools:
        raise InsufficientData("empty corpus")
    return EmpiricalCdf(values=np.concatenate(pools))


@dataclass(frozen=True)
class DigraphTable:
    """Ordered key pair -> IKI correction in ms; unknown pairs get 0."""

    corrections: dict[tuple[int, int], float] = field(default_factory=dict)

    def get(self, first: int, second: int) -> float:
        return self.corrections.get((first, second), 0.0)


@dataclass(frozen=True)
class StatImpersonationParams:
    mu_human: float
    sigma_human: float
    digraphs: DigraphTable = field(default_factory=DigraphTable)

    def __post_init__(self):
        if not self.sigma_human > 0:
            raise ValueError(
                f"sigma_human must be > 0, got {self.sigma_human} "
                "(source corpus has no IKI spread)"
            )


def fit_stat_params(corpus: Sequence[Trace]) -> StatImpersonationParams:
    """Pooled trimmed-IKI mean/std plus centered per-digraph corrections.

    Corrections are (per-digraph mean - pooled mean) for digraphs with at
    least 20 observations, re-centered so the stored values average to zero.
    """
    if not corpus:
        raise InsufficientData("empty corpus")
    pair_values: dict[tuple[int, int], list[float]] = {}
    pooled = []
    for trace in corpus:
        pairs, values = iki_digraphs(trace)
        pooled.append(values)
        for pair, v in zip(pairs, values):
            pair_values.setdefault(pair, []).append(float(v))
    all_values = np.concatenate(pooled)
    mu = float(all_values.mean())
    sigma = float(all_values.std())

    raw = {
        pair: float(np.mean(vals)) - mu
        for pair, vals in pair_values.items()
        if len(vals) >= MIN_DIGRAPH_OBS
    }
    if raw:
        center = float(np.mean(list(raw.values())))
        raw = {pair: c - center for pair, c in raw.items()}
    return StatImpersonationParams(
        mu_human=mu, sigma_human=sigma, digraphs=DigraphTable(corrections=raw)
    )


def attack_histogram(
    cdf: EmpiricalCdf,
    spec: GeneratorSpec,
    text: Sequence[int] | str | None = None,
) -> list[Trace]:
    """I.i.d. draws from the pooled empirical CDF."""
    if spec.kind is not GeneratorKind.HISTOGRAM:
        raise InvalidSpec(f"attack_histogram requires kind=HISTOGRAM, got {spec.kind}")
    traces = []
    for i in range(spec.n_sessions):
        rng = session_rng(spec.seed, 0, i)
        n_keys = _session_length(spec, rng)
        ikis = cdf.sample(n_keys - 1, rng)
        traces.append(
            trace_from_ikis(
                session_id=f"histogram-{spec.seed}-{i:05d}",
                ikis_ms=ikis,
                keys=session_keys(n_keys, text),
                label=ProvenanceLabel.ATTACK_HISTOGRAM,
            )
        )
    return traces


def attack_statistical(
    params: StatImpersonationParams,
    spec: GeneratorSpec,
    text: Sequence[int] | str | None = None,
) -> list[Trace]:
    """Gaussian moment matching with digraph corrections, floored at 1 ms."""
    if spec.kind is not GeneratorKind.STATISTICAL:
        raise InvalidSpec(
            f"attack_statistical requires kind=STATISTICAL, got {spec.kind}"
        )
    traces = []
    for i in range(spec.n_sessions):
        rng = session_rng(spec.seed, 0, i)
        n_keys = _session_length(spec, rng)
        keys = session_keys(n_keys, text)
        z = rng.standard_normal(n_keys - 1)
        corrections = np.array(
            [params.digraphs.get(keys[j], keys[j + 1]) for j in range(n_keys - 1)]
        )
        ikis = np.maximum(
            params.mu_human + params.sigma_human * z + corrections, POSITIVITY_FLOOR_MS
        )
        traces.append(
            trace_from_ikis(
                session_id=f"statistical-{spec.seed}-{i:05d}",
                ikis_ms=ikis,
                keys=keys,
                label=ProvenanceLabel.ATTACK_STATISTICAL,
            )
        )
    return traces


def attack_lstm(
    model,
    spec: GeneratorSpec,
    text: Sequence[int] | str | None = None,
) -> list[Trace]:
    """Sessions sampled from a trained mixture-density LSTM."""
    from .seqmodel import MdnLstmModel

    if spec.kind is not GeneratorKind.LSTM:
        raise InvalidSpec(f"attack_lstm requires kind=LSTM, got {spec.kind}")
    if not isinstance(model, MdnLstmModel):
        raise UntrainedModel(f"expected a trained MdnLstmModel, got {type(model).__name__}")
    traces = []
    for i in range(spec.n_sessions):
        rng = session_rng(spec.seed, 0, i)
        n_keys = _session_length(spec, rng)
        keys = session_keys(n_keys, text)
        ikis = model.sample_keys(keys, temperature=1.0, seed=[spec.seed, 1, i])
        traces.append(
            trace_from_ikis(
                session_id=f"lstm-{spec.seed}-{i:05d}",
                ikis_ms=ikis.values,
                keys=keys,
                label=ProvenanceLabel.ATTACK_LSTM,
            )
        )
    return traces


def ar1_patch(ikis: IkiSequence | np.ndarray, alpha: float = 0.3, seed=None) -> IkiSequence:
    """Re-impose lag-1 correlation while preserving the marginal mean and
    variance.

    The standardized sequence is run through e'_j = alpha * e'_{j-1} +
    sqrt(1 - alpha^2) * e_j (first element passed through), then rescaled
    and floored at 1 ms. The transform is deterministic; `seed` is accepted
    for interface symmetry with the generators and ignored.
    """
    x = ikis.values if isinstance(ikis, IkiSequence) else np.asarray(ikis, dtype=np.float64)
    if len(x) < 3:
        raise TooShort(f"ar1_patch needs >= 3 IKIs, got {len(x)}")
    m = x.mean()
    s = x.std()
    if s == 0:
        return IkiSequence(values=x.copy(), trimmed_count=0)
    e = (x - m) / s
    out = np.empty_like(e)
    out[0] = e[0]
    c = np.sqrt(1.0 - alpha**2)
    for j in range(1, len(e)):
        out[j] = alpha * out[j - 1] + c * e[j]
    patched = np.maximum(m + s * out, POSITIVITY_FLOOR_MS)
    return IkiSequence(values=patched, trimmed_count=0)


def patch_corpus(traces: Sequence[Trace], alpha: float = 0.3) -> list[Trace]:
    """Apply ar1_patch to every session, rebuilding timestamps."""
    patched = []
    for trace in traces:
        ikis = extract_ikis(trace)
        new = ar1_patch(ikis, alpha=alpha)
        patched.append(
            trace_from_ikis(
                session_id=trace.session_id,
                ikis_ms=new.values,
                keys=trace.keys[: len(new.values) + 1],
                label=trace.label,
            )
        )
    return patched


def _session_length(spec: GeneratorSpec, rng: np.random.Generator) -> int:
    lo, hi = spec.keystroke_range()
    if lo == hi:
        return lo
    return int(rng.integers(lo, hi + 1))

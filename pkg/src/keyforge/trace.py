"""Keystroke-trace data model, IKI extraction, session validation, corpus I/O.

A trace is an ordered sequence of (key, timestamp) events plus a provenance
label. Timestamps are stored as integer microseconds to keep corpus round
trips bit-exact; all derived quantities (inter-keystroke intervals) are
expressed in milliseconds.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AllTrimmed, ParseError, SchemaError, TooShort

US_PER_MS = 1000

# Factor above the pre-trim mean beyond which an IKI is discarded.
OUTLIER_FACTOR = 10.0


class ProvenanceLabel(enum.Enum):
    """How the trace was produced."""

    HUMAN_COMPOSED = "HUMAN_COMPOSED"
    HUMAN_TRANSCRIBED = "HUMAN_TRANSCRIBED"
    AUTOMATED = "AUTOMATED"
    ATTACK_HISTOGRAM = "ATTACK_HISTOGRAM"
    ATTACK_STATISTICAL = "ATTACK_STATISTICAL"
    ATTACK_LSTM = "ATTACK_LSTM"


@dataclass(frozen=True)
class KeyEvent:
    """Single keystroke: key codepoint and timestamp in integer microseconds."""

    key: int
    t_us: int

    def __post_init__(self):
        if self.t_us < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.t_us}")

    @property
    def t_ms(self) -> float:
        return self.t_us / US_PER_MS


@dataclass(frozen=True)
class Trace:
    """One typing session.

    Ordering of timestamps is not enforced at construction so that raw
    capture artifacts can be ingested and then filtered with
    :func:`validate_session`; operations that require monotone time check it
    themselves.
    """

    session_id: str
    events: tuple[KeyEvent, ...]
    label: ProvenanceLabel

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self) -> int:
        return len(self.events)

    @property
    def keys(self) -> list[int]:
        return [e.key for e in self.events]

    def timestamps_us(self) -> np.ndarray:
        return np.array([e.t_us for e in self.events], dtype=np.int64)


@dataclass(frozen=True)
class IkiSequence:
    """Positive inter-keystroke intervals in ms, after zero-drop and trimming."""

    values: np.ndarray
    trimmed_count: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


def trace_from_ikis(
    session_id: str,
    ikis_ms: Sequence[float],
    keys: Sequence[int],
    label: ProvenanceLabel,
) -> Trace:
    """Build a trace from generated IKIs; timestamps cumulative from t=0.

    len(keys) must be len(ikis_ms) + 1. IKIs are rounded to the internal
    microsecond grid.
    """
    if len(keys) != len(ikis_ms) + 1:
        raise ValueError("need exactly one more key than IKIs")
    t_us = np.empty(len(keys), dtype=np.int64)
    t_us[0] = 0
    t_us[1:] = np.round(np.cumsum(np.asarray(ikis_ms, dtype=np.float64)) * US_PER_MS)
    events = tuple(KeyEvent(int(k), int(t)) for k, t in zip(keys, t_us))
    return Trace(session_id=session_id, events=events, label=label)


def _kept_mask(diffs_ms: np.ndarray) -> np.ndarray:
    """Survival mask for raw IKIs: drop zeros, then one pass over the
    pre-trim mean removes everything strictly above OUTLIER_FACTOR x mean."""
    positive = diffs_ms > 0.0
    if not positive.any():
        return positive
    pre_trim_mean = diffs_ms[positive].mean()
    return positive & (diffs_ms <= OUTLIER_FACTOR * pre_trim_mean)


def extract_ikis(trace: Trace) -> IkiSequence:
    """Successive timestamp differences in ms, zero gaps dropped, then a
    single trimming pass against the pre-trim mean.

    Raises TooShort for traces with fewer than 2 events and AllTrimmed when
    nothing survives (all gaps zero).
    """
    if len(trace) < 2:
        raise TooShort(f"trace {trace.session_id!r} has {len(trace)} events, need >= 2")
    t_us = trace.timestamps_us()
    diffs_us = np.diff(t_us)
    if (diffs_us < 0).any():
        raise ValueError(f"trace {trace.session_id!r} has decreasing timestamps")
    diffs_ms = diffs_us / US_PER_MS
    kept = _kept_mask(diffs_ms)
    if not kept.any():
        raise AllTrimmed(f"trace {trace.session_id!r}: no IKIs survive preprocessing")
    values = diffs_ms[kept]
    return IkiSequence(values=values, trimmed_count=int(len(diffs_ms) - len(values)))


def iki_digraphs(trace: Trace) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Post-trim IKIs paired with the ordered key pair that produced each.

    Applies the same preprocessing as extract_ikis, so the returned values
    match extract_ikis(trace).values element for element.
    """
    if len(trace) < 2:
        raise TooShort(f"trace {trace.session_id!r} has {len(trace)} events, need >= 2")
    t_us = trace.timestamps_us()
    diffs_us = np.diff(t_us)
    if (diffs_us < 0).any():
        raise ValueError(f"trace {trace.session_id!r} has decreasing timestamps")
    diffs_ms = diffs_us / US_PER_MS
    kept = _kept_mask(diffs_ms)
    keys = trace.keys
    pairs = [(keys[i], keys[i + 1]) for i in np.flatnonzero(kept)]
    return pairs, diffs_ms[kept]


def validate_session(trace: Trace, min_keystrokes: int) -> bool:
    """True iff the trace has at least min_keystrokes events and
    non-decreasing timestamps."""
    if len(trace) < min_keystrokes:
        return False
    t_us = trace.timestamps_us()
    return bool((np.diff(t_us) >= 0).all()) if len(t_us) > 1 else True


_CORPUS_FIELDS = ("session_id", "label", "keys", "t_us")


def _trace_to_record(trace: Trace) -> dict:
    return {
        "session_id": trace.session_id,
        "label": trace.label.value,
        "keys": [e.key for e in trace.events],
        "t_us": [e.t_us for e in trace.events],
    }


def _record_to_trace(rec: dict, line: int) -> Trace:
    for field in _CORPUS_FIELDS:
        if field not in rec:
            raise SchemaError(field, line=line, reason="missing")
    keys, t_us = rec["keys"], rec["t_us"]
    if not isinstance(keys, list) or not isinstance(t_us, list):
        raise SchemaError("keys", line=line, reason="keys and t_us must be arrays")
    if len(keys) != len(t_us):
        raise SchemaError(
            "t_us", line=line, reason=f"length {len(t_us)} != keys length {len(keys)}"
        )
    try:
        label = ProvenanceLabel(rec["label"])
    except ValueError:
        raise SchemaError("label", line=line, reason=f"unknown label {rec['label']!r}")
    try:
        events = tuple(KeyEvent(int(k), int(t)) for k, t in zip(keys, t_us))
    except (TypeError, ValueError) as exc:
        raise SchemaError("t_us", line=line, reason=str(exc))
    return Trace(session_id=str(rec["session_id"]), events=events, label=label)


def read_corpus(path: str | Path) -> list[Trace]:
    """Read a line-delimited JSON corpus; one session per line.

    Raises ParseError (with line number) on malformed JSON and SchemaError
    (naming the field) on structurally invalid records. Line numbers are
    1-based; blank lines are skipped.
    """
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, reason=exc.msg)
            if not isinstance(rec, dict):
                raise ParseError(lineno, reason="record is not a JSON object")
            traces.append(_record_to_trace(rec, lineno))
    return traces


def write_corpus(traces: Iterable[Trace], path: str | Path) -> None:
    """Write traces in the line-delimited corpus format (read_corpus inverse)."""
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(_trace_to_record(trace), separators=(",", ":")))
            fh.write("\n")

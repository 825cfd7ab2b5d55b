"""Trace records and their line-delimited JSON serialization.

One event per line, keys in a fixed order::

    {"candidate_id": 117, "begin_ts": 120.31, "end_ts": 187.112041, "worker_id": 3,
     "stage": 2, "sequence": [2, 0, 4, 1, 1, 3], "quality": 0.812344109,
     "donor_id": 64, "donor_prefix_len": 4}

Debug traces append ``parent_id``, ``mutation_index`` and ``sampled_ids``.
Floats are written with 9 significant digits, so a trace survives
write -> read -> write byte for byte.  Lines are ordered by ``end_ts``
(completion order).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields
from typing import Iterable

FLOAT_DIGITS = 9

_BASE_KEYS = (
    "candidate_id",
    "begin_ts",
    "end_ts",
    "worker_id",
    "stage",
    "sequence",
    "quality",
    "donor_id",
    "donor_prefix_len",
)
_DEBUG_KEYS = ("parent_id", "mutation_index", "sampled_ids")


class TraceFormatError(ValueError):
    def __init__(self, path, line_no: int, field: str | None, msg: str):
        where = f"{path}:{line_no}" + (f" field '{field}'" if field else "")
        super().__init__(f"{where}: {msg}")
        self.line_no = line_no
        self.field = field


def round_sig(x: float, digits: int = FLOAT_DIGITS) -> float:
    """Round to the value a trace file would store."""
    return float(format(x, f".{digits}g"))


@dataclass(frozen=True)
class TraceEvent:
    candidate_id: int
    begin_ts: float
    end_ts: float
    worker_id: int
    stage: int
    sequence: tuple[int, ...]
    quality: float
    # both None on traces recorded without transfer; on transfer traces
    # donor_prefix_len is 0 when no donor was found
    donor_id: int | None = None
    donor_prefix_len: int | None = None
    parent_id: int | None = None
    mutation_index: int | None = None
    sampled_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(self.sequence))
        if self.sampled_ids is not None:
            object.__setattr__(self, "sampled_ids", tuple(self.sampled_ids))

    @property
    def is_debug(self) -> bool:
        return self.parent_id is not None or self.mutation_index is not None or self.sampled_ids is not None


def has_transfer(events: Iterable[TraceEvent]) -> bool:
    return any(e.donor_prefix_len is not None for e in events)


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite float {x} cannot be serialized")
    return format(x, f".{FLOAT_DIGITS}g")


def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, float):
        return _fmt_float(value)
    if isinstance(value, tuple):
        return "[" + ", ".join(str(v) for v in value) + "]"
    return str(value)


def format_event(e: TraceEvent) -> str:
    keys = _BASE_KEYS + (_DEBUG_KEYS if e.is_debug else ())
    return "{" + ", ".join(f'"{k}": {_fmt(getattr(e, k))}' for k in keys) + "}"


def check_event(e: TraceEvent) -> str | None:
    """Return a description of the first violated invariant, or None."""
    if not e.end_ts > e.begin_ts:
        return "end_ts must be greater than begin_ts"
    if not 0.0 <= e.quality <= 1.0:
        return "quality outside [0, 1]"
    if e.stage not in (1, 2):
        return "stage must be 1 or 2"
    if e.donor_id is not None and e.donor_prefix_len is None:
        return "donor_id without donor_prefix_len"
    return None


def write_trace(events: Iterable[TraceEvent], path) -> None:
    """Serialize ``events`` to ``path`` in one buffered write."""
    events = list(events)
    lines = []
    seen = set()
    prev_end = -math.inf
    for i, e in enumerate(events):
        problem = check_event(e)
        if problem:
            raise ValueError(f"event {i} (candidate {e.candidate_id}): {problem}")
        if e.end_ts < prev_end:
            raise ValueError(f"event {i} (candidate {e.candidate_id}) is out of end_ts order")
        if e.candidate_id in seen:
            raise ValueError(f"duplicate candidate_id {e.candidate_id}")
        seen.add(e.candidate_id)
        prev_end = e.end_ts
        lines.append(format_event(e) + "\n")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("".join(lines))
    except OSError as exc:
        raise OSError(f"cannot write trace to {os.fspath(path)}: {exc}") from exc


def _as_int(v, path, line_no, key, nullable=False):
    if v is None and nullable:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise TraceFormatError(path, line_no, key, f"expected integer, got {v!r}")
    return v


def _as_float(v, path, line_no, key):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TraceFormatError(path, line_no, key, f"expected number, got {v!r}")
    return float(v)


def _as_int_list(v, path, line_no, key, nullable=False):
    if v is None and nullable:
        return None
    if not isinstance(v, list):
        raise TraceFormatError(path, line_no, key, f"expected list, got {v!r}")
    return tuple(_as_int(x, path, line_no, key) for x in v)


def parse_line(line: str, path="<trace>", line_no: int = 1) -> TraceEvent:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(path, line_no, None, f"malformed record ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise TraceFormatError(path, line_no, None, "record is not an object")
    for k in _BASE_KEYS:
        if k not in rec:
            raise TraceFormatError(path, line_no, k, "missing")
    unknown = set(rec) - set(_BASE_KEYS) - set(_DEBUG_KEYS)
    if unknown:
        raise TraceFormatError(path, line_no, sorted(unknown)[0], "unknown field")
    return TraceEvent(
        candidate_id=_as_int(rec["candidate_id"], path, line_no, "candidate_id"),
        begin_ts=_as_float(rec["begin_ts"], path, line_no, "begin_ts"),
        end_ts=_as_float(rec["end_ts"], path, line_no, "end_ts"),
        worker_id=_as_int(rec["worker_id"], path, line_no, "worker_id"),
        stage=_as_int(rec["stage"], path, line_no, "stage"),
        sequence=_as_int_list(rec["sequence"], path, line_no, "sequence"),
        quality=_as_float(rec["quality"], path, line_no, "quality"),
        donor_id=_as_int(rec["donor_id"], path, line_no, "donor_id", nullable=True),
        donor_prefix_len=_as_int(rec["donor_prefix_len"], path, line_no, "donor_prefix_len", nullable=True),
        parent_id=_as_int(rec.get("parent_id"), path, line_no, "parent_id", nullable=True),
        mutation_index=_as_int(rec.get("mutation_index"), path, line_no, "mutation_index", nullable=True),
        sampled_ids=_as_int_list(rec.get("sampled_ids"), path, line_no, "sampled_ids", nullable=True),
    )


def read_trace(path) -> list[TraceEvent]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    if not text:
        return []
    lines = text.split("\n")
    if lines[-1] != "":
        raise TraceFormatError(path, len(lines), None, "truncated final line (no newline)")
    lines.pop()

    events = []
    seen = set()
    prev_end = -math.inf
    for line_no, line in enumerate(lines, start=1):
        e = parse_line(line, path, line_no)
        problem = check_event(e)
        if problem:
            raise TraceFormatError(path, line_no, None, problem)
        if e.end_ts < prev_end:
            raise TraceFormatError(path, line_no, "end_ts", "records are not ordered by end_ts")
        if e.candidate_id in seen:
            raise TraceFormatError(path, line_no, "candidate_id", f"duplicate id {e.candidate_id}")
        seen.add(e.candidate_id)
        prev_end = e.end_ts
        events.append(e)
    return events


TRACE_FIELDS = tuple(f.name for f in fields(TraceEvent))

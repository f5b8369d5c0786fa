"""Trace persistence and raw ping-log import.

Canonical trace CSV::

    round,src,dst,rtt_us,lost
    0,0,1,201344,0
    0,0,2,,1

Rows are ordered by (round, src, dst); ``rtt_us`` is empty exactly when
``lost`` is 1. Raw ping logs use ``timestamp,src,dst,rtt_ms,success`` with
node names instead of ids.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import IO, Union

import numpy as np

from .errors import InvalidInputError, MalformedRowError, UnknownNodeError
from .overlay import OverlayTopology
from .trace import ROUND_SECONDS, LinkTrace

TRACE_HEADER = ["round", "src", "dst", "rtt_us", "lost"]
PING_HEADER = ["timestamp", "src", "dst", "rtt_ms", "success"]

Source = Union[str, Path, IO[str]]


def _read_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text()
    return source.read()


# --- canonical trace CSV ---------------------------------------------------------


def export_trace(trace: LinkTrace, dest: str | Path | IO[str] | None = None) -> str:
    """Serialize ``trace`` in canonical order. Writes to ``dest`` when given."""
    out = io.StringIO()
    out.write(",".join(TRACE_HEADER) + "\n")
    n = trace.n_nodes
    src, dst = np.nonzero(~np.eye(n, dtype=bool))
    for t in range(trace.rounds):
        rtt = trace.rtt_us[t, src, dst].tolist()
        lost = trace.lost[t, src, dst].tolist()
        out.writelines(
            f"{t},{a},{b},,1\n" if x else f"{t},{a},{b},{v},0\n"
            for a, b, v, x in zip(src.tolist(), dst.tolist(), rtt, lost)
        )
    text = out.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    elif dest is not None:
        dest.write(text)
    return text


def _int_field(value: str, line: int, name: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise MalformedRowError(line, f"{name} is not an integer: {value!r}") from None
    if v < 0:
        raise MalformedRowError(line, f"{name} is negative")
    return v


def load_trace(source: Source) -> LinkTrace:
    """Parse a trace CSV. Every (round, src, dst) must appear exactly once."""
    reader = csv.reader(io.StringIO(_read_text(source)))
    header = next(reader, None)
    if header is None:
        raise InvalidInputError("trace file is empty")
    if [h.strip() for h in header] != TRACE_HEADER:
        raise MalformedRowError(1, f"expected header {','.join(TRACE_HEADER)}")
    rows: list[tuple[int, int, int, int, bool]] = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise MalformedRowError(line, f"expected 5 fields, got {len(row)}")
        t = _int_field(row[0], line, "round")
        a = _int_field(row[1], line, "src")
        b = _int_field(row[2], line, "dst")
        if a == b:
            raise MalformedRowError(line, "src equals dst")
        if row[4] not in ("0", "1"):
            raise MalformedRowError(line, f"lost must be 0 or 1, got {row[4]!r}")
        lost = row[4] == "1"
        if lost:
            if row[3] != "":
                raise MalformedRowError(line, "lost sample carries an rtt_us value")
            rtt = 0
        else:
            if row[3] == "":
                raise MalformedRowError(line, "rtt_us missing on a sample that was not lost")
            rtt = _int_field(row[3], line, "rtt_us")
            if rtt == 0:
                raise MalformedRowError(line, "rtt_us must be positive")
        rows.append((t, a, b, rtt, lost))
    if not rows:
        raise InvalidInputError("trace file has no samples")

    arr = np.array([r[:4] for r in rows], dtype=np.int64)
    r_count = int(arr[:, 0].max()) + 1
    n = int(arr[:, 1:3].max()) + 1
    rtt = np.zeros((r_count, n, n), dtype=np.int64)
    lost = np.zeros((r_count, n, n), dtype=bool)
    seen = np.zeros((r_count, n, n), dtype=bool)
    for line, (t, a, b, v, x) in enumerate(rows, start=2):
        if seen[t, a, b]:
            raise MalformedRowError(line, f"duplicate sample for round {t}, {a}->{b}")
        seen[t, a, b] = True
        rtt[t, a, b] = v
        lost[t, a, b] = x
    seen[:, np.arange(n), np.arange(n)] = True
    if not seen.all():
        missing = int((~seen).sum())
        t, a, b = (int(v[0]) for v in np.nonzero(~seen))
        raise InvalidInputError(f"trace is incomplete: {missing} samples missing, first at round {t}, {a}->{b}")
    return LinkTrace(rtt, lost)


# --- raw ping logs ---------------------------------------------------------------


@dataclass
class ImportReport:
    records: int
    rounds: int
    pairs_seen: int
    pairs_unseen: int
    filled: int
    gaps: int
    coverage_pct: float  # filled buckets over (pairs seen x rounds)
    overwritten: int  # records superseded by a later one in the same bucket

    def to_dict(self) -> dict:
        return asdict(self)


_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no"}


def import_ping_log(
    source: Source, topology: OverlayTopology, round_seconds: float = ROUND_SECONDS
) -> tuple[LinkTrace, ImportReport]:
    """Bucket a raw ping log into rounds and build a complete trace.

    Round 0 starts at the earliest timestamp. Within a bucket the latest
    record wins (file order breaks timestamp ties). Buckets with no record
    become lost samples, as do pairs that never appear in the log.
    """
    if round_seconds <= 0:
        raise InvalidInputError("round_seconds must be positive")
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise InvalidInputError("ping log is empty")
    if [h.strip() for h in header] != PING_HEADER:
        raise MalformedRowError(1, f"expected header {','.join(PING_HEADER)}")
    ids = {node.name: node.id for node in topology.nodes}
    recs: list[tuple[float, int, int, int, int | None]] = []  # ts, line, src, dst, rtt_us
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise MalformedRowError(line, f"expected 5 fields, got {len(row)}")
        try:
            ts = float(row[0])
        except ValueError:
            raise MalformedRowError(line, f"bad timestamp {row[0]!r}") from None
        if not math.isfinite(ts):
            raise MalformedRowError(line, "timestamp is not finite")
        for name in (row[1], row[2]):
            if name not in ids:
                raise UnknownNodeError(f"line {line}: unknown node {name!r}")
        a, b = ids[row[1]], ids[row[2]]
        if a == b:
            raise MalformedRowError(line, "src equals dst")
        flag = row[4].strip().lower()
        if flag not in _TRUE | _FALSE:
            raise MalformedRowError(line, f"success must be 0/1, got {row[4]!r}")
        rtt: int | None = None
        if flag in _TRUE:
            try:
                ms = float(row[3])
            except ValueError:
                raise MalformedRowError(line, f"successful ping without a valid rtt_ms: {row[3]!r}") from None
            if not math.isfinite(ms) or ms <= 0:
                raise MalformedRowError(line, "rtt_ms must be positive")
            rtt = max(1, round(ms * 1000.0))
        recs.append((ts, line, a, b, rtt))
    if not recs:
        raise InvalidInputError("ping log has no records")

    recs.sort(key=lambda r: (r[0], r[1]))
    t0 = recs[0][0]
    n = len(topology)
    r_count = int((recs[-1][0] - t0) // round_seconds) + 1
    rtt_us = np.zeros((r_count, n, n), dtype=np.int64)
    lost = np.ones((r_count, n, n), dtype=bool)
    filled = np.zeros((r_count, n, n), dtype=bool)
    overwritten = 0
    for ts, _, a, b, v in recs:
        t = int((ts - t0) // round_seconds)
        overwritten += bool(filled[t, a, b])
        filled[t, a, b] = True
        rtt_us[t, a, b] = 0 if v is None else v
        lost[t, a, b] = v is None
    diag = np.arange(n)
    lost[:, diag, diag] = False
    pairs = filled.any(axis=0)
    seen = int(pairs.sum())
    n_filled = int(filled.sum())
    report = ImportReport(
        records=len(recs),
        rounds=r_count,
        pairs_seen=seen,
        pairs_unseen=n * (n - 1) - seen,
        filled=n_filled,
        gaps=seen * r_count - n_filled,
        coverage_pct=100.0 * n_filled / (seen * r_count),
        overwritten=overwritten,
    )
    return LinkTrace(rtt_us, lost), report

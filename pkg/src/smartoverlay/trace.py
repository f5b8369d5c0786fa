"""Per-link RTD/loss time series over 2-minute measurement rounds.

A trace stores, for every ordered node pair and every round, the round-trip
time of that IP segment in microseconds or a loss marker. Directions are
independent: A->B and B->A are distinct samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvalidInputError, MalformedSpecError

ROUND_SECONDS = 120
ROUND_US = ROUND_SECONDS * 1_000_000
OUTAGE_RUN = 5  # consecutive losses that mark a pair disconnected


@dataclass(frozen=True)
class LinkSample:
    t: int
    src: int
    dst: int
    rtt: int | None
    lost: bool


@dataclass
class LinkTrace:
    """Dense trace: ``rtt_us[t, a, b]`` and ``lost[t, a, b]``.

    Lost samples carry ``rtt_us == 0``. The diagonal is unused.
    """

    rtt_us: np.ndarray
    lost: np.ndarray

    def __post_init__(self) -> None:
        self.rtt_us = np.asarray(self.rtt_us, dtype=np.int64)
        self.lost = np.asarray(self.lost, dtype=bool)
        if self.rtt_us.ndim != 3 or self.rtt_us.shape[1] != self.rtt_us.shape[2]:
            raise InvalidInputError(f"trace arrays must be R x n x n, got {self.rtt_us.shape}")
        if self.lost.shape != self.rtt_us.shape:
            raise InvalidInputError("rtt and loss arrays differ in shape")
        off = ~np.eye(self.n_nodes, dtype=bool)[None, :, :]
        if (self.rtt_us[self.lost] != 0).any():
            raise InvalidInputError("lost samples must not carry an RTT")
        if ((self.rtt_us <= 0) & ~self.lost & off).any():
            raise InvalidInputError("present samples need a positive RTT")

    @property
    def rounds(self) -> int:
        return self.rtt_us.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.rtt_us.shape[1]

    def sample(self, t: int, src: int, dst: int) -> LinkSample:
        lost = bool(self.lost[t, src, dst])
        return LinkSample(t, src, dst, None if lost else int(self.rtt_us[t, src, dst]), lost)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinkTrace):
            return NotImplemented
        return np.array_equal(self.rtt_us, other.rtt_us) and np.array_equal(self.lost, other.lost)

    def disconnected(self, src: int, dst: int) -> np.ndarray:
        """Per-round flag: the last five samples of ``src -> dst`` were all lost."""
        return disconnected_mask(self.lost[:, src, dst])

    def loss_count(self) -> int:
        off = ~np.eye(self.n_nodes, dtype=bool)
        return int(self.lost[:, off].sum())


def disconnected_mask(lost: np.ndarray, run: int = OUTAGE_RUN) -> np.ndarray:
    lost = np.asarray(lost, dtype=bool)
    streak = np.zeros(lost.shape[0], dtype=np.int64)
    count = 0
    for t, x in enumerate(lost):
        count = count + 1 if x else 0
        streak[t] = count
    return streak >= run


class OutageDetector:
    """Streaming form of the five-consecutive-losses rule for one pair."""

    def __init__(self, run: int = OUTAGE_RUN):
        self.run = run
        self.streak = 0

    @property
    def disconnected(self) -> bool:
        return self.streak >= self.run

    def observe(self, lost: bool) -> bool:
        self.streak = self.streak + 1 if lost else 0
        return self.disconnected


# --- synthetic generator -------------------------------------------------------


@dataclass
class Shift:
    """From ``round`` on, replace the base RTT of the listed pairs."""

    round: int
    set: list[tuple[int, int, float]]
    symmetric: bool = True


@dataclass
class Outage:
    src: int
    dst: int
    start: int
    duration: int
    symmetric: bool = False


@dataclass
class GeneratorSpec:
    base_rtt_ms: np.ndarray
    rounds: int
    jitter_pct: float = 0.0
    loss_prob: float = 0.0
    shifts: list[Shift] = field(default_factory=list)
    outages: list[Outage] = field(default_factory=list)

    def __post_init__(self) -> None:
        base = np.array(self.base_rtt_ms, dtype=float)
        if base.ndim != 2 or base.shape[0] != base.shape[1] or base.shape[0] < 2:
            raise MalformedSpecError("base_rtt_ms must be a square matrix of size >= 2")
        off = ~np.eye(base.shape[0], dtype=bool)
        if not np.isfinite(base[off]).all() or (base[off] <= 0).any():
            raise MalformedSpecError("off-diagonal base RTTs must be positive and finite")
        self.base_rtt_ms = base
        np.fill_diagonal(self.base_rtt_ms, 0.0)
        if self.rounds < 0:
            raise MalformedSpecError("rounds must be non-negative")
        if not 0.0 <= self.jitter_pct < 100.0:
            raise MalformedSpecError("jitter_pct must lie in [0, 100)")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise MalformedSpecError("loss_prob must lie in [0, 1]")
        n = self.n_nodes
        for s in self.shifts:
            for a, b, ms in s.set:
                if not (0 <= a < n and 0 <= b < n and a != b and ms > 0):
                    raise MalformedSpecError(f"bad shift entry {(a, b, ms)}")
        for o in self.outages:
            if not (0 <= o.src < n and 0 <= o.dst < n and o.src != o.dst):
                raise MalformedSpecError(f"bad outage pair {(o.src, o.dst)}")
            if o.start < 0 or o.duration < 0:
                raise MalformedSpecError("outage start and duration must be non-negative")

    @property
    def n_nodes(self) -> int:
        return self.base_rtt_ms.shape[0]

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GeneratorSpec":
        try:
            spec = cls(
                np.array(d["base_rtt_ms"], dtype=float),
                int(d["rounds"]),
                float(d.get("jitter_pct", 0.0)),
                float(d.get("loss_prob", 0.0)),
                [
                    Shift(int(s["round"]), [(int(a), int(b), float(ms)) for a, b, ms in s["set"]],
                          bool(s.get("symmetric", True)))
                    for s in d.get("shifts", [])
                ],
                [
                    Outage(int(o["src"]), int(o["dst"]), int(o["start"]), int(o["duration"]),
                           bool(o.get("symmetric", False)))
                    for o in d.get("outages", [])
                ],
            )
        except MalformedSpecError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedSpecError(f"malformed generator spec: {exc}") from exc
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "GeneratorSpec":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise MalformedSpecError(f"{path}: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict[str, Any]:
        return {
            "base_rtt_ms": self.base_rtt_ms.tolist(),
            "rounds": self.rounds,
            "jitter_pct": self.jitter_pct,
            "loss_prob": self.loss_prob,
            "shifts": [{"round": s.round, "set": [list(e) for e in s.set], "symmetric": s.symmetric}
                       for s in self.shifts],
            "outages": [vars(o).copy() for o in self.outages],
        }

    def expected_outage_losses(self) -> int:
        """Lost samples forced by the outage list alone (overlaps counted once)."""
        mask = np.zeros((self.rounds, self.n_nodes, self.n_nodes), dtype=bool)
        _apply_outages(mask, self.outages)
        return int(mask.sum())


def _apply_outages(lost: np.ndarray, outages: list[Outage]) -> None:
    for o in outages:
        lost[o.start:o.start + o.duration, o.src, o.dst] = True
        if o.symmetric:
            lost[o.start:o.start + o.duration, o.dst, o.src] = True


def base_schedule(spec: GeneratorSpec) -> np.ndarray:
    """Noise-free base RTT (ms) per round, after applying the shifts in order."""
    r, n = spec.rounds, spec.n_nodes
    base = np.broadcast_to(spec.base_rtt_ms, (r, n, n)).copy()
    for s in sorted(spec.shifts, key=lambda s: s.round):
        for a, b, ms in s.set:
            base[s.round:, a, b] = ms
            if s.symmetric:
                base[s.round:, b, a] = ms
    return base


def generate_trace(spec: GeneratorSpec, seed: int) -> LinkTrace:
    """Deterministic synthetic trace: base RTTs with multiplicative uniform jitter."""
    rng = np.random.default_rng(seed)
    r, n = spec.rounds, spec.n_nodes
    base = base_schedule(spec)
    j = spec.jitter_pct / 100.0
    factor = 1.0 + rng.uniform(-j, j, size=(r, n, n)) if j > 0 else 1.0
    rtt = np.maximum(np.rint(base * 1000.0 * factor), 1).astype(np.int64)
    lost = np.zeros((r, n, n), dtype=bool)
    if spec.loss_prob > 0:
        lost |= rng.random((r, n, n)) < spec.loss_prob
    _apply_outages(lost, spec.outages)
    diag = np.eye(n, dtype=bool)
    lost[:, diag] = False
    rtt[:, diag] = 0
    rtt[lost] = 0
    return LinkTrace(rtt, lost)

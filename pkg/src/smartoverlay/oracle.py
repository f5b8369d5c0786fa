"""Brute-force optimal-path oracle, per-round reports and aggregate metrics."""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import IncompleteProbeError, InvalidInputError, NoPathError
from .overlay import OverlayPath, enumerate_paths, path_rtd_from_segments
from .probing import stamp_probe
from .trace import LinkTrace

OPTIMAL_BAND = 1e-3  # relative slack under which an RTD still counts as optimal
CONVERGENCE_TOL = 0.05
CONVERGENCE_WINDOW = 10


class PathTable:
    """Every candidate path of one pair, sorted by (hop count, vias).

    Sorting this way makes ``argmin`` pick the fewest-hop, then
    lexicographically smallest path among equal RTDs.
    """

    def __init__(self, n_nodes: int, src: int, dst: int, max_hops: int):
        self.src, self.dst, self.max_hops = src, dst, max_hops
        self.paths = sorted(
            enumerate_paths(n_nodes, src, dst, max_hops), key=lambda p: (p.hop_count, p.vias)
        )
        self.hops = np.array([p.hop_count for p in self.paths])
        # pad short paths with a self-loop segment, which the kernels skip
        a = np.full((len(self.paths), max_hops), src)
        b = np.full((len(self.paths), max_hops), src)
        for i, p in enumerate(self.paths):
            for k, (u, v) in enumerate(p.segments):
                a[i, k], b[i, k] = u, v
        self.seg_a, self.seg_b = a, b
        self.class_slices = {
            h: slice(int(np.searchsorted(self.hops, h, "left")), int(np.searchsorted(self.hops, h, "right")))
            for h in range(1, max_hops + 1)
        }

    def scan(self, rtt: np.ndarray, lost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Best path index, best RTD and per-hop-class best RTD for each round.

        RTDs are -1 where every path of the class (or every path) is lost.
        A pruned depth-first search; ``scan_brute`` gives the same answer.
        """
        out = self._outputs(rtt.shape[0])
        others = np.array(
            [v for v in range(rtt.shape[1]) if v not in (self.src, self.dst)], dtype=np.int64
        )
        starts = np.array([self.class_slices[h].start for h in range(1, self.max_hops + 1)])
        _scan_dfs(rtt, lost, self.src, self.dst, others, starts, *out)
        return out

    def scan_brute(self, rtt: np.ndarray, lost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        out = self._outputs(rtt.shape[0])
        _scan_brute(rtt, lost, self.seg_a, self.seg_b, self.hops, *out)
        return out

    def _outputs(self, r: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.zeros(r, dtype=np.int64),
            np.full(r, -1, dtype=np.int64),
            np.full((r, self.max_hops), -1, dtype=np.int64),
        )


@njit(cache=True)
def _scan_brute(rtt, lost, seg_a, seg_b, hops, best_index, best_rtt, class_min):
    n_paths, width = seg_a.shape
    for t in range(rtt.shape[0]):
        for p in range(n_paths):
            cost = 0
            dead = False
            for k in range(width):
                a, b = seg_a[p, k], seg_b[p, k]
                if a == b:
                    break
                if lost[t, a, b]:
                    dead = True
                    break
                cost += rtt[t, a, b]
            if dead:
                continue
            # paths are sorted, so strict "<" keeps the tie-break order
            if best_rtt[t] < 0 or cost < best_rtt[t]:
                best_rtt[t] = cost
                best_index[t] = p
            h = hops[p] - 1
            if class_min[t, h] < 0 or cost < class_min[t, h]:
                class_min[t, h] = cost


@njit(cache=True)
def _scan_dfs(rtt, lost, src, dst, others, class_start, best_index, best_rtt, class_min):
    m = others.shape[0]
    max_hops = class_start.shape[0]
    # perm[a, b] = a! / (a - b)!, the number of ordered picks of b out of a
    perm = np.zeros((m + 1, max_hops + 1), dtype=np.int64)
    for a in range(m + 1):
        perm[a, 0] = 1
        for b in range(1, max_hops + 1):
            perm[a, b] = perm[a, b - 1] * (a - b + 1) if a - b + 1 > 0 else 0
    used = np.zeros(m, dtype=np.bool_)
    stack = np.full(max_hops, -1, dtype=np.int64)
    node_at = np.zeros(max_hops + 1, dtype=np.int64)
    cost_at = np.zeros(max_hops + 1, dtype=np.int64)
    best_vias = np.zeros(max_hops, dtype=np.int64)
    for t in range(rtt.shape[0]):
        for h in range(1, max_hops + 1):
            depth_max = h - 1
            if depth_max > m:
                break
            cm = -1
            node_at[0] = src
            stack[0] = -1
            depth = 0
            while depth >= 0:
                if depth == depth_max:
                    a = node_at[depth]
                    if not lost[t, a, dst]:
                        c = cost_at[depth] + rtt[t, a, dst]
                        if cm < 0 or c < cm:
                            cm = c
                            for d in range(depth_max):
                                best_vias[d] = stack[d]
                    depth -= 1
                    continue
                k = stack[depth]
                if k >= 0:
                    used[k] = False
                k += 1
                a = node_at[depth]
                c = 0
                while k < m:
                    if not used[k] and not lost[t, a, others[k]]:
                        c = cost_at[depth] + rtt[t, a, others[k]]
                        # a prefix already at the class minimum cannot beat it
                        if cm < 0 or c < cm:
                            break
                    k += 1
                if k >= m:
                    stack[depth] = -1
                    depth -= 1
                    continue
                stack[depth] = k
                used[k] = True
                node_at[depth + 1] = others[k]
                cost_at[depth + 1] = c
                depth += 1
                if depth < max_hops:
                    stack[depth] = -1
            if cm < 0:
                continue
            class_min[t, h - 1] = cm
            # lexicographic rank of the winning vias among this class
            rank = 0
            for d in range(depth_max):
                smaller = best_vias[d]
                for e in range(d):
                    if best_vias[e] < best_vias[d]:
                        smaller -= 1
                rank += smaller * perm[m - d - 1, depth_max - d - 1]
            if best_rtt[t] < 0 or cm < best_rtt[t]:
                best_rtt[t] = cm
                best_index[t] = class_start[h - 1] + rank


@lru_cache(maxsize=256)
def path_table(n_nodes: int, src: int, dst: int, max_hops: int) -> PathTable:
    return PathTable(n_nodes, src, dst, max_hops)


@dataclass
class OracleSeries:
    """Oracle answer for every round of a trace for one pair.

    ``best_rtt`` and ``class_min`` hold -1 where no path survives.
    """

    table: PathTable
    best_index: np.ndarray
    best_rtt: np.ndarray
    class_min: np.ndarray  # rounds x max_hops, column h-1 = best h-hop RTD

    def path(self, t: int) -> OverlayPath | None:
        return None if self.best_rtt[t] < 0 else self.table.paths[int(self.best_index[t])]


def oracle_series(trace: LinkTrace, src: int, dst: int, max_hops: int) -> OracleSeries:
    table = path_table(trace.n_nodes, src, dst, max_hops)
    return OracleSeries(table, *table.scan(trace.rtt_us, trace.lost))


def optimal_path(
    trace: LinkTrace, round: int, pair: tuple[int, int], max_hops: int
) -> tuple[OverlayPath, int]:
    """Minimum-RTD path of ``pair`` at ``round`` over all paths of up to ``max_hops`` hops."""
    table = path_table(trace.n_nodes, pair[0], pair[1], max_hops)
    sl = slice(round, round + 1)
    idx, best, _ = table.scan(trace.rtt_us[sl], trace.lost[sl])
    if best[0] < 0:
        raise NoPathError(f"every candidate path {pair} is lost at round {round}")
    return table.paths[int(idx[0])], int(best[0])


def optimal_path_via_probes(
    trace: LinkTrace, round: int, pair: tuple[int, int], max_hops: int
) -> tuple[OverlayPath, int]:
    """Second oracle: stamp a probe along every path and read its RTD back.

    Shares nothing with ``optimal_path`` beyond the trace itself, so the two
    can check each other.
    """
    src, dst = pair
    others = [v for v in range(trace.n_nodes) if v not in pair]
    best: tuple[int, int, tuple[int, ...]] | None = None
    for length in range(max_hops):
        for vias in itertools.permutations(others, length):
            header = stamp_probe(trace, round, OverlayPath(src, dst, vias))
            try:
                rtd, _ = path_rtd_from_segments(header)
            except IncompleteProbeError:
                continue
            key = (rtd, length, vias)
            if best is None or key < best:
                best = key
    if best is None:
        raise NoPathError(f"every candidate path {pair} is lost at round {round}")
    return OverlayPath(src, dst, best[2]), best[0]


# --- reports -------------------------------------------------------------------


@dataclass
class RoundReport:
    round: int
    pair: tuple[int, int]
    chosen_path: OverlayPath
    chosen_rtt: int | None
    direct_rtt: int | None
    oracle_path: OverlayPath | None
    oracle_rtt: int | None
    hop_class_min: dict[int, int | None]
    links_charged: int = 0
    probed: list[int] = field(default_factory=list)
    all_lost: bool = False
    direct_disconnected: bool = False

    @property
    def evaluable(self) -> bool:
        return self.oracle_rtt is not None

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "pair": list(self.pair),
            "chosen_path": self.chosen_path.to_list(),
            "chosen_rtt_us": self.chosen_rtt,
            "direct_rtt_us": self.direct_rtt,
            "oracle_path": None if self.oracle_path is None else self.oracle_path.to_list(),
            "oracle_rtt_us": self.oracle_rtt,
            "hop_class_min_us": {str(h): v for h, v in sorted(self.hop_class_min.items())},
            "links_charged": self.links_charged,
            "probed": list(self.probed),
            "all_lost": self.all_lost,
            "direct_disconnected": self.direct_disconnected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundReport":
        try:
            return cls(
                round=int(d["round"]),
                pair=(int(d["pair"][0]), int(d["pair"][1])),
                chosen_path=OverlayPath.from_nodes(d["chosen_path"]),
                chosen_rtt=d["chosen_rtt_us"],
                direct_rtt=d["direct_rtt_us"],
                oracle_path=None if d["oracle_path"] is None else OverlayPath.from_nodes(d["oracle_path"]),
                oracle_rtt=d["oracle_rtt_us"],
                hop_class_min={int(h): v for h, v in d["hop_class_min_us"].items()},
                links_charged=int(d.get("links_charged", 0)),
                probed=list(d.get("probed", [])),
                all_lost=bool(d.get("all_lost", False)),
                direct_disconnected=bool(d.get("direct_disconnected", False)),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise InvalidInputError(f"malformed round report: {exc}") from exc


def relative_gap_pct(rtt: int | None, optimum: int | None) -> float | None:
    if rtt is None or optimum is None:
        return None
    return (rtt - optimum) / optimum * 100.0


def is_optimal(rtt: int | None, optimum: int) -> bool:
    # a lost measurement is never optimal
    return rtt is not None and rtt <= optimum * (1.0 + OPTIMAL_BAND)


def within(rtt: int | None, optimum: int | None, tol: float = CONVERGENCE_TOL) -> bool:
    return rtt is not None and optimum is not None and rtt <= optimum * (1.0 + tol)


def convergence_round(
    reports: Sequence[RoundReport],
    start: int = 0,
    window: int = CONVERGENCE_WINDOW,
    tol: float = CONVERGENCE_TOL,
) -> int | None:
    """First round ``>= start`` opening a run of ``window`` consecutive rounds
    whose chosen RTD is within ``tol`` of the oracle. Reports must share one pair."""
    ordered = sorted((r for r in reports if r.round >= start), key=lambda r: r.round)
    run_start, run_len, prev = None, 0, None
    for r in ordered:
        ok = within(r.chosen_rtt, r.oracle_rtt, tol)
        contiguous = prev is not None and r.round == prev + 1
        if ok:
            if run_len and contiguous:
                run_len += 1
            else:
                run_start, run_len = r.round, 1
            if run_len >= window:
                return run_start
        else:
            run_len = 0
        prev = r.round
    return None


@dataclass
class AggregateStats:
    pct_nonoptimal_direct: float
    pct_nonoptimal_chosen: float
    avg_gap_direct: float
    avg_gap_chosen: float
    hop_histogram: dict[int, float]
    avg_2hop_gap: float
    convergence_round: dict[str, int | None]
    n_reports: int
    n_evaluated: int
    excluded_no_path: int
    excluded_direct_lost: int
    excluded_chosen_lost: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hop_histogram"] = {str(h): v for h, v in sorted(self.hop_histogram.items())}
        return d


def _mean(xs: list[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def aggregate(reports: Iterable[RoundReport]) -> AggregateStats:
    reports = list(reports)
    if not reports:
        raise InvalidInputError("cannot aggregate an empty report stream")
    ev = [r for r in reports if r.evaluable]
    if not ev:
        raise InvalidInputError("no round had a surviving path; nothing to compare")
    n = len(ev)
    gaps_direct = [g for g in (relative_gap_pct(r.direct_rtt, r.oracle_rtt) for r in ev) if g is not None]
    gaps_chosen = [g for g in (relative_gap_pct(r.chosen_rtt, r.oracle_rtt) for r in ev) if g is not None]
    max_h = max(max(r.hop_class_min) for r in ev)
    hist = {h: 0 for h in range(1, max_h + 1)}
    two_hop = []
    for r in ev:
        hist[r.oracle_path.hop_count] += 1  # type: ignore[union-attr]
        short = [v for h, v in r.hop_class_min.items() if h <= 2 and v is not None]
        if short:
            two_hop.append(relative_gap_pct(min(short), r.oracle_rtt))
    by_pair: dict[tuple[int, int], list[RoundReport]] = {}
    for r in reports:
        by_pair.setdefault(r.pair, []).append(r)
    return AggregateStats(
        pct_nonoptimal_direct=100.0 * sum(not is_optimal(r.direct_rtt, r.oracle_rtt) for r in ev) / n,
        pct_nonoptimal_chosen=100.0 * sum(not is_optimal(r.chosen_rtt, r.oracle_rtt) for r in ev) / n,
        avg_gap_direct=_mean(gaps_direct),
        avg_gap_chosen=_mean(gaps_chosen),
        hop_histogram={h: 100.0 * c / n for h, c in hist.items()},
        avg_2hop_gap=_mean(two_hop),
        convergence_round={f"{a}-{b}": convergence_round(rs) for (a, b), rs in sorted(by_pair.items())},
        n_reports=len(reports),
        n_evaluated=n,
        excluded_no_path=len(reports) - n,
        excluded_direct_lost=n - len(gaps_direct),
        excluded_chosen_lost=n - len(gaps_chosen),
    )


# --- CSV exports -----------------------------------------------------------------


def _ms(us: int | None) -> str:
    return "" if us is None else f"{us / 1000:.3f}"


def hop_histogram_csv(stats: AggregateStats) -> str:
    out = io.StringIO()
    out.write("hops,percent\n")
    for h, v in sorted(stats.hop_histogram.items()):
        out.write(f"{h},{v:.6f}\n")
    return out.getvalue()


def gap_cdf_csv(reports: Iterable[RoundReport]) -> str:
    """Empirical CDF of the gap above the oracle, one series per routing policy."""
    ev = [r for r in reports if r.evaluable]
    out = io.StringIO()
    out.write("series,gap_pct,cdf\n")
    for name, attr in (("direct", "direct_rtt"), ("chosen", "chosen_rtt")):
        gaps = sorted(
            g for g in (relative_gap_pct(getattr(r, attr), r.oracle_rtt) for r in ev) if g is not None
        )
        for i, g in enumerate(gaps):
            out.write(f"{name},{g:.6f},{(i + 1) / len(gaps):.6f}\n")
    return out.getvalue()


def timeseries_csv(reports: Iterable[RoundReport], pair: tuple[int, int]) -> str:
    rows = sorted((r for r in reports if r.pair == pair), key=lambda r: r.round)
    if not rows:
        raise InvalidInputError(f"no reports for pair {pair[0]}-{pair[1]}")
    out = io.StringIO()
    out.write("round,direct_ms,chosen_ms,optimal_ms\n")
    for r in rows:
        out.write(f"{r.round},{_ms(r.direct_rtt)},{_ms(r.chosen_rtt)},{_ms(r.oracle_rtt)}\n")
    return out.getvalue()

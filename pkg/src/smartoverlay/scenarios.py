"""Reference traces: a Japan-Chile-shaped 20-node ring, a latency shift on
top of it, and a randomized family with pathological direct routes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .overlay import Node, OverlayTopology
from .trace import GeneratorSpec, Shift

# 20 overlay sites, ids assigned west to east by longitude.
SITES: list[tuple[str, float, float]] = [
    ("seattle", 47.61, -122.33),
    ("los-angeles", 34.05, -118.24),
    ("dallas", 32.78, -96.80),
    ("chicago", 41.88, -87.63),
    ("miami", 25.76, -80.19),
    ("new-york", 40.71, -74.01),
    ("santiago", -33.45, -70.67),
    ("sao-paulo", -23.55, -46.63),
    ("dublin", 53.35, -6.26),
    ("london", 51.51, -0.13),
    ("amsterdam", 52.37, 4.90),
    ("oslo", 59.91, 10.75),
    ("warsaw", 52.23, 21.01),
    ("tel-aviv", 32.09, 34.78),
    ("moscow", 55.76, 37.62),
    ("mumbai", 19.08, 72.88),
    ("singapore", 1.35, 103.82),
    ("hong-kong", 22.32, 114.17),
    ("tokyo", 35.68, 139.69),
    ("sydney", -33.87, 151.21),
]

TOKYO = 18
SANTIAGO = 6
LOS_ANGELES = 1

FIBRE_KM_PER_MS = 200.0
ROUTE_STRETCH = 1.6


def ring_topology() -> OverlayTopology:
    return OverlayTopology(tuple(Node(i, name, lat, lon) for i, (name, lat, lon) in enumerate(SITES)))


def great_circle_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp, dl = p2 - p1, np.radians(lon2 - lon1)
    a = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return float(2 * 6371.0 * np.arcsin(np.sqrt(a)))


def geographic_rtt_ms(stretch: float = ROUTE_STRETCH) -> np.ndarray:
    """Symmetric base RTTs from great-circle distance, a routing stretch and 2 ms of end-host delay."""
    n = len(SITES)
    base = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = great_circle_km(SITES[i][1], SITES[i][2], SITES[j][1], SITES[j][2])
            base[i, j] = base[j, i] = 2.0 * d / FIBRE_KM_PER_MS * stretch + 2.0
    return base


@dataclass(frozen=True)
class Scenario:
    spec: GeneratorSpec
    topology: OverlayTopology
    pair: tuple[int, int]
    best_via: int


def _set_two_hop(base: np.ndarray, src: int, via: int, dst: int, total: float, first_share: float) -> None:
    a = total * first_share
    base[src, via] = base[via, src] = a
    base[via, dst] = base[dst, via] = total - a


def japan_chile(rounds: int = 3600, jitter_pct: float = 2.0, decoy_floor_ms: float = 300.0) -> Scenario:
    """Tokyo -> Santiago with a 400 ms direct route and a 250 ms path via Los Angeles.

    Every other two-hop path is pushed to at least ``decoy_floor_ms`` and
    longer overlay paths stay above the optimum.
    """
    src, dst, best = TOKYO, SANTIAGO, LOS_ANGELES
    base = geographic_rtt_ms()
    base[src, dst] = base[dst, src] = 400.0
    _set_two_hop(base, src, best, dst, 250.0, 0.46)
    for v in range(len(SITES)):
        if v in (src, dst, best):
            continue
        total = base[src, v] + base[v, dst]
        if total < decoy_floor_ms:
            _set_two_hop(base, src, v, dst, decoy_floor_ms + (total % 50.0), base[src, v] / total)
    return Scenario(GeneratorSpec(base, rounds, jitter_pct), ring_topology(), (src, dst), best)


def runner_up_via(scenario: Scenario) -> int:
    src, dst = scenario.pair
    base = scenario.spec.base_rtt_ms
    vias = [v for v in range(scenario.spec.n_nodes) if v not in (src, dst, scenario.best_via)]
    return min(vias, key=lambda v: (base[src, v] + base[v, dst], v))


def japan_chile_shift(
    rounds: int = 400, shift_round: int = 100, jitter_pct: float = 2.0
) -> tuple[Scenario, int]:
    """Japan-Chile ring where, at ``shift_round``, the optimal relay and the
    runner-up swap their segment RTTs. Returns the scenario and the new optimal relay."""
    sc = japan_chile(rounds, jitter_pct)
    src, dst = sc.pair
    old, new = sc.best_via, runner_up_via(sc)
    b = sc.spec.base_rtt_ms
    swap = [
        (src, old, float(b[src, new])),
        (old, dst, float(b[new, dst])),
        (src, new, float(b[src, old])),
        (new, dst, float(b[old, dst])),
    ]
    spec = GeneratorSpec(b.copy(), rounds, jitter_pct, shifts=[Shift(shift_round, swap, symmetric=True)])
    return Scenario(spec, sc.topology, sc.pair, old), new


def random_family(
    seed: int,
    n: int = 20,
    rounds: int = 200,
    jitter_pct: float = 2.0,
    detour_prob: float = 0.6,
    detour_range: tuple[float, float] = (1.4, 2.4),
) -> GeneratorSpec:
    """Random planar overlay whose IP routes are sometimes badly inflated.

    Nodes sit uniformly in a 10 000 km square; every link gets a mild stretch
    and, with probability ``detour_prob``, a pathological detour factor. The
    defaults leave roughly half of the ordered pairs with a two-hop path
    faster than the direct route.
    """
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0.0, 10_000.0, size=(n, 2))
    dist = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)
    stretch = rng.uniform(1.1, 1.4, size=(n, n))
    detour = np.where(rng.random((n, n)) < detour_prob, rng.uniform(*detour_range, size=(n, n)), 1.0)
    factor = np.triu(stretch * detour, 1)
    factor = factor + factor.T
    base = 2.0 * dist / FIBRE_KM_PER_MS * factor + 5.0
    np.fill_diagonal(base, 0.0)
    return GeneratorSpec(base, rounds, jitter_pct)


def two_hop_better_share(base: np.ndarray) -> float:
    """Share of ordered pairs whose best two-hop base RTT beats the direct one."""
    n = base.shape[0]
    better = 0
    for s in range(n):
        for d in range(n):
            if s == d:
                continue
            via = [base[s, v] + base[v, d] for v in range(n) if v not in (s, d)]
            better += min(via) < base[s, d] * (1.0 - 1e-3)
    return better / (n * (n - 1))

"""Reinforcement-learning routing agent of a source proxy.

Each candidate path owns one neuron of a random neural network. Every round
the agent probes the K paths with the highest excitation probability,
installs the fastest one, and feeds each probe's reward (1 / RTD) back into
the network weights.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import (
    InvalidInputError,
    InvalidMeasurementError,
    InvalidRoundError,
    UninitializedThresholdError,
)
from .overlay import OverlayPath, ProbeRecord
from .rnn import DEFAULT_MAX_ITER, DEFAULT_TOL, RnnState, new_rnn, renormalize, solve_fixed_point

# q values closer than this are treated as tied so float noise cannot
# override the lowest-index rule.
TIE_DECIMALS = 12


@dataclass
class AgentConfig:
    beta: float = 0.8
    k_select: int = 2
    explore_prob: float = 0.05
    init_weight: float = 1.0
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.beta < 1.0:
            raise InvalidInputError(f"beta must lie in (0, 1), got {self.beta}")
        if self.k_select < 1:
            raise InvalidInputError("k_select must be >= 1")
        if not 0.0 <= self.explore_prob < 1.0:
            raise InvalidInputError("explore_prob must lie in [0, 1)")
        if self.init_weight <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise InvalidInputError("init_weight, tol and max_iter must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def reward_from_probe(probe: ProbeRecord) -> float:
    """Reward in 1/seconds: the inverse RTD, or 0 for a lost probe."""
    if probe.lost:
        return 0.0
    if probe.total_rtt is None or probe.total_rtt <= 0:
        raise InvalidMeasurementError(f"successful probe with RTD {probe.total_rtt}")
    return 1e6 / probe.total_rtt


def reinforce_weights(
    w_plus: np.ndarray, w_minus: np.ndarray, j: int, reward: float, threshold: float
) -> None:
    """In-place reward/punish step for neuron ``j`` (before renormalization).

    A reward at or above the threshold scales the excitation into ``j`` by
    ``reward / threshold`` and spreads the same increase as inhibition over
    the other neurons; a lower reward does the mirror image. Row ``i`` spreads
    over the ``N - 2`` neurons that are neither ``i`` nor ``j``, which keeps
    the diagonal at zero. With N = 2 there is nobody to spread to.
    """
    if reward >= threshold:
        _reinforce(w_plus, w_minus, j, reward / threshold - 1.0)
    else:
        _reinforce(w_minus, w_plus, j, 1.0 - reward / threshold)


@njit(cache=True)
def _reinforce(grow, spill, j, factor):
    n = grow.shape[0]
    for i in range(n):
        delta = factor * grow[i, j]
        grow[i, j] += delta
        if n > 2:
            share = delta / (n - 2)
            for k in range(n):
                if k != j and k != i:
                    spill[i, k] += share


@njit(cache=True)
def _rank(q, decimals):
    # stable sort on the rounded value keeps lower indices first on ties
    qr = np.empty_like(q)
    np.round(q, decimals, qr)
    return np.argsort(-qr, kind="mergesort")


@dataclass
class RoundOutcome:
    round_index: int
    probed: list[tuple[int, ProbeRecord]]
    rewards: list[tuple[int, float]]
    winner: int | None
    chosen_path: OverlayPath
    all_lost: bool = False
    threshold: float = 0.0

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "probed": [[j, p.to_dict()] for j, p in self.probed],
            "rewards": [[j, r] for j, r in self.rewards],
            "winner": self.winner,
            "chosen_path": self.chosen_path.to_list(),
            "all_lost": self.all_lost,
            "threshold": self.threshold,
        }


@dataclass
class RoutingAgent:
    paths: list[OverlayPath]
    config: AgentConfig = field(default_factory=AgentConfig)
    rnn: RnnState | None = None
    threshold: float = 0.0

    def __post_init__(self) -> None:
        self.paths = list(self.paths)
        n = len(self.paths)
        if n < 2:
            raise InvalidInputError("an agent needs at least two candidate paths")
        if len(set(self.paths)) != n:
            raise InvalidInputError("candidate paths must be distinct")
        if not 1 <= self.config.k_select <= n:
            raise InvalidInputError(f"k_select must lie in 1..{n}")
        if self.rnn is None:
            self.rnn = new_rnn(n, self.config.init_weight)
        elif self.rnn.n != n:
            raise InvalidInputError("RNN size does not match the candidate set")
        self.index_of = {p: i for i, p in enumerate(self.paths)}
        direct = [i for i, p in enumerate(self.paths) if p.is_direct]
        self.direct_index = direct[0] if direct else 0
        self.rng = np.random.default_rng(self.config.seed)
        self.solve()

    @property
    def n(self) -> int:
        return len(self.paths)

    def solve(self) -> np.ndarray:
        q, _ = solve_fixed_point(self.rnn, self.config.tol, self.config.max_iter)
        return q

    def select_paths(self) -> list[int]:
        """Indices of the K most excited neurons, lowest index first on ties.

        With probability ``explore_prob`` the K-th pick is swapped for a
        uniformly drawn path outside the top K.
        """
        k = self.config.k_select
        order = _rank(self.rnn.q, TIE_DECIMALS)
        chosen = [int(i) for i in order[:k]]
        # always consume one draw so the random stream does not depend on q
        explore = self.rng.random() < self.config.explore_prob
        if explore and k < self.n:
            rest = [int(i) for i in order[k:]]
            chosen[-1] = rest[int(self.rng.integers(len(rest)))]
        return chosen

    def apply_reinforcement(self, j: int, reward: float) -> np.ndarray:
        if self.threshold <= 0.0:
            raise UninitializedThresholdError("threshold has not been initialized")
        reinforce_weights(self.rnn.w_plus, self.rnn.w_minus, j, reward, self.threshold)
        renormalize(self.rnn)
        return self.solve()

    def update_threshold(self, reward: float) -> float:
        beta = self.config.beta
        self.threshold = beta * self.threshold + (1.0 - beta) * reward
        return self.threshold

    def learning_round(self, probes: Sequence[ProbeRecord], round_index: int = 0) -> RoundOutcome:
        if not probes:
            raise InvalidRoundError("a learning round needs at least one probe")
        probed = sorted(((self.index_of[p.path], p) for p in probes), key=lambda e: e[0])
        rewards = [(j, reward_from_probe(p)) for j, p in probed]
        alive = [(j, r) for (j, p), (_, r) in zip(probed, rewards) if not p.lost]
        if not alive:
            return RoundOutcome(
                round_index, probed, rewards, None, self.paths[self.direct_index],
                all_lost=True, threshold=self.threshold,
            )
        winner = max(alive, key=lambda e: (e[1], -e[0]))[0]
        for (j, probe), (_, reward) in zip(probed, rewards):
            if probe.lost:
                # lost probes punish (reward 0) but never move the threshold
                if self.threshold > 0.0:
                    self.apply_reinforcement(j, 0.0)
                continue
            if self.threshold <= 0.0:
                self.threshold = reward
            self.apply_reinforcement(j, reward)
            self.update_threshold(reward)
        return RoundOutcome(
            round_index, probed, rewards, winner, self.paths[winner], threshold=self.threshold
        )

    def checkpoint(self) -> str:
        return json.dumps(
            {
                "config": self.config.to_dict(),
                "paths": [p.to_list() for p in self.paths],
                "threshold": self.threshold,
                "rnn": self.rnn.to_dict(),
            }
        )

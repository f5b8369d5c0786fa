"""Random Neural Network: state, fixed-point solver and product-form solution.

One neuron per candidate path. ``w_plus[i, j]`` / ``w_minus[i, j]`` are the
rates at which neuron ``i`` sends excitatory / inhibitory spikes to neuron
``j``; ``r[i]`` is the firing rate of neuron ``i``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import (
    DegenerateDistributionError,
    DegenerateRowError,
    InvalidDimensionError,
    NonConvergenceError,
)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
Q_START = 0.5


@dataclass
class RnnState:
    n: int
    w_plus: np.ndarray
    w_minus: np.ndarray
    r: np.ndarray
    lambda_plus_ext: np.ndarray
    lambda_minus_ext: np.ndarray
    q: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n = self.n
        self.w_plus = np.array(self.w_plus, dtype=float).reshape(n, n)
        self.w_minus = np.array(self.w_minus, dtype=float).reshape(n, n)
        self.r = np.array(self.r, dtype=float).reshape(n)
        self.lambda_plus_ext = np.array(self.lambda_plus_ext, dtype=float).reshape(n)
        self.lambda_minus_ext = np.array(self.lambda_minus_ext, dtype=float).reshape(n)
        if self.q is None:
            self.q = np.full(n, Q_START)
        else:
            self.q = np.array(self.q, dtype=float).reshape(n)
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise InvalidDimensionError(f"n must be positive, got {self.n}")
        if (self.w_plus < 0).any() or (self.w_minus < 0).any():
            raise ValueError("weights must be non-negative")
        if np.diagonal(self.w_plus).any() or np.diagonal(self.w_minus).any():
            raise ValueError("weight matrices must have a zero diagonal")
        if (self.r <= 0).any():
            raise ValueError("firing rates must be positive")
        if (self.lambda_plus_ext < 0).any() or (self.lambda_minus_ext < 0).any():
            raise ValueError("exogenous rates must be non-negative")

    def copy(self) -> "RnnState":
        return RnnState(
            self.n,
            self.w_plus.copy(),
            self.w_minus.copy(),
            self.r.copy(),
            self.lambda_plus_ext.copy(),
            self.lambda_minus_ext.copy(),
            self.q.copy(),
        )

    def row_sums(self) -> np.ndarray:
        return self.w_plus.sum(axis=1) + self.w_minus.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "w_plus": self.w_plus.tolist(),
            "w_minus": self.w_minus.tolist(),
            "r": self.r.tolist(),
            "lambda_plus_ext": self.lambda_plus_ext.tolist(),
            "lambda_minus_ext": self.lambda_minus_ext.tolist(),
            "q": self.q.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RnnState":
        return cls(
            int(d["n"]),
            d["w_plus"],
            d["w_minus"],
            d["r"],
            d["lambda_plus_ext"],
            d["lambda_minus_ext"],
            d.get("q"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RnnState":
        return cls.from_dict(json.loads(text))


def new_rnn(
    n: int,
    init_weight: float,
    rates: Sequence[float] | None = None,
    *,
    lambda_plus: float = 1.0,
    lambda_minus: float = 0.0,
) -> RnnState:
    """Build a network with uniform off-diagonal weights.

    ``rates=None`` sets each firing rate to the neuron's total outgoing
    weight, which keeps the renormalization target consistent from the
    first update. Pass an explicit vector to override.
    """
    if n < 2:
        raise InvalidDimensionError(f"an RNN router needs n >= 2 neurons, got {n}")
    if init_weight <= 0:
        raise ValueError("init_weight must be positive")
    w = np.full((n, n), float(init_weight))
    np.fill_diagonal(w, 0.0)
    if rates is None:
        r = 2.0 * w.sum(axis=1)
    else:
        r = np.asarray(rates, dtype=float)
        if r.shape != (n,):
            raise InvalidDimensionError(f"expected {n} rates, got shape {r.shape}")
    return RnnState(
        n,
        w,
        w.copy(),
        r,
        np.full(n, float(lambda_plus)),
        np.full(n, float(lambda_minus)),
    )


def excitation_step(state: RnnState, q: np.ndarray) -> np.ndarray:
    """One application of the clamped map ``q -> min(1, lambda+ / (r + lambda-))``."""
    lam_plus = q @ state.w_plus + state.lambda_plus_ext
    lam_minus = q @ state.w_minus + state.lambda_minus_ext
    return np.minimum(1.0, lam_plus / (state.r + lam_minus))


def solve_fixed_point(
    state: RnnState, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> tuple[np.ndarray, int]:
    """Solve for the excitation probabilities by plain fixed-point iteration.

    Starts from q = 0.5 everywhere and stops once the max-norm change of an
    iteration drops below ``tol``. The result is cached on ``state.q``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q, iterations, residual = _iterate(
        state.w_plus,
        state.w_minus,
        state.r,
        state.lambda_plus_ext,
        state.lambda_minus_ext,
        float(tol),
        int(max_iter),
    )
    if residual < tol:
        state.q = q
        return q.copy(), iterations
    raise NonConvergenceError(q, residual, max_iter)


@njit(cache=True)
def _iterate(w_plus, w_minus, r, lam_p, lam_m, tol, max_iter):
    # Jacobi sweep in a fixed loop order so results are bit-reproducible.
    n = r.shape[0]
    q = np.full(n, Q_START)
    nxt = np.empty(n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        residual = 0.0
        for i in range(n):
            num = lam_p[i]
            den = r[i] + lam_m[i]
            for j in range(n):
                num += q[j] * w_plus[j, i]
                den += q[j] * w_minus[j, i]
            v = num / den
            if v > 1.0:
                v = 1.0
            nxt[i] = v
            d = abs(v - q[i])
            if d > residual:
                residual = d
        q, nxt = nxt, q
        if residual < tol:
            return q, it, residual
    return q, max_iter, residual


def stationary_probability(state: RnnState, k) -> np.ndarray | float:
    """Product-form probability of the potential vector ``k``.

    ``k`` may be a single length-n vector or an array whose last axis has
    length n; the result then has the leading shape.
    """
    q = state.q
    if (q >= 1.0).any():
        raise DegenerateDistributionError(
            "some neuron is saturated (q = 1); the stationary distribution does not exist"
        )
    k = np.asarray(k)
    if k.shape[-1] != state.n:
        raise InvalidDimensionError(f"k must have last dimension {state.n}")
    if (k < 0).any():
        raise ValueError("neuron potentials are non-negative integers")
    p = np.prod((1.0 - q) * q ** k, axis=-1)
    return float(p) if p.ndim == 0 else p


def renormalize(state: RnnState) -> RnnState:
    """Scale each row of both weight matrices back to its firing rate ``r[i]``."""
    bad = _renormalize_rows(state.w_plus, state.w_minus, state.r)
    if bad >= 0:
        raise DegenerateRowError(f"row {bad} has no outgoing weight")
    return state


@njit(cache=True)
def _renormalize_rows(w_plus, w_minus, r):
    n = r.shape[0]
    for i in range(n):
        total = 0.0
        for k in range(n):
            total += w_plus[i, k] + w_minus[i, k]
        if total <= 0.0:
            return i
    for i in range(n):
        total = 0.0
        for k in range(n):
            total += w_plus[i, k] + w_minus[i, k]
        scale = r[i] / total
        for k in range(n):
            w_plus[i, k] *= scale
            w_minus[i, k] *= scale
    return -1

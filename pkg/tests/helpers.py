"""Small trace builders shared by the tests."""

import numpy as np

from smartoverlay.trace import LinkTrace


def constant_trace(base_ms, rounds: int) -> LinkTrace:
    """Noise-free trace repeating ``base_ms`` (n x n, ms) every round."""
    base = np.asarray(base_ms, dtype=float)
    rtt = np.rint(np.broadcast_to(base * 1000, (rounds, *base.shape))).astype(np.int64)
    rtt[:, np.arange(base.shape[0]), np.arange(base.shape[0])] = 0
    return LinkTrace(rtt, np.zeros(rtt.shape, dtype=bool))


def random_trace(rng: np.random.Generator, n: int, rounds: int, loss: float = 0.0,
                 low: int = 1_000, high: int = 200_000) -> LinkTrace:
    rtt = rng.integers(low, high, size=(rounds, n, n))
    lost = rng.random((rounds, n, n)) < loss
    diag = np.arange(n)
    lost[:, diag, diag] = False
    rtt[:, diag, diag] = 0
    rtt[lost] = 0
    return LinkTrace(rtt, lost)


def hand_step(w_plus, w_minus, r, j, reward, threshold):
    """Reward/punish one neuron and renormalize, written out on plain lists.

    Independent of the package code: nested lists, explicit loops.
    """
    n = len(r)
    wp = [row[:] for row in w_plus]
    wm = [row[:] for row in w_minus]
    nu = reward / threshold
    for i in range(n):
        if reward >= threshold:
            delta = (nu - 1.0) * wp[i][j]
            wp[i][j] = wp[i][j] + delta
            spill_into = wm
        else:
            delta = (1.0 - nu) * wm[i][j]
            wm[i][j] = wm[i][j] + delta
            spill_into = wp
        if n > 2:
            for k in range(n):
                if k != j and k != i:
                    spill_into[i][k] = spill_into[i][k] + delta / (n - 2)
    for i in range(n):
        total = 0.0
        for k in range(n):
            total += wp[i][k] + wm[i][k]
        for k in range(n):
            wp[i][k] = wp[i][k] * (r[i] / total)
            wm[i][k] = wm[i][k] * (r[i] / total)
    return wp, wm

"""Exact distribution of the successful completion time.

``q(T|x)`` is the probability that an episode started in ``x`` reaches the
goal set at exactly time ``T``. Because every transition takes at least
one time unit, layer ``T`` depends only on layers ``T - tau`` with
``tau >= 1`` and the table is filled forward in ``T`` with no iteration to
convergence. This makes it an independent check on the fixed-point solver.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.sparse as sp

from .chain import Chain, check_chain

HORIZON_CAP = 10 ** 6


@dataclass(frozen=True)
class QTable:
    """``values[T, x] = q(T|x)`` for ``T = 0..t_max``."""

    t_max: int
    values: np.ndarray

    def __call__(self, t: int, x: int) -> float:
        if t < 0 or t > self.t_max:
            return 0.0
        return float(self.values[t, x])


def _split_by_time(chain: Chain) -> list[tuple[int, sp.csr_matrix]]:
    return [(int(tau), chain.matrix(np.where(chain.time == tau, chain.prob, 0.0)))
            for tau in np.unique(chain.time)]


def q_layers(chain: Chain, t_max: int, target: np.ndarray | None = None) -> Iterator[np.ndarray]:
    """Yield ``q(T|.)`` for ``T = 0..t_max``, keeping only the last ``max(tau)`` layers.

    ``target`` is the indicator of the absorbing set to hit (default: goal set).
    """
    if t_max < 0:
        raise ValueError(f"t_max must be >= 0, got {t_max}")
    blocks = _split_by_time(chain)
    depth = max((tau for tau, _ in blocks), default=1)
    first = (chain.goal_mask if target is None else target).astype(np.float64)
    history: deque[np.ndarray] = deque(maxlen=depth)
    history.append(first)
    yield first
    zero = np.zeros(chain.num_states)
    for t in range(1, t_max + 1):
        layer = zero.copy()
        for tau, M in blocks:
            if tau <= len(history):
                layer += M @ history[-tau]
        history.append(layer)
        yield layer


def q_distribution(chain: Chain, t_max: int) -> QTable:
    check_chain(chain)
    return QTable(t_max, np.array(list(q_layers(chain, t_max))))


def truncated_moments(q: QTable, x: int) -> tuple[float, float, float]:
    """``(sum q, sum T q, sum T^2 q)`` over ``T <= t_max``, before dividing by ``s(x)``."""
    col = q.values[:, x]
    t = np.arange(q.t_max + 1, dtype=np.float64)
    return float(col.sum()), float((t * col).sum()), float((t * t * col).sum())


def choose_horizon(chain: Chain, eps: float, states=None, start: int = 64,
                   cap: int = HORIZON_CAP) -> tuple[int, float]:
    """Smallest doubled horizon at which the unabsorbed mass is below ``eps``.

    The unabsorbed mass ``1 - sum_{T<=t} P(absorbed at T)`` over both goal
    and fail sets bounds the success mass defect ``s(x) - sum_{T<=t} q(T|x)``
    from above without needing ``s``. Doubling starts at ``start`` and stops
    at ``cap``; returns ``(t_max, worst unabsorbed mass over states)``.
    """
    check_chain(chain)
    idx = np.arange(chain.num_states) if states is None else np.atleast_1d(states)
    checkpoint = max(1, start)
    absorbed = np.zeros(len(idx))
    for t, layer in enumerate(q_layers(chain, cap, chain.terminal_mask)):
        absorbed += layer[idx]
        if t == checkpoint or t == cap:
            defect = float(np.max(1.0 - absorbed))
            if defect < eps or t == cap:
                return t, defect
            checkpoint = min(2 * checkpoint, cap)
    raise AssertionError("unreachable")

"""Monte Carlo estimates of success probability and conditional duration.

Episodes are simulated in fixed blocks of :data:`BLOCK` episodes. Block ``k``
draws its uniforms from a Philox stream keyed on ``(seed, k)``, one vector of
``BLOCK`` uniforms per step, and episode ``i`` always reads column
``i % BLOCK`` of block ``i // BLOCK``. An episode's trajectory therefore
depends only on ``(seed, i)``, not on ``n_episodes`` or on the order in
which blocks are run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import Chain, check_chain

BLOCK = 4096
DEFAULT_STEP_CAP = 10 ** 6


@dataclass(frozen=True)
class Episode:
    states: tuple[int, ...]
    total_time: int
    successful: bool
    truncated: bool

    @property
    def num_steps(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True)
class McEstimate:
    """Empirical success rate and duration statistics from one start state.

    Truncated episodes count as failures in ``s_hat`` and are never used
    for the duration statistics. ``d_hat`` is the population standard
    deviation (divides by ``n_success``).
    """

    start: int
    n_total: int
    n_success: int
    n_truncated: int
    s_hat: float
    a_hat: float | None
    d_hat: float | None
    se_s: float
    se_a: float | None
    seed: int

    def summary(self) -> str:
        def fmt(v):
            return "NA" if v is None else repr(v)
        return "\n".join(f"{k}={fmt(getattr(self, k))}" for k in (
            "start", "seed", "n_total", "n_success", "n_truncated",
            "s_hat", "se_s", "a_hat", "se_a", "d_hat"))


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


class _Sampler:
    """Vectorized successor sampling over the chain's CSR layout."""

    def __init__(self, chain: Chain):
        self.indptr = chain.indptr
        self.dst = chain.dst
        self.time = chain.time
        self.terminal = chain.terminal_mask
        self.goal = chain.goal_mask
        cum = np.zeros(chain.num_edges)
        for x in range(chain.num_states):
            lo, hi = self.indptr[x], self.indptr[x + 1]
            if hi > lo:
                cum[lo:hi] = np.cumsum(chain.prob[lo:hi])
                cum[hi - 1] = 1.0
        self.cum = cum
        degree = np.diff(self.indptr)
        self.max_degree = int(degree.max()) if len(degree) else 0

    def pick(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Edge index chosen for states ``x`` with uniforms ``u``."""
        start = self.indptr[x]
        last = self.indptr[x + 1] - 1
        edge = start.copy()
        for k in range(self.max_degree - 1):
            probe = np.minimum(start + k, last)
            edge += (start + k < last) & (u >= self.cum[probe])
        return edge


def simulate_episode(chain: Chain, start: int, rng: np.random.Generator,
                     step_cap: int = DEFAULT_STEP_CAP) -> Episode:
    """Run one episode from ``start`` until a terminal state or ``step_cap`` steps."""
    if not 0 <= start < chain.num_states:
        raise ValueError(f"start state {start} out of range")
    if step_cap < 1:
        raise ValueError("step_cap must be >= 1")
    sampler = _Sampler(chain)
    states = [start]
    total = 0
    x = start
    while not sampler.terminal[x] and len(states) <= step_cap:
        e = int(sampler.pick(np.array([x]), np.array([rng.random()]))[0])
        x = int(sampler.dst[e])
        total += int(sampler.time[e])
        states.append(x)
    return Episode(tuple(states), total, bool(sampler.goal[x]), not sampler.terminal[x])


def _run_block(sampler: _Sampler, start: int, seed: int, block: int, count: int,
               step_cap: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate the first ``count`` episodes of a block.

    Returns per-episode ``(total_time, successful, truncated)``.
    """
    rng = block_rng(seed, block)
    x = np.full(count, start, dtype=np.int64)
    total = np.zeros(count, dtype=np.int64)
    alive = np.flatnonzero(~sampler.terminal[x])
    steps = 0
    while alive.size and steps < step_cap:
        u = rng.random(BLOCK)[alive]
        e = sampler.pick(x[alive], u)
        x[alive] = sampler.dst[e]
        total[alive] += sampler.time[e]
        steps += 1
        alive = alive[~sampler.terminal[x[alive]]]
    truncated = ~sampler.terminal[x]
    return total, sampler.goal[x], truncated


def estimate(chain: Chain, start: int, n_episodes: int, seed: int = 0,
             step_cap: int = DEFAULT_STEP_CAP) -> McEstimate:
    """Estimate ``s``, ``A`` and ``D`` at ``start`` from ``n_episodes`` simulated episodes."""
    check_chain(chain)
    if not 0 <= start < chain.num_states:
        raise ValueError(f"start state {start} out of range")
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if step_cap < 1:
        raise ValueError("step_cap must be >= 1")
    sampler = _Sampler(chain)
    times, n_success, n_truncated = [], 0, 0
    for block in range(-(-n_episodes // BLOCK)):
        count = min(BLOCK, n_episodes - block * BLOCK)
        total, success, truncated = _run_block(sampler, start, seed, block, count, step_cap)
        times.append(total[success])
        n_success += int(success.sum())
        n_truncated += int(truncated.sum())
    t = np.concatenate(times).astype(np.float64)

    s_hat = n_success / n_episodes
    se_s = math.sqrt(s_hat * (1.0 - s_hat) / n_episodes)
    a_hat = d_hat = se_a = None
    if n_success >= 2:
        a_hat = math.fsum(t) / n_success
        d_hat = math.sqrt(math.fsum((t - a_hat) ** 2) / n_success)
        se_a = d_hat / math.sqrt(n_success)
    return McEstimate(start, n_episodes, n_success, n_truncated, s_hat, a_hat, d_hat,
                      se_s, se_a, seed)

"""Episodic MDPs, fixed policies, and the policy-induced Markov chain.

A :class:`Chain` is the working form used by every solver in this package:
a sparse list of edges ``(x, y, p, tau)`` where ``tau`` is the integer time
charged for the transition, together with the goal and fail terminal sets.
Terminal states carry no outgoing edges; the episode simply stops there.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp

ROW_SUM_ATOL = 1e-9
DROP_PROB = 1e-15


class ModelError(ValueError):
    """Raised when an MDP, policy or chain is malformed."""


class Edge(NamedTuple):
    src: int
    dst: int
    prob: float
    time: int


class Diagnostic(NamedTuple):
    kind: str
    message: str
    state: int | None = None
    fatal: bool = True

    def __str__(self) -> str:
        return self.message


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mdp:
    """Finite episodic MDP with goal and fail terminal sets.

    ``transitions`` holds records ``(x, a, y, P(x, a, y))``.
    """

    num_states: int
    num_actions: int
    transitions: tuple[tuple[int, int, int, float], ...]
    goal_states: frozenset[int]
    fail_states: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(
            (int(x), int(a), int(y), float(p)) for x, a, y, p in self.transitions))
        object.__setattr__(self, "goal_states", frozenset(int(g) for g in self.goal_states))
        object.__setattr__(self, "fail_states", frozenset(int(f) for f in self.fail_states))
        if self.num_states < 1 or self.num_actions < 1:
            raise ModelError("num_states and num_actions must be positive")
        if self.goal_states & self.fail_states:
            raise ModelError(f"states {sorted(self.goal_states & self.fail_states)} "
                             "are both goal and fail")
        for s in self.goal_states | self.fail_states:
            if not 0 <= s < self.num_states:
                raise ModelError(f"terminal state {s} out of range")
        sums: dict[tuple[int, int], float] = {}
        for x, a, y, p in self.transitions:
            if not (0 <= x < self.num_states and 0 <= y < self.num_states):
                raise ModelError(f"transition ({x}, {a}, {y}) has a state out of range")
            if not 0 <= a < self.num_actions:
                raise ModelError(f"transition ({x}, {a}, {y}) has an action out of range")
            if not 0.0 <= p <= 1.0:
                raise ModelError(f"transition ({x}, {a}, {y}) has probability {p}")
            sums[x, a] = sums.get((x, a), 0.0) + p
        for (x, a), total in sums.items():
            if x not in self.terminal_states and abs(total - 1.0) > ROW_SUM_ATOL:
                raise ModelError(f"P({x}, {a}, .) sums to {total!r}, expected 1")

    @property
    def terminal_states(self) -> frozenset[int]:
        return self.goal_states | self.fail_states


@dataclass(frozen=True)
class Policy:
    """Stochastic policy given as records ``(x, a, pi(x, a))``."""

    entries: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(
            (int(x), int(a), float(w)) for x, a, w in self.entries))
        for x, a, w in self.entries:
            if not 0.0 <= w <= 1.0:
                raise ModelError(f"policy weight pi({x}, {a}) = {w} outside [0, 1]")

    @classmethod
    def deterministic(cls, actions: Mapping[int, int]) -> "Policy":
        return cls(tuple((x, a, 1.0) for x, a in sorted(actions.items())))


@dataclass(frozen=True, eq=False)
class Chain:
    """Policy-induced Markov chain with integer transition times.

    Edge arrays are sorted by ``(src, dst)`` and read-only. Construction
    does not enforce the chain invariants; use :func:`validate_chain`.
    """

    num_states: int
    src: np.ndarray
    dst: np.ndarray
    prob: np.ndarray
    time: np.ndarray
    goal_states: frozenset[int]
    fail_states: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.int64).ravel()
        dst = np.asarray(self.dst, dtype=np.int64).ravel()
        prob = np.asarray(self.prob, dtype=np.float64).ravel()
        time = np.asarray(self.time, dtype=np.int64).ravel()
        if not (len(src) == len(dst) == len(prob) == len(time)):
            raise ModelError("edge arrays must have equal length")
        order = np.lexsort((dst, src))
        for name, arr in (("src", src), ("dst", dst), ("prob", prob), ("time", time)):
            object.__setattr__(self, name, _readonly(arr[order].copy()))
        object.__setattr__(self, "num_states", int(self.num_states))
        object.__setattr__(self, "goal_states", frozenset(int(g) for g in self.goal_states))
        object.__setattr__(self, "fail_states", frozenset(int(f) for f in self.fail_states))

    @classmethod
    def from_edges(cls, num_states: int, edges: Iterable[tuple[int, int, float, int]],
                   goal_states: Iterable[int], fail_states: Iterable[int] = ()) -> "Chain":
        edges = list(edges)
        cols = list(zip(*edges)) if edges else [(), (), (), ()]
        return cls(num_states, np.array(cols[0], dtype=np.int64),
                   np.array(cols[1], dtype=np.int64), np.array(cols[2], dtype=np.float64),
                   np.array(cols[3], dtype=np.int64), frozenset(goal_states),
                   frozenset(fail_states))

    @property
    def edges(self) -> list[Edge]:
        return [Edge(int(x), int(y), float(p), int(t))
                for x, y, p, t in zip(self.src, self.dst, self.prob, self.time)]

    @property
    def num_edges(self) -> int:
        return len(self.src)

    @property
    def terminal_states(self) -> frozenset[int]:
        return self.goal_states | self.fail_states

    @cached_property
    def goal_mask(self) -> np.ndarray:
        m = np.zeros(self.num_states, dtype=bool)
        m[sorted(self.goal_states)] = True
        return _readonly(m)

    @cached_property
    def terminal_mask(self) -> np.ndarray:
        m = np.zeros(self.num_states, dtype=bool)
        m[sorted(self.terminal_states)] = True
        return _readonly(m)

    @cached_property
    def indptr(self) -> np.ndarray:
        """CSR row pointer over the sorted edge arrays."""
        counts = np.bincount(self.src, minlength=self.num_states)
        return _readonly(np.concatenate(([0], np.cumsum(counts))).astype(np.int64))

    def matrix(self, weights: np.ndarray | None = None) -> sp.csr_matrix:
        """Sparse ``N x N`` matrix with the given per-edge values (default: probabilities)."""
        data = self.prob if weights is None else np.asarray(weights, dtype=np.float64)
        return sp.csr_matrix((data, self.dst, self.indptr),
                             shape=(self.num_states, self.num_states))

    def same_as(self, other: "Chain") -> bool:
        """Exact structural equality (edge set, probabilities, times, terminals)."""
        return (self.num_states == other.num_states
                and self.goal_states == other.goal_states
                and self.fail_states == other.fail_states
                and np.array_equal(self.src, other.src)
                and np.array_equal(self.dst, other.dst)
                and np.array_equal(self.prob, other.prob)
                and np.array_equal(self.time, other.time))

    def permuted(self, perm: np.ndarray) -> "Chain":
        """Relabel state ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return Chain(self.num_states, perm[self.src], perm[self.dst], self.prob, self.time,
                     frozenset(int(perm[g]) for g in self.goal_states),
                     frozenset(int(perm[f]) for f in self.fail_states))


def induce_chain(mdp: Mdp, policy: Policy, times: Mapping[tuple[int, int], int]) -> Chain:
    """Average the MDP kernel over the policy: ``p(x, y) = sum_a pi(x, a) P(x, a, y)``.

    Edges with induced probability below 1e-15 are dropped and the row is
    renormalized. Policy rows at terminal states are ignored.
    """
    terminals = mdp.terminal_states
    kernel: dict[tuple[int, int], list[tuple[int, float]]] = {}
    for x, a, y, p in mdp.transitions:
        kernel.setdefault((x, a), []).append((y, p))

    weights: dict[int, list[tuple[int, float]]] = {}
    for x, a, w in policy.entries:
        if not 0 <= x < mdp.num_states:
            raise ModelError(f"policy refers to unknown state {x}")
        if not 0 <= a < mdp.num_actions:
            raise ModelError(f"policy refers to unknown action {a} at state {x}")
        if x not in terminals:
            weights.setdefault(x, []).append((a, w))

    edges = []
    for x in range(mdp.num_states):
        if x in terminals:
            continue
        row_weights = weights.get(x, [])
        total = sum(w for _, w in row_weights)
        if abs(total - 1.0) > ROW_SUM_ATOL:
            raise ModelError(f"policy weights at state {x} sum to {total!r}, expected 1")
        row: dict[int, float] = {}
        for a, w in row_weights:
            if w == 0.0:
                continue
            if (x, a) not in kernel:
                raise ModelError(f"policy selects action {a} at state {x}, "
                                 "which has no transitions")
            for y, p in kernel[x, a]:
                row[y] = row.get(y, 0.0) + w * p
        kept = {y: p for y, p in row.items() if p >= DROP_PROB}
        norm = sum(kept.values())
        for y in sorted(kept):
            if (x, y) not in times:
                raise ModelError(f"no transition time given for edge ({x}, {y})")
            edges.append((x, y, kept[y] / norm, int(times[x, y])))
    return Chain.from_edges(mdp.num_states, edges, mdp.goal_states, mdp.fail_states)


def validate_chain(chain: Chain) -> list[Diagnostic]:
    """Check the chain invariants; an empty list means the chain is valid.

    Fatal diagnostics flag broken invariants. A non-fatal ``absorption``
    diagnostic is emitted for non-terminal states that cannot reach any
    terminal state.
    """
    out: list[Diagnostic] = []
    n = chain.num_states
    if n < 1:
        return [Diagnostic("range", "chain has no states")]
    for s in sorted(chain.goal_states | chain.fail_states):
        if not 0 <= s < n:
            out.append(Diagnostic("range", f"terminal state {s} out of range", s))
    for s in sorted(chain.goal_states & chain.fail_states):
        out.append(Diagnostic("terminal", f"state {s} is both goal and fail", s))

    in_range = (chain.src >= 0) & (chain.src < n) & (chain.dst >= 0) & (chain.dst < n)
    for e in np.flatnonzero(~in_range):
        out.append(Diagnostic("range", f"edge ({chain.src[e]}, {chain.dst[e]}) "
                              "has a state out of range", int(chain.src[e])))
    if not in_range.all():
        return out

    for e in np.flatnonzero((chain.prob <= 0) | (chain.prob > 1)):
        out.append(Diagnostic("probability", f"edge ({chain.src[e]}, {chain.dst[e]}) has "
                              f"probability {chain.prob[e]!r}", int(chain.src[e])))
    for e in np.flatnonzero(chain.time < 1):
        out.append(Diagnostic("time", f"edge ({chain.src[e]}, {chain.dst[e]}) has "
                              f"non-positive time {chain.time[e]}", int(chain.src[e])))
    dup = (np.diff(chain.src) == 0) & (np.diff(chain.dst) == 0)
    for e in np.flatnonzero(dup):
        out.append(Diagnostic("duplicate", f"more than one edge ({chain.src[e]}, "
                              f"{chain.dst[e]})", int(chain.src[e])))

    row_sums = np.bincount(chain.src, weights=chain.prob, minlength=n)
    terminal = chain.terminal_mask
    for x in range(n):
        if terminal[x]:
            if chain.indptr[x + 1] > chain.indptr[x]:
                out.append(Diagnostic("terminal", f"terminal state {x} has outgoing edges", x))
        elif abs(row_sums[x] - 1.0) > ROW_SUM_ATOL:
            defect = 1.0 - row_sums[x]
            out.append(Diagnostic("row-sum", f"row-sum defect {defect:.6g} at state {x}", x))

    for x in np.flatnonzero(~_reaches_terminal(chain)):
        out.append(Diagnostic("absorption", f"absorption not guaranteed: state {x} "
                              "cannot reach a terminal state", int(x), fatal=False))
    return out


def _reaches_terminal(chain: Chain) -> np.ndarray:
    """Backward breadth-first search from the terminal set."""
    n = chain.num_states
    preds: list[list[int]] = [[] for _ in range(n)]
    for x, y in zip(chain.src.tolist(), chain.dst.tolist()):
        preds[y].append(x)
    seen = chain.terminal_mask.copy()
    queue = deque(np.flatnonzero(seen).tolist())
    while queue:
        y = queue.popleft()
        for x in preds[y]:
            if not seen[x]:
                seen[x] = True
                queue.append(x)
    return seen


def check_chain(chain: Chain) -> list[Diagnostic]:
    """Raise :class:`ModelError` on fatal diagnostics; return the warnings."""
    diags = validate_chain(chain)
    fatal = [d for d in diags if d.fatal]
    if fatal:
        raise ModelError("invalid chain: " + "; ".join(map(str, fatal)))
    return diags

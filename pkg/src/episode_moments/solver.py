"""Success probability and conditional duration moments by fixed-point sweeps.

For every state ``x`` of an episodic chain the solver computes

* ``s(x)``: probability that the episode ends in the goal set,
* ``A(x)``: mean duration of the episode given that it succeeds,
* ``B(x)``: second moment of that duration,
* ``D(x) = sqrt(B(x) - A(x)**2)``: its standard deviation.

The three quantities are iterated one after the other, each to its own
convergence: first ``s``, then ``A`` using ``s``, then ``B`` using ``s``
and ``A``. Quantities conditioned on success are left undefined (NaN)
where ``s(x) <= S_FLOOR``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .chain import Chain, check_chain

S_FLOOR = 1e-12
RADICAND_ATOL = 1e-9


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SolveConfig:
    """Stopping rule for the sweeps.

    A phase stops once the sup-norm change between sweeps is at most
    ``tolerance`` or after ``max_iterations`` sweeps. If ``iterations`` is
    set, every phase runs exactly that many sweeps instead (stopping early
    only at an exact fixed point) and is never flagged as unconverged.
    ``in_place`` switches from Jacobi to Gauss-Seidel sweeps.
    """

    tolerance: float = 1e-12
    max_iterations: int = 10_000
    iterations: int | None = None
    in_place: bool = False

    def __post_init__(self):
        if not self.tolerance >= 0:
            raise ValueError(f"tolerance must be >= 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class Phase:
    values: np.ndarray
    iterations: int
    residual: float
    converged: bool


@dataclass(frozen=True)
class SolveResult:
    s: np.ndarray
    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    iterations: dict[str, int]
    residual: dict[str, float]
    converged: dict[str, bool]

    @property
    def variance(self) -> np.ndarray:
        """``B - A**2`` (clamped at zero), NaN where undefined."""
        return self.d ** 2

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.a)

    @property
    def all_converged(self) -> bool:
        return all(self.converged.values())


def _sweep(W: sp.csr_matrix, c: np.ndarray, x0: np.ndarray, active: np.ndarray,
           config: SolveConfig, name: str, bound_error: bool = False) -> Phase:
    """Iterate ``x <- W x + c`` on the ``active`` rows, holding the rest fixed.

    With ``bound_error`` the phase additionally waits until the estimated
    distance to the fixed point, ``change * rho / (1 - rho)`` with ``rho``
    the ratio of successive changes, is within tolerance.
    """
    x = x0.copy()
    if not active.any():
        return Phase(x, 0, 0.0, True)
    rows = np.flatnonzero(active)
    W_act = W[rows]
    c_act = c[rows]
    fixed = config.iterations is not None
    limit = config.iterations if fixed else config.max_iterations
    tol = 0.0 if fixed else config.tolerance
    if config.in_place:
        step = _gauss_seidel_step(W_act, c_act, rows)
    residual = previous = np.inf
    settled = False
    it = 0
    while it < limit:
        it += 1
        if config.in_place:
            residual = step(x)
        else:
            new = W_act @ x + c_act
            residual = float(np.max(np.abs(new - x[rows])))
            x[rows] = new
        settled = residual <= tol
        if settled and bound_error and residual > 0:
            rho = residual / previous
            settled = rho < 1 and residual * rho <= tol * (1 - rho)
        if settled:
            break
        previous = residual
    converged = fixed or settled
    if not converged:
        warnings.warn(f"{name} phase did not converge in {it} sweeps "
                      f"(residual {residual:.3g})", ConvergenceWarning, stacklevel=3)
    return Phase(x, it, residual, converged)


def _gauss_seidel_step(W_act: sp.csr_matrix, c_act: np.ndarray, rows: np.ndarray):
    indptr = W_act.indptr.tolist()
    cols = W_act.indices.tolist()
    vals = W_act.data.tolist()
    consts = c_act.tolist()
    targets = rows.tolist()

    def step(x: np.ndarray) -> float:
        xs = x.tolist()
        residual = 0.0
        for k, r in enumerate(targets):
            acc = consts[k]
            for j in range(indptr[k], indptr[k + 1]):
                acc += vals[j] * xs[cols[j]]
            residual = max(residual, abs(acc - xs[r]))
            xs[r] = acc
        x[:] = xs
        return residual

    return step


def solve_success(chain: Chain, config: SolveConfig = SolveConfig()) -> Phase:
    """Probability of ending in the goal set, starting from zero on non-terminals.

    From this start the sweeps are monotone non-decreasing and bounded by 1.
    Errors in ``s`` are amplified by the division in the conditional
    moments, so this phase also bounds its estimated remaining error.
    """
    s0 = chain.goal_mask.astype(np.float64)
    return _sweep(chain.matrix(), np.zeros(chain.num_states), s0,
                  ~chain.terminal_mask, config, "success", bound_error=True)


def _conditional_weights(chain: Chain, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge weights of the chain conditioned on success.

    ``w(x, y) = p(x, y) s(y) / sum_y' p(x, y') s(y')``. At a fixed point of
    ``s`` the denominator equals ``s(x)``; normalizing by the row sum keeps
    rows exactly stochastic even where ``s`` carries iteration error.
    Every state with ``s > 0`` takes part, including those below
    ``S_FLOOR``: dropping them would bias the moments of their
    predecessors. Also returns the mask of rows for which the moments are
    iterated.
    """
    reachable = s > 0
    active = reachable & ~chain.terminal_mask
    w = chain.prob * np.where(reachable[chain.dst], s[chain.dst], 0.0)
    w = np.where(active[chain.src], w, 0.0)
    norm = np.bincount(chain.src, weights=w, minlength=chain.num_states)
    safe = np.where(norm > 0, norm, 1.0)
    return w / safe[chain.src], active & (norm > 0)


def _undefined_where(values: np.ndarray, s: np.ndarray) -> np.ndarray:
    out = values.copy()
    out[~(s > S_FLOOR)] = np.nan
    return out


def _mean_phase(chain: Chain, s: np.ndarray, config: SolveConfig) -> Phase:
    w, active = _conditional_weights(chain, s)
    W = chain.matrix(w)
    c = np.bincount(chain.src, weights=w * chain.time, minlength=chain.num_states)
    return _sweep(W, c, np.zeros(chain.num_states), active, config, "mean")


def solve_mean(chain: Chain, s: np.ndarray, config: SolveConfig = SolveConfig()) -> Phase:
    """Mean episode duration given success.

    Fixed point of ``A(x) = 1/s(x) sum_y p(x, y) s(y) (A(y) + tau(x, y))``,
    zero on goal states, NaN where ``s(x) <= S_FLOOR``.
    """
    s = np.asarray(s, dtype=np.float64)
    phase = _mean_phase(chain, s, config)
    return Phase(_undefined_where(phase.values, s), phase.iterations, phase.residual,
                 phase.converged)


def solve_second_moment(chain: Chain, s: np.ndarray, a: np.ndarray,
                        config: SolveConfig = SolveConfig()) -> Phase:
    """Second moment of the duration given success.

    Fixed point of
    ``B(x) = 1/s(x) sum_y p(x, y) s(y) (B(y) + 2 tau A(y) + tau**2)``.
    Entries of ``a`` left undefined below ``S_FLOOR`` are recomputed, since
    states with tiny but positive ``s`` still feed their predecessors.
    """
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if np.isnan(a[s > 0]).any():
        a = np.where(np.isnan(a), _mean_phase(chain, s, config).values, a)
    a = np.nan_to_num(a, nan=0.0)
    w, active = _conditional_weights(chain, s)
    W = chain.matrix(w)
    tau = chain.time.astype(np.float64)
    c = np.bincount(chain.src, weights=w * (2.0 * tau * a[chain.dst] + tau ** 2),
                    minlength=chain.num_states)
    phase = _sweep(W, c, np.zeros(chain.num_states), active, config, "second moment")
    return Phase(_undefined_where(phase.values, s), phase.iterations, phase.residual,
                 phase.converged)


def std_dev(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``sqrt(B - A**2)``, NaN where either input is NaN.

    Radicands in ``[-1e-9, 0)`` are roundoff and clamp to zero; anything more
    negative raises ``ValueError``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    radicand = b - a ** 2
    with np.errstate(invalid="ignore"):
        bad = radicand < -RADICAND_ATOL
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"negative variance {radicand[i]!r} at state {i}: "
                         f"A={a[i]!r}, B={b[i]!r}")
    return np.sqrt(np.maximum(radicand, 0.0))


def solve_all(chain: Chain, config: SolveConfig = SolveConfig()) -> SolveResult:
    """Run the success, mean and second-moment phases in order."""
    check_chain(chain)
    ps = solve_success(chain, config)
    pa = solve_mean(chain, ps.values, config)
    pb = solve_second_moment(chain, ps.values, pa.values, config)
    phases = {"s": ps, "A": pa, "B": pb}
    return SolveResult(
        s=ps.values, a=pa.values, b=pb.values, d=std_dev(pa.values, pb.values),
        iterations={k: p.iterations for k, p in phases.items()},
        residual={k: p.residual for k, p in phases.items()},
        converged={k: p.converged for k, p in phases.items()},
    )

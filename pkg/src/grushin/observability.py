"""Per-mode observability cost of the adjoint heat equation.

The cost at horizon T is the largest value of

    ||g(T)||^2 / integral_0^T integral_a^b g(t,x)^2 dx dt

over nonzero initial data g(0) = g0. Two representations are used:

* gramian_apply works at grid level: forward Crank-Nicolson sweep, strip
  restriction, then the exact transpose of the solution map (reverse sweep
  accumulating the strip loads with trapezoid weights). Its quadratic form
  equals the time-trapezoid strip energy of the forward trajectory to
  rounding, which is what the tests pin down.

* observability_cost evaluates the Rayleigh quotient on the span of the
  lowest eigenvectors of the mode operator where the time integrals are
  available in closed form (the semigroup acts diagonally). The quotient of
  the ground eigenvector then reproduces the closed-form lower bound exactly,
  and since generalized power iteration only increases the quotient, the
  reported cost dominates the lower bound by construction instead of by luck
  with time-stepping phase errors. High eigenvectors decay too fast to carry
  the supremum, so the truncation only makes the estimate conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ProblemConfig, TimeGrid, parallel_map, strip_mask
from .evolution import CNPropagator
from .bounds import rho_functional
from .spectral import ModeOperator, assemble_mode_operator, first_k_eigenpairs, ground_eigenpair

__all__ = [
    "ObservabilityReport",
    "gramian_apply",
    "observability_cost",
    "uniform_sweep",
    "sweep_summary",
]

GRAMIAN_FLOOR = 1e-280  # below this relative observed energy the mode is reported unobservable
MAX_POWER_ITERATIONS = 500
REDUCED_MODES = 40


@dataclass(frozen=True)
class ObservabilityReport:
    n: int
    T: float
    cost: float
    lower_bound: float
    iterations: int
    converged: bool


def gramian_apply(
    op: ModeOperator, g0: np.ndarray, tg: TimeGrid, strip: np.ndarray
) -> np.ndarray:
    """Apply the observation Gramian G = sum_k w_k dt P^k M P^k (trapezoid w).

    Forward sweep stores the trajectory, reverse sweep applies the transpose;
    <G g0, g0> equals the trapezoid-in-time strip energy of the trajectory.
    """
    g0 = np.asarray(g0, dtype=float)
    strip = np.asarray(strip, dtype=bool)
    if g0.shape != (op.dim,) or strip.shape != (op.dim,):
        raise ValueError("g0 and strip must live on the interior nodes")
    prop = CNPropagator(op, tg.dt)
    K = tg.steps
    states = np.empty((K + 1, op.dim))
    states[0] = g0
    for k in range(K):
        states[k + 1] = prop.apply_p(states[k])
    r = 0.5 * tg.dt * np.where(strip, states[K], 0.0)
    for k in range(K - 1, -1, -1):
        w = 0.5 if k == 0 else 1.0
        load = np.where(strip, states[k], 0.0)
        r = prop.apply_p(r) + w * tg.dt * load
    return r


def observability_cost(
    op: ModeOperator, tg: TimeGrid, cfg: ProblemConfig, tol: float = 1e-8
) -> ObservabilityReport:
    """Largest Rayleigh quotient of the pencil (S_T* S_T, G) on the low subspace."""
    if tol <= 0:
        raise ValueError("require tol > 0")
    if not math.isclose(tg.T, cfg.T, rel_tol=1e-12):
        raise ValueError(f"time grid horizon {tg.T} differs from cfg.T {cfg.T}")
    T = cfg.T
    pair = ground_eigenpair(op)
    lower_bound = rho_functional(pair, cfg).cost_lower

    k = min(REDUCED_MODES, op.dim - 1)
    eig = first_k_eigenpairs(op, k)
    lams = np.array([lam for lam, _ in eig])
    vecs = np.column_stack([v for _, v in eig])
    # splice in the polished ground pair: it is the test function behind
    # rho_functional, so the start quotient below and lower_bound evaluate
    # the same number and cost >= lower_bound survives rounding
    lams[0] = pair.lam
    vecs[:, 0] = pair.v
    grid = op.grid
    mask = strip_mask(grid, cfg.a, cfg.b)
    vs = vecs[mask, :]
    m_red = grid.h * (vs.T @ vs)
    lam_sum = lams[:, None] + lams[None, :]
    with np.errstate(under="ignore"):
        g_red = m_red * (1.0 - np.exp(-lam_sum * T)) / lam_sum
        d_diag = np.exp(-2.0 * lams * T)

    # start at the ground eigenvector: its quotient is the closed-form bound
    c = grid.h * (vecs.T @ pair.v)
    energy0 = float(c @ (g_red @ c))
    if energy0 < GRAMIAN_FLOOR * float(c @ c):
        return ObservabilityReport(
            n=op.n, T=T, cost=float("inf"), lower_bound=lower_bound,
            iterations=0, converged=False,
        )
    start = float((d_diag * c) @ c) / energy0
    if math.isfinite(lower_bound) and start < lower_bound * (1.0 - 1e-6):
        raise RuntimeError(
            "start quotient fell below its certified lower bound; "
            "reduced pencil inconsistent"
        )
    # same quotient twice: the closed form is the sharper rounding of it
    best = max(start, lower_bound)
    iterations = 0
    converged = False

    if float(d_diag.max()) == 0.0:
        # every retained decay factor underflowed: the quotient vanishes
        # identically on the subspace and the zero estimate is exact
        converged = True
    else:
        # the reduced Gramian is a Gram matrix of near-dependent decaying
        # modes, so condition numbers beyond 1/eps are routine; whiten it
        # through its eigendecomposition (dropping machine-noise directions)
        # and run the G-normalized power iteration as a euclidean one there.
        evals, evecs = np.linalg.eigh(g_red)
        keep = evals > np.finfo(float).eps * max(evals[-1], 0.0) * evals.size
        if np.any(keep):
            q = evecs[:, keep]
            root = np.sqrt(evals[keep])
            pencil = ((q.T * d_diag) @ q) / np.outer(root, root)
            z = root * (q.T @ c)
            prev = best
            for iterations in range(1, MAX_POWER_ITERATIONS + 1):
                z = pencil @ z
                norm = float(np.linalg.norm(z))
                if norm == 0.0:
                    break
                z = z / norm
                current = float((pencil @ z) @ z)
                best = max(best, current)
                if abs(current - prev) <= tol * max(abs(current), 1e-300):
                    converged = True
                    break
                prev = current

    return ObservabilityReport(
        n=op.n, T=T, cost=best, lower_bound=lower_bound,
        iterations=iterations, converged=converged,
    )


def uniform_sweep(
    cfg: ProblemConfig,
    n_list: list[int],
    tol: float = 1e-8,
    threads: int | None = None,
) -> list[ObservabilityReport]:
    """Observability cost for each mode in n_list (data-parallel)."""
    ns = list(n_list)
    if not ns:
        return []
    grid = cfg.grid()
    tg = cfg.time_grid()

    def solve(n: int) -> ObservabilityReport:
        op = assemble_mode_operator(n, cfg.gamma, grid)
        return observability_cost(op, tg, cfg, tol=tol)

    return parallel_map(solve, ns, threads=threads)


def sweep_summary(cfg: ProblemConfig, reports: list[ObservabilityReport]) -> dict:
    """Sweep-level digest: supremum cost, its mode, lower-bound envelope."""
    if not reports:
        return {
            "gamma": cfg.gamma,
            "T": cfg.T,
            "sup_cost": None,
            "argmax_n": None,
            "lower_envelope": [],
        }
    costs = [r.cost for r in reports]
    idx = int(np.argmax(costs))
    envelope = []
    running = -math.inf
    for r in reports:
        running = max(running, r.lower_bound)
        envelope.append([r.n, running])
    return {
        "gamma": cfg.gamma,
        "T": cfg.T,
        "sup_cost": costs[idx],
        "argmax_n": reports[idx].n,
        "lower_envelope": envelope,
    }

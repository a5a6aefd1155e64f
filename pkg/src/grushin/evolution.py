"""Crank-Nicolson time integration of the mode equations and 2-D synthesis.

One propagator object per (operator, dt) pair holds the Cholesky factorization
of I + (dt/2) A. The controlled scheme applies half of each source sample
before the propagator and half after:

    f_{j+1} = P (f_j + (dt/2) u_j) + (dt/2) u_{j+1},   P = (I+cA)^{-1}(I-cA)

which unrolls to f_K = P^K f0 + sum_k w_k dt P^{K-k} u_k with trapezoid
weights w. This is a second-order CN-type rule (it coincides with classical
Crank-Nicolson for a source constant over the step) whose input-to-state map
is exactly the transpose of sampling the adjoint trajectory; the control
module relies on that exact transposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse import diags, identity, kron
from scipy.sparse.linalg import splu

from .core import Grid1D, ProblemConfig, TimeGrid, strip_mask
from .spectral import ModeOperator, assemble_mode_operator, ground_eigenpair

__all__ = [
    "ModeTrajectory",
    "Field2D",
    "CNPropagator",
    "step_crank_nicolson",
    "solve_adjoint_mode",
    "solve_controlled_mode",
    "synthesize_2d",
    "solve_2d_direct",
    "y_nodes",
    "field_l2_norm",
    "mode_projection",
    "required_y_modes",
]

MAX_ORACLE_UNKNOWNS = 16_000  # the 2-D direct solver is a test oracle only


@dataclass(frozen=True)
class ModeTrajectory:
    """States (and optionally the applied control) of one y-mode over time."""

    n: int
    times: TimeGrid
    states: np.ndarray
    control: np.ndarray | None = None


@dataclass(frozen=True)
class Field2D:
    """Full-rectangle field samples (time x x-nodes x y-nodes), boundaries included."""

    values: np.ndarray
    y_modes: int


class CNPropagator:
    """Factorized Crank-Nicolson propagator for one mode operator and step."""

    def __init__(self, op: ModeOperator, dt: float):
        if dt <= 0:
            raise ValueError("require dt > 0")
        self.op = op
        self.dt = float(dt)
        self.c = 0.5 * self.dt
        ab = np.zeros((2, op.dim))
        ab[1] = 1.0 + self.c * op.diag
        ab[0, 1:] = self.c * op.offdiag
        self._factor = cholesky_banded(ab)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """(I + cA)^{-1} rhs."""
        return cho_solve_banded((self._factor, False), rhs)

    def apply_p(self, v: np.ndarray) -> np.ndarray:
        """(I + cA)^{-1} (I - cA) v; non-expansive since A is positive semidefinite."""
        return self.solve(v - self.c * self.op.apply(v))


def step_crank_nicolson(
    op: ModeOperator, state: np.ndarray, dt: float, source: np.ndarray
) -> np.ndarray:
    """One theta=1/2 step of state' = -A state + source (source held constant)."""
    prop = CNPropagator(op, dt)
    state = np.asarray(state, dtype=float)
    source = np.asarray(source, dtype=float)
    return prop.solve(state - prop.c * op.apply(state) + dt * source)


def solve_adjoint_mode(op: ModeOperator, g0: np.ndarray, tg: TimeGrid) -> ModeTrajectory:
    """Uncontrolled mode trajectory; the h-norm is nonincreasing step by step."""
    g0 = np.asarray(g0, dtype=float)
    if g0.shape != (op.dim,):
        raise ValueError(f"initial datum shape {g0.shape} != ({op.dim},)")
    prop = CNPropagator(op, tg.dt)
    states = np.empty((tg.steps + 1, op.dim))
    states[0] = g0
    for k in range(tg.steps):
        states[k + 1] = prop.apply_p(states[k])
    states.setflags(write=False)
    return ModeTrajectory(n=op.n, times=tg, states=states, control=None)


def solve_controlled_mode(
    op: ModeOperator, f0: np.ndarray, control: np.ndarray, tg: TimeGrid
) -> ModeTrajectory:
    """Mode trajectory driven by a sampled source (already strip-masked)."""
    f0 = np.asarray(f0, dtype=float)
    control = np.asarray(control, dtype=float)
    if f0.shape != (op.dim,):
        raise ValueError(f"initial datum shape {f0.shape} != ({op.dim},)")
    if control.shape != (tg.steps + 1, op.dim):
        raise ValueError(
            f"control shape {control.shape} != ({tg.steps + 1}, {op.dim})"
        )
    prop = CNPropagator(op, tg.dt)
    c = prop.c
    states = np.empty((tg.steps + 1, op.dim))
    states[0] = f0
    f = f0.copy()
    for k in range(tg.steps):
        f = prop.apply_p(f + c * control[k]) + c * control[k + 1]
        states[k + 1] = f
    states.setflags(write=False)
    return ModeTrajectory(n=op.n, times=tg, states=states, control=control)


def synthesize_2d(modes: list[ModeTrajectory], ny: int) -> Field2D:
    """Sine synthesis g(t,x,y) = sum_n g_n(t,x) sqrt(2) sin(n pi y).

    With ny interior y-nodes the discrete sine system is exactly orthogonal
    for frequencies n <= ny, so the 2-D h-norm satisfies Parseval against the
    mode norms to rounding.
    """
    if not modes:
        raise ValueError("require at least one mode trajectory")
    if ny < max(m.n for m in modes):
        raise ValueError("require ny >= the largest mode index")
    ns = [m.n for m in modes]
    if len(set(ns)) != len(ns):
        raise ValueError("mode indices must be distinct")
    tg = modes[0].times
    shape = modes[0].states.shape
    for m in modes[1:]:
        if m.times != tg or m.states.shape != shape:
            raise ValueError("mode trajectories must share time grid and space shape")
    steps1, nx = shape
    y = np.arange(1, ny + 1) / (ny + 1.0)
    values = np.zeros((steps1, nx + 2, ny + 2))
    for m in modes:
        phi = np.sqrt(2.0) * np.sin(m.n * np.pi * y)
        values[:, 1:-1, 1:-1] += m.states[:, :, None] * phi[None, None, :]
    values.setflags(write=False)
    return Field2D(values=values, y_modes=max(ns))


def y_nodes(field: Field2D) -> np.ndarray:
    ny = field.values.shape[2] - 2
    return np.linspace(0.0, 1.0, ny + 2)


def field_l2_norm(field: Field2D, grid: Grid1D) -> np.ndarray:
    """Interior h-weighted L2 norm of the field at each time sample."""
    ny = field.values.shape[2] - 2
    hy = 1.0 / (ny + 1.0)
    inner = field.values[:, 1:-1, 1:-1]
    return np.sqrt(grid.h * hy * np.sum(inner * inner, axis=(1, 2)))


def mode_projection(field: Field2D, n: int) -> np.ndarray:
    """Coefficient g_n(t, x) = integral of the field against sqrt(2) sin(n pi y)."""
    ny = field.values.shape[2] - 2
    y = np.arange(1, ny + 1) / (ny + 1.0)
    phi = np.sqrt(2.0) * np.sin(n * np.pi * y)
    hy = 1.0 / (ny + 1.0)
    return hy * np.einsum("txy,y->tx", field.values[:, 1:-1, 1:-1], phi)


def solve_2d_direct(
    cfg: ProblemConfig,
    f0_2d: np.ndarray,
    control_2d: np.ndarray | None = None,
) -> Field2D:
    """Oracle: CN on the full 2-D five-point operator, independent of any
    mode decomposition. Small problems only."""
    grid = cfg.grid()
    nx = grid.nx
    f0_2d = np.asarray(f0_2d, dtype=float)
    if f0_2d.ndim != 2 or f0_2d.shape[0] != nx:
        raise ValueError(f"initial field shape {f0_2d.shape} incompatible with nx={nx}")
    ny = f0_2d.shape[1]
    if nx * ny > MAX_ORACLE_UNKNOWNS:
        raise ValueError(
            f"2D oracle limited to nx*ny <= {MAX_ORACLE_UNKNOWNS} unknowns, "
            f"got {nx * ny}"
        )
    tg = cfg.time_grid()
    if control_2d is None:
        control_2d = np.zeros((tg.steps + 1, nx, ny))
    control_2d = np.asarray(control_2d, dtype=float)
    if control_2d.shape != (tg.steps + 1, nx, ny):
        raise ValueError(
            f"control shape {control_2d.shape} != ({tg.steps + 1}, {nx}, {ny})"
        )
    # sharp strip indicator in x (closed at nodes exactly on a or b)
    mask = strip_mask(grid, cfg.a, cfg.b).astype(float)
    control_2d = control_2d * mask[None, :, None]

    hx2 = grid.h**2
    hy = 1.0 / (ny + 1.0)
    dxx = diags(
        [np.full(nx - 1, -1.0 / hx2), np.full(nx, 2.0 / hx2), np.full(nx - 1, -1.0 / hx2)],
        offsets=(-1, 0, 1),
    )
    dyy = diags(
        [
            np.full(ny - 1, -1.0 / hy**2),
            np.full(ny, 2.0 / hy**2),
            np.full(ny - 1, -1.0 / hy**2),
        ],
        offsets=(-1, 0, 1),
    )
    weight = diags(np.abs(grid.interior) ** (2.0 * cfg.gamma))
    # y-major blocks with x contiguous: flat[j * nx + i] = f[i, j]
    a2 = kron(identity(ny), dxx) + kron(dyy, weight)
    c = 0.5 * tg.dt
    lhs = (identity(nx * ny) + c * a2).tocsc()
    rhs_op = (identity(nx * ny) - c * a2).tocsr()
    lu = splu(lhs)

    values = np.zeros((tg.steps + 1, nx + 2, ny + 2))
    z = f0_2d.ravel(order="F")
    values[0, 1:-1, 1:-1] = f0_2d
    for k in range(tg.steps):
        u_k = control_2d[k].ravel(order="F")
        u_k1 = control_2d[k + 1].ravel(order="F")
        z = lu.solve(rhs_op @ (z + c * u_k)) + c * u_k1
        values[k + 1, 1:-1, 1:-1] = z.reshape((nx, ny), order="F")
    values.setflags(write=False)
    return Field2D(values=values, y_modes=ny)


def required_y_modes(
    gamma: float, T: float, grid: Grid1D, tol: float = 1e-10
) -> int:
    """Smallest N_y with the spectral tail sum_{n > N_y} e^{-2 lambda_n T} < tol.

    The tail is bounded by a geometric series anchored at lambda_{N+1} with
    ratio e^{-2 (lambda_{N+2} - lambda_{N+1}) T} (eigenvalue gaps grow with n).
    """
    if T <= 0:
        raise ValueError("require T > 0")
    lams: dict[int, float] = {}

    def lam(n: int) -> float:
        if n not in lams:
            lams[n] = ground_eigenpair(assemble_mode_operator(n, gamma, grid)).lam
        return lams[n]

    for n_cut in range(1, 513):
        head = np.exp(-2.0 * lam(n_cut + 1) * T)
        gap = lam(n_cut + 2) - lam(n_cut + 1)
        if gap <= 0:
            continue
        ratio = np.exp(-2.0 * gap * T)
        if head / (1.0 - ratio) < tol:
            return n_cut
    raise RuntimeError("spectral tail did not reach the tolerance by N_y = 512")

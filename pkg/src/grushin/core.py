"""Shared geometry, quadrature and configuration for the Grushin solvers.

Everything here is pure: grids and configs are frozen dataclasses, and the
few numerical helpers (trapezoid norm, Richardson extrapolation) allocate
fresh arrays.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ProblemConfig",
    "Grid1D",
    "TimeGrid",
    "make_grid",
    "make_time_grid",
    "default_primes",
    "l2_norm",
    "trapezoid",
    "strip_mask",
    "masked_mass",
    "richardson_pair",
    "thread_count",
    "parallel_map",
]


def default_primes(a: float, b: float) -> tuple[float, float]:
    """Default inner strip (a', b'): the middle third of (a, b)."""
    return (2.0 * a + b) / 3.0, (a + 2.0 * b) / 3.0


@dataclass(frozen=True)
class ProblemConfig:
    """Problem data for the degenerate heat equation on (-1,1) x (0,1).

    gamma is the degeneracy exponent of the diffusion coefficient |x|^{2 gamma},
    (a, b) the x-extent of the control strip, (a', b') a strictly interior
    sub-strip used by cutoffs and weight bumps, T the horizon, nx the number
    of interior x nodes (odd, so a node sits at x = 0), nt the number of time
    steps, and n_max the largest Fourier mode index swept.
    """

    gamma: float
    a: float = 0.3
    b: float = 0.8
    a_prime: float | None = None
    b_prime: float | None = None
    T: float = 1.0
    nx: int = 1001
    nt: int = 1000
    n_max: int = 64

    def __post_init__(self):
        if self.a_prime is None or self.b_prime is None:
            ap, bp = default_primes(self.a, self.b)
            if self.a_prime is None:
                object.__setattr__(self, "a_prime", ap)
            if self.b_prime is None:
                object.__setattr__(self, "b_prime", bp)
        if not self.gamma > 0:
            raise ValueError("require gamma > 0")
        if not self.a < self.b:
            raise ValueError("require a < b")
        if not (0.0 < self.a < self.a_prime < self.b_prime < self.b < 1.0):
            raise ValueError(
                "require 0 < a < a_prime < b_prime < b < 1, got "
                f"a={self.a}, a_prime={self.a_prime}, "
                f"b_prime={self.b_prime}, b={self.b}"
            )
        if not self.T > 0:
            raise ValueError("require T > 0")
        if self.nx < 3 or self.nx % 2 == 0:
            raise ValueError("require nx odd and >= 3")
        if self.nt < 1:
            raise ValueError("require nt >= 1")
        if self.n_max < 1:
            raise ValueError("require n_max >= 1")

    def grid(self) -> "Grid1D":
        return make_grid(self.nx)

    def time_grid(self) -> "TimeGrid":
        return make_time_grid(self.nt, self.T)


@dataclass(frozen=True)
class Grid1D:
    """Uniform symmetric grid on [-1, 1] including both endpoints."""

    nodes: np.ndarray
    h: float

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def nx(self) -> int:
        """Number of interior nodes."""
        return self.nodes.size - 2


def make_grid(nx: int) -> Grid1D:
    """Grid with nx interior nodes; nx must be odd so x = 0 is a node."""
    if nx < 3:
        raise ValueError("require nx >= 3")
    if nx % 2 == 0:
        raise ValueError("grid must place a node at x=0")
    nodes = np.linspace(-1.0, 1.0, nx + 2)
    # antisymmetrize so x[i] == -x[mirror(i)] bitwise and the center is exactly 0
    nodes = 0.5 * (nodes - nodes[::-1])
    h = 2.0 / (nx + 1)
    nodes.setflags(write=False)
    return Grid1D(nodes=nodes, h=h)


@dataclass(frozen=True)
class TimeGrid:
    steps: int
    dt: float
    T: float

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)


def make_time_grid(steps: int, T: float) -> TimeGrid:
    if steps < 1:
        raise ValueError("require steps >= 1")
    if not T > 0:
        raise ValueError("require T > 0")
    return TimeGrid(steps=steps, dt=T / steps, T=T)


def l2_norm(values: np.ndarray, grid: Grid1D) -> float:
    """Trapezoid L2 norm on [-1, 1].

    Accepts values on all nodes, or on interior nodes only (extended by the
    Dirichlet zeros, where the trapezoid reduces to h * sum of squares).
    """
    v = np.asarray(values, dtype=float)
    if v.shape[-1] == grid.nodes.size:
        sq = v * v
        integral = grid.h * (sq[..., 1:-1].sum(axis=-1) + 0.5 * (sq[..., 0] + sq[..., -1]))
    elif v.shape[-1] == grid.nx:
        integral = grid.h * (v * v).sum(axis=-1)
    else:
        raise ValueError(
            f"values length {v.shape[-1]} matches neither the {grid.nodes.size} "
            f"grid nodes nor the {grid.nx} interior nodes"
        )
    return float(np.sqrt(integral)) if np.ndim(integral) == 0 else np.sqrt(integral)


def trapezoid(values: np.ndarray, grid: Grid1D) -> float:
    """Trapezoid integral over [-1, 1]; exact for piecewise-linear nodal data.

    Same length convention as l2_norm: full-grid values, or interior values
    extended by the Dirichlet zeros.
    """
    v = np.asarray(values, dtype=float)
    if v.shape[-1] == grid.nodes.size:
        integral = grid.h * (v[..., 1:-1].sum(axis=-1) + 0.5 * (v[..., 0] + v[..., -1]))
    elif v.shape[-1] == grid.nx:
        integral = grid.h * v.sum(axis=-1)
    else:
        raise ValueError(
            f"values length {v.shape[-1]} matches neither the {grid.nodes.size} "
            f"grid nodes nor the {grid.nx} interior nodes"
        )
    return float(integral) if np.ndim(integral) == 0 else integral


def strip_mask(grid: Grid1D, a: float, b: float) -> np.ndarray:
    """Boolean indicator of the closed strip a <= x <= b on interior nodes.

    Nodes landing exactly on a or b are included; every consumer of strip
    geometry goes through this one function so all quadratures agree.
    """
    x = grid.interior
    return (x >= a) & (x <= b)


def masked_mass(v: np.ndarray, grid: Grid1D, a: float, b: float) -> float:
    """h-weighted squared mass of an interior field on the closed strip."""
    m = strip_mask(grid, a, b)
    v = np.asarray(v, dtype=float)
    return float(grid.h * np.sum(v[m] * v[m]))


def richardson_pair(coarse: float, fine: float, order: int) -> float:
    """Richardson extrapolation of a pair computed at h and h/2."""
    if not isinstance(order, (int, np.integer)) or order < 1:
        raise ValueError("require integer order >= 1")
    w = 2.0**order
    return (w * fine - coarse) / (w - 1.0)


def thread_count(requested: int | None = None) -> int:
    """Worker count: explicit argument, else GRUSHIN_THREADS, else 1."""
    if requested is not None and requested >= 1:
        return int(requested)
    env = os.environ.get("GRUSHIN_THREADS", "")
    try:
        n = int(env)
    except ValueError:
        n = 0
    return n if n >= 1 else 1


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Order-preserving map over independent work items.

    The eigenvalue and banded solvers release the GIL, so threads give real
    parallelism; with one worker this degrades to a plain list comprehension.
    """
    n = thread_count(threads)
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as ex:
        return list(ex.map(fn, items))

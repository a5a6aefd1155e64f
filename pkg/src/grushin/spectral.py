"""Mode operators -d2/dx2 + (n*pi)^2 |x|^{2 gamma} on (-1, 1) and their spectra.

The ground eigenvalue is found by bisection on the Sturm sequence of the
symmetric tridiagonal discretization (certified bracket), the eigenvector by
inverse iteration. Evenness of the potential is exploited: the ground state is
computed on the half grid [0, 1] and mirrored, which makes the evenness
invariant exact instead of approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .core import Grid1D, l2_norm, parallel_map

__all__ = [
    "ModeOperator",
    "EigenPair",
    "ScalingFit",
    "assemble_mode_operator",
    "sturm_count",
    "certified_bracket",
    "ground_eigenpair",
    "first_k_eigenpairs",
    "required_nx",
    "eigen_scaling_sweep",
]

# resolution floor: nodes that must span one ground-state width (n*pi)^(-1/(1+gamma))
NODES_PER_WIDTH = 20


@dataclass(frozen=True)
class ModeOperator:
    """Symmetric tridiagonal discretization of -d2/dx2 + (n*pi)^2 |x|^{2g}."""

    n: int
    gamma: float
    diag: np.ndarray
    offdiag: np.ndarray
    grid: Grid1D

    @property
    def dim(self) -> int:
        return self.diag.size

    @property
    def potential(self) -> np.ndarray:
        return self.diag - 2.0 / self.grid.h**2

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Matrix-vector product on interior vectors (Dirichlet rows eliminated)."""
        v = np.asarray(v, dtype=float)
        out = self.diag * v
        out[..., 1:] += self.offdiag * v[..., :-1]
        out[..., :-1] += self.offdiag * v[..., 1:]
        return out

    def rayleigh(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.apply(v)) / float(v @ v)


@dataclass(frozen=True)
class EigenPair:
    """Ground eigenpair; lam is the smallest eigenvalue, v its positive eigenvector.

    bracket_lo/bracket_hi is a certified Sturm-count enclosure of lam for the
    discrete matrix: no eigenvalue lies below bracket_lo and at least one lies
    below bracket_hi.
    """

    n: int
    gamma: float
    lam: float
    v: np.ndarray
    residual: float
    bracket_lo: float
    bracket_hi: float


@dataclass(frozen=True)
class ScalingFit:
    gamma: float
    samples: list
    exponent_hat: float
    c_lower_hat: float
    c_upper_hat: float


def assemble_mode_operator(
    n: int, gamma: float, grid: Grid1D, coupling: float = 1.0
) -> ModeOperator:
    """Dirichlet finite-difference matrix of the mode operator.

    coupling scales the potential term; coupling=0 gives the plain Dirichlet
    Laplacian (used by oracle tests).
    """
    if n < 1 or int(n) != n:
        raise ValueError("require n a positive integer")
    if gamma <= 0:
        raise ValueError("require gamma > 0")
    if coupling < 0:
        raise ValueError("require coupling >= 0")
    x = grid.interior
    h2 = grid.h**2
    pot = coupling * (n * np.pi) ** 2 * np.abs(x) ** (2.0 * gamma)
    diag = 2.0 / h2 + pot
    offdiag = np.full(x.size - 1, -1.0 / h2)
    diag.setflags(write=False)
    offdiag.setflags(write=False)
    return ModeOperator(n=int(n), gamma=float(gamma), diag=diag, offdiag=offdiag, grid=grid)


def sturm_count(diag: np.ndarray, offdiag: np.ndarray, x: float) -> int:
    """Number of eigenvalues of the tridiagonal matrix strictly below x.

    Standard Sturm-sequence pivot recurrence with the LAPACK-style pivot floor
    so an exact zero pivot is treated as a tiny negative one.
    """
    d = np.asarray(diag, dtype=float).tolist()
    e2 = (np.asarray(offdiag, dtype=float) ** 2).tolist()
    pivmin = np.finfo(float).tiny * max(1.0, max(e2, default=1.0))
    count = 0
    q = d[0] - x
    if q <= 0.0:
        if q == 0.0:
            q = -pivmin
        count += 1
    for i in range(1, len(d)):
        q = d[i] - x - e2[i - 1] / q
        if q <= 0.0:
            if q == 0.0:
                q = -pivmin
            count += 1
    return count


def certified_bracket(
    op: ModeOperator, estimate: float, rel_width: float
) -> tuple[float, float]:
    """Shrink a Sturm-certified bracket around the smallest eigenvalue.

    Returns (lo, hi) with count(lo) == 0 and count(hi) >= 1 and
    hi - lo <= rel_width * hi.
    """
    scale = max(abs(estimate), 1.0)
    delta = 1e-8 * scale
    lo, hi = estimate - delta, estimate + delta
    for _ in range(80):
        if sturm_count(op.diag, op.offdiag, lo) == 0:
            break
        lo -= delta
        delta *= 4.0
    else:
        raise RuntimeError("failed to certify a lower eigenvalue bound")
    delta = 1e-8 * scale
    for _ in range(80):
        if sturm_count(op.diag, op.offdiag, hi) >= 1:
            break
        hi += delta
        delta *= 4.0
    else:
        raise RuntimeError("failed to certify an upper eigenvalue bound")
    floor = 8.0 * np.finfo(float).eps * max(abs(lo), abs(hi))
    for _ in range(200):
        if hi - lo <= max(rel_width * abs(hi), floor):
            break
        mid = 0.5 * (lo + hi)
        if sturm_count(op.diag, op.offdiag, mid) == 0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _thomas_positive(diag: np.ndarray, offdiag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve the tridiagonal system for an M-matrix with positive right side.

    All intermediate quantities are sums of positives, so the solution stays
    strictly positive in floating point; this is what guarantees the sign of
    the inverse-iteration output.
    """
    n = diag.size
    dp = np.empty(n)
    bp = np.empty(n)
    dp[0] = diag[0]
    bp[0] = rhs[0]
    for i in range(1, n):
        m = offdiag[i - 1] / dp[i - 1]
        dp[i] = diag[i] - m * offdiag[i - 1]
        if dp[i] <= 0.0:
            raise RuntimeError("shifted matrix lost positive definiteness")
        bp[i] = rhs[i] - m * bp[i - 1]
    v = np.empty(n)
    v[n - 1] = bp[n - 1] / dp[n - 1]
    for i in range(n - 2, -1, -1):
        v[i] = (bp[i] - offdiag[i] * v[i + 1]) / dp[i]
    return v


def _half_problem(op: ModeOperator) -> tuple[np.ndarray, np.ndarray, int]:
    """Even-sector reduction to [0, 1] with the symmetrizing sqrt(2) scaling."""
    c = (op.dim - 1) // 2
    half_diag = op.diag[c:].copy()
    half_off = op.offdiag[c:].copy()
    half_off[0] *= math.sqrt(2.0)
    return half_diag, half_off, c


def ground_eigenpair(op: ModeOperator, tol: float = 1e-10) -> EigenPair:
    """Smallest eigenpair: Sturm bisection bracket + positive inverse iteration."""
    if tol <= 0:
        raise ValueError("require tol > 0")
    half_d, half_e, c = _half_problem(op)
    lam0, w = eigh_tridiagonal(half_d, half_e, select="i", select_range=(0, 0))
    lam0 = float(lam0[0])
    u0 = np.abs(w[:, 0])

    v = None
    for attempt in range(3):
        shift = lam0 - max(10.0 ** (-8 + 2 * attempt) * abs(lam0), 1e-10)
        try:
            u = _thomas_positive(half_d - shift, half_e, np.maximum(u0, 1e-300))
        except RuntimeError:
            continue
        # undo the symmetrizing scaling: physical center value is sqrt(2) * u[0]
        full = np.empty(op.dim)
        full[c] = math.sqrt(2.0) * u[0]
        full[c + 1 :] = u[1:]
        full[:c] = u[1:][::-1]
        full /= l2_norm(full, op.grid)
        if np.all(full > 0.0):
            v = full
            break
    if v is None:
        raise RuntimeError(
            "inverse iteration failed to produce a positive ground state "
            "(near-degenerate discretization)"
        )

    lam = op.rayleigh(v)
    residual = l2_norm(op.apply(v) - lam * v, op.grid)
    lo, hi = certified_bracket(op, lam, tol)
    slack = 1e-9 * max(abs(lam), 1.0)
    if not (lo - slack <= lam <= hi + slack):
        raise RuntimeError("Rayleigh quotient escaped its certified bracket")
    return EigenPair(
        n=op.n,
        gamma=op.gamma,
        lam=lam,
        v=v,
        residual=residual,
        bracket_lo=lo,
        bracket_hi=hi,
    )


def first_k_eigenpairs(
    op: ModeOperator, k: int, tol: float = 1e-10
) -> list[tuple[float, np.ndarray]]:
    """k smallest eigenpairs, h-orthonormal, eigenvalues strictly increasing."""
    if k < 1:
        raise ValueError("require k >= 1")
    if k > 50:
        raise ValueError("at most the first 50 eigenpairs are supported")
    if k >= op.dim:
        raise ValueError(f"require k < matrix dimension {op.dim}")
    lams, vecs = eigh_tridiagonal(
        op.diag, op.offdiag, select="i", select_range=(0, k - 1)
    )
    h = op.grid.h
    vecs = vecs / math.sqrt(h)  # euclid-orthonormal -> h-orthonormal
    if np.any(np.diff(lams) <= 0):
        raise RuntimeError("eigenvalues not strictly increasing (lost simplicity)")
    gram = h * (vecs.T @ vecs)
    if np.max(np.abs(gram - np.eye(k))) > 1e-8:
        # modified Gram-Schmidt in the h-inner product, then recheck
        for j in range(k):
            for i in range(j):
                vecs[:, j] -= h * (vecs[:, i] @ vecs[:, j]) * vecs[:, i]
            vecs[:, j] /= math.sqrt(h) * np.linalg.norm(vecs[:, j])
        gram = h * (vecs.T @ vecs)
        if np.max(np.abs(gram - np.eye(k))) > 1e-8:
            raise RuntimeError("failed to restore orthogonality of eigenvectors")
    out = []
    for j in range(k):
        vj = vecs[:, j].copy()
        if vj[np.argmax(np.abs(vj))] < 0:
            vj = -vj
        out.append((float(lams[j]), vj))
    return out


def ground_state_width(n: int, gamma: float) -> float:
    """Boundary-layer width of the ground state under the (n*pi)^(1/(1+g)) rescaling."""
    return float((n * np.pi) ** (-1.0 / (1.0 + gamma)))


def required_nx(n: int, gamma: float) -> int:
    """Smallest odd interior count resolving the ground-state width of mode n."""
    width = ground_state_width(n, gamma)
    nx = math.ceil(2.0 * NODES_PER_WIDTH / width - 1.0)
    if nx % 2 == 0:
        nx += 1
    return max(nx, 3)


def eigen_scaling_sweep(
    gamma: float,
    n_list: list[int],
    grid: Grid1D,
    threads: int | None = None,
) -> ScalingFit:
    """Ground eigenvalues over n and the fitted power law lambda ~ c n^{2/(1+g)}."""
    ns = list(n_list)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("require n_list strictly increasing")
    n_worst = ns[-1]
    width = ground_state_width(n_worst, gamma)
    if grid.h > width / NODES_PER_WIDTH:
        raise ValueError(
            f"grid under-resolves the ground-state width {width:.3e} at n={n_worst}: "
            f"need nx >= {required_nx(n_worst, gamma)}, got nx={grid.nx}"
        )

    def solve(n: int) -> float:
        return ground_eigenpair(assemble_mode_operator(n, gamma, grid)).lam

    lams = parallel_map(solve, ns, threads=threads)
    samples = [(int(n), float(lam)) for n, lam in zip(ns, lams)]
    logn = np.log([n for n, _ in samples])
    loglam = np.log([lam for _, lam in samples])
    design = np.column_stack([logn, np.ones_like(logn)])
    (slope, _), *_ = np.linalg.lstsq(design, loglam, rcond=None)
    ratios = [lam / n ** (2.0 / (1.0 + gamma)) for n, lam in samples]
    return ScalingFit(
        gamma=float(gamma),
        samples=samples,
        exponent_hat=float(slope),
        c_lower_hat=float(min(ratios)),
        c_upper_hat=float(max(ratios)),
    )

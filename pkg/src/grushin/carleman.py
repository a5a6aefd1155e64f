"""Exponential weight machinery for the degenerate mode operators.

Two regimes share one recipe: a concave curvature profile beta'' is chosen
so that beta, obtained by integrating twice, is >= 1, has strictly negative
slope left of the strip and strictly positive slope right of it, and bends
the wrong way only inside the inner strip (a', b').  For gamma in [1/2, 1]
("regular") the curvature is bounded; for gamma in (0, 1/2) ("singular")
the slope follows the closed form -sqrt(sign(x)|x|^{2 gamma} + c1) on a
neighborhood of the degeneracy, which makes the curvature diverge at 0 in a
controlled way.

From the weight we extract named constants: grid extrema (C1, C2, C5, c3),
a reproducible dominance search for the cubic-in-M lower bound (C3, C4, M1),
and the derived chain C6..C12 that turns the pointwise bounds into an
integrated certificate on adjoint trajectories.  The certificate states
that the weighted mass away from the inner strip is controlled by the
plain mass on the control strip; it is checked by trapezoid quadrature on
computed trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import Grid1D, ProblemConfig, TimeGrid, strip_mask
from .evolution import CNPropagator
from .spectral import (EigenPair, assemble_mode_operator, ground_eigenpair,
                       required_nx)

DELTA_FLOOR = 1e-3
LAMBDA_MIN = 1e-8
TIME_FRACTIONS = np.arange(1, 8) / 8.0
# sup of x^3 e^{-2x} (at x = 3/2) and of x^2 e^{-2x} (at x = 1)
SUP_X3 = (27.0 / 8.0) * math.exp(-3.0)
SUP_X2 = math.exp(-2.0)
# sup |S''| of the quintic smoothstep 6u^5 - 15u^4 + 10u^3 on [0,1]
SMOOTHSTEP_CURV = 10.0 / math.sqrt(3.0)

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class WeightProfile:
    """Weight data on the full node set (boundary nodes included).

    beta, beta1, beta2 hold beta and its first two derivatives at the
    nodes.  c0 is the additive normalization that puts min beta at
    1 + DELTA_FLOOR; c1 and epsilon_nbhd are the slope constant and the
    half-width of the closed-form neighborhood (0.0 in the regular regime).
    """

    gamma: float
    gamma_regime: str
    a_prime: float
    b_prime: float
    nodes: np.ndarray
    h: float
    beta: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    c0: float
    c1: float
    epsilon_nbhd: float


@dataclass(frozen=True)
class CarlemanConstants:
    n: int
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    C7: float
    C8: float
    C9: float
    C10: float
    C11: float
    C12: float
    c3: float
    M1: float
    M2: float
    M: float
    lambda_small: float
    calC: float
    T_sharp: float


@dataclass(frozen=True)
class CarlemanCheckReport:
    n: int
    T: float
    M: float
    z: np.ndarray
    lhs: float
    rhs: float
    pointwise_pass: bool
    integrated_pass: bool
    margin: float


@dataclass(frozen=True)
class CaccioppoliReport:
    n: int
    lhs: float
    rhs: float
    c11: float
    holds: bool
    margin: float


def _bump(u: np.ndarray) -> np.ndarray:
    """Unit-mass bump profile (15/16)(1-u^2)^2 on [-1,1], zero outside."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    vals = np.where(inside, (15.0 / 16.0) * (1.0 - u**2) ** 2, 0.0)
    return vals


def _bump_integral(u: np.ndarray) -> np.ndarray:
    """Integral of the unit bump from -1 to u (0 below, 1 above)."""
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    return (15.0 / 16.0) * (u - 2.0 * u**3 / 3.0 + u**5 / 5.0 + 8.0 / 15.0)


def _gauss_cell(f, lo: float, hi: float) -> float:
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return half * float(_GAUSS_W @ f(mid + half * _GAUSS_X))


def _integrate_profile(beta1_eval, points: np.ndarray,
                       breaks: list[float]) -> np.ndarray:
    """Cumulative integral of beta1 along sorted points, split at breaks."""
    out = np.empty(points.size)
    out[0] = 0.0
    for j in range(points.size - 1):
        lo, hi = points[j], points[j + 1]
        cuts = [lo] + [c for c in breaks if lo < c < hi] + [hi]
        acc = 0.0
        for piece_lo, piece_hi in zip(cuts, cuts[1:]):
            acc += _gauss_cell(beta1_eval, piece_lo, piece_hi)
        out[j + 1] = out[j] + acc
    return out


def _check_hypotheses(nodes, beta, beta1, beta2, a_prime, b_prime,
                      regime: str) -> None:
    outer = (nodes <= a_prime) | (nodes >= b_prime)
    if not np.all(beta >= 1.0):
        raise RuntimeError("weight hypothesis failed: beta >= 1 on (-1,1)")
    if not np.all(np.abs(beta1[outer]) > 0.0):
        raise RuntimeError(
            "weight hypothesis failed: beta' nonzero on the outer set")
    if not beta1[-1] > 0.0:
        raise RuntimeError("weight hypothesis failed: beta'(1) > 0")
    if not beta1[0] < 0.0:
        raise RuntimeError("weight hypothesis failed: beta'(-1) < 0")
    if regime == "regular":
        curv_ok = np.all(beta2[outer] < 0.0)
    else:
        curv_ok = np.all(beta2[outer & (nodes != 0.0)] < 0.0)
    if not curv_ok:
        raise RuntimeError(
            "weight hypothesis failed: beta'' < 0 on the outer set")


def build_weight(gamma: float, a_prime: float, b_prime: float,
                 grid: Grid1D) -> WeightProfile:
    """Construct the weight profile for the given regime on the grid."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(
            "the weight construction covers gamma in (0, 1] only")
    if not (0.0 < a_prime < b_prime < 1.0):
        raise ValueError("require 0 < a_prime < b_prime < 1")
    nodes = grid.nodes
    m = 0.5 * (a_prime + b_prime)
    r = 0.45 * (b_prime - a_prime)

    if gamma >= 0.5:
        regime = "regular"
        eta = 1.0
        c1 = 0.0
        eps = 0.0
        # beta'(-1) = -1, beta'(1) = +1: total curvature mass must be
        # 2 + 2*eta, all of it carried by the bump
        big_b = 2.0 + 2.0 * eta

        def beta1_eval(x):
            x = np.asarray(x, dtype=float)
            return -1.0 - eta * (x + 1.0) + big_b * _bump_integral((x - m) / r)

        def beta2_eval(x):
            x = np.asarray(x, dtype=float)
            return -eta + big_b * _bump((x - m) / r) / r

        breaks = [m - r, m + r]
    else:
        regime = "singular"
        eta = 0.5
        eps = a_prime / 3.0
        c1 = 1.0 + eps ** (2.0 * gamma)
        slope_eps = -math.sqrt(eps ** (2.0 * gamma) + c1)
        big_b = 1.0 - slope_eps + eta * (1.0 - eps)

        def beta1_eval(x):
            x = np.asarray(x, dtype=float)
            inner = np.abs(x) < eps
            core = -np.sqrt(np.where(inner,
                                     np.sign(x) * np.abs(x) ** (2 * gamma)
                                     + c1, 1.0))
            left = -1.0 - eta * (x + eps)
            right = (slope_eps - eta * (x - eps)
                     + big_b * _bump_integral((x - m) / r))
            return np.where(inner, core, np.where(x <= -eps, left, right))

        def beta2_eval(x):
            x = np.asarray(x, dtype=float)
            inner = np.abs(x) < eps
            with np.errstate(divide="ignore"):
                core = np.where(
                    x == 0.0, -np.inf,
                    gamma * np.abs(x) ** (2 * gamma - 1.0)
                    / np.where(inner & (x != 0.0), beta1_eval(x), 1.0))
            outer_vals = -eta + big_b * _bump((x - m) / r) / r
            return np.where(inner, core, outer_vals)

        breaks = [-eps, 0.0, eps, m - r, m + r]

    x_star = brentq(lambda x: float(beta1_eval(x)), m - r, m + r)
    points = np.sort(np.append(nodes, x_star))
    star_idx = int(np.searchsorted(points, x_star))
    raw = _integrate_profile(beta1_eval, points, breaks)
    shift = 1.0 + DELTA_FLOOR - raw[star_idx]
    beta = np.delete(raw + shift, star_idx)

    beta1 = np.asarray(beta1_eval(nodes), dtype=float)
    beta2 = np.asarray(beta2_eval(nodes), dtype=float)
    _check_hypotheses(nodes, beta, beta1, beta2, a_prime, b_prime, regime)
    for arr in (beta, beta1, beta2):
        arr.setflags(write=False)
    return WeightProfile(gamma=float(gamma), gamma_regime=regime,
                         a_prime=float(a_prime), b_prime=float(b_prime),
                         nodes=nodes, h=grid.h, beta=beta, beta1=beta1,
                         beta2=beta2, c0=float(shift), c1=float(c1),
                         epsilon_nbhd=float(eps))


def alpha_eval(profile: WeightProfile, M: float, T: float, t, x):
    """Weight exponent M beta(x) / (t (T - t)), interior times only."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0) or np.any(t >= T):
        raise ValueError("require 0 < t < T")
    beta_x = np.interp(np.asarray(x, dtype=float), profile.nodes,
                       profile.beta)
    out = M * beta_x / (t * (T - t))
    return float(out) if out.ndim == 0 else out


def _cubic_terms(beta, beta1, beta2, M: float, t: float, T: float):
    """The exact value of E (t(T-t))^3 for the weight exponent.

    E is the pointwise quantity -(1/2)(alpha_t - alpha_x^2)_t
    + [(alpha_t - alpha_x^2) alpha_x]_x - (1/2) alpha_xx^2; multiplied by
    p^3 = (t(T-t))^3 it is a cubic polynomial in M with coefficients built
    from beta and its derivatives.
    """
    p = t * (T - t)
    p1 = 3.0 * t * T - T * T - 3.0 * t * t
    term1 = M * beta * p1
    term2 = M * M * ((2.0 * t - T) * (2.0 * beta1**2 + beta * beta2)
                     - 0.5 * p * beta2**2)
    term3 = 3.0 * M**3 * (-beta2) * beta1**2
    return term1 + term2 + term3


def _cutoff_curv_sup(cfg: ProblemConfig) -> float:
    ramp = min(cfg.a_prime - cfg.a, cfg.b - cfg.b_prime)
    return SMOOTHSTEP_CURV / ramp**2


def extract_constants(profile: WeightProfile, cfg: ProblemConfig,
                      n: int) -> CarlemanConstants:
    """Grid extrema plus the dominance search pinning C3, C4, M1."""
    if not math.isclose(profile.gamma, cfg.gamma, rel_tol=1e-12):
        raise ValueError(
            f"profile gamma {profile.gamma} differs from cfg.gamma "
            f"{cfg.gamma}")
    nodes = profile.nodes
    beta, beta1, beta2 = profile.beta, profile.beta1, profile.beta2
    ap, bp = profile.a_prime, profile.b_prime
    T = cfg.T
    gamma = profile.gamma
    singular = profile.gamma_regime == "singular"

    outer = (nodes <= ap) | (nodes >= bp)
    mid = (nodes >= ap) & (nodes <= bp)
    c1_const = float(np.min(-beta2[outer]))
    c2_const = float(np.max(np.abs(beta2[mid])))

    if singular:
        c5 = math.pi**2 * (2.0 * gamma + 1.0)
        search = outer & (np.abs(nodes) >= profile.epsilon_nbhd)
    else:
        with np.errstate(invalid="ignore"):
            combo = (2.0 * gamma * np.abs(nodes) ** (2.0 * gamma - 1.0)
                     * np.abs(beta1)
                     + np.abs(nodes) ** (2.0 * gamma) * np.abs(beta2))
        c5 = math.pi**2 * float(np.max(combo))
        search = outer
    c3_sup = float(np.max(beta[outer]))

    cubic_floor = (-beta2[search]) * beta1[search] ** 2
    c3_const = 0.5 * float(np.min(3.0 * cubic_floor))

    t_samples = TIME_FRACTIONS * T
    bs, b1s, b2s = beta[search], beta1[search], beta2[search]

    def dominates(m1: float) -> bool:
        for mm in (m1, 2.0 * m1, 4.0 * m1):
            for t in t_samples:
                vals = _cubic_terms(bs, b1s, b2s, mm, t, T)
                if np.min(vals - c3_const * mm**3) < 0.0:
                    return False
        return True

    m1 = 1.0
    for _ in range(200):
        if dominates(m1):
            break
        m1 *= 2.0
    else:
        raise RuntimeError("cubic dominance search did not terminate")

    bm, b1m, b2m = beta[mid], beta1[mid], beta2[mid]
    c4_const = 0.0
    for mm in (m1, 2.0 * m1, 4.0 * m1):
        for t in t_samples:
            vals = np.abs(_cubic_terms(bm, b1m, b2m, mm, t, T)) / mm**3
            c4_const = max(c4_const, float(np.max(vals)))

    lambda_small = math.nan
    if singular:
        c6 = c5 / 16.0
        clause = (((nodes > -1.0) & (nodes < ap))
                  | ((nodes > bp) & (nodes < 1.0))) & (nodes != 0.0)
        xs = np.abs(nodes[clause])
        curv = np.abs(beta2[clause])
        slope = np.abs(beta1[clause])
        lam = 1.0
        while True:
            ok1 = np.all(c6 * lam**2 * xs ** (2.0 * gamma - 1.0)
                         <= 0.25 * c3_const * curv * slope)
            ok2 = np.all(c6 * lam**2 * xs ** (2.0 * gamma)
                         <= 0.25 * c3_const * slope**2)
            if ok1 and ok2:
                break
            lam *= 0.5
            if lam < LAMBDA_MIN:
                which = "slope-squared" if ok1 else "curvature-slope"
                bad = xs[np.argmax(
                    c6 * xs ** (2.0 * gamma) / slope**2 if ok1
                    else c6 * xs ** (2.0 * gamma - 1.0) / (curv * slope))]
                raise RuntimeError(
                    f"no lambda above {LAMBDA_MIN} satisfies the "
                    f"{which} coupling clause near x = {bad}")
        lambda_small = lam
        m2 = n * T * T / lambda_small
    else:
        c6 = c4_const + 0.5 * c3_const
        m2 = math.sqrt(2.0 * c5 / c3_const) * n * (T / 2.0) ** 2

    m_final = max(1.0, m1, m2)
    c7 = c6 + 2.0 * c2_const * float(np.max(beta1[mid] ** 2))
    c8 = 2.0 * c2_const
    c9 = c7 * SUP_X3
    c10 = c8 * SUP_X2
    c11 = T + 0.5 * T * T * _cutoff_curv_sup(cfg)
    c12 = 2.0 * (c9 + c10 * c11)
    cal_c = 0.5 * math.sqrt(c5 / (2.0 * c3_const))

    t_sharp = math.nan
    if math.isclose(gamma, 1.0, rel_tol=1e-12):
        grid = Grid1D(nodes=nodes, h=profile.h)
        ns = [k for k in (8, 16, 32, 64) if required_nx(k, 1.0) <= grid.nx]
        ns = ns or [4]
        ratios = []
        for k in ns:
            pair = ground_eigenpair(assemble_mode_operator(k, 1.0, grid))
            ratios.append(pair.bracket_lo / k ** (2.0 / (1.0 + gamma)))
        c_star = min(ratios)
        t_sharp = 27.0 * c3_sup * cal_c / c_star

    return CarlemanConstants(
        n=int(n), C1=c1_const, C2=c2_const, C3=c3_const, C4=c4_const,
        C5=c5, C6=c6, C7=c7, C8=c8, C9=c9, C10=c10, C11=c11, C12=c12,
        c3=c3_sup, M1=m1, M2=m2, M=m_final, lambda_small=lambda_small,
        calC=cal_c, T_sharp=t_sharp)


def _pointwise_checks(profile: WeightProfile,
                      constants: CarlemanConstants) -> bool:
    """Curvature bounds (and closed-form clauses in the singular regime)."""
    nodes = profile.nodes
    beta1, beta2 = profile.beta1, profile.beta2
    ap, bp = profile.a_prime, profile.b_prime
    outer = (nodes <= ap) | (nodes >= bp)
    mid = (nodes >= ap) & (nodes <= bp)
    ok = bool(np.all(-beta2[outer] >= constants.C1)
              and np.all(np.abs(beta2[mid]) <= constants.C2))
    if profile.gamma_regime == "singular" and ok:
        gamma = profile.gamma
        eps = profile.epsilon_nbhd
        inner = (np.abs(nodes) < eps) & (nodes != 0.0)
        xs = nodes[inner]
        ident1 = (beta1[inner] ** 2
                  - (np.sign(xs) * np.abs(xs) ** (2 * gamma) + profile.c1))
        ident2 = (beta2[inner] * beta1[inner]
                  - gamma * np.abs(xs) ** (2 * gamma - 1.0))
        scale = gamma * np.abs(xs) ** (2 * gamma - 1.0)
        ok = bool(np.max(np.abs(ident1)) <= 1e-12 * profile.c1
                  and np.all(np.abs(ident2) <= 1e-12 * scale))
        clause = (((nodes > -1.0) & (nodes < ap))
                  | ((nodes > bp) & (nodes < 1.0))) & (nodes != 0.0)
        xa = np.abs(nodes[clause])
        lam2 = constants.lambda_small**2
        c6 = constants.C6
        quarter = 0.25 * constants.C3
        ok = ok and bool(
            np.all(c6 * lam2 * xa ** (2 * gamma - 1.0)
                   <= quarter * np.abs(beta2[clause] * beta1[clause]))
            and np.all(c6 * lam2 * xa ** (2 * gamma)
                       <= quarter * beta1[clause] ** 2))
    return ok


def _trajectory(op, g0: np.ndarray, tg: TimeGrid) -> np.ndarray:
    prop = CNPropagator(op, tg.dt)
    states = np.empty((tg.steps + 1, op.dim))
    states[0] = g0
    for k in range(tg.steps):
        states[k + 1] = prop.apply_p(states[k])
    return states


def _resolve_datum(datum, constants_n: int | None):
    if isinstance(datum, EigenPair):
        return np.asarray(datum.v, dtype=float), datum.n
    if constants_n is None:
        raise ValueError("mode index n required when the datum is an array")
    return np.asarray(datum, dtype=float), int(constants_n)


def integrated_check(profile: WeightProfile, constants: CarlemanConstants,
                     pair, cfg: ProblemConfig, tg: TimeGrid,
                     tol: float = 0.05) -> CarlemanCheckReport:
    """Weighted outer mass vs plain strip mass on an adjoint trajectory."""
    grid = cfg.grid()
    if not np.array_equal(profile.nodes, grid.nodes):
        raise ValueError("weight profile grid differs from cfg grid")
    g0, n = _resolve_datum(pair, constants.n)
    op = assemble_mode_operator(n, cfg.gamma, grid)
    if g0.shape != (op.dim,):
        raise ValueError(f"datum shape {g0.shape} != ({op.dim},)")
    states = _trajectory(op, g0, tg)

    T, dt, K = tg.T, tg.dt, tg.steps
    times = tg.times[1:K]
    x_int = grid.interior
    beta_int = profile.beta[1:-1]
    outer = (x_int <= profile.a_prime) | (x_int >= profile.b_prime)
    strip = strip_mask(grid, cfg.a, cfg.b)
    M, c3m, c12 = constants.M, constants.C3 * constants.M**3, constants.C12

    lhs_slices = np.empty(times.size)
    z = np.empty((times.size, op.dim))
    with np.errstate(under="ignore"):
        for j, t in enumerate(times):
            p = t * (T - t)
            damp = np.exp(-M * beta_int / p)
            z[j] = states[j + 1] * damp
            lhs_slices[j] = (c3m / p**3) * grid.h * float(
                np.sum((states[j + 1, outer] * damp[outer]) ** 2))
    rhs_slices = c12 * grid.h * np.sum(states[1:K, strip] ** 2, axis=1)

    w = np.full(times.size, dt)
    w[0] = w[-1] = 0.5 * dt
    lhs = float(w @ lhs_slices)
    rhs = float(w @ rhs_slices)
    tail = max(w[0] * lhs_slices[0], w[-1] * lhs_slices[-1])
    if tail > 1e-12 * (1.0 + rhs):
        raise RuntimeError(
            "weighted integrand does not vanish at the first/last kept "
            "time node; refine the time grid")

    z.setflags(write=False)
    pointwise = _pointwise_checks(profile, constants)
    integrated = lhs <= rhs * (1.0 + tol)
    margin = math.inf if lhs == 0.0 else rhs / lhs - 1.0
    return CarlemanCheckReport(n=n, T=T, M=M, z=z, lhs=lhs, rhs=rhs,
                               pointwise_pass=pointwise,
                               integrated_pass=integrated, margin=margin)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (6.0 * u**2 - 15.0 * u + 10.0)


def cutoff_profile(nodes: np.ndarray, cfg: ProblemConfig) -> np.ndarray:
    """C^2 plateau: 1 on [a',b'], 0 outside (a,b), quintic ramps between."""
    up = _smoothstep((nodes - cfg.a) / (cfg.a_prime - cfg.a))
    down = _smoothstep((cfg.b - nodes) / (cfg.b - cfg.b_prime))
    return up * down


def caccioppoli_check(pair, cfg: ProblemConfig, tg: TimeGrid,
                      n: int | None = None,
                      tol: float = 0.05) -> CaccioppoliReport:
    """Slope mass on the inner strip vs plain mass on the full strip.

    The cutoff-based energy estimate bounds the time-weighted slope
    integral over (a', b') by c11 times the datum mass on (a, b), with
    c11 = T sup|rho| + (T^2/2) sup|rho''|.
    """
    grid = cfg.grid()
    g0, n_mode = _resolve_datum(pair, n)
    op = assemble_mode_operator(n_mode, cfg.gamma, grid)
    if g0.shape != (op.dim,):
        raise ValueError(f"datum shape {g0.shape} != ({op.dim},)")
    states = _trajectory(op, g0, tg)

    c11 = cfg.T + 0.5 * cfg.T**2 * _cutoff_curv_sup(cfg)
    x_int = grid.interior
    inner = (x_int >= cfg.a_prime) & (x_int <= cfg.b_prime)
    strip = strip_mask(grid, cfg.a, cfg.b)

    # centered slope on interior nodes; Dirichlet neighbours are zero
    padded = np.zeros((states.shape[0], op.dim + 2))
    padded[:, 1:-1] = states
    slope = (padded[:, 2:] - padded[:, :-2]) / (2.0 * grid.h)

    times = tg.times
    tw = times * (cfg.T - times)
    w = np.full(times.size, tg.dt)
    w[0] = w[-1] = 0.5 * tg.dt
    lhs = float(w @ (tw * grid.h * np.sum(slope[:, inner] ** 2, axis=1)))
    rhs = c11 * float(w @ (grid.h * np.sum(states[:, strip] ** 2, axis=1)))
    holds = lhs <= rhs * (1.0 + tol)
    margin = math.inf if lhs == 0.0 else rhs / lhs - 1.0
    return CaccioppoliReport(n=n_mode, lhs=lhs, rhs=rhs, c11=c11,
                             holds=holds, margin=margin)

"""Tests for the exponential weight construction and its certificates."""

import dataclasses
import math

import numpy as np
import pytest

from grushin.carleman import (CarlemanCheckReport, _check_hypotheses,
                              _cubic_terms, alpha_eval, build_weight,
                              caccioppoli_check, cutoff_profile,
                              extract_constants, integrated_check)
from grushin.core import ProblemConfig, make_grid
from grushin.spectral import assemble_mode_operator, ground_eigenpair

PRIMES = (0.4, 0.7)


def make_cfg(gamma, nx=401, nt=200, T=1.0):
    return ProblemConfig(gamma=gamma, a=0.3, b=0.8, a_prime=PRIMES[0],
                         b_prime=PRIMES[1], T=T, nx=nx, nt=nt)


@pytest.fixture(scope="module")
def grid():
    return make_grid(401)


@pytest.fixture(scope="module")
def regular(grid):
    return build_weight(0.75, *PRIMES, grid)


@pytest.fixture(scope="module")
def singular(grid):
    return build_weight(0.25, *PRIMES, grid)


def outer_mask(profile):
    return ((profile.nodes <= profile.a_prime)
            | (profile.nodes >= profile.b_prime))


def test_regular_hypotheses_nodewise(regular):
    w = regular
    assert w.gamma_regime == "regular"
    assert np.all(w.beta >= 1.0)
    outer = outer_mask(w)
    assert np.all(np.abs(w.beta1[outer]) > 0.0)
    assert w.beta1[0] < 0.0 < w.beta1[-1]
    assert np.all(w.beta2[outer] < 0.0)


def test_beta_consistent_with_slope(regular):
    # the tabulated slope must be the derivative of the tabulated beta
    w = regular
    d_beta = (w.beta[2:] - w.beta[:-2]) / (2.0 * w.h)
    assert np.max(np.abs(d_beta - w.beta1[1:-1])) < 5e-3


def test_singular_closed_form_identities(singular):
    w = singular
    assert w.gamma_regime == "singular"
    x = w.nodes
    inner = (np.abs(x) < w.epsilon_nbhd) & (x != 0.0)
    xs = x[inner]
    target = np.sign(xs) * np.abs(xs) ** 0.5 + w.c1
    assert np.max(np.abs(w.beta1[inner] ** 2 - target)) < 1e-13 * w.c1
    prod = w.beta2[inner] * w.beta1[inner]
    ref = 0.25 * np.abs(xs) ** (-0.5)
    assert np.max(np.abs(prod - ref) / ref) < 1e-12
    # curvature diverges at the degeneracy but keeps its sign
    assert w.beta2[x == 0.0][0] == -np.inf
    assert np.all(w.beta2[outer_mask(w) & (x != 0.0)] < 0.0)


def test_build_weight_guards(grid):
    with pytest.raises(ValueError, match="gamma"):
        build_weight(1.5, *PRIMES, grid)
    with pytest.raises(ValueError, match="gamma"):
        build_weight(0.0, *PRIMES, grid)
    with pytest.raises(ValueError, match="a_prime"):
        build_weight(0.75, 0.7, 0.4, grid)


def test_hypothesis_violation_is_named(grid):
    nodes = grid.nodes
    good = np.ones_like(nodes)
    slope = np.where(nodes >= 0.0, 1.0, -1.0)
    curv = -np.ones_like(nodes)
    with pytest.raises(RuntimeError, match="beta >= 1"):
        _check_hypotheses(nodes, 0.5 * good, slope, curv, *PRIMES, "regular")
    with pytest.raises(RuntimeError, match="beta'' < 0"):
        _check_hypotheses(nodes, good + 1.0, slope, -curv, *PRIMES,
                          "regular")


def test_alpha_eval(regular):
    w = regular
    beta_half = float(np.interp(0.3, w.nodes, w.beta))
    val = alpha_eval(w, 2.0, 1.0, 0.5, 0.3)
    assert val == pytest.approx(4.0 * 2.0 * beta_half, rel=1e-14)
    assert alpha_eval(w, 1.0, 1.0, 0.2, 0.3) == pytest.approx(
        alpha_eval(w, 1.0, 1.0, 0.8, 0.3), rel=1e-14)
    with pytest.raises(ValueError, match="0 < t < T"):
        alpha_eval(w, 1.0, 1.0, 0.0, 0.3)
    with pytest.raises(ValueError, match="0 < t < T"):
        alpha_eval(w, 1.0, 1.0, 1.0, 0.3)


def test_cubic_identity_against_finite_differences(regular):
    # independent evaluation of the weighted-energy expression by central
    # differences in t and x
    w = regular
    T, M = 1.0, 7.0
    h = w.h
    beta = w.beta

    def alpha_node(i, t):
        return M * beta[i] / (t * (T - t))

    def e_fd(i, t, dt=1e-5):
        def w_val(j, tt):
            a_t = (alpha_node(j, tt + dt) - alpha_node(j, tt - dt)) / (2 * dt)
            a_x = (alpha_node(j + 1, tt) - alpha_node(j - 1, tt)) / (2 * h)
            return a_t - a_x**2

        def w_ax(j, tt):
            a_x = (alpha_node(j + 1, tt) - alpha_node(j - 1, tt)) / (2 * h)
            return w_val(j, tt) * a_x

        d_w = (w_val(i, t + dt) - w_val(i, t - dt)) / (2 * dt)
        d_wax = (w_ax(i + 1, t) - w_ax(i - 1, t)) / (2 * h)
        a_xx = (alpha_node(i + 1, t) - 2 * alpha_node(i, t)
                + alpha_node(i - 1, t)) / h**2
        return -0.5 * d_w + d_wax - 0.5 * a_xx**2

    for i in (30, 120, 360):
        t = 0.37
        closed = (_cubic_terms(beta[i], w.beta1[i], w.beta2[i], M, t, T)
                  / (t * (T - t)) ** 3)
        assert abs(closed - e_fd(i, t)) < 1e-4 * abs(closed)


def test_constants_regular(regular):
    cfg = make_cfg(0.75)
    c = extract_constants(regular, cfg, 16)
    assert c.n == 16
    assert c.C1 > 0.0 and c.C2 > 0.0 and c.C3 > 0.0 and c.C5 > 0.0
    assert c.M == max(1.0, c.M1, c.M2)
    assert c.C6 == pytest.approx(c.C4 + 0.5 * c.C3, rel=1e-14)
    assert c.C12 == pytest.approx(2.0 * (c.C9 + c.C10 * c.C11), rel=1e-14)
    assert math.isnan(c.T_sharp)
    assert math.isnan(c.lambda_small)
    # the dominance certificate re-verified on the outer nodes
    outer = outer_mask(regular)
    for mm in (c.M1, 2 * c.M1, 4 * c.M1):
        for frac in (1, 3, 5, 7):
            t = frac * cfg.T / 8
            vals = _cubic_terms(regular.beta[outer], regular.beta1[outer],
                                regular.beta2[outer], mm, t, cfg.T)
            assert np.min(vals) >= c.C3 * mm**3


def test_m2_doubles_with_n(grid):
    w = build_weight(1.0, *PRIMES, grid)
    cfg = make_cfg(1.0)
    m2 = [extract_constants(w, cfg, n).M2 for n in (8, 16)]
    assert m2[1] / m2[0] == 2.0


def test_t_sharp_gamma1(grid):
    w = build_weight(1.0, *PRIMES, grid)
    c = extract_constants(w, make_cfg(1.0), 8)
    assert c.T_sharp > 0.0 and math.isfinite(c.T_sharp)
    assert c.calC == pytest.approx(0.5 * math.sqrt(c.C5 / (2 * c.C3)),
                                   rel=1e-14)


def test_constants_singular(singular):
    cfg = make_cfg(0.25)
    c = extract_constants(singular, cfg, 16)
    assert c.C5 == pytest.approx(math.pi**2 * 1.5, rel=1e-14)
    assert 0.0 < c.lambda_small <= 1.0
    assert c.M2 == pytest.approx(16 * cfg.T**2 / c.lambda_small, rel=1e-14)
    # both coupling clauses hold at the stored lambda, and the first one
    # is x-free on the closed-form neighborhood
    w = singular
    x = w.nodes
    clause = (((x > -1.0) & (x < w.a_prime))
              | ((x > w.b_prime) & (x < 1.0))) & (x != 0.0)
    xa = np.abs(x[clause])
    lhs1 = c.C6 * c.lambda_small**2 * xa ** (-0.5)
    rhs1 = 0.25 * c.C3 * np.abs(w.beta2[clause] * w.beta1[clause])
    assert np.all(lhs1 <= rhs1)
    lhs2 = c.C6 * c.lambda_small**2 * xa**0.5
    rhs2 = 0.25 * c.C3 * w.beta1[clause] ** 2
    assert np.all(lhs2 <= rhs2)
    inner = clause & (np.abs(x) < w.epsilon_nbhd)
    ratio = (c.C6 * c.lambda_small**2 * np.abs(x[inner]) ** (-0.5)
             / (0.25 * c.C3 * np.abs(w.beta2[inner] * w.beta1[inner])))
    assert np.max(ratio) - np.min(ratio) < 1e-10 * np.max(ratio)


def test_integrated_check_eigen_pairs(regular, grid):
    cfg = make_cfg(0.75)
    tg = cfg.time_grid()
    for n in (4, 16):
        c = extract_constants(regular, cfg, n)
        pair = ground_eigenpair(assemble_mode_operator(n, 0.75, grid))
        rep = integrated_check(regular, c, pair, cfg, tg)
        assert isinstance(rep, CarlemanCheckReport)
        assert rep.integrated_pass and rep.pointwise_pass
        assert rep.margin > 0.0
        assert rep.n == n and rep.M == c.M
    # n = 4 keeps both sides positive (the certificate is not vacuous)
    c4 = extract_constants(regular, cfg, 4)
    pair4 = ground_eigenpair(assemble_mode_operator(4, 0.75, grid))
    rep4 = integrated_check(regular, c4, pair4, cfg, tg)
    assert rep4.lhs > 0.0 and rep4.rhs > 0.0


def test_integrated_margin_stable_under_refinement():
    margins = []
    for nx, nt in ((401, 200), (801, 400)):
        cfg = make_cfg(0.75, nx=nx, nt=nt)
        g = make_grid(nx)
        w = build_weight(0.75, *PRIMES, g)
        c = extract_constants(w, cfg, 4)
        pair = ground_eigenpair(assemble_mode_operator(4, 0.75, g))
        rep = integrated_check(w, c, pair, cfg, cfg.time_grid())
        assert rep.integrated_pass
        margins.append(rep.margin)
    assert margins[1] >= 0.5 * margins[0]


def test_integrated_check_zero_datum(regular):
    cfg = make_cfg(0.75)
    c = extract_constants(regular, cfg, 4)
    rep = integrated_check(regular, c, np.zeros(cfg.nx), cfg,
                           cfg.time_grid())
    assert rep.lhs == 0.0 and rep.rhs == 0.0
    assert rep.integrated_pass
    assert rep.margin == math.inf


def test_integrated_check_random_datum_gamma1(grid):
    cfg = make_cfg(1.0)
    w = build_weight(1.0, *PRIMES, grid)
    c = extract_constants(w, cfg, 8)
    rng = np.random.default_rng(17)
    rep = integrated_check(w, c, rng.standard_normal(cfg.nx), cfg,
                           cfg.time_grid())
    assert rep.integrated_pass and rep.pointwise_pass


def test_integrated_check_beyond_t_sharp(grid):
    w = build_weight(1.0, *PRIMES, grid)
    c_ref = extract_constants(w, make_cfg(1.0), 8)
    T = 1.1 * c_ref.T_sharp
    cfg = make_cfg(1.0, nt=180, T=T)
    c = extract_constants(w, cfg, 8)
    pair = ground_eigenpair(assemble_mode_operator(8, 1.0, grid))
    rep = integrated_check(w, c, pair, cfg, cfg.time_grid())
    assert rep.integrated_pass


def test_integrated_check_singular(singular, grid):
    cfg = make_cfg(0.25)
    c = extract_constants(singular, cfg, 16)
    pair = ground_eigenpair(assemble_mode_operator(16, 0.25, grid))
    rep = integrated_check(singular, c, pair, cfg, cfg.time_grid())
    assert rep.integrated_pass and rep.pointwise_pass


def test_integrated_check_guards(regular):
    cfg = make_cfg(0.75)
    c = extract_constants(regular, cfg, 4)
    other = make_cfg(0.75, nx=201)
    with pytest.raises(ValueError, match="grid differs"):
        integrated_check(regular, c, np.zeros(201), other,
                         other.time_grid())
    with pytest.raises(ValueError, match="datum shape"):
        integrated_check(regular, c, np.zeros(7), cfg, cfg.time_grid())


def test_endpoint_tail_guard_fires(regular, grid):
    # a hand-toggled small M makes the weighted integrand survive at the
    # first kept time node on a coarse time grid
    cfg = make_cfg(0.75, nt=4)
    c = extract_constants(regular, cfg, 4)
    bad = dataclasses.replace(c, M=0.3, C3=1.5)
    pair = ground_eigenpair(assemble_mode_operator(4, 0.75, grid))
    with pytest.raises(RuntimeError, match="does not vanish"):
        integrated_check(regular, bad, pair, cfg, cfg.time_grid())


def test_cutoff_profile_shape(grid):
    cfg = make_cfg(0.75)
    rho = cutoff_profile(grid.nodes, cfg)
    x = grid.nodes
    assert np.all(rho[(x >= cfg.a_prime) & (x <= cfg.b_prime)] == 1.0)
    assert np.all(rho[(x <= cfg.a) | (x >= cfg.b)] == 0.0)
    assert np.all((rho >= 0.0) & (rho <= 1.0))


def test_caccioppoli_eigen_and_zero(grid):
    cfg = make_cfg(0.75)
    pair = ground_eigenpair(assemble_mode_operator(16, 0.75, grid))
    rep = caccioppoli_check(pair, cfg, cfg.time_grid())
    assert rep.holds and rep.margin > 1.0
    assert rep.c11 == pytest.approx(
        cfg.T + 0.5 * cfg.T**2 * (10.0 / math.sqrt(3.0)) / 0.1**2,
        rel=1e-12)
    zero = caccioppoli_check(np.zeros(cfg.nx), cfg, cfg.time_grid(), n=16)
    assert zero.holds and zero.lhs == 0.0 and zero.margin == math.inf


def test_caccioppoli_margin_stable_under_doubling():
    margins = []
    for nx in (401, 801):
        cfg = make_cfg(0.75, nx=nx)
        pair = ground_eigenpair(
            assemble_mode_operator(16, 0.75, make_grid(nx)))
        rep = caccioppoli_check(pair, cfg, cfg.time_grid())
        assert rep.holds
        margins.append(rep.margin)
    assert 0.5 <= margins[1] / margins[0] <= 2.0


def test_caccioppoli_requires_mode_index(grid):
    cfg = make_cfg(0.75)
    with pytest.raises(ValueError, match="mode index n required"):
        caccioppoli_check(np.zeros(cfg.nx), cfg, cfg.time_grid())

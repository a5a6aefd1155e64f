"""Oracle tests for the mode-operator spectra.

Frozen reference values, computed independently of the package:
  * ground energy of -u'' + y^2 on the line: exactly 1 (Gaussian ground state)
  * ground energy of -u'' + |y| on the line: 1.0187929716474714, the negative
    of the first zero of Ai' (even problem reduces to Airy on y > 0)
  * ground energy of -u'' + y^4 on the line: 1.0603620904841829, from a
    brute-force finite-difference eigensolve on a large truncated interval
    with Richardson extrapolation (reproduced below as the oracle helper)
  * Dirichlet Laplacian levels on (-1, 1): (j*pi/2)^2
"""

import math
import re

import numpy as np
import pytest
from scipy.linalg import eigh_tridiagonal
from scipy.special import ai_zeros

from grushin.core import l2_norm, make_grid, richardson_pair
from grushin.spectral import (
    assemble_mode_operator,
    eigen_scaling_sweep,
    first_k_eigenpairs,
    ground_eigenpair,
    required_nx,
    sturm_count,
)

HARMONIC_GROUND = 1.0
ABS_WELL_GROUND = 1.0187929716474714
QUARTIC_GROUND = 1.0603620904841829
PI_QUARTER_SQ = np.pi**2 / 4.0


def line_ground_energy(gamma: float, L: float, n_points: int) -> float:
    """Brute-force oracle: smallest eigenvalue of -u'' + |y|^{2 gamma} on (-L, L)."""
    y = np.linspace(-L, L, n_points + 2)[1:-1]
    h = 2.0 * L / (n_points + 1)
    diag = 2.0 / h**2 + np.abs(y) ** (2.0 * gamma)
    off = np.full(n_points - 1, -1.0 / h**2)
    lam, _ = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    return float(lam[0])


def line_oracle(gamma: float, L: float) -> float:
    # odd counts put a node exactly at y=0 where |y|^{2 gamma} may have a kink
    coarse = line_ground_energy(gamma, L, 4001)
    fine = line_ground_energy(gamma, L, 8003)  # h exactly halved
    return richardson_pair(coarse, fine, 2)


def test_frozen_airy_constant_cross_check():
    # even well |y|: ground energy is minus the first zero of Ai'
    ap = ai_zeros(1)[1][0]
    assert -ap == pytest.approx(ABS_WELL_GROUND, abs=1e-12)


@pytest.mark.parametrize(
    "gamma, L, expected",
    [
        (0.5, 12.0, ABS_WELL_GROUND),
        (1.0, 8.0, HARMONIC_GROUND),
        (2.0, 6.0, QUARTIC_GROUND),
    ],
)
def test_line_oracle_matches_frozen_constants(gamma, L, expected):
    assert line_oracle(gamma, L) == pytest.approx(expected, abs=1e-6)


def test_assemble_potential_entries():
    g = make_grid(7)  # interior nodes at multiples of 0.25
    op = assemble_mode_operator(1, 1.0, g)
    idx = int(np.argmin(np.abs(g.interior - 0.5)))
    assert op.potential[idx] == pytest.approx(np.pi**2 * 0.25, abs=1e-12)
    center = (op.dim - 1) // 2
    assert op.potential[center] == 0.0

    op2 = assemble_mode_operator(2, 2.0, g)
    idx2 = int(np.argmin(np.abs(g.interior + 0.5)))
    assert op2.potential[idx2] == pytest.approx(4 * np.pi**2 * 0.0625, abs=1e-12)


def test_mode_operator_invariants():
    g = make_grid(101)
    op = assemble_mode_operator(3, 0.7, g)
    assert np.all(op.offdiag == -1.0 / g.h**2)
    assert np.all(op.diag >= 2.0 / g.h**2)
    # potential is even, and the grid is exactly symmetric
    assert np.array_equal(op.diag, op.diag[::-1])


def test_assemble_rejects_bad_inputs():
    g = make_grid(11)
    with pytest.raises(ValueError):
        assemble_mode_operator(0, 1.0, g)
    with pytest.raises(ValueError):
        assemble_mode_operator(1, -1.0, g)


def test_zero_potential_ground_closed_form():
    # discrete Dirichlet Laplacian: lambda_h = (4/h^2) sin^2(pi h / 4),
    # eigenvector exactly cos(pi x / 2) at the nodes
    g = make_grid(199)
    op = assemble_mode_operator(1, 1.0, g, coupling=0.0)
    pair = ground_eigenpair(op)
    lam_exact = 4.0 / g.h**2 * math.sin(math.pi * g.h / 4.0) ** 2
    assert pair.lam == pytest.approx(lam_exact, rel=1e-9)
    shape = pair.v / pair.v[(op.dim - 1) // 2]
    assert np.max(np.abs(shape - np.cos(np.pi * g.interior / 2.0))) < 1e-9


def test_zero_potential_richardson_reaches_continuum():
    lams = []
    for nx in (199, 399):
        g = make_grid(nx)
        op = assemble_mode_operator(1, 1.0, g, coupling=0.0)
        lams.append(ground_eigenpair(op).lam)
    extrap = richardson_pair(lams[0], lams[1], 2)
    assert abs(extrap - PI_QUARTER_SQ) / PI_QUARTER_SQ < 1e-8


def test_zero_potential_first_three_levels():
    per_grid = []
    for nx in (199, 399):
        g = make_grid(nx)
        op = assemble_mode_operator(1, 1.0, g, coupling=0.0)
        per_grid.append([lam for lam, _ in first_k_eigenpairs(op, 3)])
    for j in range(3):
        extrap = richardson_pair(per_grid[0][j], per_grid[1][j], 2)
        target = ((j + 1) * np.pi / 2.0) ** 2
        assert extrap == pytest.approx(target, abs=1e-6)


def test_harmonic_eigenvalue_oracle():
    g = make_grid(2001)
    pair = ground_eigenpair(assemble_mode_operator(64, 1.0, g))
    assert abs(pair.lam / (64 * np.pi) - 1.0) < 1e-2


def test_harmonic_eigenvector_matches_gaussian():
    n = 64
    g = make_grid(2001)
    pair = ground_eigenpair(assemble_mode_operator(n, 1.0, g))
    x = g.interior
    window = np.abs(x) <= 0.5
    gauss = n**0.25 * np.exp(-n * np.pi * x[window] ** 2 / 2.0)
    assert np.max(np.abs(pair.v[window] - gauss)) < 1e-3


def test_harmonic_level_ratio():
    g = make_grid(2001)
    op = assemble_mode_operator(64, 1.0, g)
    (lam1, _), (lam2, _) = first_k_eigenpairs(op, 2)
    assert lam2 / lam1 == pytest.approx(3.0, rel=0.05)


def test_levels_strictly_increasing():
    g = make_grid(401)
    op = assemble_mode_operator(16, 1.0, g)
    lams = [lam for lam, _ in first_k_eigenpairs(op, 4)]
    assert all(b > a for a, b in zip(lams, lams[1:]))


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_monotone_in_n(gamma):
    g = make_grid(801)
    lams = [
        ground_eigenpair(assemble_mode_operator(n, gamma, g)).lam for n in (2, 4, 8, 16)
    ]
    assert all(b >= a for a, b in zip(lams, lams[1:]))


@pytest.mark.parametrize("n, gamma", [(1, 0.5), (4, 1.0), (16, 2.0), (64, 1.0)])
def test_sandwich_bounds(n, gamma):
    g = make_grid(1001)
    pair = ground_eigenpair(assemble_mode_operator(n, gamma, g))
    assert PI_QUARTER_SQ * (1 - 1e-4) <= pair.lam <= PI_QUARTER_SQ + (n * np.pi) ** 2


def test_rayleigh_consistency_and_residual():
    g = make_grid(1001)
    op = assemble_mode_operator(16, 1.0, g)
    pair = ground_eigenpair(op)
    assert abs(op.rayleigh(pair.v) - pair.lam) <= 10.0 * max(pair.residual, 1e-15)
    assert pair.residual < 1e-6
    assert l2_norm(pair.v, g) == pytest.approx(1.0, abs=1e-12)


def test_ground_vector_positive_and_even():
    g = make_grid(1001)
    for n, gamma in ((4, 0.5), (64, 1.0), (32, 2.0)):
        pair = ground_eigenpair(assemble_mode_operator(n, gamma, g))
        assert np.all(pair.v > 0.0)
        assert np.array_equal(pair.v, pair.v[::-1])


def test_variational_upper_bound():
    g = make_grid(401)
    op = assemble_mode_operator(8, 1.0, g)
    pair = ground_eigenpair(op)
    rng = np.random.default_rng(42)
    for _ in range(5):
        w = rng.standard_normal(op.dim)
        assert pair.lam <= op.rayleigh(w) + 1e-9


def test_certified_bracket_encloses():
    g = make_grid(501)
    op = assemble_mode_operator(8, 1.0, g)
    pair = ground_eigenpair(op, tol=1e-10)
    assert pair.bracket_lo <= pair.lam <= pair.bracket_hi
    assert pair.bracket_hi - pair.bracket_lo <= 1e-9 * pair.lam
    assert sturm_count(op.diag, op.offdiag, pair.bracket_lo) == 0
    assert sturm_count(op.diag, op.offdiag, pair.bracket_hi) >= 1


def test_sturm_count_against_dense_eigenvalues():
    rng = np.random.default_rng(5)
    d = rng.uniform(1.0, 4.0, 12)
    e = rng.uniform(-1.0, -0.1, 11)
    full = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    eigs = np.linalg.eigvalsh(full)
    for x in (0.0, eigs[0] + 1e-6, 2.0, 3.5, 10.0):
        assert sturm_count(d, e, x) == int(np.sum(eigs < x))


@pytest.mark.parametrize(
    "gamma, nx",
    [(0.5, 4001), (1.0, 2001), (2.0, 1001)],
)
def test_scaling_sweep_exponent(gamma, nx):
    fit = eigen_scaling_sweep(gamma, [16, 32, 64, 128, 256], make_grid(nx))
    assert fit.exponent_hat == pytest.approx(2.0 / (1.0 + gamma), abs=0.03)
    assert 0.0 < fit.c_lower_hat <= fit.c_upper_hat
    for n, lam in fit.samples:
        ratio = lam / n ** (2.0 / (1.0 + gamma))
        assert fit.c_lower_hat - 1e-12 <= ratio <= fit.c_upper_hat + 1e-12


def test_scaling_constant_approaches_line_ground_energy():
    # lambda ~ E0(gamma) * (n pi)^{2/(1+gamma)} for large n
    fit = eigen_scaling_sweep(2.0, [128, 256], make_grid(1001))
    _, lam = fit.samples[-1]
    e0 = lam / (256 * np.pi) ** (2.0 / 3.0)
    assert e0 == pytest.approx(QUARTIC_GROUND, rel=1e-2)


def test_sweep_refuses_under_resolved_grid():
    with pytest.raises(ValueError, match="need nx >= (\\d+)") as err:
        eigen_scaling_sweep(0.5, [16, 256], make_grid(401))
    need = int(re.search(r"need nx >= (\d+)", str(err.value)).group(1))
    assert need == required_nx(256, 0.5)
    assert need % 2 == 1
    # the suggested size is accepted
    assert make_grid(need).h <= (256 * np.pi) ** (-1 / 1.5) / 20 * (1 + 1e-12)


def test_sweep_requires_increasing_n():
    with pytest.raises(ValueError, match="increasing"):
        eigen_scaling_sweep(1.0, [16, 8], make_grid(1001))


def test_first_k_guards():
    g = make_grid(101)
    op = assemble_mode_operator(1, 1.0, g)
    with pytest.raises(ValueError):
        first_k_eigenpairs(op, 0)
    with pytest.raises(ValueError, match="first 50"):
        first_k_eigenpairs(op, 51)
    small = assemble_mode_operator(1, 1.0, make_grid(5))
    with pytest.raises(ValueError, match="dimension"):
        first_k_eigenpairs(small, 5)


def test_first_k_h_orthonormal():
    g = make_grid(201)
    op = assemble_mode_operator(4, 1.0, g)
    pairs = first_k_eigenpairs(op, 5)
    vecs = np.column_stack([v for _, v in pairs])
    gram = g.h * (vecs.T @ vecs)
    assert np.max(np.abs(gram - np.eye(5))) < 1e-10


def test_eigenpair_is_frozen_dataclass():
    g = make_grid(101)
    pair = ground_eigenpair(assemble_mode_operator(1, 1.0, g))
    with pytest.raises(AttributeError):
        pair.lam = 0.0

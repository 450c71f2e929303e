import numpy as np
import pytest

from agebif.discretize import Grid, age_integral, laplacian
from agebif.evolve import renewal_matrix, semigroup_march
from agebif.model import normalize_birth
from agebif.reduced import (
    DEGENERATE,
    POSITIVE,
    TRIVIAL,
    eta_scan,
    g2_matrix,
    reduced_jacobian,
    reduced_residual,
    solve_reduced,
)
from agebif.spectral import dense_spectrum, perron

from conftest import dense_laplacian, make_spec


def dense_picard(spec, grid, eta, u0, theta=0.5, tol=1e-13, max_iter=20000):
    """Damped Picard on the initial trace with a dense-matrix march (independent of the package)."""
    n, da = grid.n_x, grid.da
    L = dense_laplacian(n, grid.h)
    wb = grid.weights * spec.birth(grid.ages)
    u0 = np.array(u0, dtype=float)
    for k in range(max_iter):
        u, acc = u0, wb[0] * u0
        for i in range(grid.n_a):
            u = np.linalg.solve(np.eye(n) + da * L + da * spec.alpha * np.diag(u), u)
            acc = acc + wb[i + 1] * u
        new = (1 - theta) * u0 + theta * eta * acc
        if np.max(np.abs(new - u0)) <= tol:
            return new, k
        u0 = new
    raise AssertionError("Picard oracle did not converge")


@pytest.fixture(scope="module")
def setup16():
    g = Grid(1.0, 16, 1.0, 32)
    return normalize_birth(make_spec(), g), g


def test_subthreshold_collapses(setup16):
    spec, g = setup16
    init = 0.5 * np.sin(np.pi * g.x)
    sol = solve_reduced(spec, g, 0.9, init=init)
    assert sol.sup_norm < 1e-8
    assert sol.status == TRIVIAL
    picard, _ = dense_picard(spec, g, 0.9, init, tol=1e-12)
    assert np.max(np.abs(picard)) < 1e-8


def test_threshold_is_degenerate(setup16):
    spec, g = setup16
    sol = solve_reduced(spec, g, 1.0)
    assert sol.status == DEGENERATE
    assert sol.sup_norm < 1e-8


def test_linear_renewal_singular_at_threshold(setup16):
    # alpha = 0 linear operator: r(G) = 1 exactly, so I - G is singular
    spec, g = setup16
    G = renewal_matrix(lambda rows: semigroup_march(laplacian(g), rows, g).field, spec.birth, g)
    ev = dense_spectrum(G)
    assert abs(ev[0] - 1) < 1e-12
    J0 = reduced_jacobian(spec, g, 1.0, np.zeros((g.n_a + 1, g.n_x)))
    np.testing.assert_allclose(J0, np.eye(g.n_x) - G, atol=1e-15)
    assert np.min(np.abs(np.linalg.eigvals(J0))) < 1e-12


def test_newton_matches_picard_oracle(setup16):
    spec, g = setup16
    sol = solve_reduced(spec, g, 2.0, tol=1e-12)
    assert sol.status == POSITIVE
    ref, _ = dense_picard(spec, g, 2.0, np.ones(g.n_x))
    assert np.max(np.abs(sol.trace0 - ref)) <= 1e-8


def test_solution_invariants(setup16):
    spec, g = setup16
    sol = solve_reduced(spec, g, 2.0, tol=1e-11)
    assert np.all(sol.field >= 0)
    assert np.array_equal(sol.field[0], sol.trace0)
    R, _ = reduced_residual(spec, g, 2.0, sol.trace0)
    assert np.max(np.abs(R)) == sol.residual <= 1e-11


def test_independent_of_initial_guess(setup16):
    spec, g = setup16
    tol = 1e-11
    a = solve_reduced(spec, g, 2.0, init=0.1 * np.ones(g.n_x), tol=tol)
    b = solve_reduced(spec, g, 2.0, init=20 * np.sin(np.pi * g.x), tol=tol)
    assert np.max(np.abs(a.trace0 - b.trace0)) <= 10 * tol


def test_near_threshold_shape(setup16):
    spec, g = setup16
    sol = solve_reduced(spec, g, 1.01)
    assert sol.status == POSITIVE and sol.sup_norm < 0.5
    s = np.sin(np.pi * g.x)
    cos = sol.trace0 @ s / (np.linalg.norm(sol.trace0) * np.linalg.norm(s))
    assert cos > 0.99


def test_eta_scan(setup16):
    spec, g = setup16
    rows = eta_scan(spec, g, [0.5, 0.9, 1.0, 1.1, 2, 5, 10])
    assert all(r.sup_norm == 0.0 for r in rows[:3])
    sup = [r.sup_norm for r in rows[3:]]
    assert all(b > a for a, b in zip(sup, sup[1:]))
    for r in rows[3:]:
        cold = solve_reduced(spec, g, r.eta)
        assert abs(cold.sup_norm - r.sup_norm) <= 1e-8 * r.sup_norm
    with pytest.raises(ValueError):
        eta_scan(spec, g, [2.0, 1.0])


def test_spectral_chain(setup16):
    spec, g = setup16
    tol = 1e-10
    sol = solve_reduced(spec, g, 2.0, tol=tol)
    G2 = g2_matrix(spec, g, sol)
    defect = np.max(np.abs(2.0 * G2 @ sol.trace0 - sol.trace0)) / np.max(sol.trace0)
    assert defect <= 10 * tol
    assert abs(perron(lambda v: 2.0 * (G2 @ v), g.n_x).radius - 1) <= 10 * tol
    J = reduced_jacobian(spec, g, 2.0, sol.field)
    G1 = (np.eye(g.n_x) - J) / 2.0
    assert perron(lambda v: 2.0 * (G1 @ v), g.n_x, with_gap=False).radius < 1


def test_refinement_consistency():
    sups = []
    for n_x, n_a in ((8, 16), (17, 32), (35, 64)):
        g = Grid(1.0, n_x, 1.0, n_a)
        spec = normalize_birth(make_spec(), g)
        sups.append(solve_reduced(spec, g, 2.0).sup_norm)
    d1, d2 = abs(sups[1] - sups[0]), abs(sups[2] - sups[1])
    assert d2 < 0.75 * d1


def test_residual_uses_birth_integral(setup16):
    spec, g = setup16
    u0 = np.sin(np.pi * g.x)
    R, field = reduced_residual(spec, g, 1.5, u0)
    np.testing.assert_allclose(R, u0 - 1.5 * age_integral(field, spec.birth, g), atol=0)


def test_negative_eta_rejected(setup16):
    spec, g = setup16
    with pytest.raises(ValueError):
        solve_reduced(spec, g, -1.0)

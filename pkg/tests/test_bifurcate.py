import numpy as np
import pytest
import scipy.linalg

from agebif.bifurcate import (
    a2_source,
    analyze,
    bifurcation_point,
    build_H,
    build_linearization,
    kernel_pair,
    kernel_residual,
    transversality_diag,
    uniqueness_scan,
)
from agebif.discretize import Grid, age_integral
from agebif.model import AgeProfile, CoefficientFn, normalize_birth, principal_eigenvalue, scalar_propagator
from agebif.reduced import solve_reduced
from agebif.spectral import dense_spectrum, solve_dense

from conftest import dense_laplacian, make_spec, pure_diffusion_spec
from test_discretize import dense_flux_operator


def setup(spec, n_x=16, n_a=32, eta=2.0, scheme="implicit_euler"):
    g = Grid(1.0, n_x, 1.0, n_a)
    spec = normalize_birth(spec, g, scheme)
    u = solve_reduced(spec, g, eta, scheme=scheme)
    return spec, g, u, build_linearization(spec, g, u)


def step_product(mats, weights, da):
    """sum_i w_i P_i with P_0 = I and P_{i+1} = (I + da M_{i+1})^{-1} P_i, by dense inverses."""
    n = mats[0].shape[0]
    P = np.eye(n)
    out = weights[0] * P
    for i in range(1, len(weights)):
        P = np.linalg.inv(np.eye(n) + da * mats[i]) @ P
        out = out + weights[i] * P
    return out


def test_linearization_without_weighting():
    spec, g, u, lin = setup(pure_diffusion_spec(c=0.0, d3=CoefficientFn.affine(2.0, 1.0),
                                                d4=CoefficientFn.affine(0.7, 3.0),
                                                mu2=CoefficientFn.affine(0.4, 2.0)))
    assert np.all(lin.U_hat_eta == 0)
    expected = 2.0 * dense_laplacian(g.n_x, g.h) + 0.4 * np.eye(g.n_x)
    np.testing.assert_allclose(lin.A3.to_dense(), expected, rtol=1e-13)


def test_linearization_shifted_laplacian():
    spec, g, u, lin = setup(pure_diffusion_spec(c=3.0, omega=AgeProfile.constant(1.0, 1.0)))
    expected = dense_laplacian(g.n_x, g.h) + 3.0 * np.eye(g.n_x)
    np.testing.assert_allclose(lin.A3.to_dense(), expected, rtol=1e-13)


def test_linearization_generic_vs_dense(small):
    spec, g, u, bif = small
    lin = bif.lin
    U = age_integral(u.field, spec.omega, g)
    ext = g.pad(U)
    ref = dense_flux_operator(g, spec.d3(ext), spec.d4(ext), spec.mu2(U))
    assert np.max(np.abs(lin.A3.to_dense() - ref)) <= 1e-12 * np.max(np.abs(ref))
    L = dense_laplacian(g.n_x, g.h)
    for i in (0, 7, g.n_a):
        A1 = L + 2 * spec.alpha * np.diag(u.field[i])
        assert np.max(np.abs(lin.A1_of_age[i].to_dense() - A1)) <= 1e-12 * np.max(np.abs(A1))


def test_H_pure_laplacian_gives_unit_radius():
    spec, g, u, lin = setup(pure_diffusion_spec(c=0.0))
    H = build_H(lin, spec, g)
    xi0, Psi0, gap, pair = bifurcation_point(H)
    assert abs(pair.radius - 1) <= 1e-12
    assert abs(xi0 - 1) <= 1e-12
    s = np.sin(np.pi * g.x)
    np.testing.assert_allclose(Psi0, s / s.max(), atol=1e-10)
    assert gap > 0


@pytest.mark.parametrize("c", [1.0, 5.0])
def test_H_shifted_closed_form(c):
    spec, g, u, lin = setup(pure_diffusion_spec(c=c))
    H = build_H(lin, spec, g)
    lam, _ = principal_eigenvalue(g)
    closed = np.sum(g.weights * spec.birth(g.ages) * scalar_propagator(lam + c, g, "implicit_euler"))
    xi0, Psi0, _, pair = bifurcation_point(H)
    assert abs(pair.radius - closed) <= 1e-10
    s = np.sin(np.pi * g.x)
    np.testing.assert_allclose(Psi0, s / s.max(), atol=1e-10)


def test_H_positivity(small):
    H = small[3].H
    assert np.all(H >= 0)
    assert np.all(H > 0)


def test_mortality_monotonicity():
    xis = []
    for c in (0.5, 1.0, 2.0):
        spec, g, u, lin = setup(make_spec(mu2=CoefficientFn.affine(c, 0.3)))
        xis.append(bifurcation_point(build_H(lin, spec, g))[0])
    assert xis[0] < xis[1] < xis[2]


@pytest.mark.parametrize("scheme", ["implicit_euler"])
def test_H_and_G1_vs_step_product(small, scheme):
    spec, g, u, bif = small
    wb = g.weights * spec.birth(g.ages)
    A3 = bif.lin.A3.to_dense()
    H_ref = step_product([A3] * (g.n_a + 1), wb, g.da)
    assert np.max(np.abs(bif.H - H_ref)) <= 1e-8 * np.max(np.abs(H_ref))
    A1 = [op.to_dense() for op in bif.lin.A1_of_age]
    G1_ref = step_product(A1, wb, g.da)
    assert np.max(np.abs(bif.G1 - G1_ref)) <= 1e-8 * np.max(np.abs(G1_ref))


def test_H_converges_to_expm_quadrature():
    # the continuous-age H uses exp(-a A3); the IE march converges at first order
    spec0 = make_spec()
    errs = []
    for n_a in (32, 64, 128):
        spec, g, u, lin = setup(spec0, n_x=8, n_a=n_a)
        H = build_H(lin, spec, g)
        D = lin.A3.to_dense()
        wb = g.weights * spec.birth(g.ages)
        ref = sum(w * scipy.linalg.expm(-a * D) for w, a in zip(wb, g.ages))
        errs.append(np.max(np.abs(H - ref)))
    rate = np.log2(errs[1] / errs[2])
    assert abs(rate - 1) < 0.3


def test_perron_radius_vs_dense(small):
    H = small[3].H
    xi0 = small[3].xi0
    ev = scipy.linalg.eigvals(H)
    assert abs(1 / xi0 - np.max(np.abs(ev))) <= 1e-8


def test_etaG1_contractive(small):
    spec, g, u, bif = small
    ev = dense_spectrum(2.0 * bif.G1)
    assert np.all(np.abs(ev) < 1)
    x = solve_dense(np.eye(g.n_x) - 2.0 * bif.G1, np.ones(g.n_x))
    assert np.all(x > 0)


def test_a2_source_is_operator_derivative(small):
    spec, g, u, bif = small
    psi = bif.psi_star
    Psi_hat = age_integral(psi, spec.omega, g)
    s = 1e-6
    plus = spec.u_operator(g, s * Psi_hat).matvec(u.field)
    minus = spec.u_operator(g, -s * Psi_hat).matvec(u.field)
    fd = (plus - minus) / (2 * s)
    np.testing.assert_allclose(a2_source(bif.lin, spec, g, psi), fd, atol=1e-6 * np.max(np.abs(fd)))


def test_kernel_pair_structure(small):
    spec, g, u, bif = small
    assert np.array_equal(bif.psi_star[0], bif.Psi0)
    assert np.array_equal(bif.phi_star[0], bif.Phi0)
    assert bif.xi0 > 0 and np.all(bif.Psi0 > 0) and bif.Psi0.max() == 1.0


def test_decoupled_kernel():
    spec, g, u, lin = setup(make_spec(d1=CoefficientFn.affine(1, 0), d2=CoefficientFn.affine(0, 0),
                                      mu1=CoefficientFn.affine(0, 0)))
    H = build_H(lin, spec, g)
    xi0, Psi0, _, _ = bifurcation_point(H)
    pair = kernel_pair(lin, spec, g, xi0, Psi0)
    assert np.all(pair.source == 0)
    assert np.all(pair.Phi0 == 0) and np.all(pair.phi_star == 0)
    assert kernel_residual(lin, spec, g, xi0, pair) <= 1e-12


def test_positivity_chain_with_mortality_coupling():
    spec, g, u, lin = setup(make_spec(d1=CoefficientFn.affine(1, 0), d2=CoefficientFn.affine(0, 0),
                                      mu1=CoefficientFn.affine(0, 0.8)))
    H = build_H(lin, spec, g)
    xi0, Psi0, _, _ = bifurcation_point(H)
    pair = kernel_pair(lin, spec, g, xi0, Psi0)
    assert np.all(pair.source >= 0)
    assert np.all(pair.Phi0 >= 0) and np.any(pair.Phi0 > 0)
    assert np.all(pair.phi_star >= -1e-15)


def test_kernel_residual_generic_and_homogeneous(medium):
    spec, g = medium
    u = solve_reduced(spec, g, 2.0)
    bif = analyze(spec, g, u)
    r1 = kernel_residual(bif.lin, spec, g, bif.xi0, (bif.phi_star, bif.psi_star))
    assert r1 <= 1e-8
    r2 = kernel_residual(bif.lin, spec, g, bif.xi0, (2 * bif.phi_star, 2 * bif.psi_star))
    assert abs(r2 - r1) <= 1e-15 + 1e-6 * r1
    wrong = kernel_residual(bif.lin, spec, g, 1.01 * bif.xi0, (bif.phi_star, bif.psi_star))
    assert wrong > 1e-3


def test_transversality_symmetric_case():
    spec, g, u, lin = setup(make_spec(d2=CoefficientFn.affine(0, 0), d4=CoefficientFn.affine(0.3, 0)))
    H = build_H(lin, spec, g)
    np.testing.assert_allclose(H, H.T, atol=1e-14 * np.max(H))
    xi0, Psi0, _, _ = bifurcation_point(H)
    gap, overlap = transversality_diag(H, xi0, Psi0)
    assert gap > 0 and abs(overlap - 1) < 1e-10


def test_transversality_generic_and_perturbed(small):
    H, xi0, Psi0 = small[3].H, small[3].xi0, small[3].Psi0
    gap, overlap = transversality_diag(H, xi0, Psi0)
    assert gap > 0 and 0 < overlap <= 1
    Hp = H + 0.5 / xi0 * np.outer(Psi0, Psi0) / (Psi0 @ Psi0)
    xi_p, Psi_p, _, _ = bifurcation_point(Hp)
    assert xi_p < xi0
    assert transversality_diag(Hp, xi_p, Psi_p)[1] > 0


def test_uniqueness_scan(small):
    H, xi0 = small[3].H, small[3].xi0
    xis = [f * xi0 for f in (0.25, 0.5, 0.75, 1.0, 1.5, 2.0)]
    scan = uniqueness_scan(H, xis)
    r = 1 / xi0
    assert np.max(np.abs(scan.radii - scan.xis * r) / (scan.xis * r)) <= 1e-12
    assert np.all(np.diff(scan.radii) > 0)
    assert scan.crossings == 1
    bracket = uniqueness_scan(H, [0.5 * xi0, xi0, 2 * xi0])
    assert bracket.signs() == [-1, 0, 1]


def test_analyze_requires_positive_solution():
    g = Grid(1.0, 8, 1.0, 16)
    spec = normalize_birth(make_spec(), g)
    with pytest.raises(ValueError):
        analyze(spec, g, solve_reduced(spec, g, 0.5))


def test_diagnostics_complete(small):
    d = small[3].diagnostics
    assert set(d) == {"gap", "r_etaG1", "etaG2_defect", "kernel_residual", "overlap"}
    assert d["gap"] > 0 and d["r_etaG1"] < 1 and d["kernel_residual"] < 1e-12

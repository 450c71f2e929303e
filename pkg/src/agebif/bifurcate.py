"""Linearization at the semi-trivial state, the bifurcation value xi_0 = 1/r(H), and the kernel pair.

Notation: the linearized first-species equation is  d_a phi + A1(a) phi = -A2 psi
and the second-species one  d_a psi + A3 psi = 0, with the renewal conditions
phi(0) = eta int b phi,  psi(0) = xi int b psi.  The kernel of the linearization
at xi_0 is spanned by (phi_star, psi_star).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretize import Grid, TriDiagOp, age_integral, assemble_elliptic
from .evolve import StepScheme, evolution_march, renewal_matrix, semigroup_march, step_residual
from .model import ModelSpec
from .reduced import ReducedSolution, g2_matrix, reduced_operator
from .spectral import PerronPair, SingularMatrixError, perron, solve_dense


@dataclass(frozen=True)
class LinearizedSystem:
    A3: TriDiagOp
    A1_of_age: list
    U_hat_eta: np.ndarray
    u_eta: ReducedSolution
    d1p0: float
    d2p0: float
    mu1p0: float


@dataclass(frozen=True)
class KernelPair:
    psi_star: np.ndarray
    Phi0: np.ndarray
    phi_star: np.ndarray
    source: np.ndarray  # -A2 psi_star on the age nodes


@dataclass
class BifurcationPoint:
    eta: float
    xi0: float
    Psi0: np.ndarray
    psi_star: np.ndarray
    Phi0: np.ndarray
    phi_star: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    H: np.ndarray | None = None
    G1: np.ndarray | None = None
    lin: LinearizedSystem | None = None


def build_linearization(spec: ModelSpec, grid: Grid, u_eta: ReducedSolution) -> LinearizedSystem:
    U_hat = age_integral(u_eta.field, spec.omega, grid)
    p3 = spec.d3(grid.pad(U_hat))
    if not np.all(p3 > 0):
        raise ValueError("d3 is not positive at the semi-trivial density; ellipticity fails")
    A3 = spec.v_operator(grid, U_hat)
    base = reduced_operator(spec, grid)
    A1 = [base.plus_diagonal(2.0 * spec.alpha * row) for row in u_eta.field]
    return LinearizedSystem(
        A3, A1, U_hat, u_eta,
        float(spec.d1.deriv(0.0)), float(spec.d2.deriv(0.0)), float(spec.mu1.deriv(0.0)),
    )


def build_H(lin: LinearizedSystem, spec: ModelSpec, grid: Grid, scheme="implicit_euler", threads: int = 1) -> np.ndarray:
    """Column j is  int b(a) exp(-a A3) e_j da."""
    return renewal_matrix(lambda rows: semigroup_march(lin.A3, rows, grid, scheme).field,
                          spec.birth, grid, threads)


def build_G1(lin: LinearizedSystem, spec: ModelSpec, grid: Grid, scheme="implicit_euler", threads: int = 1) -> np.ndarray:
    """Column j is  int b(a) U1(a, 0) e_j da  for the evolution generated by A1."""
    return renewal_matrix(lambda rows: evolution_march(lin.A1_of_age, rows, grid, scheme).field,
                          spec.birth, grid, threads)


def bifurcation_point(H: np.ndarray, tol: float = 1e-13) -> tuple[float, np.ndarray, float, PerronPair]:
    pair = perron(lambda v: H @ v, H.shape[0], tol=tol)
    return 1.0 / pair.radius, pair.vector, pair.gap, pair


def coupling_operator(lin: LinearizedSystem, grid: Grid, Psi_hat) -> TriDiagOp:
    """Derivative of the first-species operator in the direction of the weighted density Psi_hat.

    Applied to u_eta(a) this gives -(A2 psi)(a).
    """
    ext = grid.pad(Psi_hat)
    return assemble_elliptic(grid, lin.d1p0 * ext, lin.d2p0 * ext, lin.mu1p0 * np.asarray(Psi_hat),
                             check=False)


def a2_source(lin: LinearizedSystem, spec: ModelSpec, grid: Grid, psi_star: np.ndarray) -> np.ndarray:
    """-(A2 psi_star)(a_i) on every age node."""
    Psi_hat = age_integral(psi_star, spec.omega, grid)
    return coupling_operator(lin, grid, Psi_hat).matvec(lin.u_eta.field)


def kernel_pair(lin: LinearizedSystem, spec: ModelSpec, grid: Grid, xi0: float, Psi0,
                scheme="implicit_euler", G1=None, threads: int = 1) -> KernelPair:
    eta = lin.u_eta.eta
    psi_star = semigroup_march(lin.A3, Psi0, grid, scheme).field
    g = a2_source(lin, spec, grid, psi_star)
    chi = evolution_march(lin.A1_of_age, np.zeros(grid.n_x), grid, scheme, source=g).field
    if G1 is None:
        G1 = build_G1(lin, spec, grid, scheme, threads)
    M = np.eye(grid.n_x) - eta * G1
    try:
        Phi0 = eta * solve_dense(M, age_integral(chi, spec.birth, grid))
    except SingularMatrixError as exc:
        r = perron(lambda v: eta * (G1 @ v), grid.n_x, with_gap=False, strict=False).radius
        raise SingularMatrixError(f"1 - eta G1 is singular (r(eta G1) = {r!r})") from exc
    phi_star = evolution_march(lin.A1_of_age, Phi0, grid, scheme).field + chi
    return KernelPair(psi_star, Phi0, phi_star, g)


def kernel_residual(lin: LinearizedSystem, spec: ModelSpec, grid: Grid, xi0: float,
                    pair: KernelPair | tuple, scheme="implicit_euler") -> float:
    """Largest relative defect of the discrete kernel equations at (phi_star, psi_star).

    Covers both marching equations and both renewal conditions, measured
    against max(|phi_star|, |psi_star|).
    """
    if isinstance(pair, KernelPair):
        phi_star, psi_star = pair.phi_star, pair.psi_star
    else:
        phi_star, psi_star = pair
    eta = lin.u_eta.eta
    g = a2_source(lin, spec, grid, psi_star)
    parts = [
        step_residual(lin.A3, psi_star, grid, scheme),
        float(np.max(np.abs(psi_star[0] - xi0 * age_integral(psi_star, spec.birth, grid)))),
        step_residual(lin.A1_of_age, phi_star, grid, scheme, source=g),
        float(np.max(np.abs(phi_star[0] - eta * age_integral(phi_star, spec.birth, grid)))),
    ]
    scale = max(float(np.max(np.abs(phi_star))), float(np.max(np.abs(psi_star))))
    return max(parts) / scale if scale > 0 else max(parts)


def transversality_diag(H: np.ndarray, xi0: float, Psi0, tol: float = 1e-13) -> tuple[float, float]:
    """Simplicity gap of r(H) and the cosine between right and left Perron vectors.

    gap > 0 and overlap > 0 certify that the mixed derivative of the
    linearization leaves its range in the discrete problem.
    """
    right = perron(lambda v: H @ v, H.shape[0], tol=tol)
    left = perron(lambda v: H.T @ v, H.shape[0], tol=tol, with_gap=False)
    Psi0 = np.asarray(Psi0, dtype=float)
    overlap = float(left.vector @ Psi0 / (np.linalg.norm(left.vector) * np.linalg.norm(Psi0)))
    return right.gap, overlap


@dataclass(frozen=True)
class UniquenessScan:
    xis: np.ndarray
    radii: np.ndarray
    xi0: float
    crossings: int

    def signs(self, tol: float = 1e-12) -> list[int]:
        d = self.radii - 1.0
        return [0 if abs(x) <= tol else int(np.sign(x)) for x in d]


def uniqueness_scan(H: np.ndarray, xis, tol: float = 1e-13) -> UniquenessScan:
    """r(xi H) over the given xis, each computed by its own power iteration."""
    xis = np.asarray(sorted(float(x) for x in xis))
    radii = np.array([
        perron(lambda v, xi=xi: xi * (H @ v), H.shape[0], tol=tol, with_gap=False, strict=False).radius
        if xi > 0 else 0.0
        for xi in xis
    ])
    base = perron(lambda v: H @ v, H.shape[0], tol=tol, with_gap=False).radius
    scan = UniquenessScan(xis, radii, 1.0 / base, 0)
    s = scan.signs()
    crossings = s.count(0) + sum(1 for a, b in zip(s, s[1:]) if a * b < 0)
    return UniquenessScan(xis, radii, 1.0 / base, crossings)


def analyze(spec: ModelSpec, grid: Grid, u_eta: ReducedSolution, scheme="implicit_euler",
            threads: int = 1) -> BifurcationPoint:
    """Run the whole linear analysis at a converged semi-trivial state."""
    scheme = StepScheme(scheme)
    eta = u_eta.eta
    if u_eta.status != "positive":
        raise ValueError(f"semi-trivial branch needs a positive reduced solution (eta={eta}, status={u_eta.status})")
    lin = build_linearization(spec, grid, u_eta)
    H = build_H(lin, spec, grid, scheme, threads)
    xi0, Psi0, gap, _ = bifurcation_point(H)
    G1 = build_G1(lin, spec, grid, scheme, threads)
    r_etaG1 = perron(lambda v: eta * (G1 @ v), grid.n_x, with_gap=False).radius
    pair = kernel_pair(lin, spec, grid, xi0, Psi0, scheme, G1=G1)
    G2 = g2_matrix(spec, grid, u_eta, scheme, threads)
    g2_defect = float(np.max(np.abs(eta * (G2 @ u_eta.trace0) - u_eta.trace0)) / np.max(np.abs(u_eta.trace0)))
    _, overlap = transversality_diag(H, xi0, Psi0)
    diagnostics = {
        "gap": gap,
        "r_etaG1": r_etaG1,
        "etaG2_defect": g2_defect,
        "kernel_residual": kernel_residual(lin, spec, grid, xi0, pair, scheme),
        "overlap": overlap,
    }
    return BifurcationPoint(eta, xi0, Psi0, pair.psi_star, pair.Phi0, pair.phi_star,
                            diagnostics, H=H, G1=G1, lin=lin)

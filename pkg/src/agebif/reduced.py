"""Single-species problem  d_a u - u_xx = -alpha u^2,  u(0) = eta int b u da.

Solved by shooting in age: the unknown is the initial trace u(0, .) and the
residual compares it with eta times the birth integral of the marched field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretize import Grid, age_integral
from .evolve import StepScheme, frozen_march, renewal_matrix, semilinear_march, tangent_march
from .model import ModelSpec
from .spectral import ConvergenceError, SingularMatrixError, solve_dense

POSITIVE, TRIVIAL, DEGENERATE = "positive", "trivial", "degenerate"

# a trivial solution whose Jacobian is this ill-conditioned sits on the threshold
DEGENERACY_COND = 1e10
# converged traces below this sup-norm count as the zero solution
ZERO_LEVEL = 1e-8


@dataclass(frozen=True)
class ReducedSolution:
    eta: float
    field: np.ndarray
    trace0: np.ndarray
    residual: float
    newton_iters: int
    status: str

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.field)))


@dataclass(frozen=True)
class ScanRow:
    eta: float
    sup_norm: float
    min_trace0: float
    newton_iters: int
    status: str


def reduced_operator(spec: ModelSpec, grid: Grid):
    """Spatial operator of the first species when the second is absent (-u_xx under the assumptions)."""
    return spec.u_operator(grid, np.zeros(grid.n_x))


def reduced_residual(spec, grid, eta, u0, scheme="implicit_euler"):
    """Return (residual, field) for the shooting map at initial trace u0."""
    field = semilinear_march(reduced_operator(spec, grid), spec.alpha, u0, grid, scheme).field
    return u0 - eta * age_integral(field, spec.birth, grid), field


def reduced_jacobian(spec, grid, eta, field, scheme="implicit_euler", threads=1) -> np.ndarray:
    """I - eta * G_lin where G_lin is the birth integral of the tangent evolution."""
    A = reduced_operator(spec, grid)
    G = renewal_matrix(
        lambda rows: tangent_march(A, spec.alpha, field[:, None, :], rows, grid, scheme).field,
        spec.birth, grid, threads,
    )
    return np.eye(grid.n_x) - eta * G


def cold_start(grid: Grid, eta: float) -> np.ndarray:
    return 0.5 * (eta - 1.0) * np.sin(np.pi * grid.x / grid.length)


def solve_reduced(spec: ModelSpec, grid: Grid, eta: float, init=None, tol: float = 1e-10,
                  max_iter: int = 100, scheme="implicit_euler", threads: int = 1) -> ReducedSolution:
    """Newton on the initial trace with exact Jacobian of the discrete march.

    Negative iterates are clipped to zero; after two consecutive clips the
    solver takes a few damped Picard steps before resuming Newton.  For eta > 1
    a collapse onto the zero solution triggers restarts from larger seeds.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    scheme = StepScheme(scheme)
    seeds = [np.clip(np.asarray(init, float), 0, None)] if init is not None else [np.clip(cold_start(grid, eta), 0, None)]
    if eta > 1:
        seeds += [4.0**k * np.clip(cold_start(grid, eta), 0, None) + 1e-3 * 4.0**k for k in range(1, 4)]

    sol = None
    for seed in seeds:
        sol = _newton(spec, grid, eta, seed, tol, max_iter, scheme, threads)
        if not (eta > 1 and sol.status != POSITIVE):
            break
    return sol


def _newton(spec, grid, eta, u0, tol, max_iter, scheme, threads) -> ReducedSolution:
    clips = 0
    total = 0
    R, field = reduced_residual(spec, grid, eta, u0, scheme)
    res = float(np.max(np.abs(R)))
    while res > tol:
        if total >= max_iter:
            raise ConvergenceError(f"reduced Newton did not converge (eta={eta})", res, total)
        total += 1
        J = reduced_jacobian(spec, grid, eta, field, scheme, threads)
        try:
            step = solve_dense(J, R)
        except SingularMatrixError:
            return ReducedSolution(eta, field, u0, res, total, DEGENERATE)
        u_new = u0 - step
        if np.any(u_new < 0):
            u_new = np.clip(u_new, 0, None)
            clips += 1
        else:
            clips = 0
        u0 = u_new
        if clips >= 2:
            u0 = _picard(spec, grid, eta, u0, scheme, iters=20)
            clips = 0
        R, field = reduced_residual(spec, grid, eta, u0, scheme)
        res = float(np.max(np.abs(R)))

    # For eta <= 1 there is no positive root: the nonlinear renewal map lies
    # strictly below the linear one, whose spectral radius is eta.  Near eta = 1
    # Newton only creeps towards zero (the residual is quadratic there), so a
    # small converged trace is replaced by the exact root u = 0.
    if eta <= 1.0 and 0 < float(np.max(u0)) <= 1e-3:
        u0 = np.zeros_like(u0)
        R, field = reduced_residual(spec, grid, eta, u0, scheme)
        res = float(np.max(np.abs(R)))

    scale = float(np.max(u0)) if u0.size else 0.0
    if scale <= ZERO_LEVEL:
        J = reduced_jacobian(spec, grid, eta, field, scheme, threads)
        try:
            solve_dense(J, np.zeros(grid.n_x), cond_limit=DEGENERACY_COND)
            status = TRIVIAL
        except SingularMatrixError:
            status = DEGENERATE
    else:
        status = POSITIVE
    return ReducedSolution(eta, field, u0.copy(), res, total, status)


def _picard(spec, grid, eta, u0, scheme, iters, theta=0.5):
    for _ in range(iters):
        R, _ = reduced_residual(spec, grid, eta, u0, scheme)
        u0 = u0 - theta * R
    return u0


def picard_reduced(spec, grid, eta, u0, tol=1e-12, max_iter=100_000, theta=0.5, scheme="implicit_euler"):
    """Damped fixed-point iteration u0 <- (1 - theta) u0 + theta eta int b u da (reference solver)."""
    u0 = np.asarray(u0, dtype=float)
    for k in range(max_iter):
        R, _ = reduced_residual(spec, grid, eta, u0, scheme)
        if np.max(np.abs(R)) <= tol:
            return u0, k
        u0 = u0 - theta * R
    raise ConvergenceError("Picard iteration did not converge", float(np.max(np.abs(R))), max_iter)


def eta_scan(spec: ModelSpec, grid: Grid, etas, tol: float = 1e-10, scheme="implicit_euler",
             threads: int = 1) -> list[ScanRow]:
    """Continuation in eta: each solution seeds the next; trivial seeds fall back to a cold start."""
    etas = [float(e) for e in etas]
    if any(b < a for a, b in zip(etas, etas[1:])):
        raise ValueError("etas must be sorted ascending")
    rows = []
    prev = None
    for eta in etas:
        if eta <= 1.0:
            init = np.zeros(grid.n_x)
        elif prev is not None and prev.status == POSITIVE:
            init = prev.trace0
        else:
            init = None
        sol = solve_reduced(spec, grid, eta, init=init, tol=tol, scheme=scheme, threads=threads)
        rows.append(ScanRow(eta, sol.sup_norm, float(np.min(sol.trace0)), sol.newton_iters, sol.status))
        prev = sol
    return rows


def g2_matrix(spec: ModelSpec, grid: Grid, sol: ReducedSolution, scheme="implicit_euler", threads: int = 1):
    """Birth integral of the linear evolution generated by -u_xx + alpha u_eta(a)."""
    A = reduced_operator(spec, grid)
    frozen = sol.field[:, None, :]
    return renewal_matrix(
        lambda rows: frozen_march(A, spec.alpha, frozen, rows, grid, scheme).field,
        spec.birth, grid, threads,
    )

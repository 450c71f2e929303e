"""Full two-species steady-state residual, Newton solves, and branch continuation.

The unknown is Z = (u0, v0, U_hat, V_hat), four interior profiles.  Fixing the
weighted densities decouples the species: each field is then one semilinear age
march from its initial trace, and the residual collects the two renewal
conditions and the two consistency conditions on the densities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._parallel import map_batches
from .bifurcate import BifurcationPoint
from .discretize import Grid, SingularOperatorError, age_integral
from .evolve import semilinear_march
from .model import ModelSpec
from .reduced import ReducedSolution
from .spectral import ConvergenceError, SingularMatrixError, solve_dense


@dataclass(frozen=True)
class CoexistenceState:
    u0: np.ndarray
    v0: np.ndarray
    U_hat: np.ndarray
    V_hat: np.ndarray
    u_field: np.ndarray
    v_field: np.ndarray
    xi: float

    @property
    def Z(self) -> np.ndarray:
        return np.concatenate([self.u0, self.v0, self.U_hat, self.V_hat])


@dataclass(frozen=True)
class BranchPoint:
    state: CoexistenceState
    eps: float
    residual: float
    newton_iters: int
    min_u: float
    min_v: float

    @property
    def xi(self) -> float:
        return self.state.xi

    @property
    def coexistence(self) -> bool:
        return self.min_u > 0 and self.min_v > 0


@dataclass
class Branch:
    points: list
    origin: BifurcationPoint
    eta: float
    stop_reason: str = "completed"
    ds_history: list = field(default_factory=list)

    def initial_slope(self) -> float:
        """Empirical d xi / d eps at the bifurcation point from the smallest-eps point."""
        p = min(self.points, key=lambda q: abs(q.eps))
        return (p.xi - self.origin.xi0) / p.eps


def split(Z, n: int):
    Z = np.asarray(Z, dtype=float)
    return Z[..., :n], Z[..., n:2 * n], Z[..., 2 * n:3 * n], Z[..., 3 * n:4 * n]


def march_state(spec: ModelSpec, grid: Grid, Z, scheme="implicit_euler"):
    """Fields (u, v) generated by Z; batch axes of Z sit between age and space axes."""
    u0, v0, U_hat, V_hat = split(Z, grid.n_x)
    u = semilinear_march(spec.u_operator(grid, V_hat), spec.alpha, u0, grid, scheme).field
    v = semilinear_march(spec.v_operator(grid, U_hat), spec.beta, v0, grid, scheme).field
    return u, v


def evaluate(spec: ModelSpec, grid: Grid, eta, xi, Z, scheme="implicit_euler"):
    """Residual together with the marched fields."""
    u0, v0, U_hat, V_hat = split(Z, grid.n_x)
    u, v = march_state(spec, grid, Z, scheme)
    xi = np.asarray(xi, dtype=float)[..., None]
    R = np.concatenate([
        u0 - eta * age_integral(u, spec.birth, grid),
        v0 - xi * age_integral(v, spec.birth, grid),
        U_hat - age_integral(u, spec.omega, grid),
        V_hat - age_integral(v, spec.omega, grid),
    ], axis=-1)
    return R, u, v


def residual_full(spec: ModelSpec, grid: Grid, eta, xi, Z, scheme="implicit_euler") -> np.ndarray:
    return evaluate(spec, grid, eta, xi, Z, scheme)[0]


def semitrivial_state(u_eta: ReducedSolution, spec: ModelSpec, grid: Grid) -> np.ndarray:
    n = grid.n_x
    U_hat = age_integral(u_eta.field, spec.omega, grid)
    return np.concatenate([u_eta.trace0, np.zeros(n), U_hat, np.zeros(n)])


def swap_state(Z, n: int) -> np.ndarray:
    u0, v0, U_hat, V_hat = split(Z, n)
    return np.concatenate([v0, u0, V_hat, U_hat], axis=-1)


def _dot_last(A, t) -> np.ndarray:
    """Contract the last axis in a fixed order, so results do not depend on batch shape."""
    A = np.asarray(A, dtype=float)
    acc = np.zeros(A.shape[:-1])
    for k in range(A.shape[-1]):
        acc = acc + A[..., k] * t[k]
    return acc


def inner(f, g, grid: Grid):
    """Age-space inner product: trapezoid in age, midpoint sums in space."""
    return grid.h * _dot_last(age_integral(f * g, np.ones(grid.n_a + 1), grid), np.ones(grid.n_x))


def fd_jacobian(fun, X, R0, threads: int = 1) -> np.ndarray:
    """Forward-difference Jacobian of a batched map, one column per unknown."""
    X = np.asarray(X, dtype=float)
    step = np.sqrt(np.finfo(float).eps) * (1.0 + np.max(np.abs(X)))
    batch = X[None, :] + step * np.eye(X.size)
    return ((map_batches(fun, batch, threads) - R0) / step).T


_SOLVE_FAILURES = (ConvergenceError, SingularMatrixError, SingularOperatorError, ValueError, FloatingPointError)


def newton(fun, X0, tol: float, max_iter: int = 20, threads: int = 1):
    """Newton with finite-difference Jacobian on a batched residual ``fun``.

    Returns (X, residual, iterations).
    """
    X = np.array(X0, dtype=float)
    R = fun(X[None])[0]
    res = float(np.max(np.abs(R)))
    first = res
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(f"Newton did not reach {tol:g} in {max_iter} iterations", res, it)
        J = fd_jacobian(fun, X, R, threads)
        X = X - solve_dense(J, R)
        R = fun(X[None])[0]
        res = float(np.max(np.abs(R)))
        it += 1
        if not np.isfinite(res) or res > 1e3 * max(first, tol):
            raise ConvergenceError("Newton diverged", res, it)
    return X, res, it


def _make_point(spec, grid, eta, X, res, iters, scheme, psi_star=None) -> BranchPoint:
    Z, xi = X[:-1], float(X[-1])
    u0, v0, U_hat, V_hat = split(Z, grid.n_x)
    u, v = march_state(spec, grid, Z, scheme)
    eps = float(inner(v, psi_star, grid) / inner(psi_star, psi_star, grid)) if psi_star is not None else float("nan")
    state = CoexistenceState(u0.copy(), v0.copy(), U_hat.copy(), V_hat.copy(), u, v, xi)
    return BranchPoint(state, eps, res, iters, float(u.min()), float(v.min()))


def solve_coexistence(spec: ModelSpec, grid: Grid, eta: float, xi: float, Z_init, tol: float = 1e-10,
                      max_iter: int = 20, scheme="implicit_euler", threads: int = 1, psi_star=None) -> BranchPoint:
    """Newton on Z at fixed (eta, xi).

    Converging to a state without coexistence is not an error; inspect
    ``min_u``/``min_v`` or ``coexistence`` on the result.
    """
    def fun(Zb):
        return residual_full(spec, grid, eta, xi, Zb, scheme)

    Z, res, it = newton(fun, Z_init, tol, max_iter, threads)
    return _make_point(spec, grid, eta, np.append(Z, xi), res, it, scheme, psi_star)


def picard_full(spec, grid, eta, xi, Z, tol=1e-12, theta=0.5, max_iter=200_000, scheme="implicit_euler"):
    """Damped fixed-point iteration Z <- Z - theta R(Z) (reference solver for small grids)."""
    Z = np.array(Z, dtype=float)
    for k in range(max_iter):
        R = residual_full(spec, grid, eta, xi, Z, scheme)
        if np.max(np.abs(R)) <= tol:
            return Z, k
        Z = Z - theta * R
    raise ConvergenceError("Picard iteration did not converge", float(np.max(np.abs(R))), max_iter)


def continue_branch(spec: ModelSpec, grid: Grid, eta: float, bif: BifurcationPoint, u_eta: ReducedSolution,
                    eps0: float, ds: float | None = None, n_steps: int = 8, tol: float = 1e-10,
                    scheme="implicit_euler", threads: int = 1, max_iter: int = 12,
                    max_halvings: int = 5) -> Branch:
    """Trace the coexistence branch leaving (xi0, u_eta, 0).

    The first point is the kernel predictor  u = u_eta - eps0 phi_star,
    v = eps0 psi_star  at xi0, corrected by Newton in (Z, xi) with the
    projection of v on psi_star held at eps0.  When the predictor trace is not
    positive, or the correction fails or misses the coexistence region, the
    anchor is first solved at eps0 / 2^k and walked back up to eps0.  Further points come from
    pseudo-arclength steps along the secant; ``ds`` defaults to the distance
    from the bifurcation point to the first point.  At most ``n_steps`` steps
    follow the first point.
    """
    n = grid.n_x
    psi = bif.psi_star
    psi_norm2 = float(inner(psi, psi, grid))
    X_bif = np.append(semitrivial_state(u_eta, spec, grid), bif.xi0)
    direction = np.concatenate([
        -bif.Phi0, bif.Psi0,
        -age_integral(bif.phi_star, spec.omega, grid), age_integral(psi, spec.omega, grid),
        [0.0],
    ])

    def corrected(target, X0):
        def anchored(Xb):
            R, _, v = evaluate(spec, grid, eta, Xb[..., -1], Xb[..., :-1], scheme)
            eps = inner(v, psi[:, None, :] if v.ndim == 3 else psi, grid) / psi_norm2
            return np.concatenate([R, (eps - target)[..., None]], axis=-1)
        X, res, it = newton(anchored, X0, tol, max_iter, threads)
        return X, res, it, _make_point(spec, grid, eta, X, res, it, scheme, psi)

    # the anchor starts at the largest eps0 / 2^k whose predictor trace
    # u_eta(0) - eps Phi0 is positive; it is walked back up to eps0 from there,
    # and restarted one halving lower if a correction fails or misses coexistence
    k0 = 0
    while k0 < max_halvings and np.min(u_eta.trace0 - eps0 * 0.5**k0 * bif.Phi0) <= 0:
        k0 += 1
    failure, found = None, None
    for k in range(k0, max_halvings + 1):
        targets = eps0 * 0.5 ** np.arange(k, -1, -1)
        try:
            X, res, it, point = corrected(targets[0], X_bif + targets[0] * direction)
            for lo, hi in zip(targets[:-1], targets[1:]):
                # linear extrapolation in eps through the bifurcation point
                X, res, it, point = corrected(hi, X_bif + (X - X_bif) * (hi / lo))
        except _SOLVE_FAILURES as exc:
            failure = exc
            continue
        found = (X, point)
        if point.coexistence:
            break
    if found is None:
        raise ConvergenceError(
            f"predictor correction failed at eps0={eps0!r}: {failure} "
            f"(kernel residual {bif.diagnostics.get('kernel_residual', float('nan'))!r})"
        ) from failure
    X, first = found

    points = [first]
    branch = Branch(points, bif, eta)
    if not points[0].coexistence:
        branch.stop_reason = "first point is not a coexistence state"
        return branch

    secant = X - X_bif
    ds0 = float(np.linalg.norm(secant)) if ds is None else float(ds)
    t = secant / np.linalg.norm(secant)
    X_prev, h, easy = X, ds0, 0

    for _ in range(n_steps):
        for _halving in range(max_halvings + 1):
            def arclength(Xb, X_prev=X_prev, t=t, h=h):
                R = residual_full(spec, grid, eta, Xb[..., -1], Xb[..., :-1], scheme)
                c = _dot_last(Xb - X_prev, t) - h
                return np.concatenate([R, np.asarray(c)[..., None]], axis=-1)
            try:
                X_new, res, it = newton(arclength, X_prev + h * t, tol, max_iter, threads)
                break
            except _SOLVE_FAILURES:
                h *= 0.5
        else:
            branch.stop_reason = "Newton failed after step halving"
            return branch

        point = _make_point(spec, grid, eta, X_new, res, it, scheme, psi)
        if not point.coexistence:
            branch.stop_reason = "left the coexistence region"
            return branch
        points.append(point)
        branch.ds_history.append(h)

        secant = X_new - X_prev
        t = secant / np.linalg.norm(secant)
        X_prev = X_new
        easy = easy + 1 if it <= 3 else 0
        if easy >= 3:
            h, easy = min(2.0 * h, ds0), 0
    return branch

"""Perron eigenpairs by power iteration, plus small dense helpers used as oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class PositivityError(ArithmeticError):
    """The operator did not behave like a strongly positive one."""


class ConvergenceError(ArithmeticError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PerronPair:
    radius: float
    vector: np.ndarray
    gap: float
    iterations: int
    residual: float
    strictly_positive: bool


def perron(apply: Callable[[np.ndarray], np.ndarray], dim: int, tol: float = 1e-12,
           max_iter: int = 10_000, *, strict: bool = True, with_gap: bool = True,
           positivity_floor: float = 1e-8) -> PerronPair:
    """Dominant eigenpair of a positive operator by power iteration.

    Starts from the all-ones vector, normalizes in the max-norm and estimates
    the radius by the Rayleigh quotient.  Stops once consecutive radii agree
    and ``|Kv - r v|_inf`` are both below ``tol * max(1, r)``.

    A vector entry below ``positivity_floor`` marks the operator as not
    strongly positive; with ``strict`` that raises PositivityError.  The gap
    ``1 - |lambda_2| / r`` comes from one extra (two-vector) power run on the
    deflated map ``y -> K y - r v (v.y)/(v.v)``, whose spectrum is that of K
    with r replaced by 0.
    """
    v = np.ones(dim)
    w = apply(v)
    if not np.all(w > 0):
        raise PositivityError("operator does not map the ones vector to a strictly positive vector")

    radius_old = np.inf
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = apply(v)
        if np.any(w < 0):
            raise PositivityError(f"negative entry in power iterate {it}")
        radius = float(v @ w / (v @ v))
        residual = float(np.max(np.abs(w - radius * v)))
        scale = max(1.0, abs(radius))
        v = w / np.max(np.abs(w))
        if abs(radius - radius_old) <= tol * scale and residual <= tol * scale:
            break
        radius_old = radius
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} steps",
                               residual, max_iter)

    w = apply(v)
    radius = float(v @ w / (v @ v))
    residual = float(np.max(np.abs(w - radius * v)))

    positive = bool(np.min(v) > positivity_floor)
    if strict and not positive:
        raise PositivityError(f"Perron vector has entry {np.min(v)!r}; operator is not strongly positive")

    gap = _deflated_gap(apply, v, radius, dim) if with_gap else float("nan")
    return PerronPair(radius, v, gap, it, residual, positive)


def _deflated_gap(apply, v, radius, dim, max_iter=2000, rtol=1e-10, width=8) -> float:
    """1 - |lambda_2| / r from a block power run on the deflated map.

    A block of ``width`` vectors with a Rayleigh-Ritz step resolves complex
    pairs and clusters of nearly equal modulus behind the Perron root.
    """
    if dim == 1 or radius == 0:
        return 1.0
    x = v / float(v @ v)

    def deflated(Y):
        cols = [apply(Y[:, k]) - radius * v * float(x @ Y[:, k]) for k in range(Y.shape[1])]
        return np.stack(cols, axis=1)

    width = min(width, dim - 1)
    Y = np.random.default_rng(0).standard_normal((dim, width))
    Y, _ = np.linalg.qr(Y)
    est = np.inf
    for _ in range(max_iter):
        Z = deflated(Y)
        T = Y.T @ Z
        new = float(np.max(np.abs(np.linalg.eigvals(T)))) if width > 1 else abs(float(T[0, 0]))
        if np.max(np.abs(Z)) == 0.0:
            return 1.0
        Y, _ = np.linalg.qr(Z)
        if abs(new - est) <= rtol * radius:
            est = new
            break
        est = new
    return 1.0 - est / radius


def dense_spectrum(K) -> np.ndarray:
    """All eigenvalues, largest modulus first."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("square matrix required")
    if K.shape[0] > 512:
        raise ValueError("dense_spectrum is meant for dim <= 512")
    ev = np.linalg.eigvals(K)
    order = np.lexsort((-ev.real, -np.abs(ev)))
    ev = ev[order]
    if np.all(np.abs(ev.imag) <= 1e-12 * max(1.0, np.max(np.abs(ev)))):
        ev = ev.real
    return ev


def solve_dense(M, rhs, cond_limit: float | None = None) -> np.ndarray:
    """Gaussian elimination with partial pivoting; refuses numerically singular M."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.ndim != 2 or M.shape[1] != n:
        raise ValueError("square matrix required")
    if cond_limit is None:
        cond_limit = 1.0 / (n * np.finfo(float).eps)
    try:
        x = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix is exactly singular") from exc
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularMatrixError(f"matrix is singular to working precision (cond = {cond:.3e})")
    return x

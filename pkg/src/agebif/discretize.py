"""Uniform age x space grids, tridiagonal divergence-form operators and age quadrature.

Space is the interval (0, L) with homogeneous Dirichlet conditions; only the
``n_x`` interior nodes carry unknowns.  Age is ``[0, a_max]`` split into
``n_a`` equal steps.  Every array that lives on the age grid has the age index
on axis 0; every spatial array has the space index on the last axis, so batches
of profiles or operators broadcast over the axes in between.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class SingularOperatorError(ArithmeticError):
    """A tridiagonal elimination hit a zero (or non-finite) pivot."""


class MeshPecletWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Grid:
    length: float
    n_x: int
    a_max: float
    n_a: int

    def __post_init__(self):
        if not (self.length > 0 and self.a_max > 0):
            raise ValueError("length and a_max must be positive")
        if self.n_x < 3 or self.n_a < 2:
            raise ValueError("need n_x >= 3 and n_a >= 2")

    @property
    def h(self) -> float:
        return self.length / (self.n_x + 1)

    @property
    def da(self) -> float:
        return self.a_max / self.n_a

    @cached_property
    def x(self) -> np.ndarray:
        """Interior space nodes x_1 .. x_{n_x}."""
        return self.h * np.arange(1, self.n_x + 1)

    @cached_property
    def x_full(self) -> np.ndarray:
        return self.h * np.arange(self.n_x + 2)

    @cached_property
    def ages(self) -> np.ndarray:
        return self.da * np.arange(self.n_a + 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights on the age nodes."""
        w = np.full(self.n_a + 1, self.da)
        w[0] = w[-1] = 0.5 * self.da
        return w

    def refined(self, factor: int = 2) -> "Grid":
        """Grid with ``factor`` times the cells in both directions (nested nodes)."""
        return Grid(self.length, factor * (self.n_x + 1) - 1, self.a_max, factor * self.n_a)

    def pad(self, interior: np.ndarray) -> np.ndarray:
        """Append the zero Dirichlet boundary values on both ends of the last axis."""
        interior = np.asarray(interior, dtype=float)
        out = np.zeros(interior.shape[:-1] + (interior.shape[-1] + 2,))
        out[..., 1:-1] = interior
        return out


@dataclass(frozen=True)
class TriDiagOp:
    """Tridiagonal matrix stored as three equal-length diagonals.

    ``sub[..., 0]`` and ``sup[..., -1]`` fall outside the matrix and are kept
    at zero.  Leading axes (if any) index a batch of independent operators.
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.shape[-1]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        y[..., 1:] += self.sub[..., 1:] * x[..., :-1]
        y[..., :-1] += self.sup[..., :-1] * x[..., 1:]
        return y

    def step(self, c: float, extra_diag=None) -> "TriDiagOp":
        """The operator I + c*A (+ diag(extra_diag))."""
        diag = 1.0 + c * self.diag
        if extra_diag is not None:
            diag = diag + extra_diag
        return TriDiagOp(c * self.sub, diag, c * self.sup)

    def plus_diagonal(self, d) -> "TriDiagOp":
        return TriDiagOp(self.sub, self.diag + d, self.sup)

    def scaled(self, c: float) -> "TriDiagOp":
        return TriDiagOp(c * self.sub, c * self.diag, c * self.sup)

    def to_dense(self) -> np.ndarray:
        if self.diag.ndim != 1:
            raise ValueError("to_dense only for a single operator")
        return np.diag(self.diag) + np.diag(self.sub[1:], -1) + np.diag(self.sup[:-1], 1)

    def is_m_matrix(self) -> bool:
        """Sign pattern check: positive diagonal, nonpositive off-diagonals."""
        return bool(np.all(self.diag > 0) and np.all(self.sub <= 0) and np.all(self.sup <= 0))


def assemble_elliptic(grid: Grid, p, q, r, *, check: bool = True) -> TriDiagOp:
    """Discretize  L phi = -d/dx (p dphi/dx + phi dq/dx) + r phi  on the interior nodes.

    ``p`` and ``q`` are given at all ``n_x + 2`` nodes (boundaries included),
    ``r`` at the interior nodes.  Interface values of ``p`` are arithmetic means
    and the advected ``phi`` at an interface is the mean of its neighbours, so
    the scheme is second order and conservative: each column sums to ``r``.

    With ``check=False`` no sign requirement is placed on ``p``; the assembly is
    then just a bilinear form in (p, q) and phi, which is how derivatives of the
    operator with respect to its coefficients are obtained.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    if p.shape[-1] != grid.n_x + 2 or q.shape[-1] != grid.n_x + 2:
        raise ValueError("p and q need n_x + 2 nodal values")
    if check and not np.all(p > 0):
        raise ValueError("diffusion coefficient must be positive at every node")

    inv_h2 = 1.0 / grid.h**2
    p_face = 0.5 * (p[..., :-1] + p[..., 1:])
    dq_face = q[..., 1:] - q[..., :-1]

    pl, pr = p_face[..., :-1], p_face[..., 1:]
    ql, qr = dq_face[..., :-1], dq_face[..., 1:]

    sub = -(pl - 0.5 * ql) * inv_h2
    sup = -(pr + 0.5 * qr) * inv_h2
    diag = (pr - 0.5 * qr + pl + 0.5 * ql) * inv_h2 + r
    sub[..., 0] = 0.0
    sup[..., -1] = 0.0

    if check and np.any(np.abs(dq_face) >= 2.0 * p_face):
        warnings.warn(
            "drift too strong for the mesh: off-diagonals change sign, positivity is not guaranteed",
            MeshPecletWarning,
            stacklevel=2,
        )
    return TriDiagOp(sub, diag, sup)


def laplacian(grid: Grid) -> TriDiagOp:
    """The discrete Dirichlet operator -d^2/dx^2."""
    n = grid.n_x + 2
    return assemble_elliptic(grid, np.ones(n), np.zeros(n), np.zeros(grid.n_x))


def age_integral(field: np.ndarray, profile, grid: Grid) -> np.ndarray:
    """Trapezoid rule for  int_0^{a_max} profile(a) field(a, .) da.

    ``profile`` is either callable on the age nodes or an array of values there.
    The sum runs over ages in a fixed order, so a column's value never depends
    on what else sits in the batch.
    """
    field = np.asarray(field, dtype=float)
    if field.shape[0] != grid.n_a + 1:
        raise ValueError("field must have n_a + 1 age rows")
    values = profile(grid.ages) if callable(profile) else np.asarray(profile, dtype=float)
    coeffs = grid.weights * values
    out = np.zeros(field.shape[1:])
    for c, row in zip(coeffs, field):
        out += c * row
    return out


def _front(a: np.ndarray, shape) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(np.broadcast_to(a, shape), -1, 0))


def solve_tridiag(op: TriDiagOp, rhs) -> np.ndarray:
    """Solve op @ x = rhs by elimination without pivoting (Thomas algorithm).

    Stable for the diagonally dominant / M-matrix operators built here.  Batch
    axes of ``op`` and ``rhs`` broadcast against each other.
    """
    rhs = np.asarray(rhs, dtype=float)
    shape = np.broadcast_shapes(op.diag.shape, op.sub.shape, op.sup.shape, rhs.shape)
    a, b, c, d = (_front(v, shape) for v in (op.sub, op.diag, op.sup, rhs))
    n = shape[-1]

    cp = np.empty_like(b)
    dp = np.empty_like(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        den = b[0]
        _check_pivot(den, 0)
        cp[0] = c[0] / den
        dp[0] = d[0] / den
        for i in range(1, n):
            den = b[i] - a[i] * cp[i - 1]
            _check_pivot(den, i)
            cp[i] = c[i] / den
            dp[i] = (d[i] - a[i] * dp[i - 1]) / den

    x = np.empty_like(b)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.moveaxis(x, 0, -1)


def _check_pivot(den, i):
    if not np.all(np.isfinite(den)) or np.any(den == 0.0):
        raise SingularOperatorError(f"zero pivot in row {i}")

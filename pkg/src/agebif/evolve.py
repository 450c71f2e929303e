"""Age marching of linear and semilinear parabolic problems  d_a u + A(a) u = ...

A step from a_i to a_{i+1} is the theta-scheme

    (I + theta da A_{i+1}) u_{i+1} = (I - (1 - theta) da A_i) u_i + da g_{i+theta}

with theta = 1 (implicit Euler) or 1/2 (Crank-Nicolson).  Operators are either a
single TriDiagOp (autonomous case) or a sequence with one operator per age node.
The quadratic decay term of the semilinear problem is linearized by lagging one
factor, which keeps every step a single tridiagonal solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np

from ._parallel import map_batches
from .discretize import Grid, TriDiagOp, age_integral, solve_tridiag


class StepScheme(str, Enum):
    IMPLICIT_EULER = "implicit_euler"
    CRANK_NICOLSON = "crank_nicolson"

    @property
    def theta(self) -> float:
        return 1.0 if self is StepScheme.IMPLICIT_EULER else 0.5


Ops = Union[TriDiagOp, Sequence[TriDiagOp]]


@dataclass(frozen=True)
class MarchResult:
    field: np.ndarray
    min_value: float
    steps: int


def _op_at(ops: Ops, i: int) -> TriDiagOp:
    return ops if isinstance(ops, TriDiagOp) else ops[i]


def _march(grid: Grid, scheme, ops: Ops, phi0, extra_diag=None, extra_rhs=None) -> MarchResult:
    scheme = StepScheme(scheme)
    if not isinstance(ops, TriDiagOp) and len(ops) != grid.n_a + 1:
        raise ValueError("need one operator per age node")
    theta, da = scheme.theta, grid.da
    phi0 = np.asarray(phi0, dtype=float)
    shape = np.broadcast_shapes(phi0.shape, _op_at(ops, 0).diag.shape)
    field = np.empty((grid.n_a + 1,) + shape)
    field[0] = phi0

    for i in range(grid.n_a):
        rhs = field[i]
        if theta < 1.0:
            rhs = rhs - (1.0 - theta) * da * _op_at(ops, i).matvec(field[i])
        if extra_rhs is not None:
            rhs = rhs + extra_rhs(i, field)
        d = None if extra_diag is None else extra_diag(i, field)
        field[i + 1] = solve_tridiag(_op_at(ops, i + 1).step(theta * da, d), rhs)

    return MarchResult(field, float(field.min()), grid.n_a)


def _source_term(source, grid: Grid, theta: float):
    if source is None:
        return None
    g = np.asarray(source, dtype=float)
    if g.shape[0] != grid.n_a + 1:
        raise ValueError("source must have n_a + 1 age rows")
    da = grid.da
    return lambda i, field: da * (theta * g[i + 1] + (1.0 - theta) * g[i])


def semigroup_march(A: TriDiagOp, psi0, grid: Grid, scheme="implicit_euler") -> MarchResult:
    """Rows approximate exp(-a_i A) psi0."""
    return _march(grid, scheme, A, psi0)


def evolution_march(A_of_age: Ops, phi0, grid: Grid, scheme="implicit_euler", source=None) -> MarchResult:
    """Rows approximate U(a_i, 0) phi0 + int_0^{a_i} U(a_i, s) g(s) ds.

    ``source`` holds g on the age nodes, shape (n_a + 1, ..., n_x).
    """
    scheme = StepScheme(scheme)
    return _march(grid, scheme, A_of_age, phi0, extra_rhs=_source_term(source, grid, scheme.theta))


def semilinear_march(A_of_age: Ops, quad_coeff, phi0, grid: Grid, scheme="implicit_euler") -> MarchResult:
    """March  d_a u + A u = -c u^2  with the step matrix I + theta da A + da c diag(u_i)."""
    da = grid.da
    c = np.asarray(quad_coeff, dtype=float)
    return _march(grid, scheme, A_of_age, phi0, extra_diag=lambda i, f: da * c * f[i])


def frozen_march(A_of_age: Ops, quad_coeff, frozen: np.ndarray, phi0, grid: Grid,
                 scheme="implicit_euler") -> MarchResult:
    """Linear march with the quadratic coefficient frozen at a given field.

    This is the evolution generated by A + c u(a) in exactly the discrete form
    used by :func:`semilinear_march`, so marching ``frozen[0]`` reproduces
    ``frozen``.
    """
    da = grid.da
    c = np.asarray(quad_coeff, dtype=float)
    frozen = np.asarray(frozen, dtype=float)
    return _march(grid, scheme, A_of_age, phi0, extra_diag=lambda i, f: da * c * frozen[i])


def tangent_march(A_of_age: Ops, quad_coeff, base: np.ndarray, dphi0, grid: Grid,
                  scheme="implicit_euler", source=None) -> MarchResult:
    """Exact derivative of :func:`semilinear_march` at ``base`` in direction ``dphi0``.

    A consistent discretization of the evolution generated by A + 2 c u(a).
    """
    scheme = StepScheme(scheme)
    da = grid.da
    c = np.asarray(quad_coeff, dtype=float)
    base = np.asarray(base, dtype=float)
    src = _source_term(source, grid, scheme.theta)

    def rhs(i, f):
        out = -da * c * base[i + 1] * f[i]
        return out if src is None else out + src(i, f)

    return _march(grid, scheme, A_of_age, dphi0, extra_diag=lambda i, f: da * c * base[i], extra_rhs=rhs)


def step_residual(A_of_age: Ops, field: np.ndarray, grid: Grid, scheme="implicit_euler", source=None) -> float:
    """Largest defect of the linear theta-scheme over all steps of ``field``."""
    scheme = StepScheme(scheme)
    theta, da = scheme.theta, grid.da
    src = _source_term(source, grid, theta)
    worst = 0.0
    for i in range(grid.n_a):
        lhs = _op_at(A_of_age, i + 1).step(theta * da).matvec(field[i + 1])
        rhs = field[i] - (1.0 - theta) * da * _op_at(A_of_age, i).matvec(field[i])
        if src is not None:
            rhs = rhs + src(i, field)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def renewal_matrix(march: Callable[[np.ndarray], np.ndarray], profile, grid: Grid, threads: int = 1) -> np.ndarray:
    """Dense matrix of  phi0 -> int profile(a) (march phi0)(a) da.

    ``march`` maps a batch of initial profiles (k, n_x) to fields (n_a + 1, k, n_x).
    Columns are computed in independent chunks and written back in order.
    """
    n = grid.n_x

    def columns(rows):
        return age_integral(march(rows), profile, grid)

    return map_batches(columns, np.eye(n), threads).T

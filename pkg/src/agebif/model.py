"""Model data: coefficient functions, age profiles, standing assumptions, birth normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .discretize import Grid, TriDiagOp, assemble_elliptic, laplacian, solve_tridiag
from .evolve import StepScheme


class Family(str, Enum):
    AFFINE = "affine"
    SATURATING = "saturating"
    EXPSAT = "expsat"


_ARITY = {Family.AFFINE: 2, Family.SATURATING: 3, Family.EXPSAT: 3}


@dataclass(frozen=True)
class CoefficientFn:
    """A C^2 scalar function of a density from one of three monotone families.

    affine(c0, c1):          c0 + c1 z
    saturating(c0, c1, k):   c0 + c1 z / (1 + k z)
    expsat(c0, c1, k):       c0 + c1 (1 - exp(-k z))
    """

    family: Family
    params: tuple[float, ...]

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(self.params) != _ARITY[fam]:
            raise ValueError(f"{fam.value} takes {_ARITY[fam]} parameters, got {len(self.params)}")
        if not all(math.isfinite(p) for p in self.params):
            raise ValueError("coefficient parameters must be finite")
        if fam is not Family.AFFINE and not self.params[2] > 0:
            raise ValueError(f"{fam.value} needs k > 0")

    @classmethod
    def affine(cls, c0, c1=0.0):
        return cls(Family.AFFINE, (c0, c1))

    @classmethod
    def saturating(cls, c0, c1, k):
        return cls(Family.SATURATING, (c0, c1, k))

    @classmethod
    def expsat(cls, c0, c1, k):
        return cls(Family.EXPSAT, (c0, c1, k))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        c0, c1 = self.params[:2]
        if self.family is Family.AFFINE:
            return c0 + c1 * z
        k = self.params[2]
        if self.family is Family.SATURATING:
            return c0 + c1 * z / (1.0 + k * z)
        return c0 + c1 * (1.0 - np.exp(-k * z))

    def deriv(self, z):
        z = np.asarray(z, dtype=float)
        c1 = self.params[1]
        if self.family is Family.AFFINE:
            return c1 + 0.0 * z
        k = self.params[2]
        if self.family is Family.SATURATING:
            return c1 / (1.0 + k * z) ** 2
        return c1 * k * np.exp(-k * z)

    def deriv2(self, z):
        z = np.asarray(z, dtype=float)
        c1 = self.params[1]
        if self.family is Family.AFFINE:
            return 0.0 * z
        k = self.params[2]
        if self.family is Family.SATURATING:
            return -2.0 * c1 * k / (1.0 + k * z) ** 3
        return -c1 * k * k * np.exp(-k * z)

    def range_min(self, z_max: float) -> float:
        """Minimum over [0, z_max]; every family is monotone, so an endpoint."""
        return float(min(self(0.0), self(z_max)))

    def __str__(self):
        return f"{self.family.value}({', '.join(repr(p) for p in self.params)})"


@dataclass(frozen=True)
class AgeProfile:
    """Piecewise linear profile through ``(age, value)`` breakpoints.

    Constant extrapolation outside the breakpoint range.
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(a), float(v)) for a, v in self.breakpoints)
        if not pts:
            raise ValueError("age profile needs at least one breakpoint")
        ages = [a for a, _ in pts]
        if any(b <= a for a, b in zip(ages, ages[1:])):
            raise ValueError("breakpoint ages must be strictly increasing")
        if not all(math.isfinite(x) for pt in pts for x in pt):
            raise ValueError("breakpoints must be finite")
        object.__setattr__(self, "breakpoints", pts)

    @classmethod
    def constant(cls, value: float, a_max: float):
        return cls(((0.0, value), (a_max, value)))

    @property
    def ages(self) -> np.ndarray:
        return np.array([a for a, _ in self.breakpoints])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.breakpoints])

    def __call__(self, a):
        return np.interp(a, self.ages, self.values)

    def scaled(self, c: float) -> "AgeProfile":
        return AgeProfile(tuple((a, c * v) for a, v in self.breakpoints))

    def __str__(self):
        return "pwlinear(" + ", ".join(f"{a!r}:{v!r}" for a, v in self.breakpoints) + ")"


@dataclass(frozen=True)
class ModelSpec:
    d1: CoefficientFn
    d2: CoefficientFn
    d3: CoefficientFn
    d4: CoefficientFn
    mu1: CoefficientFn
    mu2: CoefficientFn
    alpha: float
    beta: float
    a_max: float
    length: float
    omega: AgeProfile
    birth: AgeProfile

    def __post_init__(self):
        for name in ("alpha", "beta", "a_max", "length"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite")

    def grid(self, n_x: int, n_a: int) -> Grid:
        return Grid(self.length, n_x, self.a_max, n_a)

    def u_operator(self, grid: Grid, v_hat) -> TriDiagOp:
        """-div(d1(V) grad u + u grad d2(V)) + mu1(V) u  for the weighted density V."""
        ext = grid.pad(v_hat)
        return assemble_elliptic(grid, self.d1(ext), self.d2(ext), self.mu1(np.asarray(v_hat, float)))

    def v_operator(self, grid: Grid, u_hat) -> TriDiagOp:
        ext = grid.pad(u_hat)
        return assemble_elliptic(grid, self.d3(ext), self.d4(ext), self.mu2(np.asarray(u_hat, float)))

    def swapped(self) -> "ModelSpec":
        """Exchange the roles of the two species."""
        return replace(
            self, d1=self.d3, d2=self.d4, mu1=self.mu2,
            d3=self.d1, d4=self.d2, mu2=self.mu1,
            alpha=self.beta, beta=self.alpha,
        )


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    message: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]
    delta: float
    z_max: float

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def lines(self) -> list[str]:
        out = [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.message}" for c in self.checks]
        out.append(f"delta = {self.delta!r} on [0, {self.z_max!r}]")
        return out


def validate(spec: ModelSpec, z_max: float, rho: float | None = None, *, atol: float = 1e-14) -> ValidationReport:
    """Check the standing assumptions on the model data.

    ``z_max`` bounds the density range on which uniform ellipticity of d1, d3
    is certified; ``rho`` is the width of the window ``[a_max - rho, a_max]``
    on which the birth profile must be strictly positive (default a_max / 10).
    """
    if not z_max > 0:
        raise ValueError("z_max must be positive")
    rho = 0.1 * spec.a_max if rho is None else float(rho)
    if not 0 < rho <= spec.a_max:
        raise ValueError("rho must lie in (0, a_max]")

    checks = []

    def add(name, passed, ok_msg, fail_msg):
        checks.append(Check(name, bool(passed), ok_msg if passed else fail_msg))

    d2_0, mu1_0, d1_0 = float(spec.d2(0.0)), float(spec.mu1(0.0)), float(spec.d1(0.0))
    add("d2_zero", abs(d2_0) <= atol, "ok", f"d2(0)=0 violated (d2(0)={d2_0!r})")
    add("mu1_zero", abs(mu1_0) <= atol, "ok", f"mu1(0)=0 violated (mu1(0)={mu1_0!r})")
    add("d1_unit", abs(d1_0 - 1.0) <= atol, "ok", f"d1(0)=1 violated (d1(0)={d1_0!r})")

    delta = min(spec.d1.range_min(z_max), spec.d3.range_min(z_max))
    add("ellipticity", delta > 0, f"min(d1, d3) = {delta!r} > 0",
        f"min(d1, d3) = {delta!r} <= 0 on [0, {z_max!r}]")

    for name, prof in (("omega", spec.omega), ("birth", spec.birth)):
        vmin = float(prof.values.min())
        add(f"{name}_nonnegative", vmin >= 0, "ok", f"{name} takes negative value {vmin!r}")

    lo = spec.a_max - rho
    inside = [v for a, v in spec.birth.breakpoints if lo < a < spec.a_max]
    window = [float(spec.birth(lo)), float(spec.birth(spec.a_max)), *inside]
    add("birth_positive_near_amax", min(window) > 0, f"positive on [{lo!r}, {spec.a_max!r}]",
        f"birth not positive on [{lo!r}, {spec.a_max!r}]")

    return ValidationReport(tuple(checks), float(delta), float(z_max))


def principal_eigenvalue(grid: Grid, *, crosscheck: bool = True) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of the discrete Dirichlet Laplacian and its eigenvector.

    Closed form (2/h^2)(1 - cos(pi h / L)) with eigenvector sin(pi x / L),
    max-normalized.  With ``crosscheck`` the value is confirmed by inverse
    power iteration.
    """
    h, L = grid.h, grid.length
    # 2(1 - cos t)/h^2 written as 4 sin^2(t/2)/h^2 to avoid cancellation for small h
    lam = 4.0 / h**2 * math.sin(0.5 * math.pi * h / L) ** 2
    vec = np.sin(np.pi * grid.x / L)
    vec /= np.max(np.abs(vec))
    if crosscheck:
        lam_ip = _inverse_power(laplacian(grid), grid.n_x)
        if abs(lam_ip - lam) > 1e-12 * lam:
            raise ArithmeticError(f"principal eigenvalue mismatch: {lam!r} vs {lam_ip!r}")
    return lam, vec


def _inverse_power(op: TriDiagOp, n: int, tol: float = 1e-15, max_iter: int = 500) -> float:
    v = np.ones(n)
    mu = 0.0
    for _ in range(max_iter):
        w = solve_tridiag(op, v)
        # quotient through the inverse: no cancellation, unlike w.Aw for large n
        mu_new = float(v @ w / (w @ w))
        v = w / np.max(np.abs(w))
        if abs(mu_new - mu) <= tol * abs(mu_new):
            return mu_new
        mu = mu_new
    return mu


def scalar_propagator(rate: float, grid: Grid, scheme) -> np.ndarray:
    """Discrete decay factors rho_i of  y' = -rate * y  under the marching scheme."""
    scheme = StepScheme(scheme)
    z = grid.da * rate
    if scheme is StepScheme.IMPLICIT_EULER:
        factor = 1.0 / (1.0 + z)
    else:
        factor = (1.0 - 0.5 * z) / (1.0 + 0.5 * z)
    return factor ** np.arange(grid.n_a + 1)


def normalize_birth(spec: ModelSpec, grid: Grid, scheme="implicit_euler") -> ModelSpec:
    """Rescale the birth profile so that  sum_i w_i b(a_i) rho_i = 1.

    rho_i is the scheme's own propagator for the decay rate lambda_1^h, so the
    discrete linear renewal threshold sits exactly at eta = 1.
    """
    lam, _ = principal_eigenvalue(grid, crosscheck=False)
    rho = scalar_propagator(lam, grid, scheme)
    total = math.fsum(grid.weights * spec.birth(grid.ages) * rho)
    if not total > 0:
        raise ValueError("birth profile integrates to a non-positive value")
    return replace(spec, birth=spec.birth.scaled(1.0 / total))


def birth_integral(spec: ModelSpec, grid: Grid, scheme="implicit_euler", rate: float | None = None) -> float:
    """sum_i w_i b(a_i) rho_i(rate); rate defaults to lambda_1^h."""
    if rate is None:
        rate, _ = principal_eigenvalue(grid, crosscheck=False)
    return math.fsum(grid.weights * spec.birth(grid.ages) * scalar_propagator(rate, grid, scheme))

import numpy as np
import pytest

from agebif import shipped_config
from agebif.bifurcate import analyze
from agebif.config import load_config
from agebif.discretize import Grid
from agebif.model import AgeProfile, CoefficientFn, ModelSpec, normalize_birth
from agebif.reduced import solve_reduced

BIRTH = AgeProfile(((0.0, 0.0), (0.3, 0.0), (0.5, 1.0), (1.0, 1.0)))


def make_spec(**overrides):
    """The coupled test model; keyword overrides replace single fields."""
    base = dict(
        d1=CoefficientFn.affine(1.0, 0.5),
        d2=CoefficientFn.saturating(0.0, 0.3, 1.0),
        d3=CoefficientFn.expsat(1.0, 0.4, 1.0),
        d4=CoefficientFn.saturating(0.0, 0.2, 0.5),
        mu1=CoefficientFn.affine(0.0, 0.5),
        mu2=CoefficientFn.affine(0.5, 0.3),
        alpha=1.0, beta=1.0, a_max=1.0, length=1.0,
        omega=AgeProfile.constant(1.0, 1.0),
        birth=BIRTH,
    )
    base.update(overrides)
    return ModelSpec(**base)


def pure_diffusion_spec(c=0.0, **overrides):
    """Second species with A3 = -Laplacian + c and no weighting (omega = 0)."""
    kw = dict(
        d3=CoefficientFn.affine(1.0, 0.0), d4=CoefficientFn.affine(0.0, 0.0),
        mu2=CoefficientFn.affine(c, 0.0), omega=AgeProfile.constant(0.0, 1.0),
    )
    kw.update(overrides)
    return make_spec(**kw)


def dense_laplacian(n, h):
    return (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / h**2


@pytest.fixture(scope="session")
def coupled_cfg():
    return load_config(shipped_config("coupled"))


@pytest.fixture(scope="session")
def small():
    """Normalized coupled model on a 16 x 32 grid with its eta = 2 bifurcation data."""
    grid = Grid(1.0, 16, 1.0, 32)
    spec = normalize_birth(make_spec(), grid)
    u_eta = solve_reduced(spec, grid, 2.0)
    bif = analyze(spec, grid, u_eta)
    return spec, grid, u_eta, bif


@pytest.fixture(scope="session")
def medium():
    """Same model on the 32 x 64 grid used by several acceptance checks."""
    grid = Grid(1.0, 32, 1.0, 64)
    spec = normalize_birth(make_spec(), grid)
    return spec, grid


_ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    _ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[k])

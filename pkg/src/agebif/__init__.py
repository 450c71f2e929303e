"""Bifurcation toolkit for a nonlocal cross-diffusion age-structured two-species model."""

from pathlib import Path

from .bifurcate import BifurcationPoint, analyze, kernel_pair, kernel_residual, transversality_diag, uniqueness_scan
from .branch import Branch, BranchPoint, continue_branch, residual_full, solve_coexistence
from .config import ConfigError, RunConfig, load_config, parse_config, render_config
from .discretize import Grid, TriDiagOp, age_integral, assemble_elliptic, solve_tridiag
from .evolve import StepScheme, evolution_march, semigroup_march, semilinear_march
from .model import AgeProfile, CoefficientFn, ModelSpec, normalize_birth, principal_eigenvalue, validate
from .reduced import ReducedSolution, eta_scan, solve_reduced
from .spectral import PerronPair, dense_spectrum, perron, solve_dense

CONFIG_DIR = Path(__file__).parent / "configs"


def shipped_config(name: str) -> Path:
    """Path of a bundled example config ('coupled', 'decoupled' or 'symmetric')."""
    return CONFIG_DIR / f"{name}.cfg"


__version__ = "0.1.0"

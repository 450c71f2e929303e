"""Grid convergence of xi0 for both age schemes.

The space grid is held fixed, so successive differences of xi0 isolate the
age discretization: about first order for implicit Euler and second order for
Crank-Nicolson.
"""

import numpy as np

from agebif import shipped_config
from agebif.bifurcate import analyze
from agebif.config import load_config
from agebif.discretize import Grid
from agebif.model import normalize_birth
from agebif.reduced import solve_reduced

model = load_config(shipped_config("coupled")).model
for scheme, n_as in (("implicit_euler", (64, 128, 256, 512)), ("crank_nicolson", (32, 64, 128, 256))):
    xis = []
    for n_a in n_as:
        grid = Grid(model.length, 16, model.a_max, n_a)
        spec = normalize_birth(model, grid, scheme)
        xis.append(analyze(spec, grid, solve_reduced(spec, grid, 2.0, scheme=scheme), scheme).xi0)
    diffs = np.abs(np.diff(xis))
    print(scheme)
    for n_a, xi in zip(n_as, xis):
        print(f"  n_a={n_a:4d}  xi0={xi:.8f}")
    print("  observed rates:", " ".join(f"{r:.2f}" for r in np.log2(diffs[:-1] / diffs[1:])))

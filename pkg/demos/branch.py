"""Coexistence branch leaving the bifurcation point.

Continues the branch of the coupled configuration and compares it with the
local picture: xi(eps) close to xi0 and v close to eps psi_star.
"""

import numpy as np

from agebif import shipped_config
from agebif.bifurcate import analyze
from agebif.branch import continue_branch, inner
from agebif.config import load_config
from agebif.model import normalize_birth
from agebif.reduced import solve_reduced

cfg = load_config(shipped_config("coupled"))
grid = cfg.model.grid(cfg.nx, cfg.na)
spec = normalize_birth(cfg.model, grid, cfg.scheme)
u_eta = solve_reduced(spec, grid, cfg.eta)
bif = analyze(spec, grid, u_eta)
br = continue_branch(spec, grid, cfg.eta, bif, u_eta, cfg.eps0, n_steps=cfg.n_steps)

psi_norm = np.sqrt(inner(bif.psi_star, bif.psi_star, grid))
print(f"xi0 = {bif.xi0:.6f}, stop: {br.stop_reason}")
print(f"{'eps':>8} {'xi':>10} {'|v|/(eps|psi*|)':>16} {'min u':>10} {'min v':>10} {'res':>9}")
for p in br.points:
    ratio = np.sqrt(inner(p.state.v_field, p.state.v_field, grid)) / (p.eps * psi_norm)
    print(f"{p.eps:8.4f} {p.xi:10.6f} {ratio:16.5f} {p.min_u:10.2e} {p.min_v:10.2e} {p.residual:9.1e}")
print(f"empirical d xi / d eps at the bifurcation point: {br.initial_slope():.4f}")

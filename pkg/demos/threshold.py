"""Sub/super-threshold behaviour of the single-species problem.

After the birth profile is normalized, the trivial state loses stability at
eta = 1 exactly.  Below it the reduced solver returns zero; above it a positive
semi-trivial state appears and grows with eta.
"""

import numpy as np

from agebif import shipped_config
from agebif.config import load_config
from agebif.discretize import laplacian
from agebif.evolve import renewal_matrix, semigroup_march
from agebif.model import normalize_birth
from agebif.reduced import eta_scan, solve_reduced
from agebif.spectral import perron

cfg = load_config(shipped_config("coupled"))
grid = cfg.model.grid(32, 64)
spec = normalize_birth(cfg.model, grid, cfg.scheme)

# linear renewal operator (no crowding): its spectral radius is 1 by construction
G = renewal_matrix(lambda rows: semigroup_march(laplacian(grid), rows, grid).field, spec.birth, grid)
print(f"r(G) - 1 = {perron(lambda v: G @ v, grid.n_x, with_gap=False).radius - 1:.2e}")

print(f"{'eta':>6} {'status':>10} {'sup u':>12} {'newton':>7}")
for row in eta_scan(spec, grid, [0.5, 0.9, 1.0, 1.05, 1.2, 1.5, 2.0, 3.0, 5.0]):
    print(f"{row.eta:6.2f} {row.status:>10} {row.sup_norm:12.6f} {row.newton_iters:7d}")

# just above threshold the trace lines up with the principal Dirichlet mode
u = solve_reduced(spec, grid, 1.01)
s = np.sin(np.pi * grid.x)
cos = u.trace0 @ s / (np.linalg.norm(u.trace0) * np.linalg.norm(s))
print(f"eta=1.01: sup {u.sup_norm:.4f}, cosine with sin(pi x) {cos:.6f}")

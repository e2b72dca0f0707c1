"""Distance between stiff full-model runs and each limit model.

usage: python3 scripts/limit_convergence.py [n_cells] [horizon]
"""
import sys
import time

from bulksurf.diagnostics import LIMIT_SCALINGS, limit_convergence_study
from bulksurf.grids import Interval1DGrid
from bulksurf.presets import mp_initial_state, mp_problem
from bulksurf.solvers import ModelVariant, StepperConfig

n = int(sys.argv[1]) if len(sys.argv) > 1 else 50
horizon = float(sys.argv[2]) if len(sys.argv) > 2 else 0.2
eps = [1e-1, 1e-2, 1e-3]
p = mp_problem(Interval1DGrid(n))
state = mp_initial_state(p, amplitude=0.3)
cfg = StepperConfig(dt=1e-3)

print(f"{'variant':<22}" + "".join(f"{'eps=' + format(e, 'g'):>14}" for e in eps) + "   ratio   seconds")
for variant in LIMIT_SCALINGS:
    if variant is ModelVariant.FAST_SURFACE_DIFFUSION:
        continue  # no surface diffusion on an interval
    t0 = time.perf_counter()
    rows = limit_convergence_study(p, variant, eps, horizon, cfg, state)
    errs = [r["error"] for r in rows]
    cells = "".join(f"{e:14.3e}" for e in errs)
    print(f"{variant.value:<22}{cells}   {errs[-1] / errs[0]:.3g}   {time.perf_counter() - t0:.1f}")

"""Iteration counts and contraction ratios of the subproblem iteration versus Newton.

usage: python3 scripts/phi_contraction.py
"""
import numpy as np

from bulksurf.grids import Interval1DGrid
from bulksurf.presets import mp_initial_state, mp_problem
from bulksurf.solvers import ModelVariant, StepFailure, StepperConfig, phi_fixed_point, prepare_state, step_three_param_mp

print(f"{'d':>16} {'dt':>8} {'iters':>6} {'contraction':>12} {'gap to newton':>14}")
for d in [(1.0, 1.0, 1.0), (1.0, 0.2, 5.0), (0.1, 0.1, 1.0)]:
    p = mp_problem(Interval1DGrid(100), d=d)
    for dt in (1e-3, 1e-2, 1e-1):
        cfg = StepperConfig(dt=dt)
        a = b = prepare_state(p, ModelVariant.THREE_PARAM, mp_initial_state(p, amplitude=0.5, base=(2.0, 1.0)), cfg)
        iters, ratio, gap = 0, 0.0, 0.0
        try:
            for _ in range(20):
                a = step_three_param_mp(p, a, cfg)
                b = phi_fixed_point(p, b, cfg)
                iters = max(iters, b.info["phi_iters"])
                ratio = max(ratio, b.info["contraction"])
                gap = max(gap, float(np.max(np.abs(a.bulk - b.bulk))))
        except StepFailure as exc:
            print(f"{str(d):>16} {dt:8g}  failed: {exc}")
            continue
        print(f"{str(d):>16} {dt:8g} {iters:6d} {ratio:12.4f} {gap:14.2e}")

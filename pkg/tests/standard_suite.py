"""Standard runs shared by the acceptance checks and the scripts.

Every entry has strictly positive initial data and detailed-balanced
constants, so positivity and free-energy decay must hold on all of them.
"""
import math
from dataclasses import replace

import numpy as np

from bulksurf.grids import Interval1DGrid, PeriodicStripGrid
from bulksurf.network import ReactionNetwork
from bulksurf.presets import mp_initial_state, mp_problem
from bulksurf.scales import TimeScales
from bulksurf.solvers import ModelVariant, SystemState

V = ModelVariant


def _with_bulk_isomerisation(p):
    # A1 <-> A2 in the bulk next to A1 + A2 <-> A3 on the surface
    bulk = ReactionNetwork.from_arrays([[1, 0, 0]], [[0, 1, 0]], 2.0, 1.0)
    times = TimeScales.direct(n_bulk=1, n_surface=1, n_species=3, tau_react=0.5)
    return replace(p, bulk=bulk, times=times)


def _strip_state(p):
    g = p.grid
    y = g.centers[:, 1]
    x = g.centers[:, 0]
    c = np.column_stack([1 + 0.3 * np.cos(np.pi * y) * np.cos(2 * np.pi * x), 0.8 + 0.2 * np.sin(2 * np.pi * x),
                         np.full_like(x, 0.5)])
    xs = g.node_positions[:, 0]
    theta = np.column_stack([np.full_like(xs, 0.3), 0.2 + 0.1 * np.sin(2 * np.pi * xs), np.full_like(xs, 0.25),
                             0.25 - 0.1 * np.sin(2 * np.pi * xs)])
    return SystemState(c, theta)


def standard_suite():
    """List of ``(name, problem, variant, state, dt, t_end)``."""
    grid = Interval1DGrid(40)
    runs = []

    p = mp_problem(grid)
    runs.append(("three_param_unit", p, V.THREE_PARAM, mp_initial_state(p, amplitude=0.3), 0.01, 0.5))
    runs.append(("full_unit", p, V.FULL, mp_initial_state(p, amplitude=0.3), 0.01, 0.5))
    p = mp_problem(grid, k_ad=(1.0, 2.0, 0.5), k_de=(1.0, 1.0, 2.0), k_f_sigma=3.0)
    off = mp_initial_state(p, amplitude=0.5, base=(1.5, 0.4))
    off = SystemState(off.bulk, np.tile([0.4, 0.1, 0.3, 0.2], (2, 1)))
    runs.append(("full_off_equilibrium", p, V.FULL, off, 0.01, 0.5))
    p = mp_problem(grid, d=(1.0, 0.1, 3.0))
    runs.append(("full_unequal_diffusion", p, V.FULL, mp_initial_state(p, amplitude=0.5), 0.01, 0.5))
    p = mp_problem(grid, k_ad=(1.0, 2.0, 0.5))
    runs.append(("fast_sorption", p, V.FAST_SORPTION, mp_initial_state(p, amplitude=0.5), 0.01, 0.5))
    runs.append(("fast_surface_chemistry", p, V.FAST_SURFACE_CHEMISTRY, mp_initial_state(p, amplitude=0.5), 0.01,
                 0.5))
    runs.append(("two_param", p, V.TWO_PARAM, mp_initial_state(p, amplitude=0.5), 0.01, 0.5))
    p = mp_problem(grid, times=TimeScales.direct(n_surface=1, n_species=3, tau_react_sigma=math.inf))
    runs.append(("fast_surface_diffusion", p, V.FAST_SURFACE_DIFFUSION, mp_initial_state(p, amplitude=0.5), 0.01,
                 0.5))
    p = mp_problem(grid, k_ad=(1.0, 2.0, 0.5))
    runs.append(("fast_accumulation", p, V.FAST_ACCUMULATION, mp_initial_state(p, amplitude=0.5), 0.01, 0.5))
    p = mp_problem(PeriodicStripGrid(10, 10), d_sigma=0.5, k_ad=(1.0, 2.0, 0.5))
    runs.append(("strip_surface_diffusion", p, V.FULL, _strip_state(p), 0.01, 0.3))
    base = mp_problem(grid)
    p = _with_bulk_isomerisation(base)
    runs.append(("bulk_and_surface_chemistry", p, V.FULL, mp_initial_state(base, amplitude=0.3, base=(1.5, 0.5)),
                 0.01, 0.5))
    p = mp_problem(grid)
    runs.append(("three_param_dilute", p, V.THREE_PARAM, mp_initial_state(p, amplitude=0.9, base=(0.05, 0.02)),
                 0.01, 0.5))
    p = mp_problem(grid, times=TimeScales.direct(n_surface=1, n_species=3, tau_sorp=1e-3, tau_react_sigma=1e-2))
    runs.append(("full_stiff", p, V.FULL, mp_initial_state(p, amplitude=0.5), 0.01, 0.5))
    return runs

"""Ready-made problems."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .grids import Grid, Interval1DGrid
from .network import ReactionNetwork
from .scales import TimeScales
from .solvers import FullProblem, SystemState
from .surface import SorptionModel, SurfaceReactionNetwork, isotherm_array, langmuir_diffusion


def mp_network() -> SurfaceReactionNetwork:
    """Surface reaction ``A1 + A2 <-> A3`` with unit constants."""
    return SurfaceReactionNetwork(ReactionNetwork.from_arrays([[1, 1, 0]], [[0, 0, 1]], 1.0, 1.0))


def mp_problem(grid: Optional[Grid] = None, *, d=(1.0, 1.0, 1.0), k_f_sigma: float = 1.0, k_b_sigma: float = 1.0,
               k_ad=(1.0, 1.0, 1.0), k_de=(1.0, 1.0, 1.0), times: Optional[TimeScales] = None,
               d_sigma: Optional[float] = None) -> FullProblem:
    """Three species, no bulk chemistry, one surface reaction and Langmuir sorption.

    After fast sorption and fast surface chemistry the boundary relation is
    ``c1 c2 = kappa c3`` with
    ``kappa = k_b k1_de k2_de k3_ad / (k_f k1_ad k2_ad k3_de)``.
    """
    grid = grid or Interval1DGrid(100)
    surf = SurfaceReactionNetwork(ReactionNetwork.from_arrays([[1, 1, 0]], [[0, 0, 1]], k_f_sigma, k_b_sigma))
    times = times or TimeScales.direct(n_bulk=0, n_surface=1, n_species=3)
    diffusion = langmuir_diffusion(d_sigma) if d_sigma else None
    return FullProblem(grid, tuple(d), ReactionNetwork.empty(3), surf, SorptionModel(k_ad, k_de), times, diffusion)


def mp_initial_state(problem: FullProblem, amplitude: float = 0.1, base=(1.0, 1.0), mode: int = 1,
                     with_surface: bool = True) -> SystemState:
    """Smooth data satisfying the boundary relation everywhere.

    ``c1 = base[0] (1 + a cos(mode pi y / L))``, likewise ``c2``, and
    ``c3 = c1 c2 / kappa``; occupancies sit on the isotherm of the traces.
    """
    from .solvers.phi import mp_kappa

    kappa = mp_kappa(problem)
    g = problem.grid
    y = g.centers[:, -1]
    length = g.ly if hasattr(g, "ly") else g.length
    prof = 1.0 + amplitude * np.cos(mode * np.pi * y / length)
    c1 = base[0] * prof
    c2 = base[1] * prof
    c = np.column_stack([c1, c2, c1 * c2 / kappa])
    theta = None
    if with_surface:
        tr = c[g.adjacent]
        theta = isotherm_array(tr, problem.sorption)
    return SystemState(c, theta, 0.0)

import math
import warnings

import numpy as np
import pytest

from bulksurf.diagnostics import MpParameters, conserved_totals, mp_equilibrium, positivity_monitor
from bulksurf.grids import Interval1DGrid, PeriodicStripGrid, boundary_trace
from bulksurf.presets import mp_initial_state, mp_problem
from bulksurf.scales import TimeScales
from bulksurf.solvers import (STEPPERS, ConfigurationError, IncompatibleInitialData, ModelVariant, StepperConfig,
                              SystemState, mp_kappa, phi_fixed_point, prepare_state, simulate, surface_attractor)
from bulksurf.surface import isotherm_array

V = ModelVariant
TIMES = TimeScales.direct(n_bulk=0, n_surface=1, n_species=3)


def equilibrium_state(p):
    return SystemState.uniform(p, [1.0, 1.0, 1.0], [0.25, 0.25, 0.25, 0.25])


@pytest.mark.parametrize("variant", list(V), ids=lambda v: v.value)
def test_equilibrium_is_fixed_point(variant):
    # unit constants: c = 1 with occupancies 1/4 satisfies every row family
    p = mp_problem(Interval1DGrid(12))
    cfg = StepperConfig(dt=0.05)
    s0 = prepare_state(p, variant, equilibrium_state(p), cfg)
    s1 = STEPPERS[variant](p, s0, cfg)
    np.testing.assert_allclose(s1.bulk, 1.0, atol=1e-12)
    if variant.surface_unknowns(3):
        np.testing.assert_allclose(s1.surface, 0.25, atol=1e-12)


def test_pure_desorption_conserves_totals():
    p = mp_problem(Interval1DGrid(20), k_ad=(0.0, 0.0, 0.0), k_de=(1.0, 2.0, 0.5))
    s = SystemState.uniform(p, [0.5, 0.3, 0.2], [0.1, 0.3, 0.4, 0.2])
    traj = simulate(p, V.FULL, s, StepperConfig(dt=0.01), 1.0)
    tot = np.array([conserved_totals(x, p) for x in traj.states])
    assert np.max(np.abs(tot - tot[0])) <= 1e-10
    assert traj.final.surface[:, 0].min() > 0.1  # vacancies only grow


def test_fast_surface_diffusion_desorption_matches_recursion():
    times = TimeScales.direct(n_bulk=0, n_surface=1, n_species=3, tau_react_sigma=math.inf, tau_sorp=0.5)
    p = mp_problem(Interval1DGrid(10), k_ad=(0.0, 0.0, 0.0), k_de=(1.5, 1.5, 1.5), times=times)
    cfg = StepperConfig(dt=0.02)
    s = prepare_state(p, V.FAST_SURFACE_DIFFUSION, SystemState.uniform(p, [1.0, 1.0, 1.0], [0.1, 0.3, 0.3, 0.3]),
                      cfg)
    rate = cfg.dt * p.a_sorp * 1.5
    theta0 = 0.1
    for _ in range(50):
        s = STEPPERS[V.FAST_SURFACE_DIFFUSION](p, s, cfg)
        theta0 = (theta0 + rate) / (1 + rate)
        np.testing.assert_allclose(s.surface[:, 0], theta0, atol=1e-8)


def test_fast_sorption_keeps_isotherm():
    p = mp_problem(Interval1DGrid(30), k_ad=(1.0, 2.0, 0.5))
    cfg = StepperConfig(dt=0.01)
    s = SystemState(mp_initial_state(p, amplitude=0.3).bulk * [1.0, 0.7, 1.2])
    traj = simulate(p, V.FAST_SORPTION, s, cfg, 0.2, sample_every=5)
    for st in traj.states[1:]:
        tr = 0.5 * (st.bulk[p.grid.adjacent] + st.ghosts)
        assert np.max(np.abs(st.surface - isotherm_array(tr, p.sorption))) <= 1e-8


def test_attractor_unique_from_two_starts():
    p = mp_problem(Interval1DGrid(8), k_ad=(1.0, 2.0, 3.0), k_de=(1.0, 1.0, 2.0), k_f_sigma=2.0)
    tr = np.array([[0.5, 1.5, 0.2], [1.0, 0.4, 2.0]])
    res = surface_attractor(p, tr, StepperConfig())
    assert res.residual <= 1e-10
    assert res.unique and res.spread <= 1e-8
    other = surface_attractor(p, tr, StepperConfig(), check_unique=True,
                              second_start=np.array([[0.7, 0.1, 0.1, 0.1]] * 2))
    assert other.spread <= 1e-8
    np.testing.assert_allclose(res.theta.sum(axis=1), 1.0, atol=1e-14)


def test_three_param_reaches_equilibrium():
    p = mp_problem(Interval1DGrid(40))
    s = mp_initial_state(p, amplitude=0.3, base=(1.2, 0.8))
    cfg = StepperConfig(dt=0.5)
    traj = simulate(p, V.THREE_PARAM, s, cfg, 50.0, keep_states=False)
    tot = conserved_totals(traj.final, p, basis=[[1, 0, 1], [0, 1, 1]], variant=V.THREE_PARAM)
    params = MpParameters(tot[0], tot[1], 1.0 / mp_kappa(p))
    expected = mp_equilibrium(params)
    np.testing.assert_allclose(traj.final.bulk, np.broadcast_to(expected, traj.final.bulk.shape), atol=1e-8)


def test_subproblem_iteration_matches_newton():
    p = mp_problem(Interval1DGrid(50), d=(1.0, 0.5, 2.0))
    cfg = StepperConfig(dt=1e-3, phi_tol=1e-13)
    s = prepare_state(p, V.THREE_PARAM, mp_initial_state(p, amplitude=0.3), cfg)
    a = b = s
    for _ in range(20):
        a = STEPPERS[V.THREE_PARAM](p, a, cfg)
        b = phi_fixed_point(p, b, cfg)
        assert b.info["phi_iters"] <= cfg.phi_max_iter
        assert b.info["contraction"] < 1
    assert np.max(np.abs(a.bulk - b.bulk)) <= 1e-8


def test_subproblem_iteration_needs_model_network():
    from bulksurf.network import ReactionNetwork
    from bulksurf.solvers import FullProblem
    from bulksurf.surface import SorptionModel, SurfaceReactionNetwork
    net = SurfaceReactionNetwork(ReactionNetwork.from_arrays([[1, 0]], [[0, 1]], 1.0, 1.0))
    p = FullProblem(Interval1DGrid(5), (1.0, 1.0), ReactionNetwork.empty(2), net, SorptionModel([1, 1], [1, 1]),
                    TimeScales.direct(n_surface=1, n_species=2))
    with pytest.raises(ConfigurationError):
        phi_fixed_point(p, SystemState.uniform(p, [1.0, 1.0]), StepperConfig())


def test_time_step_self_convergence():
    p = mp_problem(Interval1DGrid(20), k_ad=(1.0, 2.0, 0.5))
    s = SystemState(mp_initial_state(p, amplitude=0.3).bulk, np.tile([0.4, 0.3, 0.2, 0.1], (2, 1)))
    finals = []
    for dt in (0.04, 0.02, 0.01, 0.005):
        finals.append(simulate(p, V.FULL, s, StepperConfig(dt=dt), 0.4, keep_states=False).final.bulk)
    errs = [np.max(np.abs(finals[i] - finals[i + 1])) for i in range(3)]
    assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8


def test_incompatible_data_policies():
    p = mp_problem(Interval1DGrid(10))
    s = SystemState.uniform(p, [1.0, 1.0, 1.0], [0.7, 0.1, 0.1, 0.1])
    with pytest.raises(IncompatibleInitialData):
        prepare_state(p, V.FAST_SORPTION, s, StepperConfig(compat="reject"))
    with pytest.warns(UserWarning):
        out = prepare_state(p, V.FAST_SORPTION, s, StepperConfig(compat="warn"))
    assert out.info["projection_distance"] == pytest.approx(0.45)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        prepare_state(p, V.FAST_SORPTION, equilibrium_state(p), StepperConfig(compat="reject"))
    with pytest.raises(IncompatibleInitialData):
        prepare_state(p, V.FULL, SystemState.uniform(p, [1.0, -1.0, 1.0]), StepperConfig())


def test_limit_variant_needs_positive_adsorption():
    p = mp_problem(Interval1DGrid(10), k_ad=(0.0, 1.0, 1.0))
    with pytest.raises(ConfigurationError):
        simulate(p, V.FAST_SORPTION, equilibrium_state(p), StepperConfig(), 0.01)


def test_strip_with_surface_diffusion():
    grid = PeriodicStripGrid(8, 8)
    p = mp_problem(grid, d_sigma=0.5, k_ad=(1.0, 2.0, 0.5))
    x = grid.node_positions[:, 0]
    theta = np.column_stack([np.full_like(x, 0.3), 0.2 + 0.1 * np.sin(2 * np.pi * x), np.full_like(x, 0.25),
                             0.25 - 0.1 * np.sin(2 * np.pi * x)])
    s = SystemState(np.ones((grid.n_cells, 3)), theta)
    traj = simulate(p, V.FULL, s, StepperConfig(dt=0.01), 0.2, sample_every=5)
    tot = np.array([conserved_totals(x_, p) for x_ in traj.states])
    assert np.max(np.abs(tot - tot[0])) <= 1e-10
    assert positivity_monitor(traj.final).value >= 0
    # surface diffusion evens out the occupancy along the surface
    assert np.ptp(traj.final.surface[:, 1]) < np.ptp(theta[:, 1])


def test_trajectory_rejects_unreachable_end():
    p = mp_problem(Interval1DGrid(10))
    with pytest.raises(ValueError):
        simulate(p, V.FULL, equilibrium_state(p), StepperConfig(dt=0.3), 1.0)

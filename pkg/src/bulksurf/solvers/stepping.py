"""Implicit Euler time stepping with a monolithic Newton solve."""
from __future__ import annotations

import warnings
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from ..grids import boundary_trace
from ..surface import isotherm_array
from ..trajectory import TrajectoryRecord
from .assembly import Assembler, assembler_for
from .problem import (FullProblem, IncompatibleInitialData, ModelVariant, PositivityError, StepFailure,
                      StepperConfig, SystemState)


def _newton(asm: Assembler, x0, c_old, u_old, dt, cfg: StepperConfig):
    """Newton iteration; always takes at least one update.

    Conservation identities are linear in the unknowns, so a single exact
    linear solve already enforces them to round-off.
    """
    x = x0.copy()
    res_norm = np.inf
    for it in range(cfg.newton_max_iter + 1):
        res, jac = asm.evaluate(x, c_old, u_old, dt)
        res_norm = float(np.max(np.abs(res))) if res.size else 0.0
        if not np.isfinite(res_norm):
            raise StepFailure("non-finite residual", res_norm)
        if it > 0 and res_norm <= cfg.newton_tol:
            return x, it, res_norm
        if it == cfg.newton_max_iter:
            break
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                dx = spla.spsolve(jac.tocsc(), -res)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise StepFailure(f"singular Newton matrix: {exc}", res_norm) from None
        if not np.all(np.isfinite(dx)):
            raise StepFailure("non-finite Newton update", res_norm)
        x += dx
    raise StepFailure(f"Newton did not converge in {cfg.newton_max_iter} iterations", res_norm)


def _initial_ghosts(asm: Assembler, state: SystemState) -> np.ndarray:
    if state.ghosts is not None and state.ghosts.shape == (asm.nn, asm.n):
        return state.ghosts
    return state.bulk[asm.adj]  # zero-flux guess


def _check_positive(c, theta, tol, time):
    low = float(np.min(c))
    if theta is not None:
        low = min(low, float(np.min(theta)))
    if low < -tol:
        raise PositivityError(f"negative value {low:.3e}", time=time)


def _single_step(asm: Assembler, state: SystemState, dt: float, cfg: StepperConfig,
                 surface_guess: Optional[np.ndarray] = None) -> SystemState:
    c_old = state.bulk
    u_old = asm.unknowns_from_surface(state.surface)
    u0 = u_old if surface_guess is None else asm.unknowns_from_surface(surface_guess)
    x0 = asm.pack(c_old, _initial_ghosts(asm, state), u0)
    x, iters, res = _newton(asm, x0, c_old, u_old, dt, cfg)
    c, gh, u = asm.split(x)
    theta = asm.theta(u)
    _check_positive(c, theta, cfg.positivity_tol, state.time + dt)
    return SystemState(c.copy(), None if theta is None else theta.copy(), state.time + dt, gh.copy(),
                       {"newton_iters": iters, "newton_res": res})


def advance(problem: FullProblem, variant: ModelVariant, state: SystemState, cfg: StepperConfig,
            surface_guess: Optional[Callable] = None) -> SystemState:
    """Advance by ``cfg.dt``, halving the step on failure down to ``cfg.dt_min``."""
    asm = assembler_for(problem, variant)
    t_end = state.time + cfg.dt
    h = cfg.dt
    halvings = 0
    iters = 0
    res = 0.0
    current = state
    while t_end - current.time > 1e-12 * cfg.dt:
        h = min(h, t_end - current.time)
        try:
            guess = surface_guess(current) if surface_guess is not None else None
            nxt = _single_step(asm, current, h, cfg, guess)
        except StepFailure as exc:
            h *= 0.5
            halvings += 1
            if h < cfg.dt_min:
                kind = PositivityError if isinstance(exc, PositivityError) else StepFailure
                raise kind(f"{variant.value} step failed at t={current.time:.6g}: {exc}",
                           exc.residual, current.time) from None
            continue
        iters += nxt.info["newton_iters"]
        res = max(res, nxt.info["newton_res"])
        current = nxt
    info = dict(current.info)
    info.update(newton_iters=iters, newton_res=res, halvings=halvings)
    return current.replace(time=t_end, info=info)


def step_full(p: FullProblem, s: SystemState, cfg: StepperConfig) -> SystemState:
    """Full model: bulk balance, surface dynamics and transmission rows."""
    return advance(p, ModelVariant.FULL, s, cfg)


def step_fast_sorption(p: FullProblem, s: SystemState, cfg: StepperConfig) -> SystemState:
    """Sorption equilibrium replaces the transmission rows; the bulk flux feeds the surface."""
    return advance(p, ModelVariant.FAST_SORPTION, s, cfg)


def step_fast_chemistry(p: FullProblem, s: SystemState, cfg: StepperConfig) -> SystemState:
    """Surface chemical equilibrium plus surface dynamics projected on conserved directions."""
    return advance(p, ModelVariant.FAST_SURFACE_CHEMISTRY, s, cfg)


def step_two_param(p: FullProblem, s: SystemState, cfg: StepperConfig) -> SystemState:
    """Sorption and surface chemical equilibrium with projected surface dynamics."""
    return advance(p, ModelVariant.TWO_PARAM, s, cfg)


def step_three_param_mp(p: FullProblem, s: SystemState, cfg: StepperConfig) -> SystemState:
    """Bulk-only model with mixed boundary rows (zero conserved flux, boundary equilibrium)."""
    return advance(p, ModelVariant.THREE_PARAM, s, cfg)


def step_fast_surface_diffusion(p: FullProblem, s: SystemState, cfg: StepperConfig) -> SystemState:
    """Occupancies shared equally by all species; one vacancy equation per node."""
    return advance(p, ModelVariant.FAST_SURFACE_DIFFUSION, s, cfg)


def step_fast_accumulation(p: FullProblem, s: SystemState, cfg: StepperConfig) -> SystemState:
    """Bulk step whose boundary flux uses the surface steady state for the current trace.

    The steady state for the old trace (warm started from the previous one)
    seeds the Newton solve, which then enforces the steady-state rows at the
    new time level.
    """
    from .attractor import surface_attractor

    stats = {}

    def guess(state: SystemState):
        asm = assembler_for(p, ModelVariant.FAST_ACCUMULATION)
        gh = _initial_ghosts(asm, state)
        tr = 0.5 * (state.bulk[asm.adj] + gh)
        result = surface_attractor(p, np.maximum(tr, 0.0), cfg, theta0=state.surface, check_unique=False)
        stats["attractor_iters"] = result.iterations
        return result.theta

    out = advance(p, ModelVariant.FAST_ACCUMULATION, s, cfg, surface_guess=guess)
    out.info.update(stats)
    return out


STEPPERS = {
    ModelVariant.FULL: step_full,
    ModelVariant.FAST_SORPTION: step_fast_sorption,
    ModelVariant.FAST_SURFACE_CHEMISTRY: step_fast_chemistry,
    ModelVariant.TWO_PARAM: step_two_param,
    ModelVariant.THREE_PARAM: step_three_param_mp,
    ModelVariant.FAST_SURFACE_DIFFUSION: step_fast_surface_diffusion,
    ModelVariant.FAST_ACCUMULATION: step_fast_accumulation,
}


# -- initial data ------------------------------------------------------------

def _project_chemistry(p: FullProblem, theta_ref: np.ndarray, tol: float = 1e-14, max_iter: int = 60):
    """Closest surface chemical equilibrium with the same conserved amounts, per node."""
    base = p.surface
    if base.n_reactions == 0:
        return theta_ref.copy()
    n = p.n_species
    E = p.surface_basis
    T = np.vstack([-np.ones((1, n)), np.eye(n)])
    u = theta_ref[:, 1:].copy()
    target = u @ E.T
    for _ in range(max_iter):
        th = np.concatenate([1.0 - u.sum(axis=1, keepdims=True), u], axis=1)
        rates, drates = base.rates(th, p.c_s, jacobian=True)
        res = np.concatenate([rates, u @ E.T - target], axis=1)
        if np.max(np.abs(res)) <= tol:
            break
        jac = np.concatenate([drates @ T, np.broadcast_to(E, (u.shape[0],) + E.shape)], axis=1)
        du = np.linalg.solve(jac, -res[..., None])[..., 0]
        step = 1.0
        while step > 1e-6:
            trial = u + step * du
            th_trial = np.concatenate([1.0 - trial.sum(axis=1, keepdims=True), trial], axis=1)
            if np.all(th_trial >= 0):
                break
            step *= 0.5
        u = u + step * du
    return np.concatenate([1.0 - u.sum(axis=1, keepdims=True), u], axis=1)


def _solve_boundary_ghosts(p: FullProblem, state: SystemState, cfg: StepperConfig) -> np.ndarray:
    """Ghost values satisfying the three-parameter boundary rows with the bulk frozen."""
    asm = assembler_for(p, ModelVariant.THREE_PARAM)
    n, nn = asm.n, asm.nn
    ck = state.bulk[asm.adj]
    gh = 2.0 * boundary_trace(state.bulk, p.grid) - ck
    zero_u = np.zeros((nn, 0))
    for _ in range(50):
        tr, F = asm.face_values(state.bulk, gh)
        res, jtr, jf = [], [], []
        for _, r, a_tr, a_f, _, _ in asm._families(tr, F, zero_u, zero_u, None, 0.0, None):
            res.append(r)
            jtr.append(a_tr)
            jf.append(a_f)
        res = np.concatenate(res, axis=1)
        if np.max(np.abs(res)) <= 1e-14:
            break
        jac = 0.5 * np.concatenate(jtr, axis=1) - np.concatenate(jf, axis=1) * asm.d_over_h[:, None, :]
        gh = gh + np.linalg.solve(jac, -res[..., None])[..., 0]
    return gh


def prepare_state(problem: FullProblem, variant: ModelVariant, state: SystemState,
                  cfg: StepperConfig) -> SystemState:
    """Make initial data consistent with the algebraic constraints of ``variant``.

    The constraint violation of the given data is measured at the
    extrapolated boundary traces. Above ``cfg.compat_tol`` the policy in
    ``cfg.compat`` applies. The projection distance is stored in
    ``state.info['projection_distance']``.
    """
    p = problem
    p.check_variant(variant)
    grid = p.grid
    c = state.bulk
    if np.any(c < 0):
        raise IncompatibleInitialData("initial bulk data must be nonnegative")
    tr = np.maximum(boundary_trace(c, grid), 0.0)
    theta = state.surface
    ghosts = state.ghosts
    violation = 0.0
    if variant is ModelVariant.THREE_PARAM:
        kappa = p.boundary_constants()
        base = p.surface.base
        lhs = np.prod(tr[:, None, :] ** base.alpha, axis=-1)
        rhs = kappa * np.prod(tr[:, None, :] ** base.beta, axis=-1)
        violation = float(np.max(np.abs(lhs - rhs))) if base.n_reactions else 0.0
        ghosts = _solve_boundary_ghosts(p, state, cfg)
        new_theta = None
        distance = float(np.max(np.abs(0.5 * (c[grid.adjacent] + ghosts) - tr)))
    elif variant is ModelVariant.FAST_ACCUMULATION:
        from .attractor import surface_attractor

        new_theta = surface_attractor(p, tr, cfg, theta0=theta).theta
        distance = 0.0 if theta is None else float(np.max(np.abs(new_theta - theta)))
    else:
        if theta is None:
            theta = isotherm_array(tr, p.sorption) if np.all(p.sorption.k_ad >= 0) else None
        if variant is ModelVariant.FULL:
            new_theta = theta
        elif variant is ModelVariant.FAST_SORPTION:
            new_theta = isotherm_array(tr, p.sorption)
        elif variant is ModelVariant.FAST_SURFACE_CHEMISTRY:
            new_theta = _project_chemistry(p, theta)
        elif variant is ModelVariant.TWO_PARAM:
            new_theta = _project_chemistry(p, isotherm_array(tr, p.sorption))
        else:  # fast surface diffusion
            n = p.n_species
            new_theta = np.concatenate([theta[:, :1], np.repeat((1.0 - theta[:, :1]) / n, n, axis=1)], axis=1)
        distance = float(np.max(np.abs(new_theta - theta)))
        violation = distance
    if violation > cfg.compat_tol:
        msg = f"initial data violate the {variant.value} constraints by {violation:.3e}"
        if cfg.compat == "reject":
            raise IncompatibleInitialData(msg)
        if cfg.compat == "warn":
            warnings.warn(msg + "; projecting", stacklevel=2)
    info = dict(state.info)
    info.update(projection_distance=distance, constraint_violation=violation)
    return SystemState(c, new_theta, state.time, ghosts, info)


def simulate(problem: FullProblem, variant: ModelVariant, state: SystemState, cfg: StepperConfig,
             t_end: float, sample_every: int = 1, keep_states: bool = True, use_phi: bool = False,
             callback: Optional[Callable[[SystemState], None]] = None) -> TrajectoryRecord:
    """Run from ``state.time`` to ``t_end`` with constant step ``cfg.dt``."""
    state = prepare_state(problem, variant, state, cfg)
    if use_phi:
        from .phi import phi_fixed_point as stepper
    else:
        stepper = STEPPERS[variant]
    n_steps = int(round((t_end - state.time) / cfg.dt))
    if n_steps < 0 or abs(state.time + n_steps * cfg.dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError("t_end must be reachable with an integer number of steps")
    record = TrajectoryRecord(keep_states=keep_states)
    record.append(state)
    if callback:
        callback(state)
    t0 = state.time
    for k in range(1, n_steps + 1):
        state = stepper(problem, state, cfg)
        state = state.replace(time=t0 + k * cfg.dt)
        if k % sample_every == 0 or k == n_steps:
            record.append(state)
            if callback:
                callback(state)
    record.final = state
    return record

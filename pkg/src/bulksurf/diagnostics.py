"""Conserved totals, free energy, entropy production and run monitors."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.special import xlogy

from .grids import ghost_trace, boundary_trace, integrate
from .network import (ConservationBasis, ReactionNetwork, conservation_basis, positive_conservation_vector,
                      thermo_from_constants)
from .solvers import (FullProblem, ModelVariant, StepFailure, StepperConfig, SystemState, simulate)
from .solvers.stepping import prepare_state
from .trajectory import TrajectoryRecord

__all__ = [
    "EntropyProduction", "MpParameters", "PositivityReport", "BlowupStatus", "TrajectoryRecord",
    "combined_basis", "conserved_totals", "consistent_potentials", "free_energy", "entropy_production_terms",
    "entropy_identity_residual", "mp_equilibrium", "mp_equilibrium_newton", "mp_residuals", "positivity_monitor",
    "blowup_monitor", "apriori_bounds", "limit_convergence_study", "LIMIT_SCALINGS",
]


# -- conserved quantities ------------------------------------------------------

def combined_basis(problem: FullProblem) -> ConservationBasis:
    """Vectors orthogonal to both the bulk and the surface reactions."""
    joint = ReactionNetwork(problem.bulk.species, problem.bulk.reactions + problem.surface.base.reactions)
    return conservation_basis(joint)


def _vectors(problem: FullProblem, basis) -> np.ndarray:
    if basis is None:
        return combined_basis(problem).vectors
    if isinstance(basis, ConservationBasis):
        return basis.vectors
    return np.atleast_2d(np.asarray(basis, dtype=float))


def _surface_included(state: SystemState, variant: Optional[ModelVariant]) -> bool:
    variant = ModelVariant.FULL if variant is None else variant
    return state.surface is not None and variant.has_surface_mass


def conserved_totals(state: SystemState, problem: FullProblem, basis=None,
                     variant: Optional[ModelVariant] = ModelVariant.FULL) -> np.ndarray:
    """``int e.c`` over the bulk plus the weighted surface amount ``w int e.theta``.

    ``basis`` may be a :class:`ConservationBasis`, an array of row vectors or
    ``None`` (vectors orthogonal to all bulk and surface reactions).
    """
    vecs = _vectors(problem, basis)
    grid = problem.grid
    totals = integrate(state.bulk @ vecs.T, grid, "bulk")
    if _surface_included(state, variant):
        totals = totals + problem.surface_weight * integrate(state.surface[:, 1:] @ vecs.T, grid, "surface")
    return np.asarray(totals, dtype=float)


# -- thermodynamics --------------------------------------------------------------

def consistent_potentials(problem: FullProblem):
    """Reference potentials compatible with all rate constants of ``problem``.

    Bulk potentials come from ``problem.thermo`` or a least-squares fit to the
    bulk and surface reactions. Surface potentials follow from the isotherm:
    ``mu_sigma0_0 = 0`` for the vacancy and ``mu_sigma0_i = mu0_i - ln K_i``.
    Returns ``(mu0, mu_sigma0, residual)``; a residual above round-off means
    the constants are not detailed balanced. Without adsorption (some
    ``K_i = 0``) the surface potentials do not exist and ``mu_sigma0`` is
    ``None``.
    """
    n = problem.n_species
    k_iso = problem.sorption.isotherm_constants
    has_iso = bool(np.all(k_iso > 0))
    log_k = np.log(np.where(k_iso > 0, k_iso, 1.0))
    rows = [(nu, math.log(kb / kf)) for nu, kf, kb in zip(problem.bulk.nu, problem.bulk.k_f, problem.bulk.k_b)]
    base = problem.surface.base
    if has_iso:
        # surface rows: nu . (mu0 - ln K) = ln(kb/kf)
        rows += [(nu, math.log(kb / kf) + float(nu @ log_k)) for nu, kf, kb in zip(base.nu, base.k_f, base.k_b)]
    if problem.thermo is not None:
        mu0 = np.asarray(problem.thermo.mu0, dtype=float)
        residual = max([abs(float(nu @ mu0) - t) for nu, t in rows] or [0.0])
    else:
        mu0, residual = thermo_from_constants(rows, n)
    if not has_iso:
        return mu0, None, (residual if base.n_reactions == 0 else math.inf)
    mu_sigma0 = np.concatenate([[0.0], mu0 - log_k])
    return mu0, mu_sigma0, residual


def free_energy(state: SystemState, problem: FullProblem, variant: Optional[ModelVariant] = ModelVariant.FULL,
                mu0=None, mu_sigma0=None) -> float:
    """``int sum c (mu0 + ln c - 1)`` plus ``w int sum_{0..N} theta (mu_sigma0 + ln theta)``.

    ``0 ln 0`` counts as zero. The surface part is included when the state
    carries occupancies and the variant keeps a surface inventory.
    """
    c = state.bulk
    if np.any(c < 0) or (state.surface is not None and np.any(state.surface < 0)):
        raise ValueError("free energy is defined for nonnegative states only")
    if mu0 is None or (mu_sigma0 is None and _surface_included(state, variant)):
        fit0, fit_s, _ = consistent_potentials(problem)
        mu0 = fit0 if mu0 is None else mu0
        mu_sigma0 = fit_s if mu_sigma0 is None else mu_sigma0
    grid = problem.grid
    dens = (c * (np.asarray(mu0) - 1.0) + xlogy(c, c)).sum(axis=1)
    total = float(integrate(dens, grid, "bulk"))
    if _surface_included(state, variant):
        if mu_sigma0 is None:
            raise ValueError("surface free energy needs positive isotherm constants")
        th = state.surface
        sdens = (th * np.asarray(mu_sigma0) + xlogy(th, th)).sum(axis=1)
        total += problem.surface_weight * float(integrate(sdens, grid, "surface"))
    return total


class EntropyProduction(NamedTuple):
    chem: float
    diff: float
    surface_chem: float
    surface_diff: float
    sorption: float

    def total(self) -> float:
        return float(sum(self))


def _traces(state: SystemState, problem: FullProblem) -> np.ndarray:
    if state.ghosts is not None:
        return ghost_trace(state.bulk, state.ghosts, problem.grid)
    return boundary_trace(state.bulk, problem.grid)


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def entropy_production_terms(state: SystemState, problem: FullProblem) -> EntropyProduction:
    """The five dissipation rates of ``state``, each with its process prefactor.

    Bulk gradients are face differences with the harmonic mean of the two
    neighbouring values; boundary half cells use the ghost values when the
    state has them. The surface diffusion term pairs each edge flux with
    ``dtheta / mean(theta)``, so for the Langmuir closure it reduces to a
    sum of squares.
    """
    p = problem
    grid = p.grid
    c = state.bulk
    if np.any(c <= 0) or (state.surface is not None and np.any(state.surface <= 0)):
        raise ValueError("entropy production needs strictly positive concentrations")
    mu0, mu_sigma0, _ = consistent_potentials(p)
    d = p.d_array
    mu = mu0 + np.log(c)

    chem = 0.0
    if p.bulk.n_reactions and p.a_react > 0:
        prod = p.bulk.reaction_rates(c) @ p.bulk.nu
        chem = p.a_react * float(integrate(-(mu * prod).sum(axis=1), grid, "bulk"))

    f = grid.faces
    dc = c[f[:, 1]] - c[f[:, 0]]
    inner = (grid.face_area[:, None] * d * dc ** 2 / (grid.face_dist[:, None] * _harmonic(c[f[:, 0]], c[f[:, 1]])))
    diff = float(inner.sum())
    if state.ghosts is not None:
        ck = c[grid.adjacent]
        tr = ghost_trace(c, state.ghosts, grid)
        if np.all(tr > 0):
            hb = grid.bnd_dist[:, None]
            diff += float((grid.bnd_area[:, None] * d * (ck - state.ghosts) ** 2 / (2.0 * hb * _harmonic(ck, tr))).sum())
    diff *= p.a_diff

    surface_chem = surface_diff = sorption = 0.0
    theta = state.surface
    if theta is not None and theta.shape[1] == p.n_species + 1 and mu_sigma0 is not None:
        w = p.surface_weight
        mu_s = mu_sigma0 + np.log(theta)
        if p.surface.n_reactions and p.a_react_sigma > 0:
            rates, _ = p.surface.rates(theta, p.c_s)
            prod = rates @ p.surface.extended_nu
            surface_chem = w * p.a_react_sigma * float(integrate(-(mu_s * prod).sum(axis=1), grid, "surface"))
        if p.a_diff_sigma > 0 and len(grid.edges):
            i, j = grid.edges[:, 0], grid.edges[:, 1]
            mid = 0.5 * (theta[i] + theta[j])
            delta = theta[j] - theta[i]
            flux = np.einsum("eqp,ep->eq", p.surface_diffusion(mid), delta)
            surface_diff = w * p.a_diff_sigma * float((flux * delta / mid).sum(axis=1) @ (1.0 / grid.edge_length))
        if p.a_sorp > 0:
            tr = _traces(state, p)
            if np.all(tr > 0):
                s = (p.sorption.k_ad * tr * theta[:, :1] - p.sorption.k_de * theta[:, 1:]) * p.c_s
                drive = mu_s[:, 1:] - mu_s[:, :1] - (mu0 + np.log(tr))
                sorption = w * p.a_sorp * float(integrate(-(drive * s).sum(axis=1), grid, "surface"))
    return EntropyProduction(chem, diff, surface_chem, surface_diff, sorption)


def entropy_identity_residual(traj: TrajectoryRecord, problem: FullProblem, mu0=None) -> float:
    """``|F(T) - F(0) + int_0^T (bulk dissipation) dt|`` along a bulk-only trajectory.

    Meant for the three-species model problem, where the boundary term of
    the free energy balance vanishes exactly; the time integral uses the
    right endpoint of each sampling interval, matching implicit Euler.
    Needs every step sampled for the O(dt) behaviour.
    """
    if not traj.states:
        raise ValueError("trajectory has no stored states")
    if mu0 is None:
        mu0, _, _ = consistent_potentials(problem)
    energy = [free_energy(s, problem, mu0=mu0, variant=ModelVariant.THREE_PARAM) for s in traj.states]
    dissipated = 0.0
    for k in range(1, len(traj.states)):
        z = entropy_production_terms(traj.states[k].replace(surface=None), problem)
        dissipated += (traj.times[k] - traj.times[k - 1]) * (z.chem + z.diff)
    return abs(energy[-1] - energy[0] + dissipated)


# -- closed-form equilibria of the model problem ---------------------------------

@dataclass(frozen=True)
class MpParameters:
    """Conserved averages ``a = <c1 + c3>``, ``b = <c2 + c3>`` and ``kappa``.

    Here ``kappa`` is the constant in ``c3 = kappa c1 c2``; the boundary
    constant returned by :func:`bulksurf.solvers.mp_kappa` is its reciprocal.
    """

    a: float
    b: float
    kappa: float

    def __post_init__(self):
        if not (self.a >= 0 and self.b >= 0):
            raise ValueError("a and b must be nonnegative")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


def _positive_root(kappa: float, lin: float, const: float) -> float:
    """Nonnegative root of ``kappa x^2 + lin x - const = 0`` for ``const >= 0``."""
    if const == 0.0:
        return 0.0 if lin >= 0 else -lin / kappa
    disc = math.sqrt(lin * lin + 4.0 * kappa * const)
    if lin > 0:
        return 2.0 * const / (lin + disc)
    return (disc - lin) / (2.0 * kappa)


def mp_equilibrium(params: MpParameters):
    """Homogeneous equilibrium ``(c1, c2, c3)`` with ``c1 + c3 = a``, ``c2 + c3 = b``, ``c3 = kappa c1 c2``.

    ``c1`` is the nonnegative root of ``kappa c1^2 + (1 + kappa (b - a)) c1 - a = 0``,
    ``c2`` the mirror formula and ``c3 = kappa c1 c2``; the roots are evaluated
    in cancellation-free form.
    """
    a, b, k = float(params.a), float(params.b), float(params.kappa)
    c1 = _positive_root(k, 1.0 + k * (b - a), a)
    c2 = _positive_root(k, 1.0 + k * (a - b), b)
    return c1, c2, k * c1 * c2


def mp_residuals(params: MpParameters, c) -> np.ndarray:
    """Relative residuals of the three defining equations."""
    a, b, k = params.a, params.b, params.kappa
    c1, c2, c3 = c
    return np.array([
        abs(c1 * (1 + k * c2) - a) / max(a, 1e-300) if a > 0 else abs(c1),
        abs(c2 * (1 + k * c1) - b) / max(b, 1e-300) if b > 0 else abs(c2),
        abs(c3 - k * c1 * c2) / max(c3, 1e-300) if c3 > 0 else abs(k * c1 * c2),
    ])


def mp_equilibrium_newton(params: MpParameters, starts: int = 10, seed: int = 0) -> np.ndarray:
    """Independent check: Newton-type solve of the 3x3 system from random starts.

    Returns the nonnegative solution with the smallest residual.
    """
    a, b, k = params.a, params.b, params.kappa

    def fun(x):
        c1, c2, c3 = x
        return [c1 + c3 - a, c2 + c3 - b, c3 - k * c1 * c2]

    def jac(x):
        c1, c2, _ = x
        return [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [-k * c2, -k * c1, 1.0]]

    rng = np.random.default_rng(seed)
    scale = max(a, b, 1.0)
    best, best_res = None, math.inf
    for _ in range(starts):
        sol = optimize.root(fun, rng.uniform(0.0, scale, 3), jac=jac, method="hybr", options={"xtol": 1e-15})
        x = sol.x
        res = float(np.max(np.abs(fun(x))))
        if np.all(x >= -1e-12 * scale) and res < best_res:
            best, best_res = x, res
    if best is None:
        raise RuntimeError("no nonnegative solution found")
    return best


# -- monitors ---------------------------------------------------------------------

class PositivityReport(NamedTuple):
    value: float
    location: tuple  # ("bulk" | "surface", index, component)


def positivity_monitor(state: SystemState) -> PositivityReport:
    """Global minimum over bulk cells and surface nodes with its location."""
    k = int(np.argmin(state.bulk))
    idx = np.unravel_index(k, state.bulk.shape)
    best = PositivityReport(float(state.bulk[idx]), ("bulk", int(idx[0]), int(idx[1])))
    if state.surface is not None and state.surface.size:
        j = np.unravel_index(int(np.argmin(state.surface)), state.surface.shape)
        if state.surface[j] < best.value:
            best = PositivityReport(float(state.surface[j]), ("surface", int(j[0]), int(j[1])))
    return best


class BlowupStatus(NamedTuple):
    status: str  # "ok" or "warning"
    norm: float  # first norm above threshold, else the largest seen
    time: Optional[float]


def _w1_norm(c: np.ndarray, grid) -> float:
    value = float(np.max(np.abs(c)))
    if grid is not None and len(grid.faces):
        f = grid.faces
        grad = (c[f[:, 1]] - c[f[:, 0]]) / grid.face_dist[:, None]
        value += math.sqrt(float((grid.face_area[:, None] * grid.face_dist[:, None] * grad ** 2).sum()))
    return value


def blowup_monitor(traj: TrajectoryRecord, threshold: float, grid=None) -> BlowupStatus:
    """Max-norm plus discrete W1 seminorm per sample, checked against ``threshold``.

    A practical stand-in for the phase-space norm of the well-posedness
    theory; without a grid only the max-norm is used.
    """
    largest = 0.0
    for t, state in zip(traj.times, traj.states):
        value = _w1_norm(state.bulk, grid)
        if not np.isfinite(value) or value > threshold:
            return BlowupStatus("warning", value, t)
        largest = max(largest, value)
    return BlowupStatus("ok", largest, None)


def apriori_bounds(traj: TrajectoryRecord, problem: FullProblem, e=None) -> dict:
    """Boundedness monitors for sup_t int|c|, sup_z int_0^T |c| dt and int int |c|^2.

    Each entry is ``(value, bound)``; the bounds are the conservation-based
    estimates for a positive conservation vector ``e`` (found automatically
    when omitted). Time integrals use the trapezoidal rule over samples.
    """
    if e is None:
        joint = ReactionNetwork(problem.bulk.species, problem.bulk.reactions + problem.surface.base.reactions)
        found = positive_conservation_vector(joint)
        if not found:
            raise ValueError("no strictly positive conservation vector")
        e = found.vector
    e = np.asarray(e, dtype=float)
    grid = problem.grid
    d = problem.d_array
    emin = float(e.min())
    c0 = traj.states[0].bulk
    horizon = traj.times[-1] - traj.times[0]
    dmax, dmin = float(d.max()), float(d.min())
    sup_e0 = float(np.max(c0 @ e))

    states = [s.bulk for s in traj.states]
    times = np.asarray(traj.times)
    l1 = max(float(integrate(np.abs(c).sum(axis=1), grid)) for c in states)
    stack = np.stack(states)  # (samples, cells, N)
    time_int = np.trapezoid(np.abs(stack).sum(axis=2), times, axis=0) if len(times) > 1 else np.zeros(len(c0))
    sq = np.trapezoid([float(integrate((c ** 2).sum(axis=1), grid)) for c in states], times) if len(times) > 1 else 0.0

    total0 = float(integrate(c0 @ e, grid))
    if traj.states[0].surface is not None:
        total0 += problem.surface_weight * float(integrate(traj.states[0].surface[:, 1:] @ e, grid, "surface"))
    return {
        "Linf_L1": (l1, total0 / emin),
        "L1_Linf": (float(np.max(time_int)), horizon * dmax / dmin * sup_e0 / emin),
        "L2_L2": (float(sq), dmax / dmin * horizon * sup_e0 * float(integrate(c0 @ (d * e), grid)) / (dmin * emin ** 2)),
    }


# -- fast-limit convergence ---------------------------------------------------------

# time scales sent to zero for each limit model, as {group: power of eps}.
# The three-parameter limit needs sorption and surface chemistry faster than
# transmission, otherwise the sorption flux stays tied to the bulk flux.
LIMIT_SCALINGS = {
    ModelVariant.FAST_SORPTION: {"sorp": 1},
    ModelVariant.FAST_SURFACE_CHEMISTRY: {"react_sigma": 1},
    ModelVariant.TWO_PARAM: {"sorp": 1, "react_sigma": 1},
    ModelVariant.THREE_PARAM: {"sorp": 2, "react_sigma": 2, "trans": 1},
    ModelVariant.FAST_SURFACE_DIFFUSION: {"diff_sigma": 1},
    ModelVariant.FAST_ACCUMULATION: {"sorp": 1, "react_sigma": 1, "diff_sigma": 1, "trans": 1},
}


def _distance(a: SystemState, b: SystemState) -> float:
    dist = float(np.max(np.abs(a.bulk - b.bulk)))
    if a.surface is not None and b.surface is not None and a.surface.shape == b.surface.shape:
        dist = max(dist, float(np.max(np.abs(a.surface - b.surface))))
    return dist


def limit_convergence_study(base: FullProblem, variant: ModelVariant, epsilons: Sequence[float], horizon: float,
                            cfg: StepperConfig, state0: SystemState) -> list:
    """Terminal distance between the full model with scaled time scales and the limit model.

    For each ``eps`` the time scales listed in :data:`LIMIT_SCALINGS` are
    multiplied by the listed power of ``eps`` and the full model is run to ``horizon``. Rows are
    dicts with ``epsilon``, ``error`` and ``status`` (``"ok"`` or
    ``"failed"`` with a ``message``); a failed run leaves ``error = nan``.
    """
    variant = ModelVariant.parse(variant) if isinstance(variant, str) else variant
    if variant is ModelVariant.FULL:
        raise ValueError("the limit study needs a reduced model")
    keys = LIMIT_SCALINGS[variant]
    try:
        limit = simulate(base, variant, state0, cfg, horizon, sample_every=10 ** 9, keep_states=False).final
    except (StepFailure, ValueError) as exc:
        return [{"epsilon": float(e), "error": math.nan, "status": "failed", "message": f"limit run: {exc}"}
                for e in epsilons]
    start = prepare_state(base, variant, state0, cfg)
    rows = []
    for eps in epsilons:
        problem = base.with_times(base.times.scaled(**{k: float(eps) ** q for k, q in keys.items()}))
        full_start = start if start.surface is not None and start.surface.shape[1] == base.n_species + 1 else state0
        try:
            final = simulate(problem, ModelVariant.FULL, full_start.replace(ghosts=None, info={}), cfg, horizon,
                             sample_every=10 ** 9, keep_states=False).final
            rows.append({"epsilon": float(eps), "error": _distance(final, limit), "status": "ok", "message": ""})
        except (StepFailure, ValueError) as exc:
            rows.append({"epsilon": float(eps), "error": math.nan, "status": "failed", "message": str(exc)})
    return rows

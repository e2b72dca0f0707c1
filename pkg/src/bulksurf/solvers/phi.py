"""Subproblem iteration for the three-species model problem.

Per time step the mixed boundary system

    F1 + F3 = 0,  F2 + F3 = 0,  c1 c2 = kappa c3   (on the faces)

is solved by alternating linear implicit heat steps: species 1 and 2 with
the outward flux ``-F3`` of the current species-3 iterate, then species 3
with face value ``h = c1 c2 / kappa``. Without relaxation the face-value
map has derivative close to ``-(c2 sqrt(d3/d1) + c1 sqrt(d3/d2)) / kappa``
at every node, which is below -1 for moderate data, so the plain iteration
can diverge. Each update is therefore relaxed with ``omega = 1 / (1 - f)``,
where ``f`` is the per-node derivative computed from the (constant) discrete
sensitivities of the linear subproblems.
"""
from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..grids import boundary_trace, laplacian_matrices
from .problem import ConfigurationError, FullProblem, StepFailure, StepperConfig, SystemState


class _PhiOperators:
    def __init__(self, p: FullProblem, dt: float):
        g = p.grid
        a, b = laplacian_matrices(g)
        nc, nn = g.n_cells, g.n_nodes
        sel = sp.csr_matrix((np.ones(nn), (np.arange(nn), g.adjacent)), shape=(nn, nc))
        coef = dt * p.a_diff
        d = p.d_array
        eye = sp.identity(nc, format="csc")
        self.b = b
        self.coef = coef
        self.hb = g.bnd_dist
        self.adj = g.adjacent
        self.d = d
        self.neumann = [spla.splu((eye - coef * d[i] * (a + b @ sel)).tocsc()) for i in (0, 1)]
        self.dirichlet = spla.splu((eye - coef * d[2] * (a - b @ sel)).tocsc())
        # sensitivities of face value to own flux and of flux to own face value
        unit = b.toarray()  # (nc, nn), column k is the boundary stencil of node k
        hb = self.hb
        self.sigma = []
        for i in (0, 1):
            resp = self.neumann[i].solve(-coef * unit * hb[None, :])
            self.sigma.append(resp[self.adj, np.arange(nn)] - hb / (2 * d[i]))
        resp = self.dirichlet.solve(2 * coef * d[2] * unit)
        self.delta3 = 2 * d[2] * (resp[self.adj, np.arange(nn)] - 1.0) / hb

    def solve_neumann(self, i, c_old, flux):
        c = self.neumann[i].solve(c_old - self.coef * (self.b @ (self.hb * flux)))
        trace = c[self.adj] - flux * self.hb / (2 * self.d[i])
        return c, trace

    def solve_dirichlet(self, c_old, h):
        c = self.dirichlet.solve(c_old + 2 * self.coef * self.d[2] * (self.b @ h))
        flux = 2 * self.d[2] * (c[self.adj] - h) / self.hb
        return c, flux


_OPS: "weakref.WeakKeyDictionary[FullProblem, dict]" = weakref.WeakKeyDictionary()


def _operators(p: FullProblem, dt: float) -> _PhiOperators:
    per = _OPS.setdefault(p, {})
    if dt not in per:
        if len(per) > 8:
            per.clear()
        per[dt] = _PhiOperators(p, dt)
    return per[dt]


def mp_kappa(p: FullProblem) -> float:
    """Boundary constant of the model problem; checks the network shape."""
    base = p.surface.base
    ok = (
        p.n_species == 3
        and p.bulk.n_reactions == 0
        and base.n_reactions == 1
        and tuple(base.alpha[0]) == (1, 1, 0)
        and tuple(base.beta[0]) == (0, 0, 1)
    )
    if not ok:
        raise ConfigurationError("the subproblem iteration needs the three-species model network A1 + A2 <-> A3")
    return float(p.boundary_constants()[0])


def phi_fixed_point(p: FullProblem, s: SystemState, cfg: StepperConfig) -> SystemState:
    """One implicit Euler step of the three-parameter limit by relaxed subproblem iteration."""
    kappa = mp_kappa(p)
    ops = _operators(p, cfg.dt)
    c_old = s.bulk
    g = p.grid
    if s.ghosts is not None:
        h = 0.5 * (c_old[g.adjacent, 2] + s.ghosts[:, 2])
    else:
        h = boundary_trace(c_old[:, 2], g)
    c3, flux3 = ops.solve_dirichlet(c_old[:, 2], h)
    prev = (c_old[:, 0], c_old[:, 1], c_old[:, 2])
    last_dh = None
    ratio = 0.0
    ratios = []
    for it in range(1, cfg.phi_max_iter + 1):
        c1, tr1 = ops.solve_neumann(0, c_old[:, 0], -flux3)
        c2, tr2 = ops.solve_neumann(1, c_old[:, 1], -flux3)
        with np.errstate(over="ignore", invalid="ignore"):
            h_map = tr1 * tr2 / kappa
        f = -(tr2 * ops.sigma[0] + tr1 * ops.sigma[1]) * ops.delta3 / kappa
        omega = 1.0 / (1.0 - np.minimum(f, 0.0))
        dh = omega * (h_map - h)
        h = h + dh
        c3, flux3 = ops.solve_dirichlet(c_old[:, 2], h)
        change = max(np.max(np.abs(c1 - prev[0])), np.max(np.abs(c2 - prev[1])), np.max(np.abs(c3 - prev[2])))
        size = float(np.max(np.abs(dh)))
        if last_dh is not None and last_dh > 1e-13:
            ratio = size / last_dh
            ratios.append(ratio)
        last_dh = size
        prev = (c1, c2, c3)
        if change <= cfg.phi_tol:
            break
        if not np.isfinite(change):
            raise StepFailure(f"subproblem iteration diverged (contraction ratio {ratio:.3g})", change, s.time)
    else:
        raise StepFailure(f"no contraction within {cfg.phi_max_iter} iterations (last ratio {ratio:.3g})",
                          float(change), s.time)
    # final consistent sweep for species 1 and 2 against the converged flux
    c1, tr1 = ops.solve_neumann(0, c_old[:, 0], -flux3)
    c2, tr2 = ops.solve_neumann(1, c_old[:, 1], -flux3)
    bulk = np.column_stack([c1, c2, c3])
    hb = g.bnd_dist
    ghosts = np.column_stack([
        c1[g.adjacent] + flux3 * hb / p.d[0],
        c2[g.adjacent] + flux3 * hb / p.d[1],
        2 * h - c3[g.adjacent],
    ])
    low = float(bulk.min())
    if low < -cfg.positivity_tol:
        raise StepFailure(f"negative value {low:.3e}", time=s.time + cfg.dt)
    info = {"phi_iters": it, "contraction": max(ratios) if ratios else 0.0, "newton_res": 0.0}
    return SystemState(bulk, None, s.time + cfg.dt, ghosts, info)

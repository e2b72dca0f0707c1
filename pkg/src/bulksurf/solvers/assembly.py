"""Residuals and sparse Jacobians of the implicit Euler step.

Unknown vector layout::

    [ c (cell-major, n_cells * N) | ghosts (n_nodes * N) | surface unknowns (n_nodes * n_u) ]

Rows: one bulk balance per cell and species (scaled by ``dt``), then
``N + n_u`` rows per boundary node. The node rows only see the adjacent
cell through the face value ``(c_k + g) / 2`` and the outward flux
``d (c_k - g) / h``, so every node block is assembled from derivatives with
respect to those two quantities.
"""
from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp

from ..grids import laplacian_matrices
from ..network import mass_action_terms
from .problem import ConfigurationError, FullProblem, ModelVariant


def block_coo(row_base, col_base, blocks):
    """COO triplets for dense blocks placed at ``(row_base[b], col_base[b])``."""
    blocks = np.asarray(blocks)
    nb, r, c = blocks.shape
    rows = np.broadcast_to(np.asarray(row_base)[:, None, None] + np.arange(r)[None, :, None], blocks.shape)
    cols = np.broadcast_to(np.asarray(col_base)[:, None, None] + np.arange(c)[None, None, :], blocks.shape)
    return rows.ravel(), cols.ravel(), blocks.ravel()


def surface_map(variant: ModelVariant, n: int):
    """Affine map ``theta = offset + T u`` from surface unknowns to occupancies."""
    if variant is ModelVariant.FAST_SURFACE_DIFFUSION:
        t = np.concatenate([[1.0], np.full(n, -1.0 / n)])[:, None]
        offset = np.concatenate([[0.0], np.full(n, 1.0 / n)])
    elif variant is ModelVariant.THREE_PARAM:
        t = np.zeros((n + 1, 0))
        offset = np.full(n + 1, np.nan)
    else:
        t = np.vstack([-np.ones((1, n)), np.eye(n)])
        offset = np.zeros(n + 1)
        offset[0] = 1.0
    return t, offset


def surface_divergence(problem: FullProblem, theta: np.ndarray, jacobian: bool = True):
    """Discrete ``div(D(theta) grad theta)`` at every node, shape ``(n_nodes, 1+N)``.

    Edge fluxes use ``D`` at the edge midpoint. With ``jacobian`` the
    derivative is returned as ``(row_nodes, col_nodes, blocks)`` with blocks
    of shape ``(1+N, 1+N)``.
    """
    grid = problem.grid
    out = np.zeros_like(theta)
    if problem.a_diff_sigma == 0.0:
        return out, None
    i, j = grid.edges[:, 0], grid.edges[:, 1]
    he = grid.edge_length[:, None]
    wi = grid.node_weight[i][:, None]
    wj = grid.node_weight[j][:, None]
    mid = 0.5 * (theta[i] + theta[j])
    delta = theta[j] - theta[i]
    dmat = problem.surface_diffusion(mid)
    flux = np.einsum("eqp,ep->eq", dmat, delta) / he
    np.add.at(out, i, flux / wi)
    np.add.at(out, j, -flux / wj)
    if not jacobian:
        return out, None
    dd = problem.surface_diffusion.gradient(mid)
    half = 0.5 * np.einsum("eqpr,ep->eqr", dd, delta)
    d_dj = (dmat + half) / he[..., None]
    d_di = (-dmat + half) / he[..., None]
    rows = np.concatenate([i, i, j, j])
    cols = np.concatenate([j, i, j, i])
    blocks = np.concatenate([d_dj / wi[..., None], d_di / wi[..., None], -d_dj / wj[..., None], -d_di / wj[..., None]])
    return out, (rows, cols, blocks)


class NodeKinetics:
    """Sorption and surface reaction terms at all nodes with derivatives."""

    def __init__(self, problem: FullProblem, tr: np.ndarray, theta: np.ndarray):
        p = problem
        n = p.n_species
        cs = p.c_s
        k_ad, k_de = p.sorption.k_ad, p.sorption.k_de
        self.s = (k_ad * tr * theta[:, :1] - k_de * theta[:, 1:]) * cs
        nn = tr.shape[0]
        self.ds_dtr = np.zeros((nn, n, n))
        idx = np.arange(n)
        self.ds_dtr[:, idx, idx] = k_ad * theta[:, :1] * cs
        self.ds_dth = np.zeros((nn, n, n + 1))
        self.ds_dth[:, :, 0] = k_ad * tr * cs
        self.ds_dth[:, idx, idx + 1] = -k_de * cs
        surf = p.surface
        self.rates, self.drates = surf.rates(theta, cs, jacobian=True)  # (nn, m), (nn, m, 1+N)
        nu = surf.extended_nu
        self.r = self.rates @ nu
        self.dr = np.einsum("ma,bmr->bar", nu, self.drates)


class Assembler:
    """Implicit Euler system for one problem and model variant."""

    def __init__(self, problem: FullProblem, variant: ModelVariant):
        problem.check_variant(variant)
        self.p = problem
        self.variant = variant
        g = problem.grid
        n = problem.n_species
        self.n = n
        self.nc, self.nn = g.n_cells, g.n_nodes
        self.nu = variant.surface_unknowns(n)
        families = variant.constraints(n, problem.surface.n_reactions)
        self.families = families
        self.rows_per_node = sum(families.values())
        if self.rows_per_node != n + self.nu:
            raise ConfigurationError(
                f"{variant.value}: {self.rows_per_node} boundary rows for {n + self.nu} unknowns per node"
            )
        self.off_g = self.nc * n
        self.off_u = self.off_g + self.nn * n
        self.size = self.off_u + self.nn * self.nu
        a, b = laplacian_matrices(g)
        dmat = sp.diags(problem.d_array)
        self.lap_cc = sp.kron(a, dmat, format="csr")
        self.lap_cg = sp.kron(b, dmat, format="csr")
        self.T, self.offset = surface_map(variant, n)
        self.E = problem.surface_basis
        self.adj = g.adjacent
        self.d_over_h = problem.d_array[None, :] / g.bnd_dist[:, None]
        self.kappa = problem.boundary_constants() if variant is ModelVariant.THREE_PARAM else None
        self._linear = {}
        # node row / column bases
        self.node_rows = self.off_g + np.arange(self.nn) * self.rows_per_node
        self.cell_cols = self.adj * n
        self.ghost_cols = self.off_g + np.arange(self.nn) * n
        self.u_cols = self.off_u + np.arange(self.nn) * self.nu
        rates = [problem.a_react_sigma, problem.a_sorp, problem.a_diff_sigma]
        self.steady_scale = max([r for r in rates if r > 0] or [1.0])

    # -- packing -----------------------------------------------------------
    def split(self, x):
        c = x[: self.off_g].reshape(self.nc, self.n)
        gh = x[self.off_g: self.off_u].reshape(self.nn, self.n)
        u = x[self.off_u:].reshape(self.nn, self.nu)
        return c, gh, u

    def pack(self, c, gh, u):
        return np.concatenate([np.ravel(c), np.ravel(gh), np.ravel(u)])

    def theta(self, u) -> np.ndarray:
        if self.nu == 0:
            return None
        return self.offset + u @ self.T.T

    def unknowns_from_surface(self, surface) -> np.ndarray:
        if self.nu == 0 or surface is None:
            return np.zeros((self.nn, self.nu))
        if self.variant is ModelVariant.FAST_SURFACE_DIFFUSION:
            return surface[:, :1].copy()
        return surface[:, 1:].copy()

    def face_values(self, c, gh):
        ck = c[self.adj]
        return 0.5 * (ck + gh), self.d_over_h * (ck - gh)

    # -- linear part ---------------------------------------------------------
    def _linear_part(self, dt: float) -> sp.csr_matrix:
        mat = self._linear.get(dt)
        if mat is None:
            a = self.p.a_diff
            cc = sp.identity(self.off_g, format="csr") - dt * a * self.lap_cc
            cg = -dt * a * self.lap_cg
            top = sp.hstack([cc, cg, sp.csr_matrix((self.off_g, self.nn * self.nu))])
            bottom = sp.csr_matrix((self.size - self.off_g, self.size))
            mat = sp.vstack([top, bottom], format="csr")
            if len(self._linear) > 8:
                self._linear.clear()
            self._linear[dt] = mat
        return mat

    # -- node families -------------------------------------------------------
    def _families(self, tr, F, u, u_old, theta, dt, kin):
        """Yield ``(name, res, J_tr, J_F, J_u, sdiv_left)`` for each row family."""
        p, n, nn = self.p, self.n, self.nn
        eye = np.broadcast_to(np.eye(n), (nn, n, n))
        zeros = lambda r, c: np.zeros((nn, r, c))  # noqa: E731
        T = self.T
        q = p.a_trans
        red = np.hstack([np.zeros((n, 1)), np.eye(n)])
        for name, size in self.families.items():
            if size == 0:
                continue
            if name == "transmission":
                ds_du = kin.ds_dth @ T
                yield name, p.flux_ratio * F - kin.s, -kin.ds_dtr, p.flux_ratio * eye, -ds_du, None
            elif name == "sorption_equilibrium":
                yield name, kin.s, kin.ds_dtr, zeros(n, n), kin.ds_dth @ T, None
            elif name == "surface_dynamics":
                ar = p.a_react_sigma
                res = u - u_old - dt * (ar * kin.r[:, 1:] + q * F)
                ju = np.eye(n) - dt * ar * (kin.dr[:, 1:, :] @ T)
                yield name, res, zeros(n, n), -dt * q * eye, ju, -dt * p.a_diff_sigma * red
            elif name == "chemical_equilibrium":
                yield name, kin.rates, zeros(size, n), zeros(size, n), kin.drates @ T, None
            elif name == "projected_dynamics":
                E = self.E
                res = (u - u_old - dt * q * F) @ E.T
                jf = np.broadcast_to(-dt * q * E, (nn,) + E.shape)
                ju = np.broadcast_to(E @ np.eye(n), (nn,) + E.shape)
                yield name, res, zeros(size, n), jf, ju, -dt * p.a_diff_sigma * (E @ red)
            elif name == "flux_conservation":
                E = self.E
                yield name, F @ E.T, zeros(size, n), np.broadcast_to(E, (nn,) + E.shape), zeros(size, 0), None
            elif name == "boundary_equilibrium":
                base = p.surface.base
                res, jac = mass_action_terms(base.alpha, base.beta, np.ones(base.n_reactions), self.kappa, tr, True)
                yield name, res, jac, zeros(size, n), zeros(size, 0), None
            elif name == "vacancy_dynamics":
                ar = p.a_react_sigma
                res = u[:, :1] - u_old[:, :1] - dt * (ar * kin.r[:, :1] - q * F.sum(axis=1, keepdims=True))
                jf = np.broadcast_to(dt * q * np.ones((1, n)), (nn, 1, n))
                ju = 1.0 - dt * ar * (kin.dr[:, :1, :] @ T)
                yield name, res, zeros(1, n), jf, ju, None
            elif name == "surface_steady_state":
                sc = self.steady_scale
                ar, asorp = p.a_react_sigma, p.a_sorp
                res = (ar * kin.r[:, 1:] + asorp * kin.s) / sc
                jtr = asorp * kin.ds_dtr / sc
                ju = (ar * kin.dr[:, 1:, :] + asorp * kin.ds_dth) @ T / sc
                yield name, res, jtr, zeros(n, n), ju, p.a_diff_sigma * red / sc
            else:  # pragma: no cover - guarded by ModelVariant.constraints
                raise ConfigurationError(name)

    # -- full system ---------------------------------------------------------
    def evaluate(self, x, c_old, u_old, dt, jacobian: bool = True):
        p, n = self.p, self.n
        c, gh, u = self.split(x)
        # bulk rows
        lap = (self.lap_cc @ c.ravel() + self.lap_cg @ gh.ravel()).reshape(self.nc, n)
        res_bulk = c - c_old - dt * p.a_diff * lap
        rb = None
        if p.bulk.n_reactions and p.a_react > 0:
            rates, drates = mass_action_terms(p.bulk.alpha, p.bulk.beta, p.bulk.k_f, p.bulk.k_b, c, jacobian)
            res_bulk -= dt * p.a_react * (rates @ p.bulk.nu)
            if jacobian:
                rb = -dt * p.a_react * np.einsum("ma,cmj->caj", p.bulk.nu, drates)
        # node rows
        tr, F = self.face_values(c, gh)
        theta = self.theta(u)
        kin = NodeKinetics(p, tr, theta) if theta is not None else None
        sdiv, sdiv_jac = (None, None)
        if theta is not None and p.a_diff_sigma > 0:
            sdiv, sdiv_jac = surface_divergence(p, theta, jacobian)
        res_nodes, jtr, jf, ju, lefts = [], [], [], [], []
        row0 = 0
        for _, res, a_tr, a_f, a_u, left in self._families(tr, F, u, u_old, theta, dt, kin):
            if left is not None and sdiv is not None:
                res = res + sdiv @ left.T
                lefts.append((row0, left))
            res_nodes.append(res)
            jtr.append(a_tr)
            jf.append(a_f)
            ju.append(a_u)
            row0 += res.shape[1]
        res_node = np.concatenate(res_nodes, axis=1)
        residual = np.concatenate([res_bulk.ravel(), res_node.ravel()])
        if not jacobian:
            return residual, None
        J_tr = np.concatenate(jtr, axis=1)
        J_F = np.concatenate(jf, axis=1)
        J_u = np.concatenate(ju, axis=1)
        dh = self.d_over_h[:, None, :]
        J_c = 0.5 * J_tr + J_F * dh
        J_g = 0.5 * J_tr - J_F * dh
        parts = [block_coo(self.node_rows, self.cell_cols, J_c), block_coo(self.node_rows, self.ghost_cols, J_g)]
        if self.nu:
            parts.append(block_coo(self.node_rows, self.u_cols, J_u))
        if rb is not None:
            cells = np.arange(self.nc) * n
            parts.append(block_coo(cells, cells, rb))
        if sdiv_jac is not None:
            rn, cn, blocks = sdiv_jac
            for r0, left in lefts:
                parts.append(block_coo(self.node_rows[rn] + r0, self.u_cols[cn], left @ blocks @ self.T))
        rows = np.concatenate([q[0] for q in parts])
        cols = np.concatenate([q[1] for q in parts])
        vals = np.concatenate([q[2] for q in parts])
        nonlinear = sp.csr_matrix((vals, (rows, cols)), shape=(self.size, self.size))
        return residual, self._linear_part(dt) + nonlinear


_CACHE: "weakref.WeakKeyDictionary[FullProblem, dict]" = weakref.WeakKeyDictionary()


def assembler_for(problem: FullProblem, variant: ModelVariant) -> Assembler:
    per_problem = _CACHE.setdefault(problem, {})
    asm = per_problem.get(variant)
    if asm is None:
        asm = per_problem[variant] = Assembler(problem, variant)
    return asm

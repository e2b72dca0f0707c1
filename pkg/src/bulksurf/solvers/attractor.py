"""Steady state of the surface system for frozen bulk traces."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..surface import isotherm_array
from .assembly import NodeKinetics, block_coo, surface_divergence
from .problem import FullProblem, StepFailure, StepperConfig


class AttractorError(StepFailure):
    pass


@dataclass(frozen=True, eq=False)
class AttractorResult:
    theta: np.ndarray  # (n_nodes, 1+N)
    residual: float
    iterations: int
    unique: Optional[bool] = None
    spread: float = 0.0
    message: str = ""


def _steady_residual(p: FullProblem, tr, u, scale, jacobian=True):
    n = p.n_species
    nn = u.shape[0]
    theta = np.concatenate([1.0 - u.sum(axis=1, keepdims=True), u], axis=1)
    kin = NodeKinetics(p, tr, theta)
    T = np.vstack([-np.ones((1, n)), np.eye(n)])
    res = (p.a_react_sigma * kin.r[:, 1:] + p.a_sorp * kin.s) / scale
    sdiv, sjac = surface_divergence(p, theta, jacobian)
    if sdiv is not None and p.a_diff_sigma > 0:
        res = res + p.a_diff_sigma * sdiv[:, 1:] / scale
    if not jacobian:
        return res, None
    local = (p.a_react_sigma * kin.dr[:, 1:, :] + p.a_sorp * kin.ds_dth) @ T / scale
    base = np.arange(nn) * n
    parts = [block_coo(base, base, local)]
    if sjac is not None:
        rn, cn, blocks = sjac
        parts.append(block_coo(rn * n, cn * n, p.a_diff_sigma * blocks[:, 1:, :] @ T / scale))
    rows = np.concatenate([q[0] for q in parts])
    cols = np.concatenate([q[1] for q in parts])
    vals = np.concatenate([q[2] for q in parts])
    return res, sp.csr_matrix((vals, (rows, cols)), shape=(nn * n, nn * n))


def _pseudo_transient(p, tr, theta0, cfg, scale, warm):
    """Pseudo-time implicit Euler with switched-evolution step growth."""
    u = theta0[:, 1:].copy()
    res, jac = _steady_residual(p, tr, u, scale)
    norm = float(np.max(np.abs(res)))
    dtau = 1e6 if warm else 1.0
    eye = sp.identity(u.size, format="csr")
    for it in range(1, cfg.attractor_max_iter + 1):
        if norm <= cfg.attractor_tol:
            return u, norm, it - 1
        du = spla.spsolve((eye / dtau - jac).tocsc(), res.ravel()).reshape(u.shape)
        trial = u + du
        th = np.concatenate([1.0 - trial.sum(axis=1, keepdims=True), trial], axis=1)
        if not np.all(np.isfinite(trial)) or np.min(th) < -1e-14:
            dtau *= 0.25
            if dtau < 1e-12:
                break
            continue
        new_res, new_jac = _steady_residual(p, tr, trial, scale)
        new_norm = float(np.max(np.abs(new_res)))
        growth = norm / new_norm if new_norm > 0 else 1e3
        dtau = min(dtau * max(2.0, min(growth, 1e3)), 1e12)
        u, res, jac, norm = trial, new_res, new_jac, new_norm
    if norm <= cfg.attractor_tol:
        return u, norm, cfg.attractor_max_iter
    raise AttractorError(f"surface steady state not reached: residual {norm:.3e}", norm)


def surface_attractor(p: FullProblem, c_trace, cfg: StepperConfig, theta0: Optional[np.ndarray] = None,
                      check_unique: bool = True, second_start: Optional[np.ndarray] = None) -> AttractorResult:
    """Long-time limit of the surface system with the bulk traces frozen.

    The residual is measured with all rate prefactors divided by the largest
    one. With ``check_unique`` a second run from a different start (the
    uniform occupancy, or ``second_start``) must agree within ``1e-8``.
    """
    c_trace = np.asarray(c_trace, dtype=float)
    if np.any(c_trace < 0):
        raise ValueError("traces must be nonnegative")
    n = p.n_species
    nn = c_trace.shape[0]
    rates = [p.a_react_sigma, p.a_sorp, p.a_diff_sigma]
    scale = max([r for r in rates if r > 0] or [1.0])
    warm = theta0 is not None
    start = np.asarray(theta0, dtype=float) if warm else isotherm_array(c_trace, p.sorption)
    u, norm, iters = _pseudo_transient(p, c_trace, start, cfg, scale, warm)
    theta = np.concatenate([1.0 - u.sum(axis=1, keepdims=True), u], axis=1)
    if not check_unique:
        return AttractorResult(theta, norm, iters)
    other = second_start if second_start is not None else np.full((nn, n + 1), 1.0 / (n + 1))
    u2, _, _ = _pseudo_transient(p, c_trace, other, cfg, scale, False)
    spread = float(np.max(np.abs(u2 - u)))
    unique = spread <= 1e-8
    msg = "" if unique else "attractor not unique within tolerance"
    return AttractorResult(theta, norm, iters, unique, spread, msg)

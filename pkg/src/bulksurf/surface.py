"""Langmuir surface chemistry.

Surface vectors have length ``1 + N``; slot 0 is the vacancy (free site)
fraction and slots ``1..N`` are the occupancies of the adsorbed species.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from .network import ReactionNetwork, mass_action_terms

SIMPLEX_TOL = 1e-12


class CapacityError(ValueError):
    """Occupancies exceed the available sites."""


@dataclass(frozen=True)
class SurfaceParams:
    c_s: float
    n_species: int

    def __post_init__(self):
        if not self.c_s > 0:
            raise ValueError("site capacity must be positive")
        if self.n_species < 1:
            raise ValueError("need at least one species")


@dataclass(frozen=True)
class SurfaceState:
    """Occupancy vector ``(theta_0, theta_1, ..., theta_N)`` at one node."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.array(self.theta, dtype=float)
        if th.ndim != 1 or th.size < 2:
            raise ValueError("theta must be a vector of length 1 + N")
        if np.any(th < -SIMPLEX_TOL):
            raise ValueError(f"negative occupancy in {th}")
        if abs(th.sum() - 1.0) > 10 * SIMPLEX_TOL * th.size:
            raise ValueError(f"occupancies must sum to one, got {th.sum()!r}")
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)

    @property
    def vacancy(self) -> float:
        return float(self.theta[0])

    @property
    def reduced(self) -> np.ndarray:
        return self.theta[1:]


def vacancy_closure(theta_red) -> SurfaceState:
    theta_red = np.asarray(theta_red, dtype=float)
    total = float(theta_red.sum())
    if total > 1.0 + SIMPLEX_TOL:
        raise CapacityError(f"occupancies sum to {total} > 1")
    theta0 = 1.0 - total
    if -SIMPLEX_TOL <= theta0 < 0.0:
        theta0 = 0.0
    return SurfaceState(np.concatenate([[theta0], theta_red]))


def closure_array(theta_red: np.ndarray) -> np.ndarray:
    """Vectorized vacancy closure without validation, shape ``(..., 1+N)``."""
    theta_red = np.asarray(theta_red, dtype=float)
    return np.concatenate([1.0 - theta_red.sum(axis=-1, keepdims=True), theta_red], axis=-1)


def extend_surface_stoichiometry(alpha_red, beta_red):
    """Add the vacancy slot so that every reaction conserves sites."""
    alpha_red = np.asarray(alpha_red, dtype=int)
    beta_red = np.asarray(beta_red, dtype=int)
    s = int(np.sum(beta_red - alpha_red))
    a0, b0 = max(s, 0), max(-s, 0)
    return np.concatenate([[a0], alpha_red]), np.concatenate([[b0], beta_red])


@dataclass(frozen=True)
class SurfaceReactionNetwork:
    base: ReactionNetwork

    @cached_property
    def extended_alpha(self) -> np.ndarray:
        return self._extended()[0]

    @cached_property
    def extended_beta(self) -> np.ndarray:
        return self._extended()[1]

    def _extended(self):
        n = self.base.n_species + 1
        if self.base.n_reactions == 0:
            return np.zeros((0, n), dtype=int), np.zeros((0, n), dtype=int)
        pairs = [extend_surface_stoichiometry(r.alpha, r.beta) for r in self.base.reactions]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    @property
    def extended_nu(self) -> np.ndarray:
        return self.extended_beta - self.extended_alpha

    @property
    def n_species(self) -> int:
        return self.base.n_species

    @property
    def n_reactions(self) -> int:
        return self.base.n_reactions

    @property
    def k_f(self) -> np.ndarray:
        return self.base.k_f

    @property
    def k_b(self) -> np.ndarray:
        return self.base.k_b

    def scaled(self, factor: float) -> "SurfaceReactionNetwork":
        return SurfaceReactionNetwork(self.base.scaled(factor))

    def rates(self, theta, c_s: float = 1.0, jacobian: bool = False):
        """Reaction rates over full occupancy arrays ``(..., 1+N)``."""
        r, d = mass_action_terms(self.extended_alpha, self.extended_beta, self.k_f, self.k_b, theta, jacobian)
        return r * c_s, (None if d is None else d * c_s)


def surface_mass_action(network: SurfaceReactionNetwork, theta, c_s: float = 1.0) -> np.ndarray:
    """Production rates over all ``1 + N`` slots; they sum to zero."""
    th = theta.theta if isinstance(theta, SurfaceState) else np.asarray(theta, dtype=float)
    rates, _ = network.rates(th, c_s)
    return rates @ network.extended_nu


@dataclass(frozen=True)
class SorptionModel:
    """Adsorption ``A_i + vacancy -> A_i^surf`` and its reverse.

    ``k_ad = 0`` is admitted for pure desorption; ``k_de`` must be positive.
    """

    k_ad: np.ndarray
    k_de: np.ndarray

    def __post_init__(self):
        k_ad = np.array(self.k_ad, dtype=float).ravel()
        k_de = np.array(self.k_de, dtype=float).ravel()
        if k_ad.shape != k_de.shape:
            raise ValueError("k_ad and k_de must have the same length")
        if np.any(k_ad < 0) or np.any(k_de <= 0):
            raise ValueError("sorption constants must satisfy k_ad >= 0, k_de > 0")
        k_ad.setflags(write=False)
        k_de.setflags(write=False)
        object.__setattr__(self, "k_ad", k_ad)
        object.__setattr__(self, "k_de", k_de)

    @property
    def n_species(self) -> int:
        return self.k_ad.size

    @property
    def isotherm_constants(self) -> np.ndarray:
        return self.k_ad / self.k_de

    def scaled(self, factor: float) -> "SorptionModel":
        return SorptionModel(self.k_ad * factor, self.k_de * factor)


def sorption_terms(c_trace, theta, model: SorptionModel, c_s: float = 1.0):
    """Vectorized sorption rate ``s_i = (k_ad c_i theta_0 - k_de theta_i) c_s``."""
    c_trace = np.asarray(c_trace, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return (model.k_ad * c_trace * theta[..., :1] - model.k_de * theta[..., 1:]) * c_s


def sorption_rate(c_trace, theta, model: SorptionModel, c_s: float = 1.0) -> np.ndarray:
    th = theta.theta if isinstance(theta, SurfaceState) else np.asarray(theta, dtype=float)
    c_trace = np.asarray(c_trace, dtype=float)
    if c_trace.shape[-1] != model.n_species or th.shape[-1] != model.n_species + 1:
        raise ValueError("dimension mismatch between trace, occupancies and sorption model")
    return sorption_terms(c_trace, th, model, c_s)


def vacancy_sorption_rate(s) -> np.ndarray:
    """Companion rate of the vacancy slot, ``s_0 = -sum_i s_i``."""
    return -np.sum(s, axis=-1)


def extended_sorption(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.concatenate([vacancy_sorption_rate(s)[..., None], s], axis=-1)


def isotherm_array(c_trace, model: SorptionModel) -> np.ndarray:
    """Langmuir isotherm, vectorized, shape ``(..., 1+N)``."""
    kc = model.isotherm_constants * np.asarray(c_trace, dtype=float)
    theta0 = 1.0 / (1.0 + kc.sum(axis=-1, keepdims=True))
    return np.concatenate([theta0, kc * theta0], axis=-1)


def sorption_equilibrium_solve(c_trace, model: SorptionModel) -> SurfaceState:
    c_trace = np.asarray(c_trace, dtype=float)
    if np.any(c_trace < 0):
        raise ValueError("trace concentrations must be nonnegative")
    return SurfaceState(isotherm_array(c_trace, model))


def langmuir_potentials(theta, mu_sigma0=None) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    mu = np.log(th)
    return mu if mu_sigma0 is None else mu + np.asarray(mu_sigma0)


Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SurfaceDiffusionMatrix:
    """Fick-Onsager coefficient map ``theta -> D(theta)``.

    ``evaluator`` must broadcast over leading axes: an input of shape
    ``(..., 1+N)`` returns ``(..., 1+N, 1+N)``. ``derivative``, if given,
    returns ``dD/dtheta`` with the differentiation index last; otherwise
    central differences are used.
    """

    evaluator: Evaluator
    derivative: Optional[Evaluator] = None
    fd_step: float = 1e-7

    def __call__(self, theta) -> np.ndarray:
        return self.evaluator(np.asarray(theta, dtype=float))

    def gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.derivative is not None:
            return self.derivative(theta)
        n = theta.shape[-1]
        out = np.empty((n,) + theta.shape[:-1] + (n, n))
        for r in range(n):
            e = np.zeros(n)
            e[r] = self.fd_step
            out[r] = (self.evaluator(theta + e) - self.evaluator(theta - e)) / (2 * self.fd_step)
        return np.moveaxis(out, 0, -1)


def langmuir_diffusion(d_ref: float = 1.0) -> SurfaceDiffusionMatrix:
    """``D(theta) = d_ref (diag(theta) - theta theta^T)``."""

    def evaluate(theta):
        theta = np.asarray(theta, dtype=float)
        eye = np.eye(theta.shape[-1])
        return d_ref * (theta[..., :, None] * eye - theta[..., :, None] * theta[..., None, :])

    def derivative(theta):
        theta = np.asarray(theta, dtype=float)
        n = theta.shape[-1]
        eye = np.eye(n)
        # d/dtheta_r of (delta_qp theta_q - theta_q theta_p)
        diag_part = np.einsum("qp,qr->qpr", eye, eye)
        lead = theta.shape[:-1]
        t1 = np.broadcast_to(diag_part, lead + (n, n, n))
        t2 = eye[:, None, :] * theta[..., None, :, None]  # delta_qr theta_p
        t3 = theta[..., :, None, None] * eye[None, :, :]  # theta_q delta_pr
        return d_ref * (t1 - t2 - t3)

    return SurfaceDiffusionMatrix(evaluate, derivative)


@dataclass
class OnsagerReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def onsager_validate(matrix: SurfaceDiffusionMatrix, samples: Sequence, tol: float = 1e-12) -> OnsagerReport:
    """Check symmetry, zero row sums, sign pattern and kernel at each sample."""
    if len(samples) == 0:
        raise ValueError("need at least one sample state")
    report = OnsagerReport()
    for idx, sample in enumerate(samples):
        th = sample.theta if isinstance(sample, SurfaceState) else np.asarray(sample, dtype=float)
        d = np.asarray(matrix(th), dtype=float)
        n = d.shape[0]
        scale = max(1.0, float(np.max(np.abs(d))))
        bad = []
        if np.max(np.abs(d - d.T)) > tol * scale:
            bad.append("symmetry")
        if np.max(np.abs(d.sum(axis=1))) > tol * scale:
            bad.append("row_sums")
        off = d[~np.eye(n, dtype=bool)]
        if np.any(off > tol * scale) or np.any(np.diag(d) <= 0):
            bad.append("sign_pattern")
        # restrict to the complement of the all-ones vector
        q, _ = np.linalg.qr(np.column_stack([np.ones(n), np.eye(n)[:, : n - 1]]))
        comp = q[:, 1:]
        restricted = comp.T @ d @ comp
        if np.linalg.matrix_rank(restricted, tol=1e-10 * scale) != n - 1:
            bad.append("kernel")
        for kind in bad:
            report.violations.append({"sample": idx, "theta": th.tolist(), "check": kind})
    return report

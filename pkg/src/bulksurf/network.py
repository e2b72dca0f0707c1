"""Reaction networks with mass-action kinetics.

Stoichiometry is stored as integer exponent matrices ``alpha`` (forward) and
``beta`` (backward), one row per reaction. The net change of reaction ``a`` is
``nu[a] = beta[a] - alpha[a]``. Rates use the convention ``0**0 = 1`` so they
extend continuously to the boundary of the positive orthant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, optimize

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SpeciesSet:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 1:
            raise ValueError("a species set needs at least one species")
        if len(set(names)) != len(names):
            raise ValueError(f"species names must be unique, got {names}")

    @classmethod
    def numbered(cls, n: int, prefix: str = "A") -> "SpeciesSet":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)))

    @property
    def n_species(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class Reaction:
    """One reversible elementary reaction ``alpha -> beta``."""

    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    k_f: float
    k_b: float

    def __post_init__(self):
        alpha = tuple(int(a) for a in self.alpha)
        beta = tuple(int(b) for b in self.beta)
        if len(alpha) != len(beta):
            raise ValueError("alpha and beta must have the same length")
        if any(a < 0 for a in alpha) or any(b < 0 for b in beta):
            raise ValueError("stoichiometric exponents must be nonnegative")
        if alpha == beta:
            raise ValueError("reaction has zero net stoichiometry")
        if not (self.k_f > 0 and self.k_b > 0):
            raise ValueError(f"rate constants must be positive, got k_f={self.k_f}, k_b={self.k_b}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "k_f", float(self.k_f))
        object.__setattr__(self, "k_b", float(self.k_b))

    @property
    def nu(self) -> np.ndarray:
        return np.subtract(self.beta, self.alpha)

    def scaled(self, factor_f: float, factor_b: Optional[float] = None) -> "Reaction":
        factor_b = factor_f if factor_b is None else factor_b
        return Reaction(self.alpha, self.beta, self.k_f * factor_f, self.k_b * factor_b)


@dataclass(frozen=True)
class ThermoParams:
    """Reference chemical potentials; RT and the reference concentration are 1."""

    mu0: tuple[float, ...]
    rt_scale: float = field(default=1.0, init=False)
    c_ref: float = field(default=1.0, init=False)

    def __post_init__(self):
        object.__setattr__(self, "mu0", tuple(float(m) for m in self.mu0))

    @classmethod
    def zeros(cls, n: int) -> "ThermoParams":
        return cls((0.0,) * n)

    def potentials(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if np.any(c <= 0):
            raise ValueError("chemical potentials need strictly positive concentrations")
        return np.asarray(self.mu0) + np.log(c)


@dataclass(frozen=True)
class ReactionNetwork:
    species: SpeciesSet
    reactions: tuple[Reaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "reactions", tuple(self.reactions))
        n = self.species.n_species
        for a, r in enumerate(self.reactions):
            if len(r.alpha) != n:
                raise ValueError(f"reaction {a} has {len(r.alpha)} exponents, expected {n}")

    @classmethod
    def from_arrays(cls, alpha, beta, k_f, k_b, names: Optional[Sequence[str]] = None):
        alpha = np.atleast_2d(np.asarray(alpha, dtype=int))
        beta = np.atleast_2d(np.asarray(beta, dtype=int))
        n = alpha.shape[1]
        species = SpeciesSet(tuple(names)) if names is not None else SpeciesSet.numbered(n)
        k_f = np.broadcast_to(np.asarray(k_f, dtype=float), (alpha.shape[0],))
        k_b = np.broadcast_to(np.asarray(k_b, dtype=float), (alpha.shape[0],))
        rx = tuple(Reaction(tuple(a), tuple(b), kf, kb) for a, b, kf, kb in zip(alpha, beta, k_f, k_b))
        return cls(species, rx)

    @classmethod
    def empty(cls, n: int) -> "ReactionNetwork":
        return cls(SpeciesSet.numbered(n), ())

    @property
    def n_species(self) -> int:
        return self.species.n_species

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @cached_property
    def alpha(self) -> np.ndarray:
        return np.array([r.alpha for r in self.reactions], dtype=int).reshape(-1, self.n_species)

    @cached_property
    def beta(self) -> np.ndarray:
        return np.array([r.beta for r in self.reactions], dtype=int).reshape(-1, self.n_species)

    @cached_property
    def nu(self) -> np.ndarray:
        """Stoichiometric matrix, shape ``(m, N)``."""
        return self.beta - self.alpha

    @cached_property
    def k_f(self) -> np.ndarray:
        return np.array([r.k_f for r in self.reactions], dtype=float)

    @cached_property
    def k_b(self) -> np.ndarray:
        return np.array([r.k_b for r in self.reactions], dtype=float)

    def scaled(self, factor: float) -> "ReactionNetwork":
        """Multiply every rate constant by ``factor``."""
        return ReactionNetwork(self.species, tuple(r.scaled(factor) for r in self.reactions))

    def with_constants(self, k_f, k_b) -> "ReactionNetwork":
        rx = tuple(Reaction(r.alpha, r.beta, kf, kb) for r, kf, kb in zip(self.reactions, k_f, k_b))
        return ReactionNetwork(self.species, rx)

    def reaction_rates(self, c) -> np.ndarray:
        """Net rates ``R_a = k_f c^alpha - k_b c^beta``; broadcasts over leading axes."""
        return mass_action_terms(self.alpha, self.beta, self.k_f, self.k_b, c)[0]


def _check_concentrations(c, n: int) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape[-1:] != (n,):
        raise ValueError(f"expected {n} concentrations per point, got shape {c.shape}")
    if np.any(c < 0):
        raise ValueError("concentrations must be nonnegative")
    return c


def _monomials(exponents: np.ndarray, c: np.ndarray) -> np.ndarray:
    # c[..., None, :] ** exponents with 0**0 = 1, product over species
    return np.prod(np.power(c[..., None, :], exponents), axis=-1)


def mass_action_terms(alpha, beta, k_f, k_b, c, jacobian: bool = False):
    """Reaction rates and, optionally, their derivatives.

    Returns ``(R, dR)`` where ``R`` has shape ``(..., m)`` and ``dR`` (or
    ``None``) has shape ``(..., m, N)``. No input validation; this is the
    inner kernel the steppers call with possibly slightly negative Newton
    iterates.
    """
    c = np.asarray(c, dtype=float)
    m = alpha.shape[0]
    if m == 0:
        shape = c.shape[:-1]
        return np.zeros(shape + (0,)), (np.zeros(shape + (0, c.shape[-1])) if jacobian else None)
    fwd = k_f * _monomials(alpha, c)
    bwd = k_b * _monomials(beta, c)
    rate = fwd - bwd
    if not jacobian:
        return rate, None
    n = c.shape[-1]
    d = np.zeros(c.shape[:-1] + (m, n))
    for j in range(n):
        for expo, k, sign in ((alpha, k_f, 1.0), (beta, k_b, -1.0)):
            p = expo[:, j]
            if not np.any(p):
                continue
            lowered = expo.copy()
            lowered[:, j] = np.maximum(p - 1, 0)
            d[..., j] += sign * k * p * _monomials(lowered, c)
    return rate, d


def mass_action_rate(network: ReactionNetwork, c) -> np.ndarray:
    """Species production rates ``r_i = sum_a nu_ia R_a``."""
    c = _check_concentrations(c, network.n_species)
    return network.reaction_rates(c) @ network.nu


def affinity(network: ReactionNetwork, thermo: ThermoParams, c) -> np.ndarray:
    """Reaction affinities ``A_a = sum_i nu_ia (mu0_i + ln c_i)``."""
    c = _check_concentrations(c, network.n_species)
    if np.any(c == 0):
        raise ValueError("affinity is undefined at zero concentration")
    return thermo.potentials(c) @ network.nu.T


def detailed_balance_constants(network: ReactionNetwork, thermo: ThermoParams) -> ReactionNetwork:
    """Return the network with ``k_b`` replaced so that ``k_b/k_f = exp(nu . mu0)``."""
    k_b = network.k_f * np.exp(network.nu @ np.asarray(thermo.mu0))
    return network.with_constants(network.k_f, k_b)


def _rank_and_range(mat: np.ndarray):
    """Column-pivoted QR of ``mat`` (N x m); returns (rank, orthonormal range basis)."""
    n, m = mat.shape
    if m == 0 or not np.any(mat):
        return 0, np.zeros((n, 0))
    q, r, _ = linalg.qr(mat, pivoting=True, mode="economic")
    tol = RANK_RTOL * np.max(np.abs(mat))
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol))
    return rank, q[:, :rank]


@dataclass(frozen=True)
class ConservationBasis:
    vectors: np.ndarray  # (n_sigma, N), orthonormal rows
    projector: np.ndarray  # (N, N) orthogonal projector onto span(nu)^perp

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]


def conservation_basis(network: ReactionNetwork) -> ConservationBasis:
    """Orthonormal basis of the orthogonal complement of the stoichiometric span.

    Canonical unit vectors are orthogonalized in index order against the range
    of ``nu`` and the vectors accepted so far (two Gram-Schmidt passes), so the
    output is deterministic.
    """
    n = network.n_species
    _, q = _rank_and_range(network.nu.T.astype(float))
    accepted: list[np.ndarray] = []
    for j in range(n):
        v = np.zeros(n)
        v[j] = 1.0
        for _ in range(2):
            v -= q @ (q.T @ v)
            for u in accepted:
                v -= (u @ v) * u
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            accepted.append(v / norm)
    vecs = np.array(accepted).reshape(-1, n)
    projector = vecs.T @ vecs
    return ConservationBasis(vecs, projector)


@dataclass(frozen=True)
class RankReport:
    independent: bool
    rank: int
    n_reactions: int

    def __bool__(self) -> bool:
        return self.independent


def detailed_balance_check(network: ReactionNetwork) -> RankReport:
    """Whether the stoichiometric vectors are linearly independent."""
    rank, _ = _rank_and_range(network.nu.T.astype(float))
    return RankReport(rank == network.n_reactions, rank, network.n_reactions)


@dataclass(frozen=True)
class PositiveConservation:
    vector: Optional[np.ndarray]
    certificate: Optional[int] = None  # species forced to zero in every conservation vector

    def __bool__(self) -> bool:
        return self.vector is not None


def positive_conservation_vector(network: ReactionNetwork) -> PositiveConservation:
    """Find ``e > 0`` with ``nu e = 0`` if one exists.

    First tries the projection of the all-ones vector. If that is not
    strictly positive, a linear program (``min sum e`` subject to
    ``nu e = 0, e >= 1``) decides feasibility. When none exists, a species
    whose entry vanishes in every nonnegative conservation vector is returned
    as certificate.
    """
    n = network.n_species
    if network.n_reactions == 0:
        return PositiveConservation(np.ones(n))
    nu = network.nu.astype(float)
    basis = conservation_basis(network)
    e = basis.projector @ np.ones(n)
    if np.all(e > 1e-12):
        return PositiveConservation(_tidy(e / e.min()))
    res = optimize.linprog(np.ones(n), A_eq=nu, b_eq=np.zeros(nu.shape[0]), bounds=[(1, None)] * n, method="highs")
    if res.status == 0:
        e = res.x
        return PositiveConservation(_tidy(e / e.min()))
    for i in range(n):
        obj = np.zeros(n)
        obj[i] = -1.0
        res = optimize.linprog(obj, A_eq=nu, b_eq=np.zeros(nu.shape[0]), bounds=[(0, 1)] * n, method="highs")
        if res.status == 0 and -res.fun < 1e-9:
            return PositiveConservation(None, certificate=i)
    return PositiveConservation(None)


def _tidy(e: np.ndarray) -> np.ndarray:
    # snap near-integers so the MP vector comes out as exactly (1, 1, 2)
    r = np.round(e)
    return np.where(np.abs(e - r) < 1e-9, r, e)


def thermo_from_constants(networks_rows, n: int):
    """Least-squares fit of ``mu0`` to rows ``nu . mu0 = ln(k_b/k_f)``.

    ``networks_rows`` is a list of ``(nu_row, target)`` pairs. Returns
    ``(mu0, residual)``; a residual above round-off means the constants admit
    no consistent set of reference potentials.
    """
    if not networks_rows:
        return np.zeros(n), 0.0
    a = np.array([r for r, _ in networks_rows], dtype=float)
    b = np.array([t for _, t in networks_rows], dtype=float)
    mu0, *_ = np.linalg.lstsq(a, b, rcond=None)
    resid = float(np.max(np.abs(a @ mu0 - b)))
    return mu0, resid

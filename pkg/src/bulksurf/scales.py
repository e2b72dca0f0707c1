"""Characteristic scales, time scales and regime classification.

All dimensionless models are written after multiplying through by the
accumulation time ``tau_R``, so every process enters with the prefactor
``tau_R / tau_process``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .network import ReactionNetwork
from .surface import SorptionModel, SurfaceReactionNetwork


def _positive(name, value):
    arr = np.asarray(value, dtype=float)
    if arr.size and not np.all(arr > 0):
        raise ValueError(f"scale {name} must be strictly positive, got {value}")
    return arr


@dataclass(frozen=True)
class CharacteristicScales:
    """Reference quantities used to build dimensionless variables (SI units)."""

    tau_r: float
    l_r: float
    l_r_sigma: float
    d_r: float
    d_r_sigma: float
    c_r: float
    c_s: float
    k_f_ref: tuple = ()
    k_b_ref: tuple = ()
    k_sigma_f_ref: tuple = ()
    k_sigma_b_ref: tuple = ()
    k_ad_ref: tuple = ()
    k_de_ref: tuple = ()

    def __post_init__(self):
        for name in ("tau_r", "l_r", "l_r_sigma", "d_r", "d_r_sigma", "c_r", "c_s"):
            _positive(name, getattr(self, name))
        for name in ("k_f_ref", "k_b_ref", "k_sigma_f_ref", "k_sigma_b_ref", "k_ad_ref", "k_de_ref"):
            vals = tuple(float(v) for v in np.atleast_1d(getattr(self, name)))
            _positive(name, vals)
            object.__setattr__(self, name, vals)

    @classmethod
    def unit(cls, n_bulk: int, n_surface: int, n_species: int) -> "CharacteristicScales":
        return cls(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, (1.0,) * n_bulk, (1.0,) * n_bulk,
                   (1.0,) * n_surface, (1.0,) * n_surface, (1.0,) * n_species, (1.0,) * n_species)


def _slow(values) -> float:
    return max(values) if len(values) else math.inf


def _fast(values) -> float:
    return min(values) if len(values) else math.inf


@dataclass(frozen=True)
class TimeScales:
    """Characteristic times of every process.

    Per-item times are kept so the lambda ratios (slowest over each) are
    available; groups without members (no bulk or no surface reactions)
    aggregate to ``inf``, i.e. an infinitely slow, absent process.
    """

    tau_r: float
    tau_diff: float
    tau_diff_sigma: float
    tau_trans: float
    tau_react_f: tuple = ()
    tau_react_b: tuple = ()
    tau_react_sigma_f: tuple = ()
    tau_react_sigma_b: tuple = ()
    tau_ad: tuple = ()
    tau_de: tuple = ()

    def __post_init__(self):
        for name in ("tau_r", "tau_diff", "tau_diff_sigma", "tau_trans"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau_react_f", "tau_react_b", "tau_react_sigma_f", "tau_react_sigma_b", "tau_ad", "tau_de"):
            vals = tuple(float(v) for v in np.atleast_1d(getattr(self, name)))
            if any(not v > 0 for v in vals):
                raise ValueError(f"{name} entries must be positive")
            object.__setattr__(self, name, vals)
        if len(self.tau_react_f) != len(self.tau_react_b):
            raise ValueError("forward and backward bulk reaction times must pair up")
        if len(self.tau_react_sigma_f) != len(self.tau_react_sigma_b):
            raise ValueError("forward and backward surface reaction times must pair up")
        if len(self.tau_ad) != len(self.tau_de):
            raise ValueError("adsorption and desorption times must pair up")

    @classmethod
    def direct(cls, *, tau_r=1.0, tau_diff=1.0, tau_diff_sigma=1.0, tau_trans=1.0, tau_react=1.0,
               tau_react_sigma=1.0, tau_sorp=1.0, n_bulk=0, n_surface=0, n_species=1) -> "TimeScales":
        """Uniform groups: every member of a group shares one time (all lambdas are 1)."""
        return cls(tau_r, tau_diff, tau_diff_sigma, tau_trans,
                   (tau_react,) * n_bulk, (tau_react,) * n_bulk,
                   (tau_react_sigma,) * n_surface, (tau_react_sigma,) * n_surface,
                   (tau_sorp,) * n_species, (tau_sorp,) * n_species)

    # aggregates
    @property
    def tau_react(self) -> float:
        return _slow(self.tau_react_f + self.tau_react_b)

    @property
    def tau_react_fast(self) -> float:
        return _fast(self.tau_react_f + self.tau_react_b)

    @property
    def tau_react_sigma(self) -> float:
        return _slow(self.tau_react_sigma_f + self.tau_react_sigma_b)

    @property
    def tau_react_sigma_fast(self) -> float:
        return _fast(self.tau_react_sigma_f + self.tau_react_sigma_b)

    @property
    def tau_sorp(self) -> float:
        return _slow(self.tau_ad + self.tau_de)

    @property
    def tau_sorp_fast(self) -> float:
        return _fast(self.tau_ad + self.tau_de)

    # lambda ratios
    @property
    def lambda_f(self) -> np.ndarray:
        return self.tau_react / np.asarray(self.tau_react_f)

    @property
    def lambda_b(self) -> np.ndarray:
        return self.tau_react / np.asarray(self.tau_react_b)

    @property
    def lambda_sigma_f(self) -> np.ndarray:
        return self.tau_react_sigma / np.asarray(self.tau_react_sigma_f)

    @property
    def lambda_sigma_b(self) -> np.ndarray:
        return self.tau_react_sigma / np.asarray(self.tau_react_sigma_b)

    @property
    def lambda_ad(self) -> np.ndarray:
        return self.tau_sorp / np.asarray(self.tau_ad)

    @property
    def lambda_de(self) -> np.ndarray:
        return self.tau_sorp / np.asarray(self.tau_de)

    # prefactors of the model multiplied through by tau_R
    def rate(self, tau: float) -> float:
        return 0.0 if math.isinf(tau) else self.tau_r / tau

    @property
    def surface_weight(self) -> float:
        """Weight of surface amounts in conserved totals and the free energy."""
        return self.tau_trans / self.tau_diff

    def scaled(self, **factors: float) -> "TimeScales":
        """Rescale groups: keys among ``r, diff, diff_sigma, trans, react, react_sigma, sorp``."""
        kw = {}
        for key, f in factors.items():
            if key in ("r", "diff", "diff_sigma", "trans"):
                name = "tau_" + key
                kw[name] = getattr(self, name) * f
            elif key == "react":
                kw["tau_react_f"] = tuple(t * f for t in self.tau_react_f)
                kw["tau_react_b"] = tuple(t * f for t in self.tau_react_b)
            elif key == "react_sigma":
                kw["tau_react_sigma_f"] = tuple(t * f for t in self.tau_react_sigma_f)
                kw["tau_react_sigma_b"] = tuple(t * f for t in self.tau_react_sigma_b)
            elif key == "sorp":
                kw["tau_ad"] = tuple(t * f for t in self.tau_ad)
                kw["tau_de"] = tuple(t * f for t in self.tau_de)
            else:
                raise KeyError(f"unknown process group {key!r}")
        return replace(self, **kw)

    def uniformly_scaled(self, factor: float) -> "TimeScales":
        return self.scaled(r=factor, diff=factor, diff_sigma=factor, trans=factor,
                           react=factor, react_sigma=factor, sorp=factor)

    def as_dict(self) -> dict:
        return {
            "tau_R": self.tau_r, "tau_diff": self.tau_diff, "tau_diff_sigma": self.tau_diff_sigma,
            "tau_trans": self.tau_trans, "tau_react": self.tau_react, "tau_react_fast": self.tau_react_fast,
            "tau_react_sigma": self.tau_react_sigma, "tau_react_sigma_fast": self.tau_react_sigma_fast,
            "tau_sorp": self.tau_sorp, "tau_sorp_fast": self.tau_sorp_fast,
        }


def _abs_order(exponents) -> np.ndarray:
    return np.asarray(exponents).sum(axis=-1)


def compute_time_scales(scales: CharacteristicScales, bulk: ReactionNetwork,
                        surface: SurfaceReactionNetwork, sorption: SorptionModel) -> TimeScales:
    m, ms, n = bulk.n_reactions, surface.n_reactions, sorption.n_species
    if (len(scales.k_f_ref), len(scales.k_b_ref)) != (m, m):
        raise ValueError("need one forward and one backward reference constant per bulk reaction")
    if (len(scales.k_sigma_f_ref), len(scales.k_sigma_b_ref)) != (ms, ms):
        raise ValueError("need reference constants for every surface reaction")
    if (len(scales.k_ad_ref), len(scales.k_de_ref)) != (n, n):
        raise ValueError("need sorption reference constants for every species")
    c_r = scales.c_r
    tf = 1.0 / (np.asarray(scales.k_f_ref) * c_r ** (_abs_order(bulk.alpha) - 1.0)) if m else ()
    tb = 1.0 / (np.asarray(scales.k_b_ref) * c_r ** (_abs_order(bulk.beta) - 1.0)) if m else ()
    return TimeScales(
        tau_r=scales.tau_r,
        tau_diff=scales.l_r**2 / scales.d_r,
        tau_diff_sigma=scales.l_r_sigma**2 / scales.d_r_sigma,
        tau_trans=scales.l_r * scales.c_s / (scales.d_r * c_r),
        tau_react_f=tuple(np.atleast_1d(tf)),
        tau_react_b=tuple(np.atleast_1d(tb)),
        tau_react_sigma_f=tuple(1.0 / np.asarray(scales.k_sigma_f_ref)),
        tau_react_sigma_b=tuple(1.0 / np.asarray(scales.k_sigma_b_ref)),
        tau_ad=tuple(1.0 / (np.asarray(scales.k_ad_ref) * c_r)),
        tau_de=tuple(1.0 / np.asarray(scales.k_de_ref)),
    )


@dataclass(frozen=True)
class DimensionalProblem:
    """Model data in physical units.

    ``d_sigma`` is the magnitude of the surface diffusion matrix,
    ``c`` bulk concentrations ``(..., N)`` and ``c_sigma`` surface
    concentrations ``(..., 1+N)`` including the free sites.
    """

    bulk: ReactionNetwork
    surface: SurfaceReactionNetwork
    sorption: SorptionModel
    d: tuple
    d_sigma: float
    c: np.ndarray
    c_sigma: np.ndarray


@dataclass(frozen=True)
class DimensionlessProblem:
    """Starred constants and variables; rate constants are relative to their references."""

    bulk: ReactionNetwork
    surface: SurfaceReactionNetwork
    sorption: SorptionModel
    d: tuple
    d_sigma: float
    c: np.ndarray
    theta: np.ndarray

    def model_networks(self, ts: TimeScales):
        """Networks and sorption with the lambda ratios folded into the constants.

        With these, the bulk source is ``(tau_R/tau_react) r``, the surface
        sources are ``(tau_R/tau_react_sigma) r_sigma`` and
        ``(tau_R/tau_sorp) s``.
        """
        bulk = self.bulk.with_constants(self.bulk.k_f * ts.lambda_f, self.bulk.k_b * ts.lambda_b) \
            if self.bulk.n_reactions else self.bulk
        sb = self.surface.base
        surf = SurfaceReactionNetwork(sb.with_constants(sb.k_f * ts.lambda_sigma_f, sb.k_b * ts.lambda_sigma_b)) \
            if sb.n_reactions else self.surface
        sorp = SorptionModel(self.sorption.k_ad * ts.lambda_ad, self.sorption.k_de * ts.lambda_de)
        return bulk, surf, sorp


def nondimensionalize(problem: DimensionalProblem, scales: CharacteristicScales):
    ts = compute_time_scales(scales, problem.bulk, problem.surface, problem.sorption)
    b, s = problem.bulk, problem.surface.base
    bulk = b.with_constants(b.k_f / np.asarray(scales.k_f_ref), b.k_b / np.asarray(scales.k_b_ref)) \
        if b.n_reactions else b
    surf = s.with_constants(s.k_f / np.asarray(scales.k_sigma_f_ref), s.k_b / np.asarray(scales.k_sigma_b_ref)) \
        if s.n_reactions else s
    sorp = SorptionModel(problem.sorption.k_ad / np.asarray(scales.k_ad_ref),
                         problem.sorption.k_de / np.asarray(scales.k_de_ref))
    dl = DimensionlessProblem(
        bulk=bulk,
        surface=SurfaceReactionNetwork(surf),
        sorption=sorp,
        d=tuple(np.asarray(problem.d, dtype=float) / scales.d_r),
        d_sigma=problem.d_sigma / scales.d_r_sigma,
        c=np.asarray(problem.c, dtype=float) / scales.c_r,
        theta=np.asarray(problem.c_sigma, dtype=float) / scales.c_s,
    )
    return dl, ts


def redimensionalize(problem: DimensionlessProblem, scales: CharacteristicScales) -> DimensionalProblem:
    b, s = problem.bulk, problem.surface.base
    bulk = b.with_constants(b.k_f * np.asarray(scales.k_f_ref), b.k_b * np.asarray(scales.k_b_ref)) \
        if b.n_reactions else b
    surf = s.with_constants(s.k_f * np.asarray(scales.k_sigma_f_ref), s.k_b * np.asarray(scales.k_sigma_b_ref)) \
        if s.n_reactions else s
    sorp = SorptionModel(problem.sorption.k_ad * np.asarray(scales.k_ad_ref),
                         problem.sorption.k_de * np.asarray(scales.k_de_ref))
    return DimensionalProblem(
        bulk=bulk,
        surface=SurfaceReactionNetwork(surf),
        sorption=sorp,
        d=tuple(np.asarray(problem.d, dtype=float) * scales.d_r),
        d_sigma=problem.d_sigma * scales.d_r_sigma,
        c=np.asarray(problem.c, dtype=float) * scales.c_r,
        c_sigma=np.asarray(problem.theta, dtype=float) * scales.c_s,
    )


class Regime(str, enum.Enum):
    FULL = "FullModel"
    FAST_SURFACE_CHEMISTRY = "FastSurfaceChemistry"
    FAST_SORPTION = "FastSorption"
    FAST_SURFACE_DIFFUSION = "FastSurfaceDiffusion"
    FAST_ACCUMULATION = "FastAccumulation"
    TWO_PARAM = "TwoParamSorpChem"
    THREE_PARAM = "ThreeParamLimit"
    INVALID_FAST_TRANSMISSION = "InvalidFastTransmission"


_CASES = {
    frozenset(): Regime.FULL,
    frozenset({"surface_chemistry"}): Regime.FAST_SURFACE_CHEMISTRY,
    frozenset({"sorption"}): Regime.FAST_SORPTION,
    frozenset({"surface_diffusion"}): Regime.FAST_SURFACE_DIFFUSION,
    frozenset({"accumulation"}): Regime.FAST_ACCUMULATION,
    frozenset({"sorption", "surface_chemistry"}): Regime.TWO_PARAM,
    frozenset({"sorption", "surface_chemistry", "transmission"}): Regime.THREE_PARAM,
}


@dataclass(frozen=True)
class RegimeReport:
    ordering: tuple  # ((process, slow, fast), ...) sorted by slow time
    recommendation: Regime
    fast: tuple
    ratios: dict = field(default_factory=dict)
    threshold: float = 1e-2
    notes: tuple = ()

    def as_dict(self) -> dict:
        return {
            "recommendation": self.recommendation.value,
            "fast_processes": list(self.fast),
            "threshold": self.threshold,
            "ordering": [{"process": p, "slow": s, "fast": f} for p, s, f in self.ordering],
            "ratios": self.ratios,
            "notes": list(self.notes),
        }


def _groups(ts: TimeScales):
    groups = [
        ("accumulation", ts.tau_r, ts.tau_r),
        ("surface_diffusion", ts.tau_diff_sigma, ts.tau_diff_sigma),
        ("surface_chemistry", ts.tau_react_sigma, ts.tau_react_sigma_fast),
        ("sorption", ts.tau_sorp, ts.tau_sorp_fast),
        ("transmission", ts.tau_trans, ts.tau_trans),
    ]
    return [g for g in groups if math.isfinite(g[1])]


def classify_regime(ts: TimeScales, threshold: float = 1e-2) -> RegimeReport:
    """Decide which processes are fast relative to the rest.

    Groups are sorted by their slow time. A leading set is fast when its
    slowest member is at most ``threshold`` times the fastest time among the
    remaining groups; the largest such set decides the recommendation.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    groups = sorted(_groups(ts), key=lambda g: (g[1], g[0]))
    fast: frozenset = frozenset()
    ratios = {}
    for k in range(1, len(groups)):
        head, rest = groups[:k], groups[k:]
        ratio = max(g[1] for g in head) / min(g[2] for g in rest)
        ratios["+".join(g[0] for g in head)] = ratio
        if ratio <= threshold:
            fast = frozenset(g[0] for g in head)
    notes = []
    if "transmission" in fast and "sorption" not in fast:
        msg = "fast transmission without fast sorption is not a consistent limit; no runnable model"
        warnings.warn(msg, stacklevel=2)
        rec = Regime.INVALID_FAST_TRANSMISSION
        notes.append(msg)
    elif fast in _CASES:
        rec = _CASES[fast]
    else:
        # fall back to the largest recognized case contained in the fast set
        known = [s for s in _CASES if s <= fast and not ("transmission" in s and "sorption" not in s)]
        best = max(known, key=len)
        rec = _CASES[best]
        notes.append(f"fast set {sorted(fast)} is not a covered case; reporting {rec.value}")
    order_sorted = tuple((g[0], g[1], g[2]) for g in groups)
    return RegimeReport(order_sorted, rec, tuple(sorted(fast)), ratios, threshold, tuple(notes))

"""Problem, state and configuration types shared by all steppers."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np

from ..grids import Grid
from ..network import ReactionNetwork, ThermoParams, conservation_basis, detailed_balance_check
from ..scales import DimensionlessProblem, Regime, TimeScales
from ..surface import SorptionModel, SurfaceDiffusionMatrix, SurfaceReactionNetwork


class ConfigurationError(ValueError):
    """The problem cannot be run with the requested model."""


class StepFailure(RuntimeError):
    """Newton did not converge even at the smallest admissible step."""

    def __init__(self, message: str, residual: float = float("nan"), time: float = float("nan")):
        super().__init__(message)
        self.residual = residual
        self.time = time


class PositivityError(StepFailure):
    pass


class IncompatibleInitialData(ValueError):
    pass


class ModelVariant(str, enum.Enum):
    """Full model or one of its fast-process limits.

    Every boundary node carries ``N`` ghost unknowns plus
    ``surface_unknowns(N)`` surface unknowns, and contributes the same number
    of rows, listed by :meth:`constraints`.
    """

    FULL = "Full"
    FAST_SORPTION = "FastSorption"
    FAST_SURFACE_CHEMISTRY = "FastSurfaceChemistry"
    TWO_PARAM = "TwoParamSorpChem"
    THREE_PARAM = "ThreeParamMP"
    FAST_SURFACE_DIFFUSION = "FastSurfaceDiffusion"
    FAST_ACCUMULATION = "FastAccumulation"

    @property
    def tag(self) -> str:
        return self.value

    def surface_unknowns(self, n: int) -> int:
        if self is ModelVariant.THREE_PARAM:
            return 0
        if self is ModelVariant.FAST_SURFACE_DIFFUSION:
            return 1
        return n

    def constraints(self, n: int, m_sigma: int) -> dict:
        """Row families per boundary node and their sizes."""
        k = n - m_sigma  # dimension of the surface conservation space
        table = {
            ModelVariant.FULL: {"transmission": n, "surface_dynamics": n},
            ModelVariant.FAST_SORPTION: {"sorption_equilibrium": n, "surface_dynamics": n},
            ModelVariant.FAST_SURFACE_CHEMISTRY: {"transmission": n, "chemical_equilibrium": m_sigma,
                                                  "projected_dynamics": k},
            ModelVariant.TWO_PARAM: {"sorption_equilibrium": n, "chemical_equilibrium": m_sigma,
                                     "projected_dynamics": k},
            ModelVariant.THREE_PARAM: {"flux_conservation": k, "boundary_equilibrium": m_sigma},
            ModelVariant.FAST_SURFACE_DIFFUSION: {"transmission": n, "vacancy_dynamics": 1},
            ModelVariant.FAST_ACCUMULATION: {"transmission": n, "surface_steady_state": n},
        }
        return table[self]

    @property
    def has_surface_mass(self) -> bool:
        """Whether surface amounts enter the conserved totals."""
        return self not in (ModelVariant.THREE_PARAM, ModelVariant.FAST_ACCUMULATION)

    @property
    def needs_detailed_balance(self) -> bool:
        return self in (ModelVariant.FAST_SURFACE_CHEMISTRY, ModelVariant.TWO_PARAM, ModelVariant.THREE_PARAM)

    @classmethod
    def from_regime(cls, regime: Regime) -> "ModelVariant":
        mapping = {
            Regime.FULL: cls.FULL,
            Regime.FAST_SORPTION: cls.FAST_SORPTION,
            Regime.FAST_SURFACE_CHEMISTRY: cls.FAST_SURFACE_CHEMISTRY,
            Regime.TWO_PARAM: cls.TWO_PARAM,
            Regime.THREE_PARAM: cls.THREE_PARAM,
            Regime.FAST_SURFACE_DIFFUSION: cls.FAST_SURFACE_DIFFUSION,
            Regime.FAST_ACCUMULATION: cls.FAST_ACCUMULATION,
        }
        if regime not in mapping:
            raise ConfigurationError(f"regime {regime.value} has no runnable model")
        return mapping[regime]

    @classmethod
    def parse(cls, text: str) -> "ModelVariant":
        aliases = {"ThreeParamLimit": cls.THREE_PARAM, "FullModel": cls.FULL}
        if text in aliases:
            return aliases[text]
        for v in cls:
            if v.value.lower() == text.lower() or v.name.lower() == text.lower():
                return v
        raise ValueError(f"unknown model variant {text!r}")


@dataclass(frozen=True, eq=False)
class FullProblem:
    """Dimensionless bulk-surface model on a grid.

    Rate constants already include the lambda ratios, so each process enters
    with the single prefactor ``tau_R / tau_process`` taken from ``times``.
    ``surface_diffusion = None`` switches surface diffusion off.
    """

    grid: Grid
    d: tuple
    bulk: ReactionNetwork
    surface: SurfaceReactionNetwork
    sorption: SorptionModel
    times: TimeScales
    surface_diffusion: Optional[SurfaceDiffusionMatrix] = None
    thermo: Optional[ThermoParams] = None
    c_s: float = 1.0

    def __post_init__(self):
        n = self.bulk.n_species
        d = tuple(float(x) for x in np.broadcast_to(np.asarray(self.d, dtype=float), (n,)))
        object.__setattr__(self, "d", d)
        if any(not x > 0 for x in d):
            raise ConfigurationError("diffusivities must be positive")
        if self.surface.n_species != n or self.sorption.n_species != n:
            raise ConfigurationError("bulk, surface and sorption data disagree on the number of species")
        if self.thermo is not None and len(self.thermo.mu0) != n:
            raise ConfigurationError("thermo data has the wrong length")

    @classmethod
    def from_dimensionless(cls, problem: DimensionlessProblem, times: TimeScales, grid: Grid,
                           surface_diffusion: Optional[SurfaceDiffusionMatrix] = None, **kw) -> "FullProblem":
        bulk, surf, sorp = problem.model_networks(times)
        return cls(grid, tuple(problem.d), bulk, surf, sorp, times, surface_diffusion, **kw)

    def with_times(self, times: TimeScales) -> "FullProblem":
        return replace(self, times=times)

    @property
    def n_species(self) -> int:
        return self.bulk.n_species

    @property
    def d_array(self) -> np.ndarray:
        return np.asarray(self.d)

    # prefactors of the model multiplied through by tau_R
    @property
    def a_diff(self) -> float:
        return self.times.rate(self.times.tau_diff)

    @property
    def a_react(self) -> float:
        return self.times.rate(self.times.tau_react)

    @property
    def a_diff_sigma(self) -> float:
        if self.surface_diffusion is None or self.grid.surface_dimension == 0:
            return 0.0
        return self.times.rate(self.times.tau_diff_sigma)

    @property
    def a_react_sigma(self) -> float:
        return self.times.rate(self.times.tau_react_sigma)

    @property
    def a_sorp(self) -> float:
        return self.times.rate(self.times.tau_sorp)

    @property
    def a_trans(self) -> float:
        return self.times.rate(self.times.tau_trans)

    @property
    def flux_ratio(self) -> float:
        """``tau_sorp / tau_trans``: the transmission row reads ``ratio * F = s``."""
        return self.times.tau_sorp / self.times.tau_trans

    @property
    def surface_weight(self) -> float:
        return self.times.surface_weight

    @cached_property
    def surface_basis(self) -> np.ndarray:
        """Conservation vectors of the surface network, rows of shape ``(n_sigma, N)``."""
        return conservation_basis(self.surface.base).vectors

    @cached_property
    def bulk_basis(self) -> np.ndarray:
        return conservation_basis(self.bulk).vectors

    def boundary_constants(self):
        """Constants of the boundary relation left by fast sorption and fast surface chemistry.

        On the isotherm ``theta_i = K_i c_i theta_0`` each surface reaction
        reduces to ``c^alpha - kappa_a c^beta = 0``. Returns ``kappa`` per
        reaction.
        """
        k_iso = self.sorption.isotherm_constants
        base = self.surface.base
        if np.any(k_iso <= 0) and base.n_reactions:
            raise ConfigurationError("boundary relation needs positive isotherm constants")
        log_k = np.log(k_iso) if base.n_reactions else np.zeros(self.n_species)
        kf_eff = np.log(base.k_f) + base.alpha @ log_k
        kb_eff = np.log(base.k_b) + base.beta @ log_k
        return np.exp(kb_eff - kf_eff)

    def check_variant(self, variant: ModelVariant) -> None:
        if variant.needs_detailed_balance and not detailed_balance_check(self.surface.base):
            raise ConfigurationError(
                f"{variant.value} needs linearly independent surface reactions"
            )
        if variant is ModelVariant.FAST_SURFACE_DIFFUSION and self.grid.surface_dimension == 0:
            pass  # the symmetric closure is still well defined on isolated nodes
        if variant in (ModelVariant.FAST_SORPTION, ModelVariant.TWO_PARAM, ModelVariant.THREE_PARAM):
            if np.any(self.sorption.k_ad <= 0):
                raise ConfigurationError(f"{variant.value} needs positive adsorption constants")


@dataclass(frozen=True, eq=False)
class SystemState:
    """Bulk field ``(n_cells, N)``, surface occupancies ``(n_nodes, 1+N)`` and time.

    ``surface`` is ``None`` for models without a surface state. ``ghosts``
    stores the boundary ghost values of the last solve (a warm start for the
    next one). ``info`` carries solver instrumentation.
    """

    bulk: np.ndarray
    surface: Optional[np.ndarray] = None
    time: float = 0.0
    ghosts: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bulk", np.array(self.bulk, dtype=float))
        if self.surface is not None:
            object.__setattr__(self, "surface", np.array(self.surface, dtype=float))
        if self.ghosts is not None:
            object.__setattr__(self, "ghosts", np.array(self.ghosts, dtype=float))

    def replace(self, **kw) -> "SystemState":
        return replace(self, **kw)

    @classmethod
    def uniform(cls, problem: FullProblem, c, theta=None, time: float = 0.0) -> "SystemState":
        grid = problem.grid
        bulk = np.tile(np.asarray(c, dtype=float), (grid.n_cells, 1))
        surface = None if theta is None else np.tile(np.asarray(theta, dtype=float), (grid.n_nodes, 1))
        return cls(bulk, surface, time)


@dataclass(frozen=True)
class StepperConfig:
    """Time stepping and nonlinear solver settings.

    ``compat`` decides what happens when initial data violate the algebraic
    constraints of a limit model: ``"project"`` (default) solves for the
    nearest consistent boundary/surface state, ``"warn"`` does the same with a
    warning, ``"reject"`` raises.
    """

    dt: float = 1e-3
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    dt_min: float = 1e-10
    phi_tol: float = 1e-12
    phi_max_iter: int = 50
    compat: str = "project"
    compat_tol: float = 1e-8
    positivity_tol: float = 1e-12
    attractor_tol: float = 1e-12
    attractor_max_iter: int = 200

    def __post_init__(self):
        if not self.dt > self.dt_min > 0:
            raise ValueError("need dt > dt_min > 0")
        if self.compat not in ("project", "warn", "reject"):
            raise ValueError("compat must be 'project', 'warn' or 'reject'")

    def with_dt(self, dt: float) -> "StepperConfig":
        return replace(self, dt=dt, dt_min=min(self.dt_min, dt / 2))

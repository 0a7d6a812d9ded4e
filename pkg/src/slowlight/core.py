"""Shared domain types, unit conventions, and configuration validation.

All internal dynamics run in dimensionless variables: retarded time is
measured as T = 2*gamma2*(t - z/c), the field as the Rabi amplitude
normalized to its saturation value, and propagation depth as alpha0*z.
Seconds and meters appear only at the configuration and analysis
boundaries, which keeps the integrators free of stiffness bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

C_LIGHT = 299_792_458.0  # vacuum speed of light, m/s

# Accuracy guards applied by validate_config.  The marching schemes are
# second order; beyond these step sizes their error is no longer negligible
# against the percent-level tolerances used downstream.
MAX_DT_DIMENSIONLESS = 0.1
MAX_ALPHA0_DZ = 0.2

# Slack for floating-point comparisons of grid spans against requirements.
_SPAN_RTOL = 1e-12


class ConfigError(ValueError):
    """A configuration violated one or more invariants.

    The individual violations are kept in ``errors`` so callers can report
    every problem at once instead of failing on the first.
    """

    def __init__(self, errors: str | list[str]):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericsError(RuntimeError):
    """Base class for runtime numerical failures (CLI exit code 3)."""


def dimensionless_time(tau_s: float, gamma2: float) -> float:
    """Map retarded time in seconds to T = 2*gamma2*tau."""
    return 2.0 * gamma2 * tau_s


def physical_time(t_dimensionless: float, gamma2: float) -> float:
    """Inverse of :func:`dimensionless_time`."""
    return t_dimensionless / (2.0 * gamma2)


def dimensionless_depth(z_m: float, alpha0: float) -> float:
    """Map propagation distance in meters to optical depth alpha0*z."""
    return alpha0 * z_m


def physical_depth(depth: float, alpha0: float) -> float:
    """Inverse of :func:`dimensionless_depth`."""
    return depth / alpha0


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling of retarded time tau = t - z/c.

    The grid is an exact affine map of the sample index; conversions
    between index, physical time, and dimensionless time round-trip to
    machine precision.
    """

    t_start: float  # seconds, retarded time of sample 0
    dt: float       # seconds, > 0
    n: int          # sample count, >= 16

    def __post_init__(self):
        errors = []
        if not (math.isfinite(self.dt) and self.dt > 0):
            errors.append(f"dt must be positive and finite, got {self.dt}")
        if self.n < 16:
            errors.append(f"n must be >= 16, got {self.n}")
        if not math.isfinite(self.t_start):
            errors.append(f"t_start must be finite, got {self.t_start}")
        if not errors and not math.isfinite(self.t_start + (self.n - 1) * self.dt):
            errors.append("grid span is not finite")
        if errors:
            raise ConfigError(errors)

    @cached_property
    def times(self) -> np.ndarray:
        """Retarded-time samples in seconds (read-only array)."""
        t = self.t_start + self.dt * np.arange(self.n)
        t.setflags(write=False)
        return t

    @property
    def span(self) -> float:
        """Total covered interval (n-1)*dt in seconds."""
        return (self.n - 1) * self.dt

    @property
    def midpoint(self) -> float:
        """Center of the grid in seconds."""
        return self.t_start + 0.5 * self.span

    def index_of(self, tau_s: float) -> int:
        """Nearest sample index for a retarded time."""
        return int(round((tau_s - self.t_start) / self.dt))

    def dimensionless_dt(self, gamma2: float) -> float:
        """Step size in units of 1/(2*gamma2)."""
        return 2.0 * gamma2 * self.dt

    def dimensionless_times(self, gamma2: float) -> np.ndarray:
        """All samples mapped to T = 2*gamma2*tau."""
        return 2.0 * gamma2 * self.times

    def refined(self, factor: int) -> "TimeGrid":
        """Same span sampled ``factor`` times more densely."""
        if factor < 1:
            raise ConfigError(f"refinement factor must be >= 1, got {factor}")
        return TimeGrid(self.t_start, self.dt / factor, (self.n - 1) * factor + 1)


@dataclass(frozen=True, eq=False)
class Envelope:
    """Normalized Rabi amplitude sampled on a TimeGrid at fixed z.

    On resonance with real, non-negative initial data the reduced dynamics
    keep the envelope real and non-negative, so `amp` is stored as a plain
    float array.
    """

    grid: TimeGrid
    amp: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amp, dtype=float)
        if a.ndim != 1 or a.shape[0] != self.grid.n:
            raise ConfigError(
                f"amp length {a.shape[0] if a.ndim == 1 else a.shape} "
                f"does not match grid.n = {self.grid.n}"
            )
        if not np.all(np.isfinite(a)):
            raise ConfigError("amp contains non-finite values")
        if np.any(a < 0.0):
            raise ConfigError("amp contains negative values")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "amp", a)

    def energy(self) -> float:
        """Pulse energy integral of amp**2 over tau (trapezoidal)."""
        return float(np.trapezoid(self.amp**2, dx=self.grid.dt))

    def peak(self) -> float:
        """Largest sampled amplitude."""
        return float(self.amp.max())


class MediumVariant(str, Enum):
    """Which population/field model drives the propagation."""

    THREE_LEVEL_SATURABLE = "three_level"
    TWO_LEVEL_BLOCH = "two_level"
    FOUR_LEVEL_REVERSE = "four_level"


@dataclass(frozen=True)
class MediumSpec:
    """Absorber model parameters.

    gamma2 is the population return rate into the ground state (rad/s);
    the pulse-scale relaxation time is T1 = 1/(2*gamma2).  alpha0 is the
    small-signal absorption coefficient (1/m).  alpha_ratio is the
    excited-state to ground-state absorption ratio, required (> 1) for the
    reverse-saturable four-level variant and ignored otherwise.

    sat_factor is the coefficient s in the normalized ground-state rate
    law d(rho)/dT = (1 - rho) - s*W**2*rho.  Two conventions for s are in
    circulation (s = 2 and s = 4, differing in how the saturation Rabi
    frequency is defined); the default is s = 2.  The full density-matrix
    oracle in `media` is consistent with s = 4 under the saturation
    scaling omega_sat = 2*sqrt(gamma1*gamma2) used here.

    gamma1 and gamma3 are the fast relaxation rates (rad/s) needed only by
    the full density-matrix oracles; production runs use the reduced
    models and may leave them unset.
    """

    variant: MediumVariant
    gamma2: float
    alpha0: float
    alpha_ratio: float | None = None
    sat_factor: float = 2.0
    gamma1: float | None = None
    gamma3: float | None = None

    def __post_init__(self):
        errors = []
        if not (math.isfinite(self.gamma2) and self.gamma2 > 0):
            errors.append(f"gamma2 must be > 0, got {self.gamma2}")
        if not (math.isfinite(self.alpha0) and self.alpha0 > 0):
            errors.append(f"alpha0 must be > 0, got {self.alpha0}")
        if not (math.isfinite(self.sat_factor) and self.sat_factor > 0):
            errors.append(f"sat_factor must be > 0, got {self.sat_factor}")
        if self.variant is MediumVariant.FOUR_LEVEL_REVERSE:
            if self.alpha_ratio is None:
                errors.append("alpha_ratio is required for the four_level variant")
            elif not (math.isfinite(self.alpha_ratio) and self.alpha_ratio > 1):
                errors.append(
                    f"alpha_ratio must be > 1 for a reverse absorber, got {self.alpha_ratio}"
                )
        if self.gamma1 is not None:
            if not (math.isfinite(self.gamma1) and self.gamma1 > 0):
                errors.append(f"gamma1 must be > 0, got {self.gamma1}")
            elif self.gamma1 / self.gamma2 < 1e3:
                errors.append(
                    "full-model use requires gamma1/gamma2 >= 1e3, "
                    f"got {self.gamma1 / self.gamma2:.3g}"
                )
            elif self.gamma1 / self.gamma2 < 1e5:
                import warnings

                warnings.warn(
                    f"gamma1/gamma2 = {self.gamma1 / self.gamma2:.3g} is below 1e5; "
                    "the adiabatic separation between coherence and population "
                    "time scales is marginal",
                    UserWarning,
                    stacklevel=2,
                )
        if self.gamma3 is not None and not (math.isfinite(self.gamma3) and self.gamma3 > 0):
            errors.append(f"gamma3 must be > 0, got {self.gamma3}")
        if errors:
            raise ConfigError(errors)

    @property
    def alpha_tilde(self) -> float:
        """Excited-state absorption coefficient alpha_ratio*alpha0 (1/m)."""
        if self.alpha_ratio is None:
            raise ConfigError("alpha_ratio is not set on this medium")
        return self.alpha_ratio * self.alpha0

    @property
    def t1_s(self) -> float:
        """Population relaxation time 1/(2*gamma2) in seconds."""
        return 1.0 / (2.0 * self.gamma2)

    @property
    def omega_sat(self) -> float:
        """Saturation Rabi frequency 2*sqrt(gamma1*gamma2) in rad/s."""
        if self.gamma1 is None:
            raise ConfigError("omega_sat requires gamma1 to be set")
        return 2.0 * math.sqrt(self.gamma1 * self.gamma2)

    @property
    def has_full_model_params(self) -> bool:
        if self.gamma1 is None:
            return False
        if self.variant is MediumVariant.FOUR_LEVEL_REVERSE and self.gamma3 is None:
            return False
        return True


@dataclass(frozen=True)
class SimulationConfig:
    """Everything a propagation run needs.

    Field-level invariants of the nested types are enforced at their
    construction; cross-field consistency (grid resolution, span versus
    source support, z resolution) is checked by :func:`validate_config`.
    """

    medium: MediumSpec
    length_m: float
    n_z: int
    grid: TimeGrid
    source: "object"  # sources.GaussianPulse | sources.ModulatedWave
    record_slices: int = 0


@dataclass(frozen=True)
class ValidatedConfig:
    """A SimulationConfig that passed validation, with derived step sizes.

    dt_dimensionless is the population-integration step 2*gamma2*dt and
    dz_m the z-marching step length_m/n_z.
    """

    medium: MediumSpec
    length_m: float
    n_z: int
    grid: TimeGrid
    source: "object"
    record_slices: int
    dt_dimensionless: float
    dz_m: float


def validate_config(cfg: SimulationConfig | ValidatedConfig) -> ValidatedConfig:
    """Check every invariant of a simulation configuration.

    Returns a :class:`ValidatedConfig` carrying the derived dimensionless
    step sizes.  Validating an already-validated config returns it
    unchanged.  All violations are collected and raised together as a
    :class:`ConfigError`.
    """
    if isinstance(cfg, ValidatedConfig):
        return cfg

    from . import sources  # deferred to avoid an import cycle

    errors = []
    if not (math.isfinite(cfg.length_m) and cfg.length_m > 0):
        errors.append(f"length_m must be > 0, got {cfg.length_m}")
    if cfg.n_z < 8:
        errors.append(f"n_z must be >= 8, got {cfg.n_z}")
    if cfg.record_slices < 0:
        errors.append(f"record_slices must be >= 0, got {cfg.record_slices}")

    med = cfg.medium
    grid = cfg.grid
    dt_dim = grid.dimensionless_dt(med.gamma2)
    if dt_dim > MAX_DT_DIMENSIONLESS:
        errors.append(
            "grid too coarse: 2*gamma2*dt = "
            f"{dt_dim:.4g} exceeds {MAX_DT_DIMENSIONLESS} (shrink dt)"
        )
    if cfg.n_z >= 1 and cfg.length_m > 0:
        dz = cfg.length_m / cfg.n_z
        alpha_dz = med.alpha0 * dz
        if alpha_dz > MAX_ALPHA0_DZ:
            errors.append(
                "grid too coarse: alpha0*dz = "
                f"{alpha_dz:.4g} exceeds {MAX_ALPHA0_DZ} (raise n_z)"
            )
    else:
        dz = math.nan

    src = cfg.source
    if isinstance(src, sources.GaussianPulse):
        required = 12.0 * src.sigma
        if grid.span < required * (1.0 - _SPAN_RTOL):
            errors.append(
                f"grid span {grid.span:.4g} s is shorter than 12*sigma = "
                f"{required:.4g} s required for a Gaussian source"
            )
    elif isinstance(src, sources.ModulatedWave):
        required = 8.0 * (2.0 * math.pi / src.delta) + 10.0 / (2.0 * med.gamma2)
        if grid.span < required * (1.0 - _SPAN_RTOL):
            errors.append(
                f"grid span {grid.span:.4g} s is shorter than 8 modulation "
                f"periods plus the 10/(2*gamma2) transient window = {required:.4g} s"
            )
    else:
        errors.append(f"unknown source type {type(src).__name__}")

    if errors:
        raise ConfigError(errors)

    return ValidatedConfig(
        medium=med,
        length_m=cfg.length_m,
        n_z=cfg.n_z,
        grid=grid,
        source=src,
        record_slices=cfg.record_slices,
        dt_dimensionless=dt_dim,
        dz_m=dz,
    )

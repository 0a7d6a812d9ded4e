"""Input field envelopes at the medium entrance z = 0."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, Envelope, TimeGrid, _SPAN_RTOL


@dataclass(frozen=True)
class GaussianPulse:
    """Gaussian amplitude pulse: peak normalized Rabi amplitude omega0,
    temporal width sigma in seconds.

    omega0 = 0 is allowed and produces an identically zero envelope.
    """

    omega0: float
    sigma: float

    def __post_init__(self):
        errors = []
        if not (math.isfinite(self.omega0) and self.omega0 >= 0):
            errors.append(f"omega0 must be >= 0, got {self.omega0}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            errors.append(f"sigma must be > 0, got {self.sigma}")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class ModulatedWave:
    """Quasi-CW wave with sinusoidal intensity modulation.

    The intensity (in saturation units) is i0*(1 + m*cos(delta*tau)); the
    amplitude is its square root.  m = 0 gives an unmodulated CW field;
    m >= 1 would drive the intensity negative and is rejected.
    """

    i0: float
    m: float
    delta: float  # modulation angular frequency, rad/s

    def __post_init__(self):
        errors = []
        if not (math.isfinite(self.i0) and self.i0 > 0):
            errors.append(f"i0 must be > 0, got {self.i0}")
        if not (math.isfinite(self.m) and 0.0 <= self.m < 1.0):
            errors.append(f"m must satisfy 0 <= m < 1, got {self.m}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            errors.append(f"delta must be > 0, got {self.delta}")
        if errors:
            raise ConfigError(errors)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.delta


SourceSpec = GaussianPulse | ModulatedWave


def gaussian_envelope(spec: GaussianPulse, grid: TimeGrid) -> Envelope:
    """Sample a Gaussian pulse centered at the grid midpoint.

    The grid must span at least 12*sigma (+-6 sigma about the center),
    which keeps the truncated tails below 1e-7 of the peak.  With the
    center on a sample (odd n) the peak value is exactly omega0.
    """
    if grid.span < 12.0 * spec.sigma * (1.0 - _SPAN_RTOL):
        raise ConfigError(
            f"grid span {grid.span:.4g} s is shorter than 12*sigma = "
            f"{12.0 * spec.sigma:.4g} s"
        )
    t_c = grid.midpoint
    amp = spec.omega0 * np.exp(-((grid.times - t_c) ** 2) / (2.0 * spec.sigma**2))
    return Envelope(grid, amp)


def modulated_envelope(
    spec: ModulatedWave, grid: TimeGrid, gamma2: float | None = None
) -> Envelope:
    """Sample a modulated quasi-CW field.

    The phase origin is tau = 0 (cos evaluates at the absolute retarded
    time); all phase extraction downstream is relative, so this is only a
    reproducibility convention.  The grid must cover 8 modulation periods,
    plus the 10/(2*gamma2) equilibration transient when gamma2 is given.
    """
    required = 8.0 * spec.period_s
    if gamma2 is not None:
        required += 10.0 / (2.0 * gamma2)
    if grid.span < required * (1.0 - _SPAN_RTOL):
        raise ConfigError(
            f"grid span {grid.span:.4g} s is shorter than the required "
            f"{required:.4g} s (8 modulation periods"
            + (" plus transient window)" if gamma2 is not None else ")")
        )
    intensity = spec.i0 * (1.0 + spec.m * np.cos(spec.delta * grid.times))
    return Envelope(grid, np.sqrt(intensity))


def envelope_for(spec: SourceSpec, grid: TimeGrid, gamma2: float | None = None) -> Envelope:
    """Dispatch to the sampler matching the source variant."""
    if isinstance(spec, GaussianPulse):
        return gaussian_envelope(spec, grid)
    if isinstance(spec, ModulatedWave):
        return modulated_envelope(spec, grid, gamma2)
    raise ConfigError(f"unknown source type {type(spec).__name__}")

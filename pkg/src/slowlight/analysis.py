"""Observables extracted from propagation results.

Delays are measured between peak positions (3-point parabolic sub-sample
interpolation), not centroids: the strong-absorption regime reshapes
pulses asymmetrically and centroids drift with the distortion, while the
quantities of interest compare peaks.  A centroid delay is still exposed
as a secondary diagnostic.  In the retarded frame the vacuum reference
pulse is the input itself, so every delay returned here is medium-induced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import C_LIGHT, Envelope, NumericsError
from .sources import ModulatedWave


class NoInteriorPeakError(NumericsError):
    """The envelope has no interior maximum (monotone on the grid)."""


class PlateauPeakError(NumericsError):
    """Three or more equal maximal samples; the peak position is ambiguous."""


class VelocitySingularityError(NumericsError):
    """delay is within 1e-15 s of -L/c, where the velocity diverges."""


class ZeroInputError(NumericsError):
    """Transmission is undefined for an identically zero input."""


class ModulationFitError(NumericsError):
    """The single-harmonic modulation model does not describe the signal."""


class FwhmError(NumericsError):
    """A half-maximum crossing is clipped by the grid."""


@dataclass(frozen=True)
class Observables:
    """Pulse observables for one propagation run.

    delay_s > 0 is subluminal delay, < 0 advancement; the superluminal
    flag is set for any advancement.  Transmissions lie in [0, 1] for the
    absorbing media simulated here.
    """

    delay_s: float
    v_g_mps: float
    t_energy: float
    t_peak: float
    width_ratio: float
    superluminal: bool
    centroid_delay_s: float


@dataclass(frozen=True)
class ModulationFit:
    """Single-harmonic fit of a modulated intensity.

    theta is the phase lag of the output modulation relative to the
    source's cos(delta*tau) convention, so delay_s = theta/delta is
    positive when the modulation pattern arrives late (fitted form:
    intensity ~ mean*(1 + m*cos(delta*tau - theta))).  residual is the
    rms misfit normalized to the fitted modulation amplitude.
    """

    theta: float
    delay_s: float
    residual: float
    mean_intensity: float
    modulation_amplitude: float


def _parabolic_peak(amp: np.ndarray, dt: float, t0: float) -> tuple[float, float]:
    """Sub-sample peak (time, value) via a 3-point parabola.

    Requires a unique interior maximum; raises otherwise.
    """
    m = int(np.argmax(amp))
    if m == 0 or m == amp.shape[0] - 1:
        raise NoInteriorPeakError(
            "envelope has no interior maximum; cannot locate a peak"
        )
    if int(np.count_nonzero(amp == amp[m])) >= 3:
        raise PlateauPeakError(
            "three or more equal maximal samples; peak position is ambiguous"
        )
    y0, y1, y2 = amp[m - 1], amp[m], amp[m + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom == 0.0:
        offset = 0.0
        value = float(y1)
    else:
        offset = 0.5 * (y0 - y2) / denom
        value = float(y1 - 0.25 * (y0 - y2) * offset)
    return t0 + (m + offset) * dt, value


def peak_delay(output: Envelope, reference: Envelope) -> float:
    """Peak arrival time of ``output`` minus that of ``reference`` (s)."""
    if output.grid != reference.grid:
        raise ValueError("output and reference must share a grid")
    g = output.grid
    t_out, _ = _parabolic_peak(output.amp, g.dt, g.t_start)
    t_ref, _ = _parabolic_peak(reference.amp, g.dt, g.t_start)
    return t_out - t_ref


def centroid_delay(output: Envelope, reference: Envelope) -> float:
    """Intensity-centroid delay (s); secondary distortion-sensitive diagnostic."""
    if output.grid != reference.grid:
        raise ValueError("output and reference must share a grid")
    t = output.grid.times

    def centroid(env: Envelope) -> float:
        w = env.amp**2
        total = np.trapezoid(w, dx=env.grid.dt)
        if total <= 0.0:
            raise ZeroInputError("cannot take the centroid of a zero envelope")
        return float(np.trapezoid(t * w, dx=env.grid.dt) / total)

    return centroid(output) - centroid(reference)


def group_velocity(delay_s: float, length_m: float) -> float:
    """v_g = L / (L/c + delay_s).

    delay = 0 returns exactly c.  Advancement beyond the vacuum transit
    time gives a negative value, returned as-is (flagging is the caller's
    concern).  Raises within 1e-15 s of the pole delay = -L/c.
    """
    if delay_s == 0.0:
        return C_LIGHT
    denom = length_m / C_LIGHT + delay_s
    if abs(denom) < 1e-15:
        raise VelocitySingularityError(
            f"delay {delay_s:.3e} s is within 1e-15 s of -L/c; "
            "group velocity is singular"
        )
    return length_m / denom


def transmissions(output: Envelope, input: Envelope) -> tuple[float, float]:
    """(energy transmission, peak intensity transmission)."""
    if output.grid != input.grid:
        raise ValueError("output and input must share a grid")
    e_in = input.energy()
    p_in = input.peak()
    if e_in <= 0.0 or p_in <= 0.0:
        raise ZeroInputError("transmission is undefined for a zero input")
    return output.energy() / e_in, (output.peak() / p_in) ** 2


def modulation_phase(output: Envelope, spec: ModulatedWave,
                     discard_s: float = 0.0, *,
                     residual_gate: float = 0.05) -> ModulationFit:
    """Recover the modulation phase lag of a transmitted quasi-CW beam.

    Discards ``discard_s`` from the start of the grid (equilibration
    window), keeps the largest whole number of modulation periods, and
    projects the intensity onto [1, cos(delta*tau), sin(delta*tau)] by
    least squares; the phase origin of the quadratures is identical to the
    source's, so the fit is phase-referenced to the input by construction.
    At least 4 full periods must remain.  Raises
    :class:`ModulationFitError` when the relative rms misfit exceeds
    ``residual_gate`` (the single-harmonic model does not describe the
    output, e.g. too-deep modulation in a strongly nonlinear medium).
    """
    g = output.grid
    t = g.times
    start = g.t_start + discard_s
    period = spec.period_s
    usable = (g.t_start + g.span) - start
    n_periods = int(math.floor(usable / period + 1e-12))
    if n_periods < 4:
        raise ModulationFitError(
            f"only {n_periods} full modulation periods remain after the "
            f"{discard_s:.3g} s discard window; at least 4 are required"
        )
    window = (t >= start - 1e-12 * period) & (t < start + n_periods * period - 1e-12 * period)
    tau = t[window]
    intensity = output.amp[window] ** 2

    basis = np.column_stack(
        [np.ones_like(tau), np.cos(spec.delta * tau), np.sin(spec.delta * tau)]
    )
    coef, *_ = np.linalg.lstsq(basis, intensity, rcond=None)
    a0, a_c, a_s = (float(c) for c in coef)
    mod_amp = math.hypot(a_c, a_s)
    if mod_amp == 0.0:
        raise ModulationFitError("no modulation component found in the output")
    misfit = intensity - basis @ coef
    residual = float(np.sqrt(np.mean(misfit**2))) / mod_amp
    if residual > residual_gate:
        raise ModulationFitError(
            f"relative sinusoid misfit {residual:.3g} exceeds {residual_gate}; "
            "single-harmonic model rejected"
        )
    theta = math.atan2(a_s, a_c)
    return ModulationFit(
        theta=theta,
        delay_s=theta / spec.delta,
        residual=residual,
        mean_intensity=a0,
        modulation_amplitude=mod_amp,
    )


def _fwhm(env: Envelope) -> float:
    """Full width at half maximum by linear interpolation of the crossings."""
    amp = env.amp
    dt = env.grid.dt
    m = int(np.argmax(amp))
    _, peak_val = _parabolic_peak(amp, dt, env.grid.t_start)
    half = 0.5 * peak_val

    def crossing(idx_from: int, step: int) -> float:
        i = idx_from
        while 0 <= i + step < amp.shape[0]:
            j = i + step
            if amp[j] <= half <= amp[i] or amp[i] <= half <= amp[j]:
                if amp[j] == amp[i]:
                    return float(i)
                return i + step * (amp[i] - half) / (amp[i] - amp[j])
            i = j
        raise FwhmError("half-maximum crossing clipped by the grid")

    left = crossing(m, -1)
    right = crossing(m, +1)
    return (right - left) * dt


def width_ratio(output: Envelope, input: Envelope) -> float:
    """FWHM(output) / FWHM(input); distortion measure for pulses."""
    if output.grid != input.grid:
        raise ValueError("output and input must share a grid")
    return _fwhm(output) / _fwhm(input)


def analyze_pulse(result, length_m: float) -> Observables:
    """Standard observable set for a pulsed propagation result."""
    delay = peak_delay(result.output, result.input)
    t_energy, t_peak = transmissions(result.output, result.input)
    return Observables(
        delay_s=delay,
        v_g_mps=group_velocity(delay, length_m),
        t_energy=t_energy,
        t_peak=t_peak,
        width_ratio=width_ratio(result.output, result.input),
        superluminal=delay < 0.0,
        centroid_delay_s=centroid_delay(result.output, result.input),
    )

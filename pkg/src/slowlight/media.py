"""Population rate laws, steady states, and full density-matrix oracles.

Three dynamical models drive production runs, all reduced to a single
evolving population in dimensionless time T = 2*gamma2*tau:

* three-level saturable:   d(rho_gg)/dT = (1 - rho_gg) - s*W**2*rho_gg
* four-level reverse:      same population law; only the field coupling
                           differs (excited-state absorption alpha_tilde)
* two-level Bloch:         d(rho_11)/dT = -rho_11 + 2*W**2*(1 - 2*rho_11)

where W is the normalized Rabi amplitude.  The corresponding field
equations are, per unit length,

* three-level:  dW/dz = -(alpha0/2) * W * rho_gg
* two-level:    dW/dz = -(alpha0/2) * W * (1 - 2*rho_11)
* four-level:   dW/dz = -(alpha0/2) * W * rho_gg
                        - (alpha_tilde/2) * W * (1 - rho_gg)

The full three- and four-level density-matrix models (physical time,
rates in rad/s) exist to validate the adiabatic elimination behind the
reduced laws; they are not the production path.  Their field coupling
dW/dz = -(alpha0*gamma1/2)*Im(rho_1g)/omega_sat (plus the alpha_tilde
analog on the upper transition) reduces exactly to the equations above
when the coherences take their steady values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, MediumSpec, MediumVariant

ArrayLike = "float | np.ndarray"


# ---------------------------------------------------------------------------
# Reduced rate laws
# ---------------------------------------------------------------------------

def saturable_rate(rho_gg, omega, sat_factor: float = 2.0):
    """d(rho_gg)/dT for the saturable ground-state law.

    Accepts scalars or arrays; total on the valid domain
    0 <= rho_gg <= 1, omega >= 0.
    """
    return (1.0 - rho_gg) - sat_factor * omega**2 * rho_gg


def saturable_steady(omega, sat_factor: float = 2.0):
    """Equilibrium ground-state population 1/(1 + s*W**2)."""
    return 1.0 / (1.0 + sat_factor * omega**2)


def two_level_rate(rho_11, omega):
    """d(rho_11)/dT for the two-level Bloch law (T = tau/T1)."""
    return -rho_11 + 2.0 * omega**2 * (1.0 - 2.0 * rho_11)


def two_level_steady(omega):
    """Equilibrium excited population 2*W**2/(1 + 4*W**2), bounded by 1/2."""
    w2 = omega**2
    return 2.0 * w2 / (1.0 + 4.0 * w2)


def population_rate(population, omega, medium: MediumSpec):
    """Rate law of the medium's evolving population (rho_gg or rho_11)."""
    if medium.variant is MediumVariant.TWO_LEVEL_BLOCH:
        return two_level_rate(population, omega)
    return saturable_rate(population, omega, medium.sat_factor)


def steady_population(omega, medium: MediumSpec):
    """Equilibrium value of the medium's evolving population."""
    if medium.variant is MediumVariant.TWO_LEVEL_BLOCH:
        return two_level_steady(omega)
    return saturable_steady(omega, medium.sat_factor)


def ground_state_fraction(population, medium: MediumSpec):
    """Ground-state population rho_gg for any variant.

    The two-level model evolves rho_11; the others evolve rho_gg directly.
    """
    if medium.variant is MediumVariant.TWO_LEVEL_BLOCH:
        return 1.0 - population
    return population


def field_rate(omega, population, medium: MediumSpec):
    """dW/dz (per meter) given the local population of the medium.

    ``population`` is the evolving variable of the variant: rho_gg for the
    saturable and reverse-saturable media, rho_11 for the two-level model.
    """
    if medium.variant is MediumVariant.THREE_LEVEL_SATURABLE:
        return -0.5 * medium.alpha0 * omega * population
    if medium.variant is MediumVariant.TWO_LEVEL_BLOCH:
        return -0.5 * medium.alpha0 * omega * (1.0 - 2.0 * population)
    if medium.variant is MediumVariant.FOUR_LEVEL_REVERSE:
        return (
            -0.5 * medium.alpha0 * omega * population
            - 0.5 * medium.alpha_tilde * omega * (1.0 - population)
        )
    raise ConfigError(f"unknown medium variant {medium.variant}")


def rate_coefficients(omega: np.ndarray, medium: MediumSpec) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (a, b) of the linear-in-population form dp/dT = a - b*p.

    Every reduced law is affine in its population, which is what the
    vectorized Heun scan in `propagation` exploits.
    """
    w2 = np.asarray(omega, dtype=float) ** 2
    if medium.variant is MediumVariant.TWO_LEVEL_BLOCH:
        return 2.0 * w2, 1.0 + 4.0 * w2
    return np.ones_like(w2), 1.0 + medium.sat_factor * w2


# ---------------------------------------------------------------------------
# Full density-matrix models (validation oracles)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FullThreeLevelState:
    """Populations and pumped-transition coherence of the three-level model.

    Also used as the container for state derivatives, whose trace is zero;
    population-range and trace invariants therefore apply to states, not
    to every instance.
    """

    rho_gg: float
    rho_11: float
    rho_22: float
    rho_1g: complex

    @property
    def trace(self) -> float:
        return self.rho_gg + self.rho_11 + self.rho_22


@dataclass(frozen=True)
class FullFourLevelState:
    """Populations and both driven coherences of the four-level model."""

    rho_gg: float
    rho_11: float
    rho_22: float
    rho_33: float
    rho_1g: complex
    rho_32: complex

    @property
    def trace(self) -> float:
        return self.rho_gg + self.rho_11 + self.rho_22 + self.rho_33


def full_three_level_rates(
    state: FullThreeLevelState, omega_phys: float, medium: MediumSpec
) -> FullThreeLevelState:
    """Time derivative (physical time, 1/s) of the full three-level state.

    rho_gg and rho_22 follow their own equations; rho_11 closes the trace,
    so the derivative components sum to zero identically.
    """
    if medium.gamma1 is None:
        raise ConfigError("full three-level rates require gamma1")
    g1, g2 = medium.gamma1, medium.gamma2
    pump = (1j * omega_phys * (state.rho_1g - np.conj(state.rho_1g))).real
    d_gg = 2.0 * g2 * state.rho_22 + pump
    d_22 = 2.0 * g1 * state.rho_11 - 2.0 * g2 * state.rho_22
    d_1g = -g1 * state.rho_1g + 1j * omega_phys * (state.rho_gg - state.rho_11)
    return FullThreeLevelState(
        rho_gg=d_gg, rho_11=-(d_gg + d_22), rho_22=d_22, rho_1g=d_1g
    )


def full_four_level_rates(
    state: FullFourLevelState, omega_phys: float, medium: MediumSpec
) -> FullFourLevelState:
    """Time derivative (physical time, 1/s) of the full four-level state.

    The single driving field pumps both the ground and the upper
    (|e2> -> |e3>) transitions; rho_11 closes the trace.
    """
    if medium.gamma1 is None or medium.gamma3 is None:
        raise ConfigError("full four-level rates require gamma1 and gamma3")
    g1, g2, g3 = medium.gamma1, medium.gamma2, medium.gamma3
    pump_g = (1j * omega_phys * (state.rho_1g - np.conj(state.rho_1g))).real
    pump_u = (1j * omega_phys * (np.conj(state.rho_32) - state.rho_32)).real
    d_gg = 2.0 * g2 * state.rho_22 + pump_g
    d_22 = 2.0 * g1 * state.rho_11 - 2.0 * g2 * state.rho_22 + 2.0 * g3 * state.rho_33
    d_33 = -2.0 * g3 * state.rho_33 + pump_u
    d_32 = -g3 * state.rho_32 + 1j * omega_phys * (state.rho_22 - state.rho_33)
    d_1g = -g1 * state.rho_1g + 1j * omega_phys * (state.rho_gg - state.rho_11)
    return FullFourLevelState(
        rho_gg=d_gg,
        rho_11=-(d_gg + d_22 + d_33),
        rho_22=d_22,
        rho_33=d_33,
        rho_1g=d_1g,
        rho_32=d_32,
    )


def full_three_level_steady(omega_phys: float, medium: MediumSpec) -> FullThreeLevelState:
    """Closed-form steady state of the full three-level model.

    In the adiabatic limit omega_phys << gamma1 this reproduces
    saturable_steady with s = 4 under omega_sat = 2*sqrt(gamma1*gamma2).
    """
    if medium.gamma1 is None:
        raise ConfigError("steady state requires gamma1")
    g1, g2 = medium.gamma1, medium.gamma2
    q = omega_phys**2 / (g1**2 + omega_phys**2)
    rho_gg = 1.0 / (1.0 + q * (1.0 + g1 / g2))
    rho_11 = q * rho_gg
    rho_22 = (g1 / g2) * rho_11
    rho_1g = 1j * omega_phys * (rho_gg - rho_11) / g1
    return FullThreeLevelState(rho_gg, rho_11, rho_22, rho_1g)


def full_four_level_steady(omega_phys: float, medium: MediumSpec) -> FullFourLevelState:
    """Steady state of the full four-level model via the linear system.

    Solves the four stationarity conditions with the coherences slaved to
    the populations.  Note the model as written can push rho_11 slightly
    negative once omega_phys**2 exceeds gamma2*gamma3; that regime is
    outside the validated envelope of the oracle.
    """
    if medium.gamma1 is None or medium.gamma3 is None:
        raise ConfigError("steady state requires gamma1 and gamma3")
    g1, g2, g3 = medium.gamma1, medium.gamma2, medium.gamma3
    w2 = omega_phys**2
    # Unknowns x = [rho_gg, rho_11, rho_22, rho_33].
    a = np.array(
        [
            [-w2 / g1, w2 / g1, g2, 0.0],          # rho_gg stationarity
            [0.0, g1, -g2, g3],                     # rho_22 stationarity
            [0.0, 0.0, w2 / g3, -(g3 + w2 / g3)],  # rho_33 stationarity
            [1.0, 1.0, 1.0, 1.0],                   # trace
        ]
    )
    rho = np.linalg.solve(a, np.array([0.0, 0.0, 0.0, 1.0]))
    rho_1g = 1j * omega_phys * (rho[0] - rho[1]) / g1
    rho_32 = 1j * omega_phys * (rho[2] - rho[3]) / g3
    return FullFourLevelState(rho[0], rho[1], rho[2], rho[3], rho_1g, rho_32)


def full_initial_state(medium: MediumSpec):
    """All population in the ground state, no coherence."""
    if medium.variant is MediumVariant.FOUR_LEVEL_REVERSE:
        return FullFourLevelState(1.0, 0.0, 0.0, 0.0, 0.0j, 0.0j)
    return FullThreeLevelState(1.0, 0.0, 0.0, 0.0j)

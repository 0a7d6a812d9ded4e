"""Intense-pulse propagation through saturable and reverse-saturable absorbers.

The package propagates a resonant field envelope through a medium whose
ground-state population follows a saturable (or reverse-saturable) rate
law, in the retarded frame, and extracts slow/fast-light observables:
delay or advancement, group velocity, transmissions, pulse distortion,
and the phase shift of sinusoidally modulated beams.
"""

from .analysis import (
    ModulationFit,
    Observables,
    analyze_pulse,
    centroid_delay,
    group_velocity,
    modulation_phase,
    peak_delay,
    transmissions,
    width_ratio,
)
from .core import (
    C_LIGHT,
    ConfigError,
    Envelope,
    MediumSpec,
    MediumVariant,
    NumericsError,
    SimulationConfig,
    TimeGrid,
    ValidatedConfig,
    validate_config,
)
from .media import (
    FullFourLevelState,
    FullThreeLevelState,
    field_rate,
    full_four_level_rates,
    full_three_level_rates,
    saturable_rate,
    saturable_steady,
    two_level_rate,
    two_level_steady,
)
from .propagation import (
    ConvergenceReport,
    PropagationResult,
    StepAccuracyError,
    StiffnessError,
    convergence_study,
    propagate,
    propagate_full,
    refine_config,
    solve_population_history,
)
from .sources import (
    GaussianPulse,
    ModulatedWave,
    gaussian_envelope,
    modulated_envelope,
)

__version__ = "0.1.0"

__all__ = [
    "C_LIGHT",
    "ConfigError",
    "ConvergenceReport",
    "Envelope",
    "FullFourLevelState",
    "FullThreeLevelState",
    "GaussianPulse",
    "MediumSpec",
    "MediumVariant",
    "ModulatedWave",
    "ModulationFit",
    "NumericsError",
    "Observables",
    "PropagationResult",
    "SimulationConfig",
    "StepAccuracyError",
    "StiffnessError",
    "TimeGrid",
    "ValidatedConfig",
    "analyze_pulse",
    "centroid_delay",
    "convergence_study",
    "field_rate",
    "full_four_level_rates",
    "full_three_level_rates",
    "gaussian_envelope",
    "group_velocity",
    "modulated_envelope",
    "modulation_phase",
    "peak_delay",
    "propagate",
    "propagate_full",
    "refine_config",
    "saturable_rate",
    "saturable_steady",
    "solve_population_history",
    "transmissions",
    "two_level_rate",
    "two_level_steady",
    "validate_config",
    "width_ratio",
    "__version__",
]

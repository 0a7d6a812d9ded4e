"""Scenario runner: config files, sweeps, calibration, tabular output.

Scenario files are flat INI-style key = value text with one section per
concern ([medium], [grid], [run], [source], optional [sweep] and
[outputs]).  The schema is strict: unknown sections or keys fail loudly,
as do missing required ones, so a typo can never silently fall back to a
physics default.  Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from . import analysis
from .core import (
    ConfigError,
    MediumSpec,
    MediumVariant,
    NumericsError,
    SimulationConfig,
    TimeGrid,
    ValidatedConfig,
    validate_config,
)
from .propagation import PropagationResult, convergence_study, propagate
from .sources import GaussianPulse, ModulatedWave

ENV_OUT_DIR = "SLOWLIGHT_OUT_DIR"
DEFAULT_OUT_DIR = "slowlight-out"

ARTIFACTS = ("envelopes", "observables", "slices", "populations")
SWEEP_PARAMETERS = ("peak_amplitude", "i0", "delta")

_SCHEMA = {
    "medium": {
        "required": {"variant", "gamma2", "alpha0"},
        "optional": {"alpha_ratio", "sat_factor", "gamma1", "gamma3"},
    },
    "grid": {"required": {"t_start", "dt", "n"}, "optional": set()},
    "run": {
        "required": {"length", "n_z"},
        "optional": {"record_slices", "name"},
    },
    "source": {
        "required": {"variant"},
        "optional": {"peak_amplitude", "sigma", "i0", "modulation_index", "delta"},
    },
    "sweep": {"required": {"parameter", "values"}, "optional": set()},
    "outputs": {"required": {"artifacts"}, "optional": set()},
}


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class Scenario:
    """A named simulation config plus optional sweep and output requests."""

    name: str
    config: SimulationConfig
    sweep: Sweep | None
    artifacts: tuple[str, ...]


def _get_float(cp, section: str, key: str, errors: list[str]) -> float | None:
    raw = cp.get(section, key)
    try:
        return float(raw)
    except ValueError:
        errors.append(f"[{section}] {key}: not a number: {raw!r}")
        return None


def _get_int(cp, section: str, key: str, errors: list[str]) -> int | None:
    raw = cp.get(section, key)
    try:
        return int(raw)
    except ValueError:
        errors.append(f"[{section}] {key}: not an integer: {raw!r}")
        return None


def parse_scenario_text(text: str, name: str) -> Scenario:
    """Parse and strictly validate scenario file content."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse scenario file: {exc}") from exc

    errors: list[str] = []
    for section in ("medium", "grid", "run", "source"):
        if not cp.has_section(section):
            errors.append(f"missing: {section}")
    for section in cp.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        keys = set(cp.options(section))
        unknown = keys - _SCHEMA[section]["required"] - _SCHEMA[section]["optional"]
        for key in sorted(unknown):
            errors.append(f"unknown key [{section}] {key}")
        missing = _SCHEMA[section]["required"] - keys
        for key in sorted(missing):
            errors.append(f"missing: [{section}] {key}")
    if errors:
        raise ConfigError(errors)

    medium = _parse_medium(cp, errors)
    grid = _parse_grid(cp, errors)
    source = _parse_source(cp, errors)
    length = _get_float(cp, "run", "length", errors)
    n_z = _get_int(cp, "run", "n_z", errors)
    record_slices = 0
    if cp.has_option("run", "record_slices"):
        record_slices = _get_int(cp, "run", "record_slices", errors) or 0
    if cp.has_option("run", "name"):
        name = cp.get("run", "name").strip()

    sweep = _parse_sweep(cp, source, errors) if cp.has_section("sweep") else None
    artifacts = _parse_artifacts(cp, errors) if cp.has_section("outputs") else ("envelopes", "observables")

    if errors or medium is None or grid is None or source is None:
        raise ConfigError(errors or ["scenario could not be constructed"])

    config = SimulationConfig(
        medium=medium,
        length_m=length,
        n_z=n_z,
        grid=grid,
        source=source,
        record_slices=record_slices,
    )
    if "slices" in artifacts and record_slices < 1:
        raise ConfigError(
            "the 'slices' artifact requires [run] record_slices >= 1"
        )
    return Scenario(name=name, config=config, sweep=sweep, artifacts=artifacts)


def _parse_medium(cp, errors: list[str]) -> MediumSpec | None:
    raw_variant = cp.get("medium", "variant").strip()
    try:
        variant = MediumVariant(raw_variant)
    except ValueError:
        errors.append(
            f"[medium] variant must be one of "
            f"{', '.join(v.value for v in MediumVariant)}; got {raw_variant!r}"
        )
        return None
    kwargs = {}
    for key in ("alpha_ratio", "sat_factor", "gamma1", "gamma3"):
        if cp.has_option("medium", key):
            kwargs[key] = _get_float(cp, "medium", key, errors)
    gamma2 = _get_float(cp, "medium", "gamma2", errors)
    alpha0 = _get_float(cp, "medium", "alpha0", errors)
    if errors:
        return None
    if "sat_factor" in kwargs and kwargs["sat_factor"] is None:
        return None
    try:
        return MediumSpec(variant=variant, gamma2=gamma2, alpha0=alpha0,
                          **{k: v for k, v in kwargs.items() if v is not None})
    except ConfigError as exc:
        errors.extend(f"[medium] {e}" for e in exc.errors)
        return None


def _parse_grid(cp, errors: list[str]) -> TimeGrid | None:
    t_start = _get_float(cp, "grid", "t_start", errors)
    dt = _get_float(cp, "grid", "dt", errors)
    n = _get_int(cp, "grid", "n", errors)
    if t_start is None or dt is None or n is None:
        return None
    try:
        return TimeGrid(t_start=t_start, dt=dt, n=n)
    except ConfigError as exc:
        errors.extend(f"[grid] {e}" for e in exc.errors)
        return None


def _parse_source(cp, errors: list[str]):
    variant = cp.get("source", "variant").strip()
    keys = set(cp.options("source")) - {"variant"}
    if variant == "gaussian":
        needed = {"peak_amplitude", "sigma"}
    elif variant == "modulated":
        needed = {"i0", "modulation_index", "delta"}
    else:
        errors.append(f"[source] variant must be gaussian or modulated; got {variant!r}")
        return None
    for key in sorted(needed - keys):
        errors.append(f"missing: [source] {key}")
    for key in sorted(keys - needed):
        errors.append(f"key [source] {key} does not apply to the {variant} source")
    if errors:
        return None
    try:
        if variant == "gaussian":
            return GaussianPulse(
                omega0=_get_float(cp, "source", "peak_amplitude", errors),
                sigma=_get_float(cp, "source", "sigma", errors),
            )
        return ModulatedWave(
            i0=_get_float(cp, "source", "i0", errors),
            m=_get_float(cp, "source", "modulation_index", errors),
            delta=_get_float(cp, "source", "delta", errors),
        )
    except (ConfigError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            errors.extend(f"[source] {e}" for e in exc.errors)
        return None


def _parse_sweep(cp, source, errors: list[str]) -> Sweep | None:
    parameter = cp.get("sweep", "parameter").strip()
    if parameter not in SWEEP_PARAMETERS:
        errors.append(
            f"[sweep] parameter must be one of {', '.join(SWEEP_PARAMETERS)}; "
            f"got {parameter!r}"
        )
        return None
    raw = cp.get("sweep", "values").replace(",", " ").split()
    values = []
    for item in raw:
        try:
            values.append(float(item))
        except ValueError:
            errors.append(f"[sweep] values: not a number: {item!r}")
    if not values:
        errors.append("[sweep] values is empty")
        return None
    if any(v1 <= v0 for v0, v1 in zip(values, values[1:])):
        errors.append("[sweep] values must be strictly increasing")
    if parameter == "peak_amplitude" and not isinstance(source, GaussianPulse):
        errors.append("[sweep] peak_amplitude applies to the gaussian source only")
    if parameter in ("i0", "delta") and not isinstance(source, ModulatedWave):
        errors.append(f"[sweep] {parameter} applies to the modulated source only")
    if errors:
        return None
    return Sweep(parameter=parameter, values=tuple(values))


def _parse_artifacts(cp, errors: list[str]) -> tuple[str, ...]:
    raw = cp.get("outputs", "artifacts").replace(",", " ").split()
    bad = [a for a in raw if a not in ARTIFACTS]
    for a in bad:
        errors.append(f"[outputs] unknown artifact {a!r}; valid: {', '.join(ARTIFACTS)}")
    return tuple(dict.fromkeys(raw))


def parse_scenario(path: Path) -> Scenario:
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    return parse_scenario_text(path.read_text(encoding="utf-8"), path.stem)


# ---------------------------------------------------------------------------
# Sweeps and execution
# ---------------------------------------------------------------------------

def apply_sweep_value(cfg: SimulationConfig, parameter: str, value: float) -> SimulationConfig:
    if parameter == "peak_amplitude":
        return replace(cfg, source=replace(cfg.source, omega0=value))
    if parameter == "i0":
        return replace(cfg, source=replace(cfg.source, i0=value))
    if parameter == "delta":
        return replace(cfg, source=replace(cfg.source, delta=value))
    raise ConfigError(f"unknown sweep parameter {parameter!r}")


def sweep_points(scenario: Scenario) -> list[tuple[float, SimulationConfig]]:
    """(swept value, config) per run; a single point without a sweep."""
    if scenario.sweep is None:
        src = scenario.config.source
        base = src.omega0 if isinstance(src, GaussianPulse) else src.i0
        return [(base, scenario.config)]
    return [
        (v, apply_sweep_value(scenario.config, scenario.sweep.parameter, v))
        for v in scenario.sweep.values
    ]


def _run_point(cfg: SimulationConfig) -> PropagationResult:
    return propagate(validate_config(cfg))


def _sim_config(cfg: SimulationConfig | ValidatedConfig) -> SimulationConfig:
    if isinstance(cfg, ValidatedConfig):
        return SimulationConfig(
            medium=cfg.medium,
            length_m=cfg.length_m,
            n_z=cfg.n_z,
            grid=cfg.grid,
            source=cfg.source,
            record_slices=cfg.record_slices,
        )
    return cfg


def calibrate_alpha0(
    target_transmission: float,
    cfg: SimulationConfig | ValidatedConfig,
    *,
    rel_tol: float = 0.01,
) -> float:
    """Bisect alpha0 until the scenario's energy transmission hits the target.

    The z resolution is raised automatically while bracketing so that
    alpha0*dz stays within the validation guard.  Raises
    :class:`ConfigError` for targets outside (0, 1) and
    :class:`NumericsError` when the target cannot be bracketed.
    """
    if not (0.0 < target_transmission < 1.0):
        raise ConfigError(
            f"target transmission must lie in (0, 1), got {target_transmission}"
        )
    base = _sim_config(cfg)

    def t_energy_at(alpha: float) -> float:
        n_z = max(base.n_z, int(math.ceil(alpha * base.length_m / 0.1)))
        trial = replace(base, medium=replace(base.medium, alpha0=alpha), n_z=n_z)
        result = propagate(validate_config(trial))
        return analysis.transmissions(result.output, result.input)[0]

    hi = max(-math.log(target_transmission) / base.length_m, 1e-6 / base.length_m)
    t_hi = t_energy_at(hi)
    expansions = 0
    while t_hi > target_transmission:
        hi *= 2.0
        expansions += 1
        if expansions > 60:
            raise NumericsError(
                f"target transmission {target_transmission} not bracketable: "
                f"still {t_hi:.3g} at alpha0 = {hi:.3g} 1/m"
            )
        t_hi = t_energy_at(hi)
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        t_mid = t_energy_at(mid)
        if abs(t_mid - target_transmission) <= rel_tol * target_transmission:
            return mid
        if t_mid > target_transmission:
            lo = mid
        else:
            hi = mid
    raise NumericsError("alpha0 bisection did not converge in 200 iterations")


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.12e}"


def emit_envelope_table(path: Path, result: PropagationResult,
                        include_populations: bool) -> None:
    """One row per time sample: tau_s, amp_in, amp_out[, rho_gg]."""
    header = "tau_s,amp_in,amp_out"
    columns = [result.input.grid.times, result.input.amp, result.output.amp]
    if include_populations and result.populations_out is not None:
        header += ",rho_gg"
        columns.append(result.populations_out)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def emit_observables(path: Path, rows: list[tuple]) -> None:
    header = "param,delay_s,v_g_mps,t_energy,t_peak,width_ratio,theta_rad"
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def emit_slice_table(path: Path, result: PropagationResult) -> None:
    """Wide table: tau_s plus one amplitude column per recorded depth."""
    zs = [0.0] + [z for z, _ in result.slices]
    envs = [result.input] + [env for _, env in result.slices] + [result.output]
    header = ["tau_s"] + [f"amp_z{z:.6e}" for z in zs] + ["amp_zL"]
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i, tau in enumerate(result.input.grid.times):
            row = [tau] + [env.amp[i] for env in envs]
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def emit_envelope_plot(path: Path, title: str,
                       labeled: list[tuple[str, PropagationResult]]) -> None:
    """Vector-graphic overlay of the input reference and the outputs."""
    from matplotlib.backends.backend_svg import FigureCanvasSVG
    from matplotlib.figure import Figure

    fig = Figure(figsize=(7.0, 4.5))
    FigureCanvasSVG(fig)
    ax = fig.add_subplot(111)
    ref = labeled[0][1].input
    ax.plot(ref.grid.times, ref.amp, color="black", lw=1.2, label="input (vacuum reference)")
    for label, result in labeled:
        ax.plot(result.output.grid.times, result.output.amp, lw=1.0, label=label)
    ax.set_xlabel("retarded time tau (s)")
    ax.set_ylabel("normalized amplitude")
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.savefig(path, metadata={"Date": None})


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def _preset_dir():
    return resources.files("slowlight") / "presets"


def preset_names() -> list[str]:
    return sorted(
        p.name[: -len(".cfg")] for p in _preset_dir().iterdir() if p.name.endswith(".cfg")
    )


def load_preset(name: str) -> Scenario:
    entry = _preset_dir() / f"{name}.cfg"
    if not entry.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        )
    return parse_scenario_text(entry.read_text(encoding="utf-8"), name)


def _resolve_scenario(arg: str) -> Scenario:
    """A scenario argument is a file path first, a bundled preset second."""
    path = Path(arg)
    if path.is_file():
        return parse_scenario(path)
    entry = _preset_dir() / f"{arg}.cfg"
    if entry.is_file():
        return load_preset(arg)
    raise ConfigError(
        f"scenario {arg!r} is neither a readable file nor a bundled preset "
        f"(available presets: {', '.join(preset_names())})"
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    points = sweep_points(scenario)
    # Fail fast on any invalid sweep point before doing real work.
    for _, cfg in points:
        validate_config(cfg)

    out_root = Path(args.out or os.environ.get(ENV_OUT_DIR, DEFAULT_OUT_DIR))
    out_dir = out_root / scenario.name
    out_dir.mkdir(parents=True, exist_ok=True)

    workers = args.workers or os.cpu_count() or 1
    configs = [cfg for _, cfg in points]
    if workers <= 1 or len(configs) == 1:
        results = [_run_point(cfg) for cfg in configs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
            results = list(pool.map(_run_point, configs))

    rows = []
    for (value, cfg), result in zip(points, results):
        rows.append(_observables_row(value, cfg, result))

    written = []
    if "observables" in scenario.artifacts:
        p = out_dir / "observables.csv"
        emit_observables(p, rows)
        written.append(p)
    if "envelopes" in scenario.artifacts:
        for k, result in enumerate(results):
            p = out_dir / f"envelopes_{k:03d}.csv"
            emit_envelope_table(p, result, "populations" in scenario.artifacts)
            written.append(p)
    if "slices" in scenario.artifacts:
        for k, result in enumerate(results):
            p = out_dir / f"slices_{k:03d}.csv"
            emit_slice_table(p, result)
            written.append(p)
    if args.plot:
        labels = [f"{scenario.sweep.parameter if scenario.sweep else 'value'} = {v:g}"
                  for v, _ in points]
        p = out_dir / "envelopes.svg"
        emit_envelope_plot(p, scenario.name, list(zip(labels, results)))
        written.append(p)

    if args.refine > 0:
        for k, (_, cfg) in enumerate(points):
            report = convergence_study(cfg, levels=args.refine + 2)
            p = out_dir / f"convergence_{k:03d}.csv"
            _emit_convergence(p, report)
            written.append(p)

    for p in written:
        print(f"wrote {p}")
    return 0


def _observables_row(value: float, cfg: SimulationConfig,
                     result: PropagationResult) -> tuple:
    if isinstance(cfg.source, ModulatedWave):
        discard = 10.0 / (2.0 * cfg.medium.gamma2)
        fit = analysis.modulation_phase(result.output, cfg.source, discard)
        t_energy, t_peak = analysis.transmissions(result.output, result.input)
        v_g = analysis.group_velocity(fit.delay_s, cfg.length_m)
        return (value, fit.delay_s, v_g, t_energy, t_peak, math.nan, fit.theta)
    obs = analysis.analyze_pulse(result, cfg.length_m)
    return (value, obs.delay_s, obs.v_g_mps, obs.t_energy, obs.t_peak,
            obs.width_ratio, math.nan)


def _emit_convergence(path: Path, report) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# order_delay = {report.order_delay:.6g}\n")
        fh.write(f"# order_t_energy = {report.order_t_energy:.6g}\n")
        fh.write(f"# richardson_delay_s = {_fmt(report.richardson_delay_s)}\n")
        fh.write(f"# richardson_t_energy = {_fmt(report.richardson_t_energy)}\n")
        fh.write(f"# monotone = {report.monotone}\n")
        fh.write("factor,dz_m,dt_s,delay_s,t_energy\n")
        for row in zip(report.factors, report.dz_m, report.dt_s,
                       report.delay_s, report.t_energy):
            fh.write(",".join([str(row[0])] + [_fmt(x) for x in row[1:]]) + "\n")


def _cmd_calibrate(args) -> int:
    scenario = _resolve_scenario(args.scenario)
    alpha0 = calibrate_alpha0(args.target, scenario.config)
    print(f"alpha0 = {_fmt(alpha0)}")
    return 0


def _cmd_presets(args) -> int:
    if args.action != "list":
        raise ConfigError(f"unknown presets action {args.action!r}")
    for name in preset_names():
        entry = _preset_dir() / f"{name}.cfg"
        first = entry.read_text(encoding="utf-8").splitlines()[0].lstrip("# ").strip()
        print(f"{name:24s} {first}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowlight",
        description="Pulse propagation through saturable and reverse-saturable absorbers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file or bundled preset")
    p_run.add_argument("scenario", help="path to a scenario file, or a preset name")
    p_run.add_argument("--out", default=None,
                       help=f"output directory (default: ${ENV_OUT_DIR} or {DEFAULT_OUT_DIR})")
    p_run.add_argument("--workers", type=int, default=None,
                       help="sweep worker processes (default: machine parallelism)")
    p_run.add_argument("--refine", type=int, default=0, metavar="K",
                       help="emit convergence reports with K extra grid-halving levels")
    p_run.add_argument("--plot", action="store_true",
                       help="also emit an SVG overlay of the envelopes")
    p_run.set_defaults(func=_cmd_run)

    p_cal = sub.add_parser("calibrate", help="bisect alpha0 to a target energy transmission")
    p_cal.add_argument("scenario", help="path to a scenario file, or a preset name")
    p_cal.add_argument("--target", type=float, required=True,
                       help="target energy transmission in (0, 1)")
    p_cal.set_defaults(func=_cmd_calibrate)

    p_pre = sub.add_parser("presets", help="inspect bundled presets")
    p_pre.add_argument("action", choices=["list"])
    p_pre.set_defaults(func=_cmd_presets)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def console_main() -> None:
    raise SystemExit(main())

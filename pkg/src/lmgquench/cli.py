"""Command line interface: config parsing, run orchestration, CSV/JSON export.

Modes
    trace       time series of echo, rate, rugosity densities, magnetization
    sweep       time-averaged order parameters over a range of h_f
    derivative  sweep plus finite-difference columns d<col>/dh_f
    predict     semiclassical critical predictors for the configured quench

A run is configured by flags, by a flat ``key=value`` config file, or both;
flags override file values and unknown keys are rejected.  The spin is passed
as the integer 2j everywhere so half-integer sectors stay exact.  Every run
writes one CSV data file plus a JSON metadata sidecar (full config echo,
Bohr-frequency info, version, wall clock); files are written to a temporary
name and renamed, so partial outputs are never left behind.  Numbers are
serialized with 17 significant digits, which round-trips float64 exactly, and
clipped samples appear as empty cells plus a mask column.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .spins import LmgParams, SpinSector, build_lmg_hamiltonian
from .spectral import ConvergenceError, diagonalize_gauge_fixed
from .diagnostics import (
    DEFAULT_N_SAMPLES,
    DEFAULT_T_FACTOR,
    NU_CONVENTIONS,
    NU_PER_POINT,
    RULE_DICKE_POLARIZED,
    RULE_GROUND_STATE,
    QuenchSpec,
    TimeGrid,
    averaging_time_grid,
    critical_predictions,
    finite_difference,
    loschmidt_trace,
    order_parameter_sweep,
)
from .texture import CLIP_FLOOR

MODES = ("trace", "sweep", "derivative", "predict")
RULE_AUTO = "auto"
CONFIG_RULES = (RULE_AUTO, RULE_GROUND_STATE, RULE_DICKE_POLARIZED)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration; message names the field."""


@dataclass(frozen=True)
class RunConfig:
    mode: str
    two_j: int
    h0: float = 0.0
    delta: float = 1.0
    hf: float | None = None
    hf_min: float = 0.0
    hf_max: float = 1.0
    hf_count: int = 101
    initial_state_rule: str = RULE_AUTO
    t_factor: float = DEFAULT_T_FACTOR
    n_samples: int = DEFAULT_N_SAMPLES
    t_max: float | None = None
    nu_convention: str = NU_PER_POINT
    clip_floor: float = CLIP_FLOOR
    workers: int = 1
    output: str | None = None

    def resolved_rule(self) -> str:
        if self.initial_state_rule != RULE_AUTO:
            return self.initial_state_rule
        return RULE_DICKE_POLARIZED if self.h0 == 0.0 else RULE_GROUND_STATE

    def output_path(self) -> Path:
        return Path(self.output if self.output is not None else f"{self.mode}.csv")

    def hf_values(self) -> list[float]:
        if self.hf_count == 1:
            return [self.hf_min]
        return np.linspace(self.hf_min, self.hf_max, self.hf_count).tolist()

    def to_config_text(self) -> str:
        """Flat key=value serialization; config_from_text inverts it exactly.

        Floats rely on repr round-tripping float64; None fields are omitted
        and fall back to their defaults on re-parse.
        """
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is not None:
                lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_INT_KEYS = {"two_j", "hf_count", "n_samples", "workers"}
_FLOAT_KEYS = {"h0", "delta", "hf", "hf_min", "hf_max", "t_factor", "t_max", "clip_floor"}
_STR_KEYS = {"mode", "initial_state_rule", "nu_convention", "output"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def parse_config_text(text: str) -> dict:
    """Parse flat key=value lines ('#' comments allowed); unknown keys rejected."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{key}: unknown configuration key")
        if key in values:
            raise ConfigError(f"{key}: duplicate key (line {lineno})")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            kind = "integer" if key in _INT_KEYS else "number"
            raise ConfigError(f"{key}: invalid {kind} {value!r}") from None
    return values


def _validate(config: RunConfig) -> RunConfig:
    if config.mode not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}, got {config.mode!r}")
    if not isinstance(config.two_j, int) or config.two_j < 1:
        raise ConfigError(f"two_j: must be a positive integer (2j), got {config.two_j!r}")
    if not (np.isfinite(config.h0) and config.h0 >= 0.0):
        raise ConfigError(f"h0: must be finite and >= 0, got {config.h0}")
    if not (np.isfinite(config.delta) and config.delta >= 0.0):
        raise ConfigError(f"delta: must be finite and >= 0, got {config.delta}")
    if config.hf is not None and not (np.isfinite(config.hf) and config.hf >= 0.0):
        raise ConfigError(f"hf: must be finite and >= 0, got {config.hf}")
    if config.mode == "trace" and config.hf is None:
        raise ConfigError("hf: required in trace mode")
    if config.mode in ("sweep", "derivative"):
        if config.hf_count < 1:
            raise ConfigError(f"hf_count: must be >= 1, got {config.hf_count}")
        if config.mode == "derivative" and config.hf_count < 3:
            raise ConfigError(f"hf_count: derivative mode needs >= 3 points, got {config.hf_count}")
        if not (config.hf_min >= 0.0 and config.hf_max >= config.hf_min):
            raise ConfigError(
                f"hf_range: need 0 <= min <= max, got [{config.hf_min}, {config.hf_max}]"
            )
    if config.initial_state_rule not in CONFIG_RULES:
        raise ConfigError(
            f"initial_state_rule: expected one of {CONFIG_RULES}, got {config.initial_state_rule!r}"
        )
    if config.t_factor <= 0:
        raise ConfigError(f"t_factor: must be positive, got {config.t_factor}")
    if config.n_samples < 2:
        raise ConfigError(f"n_samples: must be >= 2, got {config.n_samples}")
    if config.t_max is not None and config.t_max <= 0:
        raise ConfigError(f"t_max: must be positive, got {config.t_max}")
    if config.nu_convention not in NU_CONVENTIONS:
        raise ConfigError(
            f"nu_convention: expected one of {NU_CONVENTIONS}, got {config.nu_convention!r}"
        )
    if config.clip_floor <= 0.0:
        raise ConfigError(f"clip_floor: must be positive, got {config.clip_floor}")
    if config.workers < 1:
        raise ConfigError(f"workers: must be >= 1, got {config.workers}")
    return config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmgquench",
        description="Quench diagnostics for the LMG collective-spin model.",
    )
    parser.add_argument("mode_positional", nargs="?", choices=MODES, metavar="mode",
                        help="trace | sweep | derivative | predict")
    parser.add_argument("--mode", choices=MODES, help="run mode (alternative to the positional)")
    parser.add_argument("--config", metavar="FILE", help="flat key=value config file")
    parser.add_argument("--two-j", type=int, help="integer 2j (half-integer spins allowed)")
    parser.add_argument("--h0", type=float, help="pre-quench transverse field (default 0)")
    parser.add_argument("--hf", type=float, help="post-quench transverse field (trace/predict)")
    parser.add_argument("--hf-range", nargs=3, metavar=("MIN", "MAX", "COUNT"),
                        help="sweep range for h_f (default 0 1 101)")
    parser.add_argument("--delta", type=float, help="interaction strength (default 1)")
    parser.add_argument("--initial-state-rule", choices=CONFIG_RULES,
                        help="auto picks dicke-m-equals-j when h0=0, else ground-state")
    parser.add_argument("--t-factor", type=float,
                        help="averaging horizon T = t_factor / nu (default 1000)")
    parser.add_argument("--n-samples", type=int, help="time samples per trace (default 20000)")
    parser.add_argument("--t-max", type=float,
                        help="explicit trace horizon, overriding the T = t_factor/nu rule")
    parser.add_argument("--nu-convention", choices=NU_CONVENTIONS,
                        help="Bohr frequency per sweep point or global minimum (default per-point)")
    parser.add_argument("--clip-floor", type=float,
                        help="squared-overlap underflow floor (default 1e-280)")
    parser.add_argument("--workers", type=int, help="sweep worker processes (default 1)")
    parser.add_argument("--output", help="output CSV path (default <mode>.csv)")
    return parser


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Build a validated RunConfig from command-line flags and optional file."""
    args = _build_parser().parse_args(argv)
    file_values: dict = {}
    if args.config is not None:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config!r}: {exc}") from exc
        file_values = parse_config_text(text)

    flag_values: dict = {}
    mode = args.mode_positional or args.mode
    if mode is not None:
        flag_values["mode"] = mode
    simple = {
        "two_j": args.two_j, "h0": args.h0, "hf": args.hf, "delta": args.delta,
        "initial_state_rule": args.initial_state_rule, "t_factor": args.t_factor,
        "n_samples": args.n_samples, "t_max": args.t_max,
        "nu_convention": args.nu_convention, "clip_floor": args.clip_floor,
        "workers": args.workers, "output": args.output,
    }
    flag_values.update({k: v for k, v in simple.items() if v is not None})
    if args.hf_range is not None:
        lo, hi, count = args.hf_range
        try:
            flag_values["hf_min"] = float(lo)
            flag_values["hf_max"] = float(hi)
            flag_values["hf_count"] = int(count)
        except ValueError:
            raise ConfigError(f"hf_range: invalid values {args.hf_range!r}") from None

    merged = {**file_values, **flag_values}
    if "mode" not in merged:
        raise ConfigError("mode: required (positional, --mode, or config file)")
    if "two_j" not in merged:
        raise ConfigError("two_j: required")
    try:
        config = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc
    return _validate(config)


def config_from_text(text: str) -> RunConfig:
    """RunConfig from config-file text alone (round-trips to_config_text)."""
    values = parse_config_text(text)
    if "mode" not in values:
        raise ConfigError("mode: required")
    if "two_j" not in values:
        raise ConfigError("two_j: required")
    try:
        config = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc
    return _validate(config)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _csv_text(columns: list[str], rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _metadata_path(path: Path) -> Path:
    return path.with_suffix(".meta.json") if path.suffix == ".csv" else Path(str(path) + ".meta.json")


def _run_trace(config: RunConfig) -> tuple[list[str], list[list[str]], dict]:
    sector = SpinSector(config.two_j)
    spec = QuenchSpec(
        sector,
        LmgParams(config.h0, config.delta),
        LmgParams(config.hf, config.delta),
        initial_state_rule=config.resolved_rule(),
    )
    if config.t_max is not None:
        grid = TimeGrid(config.t_max, config.n_samples)
    else:
        decomposition = diagonalize_gauge_fixed(build_lmg_hamiltonian(sector, spec.post), sector)
        grid, _ = averaging_time_grid(decomposition, config.t_factor, config.n_samples)
    trace = loschmidt_trace(spec, grid, clip_floor=config.clip_floor)
    n = sector.n_particles
    columns = ["t", "echo", "rate", "rugosity_prequench_density",
               "rugosity_fourier_density", "magnetization", "clipped"]
    rows = []
    for i in range(grid.times.size):
        rows.append([
            _fmt(trace.times[i]),
            _fmt(trace.echo[i]),
            "" if trace.rate_clipped[i] else _fmt(trace.rate[i]),
            "" if trace.prequench_clipped[i] else _fmt(trace.rugosity_prequench[i] / n),
            "" if trace.fourier_clipped[i] else _fmt(trace.rugosity_fourier[i] / n),
            _fmt(trace.magnetization[i]),
            "1" if trace.clipped[i] else "0",
        ])
    meta = {"nu": trace.nu, "t_max": grid.t_max}
    return columns, rows, meta


def _run_sweep(config: RunConfig, with_derivative: bool) -> tuple[list[str], list[list[str]], dict]:
    sector = SpinSector(config.two_j)
    points = order_parameter_sweep(
        sector,
        LmgParams(config.h0, config.delta),
        config.hf_values(),
        rule=config.resolved_rule(),
        t_factor=config.t_factor,
        n_samples=config.n_samples,
        nu_convention=config.nu_convention,
        clip_floor=config.clip_floor,
        workers=config.workers,
    )
    columns = ["h_f", "avg_magnetization", "avg_rugosity_prequench", "nu_used",
               "clipped", "status"]
    derivatives: dict[str, np.ndarray] = {}
    if with_derivative:
        failed = [p.h_f for p in points if p.error is not None]
        if failed:
            raise ValueError(f"cannot differentiate: sweep failed at h_f={failed}")
        h_f = np.array([p.h_f for p in points])
        for name in ("avg_magnetization", "avg_rugosity_prequench"):
            values = np.array([getattr(p, name) for p in points])
            derivatives[name] = finite_difference(h_f, values)
        columns = columns + ["d_avg_magnetization_dhf", "d_avg_rugosity_prequench_dhf"]
    rows = []
    for i, p in enumerate(points):
        if p.error is not None:
            row = [_fmt(p.h_f), "", "", "", "0", p.error]
        else:
            row = [
                _fmt(p.h_f),
                _fmt(p.avg_magnetization),
                _fmt(p.avg_rugosity_prequench),
                _fmt(p.nu),
                "1" if p.any_clipped else "0",
                "ok",
            ]
        if with_derivative:
            row += [_fmt(derivatives["avg_magnetization"][i]),
                    _fmt(derivatives["avg_rugosity_prequench"][i])]
        rows.append(row)
    nus = [p.nu for p in points if p.nu is not None]
    meta = {
        "nu_convention": config.nu_convention,
        "nu_global_min": min(nus) if nus else None,
        "failed_points": sum(1 for p in points if p.error is not None),
    }
    return columns, rows, meta


def _run_predict(config: RunConfig) -> tuple[list[str], list[list[str]], dict]:
    h_f = config.hf
    if h_f is None:
        # default to evaluating at the predicted critical quench itself
        h_f = critical_predictions(config.h0, 0.0, config.delta).h_f_dqpt
    predictions = critical_predictions(config.h0, h_f, config.delta)
    columns = ["h_0", "h_f", "delta", "h_c_qpt", "e_c_esqpt_per_j",
               "e_injected_per_j", "h_f_dqpt", "esqpt_consistency_gap"]
    rows = [[
        _fmt(config.h0), _fmt(h_f), _fmt(config.delta),
        _fmt(predictions.h_c_qpt), _fmt(predictions.e_c_esqpt_per_j),
        _fmt(predictions.e_injected_per_j), _fmt(predictions.h_f_dqpt),
        _fmt(predictions.esqpt_consistency_gap()),
    ]]
    return columns, rows, {"nu": None}


def run(config: RunConfig) -> Path:
    """Execute a validated config; writes CSV + metadata, returns the CSV path."""
    started = time.perf_counter()
    if config.mode == "trace":
        columns, rows, extra = _run_trace(config)
    elif config.mode == "sweep":
        columns, rows, extra = _run_sweep(config, with_derivative=False)
    elif config.mode == "derivative":
        columns, rows, extra = _run_sweep(config, with_derivative=True)
    elif config.mode == "predict":
        columns, rows, extra = _run_predict(config)
    else:
        raise ConfigError(f"mode: unknown mode {config.mode!r}")

    path = config.output_path()
    metadata = {
        "version": __version__,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.perf_counter() - started, 6),
        "config": dataclasses.asdict(config),
        "resolved_initial_state_rule": config.resolved_rule(),
        **extra,
    }
    _atomic_write(path, _csv_text(columns, rows))
    _atomic_write(_metadata_path(path), json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return path


def main(argv: Sequence[str] | None = None) -> int:
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    try:
        path = run(config)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, ValueError, ArithmeticError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: numerical: {message}", file=sys.stderr)
        return 3
    print(f"wrote {path} and {_metadata_path(path)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner: config parsing, experiment orchestration and CSV/JSON output.

Configuration is a flat ``key = value`` file with ``#`` comments. Keys are the
:class:`NetworkParams` field names plus the run keys listed in ``RUN_KEYS``.
Command-line flags override file values. SINR thresholds are given in dB and
exposure thresholds in mW/m² (downlink) or mW/kg (uplink); both are converted
to linear SI units once, here.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import compliance as cmp
from . import downlink as dl
from . import simulator as sim
from . import uplink as ul
from .model import PRESETS, Conditioning, NetworkParams, ParameterError
from .numerics import NumericalFailure

COMMANDS = ("coverage-dl", "compliance-dl", "joint-dl", "coverage-ul", "compliance-ul", "joint-ul",
            "cd", "mean-emfe", "simulate", "validate")
MARGINAL_HEADER = ("threshold", "analytic", "empirical", "ci_low", "ci_high", "metric", "direction")
JOINT_HEADER = ("gamma", "omega", "analytic", "empirical", "ci_low", "ci_high")
CD_HEADER = ("kind", "t_br", "exact", "closed_form")
MEAN_HEADER = ("quantity", "analytic", "empirical", "ci_low", "ci_high")
CURVES = ("coverage-dl", "compliance-dl", "joint-dl", "coverage-ul", "compliance-ul", "joint-ul")

PARAM_FIELDS = {f.name: f for f in dataclasses.fields(NetworkParams)}
_INT_PARAMS = {"N_b", "N_r", "m_L", "m_N"}

# Default grids in CLI units (dB, mW/m², mW/kg).
DEFAULT_GRIDS = {
    "coverage-dl": {"gamma_db": tuple(float(x) for x in range(-10, 21))},
    "coverage-ul": {"gamma_db": tuple(float(x) for x in range(-20, 11))},
    "compliance-dl": {"omega": tuple(np.round(np.linspace(0.1, 2.0, 39), 10))},
    "compliance-ul": {"omega": tuple(np.round(np.linspace(0.05, 1.1, 43), 10))},
    "joint-dl": {"gamma_db": (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0), "omega": (0.2, 0.4, 0.6, 0.8, 1.0, 1.5)},
    "joint-ul": {"gamma_db": (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0), "omega": (0.1, 0.2, 0.3, 0.4, 0.6, 1.0)},
}

RUN_KEYS = ("command", "preset", "conditioning", "t_bu", "gamma_db", "omega", "sweep", "out", "format",
            "seed", "trials", "tolerance", "joint_tolerance", "window_radius", "workers", "t_br",
            "coverage_method")


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully validated run description.

    Attributes:
        command: one of ``COMMANDS``.
        params: network parameters.
        conditioning: fixed or random serving-BS distance.
        gamma_db: SINR grid in dB (marginal coverage and joint commands).
        omega: exposure grid in mW/m² or mW/kg (compliance and joint commands).
        sweep: optional (parameter name, values) pair.
        out: output path; multi-table commands derive sibling file names.
        fmt: ``csv`` or ``json``.
        seed: master seed of the simulator.
        trials: simulator trials; 0 means analytic only where allowed.
        tolerance: sup-distance tolerance for marginal curves (validate).
        joint_tolerance: sup-distance tolerance for joint surfaces (validate).
        window_radius: simulation window radius, m.
        workers: simulator processes.
        t_br: BS-RIS distance of the conditional RIS compliance distance, m.
        coverage_method: ``alzer`` or ``exact`` for analytic DL coverage.
    """

    command: str
    params: NetworkParams = field(default_factory=NetworkParams)
    conditioning: Conditioning = field(default_factory=Conditioning)
    gamma_db: tuple = ()
    omega: tuple = ()
    sweep: Optional[tuple] = None
    out: str = ""
    fmt: str = "csv"
    seed: int = 0
    trials: int = 0
    tolerance: float = 0.02
    joint_tolerance: float = 0.03
    window_radius: float = sim.WINDOW_RADIUS
    workers: int = 1
    t_br: float = 50.0
    coverage_method: str = "alzer"

    def __post_init__(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        for name in ("gamma_db", "omega"):
            grid = getattr(self, name)
            if name in DEFAULT_GRIDS.get(self.command, {}) and not grid:
                raise ConfigError(f"{name}: grid must not be empty")
            if any(not math.isfinite(v) for v in grid):
                raise ConfigError(f"{name}: grid values must be finite")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ConfigError(f"{name}: grid must be strictly increasing")
        if any(v <= 0 for v in self.omega):
            raise ConfigError("omega: exposure thresholds must be positive")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"format: must be csv or json, got {self.fmt!r}")
        if self.trials < 0:
            raise ConfigError("trials: must be non-negative")
        if self.command in ("simulate", "validate") and self.trials < 1:
            raise ConfigError(f"trials: {self.command} needs at least one trial")
        if not (self.tolerance > 0 and self.joint_tolerance > 0):
            raise ConfigError("tolerance: must be positive")
        if not self.window_radius > 0:
            raise ConfigError("window_radius: must be positive")
        if self.workers < 1:
            raise ConfigError("workers: must be at least 1")
        if not self.t_br > 0:
            raise ConfigError("t_br: must be positive")
        if self.coverage_method not in ("alzer", "exact"):
            raise ConfigError(f"coverage_method: must be alzer or exact, got {self.coverage_method!r}")
        if self.sweep is not None:
            key, values = self.sweep
            if key not in PARAM_FIELDS and key != "t_bu":
                raise ConfigError(f"sweep: {key!r} is not a sweepable parameter")
            if not values:
                raise ConfigError("sweep: needs at least one value")


# ------------------------------------------------------------------ parsing
def _parse_number(key: str, text: str):
    text = text.strip()
    try:
        if key in _INT_PARAMS or key in ("seed", "trials", "workers"):
            if text.lstrip("+-").isdigit():
                return int(text)
            value = float(text)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if key == "bs_gain" and text.lower() in ("none", ""):
            return None
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as a number") from None


def parse_grid(key: str, text: str) -> tuple:
    """Grid from ``a, b, c`` or the inclusive range ``start:stop:step``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"{key}: range must read start:stop:step")
        start, stop, step = (_parse_number(key, p) for p in parts)
        if not step > 0 or stop < start:
            raise ConfigError(f"{key}: range needs step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(float(np.round(start + k * step, 12)) for k in range(n))
    values = [v for v in (s.strip() for s in text.split(",")) if v]
    return tuple(float(_parse_number(key, v)) for v in values)


def parse_sweep(text: str) -> tuple:
    """``KEY=v1,v2,...`` to (key, values)."""
    if "=" not in text:
        raise ConfigError(f"sweep: expected KEY=v1,v2,..., got {text!r}")
    key, values = (s.strip() for s in text.split("=", 1))
    if key not in PARAM_FIELDS and key != "t_bu":
        raise ConfigError(f"sweep: {key!r} is not a sweepable parameter")
    return key, tuple(_parse_number(key, v) for v in values.split(",") if v.strip())


def _read_lines(text: str) -> dict:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key not in PARAM_FIELDS and key not in RUN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = (value, lineno)
    return entries


def parse_config(text: str, overrides: Optional[dict] = None) -> ExperimentSpec:
    """Parse a config file, apply flag overrides and validate.

    Args:
        text: file contents in the flat ``key = value`` format.
        overrides: string values from command-line flags, keyed like the file.

    Raises:
        ConfigError: on syntax errors (with the line number), unknown keys or
            invalid values (naming the key).
    """
    parsed = _read_lines(text)
    entries = {k: v for k, (v, _) in parsed.items()}
    lines = {k: n for k, (_, n) in parsed.items()}
    for key, value in (overrides or {}).items():
        if value is not None:
            entries[key] = str(value)
            lines.pop(key, None)

    def where(key: Optional[str]) -> str:
        return f"line {lines[key]}: " if key in lines else ""

    if "command" not in entries:
        raise ConfigError("command: no command given (use --command or a 'command =' line)")
    command = entries["command"]
    param_values = {}
    for key in PARAM_FIELDS:
        if key in entries:
            try:
                param_values[key] = _parse_number(key, entries[key])
            except ConfigError as exc:
                raise ConfigError(where(key) + str(exc)) from None
    name = entries.get("preset", "default")
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    try:
        params = NetworkParams(**{**PRESETS[name], **param_values})
    except ParameterError as exc:
        bad = next((k for k in param_values if k in str(exc)), None)
        raise ConfigError(f"{where(bad) if bad else ''}{exc}") from None

    mode = entries.get("conditioning", "fixed")
    t_bu = float(_parse_number("t_bu", entries["t_bu"])) if "t_bu" in entries else 100.0
    try:
        conditioning = Conditioning(mode, t_bu)
    except ParameterError as exc:
        raise ConfigError(f"conditioning: {exc}") from None

    grids = DEFAULT_GRIDS.get(command, {})
    kw = {}
    for key in ("gamma_db", "omega"):
        kw[key] = parse_grid(key, entries[key]) if key in entries else grids.get(key, ())
    if "sweep" in entries:
        kw["sweep"] = parse_sweep(entries["sweep"])
    out = entries.get("out", "")
    fmt = entries.get("format", "json" if out.endswith(".json") else "csv")
    default_trials = 100_000 if command in ("simulate", "validate") else 0
    try:
        return ExperimentSpec(
            command=command, params=params, conditioning=conditioning, out=out or f"{command}.{fmt}",
            fmt=fmt, seed=_parse_number("seed", entries.get("seed", "0")),
            trials=_parse_number("trials", entries.get("trials", str(default_trials))),
            tolerance=float(_parse_number("tolerance", entries.get("tolerance", "0.02"))),
            joint_tolerance=float(_parse_number("joint_tolerance", entries.get("joint_tolerance", "0.03"))),
            window_radius=float(_parse_number("window_radius",
                                              entries.get("window_radius", str(sim.WINDOW_RADIUS)))),
            workers=_parse_number("workers", entries.get("workers", "1")),
            t_br=float(_parse_number("t_br", entries.get("t_br", "50"))),
            coverage_method=entries.get("coverage_method", "alzer"), **kw)
    except ConfigError as exc:
        key = str(exc).split(":", 1)[0]
        raise ConfigError(where(key) + str(exc)) from None


# ------------------------------------------------------------------- output
@dataclass
class Table:
    """One output table: file suffix, header and rows."""

    suffix: str
    header: tuple
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        writer.writerows([_cell(v) for v in row] for row in self.rows)
        return buf.getvalue()

    def to_json(self) -> str:
        records = [{h: (None if v is None else v) for h, v in zip(self.header, row)} for row in self.rows]
        return json.dumps(records, indent=1)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_csv(path: str | os.PathLike) -> tuple[tuple, list]:
    """Read a table written by this module; numeric fields come back as floats."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = []
        for row in reader:
            parsed = []
            for v in row:
                try:
                    parsed.append(float(v) if v != "" else None)
                except ValueError:
                    parsed.append(v)
            rows.append(parsed)
    return header, rows


def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _target(out: str, fmt: str, suffix: str) -> Path:
    base = Path(out)
    stem = base.name[: -len(base.suffix)] if base.suffix else base.name
    name = f"{stem}{suffix}.{fmt}"
    return base.with_name(name)


# --------------------------------------------------------------- commands
def _lin(db: Sequence[float]) -> np.ndarray:
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def _marginal_rows(thresholds, analytic, empirical, metric: str, direction: str) -> list:
    rows = []
    for k, x in enumerate(thresholds):
        a = None if analytic is None else float(analytic[k])
        if empirical is None:
            e = lo = hi = None
        else:
            e, lo, hi = float(empirical.values[k]), float(empirical.ci[0][k]), float(empirical.ci[1][k])
        rows.append([float(x), a, e, lo, hi, metric, direction])
    return rows


def _joint_rows(gamma_db, omega, analytic, empirical) -> list:
    rows = []
    for i, g in enumerate(gamma_db):
        for j, w in enumerate(omega):
            k = i * len(omega) + j
            a = None if analytic is None else float(analytic[i, j])
            if empirical is None:
                e = lo = hi = None
            else:
                e, lo, hi = float(empirical.values[k]), float(empirical.ci[0][k]), float(empirical.ci[1][k])
            rows.append([float(g), float(w), a, e, lo, hi])
    return rows


def _analytic(curve: str, spec: ExperimentSpec, params: NetworkParams, gamma_db, omega):
    c = spec.conditioning
    if curve == "coverage-dl":
        return dl.coverage_dl(_lin(gamma_db), params, c, method=spec.coverage_method)
    if curve == "compliance-dl":
        return dl.compliance_dl(np.asarray(omega) * 1e-3, params, c)
    if curve == "joint-dl":
        return dl.joint_dl(_lin(gamma_db), np.asarray(omega) * 1e-3, params, c)
    if curve == "coverage-ul":
        return ul.coverage_ul(_lin(gamma_db), params, c)
    if curve == "compliance-ul":
        return ul.compliance_ul(np.asarray(omega) * 1e-3, params, c)
    return ul.joint_ul(_lin(gamma_db), np.asarray(omega) * 1e-3, params, c)


def _empirical(curve: str, res: sim.SimulationResult, gamma_db, omega):
    direction = "downlink" if curve.endswith("dl") else "uplink"
    sinr = res.sinr_dl if direction == "downlink" else res.sinr_ul
    expo = res.emfe_dl if direction == "downlink" else res.emfe_ul
    if curve.startswith("coverage"):
        return sim.empirical_curve(sinr, _lin(gamma_db), "coverage", direction)
    if curve.startswith("compliance"):
        return sim.empirical_curve(expo, np.asarray(omega) * 1e-3, "compliance", direction)
    return sim.empirical_joint(sinr, expo, _lin(gamma_db), np.asarray(omega) * 1e-3, direction)


def _curve_table(curve: str, gamma_db, omega, analytic, empirical, suffix: str = "") -> Table:
    direction = "downlink" if curve.endswith("dl") else "uplink"
    if curve.startswith("joint"):
        return Table(suffix, JOINT_HEADER, _joint_rows(gamma_db, omega, analytic, empirical))
    metric = "coverage" if curve.startswith("coverage") else "compliance"
    grid = gamma_db if metric == "coverage" else omega
    return Table(suffix, MARGINAL_HEADER, _marginal_rows(grid, analytic, empirical, metric, direction))


def _grids_for(curve: str, spec: ExperimentSpec) -> tuple:
    if spec.command == curve:
        return spec.gamma_db, spec.omega
    d = DEFAULT_GRIDS[curve]
    return d.get("gamma_db", ()), d.get("omega", ())


def _simulate(spec: ExperimentSpec, params: NetworkParams, uplink: bool = True) -> sim.SimulationResult:
    return sim.simulate(params, spec.trials, spec.seed, spec.conditioning, spec.window_radius,
                        uplink=uplink, workers=spec.workers)


def _sup_distance(analytic, empirical) -> float:
    a = np.asarray(analytic, dtype=float).reshape(-1)
    return float(np.max(np.abs(a - np.asarray(empirical.values, dtype=float))))


def _run_point(spec: ExperimentSpec, params: NetworkParams, suffix: str) -> tuple[list, dict]:
    """Tables and a summary for one parameter point."""
    cmd = spec.command
    if cmd in CURVES:
        g, w = _grids_for(cmd, spec)
        analytic = _analytic(cmd, spec, params, g, w)
        empirical = None
        if spec.trials > 0:
            res = _simulate(spec, params, uplink=cmd.endswith("ul"))
            empirical = _empirical(cmd, res, g, w)
        table = _curve_table(cmd, g, w, analytic, empirical, suffix)
        return [table], {"analytic": np.asarray(analytic).tolist()}
    if cmd == "cd":
        rows = [[r["kind"], r["t_br"], float(r["exact"]), float(r["closed_form"])]
                for r in cmp.cd_table(params, spec.t_br)]
        return [Table(suffix, CD_HEADER, rows)], {"rows": rows}
    if cmd == "mean-emfe":
        e1, e2 = dl.mean_emfe_dl(params, spec.conditioning)
        e_ul = ul.mean_emfe_ul(params, spec.conditioning)
        emp = {}
        if spec.trials > 0:
            res = _simulate(spec, params)
            for key, x in (("dl_total", res.emfe_dl), ("ul_total", res.emfe_ul)):
                half = 1.96 * float(np.std(x, ddof=1)) / math.sqrt(x.size) if x.size > 1 else math.nan
                emp[key] = (float(np.mean(x)), float(np.mean(x)) - half, float(np.mean(x)) + half)
        rows = [["dl_serving", e1, None, None, None], ["dl_interference", e2, None, None, None]]
        for key, val in (("dl_total", e1 + e2), ("ul_total", e_ul)):
            rows.append([key, val, *emp.get(key, (None, None, None))])
        return [Table(suffix, MEAN_HEADER, rows)], {"rows": rows}
    # simulate / validate: all six curves from one simulation run
    res = _simulate(spec, params)
    tables, report = [], {}
    for curve in CURVES:
        g, w = _grids_for(curve, spec)
        empirical = _empirical(curve, res, g, w)
        analytic = _analytic(curve, spec, params, g, w) if cmd == "validate" else None
        tables.append(_curve_table(curve, g, w, analytic, empirical, f"{suffix}-{curve}"))
        if analytic is not None:
            tol = spec.joint_tolerance if curve.startswith("joint") else spec.tolerance
            dist = _sup_distance(analytic, empirical)
            report[curve] = {"sup_distance": dist, "tolerance": tol, "pass": dist <= tol}
    return tables, report


def run(spec: ExperimentSpec, stdout=None) -> int:
    """Execute ``spec``, write its artifacts and return the exit status.

    Exit status: 0 on success, 1 if a ``validate`` tolerance is exceeded,
    2 on a numerical failure.
    """
    stdout = stdout or sys.stdout
    points = [("", spec.params, spec)]
    if spec.sweep is not None:
        key, values = spec.sweep
        points = []
        for v in values:
            if key == "t_bu":
                sub = dataclasses.replace(spec, conditioning=Conditioning("fixed", float(v)))
                params = spec.params
            else:
                try:
                    params = spec.params.replace(**{key: v})
                except ParameterError as exc:
                    raise ConfigError(f"sweep: {exc}") from None
                sub = spec
            points.append((f"_{key}-{v}", params, sub))

    status = 0
    tables, report, summary = [], {}, []
    for suffix, params, sub in points:
        try:
            t, info = _run_point(sub, params, suffix)
        except NumericalFailure as exc:
            point = spec.sweep[0] + "=" + suffix.split("-", 1)[-1] if spec.sweep else "base parameters"
            print(f"numerical failure in command {spec.command} at {point}: {exc}", file=sys.stderr)
            return 2
        tables.extend(t)
        if spec.command == "validate":
            report[suffix or "base"] = info
            if not all(v["pass"] for v in info.values()):
                status = 1
        elif spec.sweep is not None:
            summary.append((suffix, info))

    for table in tables:
        text = table.to_json() if spec.fmt == "json" else table.to_csv()
        write_atomic(_target(spec.out, spec.fmt, table.suffix), text)
    if spec.command == "validate":
        write_atomic(_target(spec.out, "json", "-report"), json.dumps(report, indent=1))
        for point, metrics in report.items():
            for curve, r in metrics.items():
                flag = "PASS" if r["pass"] else "FAIL"
                print(f"{flag} {point} {curve}: sup-distance {r['sup_distance']:.4f} "
                      f"(tolerance {r['tolerance']})", file=stdout)
    if spec.sweep is not None and spec.command in CURVES:
        # one representative number per sweep value: the mean over the grid
        best = None
        for suffix, info in summary:
            value = float(np.mean(info["analytic"]))
            print(f"{suffix.lstrip('_')}: mean analytic probability {value:.6f}", file=stdout)
            if best is None or value > best[1]:
                best = (suffix.lstrip("_"), value)
        print(f"maximum at {best[0]}", file=stdout)
    return status


# ---------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risemf", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--out", help="output path (multi-table commands derive sibling names)")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, help="simulation trials")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--sweep", help="KEY=v1,v2,...")
    p.add_argument("--tolerance", type=float, help="sup-distance tolerance for marginal curves")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
    overrides = {"command": args.command, "out": args.out, "seed": args.seed, "trials": args.trials,
                 "preset": args.preset, "sweep": args.sweep, "tolerance": args.tolerance}
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        spec = parse_config(text, overrides)
        return run(spec)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

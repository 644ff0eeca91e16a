"""Command-line front end.

    deltamix SUBCOMMAND [--config PATH] [--out PATH] [--format csv|json]
                        [--tolerance FLOAT] [--dump-config]

Exit codes: 0 success, 2 configuration error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

from . import __version__
from .lindblad import (
    DegeneracyError,
    NonStationaryError,
    OracleControls,
    SingularResponseError,
    time_domain_oracle,
)
from .model import (
    DEFAULT_SPLITTING,
    ConfigError,
    DriveSpec,
    ProbeSpec,
    RatioSet,
    circuit_from_ratios,
    decay_rates,
    derive_frame,
    process_info,
    steady_state,
)
from .response import ResponseResult, reduced_forms
from .sweeps import (
    INPUT_NAMES,
    SweepAxis,
    SweepPlan,
    SweepRow,
    SweepTable,
    Table2Report,
    evaluate_point,
    figure_data,
    find_extremum,
    reduced_inputs,
    resolve_inputs,
    run_sweep,
    table2_report,
)

COMMANDS = ("gain", "efficiency", "sweep", "optimum", "table2", "verify", "figures")
EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3
NORMALIZATION = "units: hbar = 1, M^2/(hbar Z_T) = 1, lambda21 = 1; rates and frequencies in gamma_u"
RESPONSE_COLUMNS = ("Re_G", "Im_G", "abs_G", "Re_eta", "Im_eta", "abs_eta")
LINEAR_TOLERANCE = 1e-9
RATIO_NAMES = {"lambda1", "lambda2", "lambda3", "lambda2*y", "lambda3*y", "lambda2/y", "lambda3/y"}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class AxisConfig:
    name: str
    start: float
    stop: float
    num: int = 101
    scale: str = "log"

    def axis(self) -> SweepAxis:
        return SweepAxis(self.name, self.start, self.stop, self.num, self.scale)


@dataclass(frozen=True)
class OracleConfig:
    amplitude_ratio: float = 1e-3
    transient: Optional[float] = None
    window: Optional[float] = None
    rwa: bool = True


@dataclass(frozen=True)
class OptimumConfig:
    quantity: str = "eta"
    sense: str = "max"
    variables: Tuple[AxisConfig, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation needs; parsed from a JSON object."""

    command: str = "gain"
    driving_type: int = 1
    probe_type: int = 1
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    lambda3: Optional[float] = None
    y: Optional[float] = None
    detuning: Optional[float] = None
    rabi: Optional[float] = None
    splitting: float = DEFAULT_SPLITTING
    branch: int = 1
    offset: float = 0.0
    phase: float = 0.0
    amplitude: float = 0.0
    model: str = "general"
    sweep: Tuple[AxisConfig, ...] = ()
    optimum: OptimumConfig = field(default_factory=OptimumConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    figures: Tuple[int, ...] = (3, 4, 5, 6, 7, 8)
    out: Optional[str] = None
    format: Optional[str] = None
    tolerance: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep"] = [dict(a) for a in d["sweep"]]
        d["optimum"]["variables"] = [dict(a) for a in d["optimum"]["variables"]]
        d["figures"] = list(d["figures"])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        try:
            cfg = cls._build(data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def _build(cls, data: dict) -> "RunConfig":
        _reject_unknown(data, cls, "config")
        kw = dict(data)
        if "sweep" in kw:
            kw["sweep"] = tuple(_axis(a, "sweep axis") for a in kw["sweep"])
        if "optimum" in kw:
            o = dict(kw["optimum"])
            _reject_unknown(o, OptimumConfig, "optimum")
            o["variables"] = tuple(_axis(a, "optimum variable") for a in o.get("variables", ()))
            kw["optimum"] = OptimumConfig(**o)
        if "oracle" in kw:
            _reject_unknown(kw["oracle"], OracleConfig, "oracle")
            kw["oracle"] = OracleConfig(**kw["oracle"])
            if not kw["oracle"].amplitude_ratio > 0:
                raise ConfigError("oracle amplitude_ratio must be positive")
        if "figures" in kw:
            kw["figures"] = tuple(int(f) for f in kw["figures"])
        for name, conv in _COERCE.items():
            if kw.get(name) is not None:
                kw[name] = conv(kw[name])
        return cls(**kw)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.command in ("table2", "figures"):
            return
        process_info(self.driving_type, self.probe_type)
        has_y = self.y is not None
        has_drive = self.detuning is not None or self.rabi is not None
        if has_y and has_drive:
            raise ConfigError("give either y or (detuning, rabi), not both")
        if has_drive and (self.detuning is None or self.rabi is None):
            raise ConfigError("detuning and rabi must be given together")
        swept = {a.name for a in self.sweep} | {a.name for a in self.optimum.variables}
        if not (has_y or has_drive or "y" in swept):
            raise ConfigError("one of y or (detuning, rabi) is required")
        given = {k: getattr(self, k) for k in ("lambda1", "lambda2", "lambda3") if getattr(self, k) is not None}
        if len(given) == 3:
            RatioSet.from_any(**given)  # enforces lambda1 * lambda3 = lambda2
        if self.model not in ("general", "reduced"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.format not in (None, "csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.command == "sweep" and not self.sweep:
            raise ConfigError("sweep needs at least one axis")
        if self.command == "optimum":
            o = self.optimum
            if o.quantity not in ("G", "eta") or o.sense not in ("max", "min"):
                raise ConfigError("optimum needs quantity G|eta and sense max|min")
            if len(o.variables) not in (1, 2):
                raise ConfigError("optimum needs one or two variables")

    # point inputs ---------------------------------------------------------

    def point_params(self, swept: Sequence[str] = ()) -> Dict[str, float]:
        """Fixed point inputs; ratios default to lambda1 = lambda2 = 1 when none are given."""
        p: Dict[str, float] = {}
        for k in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, k) is not None and k not in swept:
                p[k] = getattr(self, k)
        if not p and not set(swept) & RATIO_NAMES:
            p = {"lambda1": 1.0, "lambda2": 1.0}
        if "y" not in swept:
            if self.y is not None:
                p["y"] = self.y
            elif self.detuning is not None:
                p["y"] = _y_from_drive(self.detuning, self.rabi)
        return p

    @property
    def effective_splitting(self) -> float:
        if self.detuning is not None:
            return math.hypot(2 * self.rabi, self.detuning)
        return self.splitting


_COERCE = {
    "command": str, "driving_type": int, "probe_type": int, "branch": int, "model": str,
    **{k: float for k in ("lambda1", "lambda2", "lambda3", "y", "detuning", "rabi", "splitting", "offset",
                          "phase", "amplitude", "tolerance")},
}


def _reject_unknown(data: dict, cls, where: str) -> None:
    names = {f.name for f in fields(cls)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"unknown {where} keys: {sorted(extra)}")


def _axis(a, where: str) -> AxisConfig:
    if not isinstance(a, dict):
        raise ConfigError(f"{where} must be an object")
    _reject_unknown(a, AxisConfig, where)
    try:
        cfg = AxisConfig(str(a["name"]), float(a["start"]), float(a["stop"]), int(a.get("num", 101)),
                         str(a.get("scale", "log")))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc!r}") from None
    cfg.axis()  # validates
    return cfg


def _y_from_drive(detuning: float, rabi: float) -> float:
    if rabi < 0:
        raise ConfigError("rabi must be non-negative")
    s = math.hypot(2 * rabi, detuning)
    if s == 0:
        raise ConfigError("Omega = Delta = 0: frame undefined")
    return math.inf if s + detuning == 0 else (s - detuning) / (s + detuning)


def load_config(path: Optional[str], command: str) -> RunConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if "command" in data and data["command"] != command:
        raise ConfigError(f"config is for {data['command']!r}, not {command!r}")
    data = dict(data, command=command)
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# writers


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _cx(z: complex) -> dict:
    return {"re": z.real, "im": z.imag, "abs": abs(z)}


def sweep_csv(table: SweepTable, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in (NORMALIZATION, *header):
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(table.input_names) + list(RESPONSE_COLUMNS))
    for r in table.rows:
        g, e = r.gain, r.efficiency
        w.writerow([fmt(v) for v in r.inputs] + [fmt(x) for x in (g.real, g.imag, abs(g), e.real, e.imag, abs(e))])
    return buf.getvalue()


def table2_csv(report: Table2Report) -> str:
    buf = io.StringIO()
    buf.write(f"# {NORMALIZATION}\n")
    buf.write(f"# value tolerance {report.tolerance:g}, argument tolerance {report.argument_tolerance:g}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["l", "k", "branch", "regime", "quantity", "kind", "sense", "conditions", "tabulated",
                "closed_form", "numeric", "extrapolated", "value_error", "argument_error", "monotone", "agreement"])
    for r in report.rows:
        p = r.point
        w.writerow([p.l, p.k, p.branch, p.regime, p.quantity, p.kind or "", p.sense, r.conditions,
                    fmt(p.tabulated), fmt(r.closed_form), fmt(r.numeric), fmt(r.extrapolated),
                    fmt(r.value_error), fmt(r.argument_error), str(r.monotone).lower(), r.status])
    for label in report.not_tabulated:
        buf.write(f"# not tabulated: {label}\n")
    return buf.getvalue()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# commands


def _point(cfg: RunConfig) -> ResponseResult:
    ratios, y = resolve_inputs(cfg.driving_type, cfg.point_params())
    return evaluate_point(cfg.driving_type, cfg.probe_type, cfg.branch, ratios, y,
                          cfg.effective_splitting, cfg.offset, cfg.phase)


def _point_json(cfg: RunConfig, res: ResponseResult, which: str) -> dict:
    out = {"driving_type": cfg.driving_type, "probe_type": cfg.probe_type, "branch": cfg.branch,
           "input_frequency": res.input_frequency, "normalization": NORMALIZATION}
    if which == "gain":
        out.update(G=_cx(res.gain), regime=res.regime)
    else:
        out.update(eta=_cx(res.efficiency), output_frequency=res.output_frequency,
                   output_label=res.output_label, conversion=res.conversion)
    return out


def cmd_point(cfg: RunConfig, which: str) -> int:
    res = _point(cfg)
    if cfg.format == "csv":
        params = cfg.point_params()
        names = tuple(params)

        tab = SweepTable(names, (SweepRow(tuple(params.values()), res.gain, res.efficiency),))
        _emit(sweep_csv(tab), cfg.out)
    else:
        _emit(_json(_point_json(cfg, res, which)), cfg.out)
    return EXIT_OK


def _plan(cfg: RunConfig) -> SweepPlan:
    swept = [a.name for a in cfg.sweep]
    fixed = cfg.point_params(swept)
    if cfg.model == "general":
        extra = {"offset": cfg.offset, "phase": cfg.phase, "splitting": cfg.effective_splitting}
        fixed.update({k: v for k, v in extra.items() if k not in swept})
    return SweepPlan(cfg.driving_type, cfg.probe_type, tuple(a.axis() for a in cfg.sweep), fixed,
                     cfg.branch, cfg.model)


def cmd_sweep(cfg: RunConfig) -> int:
    table = run_sweep(_plan(cfg))
    if cfg.format == "json":
        rows = [dict(zip(table.input_names, r.inputs), G=_cx(r.gain), eta=_cx(r.efficiency)) for r in table.rows]
        _emit(_json({"meta": table.meta, "normalization": NORMALIZATION, "rows": rows}), cfg.out)
    else:
        head = [f"driving_type={cfg.driving_type} probe_type={cfg.probe_type} branch={cfg.branch} model={cfg.model}"]
        _emit(sweep_csv(table, head), cfg.out)
    return EXIT_OK


def cmd_optimum(cfg: RunConfig) -> int:
    o = cfg.optimum
    names = [v.name for v in o.variables]
    for n in names:
        if n not in INPUT_NAMES:
            raise ConfigError(f"cannot optimize over {n!r}")
    base = cfg.point_params(names)

    def objective(*xs):
        params = dict(base)
        params.update(zip(names, xs))
        if cfg.model == "reduced":
            x, y = reduced_inputs(cfg.driving_type, params)
            g, e = reduced_forms(cfg.driving_type, cfg.probe_type, cfg.branch, x, y)
        else:
            extra = {k: params.pop(k) for k in ("offset", "phase", "splitting") if k in params}
            ratios, y = resolve_inputs(cfg.driving_type, params)
            r = evaluate_point(cfg.driving_type, cfg.probe_type, cfg.branch, ratios, y,
                               extra.get("splitting", cfg.effective_splitting),
                               extra.get("offset", cfg.offset), extra.get("phase", cfg.phase))
            g, e = r.gain, r.efficiency
        return abs(g) if o.quantity == "G" else abs(e)

    grid = max(v.num for v in o.variables)
    res = find_extremum(objective, [(v.start, v.stop) for v in o.variables], o.sense,
                        [v.scale for v in o.variables], grid=grid, name=f"|{o.quantity}{cfg.probe_type}|")
    out = res.as_dict()
    out["variables"] = names
    _emit(_json(out), cfg.out)
    return EXIT_OK


def cmd_table2(cfg: RunConfig) -> int:
    tol = cfg.tolerance if cfg.tolerance is not None else 1e-4
    report = table2_report(tol)
    if cfg.format == "json":
        rows = [{"label": r.point.label, "conditions": r.conditions, "tabulated": r.point.tabulated,
                 "closed_form": r.closed_form, "numeric": r.numeric, "extrapolated": r.extrapolated,
                 "value_error": r.value_error, "argument_error": r.argument_error, "monotone": r.monotone,
                 "agreement": r.status} for r in report.rows]
        _emit(_json({"rows": rows, "not_tabulated": list(report.not_tabulated)}), cfg.out)
    else:
        _emit(table2_csv(report), cfg.out)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_verify(cfg: RunConfig) -> int:
    ratios, y = resolve_inputs(cfg.driving_type, cfg.point_params())
    circ = circuit_from_ratios(ratios)
    frame = derive_frame(circ, DriveSpec.from_y(cfg.driving_type, y, cfg.effective_splitting))
    rates = decay_rates(frame, circ)
    probe = ProbeSpec(cfg.probe_type, cfg.branch, cfg.offset, cfg.amplitude, cfg.phase)
    oc = cfg.oracle
    ctl = OracleControls(amplitude_ratio=oc.amplitude_ratio, use_probe_amplitude=cfg.amplitude > 0,
                         transient=oc.transient, window=oc.window, rwa=oc.rwa)
    report = time_domain_oracle(frame, rates, probe, circ, ctl, steady_state(frame, rates))
    tol = cfg.tolerance if cfg.tolerance is not None else 1e-2
    d = report.discrepancy
    ok = report.defined and max(d["linear_G"], d["linear_eta"]) <= LINEAR_TOLERANCE \
        and max(d["time_G"], d["time_eta"]) <= tol
    out = report.as_dict()
    out.update(tolerance={"linear": LINEAR_TOLERANCE, "time_domain": tol}, passed=bool(ok),
               normalization=NORMALIZATION)
    _emit(_json(_finite(out)), cfg.out)
    return EXIT_OK if ok else EXIT_VERIFY


def _finite(obj):
    """JSON has no NaN; undefined values become null."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def cmd_figures(cfg: RunConfig) -> int:
    outdir = Path(cfg.out or "figures")
    outdir.mkdir(parents=True, exist_ok=True)
    for f in cfg.figures:
        data = figure_data(f)
        head = [f"figure {f}: driving_type={data.driving_type} probe_type={data.probe_type} branch=1 "
                f"reduced forms; y = 0 rows are the y -> 0 limit"]
        (outdir / f"fig{f}.csv").write_text(sweep_csv(data.table, head), encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deltamix", description="Driven three-level circuit response toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output file (directory for figures)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--tolerance", type=float)
    p.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = load_config(args.config, args.command)
        overrides = {k: getattr(args, k) for k in ("out", "format", "tolerance") if getattr(args, k) is not None}
        if overrides:
            cfg = replace(cfg, **overrides)
            cfg.validate()
        if args.dump_config:
            sys.stdout.write(_json(cfg.to_dict()))
            return EXIT_OK
        if cfg.command in ("gain", "efficiency"):
            return cmd_point(cfg, cfg.command)
        return {"sweep": cmd_sweep, "optimum": cmd_optimum, "table2": cmd_table2,
                "verify": cmd_verify, "figures": cmd_figures}[cfg.command](cfg)
    except ConfigError as exc:
        print(f"deltamix: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonStationaryError, SingularResponseError, DegeneracyError) as exc:
        print(f"deltamix: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


def main() -> None:
    sys.exit(run())

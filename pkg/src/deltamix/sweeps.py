"""Parameter sweeps, extremum search and the summary-table verification.

Points are evaluated either with the general two-Lorentzian formulas
(``model="general"``, section limits materialized as 1e6 / 1e-6) or with the
reduced on-resonance forms (``model="reduced"``).  Grids are deterministic;
worker threads only change scheduling, never results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

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
from .response import TABLE2, OptimalPoint, ResponseResult, reduced_forms, respond

SECTION_LIMIT = 1e6
# splitting used for table checks: far above every rate reached at 1e6 limits
TABLE_SPLITTING = 1e18
LIMIT_LEVELS = (1e-3, 1e-4)
DETUNED_Y = 0.5

INPUT_NAMES = ("y", "lambda1", "lambda2", "lambda3", "lambda2*y", "lambda3*y", "lambda2/y", "lambda3/y",
               "offset", "phase", "splitting")


def thread_count() -> int:
    """Worker cap from DELTAMIX_THREADS (default 1)."""
    raw = os.environ.get("DELTAMIX_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DELTAMIX_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


# ---------------------------------------------------------------------------
# point evaluation


def section_ratios(l: int, natural: float) -> RatioSet:
    """Ratios for driving type l with the section's limit assumptions materialized.

    ``natural`` is lambda1 (l=1), lambda2 (l=2) or lambda3 (l=3).
    """
    if l == 1:
        return RatioSet.from_any(lambda1=natural, lambda3=SECTION_LIMIT)
    if l == 2:
        return RatioSet.from_any(lambda2=natural, lambda3=1 / SECTION_LIMIT)
    if l == 3:
        return RatioSet.from_any(lambda3=natural, lambda2=1 / SECTION_LIMIT)
    raise ConfigError(f"unknown driving type {l}")


def resolve_inputs(l: int, params: Mapping[str, float]) -> Tuple[RatioSet, float]:
    """(ratios, y) from a parameter map.

    Ratios come from any two of lambda1..3, or from one natural ratio (or its
    product/quotient with y) completed by the section limits.
    """
    unknown = set(params) - set(INPUT_NAMES)
    if unknown:
        raise ConfigError(f"unknown parameters: {sorted(unknown)}")
    if "y" not in params:
        raise ConfigError("parameter y is required")
    y = float(params["y"])
    if y < 0:
        raise ConfigError("y must be non-negative")
    lam = {k: float(params[k]) for k in ("lambda1", "lambda2", "lambda3") if k in params}
    for base in ("lambda2", "lambda3"):
        for op in ("*", "/"):
            key = f"{base}{op}y"
            if key in params:
                if base in lam:
                    raise ConfigError(f"both {base} and {key} given")
                if y == 0:
                    raise ConfigError(f"{key} needs y > 0 in the general model")
                lam[base] = float(params[key]) / y if op == "*" else float(params[key]) * y
    if len(lam) >= 2:
        return RatioSet.from_any(**lam), y
    natural = {1: "lambda1", 2: "lambda2", 3: "lambda3"}[l]
    if set(lam) != {natural}:
        raise ConfigError(f"driving type {l} needs {natural} (or two ratios)")
    return section_ratios(l, lam[natural]), y


def evaluate_point(
    l: int,
    k: int,
    branch: int,
    ratios: RatioSet,
    y: float,
    splitting: float = DEFAULT_SPLITTING,
    offset: float = 0.0,
    phase: float = 0.0,
) -> ResponseResult:
    """General-formula response in the normalized circuit realizing ``ratios``."""
    circ = circuit_from_ratios(ratios)
    frame = derive_frame(circ, DriveSpec.from_y(l, y, splitting))
    rates = decay_rates(frame, circ)
    probe = ProbeSpec(k, branch, offset, 0.0, phase)
    return respond(frame, rates, probe, steady_state(frame, rates), ratios)


def reduced_inputs(l: int, params: Mapping[str, float]) -> Tuple[float, float]:
    """Natural reduced-form variables (x, y), allowing y = 0."""
    y = float(params["y"])
    if l == 1:
        return float(params["lambda1"]), y
    base = "lambda2" if l == 2 else "lambda3"
    if f"{base}*y" in params:
        x = float(params[f"{base}*y"])
        return (x / y if l == 2 else x), y
    if f"{base}/y" in params:
        x = float(params[f"{base}/y"]) * y
    else:
        x = float(params[base])
    return (x, y) if l == 2 else (x * y, y)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepAxis:
    name: str
    start: float
    stop: float
    num: int
    scale: str = "log"

    def __post_init__(self):
        if self.name not in INPUT_NAMES:
            raise ConfigError(f"cannot sweep {self.name!r}")
        if self.num < 2:
            raise ConfigError("sweep resolution must be at least 2")
        if self.scale not in ("log", "linear"):
            raise ConfigError(f"unknown scale {self.scale!r}")
        if self.scale == "log" and (self.start <= 0 or self.stop <= 0):
            raise ConfigError("log axes need positive bounds")
        if self.start == self.stop:
            raise ConfigError("empty sweep range")

    def values(self) -> np.ndarray:
        i = np.arange(self.num)
        if self.scale == "log":
            lo, hi = math.log10(self.start), math.log10(self.stop)
            # integer stepping keeps decades (e.g. x = 1) exact
            out = 10.0 ** (lo + (hi - lo) * i / (self.num - 1))
        else:
            out = self.start + (self.stop - self.start) * i / (self.num - 1)
        out[0], out[-1] = self.start, self.stop
        return out


@dataclass(frozen=True)
class SweepPlan:
    driving_type: int
    probe_type: int
    axes: Tuple[SweepAxis, ...]
    fixed: Mapping[str, float] = field(default_factory=dict)
    branch: int = 1
    model: str = "general"

    def __post_init__(self):
        process_info(self.driving_type, self.probe_type)
        if not self.axes:
            raise ConfigError("a sweep needs at least one axis")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names) or set(names) & set(self.fixed):
            raise ConfigError("each parameter must be swept or fixed, not both")
        if self.model not in ("general", "reduced"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.branch not in (1, 2):
            raise ConfigError(f"unknown branch {self.branch}")

    @property
    def input_names(self) -> Tuple[str, ...]:
        return tuple(a.name for a in self.axes)


@dataclass(frozen=True)
class SweepRow:
    inputs: Tuple[float, ...]
    gain: complex
    efficiency: complex


@dataclass(frozen=True)
class SweepTable:
    input_names: Tuple[str, ...]
    rows: Tuple[SweepRow, ...]
    meta: Dict[str, object] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        if name in self.input_names:
            i = self.input_names.index(name)
            return np.array([r.inputs[i] for r in self.rows])
        get = {
            "Re_G": lambda r: r.gain.real, "Im_G": lambda r: r.gain.imag, "abs_G": lambda r: abs(r.gain),
            "Re_eta": lambda r: r.efficiency.real, "Im_eta": lambda r: r.efficiency.imag,
            "abs_eta": lambda r: abs(r.efficiency),
        }[name]
        return np.array([get(r) for r in self.rows])


def _point(plan: SweepPlan, params: Dict[str, float]) -> Tuple[complex, complex]:
    l, k = plan.driving_type, plan.probe_type
    if plan.model == "reduced":
        x, y = reduced_inputs(l, params)
        g, eta = reduced_forms(l, k, plan.branch, x, y)
        return complex(g), complex(eta)
    ratios, y = resolve_inputs(l, {n: v for n, v in params.items() if n not in ("offset", "phase", "splitting")})
    res = evaluate_point(l, k, plan.branch, ratios, y, params.get("splitting", DEFAULT_SPLITTING),
                         params.get("offset", 0.0), params.get("phase", 0.0))
    return res.gain, res.efficiency


def run_sweep(plan: SweepPlan, threads: Optional[int] = None) -> SweepTable:
    """One row per grid point (row-major over the axes)."""
    grids = [a.values() for a in plan.axes]
    points = [tuple(float(v) for v in combo) for combo in product(*grids)]
    names = plan.input_names

    def job(pt):
        params = dict(plan.fixed)
        params.update(zip(names, pt))
        return _point(plan, params)

    n = threads or thread_count()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            values = list(pool.map(job, points))
    else:
        values = [job(p) for p in points]
    rows = tuple(SweepRow(p, g, e) for p, (g, e) in zip(points, values))
    meta = {"driving_type": plan.driving_type, "probe_type": plan.probe_type, "branch": plan.branch,
            "model": plan.model, "fixed": dict(plan.fixed)}
    return SweepTable(names, rows, meta)


# ---------------------------------------------------------------------------
# extremum search


@dataclass(frozen=True)
class ExtremumResult:
    name: str
    sense: str
    argument: Tuple[float, ...]
    value: float
    history: Tuple[Tuple[str, Tuple[float, ...], float], ...]
    tolerance: float
    boundary: bool
    evaluations: int

    def as_dict(self) -> dict:
        return {
            "name": self.name, "sense": self.sense, "argument": list(self.argument), "value": self.value,
            "history": [{"stage": s, "argument": list(a), "value": v} for s, a, v in self.history],
            "tolerance": self.tolerance, "boundary": self.boundary, "evaluations": self.evaluations,
        }


def _ternary(f: Callable[[float], float], a: float, b: float, tol: float) -> Tuple[float, float, int]:
    """Maximize a unimodal f on [a, b]; returns (t, f(t), evaluations)."""
    n = 0
    while b - a > tol:
        m1 = a + (b - a) / 3
        m2 = b - (b - a) / 3
        if f(m1) < f(m2):
            a = m1
        else:
            b = m2
        n += 2
    t = 0.5 * (a + b)
    return t, f(t), n + 1


def find_extremum(
    objective: Callable[..., float],
    domain: Sequence[Tuple[float, float]],
    sense: str = "max",
    scale: Sequence[str] | str = "log",
    grid: Optional[int] = None,
    tol: float = 1e-5,
    cycles: int = 3,
    name: str = "objective",
) -> ExtremumResult:
    """Coarse grid scan, then ternary refinement (coordinate descent in 2-D).

    ``tol`` is relative on log axes and absolute on linear ones.  The boundary
    flag is raised when the optimum sits on the domain edge, which is how
    limit-type optima (lambda >> 1 etc.) show up.
    """
    if sense not in ("max", "min"):
        raise ConfigError(f"sense must be 'max' or 'min', got {sense!r}")
    dim = len(domain)
    if dim not in (1, 2):
        raise ConfigError("find_extremum handles one or two variables")
    scales = [scale] * dim if isinstance(scale, str) else list(scale)
    sign = 1.0 if sense == "max" else -1.0
    lo, hi, ttol = [], [], []
    for (a, b), sc in zip(domain, scales):
        if not a < b:
            raise ConfigError("empty extremum domain")
        if sc == "log":
            if a <= 0:
                raise ConfigError("log domains need positive bounds")
            lo.append(math.log10(a))
            hi.append(math.log10(b))
            ttol.append(tol / math.log(10))
        else:
            lo.append(a)
            hi.append(b)
            ttol.append(tol)
    count = [0]

    def to_x(t):
        return tuple(10.0 ** v if sc == "log" else v for v, sc in zip(t, scales))

    def g(t):
        count[0] += 1
        val = float(objective(*to_x(t)))
        return sign * val if math.isfinite(val) else -math.inf

    n = grid or (161 if dim == 1 else 41)
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    best_t, best_v = None, -math.inf
    for idx in product(range(n), repeat=dim):
        t = tuple(axes[d][i] for d, i in enumerate(idx))
        v = g(t)
        if v > best_v:
            best_t, best_v = t, v
    if best_t is None:
        raise ConfigError(f"objective {name} is not finite anywhere on the grid")
    history = [("grid", to_x(best_t), sign * best_v)]
    step = [(b - a) / (n - 1) for a, b in zip(lo, hi)]
    cur = list(best_t)
    achieved = max(step)

    def line(d, center):
        """Refine coordinate d around center, re-bracketing if the optimum hits an edge."""
        c = center
        for _ in range(50):
            a, b = max(lo[d], c - step[d]), min(hi[d], c + step[d])

            def f1(v):
                t = list(cur)
                t[d] = v
                return g(t)

            t_star, v_star, _ = _ternary(f1, a, b, ttol[d])
            edge = (t_star - a < 2 * ttol[d] and a > lo[d]) or (b - t_star < 2 * ttol[d] and b < hi[d])
            if not edge:
                break
            c = t_star
        return t_star, v_star, b - a

    for cyc in range(cycles if dim == 2 else 1):
        moved = 0.0
        for d in range(dim):
            t_star, v_star, _ = line(d, cur[d])
            if v_star >= best_v:
                moved = max(moved, abs(t_star - cur[d]))
                cur[d] = t_star
                best_v = v_star
        stage = "refine" if dim == 1 else f"cycle{cyc + 1}"
        history.append((stage, to_x(cur), sign * best_v))
        achieved = max(ttol) if dim == 1 else max(moved, max(ttol))
    boundary = any(abs(cur[d] - lo[d]) <= 2 * ttol[d] or abs(cur[d] - hi[d]) <= 2 * ttol[d] for d in range(dim))
    rel = [achieved * math.log(10) if sc == "log" else achieved for sc in scales]
    return ExtremumResult(name, sense, to_x(cur), sign * best_v, tuple(history), max(rel), boundary, count[0])


# ---------------------------------------------------------------------------
# summary-table verification


_TABLE_DOMAIN = (1e-3, 1e3)


@dataclass(frozen=True)
class Table2Row:
    point: OptimalPoint
    closed_form: float
    numeric: float
    extrapolated: float
    arguments: Dict[str, float]
    levels: Tuple[Tuple[float, float], ...]  # (materialization, value) pairs
    monotone: bool
    value_error: float
    argument_error: float
    status: str

    @property
    def conditions(self) -> str:
        return "; ".join(str(c) for c in self.point.conditions)


@dataclass(frozen=True)
class Table2Report:
    rows: Tuple[Table2Row, ...]
    not_tabulated: Tuple[str, ...]
    tolerance: float
    argument_tolerance: float

    @property
    def passed(self) -> bool:
        return all(r.status == "pass" for r in self.rows)


def _table_objective(point: OptimalPoint, assign: Callable[[Dict[str, float]], Dict[str, float]]):
    """|G| or |eta| of the row's process as a function of natural coordinates."""
    l, k, branch = point.l, point.k, point.branch
    natural = {1: "lambda1", 2: "lambda2", 3: "lambda3"}[l]

    def f(coords: Dict[str, float]) -> float:
        c = assign(coords)
        y = 1.0 / c["1/y"] if "1/y" in c else c["y"]
        params = {"y": y}
        for var, val in c.items():
            if var in ("y", "1/y"):
                continue
            if var.endswith("*y"):
                params[natural] = val / y
            elif var.endswith("/y"):
                params[natural] = val * y
            else:
                params[natural] = val
        ratios = section_ratios(l, params[natural])
        res = evaluate_point(l, k, branch, ratios, y, TABLE_SPLITTING)
        return abs(res.gain) if point.quantity == "G" else abs(res.efficiency)

    return f


def _verify_row(point: OptimalPoint, tol: float, arg_tol: float) -> Table2Row:
    yvar = "1/y" if point.branch == 2 else "y"
    fixed: Dict[str, float] = {}
    free: List[Tuple[str, object]] = []  # (var, target value or alternatives)
    limits: List[Tuple[str, str]] = []
    for c in point.conditions:
        if c.relation == "=":
            if c.var in ("y", "1/y") and point.regime == "resonant":
                fixed[c.var] = 1.0
            else:
                free.append((c.var, c.value))
        else:
            limits.append((c.var, c.relation))
    if not any(v in ("y", "1/y") for v in list(fixed) + [f for f, _ in free] + [lv for lv, _ in limits]):
        fixed[yvar] = DETUNED_Y

    levels, args_at = [], []
    for lvl in (LIMIT_LEVELS if limits else (None,)):
        base = dict(fixed)
        for var, rel in limits:
            base[var] = lvl if rel == "<<" else 1.0 / lvl

        def assign(coords, base=base):
            out = dict(base)
            out.update(coords)
            return out

        obj = _table_objective(point, assign)
        if free:
            names = [v for v, _ in free]
            res = find_extremum(lambda *xs: obj(dict(zip(names, xs))), [_TABLE_DOMAIN] * len(names),
                                sense=point.sense, name=point.label)
            levels.append((lvl, res.value))
            args_at.append(dict(zip(names, res.argument)))
        else:
            levels.append((lvl, obj({})))
            args_at.append({})

    target = point.value
    final = levels[-1][1]
    if len(levels) == 2:
        (_, v3), (_, v4) = levels
        extrap = v4 + (v4 - v3) / 9.0  # first-order Richardson for a factor-10 step
        monotone = abs(v4 - target) <= abs(v3 - target) + 1e-12
    else:
        extrap, monotone = final, True

    arg_err = 0.0
    for (var, want), (_, got) in zip(free, args_at[-1].items()):
        alts = want if isinstance(want, tuple) else (want,)
        if len(levels) == 2:
            g3 = args_at[0][var]
            got = got + (got - g3) / 9.0
        arg_err = max(arg_err, min(abs(got - a) / abs(a) for a in alts))

    value_err = max(abs(extrap - target), abs(target - point.tabulated))
    ok = value_err <= tol and arg_err <= arg_tol and monotone
    return Table2Row(point, target, final, extrap, args_at[-1], tuple(levels), monotone, value_err, arg_err,
                     "pass" if ok else "fail")


def table2_report(tolerance: float = 1e-4, argument_tolerance: float = 1e-3) -> Table2Report:
    """Every populated summary-table cell, closed form against numerical optimum.

    Limit conditions are materialized at 1e-3 and 1e-4 (1e3, 1e4 for >>) and
    the two values are Richardson-extrapolated.  Attenuation rows of driving
    type 3 carry no efficiency cell; they are listed as not tabulated.
    """
    rows = tuple(_verify_row(p, tolerance, argument_tolerance) for p in TABLE2)
    missing = []
    for p in TABLE2:
        if p.l == 3 and p.kind == "attenuation" and p.quantity == "G":
            missing.append(f"l={p.l} k={p.k} branch={p.branch} {p.regime} eta attenuation")
    return Table2Report(rows, tuple(missing), tolerance, argument_tolerance)


# ---------------------------------------------------------------------------
# figure data


def _figure_axis(name: str) -> SweepAxis:
    return SweepAxis(name, 1e-2, 1e2, 2001)


@dataclass(frozen=True)
class FigureData:
    figure: int
    driving_type: int
    probe_type: int
    series_name: Optional[str]
    table: SweepTable


_FIGURES = {
    3: (1, 1, "lambda1", (0.2, 1.0, 10.0), "y"),
    4: (1, 2, "lambda1", (0.2, 1.0, 10.0), "y"),
    5: (2, 3, None, (None,), "lambda2*y"),
    6: (2, 4, None, (None,), "lambda2*y"),
    7: (3, 5, "y", (0.0, 1.0, 2.0, 4.0), "lambda3*y"),
    8: (3, 6, "y", (0.0, 1.0, 2.0, 4.0), "lambda3*y"),
}


def figure_data(figure: int) -> FigureData:
    """Plot data of one response figure (3 to 8) from the reduced forms.

    Curves use the figure's parameter sets; y = 0 is the exact y -> 0 limit.
    For driving type 2 the reduced forms depend on lambda2*y only, so y = 1.
    """
    if figure not in _FIGURES:
        raise ConfigError(f"figures 3 to 8 are available, got {figure}")
    l, k, series, values, xname = _FIGURES[figure]
    axis = _figure_axis(xname)
    rows: List[SweepRow] = []
    names = ((series,) if series else ()) + (xname,)
    for s in values:
        fixed = {series: s} if series else {"y": 1.0}
        plan = SweepPlan(l, k, (axis,), fixed, model="reduced")
        tab = run_sweep(plan, threads=1)
        for r in tab.rows:
            rows.append(SweepRow(((s,) if series else ()) + r.inputs, r.gain, r.efficiency))
    meta = {"figure": figure, "driving_type": l, "probe_type": k, "branch": 1, "model": "reduced"}
    return FigureData(figure, l, k, series, SweepTable(names, tuple(rows), meta))


def all_figures() -> Tuple[FigureData, ...]:
    return tuple(figure_data(f) for f in sorted(_FIGURES))


def level_crossings(x: Sequence[float], f: Sequence[float], level: float = 1.0) -> List[float]:
    """Arguments where f crosses ``level``: exact grid hits, else linear interpolation."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(f, dtype=float) - level
    out: List[float] = []
    for i in range(len(d)):
        if d[i] == 0:
            out.append(float(x[i]))
        elif i + 1 < len(d) and d[i] * d[i + 1] < 0:
            out.append(float(x[i] - d[i] * (x[i + 1] - x[i]) / (d[i + 1] - d[i])))
    return out

"""Closed-form linear-response gains G_k and conversion efficiencies eta_k.

Each (driving type, probe type) pair gives two Lorentzians, one per dressed
resonance.  ``L(pair)`` below is 1/(i(omega_pair - x) + Gamma_pair/2) with
x the tuned frame frequency (probe, sum or difference); ``conj=True`` flips
the sign of the detuning term.  Two published expressions are corrected to agree with
the master-equation oracle:

* eta_1 carries a relative minus sign between its two Lorentzians, as eta_2
  does (the I_32 harmonic of Ibar_31 enters with -sin(theta/2));
* eta_5 uses the complex conjugates of the Lorentzians in G_5, since its
  output scales with conj(I~).

On exact resonance only the eta_1 correction is visible, as a sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .model import (
    ConfigError,
    Frame,
    ProbeSpec,
    RateSet,
    RatioSet,
    SteadyState,
    process_info,
    resolve_probe,
)

TRANSPARENT_TOL = 1e-9


class NotTabulatedError(KeyError):
    """Requested optimum is not a populated cell of the summary table."""


@dataclass(frozen=True)
class ResponseResult:
    gain: complex
    efficiency: complex
    input_frequency: float
    output_frequency: float
    output_label: str

    @property
    def regime(self) -> str:
        mag = abs(self.gain)
        if abs(mag - 1) <= TRANSPARENT_TOL:
            return "transparent"
        return "amplifying" if mag > 1 else "attenuating"

    @property
    def regime_flags(self) -> Dict[str, bool]:
        r = self.regime
        return {k: r == k for k in ("amplifying", "attenuating", "transparent")}

    @property
    def conversion(self) -> str:
        """'up' or 'down' by comparing output and input frequencies."""
        return "up" if self.output_frequency > self.input_frequency else "down"


# ---------------------------------------------------------------------------
# general formulas


def _check(frame: Frame, rates: RateSet, probe: ProbeSpec, steady: SteadyState, ratios: Optional[RatioSet]):
    l = frame.driving_type
    process_info(l, probe.probe_type)
    if rates.driving_type != l or steady.driving_type != l:
        raise ConfigError("frame, rates and steady state belong to different driving types")
    if ratios is not None:
        lam = rates.lambdas
        got = (lam[(3, 1)] / lam[(3, 2)], lam[(3, 1)] / lam[(2, 1)], lam[(3, 2)] / lam[(2, 1)])
        want = (ratios.lambda1, ratios.lambda2, ratios.lambda3)
        if not np.allclose(got, want, rtol=1e-9, atol=0):
            raise ConfigError("ratio set does not match the circuit weights")


def _detuning(frame: Frame, pair, ref) -> float:
    """omega_pair - omega_ref without cancelling large common energies."""
    if pair == ref:
        return 0.0
    (m, n), (p, q) = pair, ref
    e = frame.energies
    if m == p:
        return e[q - 1] - e[n - 1]
    if n == q:
        return e[m - 1] - e[p - 1]
    return frame.omega(m, n) - frame.omega(p, q)


def _lorentzians(frame: Frame, rates: RateSet, probe: ProbeSpec):
    info = process_info(frame.driving_type, probe.probe_type)
    ref = info.branches[probe.branch - 1]

    def L(pair, conj=False):
        det = _detuning(frame, pair, ref) - probe.offset
        g = rates.Gamma[pair] / 2
        return 1.0 / (complex(g, -det) if conj else complex(g, det))

    return L


def _evaluate(frame: Frame, rates: RateSet, probe: ProbeSpec, steady: SteadyState) -> Tuple[complex, complex]:
    l, k = frame.driving_type, probe.probe_type
    c, s = frame.cos_half, frame.sin_half
    lam = rates.lambdas
    l21, l31, l32 = lam[(2, 1)], lam[(3, 1)], lam[(3, 2)]
    h = 0.5 * rates.scale
    p1, p2, p3 = steady.populations
    L = _lorentzians(frame, rates, probe)
    if l == 1:
        a, b = L((3, 1)), L((3, 2))
        if k == 1:
            g = 1 - h * l31 * (p1 * c * c * a + p2 * s * s * b)
        else:
            g = 1 - h * l32 * (p1 * s * s * a + p2 * c * c * b)
        eta = h * math.sqrt(l31 * l32) * c * s * (p1 * a - p2 * b)
    elif l == 2:
        a, b = L((2, 1)), L((3, 1))
        if k == 3:
            g = 1 - h * l31 * (s * s * a + c * c * b)
        else:
            g = 1 - h * l21 * (c * c * a + s * s * b)
        eta = h * math.sqrt(l21 * l31) * s * c * (a - b)
    else:
        d21, d32 = p2 - p1, p3 - p2
        phase = complex(math.cos(probe.phase), -math.sin(probe.phase))
        w = math.sqrt(l21 * l32) * c * s
        if k == 5:
            g = 1 + h * l21 * (d21 * c * c * L((2, 1)) - d32 * s * s * L((2, 3)))
            eta = h * w * (d21 * L((2, 1), conj=True) + d32 * L((2, 3), conj=True)) * phase
        else:
            g = 1 - h * l32 * (s * s * d21 * L((2, 1), conj=True) - c * c * d32 * L((2, 3), conj=True))
            eta = -h * w * (d21 * L((2, 1)) + d32 * L((2, 3))) * phase
    return complex(g), complex(eta)


def respond(
    frame: Frame,
    rates: RateSet,
    probe: ProbeSpec,
    steady: SteadyState,
    ratios: Optional[RatioSet] = None,
) -> ResponseResult:
    """Gain and conversion efficiency for the active (l, k) pair."""
    _check(frame, rates, probe, steady, ratios)
    g, eta = _evaluate(frame, rates, probe, steady)
    f = resolve_probe(frame, probe)
    label = process_info(frame.driving_type, probe.probe_type).output_label
    return ResponseResult(g, eta, f.probe, f.output, label)


def gain(frame, rates, ratios, probe, steady) -> complex:
    return respond(frame, rates, probe, steady, ratios).gain


def efficiency(frame, rates, ratios, probe, steady) -> complex:
    return respond(frame, rates, probe, steady, ratios).efficiency


# ---------------------------------------------------------------------------
# reduced on-resonance forms


def _type1(k: int, lam: float, y: float) -> Tuple[float, float]:
    den = (lam + 1) * (1 + y) * (1 + y * y)
    g = 1 - (lam if k == 1 else y) / den
    return g, math.sqrt(lam * y) / den


def _type2(k: int, x: float) -> Tuple[float, float]:
    g = 1 - (x if k == 3 else 1.0) / (1 + x)
    return g, math.sqrt(x) / (1 + x)


def _type3(k: int, p: float, y: float) -> Tuple[float, float]:
    den = (1 + y + p) * (y * y + p + 1)
    eta = math.sqrt(p) * (p - 1) / den
    if k == 5:
        return 1 + (p - 1) / den, eta
    return 1 - p * (p - 1) / den, -eta


def reduced_forms(l: int, k: int, branch: int, x: float, y: float) -> Tuple[float, float]:
    """Reduced (G, eta) in the section's natural variables.

    x is lambda1 (l=1), lambda2 (l=2) or the product lambda3*y (l=3).  On
    branch 2 the forms follow from branch 1 by y -> 1/y (and, for l=3,
    lambda3*y -> lambda3/y), with eta changing sign.
    """
    process_info(l, k)
    if branch not in (1, 2):
        raise ConfigError(f"unknown branch {branch}")
    if x < 0 or y < 0:
        raise ConfigError("reduced forms need non-negative arguments")
    if branch == 2:
        if y == 0:
            raise ConfigError("branch 2 reduced forms need y > 0")
        if l == 3:
            x = x / (y * y)  # lambda3*y -> lambda3/y
        y = 1.0 / y
    if l == 1:
        g, eta = _type1(k, x, y)
    elif l == 2:
        g, eta = _type2(k, x * y)
    else:
        g, eta = _type3(k, x, y)
    return g, (eta if branch == 1 else -eta)


def evaluate_reduced(l: int, k: int, branch: int, ratios: RatioSet, y: float) -> Tuple[float, float]:
    x = {1: ratios.lambda1, 2: ratios.lambda2, 3: ratios.lambda3 * y}[l]
    return reduced_forms(l, k, branch, x, y)


# ---------------------------------------------------------------------------
# optimal points


def a_parameters(y: float) -> Tuple[float, float, float, float]:
    """A1..A4 = y+2, y^2+2, y+1, y^2+1 (B_i are the same with y -> 1/y)."""
    return (y + 2, y * y + 2, y + 1, y * y + 1)


def type3_amplification_optimum(k: int, y: float) -> Tuple[float, float]:
    """(optimal lambda3*y, maximal G) for probe 5 or 6 on the omega21 branch.

    For the other branch pass 1/y and read the argument as lambda3/y.
    """
    a1, a2, a3, a4 = a_parameters(y)
    if k == 5:
        return math.sqrt(a1 * a2) + 1, 1 + 1 / (math.sqrt(a1) + math.sqrt(a2)) ** 2
    if k == 6:
        arg = 1 / (math.sqrt(a1 * a2 / (a3 * a4)) + 1)
        return arg, 1 + 1 / (math.sqrt(a1 * a4) + math.sqrt(a2 * a3)) ** 2
    raise ConfigError("amplification optimum exists only for probe types 5 and 6")


def type3_attenuation_limit(y: float) -> float:
    """G_5 as lambda3*y -> 0: 1 - 1/(y^3 + y^2 + y + 1)."""
    return 1 - 1 / (y ** 3 + y * y + y + 1)


def _real_root(coeffs) -> float:
    roots = np.roots(coeffs)
    good = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
    return float(min(good))


# optimum y for |eta_1| (5y^3 + 3y^2 + y - 1 = 0) and for min G_2 (2y^3 + y^2 - 1 = 0)
Y_ETA1 = _real_root([5, 3, 1, -1])
Y_G2 = _real_root([2, 1, 0, -1])
LAMBDA3_ETA5_RES = (9 + math.sqrt(73)) / 2


@dataclass(frozen=True)
class Condition:
    """One constraint: var (=, >>, <<) value.  value may list alternatives."""

    var: str
    relation: str
    value: Union[float, Tuple[float, ...]]

    def __str__(self):
        rel = {"=": "=", ">>": ">>", "<<": "<<"}[self.relation]
        if self.relation != "=":
            return f"{self.var} {rel} 1"
        if isinstance(self.value, tuple):
            return f"{self.var} = " + " or ".join(f"{v:.6g}" for v in self.value)
        return f"{self.var} = {self.value:.6g}"


@dataclass(frozen=True)
class OptimalPoint:
    l: int
    k: int
    branch: int
    regime: str  # detuned | resonant
    quantity: str  # G | eta
    kind: Optional[str]  # amplification | attenuation for type-3 gains
    sense: str  # max | min
    conditions: Tuple[Condition, ...]
    value: float
    tabulated: float  # the printed table entry
    aux: Dict[str, float] = field(default_factory=dict)

    @property
    def label(self) -> str:
        kind = f" {self.kind}" if self.kind else ""
        return f"l={self.l} k={self.k} branch={self.branch} {self.regime} {self.quantity}{kind}"


def _c(var, rel, value=1.0):
    return Condition(var, rel, value)


def _mirror(cond: Condition) -> Condition:
    swap = {"y": "1/y", "lambda2*y": "lambda2/y", "lambda3*y": "lambda3/y"}
    return Condition(swap.get(cond.var, cond.var), cond.relation, cond.value)


def _build_table() -> Tuple[OptimalPoint, ...]:
    rows = []

    def add(l, k, regime, quantity, kind, sense, conds, value, tab, aux=None):
        for branch in (1, 2):
            cs = tuple(conds if branch == 1 else [_mirror(c) for c in conds])
            extra = dict(aux or {})
            if extra and branch == 2:
                extra = {"B" + key[1:]: v for key, v in extra.items()}
            rows.append(OptimalPoint(l, k, branch, regime, quantity, kind, sense, cs, value, tab, extra))

    eta1 = 0.5 * math.sqrt(Y_ETA1) / ((1 + Y_ETA1) * (1 + Y_ETA1 ** 2))
    g2 = 1 - Y_G2 / ((1 + Y_G2) * (1 + Y_G2 ** 2))
    for k in (1, 2):
        if k == 1:
            add(1, k, "detuned", "G", None, "min", [_c("lambda1", ">>"), _c("y", "<<")], 0.0, 0.0)
            add(1, k, "resonant", "G", None, "min", [_c("lambda1", ">>"), _c("y", "=", 1.0)], 0.75, 0.75)
        else:
            add(1, k, "detuned", "G", None, "min", [_c("lambda1", "<<"), _c("y", "=", Y_G2)], g2, 0.72305)
            add(1, k, "resonant", "G", None, "min", [_c("lambda1", "<<"), _c("y", "=", 1.0)], 0.75, 0.75)
        add(1, k, "detuned", "eta", None, "max", [_c("lambda1", "=", 1.0), _c("y", "=", Y_ETA1)], eta1, 0.19529)
        add(1, k, "resonant", "eta", None, "max", [_c("lambda1", "=", 1.0), _c("y", "=", 1.0)], 0.125, 0.125)
    for k in (3, 4):
        rel = ">>" if k == 3 else "<<"
        add(2, k, "detuned", "G", None, "min", [_c("lambda2*y", rel)], 0.0, 0.0)
        add(2, k, "resonant", "G", None, "min", [_c("lambda2", rel), _c("y", "=", 1.0)], 0.0, 0.0)
        add(2, k, "detuned", "eta", None, "max", [_c("lambda2*y", "=", 1.0)], 0.5, 0.5)
        add(2, k, "resonant", "eta", None, "max", [_c("lambda2", "=", 1.0), _c("y", "=", 1.0)], 0.5, 0.5)
    eta5_res = math.sqrt(LAMBDA3_ETA5_RES) * (LAMBDA3_ETA5_RES - 1) / (2 + LAMBDA3_ETA5_RES) ** 2
    a0 = dict(zip(("A1", "A2", "A3", "A4"), a_parameters(0.0)))
    a1 = dict(zip(("A1", "A2", "A3", "A4"), a_parameters(1.0)))
    for k in (5, 6):
        p0, g0 = type3_amplification_optimum(k, 0.0)
        p1, g1 = type3_amplification_optimum(k, 1.0)
        tab0 = 9 / 8
        tab1 = 13 / 12 if k == 5 else 25 / 24
        add(3, k, "detuned", "G", "amplification", "max", [_c("lambda3*y", "=", p0), _c("y", "<<")], g0, tab0, a0)
        add(3, k, "resonant", "G", "amplification", "max", [_c("lambda3", "=", p1), _c("y", "=", 1.0)], g1, tab1, a1)
        alt = (3 - 2 * math.sqrt(2), 3 + 2 * math.sqrt(2))
        add(3, k, "detuned", "eta", "amplification", "max", [_c("lambda3*y", "=", alt), _c("y", "<<")], 0.25, 0.25)
        add(3, k, "resonant", "eta", "amplification", "max",
            [_c("lambda3", "=", LAMBDA3_ETA5_RES), _c("y", "=", 1.0)], eta5_res, 0.19838)
        if k == 5:
            add(3, k, "detuned", "G", "attenuation", "min", [_c("lambda3*y", "<<"), _c("y", "<<")], 0.0, 0.0)
            add(3, k, "resonant", "G", "attenuation", "min", [_c("lambda3", "<<"), _c("y", "=", 1.0)], 0.75, 0.75)
        else:
            add(3, k, "detuned", "G", "attenuation", "min", [_c("lambda3*y", ">>")], 0.0, 0.0)
            add(3, k, "resonant", "G", "attenuation", "min", [_c("lambda3", ">>"), _c("y", "=", 1.0)], 0.0, 0.0)
    return tuple(rows)


TABLE2: Tuple[OptimalPoint, ...] = _build_table()


def optimal_points(
    l: int, k: int, branch: int, regime: str, quantity: str = "G", kind: Optional[str] = None
) -> OptimalPoint:
    """Closed-form optimum of one summary-table cell.

    ``kind`` selects the amplification or attenuation row of a type-3 gain
    (default amplification).  The attenuation rows carry no efficiency cell.
    """
    if l == 3 and kind is None:
        kind = "amplification"
    for row in TABLE2:
        if (row.l, row.k, row.branch, row.regime, row.quantity) == (l, k, branch, regime, quantity):
            if l != 3 or row.kind == kind:
                return row
    raise NotTabulatedError(f"no table cell for l={l} k={k} branch={branch} {regime} {quantity} {kind or ''}")

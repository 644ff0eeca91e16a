"""Domain types, rotating frames, loop-current harmonics and rate tables.

All quantities default to the normalized unit system where hbar = 1,
M^2/(hbar Z_T) = 1 and lambda21 = 1, so every rate is measured in
gamma_u = M^2 lambda21 / (hbar Z_T).  Absolute-unit circuits are accepted and
the rate tables then carry the M^2/(hbar Z_T) prefactor explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

# level labels are 1-based everywhere in the public API
Pair = Tuple[int, int]

DEFAULT_SPLITTING = 100.0
DEFAULT_OMEGA21 = 1.0e5
DEFAULT_OMEGA31 = 2.6e5


class ConfigError(ValueError):
    """Inconsistent or invalid physical configuration."""


class DegenerateDriveError(ConfigError):
    """Raised when both the Rabi frequency and the detuning vanish."""


# ---------------------------------------------------------------------------
# circuit and ratios


@dataclass(frozen=True)
class CircuitSpec:
    """Bare circuit: transition frequencies and loop-current matrix elements."""

    omega21: float
    omega31: float
    current_elements: np.ndarray
    mutual_inductance: float = 1.0
    line_impedance: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        cur = np.asarray(self.current_elements, dtype=complex)
        if cur.shape != (3, 3):
            raise ConfigError("current_elements must be a 3x3 matrix")
        if not (self.omega31 > self.omega21 > 0):
            raise ConfigError("require omega31 > omega21 > 0")
        if not np.allclose(cur, cur.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(cur).max())):
            raise ConfigError("current_elements must be Hermitian")
        if min(self.mutual_inductance, self.line_impedance, self.hbar) <= 0:
            raise ConfigError("M, Z_T and hbar must be positive")
        object.__setattr__(self, "current_elements", cur)

    @property
    def omega32(self) -> float:
        return self.omega31 - self.omega21

    @property
    def bare_energies(self) -> Tuple[float, float, float]:
        return (0.0, self.omega21, self.omega31)

    def bare_omega(self, m: int, n: int) -> float:
        e = self.bare_energies
        return e[m - 1] - e[n - 1]

    def lam(self, m: int, n: int) -> float:
        """Relaxation weight lambda_mn = |I_mn|^2 omega_mn for m > n."""
        return float(abs(self.current_elements[m - 1, n - 1]) ** 2 * self.bare_omega(m, n))

    @property
    def lambdas(self) -> Dict[Pair, float]:
        return {(2, 1): self.lam(2, 1), (3, 1): self.lam(3, 1), (3, 2): self.lam(3, 2)}

    @property
    def rate_scale(self) -> float:
        """M^2/(hbar Z_T), converts lambda weights to rates."""
        return self.mutual_inductance ** 2 / (self.hbar * self.line_impedance)

    @property
    def rate_unit(self) -> float:
        """gamma_u = M^2 lambda21 / (hbar Z_T)."""
        return self.rate_scale * self.lam(2, 1)


@dataclass(frozen=True)
class RatioSet:
    """Pairwise ratios lambda1 = l31/l32, lambda2 = l31/l21, lambda3 = l32/l21."""

    lambda1: float
    lambda2: float
    lambda3: float
    rate_unit: float = 1.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) <= 0:
            raise ConfigError("all lambda ratios must be positive")
        if not math.isclose(self.lambda1 * self.lambda3, self.lambda2, rel_tol=1e-12):
            raise ConfigError("ratios violate lambda1 * lambda3 = lambda2")

    @classmethod
    def from_any(cls, lambda1=None, lambda2=None, lambda3=None, rate_unit=1.0) -> "RatioSet":
        """Build from any two of the three ratios; the third is derived."""
        given = [v is not None for v in (lambda1, lambda2, lambda3)]
        if sum(given) == 3:
            return cls(float(lambda1), float(lambda2), float(lambda3), rate_unit)
        if sum(given) != 2:
            raise ConfigError("supply exactly two of lambda1, lambda2, lambda3")
        if lambda1 is None:
            lambda1 = lambda2 / lambda3
        elif lambda2 is None:
            lambda2 = lambda1 * lambda3
        else:
            lambda3 = lambda2 / lambda1
        return cls(float(lambda1), float(lambda2), float(lambda3), rate_unit)

    @classmethod
    def from_circuit(cls, circuit: CircuitSpec) -> "RatioSet":
        lam = circuit.lambdas
        l21, l31, l32 = lam[(2, 1)], lam[(3, 1)], lam[(3, 2)]
        return cls(l31 / l32, l31 / l21, l32 / l21, circuit.rate_unit)


def circuit_from_ratios(
    ratios: RatioSet,
    omega21: float = DEFAULT_OMEGA21,
    omega31: float = DEFAULT_OMEGA31,
) -> CircuitSpec:
    """Normalized circuit (hbar = M = Z_T = 1, lambda21 = 1) realizing the ratios.

    Loop-current elements are real and positive, with unit diagonal.
    """
    lam = {(2, 1): 1.0, (3, 1): ratios.lambda2, (3, 2): ratios.lambda3}
    bare = (0.0, omega21, omega31)
    cur = np.eye(3, dtype=complex)
    for (m, n), w in lam.items():
        val = math.sqrt(w / (bare[m - 1] - bare[n - 1]))
        cur[m - 1, n - 1] = cur[n - 1, m - 1] = val
    return CircuitSpec(omega21, omega31, cur)


# ---------------------------------------------------------------------------
# drive and frame

# level pair mixed by the drive, and the level carried by the drive rotation
_MIXED_PAIR = {1: (1, 2), 2: (2, 3), 3: (1, 3)}
_ROTATED_LEVEL = {1: 2, 2: 3, 3: 3}


@dataclass(frozen=True)
class DriveSpec:
    driving_type: int
    detuning: float
    rabi: float

    def __post_init__(self):
        if self.driving_type not in (1, 2, 3):
            raise ConfigError(f"driving type must be 1, 2 or 3, got {self.driving_type}")
        if self.rabi < 0:
            raise ConfigError("Rabi frequency must be real and non-negative")

    @property
    def splitting(self) -> float:
        return math.hypot(2.0 * self.rabi, self.detuning)

    @classmethod
    def from_y(cls, driving_type: int, y: float, splitting: float = DEFAULT_SPLITTING) -> "DriveSpec":
        """Drive with saturation y and dressed splitting S.

        Uses y = (S - Delta)/(S + Delta), so Delta = S (1-y)/(1+y) and
        Omega = S sqrt(y)/(1+y).
        """
        if y < 0 or splitting <= 0:
            raise ConfigError("need y >= 0 and S > 0")
        if math.isinf(y):
            return cls(driving_type, -splitting, 0.0)
        return cls(driving_type, splitting * (1 - y) / (1 + y), splitting * math.sqrt(y) / (1 + y))


@dataclass(frozen=True)
class Frame:
    """Drive-diagonalized rotating frame of one driving type."""

    driving_type: int
    theta: float
    detuning: float
    rabi: float
    energies: Tuple[float, float, float]
    drive_frequency: float

    @property
    def cos_half(self) -> float:
        return math.cos(self.theta / 2)

    @property
    def sin_half(self) -> float:
        return math.sin(self.theta / 2)

    @property
    def y(self) -> float:
        c = self.cos_half
        return math.inf if c == 0 else (self.sin_half / c) ** 2

    @property
    def splitting(self) -> float:
        return math.hypot(2.0 * self.rabi, self.detuning)

    def omega(self, m: int, n: int) -> float:
        """Dressed transition frequency omega_mn^(l)."""
        return self.energies[m - 1] - self.energies[n - 1]

    @property
    def mixed_pair(self) -> Pair:
        return _MIXED_PAIR[self.driving_type]

    @property
    def rotated_level(self) -> int:
        return _ROTATED_LEVEL[self.driving_type]


def derive_frame(circuit: CircuitSpec, drive: DriveSpec) -> Frame:
    """Rotating frame with tan(theta) = 2 Omega / Delta, theta in [0, pi]."""
    d, om = drive.detuning, drive.rabi
    if om == 0 and d == 0:
        raise DegenerateDriveError("Omega = Delta = 0: frame undefined")
    theta = math.atan2(2.0 * om, d)
    s = math.hypot(2.0 * om, d)
    lo, hi = (d - s) / 2, (d + s) / 2
    l = drive.driving_type
    if l == 1:
        energies = (lo, hi, circuit.omega31)
        wd = circuit.omega21 - d
    elif l == 2:
        energies = (0.0, circuit.omega21 + lo, circuit.omega21 + hi)
        wd = circuit.omega32 - d
    else:
        energies = (lo, circuit.omega21, hi)
        wd = circuit.omega31 - d
    return Frame(l, theta, d, om, energies, wd)


def frame_unitary(frame: Frame) -> np.ndarray:
    """Static diagonalizing rotation U_r (columns are dressed states)."""
    c, s = frame.cos_half, frame.sin_half
    p, q = (i - 1 for i in frame.mixed_pair)
    u = np.eye(3)
    u[p, p], u[p, q], u[q, p], u[q, q] = c, s, -s, c
    return u


# ---------------------------------------------------------------------------
# loop-current harmonics


@dataclass(frozen=True)
class HarmonicEntry:
    m: int
    n: int
    k: int  # harmonic index: nu = k * omega_d, k in {-1, 0, 1}
    amplitude: complex
    nu: float
    delta: float  # omega_mn^(l) + nu in the dressed frame
    delta_bare: float  # the same weight evaluated at bare transition frequencies


@dataclass(frozen=True)
class HarmonicCurrent:
    driving_type: int
    drive_frequency: float
    entries: Tuple[HarmonicEntry, ...]

    def get(self, m: int, n: int, k: int) -> Optional[HarmonicEntry]:
        for e in self.entries:
            if (e.m, e.n, e.k) == (m, n, k):
                return e
        return None

    def element(self, m: int, n: int) -> List[HarmonicEntry]:
        return [e for e in self.entries if e.m == m and e.n == n]

    def evaluate(self, t: float) -> np.ndarray:
        """Ibar(t) as a 3x3 matrix."""
        out = np.zeros((3, 3), dtype=complex)
        for e in self.entries:
            out[e.m - 1, e.n - 1] += e.amplitude * np.exp(1j * e.nu * t)
        return out


def loop_current_harmonics(frame: Frame, circuit: CircuitSpec, cutoff: float = 1e-15) -> HarmonicCurrent:
    """Harmonic decomposition of Ibar(t) = U_r^T U_d(t)^dag I U_d(t) U_r.

    U_d(t) = exp(-i omega_d t P) with P the projector on the rotated level, so
    the (a, b) bare element acquires exp(i k omega_d t), k = P_a - P_b.
    """
    u = frame_unitary(frame)
    cur = circuit.current_elements
    rot = frame.rotated_level - 1
    wd = frame.drive_frequency
    scale = cutoff * max(1.0, float(np.abs(cur).max()))
    entries = []
    for m in range(3):
        for n in range(3):
            acc = {-1: 0j, 0: 0j, 1: 0j}
            sources: Dict[int, set] = {-1: set(), 0: set(), 1: set()}
            for a in range(3):
                for b in range(3):
                    w = u[a, m] * u[b, n]
                    if w == 0:
                        continue
                    k = int(a == rot) - int(b == rot)
                    acc[k] += w * cur[a, b]
                    if a != b:
                        sources[k].add(circuit.bare_omega(a + 1, b + 1))
            for k in (-1, 0, 1):
                if abs(acc[k]) <= scale:
                    continue
                nu = k * wd
                delta = frame.omega(m + 1, n + 1) + nu
                if len(sources[k]) > 1:
                    raise AssertionError("mixed bare sources in one harmonic")
                bare = sources[k].pop() if sources[k] else delta
                entries.append(HarmonicEntry(m + 1, n + 1, k, complex(acc[k]), nu, delta, bare))
    return HarmonicCurrent(frame.driving_type, wd, tuple(entries))


# ---------------------------------------------------------------------------
# rate tables


@dataclass(frozen=True)
class RateSet:
    driving_type: int
    K: Dict[Pair, float]
    K_phi: Dict[Pair, float]
    gamma: Dict[Pair, float]
    Gamma: Dict[Pair, float]
    lambdas: Dict[Pair, float]
    scale: float = 1.0

    @property
    def lambda_sum(self) -> float:
        return sum(self.lambdas.values())

    def coherence_decay(self, m: int, n: int) -> float:
        return self.Gamma[(m, n)]

    @property
    def min_Gamma(self) -> float:
        return min(self.Gamma.values())


def rate_tables(driving_type: int, theta: float, l21: float, l31: float, l32: float):
    """K and K_phi weights of the dressed-basis dissipator (unit prefactor)."""
    c2, s2 = math.cos(theta / 2) ** 2, math.sin(theta / 2) ** 2
    cs2 = c2 * s2
    if driving_type == 1:
        kphi = {(2, 1): 4 * cs2 * l21, (3, 1): cs2 * l21, (3, 2): cs2 * l21}
        K = {
            (2, 1): c2 * c2 * l21, (1, 2): s2 * s2 * l21,
            (3, 2): s2 * l31 + c2 * l32, (2, 3): 0.0,
            (3, 1): c2 * l31 + s2 * l32, (1, 3): 0.0,
        }
    elif driving_type == 2:
        kphi = {(2, 1): cs2 * l32, (3, 1): cs2 * l32, (3, 2): 4 * cs2 * l32}
        K = {
            (2, 1): l21 * c2 + l31 * s2, (1, 2): 0.0,
            (3, 2): l32 * c2 * c2, (2, 3): l32 * s2 * s2,
            (3, 1): l21 * s2 + l31 * c2, (1, 3): 0.0,
        }
    elif driving_type == 3:
        kphi = {(2, 1): cs2 * l31, (3, 1): 4 * cs2 * l31, (3, 2): cs2 * l31}
        K = {
            (2, 1): c2 * l21, (1, 2): s2 * l32,
            (3, 2): c2 * l32, (2, 3): s2 * l21,
            (3, 1): c2 * c2 * l31, (1, 3): s2 * s2 * l31,
        }
    else:
        raise ConfigError(f"driving type must be 1, 2 or 3, got {driving_type}")
    return K, kphi


def decay_rates(frame: Frame, circuit: CircuitSpec) -> RateSet:
    """gamma_mn = scale K_mn; Gamma_mn = scale (sum_k K_mk + sum_k K_nk + K_phi_mn)."""
    lam = circuit.lambdas
    K, kphi = rate_tables(frame.driving_type, frame.theta, lam[(2, 1)], lam[(3, 1)], lam[(3, 2)])
    g = circuit.rate_scale
    out = {m: sum(K[(m, k)] for k in (1, 2, 3) if k != m) for m in (1, 2, 3)}
    gamma = {key: g * v for key, v in K.items()}
    Gamma = {}
    for (m, n), kp in kphi.items():
        Gamma[(m, n)] = Gamma[(n, m)] = g * (out[m] + out[n] + kp)
    return RateSet(frame.driving_type, K, kphi, gamma, Gamma, dict(lam), g)


def closed_form_dephasing(driving_type: int, theta: float, l21: float, l31: float, l32: float) -> Dict[Pair, float]:
    """Dephasing rates quoted in closed form alongside each driving type."""
    c2, s2 = math.cos(theta / 2) ** 2, math.sin(theta / 2) ** 2
    lsum = l21 + l31 + l32
    if driving_type == 1:
        return {(3, 1): l31 + l32 + s2 * l21, (3, 2): l31 + l32 + c2 * l21}
    if driving_type == 2:
        return {(2, 1): l21 * c2 + (l31 + l32) * s2, (3, 1): l21 * s2 + (l31 + l32) * c2}
    return {(2, 1): l21 * c2 + s2 * lsum, (3, 2): s2 * l21 + c2 * lsum}


# ---------------------------------------------------------------------------
# zero-order state


@dataclass(frozen=True)
class SteadyState:
    driving_type: int
    populations: Tuple[float, float, float]

    def __post_init__(self):
        p = self.populations
        if abs(sum(p) - 1) > 1e-12 or min(p) < 0 or max(p) > 1:
            raise ValueError(f"invalid populations {p}")

    def matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.populations, dtype=complex))


def steady_state(frame: Frame, rates: RateSet) -> SteadyState:
    """Closed-form zero-order populations in the dressed basis."""
    c2, s2 = frame.cos_half ** 2, frame.sin_half ** 2
    l = frame.driving_type
    if l == 1:
        # rho11 = 1/(1+y^2), written in c, s so that theta = pi stays finite
        w = (c2 * c2, s2 * s2, 0.0)
    elif l == 2:
        w = (1.0, 0.0, 0.0)
    else:
        l21, l32 = rates.lambdas[(2, 1)], rates.lambdas[(3, 2)]
        w = (l21 * c2 * c2, l32 * c2 * s2, l21 * s2 * s2)
    tot = sum(w)
    return SteadyState(l, tuple(x / tot for x in w))


# ---------------------------------------------------------------------------
# probe addressing

@dataclass(frozen=True)
class ProcessInfo:
    """Static bookkeeping for one (driving type, probe type) pair.

    Frequencies are written as integer keys (a, b) meaning a*omega_d + b*omega_p.
    """

    l: int
    k: int
    control: Tuple[int, int]  # quantity tuned onto a dressed resonance
    output: Tuple[int, int]  # converted output frequency
    branches: Tuple[Pair, Pair]  # dressed transitions (m, n) addressed, omega_mn^(l)
    bare_in: Pair
    bare_out: Pair
    frame_levels: Tuple[int, int, int]  # rotation pattern making the probe static

    @property
    def conjugating(self) -> bool:
        return self.output[1] < 0

    @property
    def output_label(self) -> str:
        return {1: "omega1-", 2: "omega2+", 3: "omega3-", 4: "omega4+", 5: "omega5+", 6: "omega6-"}[self.k]


PROCESSES: Dict[Tuple[int, int], ProcessInfo] = {
    (1, 1): ProcessInfo(1, 1, (0, 1), (-1, 1), ((3, 1), (3, 2)), (3, 1), (3, 2), (0, 0, 1)),
    (1, 2): ProcessInfo(1, 2, (1, 1), (1, 1), ((3, 1), (3, 2)), (3, 2), (3, 1), (0, 0, 1)),
    (2, 3): ProcessInfo(2, 3, (-1, 1), (-1, 1), ((2, 1), (3, 1)), (3, 1), (2, 1), (0, 1, 1)),
    (2, 4): ProcessInfo(2, 4, (0, 1), (1, 1), ((2, 1), (3, 1)), (2, 1), (3, 1), (0, 1, 1)),
    (3, 5): ProcessInfo(3, 5, (0, 1), (1, -1), ((2, 1), (2, 3)), (2, 1), (3, 2), (0, 1, 0)),
    (3, 6): ProcessInfo(3, 6, (1, -1), (1, -1), ((2, 1), (2, 3)), (3, 2), (2, 1), (0, 1, 0)),
}


def process_info(l: int, k: int) -> ProcessInfo:
    try:
        return PROCESSES[(l, k)]
    except KeyError:
        raise ConfigError(f"probe type {k} is not compatible with driving type {l}") from None


@dataclass(frozen=True)
class ProbeSpec:
    """Probe addressed as (branch, offset) from a dressed resonance.

    branch 1 or 2 selects the dressed transition; offset is the signed detuning
    of the tuned quantity (probe, sum or difference frequency) from it.
    """

    probe_type: int
    branch: int = 1
    offset: float = 0.0
    amplitude: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.probe_type not in range(1, 7):
            raise ConfigError(f"probe type must be in 1..6, got {self.probe_type}")
        if self.branch not in (1, 2):
            raise ConfigError(f"unknown branch {self.branch}")
        if self.amplitude < 0:
            raise ConfigError("probe amplitude must be non-negative")
        if not math.isfinite(self.offset):
            raise ConfigError("probe offset must be finite")

    @property
    def driving_type(self) -> int:
        return (self.probe_type + 1) // 2

    @property
    def complex_amplitude(self) -> complex:
        return self.amplitude * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class ProbeFrequencies:
    probe: float  # omega_p
    output: float  # converted frequency
    resonance: float  # dressed resonance the tuned quantity addresses
    drive: float

    def of(self, key: Tuple[int, int]) -> float:
        return key[0] * self.drive + key[1] * self.probe


def resolve_probe(frame: Frame, probe: ProbeSpec) -> ProbeFrequencies:
    info = process_info(frame.driving_type, probe.probe_type)
    m, n = info.branches[probe.branch - 1]
    res = frame.omega(m, n)
    a, b = info.control
    wd = frame.drive_frequency
    wp = (res + probe.offset - a * wd) / b
    out = info.output[0] * wd + info.output[1] * wp
    return ProbeFrequencies(wp, out, res, wd)

"""Numerical master-equation oracle.

Everything here is built from the frame, rate tables and current harmonics of
:mod:`deltamix.model` alone; the closed-form Lorentzians of
:mod:`deltamix.response` are used only as the comparison target.

Density matrices are vectorized row-major, ``vec(rho)[3*i + j] = rho[i, j]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .model import (
    CircuitSpec,
    Frame,
    HarmonicCurrent,
    ProbeSpec,
    RateSet,
    loop_current_harmonics,
    process_info,
    resolve_probe,
)

Key = Tuple[int, int]
_EYE = np.eye(3)


class DegeneracyError(RuntimeError):
    """Liouvillian null space is not one-dimensional."""


class SingularResponseError(RuntimeError):
    """First-order system is singular (undamped driven coherence)."""


class NonStationaryError(RuntimeError):
    """Demodulation residual too large: horizon too short or drive too strong."""


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    order: str  # "0", "1" or "full"

    def hermiticity_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h).min())


@dataclass(frozen=True)
class FirstOrder:
    """First-order response: rho1(t) = sum_key X[key] exp(-i w_key t)."""

    components: Dict[Key, np.ndarray]
    drive_frequency: float
    probe_frequency: float

    def frequency(self, key: Key) -> float:
        return key[0] * self.drive_frequency + key[1] * self.probe_frequency

    def at(self, t: float) -> DensityMatrix:
        out = np.zeros((3, 3), dtype=complex)
        for key, x in self.components.items():
            out += x * np.exp(-1j * self.frequency(key) * t)
        return DensityMatrix(out, "1")


@dataclass(frozen=True)
class SpectralMap:
    """Complex amplitudes c_key of I_s(t) = sum_key c_key exp(-i w_key t)."""

    amplitudes: Dict[Key, complex]
    drive_frequency: float
    probe_frequency: float

    def frequency(self, key: Key) -> float:
        return key[0] * self.drive_frequency + key[1] * self.probe_frequency

    def nonzero(self, threshold: float) -> Dict[Key, complex]:
        return {k: v for k, v in self.amplitudes.items() if abs(v) > threshold}

    def positive(self, threshold: float = 0.0) -> Dict[Key, complex]:
        return {k: v for k, v in self.nonzero(threshold).items() if self.frequency(k) > 0}

    def phasor(self, key: Key) -> complex:
        """Phasor I~ of the real current component Re(I~ exp(-i w t))."""
        return 2.0 * self.amplitudes.get(key, 0j)


# ---------------------------------------------------------------------------
# generators


def commutator_super(h: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i [h, rho]."""
    return -1j * (np.kron(h, _EYE) - np.kron(_EYE, h.T))


def dissipator_super(rates: RateSet) -> np.ndarray:
    """Population transfer via gamma, coherence decay via Gamma/2."""
    d = np.zeros((9, 9), dtype=complex)
    for (m, n), g in rates.gamma.items():
        if g == 0:
            continue
        src, dst = 4 * (m - 1), 4 * (n - 1)
        d[dst, src] += g
        d[src, src] -= g
    for (m, n), big in rates.Gamma.items():
        d[3 * (m - 1) + (n - 1), 3 * (m - 1) + (n - 1)] = -0.5 * big
    return d


def liouvillian(frame: Frame, rates: RateSet, shift: Optional[np.ndarray] = None) -> np.ndarray:
    """Zero-order generator; ``shift`` subtracts a diagonal frame Hamiltonian."""
    h = np.diag(np.asarray(frame.energies, dtype=float))
    if shift is not None:
        h = h - np.diag(shift)
    return commutator_super(h) + dissipator_super(rates)


def steady_state_numeric(frame: Frame, rates: RateSet, tol: float = 1e-9) -> DensityMatrix:
    """Trace-normalized null vector of the Liouvillian."""
    lv = liouvillian(frame, rates)
    # rescale so the singular-value test is unit free
    norm = np.abs(lv).max()
    _, sv, vh = np.linalg.svd(lv / norm)
    if sv[-2] < tol:
        raise DegeneracyError(f"null space is degenerate (second singular value {sv[-2]:.3e})")
    rho = vh[-1].conj().reshape(3, 3)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho, "0")


# ---------------------------------------------------------------------------
# probe coupling


@dataclass(frozen=True)
class CouplingTerm:
    """Coefficient of sigma_mn exp(-i w t) in the probe Hamiltonian (over hbar)."""

    m: int
    n: int
    key: Key
    value: complex


def probe_couplings(
    frame: Frame,
    circuit: CircuitSpec,
    probe: ProbeSpec,
    harmonics: Optional[HarmonicCurrent] = None,
    rwa: bool = True,
    cutoff: Optional[float] = None,
) -> List[CouplingTerm]:
    """Expand -M Ibar(t) Re(I~ exp(-i w_p t)) into rotating components.

    With ``rwa`` only terms whose interaction-picture frequency
    |omega_mn^(l) - w| stays below ``cutoff`` (default: half the smallest bare
    transition frequency) are kept.
    """
    if harmonics is None:
        harmonics = loop_current_harmonics(frame, circuit)
    freqs = resolve_probe(frame, probe)
    if cutoff is None:
        cutoff = 0.5 * min(circuit.omega21, circuit.omega32)
    amp = probe.complex_amplitude
    pref = -circuit.mutual_inductance / circuit.hbar
    terms = []
    for e in harmonics.entries:
        # I~/2 exp(-i w_p t) and conj(I~)/2 exp(+i w_p t); Ibar carries exp(i k w_d t)
        for b, a_p in ((1, amp / 2), (-1, amp.conjugate() / 2)):
            key = (-e.k, b)
            w = key[0] * freqs.drive + key[1] * freqs.probe
            if rwa and abs(frame.omega(e.m, e.n) - w) > cutoff:
                continue
            val = pref * e.amplitude * a_p
            if val != 0:
                terms.append(CouplingTerm(e.m, e.n, key, val))
    return terms


def coupling_matrices(terms: List[CouplingTerm]) -> Dict[Key, np.ndarray]:
    out: Dict[Key, np.ndarray] = {}
    for t in terms:
        mat = out.setdefault(t.key, np.zeros((3, 3), dtype=complex))
        mat[t.m - 1, t.n - 1] += t.value
    return out


# ---------------------------------------------------------------------------
# first-order response


def linear_response_numeric(
    frame: Frame,
    rates: RateSet,
    probe: ProbeSpec,
    steady: DensityMatrix,
    circuit: CircuitSpec,
    rwa: bool = True,
) -> FirstOrder:
    """Solve (L0 + i w) X = i [V_w, rho0] for every drive component w."""
    freqs = resolve_probe(frame, probe)
    lv = liouvillian(frame, rates)
    rho0 = steady.matrix
    comps = {}
    for key, v in coupling_matrices(probe_couplings(frame, circuit, probe, rwa=rwa)).items():
        w = key[0] * freqs.drive + key[1] * freqs.probe
        rhs = (1j * (v @ rho0 - rho0 @ v)).reshape(-1)
        a = lv + 1j * w * np.eye(9)
        # a driven coherence with no damping and zero detuning is singular
        driven = np.abs(rhs) > 0
        diag = np.abs(np.diag(a))[driven]
        if diag.size and diag.min() <= 1e-14 * max(1.0, abs(w)):
            raise SingularResponseError("driven coherence has zero dephasing on resonance")
        try:
            x = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularResponseError(str(exc)) from exc
        comps[key] = x.reshape(3, 3)
    return FirstOrder(comps, freqs.drive, freqs.probe)


def scattered_amplitudes(
    frame: Frame,
    harmonics: HarmonicCurrent,
    rho1: FirstOrder,
    circuit: CircuitSpec,
    bare: bool = True,
) -> SpectralMap:
    """I_s(t) = -(i M / 2 Z_T) sum delta_mnk Ibar_mnk exp(i nu t) rho_nm(t).

    ``bare`` evaluates delta_mnk at bare transition frequencies.
    """
    pref = -0.5j * circuit.mutual_inductance / circuit.line_impedance
    amps: Dict[Key, complex] = {}
    for key, x in rho1.components.items():
        for e in harmonics.entries:
            r = x[e.n - 1, e.m - 1]
            if r == 0:
                continue
            d = e.delta_bare if bare else e.delta
            out = (key[0] - e.k, key[1])
            amps[out] = amps.get(out, 0j) + pref * d * e.amplitude * r
    return SpectralMap(amps, rho1.drive_frequency, rho1.probe_frequency)


def response_from_spectrum(
    spectrum: SpectralMap, circuit: CircuitSpec, probe: ProbeSpec, driving_type: int
) -> Tuple[complex, complex]:
    """Gain and photon-flux-normalized conversion efficiency.

    For phase-conjugating processes the output scales with conj(I~), and the
    efficiency is normalized by conj(I~) times exp(-i arg I~).
    """
    info = process_info(driving_type, probe.probe_type)
    amp = probe.complex_amplitude
    if amp == 0:
        raise ValueError("zero probe amplitude: response undefined")
    g = 1.0 + spectrum.phasor((0, 1)) / amp
    flux = math.sqrt(circuit.bare_omega(*info.bare_in) / circuit.bare_omega(*info.bare_out))
    out = spectrum.phasor(info.output)
    if info.conjugating:
        eta = out / amp.conjugate() * complex(math.cos(probe.phase), -math.sin(probe.phase))
    else:
        eta = out / amp
    return g, eta * flux


def oracle_response(
    frame: Frame, rates: RateSet, circuit: CircuitSpec, probe: ProbeSpec
) -> Tuple[complex, complex, SpectralMap]:
    """Full linear-solve chain: steady state, first order, scattered current."""
    if probe.amplitude == 0:
        probe = ProbeSpec(probe.probe_type, probe.branch, probe.offset, 1.0, probe.phase)
    steady = steady_state_numeric(frame, rates)
    harm = loop_current_harmonics(frame, circuit)
    rho1 = linear_response_numeric(frame, rates, probe, steady, circuit)
    spec = scattered_amplitudes(frame, harm, rho1, circuit)
    g, eta = response_from_spectrum(spec, circuit, probe, frame.driving_type)
    return g, eta, spec


# ---------------------------------------------------------------------------
# time-domain oracle


@dataclass(frozen=True)
class OracleControls:
    """Integration and demodulation settings; times in units of 1/gamma_u.

    ``transient`` and ``window`` default to max(10/Gamma_min, 20/gap) and
    20/Gamma_min, where gap is the slowest Liouvillian decay rate.
    ``amplitude_ratio`` fixes eps_max/Gamma_min when the probe amplitude is
    left at zero; pass ``use_probe_amplitude`` to integrate the probe as given.
    """

    amplitude_ratio: float = 1e-3
    use_probe_amplitude: bool = False
    transient: Optional[float] = None
    window: Optional[float] = None
    rtol: float = 1e-10
    atol: float = 1e-12
    residual_threshold: float = 1e-6
    samples: Optional[int] = None
    rwa: bool = True
    method: str = "DOP853"


@dataclass
class OracleReport:
    analytic: Tuple[complex, complex]
    linear: Tuple[complex, complex]
    time_domain: Tuple[complex, complex]
    discrepancy: Dict[str, float]
    amplitude: float
    amplitude_ratio: float
    samples: int
    nfev: int
    transient: float
    horizon: float
    residual: float
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float
    defined: bool = True
    notes: List[str] = field(default_factory=list)

    @property
    def quadratic_constant(self) -> float:
        """C in |dG|/|G| <= C (eps/Gamma_min)^2, from the worse of G and eta."""
        worst = max(self.discrepancy.get("time_G", 0.0), self.discrepancy.get("time_eta", 0.0))
        sq = self.amplitude_ratio ** 2
        return worst / sq if sq > 0 else math.nan

    def as_dict(self) -> dict:
        def cx(z):
            return {"re": z.real, "im": z.imag, "abs": abs(z)}

        return {
            "analytic": {"G": cx(self.analytic[0]), "eta": cx(self.analytic[1])},
            "linear_solve": {"G": cx(self.linear[0]), "eta": cx(self.linear[1])},
            "time_domain": {"G": cx(self.time_domain[0]), "eta": cx(self.time_domain[1])},
            "discrepancy": dict(self.discrepancy),
            "amplitude": self.amplitude,
            "amplitude_ratio": self.amplitude_ratio,
            "quadratic_constant": self.quadratic_constant,
            "samples": self.samples,
            "nfev": self.nfev,
            "transient": self.transient,
            "horizon": self.horizon,
            "residual": self.residual,
            "trace_error": self.trace_error,
            "hermiticity_error": self.hermiticity_error,
            "min_eigenvalue": self.min_eigenvalue,
            "defined": self.defined,
            "notes": list(self.notes),
        }


def liouvillian_gap(rates: RateSet) -> float:
    """Slowest nonzero decay rate of the dissipator."""
    ev = np.linalg.eigvals(dissipator_super(rates))
    re = -ev.real
    scale = max(re.max(), 1e-300)
    nz = re[re > 1e-10 * scale]
    return float(nz.min()) if nz.size else 0.0


def _relative(a: complex, b: complex) -> float:
    return abs(a - b) / abs(b) if b != 0 else abs(a - b)


def _demodulate(t: np.ndarray, z: np.ndarray, freqs: List[float], merge: float):
    """Least-squares fit z(t) = sum_j c_j exp(-i f_j t); returns (coeffs, residual norm).

    Frequencies within ``merge`` of each other share one basis column.
    """
    cols: List[float] = []
    index = []
    for f in freqs:
        for j, g in enumerate(cols):
            if abs(f - g) <= merge:
                index.append(j)
                break
        else:
            index.append(len(cols))
            cols.append(f)
    basis = np.exp(-1j * np.outer(t, cols))
    coef, *_ = np.linalg.lstsq(basis, z, rcond=None)
    resid = z - basis @ coef
    return [coef[j] for j in index], float(np.linalg.norm(resid))


def time_domain_oracle(
    frame: Frame,
    rates: RateSet,
    probe: ProbeSpec,
    circuit: CircuitSpec,
    controls: Optional[OracleControls] = None,
    steady=None,
) -> OracleReport:
    """Integrate the probed master equation and demodulate the first-order response.

    The equation is solved in the interaction picture of the dressed
    Hamiltonian, where the explicit dissipator is unchanged and each probe
    term sigma_mn exp(-i w t) rotates at omega_mn - w.  Starting from the
    zero-order steady state, coherences are sampled after the transient and
    fitted against the interaction-picture frequencies of the probe keys.
    """
    from .model import steady_state as closed_steady
    from .response import respond

    ctl = controls or OracleControls()
    if steady is None:
        steady = closed_steady(frame, rates)
    rho0 = steady_state_numeric(frame, rates).matrix
    harm = loop_current_harmonics(frame, circuit)
    freqs = resolve_probe(frame, probe)
    gmin = rates.min_Gamma
    if gmin <= 0:
        raise SingularResponseError("zero dephasing rate: time-domain response undefined")

    unit = ProbeSpec(probe.probe_type, probe.branch, probe.offset, 1.0, probe.phase)
    eps1 = max((abs(c.value) for c in probe_couplings(frame, circuit, unit, harm, rwa=True)), default=0.0)
    if ctl.use_probe_amplitude:
        amp = probe.amplitude
    else:
        amp = ctl.amplitude_ratio * gmin / eps1 if eps1 > 0 else 0.0
    ratio = amp * eps1 / gmin
    run = ProbeSpec(probe.probe_type, probe.branch, probe.offset, amp, probe.phase)

    analytic = respond(frame, rates, unit, steady)
    g_lin, eta_lin, _ = oracle_response(frame, rates, circuit, unit)

    gap = liouvillian_gap(rates)
    transient = ctl.transient if ctl.transient is not None else max(10.0 / gmin, 20.0 / gap)
    window = ctl.window if ctl.window is not None else 20.0 / gmin
    horizon = transient + window

    terms = probe_couplings(frame, circuit, run, harm, rwa=ctl.rwa)
    mats = coupling_matrices(terms)
    keys = sorted(mats)
    # interaction-picture rotation of each element of each key: exp(i (omega_mn - w) t)
    e = np.asarray(frame.energies, dtype=float)
    wdiff = e[:, None] - e[None, :]
    comps, rates_ip = [], []
    for key in keys:
        w = freqs.of(key)
        for m, n in zip(*np.nonzero(mats[key])):
            h = np.zeros((3, 3), dtype=complex)
            h[m, n] = mats[key][m, n]
            comps.append(commutator_super(h))
            rates_ip.append(wdiff[m, n] - w)
    comps_arr = np.array(comps) if comps else np.zeros((0, 9, 9), dtype=complex)
    om = np.array(rates_ip, dtype=float)
    ld = dissipator_super(rates)

    def rhs(t, v):
        a = ld + np.tensordot(np.exp(1j * om * t), comps_arr, axes=1) if om.size else ld
        return a @ v

    fmax = float(np.abs(om).max()) if om.size else 0.0
    n = ctl.samples or int(max(2000, math.ceil(8 * window * fmax / (2 * math.pi))))
    t_eval = np.linspace(transient, horizon, n)
    sol = solve_ivp(rhs, (0.0, horizon), rho0.reshape(-1).astype(complex), method=ctl.method,
                    t_eval=t_eval, rtol=ctl.rtol, atol=ctl.atol)
    if not sol.success:
        raise NonStationaryError(f"integration failed: {sol.message}")
    traj = sol.y.T.reshape(-1, 3, 3)

    tr_err = float(np.abs(np.trace(traj, axis1=1, axis2=2) - 1).max())
    herm = float(np.abs(traj - np.conj(np.transpose(traj, (0, 2, 1)))).max())
    min_ev = float(min(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() for r in traj[:: max(1, n // 200)]))
    report = dict(
        amplitude=amp, amplitude_ratio=ratio, samples=int(sol.t.size), nfev=int(sol.nfev),
        transient=transient, horizon=horizon, trace_error=tr_err, hermiticity_error=herm, min_eigenvalue=min_ev,
    )
    nan = complex(math.nan, math.nan)
    if amp == 0:
        drift = float(np.abs(traj - rho0).max())
        return OracleReport((analytic.gain, analytic.efficiency), (g_lin, eta_lin), (nan, nan), {},
                            residual=drift, defined=False, notes=["zero probe amplitude: G and eta undefined"],
                            **report)

    # resolution limit of the window; exact coincidences share a column
    merge = 1e-9 * max(1.0, fmax)
    cutoff = 0.5 * min(circuit.omega21, circuit.omega32)
    xs = {key: np.zeros((3, 3), dtype=complex) for key in keys}
    res2 = sig2 = 0.0
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            z = traj[:, i, j]
            sig2 += float(np.linalg.norm(z)) ** 2
            use = [key for key in keys if not ctl.rwa or abs(freqs.of(key) - wdiff[i, j]) <= cutoff]
            fr = [freqs.of(key) - wdiff[i, j] for key in use]
            # DC and second-order mixing products are fitted but discarded
            aux = {0.0}
            for a in range(len(keys)):
                for b in range(a, len(keys)):
                    f = freqs.of(keys[a]) + freqs.of(keys[b]) - wdiff[i, j]
                    if not ctl.rwa or abs(f) <= cutoff:
                        aux.add(f)
            aux_list = sorted(aux)
            fr_all, use_all = fr + aux_list, use + [None] * len(aux_list)
            coef, r = _demodulate(t_eval, z, fr_all, merge)
            res2 += r * r
            for key, c in zip(use_all, coef):
                if key is not None:
                    xs[key][i, j] = c
    residual = math.sqrt(res2 / sig2) if sig2 > 0 else 0.0
    # third-order terms at new frequencies contribute O(ratio^2) to the residual
    threshold = ctl.residual_threshold + 10.0 * ratio ** 2
    if residual > threshold:
        raise NonStationaryError(
            f"demodulation residual {residual:.3e} exceeds {threshold:.3e}: horizon too short or amplitude too large"
        )

    rho1 = FirstOrder(xs, freqs.drive, freqs.probe)
    spec = scattered_amplitudes(frame, harm, rho1, circuit)
    g_t, eta_t = response_from_spectrum(spec, circuit, run, frame.driving_type)
    a_g, a_eta = analytic.gain, analytic.efficiency
    disc = {
        "linear_G": _relative(g_lin, a_g),
        "linear_eta": _relative(eta_lin, a_eta),
        "time_G": _relative(g_t, a_g),
        "time_eta": _relative(eta_t, a_eta),
    }
    return OracleReport((a_g, a_eta), (g_lin, eta_lin), (g_t, eta_t), disc, residual=residual, **report)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltamix.lindblad import (
    DegeneracyError,
    NonStationaryError,
    OracleControls,
    SingularResponseError,
    dissipator_super,
    linear_response_numeric,
    liouvillian,
    liouvillian_gap,
    loop_current_harmonics,
    oracle_response,
    probe_couplings,
    scattered_amplitudes,
    steady_state_numeric,
    time_domain_oracle,
)
from deltamix.model import (
    PROCESSES,
    DriveSpec,
    ProbeSpec,
    RatioSet,
    circuit_from_ratios,
    decay_rates,
    derive_frame,
    process_info,
    steady_state,
)
from deltamix.response import respond

PAIRS = sorted(PROCESSES)


def setup(l, y=0.6, l2=2.0, l3=1.5, splitting=100.0, **circ_kw):
    r = RatioSet.from_any(lambda2=l2, lambda3=l3)
    c = circuit_from_ratios(r, **circ_kw)
    f = derive_frame(c, DriveSpec.from_y(l, y, splitting))
    return r, c, f, decay_rates(f, c)


# --- steady state -------------------------------------------------------------


def test_steady_type1_resonant():
    _, _, f, rates = setup(1, y=1.0)
    rho = steady_state_numeric(f, rates)
    assert np.allclose(rho.matrix, np.diag([0.5, 0.5, 0.0]), atol=1e-10)
    assert rho.order == "0"


@pytest.mark.parametrize("y", [0.01, 0.3, 1.0, 7.0])
def test_steady_type2_ground(y):
    _, _, f, rates = setup(2, y=y)
    assert np.allclose(steady_state_numeric(f, rates).matrix, np.diag([1.0, 0, 0]), atol=1e-10)


def test_steady_type3_matches_closed_form():
    rng = np.random.default_rng(7)
    for _ in range(50):
        _, _, f, rates = setup(3, y=10 ** rng.uniform(-2, 2), l2=10 ** rng.uniform(-2, 2), l3=10 ** rng.uniform(-2, 2))
        num = steady_state_numeric(f, rates).matrix
        assert np.allclose(num, np.diag(steady_state(f, rates).populations), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1, 2, 3]), st.floats(1e-2, 1e2), st.floats(1e-2, 1e2), st.floats(1e-2, 1e2))
def test_steady_state_invariants(l, y, l2, l3):
    _, _, f, rates = setup(l, y=y, l2=l2, l3=l3)
    rho = steady_state_numeric(f, rates)
    assert abs(np.trace(rho.matrix) - 1) < 1e-8
    assert rho.hermiticity_error() < 1e-10
    assert rho.min_eigenvalue() > -1e-8


def test_liouvillian_single_zero_mode():
    for l in (1, 2, 3):
        _, _, f, rates = setup(l)
        ev = np.linalg.eigvals(liouvillian(f, rates))
        assert np.sum(np.abs(ev) < 1e-9) == 1
        assert ev.real.max() < 1e-12
        assert liouvillian_gap(rates) > 0


def test_degenerate_null_space():
    _, _, f, rates = setup(1)
    dead = type(rates)(**{**rates.__dict__, "gamma": {k: 0.0 for k in rates.gamma}})
    with pytest.raises(DegeneracyError):
        steady_state_numeric(f, dead)


def test_dissipator_trace_preserving():
    _, _, _, rates = setup(3)
    d = dissipator_super(rates)
    tr = np.eye(3).reshape(-1)
    assert np.allclose(tr @ d, 0, atol=1e-14)


# --- first order --------------------------------------------------------------


def test_zero_coupling_gives_zero_response():
    _, c, f, rates = setup(1)
    rho1 = linear_response_numeric(f, rates, ProbeSpec(1, 1, 0.0, 0.0), steady_state_numeric(f, rates), c)
    assert all(np.all(x == 0) for x in rho1.components.values())


def test_on_resonance_rho31():
    _, c, f, rates = setup(1)
    p = ProbeSpec(1, 1, 0.0, 1.0)
    ss = steady_state_numeric(f, rates)
    rho1 = linear_response_numeric(f, rates, p, ss, c)
    eps = next(t.value for t in probe_couplings(f, c, p) if (t.m, t.n) == (3, 1))
    want = -1j * eps * ss.matrix[0, 0] / (rates.Gamma[(3, 1)] / 2)
    assert rho1.components[(0, 1)][2, 0] == pytest.approx(want, rel=1e-12)


def test_first_order_traceless_and_paired():
    _, c, f, rates = setup(3)
    p = ProbeSpec(5, 1, 0.4, 1.0, 0.7)
    rho1 = linear_response_numeric(f, rates, p, steady_state_numeric(f, rates), c)
    for key, x in rho1.components.items():
        assert abs(np.trace(x)) < 1e-14
        partner = rho1.components[(-key[0], -key[1])]
        assert np.allclose(partner, x.conj().T, atol=1e-14)
    m = rho1.at(1.234).matrix
    assert np.allclose(m, m.conj().T, atol=1e-14)


def test_zero_dephasing_is_singular():
    _, c, f, rates = setup(1)
    g = dict(rates.Gamma)
    g[(3, 1)] = g[(1, 3)] = 0.0
    bad = type(rates)(**{**rates.__dict__, "Gamma": g})
    with pytest.raises(SingularResponseError):
        linear_response_numeric(f, bad, ProbeSpec(1, 1, 0.0, 1.0), steady_state_numeric(f, rates), c)


@pytest.mark.parametrize("l,k,expected", [(1, 1, {(0, 1), (-1, 1)}), (1, 2, {(0, 1), (1, 1)})])
def test_spectral_keys(l, k, expected):
    _, c, f, rates = setup(l)
    _, _, spec = oracle_response(f, rates, c, ProbeSpec(k, 1, 0.2, 1.0))
    pos = set(spec.positive(1e-12))
    assert pos == expected
    assert pos == {(0, 1), process_info(l, k).output}


def test_spectral_reality_pairing():
    _, c, f, rates = setup(2)
    _, _, spec = oracle_response(f, rates, c, ProbeSpec(3, 2, -0.3, 1.0, 0.2))
    for key, v in spec.nonzero(1e-15).items():
        assert spec.amplitudes[(-key[0], -key[1])] == pytest.approx(np.conj(v), abs=1e-15)


def test_oracle_matches_response():
    rng = np.random.default_rng(3)
    worst = 0.0
    for l, k in PAIRS:
        for _ in range(10):
            r, c, f, rates = setup(l, y=10 ** rng.uniform(-1, 1), l2=10 ** rng.uniform(-1.5, 1.5),
                                   l3=10 ** rng.uniform(-1.5, 1.5), splitting=10 ** rng.uniform(0.5, 2.5))
            p = ProbeSpec(k, int(rng.integers(1, 3)), rng.normal() * 3, 1.0, rng.uniform(0, 6))
            g, eta, _ = oracle_response(f, rates, c, p)
            res = respond(f, rates, p, steady_state(f, rates), r)
            worst = max(worst, abs(g - res.gain) / abs(res.gain), abs(eta - res.efficiency) / abs(res.efficiency))
    assert worst < 1e-9


def test_scattered_amplitudes_bare_switch():
    _, c, f, rates = setup(1)
    p = ProbeSpec(1, 1, 0.0, 1.0)
    rho1 = linear_response_numeric(f, rates, p, steady_state_numeric(f, rates), c)
    h = loop_current_harmonics(f, c)
    a = scattered_amplitudes(f, h, rho1, c, bare=True).amplitudes[(0, 1)]
    b = scattered_amplitudes(f, h, rho1, c, bare=False).amplitudes[(0, 1)]
    # dressed and bare delta differ by O(S / omega)
    assert abs(a - b) / abs(a) < 1e-2


# --- time domain ----------------------------------------------------------------


@pytest.mark.parametrize("l,k", PAIRS)
@pytest.mark.parametrize("branch", [1, 2])
def test_time_domain_matches_analytic(l, k, branch):
    _, c, f, rates = setup(l)
    rep = time_domain_oracle(f, rates, ProbeSpec(k, branch, 0.3), c)
    assert rep.defined
    assert rep.amplitude_ratio == pytest.approx(1e-3)
    assert rep.discrepancy["time_G"] < 1e-2 and rep.discrepancy["time_eta"] < 1e-2
    assert rep.discrepancy["linear_G"] < 1e-9 and rep.discrepancy["linear_eta"] < 1e-9
    assert rep.transient >= 10 / rates.min_Gamma
    assert rep.horizon - rep.transient >= 20 / rates.min_Gamma - 1e-9
    assert rep.trace_error < 1e-8 and rep.hermiticity_error < 1e-8 and rep.min_eigenvalue > -1e-8


def test_time_domain_quadratic_scaling():
    _, c, f, rates = setup(1)
    ratios = np.array([1e-1, 1e-2, 1e-3])
    errs = []
    for a in ratios:
        rep = time_domain_oracle(f, rates, ProbeSpec(1, 1, 0.3), c, OracleControls(amplitude_ratio=a))
        errs.append(max(rep.discrepancy["time_G"], rep.discrepancy["time_eta"]))
    slope = np.polyfit(np.log10(ratios), np.log10(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.3)


def test_time_domain_zero_amplitude():
    _, c, f, rates = setup(1)
    rep = time_domain_oracle(f, rates, ProbeSpec(1, 1, 0.3), c, OracleControls(use_probe_amplitude=True))
    assert not rep.defined
    assert np.isnan(rep.time_domain[0]) and np.isnan(rep.time_domain[1])
    assert rep.residual < 1e-8
    assert rep.notes
    d = rep.as_dict()
    assert d["defined"] is False


def test_time_domain_short_window_is_nonstationary():
    _, c, f, rates = setup(1)
    ctl = OracleControls(transient=0.0, window=2.0)
    with pytest.raises(NonStationaryError):
        time_domain_oracle(f, rates, ProbeSpec(1, 1, 0.3), c, ctl)


def test_time_domain_without_rwa():
    _, c, f, rates = setup(1, splitting=20.0, omega21=400.0, omega31=1000.0)
    rep = time_domain_oracle(f, rates, ProbeSpec(1, 1, 0.3), c, OracleControls(rwa=False))
    assert rep.discrepancy["time_G"] < 1e-2

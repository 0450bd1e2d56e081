from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fscns.calculus import conormal_apply, dphi, value_of
from fscns.diagnostics import (EnergyTracker, ThetaTracker, energy_ledger, good_unknowns,
                               layer_probe, layer_width, structural_residuals, taylor_sign,
                               theta_m)
from fscns.dynamics import FlowState, PhysParams, Stepper, StepperConfig, integrate
from fscns.dynamics.presets import capillary_wave, equilibrium, random_perturbation
from fscns.errors import ContractError
from fscns.geometry import ChartMetric, build_grid
from helpers import Modes


def _state(g, rho, v, h, A=1.0):
    return FlowState(np.asarray(rho, float), np.asarray(v, float), np.asarray(h, float), 0.0, g, A)


def _random_volume(g, seed, amp=0.1):
    # smooth band-limited fields in closed form
    rng = np.random.default_rng(seed)
    Y = g.y[:, None]
    Z = g.z_nodes[None, :]
    out = np.zeros(g.shape)
    for k in range(1, 4):
        a, b, c = rng.standard_normal(3)
        out = out + amp / k * (a * np.cos(k * Y) + b * np.sin(k * Y)) * np.cos(c * Z + k)
    return out


# energy

def test_rest_energy_is_constant():
    g = build_grid(N_y=16, N_z=32)
    P = PhysParams(eps=0.1, sigma=0.2)
    st = equilibrium(g, P)
    tr = EnergyTracker(P)
    led0 = tr.ledger(st)
    assert led0.kinetic == 0 and led0.dissipation_rate == 0
    stepper = Stepper(g, P)
    for _ in range(5):
        new = stepper.advance(st)
        tr.on_step(st, new, new.t - st.t)
        st = new
    assert abs(tr.balance_defect()) <= 1e-12 * led0.total


def test_energy_terms_of_rest_state():
    g = build_grid(N_y=16, N_z=32, Z_max=1.0)
    P = PhysParams(sigma=0.3, p_e=1.0)
    led = energy_ledger(equilibrium(g, P), P)
    vol = 2 * np.pi
    assert led.internal == pytest.approx(vol / (P.gamma - 1), rel=1e-14)
    assert led.external == pytest.approx(vol, rel=1e-14)
    assert led.capillary == pytest.approx(0.3 * 2 * np.pi, rel=1e-14)


def test_dissipation_rate_quadrature():
    # v = (sin z, 0): S_12 = S_21 = cos z / 2, so 2 mu |S|^2 = cos^2 z
    g = build_grid(N_y=8, N_z=256, Z_max=1.0)
    P = PhysParams(eps=1.0, mu=1.0, lam=0.0)
    v = np.zeros((2,) + g.shape)
    v[0] = np.sin(g.z_nodes)[None, :]
    led = energy_ledger(_state(g, np.ones(g.shape), v, np.zeros(g.hshape)), P)
    ref = 2 * np.pi * quad(lambda z: np.cos(z) ** 2, -1, 0, epsabs=1e-14)[0]
    assert abs(led.dissipation_rate - ref) <= 1e-9


# good unknowns

def test_good_unknowns_flat_chart():
    g = build_grid(N_y=16, N_z=24)
    P = PhysParams()
    rho = 1.0 + _random_volume(g, 0)
    v = np.stack([_random_volume(g, 1), _random_volume(g, 2)])
    s = _state(g, rho, v, np.zeros(g.hshape))
    for alpha in [(0, 1, 0, 0), (0, 0, 0, 1), (0, 1, 0, 1)]:
        V, Q = good_unknowns(s, P, alpha)
        assert np.array_equal(V, value_of(conormal_apply(v, alpha, s.metric)))


@pytest.mark.parametrize("alpha", [(0, 1, 0, 0), (0, 0, 0, 1)])
def test_good_unknowns_two_routes(alpha):
    g = build_grid(N_y=32, N_z=48, Z_max=1.5)
    md = Modes(4, amp=0.2)
    P = PhysParams()
    h = md.h(g.y)
    v = np.stack([_random_volume(g, 5), _random_volume(g, 6)])
    s = _state(g, 1.0 + _random_volume(g, 7), v, h)
    m = s.metric
    V, _ = good_unknowns(s, P, alpha)
    # independent route: d_z v / d_z phi with closed-form lift and Z^a eta
    Y = g.y[:, None] * np.ones(g.shape)
    Z = g.z_nodes[None, :] * np.ones(g.shape)
    Zeta = md.eta_y(Y, Z) if alpha[1] else Z / (1 - Z) * md.eta_z(Y, Z)
    vz = value_of(dphi(v, m, "z"))
    ref = value_of(conormal_apply(v, alpha, m)) - vz * Zeta
    assert np.max(np.abs(V - ref)) <= 1e-10


def test_good_unknowns_linear_scaling():
    g = build_grid(N_y=32, N_z=32)
    P = PhysParams()
    v = np.stack([_random_volume(g, 8), _random_volume(g, 9)])
    rho = 1.0 + _random_volume(g, 10)
    diffs = []
    for a in (1e-4, 2e-4):
        s = _state(g, rho, v, a * np.cos(2 * g.y))
        V, _ = good_unknowns(s, P, (0, 1, 0, 0))
        diffs.append(np.linalg.norm(value_of(conormal_apply(v, (0, 1, 0, 0), s.metric)) - V))
    assert diffs[1] / diffs[0] == pytest.approx(2.0, rel=0.05)


def test_good_unknowns_order_contract():
    g = build_grid(N_y=8, N_z=16)
    with pytest.raises(ContractError):
        good_unknowns(equilibrium(g, PhysParams()), PhysParams(), (0, 0, 0, 0))


# conormal energy

def test_theta_zero_state_is_one():
    g = build_grid(N_y=8, N_z=16)
    s = _state(g, np.zeros(g.shape), np.zeros((2,) + g.shape), np.zeros(g.hshape))
    rep = theta_m([s], 2, PhysParams(), alpha0_max=0)
    assert rep.theta_m == 1.0


@pytest.mark.parametrize("m", [1, 2, 3])
def test_theta_equilibrium_closed_form(m):
    # constant fields: only the zeroth conormal derivative of p survives
    g = build_grid(N_y=16, N_z=24, Z_max=1.5)
    P = PhysParams(p_e=1.3, eps=0.1, sigma=0.2)
    s = equilibrium(g, P)
    rep = theta_m([s, s.replace(t=0.1)], m, P)
    assert rep.theta_m == pytest.approx(1 + 2 * np.pi * 1.5 * 1.3 ** 2, rel=1e-13)
    # squared round-off from differentiating a constant
    assert all(v <= 1e-20 for k, v in rep.addends.items() if k != "pv_Hm")
    assert all(v <= 1e-20 for v in rep.integrals.values())


def test_theta_cap_contract():
    for kw in ({"m_cap": 4}, {"m_cap": 0}, {"alpha0_max": 3}):
        with pytest.raises(ContractError):
            ThetaTracker(PhysParams(), **kw)


@pytest.fixture(scope="module")
def wavy():
    g = build_grid(N_y=32, N_z=32, Z_max=1.5)
    P = PhysParams(eps=0.01, sigma=0.1)
    return g, P, random_perturbation(g, P, seed=2, amplitude=0.05)


def test_theta_addends_nonnegative_and_monotone(wavy):
    g, P, s = wavy
    vals = [theta_m([s], m, P).theta_m for m in (1, 2, 3)]
    rep = theta_m([s], 2, P)
    assert all(v >= 0 for v in rep.addends.values())
    assert vals[0] <= vals[1] <= vals[2]


def test_theta_translation_invariance(wavy):
    g, P, s = wavy
    sh = 5
    moved = FlowState(np.roll(s.rho, sh, axis=0), np.roll(s.v, sh, axis=1),
                      np.roll(s.h, sh, axis=0), s.t, g, s.A)
    a = ThetaTracker(P).instant(s)[0]
    b = ThetaTracker(P).instant(moved)[0]
    for k in a:
        assert abs(a[k] - b[k]) <= 1e-10 * max(abs(a[k]), 1e-300)


# Taylor sign

def test_taylor_sign_linear_pressure():
    g = build_grid(N_y=8, N_z=16)
    P = PhysParams(gamma=2.0)
    p = 1.0 - g.z_nodes[None, :] * np.ones(g.shape)
    s = _state(g, np.sqrt(p), np.zeros((2,) + g.shape), np.zeros(g.hshape))
    assert taylor_sign(s, P) == pytest.approx(1.0, rel=1e-12)


def test_taylor_sign_uniform_pressure_is_exactly_zero():
    g = build_grid(N_y=8, N_z=16)
    P = PhysParams()
    assert taylor_sign(equilibrium(g, P), P) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_taylor_sign_smooth_oracle(seed):
    g = build_grid(N_y=32, N_z=256, Z_max=1.5)
    md = Modes(seed, amp=0.1)
    P = PhysParams(gamma=2.0)
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.5, 1.5, 3)
    Y = g.y[:, None]
    Z = g.z_nodes[None, :]
    p = 2.0 - c[0] * Z + 0.1 * np.sin(c[1] * Z) * np.cos(Y) + 0.05 * np.cos(c[2] * Z) * np.sin(2 * Y)
    pz_top = -c[0] + 0.1 * c[1] * np.cos(g.y)
    h = md.h(g.y)
    s = _state(g, np.sqrt(p), np.zeros((2,) + g.shape), h)
    J_top = 1.0 + md.eta_z(g.y, 0.0)
    assert abs(taylor_sign(s, P) - np.min(-pz_top / J_top)) <= 1e-7


# structural identities

def test_residuals_flat_rest():
    g = build_grid(N_y=16, N_z=16)
    s = equilibrium(g, PhysParams())
    assert all(v == 0 for v in structural_residuals(s).values())


@pytest.mark.parametrize("seed", range(3))
def test_residuals_random_curved(seed):
    g = build_grid(N_y=32, N_z=512, Z_max=1.5)
    md = Modes(seed, amp=0.2)
    v = np.stack([_random_volume(g, seed + 10), _random_volume(g, seed + 20)])
    s = _state(g, np.ones(g.shape), v, md.h(g.y))
    res = structural_residuals(s)
    assert res["div_sup"] <= 1e-8 and res["vort_sup"] <= 1e-8


def test_stress_trace_after_viscous_step():
    g = build_grid(N_y=32, N_z=48, Z_max=1.5)
    P = PhysParams(eps=0.02, sigma=0.1)
    s = capillary_wave(g, P)
    new = Stepper(g, P).advance(s)
    scale = P.eps * np.max(np.abs(new.v)) + P.sigma
    assert structural_residuals(new, P)["sn_trace"] <= 1e-6 * scale


# layer probe

def _tanh_state(g, eps):
    v = np.zeros((2,) + g.shape)
    v[0] = np.tanh(g.z_nodes / np.sqrt(eps))[None, :]
    return _state(g, np.ones(g.shape), v, np.zeros(g.hshape))


@pytest.mark.parametrize("eps", [1e-2, 3e-3, 1e-3])
def test_layer_width_tanh(eps):
    g = build_grid(N_y=8, N_z=512, Z_max=1.0, stretch=3.0)
    w = layer_width(_tanh_state(g, eps).v, g)
    # |sech^2| falls to 10% at acosh(sqrt(10)) = 1.818
    assert 1.0 * np.sqrt(eps) <= w <= 2.0 * np.sqrt(eps)
    assert w / np.sqrt(eps) == pytest.approx(np.arccosh(np.sqrt(10)), rel=1e-2)


def test_layer_second_derivative_scaling():
    g = build_grid(N_y=8, N_z=512, Z_max=1.0, stretch=3.0)
    vals = [layer_probe(_tanh_state(g, e), PhysParams(eps=e)).eps_dzz_v for e in (1e-2, 3e-3, 1e-3)]
    assert max(vals) / min(vals) <= 1.05
    # max |tanh''| = 4 / (3 sqrt 3)
    assert vals[0] == pytest.approx(4 / (3 * np.sqrt(3)), rel=1e-2)


def test_layer_probe_rest():
    g = build_grid(N_y=8, N_z=32, Z_max=1.3)
    lp = layer_probe(equilibrium(g, PhysParams(eps=0.1)), PhysParams(eps=0.1))
    assert lp.layer_width == 1.3 and lp.eps_dzz_v == 0


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-4, 1e-1))
def test_layer_width_monotone_in_eps(eps):
    g = build_grid(N_y=8, N_z=128, Z_max=2.0, stretch=2.0)
    w1 = layer_width(_tanh_state(g, eps).v, g)
    w2 = layer_width(_tanh_state(g, 4 * eps).v, g)
    assert w1 < w2

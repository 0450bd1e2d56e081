from __future__ import annotations

import warnings

import numpy as np
import pytest

from fscns.dynamics import (FlowState, PhysParams, Stepper, StepperConfig, advance, ale_speed,
                            apply_dynamic_bc, cfl_dt, euler_reference_run, integrate,
                            kinematic_rate, pressure, rhs, sound_speed, stress_residual)
from fscns.dynamics.mms import ManufacturedSolution
from fscns.dynamics.presets import (capillary_wave, equilibrium, harmonic_lift, make_initial,
                                    random_perturbation, shear_layer)
from fscns.errors import ConfigError, ContractError, HealthError, PhysicalValidityError
from fscns.geometry import build_grid
from fscns.harness.mms_verify import mms_verify
from fscns.harness.config import parse_config


def _flat_state(g, rho, v, A=1.0):
    return FlowState(rho, v, np.zeros(g.hshape), 0.0, g, A)


# equation of state

def test_pressure_trivial():
    assert pressure(1.0, 1.4) == 1.0
    assert sound_speed(1.0, 1.4) == pytest.approx(np.sqrt(1.4), rel=1e-15)
    assert pressure(2.0, 2.0) == 4.0
    assert sound_speed(2.0, 2.0) == 2.0


def test_sound_speed_matches_pressure_derivative():
    rho = np.random.default_rng(0).uniform(0.5, 2.0, 200)
    d = 1e-5
    dp = (pressure(rho + d, 1.4) - pressure(rho - d, 1.4)) / (2 * d)
    assert np.max(np.abs(dp - sound_speed(rho, 1.4) ** 2)) <= 1e-8


@pytest.mark.parametrize("fn", [pressure, sound_speed])
def test_nonpositive_density_is_health_error(fn):
    with pytest.raises(HealthError):
        fn(np.array([1.0, 0.0]), 1.4)


def test_params_list_every_field():
    with pytest.raises(ConfigError) as ei:
        PhysParams(gamma=1.0, mu=0.0, eps=2.0, sigma=-1.0, p_e=0.0, bottom_bc="wall")
    assert set(ei.value.fields) >= {"gamma", "mu", "lam", "eps", "sigma", "p_e", "bottom_bc"}


def test_negative_lambda_is_flagged():
    with pytest.warns(UserWarning):
        PhysParams(mu=1.0, lam=-0.5)


def test_stepper_config_validation():
    with pytest.raises(ConfigError) as ei:
        StepperConfig(cfl=1.5, dt_max=0.0, dt=-1.0)
    assert set(ei.value.fields) >= {"cfl", "dt_max", "dt"}


# transport speed

def test_ale_speed_trivial_cases():
    g = build_grid(N_y=16, N_z=16)
    rho = np.ones(g.shape)
    v = np.zeros((2,) + g.shape)
    assert np.all(ale_speed(_flat_state(g, rho, v)) == 0)
    v[1] = 1.0
    st = _flat_state(g, rho, v)
    from fscns.geometry import ChartMetric
    frozen = ChartMetric(g, st.h, np.zeros(g.hshape), 1.0)
    np.testing.assert_allclose(ale_speed(st, frozen), 1.0, atol=1e-15)


def test_ale_speed_vanishes_at_surface_after_step():
    g = build_grid(N_y=32, N_z=48, Z_max=1.5)
    P = PhysParams(sigma=0.1)
    st = random_perturbation(g, P, seed=3)
    new = advance(st, P)
    assert np.max(np.abs(ale_speed(new)[:, -1])) <= 1e-10


# tendencies

def test_rest_state_has_zero_tendencies():
    g = build_grid(N_y=16, N_z=24)
    for P in (PhysParams(), PhysParams(eps=0.1, sigma=0.5)):
        st = equilibrium(g, P)
        t = rhs(st, P)
        # the viscous block sees round-off from differentiating constants
        assert np.max(np.abs(t.rho)) <= 1e-13 and np.max(np.abs(t.v)) <= 1e-13
        assert np.max(np.abs(t.h)) == 0


def test_linear_acoustic_tendencies():
    g = build_grid(N_y=32, N_z=256, Z_max=1.0)
    P = PhysParams(gamma=1.4)
    a = 1e-5
    Y, Z = np.meshgrid(g.y, g.z_nodes, indexing="ij")
    rho = 1.0 + a * np.cos(Y) * np.cos(2 * Z)
    v = a * np.stack([np.sin(2 * Y) * np.cos(Z), np.cos(Y) * np.sin(3 * Z)])
    t = rhs(_flat_state(g, rho, v), P)
    # linearisation about rho = 1, v = 0: rho_t = -div v, v_t = -gamma grad rho
    rho_t = -a * (2 * np.cos(2 * Y) * np.cos(Z) + 3 * np.cos(Y) * np.cos(3 * Z))
    v_t = -1.4 * a * np.stack([-np.sin(Y) * np.cos(2 * Z), -2 * np.cos(Y) * np.sin(2 * Z)])
    assert np.max(np.abs(t.rho - rho_t)) <= 1e-4 * np.max(np.abs(rho_t))
    assert np.max(np.abs(t.v - v_t)) <= 1e-4 * np.max(np.abs(v_t))


def test_kinematic_rate_formula():
    g = build_grid(N_y=32, N_z=8)
    h = 0.1 * np.sin(g.y)
    v = np.zeros((2,) + g.shape)
    v[0, :, -1] = 0.3
    v[1, :, -1] = np.cos(2 * g.y)
    np.testing.assert_allclose(kinematic_rate(v, h, g), np.cos(2 * g.y) - 0.03 * np.cos(g.y),
                               atol=1e-13)


# dynamic boundary condition

@pytest.mark.parametrize("eps", [0.0, 0.05])
def test_closure_flat_rest_is_untouched(eps):
    g = build_grid(N_y=16, N_z=24)
    P = PhysParams(eps=eps, sigma=0.7)
    st = equilibrium(g, P)
    out = apply_dynamic_bc(st, P)
    assert np.array_equal(out.v, st.v) and np.array_equal(out.rho, st.rho)


def test_closure_shear_gives_zero_surface_gradient():
    g = build_grid(N_y=16, N_z=64, Z_max=1.0)
    P = PhysParams(eps=0.05)
    st = shear_layer(g, P, U=0.1, width=0.3)
    from fscns.calculus import vertical_ops
    vz = st.v @ vertical_ops(g).D1T
    assert np.max(np.abs(vz[0, :, -1])) <= 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_closure_stress_residual(seed):
    g = build_grid(N_y=32, N_z=64, Z_max=1.5)
    P = PhysParams(eps=0.05, sigma=0.2, lam=0.3)
    st = random_perturbation(g, P, seed=seed, amplitude=0.05)
    res = stress_residual(st, P)
    scale = P.eps * np.max(np.abs(st.v)) + P.sigma + 1.0
    assert np.max(np.abs(res)) <= 1e-8 * scale


def test_euler_closure_sets_surface_pressure():
    g = build_grid(N_y=32, N_z=24)
    P = PhysParams(sigma=0.2)
    st = random_perturbation(g, P, seed=1)
    from fscns.geometry import mean_curvature
    p_top = st.rho[:, -1] ** P.gamma
    np.testing.assert_allclose(p_top, P.p_e - P.sigma * mean_curvature(st.h, g), atol=1e-13)


def test_euler_closure_rejects_negative_surface_pressure():
    g = build_grid(N_y=32, N_z=16)
    P = PhysParams(sigma=1.0, p_e=0.01)
    st = equilibrium(g, P).replace(h=0.2 * np.cos(3 * g.y))
    with pytest.raises(PhysicalValidityError):
        apply_dynamic_bc(st, P)


# time stepping

@pytest.mark.parametrize("eps,sigma", [(0.0, 0.0), (0.0, 0.3), (0.1, 0.3)])
def test_equilibrium_step_is_stationary(eps, sigma):
    g = build_grid(N_y=16, N_z=32, stretch=3.0)
    P = PhysParams(eps=eps, sigma=sigma)
    st = equilibrium(g, P)
    new = advance(st, P)
    assert new.t > 0
    for a, b in ((new.rho, st.rho), (new.v, st.v), (new.h, st.h)):
        assert np.max(np.abs(a - b)) <= 1e-12


def test_step_respects_dt_contract():
    g = build_grid(N_y=16, N_z=16)
    P = PhysParams()
    st = equilibrium(g, P)
    with pytest.raises(ContractError):
        advance(st, P, dt=10 * cfl_dt(st, P))


def test_kinematic_consistency_after_steps():
    g = build_grid(N_y=32, N_z=48, Z_max=1.5)
    P = PhysParams(eps=0.02, sigma=0.1)
    st = capillary_wave(g, P)
    stepper = Stepper(g, P)
    for _ in range(3):
        new = stepper.advance(st)
        dt = new.t - st.t
        # the surface moves with the kinematic rate of the stage states, so
        # the finite difference agrees to the time error of the scheme
        rate = 0.5 * (kinematic_rate(st.v, st.h, g) + kinematic_rate(new.v, new.h, g))
        assert np.max(np.abs((new.h - st.h) / dt - rate)) <= 1e-3 * (np.max(np.abs(rate)) + 1e-3)
        st = new


def test_acoustic_standing_wave_frequency():
    # rho' = cos(y) cos(k_z (z + Z)) satisfies both closures; omega^2 = gamma (1 + k_z^2).
    # The bottom follows the lift trace, negligible at this depth.
    Zm = 3.0
    g = build_grid(N_y=16, N_z=96, Z_max=Zm)
    P = PhysParams()
    kz = np.pi / (2 * Zm)
    a = 1e-5
    rho = 1.0 + a * np.cos(g.y)[:, None] * np.cos(kz * (g.z_nodes + Zm))[None, :]
    st = _flat_state(g, rho, np.zeros((2,) + g.shape))
    omega = np.sqrt(P.gamma * (1 + kz ** 2))
    T = 2 * np.pi / omega
    stepper = Stepper(g, P, StepperConfig(t_end=T, output_every=T / 40))
    ts, amp = [], []

    def rec(s):
        ts.append(s.t)
        amp.append(np.mean((s.rho[:, 0] - 1.0) * np.cos(g.y)) * 2 / a)

    integrate(st, stepper, on_output=rec)
    ts, amp = np.array(ts), np.array(amp)
    # least-squares frequency from the first zero crossing and the period
    i = np.argmax(amp < 0)
    t0 = ts[i - 1] - amp[i - 1] * (ts[i] - ts[i - 1]) / (amp[i] - amp[i - 1])
    assert 0.5 * np.pi / t0 == pytest.approx(omega, rel=1e-2)
    assert amp[-1] == pytest.approx(1.0, abs=2e-2)


def test_cfl_dt_rest_formula():
    g = build_grid(N_y=32, N_z=33, Z_max=1.0)
    P = PhysParams()
    st = equilibrium(g, P, A=2.0)
    cfg = StepperConfig(dt_max=10.0)
    dz = g.z_nodes[1] - g.z_nodes[0]
    ref = cfg.cfl * min(g.dy, 2.0 * dz) / np.sqrt(P.gamma)
    assert cfl_dt(st, P, cfg) == pytest.approx(ref, rel=1e-12)


def test_cfl_dt_halves_with_horizontal_resolution():
    P = PhysParams()
    cfg = StepperConfig(dt_max=10.0)
    # a large chart slope makes the vertical cells wide
    dts = [cfl_dt(equilibrium(build_grid(N_y=n, N_z=16, Z_max=1.0), P, A=100.0), P, cfg)
           for n in (16, 32)]
    assert dts[0] / dts[1] == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_cfl_dt_brute_force(seed):
    g = build_grid(N_y=16, N_z=20, Z_max=1.2, stretch=2.0)
    P = PhysParams()
    st = random_perturbation(g, P, seed=seed, amplitude=0.1)
    cfg = StepperConfig(dt_max=10.0)
    z, J = g.z_nodes, st.metric.J
    best = np.inf
    for i in range(g.N_y):
        for k in range(g.N_z):
            nb = [abs(z[k] - z[j]) for j in (k - 1, k + 1) if 0 <= j < g.N_z]
            sp = min(g.dy, J[i, k] * min(nb))
            c = np.sqrt(P.gamma * st.rho[i, k] ** (P.gamma - 1))
            best = min(best, cfg.cfl * sp / (np.linalg.norm(st.v[:, i, k]) + c))
    assert cfl_dt(st, P, cfg) == pytest.approx(best, rel=1e-12)


@pytest.mark.filterwarnings("ignore:Taylor sign")
def test_euler_reference_run_equilibrium():
    g = build_grid(N_y=16, N_z=24)
    P = PhysParams(eps=0.3)
    init = equilibrium(g, P)
    final, outs, notes = euler_reference_run(init, P, StepperConfig(t_end=0.2, output_every=0.1))
    assert len(outs) == 3 and final.t == pytest.approx(0.2)
    assert np.max(np.abs(final.rho - init.rho)) <= 1e-12
    assert np.max(np.abs(final.v)) <= 1e-12


def test_euler_reference_run_warns_without_taylor_sign():
    g = build_grid(N_y=16, N_z=24)
    P = PhysParams()
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        _, _, notes = euler_reference_run(equilibrium(g, P), P,
                                          StepperConfig(t_end=0.05, output_every=0.05))
    # a gravity-free rest state has a vanishing Taylor sign
    assert notes and any("Taylor" in str(x.message) for x in w)


@pytest.mark.slow
def test_capillary_wave_frequency():
    # incompressible finite-depth dispersion; the compressible correction is
    # of order (omega / (c k))^2, about 1e-2 here
    g = build_grid(N_y=32, N_z=32, Z_max=1.5)
    P = PhysParams(sigma=0.1)
    st = capillary_wave(g, P, amplitude=1e-3, A=1.0)
    k = 1.0
    omega = np.sqrt(P.sigma * k ** 3 * np.tanh(k * g.Z_max))
    ts, amp = [], []

    def rec(s):
        ts.append(s.t)
        amp.append(2 * np.mean(s.h * np.cos(g.y)))

    quarter = 0.5 * np.pi / omega
    integrate(st, Stepper(g, P, StepperConfig(t_end=1.3 * quarter, output_every=0.1)),
              on_output=rec)
    ts, amp = np.array(ts), np.array(amp)
    i = np.argmax(amp < 0)
    assert i > 0
    t0 = ts[i - 1] - amp[i - 1] * (ts[i] - ts[i - 1]) / (amp[i] - amp[i - 1])
    assert 0.5 * np.pi / t0 == pytest.approx(omega, rel=0.1)


# presets

def test_harmonic_lift_closed_form():
    g = build_grid(N_y=32, N_z=48, Z_max=1.5)
    f = np.cos(2 * g.y) + 0.3
    ref = 0.3 + np.cos(2 * g.y)[:, None] * (np.cosh(2 * (g.z_nodes + 1.5)) / np.cosh(3.0))
    assert np.max(np.abs(harmonic_lift(f, g) - ref)) <= 1e-13


def test_capillary_wave_is_balanced_at_surface():
    g = build_grid(N_y=32, N_z=48, Z_max=1.5)
    P = PhysParams(sigma=0.1)
    st = capillary_wave(g, P)
    from fscns.calculus import vertical_ops
    from fscns.geometry import mean_curvature
    p = st.rho ** P.gamma
    np.testing.assert_allclose(p[:, -1], P.p_e - P.sigma * mean_curvature(st.h, g), atol=1e-13)
    # no normal pressure gradient at the slip wall
    assert np.max(np.abs((p @ vertical_ops(g).D1T)[:, 0])) <= 1e-6


def test_unknown_preset():
    g = build_grid(N_y=8, N_z=8)
    with pytest.raises(ConfigError):
        make_initial("vortex", g, PhysParams())


def test_euler_rest_state_stays_at_rest_with_shallow_truncation():
    # at Z_max = 1 the bottom moves with a third of the mean surface velocity
    g = build_grid(N_y=8, N_z=32, Z_max=1.0)
    P = PhysParams(sigma=0.1)
    s = random_perturbation(g, P, seed=2, amplitude=1e-10)
    stepper = Stepper(g, P)
    for _ in range(3000):
        s = stepper.advance(s)
    assert np.max(np.abs(s.v)) <= 1e-8 and np.max(np.abs(s.rho - s.rho.mean())) <= 1e-8


# manufactured solutions

def test_manufactured_equilibrium_is_exact():
    g = build_grid(N_y=16, N_z=24)
    P = PhysParams(eps=0.1, sigma=0.1)
    ms = ManufacturedSolution(g, P, solution_id="equilibrium")
    final, _ = integrate(ms.exact(0.0), Stepper(g, P, StepperConfig(t_end=0.05), forcing=ms))
    ex = ms.exact(final.t)
    assert np.max(np.abs(final.rho - ex.rho)) <= 1e-12
    assert np.max(np.abs(final.v - ex.v)) <= 1e-12


def test_manufactured_needs_periodic_line():
    with pytest.raises(ContractError):
        ManufacturedSolution(build_grid(N_y=8, N_z=8, L=3.0), PhysParams())


def test_manufactured_refinement_euler():
    cfg = parse_config("[grid]\nN_y = 16\nZ_max = 1.0\n[physics]\nsigma = 0.1\n"
                       "[stepper]\nt_end = 0.02\ndt = 1e-3\n")
    # the density dissipation rows are second order, 12 points is pre-asymptotic
    rep = mms_verify(cfg, resolutions=(16, 32, 64))
    assert rep.exit_code == 0
    assert min(rep.orders.values()) >= 1.8

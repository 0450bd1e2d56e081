"""IMEX time stepping, step-size control and health monitors."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ..calculus import vertical_ops
from ..errors import ConfigError, ContractError, HealthError
from ..geometry import ChartMetric, check_diffeomorphism, dealias
from .closure import ImplicitColumnSolver, SurfaceClosure, apply_closure_explicit
from .physics import FlowState, implicit_block, kinematic_rate, rhs, sound_speed

__all__ = ["StepperConfig", "IMEX_SSP3", "Stepper", "advance", "cfl_dt", "check_health",
           "euler_reference_run", "integrate"]

log = logging.getLogger(__name__)


class _Tableau:
    """IMEX-SSP3(4,3,3) of Pareschi and Russo; explicit part is SSPRK3."""

    alpha = 0.24169426078821
    beta = 0.06042356519705
    eta = 0.12915286960590

    def __init__(self):
        a, b, e = self.alpha, self.beta, self.eta
        self.AI = np.array([[a, 0, 0, 0],
                            [-a, a, 0, 0],
                            [0, 1 - a, a, 0],
                            [b, e, 0.5 - b - e - a, a]])
        self.AE = np.array([[0, 0, 0, 0],
                            [0, 0, 0, 0],
                            [0, 1, 0, 0],
                            [0, 0.25, 0.25, 0]])
        self.b = np.array([0, 1 / 6, 1 / 6, 2 / 3])
        self.cE = self.AE.sum(axis=1)
        self.cI = self.AI.sum(axis=1)


IMEX_SSP3 = _Tableau()


@dataclass(frozen=True)
class StepperConfig:
    """Time stepping controls.

    Attributes
    ----------
    cfl : float
        Courant factor in ``(0, 1]``.
    dt_max : float
        Upper bound on the step.
    t_end : float
        Final time.
    output_every : float
        Spacing of output times; steps are shortened to land on them.
    scheme : str
        Only ``'imex-ssp3'`` is available.
    capillary_factor, relax_factor : float
        Safety factors of the capillary and surface-relaxation limits.
    dt : float or None
        Fixed step overriding the adaptive rule (still checked against it
        unless ``check_dt`` is false).
    """

    cfl: float = 0.4
    dt_max: float = 0.05
    t_end: float = 1.0
    output_every: float = 0.1
    scheme: str = "imex-ssp3"
    capillary_factor: float = 0.5
    relax_factor: float = 1.0
    dt: float | None = None
    check_dt: bool = True

    def __post_init__(self):
        probs = []
        if not 0 < self.cfl <= 1:
            probs.append(f"cfl: must lie in (0, 1], got {self.cfl!r}")
        if not self.dt_max > 0:
            probs.append(f"dt_max: must be positive, got {self.dt_max!r}")
        if not self.t_end >= 0:
            probs.append(f"t_end: must be nonnegative, got {self.t_end!r}")
        if not self.output_every > 0:
            probs.append(f"output_every: must be positive, got {self.output_every!r}")
        if self.scheme != "imex-ssp3":
            probs.append(f"scheme: unknown scheme {self.scheme!r}")
        if self.dt is not None and not self.dt > 0:
            probs.append(f"dt: must be positive, got {self.dt!r}")
        if probs:
            raise ConfigError(probs)


def cfl_dt(state, params, cfg=None):
    """Largest admissible step for ``state``.

    The transport limit is ``cfl * min(dy, J dz_local) / (|v| + c)`` over all
    nodes; it is further capped by the capillary limit
    ``0.5 dy^1.5 / sqrt(sigma / rho_min)``, the explicit horizontal viscous
    limit, the stiff surface pressure relaxation in viscous mode and
    ``dt_max``.
    """
    cfg = cfg or StepperConfig()
    g = state.grid
    z = g.z_nodes
    dzl = np.empty_like(z)
    dzl[1:-1] = np.minimum(z[1:-1] - z[:-2], z[2:] - z[1:-1])
    dzl[0] = z[1] - z[0]
    dzl[-1] = z[-1] - z[-2]
    J = state.metric.J
    speed = np.sqrt(np.sum(state.v ** 2, axis=0)) + sound_speed(state.rho, params.gamma)
    spacing = np.minimum(g.dy, J * dzl)
    dt = cfg.cfl * float(np.min(spacing / speed))
    rho_min = float(np.min(state.rho))
    if params.sigma > 0:
        dt = min(dt, cfg.capillary_factor * g.dy ** 1.5 / np.sqrt(params.sigma / rho_min))
    if params.eps > 0:
        nu = params.eps * (2 * params.mu + abs(params.lam)) / rho_min
        kmax = np.pi / g.dy
        dt = min(dt, 1.0 / (nu * g.d_h * kmax ** 2))
        p_max = float(np.max(state.rho[..., -1])) ** params.gamma
        dt = min(dt, cfg.relax_factor * params.eps * (2 * params.mu + params.lam)
                 / (params.gamma * p_max))
    return min(dt, cfg.dt_max)


def check_health(state, params):
    """Raise :class:`HealthError` if a monitor trips; return ``min J``."""
    for name, arr in (("rho", state.rho), ("v", state.v), ("h", state.h)):
        if not np.all(np.isfinite(arr)):
            raise HealthError("nan", f"non-finite {name} at t={state.t:.6g}", state=state)
    chk = check_diffeomorphism(ChartMetric(state.grid, state.h, None, state.A), params.c0_health)
    if not chk.passed:
        raise HealthError("jacobian", f"min J = {chk.min_J:.6g} below c0 = {params.c0_health}"
                          f" at index {chk.location}, t={state.t:.6g}",
                          state=state, location=chk.location)
    lo, hi = 1.0 / (4.0 * params.C0_health), 4.0 * params.C0_health
    rmin, rmax = float(np.min(state.rho)), float(np.max(state.rho))
    if rmin < lo or rmax > hi:
        raise HealthError("density", f"density range [{rmin:.6g}, {rmax:.6g}] leaves the band"
                          f" [{lo:.6g}, {hi:.6g}] at t={state.t:.6g}", state=state)
    return chk.min_J


class Stepper:
    """IMEX stepper bound to a grid, parameters and optional forcing."""

    def __init__(self, grid, params, cfg=None, forcing=None, filter_state=True):
        self.grid = grid
        self.params = params
        self.cfg = cfg or StepperConfig()
        self.forcing = forcing
        self.filter_state = filter_state
        self.tab = IMEX_SSP3
        self._solver = ImplicitColumnSolver(grid, params) if params.viscous else None

    def _metric(self, st):
        ht = kinematic_rate(st.v, st.h, self.grid)
        if self.forcing is not None:
            s = self.forcing.surface(st.t)
            if s is not None:
                ht = ht + s
        return ChartMetric(self.grid, st.h, ht, st.A)

    def _closure(self, rho, h, A, t):
        return SurfaceClosure(self.grid, self.params, h, A, rho[..., -1], t, self.forcing)

    def step(self, state, dt):
        """One IMEX-SSP3(4,3,3) step of size ``dt``."""
        P, tab, g = self.params, self.tab, self.grid
        t0 = state.t
        nst = 4
        F_rho, F_v, F_h, F_vi = [None] * nst, [None] * nst, [None] * nst, [None] * nst
        D2T = vertical_ops(g).D2T
        for i in range(nst):
            rho_i = state.rho.copy()
            h_i = state.h.copy()
            v_i = state.v.copy()
            for j in range(i):
                ae, ai = tab.AE[i, j], tab.AI[i, j]
                if ae:
                    rho_i += dt * ae * F_rho[j]
                    h_i += dt * ae * F_h[j]
                    v_i += dt * ae * F_v[j]
                if ai and F_vi[j] is not None:
                    v_i += dt * ai * F_vi[j]
            t_e = t0 + tab.cE[i] * dt
            if P.viscous:
                t_i = t0 + tab.cI[i] * dt
                clos = self._closure(rho_i, h_i, state.A, t_i)
                m_geo = ChartMetric(g, h_i, None, state.A)
                v_i = self._solver.solve(v_i, rho_i, m_geo, dt * tab.AI[i, i], clos)
                F_vi[i] = implicit_block(v_i, rho_i, m_geo, P, D2T)
                st_i = FlowState(rho_i, v_i, h_i, t_e, g, state.A)
            else:
                clos = self._closure(rho_i, h_i, state.A, t_e)
                v_i, rho_i = apply_closure_explicit(v_i, rho_i, clos, P)
                st_i = FlowState(rho_i, v_i, h_i, t_e, g, state.A)
            if i == 0 and tab.b[0] == 0 and not tab.AE[:, 0].any():
                continue
            tend = rhs(st_i, P, self.forcing, metric=self._metric(st_i), split=True)
            F_rho[i], F_v[i], F_h[i] = tend.rho, tend.v, tend.h

        rho = state.rho.copy()
        v = state.v.copy()
        h = state.h.copy()
        for j in range(nst):
            bj = tab.b[j]
            if not bj:
                continue
            rho += dt * bj * F_rho[j]
            v += dt * bj * F_v[j]
            h += dt * bj * F_h[j]
            if F_vi[j] is not None:
                v += dt * bj * F_vi[j]
        t1 = t0 + dt
        if self.filter_state:
            rho = dealias(rho, g)
            v = dealias(v, g)
            h = dealias(h, g, surface=True)
        clos = self._closure(rho, h, state.A, t1)
        v, rho = apply_closure_explicit(v, rho, clos, P)
        return FlowState(rho, v, h, t1, g, state.A)

    def dt_for(self, state):
        return cfl_dt(state, self.params, self.cfg)

    def advance(self, state, dt=None):
        limit = self.dt_for(state)
        if dt is None:
            dt = self.cfg.dt if self.cfg.dt is not None else limit
        if self.cfg.check_dt and dt > limit * (1 + 1e-12):
            raise ContractError(f"dt = {dt:.6g} exceeds the stability limit {limit:.6g}")
        new = self.step(state, dt)
        try:
            check_health(new, self.params)
        except HealthError as err:
            err.state = state
            raise
        return new


def advance(state, params, stepper=None, dt=None, forcing=None):
    """Advance ``state`` by one IMEX step (``dt`` defaults to :func:`cfl_dt`)."""
    cfg = stepper if isinstance(stepper, StepperConfig) else None
    st = stepper if isinstance(stepper, Stepper) else Stepper(state.grid, params, cfg, forcing)
    return st.advance(state, dt)


def integrate(state, stepper, t_end=None, output_every=None, on_output=None, on_step=None,
              max_steps=None):
    """March to ``t_end`` landing exactly on multiples of ``output_every``.

    ``on_output(state)`` is called at ``t = 0`` and every output time;
    ``on_step(old, new, dt)`` after every accepted step. Returns the final
    state and the number of steps.
    """
    cfg = stepper.cfg
    t_end = cfg.t_end if t_end is None else t_end
    every = cfg.output_every if output_every is None else output_every
    check_health(state, stepper.params)
    if on_output is not None:
        on_output(state)
    n_out = int(np.floor(t_end / every + 1e-9))
    targets = [every * (k + 1) for k in range(n_out)]
    if not targets or abs(targets[-1] - t_end) > 1e-12 * max(1.0, t_end):
        targets.append(t_end)
    steps = 0
    for target in targets:
        while state.t < target - 1e-12 * max(1.0, target):
            limit = stepper.dt_for(state)
            dt = cfg.dt if cfg.dt is not None else limit
            remaining = target - state.t
            if dt >= remaining * (1 - 1e-9):
                dt = remaining
            elif dt > 0.5 * remaining:
                # split the remainder evenly instead of leaving a sliver
                dt = 0.5 * remaining
            new = stepper.advance(state, dt)
            if abs(new.t - target) < 1e-12 * max(1.0, target):
                new = new.replace(t=target)
            if on_step is not None:
                on_step(state, new, dt)
            state = new
            steps += 1
            if max_steps is not None and steps >= max_steps:
                return state, steps
        if on_output is not None:
            on_output(state)
    return state, steps


def euler_reference_run(initial, params, cfg=None, on_output=None, on_step=None, taylor_c0=None):
    """Inviscid trajectory from ``initial`` for vanishing-viscosity comparisons.

    When ``sigma = 0`` the Taylor sign ``-d_z^phi p`` at the surface is
    monitored; a violation below ``c0 / 2`` issues a warning and the run
    continues. Returns ``(final_state, outputs, warnings_list)``.
    """
    from ..diagnostics import taylor_sign

    params = params.with_(eps=0.0)
    st = Stepper(initial.grid, params, cfg)
    outputs = []
    notes = []
    c0 = params.c0_health if taylor_c0 is None else taylor_c0

    def out(s):
        outputs.append(s)
        if params.sigma == 0:
            ts = taylor_sign(s, params)
            if ts < 0.5 * c0:
                msg = f"Taylor sign {ts:.4g} below c0/2 at t={s.t:.4g}"
                notes.append(msg)
                warnings.warn(msg, stacklevel=2)
        if on_output is not None:
            on_output(s)

    final, _ = integrate(initial, st, on_output=out, on_step=on_step)
    return final, outputs, notes

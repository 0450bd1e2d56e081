"""Monitored quantities: energy ledger, conormal energy, layer probes, identities."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .calculus import (Jet, conormal_apply, conormal_indices, conormal_norm, curl_phi_covariant,
                       div_phi, div_phi_conservative, dphi, dy, dz, dzz, integrate,
                       integrate_surface, jacobian_phi, laplace_phi, sym_grad_phi, value_of)
from .dynamics.physics import FlowState, kinematic_rate, rhs
from .errors import ContractError
from .geometry import ChartMetric, area_and_volume, hderiv

__all__ = [
    "EnergyLedger",
    "EnergyTracker",
    "ConormalReport",
    "ThetaTracker",
    "LayerProbe",
    "energy_ledger",
    "good_unknowns",
    "state_jets",
    "theta_m",
    "taylor_sign",
    "structural_residuals",
    "layer_probe",
]


# --------------------------------------------------------------------------
# energy


@dataclass
class EnergyLedger:
    kinetic: float
    internal: float
    external: float
    capillary: float
    dissipation_rate: float
    bottom_flux_rate: float
    cumulative_dissipation: float = 0.0
    bottom_flux: float = 0.0

    @property
    def total(self):
        return self.kinetic + self.internal + self.external + self.capillary

    def as_dict(self):
        out = asdict(self)
        out["total"] = self.total
        return out


def _stress(v, metric, params):
    S = sym_grad_phi(v, metric)
    div = np.trace(S)
    return S, div


def energy_ledger(state, params):
    """Physical energy and its rates for ``state``.

    Volume integrals use ``dV_t = J dy dz``. ``bottom_flux_rate`` is the
    rate of work done on the fluid through the truncation boundary,
    ``int [(p - p_e) v.N - (tau N).v] dy`` at ``z = -Z_max``.
    """
    g = state.grid
    m = state.metric
    rho, v = state.rho, state.v
    p = rho ** params.gamma
    kinetic = integrate(0.5 * rho * np.sum(v * v, axis=0), m, weighted=True)
    internal = integrate(p / (params.gamma - 1.0), m, weighted=True)
    geo = area_and_volume(state.h, m, g)
    external = params.p_e * geo.volume
    capillary = params.sigma * geo.area
    diss = 0.0
    flux = 0.0
    vN_b = np.sum(v[..., 0] * m.N[..., 0], axis=0)
    if params.eps > 0:
        S, div = _stress(v, m, params)
        dens = 2 * params.mu * np.sum(S * S, axis=(0, 1)) + params.lam * div * div
        diss = params.eps * integrate(dens, m, weighted=True)
        d1 = g.d_h + 1
        Nb = m.N[..., 0]
        tauN = [params.eps * (sum(2 * params.mu * S[a, b][..., 0] * Nb[b] for b in range(d1))
                              + params.lam * div[..., 0] * Nb[a]) for a in range(d1)]
        work = sum(tauN[a] * v[a][..., 0] for a in range(d1))
        flux = integrate_surface((p[..., 0] - params.p_e) * vN_b - work, g)
    else:
        flux = integrate_surface((p[..., 0] - params.p_e) * vN_b, g)
    return EnergyLedger(kinetic, internal, external, capillary, diss, flux)


class EnergyTracker:
    """Accumulates dissipation and bottom work with the trapezoid rule per step."""

    def __init__(self, params):
        self.params = params
        self.cum_diss = 0.0
        self.cum_flux = 0.0
        self._last = None
        self.E0 = None

    def ledger(self, state):
        led = energy_ledger(state, self.params)
        if self._last is not None and state.t != self._last[0]:
            dt = state.t - self._last[0]
            prev = self._last[1]
            self.cum_diss += 0.5 * dt * (prev.dissipation_rate + led.dissipation_rate)
            self.cum_flux += 0.5 * dt * (prev.bottom_flux_rate + led.bottom_flux_rate)
        if self.E0 is None:
            self.E0 = led.total
        self._last = (state.t, led)
        led.cumulative_dissipation = self.cum_diss
        led.bottom_flux = self.cum_flux
        return led

    def on_step(self, old, new, dt):
        if self._last is None or self._last[0] != old.t:
            self.ledger(old)
        self.ledger(new)

    def balance_defect(self):
        """``E(t) - E(0) + int dissipation - int bottom work`` at the last update."""
        led = self._last[1]
        return led.total - self.E0 + self.cum_diss - self.cum_flux


# --------------------------------------------------------------------------
# time stacks


def state_jets(state, params, order=1, forcing=None, delta=1e-5):
    """Time stacks of ``(rho, v, h)`` from the semi-discrete right-hand side.

    The first derivative is the tendency itself. The second is the
    directional derivative of the tendency along itself, taken with a
    central difference in state space.

    Returns
    -------
    rho, v, h : Jet
    metric : ChartMetric
        Chart carrying ``d_t h`` (and ``d_t^2 h`` when ``order = 2``).
    """
    if order not in (0, 1, 2):
        raise ContractError("time stacks are available up to depth 2")
    if order == 0:
        return Jet([state.rho]), Jet([state.v]), Jet([state.h]), state.metric
    F = rhs(state, params, forcing)
    c_rho, c_v, c_h = [state.rho, F.rho], [state.v, F.v_total], [state.h, F.h]
    if order == 2:
        scale = max(float(np.max(np.abs(F.v_total))), float(np.max(np.abs(F.rho))), 1e-300)
        d = delta / scale

        def shifted(s):
            return FlowState(state.rho + s * d * F.rho, state.v + s * d * F.v_total,
                             state.h + s * d * F.h, state.t + s * d, state.grid, state.A)

        Fp = rhs(shifted(1), params, forcing)
        Fm = rhs(shifted(-1), params, forcing)
        c_rho.append((Fp.rho - Fm.rho) / (2 * d))
        c_v.append((Fp.v_total - Fm.v_total) / (2 * d))
        c_h.append((Fp.h - Fm.h) / (2 * d))
    metric = ChartMetric(state.grid, state.h, c_h[1], state.A, c_h[2] if order == 2 else None)
    return Jet(c_rho), Jet(c_v), Jet(c_h), metric


# --------------------------------------------------------------------------
# good unknowns


def _lift_conormal(metric, alpha):
    """``Z^alpha eta`` from exact derivatives of the lift (``alpha_3 <= 3``)."""
    d = metric.grid.d_h
    a0, a3 = alpha[0], alpha[-1]
    beta = tuple(alpha[1:1 + d])
    if a3 > 3:
        raise ContractError("Z_3 powers above 3 are not available for the lift")
    z = metric.grid.z_nodes
    w = z / (1.0 - z)
    w1 = 1.0 / (1.0 - z) ** 2
    w2 = 2.0 / (1.0 - z) ** 3
    # (w d_z)^k as combinations of d_z^j
    coef = {0: [1.0], 1: [0.0, w], 2: [0.0, w * w1, w * w],
            3: [0.0, w * (w1 * w1 + w * w2), 3 * w * w * w1, w ** 3]}[a3]
    out = 0.0
    for j, c in enumerate(coef):
        if j == 0 and a3:
            continue
        out = out + c * metric.ext(beta, j, a0)
    return out


def good_unknowns(state, params, alpha, jets=None):
    """Alinhac good unknowns ``V = Z^a v - d_z^phi v Z^a eta`` and ``Q`` for ``p``.

    Parameters
    ----------
    state : FlowState
    params : PhysParams
    alpha : tuple of 4 ints
    jets : tuple, optional
        Output of :func:`state_jets`; built on demand when ``alpha_0 > 0``.
    """
    if sum(alpha) < 1:
        raise ContractError("good unknowns need |alpha| >= 1")
    K = alpha[0]
    if jets is None:
        jets = state_jets(state, params, order=K)
    rho, v, h, metric = jets
    rho, v = rho.truncate(K), v.truncate(K)
    p = rho ** params.gamma
    if not K:
        rho, v, p = rho.value, v.value, p.value
    Za_eta = _lift_conormal(metric, alpha)
    Zv = value_of(conormal_apply(v, alpha, metric))
    Zp = value_of(conormal_apply(p, alpha, metric))
    vz = value_of(dphi(value_of(v), metric, "z"))
    pz = value_of(dphi(value_of(p), metric, "z"))
    return Zv - vz * Za_eta, Zp - pz * Za_eta


# --------------------------------------------------------------------------
# conormal energy


@dataclass
class ConormalReport:
    theta_m: float
    addends: dict
    integrals: dict
    sup_instant: float
    taylor_min: float
    health: dict = field(default_factory=dict)
    good_unknowns: dict = field(default_factory=dict)
    m_cap: int = 2


def _plain_grad(f, grid):
    """Chart gradient ``(d_y, d_z)`` stacked on a new leading axis."""
    return [dy(f, grid, a) for a in range(grid.d_h)] + [dz(f, grid)]


def _plain_hessian(f, grid):
    d = grid.d_h
    out = []
    for a in range(d):
        for b in range(a, d):
            out.append(dy(dy(f, grid, a), grid, b))
        out.append(dy(dz(f, grid), grid, a))
    out.append(dzz(f, grid))
    return out


def _norm2(items, m, metric, weighted, a0):
    if m < 0:
        return 0.0
    return sum(conormal_norm(f, m, metric, weighted, alpha0_max=a0, squared=True) for f in items)


def _sup_conormal2(items, k, metric, a0):
    """``sup over |alpha| <= k`` of the sup norm of ``Z^alpha f``, squared."""
    grid = metric.grid
    best = 0.0
    for f in items:
        order = f.order if isinstance(f, Jet) else 0
        for alpha in conormal_indices(k, grid.d_h, min(a0, order)):
            g = value_of(conormal_apply(f, alpha, grid))
            best = max(best, float(np.max(np.abs(g))))
    return best ** 2


def _surface_conormal2(h_jet, k, grid, a0, weight_half=False):
    total = 0.0
    order = h_jet.order
    for alpha in conormal_indices(k, grid.d_h, min(a0, order)):
        if alpha[3]:
            continue
        g = h_jet.dt(alpha[0]).value if alpha[0] else h_jet.value
        for a in range(grid.d_h):
            if alpha[1 + a]:
                g = hderiv(g, grid, a, alpha[1 + a], surface=True)
        if weight_half:
            gh = np.fft.fftn(g) / g.size
            mesh = np.meshgrid(*([grid.xi] * grid.d_h), indexing="ij")
            ksq = sum(x * x for x in mesh)
            total += grid.L ** grid.d_h * float(np.sum(np.sqrt(1 + ksq) * np.abs(gh) ** 2))
        else:
            total += integrate_surface(g * g, grid)
    return total


class ThetaTracker:
    """Running evaluation of the capped conormal energy functional.

    Parameters
    ----------
    params : PhysParams
    m_cap : int
        Conormal order ``m``.
    alpha0_max : int
        Largest number of time derivatives inside the conormal norms (1 or 2).
    weighted : bool
        Use ``J dy dz`` instead of the plain measure.
    """

    def __init__(self, params, m_cap=2, alpha0_max=1, weighted=False):
        if m_cap < 1 or m_cap > 3:
            raise ContractError(f"m_cap must lie in [1, 3], got {m_cap}")
        if alpha0_max not in (0, 1, 2):
            raise ContractError("alpha0_max must be 0, 1 or 2")
        self.params = params
        self.m = m_cap
        self.a0 = alpha0_max
        self.weighted = weighted
        self.sup_instant = 0.0
        self.integrals = {"grad_p": 0.0, "lap_p": 0.0, "grad_v4": 0.0,
                          "eps_grad_v": 0.0, "eps2_hess_v": 0.0}
        self.last_addends = None
        self.history = []
        self._last = None
        self.taylor_min = np.inf

    def instant(self, state, jets=None):
        """Instantaneous addends and time-integrand values for ``state``."""
        P, m, a0 = self.params, self.m, self.a0
        g = state.grid
        if jets is None:
            jets = state_jets(state, P, order=a0)
        rho, v, h, metric = jets
        p = rho ** P.gamma
        comps_v = [v[k] for k in range(g.d_h + 1)]
        W = self.weighted
        grad_p = _plain_grad(p, g)
        grad_v = [gv for vk in comps_v for gv in _plain_grad(vk, g)]
        hess_v = [hv for vk in comps_v for hv in _plain_hessian(vk, g)]
        lap_p = laplace_phi(p, metric)
        eps = P.eps
        add = {
            "pv_Hm": _norm2([p] + comps_v, m, metric, W, a0),
            "grad_pv_Hm-2": _norm2(grad_p + grad_v, m - 2, metric, W, a0),
            "lap_p_H1": _norm2([lap_p], 1, metric, W, a0),
            "h_Hm": _surface_conormal2(h, m, g, a0),
            "sigma_grad_h_Hm": P.sigma * sum(
                _surface_conormal2(h.map(lambda x: hderiv(x, g, a, surface=True)), m, g, a0)
                for a in range(g.d_h)),
            "grad_pv_H1inf": _sup_conormal2(grad_p + grad_v, 1, metric, a0),
            "eps_grad_pv_Hm-1": eps * _norm2(grad_p + grad_v, m - 1, metric, W, a0),
            "eps_lap_p_H2": eps * _norm2([lap_p], 2, metric, W, a0),
            "eps_hess_v_inf": eps * max(float(np.max(np.abs(value_of(x)))) for x in hess_v) ** 2,
            "eps_Zm_h_half": eps * _surface_conormal2(h, m, g, a0, weight_half=True),
        }
        gv2 = _norm2(grad_v, m - 1, metric, W, a0)
        integrands = {
            "grad_p": _norm2(grad_p, m - 1, metric, W, a0),
            "lap_p": _norm2([lap_p], 2, metric, W, a0),
            "grad_v4": gv2 * gv2,
            "eps_grad_v": eps * (_norm2(grad_v, m, metric, W, a0)
                                 + _norm2(hess_v, m - 2, metric, W, a0)),
            "eps2_hess_v": eps ** 2 * _norm2(hess_v, m - 1, metric, W, a0),
        }
        return add, integrands

    def update(self, state, jets=None):
        add, integ = self.instant(state, jets)
        X = sum(add.values())
        self.sup_instant = max(self.sup_instant, X)
        if self._last is not None:
            dt = state.t - self._last[0]
            for k, val in integ.items():
                self.integrals[k] += 0.5 * dt * (self._last[1][k] + val)
        self._last = (state.t, integ)
        self.last_addends = add
        self.taylor_min = min(self.taylor_min, taylor_sign(state, self.params))
        self.history.append((state.t, 1.0 + X))
        return self.report()

    @property
    def value(self):
        return 1.0 + self.sup_instant + sum(self.integrals.values())

    def report(self):
        return ConormalReport(theta_m=self.value, addends=dict(self.last_addends or {}),
                              integrals=dict(self.integrals), sup_instant=self.sup_instant,
                              taylor_min=self.taylor_min, m_cap=self.m)


def theta_m(history, m_cap, params, alpha0_max=1, weighted=False):
    """Capped conormal energy over a list of states ordered in time."""
    tr = ThetaTracker(params, m_cap, alpha0_max, weighted)
    if not history:
        raise ContractError("theta_m needs at least one state")
    for st in history:
        tr.update(st)
    return tr.report()


# --------------------------------------------------------------------------
# Taylor sign


def taylor_sign(state, params):
    """``min_y (-d_z^phi p)`` at the surface, one-sided vertical stencil."""
    p = state.rho ** params.gamma
    g = state.grid
    from .calculus import vertical_ops
    D1 = vertical_ops(g).D1
    dpz = p @ D1[-1]
    J_top = state.A + state.metric.eta_z[..., -1]
    return float(np.min(-dpz / J_top)) + 0.0


# --------------------------------------------------------------------------
# structural identities


def _omega_n(omega, N, d_h):
    if d_h == 1:
        return np.stack([-omega * N[1], omega * N[0]])
    return np.cross(omega, N, axis=0)


def _project(Pi, w):
    return np.einsum("ab...,b...->a...", Pi, w)


def structural_residuals(state, params=None):
    """Residuals of the exact identities relating normal derivatives.

    Returns a dictionary with sup and L2 norms of

    * ``div``: ``d_z v . n - (J / |N|) (div^phi v - div_y v_y)`` where
      ``div^phi v`` is taken in conservative form;
    * ``vort``: ``2 Pi(S N) - omega x N - 2 Pi(d_1 v . N, d_2 v . N, 0)``
      with the vorticity from the covariant curl;

    and the sup norms at ``z = 0`` of ``S_n = Pi(S N)`` and of
    ``zeta_n = omega x N + 2 Pi{(grad_y, 0) d_t eta - (grad^phi N)^T v}``.
    """
    g = state.grid
    d = g.d_h
    m = state.metric
    v = state.v
    J, N, n, Pi = m.J, m.N, m.n, m.Pi
    vz = dz(v, g)
    hdiv = sum(dy(v[a], g, a) for a in range(d))
    r_div = np.sum(vz * n, axis=0) - J / m.N_norm * (div_phi_conservative(v, m) - hdiv)

    S = sym_grad_phi(v, m)
    SN = np.einsum("ab...,b...->a...", S, N)
    omega = curl_phi_covariant(v, m)
    tang = np.stack([np.sum(dy(v, g, a) * N, axis=0) for a in range(d)] + [np.zeros(g.shape)])
    r_vort = 2 * _project(Pi, SN) - _omega_n(omega, N, d) - 2 * _project(Pi, tang)

    Sn_top = _project(Pi, SN)[..., -1]
    # vorticity by composition for the trace of zeta_n
    G = jacobian_phi(v, m)
    if d == 1:
        om = G[1][0] - G[0][1]
    else:
        om = np.stack([G[2][1] - G[1][2], G[0][2] - G[2][0], G[1][0] - G[0][1]])
    wn = _omega_n(om, N, d)
    grad_eta_t = np.stack([dy(m.eta_t, g, a) for a in range(d)] + [np.zeros(g.shape)])
    dN = [[dphi(N[j], m, i) for j in range(d + 1)] for i in list(range(1, d + 1)) + ["z"]]
    gNv = np.stack([sum(dN[i][j] * v[j] for j in range(d + 1)) for i in range(d + 1)])
    zeta = wn + 2 * _project(Pi, grad_eta_t - gNv)

    def l2(x):
        return float(np.sqrt(integrate(x * x, g)))

    return {
        "div_sup": float(np.max(np.abs(r_div))),
        "div_l2": l2(r_div),
        "vort_sup": float(np.max(np.abs(r_vort))),
        "vort_l2": l2(r_vort),
        "sn_trace": float(np.max(np.abs(Sn_top))),
        "zeta_trace": float(np.max(np.abs(zeta[..., -1]))),
    }


# --------------------------------------------------------------------------
# layer probe


@dataclass
class LayerProbe:
    eps_dzz_v: float
    dzz_v: float
    delta_p_norm: float
    layer_width: float
    sn_trace: float
    identity_residuals: dict


def layer_width(v, grid, floor=1e-10):
    """Depth where ``|d_z v_y|`` first drops to 10% of its surface value.

    The column with the largest surface value is scanned downwards from
    ``z = 0``; the crossing is linearly interpolated. Returns ``Z_max``
    when there is no crossing or the surface shear is below ``floor``
    (round-off level for unit-scale flows).
    """
    d = grid.d_h
    vz = dz(v[:d], grid)
    mag = np.sqrt(np.sum(vz * vz, axis=0))
    top = mag[..., -1]
    s = float(np.max(top))
    if s <= floor:
        return grid.Z_max
    col = np.unravel_index(int(np.argmax(top)), top.shape)
    prof = mag[col]
    z = grid.z_nodes
    thr = 0.1 * s
    for j in range(grid.N_z - 2, -1, -1):
        if prof[j] <= thr:
            f0, f1 = prof[j], prof[j + 1]
            w = (f1 - thr) / (f1 - f0) if f1 != f0 else 0.0
            return float(-(z[j + 1] + w * (z[j] - z[j + 1])))
    return grid.Z_max


def layer_probe(state, params):
    """Boundary-layer indicators of ``state``."""
    g = state.grid
    m = state.metric
    vzz = dzz(state.v, g)
    dzz_inf = float(np.max(np.abs(vzz)))
    p = state.rho ** params.gamma
    lap = laplace_phi(p, m)
    res = structural_residuals(state, params)
    return LayerProbe(
        eps_dzz_v=params.eps * dzz_inf,
        dzz_v=dzz_inf,
        delta_p_norm=conormal_norm(lap, 1, m),
        layer_width=layer_width(state.v, g),
        sn_trace=res["sn_trace"],
        identity_residuals=res,
    )

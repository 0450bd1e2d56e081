"""Manufactured solutions with symbolic source terms."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sy

from ..errors import ContractError
from .physics import FlowState, Forcing

__all__ = ["ManufacturedSolution", "SOLUTIONS"]

SOLUTIONS = ("moving_surface", "equilibrium")

_t, _y, _z = sy.symbols("t y z", real=True)


def _fields(solution_id, p_e, gamma):
    t, y, z = _t, _y, _z
    if solution_id == "moving_surface":
        a = sy.Rational(1, 20) * (1 + sy.sin(t) / 2)
        h = a * sy.cos(y)
        rho = 1 + sy.Rational(1, 20) * sy.cos(y - t) * sy.cos(3 * z + 1)
        v1 = sy.Rational(1, 10) * sy.sin(y + t / 2) * sy.sin(4 * z + 1)
        v3 = sy.Rational(1, 10) * sy.cos(y) * sy.cos(t) * sy.cos(3 * z - t)
        return h, rho, v1, v3
    if solution_id == "equilibrium":
        rho = sy.Float(p_e) ** (sy.Float(1) / sy.Float(gamma))
        return sy.Integer(0) * y, rho + 0 * z, sy.Integer(0) * z, sy.Integer(0) * z
    raise ContractError(f"unknown manufactured solution {solution_id!r}; known: {SOLUTIONS}")


@lru_cache(maxsize=16)
def _build(solution_id, A, gamma, mu, lam, eps, sigma, p_e, Z_max, viscous):
    t, y, z = _t, _y, _z
    h, rho, v1, v3 = _fields(solution_id, p_e, gamma)
    # single horizontal mode with wavenumber 1 lifts in closed form
    eta = h * sy.exp(-z ** 2 * 2)
    J = A + sy.diff(eta, z)
    N1 = -sy.diff(eta, y)
    c1, c3 = N1 / J, 1 / J
    eta_t = sy.diff(eta, t)

    def d1(f):
        return sy.diff(f, y) + c1 * sy.diff(f, z)

    def d3(f):
        return c3 * sy.diff(f, z)

    p = rho ** gamma
    v = (v1, v3)
    D = (d1, d3)
    div = d1(v1) + d3(v3)
    Vz = (v1 * N1 + v3 - eta_t) / J

    def transport(f):
        return v1 * sy.diff(f, y) + Vz * sy.diff(f, z)

    S_rho = sy.diff(rho, t) + transport(rho) + rho * div
    S_v = []
    for k in range(2):
        term = sy.diff(v[k], t) + transport(v[k]) + D[k](p) / rho
        if viscous:
            lap = d1(d1(v[k])) + d3(d3(v[k]))
            term -= eps / rho * (mu * lap + (mu + lam) * D[k](div))
        S_v.append(term)
    hy = sy.diff(h, y)
    H = sy.diff(hy / sy.sqrt(1 + hy ** 2), y)
    S_h = sy.diff(h, t) - (v3 - v1 * hy).subs(z, 0)
    N = (N1, sy.Integer(1))
    if viscous:
        G = [[D[b](v[a]) for b in range(2)] for a in range(2)]
        top = []
        for a in range(2):
            tauN = sum(eps * (mu * (G[a][b] + G[b][a]) + lam * div * (a == b)) * N[b]
                       for b in range(2))
            top.append((tauN - (p - p_e + sigma * H) * N[a]).subs(z, 0))
    else:
        top = [(p - p_e + sigma * H).subs(z, 0)]
    zb = -Z_max
    normal = (v1 * N1 + v3 - eta_t).subs(z, zb)
    slip = sy.diff(v1, z).subs(z, zb)
    vref = [v1.subs(z, zb), v3.subs(z, zb)]

    args = (t, y, z)

    def lam_(e):
        return sy.lambdify(args, e, modules="numpy", cse=True)

    return dict(
        h=lam_(h), rho=lam_(rho), v=[lam_(v1), lam_(v3)],
        S_rho=lam_(S_rho), S_v=[lam_(e) for e in S_v], S_h=lam_(S_h),
        top=[lam_(e) for e in top], normal=lam_(normal), slip=lam_(slip),
        vref=[lam_(e) for e in vref],
    )


class ManufacturedSolution(Forcing):
    """Exact moving-surface solution for ``d_h = 1`` and its sources.

    Parameters
    ----------
    grid : GridSpec
        Must have ``d_h = 1`` and period ``2 pi``.
    params : PhysParams
    A : float
        Chart slope of the exact solution.
    solution_id : str
        ``'moving_surface'`` or ``'equilibrium'``.
    """

    def __init__(self, grid, params, A=1.0, solution_id="moving_surface"):
        if grid.d_h != 1 or not np.isclose(grid.L, 2 * np.pi):
            raise ContractError("manufactured solutions are defined for d_h = 1, L = 2 pi")
        self.grid = grid
        self.params = params
        self.A = float(A)
        self.solution_id = solution_id
        P = params
        self.f = _build(solution_id, self.A, P.gamma, P.mu, P.lam, P.eps, P.sigma, P.p_e,
                        grid.Z_max, P.viscous)
        self._Y = grid.y[:, None]
        self._Z = grid.z_nodes[None, :]

    def _vol(self, fn, t):
        return np.broadcast_to(fn(t, self._Y, self._Z), self.grid.shape).astype(float)

    def _surf(self, fn, t, z=0.0):
        return np.broadcast_to(fn(t, self.grid.y, z), self.grid.hshape).astype(float)

    def exact(self, t):
        rho = self._vol(self.f["rho"], t)
        v = np.stack([self._vol(fn, t) for fn in self.f["v"]])
        h = self._surf(self.f["h"], t)
        return FlowState(rho, v, h, float(t), self.grid, self.A)

    def volume(self, t):
        return (self._vol(self.f["S_rho"], t),
                np.stack([self._vol(fn, t) for fn in self.f["S_v"]]))

    def surface(self, t):
        return self._surf(self.f["S_h"], t)

    def top(self, t):
        vals = [self._surf(fn, t) for fn in self.f["top"]]
        return np.stack(vals) if self.params.viscous else vals[0]

    def bottom(self, t):
        zb = -self.grid.Z_max
        out = {"normal": self._surf(self.f["normal"], t, zb)}
        if self.params.viscous:
            out["slip"] = self._surf(self.f["slip"], t, zb)[None]
        out["v_ref"] = np.stack([self._surf(fn, t, zb) for fn in self.f["vref"]])
        return out

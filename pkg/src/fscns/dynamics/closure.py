"""Boundary closures at the free surface and at the truncation depth.

Viscous mode imposes the stress balance at ``z = 0`` through the one-sided
first-derivative row: with ``q = d_z v`` at the surface,

    M q = (p - p_e + sigma H) N - eps [mu (G + G^T) N + lam tr(G) N] + g

where ``M = (eps / J) [mu |N|^2 I + (mu + lam) N N^T]`` and ``G`` is the
horizontal gradient of the surface velocity. ``G`` depends on the unknown
surface values, so the surface values solve an affine fixed point that is
handed to GMRES. Euler mode pins the surface density instead.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from ..calculus import vertical_ops
from ..errors import HealthError, PhysicalValidityError
from ..geometry import hderiv, mean_curvature

__all__ = ["SurfaceClosure", "ImplicitColumnSolver", "apply_dynamic_bc", "stress_residual"]


def _gmres_fixed_point(T, x0):
    """Solve ``x = T(x)`` for affine ``T`` on flat vectors."""
    T0 = T(np.zeros_like(x0))
    scale = max(float(np.max(np.abs(T0))), 1e-300)

    def mv(x):
        return x - (T(x) - T0)

    op = LinearOperator((x0.size, x0.size), matvec=mv, dtype=float)
    x, info = gmres(op, T0, x0=x0, rtol=1e-13, atol=1e-15 * scale, restart=40, maxiter=200)
    if info != 0:
        res = float(np.max(np.abs(mv(x) - T0)))
        # absolute floor for velocities of order one when the data nearly vanish
        if res > 1e-9 * scale + 1e-14:
            raise HealthError("closure", f"boundary fixed point did not converge (residual {res:.3e})")
    return x


class SurfaceClosure:
    """Boundary data that depend on the surface velocity ``x``.

    Parameters
    ----------
    grid : GridSpec
    params : PhysParams
    h : ndarray
        Surface elevation of the state being closed.
    A : float
        Chart slope.
    rho_top : ndarray
        Surface density (viscous mode uses it through the pressure).
    t : float
        Time at which forcing data are evaluated.
    forcing : Forcing or None
    """

    def __init__(self, grid, params, h, A, rho_top, t, forcing=None):
        self.grid = grid
        self.params = params
        self.h = h
        self.A = A
        d = grid.d_h
        self.hy = [hderiv(h, grid, a, surface=True) for a in range(d)]
        self.N = np.stack([-g for g in self.hy] + [np.ones(grid.hshape)])
        self.N2 = np.sum(self.N ** 2, axis=0)
        self.H = mean_curvature(h, grid)
        self.rho_top = rho_top
        fb = forcing.bottom(t) if forcing is not None else None
        self.bottom_data = fb or {}
        self.g_top = forcing.top(t) if forcing is not None else None
        s_h = forcing.surface(t) if forcing is not None else None
        self.s_h = s_h
        # bottom trace of the lift and of its horizontal gradient
        zb = grid.z_nodes[0]
        self._mult_b = np.exp(-zb * zb * (1.0 + grid.ksq_r))
        hh = np.fft.rfftn(h, axes=grid.haxes(True))
        self.N_bottom = np.stack(
            [-hderiv(self._bottom_trace(hh), grid, a, surface=True) for a in range(d)]
            + [np.ones(grid.hshape)])

    def _bottom_trace(self, hh):
        g = self.grid
        return np.fft.irfftn(hh * self._mult_b, s=g.hshape, axes=g.haxes(True))

    def h_t(self, x):
        """Kinematic surface velocity for surface values ``x``."""
        out = x[-1].copy()
        for a in range(self.grid.d_h):
            out -= x[a] * self.hy[a]
        if self.s_h is not None:
            out = out + self.s_h
        return out

    def eta_t_bottom(self, x):
        g = self.grid
        hh = np.fft.rfftn(self.h_t(x), axes=g.haxes(True))
        return self._bottom_trace(hh)

    def q(self, x):
        """Surface normal derivative ``d_z v`` demanded by the stress balance."""
        g, P = self.grid, self.params
        d = g.d_h
        eps, mu, lam = P.eps, P.mu, P.lam
        N = self.N
        Gx = [[hderiv(x[a], g, b, surface=True) for b in range(d)] for a in range(d + 1)]
        trG = sum(Gx[a][a] for a in range(d))
        p = self.rho_top ** P.gamma
        r = (p - P.p_e + P.sigma * self.H) * N
        for a in range(d + 1):
            GN = sum(Gx[a][b] * N[b] for b in range(d))
            GtN = sum(Gx[b][a] * N[b] for b in range(d + 1)) if a < d else 0.0
            r[a] -= eps * (mu * (GN + GtN) + lam * trG * N[a])
        if self.g_top is not None:
            r = r + self.g_top
        Nr = np.sum(N * r, axis=0)
        coef = (mu + lam) / ((2 * mu + lam) * self.N2)
        return (self.A / (eps * mu * self.N2)) * (r - coef * N * Nr)

    def euler_density(self):
        target = self.params.p_e - self.params.sigma * self.H
        if self.g_top is not None:
            target = target + self.g_top
        if np.any(target <= 0):
            idx = np.unravel_index(int(np.argmin(target)), target.shape)
            raise PhysicalValidityError(
                f"surface pressure p_e - sigma H = {float(target[idx]):.4g} is not positive",
                location=idx)
        return target ** (1.0 / self.params.gamma)


def apply_closure_explicit(v, rho, closure, params):
    """Overwrite boundary values of ``v`` (and surface ``rho`` in Euler mode).

    Interior values are kept; returns new arrays ``(v, rho)``.
    """
    grid = closure.grid
    d = grid.d_h
    D1 = vertical_ops(grid).D1
    v = v.copy()
    rho = rho.copy()
    top = grid.N_z - 1
    if params.viscous:
        inner = v[..., :top] @ D1[top, :top]
        w = D1[top, top]

        def T(xf):
            x = xf.reshape(v.shape[:-1])
            return ((closure.q(x) - inner) / w).ravel()

        x = _gmres_fixed_point(T, v[..., top].ravel())
        v[..., top] = x.reshape(v.shape[:-1])
    else:
        rho[..., top] = closure.euler_density()

    x = v[..., top]
    bd = closure.bottom_data
    if params.bottom_bc == "dirichlet":
        vref = bd.get("v_ref")
        v[..., 0] = 0.0 if vref is None else vref
        return v, rho
    if params.viscous:
        gs = bd.get("slip")
        for a in range(d):
            rest = v[a, ..., 1:] @ D1[0, 1:]
            target = 0.0 if gs is None else gs[a]
            v[a, ..., 0] = (target - rest) / D1[0, 0]
    gn = bd.get("normal")
    etb = closure.eta_t_bottom(x) + (0.0 if gn is None else gn)
    Nb = closure.N_bottom
    v[d, ..., 0] = etb - sum(Nb[a] * v[a, ..., 0] for a in range(d))
    return v, rho


def apply_dynamic_bc(state, params, forcing=None):
    """Return a copy of ``state`` whose boundary values satisfy the closure."""
    clos = SurfaceClosure(state.grid, params, state.h, state.A, state.rho[..., -1],
                          state.t, forcing)
    v, rho = apply_closure_explicit(state.v, state.rho, clos, params)
    return state.replace(v=v, rho=rho)


def stress_residual(state, params):
    """``tau N - (p - p_e + sigma H) N`` at the surface, shape ``(d+1,) + hshape``."""
    from ..calculus import sym_grad_phi, div_phi

    m = state.metric
    S = sym_grad_phi(state.v, m)
    div = div_phi(state.v, m)
    N = m.N
    d1 = state.grid.d_h + 1
    tauN = np.stack([sum(2 * params.mu * S[a, b] * N[b] for b in range(d1))
                     + params.lam * div * N[a] for a in range(d1)]) * params.eps
    H = mean_curvature(state.h, state.grid)
    p = state.rho ** params.gamma
    res = tauN - (p - params.p_e + params.sigma * H[..., None]) * N
    return res[..., -1]


class ImplicitColumnSolver:
    """Backward solve of ``v - dt_g K v = b`` with boundary rows, all columns at once.

    Unknowns are ordered by column, then vertical node, then component, so
    the assembled matrix is banded and ``splu`` with natural ordering keeps
    the fill inside the band. The sparsity pattern is fixed per grid and
    built once; only the values change between stages.

    The surface rows carry data that depend on the surface values
    themselves. Because columns decouple, the surface values respond to the
    surface and bottom row data through small per-column influence matrices,
    which reduces the boundary fixed point to surface-only arithmetic.
    """

    def __init__(self, grid, params):
        self.grid = grid
        self.params = params
        ops = vertical_ops(grid)
        Nz = grid.N_z
        nc = self.nc = grid.d_h + 1
        ncol = self.ncol = int(np.prod(grid.hshape))
        self.n = ncol * Nz * nc
        D1, D2 = ops.D1, ops.D2

        rows, cols, tags = [], [], []
        # tag layout: (kind, payload) resolved in _values
        col_ids = np.arange(ncol)
        self._interior = []
        for j in range(1, Nz - 1):
            stencil = np.nonzero(D2[j])[0]
            for k in range(nc):
                for m in range(nc):
                    for ell in stencil:
                        rows.append(self._gid(col_ids, j, k))
                        cols.append(self._gid(col_ids, ell, m))
                        self._interior.append((j, k, m, ell))
        n_int = len(self._interior)
        self._top = []
        for k in range(nc):
            for ell in np.nonzero(D1[-1])[0]:
                rows.append(self._gid(col_ids, Nz - 1, k))
                cols.append(self._gid(col_ids, ell, k))
                self._top.append(D1[-1, ell])
        self._bottom = []
        if params.bottom_bc == "dirichlet":
            for k in range(nc):
                rows.append(self._gid(col_ids, 0, k))
                cols.append(self._gid(col_ids, 0, k))
                self._bottom.append(("const", 1.0))
        else:
            for k in range(nc - 1):
                for ell in np.nonzero(D1[0])[0]:
                    rows.append(self._gid(col_ids, 0, k))
                    cols.append(self._gid(col_ids, ell, k))
                    self._bottom.append(("const", D1[0, ell]))
            for m in range(nc):
                rows.append(self._gid(col_ids, 0, nc - 1))
                cols.append(self._gid(col_ids, 0, m))
                self._bottom.append(("normal", m))
        r = np.stack(rows)  # (n_entries, ncol)
        c = np.stack(cols)
        self._n_int = n_int
        rf, cf = r.ravel(), c.ravel()
        order = np.lexsort((rf, cf))
        self._order = order
        self._indices = rf[order].astype(np.int32)
        counts = np.bincount(cf, minlength=self.n)
        self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        # interior coefficients as arrays for vectorised evaluation
        it = np.array(self._interior)
        self._it_j, self._it_k, self._it_m, self._it_l = it.T
        self._it_w = D2[self._it_j, self._it_l]
        self._it_diag = (self._it_k == self._it_m) & (self._it_l == self._it_j)
        self._top_vals = np.array(self._top)

    def _gid(self, col, j, k):
        return (col * self.grid.N_z + j) * self.nc + k

    def assemble(self, rho, metric, dt_g, N_bottom):
        P = self.params
        nc, ncol, Nz = self.nc, self.ncol, self.grid.N_z
        c = metric.c.reshape(nc, ncol, Nz)
        rr = rho.reshape(ncol, Nz)
        s2 = np.sum(c * c, axis=0)
        j, k, m = self._it_j, self._it_k, self._it_m
        kfac = dt_g * P.eps / rr[:, j]  # (ncol, n_int)
        coef = (P.mu + P.lam) * c[k, :, j] * c[m, :, j]
        coef = coef + P.mu * s2[:, j].T * (k == m)[:, None]
        vals_int = -(kfac.T * coef) * self._it_w[:, None]
        vals_int[self._it_diag] += 1.0
        parts = [vals_int, np.repeat(self._top_vals[:, None], ncol, axis=1)]
        Nb = N_bottom.reshape(nc, ncol)
        bvals = [np.full(ncol, v) if kind == "const" else Nb[v] for kind, v in self._bottom]
        parts.append(np.stack(bvals))
        data = np.concatenate(parts).ravel()[self._order]
        A = sp.csc_matrix((data, self._indices, self._indptr), shape=(self.n, self.n))
        return splu(A, permc_spec="NATURAL")

    def solve(self, b_v, rho, metric, dt_g, closure):
        """Return ``v`` solving the stage equation with all boundary rows.

        ``b_v`` is the explicit right-hand side with the usual component-first
        layout; ``closure`` supplies the surface and bottom data.
        """
        g, P = self.grid, self.params
        nc, ncol, Nz = self.nc, self.ncol, g.N_z
        hshape = g.hshape
        lu = self.assemble(rho, metric, dt_g, closure.N_bottom)
        base = np.moveaxis(b_v.reshape(nc, ncol, Nz), 0, -1).copy()  # (col, j, k)
        bd = closure.bottom_data
        slip = P.bottom_bc != "dirichlet"
        if not slip:
            vref = bd.get("v_ref")
            base[:, 0, :] = 0.0 if vref is None else vref.reshape(nc, ncol).T
        else:
            gs = bd.get("slip")
            base[:, 0, :nc - 1] = 0.0 if gs is None else gs.reshape(nc - 1, ncol).T
            base[:, 0, nc - 1] = 0.0
        base[:, -1, :] = 0.0
        gn = bd.get("normal")

        # responses: particular solution plus unit data in each surface row
        # and in the bottom normal row, all columns at once
        rhs_list = [base.ravel()]
        for k in range(nc):
            e = np.zeros((ncol, Nz, nc))
            e[:, -1, k] = 1.0
            rhs_list.append(e.ravel())
        if slip:
            e = np.zeros((ncol, Nz, nc))
            e[:, 0, nc - 1] = 1.0
            rhs_list.append(e.ravel())
        sols = lu.solve(np.stack(rhs_list, axis=1)).T.reshape(len(rhs_list), ncol, Nz, nc)
        sol0 = sols[0]
        Btop = sols[1:1 + nc, :, -1, :]  # (k_row, col, comp)

        def T(xf):
            xs = xf.reshape((nc,) + hshape)
            qv = closure.q(xs).reshape(nc, ncol)
            out = sol0[:, -1, :] + np.einsum("kc,kcm->cm", qv, Btop)
            if slip:
                etb = (closure.eta_t_bottom(xs) + (0.0 if gn is None else gn)).reshape(ncol)
                out = out + etb[:, None] * sols[-1][:, -1, :]
            return np.ascontiguousarray(out.T).ravel()

        x = _gmres_fixed_point(T, b_v[..., -1].ravel())
        xs = x.reshape((nc,) + hshape)
        qv = closure.q(xs).reshape(nc, ncol)
        sol = sol0 + np.einsum("kc,kcjm->cjm", qv, sols[1:1 + nc])
        if slip:
            etb = (closure.eta_t_bottom(xs) + (0.0 if gn is None else gn)).reshape(ncol)
            sol = sol + etb[:, None, None] * sols[-1]
        return np.moveaxis(sol, -1, 0).reshape(b_v.shape)

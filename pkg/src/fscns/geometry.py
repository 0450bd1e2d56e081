"""Grid, surface extension and chart metric.

The fluid occupies ``{(y, x3) : x3 < h(y)}`` with ``y`` periodic. It is
flattened onto the slab ``y in [0, L)^d_h, z in [-Z_max, 0]`` by the map
``(y, z) -> (y, phi(y, z))`` with ``phi = A z + eta`` and ``eta`` the
Gaussian Fourier lift of ``h``.

Array conventions
-----------------
Surface fields have shape ``grid.hshape``; volume fields have shape
``grid.shape = hshape + (N_z,)``. Vector fields carry a leading component
axis of length ``d_h + 1`` whose last entry is the vertical component.
Horizontal directions are numbered ``0 .. d_h-1`` in code.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import hermite as _herm

from .errors import ConfigError, ContractError

__all__ = [
    "GridSpec",
    "SurfaceHeight",
    "ChartMetric",
    "SurfaceGeometry",
    "build_grid",
    "grading_map",
    "extend_height",
    "assemble_chart",
    "check_diffeomorphism",
    "mean_curvature",
    "area_and_volume",
    "hderiv",
    "dealias",
    "hmean",
    "trapezoid_weights",
    "vertical_quadrature_weights",
    "auto_slope",
    "extension_sobolev_norm",
    "surface_sobolev_norm",
]


# --------------------------------------------------------------------------
# grid


def grading_map(u, stretch):
    """Vertical grading ``g(u) = u (1 + (s - 1) u^2) / s`` on ``[0, 1]``.

    ``g(0) = 0``, ``g(1) = 1``, ``g'(0) = 1/s`` and ``g'(1) = 3 - 2/s``,
    so the spacing next to the surface is ``1/s`` of the uniform spacing
    and the largest spacing is ``1 + 3 (s - 1)`` times the smallest.
    """
    u = np.asarray(u, dtype=float)
    s = float(stretch)
    return u * (1.0 + (s - 1.0) * u * u) / s


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Periodic horizontal grid times graded vertical grid.

    Attributes
    ----------
    d_h : int
        Horizontal dimension, 1 or 2.
    L : float
        Period in each horizontal direction.
    N_y : int
        Points per horizontal direction (power of two).
    N_z : int
        Vertical nodes.
    Z_max : float
        Truncation depth.
    stretch : float
        Grading parameter, ``1`` gives uniform nodes.
    z_nodes : ndarray
        Strictly increasing nodes, ``z_nodes[0] = -Z_max``, ``z_nodes[-1] = 0``.
    xi : ndarray
        Wavenumbers ``2 pi / L * k`` in FFT order.
    """

    d_h: int
    L: float
    N_y: int
    N_z: int
    Z_max: float
    stretch: float
    z_nodes: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)

    @property
    def hshape(self):
        return (self.N_y,) * self.d_h

    @property
    def shape(self):
        return self.hshape + (self.N_z,)

    @property
    def dy(self):
        return self.L / self.N_y

    @cached_property
    def y(self):
        return np.arange(self.N_y) * self.dy

    @cached_property
    def y_mesh(self):
        """Horizontal coordinates broadcast to ``hshape``, one per direction."""
        return tuple(np.meshgrid(*([self.y] * self.d_h), indexing="ij"))

    @cached_property
    def xi_r(self):
        """Wavenumbers of the half spectrum along the last horizontal axis."""
        return 2.0 * np.pi / self.L * np.arange(self.N_y // 2 + 1)

    @cached_property
    def xi_mesh_r(self):
        """Wavenumber meshes in ``rfftn`` layout, one per direction."""
        axes = [self.xi] * (self.d_h - 1) + [self.xi_r]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def ksq_r(self):
        return sum(k * k for k in self.xi_mesh_r)

    @cached_property
    def dealias_mask_r(self):
        """Boolean 2/3-rule mask in ``rfftn`` layout."""
        kmax = self.N_y // 3
        mask = np.ones(self.xi_mesh_r[0].shape, dtype=bool)
        scale = self.L / (2.0 * np.pi)
        for k in self.xi_mesh_r:
            mask &= np.abs(np.rint(k * scale)) <= kmax
        return mask

    @cached_property
    def wz(self):
        """Fourth order quadrature weights on the vertical nodes."""
        return vertical_quadrature_weights(self.N_z, self.Z_max, self.stretch)

    @cached_property
    def dz_min(self):
        return float(np.min(np.diff(self.z_nodes)))

    @property
    def cell_area(self):
        return self.dy ** self.d_h

    def haxes(self, surface=False):
        """Negative axis indices of the horizontal directions."""
        off = 0 if surface else 1
        return tuple(-self.d_h - off + a for a in range(self.d_h))

    def describe(self):
        """Plain dictionary of the scalar parameters."""
        return dict(d_h=self.d_h, L=self.L, N_y=self.N_y, N_z=self.N_z,
                    Z_max=self.Z_max, stretch=self.stretch)


def build_grid(N_y=64, N_z=64, Z_max=3.0, stretch=1.0, L=2.0 * np.pi, d_h=1):
    """Build a :class:`GridSpec`.

    Parameters
    ----------
    N_y : int
        Horizontal points per direction, a power of two.
    N_z : int
        Vertical nodes, at least 8.
    Z_max : float
        Truncation depth, positive.
    stretch : float
        Grading parameter, at least 1.
    L : float
        Horizontal period.
    d_h : int
        Horizontal dimension, 1 or 2.

    Raises
    ------
    ConfigError
        Listing every invalid parameter.
    """
    problems = []
    if int(d_h) != d_h or d_h not in (1, 2):
        problems.append(f"d_h: must be 1 or 2, got {d_h!r}")
    if int(N_y) != N_y or N_y < 2 or (int(N_y) & (int(N_y) - 1)) != 0:
        problems.append(f"N_y: must be a power of two >= 2, got {N_y!r}")
    if int(N_z) != N_z or N_z < 8:
        problems.append(f"N_z: must be an integer >= 8, got {N_z!r}")
    if not np.isfinite(Z_max) or Z_max <= 0:
        problems.append(f"Z_max: must be positive, got {Z_max!r}")
    if not np.isfinite(stretch) or stretch < 1:
        problems.append(f"stretch: must be >= 1, got {stretch!r}")
    if not np.isfinite(L) or L <= 0:
        problems.append(f"L: must be positive, got {L!r}")
    if problems:
        raise ConfigError(problems)

    N_y, N_z, d_h = int(N_y), int(N_z), int(d_h)
    s = np.linspace(0.0, 1.0, N_z)
    z = -float(Z_max) * grading_map(1.0 - s, stretch)
    z[0] = -float(Z_max)
    z[-1] = 0.0
    xi = 2.0 * np.pi / L * np.fft.fftfreq(N_y, d=1.0 / N_y)
    # numpy puts the Nyquist mode at -N/2; the lattice convention here is +N/2
    if N_y % 2 == 0:
        xi[N_y // 2] = abs(xi[N_y // 2])
    z.flags.writeable = False
    xi.flags.writeable = False
    return GridSpec(d_h=d_h, L=float(L), N_y=N_y, N_z=N_z, Z_max=float(Z_max),
                    stretch=float(stretch), z_nodes=z, xi=xi)


def grading_map_derivative(u, stretch):
    """Derivative ``g'(u) = (1 + 3 (s - 1) u^2) / s`` of :func:`grading_map`."""
    u = np.asarray(u, dtype=float)
    s = float(stretch)
    return (1.0 + 3.0 * (s - 1.0) * u * u) / s


def vertical_quadrature_weights(N_z, Z_max, stretch):
    """Weights for ``int_{-Z_max}^0 f dz`` on the graded nodes.

    The integral is pulled back to the uniform grading parameter, where
    Gregory's end-corrected trapezoid rule is fourth order accurate.
    """
    if N_z < 8:
        raise ContractError("fourth order quadrature needs at least 8 nodes")
    s = np.linspace(0.0, 1.0, N_z)
    h = 1.0 / (N_z - 1)
    w = np.ones(N_z)
    ends = np.array([17.0, 59.0, 43.0, 49.0]) / 48.0
    w[:4] = ends
    w[-4:] = ends[::-1]
    return h * w * float(Z_max) * grading_map_derivative(1.0 - s, stretch)


def trapezoid_weights(z):
    """Trapezoid quadrature weights for the node list ``z``."""
    z = np.asarray(z, dtype=float)
    dz = np.diff(z)
    w = np.zeros_like(z)
    w[:-1] += 0.5 * dz
    w[1:] += 0.5 * dz
    return w


# --------------------------------------------------------------------------
# horizontal spectral helpers


def _rfft_h(f, grid, surface):
    return np.fft.rfftn(f, axes=grid.haxes(surface))


def _irfft_h(fh, grid, surface):
    return np.fft.irfftn(fh, s=grid.hshape, axes=grid.haxes(surface))


def hderiv(f, grid, a, order=1, surface=False):
    """Spectral derivative of order ``order`` along horizontal direction ``a``.

    The Nyquist mode is dropped for odd orders so that the result stays real
    and the operator stays skew.
    """
    if order == 0:
        return np.array(f, dtype=float, copy=True)
    ax = grid.haxes(surface)[a]
    n = grid.N_y
    if a == grid.d_h - 1:
        k = grid.xi_r.copy()
        fh = np.fft.rfft(f, axis=ax)
        if order % 2 and n % 2 == 0:
            k[-1] = 0.0
        shape = [1] * fh.ndim
        shape[ax] = k.size
        fh *= ((1j * k) ** order).reshape(shape)
        return np.fft.irfft(fh, n=n, axis=ax)
    k = np.array(grid.xi)
    if order % 2 and n % 2 == 0:
        k[n // 2] = 0.0
    fh = np.fft.fft(f, axis=ax)
    shape = [1] * fh.ndim
    shape[ax] = k.size
    fh *= ((1j * k) ** order).reshape(shape)
    return np.fft.ifft(fh, axis=ax).real


def dealias(f, grid, surface=False):
    """Zero the modes outside the 2/3-rule band along all horizontal axes."""
    fh = _rfft_h(f, grid, surface)
    mask = grid.dealias_mask_r
    if not surface:
        mask = mask[..., None]
    # broadcast over leading component axes as well
    fh = fh * mask
    return _irfft_h(fh, grid, surface)


def hmean(f, grid, surface=False):
    """Exact horizontal mean (the zero Fourier mode)."""
    return np.mean(f, axis=grid.haxes(surface))


# --------------------------------------------------------------------------
# surface height and extension


@dataclass(frozen=True, eq=False)
class SurfaceHeight:
    """Surface elevation samples ``h(y)`` on the horizontal grid."""

    values: np.ndarray
    grid: GridSpec = field(repr=False, default=None)

    @cached_property
    def spectral(self):
        """Complex coefficients ``fftn(values)`` (numpy normalisation)."""
        return np.fft.fftn(self.values)

    @classmethod
    def from_spectral(cls, coeffs, grid=None):
        return cls(np.fft.ifftn(coeffs).real, grid)


def _hvals(h, grid):
    vals = h.values if isinstance(h, SurfaceHeight) else np.asarray(h, dtype=float)
    if vals.shape != grid.hshape:
        raise ContractError(f"surface field shape {vals.shape} does not match grid {grid.hshape}")
    return vals


def _kappa_dz(z, a, jz):
    """``d^jz/dz^jz exp(-a z^2)`` with ``a`` broadcast against ``z``."""
    ra = np.sqrt(a)
    base = np.exp(-a * z * z)
    if jz == 0:
        return base
    c = np.zeros(jz + 1)
    c[jz] = 1.0
    return (-ra) ** jz * _herm.hermval(ra * z, c) * base


def extend_height(h, grid, beta=(), jz=0):
    """Lift ``h`` into the slab with ``eta_hat = exp(-z^2 (1 + |xi|^2)) h_hat``.

    Parameters
    ----------
    h : SurfaceHeight or ndarray
        Surface samples.
    grid : GridSpec
    beta : tuple of int, optional
        Horizontal derivative orders per direction applied to the lift.
    jz : int, optional
        Vertical derivative order, taken analytically through the multiplier.

    Returns
    -------
    ndarray
        Volume field of shape ``grid.shape``.
    """
    vals = _hvals(h, grid)
    hh = _rfft_h(vals, grid, surface=True)
    beta = tuple(beta) + (0,) * (grid.d_h - len(beta))
    for a, order in enumerate(beta):
        if order:
            k = grid.xi_mesh_r[a].copy()
            if order % 2 and grid.N_y % 2 == 0:
                nyq = np.isclose(np.abs(k), np.pi * grid.N_y / grid.L)
                k[nyq] = 0.0
            hh = hh * (1j * k) ** order
    mult = _kappa_dz(grid.z_nodes, 1.0 + grid.ksq_r[..., None], jz)
    return _irfft_h(hh[..., None] * mult, grid, surface=False)


def auto_slope(h, grid):
    """Slope ``A = 1 + 2 max |d_z eta|`` over the slab for the initial surface.

    This guarantees ``d_z phi >= 1`` at the initial time.
    """
    eta_z = extend_height(h, grid, jz=1)
    return 1.0 + 2.0 * float(np.max(np.abs(eta_z)))


# --------------------------------------------------------------------------
# chart


class ChartMetric:
    """Chart ``phi = A z + eta`` with its derivative fields.

    Fields are computed lazily and cached. Horizontal derivatives are
    spectral, vertical ones analytic through the extension multiplier.

    Parameters
    ----------
    grid : GridSpec
    h : ndarray
        Surface elevation.
    h_t : ndarray, optional
        Surface velocity ``dh/dt``. Zero when omitted.
    A : float
        Chart slope.
    h_tt : ndarray, optional
        Second time derivative of ``h``; only needed for second order
        time jets.
    """

    def __init__(self, grid, h, h_t=None, A=1.0, h_tt=None):
        if not A > 0:
            raise ContractError(f"chart slope A must be positive, got {A!r}")
        self.grid = grid
        self.A = float(A)
        self.h = _hvals(h, grid)
        self.h_t = np.zeros(grid.hshape) if h_t is None else _hvals(h_t, grid)
        self.h_tt = None if h_tt is None else _hvals(h_tt, grid)
        self._ext_cache = {}

    def ext(self, beta=(), jz=0, tder=0):
        """Cached lift of ``d_t^tder h`` with the given derivatives."""
        beta = tuple(beta) + (0,) * (self.grid.d_h - len(beta))
        key = (beta, jz, tder)
        if key not in self._ext_cache:
            src = (self.h, self.h_t, self.h_tt)[tder]
            if src is None:
                raise ContractError("second time derivative of h was not supplied")
            self._ext_cache[key] = extend_height(src, self.grid, beta, jz)
        return self._ext_cache[key]

    def _unit(self, a, order=1):
        beta = [0] * self.grid.d_h
        beta[a] += order
        return tuple(beta)

    @property
    def eta(self):
        return self.ext()

    @property
    def eta_z(self):
        return self.ext(jz=1)

    @property
    def eta_zz(self):
        return self.ext(jz=2)

    @property
    def eta_t(self):
        return self.ext(tder=1)

    def eta_y(self, a):
        return self.ext(self._unit(a))

    def eta_yz(self, a):
        return self.ext(self._unit(a), jz=1)

    def eta_yy(self, a, b):
        beta = [0] * self.grid.d_h
        beta[a] += 1
        beta[b] += 1
        return self.ext(tuple(beta))

    @cached_property
    def phi(self):
        return self.A * self.grid.z_nodes + self.eta

    @cached_property
    def J(self):
        return self.A + self.eta_z

    @cached_property
    def d_phi(self):
        """Map ``{1, .., d_h, 'z', 't'}`` to the derivative fields of phi."""
        out = {a + 1: self.eta_y(a) for a in range(self.grid.d_h)}
        out["z"] = self.J
        out["t"] = self.eta_t
        return out

    @cached_property
    def N(self):
        g = self.grid
        comps = [-self.eta_y(a) for a in range(g.d_h)] + [np.ones(g.shape)]
        return np.stack(comps)

    @cached_property
    def N_norm(self):
        return np.sqrt(np.sum(self.N ** 2, axis=0))

    @cached_property
    def n(self):
        return self.N / self.N_norm

    @cached_property
    def Pi(self):
        d = self.grid.d_h + 1
        return np.eye(d).reshape((d, d) + (1,) * len(self.grid.shape)) - \
            self.n[:, None] * self.n[None, :]

    @cached_property
    def c(self):
        """Coefficients ``c = N / J`` so that ``d_a^phi = d_a + c_a d_z``."""
        return self.N / self.J

    @cached_property
    def c_t(self):
        """Coefficient of ``d_z`` in ``d_t^phi``."""
        return -self.eta_t / self.J

    @cached_property
    def dc_y(self):
        """``dc_y[a][b] = d_a c_b`` for horizontal ``a``."""
        g = self.grid
        J = self.J
        out = []
        for a in range(g.d_h):
            Ja = self.eta_yz(a)
            row = []
            for b in range(g.d_h):
                row.append(-self.eta_yy(a, b) / J + self.eta_y(b) * Ja / J ** 2)
            row.append(-Ja / J ** 2)
            out.append(row)
        return out

    @cached_property
    def dc_z(self):
        """``dc_z[b] = d_z c_b``."""
        g = self.grid
        J = self.J
        Jz = self.eta_zz
        out = [-self.eta_yz(b) / J + self.eta_y(b) * Jz / J ** 2 for b in range(g.d_h)]
        out.append(-Jz / J ** 2)
        return out


def assemble_chart(h, dh_dt, A, grid, h_tt=None):
    """Assemble the :class:`ChartMetric` for surface ``h`` moving at ``dh_dt``.

    ``A`` may be a positive number or ``"auto"`` for :func:`auto_slope`.
    """
    if isinstance(A, str):
        if A != "auto":
            raise ContractError(f"A must be positive or 'auto', got {A!r}")
        A = auto_slope(h, grid)
    return ChartMetric(grid, _hvals(h, grid), None if dh_dt is None else _hvals(dh_dt, grid),
                       A, h_tt)


@dataclass(frozen=True)
class DiffeoCheck:
    min_J: float
    passed: bool
    location: tuple

    def __iter__(self):
        return iter((self.min_J, self.passed))


def check_diffeomorphism(metric, c0=0.1):
    """Return ``(min J, min J >= c0)`` with the location of the minimum."""
    J = metric.J
    idx = np.unravel_index(int(np.argmin(J)), J.shape)
    mn = float(J[idx])
    return DiffeoCheck(mn, bool(mn >= c0), tuple(int(i) for i in idx))


# --------------------------------------------------------------------------
# curvature, area, volume


@dataclass(frozen=True)
class SurfaceGeometry:
    H: np.ndarray
    area: float
    volume: float
    grad_h: tuple


def _grad_h(vals, grid):
    return tuple(hderiv(vals, grid, a, surface=True) for a in range(grid.d_h))


def mean_curvature(h, grid):
    """Curvature term ``div(grad h / sqrt(1 + |grad h|^2))`` on the surface grid."""
    vals = _hvals(h, grid)
    g = _grad_h(vals, grid)
    w = 1.0 / np.sqrt(1.0 + sum(x * x for x in g))
    return sum(hderiv(g[a] * w, grid, a, surface=True) for a in range(grid.d_h))


def area_and_volume(h, metric, grid):
    """Surface area, enclosed volume of the truncated domain and curvature."""
    vals = _hvals(h, grid)
    g = _grad_h(vals, grid)
    area = float(np.mean(np.sqrt(1.0 + sum(x * x for x in g)))) * grid.L ** grid.d_h
    vol = float(np.mean(metric.J @ grid.wz)) * grid.L ** grid.d_h
    return SurfaceGeometry(H=mean_curvature(vals, grid), area=area, volume=vol, grad_h=g)


# --------------------------------------------------------------------------
# Sobolev norms of the lift


def surface_sobolev_norm(h, grid, s):
    """``|h|_s`` with weight ``(1 + |xi|^2)^s`` (Parseval, period cell)."""
    vals = _hvals(h, grid)
    hh = np.fft.fftn(vals) / vals.size
    mesh = np.meshgrid(*([grid.xi] * grid.d_h), indexing="ij")
    ksq = sum(k * k for k in mesh)
    return float(np.sqrt(grid.L ** grid.d_h * np.sum((1.0 + ksq) ** s * np.abs(hh) ** 2)))


def extension_sobolev_norm(h, grid, k):
    """``||eta||_{H^k}`` of the lift over the truncated slab.

    Horizontal derivatives are spectral, vertical ones analytic, and the
    vertical integral uses the trapezoid rule on the graded nodes.
    """
    total = 0.0
    d = grid.d_h
    for jz in range(k + 1):
        for rest in _multi_indices(d, k - jz):
            f = extend_height(h, grid, rest, jz)
            total += float(np.mean((f * f) @ grid.wz))
    return float(np.sqrt(total * grid.L ** d))


def _multi_indices(d, max_order):
    out = []
    if d == 1:
        return [(i,) for i in range(max_order + 1)]
    for i in range(max_order + 1):
        for j in range(max_order + 1 - i):
            out.append((i, j))
    return out

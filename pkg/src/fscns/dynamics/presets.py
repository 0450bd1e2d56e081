"""Initial-condition presets.

Every preset returns a state whose boundary values already satisfy the
closure of the requested mode, i.e. the stress balance holds at ``t = 0``.
Higher order compatibility conditions are not enforced.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..geometry import auto_slope, mean_curvature
from .closure import apply_dynamic_bc
from .physics import FlowState

__all__ = ["PRESETS", "make_initial", "equilibrium", "capillary_wave", "shear_layer",
           "random_perturbation", "steep_surface", "harmonic_lift"]


def _slope(A, h, grid):
    if A is None or A == "auto":
        return auto_slope(h, grid)
    return float(A)


def _rest_density(params, p):
    return np.asarray(p, dtype=float) ** (1.0 / params.gamma)


def equilibrium(grid, params, A=1.0):
    """Uniform rest state with ``p = p_e`` and a flat surface."""
    rho = np.full(grid.shape, _rest_density(params, params.p_e))
    v = np.zeros((grid.d_h + 1,) + grid.shape)
    h = np.zeros(grid.hshape)
    return FlowState(rho, v, h, 0.0, grid, _slope(A, h, grid))


def harmonic_lift(f, grid):
    """Lift each surface mode as ``cosh(|xi| (z + Z_max)) / cosh(|xi| Z_max)``.

    The lift is harmonic in the flat chart, equals ``f`` at ``z = 0`` and
    has zero normal derivative at ``z = -Z_max``.
    """
    fh = np.fft.fftn(np.asarray(f, dtype=float))
    mesh = np.meshgrid(*([grid.xi] * grid.d_h), indexing="ij")
    k = np.sqrt(sum(x * x for x in mesh))[..., None]
    z = grid.z_nodes
    # cosh ratio written with decaying exponentials to avoid overflow
    zb = z + grid.Z_max
    prof = (np.exp(k * (zb - grid.Z_max)) + np.exp(-k * (zb + grid.Z_max))) / (
        1.0 + np.exp(-2.0 * k * grid.Z_max))
    out = np.fft.ifftn(fh[..., None] * prof, axes=tuple(range(grid.d_h)))
    return out.real


def capillary_wave(grid, params, amplitude=0.1, k=1, A="auto"):
    """Standing capillary mode ``h = a cos(k y_1)`` released from rest.

    The pressure is the harmonic lift of ``p_e - sigma H``: the normal
    stress balance holds at ``t = 0`` and the pressure has no normal
    gradient at the bottom, so the data are compatible with the slip wall.
    """
    kk = 2.0 * np.pi / grid.L * k
    h = amplitude * np.cos(kk * grid.y_mesh[0])
    H = mean_curvature(h, grid)
    p0 = params.p_e - params.sigma * harmonic_lift(H, grid)
    if np.any(p0 <= 0):
        raise ConfigError("amplitude: initial pressure p_e - sigma H is not positive")
    rho = _rest_density(params, p0)
    v = np.zeros((grid.d_h + 1,) + grid.shape)
    st = FlowState(rho, v, h, 0.0, grid, _slope(A, h, grid))
    return apply_dynamic_bc(st, params)


def shear_layer(grid, params, U=0.1, width=0.3, A=1.0):
    """Flat surface with horizontal shear ``v_1 = U exp(-(z / width)^2)``."""
    rho = np.full(grid.shape, _rest_density(params, params.p_e))
    v = np.zeros((grid.d_h + 1,) + grid.shape)
    z = grid.z_nodes
    v[0] = U * np.exp(-(z / width) ** 2)
    h = np.zeros(grid.hshape)
    st = FlowState(rho, v, h, 0.0, grid, _slope(A, h, grid))
    return apply_dynamic_bc(st, params)


def _band_limited(rng, grid, kmax, amp):
    """Real random surface field with modes ``|k| <= kmax`` scaled to max ``amp``."""
    hh = np.zeros(grid.hshape, dtype=complex)
    mesh = np.meshgrid(*([np.fft.fftfreq(grid.N_y, 1.0 / grid.N_y)] * grid.d_h), indexing="ij")
    band = np.ones(grid.hshape, dtype=bool)
    for m in mesh:
        band &= np.abs(m) <= kmax
    hh[band] = rng.standard_normal(band.sum()) + 1j * rng.standard_normal(band.sum())
    f = np.fft.ifftn(hh).real
    mx = np.max(np.abs(f))
    return f if mx == 0 else amp * f / mx


def random_perturbation(grid, params, seed=0, amplitude=0.02, kmax=3, A="auto"):
    """Seeded band-limited perturbation of surface, density and velocity."""
    rng = np.random.default_rng(seed)
    h = _band_limited(rng, grid, kmax, amplitude)
    z = grid.z_nodes
    prof = np.exp(z)
    rho = _rest_density(params, params.p_e) * (
        1.0 + _band_limited(rng, grid, kmax, amplitude)[..., None] * prof)
    v = np.stack([_band_limited(rng, grid, kmax, amplitude)[..., None] * prof
                  for _ in range(grid.d_h + 1)])
    st = FlowState(rho, v, h, 0.0, grid, _slope(A, h, grid))
    return apply_dynamic_bc(st, params)


def steep_surface(grid, params, amplitude=1.0, k=4, A=0.01):
    """Short steep surface mode with a deliberately small chart slope."""
    kk = 2.0 * np.pi / grid.L * k
    h = amplitude * np.cos(kk * grid.y_mesh[0])
    rho = np.full(grid.shape, _rest_density(params, params.p_e))
    v = np.zeros((grid.d_h + 1,) + grid.shape)
    return FlowState(rho, v, h, 0.0, grid, _slope(A, h, grid))


PRESETS = {
    "equilibrium": equilibrium,
    "capillary_wave": capillary_wave,
    "shear_layer": shear_layer,
    "random": random_perturbation,
    "steep": steep_surface,
}


def make_initial(name, grid, params, **kw):
    """Build preset ``name`` with keyword parameters ``kw``."""
    try:
        fn = PRESETS[name]
    except KeyError:
        raise ConfigError(f"preset: unknown preset {name!r}, choose from {sorted(PRESETS)}") from None
    return fn(grid, params, **kw)

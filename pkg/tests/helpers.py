"""Closed-form helpers shared by the tests."""
from __future__ import annotations

import numpy as np


class Modes:
    """Real trigonometric surface ``h = sum a_k cos(k y) + b_k sin(k y)`` with exact lifts."""

    def __init__(self, seed, amp=0.05, kmax=3):
        rng = np.random.default_rng(seed)
        self.k = np.arange(1, kmax + 1)
        self.a = rng.standard_normal(kmax) * amp / kmax
        self.b = rng.standard_normal(kmax) * amp / kmax

    def h(self, y):
        return sum(a * np.cos(k * y) + b * np.sin(k * y) for k, a, b in zip(self.k, self.a, self.b))

    def h_y(self, y, n=1):
        out = 0.0
        for k, a, b in zip(self.k, self.a, self.b):
            out = out + k ** n * (a * np.cos(k * y + n * np.pi / 2) + b * np.sin(k * y + n * np.pi / 2))
        return out

    def eta(self, y, z):
        return sum(np.exp(-z * z * (1 + k * k)) * (a * np.cos(k * y) + b * np.sin(k * y))
                   for k, a, b in zip(self.k, self.a, self.b))

    def eta_y(self, y, z):
        return sum(k * np.exp(-z * z * (1 + k * k)) * (-a * np.sin(k * y) + b * np.cos(k * y))
                   for k, a, b in zip(self.k, self.a, self.b))

    def eta_z(self, y, z):
        return sum(-2 * z * (1 + k * k) * np.exp(-z * z * (1 + k * k))
                   * (a * np.cos(k * y) + b * np.sin(k * y))
                   for k, a, b in zip(self.k, self.a, self.b))


def mesh(grid):
    return grid.y_mesh[0][..., None] * np.ones(grid.N_z), grid.z_nodes[None, :] * np.ones(
        grid.hshape + (1,))

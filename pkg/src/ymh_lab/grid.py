"""Flat Kahler torus discretization.

Real axes are ordered ``(x1, y1, x2, y2)``; complex axis ``alpha`` owns the
real axes ``2*alpha`` and ``2*alpha + 1``.  A field is an array whose first
``2n`` axes are sites and whose last two axes are the ``r x r`` matrix
entries.  A site axis may have length 1, which means the field is constant
along that axis (numpy broadcasting does the rest).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TorusGrid:
    """Periodic lattice on the flat torus of complex dimension ``n``.

    Parameters
    ----------
    n : int
        Complex dimension, 1 or 2.
    points_per_axis : int
        Number of sites per real axis (even, at least 4).
    side_length : float
        Period of every real axis.
    """

    n: int
    points_per_axis: int
    side_length: float = 1.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {self.n}")
        N = self.points_per_axis
        if int(N) != N or N < 4 or N % 2:
            raise ValueError(f"points_per_axis must be an even integer >= 4, got {N}")
        if not (self.side_length > 0 and np.isfinite(self.side_length)):
            raise ValueError("side_length must be positive and finite")
        object.__setattr__(self, "points_per_axis", int(N))
        object.__setattr__(self, "side_length", float(self.side_length))

    @property
    def spacing(self) -> float:
        return self.side_length / self.points_per_axis

    @property
    def num_axes(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.num_axes

    @property
    def total_sites(self) -> int:
        return self.points_per_axis ** self.num_axes

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.num_axes

    @property
    def volume(self) -> float:
        return self.side_length ** self.num_axes

    def refine(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(self.n, self.points_per_axis * factor, self.side_length)

    def coordinate(self, axis: int) -> np.ndarray:
        """Site coordinates ``j * spacing`` along ``axis``, shaped for broadcasting."""
        self._check_axis(axis)
        shape = [1] * self.num_axes
        shape[axis] = self.points_per_axis
        return (np.arange(self.points_per_axis) * self.spacing).reshape(shape)

    def _check_axis(self, axis):
        if not 0 <= axis < self.num_axes:
            raise ValueError(f"real axis {axis} out of range for n={self.n}")

    def _check_complex_axis(self, alpha):
        if not 0 <= alpha < self.n:
            raise ValueError(f"complex axis {alpha} out of range for n={self.n}")

    def multiplicity(self, arr: np.ndarray) -> int:
        """Number of lattice sites represented by each stored site of ``arr``."""
        m = 1
        for ax in range(self.num_axes):
            if arr.shape[ax] == 1:
                m *= self.points_per_axis
        return m


def central_diff(field: np.ndarray, axis: int, grid: TorusGrid) -> np.ndarray:
    """Periodic central difference ``(f[j+1] - f[j-1]) / (2h)`` along a real axis."""
    grid._check_axis(axis)
    if field.shape[axis] == 1:
        return np.zeros_like(field)
    fwd = np.roll(field, -1, axis=axis)
    bwd = np.roll(field, 1, axis=axis)
    return (fwd - bwd) / (2.0 * grid.spacing)


def del_(field: np.ndarray, alpha: int, grid: TorusGrid) -> np.ndarray:
    """Holomorphic derivative ``(D_x - i D_y) / 2`` on complex axis ``alpha``."""
    grid._check_complex_axis(alpha)
    return 0.5 * (central_diff(field, 2 * alpha, grid)
                  - 1j * central_diff(field, 2 * alpha + 1, grid))


def delbar(field: np.ndarray, alpha: int, grid: TorusGrid) -> np.ndarray:
    """Anti-holomorphic derivative ``(D_x + i D_y) / 2`` on complex axis ``alpha``."""
    grid._check_complex_axis(alpha)
    return 0.5 * (central_diff(field, 2 * alpha, grid)
                  + 1j * central_diff(field, 2 * alpha + 1, grid))


def laplacian(field: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Compact 3-point flat Laplacian summed over all real axes."""
    h2 = grid.spacing ** 2
    out = np.zeros_like(field, dtype=np.result_type(field, float))
    for ax in range(grid.num_axes):
        if field.shape[ax] == 1:
            continue
        out = out + (np.roll(field, -1, ax) - 2.0 * field + np.roll(field, 1, ax)) / h2
    return out


def site_sum(arr: np.ndarray, grid: TorusGrid):
    """Sum over all lattice sites, counting broadcast axes with multiplicity."""
    site_axes = tuple(range(grid.num_axes))
    total = np.sum(arr, axis=site_axes)
    return total * grid.multiplicity(arr)


def integrate(field: np.ndarray, grid: TorusGrid):
    """Riemann sum ``sum_sites f * cell_volume``; trailing axes are kept."""
    return site_sum(np.asarray(field), grid) * grid.cell_volume


def lambda_contract(psi):
    """Contraction with the Kahler form on a (1,1)-form: ``-2i sum_a psi_{a abar}``."""
    from .fields import EndForm

    if psi.bidegrees != ((1, 1),):
        raise ValueError(f"lambda_contract needs a (1,1)-form, got {psi.bidegrees}")
    out = None
    for alpha in range(psi.grid.n):
        term = psi[((alpha,), (alpha,))]
        out = term if out is None else out + term
    return EndForm(psi.grid, psi.rank, {((), ()): -2j * out})


def inner_product(psi, xi) -> complex:
    """``sum_sites cell_volume * 2^(p+q) * sum_I tr(psi_I xi_I^dagger)``.

    Conjugate-linear in ``xi``.  Mixed-degree forms are paired part by part.
    """
    if psi.grid != xi.grid or psi.rank != xi.rank:
        raise ValueError("inner_product needs forms on the same grid and rank")
    if psi.bidegrees != xi.bidegrees and len(psi.bidegrees) == len(xi.bidegrees) == 1:
        raise ValueError(f"bidegree mismatch: {psi.bidegrees} vs {xi.bidegrees}")
    grid = psi.grid
    total = 0.0 + 0.0j
    for key, a in psi.components.items():
        b = xi.components.get(key)
        if b is None:
            continue
        weight = 2.0 ** (len(key[0]) + len(key[1]))
        prod = np.sum(a * np.conj(b), axis=(-2, -1))
        total += weight * site_sum(prod, grid)
    return complex(total * grid.cell_volume)


def norm_sq(psi) -> float:
    grid = psi.grid
    total = 0.0
    for key, a in psi.components.items():
        weight = 2.0 ** (len(key[0]) + len(key[1]))
        total += weight * site_sum(np.sum(a.real ** 2 + a.imag ** 2, axis=(-2, -1)), grid)
    return float(total * grid.cell_volume)

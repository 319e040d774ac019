"""Named pairs and deformations used by the CLI scenarios and the tests."""

from __future__ import annotations

import numpy as np

from .fields import (DeformationPair, EndForm, HitchinPairState, conjugate, form_keys,
                     random_bandlimited)
from .grid import TorusGrid, delbar

NILPOTENT = np.array([[0, 1], [0, 0]], dtype=np.complex128)
SIGMA3 = np.diag([1.0, -1.0]).astype(np.complex128)


def _first_dz(grid):
    return ((0,), ())


def trivial(grid: TorusGrid, rank: int = 2) -> HitchinPairState:
    return HitchinPairState(EndForm.zeros(grid, rank, (0, 1)), EndForm.zeros(grid, rank, (1, 0)))


def nilpotent(grid: TorusGrid, c: float = 1.0) -> HitchinPairState:
    """``a = 0``, ``phi = c N dz_1`` with ``N = [[0, 1], [0, 0]]``."""
    phi = EndForm.constant(grid, (1, 0), {_first_dz(grid): c * NILPOTENT})
    return HitchinPairState(EndForm.zeros(grid, 2, (0, 1)), phi)


def diagonal_higgs(grid: TorusGrid, coeffs=(1.0, -1.0)) -> HitchinPairState:
    """``a = 0``, ``phi = diag(coeffs) dz_1`` (commuting diagonal Higgs field)."""
    D = np.diag(np.asarray(coeffs, dtype=np.complex128))
    phi = EndForm.constant(grid, (1, 0), {_first_dz(grid): D})
    return HitchinPairState(EndForm.zeros(grid, len(coeffs), (0, 1)), phi)


def random_pair(grid: TorusGrid, rank: int, seed: int, k_max: int, amplitude: float,
                axes=None) -> HitchinPairState:
    a = random_bandlimited(grid, rank, (0, 1), seed, k_max, amplitude, axes)
    phi = random_bandlimited(grid, rank, (1, 0), seed + 7919, k_max, amplitude, axes)
    return HitchinPairState(a, phi)


def random_deformation(grid: TorusGrid, rank: int, seed: int, k_max: int,
                       amplitude: float, axes=None) -> DeformationPair:
    alpha = random_bandlimited(grid, rank, (0, 1), seed + 104729, k_max, amplitude, axes)
    beta = random_bandlimited(grid, rank, (1, 0), seed + 1299709, k_max, amplitude, axes)
    return DeformationPair(alpha, beta)


def _random_unitary(seed: int, rank: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 17])))
    z = rng.normal(size=(rank, rank)) + 1j * rng.normal(size=(rank, rank))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def exact_hitchin(grid: TorusGrid, seed: int = 0, k_max: int = 2, amplitude: float = 0.3,
                  eps: float = 0.3, mode=(1, 1), c=(0.7, -0.4)) -> HitchinPairState:
    """Rank-2 surface pair whose discrete holomorphy residual vanishes to rounding.

    ``phi = [[c1, 0], [p, c2]] dz`` with ``p`` a single lattice Fourier mode and
    ``a = diag(g + s, g) dzbar``; the constant ``s`` is the discrete ``delbar``
    symbol of the mode, so ``delbar phi + [a, phi] = 0`` exactly.  A random
    constant unitary conjugation mixes the frame.
    """
    if grid.n != 1:
        raise ValueError("exact_hitchin is a surface construction")
    h = grid.spacing
    kx, ky = (2 * np.pi * m / grid.side_length for m in mode)
    x, y = grid.coordinate(0), grid.coordinate(1)
    p = eps * np.exp(1j * (kx * x + ky * y))
    sym = 0.5 * (1j * np.sin(kx * h) / h - np.sin(ky * h) / h)
    gfield = random_bandlimited(grid, 1, (0, 1), seed, k_max, amplitude)[((), (0,))][..., 0, 0]
    shape = grid.shape + (2, 2)
    a_arr = np.zeros(shape, dtype=np.complex128)
    a_arr[..., 0, 0] = gfield + sym
    a_arr[..., 1, 1] = gfield
    phi_arr = np.zeros(shape, dtype=np.complex128)
    phi_arr[..., 0, 0] = c[0]
    phi_arr[..., 1, 1] = c[1]
    phi_arr[..., 1, 0] = p
    u = _random_unitary(seed, 2)
    a = conjugate(EndForm(grid, 2, {((), (0,)): a_arr}), u)
    phi = conjugate(EndForm(grid, 2, {((0,), ()): phi_arr}), u)
    return HitchinPairState(a, phi)


def gauge_hitchin(grid: TorusGrid, seed: int = 0, k_max: int = 2, amplitude: float = 0.3,
                  rank: int = 2, axes=(0, 1)) -> HitchinPairState:
    """Complex gauge transform ``g = Id + X`` of a constant Hitchin pair.

    ``a = -(delbar g) g^{-1}`` and ``phi = g P g^{-1}`` with commuting constant
    coefficients ``P``; holomorphy holds up to the O(h^2) Leibniz defect of
    the central differences.  ``X`` varies only along ``axes``.
    """
    X = random_bandlimited(grid, rank, (0, 0), seed, k_max, amplitude, axes)[((), ())]
    gmat = np.eye(rank) + X
    ginv = np.linalg.inv(gmat)
    a_comps = {}
    for alpha in range(grid.n):
        a_comps[((), (alpha,))] = -delbar(gmat, alpha, grid) @ ginv
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 31])))
    base = rng.normal(size=(rank, rank)) + 1j * rng.normal(size=(rank, rank))
    phi_comps = {}
    for alpha in range(grid.n):
        # powers of one matrix commute, so phi ^ phi = 0 pointwise
        P = (0.5 * base) if alpha == 0 else 0.3 * (base @ base) / rank
        phi_comps[((alpha,), ())] = gmat @ P @ ginv
    shape_fix = lambda v: np.broadcast_to(v, np.broadcast_shapes(v.shape, X.shape)).copy()
    a = EndForm(grid, rank, {k: shape_fix(v) for k, v in a_comps.items()})
    phi = EndForm(grid, rank, {k: shape_fix(v) for k, v in phi_comps.items()})
    return HitchinPairState(a, phi)


def constant_deformation(grid: TorusGrid, M, P) -> DeformationPair:
    """``(M dzbar_1, P dz_1)`` with constant matrices."""
    M = np.asarray(M, dtype=np.complex128)
    P = np.asarray(P, dtype=np.complex128)
    alpha = EndForm.constant(grid, (0, 1), {((), (0,)): M})
    beta = EndForm.constant(grid, (1, 0), {((0,), ()): P})
    return DeformationPair(alpha, beta)


def plane_wave_deformation(grid: TorusGrid, M=NILPOTENT, k: int = 1) -> DeformationPair:
    """``alpha01 = exp(2 pi i k x) M dzbar``, ``beta = 0``."""
    x = grid.coordinate(0)
    wave = np.exp(2j * np.pi * k * x / grid.side_length)
    shape = [1] * grid.num_axes
    shape[0] = grid.points_per_axis
    arr = wave.reshape(shape)[..., None, None] * np.asarray(M, dtype=np.complex128)
    alpha = EndForm.zeros(grid, arr.shape[-1], (0, 1))
    comps = dict(alpha.components)
    comps[((), (0,))] = arr
    return DeformationPair(EndForm(grid, arr.shape[-1], comps), EndForm.zeros(grid, arr.shape[-1], (1, 0)))


__all__ = ["trivial", "nilpotent", "diagonal_higgs", "random_pair", "random_deformation",
           "exact_hitchin", "gauge_hitchin", "constant_deformation", "plane_wave_deformation",
           "NILPOTENT", "SIGMA3", "form_keys"]

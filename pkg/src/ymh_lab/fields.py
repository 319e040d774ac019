"""End(E)-valued differential forms on the lattice torus.

A form stores one per-site ``r x r`` complex array for every basis element
``dz_I ^ dzbar_J`` (holomorphic legs first, both index tuples strictly
increasing).  Forms may mix several bidegrees; a missing bidegree is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .grid import TorusGrid, del_, delbar


def form_keys(n: int, p: int, q: int) -> list:
    """Basis keys ``(I, J)`` of bidegree ``(p, q)`` in lexicographic order."""
    return [(I, J) for I in combinations(range(n), p) for J in combinations(range(n), q)]


def _merge(a: tuple, b: tuple):
    """Sign and sorted union of ``a + b``, or ``None`` when they overlap."""
    if set(a) & set(b):
        return None
    inversions = sum(1 for x in a for y in b if x > y)
    return (-1) ** inversions, tuple(sorted(a + b))


def wedge_key(k1: tuple, k2: tuple):
    """``(dz_I ^ dzbar_J) ^ (dz_K ^ dzbar_L) = sign * basis(key)``, or ``None``."""
    (I, J), (K, L) = k1, k2
    left = _merge(I, K)
    right = _merge(J, L)
    if left is None or right is None:
        return None
    sign = (-1) ** (len(J) * len(K)) * left[0] * right[0]
    return sign, (left[1], right[1])


def _bideg(key):
    return (len(key[0]), len(key[1]))


class EndForm:
    """An End(E)-valued form, possibly of mixed bidegree.

    Parameters
    ----------
    grid : TorusGrid
    rank : int
    components : dict
        Maps ``(I, J)`` to arrays of shape ``(N or 1,)*2n + (rank, rank)``.
    bidegrees : iterable of (p, q), optional
        Needed only when a bidegree has no basis elements (e.g. (0, 2) on a
        surface).  Every listed bidegree must have all of its components.
    """

    __slots__ = ("grid", "rank", "components", "bidegrees")

    def __init__(self, grid: TorusGrid, rank: int, components: dict, bidegrees=None):
        n = grid.n
        if rank < 1:
            raise ValueError("rank must be >= 1")
        comps = {}
        for key, arr in components.items():
            arr = np.asarray(arr, dtype=np.complex128)
            if arr.ndim != 2 * n + 2 or arr.shape[-2:] != (rank, rank):
                raise ValueError(f"component {key} has shape {arr.shape}")
            for ax in range(2 * n):
                if arr.shape[ax] not in (1, grid.points_per_axis):
                    raise ValueError(f"component {key} has shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"component {key} is not finite")
            comps[(tuple(key[0]), tuple(key[1]))] = arr
        degs = set(_bideg(k) for k in comps)
        if bidegrees is not None:
            listed = set(tuple(b) for b in bidegrees)
            if not degs <= listed:
                raise ValueError(f"components outside listed bidegrees {sorted(listed)}")
            degs = listed
        for p, q in degs:
            if p < 0 or q < 0:
                raise ValueError(f"bidegree {(p, q)} is negative")
            for key in form_keys(n, p, q):
                if key not in comps:
                    raise ValueError(f"missing component {key} of bidegree {(p, q)}")
        self.grid = grid
        self.rank = rank
        self.components = comps
        self.bidegrees = tuple(sorted(degs))

    # construction -----------------------------------------------------------------
    @classmethod
    def _make(cls, grid, rank, comps, bidegrees) -> "EndForm":
        """Unchecked constructor for results of operations on valid forms."""
        out = object.__new__(cls)
        out.grid, out.rank, out.components = grid, rank, comps
        out.bidegrees = tuple(sorted(set(tuple(b) for b in bidegrees)))
        return out

    @classmethod
    def zeros(cls, grid: TorusGrid, rank: int, bidegree) -> "EndForm":
        bidegrees = [bidegree] if isinstance(bidegree[0], int) else list(bidegree)
        shape = (1,) * grid.num_axes + (rank, rank)
        comps = {}
        for p, q in bidegrees:
            for key in form_keys(grid.n, p, q):
                comps[key] = np.zeros(shape, dtype=np.complex128)
        if rank < 1 or any(p < 0 or q < 0 for p, q in bidegrees):
            raise ValueError(f"invalid rank {rank} or bidegrees {bidegrees}")
        return cls._make(grid, rank, comps, bidegrees)

    @classmethod
    def constant(cls, grid: TorusGrid, bidegree, coeffs: dict) -> "EndForm":
        """Spatially constant form; ``coeffs`` maps keys to ``r x r`` matrices."""
        mats = {k: np.asarray(v, dtype=np.complex128) for k, v in coeffs.items()}
        rank = next(iter(mats.values())).shape[-1]
        shape = (1,) * grid.num_axes + (rank, rank)
        out = cls.zeros(grid, rank, bidegree)
        comps = dict(out.components)
        for k, m in mats.items():
            comps[(tuple(k[0]), tuple(k[1]))] = m.reshape(shape)
        return cls(grid, rank, comps, out.bidegrees)

    @classmethod
    def scalar(cls, grid: TorusGrid, rank: int, field, bidegree=(0, 0), key=None) -> "EndForm":
        """``field * Id`` placed on one basis element (default: the 0-form)."""
        field = np.asarray(field, dtype=np.complex128)
        arr = field[..., None, None] * np.eye(rank)
        out = cls.zeros(grid, rank, bidegree)
        comps = dict(out.components)
        comps[key if key is not None else form_keys(grid.n, *bidegree)[0]] = arr
        return cls(grid, rank, comps, out.bidegrees)

    # access -----------------------------------------------------------------------
    def __getitem__(self, key):
        return self.components[key]

    @property
    def bidegree(self) -> tuple:
        if len(self.bidegrees) != 1:
            raise ValueError(f"form has mixed bidegrees {self.bidegrees}")
        return self.bidegrees[0]

    @property
    def degrees(self) -> tuple:
        return tuple(sorted(set(p + q for p, q in self.bidegrees)))

    @property
    def degree(self) -> int:
        d = self.degrees
        if len(d) != 1:
            raise ValueError(f"form has mixed total degrees {d}")
        return d[0]

    def part(self, p: int, q: int) -> "EndForm":
        if (p, q) not in self.bidegrees:
            return EndForm.zeros(self.grid, self.rank, (p, q))
        comps = {k: v for k, v in self.components.items() if _bideg(k) == (p, q)}
        return EndForm(self.grid, self.rank, comps, [(p, q)])

    def degree_part(self, d: int) -> "EndForm":
        degs = [b for b in self.bidegrees if sum(b) == d]
        comps = {k: v for k, v in self.components.items() if sum(_bideg(k)) == d}
        return EndForm(self.grid, self.rank, comps, degs)

    def full(self, key) -> np.ndarray:
        """Component expanded to the full lattice shape."""
        arr = self.components[key]
        return np.broadcast_to(arr, self.grid.shape + (self.rank, self.rank))

    def map(self, fn) -> "EndForm":
        return EndForm._make(self.grid, self.rank,
                             {k: fn(v) for k, v in self.components.items()}, self.bidegrees)

    # arithmetic -------------------------------------------------------------------
    def _combine(self, other, sign):
        if not isinstance(other, EndForm):
            return NotImplemented
        if other.grid != self.grid or other.rank != self.rank:
            raise ValueError("forms live on different grids or ranks")
        comps = dict(self.components)
        for k, v in other.components.items():
            comps[k] = comps[k] + sign * v if k in comps else sign * v
        return EndForm._make(self.grid, self.rank, comps,
                             set(self.bidegrees) | set(other.bidegrees))

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return self.map(lambda v: -v)

    def __mul__(self, c):
        if isinstance(c, EndForm):
            return NotImplemented
        return self.map(lambda v: c * v)

    __rmul__ = __mul__

    def __repr__(self):
        return (f"EndForm(n={self.grid.n}, N={self.grid.points_per_axis}, "
                f"rank={self.rank}, bidegrees={self.bidegrees})")


def _assemble(grid, rank, terms: dict, bidegrees) -> EndForm:
    out = EndForm.zeros(grid, rank, list(bidegrees)) if bidegrees else None
    comps = dict(out.components) if out is not None else {}
    for k, v in terms.items():
        comps[k] = v
    return EndForm._make(grid, rank, comps, bidegrees)


def _accumulate(terms: dict, key, value):
    terms[key] = terms[key] + value if key in terms else value


def _valid(grid, degs):
    return sorted(set((p, q) for p, q in degs if 0 <= p <= grid.n and 0 <= q <= grid.n))


def _mh(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


# --- pointwise algebra -------------------------------------------------------------

def dagger(psi: EndForm) -> EndForm:
    """Metric adjoint of a form: component ``(J, I)`` is ``(-1)^(pq) psi_{IJ}^dagger``.

    The sign comes from reordering ``dzbar_I ^ dz_J`` into ``dz_J ^ dzbar_I``;
    with it the curvature of a unitary connection satisfies ``dagger(F) = -F``.
    """
    comps = {}
    for (I, J), arr in psi.components.items():
        sign = (-1) ** (len(I) * len(J))
        comps[(J, I)] = sign * _mh(arr)
    return EndForm._make(psi.grid, psi.rank, comps, [(q, p) for p, q in psi.bidegrees])


def wedge(psi: EndForm, xi: EndForm) -> EndForm:
    """Wedge product with matrix multiplication on coefficients."""
    grid = psi.grid
    terms = {}
    for k1, a in psi.components.items():
        for k2, b in xi.components.items():
            res = wedge_key(k1, k2)
            if res is None:
                continue
            s, ko = res
            _accumulate(terms, ko, s * (a @ b))
    degs = _valid(grid, [(p1 + p2, q1 + q2) for p1, q1 in psi.bidegrees
                         for p2, q2 in xi.bidegrees])
    return _assemble(grid, psi.rank, terms, degs)


def wedge_bracket(psi: EndForm, xi: EndForm) -> EndForm:
    """Graded commutator ``psi ^ xi - (-1)^(deg psi deg xi) xi ^ psi``."""
    out = None
    for d1 in psi.degrees:
        p1 = psi.degree_part(d1)
        for d2 in xi.degrees:
            p2 = xi.degree_part(d2)
            term = wedge(p1, p2) - (-1) ** (d1 * d2) * wedge(p2, p1)
            out = term if out is None else out + term
    return out


def _left_adjoint(omega: EndForm, xi: EndForm) -> EndForm:
    """Adjoint of ``psi -> omega ^ psi`` applied to ``xi``."""
    grid = omega.grid
    terms = {}
    degs = set()
    for (I, J), w in omega.components.items():
        weight = 2.0 ** (len(I) + len(J))
        wh = _mh(w)
        for (M, Nn), x in xi.components.items():
            if not (set(I) <= set(M) and set(J) <= set(Nn)):
                continue
            K = tuple(m for m in M if m not in I)
            L = tuple(m for m in Nn if m not in J)
            res = wedge_key((I, J), (K, L))
            if res is None or res[1] != (M, Nn):
                continue
            _accumulate(terms, (K, L), res[0] * weight * (wh @ x))
    for p1, q1 in omega.bidegrees:
        for p2, q2 in xi.bidegrees:
            degs.add((p2 - p1, q2 - q1))
    degs = [d for d in _valid(grid, degs)]
    return _assemble(grid, omega.rank, terms, degs)


def _right_adjoint(omega: EndForm, xi: EndForm) -> EndForm:
    """Adjoint of ``psi -> psi ^ omega`` applied to ``xi``."""
    grid = omega.grid
    terms = {}
    degs = set()
    for (I, J), w in omega.components.items():
        weight = 2.0 ** (len(I) + len(J))
        wh = _mh(w)
        for (M, Nn), x in xi.components.items():
            if not (set(I) <= set(M) and set(J) <= set(Nn)):
                continue
            K = tuple(m for m in M if m not in I)
            L = tuple(m for m in Nn if m not in J)
            res = wedge_key((K, L), (I, J))
            if res is None or res[1] != (M, Nn):
                continue
            _accumulate(terms, (K, L), res[0] * weight * (x @ wh))
    for p1, q1 in omega.bidegrees:
        for p2, q2 in xi.bidegrees:
            degs.add((p2 - p1, q2 - q1))
    return _assemble(grid, omega.rank, terms, _valid(grid, degs))


def bracket_adjoint(omega: EndForm, xi: EndForm) -> EndForm:
    """Adjoint of ``psi -> [omega, psi]`` applied to ``xi``."""
    out = None
    for dw in omega.degrees:
        w = omega.degree_part(dw)
        for dx in xi.degrees:
            din = dx - dw
            if din < 0:
                continue
            x = xi.degree_part(dx)
            term = _left_adjoint(w, x) - (-1) ** (dw * din) * _right_adjoint(w, x)
            out = term if out is None else out + term
    if out is None:
        return EndForm.zeros(xi.grid, xi.rank, (0, 0))
    return out


def lambda_op(psi: EndForm) -> EndForm:
    """Adjoint of wedging with the Kahler form ``(i/2) sum dz_a ^ dzbar_a``.

    Maps bidegree ``(p, q)`` to ``(p-1, q-1)`` and agrees with
    :func:`ymh_lab.grid.lambda_contract` on (1,1)-forms.
    """
    grid = psi.grid
    terms = {}
    for (M, Nn), x in psi.components.items():
        for a in M:
            if a not in Nn:
                continue
            K = tuple(m for m in M if m != a)
            L = tuple(m for m in Nn if m != a)
            s, _ = wedge_key(((a,), (a,)), (K, L))
            _accumulate(terms, (K, L), (-2j * s) * x)
    degs = _valid(grid, [(p - 1, q - 1) for p, q in psi.bidegrees if p and q])
    if not degs:
        return EndForm.zeros(grid, psi.rank, (0, 0))
    return _assemble(grid, psi.rank, terms, degs)


def lefschetz(psi: EndForm) -> EndForm:
    """Wedge with the Kahler form (internal; used to test the adjoint pair)."""
    grid = psi.grid
    omega = EndForm.constant(grid, (1, 1), {((a,), (a,)): 0.5j * np.eye(psi.rank)
                                            for a in range(grid.n)})
    return wedge(omega, psi)


def _contract(psi: EndForm, xi: EndForm) -> EndForm:
    br = wedge_bracket(psi, xi)
    keep = [b for b in br.bidegrees if b[0] >= 1 and b[1] >= 1]
    if not keep:
        return EndForm.zeros(psi.grid, psi.rank, (0, 0))
    sub = None
    for b in keep:
        sub = br.part(*b) if sub is None else sub + br.part(*b)
    return -1j * lambda_op(sub)


def contract(psi: EndForm, xi: EndForm) -> EndForm:
    """Metric contraction ``psi -| xi := -i Lambda([psi, xi])`` on the parts with a dz-dzbar pair."""
    ok = any(p1 + p2 >= 1 and q1 + q2 >= 1
             for p1, q1 in psi.bidegrees for p2, q2 in xi.bidegrees)
    if not ok:
        raise ValueError(f"cannot contract bidegrees {psi.bidegrees} and {xi.bidegrees}")
    return _contract(psi, xi)


def circ_action(omega: EndForm, xi: EndForm) -> EndForm:
    """``Omega o Xi = Omega -| Xi^{1,0} + Xi^{0,1} -| Omega``."""
    if xi.degrees != (1,):
        raise ValueError("circ_action needs a degree-1 second argument")
    return _contract(omega, xi.part(1, 0)) + _contract(xi.part(0, 1), omega)


def star_action(omega: EndForm, xi: EndForm) -> EndForm:
    """``Omega * Xi = [Omega, Xi^{1,0}] + [Xi^{0,1}, Omega]``."""
    if xi.degrees != (1,):
        raise ValueError("star_action needs a degree-1 second argument")
    return wedge_bracket(omega, xi.part(1, 0)) + wedge_bracket(xi.part(0, 1), omega)


# --- flat exterior derivatives and their exact adjoints -------------------------

def _flat_d(psi: EndForm, holomorphic: bool) -> EndForm:
    grid = psi.grid
    deriv = del_ if holomorphic else delbar
    terms = {}
    for key, arr in psi.components.items():
        for a in range(grid.n):
            leg = ((a,), ()) if holomorphic else ((), (a,))
            res = wedge_key(leg, key)
            if res is None:
                continue
            s, ko = res
            _accumulate(terms, ko, s * deriv(arr, a, grid))
    shift = (1, 0) if holomorphic else (0, 1)
    degs = _valid(grid, [(p + shift[0], q + shift[1]) for p, q in psi.bidegrees])
    return _assemble(grid, psi.rank, terms, degs)


def _flat_d_adjoint(xi: EndForm, holomorphic: bool) -> EndForm:
    grid = xi.grid
    # del^* = -delbar and delbar^* = -del; the factor 2 is the form weight ratio
    deriv = delbar if holomorphic else del_
    terms = {}
    for (M, Nn), arr in xi.components.items():
        for a in range(grid.n):
            src = M if holomorphic else Nn
            if a not in src:
                continue
            K = tuple(m for m in M if m != a) if holomorphic else M
            L = Nn if holomorphic else tuple(m for m in Nn if m != a)
            leg = ((a,), ()) if holomorphic else ((), (a,))
            s, ko = wedge_key(leg, (K, L))
            _accumulate(terms, (K, L), (-2.0 * s) * deriv(arr, a, grid))
    shift = (1, 0) if holomorphic else (0, 1)
    degs = _valid(grid, [(p - shift[0], q - shift[1]) for p, q in xi.bidegrees])
    if not degs:
        return EndForm.zeros(grid, xi.rank, (0, 0))
    return _assemble(grid, xi.rank, terms, degs)


def d_prime(psi: EndForm) -> EndForm:
    return _flat_d(psi, True)


def d_double_prime(psi: EndForm) -> EndForm:
    return _flat_d(psi, False)


def d_prime_adjoint(xi: EndForm) -> EndForm:
    return _flat_d_adjoint(xi, True)


def d_double_prime_adjoint(xi: EndForm) -> EndForm:
    return _flat_d_adjoint(xi, False)


# --- state types ---------------------------------------------------------------------

@dataclass(frozen=True)
class HitchinPairState:
    """Connection coefficients ``a`` (of ``A^{0,1}``) and Higgs field ``phi``.

    ``A^{1,0} = -dagger(a)`` is derived, never stored.
    """

    a: EndForm
    phi: EndForm

    def __post_init__(self):
        if self.a.bidegrees != ((0, 1),):
            raise ValueError("a must be a (0,1)-form")
        if self.phi.bidegrees != ((1, 0),):
            raise ValueError("phi must be a (1,0)-form")
        if self.a.grid != self.phi.grid or self.a.rank != self.phi.rank:
            raise ValueError("a and phi must share grid and rank")

    @property
    def grid(self) -> TorusGrid:
        return self.a.grid

    @property
    def rank(self) -> int:
        return self.a.rank

    @property
    def a10(self) -> EndForm:
        return -dagger(self.a)

    @property
    def phi_star(self) -> EndForm:
        return dagger(self.phi)

    def replace(self, a=None, phi=None) -> "HitchinPairState":
        return HitchinPairState(self.a if a is None else a, self.phi if phi is None else phi)


@dataclass(frozen=True)
class DeformationPair:
    """First-order change ``(alpha01, beta)`` of ``(A^{0,1}, phi)``."""

    alpha01: EndForm
    beta: EndForm

    def __post_init__(self):
        if self.alpha01.bidegrees != ((0, 1),):
            raise ValueError("alpha01 must be a (0,1)-form")
        if self.beta.bidegrees != ((1, 0),):
            raise ValueError("beta must be a (1,0)-form")

    @property
    def alpha(self) -> EndForm:
        """Real connection direction ``alpha01 - dagger(alpha01)``."""
        return self.alpha01 - dagger(self.alpha01)

    @property
    def beta_tilde(self) -> EndForm:
        return self.beta + dagger(self.beta)

    @property
    def upsilon(self) -> EndForm:
        return self.alpha + self.beta_tilde

    def as_form(self) -> EndForm:
        """The degree-1 form ``alpha01 + beta``."""
        return self.alpha01 + self.beta

    def scaled(self, s) -> "DeformationPair":
        return DeformationPair(s * self.alpha01, s * self.beta)

    @classmethod
    def zero(cls, grid: TorusGrid, rank: int) -> "DeformationPair":
        return cls(EndForm.zeros(grid, rank, (0, 1)), EndForm.zeros(grid, rank, (1, 0)))


def phi_tilde(phi: EndForm) -> EndForm:
    return phi + dagger(phi)


def conjugate(psi: EndForm, u) -> EndForm:
    """Pointwise ``u psi u^dagger`` for a constant matrix ``u``."""
    u = np.asarray(u, dtype=np.complex128)
    return psi.map(lambda v: u @ v @ _mh(u))


# --- reproducible band-limited fields --------------------------------------------

def _modes(num_axes: int, k_max: int) -> list:
    """Half-space of integer modes in ``[-k_max, k_max]^m`` (zero mode included)."""
    out = []
    for k in product(range(-k_max, k_max + 1), repeat=num_axes):
        nz = [c for c in k if c != 0]
        if not nz or nz[0] > 0:
            out.append(k)
    return out


def random_bandlimited(grid: TorusGrid, rank: int, bidegree, seed: int, k_max: int,
                       amplitude: float, axes=None) -> EndForm:
    """Trigonometric-polynomial test field with modes ``|k| <= k_max`` per axis.

    The real and imaginary part of every matrix entry of every component is a
    real-coefficient trigonometric polynomial.  Coefficients come from a
    Philox stream keyed by ``(seed, component, row, col, part)``, so the field
    is bit-reproducible and restricts exactly to coarser nested grids.

    Parameters
    ----------
    axes : tuple of int, optional
        Real axes the field varies along; other axes are stored with length 1.
    """
    if k_max < 0 or 2 * k_max >= grid.points_per_axis:
        raise ValueError(f"k_max={k_max} needs 0 <= k_max < points_per_axis/2")
    axes = tuple(range(grid.num_axes)) if axes is None else tuple(sorted(axes))
    p, q = bidegree
    keys = form_keys(grid.n, p, q)
    modes = _modes(len(axes), k_max)
    scale = amplitude / np.sqrt(len(modes))
    coords = [grid.coordinate(ax) for ax in axes]
    two_pi_over_l = 2.0 * np.pi / grid.side_length
    shape = [1] * grid.num_axes
    for ax in axes:
        shape[ax] = grid.points_per_axis
    phases = []
    for k in modes:
        theta = np.zeros(shape)
        for kd, xd in zip(k, coords):
            if kd:
                theta = theta + kd * xd
        phases.append((any(k), np.cos(two_pi_over_l * theta), np.sin(two_pi_over_l * theta)))
    comps = {}
    for ci, key in enumerate(keys):
        arr = np.zeros(tuple(shape) + (rank, rank), dtype=np.complex128)
        for i in range(rank):
            for j in range(rank):
                for part, unit in ((0, 1.0), (1, 1.0j)):
                    ss = np.random.SeedSequence([int(seed), ci, i, j, part])
                    rng = np.random.Generator(np.random.Philox(ss))
                    coef = rng.uniform(-1.0, 1.0, size=(len(modes), 2)) * scale
                    f = np.zeros(shape)
                    for (nonzero, c, s), (ca, sa) in zip(phases, coef):
                        f = f + ca * c
                        if nonzero:
                            f = f + sa * s
                    arr[..., i, j] += unit * f
        comps[key] = arr
    return EndForm(grid, rank, comps, [(p, q)])


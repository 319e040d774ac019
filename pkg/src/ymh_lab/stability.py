"""Deformation pairs, the second variation and stability along deformations."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, lsqr

from .curvature import (D_double_prime, D_double_prime_adjoint, D_full, classify,
                        covariant_gradient, d_double_prime_A, d_double_prime_A_adjoint,
                        d_prime_A, d_prime_A_adjoint, lambda_theta, theta)
from .fields import (DeformationPair, EndForm, HitchinPairState, circ_action, contract,
                     dagger, form_keys, lambda_op, phi_tilde, star_action, wedge,
                     wedge_bracket)
from .flow import shifted, ymh
from .grid import TorusGrid, delbar, inner_product, norm_sq


def _norm(psi: EndForm) -> float:
    return float(np.sqrt(norm_sq(psi)))


def _check_grid(base: HitchinPairState, deformation: DeformationPair):
    if deformation.alpha01.grid != base.grid or deformation.alpha01.rank != base.rank:
        raise ValueError("deformation and base live on different grids or ranks")


# --- constraint equations -----------------------------------------------------------

def mc_residuals(base: HitchinPairState, deformation: DeformationPair, t: float) -> dict:
    """Norms of the three deformation equations at parameter ``t``."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    _check_grid(base, deformation)
    al, be = deformation.alpha01, deformation.beta
    r1 = t * d_double_prime_A(base, al) + t ** 2 * wedge(al, al)
    r2 = (t * d_double_prime_A(base, be) + t * wedge_bracket(al, base.phi)
          + t ** 2 * wedge_bracket(al, be))
    r3 = t * wedge_bracket(base.phi, be) + t ** 2 * wedge(be, be)
    return {"r1": _norm(r1), "r2": _norm(r2), "r3": _norm(r3)}


def is_holomorphic_deformation(base: HitchinPairState, deformation: DeformationPair,
                               tolerance: float) -> dict:
    """``d''_A alpha01``, ``d''_A beta`` and the assembled ``D''(alpha01 + beta)``."""
    _check_grid(base, deformation)
    da = _norm(d_double_prime_A(base, deformation.alpha01))
    db = _norm(d_double_prime_A(base, deformation.beta))
    closed = _norm(D_double_prime(base, deformation.as_form()))
    return {"dbar_alpha": da, "dbar_beta": db, "Dpp_closed": closed,
            "verdict": bool(da <= tolerance and db <= tolerance)}


# --- quadratic form -------------------------------------------------------------------

def _d_adjoint(base, psi):
    return d_prime_A_adjoint(base, psi) + d_double_prime_A_adjoint(base, psi)


def q_components(base: HitchinPairState, deformation: DeformationPair) -> dict:
    """The three terms of ``Q``: bracket, ``||d^* alpha||^2`` and the Higgs term."""
    _check_grid(base, deformation)
    lt = lambda_theta(base)
    alpha, bt = deformation.alpha, deformation.beta_tilde
    bracket = 1j * inner_product(circ_action(alpha, alpha) + circ_action(bt, bt), lt)
    dstar = norm_sq(_d_adjoint(base, alpha))
    higgs = -norm_sq(circ_action(phi_tilde(base.phi), bt))
    return {"bracket_term": complex(bracket), "dstar_term": float(dstar),
            "higgs_term": float(higgs)}


def quadratic_form_Q(base: HitchinPairState, deformation: DeformationPair) -> complex:
    """``i<alpha o alpha + bt o bt, Lambda Theta> + ||d^* alpha||^2 - ||phit o bt||^2``."""
    c = q_components(base, deformation)
    return c["bracket_term"] + c["dstar_term"] + c["higgs_term"]


def quadratic_form_Q_parallel(base: HitchinPairState, deformation: DeformationPair,
                              tolerance: float = 1e-8) -> complex:
    """Variant for ``alpha`` parallel under the Hitchin-Simpson connection (flat base)."""
    _check_grid(base, deformation)
    alpha, bt = deformation.alpha, deformation.beta_tilde
    par = _norm(D_full(base, alpha))
    if par > tolerance:
        raise ValueError(f"alpha is not parallel: ||D alpha|| = {par:.3e}")
    lt = lambda_theta(base)
    grad = sum(norm_sq(g) for g in covariant_gradient(base, alpha))
    # Theta * alpha is a 3-form; it vanishes identically on a surface
    three = star_action(theta(base), alpha)
    lam3 = inner_product(alpha, lambda_op(three)) if three.components else 0.0
    val = (2j * inner_product(alpha, star_action(lt, alpha)) - 1j * lam3 + grad
           - 1j * inner_product(bt, star_action(lt, bt))
           - norm_sq(circ_action(phi_tilde(base.phi), bt)))
    return complex(val)


# --- second variation and verdicts ------------------------------------------------------

class NonStrongBaseWarning(UserWarning):
    """The base pair fails the strong verdict; the second variation is still computed."""


def _is_strong(base, tolerance):
    return bool(classify(base, tolerance).verdicts["strong"])


def second_variation_fd(base: HitchinPairState, deformation: DeformationPair,
                        dt: float = 1e-3, tolerance: float = 1e-8) -> float:
    """``(YMH(+dt) - 2 YMH(0) + YMH(-dt)) / dt^2`` along ``(a + t alpha01, phi + t beta)``."""
    import warnings

    _check_grid(base, deformation)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not _is_strong(base, tolerance):
        warnings.warn("base pair is not strong at the given tolerance", NonStrongBaseWarning)
    plus = ymh(shifted(base, deformation, dt))
    minus = ymh(shifted(base, deformation, -dt))
    return float((plus - 2.0 * ymh(base) + minus) / dt ** 2)


@dataclass
class StabilityReport:
    Q_value: float
    Q_imag: float
    second_variation_fd: float
    second_variation_extrapolated: float
    verdict: str
    admissibility: dict
    components: dict
    tolerance: float
    strong_base: bool
    q_disagreement: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["components"] = {k: (v.real if isinstance(v, complex) else v)
                           for k, v in self.components.items()}
        return d


def first_order_residuals(base: HitchinPairState, deformation: DeformationPair) -> dict:
    """Coefficients of ``t`` in the three deformation equations."""
    al, be = deformation.alpha01, deformation.beta
    return {
        "r1": _norm(d_double_prime_A(base, al)),
        "r2": _norm(d_double_prime_A(base, be) + wedge_bracket(al, base.phi)),
        "r3": _norm(wedge_bracket(base.phi, be)),
    }


def default_tolerance(base: HitchinPairState, deformation: DeformationPair) -> float:
    """``1e-8 (1 + ||def||^2 ||base||^2)``."""
    dnorm = norm_sq(deformation.alpha01) + norm_sq(deformation.beta)
    bnorm = norm_sq(base.a) + norm_sq(base.phi)
    return 1e-8 * (1.0 + dnorm * bnorm)


def stability_classify(base: HitchinPairState, deformation: DeformationPair,
                       tolerance: float | None = None, dt: float = 1e-3) -> StabilityReport:
    """Verdict from the sign of the finite-difference second variation.

    The functional is a polynomial of degree at most four along a straight
    line, so one Richardson step on ``dt`` and ``dt/2`` removes the whole
    ``O(dt^2)`` error; the sign test uses that extrapolated value.  Inside
    the dead band the verdict is ``semi-stable`` when ``Q`` also vanishes
    and ``indeterminate`` otherwise.
    """
    import warnings

    tol = default_tolerance(base, deformation) if tolerance is None else float(tolerance)
    strong = _is_strong(base, tol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonStrongBaseWarning)
        fd = second_variation_fd(base, deformation, dt, tol)
        fd_half = second_variation_fd(base, deformation, dt / 2, tol)
    extrap = (4.0 * fd_half - fd) / 3.0
    comps = q_components(base, deformation)
    Q = comps["bracket_term"] + comps["dstar_term"] + comps["higgs_term"]
    if extrap > tol:
        verdict = "stable"
    elif extrap < -tol:
        verdict = "unstable"
    elif abs(Q) <= tol:
        verdict = "semi-stable"
    else:
        verdict = "indeterminate"
    return StabilityReport(
        Q_value=float(Q.real), Q_imag=float(Q.imag), second_variation_fd=fd,
        second_variation_extrapolated=float(extrap),
        verdict=verdict, admissibility=first_order_residuals(base, deformation),
        components=comps, tolerance=tol, strong_base=strong,
        q_disagreement=bool(abs(2.0 * Q.real - fd) > 1e-6 * (1.0 + abs(fd))),
    )


def hermitian_stability_check(base: HitchinPairState, deformation: DeformationPair,
                              tolerance: float = 1e-8) -> dict:
    """``||d^* alpha||^2`` against ``||phi -| beta^* + beta -| phi^*||^2``."""
    if not classify(base, tolerance).verdicts["hermitian"]:
        raise ValueError("base pair is not Hermitian at the given tolerance")
    _check_grid(base, deformation)
    lhs = norm_sq(_d_adjoint(base, deformation.alpha))
    be = deformation.beta
    rhs = norm_sq(contract(base.phi, dagger(be)) + contract(be, base.phi_star))
    return {"lhs": float(lhs), "rhs": float(rhs), "holds": bool(lhs > rhs)}


# --- test deformations ------------------------------------------------------------------

def _interior(v, Pi: EndForm) -> EndForm:
    """``v -| Pi`` on the dz-leg of a (1,1)-form: ``sum_a v^a Pi_{a bbar} dzbar_b``."""
    g = Pi.grid
    comps = {}
    for b in range(g.n):
        comps[((), (b,))] = sum(v[a] * Pi[((a,), (b,))] for a in range(g.n))
    return EndForm(g, Pi.rank, comps, [(0, 1)])


def contraction_deformation(base: HitchinPairState, v, Pi: EndForm):
    """``(v -| Pi, phi)`` with the example's side conditions reported.

    Returns the deformation and a dict of precondition residuals.
    """
    from .grid import del_

    g = base.grid
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if v.shape != (g.n,):
        raise ValueError(f"v needs {g.n} components")
    if Pi.bidegrees != ((1, 1),):
        raise ValueError("Pi must be a (1,1)-form")
    al = _interior(v, Pi)
    nabla_v = EndForm(g, Pi.rank, {
        k: sum(v[a] * (del_(arr, a, g) + base.a10[((a,), ())] @ arr
                       - arr @ base.a10[((a,), ())]) for a in range(g.n))
        for k, arr in Pi.components.items()}, Pi.bidegrees)
    report = {
        "d_Pi": _norm(d_prime_A(base, Pi) + d_double_prime_A(base, Pi)),
        "dstar_Pi": _norm(_d_adjoint(base, Pi)),
        "nabla_v_Pi": _norm(nabla_v),
        "phi_bracket": _norm(wedge_bracket(base.phi, al)),
        "self_bracket": _norm(wedge_bracket(al, al)),
    }
    return DeformationPair(al, base.phi), report


def weak_test_deformation(base: HitchinPairState, v01, c: complex, tolerance: float = 1e-8):
    """``alpha01 = v01 Lambda Theta``, ``beta = c phi``.

    ``v01`` lists one scalar field (or number) per ``dzbar_b``.  Returns the
    deformation and a dict with the closedness of ``v01`` and the strong flag.
    """
    g = base.grid
    if len(v01) != g.n:
        raise ValueError(f"v01 needs {g.n} components")
    lt = lambda_theta(base)[((), ())]
    vs = [np.asarray(v, dtype=np.complex128) * np.ones((1,) * g.num_axes) for v in v01]
    al = EndForm(g, base.rank, {((), (b,)): vs[b][..., None, None] * lt for b in range(g.n)},
                 [(0, 1)])
    closed = 0.0
    for b in range(g.n):
        for b2 in range(b + 1, g.n):
            diff = delbar(vs[b2], b, g) - delbar(vs[b], b2, g)
            closed = max(closed, float(np.max(np.abs(diff))))
    report = {"v01_closedness": closed, "strong_base": _is_strong(base, tolerance)}
    return DeformationPair(al, c * base.phi), report


def weak_test_Q(base: HitchinPairState, deformation: DeformationPair, c: complex) -> float:
    """``<alpha, Delta_A alpha> - 4 |c|^2 ||[phi, phi^*]||^2``."""
    alpha = deformation.alpha
    lap = norm_sq(d_prime_A(base, alpha) + d_double_prime_A(base, alpha)) \
        + norm_sq(_d_adjoint(base, alpha))
    return float(lap - 4.0 * abs(c) ** 2 * norm_sq(wedge_bracket(base.phi, base.phi_star)))


# --- Green operator and the deformation series -------------------------------------------

class _Flattener:
    """Maps degree-``k`` forms to weighted flat vectors (Euclidean = form inner product)."""

    def __init__(self, grid: TorusGrid, rank: int, degree: int):
        self.grid, self.rank = grid, rank
        self.bidegrees = [(p, degree - p) for p in range(degree + 1)
                          if p <= grid.n and degree - p <= grid.n]
        self.keys = [k for b in self.bidegrees for k in form_keys(grid.n, *b)]
        self.bidegrees = [b for b in self.bidegrees if form_keys(grid.n, *b)]
        self.shape = grid.shape + (rank, rank)
        self.block = int(np.prod(self.shape))
        self.scale = [np.sqrt(2.0 ** (len(I) + len(J)) * grid.cell_volume) for I, J in self.keys]

    @property
    def size(self) -> int:
        return self.block * len(self.keys)

    def flatten(self, psi: EndForm) -> np.ndarray:
        out = np.zeros(self.size, dtype=np.complex128)
        for i, k in enumerate(self.keys):
            if k in psi.components:
                arr = np.broadcast_to(psi[k], self.shape)
                out[i * self.block:(i + 1) * self.block] = self.scale[i] * arr.ravel()
        return out

    def unflatten(self, vec: np.ndarray) -> EndForm:
        comps = {k: vec[i * self.block:(i + 1) * self.block].reshape(self.shape) / self.scale[i]
                 for i, k in enumerate(self.keys)}
        return EndForm(self.grid, self.rank, comps, self.bidegrees)


def hodge_laplacian(base: HitchinPairState, psi: EndForm) -> EndForm:
    """``D'' D''^* + D''^* D''`` of the Higgs-twisted holomorphic structure."""
    out = D_double_prime_adjoint(base, D_double_prime(base, psi))
    if any(p + q > 0 for p, q in psi.bidegrees):
        out = out + D_double_prime(base, D_double_prime_adjoint(base, psi))
    return out


@dataclass
class GreenResult:
    x: EndForm
    harmonic_part: EndForm
    converged: bool
    iterations: int
    residual: float
    normal_residual: float


def green_apply(base: HitchinPairState, degree: int, y: EndForm, rtol: float = 1e-10,
                max_iter: int | None = None) -> GreenResult:
    """Minimum-norm least-squares solution of ``Delta x = y``.

    ``harmonic_part = y - Delta x`` is the component of ``y`` outside the
    range of the Laplacian.
    """
    fl = _Flattener(base.grid, base.rank, degree)

    def mv(u):
        return fl.flatten(hodge_laplacian(base, fl.unflatten(u)))

    op = LinearOperator((fl.size, fl.size), matvec=mv, rmatvec=mv, dtype=np.complex128)
    b = fl.flatten(y)
    iters = max_iter if max_iter is not None else 10 * base.grid.total_sites
    if not np.any(b):
        sol, istop, itn, r1, arnorm = np.zeros_like(b), 0, 0, 0.0, 0.0
    else:
        res = lsqr(op, b, atol=rtol, btol=rtol, iter_lim=iters)
        sol, istop, itn, r1, arnorm = res[0], res[1], res[2], res[3], res[7]
    x = fl.unflatten(sol)
    harmonic = fl.unflatten(b - mv(sol))
    return GreenResult(x=x, harmonic_part=harmonic, converged=bool(istop in (0, 1, 2, 4, 5)),
                       iterations=int(itn), residual=float(r1), normal_residual=float(arnorm))


@dataclass
class DeformationSeries:
    order: int
    alphas: list
    betas: list
    base: HitchinPairState
    harmonic_norms: list = field(default_factory=list)
    solver: list = field(default_factory=list)
    obstructed: bool = False

    def evaluate(self, t) -> DeformationPair:
        al = self.alphas[0]
        be = self.betas[0]
        for k in range(1, self.order + 1):
            al = al + t ** k * self.alphas[k]
            be = be + t ** k * self.betas[k]
        return DeformationPair(al, be)

    def truncated(self, order: int) -> "DeformationSeries":
        return DeformationSeries(order, self.alphas[:order + 1], self.betas[:order + 1],
                                 self.base, self.harmonic_norms[:order],
                                 self.solver[:order], self.obstructed)

    def residuals(self, t) -> dict:
        return mc_residuals(self.base, self.evaluate(t), t)


def solve_deformation_series(base: HitchinPairState, def0: DeformationPair, order: int,
                             tolerance: float = 1e-8, rtol: float = 1e-10) -> DeformationSeries:
    """Coefficients ``eta_k = -p(G(sum_{i+j=k-1} eta_i ^ eta_j))`` with ``G = D''^* Q``.

    The obstruction flag is raised when a quadratic source has a harmonic
    part above ``tolerance``; the series is still continued from the
    least-squares solution.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    _check_grid(base, def0)
    etas = [def0.as_form()]
    series = DeformationSeries(order, [def0.alpha01], [def0.beta], base)
    for k in range(1, order + 1):
        src = None
        for i in range(k):
            term = wedge(etas[i], etas[k - 1 - i])
            src = term if src is None else src + term
        g = green_apply(base, 2, src, rtol=rtol)
        eta = -D_double_prime_adjoint(base, g.x)
        hnorm = _norm(g.harmonic_part)
        series.harmonic_norms.append(hnorm)
        series.solver.append({"converged": g.converged, "iterations": g.iterations,
                              "residual": g.residual, "normal_residual": g.normal_residual})
        series.obstructed = series.obstructed or hnorm > tolerance
        al = eta.part(0, 1)
        be = eta.part(1, 0)
        etas.append(al + be)
        series.alphas.append(al)
        series.betas.append(be)
    return series

"""Operator identities evaluated on lattice fields, with convergence sweeps."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import presets
from .curvature import (D_double_prime, D_double_prime_adjoint, D_prime, D_prime_adjoint,
                        chern_curvature, conformal_mean_curvature, covariant_gradient,
                        d_double_prime_A, d_double_prime_A_adjoint, d_prime_A,
                        d_prime_A_adjoint, hitchin_residuals, lambda_theta,
                        mean_curvature, theta)
from .fields import EndForm, HitchinPairState, lambda_op, random_bandlimited, wedge_bracket
from .grid import TorusGrid, inner_product, laplacian, norm_sq

EXACT_FACTOR = 1e-11
RATE_WINDOW = (1.7, 2.3)


def _norm(psi) -> float:
    return float(np.sqrt(norm_sq(psi)))


@dataclass
class IdentityReport:
    identity_name: str
    resolutions: list
    residual_norms: list
    scales: list
    rates: list = field(default_factory=list)
    exactness_class: str = "unclassified"
    flags: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self):
        """CSV rows ``identity, resolution, residual, rate`` (rate empty on the first)."""
        for i, (N, r) in enumerate(zip(self.resolutions, self.residual_norms)):
            rate = self.rates[i - 1] if i > 0 and self.rates else ""
            yield (self.identity_name, N, r, rate)


def fit_rates(resolutions, residuals) -> list:
    """Observed orders ``log(r_i / r_{i+1}) / log(N_{i+1} / N_i)``."""
    out = []
    for (n0, r0), (n1, r1) in zip(zip(resolutions, residuals), zip(resolutions[1:], residuals[1:])):
        if r0 > 0 and r1 > 0:
            out.append(float(np.log(r0 / r1) / np.log(n1 / n0)))
        else:
            out.append(float("nan"))
    return out


def classify_exactness(residuals, scales, rates) -> str:
    """``machine-exact``, ``order-2``, ``diverging`` or ``inconclusive``."""
    if all(r <= EXACT_FACTOR * max(s, 1.0) for r, s in zip(residuals, scales)):
        return "machine-exact"
    if not rates:
        return "inconclusive"
    if all(RATE_WINDOW[0] <= q <= RATE_WINDOW[1] for q in rates):
        return "order-2"
    if residuals[-1] > residuals[0]:
        return "diverging"
    return "inconclusive"


def _single(name, residual, scale, **extra) -> IdentityReport:
    flags = extra.pop("flags", {})
    rep = IdentityReport(name, [None], [float(residual)], [float(scale)], flags=flags, extra=extra)
    rep.exactness_class = classify_exactness(rep.residual_norms, rep.scales, [])
    return rep


def merge(reports, resolutions) -> IdentityReport:
    """Combine single-resolution reports of one identity into a sweep."""
    first = reports[0]
    res = [r.residual_norms[0] for r in reports]
    scales = [r.scales[0] for r in reports]
    rates = fit_rates(list(resolutions), res)
    flags = {}
    for r in reports:
        for k, v in r.flags.items():
            flags[k] = bool(flags.get(k, False) or v)
    extra = {k: [r.extra.get(k) for r in reports] for k in first.extra}
    return IdentityReport(first.identity_name, list(resolutions), res, scales, rates,
                          classify_exactness(res, scales, rates), flags, extra)


# --- individual identities --------------------------------------------------------------

def check_kahler_identities(pair: HitchinPairState, test: EndForm) -> IdentityReport:
    """``i[Lambda, D'] = -(D'')^*`` and ``i[Lambda, D''] = (D')^*`` applied to ``test``."""
    if not (test.degrees == (1,) or test.bidegrees == ((1, 1),)):
        raise ValueError(f"test must be a degree-1 or (1,1) form, got {test.bidegrees}")
    lhs1 = 1j * (lambda_op(D_prime(pair, test)) - D_prime(pair, lambda_op(test)))
    rhs1 = -D_double_prime_adjoint(pair, test)
    lhs2 = 1j * (lambda_op(D_double_prime(pair, test)) - D_double_prime(pair, lambda_op(test)))
    rhs2 = D_prime_adjoint(pair, test)
    r1, r2 = _norm(lhs1 - rhs1), _norm(lhs2 - rhs2)
    scale = max(_norm(rhs1), _norm(rhs2), _norm(test))
    return _single("kahler", max(r1, r2), scale, first=r1, second=r2)


def _lambda_bracket(curv: EndForm, s: EndForm) -> EndForm:
    return 1j * (lambda_op(wedge_bracket(curv, s)) - wedge_bracket(curv, lambda_op(s)))


def check_laplacian_gap(pair: HitchinPairState, test: EndForm) -> dict:
    """Both Laplacian-gap identities on a 0-form ``test``.

    Returns ``{"s": report, "sss": report}`` for the Chern and the
    Hitchin-Simpson versions.
    """
    if test.bidegrees != ((0, 0),):
        raise ValueError("test must be a 0-form")
    F = chern_curvature(pair)
    F_total = F["F11"] + F["F20"] + F["F02"]
    lhs_s = (d_prime_A_adjoint(pair, d_prime_A(pair, test))
             - d_double_prime_A_adjoint(pair, d_double_prime_A(pair, test)))
    rhs_s = _lambda_bracket(F_total, test)
    R = F_total + wedge_bracket(pair.phi, pair.phi_star) + d_prime_A(pair, pair.phi) \
        + d_double_prime_A(pair, pair.phi_star)
    lhs_h = (D_prime_adjoint(pair, D_prime(pair, test))
             - D_double_prime_adjoint(pair, D_double_prime(pair, test)))
    rhs_h = _lambda_bracket(R, test)
    return {
        "s": _single("laplacian_gap_s", _norm(lhs_s - rhs_s), max(_norm(lhs_s), _norm(rhs_s))),
        "sss": _single("laplacian_gap_sss", _norm(lhs_h - rhs_h), max(_norm(lhs_h), _norm(rhs_h))),
    }


def hitchin_simpson_full(pair: HitchinPairState) -> EndForm:
    """``F_A + [phi, phi^*] + d'_A phi + d''_A phi^*`` including the (2,0), (0,2) parts of ``F``."""
    F = chern_curvature(pair)
    return (theta(pair) + F["F20"] + F["F02"] + d_prime_A(pair, pair.phi)
            + d_double_prime_A(pair, pair.phi_star))


def check_bianchi(pair: HitchinPairState, tolerance: float = 1e-8) -> IdentityReport:
    """``(D'' - D') R = 0`` for the Hitchin-Simpson curvature ``R``."""
    R = hitchin_simpson_full(pair)
    res = D_double_prime(pair, R) - D_prime(pair, R)
    hres = hitchin_residuals(pair)
    non_hitchin = max(hres["holomorphy"], hres["integrability"]) > tolerance
    return _single("bianchi", _norm(res), _norm(R), flags={"non_hitchin": non_hitchin},
                   hitchin_residual=max(hres["holomorphy"], hres["integrability"]))


def strong_routes(pair: HitchinPairState) -> dict:
    """``D^* R`` by the reduced formula and by exact discrete adjoints."""
    lt = lambda_theta(pair)
    reduced = (1j * (d_prime_A(pair, lt) - d_double_prime_A(pair, lt))
               - 1j * wedge_bracket(pair.phi, lt) + 1j * wedge_bracket(pair.phi_star, lt))
    R = hitchin_simpson_full(pair)
    direct = D_prime_adjoint(pair, R) + D_double_prime_adjoint(pair, R)
    return {"reduced": reduced, "direct": direct}


def check_strong_equivalence(pair: HitchinPairState) -> IdentityReport:
    """Gap between the two evaluations of ``D^* R``; both norms are reported."""
    r = strong_routes(pair)
    a, b = _norm(r["reduced"]), _norm(r["direct"])
    return _single("strong_equivalence", _norm(r["reduced"] - r["direct"]), max(a, b, 1.0),
                   reduced_norm=a, direct_norm=b)


def functional_terms(pair: HitchinPairState) -> dict:
    """Both sides of the surface functional decomposition (flat base)."""
    if pair.grid.n != 1:
        raise ValueError("functional decomposition is stated on surfaces (n = 1)")
    F11 = chern_curvature(pair)["F11"]
    lhs = norm_sq(theta(pair)) + 4.0 * norm_sq(d_double_prime_A(pair, pair.phi))
    grad = sum(norm_sq(g) for g in covariant_gradient(pair, pair.phi))
    rhs = norm_sq(F11) + norm_sq(wedge_bracket(pair.phi, pair.phi_star)) + 2.0 * grad
    LF = lambda_op(F11)
    coupling = float(inner_product(1j * wedge_bracket(LF, pair.phi), pair.phi).real)
    return {"lhs": float(lhs), "rhs": float(rhs), "gradient": float(grad),
            "coupling": coupling}


def check_functional_decomposition(pair: HitchinPairState) -> IdentityReport:
    """``||Theta||^2 + 4||d''phi||^2 = ||F||^2 + ||[phi,phi^*]||^2 + 2||nabla phi||^2``.

    The coupling term ``2 Re <i[Lambda F, phi], phi>`` is reported separately;
    with ``nabla`` taken over all real axes it is not part of the identity.
    """
    t = functional_terms(pair)
    return _single("functional_decomposition", abs(t["lhs"] - t["rhs"]), max(t["lhs"], 1.0),
                   lhs=t["lhs"], rhs=t["rhs"], coupling=t["coupling"],
                   with_coupling_residual=abs(t["lhs"] - t["rhs"] + 2.0 * t["coupling"]))


def check_conformal_shift(pair: HitchinPairState, u) -> IdentityReport:
    """``K_u - K = (1/2) Delta u Id`` with the positive lattice Laplacian ``-laplacian``."""
    u = np.asarray(u, dtype=float)
    g, r = pair.grid, pair.rank
    Ku = conformal_mean_curvature(pair, u)
    K = mean_curvature(pair)
    shift = EndForm.scalar(g, r, -0.5 * laplacian(u, g))
    diff = Ku - K
    return _single("conformal_shift", _norm(diff - shift), max(_norm(diff), 1.0))


# --- standard inputs and the suite -------------------------------------------------------

SUITE = ("kahler", "laplacian_gap_s", "laplacian_gap_sss", "bianchi", "strong_equivalence",
         "functional_decomposition", "conformal_shift")


def _abelian_pair(grid: TorusGrid, seed: int) -> HitchinPairState:
    """``a = i diag(g1, g2) dzbar`` with band-limited ``g1, g2``; ``phi = 0``."""
    g1 = random_bandlimited(grid, 1, (0, 0), seed, 2, 0.5)[((), ())][..., 0, 0]
    g2 = random_bandlimited(grid, 1, (0, 0), seed + 1, 2, 0.5)[((), ())][..., 0, 0]
    arr = np.zeros(np.broadcast_shapes(g1.shape, g2.shape) + (2, 2), dtype=np.complex128)
    arr[..., 0, 0] = 1j * g1
    arr[..., 1, 1] = 1j * g2
    a = EndForm(grid, 2, {((), (0,)): arr})
    return HitchinPairState(a, EndForm.zeros(grid, 2, (1, 0)))


def _conformal_factor(grid: TorusGrid) -> np.ndarray:
    x, y = grid.coordinate(0), grid.coordinate(1)
    L = grid.side_length
    return 0.1 * np.cos(2 * np.pi * x / L) + 0.05 * np.sin(2 * np.pi * (x + 2 * y) / L)


def run_check(name: str, N: int, seed: int = 0) -> IdentityReport:
    """One identity at one resolution on its standard band-limited input."""
    g = TorusGrid(1, N)
    if name == "kahler":
        pair = presets.random_pair(g, 2, seed + 11, 2, 0.5)
        t1 = random_bandlimited(g, 2, (1, 0), seed + 21, 2, 1.0) \
            + random_bandlimited(g, 2, (0, 1), seed + 22, 2, 1.0)
        t2 = random_bandlimited(g, 2, (1, 1), seed + 23, 2, 1.0)
        a, b = check_kahler_identities(pair, t1), check_kahler_identities(pair, t2)
        return a if a.residual_norms[0] >= b.residual_norms[0] else b
    if name in ("laplacian_gap_s", "laplacian_gap_sss"):
        if name.endswith("_s"):
            pair = _abelian_pair(g, seed + 31)
        else:
            pair = presets.gauge_hitchin(g, seed, k_max=1, amplitude=0.1)
        test = random_bandlimited(g, 2, (0, 0), seed + 33, 2, 1.0)
        return check_laplacian_gap(pair, test)[name.rsplit("_", 1)[1]]
    if name == "bianchi":
        return check_bianchi(presets.gauge_hitchin(TorusGrid(2, N), seed, k_max=1, amplitude=0.1))
    if name == "strong_equivalence":
        return check_strong_equivalence(presets.random_pair(g, 2, seed + 41, 2, 0.5))
    if name == "functional_decomposition":
        return check_functional_decomposition(presets.random_pair(g, 2, seed + 51, 2, 0.5))
    if name == "conformal_shift":
        return check_conformal_shift(presets.random_pair(g, 2, seed + 61, 2, 0.5),
                                     _conformal_factor(g))
    raise ValueError(f"unknown identity {name!r}")


def run_suite(suite: str = "all", resolutions=(16, 32, 64), seed: int = 0) -> list:
    """Sweep the named identity (or all of them) over the resolutions."""
    if not suite:
        raise ValueError("suite name is empty")
    names = SUITE if suite == "all" else (suite,)
    for name in names:
        if name not in SUITE:
            raise ValueError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITE)}")
    resolutions = [int(N) for N in resolutions]
    if not resolutions:
        raise ValueError("at least one resolution is needed")
    return [merge([run_check(name, N, seed) for N in resolutions], resolutions)
            for name in names]

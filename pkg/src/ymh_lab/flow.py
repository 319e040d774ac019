"""YMH functionals, moment maps, the gradient flow and its first variation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .curvature import (chern_curvature, d_double_prime_A, d_prime_A, hitchin_residuals,
                        lambda_theta, mean_curvature, theta)
from .fields import DeformationPair, EndForm, HitchinPairState, dagger, wedge_bracket
from .grid import inner_product, norm_sq


class StepFailure(RuntimeError):
    """Raised when the adaptive policy cannot find a non-increasing step."""

    def __init__(self, message, state=None, t=None):
        super().__init__(message)
        self.state = state
        self.t = t


def _require_surface(pair):
    if pair.grid.n != 1:
        raise ValueError("this functional is defined on surfaces (n = 1)")


def ymh_surface(pair: HitchinPairState) -> float:
    """``||Theta||^2 + 4 ||d''_A phi||^2``."""
    _require_surface(pair)
    return norm_sq(theta(pair)) + 4.0 * norm_sq(d_double_prime_A(pair, pair.phi))


def ymh_general(pair: HitchinPairState, integrand: str = "full") -> float:
    """Higher-dimensional functional.

    ``full`` integrates ``|F_A + [phi, phi^*] + d_A(phi + phi^*)|^2``;
    ``hitchin_simpson`` integrates ``|Theta + d'_A phi + d''_A phi^*|^2``.
    """
    th = theta(pair)
    dphi = d_prime_A(pair, pair.phi)
    dphistar = d_double_prime_A(pair, pair.phi_star)
    if integrand == "hitchin_simpson":
        total = th + dphi + dphistar
    elif integrand == "full":
        F = chern_curvature(pair)
        total = (th + F["F20"] + F["F02"] + dphi + dphistar
                 + d_double_prime_A(pair, pair.phi) + d_prime_A(pair, pair.phi_star))
    else:
        raise ValueError(f"unknown integrand {integrand!r}")
    return norm_sq(total)


def ymh(pair: HitchinPairState) -> float:
    """The functional guarding the flow: surface form on n = 1, full form otherwise."""
    return ymh_surface(pair) if pair.grid.n == 1 else ymh_general(pair, "full")


def moment_maps(pair: HitchinPairState) -> dict:
    """Hyperkahler moment maps ``mu_I, mu_J, mu_K`` on a surface."""
    _require_surface(pair)
    dpp = d_double_prime_A(pair, pair.phi)
    dp_star = d_prime_A(pair, pair.phi_star)
    return {"mu_I": theta(pair), "mu_J": -1j * (dpp + dp_star), "mu_K": -dpp + dp_star}


def flow_rhs(pair: HitchinPairState) -> dict:
    """``da = d''_A K`` and ``dphi = [phi, K]``."""
    K = mean_curvature(pair)
    return {"da": d_double_prime_A(pair, K), "dphi": wedge_bracket(pair.phi, K)}


def _axpy(pair, rhs, dt):
    return HitchinPairState(pair.a + dt * rhs["da"], pair.phi + dt * rhs["dphi"])


def flow_step(pair: HitchinPairState, dt: float) -> HitchinPairState:
    """One classical Runge-Kutta step of the flow."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = flow_rhs(pair)
    k2 = flow_rhs(_axpy(pair, k1, dt / 2))
    k3 = flow_rhs(_axpy(pair, k2, dt / 2))
    k4 = flow_rhs(_axpy(pair, k3, dt))
    da = k1["da"] + 2.0 * k2["da"] + 2.0 * k3["da"] + k4["da"]
    dphi = k1["dphi"] + 2.0 * k2["dphi"] + 2.0 * k3["dphi"] + k4["dphi"]
    return HitchinPairState(pair.a + (dt / 6.0) * da, pair.phi + (dt / 6.0) * dphi)


@dataclass
class FlowTrajectory:
    times: list = field(default_factory=list)
    ymh_values: list = field(default_factory=list)
    residual_series: list = field(default_factory=list)
    final_state: HitchinPairState = None
    step_policy_log: list = field(default_factory=list)
    wall_time: float = 0.0
    functional_series: dict = field(default_factory=dict)
    step_sizes: list = field(default_factory=list)

    def monotone(self, name=None, slack: float = 1e-13) -> bool:
        """Whether a recorded functional never increases (guard functional by default)."""
        vals = self.ymh_values if name is None else self.functional_series[name]
        return all(b <= a + slack * max(1.0, abs(a)) for a, b in zip(vals, vals[1:]))

    def rows(self):
        """CSV rows ``t, ymh, holomorphy, integrability, k_herm, dt`` plus any
        extra functionals (one column each, in :attr:`functional_names` order)."""
        dts = self.step_sizes
        extra = [self.functional_series[k] for k in self.functional_names]
        for i, (t, y, res, dt) in enumerate(zip(self.times, self.ymh_values,
                                                self.residual_series, dts)):
            yield ((t, y, res["holomorphy"], res["integrability"], res["k_hermiticity"], dt)
                   + tuple(col[i] for col in extra))

    @property
    def functional_names(self) -> tuple:
        return tuple(sorted(self.functional_series))


def _record(traj, pair, t, value, dt=0.0):
    res = hitchin_residuals(pair)
    K = mean_curvature(pair)
    res["k_hermiticity"] = float(np.sqrt(norm_sq(K - dagger(K))))
    traj.times.append(float(t))
    traj.step_sizes.append(float(dt))
    traj.ymh_values.append(float(value))
    traj.residual_series.append(res)
    if pair.grid.n > 1:
        # the flow is not known to descend both functionals; record each
        for name in ("full", "hitchin_simpson"):
            traj.functional_series.setdefault(name, []).append(ymh_general(pair, name))


def initial_dt(pair: HitchinPairState) -> float:
    """``0.2 h^2 / (1 + max site norm of K)``."""
    K = mean_curvature(pair)[((), ())]
    kmax = float(np.max(np.sqrt(np.sum(np.abs(K) ** 2, axis=(-2, -1)))))
    return 0.2 * pair.grid.spacing ** 2 / (1.0 + kmax)


def run_flow(pair: HitchinPairState, t_end: float, dt_policy="auto",
             max_halvings: int = 20, record_every: int = 1) -> FlowTrajectory:
    """Integrate the flow to ``t_end``.

    Parameters
    ----------
    dt_policy : float or "auto"
        A fixed step, or the adaptive rule: start from :func:`initial_dt` and
        halve whenever the functional increases (at most ``max_halvings``
        times per step).
    """
    start = time.perf_counter()
    traj = FlowTrajectory()
    t = 0.0
    value = ymh(pair)
    _record(traj, pair, t, value)
    adaptive = dt_policy == "auto"
    dt = initial_dt(pair) if adaptive else float(dt_policy)
    if not dt > 0:
        raise ValueError("dt must be positive")
    nstep = 0
    while t < t_end * (1 - 1e-14):
        step = min(dt, t_end - t)
        if adaptive:
            for _ in range(max_halvings + 1):
                trial = flow_step(pair, step)
                new_value = ymh(trial)
                if new_value <= value + 1e-13 * max(1.0, abs(value)):
                    break
                traj.step_policy_log.append({"t": t, "dt": step, "accepted": False})
                step /= 2.0
            else:
                raise StepFailure(f"functional increased after {max_halvings} halvings at t={t}",
                                  state=pair, t=t)
            dt = step
        else:
            trial = flow_step(pair, step)
            new_value = ymh(trial)
        if not np.isfinite(new_value):
            raise StepFailure(f"non-finite functional at t={t}", state=pair, t=t)
        pair, value, t = trial, new_value, t + step
        nstep += 1
        traj.step_policy_log.append({"t": t, "dt": step, "accepted": True})
        if nstep % record_every == 0 or t >= t_end * (1 - 1e-14):
            _record(traj, pair, t, value, step)
    traj.final_state = pair
    traj.wall_time = time.perf_counter() - start
    return traj


# --- first variation ------------------------------------------------------------------

def first_variation(pair: HitchinPairState, deformation: DeformationPair,
                    holomorphy_term: bool = True) -> float:
    """Derivative of the surface functional along ``(a + t alpha01, phi + t beta)``.

    The four-term expression is the variation of ``||Theta||^2``; the extra
    term ``8 Re <d''_A phi, d''_A beta + [alpha01, phi]>`` is the variation of
    ``4 ||d''_A phi||^2`` and vanishes on Hitchin pairs.
    """
    _require_surface(pair)
    lt = lambda_theta(pair)
    al, be = deformation.alpha01, deformation.beta
    val = (2j * inner_product(dagger(al), d_prime_A(pair, lt))
           + 2j * inner_product(be, wedge_bracket(pair.phi, lt))
           + 2j * inner_product(al, d_double_prime_A(pair, lt))
           - 2j * inner_product(dagger(be), wedge_bracket(pair.phi_star, lt)))
    if holomorphy_term:
        dpp = d_double_prime_A(pair, pair.phi)
        val += 8.0 * inner_product(dpp, d_double_prime_A(pair, be) + wedge_bracket(al, pair.phi)).real
    return float(val.real)


def shifted(pair: HitchinPairState, deformation: DeformationPair, t) -> HitchinPairState:
    return HitchinPairState(pair.a + t * deformation.alpha01, pair.phi + t * deformation.beta)


def directional_derivative_fd(pair: HitchinPairState, deformation: DeformationPair,
                              dt: float = 1e-5) -> float:
    """Central difference of the surface functional along the deformation."""
    plus = ymh_surface(shifted(pair, deformation, dt))
    minus = ymh_surface(shifted(pair, deformation, -dt))
    return (plus - minus) / (2.0 * dt)

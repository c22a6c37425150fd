"""The central proximal inequality relating one step to any test point."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .functionals import Functional, prox
from .spaces import Point, Space


@dataclass(frozen=True)
class KeyEstimateReport:
    residual: float
    residual_weak: float
    K: float
    R: Optional[float]
    tau: float
    skipped: Optional[str]

    @property
    def ok(self):
        return self.skipped is None and self.residual <= 1e-8


def key_estimate_check(
    f: Functional,
    space: Space,
    x: Point,
    tau: float,
    y: Point,
    R: Optional[float] = None,
) -> KeyEstimateReport:
    """Signed defects of the one-step key inequality for a sample (x, tau, y).

    With x_tau a proximal point of x, checks
    d^2(x_tau, y) <= d^2(x, y) - lam tau d^2(x_tau, y)
                     + 2 tau {phi(y) - phi(x_tau)} - (K/2) d^2(x, x_tau)
    together with the weaker variant whose last term is
    max(0, -K) tau {phi(x) - phi(x_tau)}. On locally curved spaces the
    modulus K = K(R) is taken on the smallest admissible ball when R is
    not supplied; inadmissible samples are marked skipped, not failed.
    """
    res = prox(f, space, x, tau)
    xt = res.minimizer
    d_xt_y = space.distance(xt, y)
    d_x_xt = res.displacement
    if space.case_tag == "GLOBAL_K":
        K = 2.0
        R_used = None
    else:
        R_used = R if R is not None else d_xt_y + d_x_xt + 1e-9
        if d_xt_y >= R_used - d_x_xt:
            return KeyEstimateReport(
                math.nan, math.nan, math.nan, R_used, tau,
                "test point outside the admissible ball",
            )
        if R_used >= math.pi:
            return KeyEstimateReport(
                math.nan, math.nan, math.nan, R_used, tau,
                "admissible ball exceeds the modulus range",
            )
        # smallness preflight with the empirical a-priori constant
        C_emp = max(f.value(x) - res.minimizer_value, d_x_xt * d_x_xt, 1e-12)
        cap = math.pi**2 / (2.0 * C_emp)
        if math.isfinite(f.tau_star):
            cap = min(cap, f.tau_star / 8.0)
        if tau >= cap:
            return KeyEstimateReport(
                math.nan, math.nan, math.nan, R_used, tau,
                f"tau {tau!r} fails the smallness preflight {cap!r}",
            )
        K = space.convexity_constant(R_used)
    lam = f.lam
    d_x_y = space.distance(x, y)
    phi_gap = f.value(y) - res.minimizer_value
    base = d_x_y**2 - lam * tau * d_xt_y**2 + 2.0 * tau * phi_gap
    residual = d_xt_y**2 - (base - 0.5 * K * d_x_xt**2)
    drop = f.value(x) - res.minimizer_value
    residual_weak = d_xt_y**2 - (base + max(0.0, -K) * tau * drop)
    return KeyEstimateReport(residual, residual_weak, K, R_used, tau, None)

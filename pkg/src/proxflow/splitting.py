"""Alternating two-potential proximal splitting and its certificates.

The scheme alternates proximal steps for f1 and f2 over one partition and
keeps a per-step ledger of the defect delta_k = max(0, cross-step energy
increases), whose summability is the admission ticket for the product
formula. Checks cover the Lipschitz delta budget, the energy and
displacement bounds, the exact per-step key inequality, and convergence
of the splitting interpolant to the gradient flow of the sum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import SolverError, UsageError
from .functionals import Ball, Combination, Functional, prox
from .scheme import FlowCurve, Partition, converge_flow
from .spaces import Point, Space


@dataclass(frozen=True)
class SplitModuli:
    lam1_tau: float
    lam2_tau: float
    Kprime: float
    diameter: float


class SplitScheme:
    """Alternating trajectory (z^0, zhat^1, z^1, ...) with its delta ledger."""

    def __init__(self, f1, f2, space, partition, end_coords, hat_coords,
                 phi1_end, phi2_end, phi1_hat, phi2_hat):
        self.f1 = f1
        self.f2 = f2
        self.space = space
        self.partition = partition
        self.end_coords = np.asarray(end_coords, dtype=float)
        self.hat_coords = np.asarray(hat_coords, dtype=float)
        self.phi1_end = np.asarray(phi1_end, dtype=float)
        self.phi2_end = np.asarray(phi2_end, dtype=float)
        self.phi1_hat = np.asarray(phi1_hat, dtype=float)
        self.phi2_hat = np.asarray(phi2_hat, dtype=float)

    @property
    def n_steps(self):
        return self.partition.n_steps

    def z(self, k: int) -> Point:
        return self.space.point_from_array(self.end_coords[k])

    def zhat(self, k: int) -> Point:
        if k < 1:
            raise UsageError("half-step points start at k = 1")
        return self.space.point_from_array(self.hat_coords[k - 1])

    @property
    def z0(self) -> Point:
        return self.z(0)

    def z_bar(self, t: float) -> Point:
        """Right-continuous step interpolant of the end-of-step points."""
        return self.z(self.partition.step_index(t))

    @property
    def deltas(self) -> np.ndarray:
        """Per-step defect: max of 0 and the two cross-step energy increases."""
        rise2 = self.phi2_hat - self.phi2_end[:-1]
        rise1 = self.phi1_end[1:] - self.phi1_hat
        return np.maximum(0.0, np.maximum(rise2, rise1))

    def delta_total(self, T: Optional[float] = None) -> float:
        n = self.n_steps if T is None else self._last_step(T)
        return float(np.sum(self.deltas[:n]))

    def _last_step(self, T: float) -> int:
        return int(np.searchsorted(self.partition.times, T + 1e-12) - 1)

    def moduli(self, K: float) -> SplitModuli:
        mesh = self.partition.mesh
        for lam in (self.f1.lam, self.f2.lam):
            if lam * mesh <= -1.0:
                raise UsageError("need lam_i * mesh > -1")
        return SplitModuli(
            math.log1p(self.f1.lam * mesh) / mesh,
            math.log1p(self.f2.lam * mesh) / mesh,
            min(0.0, K),
            self.space.diameter_bound,
        )

    def to_dict(self):
        return {
            "schema": "proxflow.split/1",
            "space": self.space.tag,
            "times": [float(v) for v in self.partition.times],
            "end_coords": [[float(v) for v in r] for r in self.end_coords],
            "hat_coords": [[float(v) for v in r] for r in self.hat_coords],
            "phi1_end": [float(v) for v in self.phi1_end],
            "phi2_end": [float(v) for v in self.phi2_end],
            "phi1_hat": [float(v) for v in self.phi1_hat],
            "phi2_hat": [float(v) for v in self.phi2_hat],
            "deltas": [float(v) for v in self.deltas],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)

    def write_columnar(self, path):
        cols = " ".join(f"c{i}" for i in range(self.end_coords.shape[1]))
        with open(path, "w") as fh:
            fh.write(f"# proxflow.split/1 space={self.space.tag}\n")
            fh.write(f"# t kind {cols} phi1 phi2 delta\n")
            fh.write(
                " ".join(
                    [repr(0.0), "z"]
                    + [repr(float(v)) for v in self.end_coords[0]]
                    + [repr(float(self.phi1_end[0])), repr(float(self.phi2_end[0])),
                       repr(0.0)]
                )
                + "\n"
            )
            deltas = self.deltas
            for k in range(1, self.n_steps + 1):
                t = float(self.partition.times[k])
                for kind, coords, p1, p2 in (
                    ("zhat", self.hat_coords[k - 1], self.phi1_hat[k - 1],
                     self.phi2_hat[k - 1]),
                    ("z", self.end_coords[k], self.phi1_end[k], self.phi2_end[k]),
                ):
                    fh.write(
                        " ".join(
                            [repr(t), kind]
                            + [repr(float(v)) for v in coords]
                            + [repr(float(p1)), repr(float(p2)),
                               repr(float(deltas[k - 1]))]
                        )
                        + "\n"
                    )


def run_split(
    f1: Functional,
    f2: Functional,
    space: Space,
    z0: Point,
    partition: Partition,
    bounding_ball: Optional[Ball] = None,
) -> SplitScheme:
    """Alternate prox steps for f1 then f2 over the partition.

    Requires a finite-diameter space or an explicit bounding ball; the run
    aborts when an iterate leaves the declared ball.
    """
    space.check_point(z0)
    if not (f1.in_domain(z0) and f2.in_domain(z0)):
        raise UsageError("initial point must lie in both domains")
    if not math.isfinite(space.diameter_bound) and bounding_ball is None:
        raise UsageError(
            "unbounded space: declare a bounding ball for the splitting run"
        )
    n = partition.n_steps
    m = space.coord_size
    end_coords = np.empty((n + 1, m))
    hat_coords = np.empty((n, m))
    phi1_end = np.empty(n + 1)
    phi2_end = np.empty(n + 1)
    phi1_hat = np.empty(n)
    phi2_hat = np.empty(n)
    end_coords[0] = space.coords_array(z0)
    phi1_end[0] = f1.value(z0)
    phi2_end[0] = f2.value(z0)

    def inside(p):
        return (
            bounding_ball is None
            or space.distance(bounding_ball.center, p) <= bounding_ball.radius + 1e-9
        )

    z = z0
    for k, tau in enumerate(partition.taus, start=1):
        try:
            rhat = prox(f1, space, z, float(tau))
        except SolverError as err:
            raise SolverError(f"prox failed at half-step {k}a: {err}", err.stats)
        zh = rhat.minimizer
        try:
            rend = prox(f2, space, zh, float(tau))
        except SolverError as err:
            raise SolverError(f"prox failed at half-step {k}b: {err}", err.stats)
        z = rend.minimizer
        if not (inside(zh) and inside(z)):
            raise UsageError(f"trajectory left the bounding ball at step {k}")
        hat_coords[k - 1] = space.coords_array(zh)
        end_coords[k] = space.coords_array(z)
        phi1_hat[k - 1] = rhat.minimizer_value
        phi2_hat[k - 1] = f2.value(zh)
        phi1_end[k] = f1.value(z)
        phi2_end[k] = rend.minimizer_value
    return SplitScheme(f1, f2, space, partition, end_coords, hat_coords,
                       phi1_end, phi2_end, phi1_hat, phi2_hat)


@dataclass
class DeltaBudgetReport:
    total_delta: float
    bound: float
    worst_half_step: float
    ok: bool


def delta_budget(scheme: SplitScheme, L1: float, L2: float, T: float) -> DeltaBudgetReport:
    """Lipschitz-pair budget: sum of deltas <= 2 L^2 T, steps <= 2 L tau."""
    n = scheme._last_step(T)
    L = max(L1, L2)
    total = float(np.sum(scheme.deltas[:n]))
    bound = 2.0 * L * L * float(scheme.partition.times[n])
    worst = -math.inf
    for k in range(1, n + 1):
        tau = scheme.partition.taus[k - 1]
        d_a = scheme.space.distance(scheme.z(k - 1), scheme.zhat(k))
        d_b = scheme.space.distance(scheme.zhat(k), scheme.z(k))
        worst = max(worst, d_a - 2.0 * L1 * tau, d_b - 2.0 * L2 * tau)
    ok = total <= bound + 1e-9 * (1.0 + bound) and worst <= 1e-9
    return DeltaBudgetReport(total, bound, worst, ok)


@dataclass
class SplitBoundReport:
    energy_margin: float
    displacement_margin: float
    delta_total: float
    ok: bool


def bound_check(scheme: SplitScheme, T: float) -> SplitBoundReport:
    """Energy and displacement bounds driven by the measured delta ledger."""
    n = scheme._last_step(T)
    if n < 1:
        raise UsageError("horizon excludes every step")
    if scheme.f1.lower_bound is None or scheme.f2.lower_bound is None:
        raise UsageError("bound check needs declared lower bounds")
    delta = float(np.sum(scheme.deltas[:n]))
    energy_margin = max(
        scheme.phi1_end[n] - scheme.phi1_end[0],
        scheme.phi2_end[n] - scheme.phi2_end[0],
        scheme.phi1_hat[n - 1] - scheme.phi1_end[0],
        scheme.phi2_hat[n - 1] - scheme.phi2_end[0],
    ) - delta
    root = math.sqrt(
        max(scheme.phi1_end[0] - scheme.f1.lower_bound + 2.0 * delta, 0.0)
    ) + math.sqrt(
        max(scheme.phi2_end[0] - scheme.f2.lower_bound + 2.0 * delta, 0.0)
    )
    times = scheme.partition.times
    ks = range(1, n + 1)
    stride = max(1, n // 160)
    worst = -math.inf
    for l in range(1, n + 1, stride):
        zl_prev = scheme.z(l - 1)
        zhl = scheme.zhat(l)
        for k in ks:
            if k < l:
                continue
            cap = math.sqrt(2.0 * (times[k] - times[l - 1])) * root
            dmax = max(
                scheme.space.distance(zl_prev, scheme.zhat(k)),
                scheme.space.distance(zl_prev, scheme.z(k)),
                scheme.space.distance(zhl, scheme.zhat(k)),
                scheme.space.distance(zhl, scheme.z(k)),
            )
            worst = max(worst, dmax - cap)
    ok = energy_margin <= 1e-9 and worst <= 1e-9
    return SplitBoundReport(energy_margin, worst, delta, ok)


def split_key_estimate_check(
    scheme: SplitScheme, w: Point, k: int, K: float
) -> float:
    """Signed defect of the exact one-step splitting inequality at step k.

    Returns LHS - RHS of
    (1 + lam2 tau) d^2(z^k, w) + lam1 tau d^2(zhat^k, w)
      <= d^2(z^{k-1}, w) + 2 tau {phi(w) - phi1(zhat^k) - phi2(z^k)}
         - K' tau {phi1(z^{k-1}) - phi1(zhat^k) + phi2(zhat^k) - phi2(z^k)};
    no unspecified constants appear, so nonpositive certifies exactly.
    """
    space = scheme.space
    space.check_point(w)
    if not (scheme.f1.in_domain(w) and scheme.f2.in_domain(w)):
        raise UsageError("test point must lie in both domains")
    tau = float(scheme.partition.taus[k - 1])
    lam1, lam2 = scheme.f1.lam, scheme.f2.lam
    Kp = min(0.0, K)
    d_end = space.distance(scheme.z(k), w)
    d_hat = space.distance(scheme.zhat(k), w)
    d_prev = space.distance(scheme.z(k - 1), w)
    phi_w = scheme.f1.value(w) + scheme.f2.value(w)
    lhs = (1.0 + lam2 * tau) * d_end * d_end + lam1 * tau * d_hat * d_hat
    rhs = (
        d_prev * d_prev
        + 2.0 * tau * (phi_w - scheme.phi1_hat[k - 1] - scheme.phi2_end[k])
        - Kp
        * tau
        * (
            scheme.phi1_end[k - 1]
            - scheme.phi1_hat[k - 1]
            + scheme.phi2_hat[k - 1]
            - scheme.phi2_end[k]
        )
    )
    return lhs - rhs


@dataclass
class TkConvergenceReport:
    meshes: list
    sup_errors: list
    fitted_order: float
    reference: FlowCurve
    ok: bool


def tk_convergence(
    f1: Functional,
    f2: Functional,
    space: Space,
    z0: Point,
    T: float,
    mesh_sequence: Sequence[float],
    bounding_ball: Optional[Ball] = None,
    atol: float = 1e-6,
) -> TkConvergenceReport:
    """Sup distance between splitting interpolants and the sum's flow.

    The reference flow of f1 + f2 is computed two halvings finer than the
    finest splitting mesh; the sup errors must decrease along the ladder,
    except where they already sit below the noise floor `atol` (exactly
    split potentials reach it at every mesh).
    """
    meshes = [float(m) for m in mesh_sequence]
    if any(b >= a for a, b in zip(meshes, meshes[1:])):
        raise UsageError("mesh sequence must be strictly decreasing")
    phi = Combination([(1.0, f1), (1.0, f2)])
    finest = meshes[-1]
    reference = converge_flow(phi, space, z0, T, [finest / 2.0, finest / 4.0])
    sups = []
    for mesh in meshes:
        scheme = run_split(f1, f2, space, z0, Partition.with_mesh(T, mesh),
                           bounding_ball=bounding_ball)
        worst = 0.0
        for k in range(1, scheme.n_steps + 1):
            t = float(scheme.partition.times[k])
            d = space.distance(scheme.z(k), reference.at(t))
            worst = max(worst, d)
        sups.append(worst)
    ok = all(b < a or b <= atol for a, b in zip(sups, sups[1:]))
    if max(sups) <= atol:
        order = math.nan  # at the noise floor, no rate to fit
    else:
        logm = np.log(np.asarray(meshes))
        logs = np.log(np.maximum(np.asarray(sups), 1e-300))
        A = np.vstack([np.ones_like(logm), logm]).T
        coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
        order = float(coef[1])
    return TkConvergenceReport(meshes, sups, order, reference, ok)

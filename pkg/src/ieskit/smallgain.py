"""Gain budgets for two-block interconnections of contracting systems.

Extracts the compact-set sup-constants from sampled grids, evaluates the
explicit admissible-gain formulas, and bundles everything into a certificate
whose composite decay check is re-run on the assembled field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ieskit import __version__
from ieskit.dynsys import Interconnection, assemble
from ieskit.finsler import (
    AssumptionTwoBounds,
    DecayReport,
    DisplacementSamples,
    FinslerCandidate,
    check_decay,
    compose,
)
from ieskit.io_utils import atomic_write_text
from ieskit.sampling import ball_grid

Array = np.ndarray


class InfeasibleBudgetError(ValueError):
    """No admissible gain budget exists for the requested rates."""


class CertificationError(RuntimeError):
    """Certification refused; the message names the failing check."""


@dataclass(frozen=True)
class SupConstants:
    """Sampled suprema over the ball of the given radius, inflated by the
    safety factor (true suprema are unattainable numerically)."""

    radius: float
    a1: float
    a2: float
    b1: float
    b2: float
    eta1: float
    eta2: float
    theta1: float
    theta2: float
    safety: float = 1.05
    provenance: str = "sampled, inflated"

    def __post_init__(self):
        for name in ("a1", "a2", "b1", "b2", "eta1", "eta2", "theta1", "theta2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.safety < 1.0:
            raise ValueError("safety factor must be >= 1")


def extract_constants(
    ic: Interconnection,
    bounds1: AssumptionTwoBounds,
    bounds2: AssumptionTwoBounds,
    radius: float,
    grid_density: int = 101,
    safety: float = 1.05,
) -> SupConstants:
    """Sampled sup-constants over the balls |x| <= R and |y| <= R.

    a_i are coupling magnitudes, b_i coupling-Jacobian spectral norms, eta_i
    and theta_i the gradient-bound suprema of the two candidates.  Each value
    is the grid maximum times the safety factor.
    """
    xs = ball_grid(radius, ic.n, grid_density)
    ys = ball_grid(radius, ic.m, grid_density)

    def refine_max(fn: Callable[[Array], float], start: Array, step: float) -> float:
        # deterministic pattern search inside the ball around the grid argmax,
        # so the reported constant tracks the true supremum rather than the
        # grid alignment (which would break monotonicity in the radius)
        x = start.copy()
        best = float(fn(x))
        s = step
        for _ in range(60):
            improved = False
            for i in range(len(x)):
                for delta in (s, -s):
                    cand = x.copy()
                    cand[i] += delta
                    nrm = np.linalg.norm(cand)
                    if nrm > radius:
                        cand *= radius / nrm
                    v = float(fn(cand))
                    if v > best:
                        best, x, improved = v, cand, True
            if not improved:
                s *= 0.5
                if s < 1e-12 * (1.0 + radius):
                    break
        return best

    cell = 2.0 * radius / (grid_density - 1)

    def grid_max(fn: Callable[[Array], float], pts: Array, label: str) -> float:
        best = -math.inf
        best_p = pts[0]
        for p in pts:
            v = float(fn(p))
            if not math.isfinite(v):
                raise ValueError(f"non-finite value of {label} at {p}")
            if v > best:
                best = v
                best_p = p
        return refine_max(fn, np.asarray(best_p, dtype=float), cell)

    a1 = grid_max(lambda y: np.linalg.norm(ic.g1.value(y)), ys, "g1")
    a2 = grid_max(lambda x: np.linalg.norm(ic.g2.value(x)), xs, "g2")
    b1 = grid_max(lambda y: np.linalg.norm(np.atleast_2d(ic.g1.jacobian(y)), 2), ys, "Dg1")
    b2 = grid_max(lambda x: np.linalg.norm(np.atleast_2d(ic.g2.jacobian(x)), 2), xs, "Dg2")
    eta1 = grid_max(lambda x: abs(bounds1.gamma(x)), xs, "gamma1")
    eta2 = grid_max(lambda y: abs(bounds2.gamma(y)), ys, "gamma2")
    theta1 = grid_max(lambda x: abs(bounds1.zeta(x)), xs, "zeta1")
    theta2 = grid_max(lambda y: abs(bounds2.zeta(y)), ys, "zeta2")

    return SupConstants(
        radius=radius,
        a1=a1 * safety,
        a2=a2 * safety,
        b1=b1 * safety,
        b2=b2 * safety,
        eta1=eta1 * safety,
        eta2=eta2 * safety,
        theta1=theta1 * safety,
        theta2=theta2 * safety,
        safety=safety,
    )


def default_epsilons(alpha1: float, alpha2: float, alpha: float) -> tuple[float, float, float, float]:
    """Symmetric slack split: e1 = e2 = (alpha1 - alpha)/3, e3 = e4 = (alpha2 - alpha)/3."""
    return ((alpha1 - alpha) / 3.0, (alpha1 - alpha) / 3.0,
            (alpha2 - alpha) / 3.0, (alpha2 - alpha) / 3.0)


def gain_budget(
    constants: SupConstants,
    alpha1: float,
    alpha2: float,
    alpha: float,
    epsilons: Optional[tuple[float, float, float, float]] = None,
) -> tuple[float, float]:
    """Admissible gain budget

        rho1_max = min(2 e1 / (2 a1 eta1 + b1 theta1^2), 2 e4 / b1)
        rho2_max = min(2 e3 / (2 a2 eta2 + b2 theta2^2), 2 e2 / b2)

    for any positive e1..e4 with e1 + e2 < alpha1 - alpha and
    e3 + e4 < alpha2 - alpha.  Zero denominators yield an infinite branch.
    """
    if alpha <= 0:
        raise ValueError("target rate alpha must be positive")
    if alpha >= min(alpha1, alpha2):
        raise InfeasibleBudgetError(
            f"no budget exists: alpha = {alpha} must be below min(alpha1, alpha2) "
            f"= {min(alpha1, alpha2)}"
        )
    if epsilons is None:
        epsilons = default_epsilons(alpha1, alpha2, alpha)
    e1, e2, e3, e4 = epsilons
    if min(e1, e2, e3, e4) <= 0:
        raise InfeasibleBudgetError("epsilon slacks must be positive")
    if not (e1 + e2 < alpha1 - alpha and e3 + e4 < alpha2 - alpha):
        raise InfeasibleBudgetError(
            "epsilon slacks must satisfy e1+e2 < alpha1-alpha and e3+e4 < alpha2-alpha"
        )
    c = constants

    def ratio(num: float, den: float) -> float:
        return math.inf if den == 0.0 else num / den

    rho1 = min(ratio(2.0 * e1, 2.0 * c.a1 * c.eta1 + c.b1 * c.theta1**2),
               ratio(2.0 * e4, c.b1))
    rho2 = min(ratio(2.0 * e3, 2.0 * c.a2 * c.eta2 + c.b2 * c.theta2**2),
               ratio(2.0 * e2, c.b2))
    return rho1, rho2


@dataclass(frozen=True)
class GainCertificate:
    """Constants, rates, slacks, gain budgets, and the attached decay report
    of the composite candidate on the assembled field at the budget gains."""

    constants: SupConstants
    alpha1: float
    alpha2: float
    alpha: float
    epsilons: tuple[float, float, float, float]
    rho1_max: float
    rho2_max: float
    decay_report: Optional[DecayReport] = None

    def to_record(self) -> dict[str, str]:
        c = self.constants
        rec = {
            "tool_version": __version__,
            "radius": repr(c.radius),
            "safety": repr(c.safety),
            "provenance": c.provenance,
            "a1": repr(c.a1),
            "a2": repr(c.a2),
            "b1": repr(c.b1),
            "b2": repr(c.b2),
            "eta1": repr(c.eta1),
            "eta2": repr(c.eta2),
            "theta1": repr(c.theta1),
            "theta2": repr(c.theta2),
            "alpha1": repr(self.alpha1),
            "alpha2": repr(self.alpha2),
            "alpha": repr(self.alpha),
            "epsilon1": repr(self.epsilons[0]),
            "epsilon2": repr(self.epsilons[1]),
            "epsilon3": repr(self.epsilons[2]),
            "epsilon4": repr(self.epsilons[3]),
            "rho1_max": repr(self.rho1_max),
            "rho2_max": repr(self.rho2_max),
        }
        if self.decay_report is not None:
            rec["decay_check"] = "pass" if self.decay_report.passed else "fail"
            rec["decay_worst"] = repr(self.decay_report.worst)
            rec["decay_samples"] = str(self.decay_report.n_samples)
        return rec

    def to_text(self) -> str:
        rec = self.to_record()
        lines = ["gain certificate (constants are sampled maxima times a safety factor)"]
        lines += [f"  {k} = {v}" for k, v in rec.items()]
        if self.decay_report is not None:
            lines.append(f"  note: {self.decay_report.note}")
        return "\n".join(lines) + "\n"

    def write_record(self, path) -> None:
        body = "".join(f"{k} = {v}\n" for k, v in self.to_record().items())
        atomic_write_text(path, body)

    def write_report(self, path) -> None:
        atomic_write_text(path, self.to_text())


def parse_certificate_record(path) -> dict[str, str]:
    """Re-parse a key = value certificate record."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        if not _:
            raise ValueError(f"malformed record line: {raw!r}")
        out[key.strip()] = value.strip()
    return out


def certify(
    ic: Interconnection,
    candidate1: FinslerCandidate,
    candidate2: FinslerCandidate,
    bounds1: AssumptionTwoBounds,
    bounds2: AssumptionTwoBounds,
    radius: float,
    alpha1: float,
    alpha2: float,
    alpha: float,
    epsilons: Optional[tuple[float, float, float, float]] = None,
    requested_gains: Optional[tuple[float, float]] = None,
    grid_density: int = 101,
    n_states: int = 64,
    n_directions: int = 16,
    tol: float = 1e-9,
) -> GainCertificate:
    """Full certification pipeline over the ball of the given radius.

    The component candidates are first checked against their decay rates in
    squared-displacement form; the budget is then computed from the sampled
    constants, and the composed candidate is re-checked on the assembled field
    at the budget gains.  Any failing check refuses certification.  When
    ``requested_gains`` is given it must not exceed the budget.
    """
    comp1 = check_decay(
        candidate1,
        ic.f1,
        alpha1,
        DisplacementSamples.product_ball(radius, ic.n, n_states, n_directions),
        tol=tol,
        comparator="squared_norm",
    )
    if not comp1.passed:
        raise CertificationError(
            f"first component decay check failed at z={comp1.worst_z}, "
            f"dz={comp1.worst_dz} (violation {comp1.worst:.3e})"
        )
    comp2 = check_decay(
        candidate2,
        ic.f2,
        alpha2,
        DisplacementSamples.product_ball(radius, ic.m, n_states, n_directions),
        tol=tol,
        comparator="squared_norm",
    )
    if not comp2.passed:
        raise CertificationError(
            f"second component decay check failed at z={comp2.worst_z}, "
            f"dz={comp2.worst_dz} (violation {comp2.worst:.3e})"
        )

    constants = extract_constants(ic, bounds1, bounds2, radius, grid_density)
    if epsilons is None:
        epsilons = default_epsilons(alpha1, alpha2, alpha)
    rho1_max, rho2_max = gain_budget(constants, alpha1, alpha2, alpha, epsilons)

    if requested_gains is not None:
        r1, r2 = requested_gains
        if r1 > rho1_max or r2 > rho2_max:
            raise CertificationError(
                f"requested gains ({r1}, {r2}) exceed the admissible budget "
                f"({rho1_max:.6g}, {rho2_max:.6g})"
            )

    # an infinite budget (degenerate coupling) is exercised at a large finite gain
    gains = (min(rho1_max, 1e6), min(rho2_max, 1e6))
    assembled = assemble(ic.with_gains(*gains))
    composed = compose(candidate1, candidate2)
    samples = DisplacementSamples.product_ball(
        radius, ic.n + ic.m, n_states, n_directions
    )
    report = check_decay(
        composed, assembled, alpha, samples, tol=tol, comparator="squared_norm"
    )
    if not report.passed:
        raise CertificationError(
            f"composite decay check failed at the budget gains: worst "
            f"{report.worst:.3e} at z={report.worst_z}, dz={report.worst_dz}"
        )
    return GainCertificate(
        constants=constants,
        alpha1=alpha1,
        alpha2=alpha2,
        alpha=alpha,
        epsilons=epsilons,
        rho1_max=rho1_max,
        rho2_max=rho2_max,
        decay_report=report,
    )


@dataclass(frozen=True)
class IspsGainPair:
    """Monotone gain functions of the two subsystems and the radius window on
    which the loop-gain condition is checked."""

    chi_x: Callable[[float], float]
    chi_y: Callable[[float], float]
    r0: float
    r_max: float

    def __post_init__(self):
        if not (0 < self.r0 < self.r_max):
            raise ValueError("need 0 < r0 < r_max")


@dataclass(frozen=True)
class SmallGainReport:
    passed: bool
    worst_ratio: float
    worst_r: float
    n_samples: int


def isps_smallgain_check(pair: IspsGainPair, grid_density: int = 256) -> SmallGainReport:
    """Check chi_x(chi_y(r)) <= r on a grid over (r0, r_max]; the worst ratio
    max chi_x(chi_y(r)) / r is reported."""
    for chi, name in ((pair.chi_x, "chi_x"), (pair.chi_y, "chi_y")):
        if abs(chi(0.0)) > 1e-12:
            raise ValueError(f"{name}(0) must be 0")
    rs = np.linspace(pair.r0, pair.r_max, grid_density + 1)[1:]
    prev_x = prev_y = -math.inf
    worst_ratio = -math.inf
    worst_r = rs[0]
    for r in rs:
        y = pair.chi_y(float(r))
        x = pair.chi_x(y)
        if y < prev_y - 1e-12 or pair.chi_x(float(r)) < prev_x - 1e-12:
            raise ValueError("gain functions must be nondecreasing")
        prev_y, prev_x = y, pair.chi_x(float(r))
        ratio = x / r
        if ratio > worst_ratio:
            worst_ratio = ratio
            worst_r = float(r)
    return SmallGainReport(
        passed=worst_ratio <= 1.0,
        worst_ratio=float(worst_ratio),
        worst_r=worst_r,
        n_samples=len(rs),
    )

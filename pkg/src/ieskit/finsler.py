"""Finsler Lyapunov candidates: evaluation and sampled inequality checks.

Grid checks can only refute an inequality, never prove it over a continuum,
so every report carries a "no violation found" note rather than a claim of
verification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ieskit.dynsys import TimeVaryingField
from ieskit.sampling import halton_box, halton_sphere

Array = np.ndarray

NO_VIOLATION_NOTE = "no violation found on the sampled set (sampling refutes, it does not prove)"


@dataclass(frozen=True)
class FinslerCandidate:
    """Candidate V(z, dz) with both partial gradients and sandwich constants.

    ``value`` must satisfy c_lower |dz|^2 <= V <= c_upper |dz|^2 on the working
    set; ``grad_state`` and ``grad_disp`` return the row vectors dV/dz and
    dV/d(dz).
    """

    dim: int
    value: Callable[[Array, Array], float]
    grad_state: Callable[[Array, Array], Array]
    grad_disp: Callable[[Array, Array], Array]
    c_lower: float
    c_upper: float

    def __post_init__(self):
        if self.c_lower <= 0 or self.c_upper <= 0:
            raise ValueError("sandwich constants must be positive")
        if self.c_lower > self.c_upper:
            raise ValueError("c_lower must not exceed c_upper")


def _fd_grad(f: Callable[[Array], float], x: Array, rel_step: float = 1e-6) -> Array:
    out = np.empty(len(x))
    for i in range(len(x)):
        h = rel_step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2.0 * h)
    return out


def generic_candidate(
    dim: int,
    value: Callable[[Array, Array], float],
    c_lower: float,
    c_upper: float,
) -> FinslerCandidate:
    """Candidate from a value function alone; gradients by central differences."""

    def grad_state(z: Array, dz: Array) -> Array:
        return _fd_grad(lambda w: value(w, dz), np.asarray(z, dtype=float))

    def grad_disp(z: Array, dz: Array) -> Array:
        return _fd_grad(lambda w: value(z, w), np.asarray(dz, dtype=float))

    return FinslerCandidate(dim, value, grad_state, grad_disp, c_lower, c_upper)


def quadratic_candidate(
    dim: int,
    metric: Callable[[Array], Array],
    c_lower: float,
    c_upper: float,
    metric_grad: Optional[Callable[[Array], Array]] = None,
) -> FinslerCandidate:
    """Quadratic-form candidate V = dz^T M(z) dz.

    ``metric_grad`` returns the (dim, dim, dim) array dM/dz_k; when omitted it
    is approximated by central differences of M.
    """

    def _dmetric(z: Array) -> Array:
        if metric_grad is not None:
            return np.asarray(metric_grad(z), dtype=float)
        out = np.empty((dim, dim, dim))
        for k in range(dim):
            h = 1e-6 * (1.0 + abs(z[k]))
            zp, zm = z.copy(), z.copy()
            zp[k] += h
            zm[k] -= h
            out[k] = (np.asarray(metric(zp)) - np.asarray(metric(zm))) / (2.0 * h)
        return out

    def value(z: Array, dz: Array) -> float:
        return float(dz @ metric(z) @ dz)

    def grad_state(z: Array, dz: Array) -> Array:
        dm = _dmetric(np.asarray(z, dtype=float))
        return np.array([float(dz @ dm[k] @ dz) for k in range(dim)])

    def grad_disp(z: Array, dz: Array) -> Array:
        return 2.0 * (np.asarray(metric(z)) @ dz)

    return FinslerCandidate(dim, value, grad_state, grad_disp, c_lower, c_upper)


def compose(a: FinslerCandidate, b: FinslerCandidate) -> FinslerCandidate:
    """Direct sum on the product space: values add, gradients concatenate."""
    na = a.dim

    def value(z: Array, dz: Array) -> float:
        return a.value(z[:na], dz[:na]) + b.value(z[na:], dz[na:])

    def grad_state(z: Array, dz: Array) -> Array:
        return np.concatenate(
            [a.grad_state(z[:na], dz[:na]), b.grad_state(z[na:], dz[na:])]
        )

    def grad_disp(z: Array, dz: Array) -> Array:
        return np.concatenate(
            [a.grad_disp(z[:na], dz[:na]), b.grad_disp(z[na:], dz[na:])]
        )

    return FinslerCandidate(
        dim=a.dim + b.dim,
        value=value,
        grad_state=grad_state,
        grad_disp=grad_disp,
        c_lower=min(a.c_lower, b.c_lower),
        c_upper=max(a.c_upper, b.c_upper),
    )


def vdot(
    candidate: FinslerCandidate,
    field: TimeVaryingField,
    t: float,
    z: Array,
    dz: Array,
) -> float:
    """Lie derivative of V along the augmented (state, displacement) system."""
    z = np.asarray(z, dtype=float)
    dz = np.asarray(dz, dtype=float)
    f = field.rhs(t, z)
    jdz = field.jacobian(t, z) @ dz
    return float(candidate.grad_state(z, dz) @ f + candidate.grad_disp(z, dz) @ jdz)


def vdot_quadratic(
    metric: Callable[[Array], Array],
    metric_grad: Callable[[Array], Array],
    field: TimeVaryingField,
    t: float,
    z: Array,
    dz: Array,
) -> float:
    """V-dot of a quadratic form via dz^T (Mdot + M J + J^T M) dz."""
    z = np.asarray(z, dtype=float)
    dz = np.asarray(dz, dtype=float)
    m = np.asarray(metric(z), dtype=float)
    dm = np.asarray(metric_grad(z), dtype=float)
    f = field.rhs(t, z)
    j = field.jacobian(t, z)
    mdot = np.tensordot(f, dm, axes=(0, 0))
    return float(dz @ (mdot + m @ j + j.T @ m) @ dz)


@dataclass(frozen=True)
class DisplacementSamples:
    """Sample set of (t, z, dz) triples used by the inequality checks."""

    zs: Array
    dzs: Array
    ts: Array

    def __len__(self) -> int:
        return len(self.zs)

    @classmethod
    def from_points(cls, zs, dzs, ts=None) -> "DisplacementSamples":
        zs = np.atleast_2d(np.asarray(zs, dtype=float))
        dzs = np.atleast_2d(np.asarray(dzs, dtype=float))
        if zs.shape != dzs.shape:
            raise ValueError("state and displacement samples must align")
        if ts is None:
            ts = np.zeros(len(zs))
        return cls(zs=zs, dzs=dzs, ts=np.asarray(ts, dtype=float))

    @classmethod
    def product_box(
        cls, bounds, n_states: int, n_directions: int
    ) -> "DisplacementSamples":
        """Halton states in a box crossed with unit-sphere displacement directions.

        Displacements are sampled on the unit sphere only: for quadratically
        homogeneous candidates radial sampling adds no information.
        """
        bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        dim = bounds.shape[0]
        zs = halton_box(bounds, n_states)
        dirs = halton_sphere(dim, n_directions)
        zz = np.repeat(zs, n_directions, axis=0)
        dd = np.tile(dirs, (n_states, 1))
        return cls(zs=zz, dzs=dd, ts=np.zeros(len(zz)))

    @classmethod
    def product_ball(
        cls, radius: float, dim: int, n_states: int, n_directions: int
    ) -> "DisplacementSamples":
        bounds = np.array([[-radius, radius]] * dim)
        samples = cls.product_box(bounds, int(np.ceil(n_states * 1.6)), n_directions)
        keep = np.linalg.norm(samples.zs, axis=1) <= radius
        return cls(zs=samples.zs[keep], dzs=samples.dzs[keep], ts=samples.ts[keep])


def _slack(tol: float, value: float) -> float:
    return tol * (1.0 + abs(value))


@dataclass(frozen=True)
class SandwichReport:
    passed: bool
    lower_margin: float
    upper_margin: float
    worst_lower_index: int
    worst_upper_index: int
    n_samples: int
    note: str = NO_VIOLATION_NOTE


def check_sandwich(
    candidate: FinslerCandidate, samples: DisplacementSamples, tol: float = 1e-9
) -> SandwichReport:
    """Margins of c_lower |dz|^2 <= V <= c_upper |dz|^2 over the sample set."""
    if len(samples) == 0:
        raise ValueError("sample set must be nonempty")
    lower = np.empty(len(samples))
    upper = np.empty(len(samples))
    for i in range(len(samples)):
        z, dz = samples.zs[i], samples.dzs[i]
        q = float(dz @ dz)
        if q == 0.0:
            raise ValueError("sandwich samples require nonzero displacement")
        v = candidate.value(z, dz)
        lower[i] = v - candidate.c_lower * q
        upper[i] = candidate.c_upper * q - v
    i_lo = int(np.argmin(lower))
    i_up = int(np.argmin(upper))
    passed = lower[i_lo] >= -tol and upper[i_up] >= -tol
    note = NO_VIOLATION_NOTE if passed else (
        f"sandwich violated at sample {i_lo if lower[i_lo] < upper[i_up] else i_up}"
    )
    return SandwichReport(
        passed=passed,
        lower_margin=float(lower[i_lo]),
        upper_margin=float(upper[i_up]),
        worst_lower_index=i_lo,
        worst_upper_index=i_up,
        n_samples=len(samples),
        note=note,
    )


@dataclass(frozen=True)
class DecayReport:
    passed: bool
    worst: float
    worst_index: int
    worst_t: float
    worst_z: Array
    worst_dz: Array
    n_samples: int
    alpha: float
    comparator: str
    note: str = NO_VIOLATION_NOTE


def check_decay(
    candidate: FinslerCandidate,
    field: TimeVaryingField,
    alpha: float,
    samples: DisplacementSamples,
    tol: float = 1e-9,
    comparator: str = "candidate",
) -> DecayReport:
    """Check Vdot <= -alpha * V ("candidate") or Vdot <= -alpha |dz|^2
    ("squared_norm") over the sample set.

    The worst violation is Vdot plus the compared quantity; a negative worst
    value means every sampled point has margin.
    """
    if len(samples) == 0:
        raise ValueError("sample set must be nonempty")
    if comparator not in ("candidate", "squared_norm"):
        raise ValueError(f"unknown comparator {comparator!r}")
    worst = -np.inf
    worst_i = 0
    for i in range(len(samples)):
        t, z, dz = samples.ts[i], samples.zs[i], samples.dzs[i]
        v = candidate.value(z, dz)
        vd = vdot(candidate, field, t, z, dz)
        compared = v if comparator == "candidate" else float(dz @ dz)
        violation = vd + alpha * compared - _slack(tol, v)
        if violation > worst:
            worst = violation
            worst_i = i
    passed = worst <= 0.0
    note = NO_VIOLATION_NOTE if passed else f"decay violated at sample {worst_i}"
    return DecayReport(
        passed=passed,
        worst=float(worst),
        worst_index=worst_i,
        worst_t=float(samples.ts[worst_i]),
        worst_z=samples.zs[worst_i].copy(),
        worst_dz=samples.dzs[worst_i].copy(),
        n_samples=len(samples),
        alpha=alpha,
        comparator=comparator,
        note=note,
    )


@dataclass(frozen=True)
class AssumptionTwoBounds:
    """Continuous bounds |dV/dz| <= gamma(z)|dz|^2 and |dV/d(dz)| <= zeta(z)|dz|."""

    gamma: Callable[[Array], float]
    zeta: Callable[[Array], float]


@dataclass(frozen=True)
class GradientBoundReport:
    passed: bool
    state_margin: float
    disp_margin: float
    worst_state_index: int
    worst_disp_index: int
    n_samples: int
    note: str = NO_VIOLATION_NOTE


def verify_assumption2(
    candidate: FinslerCandidate,
    bounds: AssumptionTwoBounds,
    samples: DisplacementSamples,
    tol: float = 1e-9,
) -> GradientBoundReport:
    """Check both gradient inequalities at every sample within tolerance."""
    if len(samples) == 0:
        raise ValueError("sample set must be nonempty")
    state_m = np.empty(len(samples))
    disp_m = np.empty(len(samples))
    for i in range(len(samples)):
        z, dz = samples.zs[i], samples.dzs[i]
        q = float(dz @ dz)
        gs = np.linalg.norm(candidate.grad_state(z, dz))
        gd = np.linalg.norm(candidate.grad_disp(z, dz))
        state_m[i] = bounds.gamma(z) * q - gs
        disp_m[i] = bounds.zeta(z) * np.sqrt(q) - gd
    i_s = int(np.argmin(state_m))
    i_d = int(np.argmin(disp_m))
    passed = state_m[i_s] >= -tol and disp_m[i_d] >= -tol
    note = NO_VIOLATION_NOTE if passed else (
        f"gradient bound violated at sample {i_s if state_m[i_s] < disp_m[i_d] else i_d}"
    )
    return GradientBoundReport(
        passed=passed,
        state_margin=float(state_m[i_s]),
        disp_margin=float(disp_m[i_d]),
        worst_state_index=i_s,
        worst_disp_index=i_d,
        n_samples=len(samples),
        note=note,
    )

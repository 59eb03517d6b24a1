"""Vector fields, two-block interconnections, and trajectory integration.

The state and its displacement (variational) dynamics are integrated jointly
as one augmented system, so the Jacobian is always evaluated on the exact
integrator iterates rather than on re-interpolated states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Array = np.ndarray
RhsFn = Callable[[float, Array], Array]
JacFn = Callable[[float, Array], Array]

FIXED_RK4 = "fixed_rk4"
ADAPTIVE_EMBEDDED = "adaptive_embedded"


class DimensionMismatchError(ValueError):
    """Block dimensions of an interconnection are inconsistent."""


@dataclass(frozen=True)
class TimeVaryingField:
    """A vector field f(t, z) together with its state Jacobian.

    ``rhs`` maps (t, z) to dz/dt for any finite state; ``jacobian`` maps
    (t, z) to the dim x dim matrix of partials in z.  ``lipschitz_hint``
    records a known global Lipschitz constant when one is available.
    """

    dim: int
    rhs: RhsFn
    jacobian: JacFn
    lipschitz_hint: Optional[float] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"field dimension must be positive, got {self.dim}")
        if self.lipschitz_hint is not None and self.lipschitz_hint < 0:
            raise ValueError("lipschitz_hint must be nonnegative")


def fd_jacobian(rhs: RhsFn, dim: int, rel_step: float = 1e-6) -> JacFn:
    """Central-difference Jacobian of ``rhs`` with step rel_step*(1+|z_i|)."""

    def jac(t: float, z: Array) -> Array:
        z = np.asarray(z, dtype=float)
        out = np.empty((dim, dim))
        for i in range(dim):
            h = rel_step * (1.0 + abs(z[i]))
            zp = z.copy()
            zm = z.copy()
            zp[i] += h
            zm[i] -= h
            out[:, i] = (rhs(t, zp) - rhs(t, zm)) / (2.0 * h)
        return out

    return jac


def linear_field(a: Array) -> TimeVaryingField:
    """The field dz/dt = A z."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    dim = a.shape[0]
    if a.shape != (dim, dim):
        raise ValueError(f"A must be square, got shape {a.shape}")
    lip = float(np.linalg.norm(a, 2))
    return TimeVaryingField(
        dim=dim,
        rhs=lambda t, z: a @ z,
        jacobian=lambda t, z: a.copy(),
        lipschitz_hint=lip,
    )


@dataclass(frozen=True)
class CouplingMap:
    """Autonomous coupling g: R^in_dim -> R^out_dim with its Jacobian."""

    in_dim: int
    out_dim: int
    value: Callable[[Array], Array]
    jacobian: Callable[[Array], Array]


def linear_coupling(matrix: Array) -> CouplingMap:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    return CouplingMap(
        in_dim=m.shape[1],
        out_dim=m.shape[0],
        value=lambda v: m @ v,
        jacobian=lambda v: m.copy(),
    )


@dataclass(frozen=True)
class Interconnection:
    """Two-block coupled system (f1(t,x) + rho1 g1(y), f2(t,y) + rho2 g2(x))."""

    f1: TimeVaryingField
    f2: TimeVaryingField
    g1: CouplingMap
    g2: CouplingMap
    rho1: float
    rho2: float

    def __post_init__(self):
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValueError("coupling gains must be nonnegative")

    @property
    def n(self) -> int:
        return self.f1.dim

    @property
    def m(self) -> int:
        return self.f2.dim

    def with_gains(self, rho1: float, rho2: float) -> "Interconnection":
        return Interconnection(self.f1, self.f2, self.g1, self.g2, rho1, rho2)


def assemble(ic: Interconnection) -> TimeVaryingField:
    """Assembled (n+m)-dimensional field with block-structured Jacobian."""
    n, m = ic.n, ic.m
    if ic.g1.in_dim != m or ic.g1.out_dim != n:
        raise DimensionMismatchError(
            f"coupling g1 must map R^{m} -> R^{n}, "
            f"got R^{ic.g1.in_dim} -> R^{ic.g1.out_dim}"
        )
    if ic.g2.in_dim != n or ic.g2.out_dim != m:
        raise DimensionMismatchError(
            f"coupling g2 must map R^{n} -> R^{m}, "
            f"got R^{ic.g2.in_dim} -> R^{ic.g2.out_dim}"
        )
    rho1, rho2 = ic.rho1, ic.rho2
    f1, f2, g1, g2 = ic.f1, ic.f2, ic.g1, ic.g2

    def rhs(t: float, z: Array) -> Array:
        x, y = z[:n], z[n:]
        out = np.empty(n + m)
        out[:n] = f1.rhs(t, x) + rho1 * g1.value(y)
        out[n:] = f2.rhs(t, y) + rho2 * g2.value(x)
        return out

    def jacobian(t: float, z: Array) -> Array:
        x, y = z[:n], z[n:]
        jac = np.zeros((n + m, n + m))
        jac[:n, :n] = f1.jacobian(t, x)
        jac[n:, n:] = f2.jacobian(t, y)
        if rho1 != 0.0:
            jac[:n, n:] = rho1 * g1.jacobian(y)
        if rho2 != 0.0:
            jac[n:, :n] = rho2 * g2.jacobian(x)
        return jac

    return TimeVaryingField(dim=n + m, rhs=rhs, jacobian=jacobian)


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration settings.  ``max_time`` is the horizon measured from t0."""

    max_time: float
    method: str = FIXED_RK4
    step: float = 1e-2
    atol: float = 1e-9
    rtol: float = 1e-6
    dense_output: bool = True

    def __post_init__(self):
        if self.max_time <= 0:
            raise ValueError("max_time must be positive")
        if self.method not in (FIXED_RK4, ADAPTIVE_EMBEDDED):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == FIXED_RK4:
            if self.step <= 0:
                raise ValueError("fixed step must be positive")
            if self.step > self.max_time / 2:
                raise ValueError("fixed step must divide the horizon into >= 2 steps")
        else:
            if self.atol <= 0 or self.rtol <= 0:
                raise ValueError("adaptive tolerances must be strictly positive")


@dataclass
class Trajectory:
    """Sampled solution with optional displacement samples.

    ``derivatives`` holds the right-hand side at the sample nodes, which makes
    cubic Hermite interpolation between nodes free of extra field calls.
    Interpolation at the stored nodes reproduces the samples exactly.
    """

    t0: float
    times: Array
    states: Array
    derivatives: Array
    step: float
    displacements: Optional[Array] = None
    displacement_derivatives: Optional[Array] = None
    blew_up: bool = False

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def state_at(self, t) -> Array:
        return _hermite_eval(self.times, self.states, self.derivatives, t)

    def displacement_at(self, t) -> Array:
        if self.displacements is None:
            raise ValueError("trajectory carries no displacement samples")
        return _hermite_eval(
            self.times, self.displacements, self.displacement_derivatives, t
        )


def _hermite_eval(times: Array, values: Array, derivs: Array, t) -> Array:
    """Piecewise-cubic Hermite interpolation; exact at the sample nodes."""
    tq = np.atleast_1d(np.asarray(t, dtype=float))
    if len(times) == 1:
        out = np.tile(values[0], (len(tq), 1))
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return out[0]
        return out
    idx = np.searchsorted(times, tq, side="right") - 1
    idx = np.clip(idx, 0, len(times) - 2)
    t0 = times[idx]
    h = times[idx + 1] - t0
    s = ((tq - t0) / h)[:, None]
    y0, y1 = values[idx], values[idx + 1]
    d0, d1 = derivs[idx] * h[:, None], derivs[idx + 1] * h[:, None]
    s2, s3 = s * s, s * s * s
    out = (
        (2 * s3 - 3 * s2 + 1) * y0
        + (s3 - 2 * s2 + s) * d0
        + (-2 * s3 + 3 * s2) * y1
        + (s3 - s2) * d1
    )
    # exact reproduction of stored samples at the nodes
    exact = s[:, 0] == 0.0
    if np.any(exact):
        out[exact] = y0[exact]
    right = tq == times[idx + 1]
    if np.any(right):
        out[right] = y1[right]
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return out[0]
    return out


def _rk4_path(rhs: RhsFn, t0: float, z0: Array, horizon: float, step: float):
    n_steps = max(2, math.ceil(horizon / step - 1e-12))
    h = horizon / n_steps
    dim = len(z0)
    times = t0 + h * np.arange(n_steps + 1)
    times[-1] = t0 + horizon
    states = np.empty((n_steps + 1, dim))
    derivs = np.empty_like(states)
    states[0] = z0
    blew_up = False
    with np.errstate(over="ignore", invalid="ignore"):
        derivs[0] = rhs(t0, z0)
        if not np.all(np.isfinite(derivs[0])):
            return times[:1], states[:1], derivs[:1] * 0.0, True
        for i in range(n_steps):
            t, y = times[i], states[i]
            k1 = derivs[i]
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
            y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y_next)):
                blew_up = True
                return times[: i + 1], states[: i + 1], derivs[: i + 1], blew_up
            states[i + 1] = y_next
            d_next = rhs(times[i + 1], y_next)
            if not np.all(np.isfinite(d_next)):
                blew_up = True
                return times[: i + 2], states[: i + 2], np.vstack(
                    [derivs[: i + 1], np.zeros((1, dim))]
                ), blew_up
            derivs[i + 1] = d_next
    return times, states, derivs, blew_up


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _dopri_path(rhs: RhsFn, t0: float, z0: Array, horizon: float, atol: float, rtol: float):
    dim = len(z0)
    t_end = t0 + horizon
    max_step = horizon / 2.0
    ts = [t0]
    ys = [np.asarray(z0, dtype=float)]
    with np.errstate(over="ignore", invalid="ignore"):
        f0 = rhs(t0, ys[0])
        if not np.all(np.isfinite(f0)):
            return np.array(ts), np.array(ys), np.zeros((1, dim)), True
        fs = [f0]
        t, y, f_cur = t0, ys[0], f0
        h = min(max_step, horizon / 100.0)
        blew_up = False
        while t < t_end - 1e-12 * horizon:
            h = min(h, t_end - t)
            k = np.empty((7, dim))
            k[0] = f_cur
            bad = False
            for i in range(1, 7):
                yi = y + h * (_DP_A[i] @ k[:i])
                k[i] = rhs(t + _DP_C[i] * h, yi)
                if not np.all(np.isfinite(k[i])):
                    bad = True
                    break
            if bad:
                h *= 0.5
                if h < 1e-14 * horizon:
                    blew_up = True
                    break
                continue
            y5 = y + h * (_DP_B5 @ k)
            y4 = y + h * (_DP_B4 @ k)
            if not np.all(np.isfinite(y5)):
                h *= 0.5
                if h < 1e-14 * horizon:
                    blew_up = True
                    break
                continue
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
            err = float(np.sqrt(np.mean(((y5 - y4) / scale) ** 2)))
            if err <= 1.0:
                t = t + h
                y = y5
                f_cur = k[6]  # FSAL
                ts.append(t)
                ys.append(y)
                fs.append(f_cur)
                factor = 0.9 * (err + 1e-16) ** -0.2
                h = min(max_step, h * min(5.0, max(0.2, factor)))
            else:
                h = h * max(0.2, 0.9 * err**-0.25)
                if h < 1e-14 * horizon:
                    blew_up = True
                    break
    return np.array(ts), np.array(ys), np.array(fs), blew_up


def integrate(
    field: TimeVaryingField, t0: float, z0, config: IntegratorConfig
) -> Trajectory:
    """Integrate dz/dt = f(t, z) from z0 over [t0, t0 + max_time].

    On numerical blow-up (non-finite values) the partial trajectory is
    returned with ``blew_up`` set.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (field.dim,):
        raise ValueError(f"z0 must have shape ({field.dim},), got {z0.shape}")
    if config.method == FIXED_RK4:
        times, states, derivs, blew = _rk4_path(
            field.rhs, t0, z0, config.max_time, config.step
        )
    else:
        times, states, derivs, blew = _dopri_path(
            field.rhs, t0, z0, config.max_time, config.atol, config.rtol
        )
    return Trajectory(
        t0=t0, times=times, states=states, derivatives=derivs, step=config.step,
        blew_up=blew,
    )


def integrate_with_displacement(
    field: TimeVaryingField, t0: float, z0, d0, config: IntegratorConfig
) -> Trajectory:
    """Jointly integrate the state and its displacement d(dz)/dt = J_f dz."""
    z0 = np.asarray(z0, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    if z0.shape != (field.dim,) or d0.shape != (field.dim,):
        raise ValueError(
            f"z0 and d0 must have shape ({field.dim},), got {z0.shape} and {d0.shape}"
        )
    dim = field.dim

    def aug_rhs(t: float, u: Array) -> Array:
        z, dz = u[:dim], u[dim:]
        out = np.empty(2 * dim)
        out[:dim] = field.rhs(t, z)
        out[dim:] = field.jacobian(t, z) @ dz
        return out

    u0 = np.concatenate([z0, d0])
    if config.method == FIXED_RK4:
        times, states, derivs, blew = _rk4_path(
            aug_rhs, t0, u0, config.max_time, config.step
        )
    else:
        times, states, derivs, blew = _dopri_path(
            aug_rhs, t0, u0, config.max_time, config.atol, config.rtol
        )
    return Trajectory(
        t0=t0,
        times=times,
        states=states[:, :dim],
        derivatives=derivs[:, :dim],
        step=config.step,
        displacements=states[:, dim:],
        displacement_derivatives=derivs[:, dim:],
        blew_up=blew,
    )


@dataclass
class DistanceSeries:
    """Euclidean distance between two flows sampled on a shared time grid."""

    times: Array
    values: Array
    blew_up: bool = False


def flow_difference(
    field: TimeVaryingField, t0: float, z1, z2, config: IntegratorConfig
) -> DistanceSeries:
    """Distance series t -> |phi(t, z1) - phi(t, z2)| on a shared grid."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != z2.shape:
        raise ValueError("z1 and z2 must have the same dimension")
    tr1 = integrate(field, t0, z1, config)
    tr2 = integrate(field, t0, z2, config)
    blew = tr1.blew_up or tr2.blew_up
    if config.method == FIXED_RK4 and not blew:
        times = tr1.times
        dist = np.linalg.norm(tr1.states - tr2.states, axis=1)
        return DistanceSeries(times=times, values=dist, blew_up=False)
    t_end = min(tr1.t_end, tr2.t_end)
    n = max(2, math.ceil((t_end - t0) / config.step))
    times = np.linspace(t0, t_end, n + 1)
    s1 = tr1.state_at(times)
    s2 = tr2.state_at(times)
    dist = np.linalg.norm(s1 - s2, axis=1)
    return DistanceSeries(times=times, values=dist, blew_up=blew)

"""Empirical contraction envelopes fitted from trajectory-pair ensembles.

The fit is a least-squares line through log d(t) on the post-transient window;
samples that have already fallen to the integrator noise floor are excluded so
a strongly contracting run is not misread as flat noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ieskit.dynsys import DistanceSeries, IntegratorConfig, TimeVaryingField, flow_difference
from ieskit.io_utils import atomic_write_text, fnum

Array = np.ndarray

CONTRACTING = "contracting"
NON_CONTRACTING = "non_contracting"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class EnvelopeConfig:
    """Fit and verdict thresholds.

    ``late_floor`` separates the non-contracting regime (late-window mean of
    d above late_floor * d(t0)); ``floor_ratio`` drops samples below
    floor_ratio * d(t0) from the fit window.
    """

    transient_skip: float = 0.2
    lambda_min: float = 1e-3
    residual_max: float = 0.5
    late_floor: float = 0.05
    late_fraction: float = 0.2
    floor_ratio: float = 1e-10
    min_points: int = 8


@dataclass(frozen=True)
class EnvelopeFit:
    """Envelope d(t) <= K exp(-lam (t - t0)) d(t0) fitted on ``window``."""

    K: float
    lam: float
    window: tuple[float, float]
    residual: float
    verdict: str

    def envelope(self, t0: float, d0: float, ts) -> Array:
        ts = np.asarray(ts, dtype=float)
        return self.K * d0 * np.exp(-self.lam * (ts - t0))


def fit_envelope(
    times,
    distances,
    transient_skip: Optional[float] = None,
    config: EnvelopeConfig = EnvelopeConfig(),
) -> EnvelopeFit:
    """Fit the exponential envelope of a distance series.

    lam is minus the least-squares slope of log d on the post-transient
    window; K is the smallest prefactor making the envelope dominate every
    sample in that window, clamped to at least 1.
    """
    times = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    if len(times) != len(d) or len(times) < 2:
        raise ValueError("times and distances must align with length >= 2")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance series contains non-finite values")
    d0 = float(d[0])
    if d0 <= 0.0:
        raise ValueError("initial distance must be positive")
    skip = config.transient_skip if transient_skip is None else transient_skip
    t0, t_end = float(times[0]), float(times[-1])
    t_lo = t0 + skip * (t_end - t0)

    floor = config.floor_ratio * d0
    window_mask = (times >= t_lo) & (d > floor)
    if np.count_nonzero(window_mask) < config.min_points:
        window_mask = d > floor
    if np.count_nonzero(window_mask) < 2:
        return EnvelopeFit(K=1.0, lam=0.0, window=(t0, t0), residual=math.inf,
                           verdict=INCONCLUSIVE)

    tw = times[window_mask]
    logd = np.log(d[window_mask])
    slope, intercept = np.polyfit(tw, logd, 1)
    lam = -float(slope)
    fitted = slope * tw + intercept
    residual = float(np.sqrt(np.mean((logd - fitted) ** 2)))
    k = float(np.exp(np.max(logd + lam * (tw - t0) - math.log(d0))))
    k = max(k, 1.0)

    n_late = max(1, int(math.ceil(config.late_fraction * len(times))))
    late_mean = float(np.mean(d[-n_late:]))

    if lam > config.lambda_min and residual < config.residual_max:
        verdict = CONTRACTING
    elif late_mean > config.late_floor * d0:
        verdict = NON_CONTRACTING
    else:
        verdict = INCONCLUSIVE
    return EnvelopeFit(
        K=k,
        lam=lam,
        window=(float(tw[0]), float(tw[-1])),
        residual=residual,
        verdict=verdict,
    )


def sample_pairs_box(bounds, n_pairs: int, seed: int, min_separation: float = 1e-6):
    """n seeded random initial-condition pairs inside a box, separated by at
    least ``min_separation``."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < n_pairs:
        z1 = rng.uniform(bounds[:, 0], bounds[:, 1])
        z2 = rng.uniform(bounds[:, 0], bounds[:, 1])
        if np.linalg.norm(z1 - z2) >= min_separation:
            pairs.append((z1, z2))
    return pairs


def sample_pairs_ball(radius: float, dim: int, n_pairs: int, seed: int,
                      min_separation: float = 1e-6):
    """n seeded random pairs with both endpoints inside the ball |z| <= radius."""
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < n_pairs:
        pts = []
        while len(pts) < 2:
            cand = rng.uniform(-radius, radius, size=dim)
            if np.linalg.norm(cand) <= radius:
                pts.append(cand)
        if np.linalg.norm(pts[0] - pts[1]) >= min_separation:
            pairs.append((pts[0], pts[1]))
    return pairs


@dataclass(frozen=True)
class PairResult:
    pair_id: int
    z1: Array
    z2: Array
    series: DistanceSeries
    fit: Optional[EnvelopeFit]
    blew_up: bool


@dataclass(frozen=True)
class EnsembleReport:
    """Per-pair fits plus the aggregate: pass iff every verdict is
    contracting; any blown-up pair makes the aggregate inconclusive."""

    results: tuple[PairResult, ...]
    min_lambda: float
    max_gain: float
    passed: bool
    inconclusive: bool

    @property
    def verdicts(self) -> list[str]:
        return [r.fit.verdict if r.fit is not None else INCONCLUSIVE
                for r in self.results]


def ensemble_ies(
    field: TimeVaryingField,
    pairs: Iterable[tuple[Array, Array]],
    horizon: float,
    config: IntegratorConfig,
    envelope: EnvelopeConfig = EnvelopeConfig(),
    t0: float = 0.0,
) -> EnsembleReport:
    if abs(config.max_time - horizon) > 1e-12:
        config = IntegratorConfig(
            max_time=horizon, method=config.method, step=config.step,
            atol=config.atol, rtol=config.rtol, dense_output=config.dense_output,
        )
    results = []
    for i, (z1, z2) in enumerate(pairs):
        series = flow_difference(field, t0, z1, z2, config)
        if series.blew_up:
            results.append(PairResult(i, np.asarray(z1), np.asarray(z2), series,
                                      None, True))
            continue
        fit = fit_envelope(series.times, series.values, config=envelope)
        results.append(PairResult(i, np.asarray(z1), np.asarray(z2), series, fit,
                                  False))
    fits = [r.fit for r in results if r.fit is not None]
    any_blowup = any(r.blew_up for r in results)
    min_lambda = min((f.lam for f in fits), default=math.nan)
    max_gain = max((f.K for f in fits), default=math.nan)
    all_contracting = bool(fits) and all(f.verdict == CONTRACTING for f in fits)
    return EnsembleReport(
        results=tuple(results),
        min_lambda=min_lambda,
        max_gain=max_gain,
        passed=all_contracting and not any_blowup,
        inconclusive=any_blowup,
    )


@dataclass(frozen=True)
class WiesEnsembleReport:
    """Per-radius envelope fits: ``lambda_floor`` is the infimum of the fitted
    rates and ``gain_profile`` the per-radius maximum prefactor, reported
    as-is (no monotone envelope is selected)."""

    radii: tuple[float, ...]
    per_radius: tuple[EnsembleReport, ...]
    lambda_floor: float
    gain_profile: tuple[float, ...]


def wies_scan(
    field: TimeVaryingField,
    radii: Sequence[float],
    pairs_per_radius: int,
    horizon: float,
    config: IntegratorConfig,
    seed: int = 0,
    envelope: EnvelopeConfig = EnvelopeConfig(),
) -> WiesEnsembleReport:
    """Fit envelopes for pair ensembles sampled at increasing initial radii."""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    reports = []
    for k, radius in enumerate(radii):
        pairs = sample_pairs_ball(radius, field.dim, pairs_per_radius, seed + k)
        reports.append(ensemble_ies(field, pairs, horizon, config, envelope))
    lambdas = [r.min_lambda for r in reports if not math.isnan(r.min_lambda)]
    return WiesEnsembleReport(
        radii=tuple(radii),
        per_radius=tuple(reports),
        lambda_floor=min(lambdas) if lambdas else math.nan,
        gain_profile=tuple(r.max_gain for r in reports),
    )


def write_distance_csv(path, results: Sequence[PairResult]) -> None:
    """CSV with columns (pair_id, t, distance)."""
    lines = ["pair_id,t,distance"]
    for r in results:
        for t, d in zip(r.series.times, r.series.values):
            lines.append(f"{r.pair_id},{fnum(t)},{fnum(d)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary_csv(path, results: Sequence[PairResult]) -> None:
    """CSV with columns (pair_id, K, lambda, verdict)."""
    lines = ["pair_id,K,lambda,verdict"]
    for r in results:
        if r.fit is None:
            lines.append(f"{r.pair_id},nan,nan,{INCONCLUSIVE}")
        else:
            lines.append(f"{r.pair_id},{fnum(r.fit.K)},{fnum(r.fit.lam)},{r.fit.verdict}")
    atomic_write_text(path, "\n".join(lines) + "\n")

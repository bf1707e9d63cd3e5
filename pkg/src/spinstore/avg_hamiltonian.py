"""Average-Hamiltonian terms of cycle schedules and error-scaling fits."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument
from .evolution import (
    Schedule,
    distance_to_identity,
    phase_aligned_distance,
    pulse_rotation,
)
from .spin_system import CouplingMatrix

__all__ = [
    "MagnusTerms",
    "ScalingFit",
    "RegimeWarning",
    "toggling_frame_segments",
    "zeroth_order",
    "first_order",
    "magnus_terms",
    "local_field",
    "error_scaling_probe",
    "fit_loglog_slope",
    "scaling_fit_from_points",
]

EXACT_THRESHOLD = 1e-10
FIT_FLOOR = 1e-13

METRICS = {
    "phase_aligned": phase_aligned_distance,
    "trace": distance_to_identity,
}


class RegimeWarning(UserWarning):
    """A probe point lies outside the T * omega_loc < 1 regime."""


def toggling_frame_segments(schedule: Schedule):
    """Segment list [(H_k, tau_k)] with pulses absorbed into the Hamiltonians.

    With C_k the accumulated pulse rotation before segment k the lab-frame
    propagator is C_end * prod_k exp(-i C_k^+ H_k C_k tau_k), so the
    returned Hamiltonians are C_k^+ H_k C_k.  The residual frame rotation
    C_end is not returned; cycles designed for storage have C_end = 1.
    """
    if not schedule.segments:
        raise InvalidArgument("schedule is empty")
    n = schedule.n_spins
    frame = np.eye(schedule.dim, dtype=complex)
    out = []
    for k, seg in enumerate(schedule.segments):
        for p in schedule.pulses_at(k):
            frame = pulse_rotation(n, p) @ frame
        h = frame.conj().T @ seg.hamiltonian @ frame
        out.append((0.5 * (h + h.conj().T), seg.duration))
    return out


def _period(segments):
    total = sum(t for _, t in segments)
    if not total > 0:
        raise InvalidArgument("schedule period must be positive")
    return total


def zeroth_order(schedule: Schedule) -> np.ndarray:
    """Time-weighted mean (1/T) sum_k H_k tau_k of the toggling-frame Hamiltonians."""
    segs = toggling_frame_segments(schedule)
    period = _period(segs)
    return sum(h * t for h, t in segs) / period


def first_order(schedule: Schedule) -> np.ndarray:
    """(-i / 2T) sum_{k>l} [H_k tau_k, H_l tau_l], segment 0 earliest."""
    segs = toggling_frame_segments(schedule)
    period = _period(segs)
    weighted = [h * t for h, t in segs]
    acc = np.zeros_like(weighted[0])
    # running prefix sum turns the double sum into one commutator per segment
    prefix = np.zeros_like(weighted[0])
    for a in weighted:
        acc += a @ prefix - prefix @ a
        prefix += a
    out = (-0.5j / period) * acc
    return 0.5 * (out + out.conj().T)


@dataclass(frozen=True, eq=False)
class MagnusTerms:
    h0bar: np.ndarray
    h1bar: np.ndarray


def magnus_terms(schedule: Schedule) -> MagnusTerms:
    return MagnusTerms(zeroth_order(schedule), first_order(schedule))


def local_field(couplings: CouplingMatrix) -> float:
    """sqrt((1/n) sum_i sum_{j != i} D_ij^2), the rms coupling per site."""
    n = couplings.n
    return float(np.sqrt(np.sum(couplings.values**2) / n))


def fit_loglog_slope(x: Sequence[float], y: Sequence[float], floor: float = FIT_FLOOR):
    """Least-squares slope and intercept of log y against log x.

    Points with y below ``floor`` are dropped; returns (None, None) when
    fewer than two remain.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > floor
    if keep.sum() < 2:
        return None, None
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope), float(intercept)


@dataclass
class ScalingFit:
    taus: list[float]
    periods: list[float]
    distances: list[float]
    slope: float | None
    intercept: float | None
    omega_loc: float
    metric: str = "phase_aligned"
    exact: bool = False
    regime_ok: bool = True
    regime_violations: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "omega_loc": self.omega_loc,
            "metric": self.metric,
            "exact": self.exact,
            "regime_ok": self.regime_ok,
            "max_T_omega_loc": max(self.periods) * self.omega_loc if self.periods else 0.0,
            "regime_violations": list(self.regime_violations),
        }


def error_scaling_probe(
    builder: Callable[[float], np.ndarray],
    taus: Sequence[float],
    omega_loc: float,
    period_per_tau: float = 1.0,
    metric: str = "phase_aligned",
) -> ScalingFit:
    """Sweep ``builder(tau)`` over ``taus`` and fit log(distance) vs log(tau).

    ``period_per_tau`` converts tau to the cycle period T.  The default
    metric is the phase-aligned Frobenius distance, which scales like the
    error of the stored state; ``metric="trace"`` uses
    :func:`distance_to_identity` instead (its slope is twice as large).
    """
    taus = [float(t) for t in taus]
    if len(taus) < 3:
        raise InvalidArgument("scaling probe needs at least three tau values")
    if any(t <= 0 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
        raise InvalidArgument("taus must be positive and strictly increasing")
    if taus[-1] / taus[0] < 10.0 * (1 - 1e-9):
        raise InvalidArgument("taus must span at least one decade")
    if metric not in METRICS:
        raise InvalidArgument(f"metric must be one of {sorted(METRICS)}")
    if omega_loc < 0:
        raise InvalidArgument("omega_loc must be nonnegative")
    dist = METRICS[metric]
    distances = [dist(builder(t)) for t in taus]
    return scaling_fit_from_points(taus, distances, omega_loc, period_per_tau, metric, stacklevel=3)


def scaling_fit_from_points(taus, distances, omega_loc: float, period_per_tau: float = 1.0,
                            metric: str = "phase_aligned", stacklevel: int = 2) -> ScalingFit:
    """Assemble a :class:`ScalingFit` from precomputed distances."""
    taus = [float(t) for t in taus]
    distances = [float(d) for d in distances]
    if len(taus) != len(distances):
        raise InvalidArgument("taus and distances must have equal length")
    periods = [period_per_tau * t for t in taus]
    violations = [t for t, p in zip(taus, periods) if p * omega_loc >= 1.0]
    exact = all(d < EXACT_THRESHOLD for d in distances)
    # an exact cycle has no averaging error to extrapolate, so the regime is moot
    if violations and not exact:
        warnings.warn(
            f"T * omega_loc >= 1 at tau = {violations}; the average-Hamiltonian regime does not hold",
            RegimeWarning,
            stacklevel=stacklevel,
        )
    slope, intercept = (None, None) if exact else fit_loglog_slope(taus, distances)
    return ScalingFit(
        taus=taus,
        periods=periods,
        distances=distances,
        slope=slope,
        intercept=intercept,
        omega_loc=float(omega_loc),
        metric=metric,
        exact=exact,
        regime_ok=not violations,
        regime_violations=violations,
    )

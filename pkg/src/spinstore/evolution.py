"""Exact propagation under piecewise-constant schedules with delta pulses.

Unitaries and density matrices are plain complex ndarrays.  Every unitary
produced by :func:`expm_hermitian` / :func:`compose_schedule` and every
state produced by :func:`evolve_density` is reported to the active
:func:`numerical_audit`, if any, so long runs can assert numerical hygiene
after the fact.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, InvalidSchedule, NumericalError
from .operators import PAULI, check_hermitian, n_spins_of

__all__ = [
    "ScheduleSegment",
    "PulseEvent",
    "Schedule",
    "expm_hermitian",
    "pulse_rotation",
    "compose_schedule",
    "evolve_density",
    "toggle_conjugate",
    "distance_to_identity",
    "phase_aligned_distance",
    "fidelity",
    "partial_trace",
    "reduced_state",
    "pure_density",
    "basis_density",
    "random_density",
    "check_unitary",
    "check_density",
    "numerical_audit",
    "NumericalAudit",
]


@dataclass
class NumericalAudit:
    max_unitarity_error: float = 0.0
    max_trace_error: float = 0.0
    min_eigenvalue: float = np.inf
    unitaries: int = 0
    states: int = 0

    def record_unitary(self, u):
        self.unitaries += 1
        self.max_unitarity_error = max(self.max_unitarity_error, unitarity_error(u))

    def record_state(self, rho):
        self.states += 1
        self.max_trace_error = max(self.max_trace_error, abs(np.trace(rho).real - 1.0))
        self.min_eigenvalue = min(self.min_eigenvalue, float(np.linalg.eigvalsh(_herm(rho)).min()))


_AUDIT: contextvars.ContextVar[NumericalAudit | None] = contextvars.ContextVar("spinstore_audit", default=None)


@contextlib.contextmanager
def numerical_audit():
    """Collect unitarity / trace / positivity extremes of everything produced inside."""
    audit = NumericalAudit()
    token = _AUDIT.set(audit)
    try:
        yield audit
    finally:
        _AUDIT.reset(token)


def _herm(m):
    return 0.5 * (m + m.conj().T)


def unitarity_error(u: np.ndarray) -> float:
    return float(np.abs(u @ u.conj().T - np.eye(u.shape[0])).max())


def check_unitary(u: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    err = unitarity_error(u)
    if err > atol:
        raise NumericalError(f"matrix is not unitary (max |UU^+ - I| = {err:.3e})")
    return u


def check_density(rho: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    check_hermitian(rho, atol=atol, what="density matrix")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > atol:
        raise InvalidArgument(f"density matrix trace is {tr!r}, expected 1")
    lo = np.linalg.eigvalsh(_herm(rho)).min()
    if lo < -atol:
        raise InvalidArgument(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def _report_unitary(u):
    audit = _AUDIT.get()
    if audit is not None:
        audit.record_unitary(u)
    return u


def _report_state(rho):
    audit = _AUDIT.get()
    if audit is not None:
        audit.record_state(rho)
    return rho


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i h t) by spectral decomposition of the Hermitian ``h``."""
    try:
        check_hermitian(h)
    except InvalidArgument as exc:
        raise NumericalError(str(exc)) from exc
    if t == 0:
        return _report_unitary(np.eye(h.shape[0], dtype=complex))
    w, v = np.linalg.eigh(_herm(h))
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    return _report_unitary(u)


@dataclass(frozen=True, eq=False)
class ScheduleSegment:
    hamiltonian: np.ndarray
    duration: float

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration >= 0):
            raise InvalidSchedule(f"segment duration must be nonnegative, got {self.duration!r}")


@dataclass(frozen=True)
class PulseEvent:
    """Instantaneous rotation exp(-i sign angle sum_k I_axis,k) before segment ``placement``.

    ``sites`` restricts the rotation to a subset of spins (selective pulse);
    ``None`` rotates every spin.  ``placement == len(segments)`` puts the
    pulse after the last segment.
    """

    axis: str
    angle: float = np.pi / 2
    sign: int = 1
    placement: int = 0
    sites: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise InvalidArgument(f"pulse axis must be x or y, got {self.axis!r}")
        if not np.isfinite(self.angle):
            raise InvalidArgument("pulse angle must be finite")
        if self.sign not in (1, -1):
            raise InvalidArgument("pulse sign must be +1 or -1")
        if self.sites is not None:
            object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))

    def inverse(self) -> "PulseEvent":
        return PulseEvent(self.axis, self.angle, -self.sign, self.placement, self.sites)


@dataclass(frozen=True, eq=False)
class Schedule:
    segments: tuple[ScheduleSegment, ...]
    pulses: tuple[PulseEvent, ...] = field(default=())

    def __post_init__(self):
        segs = tuple(self.segments)
        pulses = tuple(self.pulses)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "pulses", pulses)
        dims = {s.hamiltonian.shape for s in segs}
        if len(dims) > 1:
            raise InvalidSchedule(f"segments disagree on dimension: {sorted(dims)}")
        for p in pulses:
            if not 0 <= p.placement <= len(segs):
                raise InvalidSchedule(f"pulse placement {p.placement} outside 0..{len(segs)}")
            if p.sites is not None and segs and max(p.sites, default=-1) >= self.n_spins:
                raise InvalidSchedule("pulse addresses a site outside the system")

    @classmethod
    def from_pairs(cls, pairs, pulses=()) -> "Schedule":
        return cls(tuple(ScheduleSegment(h, t) for h, t in pairs), tuple(pulses))

    @property
    def period(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def dim(self) -> int:
        if not self.segments:
            raise InvalidSchedule("empty schedule has no dimension")
        return self.segments[0].hamiltonian.shape[0]

    @property
    def n_spins(self) -> int:
        return n_spins_of(self.segments[0].hamiltonian)

    def pulses_at(self, placement: int):
        return [p for p in self.pulses if p.placement == placement]

    def reversed_negated(self) -> "Schedule":
        """Segments in reverse order with negated Hamiltonians, pulses inverted."""
        m = len(self.segments)
        segs = tuple(ScheduleSegment(-s.hamiltonian, s.duration) for s in reversed(self.segments))
        pulses = []
        for k in range(m, -1, -1):
            for p in reversed(self.pulses_at(k)):
                inv = p.inverse()
                pulses.append(PulseEvent(inv.axis, inv.angle, inv.sign, m - k, inv.sites))
        return Schedule(segs, tuple(pulses))

    def __len__(self):
        return len(self.segments)


def pulse_rotation(n_spins: int, pulse: PulseEvent) -> np.ndarray:
    """Product of single-spin rotations exp(-i sign angle sigma/2) on the addressed sites."""
    theta = pulse.sign * pulse.angle
    one = np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * PAULI[pulse.axis]
    sites = set(range(n_spins) if pulse.sites is None else pulse.sites)
    out = np.ones((1, 1), dtype=complex)
    for k in range(n_spins):
        out = np.kron(out, one if k in sites else np.eye(2))
    return out


def compose_schedule(schedule: Schedule) -> np.ndarray:
    """Chronological product of segment exponentials and pulses, earliest rightmost."""
    if not schedule.segments:
        raise InvalidSchedule("cannot compose an empty schedule")
    n = schedule.n_spins
    u = np.eye(schedule.dim, dtype=complex)
    for k in range(len(schedule.segments) + 1):
        for p in schedule.pulses_at(k):
            u = pulse_rotation(n, p) @ u
        if k < len(schedule.segments):
            seg = schedule.segments[k]
            u = expm_hermitian(seg.hamiltonian, seg.duration) @ u
    return _report_unitary(u)


def evolve_density(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    if rho.shape != u.shape:
        raise InvalidArgument(f"dimension mismatch: state {rho.shape}, unitary {u.shape}")
    out = u @ rho @ u.conj().T
    return _report_state(_herm(out))


def toggle_conjugate(h: np.ndarray, pulse: PulseEvent) -> np.ndarray:
    """R h R^+ for the pulse rotation R."""
    r = pulse_rotation(n_spins_of(h), pulse)
    return _herm(r @ h @ r.conj().T)


def distance_to_identity(u: np.ndarray) -> float:
    """1 - |Tr U| / dim: zero exactly for multiples of the identity."""
    d = 1.0 - abs(np.trace(u)) / u.shape[0]
    return float(min(max(d, 0.0), 1.0))


def phase_aligned_distance(u: np.ndarray) -> float:
    """min_phi ||U - e^{i phi} I||_F / sqrt(dim).

    Linear in the deviation of U from a phase times the identity, unlike
    :func:`distance_to_identity` which is quadratic; evaluated directly
    from the matrix difference so that near-identity values keep full
    relative precision.
    """
    tr = np.trace(u)
    phase = tr / abs(tr) if abs(tr) > 0 else 1.0
    return float(np.linalg.norm(u - phase * np.eye(u.shape[0])) / np.sqrt(u.shape[0]))


def _psd_sqrt(m):
    w, v = np.linalg.eigh(_herm(m))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, clipped to [0, 1]."""
    if rho.shape != sigma.shape:
        raise InvalidArgument(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    check_density(rho, atol=1e-8)
    check_density(sigma, atol=1e-8)
    s = _psd_sqrt(rho)
    w = np.linalg.eigvalsh(_herm(s @ sigma @ s))
    f = float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)
    return min(max(f, 0.0), 1.0)


def partial_trace(rho: np.ndarray, keep: Sequence[int], n_spins: int | None = None) -> np.ndarray:
    """Reduced density matrix on ``keep`` (site 0 = most significant qubit).

    The kept sites appear in ascending order in the result.
    """
    n = n_spins_of(rho) if n_spins is None else n_spins
    keep = sorted(set(int(k) for k in keep))
    if any(not 0 <= k < n for k in keep):
        raise InvalidArgument(f"sites {keep} out of range for {n} spins")
    trace_out = [k for k in range(n) if k not in keep]
    t = rho.reshape([2] * (2 * n))
    # axes 0..n-1 are row qubits, n..2n-1 column qubits
    for offset, k in enumerate(trace_out):
        cur = n - offset
        row_axis = k - offset
        t = np.trace(t, axis1=row_axis, axis2=row_axis + cur)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def reduced_state(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    return partial_trace(rho, keep)


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise InvalidArgument("state vector is zero")
    psi = psi / norm
    return np.outer(psi, psi.conj())


def basis_density(bits: Sequence[int]) -> np.ndarray:
    """Projector on a computational basis state; bit 0 = up, 1 = down."""
    index = 0
    for b in bits:
        if b not in (0, 1):
            raise InvalidArgument("bits must be 0 or 1")
        index = (index << 1) | b
    rho = np.zeros((2 ** len(bits),) * 2, dtype=complex)
    rho[index, index] = 1.0
    return rho


def random_density(n_spins: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state of the given rank (full rank by default)."""
    d = 2**n_spins
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real

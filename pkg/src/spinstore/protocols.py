"""Identity-cycle storage schemes and the bipartite freeze/transfer/switch runs.

Three cycles return a spin system to its initial state:

``chain_reversal``
    evolve under H for 2 tau then under -2H for tau (a chain rotated from
    perpendicular to parallel field orientation); exact.
``planar_three_orientation``
    evolve for tau under each of the three field orientations whose
    couplings sum to zero; exact to zeroth order in T * omega_loc.
``pulse_sequence``
    five free-evolution windows (tau, tau, 2 tau, tau, tau) separated by
    pi/2 pulses so that the toggling-frame Hamiltonian runs through
    H_dz, H_dy, H_dx, H_dy, H_dz; H_dx + H_dy + H_dz = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .avg_hamiltonian import local_field
from .errors import InvalidArgument, InvalidProtocol
from .evolution import (
    PulseEvent,
    Schedule,
    compose_schedule,
    distance_to_identity,
    evolve_density,
    expm_hermitian,
    fidelity,
    partial_trace,
    phase_aligned_distance,
    pure_density,
)
from .operators import (
    Partition,
    dipolar_hamiltonian,
    mirror_permutation,
    partition_hamiltonian,
    pst_chain_couplings,
    pst_chain_hamiltonian,
    pst_transfer_time,
    single_spin_op,
)
from .spin_system import (
    CouplingMatrix,
    FieldOrientation,
    Geometry,
    build_chain,
    dipolar_couplings,
    nearest_neighbor_couplings,
    three_orientation_couplings,
)

__all__ = [
    "SCHEMES",
    "PULSE_MODELS",
    "ReversalScheme",
    "StorageReport",
    "TransferPlan",
    "ImpuritySwitch",
    "ImpurityReport",
    "chain_reversal_schedule",
    "chain_reversal_unitary",
    "planar_reversal_schedule",
    "planar_reversal_unitary",
    "pulse_storage_schedule",
    "pulse_storage_unitary",
    "storage_schedule",
    "period_per_tau",
    "ground_density",
    "run_frozen_subsystem",
    "run_transfer_and_store",
    "impurity_chain_couplings",
    "run_impurity_switch",
]

SCHEMES = ("chain_reversal", "planar_three_orientation", "pulse_sequence")
PULSE_MODELS = ("ideal_toggling", "explicit_pulses")

_PERIOD_PER_TAU = {"chain_reversal": 3.0, "planar_three_orientation": 3.0, "pulse_sequence": 6.0}

EXACT_DISTANCE = 1e-10


def period_per_tau(tag: str) -> float:
    try:
        return _PERIOD_PER_TAU[tag]
    except KeyError:
        raise InvalidProtocol(f"unknown scheme {tag!r}") from None


@dataclass(frozen=True)
class ReversalScheme:
    tag: str
    tau: float
    cycles: int = 1
    pulse_model: str = "ideal_toggling"

    def __post_init__(self):
        if self.tag not in SCHEMES:
            raise InvalidProtocol(f"unknown scheme {self.tag!r}; expected one of {SCHEMES}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InvalidArgument(f"tau must be positive, got {self.tau!r}")
        if int(self.cycles) != self.cycles or self.cycles < 0:
            raise InvalidArgument(f"cycles must be a nonnegative integer, got {self.cycles!r}")
        if self.pulse_model not in PULSE_MODELS:
            raise InvalidProtocol(f"unknown pulse model {self.pulse_model!r}")

    @property
    def period(self) -> float:
        return period_per_tau(self.tag) * self.tau


# -- single-cycle unitaries ----------------------------------------------------


def chain_reversal_schedule(couplings_perp: CouplingMatrix, tau2: float, tau1: float | None = None,
                            secular_only_for_hetero: bool = False) -> Schedule:
    """H for tau1 (= 2 tau2 by default), then -2H for tau2, H built from ``couplings_perp``.

    -2H is the Hamiltonian of the same chain with the field along its axis.
    """
    if not tau2 > 0:
        raise InvalidArgument(f"tau2 must be positive, got {tau2!r}")
    tau1 = 2.0 * tau2 if tau1 is None else tau1
    if not tau1 > 0:
        raise InvalidArgument(f"tau1 must be positive, got {tau1!r}")
    h = dipolar_hamiltonian(couplings_perp, "dz", secular_only_for_hetero)
    return Schedule.from_pairs([(h, tau1), (-2.0 * h, tau2)])


def chain_reversal_unitary(couplings_perp: CouplingMatrix, tau2: float, tau1: float | None = None) -> np.ndarray:
    return compose_schedule(chain_reversal_schedule(couplings_perp, tau2, tau1))


def _check_sum_rule(d1, d2, d3, atol=1e-12):
    total = d1.values + d2.values + d3.values
    scale = max(1.0, np.abs(d1.values).max(initial=0))
    if np.abs(total).max(initial=0) > atol * scale:
        raise InvalidProtocol("three-orientation couplings must sum to zero elementwise")


def planar_reversal_schedule(d1: CouplingMatrix, d2: CouplingMatrix, d3: CouplingMatrix, tau: float,
                             secular_only_for_hetero: bool = False) -> Schedule:
    """Chronological order H3, H2, H1 so the product reads exp(-iH1 t) exp(-iH2 t) exp(-iH3 t)."""
    if not tau > 0:
        raise InvalidArgument(f"tau must be positive, got {tau!r}")
    _check_sum_rule(d1, d2, d3)
    hs = [dipolar_hamiltonian(d, "dz", secular_only_for_hetero) for d in (d3, d2, d1)]
    return Schedule.from_pairs([(h, tau) for h in hs])


def planar_reversal_unitary(d1: CouplingMatrix, d2: CouplingMatrix, d3: CouplingMatrix, tau: float) -> np.ndarray:
    return compose_schedule(planar_reversal_schedule(d1, d2, d3, tau))


# frame rotation in effect during each of the five windows, as pulse lists
_CYCLE_WINDOWS = (1.0, 1.0, 2.0, 1.0, 1.0)
_CYCLE_PULSES = (
    (),
    (("x", 1),),
    (("x", -1), ("y", 1)),
    (("y", -1), ("x", 1)),
    (("x", -1),),
)


def pulse_storage_schedule(couplings: CouplingMatrix, tau: float, model: str = "ideal_toggling",
                           sites: Sequence[int] | None = None,
                           secular_only_for_hetero: bool = False) -> Schedule:
    """One cycle of period 6 tau.

    ``ideal_toggling`` lists the five toggling-frame Hamiltonians directly;
    ``explicit_pulses`` keeps H_dz for every window and inserts instantaneous
    (pi/2)_{+-x}, (pi/2)_{+-y} rotations (restricted to ``sites`` if given).
    The net pulse rotation over a cycle is the identity, so both models
    produce the same propagator.
    """
    if not tau > 0:
        raise InvalidArgument(f"tau must be positive, got {tau!r}")
    if model not in PULSE_MODELS:
        raise InvalidProtocol(f"unknown pulse model {model!r}")
    durations = [w * tau for w in _CYCLE_WINDOWS]
    if model == "ideal_toggling":
        h = {k: dipolar_hamiltonian(couplings, k, secular_only_for_hetero) for k in ("dz", "dy", "dx")}
        kinds = ("dz", "dy", "dx", "dy", "dz")
        return Schedule.from_pairs([(h[k], t) for k, t in zip(kinds, durations)])
    hdz = dipolar_hamiltonian(couplings, "dz", secular_only_for_hetero)
    sites = None if sites is None else tuple(sites)
    pulses = [
        PulseEvent(axis, np.pi / 2, sign, k, sites)
        for k, group in enumerate(_CYCLE_PULSES)
        for axis, sign in group
    ]
    return Schedule.from_pairs([(hdz, t) for t in durations], pulses)


def pulse_storage_unitary(couplings: CouplingMatrix, tau: float, model: str = "ideal_toggling") -> np.ndarray:
    return compose_schedule(pulse_storage_schedule(couplings, tau, model))


def storage_schedule(scheme: ReversalScheme, couplings: CouplingMatrix, geometry: Geometry | None = None,
                     sites: Sequence[int] | None = None, secular_only_for_hetero: bool = False) -> Schedule:
    """One storage cycle of ``scheme`` acting on the pairs of ``couplings``.

    ``sites`` limits the three-orientation couplings and selective pulses
    to a subsystem; the other spins see no Hamiltonian from this schedule.
    """
    if scheme.tag == "chain_reversal":
        return chain_reversal_schedule(couplings, scheme.tau, secular_only_for_hetero=secular_only_for_hetero)
    if scheme.tag == "pulse_sequence":
        return pulse_storage_schedule(couplings, scheme.tau, scheme.pulse_model, sites, secular_only_for_hetero)
    if geometry is None:
        raise InvalidProtocol("planar three-orientation storage needs the geometry of the stored spins")
    if geometry.n != couplings.n:
        raise InvalidProtocol("geometry and couplings disagree on the number of sites")
    d1, d2, d3 = three_orientation_couplings(geometry, couplings.g)
    if sites is not None:
        d1, d2, d3 = (d.restricted(sites) for d in (d1, d2, d3))
    return planar_reversal_schedule(d1, d2, d3, scheme.tau, secular_only_for_hetero)


# -- reports -------------------------------------------------------------------


@dataclass
class StorageReport:
    per_cycle_fidelity: list[float]
    per_cycle_identity_distance: list[float]
    period: float
    total_period: float
    exact_flag: bool
    reference_fidelity: float = 1.0
    extras: dict = field(default_factory=dict)
    states: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.per_cycle_fidelity) != len(self.per_cycle_identity_distance):
            raise InvalidArgument("per-cycle lists must have equal length")

    @property
    def cycles(self) -> int:
        return len(self.per_cycle_fidelity)

    @property
    def min_fidelity(self) -> float:
        return min(self.per_cycle_fidelity, default=self.reference_fidelity)


def ground_density(n_spins: int) -> np.ndarray:
    """All spins down."""
    rho = np.zeros((2**n_spins, 2**n_spins), dtype=complex)
    rho[-1, -1] = 1.0
    return rho


def _check_state(rho, n, what):
    if rho.shape != (2**n, 2**n):
        raise InvalidProtocol(f"{what} has shape {rho.shape}, expected {(2**n, 2**n)}")


def _store_cycles(rho, cycle, stored_unitary, keep, n_cycles):
    ref = partial_trace(rho, keep)
    fids, dists = [], []
    power = np.eye(stored_unitary.shape[0], dtype=complex)
    for _ in range(n_cycles):
        rho = evolve_density(rho, cycle)
        power = stored_unitary @ power
        fids.append(fidelity(ref, partial_trace(rho, keep)))
        dists.append(distance_to_identity(power))
    return rho, fids, dists


def run_frozen_subsystem(couplings: CouplingMatrix, partition: Partition, rho0: np.ndarray, t0: float,
                         scheme: ReversalScheme, n: int | None = None, geometry: Geometry | None = None,
                         resume_time: float = 0.0, secular_only_for_hetero: bool = False) -> StorageReport:
    """Evolve jointly to t0, cut H_AB, store B for ``n`` cycles while A runs
    under H_A, then reconnect and evolve jointly for ``resume_time``.

    Fidelities compare Tr_A rho(t0 + kT) with Tr_A rho(t0).
    """
    n = scheme.cycles if n is None else n
    if int(n) != n or n < 0:
        raise InvalidArgument("cycle count must be a nonnegative integer")
    if t0 < 0 or resume_time < 0:
        raise InvalidArgument("times must be nonnegative")
    partition.validate(couplings.n)
    _check_state(rho0, couplings.n, "rho0")
    if not partition.subset_b:
        raise InvalidProtocol("subsystem B is empty")
    h_a, h_b, h_ab = partition_hamiltonian(couplings, partition, "dz", secular_only_for_hetero)
    h = h_a + h_b + h_ab

    rho_t0 = evolve_density(rho0, expm_hermitian(h, t0))
    b_couplings = couplings.restricted(partition.subset_b)
    sched = storage_schedule(scheme, b_couplings, geometry, partition.subset_b, secular_only_for_hetero)
    period = sched.period
    v_b = compose_schedule(sched)
    cycle = expm_hermitian(h_a, period) @ v_b

    rho_end, fids, dists = _store_cycles(rho_t0, cycle, v_b, partition.subset_b, int(n))
    a = partition.subset_a
    extras = {}
    if a:
        extras["subsystem_a_fidelity"] = fidelity(partial_trace(rho_t0, a), partial_trace(rho_end, a))
    spec_b0 = np.linalg.eigvalsh(partial_trace(rho_t0, partition.subset_b))
    spec_bn = np.linalg.eigvalsh(partial_trace(rho_end, partition.subset_b))
    extras["b_spectrum_shift"] = float(np.abs(spec_b0 - spec_bn).max())
    extras["cycle_phase_aligned_distance"] = phase_aligned_distance(v_b)
    rho_resumed = evolve_density(rho_end, expm_hermitian(h, resume_time))
    return StorageReport(
        per_cycle_fidelity=fids,
        per_cycle_identity_distance=dists,
        period=period,
        total_period=n * period,
        exact_flag=all(d < EXACT_DISTANCE for d in dists),
        reference_fidelity=fidelity(partial_trace(rho_t0, partition.subset_b),
                                    partial_trace(rho_t0, partition.subset_b)),
        extras=extras,
        states={"t0": rho_t0, "stored": rho_end, "resumed": rho_resumed},
    )


@dataclass(frozen=True)
class TransferPlan:
    sender_size: int
    line_size: int
    receiver_size: int
    storage_cycles: int = 0
    t0: float | None = None
    lam: float = 1.0

    def __post_init__(self):
        if self.sender_size != self.receiver_size:
            raise InvalidProtocol("sender and receiver must have the same number of spins")
        if self.sender_size < 1 or self.line_size < 0:
            raise InvalidArgument("sender must have at least one spin and the line a nonnegative length")
        if self.storage_cycles < 0:
            raise InvalidArgument("storage_cycles must be nonnegative")
        if not self.lam > 0:
            raise InvalidArgument("lam must be positive")

    @property
    def n_spins(self) -> int:
        return self.sender_size + self.line_size + self.receiver_size

    @property
    def transfer_time(self) -> float:
        return pst_transfer_time(self.lam) if self.t0 is None else float(self.t0)

    @property
    def sender(self) -> tuple[int, ...]:
        return tuple(range(self.sender_size))

    @property
    def receiver(self) -> tuple[int, ...]:
        return tuple(range(self.n_spins - self.receiver_size, self.n_spins))


def _excitation_weight(rho, max_excitations=1):
    """Population of basis states with at most ``max_excitations`` spins up."""
    n = int(rho.shape[0]).bit_length() - 1
    idx = np.arange(2**n)
    ups = np.array([n - bin(i).count("1") for i in idx])
    return float(np.real(np.diag(rho))[ups <= max_excitations].sum())


def run_transfer_and_store(plan: TransferPlan, rho_s: np.ndarray, scheme: ReversalScheme) -> StorageReport:
    """Send rho_S down a perfect-transfer chain, store it in the receiver,
    reset sender and line to ground, reconnect and let it travel back.

    During storage the receiver is treated as a unit-spacing dipolar chain
    in a perpendicular field and runs through ``scheme``; the sender and
    line stay idle under their own XY Hamiltonian.
    """
    k = plan.sender_size
    n = plan.n_spins
    _check_state(rho_s, k, "rho_S")
    js = pst_chain_couplings(n, plan.lam)
    h = pst_chain_hamiltonian(n, couplings=js)
    t0 = plan.transfer_time
    rest = n - k
    rho0 = np.kron(rho_s, ground_density(rest))
    u_t0 = expm_hermitian(h, t0)
    rho_t0 = evolve_density(rho0, u_t0)

    receiver = plan.receiver
    mirrored = mirror_permutation(k) @ rho_s @ mirror_permutation(k).T if k > 1 else rho_s
    rho_b_t0 = partial_trace(rho_t0, receiver)
    transfer_fid = fidelity(mirrored, rho_b_t0)
    stl = tuple(range(n - k))
    stl_ground_fid = fidelity(ground_density(len(stl)), partial_trace(rho_t0, stl))

    # disconnect the receiver: drop the line-receiver bond
    cut = n - k - 1
    js_stl = js.copy()
    js_stl[cut:] = 0.0
    h_stl = pst_chain_hamiltonian(n, couplings=js_stl)
    chain = build_chain(n)
    b_couplings = dipolar_couplings(chain, FieldOrientation((0.0, 0.0, 1.0))).restricted(receiver)
    sched = storage_schedule(scheme, b_couplings, chain, receiver)
    period = sched.period
    v_b = compose_schedule(sched)
    cycle = expm_hermitian(h_stl, period) @ v_b
    rho_stored, fids, dists = _store_cycles(rho_t0, cycle, v_b, receiver, plan.storage_cycles)

    # projective reset of sender + line to ground before reconnecting
    rho_reset = np.kron(ground_density(n - k), partial_trace(rho_stored, receiver))
    rho_back = evolve_density(rho_reset, u_t0)
    round_trip = fidelity(rho_s, partial_trace(rho_back, plan.sender))

    extras = {
        "transfer_fidelity": transfer_fid,
        "sender_line_ground_fidelity": stl_ground_fid,
        "round_trip_fidelity": round_trip,
        "transfer_time": t0,
        "return_time": 2 * t0 + plan.storage_cycles * period,
        "single_excitation_sector": _excitation_weight(rho_s) > 1 - 1e-12,
        "cycle_phase_aligned_distance": phase_aligned_distance(v_b),
    }
    return StorageReport(
        per_cycle_fidelity=fids,
        per_cycle_identity_distance=dists,
        period=period,
        total_period=plan.storage_cycles * period,
        exact_flag=all(d < EXACT_DISTANCE for d in dists),
        reference_fidelity=fidelity(rho_b_t0, rho_b_t0),
        extras=extras,
        states={"t0": rho_t0, "stored": rho_stored, "returned": rho_back},
    )


# -- impurity decoupling -------------------------------------------------------


@dataclass(frozen=True)
class ImpuritySwitch:
    """Resonant transverse drive of amplitude ``drive_amplitude`` on the impurity at ``site``."""

    site: int
    drive_amplitude: float
    window: float
    gamma3: float | None = None

    def __post_init__(self):
        if not self.drive_amplitude >= 0:
            raise InvalidArgument("drive amplitude must be nonnegative")
        if not self.window > 0:
            raise InvalidArgument("window must be positive")
        if self.gamma3 is not None and not self.gamma3 > 0:
            raise InvalidArgument("gamma3 must be positive")


@dataclass
class ImpurityReport:
    omegas: list[float]
    leakages: list[float]
    baseline_leakage: float
    omega_loc: float
    window: float
    subsystem_a: tuple[int, ...]
    subsystem_b: tuple[int, ...]


def impurity_chain_couplings(n_a: int = 1, n_b: int = 1, gamma3: float = 4.0, gamma: float = 1.0,
                             g: float = 1.0):
    """A - impurity - B chain with the field perpendicular to it, nearest-neighbour bonds only.

    Returns (geometry, couplings, impurity_site).
    """
    if n_a < 1 or n_b < 1:
        raise InvalidArgument("both subsystems need at least one spin")
    gammas = [gamma] * n_a + [gamma3] + [gamma] * n_b
    geo = build_chain(n_a + 1 + n_b, 1.0, gammas)
    full = dipolar_couplings(geo, FieldOrientation((0.0, 0.0, 1.0)), g)
    return geo, nearest_neighbor_couplings(full, geo), n_a


def _default_impurity_state(n, site):
    up = np.array([1.0, 0.0])
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    psi = np.ones(1)
    for k in range(n):
        psi = np.kron(psi, plus if k > site else up)
    return pure_density(psi)


def run_impurity_switch(couplings: CouplingMatrix, switch: ImpuritySwitch, rho0: np.ndarray | None = None,
                        omegas: Sequence[float] | None = None) -> ImpurityReport:
    """Leakage 1 - F(rho_B(window), rho_B(0)) for each drive amplitude.

    A holds the sites before the impurity, B those after.  Bonds touching
    the impurity are heteronuclear and keep only their secular 2 D I_z I_z
    part; the drive is Omega I_x on the impurity in its rotating frame.
    The default initial state has A and the impurity up and B along +x.
    """
    n = couplings.n
    site = switch.site
    if not 0 < site < n - 1:
        raise InvalidProtocol("impurity must sit strictly between subsystems A and B")
    gam = couplings.gammas
    if switch.gamma3 is not None and not np.isclose(gam[site], switch.gamma3):
        raise InvalidProtocol(f"impurity gamma {gam[site]} does not match gamma3 = {switch.gamma3}")
    others = np.delete(gam, site)
    if np.any(np.isclose(others, gam[site])):
        raise InvalidProtocol("impurity must have a gyromagnetic ratio distinct from A and B")
    a = tuple(range(site))
    b = tuple(range(site + 1, n))
    rho0 = _default_impurity_state(n, site) if rho0 is None else rho0
    _check_state(rho0, n, "rho0")
    omegas = [0.0, switch.drive_amplitude] if omegas is None else [float(o) for o in omegas]
    h_dip = dipolar_hamiltonian(couplings, "dz", secular_only_for_hetero=True)
    drive = single_spin_op(n, site, "x")
    ref = partial_trace(rho0, b)

    def leak(omega):
        u = expm_hermitian(h_dip + omega * drive, switch.window)
        return 1.0 - fidelity(ref, partial_trace(evolve_density(rho0, u), b))

    return ImpurityReport(
        omegas=omegas,
        leakages=[leak(o) for o in omegas],
        baseline_leakage=leak(0.0),
        omega_loc=local_field(couplings),
        window=switch.window,
        subsystem_a=a,
        subsystem_b=b,
    )

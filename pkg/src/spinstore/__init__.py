"""Simulation of dynamical quantum-state storage in dipolar spin-1/2 systems."""

__version__ = "0.1.0"

from .avg_hamiltonian import (  # noqa: E402
    ScalingFit,
    error_scaling_probe,
    first_order,
    local_field,
    zeroth_order,
)
from .evolution import (  # noqa: E402
    PulseEvent,
    Schedule,
    ScheduleSegment,
    compose_schedule,
    distance_to_identity,
    evolve_density,
    expm_hermitian,
    fidelity,
    partial_trace,
    phase_aligned_distance,
    toggle_conjugate,
)
from .operators import (  # noqa: E402
    Partition,
    dipolar_hamiltonian,
    partition_hamiltonian,
    pst_chain_hamiltonian,
    single_spin_op,
)
from .protocols import (  # noqa: E402
    ImpuritySwitch,
    ReversalScheme,
    StorageReport,
    TransferPlan,
    chain_reversal_unitary,
    planar_reversal_unitary,
    pulse_storage_unitary,
    run_frozen_subsystem,
    run_impurity_switch,
    run_transfer_and_store,
)
from .spin_system import (  # noqa: E402
    CouplingMatrix,
    FieldOrientation,
    Geometry,
    build_chain,
    build_lattice,
    dipolar_couplings,
    three_orientation_couplings,
)

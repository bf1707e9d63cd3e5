"""Dense spin-1/2 operators and dipolar Hamiltonians on the 2**n space.

Basis convention: site 0 is the most significant qubit, and the single-spin
basis is (|up>, |down>) so that I_z = diag(1/2, -1/2).  "Ground" means every
spin down, i.e. the last computational basis state.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidPartition
from .spin_system import CouplingMatrix

__all__ = [
    "MAX_SPINS",
    "PAULI",
    "Partition",
    "single_spin_op",
    "pair_op",
    "total_spin_op",
    "dipolar_hamiltonian",
    "partition_hamiltonian",
    "pst_chain_couplings",
    "pst_chain_hamiltonian",
    "pst_transfer_time",
    "mirror_permutation",
    "check_hermitian",
]

MAX_SPINS = 13

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# distinguished axis followed by the two axes entering with weight -1
KIND_AXES = {"dz": ("z", "x", "y"), "dy": ("y", "x", "z"), "dx": ("x", "y", "z")}


def check_hermitian(op: np.ndarray, atol: float = 1e-12, what: str = "operator") -> np.ndarray:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise InvalidArgument(f"{what} must be a square matrix")
    dim = op.shape[0]
    if dim & (dim - 1):
        raise InvalidArgument(f"{what} dimension {dim} is not a power of two")
    scale = max(1.0, float(np.abs(op).max(initial=0.0)))
    err = np.abs(op - op.conj().T).max(initial=0.0)
    if err > atol * scale:
        raise InvalidArgument(f"{what} is not Hermitian (max deviation {err:.3e})")
    return op


def n_spins_of(op: np.ndarray) -> int:
    return int(op.shape[0]).bit_length() - 1


def _check_size(n_spins):
    if int(n_spins) != n_spins or n_spins < 1:
        raise InvalidArgument(f"n_spins must be a positive integer, got {n_spins!r}")
    if n_spins > MAX_SPINS:
        raise InvalidArgument(f"n_spins = {n_spins} exceeds the dense limit of {MAX_SPINS}")


@lru_cache(maxsize=512)
def single_spin_op(n_spins: int, site: int, axis: str) -> np.ndarray:
    """I_axis of one spin, embedded with identities on the other sites.

    The returned array is read-only and cached; copy before mutating.
    """
    _check_size(n_spins)
    if not 0 <= site < n_spins:
        raise InvalidArgument(f"site {site} out of range for {n_spins} spins")
    if axis not in PAULI:
        raise InvalidArgument(f"axis must be one of x, y, z, got {axis!r}")
    left = np.eye(2**site)
    right = np.eye(2 ** (n_spins - site - 1))
    out = np.kron(np.kron(left, 0.5 * PAULI[axis]), right)
    out.setflags(write=False)
    return out


def total_spin_op(n_spins: int, axis: str, sites: Iterable[int] | None = None) -> np.ndarray:
    sites = range(n_spins) if sites is None else sites
    out = np.zeros((2**n_spins, 2**n_spins), dtype=complex)
    for k in sites:
        out += single_spin_op(n_spins, k, axis)
    return out


def pair_op(n_spins: int, i: int, j: int, axis: str) -> np.ndarray:
    """I_axis,i I_axis,j built by Kronecker products (i != j)."""
    if i == j or not (0 <= i < n_spins and 0 <= j < n_spins):
        raise InvalidArgument(f"invalid site pair ({i}, {j}) for {n_spins} spins")
    i, j = min(i, j), max(i, j)
    s = 0.5 * PAULI[axis]
    out = np.kron(np.eye(2**i), s)
    out = np.kron(out, np.eye(2 ** (j - i - 1)))
    out = np.kron(out, s)
    return np.kron(out, np.eye(2 ** (n_spins - j - 1)))


def _pair_term(n, i, j, axes, scale, out):
    a, b, c = axes
    out += (2.0 * scale) * pair_op(n, i, j, a)
    out -= scale * pair_op(n, i, j, b)
    out -= scale * pair_op(n, i, j, c)


def dipolar_hamiltonian(couplings: CouplingMatrix, kind: str = "dz", secular_only_for_hetero: bool = False) -> np.ndarray:
    """sum_{i<j} D_ij (2 I_a I_a - I_b I_b - I_c I_c) with ``a`` set by ``kind``.

    With ``secular_only_for_hetero`` the flip-flop part is dropped for pairs
    of unlike gyromagnetic ratio, leaving ``2 D_ij I_ai I_aj``.
    """
    if kind not in KIND_AXES:
        raise InvalidArgument(f"kind must be one of {sorted(KIND_AXES)}, got {kind!r}")
    n = couplings.n
    _check_size(n)
    axes = KIND_AXES[kind]
    hetero = couplings.heteronuclear if secular_only_for_hetero else None
    out = np.zeros((2**n, 2**n), dtype=complex)
    for i, j, d in couplings.pairs():
        if hetero is not None and hetero[i, j]:
            a = axes[0]
            out += (2.0 * d) * pair_op(n, i, j, a)
        else:
            _pair_term(n, i, j, axes, d, out)
    return out


@dataclass(frozen=True)
class Partition:
    subset_a: tuple[int, ...]
    subset_b: tuple[int, ...]

    def __post_init__(self):
        a = tuple(sorted(int(i) for i in self.subset_a))
        b = tuple(sorted(int(i) for i in self.subset_b))
        object.__setattr__(self, "subset_a", a)
        object.__setattr__(self, "subset_b", b)
        if set(a) & set(b):
            raise InvalidPartition(f"subsets overlap on {sorted(set(a) & set(b))}")
        if len(set(a)) != len(a) or len(set(b)) != len(b):
            raise InvalidPartition("subsets contain repeated sites")

    def validate(self, n: int) -> "Partition":
        union = set(self.subset_a) | set(self.subset_b)
        if union != set(range(n)):
            raise InvalidPartition(f"partition must cover sites 0..{n - 1} exactly, got {sorted(union)}")
        return self

    @classmethod
    def split(cls, n: int, size_a: int) -> "Partition":
        """First ``size_a`` sites form A, the rest B."""
        if not 0 <= size_a <= n:
            raise InvalidPartition("size_a out of range")
        return cls(tuple(range(size_a)), tuple(range(size_a, n)))


def partition_hamiltonian(couplings: CouplingMatrix, partition: Partition, kind: str = "dz",
                          secular_only_for_hetero: bool = False):
    """Split the dipolar Hamiltonian into (H_A, H_B, H_AB)."""
    partition.validate(couplings.n)
    a, b = partition.subset_a, partition.subset_b
    h_a = dipolar_hamiltonian(couplings.restricted(a), kind, secular_only_for_hetero)
    h_b = dipolar_hamiltonian(couplings.restricted(b), kind, secular_only_for_hetero)
    h_ab = dipolar_hamiltonian(couplings.cross(a, b), kind, secular_only_for_hetero)
    return h_a, h_b, h_ab


def pst_chain_couplings(n: int, lam: float = 1.0) -> np.ndarray:
    """Nearest-neighbour couplings J_i = lam * sqrt(i (n - i)), i = 1..n-1."""
    if int(n) != n or n < 2:
        raise InvalidArgument(f"perfect-transfer chain needs n >= 2, got {n!r}")
    if not lam > 0:
        raise InvalidArgument("lambda must be positive")
    i = np.arange(1, n)
    return lam * np.sqrt(i * (n - i))


def pst_chain_hamiltonian(n: int, lam: float = 1.0, couplings: Sequence[float] | None = None) -> np.ndarray:
    """XY chain sum_i J_i (I_x,i I_x,i+1 + I_y,i I_y,i+1).

    Single-excitation transfer end to end completes at ``pi / lam``.
    """
    _check_size(n)
    js = pst_chain_couplings(n, lam) if couplings is None else np.asarray(couplings, dtype=float)
    out = np.zeros((2**n, 2**n), dtype=complex)
    for k, j in enumerate(js):
        out += j * pair_op(n, k, k + 1, "x")
        out += j * pair_op(n, k, k + 1, "y")
    return out


def pst_transfer_time(lam: float = 1.0) -> float:
    return float(np.pi / lam)


@lru_cache(maxsize=32)
def _mirror_indices(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    rev = np.zeros_like(idx)
    for k in range(n):
        rev |= ((idx >> k) & 1) << (n - 1 - k)
    return rev


def mirror_permutation(n: int) -> np.ndarray:
    """Permutation matrix reversing the qubit order (site k <-> site n-1-k)."""
    _check_size(n)
    rev = _mirror_indices(n)
    perm = np.zeros((2**n, 2**n))
    perm[rev, np.arange(2**n)] = 1.0
    return perm

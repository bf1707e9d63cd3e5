"""Spin geometries and orientation-dependent dipolar coupling constants.

Units are natural: hbar = 1, distances in lattice spacings, couplings in
angular frequency.  The prefactor ``g`` stands for gamma^2 hbar / 2 of the
reference species; a pair (i, j) carries ``g * gamma_i * gamma_j``.

For a planar geometry the first in-plane direction is the first lattice
axis (the direction along a row of :func:`build_lattice`), the second is the
in-plane perpendicular and the third is the plane normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DegenerateGeometry, InvalidArgument, InvalidGeometry

__all__ = [
    "SpinSite",
    "Geometry",
    "FieldOrientation",
    "CouplingMatrix",
    "build_chain",
    "build_lattice",
    "geometry_from_positions",
    "dipolar_couplings",
    "three_orientation_couplings",
    "nearest_neighbor_couplings",
    "MAGIC_ANGLE",
]

MAGIC_ANGLE = float(np.arccos(1.0 / np.sqrt(3.0)))

_COLLINEAR_TOL = 1e-9
_MIN_DISTANCE = 1e-12

KINDS = ("chain", "planar", "general")


@dataclass(frozen=True)
class SpinSite:
    position: tuple[float, float, float]
    gamma: float = 1.0

    def __post_init__(self):
        pos = tuple(float(x) for x in self.position)
        if len(pos) != 3 or not all(np.isfinite(pos)):
            raise InvalidArgument(f"site position must be a finite 3-vector, got {self.position!r}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise InvalidArgument(f"gyromagnetic ratio must be positive, got {self.gamma!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "gamma", float(self.gamma))


def _principal_frame(positions):
    """Right singular vectors of the centred point cloud and its numerical rank."""
    centred = positions - positions.mean(axis=0)
    _, s, vt = np.linalg.svd(centred, full_matrices=True)
    scale = max(s[0], 1.0) if s.size else 1.0
    rank = int(np.sum(s > _COLLINEAR_TOL * scale))
    return vt, rank


def _orthonormal_completion(e1):
    trial = np.array([0.0, 0.0, 1.0]) if abs(e1[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e2 = trial - (trial @ e1) * e1
    e2 /= np.linalg.norm(e2)
    return e2, np.cross(e1, e2)


@dataclass(frozen=True)
class Geometry:
    """Ordered spin sites tagged with their dimensionality.

    ``axes`` optionally pins the (first in-plane, second in-plane, normal)
    frame used by :func:`three_orientation_couplings`; when omitted it is
    derived from the site positions.
    """

    sites: tuple[SpinSite, ...]
    kind: str = "general"
    axes: tuple[tuple[float, ...], ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        sites = tuple(self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise InvalidArgument("geometry needs at least one site")
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown geometry kind {self.kind!r}")
        pos = self.positions
        for i, j in combinations(range(len(sites)), 2):
            if np.linalg.norm(pos[i] - pos[j]) <= _MIN_DISTANCE:
                raise DegenerateGeometry(f"sites {i} and {j} coincide")
        if len(sites) > 1:
            _, rank = _principal_frame(pos)
            if self.kind == "chain" and rank > 1:
                raise InvalidGeometry("chain geometry requires collinear sites")
            if self.kind == "planar" and rank > 2:
                raise InvalidGeometry("planar geometry requires coplanar sites")

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sites], dtype=float)

    @property
    def gammas(self) -> np.ndarray:
        return np.array([s.gamma for s in self.sites], dtype=float)

    def distances(self) -> np.ndarray:
        pos = self.positions
        return np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)

    def is_coplanar(self) -> bool:
        return self.n < 4 or _principal_frame(self.positions)[1] <= 2

    def is_collinear(self) -> bool:
        return self.n < 3 or _principal_frame(self.positions)[1] <= 1

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (first in-plane, second in-plane, normal) directions."""
        if self.axes is not None:
            e1, e2, nrm = (np.asarray(a, dtype=float) for a in self.axes)
            return e1, e2, nrm
        if not self.is_coplanar():
            raise InvalidGeometry("three-orientation frame needs a planar geometry")
        pos = self.positions
        if self.n == 1:
            return np.eye(3)[0], np.eye(3)[1], np.eye(3)[2]
        e1 = pos[1] - pos[0]
        e1 = e1 / np.linalg.norm(e1)
        vt, rank = _principal_frame(pos)
        if rank <= 1:
            e2, nrm = _orthonormal_completion(e1)
            return e1, e2, nrm
        nrm = vt[2] / np.linalg.norm(vt[2])
        e2 = np.cross(nrm, e1)
        return e1, e2 / np.linalg.norm(e2), nrm

    def subset(self, indices: Sequence[int]) -> "Geometry":
        sites = tuple(self.sites[i] for i in indices)
        kind = self.kind if len(sites) > 1 else "general"
        return Geometry(sites, kind, self.axes)


@dataclass(frozen=True)
class FieldOrientation:
    direction: tuple[float, float, float]

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or not np.all(np.isfinite(d)):
            raise InvalidArgument("field direction must be a finite 3-vector")
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise InvalidArgument(f"field direction must be a unit vector, |d| = {np.linalg.norm(d)!r}")
        object.__setattr__(self, "direction", tuple(float(x) for x in d))

    @classmethod
    def along(cls, vector) -> "FieldOrientation":
        """Normalise ``vector`` and wrap it."""
        v = np.asarray(vector, dtype=float)
        norm = np.linalg.norm(v)
        if not np.isfinite(norm) or norm == 0:
            raise InvalidArgument("field direction must be a nonzero finite vector")
        return cls(tuple(v / norm))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.direction)


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Symmetric pairwise dipolar constants with zero diagonal.

    ``gammas`` records per-site gyromagnetic ratios so that Hamiltonian
    builders can treat unlike pairs as heteronuclear.
    """

    values: np.ndarray
    g: float = 1.0
    gammas: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InvalidArgument("coupling matrix must be square")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("coupling values must be finite")
        if not np.allclose(v, v.T, rtol=0, atol=1e-12 * max(1.0, np.abs(v).max(initial=0))):
            raise InvalidArgument("coupling matrix must be symmetric")
        if np.any(np.diag(v) != 0):
            raise InvalidArgument("coupling matrix must have zero diagonal")
        if not self.g > 0:
            raise InvalidArgument("prefactor g must be positive")
        v = 0.5 * (v + v.T)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        gam = np.ones(v.shape[0]) if self.gammas is None else np.array(self.gammas, dtype=float)
        if gam.shape != (v.shape[0],) or np.any(gam <= 0):
            raise InvalidArgument("gammas must be one positive value per site")
        gam.setflags(write=False)
        object.__setattr__(self, "gammas", gam)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def heteronuclear(self) -> np.ndarray:
        """Boolean mask of pairs with unlike gyromagnetic ratios."""
        return ~np.isclose(self.gammas[:, None], self.gammas[None, :], rtol=1e-12, atol=0)

    def pairs(self):
        """Yield (i, j, D_ij) for i < j with nonzero coupling."""
        n = self.n
        for i in range(n):
            for j in range(i + 1, n):
                if self.values[i, j] != 0:
                    yield i, j, float(self.values[i, j])

    def restricted(self, sites: Sequence[int]) -> "CouplingMatrix":
        """Same size, but only pairs with both ends in ``sites`` survive."""
        mask = np.zeros(self.n, dtype=bool)
        mask[list(sites)] = True
        return self.replace(self.values * np.outer(mask, mask))

    def cross(self, sites_a: Sequence[int], sites_b: Sequence[int]) -> "CouplingMatrix":
        a = np.zeros(self.n, dtype=bool)
        b = np.zeros(self.n, dtype=bool)
        a[list(sites_a)] = True
        b[list(sites_b)] = True
        keep = np.outer(a, b) | np.outer(b, a)
        return self.replace(self.values * keep)

    def scaled(self, factor: float) -> "CouplingMatrix":
        return self.replace(self.values * factor)

    def replace(self, values) -> "CouplingMatrix":
        return CouplingMatrix(values, self.g, self.gammas)

    def __add__(self, other: "CouplingMatrix") -> "CouplingMatrix":
        return self.replace(self.values + other.values)

    def __repr__(self):
        return f"CouplingMatrix(n={self.n}, g={self.g}, max|D|={np.abs(self.values).max(initial=0):.4g})"


def _check_count(name, value):
    if int(value) != value or value < 1:
        raise InvalidArgument(f"{name} must be a positive integer, got {value!r}")


def _check_spacing(spacing):
    if not (np.isfinite(spacing) and spacing > 0):
        raise InvalidArgument(f"spacing must be positive, got {spacing!r}")


def build_chain(n: int, spacing: float = 1.0, gammas: Sequence[float] | None = None) -> Geometry:
    """``n`` collinear sites at ``k * spacing`` along the x axis."""
    _check_count("n", n)
    _check_spacing(spacing)
    gammas = [1.0] * n if gammas is None else list(gammas)
    if len(gammas) != n:
        raise InvalidArgument("need one gamma per site")
    sites = tuple(SpinSite((k * spacing, 0.0, 0.0), gammas[k]) for k in range(n))
    axes = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    return Geometry(sites, "chain", axes)


def build_lattice(rows: int, cols: int, spacing: float = 1.0) -> Geometry:
    """Rectangular ``rows x cols`` grid in the xy plane, row-major site order.

    Site (r, c) sits at ``(c, r, 0) * spacing``; the first lattice axis is x.
    """
    _check_count("rows", rows)
    _check_count("cols", cols)
    _check_spacing(spacing)
    sites = tuple(
        SpinSite((c * spacing, r * spacing, 0.0)) for r in range(rows) for c in range(cols)
    )
    axes = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    return Geometry(sites, "planar", axes)


def geometry_from_positions(positions, gammas=None, kind: str | None = None, axes=None) -> Geometry:
    """Build a geometry from explicit coordinates, inferring the kind if not given."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.shape[1] != 3:
        raise InvalidArgument("positions must be triples")
    gammas = np.ones(len(positions)) if gammas is None else np.asarray(gammas, dtype=float)
    if len(gammas) != len(positions):
        raise InvalidArgument("need one gamma per site")
    sites = tuple(SpinSite(tuple(p), g) for p, g in zip(positions, gammas))
    if kind is None:
        probe = Geometry(sites, "general")
        kind = "chain" if probe.is_collinear() else "planar" if probe.is_coplanar() else "general"
    if axes is not None:
        axes = _validated_axes(axes)
    return Geometry(sites, kind, axes)


def _validated_axes(axes):
    frame = np.asarray(axes, dtype=float)
    if frame.shape != (3, 3) or not np.allclose(frame @ frame.T, np.eye(3), atol=1e-12):
        raise InvalidArgument("axes must be three orthonormal directions")
    return tuple(tuple(row) for row in frame)


def _orientation_factors(geometry: Geometry, direction: np.ndarray):
    pos = geometry.positions
    diff = pos[None, :, :] - pos[:, None, :]
    r = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(r, 1.0)
    cos = (diff @ direction) / r
    return r, cos


def dipolar_couplings(geometry: Geometry, field: FieldOrientation, g: float = 1.0) -> CouplingMatrix:
    """D_ij = g gamma_i gamma_j (1 - 3 cos^2 theta_ij) / r_ij^3."""
    if not g > 0:
        raise InvalidArgument("prefactor g must be positive")
    r, cos = _orientation_factors(geometry, field.vector)
    gam = geometry.gammas
    values = g * np.outer(gam, gam) * (1.0 - 3.0 * cos**2) / r**3
    np.fill_diagonal(values, 0.0)
    return CouplingMatrix(values, g, gam)


def three_orientation_couplings(geometry: Geometry, g: float = 1.0):
    """Couplings for the field along the first in-plane axis, the second
    in-plane axis and the plane normal.  The three matrices sum to zero.

    The second and third matrices are evaluated from the angles to the first
    axis, ``(-2 + 3 cos^2)/r^3`` and ``1/r^3``, rather than by re-projecting,
    so the sum rule holds to round-off.
    """
    if not g > 0:
        raise InvalidArgument("prefactor g must be positive")
    if not geometry.is_coplanar():
        raise InvalidGeometry("three-orientation protocol needs a planar geometry")
    e1, _, _ = geometry.frame()
    r, cos = _orientation_factors(geometry, e1)
    gam = geometry.gammas
    base = g * np.outer(gam, gam) / r**3
    np.fill_diagonal(base, 0.0)
    c2 = cos**2
    d1 = base * (1.0 - 3.0 * c2)
    d2 = base * (-2.0 + 3.0 * c2)
    d3 = -(d1 + d2)
    return (CouplingMatrix(d1, g, gam), CouplingMatrix(d2, g, gam), CouplingMatrix(d3, g, gam))


def nearest_neighbor_couplings(couplings: CouplingMatrix, geometry: Geometry, rtol: float = 1e-9) -> CouplingMatrix:
    """Keep only pairs separated by the minimal inter-site distance."""
    r = geometry.distances()
    if geometry.n < 2:
        return couplings
    off = r[~np.eye(geometry.n, dtype=bool)]
    keep = r <= off.min() * (1 + rtol)
    np.fill_diagonal(keep, False)
    return couplings.replace(couplings.values * keep)

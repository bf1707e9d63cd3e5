"""Execute an :class:`ExperimentConfig` and write CSV / JSON reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .avg_hamiltonian import ScalingFit, local_field, scaling_fit_from_points, zeroth_order
from .config import ExperimentConfig
from .errors import InvalidProtocol, ResourceGuardError
from .evolution import (
    compose_schedule,
    distance_to_identity,
    evolve_density,
    expm_hermitian,
    fidelity,
    phase_aligned_distance,
    pure_density,
    random_density,
    toggle_conjugate,
    PulseEvent,
    unitarity_error,
)
from .operators import MAX_SPINS, Partition, dipolar_hamiltonian, partition_hamiltonian, total_spin_op
from .protocols import (
    SCHEMES,
    ImpuritySwitch,
    ReversalScheme,
    TransferPlan,
    impurity_chain_couplings,
    period_per_tau,
    run_frozen_subsystem,
    run_impurity_switch,
    run_transfer_and_store,
    storage_schedule,
)
from .spin_system import (
    FieldOrientation,
    Geometry,
    build_chain,
    build_lattice,
    dipolar_couplings,
    geometry_from_positions,
    three_orientation_couplings,
)

__all__ = ["RunReport", "run_experiment", "emit_report", "verify_system", "system_size", "CSV_HEADER"]

log = logging.getLogger(__name__)

CSV_HEADER = ("point_index", "param_value", "period_T", "identity_distance", "fidelity")


@dataclass
class RunReport:
    config: ExperimentConfig
    seed: int
    n_spins: int
    points: list[dict]
    fit: ScalingFit | None = None
    exact: bool = False
    notes: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "config": self.config.as_dict(),
            "scheme": self.config.scheme,
            "seed": self.seed,
            "n_spins": self.n_spins,
            "points": self.points,
            "fit": None if self.fit is None else {
                **self.fit.summary(),
                "taus": self.fit.taus,
                "periods": self.fit.periods,
                "distances": self.fit.distances,
            },
            "exact": self.exact,
            "notes": self.notes,
        }
        if include_timings:
            out["timings"] = self.timings
        return out


def build_geometry(spec: dict) -> Geometry:
    kind = spec["kind"]
    if kind == "chain":
        return build_chain(spec["n"], spec["spacing"], spec.get("gammas"))
    if kind == "lattice":
        return build_lattice(spec["rows"], spec["cols"], spec["spacing"])
    return geometry_from_positions(spec["positions"], spec.get("gammas"))


def system_size(config: ExperimentConfig) -> int:
    p = config.protocol
    if config.scheme == "transfer_and_store":
        return p["sender"] + p["line"] + p["receiver"]
    if config.scheme == "impurity_switch":
        return p["n_a"] + 1 + p["n_b"]
    g = config.geometry
    return {"chain": lambda: g["n"], "lattice": lambda: g["rows"] * g["cols"],
            "sites": lambda: len(g["positions"])}[g["kind"]]()


def _scheme(params: dict, tag: str) -> ReversalScheme:
    return ReversalScheme(tag, params["tau"], params.get("cycles", 1), params.get("pulse_model", "ideal_toggling"))


def _chain_field_check(geometry: Geometry, field: FieldOrientation):
    if geometry.n > 1:
        axis = geometry.positions[-1] - geometry.positions[0]
        axis /= np.linalg.norm(axis)
        if abs(axis @ field.vector) > 1e-9:
            raise InvalidProtocol("chain_reversal stores with the field perpendicular to the chain; "
                                  "set [geometry] field accordingly")
    if not geometry.is_collinear():
        raise InvalidProtocol("chain_reversal needs a collinear geometry")


class _System:
    """Geometry-derived objects shared by every sweep point."""

    def __init__(self, config: ExperimentConfig):
        self.geometry = build_geometry(config.geometry)
        spec = config.geometry
        self.field = FieldOrientation.along(spec["field"])
        self.g = spec["g"]
        self.couplings = dipolar_couplings(self.geometry, self.field, self.g)
        if config.scheme == "planar_three_orientation" or (
            config.scheme == "frozen_subsystem" and config.protocol["storage"] == "planar_three_orientation"
        ):
            self.three = three_orientation_couplings(self.geometry, self.g)
            self.omega_loc = max(local_field(d) for d in self.three)
        else:
            self.three = None
            self.omega_loc = local_field(self.couplings)
        if config.scheme == "chain_reversal" or (
            config.scheme == "frozen_subsystem" and config.protocol["storage"] == "chain_reversal"
        ):
            _chain_field_check(self.geometry, self.field)


def _reversal_point(system: _System, params: dict, tag: str, rho: np.ndarray) -> dict:
    scheme = _scheme(params, tag)
    sched = storage_schedule(scheme, system.couplings, system.geometry)
    v = compose_schedule(sched)
    vn = np.linalg.matrix_power(v, scheme.cycles)
    return {
        "period_T": sched.period,
        "identity_distance": distance_to_identity(v),
        "phase_aligned_distance": phase_aligned_distance(v),
        "fidelity": fidelity(rho, evolve_density(rho, vn)),
        "cycles": scheme.cycles,
    }


def _frozen_point(system: _System, params: dict, rho: np.ndarray) -> dict:
    scheme = _scheme(params, params["storage"])
    n = system.geometry.n
    if params["size_a"] >= n:
        raise InvalidProtocol(f"size_a = {params['size_a']} leaves subsystem B empty")
    part = Partition.split(n, params["size_a"])
    rep = run_frozen_subsystem(system.couplings, part, rho, params["t0"], scheme,
                               geometry=system.geometry, resume_time=params["resume_time"])
    return {
        "period_T": rep.period,
        "identity_distance": rep.per_cycle_identity_distance[-1] if rep.cycles else 0.0,
        "phase_aligned_distance": rep.extras["cycle_phase_aligned_distance"],
        "fidelity": rep.min_fidelity,
        "subsystem_a_fidelity": rep.extras.get("subsystem_a_fidelity"),
        "per_cycle_fidelity": rep.per_cycle_fidelity,
        "cycles": rep.cycles,
    }


def _transfer_point(params: dict, rho_s: np.ndarray) -> dict:
    plan = TransferPlan(params["sender"], params["line"], params["receiver"], params["cycles"],
                        params.get("t0"), params["lam"])
    scheme = _scheme(params, params["storage"])
    rep = run_transfer_and_store(plan, rho_s, scheme)
    return {
        "period_T": rep.period,
        "identity_distance": rep.per_cycle_identity_distance[-1] if rep.cycles else 0.0,
        "phase_aligned_distance": rep.extras["cycle_phase_aligned_distance"],
        "fidelity": rep.extras["round_trip_fidelity"],
        "transfer_fidelity": rep.extras["transfer_fidelity"],
        "single_excitation_sector": rep.extras["single_excitation_sector"],
        "cycles": rep.cycles,
    }


def _impurity_point(params: dict) -> dict:
    _, couplings, site = impurity_chain_couplings(params["n_a"], params["n_b"], params["gamma3"])
    switch = ImpuritySwitch(site, params["omega"], params["window"], params["gamma3"])
    rep = run_impurity_switch(couplings, switch, omegas=[params["omega"]])
    return {
        "period_T": None,
        "identity_distance": None,
        "fidelity": 1.0 - rep.leakages[0],
        "leakage": rep.leakages[0],
        "baseline_leakage": rep.baseline_leakage,
        "omega_over_omega_loc": params["omega"] / rep.omega_loc,
    }


def _sender_state(k: int, rng: np.random.Generator) -> np.ndarray:
    """Random pure state of k qubits supported on the zero- and one-excitation sectors."""
    psi = np.zeros(2**k, dtype=complex)
    # ground (all down) is the last index; one excitation flips one bit to up
    idx = [2**k - 1] + [2**k - 1 - (1 << (k - 1 - j)) for j in range(k)]
    psi[idx] = rng.normal(size=len(idx)) + 1j * rng.normal(size=len(idx))
    return pure_density(psi)


def run_experiment(config: ExperimentConfig, seed: int | None = None) -> RunReport:
    """Run every sweep point (or the single configured point) of ``config``."""
    n_spins = system_size(config)
    if n_spins > MAX_SPINS:
        raise ResourceGuardError(
            f"{n_spins} spins requested; dense simulation is limited to {MAX_SPINS} spins"
        )
    seed = config.output["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    scheme = config.scheme
    t_start = time.perf_counter()

    system = None if scheme in ("transfer_and_store", "impurity_switch") else _System(config)
    if scheme in SCHEMES:
        rho = random_density(n_spins, rng)
    elif scheme == "frozen_subsystem":
        rho = pure_density(rng.normal(size=2**n_spins) + 1j * rng.normal(size=2**n_spins))
    elif scheme == "transfer_and_store":
        rho = _sender_state(config.protocol["sender"], rng)
    else:
        rho = None

    if config.sweep is None:
        plan = [(None, dict(config.protocol))]
    else:
        param = config.sweep["parameter"]
        plan = [(v, {**config.protocol, param: v}) for v in config.sweep["values"]]

    points, timings = [], {}
    for index, (value, params) in enumerate(plan):
        t0 = time.perf_counter()
        if scheme in SCHEMES:
            result = _reversal_point(system, params, scheme, rho)
        elif scheme == "frozen_subsystem":
            result = _frozen_point(system, params, rho)
        elif scheme == "transfer_and_store":
            result = _transfer_point(params, rho)
        else:
            result = _impurity_point(params)
        timings[f"point_{index}"] = time.perf_counter() - t0
        points.append({"point_index": index, "param_value": value, **result})
        log.info("point %d (%s) done in %.3fs", index, value, timings[f"point_{index}"])

    report = RunReport(config=config, seed=seed, n_spins=n_spins, points=points)
    if config.sweep is not None and config.sweep["parameter"] == "tau" and points and scheme != "impurity_switch":
        tag = scheme if scheme in SCHEMES else config.protocol["storage"]
        omega_loc = system.omega_loc if system is not None else local_field(
            dipolar_couplings(build_chain(config.protocol["receiver"]), FieldOrientation((0.0, 0.0, 1.0))))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report.fit = scaling_fit_from_points(
                [p["param_value"] for p in points],
                [p["phase_aligned_distance"] for p in points],
                omega_loc,
                period_per_tau(tag),
            )
        report.notes.extend(str(w.message) for w in caught)
        if len(points) < 3 or max(report.fit.taus) < 10 * min(report.fit.taus):
            report.notes.append("tau sweep has fewer than 3 points or spans less than a decade; slope is indicative")
    dists = [p["identity_distance"] for p in points if p.get("identity_distance") is not None]
    report.exact = bool(dists) and all(d < 1e-10 for d in dists)
    timings["total"] = time.perf_counter() - t_start
    report.timings = timings
    return report


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv(report: RunReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in report.points:
        writer.writerow([_fmt(p.get(k)) for k in CSV_HEADER])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def report_json(report: RunReport, include_timings: bool = False) -> str:
    return json.dumps(_jsonable(report.to_dict(include_timings)), indent=2, sort_keys=True) + "\n"


def emit_report(report: RunReport, fmt: str, out_dir, include_timings: bool = False) -> Path:
    """Write ``report.csv`` or ``report.json`` into ``out_dir`` and return its path."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"report.{fmt}"
    text = report_csv(report) if fmt == "csv" else report_json(report, include_timings)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _check(name, value, tol):
    return {"name": name, "value": float(value), "tolerance": tol, "passed": bool(value < tol)}


def verify_system(config: ExperimentConfig) -> list[dict]:
    """Algebraic invariants of the configured spin system."""
    if config.geometry is None:
        n = system_size(config)
        if config.scheme == "impurity_switch":
            _, couplings, _ = impurity_chain_couplings(config.protocol["n_a"], config.protocol["n_b"],
                                                       config.protocol["gamma3"])
        else:
            couplings = dipolar_couplings(build_chain(n), FieldOrientation((0.0, 0.0, 1.0)))
        geometry = None
    else:
        geometry = build_geometry(config.geometry)
        couplings = dipolar_couplings(geometry, FieldOrientation.along(config.geometry["field"]),
                                      config.geometry["g"])
    n = couplings.n
    hdz = dipolar_hamiltonian(couplings, "dz")
    hdy = dipolar_hamiltonian(couplings, "dy")
    hdx = dipolar_hamiltonian(couplings, "dx")
    scale = max(1.0, np.abs(hdz).max())
    checks = [
        _check("hermitian", np.abs(hdz - hdz.conj().T).max() / scale, 1e-12),
        _check("traceless", abs(np.trace(hdz)) / scale, 1e-10),
        _check("sum_dx_dy_dz_zero", np.abs(hdx + hdy + hdz).max() / scale, 1e-12),
        _check("commutes_with_total_Iz", np.abs(hdz @ total_spin_op(n, "z") - total_spin_op(n, "z") @ hdz).max() / scale, 1e-12),
        _check("x_pulse_maps_dz_to_dy", np.abs(toggle_conjugate(hdz, PulseEvent("x")) - hdy).max() / scale, 1e-12),
        _check("y_pulse_maps_dz_to_dx", np.abs(toggle_conjugate(hdz, PulseEvent("y")) - hdx).max() / scale, 1e-12),
        _check("unitarity", unitarity_error(expm_hermitian(hdz, 1.0)), 1e-10),
    ]
    if geometry is not None and geometry.n > 1 and geometry.is_collinear():
        e1, e2, _ = geometry.frame()
        h_par = dipolar_hamiltonian(dipolar_couplings(geometry, FieldOrientation.along(e1), 1.0))
        h_perp = dipolar_hamiltonian(dipolar_couplings(geometry, FieldOrientation.along(e2), 1.0))
        checks.append(_check("chain_parallel_is_minus_two_perpendicular",
                             np.abs(h_par + 2 * h_perp).max() / max(1.0, np.abs(h_par).max()), 1e-12))
    if geometry is not None and geometry.is_coplanar():
        d1, d2, d3 = three_orientation_couplings(geometry, config.geometry["g"])
        checks.append(_check("three_orientation_sum_zero", np.abs(d1.values + d2.values + d3.values).max(), 1e-12))
    if config.scheme == "frozen_subsystem":
        part = Partition.split(n, min(config.protocol["size_a"], n))
        h_a, h_b, h_ab = partition_hamiltonian(couplings, part)
        checks.append(_check("partition_sum", np.abs(h_a + h_b + h_ab - hdz).max() / scale, 1e-12))
    if config.scheme in SCHEMES or config.scheme in ("frozen_subsystem",):
        tag = config.scheme if config.scheme in SCHEMES else config.protocol["storage"]
        if tag != "chain_reversal" and geometry is not None and (tag != "planar_three_orientation" or geometry.is_coplanar()):
            sched = storage_schedule(ReversalScheme(tag, 0.01), couplings, geometry)
            checks.append(_check("zeroth_order_average_vanishes", np.abs(zeroth_order(sched)).max() / scale, 1e-12))
    return checks


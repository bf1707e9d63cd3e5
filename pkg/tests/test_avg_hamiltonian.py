import warnings

import numpy as np
import pytest
from scipy.linalg import expm, logm

from spinstore.avg_hamiltonian import (
    RegimeWarning,
    error_scaling_probe,
    first_order,
    fit_loglog_slope,
    local_field,
    scaling_fit_from_points,
    toggling_frame_segments,
    zeroth_order,
)
from spinstore.errors import InvalidArgument
from spinstore.evolution import Schedule, compose_schedule
from spinstore.operators import dipolar_hamiltonian
from spinstore.protocols import pulse_storage_schedule
from spinstore.spin_system import CouplingMatrix, FieldOrientation, build_chain, dipolar_couplings


def random_hermitian(d, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


def oracle_first_order(pairs):
    # explicit double loop, no prefix sums
    period = sum(t for _, t in pairs)
    acc = 0
    for k in range(len(pairs)):
        for l in range(k):
            a, b = pairs[k][0] * pairs[k][1], pairs[l][0] * pairs[l][1]
            acc = acc + a @ b - b @ a
    return -0.5j / period * acc


@pytest.fixture
def chain4():
    return dipolar_couplings(build_chain(4), FieldOrientation((0.0, 0.0, 1.0)))


class TestMagnus:
    def test_zeroth_order_time_average(self, rng):
        a, b = random_hermitian(4, rng), random_hermitian(4, rng)
        s = Schedule.from_pairs([(a, 1.0), (b, 3.0)])
        np.testing.assert_allclose(zeroth_order(s), (a + 3 * b) / 4, atol=1e-14)

    def test_first_order_matches_double_loop(self, rng):
        pairs = [(random_hermitian(4, rng), t) for t in (0.2, 0.5, 0.1, 0.3)]
        np.testing.assert_allclose(first_order(Schedule.from_pairs(pairs)), oracle_first_order(pairs), atol=1e-13)

    def test_pulse_cycle_zeroth_order_vanishes(self, chain4):
        for model in ("ideal_toggling", "explicit_pulses"):
            assert np.abs(zeroth_order(pulse_storage_schedule(chain4, 0.1, model))).max() < 1e-12

    def test_palindrome_first_order_vanishes(self, chain4):
        assert np.abs(first_order(pulse_storage_schedule(chain4, 0.1))).max() < 1e-12

    def test_first_order_flips_under_time_reversal(self, rng):
        pairs = [(random_hermitian(4, rng), t) for t in (0.2, 0.5, 0.1)]
        fwd = first_order(Schedule.from_pairs(pairs))
        back = first_order(Schedule.from_pairs(pairs[::-1]))
        np.testing.assert_allclose(back, -fwd, atol=1e-13)

    def test_two_segment_log_agrees_to_third_order(self, rng):
        a, b = random_hermitian(4, rng), random_hermitian(4, rng)
        errs = []
        for tau in (0.02, 0.01):
            s = Schedule.from_pairs([(a, tau), (b, tau)])
            period = 2 * tau
            h_eff = 1j * logm(compose_schedule(s)) / period
            approx = zeroth_order(s) + first_order(s)
            errs.append(np.abs(h_eff - approx).max() * period)
        # residual per cycle is O(tau^3)
        assert errs[0] / errs[1] == pytest.approx(8, rel=0.05)

    def test_toggling_segments_match_conjugation(self, chain4):
        explicit = toggling_frame_segments(pulse_storage_schedule(chain4, 0.1, "explicit_pulses"))
        ideal = toggling_frame_segments(pulse_storage_schedule(chain4, 0.1, "ideal_toggling"))
        for (h1, t1), (h2, t2) in zip(explicit, ideal):
            assert t1 == t2 and np.abs(h1 - h2).max() < 1e-12


class TestLocalField:
    def test_two_spins(self):
        assert local_field(CouplingMatrix([[0, 0.5], [0.5, 0]])) == pytest.approx(0.5)

    def test_three_chain(self):
        c = dipolar_couplings(build_chain(3), FieldOrientation((0.0, 0.0, 1.0)))
        assert local_field(c) == pytest.approx(np.sqrt((4 * 1 + 2 / 64) / 3))


class TestFit:
    def test_exact_power_law(self):
        x = np.geomspace(0.01, 0.1, 5)
        slope, intercept = fit_loglog_slope(x, 3 * x**2)
        assert slope == pytest.approx(2.0) and intercept == pytest.approx(np.log(3))

    def test_floor_drops_points(self):
        assert fit_loglog_slope([1, 2, 3], [1e-20, 1e-20, 1.0]) == (None, None)

    def test_probe_input_validation(self):
        u = lambda t: np.eye(2)
        with pytest.raises(InvalidArgument):
            error_scaling_probe(u, [0.1, 1.0], 1.0)
        with pytest.raises(InvalidArgument):
            error_scaling_probe(u, [0.1, 0.5, 0.9], 1.0)
        with pytest.raises(InvalidArgument):
            error_scaling_probe(u, [0.1, 0.05, 1.0], 1.0)

    def test_exact_scheme_has_no_slope(self):
        fit = error_scaling_probe(lambda t: np.eye(4), [0.01, 0.05, 0.1], 1.0)
        assert fit.exact and fit.slope is None

    def test_regime_warning(self):
        with pytest.warns(RegimeWarning):
            fit = scaling_fit_from_points([0.1, 1, 10], [1e-3, 1e-2, 1e-1], omega_loc=1.0)
        assert not fit.regime_ok and fit.regime_violations == [1.0, 10.0]

    def test_no_warning_inside_regime(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            fit = scaling_fit_from_points([0.01, 0.03, 0.1], [1e-4, 9e-4, 1e-2], omega_loc=1.0, period_per_tau=3)
        assert fit.regime_ok and fit.slope == pytest.approx(2.0)

    def test_pulse_sequence_slope(self, chain4):
        w = local_field(chain4)
        taus = np.geomspace(0.03, 0.3, 6) / (6 * w)
        fit = error_scaling_probe(lambda t: compose_schedule(pulse_storage_schedule(chain4, t)), taus, w, 6.0)
        assert fit.slope == pytest.approx(3.0, abs=0.1)
        trace_fit = error_scaling_probe(lambda t: compose_schedule(pulse_storage_schedule(chain4, t)), taus, w, 6.0,
                                        metric="trace")
        assert trace_fit.slope == pytest.approx(6.0, abs=0.2)


def test_exact_fit_outside_regime_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit = scaling_fit_from_points([0.5, 1.0, 5.0], [0.0, 1e-15, 0.0], omega_loc=1.0, period_per_tau=3)
    assert fit.exact and not fit.regime_ok

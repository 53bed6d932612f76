import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from linkbudget import (
    ModeResults,
    NoiseConfig,
    SinrPair,
    TransmitPowers,
    capacity,
    evaluate_modes,
    per_antenna_noise,
    simulate_symbols,
    sinr_downlink_precoded,
    sinr_full_ideal,
    sinr_half_duplex,
    sinr_reference,
    sinr_uplink_precoded,
    to_db,
)
from coupling import build_h_self, synthesize_coupling
from geometry import build_planar_array
from precoder import desired_signal_power, make_plan, residual_si_power, search_partition, svd_decompose

P_N = 1e-3


def _random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestNoise:
    def test_dynamic_range_dominates(self):
        assert per_antenna_noise(1e-6, 0.0, NoiseConfig(1e-13, 1e-5)) == pytest.approx(1e-11)

    def test_no_dynamic_range(self):
        assert per_antenna_noise(5.0, 3.0, NoiseConfig(1e-13, 0.0)) == 1e-13

    def test_tie(self):
        assert per_antenna_noise(1e-13, 1e-13, NoiseConfig(1e-13, 0.5)) == 1e-13

    def test_vector(self):
        out = per_antenna_noise(np.array([0.0, 1.0, 10.0]), np.array([0.0, 0.0, 10.0]), NoiseConfig(0.05, 0.1))
        assert_allclose(out, [0.05, 0.1, 2.0])

    @pytest.mark.parametrize("p_n, k", [(0.0, 0.0), (-1.0, 0.0), (1.0, -0.1)])
    def test_bad_config(self, p_n, k):
        with pytest.raises(ValueError):
            NoiseConfig(p_n, k)

    def test_bad_powers(self):
        with pytest.raises(ValueError):
            TransmitPowers(0.0, 1.0)


class TestCapacity:
    def test_examples(self):
        assert capacity(1.0, "full") == 1.0
        assert capacity(3.0, "half") == 1.0
        assert capacity(0.0, "precoded") == 0.0

    def test_half_is_half(self):
        for sinr in (0.1, 2.0, 1e4):
            assert capacity(sinr, "half") == pytest.approx(0.5 * capacity(sinr, "reference"))

    def test_monotone(self):
        values = [capacity(s) for s in np.linspace(0.0, 100.0, 50)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_rejects(self):
        with pytest.raises(ValueError):
            capacity(1.0, "simplex")
        with pytest.raises(ValueError):
            capacity(-0.5)
        with pytest.raises(ValueError):
            capacity(float("nan"))

    def test_db(self):
        assert to_db(100.0) == pytest.approx(20.0)
        assert to_db(0.0) == float("-inf")


class TestPrecoded:
    def test_uplink_collapses_without_coupling(self):
        rng = np.random.default_rng(0)
        h_up = _random_complex(rng, (3, 2))
        svd = svd_decompose(np.zeros((3, 2)))
        plan = make_plan(svd, 3, 2)
        sinr = sinr_uplink_precoded(h_up, svd, plan, TransmitPowers(0.5, 1.0), NoiseConfig(P_N))
        assert sinr == pytest.approx(0.5 * np.linalg.norm(h_up) ** 2 / (3 * P_N), rel=1e-12)

    def test_literal_noise_reading(self):
        h_up = np.ones((2, 1), dtype=complex)
        svd = svd_decompose(np.zeros((2, 2)))
        plan = make_plan(svd, 2, 2)
        sinr = sinr_uplink_precoded(h_up, svd, plan, TransmitPowers(1.0, 1.0), NoiseConfig(P_N),
                                    noise_reading="literal")
        assert sinr == pytest.approx(2.0 / (2 * P_N ** 2), rel=1e-12)
        with pytest.raises(ValueError):
            sinr_uplink_precoded(h_up, svd, plan, TransmitPowers(1.0, 1.0), NoiseConfig(P_N),
                                 noise_reading="amplitude")

    def test_uplink_zero_channel(self):
        svd = svd_decompose(_random_complex(np.random.default_rng(1), (3, 3)))
        sinr = sinr_uplink_precoded(np.zeros((3, 2)), svd, make_plan(svd, 2, 2), TransmitPowers(1.0, 1.0),
                                    NoiseConfig(P_N, 1e-3))
        assert sinr == 0.0

    def test_strict_uplink_uses_closed_form(self):
        h_up = np.array([[0.0], [1.0]], dtype=complex)
        svd = svd_decompose(np.diag([2.0, 1.0]))
        plan = make_plan(svd, 1, 1)
        args = (h_up, svd, plan, TransmitPowers(1.0, 1.0), NoiseConfig(P_N))
        assert sinr_uplink_precoded(*args) == pytest.approx(1.0 / (1.0 + P_N), rel=1e-12)
        assert sinr_uplink_precoded(*args, strict=True) == pytest.approx(1.0 / P_N, rel=1e-12)

    def test_downlink_with_identity_v(self):
        h_down = np.array([[1.0, 2.0j, 0.5], [0.3, 0.0, 1.0]])
        svd = svd_decompose(np.diag([0.3, 0.2, 0.1]))
        plan = make_plan(svd, 3, 3)
        sinr = sinr_downlink_precoded(h_down, svd, plan, TransmitPowers(1.0, 2.0), NoiseConfig(P_N))
        assert sinr == pytest.approx(2.0 * np.linalg.norm(h_down) ** 2 / (2 * P_N), rel=1e-12)

    def test_downlink_zero_channel(self):
        svd = svd_decompose(np.eye(2))
        assert sinr_downlink_precoded(np.zeros((1, 2)), svd, make_plan(svd, 2, 1), TransmitPowers(1.0, 1.0),
                                      NoiseConfig(P_N)) == 0.0

    def test_coupling_lowers_uplink(self):
        rng = np.random.default_rng(6)
        h_up = _random_complex(rng, (4, 2))
        quiet = svd_decompose(np.zeros((4, 4)))
        loud = svd_decompose(0.5 * _random_complex(rng, (4, 4)))
        args = (TransmitPowers(1.0, 1.0), NoiseConfig(P_N))
        assert (sinr_uplink_precoded(h_up, loud, make_plan(loud, 4, 4), *args)
                < sinr_uplink_precoded(h_up, quiet, make_plan(quiet, 4, 4), *args))


class TestComparisonModes:
    def test_reference_asymptote(self):
        rng = np.random.default_rng(2)
        h_up, h_down = _random_complex(rng, (3, 2)), _random_complex(rng, (2, 3))
        h_self = 1e6 * _random_complex(rng, (3, 3))
        powers = TransmitPowers(0.3, 1.0)
        up, _ = sinr_reference(h_up, h_down, h_self, powers, NoiseConfig(1e-13))
        expected = 0.3 * np.linalg.norm(h_up) ** 2 / (1.0 * np.linalg.norm(h_self) ** 2)
        assert up == pytest.approx(expected, rel=1e-6)

    def test_reference_without_coupling_is_ideal(self):
        rng = np.random.default_rng(3)
        h_up, h_down = _random_complex(rng, (3, 2)), _random_complex(rng, (2, 3))
        powers, noise = TransmitPowers(0.3, 1.0), NoiseConfig(P_N, 1e-2)
        ref = sinr_reference(h_up, h_down, np.zeros((3, 3)), powers, noise)
        ideal = sinr_full_ideal(h_up, h_down, powers, noise)
        assert ref.up == pytest.approx(ideal.up, rel=1e-12)
        assert ref.down == pytest.approx(ideal.down, rel=1e-12)

    def test_full_ideal_without_dynamic_range(self):
        h_up = np.array([[1.0, 0.5], [0.0, 2.0], [1.0j, 0.0]])
        up, _ = sinr_full_ideal(h_up, h_up.T, TransmitPowers(2.0, 1.0), NoiseConfig(P_N))
        assert up == pytest.approx(2.0 * np.linalg.norm(h_up) ** 2 / (3 * P_N), rel=1e-12)

    def test_full_ideal_symmetry(self):
        h = _random_complex(np.random.default_rng(4), (2, 2))
        up, down = sinr_full_ideal(h, h, TransmitPowers(1.0, 1.0), NoiseConfig(P_N, 1e-3))
        assert up == pytest.approx(down, rel=1e-12)

    def test_half_duplex_vector(self):
        h = np.full(4, 0.2 + 0.1j)
        column = sinr_half_duplex(h, h, TransmitPowers(1.0, 1.0), NoiseConfig(P_N))
        matrix = sinr_half_duplex(h[:, None], h[None, :], TransmitPowers(1.0, 1.0), NoiseConfig(P_N))
        assert column == matrix
        # four elements carry twice the signal of the two a full-duplex side gets
        assert column.up * 4 * P_N == pytest.approx(2 * np.linalg.norm(h[:2]) ** 2, rel=1e-12)
        assert column.down * P_N == pytest.approx(np.linalg.norm(h) ** 2, rel=1e-12)

    def test_half_duplex_zero(self):
        out = sinr_half_duplex(np.zeros((4, 1)), np.zeros((1, 4)), TransmitPowers(1.0, 1.0), NoiseConfig(P_N))
        assert out == SinrPair(0.0, 0.0)

    def test_strict_readings(self):
        rng = np.random.default_rng(5)
        h_up, h_down = _random_complex(rng, (2, 2)), _random_complex(rng, (2, 2))
        h_self = 0.1 * _random_complex(rng, (2, 2))
        powers, noise = TransmitPowers(0.25, 1.0), NoiseConfig(P_N)

        ref = sinr_reference(h_up, h_down, h_self, powers, noise)
        ref_strict = sinr_reference(h_up, h_down, h_self, powers, noise, strict=True)
        assert ref_strict.up == ref.up
        assert ref_strict.down / ref.down == pytest.approx(
            np.linalg.norm(h_up) ** 2 / np.linalg.norm(h_down) ** 2, rel=1e-12)

        full = sinr_full_ideal(h_up, h_down, powers, noise, strict=True)
        assert full.up == full.down

        half = sinr_half_duplex(h_up, h_down, powers, noise)
        half_strict = sinr_half_duplex(h_up, h_down, powers, noise, strict=True)
        assert half_strict.up == half.up
        assert half_strict.down == pytest.approx(half.down * 0.25, rel=1e-12)


class TestBestPartitionBeatsReference:
    LAM = 0.1

    @pytest.mark.parametrize("seed", range(20))
    def test_synthetic_coupling(self, seed):
        rng = np.random.default_rng(seed)
        geometry = build_planar_array(4, 2, 0.5 * self.LAM, 0.5 * self.LAM)
        s = synthesize_coupling(geometry, self.LAM, rng.uniform(0.05, 0.5), rng.uniform(1.0, 2.0))
        h_self = build_h_self(s, [1, 3, 5, 7], [2, 4, 6, 8]).entries
        h_up, h_down = _random_complex(rng, (4, 2)), _random_complex(rng, (2, 4))
        powers, noise = TransmitPowers(rng.uniform(0.1, 1.0), 1.0), NoiseConfig(P_N, 1e-4)

        best = search_partition(h_self, h_up, h_down, powers, noise)[0]
        ref = sinr_reference(h_up, h_down, h_self, powers, noise)
        # full selection reproduces the reference, so equality holds up to rounding
        assert best.sinr_up >= ref.up * (1 - 1e-9)
        assert best.sinr_down <= ref.down * (1 + 1e-9)
        assert best.sum_capacity >= (capacity(ref.up) + capacity(ref.down)) * (1 - 1e-9)


class TestEvaluateModes:
    @pytest.fixture
    def channels(self):
        rng = np.random.default_rng(12)
        return dict(
            h_up=_random_complex(rng, (3, 2)),
            h_down=_random_complex(rng, (2, 2)),
            h_self=0.05 * _random_complex(rng, (3, 2)),
            h_up_half=_random_complex(rng, (5, 2)),
            h_down_half=_random_complex(rng, (2, 5)),
        )

    def _modes(self, ch, powers, noise):
        svd = svd_decompose(ch["h_self"])
        plan = make_plan(svd, 2, 1)
        return evaluate_modes(ch["h_up"], ch["h_down"], ch["h_self"], svd, plan,
                              ch["h_up_half"], ch["h_down_half"], powers, noise)

    def test_every_mode_present(self, channels):
        res = self._modes(channels, TransmitPowers(0.2, 1.0), NoiseConfig(P_N, 1e-3))
        assert set(res.sinr) == {"precoded", "reference", "full", "half"}
        assert res.p_s.shape == res.p_i.shape == res.p_n.shape == (3,)
        assert np.all(res.p_n >= P_N)
        caps = res.capacities()
        assert caps["half"].up == pytest.approx(0.5 * math.log2(1 + res.sinr["half"].up))
        assert caps["precoded"].down == pytest.approx(math.log2(1 + res.sinr["precoded"].down))

    def test_homogeneous_in_powers(self, channels):
        base = self._modes(channels, TransmitPowers(0.2, 1.0), NoiseConfig(P_N, 1e-3))
        scaled = self._modes(channels, TransmitPowers(1.4, 7.0), NoiseConfig(7 * P_N, 1e-3))
        for mode in base.sinr:
            assert_allclose(scaled.sinr[mode], base.sinr[mode], rtol=1e-12)

    def test_capacities_of_empty(self):
        assert ModeResults(np.zeros(1), np.zeros(1), np.zeros(1)).capacities() == {}


class TestSimulateSymbols:
    N = 100_000

    @pytest.fixture
    def scenario(self):
        rng = np.random.default_rng(31)
        h_up = 0.1 * _random_complex(rng, (2, 2))
        h_self = 0.05 * _random_complex(rng, (2, 2))
        return h_up, h_self, TransmitPowers(0.5, 1.0), NoiseConfig(1e-3, 1e-2)

    def test_matches_analytic_terms(self, scenario):
        h_up, h_self, powers, noise = scenario
        svd = svd_decompose(h_self)
        plan = make_plan(svd, 1, 1)
        est = simulate_symbols(h_up, h_self, plan, powers, noise, self.N, 2024)
        p_s = desired_signal_power(plan, h_up, powers.p_up_w)
        p_i = residual_si_power(svd, plan, powers.p_down_w)
        exact = sinr_uplink_precoded(h_up, svd, plan, powers, noise)
        assert est.p_s == pytest.approx(p_s, rel=0.02)
        assert est.p_i == pytest.approx(p_i, rel=0.02)
        assert est.sinr == pytest.approx(exact, rel=0.02)
        assert est.n_symbols == self.N

    def test_full_selection_interference(self, scenario):
        h_up, h_self, powers, noise = scenario
        est = simulate_symbols(h_up, h_self, None, powers, noise, self.N, 7)
        assert est.p_i == pytest.approx(powers.p_down_w * np.linalg.norm(h_self) ** 2, rel=0.02)
        assert abs(est.p_i - powers.p_down_w * np.linalg.norm(h_self) ** 2) < 5 * est.se_i

    def test_no_coupling(self, scenario):
        h_up, _, powers, noise = scenario
        est = simulate_symbols(h_up, np.zeros((2, 2)), None, powers, noise, 1000, 1)
        assert est.p_i <= 3 * est.se_i

    def test_deterministic(self, scenario):
        h_up, h_self, powers, noise = scenario
        a = simulate_symbols(h_up, h_self, None, powers, noise, 5000, 99, block_size=1024)
        b = simulate_symbols(h_up, h_self, None, powers, noise, 5000, 99, block_size=1024)
        assert a == b

    def test_rejects(self, scenario):
        h_up, h_self, powers, noise = scenario
        with pytest.raises(ValueError):
            simulate_symbols(h_up, h_self, None, powers, noise, 0, 1)
        with pytest.raises(ValueError):
            simulate_symbols(h_up, np.zeros((3, 2)), None, powers, noise, 10, 1)


class TestSimulateSymbolsFourByFour:
    N = 100_000

    @pytest.fixture(scope="class")
    def channels(self):
        rng = np.random.default_rng(44)
        h_up = 0.1 * _random_complex(rng, (4, 2))
        h_self = 0.05 * _random_complex(rng, (4, 4))
        return h_up, h_self, svd_decompose(h_self)

    @pytest.mark.parametrize("n_up, n_down", [(2, 2), (3, 1), (1, 3), (4, 4)])
    def test_matches_analytic_terms(self, channels, n_up, n_down):
        h_up, h_self, svd = channels
        powers, noise = TransmitPowers(0.5, 1.0), NoiseConfig(1e-3, 1e-2)
        plan = make_plan(svd, n_up, n_down)
        est = simulate_symbols(h_up, h_self, plan, powers, noise, self.N, 10 * n_up + n_down)

        p_s = desired_signal_power(plan, h_up, powers.p_up_w)
        p_i = residual_si_power(svd, plan, powers.p_down_w)
        assert abs(est.p_s - p_s) <= 3 * est.se_s
        assert abs(est.p_i - p_i) <= 3 * est.se_i
        assert est.p_s == pytest.approx(p_s, rel=0.02)
        assert est.p_i == pytest.approx(p_i, rel=0.02)
        assert est.sinr == pytest.approx(sinr_uplink_precoded(h_up, svd, plan, powers, noise), rel=0.03)

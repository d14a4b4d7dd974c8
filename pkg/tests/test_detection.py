import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from flipofdm.detection import (
    FIT_ONSET_DB,
    THRESHOLD_TABLE_COLUMNS,
    DetectorConfig,
    approx_threshold,
    closed_form_report,
    combine_pair,
    conditional_clip_moments,
    conditional_sigma2_eq,
    conditional_sigma2_nc,
    half_normal_pdf,
    local_threshold_minimum,
    monte_carlo_sigma2_eq,
    negative_clip,
    noise_report,
    optimal_threshold,
    sigma2_eq,
    sigma2_nc,
    sigma2_nc_closed_form,
    snr_at_threshold,
    snr_nc,
    snr_tot,
    threshold_filter,
    threshold_table,
)
from flipofdm.flip_ofdm import FlipTransceiver, hermitian_frame
from flipofdm.numerics import DomainError, Rng, integrate_1d
from flipofdm.qam import modulate
from flipofdm.sim import SweepConfig, run_sweep, snr_grid
from flipofdm.spectral import forward_dft, inverse_dft


def sigma_x_for(snr_db, sigma_z=1.0):
    return sigma_z * math.sqrt(2.0 * 10 ** (snr_db / 10.0))


def gain_db(snr_lin, snr_db):
    return 10 * math.log10(snr_lin) - snr_db


def sampled_pairs(snr_db, trials, seed, sigma_z=1.0):
    """Half-normal signal with two clipped noisy observations, as in one subframe pair."""
    gen = np.random.default_rng(seed)
    x = np.abs(gen.normal(0.0, sigma_x_for(snr_db, sigma_z), trials))
    y1 = np.maximum(x + gen.normal(0.0, sigma_z, trials), 0.0)
    y2 = np.maximum(gen.normal(0.0, sigma_z, trials), 0.0)
    return x, y1, y2


def reference_filter(y1, y2, c):
    """Threshold rule written out case by case, independent of the package."""
    d = y1 - y2
    keep_first = d > c
    keep_second = d < -c
    return np.select([keep_first, keep_second], [y1, -y2], default=d)


def half_mse(estimate, x):
    e = 0.5 * (estimate - x) ** 2
    return e.mean(), e.std(ddof=1) / math.sqrt(e.size)


class TestStages:
    def test_negative_clip(self):
        np.testing.assert_array_equal(negative_clip([-1.0, 0.0, 2.0]), [0.0, 0.0, 2.0])

    @given(st.lists(st.floats(0, 1e9), max_size=20))
    def test_clip_idempotent_on_nonnegative(self, values):
        np.testing.assert_array_equal(negative_clip(values), values)

    def test_clipped_gaussian_second_moment(self):
        z = Rng(40).generator.normal(size=1_000_000)
        assert np.mean(negative_clip(z) ** 2) == pytest.approx(0.5, rel=0.01)

    @pytest.mark.parametrize("y1,y2,expected", [(5.0, 1.0, 5.0), (3.0, 1.0, 2.0), (1.0, 5.0, -5.0)])
    def test_threshold_cases(self, y1, y2, expected):
        assert threshold_filter(y1, y2, 3.0) == expected

    @given(
        st.lists(st.tuples(st.floats(0, 1e6), st.floats(0, 1e6)), min_size=1, max_size=30),
        st.floats(0, 1e3),
    )
    def test_threshold_matches_case_by_case_rule(self, pairs, c):
        y1, y2 = map(np.array, zip(*pairs))
        np.testing.assert_array_equal(threshold_filter(y1, y2, c), reference_filter(y1, y2, c))

    @given(st.lists(st.tuples(st.floats(0, 1e6), st.floats(0, 1e6)), min_size=1, max_size=30))
    def test_infinite_threshold_is_plain_difference(self, pairs):
        y1, y2 = map(np.array, zip(*pairs))
        np.testing.assert_array_equal(threshold_filter(y1, y2, math.inf), y1 - y2)

    def test_negative_threshold(self):
        with pytest.raises(DomainError):
            threshold_filter(1.0, 0.0, -0.1)

    def test_combine_pair_stage_order(self):
        y1 = np.array([-1.0, 4.0, 0.5])
        y2 = np.array([2.0, -3.0, 0.2])
        np.testing.assert_array_equal(combine_pair(y1, y2, "plain"), y1 - y2)
        np.testing.assert_array_equal(combine_pair(y1, y2, "clipper"), [-2.0, 4.0, 0.3])
        np.testing.assert_array_equal(combine_pair(y1, y2, "clipper_plus_threshold", 1.0), [-2.0, 4.0, 0.3])
        with pytest.raises(DomainError):
            combine_pair(y1, y2, "threshold_only")


class TestDetectorConfig:
    def test_defaults(self):
        d = DetectorConfig()
        assert d.stages == "plain" and not d.uses_threshold
        assert d.threshold() == math.inf

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"stages": "magic"},
            {"threshold_policy": "oracle"},
            {"threshold_policy": "fixed"},
            {"threshold_policy": "fixed", "threshold_value": -1.0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            DetectorConfig(**kwargs)

    def test_fixed_is_in_noise_units(self):
        d = DetectorConfig("clipper_plus_threshold", "fixed", 1.5).with_noise(2.0, 10.0)
        assert d.threshold_over_sigma_z() == 1.5
        assert d.threshold() == 3.0

    def test_disabled(self):
        d = DetectorConfig("clipper_plus_threshold", "disabled").with_noise(1.0, 10.0)
        assert d.threshold() == math.inf

    def test_approximate_uses_curve_fit(self):
        sx = sigma_x_for(20.0, 0.5)
        d = DetectorConfig("clipper_plus_threshold", "approximate").with_noise(0.5, sx)
        assert d.threshold_over_sigma_z() == pytest.approx(approx_threshold(20.0), rel=1e-9)

    def test_optimal_needs_scales(self):
        with pytest.raises(DomainError):
            DetectorConfig("clipper_plus_threshold").threshold()


class TestConditionalMoments:
    @staticmethod
    def oracle(x, s):
        """Direct integrals of ([x+z]^+ - x)^k against the noise density, in noise units."""
        a = x / s
        pdf = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)  # noqa: E731
        tail = 0.5 * math.erfc(a / math.sqrt(2))
        kw = dict(epsabs=1e-15, epsrel=1e-13, limit=200)
        m2 = integrate.quad(lambda u: u * u * pdf(u), -a, 40.0, **kw)[0] + a * a * tail
        # E[max(u, -a)] = E[max(0, -a - u)] since E[u] = 0; avoids cancellation
        m1 = integrate.quad(lambda u: (-a - u) * pdf(u), -40.0, -a, **kw)[0]
        return m2 * s * s, m1 * s

    def test_at_zero(self):
        m2, m1 = conditional_clip_moments(0.0, 2.0)
        assert m2 == pytest.approx(2.0, rel=1e-14)
        assert m1 == pytest.approx(2.0 / math.sqrt(2 * math.pi), rel=1e-14)

    def test_far_from_zero(self):
        m2, m1 = conditional_clip_moments(10.0, 1.0)
        assert abs(m2 - 1.0) < 1e-8
        assert abs(m1) < 1e-8

    def test_at_unit_signal_and_noise(self):
        m2, m1 = conditional_clip_moments(1.0, 1.0)
        assert m2 == pytest.approx(0.75802927548, abs=1e-10)
        assert m1 == pytest.approx(0.08331547059, abs=1e-10)
        z = Rng(13).generator.normal(size=10_000_000)
        e = np.maximum(1.0 + z, 0.0) - 1.0
        assert abs(m2 - np.mean(e * e)) < 3 * np.std(e * e) / math.sqrt(z.size)
        assert abs(m1 - np.mean(e)) < 3 * np.std(e) / math.sqrt(z.size)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 8.0), st.floats(0.05, 20.0))
    def test_against_direct_integration(self, x_over_s, s):
        expected = self.oracle(x_over_s * s, s)
        got = conditional_clip_moments(x_over_s * s, s)
        assert got[0] == pytest.approx(expected[0], rel=1e-10, abs=1e-13 * s * s)
        assert got[1] == pytest.approx(expected[1], rel=1e-10, abs=1e-13 * s)

    def test_domain(self):
        with pytest.raises(DomainError):
            conditional_clip_moments(-0.1, 1.0)
        with pytest.raises(DomainError):
            conditional_clip_moments(1.0, 0.0)

    def test_conditional_noise_at_zero_signal(self):
        assert conditional_sigma2_nc(0.0, 1.0) == pytest.approx(0.5 - 1 / (2 * math.pi), rel=1e-14)


class TestSigma2Nc:
    def test_half_normal_density_mass(self):
        val = integrate_1d(lambda x: half_normal_pdf(x, 3.0), 0.0, math.inf, scale=3.0)
        assert val == pytest.approx(1.0, rel=1e-9)

    def test_small_signal_limit(self):
        assert sigma2_nc(1.0, 1e-4) == pytest.approx(0.5 - 1 / (2 * math.pi), rel=1e-3)
        x = np.zeros(4_000_000)
        _, y1, y2 = sampled_pairs(-300, x.size, 1)
        mean, se = half_mse(y1 - y2, x)
        assert abs(mean - (0.5 - 1 / (2 * math.pi))) < 3 * se

    def test_large_signal_limit(self):
        assert sigma2_nc(1.0, 100.0) == pytest.approx(0.75, rel=0.01)
        assert sigma2_nc(1.0, 1e4) == pytest.approx(0.75, rel=1e-3)

    def test_scales_with_noise_power(self):
        assert sigma2_nc(3.0, 6.0) == pytest.approx(9.0 * sigma2_nc(1.0, 2.0), rel=1e-9)

    @pytest.mark.parametrize("snr_db", [0.0, 5.0, 10.0, 20.0, 30.0])
    def test_against_monte_carlo(self, snr_db):
        x, y1, y2 = sampled_pairs(snr_db, 4_000_000, 100 + int(snr_db))
        mean, se = half_mse(y1 - y2, x)
        assert abs(sigma2_nc(1.0, sigma_x_for(snr_db)) - mean) < 3 * se

    def test_closed_form_large_signal_limit(self):
        assert sigma2_nc_closed_form(1.0, 1e4) == pytest.approx(0.5, rel=1e-3)

    def test_closed_form_disagrees_with_quadrature(self):
        sx = sigma_x_for(20.0)
        assert abs(sigma2_nc_closed_form(1.0, sx) - sigma2_nc(1.0, sx)) > 0.1


class TestSnrNc:
    @pytest.mark.parametrize("snr_db", np.arange(0.0, 31.0, 2.0))
    def test_never_below_plain(self, snr_db):
        assert snr_nc(1.0, sigma_x_for(snr_db)) >= 10 ** (snr_db / 10)

    def test_high_snr_gain(self):
        assert gain_db(snr_nc(1.0, 1e4), 10 * math.log10(1e8 / 2)) == pytest.approx(10 * math.log10(4 / 3), abs=0.01)

    @pytest.mark.parametrize("snr_db", [0.0, 2.0, 5.0])
    def test_low_snr_gain_exceeds_high_snr_gain(self, snr_db):
        assert gain_db(snr_nc(1.0, sigma_x_for(snr_db)), snr_db) > 10 * math.log10(4 / 3)

    def test_equal_scales(self):
        val = snr_nc(1.0, 1.0)
        assert val > 0.5 and math.isfinite(val)


SNRS = [5.0, 10.0, 20.0, 30.0]
C_GRID = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 20.0]


@pytest.mark.slow
class TestSigma2EqMonteCarlo:
    @pytest.mark.parametrize("snr_db", SNRS)
    def test_grid(self, snr_db):
        x, y1, y2 = sampled_pairs(snr_db, 10_000_000, 500 + int(snr_db))
        sx = sigma_x_for(snr_db)
        bad = []
        for c in C_GRID:
            mean, se = half_mse(reference_filter(y1, y2, c), x)
            val = sigma2_eq(c, 1.0, sx)
            if abs(val - mean) >= 3 * se:
                bad.append((c, val, mean, se))
        assert not bad


class TestSigma2Eq:
    def test_infinite_threshold_is_clipper(self):
        sx = sigma_x_for(12.0)
        assert sigma2_eq(math.inf, 1.0, sx) == sigma2_nc(1.0, sx)

    @pytest.mark.parametrize("snr_db", [0.0, 5.0, 10.0, 15.0])
    def test_large_threshold_limit(self, snr_db):
        sx = sigma_x_for(snr_db)
        assert sigma2_eq(20.0, 1.0, sx) == pytest.approx(sigma2_nc(1.0, sx), rel=0.005)

    @pytest.mark.parametrize("snr_db", [20.0, 30.0])
    def test_limit_needs_threshold_above_signal_scale(self, snr_db):
        sx = sigma_x_for(snr_db)
        assert sigma2_eq(15.0 * sx, 1.0, sx) == pytest.approx(sigma2_nc(1.0, sx), rel=1e-6)

    def test_reference_value(self):
        # nested adaptive quadrature of the same region integrals, computed offline
        assert sigma2_eq(0.9192, 1.0, sigma_x_for(10.0)) == pytest.approx(0.6161323035, rel=1e-7)

    def test_zero_threshold(self):
        x, y1, y2 = sampled_pairs(10.0, 2_000_000, 9)
        mean, se = half_mse(reference_filter(y1, y2, 0.0), x)
        assert abs(sigma2_eq(0.0, 1.0, sigma_x_for(10.0)) - mean) < 3 * se

    def test_conditional_large_signal(self):
        # with x far above both c and the noise, only the first sample's noise remains
        assert float(conditional_sigma2_eq(1.0, 1.0, np.array([60.0]))[0]) == pytest.approx(0.5, rel=1e-6)

    def test_scale_invariance(self):
        assert sigma2_eq(2.0, 2.0, 8.0) == pytest.approx(4.0 * sigma2_eq(1.0, 1.0, 4.0), rel=1e-8)

    def test_negative_threshold(self):
        with pytest.raises(DomainError):
            sigma2_eq(-1.0, 1.0, 1.0)

    def test_package_monte_carlo_agrees(self):
        sx = sigma_x_for(20.0)
        mean, se = monte_carlo_sigma2_eq(1.0, 1.0, sx, 2_000_000, Rng(5))
        assert abs(mean - sigma2_eq(1.0, 1.0, sx)) < 3 * se
        assert snr_at_threshold(1.0, 1.0, sx) == pytest.approx(sx * sx / (2 * sigma2_eq(1.0, 1.0, sx)))


class TestOptimalThreshold:
    def test_below_onset_is_infinite(self):
        assert optimal_threshold(3.0, 1.0, sigma_x_for(3.0)) == math.inf

    def test_20db_beats_clipper(self):
        sx = sigma_x_for(20.0)
        c = optimal_threshold(20.0, 1.0, sx)
        assert math.isfinite(c)
        assert sigma2_eq(c, 1.0, sx) < sigma2_nc(1.0, sx)

    @pytest.mark.parametrize("snr_db", [10.0, 15.0, 20.0, 25.0])
    def test_close_to_curve_fit(self, snr_db):
        c = optimal_threshold(snr_db, 1.0, sigma_x_for(snr_db))
        assert c == pytest.approx(approx_threshold(snr_db), rel=0.10)

    def test_scales_with_noise(self):
        sz = 0.25
        c = optimal_threshold(20.0, sz, sigma_x_for(20.0, sz))
        assert c == pytest.approx(sz * optimal_threshold(20.0, 1.0, sigma_x_for(20.0)), rel=1e-9)

    @pytest.mark.parametrize("snr_db", [8.0, 20.0])
    def test_no_grid_point_is_better(self, snr_db):
        sx = sigma_x_for(snr_db)
        best = sigma2_eq(optimal_threshold(snr_db, 1.0, sx), 1.0, sx)
        grid = [sigma2_eq(c, 1.0, sx) for c in np.linspace(0.05, 20.0, 80)]
        assert best <= min(grid) + 1e-9

    def test_inconsistent_snr(self):
        with pytest.raises(DomainError):
            optimal_threshold(10.0, 1.0, 1.0)

    def test_local_minimum_is_interior_at_high_snr(self):
        res = local_threshold_minimum(1.0, sigma_x_for(20.0))
        assert not res.at_boundary
        assert res.argmin == pytest.approx(0.7695, abs=2e-3)


class TestApproxThreshold:
    def test_onset(self):
        assert approx_threshold(FIT_ONSET_DB) == pytest.approx(0.75 * 0.9336 / 0.03341, rel=1e-12)
        assert approx_threshold(4.5) == pytest.approx(20.957, abs=1e-3)

    def test_one_db_above_onset(self):
        assert approx_threshold(5.5) == pytest.approx(0.75 * 1.9336 / 1.03341, rel=1e-12)

    def test_below_onset(self):
        assert approx_threshold(4.49) == math.inf

    def test_decreasing(self):
        vals = [approx_threshold(s) for s in np.arange(5.0, 31.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestSnrTot:
    @pytest.mark.parametrize("snr_db", [0.0, 3.0, 4.4])
    def test_reduces_to_clipper_below_onset(self, snr_db):
        sx = sigma_x_for(snr_db)
        assert snr_tot(1.0, sx) == snr_nc(1.0, sx)

    @pytest.mark.parametrize("snr_db", [25.0, 30.0])
    def test_high_snr_gain(self, snr_db):
        assert gain_db(snr_tot(1.0, sigma_x_for(snr_db)), snr_db) == pytest.approx(3.0, abs=0.5)

    def test_intermediate_gain(self):
        sx = sigma_x_for(15.0)
        g_clip = gain_db(snr_nc(1.0, sx), 15.0)
        g_tot = gain_db(snr_tot(1.0, sx), 15.0)
        assert g_clip < g_tot < 3.0

    @pytest.mark.parametrize("snr_db", [6.0, 12.0, 18.0, 24.0, 30.0])
    def test_report_invariants(self, snr_db):
        rep = noise_report(snr_db)
        assert rep.sigma2_eq <= rep.sigma2_nc + 1e-9
        assert rep.sigma2_eq > 0 and rep.sigma2_nc > 0
        assert rep.snr_tot >= rep.snr_nc
        assert rep.gain_total_db >= rep.gain_clipper_db


class TestTables:
    def test_threshold_table(self):
        rows = threshold_table([3.0, 4.0, 5.0, 10.0, 30.0])
        assert all(tuple(r) == THRESHOLD_TABLE_COLUMNS for r in rows)
        assert rows[0]["c_opt_over_sigma_z"] == math.inf and rows[0]["c_approx_over_sigma_z"] == math.inf
        assert math.isfinite(rows[3]["c_opt_over_sigma_z"]) and math.isfinite(rows[3]["c_approx_over_sigma_z"])
        assert rows[-1]["gain_total_db"] == pytest.approx(3.0, abs=0.5)

    def test_closed_form_report(self):
        rows = closed_form_report([5.0, 20.0], trials=400_000, seed=3)
        for r in rows:
            assert abs(r["quadrature_vs_mc_sigmas"]) < 3
        assert abs(rows[1]["closed_form_vs_mc_sigmas"]) > 10


class TestReceivedNoise:
    """Frequency-domain view of the detector output on real Flip-OFDM frames."""

    @staticmethod
    def frames(snr_db, stages, count=400, seed=8):
        trx = FlipTransceiver(512)
        sx = math.sqrt(trx.signal_power())
        sz = sx / math.sqrt(2 * 10 ** (snr_db / 10))
        r = Rng(seed)
        payload = modulate(r.child(0).bits(count, trx.payload_size * 4), 16)
        x = inverse_dft(hermitian_frame(payload, 512)).real
        gen = r.child(1).generator
        pos = np.maximum(x, 0) + gen.normal(0, sz, x.shape)
        neg = np.maximum(-x, 0) + gen.normal(0, sz, x.shape)
        det = DetectorConfig(stages).with_noise(sz, sx)
        spectrum = forward_dft(det.combine(pos, neg))
        return hermitian_frame(payload, 512), spectrum, sz, sx

    @pytest.mark.parametrize("snr_db", [8.0, 16.0])
    def test_bin_error_power_matches_clipper_analysis(self, snr_db):
        frame, spectrum, sz, sx = self.frames(snr_db, "clipper")
        per_bin = np.mean(np.abs(spectrum - frame) ** 2)
        assert per_bin == pytest.approx(2 * sigma2_nc(sz, sx) / 512, rel=0.01)

    def test_clipper_shrinks_payload_but_threshold_does_not(self):
        # the clipper error is partly a signal-proportional bias (gain below 1 on
        # the payload bins); it is counted as noise power by the analysis
        gains = {}
        for stages in ("clipper", "clipper_plus_threshold"):
            frame, spectrum, _, _ = self.frames(12.0, stages)
            bins = slice(1, 256)
            gains[stages] = np.vdot(frame[:, bins], spectrum[:, bins]).real / np.vdot(frame[:, bins], frame[:, bins]).real
        assert gains["clipper"] < 0.96
        assert gains["clipper_plus_threshold"] > 0.99


@pytest.mark.slow
class TestBerAfterDetection:
    """Eq.-18-style BER at the stage SNR against simulated 16-QAM Flip-OFDM."""

    @pytest.mark.parametrize("stages", ["clipper", "clipper_plus_threshold"])
    def test_within_three_standard_errors(self, stages):
        cfg = SweepConfig(
            "flip",
            16,
            512,
            0,
            snr_grid(8, 18, 2),
            min_bit_errors=200,
            max_bits=10_000_000,
            detector=DetectorConfig(stages),
            seed=2011,
        )
        failures = []
        for rec in run_sweep(cfg):
            if rec.ber_analytic < 1e-5:
                continue
            z = (rec.ber_sim - rec.ber_analytic) / rec.stderr
            if abs(z) >= 3:
                failures.append((rec.snr_db, rec.ber_sim, rec.ber_analytic, round(z, 2)))
        assert not failures, f"points outside 3 standard errors (snr, sim, analytic, z): {failures}"

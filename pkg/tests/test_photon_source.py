"""Photon statistics: pmf construction, heralding laws, calibrations."""

import math

import numpy as np
import pytest

from pdqkd.errors import ParameterError, TruncationError, UndefinedRatioError
from pdqkd.photon_source import (PhotonNumberPmf, SourceParams, calibrate_eta_a,
                                 calibrate_mu0_from_car, g2_of_pmf,
                                 joint_signal_pmf, joint_signal_pmf_series,
                                 multimode_thermal_pmf, poisson_pmf, thermal_pmf,
                                 trigger_prob_given_n)

ETA_S_192DB = 0.012022644346174132  # 10^(-19.2/10)


def tv_distance(a: PhotonNumberPmf, b: PhotonNumberPmf) -> float:
    n = max(a.n_max, b.n_max) + 1
    pa = np.zeros(n)
    pb = np.zeros(n)
    pa[: a.n_max + 1] = a.probs
    pb[: b.n_max + 1] = b.probs
    return 0.5 * (np.abs(pa - pb).sum() + a.tail_mass + b.tail_mass)


class TestPoissonPmf:
    def test_vacuum(self):
        pmf = poisson_pmf(0.0)
        assert pmf.probs[0] == 1.0
        assert pmf.tail_mass == 0.0

    def test_paper_mu_50km(self):
        # closed-form p0 at the 50 km operating point
        pmf = poisson_pmf(0.028)
        assert pmf.probs[0] == pytest.approx(math.exp(-0.028), rel=1e-14)

    def test_mean_matches_input(self):
        mu = 0.028 / ETA_S_192DB  # 2.329, the pump-side mean
        pmf = poisson_pmf(mu)
        assert pmf.mean() == pytest.approx(mu, abs=1e-9)

    def test_negative_mu_rejected(self):
        with pytest.raises(ParameterError):
            poisson_pmf(-0.1)

    def test_truncation_error_above_cap(self):
        with pytest.raises(TruncationError):
            poisson_pmf(400.0)  # tail cannot reach 1e-12 by n=512


class TestThermalPmf:
    def test_vacuum(self):
        assert thermal_pmf(0.0).probs[0] == 1.0

    def test_closed_form_mu1(self):
        pmf = thermal_pmf(1.0)
        assert pmf.probs[0] == pytest.approx(0.5, rel=1e-14)
        assert pmf.probs[1] == pytest.approx(0.25, rel=1e-14)

    @pytest.mark.parametrize("mu", [0.05, 0.4, 1.0, 3.7])
    def test_g2_is_2(self, mu):
        assert g2_of_pmf(thermal_pmf(mu)) == pytest.approx(2.0, abs=1e-6)

    def test_negative_mu_rejected(self):
        with pytest.raises(ParameterError):
            thermal_pmf(-1e-9)


class TestMultimodeThermalPmf:
    def test_single_mode_identical_to_thermal(self):
        a = multimode_thermal_pmf(0.8, 1)
        b = thermal_pmf(0.8)
        assert a.n_max == b.n_max
        assert np.allclose(a.probs, b.probs, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_matches_explicit_convolution(self, k):
        # oracle: literal K-fold convolution of the single-mode law
        mu = 1.3
        single = thermal_pmf(mu / k, n_max=80)
        conv = single.probs
        for _ in range(k - 1):
            conv = np.convolve(conv, single.probs)
        nb = multimode_thermal_pmf(mu, k, n_max=80)
        assert np.allclose(nb.probs, conv[:81], rtol=0, atol=1e-10)

    @pytest.mark.parametrize("k", [1, 2, 10, 350])
    def test_mean_and_g2(self, k):
        mu = 2.33
        pmf = multimode_thermal_pmf(mu, k)
        assert pmf.mean() == pytest.approx(mu, rel=1e-9)
        assert g2_of_pmf(pmf) == pytest.approx(1.0 + 1.0 / k, abs=1e-6)

    def test_tv_to_poisson_decreases_with_k(self):
        mu = 2.33
        target = poisson_pmf(mu)
        tvs = [tv_distance(multimode_thermal_pmf(mu, k), target)
               for k in (1, 2, 5, 10, 50, 350)]
        assert all(b < a for a, b in zip(tvs, tvs[1:]))

    def test_k350_closer_than_k10(self):
        mu = 2.33
        target = poisson_pmf(mu)
        assert (tv_distance(multimode_thermal_pmf(mu, 350), target)
                < tv_distance(multimode_thermal_pmf(mu, 10), target))

    def test_zero_modes_rejected(self):
        with pytest.raises(ParameterError):
            multimode_thermal_pmf(1.0, 0)


class TestPmfInvariants:
    @pytest.mark.parametrize("seed", range(5))
    def test_random_pmfs_normalized(self, seed):
        rng = np.random.default_rng(seed)
        mu = float(rng.uniform(0.0, 8.0))
        k = int(rng.integers(1, 40))
        for pmf in (poisson_pmf(mu), thermal_pmf(mu), multimode_thermal_pmf(mu, k)):
            assert np.all(pmf.probs >= 0.0)
            assert math.fsum(pmf.probs.tolist()) + pmf.tail_mass == pytest.approx(1.0, abs=1e-12)
            assert pmf.tail_mass < 1e-12

    def test_unbalanced_pmf_rejected(self):
        with pytest.raises(ParameterError):
            PhotonNumberPmf(np.array([0.5, 0.4]), 1, 0.0)


class TestTriggerProb:
    def test_vacuum_never_triggers(self):
        s = SourceParams(mu0=1.0, eta_s=0.5, eta_a=0.3)
        p_n, p_t = trigger_prob_given_n(0, s)
        assert p_n == 1.0 and p_t == 0.0

    def test_perfect_heralding(self):
        s = SourceParams(mu0=1.0, eta_s=0.5, eta_a=1.0)
        for i in (1, 2, 7):
            assert trigger_prob_given_n(i, s)[1] == 1.0

    def test_single_pair_value(self):
        s = SourceParams(mu0=2.329, eta_s=ETA_S_192DB, eta_a=0.0295)
        p_n, p_t = trigger_prob_given_n(1, s)
        assert p_n == pytest.approx(0.9705, rel=1e-12)

    def test_alice_dark_counts_factor(self):
        s = SourceParams(mu0=1.0, eta_s=0.5, eta_a=0.3, y0_alice=1e-3)
        p_n, _ = trigger_prob_given_n(2, s)
        assert p_n == pytest.approx((1 - 1e-3) * 0.7 ** 2, rel=1e-12)


class TestJointSignalPmf:
    def setup_method(self):
        self.s = SourceParams(mu0=2.329, eta_s=0.01202, eta_a=0.0295)

    def test_no_heralding_arm(self):
        s = SourceParams(mu0=1.7, eta_s=0.3, eta_a=0.0)
        p_n = joint_signal_pmf(s, "N")
        p_t = joint_signal_pmf(s, "T")
        marginal = poisson_pmf(s.mu, p_n.n_max)
        assert np.allclose(p_n.probs, marginal.probs, atol=1e-15)
        assert np.all(p_t.probs == 0.0)

    def test_series_matches_closed_form(self):
        for outcome in ("N", "T"):
            closed = joint_signal_pmf(self.s, outcome, n_max=20)
            series = joint_signal_pmf_series(self.s, outcome, n_max=20)
            assert np.allclose(closed.probs, series, rtol=0, atol=1e-10)

    def test_branches_sum_to_poisson_marginal(self):
        p_n = joint_signal_pmf(self.s, "N")
        p_t = joint_signal_pmf(self.s, "T", n_max=p_n.n_max)
        marginal = poisson_pmf(self.s.mu, p_n.n_max)
        assert np.allclose(p_n.probs + p_t.probs, marginal.probs, rtol=0, atol=1e-10)

    def test_total_mass_is_one(self):
        p_n = joint_signal_pmf(self.s, "N")
        p_t = joint_signal_pmf(self.s, "T")
        total = (p_n.support_mass + p_n.tail_mass + p_t.support_mass + p_t.tail_mass)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_trigger_mass_matches_table_rate(self):
        # trigger fraction N_A/N = 3.99e9 / 6e10 at the 50 km point
        rate = 3.99e9 / 6e10
        mu0 = 0.028 / ETA_S_192DB
        s = SourceParams(mu0=mu0, eta_s=ETA_S_192DB,
                         eta_a=calibrate_eta_a(rate, mu0))
        p_t = joint_signal_pmf(s, "T")
        assert p_t.norm == pytest.approx(rate, rel=1e-10)
        assert 1.0 - math.exp(-s.mu0 * s.eta_a) == pytest.approx(rate, rel=1e-10)

    def test_marginal_mean_is_mu(self):
        p_n = joint_signal_pmf(self.s, "N")
        p_t = joint_signal_pmf(self.s, "T", n_max=p_n.n_max)
        ns = np.arange(p_n.n_max + 1)
        mean = float(ns @ (p_n.probs + p_t.probs))
        assert mean == pytest.approx(self.s.mu, abs=1e-9)


class TestG2:
    def test_poisson_is_1(self):
        for mu in (0.01, 0.4, 3.0):
            assert g2_of_pmf(poisson_pmf(mu)) == pytest.approx(1.0, abs=1e-9)

    def test_single_photon_is_0(self):
        pmf = PhotonNumberPmf(np.array([0.0, 1.0]), 1, 0.0)
        assert g2_of_pmf(pmf) == 0.0

    def test_zero_mean_rejected(self):
        with pytest.raises(UndefinedRatioError):
            g2_of_pmf(poisson_pmf(0.0))


class TestCalibrations:
    def test_eta_a_zero_rate(self):
        assert calibrate_eta_a(0.0, 2.3) == 0.0

    def test_eta_a_paper_numbers(self):
        assert calibrate_eta_a(0.0665, 2.329) == pytest.approx(0.029546722198522862, rel=1e-12)

    def test_eta_a_round_trip(self):
        mu0, rate = 2.329, 0.0665
        eta_a = calibrate_eta_a(rate, mu0)
        s = SourceParams(mu0=mu0, eta_s=0.012, eta_a=eta_a)
        assert joint_signal_pmf(s, "T").norm == pytest.approx(rate, abs=1e-10)

    def test_eta_a_clamped(self):
        assert calibrate_eta_a(0.99, 0.5) == 1.0

    def test_eta_a_domain(self):
        with pytest.raises(ParameterError):
            calibrate_eta_a(1.0, 2.0)

    def test_mu0_from_car(self):
        assert calibrate_mu0_from_car(2.0) == 1.0
        assert calibrate_mu0_from_car(1e9) == pytest.approx(0.0, abs=1e-8)
        with pytest.raises(ParameterError):
            calibrate_mu0_from_car(1.0)


class TestSourceParams:
    def test_mu_is_product(self):
        s = SourceParams(mu0=2.329, eta_s=ETA_S_192DB, eta_a=0.03)
        assert s.mu == pytest.approx(2.329 * ETA_S_192DB, rel=1e-15)

    def test_range_checks(self):
        with pytest.raises(ParameterError):
            SourceParams(mu0=-1.0, eta_s=0.5, eta_a=0.5)
        with pytest.raises(ParameterError):
            SourceParams(mu0=1.0, eta_s=1.5, eta_a=0.5)
        with pytest.raises(ParameterError):
            SourceParams(mu0=1.0, eta_s=0.5, eta_a=0.5, y0_alice=1.0)

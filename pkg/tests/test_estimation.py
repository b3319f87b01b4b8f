from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from apsp.channel import SystemConfig, Tap, UTProfile, adcrm_to_sfcrm, sample_adcrm
from apsp.estimation import (
    ApspChannelEstimator,
    analytic_mse_ce,
    analytic_mse_ce_with_delay,
    analytic_mse_cp,
    decorrelate_all,
    decorrelate_observation,
    empirical_mse,
    empirical_mse_sweep,
    interference_denominator,
    interference_power,
    mmse_estimate,
    per_entry_mse,
    predict,
    synthesize_received,
)
from apsp.pilots import PilotSchedule, make_basic_pilot
from apsp.scenarios import make_adcpms, make_profiles
from apsp.utils import stream_rng

CFG = SystemConfig(M=8, Nc=32, Ng=4, K=3, rho_tr=10.0)


def static(nu=0.0):
    return UTProfile(nu, (Tap(0, 1.0, 0.0, 0.1),))


def random_adcpms(K, cfg, seed, density=0.5):
    rng = np.random.default_rng(seed)
    mask = rng.random((K, cfg.M, cfg.Ng)) < density
    return mask * rng.uniform(0.1, 3.0, (K, cfg.M, cfg.Ng))


def test_zero_channels_zero_noise_give_zero_output():
    sch = PilotSchedule(1, 32, (0, 5, 9))
    Y = synthesize_received(np.zeros((3, 8, 4)), sch, make_basic_pilot(32), CFG, sigma_ztr=0)
    assert Y.shape == (8, 32) and not np.any(Y)


def test_single_ut_noiseless_recovery():
    cfg = replace(CFG, K=1)
    H = sample_adcrm(np.ones((8, 4)), 0)
    for Q, phi in ((1, 7), (3, 5)):
        sch = PilotSchedule(Q, 32, (phi,))
        basic = make_basic_pilot(32)
        Y = synthesize_received(H[None], sch, basic, cfg, sigma_ztr=0)
        assert Y.shape == (8, 32 * Q)
        np.testing.assert_allclose(decorrelate_observation(Y, 0, sch, basic, cfg), H, atol=1e-9)


def test_interference_lands_at_shifted_column():
    H1 = np.zeros((8, 4), complex)
    H2 = np.zeros((8, 4), complex)
    H2[5, 0] = 2.0 - 1.0j
    d = 2
    sch = PilotSchedule(1, 32, (3, 3 + d))
    basic = make_basic_pilot(32)
    Y = synthesize_received(np.stack([H1, H2]), sch, basic, replace(CFG, K=2), sigma_ztr=0)
    obs = decorrelate_observation(Y, 0, sch, basic, replace(CFG, K=2))
    expected = np.zeros((8, 4), complex)
    expected[5, d] = H2[5, 0]
    np.testing.assert_allclose(obs, expected, atol=1e-9)


def test_different_groups_are_orthogonal():
    cfg = replace(CFG, K=2)
    H = sample_adcrm(np.ones((2, 8, 4)), 4)
    sch = PilotSchedule(2, 32, (0, 1))  # same shift, different groups
    basic = make_basic_pilot(32)
    Y = synthesize_received(H, sch, basic, cfg, sigma_ztr=0)
    np.testing.assert_allclose(decorrelate_all(Y, sch, basic, cfg), H, atol=1e-9)


def test_decorrelate_all_matches_per_ut():
    sch = PilotSchedule(2, 32, (0, 3, 6))
    basic = make_basic_pilot(32)
    H = sample_adcrm(np.ones((3, 8, 4)), 1)
    Y = synthesize_received(H, sch, basic, CFG, rng=2)
    all_obs = decorrelate_all(Y, sch, basic, CFG)
    for k in range(3):
        np.testing.assert_allclose(all_obs[k], decorrelate_observation(Y, k, sch, basic, CFG),
                                   atol=1e-12)
    with pytest.raises(IndexError):
        decorrelate_observation(Y, 3, sch, basic, CFG)
    with pytest.raises(ValueError):
        decorrelate_observation(Y[:, :32], 0, sch, basic, CFG)


def test_synthesize_dimension_checks():
    sch = PilotSchedule(1, 32, (0, 1))
    with pytest.raises(ValueError):
        synthesize_received(np.zeros((3, 8, 4)), sch, make_basic_pilot(32), CFG)
    with pytest.raises(ValueError):
        synthesize_received(np.zeros((2, 8, 4)), sch, make_basic_pilot(16), CFG)


def test_received_power_accounting():
    cfg = replace(CFG, K=2)
    omega = np.full((2, 8, 4), 0.5)
    sch = PilotSchedule(1, 32, (0, 11))
    basic = make_basic_pilot(32)
    powers = []
    for t in range(300):
        H = sample_adcrm(omega, stream_rng(1, t, 0))
        Y = synthesize_received(H, sch, basic, cfg, stream_rng(1, t, 1))
        powers.append(np.mean(np.abs(Y) ** 2))
    # sum_k sigma E||G_k||^2 / (M Nc) + sigma_z
    expected = cfg.sigma_xtr * omega.sum() / (8 * 32) + cfg.sigma_ztr
    assert np.mean(powers) == pytest.approx(expected, rel=0.03)


def test_denominator_single_ut_and_positivity():
    omega = random_adcpms(1, CFG, 0)
    sch = PilotSchedule(2, 32, (3,))
    den = interference_denominator(0, sch, omega, CFG)
    np.testing.assert_allclose(den, omega[0] + 1 / (10.0 * 2))
    sch3 = PilotSchedule(1, 32, (0, 1, 2))
    omegas = random_adcpms(3, CFG, 1)
    for k in range(3):
        assert np.all(interference_denominator(k, sch3, omegas, CFG) >= 1 / 10.0)


def test_interference_power_matches_pairwise_sum():
    from apsp.channel import shifted_power_matrix

    omegas = random_adcpms(4, CFG, 2)
    sch = PilotSchedule(2, 32, (0, 5, 6, 13))
    got = interference_power(sch, omegas, CFG)
    for k in range(4):
        ref = np.zeros((8, 4))
        for kp in range(4):
            if sch.groups[kp] == sch.groups[k]:
                ref += shifted_power_matrix(omegas[kp], sch.shifts[kp] - sch.shifts[k], CFG)
        np.testing.assert_allclose(got[k], ref, atol=1e-12)


def test_disjoint_supports_denominator_on_support():
    omegas = np.zeros((2, 8, 4))
    omegas[0, :, 0:2] = 1.0
    omegas[1, :, 0:2] = 2.0
    sch = PilotSchedule(1, 32, (0, 2))
    den = interference_denominator(0, sch, omegas, CFG)
    np.testing.assert_allclose(den[:, :2], omegas[0, :, :2] + 0.1)


def test_mmse_estimate_shrinkage():
    omega = np.zeros((1, 2, 2))
    omega[0, 0, 0] = 1.0
    cfg = SystemConfig(M=2, Nc=8, Ng=2, K=1, rho_tr=1.0)
    obs = np.full((2, 2), 4.0 + 2.0j)
    est = mmse_estimate(obs, 0, PilotSchedule(1, 8, (0,)), omega, cfg)
    assert est[0, 0] == pytest.approx(0.5 * (4.0 + 2.0j))
    assert est[0, 1] == 0 and est[1, 1] == 0


def test_predict_scaling():
    est = np.ones((2, 2)) * (1 + 1j)
    cfg = SystemConfig()
    np.testing.assert_array_equal(predict(est, static(300.0), 0, cfg), est)
    np.testing.assert_array_equal(predict(est, static(0.0), 9, cfg), est)
    rho = static(300.0).tcf(4, cfg.Tsym)
    np.testing.assert_allclose(predict(est, static(300.0), 4, cfg), rho * est)


def test_two_identical_single_entry_uts():
    omega = np.zeros((2, 2, 2))
    w = 3.0
    omega[:, 1, 1] = w
    cfg = SystemConfig(M=2, Nc=8, Ng=2, K=2, rho_tr=5.0)
    rep = analytic_mse_ce(PilotSchedule(1, 8, (4, 4)), omega, cfg)
    np.testing.assert_allclose(rep.per_ut, w - w * w / (2 * w + 1 / 5.0))


def test_single_ut_total_equals_bound_and_limits():
    omega = random_adcpms(1, CFG, 3)
    rep = analytic_mse_ce(PilotSchedule(1, 32, (0,)), omega, CFG)
    assert rep.total == rep.bound_total
    high = analytic_mse_ce(PilotSchedule(1, 32, (0,)), omega, replace(CFG, rho_tr=1e12))
    assert high.total < 1e-9 * omega.sum()


def test_delay_and_prediction_reduce_to_estimation_at_zero_lag():
    omegas = random_adcpms(3, CFG, 4)
    sch = PilotSchedule(1, 32, (0, 1, 2))
    profiles = [static(500.0)] * 3
    ce = analytic_mse_ce(sch, omegas, CFG)
    np.testing.assert_allclose(analytic_mse_ce_with_delay(sch, omegas, profiles, 0, CFG).per_ut, ce.per_ut)
    np.testing.assert_allclose(analytic_mse_cp(sch, omegas, profiles, 0, CFG).per_ut, ce.per_ut)


def test_half_correlation_gives_channel_power():
    omegas = random_adcpms(2, CFG, 5)
    sch = PilotSchedule(1, 32, (0, 1))
    # J0(x) = 1/2 here; choose nu so one lag hits it
    x_half = 1.5211440576687651
    Tsym = CFG.Tsym
    profile = static(x_half / (2 * np.pi * Tsym))
    assert profile.tcf(1, Tsym) == pytest.approx(0.5, abs=1e-12)
    rep = analytic_mse_ce_with_delay(sch, omegas, [profile] * 2, 1, CFG)
    assert rep.total == pytest.approx(omegas.sum(), rel=1e-10)
    # beyond, the stale estimate is worse than no estimate
    worse = analytic_mse_ce_with_delay(sch, omegas, [profile] * 2, 2, CFG)
    assert worse.total > omegas.sum()
    assert worse.total >= worse.bound_total


def test_prediction_tends_to_prior_when_uncorrelated():
    omegas = random_adcpms(2, CFG, 6)
    sch = PilotSchedule(1, 32, (0, 1))
    x0 = 2.404825557695773  # first zero of J0
    profile = static(x0 / (2 * np.pi * CFG.Tsym))
    rep = analytic_mse_cp(sch, omegas, [profile] * 2, 1, CFG)
    assert rep.total == pytest.approx(omegas.sum(), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 60), st.floats(0.0, 2000.0))
def test_prediction_never_worse_than_stale_estimate(seed, lag, nu):
    omegas = random_adcpms(3, CFG, seed)
    rng = np.random.default_rng(seed)
    sch = PilotSchedule(1, 32, tuple(int(p) for p in rng.integers(0, 32, 3)))
    profiles = [static(nu)] * 3
    cp = analytic_mse_cp(sch, omegas, profiles, lag, CFG)
    ce = analytic_mse_ce_with_delay(sch, omegas, profiles, lag, CFG)
    assert np.all(cp.per_ut <= ce.per_ut + 1e-12 * (1 + np.abs(ce.per_ut)))
    assert cp.total >= cp.bound_total - 1e-9 * abs(cp.bound_total)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0), st.floats(1.0, 10.0))
def test_mse_non_increasing_in_snr(seed, rho, factor):
    omegas = random_adcpms(3, CFG, seed)
    sch = PilotSchedule(1, 32, (0, 1, 3))
    low = analytic_mse_ce(sch, omegas, replace(CFG, rho_tr=rho)).total
    high = analytic_mse_ce(sch, omegas, replace(CFG, rho_tr=rho * factor)).total
    assert high <= low * (1 + 1e-12)


def test_multi_symbol_noise_gain():
    omega = random_adcpms(1, CFG, 7)
    two = analytic_mse_ce(PilotSchedule(2, 32, (0,)), omega, replace(CFG, rho_tr=3.0))
    one = analytic_mse_ce(PilotSchedule(1, 32, (0,)), omega, replace(CFG, rho_tr=6.0))
    assert two.total == one.total


def test_per_entry_mse_kinds():
    omega = np.array([[2.0]])
    den = np.array([[4.0]])
    assert per_entry_mse("CE", omega, den)[0, 0] == pytest.approx(1.0)
    assert per_entry_mse("CE-delay", omega, den, 0.25)[0, 0] == pytest.approx(2.5)
    assert per_entry_mse("CP", omega, den, 0.5)[0, 0] == pytest.approx(1.75)
    with pytest.raises(ValueError):
        per_entry_mse("XX", omega, den)


def test_report_normalisation():
    omegas = random_adcpms(3, CFG, 8)
    rep = analytic_mse_ce(PilotSchedule(1, 32, (0, 4, 8)), omegas, CFG)
    assert rep.total == pytest.approx(rep.per_ut.sum())
    assert rep.normalized_total == pytest.approx(rep.total / (32 * 3))
    assert rep.normalized_per_ut.mean() == pytest.approx(rep.normalized_total)


def test_empirical_noise_free_single_ut_is_zero():
    cfg = replace(CFG, K=1, rho_tr=1e12)
    omega = random_adcpms(1, cfg, 9)
    rep = empirical_mse("CE", 1, PilotSchedule(1, 32, (0,)), [static()], cfg, 0, omega)
    assert rep.total < 1e-9 * omega.sum()


def test_empirical_matches_analytic_and_standard_error_scaling():
    cfg = SystemConfig(M=16, Nc=64, Ng=8, K=3, rho_tr=10.0)
    profiles = make_profiles("UMi", cfg, seed=2)
    omegas = make_adcpms(profiles, cfg)
    sch = PilotSchedule(1, 64, (0, 3, 20))
    small = empirical_mse_sweep(sch, omegas, profiles, cfg, 200, seed=1, delta_ells=(2,))
    large = empirical_mse_sweep(sch, omegas, profiles, cfg, 800, seed=1, delta_ells=(2,))
    for key, rep in large.items():
        assert rep.total == pytest.approx(rep.analytic_total, rel=4 * rep.stderr / rep.total + 1e-3)
        assert rep.bound_total <= rep.analytic_total * (1 + 1e-12)
    ratio = small[("CE", 0)].stderr / large[("CE", 0)].stderr
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_orthogonality_principle():
    cfg = SystemConfig(M=8, Nc=32, Ng=4, K=2, rho_tr=3.0)
    omegas = np.full((2, 8, 4), 1.0)
    sch = PilotSchedule(1, 32, (0, 1))
    est = ApspChannelEstimator(sch, rho_tr=3.0).fit(omegas)
    basic = est.basic_
    acc = np.zeros((2, 8, 4), complex)
    n = 400
    for t in range(n):
        H = sample_adcrm(omegas, stream_rng(5, t, 0))
        Y = synthesize_received(H, sch, basic, cfg, stream_rng(5, t, 1))
        H_hat = est.predict(est.transform(Y))
        acc += H_hat * np.conj(H - H_hat)
    assert np.abs(acc / n).max() < 0.1


def test_empirical_deterministic_across_workers():
    cfg = SystemConfig(M=8, Nc=32, Ng=4, K=2, rho_tr=10.0)
    omegas = random_adcpms(2, cfg, 10)
    sch = PilotSchedule(1, 32, (0, 1))
    profiles = [static(800.0)] * 2
    a = empirical_mse_sweep(sch, omegas, profiles, cfg, 9, seed=3, delta_ells=(1,), n_jobs=1)
    b = empirical_mse_sweep(sch, omegas, profiles, cfg, 9, seed=3, delta_ells=(1,), n_jobs=4)
    for key in a:
        np.testing.assert_array_equal(a[key].per_ut, b[key].per_ut)


def test_empirical_rejects_bad_arguments():
    omegas = random_adcpms(1, CFG, 0)
    with pytest.raises(ValueError):
        empirical_mse("CE", 0, PilotSchedule(1, 32, (0,)), [static()], CFG, 0, omegas)
    with pytest.raises(ValueError):
        empirical_mse("XX", 1, PilotSchedule(1, 32, (0,)), [static()], CFG, 0, omegas)


def test_estimator_api():
    omegas = random_adcpms(3, CFG, 11)
    sch = PilotSchedule(1, 32, (0, 9, 18))
    est = ApspChannelEstimator(schedule=sch, rho_tr=10.0)
    assert est.get_params()["rho_tr"] == 10.0
    cloned = clone(est)
    assert cloned.schedule == sch and not hasattr(cloned, "shrinkage_")
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((3, 8, 4)))
    est.fit(omegas)
    H = sample_adcrm(omegas, 0)
    Y = synthesize_received(H, sch, est.basic_, CFG, rng=1)
    obs = est.transform(Y)
    np.testing.assert_allclose(est.predict(obs), [mmse_estimate(obs[k], k, sch, omegas, CFG)
                                                  for k in range(3)])
    assert est.score(obs, H) <= 0
    np.testing.assert_allclose(est.predict_at_lag(obs, 0.5), 0.5 * est.predict(obs))
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 8, 4)))
    with pytest.raises(ValueError):
        ApspChannelEstimator().fit(omegas)


def test_sfcrm_estimate_has_same_error():
    # the unitary map keeps the estimation error energy
    cfg = SystemConfig(M=8, Nc=32, Ng=4, K=1)
    H = sample_adcrm(np.ones((8, 4)), 0)
    H_hat = 0.7 * H
    err_ad = np.linalg.norm(H - H_hat)
    err_sf = np.linalg.norm(adcrm_to_sfcrm(H, cfg) - adcrm_to_sfcrm(H_hat, cfg))
    assert err_sf == pytest.approx(err_ad)

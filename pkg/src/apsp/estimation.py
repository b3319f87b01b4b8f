"""Pilot reception, element-wise MMSE channel estimation and prediction,
closed-form MSE expressions with their lower bounds, and a Monte Carlo
harness that checks them.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import os

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .channel import SystemConfig, adcrm_to_sfcrm, evolve_adcrm, sample_adcrm, tcf
from .pilots import make_basic_pilot, make_pilot
from .utils import as_generator, check_adcpms, stream_rng

__all__ = [
    "MseReport",
    "synthesize_received",
    "decorrelate_observation",
    "decorrelate_all",
    "interference_power",
    "interference_denominator",
    "mmse_estimate",
    "predict",
    "per_entry_mse",
    "analytic_mse_ce",
    "analytic_mse_ce_with_delay",
    "analytic_mse_cp",
    "empirical_mse",
    "empirical_mse_sweep",
    "n_workers",
    "ApspChannelEstimator",
]

KINDS = ("CE", "CE-delay", "CP")
WORKERS_ENV = "APSP_WORKERS"

# stream tags for stream_rng keys
_TAG_CHANNEL, _TAG_EVOLVE, _TAG_NOISE = 0, 1, 2


@dataclass
class MseReport:
    """Per-UT sum MSE and its lower bound.

    Raw sums are stored; ``normalized_*`` divide by ``Nc * K``. Monte Carlo
    reports also carry the analytic per-UT values and the standard error of
    the total.
    """

    kind: str
    per_ut: np.ndarray
    bound_per_ut: np.ndarray
    delta_ell: int = 0
    normalization: float = 1.0
    stderr: float = field(default=float("nan"))
    analytic_per_ut: np.ndarray = None

    @property
    def total(self):
        return float(np.sum(self.per_ut))

    @property
    def bound_total(self):
        return float(np.sum(self.bound_per_ut))

    @property
    def analytic_total(self):
        return float("nan") if self.analytic_per_ut is None else float(np.sum(self.analytic_per_ut))

    @property
    def normalized_total(self):
        return self.total / self.normalization

    @property
    def normalized_bound(self):
        return self.bound_total / self.normalization

    @property
    def normalized_per_ut(self):
        return np.asarray(self.per_ut) * (len(self.per_ut) / self.normalization)


def n_workers(n_jobs=None):
    """Worker count from the argument, else ``$APSP_WORKERS``, else 1."""
    if n_jobs is None:
        n_jobs = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(n_jobs))


def _noise_level(schedule, cfg):
    return 1.0 / (cfg.rho_tr * schedule.energy_gain)


def synthesize_received(channels, schedule, basic, cfg, rng=None, sigma_ztr=None):
    """Received pilot segment ``[Y_0 ... Y_{Q-1}]`` of shape (M, Nc * Q).

    ``Y_q = sum_k G_k diag(x_{k,q}) + Z_q`` with ``G_k = V H_k F^T`` and
    ``Z_q`` i.i.d. CN(0, sigma_ztr). Pass ``sigma_ztr=0`` for a noiseless
    observation.
    """
    channels = np.asarray(channels)
    if channels.ndim == 2:
        channels = channels[None]
    K = channels.shape[0]
    if K != schedule.K:
        raise ValueError(f"{K} channels for a schedule of {schedule.K} UTs")
    if schedule.Nc != cfg.Nc or basic.Nc != cfg.Nc:
        raise ValueError("schedule, basic pilot and config disagree on Nc")
    M, Q, Nc = channels.shape[1], schedule.Q, cfg.Nc
    G = adcrm_to_sfcrm(channels, cfg)
    pilots = np.stack([make_pilot(schedule, basic, k, cfg.sigma_xtr) for k in range(K)])
    Y = np.einsum("kmn,kqn->mqn", G, pilots).reshape(M, Q * Nc)
    sigma_ztr = cfg.sigma_ztr if sigma_ztr is None else float(sigma_ztr)
    if sigma_ztr > 0:
        rng = as_generator(rng)
        w = rng.standard_normal((M, Q * Nc, 2))
        Y = Y + np.sqrt(sigma_ztr / 2.0) * (w[..., 0] + 1j * w[..., 1])
    return Y


def decorrelate_all(Y, schedule, basic, cfg):
    """Decorrelated observations of every UT, shape (K, M, Ng)."""
    Y = np.asarray(Y)
    M, Q, Nc = Y.shape[0], schedule.Q, cfg.Nc
    if Y.shape[1] != Q * Nc:
        raise ValueError(f"received matrix has {Y.shape[1]} columns, expected {Q * Nc}")
    sign = np.where(np.arange(M) % 2, -1.0, 1.0)[:, None]
    # V^H Y
    A = (np.fft.ifft(sign * Y, axis=0) * np.sqrt(M)).reshape(M, Q, Nc)
    pilots = np.stack([make_pilot(schedule, basic, k, cfg.sigma_xtr) for k in range(schedule.K)])
    B = np.einsum("mqn,kqn->kmn", A, pilots.conj())
    scale = 1.0 / (cfg.sigma_xtr * schedule.energy_gain)
    return scale * (np.fft.ifft(B, axis=-1) * np.sqrt(Nc))[..., : cfg.Ng]


def decorrelate_observation(Y, ut, schedule, basic, cfg):
    """Observation ``(1 / (sigma Q)) V^H Y X_k^H F^*`` of UT ``ut``, shape (M, Ng)."""
    if not 0 <= ut < schedule.K:
        raise IndexError(f"unknown UT index {ut}")
    Y = np.asarray(Y)
    M, Q, Nc = Y.shape[0], schedule.Q, cfg.Nc
    if Y.shape[1] != Q * Nc:
        raise ValueError(f"received matrix has {Y.shape[1]} columns, expected {Q * Nc}")
    sign = np.where(np.arange(M) % 2, -1.0, 1.0)[:, None]
    A = (np.fft.ifft(sign * Y, axis=0) * np.sqrt(M)).reshape(M, Q, Nc)
    x = make_pilot(schedule, basic, ut, cfg.sigma_xtr)
    B = np.einsum("mqn,qn->mn", A, x.conj())
    scale = 1.0 / (cfg.sigma_xtr * schedule.energy_gain)
    return scale * (np.fft.ifft(B, axis=-1) * np.sqrt(Nc))[:, : cfg.Ng]


def interference_power(schedule, adcpms, cfg):
    """SNR-independent part of every UT's MMSE denominator, shape (K, M, Ng).

    Entry (k, i, j) sums, over UTs k' sharing k's group (k' = k included),
    the extended power matrix of k' cyclically shifted by the difference
    of single-symbol shifts and truncated to Ng columns.
    """
    adcpms = check_adcpms(adcpms)
    K, M, Ng = adcpms.shape
    if K != schedule.K:
        raise ValueError(f"{K} ADCPMs for a schedule of {schedule.K} UTs")
    Nc = cfg.Nc
    groups, shifts = schedule.groups, schedule.shifts
    out = np.empty_like(adcpms)
    cols = np.arange(Ng)
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        aggregate = np.zeros((M, Nc))
        for k in members:
            dest = (cols + shifts[k]) % Nc
            np.add.at(aggregate, (slice(None), dest), adcpms[k])
        for k in members:
            out[k] = aggregate[:, (cols + shifts[k]) % Nc]
    return out


def interference_denominator(ut, schedule, adcpms, cfg):
    """MMSE denominator of UT ``ut``: interference power plus ``1/(rho_tr Q)``."""
    if not 0 <= ut < schedule.K:
        raise IndexError(f"unknown UT index {ut}")
    return interference_power(schedule, adcpms, cfg)[ut] + _noise_level(schedule, cfg)


def mmse_estimate(obs, ut, schedule, adcpms, cfg, denominator=None):
    """Element-wise MMSE estimate ``omega_k / denominator * obs``."""
    adcpms = check_adcpms(adcpms)
    if denominator is None:
        denominator = interference_denominator(ut, schedule, adcpms, cfg)
    return adcpms[ut] / denominator * np.asarray(obs)


def predict(estimate, ut_profile, delta_ell, cfg):
    """Channel prediction ``J0(2 pi nu Tsym dl) * estimate``."""
    return ut_profile.tcf(delta_ell, cfg.Tsym) * np.asarray(estimate)


def per_entry_mse(kind, omega, denominator, rho=1.0):
    """Element-wise error power for the three acquisition modes.

    ``CE``: ``omega - omega^2/den``; ``CE-delay``: ``omega + (1 - 2 rho)
    omega^2/den``; ``CP``: ``omega - rho^2 omega^2/den``. ``rho`` may be a
    per-UT vector when the inputs are stacked.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.ndim == 1:
        rho = rho[:, None, None]
    reduction = omega * omega / denominator
    if kind == "CE":
        return omega - reduction
    if kind == "CE-delay":
        return omega + (1.0 - 2.0 * rho) * reduction
    if kind == "CP":
        return omega - rho * rho * reduction
    raise ValueError(f"unknown MSE kind {kind!r}")


def _rhos(profiles, delta_ell, cfg):
    return np.array([p.tcf(delta_ell, cfg.Tsym) for p in profiles], dtype=float)


def _analytic(kind, schedule, adcpms, cfg, rho, delta_ell, interference):
    adcpms = check_adcpms(adcpms)
    K = adcpms.shape[0]
    if interference is None:
        interference = interference_power(schedule, adcpms, cfg)
    noise = _noise_level(schedule, cfg)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (K,))
    actual = per_entry_mse(kind, adcpms, interference + noise, rho).sum(axis=(1, 2))
    ideal = per_entry_mse(kind, adcpms, adcpms + noise, rho).sum(axis=(1, 2))
    if kind == "CE-delay":
        # for rho < 1/2 the interference-free value is an upper, not lower, bound
        ideal = np.where(rho >= 0.5, ideal, adcpms.sum(axis=(1, 2)))
    return MseReport(kind, actual, ideal, int(delta_ell), float(cfg.Nc * K))


def analytic_mse_ce(schedule, adcpms, cfg, interference=None):
    """Sum MSE of pilot-segment estimation and its interference-free bound."""
    return _analytic("CE", schedule, adcpms, cfg, 1.0, 0, interference)


def analytic_mse_ce_with_delay(schedule, adcpms, profiles, delta_ell, cfg, interference=None):
    """Sum MSE when the pilot-segment estimate is reused ``delta_ell`` symbols later.

    The attached bound is the interference-free value for UTs with
    correlation at least 1/2 and the UT's channel power otherwise.
    """
    rho = _rhos(profiles, delta_ell, cfg)
    return _analytic("CE-delay", schedule, adcpms, cfg, rho, delta_ell, interference)


def analytic_mse_cp(schedule, adcpms, profiles, delta_ell, cfg, interference=None):
    """Sum MSE of the TCF-scaled prediction and its interference-free bound."""
    rho = _rhos(profiles, delta_ell, cfg)
    return _analytic("CP", schedule, adcpms, cfg, rho, delta_ell, interference)


def _lag_code(delta_ell):
    return 2 * abs(int(delta_ell)) + (1 if delta_ell < 0 else 0)


def _run_trial(trial, seed, schedule, basic, adcpms, cfg, denominators, rho_by_lag):
    K = adcpms.shape[0]
    H = np.stack([sample_adcrm(adcpms[k], stream_rng(seed, trial, _TAG_CHANNEL, k))
                  for k in range(K)])
    Y = synthesize_received(H, schedule, basic, cfg, stream_rng(seed, trial, _TAG_NOISE))
    H_hat = adcpms / denominators * decorrelate_all(Y, schedule, basic, cfg)
    out = {("CE", 0): np.sum(np.abs(H - H_hat) ** 2, axis=(1, 2))}
    for lag, rho in rho_by_lag.items():
        H_lag = np.stack([
            evolve_adcrm(H[k], adcpms[k], rho[k],
                         stream_rng(seed, trial, _TAG_EVOLVE, k, _lag_code(lag)))
            for k in range(K)
        ])
        out[("CE-delay", lag)] = np.sum(np.abs(H_lag - H_hat) ** 2, axis=(1, 2))
        out[("CP", lag)] = np.sum(np.abs(H_lag - rho[:, None, None] * H_hat) ** 2, axis=(1, 2))
    return out


def empirical_mse_sweep(schedule, adcpms, profiles, cfg, trials, seed, delta_ells=(),
                        basic=None, n_jobs=None):
    """Monte Carlo sum MSE for CE and, per lag, CE-delay and CP.

    Every trial draws its channels, evolution and noise from streams keyed
    by ``(seed, trial, ...)``; per-trial results are reduced in trial order,
    so the output does not depend on the worker count.

    Returns
    -------
    dict
        Maps ``(kind, delta_ell)`` to an :class:`MseReport` holding the
        empirical mean, the analytic bound and values, and the standard
        error of the total.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    adcpms = check_adcpms(adcpms)
    K = adcpms.shape[0]
    basic = make_basic_pilot(cfg.Nc) if basic is None else basic
    interference = interference_power(schedule, adcpms, cfg)
    denominators = interference + _noise_level(schedule, cfg)
    rho_by_lag = {int(d): _rhos(profiles, d, cfg) for d in delta_ells}

    def job(t):
        return _run_trial(t, seed, schedule, basic, adcpms, cfg, denominators, rho_by_lag)

    workers = n_workers(n_jobs)
    if workers == 1:
        results = [job(t) for t in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(trials)))

    reports = {}
    for key in results[0]:
        samples = np.stack([r[key] for r in results])
        kind, lag = key
        if kind == "CE":
            analytic = analytic_mse_ce(schedule, adcpms, cfg, interference)
        elif kind == "CE-delay":
            analytic = analytic_mse_ce_with_delay(schedule, adcpms, profiles, lag, cfg, interference)
        else:
            analytic = analytic_mse_cp(schedule, adcpms, profiles, lag, cfg, interference)
        totals = samples.sum(axis=1)
        stderr = float(totals.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
        reports[key] = MseReport(kind, samples.mean(axis=0), analytic.bound_per_ut, lag,
                                 float(cfg.Nc * K), stderr, analytic.per_ut)
    return reports


def empirical_mse(kind, trials, schedule, profiles, cfg, seed, adcpms, delta_ell=0,
                  basic=None, n_jobs=None):
    """Monte Carlo estimate of one MSE kind; see :func:`empirical_mse_sweep`."""
    if kind not in KINDS:
        raise ValueError(f"unknown MSE kind {kind!r}")
    lags = () if kind == "CE" else (int(delta_ell),)
    reports = empirical_mse_sweep(schedule, adcpms, profiles, cfg, trials, seed, lags,
                                  basic, n_jobs)
    return reports[(kind, 0 if kind == "CE" else int(delta_ell))]


class ApspChannelEstimator(BaseEstimator):
    """Element-wise MMSE estimator of angle-delay channels under a pilot schedule.

    ``fit`` takes the stack of known power matrices (K, M, Ng) and caches the
    shrinkage factors; ``transform`` decorrelates a received pilot segment
    into per-UT observations; ``predict`` turns observations into channel
    estimates.

    Parameters
    ----------
    schedule : PilotSchedule
    rho_tr : float, default=10.0
        Pilot SNR (linear).
    sigma_xtr : float, default=1.0
        Pilot transmit power.
    basic_pilot : BasicPilot, optional
        Shared basic sequence; a Zadoff-Chu root-1 sequence by default.
    """

    def __init__(self, schedule=None, rho_tr=10.0, sigma_xtr=1.0, basic_pilot=None):
        self.schedule = schedule
        self.rho_tr = rho_tr
        self.sigma_xtr = sigma_xtr
        self.basic_pilot = basic_pilot

    def fit(self, X, y=None):
        if self.schedule is None:
            raise ValueError("a pilot schedule is required")
        adcpms = check_adcpms(X)
        K, M, Ng = adcpms.shape
        self.config_ = SystemConfig(M=M, Nc=self.schedule.Nc, Ng=Ng, K=K,
                                    rho_tr=self.rho_tr, sigma_xtr=self.sigma_xtr)
        self.adcpms_ = adcpms
        self.denominators_ = (interference_power(self.schedule, adcpms, self.config_)
                              + _noise_level(self.schedule, self.config_))
        self.shrinkage_ = adcpms / self.denominators_
        self.basic_ = (make_basic_pilot(self.schedule.Nc) if self.basic_pilot is None
                       else self.basic_pilot)
        return self

    def _check_fitted(self):
        if not hasattr(self, "shrinkage_"):
            raise NotFittedError("ApspChannelEstimator is not fitted yet")

    def transform(self, X):
        """Decorrelate a received segment (M, Nc*Q) into observations (K, M, Ng)."""
        self._check_fitted()
        return decorrelate_all(X, self.schedule, self.basic_, self.config_)

    def predict(self, X):
        """Channel estimates (K, M, Ng) from observations (K, M, Ng)."""
        self._check_fitted()
        X = np.asarray(X)
        if X.shape != self.shrinkage_.shape:
            raise ValueError(f"observations have shape {X.shape}, expected {self.shrinkage_.shape}")
        return self.shrinkage_ * X

    def predict_at_lag(self, X, rho):
        """Prediction ``rho_k * estimate`` for per-UT correlations ``rho``."""
        rho = np.broadcast_to(np.asarray(rho, dtype=float), (self.shrinkage_.shape[0],))
        return rho[:, None, None] * self.predict(X)

    def score(self, X, y):
        """Negative normalised MSE of the estimates of ``X`` against true channels ``y``."""
        err = np.sum(np.abs(self.predict(X) - np.asarray(y)) ** 2)
        return -float(err / (self.config_.Nc * self.config_.K))

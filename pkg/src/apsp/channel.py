"""Angle-delay channel model for massive MIMO-OFDM.

Power matrices are built from per-tap exponential delay profiles and
Laplacian angle spectra on the arcsin angle grid. Realisations are drawn
element-wise from independent complex Gaussians, and the temporal evolution
follows the Clarke-Jakes correlation ``J0(2 pi nu Tsym dl)``.

Angle-delay matrices are plain ``(M, Ng)`` (or stacked ``(K, M, Ng)``)
numpy arrays; space-frequency matrices are ``(M, Nc)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .transforms import angle_grid, bessel_j0, centered_dft_matrix, dft_matrix
from .utils import as_generator, check_adcpm

__all__ = [
    "SystemConfig",
    "Tap",
    "UTProfile",
    "laplacian_pas",
    "build_adcpm",
    "tcf",
    "sample_adcrm",
    "evolve_adcrm",
    "adcrm_to_sfcrm",
    "sfcrm_to_adcrm",
    "build_sfccm_small",
    "sfccm_approximation",
    "shifted_power_matrix",
    "random_profile",
]

SFCCM_MAX_DIM = 4096


@dataclass(frozen=True)
class SystemConfig:
    """OFDM and array dimensions plus the pilot SNR.

    ``Tsym`` and ``sigma_ztr`` are derived: ``Tsym = (Nc + Ng) Ts`` and
    ``sigma_ztr = sigma_xtr / rho_tr``.
    """

    M: int = 64
    Nc: int = 512
    Ng: int = 36
    Ts: float = 130.4e-9
    K: int = 12
    rho_tr: float = 10.0
    sigma_xtr: float = 1.0

    def __post_init__(self):
        for name in ("M", "Nc", "Ng", "K"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.M % 2:
            raise ValueError(f"M={self.M} must be even")
        if self.Ng > self.Nc:
            raise ValueError(f"Ng={self.Ng} exceeds Nc={self.Nc}")
        if not self.Ts > 0:
            raise ValueError("Ts must be positive")
        if not self.rho_tr > 0 or not np.isfinite(self.rho_tr):
            raise ValueError("rho_tr must be positive and finite")
        if not self.sigma_xtr > 0:
            raise ValueError("sigma_xtr must be positive")

    @property
    def Tsym(self):
        return (self.Nc + self.Ng) * self.Ts

    @property
    def sigma_ztr(self):
        return self.sigma_xtr / self.rho_tr

    @property
    def snr_db(self):
        return 10.0 * math.log10(self.rho_tr)

    def with_snr_db(self, snr_db):
        from dataclasses import replace

        return replace(self, rho_tr=10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class Tap:
    delay_bin: int
    power: float
    mean_aoa: float
    angle_spread: float


@dataclass(frozen=True)
class UTProfile:
    """Statistical description of one user terminal's channel.

    Parameters
    ----------
    doppler_nu : float
        Maximum Doppler frequency in Hz.
    taps : tuple of Tap
        Delay taps with relative powers, mean AoA (radians) and Laplacian
        angle spread (radians).
    """

    doppler_nu: float
    taps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "taps", tuple(self.taps))
        if not self.taps:
            raise ValueError("a UT profile needs at least one tap")
        bins = [t.delay_bin for t in self.taps]
        if len(set(bins)) != len(bins):
            raise ValueError(f"duplicate delay bins in {bins}")
        if min(bins) < 0:
            raise ValueError("delay bins must be nonnegative")
        powers = np.array([t.power for t in self.taps], dtype=float)
        if np.any(powers < 0) or not powers.sum() > 0:
            raise ValueError("tap powers must be nonnegative with a positive sum")
        for t in self.taps:
            if abs(t.mean_aoa) > np.pi / 2:
                raise ValueError(f"mean AoA {t.mean_aoa} outside [-pi/2, pi/2]")
            if not t.angle_spread > 0:
                raise ValueError("angle spread must be positive")
        if not np.isfinite(self.doppler_nu):
            raise ValueError("doppler_nu must be finite")

    def tcf(self, delta_ell, Tsym):
        return tcf(self.doppler_nu, Tsym, delta_ell)


def laplacian_pas(theta, mean_aoa, angle_spread):
    """Laplacian angle spectrum normalised to unit integral over [-pi/2, pi/2]."""
    a = math.sqrt(2.0) / angle_spread
    mass = (2.0 - math.exp(-a * (mean_aoa + np.pi / 2)) - math.exp(-a * (np.pi / 2 - mean_aoa))) / a
    return np.exp(-a * np.abs(np.asarray(theta) - mean_aoa)) / mass


def build_adcpm(profile, cfg):
    """Angle-delay power matrix of shape (M, Ng), summing to ``M * Nc``.

    Each tap contributes its exponential-profile power to its delay column,
    spread over the angle rows with weights ``(theta_{i+1} - theta_i) *
    exp(-sqrt(2) |theta_i - mean| / spread)``. The weights of a tap are
    normalised in the log domain, so vanishing spreads collapse onto the
    nearest grid row instead of underflowing.
    """
    M, Ng = cfg.M, cfg.Ng
    grid = angle_grid(M)
    theta = grid[:-1]
    with np.errstate(divide="ignore"):
        log_width = np.log(np.diff(grid))
    total_power = sum(t.power for t in profile.taps)
    omega = np.zeros((M, Ng))
    for tap in profile.taps:
        if tap.delay_bin >= Ng:
            raise ValueError(f"tap delay bin {tap.delay_bin} outside [0, {Ng})")
        logw = log_width - math.sqrt(2.0) * np.abs(theta - tap.mean_aoa) / tap.angle_spread
        w = np.exp(logw - logw.max())
        omega[:, tap.delay_bin] += (tap.power / total_power) * w / w.sum()
    return omega * (M * cfg.Nc / omega.sum())


def tcf(doppler_nu, Tsym, delta_ell):
    """Clarke-Jakes temporal correlation ``J0(2 pi nu Tsym delta_ell)``."""
    return bessel_j0(2.0 * np.pi * np.asarray(doppler_nu) * Tsym * np.asarray(delta_ell))


def sample_adcrm(omega, rng=None):
    """Draw an ADCRM with independent CN(0, omega[i, j]) entries.

    ``omega`` may be a single (M, Ng) matrix or a stack (K, M, Ng).
    """
    omega = np.asarray(omega, dtype=float)
    rng = as_generator(rng)
    w = rng.standard_normal(omega.shape + (2,))
    return np.sqrt(omega / 2.0) * (w[..., 0] + 1j * w[..., 1])


def evolve_adcrm(h, omega, rho, rng=None):
    """Channel ``rho * h + sqrt(1 - rho^2) * w`` with fresh ``w ~ CN(0, omega)``.

    The pair (result, h) has per-element correlation ``rho`` and marginal
    power ``omega``. For stacked inputs ``rho`` may be a length-K vector.
    """
    h = np.asarray(h)
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise ValueError(f"correlation {rho} outside [-1, 1]")
    if rho.ndim == 1:
        rho = rho[:, None, None]
    w = sample_adcrm(omega, rng)
    return rho * h + np.sqrt(1.0 - rho * rho) * w


def adcrm_to_sfcrm(h, cfg):
    """Space-frequency channel ``G = V_M H F_{Nc x Ng}^T`` via FFTs.

    Works on (M, Ng) or stacked (..., M, Ng) inputs.
    """
    h = np.asarray(h)
    M, Nc = h.shape[-2], cfg.Nc
    x = np.fft.fft(h, n=Nc, axis=-1) / np.sqrt(Nc)
    sign = np.where(np.arange(M) % 2, -1.0, 1.0)[:, None]
    return sign * np.fft.fft(x, axis=-2) / np.sqrt(M)


def sfcrm_to_adcrm(g, cfg):
    """Angle-delay channel ``H = V_M^H G F_{Nc x Ng}^*`` via inverse FFTs."""
    g = np.asarray(g)
    M, Nc, Ng = g.shape[-2], g.shape[-1], cfg.Ng
    if Nc != cfg.Nc:
        raise ValueError(f"SFCRM has {Nc} subcarriers, config says {cfg.Nc}")
    sign = np.where(np.arange(M) % 2, -1.0, 1.0)[:, None]
    a = np.fft.ifft(sign * g, axis=-2) * np.sqrt(M)
    return (np.fft.ifft(a, axis=-1) * np.sqrt(Nc))[..., :Ng]


def build_sfccm_small(profile, cfg, angle_grid_points=None):
    """Space-frequency covariance by trapezoidal quadrature of the defining integral.

    Verification only: refuses ``M * Nc > 4096``. The result has shape
    ``(M Nc, M Nc)`` with column-major ``vec`` ordering (antenna index
    fastest).
    """
    M, Nc = cfg.M, cfg.Nc
    if M * Nc > SFCCM_MAX_DIM:
        raise MemoryError(f"M*Nc={M * Nc} exceeds the verification limit {SFCCM_MAX_DIM}")
    n_nodes = 8 * M if angle_grid_points is None else int(angle_grid_points)
    if n_nodes < 2:
        raise ValueError("need at least two quadrature nodes")
    theta = np.linspace(-np.pi / 2, np.pi / 2, n_nodes)
    wq = np.full(n_nodes, theta[1] - theta[0])
    wq[[0, -1]] *= 0.5
    lags = np.arange(-(M - 1), M)
    kernel = np.exp(-1j * np.pi * np.outer(lags, np.sin(theta)))
    idx = np.arange(M)
    lag_index = (idx[:, None] - idx[None, :]) + (M - 1)
    total_power = sum(t.power for t in profile.taps)
    n = np.arange(Nc)
    R = np.zeros((M * Nc, M * Nc), dtype=complex)
    for tap in profile.taps:
        if tap.delay_bin >= cfg.Ng:
            raise ValueError(f"tap delay bin {tap.delay_bin} outside [0, {cfg.Ng})")
        spectrum = (tap.power / total_power) * laplacian_pas(theta, tap.mean_aoa, tap.angle_spread)
        toeplitz = (kernel @ (wq * spectrum))[lag_index]
        f = np.exp(-2j * np.pi * n * tap.delay_bin / Nc)
        R += np.kron(np.outer(f, f.conj()), toeplitz)
    return R


def sfccm_approximation(omega, cfg):
    """``(F_{Nc x Ng} kron V_M) diag(vec omega) (F_{Nc x Ng} kron V_M)^H``."""
    omega = check_adcpm(omega, (cfg.M, cfg.Ng))
    if cfg.M * cfg.Nc > SFCCM_MAX_DIM:
        raise MemoryError(f"M*Nc={cfg.M * cfg.Nc} exceeds the verification limit {SFCCM_MAX_DIM}")
    B = np.kron(dft_matrix(cfg.Nc)[:, : cfg.Ng], centered_dft_matrix(cfg.M))
    return (B * omega.flatten(order="F")) @ B.conj().T


def shifted_power_matrix(omega, shift, cfg):
    """Zero-pad to Nc columns, cyclically shift by ``shift``, keep the first Ng.

    Column j of the result is column ``(j - shift) mod Nc`` of omega when
    that index is below Ng, and zero otherwise. Accepts stacked input.
    """
    omega = np.asarray(omega)
    Nc, Ng = cfg.Nc, omega.shape[-1]
    src = (np.arange(Ng) - int(shift)) % Nc
    out = np.zeros_like(omega)
    valid = src < Ng
    out[..., valid] = omega[..., src[valid]]
    return out


def random_profile(cfg, doppler_nu, delay_spread, angle_spread, n_taps=20, rng=None,
                   aoa_range=np.pi / 3):
    """Draw a UT profile: tap delays without replacement from [0, Ng).

    Tap powers follow ``exp(-tau / delay_spread)`` at the drawn delays; mean
    AoAs are uniform in ``[-aoa_range, aoa_range]``.
    """
    rng = as_generator(rng)
    n_taps = min(int(n_taps), cfg.Ng)
    bins = np.sort(rng.choice(cfg.Ng, size=n_taps, replace=False))
    aoas = rng.uniform(-aoa_range, aoa_range, size=n_taps)
    taps = tuple(
        Tap(int(b), float(np.exp(-b * cfg.Ts / delay_spread)), float(a), float(angle_spread))
        for b, a in zip(bins, aoas)
    )
    return UTProfile(float(doppler_nu), taps)

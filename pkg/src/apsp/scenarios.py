"""Scenario presets and system configurations for the experiments."""

from dataclasses import dataclass

import numpy as np

from .channel import SystemConfig, build_adcpm, random_profile
from .utils import stream_rng

__all__ = [
    "Scenario",
    "SCENARIOS",
    "FULL_CONFIG",
    "DESK_CONFIG",
    "get_scenario",
    "make_profiles",
    "make_adcpms",
]


@dataclass(frozen=True)
class Scenario:
    """Mobility and dispersion statistics shared by all UTs of a scenario.

    Parameters
    ----------
    name : str
    nu_tsym : float
        Normalised Doppler ``nu * Tsym``.
    delay_spread : float
        RMS delay spread in seconds.
    angle_spread : float
        Laplacian angle spread in radians.
    n_taps : int
    """

    name: str
    nu_tsym: float
    delay_spread: float
    angle_spread: float
    n_taps: int = 20


SCENARIOS = {
    "SU": Scenario("SU", 31e-3, 0.77e-6, np.deg2rad(2.0)),
    "UMa": Scenario("UMa", 14e-3, 1.85e-6, np.deg2rad(2.0)),
    "UMi": Scenario("UMi", 6.6e-3, 0.62e-6, np.deg2rad(10.0)),
}

# 2048 subcarriers, 144-sample guard, 32.6 ns sampling, 128 antennas, 42 UTs
FULL_CONFIG = SystemConfig(M=128, Nc=2048, Ng=144, Ts=32.6e-9, K=42)
# quarter bandwidth, four-fold sampling period: symbol time, normalised
# Doppler and delay spread per guard interval stay as in FULL_CONFIG
DESK_CONFIG = SystemConfig(M=64, Nc=512, Ng=36, Ts=130.4e-9, K=12)


def get_scenario(name):
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def make_profiles(scenario, cfg, K=None, seed=0):
    """Draw K UT profiles for ``scenario``; UT k uses the stream ``(seed, k)``.

    The Doppler frequency is set so that ``nu * cfg.Tsym`` equals the
    scenario's normalised Doppler.
    """
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    K = cfg.K if K is None else int(K)
    nu = scenario.nu_tsym / cfg.Tsym
    return [
        random_profile(cfg, nu, scenario.delay_spread, scenario.angle_spread,
                       scenario.n_taps, stream_rng(seed, k))
        for k in range(K)
    ]


def make_adcpms(profiles, cfg):
    """Stack of power matrices (K, M, Ng) for ``profiles``."""
    return np.stack([build_adcpm(p, cfg) for p in profiles])

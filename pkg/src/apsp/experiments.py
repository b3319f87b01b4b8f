"""Experiment orchestration: specs and config files, frame lag accounting,
MSE sweeps, a spectral-efficiency evaluation and deterministic CSV output.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import configparser
import csv
import math

import numpy as np

from .channel import SystemConfig, Tap, UTProfile
from .estimation import (
    analytic_mse_ce,
    analytic_mse_ce_with_delay,
    analytic_mse_cp,
    empirical_mse_sweep,
    interference_power,
    n_workers,
    per_entry_mse,
)
from .pilots import make_psop_schedule
from .scenarios import DESK_CONFIG, FULL_CONFIG, SCENARIOS, make_adcpms, make_profiles
from .scheduling import schedule_apsp
from .transforms import centered_dft_matrix
from .utils import stream_rng

__all__ = [
    "ExperimentSpec",
    "RateReport",
    "MSE_HEADER",
    "RATE_HEADER",
    "load_experiment",
    "frame_delay_schedule",
    "frame_layout",
    "build_schedule",
    "run_mse_experiment",
    "evaluate_spectral_efficiency",
    "rate_rows",
    "write_results",
]

SCHEMES = ("APSP", "PSOP")
FRAMES = ("type-A", "type-B")
RATE_MAX_MK = 4096

MSE_HEADER = ("scenario", "scheme", "Q", "snr_db", "delta_ell", "kind",
              "analytic", "bound", "empirical", "stderr", "per_ut")
RATE_HEADER = ("scenario", "scheme", "Q", "frame", "acquisition", "snr_db",
               "ul_se", "dl_se", "total_se", "dl_model")
_KIND_ORDER = {"CE": 0, "CE-delay": 1, "CP": 2}


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one experiment.

    ``profiles`` is only used (and required) for ``scenario="custom"``;
    presets draw K profiles from ``profile_seed``. ``acquisition`` selects
    TCF prediction or stale estimates for data symbols; ``None`` means
    prediction for APSP and estimation for PSOP.
    """

    scenario: str = "SU"
    scheme: str = "APSP"
    Q: int = 1
    snr_db_list: tuple = (0.0, 10.0, 20.0, 30.0)
    delta_ell_list: tuple = ()
    trials: int = 200
    seed: int = 0
    frame: str = "type-A"
    frame_len: int = 7
    gamma: float = 1e-4
    system: SystemConfig = DESK_CONFIG
    profiles: tuple = ()
    profile_seed: int = None
    order: str = "index"
    grouping: str = "round-robin"
    subsample: int = 8
    acquisition: str = None
    empirical: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scheme", _canonical(self.scheme, SCHEMES, "scheme"))
        object.__setattr__(self, "frame", _canonical(self.frame, FRAMES, "frame"))
        object.__setattr__(self, "snr_db_list", tuple(float(s) for s in self.snr_db_list))
        object.__setattr__(self, "delta_ell_list", tuple(int(d) for d in self.delta_ell_list))
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if self.scenario != "custom" and self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; "
                             f"choose from {sorted(SCENARIOS) + ['custom']}")
        if self.scenario == "custom":
            if not self.profiles:
                raise ValueError("scenario 'custom' needs explicit UT profiles")
            if len(self.profiles) != self.system.K:
                raise ValueError(f"{len(self.profiles)} profiles for K={self.system.K}")
        if int(self.trials) < 1:
            raise ValueError("trials must be at least 1")
        if int(self.Q) < 1:
            raise ValueError("Q must be positive")
        if self.frame_len <= self.Q:
            raise ValueError(f"frame length {self.frame_len} must exceed Q={self.Q}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma={self.gamma} outside [0, 1]")
        if self.scheme == "PSOP":
            need = -(-self.system.K // (self.system.Nc // self.system.Ng))
            if self.Q != need:
                raise ValueError(f"PSOP with K={self.system.K}, Nc={self.system.Nc}, "
                                 f"Ng={self.system.Ng} uses Q={need}, got Q={self.Q}")
        if self.acquisition not in (None, "prediction", "estimation"):
            raise ValueError(f"unknown acquisition {self.acquisition!r}")
        if int(self.subsample) < 1:
            raise ValueError("subsample must be positive")

    @property
    def acquisition_mode(self):
        if self.acquisition is not None:
            return self.acquisition
        return "prediction" if self.scheme == "APSP" else "estimation"

    def get_profiles(self):
        if self.scenario == "custom":
            return list(self.profiles)
        seed = self.seed if self.profile_seed is None else self.profile_seed
        return make_profiles(self.scenario, self.system, seed=seed)


@dataclass
class RateReport:
    """Average spectral efficiency (bits/s/Hz) per SNR, split into UL and DL symbols.

    The DL figures come from a regularised MMSE precoder with the estimate
    treated as known and the estimation error as Gaussian interference; they
    are an approximation (``dl_model``).
    """

    scheme: str
    frame: str
    acquisition: str
    snr_db: tuple
    ul: np.ndarray
    dl: np.ndarray
    dl_model: str = "rzf-approx"

    @property
    def total(self):
        return self.ul + self.dl


def _canonical(value, choices, name):
    for c in choices:
        if str(value).lower() == c.lower():
            return c
    raise ValueError(f"unknown {name} {value!r}; choose from {choices}")


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def _parse_taps(text, where):
    # "bin:power:aoa_deg:spread_deg; ..."
    taps = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        parts = item.split(":")
        if len(parts) != 4:
            raise ValueError(f"{where}: tap {item!r} is not bin:power:aoa_deg:spread_deg")
        b, p, a, s = parts
        taps.append(Tap(int(b), float(p), math.radians(float(a)), math.radians(float(s))))
    return tuple(taps)


def load_experiment(path):
    """Read an experiment from an INI-style key-value file.

    Sections: ``[experiment]`` (scenario, scheme, q, snr_db, delta_ell,
    trials, seed, frame, frame_len, gamma, profile_seed, order, grouping,
    subsample, acquisition, empirical), ``[system]`` (``preset = full|desk``
    then any of M, Nc, Ng, Ts, K) and, for ``scenario = custom``, one
    ``[ut.N]`` section per UT with ``doppler_nu`` (Hz) and ``taps``.
    The system preset defaults to ``full``.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ValueError(f"{path}: malformed experiment file: {exc}") from exc
    if not parser.has_section("experiment"):
        raise ValueError(f"{path}: missing [experiment] section")
    ex = parser["experiment"]

    system = FULL_CONFIG
    if parser.has_section("system"):
        sy = parser["system"]
        preset = sy.get("preset", "full").lower()
        if preset not in ("full", "desk"):
            raise ValueError(f"{path}: unknown system preset {preset!r}")
        system = FULL_CONFIG if preset == "full" else DESK_CONFIG
        overrides = {k: int(sy[k.lower()]) for k in ("M", "Nc", "Ng", "K") if k.lower() in sy}
        if "ts" in sy:
            overrides["Ts"] = float(sy["ts"])
        system = replace(system, **overrides)

    profiles = []
    ut_sections = sorted((s for s in parser.sections() if s.startswith("ut.")),
                         key=lambda s: int(s.split(".", 1)[1]))
    for name in ut_sections:
        sec = parser[name]
        if "taps" not in sec:
            raise ValueError(f"{path}: [{name}] needs 'taps'")
        profiles.append(UTProfile(float(sec.get("doppler_nu", "0")),
                                  _parse_taps(sec["taps"], f"{path} [{name}]")))

    kwargs = dict(
        scenario=ex.get("scenario", "SU"),
        scheme=ex.get("scheme", "APSP"),
        trials=ex.getint("trials", 200),
        seed=ex.getint("seed", 0),
        frame=ex.get("frame", "type-A"),
        frame_len=ex.getint("frame_len", 7),
        gamma=ex.getfloat("gamma", 1e-4),
        system=system,
        profiles=tuple(profiles),
        order=ex.get("order", "index"),
        grouping=ex.get("grouping", "round-robin"),
        subsample=ex.getint("subsample", 8),
        acquisition=ex.get("acquisition", None),
        empirical=ex.getboolean("empirical", True),
    )
    if "profile_seed" in ex:
        kwargs["profile_seed"] = ex.getint("profile_seed")
    if "snr_db" in ex:
        kwargs["snr_db_list"] = _floats(ex["snr_db"])
    if "delta_ell" in ex:
        kwargs["delta_ell_list"] = _ints(ex["delta_ell"])
    if "q" in ex:
        kwargs["Q"] = ex.getint("q")
    elif _canonical(kwargs["scheme"], SCHEMES, "scheme") == "PSOP":
        kwargs["Q"] = -(-system.K // (system.Nc // system.Ng))
    explicit_k = parser.has_section("system") and "k" in parser["system"]
    if kwargs["scenario"] == "custom" and profiles and not explicit_k:
        kwargs["system"] = replace(system, K=len(profiles))
    return ExperimentSpec(**kwargs)


def frame_delay_schedule(frame, frame_len, Q):
    """Signed lag of every data symbol from the nearest pilot symbol.

    Type-A puts the pilot segment first: lags ``1..frame_len-Q``. Type-B
    starts the pilot segment at ``(frame_len - Q) // 2``; UL symbols before
    it get negative lags, DL symbols after it positive ones.
    """
    frame = _canonical(frame, FRAMES, "frame")
    frame_len, Q = int(frame_len), int(Q)
    if Q < 1 or frame_len <= Q:
        raise ValueError(f"frame length {frame_len} must exceed Q={Q} >= 1")
    if frame == "type-A":
        return list(range(1, frame_len - Q + 1))
    start = (frame_len - Q) // 2
    before = [i - start for i in range(start)]
    after = [j - (start + Q - 1) for j in range(start + Q, frame_len)]
    return before + after


def frame_layout(frame, frame_len, Q):
    """``(delta_ell, link)`` per data symbol, link being ``"UL"`` or ``"DL"``.

    Type-A splits the data segment in halves (UL first, the extra symbol of
    an odd split goes to DL); type-B has UL before and DL after the pilots.
    """
    lags = frame_delay_schedule(frame, frame_len, Q)
    if _canonical(frame, FRAMES, "frame") == "type-A":
        n_ul = len(lags) // 2
        return [(d, "UL" if i < n_ul else "DL") for i, d in enumerate(lags)]
    return [(d, "UL" if d < 0 else "DL") for d in lags]


def build_schedule(spec, adcpms):
    if spec.scheme == "PSOP":
        return make_psop_schedule(spec.system.K, spec.system.Ng, spec.system.Nc)
    return schedule_apsp(adcpms, spec.system, spec.Q, spec.gamma, spec.order,
                         spec.grouping).schedule


def _fmt(x):
    return format(float(x), ".12e")


def run_mse_experiment(spec, n_jobs=None):
    """Analytic and (optionally) empirical MSE rows for every SNR and lag.

    Each SNR point yields a CE row and, for every lag in
    ``spec.delta_ell_list``, a CE-delay and a CP row. Values are normalised
    by ``Nc * K``; ``per_ut`` lists analytic per-UT values normalised by Nc.
    Empirical trials at different SNR points reuse the same keyed streams.
    """
    profiles = spec.get_profiles()
    adcpms = make_adcpms(profiles, spec.system)
    schedule = build_schedule(spec, adcpms)
    interference = interference_power(schedule, adcpms, spec.system)
    rows = []
    for snr in spec.snr_db_list:
        cfg = spec.system.with_snr_db(snr)
        analytic = {("CE", 0): analytic_mse_ce(schedule, adcpms, cfg, interference)}
        for d in spec.delta_ell_list:
            analytic[("CE-delay", d)] = analytic_mse_ce_with_delay(
                schedule, adcpms, profiles, d, cfg, interference)
            analytic[("CP", d)] = analytic_mse_cp(schedule, adcpms, profiles, d, cfg, interference)
        empirical = {}
        if spec.empirical:
            empirical = empirical_mse_sweep(schedule, adcpms, profiles, cfg, spec.trials,
                                            spec.seed, spec.delta_ell_list, n_jobs=n_jobs)
        for (kind, d), rep in analytic.items():
            emp = empirical.get((kind, d))
            rows.append({
                "scenario": spec.scenario,
                "scheme": spec.scheme,
                "Q": schedule.Q,
                "snr_db": _fmt(snr),
                "delta_ell": d,
                "kind": kind,
                "analytic": _fmt(rep.normalized_total),
                "bound": _fmt(rep.normalized_bound),
                "empirical": _fmt(emp.normalized_total) if emp else "",
                "stderr": _fmt(emp.stderr / emp.normalization) if emp else "",
                "per_ut": ";".join(_fmt(v) for v in rep.per_ut / spec.system.Nc),
            })
    rows.sort(key=lambda r: (r["scheme"], r["Q"], float(r["snr_db"]), r["delta_ell"],
                             _KIND_ORDER[r["kind"]]))
    return rows


def _sample_estimates(adcpms, denominators, rng):
    # MMSE estimates are CN(0, omega^2 / den) element-wise
    var = adcpms * adcpms / denominators
    w = rng.standard_normal(adcpms.shape + (2,))
    return np.sqrt(var / 2.0) * (w[..., 0] + 1j * w[..., 1])


def _to_subcarriers(H, cfg, carriers):
    # (K, M, Ng) angle-delay -> (S, M, K) space-frequency at the chosen subcarriers
    K, M, Ng = H.shape
    V = centered_dft_matrix(M)
    F = np.exp(-2j * np.pi * np.outer(carriers, np.arange(Ng)) / cfg.Nc) / math.sqrt(cfg.Nc)
    G = V @ (H @ F.T)  # (K, M, S)
    return G.transpose(2, 1, 0)


def _ul_rates(G, c_total, rho):
    """Worst-case UL rates with an MMSE receiver; G is (S, M, K)."""
    S, M, K = G.shape
    V = centered_dft_matrix(M)
    A = rho * G @ G.conj().transpose(0, 2, 1)
    A = A + rho * (V * c_total) @ V.conj().T + np.eye(M)
    X = np.linalg.solve(A, G)
    a = np.real(np.einsum("smk,smk->sk", G.conj(), X))
    # Sherman-Morrison: remove the UT's own term from A
    sinr = rho * a / np.maximum(1.0 - rho * a, 1e-300)
    return np.log2(1.0 + np.maximum(sinr, 0.0)).sum(axis=1).mean()


def _dl_rates(G, c_per_ut, rho):
    """DL rates with a regularised MMSE precoder from the estimates; G is (S, M, K)."""
    S, M, K = G.shape
    V = centered_dft_matrix(M)
    A = G @ G.conj().transpose(0, 2, 1) + np.eye(M) / rho
    W = np.linalg.solve(A, G)
    W = W * np.sqrt(K / np.sum(np.abs(W) ** 2, axis=(1, 2), keepdims=True))
    gain = G.conj().transpose(0, 2, 1) @ W  # gain[s, k, j] = g_k^H w_j
    power = np.abs(gain) ** 2
    signal = np.diagonal(power, axis1=1, axis2=2)
    Wa = V.conj().T @ W  # angle-domain precoders
    err = (np.abs(Wa) ** 2).sum(axis=2) @ c_per_ut.T
    sinr = rho * signal / (rho * (power.sum(axis=2) - signal) + rho * err + 1.0)
    return np.log2(1.0 + sinr).sum(axis=1).mean()


def evaluate_spectral_efficiency(spec, n_jobs=None):
    """Average spectral efficiency over a frame, per SNR.

    For each data symbol at lag ``dl`` the BS uses the TCF-scaled estimate
    (prediction) or the stale estimate, and the matching element-wise error
    power as Gaussian noise. UL rates use the MMSE receiver's worst-case
    SINR; DL rates a regularised MMSE precoder built from the estimates.
    Rates are summed over UTs, averaged over ``Nc / subsample`` subcarriers,
    over ``spec.trials`` estimate draws and over all ``frame_len`` symbols
    (pilot symbols carry nothing), then scaled by ``Nc / (Nc + Ng)``.
    """
    cfg0 = spec.system
    if cfg0.M * cfg0.K > RATE_MAX_MK:
        raise ValueError(f"M*K = {cfg0.M * cfg0.K} exceeds {RATE_MAX_MK}; "
                         f"rate evaluation needs a smaller M or K")
    profiles = spec.get_profiles()
    adcpms = make_adcpms(profiles, cfg0)
    schedule = build_schedule(spec, adcpms)
    interference = interference_power(schedule, adcpms, cfg0)
    layout = frame_layout(spec.frame, spec.frame_len, schedule.Q)
    carriers = np.arange(0, cfg0.Nc, spec.subsample)
    predict = spec.acquisition_mode == "prediction"
    guard = cfg0.Nc / (cfg0.Nc + cfg0.Ng)
    ul_out, dl_out = [], []
    for snr in spec.snr_db_list:
        cfg = cfg0.with_snr_db(snr)
        rho = cfg.rho_tr
        den = interference + 1.0 / (rho * schedule.energy_gain)
        per_symbol = []
        for d, link in layout:
            r = np.array([p.tcf(d, cfg.Tsym) for p in profiles])
            kind = "CP" if predict else "CE-delay"
            mse = per_entry_mse(kind, adcpms, den, r)
            c_per_ut = mse.sum(axis=2) / cfg.Nc  # (K, M) angle-domain error power
            per_symbol.append((d, link, r, c_per_ut))

        def job(t, den=den, per_symbol=per_symbol, rho=rho):
            H_hat = _sample_estimates(adcpms, den, stream_rng(spec.seed, t, 3))
            ul = dl = 0.0
            for d, link, r, c_per_ut in per_symbol:
                est = r[:, None, None] * H_hat if predict else H_hat
                G = _to_subcarriers(est, cfg, carriers)
                if link == "UL":
                    ul += _ul_rates(G, c_per_ut.sum(axis=0), rho)
                else:
                    dl += _dl_rates(G, c_per_ut, rho)
            return ul, dl

        workers = n_workers(n_jobs)
        if workers == 1:
            results = [job(t) for t in range(spec.trials)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(job, range(spec.trials)))
        ul = sum(r[0] for r in results) / spec.trials
        dl = sum(r[1] for r in results) / spec.trials
        ul_out.append(guard * ul / spec.frame_len)
        dl_out.append(guard * dl / spec.frame_len)
    return RateReport(spec.scheme, spec.frame, spec.acquisition_mode, spec.snr_db_list,
                      np.array(ul_out), np.array(dl_out))


def rate_rows(spec, report):
    rows = [{
        "scenario": spec.scenario,
        "scheme": report.scheme,
        "Q": spec.Q,
        "frame": report.frame,
        "acquisition": report.acquisition,
        "snr_db": _fmt(snr),
        "ul_se": _fmt(ul),
        "dl_se": _fmt(dl),
        "total_se": _fmt(ul + dl),
        "dl_model": report.dl_model,
    } for snr, ul, dl in zip(report.snr_db, report.ul, report.dl)]
    rows.sort(key=lambda r: (r["scheme"], r["frame"], float(r["snr_db"])))
    return rows


def write_results(rows, path, header=MSE_HEADER):
    """Write rows as CSV with a fixed header; rows missing a column raise."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n",
                                    extrasaction="raise")
            writer.writeheader()
            for row in rows:
                missing = set(header) - set(row)
                if missing:
                    raise ValueError(f"row lacks columns {sorted(missing)}")
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc

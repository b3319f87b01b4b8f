"""Pilot phase shift scheduling: the overlap metric, the greedy threshold
scheduler, the non-overlap condition check and an exhaustive oracle for
tiny instances.
"""

from dataclasses import dataclass
import csv
import itertools

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .channel import SystemConfig
from .estimation import analytic_mse_ce
from .pilots import PilotSchedule
from .utils import check_adcpms

__all__ = [
    "ScheduleResult",
    "overlap",
    "check_nonoverlap_condition",
    "schedule_apsp",
    "exhaustive_schedule",
    "evaluate_schedule",
    "write_diagnostics",
    "PhaseShiftScheduler",
]

ORDERS = ("index", "power")
GROUPINGS = ("round-robin", "contiguous")
EXHAUSTIVE_MAX_K = 4
EXHAUSTIVE_MAX_SHIFTS = 64


@dataclass
class ScheduleResult:
    """Scheduler output.

    Attributes
    ----------
    schedule : PilotSchedule
    achieved_overlaps : ndarray of shape (K,)
        Overlap of each UT's shifted power matrix with the aggregate of the
        UTs scheduled before it in its group (0 for the first one).
    condition_met : bool
        Whether every same-group pair has entry-wise zero shifted products.
    pairwise : ndarray of shape (K, K), bool
        Per-pair non-overlap flags.
    """

    schedule: PilotSchedule
    achieved_overlaps: np.ndarray
    condition_met: bool
    pairwise: np.ndarray

    @property
    def phis(self):
        return self.schedule.phis


def overlap(A, B):
    """Degree of overlap ``sum(A * B) / (||A||_F ||B||_F)`` of nonnegative matrices."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shapes differ: {A.shape} vs {B.shape}")
    if np.any(A < 0) or np.any(B < 0):
        raise ValueError("overlap is defined for nonnegative matrices")
    na, nb = np.linalg.norm(A), np.linalg.norm(B)
    if na == 0 or nb == 0:
        raise ValueError("overlap is undefined when a matrix is all zero")
    return float(np.sum(A * B) / (na * nb))


def _default_tol(adcpms):
    # products carry squared power units
    return 1e-12 * float(adcpms.max()) ** 2


def check_nonoverlap_condition(schedule, adcpms, cfg, tol=None):
    """Pairwise non-overlap flags, shape (K, K).

    Entry (k, k') is true when the two UTs sit in different groups, or when
    the Hadamard product of their shifted extended power matrices is
    entry-wise at most ``tol`` (default ``1e-12 * max(omega)**2``).
    """
    adcpms = check_adcpms(adcpms)
    K, M, Ng = adcpms.shape
    if K != schedule.K:
        raise ValueError(f"{K} ADCPMs for a schedule of {schedule.K} UTs")
    tol = _default_tol(adcpms) if tol is None else float(tol)
    Nc = cfg.Nc
    groups, shifts = schedule.groups, schedule.shifts
    ok = np.ones((K, K), dtype=bool)
    cols = np.arange(Ng)
    for k in range(K):
        for kp in range(k + 1, K):
            if groups[k] != groups[kp]:
                continue
            # k' relative to k, truncated to k's support columns
            d = shifts[kp] - shifts[k]
            ext = np.zeros((M, Nc))
            ext[:, (cols + d) % Nc] = adcpms[kp]
            product = adcpms[k] * ext[:, :Ng]
            ok[k, kp] = ok[kp, k] = bool(product.max() <= tol)
    return ok


def _overlap_all_shifts(omega, aggregate):
    """Overlap numerators of ``omega`` shifted by every s in [0, Nc) with ``aggregate``."""
    C = omega.T @ aggregate  # (Ng, Nc); entries nonnegative, zeros stay exact
    num = np.zeros(aggregate.shape[1])
    for j in range(C.shape[0]):
        num += np.roll(C[j], -j)
    return num


def _partition(adcpms, Q, order, grouping):
    K = adcpms.shape[0]
    if order == "index":
        seq = list(range(K))
    elif order == "power":
        power = adcpms.sum(axis=(1, 2))
        seq = sorted(range(K), key=lambda k: (-power[k], k))
    else:
        raise ValueError(f"unknown UT order {order!r}; choose from {ORDERS}")
    if grouping == "round-robin":
        return [[k for pos, k in enumerate(seq) if pos % Q == r] for r in range(Q)]
    if grouping == "contiguous":
        size = -(-K // Q)
        return [seq[r * size:(r + 1) * size] for r in range(Q)]
    raise ValueError(f"unknown grouping {grouping!r}; choose from {GROUPINGS}")


def schedule_apsp(adcpms, cfg, Q=1, gamma=1e-4, order="index", grouping="round-robin"):
    """Greedy phase shift scheduling with an overlap threshold.

    Within each group the first UT takes shift 0. Each later UT scans shifts
    in ascending order and takes the first whose overlap with the sum of the
    already scheduled shifted extended power matrices is at most ``gamma``;
    if none qualifies it takes the minimum-overlap shift (smallest on ties).
    The phase shift is ``shift * Q + group``.

    Parameters
    ----------
    adcpms : array_like of shape (K, M, Ng)
    cfg : SystemConfig
        Supplies ``Nc``.
    Q : int
        Pilot segment length; UTs are split into Q groups.
    gamma : float
        Overlap threshold in [0, 1].
    order : {"index", "power"}
        UT visiting order: ascending index or descending total power.
    grouping : {"round-robin", "contiguous"}
        How the visiting order is split into groups.

    Returns
    -------
    ScheduleResult
    """
    adcpms = check_adcpms(adcpms)
    K, M, Ng = adcpms.shape
    Q = int(Q)
    if Q < 1:
        raise ValueError("Q must be positive")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma={gamma} outside [0, 1]")
    Nc = cfg.Nc
    cols = np.arange(Ng)
    phis = np.zeros(K, dtype=int)
    achieved = np.zeros(K)
    for r, members in enumerate(_partition(adcpms, Q, order, grouping)):
        aggregate = np.zeros((M, Nc))
        for pos, k in enumerate(members):
            omega = adcpms[k]
            norm_k = np.linalg.norm(omega)
            norm_b = np.linalg.norm(aggregate)
            if pos == 0 or norm_k == 0 or norm_b == 0:
                s, xi = 0, 0.0
            else:
                xis = _overlap_all_shifts(omega, aggregate) / (norm_k * norm_b)
                feasible = np.flatnonzero(xis <= gamma)
                s = int(feasible[0]) if feasible.size else int(np.argmin(xis))
                xi = float(min(xis[s], 1.0))
            aggregate[:, (cols + s) % Nc] += omega
            phis[k] = s * Q + r
            achieved[k] = xi
    schedule = PilotSchedule(Q=Q, Nc=Nc, phis=tuple(int(p) for p in phis), scheme="apsp")
    pairwise = check_nonoverlap_condition(schedule, adcpms, cfg)
    return ScheduleResult(schedule, achieved, bool(pairwise.all()), pairwise)


def exhaustive_schedule(adcpms, cfg, Q=1):
    """Schedule minimising the analytic sum MSE-CE by full enumeration.

    UT 0 is pinned to ``phi = 0`` (the objective only depends on phase
    differences). Ties go to the lexicographically smallest pattern.
    Limited to ``K <= 4`` and ``Q * Nc <= 64``.
    """
    adcpms = check_adcpms(adcpms)
    K = adcpms.shape[0]
    Q = int(Q)
    n_phi = Q * cfg.Nc
    if K > EXHAUSTIVE_MAX_K or n_phi > EXHAUSTIVE_MAX_SHIFTS:
        raise ValueError(
            f"exhaustive search over {n_phi}^{K - 1} patterns refused: needs "
            f"K <= {EXHAUSTIVE_MAX_K} (got {K}) and Q*Nc <= {EXHAUSTIVE_MAX_SHIFTS} (got {n_phi})"
        )
    best, best_phis = np.inf, (0,) * K
    for rest in itertools.product(range(n_phi), repeat=K - 1):
        phis = (0,) + rest
        schedule = PilotSchedule(Q=Q, Nc=cfg.Nc, phis=phis)
        total = analytic_mse_ce(schedule, adcpms, cfg).total
        if total < best:
            best, best_phis = total, phis
    return evaluate_schedule(PilotSchedule(Q=Q, Nc=cfg.Nc, phis=best_phis), adcpms, cfg)


def evaluate_schedule(schedule, adcpms, cfg):
    """Overlap diagnostics of an arbitrary schedule.

    Achieved overlaps are taken against the earlier-indexed UTs of each group.
    """
    adcpms = check_adcpms(adcpms)
    pairwise = check_nonoverlap_condition(schedule, adcpms, cfg)
    achieved = _achieved_overlaps(schedule, adcpms, cfg)
    return ScheduleResult(schedule, achieved, bool(pairwise.all()), pairwise)


def _achieved_overlaps(schedule, adcpms, cfg):
    K, M, Ng = adcpms.shape
    cols = np.arange(Ng)
    out = np.zeros(K)
    aggregates = {}
    for k in range(K):
        g, s = schedule.groups[k], schedule.shifts[k]
        agg = aggregates.setdefault(g, np.zeros((M, cfg.Nc)))
        ext = np.zeros((M, cfg.Nc))
        ext[:, (cols + s) % cfg.Nc] = adcpms[k]
        if np.any(agg) and np.any(ext):
            out[k] = overlap(ext, agg)
        agg += ext
    return out


def write_diagnostics(result, path):
    """CSV with one row per UT: ``ut, phi, group, shift, overlap, condition_met``."""
    sch = result.schedule
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["ut", "phi", "group", "shift", "overlap", "condition_met"])
            for k in range(sch.K):
                writer.writerow([k, sch.phis[k], int(sch.groups[k]), int(sch.shifts[k]),
                                 f"{result.achieved_overlaps[k]:.12e}",
                                 int(result.pairwise[k].all())])
    except OSError as exc:
        raise OSError(f"cannot write diagnostics to {path}: {exc}") from exc


class PhaseShiftScheduler(BaseEstimator):
    """Estimator-style wrapper around :func:`schedule_apsp`.

    ``fit`` takes the (K, M, Ng) stack of power matrices; the fitted
    schedule is in ``schedule_`` and ``predict`` returns the phase shifts.

    Parameters
    ----------
    n_subcarriers : int, default=512
    Q : int, default=1
    gamma : float, default=1e-4
    order : {"index", "power"}, default="index"
    grouping : {"round-robin", "contiguous"}, default="round-robin"
    rho_tr : float, default=10.0
        Pilot SNR used by ``score``.
    """

    def __init__(self, n_subcarriers=512, Q=1, gamma=1e-4, order="index",
                 grouping="round-robin", rho_tr=10.0):
        self.n_subcarriers = n_subcarriers
        self.Q = Q
        self.gamma = gamma
        self.order = order
        self.grouping = grouping
        self.rho_tr = rho_tr

    def _config(self, adcpms):
        K, M, Ng = adcpms.shape
        return SystemConfig(M=M, Nc=self.n_subcarriers, Ng=Ng, K=K, rho_tr=self.rho_tr)

    def fit(self, X, y=None):
        adcpms = check_adcpms(X)
        self.result_ = schedule_apsp(adcpms, self._config(adcpms), self.Q, self.gamma,
                                     self.order, self.grouping)
        self.schedule_ = self.result_.schedule
        return self

    def predict(self, X=None):
        if not hasattr(self, "schedule_"):
            raise NotFittedError("PhaseShiftScheduler is not fitted yet")
        return np.array(self.schedule_.phis)

    def score(self, X, y=None):
        """Negative normalised analytic sum MSE-CE of the fitted schedule on ``X``."""
        if not hasattr(self, "schedule_"):
            raise NotFittedError("PhaseShiftScheduler is not fitted yet")
        adcpms = check_adcpms(X)
        return -analytic_mse_ce(self.schedule_, adcpms, self._config(adcpms)).normalized_total

"""Pilot sequences: the shared basic sequence, adjustable phase shift pilots
over one or Q symbols, and the conventional phase-shift-orthogonal baseline.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .transforms import dft_matrix

__all__ = [
    "BasicPilot",
    "PilotSchedule",
    "make_basic_pilot",
    "make_apsp_single",
    "make_apsp_multi",
    "make_pilot",
    "pilot_cross_correlation",
    "expected_cross_correlation",
    "make_psop_schedule",
    "write_schedule",
    "read_schedule",
]

SCHEMES = ("apsp", "psop")


@dataclass(frozen=True)
class BasicPilot:
    """Unit-modulus frequency-domain sequence shared by all UTs."""

    x: np.ndarray
    kind: str = "zc"
    root: int = 1

    @property
    def Nc(self):
        return self.x.shape[0]


@dataclass(frozen=True)
class PilotSchedule:
    """Phase shift assignment for K UTs over a Q-symbol pilot segment.

    ``phis[k]`` lies in ``[0, Q*Nc)``; its residue mod Q is the UT's group
    and ``phis[k] // Q`` the single-symbol shift. For ``scheme="apsp"`` the
    pilot of UT k is ``sqrt(Q) U[phi mod Q, :] kron X_{phi // Q}``. For
    ``scheme="psop"`` ``U`` is the identity and the UT transmits only in
    symbol ``phi mod Q`` at the per-symbol power, without the sqrt(Q) gain.
    """

    Q: int
    Nc: int
    phis: tuple
    scheme: str = "apsp"
    U: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        phis = tuple(int(p) for p in self.phis)
        object.__setattr__(self, "phis", phis)
        if self.Q < 1 or self.Nc < 1:
            raise ValueError("Q and Nc must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown pilot scheme {self.scheme!r}")
        for k, p in enumerate(phis):
            if not 0 <= p < self.Q * self.Nc:
                raise ValueError(f"phase shift {p} of UT {k} outside [0, {self.Q * self.Nc})")
        if self.U is None:
            U = np.eye(self.Q, dtype=complex) if self.scheme == "psop" else dft_matrix(self.Q)
            object.__setattr__(self, "U", U)
        U = np.asarray(self.U, dtype=complex)
        if U.shape != (self.Q, self.Q) or np.abs(U.conj().T @ U - np.eye(self.Q)).max() > 1e-10:
            raise ValueError("U must be a Q x Q unitary matrix")
        object.__setattr__(self, "U", U)

    @property
    def K(self):
        return len(self.phis)

    @property
    def groups(self):
        return np.array(self.phis) % self.Q

    @property
    def shifts(self):
        return np.array(self.phis) // self.Q

    @property
    def energy_gain(self):
        """Factor multiplying the pilot SNR after decorrelation."""
        return self.Q if self.scheme == "apsp" else 1

    @property
    def amplitude(self):
        return math.sqrt(self.Q) if self.scheme == "apsp" else 1.0


def make_basic_pilot(Nc, kind="zc", root=1):
    """Basic pilot: all-ones, or a Zadoff-Chu root sequence of length Nc.

    Parameters
    ----------
    Nc : int
        Sequence length (number of subcarriers).
    kind : {"zc", "ones"}
    root : int
        Zadoff-Chu root index; must be coprime with ``Nc``.
    """
    Nc = int(Nc)
    if Nc < 1:
        raise ValueError("Nc must be positive")
    if kind == "ones":
        return BasicPilot(np.ones(Nc, dtype=complex), "ones", 0)
    if kind != "zc":
        raise ValueError(f"unknown basic pilot kind {kind!r}")
    if math.gcd(int(root), Nc) != 1:
        raise ValueError(f"root {root} is not coprime with Nc={Nc}")
    n = np.arange(Nc)
    # even-length and odd-length Zadoff-Chu definitions
    phase = n * n if Nc % 2 == 0 else n * (n + 1)
    x = np.exp(-1j * np.pi * int(root) * (phase % (2 * Nc)) / Nc)
    return BasicPilot(x, "zc", int(root))


def make_apsp_single(basic, phi, sigma_xtr=1.0):
    """Single-symbol pilot ``sqrt(sigma) exp(-j 2 pi n phi / Nc) x_n``."""
    Nc = basic.Nc
    if not 0 <= int(phi) < Nc:
        raise ValueError(f"phase shift {phi} outside [0, {Nc})")
    n = np.arange(Nc)
    return math.sqrt(sigma_xtr) * np.exp(-2j * np.pi * ((n * int(phi)) % Nc) / Nc) * basic.x


def make_apsp_multi(basic, U, phi, Q, sigma_xtr=1.0):
    """Q-symbol pilot; row q is ``sqrt(Q) U[phi mod Q, q]`` times the single-symbol
    pilot with shift ``phi // Q``. Returns an array of shape (Q, Nc)."""
    U = np.asarray(U, dtype=complex)
    Q = int(Q)
    if U.shape != (Q, Q) or np.abs(U.conj().T @ U - np.eye(Q)).max() > 1e-10:
        raise ValueError("U must be a Q x Q unitary matrix")
    if not 0 <= int(phi) < Q * basic.Nc:
        raise ValueError(f"phase shift {phi} outside [0, {Q * basic.Nc})")
    base = make_apsp_single(basic, int(phi) // Q, sigma_xtr)
    return math.sqrt(Q) * U[int(phi) % Q][:, None] * base[None, :]


def make_pilot(schedule, basic, ut, sigma_xtr=1.0):
    """Pilot of UT ``ut`` under ``schedule``, shape (Q, Nc)."""
    if not 0 <= ut < schedule.K:
        raise IndexError(f"unknown UT index {ut}")
    phi = schedule.phis[ut]
    base = make_apsp_single(basic, phi // schedule.Q, sigma_xtr)
    row = schedule.U[phi % schedule.Q]
    return schedule.amplitude * row[:, None] * base[None, :]


def pilot_cross_correlation(a, b):
    """Diagonal of ``X_a X_b^H``, summed over the pilot symbols.

    Pilots are diagonal matrices, so their product is diagonal; only its
    diagonal (length Nc) is returned.
    """
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    if a.shape != b.shape:
        raise ValueError(f"pilot shapes differ: {a.shape} vs {b.shape}")
    return np.sum(a * b.conj(), axis=0)


def expected_cross_correlation(phi_a, phi_b, Q, Nc, sigma_xtr=1.0, scheme="apsp"):
    """Closed form ``sigma Q delta(phi_a = phi_b mod Q) D_{phi_a//Q - phi_b//Q}``.

    For PSOP pilots the factor Q is absent.
    """
    if phi_a % Q != phi_b % Q:
        return np.zeros(Nc, dtype=complex)
    d = phi_a // Q - phi_b // Q
    n = np.arange(Nc)
    gain = Q if scheme == "apsp" else 1
    return sigma_xtr * gain * np.exp(-2j * np.pi * ((n * d) % Nc) / Nc)


def make_psop_schedule(K, Ng, Nc):
    """Conventional phase-shift-orthogonal pilots.

    ``floor(Nc/Ng)`` UTs share each symbol with shifts ``0, Ng, 2Ng, ...``;
    ``Q = ceil(K / floor(Nc/Ng))`` symbols are used.
    """
    per_symbol = Nc // Ng
    Q = -(-K // per_symbol)
    phis = []
    for k in range(K):
        symbol, slot = divmod(k, per_symbol)
        phis.append(slot * Ng * Q + symbol)
    return PilotSchedule(Q=Q, Nc=Nc, phis=tuple(phis), scheme="psop")


def write_schedule(schedule, path):
    """Write ``# Q=.. Nc=.. scheme=..`` then one ``ut phi`` line per UT."""
    lines = [f"# Q={schedule.Q} Nc={schedule.Nc} scheme={schedule.scheme}"]
    lines += [f"{k} {p}" for k, p in enumerate(schedule.phis)]
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write schedule to {path}: {exc}") from exc


def read_schedule(path):
    header = {}
    entries = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    header[key] = value
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'ut phi', got {line!r}")
            ut, phi = int(parts[0]), int(parts[1])
            if ut in entries:
                raise ValueError(f"{path}:{lineno}: duplicate UT {ut}")
            entries[ut] = phi
    if "Q" not in header or "Nc" not in header:
        raise ValueError(f"{path}: header must carry Q and Nc")
    if sorted(entries) != list(range(len(entries))):
        raise ValueError(f"{path}: UT indices must be 0..K-1")
    return PilotSchedule(
        Q=int(header["Q"]),
        Nc=int(header["Nc"]),
        phis=tuple(entries[k] for k in range(len(entries))),
        scheme=header.get("scheme", "apsp"),
    )

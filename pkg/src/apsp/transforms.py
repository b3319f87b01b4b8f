"""Linear-algebra and special-function kernels.

DFT matrices, the centred angle-domain transform, ULA steering vectors,
cyclic column shifts and the zeroth-order Bessel function of the first kind.
"""

import math

import numpy as np

__all__ = [
    "dft_matrix",
    "steering_vector",
    "centered_dft_matrix",
    "angle_grid",
    "cyclic_shift_columns",
    "bessel_j0",
]

# |x| <= _J0_SWITCH uses the power series, beyond it the Hankel expansion.
# Series cancellation grows past ~12; the Hankel series diverges after ~2|x| terms.
_J0_SWITCH = 12.0
_J0_SERIES_TERMS = 60
_J0_ASYMPTOTIC_TERMS = 12


def dft_matrix(N):
    """Unitary DFT matrix with entry (n, q) = exp(-j 2 pi n q / N) / sqrt(N)."""
    N = _check_count(N, "N")
    n = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(n, n) / N) / np.sqrt(N)


def steering_vector(M, theta):
    """ULA response with half-wavelength spacing.

    Parameters
    ----------
    M : int
        Number of antennas.
    theta : float
        Incidence angle in radians, measured from the array broadside.
        Must lie in ``[-pi/2, pi/2]``.

    Returns
    -------
    v : ndarray of shape (M,)
        ``v[m] = exp(-j pi m sin(theta))``.
    """
    M = _check_count(M, "M")
    theta = float(theta)
    if not np.isfinite(theta) or abs(theta) > np.pi / 2 + 1e-15:
        raise ValueError(f"theta={theta!r} outside [-pi/2, pi/2]")
    return np.exp(-1j * np.pi * np.arange(M) * np.sin(theta))


def centered_dft_matrix(M):
    """Angle-domain transform ``V_M[i, j] = exp(-j 2 pi i (j - M/2) / M) / sqrt(M)``.

    Column ``j`` is the steering vector at ``arcsin(2 j / M - 1)`` scaled by
    ``1/sqrt(M)``. Only even ``M`` is supported.
    """
    M = _check_count(M, "M")
    if M % 2:
        raise ValueError(f"M={M} must be even for the centred transform")
    i = np.arange(M)[:, None]
    j = np.arange(M)[None, :]
    return np.exp(-2j * np.pi * i * (j - M / 2) / M) / np.sqrt(M)


def angle_grid(M):
    """Grid angles ``theta_m = arcsin(2 m / M - 1)`` for ``m = 0..M`` (M+1 points)."""
    M = _check_count(M, "M")
    u = np.clip(2.0 * np.arange(M + 1) / M - 1.0, -1.0, 1.0)
    return np.arcsin(u)


def cyclic_shift_columns(A, n):
    """Return ``A @ Pi^n``: column j of the result is column ``(j - n) mod Nc`` of A.

    The permutation is applied as an index remap; the permutation matrix is
    never formed.
    """
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] < 1:
        raise ValueError("A must be a matrix with at least one column")
    return np.roll(A, int(n) % A.shape[-1], axis=-1)


def bessel_j0(x):
    """Bessel function of the first kind, order zero.

    Power series for ``|x| <= 12`` and the Hankel asymptotic expansion
    beyond; absolute error stays below 1e-10 for ``|x| <= 100``.

    Parameters
    ----------
    x : float or array_like
        Finite real argument(s).

    Returns
    -------
    float or ndarray
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j0 requires finite arguments")
    ax = np.abs(arr)
    out = np.empty_like(ax)
    small = ax <= _J0_SWITCH
    if np.any(small):
        out[small] = _j0_series(ax[small])
    if np.any(~small):
        out[~small] = _j0_asymptotic(ax[~small])
    if out.ndim == 0:
        return float(out)
    return out


def _j0_series(x):
    # sum_k (-1)^k (x^2/4)^k / (k!)^2, terms built by recurrence
    z = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _J0_SERIES_TERMS):
        term = -term * z / (k * k)
        total = total + term
    return total


def _hankel_coefficients(n_terms):
    # a_k(0) = prod_{i=1..k} (-(2i-1)^2) / (k! 8^k)
    coeffs = [1.0]
    for k in range(1, n_terms):
        coeffs.append(coeffs[-1] * (-((2 * k - 1) ** 2)) / (k * 8.0))
    return coeffs


_HANKEL = _hankel_coefficients(2 * _J0_ASYMPTOTIC_TERMS)


def _j0_asymptotic(x):
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    inv = 1.0 / x
    for k in range(_J0_ASYMPTOTIC_TERMS):
        sign = -1.0 if k % 2 else 1.0
        p += sign * _HANKEL[2 * k] * inv ** (2 * k)
        q += sign * _HANKEL[2 * k + 1] * inv ** (2 * k + 1)
    omega = x - math.pi / 4
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(omega) - q * np.sin(omega))


def _check_count(value, name):
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)

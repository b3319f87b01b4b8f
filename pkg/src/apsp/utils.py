"""Input validation and random-stream helpers shared across modules."""

import numbers

import numpy as np

__all__ = [
    "check_adcpm",
    "check_adcpms",
    "check_complex_matrix",
    "stream_rng",
    "as_generator",
]


def check_adcpm(omega, shape=None, name="omega"):
    """Validate a single nonnegative angle-delay power matrix."""
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {omega.shape}")
    if shape is not None and omega.shape != tuple(shape):
        raise ValueError(f"{name} has shape {omega.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(omega)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(omega < 0):
        raise ValueError(f"{name} has negative entries")
    return omega


def check_adcpms(adcpms, shape=None):
    """Validate a stack of K power matrices; returns a float array (K, M, Ng)."""
    arr = np.asarray(adcpms, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] < 1:
        raise ValueError(f"expected a (K, M, Ng) stack of ADCPMs, got shape {arr.shape}")
    if shape is not None and arr.shape[1:] != tuple(shape):
        raise ValueError(f"ADCPMs have shape {arr.shape[1:]}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("ADCPMs must be finite and nonnegative")
    return arr


def check_complex_matrix(a, shape=None, name="array"):
    a = np.asarray(a)
    if not np.iscomplexobj(a):
        a = a.astype(complex)
    if shape is not None and a.shape[-2:] != tuple(shape):
        raise ValueError(f"{name} has trailing shape {a.shape[-2:]}, expected {tuple(shape)}")
    return a


def stream_rng(seed, *key):
    """Counter-based generator for the stream identified by ``(seed, *key)``.

    Each (trial, UT, symbol, ...) key yields an independent Philox stream,
    so results do not depend on the order in which streams are consumed.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    """Turn None, an int seed, a SeedSequence or a Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (numbers.Integral, np.random.SeedSequence)):
        return np.random.Generator(np.random.Philox(rng))
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")

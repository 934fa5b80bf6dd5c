"""Shared test oracles.

These helpers are deliberately independent of the package's signal
processing paths: delays are measured by direct cross-correlation, and
band-limited test signals are built straight from FFT bins.
"""

from __future__ import annotations

import numpy as np


def xcorr_lag(a: np.ndarray, b: np.ndarray, max_lag: int) -> int:
    """Integer lag k in [-max_lag, max_lag] maximising sum(a[n] * b[n - k]).

    Positive lag means ``a`` contains the content of ``b`` delayed by k
    samples.
    """
    n = len(a) + len(b)
    fa = np.fft.rfft(a, n)
    fb = np.fft.rfft(b, n)
    cc = np.fft.irfft(fa * np.conj(fb), n)
    lags = np.concatenate([cc[-max_lag:], cc[: max_lag + 1]])
    return int(np.argmax(lags)) - max_lag


def xcorr_lag_subsample(a: np.ndarray, b: np.ndarray, max_lag: int) -> float:
    """Like :func:`xcorr_lag` but with parabolic peak interpolation."""
    n = len(a) + len(b)
    fa = np.fft.rfft(a, n)
    fb = np.fft.rfft(b, n)
    cc = np.fft.irfft(fa * np.conj(fb), n)
    lags = np.concatenate([cc[-max_lag:], cc[: max_lag + 1]])
    k = int(np.argmax(lags))
    if 0 < k < len(lags) - 1:
        y0, y1, y2 = lags[k - 1], lags[k], lags[k + 1]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            k = k + 0.5 * (y0 - y2) / denom
    return float(k) - max_lag


def bandlimited_noise(n: int, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS noise whose spectrum occupies only [lo, hi) in normalised
    frequency (0..0.5 is DC..Nyquist), built directly from random FFT bins."""
    spec = np.zeros(n // 2 + 1, dtype=complex)
    bins = np.arange(n // 2 + 1)
    keep = (bins >= lo * n) & (bins < hi * n)
    spec[keep] = rng.standard_normal(keep.sum()) + 1j * rng.standard_normal(keep.sum())
    x = np.fft.irfft(spec, n)
    return x / np.sqrt(np.mean(x**2))

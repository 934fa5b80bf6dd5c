"""WAV file I/O: 16-bit PCM and 32-bit float, mono and multichannel.

The sample rate is always taken from the RIFF header.  When the caller
states an expected rate, a mismatch is an error — files are never
silently resampled.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile


def read_wav(path, expected_rate: int | None = None) -> tuple[np.ndarray, int]:
    """Read a WAV file as float64 in [-1, 1); returns (samples, rate).

    Multichannel data comes back with shape (n_samples, n_channels).
    """
    rate, data = wavfile.read(path)
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(
            f"{path}: header sample rate {rate} Hz does not match expected "
            f"{expected_rate} Hz; refusing to resample implicitly"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample format {data.dtype}")
    return samples, rate


def write_wav(path, samples: np.ndarray, rate: int, subtype: str = "float32") -> None:
    """Write samples as float32 (default) or 16-bit PCM."""
    samples = np.asarray(samples)
    if subtype == "float32":
        wavfile.write(path, rate, samples.astype(np.float32))
    elif subtype == "pcm16":
        clipped = np.clip(samples, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, rate, np.round(clipped * 32768.0).astype(np.int16))
    else:
        raise ValueError(f"unsupported subtype {subtype!r} (use 'float32' or 'pcm16')")

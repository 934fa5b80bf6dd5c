"""Time/frequency conversion and fractional resampling primitives.

Conventions used throughout the package:

* time signals are 1-D float arrays with an explicit sample rate
  (nominally 16 kHz),
* spectrograms are complex arrays of shape (T, F) with a one-sided
  spectrum, F = frame_len // 2 + 1,
* analysis uses a periodic Hann window, frames are taken only where a
  full window fits (no implicit padding), and synthesis is weighted
  overlap-add normalised by the accumulated squared window.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import get_window


@dataclass(frozen=True)
class TimeSignal:
    """A sampled waveform plus its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"expected a 1-D sample array, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis parameters: 32 ms periodic Hann, 50 % overlap at 16 kHz."""

    frame_len: int = 512
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.frame_len <= 0 or self.frame_len % 2 != 0:
            raise ValueError(f"frame_len must be a positive even number, got {self.frame_len}")
        if self.hop != self.frame_len // 2:
            raise ValueError("hop must equal frame_len / 2 (50 % overlap)")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    def window_array(self) -> np.ndarray:
        # fftbins=True gives the periodic form, which satisfies COLA at 50 % hop
        return _cached_window(self.window, self.frame_len).copy()


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT grid of shape (T frames, F bins)."""

    data: np.ndarray
    frame_len: int
    hop: int
    sample_rate: int = 16000

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise ValueError(f"expected (T, F) data, got shape {data.shape}")
        if data.shape[1] != self.frame_len // 2 + 1:
            raise ValueError(
                f"F = {data.shape[1]} does not match frame_len {self.frame_len} "
                f"(expected {self.frame_len // 2 + 1})"
            )
        if self.hop != self.frame_len // 2:
            raise ValueError("hop must equal frame_len / 2")
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)


@lru_cache(maxsize=8)
def _cached_window(kind: str, frame_len: int) -> np.ndarray:
    win = get_window(kind, frame_len, fftbins=True)
    win.flags.writeable = False
    return win


@lru_cache(maxsize=32)
def _cached_wsum(kind: str, frame_len: int, hop: int, n_frames: int) -> np.ndarray:
    """Accumulated squared synthesis window for a given frame count.

    The normalisation floor is clamped to 1 % of the peak: dividing by the
    vanishing window tails at the very edges would amplify any spectrogram
    modification without bound there, so the outermost few samples are
    attenuated instead.  Interior reconstruction is unaffected.
    """
    wsq = _cached_window(kind, frame_len) ** 2
    wsum = np.zeros((n_frames - 1) * hop + frame_len)
    for parity in (0, 1):
        n_chunk = len(range(parity, n_frames, 2))
        if n_chunk:
            start = parity * hop
            seg = wsum[start : start + n_chunk * frame_len]
            seg.reshape(n_chunk, frame_len)[:] += wsq
    out = np.maximum(wsum, 1e-2 * wsum.max())
    out.flags.writeable = False
    return out


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Slice ``x`` into (T, frame_len) frames, keeping only full windows."""
    n = x.shape[0]
    if n < frame_len:
        raise ValueError("signal too short")
    n_frames = 1 + (n - frame_len) // hop
    strided = np.lib.stride_tricks.sliding_window_view(x, frame_len)
    return strided[:: hop][:n_frames]


def stft(signal: TimeSignal, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Short-time Fourier transform with a periodic Hann analysis window.

    T = 1 + floor((len - frame_len) / hop); edge samples that do not fill
    a whole window are dropped, callers pad explicitly if they need them.
    """
    frames = frame_signal(signal.samples, cfg.frame_len, cfg.hop)
    data = np.fft.rfft(frames * _cached_window(cfg.window, cfg.frame_len), axis=-1)
    return Spectrogram(data, cfg.frame_len, cfg.hop, signal.sample_rate)


def istft(spec: Spectrogram, cfg: StftConfig = StftConfig()) -> TimeSignal:
    """Weighted overlap-add synthesis, normalised by the summed squared window.

    Output length is (T - 1) * hop + frame_len.  Interior samples of an
    unmodified spectrogram are reconstructed to machine precision.
    """
    if spec.frame_len != cfg.frame_len or spec.hop != cfg.hop:
        raise ValueError(
            f"spectrogram frame_len/hop ({spec.frame_len}/{spec.hop}) do not match "
            f"config ({cfg.frame_len}/{cfg.hop})"
        )
    win = _cached_window(cfg.window, cfg.frame_len)
    frames = np.fft.irfft(spec.data, n=cfg.frame_len, axis=-1)
    frames *= win
    n_frames = frames.shape[0]
    out_len = (n_frames - 1) * cfg.hop + cfg.frame_len
    out = np.zeros(out_len)
    # at 50 % overlap the even-indexed frames tile the output without
    # overlapping each other, and likewise the odd-indexed ones
    for parity in (0, 1):
        chunk = frames[parity::2]
        if chunk.shape[0] == 0:
            continue
        start = parity * cfg.hop
        seg = out[start : start + chunk.shape[0] * cfg.frame_len]
        seg.reshape(chunk.shape[0], cfg.frame_len)[:] += chunk
    out /= _cached_wsum(cfg.window, cfg.frame_len, cfg.hop, n_frames)
    return TimeSignal(out, spec.sample_rate)


# --- fractional resampler -------------------------------------------------

_KERNEL_TAPS = 32
_KERNEL_HALF = _KERNEL_TAPS // 2
_N_PHASES = 512
_KAISER_BETA = 8.6


def _polyphase_table() -> np.ndarray:
    """(N_PHASES + 1, TAPS) windowed-sinc rows; row p interpolates at offset p/N_PHASES.

    Rows are normalised to unit sum so that DC gain is exact; row 0 is the
    identity stencil (sinc at the integers).
    """
    offsets = np.arange(_N_PHASES + 1) / _N_PHASES
    # tap j of row p evaluates the kernel at (j - HALF + 1) - offset
    j = np.arange(_KERNEL_TAPS) - (_KERNEL_HALF - 1)
    u = j[None, :] - offsets[:, None]
    window = np.i0(_KAISER_BETA * np.sqrt(np.clip(1.0 - (u / _KERNEL_HALF) ** 2, 0.0, 1.0)))
    window /= np.i0(_KAISER_BETA)
    table = np.sinc(u) * window
    return table / table.sum(axis=1, keepdims=True)


_TABLE = _polyphase_table()


def resample_fractional(signal: TimeSignal, ratio: float) -> TimeSignal:
    """Resample by a ratio close to 1 using windowed-sinc interpolation.

    Output sample t takes the value of the band-limited input at time
    t * ratio, so a ratio of 1 + eps accumulates a drift of n * eps input
    samples by output sample n.  Output length is round(len / ratio).
    Supported ratios are [0.999, 1.001] (the ppm-scale SRO regime).
    """
    if not 0.999 <= ratio <= 1.001:
        raise ValueError(f"resampling ratio {ratio} outside supported range [0.999, 1.001]")
    x = signal.samples
    n_in = x.shape[0]
    n_out = int(round(n_in / ratio))
    if ratio == 1.0:
        return TimeSignal(x.copy(), signal.sample_rate)

    t = np.arange(n_out) * ratio
    base = np.floor(t).astype(np.int64)
    frac = t - base
    phase = frac * _N_PHASES
    p0 = np.floor(phase).astype(np.int64)
    alpha = (phase - p0)[:, None]
    taps = (1.0 - alpha) * _TABLE[p0] + alpha * _TABLE[p0 + 1]

    pad = _KERNEL_TAPS
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    windows = np.lib.stride_tricks.sliding_window_view(xp, _KERNEL_TAPS)
    # tap 0 of a row multiplies sample base - (HALF - 1)
    rows = windows[base - (_KERNEL_HALF - 1) + pad]
    y = np.einsum("nk,nk->n", rows, taps)
    return TimeSignal(y, signal.sample_rate)

"""Synthetic frame-shift task for exercising the alignment attention.

Each item is a window of magnitude 'spectrogram' channels cut from a
longer underlying sequence: the reference channel is target-plus-noise,
each foreign channel is a noisy view of the target cut with a frame
offset (positive offset = foreign channel lags).  Labels are the
reference channel's ideal ratio mask at the middle frame.

The construction mirrors what makes real spectrograms alignable and
what makes the alignment worth learning: the target's active frequency
support changes from one time block to the next while per-frame energy
stays constant (frames are distinguished by pattern, not loudness), the
reference noise is white in time, and the foreign views are noisy
enough that a second, correctly aligned look at the target pays off.
"""

from __future__ import annotations

import numpy as np


def _activity(
    rng: np.random.Generator,
    n_frames: int,
    n_bins: int,
    block_len: int = 7,
    frame_norm: float = 2.0,
) -> np.ndarray:
    """Block-sparse non-negative field with constant frame energy."""
    n_blocks = n_frames // block_len + 2
    k = max(2, n_bins // 4)
    field = np.zeros((n_blocks * block_len, n_bins))
    for blk in range(n_blocks):
        bins = rng.choice(n_bins, size=k, replace=False)
        field[blk * block_len : (blk + 1) * block_len, bins] = 1.0
    field = field[:n_frames]
    # light temporal smoothing keeps block edges from being perfectly sharp
    kernel = np.array([0.2, 0.6, 0.2])
    field = np.apply_along_axis(lambda v: np.convolve(v, kernel, mode="same"), 0, field)
    norms = np.linalg.norm(field, axis=1, keepdims=True)
    return frame_norm * field / np.maximum(norms, 1e-9)


def make_shift_dataset(
    n_items: int,
    shifts,
    n_foreign: int = 1,
    t_win: int = 21,
    n_bins: int = 32,
    noise_level: float = 1.2,
    foreign_noise: float = 0.9,
    block_len: int = 7,
    seed: int = 0,
):
    """Returns (channels (N, J+1, T, F), labels (N, F), item_shifts (N, J)).

    ``shifts`` may be a list of candidate integer frame offsets (drawn
    uniformly per item/channel) or an (N, J) array of explicit offsets.
    """
    rng = np.random.default_rng(seed)
    shifts = np.asarray(shifts)
    if shifts.ndim == 2:
        item_shifts = shifts
        assert item_shifts.shape == (n_items, n_foreign)
    else:
        item_shifts = rng.choice(shifts, size=(n_items, n_foreign))
    max_shift = int(np.max(np.abs(item_shifts)))
    t_long = t_win + 2 * max_shift + 4
    scale = 2.0 / np.sqrt(n_bins)

    channels = np.empty((n_items, n_foreign + 1, t_win, n_bins))
    labels = np.empty((n_items, n_bins))
    for i in range(n_items):
        target = _activity(rng, t_long, n_bins, block_len=block_len)
        noise = noise_level * np.abs(rng.standard_normal((t_long, n_bins))) * scale
        o = max_shift + 2
        channels[i, 0] = target[o : o + t_win] + noise[o : o + t_win]
        for j in range(n_foreign):
            d = int(item_shifts[i, j])
            view = target[o - d : o - d + t_win]
            channels[i, j + 1] = view + foreign_noise * np.abs(
                rng.standard_normal((t_win, n_bins))
            ) * scale
        mid = o + t_win // 2
        labels[i] = target[mid] / np.maximum(target[mid] + noise[mid], 1e-12)
    return channels, labels, item_shifts


def readout_config() -> dict:
    """Generator settings for STO read-out evaluations: short blocks and a
    cleaner foreign view give crisp similarity diagonals."""
    return {"block_len": 3, "foreign_noise": 0.4, "noise_level": 0.9}


def make_separable_dataset(n_items: int, t_win: int = 9, n_bins: int = 16, seed: int = 0):
    """Target and noise occupy disjoint frequency bins, so the ideal mask is
    binary and a linear head can nail it."""
    rng = np.random.default_rng(seed)
    half = n_bins // 2
    channels = np.zeros((n_items, 2, t_win, n_bins))
    labels = np.zeros((n_items, n_bins))
    for i in range(n_items):
        target = np.zeros((t_win, n_bins))
        noise = np.zeros((t_win, n_bins))
        target[:, :half] = 0.5 + np.abs(rng.standard_normal((t_win, half)))
        noise[:, half:] = 0.5 + np.abs(rng.standard_normal((t_win, n_bins - half)))
        channels[i, 0] = target + noise
        channels[i, 1] = target
        mid = t_win // 2
        labels[i] = target[mid] / np.maximum(target[mid] + noise[mid], 1e-12)
    return channels, labels

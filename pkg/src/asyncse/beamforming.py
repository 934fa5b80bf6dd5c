"""TF masks, mask-weighted spatial covariances and the rank-1 GEVD MWF.

Shape conventions: multichannel STFT data is (M, T, F) complex, masks are
(T, F) real in [0, 1], per-frequency covariance stacks are (F, M, M), and
beamformer weights are (F, M).

The spatial filter is a speech-distortion-weighted multichannel Wiener
filter.  Per frequency bin the speech covariance is rebuilt as a rank-1
matrix from the dominant generalized eigenpair of (R_yy, R_nn); the
filter is then w = (R_ss + mu * R_nn)^-1 R_ss e_ref.  The GEVD runs on
Cholesky-whitened matrices, which is stable for the small channel counts
used here and keeps the eigenvector normalisation q^H R_nn q = 1 for
free.  All per-bin computations are batched over frequency and are pure,
so callers may shard the frequency axis across threads if they wish.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LOADING = 1e-6


@dataclass(frozen=True)
class CovariancePair:
    """Per-frequency mixture and noise covariances plus the mask mass that
    produced the noise estimate."""

    r_yy: np.ndarray  # (F, M, M) Hermitian
    r_nn: np.ndarray  # (F, M, M) Hermitian
    weight_mass: np.ndarray  # (F,) accumulated (1 - mask) weights
    fallback_bins: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    @property
    def n_channels(self) -> int:
        return self.r_yy.shape[-1]


@dataclass(frozen=True)
class BeamWeights:
    """Per-frequency filter vectors and the distortion trade-off used."""

    w: np.ndarray  # (F, M)
    mu: float
    lambda1: np.ndarray | None = None  # dominant GEVD eigenvalue per bin


def ideal_ratio_mask(target: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """|S| / (|S| + |N|) with the 0/0 convention resolved to 0."""
    target = np.asarray(target)
    noise = np.asarray(noise)
    if target.shape != noise.shape:
        raise ValueError(f"shape mismatch: target {target.shape} vs noise {noise.shape}")
    s = np.abs(target)
    denom = s + np.abs(noise)
    return np.divide(s, denom, out=np.zeros_like(s, dtype=float), where=denom > 0)


def estimate_covariances(inputs: np.ndarray, mask: np.ndarray) -> CovariancePair:
    """Batch covariance estimates over all frames.

    R_nn(f) is the (1 - mask)-weighted average of the per-frame outer
    products, R_yy(f) the plain average.  Bins whose noise weights sum to
    zero fall back to a tiny identity (flagged in ``fallback_bins``).
    """
    inputs = np.asarray(inputs)
    if inputs.ndim != 3:
        raise ValueError(f"expected (M, T, F) input, got shape {inputs.shape}")
    n_ch, n_frames, n_bins = inputs.shape
    if mask.shape != (n_frames, n_bins):
        raise ValueError(f"mask shape {mask.shape} does not match frames/bins ({n_frames}, {n_bins})")

    y = np.moveaxis(inputs, 0, -1)  # (T, F, M)
    r_yy = np.einsum("tfm,tfn->fmn", y, y.conj()) / n_frames

    wgt = 1.0 - mask
    mass = wgt.sum(axis=0)  # (F,)
    r_nn_raw = np.einsum("tf,tfm,tfn->fmn", wgt, y, y.conj())
    ok = mass > 1e-12
    r_nn = np.empty_like(r_nn_raw)
    r_nn[ok] = r_nn_raw[ok] / mass[ok, None, None]
    fallback = np.where(~ok)[0]
    if fallback.size:
        eye = np.eye(n_ch)
        trace = np.einsum("fmm->f", r_yy[~ok]).real
        r_nn[~ok] = (DEFAULT_LOADING * trace / n_ch)[:, None, None] * eye

    r_yy = 0.5 * (r_yy + r_yy.conj().swapaxes(-1, -2))
    r_nn = 0.5 * (r_nn + r_nn.conj().swapaxes(-1, -2))
    return CovariancePair(r_yy, r_nn, mass, fallback)


def rank1_gevd_mwf(
    cov: CovariancePair,
    mu: float = 1.0,
    ref_channel: int = 0,
    loading: float = DEFAULT_LOADING,
) -> BeamWeights:
    """SDW-MWF from the dominant generalized eigenpair of (R_yy, R_nn).

    Per bin: solve R_yy q = lambda R_nn q, keep the largest pair, rebuild
    the speech covariance as max(lambda1 - 1, 0) * (R_nn q)(R_nn q)^H
    (unit-normalised in the whitened domain), and return
    (R_ss + mu R_nn)^-1 R_ss e_ref.  ``loading`` adds loading * trace / M
    to each matrix's diagonal first; pass 0 to disable the guard.
    """
    n_ch = cov.n_channels
    if not 0 <= ref_channel < n_ch:
        raise ValueError(f"ref_channel {ref_channel} out of range for {n_ch} channels")
    eye = np.eye(n_ch)
    r_yy, r_nn = cov.r_yy, cov.r_nn
    if loading:
        r_yy = r_yy + (loading / n_ch) * np.einsum("fmm->f", r_yy).real[:, None, None] * eye
        r_nn = r_nn + (loading / n_ch) * np.einsum("fmm->f", r_nn).real[:, None, None] * eye

    try:
        chol = np.linalg.cholesky(r_nn)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"noise covariance is not positive definite even after loading: {exc}"
        ) from exc
    # whitened mixture covariance L^-1 R_yy L^-H, kept exactly Hermitian
    tmp = np.linalg.solve(chol, r_yy)
    white = np.linalg.solve(chol, tmp.conj().swapaxes(-1, -2))
    white = 0.5 * (white + white.conj().swapaxes(-1, -2))
    lam, vec = np.linalg.eigh(white)
    lam1 = lam[:, -1]
    u1 = vec[:, :, -1]
    if not (np.all(np.isfinite(lam1)) and np.all(np.isfinite(u1))):
        bad = np.where(~(np.isfinite(lam1) & np.all(np.isfinite(u1), axis=1)))[0]
        raise FloatingPointError(f"non-finite GEVD eigenpair at frequency bins {bad.tolist()}")

    # R_nn q1 = L u1, and q1^H R_nn q1 = 1 because u1 has unit norm
    steer = np.einsum("fmn,fn->fm", chol, u1)
    gain = np.maximum(lam1 - 1.0, 0.0)
    r_ss = gain[:, None, None] * np.einsum("fm,fn->fmn", steer, steer.conj())

    w = np.linalg.solve(r_ss + mu * r_nn, r_ss[:, :, ref_channel, None])[:, :, 0]
    return BeamWeights(w=w, mu=mu, lambda1=lam1)


def apply_beamformer(weights: BeamWeights, inputs: np.ndarray) -> np.ndarray:
    """z(t, f) = w(f)^H y(t, f); returns a single-channel (T, F) array."""
    inputs = np.asarray(inputs)
    if inputs.ndim != 3 or inputs.shape[0] != weights.w.shape[1]:
        raise ValueError(
            f"inputs shape {inputs.shape} does not match {weights.w.shape[1]} filter channels"
        )
    if inputs.shape[2] != weights.w.shape[0]:
        raise ValueError(
            f"inputs have {inputs.shape[2]} bins but weights cover {weights.w.shape[0]}"
        )
    return np.einsum("fm,mtf->tf", weights.w.conj(), inputs)

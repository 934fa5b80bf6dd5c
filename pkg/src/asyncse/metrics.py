"""Objective evaluation: SI-SDR and the projection-based SDR/SIR/SAR split.

bss_eval decomposes an estimate into a part explained by filtered
versions of the target reference (s_target), a part explained by
filtered versions of the noise reference (e_interf) and a remainder
(e_artif), using least-squares projections with ``filter_len``-tap
filters.  Ratios are capped at +/-100 dB so CSV output stays finite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

DB_CAP = 100.0


@dataclass(frozen=True)
class MetricReport:
    si_sdr: float
    sdr: float
    sir: float
    sar: float


def _db(num: float, den: float) -> float:
    if den <= 0.0:
        return DB_CAP if num > 0.0 else -DB_CAP
    if num <= 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(num / den), -DB_CAP, DB_CAP))


def si_sdr(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Scale-invariant SDR: project the estimate onto the reference and
    compare projection energy against the residual."""
    estimate = np.asarray(estimate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if estimate.shape != reference.shape:
        raise ValueError(f"length mismatch: {estimate.shape} vs {reference.shape}")
    ref_energy = float(reference @ reference)
    if ref_energy == 0.0:
        raise ValueError("reference signal is identically zero")
    alpha = float(estimate @ reference) / ref_energy
    proj = alpha * reference
    resid = estimate - proj
    return _db(float(proj @ proj), float(resid @ resid))


def _lagged_gram(a: np.ndarray, b: np.ndarray, flen: int) -> np.ndarray:
    """G[i, j] = sum_n a[n - i] b[n - j] for lags 0..flen-1 (Toeplitz)."""
    corr = fftconvolve(a, b[::-1])
    mid = len(b) - 1
    row = corr[mid : mid + flen]  # lags 0, -1, ... for (i=0, j)
    col = corr[mid - flen + 1 : mid + 1][::-1]
    first_col = col  # lags for (i, j=0)
    g = np.empty((flen, flen))
    for i in range(flen):
        g[i, i:] = row[: flen - i]
        g[i:, i] = first_col[: flen - i]
    return g


def _project(refs: list[np.ndarray], est: np.ndarray, flen: int) -> np.ndarray:
    """Least-squares projection of ``est`` (zero-padded by flen-1) onto the
    span of flen-tap filtered references, via ridge-stabilised normal
    equations."""
    n_ref = len(refs)
    gram = np.empty((n_ref * flen, n_ref * flen))
    for i, ri in enumerate(refs):
        for j, rj in enumerate(refs):
            if j < i:
                gram[i * flen : (i + 1) * flen, j * flen : (j + 1) * flen] = gram[
                    j * flen : (j + 1) * flen, i * flen : (i + 1) * flen
                ].T
            else:
                gram[i * flen : (i + 1) * flen, j * flen : (j + 1) * flen] = _lagged_gram(ri, rj, flen)
    rhs = np.empty(n_ref * flen)
    for i, ri in enumerate(refs):
        corr = fftconvolve(est, ri[::-1])
        mid = len(ri) - 1
        rhs[i * flen : (i + 1) * flen] = corr[mid : mid + flen][: flen]
    ridge = 1e-8 * np.mean(np.diag(gram))
    if ridge <= 0.0:
        warnings.warn("rank-deficient projection basis; regularised solve", RuntimeWarning)
        ridge = 1e-12
    coeffs = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), rhs)
    out = np.zeros(len(est) + flen - 1)
    for i, ri in enumerate(refs):
        out += fftconvolve(ri, coeffs[i * flen : (i + 1) * flen], mode="full")[: len(out)]
    return out


def bss_eval(
    estimate: np.ndarray,
    target_ref: np.ndarray,
    noise_ref: np.ndarray,
    filter_len: int = 512,
) -> MetricReport:
    """SDR/SIR/SAR from the filtered-reference decomposition, plus SI-SDR.

    s_target is the projection of the estimate onto the target reference,
    e_interf the extra part captured once the noise reference joins the
    projection basis, and e_artif everything left over.
    """
    estimate = np.asarray(estimate, dtype=float)
    target_ref = np.asarray(target_ref, dtype=float)
    noise_ref = np.asarray(noise_ref, dtype=float)
    if not (estimate.shape == target_ref.shape == noise_ref.shape):
        raise ValueError("estimate and references must have equal lengths")

    s_target = _project([target_ref], estimate, filter_len)
    s_both = _project([target_ref, noise_ref], estimate, filter_len)
    est_pad = np.concatenate([estimate, np.zeros(filter_len - 1)])
    e_interf = s_both - s_target
    e_artif = est_pad - s_both

    e_s = float(s_target @ s_target)
    e_i = float(e_interf @ e_interf)
    e_a = float(e_artif @ e_artif)
    sf_i = s_target + e_interf
    return MetricReport(
        si_sdr=si_sdr(estimate, target_ref),
        sdr=_db(e_s, float((e_interf + e_artif) @ (e_interf + e_artif))),
        sir=_db(e_s, e_i),
        sar=_db(float(sf_i @ sf_i), e_a),
    )

"""Temporal-alignment attention for multi-node mask estimation.

Each foreign channel's magnitude frames are scored against the local
reference channel through a learnable bilinear form; a row-softmax turns
the scores into a row-stochastic similarity matrix whose rows re-weight
the reference frames into context vectors.  Context and foreign frames
are concatenated along frequency, and a small sigmoid head maps the
middle frame's features to a mask estimate.  The visible diagonal of a
similarity matrix doubles as an unsupervised estimate of the start-time
offset between the two channels.

Training is plain full-batch-shuffled gradient descent with analytic
gradients and global norm clipping; everything is numpy, no autodiff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class AttnHead:
    """Bilinear score matrix (or matrices) plus the linear mask head.

    ``w_score`` is (F, F) when shared across foreign channels, (J, F, F)
    when per-channel, or None for an attention-free head.  The head input
    is the middle frame's concatenated features: F reference values plus
    2F (with attention) or F (without) per foreign channel.
    """

    v: np.ndarray  # (F, D)
    b: np.ndarray  # (F,)
    w_score: np.ndarray | None
    n_foreign: int
    n_frames: int
    share_w: bool = True

    @property
    def uses_attention(self) -> bool:
        return self.w_score is not None

    @property
    def n_bins(self) -> int:
        return self.b.shape[0]

    def feature_dim(self) -> int:
        per_foreign = 2 if self.uses_attention else 1
        return self.n_bins * (1 + per_foreign * self.n_foreign)

    def w_for(self, j: int) -> np.ndarray:
        if self.w_score is None:
            raise ValueError("attention-free head has no score matrix")
        return self.w_score if self.share_w else self.w_score[j]


def init_head(
    n_bins: int,
    n_foreign: int,
    n_frames: int = 21,
    attention: bool = True,
    share_w: bool = True,
    seed: int = 0,
) -> AttnHead:
    """Identity-plus-noise score matrix, zero linear head (masks start at 0.5)."""
    rng = np.random.default_rng(seed)
    w = None
    if attention:
        shape = (n_bins, n_bins) if share_w else (n_foreign, n_bins, n_bins)
        w = rng.uniform(-0.01, 0.01, size=shape)
        if share_w:
            w += np.eye(n_bins)
        else:
            w += np.eye(n_bins)[None]
    per_foreign = 2 if attention else 1
    d = n_bins * (1 + per_foreign * n_foreign)
    return AttnHead(
        v=np.zeros((n_bins, d)),
        b=np.zeros(n_bins),
        w_score=w,
        n_foreign=n_foreign,
        n_frames=n_frames,
        share_w=share_w,
    )


# --- attention primitives ---------------------------------------------------


def score(ref: np.ndarray, other: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Bilinear frame scores s(m, n) = ref[m] . w . other[n]; (T, T) output."""
    ref = np.asarray(ref)
    other = np.asarray(other)
    if ref.shape != other.shape or ref.ndim != 2:
        raise ValueError(f"channel shapes differ: {ref.shape} vs {other.shape}")
    if w.shape != (ref.shape[1], ref.shape[1]):
        raise ValueError(f"score matrix shape {w.shape} does not match F = {ref.shape[1]}")
    return ref @ w @ other.T


def similarity(raw: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a raw score matrix; rows sum to one."""
    shifted = raw - raw.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def context(sim: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Context frames P = S . ref; every row is a convex mix of reference frames."""
    if sim.shape[-1] != ref.shape[-2]:
        raise ValueError(f"similarity {sim.shape} does not match reference {ref.shape}")
    return sim @ ref


def assemble(channels: np.ndarray, head: AttnHead):
    """Per-channel feature blocks for one input window.

    ``channels`` is (J+1, T, F) magnitudes, channel 0 the reference.
    Returns (blocks, sims): the reference block (T, F) followed by one
    (T, 2F) block [C_j | P_j] per foreign channel, and the similarity
    matrices (empty list for attention-free heads).
    """
    channels = np.asarray(channels)
    ref = channels[0]
    blocks = [ref]
    sims = []
    for j in range(1, channels.shape[0]):
        if head.uses_attention:
            s = similarity(score(ref, channels[j], head.w_for(j - 1)))
            sims.append(s)
            blocks.append(np.concatenate([channels[j], context(s, ref)], axis=1))
        else:
            blocks.append(channels[j])
    return blocks, sims


def forward_batch(channels: np.ndarray, head: AttnHead):
    """Mask estimates for a batch of windows.

    ``channels`` is (B, J+1, T, F); returns (masks (B, F), sims
    (B, J, T, T) or None).  The head sees the middle frame's features.
    """
    channels = np.asarray(channels)
    b, n_ch, t, f = channels.shape
    if n_ch != head.n_foreign + 1:
        raise ValueError(f"expected {head.n_foreign + 1} channels, got {n_ch}")
    mid = t // 2
    ref = channels[:, 0]
    feats = [ref[:, mid]]
    sims = None
    if head.uses_attention:
        sims = np.empty((b, head.n_foreign, t, t))
        for j in range(head.n_foreign):
            cj = channels[:, j + 1]
            raw = (ref @ head.w_for(j)) @ cj.swapaxes(-1, -2)  # (B, T, T)
            sims[:, j] = similarity(raw)
            ctx_mid = np.einsum("bs,bsf->bf", sims[:, j, mid], ref)
            feats.extend([cj[:, mid], ctx_mid])
    else:
        for j in range(head.n_foreign):
            feats.append(channels[:, j + 1, mid])
    x = np.concatenate(feats, axis=1)  # (B, D)
    masks = _sigmoid(x @ head.v.T + head.b)
    return masks, sims


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


# --- training ----------------------------------------------------------------


def loss_and_grads(channels: np.ndarray, labels: np.ndarray, head: AttnHead):
    """Mean squared mask error over the batch plus analytic gradients.

    Returns (loss, grads) with grads keyed 'v', 'b' and optionally 'w'.
    All gradient paths (head, context, softmax, bilinear score) are
    differentiated exactly.
    """
    channels = np.asarray(channels, dtype=float)
    labels = np.asarray(labels, dtype=float)
    b, n_ch, t, f = channels.shape
    mid = t // 2
    ref = channels[:, 0]

    feats = [ref[:, mid]]
    sims_mid = []  # per foreign: softmax row at the middle frame (B, T)
    if head.uses_attention:
        for j in range(head.n_foreign):
            cj = channels[:, j + 1]
            raw_mid = np.einsum("bsg,bg->bs", cj, ref[:, mid] @ head.w_for(j))
            s_mid = similarity(raw_mid)
            sims_mid.append(s_mid)
            ctx_mid = np.einsum("bs,bsf->bf", s_mid, ref)
            feats.extend([cj[:, mid], ctx_mid])
    else:
        for j in range(head.n_foreign):
            feats.append(channels[:, j + 1, mid])
    x = np.concatenate(feats, axis=1)
    pred = _sigmoid(x @ head.v.T + head.b)

    err = pred - labels
    loss = float(np.mean(err**2))
    g_a = 2.0 * err * pred * (1.0 - pred) / err.size  # (B, F)

    grads = {
        "v": np.einsum("bf,bd->fd", g_a, x),
        "b": g_a.sum(axis=0),
    }
    if head.uses_attention:
        g_x = g_a @ head.v  # (B, D)
        if head.share_w:
            g_w = np.zeros((f, f))
        else:
            g_w = np.zeros((head.n_foreign, f, f))
        for j in range(head.n_foreign):
            cj = channels[:, j + 1]
            s_mid = sims_mid[j]
            g_ctx = g_x[:, f * (2 + 2 * j) : f * (3 + 2 * j)]  # (B, F)
            # dL/dS(mid, i) = <g_ctx, ref[i]>
            r = np.einsum("bsf,bf->bs", ref, g_ctx)
            dot = np.einsum("bs,bs->b", r, s_mid)
            g_raw = s_mid * (r - dot[:, None])  # softmax backprop, row mid only
            q = np.einsum("bs,bsg->bg", g_raw, cj)
            contrib = ref[:, mid].T @ q
            if head.share_w:
                g_w += contrib
            else:
                g_w[j] = contrib
        grads["w"] = g_w
    return loss, grads


@dataclass(frozen=True)
class TrainResult:
    head: AttnHead
    history: list  # (epoch, train_loss, val_loss) tuples


def train(
    train_data: tuple[np.ndarray, np.ndarray],
    head: AttnHead,
    learning_rate: float = 0.5,
    epochs: int = 60,
    batch_size: int = 32,
    clip_norm: float = 5.0,
    seed: int = 0,
    val_data: tuple[np.ndarray, np.ndarray] | None = None,
    freeze_w: bool = False,
) -> TrainResult:
    """Gradient descent on the mask MSE; deterministic for a fixed seed.

    Raises on divergence (non-finite loss).  ``freeze_w`` keeps the score
    matrix at its initial value while the linear head trains, which is the
    ablation baseline for the attention mechanism.
    """
    x, y = train_data
    if len(x) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    params = {"v": head.v.copy(), "b": head.b.copy()}
    if head.uses_attention:
        params["w"] = np.array(head.w_score, copy=True)
    history = []
    n = len(x)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            current = _head_with(head, params)
            loss, grads = loss_and_grads(x[idx], y[idx], current)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch} (loss={loss}); "
                    f"reduce the learning rate"
                )
            total += loss * len(idx)
            if freeze_w:
                grads.pop("w", None)
            gnorm = np.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
            scale = learning_rate * (clip_norm / gnorm if gnorm > clip_norm else 1.0)
            for key, g in grads.items():
                params[key] -= scale * g
        train_loss = total / n
        val_loss = float("nan")
        if val_data is not None:
            val_loss, _ = loss_and_grads(val_data[0], val_data[1], _head_with(head, params))
        history.append((epoch, train_loss, val_loss))
    return TrainResult(head=_head_with(head, params), history=history)


def _head_with(head: AttnHead, params: dict) -> AttnHead:
    return replace(head, v=params["v"], b=params["b"], w_score=params.get("w"))


def evaluate_loss(data: tuple[np.ndarray, np.ndarray], head: AttnHead) -> float:
    loss, _ = loss_and_grads(data[0], data[1], head)
    return loss


# --- STO read-out -------------------------------------------------------------


def estimate_sto(sim: np.ndarray, hop_ms: float = 16.0) -> float | None:
    """Offset read from the dominant diagonal of a similarity matrix.

    Per row m the displacement argmax_i S(m, i) - m is collected over the
    interior rows (edge rows see a truncated diagonal); the mode times the
    hop duration is returned.  Positive values mean the foreign channel
    lags the reference.  An (almost) uniform matrix has no diagonal to
    read and yields None.
    """
    sim = np.asarray(sim)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {sim.shape}")
    t = sim.shape[0]
    if np.max(sim) <= 1.0 / t + 1e-9:
        return None
    rows = np.arange(3, t - 3) if t > 6 else np.arange(t)
    disp = np.argmax(sim[rows], axis=1) - rows
    counts = np.bincount(disp + t)
    return float(int(np.argmax(counts)) - t) * hop_ms


# --- sliding-window mask prediction -------------------------------------------


def predict_masks(
    head: AttnHead,
    ref_mag: np.ndarray,
    foreign_mags: np.ndarray,
    batch_size: int = 128,
):
    """Mask for every frame of a signal via sliding windows.

    ``ref_mag`` is (T_sig, F), ``foreign_mags`` (J, T_sig, F).  Each frame
    is predicted from the head.n_frames-long window centred on it (frame
    indices clamped at the signal edges).  Returns (masks (T_sig, F),
    mean_sims (J, T, T) or None).

    The aggregate similarity matrices pool the per-window matrices
    geometrically (softmax of the window-averaged raw scores, i.e. a
    logarithmic opinion pool).  Content matches accumulate coherently at
    their true frame displacement across windows, whereas the loudest-
    frame column that dominates any single near-saturated softmax moves
    from window to window and averages out.  Edge windows replicate
    boundary frames and are excluded from the pool.
    """
    ref_mag = np.asarray(ref_mag)
    foreign_mags = np.asarray(foreign_mags)
    t_sig, f = ref_mag.shape
    t_win = head.n_frames
    half = t_win // 2
    centers = np.arange(t_sig)
    idx = np.clip(centers[:, None] + np.arange(-half, t_win - half)[None, :], 0, t_sig - 1)
    interior = (centers >= half) & (centers <= t_sig - (t_win - half))
    stack = np.concatenate([ref_mag[None], foreign_mags], axis=0)  # (J+1, T_sig, F)
    masks = np.empty((t_sig, f))
    raw_sum = np.zeros((head.n_foreign, t_win, t_win)) if head.uses_attention else None
    n_interior = 0
    for start in range(0, t_sig, batch_size):
        rows = idx[start : start + batch_size]  # (B, T)
        windows = stack[:, rows]  # (J+1, B, T, F)
        windows = np.moveaxis(windows, 0, 1)  # (B, J+1, T, F)
        out, _ = forward_batch(windows, head)
        masks[start : start + batch_size] = out
        if raw_sum is not None:
            keep = interior[start : start + batch_size]
            if keep.any():
                ref_w = windows[keep, 0]
                for j in range(head.n_foreign):
                    cj = windows[keep, j + 1]
                    raw = (ref_w @ head.w_for(j)) @ cj.swapaxes(-1, -2)
                    raw_sum[j] += raw.sum(axis=0)
                n_interior += int(keep.sum())
    if raw_sum is not None and n_interior > 0:
        mean_sims = similarity(raw_sum / n_interior)
    else:
        mean_sims = None
    return masks, mean_sims


# --- checkpoints ---------------------------------------------------------------

_CHECKPOINT_VERSION = 1


def save_checkpoint(head: AttnHead, path) -> None:
    """Versioned tensor dump with shape metadata."""
    meta = {
        "version": _CHECKPOINT_VERSION,
        "n_foreign": head.n_foreign,
        "n_frames": head.n_frames,
        "share_w": head.share_w,
        "attention": head.uses_attention,
    }
    arrays = {"v": head.v, "b": head.b, "meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    if head.uses_attention:
        arrays["w_score"] = head.w_score
    np.savez(path, **arrays)


def load_checkpoint(path) -> AttnHead:
    data = np.load(path)
    meta = json.loads(bytes(data["meta"]).decode())
    if meta["version"] != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['version']}")
    return AttnHead(
        v=data["v"],
        b=data["b"],
        w_score=data["w_score"] if meta["attention"] else None,
        n_foreign=meta["n_foreign"],
        n_frames=meta["n_frames"],
        share_w=meta["share_w"],
    )

"""Sampling-rate and sampling-time offset injection, per node.

Offsets are always expressed relative to one reference node, which keeps
a zero offset by definition.  All microphones of a node share the same
hardware clock, so a node's offset pair is applied identically to every
one of its channels — asynchronization never breaks intra-node
coherence.  Only non-negative offsets are modelled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from asyncse.rooms import SceneSignals
from asyncse.signals import TimeSignal, resample_fractional

MAX_SRO_PPM = 1000.0


@dataclass(frozen=True)
class AsyncSpec:
    """Per-node SRO (ppm) and STO (ms); zeros at the reference node."""

    reference_node: int
    sro_ppm: np.ndarray
    sto_ms: np.ndarray

    def __post_init__(self):
        sro = np.asarray(self.sro_ppm, dtype=float)
        sto = np.asarray(self.sto_ms, dtype=float)
        if sro.shape != sto.shape or sro.ndim != 1:
            raise ValueError("sro_ppm and sto_ms must be 1-D arrays of equal length")
        if not 0 <= self.reference_node < len(sro):
            raise ValueError(f"reference node {self.reference_node} out of range")
        if sro[self.reference_node] != 0.0 or sto[self.reference_node] != 0.0:
            raise ValueError("reference node must have zero SRO and STO")
        if np.any(sro < 0.0) or np.any(sto < 0.0):
            raise ValueError("only non-negative offsets are supported")
        object.__setattr__(self, "sro_ppm", sro)
        object.__setattr__(self, "sto_ms", sto)

    @property
    def n_nodes(self) -> int:
        return len(self.sro_ppm)

    def is_identity(self) -> bool:
        return bool(np.all(self.sro_ppm == 0.0) and np.all(self.sto_ms == 0.0))


def sample_async_spec(
    seed: int,
    sro_max_ppm: float = 0.0,
    sto_max_ms: float = 0.0,
    reference: int = 0,
    n_nodes: int = 4,
) -> AsyncSpec:
    """Uniform offsets in [0, max] for every non-reference node."""
    if sro_max_ppm < 0 or sto_max_ms < 0:
        raise ValueError("offset maxima must be non-negative")
    rng = np.random.default_rng(seed)
    sro = rng.uniform(0.0, sro_max_ppm, size=n_nodes)
    sto = rng.uniform(0.0, sto_max_ms, size=n_nodes)
    sro[reference] = 0.0
    sto[reference] = 0.0
    return AsyncSpec(reference, sro, sto)


def apply_sto(signal: TimeSignal, tau_ms: float) -> TimeSignal:
    """Delay the recording start by prepending round(tau * fs) zero samples;
    the output is truncated back to the original length."""
    if tau_ms < 0:
        raise ValueError(f"STO must be non-negative, got {tau_ms} ms")
    shift = int(round(tau_ms * signal.sample_rate / 1000.0))
    if shift == 0:
        return signal
    x = signal.samples
    out = np.concatenate([np.zeros(shift), x])[: len(x)]
    return TimeSignal(out, signal.sample_rate)


def apply_sro(signal: TimeSignal, epsilon_ppm: float) -> TimeSignal:
    """Simulate a clock-rate offset of epsilon ppm by fractional resampling;
    the output is truncated or zero-extended back to the original length."""
    if abs(epsilon_ppm) > MAX_SRO_PPM:
        raise ValueError(f"SRO {epsilon_ppm} ppm outside supported range ±{MAX_SRO_PPM}")
    if epsilon_ppm == 0.0:
        return signal
    out = resample_fractional(signal, 1.0 + epsilon_ppm * 1e-6).samples
    n = len(signal)
    if len(out) < n:
        out = np.concatenate([out, np.zeros(n - len(out))])
    return TimeSignal(out[:n], signal.sample_rate)


def _desync_channel(x: np.ndarray, fs: int, eps_ppm: float, tau_ms: float) -> np.ndarray:
    sig = TimeSignal(x, fs)
    if eps_ppm != 0.0:
        sig = apply_sro(sig, eps_ppm)
    if tau_ms != 0.0:
        sig = apply_sto(sig, tau_ms)
    return sig.samples


def apply_async(scene: SceneSignals, spec: AsyncSpec) -> SceneSignals:
    """Apply each node's (SRO, STO) pair to all of its channels.

    Ground-truth target and noise images receive the identical transform
    and the mixtures are rebuilt as their sum, so additivity holds
    bit-exactly and per-node metrics stay aligned.
    """
    if spec.n_nodes != scene.n_nodes:
        raise ValueError(
            f"async spec covers {spec.n_nodes} nodes but scene has {scene.n_nodes}"
        )
    if spec.is_identity():
        return scene
    fs = scene.sample_rate
    target = scene.target_images.copy()
    noise = scene.noise_images.copy()
    for k in range(scene.n_nodes):
        eps, tau = spec.sro_ppm[k], spec.sto_ms[k]
        if eps == 0.0 and tau == 0.0:
            continue
        for m in range(scene.mics_per_node):
            target[k, m] = _desync_channel(target[k, m], fs, eps, tau)
            noise[k, m] = _desync_channel(noise[k, m], fs, eps, tau)
    return SceneSignals(target, noise, target + noise, fs)

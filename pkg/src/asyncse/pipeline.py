"""Two-stage distributed enhancement over a simulated node network.

Stage 1 runs independently at every node: an oracle mask drives a local
multichannel Wiener filter whose single-channel output (the compressed
signal) is shared with all other nodes.  The exchange layer models a
reliable, ordered network in the STFT domain.  Stage 2 stacks the local
microphones with the received compressed signals, estimates covariances
under a mask (oracle, or predicted by a trained head) and applies the
global filter; channel 1 of the stack is always the local reference
mixture.

Nodes are independent between the two synchronisation barriers (end of
stage 1, end of exchange); stage execution may be threaded per node and
stays deterministic because inboxes and stacking are ordered by node id,
never by arrival.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from asyncse.attention import AttnHead, estimate_sto, predict_masks
from asyncse.beamforming import (
    BeamWeights,
    apply_beamformer,
    estimate_covariances,
    ideal_ratio_mask,
    rank1_gevd_mwf,
)
from asyncse.desync import AsyncSpec, apply_async
from asyncse.metrics import MetricReport, bss_eval
from asyncse.rooms import SceneSignals
from asyncse.signals import Spectrogram, StftConfig, TimeSignal, istft, stft

MASK_MODES = ("oracle", "attention", "plain")


@dataclass
class PipelineConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    mu_local: float = 1.0
    mu_global: float = 1.0
    mask_mode: str = "oracle"
    loading: float = 1e-6
    head: AttnHead | None = None
    bss_filter_len: int = 512
    jobs: int = 1

    def __post_init__(self):
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}, got {self.mask_mode!r}")
        if self.mask_mode != "oracle" and self.head is None:
            raise ValueError(f"mask_mode {self.mask_mode!r} needs a trained head")


@dataclass
class NodeState:
    """Everything one node knows: its mics, ground truth for oracle masks,
    its local filter and compressed output, and the received signals."""

    node_id: int
    local_mics: np.ndarray  # (M, T, F) complex
    target_ref: np.ndarray  # (T, F) ground-truth target at the reference mic
    noise_ref: np.ndarray  # (T, F) ground-truth noise at the reference mic
    w_local: BeamWeights | None = None
    z_out: np.ndarray | None = None  # (T, F) compressed signal
    inbox: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class NodeResult:
    node_id: int
    enhanced: TimeSignal
    metrics_in: MetricReport
    metrics_out: MetricReport
    sto_est_ms: dict[int, float | None]  # keyed by foreign node id
    sim_matrices: dict[int, np.ndarray]


@dataclass(frozen=True)
class PipelineResult:
    nodes: list[NodeResult]

    def node(self, node_id: int) -> NodeResult:
        return next(n for n in self.nodes if n.node_id == node_id)


def stage1_local(node: NodeState, mu: float = 1.0, loading: float = 1e-6) -> np.ndarray:
    """Local MWF: oracle mask from the node's reference-mic ground truth,
    covariances over the node's own mics, compressed output stored on the
    node."""
    if node.target_ref is None or node.noise_ref is None:
        raise ValueError(f"node {node.node_id}: no mask source (missing ground-truth images)")
    mask = ideal_ratio_mask(node.target_ref, node.noise_ref)
    cov = estimate_covariances(node.local_mics, mask)
    node.w_local = rank1_gevd_mwf(cov, mu=mu, ref_channel=0, loading=loading)
    node.z_out = apply_beamformer(node.w_local, node.local_mics)
    return node.z_out


def exchange(nodes: list[NodeState]) -> list[NodeState]:
    """Reliable ordered delivery of every compressed signal to every other
    node; inboxes end up with exactly K-1 entries keyed by sender id."""
    for node in nodes:
        if node.z_out is None:
            raise RuntimeError(f"node {node.node_id} has not produced a compressed signal yet")
    for node in nodes:
        node.inbox = {
            other.node_id: other.z_out for other in nodes if other.node_id != node.node_id
        }
    return nodes


def stacked_input(node: NodeState) -> np.ndarray:
    """(M + K - 1, T, F) stack: local mics first, then foreign compressed
    signals ordered by sender id."""
    if not node.inbox:
        return node.local_mics
    foreign = [node.inbox[j] for j in sorted(node.inbox)]
    return np.concatenate([node.local_mics, np.stack(foreign)], axis=0)


def _stage2_mask(node: NodeState, cfg: PipelineConfig):
    if cfg.mask_mode == "oracle":
        return ideal_ratio_mask(node.target_ref, node.noise_ref), {}
    ref_mag = np.abs(node.local_mics[0])
    foreign_ids = sorted(node.inbox)
    foreign_mags = np.stack([np.abs(node.inbox[j]) for j in foreign_ids])
    mask, mean_sims = predict_masks(cfg.head, ref_mag, foreign_mags)
    sims = {}
    if mean_sims is not None:
        sims = {j: mean_sims[idx] for idx, j in enumerate(foreign_ids)}
    return mask, sims


def stage2_global(node: NodeState, cfg: PipelineConfig) -> tuple[np.ndarray, dict]:
    """Global MWF on the stacked input; reference channel is the local
    mixture y_{k,1}.  Returns the enhanced (T, F) grid and the similarity
    matrices (attention mode only)."""
    expected = len(node.inbox)
    if expected == 0 and node.local_mics.shape[0] == 0:
        raise RuntimeError("empty node")
    mask, sims = _stage2_mask(node, cfg)
    stack = stacked_input(node)
    cov = estimate_covariances(stack, mask)
    weights = rank1_gevd_mwf(cov, mu=cfg.mu_global, ref_channel=0, loading=cfg.loading)
    return apply_beamformer(weights, stack), sims


def _node_map(fn, nodes, jobs: int):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, nodes))
    return [fn(node) for node in nodes]


def run_pipeline(
    scene: SceneSignals,
    spec: AsyncSpec | None,
    cfg: PipelineConfig,
) -> PipelineResult:
    """Asynchronize, filter locally, exchange, filter globally, evaluate.

    Metrics compare each node's enhanced output (and its raw reference
    mixture) against the node-local ground-truth target image at the
    reference microphone, both transformed by the same async spec.
    """
    if spec is not None:
        scene = apply_async(scene, spec)
    fs = scene.sample_rate
    k_nodes = scene.n_nodes

    def spec_of(x: np.ndarray) -> np.ndarray:
        return stft(TimeSignal(x, fs), cfg.stft).data

    nodes = []
    for k in range(k_nodes):
        mics = np.stack([spec_of(scene.mixtures[k, m]) for m in range(scene.mics_per_node)])
        nodes.append(
            NodeState(
                node_id=k,
                local_mics=mics,
                target_ref=spec_of(scene.target_images[k, 0]),
                noise_ref=spec_of(scene.noise_images[k, 0]),
            )
        )

    _node_map(lambda n: stage1_local(n, cfg.mu_local, cfg.loading), nodes, cfg.jobs)
    exchange(nodes)
    stage2 = _node_map(lambda n: stage2_global(n, cfg), nodes, cfg.jobs)

    results = []
    for node, (enhanced_spec, sims) in zip(nodes, stage2):
        enhanced = istft(
            Spectrogram(enhanced_spec, cfg.stft.frame_len, cfg.stft.hop, fs), cfg.stft
        )
        n = len(enhanced)
        k = node.node_id
        target_t = scene.target_images[k, 0][:n]
        noise_t = scene.noise_images[k, 0][:n]
        mix_t = scene.mixtures[k, 0][:n]
        metrics_in = bss_eval(mix_t, target_t, noise_t, cfg.bss_filter_len)
        metrics_out = bss_eval(enhanced.samples, target_t, noise_t, cfg.bss_filter_len)
        hop_ms = cfg.stft.hop / fs * 1000.0
        sto_est = {j: estimate_sto(s, hop_ms) for j, s in sims.items()}
        results.append(
            NodeResult(
                node_id=k,
                enhanced=enhanced,
                metrics_in=metrics_in,
                metrics_out=metrics_out,
                sto_est_ms=sto_est,
                sim_matrices=sims,
            )
        )
    return PipelineResult(nodes=results)

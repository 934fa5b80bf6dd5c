"""Distributed speech enhancement over asynchronized ad-hoc microphone arrays.

A numpy/scipy library plus experiment runner covering: shoebox scene
simulation with image-source RIRs, per-node sampling-time/rate offset
injection, mask-driven rank-1 GEVD multichannel Wiener filtering in a
two-stage compressed-signal-exchange pipeline, a bilinear temporal-
alignment attention head whose similarity matrices double as
unsupervised STO estimates, and SI-SDR / SDR / SIR / SAR evaluation.
"""

from asyncse.attention import (
    AttnHead,
    estimate_sto,
    init_head,
    load_checkpoint,
    predict_masks,
    save_checkpoint,
)
from asyncse.beamforming import (
    BeamWeights,
    CovariancePair,
    apply_beamformer,
    estimate_covariances,
    ideal_ratio_mask,
    rank1_gevd_mwf,
)
from asyncse.desync import AsyncSpec, apply_async, apply_sro, apply_sto, sample_async_spec
from asyncse.metrics import MetricReport, bss_eval, si_sdr
from asyncse.pipeline import NodeState, PipelineConfig, PipelineResult, run_pipeline
from asyncse.rooms import (
    RoomGeometry,
    ScenePlacement,
    SceneSignals,
    render_scene,
    sample_scene,
    simulate_rir,
    synthetic_interferer,
    synthetic_noise,
    synthetic_speech,
)
from asyncse.signals import (
    Spectrogram,
    StftConfig,
    TimeSignal,
    istft,
    resample_fractional,
    stft,
)
from asyncse.wavio import read_wav, write_wav

__all__ = [
    "TimeSignal",
    "Spectrogram",
    "StftConfig",
    "stft",
    "istft",
    "resample_fractional",
    "read_wav",
    "write_wav",
    "RoomGeometry",
    "ScenePlacement",
    "SceneSignals",
    "sample_scene",
    "simulate_rir",
    "render_scene",
    "synthetic_speech",
    "synthetic_noise",
    "synthetic_interferer",
    "AsyncSpec",
    "sample_async_spec",
    "apply_sto",
    "apply_sro",
    "apply_async",
    "ideal_ratio_mask",
    "estimate_covariances",
    "rank1_gevd_mwf",
    "apply_beamformer",
    "CovariancePair",
    "BeamWeights",
    "NodeState",
    "PipelineConfig",
    "PipelineResult",
    "run_pipeline",
    "AttnHead",
    "init_head",
    "estimate_sto",
    "predict_masks",
    "save_checkpoint",
    "load_checkpoint",
    "MetricReport",
    "si_sdr",
    "bss_eval",
]

__version__ = "0.1.0"

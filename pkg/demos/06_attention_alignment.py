"""Alignment attention: trained mask head plus unsupervised STO read-out.

Trains the attention head on a few scenes with random offsets, then
injects known per-node STOs into a fresh scene and reads them back from
the similarity matrices — no labels about the offsets were ever used.
"""

import tempfile

import numpy as np

from asyncse.attention import load_checkpoint
from asyncse.desync import AsyncSpec
from asyncse.experiments import (
    ExperimentConfig,
    build_scene,
    checkpoint_path,
    cmd_train_attn,
)
from asyncse.pipeline import PipelineConfig, run_pipeline

with tempfile.TemporaryDirectory() as tmp:
    cfg = ExperimentConfig(
        n_scenes=1,
        seed=21,
        duration_s=4.0,
        systems=["async-trained-attention"],
        output_dir=tmp,
        train={
            "n_scenes": 4,
            "windows_per_node": 16,
            "augmentations": 2,
            "sto_aug_max_ms": 32.0,
            "epochs": 40,
            "learning_rate": 1.0,
            "batch_size": 32,
        },
    )
    print("training the attention mask head on offset-augmented scenes...")
    cmd_train_attn(cfg, "async-trained-attention")
    head = load_checkpoint(checkpoint_path(cfg, "async-trained-attention"))

    injected = [0.0, 80.0, 112.0, 48.0]
    scene, manifest = build_scene(cfg, 0)
    spec = AsyncSpec(0, np.zeros(4), np.array(injected))
    pipe = PipelineConfig(stft=cfg.stft, mask_mode="attention", head=head)
    result = run_pipeline(scene, spec, pipe)

    # the matrices measure total misalignment: injected STO plus the
    # acoustic propagation-delay difference between the nodes
    mics = np.asarray(manifest["placement"]["mic_positions"])
    target = np.asarray(manifest["placement"]["target_pos"])
    tof_ms = [np.linalg.norm(mics[k, 0] - target) / 343.0 * 1000.0 for k in range(4)]

    node = result.node(0)
    print("\nobserved from node 0 (reference clock):")
    for j in sorted(node.sto_est_ms):
        est = node.sto_est_ms[j]
        total = injected[j] + (tof_ms[j] - tof_ms[0])
        print(
            f"  channel from node {j}: injected {injected[j]:6.1f} ms "
            f"(+{tof_ms[j] - tof_ms[0]:5.1f} ms acoustic = {total:6.1f} total), "
            f"estimated {est if est is not None else 'undetermined'} ms"
        )

"""Reproducible experiment orchestration: scene generation, condition
sweeps, head training and STO-estimation runs, all driven by a JSON
config whose hash is embedded in every CSV produced.

Determinism contract: every random decision derives from
SeedSequence([config seed, role, indices...]), so a config file plus its
seed fully determines scene audio, async draws, training batches and
therefore byte-identical result CSVs.  Completed sweep conditions are
skipped on re-runs (one partial CSV per condition key).
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from asyncse import attention
from asyncse.attention import AttnHead, init_head, load_checkpoint, save_checkpoint
from asyncse.beamforming import ideal_ratio_mask
from asyncse.desync import AsyncSpec, apply_async, sample_async_spec
from asyncse.pipeline import (
    NodeState,
    PipelineConfig,
    exchange,
    run_pipeline,
    stage1_local,
)
from asyncse.rooms import (
    RoomGeometry,
    ScenePlacement,
    SceneSignals,
    render_scene,
    sample_scene,
    synthetic_interferer,
    synthetic_noise,
    synthetic_speech,
)
from asyncse.signals import StftConfig, TimeSignal, stft
from asyncse.wavio import read_wav, write_wav

log = logging.getLogger("asyncse")

SYSTEMS = ("oracle", "sync-trained", "async-trained", "async-trained-attention")

# roles keep seed streams for unrelated draws disjoint
_SEED_SCENE, _SEED_ASYNC, _SEED_TRAIN = 1, 2, 3


class ConfigError(Exception):
    """Bad or missing configuration (CLI exit code 2)."""


class DataError(Exception):
    """Missing scenes, checkpoints or malformed inputs (CLI exit code 3)."""


@dataclass
class ExperimentConfig:
    n_scenes: int = 20
    seed: int = 0
    duration_s: float = 5.0
    snr_range_db: tuple[float, float] = (0.0, 6.0)
    sweep_axis: str = "sto"
    sweep_max_values: list[float] = field(default_factory=lambda: [0.0, 16.0, 32.0, 64.0])
    systems: list[str] = field(default_factory=lambda: ["oracle"])
    reference_node: int = 0
    max_order: int = 6
    noise_kind: str = "bursty"
    stft_frame_len: int = 512
    stft_hop: int = 256
    mu_local: float = 1.0
    mu_global: float = 1.0
    loading: float = 1e-6
    source_dir: str | None = None
    output_dir: str = "out"
    jobs: int = 1
    verbose: bool = False
    train: dict = field(
        default_factory=lambda: {
            "n_scenes": 8,
            "windows_per_node": 16,
            "augmentations": 2,
            "sto_aug_max_ms": 32.0,
            "epochs": 40,
            "learning_rate": 1.0,
            "batch_size": 32,
        }
    )

    def __post_init__(self):
        if self.sweep_axis not in ("sro", "sto"):
            raise ConfigError(f"sweep axis must be 'sro' or 'sto', got {self.sweep_axis!r}")
        vals = list(self.sweep_max_values)
        if any(v < 0 for v in vals) or vals != sorted(vals):
            raise ConfigError("sweep max_values must be non-negative and sorted")
        for s in self.systems:
            if s not in SYSTEMS:
                raise ConfigError(f"unknown system {s!r}; choose from {SYSTEMS}")
        if self.n_scenes <= 0:
            raise ConfigError("n_scenes must be positive")
        if not 0 <= self.reference_node < 4:
            raise ConfigError("reference_node must be in 0..3")
        if self.noise_kind not in ("bursty", "stationary"):
            raise ConfigError("noise_kind must be 'bursty' or 'stationary'")

    @property
    def stft(self) -> StftConfig:
        return StftConfig(frame_len=self.stft_frame_len, hop=self.stft_hop)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["snr_range_db"] = list(self.snr_range_db)
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        # where results go and how many workers ran must not change what
        # the experiment computes
        for key in ("output_dir", "jobs", "verbose"):
            d.pop(key, None)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "snr_range_db" in raw:
            raw["snr_range_db"] = tuple(raw["snr_range_db"])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# --- scene generation -------------------------------------------------------


def scene_seed(cfg: ExperimentConfig, index: int, training: bool = False) -> int:
    ss = np.random.SeedSequence([cfg.seed, _SEED_SCENE, int(training), index])
    return int(ss.generate_state(1)[0])


def build_scene(cfg: ExperimentConfig, index: int, training: bool = False):
    """Deterministically materialise one scene; returns (scene, manifest)."""
    seed = scene_seed(cfg, index, training)
    room, placement = sample_scene(seed)
    rng = np.random.default_rng(seed + 1)
    snr_db = float(rng.uniform(*cfg.snr_range_db))
    if cfg.source_dir:
        speech, noise = _sources_from_dir(cfg, rng)
        source_info = {"type": "wav_dir", "dir": str(cfg.source_dir)}
    else:
        speech = synthetic_speech(cfg.duration_s, seed=seed + 2)
        make_noise = synthetic_interferer if cfg.noise_kind == "bursty" else synthetic_noise
        noise = make_noise(cfg.duration_s, seed=seed + 3)
        source_info = {
            "type": "synthetic",
            "noise_kind": cfg.noise_kind,
            "speech_seed": seed + 2,
            "noise_seed": seed + 3,
        }
    scene = render_scene(placement, room, speech, noise, snr_db=snr_db, max_order=cfg.max_order)
    manifest = {
        "scene_id": index,
        "seed": seed,
        "training": training,
        "room": {
            "length": room.length,
            "width": room.width,
            "height": room.height,
            "absorption": room.absorption,
        },
        "placement": {
            "target_pos": placement.target_pos.tolist(),
            "noise_pos": placement.noise_pos.tolist(),
            "node_centers": placement.node_centers.tolist(),
            "mic_positions": placement.mic_positions.tolist(),
        },
        "snr_db": snr_db,
        "duration_s": cfg.duration_s,
        "sample_rate": scene.sample_rate,
        "max_order": cfg.max_order,
        "sources": source_info,
        "async": None,
    }
    return scene, manifest


def _sources_from_dir(cfg: ExperimentConfig, rng) -> tuple[TimeSignal, TimeSignal]:
    paths = sorted(Path(cfg.source_dir).glob("*.wav"))
    if len(paths) < 2:
        raise DataError(f"source dir {cfg.source_dir} needs at least two WAV files")
    pick = rng.choice(len(paths), size=2, replace=False)
    out = []
    for idx in pick:
        samples, rate = read_wav(paths[idx], expected_rate=16000)
        if samples.ndim > 1:
            samples = samples[:, 0]
        out.append(TimeSignal(samples, rate))
    return out[0], out[1]


def cmd_generate(cfg: ExperimentConfig) -> list[Path]:
    """Write n_scenes scene directories: manifest + per-mic WAVs (mixtures
    and ground-truth target/noise images)."""
    root = Path(cfg.output_dir) / "scenes"
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(cfg.n_scenes):
        scene, manifest = build_scene(cfg, i)
        scene_dir = root / f"scene{i:04d}"
        scene_dir.mkdir(exist_ok=True)
        (scene_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        for k in range(scene.n_nodes):
            for m in range(scene.mics_per_node):
                write_wav(scene_dir / f"node{k}_mic{m}.wav", scene.mixtures[k, m], scene.sample_rate)
                write_wav(
                    scene_dir / f"node{k}_mic{m}_target.wav",
                    scene.target_images[k, m],
                    scene.sample_rate,
                )
                write_wav(
                    scene_dir / f"node{k}_mic{m}_noise.wav",
                    scene.noise_images[k, m],
                    scene.sample_rate,
                )
        written.append(scene_dir)
        log.info("generated %s", scene_dir)
    return written


# --- head training -----------------------------------------------------------


def _training_windows(cfg: ExperimentConfig, augment_sto: bool, attention_head: bool, seed_tag: int):
    """Sliding-window training items from freshly rendered training scenes.

    Each item stacks [|Y_ref|, |z_j|...] magnitudes over a head-sized frame
    window; labels are the node's oracle mask at the window's middle frame.
    STO augmentation asynchronizes the scene before stage 1, which is how
    offsets reach the compressed signals physically.
    """
    tcfg = cfg.train
    stft_cfg = cfg.stft
    t_win = 21
    half = t_win // 2
    items, labels = [], []
    for i in range(int(tcfg["n_scenes"])):
        scene, _ = build_scene(cfg, i, training=True)
        for aug in range(int(tcfg["augmentations"])):
            ss = np.random.SeedSequence([cfg.seed, _SEED_TRAIN, seed_tag, i, aug])
            rng = np.random.default_rng(ss)
            if augment_sto:
                spec = AsyncSpec(
                    cfg.reference_node,
                    np.zeros(4),
                    _with_zero_ref(
                        rng.uniform(0.0, float(tcfg["sto_aug_max_ms"]), 4), cfg.reference_node
                    ),
                )
                sc = apply_async(scene, spec)
            else:
                sc = scene
            nodes = _scene_nodes(sc, stft_cfg)
            for n in nodes:
                stage1_local(n, cfg.mu_local, cfg.loading)
            exchange(nodes)
            for node in nodes:
                ref_mag = np.abs(node.local_mics[0])
                foreign = np.stack([np.abs(node.inbox[j]) for j in sorted(node.inbox)])
                irm = ideal_ratio_mask(node.target_ref, node.noise_ref)
                t_sig = ref_mag.shape[0]
                centers = rng.integers(half, t_sig - half, size=int(tcfg["windows_per_node"]))
                for c in centers:
                    sl = slice(c - half, c - half + t_win)
                    items.append(
                        np.concatenate([ref_mag[None, sl], foreign[:, sl]], axis=0).astype(
                            np.float32
                        )
                    )
                    labels.append(irm[c].astype(np.float32))
    return np.stack(items), np.stack(labels)


def _with_zero_ref(values: np.ndarray, reference: int) -> np.ndarray:
    values = values.copy()
    values[reference] = 0.0
    return values


def _scene_nodes(scene: SceneSignals, stft_cfg: StftConfig) -> list[NodeState]:
    nodes = []
    for k in range(scene.n_nodes):
        mics = np.stack(
            [
                stft(TimeSignal(scene.mixtures[k, m], scene.sample_rate), stft_cfg).data
                for m in range(scene.mics_per_node)
            ]
        )
        nodes.append(
            NodeState(
                node_id=k,
                local_mics=mics,
                target_ref=stft(TimeSignal(scene.target_images[k, 0], scene.sample_rate), stft_cfg).data,
                noise_ref=stft(TimeSignal(scene.noise_images[k, 0], scene.sample_rate), stft_cfg).data,
            )
        )
    return nodes


def checkpoint_path(cfg: ExperimentConfig, system: str) -> Path:
    return Path(cfg.output_dir) / "checkpoints" / f"{system}.npz"


def cmd_train_attn(cfg: ExperimentConfig, system: str) -> Path:
    """Train the mask head for one system variant and write its checkpoint
    plus a training-curve CSV."""
    if system == "oracle":
        raise ConfigError("the oracle system has no trainable head")
    if system not in SYSTEMS:
        raise ConfigError(f"unknown system {system!r}")
    attention_head = system == "async-trained-attention"
    augment = system in ("async-trained", "async-trained-attention")
    seed_tag = SYSTEMS.index(system)
    x, y = _training_windows(cfg, augment, attention_head, seed_tag)
    n_bins = cfg.stft.n_bins
    head = init_head(
        n_bins=n_bins, n_foreign=3, n_frames=21, attention=attention_head, seed=cfg.seed
    )
    tcfg = cfg.train
    result = attention.train(
        (x, y),
        head,
        learning_rate=float(tcfg["learning_rate"]),
        epochs=int(tcfg["epochs"]),
        batch_size=int(tcfg["batch_size"]),
        seed=cfg.seed,
    )
    path = checkpoint_path(cfg, system)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.head, path)
    curve = path.with_suffix(".curve.csv")
    with curve.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss"])
        for epoch, train_loss, _ in result.history:
            writer.writerow([epoch, f"{train_loss:.8f}"])
    if result.history:
        log.info("trained %s -> %s (final loss %.5f)", system, path, result.history[-1][1])
    return path


def _system_pipeline_config(cfg: ExperimentConfig, system: str) -> PipelineConfig:
    head = None
    mask_mode = "oracle"
    if system != "oracle":
        path = checkpoint_path(cfg, system)
        if not path.exists():
            raise DataError(
                f"no checkpoint for system {system!r} at {path}; run train-attn first"
            )
        head = load_checkpoint(path)
        mask_mode = "attention" if head.uses_attention else "plain"
    return PipelineConfig(
        stft=cfg.stft,
        mu_local=cfg.mu_local,
        mu_global=cfg.mu_global,
        mask_mode=mask_mode,
        loading=cfg.loading,
        head=head,
        jobs=1,
    )


# --- sweep runner ------------------------------------------------------------

CSV_COLUMNS = [
    "scene_id",
    "node_id",
    "axis",
    "max_value",
    "system",
    "si_sdr_in",
    "si_sdr_out",
    "sdr_out",
    "sir_out",
    "sar_out",
    "sto_est_ms_node0",
    "sto_est_ms_node1",
    "sto_est_ms_node2",
    "sto_est_ms_node3",
]


def _fmt(x) -> str:
    # repr round-trips exactly, so CSV consumers see the same numbers the
    # pipeline computed
    if x is None:
        return ""
    return repr(float(x))


def condition_spec(cfg: ExperimentConfig, scene_idx: int, value: float) -> AsyncSpec | None:
    if value == 0.0:
        return None
    ss = np.random.SeedSequence([cfg.seed, _SEED_ASYNC, scene_idx, int(round(value * 1000))])
    seed = int(ss.generate_state(1)[0])
    if cfg.sweep_axis == "sro":
        return sample_async_spec(seed, sro_max_ppm=value, reference=cfg.reference_node)
    return sample_async_spec(seed, sto_max_ms=value, reference=cfg.reference_node)


def _condition_rows(cfg: ExperimentConfig, scene, scene_idx: int, value: float, system: str):
    pipe_cfg = _system_pipeline_config(cfg, system)
    spec = condition_spec(cfg, scene_idx, value)
    result = run_pipeline(scene, spec, pipe_cfg)
    rows = []
    for node in result.nodes:
        est = {f"sto_est_ms_node{j}": _fmt(node.sto_est_ms.get(j)) for j in range(4)}
        rows.append(
            {
                "scene_id": str(scene_idx),
                "node_id": str(node.node_id),
                "axis": cfg.sweep_axis,
                "max_value": _fmt(value),
                "system": system,
                "si_sdr_in": _fmt(node.metrics_in.si_sdr),
                "si_sdr_out": _fmt(node.metrics_out.si_sdr),
                "sdr_out": _fmt(node.metrics_out.sdr),
                "sir_out": _fmt(node.metrics_out.sir),
                "sar_out": _fmt(node.metrics_out.sar),
                **est,
            }
        )
    return rows


def cmd_run(cfg: ExperimentConfig) -> Path:
    """Run every (scene, condition, system) cell and merge the per-condition
    CSVs into results.csv; finished conditions are skipped on re-runs."""
    out_root = Path(cfg.output_dir)
    cond_dir = out_root / "conditions"
    cond_dir.mkdir(parents=True, exist_ok=True)
    header = f"# config_hash={cfg.config_hash()}\n"

    for system in cfg.systems:
        if system != "oracle" and not checkpoint_path(cfg, system).exists():
            raise DataError(f"system {system!r} has no trained checkpoint; run train-attn")

    scenes = {}

    def scene_for(idx: int):
        if idx not in scenes:
            scenes[idx] = build_scene(cfg, idx)[0]
        return scenes[idx]

    for value in cfg.sweep_max_values:
        for system in cfg.systems:
            key = f"{cfg.sweep_axis}{value:g}_{system}"
            part = cond_dir / f"{key}.csv"
            if part.exists():
                log.info("condition %s already done, skipping", key)
                continue
            rows = []
            for i in range(cfg.n_scenes):
                rows.extend(_condition_rows(cfg, scene_for(i), i, value, system))
            tmp = part.with_suffix(".tmp")
            with tmp.open("w", newline="") as fh:
                fh.write(header)
                writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
                writer.writeheader()
                writer.writerows(rows)
            tmp.rename(part)
            log.info("condition %s: %d rows", key, len(rows))

    merged = out_root / "results.csv"
    with merged.open("w", newline="") as fh:
        fh.write(header)
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for value in cfg.sweep_max_values:
            for system in cfg.systems:
                part = cond_dir / f"{cfg.sweep_axis}{value:g}_{system}.csv"
                with part.open() as pfh:
                    reader = csv.DictReader(line for line in pfh if not line.startswith("#"))
                    writer.writerows(reader)
    log.info("merged results -> %s", merged)
    return merged


# --- STO estimation ----------------------------------------------------------


def cmd_estimate_sto(
    cfg: ExperimentConfig,
    scene_idx: int,
    node_id: int,
    sto_ms: list[float],
    checkpoint: Path | None = None,
) -> Path:
    """Run the attention system on one scene with explicit per-node STOs and
    dump per-foreign-channel estimates plus T x T similarity matrices."""
    path = Path(checkpoint) if checkpoint else checkpoint_path(cfg, "async-trained-attention")
    if not path.exists():
        raise DataError(f"attention checkpoint missing at {path}")
    head = load_checkpoint(path)
    if not head.uses_attention:
        raise DataError(f"checkpoint {path} holds an attention-free head")
    if len(sto_ms) != 4:
        raise ConfigError("--sto-ms needs exactly 4 comma-separated values")
    if sto_ms[cfg.reference_node] != 0.0:
        raise ConfigError("the reference node's STO must be 0")

    scene, _ = build_scene(cfg, scene_idx)
    spec = AsyncSpec(cfg.reference_node, np.zeros(4), np.asarray(sto_ms, dtype=float))
    pipe_cfg = PipelineConfig(
        stft=cfg.stft,
        mu_local=cfg.mu_local,
        mu_global=cfg.mu_global,
        mask_mode="attention",
        loading=cfg.loading,
        head=head,
    )
    result = run_pipeline(scene, spec, pipe_cfg)
    node = result.node(node_id)

    out_dir = Path(cfg.output_dir) / "sto_estimates"
    out_dir.mkdir(parents=True, exist_ok=True)
    for j, sim in node.sim_matrices.items():
        np.savetxt(out_dir / f"sim_scene{scene_idx}_node{node_id}_ch{j}.csv", sim, delimiter=",")
    est_path = out_dir / f"estimates_scene{scene_idx}_node{node_id}.csv"
    with est_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["foreign_node", "injected_sto_ms", "estimated_sto_ms"])
        for j in sorted(node.sto_est_ms):
            injected = sto_ms[j] - sto_ms[node_id]
            writer.writerow([j, f"{injected:.3f}", _fmt(node.sto_est_ms[j])])
    log.info("estimates -> %s", est_path)
    return est_path


# --- reporting ---------------------------------------------------------------


def read_results(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"results file not found: {path}")
    with path.open() as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise DataError(f"results file {path} has no rows")
    return rows


def cmd_report(results_path, out_path=None) -> list[dict]:
    """Median metrics per (axis value, system); prints a table and
    optionally writes it as CSV."""
    rows = read_results(results_path)
    groups: dict[tuple[str, str], dict[str, list[float]]] = {}
    for row in rows:
        key = (row["max_value"], row["system"])
        bucket = groups.setdefault(key, {"si_sdr_out": [], "sir_out": [], "sar_out": [], "si_sdr_in": []})
        for metric in bucket:
            if row[metric]:
                bucket[metric].append(float(row[metric]))
    summary = []
    for (value, system), bucket in sorted(groups.items(), key=lambda kv: (float(kv[0][0]), kv[0][1])):
        summary.append(
            {
                "max_value": value,
                "system": system,
                "n": len(bucket["si_sdr_out"]),
                "median_si_sdr_in": f"{np.median(bucket['si_sdr_in']):.3f}",
                "median_si_sdr_out": f"{np.median(bucket['si_sdr_out']):.3f}",
                "median_sir_out": f"{np.median(bucket['sir_out']):.3f}",
                "median_sar_out": f"{np.median(bucket['sar_out']):.3f}",
            }
        )
    widths = {k: max(len(k), *(len(str(r[k])) for r in summary)) for k in summary[0]}
    header = "  ".join(k.ljust(widths[k]) for k in summary[0])
    print(header)
    for r in summary:
        print("  ".join(str(r[k]).ljust(widths[k]) for k in r))
    if out_path:
        with Path(out_path).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(summary[0]))
            writer.writeheader()
            writer.writerows(summary)
    return summary

import json
from pathlib import Path

import numpy as np
import pytest

from asyncse.attention import init_head, load_checkpoint
from asyncse.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from asyncse.experiments import (
    ConfigError,
    DataError,
    ExperimentConfig,
    build_scene,
    cmd_estimate_sto,
    cmd_generate,
    cmd_report,
    cmd_run,
    cmd_train_attn,
    condition_spec,
    read_results,
)
from asyncse.pipeline import PipelineConfig, run_pipeline
from asyncse.signals import StftConfig


def tiny_config(output_dir, **overrides) -> ExperimentConfig:
    base = dict(
        n_scenes=2,
        seed=7,
        duration_s=1.5,
        sweep_axis="sto",
        sweep_max_values=[0.0, 16.0],
        systems=["oracle"],
        max_order=2,
        output_dir=str(output_dir),
        train={
            "n_scenes": 2,
            "windows_per_node": 6,
            "augmentations": 1,
            "sto_aug_max_ms": 32.0,
            "epochs": 4,
            "learning_rate": 1.0,
            "batch_size": 16,
        },
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    """A usably trained attention checkpoint shared by the tests that need
    it.  The score matrix needs some training before similarity matrices
    align on content instead of frame loudness, so this fixture trains a
    bit longer than the throwaway configs."""
    out = tmp_path_factory.mktemp("trained")
    cfg = tiny_config(
        out,
        duration_s=3.0,
        systems=["async-trained-attention"],
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
    cmd_train_attn(cfg, "async-trained-attention")
    return out


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"n_scenes": 2, "bogus": 1}))
        with pytest.raises(ConfigError, match="bogus"):
            ExperimentConfig.from_file(path)

    def test_unsorted_sweep_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(sweep_max_values=[16.0, 8.0])

    def test_negative_sweep_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(sweep_max_values=[-1.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(tmp_path / "nope.json")

    def test_hash_stable(self, tmp_path):
        a = tiny_config(tmp_path)
        b = tiny_config(tmp_path)
        assert a.config_hash() == b.config_hash()


class TestGenerate:
    def test_files_and_determinism(self, tmp_path):
        cfg = tiny_config(tmp_path / "a", n_scenes=1)
        dirs = cmd_generate(cfg)
        scene_dir = dirs[0]
        manifest = json.loads((scene_dir / "manifest.json").read_text())
        assert manifest["scene_id"] == 0
        wavs = sorted(scene_dir.glob("*.wav"))
        assert len(wavs) == 4 * 4 * 3  # mixtures + target + noise images per mic

        first = {p.name: p.read_bytes() for p in wavs}
        manifest_text = (scene_dir / "manifest.json").read_text()
        for p in scene_dir.iterdir():
            p.unlink()
        scene_dir.rmdir()
        cmd_generate(cfg)
        assert (scene_dir / "manifest.json").read_text() == manifest_text
        for p in sorted(scene_dir.glob("*.wav")):
            assert p.read_bytes() == first[p.name]


class TestRun:
    def test_row_count_and_determinism(self, tmp_path):
        cfg_a = tiny_config(tmp_path / "a")
        cfg_b = tiny_config(tmp_path / "b")
        res_a = cmd_run(cfg_a)
        res_b = cmd_run(cfg_b)
        rows = read_results(res_a)
        assert len(rows) == 2 * 2 * 4  # conditions x scenes x nodes
        assert res_a.read_bytes() == res_b.read_bytes()

    def test_zero_sweep_equals_sync_baseline(self, tmp_path):
        cfg = tiny_config(tmp_path, sweep_max_values=[0.0])
        res = cmd_run(cfg)
        rows = read_results(res)
        pipe_cfg = PipelineConfig(stft=StftConfig())
        for i in range(cfg.n_scenes):
            scene = build_scene(cfg, i)[0]
            base = run_pipeline(scene, None, pipe_cfg)
            for row in [r for r in rows if r["scene_id"] == str(i)]:
                k = int(row["node_id"])
                assert abs(float(row["si_sdr_out"]) - base.node(k).metrics_out.si_sdr) < 1e-9

    def test_resume_skips_done_conditions(self, tmp_path, caplog):
        import logging

        cfg = tiny_config(tmp_path)
        cmd_run(cfg)
        merged = Path(cfg.output_dir) / "results.csv"
        before = merged.read_bytes()
        with caplog.at_level(logging.INFO, logger="asyncse"):
            cmd_run(cfg)
        assert "skipping" in caplog.text
        assert merged.read_bytes() == before

    def test_missing_checkpoint_is_data_error(self, tmp_path):
        cfg = tiny_config(tmp_path, systems=["sync-trained"])
        with pytest.raises(DataError, match="checkpoint"):
            cmd_run(cfg)


class TestTrainAttn:
    def test_zero_epochs_keeps_init(self, tmp_path):
        cfg = tiny_config(tmp_path)
        cfg.train["epochs"] = 0
        path = cmd_train_attn(cfg, "async-trained-attention")
        head = load_checkpoint(path)
        ref = init_head(n_bins=257, n_foreign=3, n_frames=21, attention=True, seed=cfg.seed)
        assert np.array_equal(head.v, ref.v)
        assert np.array_equal(head.w_score, ref.w_score)

    def test_fixed_seed_reproducible(self, tmp_path):
        cfg_a = tiny_config(tmp_path / "a")
        cfg_b = tiny_config(tmp_path / "b")
        pa = cmd_train_attn(cfg_a, "sync-trained")
        pb = cmd_train_attn(cfg_b, "sync-trained")
        assert pa.with_suffix(".curve.csv").read_text() == pb.with_suffix(".curve.csv").read_text()

    def test_oracle_has_no_head(self, tmp_path):
        with pytest.raises(ConfigError):
            cmd_train_attn(tiny_config(tmp_path), "oracle")


class TestEstimateSto:
    def test_zero_injection_estimates_zero(self, trained_dir):
        cfg = tiny_config(trained_dir, duration_s=3.0, systems=["async-trained-attention"])
        est = cmd_estimate_sto(cfg, 0, 0, [0.0, 0.0, 0.0, 0.0])
        rows = list(__import__("csv").DictReader(est.open()))
        for row in rows:
            assert row["estimated_sto_ms"] != ""
            assert abs(float(row["estimated_sto_ms"])) <= 16.0

    def test_80ms_injection_recovered(self, trained_dir):
        cfg = tiny_config(trained_dir, duration_s=3.0, systems=["async-trained-attention"])
        est = cmd_estimate_sto(cfg, 0, 0, [0.0, 80.0, 0.0, 0.0])
        rows = {r["foreign_node"]: r for r in __import__("csv").DictReader(est.open())}
        assert abs(float(rows["1"]["estimated_sto_ms"]) - 80.0) <= 16.0

    def test_antisymmetric_under_reference_swap(self, trained_dir):
        cfg = tiny_config(trained_dir, duration_s=3.0, systems=["async-trained-attention"])
        sto = [0.0, 80.0, 0.0, 0.0]
        est0 = cmd_estimate_sto(cfg, 0, 0, sto)
        est1 = cmd_estimate_sto(cfg, 0, 1, sto)
        rows0 = {r["foreign_node"]: r for r in __import__("csv").DictReader(est0.open())}
        rows1 = {r["foreign_node"]: r for r in __import__("csv").DictReader(est1.open())}
        a = float(rows0["1"]["estimated_sto_ms"])
        b = float(rows1["0"]["estimated_sto_ms"])
        assert abs(a + b) <= 16.0

    def test_similarity_matrices_written(self, trained_dir):
        out = Path(trained_dir) / "sto_estimates"
        sims = list(out.glob("sim_scene0_node0_ch*.csv"))
        assert len(sims) == 3
        m = np.loadtxt(sims[0], delimiter=",")
        assert m.shape == (21, 21)
        assert np.allclose(m.sum(axis=1), 1.0, atol=1e-6)


class TestReport:
    def test_summary_medians(self, tmp_path, capsys):
        cfg = tiny_config(tmp_path)
        res = cmd_run(cfg)
        summary = cmd_report(res, tmp_path / "summary.csv")
        rows = read_results(res)
        vals = [
            float(r["si_sdr_out"]) for r in rows if r["max_value"] == "0.0"
        ]
        line = next(s for s in summary if s["max_value"] == "0.0")
        assert float(line["median_si_sdr_out"]) == pytest.approx(np.median(vals), abs=1e-3)
        assert (tmp_path / "summary.csv").exists()


class TestCli:
    def test_bad_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["run", "--config", str(path)]) == EXIT_CONFIG

    def test_missing_data_exit_code(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(
            json.dumps(
                {
                    "n_scenes": 1,
                    "duration_s": 1.5,
                    "systems": ["sync-trained"],
                    "output_dir": str(tmp_path / "out"),
                }
            )
        )
        assert main(["run", "--config", str(path)]) == EXIT_DATA

    def test_conflicting_sweep_flags(self, tmp_path):
        assert (
            main(["run", "--sro-max-ppm", "100", "--sto-max-ms", "16",
                  "--output-dir", str(tmp_path)])
            == EXIT_CONFIG
        )

    def test_report_roundtrip(self, tmp_path):
        cfg = tiny_config(tmp_path)
        res = cmd_run(cfg)
        assert main(["report", "--input", str(res), "--out", str(tmp_path / "s.csv")]) == EXIT_OK

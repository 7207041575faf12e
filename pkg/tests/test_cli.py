"""CLI subcommands, config files, output layout, determinism, exit codes."""

import numpy as np
import pytest

from mammofuse.cli import main, parse_config_file
from mammofuse.experiments import ExperimentSpec, load_metrics_csv, run_grid, write_report
from mammofuse.fusion import EmbeddingTable, save_embeddings
from mammofuse.imagecore import GrayImage, save_gray
from mammofuse.pipeline import load_manifest

FAST_CONFIG = """
schema_version = 1
epochs = 2
unfreeze_epochs = 1
batch_size = 8
train_resize = 16
eval_resize = 16
crop = 16
stem_channels = 4
stage_channels = 4,6,8
"""


def write_class_images(root, n_per_class=3, size=12, nested_split=None):
    rng = np.random.default_rng(0)
    base = root if nested_split is None else root / nested_split
    for label_name in ("benign", "malignant"):
        class_dir = base / label_name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            save_gray(GrayImage(rng.random((size, size))), class_dir / f"{i}.pgm")


class TestIngest:
    def test_empty_source_errors_without_manifest(self, tmp_path, capsys):
        src = tmp_path / "empty"
        src.mkdir()
        out = tmp_path / "m.csv"
        assert main(["ingest", str(src), "--out", str(out)]) == 1
        assert not out.exists()

    def test_flat_layout(self, tmp_path, capsys):
        src = tmp_path / "data"
        write_class_images(src, n_per_class=2)
        out = tmp_path / "m.csv"
        assert main(["ingest", str(src), "--out", str(out)]) == 0
        manifest = load_manifest(out)
        assert len(manifest) == 4
        assert all(r.split == "" for r in manifest.records)
        assert "4 records" in capsys.readouterr().out

    def test_split_layout_marks_test(self, tmp_path):
        src = tmp_path / "data"
        write_class_images(src, 2, nested_split="train")
        write_class_images(src, 1, nested_split="test")
        out = tmp_path / "m.csv"
        assert main(["ingest", str(src), "--out", str(out)]) == 0
        manifest = load_manifest(out)
        counts = manifest.counts()
        assert counts[("test", "benign")] == 1
        assert counts[("unsplit", "benign")] == 2

    def test_rerun_is_byte_identical(self, tmp_path):
        src = tmp_path / "data"
        write_class_images(src, 3)
        out1, out2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
        main(["ingest", str(src), "--out", str(out1)])
        main(["ingest", str(src), "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_unreadable_file_skipped_run_continues(self, tmp_path, capsys):
        src = tmp_path / "data"
        write_class_images(src, 2)
        (src / "benign" / "broken.pgm").write_bytes(b"P5\n9 9\n255\nxx")
        out = tmp_path / "m.csv"
        assert main(["ingest", str(src), "--out", str(out)]) == 0
        assert len(load_manifest(out)) == 4
        assert "skipped unreadable" in capsys.readouterr().err


class TestEmbedImport:
    def test_validates_emb1(self, tmp_path, capsys):
        path = tmp_path / "t.emb1"
        table = EmbeddingTable(4)
        table.add("a", np.ones(4, dtype=np.float32))
        save_embeddings(table, path)
        assert main(["embed-import", str(path)]) == 0
        assert "valid EMB1" in capsys.readouterr().out

    def test_rejects_corrupt_file(self, tmp_path, capsys):
        path = tmp_path / "bad.emb1"
        path.write_bytes(b"JUNKJUNKJUNKJUNK")
        assert main(["embed-import", str(path)]) == 1

    def test_converts_npz(self, tmp_path, capsys):
        npz = tmp_path / "vec.npz"
        np.savez(npz, ids=np.array(["x", "y"]), vectors=np.ones((2, 3), dtype=np.float32))
        out = tmp_path / "conv.emb1"
        assert main(["embed-import", str(npz), "--out", str(out)]) == 0
        assert main(["embed-import", str(out)]) == 0


class TestConfigFile:
    def test_parses_and_applies(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text(FAST_CONFIG)
        raw = parse_config_file(cfg)
        assert raw["epochs"] == "2"

    def test_missing_schema_version_rejected(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("epochs = 3\n")
        with pytest.raises(ValueError, match="schema_version"):
            parse_config_file(cfg)

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("schema_version = 1\nwarp_speed = 9\n")
        with pytest.raises(ValueError, match="warp_speed"):
            parse_config_file(cfg)

    def test_comments_and_blanks_ignored(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("# header\nschema_version = 1\n\nepochs = 4  # trailing\n")
        assert parse_config_file(cfg) == {"epochs": "4"}


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert (
        main(
            [
                "synth",
                "--kind",
                "texture",
                "--out",
                str(root),
                "--per-class",
                "8",
                "--size",
                "16",
                "--seed",
                "0",
                "--embeddings-out",
                str(root / "emb.emb1"),
                "--embed-dim",
                "6",
            ]
        )
        == 0
    )
    return root


class TestRunAndReport:
    def test_grid_outputs_and_determinism(self, tiny_dataset, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(FAST_CONFIG)
        out1 = tmp_path / "run1"
        args = [
            "run",
            "--manifest",
            str(tiny_dataset / "manifest.csv"),
            "--setups",
            "baseline,LBP",
            "--seeds",
            "0,1",
            "--config",
            str(cfg),
        ]
        assert main(args + ["--out", str(out1)]) == 0
        assert (out1 / "metrics.csv").exists()
        assert (out1 / "aggregate.csv").exists()
        assert (out1 / "roc" / "baseline.csv").exists()
        assert (out1 / "roc" / "LBP.csv").exists()
        assert (out1 / "checkpoints" / "LBP_1.bin").exists()
        assert (out1 / "history" / "baseline_0.csv").exists()
        rows = load_metrics_csv(out1 / "metrics.csv")
        assert len(rows) == 4
        out2 = tmp_path / "run2"
        assert main(args + ["--out", str(out2)]) == 0
        assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
        assert (out1 / "aggregate.csv").read_bytes() == (out2 / "aggregate.csv").read_bytes()

    def test_dino_setup_without_embeddings_fails(self, tiny_dataset, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(FAST_CONFIG)
        code = main(
            [
                "run",
                "--manifest",
                str(tiny_dataset / "manifest.csv"),
                "--setups",
                "dino",
                "--seeds",
                "0",
                "--config",
                str(cfg),
                "--out",
                str(tmp_path / "x"),
            ]
        )
        assert code == 1

    def test_dino_setup_with_embeddings_runs(self, tiny_dataset, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(FAST_CONFIG)
        out = tmp_path / "dino_run"
        code = main(
            [
                "run",
                "--manifest",
                str(tiny_dataset / "manifest.csv"),
                "--setups",
                "dino",
                "--seeds",
                "0",
                "--config",
                str(cfg),
                "--embeddings",
                str(tiny_dataset / "emb.emb1"),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert len(load_metrics_csv(out / "metrics.csv")) == 1

    def test_threshold_tune_mode(self, tiny_dataset, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(FAST_CONFIG)
        out = tmp_path / "tuned"
        code = main(
            [
                "run",
                "--manifest",
                str(tiny_dataset / "manifest.csv"),
                "--setups",
                "baseline",
                "--seeds",
                "0",
                "--config",
                str(cfg),
                "--threshold",
                "tune",
                "--out",
                str(out),
            ]
        )
        assert code == 0

    def test_unknown_setup_rejected(self, tiny_dataset, tmp_path):
        code = main(
            [
                "run",
                "--manifest",
                str(tiny_dataset / "manifest.csv"),
                "--setups",
                "banana",
                "--out",
                str(tmp_path / "x"),
            ]
        )
        assert code == 1

    def test_report_ranks_and_bands(self, tmp_path, capsys):
        metrics = tmp_path / "metrics.csv"
        lines = ["setup,seed,auc,f1,prc,rec,acc"]
        for setup, aucs in (
            ("alpha", (0.7, 0.7)),
            ("beta", (0.9, 0.9)),
            ("gamma", (0.8, 0.8)),
            ("baseline", (0.6, 0.6)),
        ):
            for seed, v in enumerate(aucs):
                lines.append(f"{setup},{seed},{v:.6f},{v:.6f},0.5,0.5,0.5")
        metrics.write_text("\n".join(lines) + "\n")
        roc_dir = tmp_path / "roc"
        roc_dir.mkdir()
        for setup in ("alpha", "beta", "gamma", "baseline"):
            (roc_dir / f"{setup}.csv").write_text("setup,fpr,tpr_mean,tpr_std\n")
        out = tmp_path / "report"
        assert main(["report", str(metrics), "--out", str(out)]) == 0
        by_auc = (out / "report_by_auc.csv").read_text().splitlines()
        assert [row.split(",")[0] for row in by_auc[1:]] == ["beta", "gamma", "alpha", "baseline"]
        assert (out / "report_by_f1.txt").exists()
        bands = sorted(p.name for p in (out / "bands").iterdir())
        assert bands == ["alpha.csv", "baseline.csv", "beta.csv", "gamma.csv"]

    def test_report_tie_breaks_lexicographically(self, tmp_path):
        metrics = tmp_path / "metrics.csv"
        metrics.write_text(
            "setup,seed,auc,f1,prc,rec,acc\n"
            "zeta,0,0.8,0.5,0.5,0.5,0.5\n"
            "eta,0,0.8,0.5,0.5,0.5,0.5\n"
        )
        rankings = write_report(metrics, tmp_path / "rep")
        assert rankings["auc"] == ["eta", "zeta"]

    def test_report_rejects_malformed_csv(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("setup,auc\nx,0.5\n")
        assert main(["report", str(bad), "--out", str(tmp_path / "rep")]) == 1


class TestGridFailureHandling:
    def test_failing_setup_reported_grid_continues(self, tiny_dataset, tmp_path):
        # dino has no embeddings table entry for these ids -> that setup
        # aborts, but baseline still completes and lands in metrics.csv.
        empty_emb = tmp_path / "none.emb1"
        save_embeddings(EmbeddingTable(6), empty_emb)
        from mammofuse.cli import build_spec_pieces, parse_config_file as pcf

        cfg = tmp_path / "cfg.txt"
        cfg.write_text(FAST_CONFIG)
        tc, pol, arch, kspec, val_frac = build_spec_pieces(pcf(cfg))
        spec = ExperimentSpec(
            manifest_path=str(tiny_dataset / "manifest.csv"),
            out_dir=str(tmp_path / "grid"),
            setups=("dino", "baseline"),
            seeds=(0,),
            embeddings_path=str(empty_emb),
            train_config=tc,
            policy=pol,
            arch=arch,
            kspec=kspec,
        )
        outcome = run_grid(spec, log=lambda *a, **k: None)
        assert "dino" in outcome.failures
        rows = load_metrics_csv(tmp_path / "grid" / "metrics.csv")
        assert [r["setup"] for r in rows] == ["baseline"]
        assert not (tmp_path / "grid" / "roc" / "dino.csv").exists()

"""End-to-end checks for the command-line entry point.

Everything runs in-process through cli.main so exit codes and artifacts can
be asserted directly; the synthetic generator provides the datasets.
"""
import filecmp
import json
import os
from unittest import mock

import pytest

import inon.cli as cli
import inon.synth
from inon.data import load_manifest, manifest_to_text, parse_manifest
from inon.harness import NumericError, RunReport
from inon.models import load_model

SMALL_CAPS = {"train": 6, "dev": 4, "test": 4}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """A small separable 'in' dataset generated through the CLI itself."""
    root = tmp_path_factory.mktemp("cli_data")
    out = root / "synth"
    with mock.patch.dict(inon.synth.ROBOT_PAIR_CAPS, SMALL_CAPS):
        rc = cli.main([
            "synth",
            "--set", "seed=0",
            "--set", "n_objects=20",
            "--set", "container_fraction=0.4",
            "--set", "relation=in",
            "--out", str(out),
        ])
    assert rc == 0
    return out


def train_args(dataset, out, **extra):
    sets = {
        "manifest": str(dataset / "manifest.txt"),
        "store": str(dataset / "store.bin"),
        "relation": "in",
        "epochs": "2",
        "seeds": "0,1",
        "batch_size": "8",
        "base_filters": "4",
        "hidden": "16",
    }
    sets.update(extra)
    argv = ["train", "--out", str(out)]
    for k, v in sets.items():
        argv += ["--set", f"{k}={v}"]
    return argv


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_train") / "run"
    rc = cli.main(train_args(dataset, out))
    assert rc == 0
    return out


class TestValidate:
    def test_good_manifest_exits_zero(self, dataset, tmp_path, capsys):
        rc = cli.main(["validate", str(dataset / "manifest.txt"),
                       "--out", str(tmp_path)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "train:" in text and "dev:" in text and "test:" in text
        assert (tmp_path / "validation.txt").read_text() == text

    def test_cross_fold_pair_exits_one_and_names_pair(self, dataset, tmp_path, capsys):
        catalog, pairs = load_manifest(dataset / "manifest.txt", require_trials=False)
        train_obj = next(o.id for o in catalog.objects if o.fold == "train")
        dev_cont = next(o.id for o in catalog.objects
                        if o.fold == "dev" and o.is_container)
        text = manifest_to_text(catalog, pairs)
        text += f"pair in {train_obj} {dev_cont} label=no source=annotation\n"
        bad = tmp_path / "bad.txt"
        bad.write_text(text)
        rc = cli.main(["validate", str(bad)])
        assert rc == 1
        err = capsys.readouterr().err
        assert train_obj in err and dev_cont in err
        assert "spans folds" in err

    def test_missing_manifest_is_a_data_error(self, tmp_path, capsys):
        rc = cli.main(["validate", str(tmp_path / "nope.txt")])
        assert rc == 3
        assert "data error" in capsys.readouterr().err

    def test_trials_flag_checks_capture_tree(self, dataset, tmp_path):
        # the synth tree is complete, so --trials also passes
        rc = cli.main(["validate", str(dataset / "manifest.txt"),
                       "--trials", "--out", str(tmp_path)])
        assert rc == 0


class TestSynth:
    def test_writes_manifest_store_and_resolved_config(self, dataset):
        assert (dataset / "manifest.txt").exists()
        assert (dataset / "store.bin").exists()
        resolved = (dataset / "config.resolved").read_text().splitlines()
        assert "seed=0" in resolved
        assert "n_objects=20" in resolved
        # defaults are echoed too, not just the keys the caller set
        assert "difficulty=separable" in resolved
        assert "image_noise_sigma=0.0" in resolved
        assert resolved == sorted(resolved)

    def test_rerun_reproduces_manifest(self, dataset, tmp_path):
        out = tmp_path / "again"
        with mock.patch.dict(inon.synth.ROBOT_PAIR_CAPS, SMALL_CAPS):
            rc = cli.main(["synth", "--config", str(dataset / "config.resolved"),
                           "--out", str(out)])
        assert rc == 0
        assert filecmp.cmp(dataset / "manifest.txt", out / "manifest.txt",
                           shallow=False)
        assert filecmp.cmp(dataset / "store.bin", out / "store.bin",
                           shallow=False)

    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        rc = cli.main(["synth", "--set", "objects=9", "--out", str(tmp_path)])
        assert rc == 2
        assert "unknown config key 'objects'" in capsys.readouterr().err

    def test_bad_value_is_config_error(self, tmp_path, capsys):
        rc = cli.main(["synth", "--set", "n_objects=lots", "--out", str(tmp_path)])
        assert rc == 2
        assert "cannot parse" in capsys.readouterr().err

    def test_rejected_domain_value_is_config_error(self, tmp_path, capsys):
        rc = cli.main(["synth", "--set", "relation=under", "--out", str(tmp_path)])
        assert rc == 2
        assert "config error" in capsys.readouterr().err


class TestTrain:
    def test_artifacts(self, trained):
        for name in ("config.resolved", "report.json", "report.txt",
                     "curves.png", "model_seed0.tnsr", "model_seed1.tnsr"):
            assert (trained / name).exists(), name

    def test_report_round_trips(self, trained):
        report = RunReport.from_json((trained / "report.json").read_text())
        assert report.relation == "in"
        assert len(report.traces) == 2
        assert {t.seed for t in report.traces} == {0, 1}
        assert all(len(t.dev) == 2 for t in report.traces)

    def test_checkpoint_reloads(self, trained):
        params, meta = load_model(trained / "model_seed0.tnsr")
        assert meta["kind"] == "ego_obj"
        assert meta["seed"] == "0"
        assert "conv_rgb.conv1.weight" in params

    def test_rerun_is_byte_identical(self, dataset, trained, tmp_path):
        out = tmp_path / "rerun"
        rc = cli.main(train_args(dataset, out))
        assert rc == 0
        assert (out / "report.json").read_bytes() == \
            (trained / "report.json").read_bytes()
        assert (out / "report.txt").read_bytes() == \
            (trained / "report.txt").read_bytes()

    def test_resolved_config_reruns_identically(self, dataset, trained, tmp_path):
        out = tmp_path / "from_resolved"
        rc = cli.main(["train", "--config", str(trained / "config.resolved"),
                       "--out", str(out)])
        assert rc == 0
        assert (out / "report.json").read_bytes() == \
            (trained / "report.json").read_bytes()

    def test_missing_required_keys(self, tmp_path, capsys):
        rc = cli.main(["train", "--set", "relation=in", "--out", str(tmp_path)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "manifest" in err and "store" in err

    def test_bad_mask_token(self, dataset, tmp_path, capsys):
        rc = cli.main(train_args(dataset, tmp_path, mask="ego+sound"))
        assert rc == 2
        assert "mask tokens" in capsys.readouterr().err

    def test_missing_manifest_is_data_error(self, dataset, tmp_path, capsys):
        rc = cli.main(train_args(dataset, tmp_path,
                                 manifest=str(tmp_path / "gone.txt")))
        assert rc == 3

    def test_numeric_failure_exit_code(self, dataset, tmp_path, capsys, monkeypatch):
        def boom(*a, **k):
            raise NumericError("loss became nan")
        monkeypatch.setattr(cli, "train_run", boom)
        rc = cli.main(train_args(dataset, tmp_path))
        assert rc == 4
        assert "numeric failure" in capsys.readouterr().err

    def test_inon_out_sets_default_root(self, dataset, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("INON_OUT", str(tmp_path / "root"))
        monkeypatch.setattr(cli, "train_run", mock.Mock(
            side_effect=NumericError("stop early")))
        argv = train_args(dataset, tmp_path)
        argv = argv[:1] + argv[3:]  # drop --out
        cli.main(argv)
        assert (tmp_path / "root" / "train" / "config.resolved").exists()


class TestEval:
    def test_eval_checkpoint(self, dataset, trained, tmp_path, capsys):
        rc = cli.main([
            "eval",
            "--model", str(trained / "model_seed0.tnsr"),
            "--manifest", str(dataset / "manifest.txt"),
            "--store", str(dataset / "store.bin"),
            "--fold", "dev",
            "--out", str(tmp_path),
        ])
        assert rc == 0
        result = json.loads((tmp_path / "eval.json").read_text())
        assert result["fold"] == "dev"
        assert result["mode"] == "robot"
        assert 0.0 <= result["accuracy"] <= 1.0
        assert f"{result['accuracy']:.4f}" in capsys.readouterr().out

    def test_allpairs_mode_needs_object_only_model(self, dataset, trained,
                                                   tmp_path, capsys):
        rc = cli.main([
            "eval",
            "--model", str(trained / "model_seed0.tnsr"),
            "--manifest", str(dataset / "manifest.txt"),
            "--store", str(dataset / "store.bin"),
            "--mode", "allpairs",
            "--out", str(tmp_path),
        ])
        assert rc == 3

    def test_baselines_flag(self, dataset, trained, tmp_path):
        rc = cli.main([
            "eval",
            "--model", str(trained / "model_seed0.tnsr"),
            "--manifest", str(dataset / "manifest.txt"),
            "--store", str(dataset / "store.bin"),
            "--fold", "test",
            "--baselines",
            "--out", str(tmp_path),
        ])
        assert rc == 0
        result = json.loads((tmp_path / "eval.json").read_text())
        assert 0.0 <= result["baseline_mc"] <= 1.0
        mean, std = result["baseline_random"]
        assert 0.0 <= mean <= 1.0 and std >= 0.0


class TestPretrain:
    def test_writes_checkpoint_and_summary(self, dataset, tmp_path):
        out = tmp_path / "pre"
        rc = cli.main([
            "pretrain", "--out", str(out),
            "--set", f"manifest={dataset / 'manifest.txt'}",
            "--set", f"store={dataset / 'store.bin'}",
            "--set", "relation=in",
            "--set", "epochs=3",
            "--set", "seeds=0",
            "--set", "batch_size=8",
            "--set", "hidden=16",
        ])
        assert rc == 0
        payload = json.loads((out / "pretrain.json").read_text())
        assert 0.0 <= payload["dev_acc"] <= 1.0
        assert 0 <= payload["best_epoch"] < 3
        params, meta = load_model(out / "pretrained.tnsr")
        assert meta["kind"] == "obj_only"
        assert "proj_vision.weight" in params


class TestAblate:
    def test_runs_every_row_and_writes_table(self, dataset, tmp_path, monkeypatch):
        from inon.harness import SeedTrace

        calls = []

        def fake_protocol(cfg, data=None):
            calls.append((cfg.kind, cfg.mask.label(), cfg.pretrain))
            trace = SeedTrace(0, (1.0,), (0.5,), (0.5,))
            return RunReport(cfg.relation, cfg.kind, cfg.mask.label(),
                             cfg.pretrain, cfg.epochs, (trace,))

        monkeypatch.setattr(cli, "run_protocol", fake_protocol)
        out = tmp_path / "grid"
        rc = cli.main([
            "ablate", "--out", str(out),
            "--set", f"manifest={dataset / 'manifest.txt'}",
            "--set", f"store={dataset / 'store.bin'}",
            "--set", "relation=in",
            "--set", "epochs=1",
            "--set", "seeds=0",
        ])
        assert rc == 0
        assert len(calls) == 12
        assert sum(1 for k, _, _ in calls if k == "obj_only") == 6
        assert sum(1 for _, _, p in calls if p) == 6
        row_files = sorted(out.glob("row_*.json"))
        assert len(row_files) == 12
        table = (out / "table.txt").read_text()
        assert "Ego+L+V+pre" in table
        assert table.count("±") == 24


class TestStats:
    def test_two_expression_toy_histogram(self, tmp_path, capsys):
        manifest = tmp_path / "toy.txt"
        manifest.write_text(
            "version 1\n"
            "object cup fold=train container=1\n"
            "expr cup cup\n"
            "expr cup blue cup\n"
        )
        rc = cli.main(["stats", str(manifest), "--out", str(tmp_path)])
        assert rc == 0
        payload = json.loads((tmp_path / "stats.json").read_text())
        assert payload["length_histogram"] == {"1": 1, "2": 1}
        assert payload["vocabulary_size"] == 2
        out = capsys.readouterr().out
        assert "{1: 1, 2: 1}" in out

    def test_synth_manifest_stats(self, dataset, tmp_path):
        rc = cli.main(["stats", str(dataset / "manifest.txt"),
                       "--out", str(tmp_path)])
        assert rc == 0
        payload = json.loads((tmp_path / "stats.json").read_text())
        assert payload["modal_length"] is not None
        ranks = payload["rank_frequency"]
        counts = [c for _, c in ranks]
        assert counts == sorted(counts, reverse=True)


class TestReport:
    def test_renders_table_from_report_files(self, trained, tmp_path, capsys):
        rc = cli.main(["report", str(trained / "report.json"),
                       "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "model" in out and "dev" in out and "test" in out
        assert "±" in out
        assert (tmp_path / "table.txt").read_text() == out


class TestArgparse:
    def test_unknown_subcommand_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for name in ("validate", "synth", "train", "pretrain", "eval",
                     "ablate", "stats", "report"):
            assert name in out


class TestEndToEnd:
    def test_synth_train_eval_reaches_dev_accuracy(self, dataset, tmp_path, capsys):
        """Separable data end to end: train through the CLI, then the saved
        checkpoint scores at least 0.9 on the dev fold."""
        out = tmp_path / "e2e"
        rc = cli.main(train_args(dataset, out, epochs="12", seeds="0",
                                 dropout_p="0.0"))
        assert rc == 0
        capsys.readouterr()
        rc = cli.main([
            "eval",
            "--model", str(out / "model_seed0.tnsr"),
            "--manifest", str(dataset / "manifest.txt"),
            "--store", str(dataset / "store.bin"),
            "--fold", "dev",
            "--out", str(tmp_path / "e2e_eval"),
        ])
        assert rc == 0
        result = json.loads((tmp_path / "e2e_eval" / "eval.json").read_text())
        assert result["accuracy"] >= 0.9

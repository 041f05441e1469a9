"""End-to-end command runs: artifacts, manifests, exit codes, reruns."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from adoptnet.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

SYNTH_CFG = """
synth.num_users = 24
synth.num_context_users = 12
synth.num_apps = 16
synth.num_networks = 2
synth.edge_density = 0.2
synth.planted_net_weights = 0.6,0.3
synth.planted_pop_weight = 0.03
synth.pop_base_max = 5.0
synth.susceptibility_rate = 8.0
seed = 2
"""

FIT_KEYS = """
fit.grad_tol = 1e-4
fit.obj_tol = 1e-7
"""


def run_dirs(outdir: Path) -> list[Path]:
    return sorted(p for p in outdir.iterdir() if p.is_dir())


@pytest.fixture()
def bundle(tmp_path):
    """A synth dataset written by the CLI itself plus a base config for it."""
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(SYNTH_CFG + f"outdir = {tmp_path / 'synthout'}\n")
    assert main(["synth", str(cfg)]) == EXIT_OK
    [run_dir] = run_dirs(tmp_path / "synthout")
    base = (
        "num_users = 24\n"
        "num_apps = 16\n"
        f"adoptions.path = {run_dir / 'adoptions.csv'}\n"
        f"network.0.path = {run_dir / 'network0.csv'}\n"
        "network.0.symmetrize = max\n"
        f"network.1.path = {run_dir / 'network1.csv'}\n"
        "network.1.symmetrize = max\n"
        f"outdir = {tmp_path / 'runs'}\n"
        + FIT_KEYS
    )
    return tmp_path, run_dir, base


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestSynthCommand:
    def test_bundle_files(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SYNTH_CFG + f"outdir = {tmp_path / 'o'}\n")
        assert main(["synth", cfg]) == EXIT_OK
        [run_dir] = run_dirs(tmp_path / "o")
        names = sorted(p.name for p in run_dir.iterdir())
        # one file per network plus adoptions and planted params, plus manifest
        assert names == [
            "adoptions.csv", "manifest.json", "network0.csv", "network1.csv",
            "planted.json",
        ]
        planted = json.loads((run_dir / "planted.json").read_text())
        assert planted["params"]["alpha"] == [0.6, 0.3]
        assert planted["spec"]["num_users"] == 24

    def test_deterministic_rerun(self, tmp_path):
        cfg = write_cfg(tmp_path, SYNTH_CFG + f"outdir = {tmp_path / 'o'}\n")
        assert main(["synth", cfg]) == EXIT_OK
        [first] = run_dirs(tmp_path / "o")
        before = {p.name: p.read_bytes() for p in first.iterdir()}
        assert main(["synth", cfg]) == EXIT_OK
        [again] = run_dirs(tmp_path / "o")
        assert again == first
        after = {p.name: p.read_bytes() for p in again.iterdir()}
        assert before == after


class TestValidateCommand:
    def test_ok(self, bundle, capsys):
        tmp_path, _, base = bundle
        cfg = write_cfg(tmp_path, base)
        assert main(["validate", cfg]) == EXIT_OK
        out = capsys.readouterr().out
        assert "config ok: 2 network(s)" in out

    def test_typo_exits_config(self, bundle, capsys):
        tmp_path, _, base = bundle
        cfg = write_cfg(tmp_path, base + "aplha = 0.5\n")
        assert main(["validate", cfg]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "did you mean 'alpha'" in err

    def test_missing_data_file_exits_config(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "adoptions.path = gone.csv\n")
        assert main(["validate", cfg]) == EXIT_CONFIG
        assert "no such file" in capsys.readouterr().err


class TestTrainCommand:
    def test_artifacts_and_manifest(self, bundle, capsys):
        tmp_path, data_dir, base = bundle
        cfg = write_cfg(tmp_path, base)
        assert main(["train", cfg]) == EXIT_OK
        [run_dir] = run_dirs(tmp_path / "runs")
        params = json.loads((run_dir / "params.json").read_text())
        assert set(params) == {"alpha", "alpha_pop", "s", "constrained"}
        assert len(params["alpha"]) == 2
        assert len(params["s"]) == 24
        convergence = json.loads((run_dir / "convergence.json").read_text())
        assert convergence["converged"] is True
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["run_id"] == run_dir.name
        assert sorted(manifest["outputs"]) == ["convergence.json", "params.json"]
        hashes = manifest["inputs"]
        assert set(hashes) == {"adoptions.path", "network.0.path", "network.1.path"}
        for entry in hashes.values():
            assert len(entry["sha256"]) == 64
        out = capsys.readouterr().out
        assert "converged=True" in out

    def test_rerun_is_byte_identical(self, bundle):
        tmp_path, _, base = bundle
        cfg = write_cfg(tmp_path, base)
        assert main(["train", cfg]) == EXIT_OK
        [run_dir] = run_dirs(tmp_path / "runs")
        before = {p.name: p.read_bytes() for p in run_dir.iterdir()}
        assert main(["train", cfg]) == EXIT_OK
        assert run_dirs(tmp_path / "runs") == [run_dir]
        after = {p.name: p.read_bytes() for p in run_dir.iterdir()}
        assert before == after

    def test_override_changes_run_id(self, bundle):
        tmp_path, _, base = bundle
        cfg = write_cfg(tmp_path, base)
        assert main(["train", cfg]) == EXIT_OK
        assert main(["train", cfg, "--set", "train.apps=0,1,2,3,4,5,6,7"]) == EXIT_OK
        assert len(run_dirs(tmp_path / "runs")) == 2


class TestPredictCommand:
    def test_scores_from_trained_params(self, bundle, capsys):
        tmp_path, _, base = bundle
        cfg = write_cfg(tmp_path, base)
        assert main(["train", cfg]) == EXIT_OK
        [train_dir] = run_dirs(tmp_path / "runs")
        cfg2 = write_cfg(
            tmp_path,
            base + f"predict.params = {train_dir / 'params.json'}\n"
            "predict.apps = 0,3\n",
            name="predict.cfg",
        )
        assert main(["predict", cfg2]) == EXIT_OK
        capsys.readouterr()
        sheets = None
        for d in run_dirs(tmp_path / "runs"):
            if (d / "sheets.csv").exists():
                sheets = (d / "sheets.csv").read_text().splitlines()
        assert sheets is not None
        assert sheets[0] == "app_id,user_id,score,evaluated"
        body = [line.split(",") for line in sheets[1:]]
        assert len(body) == 2 * 24
        assert {row[0] for row in body} == {"0", "3"}
        for row in body:
            assert 0.0 <= float(row[2]) <= 1.0
            assert row[3] == "1"

    def test_user_count_mismatch_exits_config(self, bundle, capsys):
        tmp_path, _, base = bundle
        params = tmp_path / "p.json"
        params.write_text(json.dumps(
            {"alpha": [0.1, 0.1], "alpha_pop": 0.0, "s": [0.1] * 9,
             "constrained": True}))
        cfg = write_cfg(tmp_path, base + f"predict.params = {params}\n")
        assert main(["predict", cfg]) == EXIT_CONFIG
        assert "user count" in capsys.readouterr().err


class TestExperimentCommand:
    def test_reports_written_and_rerun_identical(self, bundle, capsys):
        tmp_path, _, base = bundle
        cfg = write_cfg(
            tmp_path,
            base + "protocol = ablation\nexperiment.folds = 2\n"
            "experiment.repeats = 1\n",
        )
        assert main(["experiment", cfg]) == EXIT_OK
        out = capsys.readouterr().out
        assert "full:" in out and "optimal_f1=" in out
        [run_dir] = run_dirs(tmp_path / "runs")
        report = json.loads((run_dir / "report.json").read_text())
        assert report["protocol"] == "ablation"
        assert (run_dir / "report.csv").read_text().startswith(
            "protocol,config,repeat,metric,value")
        summary = (run_dir / "summary.csv").read_text().splitlines()
        assert summary[0].startswith("config,")
        assert len(summary) == 1 + 5  # header plus one row per configuration
        before = {p.name: p.read_bytes() for p in run_dir.iterdir()}
        assert main(["experiment", cfg]) == EXIT_OK
        after = {p.name: p.read_bytes() for p in run_dir.iterdir()}
        assert before == after

    def test_jobs_recorded_in_manifest(self, bundle, capsys):
        tmp_path, _, base = bundle
        cfg = write_cfg(
            tmp_path,
            base + "protocol = ablation\nexperiment.folds = 2\n"
            "experiment.repeats = 1\n",
        )
        assert main(["experiment", cfg, "--jobs", "4"]) == EXIT_OK
        capsys.readouterr()
        manifests = [
            json.loads((d / "manifest.json").read_text())
            for d in run_dirs(tmp_path / "runs")
        ]
        assert any(m.get("jobs") == 4 for m in manifests)

    def test_missing_timestamps_exit_runtime(self, bundle, capsys):
        tmp_path, data_dir, base = bundle
        # strip the timestamp column off the adoption file
        plain = tmp_path / "plain.csv"
        lines = (data_dir / "adoptions.csv").read_text().splitlines()
        plain.write_text(
            "\n".join(",".join(line.split(",")[:2]) for line in lines) + "\n")
        cfg = write_cfg(
            tmp_path,
            base.replace(str(data_dir / "adoptions.csv"), str(plain))
            + "protocol = future\nexperiment.folds = 2\nexperiment.repeats = 1\n",
        )
        assert main(["experiment", cfg]) == EXIT_RUNTIME
        assert "timestamps" in capsys.readouterr().err


class TestStatsCommand:
    def test_prints_and_writes(self, bundle, capsys):
        tmp_path, _, base = bundle
        cfg = write_cfg(tmp_path, base)
        assert main(["stats", cfg]) == EXIT_OK
        out = capsys.readouterr().out
        stats = json.loads(out[: out.rindex("}") + 1])
        assert stats["num_users"] == 24
        found = any(
            (d / "stats.json").exists() for d in run_dirs(tmp_path / "runs"))
        assert found


class TestArgumentHandling:
    def test_jobs_must_be_positive(self, bundle, capsys):
        tmp_path, _, base = bundle
        cfg = write_cfg(tmp_path, base)
        assert main(["validate", cfg, "--jobs", "0"]) == EXIT_CONFIG
        assert "--jobs" in capsys.readouterr().err

    def test_unknown_command_exits_via_argparse(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate", "x.cfg"])
        assert exc.value.code == 2

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip()

    def test_missing_config_file_exits_config(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "none.cfg")]) == EXIT_CONFIG
        assert "cannot read" in capsys.readouterr().err

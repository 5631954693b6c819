import json
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from topoinc.cli import main
from topoinc import dataio

GOLDEN = Path(__file__).parent / "golden"


def run_cli(args, tmp_path=None):
    """Invoke the CLI in-process, capturing exit code."""
    return main(args)


def run_cli_subprocess(args):
    return subprocess.run(
        [sys.executable, "-m", "topoinc.cli", *args],
        capture_output=True, text=True,
    )


class TestGen:
    def test_row_count_and_determinism(self, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        for out in (out1, out2):
            assert run_cli(["gen", "--dataset", "two-moons", "--n-per-class", "1000",
                            "--sigma", "0.05", "--seed", "42", "--out", str(out)]) == 0
        assert out1.read_bytes() == out2.read_bytes()
        lines = out1.read_text().splitlines()
        assert lines[0] == "x1,x2,label,u"
        assert len(lines) == 1 + 2000
        meta = json.loads((tmp_path / "a.meta.json").read_text())
        assert "standardizer" in meta

    def test_zero_sigma_points_on_curves(self, tmp_path, spirals):
        out = tmp_path / "s.csv"
        assert run_cli(["gen", "--dataset", "spirals", "--n-per-class", "1",
                        "--sigma", "0", "--seed", "0", "--out", str(out)]) == 0
        pts, labels, us = dataio.load_dataset(out)
        assert len(pts) == 3
        for p, l, u in zip(pts, labels, us):
            assert np.allclose(spirals.curves[int(l)].point(u), p, atol=1e-12)

    def test_unknown_dataset_exits_2(self):
        # argparse rejects values outside choices: flag misuse
        res = run_cli_subprocess(["gen", "--dataset", "three-moons", "--out", "/tmp/x.csv"])
        assert res.returncode == 2


class TestTrainCommand:
    def test_checkpoint_roundtrip(self, tmp_path):
        out = tmp_path / "model.json"
        code = run_cli([
            "train", "--dataset", "segments", "--latent-components", "2",
            "--class-aware", "true", "--iters", "40", "--n-per-class", "50",
            "--seed", "7", "--out", str(out), "--trace-out", str(tmp_path / "trace.csv"),
        ])
        assert code == 0
        model = dataio.load_model(out)
        second = tmp_path / "model2.json"
        dataio.save_model(second, model)
        assert out.read_bytes() == second.read_bytes()
        trace = (tmp_path / "trace.csv").read_text().splitlines()
        assert trace[0] == "iteration,loss"
        assert len(trace) == 1 + 40

    def test_missing_required_flag_exits_2(self):
        res = run_cli_subprocess(["train", "--dataset", "segments", "--out", "/tmp/m.json"])
        assert res.returncode == 2

    def test_train_from_csv(self, tmp_path):
        data = tmp_path / "d.csv"
        run_cli(["gen", "--dataset", "segments", "--n-per-class", "60",
                 "--sigma", "0.05", "--seed", "3", "--out", str(data)])
        out = tmp_path / "m.json"
        code = run_cli(["train", "--data", str(data), "--latent-components", "1",
                        "--class-aware", "false", "--iters", "20", "--out", str(out)])
        assert code == 0
        assert dataio.load_model(out).latent.n_components == 1


@pytest.fixture(scope="module")
def tiny_model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "tiny.json"
    run_cli(["train", "--dataset", "segments", "--latent-components", "2",
             "--class-aware", "true", "--iters", "300", "--n-per-class", "100",
             "--seed", "5", "--out", str(path)])
    return path


class TestLevelsetCommand:
    def test_field_and_report(self, tiny_model_path, tmp_path):
        field_path = tmp_path / "field.csv"
        report_path = tmp_path / "report.json"
        code = run_cli([
            "levelset", "--model", str(tiny_model_path), "--lambda", "0.01",
            "--grid", "60", "--out-field", str(field_path),
            "--out-report", str(report_path),
        ])
        assert code == 0
        field = dataio.load_field(field_path)
        assert field.resolution == (60, 60)
        report = json.loads(report_path.read_text())
        assert report["lambda"] == 0.01
        assert report["n_components"] >= 1
        # 60 rows of 60 values plus the header line
        assert len(field_path.read_text().splitlines()) == 61

    def test_full_grid_flag(self, tiny_model_path, tmp_path):
        code = run_cli([
            "levelset", "--model", str(tiny_model_path), "--grid", "300",
            "--out-field", str(tmp_path / "f.csv"),
            "--out-report", str(tmp_path / "r.json"),
        ])
        assert code == 0
        text = (tmp_path / "f.csv").read_text().splitlines()
        assert len(text) == 301
        assert sum(len(row.split(",")) for row in text[1:]) == 90000


class TestIncCommand:
    def test_ideal_single_query(self, tmp_path):
        out = tmp_path / "res.csv"
        code = run_cli(["inc", "--variant", "ideal", "--dataset", "two-moons",
                        "--query", "1.2,0.0", "--out", str(out)])
        assert code == 0
        row = out.read_text().splitlines()[1].split(",")
        assert abs(float(row[2]) - 1.0) < 1e-6
        assert abs(float(row[3])) < 1e-6

    def test_flow_variants_with_trace(self, tiny_model_path, tmp_path):
        for variant in ("ignorant", "aware"):
            out = tmp_path / f"{variant}.csv"
            trace = tmp_path / f"{variant}-trace.csv"
            code = run_cli(["inc", "--variant", variant, "--model", str(tiny_model_path),
                            "--query", "0.1,0.5", "--steps", "20",
                            "--out", str(out), "--trace-out", str(trace)])
            assert code == 0
            lines = trace.read_text().splitlines()
            assert lines[0] == "step,z1,z2,x1,x2,objective"
            assert len(lines) == 1 + 21

    def test_module_error_exits_1_with_json(self):
        res = run_cli_subprocess(["inc", "--variant", "ideal", "--query", "0,0",
                                  "--out", "/tmp/x.csv"])
        assert res.returncode == 1
        payload = json.loads(res.stderr.strip().splitlines()[-1])
        assert "error" in payload and "message" in payload


class TestBenchCommand:
    def test_bench_reports_and_manifest(self, tiny_model_path, tmp_path):
        out_dir = tmp_path / "bench"
        code = run_cli([
            "bench", "--dataset", "segments",
            "--model-ignorant", str(tiny_model_path),
            "--model-aware", str(tiny_model_path),
            "--n-sources", "5", "--steps", "10", "--seed", "3",
            "--out-dir", str(out_dir),
        ])
        assert code == 0
        manifest = json.loads((out_dir / "run_manifest.json").read_text())
        assert manifest["config"]["dataset"] == "segments"
        assert manifest["config"]["seed"] == 3
        for json_name, csv_name in manifest["artifacts"].values():
            report = json.loads((out_dir / json_name).read_text())
            assert report["n_trials"] == 2 * 5 * 2
            errs = np.asarray(report["errors"])
            assert abs(errs.mean() - report["mean_error"]) < 1e-12
            rows = (out_dir / csv_name).read_text().splitlines()
            assert rows[0] == "trial,error,error_raw"
            assert len(rows) == 1 + report["n_trials"]

    def test_bench_config_file(self, tiny_model_path, tmp_path):
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps({
            "dataset": "segments",
            "model_ignorant": str(tiny_model_path),
            "model_aware": str(tiny_model_path),
            "n_sources": 3, "steps": 5, "seed": 4,
        }))
        out_dir = tmp_path / "bench2"
        assert run_cli(["bench", "--config", str(cfg_path), "--out-dir", str(out_dir)]) == 0
        manifest = json.loads((out_dir / "run_manifest.json").read_text())
        assert manifest["config"]["n_sources"] == 3


class TestBoundaryCommand:
    def test_defense_none_smoke(self, tmp_path):
        out = tmp_path / "labels.csv"
        meta = tmp_path / "meta.json"
        code = run_cli(["boundary", "--dataset", "segments", "--defense", "none",
                        "--grid", "16", "--n-per-class", "40",
                        "--out", str(out), "--out-meta", str(meta)])
        assert code == 0
        labels = dataio.labels_from_csv(out.read_text())
        assert labels.shape == (16, 16)
        assert set(np.unique(labels)) <= {0, 1}
        assert json.loads(meta.read_text())["defense"] == "none"


class TestPlotCommand:
    def test_scatter_svg(self, tmp_path):
        data = tmp_path / "d.csv"
        run_cli(["gen", "--dataset", "two-moons", "--n-per-class", "40",
                 "--sigma", "0.05", "--seed", "1", "--out", str(data)])
        out = tmp_path / "scatter.svg"
        assert run_cli(["plot", "--kind", "scatter", "--in", str(data),
                        "--out", str(out)]) == 0
        root = ET.parse(out).getroot()
        groups = [el for el in root if el.tag.endswith("g")]
        assert len(groups) == 2  # one marker group per class

    def test_heatmap_and_outline_svg(self, tiny_model_path, tmp_path):
        field_path = tmp_path / "field.csv"
        run_cli(["levelset", "--model", str(tiny_model_path), "--grid", "40",
                 "--out-field", str(field_path), "--out-report", str(tmp_path / "r.json")])
        for kind in ("field-heatmap", "levelset-outline"):
            out = tmp_path / f"{kind}.svg"
            assert run_cli(["plot", "--kind", kind, "--field", str(field_path),
                            "--lambda", "0.01", "--out", str(out)]) == 0
            ET.parse(out)  # well-formed XML

    def test_trace_svg(self, tiny_model_path, tmp_path):
        trace = tmp_path / "trace.csv"
        run_cli(["inc", "--variant", "ignorant", "--model", str(tiny_model_path),
                 "--query", "0.2,0.1", "--steps", "10",
                 "--out", str(tmp_path / "r.csv"), "--trace-out", str(trace)])
        out = tmp_path / "trace.svg"
        assert run_cli(["plot", "--kind", "trace", "--in", str(trace),
                        "--out", str(out)]) == 0
        root = ET.parse(out).getroot()
        ids = {el.get("id") for el in root if el.tag.endswith("g")}
        assert {"trace-path", "trace-steps"} <= ids

    def test_boundary_svg(self, tmp_path):
        labels = tmp_path / "labels.csv"
        run_cli(["boundary", "--dataset", "segments", "--defense", "none",
                 "--grid", "12", "--n-per-class", "30", "--out", str(labels)])
        out = tmp_path / "b.svg"
        assert run_cli(["plot", "--kind", "boundary", "--in", str(labels),
                        "--out", str(out)]) == 0
        ET.parse(out)


class TestHelp:
    @pytest.mark.parametrize(
        "cmd", ["top", "gen", "train", "levelset", "inc", "bench", "boundary", "plot"]
    )
    def test_help_matches_golden(self, cmd):
        args = ["--help"] if cmd == "top" else [cmd, "--help"]
        res = run_cli_subprocess(args)
        assert res.returncode == 0
        assert res.stdout == (GOLDEN / f"help-{cmd}.txt").read_text()

    def test_every_flag_lists_default(self):
        # defaults are embedded in the help strings
        text = (GOLDEN / "help-gen.txt").read_text()
        for part in ("default: 1000", "default: 0.05", "default: 0"):
            assert part in text


class TestEnvOverrides:
    def test_env_var_overrides_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TOPOINC_N_PER_CLASS", "7")
        res = subprocess.run(
            [sys.executable, "-m", "topoinc.cli", "gen", "--dataset", "segments",
             "--sigma", "0", "--out", str(tmp_path / "e.csv")],
            capture_output=True, text=True,
            env={**__import__("os").environ, "TOPOINC_N_PER_CLASS": "7"},
        )
        assert res.returncode == 0
        assert len((tmp_path / "e.csv").read_text().splitlines()) == 1 + 14

"""CLI tests: config resolution, exit codes, artifact plumbing, and
byte-identical reruns."""

import json

import numpy as np
import pytest

from xbar_dse import cli
from xbar_dse.errors import ConvergenceError
from xbar_dse.topology import Topology


def run_cli(*argv):
    return cli.main(list(argv))


class TestConfigLoading:
    def test_empty_file_gives_pure_defaults(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("")
        cfg = cli.load_config(p)
        assert cfg == cli.DEFAULTS
        assert cfg["parasitics"]["wire_res"] == 182.0
        assert cfg["v_wl"] == 0.7 and cfg["v_bl"] == 0.25

    def test_comments_stripped(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("""
        {
          // line comment
          "rows": 8, /* block
          comment */ "cols": 4,
          "tech": "sram" // trailing
        }
        """)
        cfg = cli.load_config(p)
        assert (cfg["rows"], cfg["cols"], cfg["tech"]) == (8, 4, "sram")

    def test_comment_markers_inside_strings_survive(self):
        text = cli._strip_json_comments('{"a": "http://x" /*c*/}')
        assert json.loads(text) == {"a": "http://x"}

    def test_unknown_key_suggests_nearest(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"parasitcs": {"wire_res": 0}}')
        with pytest.raises(cli.UsageError, match="parasitics"):
            cli.load_config(p)

    def test_nested_unknown_key(self):
        with pytest.raises(cli.UsageError, match="wire_res"):
            cli.load_config(None, ["parasitics.wireres=0"])

    def test_type_mismatch_rejected(self):
        with pytest.raises(cli.UsageError, match="integer"):
            cli.load_config(None, ["rows=8.5"])
        with pytest.raises(cli.UsageError, match="number"):
            cli.load_config(None, ['v_bl="high"'])

    def test_layering_order(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"rows": 8, "cols": 8}')
        cfg = cli.load_config(p, ["rows=16"])
        assert cfg["rows"] == 16 and cfg["cols"] == 8

    def test_device_knobs_validated_per_tech(self):
        cfg = cli.load_config(None, ["tech=sotmram", "device.t_mgo=1.2"])
        assert cfg["device"]["t_mgo"] == 1.2
        with pytest.raises(cli.UsageError, match="t_mgo"):
            cli.load_config(None, ["tech=fefet", "device.t_mgo=1.2"])

    def test_bad_override_format(self):
        with pytest.raises(cli.UsageError, match="key=value"):
            cli.load_config(None, ["rows:8"])

    def test_missing_file(self):
        with pytest.raises(cli.UsageError, match="not found"):
            cli.load_config("/nonexistent/config.json")

    def test_build_crossbar_config(self):
        cfg = cli.load_config(None, ["tech=sram", "topology=drain",
                                     "device.v_bias=0.6",
                                     "parasitics.scale=0.5"])
        xbar = cli.build_crossbar_config(cfg)
        assert xbar.topology is Topology.DRAIN_INPUT
        assert xbar.device.params.v_bias == 0.6
        assert xbar.parasitics.wire_res == 91.0


class TestExitCodes:
    def test_usage_error_is_1(self, capsys):
        assert run_cli("solve", "--rows", "1", "--cols", "1",
                       "--input", "2", "--weight", "1") == 1
        assert "0 or 1" in capsys.readouterr().err

    def test_unknown_flag_is_1(self):
        assert run_cli("nf", "--no-such-flag") == 1

    def test_unknown_config_key_is_1(self, capsys):
        assert run_cli("nf", "--set", "parasitcs.wire_res=0") == 1
        assert "parasitics" in capsys.readouterr().err

    def test_numerical_failure_is_2(self, monkeypatch, capsys):
        def boom(*a, **k):
            raise ConvergenceError("stalled", last_residual=1.0, iterations=9)
        monkeypatch.setattr(cli.metrics, "simulate", boom)
        assert run_cli("solve", "--rows", "1", "--cols", "1",
                       "--input", "1", "--weight", "1") == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_success_is_0(self):
        assert run_cli("nf", "--rows", "4", "--cols", "4",
                       "--samples", "3") == 0


class TestSolve:
    def test_single_cell_reference_current(self, capsys):
        assert run_cli("solve", "--tech", "fefet", "--rows", "1",
                       "--cols", "1", "--input", "1", "--weight", "1") == 0
        out = capsys.readouterr().out
        current = float(out.split(":")[1].split("A")[0])
        assert current == pytest.approx(4.1165e-6, rel=1e-3)

    def test_solve_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_cli("solve", "--rows", "2", "--cols", "2",
                       "--input", "1,0", "--weight", "1,0,0,1",
                       "--out", str(out)) == 0
        payload = json.loads((out / "solve.json").read_text())
        assert len(payload["column_currents_a"]) == 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "solve"
        assert manifest["config"]["rows"] == 2
        assert "solve.json" in manifest["outputs"]

    def test_bit_count_mismatch(self, capsys):
        assert run_cli("solve", "--rows", "2", "--cols", "1",
                       "--input", "1,0,1", "--weight", "1") == 1


class TestOverwriteProtection:
    def test_no_silent_overwrite(self, tmp_path):
        out = str(tmp_path / "run")
        args = ("nf", "--rows", "4", "--cols", "4", "--samples", "3",
                "--out", out)
        assert run_cli(*args) == 0
        assert run_cli(*args) == 1
        assert run_cli(*args, "--force") == 0


class TestArtifacts:
    def test_nf_csv_round_trip(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli("nf", "--rows", "8", "--cols", "4", "--samples", "5",
                       "--out", str(out)) == 0
        rows = np.loadtxt(out / "nf_samples.csv", delimiter=",", skiprows=1)
        assert rows.shape[1] == 3

    def test_sm_drain_curve(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli("sm", "--tech", "sram", "--topology", "drain",
                       "--rows", "8", "--cols", "8", "--out", str(out)) == 0
        rows = np.loadtxt(out / "sm.csv", delimiter=",", skiprows=1)
        assert rows.shape[0] == 8

    def test_sweep_single_point(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert run_cli("sweep", "--knob", "r_on", "--values", "60e3",
                       "--tech", "sram", "--rows", "8", "--cols", "4",
                       "--samples", "5", "--out", str(out)) == 0
        payload = json.loads((out / "sweep.json").read_text())
        assert payload["points"][0]["implied_knob"] == pytest.approx(0.52,
                                                                     abs=1e-6)

    def test_variations_report(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli("variations", "--rows", "8", "--cols", "4",
                       "--samples", "5", "--n-seeds", "2", "--sigma", "0.1",
                       "--out", str(out)) == 0
        payload = json.loads((out / "variations.json").read_text())
        assert len(payload["per_seed"]) == 2

    def test_infer_bundled_ideal(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli("infer", "--bundled", "--mode", "ideal",
                       "--n-samples", "50", "--out", str(out)) == 0
        payload = json.loads((out / "inference.json").read_text())
        assert payload["accuracy"] >= 0.9
        assert payload["accuracy_drop"] == 0.0

    def test_infer_needs_model_or_bundled(self):
        assert run_cli("infer", "--mode", "ideal") == 1

    def test_train_surrogate_writes_net(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli("train-surrogate", "--rows", "8", "--cols", "8",
                       "--records", "200", "--hidden", "8", "--epochs", "3",
                       "--out", str(out)) == 0
        assert (out / "surrogate.json").exists()
        assert (out / "surrogate.bin").exists()
        payload = json.loads((out / "training.json").read_text())
        assert payload["test_mse"] > 0
        assert len(payload["epoch_losses"]) >= 3


class TestDeterminism:
    def test_compare_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        args = ("compare", "--seed", "7", "--rows", "16", "--cols", "16",
                "--samples", "10", "--x-max", "2")
        assert run_cli(*args, "--out", str(a)) == 0
        assert run_cli(*args, "--out", str(b)) == 0
        assert (a / "compare.json").read_bytes() == \
            (b / "compare.json").read_bytes()

    def test_worker_count_invariance(self, tmp_path, monkeypatch):
        out1, out2 = tmp_path / "t1", tmp_path / "t2"
        args = ("nf", "--rows", "16", "--cols", "8", "--samples", "10")
        assert run_cli(*args, "--out", str(out1), "--threads", "1") == 0
        assert run_cli(*args, "--out", str(out2), "--threads", "3") == 0
        assert (out1 / "nf_samples.csv").read_bytes() == \
            (out2 / "nf_samples.csv").read_bytes()

    def test_invalid_threads(self):
        assert run_cli("nf", "--samples", "2", "--rows", "4", "--cols", "4",
                       "--threads", "0") == 1

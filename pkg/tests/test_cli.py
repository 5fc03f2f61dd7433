"""End-to-end tests of the command-line entry point."""

import json

import pandas as pd
import pytest

from carleman_lab.cli import build_parser, main


class TestParser:
    def test_subcommands(self):
        args = build_parser().parse_args(["doubling", "--s", "0.3", "0.5", "--family", "homogeneous", "-v"])
        assert args.command == "doubling"
        assert args.s == [0.3, 0.5]
        assert args.family == "homogeneous"
        assert args.verbose
        assert args.quick is None

    def test_unknown_family(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["doubling", "--family", "spherical"])


class TestSpectrum:
    def test_half_order(self, tmp_path):
        assert main(["spectrum", "--s", "0.5", "--k-max", "3", "--out", str(tmp_path)]) == 0
        table = pd.read_csv(tmp_path / "spectrum.csv")
        assert list(table["lambda_explicit"]) == pytest.approx([0.0, -1.0, -4.0, -9.0])
        summary = json.loads((tmp_path / "spectrum.json").read_text())
        assert summary["passed"] is True
        assert (tmp_path / "metadata.json").exists()

    def test_invalid_order(self, tmp_path):
        assert main(["spectrum", "--s", "1.5", "--out", str(tmp_path)]) == 2


class TestDoubling:
    def test_homogeneous(self, tmp_path):
        code = main(["doubling", "--family", "homogeneous", "--k", "2", "--s", "0.5", "--quick",
                     "--out", str(tmp_path)])
        assert code == 0
        table = pd.read_csv(tmp_path / "doubling.csv")
        assert list(table["ratio"]) == pytest.approx([8.0] * 4, rel=1e-4)
        summary = json.loads((tmp_path / "doubling.json").read_text())
        entry = summary["orders"][0]
        assert entry["three_balls_alpha"] == pytest.approx(0.5, abs=1e-4)
        assert entry["vanishing_order"] == pytest.approx(entry["vanishing_order_expected"], abs=1e-2)

    def test_ball_leaves_grid(self, tmp_path):
        code = main(["doubling", "--family", "homogeneous", "--radii", "0.9", "--quick", "--out", str(tmp_path)])
        assert code == 2


class TestRejections:
    def test_trace_needs_tau_above_one(self, tmp_path):
        assert main(["trace", "--tau", "1", "--quick", "--out", str(tmp_path)]) == 2

    def test_carleman_needs_order(self, tmp_path):
        assert main(["carleman", "--s", "0.2", "--quick", "--out", str(tmp_path)]) == 2

    def test_config_file(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"s": [2.0]}))
        assert main(["spectrum", "--config", str(config), "--out", str(tmp_path)]) == 2

    def test_input_columns(self, tmp_path):
        samples = tmp_path / "samples.csv"
        samples.write_text("x,u\n0,1\n1,2\n")
        assert main(["extend", "--input", str(samples), "--out", str(tmp_path)]) == 2


class TestTrace:
    def test_reproducible(self, tmp_path):
        for name in ("one", "two"):
            assert main(["trace", "--quick", "--out", str(tmp_path / name)]) == 0
        for artifact in ("trace.csv", "trace.json", "trace_summary.csv"):
            assert (tmp_path / "one" / artifact).read_bytes() == (tmp_path / "two" / artifact).read_bytes()


class TestVerify:
    def test_rerun_is_byte_identical(self, tmp_path):
        codes = [main(["verify", "--quick", "--out", str(tmp_path / name)]) for name in ("one", "two")]
        assert codes == [0, 0]
        first = sorted(p.name for p in (tmp_path / "one").iterdir())
        assert first == sorted(p.name for p in (tmp_path / "two").iterdir())
        assert {"verify.json", "verify.csv", "metadata.json"} <= set(first)
        for name in first:
            if name == "metadata.json":
                continue
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes(), name
        checks = json.loads((tmp_path / "one" / "verify.json").read_text())["checks"]
        assert "regime_inequalities" in [check["name"] for check in checks]


class TestExtend:
    def test_synthetic_data(self, tmp_path):
        assert main(["extend", "--quick", "--s", "0.5", "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "extend.json").read_text())
        assert summary["orders"][0]["d_s"] == pytest.approx(1.0, rel=1e-6)
        assert summary["orders"][0]["neumann_consistency"] <= 1e-3
        assert summary["passed"] is True
        dtn = pd.read_csv(tmp_path / "dtn_s0.5.csv")
        assert list(dtn.columns) == ["y1", "value", "dtn", "fractional_laplacian", "neumann_trace"]
        assert (tmp_path / "extension_s0.5.csv").exists()

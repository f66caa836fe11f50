import json
import sys
import os
from unittest.mock import patch

import pytest

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.fracfts.core.errors import MlfAccuracyError
from src.fracfts.main import (
    EXIT_INPUT_ERROR,
    EXIT_NOT_CERTIFIED,
    EXIT_OK,
    EXIT_OUTPUT_ERROR,
    EXIT_VACUOUS,
    main,
)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")
EXAMPLE1 = os.path.join(CONFIG_DIR, "example1.json")
EXAMPLE2 = os.path.join(CONFIG_DIR, "example2.json")
ZERO = os.path.join(CONFIG_DIR, "zero_system.json")


def write_variant(tmp_path, source, **query_changes):
    """复制配置并修改 query 字段"""
    with open(source, encoding="utf-8") as f:
        data = json.load(f)
    data["query"].update(query_changes)
    path = tmp_path / "variant.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


class TestCheckCommand:
    """check 子命令测试"""

    def test_examples_certified(self, capsys):
        """测试两个示例都被证明"""
        for path in (EXAMPLE1, EXAMPLE2):
            assert main(["check", path]) == EXIT_OK
            report = json.loads(capsys.readouterr().out)
            assert report["status"] == "certified"
            assert report["verdict_D"] is True
            assert set(report) >= {"a0", "a1", "a2", "M", "r1", "r2", "C", "D", "eta"}

    def test_deterministic_output(self, capsys):
        main(["check", EXAMPLE1])
        first = capsys.readouterr().out
        main(["check", EXAMPLE1])
        assert capsys.readouterr().out == first

    def test_not_certified(self, tmp_path, capsys):
        """测试 ε2 过小时退出码为 1"""
        path = write_variant(tmp_path, EXAMPLE1, eps2=10.0)
        assert main(["check", path]) == EXIT_NOT_CERTIFIED
        report = json.loads(capsys.readouterr().out)
        assert report["status"] == "not_certified"

    def test_vacuous(self, tmp_path, capsys):
        """测试溢出时退出码为 2，C、D 输出为 null"""
        with open(EXAMPLE1, encoding="utf-8") as f:
            data = json.load(f)
        data["system"]["T"] = 200.0
        data["query"]["T"] = 200.0
        path = tmp_path / "long.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        assert main(["check", str(path)]) == EXIT_VACUOUS
        report = json.loads(capsys.readouterr().out)
        assert report["C"] is None and report["D"] is None

    def test_malformed_config(self, tmp_path, capsys):
        """测试配置错误时退出码为 3"""
        path = tmp_path / "bad.json"
        path.write_text('{"system": ', encoding="utf-8")
        assert main(["check", str(path)]) == EXIT_INPUT_ERROR
        assert "error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["check", str(tmp_path / "nope.json")]) == EXIT_INPUT_ERROR

    def test_invalid_query(self, tmp_path):
        path = write_variant(tmp_path, EXAMPLE1, eps1=100.0)
        assert main(["check", path]) == EXIT_INPUT_ERROR

    @patch("src.fracfts.main.compute_certificate", side_effect=MlfAccuracyError("cannot reach accuracy"))
    def test_computation_error(self, mock_compute):
        """测试计算异常映射为退出码 3"""
        assert main(["check", ZERO]) == EXIT_INPUT_ERROR
        mock_compute.assert_called_once()

    def test_log_level_option(self, capsys):
        assert main(["--log-level", "debug", "check", ZERO]) == EXIT_OK
        json.loads(capsys.readouterr().out)


class TestSimulateCommand:
    """simulate 子命令测试"""

    def test_zero_system(self, tmp_path, capsys):
        """测试零系统轨迹 CSV 与摘要"""
        assert main(["simulate", ZERO, "--out", str(tmp_path)]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["sup_norm"] == 0.0
        assert summary["within_eps2"] is True
        assert summary["envelope"]["all_within_eps2"] is True

        lines = (tmp_path / "trajectory.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "t,x1,x2,norm"
        assert len(lines) == 1 + 2049
        assert all(line.split(",")[1:] == ["0", "0", "0"] for line in lines[1:])
        assert json.loads((tmp_path / "summary.json").read_text(encoding="utf-8")) == summary

    def test_deterministic_files(self, tmp_path):
        """测试相同输入与种子写出相同的文件"""
        for name in ("a", "b"):
            assert main(["simulate", EXAMPLE1, "--step", "0.0015", "--samples", "4", "--seed", "3",
                         "--out", str(tmp_path / name)]) == EXIT_OK
        for filename in ("trajectory.csv", "summary.json"):
            assert (tmp_path / "a" / filename).read_bytes() == (tmp_path / "b" / filename).read_bytes()

    def test_example2_envelope(self, tmp_path, capsys):
        """测试示例 2 的随机扰动包络不超过 ε2"""
        assert main(["simulate", EXAMPLE2, "--samples", "8", "--out", str(tmp_path)]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["within_eps2"] is True
        assert summary["envelope"]["all_within_eps2"] is True
        assert summary["envelope"]["max_sup_norm"] <= 100.0
        assert summary["sup_norm"] <= 100.0

    def test_explicit_step(self, tmp_path, capsys):
        assert main(["simulate", ZERO, "--step", "0.01", "--out", str(tmp_path)]) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["step"] == pytest.approx(0.01)
        assert summary["points"] == 51

    def test_bad_step_value(self):
        with pytest.raises(SystemExit):
            main(["simulate", ZERO, "--step", "fast"])

    def test_step_too_large(self, tmp_path):
        assert main(["simulate", ZERO, "--step", "0.2", "--out", str(tmp_path)]) == EXIT_INPUT_ERROR

    def test_unwritable_output(self, tmp_path):
        """测试输出目录不可写时退出码为 4"""
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory", encoding="utf-8")
        assert main(["simulate", ZERO, "--out", str(blocker / "sub")]) == EXIT_OUTPUT_ERROR


class TestSweepCommand:
    """sweep 子命令测试"""

    def test_degenerate_range_matches_check(self, tmp_path, capsys):
        """测试 [1, 1] 单点扫描与 check 一致"""
        main(["check", EXAMPLE1])
        check = json.loads(capsys.readouterr().out)
        assert main(["sweep", EXAMPLE1, "--eta-min", "1", "--eta-max", "1", "--points", "1",
                     "--out", str(tmp_path)]) == EXIT_OK
        sweep = json.loads(capsys.readouterr().out)
        assert sweep["certificate"]["D"] == check["D"]
        lines = (tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "eta,C,D,verdict_D"
        assert len(lines) == 2
        assert lines[1].endswith(",true")

    def test_search_improves_on_fixed_eta(self, tmp_path, capsys):
        main(["check", EXAMPLE1])
        check = json.loads(capsys.readouterr().out)
        assert main(["sweep", EXAMPLE1, "--points", "16", "--out", str(tmp_path)]) == EXIT_OK
        sweep = json.loads(capsys.readouterr().out)
        assert sweep["best"]["D"] <= check["D"]
        assert len((tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()) == 17

    def test_invalid_range(self, tmp_path):
        assert main(["sweep", EXAMPLE1, "--eta-min", "5", "--eta-max", "1",
                     "--out", str(tmp_path)]) == EXIT_INPUT_ERROR


class TestVerifyAndReproduce:
    """verify 与 reproduce 子命令测试"""

    def test_verify_zero_system(self, capsys):
        assert main(["verify", ZERO]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] is True
        assert report["picard"]["converged"] is True

    @pytest.mark.parametrize("path", [EXAMPLE1, EXAMPLE2])
    def test_verify_examples(self, path, capsys):
        """测试两个示例在默认参数下通过不动点验证"""
        assert main(["verify", path]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert report["passed"] is True
        assert report["contraction"]["passed"] is True
        assert report["contraction"]["max_ratio"] <= report["contraction"]["bound"]
        assert report["agreement"] <= report["agreement_bound"]

    def test_reproduce(self, capsys):
        """测试两个示例的证书数组"""
        assert main(["reproduce"]) == EXIT_OK
        reports = json.loads(capsys.readouterr().out)
        assert [r["config"] for r in reports] == ["example1.json", "example2.json"]
        assert all(r["status"] == "certified" for r in reports)
        assert 42.9 <= reports[0]["D"] <= 44.7

    def test_reproduce_missing_directory(self, tmp_path):
        assert main(["reproduce", str(tmp_path)]) == EXIT_INPUT_ERROR

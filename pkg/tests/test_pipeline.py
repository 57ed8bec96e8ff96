"""管道处理测试"""

import json

import pandas as pd
import pytest

from src.core.artifacts import DATASET_CSV, MANIFEST, ArtifactStore
from src.core.pipeline import (
    FORECAST_SUMMARY,
    NARMAX_PARAMS,
    POLYAR_PARAMS,
    REPORT,
    TABLE3,
    PipelineOrchestrator,
    PipelineStage,
)
from src.main import build_parser, main
from src.processors.error_handler import ContractViolationError

EXPECTED_ARTIFACTS = {
    "dataset.csv",
    "dataset.meta.json",
    "narmax_params.json",
    "narmax_fit.json",
    "polyar_params.json",
    "polyar_fit.json",
    "table3.json",
    "forecast_summary.json",
    "report.md",
    *(f"stats_{m}_{kind}.csv" for m in ("full", "narmax", "polyar") for kind in ("acf", "ccf", "pdf")),
    *(f"forecast_{m}_ens{n}.csv" for m in ("narmax", "polyar") for n in (1, 2)),
}


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    """在小配置上执行全部阶段"""
    from src.config.experiment import PipelineConfig

    out = tmp_path_factory.mktemp("complete") / "run"
    cfg = PipelineConfig.model_validate(
        {
            "model": {"K": 8, "J": 4, "dt": 0.005, "spinup": 2.0},
            "delta": 0.05,
            "n_obs": 400,
            "seed": 5,
            "narmax": {"p": 1, "r": 1, "s": 0, "q": 0, "d_x": 1, "d_R": 0},
            "polyar": {"degree": 1},
            "stats": {"max_lag_time": 1.0, "grid_points": 64},
            "forecast": {"n_segments": 3, "horizon": 0.5, "ensemble_sizes": [1, 2]},
            "output_dir": str(out),
        }
    )
    progress = []
    result = PipelineOrchestrator(cfg, progress_callback=lambda *args: progress.append(args)).run("all")
    return cfg, result, ArtifactStore(str(out)), progress


def _hashes(store: ArtifactStore):
    return {
        name: store.file_hash(name)
        for name in store.list_artifacts()
        if not name.endswith(".meta.json")
    }


class TestPipelineOrchestrator:
    """管道编排器测试"""

    def test_all_stages_success(self, completed_run):
        """测试全部阶段成功并写出所有产物"""
        _, result, store, _ = completed_run
        assert result.success is True
        assert result.exit_code == 0
        assert set(result.artifacts) == EXPECTED_ARTIFACTS
        assert store.exists(MANIFEST)
        assert set(result.summary) == {"simulate", "fit", "validate", "forecast"}

    def test_progress_reported(self, completed_run):
        """测试进度回调和阶段历史"""
        _, result, _, progress = completed_run
        stages = [p.stage for p in result.progress_history]
        assert stages[0] == PipelineStage.INITIALIZED
        assert stages[-1] == PipelineStage.COMPLETED
        for stage in (PipelineStage.SIMULATING, PipelineStage.FITTING, PipelineStage.VALIDATING, PipelineStage.FORECASTING):
            assert stage in stages
        assert len(progress) == len(result.progress_history)
        assert all(0.0 <= p.progress <= 1.0 for p in result.progress_history)

    def test_table3(self, completed_run):
        """测试统计表的行和取值范围"""
        _, _, store, _ = completed_run
        table = store.read_json(TABLE3)
        rows = {row["model"]: row for row in table["rows"]}
        assert list(rows) == ["full", "narmax", "polyar"]
        assert rows["full"]["ks"] is None and rows["full"]["acf_deviation"] is None
        for name in ("narmax", "polyar"):
            assert 0.0 <= rows[name]["ks"] <= 1.0
            assert 0.0 <= rows[name]["acf_deviation"] <= 2.0
            assert rows[name]["std"] > 0
        assert table["acf_compare_time"] == 3.0

    def test_stats_frames(self, completed_run):
        """测试统计量 CSV 的列和滞后范围"""
        _, _, store, _ = completed_run
        acf = store.read_frame("stats_full_acf.csv")
        assert list(acf.columns) == ["lag", "value"]
        assert len(acf) == 21
        assert acf["value"].iloc[0] == pytest.approx(1.0)
        ccf = store.read_frame("stats_narmax_ccf.csv")
        assert ccf["lag"].tolist() == list(range(-20, 21))
        assert len(store.read_frame("stats_polyar_pdf.csv")) == 64

    def test_forecast_outputs(self, completed_run):
        """测试预报评分表和汇总"""
        _, _, store, _ = completed_run
        frame = store.read_frame("forecast_narmax_ens2.csv")
        assert list(frame.columns) == ["lead", "rmse", "ancr"]
        assert len(frame) == 11
        assert frame["rmse"].iloc[0] == 0.0
        summary = store.read_json(FORECAST_SUMMARY)["results"]
        assert {(s["model"], s["ensemble_size"]) for s in summary} == {
            ("narmax", 1), ("narmax", 2), ("polyar", 1), ("polyar", 2)
        }

    def test_parameter_documents(self, completed_run):
        """测试参数文件带来源信息"""
        _, _, store, _ = completed_run
        meta = store.read_json("dataset.meta.json")
        narmax_doc = store.read_json(NARMAX_PARAMS)
        assert narmax_doc["meta"]["data_hash"] == meta["content_hash"]
        assert narmax_doc["structure"]["p"] == 1
        polyar_doc = store.read_json(POLYAR_PARAMS)
        assert len(polyar_doc["poly"]) == 2
        assert polyar_doc["meta"]["data_hash"] == meta["content_hash"]

    def test_report(self, completed_run):
        """测试报告包含各部分"""
        _, _, store, _ = completed_run
        text = store.path(REPORT).read_text(encoding="utf-8")
        for heading in ("## NARMAX 系数", "## POLYAR 系数", "## 长时间统计", "## 集合预报"):
            assert heading in text

    def test_deterministic_artifacts(self, completed_run, tmp_path):
        """测试相同配置和种子产物逐字节相同（元数据除外）"""
        cfg, _, store, _ = completed_run
        other = cfg.model_copy(update={"output_dir": str(tmp_path / "again")})
        result = PipelineOrchestrator(other, max_workers=4).run("all")
        assert result.success is True
        assert _hashes(ArtifactStore(other.output_dir)) == _hashes(store)

    def test_stage_by_stage(self, tiny_config):
        """测试逐个执行阶段"""
        orchestrator = PipelineOrchestrator(tiny_config)
        for command in ("simulate", "fit", "validate", "report"):
            result = orchestrator.run(command)
            assert result.success is True, result.error_message
        assert orchestrator.store.exists(TABLE3)
        assert not orchestrator.store.exists(FORECAST_SUMMARY)

    def test_tampered_dataset(self, tiny_config):
        """测试数据集被修改后拟合失败，退出码 3"""
        orchestrator = PipelineOrchestrator(tiny_config)
        assert orchestrator.run("simulate").success
        path = orchestrator.store.path(DATASET_CSV)
        frame = pd.read_csv(path)
        frame.loc[5, "x1"] += 1.0
        frame.to_csv(path, index=False)
        result = orchestrator.run("fit")
        assert result.success is False
        assert result.exit_code == 3
        assert result.error_code == "PROVENANCE_MISMATCH"

    def test_dataset_from_other_config(self, tiny_config):
        """测试数据集与当前配置的数据参数不一致，退出码 3"""
        assert PipelineOrchestrator(tiny_config).run("simulate").success
        changed = tiny_config.model_copy(update={"n_obs": 300})
        result = PipelineOrchestrator(changed).run("fit")
        assert result.exit_code == 3

    def test_parameters_from_other_dataset(self, tiny_config):
        """测试参数文件来自另一份数据，退出码 3"""
        orchestrator = PipelineOrchestrator(tiny_config)
        assert orchestrator.run("simulate").success
        assert orchestrator.run("fit").success
        doc = orchestrator.store.read_json(NARMAX_PARAMS)
        doc["meta"]["data_hash"] = "0" * 64
        orchestrator.store.write_json(NARMAX_PARAMS, doc)
        assert orchestrator.run("validate").exit_code == 3

    def test_missing_parameters(self, tiny_config):
        """测试缺少参数文件，退出码 2"""
        orchestrator = PipelineOrchestrator(tiny_config)
        assert orchestrator.run("simulate").success
        result = orchestrator.run("validate")
        assert result.success is False
        assert result.exit_code == 2
        assert result.error_code == "IO_ERROR"

    def test_missing_dataset(self, tiny_config):
        """测试缺少数据集，退出码 2，失败结果带错误统计"""
        result = PipelineOrchestrator(tiny_config).run("fit")
        assert result.exit_code == 2
        stats = result.summary["error_stats"]
        assert stats["error_counts"]["cmd_fit:ArtifactIOError"] >= 1
        assert "cmd_fit:ArtifactIOError" in stats["last_errors"]

    def test_malformed_parameters(self, tiny_config):
        """测试参数文件格式错误，退出码 1"""
        orchestrator = PipelineOrchestrator(tiny_config)
        assert orchestrator.run("simulate").success
        assert orchestrator.run("fit").success
        doc = orchestrator.store.read_json(POLYAR_PARAMS)
        doc["sigma"] = -1.0
        orchestrator.store.write_json(POLYAR_PARAMS, doc)
        assert orchestrator.run("forecast").exit_code == 1

    def test_report_on_empty_directory(self, tiny_config):
        """测试空目录上生成报告"""
        result = PipelineOrchestrator(tiny_config).run("report")
        assert result.success is True
        assert "## 配置" in (PipelineOrchestrator(tiny_config).store.path(REPORT).read_text(encoding="utf-8"))

    def test_unknown_command(self, tiny_config):
        """测试未知命令"""
        with pytest.raises(ContractViolationError):
            PipelineOrchestrator(tiny_config).run("deploy")


class TestCommandLine:
    """命令行入口测试"""

    @pytest.fixture
    def config_file(self, tiny_config, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(tiny_config.model_dump(mode="json")), encoding="utf-8")
        return path

    def test_simulate(self, config_file, tmp_path):
        """测试 simulate 子命令和 --out 覆盖"""
        out = tmp_path / "cli"
        assert main(["simulate", "--config", str(config_file), "--out", str(out)]) == 0
        assert (out / DATASET_CSV).exists()
        assert (out / MANIFEST).exists()

    def test_invalid_config(self, tmp_path):
        """测试配置无效时退出码 1"""
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"delta": 0.02}), encoding="utf-8")
        assert main(["fit", "--config", str(bad)]) == 1
        assert main(["fit", "--config", str(tmp_path / "missing.json")]) == 1

    def test_missing_artifacts(self, config_file, tmp_path):
        """测试缺少前置产物时退出码 2"""
        assert main(["validate", "--config", str(config_file), "--out", str(tmp_path / "empty")]) == 2
        assert (tmp_path / "empty").is_dir()

    def test_parser(self):
        """测试公共参数和子命令"""
        args = build_parser().parse_args(["forecast", "--seed", "3", "--scale", "desk", "-v"])
        assert args.command == "forecast"
        assert args.seed == 3
        assert args.scale == "desk"
        assert args.verbose is True
        with pytest.raises(SystemExit):
            build_parser().parse_args(["deploy"])
        with pytest.raises(SystemExit):
            build_parser().parse_args(["fit", "--scale", "huge"])

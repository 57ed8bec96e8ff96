"""管道编排器 - simulate → fit → validate → forecast → report 各阶段及产物流转"""

import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from ..config.experiment import PipelineConfig, apply_overrides, config_hash, data_config_hash
from ..config.settings import settings
from ..dynamics.base import SeriesSet
from ..dynamics.lorenz96 import generate_dataset, steps_per_interval
from ..dynamics.reduction import ReducedMap, with_discrepancy
from ..processors.data_validator import DataValidator
from ..processors.error_handler import (
    ContractViolationError,
    DegenerateDataError,
    ReductionError,
    error_handler,
    with_error_handling,
)
from . import narmax
from .artifacts import ArtifactStore, check_provenance
from .forecast import (
    ForecastConfig,
    ForecastModel,
    NarmaxForecaster,
    PolyarForecaster,
    climatology,
    run_forecast,
)
from .polyar import PolyarParams, fd_residual, fit_polyar, simulate_polyar
from .report_generator import ReportFormat, ReportGenerator
from .stats import SummaryStats, acf_max_deviation, summarize_series

NARMAX_PARAMS = "narmax_params.json"
NARMAX_FIT = "narmax_fit.json"
POLYAR_PARAMS = "polyar_params.json"
POLYAR_FIT = "polyar_fit.json"
TABLE3 = "table3.json"
FORECAST_SUMMARY = "forecast_summary.json"
REPORT = "report.md"

# ACF 偏差只比较前 3 个时间单位
ACF_COMPARE_TIME = 3.0

PAPER_DELTAS = (0.01, 0.05)


class PipelineStage(Enum):
    """管道阶段枚举"""
    INITIALIZED = "initialized"
    SIMULATING = "simulating"
    FITTING = "fitting"
    VALIDATING = "validating"
    FORECASTING = "forecasting"
    REPORTING = "reporting"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class PipelineProgress:
    """管道处理进度"""
    run_id: str
    stage: PipelineStage
    progress: float  # 0.0 - 1.0
    message: str
    timestamp: datetime = field(default_factory=datetime.now)


@dataclass
class PipelineResult:
    """管道处理结果"""
    run_id: str
    command: str
    success: bool
    summary: Dict[str, Any] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    error_message: Optional[str] = None
    error_code: Optional[str] = None
    exit_code: int = 0
    processing_time: Optional[float] = None
    progress_history: List[PipelineProgress] = field(default_factory=list)


# 进度回调类型
ProgressCallback = Callable[[str, PipelineStage, float, str], Any]


class PipelineOrchestrator:
    """降阶实验管道编排器

    各阶段通过产物目录交接：simulate 写数据集，fit 写参数，validate 写统计表，
    forecast 写预报评分，每个阶段结束后重写 manifest.json 和 report.md。
    """

    COMMANDS = ("simulate", "fit", "validate", "forecast", "report", "all")

    def __init__(
        self,
        cfg: PipelineConfig,
        store: Optional[ArtifactStore] = None,
        progress_callback: Optional[ProgressCallback] = None,
        max_workers: Optional[int] = None,
    ):
        self.cfg = cfg
        self.store = store or ArtifactStore(cfg.output_dir)
        self.config_hash = config_hash(cfg)
        self.data_hash_expected = data_config_hash(cfg)
        self.reduced = ReducedMap(K=cfg.model.K, F=cfg.model.F, delta=cfg.delta, scheme=cfg.reduction.scheme)
        self.structure = cfg.narmax_structure()
        self.threshold = settings.processing.blowup_threshold
        self.max_workers = max_workers or settings.processing.max_workers
        self.report_generator = ReportGenerator()
        self._progress_callback = progress_callback
        self._history: List[PipelineProgress] = []
        self._run_id = str(uuid.uuid4())

    def run(self, command: str) -> PipelineResult:
        """执行单个命令，错误转换为失败结果和退出码

        Args:
            command: simulate | fit | validate | forecast | report | all

        Returns:
            PipelineResult: 执行结果
        """
        if command not in self.COMMANDS:
            raise ContractViolationError(f"未知命令: {command}，支持: {list(self.COMMANDS)}")
        self._run_id = str(uuid.uuid4())
        self._history = []
        start = time.perf_counter()
        self._notify_progress(PipelineStage.INITIALIZED, 0.0, f"开始执行 {command}")

        try:
            if command == "all":
                summary = {
                    "simulate": self.cmd_simulate(),
                    "fit": self.cmd_fit(),
                    "validate": self.cmd_validate(),
                    "forecast": self.cmd_forecast(),
                }
            else:
                summary = getattr(self, f"cmd_{command}")()
            self._notify_progress(PipelineStage.REPORTING, 0.95, "写出报告和清单")
            self.cmd_report()
            manifest = self.store.write_manifest(self.config_hash)
            self._notify_progress(PipelineStage.COMPLETED, 1.0, f"{command} 完成")
            return PipelineResult(
                run_id=self._run_id,
                command=command,
                success=True,
                summary=summary,
                artifacts=manifest["artifacts"],
                processing_time=time.perf_counter() - start,
                progress_history=list(self._history),
            )
        except ReductionError as e:
            logger.error(f"{command} 失败 [{e.error_code}]: {e.message}")
            self._notify_progress(PipelineStage.FAILED, 1.0, f"{command} 失败: {e.message}")
            return PipelineResult(
                run_id=self._run_id,
                command=command,
                success=False,
                summary={"details": e.details, "error_stats": error_handler.get_error_stats()},
                error_message=e.message,
                error_code=e.error_code,
                exit_code=e.exit_code,
                processing_time=time.perf_counter() - start,
                progress_history=list(self._history),
            )

    # ------------------------------------------------------------------
    # 阶段
    # ------------------------------------------------------------------

    @with_error_handling("cmd_simulate")
    def cmd_simulate(self) -> Dict[str, Any]:
        """积分全系统并写出 dataset.csv 和 dataset.meta.json"""
        cfg = self.cfg
        self._notify_progress(PipelineStage.SIMULATING, 0.1, f"积分全系统: {cfg.n_obs} 行, δ={cfg.delta}")
        series = generate_dataset(cfg.l96(), cfg.total_time, cfg.delta, trajectory=0, threshold=self.threshold)
        meta = {
            "seed": cfg.seed,
            "model": cfg.model.model_dump(),
            "config_hash": self.config_hash,
            "data_config_hash": self.data_hash_expected,
        }
        content_hash = self.store.write_dataset(series, meta)
        logger.info(f"数据集已生成: {series.N} 行 × {series.K} 分量")
        return {"rows": series.N, "K": series.K, "content_hash": content_hash}

    @with_error_handling("cmd_fit")
    def cmd_fit(self) -> Dict[str, Any]:
        """拟合 NARMAX 和 POLYAR，写出参数文件和拟合报告"""
        cfg = self.cfg
        series, data_hash = self._load_dataset()
        self._notify_progress(PipelineStage.FITTING, 0.2, "验证观测数据")
        validation = DataValidator(min_rows=self.structure.history_length + 2).validate(series)
        if not validation.valid:
            raise DegenerateDataError(
                f"数据验证未通过: {[i.message for i in validation.errors]}",
                {"validation": validation.summary()},
            )

        self._notify_progress(PipelineStage.FITTING, 0.4, f"拟合 NARMAX {self.structure.label()}")
        report = narmax.fit(self.structure, with_discrepancy(self.reduced, series), cfg.fit, self.reduced)
        meta = {"delta": cfg.delta, "seed": cfg.seed, "data_hash": data_hash, "config_hash": self.config_hash}
        self.store.write_json(NARMAX_PARAMS, narmax.to_document(self.structure, report.params, meta))
        self.store.write_json(
            NARMAX_FIT, {**report.summary(), "label": self.structure.label(), "config_hash": self.config_hash}
        )

        self._notify_progress(PipelineStage.FITTING, 0.7, f"拟合 POLYAR (次数 {cfg.polyar.degree})")
        poly, poly_summary = fit_polyar(
            series.x_obs, cfg.delta, cfg.model.F, cfg.polyar.degree, component=cfg.fit.component
        )
        self.store.write_json(
            POLYAR_PARAMS,
            {**poly.model_dump(), "meta": {"data_hash": data_hash, "config_hash": self.config_hash}},
        )
        self.store.write_json(POLYAR_FIT, {**poly_summary.summary(), "config_hash": self.config_hash})

        return {
            "narmax": {"converged": report.converged, "loglik": report.loglik, "warnings": report.warnings},
            "polyar": {"phi": poly.phi, "sigma": poly.sigma},
            "validation": validation.summary(),
        }

    @with_error_handling("cmd_validate")
    def cmd_validate(self) -> Dict[str, Any]:
        """长时间模拟约化模型，与全模型数据比较统计量"""
        cfg = self.cfg
        series, data_hash = self._load_dataset()
        st, th = self._load_narmax(data_hash)
        poly = self._load_polyar(data_hash)
        seq = np.random.SeedSequence([cfg.seed, 2])
        narmax_seed, polyar_seed = seq.spawn(2)

        self._notify_progress(PipelineStage.VALIDATING, 0.2, "长时间模拟 NARMAX")
        n0 = st.history_length
        run = narmax.simulate(
            st, th, self.reduced, series.head(n0), series.N - n0, narmax_seed, threshold=self.threshold
        )

        self._notify_progress(PipelineStage.VALIDATING, 0.5, "长时间模拟 POLYAR")
        eta0 = poly.phi * fd_residual(poly, series.x_obs[:2], cfg.model.F)[-1]
        poly_run = simulate_polyar(
            poly, self.reduced, series.x_obs[0], eta0, series.N - 1, polyar_seed, threshold=self.threshold
        )

        self._notify_progress(PipelineStage.VALIDATING, 0.8, "计算统计量")
        full = summarize_series(series.x_obs, cfg.delta, cfg.stats)
        results = {
            "full": full,
            "narmax": summarize_series(run.x_obs, cfg.delta, cfg.stats, reference=series.x_obs),
            "polyar": summarize_series(poly_run.x_obs, cfg.delta, cfg.stats, reference=series.x_obs),
        }
        for name, stats in results.items():
            self._write_stats(name, stats)

        n_compare = min(full.max_lag, int(round(ACF_COMPARE_TIME / cfg.delta))) + 1
        rows = []
        for name, stats in results.items():
            deviation = None if name == "full" else acf_max_deviation(stats.acf[:n_compare], full.acf[:n_compare])
            rows.append({"model": name, "mean": stats.mean, "std": stats.std, "ks": stats.ks, "acf_deviation": deviation})
            logger.info(
                f"统计量 [{name}]: 均值={stats.mean:.4f}, 标准差={stats.std:.4f}, "
                f"KS={'-' if stats.ks is None else f'{stats.ks:.4f}'}"
            )
        table = {
            "delta": cfg.delta,
            "component": None if cfg.stats.pooled else cfg.stats.component,
            "acf_compare_time": ACF_COMPARE_TIME,
            "rows": rows,
            "config_hash": self.config_hash,
            "data_hash": data_hash,
        }
        self.store.write_json(TABLE3, table)
        return {"rows": rows}

    @with_error_handling("cmd_forecast")
    def cmd_forecast(self) -> Dict[str, Any]:
        """对每个 (模型, 集合规模) 组合做集合预报并写出评分"""
        cfg = self.cfg
        series, data_hash = self._load_dataset()
        st, th = self._load_narmax(data_hash)
        poly = self._load_polyar(data_hash)
        models: List[ForecastModel] = [
            NarmaxForecaster(st, th, self.reduced, threshold=self.threshold),
            PolyarForecaster(poly, self.reduced, threshold=self.threshold),
        ]

        n_steps = steps_per_interval(cfg.forecast.horizon, cfg.delta, what="horizon")
        segment_rows = max(m.history_length for m in models) + n_steps
        n_rows = cfg.forecast.n_segments * segment_rows
        self._notify_progress(
            PipelineStage.FORECASTING, 0.1, f"生成预报真值: {cfg.forecast.n_segments} 段 × {segment_rows} 行"
        )
        truth = generate_dataset(
            cfg.l96(),
            cfg.model.spinup + (n_rows - 1) * cfg.delta,
            cfg.delta,
            trajectory=1,
            threshold=self.threshold,
        )
        clim = climatology(series.x_obs)

        combos = [(m, n) for m in models for n in cfg.forecast.ensemble_sizes]
        summaries = []
        for i, (model, size) in enumerate(combos):
            self._notify_progress(
                PipelineStage.FORECASTING,
                0.2 + 0.7 * i / len(combos),
                f"集合预报: {model.name}, N_ens={size}",
            )
            fc = ForecastConfig(
                n_segments=cfg.forecast.n_segments,
                horizon=cfg.forecast.horizon,
                ensemble_size=size,
                seed=cfg.forecast_seed,
            )
            score = run_forecast(
                model, truth.x_obs, fc, clim, max_workers=self.max_workers, segment_rows=segment_rows
            )
            self.store.write_frame(f"forecast_{model.name}_ens{size}.csv", score.to_frame())
            summaries.append(score.summary())

        self.store.write_json(
            FORECAST_SUMMARY,
            {"results": summaries, "config_hash": self.config_hash, "data_hash": data_hash},
        )
        return {"results": summaries}

    def cmd_report(self) -> str:
        """由已有产物生成 report.md"""
        data: Dict[str, Any] = {
            "config": self.cfg.model_dump(mode="json"),
            "config_hash": self.config_hash,
        }
        if self.store.exists(NARMAX_FIT):
            fit_doc = self.store.read_json(NARMAX_FIT)
            data["narmax"] = {
                "label": fit_doc.get("label", ""),
                "method": fit_doc.get("method", ""),
                "converged": fit_doc.get("converged", False),
                "iterations": fit_doc.get("iterations", 0),
                "coefficients": fit_doc.get("coefficients", {}),
                "warnings": fit_doc.get("warnings", []),
            }
        if self.store.exists(POLYAR_PARAMS):
            poly_doc = self.store.read_json(POLYAR_PARAMS)
            data["polyar"] = {k: poly_doc[k] for k in ("poly", "phi", "sigma")}
        if self.store.exists(TABLE3):
            data["table3"] = self.store.read_json(TABLE3)["rows"]
        if self.store.exists(FORECAST_SUMMARY):
            data["forecasts"] = self.store.read_json(FORECAST_SUMMARY)["results"]
        content = self.report_generator.generate(data, ReportFormat.MARKDOWN)
        self.store.write_text(REPORT, content)
        return str(self.store.path(REPORT))

    # ------------------------------------------------------------------
    # 产物读取与来源校验
    # ------------------------------------------------------------------

    def _load_dataset(self) -> Tuple[SeriesSet, str]:
        series, meta = self.store.read_dataset()
        check_provenance(self.data_hash_expected, meta.get("data_config_hash"), "数据集配置")
        return series, meta["content_hash"]

    def _load_narmax(self, data_hash: str) -> Tuple[narmax.NarmaxStructure, narmax.NarmaxParams]:
        st, th, meta = narmax.from_document(self.store.read_json(NARMAX_PARAMS))
        check_provenance(data_hash, meta.get("data_hash"), NARMAX_PARAMS)
        return st, th

    def _load_polyar(self, data_hash: str) -> PolyarParams:
        doc = self.store.read_json(POLYAR_PARAMS)
        meta = doc.pop("meta", {})
        check_provenance(data_hash, meta.get("data_hash"), POLYAR_PARAMS)
        try:
            return PolyarParams.model_validate(doc)
        except ValueError as e:
            raise ContractViolationError(f"POLYAR 参数文件格式错误: {e}") from e

    def _write_stats(self, name: str, stats: SummaryStats) -> None:
        self.store.write_frame(f"stats_{name}_acf.csv", stats.acf_frame())
        self.store.write_frame(f"stats_{name}_ccf.csv", stats.ccf_frame())
        self.store.write_frame(f"stats_{name}_pdf.csv", stats.pdf_frame())

    def _notify_progress(self, stage: PipelineStage, progress: float, message: str) -> None:
        """通知进度更新"""
        self._history.append(PipelineProgress(self._run_id, stage, progress, message))
        logger.debug(f"[{stage.value}] {progress:.0%} {message}")
        if self._progress_callback:
            try:
                self._progress_callback(self._run_id, stage, progress, message)
            except Exception as e:
                logger.warning(f"进度回调失败: {e}")


def repro_paper(
    cfg: PipelineConfig,
    deltas: Tuple[float, ...] = PAPER_DELTAS,
    progress_callback: Optional[ProgressCallback] = None,
) -> List[PipelineResult]:
    """对每个 δ 在 <output_dir>/delta_<δ> 下依次执行全部阶段

    Returns:
        List[PipelineResult]: 每个 δ 一个结果，遇到失败立即停止
    """
    results = []
    for delta in deltas:
        sub_dir = str(Path(cfg.output_dir) / f"delta_{delta:g}")
        sub_cfg = apply_overrides(cfg, output_dir=sub_dir, delta=delta)
        logger.info(f"复现实验: δ={delta:g}, 产物目录 {sub_dir}")
        result = PipelineOrchestrator(sub_cfg, progress_callback=progress_callback).run("all")
        results.append(result)
        if not result.success:
            break
    return results

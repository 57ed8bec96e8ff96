"""命令行入口"""

import argparse
import sys
from typing import List, Optional

from loguru import logger

from .config.experiment import SCALE_PRESETS, apply_overrides, load_config
from .config.settings import settings
from .core.pipeline import PipelineOrchestrator, PipelineResult, repro_paper
from .processors.error_handler import ArtifactIOError, ReductionError

SUBCOMMANDS = {
    "simulate": "积分全系统并写出观测数据集",
    "fit": "拟合 NARMAX 和 POLYAR 参数",
    "validate": "长时间模拟并比较统计量",
    "forecast": "集合预报实验",
    "report": "由已有产物生成 report.md",
    "repro-paper": "对 δ=0.01 和 δ=0.05 依次执行全部阶段",
}


def build_parser() -> argparse.ArgumentParser:
    """构建命令行解析器"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="实验配置 JSON")
    common.add_argument("--out", metavar="DIR", help="产物目录（覆盖 output_dir）")
    common.add_argument("--seed", type=int, help="主随机种子（覆盖配置）")
    common.add_argument("--scale", choices=sorted(SCALE_PRESETS), help="规模预设")
    common.add_argument("-v", "--verbose", action="store_true", help="输出 DEBUG 日志")

    parser = argparse.ArgumentParser(
        prog="narmax-reduction",
        description="两尺度 Lorenz 96 的离散 NARMAX 随机参数化",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, help_text in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _log_result(result: PipelineResult) -> None:
    if result.success:
        logger.info(
            f"{result.command} 完成，耗时 {result.processing_time:.1f}s，产物 {len(result.artifacts)} 个"
        )
    else:
        logger.error(f"{result.command} 失败 (exit {result.exit_code}): {result.error_message}")


def main(argv: Optional[List[str]] = None) -> int:
    """执行命令并返回退出码

    退出码: 0 成功, 1 配置错误, 2 读写错误, 3 来源不一致, 4 数值失败
    """
    args = build_parser().parse_args(argv)
    settings.setup_logging("DEBUG" if args.verbose else None)

    try:
        cfg = apply_overrides(load_config(args.config), scale=args.scale, seed=args.seed, output_dir=args.out)
    except ReductionError as e:
        logger.error(f"配置错误: {e.message}")
        return e.exit_code

    try:
        settings.ensure_directories(cfg.output_dir)
    except OSError as e:
        logger.error(f"无法创建产物目录 {cfg.output_dir}: {e}")
        return ArtifactIOError(str(e)).exit_code

    if args.command == "repro-paper":
        results = repro_paper(cfg)
        for result in results:
            _log_result(result)
        failed = [r for r in results if not r.success]
        return failed[0].exit_code if failed else 0

    try:
        orchestrator = PipelineOrchestrator(cfg)
    except ReductionError as e:
        logger.error(f"初始化失败: {e.message}")
        return e.exit_code
    result = orchestrator.run(args.command)
    _log_result(result)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())

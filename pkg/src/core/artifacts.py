"""产物存储 - 数据集、参数和统计结果的持久化与来源校验"""

import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from ..config.settings import settings
from ..dynamics.base import SeriesSet
from ..processors.error_handler import ArtifactIOError, ProvenanceError

DATASET_CSV = "dataset.csv"
DATASET_META = "dataset.meta.json"
MANIFEST = "manifest.json"
FLOAT_FORMAT = "%.12g"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ArtifactStore:
    """产物存储

    所有 JSON 按键排序、2 空格缩进写出；CSV 带表头、12 位有效数字、\\n 换行。
    时间戳只出现在 *.meta.json 和 manifest.json 的 created_at 字段。
    """

    def __init__(self, base_dir: Optional[str] = None):
        """初始化产物存储

        Args:
            base_dir: 产物目录，默认取运行时配置
        """
        self.base_dir = Path(base_dir or settings.processing.output_dir)
        try:
            self.base_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactIOError(f"无法创建产物目录 {self.base_dir}: {e}") from e

    def path(self, name: str) -> Path:
        return self.base_dir / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def _write_bytes(self, name: str, data: bytes) -> str:
        file_path = self.path(name)
        try:
            file_path.write_bytes(data)
        except OSError as e:
            raise ArtifactIOError(f"写入产物失败: {file_path}, {e}", {"path": str(file_path)}) from e
        digest = sha256_bytes(data)
        logger.debug(f"产物已写入: {name} ({len(data)} 字节, sha256={digest[:12]})")
        return digest

    def _read_bytes(self, name: str) -> bytes:
        file_path = self.path(name)
        if not file_path.exists():
            raise ArtifactIOError(f"产物不存在: {file_path}", {"path": str(file_path)})
        try:
            return file_path.read_bytes()
        except OSError as e:
            raise ArtifactIOError(f"读取产物失败: {file_path}, {e}", {"path": str(file_path)}) from e

    def write_json(self, name: str, data: Dict[str, Any]) -> str:
        """写出 JSON，返回内容哈希"""
        text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default) + "\n"
        return self._write_bytes(name, text.encode("utf-8"))

    def read_json(self, name: str) -> Dict[str, Any]:
        raw = self._read_bytes(name)
        try:
            data = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ArtifactIOError(f"产物不是合法 JSON: {name}, {e}") from e
        logger.debug(f"产物已读取: {name}")
        return data

    def write_text(self, name: str, text: str) -> str:
        """写出 UTF-8 文本，返回内容哈希"""
        return self._write_bytes(name, text.encode("utf-8"))

    def write_frame(self, name: str, frame: pd.DataFrame) -> str:
        """写出 CSV，返回内容哈希"""
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return self._write_bytes(name, text.encode("utf-8"))

    def read_frame(self, name: str) -> pd.DataFrame:
        self._read_bytes(name)
        try:
            return pd.read_csv(self.path(name))
        except (ValueError, pd.errors.ParserError) as e:
            raise ArtifactIOError(f"产物不是合法 CSV: {name}, {e}") from e

    def file_hash(self, name: str) -> str:
        return sha256_bytes(self._read_bytes(name))

    # ------------------------------------------------------------------
    # 数据集
    # ------------------------------------------------------------------

    def write_dataset(self, series: SeriesSet, meta: Dict[str, Any]) -> str:
        """写出 dataset.csv (time,x1..xK) 和 dataset.meta.json

        Returns:
            str: CSV 内容哈希
        """
        columns = {"time": series.times}
        for k in range(series.K):
            columns[f"x{k + 1}"] = series.x_obs[:, k]
        content_hash = self.write_frame(DATASET_CSV, pd.DataFrame(columns))
        full_meta = {
            **meta,
            "delta": series.delta,
            "n_obs": series.N,
            "K": series.K,
            "content_hash": content_hash,
            "created_at": datetime.now().isoformat(),
        }
        self.write_json(DATASET_META, full_meta)
        logger.info(f"数据集已保存: {series.N} 行, content_hash={content_hash[:12]}")
        return content_hash

    def read_dataset(self) -> Tuple[SeriesSet, Dict[str, Any]]:
        """读取数据集并校验内容哈希

        Raises:
            ArtifactIOError: 文件缺失或格式错误
            ProvenanceError: CSV 内容与元数据记录的哈希不一致
        """
        meta = self.read_json(DATASET_META)
        actual = self.file_hash(DATASET_CSV)
        if actual != meta.get("content_hash"):
            raise ProvenanceError(
                "数据集内容与元数据记录的哈希不一致",
                {"expected": meta.get("content_hash"), "actual": actual},
            )
        frame = self.read_frame(DATASET_CSV)
        x_cols = [c for c in frame.columns if c != "time"]
        series = SeriesSet(delta=float(meta["delta"]), x_obs=frame[x_cols].to_numpy(dtype=float))
        return series, meta

    # ------------------------------------------------------------------
    # 清单
    # ------------------------------------------------------------------

    def list_artifacts(self) -> List[str]:
        """列出目录下的产物（不含清单本身）"""
        return sorted(
            f.name for f in self.base_dir.iterdir() if f.is_file() and f.name != MANIFEST
        )

    def write_manifest(self, config_hash: str) -> Dict[str, Any]:
        """写出 manifest.json：产物名 -> SHA-256"""
        manifest = {
            "config_hash": config_hash,
            "artifacts": {name: self.file_hash(name) for name in self.list_artifacts()},
            "created_at": datetime.now().isoformat(),
        }
        self.write_json(MANIFEST, manifest)
        return manifest


def check_provenance(expected: str, actual: Optional[str], what: str) -> None:
    """比较两个哈希，不一致时抛出 ProvenanceError"""
    if actual != expected:
        raise ProvenanceError(
            f"{what} 来源不一致",
            {"expected": expected, "actual": actual},
        )


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"无法序列化为 JSON: {type(value).__name__}")

"""运行时配置 - 环境变量分层配置和日志设置"""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class ProcessingConfig(BaseSettings):
    """处理配置"""

    max_workers: int = Field(default=1, gt=0, description="预报分段并行线程数")
    output_dir: str = Field(default="./output", description="默认产物目录")
    blowup_threshold: float = Field(default=1e6, gt=0.0, description="轨道发散判定阈值")


class LoggingConfig(BaseSettings):
    """日志配置"""

    level: str = Field(default="INFO", description="日志级别")
    format: str = Field(
        default="{time:YYYY-MM-DD HH:mm:ss} | {level} | {name} | {message}",
        description="日志格式",
    )
    file_path: Optional[str] = Field(default=None, description="日志文件路径")
    rotation: str = Field(default="10 MB", description="日志文件轮转大小")
    retention: str = Field(default="7 days", description="日志保留时间")

    @field_validator("level")
    @classmethod
    def validate_level(cls, v: str) -> str:
        valid_levels = ["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"无效的日志级别: {v}，支持: {valid_levels}")
        return v.upper()


class Settings(BaseSettings):
    """全局配置"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_nested_delimiter="__",
        env_prefix="NARMAX_",
        extra="ignore",
    )

    # 环境配置
    environment: str = Field(default="development", description="运行环境")
    debug: bool = Field(default=False, description="调试模式")

    # 子配置
    processing: ProcessingConfig = Field(default_factory=ProcessingConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @field_validator("environment")
    @classmethod
    def validate_environment(cls, v: str) -> str:
        valid_envs = ["development", "testing", "staging", "production"]
        if v not in valid_envs:
            raise ValueError(f"无效的环境: {v}，支持: {valid_envs}")
        return v

    def setup_logging(self, level: Optional[str] = None) -> None:
        """配置日志系统（loguru sinks）

        Args:
            level: 覆盖配置中的日志级别
        """
        effective = (level or ("DEBUG" if self.debug else self.logging.level)).upper()
        logger.remove()
        logger.add(sys.stderr, level=effective, format=self.logging.format)

        if self.logging.file_path:
            log_path = Path(self.logging.file_path)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            logger.add(
                log_path,
                level=effective,
                format=self.logging.format,
                rotation=self.logging.rotation,
                retention=self.logging.retention,
            )

    def ensure_directories(self, output_dir: Optional[str] = None) -> Path:
        """确保产物目录存在，未给出时使用 processing.output_dir"""
        path = Path(output_dir or self.processing.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


# 全局配置实例
settings = Settings()

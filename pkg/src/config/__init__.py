"""配置管理层 - 运行时设置和实验配置"""

from .settings import Settings, settings

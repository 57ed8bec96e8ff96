#!/usr/bin/env python3
"""启动脚本 - 不安装包时直接运行命令行"""

import sys
from pathlib import Path


def main() -> int:
    """主函数"""
    sys.path.insert(0, str(Path(__file__).parent))

    from src.main import main as run_cli
    return run_cli()


if __name__ == "__main__":
    sys.exit(main())

"""NARMAX Reduction - 两尺度 Lorenz 96 的离散随机参数化

由全模型观测估计离散 NARMAX 闭合模型，并与 POLYAR 基线在长时间统计量
和集合预报技巧上比较。
"""

__version__ = "0.1.0"

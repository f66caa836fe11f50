"""
FracFTS Certifier - 分数阶时滞系统鲁棒有限时间稳定性证书

计算鲁棒有限时间稳定性的充分条件证书（系数 a_i、上确界常数 M、界 C 与松弛界 D），
并用 Caputo 时滞系统的数值积分和 Picard 不动点迭代对证书进行交叉验证。
"""

__version__ = "1.0.0"
__author__ = "FracFTS Team"
__description__ = "Robust finite-time stability certificates for fractional-order delay systems"

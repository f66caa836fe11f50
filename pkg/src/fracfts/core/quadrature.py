"""
积分器与不动点算子共用的离散化：均匀网格和乘积积分权重。

预测步使用乘积矩形权重，校正步与算子 𝒱 使用乘积梯形权重，
因此积分器的解在校正收敛时正是离散 𝒱 的不动点。
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InconsistentSpecError
from .specfun import gamma

# 网格比较的相对容差
_GRID_TOL = 1e-12


def predictor_weights(beta: float, n: int) -> np.ndarray:
    """乘积矩形权重 b_m = (m+1)^β - m^β，m = 0..n-1"""
    m = np.arange(n, dtype=float)
    return (m + 1.0) ** beta - m ** beta


def corrector_weights(beta: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    乘积梯形权重

    Returns:
        Tuple[np.ndarray, np.ndarray]: (内部权重 a_m, m = 0..n-1; 起点权重 a_{0,k+1}, k = 0..n-1)
    """
    m = np.arange(n, dtype=float)
    p = beta + 1.0
    interior = (m + 2.0) ** p + m ** p - 2.0 * (m + 1.0) ** p
    start = m ** p - (m - beta) * (m + 1.0) ** beta
    return interior, start


def trapezoid_fractional_integral(values: np.ndarray, beta: float, step: float) -> np.ndarray:
    """
    网格上每个点处的 (1/Γ(β)) ∫_{t0}^{t_k} (t_k - s)^(β-1) F(s) ds

    F 在相邻网格点之间按线性插值，核被精确积分（乘积梯形公式）。

    Args:
        values: 形状 (N+1, n) 的 F(t_0..t_N)
        beta: 阶数
        step: 步长 h

    Returns:
        np.ndarray: 形状 (N+1, n)，第 0 行为 0
    """
    F = np.asarray(values, dtype=float)
    if F.ndim == 1:
        return trapezoid_fractional_integral(F[:, None], beta, step)[:, 0]
    N = F.shape[0] - 1
    out = np.zeros_like(F)
    if N == 0:
        return out

    interior, start = corrector_weights(beta, N)
    coef = step ** beta / gamma(beta + 2.0)
    k = np.arange(1, N + 1)

    for c in range(F.shape[1]):
        memory = np.zeros(N)
        if N >= 2:
            conv = np.convolve(interior[: N - 1], F[1:N, c])
            memory[1:] = conv[: N - 1]
        out[1:, c] = coef * (start[k - 1] * F[0, c] + memory + F[1:, c])
    return out


@dataclass(frozen=True)
class SimulationGrid:
    """[t0 - g_max, T] 上的网格：历史段 + [t0, T] 上步长为 h 的均匀网格"""

    t0: float
    step: float
    steps: int
    history_times: np.ndarray

    @classmethod
    def build(cls, t0: float, T: float, g_max: float, step: float) -> "SimulationGrid":
        """
        按给定步长构造网格，步长被调整为 (T - t0) / N 以整除区间

        Args:
            t0: 初始时刻
            T: 终止时刻
            g_max: 时滞上界
            step: 期望步长
        """
        if not (step > 0 and math.isfinite(step)):
            raise ValueError(f"step must be a positive finite number, got {step}")
        span = T - t0
        steps = max(1, int(round(span / step)))
        h = span / steps

        count = int(math.floor(g_max / h + _GRID_TOL))
        history = [t0 - h * m for m in range(count, 0, -1)]
        if g_max - count * h > _GRID_TOL * max(1.0, g_max):
            history.insert(0, t0 - g_max)
        return cls(t0=t0, step=h, steps=steps, history_times=np.array(history, dtype=float))

    @property
    def history_count(self) -> int:
        return len(self.history_times)

    @property
    def solution_times(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.steps + 1, dtype=float)

    @property
    def times(self) -> np.ndarray:
        return np.concatenate((self.history_times, self.solution_times))

    def delayed_times(self, g, g_max: float) -> np.ndarray:
        """
        每个解网格点的时滞时刻 t - g(t)

        Raises:
            InconsistentSpecError: 时滞时刻不在 [t0 - g_max, t] 内
        """
        times = self.solution_times
        delays = np.array([float(g(t)) for t in times])
        slack = _GRID_TOL * max(1.0, g_max)
        bad = (~np.isfinite(delays)) | (delays < -slack) | (delays > g_max + slack)
        if bad.any():
            t_bad = float(times[int(np.argmax(bad))])
            raise InconsistentSpecError(
                f"delay g({t_bad}) = {delays[bad][0]} lies outside [0, g_max={g_max}]",
                field="system.g",
            )
        return times - np.clip(delays, 0.0, g_max)

    def matches(self, times: np.ndarray) -> bool:
        """判断给定时间数组是否就是本网格"""
        own = self.times
        return own.shape == np.shape(times) and bool(
            np.allclose(own, times, rtol=0.0, atol=_GRID_TOL * max(1.0, abs(own[-1])))
        )

"""
Caputo 分数阶时滞系统的数值积分

分数阶 Adams-Bashforth-Moulton 预测-校正格式（全记忆），时滞状态在网格上线性插值，
时滞时刻落在 t0 之前时直接读取初始历史 ν。
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from ..models.result_models import ConvergenceRow, EnvelopeReport, EnvelopeRun, TrajectorySummary
from ..models.system import FtsQuery, SystemSpec
from .errors import FracFtsError, SpecValidationError
from .quadrature import SimulationGrid, corrector_weights, predictor_weights
from .registry import ConstantVector
from .specfun import gamma

logger = logging.getLogger(__name__)

_MIN_NORM = 1e-12
_FOURIER_MODES = 3
_MAX_FREQUENCY = 4.0


@dataclass(frozen=True)
class Trajectory:
    """离散解：历史段 + [t0, T] 上的均匀网格"""

    times: np.ndarray
    states: np.ndarray
    history_count: int
    step: float
    corrector_iters: int
    blow_up: bool = False
    blow_up_time: Optional[float] = None

    @property
    def solution_times(self) -> np.ndarray:
        return self.times[self.history_count:]

    @property
    def solution_states(self) -> np.ndarray:
        return self.states[self.history_count:]

    def norms(self) -> np.ndarray:
        """每个网格点上的欧氏范数"""
        return np.linalg.norm(self.states, axis=1)

    @property
    def sup_norm(self) -> float:
        """[t0, T] 上 ‖x‖ 的最大值"""
        return float(np.max(np.linalg.norm(self.solution_states, axis=1)))

    def summary(self) -> TrajectorySummary:
        return TrajectorySummary(
            sup_norm=self.sup_norm,
            blow_up=self.blow_up,
            blow_up_time=self.blow_up_time,
            step=self.step,
            corrector_iters=self.corrector_iters,
            points=len(self.times),
        )


def _check_step(spec: SystemSpec, step: float) -> None:
    limit = (spec.T - spec.t0) / 10.0
    if not (math.isfinite(step) and 0.0 < step <= limit * (1.0 + 1e-12)):
        raise SpecValidationError(f"step must lie in (0, (T - t0)/10 = {limit:g}], got {step}", field="solver.step")


def integrate(
    spec: SystemSpec,
    step: Optional[float] = None,
    corrector_iters: Optional[int] = None,
) -> Trajectory:
    """
    在 [t0, T] 上积分系统

    Args:
        spec: 系统定义
        step: 步长，缺省 (T - t0) / 2048，必须不超过 (T - t0) / 10
        corrector_iters: 校正步迭代次数（>= 1）

    Returns:
        Trajectory: 离散解；出现非有限值时截断并标记 blow_up

    Raises:
        SpecValidationError: 步长不合法
        InconsistentSpecError: 时滞时刻超出 [t0 - g_max, t]
    """
    step = settings.default_step(spec.t0, spec.T) if step is None else step
    corrector_iters = settings.corrector_iters if corrector_iters is None else corrector_iters
    if corrector_iters < 1:
        raise SpecValidationError("corrector_iters must be >= 1", field="solver.corrector_iters")
    _check_step(spec, step)

    grid = SimulationGrid.build(spec.t0, spec.T, spec.g_max, step)
    h, N, n, beta = grid.step, grid.steps, spec.n, spec.beta
    t0 = spec.t0
    times = grid.solution_times
    delayed_at = grid.delayed_times(spec.g, spec.g_max)
    disturbance = np.array([np.asarray(spec.d(float(t)), dtype=float) for t in times])

    b = predictor_weights(beta, N)
    interior, start = corrector_weights(beta, N)
    c_pred = h ** beta / gamma(beta + 1.0)
    c_corr = h ** beta / gamma(beta + 2.0)

    X = np.zeros((N + 1, n))
    F = np.zeros((N + 1, n))
    x0 = np.asarray(spec.nu(t0), dtype=float)
    X[0] = x0

    def delayed(k: int, current: np.ndarray) -> np.ndarray:
        tau = float(delayed_at[k])
        if tau <= t0:
            return np.asarray(spec.nu(tau), dtype=float)
        position = (tau - t0) / h
        j = min(int(math.floor(position)), k)
        frac = position - j
        left = current if j == k else X[j]
        if frac <= 0.0 or j == k:
            return left
        right = current if j + 1 == k else X[j + 1]
        return (1.0 - frac) * left + frac * right

    def rhs(k: int, x: np.ndarray) -> np.ndarray:
        return spec.rhs(float(times[k]), x, delayed(k, x), disturbance[k])

    blow_up_time = None
    last = N
    with np.errstate(all="ignore"):
        F[0] = rhs(0, x0)
        for k in range(N):
            predicted = x0 + c_pred * (b[k::-1] @ F[: k + 1])
            memory = start[k] * F[0]
            if k > 0:
                memory = memory + interior[k - 1::-1] @ F[1 : k + 1]
            base = x0 + c_corr * memory

            current = predicted
            for _ in range(corrector_iters):
                current = base + c_corr * rhs(k + 1, current)

            F[k + 1] = rhs(k + 1, current)
            X[k + 1] = current
            if not (np.all(np.isfinite(current)) and np.all(np.isfinite(F[k + 1]))):
                blow_up_time = float(times[k + 1])
                last = k
                logger.warning(f"Non-finite state at t={blow_up_time:.6g}; trajectory truncated")
                break

    history = np.array([np.asarray(spec.nu(float(s)), dtype=float) for s in grid.history_times]).reshape(-1, n)
    trajectory = Trajectory(
        times=np.concatenate((grid.history_times, times[: last + 1])),
        states=np.vstack((history, X[: last + 1])),
        history_count=grid.history_count,
        step=h,
        corrector_iters=corrector_iters,
        blow_up=blow_up_time is not None,
        blow_up_time=blow_up_time,
    )
    logger.debug(f"Integrated {N} steps (h={h:.6g}), sup norm {trajectory.sup_norm:.6g}")
    return trajectory


def _compare_on_coarse(coarse: Trajectory, fine: Trajectory) -> Tuple[float, float]:
    """粗网格点上的最大误差与终点误差（细网格线性插值到粗网格）"""
    t = coarse.solution_times
    x = coarse.solution_states
    ref = np.column_stack(
        [np.interp(t, fine.solution_times, fine.solution_states[:, c]) for c in range(x.shape[1])]
    )
    errors = np.linalg.norm(x - ref, axis=1)
    return float(errors.max()), float(errors[-1])


def richardson_error(spec: SystemSpec, step: float, corrector_iters: Optional[int] = None) -> float:
    """步长 h 与 h/2 两次积分在共享网格点上的最大差（格式误差估计）"""
    coarse = integrate(spec, step, corrector_iters)
    fine = integrate(spec, step / 2.0, corrector_iters)
    return _compare_on_coarse(coarse, fine)[0]


Reference = Callable[[np.ndarray], np.ndarray]


def _order(prev_error: float, error: float, prev_step: float, step: float) -> Optional[float]:
    if prev_error <= 0.0 or error <= 0.0:
        return None
    return math.log(prev_error / error) / math.log(prev_step / step)


def convergence_study(
    spec: SystemSpec,
    steps: Sequence[float],
    reference: Optional[Reference] = None,
    corrector_iters: Optional[int] = None,
) -> List[ConvergenceRow]:
    """
    收敛阶研究

    Args:
        spec: 系统定义
        steps: 严格递减的步长序列（至少 3 个）
        reference: 精确解 times -> states；缺省用最细步长减半的积分结果

    Returns:
        List[ConvergenceRow]: 每个步长的网格最大误差、终点误差与对应的经验阶
    """
    steps = [float(s) for s in steps]
    if len(steps) < 3 or any(b >= a for a, b in zip(steps, steps[1:])):
        raise ValueError("steps must be strictly decreasing with at least 3 entries")

    fine = None if reference is not None else integrate(spec, steps[-1] / 2.0, corrector_iters)
    rows: List[ConvergenceRow] = []
    for step in steps:
        trajectory = integrate(spec, step, corrector_iters)
        if reference is not None:
            exact = np.asarray(reference(trajectory.solution_times), dtype=float).reshape(
                len(trajectory.solution_times), -1
            )
            errors = np.linalg.norm(trajectory.solution_states - exact, axis=1)
            max_error, final_error = float(errors.max()), float(errors[-1])
        else:
            max_error, final_error = _compare_on_coarse(trajectory, fine)

        order = final_order = None
        if rows:
            prev = rows[-1]
            order = _order(prev.max_error, max_error, prev.step, trajectory.step)
            final_order = _order(prev.final_error, final_error, prev.step, trajectory.step)
        rows.append(
            ConvergenceRow(
                step=trajectory.step,
                max_error=max_error,
                final_error=final_error,
                order=order,
                final_order=final_order,
            )
        )
        logger.debug(f"h={trajectory.step:.6g}: max error {max_error:.3e}, order {order}")
    return rows


@dataclass(frozen=True)
class FourierDisturbance:
    """随机 Fourier 方向，归一化到 ρ 球面：d(t) = ρ v(t) / ‖v(t)‖"""

    rho: float
    cos_coefficients: np.ndarray
    sin_coefficients: np.ndarray
    frequencies: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        v = self.cos_coefficients.T @ np.cos(self.frequencies * t) + self.sin_coefficients.T @ np.sin(
            self.frequencies * t
        )
        norm = float(np.linalg.norm(v))
        if norm < _MIN_NORM:
            v = np.zeros_like(v)
            v[0], norm = 1.0, 1.0
        return self.rho * v / norm


@dataclass(frozen=True)
class RandomHistory:
    """ν(s) = scale (c0 + c1 cos(ω s + φ))，scale 使历史窗口上 sup‖ν‖ = ε1"""

    offset: np.ndarray
    amplitude: np.ndarray
    frequency: float
    phase: float
    scale: float

    def __call__(self, s: float) -> np.ndarray:
        return self.scale * (self.offset + self.amplitude * math.cos(self.frequency * s + self.phase))


def sample_disturbance(rng: np.random.Generator, p: int, rho: float) -> FourierDisturbance:
    """边界偏置的随机扰动，‖d(t)‖ = ρ"""
    return FourierDisturbance(
        rho=rho,
        cos_coefficients=rng.normal(size=(_FOURIER_MODES, p)),
        sin_coefficients=rng.normal(size=(_FOURIER_MODES, p)),
        frequencies=rng.uniform(0.0, _MAX_FREQUENCY, size=_FOURIER_MODES),
    )


def _cosine_range(phase_lo: float, phase_hi: float) -> Tuple[float, float]:
    """cos 在相位区间 [phase_lo, phase_hi] 上的取值范围"""
    values = [math.cos(phase_lo), math.cos(phase_hi)]
    k = math.ceil(phase_lo / math.pi)
    while k * math.pi <= phase_hi and len(values) < 4:
        values.append(1.0 if k % 2 == 0 else -1.0)
        k += 1
    return min(values), max(values)


def sample_history(
    rng: np.random.Generator,
    n: int,
    eps1: float,
    window: Tuple[float, float] = (-1.0, 0.0),
) -> RandomHistory:
    """
    随机初始历史，缩放使其在 window 上 sup‖ν‖ = ε1

    ‖c0 + c1 c‖ 关于 c 是凸的，上确界在 cos 取值范围的端点处取得。
    """
    offset = rng.normal(size=n)
    amplitude = rng.normal(size=n)
    frequency = float(rng.uniform(0.0, _MAX_FREQUENCY))
    phase = float(rng.uniform(0.0, 2.0 * math.pi))

    start, end = window
    c_min, c_max = _cosine_range(frequency * start + phase, frequency * end + phase)
    sup = max(float(np.linalg.norm(offset + amplitude * c)) for c in (c_min, c_max))
    return RandomHistory(
        offset=offset,
        amplitude=amplitude,
        frequency=frequency,
        phase=phase,
        scale=eps1 / sup if sup > 0.0 else 0.0,
    )


def disturbance_envelope_run(
    spec: SystemSpec,
    query: FtsQuery,
    samples: int,
    seed: int,
    step: Optional[float] = None,
    corrector_iters: Optional[int] = None,
) -> EnvelopeReport:
    """
    对 ∀d 与 ∀ν 的经验探测

    运行 samples 组（随机历史，随机扰动），再加上 2p 组常值极端扰动 ±ρ e_j
    （配第一组随机历史）。单次运行的错误被记录，不中断其余运行。

    Args:
        spec: 系统定义
        query: 稳定性查询（使用 ε1、ε2、ρ）
        samples: 随机样本数（>= 1）
        seed: 随机种子
        step: 步长
        corrector_iters: 校正步迭代次数

    Returns:
        EnvelopeReport: 各次运行的 sup‖x‖ 与是否都不超过 ε2
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    window = (spec.t0 - spec.g_max, spec.t0)
    histories = [sample_history(rng, spec.n, query.eps1, window) for _ in range(samples)]
    disturbances = [sample_disturbance(rng, spec.p, query.rho) for _ in range(samples)]

    variants = [("random", h, d) for h, d in zip(histories, disturbances)]
    for j in range(spec.p):
        for sign in (1.0, -1.0):
            value = np.zeros(spec.p)
            value[j] = sign * query.rho
            variants.append(("extreme", histories[0], ConstantVector(tuple(value))))

    def run(index: int) -> EnvelopeRun:
        kind, nu, d = variants[index]
        try:
            trajectory = integrate(spec.with_changes(nu=nu, d=d), step, corrector_iters)
        except (FracFtsError, ValueError, ArithmeticError) as e:
            return EnvelopeRun(index=index, kind=kind, error=str(e))
        sup_norm = trajectory.sup_norm
        return EnvelopeRun(
            index=index,
            kind=kind,
            sup_norm=sup_norm,
            blow_up=trajectory.blow_up,
            within_eps2=not trajectory.blow_up and sup_norm <= query.eps2,
        )

    with ThreadPoolExecutor(max_workers=settings.max_workers) as executor:
        runs = list(executor.map(run, range(len(variants))))

    finished = [r.sup_norm for r in runs if r.sup_norm is not None]
    failures = sum(1 for r in runs if r.error is not None)
    report = EnvelopeReport(
        runs=runs,
        max_sup_norm=max(finished) if finished else 0.0,
        eps2=query.eps2,
        all_within_eps2=failures == 0 and all(r.within_eps2 for r in runs),
        failures=failures,
        samples=samples,
        seed=seed,
        step=settings.default_step(spec.t0, spec.T) if step is None else step,
    )
    if report.all_within_eps2:
        logger.info(f"Envelope: {len(runs)} runs, max sup norm {report.max_sup_norm:.6g} <= eps2={query.eps2:g}")
    else:
        logger.warning(
            f"Envelope: {len(runs)} runs, max sup norm {report.max_sup_norm:.6g}, eps2={query.eps2:g}, "
            f"{failures} failed run(s)"
        )
    return report

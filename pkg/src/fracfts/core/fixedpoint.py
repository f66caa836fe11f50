"""
稳定性证明中的不动点构造在网格上的实现

权函数 h(s)（历史段为 1，[t0, T] 上为 E_β(θ(s - t0)^β)），加权度量
ϖ(x1, x2) = sup ‖x1 - x2‖ / h，解算子 𝒱，从锚点 y0 出发的 Picard 迭代，
以及压缩因子 (a0 + a1)/(a0 + a1 + η) 的经验测量。
"""

import math
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from config.settings import settings
from ..models.result_models import (
    AprioriReport,
    BoundCheck,
    ContractionReport,
    IterationRecord,
    PicardLog,
    VerifyReport,
)
from ..models.system import FtsQuery, SystemSpec
from .certificate import compute_certificate, compute_coefficients
from .errors import NonFiniteValueError, SpecValidationError
from .quadrature import SimulationGrid, trapezoid_fractional_integral
from .simulator import integrate, richardson_error
from .specfun import MlfParams, gamma, mittag_leffler_array

logger = logging.getLogger(__name__)

# 一致性比较的倍数
_AGREEMENT_FACTOR = 10.0


@dataclass(frozen=True)
class GridFunction:
    """共享网格 [t0 - g_max, T] 上的向量值函数"""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != len(self.times):
            raise ValueError(f"{values.shape[0]} values for {len(self.times)} grid times")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("grid function values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))


@dataclass(frozen=True)
class WeightFunction:
    """h(s) = 1 (s <= t0)，h(s) = E_β(θ(s - t0)^β) (s > t0)"""

    beta: float
    theta: float
    t0: float

    def __call__(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        weights = np.ones_like(times)
        after = times > self.t0
        if after.any():
            arguments = self.theta * (times[after] - self.t0) ** self.beta
            weights[after] = mittag_leffler_array(MlfParams(self.beta), arguments)
        return weights


def weighted_distance(
    x1: GridFunction,
    x2: GridFunction,
    w: Optional[WeightFunction] = None,
    weights: Optional[np.ndarray] = None,
) -> float:
    """
    ϖ(x1, x2) = max_t ‖x1(t) - x2(t)‖ / h(t)

    Args:
        x1: 网格函数
        x2: 同一网格上的网格函数
        w: 权函数
        weights: 预先算好的权值（优先于 w）
    """
    if x1.values.shape != x2.values.shape or not np.array_equal(x1.times, x2.times):
        raise ValueError("grid functions must share the same grid")
    if weights is None:
        weights = w(x1.times) if w is not None else np.ones(len(x1.times))
    return float(np.max(np.linalg.norm(x1.values - x2.values, axis=1) / weights))


class SolutionOperator:
    """离散解算子 𝒱，积分用与积分器相同的乘积梯形权重"""

    def __init__(self, spec: SystemSpec, grid: SimulationGrid):
        self.spec = spec
        self.grid = grid
        self.times = grid.times
        self.solution_times = grid.solution_times
        self.history = np.array([np.asarray(spec.nu(float(s)), dtype=float) for s in grid.history_times])
        self.history = self.history.reshape(grid.history_count, spec.n)
        self.delayed_at = grid.delayed_times(spec.g, spec.g_max)
        self.disturbance = np.array([np.asarray(spec.d(float(t)), dtype=float) for t in self.solution_times])
        self.x0 = np.asarray(spec.nu(spec.t0), dtype=float)

    def delayed_values(self, y: GridFunction) -> np.ndarray:
        return np.column_stack(
            [np.interp(self.delayed_at, self.times, y.values[:, c]) for c in range(y.values.shape[1])]
        )

    def apply(self, y: GridFunction) -> GridFunction:
        """
        (𝒱y)(t) = ν(t)（历史段），ν(t0) + I^β[A0 y + A1 y(s - g(s)) + A2 d + f](t)（[t0, T]）

        Raises:
            NonFiniteValueError: 求值中出现 inf / nan
        """
        spec = self.spec
        if not self.grid.matches(y.times):
            raise ValueError("grid function does not live on the operator's grid")
        H = self.grid.history_count
        state = y.values[H:]
        delayed = self.delayed_values(y)

        with np.errstate(all="ignore"):
            F = np.array(
                [
                    spec.rhs(float(t), state[k], delayed[k], self.disturbance[k])
                    for k, t in enumerate(self.solution_times)
                ]
            )
            solution = self.x0 + trapezoid_fractional_integral(F, spec.beta, self.grid.step)

        if not np.all(np.isfinite(solution)):
            raise NonFiniteValueError("non-finite value while applying the solution operator")
        return GridFunction(self.times, np.vstack((self.history, solution)))


def _grid_for(spec: SystemSpec, step: Optional[float]) -> SimulationGrid:
    step = settings.default_step(spec.t0, spec.T) if step is None else step
    return SimulationGrid.build(spec.t0, spec.T, spec.g_max, step)


def apply_V(spec: SystemSpec, y: GridFunction) -> GridFunction:
    """对网格函数 y 应用 𝒱（网格由 y 的时间点推出）"""
    if len(y.times) < 2:
        raise SpecValidationError("grid function needs at least two points", field="y")
    grid = _grid_for(spec, float(y.times[-1] - y.times[-2]))
    if not grid.matches(y.times):
        raise SpecValidationError("grid function times do not form the simulation grid", field="y")
    return SolutionOperator(spec, grid).apply(y)


def anchor(spec: SystemSpec, grid: SimulationGrid) -> GridFunction:
    """y0：历史段为 ν，[t0, T] 上恒为 ν(t0)"""
    history = np.array([np.asarray(spec.nu(float(s)), dtype=float) for s in grid.history_times])
    history = history.reshape(grid.history_count, spec.n)
    constant = np.tile(np.asarray(spec.nu(spec.t0), dtype=float), (grid.steps + 1, 1))
    return GridFunction(grid.times, np.vstack((history, constant)))


@dataclass
class _PicardRun:
    limit: GridFunction
    log: PicardLog
    start: GridFunction
    first: Optional[GridFunction]
    weights: np.ndarray
    grid: SimulationGrid
    operator: SolutionOperator


def _picard(spec, eta, max_iters, tol, step) -> _PicardRun:
    max_iters = settings.picard_max_iters if max_iters is None else max_iters
    tol = settings.picard_tol if tol is None else tol
    if max_iters < 2:
        raise ValueError("max_iters must be >= 2")
    if not tol > 0.0:
        raise ValueError("tol must be > 0")
    if not (eta > 0.0 and math.isfinite(eta)):
        raise ValueError(f"eta must be > 0, got {eta}")

    coefficients = compute_coefficients(spec)
    a = coefficients.a0 + coefficients.a1
    theta = a + eta
    q = a / theta

    grid = _grid_for(spec, step)
    operator = SolutionOperator(spec, grid)
    weights = WeightFunction(spec.beta, theta, spec.t0)(grid.times)

    y0 = anchor(spec, grid)
    y, first = y0, None
    records: List[IterationRecord] = []
    converged = False
    message = ""
    previous = None

    for index in range(1, max_iters + 1):
        try:
            following = operator.apply(y)
        except NonFiniteValueError as e:
            message = str(e)
            logger.warning(f"Picard iteration {index} stopped: {e}")
            break
        if first is None:
            first = following
        distance = weighted_distance(following, y, weights=weights)
        ratio = distance / previous if previous else None
        records.append(IterationRecord(index=index, distance=distance, ratio=ratio))
        logger.debug(f"Picard {index}: distance {distance:.3e}, ratio {ratio}")
        y, previous = following, distance
        if distance <= tol:
            converged = True
            break

    last_ratio = next((r.ratio for r in reversed(records) if r.ratio is not None), None)
    if converged:
        message = f"converged in {len(records)} iteration(s)"
        logger.info(f"Picard iteration (eta={eta:g}) {message}")
    elif not message:
        message = f"no convergence within {max_iters} iterations (last ratio {last_ratio})"
        logger.warning(f"Picard iteration (eta={eta:g}): {message}")

    log = PicardLog(
        records=records,
        converged=converged,
        iterations=len(records),
        last_ratio=last_ratio,
        contraction_factor=q,
        eta=eta,
        theta=theta,
        step=grid.step,
        message=message,
    )
    return _PicardRun(y, log, y0, first, weights, grid, operator)


def picard_iterate(
    spec: SystemSpec,
    eta: float,
    max_iters: Optional[int] = None,
    tol: Optional[float] = None,
    step: Optional[float] = None,
) -> Tuple[GridFunction, PicardLog]:
    """
    从锚点 y0 出发迭代 y <- 𝒱y，直到 ϖ(y_{k+1}, y_k) <= tol

    Args:
        spec: 系统定义
        eta: 权函数参数 η > 0
        max_iters: 最大迭代次数（>= 2）
        tol: 收敛阈值
        step: 网格步长

    Returns:
        Tuple[GridFunction, PicardLog]: 最后的迭代值与迭代日志（不收敛时 converged=False）
    """
    run = _picard(spec, eta, max_iters, tol, step)
    return run.limit, run.log


def measure_contraction(
    spec: SystemSpec,
    eta: float,
    pairs: int = 16,
    seed: int = 0,
    step: Optional[float] = None,
) -> ContractionReport:
    """
    随机网格函数对（历史段相同）上的比值 ϖ(𝒱x1, 𝒱x2) / ϖ(x1, x2)，
    每个比值都应不超过 q (1 + contraction_slack)

    Returns:
        ContractionReport: 各对的比值、界与是否通过
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    coefficients = compute_coefficients(spec)
    a = coefficients.a0 + coefficients.a1
    theta = a + eta
    q = a / theta
    grid = _grid_for(spec, step)
    operator = SolutionOperator(spec, grid)
    weights = WeightFunction(spec.beta, theta, spec.t0)(grid.times)
    rng = np.random.default_rng(seed)
    scale = max(1.0, spec.history_norm())

    ratios = []
    for _ in range(pairs):
        pair = []
        for _ in range(2):
            solution = rng.normal(scale=scale, size=(grid.steps + 1, spec.n))
            pair.append(GridFunction(grid.times, np.vstack((operator.history, solution))))
        x1, x2 = pair
        before = weighted_distance(x1, x2, weights=weights)
        after = weighted_distance(operator.apply(x1), operator.apply(x2), weights=weights)
        ratios.append(after / before)

    bound = q * (1.0 + settings.contraction_slack)
    max_ratio = max(ratios)
    passed = max_ratio <= bound
    if passed:
        logger.debug(f"Contraction ratios over {pairs} pairs: max {max_ratio:.4f} <= {bound:.4f}")
    else:
        logger.warning(f"Measured contraction ratio {max_ratio:.6g} exceeds q(1+slack) = {bound:.6g}")
    return ContractionReport(contraction_factor=q, bound=bound, ratios=ratios, max_ratio=max_ratio, passed=passed)


def _check(name: str, lhs: float, rhs: float, slack: float) -> BoundCheck:
    margin = rhs + slack - lhs
    return BoundCheck(name=name, lhs=lhs, rhs=rhs, slack=slack, margin=margin, passed=margin >= 0.0)


def _apriori(spec: SystemSpec, query: FtsQuery, run: _PicardRun) -> AprioriReport:
    cert = compute_certificate(spec, query.with_eta(run.log.eta))
    slack = settings.apriori_slack
    q = run.log.contraction_factor
    x_star, y0 = run.limit, run.start

    bound = cert.r1 * query.eps1 + cert.r2 * query.rho
    distance = weighted_distance(x_star, y0, weights=run.weights)

    anchor_step = weighted_distance(run.first, y0, weights=run.weights) if run.first is not None else 0.0
    residual_bound = (
        cert.M * ((cert.a0 + cert.a1) * spec.history_norm() + cert.a2 * query.rho) / gamma(spec.beta + 1.0)
    )

    h_T = float(run.weights[-1])
    excess = np.linalg.norm(x_star.values, axis=1) - np.linalg.norm(y0.values, axis=1)

    checks = [
        _check("apriori_distance", distance, bound, slack),
        _check("anchor_residual", anchor_step, residual_bound, slack),
        _check("fixed_point_estimate", distance, anchor_step / (1.0 - q), slack),
        _check("pointwise", float(excess.max()), bound * h_T, slack),
    ]
    passed = run.log.converged and cert.C is not None and all(c.passed for c in checks)
    for c in checks:
        if not c.passed:
            logger.warning(f"A-priori check {c.name} violated: {c.lhs:.6g} > {c.rhs:.6g} + {c.slack:g}")
    return AprioriReport(checks=checks, passed=passed, picard=run.log)


def _fixed_eta(spec: SystemSpec, query: FtsQuery) -> float:
    if query.search is None:
        return float(query.eta)
    return compute_certificate(spec, query).eta_used


def verify_a_priori_bound(
    spec: SystemSpec,
    query: FtsQuery,
    max_iters: Optional[int] = None,
    tol: Optional[float] = None,
    step: Optional[float] = None,
) -> AprioriReport:
    """
    检查 Picard 极限满足证明中的先验估计

    - ϖ(x*, y0) <= r1 ε1 + r2 ρ
    - ϖ(𝒱y0, y0) <= M[(a0+a1)‖ν‖ + a2 ρ] / Γ(β+1)
    - ϖ(x*, y0) <= ϖ(𝒱y0, y0) / (1 - q)
    - ‖x*(t)‖ <= ‖y0(t)‖ + (r1 ε1 + r2 ρ) h(T)

    Returns:
        AprioriReport: 每条不等式两边的值与余量
    """
    query.validate(t0=spec.t0)
    run = _picard(spec, _fixed_eta(spec, query), max_iters, tol, step)
    return _apriori(spec, query, run)


def verify_fixed_point(
    spec: SystemSpec,
    query: FtsQuery,
    max_iters: Optional[int] = None,
    tol: Optional[float] = None,
    step: Optional[float] = None,
    corrector_iters: Optional[int] = None,
) -> VerifyReport:
    """
    端到端验证：Picard 比值不超过 q + 0.01，随机函数对的压缩比不超过 q(1 + slack)，先验界成立，
    Picard 极限与 ABM 轨迹之差不超过 10·max(tol, Richardson 误差)

    Returns:
        VerifyReport: 验证报告，passed 为所有检查的合取
    """
    query.validate(t0=spec.t0)
    tol = settings.picard_tol if tol is None else tol
    run = _picard(spec, _fixed_eta(spec, query), max_iters, tol, step)
    apriori = _apriori(spec, query, run)

    log = run.log
    ratio_bound = log.contraction_factor + settings.ratio_slack
    ratios = log.ratios
    max_ratio = max(ratios) if ratios else None
    ratios_ok = max_ratio is None or max_ratio <= ratio_bound

    trajectory = integrate(spec, run.grid.step, corrector_iters)
    if trajectory.blow_up or not run.grid.matches(trajectory.times):
        agreement = math.inf
    else:
        agreement = weighted_distance(
            run.limit, GridFunction(trajectory.times, trajectory.states), weights=run.weights
        )
    scheme_error = richardson_error(spec, run.grid.step, corrector_iters)
    agreement_bound = _AGREEMENT_FACTOR * max(tol, scheme_error)
    agreement_ok = agreement <= agreement_bound

    contraction = measure_contraction(spec, log.eta, step=run.grid.step)

    passed = log.converged and ratios_ok and contraction.passed and apriori.passed and agreement_ok
    logger.info(
        f"Fixed-point verification: max ratio {max_ratio}, bound {ratio_bound:.6g}, "
        f"measured contraction {contraction.max_ratio:.4g}, "
        f"agreement {agreement:.3e} (bound {agreement_bound:.3e}), passed={passed}"
    )
    return VerifyReport(
        picard=log,
        contraction_factor=log.contraction_factor,
        ratio_bound=ratio_bound,
        max_ratio=max_ratio,
        ratios_ok=ratios_ok,
        contraction=contraction,
        apriori=apriori,
        agreement=agreement,
        agreement_bound=agreement_bound,
        agreement_ok=agreement_ok,
        passed=passed,
    )

import math
from dataclasses import dataclass, field, replace
import logging
from typing import Any, Callable, Dict, Optional

import numpy as np

from config.settings import settings
from ..core.errors import InconsistentSpecError, SpecValidationError

logger = logging.getLogger(__name__)

Nonlinearity = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
ScalarFunction = Callable[[float], float]
VectorFunction = Callable[[float], np.ndarray]

# 抽样检查的松弛量
_LIPSCHITZ_SLACK = 1e-9
_RHO_SLACK = 1e-9
_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SystemSpec:
    """
    带时滞的非线性分数阶系统

        ^C D^β x(t) = A0 x(t) + A1 x(t - g(t)) + A2 d(t) + f(t, x(t), x(t - g(t)), d(t))

    初始历史 x(s) = ν(s)，s ∈ [t0 - g_max, t0]。
    """

    beta: float
    t0: float
    T: float
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    kappa: ScalarFunction
    f: Nonlinearity
    g: ScalarFunction
    g_max: float
    nu: VectorFunction
    d: VectorFunction
    rho: float
    declaration: Optional[Dict[str, Any]] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("A0", "A1", "A2"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))

    @property
    def n(self) -> int:
        """状态维数"""
        return self.A0.shape[0]

    @property
    def p(self) -> int:
        """扰动维数"""
        return self.A2.shape[1]

    def rhs(self, t: float, x: np.ndarray, x_delayed: np.ndarray, d_value: np.ndarray) -> np.ndarray:
        """右端 A0 x + A1 x_delayed + A2 d + f(t, x, x_delayed, d)"""
        return (
            self.A0 @ x
            + self.A1 @ x_delayed
            + self.A2 @ d_value
            + np.asarray(self.f(t, x, x_delayed, d_value), dtype=float)
        )

    def history_norm(self, samples: int = 257) -> float:
        """sup_{[t0 - g_max, t0]} ‖ν(s)‖（欧氏范数的上确界，按采样估计）"""
        times = np.linspace(self.t0 - self.g_max, self.t0, samples if self.g_max > 0 else 1)
        return max(float(np.linalg.norm(self.nu(float(s)))) for s in times)

    def with_changes(self, **changes) -> "SystemSpec":
        """返回替换部分字段后的新系统"""
        return replace(self, **changes)

    def validate_structure(self) -> None:
        """检查标量参数与矩阵维数"""
        if not (math.isfinite(self.beta) and 0.0 < self.beta <= 1.0):
            raise SpecValidationError(f"beta must lie in (0, 1], got {self.beta}", field="system.beta")
        if not (math.isfinite(self.t0) and math.isfinite(self.T) and self.T > self.t0):
            raise SpecValidationError(f"need T > t0, got t0={self.t0}, T={self.T}", field="system.T")
        if not (math.isfinite(self.g_max) and self.g_max >= 0.0):
            raise SpecValidationError("g_max must be >= 0", field="system.g")
        if not (math.isfinite(self.rho) and self.rho >= 0.0):
            raise SpecValidationError("rho must be >= 0", field="system.rho")

        n = self.A0.shape[0]
        if self.A0.ndim != 2 or self.A0.shape != (n, n):
            raise SpecValidationError(f"A0 must be square, got shape {self.A0.shape}", field="system.A0")
        if self.A1.shape != (n, n):
            raise SpecValidationError(
                f"A1 must have shape {(n, n)}, got {self.A1.shape}", field="system.A1"
            )
        if self.A2.ndim != 2 or self.A2.shape[0] != n:
            raise SpecValidationError(
                f"A2 must have {n} rows, got shape {self.A2.shape}", field="system.A2"
            )
        for name in ("A0", "A1", "A2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise SpecValidationError("matrix entries must be finite", field=f"system.{name}")

    def validate(self, probe_points: Optional[int] = None, seed: Optional[int] = None) -> None:
        """
        结构检查加上对假设条件的抽样检查

        - ‖f(t,u) - f(t,w)‖ <= κ(t)(‖u1-w1‖ + ‖u2-w2‖ + ‖u3-w3‖)，随机探针
        - d(t)ᵀd(t) <= ρ²，时间网格
        - f(t,0,0,0) = 0，时间网格

        Args:
            probe_points: 探针数量，默认取配置
            seed: 随机种子，默认取配置

        Raises:
            SpecValidationError: 任一检查失败
        """
        self.validate_structure()
        probe_points = settings.lipschitz_probe_points if probe_points is None else probe_points
        seed = settings.probe_seed if seed is None else seed
        rng = np.random.default_rng(seed)
        n, p = self.n, self.p

        times = np.linspace(self.t0, self.T, probe_points)
        zero_n, zero_p = np.zeros(n), np.zeros(p)
        for t in times:
            t = float(t)
            value = np.asarray(self.f(t, zero_n, zero_n, zero_p), dtype=float)
            if value.shape != (n,):
                raise SpecValidationError(
                    f"f must return a vector of length {n}, got shape {value.shape}", field="system.f"
                )
            if np.linalg.norm(value) > _ZERO_TOL:
                raise SpecValidationError(f"f(t, 0, 0, 0) != 0 at t={t}", field="system.f")

            d_value = np.asarray(self.d(t), dtype=float)
            if d_value.shape != (p,):
                raise SpecValidationError(
                    f"d must return a vector of length {p}, got shape {d_value.shape}", field="system.d"
                )
            if float(d_value @ d_value) > self.rho ** 2 * (1.0 + _RHO_SLACK):
                raise SpecValidationError(
                    f"d(t)ᵀd(t) = {float(d_value @ d_value)} exceeds rho² = {self.rho ** 2} at t={t}",
                    field="system.d",
                )

            k = float(self.kappa(t))
            if not math.isfinite(k) or k < 0.0:
                raise InconsistentSpecError(f"kappa({t}) = {k} must be finite and >= 0", field="system.kappa")

        nu_value = np.asarray(self.nu(self.t0), dtype=float)
        if nu_value.shape != (n,):
            raise SpecValidationError(
                f"nu must return a vector of length {n}, got shape {nu_value.shape}", field="system.nu"
            )

        scale = max(1.0, self.history_norm(), self.rho)
        for _ in range(probe_points):
            t = float(rng.uniform(self.t0, self.T))
            u = [rng.normal(scale=scale, size=n), rng.normal(scale=scale, size=n), rng.normal(scale=scale, size=p)]
            w = [rng.normal(scale=scale, size=n), rng.normal(scale=scale, size=n), rng.normal(scale=scale, size=p)]
            lhs = float(np.linalg.norm(np.asarray(self.f(t, *u)) - np.asarray(self.f(t, *w))))
            rhs = float(self.kappa(t)) * sum(float(np.linalg.norm(a - b)) for a, b in zip(u, w))
            if lhs > rhs * (1.0 + _LIPSCHITZ_SLACK) + _ZERO_TOL:
                raise SpecValidationError(
                    f"Lipschitz envelope violated at t={t}: {lhs:.6g} > {rhs:.6g}", field="system.kappa"
                )
        logger.debug(f"System validated with {probe_points} probes (n={n}, p={p})")


@dataclass(frozen=True)
class EtaSearch:
    """η 搜索指令：对数网格 [eta_min, eta_max] 上 points 个点"""

    eta_min: float
    eta_max: float
    points: int = field(default_factory=lambda: settings.eta_search_points)

    def validate(self) -> None:
        if not (math.isfinite(self.eta_min) and math.isfinite(self.eta_max)):
            raise SpecValidationError("eta range must be finite", field="query.eta")
        if not 0.0 < self.eta_min <= self.eta_max:
            raise SpecValidationError(
                f"need 0 < eta_min <= eta_max, got [{self.eta_min}, {self.eta_max}]", field="query.eta"
            )
        if self.points < 1:
            raise SpecValidationError("points must be >= 1", field="query.eta.points")

    @property
    def degenerate(self) -> bool:
        return self.eta_min == self.eta_max


@dataclass(frozen=True)
class FtsQuery:
    """鲁棒有限时间稳定性问题 {ε1, ε2, ρ, T} 与自由参数 η"""

    eps1: float
    eps2: float
    rho: float
    T: float
    eta: Optional[float] = 1.0
    search: Optional[EtaSearch] = None

    def validate(self, t0: Optional[float] = None) -> None:
        """检查 0 < ε1 < ε2、ρ >= 0、η > 0（固定时）"""
        if not (math.isfinite(self.eps1) and self.eps1 > 0.0):
            raise SpecValidationError("eps1 must be > 0", field="query.eps1")
        if not (math.isfinite(self.eps2) and self.eps2 > self.eps1):
            raise SpecValidationError("eps2 must be > eps1", field="query.eps2")
        if not (math.isfinite(self.rho) and self.rho >= 0.0):
            raise SpecValidationError("rho must be >= 0", field="query.rho")
        if not math.isfinite(self.T) or (t0 is not None and self.T <= t0):
            raise SpecValidationError(f"T must be finite and > t0, got {self.T}", field="query.T")
        if self.search is not None:
            self.search.validate()
        elif self.eta is None or not (math.isfinite(self.eta) and self.eta > 0.0):
            raise SpecValidationError("eta must be > 0 when fixed", field="query.eta")

    def with_eta(self, eta: float) -> "FtsQuery":
        """固定 η 后的查询"""
        return replace(self, eta=eta, search=None)

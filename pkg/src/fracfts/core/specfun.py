import math
import warnings
from dataclasses import dataclass, field
import logging
from typing import Iterable

import numpy as np
from scipy import integrate, special

from config.settings import settings
from .errors import MlfAccuracyError, MlfOverflowError, QuadratureError

logger = logging.getLogger(__name__)

# 双精度 exp 不溢出的最大自变量
LOG_FLOAT_MAX = math.log(np.finfo(float).max)
_EPS = float(np.finfo(float).eps)

_SERIES_CHUNK = 64
_MAX_SERIES_TERMS = 10_000_000
_MAX_ASYMPTOTIC_TERMS = 2000
_QUADRATURE_TOL = 1e-6


@dataclass(frozen=True)
class MlfParams:
    """单参数 Mittag-Leffler 函数 E_σ 的求值参数"""

    sigma: float
    rel_tol: float = field(default_factory=lambda: settings.mlf_rel_tol)

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and 0.0 < self.sigma <= 1.0):
            raise ValueError(f"sigma must lie in (0, 1], got {self.sigma}")
        if not (math.isfinite(self.rel_tol) and 0.0 < self.rel_tol < 1e-3):
            raise ValueError(f"rel_tol must lie in (0, 1e-3), got {self.rel_tol}")

    @property
    def crossover(self) -> float:
        """渐近分支的切换点，以 z = t^(1/σ) 计"""
        return max(-math.log(self.rel_tol), 8.0)


def gamma(x: float) -> float:
    """
    正实数上的 Γ(x)

    Args:
        x: 自变量，必须为正

    Returns:
        float: Γ(x)

    Raises:
        ValueError: x <= 0 或非有限
        OverflowError: Γ(x) 超出浮点范围
    """
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError(f"gamma is only defined here for finite x > 0, got {x}")
    value = float(special.gamma(x))
    if math.isinf(value):
        raise OverflowError(f"gamma({x}) exceeds the floating-point range")
    return value


def _series(sigma: float, t: float, rel_tol: float) -> float:
    """
    幂级数 Σ t^b / Γ(bσ+1)，分块向量化求和

    停止条件：连续三项递减，且按几何尾估计的剩余部分低于 rel_tol 的十分之一。
    级数项在大 t 时先增后减，因此需要"连续递减"这一保护。
    """
    log_abs = math.log(abs(t))
    negative = t < 0.0
    chunk = max(_SERIES_CHUNK, int(4.0 / sigma))

    total = 0.0
    abs_total = 0.0
    prev_mag = math.inf
    carry = np.array([False, False])
    start = 0

    while start < _MAX_SERIES_TERMS:
        b = np.arange(start, start + chunk, dtype=float)
        mags = np.exp(b * log_abs - special.gammaln(b * sigma + 1.0))
        terms = np.where(b % 2 == 1, -mags, mags) if negative else mags

        partial = total + np.cumsum(terms)
        abs_partial = abs_total + np.cumsum(mags)

        previous = np.concatenate(([prev_mag], mags[:-1]))
        decreasing = mags < previous
        extended = np.concatenate((carry, decreasing))
        run3 = extended[2:] & extended[1:-1] & extended[:-2]

        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(previous > 0, mags / previous, 0.0)
            tail = np.where(ratio < 1.0, mags * ratio / (1.0 - ratio), np.inf)
        done = run3 & (tail <= 0.1 * rel_tol * np.abs(partial))

        if done.any():
            i = int(np.argmax(done))
            value = float(partial[i])
            if negative:
                cancellation = float(abs_partial[i]) / abs(value) * _EPS if value != 0.0 else math.inf
                if cancellation > rel_tol:
                    raise MlfAccuracyError(
                        f"series cancellation at t={t} (sigma={sigma}) prevents "
                        f"relative accuracy {rel_tol:g}"
                    )
            return value

        total = float(partial[-1])
        abs_total = float(abs_partial[-1])
        prev_mag = float(mags[-1])
        carry = decreasing[-2:]
        start += chunk

    raise MlfAccuracyError(f"series did not converge within {_MAX_SERIES_TERMS} terms at t={t}")


def _asymptotic_correction(sigma: float, t: float, z: float) -> float:
    """代数修正项 Σ t^(-k) / Γ(1-kσ)，在最小项处截断"""
    count = int(min(z / sigma + 1.0, _MAX_ASYMPTOTIC_TERMS))
    k = np.arange(1, max(count, 2) + 1, dtype=float)
    # t^(-k) 下溢为 0 且 1/Γ 溢出时乘积为 nan，这些项不参与选最小项
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        terms = np.exp(-k * math.log(t)) * special.rgamma(1.0 - k * sigma)
    finite = np.isfinite(terms)
    terms = np.where(finite, terms, 0.0)
    mags = np.where(finite & (terms != 0.0), np.abs(terms), np.inf)
    cut = int(np.argmin(mags))
    return float(np.sum(terms[:cut]))


def _asymptotic_log(sigma: float, t: float) -> float:
    """ln E_σ(t) ≈ z - ln σ + log1p(-σ e^(-z) Σ ...)，z = t^(1/σ)"""
    log_z = math.log(t) / sigma
    if log_z > LOG_FLOAT_MAX:
        raise MlfOverflowError(f"t^(1/sigma) overflows at t={t}, sigma={sigma}")
    z = math.exp(log_z)
    correction = _asymptotic_correction(sigma, t, z)
    return z - math.log(sigma) + math.log1p(-sigma * correction * math.exp(-z))


def _uses_asymptotic(params: MlfParams, t: float) -> bool:
    return t > 0.0 and math.log(t) / params.sigma >= math.log(params.crossover)


def mittag_leffler(params: MlfParams, t: float) -> float:
    """
    单参数 Mittag-Leffler 函数 E_σ(t)

    小/中等自变量用自适应级数，大正自变量用指数渐近展开加代数修正；
    σ = 1 时直接退化为 exp(t)。

    Args:
        params: 求值参数（阶数与相对精度）
        t: 实自变量，保证精度的范围为 t >= -1

    Returns:
        float: E_σ(t)

    Raises:
        MlfOverflowError: 结果超出浮点范围
        MlfAccuracyError: 无法在该自变量处保证精度
    """
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    if params.sigma == 1.0:
        if t > LOG_FLOAT_MAX:
            raise MlfOverflowError(f"exp({t}) overflows")
        return math.exp(t)
    if t == 0.0:
        return 1.0
    if _uses_asymptotic(params, t):
        log_value = _asymptotic_log(params.sigma, t)
        if log_value > LOG_FLOAT_MAX:
            raise MlfOverflowError(f"E_{params.sigma}({t}) overflows")
        return math.exp(log_value)
    return _series(params.sigma, t, params.rel_tol)


def log_mittag_leffler(params: MlfParams, t: float) -> float:
    """
    ln E_σ(t)，不经过 E_σ(t) 本身，因此在 E_σ 溢出时仍可用

    Args:
        params: 求值参数
        t: 实自变量，t >= -1

    Returns:
        float: ln E_σ(t)
    """
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    if params.sigma == 1.0:
        return t
    if t == 0.0:
        return 0.0
    if _uses_asymptotic(params, t):
        return _asymptotic_log(params.sigma, t)
    return math.log(_series(params.sigma, t, params.rel_tol))


def mittag_leffler_array(params: MlfParams, values: Iterable[float]) -> np.ndarray:
    """对一维数组逐点求 E_σ"""
    return np.array([mittag_leffler(params, float(v)) for v in np.ravel(values)], dtype=float)


def branch_overlap_error(params: MlfParams, window_points: int = 32) -> float:
    """
    级数分支与渐近分支在切换点附近窗口内的最大相对差

    两个分支在 z ∈ [0.8 z_c, 1.25 z_c] 上都被求值，结果应不超过 10·rel_tol。

    Args:
        params: 求值参数
        window_points: 窗口采样点数

    Returns:
        float: 最大相对差；σ = 1 时只有一个分支，返回 0
    """
    if params.sigma == 1.0:
        return 0.0
    zc = params.crossover
    worst = 0.0
    for z in np.geomspace(0.8 * zc, 1.25 * zc, window_points):
        t = float(z) ** params.sigma
        series_value = _series(params.sigma, t, params.rel_tol)
        asymptotic_value = math.exp(_asymptotic_log(params.sigma, t))
        worst = max(worst, abs(series_value - asymptotic_value) / abs(series_value))
    logger.debug(f"MLF branch overlap for sigma={params.sigma}: {worst:.3e}")
    return worst


def psi_eigenfunction_residual(
    sigma: float,
    theta: float,
    r: float,
    s: float,
    quadrature_points: int = 512,
) -> float:
    """
    验证 ψ(λ) = E_σ(θ(λ-r)^σ) 的分数阶积分恒等式

        (1/Γ(σ)) ∫_r^s (s-λ)^(σ-1) ψ(λ) dλ = (ψ(s) - 1) / θ

    弱奇异核 (s-λ)^(σ-1) 作为 QUADPACK 代数权重整体吸收，不做均匀求积。

    Args:
        sigma: 阶数
        theta: 非零实数
        r: 积分下限
        s: 积分上限，s > r
        quadrature_points: 自适应子区间上限，至少 64

    Returns:
        float: 相对残差 |左 - 右| / max(1, |右|)

    Raises:
        QuadratureError: 积分误差估计超过 1e-6
    """
    if not s > r:
        raise ValueError(f"need s > r, got r={r}, s={s}")
    if quadrature_points < 64:
        raise ValueError("quadrature_points must be >= 64")
    if theta == 0.0 or not math.isfinite(theta):
        raise ValueError("theta must be a finite nonzero real")

    params = MlfParams(sigma)

    def psi(lam: float) -> float:
        return mittag_leffler(params, theta * max(lam - r, 0.0) ** sigma)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, abserr = integrate.quad(
            psi,
            r,
            s,
            weight="alg",
            wvar=(0.0, sigma - 1.0),
            limit=quadrature_points,
            epsabs=1e-12,
            epsrel=1e-11,
        )

    gamma_sigma = gamma(sigma)
    lhs = value / gamma_sigma
    rhs = (psi(s) - 1.0) / theta
    scale = max(1.0, abs(rhs))
    if abserr / gamma_sigma > _QUADRATURE_TOL * scale:
        detail = f" ({caught[0].message})" if caught else ""
        raise QuadratureError(
            f"quadrature with {quadrature_points} subintervals cannot resolve the kernel "
            f"singularity to {_QUADRATURE_TOL:g}{detail}"
        )
    return abs(lhs - rhs) / scale

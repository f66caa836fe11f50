"""
鲁棒有限时间稳定性证书

给定系统与查询 {ε1, ε2, ρ, T, η}，计算系数 a0、a1、a2，上确界常数 M，
常数 r1、r2，严格界 C(ε1, ρ) 与放宽界 D(ε1, ρ)，并给出结论。
两个界都只是充分条件：未通过表示"未被该条件证明"，不表示不稳定。
"""

import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy import optimize

from config.settings import settings
from ..models.result_models import Certificate, CertificateStatus, EtaSweep, SweepRow
from ..models.system import EtaSearch, FtsQuery, SystemSpec
from .errors import CertificateConsistencyError, InconsistentSpecError, MlfOverflowError, SpecValidationError
from .specfun import MlfParams, gamma, log_mittag_leffler, mittag_leffler

logger = logging.getLogger(__name__)

_KAPPA_REFINE_TOL = 1e-9
_KAPPA_REFINE_POINTS = 11
_KAPPA_MAX_REFINEMENTS = 60
_M_CANDIDATE_TOL = 1e-3
_M_BOUND_SLACK = 1e-8


@dataclass(frozen=True)
class Coefficients:
    """a_i = ‖A_i‖ + max κ(s)"""

    a0: float
    a1: float
    a2: float
    kappa_max: float


def spectral_norm(A) -> float:
    """
    谱范数（最大奇异值）

    Raises:
        ValueError: 含非有限元素
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return 0.0
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return float(np.linalg.norm(A, 2))


def _kappa_values(kappa: Callable[[float], float], times: np.ndarray) -> np.ndarray:
    values = np.array([float(kappa(float(t))) for t in times])
    bad = (~np.isfinite(values)) | (values < 0.0)
    if bad.any():
        t_bad = float(times[int(np.argmax(bad))])
        raise InconsistentSpecError(
            f"kappa({t_bad}) = {values[bad][0]} must be finite and >= 0", field="system.kappa"
        )
    return values


def maximize_kappa(kappa: Callable[[float], float], t0: float, T: float, grid_points: int) -> float:
    """
    网格上求 κ 的最大值，再围绕网格最大点逐级细分，直到相邻两次结果的相对变化小于 1e-9
    """
    times = np.linspace(t0, T, grid_points)
    values = _kappa_values(kappa, times)
    i = int(np.argmax(values))
    best = float(values[i])

    for _ in range(_KAPPA_MAX_REFINEMENTS):
        lo = times[max(i - 1, 0)]
        hi = times[min(i + 1, len(times) - 1)]
        if hi - lo <= 0.0:
            break
        times = np.linspace(lo, hi, _KAPPA_REFINE_POINTS)
        values = _kappa_values(kappa, times)
        i = int(np.argmax(values))
        candidate = float(values[i])
        change = abs(candidate - best)
        best = max(best, candidate)
        if change <= _KAPPA_REFINE_TOL * max(abs(best), 1e-300):
            break
    return best


def compute_coefficients(
    spec: SystemSpec,
    grid_points: Optional[int] = None,
    horizon: Optional[float] = None,
) -> Coefficients:
    """
    计算 a0、a1、a2

    Args:
        spec: 系统定义
        grid_points: κ 搜索网格点数（>= 100）
        horizon: 区间终点，缺省为 spec.T

    Returns:
        Coefficients: 三个系数与 κ 的最大值
    """
    grid_points = settings.coefficient_grid_points if grid_points is None else grid_points
    if grid_points < 100:
        raise ValueError("grid_points must be >= 100")
    T = spec.T if horizon is None else horizon
    k_max = maximize_kappa(spec.kappa, spec.t0, T, grid_points)
    return Coefficients(
        a0=spectral_norm(spec.A0) + k_max,
        a1=spectral_norm(spec.A1) + k_max,
        a2=spectral_norm(spec.A2) + k_max,
        kappa_max=k_max,
    )


def _weighted_power(params: MlfParams, beta: float, theta: float, u: float) -> float:
    """u^β / E_β(θ u^β)，通过对数形式计算"""
    if u <= 0.0:
        return 0.0
    log_u_beta = beta * math.log(u)
    return math.exp(log_u_beta - log_mittag_leffler(params, theta * math.exp(log_u_beta)))


def compute_M(
    beta: float,
    theta: float,
    t0: float,
    T: float,
    grid_points: Optional[int] = None,
) -> float:
    """
    M = sup_{s ∈ [t0, T]} (s - t0)^β / E_β(θ (s - t0)^β)

    先在均匀网格上求值，再对每个与网格最大值相差不超过 1e-3 的局部极大点
    用有界 Brent 方法加密。结果必须不超过 Γ(β+1)/θ。

    Args:
        beta: 阶数
        theta: a0 + a1 + η，必须为正
        t0: 初始时刻
        T: 终止时刻
        grid_points: 网格点数（>= 200）

    Returns:
        float: M

    Raises:
        CertificateConsistencyError: 结果超过 Γ(β+1)/θ
    """
    grid_points = settings.m_grid_points if grid_points is None else grid_points
    if T == t0:
        return 0.0
    if not T > t0:
        raise ValueError(f"need T > t0, got t0={t0}, T={T}")
    if not (theta > 0.0 and math.isfinite(theta)):
        raise ValueError(f"theta must be positive, got {theta}")
    if grid_points < 200:
        raise ValueError("grid_points must be >= 200")

    params = MlfParams(beta)
    span = T - t0
    u = np.linspace(0.0, span, grid_points)
    phi = np.array([_weighted_power(params, beta, theta, float(x)) for x in u])
    grid_max = float(phi.max())

    padded = np.concatenate(([-np.inf], phi, [-np.inf]))
    local = (padded[1:-1] >= padded[:-2]) & (padded[1:-1] >= padded[2:])
    candidates = np.flatnonzero(local & (phi >= (1.0 - _M_CANDIDATE_TOL) * grid_max))

    best = grid_max
    for i in candidates:
        lo = float(u[max(i - 1, 0)])
        hi = float(u[min(i + 1, len(u) - 1)])
        result = optimize.minimize_scalar(
            lambda x: -_weighted_power(params, beta, theta, x),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * span},
        )
        best = max(best, -float(result.fun))
    logger.debug(f"M search: {len(candidates)} candidate(s), grid max {grid_max:.12g}, refined {best:.12g}")

    bound = gamma(beta + 1.0) / theta
    if best > bound * (1.0 + _M_BOUND_SLACK):
        raise CertificateConsistencyError(f"M = {best} exceeds Gamma(beta+1)/theta = {bound}")
    return best


def _certificate_for_eta(
    spec: SystemSpec,
    query: FtsQuery,
    eta: float,
    coefficients: Coefficients,
    grid_points: int,
) -> Certificate:
    a0, a1, a2 = coefficients.a0, coefficients.a1, coefficients.a2
    beta, t0, T = spec.beta, spec.t0, query.T
    theta = a0 + a1 + eta
    gamma_b1 = gamma(beta + 1.0)
    provenance = {
        "horizon": T,
        "rho": query.rho,
        "coefficient_grid_points": settings.coefficient_grid_points,
        "m_grid_points": grid_points,
        "mlf_rel_tol": settings.mlf_rel_tol,
        "kappa_max": coefficients.kappa_max,
    }
    base = dict(a0=a0, a1=a1, a2=a2, theta=theta, eta_used=eta, provenance=provenance)

    try:
        M = compute_M(beta, theta, t0, T, grid_points)
        E = mittag_leffler(MlfParams(beta), theta * (T - t0) ** beta)
    except MlfOverflowError as e:
        logger.warning(f"Certificate at eta={eta:g} is vacuous: {e}")
        return Certificate(
            M=0.0, r1=0.0, r2=0.0, status=CertificateStatus.VACUOUS_OVERFLOW,
            message=f"bound vacuous (overflow): {e}", **base,
        )

    r1 = M * theta * (a0 + a1) / (eta * gamma_b1)
    r2 = M * theta * a2 / (eta * gamma_b1)
    eps1, rho = query.eps1, query.rho
    C = (r1 * E + 1.0) * eps1 + r2 * E * rho
    D = ((a0 + a1) / eta * E + 1.0) * eps1 + (a2 / eta) * E * rho

    if not (math.isfinite(C) and math.isfinite(D)):
        return Certificate(
            M=M, r1=r1, r2=r2, status=CertificateStatus.VACUOUS_OVERFLOW,
            message="bound vacuous (overflow)", **base,
        )

    verdict_C = C <= query.eps2
    verdict_D = D <= query.eps2
    certified = verdict_C or verdict_D
    status = CertificateStatus.CERTIFIED if certified else CertificateStatus.NOT_CERTIFIED
    message = (
        "robustly finite-time stable (sufficient condition satisfied)"
        if certified
        else "not certified by this sufficient condition (this is not a proof of instability)"
    )
    return Certificate(
        M=M, r1=r1, r2=r2, E=E, C=C, D=D, verdict_C=verdict_C, verdict_D=verdict_D,
        status=status, message=message, **base,
    )


def _prepare(spec: SystemSpec, query: FtsQuery) -> Coefficients:
    query.validate(t0=spec.t0)
    spec.validate_structure()
    if query.rho != spec.rho:
        logger.warning(
            f"Query rho={query.rho} differs from the system's disturbance bound {spec.rho}; "
            f"using the query value"
        )
    nu_norm = spec.history_norm()
    if nu_norm > query.eps1:
        logger.warning(
            f"Nominal history has sup norm {nu_norm:.6g} > eps1={query.eps1}; "
            f"the certificate does not cover it"
        )
    return compute_coefficients(spec, horizon=query.T)


def compute_certificate(spec: SystemSpec, query: FtsQuery) -> Certificate:
    """
    计算证书；查询带搜索指令时委托给 optimize_eta

    Args:
        spec: 系统定义
        query: 稳定性查询

    Returns:
        Certificate: 证书（溢出时 status 为 vacuous_overflow，不抛异常）
    """
    if query.search is not None:
        return optimize_eta(spec, query).certificate

    coefficients = _prepare(spec, query)
    cert = _certificate_for_eta(spec, query, float(query.eta), coefficients, settings.m_grid_points)
    logger.info(
        f"Certificate: a=({cert.a0:.6g}, {cert.a1:.6g}, {cert.a2:.6g}), M={cert.M:.6g}, "
        f"C={cert.C}, D={cert.D}, status={cert.status.value}"
    )
    return cert


def _row(cert: Certificate) -> SweepRow:
    return SweepRow(eta=cert.eta_used, C=cert.C, D=cert.D, verdict_D=cert.verdict_D, status=cert.status)


def _evaluate(spec, query, etas, coefficients) -> List[Certificate]:
    grid_points = settings.m_grid_points

    def run(eta: float) -> Certificate:
        return _certificate_for_eta(spec, query, float(eta), coefficients, grid_points)

    with ThreadPoolExecutor(max_workers=settings.max_workers) as executor:
        return list(executor.map(run, etas))


def _search(spec: SystemSpec, query: FtsQuery, search: EtaSearch, points: int) -> EtaSweep:
    coefficients = _prepare(spec, query)

    if search.degenerate:
        cert = _certificate_for_eta(spec, query, search.eta_min, coefficients, settings.m_grid_points)
        return EtaSweep(certificate=cert, rows=[_row(cert)])

    etas = np.geomspace(search.eta_min, search.eta_max, points)
    certs = _evaluate(spec, query, etas, coefficients)
    rows = [_row(c) for c in certs]

    finite = [i for i, c in enumerate(certs) if c.D is not None]
    if not finite:
        vacuous = certs[0].model_copy(update={"message": "bound vacuous for entire range"})
        logger.warning(f"Every eta in [{search.eta_min:g}, {search.eta_max:g}] overflows")
        return EtaSweep(certificate=vacuous, rows=rows)

    # 按 D 取最小，并列时取较小的 η（网格递增，取第一个）
    best_index = min(finite, key=lambda i: (certs[i].D, i))
    best = certs[best_index]

    lo = math.log(etas[max(best_index - 1, 0)])
    hi = math.log(etas[min(best_index + 1, len(etas) - 1)])

    def objective(log_eta: float) -> float:
        cert = _certificate_for_eta(spec, query, math.exp(log_eta), coefficients, settings.m_grid_points)
        return cert.D if cert.D is not None else math.inf

    result = optimize.minimize_scalar(
        objective, bounds=(lo, hi), method="bounded", options={"xatol": settings.eta_refine_rel_tol}
    )
    refined = _certificate_for_eta(spec, query, math.exp(float(result.x)), coefficients, settings.m_grid_points)
    if refined.D is not None and refined.D < best.D:
        best = refined

    logger.info(
        f"Eta search over [{search.eta_min:g}, {search.eta_max:g}] ({points} points): "
        f"best eta={best.eta_used:.6g}, D={best.D:.6g}"
    )
    return EtaSweep(certificate=best, rows=rows)


def optimize_eta(spec: SystemSpec, query: FtsQuery) -> EtaSweep:
    """
    在对数网格上搜索使 D 最小的 η，并在最优网格点附近加密到相对 1e-4

    Args:
        spec: 系统定义
        query: 带搜索指令的查询

    Returns:
        EtaSweep: 最优证书与完整扫描表
    """
    if query.search is None:
        raise SpecValidationError("optimize_eta needs a search directive", field="query.eta")
    search = query.search
    points = max(search.points, 16)
    return _search(spec, query, search, points)


def sweep_table(spec: SystemSpec, query: FtsQuery, eta_min: float, eta_max: float, points: int) -> EtaSweep:
    """
    按给定点数扫描 η（命令行 sweep 使用），返回扫描表与加密后的最优证书
    """
    search = EtaSearch(eta_min, eta_max, points)
    search.validate()
    if points < 2 and not search.degenerate:
        raise SpecValidationError("points must be >= 2 for a non-degenerate range", field="points")
    return _search(spec, query.with_eta(eta_min), search, points)


def certificate_exit_code(cert: Certificate) -> int:
    """0 已证明，1 未被证明，2 界无意义（溢出）"""
    return {
        CertificateStatus.CERTIFIED: 0,
        CertificateStatus.NOT_CERTIFIED: 1,
        CertificateStatus.VACUOUS_OVERFLOW: 2,
    }[cert.status]

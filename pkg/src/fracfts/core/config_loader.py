import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..models.config_models import EtaSearchConfig, FunctionSpec, QueryConfig, RunConfig, SystemConfig
from ..models.system import EtaSearch, FtsQuery, SystemSpec
from .errors import SpecValidationError
from .registry import registry

logger = logging.getLogger(__name__)


def _field_path(loc: Tuple[Any, ...]) -> str:
    parts: List[str] = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts)


def parse_run_config(data: Any) -> RunConfig:
    """
    严格解析配置对象

    Raises:
        SpecValidationError: 带字段路径的诊断信息
    """
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise SpecValidationError(first["msg"], field=_field_path(first["loc"])) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    读取并解析 JSON 配置文件

    Args:
        path: 配置文件路径

    Returns:
        RunConfig: 解析结果

    Raises:
        SpecValidationError: JSON 语法错误（带行列号）或结构错误（带字段路径）
        OSError: 文件不可读
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    config = parse_run_config(data)
    logger.debug(f"Loaded run config from {path}")
    return config


def _matrix(rows: List[List[float]], name: str) -> np.ndarray:
    widths = {len(row) for row in rows}
    if not rows or len(widths) != 1 or 0 in widths:
        raise SpecValidationError("matrix must be a non-empty rectangular nested list", field=f"system.{name}")
    return np.array(rows, dtype=float)


def build_system(config: RunConfig, validate: bool = True) -> SystemSpec:
    """
    从声明式配置实例化 SystemSpec

    Args:
        config: 运行配置
        validate: 是否执行抽样假设检查

    Returns:
        SystemSpec: 系统定义
    """
    system = config.system
    A0 = _matrix(system.A0, "A0")
    A1 = _matrix(system.A1, "A1")
    A2 = _matrix(system.A2, "A2")
    n, p = A0.shape[0], A2.shape[1]

    built = {
        role: registry.build(role, getattr(system, role).family, getattr(system, role).params, n, p)
        for role in ("kappa", "f", "g", "nu", "d")
    }
    T = system.T if system.T is not None else config.query.T
    spec = SystemSpec(
        beta=system.beta,
        t0=system.t0,
        T=T,
        A0=A0,
        A1=A1,
        A2=A2,
        kappa=built["kappa"],
        f=built["f"],
        g=built["g"],
        g_max=built["g"].cap,
        nu=built["nu"],
        d=built["d"],
        rho=system.rho,
        declaration=system.model_dump(exclude_none=True),
    )
    if validate:
        spec.validate()
    else:
        spec.validate_structure()
    return spec


def build_query(config: RunConfig) -> FtsQuery:
    """从配置构造 FtsQuery"""
    query = config.query
    if isinstance(query.eta, EtaSearchConfig):
        result = FtsQuery(
            eps1=query.eps1,
            eps2=query.eps2,
            rho=query.rho,
            T=query.T,
            eta=None,
            search=EtaSearch(query.eta.eta_min, query.eta.eta_max, query.eta.points),
        )
    else:
        result = FtsQuery(eps1=query.eps1, eps2=query.eps2, rho=query.rho, T=query.T, eta=float(query.eta))
    result.validate(t0=config.system.t0)
    return result


def _declaration(role: str, func: Any) -> FunctionSpec:
    if not hasattr(func, "declaration"):
        raise SpecValidationError("function is not a registry family and cannot be serialized", field=f"system.{role}")
    return FunctionSpec.model_validate(func.declaration())


def system_to_config(spec: SystemSpec, query: FtsQuery) -> RunConfig:
    """
    将 SystemSpec 与 FtsQuery 序列化回配置形式（重新解析后证书不变）

    Raises:
        SpecValidationError: 系统中含有非注册表函数
    """
    system = SystemConfig(
        beta=spec.beta,
        t0=spec.t0,
        T=spec.T,
        A0=spec.A0.tolist(),
        A1=spec.A1.tolist(),
        A2=spec.A2.tolist(),
        kappa=_declaration("kappa", spec.kappa),
        f=_declaration("f", spec.f),
        g=_declaration("g", spec.g),
        nu=_declaration("nu", spec.nu),
        d=_declaration("d", spec.d),
        rho=spec.rho,
    )
    if query.search is not None:
        eta: Union[float, EtaSearchConfig] = EtaSearchConfig(
            eta_min=query.search.eta_min, eta_max=query.search.eta_max, points=query.search.points
        )
    else:
        eta = query.eta
    return RunConfig(
        system=system,
        query=QueryConfig(eps1=query.eps1, eps2=query.eps2, rho=query.rho, T=query.T, eta=eta),
    )


def config_to_dict(config: RunConfig) -> Dict[str, Any]:
    """配置的 JSON 形式"""
    return config.model_dump(mode="json", exclude_none=True)

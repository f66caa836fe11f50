"""
内置函数族注册表

配置文件中的 κ、f、g、ν、d 只能从这里选择，每个函数族是一个冻结的 dataclass，
可调用且能通过 declaration() 还原为配置形式。
"""

import math
from dataclasses import dataclass
import logging
from typing import Any, Callable, Dict, Mapping, Tuple

import numpy as np

from .errors import SpecValidationError

logger = logging.getLogger(__name__)

ROLES = ("kappa", "f", "g", "nu", "d")
SOURCE_ARGUMENTS = ("state", "delayed", "disturbance")


@dataclass(frozen=True)
class ConstantKappa:
    value: float

    def __call__(self, t: float) -> float:
        return self.value

    def declaration(self) -> Dict[str, Any]:
        return {"family": "constant", "params": {"value": self.value}}


@dataclass(frozen=True)
class ZeroNonlinearity:
    n: int

    def __call__(self, t, x, x_delayed, d_value) -> np.ndarray:
        return np.zeros(self.n)

    def declaration(self) -> Dict[str, Any]:
        return {"family": "zero", "params": {}}


@dataclass(frozen=True)
class ComponentwiseNonlinearity:
    """
    f_i = scale · φ(source_i)，φ 为 sin 或 tanh

    每个分量读取 (state | delayed | disturbance) 中的一个标量，
    因此 Lipschitz 常数为 |scale|。
    """

    kind: str
    scale: float
    sources: Tuple[Tuple[str, int], ...]

    def __call__(self, t, x, x_delayed, d_value) -> np.ndarray:
        args = {"state": x, "delayed": x_delayed, "disturbance": d_value}
        raw = np.array([args[argument][index] for argument, index in self.sources], dtype=float)
        phi = np.sin(raw) if self.kind == "sin" else np.tanh(raw)
        return self.scale * phi

    @property
    def lipschitz(self) -> float:
        return abs(self.scale)

    def declaration(self) -> Dict[str, Any]:
        return {
            "family": f"{self.kind}_componentwise",
            "params": {
                "scale": self.scale,
                "sources": [{"argument": a, "index": i} for a, i in self.sources],
            },
        }


@dataclass(frozen=True)
class Cos2Sin2Delay:
    """g(t) = amplitude · cos²(t) · sin²(t)，上界 amplitude / 4"""

    amplitude: float

    def __call__(self, t: float) -> float:
        return self.amplitude * math.cos(t) ** 2 * math.sin(t) ** 2

    @property
    def cap(self) -> float:
        return self.amplitude / 4.0

    def declaration(self) -> Dict[str, Any]:
        return {"family": "cos2sin2_delay", "params": {"amplitude": self.amplitude}}


@dataclass(frozen=True)
class ConstantDelay:
    value: float

    def __call__(self, t: float) -> float:
        return self.value

    @property
    def cap(self) -> float:
        return self.value

    def declaration(self) -> Dict[str, Any]:
        if self.value == 0.0:
            return {"family": "zero", "params": {}}
        return {"family": "constant", "params": {"value": self.value}}


@dataclass(frozen=True)
class ConstantVector:
    """常值向量函数，用于 ν 与 d"""

    value: Tuple[float, ...]

    def __call__(self, t: float) -> np.ndarray:
        return np.array(self.value, dtype=float)

    def declaration(self) -> Dict[str, Any]:
        if not any(self.value):
            return {"family": "zero", "params": {}}
        return {"family": "constant", "params": {"value": list(self.value)}}


@dataclass(frozen=True)
class RotatingDisturbance:
    """d(t) = amplitude · (sin ωt, cos ωt)，‖d‖ 恒等于 |amplitude|"""

    amplitude: float
    frequency: float = 1.0

    def __call__(self, t: float) -> np.ndarray:
        wt = self.frequency * t
        return self.amplitude * np.array([math.sin(wt), math.cos(wt)])

    def declaration(self) -> Dict[str, Any]:
        return {
            "family": "rotating",
            "params": {"amplitude": self.amplitude, "frequency": self.frequency},
        }


Builder = Callable[[Mapping[str, Any], int, int, str], Any]


class FunctionRegistry:
    """按角色（κ、f、g、ν、d）登记函数族构造器"""

    def __init__(self):
        self._builders: Dict[str, Dict[str, Builder]] = {role: {} for role in ROLES}

    def register(self, role: str, name: str):
        """装饰器：登记 role 角色下名为 name 的函数族"""
        if role not in self._builders:
            raise KeyError(f"unknown role {role!r}")

        def decorator(builder: Builder) -> Builder:
            self._builders[role][name] = builder
            return builder

        return decorator

    def families(self, role: str) -> Tuple[str, ...]:
        return tuple(sorted(self._builders[role]))

    def build(self, role: str, family: str, params: Mapping[str, Any], n: int, p: int) -> Any:
        """
        实例化函数族

        Args:
            role: 角色名
            family: 函数族名
            params: 参数
            n: 状态维数
            p: 扰动维数

        Raises:
            SpecValidationError: 未知函数族或参数不合法
        """
        path = f"system.{role}"
        builder = self._builders[role].get(family)
        if builder is None:
            raise SpecValidationError(
                f"unknown family {family!r}; available: {', '.join(self.families(role))}",
                field=f"{path}.family",
            )
        return builder(params, n, p, f"{path}.params")


def _check_keys(params: Mapping[str, Any], required: Tuple[str, ...], optional: Tuple[str, ...], path: str):
    missing = [k for k in required if k not in params]
    if missing:
        raise SpecValidationError(f"missing parameter {missing[0]!r}", field=f"{path}.{missing[0]}")
    extra = [k for k in params if k not in required + optional]
    if extra:
        raise SpecValidationError(f"unknown parameter {extra[0]!r}", field=f"{path}.{extra[0]}")


def _real(value: Any, path: str, minimum: float = -math.inf) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SpecValidationError(f"expected a finite number, got {value!r}", field=path)
    if value < minimum:
        raise SpecValidationError(f"must be >= {minimum}, got {value}", field=path)
    return float(value)


def _vector(value: Any, length: int, path: str) -> Tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise SpecValidationError(f"expected a list of {length} numbers", field=path)
    return tuple(_real(v, f"{path}[{i}]") for i, v in enumerate(value))


registry = FunctionRegistry()


@registry.register("kappa", "constant")
def _kappa_constant(params, n, p, path):
    _check_keys(params, ("value",), (), path)
    return ConstantKappa(_real(params["value"], f"{path}.value", minimum=0.0))


@registry.register("f", "zero")
def _f_zero(params, n, p, path):
    _check_keys(params, (), (), path)
    return ZeroNonlinearity(n)


def _componentwise(kind: str):
    def build(params, n, p, path):
        _check_keys(params, ("scale", "sources"), (), path)
        scale = _real(params["scale"], f"{path}.scale")
        raw = params["sources"]
        if not isinstance(raw, list) or len(raw) != n:
            raise SpecValidationError(f"expected {n} sources, one per state component", field=f"{path}.sources")
        sources = []
        for i, item in enumerate(raw):
            item_path = f"{path}.sources[{i}]"
            if not isinstance(item, dict):
                raise SpecValidationError("source must be an object", field=item_path)
            _check_keys(item, ("argument", "index"), (), item_path)
            argument, index = item["argument"], item["index"]
            if argument not in SOURCE_ARGUMENTS:
                raise SpecValidationError(
                    f"argument must be one of {SOURCE_ARGUMENTS}", field=f"{item_path}.argument"
                )
            size = p if argument == "disturbance" else n
            if isinstance(index, bool) or not isinstance(index, int) or not 0 <= index < size:
                raise SpecValidationError(f"index must lie in [0, {size})", field=f"{item_path}.index")
            sources.append((argument, index))
        return ComponentwiseNonlinearity(kind, scale, tuple(sources))

    return build


registry.register("f", "sin_componentwise")(_componentwise("sin"))
registry.register("f", "tanh_componentwise")(_componentwise("tanh"))


@registry.register("g", "zero")
def _g_zero(params, n, p, path):
    _check_keys(params, (), (), path)
    return ConstantDelay(0.0)


@registry.register("g", "constant")
def _g_constant(params, n, p, path):
    _check_keys(params, ("value",), (), path)
    return ConstantDelay(_real(params["value"], f"{path}.value", minimum=0.0))


@registry.register("g", "cos2sin2_delay")
def _g_cos2sin2(params, n, p, path):
    _check_keys(params, ("amplitude",), (), path)
    return Cos2Sin2Delay(_real(params["amplitude"], f"{path}.amplitude", minimum=0.0))


@registry.register("nu", "zero")
def _nu_zero(params, n, p, path):
    _check_keys(params, (), (), path)
    return ConstantVector((0.0,) * n)


@registry.register("nu", "constant")
def _nu_constant(params, n, p, path):
    _check_keys(params, ("value",), (), path)
    return ConstantVector(_vector(params["value"], n, f"{path}.value"))


@registry.register("d", "zero")
def _d_zero(params, n, p, path):
    _check_keys(params, (), (), path)
    return ConstantVector((0.0,) * p)


@registry.register("d", "constant")
def _d_constant(params, n, p, path):
    _check_keys(params, ("value",), (), path)
    return ConstantVector(_vector(params["value"], p, f"{path}.value"))


@registry.register("d", "rotating")
def _d_rotating(params, n, p, path):
    _check_keys(params, ("amplitude",), ("frequency",), path)
    if p != 2:
        raise SpecValidationError(f"rotating disturbance needs p = 2, got p = {p}", field=path)
    return RotatingDisturbance(
        amplitude=_real(params["amplitude"], f"{path}.amplitude", minimum=0.0),
        frequency=_real(params.get("frequency", 1.0), f"{path}.frequency"),
    )

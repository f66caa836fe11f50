from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FunctionSpec(_StrictModel):
    """注册表中的内置函数族及其参数"""
    family: str = Field(description="函数族名称")
    params: Dict[str, Any] = Field(default_factory=dict, description="函数族参数")


class SystemConfig(_StrictModel):
    """声明式系统定义"""
    beta: float = Field(description="分数阶阶数 β")
    t0: float = Field(default=0.0, description="初始时刻")
    T: Optional[float] = Field(default=None, description="终止时刻，缺省取 query.T")
    A0: List[List[float]] = Field(description="n×n 矩阵")
    A1: List[List[float]] = Field(description="n×n 时滞矩阵")
    A2: List[List[float]] = Field(description="n×p 扰动矩阵")
    kappa: FunctionSpec = Field(description="Lipschitz 包络 κ")
    f: FunctionSpec = Field(description="非线性项")
    g: FunctionSpec = Field(description="时滞函数")
    nu: FunctionSpec = Field(description="初始历史")
    d: FunctionSpec = Field(description="扰动")
    rho: float = Field(description="扰动界 ρ")
    comment: Optional[str] = Field(default=None, description="注释")


class EtaSearchConfig(_StrictModel):
    """η 搜索指令"""
    eta_min: float = Field(gt=0, description="搜索下限")
    eta_max: float = Field(gt=0, description="搜索上限")
    points: int = Field(default=32, ge=1, description="对数网格点数")

    @model_validator(mode="after")
    def check_range(self):
        if self.eta_min > self.eta_max:
            raise ValueError("eta_min must not exceed eta_max")
        return self


class QueryConfig(_StrictModel):
    """有限时间稳定性问题"""
    eps1: float = Field(gt=0, description="初值界 ε1")
    eps2: float = Field(gt=0, description="状态界 ε2")
    rho: float = Field(ge=0, description="扰动界 ρ")
    T: float = Field(description="时间区间终点")
    eta: Union[float, EtaSearchConfig] = Field(default=1.0, description="固定 η 或搜索指令")

    @field_validator("eta")
    @classmethod
    def validate_eta(cls, v):
        if isinstance(v, float) and v <= 0:
            raise ValueError("eta must be > 0")
        return v

    @model_validator(mode="after")
    def check_eps(self):
        if not self.eps1 < self.eps2:
            raise ValueError("eps1 must be smaller than eps2")
        return self


class SolverConfig(_StrictModel):
    """数值求解参数（缺省值取自全局设置）"""
    step: Optional[float] = Field(default=None, gt=0, description="积分步长，缺省 (T-t0)/2048")
    corrector_iters: Optional[int] = Field(default=None, ge=1, description="校正步迭代次数")
    picard_max_iters: Optional[int] = Field(default=None, ge=2, description="Picard 最大迭代次数")
    picard_tol: Optional[float] = Field(default=None, gt=0, description="Picard 收敛阈值")
    samples: int = Field(default=32, ge=1, description="包络检查样本数")
    seed: int = Field(default=7, description="随机种子")


class OutputConfig(_StrictModel):
    """输出位置"""
    directory: str = Field(default="out", description="输出目录")
    trajectory_csv: str = Field(default="trajectory.csv", description="轨迹 CSV 文件名")
    summary_json: str = Field(default="summary.json", description="摘要 JSON 文件名")
    sweep_csv: str = Field(default="sweep.csv", description="η 扫描 CSV 文件名")


class RunConfig(_StrictModel):
    """一次运行的完整配置"""
    system: SystemConfig
    query: QueryConfig
    solver: SolverConfig = Field(default_factory=SolverConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class CertificateStatus(str, Enum):
    """证书结论"""
    CERTIFIED = "certified"
    NOT_CERTIFIED = "not_certified"
    VACUOUS_OVERFLOW = "vacuous_overflow"


class Certificate(BaseModel):
    """鲁棒有限时间稳定性充分条件证书"""
    a0: float = Field(description="max(‖A0‖ + κ)")
    a1: float = Field(description="max(‖A1‖ + κ)")
    a2: float = Field(description="max(‖A2‖ + κ)")
    M: float = Field(description="sup (s-t0)^β / E_β(θ(s-t0)^β)")
    r1: float = Field(description="M θ (a0+a1) / (η Γ(β+1))")
    r2: float = Field(description="M θ a2 / (η Γ(β+1))")
    theta: float = Field(description="a0 + a1 + η")
    E: Optional[float] = Field(default=None, description="E_β(θ(T-t0)^β)，溢出时为空")
    C: Optional[float] = Field(default=None, description="严格界 C(ε1, ρ)")
    D: Optional[float] = Field(default=None, description="放宽界 D(ε1, ρ)")
    eta_used: float = Field(description="使用的 η")
    verdict_C: bool = Field(default=False, description="C <= ε2")
    verdict_D: bool = Field(default=False, description="D <= ε2")
    status: CertificateStatus = Field(description="证书结论")
    message: str = Field(default="", description="说明")
    provenance: Dict[str, Any] = Field(default_factory=dict, description="网格与容差")

    @property
    def certified(self) -> bool:
        return self.status == CertificateStatus.CERTIFIED

    def report(self) -> Dict[str, Any]:
        """命令行输出的证书字段"""
        return {
            "a0": self.a0,
            "a1": self.a1,
            "a2": self.a2,
            "M": self.M,
            "r1": self.r1,
            "r2": self.r2,
            "C": self.C,
            "D": self.D,
            "eta": self.eta_used,
            "verdict_C": self.verdict_C,
            "verdict_D": self.verdict_D,
            "status": self.status.value,
        }


class SweepRow(BaseModel):
    """η 扫描表的一行"""
    eta: float
    C: Optional[float] = None
    D: Optional[float] = None
    verdict_D: bool = False
    status: CertificateStatus


class EtaSweep(BaseModel):
    """η 搜索结果：最优证书与完整扫描表"""
    certificate: Certificate
    rows: List[SweepRow] = Field(default_factory=list)

    def best_row(self) -> SweepRow:
        cert = self.certificate
        return SweepRow(
            eta=cert.eta_used, C=cert.C, D=cert.D, verdict_D=cert.verdict_D, status=cert.status
        )


class TrajectorySummary(BaseModel):
    """单条轨迹的摘要"""
    sup_norm: float = Field(description="[t0, T] 上 ‖x‖ 的最大值")
    blow_up: bool = Field(default=False, description="是否出现非有限值")
    blow_up_time: Optional[float] = Field(default=None, description="截断时刻")
    step: float = Field(description="步长")
    corrector_iters: int = Field(description="校正步迭代次数")
    points: int = Field(description="网格点数")


class EnvelopeRun(BaseModel):
    """包络检查中的一次运行"""
    index: int
    kind: str = Field(description="random 或 extreme")
    sup_norm: Optional[float] = None
    blow_up: bool = False
    within_eps2: bool = False
    error: Optional[str] = Field(default=None, description="运行失败时的错误信息")


class EnvelopeReport(BaseModel):
    """扰动/初值包络检查报告"""
    runs: List[EnvelopeRun] = Field(default_factory=list)
    max_sup_norm: float = 0.0
    eps2: float
    all_within_eps2: bool
    failures: int = 0
    samples: int
    seed: int
    step: float


class ConvergenceRow(BaseModel):
    """收敛性研究中的一行"""
    step: float
    max_error: float = Field(description="[t0, T] 网格上的最大误差")
    final_error: float = Field(description="终点 T 处的误差")
    order: Optional[float] = Field(default=None, description="最大误差相对上一行的经验阶")
    final_order: Optional[float] = Field(default=None, description="终点误差相对上一行的经验阶")


class IterationRecord(BaseModel):
    """Picard 迭代记录"""
    index: int
    distance: float
    ratio: Optional[float] = None


class PicardLog(BaseModel):
    """Picard 迭代日志"""
    records: List[IterationRecord] = Field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    last_ratio: Optional[float] = None
    contraction_factor: float = Field(description="(a0+a1)/(a0+a1+η)")
    eta: float
    theta: float
    step: float
    message: str = ""

    @property
    def ratios(self) -> List[float]:
        return [r.ratio for r in self.records if r.ratio is not None]


class BoundCheck(BaseModel):
    """一条不等式 lhs <= rhs + slack 的检查结果"""
    name: str
    lhs: float
    rhs: float
    slack: float = 0.0
    margin: float = Field(description="rhs + slack - lhs，非负即通过")
    passed: bool


class AprioriReport(BaseModel):
    """先验界检查报告"""
    checks: List[BoundCheck] = Field(default_factory=list)
    passed: bool
    picard: PicardLog

    def check(self, name: str) -> BoundCheck:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)


class ContractionReport(BaseModel):
    """随机网格函数对上的压缩比测量"""
    contraction_factor: float = Field(description="q = (a0+a1)/(a0+a1+η)")
    bound: float = Field(description="q (1 + contraction_slack)")
    ratios: List[float] = Field(default_factory=list)
    max_ratio: float
    passed: bool


class VerifyReport(BaseModel):
    """不动点构造的端到端验证报告"""
    picard: PicardLog
    contraction_factor: float
    ratio_bound: float
    max_ratio: Optional[float] = None
    ratios_ok: bool
    contraction: ContractionReport
    apriori: AprioriReport
    agreement: float = Field(description="ϖ(x_picard, x_abm)")
    agreement_bound: float = Field(description="10 max(tol, Richardson 误差)")
    agreement_ok: bool
    passed: bool

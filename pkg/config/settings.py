import logging
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """应用配置类（数值默认值，可被命令行参数和配置文件覆盖）"""

    model_config = SettingsConfigDict(
        env_prefix="FRACFTS_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # 日志配置
    log_level: str = Field(default="INFO", description="日志级别")
    debug: bool = Field(default=False, description="调试模式")

    # Mittag-Leffler 函数求值
    mlf_rel_tol: float = Field(default=1e-13, description="MLF 相对精度")

    # 证书计算网格
    coefficient_grid_points: int = Field(default=200, description="κ(s) 最大值搜索网格点数")
    m_grid_points: int = Field(default=400, description="M 上确界搜索网格点数")
    eta_search_points: int = Field(default=32, description="η 搜索对数网格点数")
    eta_refine_rel_tol: float = Field(default=1e-4, description="η 局部加密相对精度")

    # 数值积分器
    default_step_divisor: int = Field(default=2048, description="默认步长 h = (T - t0) / divisor")
    corrector_iters: int = Field(default=1, description="校正步迭代次数")

    # 不动点迭代
    picard_max_iters: int = Field(default=400, description="Picard 最大迭代次数")
    picard_tol: float = Field(default=1e-10, description="Picard 收敛阈值")

    # 校验松弛量
    contraction_slack: float = Field(default=0.02, description="离散压缩因子乘性松弛")
    ratio_slack: float = Field(default=0.01, description="Picard 比值加性松弛")
    apriori_slack: float = Field(default=1e-6, description="先验界加性松弛")

    # 并发与输出
    max_workers: int = Field(default=4, description="并行扫描/包络运行的线程数")
    csv_significant_digits: int = Field(default=17, description="CSV 数值有效位数")

    # 系统假设的抽样检查
    lipschitz_probe_points: int = Field(default=64, description="Lipschitz 抽样探针数")
    probe_seed: int = Field(default=20240101, description="抽样检查随机种子")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """验证日志级别"""
        level = v.upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"log_level must be a standard logging level, got {v!r}")
        return level

    @field_validator("mlf_rel_tol")
    @classmethod
    def validate_mlf_rel_tol(cls, v):
        """MLF 精度必须在 (0, 1e-3) 内"""
        if not 0.0 < v < 1e-3:
            raise ValueError("mlf_rel_tol must lie in (0, 1e-3)")
        return v

    @field_validator("coefficient_grid_points")
    @classmethod
    def validate_coefficient_grid(cls, v):
        if v < 100:
            raise ValueError("coefficient_grid_points must be >= 100")
        return v

    @field_validator("m_grid_points")
    @classmethod
    def validate_m_grid(cls, v):
        if v < 200:
            raise ValueError("m_grid_points must be >= 200")
        return v

    @field_validator("eta_search_points")
    @classmethod
    def validate_eta_points(cls, v):
        if v < 16:
            raise ValueError("eta_search_points must be >= 16")
        return v

    @field_validator("default_step_divisor")
    @classmethod
    def validate_step_divisor(cls, v):
        if v < 10:
            raise ValueError("default_step_divisor must be >= 10")
        return v

    @field_validator("corrector_iters", "max_workers", "lipschitz_probe_points")
    @classmethod
    def validate_positive_count(cls, v):
        if v < 1:
            raise ValueError("count settings must be >= 1")
        return v

    @field_validator("picard_max_iters")
    @classmethod
    def validate_picard_iters(cls, v):
        if v < 2:
            raise ValueError("picard_max_iters must be >= 2")
        return v

    def default_step(self, t0: float, T: float) -> float:
        """获取默认积分步长"""
        return (T - t0) / self.default_step_divisor


# 全局设置实例
settings = Settings()

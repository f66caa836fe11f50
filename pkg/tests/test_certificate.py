import math
import sys
import os
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest
from scipy import special

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.fracfts.core import certificate as certificate_module
from src.fracfts.core.certificate import (
    certificate_exit_code,
    compute_M,
    compute_certificate,
    compute_coefficients,
    maximize_kappa,
    optimize_eta,
    spectral_norm,
    sweep_table,
)
from src.fracfts.core.config_loader import build_query, build_system, load_run_config
from src.fracfts.core.errors import InconsistentSpecError, SpecValidationError
from src.fracfts.core.specfun import MlfParams, mittag_leffler
from src.fracfts.models.result_models import CertificateStatus
from src.fracfts.models.system import EtaSearch

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def load_example(name):
    config = load_run_config(os.path.join(CONFIG_DIR, name))
    return build_system(config), build_query(config)


def dense_M(beta, theta, T, points=200_001, terms=160):
    """稠密网格上的 M，E_β 用截断级数逐项累加"""
    u = np.linspace(T / (points - 1), T, points - 1)
    x = theta * u ** beta
    log_x = np.log(x)
    series = np.zeros_like(x)
    for b in range(terms):
        series += np.exp(b * log_x - special.gammaln(beta * b + 1.0))
    return float(np.max(u ** beta / series))


class TestCoefficients:
    """系数 a0、a1、a2 测试"""

    def test_spectral_norm(self):
        """测试谱范数"""
        assert spectral_norm([[0.0, -2.0], [1.0, 0.0]]) == pytest.approx(2.0, rel=1e-12)
        assert spectral_norm(np.eye(3)) == pytest.approx(1.0, rel=1e-12)
        assert spectral_norm([[0.0, 3.0], [0.0, 4.0]]) == pytest.approx(5.0, rel=1e-12)

    def test_spectral_norm_rejects_non_finite(self):
        with pytest.raises(ValueError):
            spectral_norm([[1.0, float("nan")], [0.0, 1.0]])

    def test_example1(self):
        spec, _ = load_example("example1.json")
        coefficients = compute_coefficients(spec)
        assert coefficients.a0 == pytest.approx(2.01, abs=1e-12)
        assert coefficients.a1 == pytest.approx(5.01, abs=1e-12)
        assert coefficients.a2 == pytest.approx(1.01, abs=1e-12)

    def test_example2(self):
        spec, _ = load_example("example2.json")
        coefficients = compute_coefficients(spec)
        assert coefficients.a0 == pytest.approx(2.01, abs=1e-12)
        assert coefficients.a1 == pytest.approx(1.01, abs=1e-12)
        assert coefficients.a2 == pytest.approx(1.01, abs=1e-12)

    def test_zero_system(self):
        spec, _ = load_example("zero_system.json")
        coefficients = compute_coefficients(spec)
        assert (coefficients.a0, coefficients.a1, coefficients.a2) == (0.0, 0.0, 0.0)

    def test_grid_points_minimum(self):
        spec, _ = load_example("zero_system.json")
        with pytest.raises(ValueError):
            compute_coefficients(spec, grid_points=50)

    def test_kappa_maximum_is_refined(self):
        """测试 κ 最大值在网格之间被加密求出"""
        assert maximize_kappa(lambda t: 1.0 - (t - 0.3) ** 2, 0.0, 1.0, 200) == pytest.approx(1.0, abs=1e-8)

    def test_negative_kappa(self):
        with pytest.raises(InconsistentSpecError, match="kappa"):
            maximize_kappa(lambda t: t - 0.5, 0.0, 1.0, 200)


class TestSupremumConstant:
    """常数 M 测试"""

    @pytest.mark.parametrize("beta,theta,T", [(0.9, 8.02, 0.385), (0.6, 4.02, 0.49), (0.5, 1.0, 3.0)])
    def test_against_dense_grid(self, beta, theta, T):
        """测试与稠密网格结果一致"""
        M = compute_M(beta, theta, 0.0, T)
        oracle = dense_M(beta, theta, T)
        assert M >= oracle * (1.0 - 1e-9)
        assert M == pytest.approx(oracle, rel=1e-6)

    @pytest.mark.parametrize("beta", [0.2, 0.5, 0.9, 1.0])
    @pytest.mark.parametrize("theta", [0.5, 3.0, 12.0])
    def test_gamma_bound(self, beta, theta):
        """测试 M <= Γ(β+1)/θ"""
        assert compute_M(beta, theta, 0.0, 5.0) <= math.gamma(beta + 1.0) / theta * (1.0 + 1e-12)

    def test_interior_maximum_for_exponential(self):
        """测试 β = 1 时 M = 1/(eθ)"""
        assert compute_M(1.0, 2.0, 0.0, 10.0) == pytest.approx(1.0 / (2.0 * math.e), rel=1e-9)

    def test_empty_interval(self):
        assert compute_M(0.9, 8.02, 1.0, 1.0) == 0.0

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            compute_M(0.9, 8.02, 1.0, 0.5)
        with pytest.raises(ValueError):
            compute_M(0.9, 0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            compute_M(0.9, 1.0, 0.0, 1.0, grid_points=100)


class TestCertificate:
    """证书计算测试"""

    def setup_method(self):
        self.spec1, self.query1 = load_example("example1.json")
        self.spec2, self.query2 = load_example("example2.json")

    def test_example1(self):
        cert = compute_certificate(self.spec1, self.query1)
        assert cert.status == CertificateStatus.CERTIFIED
        assert cert.verdict_D is True
        assert cert.theta == pytest.approx(8.02)
        assert 42.9 <= cert.D <= 44.7
        assert cert.C <= cert.D
        assert certificate_exit_code(cert) == 0

    def test_example2(self):
        cert = compute_certificate(self.spec2, self.query2)
        assert cert.status == CertificateStatus.CERTIFIED
        assert cert.verdict_D is True
        assert 95.1 <= cert.D < 99.0
        assert cert.C <= cert.D

    def test_report_keys(self):
        report = compute_certificate(self.spec1, self.query1).report()
        assert set(report) == {
            "a0", "a1", "a2", "M", "r1", "r2", "C", "D", "eta", "verdict_C", "verdict_D", "status",
        }
        assert report["status"] == "certified"

    def test_formulas(self):
        """测试 r1、r2、C、D 与定义一致"""
        cert = compute_certificate(self.spec1, self.query1)
        gamma_b1 = math.gamma(1.9)
        E = mittag_leffler(MlfParams(0.9), 8.02 * 0.385 ** 0.9)
        assert cert.E == pytest.approx(E, rel=1e-12)
        assert cert.r1 == pytest.approx(cert.M * 8.02 * 7.02 / gamma_b1, rel=1e-12)
        assert cert.r2 == pytest.approx(cert.M * 8.02 * 1.01 / gamma_b1, rel=1e-12)
        assert cert.C == pytest.approx((cert.r1 * E + 1.0) * 0.1 + cert.r2 * E * 0.1, rel=1e-12)
        assert cert.D == pytest.approx((7.02 * E + 1.0) * 0.1 + 1.01 * E * 0.1, rel=1e-12)

    def test_not_certified_is_not_instability(self):
        """测试 ε2 过小时未被证明，且提示不代表不稳定"""
        cert = compute_certificate(self.spec1, replace(self.query1, eps2=10.0))
        assert cert.status == CertificateStatus.NOT_CERTIFIED
        assert cert.verdict_C is False and cert.verdict_D is False
        assert "not a proof of instability" in cert.message
        assert certificate_exit_code(cert) == 1

    def test_zero_system(self):
        """测试零系统：D = ε1"""
        spec, query = load_example("zero_system.json")
        cert = compute_certificate(spec, query)
        assert cert.D == pytest.approx(query.eps1, rel=1e-12)
        assert cert.C == pytest.approx(query.eps1, rel=1e-12)
        assert cert.certified

    def test_linear_in_eps1_without_disturbance(self):
        """测试 ρ = 0 时 C、D 对 ε1 线性"""
        base = replace(self.query1, rho=0.0)
        small = compute_certificate(self.spec1, base)
        large = compute_certificate(self.spec1, replace(base, eps1=0.2))
        assert large.C == pytest.approx(2.0 * small.C, rel=1e-12)
        assert large.D == pytest.approx(2.0 * small.D, rel=1e-12)

    def test_monotone_in_eps1_and_rho(self):
        """测试 C、D 关于 ε1 与 ρ 单调不减"""
        previous = None
        for eps1, rho in [(0.05, 0.0), (0.1, 0.05), (0.1, 0.1), (0.2, 0.2)]:
            cert = compute_certificate(self.spec1, replace(self.query1, eps1=eps1, rho=rho))
            if previous is not None:
                assert cert.C >= previous.C
                assert cert.D >= previous.D
            previous = cert

    def test_monotone_in_disturbance_gain(self):
        """测试 ‖A2‖ 增大时 D 增大"""
        base = compute_certificate(self.spec1, self.query1)
        scaled = compute_certificate(self.spec1.with_changes(A2=2.0 * self.spec1.A2), self.query1)
        assert scaled.a2 > base.a2
        assert scaled.D > base.D

    def test_query_rho_mismatch_warns(self):
        """测试查询 ρ 与系统 ρ 不一致时记录警告"""
        with patch.object(certificate_module.logger, "warning") as mock_warning:
            compute_certificate(self.spec1, replace(self.query1, rho=0.05))
        mock_warning.assert_called_once()
        assert "rho" in mock_warning.call_args[0][0]

    def test_history_outside_eps1_warns(self):
        """测试名义历史超出 ε1 时记录警告，证书照常计算"""
        with patch.object(certificate_module.logger, "warning") as mock_warning:
            cert = compute_certificate(self.spec1, replace(self.query1, eps1=0.05))
        mock_warning.assert_called_once()
        assert "eps1" in mock_warning.call_args[0][0]
        assert cert.D is not None

    def test_short_horizon(self):
        """测试 T → t0 时 C → ε1，D → ε1(1 + (a0+a1)/η) + (a2/η)ρ"""
        cert = compute_certificate(self.spec1, replace(self.query1, T=1e-12))
        assert cert.C == pytest.approx(0.1, rel=1e-6)
        assert cert.D == pytest.approx(0.1 * (1.0 + 7.02) + 1.01 * 0.1, rel=1e-6)

    def test_continuity_at_integer_order(self):
        """测试 β → 1 时证书连续"""
        exact = compute_certificate(self.spec1.with_changes(beta=1.0), self.query1)
        near = compute_certificate(self.spec1.with_changes(beta=1.0 - 1e-9), self.query1)
        assert near.D == pytest.approx(exact.D, rel=1e-6)
        assert near.C == pytest.approx(exact.C, rel=1e-6)

    def test_overflow_is_vacuous(self):
        """测试 E 溢出时给出无意义结论而不是抛异常"""
        cert = compute_certificate(self.spec1, replace(self.query1, T=200.0))
        assert cert.status == CertificateStatus.VACUOUS_OVERFLOW
        assert cert.C is None and cert.D is None
        assert not cert.certified
        assert certificate_exit_code(cert) == 2
        assert cert.report()["C"] is None

    def test_invalid_query(self):
        with pytest.raises(SpecValidationError, match="eps2"):
            compute_certificate(self.spec1, replace(self.query1, eps2=0.05))
        with pytest.raises(SpecValidationError, match="query.eta"):
            compute_certificate(self.spec1, replace(self.query1, eta=-1.0))


class TestEtaSearch:
    """η 搜索测试"""

    def setup_method(self):
        self.spec, self.query = load_example("example1.json")

    def _search_query(self, eta_min, eta_max, points=32):
        return replace(self.query, eta=None, search=EtaSearch(eta_min, eta_max, points))

    def test_dominates_fixed_eta(self):
        """测试搜索结果不劣于 η = 1"""
        fixed = compute_certificate(self.spec, self.query)
        best = optimize_eta(self.spec, self._search_query(0.1, 10.0)).certificate
        assert best.D <= fixed.D * (1.0 + 1e-12)
        assert best.certified

    def test_against_dense_eta_grid(self):
        """测试不劣于 10⁴ 点 η 网格上的最小 D"""
        best = optimize_eta(self.spec, self._search_query(0.1, 10.0)).certificate
        params = MlfParams(0.9)
        T_beta = 0.385 ** 0.9
        oracle = math.inf
        for eta in np.geomspace(0.1, 10.0, 10_000):
            E = mittag_leffler(params, (7.02 + eta) * T_beta)
            oracle = min(oracle, (7.02 / eta * E + 1.0) * 0.1 + (1.01 / eta) * E * 0.1)
        assert best.D <= oracle * (1.0 + 1e-6)

    def test_degenerate_range(self):
        """测试 [1, 1] 与固定 η = 1 完全一致"""
        fixed = compute_certificate(self.spec, self.query)
        sweep = optimize_eta(self.spec, self._search_query(1.0, 1.0))
        assert sweep.certificate.D == fixed.D
        assert sweep.certificate.C == fixed.C
        assert len(sweep.rows) == 1

    def test_compute_certificate_delegates(self):
        query = self._search_query(0.5, 2.0, 16)
        assert compute_certificate(self.spec, query).D == optimize_eta(self.spec, query).certificate.D

    def test_entire_range_vacuous(self):
        """测试整个区间都溢出"""
        query = replace(self._search_query(0.1, 10.0, 16), T=200.0)
        cert = optimize_eta(self.spec, query).certificate
        assert cert.status == CertificateStatus.VACUOUS_OVERFLOW
        assert cert.message == "bound vacuous for entire range"

    def test_sweep_table(self):
        """测试扫描表行数与最优行"""
        sweep = sweep_table(self.spec, self.query, 0.1, 10.0, 20)
        assert len(sweep.rows) == 20
        assert sweep.rows[0].eta == pytest.approx(0.1)
        assert sweep.rows[-1].eta == pytest.approx(10.0)
        assert sweep.certificate.D <= min(row.D for row in sweep.rows) * (1.0 + 1e-12)
        assert sweep.best_row().eta == sweep.certificate.eta_used

    def test_sweep_needs_two_points(self):
        with pytest.raises(SpecValidationError):
            sweep_table(self.spec, self.query, 0.1, 10.0, 1)

    def test_optimize_needs_search(self):
        with pytest.raises(SpecValidationError):
            optimize_eta(self.spec, self.query)

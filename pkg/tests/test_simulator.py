import sys
import os

import numpy as np
import pytest

# 添加项目根目录到Python路径
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.fracfts.core.config_loader import build_query, build_system, load_run_config
from src.fracfts.core.errors import InconsistentSpecError, SpecValidationError
from src.fracfts.core.registry import ConstantDelay, ConstantKappa, ConstantVector, ZeroNonlinearity
from src.fracfts.core.simulator import (
    convergence_study,
    disturbance_envelope_run,
    integrate,
    richardson_error,
    sample_disturbance,
    sample_history,
)
from src.fracfts.core.specfun import MlfParams, mittag_leffler_array
from src.fracfts.models.system import SystemSpec

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def load_example(name):
    config = load_run_config(os.path.join(CONFIG_DIR, name))
    return build_system(config), build_query(config)


def scalar_spec(beta, theta, T=1.0):
    """D^β x = θ x，x(0) = 1，精确解 E_β(θ t^β)"""
    return SystemSpec(
        beta=beta,
        t0=0.0,
        T=T,
        A0=[[theta]],
        A1=[[0.0]],
        A2=[[0.0]],
        kappa=ConstantKappa(0.0),
        f=ZeroNonlinearity(1),
        g=ConstantDelay(0.0),
        g_max=0.0,
        nu=ConstantVector((1.0,)),
        d=ConstantVector((0.0,)),
        rho=0.0,
    )


def exact_solution(beta, theta):
    params = MlfParams(beta)
    return lambda t: mittag_leffler_array(params, theta * np.asarray(t) ** beta)


class TestIntegrate:
    """预测-校正积分器测试"""

    def setup_method(self):
        self.spec1, self.query1 = load_example("example1.json")

    def test_zero_system(self):
        """测试零系统的解恒为零"""
        spec, _ = load_example("zero_system.json")
        trajectory = integrate(spec)
        assert np.all(trajectory.states == 0.0)
        assert trajectory.sup_norm == 0.0
        assert not trajectory.blow_up

    def test_history_segment(self):
        """测试历史段等于 ν，且网格严格递增"""
        trajectory = integrate(self.spec1)
        history = trajectory.states[: trajectory.history_count]
        assert trajectory.history_count > 0
        assert trajectory.times[0] == pytest.approx(-0.1)
        assert np.allclose(history, [0.0, 0.09])
        assert np.allclose(trajectory.solution_states[0], [0.0, 0.09])
        assert np.all(np.diff(trajectory.times) > 0)
        assert trajectory.solution_times[-1] == pytest.approx(0.385)
        assert len(trajectory.times) == len(trajectory.states)

    def test_default_step(self):
        trajectory = integrate(self.spec1)
        assert trajectory.step == pytest.approx(0.385 / 2048)
        assert trajectory.corrector_iters == 1
        assert trajectory.summary().points == len(trajectory.times)

    @pytest.mark.parametrize("name", ["example1.json", "example2.json"])
    def test_examples_nominal_within_eps2(self, name):
        """测试名义轨迹不超过 ε2，步长减半结果一致"""
        spec, query = load_example(name)
        coarse = integrate(spec)
        fine = integrate(spec, coarse.step / 2.0)
        assert not coarse.blow_up and not fine.blow_up
        assert coarse.sup_norm <= query.eps2
        assert coarse.sup_norm == pytest.approx(fine.sup_norm, rel=1e-3)

    def test_step_too_large(self):
        """测试步长超过 (T - t0)/10 被拒绝"""
        with pytest.raises(SpecValidationError, match="solver.step"):
            integrate(self.spec1, 0.1)
        with pytest.raises(SpecValidationError):
            integrate(self.spec1, -0.01)

    def test_invalid_corrector_iterations(self):
        """测试校正次数为 0 被拒绝而不是回退到默认值"""
        with pytest.raises(SpecValidationError, match="corrector_iters"):
            integrate(self.spec1, None, 0)

    def test_delay_outside_history(self):
        """测试时滞超出 g_max"""
        spec = self.spec1.with_changes(g=lambda t: 0.5)
        with pytest.raises(InconsistentSpecError):
            integrate(spec)

    def test_blow_up_is_flagged(self):
        """测试发散时截断并标记"""
        spec = scalar_spec(1.0, 1e4)
        trajectory = integrate(spec, 0.01)
        assert trajectory.blow_up
        assert 0.0 < trajectory.blow_up_time <= 1.0
        assert len(trajectory.solution_times) < 101
        assert np.all(np.isfinite(trajectory.states))

    def test_more_corrector_iterations(self):
        spec = scalar_spec(0.8, 1.0)
        one = integrate(spec, 1.0 / 128)
        three = integrate(spec, 1.0 / 128, corrector_iters=3)
        exact = exact_solution(0.8, 1.0)(three.solution_times)
        assert three.corrector_iters == 3
        assert np.max(np.abs(three.solution_states[:, 0] - exact)) < 5e-3
        assert np.max(np.abs(one.solution_states[:, 0] - exact)) < 5e-3


class TestConvergence:
    """收敛阶测试"""

    steps = [1.0 / 64, 1.0 / 128, 1.0 / 256]

    def test_order_beta_09(self):
        """测试 β = 0.9：网格最大误差与终点误差的经验阶"""
        rows = convergence_study(scalar_spec(0.9, 1.0), self.steps, exact_solution(0.9, 1.0))
        assert rows[0].order is None
        for row in rows[1:]:
            assert row.order >= 1.65
            assert row.final_order >= 1.65

    def test_order_beta_06(self):
        """测试 β = 0.6：终点误差阶约 1+β，网格最大误差阶约 2β"""
        rows = convergence_study(scalar_spec(0.6, 1.0), self.steps, exact_solution(0.6, 1.0))
        for row in rows[1:]:
            assert row.final_order >= 1.35
            assert row.order >= 0.95

    def test_order_integer(self):
        """测试 β = 1 时为二阶"""
        rows = convergence_study(scalar_spec(1.0, 1.0), self.steps, exact_solution(1.0, 1.0))
        for row in rows[1:]:
            assert row.order >= 1.9
        assert rows[-1].max_error < 1e-3

    def test_self_reference(self):
        """测试无精确解时用更细网格作参考"""
        rows = convergence_study(scalar_spec(0.9, 1.0), self.steps)
        assert rows[0].max_error > rows[1].max_error > rows[2].max_error

    def test_zero_system_has_no_order(self):
        spec, _ = load_example("zero_system.json")
        rows = convergence_study(spec, [0.05, 0.025, 0.0125])
        assert all(row.max_error == 0.0 for row in rows)
        assert all(row.order is None for row in rows)

    def test_steps_must_decrease(self):
        with pytest.raises(ValueError):
            convergence_study(scalar_spec(0.9, 1.0), [0.01, 0.02, 0.005])

    def test_richardson_error(self):
        spec, _ = load_example("example1.json")
        error = richardson_error(spec, 0.385 / 256)
        assert 0.0 < error < 1e-3


class TestSampling:
    """随机扰动与初始历史测试"""

    def test_disturbance_on_sphere(self):
        """测试随机扰动的范数恒为 ρ"""
        rng = np.random.default_rng(0)
        for _ in range(5):
            d = sample_disturbance(rng, 2, 0.1)
            norms = [np.linalg.norm(d(t)) for t in np.linspace(0.0, 1.0, 50)]
            assert np.allclose(norms, 0.1)

    def test_zero_rho_gives_zero_disturbance(self):
        d = sample_disturbance(np.random.default_rng(1), 3, 0.0)
        assert np.all(d(0.3) == 0.0)

    def test_history_scaled_to_eps1(self):
        """测试随机初始历史在窗口上的 sup‖ν‖ 恰为 ε1"""
        rng = np.random.default_rng(2)
        for window in [(-1.0, 0.0), (-0.1, 0.0), (0.5, 2.5)]:
            for _ in range(10):
                nu = sample_history(rng, 3, 0.1, window)
                norms = [np.linalg.norm(nu(s)) for s in np.linspace(window[0], window[1], 4001)]
                assert max(norms) <= 0.1 * (1.0 + 1e-12)
                assert max(norms) >= 0.1 * (1.0 - 1e-4)

    def test_history_without_delay(self):
        """测试窗口退化为一点时 ‖ν(t0)‖ = ε1"""
        nu = sample_history(np.random.default_rng(5), 2, 0.3, (0.0, 0.0))
        assert np.linalg.norm(nu(0.0)) == pytest.approx(0.3, rel=1e-12)


class TestEnvelope:
    """扰动包络检查测试"""

    @pytest.mark.parametrize("name", ["example1.json", "example2.json"])
    def test_examples_within_eps2(self, name):
        """测试两个示例的所有运行都不超过 ε2"""
        spec, query = load_example(name)
        report = disturbance_envelope_run(spec, query, 32, 7)
        assert len(report.runs) == 32 + 2 * spec.p
        assert report.failures == 0
        assert report.all_within_eps2
        assert report.max_sup_norm <= query.eps2
        assert sum(1 for run in report.runs if run.kind == "extreme") == 4

    def test_deterministic(self):
        """测试相同种子结果相同"""
        spec, query = load_example("example1.json")
        first = disturbance_envelope_run(spec, query, 4, 11, step=0.385 / 256)
        second = disturbance_envelope_run(spec, query, 4, 11, step=0.385 / 256)
        assert first.model_dump() == second.model_dump()

    def test_zero_system(self):
        """测试零系统：扰动为零，每条轨迹停在自身初值"""
        spec, query = load_example("zero_system.json")
        report = disturbance_envelope_run(spec, query, 4, 7)
        assert report.all_within_eps2
        assert report.max_sup_norm <= query.eps1 * (1.0 + 1e-12)

    def test_run_errors_are_collected(self):
        """测试单次运行失败被记录而不中断"""
        spec, query = load_example("example1.json")
        bad = spec.with_changes(g=lambda t: 0.5)
        report = disturbance_envelope_run(bad, query, 2, 7, step=0.385 / 64)
        assert report.failures == len(report.runs)
        assert not report.all_within_eps2
        assert all(run.error for run in report.runs)

    def test_samples_must_be_positive(self):
        spec, query = load_example("zero_system.json")
        with pytest.raises(ValueError):
            disturbance_envelope_run(spec, query, 0, 7)

"""两尺度 Lorenz 96 系统测试"""

import numpy as np
import pytest

from src.dynamics.base import FullState, L96Config
from src.dynamics.integrators import euler_step, get_scheme, rk2_step, rk4_step
from src.dynamics.lorenz96 import (
    full_rhs,
    generate_dataset,
    initial_state,
    packed_rhs,
    steps_per_interval,
    truncated_rhs,
)
from src.processors.error_handler import BlowUpError, ConfigurationError, ContractViolationError


def _integrate(rhs, s, dt, total):
    """定步长 RK4 积分到 total"""
    for _ in range(int(round(total / dt))):
        s = rk4_step(rhs, s, dt)
    return s


def _reference_rhs(cfg: L96Config, s: FullState) -> FullState:
    """逐元素循环实现的全系统向量场"""
    K, J = cfg.K, cfg.J
    x, y = s.x, s.y
    dx = np.empty(K)
    for k in range(K):
        dx[k] = x[k - 1] * (x[(k + 1) % K] - x[k - 2]) - x[k] + cfg.F + cfg.h_x / J * y[:, k].sum()
    # y 按 j + J*k 展开成环
    flat = y.ravel(order="F")
    n = flat.size
    dflat = np.empty(n)
    for i in range(n):
        k = i // J
        dflat[i] = (flat[(i + 1) % n] * (flat[i - 1] - flat[(i + 2) % n]) - flat[i] + cfg.h_y * x[k]) / cfg.eps
    return FullState(x=dx, y=dflat.reshape((J, K), order="F"))


class TestVectorField:
    """向量场测试"""

    def test_truncated_rhs_matches_loop(self):
        """测试截断向量场与循环实现一致"""
        rng = np.random.default_rng(0)
        x = rng.normal(size=9)
        expected = np.array([x[k - 1] * (x[(k + 1) % 9] - x[k - 2]) - x[k] + 10.0 for k in range(9)])
        np.testing.assert_allclose(truncated_rhs(x, 10.0), expected, rtol=1e-14)

    def test_truncated_rhs_batched(self):
        """测试前导批维度逐行计算"""
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 6))
        out = truncated_rhs(x, 8.0)
        for i in range(3):
            np.testing.assert_array_equal(out[i], truncated_rhs(x[i], 8.0))

    def test_full_rhs_matches_loop(self):
        """测试全系统向量场与循环实现一致"""
        cfg = L96Config(K=5, J=3)
        s = initial_state(cfg)
        got = full_rhs(cfg, s)
        ref = _reference_rhs(cfg, s)
        np.testing.assert_allclose(got.x, ref.x, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(got.y, ref.y, rtol=1e-12, atol=1e-12)

    def test_translation_equivariance(self):
        """测试空间平移等变性 f(shift(s)) = shift(f(s))"""
        cfg = L96Config(K=6, J=4)
        s = FullState(x=np.random.default_rng(2).normal(size=6), y=np.random.default_rng(3).normal(size=(4, 6)))
        for k in (1, 2, 5):
            lhs = full_rhs(cfg, s.shift(k))
            rhs = full_rhs(cfg, s).shift(k)
            np.testing.assert_allclose(lhs.x, rhs.x, rtol=1e-13, atol=1e-13)
            np.testing.assert_allclose(lhs.y, rhs.y, rtol=1e-13, atol=1e-13)

    def test_full_rhs_dimension_mismatch(self):
        """测试状态维度与配置不符"""
        cfg = L96Config(K=6, J=4)
        s = FullState(x=np.zeros(5), y=np.zeros((4, 5)))
        with pytest.raises(ContractViolationError):
            full_rhs(cfg, s)

    def test_full_state_validation(self):
        """测试 FullState 拒绝维度不一致和非有限值"""
        with pytest.raises(ContractViolationError):
            FullState(x=np.zeros(4), y=np.zeros((3, 5)))
        with pytest.raises(ContractViolationError):
            FullState(x=np.array([0.0, np.nan, 0.0, 0.0]), y=np.zeros((2, 4)))

    def test_pack_unpack(self):
        """测试打包和还原"""
        s = initial_state(L96Config(K=4, J=3), trajectory=2)
        back = FullState.unpack(s.pack(), 4, 3)
        np.testing.assert_array_equal(back.x, s.x)
        np.testing.assert_array_equal(back.y, s.y)


class TestIntegrators:
    """单步格式测试"""

    def test_rk4_linear_decay(self):
        """测试 RK4 对 dx/dt = -x 的四阶精度"""
        rhs = lambda v: -v  # noqa: E731
        dt = 0.1
        x = rk4_step(rhs, np.array([1.0]), dt)
        taylor = 1 - dt + dt**2 / 2 - dt**3 / 6 + dt**4 / 24
        assert x[0] == pytest.approx(taylor, abs=1e-15)

    def test_rk4_exponential_step_halving(self):
        """测试 dx/dt = λx 上单步误差 O(dt⁵)、全局误差 O(dt⁴)"""
        lam = -1.3
        rhs = lambda v: lam * v  # noqa: E731
        x0 = np.array([1.0])

        local = [abs(rk4_step(rhs, x0, dt)[0] - np.exp(lam * dt)) for dt in (0.1, 0.05)]
        assert np.log2(local[0] / local[1]) == pytest.approx(5.0, abs=0.3)

        glob = [abs(_integrate(rhs, x0, dt, 1.0)[0] - np.exp(lam)) for dt in (0.1, 0.05)]
        assert np.log2(glob[0] / glob[1]) == pytest.approx(4.0, abs=0.3)

    def test_rk4_full_system_step_halving(self):
        """测试两尺度全系统在步长减半时全局误差按四阶衰减"""
        cfg = L96Config(K=8, J=4, seed=3)
        rhs = packed_rhs(cfg)
        s0 = _integrate(rhs, initial_state(cfg).pack(), 0.005, 2.0)
        total = 0.1
        reference = _integrate(rhs, s0, 0.005 / 64, total)
        errors = [np.max(np.abs(_integrate(rhs, s0, dt, total) - reference)) for dt in (0.005, 0.0025)]
        assert errors[1] > 1e-12
        assert np.log2(errors[0] / errors[1]) == pytest.approx(4.0, abs=0.3)

    def test_rk4_zero_step(self):
        """测试步长为 0 时原样返回"""
        s = np.array([1.0, 2.0])
        assert rk4_step(lambda v: v, s, 0.0) is s

    def test_rk4_negative_step(self):
        """测试负步长被拒绝"""
        with pytest.raises(ContractViolationError):
            rk4_step(lambda v: v, np.ones(2), -0.1)

    def test_rk4_blowup_detection(self):
        """测试给出步序号时检查发散"""
        with pytest.raises(BlowUpError) as exc_info:
            rk4_step(lambda v: 1e9 * np.ones_like(v), np.zeros(2), 1.0, step=7, threshold=1e6)
        assert exc_info.value.step == 7
        assert exc_info.value.details["step"] == 7

    def test_low_order_schemes(self):
        """测试 Euler 和 RK2 格式"""
        rhs = lambda v: -v  # noqa: E731
        assert euler_step(rhs, np.array([1.0]), 0.1)[0] == pytest.approx(0.9)
        assert rk2_step(rhs, np.array([1.0]), 0.1)[0] == pytest.approx(1 - 0.1 + 0.005)

    def test_get_scheme(self):
        """测试按名称获取格式"""
        assert get_scheme("rk4") is rk4_step
        with pytest.raises(ConfigurationError):
            get_scheme("rk45")


class TestDatasetGeneration:
    """真值数据生成测试"""

    def test_row_count(self, small_l96):
        """测试行数为 (T - spinup)/δ + 1"""
        series = generate_dataset(small_l96, small_l96.spinup + 1.0, 0.05)
        assert series.x_obs.shape == (21, small_l96.K)
        assert series.delta == 0.05
        assert series.z is None

    def test_deterministic_by_seed(self, small_l96):
        """测试相同种子结果逐位相同，不同轨道编号结果不同"""
        a = generate_dataset(small_l96, small_l96.spinup + 0.5, 0.05)
        b = generate_dataset(small_l96, small_l96.spinup + 0.5, 0.05)
        c = generate_dataset(small_l96, small_l96.spinup + 0.5, 0.05, trajectory=1)
        np.testing.assert_array_equal(a.x_obs, b.x_obs)
        assert not np.array_equal(a.x_obs, c.x_obs)

    def test_delta_not_multiple_of_dt(self, small_l96):
        """测试 δ 不是 dt 的整数倍"""
        with pytest.raises(ConfigurationError):
            generate_dataset(small_l96, small_l96.spinup + 1.0, 0.0123)

    def test_total_time_shorter_than_spinup(self, small_l96):
        """测试总时长小于 spinup"""
        with pytest.raises(ConfigurationError):
            generate_dataset(small_l96, small_l96.spinup / 2, 0.05)

    def test_blowup_reported(self):
        """测试发散阈值过小时报告发散步"""
        cfg = L96Config(K=6, J=2, dt=0.01, spinup=0.0)
        with pytest.raises(BlowUpError) as exc_info:
            generate_dataset(cfg, 1.0, 0.05, threshold=1e-3)
        assert exc_info.value.step >= 1

    def test_steps_per_interval(self):
        """测试步数换算"""
        assert steps_per_interval(0.05, 0.001) == 50
        assert steps_per_interval(10.0, 0.05, what="horizon") == 200
        with pytest.raises(ConfigurationError):
            steps_per_interval(0.0015, 0.001)

    @pytest.mark.slow
    def test_climatology_desk_scale(self):
        """测试默认参数下 x₁ 的均值和标准差（10⁵ 个观测，δ=0.01）"""
        cfg = L96Config()
        series = generate_dataset(cfg, cfg.spinup + (100_000 - 1) * 0.01, 0.01)
        x1 = series.x_obs[:, 0]
        assert abs(x1.mean() - 2.4506) < 0.1
        assert abs(x1.std(ddof=1) - 3.5230) < 0.15

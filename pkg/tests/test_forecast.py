"""集合预报实验测试"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pytest

from src.core.forecast import (
    ForecastConfig,
    ForecastScore,
    NarmaxForecaster,
    PolyarForecaster,
    anomaly_correlation,
    climatology,
    crossing_lead,
    member_seeds,
    run_forecast,
    truth_segments,
)
from src.core.narmax import NarmaxParams, NarmaxStructure, fit, simulate
from src.core.polyar import PolyarParams
from src.dynamics.base import EnsembleRun
from src.processors.error_handler import BlowUpError, ConfigurationError, ContractViolationError


@dataclass
class _ConstantModel:
    """每个成员都输出固定状态的假模型"""

    state: np.ndarray
    dead_members: Sequence[int] = ()
    name: str = "constant"
    history_length: int = 2
    delta: float = 0.05

    def ensemble(self, window, n_steps, member_seeds):
        n = len(member_seeds)
        x = np.broadcast_to(self.state, (n, n_steps, self.state.size)).copy()
        alive = np.ones(n, dtype=bool)
        steps = {}
        for m in self.dead_members:
            alive[m] = False
            x[m] = np.nan
            steps[m] = 3
        return EnsembleRun(x=x, alive=alive, blowup_steps=steps)


@pytest.fixture
def perfect_model(small_dataset, small_map):
    """无噪声的 NARX 模型及其生成的真值"""
    st = NarmaxStructure(p=0, r=1, s=0, q=0, d_x=1, d_R=0)
    th = NarmaxParams(mu=0.5, a=[], b=[[-0.2]], c=[], d=[], sigma2=1e-300)
    truth = simulate(st, th, small_map, small_dataset.head(2), 60, seed=0).x_obs
    return NarmaxForecaster(structure=st, params=th, reduced=small_map), truth


@pytest.fixture
def fitted_model(small_series, small_map):
    """在 Lorenz 观测上拟合的 NARX 模型"""
    st = NarmaxStructure(p=1, r=1, d_x=1)
    return NarmaxForecaster(structure=st, params=fit(st, small_series).params, reduced=small_map)


class TestAnomalyCorrelation:
    """距平相关测试"""

    def test_identical_is_one(self):
        """测试预报等于真值时为 1"""
        t = np.random.default_rng(0).normal(size=(5, 8))
        np.testing.assert_allclose(anomaly_correlation(t, t, np.zeros(8)), np.ones(5))

    def test_opposite_is_minus_one(self):
        """测试距平反号时为 -1"""
        clim = np.linspace(0, 1, 8)
        t = clim + np.random.default_rng(1).normal(size=8)
        assert anomaly_correlation(2 * clim - t, t, clim) == pytest.approx(-1.0)

    def test_climatology_forecast_is_zero(self):
        """测试以气候平均为预报时距平为 0，结果为 0"""
        clim = np.arange(8.0)
        t = np.random.default_rng(2).normal(size=8)
        assert anomaly_correlation(clim, t, clim) == 0.0

    def test_climatology(self):
        """测试气候平均为各分量时间均值"""
        x = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(climatology(x), [4.5, 5.5, 6.5])


class TestSegments:
    """真值切片测试"""

    def test_layout(self):
        """测试片段不重叠且窗口紧接在预报之前"""
        truth = np.arange(40.0)[:, None] * np.ones((1, 3))
        segs = truth_segments(truth, 3, 2, 5)
        assert len(segs) == 3
        for i, (window, future) in enumerate(segs):
            assert window.shape == (2, 3) and future.shape == (5, 3)
            assert window[-1, 0] + 1 == future[0, 0]
            assert window[0, 0] == i * 7

    def test_shared_start_for_different_history(self):
        """测试给定段长时不同 n₀ 的预报起点相同"""
        truth = np.arange(60.0)[:, None]
        short = truth_segments(truth, 3, 2, 5, segment_rows=9)
        long = truth_segments(truth, 3, 4, 5, segment_rows=9)
        for (w_s, f_s), (w_l, f_l) in zip(short, long):
            np.testing.assert_array_equal(f_s, f_l)
            np.testing.assert_array_equal(w_s, w_l[-2:])

    def test_errors(self):
        """测试 n₀ 过小、段长不足和真值不足"""
        truth = np.zeros((20, 2))
        with pytest.raises(ContractViolationError):
            truth_segments(truth, 1, 1, 5)
        with pytest.raises(ContractViolationError):
            truth_segments(truth, 1, 3, 5, segment_rows=6)
        with pytest.raises(ContractViolationError):
            truth_segments(truth, 3, 2, 5)

    def test_member_seeds(self):
        """测试成员种子由 (主种子, 片段, 成员) 唯一确定"""
        a = member_seeds(1, 0, 3)
        b = member_seeds(1, 0, 3)
        c = member_seeds(1, 1, 3)
        assert [s.entropy for s in a] == [s.entropy for s in b]
        draw = lambda s: np.random.default_rng(s).random()  # noqa: E731
        assert len({draw(s) for s in a + c}) == 6


class TestRunForecast:
    """集合预报测试"""

    def test_perfect_model(self, perfect_model):
        """测试用生成真值的模型本身预报时 RMSE ≈ 0、ANCR ≈ 1"""
        forecaster, truth = perfect_model
        cfg = ForecastConfig(n_segments=3, horizon=0.5, ensemble_size=1, seed=1)
        score = run_forecast(forecaster, truth, cfg, climatology(truth))
        assert score.leads.shape == (11,)
        assert score.leads[-1] == pytest.approx(0.5)
        assert np.max(score.rmse) < 1e-8
        assert np.min(score.ancr) > 1.0 - 1e-8
        assert score.n_segments == 3
        assert crossing_lead(score) is None

    def test_climatology_model(self, small_dataset):
        """测试输出气候平均的模型 ANCR 在正时效上为 0"""
        truth = small_dataset.x_obs
        clim = climatology(truth)
        cfg = ForecastConfig(n_segments=4, horizon=0.5, ensemble_size=2)
        score = run_forecast(_ConstantModel(state=clim), truth, cfg, clim)
        assert score.rmse[0] == 0.0
        assert score.ancr[0] == pytest.approx(1.0)
        np.testing.assert_array_equal(score.ancr[1:], 0.0)
        assert crossing_lead(score) == pytest.approx(0.05)

    def test_blown_members_excluded(self, small_dataset):
        """测试发散成员在允许比例内被剔除"""
        truth = small_dataset.x_obs
        clim = climatology(truth)
        cfg = ForecastConfig(n_segments=3, horizon=0.5, ensemble_size=2, max_blowup_fraction=0.5)
        score = run_forecast(_ConstantModel(state=clim, dead_members=[0]), truth, cfg, clim)
        assert score.n_excluded == 3
        assert score.excluded == {0: [0], 1: [0], 2: [0]}
        assert np.all(np.isfinite(score.rmse))

    def test_blowup_over_budget(self, small_dataset):
        """测试发散成员超过允许比例时报错"""
        truth = small_dataset.x_obs
        cfg = ForecastConfig(n_segments=2, horizon=0.5, ensemble_size=2)
        with pytest.raises(BlowUpError) as exc_info:
            run_forecast(_ConstantModel(state=truth[0], dead_members=[0, 1]), truth, cfg, truth[0])
        assert exc_info.value.step == 3

    def test_worker_count_does_not_change_result(self, small_series, small_map):
        """测试线程数不影响结果"""
        st = NarmaxStructure(p=1, r=1, d_x=1)
        th = NarmaxParams(mu=0.3, a=[0.8], b=[[-0.1]], c=[], d=[], sigma2=0.05)
        model = NarmaxForecaster(structure=st, params=th, reduced=small_map)
        cfg = ForecastConfig(n_segments=5, horizon=0.5, ensemble_size=3, seed=2)
        truth = small_series.x_obs
        clim = climatology(truth)
        a = run_forecast(model, truth, cfg, clim, max_workers=1)
        b = run_forecast(model, truth, cfg, clim, max_workers=4)
        np.testing.assert_array_equal(a.rmse, b.rmse)
        np.testing.assert_array_equal(a.ancr, b.ancr)

    def test_ensemble_mean_beats_single_members(self, fitted_model, small_series):
        """测试集合平均的 RMSE 不大于单个成员 RMSE 的平均"""
        truth = small_series.x_obs
        n_steps, n_members, seed = 40, 20, 5
        segments = truth_segments(truth, 10, fitted_model.history_length, n_steps)
        mean_err, member_err = [], []
        for i, (window, future) in enumerate(segments):
            run = fitted_model.ensemble(window, n_steps, member_seeds(seed, i, n_members))
            assert run.n_excluded == 0
            mean_err.append((run.ensemble_mean() - future) ** 2)
            member_err.append((run.x - future[None]) ** 2)
        mean_rmse = np.sqrt(np.mean(mean_err, axis=(0, 2)))
        member_rmse = np.sqrt(np.mean(member_err, axis=(0, 3)))
        assert member_rmse.shape == (n_members, n_steps)
        assert mean_rmse.mean() <= member_rmse.mean(axis=0).mean() * 1.02

        cfg = ForecastConfig(n_segments=10, horizon=2.0, ensemble_size=n_members, seed=seed)
        score = run_forecast(fitted_model, truth, cfg, climatology(truth))
        np.testing.assert_allclose(score.rmse[1:], mean_rmse, rtol=1e-12)

    def test_larger_ensemble_does_not_hurt(self, fitted_model, small_series):
        """测试 N_ens 从 1 增加到 20 时平均 RMSE 不增大"""
        truth = small_series.x_obs
        clim = climatology(truth)
        scores = {
            n: run_forecast(
                fitted_model, truth, ForecastConfig(n_segments=10, horizon=2.0, ensemble_size=n, seed=8), clim
            )
            for n in (1, 5, 20)
        }
        assert scores[20].rmse[1:].mean() <= scores[1].rmse[1:].mean() * 1.02
        assert scores[5].rmse[1:].mean() <= scores[1].rmse[1:].mean() * 1.05

    def test_polyar_forecaster(self, small_dataset, small_map):
        """测试 POLYAR 适配器"""
        params = PolyarParams(poly=[0.2, -0.1], phi=0.9, sigma=0.1, delta=0.05)
        model = PolyarForecaster(params=params, reduced=small_map)
        assert model.history_length == 2
        cfg = ForecastConfig(n_segments=3, horizon=1.0, ensemble_size=2)
        truth = small_dataset.x_obs
        score = run_forecast(model, truth, cfg, climatology(truth), segment_rows=25)
        assert score.rmse.shape == (21,)
        assert score.rmse[0] == 0.0
        assert score.rmse[-1] > score.rmse[1]

    def test_horizon_not_multiple_of_delta(self, perfect_model):
        """测试预报时长不是 δ 的整数倍"""
        forecaster, truth = perfect_model
        with pytest.raises(ConfigurationError):
            run_forecast(forecaster, truth, ForecastConfig(n_segments=1, horizon=0.123), climatology(truth))


class TestScore:
    """ForecastScore 测试"""

    def test_frame_and_summary(self):
        """测试表格列和摘要中的 ANCR 跌破时效"""
        score = ForecastScore(
            model="narmax",
            ensemble_size=5,
            leads=np.array([0.0, 0.1, 0.2]),
            rmse=np.array([0.0, 0.5, 1.0]),
            ancr=np.array([1.0, 0.7, 0.4]),
            n_segments=10,
            n_members=50,
        )
        assert list(score.to_frame().columns) == ["lead", "rmse", "ancr"]
        summary = score.summary()
        assert summary["ancr_crossing"] == pytest.approx(0.2)
        assert summary["n_excluded"] == 0
        assert crossing_lead(score, level=0.8) == pytest.approx(0.1)

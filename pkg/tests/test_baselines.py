"""Equal weight, the mean-variance family, and reference HRP."""

from datetime import date, timedelta

import numpy as np
import pytest

from hsp.baselines import (
    MvObjective,
    equal_weight,
    hrp_correlation,
    mean_variance,
    project_capped_simplex,
)
from hsp.data import ReturnPanel
from hsp.errors import (
    DegenerateSeriesError,
    InfeasibleError,
    InsufficientDataError,
    ValidationError,
)

from fixtures import HRP_WEIGHTS_5, RETURNS_5
from oracles import min_vol_closed_form


def make_panel(columns):
    t = len(next(iter(columns.values())))
    dates = tuple(date(2024, 1, 1) + timedelta(days=i) for i in range(t))
    return ReturnPanel(
        dates=dates,
        series={k: np.asarray(v, dtype=float) for k, v in columns.items()},
        kinds={k: "asset" for k in columns},
    )


def sample_cov(panel, ids):
    return np.cov(panel.matrix(tuple(ids)).T, ddof=1)


class TestEqualWeight:
    def test_four_assets(self):
        np.testing.assert_array_equal(equal_weight(4).weights, np.full(4, 0.25))

    def test_single_asset(self):
        np.testing.assert_array_equal(equal_weight(1).weights, [1.0])

    def test_fourteen_assets(self):
        w = equal_weight(14).weights
        np.testing.assert_allclose(w, np.full(14, 1.0 / 14.0), rtol=0, atol=1e-15)
        assert w[0] == pytest.approx(0.0714, abs=5e-5)

    def test_empty_universe(self):
        with pytest.raises(ValidationError):
            equal_weight(0)

    def test_id_count_mismatch(self):
        with pytest.raises(ValidationError):
            equal_weight(3, ids=("a", "b"))

    def test_custom_ids(self):
        wv = equal_weight(2, ids=("x", "y"))
        assert wv.as_dict() == {"x": 0.5, "y": 0.5}


class TestProjection:
    def test_already_feasible_point_fixed(self):
        w = np.array([0.3, 0.3, 0.4])
        np.testing.assert_allclose(
            project_capped_simplex(w, 1.0), w, rtol=0, atol=1e-12
        )

    def test_projection_idempotent_and_feasible(self):
        rng = np.random.default_rng(60)
        for _ in range(25):
            v = rng.normal(size=6) * 3
            p = project_capped_simplex(v, 0.4)
            assert p.sum() == pytest.approx(1.0, abs=1e-9)
            assert p.min() >= -1e-12 and p.max() <= 0.4 + 1e-12
            np.testing.assert_allclose(
                project_capped_simplex(p, 0.4), p, rtol=0, atol=1e-9
            )

    def test_projection_is_nearest_point(self):
        # any other feasible point must be farther from v
        rng = np.random.default_rng(61)
        v = rng.normal(size=5)
        p = project_capped_simplex(v, 0.5)
        for _ in range(200):
            q = rng.dirichlet(np.ones(5))
            if q.max() > 0.5:
                continue
            assert np.sum((p - v) ** 2) <= np.sum((q - v) ** 2) + 1e-9

    def test_infeasible_cap(self):
        with pytest.raises(InfeasibleError):
            project_capped_simplex(np.ones(4), 0.2)


def orthogonal_two_asset_panel(s, u):
    x = s * np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    y = u * np.array([1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0])
    return make_panel({"a": x, "b": y})


class TestMeanVariance:
    def test_min_vol_two_uncorrelated_assets_closed_form(self):
        panel = orthogonal_two_asset_panel(0.02, 0.01)
        wv = mean_variance(panel, MvObjective(kind="min_vol"))
        v1, v2 = 0.02**2, 0.01**2
        expect = np.array([v2, v1]) / (v1 + v2)
        np.testing.assert_allclose(wv.weights, expect, rtol=0, atol=1e-6)

    def test_min_vol_interior_matches_inverse_covariance_oracle(self):
        rng = np.random.default_rng(62)
        r = rng.normal(scale=0.01, size=(120, 3)) @ np.array(
            [[1.0, 0.2, 0.1], [0.0, 1.0, 0.15], [0.0, 0.0, 1.0]]
        )
        panel = make_panel({f"A{i}": r[:, i] for i in range(3)})
        ids = ("A0", "A1", "A2")
        closed = min_vol_closed_form(sample_cov(panel, ids))
        assert closed.min() > 0  # interior, so the constrained solver must agree
        wv = mean_variance(panel, MvObjective(kind="min_vol"), ids=ids)
        np.testing.assert_allclose(wv.weights, closed, rtol=0, atol=1e-6)

    def test_min_vol_beats_equal_weight_objective(self):
        rng = np.random.default_rng(63)
        r = rng.normal(scale=0.01, size=(90, 5))
        r[:, 1] += 0.5 * r[:, 0]
        panel = make_panel({f"A{i}": r[:, i] for i in range(5)})
        ids = tuple(f"A{i}" for i in range(5))
        sigma = sample_cov(panel, ids)
        w = mean_variance(panel, MvObjective(kind="min_vol"), ids=ids).weights
        naive = np.full(5, 0.2)
        assert w @ sigma @ w <= naive @ sigma @ naive + 1e-12

    def test_duplicate_columns_any_objective_hits_single_asset_value(self):
        rng = np.random.default_rng(64)
        base = rng.normal(scale=0.01, size=40)
        panel = make_panel({"a": base, "b": base.copy(), "c": base.copy()})
        ids = ("a", "b", "c")
        mu = float(base.mean())
        var = float(base.var(ddof=1))
        cases = [
            (MvObjective(kind="min_vol"), var),
            (MvObjective(kind="max_sharpe"), mu / np.sqrt(var)),
            (MvObjective(kind="quadratic_utility", risk_aversion=2.0), mu - var),
            (MvObjective(kind="target_return", target=mu), var),
        ]
        sigma = sample_cov(panel, ids)
        for objective, single_value in cases:
            wv = mean_variance(panel, objective, ids=ids)
            w = wv.weights
            assert w.sum() == pytest.approx(1.0, abs=1e-9)
            if objective.kind == "max_sharpe":
                got = (w @ sigma @ w) and float(mu * w.sum()) / np.sqrt(w @ sigma @ w)
            elif objective.kind == "quadratic_utility":
                got = mu * w.sum() - w @ sigma @ w
            else:
                got = w @ sigma @ w
            assert got == pytest.approx(single_value, abs=1e-8)

    def test_max_sharpe_dominates_random_feasible_points(self):
        rng = np.random.default_rng(65)
        r = rng.normal(scale=0.01, size=(150, 4)) + rng.uniform(
            0.0, 8e-4, size=4
        )
        panel = make_panel({f"A{i}": r[:, i] for i in range(4)})
        ids = tuple(f"A{i}" for i in range(4))
        mu = panel.matrix(ids).mean(axis=0)
        sigma = sample_cov(panel, ids)

        def sharpe(w):
            return float(mu @ w) / np.sqrt(float(w @ sigma @ w))

        best = sharpe(mean_variance(panel, MvObjective(kind="max_sharpe"), ids=ids).weights)
        assert best >= sharpe(np.full(4, 0.25)) - 1e-9
        for _ in range(300):
            assert best >= sharpe(rng.dirichlet(np.ones(4))) - 1e-6

    def test_quadratic_utility_matches_line_search_on_two_assets(self):
        panel = orthogonal_two_asset_panel(0.015, 0.02)
        ids = ("a", "b")
        mu = panel.matrix(ids).mean(axis=0)
        sigma = sample_cov(panel, ids)
        lam = 3.0
        wv = mean_variance(
            panel, MvObjective(kind="quadratic_utility", risk_aversion=lam), ids=ids
        )

        def utility(x):
            w = np.array([x, 1.0 - x])
            return float(mu @ w) - 0.5 * lam * float(w @ sigma @ w)

        grid = max(utility(x) for x in np.linspace(0.0, 1.0, 20001))
        got = utility(wv.weights[0])
        assert got >= grid - 1e-10

    def test_target_return_met_when_feasible(self):
        rng = np.random.default_rng(66)
        r = rng.normal(scale=0.01, size=(100, 3)) + np.array([1e-4, 5e-4, 9e-4])
        panel = make_panel({f"A{i}": r[:, i] for i in range(3)})
        ids = ("A0", "A1", "A2")
        mu = panel.matrix(ids).mean(axis=0)
        target = float(0.5 * (mu.mean() + mu.max()))
        wv = mean_variance(
            panel, MvObjective(kind="target_return", target=target), ids=ids
        )
        assert float(mu @ wv.weights) >= target - 1e-9

    def test_target_above_best_asset_infeasible(self):
        rng = np.random.default_rng(67)
        r = rng.normal(scale=0.01, size=(100, 3))
        panel = make_panel({f"A{i}": r[:, i] for i in range(3)})
        ids = ("A0", "A1", "A2")
        mu = panel.matrix(ids).mean(axis=0)
        with pytest.raises(InfeasibleError, match="attainable range"):
            mean_variance(
                panel,
                MvObjective(kind="target_return", target=float(mu.max()) + 0.01),
                ids=ids,
            )

    def test_cap_respected(self):
        rng = np.random.default_rng(68)
        r = rng.normal(scale=0.01, size=(80, 4))
        r[:, 0] *= 0.05  # near-zero variance asset attracts min_vol mass
        panel = make_panel({f"A{i}": r[:, i] for i in range(4)})
        wv = mean_variance(
            panel,
            MvObjective(kind="min_vol", cap=0.4),
            ids=tuple(f"A{i}" for i in range(4)),
        )
        assert wv.cap == 0.4
        assert wv.weights.max() <= 0.4 + 1e-9
        assert wv.weights[0] == pytest.approx(0.4, abs=1e-6)

    def test_window_not_longer_than_universe(self):
        rng = np.random.default_rng(69)
        r = rng.normal(scale=0.01, size=(3, 3))
        panel = make_panel({f"A{i}": r[:, i] for i in range(3)})
        with pytest.raises(InsufficientDataError):
            mean_variance(panel, MvObjective(kind="min_vol"), ids=("A0", "A1", "A2"))

    def test_objective_validation(self):
        with pytest.raises(ValidationError):
            MvObjective(kind="max_drawdown")
        with pytest.raises(ValidationError):
            MvObjective(kind="quadratic_utility")
        with pytest.raises(ValidationError):
            MvObjective(kind="quadratic_utility", risk_aversion=-1.0)
        with pytest.raises(ValidationError):
            MvObjective(kind="target_return")
        with pytest.raises(ValidationError):
            MvObjective(kind="min_vol", cap=0.0)


class TestHrpCorrelation:
    def test_two_assets_inverse_variance(self):
        panel = orthogonal_two_asset_panel(0.03, 0.01)
        wv = hrp_correlation(panel, ids=("a", "b"))
        v1, v2 = 0.03**2, 0.01**2
        np.testing.assert_allclose(
            wv.weights, [v2 / (v1 + v2), v1 / (v1 + v2)], rtol=0, atol=1e-10
        )

    def test_duplicated_pair_clusters_first(self):
        rng = np.random.default_rng(70)
        base = rng.normal(scale=0.01, size=30)
        other = rng.normal(scale=0.01, size=30)
        panel = make_panel({"a": base, "b": other, "c": base * 2.0})
        ids = ("a", "b", "c")
        r = panel.matrix(ids)
        rho = np.corrcoef(r.T)
        dist = np.sqrt(np.clip(0.5 * (1 - np.clip(rho, -1, 1)), 0, None))
        np.fill_diagonal(dist, 0.0)
        from hsp.allocator import linkage

        first = linkage((dist + dist.T) / 2).merges[0]
        assert {first[0], first[1]} == {0, 2}
        assert first[2] == pytest.approx(0.0, abs=1e-7)
        wv = hrp_correlation(panel, ids=ids)
        assert wv.weights.sum() == pytest.approx(1.0, abs=1e-9)

    def test_five_asset_fixture(self):
        panel = make_panel({f"A{i}": RETURNS_5[:, i] for i in range(5)})
        wv = hrp_correlation(panel, ids=tuple(f"A{i}" for i in range(5)))
        np.testing.assert_allclose(wv.weights, HRP_WEIGHTS_5, rtol=0, atol=1e-8)

    def test_uniform_return_scaling_leaves_weights(self):
        rng = np.random.default_rng(71)
        r = rng.normal(scale=0.01, size=(60, 4))
        ids = tuple(f"A{i}" for i in range(4))
        w1 = hrp_correlation(make_panel({i: r[:, j] for j, i in enumerate(ids)}), ids=ids)
        w2 = hrp_correlation(
            make_panel({i: 7.5 * r[:, j] for j, i in enumerate(ids)}), ids=ids
        )
        np.testing.assert_allclose(w1.weights, w2.weights, rtol=0, atol=1e-10)

    def test_constant_series_degenerate(self):
        panel = make_panel({"a": np.full(20, 0.001), "b": np.random.default_rng(72).normal(scale=0.01, size=20)})
        with pytest.raises(DegenerateSeriesError, match="a"):
            hrp_correlation(panel, ids=("a", "b"))

    def test_window_too_short(self):
        panel = make_panel({"a": [0.01, -0.01], "b": [0.02, 0.0]})
        with pytest.raises(InsufficientDataError):
            hrp_correlation(panel, ids=("a", "b"))

    def test_single_asset(self):
        panel = make_panel({"a": np.random.default_rng(73).normal(scale=0.01, size=10)})
        np.testing.assert_array_equal(hrp_correlation(panel, ids=("a",)).weights, [1.0])

import numpy as np
import pytest

from carnot_lab.distance import OptimizerConfig, heisenberg_l1_gap
from carnot_lab.experiments import (SphereSampler, exp_dyadic, exp_lipschitz, exp_sharp, exp_tube,
                                    log_fit, parse_grid, sample_stratum, sharp_pair, sphere_area)
from carnot_lab.errors import PreconditionError
from carnot_lab.group import GroupModel
from carnot_lab.report import ExperimentReport, config_hash, fmt, resolve_seed

FAST = OptimizerConfig(restarts=4, maxiter=200)


def test_sphere_area_examples():
    assert sphere_area(2) == pytest.approx(2 * np.pi)
    assert sphere_area(3) == pytest.approx(4 * np.pi)
    assert sphere_area(6) == pytest.approx(np.pi ** 3)


def test_parse_grid_and_log_fit():
    np.testing.assert_allclose(parse_grid("0.1:0.4:3"), [0.1, 0.2, 0.4])
    assert parse_grid("0.1, 0.3") == [0.1, 0.3]
    assert parse_grid([1, 2]) == [1.0, 2.0]
    x = np.array([0.1, 0.2, 0.4, 0.8])
    s, c, se = log_fit(x, 5 * x ** 3)
    assert (s, np.exp(c)) == pytest.approx((3, 5)) and se == pytest.approx(0, abs=1e-12)


def test_sampler_is_chunk_reproducible():
    m = GroupModel(3)
    a = SphereSampler(m, 7, 50_000).sample()
    b = SphereSampler(m, 7, 50_000).sample()
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1, atol=1e-12)
    assert not np.array_equal(a, SphereSampler(m, 8, 50_000).sample())


def test_tube_is_deterministic_and_saturates():
    r1 = exp_tube(3, 20_000, [0.1, 0.2, 2.0], seed=3, crosscheck=500)
    r2 = exp_tube(3, 20_000, [0.1, 0.2, 2.0], seed=3, crosscheck=500)
    assert r1.to_csv() == r2.to_csv()
    assert r1.records[-1]["fraction"] == 1.0
    assert r1.summary["crosscheck_max_abs_err"] < 1e-6
    assert r1.to_csv() != exp_tube(3, 20_000, [0.1, 0.2, 2.0], seed=4, crosscheck=0).to_csv()


def test_tube_rank4_monotone_fractions():
    r = exp_tube(4, 5_000, [0.1, 0.2, 0.4], seed=0, iters=30)
    f = [row["fraction"] for row in r.records]
    assert f == sorted(f) and 0 < f[0] < f[-1] < 1
    with pytest.raises(PreconditionError):
        exp_tube(5, 10, [0.1])


def test_sharp_pair_and_experiment():
    g, h = sharp_pair(0.3, 0.01)
    np.testing.assert_allclose(h.Y - g.Y, [0, 0, 0, 0, 0, 0.01])
    r = exp_sharp([0.3], 0.5, cfg=FAST)
    row = r.records[0]
    assert row["exact_gap"] == heisenberg_l1_gap(0.3, 0.045) == 2 * 0.045 / 0.3
    assert row["rel_error"] < 0.02
    with pytest.raises(PreconditionError):
        exp_sharp([0.3], 1.5)


def test_sample_stratum_respects_band():
    m = GroupModel(4)
    pts = list(sample_stratum(m, 0.2, 3, np.random.default_rng(0)))
    assert len(pts) == 3
    assert all(0.2 <= ad <= 0.4 for _, ad in pts)


def test_small_lipschitz_run():
    r = exp_lipschitz(3, "l1", [0.2], pairs=1, cfg=FAST, M=4.0, sharp=False)
    row = r.records[0]
    assert row["kind"] == "random" and np.isfinite(row["quotient"])
    assert r.summary["competitor_violations"] == 0


def test_small_dyadic_run():
    r = exp_dyadic(3, levels=2, samples=20_000, pairs=1, cfg=FAST, M=4.0)
    assert [row["level"] for row in r.records] == [1, 2]
    assert all(row["product"] >= row["measure"] for row in r.records)
    assert all(row["measure"] <= row["tube_measure"] for row in r.records)
    assert r.summary["measure_sum"] <= r.summary["sphere_area"]
    assert set(r.summary) >= {"strictly_decreasing", "last_over_first", "decay_exponent_per_level"}


def test_report_metadata_and_seed_precedence(monkeypatch):
    rep = ExperimentReport("x", [{"a": 1.0}], {}, 5, {"k": 1})
    assert rep.records[0]["seed"] == 5 and rep.records[0]["config_hash"] == rep.config_hash
    assert config_hash({"b": 1, "a": 2}) == config_hash({"a": 2, "b": 1})
    assert fmt(0.1) == "0.10000000000000001" and fmt(True) == "true"
    monkeypatch.setenv("CARNOT_LAB_SEED", "11")
    assert resolve_seed(3, {"seed": 2}) == 3
    assert resolve_seed(None, {"seed": 2}) == 11
    monkeypatch.delenv("CARNOT_LAB_SEED")
    assert resolve_seed(None, {"seed": 2}) == 2
    assert resolve_seed(None, {}) == 0

"""Campaign configuration, batched rollouts, statistics, and reports."""

import copy
import json

import numpy as np
import pytest

from wdrc.controller import lqg_gains, run_closed_loop, synthesize_wdrc
from wdrc.errors import ConfigError
from wdrc.estimator import initial_posterior_cov
from wdrc.harness import (
    CostStatistics,
    build_histogram,
    config_from_dict,
    emit_reports,
    load_config,
    paired_mean_z,
    paired_std_z,
    run_campaign,
    simulate_paired,
)
from wdrc.model import draw_nominal_samples, estimate_nominal


def base_config() -> dict:
    return {
        "plant": {
            "A": [[0.518, 0.266], [0.405, 0.806]],
            "B": [[-2.972], [-2.271]],
            "C": [[1.023, 1.955]],
            "M": [[0.2]],
        },
        "cost": {
            "Q": [[1.0, 0.0], [0.0, 1.0]],
            "Q_f": [[1.0, 0.0], [0.0, 1.0]],
            "R": [[1.0]],
            "horizon": 12,
        },
        "robustness": {"theta": 0.1, "lam": 4.0},
        "scenario": {
            "true_disturbance": {
                "type": "gaussian",
                "mean": [0.01, 0.02],
                "cov": [[0.01, 0.005], [0.005, 0.01]],
            },
            "initial_state": {
                "type": "gaussian",
                "mean": [-1.0, -1.0],
                "cov": [[0.001, 0.0], [0.0, 0.001]],
            },
            "sample_count": 5,
            "seed": 3,
        },
        "runs": 8,
        "histogram_bins": 5,
    }


def drop(raw: dict, *path: str) -> dict:
    raw = copy.deepcopy(raw)
    node = raw
    for key in path[:-1]:
        node = node[key]
    del node[path[-1]]
    return raw


def test_valid_config_parses():
    cfg = config_from_dict(base_config())
    assert cfg.sys.n_x == 2 and cfg.sys.n_u == 1 and cfg.sys.n_y == 1
    assert cfg.cost.horizon == 12
    assert cfg.lam == 4.0
    assert cfg.runs == 8
    assert cfg.paired is True
    assert np.allclose(cfg.scenario.noise_cov, cfg.sys.M)
    assert cfg.echo == base_config()


def test_lam_auto_maps_to_none():
    raw = base_config()
    raw["robustness"]["lam"] = "auto"
    assert config_from_dict(raw).lam is None
    del raw["robustness"]["lam"]
    assert config_from_dict(raw).lam is None


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda r: drop(r, "plant"), "plant"),
        (lambda r: drop(r, "cost", "horizon"), "cost.horizon"),
        (lambda r: drop(r, "scenario", "true_disturbance"), "scenario.true_disturbance"),
        (
            lambda r: {**r, "robustness": {**r["robustness"], "lam": "tiny"}},
            "robustness.lam",
        ),
        (
            lambda r: {**r, "robustness": {**r["robustness"], "lam": -2.0}},
            "robustness.lam",
        ),
        (
            lambda r: {**r, "robustness": {**r["robustness"], "theta": -0.1}},
            "robustness.theta",
        ),
        (lambda r: {**r, "runs": 0}, "runs"),
        (lambda r: {**r, "histogram_bins": 0}, "histogram_bins"),
    ],
)
def test_config_errors_carry_field_paths(mutate, field):
    with pytest.raises(ConfigError) as err:
        config_from_dict(mutate(base_config()))
    assert err.value.field == field


def test_unknown_distribution_type_is_rejected():
    raw = base_config()
    raw["scenario"]["true_disturbance"] = {"type": "poisson", "rate": 2.0}
    with pytest.raises(ConfigError) as err:
        config_from_dict(raw)
    assert err.value.field == "scenario.true_disturbance.type"


def test_dimension_cross_checks():
    raw = base_config()
    raw["scenario"]["initial_state"] = {
        "type": "gaussian",
        "mean": [0.0, 0.0, 0.0],
        "cov": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    }
    with pytest.raises(ConfigError) as err:
        config_from_dict(raw)
    assert err.value.field == "scenario.initial_state"


def test_non_numeric_matrix_is_rejected():
    raw = base_config()
    raw["plant"]["A"] = [["x", 0.0], [0.0, 1.0]]
    with pytest.raises(ConfigError) as err:
        config_from_dict(raw)
    assert err.value.field == "plant.A"


def test_load_config_round_trip(tmp_path):
    import yaml

    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(base_config()))
    cfg = load_config(str(path))
    assert cfg.cost.horizon == 12

    missing = tmp_path / "nope.yaml"
    with pytest.raises(ConfigError):
        load_config(str(missing))

    bad = tmp_path / "bad.yaml"
    bad.write_text("plant: [unbalanced\n")
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_cost_statistics_hand_case():
    stats = CostStatistics.from_costs(np.array([1.0, 2.0, 3.0, 4.0]))
    assert stats.mean == pytest.approx(2.5)
    assert stats.std_dev == pytest.approx(np.sqrt(5.0 / 3.0))
    assert stats.minimum == 1.0
    assert stats.maximum == 4.0
    assert stats.count == 4
    single = CostStatistics.from_costs(np.array([7.0]))
    assert single.std_dev == 0.0


def test_paired_mean_z_hand_case():
    baseline = np.array([2.0, 4.0, 6.0])
    candidate = np.array([1.0, 2.0, 3.0])
    # Differences [1, 2, 3]: mean 2, sample std 1, se 1/sqrt(3).
    assert paired_mean_z(baseline, candidate) == pytest.approx(2.0 * np.sqrt(3.0))
    assert paired_mean_z(candidate, baseline) == pytest.approx(-2.0 * np.sqrt(3.0))


def test_paired_std_z_detects_variance_ordering():
    rng = np.random.default_rng(50)
    shared = rng.standard_normal(4000)
    wide = 2.0 * shared + 0.1 * rng.standard_normal(4000)
    narrow = shared + 0.1 * rng.standard_normal(4000)
    assert paired_std_z(wide, narrow) > 10.0
    assert paired_std_z(narrow, wide) < -10.0


def test_paired_std_z_uses_variance_gap_identity():
    rng = np.random.default_rng(51)
    a = rng.standard_normal(500) * 1.7 + 0.3
    b = a * 0.4 + rng.standard_normal(500) * 0.2
    u = (a + b) - (a + b).mean()
    w = (a - b) - (a - b).mean()
    assert np.isclose((u * w).mean(), a.var() - b.var())


def test_build_histogram_hand_case():
    edges, counts = build_histogram(2, np.array([0.0, 1.0, 2.0, 3.0]))
    assert np.allclose(edges, [0.0, 1.5, 3.0])
    assert counts[0].tolist() == [2, 2]


def test_build_histogram_pools_ranges_and_conserves_counts():
    a = np.array([0.0, 2.0, 4.0])
    b = np.array([10.0, 12.0])
    edges, counts = build_histogram(4, a, b)
    assert edges[0] == 0.0 and edges[-1] == 12.0
    assert counts[0].sum() == a.size
    assert counts[1].sum() == b.size


def test_build_histogram_degenerate_range():
    edges, counts = build_histogram(3, np.array([5.0, 5.0, 5.0]))
    assert edges[0] == 5.0 and edges[-1] == 6.0
    assert counts[0].sum() == 3


@pytest.fixture(scope="module")
def small_setup():
    cfg = config_from_dict(base_config())
    nominal = estimate_nominal(
        draw_nominal_samples(cfg.scenario, cfg.cost.horizon)
    )
    p0 = initial_posterior_cov(cfg.scenario.initial_state, cfg.sys)
    wdrc_ctrl = synthesize_wdrc(cfg.sys, cfg.cost, nominal, 4.0, p0, strict=True)
    lqg_ctrl = lqg_gains(cfg.sys, cfg.cost, nominal)
    return cfg, wdrc_ctrl, lqg_ctrl


def test_batched_rollouts_match_single_runs(small_setup):
    cfg, wdrc_ctrl, lqg_ctrl = small_setup
    wdrc_costs, lqg_costs = simulate_paired(
        wdrc_ctrl, lqg_ctrl, cfg.scenario, cfg.sys, cfg.cost, runs=6
    )
    for run in range(6):
        tr_w = run_closed_loop(wdrc_ctrl, cfg.scenario, cfg.sys, cfg.cost, run)
        tr_l = run_closed_loop(lqg_ctrl, cfg.scenario, cfg.sys, cfg.cost, run)
        assert wdrc_costs[run] == pytest.approx(tr_w.realized_cost, rel=1e-10)
        assert lqg_costs[run] == pytest.approx(tr_l.realized_cost, rel=1e-10)


def test_worker_count_does_not_change_results(small_setup):
    cfg, wdrc_ctrl, lqg_ctrl = small_setup
    serial = simulate_paired(
        wdrc_ctrl, lqg_ctrl, cfg.scenario, cfg.sys, cfg.cost, runs=10, jobs=1
    )
    parallel = simulate_paired(
        wdrc_ctrl, lqg_ctrl, cfg.scenario, cfg.sys, cfg.cost, runs=10, jobs=3
    )
    assert np.array_equal(serial[0], parallel[0])
    assert np.array_equal(serial[1], parallel[1])


def test_single_policy_simulation(small_setup):
    cfg, wdrc_ctrl, lqg_ctrl = small_setup
    wdrc_only, none_lqg = simulate_paired(
        wdrc_ctrl, None, cfg.scenario, cfg.sys, cfg.cost, runs=4
    )
    assert none_lqg is None and wdrc_only.shape == (4,)
    none_wdrc, lqg_only = simulate_paired(
        None, lqg_ctrl, cfg.scenario, cfg.sys, cfg.cost, runs=4
    )
    assert none_wdrc is None and lqg_only.shape == (4,)


@pytest.fixture(scope="module")
def campaign():
    return run_campaign(config_from_dict(base_config()))


def test_campaign_populates_result(campaign):
    assert campaign.mode == "both"
    assert campaign.runs == 8
    assert campaign.lam == 4.0
    assert campaign.calibration is None
    assert campaign.certificate is not None
    assert campaign.certificate.lam == 4.0
    assert campaign.wdrc.count == 8 and campaign.lqg.count == 8
    assert campaign.wdrc_ctrl is not None and campaign.lqg_ctrl is not None


def test_campaign_seed_and_run_overrides():
    result = run_campaign(config_from_dict(base_config()), seed=11, runs=3)
    assert result.seed == 11
    assert result.runs == 3
    assert result.wdrc.count == 3


def test_campaign_rejects_bad_mode():
    with pytest.raises(ValueError):
        run_campaign(config_from_dict(base_config()), mode="fastest")


def test_campaign_lqg_only_mode():
    result = run_campaign(config_from_dict(base_config()), mode="lqg", runs=4)
    assert result.lam is None
    assert result.certificate is None
    assert result.wdrc is None
    assert result.lqg.count == 4


def test_emit_reports_schema(campaign, tmp_path):
    out = tmp_path / "reports"
    paths = emit_reports(campaign, str(out))
    costs_lines = open(paths["costs"]).read().splitlines()
    assert costs_lines[0] == "run,wdrc_cost,lqg_cost"
    assert len(costs_lines) == campaign.runs + 1
    first = costs_lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[1]) == campaign.wdrc.costs[0]
    assert float(first[2]) == campaign.lqg.costs[0]

    hist_lines = open(paths["histogram"]).read().splitlines()
    assert hist_lines[0] == "bin_lo,bin_hi,wdrc_count,lqg_count"
    assert len(hist_lines) == campaign.config.histogram_bins + 1
    wdrc_total = sum(int(line.split(",")[2]) for line in hist_lines[1:])
    assert wdrc_total == campaign.runs

    summary = json.loads(open(paths["summary"]).read())
    assert summary["mode"] == "both"
    assert summary["runs"] == campaign.runs
    assert summary["lam"] == campaign.lam
    assert summary["config"] == base_config()
    assert summary["statistics"]["wdrc"]["mean"] == campaign.wdrc.mean
    assert summary["certificate"]["rho"] == campaign.certificate.rho
    assert "mean_z" in summary["paired_tests"]
    assert "calibration" not in summary


def test_emit_reports_single_mode(tmp_path):
    result = run_campaign(config_from_dict(base_config()), mode="lqg", runs=4)
    paths = emit_reports(result, str(tmp_path / "lqg_reports"))
    costs_lines = open(paths["costs"]).read().splitlines()
    assert costs_lines[0] == "run,lqg_cost"
    summary = json.loads(open(paths["summary"]).read())
    assert "paired_tests" not in summary
    assert "certificate" not in summary
    assert list(summary["statistics"]) == ["lqg"]


def test_emit_reports_are_deterministic(campaign, tmp_path):
    first = emit_reports(campaign, str(tmp_path / "a"))
    second = emit_reports(campaign, str(tmp_path / "b"))
    for name in ("costs", "histogram", "summary"):
        assert (
            open(first[name], "rb").read() == open(second[name], "rb").read()
        )

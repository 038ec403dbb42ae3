import json
import math

import numpy as np
import pytest

from ntkstop.experiments import (
    ExperimentConfig,
    ResourceCapError,
    empirical_norm_sq,
    mc_excess_risk,
    run_convergence_experiment,
    run_coupling_experiment,
    run_experiment,
    run_rate_experiment,
    run_spectrum_experiment,
    run_stopping_experiment,
    write_outputs,
)
from ntkstop.rng import derive_seed, gaussian, stream
from ntkstop.slopes import loglog_slope
from ntkstop.sphere_data import TargetSpec, eval_target, sample_sphere


def test_mc_risk_of_exact_predictor_is_zero():
    spec = TargetSpec.random("abs-linear", 3, 1.0, seed=0)
    assert mc_excess_risk(lambda Z: eval_target(spec, Z), spec, 3, 500, seed=1) == 0.0


def test_mc_risk_of_constant_offset():
    spec = TargetSpec.random("max-of-linears", 3, 1.0, seed=0)
    risk = mc_excess_risk(lambda Z: eval_target(spec, Z) + 0.3, spec, 3, 1000, seed=2)
    assert risk == pytest.approx(0.09, abs=1e-12)


def test_mc_risk_of_linear_error():
    spec = TargetSpec.random("abs-linear", 4, 1.0, seed=0)
    v = sample_sphere(1, 4, seed=9)[0]
    risk = mc_excess_risk(lambda Z: eval_target(spec, Z) + Z @ v, spec, 4, 10**5, seed=3)
    assert risk == pytest.approx(0.25, abs=0.01)


def test_mc_risk_rejects_empty_sample():
    spec = TargetSpec.random("abs-linear", 3, 1.0, seed=0)
    with pytest.raises(ValueError):
        mc_excess_risk(lambda Z: eval_target(spec, Z), spec, 3, 0, seed=1)


def test_empirical_norm_examples():
    X = sample_sphere(50, 3, seed=4)
    f = lambda Z: Z[:, 0]
    assert empirical_norm_sq(f, f, X) == 0.0
    assert empirical_norm_sq(lambda Z: Z[:, 0] + 1, f, X) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        empirical_norm_sq(f, f, np.empty((0, 3)))


def test_empirical_norm_equals_mc_risk_on_the_mc_sample():
    spec = TargetSpec.random("abs-linear", 3, 1.0, seed=5)
    pred = lambda Z: 0.5 * Z[:, 1]
    Z = sample_sphere(300, 3, seed=7, tag="mc-risk")
    assert empirical_norm_sq(pred, lambda P: eval_target(spec, P), Z) == mc_excess_risk(pred, spec, 3, 300, seed=7)


def test_loglog_examples():
    fit = loglog_slope([(1, 1), (10, 0.1), (100, 0.01)])
    assert fit.slope == pytest.approx(-1.0) and fit.r2 == pytest.approx(1.0)
    assert loglog_slope([(1, 2.5), (10, 2.5)]).slope == pytest.approx(0.0, abs=1e-15)
    fit = loglog_slope([(x, 3 * x * x) for x in (1, 2, 4, 8)])
    assert fit.slope == pytest.approx(2.0, abs=1e-9)
    assert fit.intercept == pytest.approx(math.log10(3), abs=1e-9)
    assert fit.count == 4


@pytest.mark.parametrize("points", [[(1, 1)], [(0, 1), (1, 1)], [(1, -1), (2, 1)], [(2, 1), (2, 3)]])
def test_loglog_rejects_bad_points(points):
    with pytest.raises(ValueError):
        loglog_slope(points)


def test_derived_seeds_are_distinct_and_stable():
    seeds = {derive_seed(7, c, t) for c in range(10) for t in range(10)}
    assert len(seeds) == 100
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert all(0 <= s < 2**63 for s in seeds)


def test_box_muller_moments():
    z = gaussian(stream(0, "moments"), 200_001)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01
    assert abs(np.mean(z**4) - 3) < 0.05


def test_config_validation():
    with pytest.raises(ValueError, match="eta"):
        ExperimentConfig("rate", eta=0.9)
    with pytest.raises(ValueError, match="kind"):
        ExperimentConfig("bogus")
    with pytest.raises(ValueError, match="nonempty"):
        ExperimentConfig("coupling", m_grid=())
    with pytest.raises(ValueError, match="trials"):
        ExperimentConfig("coupling", trials=0)
    with pytest.raises(ResourceCapError):
        ExperimentConfig("spectrum", n_grid=(4096,))
    with pytest.raises(ResourceCapError):
        ExperimentConfig("coupling", m_grid=(2**16,))


def test_config_digest_tracks_fields():
    a = ExperimentConfig("rate", n_grid=[32, 64], seed=1)
    assert a.digest() == ExperimentConfig("rate", n_grid=(32, 64), seed=1).digest()
    assert a.digest() != ExperimentConfig("rate", n_grid=(32, 64), seed=2).digest()


def test_coupling_single_cell_has_one_row():
    cfg = ExperimentConfig("coupling", n_grid=(16,), m_grid=(64,), trials=1, seed=3)
    result = run_coupling_experiment(cfg)
    assert len(result.rows) == 1
    assert result.columns[:8] == ["m", "n", "d", "eta", "t", "sup_gap", "lambda_min_K", "lambda_min_Khat"]
    row = dict(zip(result.columns, result.rows[0]))
    assert row["sup_gap"] >= 0 and row["lambda_min_K"] > 0
    assert row["theory_sq_gap_bound"] > row["sup_gap"] ** 2


def test_coupling_gap_shrinks_with_width():
    cfg = ExperimentConfig("coupling", n_grid=(16,), m_grid=(64, 4096), trials=3, seed=1)
    med = run_coupling_experiment(cfg).extra["median_sup_gap"]
    assert med[4096] < med[64]


def test_convergence_rows_and_initial_risk():
    cfg = ExperimentConfig("convergence", n_grid=(8,), m_grid=(256,), trials=2, steps=30, seed=5)
    result = run_convergence_experiment(cfg)
    assert len(result.rows) == 2 * 31
    risk = result.column("risk").reshape(2, 31)
    env = result.column("theory_envelope").reshape(2, 31)
    assert np.all(env[:, 0] == 1.5**2)
    from ntkstop.sphere_data import NoiseSpec, generate_dataset

    target = TargetSpec.random("abs-linear", 3, 1.0, derive_seed(5, 0x7A5))
    ds = generate_dataset(8, 3, target, NoiseSpec("rademacher", 0.5), derive_seed(5, 0, 0))
    assert risk[0, 0] == pytest.approx(np.mean(ds.y**2), abs=1e-15)


def test_rate_preconditions():
    with pytest.raises(ValueError, match="two sample sizes"):
        run_rate_experiment(ExperimentConfig("rate", n_grid=(32,), trials=1))
    with pytest.raises(ValueError, match="sigma"):
        run_rate_experiment(ExperimentConfig("rate", n_grid=(16, 32), sigma=0.0, trials=1))


def test_rate_small_run_with_network_variant():
    cfg = ExperimentConfig("rate", n_grid=(16, 32), trials=2, mc_points=256, network_width=64, seed=2)
    result = run_rate_experiment(cfg)
    assert "net_excess_risk" in result.columns
    assert set(result.fits) == {"excess_risk_vs_n", "r_hat_vs_n"}
    assert np.all(result.column("excess_risk") >= 0)


@pytest.mark.parametrize("rule", ["dieuleveut", "yao"])
def test_rate_with_other_rules(rule):
    cfg = ExperimentConfig("rate", n_grid=(16, 32), trials=1, mc_points=128, rule=rule, seed=2)
    result = run_rate_experiment(cfg)
    assert set(result.column("rule")) == {rule}
    assert "r_hat_vs_n" not in result.fits


def test_spectrum_rows_sorted_and_trace():
    cfg = ExperimentConfig("spectrum", n_grid=(64,), trials=2, seed=1)
    result = run_spectrum_experiment(cfg)
    lam = result.column("lambda_k_over_n").reshape(2, 64)
    assert np.all(np.diff(lam, axis=1) <= 0)
    assert all(abs(v - 0.5) <= 1e-9 for v in result.extra["trace_over_n"].values())
    fit = result.fits["lambda_over_n_vs_k@n=64"]
    assert fit.count == 16 - 4 + 1


def test_stopping_rows_satisfy_flow_radius():
    cfg = ExperimentConfig("stopping", n_grid=(16, 32), sigma_grid=(0.5, 1.0), trials=2, seed=4)
    result = run_stopping_experiment(cfg)
    assert len(result.rows) == 2 * 2 * 2
    assert all(result.column("flow_radius_ok"))
    med = result.extra["median_T_hat"]
    assert med["n=32,sigma=1"] <= med["n=32,sigma=0.5"]


def test_stopping_rejects_zero_sigma():
    with pytest.raises(ValueError, match="sigma"):
        run_stopping_experiment(ExperimentConfig("stopping", sigma_grid=(0.0,), trials=1))


def test_kind_mismatch():
    with pytest.raises(ValueError, match="expected"):
        run_rate_experiment(ExperimentConfig("spectrum"))


def test_outputs_are_deterministic(tmp_path):
    cfg = ExperimentConfig("stopping", n_grid=(16,), sigma_grid=(0.5,), trials=2, seed=9)
    csv_a, manifest = write_outputs(run_experiment(cfg), tmp_path / "a")
    csv_b, _ = write_outputs(run_experiment(cfg), tmp_path / "b")
    assert csv_a.read_bytes() == csv_b.read_bytes()
    first = csv_a.read_text().splitlines()[0]
    assert first.startswith(f"# cfg_digest={cfg.digest()} version=")
    meta = json.loads(manifest.read_text())
    assert meta["cfg"]["seed"] == 9 and len(meta["seeds"]) == 2

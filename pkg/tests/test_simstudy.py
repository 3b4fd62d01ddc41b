import math

import numpy as np
import pytest

import stexceed as sx
from stexceed import exceedance, reml, simstudy
from stexceed.exceedance import Direction


def test_mean_value_trend_vanishing_coordinate():
    trend = sx.pattern("trend")
    # both trend covariates are s_x, so the mean is the intercept on x = 0
    for y in (0.0, 0.3, 1.0):
        assert sx.mean_value(trend, (0.0, y)) == pytest.approx(1.0)
    assert sx.mean_value(trend, (1.0, 0.0)) == pytest.approx(7.0)


def test_mean_value_cone_and_waves():
    cone = sx.pattern("cone")
    assert sx.mean_value(cone, (0.0, 0.0)) == pytest.approx(1.0)
    assert sx.mean_value(cone, (0.5, 0.5)) == pytest.approx(-9.0)
    waves = sx.pattern("waves")
    assert sx.mean_value(waves, (0.0, 0.0)) == pytest.approx(6.0)
    cup = sx.pattern("cup")
    assert sx.mean_value(cup, (0.5, 0.5)) == pytest.approx(11.0)


def test_mean_value_outside_domain():
    with pytest.raises(ValueError):
        sx.mean_value(sx.pattern("trend"), (1.5, 0.5))


def test_unknown_pattern():
    with pytest.raises(ValueError):
        sx.pattern("spiral")
    with pytest.raises(ValueError):
        sx.ExperimentConfig(pattern="spiral", phi=0.5, rho=0.5)
    with pytest.raises(ValueError):
        sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5, levels=(1.0,))


def test_design_matrices_are_full_rank():
    rng = np.random.default_rng(0)
    for name in ("trend", "cone", "cup", "waves"):
        pat = sx.pattern(name)
        x0, y0, x1, y1 = pat.rect
        coords = np.column_stack([x0 + rng.random(50) * (x1 - x0),
                                  y0 + rng.random(50) * (y1 - y0)])
        design = pat.design_covariates(coords)
        assert np.linalg.matrix_rank(design) == design.shape[1]
        # the true mean lies in the span of the fitted design
        mu = pat.mean(coords)
        resid = mu - design @ np.linalg.lstsq(design, mu, rcond=None)[0]
        assert np.max(np.abs(resid)) < 1e-8


def test_simulate_truth_noiseless_observations_recover_latent():
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5, nugget=0.0,
                              n_sites=20, nx=8, ny=8, master_seed=3)
    truth = sx.simulate_truth(cfg, 0)
    assert np.array_equal(truth.y, truth.z_sites)
    cfg_noisy = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5,
                                    nugget=0.25, n_sites=20, nx=8, ny=8,
                                    master_seed=3)
    noisy = sx.simulate_truth(cfg_noisy, 0)
    # same latent truth (noise drawn after the field, scaled by the nugget sd)
    assert np.array_equal(noisy.z_sites, truth.z_sites)
    assert np.array_equal(noisy.z_grid, truth.z_grid)
    assert not np.array_equal(noisy.y, noisy.z_sites)


def test_simulate_truth_deterministic():
    cfg = sx.ExperimentConfig(pattern="cone", phi=0.5, rho=0.1, n_sites=15,
                              nx=6, ny=6, master_seed=44)
    a = sx.simulate_truth(cfg, 5)
    b = sx.simulate_truth(cfg, 5)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.z_grid, b.z_grid)
    assert a.threshold == b.threshold
    c = sx.simulate_truth(cfg, 6)
    assert not np.array_equal(a.y, c.y)


def test_simulate_truth_threshold_and_exceedance_count():
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.1, n_sites=25,
                              nx=25, ny=25, master_seed=10)
    truth = sx.simulate_truth(cfg, 0)
    # type-1 90th percentile of 625 distinct values: 63 values at or above
    assert truth.threshold == sx.quantile_type1(truth.z_grid, 0.9)
    assert int(truth.exceed_mask.sum()) == 63
    assert np.array_equal(truth.exceed_mask, truth.z_grid >= truth.threshold)


def test_simulate_truth_sites_inside_domain():
    cfg = sx.ExperimentConfig(pattern="waves", phi=0.5, rho=0.5, n_sites=30,
                              nx=6, ny=6, master_seed=2)
    truth = sx.simulate_truth(cfg, 1)
    x0, y0, x1, y1 = sx.pattern("waves").rect
    assert np.all((truth.sites[:, 0] >= x0) & (truth.sites[:, 0] <= x1))
    assert np.all((truth.sites[:, 1] >= y0) & (truth.sites[:, 1] <= y1))
    # observations replicate the sites at each observed time
    assert truth.coords.shape == (90, 2)
    assert np.array_equal(truth.coords[:30], truth.sites)
    assert np.array_equal(truth.times[:30], np.ones(30))


def test_simulate_truth_redraws_sites_once(monkeypatch):
    # a failed factorization of the latent covariance (pathological site
    # coincidence) triggers exactly one re-draw before giving up
    from stexceed import linalg
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5, n_sites=10,
                              nx=4, ny=4, master_seed=13)
    clean = sx.simulate_truth(cfg, 0)
    real_factorize = linalg.factorize
    calls = {"n": 0}

    def fail_first(a, ridge=False):
        calls["n"] += 1
        if calls["n"] == 1:
            raise linalg.NotPositiveDefiniteError(pivot=1)
        return real_factorize(a, ridge=ridge)

    monkeypatch.setattr(simstudy.linalg, "factorize", fail_first)
    retried = sx.simulate_truth(cfg, 0)
    # the second site draw consumes later stream output, so sites differ
    assert not np.array_equal(retried.sites, clean.sites)

    def always_fail(a, ridge=False):
        raise linalg.NotPositiveDefiniteError(pivot=1)

    monkeypatch.setattr(simstudy.linalg, "factorize", always_fail)
    with pytest.raises(linalg.NotPositiveDefiniteError):
        sx.simulate_truth(cfg, 0)


def test_truth_shared_between_known_and_estimated_runs():
    known = sx.ExperimentConfig(pattern="trend", phi=1.5, rho=0.5,
                                covariance_known=True, n_sites=12, nx=5, ny=5,
                                master_seed=77)
    est = sx.ExperimentConfig(pattern="trend", phi=1.5, rho=0.5,
                              covariance_known=False, n_sites=12, nx=5, ny=5,
                              master_seed=77)
    a = sx.simulate_truth(known, 3)
    b = sx.simulate_truth(est, 3)
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(a.z_grid, b.z_grid)


def test_degenerate_threshold_everything_exceeds(fixture_model, fixture_grid,
                                                 fixture_predictions):
    # u below every value: E is the full grid and so is S_u+
    ens = sx.generate_ensemble(fixture_model, fixture_grid, 300, 5,
                               predictions=fixture_predictions)
    _, z_hat, krig_sd = fixture_predictions
    u = -1e30
    z_prime = sx.test_statistic_field(z_hat, krig_sd, u)
    pool, n_empty = exceedance.exceedance_extreme_pool(
        ens.realizations, z_prime, u, Direction.ABOVE)
    assert n_empty == 0
    c = exceedance.critical_from_pool(pool, 0.1, Direction.ABOVE)
    s_mask = sx.build_region(z_prime, c, Direction.ABOVE)
    exceed = z_hat >= u
    assert np.all(exceed)
    assert bool(np.all(s_mask[exceed]))


def test_run_replicate_deterministic_and_covered_fields():
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5, n_sites=25,
                              nx=8, ny=8, b=200, n_replicates=1, master_seed=31)
    a = sx.run_replicate(cfg, 0)
    b = sx.run_replicate(cfg, 0)
    assert not a.failed
    assert a.covered == b.covered
    assert a.region_px == b.region_px
    assert set(a.covered) == {0.90, 0.95}
    for level in cfg.levels:
        assert np.array_equal(a.region_masks[level], b.region_masks[level])
        assert a.region_px[level] == int(a.region_masks[level].sum())
    # 0.95 region contains the 0.90 region (alpha monotonicity)
    assert np.all(a.region_masks[0.95] >= a.region_masks[0.90])


def test_reused_truth_factor_matches_fresh_joint():
    # with known theta and a zero nugget the condsim joint equals the truth's
    # latent covariance; the reuse path must reproduce the fresh path exactly
    from stexceed import condsim, kriging
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5, nugget=0.0,
                              n_sites=15, nx=5, ny=5, b=70, master_seed=21)
    truth = sx.simulate_truth(cfg, 0)
    pat = cfg.mean_pattern()
    ds = sx.Dataset(coords=truth.coords, times=truth.times, values=truth.y,
                    covariate_builder=pat.design_covariates,
                    target_time=cfg.target_time)
    model = sx.build_model(ds, cfg.params())
    grid = cfg.grid()
    predictions = sx.uk_weight_matrix(model, grid.points_at(cfg.target_time))
    fresh = condsim.generate_ensemble(model, grid, cfg.b,
                                      (cfg.master_seed, 0, 1),
                                      predictions=predictions)
    reused = simstudy._ensemble_with_optional_joint(
        model, grid, cfg,
        condsim.JointCovariance(sigma_y=None, sigma_g=None, sigma_gy=None,
                                factor=truth.latent_factor),
        0, predictions)
    assert np.array_equal(fresh.realizations, reused.realizations)


def test_run_experiment_parallel_matches_sequential():
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5, n_sites=20,
                              nx=6, ny=6, b=150, n_replicates=6, master_seed=8)
    seq = sx.run_experiment(cfg, workers=1)
    par = sx.run_experiment(cfg, workers=3)
    assert seq.coverage == par.coverage
    assert seq.mean_region_px == par.mean_region_px
    for level in cfg.levels:
        assert np.array_equal(seq.region_freq[level], par.region_freq[level])
    assert np.array_equal(seq.exceed_freq, par.exceed_freq)


def test_run_experiment_aggregates():
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5, n_sites=20,
                              nx=6, ny=6, b=150, n_replicates=8, master_seed=9)
    res = sx.run_experiment(cfg)
    for level in cfg.levels:
        p = res.coverage[level]
        assert 0.0 <= p <= 1.0
        assert res.se[level] == pytest.approx(
            math.sqrt(p * (1 - p) / 8), abs=1e-12)
        assert 0 < res.mean_region_px[level] <= 36
        assert res.region_freq[level].shape == (36,)
    assert res.n_fail == 0 and res.valid
    assert len(res.covered_by_replicate[0.90]) == 8


def test_binomial_se_at_reference_design():
    # 200 replicates: SE is ~2.12% at nominal 0.90 and ~1.54% at 0.95
    assert math.sqrt(0.90 * 0.10 / 200) == pytest.approx(0.0212, abs=5e-5)
    assert math.sqrt(0.95 * 0.05 / 200) == pytest.approx(0.0154, abs=5e-5)


def test_all_replicates_covered_gives_zero_se():
    cfg = sx.ExperimentConfig(pattern="cone", phi=0.9, rho=0.9, n_sites=30,
                              nx=8, ny=8, b=200, levels=(0.90,),
                              n_replicates=3, master_seed=99)
    res = sx.run_experiment(cfg)
    if res.coverage[0.90] == 1.0:
        assert res.se[0.90] == 0.0
    else:  # still checks the formula when a trial missed
        assert res.se[0.90] > 0.0


def test_failed_replicates_recorded_not_dropped(monkeypatch):
    def explode(dataset, config):
        raise sx.NonConvergenceError(
            best_params=None, best_nll=math.inf,
            diagnostics=reml.FitDiagnostics(evals=1, final_simplex_size=1.0,
                                            converged=False, nll=math.inf))
    monkeypatch.setattr(reml, "fit", explode)
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5, n_sites=15,
                              nx=5, ny=5, b=120, n_replicates=4,
                              covariance_known=False, master_seed=12)
    res = sx.run_experiment(cfg)
    assert res.n_fail == 4
    assert not res.valid
    assert all(v is None for v in res.covered_by_replicate[0.90])


def test_full_scale_flag():
    cfg = sx.ExperimentConfig(pattern="trend", phi=0.5, rho=0.5,
                              full_scale=True)
    assert (cfg.nx, cfg.ny, cfg.b) == (50, 50, 2000)


def test_shape_study_presets():
    assert simstudy.SHAPE_STUDY_DEPENDENCE == {
        "weak": (0.1, 0.1), "medium": (0.5, 0.5), "strong": (0.9, 0.9)}


def test_region_size_shrinks_with_stronger_dependence():
    # waves pattern, weak vs strong dependence presets
    sizes = {}
    for label in ("weak", "strong"):
        phi, rho = simstudy.SHAPE_STUDY_DEPENDENCE[label]
        cfg = sx.ExperimentConfig(pattern="waves", phi=phi, rho=rho, nugget=0.0,
                                  n_sites=60, nx=15, ny=15, b=250,
                                  levels=(0.90,), n_replicates=50,
                                  master_seed=555)
        res = sx.run_experiment(cfg, workers=2)
        assert res.n_fail == 0
        sizes[label] = res.mean_region_px[0.90]
    assert sizes["strong"] < sizes["weak"]


def test_region_size_grows_with_measurement_error():
    # cup pattern at strong dependence, noise-free vs noisy, shared seeds
    sizes = {}
    for nugget in (0.0, 0.5):
        cfg = sx.ExperimentConfig(pattern="cup", phi=0.9, rho=0.9,
                                  nugget=nugget, n_sites=60, nx=15, ny=15,
                                  b=250, levels=(0.90,), n_replicates=50,
                                  master_seed=556)
        res = sx.run_experiment(cfg, workers=2)
        assert res.n_fail == 0
        sizes[nugget] = res.mean_region_px[0.90]
    assert sizes[0.5] > sizes[0.0]

use srassim::config::parse_config;
use srassim::filters::{run_filter_season, FilterConfig, FilterKind};
use srassim::harness::{compare_paired, fit_rms, forecast_series, noise_of, run_forecast, scenario_observations, seeded_config, sweep, sweep_cells, SweepAxis};
use srassim::model::{Dimension, ModelConfig};
use srassim::output::{read_forecast_csv, write_fit_csv, write_forecast_csv};
use srassim::truth::TruthScenario;

fn small(kind: FilterKind, n: usize) -> FilterConfig {
    let mut c = FilterConfig::new(kind, 1e5);
    c.n_members = n;
    c.record_snapshots = false;
    c.mif_iterations = 2;
    c.pmcmc_chain_length = 3;
    c
}

#[test]
fn every_kind_fits_a_season_deterministically() {
    let model = ModelConfig::default();
    let scenario = TruthScenario::two_strain(1e5);
    for kind in FilterKind::ALL {
        let cfg = seeded_config(&small(kind, if kind.is_particle() { 150 } else { 30 }), 2);
        let (_, obs) = scenario_observations(&scenario, &model, &noise_of(&cfg), 2).unwrap();
        let a = run_filter_season(&obs, &cfg, &model).unwrap();
        let b = run_filter_season(&obs, &cfg, &model).unwrap();
        assert_eq!(a, b, "{kind}");
        assert_eq!(a.records.len(), 52);
        assert!(fit_rms(&a, &obs.observed).unwrap().is_finite());
        for m in &a.ensemble.members {
            assert!(m.satisfies_invariants(1e5), "{kind}: {m:?}");
        }
        assert!(a.records.iter().any(|r| r.reprobed > 0), "{kind}");
    }
}

#[test]
fn single_pass_forecasts_equal_separate_runs() {
    let model = ModelConfig::default();
    let cfg = seeded_config(&small(FilterKind::Pf, 300), 5);
    let (_, obs) = scenario_observations(&TruthScenario::unimodal(1e5), &model, &noise_of(&cfg), 5).unwrap();
    let weeks = [6, 9, 12];
    let series = forecast_series(&obs, &weeks, &cfg, &model).unwrap();
    for (w, r) in weeks.iter().zip(&series) {
        let single = run_forecast(&obs, *w, &cfg, &model).unwrap();
        assert_eq!(single.trajectory, r.trajectory);
        assert_eq!(r.trajectory.len(), 52);
    }
}

#[test]
fn comparison_of_identical_arms_is_null() {
    let model = ModelConfig::default();
    let cfg = seeded_config(&small(FilterKind::Eakf, 40), 1);
    let (_, obs) = scenario_observations(&TruthScenario::two_strain(1e5), &model, &noise_of(&cfg), 1).unwrap();
    let mut rows = forecast_series(&obs, &[8, 10], &cfg, &model).unwrap();
    for r in &mut rows {
        r.scenario = "two_strain".into();
    }
    let c = compare_paired(&rows, &rows).unwrap();
    assert_eq!(c.overall.mean_diff, 0.0);
    assert!(c.overall.zero_variance && c.overall.p_one_sided.is_none());

    let mut buf = Vec::new();
    write_forecast_csv(&mut buf, &rows).unwrap();
    let back = read_forecast_csv(buf.as_slice()).unwrap();
    assert_eq!(compare_paired(&back, &rows).unwrap(), c);
}

#[test]
fn fraction_sweep_cells_and_config_driven_run() {
    let cfg = parse_config("filter.kind = EAKF\nfilter.ensemble_members = 25\nharness.seeds = 0..2\n").unwrap();
    let base = cfg.filter_config(Some(true));
    assert_eq!(base.n_members, 25);
    let values = SweepAxis::Fraction.default_values();
    let rows = sweep(SweepAxis::Fraction, &values, &base, &cfg.scenarios(), &cfg.harness.seeds, &[9], &cfg.model).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    let cells = sweep_cells(&rows);
    assert_eq!(cells.len(), 6);
    assert!(cells.iter().all(|c| c.n == 2));
}

#[test]
fn fit_csv_lists_every_dimension() {
    let model = ModelConfig::default();
    let cfg = seeded_config(&small(FilterKind::Enkf, 20), 0);
    let (_, obs) = scenario_observations(&TruthScenario::unimodal(1e5), &model, &noise_of(&cfg), 0).unwrap();
    let run = run_filter_season(&obs.truncated(4), &cfg, &model).unwrap();
    let mut buf = Vec::new();
    write_fit_csv(&mut buf, &run.records, 1.5).unwrap();
    let text = String::from_utf8(buf).unwrap();
    // header + 4 weeks x (3 incidence + 2 stats x 2 sides x 6 dims) + rms
    assert_eq!(text.lines().count(), 1 + 4 * (3 + 24) + 1);
    for d in Dimension::ALL {
        assert!(text.contains(&format!(",posterior_sd,{},", d.name())));
    }
    assert!(text.ends_with("all,rms,incidence,1.50000000e0\n"));
}

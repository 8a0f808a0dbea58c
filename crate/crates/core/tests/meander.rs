use condflow::meander::{meander_ensemble, EnsembleSpec, Sampler};
use condflow::sde::{make_grid, Monitoring, Record, TimeGrid};
use condflow::stats::{ks_one_sample, rayleigh_cdf, SampleSummary};

fn ensemble(sampler: Sampler, horizon: f64, grid: &TimeGrid, n: usize, seed: u64) -> condflow::meander::MeanderEnsemble {
    meander_ensemble(&EnsembleSpec {
        sampler,
        horizon,
        grid,
        n,
        seed,
        y0: None,
        max_attempts: 1_000_000_000,
        monitoring: Monitoring::Bridge,
        record: Record::All,
    })
    .unwrap()
}

#[test]
fn sde_endpoint_is_rayleigh() {
    let grid = make_grid(1.0, 200, 1e-3, 1e-6, 10).unwrap();
    let ens = ensemble(Sampler::Sde, 1.0, &grid, 5000, 11);
    let ks = ks_one_sample(&ens.endpoints(), |x| rayleigh_cdf(x, 1.0), None).unwrap();
    assert!(ks.p_value > 1e-3, "{ks:?}");
    for p in &ens.paths {
        assert!(p.values.iter().all(|&v| v > 0.0));
        assert_eq!(p.weight, 1.0);
    }
}

#[test]
fn weighted_bessel_endpoint_is_rayleigh() {
    let grid = TimeGrid::uniform(2.0, 4).unwrap();
    let ens = ensemble(Sampler::Bessel, 2.0, &grid, 20_000, 12);
    let w = ens.weights();
    let ks = ks_one_sample(&ens.endpoints(), |x| rayleigh_cdf(x, 2.0f64.sqrt()), Some(&w)).unwrap();
    assert!(ks.p_value > 1e-3, "{ks:?}");
    let mean_w = SampleSummary::new(&w, None).unwrap();
    assert!((mean_w.mean - 1.0).abs() < 4.0 * mean_w.se);
}

#[test]
fn brownian_scaling_of_the_meander() {
    // Y on [0, 4] is 2·Y(·/4) on [0, 1] in law
    let grid4 = TimeGrid::uniform(4.0, 4).unwrap();
    let ens = ensemble(Sampler::Bessel, 4.0, &grid4, 20_000, 13);
    let w = ens.weights();
    let mid: Vec<f64> = ens.values_at(2.0).unwrap().iter().map(|v| v / 2.0).collect();
    let s4 = SampleSummary::new(&mid, Some(&w)).unwrap();
    let grid1 = TimeGrid::uniform(1.0, 4).unwrap();
    let ens1 = ensemble(Sampler::Bessel, 1.0, &grid1, 20_000, 14);
    let s1 = SampleSummary::new(&ens1.values_at(0.5).unwrap(), Some(&ens1.weights())).unwrap();
    let se = (s4.se * s4.se + s1.se * s1.se).sqrt();
    assert!((s4.mean - s1.mean).abs() < 4.0 * se, "{} vs {}", s4.mean, s1.mean);
}

#[test]
fn rejection_paths_stay_positive_and_start_at_y0() {
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let ens = meander_ensemble(&EnsembleSpec {
        sampler: Sampler::Rejection,
        horizon: 1.0,
        grid: &grid,
        n: 300,
        seed: 15,
        y0: Some(0.5),
        max_attempts: 1_000_000,
        monitoring: Monitoring::Bridge,
        record: Record::All,
    })
    .unwrap();
    assert_eq!(ens.y0, Some(0.5));
    for p in &ens.paths {
        assert_eq!(p.value(0)[0], 0.5);
        assert!(p.values.iter().all(|&v| v > 0.0));
    }
    let rate = ens.acceptance_rate().unwrap();
    assert!(rate > 0.25 && rate < 0.5, "{rate}");
}

#[test]
fn same_seed_same_ensemble() {
    let grid = make_grid(1.0, 50, 1e-3, 1e-6, 4).unwrap();
    let a = ensemble(Sampler::Sde, 1.0, &grid, 50, 16);
    let b = ensemble(Sampler::Sde, 1.0, &grid, 50, 16);
    assert_eq!(a.endpoints(), b.endpoints());
}

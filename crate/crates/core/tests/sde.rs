use condflow::analytic::{exit_prob, DomainSpec};
use condflow::sde::{euler_maruyama, first_exit_time, par_ensemble, Monitoring, RetryPolicy, TimeGrid};
use condflow::stats::{ks_one_sample, normal_cdf, SampleSummary};
use condflow::RngStream;

fn ou_endpoint_mean(y0: f64, steps: usize, n: usize, seed: u64) -> SampleSummary {
    let grid = TimeGrid::uniform(1.0, steps).unwrap();
    let ends = par_ensemble(n, seed, |_, r| {
        let p = euler_maruyama(|_, y, b| b[0] = -y[0], None, &[y0], &grid, r, RetryPolicy::default())?;
        Ok(p.last()[0])
    })
    .unwrap();
    SampleSummary::new(&ends, None).unwrap()
}

#[test]
fn euler_bias_on_ou_is_first_order() {
    // E[Y_T] is y0 e^{-T}; Euler gives y0 (1 - h)^n exactly in expectation
    let y0 = 2.0;
    let coarse = ou_endpoint_mean(y0, 10, 40_000, 1);
    let fine = ou_endpoint_mean(y0, 80, 40_000, 2);
    let exact = y0 * (-1.0f64).exp();
    assert!((coarse.mean - y0 * 0.9f64.powi(10)).abs() < 4.0 * coarse.se);
    assert!(exact - coarse.mean > 0.03 - 4.0 * coarse.se);
    assert!((fine.mean - exact).abs() < 0.006 + 4.0 * fine.se, "{} vs {exact}", fine.mean);
}

#[test]
fn bridge_corrected_first_exit_matches_survival() {
    let y0 = 0.5;
    let grid = TimeGrid::uniform(1.0, 100).unwrap();
    let h = DomainSpec::positive_half_line();
    let alive = par_ensemble(20_000, 3, |_, r| {
        let p = euler_maruyama(|_, _, b| b[0] = 0.0, None, &[y0], &grid, r, RetryPolicy::default())?;
        if first_exit_time(&p, &h).is_some() {
            return Ok(0.0);
        }
        let mut u = RngStream::new(r.seed(), 1_000_000 + r.index());
        let crossed = (0..p.len() - 1).any(|k| Monitoring::Bridge.crossed(p.value(k)[0], p.value(k + 1)[0], 0.01, &mut u));
        Ok(if crossed { 0.0 } else { 1.0 })
    })
    .unwrap();
    let s = SampleSummary::new(&alive, None).unwrap();
    let g = exit_prob(&h, 1.0, &[y0]).unwrap();
    assert!((s.mean - g).abs() < 4.0 * s.se, "{} vs {g}", s.mean);
}

#[test]
fn grid_only_monitoring_overestimates_survival() {
    let y0 = 0.5;
    let grid = TimeGrid::uniform(1.0, 20).unwrap();
    let h = DomainSpec::positive_half_line();
    let alive = par_ensemble(20_000, 4, |_, r| {
        let p = euler_maruyama(|_, _, b| b[0] = 0.0, None, &[y0], &grid, r, RetryPolicy::default())?;
        Ok(if first_exit_time(&p, &h).is_none() { 1.0 } else { 0.0 })
    })
    .unwrap();
    let s = SampleSummary::new(&alive, None).unwrap();
    assert!(s.mean > exit_prob(&h, 1.0, &[y0]).unwrap() + 4.0 * s.se);
}

#[test]
fn domain_steps_never_leave_the_domain() {
    let h = DomainSpec::positive_half_line();
    let grid = TimeGrid::uniform(1.0, 50).unwrap();
    let mut rng = RngStream::new(9, 0);
    for _ in 0..200 {
        let p = euler_maruyama(|_, y, b| b[0] = 1.0 / y[0], Some(&h), &[0.05], &grid, &mut rng, RetryPolicy::default()).unwrap();
        assert!((0..p.len()).all(|k| p.value(k)[0] > 0.0));
        assert_eq!(p.times.last(), Some(&1.0));
    }
}

#[test]
fn ks_p_values_are_calibrated_under_the_null() {
    // rejection rate at level 5% over many standard normal samples
    let rejections = par_ensemble(2000, 5, |_, r| {
        let x: Vec<f64> = (0..200).map(|_| r.normal()).collect();
        Ok(ks_one_sample(&x, normal_cdf, None)?.p_value < 0.05)
    })
    .unwrap();
    let rate = rejections.iter().filter(|&&b| b).count() as f64 / rejections.len() as f64;
    // binomial se ≈ 0.005; asymptotic p-values run slightly conservative at n = 200
    assert!((0.03..0.065).contains(&rate), "{rate}");
}

#[test]
fn ensembles_depend_only_on_seed_and_index() {
    let draw = |n| par_ensemble(n, 42, |_, r| Ok(r.normal())).unwrap();
    let a = draw(100);
    let b = draw(300);
    assert_eq!(a[..], b[..100]);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    assert_eq!(pool.install(|| draw(100)), a);
}

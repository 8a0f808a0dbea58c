use condflow::analytic::{exit_prob, DomainSpec, DriftSpec};
use condflow::flows::{cluster_partition, simulate_coalescing, simulate_coalescing_recorded, ParticleSystem};
use condflow::sde::par_ensemble;
use condflow::stats::{correlation, sample_variance, SampleSummary};
use condflow::RngStream;
use proptest::prelude::*;

fn sorted_points() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 1..40).prop_map(|gaps| {
        let mut x = -1.0;
        gaps.into_iter()
            .map(|g| {
                x += g;
                x
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_invariants_hold(points in sorted_points(), horizon in 0.05f64..3.0, seed in any::<u64>(), drifted in any::<bool>()) {
        let drift = drifted.then(|| DriftSpec::linear(1.0, 0.0).unwrap());
        let mut rng = RngStream::new(seed, 0);
        let sys = simulate_coalescing_recorded(&points, horizon, 0.01f64.min(horizon), &mut rng, drift.as_ref()).unwrap();
        prop_assert!(sys.check_invariants());
        let hist = sys.history().unwrap();
        prop_assert!(hist.windows(2).all(|w| w[1].ids.len() <= w[0].ids.len() && w[1].t > w[0].t));
        let map = sys.merge_map();
        prop_assert_eq!(map.len(), points.len());
        prop_assert!(map.windows(2).all(|w| w[0] <= w[1]));
        let part = cluster_partition(&sys);
        prop_assert!(part.is_partition());
        prop_assert_eq!(part.sizes().iter().sum::<usize>(), points.len());
        prop_assert_eq!(part.count_in_window(f64::NEG_INFINITY, f64::INFINITY), part.vertices.len());
        for i in 0..points.len() {
            prop_assert_eq!(sys.position_of(i), sys.positions()[sys.survivor_of(i)]);
        }
    }

    #[test]
    fn composing_runs_equals_one_run(points in sorted_points(), k in 1u32..20, m in 1u32..20, seed in any::<u64>()) {
        let dt = 0.01;
        let (t1, t2) = (k as f64 * dt, m as f64 * dt);
        let mut a = ParticleSystem::new(&points, 0.0, None).unwrap();
        let mut ra = RngStream::new(seed, 0);
        a.advance(t1, dt, &mut ra).unwrap();
        a.advance(t2, dt, &mut ra).unwrap();
        let mut b = ParticleSystem::new(&points, 0.0, None).unwrap();
        let mut rb = RngStream::new(seed, 0);
        b.advance((k + m) as f64 * dt, dt, &mut rb).unwrap();
        prop_assert_eq!(a.ids(), b.ids());
        for (x, y) in a.positions().iter().zip(b.positions()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn diffusive_scaling_is_pathwise(points in sorted_points(), seed in any::<u64>()) {
        // space ×2 and time ×4 with the same normals gives the same clusters
        let a = simulate_coalescing(&points, 1.0, 0.01, &mut RngStream::new(seed, 0), None).unwrap();
        let scaled: Vec<f64> = points.iter().map(|x| 2.0 * x).collect();
        let b = simulate_coalescing(&scaled, 4.0, 0.04, &mut RngStream::new(seed, 0), None).unwrap();
        prop_assert_eq!(a.ids(), b.ids());
        for (x, y) in a.positions().iter().zip(b.positions()) {
            prop_assert!((2.0 * x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn single_particle_is_brownian() {
    let ends = par_ensemble(20_000, 21, |_, r| Ok(simulate_coalescing(&[0.3], 2.0, 0.05, r, None)?.positions()[0])).unwrap();
    let s = SampleSummary::new(&ends, None).unwrap();
    assert!((s.mean - 0.3).abs() < 4.0 * s.se);
    // variance 2 with se ≈ 2·√(2/n)
    assert!((sample_variance(&ends) - 2.0).abs() < 4.0 * 2.0 * (2.0 / 20_000.0f64).sqrt());
}

#[test]
fn far_apart_particles_move_independently() {
    let pairs = par_ensemble(20_000, 22, |_, r| {
        let s = simulate_coalescing(&[-20.0, 20.0], 1.0, 0.05, r, None)?;
        Ok((s.positions()[0] + 20.0, s.positions()[1] - 20.0))
    })
    .unwrap();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    assert!(correlation(&a, &b).abs() < 4.0 / (20_000.0f64).sqrt());
}

#[test]
fn pair_meeting_probability_matches_wedge_exit() {
    // meeting by T has probability 1 - γ_wedge(T, (0, g))
    let (gap, horizon) = (1.0, 1.0);
    let met = par_ensemble(5000, 23, |_, r| {
        let s = simulate_coalescing(&[0.0, gap], horizon, 1e-4, r, None)?;
        Ok(if s.live_count() == 1 { 1.0 } else { 0.0 })
    })
    .unwrap();
    let s = SampleSummary::new(&met, None).unwrap();
    let p = 1.0 - exit_prob(&DomainSpec::Wedge2, horizon, &[0.0, gap]).unwrap();
    // discrete merge checks miss some meetings, O(√dt)
    assert!(s.mean <= p + 4.0 * s.se && s.mean > p - 0.02 - 4.0 * s.se, "{} vs {p}", s.mean);
}

#[test]
fn merged_particles_move_together() {
    let mut rng = RngStream::new(24, 0);
    let sys = simulate_coalescing_recorded(&[0.0, 1e-3], 1.0, 1e-3, &mut rng, None).unwrap();
    let hist = sys.history().unwrap();
    let k = hist.iter().position(|h| h.ids.len() == 1).expect("close pair meets");
    assert!(hist[k..].iter().all(|h| h.ids == [0]));
}

//! Samplers of the Brownian meander on [0, T]: the conditioned SDE started
//! from its exact entrance law, the Imhof-weighted Bessel-3 process, and
//! brute-force rejection of Brownian paths started just above zero.

use serde::{Deserialize, Serialize};

use crate::analytic::{entrance_table, halfline_drift, halfline_survival, imhof_weight, DomainSpec};
use crate::error::{invalid, Error, Result};
use crate::quad::{integrate_to_inf, QuadOptions};
use crate::rng::RngStream;
use crate::sde::{euler_core, par_ensemble, Monitoring, PathMeta, PathRealization, Record, RetryPolicy, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Sde,
    Bessel,
    Rejection,
}

impl Sampler {
    pub fn tag(self) -> &'static str {
        match self {
            Sampler::Sde => "sde",
            Sampler::Bessel => "bessel",
            Sampler::Rejection => "rejection",
        }
    }
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sde" => Ok(Sampler::Sde),
            "bessel" => Ok(Sampler::Bessel),
            "rejection" => Ok(Sampler::Rejection),
            other => invalid(format!("unknown sampler '{other}' (expected sde, bessel or rejection)")),
        }
    }
}

fn check_horizon(horizon: f64, grid: &TimeGrid) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidTime(horizon));
    }
    if grid.horizon() != horizon {
        return invalid(format!("grid horizon {} differs from T = {horizon}", grid.horizon()));
    }
    Ok(())
}

/// Meander path from the SDE dY = ∂_y log γ_{ℝ+}(T - t, Y) dt + dW.
///
/// The value at the first grid time ε₀ > 0 is drawn from the exact entrance
/// law. If the grid stops at T - ε₁ < T, a last unconditioned Gaussian step
/// of variance ε₁ (redrawn while nonpositive) reaches T.
pub fn sample_meander_sde(horizon: f64, grid: &TimeGrid, rng: &mut RngStream) -> Result<PathRealization> {
    sample_meander_sde_recorded(horizon, grid, rng, Record::All)
}

/// [`sample_meander_sde`] keeping only the selected grid indices. Index
/// `grid.len()` denotes the terminal time T when the grid stops short of it.
pub fn sample_meander_sde_recorded(
    horizon: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    record: Record<'_>,
) -> Result<PathRealization> {
    check_horizon(horizon, grid)?;
    if !(grid.eps_start() > 0.0) {
        return invalid("the meander SDE needs a grid starting at ε₀ > 0");
    }
    let table = entrance_table(horizon, grid.start())?;
    let y0 = table.sample(rng);
    let domain = DomainSpec::positive_half_line();
    let policy = RetryPolicy::default();
    let (mut path, end) = euler_core(
        |t, y, out| out[0] = halfline_drift(horizon - t, y[0]),
        Some(&domain),
        &[y0],
        grid,
        rng,
        policy,
        record,
    )?;
    if grid.eps_end() > 0.0 {
        let last = terminal_step(end[0], grid.eps_end(), rng, policy, &mut path)?;
        if record.keeps(grid.len()) {
            path.push(horizon, &[last]);
        }
    }
    path.meta.sampler = Sampler::Sde.tag().into();
    Ok(path)
}

fn terminal_step(y: f64, eps: f64, rng: &mut RngStream, policy: RetryPolicy, path: &mut PathRealization) -> Result<f64> {
    let sd = eps.sqrt();
    for _ in 0..=policy.max_retries {
        let v = y + sd * rng.normal();
        if v > 0.0 {
            return Ok(v);
        }
        path.meta.retries += 1;
    }
    Err(Error::ExitFailure {
        time: path.times.last().copied().unwrap_or(0.0),
        retries: policy.max_retries,
        halvings: 0,
    })
}

/// Bessel-3 path (norm of a 3-D Brownian motion from 0) on the grid, with
/// the Imhof weight √(πT)/(√2 Z(T)) that turns it into a meander sample.
/// The path is extended to T when the grid ends before it.
pub fn sample_meander_bessel(horizon: f64, grid: &TimeGrid, rng: &mut RngStream) -> Result<PathRealization> {
    sample_meander_bessel_recorded(horizon, grid, rng, Record::All)
}

pub fn sample_meander_bessel_recorded(
    horizon: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    record: Record<'_>,
) -> Result<PathRealization> {
    check_horizon(horizon, grid)?;
    let mut times: Vec<f64> = grid.times().to_vec();
    if grid.end() < horizon {
        times.push(horizon);
    }
    let mut path = PathRealization {
        times: Vec::new(),
        values: Vec::new(),
        dim: 1,
        weight: 1.0,
        meta: PathMeta {
            sampler: Sampler::Bessel.tag().into(),
            seed: rng.seed(),
            stream: rng.index(),
            ..PathMeta::default()
        },
    };
    let mut b = [0.0f64; 3];
    let mut prev = 0.0;
    for (k, &t) in times.iter().enumerate() {
        let sd = (t - prev).sqrt();
        for c in &mut b {
            *c += sd * rng.normal();
        }
        prev = t;
        if record.keeps(k) {
            path.push(t, &[norm3(&b)]);
        }
    }
    let z_t = norm3(&b);
    path.weight = imhof_weight(horizon, z_t)?;
    Ok(path)
}

fn norm3(b: &[f64; 3]) -> f64 {
    (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
}

/// Outcome of the rejection sampler.
#[derive(Debug, Clone)]
pub struct RejectionDraw {
    pub path: PathRealization,
    pub attempts: u64,
}

/// Brownian motion from y₀ > 0 on the grid, retried until it stays positive
/// (checked as `monitoring` says). The grid is read as absolute times with
/// B(grid start) = y₀.
pub fn sample_meander_rejection(
    horizon: f64,
    y0: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    max_attempts: u64,
) -> Result<RejectionDraw> {
    sample_meander_rejection_recorded(horizon, y0, grid, rng, max_attempts, Monitoring::default(), Record::All)
}

pub fn sample_meander_rejection_recorded(
    horizon: f64,
    y0: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    max_attempts: u64,
    monitoring: Monitoring,
    record: Record<'_>,
) -> Result<RejectionDraw> {
    check_horizon(horizon, grid)?;
    if !(y0 > 0.0 && y0.is_finite()) {
        return invalid(format!("rejection start must be positive, got {y0}"));
    }
    let times = grid.times();
    let dt: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let keeps: Vec<usize> = match record {
        Record::All => (0..times.len()).collect(),
        Record::Indices(ix) => ix.to_vec(),
    };
    let mut kept = Vec::with_capacity(keeps.len());
    for attempt in 1..=max_attempts {
        kept.clear();
        let mut y = y0;
        let mut next_keep = 0;
        if keeps.first() == Some(&0) {
            kept.push(y);
            next_keep = 1;
        }
        let mut alive = true;
        for (k, &h) in dt.iter().enumerate() {
            let next = y + h.sqrt() * rng.normal();
            if next <= 0.0 || monitoring.crossed(y, next, h, rng) {
                alive = false;
                break;
            }
            y = next;
            if keeps.get(next_keep) == Some(&(k + 1)) {
                kept.push(y);
                next_keep += 1;
            }
        }
        if alive {
            let path = PathRealization {
                times: keeps.iter().map(|&k| times[k]).collect(),
                values: kept,
                dim: 1,
                weight: 1.0,
                meta: PathMeta {
                    sampler: Sampler::Rejection.tag().into(),
                    seed: rng.seed(),
                    stream: rng.index(),
                    retries: attempt - 1,
                    halvings: 0,
                },
            };
            return Ok(RejectionDraw { path, attempts: attempt });
        }
    }
    Err(Error::AttemptsExhausted { attempts: max_attempts })
}

/// √T ∫₀^∞ y² γ_{ℝ+}(T - t, √t y) e^{-y²/2} dy, which equals E[Y(t)] for the meander.
pub fn lemma1_rhs(horizon: f64, t: f64) -> Result<f64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidTime(horizon));
    }
    if !(0.0..=horizon).contains(&t) {
        return invalid(format!("t must lie in [0, {horizon}], got {t}"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let rest = horizon - t;
    let st = t.sqrt();
    let f = |y: f64| {
        let g = if rest > 0.0 { halfline_survival(rest, st * y) } else { 1.0 };
        y * y * g * (-0.5 * y * y).exp()
    };
    Ok(horizon.sqrt() * integrate_to_inf(f, 0.0, QuadOptions::abs(1e-10))?)
}

/// An ensemble from one sampler. For rejection, `attempts` is the total
/// number of Brownian paths simulated.
#[derive(Debug, Clone)]
pub struct MeanderEnsemble {
    pub paths: Vec<PathRealization>,
    pub horizon: f64,
    pub sampler: Sampler,
    pub y0: Option<f64>,
    pub attempts: u64,
}

impl MeanderEnsemble {
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.sampler == Sampler::Rejection).then(|| self.paths.len() as f64 / self.attempts as f64)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.weight).collect()
    }

    /// Values of coordinate 0 at time t across the ensemble.
    pub fn values_at(&self, t: f64) -> Option<Vec<f64>> {
        self.paths.iter().map(|p| p.value_at(t).map(|v| v[0])).collect()
    }

    pub fn endpoints(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.last()[0]).collect()
    }
}

/// Configuration shared by the ensemble builders.
#[derive(Debug, Clone)]
pub struct EnsembleSpec<'a> {
    pub sampler: Sampler,
    pub horizon: f64,
    pub grid: &'a TimeGrid,
    pub n: usize,
    pub seed: u64,
    /// rejection start; defaults to 1e-3 √T
    pub y0: Option<f64>,
    pub max_attempts: u64,
    pub monitoring: Monitoring,
    pub record: Record<'a>,
}

/// Builds `n` paths in parallel; path i uses stream i of `seed`.
pub fn meander_ensemble(spec: &EnsembleSpec<'_>) -> Result<MeanderEnsemble> {
    let EnsembleSpec {
        sampler,
        horizon,
        grid,
        n,
        seed,
        y0,
        max_attempts,
        monitoring,
        record,
    } = *spec;
    let y0_used = y0.unwrap_or(1e-3 * horizon.sqrt());
    let draws = par_ensemble(n, seed, |_, rng| match sampler {
        Sampler::Sde => sample_meander_sde_recorded(horizon, grid, rng, record).map(|p| (p, 1)),
        Sampler::Bessel => sample_meander_bessel_recorded(horizon, grid, rng, record).map(|p| (p, 1)),
        Sampler::Rejection => sample_meander_rejection_recorded(horizon, y0_used, grid, rng, max_attempts, monitoring, record)
            .map(|d| (d.path, d.attempts)),
    })?;
    let attempts = draws.iter().map(|d| d.1).sum();
    Ok(MeanderEnsemble {
        paths: draws.into_iter().map(|d| d.0).collect(),
        horizon,
        sampler,
        y0: (sampler == Sampler::Rejection).then_some(y0_used),
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn mean_identity_endpoints() {
        let v = lemma1_rhs(1.0, 1.0).unwrap();
        assert!((v - (PI / 2.0).sqrt()).abs() < 1e-9);
        let v = lemma1_rhs(2.0, 2.0).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-9);
        assert!(lemma1_rhs(1.0, 1e-9).unwrap() < 1e-3);
        assert_eq!(lemma1_rhs(1.0, 0.0).unwrap(), 0.0);
        assert!(lemma1_rhs(1.0, 1.5).is_err());
    }

    #[test]
    fn mean_identity_is_continuous_and_increasing() {
        let mut prev = 0.0;
        for i in 1..=200 {
            let t = i as f64 / 200.0;
            let v = lemma1_rhs(1.0, t).unwrap();
            assert!(v > prev);
            assert!(v - prev < 0.2);
            prev = v;
        }
    }

    #[test]
    fn mean_identity_matches_entrance_mean() {
        // E[Y(s)] under the entrance density, by an independent quadrature
        let (t_horizon, s) = (1.0, 0.3);
        let mean = crate::quad::integrate(
            |z| z * crate::analytic::meander_entrance_density(t_horizon, s, z.max(1e-300)).unwrap(),
            1e-300,
            15.0,
            QuadOptions::abs(1e-12),
        )
        .unwrap();
        assert!((mean - lemma1_rhs(t_horizon, s).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn bessel_weight_is_imhof() {
        let g = make_grid(1.0, 20, 0.0, 1e-6, 2).unwrap();
        let mut rng = RngStream::new(3, 0);
        let p = sample_meander_bessel(1.0, &g, &mut rng).unwrap();
        assert_eq!(p.weight, imhof_weight(1.0, p.last()[0]).unwrap());
        assert_eq!(*p.times.last().unwrap(), 1.0);
        assert_eq!(p.value(0)[0], 0.0);
        assert!((1..p.len()).all(|k| p.value(k)[0] > 0.0));
    }

    #[test]
    fn sde_path_is_positive_and_reaches_horizon() {
        let g = make_grid(1.0, 200, 1e-2, 1e-6, 4).unwrap();
        let mut rng = RngStream::new(3, 0);
        let p = sample_meander_sde(1.0, &g, &mut rng).unwrap();
        assert_eq!(*p.times.last().unwrap(), 1.0);
        assert!(p.values.iter().all(|&v| v > 0.0));
        assert!(sample_meander_sde(1.0, &make_grid(1.0, 10, 0.0, 0.0, 0).unwrap(), &mut rng).is_err());
    }

    #[test]
    fn rejection_exhaustion() {
        let g = make_grid(1.0, 100, 0.0, 0.0, 0).unwrap();
        let mut rng = RngStream::new(3, 0);
        let r = sample_meander_rejection(1.0, 1e-9, &g, &mut rng, 3);
        assert!(matches!(r, Err(Error::AttemptsExhausted { attempts: 3 })));
        let ok = sample_meander_rejection(1.0, 3.0, &g, &mut rng, 1000).unwrap();
        assert!(ok.path.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn bridge_monitoring_acceptance_matches_exit_probability() {
        let g = make_grid(1.0, 50, 0.0, 0.0, 0).unwrap();
        let target = crate::analytic::exit_prob(&DomainSpec::positive_half_line(), 1.0, &[0.25]).unwrap();
        let rate = |monitoring: Monitoring| {
            let (mut accepted, mut attempts) = (0u64, 0u64);
            for i in 0..4000 {
                let mut rng = RngStream::new(11, i);
                let d = sample_meander_rejection_recorded(1.0, 0.25, &g, &mut rng, u64::MAX, monitoring, Record::All)
                    .unwrap();
                accepted += 1;
                attempts += d.attempts;
            }
            accepted as f64 / attempts as f64
        };
        let se = (target * (1.0 - target) / 20_000.0).sqrt();
        let bridge = rate(Monitoring::Bridge);
        assert!((bridge - target).abs() < 4.0 * se, "{bridge} vs {target}");
        // grid-only monitoring misses crossings and accepts too often
        assert!(rate(Monitoring::Grid) > target + 4.0 * se);
    }
}

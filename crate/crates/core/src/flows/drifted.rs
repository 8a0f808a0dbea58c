//! Flows with a contracting drift: the stationary point η and the
//! boundaries of its cluster.

use serde::{Deserialize, Serialize};

use super::boundary::{with_vertex, BoundaryPair, OracleDraw};
use super::coalescing::{step_plan, ParticleSystem};
use crate::analytic::stationary::StationaryLaw;
use crate::analytic::{DomainSpec, DriftSpec};
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::sde::{euler_core, Monitoring, PathMeta, PathRealization, Record, RetryPolicy, TimeGrid};

/// Result of one backward-started run of the drifted flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryRun {
    /// number of particles alive at time 0
    pub survivors: usize,
    /// the common position at time 0 when everything coalesced
    pub position: Option<f64>,
    /// time (relative to the start) at which one particle remained
    pub coalescence_time: Option<f64>,
}

/// Runs `n_particles` equally spaced on [-span, span] (shifted to the drift's
/// zero) from time -lookback to 0 and reports how far they coalesced.
pub fn stationary_point_run(
    drift: &DriftSpec,
    lookback: f64,
    span: f64,
    n_particles: usize,
    dt: f64,
    rng: &mut RngStream,
) -> Result<StationaryRun> {
    if n_particles < 2 {
        return invalid("at least two particles are needed");
    }
    if !(span > 0.0 && span.is_finite()) {
        return invalid(format!("span must be positive, got {span}"));
    }
    let center = drift.law()?.mode();
    let points: Vec<f64> = (0..n_particles)
        .map(|i| center - span + 2.0 * span * i as f64 / (n_particles - 1) as f64)
        .collect();
    let mut sys = ParticleSystem::new(&points, -lookback, Some(drift.clone()))?;
    let (n, h) = step_plan(lookback, dt)?;
    let mut coalescence_time = None;
    for k in 0..n {
        sys.advance(h, h, rng)?;
        if coalescence_time.is_none() && sys.live_count() == 1 {
            coalescence_time = Some((k + 1) as f64 * h);
        }
    }
    let survivors = sys.live_count();
    Ok(StationaryRun {
        survivors,
        position: (survivors == 1).then(|| sys.positions()[0]),
        coalescence_time,
    })
}

/// Estimate of η₀: the position of the single survivor at time 0.
/// Partial coalescence is reported as [`Error::NotCoalesced`].
pub fn stationary_point_estimate(
    drift: &DriftSpec,
    lookback: f64,
    span: f64,
    n_particles: usize,
    dt: f64,
    rng: &mut RngStream,
) -> Result<(f64, StationaryRun)> {
    let run = stationary_point_run(drift, lookback, span, n_particles, dt, rng)?;
    match run.position {
        Some(p) => Ok((p, run)),
        None => Err(Error::NotCoalesced {
            survivors: run.survivors,
        }),
    }
}

/// Boundaries of the cluster of η₀ issued from x, from the system
/// dY₁ = (-a(Y₁) + ∂₁ log θ) dt + dW₁, dY₂ = (-a(Y₂) + ∂₂ log θ) dt + dW₂
/// with θ(y₁, y₂) = π((y₁, y₂)).
///
/// Near the start θ ≈ π(x)(y₂ - y₁), so the gap behaves like √2 times a
/// Bessel-3 process and the drifts of the center cancel: at ε₀ the gap is
/// √2 √ε₀ χ₃ and the center x + N(0, ε₀/2).
pub fn sample_infinite_cluster_sde(
    drift: &DriftSpec,
    x: f64,
    horizon: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Result<BoundaryPair> {
    sample_infinite_cluster_sde_recorded(drift, x, horizon, grid, rng, Record::All)
}

pub fn sample_infinite_cluster_sde_recorded(
    drift: &DriftSpec,
    x: f64,
    horizon: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    record: Record<'_>,
) -> Result<BoundaryPair> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidTime(horizon));
    }
    if grid.horizon() != horizon || !(grid.eps_start() > 0.0) {
        return invalid("grid must cover [ε₀, horizon] with ε₀ > 0");
    }
    let law = drift.law()?;
    let eps0 = grid.start();
    let chi3 = (0..3).map(|_| rng.normal().powi(2)).sum::<f64>().sqrt();
    let gap = (2.0 * eps0).sqrt() * chi3;
    let center = x + (0.5 * eps0).sqrt() * rng.normal();
    let y0 = [center - 0.5 * gap, center + 0.5 * gap];
    let mut failure: Option<Error> = None;
    let domain = DomainSpec::Wedge2;
    let result = euler_core(
        |_, y, out| match pair_drift(drift, law, y[0], y[1]) {
            Ok((d1, d2)) => {
                out[0] = d1;
                out[1] = d2;
            }
            Err(e) => {
                failure.get_or_insert(e);
                out[0] = f64::NAN;
            }
        },
        Some(&domain),
        &y0,
        grid,
        rng,
        RetryPolicy::default(),
        record,
    );
    let (path, _) = match (result, failure) {
        (Err(Error::NonFiniteDrift { .. }), Some(e)) => return Err(e),
        (r, _) => r?,
    };
    let mut path = with_vertex(path, x, record);
    path.meta.sampler = "infinite_cluster_sde".into();
    Ok(BoundaryPair { path, x, horizon })
}

fn pair_drift(drift: &DriftSpec, law: &StationaryLaw, y1: f64, y2: f64) -> Result<(f64, f64)> {
    let lt = law.log_theta(drift, y1, y2)?;
    let g1 = (law.log_density(drift, y1) - lt).exp();
    let g2 = (law.log_density(drift, y2) - lt).exp();
    Ok((-drift.eval(y1) - g1, -drift.eval(y2) + g2))
}

/// Settings of the rejection construction for the cluster of η₀.
#[derive(Debug, Clone, Copy)]
pub struct InfiniteOracleSpec {
    pub x: f64,
    pub epsilon: f64,
    pub horizon: f64,
    /// extra time simulated after the horizon to decide divergence
    pub extension: f64,
    /// step used during the extension
    pub extension_dt: f64,
    pub max_attempts: u64,
    /// meeting test between grid times; the bridge rule treats the gap as
    /// driftless over one step
    pub monitoring: Monitoring,
}

/// Two independent solutions of dX = -a(X)dt + dW from x ∓ ε, accepted when
/// they never meet at grid times up to horizon + extension and end on
/// opposite sides of the drift's zero (so they separate for good, bracketing
/// the stationary point). Only the part on `grid` is returned.
pub fn sample_infinite_cluster_oracle(
    drift: &DriftSpec,
    spec: &InfiniteOracleSpec,
    grid: &TimeGrid,
    rng: &mut RngStream,
    record: Record<'_>,
) -> Result<OracleDraw> {
    let InfiniteOracleSpec {
        x,
        epsilon,
        horizon,
        extension,
        extension_dt,
        max_attempts,
        monitoring,
    } = *spec;
    if grid.horizon() != horizon || grid.start() != 0.0 || grid.end() != horizon {
        return invalid("oracle grid must cover [0, horizon]");
    }
    if !(epsilon > 0.0) {
        return invalid(format!("ε must be positive, got {epsilon}"));
    }
    let mode = drift.law()?.mode();
    let (n_ext, h_ext) = if extension > 0.0 { step_plan(extension, extension_dt)? } else { (0, 0.0) };
    let times = grid.times();
    let keeps: Vec<usize> = match record {
        Record::All => (0..times.len()).collect(),
        Record::Indices(ix) => ix.iter().copied().filter(|&k| k < times.len()).collect(),
    };
    let step = |y: &mut f64, h: f64, sd: f64, rng: &mut RngStream| {
        *y += -drift.eval(*y) * h + sd * rng.normal();
    };
    let mut kept = Vec::with_capacity(2 * keeps.len());
    'attempt: for attempt in 1..=max_attempts {
        kept.clear();
        let (mut a, mut b) = (x - epsilon, x + epsilon);
        let mut next = 0;
        if keeps.first() == Some(&0) {
            kept.extend([a, b]);
            next = 1;
        }
        for k in 0..times.len() - 1 {
            let h = times[k + 1] - times[k];
            let sd = h.sqrt();
            let gap = b - a;
            step(&mut a, h, sd, rng);
            step(&mut b, h, sd, rng);
            if a >= b || monitoring.crossed(gap, b - a, 2.0 * h, rng) {
                continue 'attempt;
            }
            if keeps.get(next) == Some(&(k + 1)) {
                kept.extend([a, b]);
                next += 1;
            }
        }
        let sd = h_ext.sqrt();
        for _ in 0..n_ext {
            let gap = b - a;
            step(&mut a, h_ext, sd, rng);
            step(&mut b, h_ext, sd, rng);
            if a >= b || monitoring.crossed(gap, b - a, 2.0 * h_ext, rng) {
                continue 'attempt;
            }
        }
        if !(a < mode && mode < b) {
            continue;
        }
        let path = PathRealization {
            times: keeps.iter().map(|&k| times[k]).collect(),
            values: kept,
            dim: 2,
            weight: 1.0,
            meta: PathMeta {
                sampler: "infinite_cluster_oracle".into(),
                seed: rng.seed(),
                stream: rng.index(),
                retries: attempt - 1,
                halvings: 0,
            },
        };
        return Ok(OracleDraw {
            pair: BoundaryPair { path, x, horizon },
            attempts: attempt,
        });
    }
    Err(Error::AttemptsExhausted { attempts: max_attempts })
}

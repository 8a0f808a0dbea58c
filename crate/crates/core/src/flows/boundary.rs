//! Boundaries (α, β) of the cluster of a point in the Arratia flow: the
//! conditioned pair SDE in the wedge {y₁ < y₂}, and the dual-pair rejection
//! construction it is checked against.

use serde::{Deserialize, Serialize};

use crate::analytic::exit::grad_unchecked;
use crate::analytic::{entrance_table, DomainSpec};
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::sde::{euler_core, Monitoring, PathMeta, PathRealization, Record, RetryPolicy, TimeGrid};

/// A two-dimensional path (α(t), β(t)) with α ≤ β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub path: PathRealization,
    /// the vertex the boundaries emanate from
    pub x: f64,
    pub horizon: f64,
}

impl BoundaryPair {
    pub fn alpha(&self, k: usize) -> f64 {
        self.path.value(k)[0]
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.path.value(k)[1]
    }

    /// β - α at a recorded time.
    pub fn gap_at(&self, t: f64) -> Option<f64> {
        self.path.value_at(t).map(|v| v[1] - v[0])
    }

    pub fn end_gap(&self) -> f64 {
        let v = self.path.last();
        v[1] - v[0]
    }

    /// α ≤ β everywhere and α < β after the first recorded time.
    pub fn is_ordered(&self) -> bool {
        (0..self.path.len()).all(|k| {
            let (a, b) = (self.alpha(k), self.beta(k));
            if k == 0 {
                a <= b
            } else {
                a < b
            }
        })
    }
}

fn check_grid(horizon: f64, grid: &TimeGrid, need_offset: bool) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidTime(horizon));
    }
    if grid.horizon() != horizon {
        return invalid(format!("grid horizon {} differs from T = {horizon}", grid.horizon()));
    }
    if need_offset && !(grid.eps_start() > 0.0) {
        return invalid("the boundary SDE needs a grid starting at ε₀ > 0");
    }
    Ok(())
}

/// Prepends (0, (x, x)) when every point is recorded.
pub(crate) fn with_vertex(mut path: PathRealization, x: f64, record: Record<'_>) -> PathRealization {
    if matches!(record, Record::All) {
        path.times.insert(0, 0.0);
        path.values.splice(0..0, [x, x]);
    }
    path
}

/// Cluster boundaries from the wedge SDE
/// dα = -g dt + dW₁, dβ = g dt + dW₂, g = ∂ log γ_H(T - t, ·) in the gap.
///
/// At the first grid time ε₀ the gap is √2 times an exact meander entrance
/// draw and the center (α + β)/2 is x + N(0, ε₀/2). A grid ending at
/// T - ε₁ is closed by one unconditioned step of variance ε₁ per coordinate,
/// redrawn while it leaves the wedge.
pub fn sample_boundary_sde(x: f64, horizon: f64, grid: &TimeGrid, rng: &mut RngStream) -> Result<BoundaryPair> {
    sample_boundary_sde_recorded(x, horizon, grid, rng, Record::All)
}

/// [`sample_boundary_sde`] keeping the selected grid indices; index
/// `grid.len()` is the terminal time when the grid stops before T.
pub fn sample_boundary_sde_recorded(
    x: f64,
    horizon: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    record: Record<'_>,
) -> Result<BoundaryPair> {
    check_grid(horizon, grid, true)?;
    let eps0 = grid.start();
    let gap = std::f64::consts::SQRT_2 * entrance_table(horizon, eps0)?.sample(rng);
    let center = x + (0.5 * eps0).sqrt() * rng.normal();
    let y0 = [center - 0.5 * gap, center + 0.5 * gap];
    let domain = DomainSpec::Wedge2;
    let policy = RetryPolicy::default();
    let (path, end) = euler_core(
        |t, y, out| grad_unchecked(&DomainSpec::Wedge2, horizon - t, y, out),
        Some(&domain),
        &y0,
        grid,
        rng,
        policy,
        record,
    )?;
    let mut path = with_vertex(path, x, record);
    if grid.eps_end() > 0.0 {
        let sd = grid.eps_end().sqrt();
        let mut last = None;
        for _ in 0..=policy.max_retries {
            let cand = [end[0] + sd * rng.normal(), end[1] + sd * rng.normal()];
            if cand[0] < cand[1] {
                last = Some(cand);
                break;
            }
            path.meta.retries += 1;
        }
        let last = last.ok_or(Error::ExitFailure {
            time: grid.end(),
            retries: policy.max_retries,
            halvings: 0,
        })?;
        if record.keeps(grid.len()) {
            path.push(horizon, &last);
        }
    }
    path.meta.sampler = "boundary_sde".into();
    Ok(BoundaryPair { path, x, horizon })
}

/// Outcome of a rejection construction.
#[derive(Debug, Clone)]
pub struct OracleDraw {
    pub pair: BoundaryPair,
    pub attempts: u64,
}

/// Two independent Brownian motions from x - ε and x + ε on the grid
/// (absolute times, starting at the grid start), retried until they stay
/// strictly ordered (checked as `monitoring` says; the gap has variance 2Δt
/// per step).
pub fn sample_boundary_oracle(
    x: f64,
    epsilon: f64,
    horizon: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    max_attempts: u64,
) -> Result<OracleDraw> {
    sample_boundary_oracle_recorded(x, epsilon, horizon, grid, rng, max_attempts, Monitoring::default(), Record::All)
}

pub fn sample_boundary_oracle_recorded(
    x: f64,
    epsilon: f64,
    horizon: f64,
    grid: &TimeGrid,
    rng: &mut RngStream,
    max_attempts: u64,
    monitoring: Monitoring,
    record: Record<'_>,
) -> Result<OracleDraw> {
    check_grid(horizon, grid, false)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return invalid(format!("ε must be positive, got {epsilon}"));
    }
    let times = grid.times();
    let dt: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let keeps: Vec<usize> = match record {
        Record::All => (0..times.len()).collect(),
        Record::Indices(ix) => ix.iter().copied().filter(|&k| k < times.len()).collect(),
    };
    let mut kept = Vec::with_capacity(2 * keeps.len());
    for attempt in 1..=max_attempts {
        kept.clear();
        let (mut a, mut b) = (x - epsilon, x + epsilon);
        let mut next = 0;
        if keeps.first() == Some(&0) {
            kept.extend([a, b]);
            next = 1;
        }
        let mut alive = true;
        for (k, &h) in dt.iter().enumerate() {
            let s = h.sqrt();
            let gap = b - a;
            a += s * rng.normal();
            b += s * rng.normal();
            if a >= b || monitoring.crossed(gap, b - a, 2.0 * h, rng) {
                alive = false;
                break;
            }
            if keeps.get(next) == Some(&(k + 1)) {
                kept.extend([a, b]);
                next += 1;
            }
        }
        if alive {
            let path = PathRealization {
                times: keeps.iter().map(|&k| times[k]).collect(),
                values: kept,
                dim: 2,
                weight: 1.0,
                meta: PathMeta {
                    sampler: "boundary_oracle".into(),
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
    }
    Err(Error::AttemptsExhausted { attempts: max_attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::make_grid;

    #[test]
    fn sde_pair_starts_at_vertex_and_stays_ordered() {
        let g = make_grid(1.0, 200, 1e-3, 1e-6, 8).unwrap();
        let mut r = RngStream::new(2, 5);
        let p = sample_boundary_sde(0.7, 1.0, &g, &mut r).unwrap();
        assert_eq!(p.path.value(0), &[0.7, 0.7]);
        assert_eq!(*p.path.times.last().unwrap(), 1.0);
        assert!(p.is_ordered());
    }

    #[test]
    fn oracle_pair_is_ordered_and_counts_attempts() {
        let g = make_grid(1.0, 100, 0.0, 0.0, 0).unwrap();
        let mut r = RngStream::new(2, 5);
        let d = sample_boundary_oracle(0.0, 0.05, 1.0, &g, &mut r, 100_000).unwrap();
        assert!(d.pair.is_ordered());
        assert_eq!(d.pair.path.meta.retries + 1, d.attempts);
        assert!(matches!(
            sample_boundary_oracle(0.0, 1e-12, 1.0, &g, &mut r, 2),
            Err(Error::AttemptsExhausted { .. })
        ));
    }
}

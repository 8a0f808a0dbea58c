//! Time grids and an Euler–Maruyama driver for SDEs whose drift blows up at
//! the boundary of a domain and at the terminal time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::DomainSpec;
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Strictly increasing times covering [ε₀, T - ε₁].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
    horizon: f64,
    eps_start: f64,
    eps_end: f64,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, horizon: f64, eps_start: f64, eps_end: f64) -> Result<Self> {
        if times.len() < 2 {
            return invalid("a time grid needs at least two points");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return invalid("grid times must be finite and strictly increasing");
        }
        let tol = 1e-12 * horizon.max(1.0);
        if (times[0] - eps_start).abs() > tol || (times[times.len() - 1] - (horizon - eps_end)).abs() > tol {
            return invalid(format!(
                "grid must run from {eps_start} to {}, got [{}, {}]",
                horizon - eps_end,
                times[0],
                times[times.len() - 1]
            ));
        }
        Ok(Self {
            times,
            horizon,
            eps_start,
            eps_end,
        })
    }

    /// n equal steps on [0, T].
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        make_grid(horizon, n, 0.0, 0.0, 0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn eps_start(&self) -> f64 {
        self.eps_start
    }

    pub fn eps_end(&self) -> f64 {
        self.eps_end
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn max_step(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// A copy with the given interior times added (duplicates are ignored).
    pub fn insert_times(&self, extra: &[f64]) -> Result<Self> {
        let mut times = self.times.clone();
        for &t in extra {
            if !(t > self.start() && t < self.end()) {
                if t == self.start() || t == self.end() {
                    continue;
                }
                return invalid(format!("time {t} lies outside the grid"));
            }
            times.push(t);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        Self::new(times, self.horizon, self.eps_start, self.eps_end)
    }

    /// Index of the grid time within a relative 1e-12 of t.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon.max(1.0);
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }
}

/// Uniform grid on [ε₀, T - ε₁] with `n_uniform` steps; each endpoint with a
/// positive offset gets `refine_levels` extra points at distances h/2, h/4, …
pub fn make_grid(
    horizon: f64,
    n_uniform: usize,
    eps_start: f64,
    eps_end: f64,
    refine_levels: u32,
) -> Result<TimeGrid> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidTime(horizon));
    }
    if !(eps_start >= 0.0 && eps_end >= 0.0 && eps_start + eps_end < horizon) {
        return invalid(format!(
            "offsets {eps_start} + {eps_end} must be nonnegative and below the horizon {horizon}"
        ));
    }
    if n_uniform == 0 {
        return invalid("grid needs at least one step");
    }
    if refine_levels > 60 {
        return invalid("at most 60 refinement levels");
    }
    let end = horizon - eps_end;
    let h = (end - eps_start) / n_uniform as f64;
    let mut times: Vec<f64> = (0..n_uniform).map(|i| eps_start + h * i as f64).collect();
    times.push(end);
    let mut scale = 1.0;
    for _ in 0..refine_levels {
        scale *= 0.5;
        if eps_start > 0.0 {
            times.push(eps_start + h * scale);
        }
        if eps_end > 0.0 {
            times.push(end - h * scale);
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    TimeGrid::new(times, horizon, eps_start, eps_end)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub sampler: String,
    pub seed: u64,
    pub stream: u64,
    /// rejected Gaussian draws (redraws, or whole attempts for rejection samplers)
    pub retries: u64,
    /// inserted half steps
    pub halvings: u64,
}

/// A sampled trajectory: `values` holds `dim` coordinates per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRealization {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub dim: usize,
    pub weight: f64,
    pub meta: PathMeta,
}

impl PathRealization {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize, weight: f64, meta: PathMeta) -> Result<Self> {
        let p = Self {
            times,
            values,
            dim,
            weight,
            meta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.values.len() != self.times.len() * self.dim {
            return invalid("path values do not match its times");
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return invalid(format!("path weight must be positive, got {}", self.weight));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return invalid("path values must be finite");
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("path times must be strictly increasing");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    /// Value at a recorded time (within a relative 1e-12).
    pub fn value_at(&self, t: f64) -> Option<&[f64]> {
        let tol = 1e-12 * t.abs().max(1.0);
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then(|| self.value(i))
    }

    pub(crate) fn push(&mut self, t: f64, y: &[f64]) {
        self.times.push(t);
        self.values.extend_from_slice(y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub max_halvings: u32,
    /// With a domain, a step is halved (up to `max_drift_halvings` times)
    /// while |b|·Δt exceeds this fraction of the distance to the boundary.
    pub drift_fraction: f64,
    pub max_drift_halvings: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 32,
            max_halvings: 10,
            drift_fraction: 0.25,
            max_drift_halvings: 40,
        }
    }
}

/// How the rejection oracles decide that a path stayed inside.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitoring {
    /// only at grid times
    Grid,
    /// at grid times, and between them through the Brownian-bridge crossing
    /// probability exp(-2uv/(σ²Δt)) for distances u, v to the boundary
    #[default]
    Bridge,
}

impl Monitoring {
    /// Whether a Gaussian step from distance `u` to distance `v` (both
    /// positive) crossed the boundary in between.
    #[inline]
    pub fn crossed(self, u: f64, v: f64, variance: f64, rng: &mut RngStream) -> bool {
        match self {
            Monitoring::Grid => false,
            Monitoring::Bridge => rng.uniform_open() < (-2.0 * u * v / variance).exp(),
        }
    }
}

impl std::str::FromStr for Monitoring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Monitoring::Grid),
            "bridge" => Ok(Monitoring::Bridge),
            other => invalid(format!("unknown monitoring '{other}' (expected grid or bridge)")),
        }
    }
}

/// Which grid points to keep in the returned path.
#[derive(Debug, Clone, Copy)]
pub enum Record<'a> {
    /// every grid point, plus points inserted by step halving
    All,
    /// the listed (sorted) grid indices only
    Indices(&'a [usize]),
}

impl Record<'_> {
    pub fn keeps(&self, k: usize) -> bool {
        match self {
            Record::All => true,
            Record::Indices(ix) => ix.binary_search(&k).is_ok(),
        }
    }
}

/// Euler–Maruyama: Y ← Y + b(t, Y)Δt + √Δt ξ, recording every grid point.
///
/// With a domain, a proposal outside it is redrawn up to `max_retries`
/// times; then the step is halved (inserting a grid point), at most
/// `max_halvings` times, before giving up with [`Error::ExitFailure`].
pub fn euler_maruyama<F>(
    drift: F,
    domain: Option<&DomainSpec>,
    x0: &[f64],
    grid: &TimeGrid,
    rng: &mut RngStream,
    policy: RetryPolicy,
) -> Result<PathRealization>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    euler_maruyama_recorded(drift, domain, x0, grid, rng, policy, Record::All)
}

/// [`euler_maruyama`] keeping only the grid points selected by `record`.
pub fn euler_maruyama_recorded<F>(
    drift: F,
    domain: Option<&DomainSpec>,
    x0: &[f64],
    grid: &TimeGrid,
    rng: &mut RngStream,
    policy: RetryPolicy,
    record: Record<'_>,
) -> Result<PathRealization>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    euler_core(drift, domain, x0, grid, rng, policy, record).map(|(p, _)| p)
}

/// The driver behind [`euler_maruyama_recorded`]; also returns the state at
/// the last grid time whether or not it was recorded.
pub(crate) fn euler_core<F>(
    mut drift: F,
    domain: Option<&DomainSpec>,
    x0: &[f64],
    grid: &TimeGrid,
    rng: &mut RngStream,
    policy: RetryPolicy,
    record: Record<'_>,
) -> Result<(PathRealization, Vec<f64>)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = x0.len();
    if let Some(d) = domain {
        d.check_interior(x0)?;
    }
    if dim == 0 || x0.iter().any(|v| !v.is_finite()) {
        return invalid("initial point must be finite and nonempty");
    }
    let times = grid.times();
    let mut path = PathRealization {
        times: Vec::new(),
        values: Vec::new(),
        dim,
        weight: 1.0,
        meta: PathMeta {
            sampler: "euler".into(),
            seed: rng.seed(),
            stream: rng.index(),
            ..PathMeta::default()
        },
    };
    if record.keeps(0) {
        path.push(times[0], x0);
    }
    let keep_inserted = matches!(record, Record::All);
    let mut y = x0.to_vec();
    let mut b = vec![0.0; dim];
    let mut prop = vec![0.0; dim];
    for k in 0..times.len() - 1 {
        let target = times[k + 1];
        let mut t = times[k];
        while t < target {
            let mut dt = target - t;
            drift(t, &y, &mut b);
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteDrift { time: t, point: y });
            }
            if let Some(d) = domain {
                // an Euler step moving a large part of the way to the wall is
                // where the singular drift overshoots; shorten it instead
                let reach = policy.drift_fraction * d.boundary_distance(&y);
                let speed = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mut cuts = 0;
                while speed * dt > reach && cuts < policy.max_drift_halvings {
                    dt *= 0.5;
                    cuts += 1;
                }
                path.meta.halvings += cuts as u64;
            }
            let mut halvings = 0u32;
            loop {
                let sd = dt.sqrt();
                let mut accepted = false;
                for _ in 0..=policy.max_retries {
                    for i in 0..dim {
                        prop[i] = y[i] + b[i] * dt + sd * rng.normal();
                    }
                    if domain.is_none_or(|d| d.contains(&prop)) {
                        accepted = true;
                        break;
                    }
                    path.meta.retries += 1;
                }
                if accepted {
                    break;
                }
                // the last failure is not a retry but the trigger for halving
                path.meta.retries -= 1;
                if halvings == policy.max_halvings {
                    return Err(Error::ExitFailure {
                        time: t,
                        retries: policy.max_retries,
                        halvings,
                    });
                }
                halvings += 1;
                path.meta.halvings += 1;
                dt *= 0.5;
            }
            let t_next = if dt == target - t { target } else { t + dt };
            std::mem::swap(&mut y, &mut prop);
            t = t_next;
            if t < target && keep_inserted {
                path.push(t, &y);
            }
        }
        if record.keeps(k + 1) {
            path.push(target, &y);
        }
    }
    Ok((path, y))
}

/// First grid time at which the path lies outside the closure of the domain.
pub fn first_exit_time(path: &PathRealization, domain: &DomainSpec) -> Option<f64> {
    (0..path.len())
        .find(|&k| {
            let v = path.value(k);
            v.iter().any(|x| !x.is_finite()) || domain.signed_distance(v) < 0.0
        })
        .map(|k| path.times[k])
}

/// Runs `f` for stream indices 0..n in parallel. Results come back in index
/// order; on failure the error of the lowest failing index is returned, so
/// the outcome does not depend on scheduling.
pub fn par_ensemble<T, F>(n: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            f(i, &mut rng)
        })
        .collect();
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_example() {
        let g = make_grid(1.0, 4, 0.0, 0.0, 0).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn end_refinement_halves_toward_cutoff() {
        let g = make_grid(1.0, 4, 0.0, 1e-6, 3).unwrap();
        assert_eq!(g.steps(), 4 + 3);
        let t = g.times();
        let end = 1.0 - 1e-6;
        assert_eq!(t[t.len() - 1], end);
        let h = (end - 0.0) / 4.0;
        let last: Vec<f64> = t.windows(2).rev().take(4).map(|w| w[1] - w[0]).collect();
        let expect = [h / 8.0, h / 8.0, h / 4.0, h / 2.0];
        for (step, want) in last.iter().zip(expect) {
            assert!((step - want).abs() < 1e-15, "{last:?}");
        }
    }

    #[test]
    fn both_ends_refined() {
        let g = make_grid(2.0, 10, 1e-3, 1e-6, 5).unwrap();
        assert_eq!(g.steps(), 10 + 2 * 5);
        assert_eq!(g.start(), 1e-3);
        assert!(g.max_step() <= (2.0 - 1e-3 - 1e-6) / 10.0 + 1e-15);
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(make_grid(0.0, 4, 0.0, 0.0, 0).is_err());
        assert!(make_grid(1.0, 4, 0.6, 0.4, 0).is_err());
        assert!(make_grid(1.0, 0, 0.0, 0.0, 0).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5, 1.0], 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn insert_times_adds_checkpoints() {
        let g = make_grid(1.0, 3, 0.0, 0.0, 0).unwrap().insert_times(&[0.5, 0.5, 1.0]).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.index_of(0.5), Some(2));
        assert_eq!(g.index_of(0.6), None);
    }

    #[test]
    fn deterministic_given_stream() {
        let g = make_grid(1.0, 50, 0.0, 0.0, 0).unwrap();
        let run = || {
            let mut rng = RngStream::new(9, 4);
            euler_maruyama(|_, y, out| out[0] = -y[0], None, &[1.0], &g, &mut rng, RetryPolicy::default())
                .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
    }

    #[test]
    fn first_exit_time_examples() {
        let d = DomainSpec::positive_half_line();
        let mk = |v: Vec<f64>| {
            let times = (0..v.len()).map(|i| i as f64).collect();
            PathRealization::new(times, v, 1, 1.0, PathMeta::default()).unwrap()
        };
        assert_eq!(first_exit_time(&mk(vec![1.0, 2.0, 0.5, 0.1]), &d), None);
        assert_eq!(first_exit_time(&mk(vec![1.0, 2.0, 0.5, -0.1, 1.0]), &d), Some(3.0));
    }

    #[test]
    fn enforcement_keeps_path_inside() {
        let g = make_grid(1.0, 100, 0.0, 0.0, 0).unwrap();
        let d = DomainSpec::interval(0.0, 0.3).unwrap();
        let mut rng = RngStream::new(1, 0);
        let p = euler_maruyama(|_, _, out| out[0] = 0.0, Some(&d), &[0.15], &g, &mut rng, RetryPolicy::default())
            .unwrap();
        assert!((0..p.len()).all(|k| d.contains(p.value(k))));
        assert!(p.meta.retries > 0);
    }

    #[test]
    fn hopeless_domain_fails() {
        let g = make_grid(1.0, 10, 0.0, 0.0, 0).unwrap();
        let d = DomainSpec::interval(0.0, 1e-9).unwrap();
        let mut rng = RngStream::new(1, 0);
        let policy = RetryPolicy {
            max_retries: 2,
            max_halvings: 1,
            ..RetryPolicy::default()
        };
        let r = euler_maruyama(|_, _, out| out[0] = 0.0, Some(&d), &[5e-10], &g, &mut rng, policy);
        assert!(matches!(r, Err(Error::ExitFailure { .. })));
    }

    #[test]
    fn non_finite_drift_reported() {
        let g = make_grid(1.0, 10, 0.0, 0.0, 0).unwrap();
        let mut rng = RngStream::new(1, 0);
        let r = euler_maruyama(|_, _, out| out[0] = f64::NAN, None, &[1.0], &g, &mut rng, RetryPolicy::default());
        assert!(matches!(r, Err(Error::NonFiniteDrift { .. })));
    }

    #[test]
    fn recorded_subset() {
        let g = make_grid(1.0, 10, 0.0, 0.0, 0).unwrap();
        let mut rng = RngStream::new(1, 0);
        let p = euler_maruyama_recorded(
            |_, _, out| out[0] = 0.0,
            None,
            &[0.0],
            &g,
            &mut rng,
            RetryPolicy::default(),
            Record::Indices(&[5, 10]),
        )
        .unwrap();
        assert_eq!(p.times, vec![0.5, 1.0]);
    }
}

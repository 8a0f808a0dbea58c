//! n-point motions of a discretized coalescing flow, with or without drift.

use serde::{Deserialize, Serialize};

use crate::analytic::DriftSpec;
use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Source of the standard normal increments driving a particle system.
///
/// `particle` is the identifier of the moving block (its lowest initial
/// index) and `step` the global step counter, so coupled sources can hand
/// the same Brownian path to a block across simulations.
pub trait FlowNoise {
    fn normal(&mut self, particle: usize, step: u64) -> f64;
}

impl FlowNoise for RngStream {
    #[inline]
    fn normal(&mut self, _particle: usize, _step: u64) -> f64 {
        RngStream::normal(self)
    }
}

/// Fixed fine-step normals per particle, replayed at a coarser step: each
/// coarse normal is the normalized sum of `factor` consecutive fine ones, so
/// runs at different step sizes see the same Brownian paths.
#[derive(Debug, Clone)]
pub struct CoarsenedNoise {
    fine: Vec<f64>,
    fine_steps: usize,
    factor: usize,
    scale: f64,
}

impl CoarsenedNoise {
    /// Draws `fine_steps` normals for each of `particles` particles.
    pub fn draw(particles: usize, fine_steps: usize, rng: &mut RngStream) -> Self {
        let fine = (0..particles * fine_steps).map(|_| rng.normal()).collect();
        Self {
            fine,
            fine_steps,
            factor: 1,
            scale: 1.0,
        }
    }

    /// Replays the same normals grouped `factor` at a time.
    pub fn coarsened(&mut self, factor: usize) -> Result<&mut Self> {
        if factor == 0 || self.fine_steps % factor != 0 {
            return invalid(format!("factor {factor} does not divide {} fine steps", self.fine_steps));
        }
        self.factor = factor;
        self.scale = 1.0 / (factor as f64).sqrt();
        Ok(self)
    }

    pub fn fine_steps(&self) -> usize {
        self.fine_steps
    }
}

impl FlowNoise for CoarsenedNoise {
    fn normal(&mut self, particle: usize, step: u64) -> f64 {
        let start = particle * self.fine_steps + step as usize * self.factor;
        self.fine[start..start + self.factor].iter().sum::<f64>() * self.scale
    }
}

/// Positions of the live particles at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSnapshot {
    pub t: f64,
    /// block identifiers (lowest initial index of each block), increasing
    pub ids: Vec<usize>,
    pub positions: Vec<f64>,
}

/// Ordered particles that merge on meeting. Particle `i` of the initial
/// configuration belongs to the block whose identifier is the largest live
/// id not exceeding `i`.
#[derive(Debug, Clone)]
pub struct ParticleSystem {
    initial: Vec<f64>,
    start_time: f64,
    time: f64,
    steps: u64,
    ids: Vec<usize>,
    positions: Vec<f64>,
    drift: Option<DriftSpec>,
    history: Option<Vec<FlowSnapshot>>,
}

impl ParticleSystem {
    pub fn new(points: &[f64], start_time: f64, drift: Option<DriftSpec>) -> Result<Self> {
        if points.is_empty() {
            return invalid("at least one particle is needed");
        }
        if points.iter().any(|x| !x.is_finite()) || points.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("initial points must be finite and strictly increasing");
        }
        Ok(Self {
            initial: points.to_vec(),
            start_time,
            time: start_time,
            steps: 0,
            ids: (0..points.len()).collect(),
            positions: points.to_vec(),
            drift,
            history: None,
        })
    }

    /// Keep a snapshot after every step (and of the current state).
    pub fn with_history(mut self) -> Self {
        let snap = self.snapshot();
        self.history = Some(vec![snap]);
        self
    }

    pub fn snapshot(&self) -> FlowSnapshot {
        FlowSnapshot {
            t: self.time,
            ids: self.ids.clone(),
            positions: self.positions.clone(),
        }
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn live_count(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn drift(&self) -> Option<&DriftSpec> {
        self.drift.as_ref()
    }

    pub fn history(&self) -> Option<&[FlowSnapshot]> {
        self.history.as_deref()
    }

    /// Index into the live particles of the block containing initial particle `i`.
    pub fn survivor_of(&self, i: usize) -> usize {
        self.ids.partition_point(|&id| id <= i) - 1
    }

    /// Block identifier of every initial particle.
    pub fn merge_map(&self) -> Vec<usize> {
        block_map(&self.ids, self.initial.len())
    }

    /// Current position of initial particle `i`.
    pub fn position_of(&self, i: usize) -> f64 {
        self.positions[self.survivor_of(i)]
    }

    /// Advances by `duration` in equal steps no longer than `dt`.
    pub fn advance(&mut self, duration: f64, dt: f64, rng: &mut RngStream) -> Result<()> {
        self.advance_with(duration, dt, rng)
    }

    /// [`ParticleSystem::advance`] with an arbitrary noise source.
    pub fn advance_with<N: FlowNoise>(&mut self, duration: f64, dt: f64, noise: &mut N) -> Result<()> {
        let (n, h) = step_plan(duration, dt)?;
        let sd = h.sqrt();
        for _ in 0..n {
            for (x, &id) in self.positions.iter_mut().zip(&self.ids) {
                let a = self.drift.as_ref().map_or(0.0, |d| d.eval(*x));
                *x += a * h + sd * noise.normal(id, self.steps);
            }
            self.merge_sweep();
            self.steps += 1;
            self.time = self.start_time + self.steps as f64 * h;
            if let Some(hist) = self.history.as_mut() {
                hist.push(FlowSnapshot {
                    t: self.time,
                    ids: self.ids.clone(),
                    positions: self.positions.clone(),
                });
            }
        }
        Ok(())
    }

    /// Left-to-right pass merging every inverted or touching neighbour pair
    /// into a particle at their midpoint; a merged particle is compared again
    /// with its left neighbour.
    fn merge_sweep(&mut self) {
        if self.positions.windows(2).all(|w| w[0] < w[1]) {
            return;
        }
        let mut top = 0;
        for k in 1..self.positions.len() {
            let (x, id) = (self.positions[k], self.ids[k]);
            top += 1;
            self.positions[top] = x;
            self.ids[top] = id;
            while top > 0 && self.positions[top - 1] >= self.positions[top] {
                let mid = 0.5 * (self.positions[top - 1] + self.positions[top]);
                top -= 1;
                self.positions[top] = mid;
            }
        }
        self.positions.truncate(top + 1);
        self.ids.truncate(top + 1);
    }

    /// Order preservation and merge-map monotonicity.
    pub fn check_invariants(&self) -> bool {
        let sorted = self.positions.windows(2).all(|w| w[0] < w[1]);
        let ids_ok = self.ids.first() == Some(&0) && self.ids.windows(2).all(|w| w[0] < w[1]);
        sorted && ids_ok && self.ids.len() == self.positions.len()
    }
}

/// Block identifier per initial index for a list of live ids.
pub fn block_map(ids: &[usize], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    for (k, &id) in ids.iter().enumerate() {
        let end = ids.get(k + 1).copied().unwrap_or(n);
        out.extend(std::iter::repeat_n(id, end - id));
    }
    out
}

/// Number of equal steps and their length for covering `duration` with steps ≤ dt.
pub fn step_plan(duration: f64, dt: f64) -> Result<(u64, f64)> {
    if !(duration > 0.0 && duration.is_finite()) {
        return invalid(format!("duration must be positive, got {duration}"));
    }
    if !(dt > 0.0 && dt <= duration) {
        return invalid(format!("time step must lie in (0, {duration}], got {dt}"));
    }
    let ratio = duration / dt;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * nearest { nearest } else { ratio.ceil() };
    Ok((n as u64, duration / n))
}

/// Runs the flow from `points` at time 0 to `horizon`.
pub fn simulate_coalescing(
    points: &[f64],
    horizon: f64,
    dt: f64,
    rng: &mut RngStream,
    drift: Option<&DriftSpec>,
) -> Result<ParticleSystem> {
    let mut sys = ParticleSystem::new(points, 0.0, drift.cloned())?;
    sys.advance(horizon, dt, rng)?;
    Ok(sys)
}

/// [`simulate_coalescing`] keeping every intermediate state.
pub fn simulate_coalescing_recorded(
    points: &[f64],
    horizon: f64,
    dt: f64,
    rng: &mut RngStream,
    drift: Option<&DriftSpec>,
) -> Result<ParticleSystem> {
    let mut sys = ParticleSystem::new(points, 0.0, drift.cloned())?.with_history();
    sys.advance(horizon, dt, rng)?;
    Ok(sys)
}

/// Clusters of the initial points at the current time of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub horizon: f64,
    /// surviving positions ζ
    pub vertices: Vec<f64>,
    /// half-open initial index ranges [start, end), one per vertex
    pub clusters: Vec<(usize, usize)>,
    pub initial: Vec<f64>,
}

impl ClusterSnapshot {
    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|(a, b)| b - a).collect()
    }

    /// Number of distinct clusters among initial points in [a, b].
    pub fn count_in_window(&self, a: f64, b: f64) -> usize {
        let lo = self.initial.partition_point(|&x| x < a);
        let hi = self.initial.partition_point(|&x| x <= b);
        if lo >= hi {
            return 0;
        }
        self.clusters.iter().filter(|(s, e)| *s < hi && *e > lo).count()
    }

    /// Clusters are contiguous, disjoint and cover every index.
    pub fn is_partition(&self) -> bool {
        let mut next = 0;
        for &(s, e) in &self.clusters {
            if s != next || e <= s {
                return false;
            }
            next = e;
        }
        next == self.initial.len() && self.vertices.len() == self.clusters.len()
    }
}

pub fn cluster_partition(system: &ParticleSystem) -> ClusterSnapshot {
    let n = system.initial.len();
    let clusters = system
        .ids
        .iter()
        .enumerate()
        .map(|(k, &id)| (id, system.ids.get(k + 1).copied().unwrap_or(n)))
        .collect();
    ClusterSnapshot {
        horizon: system.time,
        vertices: system.positions.clone(),
        clusters,
        initial: system.initial.clone(),
    }
}

//! The acceptance suite: twelve property checks against closed forms,
//! quadrature and independent rejection constructions.
//!
//! Each criterion yields a [`CriterionReport`] made of named [`Check`]s with
//! a target, an observed value, a tolerance and a verdict.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic::{
    exit_prob, grad_log_exit_prob, log_exit_prob, Domain1D, DomainSpec, DriftSpec,
};
use crate::error::{invalid, Result};
use crate::flows::{
    sample_boundary_oracle_recorded, sample_boundary_sde_recorded, sample_infinite_cluster_oracle,
    sample_infinite_cluster_sde_recorded, simulate_coalescing_recorded, stationary_point_run, CoarsenedNoise,
    InfiniteOracleSpec, ParticleSystem,
};
use crate::io::{boundary_rows, flow_rows, meander_rows, write_csv};
use crate::meander::{lemma1_rhs, meander_ensemble, EnsembleSpec, Sampler};
use crate::quad::{integrate, QuadOptions};
use crate::rng::RngStream;
use crate::sde::{make_grid, par_ensemble, Monitoring, Record, TimeGrid};
use crate::stats::{
    ks_critical_value, ks_one_sample, ks_two_sample, normal_cdf, rayleigh_cdf, sample_variance, SampleSummary,
};

pub const DEFAULT_SEED: u64 = 1;

/// KS level used by every statistical check.
pub const KS_LEVEL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Analytic,
    Meander,
    Flows,
    Determinism,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Analytic, Suite::Meander, Suite::Flows, Suite::Determinism];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Analytic => "analytic",
            Suite::Meander => "meander",
            Suite::Flows => "flows",
            Suite::Determinism => "determinism",
        }
    }

    pub fn criteria(self) -> &'static [u8] {
        match self {
            Suite::Analytic => &[1, 2, 3],
            Suite::Meander => &[4, 5, 6, 7],
            Suite::Flows => &[8, 9, 10, 11],
            Suite::Determinism => &[12],
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .map_or_else(|| invalid(format!("unknown suite '{s}'")), Ok)
    }
}

/// How an observed value is compared with the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// |observed - target| ≤ tolerance
    Within,
    /// observed ≤ target
    AtMost,
    /// observed ≥ target
    AtLeast,
    /// observed > target
    GreaterThan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub target: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub rule: Rule,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Check {
    pub fn new(name: impl Into<String>, rule: Rule, target: f64, observed: f64, tolerance: f64) -> Self {
        let ok = match rule {
            Rule::Within => (observed - target).abs() <= tolerance,
            Rule::AtMost => observed <= target,
            Rule::AtLeast => observed >= target,
            Rule::GreaterThan => observed > target,
        };
        Self {
            name: name.into(),
            target,
            observed,
            tolerance,
            rule,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn p_value(name: impl Into<String>, p: f64) -> Self {
        Check::new(name, Rule::GreaterThan, KS_LEVEL, p, 0.0)
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rel = match self.rule {
            Rule::Within => format!("within {:.3e} of", self.tolerance),
            Rule::AtMost => "<=".into(),
            Rule::AtLeast => ">=".into(),
            Rule::GreaterThan => ">".into(),
        };
        write!(f, "{}: {:.6e} {rel} {:.6e}", self.name, self.observed, self.target)?;
        if let Some(n) = &self.note {
            write!(f, " ({n})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    pub seconds: f64,
    /// runtime the criterion is expected to fit in; reported, not enforced
    pub budget_seconds: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// One-line summary: `PASS 4 meander endpoint law (6.1 s)`.
    pub fn headline(&self) -> String {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        format!("{tag} {:>2} {} ({:.1} s)", self.id, self.name, self.seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub seed: u64,
    /// Constant added to every Imhof weight before it is used. Nonzero only
    /// to check that the suite notices a broken weight.
    pub imhof_shift: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            imhof_shift: 0.0,
        }
    }
}

impl ValidationOptions {
    fn seed_for(&self, criterion: u8, k: u64) -> u64 {
        RngStream::new(self.seed, 0).derive(u64::from(criterion) << 8 | k).seed()
    }
}

pub fn criterion_name(id: u8) -> &'static str {
    match id {
        1 => "half-line exit probability vs quadrature; box product",
        2 => "half-line drift bound 0 < g <= 1/y",
        3 => "log-concavity of exit probabilities",
        4 => "meander SDE endpoint vs Rayleigh(1)",
        5 => "Imhof-weighted Bessel endpoint",
        6 => "three meander samplers agree",
        7 => "meander mean vs integral identity",
        8 => "cluster boundary gap law",
        9 => "two-particle non-meeting probability",
        10 => "stationary point of the linear drift",
        11 => "infinite-cluster boundaries vs oracle",
        12 => "determinism and semigroup",
        _ => "unknown",
    }
}

fn budget(id: u8) -> f64 {
    match id {
        1 | 2 => 5.0,
        3 => 10.0,
        4 | 5 | 7 => 60.0,
        6 | 9 => 120.0,
        8 | 10 | 11 => 180.0,
        12 => 30.0,
        _ => 0.0,
    }
}

fn suite_of(id: u8) -> Suite {
    Suite::ALL.into_iter().find(|s| s.criteria().contains(&id)).unwrap_or(Suite::Determinism)
}

/// Runs one criterion. Errors inside a criterion become a failed check.
pub fn run_criterion(id: u8, opts: &ValidationOptions) -> Result<CriterionReport> {
    let start = Instant::now();
    let outcome = match id {
        1 => analytic_exactness(),
        2 => drift_bound(opts),
        3 => log_concavity(opts),
        4 => meander_endpoint(opts),
        5 => imhof_reweighting(opts),
        6 => sampler_agreement(opts),
        7 => meander_means(opts),
        8 => boundary_law(opts),
        9 => non_meeting(opts),
        10 => stationary_point(opts),
        11 => infinite_cluster(opts),
        12 => determinism(opts),
        _ => return invalid(format!("no criterion {id} (expected 1..=12)")),
    };
    let checks = outcome.unwrap_or_else(|e| {
        vec![Check::new("completed", Rule::AtLeast, 1.0, 0.0, 0.0).with_note(e.to_string())]
    });
    let verdict = if !checks.is_empty() && checks.iter().all(Check::passed) { Verdict::Pass } else { Verdict::Fail };
    Ok(CriterionReport {
        id,
        name: criterion_name(id).into(),
        suite: suite_of(id),
        checks,
        verdict,
        seconds: start.elapsed().as_secs_f64(),
        budget_seconds: budget(id),
    })
}

/// Runs the selected suites (all when empty) in criterion order, calling
/// `on_report` after each criterion.
pub fn run_suites<F: FnMut(&CriterionReport)>(
    suites: &[Suite],
    opts: &ValidationOptions,
    mut on_report: F,
) -> Vec<CriterionReport> {
    let chosen: Vec<Suite> = if suites.is_empty() { Suite::ALL.to_vec() } else { suites.to_vec() };
    let mut ids: Vec<u8> = chosen.iter().flat_map(|s| s.criteria().iter().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let r = run_criterion(id, opts).expect("criterion ids come from the suite table");
            on_report(&r);
            r
        })
        .collect()
}

fn geometric(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(move |k| lo * (r * k as f64).exp())
}

fn analytic_exactness() -> Result<Vec<Check>> {
    let half = DomainSpec::positive_half_line();
    let mut worst: f64 = 0.0;
    for t in geometric(1e-3, 10.0, 20) {
        let c = (2.0 / (std::f64::consts::PI * t)).sqrt();
        for y in geometric(1e-3, 10.0, 20) {
            let q = integrate(|u| c * (-u * u / (2.0 * t)).exp(), 0.0, y, QuadOptions::abs(1e-13))?;
            worst = worst.max((exit_prob(&half, t, &[y])? - q).abs());
        }
    }
    let factors = vec![
        Domain1D::half_line(0.0, 1.0)?,
        Domain1D::interval(-1.0, 2.0)?,
        Domain1D::half_line(3.0, -1.0)?,
        Domain1D::Line,
    ];
    let singles = [
        DomainSpec::half_line(0.0, 1.0)?,
        DomainSpec::interval(-1.0, 2.0)?,
        DomainSpec::half_line(3.0, -1.0)?,
    ];
    let bx = DomainSpec::product(factors)?;
    let mut worst_box: f64 = 0.0;
    for t in geometric(1e-2, 10.0, 8) {
        for (y0, y1, y2) in [(0.1, 0.5, 2.9), (1.0, -0.9, 0.0), (5.0, 1.9, -4.0), (0.01, 0.0, 2.5)] {
            let y = [y0, y1, y2, 123.0];
            let prod = exit_prob(&singles[0], t, &[y0])? * exit_prob(&singles[1], t, &[y1])? * exit_prob(&singles[2], t, &[y2])?;
            worst_box = worst_box.max((exit_prob(&bx, t, &y)? - prod).abs());
        }
    }
    Ok(vec![
        Check::new("max |exit_prob - quadrature| on 20x20 grid", Rule::AtMost, 1e-10, worst, 0.0),
        Check::new("max |box - product of factors|", Rule::AtMost, 1e-14, worst_box, 0.0),
    ])
}

fn drift_bound(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let mut rng = RngStream::new(opts.seed_for(2, 0), 0);
    let half = DomainSpec::positive_half_line();
    let (mut nonpositive, mut above) = (0u32, 0u32);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..10_000 {
        let t = 10.0 * rng.uniform_open();
        let y = 10.0 * rng.uniform_open();
        let g = grad_log_exit_prob(&half, t, &[y])?[0];
        if !(g > 0.0) {
            nonpositive += 1;
        }
        if g > 1.0 / y {
            above += 1;
        }
        worst_ratio = worst_ratio.max(g * y);
    }
    Ok(vec![
        Check::new("draws with g <= 0", Rule::AtMost, 0.0, f64::from(nonpositive), 0.0),
        Check::new("draws with g > 1/y", Rule::AtMost, 0.0, f64::from(above), 0.0)
            .with_note(format!("max g*y = {worst_ratio:.17}")),
    ])
}

fn log_concavity(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let mut rng = RngStream::new(opts.seed_for(3, 0), 0);
    let domains = [
        ("half-line", DomainSpec::positive_half_line()),
        ("interval (0,1)", DomainSpec::interval(0.0, 1.0)?),
        ("wedge", DomainSpec::Wedge2),
    ];
    let mut checks = Vec::new();
    for (label, domain) in &domains {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let t = 1e-3 * (1e4f64).powf(rng.uniform_open());
            let (p, q) = match domain {
                DomainSpec::Interval { .. } => (vec![rng.uniform_open()], vec![rng.uniform_open()]),
                DomainSpec::Wedge2 => {
                    let mut pt = || {
                        let a = 4.0 * rng.normal();
                        vec![a, a + 3.0 * rng.uniform_open()]
                    };
                    (pt(), pt())
                }
                _ => (vec![3.0 * rng.uniform_open()], vec![3.0 * rng.uniform_open()]),
            };
            let f = |s: f64| -> Result<f64> {
                let y: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + s * (b - a)).collect();
                log_exit_prob(domain, t, &y)
            };
            let values = (0..=10).map(|k| f(k as f64 / 10.0)).collect::<Result<Vec<f64>>>()?;
            for w in values.windows(3) {
                worst = worst.max(w[0] - 2.0 * w[1] + w[2]);
            }
        }
        checks.push(Check::new(format!("{label}: max second difference"), Rule::AtMost, 1e-8, worst, 0.0));
    }
    Ok(checks)
}

fn meander_grid(extra: &[f64]) -> Result<TimeGrid> {
    make_grid(1.0, 1000, 1e-3, 1e-6, 10)?.insert_times(extra)
}

fn meander_endpoint(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let grid = meander_grid(&[])?;
    let ix = [grid.len()];
    let ens = meander_ensemble(&EnsembleSpec {
        sampler: Sampler::Sde,
        horizon: 1.0,
        grid: &grid,
        n: 50_000,
        seed: opts.seed_for(4, 0),
        y0: None,
        max_attempts: 1,
        monitoring: Monitoring::Bridge,
        record: Record::Indices(&ix),
    })?;
    let ks = ks_one_sample(&ens.endpoints(), |x| rayleigh_cdf(x, 1.0), None)?;
    Ok(vec![Check::p_value("KS p-value vs Rayleigh(1)", ks.p_value)
        .with_note(format!("D = {:.5}", ks.statistic))])
}

fn shifted_weights(weights: Vec<f64>, opts: &ValidationOptions) -> Vec<f64> {
    weights.into_iter().map(|w| w + opts.imhof_shift).collect()
}

fn imhof_reweighting(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let grid = make_grid(1.0, 1, 0.0, 0.0, 0)?;
    let ens = meander_ensemble(&EnsembleSpec {
        sampler: Sampler::Bessel,
        horizon: 1.0,
        grid: &grid,
        n: 100_000,
        seed: opts.seed_for(5, 0),
        y0: None,
        max_attempts: 1,
        monitoring: Monitoring::Bridge,
        record: Record::All,
    })?;
    let w = shifted_weights(ens.weights(), opts);
    let s = SampleSummary::new(&w, None)?;
    let ks = ks_one_sample(&ens.endpoints(), |x| rayleigh_cdf(x, 1.0), Some(&w))?;
    let crit = ks_critical_value(ks.n_eff, KS_LEVEL);
    Ok(vec![
        Check::new("mean Imhof weight", Rule::Within, 1.0, s.mean, 3.0 * s.se),
        Check::new("weighted KS distance vs critical value", Rule::AtMost, crit, ks.statistic, 0.0)
            .with_note(format!("N_eff = {:.0}", ks.n_eff)),
    ])
}

fn sampler_agreement(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let n = 20_000;
    let sde_grid = meander_grid(&[0.5])?;
    let sde_ix = [sde_grid.index_of(0.5).expect("inserted"), sde_grid.len()];
    let sde = meander_ensemble(&EnsembleSpec {
        sampler: Sampler::Sde,
        horizon: 1.0,
        grid: &sde_grid,
        n,
        seed: opts.seed_for(6, 0),
        y0: None,
        max_attempts: 1,
        monitoring: Monitoring::Bridge,
        record: Record::Indices(&sde_ix),
    })?;
    let bessel_grid = make_grid(1.0, 2, 0.0, 0.0, 0)?;
    let bessel = meander_ensemble(&EnsembleSpec {
        sampler: Sampler::Bessel,
        horizon: 1.0,
        grid: &bessel_grid,
        n,
        seed: opts.seed_for(6, 1),
        y0: None,
        max_attempts: 1,
        monitoring: Monitoring::Bridge,
        record: Record::All,
    })?;
    let rej_grid = make_grid(1.0, 1000, 0.0, 0.0, 0)?;
    let rej_ix = [500, 1000];
    let rejection = meander_ensemble(&EnsembleSpec {
        sampler: Sampler::Rejection,
        horizon: 1.0,
        grid: &rej_grid,
        n,
        seed: opts.seed_for(6, 2),
        y0: Some(1e-3),
        max_attempts: u64::MAX,
        monitoring: Monitoring::Bridge,
        record: Record::Indices(&rej_ix),
    })?;
    let w = shifted_weights(bessel.weights(), opts);
    let mut checks = Vec::new();
    for t in [0.5, 1.0] {
        let missing = || crate::Error::InvalidArgument(format!("time {t} not recorded"));
        let a = sde.values_at(t).ok_or_else(missing)?;
        let b = bessel.values_at(t).ok_or_else(missing)?;
        let c = rejection.values_at(t).ok_or_else(missing)?;
        let ab = ks_two_sample(&a, &b, None, Some(&w))?;
        let ac = ks_two_sample(&a, &c, None, None)?;
        let bc = ks_two_sample(&b, &c, Some(&w), None)?;
        checks.push(Check::p_value(format!("Y({t}) sde vs bessel"), ab.p_value));
        checks.push(Check::p_value(format!("Y({t}) sde vs rejection"), ac.p_value));
        checks.push(Check::p_value(format!("Y({t}) bessel vs rejection"), bc.p_value));
    }
    if let Some(rate) = rejection.acceptance_rate() {
        if let Some(c) = checks.last_mut() {
            c.note = Some(format!("rejection acceptance rate {rate:.5}"));
        }
    }
    Ok(checks)
}

fn meander_means(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let times = [0.25, 0.5, 0.75];
    let grid = meander_grid(&times)?;
    let ix: Vec<usize> = times.iter().map(|&t| grid.index_of(t).expect("inserted")).collect();
    let ens = meander_ensemble(&EnsembleSpec {
        sampler: Sampler::Sde,
        horizon: 1.0,
        grid: &grid,
        n: 50_000,
        seed: opts.seed_for(7, 0),
        y0: None,
        max_attempts: 1,
        monitoring: Monitoring::Bridge,
        record: Record::Indices(&ix),
    })?;
    let mut checks = Vec::new();
    for t in times {
        let v = ens.values_at(t).expect("recorded");
        let s = SampleSummary::new(&v, None)?;
        let target = lemma1_rhs(1.0, t)?;
        checks.push(Check::new(format!("E[Y({t})]"), Rule::Within, target, s.mean, 3.0 * s.se + 0.01 * target));
    }
    Ok(checks)
}

fn boundary_law(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let grid = meander_grid(&[])?;
    let ix = [grid.len()];
    let pairs = par_ensemble(50_000, opts.seed_for(8, 0), |_, r| {
        sample_boundary_sde_recorded(0.0, 1.0, &grid, r, Record::Indices(&ix)).map(|p| p.end_gap())
    })?;
    let scaled: Vec<f64> = pairs.iter().map(|g| g / std::f64::consts::SQRT_2).collect();
    let ks = ks_one_sample(&scaled, |x| rayleigh_cdf(x, 1.0), None)?;
    let oracle_grid = make_grid(1.0, 1000, 0.0, 0.0, 0)?;
    let oix = [1000];
    let oracle = par_ensemble(20_000, opts.seed_for(8, 1), |_, r| {
        sample_boundary_oracle_recorded(0.0, 1e-3, 1.0, &oracle_grid, r, u64::MAX, Monitoring::Bridge, Record::Indices(&oix))
            .map(|d| (d.pair.end_gap(), d.attempts))
    })?;
    let gaps: Vec<f64> = oracle.iter().map(|d| d.0).collect();
    let attempts: u64 = oracle.iter().map(|d| d.1).sum();
    let two = ks_two_sample(&pairs, &gaps, None, None)?;
    Ok(vec![
        Check::p_value("gap/sqrt2 vs Rayleigh(1)", ks.p_value),
        Check::p_value("gap: sde vs oracle", two.p_value)
            .with_note(format!("oracle acceptance {:.5}", gaps.len() as f64 / attempts as f64)),
    ])
}

/// Non-meeting frequencies of two particles from (0, 1) up to T = 1 at
/// steps `fine_dt·factors`, every path replayed at all steps.
pub fn non_meeting_study(n: usize, fine_steps: usize, factors: &[usize], seed: u64) -> Result<Vec<(f64, f64)>> {
    let hits = par_ensemble(n, seed, |_, r| {
        let mut noise = CoarsenedNoise::draw(2, fine_steps, r);
        factors
            .iter()
            .map(|&f| {
                let mut sys = ParticleSystem::new(&[0.0, 1.0], 0.0, None)?;
                sys.advance_with(1.0, f as f64 / fine_steps as f64, noise.coarsened(f)?)?;
                Ok(sys.live_count() == 2)
            })
            .collect::<Result<Vec<bool>>>()
    })?;
    Ok(factors
        .iter()
        .enumerate()
        .map(|(j, &f)| {
            let p = hits.iter().filter(|h| h[j]).count() as f64 / n as f64;
            (f as f64 / fine_steps as f64, p)
        })
        .collect())
}

fn non_meeting(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let target = exit_prob(&DomainSpec::Wedge2, 1.0, &[0.0, 1.0])?;
    let n = 100_000;
    let study = non_meeting_study(n, 4000, &[4, 2, 1], opts.seed_for(9, 0))?;
    let errors: Vec<f64> = study.iter().map(|(_, p)| p - target).collect();
    let mut checks: Vec<Check> = study
        .iter()
        .zip(&errors)
        .map(|(&(dt, p), e)| {
            Check::new(format!("dt={dt:.1e}: bias"), Rule::GreaterThan, 0.0, *e, 0.0)
                .with_note(format!("p = {p:.5}, relative {:.4}", e / target))
        })
        .collect();
    for (k, w) in errors.windows(2).enumerate() {
        checks.push(Check::new(
            format!("bias shrinks from dt={:.1e}", study[k].0),
            Rule::GreaterThan,
            w[1].abs(),
            w[0].abs(),
            0.0,
        ));
    }
    let last = *errors.last().expect("three step sizes");
    checks.push(Check::new("final |error| (absolute)", Rule::AtMost, 0.01, last.abs(), 0.0));
    Ok(checks)
}

fn stationary_point(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let drift = DriftSpec::linear(1.0, 0.0)?;
    let runs = par_ensemble(10_000, opts.seed_for(10, 0), |_, r| {
        stationary_point_run(&drift, 10.0, 5.0, 200, 1e-2, r)
    })?;
    let eta: Vec<f64> = runs.iter().filter_map(|r| r.position).collect();
    let rate = eta.len() as f64 / runs.len() as f64;
    let ks = ks_one_sample(&eta, |x| normal_cdf(x * std::f64::consts::SQRT_2), None)?;
    let var = sample_variance(&eta);
    Ok(vec![
        Check::new("full coalescence rate", Rule::AtLeast, 0.99, rate, 0.0),
        Check::p_value("eta vs N(0, 1/2)", ks.p_value),
        Check::new("sample variance", Rule::Within, 0.5, var, 0.025),
    ])
}

fn infinite_cluster(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let drift = DriftSpec::linear(1.0, 0.0)?;
    let n = 10_000;
    let grid = make_grid(1.0, 1000, 1e-3, 0.0, 10)?;
    let sde = par_ensemble(n, opts.seed_for(11, 0), |_, r| {
        let p = sample_infinite_cluster_sde_recorded(&drift, 0.0, 1.0, &grid, r, Record::All)?;
        let positive = (1..p.path.len()).all(|k| p.beta(k) - p.alpha(k) > 0.0);
        Ok((p.end_gap(), positive))
    })?;
    let gaps: Vec<f64> = sde.iter().map(|s| s.0).collect();
    let positive = sde.iter().filter(|s| s.1).count() as f64 / n as f64;
    let spec = InfiniteOracleSpec {
        x: 0.0,
        epsilon: 1e-3,
        horizon: 1.0,
        extension: 8.0,
        extension_dt: 1e-2,
        max_attempts: u64::MAX,
        monitoring: Monitoring::Bridge,
    };
    let oracle_grid = make_grid(1.0, 10_000, 0.0, 0.0, 0)?;
    let oix = [10_000];
    let oracle = par_ensemble(n, opts.seed_for(11, 1), |_, r| {
        sample_infinite_cluster_oracle(&drift, &spec, &oracle_grid, r, Record::Indices(&oix)).map(|d| d.pair.end_gap())
    })?;
    let ks = ks_two_sample(&gaps, &oracle, None, None)?;
    Ok(vec![
        Check::p_value("gap at t=1: sde vs oracle", ks.p_value),
        Check::new("paths with positive gap at every grid time", Rule::AtLeast, 1.0, positive, 0.0),
    ])
}

fn csv_bytes(opts: &ValidationOptions) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let bessel_grid = make_grid(1.0, 50, 0.0, 0.0, 0)?;
    let ens = meander_ensemble(&EnsembleSpec {
        sampler: Sampler::Bessel,
        horizon: 1.0,
        grid: &bessel_grid,
        n: 200,
        seed: opts.seed_for(12, 0),
        y0: None,
        max_attempts: 1,
        monitoring: Monitoring::Bridge,
        record: Record::All,
    })?;
    write_csv(&mut out, &meander_rows(&ens.paths))?;
    let grid = make_grid(1.0, 100, 1e-3, 1e-6, 4)?;
    let pairs = par_ensemble(50, opts.seed_for(12, 1), |_, r| {
        sample_boundary_sde_recorded(0.0, 1.0, &grid, r, Record::All)
    })?;
    write_csv(&mut out, &boundary_rows(&pairs))?;
    let points: Vec<f64> = (0..=20).map(|k| -1.0 + 0.1 * k as f64).collect();
    let mut rng = RngStream::new(opts.seed_for(12, 2), 0);
    let sys = simulate_coalescing_recorded(&points, 1.0, 1e-2, &mut rng, None)?;
    write_csv(&mut out, &flow_rows(sys.history().unwrap_or_default(), points.len()))?;
    Ok(out)
}

fn determinism(opts: &ValidationOptions) -> Result<Vec<Check>> {
    let first = csv_bytes(opts)?;
    let second = csv_bytes(opts)?;
    let two_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?
        .install(|| csv_bytes(opts))?;
    let same = |a: &[u8], b: &[u8]| f64::from(u8::from(a == b));

    let points: Vec<f64> = (0..=100).map(|k| -5.0 + 0.1 * k as f64).collect();
    let drift = DriftSpec::linear(0.5, 0.0)?;
    let mut mismatches = 0u32;
    for (k, d) in [None, Some(drift)].into_iter().enumerate() {
        let seed = opts.seed_for(12, 10 + k as u64);
        let mut r1 = RngStream::new(seed, 0);
        let mut one = ParticleSystem::new(&points, 0.0, d.clone())?;
        one.advance(1.0, 1e-2, &mut r1)?;
        let mut r2 = RngStream::new(seed, 0);
        let mut composed = ParticleSystem::new(&points, 0.0, d)?;
        composed.advance(0.3, 1e-2, &mut r2)?;
        composed.advance(0.7, 1e-2, &mut r2)?;
        if one.ids() != composed.ids() || one.positions() != composed.positions() {
            mismatches += 1;
        }
    }
    Ok(vec![
        Check::new("CSV bytes identical on rerun", Rule::AtLeast, 1.0, same(&first, &second), 0.0)
            .with_note(format!("{} bytes", first.len())),
        Check::new("CSV bytes identical on two threads", Rule::AtLeast, 1.0, same(&first, &two_threads), 0.0),
        Check::new("composed vs single-shot flow mismatches", Rule::AtMost, 0.0, f64::from(mismatches), 0.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_rules() {
        assert!(Check::new("a", Rule::Within, 1.0, 1.05, 0.1).passed());
        assert!(!Check::new("a", Rule::Within, 1.0, 1.2, 0.1).passed());
        assert!(Check::new("a", Rule::AtMost, 1.0, 1.0, 0.0).passed());
        assert!(!Check::new("a", Rule::GreaterThan, 1.0, 1.0, 0.0).passed());
        assert!(!Check::new("a", Rule::AtLeast, 1.0, f64::NAN, 0.0).passed());
        assert!(!Check::new("a", Rule::Within, 1.0, f64::NAN, 0.1).passed());
    }

    #[test]
    fn suites_cover_all_criteria_once() {
        let mut ids: Vec<u8> = Suite::ALL.iter().flat_map(|s| s.criteria().iter().copied()).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=12).collect::<Vec<u8>>());
        assert_eq!("flows".parse::<Suite>().unwrap(), Suite::Flows);
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn analytic_suite_passes() {
        let reports = run_suites(&[Suite::Analytic], &ValidationOptions::default(), |_| {});
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn unknown_criterion_is_an_error() {
        assert!(run_criterion(13, &ValidationOptions::default()).is_err());
    }
}

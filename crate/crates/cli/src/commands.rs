use std::fmt::Write as _;

use condflow::analytic::{exit_prob, grad_log_exit_prob, stationary_cdf, Domain1D, DomainSpec, DriftSpec};
use condflow::flows::{
    cluster_partition, sample_boundary_oracle_recorded, sample_boundary_sde_recorded, sample_infinite_cluster_oracle,
    sample_infinite_cluster_sde_recorded, simulate_coalescing, simulate_coalescing_recorded, stationary_point_run,
    BoundaryPair, InfiniteOracleSpec,
};
use condflow::io::{boundary_rows, flow_rows, fmt_f64, meander_rows, MeanderRow};
use condflow::meander::{meander_ensemble, EnsembleSpec, Sampler};
use condflow::quad::{integrate, QuadOptions};
use condflow::sde::{make_grid, par_ensemble, Record, TimeGrid};
use condflow::stats::{ks_one_sample, sample_variance, SampleSummary};
use condflow::validation::{run_suites, CriterionReport, Suite, ValidationOptions};
use condflow::Error;
use serde::Serialize;

use crate::cli::{
    ClusterArgs, DomainKind, DriftedArgs, DriftedMode, FlowArgs, Format, GammaArgs, GridArgs, MeanderArgs, Mutation,
    PairMethod, ValidateArgs,
};
use crate::expr::drift_spec;
use crate::output::Sink;
use crate::CliError;

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        usage(format!("--{name} must be positive and finite, got {v}"))
    }
}

fn check_count(name: &str, n: usize) -> Result<(), CliError> {
    if n == 0 {
        usage(format!("--{name} must be at least 1"))
    } else {
        Ok(())
    }
}

fn domain_from(args: &GammaArgs) -> Result<DomainSpec, CliError> {
    let d = match args.domain {
        DomainKind::Halfline => DomainSpec::half_line(args.origin, args.direction)?,
        DomainKind::Interval => DomainSpec::interval(args.a, args.b)?,
        DomainKind::Halfspace => DomainSpec::half_space(args.anchor.clone(), args.normal.clone())?,
        DomainKind::Wedge2 => DomainSpec::Wedge2,
        DomainKind::Box => {
            let factors = args.factors.iter().map(|f| parse_factor(f)).collect::<Result<Vec<_>, _>>()?;
            DomainSpec::product(factors)?
        }
    };
    Ok(d)
}

fn parse_factor(spec: &str) -> Result<Domain1D, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number '{s}' in factor '{spec}'")));
    match parts.as_slice() {
        ["line"] => Ok(Domain1D::Line),
        ["halfline", o, d] => Ok(Domain1D::half_line(num(o)?, num(d)?)?),
        ["interval", a, b] => Ok(Domain1D::interval(num(a)?, num(b)?)?),
        _ => usage(format!("bad box factor '{spec}' (expected halfline:O:D, interval:A:B or line)")),
    }
}

#[derive(Serialize)]
struct GammaResult {
    gamma: f64,
    grad_log_gamma: Vec<f64>,
}

pub fn gamma(args: &GammaArgs, sink: &Sink) -> Result<(), CliError> {
    let domain = domain_from(args)?;
    let g = exit_prob(&domain, args.t, &args.y)?;
    let grad = grad_log_exit_prob(&domain, args.t, &args.y)?;
    match sink.format {
        Format::Json => sink.emit_json(&GammaResult {
            gamma: g,
            grad_log_gamma: grad,
        }),
        Format::Csv => {
            let mut text = String::from("gamma");
            for k in 1..=grad.len() {
                let _ = write!(text, ",grad_log_gamma_{k}");
            }
            text.push('\n');
            text.push_str(&fmt_f64(g));
            for v in &grad {
                text.push(',');
                text.push_str(&fmt_f64(*v));
            }
            text.push('\n');
            sink.emit_text(&text)
        }
    }
}

fn eps0_for(grid: &GridArgs, horizon: f64) -> f64 {
    grid.eps0.unwrap_or(1e-3 * horizon)
}

fn sde_grid(grid: &GridArgs, horizon: f64, eps1: f64) -> Result<TimeGrid, CliError> {
    check_count("n-uniform", grid.n_uniform)?;
    Ok(make_grid(horizon, grid.n_uniform, eps0_for(grid, horizon), eps1, grid.refine_levels)?)
}

fn plain_grid(grid: &GridArgs, horizon: f64) -> Result<TimeGrid, CliError> {
    check_count("n-uniform", grid.n_uniform)?;
    Ok(make_grid(horizon, grid.n_uniform, 0.0, 0.0, 0)?)
}

/// Index of the terminal time T in recorded output: samplers append T as
/// index `grid.len()` when the grid stops before it.
fn end_index(grid: &TimeGrid) -> usize {
    if grid.end() < grid.horizon() {
        grid.len()
    } else {
        grid.len() - 1
    }
}

/// Parses `--record` into a possibly refined grid and the indices to keep
/// (`None` keeps everything).
fn record_plan(spec: &str, grid: TimeGrid) -> Result<(TimeGrid, Option<Vec<usize>>), CliError> {
    match spec.trim() {
        "all" => Ok((grid, None)),
        "end" => {
            let e = end_index(&grid);
            Ok((grid, Some(vec![e])))
        }
        list => {
            let times = list
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad --record time '{s}'"))))
                .collect::<Result<Vec<f64>, _>>()?;
            let grid = grid.insert_times(&times)?;
            let mut ix = times
                .iter()
                .map(|&t| {
                    grid.index_of(t)
                        .ok_or_else(|| CliError::Usage(format!("time {t} is not on the simulation grid")))
                })
                .collect::<Result<Vec<usize>, _>>()?;
            ix.push(end_index(&grid));
            ix.sort_unstable();
            ix.dedup();
            Ok((grid, Some(ix)))
        }
    }
}

fn record_of(ix: &Option<Vec<usize>>) -> Record<'_> {
    match ix {
        None => Record::All,
        Some(v) => Record::Indices(v),
    }
}

#[derive(Serialize)]
struct MeanderSummary {
    sampler: Sampler,
    horizon: f64,
    n: usize,
    /// Imhof-weighted for the Bessel sampler
    endpoint: SampleSummary,
    endpoint_reference_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight: Option<SampleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_reference: Option<f64>,
    attempts: u64,
    retries: u64,
    halvings: u64,
}

pub fn meander(args: &MeanderArgs, seed: u64, sink: &Sink) -> Result<(), CliError> {
    check_positive("T", args.horizon)?;
    check_count("n", args.n)?;
    let base = match args.method {
        Sampler::Sde => sde_grid(&args.grid, args.horizon, args.grid.eps1)?,
        Sampler::Bessel | Sampler::Rejection => plain_grid(&args.grid, args.horizon)?,
    };
    let (grid, ix) = record_plan(&args.grid.record, base)?;
    let ens = meander_ensemble(&EnsembleSpec {
        sampler: args.method,
        horizon: args.horizon,
        grid: &grid,
        n: args.n,
        seed,
        y0: args.y0,
        max_attempts: args.rejection.max_attempts,
        monitoring: args.rejection.monitoring,
        record: record_of(&ix),
    })?;
    let weights = ens.weights();
    let endpoints = ens.endpoints();
    let weighted = args.method == Sampler::Bessel;
    let acceptance_reference = match ens.y0 {
        Some(y0) => Some(exit_prob(&DomainSpec::positive_half_line(), args.horizon, &[y0])?),
        None => None,
    };
    let summary = MeanderSummary {
        sampler: args.method,
        horizon: args.horizon,
        n: args.n,
        endpoint: SampleSummary::new(&endpoints, weighted.then_some(weights.as_slice()))?,
        endpoint_reference_mean: (std::f64::consts::FRAC_PI_2 * args.horizon).sqrt(),
        weight: if weighted { Some(SampleSummary::new(&weights, None)?) } else { None },
        y0: ens.y0,
        acceptance_rate: ens.acceptance_rate(),
        acceptance_reference,
        attempts: ens.attempts,
        retries: ens.paths.iter().map(|p| p.meta.retries).sum(),
        halvings: ens.paths.iter().map(|p| p.meta.halvings).sum(),
    };
    sink.emit(&meander_rows(&ens.paths), &summary)
}

#[derive(Serialize)]
struct PairSummary {
    method: PairMethod,
    x: f64,
    horizon: f64,
    n: usize,
    end_gap: SampleSummary,
    /// mean of (β(T) - α(T))/√2, Rayleigh(√T) mean √(πT/2) for the Arratia flow
    #[serde(skip_serializing_if = "Option::is_none")]
    scaled_gap_reference_mean: Option<f64>,
    end_center: SampleSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_reference: Option<f64>,
}

fn pair_summary(
    method: PairMethod,
    pairs: &[BoundaryPair],
    x: f64,
    horizon: f64,
    attempts: Option<u64>,
) -> Result<PairSummary, CliError> {
    let gaps: Vec<f64> = pairs.iter().map(BoundaryPair::end_gap).collect();
    let centers: Vec<f64> = pairs
        .iter()
        .map(|p| {
            let v = p.path.last();
            0.5 * (v[0] + v[1])
        })
        .collect();
    Ok(PairSummary {
        method,
        x,
        horizon,
        n: pairs.len(),
        end_gap: SampleSummary::new(&gaps, None)?,
        scaled_gap_reference_mean: None,
        end_center: SampleSummary::new(&centers, None)?,
        acceptance_rate: attempts.map(|a| pairs.len() as f64 / a as f64),
        acceptance_reference: None,
    })
}

pub fn cluster(args: &ClusterArgs, seed: u64, sink: &Sink) -> Result<(), CliError> {
    check_positive("T", args.horizon)?;
    check_count("n", args.n)?;
    let (pairs, attempts) = match args.mode {
        PairMethod::Sde => {
            let (grid, ix) = record_plan(&args.grid.record, sde_grid(&args.grid, args.horizon, args.grid.eps1)?)?;
            let pairs = par_ensemble(args.n, seed, |_, r| {
                sample_boundary_sde_recorded(args.x, args.horizon, &grid, r, record_of(&ix))
            })?;
            (pairs, None)
        }
        PairMethod::Oracle => {
            check_positive("eps", args.eps)?;
            let (grid, ix) = record_plan(&args.grid.record, plain_grid(&args.grid, args.horizon)?)?;
            let draws = par_ensemble(args.n, seed, |_, r| {
                sample_boundary_oracle_recorded(
                    args.x,
                    args.eps,
                    args.horizon,
                    &grid,
                    r,
                    args.rejection.max_attempts,
                    args.rejection.monitoring,
                    record_of(&ix),
                )
            })?;
            let attempts = draws.iter().map(|d| d.attempts).sum();
            (draws.into_iter().map(|d| d.pair).collect::<Vec<_>>(), Some(attempts))
        }
    };
    let mut summary = pair_summary(args.mode, &pairs, args.x, args.horizon, attempts)?;
    summary.scaled_gap_reference_mean = Some((std::f64::consts::FRAC_PI_2 * args.horizon).sqrt());
    if args.mode == PairMethod::Oracle {
        summary.acceptance_reference =
            Some(exit_prob(&DomainSpec::Wedge2, args.horizon, &[args.x - args.eps, args.x + args.eps])?);
    }
    sink.emit(&boundary_rows(&pairs), &summary)
}

/// `START:END:STEP` or a comma separated list.
pub fn parse_points(spec: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number '{s}' in --points")));
    let parts: Vec<&str> = spec.split(':').collect();
    let points = match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
                return usage(format!("--points {spec}: need START <= END and STEP > 0"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            if n > 10_000_000 {
                return usage(format!("--points {spec}: too many points"));
            }
            (0..=n).map(|k| a + k as f64 * step).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<f64>, _>>()?,
        _ => return usage(format!("bad --points '{spec}'")),
    };
    Ok(points)
}

#[derive(Serialize)]
struct Census {
    horizon: f64,
    particles: usize,
    vertices: Vec<f64>,
    cluster_sizes: Vec<usize>,
    /// half-open initial index ranges, one per vertex
    clusters: Vec<(usize, usize)>,
    window: (f64, f64),
    /// N_T(a, b): clusters among initial points in the window
    clusters_in_window: usize,
    contiguous: bool,
}

fn drift_from(src: &Option<String>, c: &crate::cli::DriftConstants) -> Result<Option<DriftSpec>, CliError> {
    src.as_deref().map(|s| drift_spec(s, c.lambda, c.lipschitz)).transpose()
}

pub fn flow(args: &FlowArgs, seed: u64, sink: &Sink) -> Result<(), CliError> {
    check_positive("T", args.horizon)?;
    check_positive("dt", args.dt)?;
    let points = parse_points(&args.points)?;
    let drift = drift_from(&args.a, &args.drift)?;
    let mut rng = condflow::RngStream::new(seed, 0);
    let (sys, history) = match args.record.as_str() {
        "all" => {
            let sys = simulate_coalescing_recorded(&points, args.horizon, args.dt, &mut rng, drift.as_ref())?;
            let h = sys.history().map(<[_]>::to_vec).unwrap_or_default();
            (sys, h)
        }
        "end" => {
            let sys = simulate_coalescing(&points, args.horizon, args.dt, &mut rng, drift.as_ref())?;
            let h = vec![sys.snapshot()];
            (sys, h)
        }
        other => return usage(format!("--record for flow must be all or end, got '{other}'")),
    };
    let part = cluster_partition(&sys);
    let window = match args.window.as_slice() {
        [] => (points[0], points[points.len() - 1]),
        [a, b] if a <= b => (*a, *b),
        _ => return usage("--window needs two numbers a,b with a <= b"),
    };
    let census = Census {
        horizon: args.horizon,
        particles: points.len(),
        vertices: part.vertices.clone(),
        cluster_sizes: part.sizes(),
        clusters: part.clusters.clone(),
        window,
        clusters_in_window: part.count_in_window(window.0, window.1),
        contiguous: part.is_partition(),
    };
    sink.emit(&flow_rows(&history, points.len()), &census)
}

#[derive(Serialize)]
struct StationarySummary {
    runs: usize,
    coalesced: usize,
    coalescence_rate: f64,
    max_survivors: usize,
    eta: SampleSummary,
    eta_variance: f64,
    reference_mean: f64,
    reference_variance: f64,
    ks_p_value: f64,
}

/// Mean and variance of the stationary law by quadrature over its range.
fn stationary_moments(drift: &DriftSpec) -> Result<(f64, f64), CliError> {
    let law = drift.law()?;
    let (lo, hi) = law.range();
    let opts = QuadOptions::abs(1e-12);
    let dens = |x: f64| law.log_density(drift, x).exp();
    let m = integrate(|x| x * dens(x), lo, hi, opts)?;
    let v = integrate(|x| (x - m) * (x - m) * dens(x), lo, hi, opts)?;
    Ok((m, v))
}

pub fn drifted(args: &DriftedArgs, seed: u64, sink: &Sink) -> Result<(), CliError> {
    let drift = drift_spec(&args.a, args.drift.lambda, args.drift.lipschitz)?;
    match args.mode {
        DriftedMode::Stationary => stationary(args, &drift, seed, sink),
        DriftedMode::InfiniteCluster => infinite_cluster(args, &drift, seed, sink),
    }
}

fn stationary(args: &DriftedArgs, drift: &DriftSpec, seed: u64, sink: &Sink) -> Result<(), CliError> {
    check_positive("lookback", args.lookback)?;
    check_positive("span", args.span)?;
    check_positive("dt", args.dt)?;
    check_count("runs", args.runs)?;
    if args.particles < 2 {
        return usage("--particles must be at least 2");
    }
    let runs = par_ensemble(args.runs, seed, |_, r| {
        stationary_point_run(drift, args.lookback, args.span, args.particles, args.dt, r)
    })?;
    let max_survivors = runs.iter().map(|r| r.survivors).max().unwrap_or(0);
    let rows: Vec<MeanderRow> = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            r.position.map(|p| MeanderRow {
                path_id: i as u64,
                t: 0.0,
                value: p,
                weight: 1.0,
            })
        })
        .collect();
    if rows.is_empty() || (args.runs == 1 && max_survivors > 1) {
        return Err(Error::NotCoalesced {
            survivors: max_survivors,
        }
        .into());
    }
    let eta: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (reference_mean, reference_variance) = stationary_moments(drift)?;
    let ks = ks_one_sample(&eta, |x| stationary_cdf(drift, x).unwrap_or(f64::NAN).clamp(0.0, 1.0), None)?;
    let summary = StationarySummary {
        runs: args.runs,
        coalesced: eta.len(),
        coalescence_rate: eta.len() as f64 / args.runs as f64,
        max_survivors,
        eta: SampleSummary::new(&eta, None)?,
        eta_variance: if eta.len() > 1 { sample_variance(&eta) } else { 0.0 },
        reference_mean,
        reference_variance,
        ks_p_value: ks.p_value,
    };
    sink.emit(&rows, &summary)
}

fn infinite_cluster(args: &DriftedArgs, drift: &DriftSpec, seed: u64, sink: &Sink) -> Result<(), CliError> {
    check_positive("T", args.horizon)?;
    check_count("n", args.n)?;
    let (pairs, attempts) = match args.method {
        PairMethod::Sde => {
            // θ is smooth at the horizon, so the grid runs all the way to T
            let (grid, ix) = record_plan(&args.grid.record, sde_grid(&args.grid, args.horizon, 0.0)?)?;
            let pairs = par_ensemble(args.n, seed, |_, r| {
                sample_infinite_cluster_sde_recorded(drift, args.x, args.horizon, &grid, r, record_of(&ix))
            })?;
            (pairs, None)
        }
        PairMethod::Oracle => {
            check_positive("eps", args.eps)?;
            let (grid, ix) = record_plan(&args.grid.record, plain_grid(&args.grid, args.horizon)?)?;
            let spec = InfiniteOracleSpec {
                x: args.x,
                epsilon: args.eps,
                horizon: args.horizon,
                extension: args.extension,
                extension_dt: args.extension_dt,
                max_attempts: args.rejection.max_attempts,
                monitoring: args.rejection.monitoring,
            };
            let draws =
                par_ensemble(args.n, seed, |_, r| sample_infinite_cluster_oracle(drift, &spec, &grid, r, record_of(&ix)))?;
            let attempts = draws.iter().map(|d| d.attempts).sum();
            (draws.into_iter().map(|d| d.pair).collect::<Vec<_>>(), Some(attempts))
        }
    };
    let summary = pair_summary(args.method, &pairs, args.x, args.horizon, attempts)?;
    sink.emit(&boundary_rows(&pairs), &summary)
}

#[derive(Serialize)]
struct ValidationResults<'a> {
    passed: usize,
    failed: usize,
    criteria: &'a [CriterionReport],
}

/// Runs the suite and returns the number of failed criteria.
pub fn validate(args: &ValidateArgs, seed: u64, sink: &Sink) -> Result<usize, CliError> {
    let suites = args.suite.iter().map(|s| s.parse::<Suite>()).collect::<Result<Vec<_>, _>>()?;
    let opts = ValidationOptions {
        seed,
        imhof_shift: match args.mutate {
            Some(Mutation::ImhofShift) => args.shift,
            None => 0.0,
        },
    };
    let table_to_stdout = sink.format == Format::Csv || sink.out.is_some();
    let print = |line: String| {
        if table_to_stdout {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    };
    let reports = run_suites(&suites, &opts, |r| {
        print(r.headline());
        for c in &r.checks {
            let mark = if c.passed() { "ok  " } else { "FAIL" };
            print(format!("       {mark} {c}"));
        }
    });
    let failed = reports.iter().filter(|r| !r.passed()).count();
    print(format!("{} of {} criteria passed", reports.len() - failed, reports.len()));
    if sink.format == Format::Json || sink.out.is_some() {
        sink.emit_json(&ValidationResults {
            passed: reports.len() - failed,
            failed,
            criteria: &reports,
        })?;
    }
    Ok(failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_ranges_and_lists() {
        let p = parse_points("-5:5:0.01").unwrap();
        assert_eq!(p.len(), 1001);
        assert_eq!(p[0], -5.0);
        assert!((p[1000] - 5.0).abs() < 1e-12);
        assert_eq!(parse_points("0,1,2.5").unwrap(), vec![0.0, 1.0, 2.5]);
        assert!(parse_points("1:0:0.1").is_err());
        assert!(parse_points("0:1:0").is_err());
        assert!(parse_points("a,b").is_err());
    }

    #[test]
    fn box_factors() {
        assert_eq!(parse_factor("line").unwrap(), Domain1D::Line);
        assert_eq!(
            parse_factor("halfline:0:-1").unwrap(),
            Domain1D::HalfLine {
                origin: 0.0,
                direction: -1.0
            }
        );
        assert!(parse_factor("interval:2:1").is_err());
        assert!(parse_factor("disk:1").is_err());
    }

    #[test]
    fn record_plans() {
        let g = make_grid(1.0, 10, 1e-3, 1e-6, 2).unwrap();
        let (g2, ix) = record_plan("end", g.clone()).unwrap();
        assert_eq!(ix, Some(vec![g2.len()]));
        let (g3, ix) = record_plan("0.25, 0.5", g.clone()).unwrap();
        let ix = ix.unwrap();
        assert_eq!(ix.len(), 3);
        assert_eq!(g3.times()[ix[0]], 0.25);
        assert_eq!(ix[2], g3.len());
        assert!(record_plan("2.0", g).is_err());
        let plain = make_grid(1.0, 10, 0.0, 0.0, 0).unwrap();
        assert_eq!(record_plan("end", plain).unwrap().1, Some(vec![10]));
    }
}

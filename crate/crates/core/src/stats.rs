//! Empirical CDFs, Kolmogorov–Smirnov tests with optional weights, moment
//! summaries and percentile bootstrap intervals.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Weighted empirical distribution: sorted support points with normalized
/// weights. Zero weights are dropped.
#[derive(Debug, Clone)]
pub struct Ecdf {
    x: Vec<f64>,
    /// normalized weight of each point
    w: Vec<f64>,
    n_eff: f64,
}

impl Ecdf {
    pub fn new(sample: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        if sample.is_empty() {
            return invalid("empty sample");
        }
        if sample.iter().any(|v| v.is_nan()) {
            return invalid("sample contains NaN");
        }
        let mut pairs: Vec<(f64, f64)> = match weights {
            None => sample.iter().map(|&x| (x, 1.0)).collect(),
            Some(w) => {
                if w.len() != sample.len() {
                    return invalid(format!("{} weights for {} points", w.len(), sample.len()));
                }
                if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                    return invalid("weights must be finite and nonnegative");
                }
                sample.iter().zip(w).filter(|(_, &v)| v > 0.0).map(|(&x, &v)| (x, v)).collect()
            }
        };
        if pairs.is_empty() {
            return invalid("all weights are zero");
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let sum_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        Ok(Self {
            x: pairs.iter().map(|p| p.0).collect(),
            w: pairs.iter().map(|p| p.1 / total).collect(),
            n_eff: total * total / sum_sq,
        })
    }

    /// (Σw)² / Σw²; equals n for equal weights.
    pub fn n_eff(&self) -> f64 {
        self.n_eff
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// F̂(x) = weight of points ≤ x.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.x.partition_point(|&v| v <= x);
        self.w[..k].iter().sum::<f64>().min(1.0)
    }

    /// Distinct support points with F̂ just below and at each of them.
    fn steps(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.x.len());
        let mut acc = 0.0;
        let mut i = 0;
        while i < self.x.len() {
            let x = self.x[i];
            let before = acc;
            while i < self.x.len() && self.x[i] == x {
                acc += self.w[i];
                i += 1;
            }
            out.push((x, before, acc.min(1.0)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// effective sample size used for the p-value
    pub n_eff: f64,
}

/// Kolmogorov survival function Q(λ) = P(sup|B°| > λ).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series, fast for small λ
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            s += (-m * m * c).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += sign * term;
            if term < 1e-300 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn scaled(n_eff: f64, d: f64) -> f64 {
    let r = n_eff.sqrt();
    (r + 0.12 + 0.11 / r) * d
}

/// Asymptotic p-value of a KS distance at effective size n (Stephens' correction).
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    kolmogorov_q(scaled(n_eff, d))
}

/// Distance D with P(D_n > D) = alpha under the asymptotic law.
pub fn ks_critical_value(n_eff: f64, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_q(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = n_eff.sqrt();
    0.5 * (lo + hi) / (r + 0.12 + 0.11 / r)
}

/// One-sample KS test of `sample` against a continuous `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F, weights: Option<&[f64]>) -> Result<KsResult> {
    let e = Ecdf::new(sample, weights)?;
    let mut d: f64 = 0.0;
    for (x, below, at) in e.steps() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return invalid(format!("cdf({x}) = {f} outside [0, 1]"));
        }
        d = d.max((at - f).abs()).max((f - below).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, e.n_eff),
        n_eff: e.n_eff,
    })
}

/// Two-sample KS test; effective sizes combine as n_a n_b / (n_a + n_b).
pub fn ks_two_sample(
    a: &[f64],
    b: &[f64],
    weights_a: Option<&[f64]>,
    weights_b: Option<&[f64]>,
) -> Result<KsResult> {
    let ea = Ecdf::new(a, weights_a)?;
    let eb = Ecdf::new(b, weights_b)?;
    let (sa, sb) = (ea.steps(), eb.steps());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < sa.len() || j < sb.len() {
        let xa = sa.get(i).map_or(f64::INFINITY, |s| s.0);
        let xb = sb.get(j).map_or(f64::INFINITY, |s| s.0);
        let x = xa.min(xb);
        if xa == x {
            fa = sa[i].2;
            i += 1;
        }
        if xb == x {
            fb = sb[j].2;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let n_eff = ea.n_eff * eb.n_eff / (ea.n_eff + eb.n_eff);
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n_eff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// standard error of the mean
    pub se: f64,
    pub min: f64,
    pub max: f64,
    /// present for weighted samples
    pub n_eff: Option<f64>,
}

impl SampleSummary {
    /// Mean with standard error; with weights, the self-normalized mean
    /// Σwx/Σw and its delta-method standard error.
    pub fn new(sample: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        if sample.is_empty() {
            return invalid("empty sample");
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return invalid("sample contains non-finite values");
        }
        let n = sample.len();
        let min = sample.iter().copied().fold(f64::INFINITY, f64::min);
        let max = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match weights {
            None => {
                let mean = sample.iter().sum::<f64>() / n as f64;
                let var = if n > 1 {
                    sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                Ok(Self {
                    n,
                    mean,
                    se: (var / n as f64).sqrt(),
                    min,
                    max,
                    n_eff: None,
                })
            }
            Some(w) => {
                if w.len() != n {
                    return invalid(format!("{} weights for {n} points", w.len()));
                }
                if w.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                    return invalid("weights must be finite and nonnegative");
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return invalid("all weights are zero");
                }
                let mean = sample.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / total;
                let s2 = sample
                    .iter()
                    .zip(w)
                    .map(|(x, w)| w * w * (x - mean) * (x - mean))
                    .sum::<f64>();
                let sum_sq: f64 = w.iter().map(|v| v * v).sum();
                Ok(Self {
                    n,
                    mean,
                    se: s2.sqrt() / total,
                    min,
                    max,
                    n_eff: Some(total * total / sum_sq),
                })
            }
        }
    }
}

/// Unbiased sample variance.
pub fn sample_variance(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Pearson correlation of paired samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Percentile bootstrap interval for `functional` at confidence `level`.
pub fn bootstrap_ci<F>(
    sample: &[f64],
    functional: F,
    n_resamples: usize,
    level: f64,
    rng: &mut RngStream,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if sample.is_empty() {
        return invalid("empty sample");
    }
    if n_resamples < 100 {
        return invalid(format!("at least 100 resamples needed, got {n_resamples}"));
    }
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("confidence level must lie in (0, 1), got {level}"));
    }
    let n = sample.len();
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..n_resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = sample[rng.below(n)];
            }
            functional(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - level);
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Rayleigh CDF with scale σ: 1 - exp(-x²/2σ²).
pub fn rayleigh_cdf(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x * x / (2.0 * sigma * sigma)).exp_m1()
    }
}

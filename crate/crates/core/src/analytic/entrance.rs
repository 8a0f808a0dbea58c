//! Law of the Brownian meander at its first positive time, and the Imhof
//! density relating the meander to the three-dimensional Bessel process.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::exit::halfline_survival;
use crate::error::{invalid, Error, Result};
use crate::quad::{gk15, integrate_to_inf, QuadOptions};
use crate::rng::RngStream;

/// Number of quantile nodes in an entrance table.
pub const TABLE_NODES: usize = 4096;

/// Unnormalized entrance density in the scaled variable v = z/√s.
fn scaled_kernel(horizon: f64, s: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    (horizon / s).sqrt() * v * (-0.5 * v * v).exp() * halfline_survival(horizon - s, v * s.sqrt())
}

fn check_entrance_args(horizon: f64, s: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidTime(horizon));
    }
    if !(s > 0.0 && s < horizon) {
        return invalid(format!("entrance time must lie in (0, {horizon}), got {s}"));
    }
    Ok(())
}

/// Normalizing constant of the entrance density, by adaptive quadrature.
pub fn entrance_normalizer(horizon: f64, s: f64) -> Result<f64> {
    check_entrance_args(horizon, s)?;
    integrate_to_inf(|v| scaled_kernel(horizon, s, v), 0.0, QuadOptions::abs(1e-10))
}

/// Density at z of the meander on [0, T] observed at time s:
/// (√T / s^{3/2}) z exp(-z²/2s) γ_{ℝ+}(T - s, z) / N(s, T).
pub fn meander_entrance_density(horizon: f64, s: f64, z: f64) -> Result<f64> {
    check_entrance_args(horizon, s)?;
    if !(z > 0.0 && z.is_finite()) {
        return invalid(format!("entrance density needs z > 0, got {z}"));
    }
    let table = entrance_table(horizon, s)?;
    Ok(scaled_kernel(horizon, s, z / s.sqrt()) / s.sqrt() / table.normalizer)
}

/// Radon–Nikodym density of the meander law against the Bessel-3 law on
/// [0, T], evaluated at the Bessel endpoint: √(πT) / (√2 Z(T)).
pub fn imhof_weight(horizon: f64, endpoint: f64) -> Result<f64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidTime(horizon));
    }
    if !(endpoint > 0.0 && endpoint.is_finite()) {
        return invalid(format!("Bessel endpoint must be positive, got {endpoint}"));
    }
    Ok((std::f64::consts::PI * horizon).sqrt() / (std::f64::consts::SQRT_2 * endpoint))
}

/// Inverse-CDF table for the entrance law at time s of a meander on [0, T].
///
/// Quantiles are stored against w = F^{1/3}: near the origin F grows like z³,
/// so z is close to linear in w there and the monotone cubic interpolant
/// stays accurate down to the smallest quantiles.
#[derive(Debug)]
pub struct EntranceTable {
    horizon: f64,
    s: f64,
    normalizer: f64,
    w: Vec<f64>,
    v: Vec<f64>,
    slope: Vec<f64>,
}

impl EntranceTable {
    pub fn new(horizon: f64, s: f64) -> Result<Self> {
        let normalizer = entrance_normalizer(horizon, s)?;
        let v_max = (80.0 + (horizon / s).ln().max(0.0)).sqrt();
        let n = TABLE_NODES;
        let nodes: Vec<f64> = (0..n).map(|i| v_max * i as f64 / (n - 1) as f64).collect();
        let mut cdf = Vec::with_capacity(n);
        cdf.push(0.0);
        let kernel = |v: f64| scaled_kernel(horizon, s, v);
        let mut acc = 0.0;
        for pair in nodes.windows(2) {
            acc += gk15(&kernel, pair[0], pair[1]).0;
            cdf.push(acc);
        }
        let total = acc;
        let mut w = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for (&node, &c) in nodes.iter().zip(&cdf) {
            let wi = (c / total).min(1.0).cbrt();
            if w.last().is_none_or(|&last| wi > last) {
                w.push(wi);
                v.push(node);
            }
        }
        // the last retained node carries the whole remaining tail
        if let Some(last) = w.last_mut() {
            *last = 1.0;
        }
        let slope = pchip_slopes(&w, &v);
        Ok(Self {
            horizon,
            s,
            normalizer,
            w,
            v,
            slope,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn time(&self) -> f64 {
        self.s
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Quantile of the entrance law at probability u ∈ (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let w = u.clamp(0.0, 1.0).cbrt();
        let k = match self.w.partition_point(|&x| x <= w) {
            0 => 0,
            i if i >= self.w.len() => self.w.len() - 2,
            i => i - 1,
        };
        let (w0, w1) = (self.w[k], self.w[k + 1]);
        let h = w1 - w0;
        let t = ((w - w0) / h).clamp(0.0, 1.0);
        let (t2, t3) = (t * t, t * t * t);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * self.v[k]
            + (t3 - 2.0 * t2 + t) * h * self.slope[k]
            + (-2.0 * t3 + 3.0 * t2) * self.v[k + 1]
            + (t3 - t2) * h * self.slope[k + 1];
        v * self.s.sqrt()
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.quantile(rng.uniform_open())
    }
}

/// Fritsch–Carlson/Butland slopes for a monotone cubic Hermite interpolant.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
    let delta: Vec<f64> = y.windows(2).zip(&h).map(|(p, hk)| (p[1] - p[0]) / hk).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end_slope = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

type TableCache = RwLock<HashMap<(u64, u64), Arc<EntranceTable>>>;

fn cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Shared table for (T, s). Built outside the lock; the first published
/// table wins and later identical builds are dropped.
pub fn entrance_table(horizon: f64, s: f64) -> Result<Arc<EntranceTable>> {
    check_entrance_args(horizon, s)?;
    let key = (horizon.to_bits(), s.to_bits());
    if let Some(t) = cache().read().expect("entrance cache poisoned").get(&key) {
        return Ok(Arc::clone(t));
    }
    let table = Arc::new(EntranceTable::new(horizon, s)?);
    let mut map = cache().write().expect("entrance cache poisoned");
    Ok(Arc::clone(map.entry(key).or_insert(table)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    /// Closed-form CDF: ∫ z e^{-az²} erf(bz) dz has an elementary antiderivative.
    fn closed_form_cdf(horizon: f64, s: f64, z: f64) -> f64 {
        let a = 1.0 / (2.0 * s);
        let b = 1.0 / (2.0 * (horizon - s)).sqrt();
        let c = (a + b * b).sqrt();
        let pref = horizon.sqrt() / s.powf(1.5);
        pref * (-(-a * z * z).exp() * libm::erf(b * z) / (2.0 * a) + b / (2.0 * a * c) * libm::erf(c * z))
    }

    #[test]
    fn normalizer_is_one() {
        for &(t, s) in &[(1.0, 0.1), (1.0, 0.5), (1.0, 0.9), (2.0, 1e-6), (1.0, 1.0 - 1e-6)] {
            let n = entrance_normalizer(t, s).unwrap();
            assert!((n - 1.0).abs() < 1e-8, "T={t} s={s}: {n}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for frac in [0.1, 0.5, 0.9] {
            let s = frac;
            let total = integrate(
                |z| meander_entrance_density(1.0, s, z.max(1e-300)).unwrap_or(0.0),
                1e-300,
                20.0,
                QuadOptions::abs(1e-11),
            )
            .unwrap();
            assert!((total - 1.0).abs() < 1e-8, "s={s}: {total}");
        }
    }

    #[test]
    fn density_tends_to_rayleigh_at_horizon() {
        let s = 1.0 - 1e-9;
        for &z in &[0.2, 0.7, 1.3, 2.5] {
            let f = meander_entrance_density(1.0, s, z).unwrap();
            let rayleigh = z * (-z * z / 2.0).exp();
            assert!((f - rayleigh).abs() < 1e-4, "z={z}: {f} vs {rayleigh}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(meander_entrance_density(1.0, 0.0, 1.0).is_err());
        assert!(meander_entrance_density(1.0, 1.0, 1.0).is_err());
        assert!(meander_entrance_density(1.0, 0.5, 0.0).is_err());
        assert!(imhof_weight(1.0, 0.0).is_err());
        assert!(imhof_weight(1.0, -1.0).is_err());
    }

    #[test]
    fn imhof_examples() {
        let w = imhof_weight(1.0, (std::f64::consts::PI / 2.0).sqrt()).unwrap();
        assert!((w - 1.0).abs() < 1e-15);
        let w = imhof_weight(4.0, 1.0).unwrap();
        assert!((w - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn quantile_table_matches_closed_form_cdf() {
        for &(t, s) in &[(1.0, 1e-2), (1.0, 0.5), (1.0, 0.999), (3.0, 1e-5)] {
            let table = entrance_table(t, s).unwrap();
            let mut worst: f64 = 0.0;
            for i in 1..2000 {
                let u = i as f64 / 2000.0;
                let z = table.quantile(u);
                worst = worst.max((closed_form_cdf(t, s, z) - u).abs());
            }
            for &u in &[1e-9, 1e-6, 1e-3, 0.999, 0.999_999] {
                let z = table.quantile(u);
                worst = worst.max((closed_form_cdf(t, s, z) - u).abs());
            }
            assert!(worst < 1e-6, "T={t} s={s}: {worst}");
        }
    }

    #[test]
    fn cache_returns_shared_table() {
        let a = entrance_table(1.0, 0.25).unwrap();
        let b = entrance_table(1.0, 0.25).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}

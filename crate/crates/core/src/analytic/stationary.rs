//! Drifts of contracting flows and the stationary law π(x) = C exp(2A(x)),
//! A' = a, together with θ(y₁, y₂) = π((y₁, y₂)).

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{invalid, Error, Result};
use crate::quad::{gk15, integrate, integrate_to_inf, QuadOptions};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Panels in the tabulated antiderivative and cumulative mass.
const LAW_PANELS: usize = 4096;

/// Half-width of the tabulated range in units of 1/√λ. Outside it the density
/// is below e^{-46} of its peak.
const RANGE_SCALE: f64 = 46.0;

/// A one-dimensional drift a with (a(x) - a(y))(x - y) ≤ -λ(x - y)² and
/// Lipschitz constant L. Clones share the lazily built stationary law.
#[derive(Clone)]
pub struct DriftSpec {
    inner: Arc<DriftInner>,
}

struct DriftInner {
    a: RealFn,
    antiderivative: Option<RealFn>,
    lipschitz: f64,
    lambda: f64,
    law: OnceLock<Result<StationaryLaw>>,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("lipschitz", &self.inner.lipschitz)
            .field("lambda", &self.inner.lambda)
            .field("antiderivative", &self.inner.antiderivative.is_some())
            .finish()
    }
}

impl DriftSpec {
    pub fn new<F>(a: F, lipschitz: f64, lambda: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(Arc::new(a), None, lipschitz, lambda)
    }

    /// Same as [`DriftSpec::new`] with a closed-form A(x) = ∫₀ˣ a(u) du.
    pub fn with_antiderivative<F, G>(a: F, antiderivative: G, lipschitz: f64, lambda: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(Arc::new(a), Some(Arc::new(antiderivative)), lipschitz, lambda)
    }

    /// a(x) = -λ(x - c).
    pub fn linear(lambda: f64, center: f64) -> Result<Self> {
        Self::with_antiderivative(
            move |x| -lambda * (x - center),
            move |x| -lambda * (0.5 * x * x - center * x),
            lambda,
            lambda,
        )
    }

    fn build(a: RealFn, antiderivative: Option<RealFn>, lipschitz: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidDrift(format!("monotonicity constant must be positive, got {lambda}")));
        }
        if !(lipschitz >= lambda && lipschitz.is_finite()) {
            return Err(Error::InvalidDrift(format!(
                "Lipschitz constant {lipschitz} must be finite and at least λ = {lambda}"
            )));
        }
        Ok(Self {
            inner: Arc::new(DriftInner {
                a,
                antiderivative,
                lipschitz,
                lambda,
                law: OnceLock::new(),
            }),
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.inner.a)(x)
    }

    pub fn lambda(&self) -> f64 {
        self.inner.lambda
    }

    pub fn lipschitz(&self) -> f64 {
        self.inner.lipschitz
    }

    /// A(x) = ∫₀ˣ a(u) du, closed form when supplied, otherwise numeric.
    pub fn antiderivative(&self, x: f64) -> Result<f64> {
        if let Some(big_a) = &self.inner.antiderivative {
            return Ok(big_a(x) - big_a(0.0));
        }
        let law = self.law()?;
        Ok(law.delta_a(self, x) - law.delta_a(self, 0.0))
    }

    /// Checks the one-sided Lipschitz condition between consecutive grid points.
    pub fn validate_on_grid(&self, grid: &[f64], tol: f64) -> Result<()> {
        for pair in grid.windows(2) {
            let (x0, x1) = (pair[0], pair[1]);
            if x1 <= x0 {
                return invalid("validation grid must be strictly increasing");
            }
            let (a0, a1) = (self.eval(x0), self.eval(x1));
            if !(a0.is_finite() && a1.is_finite()) {
                return Err(Error::InvalidDrift(format!("drift is not finite near x = {x0}")));
            }
            let dx = x1 - x0;
            if (a1 - a0) * dx > -self.lambda() * dx * dx + tol {
                return Err(Error::InvalidDrift(format!(
                    "monotonicity with λ = {} fails on [{x0}, {x1}]",
                    self.lambda()
                )));
            }
        }
        Ok(())
    }

    /// The stationary law, built on first use and shared by clones.
    pub fn law(&self) -> Result<&StationaryLaw> {
        self.inner
            .law
            .get_or_init(|| StationaryLaw::new(self))
            .as_ref()
            .map_err(Clone::clone)
    }
}

/// Tabulated stationary law of dX = a(X)dt + dW.
#[derive(Debug)]
pub struct StationaryLaw {
    mode: f64,
    lo: f64,
    h: f64,
    /// A(x) - A(mode) at the nodes
    delta_a: Vec<f64>,
    slope: Vec<f64>,
    /// unnormalized mass left of each node, and right of each node
    left: Vec<f64>,
    right: Vec<f64>,
    log_total: f64,
    direct_width: f64,
}

impl StationaryLaw {
    fn new(drift: &DriftSpec) -> Result<Self> {
        let mode = find_root(drift)?;
        let half = (RANGE_SCALE / drift.lambda()).sqrt();
        let n = LAW_PANELS;
        let lo = mode - half;
        let h = 2.0 * half / n as f64;
        let nodes: Vec<f64> = (0..=n).map(|i| if i == n / 2 { mode } else { lo + h * i as f64 }).collect();
        let slope: Vec<f64> = nodes.iter().map(|&x| drift.eval(x)).collect();
        if slope.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDrift("drift is not finite on the stationary range".into()));
        }
        drift.validate_on_grid(&nodes, 1e-9 * (1.0 + drift.lipschitz()) * h)?;

        let mut delta_a = vec![0.0; n + 1];
        match &drift.inner.antiderivative {
            Some(big_a) => {
                let base = big_a(mode);
                for (d, &x) in delta_a.iter_mut().zip(&nodes) {
                    *d = big_a(x) - base;
                }
            }
            None => {
                let a = |x: f64| drift.eval(x);
                for i in n / 2..n {
                    delta_a[i + 1] = delta_a[i] + gk15(&a, nodes[i], nodes[i + 1]).0;
                }
                for i in (0..n / 2).rev() {
                    delta_a[i] = delta_a[i + 1] - gk15(&a, nodes[i], nodes[i + 1]).0;
                }
            }
        }

        let mut law = Self {
            mode,
            lo,
            h,
            delta_a,
            slope,
            left: vec![0.0; n + 1],
            right: vec![0.0; n + 1],
            log_total: 0.0,
            direct_width: 0.25 / drift.lipschitz().sqrt(),
        };
        let masses: Vec<f64> = (0..n)
            .map(|i| gk15(&|x| (2.0 * law.interp(i, x)).exp(), nodes[i], nodes[i + 1]).0)
            .collect();
        for i in 0..n {
            law.left[i + 1] = law.left[i] + masses[i];
        }
        for i in (0..n).rev() {
            law.right[i] = law.right[i + 1] + masses[i];
        }
        let total = law.left[n];
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::QuadratureFailed {
                estimate: total,
                error: f64::NAN,
            });
        }
        law.log_total = total.ln();
        Ok(law)
    }

    fn nodes(&self) -> usize {
        self.delta_a.len() - 1
    }

    fn hi(&self) -> f64 {
        self.lo + self.h * self.nodes() as f64
    }

    fn node(&self, i: usize) -> f64 {
        if i == self.nodes() / 2 {
            self.mode
        } else {
            self.lo + self.h * i as f64
        }
    }

    fn panel(&self, x: f64) -> usize {
        (((x - self.lo) / self.h).floor().max(0.0) as usize).min(self.nodes() - 1)
    }

    /// Cubic Hermite interpolant of A - A(mode) on panel i.
    fn interp(&self, i: usize, x: f64) -> f64 {
        let (x0, x1) = (self.node(i), self.node(i + 1));
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.delta_a[i]
            + (t3 - 2.0 * t2 + t) * h * self.slope[i]
            + (-2.0 * t3 + 3.0 * t2) * self.delta_a[i + 1]
            + (t3 - t2) * h * self.slope[i + 1]
    }

    fn delta_a(&self, drift: &DriftSpec, x: f64) -> f64 {
        if let Some(big_a) = &drift.inner.antiderivative {
            return big_a(x) - big_a(self.mode);
        }
        let (lo, hi) = (self.lo, self.hi());
        let opts = QuadOptions::abs(1e-12);
        if x < lo {
            self.delta_a[0] - integrate(|u| drift.eval(u), x, lo, opts).unwrap_or(f64::INFINITY)
        } else if x > hi {
            self.delta_a[self.nodes()] + integrate(|u| drift.eval(u), hi, x, opts).unwrap_or(f64::NEG_INFINITY)
        } else {
            self.interp(self.panel(x), x)
        }
    }

    /// The zero of the drift, where π peaks.
    pub fn mode(&self) -> f64 {
        self.mode
    }

    /// Tabulated support [lo, hi]; outside it π is below e^{-46} of its peak.
    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi())
    }

    pub fn log_density(&self, drift: &DriftSpec, x: f64) -> f64 {
        2.0 * self.delta_a(drift, x) - self.log_total
    }

    /// F(x) = π((-∞, x)).
    pub fn cdf(&self, drift: &DriftSpec, x: f64) -> f64 {
        if x <= self.lo {
            return self.tail_left(drift, x);
        }
        if x >= self.hi() {
            return 1.0 - self.tail_right(drift, x);
        }
        let i = self.panel(x);
        let f = |u: f64| (2.0 * self.interp(i, u)).exp();
        ((self.left[i] + gk15(&f, self.node(i), x).0) / self.left[self.nodes()]).min(1.0)
    }

    /// 1 - F(x), accurate in the right tail.
    pub fn survival(&self, drift: &DriftSpec, x: f64) -> f64 {
        if x >= self.hi() {
            return self.tail_right(drift, x);
        }
        if x <= self.lo {
            return 1.0 - self.tail_left(drift, x);
        }
        let i = self.panel(x);
        let f = |u: f64| (2.0 * self.interp(i, u)).exp();
        ((self.right[i + 1] + gk15(&f, x, self.node(i + 1)).0) / self.left[self.nodes()]).min(1.0)
    }

    fn tail_left(&self, drift: &DriftSpec, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        let reference = self.log_density(drift, x);
        let mass = integrate_to_inf(
            |u| (self.log_density(drift, x - u) - reference).exp(),
            0.0,
            QuadOptions::abs(1e-12),
        )
        .unwrap_or(0.0);
        mass * reference.exp()
    }

    fn tail_right(&self, drift: &DriftSpec, x: f64) -> f64 {
        if x == f64::INFINITY {
            return 0.0;
        }
        let reference = self.log_density(drift, x);
        let mass = integrate_to_inf(
            |u| (self.log_density(drift, x + u) - reference).exp(),
            0.0,
            QuadOptions::abs(1e-12),
        )
        .unwrap_or(0.0);
        mass * reference.exp()
    }

    /// log θ(y₁, y₂), computed without forming tiny differences of CDF values.
    pub fn log_theta(&self, drift: &DriftSpec, y1: f64, y2: f64) -> Result<f64> {
        if y1.is_nan() || y2.is_nan() || y1 >= y2 {
            return invalid(format!("θ needs y1 < y2, got ({y1}, {y2})"));
        }
        let width = y2 - y1;
        let log_theta = if width <= self.direct_width {
            let m = self.mode.clamp(y1, y2);
            let reference = self.log_density(drift, m);
            let f = |u: f64| (self.log_density(drift, u) - reference).exp();
            reference + gk15(&f, y1, y2).0.ln()
        } else if y1 < self.mode && self.mode < y2 {
            (1.0 - self.cdf(drift, y1) - self.survival(drift, y2)).ln()
        } else {
            // wide interval on one side of the mode; the density peaks at the
            // endpoint nearer the mode
            let near = if y2 <= self.mode { y2 } else { y1 };
            let reference = self.log_density(drift, near);
            let f = |u: f64| (self.log_density(drift, u) - reference).exp();
            let opts = QuadOptions {
                abs_tol: 1e-14,
                rel_tol: 1e-10,
                max_panels: 4000,
            };
            let mass = if y1 == f64::NEG_INFINITY {
                integrate_to_inf(|u| f(y2 - u), 0.0, opts)?
            } else if y2 == f64::INFINITY {
                integrate_to_inf(|u| f(y1 + u), 0.0, opts)?
            } else {
                integrate(f, y1, y2, opts)?
            };
            reference + mass.ln()
        };
        if log_theta.is_finite() {
            Ok(log_theta.min(0.0))
        } else {
            Err(Error::ThetaUnderflow { lo: y1, hi: y2 })
        }
    }
}

/// Zero of a strictly decreasing drift by bracket expansion and bisection.
fn find_root(drift: &DriftSpec) -> Result<f64> {
    let a0 = drift.eval(0.0);
    if !a0.is_finite() {
        return Err(Error::InvalidDrift("drift is not finite at 0".into()));
    }
    if a0 == 0.0 {
        return Ok(0.0);
    }
    let dir = a0.signum();
    let mut near = 0.0;
    let mut step = (a0.abs() / drift.lambda()).max(1e-12);
    let mut far = dir * step;
    loop {
        let v = drift.eval(far);
        if !v.is_finite() {
            return Err(Error::InvalidDrift(format!("drift is not finite at {far}")));
        }
        if v * dir <= 0.0 {
            break;
        }
        near = far;
        step *= 2.0;
        far = dir * step;
        if step > 1e12 {
            return Err(Error::InvalidDrift("drift has no zero".into()));
        }
    }
    let (mut lo, mut hi) = if near < far { (near, far) } else { (far, near) };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if drift.eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// π(x) = C exp(2A(x)).
pub fn stationary_density(drift: &DriftSpec, x: f64) -> Result<f64> {
    let law = drift.law()?;
    Ok(law.log_density(drift, x).exp())
}

/// F(x) = π((-∞, x)).
pub fn stationary_cdf(drift: &DriftSpec, x: f64) -> Result<f64> {
    let law = drift.law()?;
    Ok(law.cdf(drift, x))
}

/// θ(y₁, y₂) = π((y₁, y₂)); infinite endpoints are allowed.
pub fn theta(drift: &DriftSpec, y1: f64, y2: f64) -> Result<f64> {
    let law = drift.law()?;
    Ok(law.log_theta(drift, y1, y2)?.exp())
}

/// (∂₁ log θ, ∂₂ log θ) = (-π(y₁)/θ, π(y₂)/θ).
pub fn grad_log_theta(drift: &DriftSpec, y1: f64, y2: f64) -> Result<(f64, f64)> {
    let law = drift.law()?;
    let lt = law.log_theta(drift, y1, y2)?;
    Ok((
        -(law.log_density(drift, y1) - lt).exp(),
        (law.log_density(drift, y2) - lt).exp(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ou() -> DriftSpec {
        DriftSpec::linear(1.0, 0.0).unwrap()
    }

    fn numeric_ou(lambda: f64, c: f64) -> DriftSpec {
        DriftSpec::new(move |x| -lambda * (x - c), lambda, lambda).unwrap()
    }

    #[test]
    fn linear_drift_gives_gaussian() {
        for d in [ou(), numeric_ou(1.0, 0.0)] {
            for &x in &[-2.0, -0.3, 0.0, 0.8, 3.0] {
                let p = stationary_density(&d, x).unwrap();
                let exact = (-x * x).exp() / PI.sqrt();
                assert!((p - exact).abs() < 1e-12, "x={x}: {p} vs {exact}");
            }
        }
    }

    #[test]
    fn theta_examples() {
        let d = ou();
        assert!((theta(&d, f64::NEG_INFINITY, f64::INFINITY).unwrap() - 1.0).abs() < 1e-12);
        let t = theta(&d, -1.0, 1.0).unwrap();
        assert!((t - libm::erf(1.0)).abs() < 1e-10, "{t}");
        let lam = 2.5;
        let d = numeric_ou(lam, 0.7);
        let t = theta(&d, 0.1, 1.9).unwrap();
        let sd = 1.0 / (2.0 * lam).sqrt();
        let cdf = |x: f64| 0.5 * libm::erfc(-(x - 0.7) / (sd * 2f64.sqrt()));
        assert!((t - (cdf(1.9) - cdf(0.1))).abs() < 1e-10);
    }

    #[test]
    fn theta_is_accurate_for_tiny_and_far_intervals() {
        let d = ou();
        let t = theta(&d, 0.3, 0.3 + 1e-9).unwrap();
        let p = stationary_density(&d, 0.3).unwrap();
        assert!((t / (p * 1e-9) - 1.0).abs() < 1e-6);
        // far tail: erfc(8) - erfc(9) relative accuracy
        let far = theta(&d, 8.0, 9.0).unwrap();
        let exact = 0.5 * (libm::erfc(8.0) - libm::erfc(9.0));
        assert!((far / exact - 1.0).abs() < 1e-8, "{far} vs {exact}");
        let lt = d.law().unwrap().log_theta(&d, 30.0, 31.0).unwrap();
        assert!(lt.is_finite() && lt < -800.0);
    }

    #[test]
    fn theta_gradient_matches_finite_difference() {
        let d = DriftSpec::new(|x: f64| -x - (x - 0.5).tanh(), 2.0, 1.0).unwrap();
        let law = d.law().unwrap();
        for &(y1, y2) in &[(-0.3, 0.2), (-1.0, 1.5), (0.4, 0.41), (1.0, 3.0)] {
            let (g1, g2) = grad_log_theta(&d, y1, y2).unwrap();
            let h = 1e-6;
            let f1 = (law.log_theta(&d, y1 + h, y2).unwrap() - law.log_theta(&d, y1 - h, y2).unwrap()) / (2.0 * h);
            let f2 = (law.log_theta(&d, y1, y2 + h).unwrap() - law.log_theta(&d, y1, y2 - h).unwrap()) / (2.0 * h);
            assert!((g1 - f1).abs() < 1e-5 * g1.abs().max(1.0), "{g1} vs {f1}");
            assert!((g2 - f2).abs() < 1e-5 * g2.abs().max(1.0), "{g2} vs {f2}");
        }
    }

    #[test]
    fn shifted_drift_shifts_law() {
        let a = ou();
        let b = numeric_ou(1.0, 2.0);
        assert!((b.law().unwrap().mode() - 2.0).abs() < 1e-12);
        for &x in &[-1.0, 0.0, 0.5, 2.0] {
            let pa = stationary_density(&a, x).unwrap();
            let pb = stationary_density(&b, x + 2.0).unwrap();
            assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_antiderivative_matches_closed_form() {
        let d = numeric_ou(1.5, -0.4);
        for &x in &[-3.0, -0.4, 0.0, 2.0] {
            let exact = -1.5 * (0.5 * x * x + 0.4 * x);
            assert!((d.antiderivative(x).unwrap() - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(DriftSpec::linear(0.0, 0.0).is_err());
        assert!(DriftSpec::new(|x| -x, 0.5, 1.0).is_err());
        assert!(theta(&ou(), 1.0, 1.0).is_err());
        assert!(theta(&ou(), 1.0, -1.0).is_err());
        // increasing somewhere: violates the monotonicity constant
        let bad = DriftSpec::new(|x: f64| -x + 2.0 * x.sin(), 3.0, 1.0).unwrap();
        assert!(matches!(stationary_density(&bad, 0.0), Err(Error::InvalidDrift(_))));
    }

    #[test]
    fn grid_validation() {
        let d = ou();
        let grid: Vec<f64> = (0..100).map(|i| -5.0 + 0.1 * i as f64).collect();
        assert!(d.validate_on_grid(&grid, 1e-12).is_ok());
        let weak = DriftSpec::new(|x| -0.5 * x, 1.0, 1.0).unwrap();
        assert!(weak.validate_on_grid(&grid, 1e-12).is_err());
    }
}

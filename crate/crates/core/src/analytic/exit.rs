//! Survival probabilities γ_G(t, y) = P(τ_G > t | B(0) = y) and their
//! logarithmic gradients, which are the drifts of the conditioned diffusions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::domain::{Domain1D, DomainSpec};
use crate::error::{Error, Result};

/// √(π/2), the limit of [`gauss_integral`] at +∞.
pub const HALF_GAUSS_MASS: f64 = 1.253_314_137_315_500_3;

/// Below this ratio d/√t the log-gradient is replaced by its asymptote 1/d.
pub const ASYMPTOTE_RATIO: f64 = 1e-8;

/// Smallest probability fed into a logarithm.
pub const PROB_FLOOR: f64 = 1e-300;

/// Interval survival switches from the sine series to images below t = SEAM · L².
pub const INTERVAL_SEAM: f64 = 0.05;

/// Smallest positive f64; the half-line drift is positive but may be smaller
/// than anything representable far from the boundary.
const TINY_DRIFT: f64 = 4.9406564584124654e-324;

/// E(x) = ∫₀ˣ exp(-u²/2) du.
pub fn gauss_integral(x: f64) -> f64 {
    HALF_GAUSS_MASS * libm::erf(x * FRAC_1_SQRT_2)
}

/// u·exp(-u²/2) / E(u) for u > 0. Lies in (0, 1] and tends to 1 as u → 0.
pub(crate) fn halfline_ratio(u: f64) -> f64 {
    if u < ASYMPTOTE_RATIO {
        1.0
    } else if u < 1e-3 {
        let v = u * u;
        1.0 - v / 3.0 + 2.0 * v * v / 45.0
    } else {
        (u.ln() - 0.5 * u * u - gauss_integral(u).ln()).exp()
    }
}

/// γ_{ℝ+}(t, d): survival of BM started at distance d from a single wall.
pub fn halfline_survival(t: f64, d: f64) -> f64 {
    libm::erf(d / (2.0 * t).sqrt())
}

/// ∂_d log γ_{ℝ+}(t, d) = exp(-d²/2t) / (√t E(d/√t)).
pub fn halfline_drift(t: f64, d: f64) -> f64 {
    let u = d / t.sqrt();
    (halfline_ratio(u) / d).max(TINY_DRIFT)
}

fn gaussian_kernel(x: f64, t: f64) -> f64 {
    (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Survival in (0, L) from distance z to the left wall, and ∂_z of it.
fn interval_survival_and_slope(t: f64, z: f64, len: f64) -> (f64, f64) {
    // γ is symmetric about L/2; evaluate at the nearer wall and flip the slope
    let (zr, sign) = if z <= 0.5 * len { (z, 1.0) } else { (len - z, -1.0) };
    let (g, dg) = if t < INTERVAL_SEAM * len * len {
        interval_images(t, zr, len)
    } else {
        interval_sine_series(t, zr, len)
    };
    (g, sign * dg)
}

/// Method of images, written as an alternating sum of masses of the
/// symmetric windows [jL - z, jL + z].
fn interval_images(t: f64, z: f64, len: f64) -> (f64, f64) {
    let s2 = (2.0 * t).sqrt();
    let mut g = libm::erf(z / s2);
    let mut dg = 2.0 * gaussian_kernel(z, t);
    let mut sign = -1.0;
    for j in 1..10_000 {
        let c = j as f64 * len;
        let upper = libm::erfc((c - z) / s2);
        let mass = 0.5 * (upper - libm::erfc((c + z) / s2));
        let dmass = gaussian_kernel(c - z, t) + gaussian_kernel(c + z, t);
        g += 2.0 * sign * mass;
        dg += 2.0 * sign * dmass;
        sign = -sign;
        if upper <= 1e-18 * g.abs() || upper == 0.0 {
            break;
        }
    }
    (g, dg)
}

/// Eigenfunction expansion Σ_{n odd} 4/(nπ) sin(nπz/L) exp(-n²π²t/2L²).
fn interval_sine_series(t: f64, z: f64, len: f64) -> (f64, f64) {
    let mut g = 0.0;
    let mut dg = 0.0;
    let k = PI / len;
    let mut n = 1u32;
    loop {
        let nf = n as f64;
        let decay = (-nf * nf * k * k * t / 2.0).exp();
        let amp = 4.0 / (nf * PI) * decay;
        g += amp * (nf * k * z).sin();
        dg += 4.0 / len * decay * (nf * k * z).cos();
        // sin(nkz) ≤ nkz bounds the next term relative to the partial sum
        let bound = amp * (nf * k * z).min(1.0);
        if (bound <= 1e-17 * g.abs() && 4.0 / len * decay <= 1e-17 * (g / z).abs()) || decay == 0.0 {
            break;
        }
        n += 2;
    }
    (g, dg)
}

fn factor_survival(f: &Domain1D, t: f64, y: f64) -> f64 {
    match *f {
        Domain1D::HalfLine { origin, direction } => halfline_survival(t, direction * (y - origin)),
        Domain1D::Interval { a, b } => interval_survival_and_slope(t, y - a, b - a).0,
        Domain1D::Line => 1.0,
    }
}

fn factor_log_slope(f: &Domain1D, t: f64, y: f64) -> f64 {
    match *f {
        Domain1D::HalfLine { origin, direction } => {
            direction * halfline_drift(t, direction * (y - origin))
        }
        Domain1D::Interval { a, b } => interval_log_slope(t, y - a, b - a),
        Domain1D::Line => 0.0,
    }
}

fn interval_log_slope(t: f64, z: f64, len: f64) -> f64 {
    let left = z;
    let right = len - z;
    let sqrt_t = t.sqrt();
    if left / sqrt_t < ASYMPTOTE_RATIO {
        return 1.0 / left;
    }
    if right / sqrt_t < ASYMPTOTE_RATIO {
        return -1.0 / right;
    }
    let (g, dg) = interval_survival_and_slope(t, z, len);
    dg / g.max(PROB_FLOOR)
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

/// γ_G(t, y), the probability that Brownian motion from y stays in G up to time t.
pub fn exit_prob(domain: &DomainSpec, t: f64, y: &[f64]) -> Result<f64> {
    check_time(t)?;
    domain.check_interior(y)?;
    Ok(survival_unchecked(domain, t, y))
}

pub(crate) fn survival_unchecked(domain: &DomainSpec, t: f64, y: &[f64]) -> f64 {
    match domain {
        DomainSpec::HalfLine { origin, direction } => {
            halfline_survival(t, direction * (y[0] - origin))
        }
        DomainSpec::Interval { a, b } => interval_survival_and_slope(t, y[0] - a, b - a).0,
        DomainSpec::HalfSpace { .. } => halfline_survival(t, domain.signed_distance(y)),
        DomainSpec::Box { factors } => factors
            .iter()
            .zip(y)
            .map(|(f, &yi)| factor_survival(f, t, yi))
            .product(),
        DomainSpec::Wedge2 => libm::erf((y[1] - y[0]) / (2.0 * t.sqrt())),
    }
}

/// log γ_G(t, y) with the probability clamped to [1e-300, 1].
pub fn log_exit_prob(domain: &DomainSpec, t: f64, y: &[f64]) -> Result<f64> {
    Ok(exit_prob(domain, t, y)?.clamp(PROB_FLOOR, 1.0).ln())
}

/// ∇_y log γ_G(t, y) from closed forms.
pub fn grad_log_exit_prob(domain: &DomainSpec, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    check_time(t)?;
    domain.check_interior(y)?;
    let mut out = vec![0.0; y.len()];
    grad_unchecked(domain, t, y, &mut out);
    Ok(out)
}

/// Allocation-free gradient for the integrators. `y` must be interior.
pub(crate) fn grad_unchecked(domain: &DomainSpec, t: f64, y: &[f64], out: &mut [f64]) {
    match domain {
        DomainSpec::HalfLine { origin, direction } => {
            out[0] = direction * halfline_drift(t, direction * (y[0] - origin));
        }
        DomainSpec::Interval { a, b } => {
            out[0] = interval_log_slope(t, y[0] - a, b - a);
        }
        DomainSpec::HalfSpace { normal, .. } => {
            let g = halfline_drift(t, domain.signed_distance(y));
            for (o, n) in out.iter_mut().zip(normal) {
                *o = g * n;
            }
        }
        DomainSpec::Box { factors } => {
            for ((o, f), &yi) in out.iter_mut().zip(factors).zip(y) {
                *o = factor_log_slope(f, t, yi);
            }
        }
        DomainSpec::Wedge2 => {
            let g = wedge_drift(t, y[1] - y[0]);
            out[0] = -g;
            out[1] = g;
        }
    }
}

/// exp(-Δ²/4t) / (√(2t) E(Δ/√(2t))): the magnitude of each wedge drift component.
pub fn wedge_drift(t: f64, gap: f64) -> f64 {
    let u = gap / (2.0 * t).sqrt();
    (halfline_ratio(u) / gap).max(TINY_DRIFT)
}

/// Scale factor mapping the wedge gap to the distance from its boundary.
pub const WEDGE_GAP_TO_DISTANCE: f64 = FRAC_1_SQRT_2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};

    fn halfline() -> DomainSpec {
        DomainSpec::positive_half_line()
    }

    #[test]
    fn gauss_integral_values() {
        assert_eq!(gauss_integral(0.0), 0.0);
        // oracle: adaptive quadrature of exp(-u²/2)
        let quad = integrate(|u| (-0.5 * u * u).exp(), 0.0, 1.0, QuadOptions::abs(1e-14)).unwrap();
        assert!((gauss_integral(1.0) - quad).abs() < 1e-12);
        assert!((gauss_integral(1.0) - 0.855_624_391_892_149).abs() < 1e-12);
        assert!((gauss_integral(10.0) - (PI / 2.0).sqrt()).abs() < 1e-12);
        assert_eq!(gauss_integral(-0.7), -gauss_integral(0.7));
    }

    #[test]
    fn halfline_example_value() {
        let g = exit_prob(&halfline(), 1.0, &[1.0]).unwrap();
        assert!((g - 0.682_689_492_137_085_9).abs() < 1e-14);
        let far = exit_prob(&halfline(), 1.0, &[1e3]).unwrap();
        assert_eq!(far, 1.0);
    }

    #[test]
    fn wedge_reduces_to_variance_two() {
        let g = exit_prob(&DomainSpec::Wedge2, 1.0, &[0.0, 2f64.sqrt()]).unwrap();
        assert!((g - 0.682_689_492_137_085_9).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(exit_prob(&halfline(), 1.0, &[-1.0]), Err(Error::OutsideDomain { .. })));
        assert!(matches!(exit_prob(&halfline(), 0.0, &[1.0]), Err(Error::InvalidTime(_))));
        assert!(matches!(exit_prob(&halfline(), -2.0, &[1.0]), Err(Error::InvalidTime(_))));
        assert!(matches!(
            exit_prob(&halfline(), 1.0, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(grad_log_exit_prob(&DomainSpec::Wedge2, 1.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn halfline_drift_matches_finite_difference() {
        let g = grad_log_exit_prob(&halfline(), 1.0, &[3.0]).unwrap()[0];
        let h = 1e-5;
        let fd = (halfline_survival(1.0, 3.0 + h).ln() - halfline_survival(1.0, 3.0 - h).ln()) / (2.0 * h);
        assert!((g - fd).abs() / fd < 1e-6, "{g} vs {fd}");
        // e^{-4.5} / E(3)
        assert!((g - (-4.5f64).exp() / gauss_integral(3.0)).abs() < 1e-15);
    }

    #[test]
    fn drift_asymptote_near_wall() {
        let d = 1e-12;
        assert_eq!(halfline_drift(1.0, d), 1.0 / d);
        let d = 1e-5;
        let v = halfline_drift(1.0, d);
        assert!(v <= 1.0 / d && (v * d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn drift_stays_positive_deep_inside() {
        let v = halfline_drift(1e-4, 10.0);
        assert!(v > 0.0 && v <= 0.1);
        let w = wedge_drift(1e-4, 10.0);
        assert!(w > 0.0);
    }

    #[test]
    fn ratio_series_matches_direct_form() {
        for &u in &[1e-3f64, 2e-3, 5e-3] {
            let direct = u * (-0.5 * u * u).exp() / gauss_integral(u);
            let series = {
                let v = u * u;
                1.0 - v / 3.0 + 2.0 * v * v / 45.0
            };
            assert!((direct - series).abs() < 1e-14);
            assert!((halfline_ratio(u) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn interval_branches_agree_at_seam() {
        for &len in &[0.5, 1.0, 3.0] {
            let t = INTERVAL_SEAM * len * len;
            for i in 1..40 {
                let z = len * i as f64 / 40.0;
                let (gi, di) = interval_images(t, z.min(len - z), len);
                let (gs, ds) = interval_sine_series(t, z.min(len - z), len);
                assert!((gi - gs).abs() < 1e-10, "len={len} z={z}: {gi} vs {gs}");
                assert!((di - ds).abs() < 1e-9 * (1.0 + ds.abs()), "slope {di} vs {ds}");
            }
        }
    }

    #[test]
    fn interval_is_symmetric_and_translates() {
        let d = DomainSpec::interval(2.0, 3.0).unwrap();
        let g1 = exit_prob(&d, 0.3, &[2.2]).unwrap();
        let g2 = exit_prob(&d, 0.3, &[2.8]).unwrap();
        assert!((g1 - g2).abs() < 1e-15);
        let base = exit_prob(&DomainSpec::interval(0.0, 1.0).unwrap(), 0.3, &[0.2]).unwrap();
        assert!((g1 - base).abs() < 1e-14);
        let s1 = grad_log_exit_prob(&d, 0.3, &[2.2]).unwrap()[0];
        let s2 = grad_log_exit_prob(&d, 0.3, &[2.8]).unwrap()[0];
        assert!(s1 > 0.0 && (s1 + s2).abs() < 1e-12);
    }

    #[test]
    fn interval_small_time_matches_halfline_near_wall() {
        let d = DomainSpec::interval(0.0, 1.0).unwrap();
        let g = exit_prob(&d, 1e-3, &[0.01]).unwrap();
        assert!((g - halfline_survival(1e-3, 0.01)).abs() < 1e-15);
    }

    #[test]
    fn interval_gradient_matches_finite_difference() {
        let d = DomainSpec::interval(0.0, 1.0).unwrap();
        for &t in &[0.01, 0.04, 0.06, 0.3, 2.0] {
            for &z in &[0.05, 0.2, 0.45, 0.7, 0.93] {
                let g = grad_log_exit_prob(&d, t, &[z]).unwrap()[0];
                let h = 1e-5;
                let fd = (log_exit_prob(&d, t, &[z + h]).unwrap() - log_exit_prob(&d, t, &[z - h]).unwrap())
                    / (2.0 * h);
                assert!((g - fd).abs() <= 1e-6 * fd.abs().max(1e-3), "t={t} z={z}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn box_is_product_and_gradient_concatenates() {
        let b = DomainSpec::product(vec![
            Domain1D::half_line(0.0, 1.0).unwrap(),
            Domain1D::interval(-1.0, 1.0).unwrap(),
            Domain1D::Line,
        ])
        .unwrap();
        let y = [0.4, 0.3, 17.0];
        let g = exit_prob(&b, 0.7, &y).unwrap();
        let m1 = exit_prob(&halfline(), 0.7, &[0.4]).unwrap();
        let m2 = exit_prob(&DomainSpec::interval(-1.0, 1.0).unwrap(), 0.7, &[0.3]).unwrap();
        assert_eq!(g, m1 * m2);
        let grad = grad_log_exit_prob(&b, 0.7, &y).unwrap();
        assert_eq!(grad[0], grad_log_exit_prob(&halfline(), 0.7, &[0.4]).unwrap()[0]);
        assert_eq!(grad[2], 0.0);
    }

    #[test]
    fn half_space_uses_projected_distance() {
        let hs = DomainSpec::half_space(vec![1.0, 1.0], vec![0.6, 0.8]).unwrap();
        let y = [1.3, 1.9];
        let d = 0.3 * 0.6 + 0.9 * 0.8;
        assert!((exit_prob(&hs, 2.0, &y).unwrap() - halfline_survival(2.0, d)).abs() < 1e-15);
        let g = grad_log_exit_prob(&hs, 2.0, &y).unwrap();
        assert!((g[0] / g[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn wedge_gradient_is_antisymmetric_and_shift_invariant() {
        let a = grad_log_exit_prob(&DomainSpec::Wedge2, 0.8, &[0.1, 0.6]).unwrap();
        let b = grad_log_exit_prob(&DomainSpec::Wedge2, 0.8, &[-3.0, -2.5]).unwrap();
        assert_eq!(a[0], -a[1]);
        assert_eq!(a, b);
        // closed form from differentiating γ_H
        let gap: f64 = 0.5;
        let expect = (-gap * gap / (4.0 * 0.8)).exp() / ((1.6f64).sqrt() * gauss_integral(gap / 1.6f64.sqrt()));
        assert!((a[1] - expect).abs() < 1e-14);
    }
}

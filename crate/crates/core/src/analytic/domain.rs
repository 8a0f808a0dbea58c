use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A one-dimensional factor of a [`DomainSpec::Box`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain1D {
    /// {y : direction * (y - origin) > 0}
    HalfLine { origin: f64, direction: f64 },
    /// (a, b)
    Interval { a: f64, b: f64 },
    /// The whole line; contributes a factor 1 to exit probabilities.
    Line,
}

impl Domain1D {
    pub fn half_line(origin: f64, direction: f64) -> Result<Self> {
        if !origin.is_finite() || (direction != 1.0 && direction != -1.0) {
            return invalid(format!(
                "half-line needs a finite origin and direction ±1, got ({origin}, {direction})"
            ));
        }
        Ok(Domain1D::HalfLine { origin, direction })
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return invalid(format!("interval needs finite a < b, got ({a}, {b})"));
        }
        Ok(Domain1D::Interval { a, b })
    }

    /// Positive inside, zero on the boundary, negative outside.
    pub fn signed_distance(&self, y: f64) -> f64 {
        match *self {
            Domain1D::HalfLine { origin, direction } => direction * (y - origin),
            Domain1D::Interval { a, b } => (y - a).min(b - y),
            Domain1D::Line => f64::INFINITY,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Domain1D::HalfLine { origin, direction } => Self::half_line(origin, direction).map(|_| ()),
            Domain1D::Interval { a, b } => Self::interval(a, b).map(|_| ()),
            Domain1D::Line => Ok(()),
        }
    }
}

/// An open set G in which Brownian motion is conditioned to stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    HalfLine { origin: f64, direction: f64 },
    Interval { a: f64, b: f64 },
    /// {y : (y - anchor) · normal > 0}
    HalfSpace { anchor: Vec<f64>, normal: Vec<f64> },
    /// Cartesian product of one-dimensional factors.
    Box { factors: Vec<Domain1D> },
    /// {y ∈ ℝ² : y₁ < y₂}
    Wedge2,
}

impl DomainSpec {
    pub fn half_line(origin: f64, direction: f64) -> Result<Self> {
        Domain1D::half_line(origin, direction)?;
        Ok(DomainSpec::HalfLine { origin, direction })
    }

    pub fn positive_half_line() -> Self {
        DomainSpec::HalfLine {
            origin: 0.0,
            direction: 1.0,
        }
    }

    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Domain1D::interval(a, b)?;
        Ok(DomainSpec::Interval { a, b })
    }

    pub fn half_space(anchor: Vec<f64>, normal: Vec<f64>) -> Result<Self> {
        let d = DomainSpec::HalfSpace { anchor, normal };
        d.validate()?;
        Ok(d)
    }

    pub fn product(factors: Vec<Domain1D>) -> Result<Self> {
        let d = DomainSpec::Box { factors };
        d.validate()?;
        Ok(d)
    }

    /// Checks the invariants of a value that may have been deserialized.
    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::HalfLine { origin, direction } => {
                Domain1D::half_line(*origin, *direction).map(|_| ())
            }
            DomainSpec::Interval { a, b } => Domain1D::interval(*a, *b).map(|_| ()),
            DomainSpec::HalfSpace { anchor, normal } => {
                if anchor.is_empty() || anchor.len() != normal.len() {
                    return invalid("half-space anchor and normal must have equal, nonzero length");
                }
                if anchor.iter().chain(normal).any(|v| !v.is_finite()) {
                    return invalid("half-space parameters must be finite");
                }
                let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-12 {
                    return invalid(format!("half-space normal must have unit length, got {norm}"));
                }
                Ok(())
            }
            DomainSpec::Box { factors } => {
                if factors.is_empty() {
                    return invalid("box needs at least one factor");
                }
                factors.iter().try_for_each(Domain1D::validate)
            }
            DomainSpec::Wedge2 => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::HalfLine { .. } | DomainSpec::Interval { .. } => 1,
            DomainSpec::HalfSpace { anchor, .. } => anchor.len(),
            DomainSpec::Box { factors } => factors.len(),
            DomainSpec::Wedge2 => 2,
        }
    }

    /// Euclidean distance to the boundary, signed: positive inside, negative
    /// outside the closure. For a box this is the smallest per-coordinate
    /// distance, which equals the Euclidean distance inside the set.
    pub fn signed_distance(&self, y: &[f64]) -> f64 {
        match self {
            DomainSpec::HalfLine { origin, direction } => direction * (y[0] - origin),
            DomainSpec::Interval { a, b } => (y[0] - a).min(b - y[0]),
            DomainSpec::HalfSpace { anchor, normal } => y
                .iter()
                .zip(anchor)
                .zip(normal)
                .map(|((yi, ai), ni)| (yi - ai) * ni)
                .sum(),
            DomainSpec::Box { factors } => factors
                .iter()
                .zip(y)
                .map(|(f, &yi)| f.signed_distance(yi))
                .fold(f64::INFINITY, f64::min),
            DomainSpec::Wedge2 => (y[1] - y[0]) * std::f64::consts::FRAC_1_SQRT_2,
        }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim() && y.iter().all(|v| v.is_finite()) && self.signed_distance(y) > 0.0
    }

    /// Distance to the boundary for interior points, 0 otherwise.
    pub fn boundary_distance(&self, y: &[f64]) -> f64 {
        self.signed_distance(y).max(0.0)
    }

    pub(crate) fn check_interior(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        if !self.contains(y) {
            return Err(Error::OutsideDomain { point: y.to_vec() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_enforce_invariants() {
        assert!(DomainSpec::interval(1.0, 1.0).is_err());
        assert!(DomainSpec::interval(2.0, 1.0).is_err());
        assert!(DomainSpec::half_line(0.0, 0.5).is_err());
        assert!(DomainSpec::half_space(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(DomainSpec::half_space(vec![0.0, 0.0], vec![0.6, 0.8]).is_ok());
        assert!(DomainSpec::product(vec![]).is_err());
    }

    #[test]
    fn membership_matches_distance() {
        let domains = vec![
            DomainSpec::half_line(1.0, -1.0).unwrap(),
            DomainSpec::interval(-1.0, 2.0).unwrap(),
            DomainSpec::half_space(vec![0.0, 1.0], vec![0.6, 0.8]).unwrap(),
            DomainSpec::product(vec![
                Domain1D::half_line(0.0, 1.0).unwrap(),
                Domain1D::interval(0.0, 1.0).unwrap(),
            ])
            .unwrap(),
            DomainSpec::Wedge2,
        ];
        let probes = [-3.0, -1.0, -0.2, 0.0, 0.3, 0.5, 0.99, 1.0, 1.7, 2.5];
        for d in &domains {
            for &p in &probes {
                for &q in &probes {
                    let y: Vec<f64> = [p, q][..d.dim()].to_vec();
                    assert_eq!(d.contains(&y), d.boundary_distance(&y) > 0.0, "{d:?} {y:?}");
                }
            }
        }
    }

    #[test]
    fn wedge_distance_is_euclidean() {
        let d = DomainSpec::Wedge2.signed_distance(&[0.0, 2.0]);
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }
}

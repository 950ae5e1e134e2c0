//! Diagonal covariance models.
//!
//! Every rate depends on the covariance only through its operator norm and
//! its effective rank, and the Gaussian deviation law is rotation
//! equivariant, so covariances are carried as a descending eigenvalue list.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Family used to generate a spectrum of a given dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumKind {
    Identity,
    /// `lambda_j = ratio^(j-1)`.
    Geometric { ratio: f64 },
    /// `lambda_j = j^(-exponent)`.
    Polynomial { exponent: f64 },
    Custom { values: Vec<f64> },
}

/// Descending, strictly positive eigenvalues of a diagonal covariance.
///
/// Serializes as a bare JSON array.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn new(kind: &SpectrumKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let eigenvalues = match kind {
            SpectrumKind::Identity => vec![1.0; d],
            SpectrumKind::Geometric { ratio } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "geometric ratio {ratio} outside (0,1)"
                    )));
                }
                (0..d).map(|j| ratio.powi(j as i32)).collect()
            }
            SpectrumKind::Polynomial { exponent } => {
                if !(*exponent > 0.0 && exponent.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "polynomial exponent {exponent} must be positive"
                    )));
                }
                (1..=d).map(|j| (j as f64).powf(-exponent)).collect()
            }
            SpectrumKind::Custom { values } => {
                if values.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: values.len() });
                }
                values.clone()
            }
        };
        Self::from_eigenvalues(eigenvalues)
    }

    /// Validates and sorts an arbitrary positive list.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidParameter("empty spectrum".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "eigenvalue {bad} is not strictly positive and finite"
            )));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { eigenvalues })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `||Sigma|| = lambda_1`.
    pub fn operator_norm(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `r(Sigma) = Tr(Sigma) / ||Sigma||`, always in `[1, d]`.
    pub fn effective_rank(&self) -> f64 {
        self.trace() / self.operator_norm()
    }

    /// Spectrum with every eigenvalue multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_eigenvalues(self.eigenvalues.iter().map(|x| x * factor).collect())
    }

    /// `<Sigma v, v>` for an arbitrary (not necessarily unit) vector.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.eigenvalues.iter().zip(v).map(|(l, x)| l * x * x).sum()
    }
}

impl<'de> Deserialize<'de> for Spectrum {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        Spectrum::from_eigenvalues(values).map_err(serde::de::Error::custom)
    }
}

/// Free-function form of [`Spectrum::new`].
pub fn make_spectrum(kind: &SpectrumKind, d: usize) -> Result<Spectrum> {
    Spectrum::new(kind, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn families() {
        assert_eq!(Spectrum::new(&SpectrumKind::Identity, 4).unwrap().eigenvalues(), &[1.0; 4]);
        let g = Spectrum::new(&SpectrumKind::Geometric { ratio: 0.5 }, 3).unwrap();
        assert_eq!(g.eigenvalues(), &[1.0, 0.5, 0.25]);
        let c = Spectrum::new(&SpectrumKind::Custom { values: vec![2.0, 5.0, 1.0] }, 3).unwrap();
        assert_eq!(c.eigenvalues(), &[5.0, 2.0, 1.0]);
        let p = Spectrum::new(&SpectrumKind::Polynomial { exponent: 1.0 }, 2).unwrap();
        assert_eq!(p.eigenvalues(), &[1.0, 0.5]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Spectrum::new(&SpectrumKind::Geometric { ratio: 1.0 }, 3).is_err());
        assert!(Spectrum::new(&SpectrumKind::Geometric { ratio: 0.0 }, 3).is_err());
        assert!(Spectrum::new(&SpectrumKind::Polynomial { exponent: 0.0 }, 3).is_err());
        assert!(Spectrum::from_eigenvalues(vec![]).is_err());
        assert!(Spectrum::from_eigenvalues(vec![1.0, 0.0]).is_err());
        assert!(Spectrum::from_eigenvalues(vec![1.0, -2.0]).is_err());
        assert!(Spectrum::from_eigenvalues(vec![f64::NAN]).is_err());
        assert!(Spectrum::new(&SpectrumKind::Identity, 0).is_err());
    }

    #[test]
    fn functionals() {
        let s = Spectrum::from_eigenvalues(vec![1.0; 4]).unwrap();
        assert_eq!(s.effective_rank(), 4.0);
        let g = Spectrum::from_eigenvalues(vec![1.0, 0.5, 0.25]).unwrap();
        assert_eq!(g.effective_rank(), 1.75);
        assert_eq!(Spectrum::from_eigenvalues(vec![5.0]).unwrap().effective_rank(), 1.0);
        let t = Spectrum::from_eigenvalues(vec![3.0, 1.0]).unwrap();
        assert_eq!(t.operator_norm(), 3.0);
        assert_eq!(t.trace(), 4.0);
        let one = Spectrum::from_eigenvalues(vec![1.0]).unwrap();
        assert_eq!((one.operator_norm(), one.trace()), (1.0, 1.0));
    }

    #[test]
    fn json_is_a_bare_array() {
        let s = Spectrum::from_eigenvalues(vec![1.0, 2.0]).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[2.0,1.0]");
        let back: Spectrum = serde_json::from_str("[1.0,3.0]").unwrap();
        assert_eq!(back.eigenvalues(), &[3.0, 1.0]);
        assert!(serde_json::from_str::<Spectrum>("[1.0,0.0]").is_err());
    }

    proptest! {
        #[test]
        fn effective_rank_bounds(vals in prop::collection::vec(1e-3f64..1e3, 1..40), t in 1e-3f64..1e3) {
            let s = Spectrum::from_eigenvalues(vals).unwrap();
            let r = s.effective_rank();
            let d = s.dim() as f64;
            prop_assert!(r >= 1.0 - 1e-12 && r <= d + 1e-12);
            prop_assert!(s.operator_norm() <= s.trace() * (1.0 + 1e-12));
            prop_assert!(s.trace() <= d * s.operator_norm() * (1.0 + 1e-12));
            let scaled = s.scaled(t).unwrap();
            prop_assert!((scaled.effective_rank() - r).abs() <= 1e-9 * r);
        }
    }
}

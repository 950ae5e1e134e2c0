//! Seeded samplers and exact population moments of `<X, v>`.
//!
//! All four families are centered, symmetric and calibrated so that
//! `Var <X, v> = <Sigma v, v>` for the declared diagonal covariance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::gamma::ln_gamma;

use crate::chaining;
use crate::covmodel::Spectrum;
use crate::error::{Error, Result};

/// Names the draw procedure. Bumped whenever the per-draw algorithm changes.
pub const GENERATOR_ID: &str = "chacha20-ziggurat-v1";

/// Exhaustive sign enumeration is used up to this dimension.
pub const MAX_ENUM_DIM: usize = 20;

/// `||Z||_{psi_2}` for a standard Gaussian `Z`.
pub fn gaussian_psi2_constant() -> f64 {
    (8.0f64 / 3.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Gaussian,
    Rademacher,
    /// `sqrt(d) diag(sqrt(lambda)) theta` with `theta` uniform on the sphere.
    Sphere,
    /// Independent Student-t coordinates rescaled to unit variance; `dof > 2`.
    StudentT { dof: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Rademacher => "rademacher",
            Family::Sphere => "sphere",
            Family::StudentT { .. } => "student_t",
        }
    }

    pub fn dof(&self) -> Option<f64> {
        match self {
            Family::StudentT { dof } => Some(*dof),
            _ => None,
        }
    }

    pub fn from_name(name: &str, dof: Option<f64>) -> Result<Self> {
        let family = match (name, dof) {
            ("gaussian", None) => Family::Gaussian,
            ("rademacher", None) => Family::Rademacher,
            ("sphere", None) => Family::Sphere,
            ("student_t", Some(dof)) => Family::StudentT { dof },
            ("student_t", None) => {
                return Err(Error::InvalidParameter("student_t requires dof".into()))
            }
            (other, Some(_)) if other != "student_t" => {
                return Err(Error::InvalidParameter(format!("family {other} takes no dof")))
            }
            (other, _) => return Err(Error::InvalidParameter(format!("unknown family {other}"))),
        };
        family.validate()?;
        Ok(family)
    }

    fn validate(&self) -> Result<()> {
        if let Family::StudentT { dof } = self {
            if !(*dof > 2.0 && dof.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "student_t needs dof > 2 for finite variance, got {dof}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        true
    }

    pub fn is_sub_gaussian(&self) -> bool {
        !matches!(self, Family::StudentT { .. })
    }
}

/// Law of `X`: a family calibrated to a diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    family: Family,
    spectrum: Spectrum,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecRepr {
    family: String,
    spectrum: Spectrum,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dof: Option<f64>,
}

impl Serialize for DistributionSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SpecRepr {
            family: self.family.name().to_string(),
            spectrum: self.spectrum.clone(),
            dof: self.family.dof(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DistributionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = SpecRepr::deserialize(deserializer)?;
        let family = Family::from_name(&repr.family, repr.dof).map_err(serde::de::Error::custom)?;
        Ok(DistributionSpec { family, spectrum: repr.spectrum })
    }
}

impl DistributionSpec {
    pub fn new(family: Family, spectrum: Spectrum) -> Result<Self> {
        family.validate()?;
        Ok(Self { family, spectrum })
    }

    pub fn gaussian(spectrum: Spectrum) -> Self {
        Self { family: Family::Gaussian, spectrum }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn is_symmetric(&self) -> bool {
        self.family.is_symmetric()
    }

    pub fn is_sub_gaussian(&self) -> bool {
        self.family.is_sub_gaussian()
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let hash = Sha256::digest(&json);
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(())
    }

    /// Rejects `E|<X,v>|^p` when the Student-t tail makes it infinite.
    pub fn check_moment_exists(&self, p: f64) -> Result<()> {
        if let Family::StudentT { dof } = self.family {
            if p >= dof {
                return Err(Error::MomentDoesNotExist { p, dof });
            }
        }
        Ok(())
    }

    /// `E <X,v>^p` for any `v` (the homogeneous extension off the sphere).
    pub fn moment(&self, v: &[f64], p: u32) -> Result<f64> {
        self.check_dim(v)?;
        self.check_moment_exists(p as f64)?;
        if p % 2 == 1 {
            return Ok(0.0);
        }
        let q = self.spectrum.quadratic_form(v);
        Ok(match self.family {
            Family::Gaussian => double_factorial(p - 1) * q.powf(p as f64 / 2.0),
            Family::Sphere => sphere_even_constant(self.dim(), p) * q.powf(p as f64 / 2.0),
            Family::Rademacher | Family::StudentT { .. } => {
                let c = self.coefficients(v);
                let coord = self.coordinate_moments(p as usize);
                sum_moments(&c, &coord, p as usize)[p as usize]
            }
        })
    }

    /// `E <X,v>^(p-1) X`, equal to `grad m_p(v) / p`.
    pub fn moment_gradient(&self, v: &[f64], p: u32) -> Result<Vec<f64>> {
        if p < 1 {
            return Err(Error::InvalidParameter("gradient needs p >= 1".into()));
        }
        self.check_dim(v)?;
        self.check_moment_exists(p as f64)?;
        let d = self.dim();
        if p % 2 == 1 {
            return Ok(vec![0.0; d]);
        }
        let lam = self.spectrum.eigenvalues();
        let q = self.spectrum.quadratic_form(v);
        let radial = |c: f64| -> Vec<f64> {
            let f = c * q.powf(p as f64 / 2.0 - 1.0);
            lam.iter().zip(v).map(|(l, x)| f * l * x).collect()
        };
        Ok(match self.family {
            Family::Gaussian => radial(double_factorial(p - 1)),
            Family::Sphere => radial(sphere_even_constant(d, p)),
            Family::Rademacher | Family::StudentT { .. } => {
                let c = self.coefficients(v);
                let coord = self.coordinate_moments(p as usize);
                leave_one_out_gradient(&c, &coord, p as usize, lam)
            }
        })
    }

    /// `E |<X,v>|^p` for any `v`; equals [`Self::moment`] for even `p`.
    pub fn abs_moment(&self, v: &[f64], p: u32) -> Result<f64> {
        if p.is_multiple_of(2) {
            return self.moment(v, p);
        }
        self.check_dim(v)?;
        self.check_moment_exists(p as f64)?;
        let q = self.spectrum.quadratic_form(v);
        let pf = p as f64;
        match self.family {
            Family::Gaussian => Ok(gaussian_abs_moment(pf) * q.powf(pf / 2.0)),
            Family::Sphere => Ok(sphere_abs_constant(self.dim(), pf) * q.powf(pf / 2.0)),
            Family::Rademacher => {
                let c = self.coefficients(v);
                Ok(enumerate_signs(&c, |s| s.abs().powi(p as i32))?)
            }
            Family::StudentT { dof } => {
                let (_, c) = self.single_coordinate(v)?;
                Ok(c.abs().powf(pf) * student_abs_moment(dof, pf))
            }
        }
    }

    /// `E |<X,v>|^(p-1) sign(<X,v>) X`, equal to `grad E|<X,v>|^p / p`.
    pub fn abs_moment_gradient(&self, v: &[f64], p: u32) -> Result<Vec<f64>> {
        if p.is_multiple_of(2) {
            return self.moment_gradient(v, p);
        }
        self.check_dim(v)?;
        self.check_moment_exists(p as f64)?;
        let d = self.dim();
        let lam = self.spectrum.eigenvalues();
        let q = self.spectrum.quadratic_form(v);
        let pf = p as f64;
        let radial = |c: f64| -> Vec<f64> {
            let f = c * q.powf(pf / 2.0 - 1.0);
            lam.iter().zip(v).map(|(l, x)| f * l * x).collect()
        };
        match self.family {
            Family::Gaussian => Ok(radial(gaussian_abs_moment(pf))),
            Family::Sphere => Ok(radial(sphere_abs_constant(d, pf))),
            Family::Rademacher => {
                let c = self.coefficients(v);
                if d > MAX_ENUM_DIM {
                    return Err(Error::UnsupportedExactMoment(format!(
                        "rademacher odd absolute moment needs d <= {MAX_ENUM_DIM}, got {d}"
                    )));
                }
                let scale: Vec<f64> = lam.iter().map(|l| l.sqrt()).collect();
                let mut grad = vec![0.0; d];
                let total = 1u64 << d;
                for mask in 0..total {
                    let mut s = 0.0;
                    for (j, cj) in c.iter().enumerate() {
                        s += if mask >> j & 1 == 1 { *cj } else { -cj };
                    }
                    let w = s.abs().powi(p as i32 - 1) * s.signum();
                    for j in 0..d {
                        let e = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                        grad[j] += w * e * scale[j];
                    }
                }
                grad.iter_mut().for_each(|g| *g /= total as f64);
                Ok(grad)
            }
            Family::StudentT { dof } => {
                let (j, c) = self.single_coordinate(v)?;
                let mut grad = vec![0.0; d];
                grad[j] = lam[j].sqrt() * c.abs().powf(pf - 1.0) * c.signum() * student_abs_moment(dof, pf);
                Ok(grad)
            }
        }
    }

    /// `E |<X,v>|^q` for real `q >= 1`.
    pub fn abs_moment_real(&self, v: &[f64], q: f64) -> Result<f64> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("moment order {q} must be finite and >= 1")));
        }
        self.check_dim(v)?;
        self.check_moment_exists(q)?;
        let qv = self.spectrum.quadratic_form(v);
        match self.family {
            Family::Gaussian => Ok(gaussian_abs_moment(q) * qv.powf(q / 2.0)),
            Family::Sphere => Ok(sphere_abs_constant(self.dim(), q) * qv.powf(q / 2.0)),
            Family::Rademacher => enumerate_signs(&self.coefficients(v), |s| s.abs().powf(q)),
            Family::StudentT { dof } => {
                if qv == 0.0 {
                    return Ok(0.0);
                }
                let (_, c) = self.single_coordinate(v)?;
                Ok(c.abs().powf(q) * student_abs_moment(dof, q))
            }
        }
    }

    /// `c_j = sqrt(lambda_j) v_j`, so that `<X,v> = sum_j c_j xi_j`.
    fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        self.spectrum.eigenvalues().iter().zip(v).map(|(l, x)| l.sqrt() * x).collect()
    }

    /// `E xi^k` for `k = 0..=max` of one standardized coordinate.
    fn coordinate_moments(&self, max: usize) -> Vec<f64> {
        (0..=max)
            .map(|k| {
                if k % 2 == 1 {
                    return 0.0;
                }
                match self.family {
                    Family::Rademacher => 1.0,
                    Family::StudentT { dof } => student_even_moment(dof, k / 2),
                    Family::Gaussian => double_factorial(k.saturating_sub(1) as u32),
                    Family::Sphere => unreachable!("sphere coordinates are dependent"),
                }
            })
            .collect()
    }

    fn single_coordinate(&self, v: &[f64]) -> Result<(usize, f64)> {
        let nz: Vec<usize> = (0..v.len()).filter(|&j| v[j] != 0.0).collect();
        match nz.as_slice() {
            [j] => Ok((*j, self.spectrum.eigenvalues()[*j].sqrt() * v[*j])),
            _ => Err(Error::UnsupportedExactMoment(
                "odd absolute student_t moments are exact only along a coordinate axis".into(),
            )),
        }
    }

    /// `sup` norm of `<X,v>` in `psi_2` for any `v`.
    pub fn psi2_norm(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v)?;
        let q = self.spectrum.quadratic_form(v);
        if q == 0.0 {
            return Ok(0.0);
        }
        match self.family {
            Family::Gaussian => Ok(gaussian_psi2_constant() * q.sqrt()),
            Family::Rademacher => {
                let c = self.coefficients(v);
                let d = c.len();
                if d > MAX_ENUM_DIM {
                    return Err(Error::UnsupportedExactMoment(format!(
                        "rademacher psi2 norm needs d <= {MAX_ENUM_DIM}, got {d}"
                    )));
                }
                // Values of |S| over half the sign patterns; the other half mirrors them.
                let half = 1u64 << (d - 1);
                let values: Vec<f64> = (0..half)
                    .map(|mask| {
                        let mut s = c[d - 1];
                        for (j, cj) in c[..d - 1].iter().enumerate() {
                            s += if mask >> j & 1 == 1 { *cj } else { -cj };
                        }
                        s.abs()
                    })
                    .collect();
                let first = values.iter().sum::<f64>() / values.len() as f64;
                chaining::orlicz_norm(
                    |c: f64| values.iter().map(|s| (s * s / (c * c)).exp()).sum::<f64>() / values.len() as f64,
                    2.0,
                    first,
                )
            }
            Family::Sphere => {
                let d = self.dim();
                let scale2 = d as f64 * q;
                let first = (q).sqrt() * sphere_abs_constant(d, 1.0);
                chaining::orlicz_norm(|c: f64| sphere_exp_square(d, scale2 / (c * c)), 2.0, first)
            }
            Family::StudentT { .. } => Err(Error::NotSubGaussian(
                "student_t marginals have polynomial tails".into(),
            )),
        }
    }

    /// Draws `n` i.i.d. rows.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample size must be at least 1".into()));
        }
        let d = self.dim();
        let scale: Vec<f64> = self.spectrum.eigenvalues().iter().map(|l| l.sqrt()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * d);
        match self.family {
            Family::Gaussian => {
                for _ in 0..n {
                    for s in &scale {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        data.push(s * z);
                    }
                }
            }
            Family::Rademacher => {
                for _ in 0..n {
                    for s in &scale {
                        data.push(if rng.random::<bool>() { *s } else { -s });
                    }
                }
            }
            Family::Sphere => {
                let root_d = (d as f64).sqrt();
                let mut z = vec![0.0f64; d];
                for _ in 0..n {
                    let mut norm2: f64 = 0.0;
                    for zj in z.iter_mut() {
                        *zj = StandardNormal.sample(&mut rng);
                        norm2 += *zj * *zj;
                    }
                    let f = root_d / norm2.sqrt();
                    for (zj, s) in z.iter().zip(&scale) {
                        data.push(f * zj * s);
                    }
                }
            }
            Family::StudentT { dof } => {
                let t = StudentT::new(dof).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let calib = ((dof - 2.0) / dof).sqrt();
                for _ in 0..n {
                    for s in &scale {
                        data.push(s * calib * t.sample(&mut rng));
                    }
                }
            }
        }
        Ok(Sample {
            data,
            n,
            d,
            spec_digest: self.digest(),
            seed,
            generator_id: GENERATOR_ID.to_string(),
        })
    }
}

/// `N x d` block of draws with replay provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    d: usize,
    pub spec_digest: String,
    pub seed: u64,
    pub generator_id: String,
}

impl Sample {
    /// Wraps externally supplied rows (row-major) as a sample of `spec`.
    pub fn from_rows(spec: &DistributionSpec, rows: &[Vec<f64>]) -> Result<Self> {
        let d = spec.dim();
        if rows.is_empty() {
            return Err(Error::InvalidParameter("sample needs at least one row".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            data,
            n: rows.len(),
            d,
            spec_digest: spec.digest(),
            seed: 0,
            generator_id: "external".into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// First `n` rows; with sequential generation this is the sample drawn at size `n`.
    pub fn prefix(&self, n: usize) -> Sample {
        let n = n.min(self.n);
        Sample { data: self.data[..n * self.d].to_vec(), n, ..self.clone() }
    }
}

fn check_unit(v: &[f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("expected a unit vector, norm is {norm}")));
    }
    Ok(())
}

pub fn sample(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Sample> {
    spec.sample(n, seed)
}

/// `<Sigma v, v>` for unit `v`.
pub fn directional_variance(spec: &DistributionSpec, v: &[f64]) -> Result<f64> {
    spec.check_dim(v)?;
    check_unit(v)?;
    Ok(spec.spectrum().quadratic_form(v))
}

/// `m_p(v) = E <X,v>^p` for unit `v`.
pub fn population_moment(spec: &DistributionSpec, v: &[f64], p: u32) -> Result<f64> {
    if p < 1 {
        return Err(Error::InvalidParameter("moment order must be at least 1".into()));
    }
    spec.check_dim(v)?;
    check_unit(v)?;
    spec.moment(v, p)
}

/// `M_p(v) = E <X,v>^(p-1) X` for unit `v`.
pub fn population_moment_gradient(spec: &DistributionSpec, v: &[f64], p: u32) -> Result<Vec<f64>> {
    if p < 2 {
        return Err(Error::InvalidParameter("gradient order must be at least 2".into()));
    }
    spec.check_dim(v)?;
    check_unit(v)?;
    spec.moment_gradient(v, p)
}

/// `||<X,v>||_{psi_2}` for unit `v`.
pub fn psi2_directional(spec: &DistributionSpec, v: &[f64]) -> Result<f64> {
    spec.check_dim(v)?;
    check_unit(v)?;
    if !spec.is_sub_gaussian() {
        return Err(Error::NotSubGaussian("student_t marginals have polynomial tails".into()));
    }
    spec.psi2_norm(v)
}

pub(crate) fn double_factorial(k: u32) -> f64 {
    let mut acc = 1.0;
    let mut j = k as i64;
    while j > 1 {
        acc *= j as f64;
        j -= 2;
    }
    acc
}

/// `E|Z|^p = 2^(p/2) Gamma((p+1)/2) / sqrt(pi)` for standard Gaussian `Z`.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    (0.5 * p * std::f64::consts::LN_2 + ln_gamma((p + 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln()).exp()
}

/// `d^(p/2) E theta_1^p` for even `p`.
fn sphere_even_constant(d: usize, p: u32) -> f64 {
    let k = p / 2;
    let df = d as f64;
    let mut c = double_factorial(p - 1);
    for j in 1..=k {
        c *= df / (df + 2.0 * j as f64 - 2.0);
    }
    c
}

/// `d^(p/2) E|theta_1|^p = d^(p/2) Gamma(d/2) Gamma((p+1)/2) / (sqrt(pi) Gamma((d+p)/2))`.
fn sphere_abs_constant(d: usize, p: f64) -> f64 {
    let df = d as f64;
    (0.5 * p * df.ln() + ln_gamma(df / 2.0) + ln_gamma((p + 1.0) / 2.0)
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma((df + p) / 2.0))
    .exp()
}

/// `E exp(a theta_1^2)` by the moment series, `E theta_1^(2k) = (2k-1)!! / prod_{j<=k} (d + 2j - 2)`.
fn sphere_exp_square(d: usize, a: f64) -> f64 {
    if !a.is_finite() {
        return f64::INFINITY;
    }
    let df = d as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        term *= a * (2.0 * k + 1.0) / ((k + 1.0) * (df + 2.0 * k));
        sum += term;
        k += 1.0;
        if sum > 1e300 {
            return f64::INFINITY;
        }
        if k > a && term < 1e-17 * sum {
            return sum;
        }
    }
}

/// `E xi^(2k)` for the unit-variance rescaled Student-t.
fn student_even_moment(dof: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let kf = k as f64;
    (kf * (dof - 2.0).ln() + ln_gamma(kf + 0.5) + ln_gamma(dof / 2.0 - kf)
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma(dof / 2.0))
    .exp()
}

/// `E|xi|^p` for the unit-variance rescaled Student-t, `p < dof`.
fn student_abs_moment(dof: f64, p: f64) -> f64 {
    (0.5 * p * (dof - 2.0).ln() + ln_gamma((p + 1.0) / 2.0) + ln_gamma((dof - p) / 2.0)
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma(dof / 2.0))
    .exp()
}

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0; n + 1];
    for k in 1..n {
        row[k] = row[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    row
}

/// Adds one independent coordinate `c * xi` to a moment vector.
fn convolve(moments: &[f64], c: f64, coord: &[f64], binom: &[Vec<f64>]) -> Vec<f64> {
    let p = moments.len() - 1;
    let mut cpow = vec![1.0; p + 1];
    for i in 1..=p {
        cpow[i] = cpow[i - 1] * c;
    }
    (0..=p)
        .map(|k| (0..=k).map(|i| binom[k][i] * moments[k - i] * cpow[i] * coord[i]).sum())
        .collect()
}

fn unit_moments(p: usize) -> Vec<f64> {
    let mut m = vec![0.0; p + 1];
    m[0] = 1.0;
    m
}

/// Moments `E S^k`, `k = 0..=p`, of `S = sum_j c_j xi_j` for i.i.d. symmetric `xi_j`.
fn sum_moments(c: &[f64], coord: &[f64], p: usize) -> Vec<f64> {
    let binom: Vec<Vec<f64>> = (0..=p).map(binomial_row).collect();
    c.iter().fold(unit_moments(p), |m, cj| convolve(&m, *cj, coord, &binom))
}

/// `E[S^(p-1) sqrt(lambda_j) xi_j]` for every `j`, via prefix and suffix moment vectors.
fn leave_one_out_gradient(c: &[f64], coord: &[f64], p: usize, lam: &[f64]) -> Vec<f64> {
    let d = c.len();
    let binom: Vec<Vec<f64>> = (0..=p).map(binomial_row).collect();
    let mut prefix = Vec::with_capacity(d + 1);
    prefix.push(unit_moments(p));
    for j in 0..d {
        let next = convolve(&prefix[j], c[j], coord, &binom);
        prefix.push(next);
    }
    let mut suffix = vec![unit_moments(p); d + 1];
    for j in (0..d).rev() {
        suffix[j] = convolve(&suffix[j + 1], c[j], coord, &binom);
    }
    (0..d)
        .map(|j| {
            let rest: Vec<f64> = (0..=p)
                .map(|k| (0..=k).map(|i| binom[k][i] * prefix[j][i] * suffix[j + 1][k - i]).sum())
                .collect();
            let mut acc = 0.0;
            let mut cpow = 1.0;
            for i in 0..p {
                acc += binom[p - 1][i] * rest[p - 1 - i] * cpow * coord[i + 1];
                cpow *= c[j];
            }
            lam[j].sqrt() * acc
        })
        .collect()
}

/// Exact average of `f(sum_j +-c_j)` over all sign patterns.
fn enumerate_signs(c: &[f64], f: impl Fn(f64) -> f64) -> Result<f64> {
    let d = c.len();
    if d > MAX_ENUM_DIM {
        return Err(Error::UnsupportedExactMoment(format!(
            "sign enumeration needs d <= {MAX_ENUM_DIM}, got {d}"
        )));
    }
    let total = 1u64 << d;
    let mut acc = 0.0;
    for mask in 0..total {
        let mut s = 0.0;
        for (j, cj) in c.iter().enumerate() {
            s += if mask >> j & 1 == 1 { *cj } else { -cj };
        }
        acc += f(s);
    }
    Ok(acc / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covmodel::Spectrum;

    fn spec(family: Family, eig: &[f64]) -> DistributionSpec {
        DistributionSpec::new(family, Spectrum::from_eigenvalues(eig.to_vec()).unwrap()).unwrap()
    }

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    const FAMILIES: [Family; 4] =
        [Family::Gaussian, Family::Rademacher, Family::Sphere, Family::StudentT { dof: 9.0 }];

    #[test]
    fn sampling_is_deterministic() {
        let s = spec(Family::Gaussian, &[1.0, 1.0]);
        let a = s.sample(3, 17).unwrap();
        let b = s.sample(3, 17).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data(), s.sample(3, 18).unwrap().data());
        assert_eq!(a.generator_id, GENERATOR_ID);
        assert_eq!(a.spec_digest, s.digest());
    }

    #[test]
    fn rademacher_support() {
        let s = spec(Family::Rademacher, &[4.0]);
        let x = s.sample(1000, 3).unwrap();
        assert!(x.data().iter().all(|v| *v == 2.0 || *v == -2.0));
    }

    #[test]
    fn gaussian_second_moment_lln() {
        let s = spec(Family::Gaussian, &[1.0]);
        let x = s.sample(100_000, 5).unwrap();
        let m = x.data().iter().map(|v| v * v).sum::<f64>() / 1e5;
        assert!((m - 1.0).abs() < 0.05, "{m}");
    }

    #[test]
    fn prefix_property() {
        for fam in FAMILIES {
            let s = spec(fam, &[2.0, 1.0, 0.5]);
            let big = s.sample(20, 9).unwrap();
            let small = s.sample(7, 9).unwrap();
            assert_eq!(big.prefix(7).data(), small.data());
        }
    }

    #[test]
    fn directional_variance_examples() {
        let s = spec(Family::Gaussian, &[4.0, 1.0]);
        assert_eq!(directional_variance(&s, &[1.0, 0.0]).unwrap(), 4.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((directional_variance(&s, &[h, h]).unwrap() - 2.5).abs() < 1e-14);
        assert!(matches!(directional_variance(&s, &[1.0, 1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn directional_variance_matches_monte_carlo() {
        let v = unit(&[0.3, -1.0, 0.7]);
        for fam in FAMILIES {
            let s = spec(fam, &[3.0, 1.0, 0.25]);
            let x = s.sample(1_000_000, 21).unwrap();
            let proj: Vec<f64> = x.rows().map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
            let mean = proj.iter().sum::<f64>() / proj.len() as f64;
            let var = proj.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (proj.len() - 1) as f64;
            let exact = directional_variance(&s, &v).unwrap();
            assert!((var / exact - 1.0).abs() < 0.02, "{fam:?}: {var} vs {exact}");
        }
    }

    #[test]
    fn moment_examples() {
        let g = spec(Family::Gaussian, &[4.0]);
        assert_eq!(population_moment(&g, &[1.0], 2).unwrap(), 4.0);
        let g1 = spec(Family::Gaussian, &[1.0]);
        assert_eq!(population_moment(&g1, &[1.0], 4).unwrap(), 3.0);
        let v = unit(&[1.0, 2.0]);
        for fam in FAMILIES {
            assert_eq!(population_moment(&spec(fam, &[2.0, 1.0]), &v, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn second_moment_is_variance_for_all_families() {
        let v = unit(&[1.0, -2.0, 0.5]);
        for fam in FAMILIES {
            let s = spec(fam, &[3.0, 1.0, 0.2]);
            let m2 = population_moment(&s, &v, 2).unwrap();
            assert!((m2 - s.spectrum().quadratic_form(&v)).abs() < 1e-12, "{fam:?}");
        }
    }

    #[test]
    fn rademacher_moments_match_enumeration() {
        let s = spec(Family::Rademacher, &[3.0, 2.0, 1.0, 0.5, 0.1]);
        let v = unit(&[0.4, -0.1, 1.0, 0.3, -0.8]);
        let c = s.coefficients(&v);
        for p in [2u32, 4, 6, 8] {
            let brute = enumerate_signs(&c, |x| x.powi(p as i32)).unwrap();
            let fast = s.moment(&v, p).unwrap();
            assert!((brute - fast).abs() < 1e-12 * brute.abs().max(1.0), "p={p}: {brute} {fast}");
        }
    }

    #[test]
    fn student_moment_errors() {
        let s = spec(Family::StudentT { dof: 5.0 }, &[1.0, 1.0]);
        let v = unit(&[1.0, 1.0]);
        assert!(matches!(population_moment(&s, &v, 6), Err(Error::MomentDoesNotExist { .. })));
        assert!(matches!(s.abs_moment(&v, 3), Err(Error::UnsupportedExactMoment(_))));
        assert!(s.abs_moment(&[1.0, 0.0], 3).is_ok());
        assert!(matches!(psi2_directional(&s, &[1.0, 0.0]), Err(Error::NotSubGaussian(_))));
        assert!(DistributionSpec::new(Family::StudentT { dof: 2.0 }, s.spectrum().clone()).is_err());
    }

    #[test]
    fn student_fourth_moment_closed_form() {
        // Var-1 rescaled t_nu has kurtosis 3 + 6 / (nu - 4).
        let s = spec(Family::StudentT { dof: 9.0 }, &[1.0]);
        assert!((s.moment(&[1.0], 4).unwrap() - (3.0 + 6.0 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn sphere_moments() {
        // d = 1: X = +-sqrt(lambda), so E X^4 = lambda^2.
        let s1 = spec(Family::Sphere, &[2.0]);
        assert!((s1.moment(&[1.0], 4).unwrap() - 4.0).abs() < 1e-12);
        assert!((s1.abs_moment(&[1.0], 3).unwrap() - 2f64.powf(1.5)).abs() < 1e-12);
        // d = 3: theta_1 is uniform on [-1,1], so E theta_1^4 = 1/5 and E|theta_1|^3 = 1/4.
        let s3 = spec(Family::Sphere, &[1.0, 1.0, 1.0]);
        assert!((s3.moment(&[1.0, 0.0, 0.0], 4).unwrap() - 9.0 / 5.0).abs() < 1e-12);
        assert!((s3.abs_moment(&[1.0, 0.0, 0.0], 3).unwrap() - 3f64.powf(1.5) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn euler_identity() {
        let v = unit(&[0.2, -0.7, 0.4, 1.1]);
        for fam in FAMILIES {
            let s = spec(fam, &[2.0, 1.5, 0.5, 0.25]);
            for p in 2..=6u32 {
                if s.check_moment_exists(p as f64).is_err() {
                    continue;
                }
                let m = s.moment(&v, p).unwrap();
                let g = s.moment_gradient(&v, p).unwrap();
                let dot: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
                assert!((dot - m).abs() < 1e-11 * m.abs().max(1.0), "{fam:?} p={p}");
            }
        }
    }

    fn fd_gradient(f: impl Fn(&[f64]) -> f64, v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|j| {
                let h = 1e-5;
                let mut a = v.to_vec();
                let mut b = v.to_vec();
                a[j] += h;
                b[j] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let v = unit(&[0.6, -0.3, 0.9]);
        let lam = [2.0, 1.0, 0.3];
        for fam in FAMILIES {
            let s = spec(fam, &lam);
            for p in 2..=6u32 {
                if s.check_moment_exists(p as f64).is_err() {
                    continue;
                }
                let g = s.moment_gradient(&v, p).unwrap();
                let fd = fd_gradient(|x| s.moment(x, p).unwrap() / p as f64, &v);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{fam:?} p={p}: {a} {b}");
                }
            }
            if !matches!(fam, Family::StudentT { .. }) {
                for p in [3u32, 5] {
                    let g = s.abs_moment_gradient(&v, p).unwrap();
                    let fd = fd_gradient(|x| s.abs_moment(x, p).unwrap() / p as f64, &v);
                    for (a, b) in g.iter().zip(&fd) {
                        assert!((a - b).abs() < 1e-6 * b.abs().max(1.0), "{fam:?} abs p={p}: {a} {b}");
                    }
                }
            }
        }
        // Named example: Sigma = diag(2,1), v = e1, p = 4.
        let g = spec(Family::Gaussian, &[2.0, 1.0]);
        let grad = population_moment_gradient(&g, &[1.0, 0.0], 4).unwrap();
        let fd = fd_gradient(|x| g.moment(x, 4).unwrap() / 4.0, &[1.0, 0.0]);
        assert!((grad[0] - fd[0]).abs() < 1e-6 * fd[0]);
        assert!(grad[1].abs() < 1e-12 && fd[1].abs() < 1e-6);
    }

    #[test]
    fn gaussian_gradient_examples() {
        let g = spec(Family::Gaussian, &[3.0, 2.0]);
        let v = unit(&[1.0, 1.0]);
        let m2 = population_moment_gradient(&g, &v, 2).unwrap();
        assert!((m2[0] - 3.0 * v[0]).abs() < 1e-15 && (m2[1] - 2.0 * v[1]).abs() < 1e-15);
        assert_eq!(population_moment_gradient(&g, &v, 3).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn monte_carlo_moments_within_three_standard_errors() {
        let v = unit(&[1.0, 0.5, -0.25]);
        for fam in [Family::Gaussian, Family::Rademacher, Family::Sphere, Family::StudentT { dof: 12.0 }] {
            let s = spec(fam, &[1.0, 0.8, 0.3]);
            let x = s.sample(1_000_000, 77).unwrap();
            let proj: Vec<f64> = x.rows().map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
            for p in [2u32, 3, 4] {
                let vals: Vec<f64> = proj.iter().map(|y| y.powi(p as i32)).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let sd = (vals.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let exact = population_moment(&s, &v, p).unwrap();
                assert!((mean - exact).abs() <= 3.0 * sd / n.sqrt(), "{fam:?} p={p}: {mean} {exact}");
            }
        }
    }

    #[test]
    fn psi2_examples() {
        let g = spec(Family::Gaussian, &[1.0]);
        assert!((psi2_directional(&g, &[1.0]).unwrap() - 1.632993161855452).abs() < 1e-12);
        let g4 = spec(Family::Gaussian, &[4.0]);
        assert!((psi2_directional(&g4, &[1.0]).unwrap() - 2.0 * (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let r = spec(Family::Rademacher, &[1.0]);
        let got = psi2_directional(&r, &[1.0]).unwrap();
        assert!((got - 1.0 / 2f64.ln().sqrt()).abs() < 1e-9, "{got}");
        // d = 1 sphere is the same two-point law.
        let s = spec(Family::Sphere, &[1.0]);
        assert!((psi2_directional(&s, &[1.0]).unwrap() - got).abs() < 1e-9);
    }

    #[test]
    fn sphere_psi2_is_between_bounded_and_gaussian() {
        // Sphere marginals are bounded by sqrt(d) and converge to Gaussian as d grows.
        let s = spec(Family::Sphere, &[1.0; 50]);
        let mut e1 = vec![0.0; 50];
        e1[0] = 1.0;
        let k = psi2_directional(&s, &e1).unwrap();
        assert!(k < (8.0f64 / 3.0).sqrt() && k > 1.5, "{k}");
    }

    #[test]
    fn scale_equivariance() {
        let v = unit(&[0.5, 1.0]);
        for fam in [Family::Gaussian, Family::Rademacher, Family::Sphere] {
            let s = spec(fam, &[1.5, 0.5]);
            let t = 1.7f64;
            let st = DistributionSpec::new(fam, s.spectrum().scaled(t * t).unwrap()).unwrap();
            for p in [2u32, 4] {
                let a = s.moment(&v, p).unwrap() * t.powi(p as i32);
                let b = st.moment(&v, p).unwrap();
                assert!((a - b).abs() < 1e-12 * b);
            }
            let a = s.psi2_norm(&v).unwrap() * t;
            let b = st.psi2_norm(&v).unwrap();
            assert!((a - b).abs() < 1e-9 * b, "{fam:?}");
        }
    }

    #[test]
    fn spec_json() {
        let s = spec(Family::StudentT { dof: 5.0 }, &[1.0, 2.0]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"family":"student_t","spectrum":[2.0,1.0],"dof":5.0}"#);
        let back: DistributionSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let g: DistributionSpec = serde_json::from_str(r#"{"family":"gaussian","spectrum":[1.0]}"#).unwrap();
        assert_eq!(g.family(), Family::Gaussian);
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"family":"cauchy","spectrum":[1.0]}"#).is_err());
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"family":"student_t","spectrum":[1.0],"dof":1.5}"#).is_err());
    }

    #[test]
    fn sample_variance_of_every_coordinate_is_calibrated() {
        for fam in FAMILIES {
            let s = spec(fam, &[4.0, 1.0]);
            let x = s.sample(200_000, 8).unwrap();
            for j in 0..2 {
                let m = x.rows().map(|r| r[j] * r[j]).sum::<f64>() / 200_000.0;
                let l = s.spectrum().eigenvalues()[j];
                assert!((m / l - 1.0).abs() < 0.03, "{fam:?} {j}: {m}");
            }
        }
    }
}

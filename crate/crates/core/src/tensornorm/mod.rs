//! The deviation `sup_{|v|=1} |N^-1 sum_i g(<X_i,v>) - E g(<X,v>)|` with
//! `g(t) = t^p` (signed) or `|t|^p` (absolute).
//!
//! For symmetric tensors the operator norm of `N^-1 sum X_i^{(x)p} - E X^{(x)p}`
//! is attained on the diagonal `v_1 = ... = v_p`, so the solver works on the
//! single-vector form; the multilinear form only appears as a low-dimensional
//! oracle in [`oracles`].

pub(crate) mod ascent;
pub mod oracles;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use ascent::AscentParams;
pub use oracles::{exact_oracle_p2, grid_oracle, multilinear_grid_gap_bound, multilinear_grid_sup};

use crate::error::{Error, Result};
use crate::linalg::{canonicalize, dot, normalize, second_moment_matrix};
use crate::sampling::{DistributionSpec, Sample};
use ascent::{ascend, Signed, SphereObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `<X_i, v>^p`
    Signed,
    /// `|<X_i, v>|^p`
    Absolute,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Signed => "signed",
            Variant::Absolute => "absolute",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DeviationProblem {
    sample: Sample,
    spec: DistributionSpec,
    p: u32,
    variant: Variant,
}

impl DeviationProblem {
    pub fn new(sample: Sample, spec: DistributionSpec, p: u32, variant: Variant) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidParameter(format!("tensor order must be >= 2, got {p}")));
        }
        if sample.spec_digest != spec.digest() {
            return Err(Error::InvalidArgument("sample was not drawn from this spec".into()));
        }
        if sample.dim() != spec.dim() {
            return Err(Error::DimensionMismatch { expected: spec.dim(), got: sample.dim() });
        }
        spec.check_moment_exists(p as f64)?;
        check_population_supported(&spec, p, variant)?;
        Ok(Self { sample, spec, p, variant })
    }

    pub fn sample(&self) -> &Sample {
        &self.sample
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dim(&self) -> usize {
        self.sample.dim()
    }

    /// Whether `F(-v) = F(v)`; otherwise `F(-v) = -F(v)`.
    pub fn is_even(&self) -> bool {
        self.variant == Variant::Absolute || self.p.is_multiple_of(2)
    }

    fn population(&self, v: &[f64]) -> Result<f64> {
        match self.variant {
            Variant::Signed => self.spec.moment(v, self.p),
            Variant::Absolute => self.spec.abs_moment(v, self.p),
        }
    }

    fn population_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self.variant {
            Variant::Signed => self.spec.moment_gradient(v, self.p),
            Variant::Absolute => self.spec.abs_moment_gradient(v, self.p),
        }
    }

    #[inline]
    fn power(&self, t: f64) -> f64 {
        match self.variant {
            Variant::Signed => t.powi(self.p as i32),
            Variant::Absolute => t.abs().powi(self.p as i32),
        }
    }

    /// `g'(t) / p`; zero at `t = 0` for the absolute variant.
    #[inline]
    fn power_derivative(&self, t: f64) -> f64 {
        let m = t.powi(self.p as i32 - 1);
        match self.variant {
            Variant::Signed => m,
            Variant::Absolute if self.p % 2 == 1 => m * t.signum() * (t != 0.0) as u8 as f64,
            Variant::Absolute => m,
        }
    }

    fn empirical(&self, v: &[f64]) -> f64 {
        self.sample.rows().map(|x| self.power(dot(x, v))).sum::<f64>() / self.sample.n() as f64
    }

    /// The objective extended homogeneously to all of `R^d`.
    pub fn homogeneous_value(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(self.empirical(v) - self.population(v)?)
    }

    /// Euclidean gradient of [`Self::homogeneous_value`].
    pub fn homogeneous_gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.homogeneous_value_and_gradient(v)?.1)
    }

    fn homogeneous_value_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        let d = self.dim();
        let n = self.sample.n() as f64;
        let mut emp = 0.0;
        let mut grad = vec![0.0; d];
        for x in self.sample.rows() {
            let t = dot(x, v);
            emp += self.power(t);
            let w = self.power_derivative(t);
            if w != 0.0 {
                for (g, xj) in grad.iter_mut().zip(x) {
                    *g += w * xj;
                }
            }
        }
        let pop = self.population(v)?;
        let pop_grad = self.population_gradient(v)?;
        let p = self.p as f64;
        for (g, m) in grad.iter_mut().zip(&pop_grad) {
            *g = p * (*g / n - m);
        }
        Ok((emp / n - pop, grad))
    }
}

impl SphereObjective for DeviationProblem {
    fn value(&self, v: &[f64]) -> f64 {
        self.homogeneous_value(v).expect("validated problem")
    }

    fn value_and_gradient(&self, v: &[f64]) -> (f64, Vec<f64>) {
        self.homogeneous_value_and_gradient(v).expect("validated problem")
    }
}

/// Fails when `E g(<X,v>)` has no exact evaluation for some direction, probing a
/// coordinate axis and the diagonal. The solver cannot recover from such errors
/// mid-ascent, so problems and sweep plans reject them up front.
pub fn check_population_supported(spec: &DistributionSpec, p: u32, variant: Variant) -> Result<()> {
    let d = spec.dim();
    let mut axis = vec![0.0; d];
    axis[0] = 1.0;
    let diag = vec![(d as f64).sqrt().recip(); d];
    for v in [axis, diag] {
        match variant {
            Variant::Signed => {
                spec.moment(&v, p)?;
                spec.moment_gradient(&v, p)?;
            }
            Variant::Absolute => {
                spec.abs_moment(&v, p)?;
                spec.abs_moment_gradient(&v, p)?;
            }
        }
    }
    Ok(())
}

fn check_unit(v: &[f64]) -> Result<()> {
    let n = dot(v, v).sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("expected a unit vector, norm is {n}")));
    }
    Ok(())
}

/// `N^-1 sum_i g(<X_i,v>) - E g(<X,v>)` at a unit vector.
pub fn deviation_objective(prob: &DeviationProblem, v: &[f64]) -> Result<f64> {
    if v.len() != prob.dim() {
        return Err(Error::DimensionMismatch { expected: prob.dim(), got: v.len() });
    }
    check_unit(v)?;
    prob.homogeneous_value(v)
}

/// Euclidean gradient of the homogeneous extension at a unit vector.
pub fn deviation_gradient(prob: &DeviationProblem, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != prob.dim() {
        return Err(Error::DimensionMismatch { expected: prob.dim(), got: v.len() });
    }
    check_unit(v)?;
    prob.homogeneous_gradient(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub restarts: usize,
    #[serde(flatten)]
    pub ascent: AscentParams,
    /// Grid size for the low-dimensional oracles; `None` picks the per-dimension default.
    pub grid_resolution: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { restarts: 64, ascent: AscentParams::default(), grid_resolution: None }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.ascent;
        let ok = self.restarts > 0
            && a.max_iterations > 0
            && a.convergence_tol > 0.0
            && a.initial_step > 0.0
            && a.sufficient_increase > 0.0
            && a.shrink > 0.0
            && a.shrink < 1.0
            && self.grid_resolution.is_none_or(|r| r > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid solver config {self:?}")))
        }
    }

    pub fn resolution_for(&self, d: usize) -> usize {
        self.grid_resolution.unwrap_or(if d == 3 { 200_000 } else { 100_000 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedProvenance {
    Random,
    DataDirection,
    SampleCovEigvec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximizerResult {
    pub value: f64,
    /// Canonical representative: first nonzero coordinate positive.
    pub argmax: Vec<f64>,
    /// `+1` if `+objective` attains the value at `argmax`, `-1` otherwise.
    pub sign_branch: i8,
    pub iterations_used: usize,
    pub restarts_used: usize,
    pub seed_provenance: SeedProvenance,
    pub converged: bool,
    /// Fraction of restarts whose final value lies within `1e-6` (relative) of the best.
    pub agree_fraction: f64,
    /// Fraction of (restart, branch) runs that met the convergence test.
    pub converged_fraction: f64,
}

/// Starting points: a third normalized data rows (largest norms first), a third
/// eigenvectors of the sample second-moment matrix and of `Sigma_hat - Sigma`,
/// the rest uniform on the sphere.
fn starting_points(prob: &DeviationProblem, restarts: usize, seed: u64) -> Vec<(Vec<f64>, SeedProvenance)> {
    let d = prob.dim();
    let sample = prob.sample();
    let n_data = restarts / 3;
    let n_eig = restarts / 3;
    let mut starts = Vec::with_capacity(restarts);

    let mut order: Vec<(usize, f64)> = sample.rows().map(|x| dot(x, x)).enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, norm2) in order.into_iter().take(n_data) {
        if norm2 > 0.0 {
            let mut v = sample.row(i).to_vec();
            normalize(&mut v);
            starts.push((v, SeedProvenance::DataDirection));
        }
    }

    // Dense Jacobi is cubic in d; above this size the eigen seeds are replaced by random ones.
    if n_eig > 0 && d <= 512 {
        let second = second_moment_matrix(sample.data(), sample.n(), d);
        let mut centered = second.clone();
        for (j, l) in prob.spec().spectrum().eigenvalues().iter().enumerate() {
            centered.a[j * d + j] -= l;
        }
        let mut top = ranked_eigvecs(&second, |x| x);
        let mut dev = ranked_eigvecs(&centered, f64::abs);
        top.reverse();
        dev.reverse();
        let mut taken = 0;
        while taken < n_eig && (!top.is_empty() || !dev.is_empty()) {
            for list in [&mut dev, &mut top] {
                if taken < n_eig {
                    if let Some(v) = list.pop() {
                        starts.push((v, SeedProvenance::SampleCovEigvec));
                        taken += 1;
                    }
                }
            }
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    while starts.len() < restarts {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        if normalize(&mut v) > 0.0 {
            starts.push((v, SeedProvenance::Random));
        }
    }
    starts
}

fn ranked_eigvecs(m: &crate::linalg::SymMatrix, key: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    let (vals, vecs) = m.jacobi_eigen();
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| key(vals[b]).total_cmp(&key(vals[a])).then(a.cmp(&b)));
    idx.into_iter().map(|i| vecs[i].clone()).collect()
}

/// Multi-start projected gradient ascent on `+F` and `-F`.
pub fn maximize_deviation(prob: &DeviationProblem, cfg: &SolverConfig, seed: u64) -> Result<MaximizerResult> {
    cfg.validate()?;
    let starts = starting_points(prob, cfg.restarts, seed);
    let mut best: Option<(f64, Vec<f64>, i8, SeedProvenance, bool)> = None;
    let mut per_restart = Vec::with_capacity(starts.len());
    let mut iterations = 0;
    let mut converged_runs = 0;
    let mut runs = 0;
    for (start, provenance) in &starts {
        let mut restart_best = f64::NEG_INFINITY;
        for sign in [1i8, -1] {
            let branch = Signed { inner: prob, sign: sign as f64 };
            let out = ascend(&branch, start, &cfg.ascent);
            iterations += out.iterations;
            runs += 1;
            converged_runs += out.converged as usize;
            restart_best = restart_best.max(out.value);
            let mut argmax = out.point;
            let mut branch_sign = sign;
            if !prob.is_even() {
                let before = argmax.clone();
                canonicalize(&mut argmax);
                if before != argmax {
                    branch_sign = -branch_sign;
                }
            } else {
                canonicalize(&mut argmax);
            }
            let better = match &best {
                None => true,
                Some((bv, bx, ..)) => {
                    out.value > *bv || (out.value == *bv && lexicographic_less(&argmax, bx))
                }
            };
            if better {
                best = Some((out.value, argmax, branch_sign, *provenance, out.converged));
            }
        }
        per_restart.push(restart_best);
    }
    let (_, argmax, sign_branch, seed_provenance, converged) = best.expect("at least one restart");
    // Re-evaluate so that `value` is exactly the objective at the reported point.
    let value = (sign_branch as f64) * prob.homogeneous_value(&argmax)?;
    let tol = 1e-6 * value.abs().max(1.0);
    let agree = per_restart.iter().filter(|v| (value - **v).abs() <= tol).count();
    Ok(MaximizerResult {
        value: value.max(0.0),
        argmax,
        sign_branch,
        iterations_used: iterations,
        restarts_used: starts.len(),
        seed_provenance,
        converged,
        agree_fraction: agree as f64 / per_restart.len() as f64,
        converged_fraction: converged_runs as f64 / runs as f64,
    })
}

fn lexicographic_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

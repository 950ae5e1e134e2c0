//! Finite classes of linear functionals `f_v = <., v>` over a base law.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{build_admissible_sequence, graded_norm, FiniteMetricSpace};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::sampling::{DistributionSpec, Family};

/// Distances `||<X, u - v>||_{psi_2}` between index vectors.
pub fn psi2_metric(vectors: &[Vec<f64>], spec: &DistributionSpec) -> Result<FiniteMetricSpace> {
    if vectors.is_empty() {
        return Err(Error::InvalidParameter("function class is empty".into()));
    }
    if !spec.is_sub_gaussian() {
        return Err(Error::NotSubGaussian(format!("{} has no psi2 metric", spec.family().name())));
    }
    let space = FiniteMetricSpace::from_points(vectors, |u, v| {
        let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        spec.psi2_norm(&diff)
    })?;
    space.with_labels(vectors.to_vec())
}

#[derive(Debug, Clone)]
pub struct FiniteFunctionClass {
    index_vectors: Vec<Vec<f64>>,
    base_spec: DistributionSpec,
    psi2_space: FiniteMetricSpace,
    d_psi2: f64,
    symmetric: bool,
}

impl FiniteFunctionClass {
    pub fn new(index_vectors: Vec<Vec<f64>>, base_spec: DistributionSpec) -> Result<Self> {
        if let Some(bad) = index_vectors.iter().find(|v| v.len() != base_spec.dim()) {
            return Err(Error::DimensionMismatch { expected: base_spec.dim(), got: bad.len() });
        }
        let psi2_space = psi2_metric(&index_vectors, &base_spec)?;
        let d_psi2 = index_vectors
            .iter()
            .map(|v| base_spec.psi2_norm(v))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let symmetric = index_vectors.iter().all(|v| {
            index_vectors.iter().any(|w| v.iter().zip(w).all(|(a, b)| (a + b).abs() <= 1e-12))
        });
        Ok(Self { index_vectors, base_spec, psi2_space, d_psi2, symmetric })
    }

    /// `V ∪ -V`.
    pub fn symmetrized(index_vectors: Vec<Vec<f64>>, base_spec: DistributionSpec) -> Result<Self> {
        let mut all = index_vectors.clone();
        all.extend(index_vectors.into_iter().map(|v| v.into_iter().map(|x| -x).collect::<Vec<_>>()));
        Self::new(all, base_spec)
    }

    pub fn index_vectors(&self) -> &[Vec<f64>] {
        &self.index_vectors
    }

    pub fn base_spec(&self) -> &DistributionSpec {
        &self.base_spec
    }

    pub fn psi2_space(&self) -> &FiniteMetricSpace {
        &self.psi2_space
    }

    /// `sup_{v in V} ||<X, v>||_{psi_2}`.
    pub fn d_psi2(&self) -> f64 {
        self.d_psi2
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn len(&self) -> usize {
        self.index_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_vectors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Monte Carlo `E max_{v in V} <G, v>` with `G ~ N(0, Sigma)`.
pub fn gaussian_width(class: &FiniteFunctionClass, trials: usize, seed: u64) -> Result<WidthEstimate> {
    if class.base_spec().family() != Family::Gaussian {
        return Err(Error::InvalidParameter("gaussian width needs a Gaussian base law".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidParameter("gaussian width needs at least 2 trials".into()));
    }
    let scale: Vec<f64> = class.base_spec().spectrum().eigenvalues().iter().map(|l| l.sqrt()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut g = vec![0.0; scale.len()];
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..trials {
        for (gj, s) in g.iter_mut().zip(&scale) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *gj = s * z;
        }
        let m = class.index_vectors().iter().map(|v| dot(&g, v)).fold(f64::NEG_INFINITY, f64::max);
        sum += m;
        sum2 += m * m;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = ((sum2 - t * mean * mean) / (t - 1.0)).max(0.0);
    Ok(WidthEstimate { mean, std_error: (var / t).sqrt(), trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaValues {
    pub lambda: f64,
    pub lambda_tilde: f64,
}

/// `Lambda_{s0,u}` and `Lambda~_{s0,u}` evaluated on the greedy admissible
/// sequence of the `psi_2` space, with `pi_s f` the nearest point of `F_s` in
/// the graded `(u^2 2^s)` norm. Upper bounds on the infima.
pub fn lambda_functional(class: &FiniteFunctionClass, s0: usize, u: f64) -> Result<LambdaValues> {
    if !(u >= 1.0 && u.is_finite()) {
        return Err(Error::InvalidParameter(format!("u = {u} must be >= 1")));
    }
    let seq = build_admissible_sequence(class.psi2_space());
    let spec = class.base_spec();
    let vectors = class.index_vectors();
    let order = |s: usize| u * u * 2f64.powi(s as i32);
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    // Returns (pi_s f index, ||f - pi_s f||_(q)).
    let project = |f: usize, s: usize| -> Result<(usize, f64)> {
        let q = order(s);
        let mut best = (f, f64::INFINITY);
        for &g in seq.level(s) {
            let dist = if g == f { 0.0 } else { graded_norm(spec, &diff(&vectors[f], &vectors[g]), q)? };
            if dist < best.1 {
                best = (g, dist);
            }
        }
        Ok(best)
    };
    let mut lambda = 0.0f64;
    let mut head = 0.0f64;
    for f in 0..vectors.len() {
        let mut chain = 0.0;
        for s in s0..seq.final_level {
            chain += 2f64.powf(s as f64 / 2.0) * project(f, s)?.1;
        }
        lambda = lambda.max(chain);
        let (pi, _) = project(f, s0)?;
        head = head.max(graded_norm(spec, &vectors[pi], order(s0))?);
    }
    Ok(LambdaValues { lambda, lambda_tilde: lambda + 2f64.powf(s0 as f64 / 2.0) * head })
}

#[cfg(test)]
mod tests {
    use super::super::{gamma2, GammaMethod};
    use super::*;
    use crate::covmodel::Spectrum;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn identity(d: usize) -> DistributionSpec {
        DistributionSpec::gaussian(Spectrum::from_eigenvalues(vec![1.0; d]).unwrap())
    }

    #[test]
    fn psi2_metric_examples() {
        let spec = identity(2);
        let space = psi2_metric(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]], &spec).unwrap();
        assert!((space.distance(0, 1) - (8.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert_eq!(space.distance(1, 2), 0.0);
        let t = DistributionSpec::new(Family::StudentT { dof: 5.0 }, Spectrum::from_eigenvalues(vec![1.0]).unwrap()).unwrap();
        assert!(matches!(psi2_metric(&[vec![1.0]], &t), Err(Error::NotSubGaussian(_))));
    }

    #[test]
    fn rademacher_metric_is_a_metric() {
        let spec = DistributionSpec::new(Family::Rademacher, Spectrum::from_eigenvalues(vec![1.0, 0.5, 0.2]).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        // Construction validates the triangle inequality.
        let space = psi2_metric(&pts, &spec).unwrap();
        assert_eq!(space.len(), 8);
    }

    #[test]
    fn width_closed_forms() {
        let spec = identity(3);
        let zero = FiniteFunctionClass::new(vec![vec![0.0; 3]], spec.clone()).unwrap();
        assert_eq!(gaussian_width(&zero, 100, 1).unwrap().mean, 0.0);
        let t = vec![1.0, -2.0, 0.5];
        let norm = dot(&t, &t).sqrt();
        let pair = FiniteFunctionClass::new(vec![vec![0.0; 3], t.clone()], spec.clone()).unwrap();
        let w = gaussian_width(&pair, 100_000, 2).unwrap();
        let expect = norm / (2.0 * std::f64::consts::PI).sqrt();
        assert!((w.mean - expect).abs() < 3.0 * w.std_error, "{w:?} vs {expect}");
        let sym = FiniteFunctionClass::symmetrized(vec![t], spec).unwrap();
        assert!(sym.is_symmetric());
        let w = gaussian_width(&sym, 100_000, 3).unwrap();
        let expect = norm * (2.0 / std::f64::consts::PI).sqrt();
        assert!((w.mean - expect).abs() < 3.0 * w.std_error, "{w:?} vs {expect}");
    }

    #[test]
    fn lambda_singleton() {
        let spec = identity(2);
        let f = vec![0.6, 0.8];
        let class = FiniteFunctionClass::new(vec![f.clone()], spec.clone()).unwrap();
        for s0 in 0..3 {
            let l = lambda_functional(&class, s0, 1.5).unwrap();
            assert_eq!(l.lambda, 0.0);
            let expect = 2f64.powf(s0 as f64 / 2.0) * graded_norm(&spec, &f, 2.25 * 2f64.powi(s0 as i32)).unwrap();
            assert!((l.lambda_tilde - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_vanishes_past_the_final_level() {
        let spec = identity(2);
        let class = FiniteFunctionClass::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], spec).unwrap();
        // Three points: F_1 (capacity 4) is everything.
        assert_eq!(lambda_functional(&class, 1, 1.0).unwrap().lambda, 0.0);
        assert_eq!(lambda_functional(&class, 5, 1.0).unwrap().lambda, 0.0);
        assert!(lambda_functional(&class, 0, 1.0).unwrap().lambda > 0.0);
        assert!(lambda_functional(&class, 0, 0.5).is_err());
    }

    #[test]
    fn lambda_below_gamma2_on_random_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let spec = identity(4);
            let vs: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
            let class = FiniteFunctionClass::new(vs, spec).unwrap();
            let g = gamma2(class.psi2_space(), GammaMethod::GreedyFfp).unwrap().value;
            let l = lambda_functional(&class, 0, 2.0).unwrap();
            assert!(l.lambda.is_finite() && l.lambda <= g, "{} vs {g}", l.lambda);
        }
    }
}

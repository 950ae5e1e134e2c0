//! Stand-alone Monte Carlo experiments: empirical `l_m` norms, the Rademacher
//! tail inequality and maximal row norms.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::error::{Error, Result};
use crate::linalg::{dot, normalize};
use crate::sampling::{DistributionSpec, Sample};
use crate::tensornorm::ascent::{ascend, SphereObjective};
use crate::tensornorm::SolverConfig;

/// Index set of linear functionals `x -> <x, v>`.
#[derive(Debug, Clone, PartialEq)]
pub enum LmIndex {
    Finite(Vec<Vec<f64>>),
    Sphere,
}

struct LmObjective<'a> {
    sample: &'a Sample,
    m: f64,
}

impl SphereObjective for LmObjective<'_> {
    fn value(&self, v: &[f64]) -> f64 {
        self.sample.rows().map(|x| dot(x, v).abs().powf(self.m)).sum()
    }

    fn value_and_gradient(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let mut f = 0.0;
        let mut g = vec![0.0; v.len()];
        for x in self.sample.rows() {
            let t = dot(x, v);
            let a = t.abs();
            f += a.powf(self.m);
            if a > 0.0 {
                let w = self.m * a.powf(self.m - 1.0) * t.signum();
                for (gj, xj) in g.iter_mut().zip(x) {
                    *gj += w * xj;
                }
            }
        }
        (f, g)
    }
}

/// `sup_v (sum_i |<X_i, v>|^m)^(1/m)` over a finite set or the unit sphere.
pub fn lm_norm_empirical(sample: &Sample, index: &LmIndex, m: f64) -> Result<f64> {
    lm_norm_empirical_with(sample, index, m, &SolverConfig::default(), 0)
}

pub fn lm_norm_empirical_with(
    sample: &Sample,
    index: &LmIndex,
    m: f64,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<f64> {
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("m = {m} must be >= 1")));
    }
    let f = LmObjective { sample, m };
    match index {
        LmIndex::Finite(vs) => {
            if vs.is_empty() {
                return Err(Error::InvalidArgument("empty index set".into()));
            }
            let mut best: f64 = 0.0;
            for v in vs {
                if v.len() != sample.dim() {
                    return Err(Error::DimensionMismatch { expected: sample.dim(), got: v.len() });
                }
                best = best.max(f.value(v));
            }
            Ok(best.powf(1.0 / m))
        }
        LmIndex::Sphere => {
            cfg.validate()?;
            let d = sample.dim();
            let mut starts: Vec<Vec<f64>> = Vec::with_capacity(cfg.restarts);
            let mut order: Vec<(usize, f64)> = sample.rows().map(|x| dot(x, x)).enumerate().collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (i, n2) in order.into_iter().take(cfg.restarts.div_ceil(2)) {
                if n2 > 0.0 {
                    let mut v = sample.row(i).to_vec();
                    normalize(&mut v);
                    starts.push(v);
                }
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            while starts.len() < cfg.restarts {
                let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                if normalize(&mut v) > 0.0 {
                    starts.push(v);
                }
            }
            let best = starts
                .iter()
                .map(|s| ascend(&f, s, &cfg.ascent).value)
                .fold(0.0f64, f64::max);
            Ok(best.powf(1.0 / m))
        }
    }
}

/// Largest singular value of the `N x d` data matrix.
pub fn top_singular_value(sample: &Sample) -> f64 {
    let a = DMatrix::from_row_slice(sample.n(), sample.dim(), sample.data());
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingCheck {
    pub empirical_prob: f64,
    pub analytic_bound: f64,
    pub t: f64,
    pub threshold: f64,
}

/// Monte Carlo frequency of `|sum eps_i z_i| > sum_{i<=k} |z*_i| + t (sum_{i>k} z*_i^2)^(1/2)`
/// for uniform signs, with the bound `2 exp(-t^2/2)`; `t` defaults to `sqrt(k)`.
pub fn rademacher_tail_check(z: &[f64], k: usize, t: Option<f64>, trials: usize, seed: u64) -> Result<HoeffdingCheck> {
    let n = z.len();
    if n == 0 || k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let t = t.unwrap_or((k as f64).sqrt());
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    // Decreasing rearrangement; sums below run in this order so that k = N is exact.
    let mut sorted: Vec<f64> = z.iter().map(|x| x.abs()).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let head: f64 = sorted[..k].iter().sum();
    let tail: f64 = sorted[k..].iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = head + t * tail;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..trials {
        let mut s = 0.0;
        for chunk in sorted.chunks(64) {
            let bits: u64 = rng.random();
            for (j, x) in chunk.iter().enumerate() {
                if bits >> j & 1 == 1 {
                    s += x;
                } else {
                    s -= x;
                }
            }
        }
        violations += (s.abs() > threshold) as usize;
    }
    Ok(HoeffdingCheck {
        empirical_prob: violations as f64 / trials as f64,
        analytic_bound: 2.0 * (-t * t / 2.0).exp(),
        t,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Monte Carlo `E max_i |X_i|^p` over `trials` independent blocks of `n` rows.
///
/// Block `j` is drawn from a seed that does not depend on `n`, so estimates at
/// different `n` are coupled through nested samples.
pub fn max_norm_moment(spec: &DistributionSpec, n: usize, p: f64, trials: usize, seed: u64) -> Result<MomentEstimate> {
    if trials < 2 {
        return Err(Error::InvalidParameter("max_norm_moment needs at least 2 trials".into()));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p = {p} must be positive")));
    }
    spec.check_moment_exists(p)?;
    let mut values = Vec::with_capacity(trials);
    for j in 0..trials {
        let x = spec.sample(n, derive_seed(seed, 0, j as u64))?;
        values.push(block_max_norm_pow(&x, p));
    }
    let mean = values.iter().sum::<f64>() / trials as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(MomentEstimate { mean, std_error: (var / trials as f64).sqrt(), trials })
}

pub(crate) fn block_max_norm_pow(x: &Sample, p: f64) -> f64 {
    x.rows().map(|r| dot(r, r)).fold(0.0, f64::max).powf(p / 2.0)
}

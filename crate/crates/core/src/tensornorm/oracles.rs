//! Independent certificates for the sphere solver: the dense eigensolver at
//! `p = 2` and angular grids in two and three dimensions.

use nalgebra::{DMatrix, SymmetricEigen};

use super::ascent::{ascend, AscentParams, Signed};
use super::DeviationProblem;
use crate::error::{Error, Result};
use crate::sampling::{DistributionSpec, Sample};

/// Largest dimension handled by the dense `p = 2` oracle.
pub const MAX_DENSE_DIM: usize = 2048;

/// `|| N^-1 sum_i X_i X_i^T - Sigma ||` via a dense symmetric eigensolver.
pub fn exact_oracle_p2(sample: &Sample, spec: &DistributionSpec) -> Result<f64> {
    let d = sample.dim();
    if d != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: d });
    }
    if d > MAX_DENSE_DIM {
        return Err(Error::UnsupportedSize(format!("dense p=2 oracle needs d <= {MAX_DENSE_DIM}, got {d}")));
    }
    let x = DMatrix::from_row_slice(sample.n(), d, sample.data());
    let mut a = x.transpose() * &x / sample.n() as f64;
    for (j, l) in spec.spectrum().eigenvalues().iter().enumerate() {
        a[(j, j)] -= l;
    }
    let eig = SymmetricEigen::new(a);
    Ok(eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` on `[lo, hi]` by golden-section search down to `tol`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Certified `sup |F|` for `d` in `{2, 3}`.
///
/// `d = 2`: half-circle grid `theta_k = pi k / resolution`, then golden-section
/// refinement of the best cell. `d = 3`: Fibonacci sphere of `resolution`
/// points with projected-gradient polish from the ten best.
pub fn grid_oracle(prob: &DeviationProblem, resolution: usize) -> Result<f64> {
    if resolution == 0 {
        return Err(Error::InvalidParameter("grid resolution must be positive".into()));
    }
    let abs_at = |v: &[f64]| prob.homogeneous_value(v).map(f64::abs);
    match prob.dim() {
        2 => {
            let step = std::f64::consts::PI / resolution as f64;
            let mut best = (0usize, f64::NEG_INFINITY);
            for k in 0..resolution {
                let t = step * k as f64;
                let val = abs_at(&[t.cos(), t.sin()])?;
                if val > best.1 {
                    best = (k, val);
                }
            }
            let center = step * best.0 as f64;
            let f = |t: f64| prob.homogeneous_value(&[t.cos(), t.sin()]).map(f64::abs).unwrap_or(f64::NAN);
            let (_, refined) = golden_max(f, center - step, center + step, 1e-10);
            Ok(best.1.max(refined))
        }
        3 => {
            let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let mut scored: Vec<(f64, [f64; 3])> = Vec::with_capacity(resolution);
            for k in 0..resolution {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / resolution as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden_angle * k as f64;
                let v = [r * phi.cos(), r * phi.sin(), z];
                scored.push((abs_at(&v)?, v));
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut best = scored[0].0;
            let params = AscentParams::default();
            for (_, v) in scored.iter().take(10) {
                let sign = prob.homogeneous_value(v)?.signum();
                let sign = if sign == 0.0 { 1.0 } else { sign };
                let out = ascend(&Signed { inner: prob, sign }, v, &params);
                best = best.max(out.value.abs());
            }
            Ok(best)
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// Largest resolution accepted by [`multilinear_grid_sup`].
pub const MAX_MULTILINEAR_RESOLUTION: usize = 400;

/// `sup |N^-1 sum_i prod_k <X_i,v_k> - E prod_k <X,v_k>|` over a product of
/// half-circle grids, `d = 2`, `p` in `{2, 3}`.
pub fn multilinear_grid_sup(sample: &Sample, spec: &DistributionSpec, p: u32, resolution: usize) -> Result<f64> {
    if sample.dim() != 2 || spec.dim() != 2 {
        return Err(Error::UnsupportedDimension(sample.dim()));
    }
    if !(p == 2 || p == 3) {
        return Err(Error::InvalidParameter(format!("multilinear grid supports p in {{2,3}}, got {p}")));
    }
    if resolution == 0 || resolution > MAX_MULTILINEAR_RESOLUTION {
        return Err(Error::InvalidParameter(format!(
            "multilinear resolution must be in 1..={MAX_MULTILINEAR_RESOLUTION}, got {resolution}"
        )));
    }
    let n = sample.n();
    let step = std::f64::consts::PI / resolution as f64;
    let dirs: Vec<[f64; 2]> = (0..resolution).map(|k| [(step * k as f64).cos(), (step * k as f64).sin()]).collect();
    let proj: Vec<Vec<f64>> =
        dirs.iter().map(|u| sample.rows().map(|x| x[0] * u[0] + x[1] * u[1]).collect()).collect();
    let lam = spec.spectrum().eigenvalues();
    let inv_n = 1.0 / n as f64;
    let mut best = 0.0f64;
    match p {
        2 => {
            for a in 0..resolution {
                for b in a..resolution {
                    let emp: f64 = proj[a].iter().zip(&proj[b]).map(|(x, y)| x * y).sum::<f64>() * inv_n;
                    let pop = lam[0] * dirs[a][0] * dirs[b][0] + lam[1] * dirs[a][1] * dirs[b][1];
                    best = best.max((emp - pop).abs());
                }
            }
        }
        _ => {
            // Odd moments of the symmetric families vanish.
            let mut ab = vec![0.0; n];
            for a in 0..resolution {
                for b in a..resolution {
                    for ((o, x), y) in ab.iter_mut().zip(&proj[a]).zip(&proj[b]) {
                        *o = x * y;
                    }
                    for c in b..resolution {
                        let emp: f64 = ab.iter().zip(&proj[c]).map(|(x, y)| x * y).sum::<f64>() * inv_n;
                        best = best.max(emp.abs());
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Gap between the multilinear grid supremum and the true norm `value`.
///
/// Each `v_k` is within `pi / (2 resolution)` in angle of a grid point and the
/// form is `value`-Lipschitz in each angle, so the grid misses at most
/// `p * pi / (2 resolution) * value`.
pub fn multilinear_grid_gap_bound(p: u32, resolution: usize, value: f64) -> f64 {
    p as f64 * std::f64::consts::PI / (2.0 * resolution as f64) * value
}

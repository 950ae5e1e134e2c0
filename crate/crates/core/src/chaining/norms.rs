//! Orlicz, `L_q` and graded norms of linear marginals `<X, v>`.

use crate::error::{Error, Result};
use crate::sampling::DistributionSpec;
use crate::tensornorm::oracles::golden_max;

/// `inf { c > 0 : E exp(|X|^alpha / c^alpha) <= 2 }` by bracketing and bisection.
///
/// `expectation(c)` must return `E exp(|X|^alpha / c^alpha)` (`+inf` when it
/// diverges). The bracket starts at `max(1e-12, first_moment)` and moves by
/// factors of two until the condition flips.
pub fn orlicz_norm(expectation: impl Fn(f64) -> f64, alpha: f64, first_moment: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter(format!("orlicz exponent {alpha} outside (0,2]")));
    }
    let holds = |c: f64| {
        let e = expectation(c);
        !e.is_nan() && e <= 2.0
    };
    let mut c = first_moment.max(1e-12);
    let (mut lo, mut hi);
    if holds(c) {
        hi = c;
        loop {
            c /= 2.0;
            if c < 1e-300 {
                return Ok(0.0);
            }
            if !holds(c) {
                lo = c;
                break;
            }
            hi = c;
        }
    } else {
        lo = c;
        loop {
            c *= 2.0;
            if c > 1e300 {
                return Err(Error::NotInOrliczSpace);
            }
            if holds(c) {
                hi = c;
                break;
            }
            lo = c;
        }
    }
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `E exp(Z^2 / c^2) = (1 - 2/c^2)^(-1/2)` for standard Gaussian `Z`.
pub fn gaussian_exp_square(c: f64) -> f64 {
    let r = 2.0 / (c * c);
    if r >= 1.0 {
        f64::INFINITY
    } else {
        (1.0 - r).powf(-0.5)
    }
}

/// `||<X,v>||_{L_q}`.
pub fn lp_norm(spec: &DistributionSpec, v: &[f64], q: f64) -> Result<f64> {
    Ok(spec.abs_moment_real(v, q)?.powf(1.0 / q))
}

/// `||<X,v>||_(q) = sup_{1 <= p <= q} ||<X,v>||_{L_p} / sqrt(p)`.
///
/// Scans `p = 1, 1.25, ...` plus `q` itself, then refines around the best grid
/// point by golden-section search.
pub fn graded_norm(spec: &DistributionSpec, v: &[f64], q: f64) -> Result<f64> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("graded norm order {q} must be >= 1")));
    }
    let ratio = |p: f64| lp_norm(spec, v, p).map(|x| x / p.sqrt());
    let mut grid: Vec<f64> = (0..).map(|k| 1.0 + 0.25 * k as f64).take_while(|p| *p < q).collect();
    grid.push(q);
    let mut best = (0usize, f64::NEG_INFINITY);
    for (k, p) in grid.iter().enumerate() {
        let r = ratio(*p)?;
        if r > best.1 {
            best = (k, r);
        }
    }
    if best.1 == 0.0 || grid.len() == 1 {
        return Ok(best.1);
    }
    let lo = grid[best.0.saturating_sub(1)];
    let hi = grid[(best.0 + 1).min(grid.len() - 1)];
    let (_, refined) = golden_max(|p| ratio(p).unwrap_or(f64::NEG_INFINITY), lo, hi, 1e-8);
    Ok(best.1.max(refined))
}

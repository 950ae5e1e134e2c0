use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `phi(x) = 2^min((sqrt(N) x)^(2/m), x^2) - 1`, the Young function of the `l_m` bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoungPhi {
    pub n: u64,
    pub m: f64,
}

impl YoungPhi {
    pub fn new(n: u64, m: f64) -> Result<Self> {
        if n == 0 || !(m >= 1.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!("YoungPhi needs n >= 1 and m >= 1, got ({n}, {m})")));
        }
        Ok(Self { n, m })
    }

    pub fn phi(&self, x: f64) -> f64 {
        let a = ((self.n as f64).sqrt() * x).powf(2.0 / self.m);
        (a.min(x * x) * std::f64::consts::LN_2).exp_m1()
    }

    /// `max(sqrt(log2(1+z)), sqrt(log2(1+z)^m / N))`.
    pub fn phi_inverse(&self, z: f64) -> f64 {
        let l = z.ln_1p() / std::f64::consts::LN_2;
        l.sqrt().max((l.powf(self.m) / self.n as f64).sqrt())
    }
}

/// `sup phi^-1(xy) / (phi^-1(x) + phi^-1(y))` over a grid of `(x, y)` pairs.
pub fn young_inverse_ratio_sup(phi: &YoungPhi, grid: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in grid {
        for &y in grid {
            let denom = phi.phi_inverse(x) + phi.phi_inverse(y);
            if denom > 0.0 {
                best = best.max(phi.phi_inverse(x * y) / denom);
            }
        }
    }
    best
}

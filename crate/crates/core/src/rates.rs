//! Closed-form rate calculators.
//!
//! Unspecified absolute constants are set to 1 and logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::gaussian_psi2_constant;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRateInputs {
    /// `||Sigma||`
    pub op_norm: f64,
    /// `r(Sigma)`
    pub eff_rank: f64,
    pub n: u64,
    pub p: f64,
    #[serde(default)]
    pub u: Option<f64>,
    /// Sub-Gaussian constant `K`.
    #[serde(default = "gaussian_psi2_constant")]
    pub k_subg: f64,
}

impl TensorRateInputs {
    pub fn new(op_norm: f64, eff_rank: f64, n: u64, p: f64) -> Self {
        Self { op_norm, eff_rank, n, p, u: None, k_subg: gaussian_psi2_constant() }
    }

    pub fn with_u(self, u: f64) -> Self {
        Self { u: Some(u), ..self }
    }

    pub fn with_k(self, k_subg: f64) -> Self {
        Self { k_subg, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{what} out of range in {self:?}")));
        if !(self.op_norm > 0.0 && self.op_norm.is_finite()) {
            return bad("op_norm");
        }
        if !(self.eff_rank >= 1.0 && self.eff_rank.is_finite()) {
            return bad("eff_rank");
        }
        if self.n == 0 {
            return bad("n");
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return bad("p");
        }
        if !(self.k_subg > 0.0 && self.k_subg.is_finite()) {
            return bad("k_subg");
        }
        if let Some(u) = self.u {
            if !(u >= 1.0 && u.is_finite()) {
                return bad("u");
            }
        }
        Ok(())
    }

    fn u(&self) -> Result<f64> {
        self.u.ok_or_else(|| Error::InvalidParameter("tail rate needs u".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessRateInputs {
    /// `gamma(F, psi_2)`
    pub gamma: f64,
    /// `d_{psi_2}(F)`
    pub d_psi2: f64,
    pub n: u64,
    pub p: f64,
    #[serde(default)]
    pub u: Option<f64>,
    #[serde(default)]
    pub m: Option<f64>,
}

impl ProcessRateInputs {
    pub fn new(gamma: f64, d_psi2: f64, n: u64, p: f64) -> Self {
        Self { gamma, d_psi2, n, p, u: None, m: None }
    }

    pub fn with_u(self, u: f64) -> Self {
        Self { u: Some(u), ..self }
    }

    pub fn with_m(self, m: f64) -> Self {
        Self { m: Some(m), ..self }
    }

    fn validate(&self, min_p: f64) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{what} out of range in {self:?}")));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma");
        }
        if !(self.d_psi2 > 0.0 && self.d_psi2.is_finite()) {
            return bad("d_psi2");
        }
        if self.n == 0 {
            return bad("n");
        }
        if !(self.p >= min_p && self.p.is_finite()) {
            return bad("p");
        }
        if let Some(u) = self.u {
            if !(u >= 1.0 && u.is_finite()) {
                return bad("u");
            }
        }
        Ok(())
    }

    fn u(&self) -> Result<f64> {
        self.u.ok_or_else(|| Error::InvalidParameter("tail rate needs u".into()))
    }
}

/// `sqrt(r/N) + r^(p/2)/N`
fn tensor_shape(r: f64, n: f64, p: f64) -> f64 {
    (r / n).sqrt() + r.powf(p / 2.0) / n
}

/// `K^p ||Sigma||^(p/2) (sqrt(r/N) + r^(p/2)/N)`
pub fn thm1_expectation_rate(i: &TensorRateInputs) -> Result<f64> {
    i.validate()?;
    Ok(i.k_subg.powf(i.p) * i.op_norm.powf(i.p / 2.0) * tensor_shape(i.eff_rank, i.n as f64, i.p))
}

/// `K^p ||Sigma||^(p/2) (sqrt(r/N) + r^(p/2)/N + sqrt(u/N) + u^(p/2)/N)`
pub fn thm1_tail_rate(i: &TensorRateInputs) -> Result<f64> {
    i.validate()?;
    let u = i.u()?;
    let n = i.n as f64;
    Ok(i.k_subg.powf(i.p) * i.op_norm.powf(i.p / 2.0) * (tensor_shape(i.eff_rank, n, i.p) + tensor_shape(u, n, i.p)))
}

/// The `u`-dependent part of [`thm1_tail_rate`]: `K^p ||Sigma||^(p/2) (sqrt(u/N) + u^(p/2)/N)`.
pub fn thm1_tail_increment(i: &TensorRateInputs) -> Result<f64> {
    i.validate()?;
    let u = i.u()?;
    Ok(i.k_subg.powf(i.p) * i.op_norm.powf(i.p / 2.0) * tensor_shape(u, i.n as f64, i.p))
}

/// Gaussian lower rate `||Sigma||^(p/2) (sqrt(r/N) + r^(p/2)/N)`; ignores `k_subg`.
pub fn prop31_lower_rate(i: &TensorRateInputs) -> Result<f64> {
    thm1_expectation_rate(&i.with_k(1.0))
}

/// `gamma d^(p-1) / sqrt(N) + gamma^p / N`
pub fn thm2_expectation_rate(i: &ProcessRateInputs) -> Result<f64> {
    i.validate(2.0)?;
    Ok(process_terms(i))
}

fn process_terms(i: &ProcessRateInputs) -> f64 {
    let n = i.n as f64;
    i.gamma * i.d_psi2.powf(i.p - 1.0) / n.sqrt() + i.gamma.powf(i.p) / n
}

/// `u gamma d^(p-1) / sqrt(N) + u^p gamma^p / N`
pub fn thm2_tail_rate(i: &ProcessRateInputs) -> Result<f64> {
    i.validate(2.0)?;
    let u = i.u()?;
    let n = i.n as f64;
    Ok(u * i.gamma * i.d_psi2.powf(i.p - 1.0) / n.sqrt() + (u * i.gamma).powf(i.p) / n)
}

/// `gamma d^(p-1) / sqrt(N) + gamma^p / N + d^p (sqrt(u/N) + u^(p/2)/N)`
pub fn thm2_alt_tail_rate(i: &ProcessRateInputs) -> Result<f64> {
    i.validate(2.0)?;
    let u = i.u()?;
    Ok(process_terms(i) + i.d_psi2.powf(i.p) * tensor_shape(u, i.n as f64, i.p))
}

/// Third term `gamma^(3/2) d^(p - 3/2) / N^(3/4)` of the `p >= 3/2` bound.
pub fn remark25_third_term(i: &ProcessRateInputs) -> Result<f64> {
    i.validate(1.5)?;
    Ok(i.gamma.powf(1.5) * i.d_psi2.powf(i.p - 1.5) / (i.n as f64).powf(0.75))
}

/// `thm2` terms plus [`remark25_third_term`], valid for `p >= 3/2`.
pub fn remark25_rate(i: &ProcessRateInputs) -> Result<f64> {
    i.validate(1.5)?;
    Ok(process_terms(i) + remark25_third_term(i)?)
}

/// `gamma + N^(1/m) d + d u`
pub fn remark41_lm_tail_rate(i: &ProcessRateInputs) -> Result<f64> {
    i.validate(0.0)?;
    let u = i.u()?;
    let m = i.m.ok_or_else(|| Error::InvalidParameter("l_m rate needs m".into()))?;
    if !(m >= 2.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("m = {m} must be >= 2")));
    }
    Ok(i.gamma + (i.n as f64).powf(1.0 / m) * i.d_psi2 + i.d_psi2 * u)
}

/// `||Sigma||^(p/2) (sqrt(eps) + eps)`, `eps = (ln N / N) E max_i ||X_i||^p / ||Sigma||^(p/2)`.
pub fn competing_guedon_rate(op_norm: f64, p: f64, n: u64, max_norm_moment: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter("guedon rate needs n >= 2".into()));
    }
    if !(op_norm > 0.0 && p >= 2.0 && max_norm_moment >= 0.0) {
        return Err(Error::InvalidParameter("guedon rate inputs out of range".into()));
    }
    let nf = n as f64;
    let scale = op_norm.powf(p / 2.0);
    let eps = nf.ln() / nf * max_norm_moment / scale;
    Ok(scale * (eps.sqrt() + eps))
}

/// `||Sigma||^(p/2) sqrt((ln N)^p (r + ln d)^(p+1) / N)`
pub fn competing_even_rate(op_norm: f64, eff_rank: f64, n: u64, p: f64, dim: u64) -> Result<f64> {
    if n < 2 || dim == 0 {
        return Err(Error::InvalidParameter("even rate needs n >= 2 and dim >= 1".into()));
    }
    if !(op_norm > 0.0 && eff_rank >= 1.0 && p >= 2.0) {
        return Err(Error::InvalidParameter("even rate inputs out of range".into()));
    }
    let nf = n as f64;
    Ok(op_norm.powf(p / 2.0) * (nf.ln().powf(p) * (eff_rank + (dim as f64).ln()).powf(p + 1.0) / nf).sqrt())
}

/// `||Sigma|| (sqrt(r/N) + r/N)`
pub fn kl_p2_rate(op_norm: f64, eff_rank: f64, n: u64) -> Result<f64> {
    prop31_lower_rate(&TensorRateInputs::new(op_norm, eff_rank, n, 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn thm1_examples() {
        let i = TensorRateInputs::new(1.0, 1.0, 1, 2.0).with_k(1.0);
        assert!(close(thm1_expectation_rate(&i).unwrap(), 2.0));
        let i = TensorRateInputs::new(1.0, 4.0, 100, 2.0).with_k(1.0);
        assert!(close(thm1_expectation_rate(&i).unwrap(), 0.24));
        let i = TensorRateInputs::new(2.0, 4.0, 100, 4.0).with_k(1.0);
        assert!(close(thm1_expectation_rate(&i).unwrap(), 1.44));
        let k = TensorRateInputs::new(1.0, 4.0, 100, 2.0);
        assert!(close(thm1_expectation_rate(&k).unwrap(), 0.24 * 8.0 / 3.0));
    }

    #[test]
    fn thm1_tail_examples() {
        let i = TensorRateInputs::new(1.0, 1.0, 1, 2.0).with_k(1.0).with_u(1.0);
        assert!(close(thm1_tail_rate(&i).unwrap(), 4.0));
        let r = TensorRateInputs::new(3.0, 5.0, 40, 3.0).with_u(5.0);
        assert!(close(thm1_tail_rate(&r).unwrap(), 2.0 * thm1_expectation_rate(&r).unwrap()));
        let mut prev = 0.0;
        for k in 0..50 {
            let v = thm1_tail_rate(&r.with_u(1.0 + k as f64 * 0.7)).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(thm1_tail_rate(&TensorRateInputs::new(1.0, 1.0, 1, 2.0)).is_err());
    }

    #[test]
    fn prop31_examples() {
        let i = TensorRateInputs::new(1.0, 1.0, 4, 2.0);
        assert!(close(prop31_lower_rate(&i).unwrap(), 0.75));
        let j = TensorRateInputs::new(2.5, 3.0, 17, 3.0);
        assert!(close(prop31_lower_rate(&j).unwrap(), thm1_expectation_rate(&j.with_k(1.0)).unwrap()));
        let t = 1.7f64;
        let s = TensorRateInputs { op_norm: 2.5 * t, ..j };
        assert!(close(prop31_lower_rate(&s).unwrap(), t.powf(1.5) * prop31_lower_rate(&j).unwrap()));
    }

    #[test]
    fn thm2_examples() {
        assert!(close(thm2_expectation_rate(&ProcessRateInputs::new(1.0, 1.0, 1, 2.0)).unwrap(), 2.0));
        assert_eq!(thm2_expectation_rate(&ProcessRateInputs::new(0.0, 1.0, 9, 2.0)).unwrap(), 0.0);
        assert!(close(thm2_expectation_rate(&ProcessRateInputs::new(2.0, 1.0, 4, 3.0)).unwrap(), 3.0));
        assert!(thm2_expectation_rate(&ProcessRateInputs::new(1.0, 1.0, 4, 1.5)).is_err());
    }

    #[test]
    fn thm2_tail_examples() {
        let i = ProcessRateInputs::new(1.3, 0.7, 11, 3.0);
        assert!(close(thm2_tail_rate(&i.with_u(1.0)).unwrap(), thm2_expectation_rate(&i).unwrap()));
        let alt = ProcessRateInputs::new(0.0, 1.0, 1, 2.0).with_u(1.0);
        assert!(close(thm2_alt_tail_rate(&alt).unwrap(), 2.0));
        let (mut a, mut b) = (0.0, 0.0);
        for k in 0..40 {
            let j = i.with_u(1.0 + 0.5 * k as f64);
            let (x, y) = (thm2_tail_rate(&j).unwrap(), thm2_alt_tail_rate(&j).unwrap());
            assert!(x >= a && y >= b);
            (a, b) = (x, y);
        }
    }

    #[test]
    fn remark25_examples() {
        assert!(close(remark25_rate(&ProcessRateInputs::new(1.0, 1.0, 1, 1.5)).unwrap(), 3.0));
        let i = ProcessRateInputs::new(1.0, 1.0, 16, 2.0);
        let third = remark25_third_term(&i).unwrap();
        assert!(close(third, 0.125));
        assert!(third <= thm2_expectation_rate(&i).unwrap());
        assert!(close(thm2_expectation_rate(&i).unwrap(), 0.3125));
        assert_eq!(remark25_rate(&ProcessRateInputs::new(0.0, 1.0, 5, 1.7)).unwrap(), 0.0);
    }

    #[test]
    fn remark25_third_term_is_dominated_for_p_at_least_two() {
        // AM-GM: gamma^(3/2) d^(p-3/2) N^(-3/4) <= max(first, second) term.
        for g in [0.01, 0.3, 1.0, 4.0, 50.0] {
            for d in [0.05, 1.0, 7.0] {
                for n in [1u64, 3, 16, 1000, 100_000] {
                    for p in [2.0, 2.5, 3.0, 4.0, 6.0] {
                        let i = ProcessRateInputs::new(g, d, n, p);
                        let third = remark25_third_term(&i).unwrap();
                        assert!(third <= thm2_expectation_rate(&i).unwrap() * (1.0 + 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn lm_examples() {
        let i = ProcessRateInputs::new(1.0, 1.0, 1, 2.0).with_m(2.0).with_u(1.0);
        assert!(close(remark41_lm_tail_rate(&i).unwrap(), 3.0));
        let d = 0.8;
        let a = remark41_lm_tail_rate(&ProcessRateInputs::new(1.0, d, 1, 2.0).with_m(3.0).with_u(2.0)).unwrap();
        let b = remark41_lm_tail_rate(&ProcessRateInputs::new(1.0, d, 8, 2.0).with_m(3.0).with_u(2.0)).unwrap();
        assert!(close(b - a, d));
        let slope = remark41_lm_tail_rate(&i.with_u(1001.0)).unwrap() - remark41_lm_tail_rate(&i.with_u(1000.0)).unwrap();
        assert!(close(slope, 1.0));
        assert!(remark41_lm_tail_rate(&ProcessRateInputs::new(1.0, 1.0, 1, 2.0).with_u(1.0)).is_err());
    }

    #[test]
    fn competitor_examples() {
        // eps = 1: ln(n)/n * M / ||Sigma|| = 1.
        let n = 10u64;
        let m = n as f64 / (n as f64).ln() * 2.0;
        assert!(close(competing_guedon_rate(2.0, 2.0, n, m).unwrap(), 4.0));
        assert_eq!(competing_guedon_rate(2.0, 2.0, n, 0.0).unwrap(), 0.0);
        assert!(competing_guedon_rate(1.0, 2.0, 1, 1.0).is_err());

        // Rates take integer N; check the formula with N = e^2 through the closed form.
        let n2 = std::f64::consts::E.powi(2);
        let direct = 3.0 * (n2.ln().powi(2) * 1.0f64.powi(3) / n2).sqrt();
        assert!(close(direct, 2.0 * 3.0 / std::f64::consts::E));
        let a = competing_even_rate(1.0, 2.0, 100, 2.0, 4).unwrap();
        let b = competing_even_rate(1.0, 2.0, 100, 2.0, 40).unwrap();
        assert!(b > a);
    }

    #[test]
    fn kl_examples() {
        assert!(close(kl_p2_rate(3.0, 7.0, 7).unwrap(), 6.0));
        assert!(close(kl_p2_rate(1.0, 1.0, 100).unwrap(), 0.11));
        for (o, r, n) in [(0.3, 1.0, 5u64), (2.0, 9.5, 300), (1.0, 64.0, 64)] {
            let t = TensorRateInputs::new(o, r, n, 2.0).with_k(1.0);
            assert_eq!(kl_p2_rate(o, r, n).unwrap(), thm1_expectation_rate(&t).unwrap());
        }
    }

    #[test]
    fn homogeneity() {
        let i = ProcessRateInputs::new(0.7, 1.1, 30, 3.0);
        let t = 2.3f64;
        let s = ProcessRateInputs { gamma: 0.7 * t, d_psi2: 1.1 * t, ..i };
        assert!(close(thm2_expectation_rate(&s).unwrap(), t.powi(3) * thm2_expectation_rate(&i).unwrap()));
    }

    #[test]
    fn spreadsheet_fixture() {
        // Hand-expanded values of each formula at one point.
        let (o, r, n, p, u, k) = (1.5f64, 3.2f64, 50u64, 3.0f64, 2.0f64, 1.2f64);
        let nf = n as f64;
        let t = TensorRateInputs::new(o, r, n, p).with_k(k).with_u(u);
        let pre = k.powi(3) * o.powf(1.5);
        let expect_e = pre * ((r / nf).sqrt() + r.powf(1.5) / nf);
        let expect_t = expect_e + pre * ((u / nf).sqrt() + u.powf(1.5) / nf);
        assert!(close(thm1_expectation_rate(&t).unwrap(), expect_e));
        assert!(close(thm1_tail_rate(&t).unwrap(), expect_t));
        let (g, d) = (2.2f64, 0.9f64);
        let pi = ProcessRateInputs::new(g, d, n, p).with_u(u).with_m(4.0);
        assert!(close(thm2_expectation_rate(&pi).unwrap(), g * d * d / nf.sqrt() + g.powi(3) / nf));
        assert!(close(thm2_tail_rate(&pi).unwrap(), u * g * d * d / nf.sqrt() + (u * g).powi(3) / nf));
        assert!(close(remark41_lm_tail_rate(&pi).unwrap(), g + nf.powf(0.25) * d + d * u));
    }
}

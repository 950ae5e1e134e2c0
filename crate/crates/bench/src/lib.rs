//! Fixtures shared by the benchmarks.

use tensorconc::chaining::FiniteMetricSpace;
use tensorconc::sampling::sample;
use tensorconc::{DeviationProblem, DistributionSpec, Result, Spectrum, SolverConfig, Variant};

pub fn identity_spec(d: usize) -> DistributionSpec {
    DistributionSpec::gaussian(Spectrum::from_eigenvalues(vec![1.0; d]).expect("positive eigenvalues"))
}

pub fn problem(d: usize, n: usize, p: u32, seed: u64) -> Result<DeviationProblem> {
    let spec = identity_spec(d);
    let s = sample(&spec, n, seed)?;
    let variant = if p.is_multiple_of(2) { Variant::Signed } else { Variant::Absolute };
    DeviationProblem::new(s, spec, p, variant)
}

pub fn small_solver() -> SolverConfig {
    SolverConfig { restarts: 8, ..SolverConfig::default() }
}

/// Points on a circle with Euclidean distances.
pub fn circle_space(k: usize) -> Result<FiniteMetricSpace> {
    let pts: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / k as f64;
            (a.cos(), a.sin())
        })
        .collect();
    FiniteMetricSpace::from_points(&pts, |a, b| Ok(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert!(problem(4, 16, 3, 1).is_ok());
        assert_eq!(circle_space(10).unwrap().len(), 10);
        assert!(small_solver().validate().is_ok());
    }
}

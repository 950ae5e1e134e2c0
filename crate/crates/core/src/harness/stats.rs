//! Summary statistics over trial records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample mean and normal-approximation 95% halfwidth `1.96 sd / sqrt(T)`.
pub fn mean_deviation(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 values, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite deviation value".into()));
    }
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    Ok((mean, 1.96 * var.sqrt() / t.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichCell {
    pub p: u32,
    pub mean: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSpread {
    pub min: f64,
    pub max: f64,
    pub max_over_min: f64,
    pub cells: usize,
}

impl RatioSpread {
    fn of(ratios: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut min, mut max, mut cells) = (f64::INFINITY, f64::NEG_INFINITY, 0);
        for r in ratios {
            min = min.min(r);
            max = max.max(r);
            cells += 1;
        }
        (cells > 0).then(|| RatioSpread { min, max, max_over_min: max / min, cells })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub overall: RatioSpread,
    /// Ascending in `p`.
    pub per_p: Vec<(u32, RatioSpread)>,
}

/// Spread of `rho = mean / rate` over a sweep, overall and per `p`.
pub fn sandwich_check(cells: &[SandwichCell]) -> Result<SandwichReport> {
    if cells.iter().any(|c| !(c.rate > 0.0) || !(c.mean > 0.0)) {
        return Err(Error::InvalidArgument("sandwich cells need positive means and rates".into()));
    }
    let overall = RatioSpread::of(cells.iter().map(|c| c.mean / c.rate))
        .ok_or_else(|| Error::InsufficientData("no sandwich cells".into()))?;
    let mut ps: Vec<u32> = cells.iter().map(|c| c.p).collect();
    ps.sort_unstable();
    ps.dedup();
    let per_p = ps
        .into_iter()
        .map(|p| {
            let spread = RatioSpread::of(cells.iter().filter(|c| c.p == p).map(|c| c.mean / c.rate));
            (p, spread.expect("p taken from cells"))
        })
        .collect();
    Ok(SandwichReport { overall, per_p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub x_label: String,
    pub y_label: String,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("slope fit needs 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidArgument("log-log fit needs positive finite values".into()));
    }
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope fit needs distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    // A constant response is fit exactly.
    let r_squared = if ss_tot <= f64::EPSILON * k * my.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
        x_label: "x".into(),
        y_label: "mean".into(),
    })
}

impl ScalingFit {
    pub fn labelled(self, x_label: &str, y_label: &str) -> Self {
        Self { x_label: x_label.into(), y_label: y_label.into(), ..self }
    }
}

/// Drops points whose 95% halfwidth exceeds 10% of the mean, then fits.
pub fn fit_precise_cells(cells: &[(f64, f64, f64)]) -> Result<ScalingFit> {
    let kept: Vec<(f64, f64)> = cells.iter().filter(|c| c.2 <= 0.1 * c.1).map(|c| (c.0, c.1)).collect();
    fit_loglog_slope(&kept)
}

/// Fraction of values strictly above each threshold.
pub fn tail_exceedance(values: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no values".into()));
    }
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument("thresholds must be ascending".into()));
    }
    let t = values.len() as f64;
    Ok(thresholds.iter().map(|&h| values.iter().filter(|&&v| v > h).count() as f64 / t).collect())
}

/// Median by sorting (mean of the middle pair for even counts).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Ok(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_examples() {
        assert_eq!(mean_deviation(&[0.7, 0.7]).unwrap(), (0.7, 0.0));
        let (m, h) = mean_deviation(&[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert!((h - 1.96).abs() < 1e-15);
        assert!(mean_deviation(&[1.0]).is_err());
    }

    #[test]
    fn mean_agrees_with_streaming_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() * 10.0).collect();
        // Welford updates.
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, x) in values.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let half = 1.96 * (m2 / 999.0).sqrt() / 1000f64.sqrt();
        let (a, b) = mean_deviation(&values).unwrap();
        assert!((a - mean).abs() < 1e-12 && (b - half).abs() < 1e-12);
    }

    #[test]
    fn sandwich_examples() {
        let exact: Vec<SandwichCell> =
            (1..5).map(|k| SandwichCell { p: 2 + k % 2, mean: k as f64, rate: k as f64 }).collect();
        let r = sandwich_check(&exact).unwrap();
        assert_eq!(r.overall.max_over_min, 1.0);
        assert_eq!(r.per_p.len(), 2);
        let one = sandwich_check(&[SandwichCell { p: 4, mean: 3.0, rate: 0.1 }]).unwrap();
        assert_eq!(one.overall.max_over_min, 1.0);
        let r = sandwich_check(&[
            SandwichCell { p: 2, mean: 1.0, rate: 1.0 },
            SandwichCell { p: 2, mean: 4.0, rate: 1.0 },
            SandwichCell { p: 3, mean: 1.0, rate: 2.0 },
        ])
        .unwrap();
        assert_eq!(r.per_p[0].1.max_over_min, 4.0);
        assert_eq!(r.per_p[1].1.max_over_min, 1.0);
        assert_eq!(r.overall.max_over_min, 8.0);
    }

    #[test]
    fn slope_examples() {
        let pts: Vec<(f64, f64)> = (6..=12).map(|k| (2f64.powi(k), 2f64.powi(k).powf(-0.5))).collect();
        let f = fit_loglog_slope(&pts).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        let flat = fit_loglog_slope(&[(1.0, 2.0), (2.0, 2.0), (4.0, 2.0)]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        assert!(fit_loglog_slope(&[(1.0, 2.0), (2.0, 0.0), (4.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 2.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn slope_with_multiplicative_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<(f64, f64)> = (1..=20)
            .map(|k| {
                let x = k as f64;
                (x, 3.0 * x * x * (1.0 + 0.01 * (2.0 * rng.random::<f64>() - 1.0)))
            })
            .collect();
        let f = fit_loglog_slope(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 0.05);
        assert!(f.r_squared > 0.99);
    }

    #[test]
    fn r_squared_matches_residuals() {
        let pts = [(1.0, 1.0), (2.0, 3.0), (3.0, 2.5), (5.0, 7.0)];
        let f = fit_loglog_slope(&pts).unwrap();
        let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let my = ly.iter().sum::<f64>() / 4.0;
        let ss_res: f64 = pts.iter().map(|p| (p.1.ln() - f.intercept - f.slope * p.0.ln()).powi(2)).sum();
        let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
        assert!((f.r_squared - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    }

    #[test]
    fn precise_cells_filter() {
        let cells = [(1.0, 1.0, 0.05), (2.0, 2.0, 0.1), (4.0, 4.0, 0.2), (8.0, 100.0, 50.0)];
        let f = fit_precise_cells(&cells).unwrap();
        assert_eq!(f.n_points, 3);
        assert!((f.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exceedance_examples() {
        let v: Vec<f64> = (0..100).map(|k| k as f64).collect();
        assert_eq!(tail_exceedance(&v, &[-1.0]).unwrap(), vec![1.0]);
        assert_eq!(tail_exceedance(&v, &[1000.0]).unwrap(), vec![0.0]);
        let m = median(&v).unwrap();
        let e = tail_exceedance(&v, &[m]).unwrap()[0];
        assert!((e - 0.5).abs() <= 0.01);
        assert!(tail_exceedance(&v, &[2.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn exceedance_is_non_increasing(values in prop::collection::vec(-10.0f64..10.0, 1..60),
                                        mut th in prop::collection::vec(-12.0f64..12.0, 1..10)) {
            th.sort_by(f64::total_cmp);
            let e = tail_exceedance(&values, &th).unwrap();
            for w in e.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}

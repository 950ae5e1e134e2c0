//! Generic chaining on finite metric spaces.
//!
//! An admissible sequence is an increasing chain `F_0 ⊆ F_1 ⊆ ...` with
//! `|F_0| = 1` and `|F_s| <= 2^(2^s)`; `gamma_2` is the infimum over such
//! chains of `sup_t sum_s 2^(s/2) d(t, F_s)`.

mod classes;
mod norms;
mod young;

pub use classes::{gaussian_width, lambda_functional, psi2_metric, FiniteFunctionClass, LambdaValues, WidthEstimate};
pub use norms::{gaussian_exp_square, graded_norm, lp_norm, orlicz_norm};
pub use young::{young_inverse_ratio_sup, YoungPhi};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Triangle inequality slack, relative to `max(1, diameter)`.
pub const TRIANGLE_TOL: f64 = 1e-9;

/// Largest space accepted by exhaustive `gamma_2`.
pub const MAX_EXHAUSTIVE_POINTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMetricSpace {
    n_points: usize,
    /// Row-major `n x n`.
    distances: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceRepr {
    n_points: usize,
    distances: Vec<f64>,
    #[serde(default)]
    labels: Option<Vec<Vec<f64>>>,
}

impl<'de> Deserialize<'de> for FiniteMetricSpace {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let r = SpaceRepr::deserialize(deserializer)?;
        let mut space = FiniteMetricSpace::new(r.n_points, r.distances).map_err(serde::de::Error::custom)?;
        if let Some(labels) = r.labels {
            space = space.with_labels(labels).map_err(serde::de::Error::custom)?;
        }
        Ok(space)
    }
}

impl FiniteMetricSpace {
    /// Validates symmetry, zero diagonal, nonnegativity and the triangle inequality.
    pub fn new(n_points: usize, distances: Vec<f64>) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::InvalidParameter("metric space needs at least one point".into()));
        }
        if distances.len() != n_points * n_points {
            return Err(Error::DimensionMismatch { expected: n_points * n_points, got: distances.len() });
        }
        let n = n_points;
        let at = |i: usize, j: usize| distances[i * n + j];
        let diam = distances.iter().cloned().fold(0.0, f64::max);
        let tol = TRIANGLE_TOL * diam.max(1.0);
        for i in 0..n {
            if at(i, i) != 0.0 {
                return Err(Error::InvalidParameter(format!("d({i},{i}) = {} is not zero", at(i, i))));
            }
            for j in 0..n {
                let x = at(i, j);
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(Error::InvalidParameter(format!("d({i},{j}) = {x} is not a finite nonnegative number")));
                }
                if (x - at(j, i)).abs() > tol {
                    return Err(Error::InvalidParameter(format!("d({i},{j}) != d({j},{i})")));
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                for k in 0..n {
                    if at(i, j) > at(i, k) + at(k, j) + tol {
                        return Err(Error::InvalidParameter(format!(
                            "triangle inequality fails for ({i},{j}) through {k}"
                        )));
                    }
                }
            }
        }
        Ok(Self { n_points, distances, labels: None })
    }

    /// Builds the space of `points` under a caller-supplied metric (upper triangle only).
    pub fn from_points<P>(points: &[P], metric: impl Fn(&P, &P) -> Result<f64>) -> Result<Self> {
        let n = points.len();
        let mut distances = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let x = metric(&points[i], &points[j])?;
                distances[i * n + j] = x;
                distances[j * n + i] = x;
            }
        }
        Self::new(n, distances)
    }

    pub fn with_labels(mut self, labels: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != self.n_points {
            return Err(Error::DimensionMismatch { expected: self.n_points, got: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.n_points + j]
    }

    pub fn labels(&self) -> Option<&[Vec<f64>]> {
        self.labels.as_deref()
    }

    pub fn diameter(&self) -> f64 {
        self.distances.iter().cloned().fold(0.0, f64::max)
    }

    /// Same space with every distance multiplied by `t > 0`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale {t} must be positive")));
        }
        Ok(Self {
            n_points: self.n_points,
            distances: self.distances.iter().map(|x| x * t).collect(),
            labels: self.labels.clone(),
        })
    }

    /// Restriction to the listed points, in the given order.
    pub fn subspace(&self, keep: &[usize]) -> Result<Self> {
        let m = keep.len();
        let mut distances = Vec::with_capacity(m * m);
        for &i in keep {
            for &j in keep {
                distances.push(self.distance(i, j));
            }
        }
        Self::new(m, distances)
    }

    fn dist_to_set(&self, t: usize, set: &[usize]) -> f64 {
        set.iter().map(|&c| self.distance(t, c)).fold(f64::INFINITY, f64::min)
    }

    /// Point minimizing the maximal distance to all others (lowest index on ties).
    pub fn one_center(&self) -> usize {
        let n = self.n_points;
        (0..n)
            .map(|i| (i, (0..n).map(|j| self.distance(i, j)).fold(0.0, f64::max)))
            .fold((0, f64::INFINITY), |best, (i, r)| if r < best.1 { (i, r) } else { best })
            .0
    }

    /// Farthest-first traversal started at the 1-center: every prefix is a greedy net.
    pub fn farthest_first_order(&self) -> Vec<usize> {
        let n = self.n_points;
        let first = self.one_center();
        let mut order = vec![first];
        let mut gap: Vec<f64> = (0..n).map(|j| self.distance(first, j)).collect();
        let mut used = vec![false; n];
        used[first] = true;
        while order.len() < n {
            let mut pick = usize::MAX;
            let mut far = f64::NEG_INFINITY;
            for j in 0..n {
                if !used[j] && gap[j] > far {
                    far = gap[j];
                    pick = j;
                }
            }
            used[pick] = true;
            order.push(pick);
            for j in 0..n {
                gap[j] = gap[j].min(self.distance(pick, j));
            }
        }
        order
    }
}

/// `|F_s|` cap: 1 at level zero, `2^(2^s)` after that (saturating).
pub fn level_capacity(s: usize) -> usize {
    if s == 0 {
        return 1;
    }
    if s >= 6 {
        return usize::MAX;
    }
    1usize.checked_shl(1u32 << s).unwrap_or(usize::MAX)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleSequence {
    /// `levels[s]` lists the point indices of `F_s`.
    pub levels: Vec<Vec<usize>>,
    /// First level equal to the whole space.
    pub final_level: usize,
}

impl AdmissibleSequence {
    /// Checks `|F_0| = 1`, nesting, the cardinality caps and that `F_S` is everything.
    pub fn validate(&self, n_points: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        if self.levels.is_empty() || self.levels[0].len() != 1 {
            return fail("F_0 must be a single point".into());
        }
        if self.final_level + 1 != self.levels.len() {
            return fail("final_level must index the last stored level".into());
        }
        let mut prev: Vec<bool> = vec![false; n_points];
        for (s, level) in self.levels.iter().enumerate() {
            if level.len() > level_capacity(s) {
                return fail(format!("|F_{s}| = {} exceeds 2^(2^{s})", level.len()));
            }
            let mut here = vec![false; n_points];
            for &i in level {
                if i >= n_points || here[i] {
                    return fail(format!("F_{s} has an invalid or repeated index {i}"));
                }
                here[i] = true;
            }
            if prev.iter().zip(&here).any(|(a, b)| *a && !*b) {
                return fail(format!("F_{} is not contained in F_{s}", s.saturating_sub(1)));
            }
            prev = here;
        }
        if prev.iter().any(|x| !x) {
            return fail("last level is not the whole space".into());
        }
        Ok(())
    }

    /// `F_s` for any `s`, constant past the final level.
    pub fn level(&self, s: usize) -> &[usize] {
        &self.levels[s.min(self.final_level)]
    }

    /// `sup_t sum_s 2^(s/2) d(t, F_s)`.
    pub fn chaining_sum(&self, space: &FiniteMetricSpace) -> f64 {
        (0..space.len())
            .map(|t| {
                self.levels
                    .iter()
                    .enumerate()
                    .map(|(s, level)| 2f64.powf(s as f64 / 2.0) * space.dist_to_set(t, level))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Greedy sequence: `F_0` is the 1-center, each later level extends the previous
/// one by farthest-first insertion up to `min(2^(2^s), n)` points.
pub fn build_admissible_sequence(space: &FiniteMetricSpace) -> AdmissibleSequence {
    let order = space.farthest_first_order();
    let n = space.len();
    let mut levels = Vec::new();
    let mut s = 0;
    loop {
        let size = level_capacity(s).min(n);
        levels.push(order[..size].to_vec());
        if size == n {
            break;
        }
        s += 1;
    }
    AdmissibleSequence { final_level: levels.len() - 1, levels }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    GreedyFfp,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value: f64,
    pub sequence: AdmissibleSequence,
    pub method: GammaMethod,
}

/// `gamma_2` of a finite space: greedy upper bound, or the exact infimum for `n <= 6`.
pub fn gamma2(space: &FiniteMetricSpace, method: GammaMethod) -> Result<GammaEstimate> {
    match method {
        GammaMethod::GreedyFfp => {
            let sequence = build_admissible_sequence(space);
            Ok(GammaEstimate { value: sequence.chaining_sum(space), sequence, method })
        }
        GammaMethod::Exhaustive => exhaustive_gamma2(space),
    }
}

/// With `n <= 6`, `F_2` (capacity 16) is the whole space, so an admissible
/// sequence is a point `F_0` and a superset `F_1` of at most four points.
fn exhaustive_gamma2(space: &FiniteMetricSpace) -> Result<GammaEstimate> {
    let n = space.len();
    if n > MAX_EXHAUSTIVE_POINTS {
        return Err(Error::UnsupportedSize(format!(
            "exhaustive gamma_2 needs at most {MAX_EXHAUSTIVE_POINTS} points, got {n}"
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, AdmissibleSequence)> = None;
    for root in 0..n {
        for mask in 0u32..(1 << n) {
            if mask >> root & 1 == 0 || mask.count_ones() as usize > 4 {
                continue;
            }
            let mut f1: Vec<usize> = vec![root];
            f1.extend((0..n).filter(|&i| i != root && mask >> i & 1 == 1));
            let mut levels = vec![vec![root]];
            if n > 1 {
                levels.push(f1.clone());
                if f1.len() < n {
                    levels.push(all.clone());
                }
            }
            // A shorter chain is the same sequence with F_1 = everything.
            while levels.len() >= 2 && levels[levels.len() - 2].len() == n {
                levels.pop();
            }
            let seq = AdmissibleSequence { final_level: levels.len() - 1, levels };
            let value = seq.chaining_sum(space);
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, seq));
            }
        }
    }
    let (value, sequence) = best.expect("nonempty space");
    Ok(GammaEstimate { value, sequence, method: GammaMethod::Exhaustive })
}

/// `sum_s 2^(s/2) e_s`, `e_s` the covering radius of the first `min(2^(2^s), n)`
/// farthest-first centers (one center at `s = 0`).
pub fn dudley_sum(space: &FiniteMetricSpace) -> f64 {
    let order = space.farthest_first_order();
    let n = space.len();
    let mut total = 0.0;
    let mut s = 0;
    loop {
        let centers = &order[..level_capacity(s).min(n)];
        let radius = (0..n).map(|t| space.dist_to_set(t, centers)).fold(0.0, f64::max);
        if radius == 0.0 {
            return total;
        }
        total += 2f64.powf(s as f64 / 2.0) * radius;
        s += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn euclidean(points: &[Vec<f64>]) -> FiniteMetricSpace {
        FiniteMetricSpace::from_points(points, |a, b| {
            Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        })
        .unwrap()
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FiniteMetricSpace {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect();
        euclidean(&pts)
    }

    #[test]
    fn validation() {
        assert!(FiniteMetricSpace::new(2, vec![0.0, 1.0, 1.0, 0.0]).is_ok());
        assert!(FiniteMetricSpace::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(FiniteMetricSpace::new(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(FiniteMetricSpace::new(3, vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0]).is_err());
        assert!(FiniteMetricSpace::new(0, vec![]).is_err());
        assert!(FiniteMetricSpace::new(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn singleton_and_pair() {
        let one = FiniteMetricSpace::new(1, vec![0.0]).unwrap();
        let seq = build_admissible_sequence(&one);
        assert_eq!(seq.levels, vec![vec![0]]);
        assert_eq!(seq.final_level, 0);
        assert_eq!(gamma2(&one, GammaMethod::GreedyFfp).unwrap().value, 0.0);
        assert_eq!(gamma2(&one, GammaMethod::Exhaustive).unwrap().value, 0.0);
        assert_eq!(dudley_sum(&one), 0.0);

        let delta = 2.5;
        let two = FiniteMetricSpace::new(2, vec![0.0, delta, delta, 0.0]).unwrap();
        let seq = build_admissible_sequence(&two);
        assert_eq!(seq.levels.len(), 2);
        assert_eq!(seq.levels[0].len(), 1);
        assert_eq!(seq.levels[1].len(), 2);
        assert_eq!(gamma2(&two, GammaMethod::GreedyFfp).unwrap().value, delta);
        assert_eq!(gamma2(&two, GammaMethod::Exhaustive).unwrap().value, delta);
        assert_eq!(dudley_sum(&two), delta);
    }

    #[test]
    fn capacities() {
        assert_eq!(level_capacity(0), 1);
        assert_eq!(level_capacity(1), 4);
        assert_eq!(level_capacity(2), 16);
        assert_eq!(level_capacity(3), 256);
        assert_eq!(level_capacity(5), 1usize.checked_shl(32).unwrap_or(usize::MAX));
        assert_eq!(level_capacity(9), usize::MAX);
    }

    #[test]
    fn exhaustive_rejects_large_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = random_cloud(&mut rng, 7, 2);
        assert!(matches!(gamma2(&s, GammaMethod::Exhaustive), Err(Error::UnsupportedSize(_))));
    }

    #[test]
    fn exhaustive_below_greedy_below_dudley() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = random_cloud(&mut rng, 6, 3);
            let ex = gamma2(&s, GammaMethod::Exhaustive).unwrap();
            let gr = gamma2(&s, GammaMethod::GreedyFfp).unwrap();
            ex.sequence.validate(6).unwrap();
            gr.sequence.validate(6).unwrap();
            assert!((ex.sequence.chaining_sum(&s) - ex.value).abs() < 1e-15);
            assert!(ex.value <= gr.value + 1e-12);
            assert!(gr.value <= dudley_sum(&s) + 1e-12);
        }
    }

    #[test]
    fn exhaustive_under_adding_points() {
        // Nets must live inside the space, so an added point can lower gamma_2
        // (a midpoint halves a two-point space); projecting nets onto a subset
        // loses at most a factor 2.
        let pair = FiniteMetricSpace::new(2, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        let with_mid = euclidean(&[vec![0.0], vec![2.0], vec![1.0]]);
        assert_eq!(gamma2(&pair, GammaMethod::Exhaustive).unwrap().value, 2.0);
        assert_eq!(gamma2(&with_mid, GammaMethod::Exhaustive).unwrap().value, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let s = random_cloud(&mut rng, 6, 2);
            let full = gamma2(&s, GammaMethod::Exhaustive).unwrap().value;
            for drop in 0..6 {
                let keep: Vec<usize> = (0..6).filter(|&i| i != drop).collect();
                let sub = gamma2(&s.subspace(&keep).unwrap(), GammaMethod::Exhaustive).unwrap().value;
                assert!(sub <= 2.0 * full + 1e-12, "{sub} > 2 * {full}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_cloud(&mut rng, 5, 2).with_labels(vec![vec![0.0]; 5]).unwrap();
        let back: FiniteMetricSpace = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let seq = build_admissible_sequence(&s);
        let json = serde_json::to_string(&seq).unwrap();
        assert_eq!(serde_json::from_str::<AdmissibleSequence>(&json).unwrap(), seq);
        assert!(serde_json::from_str::<FiniteMetricSpace>(r#"{"n_points":2,"distances":[0,1,3,0]}"#).is_err());
    }

    #[test]
    fn validator_catches_bad_sequences() {
        let bad = AdmissibleSequence { levels: vec![vec![0, 1], vec![0, 1]], final_level: 1 };
        assert!(bad.validate(2).is_err());
        let not_nested = AdmissibleSequence { levels: vec![vec![0], vec![1, 2], vec![0, 1, 2]], final_level: 2 };
        assert!(not_nested.validate(3).is_err());
        let too_big = AdmissibleSequence { levels: vec![vec![0], (0..5).collect()], final_level: 1 };
        assert!(too_big.validate(5).is_err());
        let short = AdmissibleSequence { levels: vec![vec![0], vec![0, 1]], final_level: 1 };
        assert!(short.validate(3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn greedy_sequences_are_admissible(seed in 0u64..10_000, n in 1usize..300, d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_cloud(&mut rng, n, d);
            let g = gamma2(&s, GammaMethod::GreedyFfp).unwrap();
            g.sequence.validate(n).unwrap();
            prop_assert!(g.value <= dudley_sum(&s) + 1e-9);
        }

        #[test]
        fn gamma2_scales_linearly(seed in 0u64..10_000, t in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_cloud(&mut rng, 6, 2);
            let st = s.scaled(t).unwrap();
            for m in [GammaMethod::GreedyFfp, GammaMethod::Exhaustive] {
                let a = gamma2(&s, m).unwrap().value * t;
                let b = gamma2(&st, m).unwrap().value;
                prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }
}

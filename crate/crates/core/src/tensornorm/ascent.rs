//! Projected gradient ascent on the unit sphere with backtracking.

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm, normalize};

/// Smooth function on `R^d` maximized over the unit sphere.
pub(crate) trait SphereObjective {
    fn value(&self, v: &[f64]) -> f64;
    fn value_and_gradient(&self, v: &[f64]) -> (f64, Vec<f64>);
}

/// Negation wrapper used for the lower branch.
pub(crate) struct Signed<'a, F: SphereObjective> {
    pub inner: &'a F,
    pub sign: f64,
}

impl<F: SphereObjective> SphereObjective for Signed<'_, F> {
    fn value(&self, v: &[f64]) -> f64 {
        self.sign * self.inner.value(v)
    }

    fn value_and_gradient(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let (f, mut g) = self.inner.value_and_gradient(v);
        g.iter_mut().for_each(|x| *x *= self.sign);
        (self.sign * f, g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AscentParams {
    pub max_iterations: usize,
    /// Stop once an accepted step moves the iterate less than this.
    pub convergence_tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub sufficient_increase: f64,
}

impl Default for AscentParams {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            convergence_tol: 1e-10,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_increase: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AscentOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Armijo backtracking along the retraction `v -> (v + t g) / |v + t g|`.
///
/// The trial step of each iteration starts at twice the last accepted step
/// (the first iteration uses `initial_step`), so flat objectives are not
/// throttled by a fixed unit step.
pub(crate) fn ascend<F: SphereObjective>(f: &F, start: &[f64], params: &AscentParams) -> AscentOutcome {
    let mut v = start.to_vec();
    normalize(&mut v);
    let (mut value, mut grad) = f.value_and_gradient(&v);
    let mut step = params.initial_step;
    let mut cand = vec![0.0; v.len()];
    let mut trial = vec![0.0; v.len()];
    for it in 0..params.max_iterations {
        let radial = dot(&grad, &v);
        let tangent: Vec<f64> = grad.iter().zip(&v).map(|(g, x)| g - radial * x).collect();
        let tnorm2 = dot(&tangent, &tangent);
        if tnorm2 == 0.0 || !tnorm2.is_finite() {
            return AscentOutcome { point: v, value, iterations: it, converged: tnorm2 == 0.0 };
        }
        let tnorm = tnorm2.sqrt();
        let mut t = step;
        let accepted = loop {
            for ((c, x), g) in cand.iter_mut().zip(&v).zip(&tangent) {
                *c = x + t * g;
            }
            normalize(&mut cand);
            let fc = f.value(&cand);
            if fc >= value + params.sufficient_increase * t * tnorm2 {
                break Some(fc);
            }
            t *= params.shrink;
            // The retraction can no longer move the point by more than the tolerance.
            if t * tnorm < params.convergence_tol * 1e-2 {
                break None;
            }
        };
        let Some(mut new_value) = accepted else {
            return AscentOutcome { point: v, value, iterations: it + 1, converged: true };
        };
        // Keep shrinking while that strictly helps; damps zig-zag across ridges.
        loop {
            let ts = t * params.shrink;
            for ((c, x), g) in trial.iter_mut().zip(&v).zip(&tangent) {
                *c = x + ts * g;
            }
            normalize(&mut trial);
            let ft = f.value(&trial);
            if ft <= new_value {
                break;
            }
            new_value = ft;
            t = ts;
            std::mem::swap(&mut cand, &mut trial);
        }
        let moved = cand.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        std::mem::swap(&mut v, &mut cand);
        step = (2.0 * t).min(1e12);
        if moved < params.convergence_tol {
            let value = f.value(&v);
            return AscentOutcome { point: v, value, iterations: it + 1, converged: true };
        }
        let (nv, ng) = f.value_and_gradient(&v);
        debug_assert!(nv >= new_value - 1e-9 * new_value.abs().max(1.0));
        value = nv;
        grad = ng;
    }
    debug_assert!((norm(&v) - 1.0).abs() < 1e-12);
    AscentOutcome { point: v, value, iterations: params.max_iterations, converged: false }
}

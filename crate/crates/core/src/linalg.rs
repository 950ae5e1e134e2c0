//! Small dense helpers shared by the solvers.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: &mut [f64]) -> f64 {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Flips `v` so that its first nonzero coordinate is positive.
pub(crate) fn canonicalize(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| **x != 0.0) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Row-major symmetric matrix.
#[derive(Debug, Clone)]
pub(crate) struct SymMatrix {
    pub n: usize,
    pub a: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, x: f64) {
        self.a[i * self.n + j] = x;
    }

    /// Eigenpairs by cyclic Jacobi rotations. Eigenvectors are the columns of the
    /// returned row-major matrix, paired with the eigenvalue list.
    pub fn jacobi_eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n;
        let mut m = self.clone();
        let mut v = SymMatrix::zeros(n);
        for i in 0..n {
            v.set(i, i, 1.0);
        }
        let scale: f64 = m.a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += m.get(i, j).powi(2);
                }
            }
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m.get(p, q);
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let app = m.get(p, p);
                    let aqq = m.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = m.get(k, p);
                        let akq = m.get(k, q);
                        m.set(k, p, c * akp - s * akq);
                        m.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = m.get(p, k);
                        let aqk = m.get(q, k);
                        m.set(p, k, c * apk - s * aqk);
                        m.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let values = (0..n).map(|i| m.get(i, i)).collect();
        let vectors = (0..n).map(|j| (0..n).map(|i| v.get(i, j)).collect()).collect();
        (values, vectors)
    }
}

/// `N^-1 sum_i x_i x_i^T` of row-major data.
pub(crate) fn second_moment_matrix(data: &[f64], n: usize, d: usize) -> SymMatrix {
    let mut m = SymMatrix::zeros(d);
    for row in data.chunks_exact(d) {
        for i in 0..d {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let out = &mut m.a[i * d..(i + 1) * d];
            for (o, rj) in out[i..].iter_mut().zip(&row[i..]) {
                *o += ri * rj;
            }
        }
    }
    let inv = 1.0 / n as f64;
    for i in 0..d {
        for j in i..d {
            let x = m.a[i * d + j] * inv;
            m.a[i * d + j] = x;
            m.a[j * d + i] = x;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_eigenpairs() {
        let mut m = SymMatrix::zeros(3);
        let vals = [[4.0, 1.0, -2.0], [1.0, 3.0, 0.5], [-2.0, 0.5, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                m.set(i, j, vals[i][j]);
            }
        }
        let (lam, vecs) = m.jacobi_eigen();
        for (l, v) in lam.iter().zip(&vecs) {
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| vals[i][j] * v[j]).sum();
                assert!((av - l * v[i]).abs() < 1e-12);
            }
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
        let trace: f64 = lam.iter().sum();
        assert!((trace - 8.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_sign() {
        let mut v = vec![0.0, -1.0, 2.0];
        canonicalize(&mut v);
        assert_eq!(v, vec![0.0, 1.0, -2.0]);
    }
}

//! Soft dynamic time warping and its expected alignment.
//!
//! The accumulated matrix follows
//! `r[i,j] = Δ[i,j] + softmin_γ(r[i-1,j-1], r[i-1,j], r[i,j-1])`
//! with `softmin_γ(a) = -γ log Σ exp(-a/γ)`, evaluated relative to the
//! minimum so no exponent is ever positive. The forward pass keeps, for
//! every cell, the Gibbs weights of its three predecessors; the expected
//! alignment `E = ∂r[m,n]/∂Δ` is then a reverse sweep over those weights.
//!
//! The partition function `Z` never appears explicitly: `r[m,n]` is
//! `-γ log Z`, and the weights are ratios of partial sums of `Z`.

use crate::error::{Error, Result};

/// Dense row-major matrix used for cost, alignment and penalty matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Pairwise squared differences `Δ[i,j] = (ŷ_i − y*_j)²`.
pub type CostMatrix = Matrix;

pub fn squared_cost(pred: &[f64], target: &[f64]) -> CostMatrix {
    Matrix::from_fn(pred.len(), target.len(), |i, j| (pred[i] - target[j]).powi(2))
}

/// `Ω(h,j) = (h − j)² / k²`.
pub fn omega_squared(k: usize) -> Matrix {
    let k2 = (k * k) as f64;
    Matrix::from_fn(k, k, |h, j| (h as f64 - j as f64).powi(2) / k2)
}

// predecessor slots in the per-cell weight triple
const DIAG: usize = 0;
const UP: usize = 1;
const LEFT: usize = 2;

/// Forward state of one soft-DTW evaluation.
#[derive(Clone, Debug)]
pub struct AlignmentStats {
    m: usize,
    n: usize,
    gamma: f64,
    /// `(m+1) × (n+1)` accumulated costs with the infinite border.
    r: Vec<f64>,
    /// Gibbs weights of (diag, up, left) predecessors for cells `1..=m × 1..=n`.
    weights: Vec<[f64; 3]>,
}

impl AlignmentStats {
    pub fn value(&self) -> f64 {
        self.r[self.m * (self.n + 1) + self.n]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Accumulated cost of the prefix ending at `(i, j)` (0-based).
    pub fn accumulated(&self, i: usize, j: usize) -> f64 {
        self.r[(i + 1) * (self.n + 1) + j + 1]
    }

    fn w(&self, i: usize, j: usize) -> &[f64; 3] {
        &self.weights[(i - 1) * self.n + (j - 1)]
    }
}

/// Soft-DTW value and forward state for cost matrix `delta`.
pub fn soft_dtw(delta: &CostMatrix, gamma: f64) -> Result<AlignmentStats> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!(
            "soft-DTW smoothing must be positive, got {gamma}"
        )));
    }
    let (m, n) = (delta.rows(), delta.cols());
    if m == 0 || n == 0 {
        return Err(Error::Contract("soft-DTW needs non-empty sequences".into()));
    }
    let w = n + 1;
    let mut r = vec![f64::INFINITY; (m + 1) * w];
    r[0] = 0.0;
    let mut weights = vec![[0.0; 3]; m * n];
    for i in 1..=m {
        for j in 1..=n {
            let preds = [r[(i - 1) * w + j - 1], r[(i - 1) * w + j], r[i * w + j - 1]];
            let min = preds.iter().copied().fold(f64::INFINITY, f64::min);
            let mut e = [0.0; 3];
            for (slot, &p) in e.iter_mut().zip(&preds) {
                if p.is_finite() {
                    *slot = (-(p - min) / gamma).exp();
                }
            }
            let total: f64 = e.iter().sum();
            let softmin = min - gamma * total.ln();
            for slot in &mut e {
                *slot /= total;
            }
            weights[(i - 1) * n + j - 1] = e;
            r[i * w + j] = delta.get(i - 1, j - 1) + softmin;
        }
    }
    Ok(AlignmentStats {
        m,
        n,
        gamma,
        r,
        weights,
    })
}

/// Expected alignment `E = ∇_Δ soft-DTW`: the probability that a path
/// drawn from the Gibbs distribution at temperature γ visits each cell.
pub fn expected_path(stats: &AlignmentStats) -> Matrix {
    let (m, n) = (stats.m, stats.n);
    // padded with a zero border on the far side
    let mut e = vec![0.0; (m + 2) * (n + 2)];
    let w = n + 2;
    for i in (1..=m).rev() {
        for j in (1..=n).rev() {
            let v = if i == m && j == n {
                1.0
            } else {
                let mut acc = 0.0;
                if i < m && j < n {
                    acc += e[(i + 1) * w + j + 1] * stats.w(i + 1, j + 1)[DIAG];
                }
                if i < m {
                    acc += e[(i + 1) * w + j] * stats.w(i + 1, j)[UP];
                }
                if j < n {
                    acc += e[i * w + j + 1] * stats.w(i, j + 1)[LEFT];
                }
                acc
            };
            e[i * w + j] = v;
        }
    }
    Matrix::from_fn(m, n, |i, j| e[(i + 1) * w + j + 1])
}

/// `⟨E, Ω⟩`.
pub fn temporal_loss(expected: &Matrix, omega: &Matrix) -> Result<f64> {
    if expected.rows() != omega.rows() || expected.cols() != omega.cols() {
        return Err(Error::shape(
            "temporal_loss",
            &[expected.rows(), expected.cols()],
            &[omega.rows(), omega.cols()],
        ));
    }
    Ok(expected.dot(omega))
}

/// Directional derivative of the expected alignment along `direction`.
///
/// Returns `(⟨E, D⟩, E, H·D)` where `H` is the Hessian of soft-DTW w.r.t.
/// the cost matrix. Since `H` is symmetric, `H·D` is also the gradient of
/// `⟨E, D⟩` w.r.t. `Δ`. Computed by pushing the tangent `D` through the
/// forward recursion and then through the reverse sweep.
pub fn expected_path_tangent(stats: &AlignmentStats, direction: &Matrix) -> (f64, Matrix, Matrix) {
    let (m, n, gamma) = (stats.m, stats.n, stats.gamma);
    let w = n + 1;
    // forward tangent of r
    let mut dr = vec![0.0; (m + 1) * w];
    // tangent of each cell's softmin value
    let mut ds = vec![0.0; m * n];
    for i in 1..=m {
        for j in 1..=n {
            let wt = stats.w(i, j);
            let preds = [dr[(i - 1) * w + j - 1], dr[(i - 1) * w + j], dr[i * w + j - 1]];
            let s: f64 = wt.iter().zip(&preds).map(|(a, b)| a * b).sum();
            ds[(i - 1) * n + j - 1] = s;
            dr[i * w + j] = direction.get(i - 1, j - 1) + s;
        }
    }
    // d weight of predecessor slot `k` of cell (i, j)
    let dweight = |i: usize, j: usize, k: usize| -> f64 {
        let pred = match k {
            DIAG => dr[(i - 1) * w + j - 1],
            UP => dr[(i - 1) * w + j],
            _ => dr[i * w + j - 1],
        };
        stats.w(i, j)[k] * (ds[(i - 1) * n + j - 1] - pred) / gamma
    };

    let pw = n + 2;
    let mut e = vec![0.0; (m + 2) * pw];
    let mut de = vec![0.0; (m + 2) * pw];
    for i in (1..=m).rev() {
        for j in (1..=n).rev() {
            let (v, dv) = if i == m && j == n {
                (1.0, 0.0)
            } else {
                let mut acc = 0.0;
                let mut dacc = 0.0;
                let mut child = |ci: usize, cj: usize, k: usize| {
                    let ec = e[ci * pw + cj];
                    let dec = de[ci * pw + cj];
                    let wk = stats.w(ci, cj)[k];
                    acc += ec * wk;
                    dacc += dec * wk + ec * dweight(ci, cj, k);
                };
                if i < m && j < n {
                    child(i + 1, j + 1, DIAG);
                }
                if i < m {
                    child(i + 1, j, UP);
                }
                if j < n {
                    child(i, j + 1, LEFT);
                }
                (acc, dacc)
            };
            e[i * pw + j] = v;
            de[i * pw + j] = dv;
        }
    }
    let expected = Matrix::from_fn(m, n, |i, j| e[(i + 1) * pw + j + 1]);
    let hvp = Matrix::from_fn(m, n, |i, j| de[(i + 1) * pw + j + 1]);
    (dr[m * w + n], expected, hvp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let s = soft_dtw(&squared_cost(&[1.0], &[3.0]), 0.5).unwrap();
        assert_eq!(s.value(), 4.0);
        assert_eq!(expected_path(&s).data(), &[1.0]);
    }

    #[test]
    fn two_step_closed_form() {
        // paths through the 2×2 grid cost {0 (diagonal), 1, 1}
        let delta = squared_cost(&[0.0, 1.0], &[0.0, 1.0]);
        let v1 = soft_dtw(&delta, 1.0).unwrap().value();
        let expect = -(1.0 + 2.0 * (-1.0f64).exp()).ln();
        assert!((v1 - expect).abs() < 1e-12);
        assert!((v1 + 0.551_444_6).abs() < 1e-6);
        let v = soft_dtw(&delta, 0.01).unwrap().value();
        assert!(v <= 0.0 && v.abs() < 1e-40);
    }

    #[test]
    fn identical_sequences_are_non_positive_and_vanish() {
        let y = [0.2, 0.9, 0.4, 0.5];
        let d = squared_cost(&y, &y);
        let mut last = f64::NEG_INFINITY;
        for gamma in [1.0, 0.1, 0.01, 0.001] {
            let v = soft_dtw(&d, gamma).unwrap().value();
            assert!(v <= 0.0);
            assert!(v >= last);
            last = v;
        }
        assert!(last.abs() < 1e-2);
    }

    #[test]
    fn rejects_non_positive_gamma() {
        let d = squared_cost(&[1.0], &[1.0]);
        assert!(soft_dtw(&d, 0.0).is_err());
        assert!(soft_dtw(&d, -1.0).is_err());
    }

    #[test]
    fn expected_path_endpoints_and_range() {
        let d = squared_cost(&[0.1, 0.7, 0.3, 0.9, 0.2], &[0.5, 0.4, 0.8, 0.1, 0.6]);
        let e = expected_path(&soft_dtw(&d, 0.3).unwrap());
        assert!((e.get(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(e.get(4, 4), 1.0);
        assert!(e.data().iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn omega_properties() {
        let o = omega_squared(36);
        for h in 0..36 {
            assert_eq!(o.get(h, h), 0.0);
            for j in 0..36 {
                assert_eq!(o.get(h, j), o.get(j, h));
            }
        }
        let max = o.data().iter().copied().fold(0.0, f64::max);
        assert_eq!(max, 35.0 * 35.0 / (36.0 * 36.0));
    }

    #[test]
    fn temporal_loss_anti_diagonal() {
        let e = Matrix::from_fn(2, 2, |i, j| if i != j { 1.0 } else { 0.0 });
        assert_eq!(temporal_loss(&e, &omega_squared(2)).unwrap(), 0.5);
        assert!(temporal_loss(&e, &omega_squared(3)).is_err());
    }

    #[test]
    fn tangent_value_equals_inner_product() {
        let d = squared_cost(&[0.1, 0.7, 0.3, 0.9], &[0.5, 0.4, 0.8, 0.1]);
        let stats = soft_dtw(&d, 0.2).unwrap();
        let omega = omega_squared(4);
        let (val, e, _) = expected_path_tangent(&stats, &omega);
        assert!((val - e.dot(&omega)).abs() < 1e-12);
        assert_eq!(e, expected_path(&stats));
    }
}

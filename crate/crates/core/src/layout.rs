//! Maps between a parameter vector and the entries of a bilinear parameter
//! matrix it occupies.
//!
//! Every model in the crate scores item `i` for user `t` as `aᵀ Θ b` where
//! `a`, `b` are (possibly rotated or intercept-augmented) item and user
//! vectors and `Θ` is zero outside the entries listed by a [`ParamLayout`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize)>,
}

impl ParamLayout {
    /// Every entry, column-major (`vec(Θ)`).
    pub fn full(rows: usize, cols: usize) -> Self {
        let entries = (0..cols)
            .flat_map(|c| (0..rows).map(move |r| (r, c)))
            .collect();
        Self {
            rows,
            cols,
            entries,
        }
    }

    /// Blocks `Θ₁₁`, `Θ₁₂`, `Θ₂₁` in that order, each column-major; `Θ₂₂`
    /// (rows `r..`, cols `r..`) is dropped.
    pub fn truncated(rows: usize, cols: usize, rank: usize) -> Result<Self> {
        if rank == 0 || rank > rows.min(cols) {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} outside 1..={}",
                rows.min(cols)
            )));
        }
        let mut entries = Vec::with_capacity((rows + cols) * rank - rank * rank);
        let block = |entries: &mut Vec<(usize, usize)>, r0: usize, r1: usize, c0: usize, c1: usize| {
            for c in c0..c1 {
                for r in r0..r1 {
                    entries.push((r, c));
                }
            }
        };
        block(&mut entries, 0, rank, 0, rank);
        block(&mut entries, 0, rank, rank, cols);
        block(&mut entries, rank, rows, 0, rank);
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    /// First column then first row of an intercept-augmented matrix:
    /// `(0,0), (1,0), …, (rows-1,0), (0,1), …, (0,cols-1)`. With item vector
    /// `(1, p)` and user vector `(1, q)` this is the stacked main-effects model.
    pub fn main_effects(rows: usize, cols: usize) -> Self {
        let mut entries: Vec<(usize, usize)> = (0..rows).map(|r| (r, 0)).collect();
        entries.extend((1..cols).map(|c| (0, c)));
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn gather(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.entries.iter().map(|&(r, c)| m[(r, c)]))
    }

    pub fn scatter(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (&(r, c), &v) in self.entries.iter().zip(theta.iter()) {
            m[(r, c)] = v;
        }
        m
    }

    /// `gather(a bᵀ)` without forming the outer product.
    pub fn feature(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.entries.iter().map(|&(r, c)| a[r] * b[c]))
    }

    /// For a symmetric `m` over this layout, returns `A` (`rows × rows`) with
    /// `feature(a, b)ᵀ m feature(a, b) = aᵀ A a` for every `a`. Lets many items
    /// share one `O(len²)` contraction per user.
    pub fn contract_user(&self, m: &DMatrix<f64>, b: &DVector<f64>) -> DMatrix<f64> {
        let n = self.len();
        let weights: Vec<f64> = self.entries.iter().map(|&(_, c)| b[c]).collect();
        let mut out = DMatrix::zeros(self.rows, self.rows);
        for l in 0..n {
            let wl = weights[l];
            if wl == 0.0 {
                continue;
            }
            let rl = self.entries[l].0;
            let col = m.column(l);
            for k in 0..n {
                let rk = self.entries[k].0;
                out[(rk, rl)] += col[k] * weights[k] * wl;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_layout_orders_blocks() {
        let l = ParamLayout::truncated(2, 2, 1).unwrap();
        assert_eq!(l.entries(), &[(0, 0), (0, 1), (1, 0)]);
        let l = ParamLayout::truncated(3, 4, 2).unwrap();
        assert_eq!(l.len(), (3 + 4) * 2 - 4);
        assert!(ParamLayout::truncated(3, 4, 4).is_err());
        assert!(ParamLayout::truncated(3, 4, 0).is_err());
    }

    #[test]
    fn scatter_inverts_gather_on_layout_entries() {
        let m = DMatrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 + 0.5);
        let l = ParamLayout::full(3, 4);
        assert_eq!(l.scatter(&l.gather(&m)), m);
        assert_eq!(l.gather(&m).as_slice(), m.as_slice());
    }

    #[test]
    fn contraction_matches_explicit_quadratic_form() {
        let l = ParamLayout::truncated(4, 3, 2).unwrap();
        let n = l.len();
        let g = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let m = &g * g.transpose();
        let a = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.7]);
        let b = DVector::from_vec(vec![1.1, 0.4, -0.6]);
        let x = l.feature(&a, &b);
        let explicit = (x.transpose() * &m * &x)[(0, 0)];
        let contracted = l.contract_user(&m, &b);
        let via = (a.transpose() * contracted * &a)[(0, 0)];
        assert!((explicit - via).abs() < 1e-10 * explicit.abs().max(1.0));
    }
}

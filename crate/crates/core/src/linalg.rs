//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Frobenius inner product `⟨A, B⟩ = tr(AᵀB)`.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Column-major fill keeps the draw order stable across nalgebra versions.
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(rows, cols, data)
}

pub fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `rows × cols` matrix with orthonormal columns: QR of a Gaussian matrix with
/// the diagonal of `R` made positive.
pub fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(cols <= rows, "cannot draw {cols} orthonormal columns in dimension {rows}");
    let g = gaussian_matrix(rows, cols, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
/// Returns whether a flip happened.
pub(crate) fn canonical_sign(mut v: nalgebra::DVectorViewMut<'_, f64>) -> bool {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if best_abs > 0.0 && v[best] < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

/// Extends the orthonormal columns of `basis` (`n × k`) to a full `n × n`
/// orthonormal matrix whose first `k` columns are exactly `basis`.
pub fn complete_orthonormal(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let k = basis.ncols();
    if k == n {
        return basis.clone();
    }
    let mut out = DMatrix::zeros(n, n);
    out.columns_mut(0, k).copy_from(basis);
    let mut filled = k;
    // Gram-Schmidt (twice) over the standard basis, taking the directions
    // with the largest residual first.
    let mut candidates: Vec<usize> = (0..n).collect();
    while filled < n {
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for &e in &candidates {
            let mut v = DVector::zeros(n);
            v[e] = 1.0;
            for _ in 0..2 {
                for j in 0..filled {
                    let c = out.column(j).dot(&v);
                    v.axpy(-c, &out.column(j), 1.0);
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|b| norm > b.2 + 1e-12) {
                best = Some((e, v, norm));
            }
        }
        let (e, v, norm) = best.expect("candidate directions remain while the basis is incomplete");
        candidates.retain(|&c| c != e);
        out.column_mut(filled).copy_from(&(v / norm));
        filled += 1;
    }
    out
}

/// Full SVD `m = U D Vᵀ` with square orthonormal `U` (`rows × rows`), `V`
/// (`cols × cols`) and singular values in nonincreasing order. Sign convention:
/// each left singular vector has a positive largest-magnitude entry, and the
/// paired right vector follows it.
pub fn full_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let svd = m.clone().svd(true, true);
    let u_thin = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let mut u = DMatrix::zeros(rows, k);
    let mut v = DMatrix::zeros(cols, k);
    let mut d = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u.column_mut(dst).copy_from(&u_thin.column(src));
        v.column_mut(dst).copy_from(&v_t.row(src).transpose());
        d[dst] = sv[src].max(0.0);
    }
    for j in 0..k {
        if canonical_sign(u.column_mut(j)) {
            v.column_mut(j).neg_mut();
        }
    }
    let mut u_full = complete_orthonormal(&u);
    let mut v_full = complete_orthonormal(&v);
    for j in k..rows {
        canonical_sign(u_full.column_mut(j));
    }
    for j in k..cols {
        canonical_sign(v_full.column_mut(j));
    }
    (u_full, d, v_full)
}

/// Rectangular diagonal `rows × cols` matrix with `d` on its diagonal.
pub fn rect_diag(rows: usize, cols: usize, d: &DVector<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for (i, &x) in d.iter().enumerate().take(rows.min(cols)) {
        m[(i, i)] = x;
    }
    m
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// In-place Sherman–Morrison update of `inv = W⁻¹` to `(W + x xᵀ)⁻¹`.
pub fn sherman_morrison_update(inv: &mut DMatrix<f64>, x: &DVector<f64>) {
    let wx = &*inv * x;
    let denom = 1.0 + x.dot(&wx);
    inv.ger(-1.0 / denom, &wx, &wx, 1.0);
    // Keep exact symmetry so quadratic forms stay consistent.
    let n = inv.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = avg;
            inv[(j, i)] = avg;
        }
    }
}

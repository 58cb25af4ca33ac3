//! Dense kernels used by every structured operation.
//!
//! The dense type is [`nalgebra::DMatrix<f64>`], re-exported as
//! [`DenseMatrix`]; storage is column-major and all entries of matrices
//! entering a kernel must be finite. Factorizations are deliberately
//! unpivoted: the structured algorithms rely on the diagonal blocks staying
//! in place, and a breakdown is reported with its pivot index instead of
//! being repaired.

use crate::error::{Error, Result};

pub type DenseMatrix = nalgebra::DMatrix<f64>;
pub type DenseVector = nalgebra::DVector<f64>;

/// Rank-selection rule shared by every truncation site.
///
/// Given singular values in descending order, the kept rank is the number of
/// values strictly above `max(abs_tol, rel_tol * sigma_1)`, capped by
/// `max_rank`. `rel_tol = abs_tol = 0` keeps every nonzero singular value, so
/// truncation becomes exact up to rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_rank: Option<usize>,
}

impl TruncationControl {
    /// Blockwise-relative truncation with tolerance `eps`.
    pub fn relative(eps: f64) -> Self {
        TruncationControl {
            rel_tol: eps,
            abs_tol: 0.0,
            max_rank: None,
        }
    }

    /// Keep everything that is not exactly zero.
    pub fn exact() -> Self {
        TruncationControl {
            rel_tol: 0.0,
            abs_tol: 0.0,
            max_rank: None,
        }
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_rank(mut self, max_rank: usize) -> Self {
        self.max_rank = Some(max_rank);
        self
    }

    /// Scale the relative tolerance by `factor` (used for internal safety
    /// margins where several truncations contribute to one error budget).
    pub fn scaled(mut self, factor: f64) -> Self {
        self.rel_tol *= factor;
        self
    }

    /// Number of singular values to keep from a descending sequence.
    pub fn rank(&self, sigma: &[f64]) -> usize {
        let sigma_1 = sigma.first().copied().unwrap_or(0.0);
        let threshold = self.abs_tol.max(self.rel_tol * sigma_1);
        let mut rank = sigma.iter().take_while(|&&s| s > threshold).count();
        if let Some(cap) = self.max_rank {
            rank = rank.min(cap);
        }
        rank
    }
}

/// Fail on the first non-finite entry.
pub fn check_finite(m: &DenseMatrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Thin QR factorization `M = Q R` with `Q` of shape `m x min(m,n)` and
/// orthonormal columns, `R` upper triangular with non-negative diagonal.
pub fn qr_thin(m: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return (DenseMatrix::zeros(rows, k), DenseMatrix::zeros(k, cols));
    }
    let (mut q, mut r) = m.clone().qr().unpack();
    // Fix the sign convention so repeated factorizations are reproducible.
    for d in 0..k {
        if r[(d, d)] < 0.0 {
            for j in d..cols {
                r[(d, j)] = -r[(d, j)];
            }
            for i in 0..rows {
                q[(i, d)] = -q[(i, d)];
            }
        }
    }
    (q, r)
}

/// The R factor of a thin QR factorization, without forming Q.
pub fn qr_r_factor(m: &DenseMatrix) -> DenseMatrix {
    let (rows, cols) = m.shape();
    if rows.min(cols) == 0 {
        return DenseMatrix::zeros(rows.min(cols), cols);
    }
    let mut r = m.clone().qr().unpack_r();
    for d in 0..r.nrows().min(cols) {
        if r[(d, d)] < 0.0 {
            for j in d..cols {
                r[(d, j)] = -r[(d, j)];
            }
        }
    }
    r
}

/// Truncated singular value decomposition `M ~ U diag(sigma) V^T`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `m x r`, orthonormal columns.
    pub u: DenseMatrix,
    /// Kept singular values, descending.
    pub sigma: Vec<f64>,
    /// `n x r`, orthonormal columns.
    pub v: DenseMatrix,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma)`, the natural left factor of the approximation.
    pub fn left_scaled(&self) -> DenseMatrix {
        let mut m = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            for i in 0..m.nrows() {
                m[(i, j)] *= s;
            }
        }
        m
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.left_scaled() * self.v.transpose()
    }
}

/// SVD truncated by `ctl`. Singular values are returned in descending order
/// regardless of the backend's internal ordering.
pub fn truncated_svd(m: &DenseMatrix, ctl: &TruncationControl) -> Result<TruncatedSvd> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(TruncatedSvd {
            u: DenseMatrix::zeros(rows, 0),
            sigma: Vec::new(),
            v: DenseMatrix::zeros(cols, 0),
        });
    }
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 100_000)
        .ok_or(Error::SvdFailed { rows, cols })?;
    let u_full = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).expect("finite singular values"));
    let sorted: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    let rank = ctl.rank(&sorted);

    let mut u = DenseMatrix::zeros(rows, rank);
    let mut v = DenseMatrix::zeros(cols, rank);
    for (dst, &src) in order.iter().take(rank).enumerate() {
        u.set_column(dst, &u_full.column(src));
        for i in 0..cols {
            v[(i, dst)] = v_t[(src, i)];
        }
    }
    Ok(TruncatedSvd {
        u,
        sigma: sorted[..rank].to_vec(),
        v,
    })
}

/// Unpivoted LR (Doolittle) factorization `A = L R` with unit lower
/// triangular `L` and upper triangular `R`.
pub fn lr_factor(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch {
            op: "lr_factor",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    check_finite(a)?;
    let mut work = a.clone();
    for k in 0..n {
        let pivot = work[(k, k)];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::LrBreakdown { index: k });
        }
        for i in k + 1..n {
            let factor = work[(i, k)] / pivot;
            work[(i, k)] = factor;
            for j in k + 1..n {
                work[(i, j)] -= factor * work[(k, j)];
            }
        }
    }
    let mut l = DenseMatrix::identity(n, n);
    let mut r = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i > j {
                l[(i, j)] = work[(i, j)];
            } else {
                r[(i, j)] = work[(i, j)];
            }
        }
    }
    Ok((l, r))
}

/// Cholesky factorization `A = L L^T` of a symmetric positive definite
/// matrix (lower triangle of `a` is read; symmetry is the caller's
/// responsibility).
pub fn cholesky_factor(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch {
            op: "cholesky_factor",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    check_finite(a)?;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::CholeskyBreakdown {
                index: j,
                value: d,
                context: String::new(),
            });
        }
        let diag = d.sqrt();
        l[(j, j)] = diag;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Triangle {
    Lower,
    Upper,
}

/// Solve `T X = B` with triangular `T`; `unit_diag` treats the diagonal as
/// ones without reading it.
pub fn solve_triangular_left(
    t: &DenseMatrix,
    tri: Triangle,
    unit_diag: bool,
    b: &DenseMatrix,
) -> Result<DenseMatrix> {
    let n = t.nrows();
    if t.ncols() != n || b.nrows() != n {
        return Err(Error::ShapeMismatch {
            op: "solve_triangular_left",
            expected: format!("{n}x{n} and {n}xk"),
            got: format!("{}x{} and {}x{}", t.nrows(), t.ncols(), b.nrows(), b.ncols()),
        });
    }
    let mut x = b.clone();
    for col in 0..x.ncols() {
        match tri {
            Triangle::Lower => {
                for i in 0..n {
                    let mut s = x[(i, col)];
                    for k in 0..i {
                        s -= t[(i, k)] * x[(k, col)];
                    }
                    x[(i, col)] = divide_by_diag(t, i, s, unit_diag)?;
                }
            }
            Triangle::Upper => {
                for i in (0..n).rev() {
                    let mut s = x[(i, col)];
                    for k in i + 1..n {
                        s -= t[(i, k)] * x[(k, col)];
                    }
                    x[(i, col)] = divide_by_diag(t, i, s, unit_diag)?;
                }
            }
        }
    }
    Ok(x)
}

/// Solve `X T = B` with triangular `T`.
pub fn solve_triangular_right(
    t: &DenseMatrix,
    tri: Triangle,
    unit_diag: bool,
    b: &DenseMatrix,
) -> Result<DenseMatrix> {
    let n = t.nrows();
    if t.ncols() != n || b.ncols() != n {
        return Err(Error::ShapeMismatch {
            op: "solve_triangular_right",
            expected: format!("{n}x{n} and kx{n}"),
            got: format!("{}x{} and {}x{}", t.nrows(), t.ncols(), b.nrows(), b.ncols()),
        });
    }
    let mut x = b.clone();
    let cols: Vec<usize> = match tri {
        // X T = B with upper T resolves columns left to right.
        Triangle::Upper => (0..n).collect(),
        Triangle::Lower => (0..n).rev().collect(),
    };
    for &j in &cols {
        let range: Vec<usize> = match tri {
            Triangle::Upper => (0..j).collect(),
            Triangle::Lower => (j + 1..n).collect(),
        };
        for row in 0..x.nrows() {
            let mut s = x[(row, j)];
            for &k in &range {
                s -= x[(row, k)] * t[(k, j)];
            }
            x[(row, j)] = divide_by_diag(t, j, s, unit_diag)?;
        }
    }
    Ok(x)
}

fn divide_by_diag(t: &DenseMatrix, i: usize, s: f64, unit_diag: bool) -> Result<f64> {
    if unit_diag {
        return Ok(s);
    }
    let d = t[(i, i)];
    if d == 0.0 {
        return Err(Error::SingularTriangle { index: i });
    }
    Ok(s / d)
}

/// Work-unit models for the dense kernels, used by the operation counters.
/// The unit is one scalar multiply-add; any consistent convention works for
/// the comparisons the counters feed, these follow the classic flop counts.
pub mod work {
    pub fn matmul(m: usize, k: usize, n: usize) -> f64 {
        (m * k * n) as f64
    }

    pub fn qr(m: usize, n: usize) -> f64 {
        let p = m.min(n);
        2.0 * (m * n * p) as f64
    }

    pub fn svd(m: usize, n: usize) -> f64 {
        let p = m.min(n);
        14.0 * (m * n * p) as f64
    }

    /// Triangular solve of an `n x n` system with `m` right-hand sides.
    pub fn triangular_solve(n: usize, m: usize) -> f64 {
        0.5 * (n * n * m) as f64
    }

    pub fn lr(n: usize) -> f64 {
        (n * n * n) as f64 / 3.0
    }

    pub fn cholesky(n: usize) -> f64 {
        (n * n * n) as f64 / 6.0
    }

    pub fn dense_invert(n: usize) -> f64 {
        (n * n * n) as f64
    }
}

/// Frobenius norm.
pub fn fro_norm(m: &DenseMatrix) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest absolute entry.
pub fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Spectral norm via SVD; intended for small test matrices.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .try_svd(false, false, f64::EPSILON, 100_000)
        .map(|svd| svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b)))
        .unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn qr_of_identity_is_identity() {
        let eye = DenseMatrix::identity(3, 3);
        let (q, r) = qr_thin(&eye);
        assert!((q.clone() - &eye).amax() < 1e-14);
        assert!((r - eye).amax() < 1e-14);
    }

    #[test]
    fn qr_of_three_four_column() {
        let m = DenseMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let (q, r) = qr_thin(&m);
        assert!((r[(0, 0)] - 5.0).abs() < 1e-14);
        assert!((q[(0, 0)] - 0.6).abs() < 1e-14);
        assert!((q[(1, 0)] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        for (rows, cols) in [(7, 4), (4, 7), (5, 5), (1, 3)] {
            let m = random_matrix(rows, cols, 7 * rows as u64 + cols as u64);
            let (q, r) = qr_thin(&m);
            assert!(((&q * &r) - &m).amax() < 1e-12);
            let gram = q.tr_mul(&q);
            assert!((gram - DenseMatrix::identity(q.ncols(), q.ncols())).amax() < 1e-12);
            for d in 0..r.nrows().min(r.ncols()) {
                assert!(r[(d, d)] >= 0.0);
            }
        }
    }

    #[test]
    fn qr_handles_empty_shapes() {
        let (q, r) = qr_thin(&DenseMatrix::zeros(4, 0));
        assert_eq!(q.shape(), (4, 0));
        assert_eq!(r.shape(), (0, 0));
        let (q, r) = qr_thin(&DenseMatrix::zeros(0, 3));
        assert_eq!(q.shape(), (0, 0));
        assert_eq!(r.shape(), (0, 3));
    }

    #[test]
    fn qr_r_factor_matches_qr() {
        let m = random_matrix(6, 4, 11);
        let (_, r) = qr_thin(&m);
        let r_only = qr_r_factor(&m);
        assert!((r - r_only).amax() < 1e-12);
    }

    #[test]
    fn svd_of_diag_3_1_with_half_tolerance_keeps_rank_one() {
        let m = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let svd = truncated_svd(&m, &TruncationControl::relative(0.5)).unwrap();
        assert_eq!(svd.rank(), 1);
        assert!((svd.sigma[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn svd_exact_control_reconstructs() {
        let m = random_matrix(8, 5, 3);
        let svd = truncated_svd(&m, &TruncationControl::exact()).unwrap();
        assert!((svd.reconstruct() - &m).amax() < 1e-12);
        let gram_u = svd.u.tr_mul(&svd.u);
        assert!((gram_u - DenseMatrix::identity(svd.rank(), svd.rank())).amax() < 1e-12);
        let gram_v = svd.v.tr_mul(&svd.v);
        assert!((gram_v - DenseMatrix::identity(svd.rank(), svd.rank())).amax() < 1e-12);
        let mut prev = f64::INFINITY;
        for &s in &svd.sigma {
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn svd_of_zero_matrix_has_rank_zero() {
        let m = DenseMatrix::zeros(4, 3);
        let svd = truncated_svd(&m, &TruncationControl::exact()).unwrap();
        assert_eq!(svd.rank(), 0);
    }

    #[test]
    fn truncation_rule_edge_cases() {
        let ctl = TruncationControl::relative(1e-2);
        assert_eq!(ctl.rank(&[1.0, 0.5, 1e-2, 1e-3]), 2);
        assert_eq!(ctl.rank(&[]), 0);
        assert_eq!(TruncationControl::exact().rank(&[1.0, 0.0]), 1);
        let capped = TruncationControl::exact().with_max_rank(1);
        assert_eq!(capped.rank(&[2.0, 1.0]), 1);
        let abs = TruncationControl::exact().with_abs_tol(0.75);
        assert_eq!(abs.rank(&[2.0, 0.75, 0.5]), 1);
    }

    #[test]
    fn cholesky_hand_example() {
        let a = DenseMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = cholesky_factor(&a).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-14);
        assert!((l[(1, 1)] - 2.0f64.sqrt()).abs() < 1e-14);
        assert_eq!(l[(0, 1)], 0.0);
        assert!(((&l * l.transpose()) - a).amax() < 1e-14);
    }

    #[test]
    fn cholesky_reports_failure_index() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky_factor(&a) {
            Err(Error::CholeskyBreakdown { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected breakdown, got {other:?}"),
        }
    }

    #[test]
    fn lr_hand_example_and_breakdown() {
        let a = DenseMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let (l, r) = lr_factor(&a).unwrap();
        assert!((l[(1, 0)] - 0.5).abs() < 1e-14);
        assert!((r[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((r[(1, 1)] - 2.0).abs() < 1e-14);
        assert!(((&l * &r) - a).amax() < 1e-14);

        let singular = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        match lr_factor(&singular) {
            Err(Error::LrBreakdown { index }) => assert_eq!(index, 0),
            other => panic!("expected breakdown, got {other:?}"),
        }
    }

    #[test]
    fn lr_reconstructs_random_diagonally_dominant() {
        let mut a = random_matrix(6, 6, 5);
        for i in 0..6 {
            a[(i, i)] += 6.0;
        }
        let (l, r) = lr_factor(&a).unwrap();
        assert!(((&l * &r) - a).amax() < 1e-12);
    }

    #[test]
    fn triangular_solves_match_hand_results() {
        let l = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 3.0]);
        let b = DenseMatrix::from_column_slice(2, 1, &[2.0, 7.0]);
        let x = solve_triangular_left(&l, Triangle::Lower, false, &b).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((x[(1, 0)] - 2.0).abs() < 1e-14);

        let u = DenseMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let x = solve_triangular_left(&u, Triangle::Upper, false, &b).unwrap();
        assert!((x[(1, 0)] - 7.0 / 3.0).abs() < 1e-14);

        // X U = B.
        let b_row = DenseMatrix::from_row_slice(1, 2, &[2.0, 7.0]);
        let x = solve_triangular_right(&u, Triangle::Upper, false, &b_row).unwrap();
        let back = &x * &u;
        assert!((back - b_row).amax() < 1e-14);

        let x = solve_triangular_left(&l, Triangle::Lower, true, &b).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((x[(1, 0)] - 5.0).abs() < 1e-14);

        let sing = DenseMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        match solve_triangular_left(&sing, Triangle::Lower, false, &b) {
            Err(Error::SingularTriangle { index }) => assert_eq!(index, 1),
            other => panic!("expected singular triangle, got {other:?}"),
        }
    }

    #[test]
    fn right_solve_matches_left_solve_of_transpose() {
        let mut t = random_matrix(5, 5, 9);
        for i in 0..5 {
            t[(i, i)] = 2.0 + t[(i, i)].abs();
            for j in i + 1..5 {
                t[(i, j)] = 0.0;
            }
        }
        let b = random_matrix(3, 5, 10);
        let x = solve_triangular_right(&t, Triangle::Lower, false, &b).unwrap();
        let x_ref = solve_triangular_left(&t.transpose(), Triangle::Upper, false, &b.transpose())
            .unwrap()
            .transpose();
        assert!((x - x_ref).amax() < 1e-12);
    }

    #[test]
    fn finite_check_reports_position() {
        let mut m = DenseMatrix::zeros(2, 2);
        m[(1, 0)] = f64::NAN;
        match check_finite(&m) {
            Err(Error::NonFinite { row, col }) => {
                assert_eq!((row, col), (1, 0));
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}

//! Complex-matrix substrate: QR with sign-normalized R, Cholesky, Hermitian
//! inverse and singular values. All decompositions used elsewhere in the
//! crate live here.
//!
//! Everything operates on dense row-major `CMatrix` values with `f64`
//! components. The matrices in this problem are tiny (at most a few dozen
//! rows), so the implementations favour accuracy and determinism over
//! asymptotic cleverness: QR is done with Householder reflectors, singular
//! values with one-sided Jacobi.

use num_complex::Complex64;

use crate::{Error, Result};

/// Absolute tolerance on the max-abs entry of factorization residuals.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Rank decisions: a matrix is full rank when its smallest singular value
/// exceeds `rank_tol(largest singular value)`.
pub fn rank_tol(largest_singular_value: f64) -> f64 {
    1e-12 * largest_singular_value
}

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix must be at least 1x1");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Build from real entries (imaginary parts zero).
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let complex: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&complex)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix::from_fn(self.rows, self.cols, |r, c| self[(r, c)] - other[(r, c)])
    }

    pub fn scale(&self, s: Complex64) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, |r, c| s * self[(r, c)])
    }

    /// Submatrix at the given row and column index lists (with repetition
    /// allowed; order taken as given).
    pub fn select(&self, row_idx: &[usize], col_idx: &[usize]) -> CMatrix {
        CMatrix::from_fn(row_idx.len(), col_idx.len(), |r, c| {
            self[(row_idx[r], col_idx[c])]
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Max-abs deviation from being Hermitian.
    pub fn hermitian_residual(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn real_diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)].re)
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Thin QR factorization `F = Q R` with `R` upper triangular and a strictly
/// positive real diagonal. The sign convention makes the factorization
/// unique, which is what lets two independently computed factorizations be
/// compared entry-wise.
///
/// Fails with `RankDeficient` when the smallest singular value of `F` is at
/// or below `rank_tol` of the largest.
pub fn qr_positive(f: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let (n, g) = (f.rows(), f.cols());
    if n < g {
        return Err(Error::BadDimensions(format!(
            "qr_positive needs rows >= cols, got {n}x{g}"
        )));
    }
    let svals = singular_values(f);
    let smax = svals[0];
    let smin = svals[g - 1];
    if smin <= rank_tol(smax) {
        return Err(Error::RankDeficient(format!(
            "smallest singular value {smin:.3e} <= rank tolerance {:.3e}",
            rank_tol(smax)
        )));
    }

    // Householder reflectors, LAPACK-style: after the loop the upper
    // triangle of `a` holds R and (v, tau) pairs encode Q.
    let mut a = f.clone();
    let mut taus = vec![Complex64::new(0.0, 0.0); g];
    let mut vs: Vec<Vec<Complex64>> = Vec::with_capacity(g);
    for k in 0..g {
        let alpha = a[(k, k)];
        let mut tail_sq = 0.0;
        for r in k + 1..n {
            tail_sq += a[(r, k)].norm_sqr();
        }
        let total = (alpha.norm_sqr() + tail_sq).sqrt();
        let mut v = vec![Complex64::new(1.0, 0.0); n - k];
        if total == 0.0 {
            taus[k] = Complex64::new(0.0, 0.0);
            vs.push(v);
            continue;
        }
        let sign = if alpha.norm() > 0.0 {
            alpha / Complex64::new(alpha.norm(), 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        };
        let beta = -sign * total;
        let tau = (beta - alpha) / beta;
        let denom = alpha - beta;
        for r in k + 1..n {
            v[r - k] = a[(r, k)] / denom;
            a[(r, k)] = Complex64::new(0.0, 0.0);
        }
        a[(k, k)] = beta;
        // Apply (I - tau v v^H) to the trailing columns.
        for c in k + 1..g {
            let mut dot = Complex64::new(0.0, 0.0);
            for (off, vi) in v.iter().enumerate() {
                dot += vi.conj() * a[(k + off, c)];
            }
            dot *= tau;
            for (off, vi) in v.iter().enumerate() {
                a[(k + off, c)] -= vi * dot;
            }
        }
        taus[k] = tau;
        vs.push(v);
    }

    // Thin Q: apply reflectors in reverse to the first g columns of I.
    let mut q = CMatrix::zeros(n, g);
    for j in 0..g {
        q[(j, j)] = Complex64::new(1.0, 0.0);
    }
    for k in (0..g).rev() {
        let tau = taus[k];
        if tau.norm() == 0.0 {
            continue;
        }
        let v = &vs[k];
        for c in 0..g {
            let mut dot = Complex64::new(0.0, 0.0);
            for (off, vi) in v.iter().enumerate() {
                dot += vi.conj() * q[(k + off, c)];
            }
            dot *= tau;
            for (off, vi) in v.iter().enumerate() {
                q[(k + off, c)] -= vi * dot;
            }
        }
    }

    // R is the top g x g upper triangle of the reduced matrix.
    let mut r = CMatrix::zeros(g, g);
    for i in 0..g {
        for j in i..g {
            r[(i, j)] = a[(i, j)];
        }
    }

    // Sign normalization: multiply row j of R by the conjugate phase of its
    // diagonal entry (and column j of Q by the phase) so diag(R) is real
    // and strictly positive.
    for j in 0..g {
        let d = r[(j, j)];
        let mag = d.norm();
        if mag == 0.0 {
            return Err(Error::RankDeficient(format!("zero pivot in column {j}")));
        }
        let phase = d / mag;
        let conj_phase = phase.conj();
        for c in j..g {
            r[(j, c)] *= conj_phase;
        }
        r[(j, j)] = Complex64::new(mag, 0.0);
        for rr in 0..n {
            q[(rr, j)] *= phase;
        }
    }
    Ok((q, r))
}

/// Upper Cholesky factor of a Hermitian positive-definite matrix:
/// `M = R^H R` with `R` upper triangular and positive real diagonal.
pub fn cholesky_upper(m: &CMatrix) -> Result<CMatrix> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::BadDimensions(format!(
            "cholesky needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let herm = m.hermitian_residual();
    if herm > RESIDUAL_TOL * m.max_abs().max(1.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "matrix is not Hermitian (residual {herm:.3e})"
        )));
    }
    let mut r = CMatrix::zeros(n, n);
    for i in 0..n {
        let mut s = m[(i, i)].re;
        for k in 0..i {
            s -= r[(k, i)].norm_sqr();
        }
        if s <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!("pivot {i} is {s:.3e}")));
        }
        let rii = s.sqrt();
        r[(i, i)] = Complex64::new(rii, 0.0);
        for j in i + 1..n {
            let mut t = m[(i, j)];
            for k in 0..i {
                t -= r[(k, i)].conj() * r[(k, j)];
            }
            r[(i, j)] = t / rii;
        }
    }
    Ok(r)
}

/// Inverse of an upper-triangular matrix by back substitution.
fn invert_upper_triangular(r: &CMatrix) -> CMatrix {
    let n = r.rows();
    let mut u = CMatrix::zeros(n, n);
    for j in (0..n).rev() {
        u[(j, j)] = Complex64::new(1.0, 0.0) / r[(j, j)];
        for i in (0..j).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for k in i + 1..=j {
                s += r[(i, k)] * u[(k, j)];
            }
            u[(i, j)] = -s / r[(i, i)];
        }
    }
    u
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
/// The result is exactly Hermitian (it is symmetrized after the solve).
pub fn hermitian_inverse(m: &CMatrix) -> Result<CMatrix> {
    let r = cholesky_upper(m)?;
    let u = invert_upper_triangular(&r);
    // M = R^H R  =>  M^{-1} = U U^H with U = R^{-1}.
    let inv = u.mul(&u.adjoint());
    let n = inv.rows();
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = Complex64::new(inv[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = (inv[(i, j)] + inv[(j, i)].conj()) * 0.5;
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    Ok(out)
}

/// Singular values in nonincreasing order, computed by one-sided Jacobi.
/// Length is `min(rows, cols)`; values are nonnegative.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    // Work on the tall orientation so columns carry the singular values.
    let mut b = if m.rows() >= m.cols() {
        m.clone()
    } else {
        m.adjoint()
    };
    let (rows, cols) = (b.rows(), b.cols());
    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = Complex64::new(0.0, 0.0);
                for r in 0..rows {
                    let bp = b[(r, p)];
                    let bq = b[(r, q)];
                    app += bp.norm_sqr();
                    aqq += bq.norm_sqr();
                    apq += bp.conj() * bq;
                }
                let off = apq.norm();
                if off <= eps * (app * aqq).sqrt() || off == 0.0 {
                    continue;
                }
                rotated = true;
                // Factor out the phase so the 2x2 Gram block is real, then
                // apply the classic symmetric Jacobi rotation.
                let phase = apq / off;
                let tau = (aqq - app) / (2.0 * off);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                for r in 0..rows {
                    let bp = b[(r, p)];
                    let bq = b[(r, q)] * phase.conj();
                    b[(r, p)] = bp * cs - bq * sn;
                    b[(r, q)] = (bp * sn + bq * cs) * phase;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut svals: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| b[(r, c)].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    svals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    svals
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn seeded_complex(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn qr_of_orthonormal_input_is_identity_r() {
        let f = CMatrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let (q, r) = qr_positive(&f).unwrap();
        assert!(q.sub(&f).max_abs() < 1e-14);
        assert!(r.sub(&CMatrix::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn qr_of_scaled_axes() {
        let f = CMatrix::from_real_rows(&[vec![2.0, 0.0], vec![0.0, 0.0], vec![0.0, 3.0]]);
        let (q, r) = qr_positive(&f).unwrap();
        assert!((r[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((r[(1, 1)].re - 3.0).abs() < 1e-14);
        assert!(r[(0, 1)].norm() < 1e-14);
        assert!((q[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((q[(2, 1)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn qr_reconstructs_random_complex_input() {
        let f = seeded_complex(6, 2, 42);
        let (q, r) = qr_positive(&f).unwrap();
        let resid = q.mul(&r).sub(&f).max_abs();
        assert!(resid < 1e-10, "reconstruction residual {resid}");
        let ortho = q.adjoint().mul(&q).sub(&CMatrix::identity(2)).max_abs();
        assert!(ortho < 1e-10, "orthogonality residual {ortho}");
        for j in 0..2 {
            assert!(r[(j, j)].im == 0.0 && r[(j, j)].re > 0.0);
        }
    }

    #[test]
    fn qr_is_deterministic() {
        let f = seeded_complex(8, 3, 7);
        let (q1, r1) = qr_positive(&f).unwrap();
        let (q2, r2) = qr_positive(&f).unwrap();
        assert_eq!(q1.entries(), q2.entries());
        assert_eq!(r1.entries(), r2.entries());
    }

    #[test]
    fn qr_rejects_rank_deficient_input() {
        // Second column is a multiple of the first.
        let f = CMatrix::from_real_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert!(matches!(qr_positive(&f), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let r = cholesky_upper(&CMatrix::identity(2)).unwrap();
        assert!(r.sub(&CMatrix::identity(2)).max_abs() < 1e-14);

        let m = CMatrix::from_real_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]);
        let r = cholesky_upper(&m).unwrap();
        assert!((r[(0, 0)].re - 2.0).abs() < 1e-14);
        assert!((r[(1, 1)].re - 3.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_reconstructs_random_gram_matrix() {
        let x = seeded_complex(4, 3, 11);
        let m = x.adjoint().mul(&x);
        let r = cholesky_upper(&m).unwrap();
        let resid = r.adjoint().mul(&r).sub(&m).max_abs();
        assert!(resid < 1e-10, "residual {resid}");
        for i in 0..3 {
            for j in 0..i {
                assert_eq!(r[(i, j)], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let m = CMatrix::from_real_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            cholesky_upper(&m),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn hermitian_inverse_examples() {
        let inv = hermitian_inverse(&CMatrix::identity(3)).unwrap();
        assert!(inv.sub(&CMatrix::identity(3)).max_abs() < 1e-14);

        let m = CMatrix::from_real_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let inv = hermitian_inverse(&m).unwrap();
        assert!((inv[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((inv[(1, 1)].re - 0.25).abs() < 1e-14);
    }

    #[test]
    fn hermitian_inverse_of_random_spd() {
        let x = seeded_complex(8, 6, 5);
        let m = x.adjoint().mul(&x);
        let inv = hermitian_inverse(&m).unwrap();
        let resid = m.mul(&inv).sub(&CMatrix::identity(6)).max_abs();
        assert!(resid < 1e-10, "residual {resid}");
        assert!(inv.hermitian_residual() == 0.0);
    }

    #[test]
    fn singular_values_of_identity_and_rank_deficient() {
        assert_eq!(singular_values(&CMatrix::identity(3)), vec![1.0, 1.0, 1.0]);
        let m = CMatrix::from_real_rows(&[vec![3.0, 0.0], vec![0.0, 0.0]]);
        let s = singular_values(&m);
        assert!((s[0] - 3.0).abs() < 1e-14);
        assert!(s[1].abs() < 1e-14);
    }

    #[test]
    fn singular_values_match_qr_determinant_route() {
        // |det| equals both the product of singular values and the product
        // of R diagonals from a QR factorization; two independent routes.
        let m = seeded_complex(5, 5, 23);
        let s = singular_values(&m);
        let (_, r) = qr_positive(&m).unwrap();
        let prod_s: f64 = s.iter().product();
        let prod_r: f64 = r.real_diag().iter().product();
        assert!(
            (prod_s - prod_r).abs() < 1e-10 * prod_r.abs().max(1.0),
            "{prod_s} vs {prod_r}"
        );
    }

    #[test]
    fn singular_values_of_wide_matrix() {
        let m = seeded_complex(3, 7, 9);
        let s = singular_values(&m);
        assert_eq!(s.len(), 3);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let st = singular_values(&m.adjoint());
        for (a, b) in s.iter().zip(&st) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

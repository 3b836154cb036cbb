//! Small dense real linear algebra for the M×M symmetric matrices the
//! analysis works with: construction, products, eigendecomposition via
//! cyclic Jacobi rotations, Cholesky factorization, and Gaussian
//! elimination. Matrices here are tiny (M is the adaptive filter length,
//! typically 4), so everything is dense row-major with no attempt at
//! blocking or sparsity.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Jacobi sweep budget; the method converges quadratically once the
/// off-diagonal mass is small, and tiny matrices need far fewer sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Minimum acceptable pivot magnitude in `solve_linear`. A pivot below this
/// signals a (numerically) singular system; for the steady-state solve that
/// doubles as a stability-violation detector.
pub const SOLVE_PIVOT_MIN: f64 = 1e-12;

/// Dense real matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major entries, validating shape and that
    /// every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Validation(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation(
                "matrix entries must be finite".to_string(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Outer product u·vᵀ.
    pub fn outer(u: &[T], v: &[T]) -> Self {
        let mut m = Self::zeros(u.len(), v.len());
        for i in 0..u.len() {
            for j in 0..v.len() {
                m.set(i, j, u[i] * v[j]);
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Matrix product self·rhs. Dimension mismatch is a programming error.
    pub fn mul(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.set(i, j, out.get(i, j) + a * rhs.get(k, j));
                }
            }
        }
        out
    }

    /// Matrix-vector product self·v.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// Transposed matrix-vector product selfᵀ·v, without materializing the
    /// transpose.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "matrix-vector dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for j in 0..self.cols {
                out[j] = out[j] + self.get(i, j) * vi;
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, factor: T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }

    /// Quadratic form vᵀ·self·v.
    pub fn quad_form(&self, v: &[T]) -> T {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.rows, v.len());
        let mut sum = T::zero();
        for i in 0..self.rows {
            let mut row = T::zero();
            for j in 0..self.cols {
                row = row + self.get(i, j) * v[j];
            }
            sum = sum + v[i] * row;
        }
        sum
    }

    /// Largest absolute asymmetry |a_ij - a_ji|; zero for non-square input
    /// never applies (caller checks squareness first).
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Dot product of two equal-length vectors.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "dot product dimension mismatch");
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Squared Euclidean norm.
pub fn norm_sq<T: Scalar>(v: &[T]) -> T {
    dot(v, v)
}

/// Row-vector times matrix, vᵀ·m, returned as a plain vector.
pub fn row_mul<T: Scalar>(v: &[T], m: &Matrix<T>) -> Vec<T> {
    m.tr_mul_vec(v)
}

/// First-order autoregressive (Toeplitz) covariance: entry (i,j) = a^|i-j|.
///
/// With a = 0 this is the identity (white input); |a| must be below 1 for
/// the matrix to be a valid covariance.
pub fn toeplitz_ar1<T: Scalar>(m: usize, a: T) -> Result<Matrix<T>> {
    if m == 0 {
        return Err(Error::Validation("matrix size must be >= 1".to_string()));
    }
    if !(a.abs() < T::one()) {
        return Err(Error::Validation(format!(
            "correlation factor must satisfy |a| < 1, got {a}"
        )));
    }
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let lag = i.abs_diff(j);
            out.set(i, j, a.powi(lag as i32));
        }
    }
    Ok(out)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending and the matrix whose columns are
/// the matching orthonormal eigenvectors, so that a = H·diag(λ)·Hᵀ.
/// Convergence is declared when the off-diagonal Frobenius norm falls below
/// `tol` relative to the full Frobenius norm; `tol` also bounds the accepted
/// input asymmetry (relative to the largest entry magnitude).
pub fn jacobi_eig<T: Scalar>(a: &Matrix<T>, tol: T) -> Result<(Vec<T>, Matrix<T>)> {
    if !a.is_square() {
        return Err(Error::Validation(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !(tol > T::zero()) {
        return Err(Error::Validation("tolerance must be positive".to_string()));
    }
    let scale = a.max_abs().max(T::one());
    if a.asymmetry() > tol * scale {
        return Err(Error::Validation(
            "matrix is not symmetric within tolerance".to_string(),
        ));
    }

    let n = a.rows();
    let mut work = a.clone();
    let mut vectors = Matrix::identity(n);

    let full_norm = work.frobenius_norm();
    if full_norm == T::zero() {
        // Zero matrix: eigenvalues all zero, eigenvectors the identity.
        return Ok((vec![T::zero(); n], vectors));
    }

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diag_norm(&work) <= tol * full_norm {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                rotate(&mut work, &mut vectors, p, q);
            }
        }
    }
    if !converged && off_diag_norm(&work) > tol * full_norm {
        return Err(Error::Convergence {
            routine: "jacobi_eig",
            budget: JACOBI_MAX_SWEEPS,
        });
    }

    // Sort descending by eigenvalue, permuting eigenvector columns along.
    let mut order: Vec<usize> = (0..n).collect();
    let diag = work.diag();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));
    let eigenvalues: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let mut sorted_vectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            sorted_vectors.set(row, new_col, vectors.get(row, old_col));
        }
    }
    Ok((eigenvalues, sorted_vectors))
}

fn off_diag_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut sum = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let x = a.get(i, j);
            sum = sum + x * x;
        }
    }
    (sum + sum).sqrt()
}

/// One Jacobi rotation annihilating the (p,q) entry of `a`, accumulated
/// into `v`. Classic two-sided plane rotation for symmetric matrices.
fn rotate<T: Scalar>(a: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == T::zero() {
        return;
    }
    let half = T::of(0.5);
    let theta = half * (a.get(q, q) - a.get(p, p)) / apq;
    // tan of the rotation angle, the smaller root for stability; for huge
    // theta the exact expression underflows, so fall back to 1/(2 theta)
    let t = if theta.abs() > T::one() / T::epsilon() {
        half / theta
    } else {
        let sign = if theta < T::zero() { -T::one() } else { T::one() };
        sign / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    let tau = s / (T::one() + c);

    let n = a.rows();
    let app = a.get(p, p);
    let aqq = a.get(q, q);
    a.set(p, p, app - t * apq);
    a.set(q, q, aqq + t * apq);
    a.set(p, q, T::zero());
    a.set(q, p, T::zero());
    for i in 0..n {
        if i != p && i != q {
            let aip = a.get(i, p);
            let aiq = a.get(i, q);
            let new_ip = aip - s * (aiq + tau * aip);
            let new_iq = aiq + s * (aip - tau * aiq);
            a.set(i, p, new_ip);
            a.set(p, i, new_ip);
            a.set(i, q, new_iq);
            a.set(q, i, new_iq);
        }
    }
    for i in 0..n {
        let vip = v.get(i, p);
        let viq = v.get(i, q);
        v.set(i, p, vip - s * (viq + tau * vip));
        v.set(i, q, viq + s * (vip - tau * viq));
    }
}

/// Solves a·x = b by Gaussian elimination with partial pivoting.
///
/// Rejects non-square systems and systems whose best available pivot falls
/// below [`SOLVE_PIVOT_MIN`] (scaled up to machine precision for f32).
pub fn solve_linear<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    if !a.is_square() {
        return Err(Error::Validation(format!(
            "linear solve needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() != b.len() {
        return Err(Error::Validation(format!(
            "right-hand side length {} does not match matrix size {}",
            b.len(),
            a.rows()
        )));
    }
    let n = a.rows();
    let pivot_min = T::of(SOLVE_PIVOT_MIN).max(T::epsilon());

    let mut m = a.clone();
    let mut x: Vec<T> = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                m.get(i, col)
                    .abs()
                    .partial_cmp(&m.get(j, col).abs())
                    .expect("finite entries")
            })
            .expect("non-empty column");
        let pivot = m.get(pivot_row, col);
        if pivot.abs() < pivot_min {
            return Err(Error::Singular(format!(
                "pivot magnitude {} below threshold in column {col}",
                pivot.abs()
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m.get(col, j);
                m.set(col, j, m.get(pivot_row, j));
                m.set(pivot_row, j, tmp);
            }
            x.swap(col, pivot_row);
        }
        for row in (col + 1)..n {
            let factor = m.get(row, col) / pivot;
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                m.set(row, j, m.get(row, j) - factor * m.get(col, j));
            }
            x[row] = x[row] - factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut sum = x[col];
        for j in (col + 1)..n {
            sum = sum - m.get(col, j) * x[j];
        }
        x[col] = sum / m.get(col, col);
    }
    Ok(x)
}

/// Lower-triangular Cholesky factor L with a = L·Lᵀ.
///
/// Fails when the matrix is not positive definite, which the signal
/// generators rely on to reject invalid covariances.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    if !a.is_square() {
        return Err(Error::Validation(
            "Cholesky factorization needs a square matrix".to_string(),
        ));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum = sum - l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(sum > T::zero()) {
                    return Err(Error::Factorization(format!(
                        "matrix not positive definite (diagonal term {sum} at {j})"
                    )));
                }
                l.set(j, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::RandomStream;

    fn random_symmetric(n: usize, stream: &mut RandomStream) -> Matrix<f64> {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = stream.next_f64() * 2.0 - 1.0;
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        m
    }

    #[test]
    fn jacobi_identity_case() {
        let (vals, vecs) = jacobi_eig(&Matrix::<f64>::identity(4), 1e-12).unwrap();
        assert_eq!(vals, vec![1.0; 4]);
        assert_eq!(vecs, Matrix::identity(4));
    }

    #[test]
    fn jacobi_2x2_toeplitz() {
        // 2x2 symmetric Toeplitz has eigenvalues 1 ± a.
        let a = toeplitz_ar1(2, 0.4_f64).unwrap();
        let (vals, _) = jacobi_eig(&a, 1e-12).unwrap();
        assert!((vals[0] - 1.4).abs() < 1e-12, "got {vals:?}");
        assert!((vals[1] - 0.6).abs() < 1e-12, "got {vals:?}");
    }

    #[test]
    fn jacobi_reconstruction_residual() {
        // Oracle: rebuild H·diag(λ)·Hᵀ and compare entrywise.
        let mut stream = RandomStream::new(20240214);
        let a = random_symmetric(4, &mut stream);
        let (vals, vecs) = jacobi_eig(&a, 1e-13).unwrap();
        let rebuilt = vecs
            .mul(&Matrix::from_diag(&vals))
            .mul(&vecs.transpose());
        assert!(rebuilt.sub(&a).max_abs() < 1e-10, "residual too large");
    }

    #[test]
    fn jacobi_orthonormality_and_positivity_sweep() {
        // Orthonormality below 1e-10 across sizes 1..=8; SPD inputs give
        // strictly positive eigenvalues.
        let mut stream = RandomStream::new(7);
        for n in 1..=8usize {
            for _ in 0..20 {
                let b = random_symmetric(n, &mut stream);
                // SPD via BᵀB + ε I
                let mut spd = b.transpose().mul(&b);
                for i in 0..n {
                    spd.set(i, i, spd.get(i, i) + 1e-3);
                }
                let (vals, vecs) = jacobi_eig(&spd, 1e-13).unwrap();
                let gram = vecs.transpose().mul(&vecs);
                assert!(
                    gram.sub(&Matrix::identity(n)).max_abs() < 1e-10,
                    "orthonormality violated at n={n}"
                );
                assert!(vals.iter().all(|&v| v > 0.0), "SPD eigenvalue <= 0");
                // sorted descending
                assert!(vals.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn jacobi_rejects_bad_input() {
        let rect = Matrix::new(2, 3, vec![0.0_f64; 6]).unwrap();
        assert!(matches!(
            jacobi_eig(&rect, 1e-12),
            Err(Error::Validation(_))
        ));
        let asym = Matrix::new(2, 2, vec![1.0, 0.5, 0.2, 1.0]).unwrap();
        assert!(matches!(
            jacobi_eig(&asym, 1e-12),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn toeplitz_examples() {
        assert_eq!(
            toeplitz_ar1(4, 0.0_f64).unwrap(),
            Matrix::identity(4),
            "zero correlation is white"
        );
        let t2 = toeplitz_ar1(2, 0.4_f64).unwrap();
        assert_eq!(
            t2,
            Matrix::new(2, 2, vec![1.0, 0.4, 0.4, 1.0]).unwrap()
        );
        let t3 = toeplitz_ar1(3, 0.4_f64).unwrap();
        assert!((t3.get(0, 2) - 0.16).abs() < 1e-15);
        assert!((t3.get(2, 0) - 0.16).abs() < 1e-15);
        assert!(matches!(toeplitz_ar1(3, 1.0_f64), Err(Error::Validation(_))));
        assert!(matches!(toeplitz_ar1(0, 0.4_f64), Err(Error::Validation(_))));
    }

    #[test]
    fn toeplitz_trace_preserved_by_eigenvalues() {
        let mut stream = RandomStream::new(99);
        for _ in 0..30 {
            let m = 1 + (stream.next_u64() % 8) as usize;
            let a = stream.next_f64() * 1.98 - 0.99;
            let t = toeplitz_ar1(m, a).unwrap();
            let (vals, _) = jacobi_eig(&t, 1e-13).unwrap();
            let sum: f64 = vals.iter().sum();
            assert!(
                (sum - m as f64).abs() < 1e-10,
                "trace not preserved: m={m} a={a} sum={sum}"
            );
        }
    }

    #[test]
    fn solve_examples() {
        let x = solve_linear(&Matrix::<f64>::identity(2), &[3.0, 5.0]).unwrap();
        assert_eq!(x, vec![3.0, 5.0]);
        let d = Matrix::new(2, 2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        let x = solve_linear(&d, &[2.0, 8.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn solve_residual_random() {
        // Oracle: multiply back and check the residual.
        let mut stream = RandomStream::new(31415);
        let mut a = random_symmetric(4, &mut stream);
        for i in 0..4 {
            a.set(i, i, a.get(i, i) + 4.0); // keep it well away from singular
        }
        let b: Vec<f64> = (0..4).map(|_| stream.next_f64()).collect();
        let x = solve_linear(&a, &b).unwrap();
        let r = a.mul_vec(&x);
        let residual: f64 = r
            .iter()
            .zip(&b)
            .map(|(ri, bi)| (ri - bi).abs())
            .fold(0.0, f64::max);
        let scale = b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        assert!(residual / scale < 1e-10, "residual {residual}");
    }

    #[test]
    fn solve_recovers_known_solution() {
        let mut stream = RandomStream::new(5150);
        for _ in 0..20 {
            let n = 1 + (stream.next_u64() % 6) as usize;
            let mut a = random_symmetric(n, &mut stream);
            for i in 0..n {
                a.set(i, i, a.get(i, i) + n as f64 + 1.0);
            }
            let x_true: Vec<f64> = (0..n).map(|_| stream.next_f64() * 2.0 - 1.0).collect();
            let b = a.mul_vec(&x_true);
            let x = solve_linear(&a, &b).unwrap();
            for (got, want) in x.iter().zip(&x_true) {
                assert!(
                    (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                    "recovery failed: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let s = Matrix::new(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(
            solve_linear(&s, &[1.0, 1.0]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn cholesky_roundtrip_and_rejection() {
        let a = toeplitz_ar1(4, 0.4_f64).unwrap();
        let l = cholesky(&a).unwrap();
        assert!(l.mul(&l.transpose()).sub(&a).max_abs() < 1e-14);
        let indefinite = Matrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            cholesky(&indefinite),
            Err(Error::Factorization(_))
        ));
    }

    #[test]
    fn matrix_validates_entries() {
        assert!(Matrix::new(1, 2, vec![f64::NAN, 0.0]).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
    }
}

//! Small dense linear algebra: a column-major matrix, Householder QR for
//! least squares, and a cyclic Jacobi eigensolver for symmetric matrices.

use crate::scalar::Scalar;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from equally long columns.
    ///
    /// Panics if the columns differ in length.
    pub fn from_columns<C: AsRef<[T]>>(columns: &[C]) -> Self {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            let c = c.as_ref();
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Self {
            rows,
            cols: columns.len(),
            data,
        }
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::zeros(nrows, ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            assert_eq!(r.len(), ncols, "ragged rows");
            for (j, &v) in r.iter().enumerate() {
                m[(i, j)] = v;
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

    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in matmul");
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..self.cols {
                let b = other[(k, j)];
                if b == T::zero() {
                    continue;
                }
                let a = self.column(k);
                let o = out.column_mut(j);
                for i in 0..a.len() {
                    o[i] = o[i] + a[i] * b;
                }
            }
        }
        out
    }

    /// `self * v` for a vector `v` of length `cols`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![T::zero(); self.rows];
        for (j, &b) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.column(j)) {
                *o = *o + a * b;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.rows + i]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.rows + i]
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    // scaled to avoid overflow on large columns
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let s = a.iter().fold(T::zero(), |s, &x| {
        let y = x / scale;
        s + y * y
    });
    scale * s.sqrt()
}

/// Householder QR factorisation of a tall matrix.
///
/// The reflectors are stored below the diagonal of `packed`; `R` occupies the
/// upper triangle with its diagonal in `r_diag`.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    packed: Matrix<T>,
    r_diag: Vec<T>,
    betas: Vec<T>,
}

impl<T: Scalar> Qr<T> {
    /// Factorises `x`, returning the index of the first column that is
    /// (numerically) a linear combination of the earlier ones.
    pub fn new(x: &Matrix<T>) -> Result<Self, usize> {
        let (n, p) = (x.rows(), x.cols());
        if n < p {
            return Err(n);
        }
        let mut a = x.clone();
        let mut r_diag = vec![T::zero(); p];
        let mut betas = vec![T::zero(); p];
        let tol = T::epsilon() * T::from_usize_lossy(n.max(100)) * T::lit(10.0);

        for j in 0..p {
            let original = norm(x.column(j));
            let alpha = norm(&a.column(j)[j..]);
            if original == T::zero() || alpha <= tol * original {
                return Err(j);
            }
            let head = a[(j, j)];
            let sign = if head >= T::zero() {
                -T::one()
            } else {
                T::one()
            };
            let r_jj = sign * alpha;
            // v = x - r_jj e1, stored in place; beta = 2 / (v'v)
            a[(j, j)] = head - r_jj;
            let vtv = {
                let v = &a.column(j)[j..];
                dot(v, v)
            };
            let beta = if vtv == T::zero() {
                T::zero()
            } else {
                T::lit(2.0) / vtv
            };
            for k in (j + 1)..p {
                let s = {
                    let v = &a.column(j)[j..];
                    let c = &a.column(k)[j..];
                    dot(v, c) * beta
                };
                if s == T::zero() {
                    continue;
                }
                for i in j..n {
                    let vi = a[(i, j)];
                    a[(i, k)] = a[(i, k)] - s * vi;
                }
            }
            r_diag[j] = r_jj;
            betas[j] = beta;
        }
        Ok(Self {
            packed: a,
            r_diag,
            betas,
        })
    }

    pub fn ncols(&self) -> usize {
        self.r_diag.len()
    }

    /// Computes `Q' y` in place.
    fn apply_qt(&self, y: &mut [T]) {
        let n = self.packed.rows();
        for j in 0..self.ncols() {
            let v = &self.packed.column(j)[j..];
            let s = dot(v, &y[j..]) * self.betas[j];
            for i in j..n {
                y[i] = y[i] - s * v[i - j];
            }
        }
    }

    fn r(&self, i: usize, j: usize) -> T {
        if i == j {
            self.r_diag[i]
        } else {
            self.packed[(i, j)]
        }
    }

    /// Least-squares coefficients minimising `||y - X b||`.
    pub fn solve(&self, y: &[T]) -> Vec<T> {
        let p = self.ncols();
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let mut b = vec![T::zero(); p];
        for i in (0..p).rev() {
            let mut s = qty[i];
            for (k, &bk) in b.iter().enumerate().skip(i + 1) {
                s = s - self.r(i, k) * bk;
            }
            b[i] = s / self.r_diag[i];
        }
        b
    }

    /// `(X'X)^{-1} = R^{-1} R^{-T}`.
    pub fn xtx_inverse(&self) -> Matrix<T> {
        let p = self.ncols();
        let mut rinv = Matrix::zeros(p, p);
        for j in 0..p {
            rinv[(j, j)] = T::one() / self.r_diag[j];
            for i in (0..j).rev() {
                let mut s = T::zero();
                for k in (i + 1)..=j {
                    s = s + self.r(i, k) * rinv[(k, j)];
                }
                rinv[(i, j)] = -s / self.r_diag[i];
            }
        }
        rinv.matmul(&rinv.transpose())
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Unit eigenvectors as columns, matching `values`.
    pub vectors: Matrix<T>,
    pub sweeps: usize,
}

/// Convergence threshold on the off-diagonal Frobenius norm, relative to the
/// matrix norm.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations. Intended for the small (k <= ~50) matrices that
/// arise from index correlation tables.
pub fn symmetric_eigen<T: Scalar>(m: &Matrix<T>) -> SymmetricEigen<T> {
    let n = m.rows();
    assert_eq!(n, m.cols(), "symmetric_eigen needs a square matrix");
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let total = m
        .max_abs_diff(&Matrix::zeros(n, n))
        .max(T::min_positive_value());
    let tol = T::lit(JACOBI_TOLERANCE).max(T::epsilon()) * total;

    let off = |a: &Matrix<T>| {
        let mut s = T::zero();
        for j in 0..n {
            for i in 0..j {
                s = s + a[(i, j)] * a[(i, j)];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS && off(&a) > tol {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(j, j)]
            .partial_cmp(&a[(i, i)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).copy_from_slice(v.column(src));
    }
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_exact_system() {
        let x = Matrix::from_columns(&[vec![1.0, 1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0, 4.0]]);
        let y = [3.0, 5.0, 7.0, 9.0];
        let b: Vec<f64> = Qr::new(&x).unwrap().solve(&y);
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn qr_flags_collinear_column() {
        let x = Matrix::from_columns(&[
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![2.0, 3.0, 4.0, 5.0],
        ]);
        assert_eq!(Qr::new(&x).unwrap_err(), 2);
    }

    #[test]
    fn xtx_inverse_matches_direct_inverse() {
        let x = Matrix::from_columns(&[vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 3.0]]);
        let inv = Qr::new(&x).unwrap().xtx_inverse();
        // X'X = [[3, 4], [4, 10]], det = 14
        let expected = Matrix::from_rows(&[[10.0 / 14.0, -4.0 / 14.0], [-4.0 / 14.0, 3.0 / 14.0]]);
        assert!(inv.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn jacobi_two_by_two() {
        let m: Matrix<f64> = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let e = symmetric_eigen(&m);
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_works_in_f32() {
        let m: Matrix<f32> =
            Matrix::from_rows(&[[4.0, 1.0, 0.0], [1.0, 3.0, 0.0], [0.0, 0.0, 1.0]]);
        let e = symmetric_eigen(&m);
        let trace: f32 = e.values.iter().copied().sum();
        assert!((trace - 8.0).abs() < 1e-5);
    }
}

use crate::Real;

use super::NeuralError;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<Real>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Real>) -> Result<Self, NeuralError> {
        super::check_dim("Mat::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Real) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<Real>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[Real] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Real> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Real] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [Real] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `start..end` as a contiguous slice.
    #[inline]
    pub fn rows_slice(&self, start: usize, end: usize) -> &[Real] {
        &self.data[start * self.cols..end * self.cols]
    }

    #[inline]
    pub fn rows_slice_mut(&mut self, start: usize, end: usize) -> &mut [Real] {
        &mut self.data[start * self.cols..end * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Real {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Real) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: Real) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: Real, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: Real) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|&x| (x as f64) * (x as f64)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Bitwise equality, distinguishing e.g. `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Mat) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.shape(), other.shape());
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Column sums accumulated into `out` (length `cols`).
    pub fn add_col_sums_into(&self, out: &mut [Real]) {
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
    }

    /// `self * other` as a fresh matrix.
    pub fn matmul(&self, other: &Mat) -> Result<Mat, NeuralError> {
        super::check_dim("matmul inner", self.cols, other.rows)?;
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            1.0,
            &self.data,
            Trans::No,
            &other.data,
            Trans::No,
            0.0,
            &mut out.data,
        );
        Ok(out)
    }
}

/// Storage orientation of a gemm operand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    /// Operand stored as its logical shape, row-major.
    No,
    /// Operand stored transposed, row-major.
    Yes,
}

/// `C = alpha * op(A) * op(B) + beta * C` for row-major buffers.
///
/// `op(A)` is `m x k` and `op(B)` is `k x n`; `C` is `m x n`. With
/// `Trans::Yes` the operand buffer holds the transpose (e.g. `A` stored as
/// `k x m`). When `beta == 0` the previous contents of `C` are ignored.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: Real,
    a: &[Real],
    ta: Trans,
    b: &[Real],
    tb: Trans,
    beta: Real,
    c: &mut [Real],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match ta {
        Trans::No => (k as isize, 1),
        Trans::Yes => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (n as isize, 1),
        Trans::Yes => (1, k as isize),
    };
    // SAFETY: the asserts above bound every index the kernel touches for
    // these strides; `c` does not alias `a` or `b` (borrowck).
    unsafe {
        raw_gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(not(feature = "f32"))]
use matrixmultiply::dgemm as raw_gemm;
#[cfg(feature = "f32")]
use matrixmultiply::sgemm as raw_gemm;

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        Mat::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|p| a.get(i, p) * b.get(p, j)).sum()
        })
    }

    fn sample(rows: usize, cols: usize, salt: usize) -> Mat {
        Mat::from_fn(rows, cols, |r, c| ((r * 31 + c * 17 + salt) % 13) as Real - 6.0)
    }

    #[test]
    fn gemm_all_orientations_match_naive() {
        let a = sample(5, 7, 1);
        let b = sample(7, 3, 2);
        let want = naive(&a, &b);
        let at = a.transpose();
        let bt = b.transpose();
        for (abuf, ta) in [(&a, Trans::No), (&at, Trans::Yes)] {
            for (bbuf, tb) in [(&b, Trans::No), (&bt, Trans::Yes)] {
                let mut c = Mat::zeros(5, 3);
                gemm(5, 7, 3, 1.0, abuf.as_slice(), ta, bbuf.as_slice(), tb, 0.0, c.as_mut_slice());
                assert_eq!(c, want, "{ta:?} {tb:?}");
            }
        }
    }

    #[test]
    fn gemm_accumulates_with_beta() {
        let a = sample(2, 2, 0);
        let b = sample(2, 2, 5);
        let mut c = Mat::from_vec(2, 2, vec![1.0; 4]).unwrap();
        gemm(2, 2, 2, 2.0, a.as_slice(), Trans::No, b.as_slice(), Trans::No, 1.0, c.as_mut_slice());
        let mut want = naive(&a, &b);
        want.scale(2.0);
        want.as_mut_slice().iter_mut().for_each(|x| *x += 1.0);
        assert_eq!(c, want);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Mat::from_vec(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn bit_eq_sees_signed_zero() {
        let a = Mat::row_vector(vec![0.0]);
        let b = Mat::row_vector(vec![-0.0]);
        assert_eq!(a, b);
        assert!(!a.bit_eq(&b));
    }
}

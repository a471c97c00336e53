use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type of a network: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// `c = a·b + beta·c` on strided row/column layouts.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "gemm operand out of bounds");
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_extent(a.len(), m, k, rsa, csa);
                check_extent(b.len(), k, n, rsb, csb);
                check_extent(c.len(), m, n, rsc, csc);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: all three operands were bounds-checked above for the
                // given shapes and non-negative strides.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Row-major matrix; rows are points (or grouped neighbor rows), columns are
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn add_assign(&mut self, other: &Mat<T>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self · w` where `w` is a row-major `cols × out` weight array.
    pub fn matmul(&self, w: &[T], out: usize) -> Mat<T> {
        let mut y = Mat::zeros(self.rows, out);
        T::gemm(
            self.rows,
            self.cols,
            out,
            &self.data,
            self.cols as isize,
            1,
            w,
            out as isize,
            1,
            T::zero(),
            &mut y.data,
            out as isize,
            1,
        );
        y
    }

    /// `self · wᵀ` for a row-major `inputs × self.cols` weight `w`.
    pub fn matmul_transposed(&self, w: &[T], inputs: usize) -> Mat<T> {
        let mut y = Mat::zeros(self.rows, inputs);
        T::gemm(
            self.rows,
            self.cols,
            inputs,
            &self.data,
            self.cols as isize,
            1,
            w,
            1,
            self.cols as isize,
            T::zero(),
            &mut y.data,
            inputs as isize,
            1,
        );
        y
    }

    /// Accumulates `selfᵀ · dy` into a row-major `self.cols × dy.cols` buffer.
    pub fn accumulate_outer(&self, dy: &Mat<T>, acc: &mut [T]) {
        assert_eq!(self.rows, dy.rows);
        T::gemm(
            self.cols,
            self.rows,
            dy.cols,
            &self.data,
            1,
            self.cols as isize,
            &dy.data,
            dy.cols as isize,
            1,
            T::one(),
            acc,
            dy.cols as isize,
            1,
        );
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Mat<T> {
        let mut out = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            out.extend_from_slice(self.row(i));
        }
        Mat::from_vec(idx.len(), self.cols, out)
    }

    /// Adds row `r` of `self` into row `idx[r]` of a `rows × cols` result.
    pub fn scatter_add_rows(&self, idx: &[usize], rows: usize) -> Mat<T> {
        let mut out = Mat::zeros(rows, self.cols);
        for (r, &i) in idx.iter().enumerate() {
            for (o, v) in out.row_mut(i).iter_mut().zip(self.row(r)) {
                *o += *v;
            }
        }
        out
    }

    /// Horizontal concatenation.
    pub fn hcat(parts: &[&Mat<T>]) -> Mat<T> {
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                assert_eq!(p.rows, rows, "hcat row mismatch");
                data.extend_from_slice(p.row(r));
            }
        }
        Mat::from_vec(rows, cols, data)
    }

    /// Column block `[start, start + width)`.
    pub fn columns(&self, start: usize, width: usize) -> Mat<T> {
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Mat::from_vec(self.rows, width, data)
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat::from_vec(self.rows, self.cols, self.data.iter().map(|v| U::lit(v.f64())).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Mat<f64>, w: &[f64], out: usize) -> Mat<f64> {
        let mut y = Mat::zeros(a.rows(), out);
        for r in 0..a.rows() {
            for o in 0..out {
                let mut s = 0.0;
                for i in 0..a.cols() {
                    s += a.row(r)[i] * w[i * out + o];
                }
                y.row_mut(r)[o] = s;
            }
        }
        y
    }

    #[test]
    fn matmul_variants_agree_with_loops() {
        let a = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = vec![1.0, 0.5, -1.0, 2.0, 0.0, 1.0];
        assert_eq!(a.matmul(&w, 3), naive(&a, &w, 3));
        // transpose route: dy (3×3) times wᵀ gives 3×2
        let dy = a.matmul(&w, 3);
        let back = dy.matmul_transposed(&w, 2);
        for r in 0..3 {
            for i in 0..2 {
                let s: f64 = (0..3).map(|o| dy.row(r)[o] * w[i * 3 + o]).sum();
                assert!((back.row(r)[i] - s).abs() < 1e-12);
            }
        }
        let mut acc = vec![0.0; 6];
        a.accumulate_outer(&dy, &mut acc);
        for i in 0..2 {
            for o in 0..3 {
                let s: f64 = (0..3).map(|r| a.row(r)[i] * dy.row(r)[o]).sum();
                assert!((acc[i * 3 + o] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gather_scatter_and_concat() {
        let a = Mat::from_vec(3, 1, vec![1.0f32, 2.0, 3.0]);
        let g = a.gather_rows(&[2, 0, 2]);
        assert_eq!(g.data(), &[3.0, 1.0, 3.0]);
        let s = g.scatter_add_rows(&[2, 0, 2], 3);
        assert_eq!(s.data(), &[1.0, 0.0, 6.0]);
        let c = Mat::hcat(&[&a, &a.map(|v| v * 10.0)]);
        assert_eq!(c.row(1), &[2.0, 20.0]);
        assert_eq!(c.columns(1, 1).data(), &[10.0, 20.0, 30.0]);
    }
}

//! Dense rank-2 arrays, 3x3 same-shape convolution and the matrix products
//! used by the network.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
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

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} elements, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        self.map(|v| alpha * v)
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_scaled");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in dot");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the listed rows into a new matrix, in order.
    pub fn gather_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        if self.len() <= 64 {
            f.debug_list()
                .entries((0..self.rows).map(|i| self.row(i)))
                .finish()
        } else {
            write!(f, "[..]")
        }
    }
}

/// Immutable 3x3 kernel, indexed `[row][col]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel3([[f64; 3]; 3]);

impl Kernel3 {
    pub const fn new(k: [[f64; 3]; 3]) -> Self {
        Self(k)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[r][c]
    }

    pub fn as_array(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    /// Kernel with both axes reversed.
    pub fn flipped(&self) -> Kernel3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.0[2 - r][2 - c];
            }
        }
        Kernel3(out)
    }

    pub fn transpose(&self) -> Kernel3 {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.0[c][r];
            }
        }
        Kernel3(out)
    }
}

/// Same-shape cross-correlation of `w` (zero padded by one cell) with `k`:
/// `out[i,j] = sum_{a,b in -1..=1} k[a+1][b+1] * w[i+a, j+b]`.
pub fn conv2d_same(w: &Matrix, k: &Kernel3) -> Matrix {
    let (rows, cols) = w.shape();
    let mut out = Matrix::zeros(rows, cols);
    if rows == 0 || cols == 0 {
        return out;
    }
    for i in 0..rows {
        let out_row = &mut out.data[i * cols..(i + 1) * cols];
        for a in 0..3usize {
            // source row i + a - 1
            let Some(src_i) = (i + a).checked_sub(1).filter(|&s| s < rows) else {
                continue;
            };
            let src = &w.data[src_i * cols..(src_i + 1) * cols];
            let [left, center, right] = k.0[a];
            if center != 0.0 {
                for (o, &s) in out_row.iter_mut().zip(src) {
                    *o += center * s;
                }
            }
            if left != 0.0 {
                // out[j] += left * src[j - 1] for j >= 1
                for (o, &s) in out_row[1..].iter_mut().zip(&src[..cols - 1]) {
                    *o += left * s;
                }
            }
            if right != 0.0 {
                // out[j] += right * src[j + 1] for j <= cols - 2
                for (o, &s) in out_row[..cols - 1].iter_mut().zip(&src[1..]) {
                    *o += right * s;
                }
            }
        }
    }
    out
}

/// Adjoint of [`conv2d_same`] with respect to its matrix argument.
pub fn conv2d_same_adjoint(g: &Matrix, k: &Kernel3) -> Matrix {
    conv2d_same(g, &k.flipped())
}

pub fn sum_abs(w: &Matrix) -> f64 {
    w.data.iter().map(|v| v.abs()).sum()
}

pub fn sum_sq(w: &Matrix) -> f64 {
    w.data.iter().map(|v| v * v).sum()
}

#[allow(clippy::too_many_arguments)]
fn dgemm_raw(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    // SAFETY: every caller passes slices whose extents match the
    // (m, k, n) shape and the strides given, checked by the public wrappers.
    unsafe {
        matrixmultiply::dgemm(
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
            n as isize,
            1,
        );
    }
}

/// `a * b`
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let mut c = Matrix::zeros(a.rows, b.cols);
    dgemm_raw(
        a.rows,
        a.cols,
        b.cols,
        &a.data,
        (a.cols as isize, 1),
        &b.data,
        (b.cols as isize, 1),
        0.0,
        &mut c.data,
    );
    c
}

/// `a * b^T`
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimension");
    let mut c = Matrix::zeros(a.rows, b.rows);
    dgemm_raw(
        a.rows,
        a.cols,
        b.rows,
        &a.data,
        (a.cols as isize, 1),
        &b.data,
        (1, b.cols as isize),
        0.0,
        &mut c.data,
    );
    c
}

/// `a^T * b`
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dimension");
    let mut c = Matrix::zeros(a.cols, b.cols);
    dgemm_raw(
        a.cols,
        a.rows,
        b.cols,
        &a.data,
        (1, a.cols as isize),
        &b.data,
        (b.cols as isize, 1),
        0.0,
        &mut c.data,
    );
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gx() -> Kernel3 {
        Kernel3::new([
            [3.0 / 32.0, 0.0, -3.0 / 32.0],
            [10.0 / 32.0, 0.0, -10.0 / 32.0],
            [3.0 / 32.0, 0.0, -3.0 / 32.0],
        ])
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_kernel(rng: &mut ChaCha8Rng) -> Kernel3 {
        let mut k = [[0.0; 3]; 3];
        for row in &mut k {
            for v in row {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        Kernel3::new(k)
    }

    /// Direct zero-padded triple loop, kept deliberately naive.
    fn naive_conv(w: &Matrix, k: &Kernel3) -> Matrix {
        let (rows, cols) = w.shape();
        Matrix::from_fn(rows, cols, |i, j| {
            let mut acc = 0.0;
            for a in -1i64..=1 {
                for b in -1i64..=1 {
                    let (si, sj) = (i as i64 + a, j as i64 + b);
                    if si >= 0 && sj >= 0 && (si as usize) < rows && (sj as usize) < cols {
                        acc += k.get((a + 1) as usize, (b + 1) as usize)
                            * w[(si as usize, sj as usize)];
                    }
                }
            }
            acc
        })
    }

    /// Dense matrix of the linear map `w -> conv2d_same(w, k)` on an r x c grid.
    fn dense_operator(rows: usize, cols: usize, k: &Kernel3) -> Matrix {
        let n = rows * cols;
        let mut op = Matrix::zeros(n, n);
        for col in 0..n {
            let mut e = Matrix::zeros(rows, cols);
            e.as_mut_slice()[col] = 1.0;
            let y = naive_conv(&e, k);
            for (row, &v) in y.as_slice().iter().enumerate() {
                op[(row, col)] = v;
            }
        }
        op
    }

    #[test]
    fn single_cell_gx_is_zero() {
        let w = Matrix::from_rows(&[[4.2]]);
        assert_eq!(conv2d_same(&w, &gx()).as_slice(), &[0.0]);
    }

    #[test]
    fn mean_filter_center() {
        let w = Matrix::filled(3, 3, 1.0);
        let k = Kernel3::new([[1.0 / 9.0; 3]; 3]);
        let out = conv2d_same(&w, &k);
        assert!((out[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn impulse_energy_under_gx() {
        let mut w = Matrix::zeros(5, 5);
        w[(2, 2)] = 1.0;
        let out = conv2d_same(&w, &gx());
        let oracle = naive_conv(&w, &gx());
        assert_eq!(out, oracle);
        assert!((sum_sq(&out) - 236.0 / 1024.0).abs() < 1e-15);
        assert!((sum_sq(&out) - 0.23046875).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let (r, c) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
            let w = random_matrix(&mut rng, r, c);
            let k = random_kernel(&mut rng);
            let fast = conv2d_same(&w, &k);
            let slow = naive_conv(&w, &k);
            for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
                assert!((a - b).abs() <= 1e-13, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn adjoint_matches_dense_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = random_kernel(&mut rng);
        let w = random_matrix(&mut rng, 6, 7);
        let g = random_matrix(&mut rng, 6, 7);
        let op = dense_operator(6, 7, &k);
        let lhs = conv2d_same(&w, &k).dot(&g);
        // <Aw, g> = <w, A^T g>
        let at_g = matmul(&op.transpose(), &Matrix::from_vec(42, 1, g.as_slice().to_vec()).unwrap());
        let rhs_dense = w.as_slice().iter().zip(at_g.as_slice()).map(|(a, b)| a * b).sum::<f64>();
        let rhs = w.dot(&conv2d_same_adjoint(&g, &k));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        assert!((rhs - rhs_dense).abs() <= 1e-12 * lhs.abs().max(1.0));
        for (a, b) in conv2d_same_adjoint(&g, &k).as_slice().iter().zip(at_g.as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn adjoint_identity_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let (r, c) = (rng.gen_range(1..=20), rng.gen_range(1..=20));
            let k = random_kernel(&mut rng);
            let w = random_matrix(&mut rng, r, c);
            let g = random_matrix(&mut rng, r, c);
            let lhs = conv2d_same(&w, &k).dot(&g);
            let rhs = w.dot(&conv2d_same_adjoint(&g, &k));
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / scale <= 1e-12 || (lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn adjoint_of_zeros_and_symmetric_kernel() {
        let k = Kernel3::new([[1.0; 3]; 3]);
        let g = Matrix::zeros(4, 3);
        assert_eq!(conv2d_same_adjoint(&g, &gx()), Matrix::zeros(4, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_matrix(&mut rng, 5, 4);
        assert_eq!(conv2d_same_adjoint(&g, &k), conv2d_same(&g, &k));
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let (r, c) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
            let k = random_kernel(&mut rng);
            let a = random_matrix(&mut rng, r, c);
            let b = random_matrix(&mut rng, r, c);
            let (alpha, beta) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let mut combo = a.scale(alpha);
            combo.add_scaled(beta, &b);
            let lhs = conv2d_same(&combo, &k);
            let mut rhs = conv2d_same(&a, &k).scale(alpha);
            rhs.add_scaled(beta, &conv2d_same(&b, &k));
            for (x, y) in lhs.as_slice().iter().zip(rhs.as_slice()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interior_translation_equivariance() {
        let k = gx();
        let mut pattern = Matrix::zeros(12, 12);
        pattern[(3, 3)] = 1.0;
        pattern[(3, 4)] = -2.0;
        pattern[(4, 3)] = 0.5;
        let mut shifted = Matrix::zeros(12, 12);
        shifted[(3 + 4, 3 + 3)] = 1.0;
        shifted[(3 + 4, 4 + 3)] = -2.0;
        shifted[(4 + 4, 3 + 3)] = 0.5;
        let a = conv2d_same(&pattern, &k);
        let b = conv2d_same(&shifted, &k);
        for i in 0..8 {
            for j in 0..9 {
                assert_eq!(a[(i, j)], b[(i + 4, j + 3)]);
            }
        }
    }

    #[test]
    fn reductions() {
        assert_eq!(sum_abs(&Matrix::zeros(3, 3)), 0.0);
        assert_eq!(sum_abs(&Matrix::from_rows(&[[1.0, -2.0], [3.0, -4.0]])), 10.0);
        assert_eq!(sum_sq(&Matrix::zeros(2, 2)), 0.0);
        assert_eq!(sum_sq(&Matrix::from_rows(&[[3.0, 4.0]])), 25.0);
    }

    #[test]
    fn products_agree_with_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 5, 7);
        let b = random_matrix(&mut rng, 7, 3);
        let naive = Matrix::from_fn(5, 3, |i, j| (0..7).map(|t| a[(i, t)] * b[(t, j)]).sum());
        let checks = [
            matmul(&a, &b),
            matmul_nt(&a, &b.transpose()),
            matmul_tn(&a.transpose(), &b),
        ];
        for c in checks {
            for (x, y) in c.as_slice().iter().zip(naive.as_slice()) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Matrix::from_vec(2, 3, vec![0.0; 5]).is_err());
    }
}

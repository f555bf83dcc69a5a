//! Dense row-major `f64` matrices, a seedable platform-independent RNG and
//! the handful of vector primitives the diagnostics are built from.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 2-D matrix stored row-major.
///
/// Every public constructor and operation returns finite entries only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "Matrix::new",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    op: "Matrix::from_rows",
                    left: (0, cols),
                    right: (i, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Internal constructor for buffers produced by finite arithmetic.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Gathers the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(indices.len(), self.cols, data)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    pub fn scale(&self, c: f64) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data.iter().map(|v| v * c).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

#[derive(Clone, Copy)]
enum Layout {
    Normal,
    Transposed,
}

/// `c = beta * c + op(a) * op(b)` where `c` is `m x n` row-major.
fn gemm(a: &Matrix, la: Layout, b: &Matrix, lb: Layout, beta: f64, c: &mut [f64]) -> (usize, usize) {
    let (m, k, rsa, csa) = match la {
        Layout::Normal => (a.rows, a.cols, a.cols as isize, 1),
        Layout::Transposed => (a.cols, a.rows, 1, a.cols as isize),
    };
    let (n, rsb, csb) = match lb {
        Layout::Normal => (b.cols, b.cols as isize, 1),
        Layout::Transposed => (b.rows, 1, b.cols as isize),
    };
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return (m, n);
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return (m, n);
    }
    // SAFETY: the pointers cover `m*k`, `k*n` and `m*n` elements with the
    // strides above, all of which lie inside the owning buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    (m, n)
}

fn checked_product(op: &'static str, a: &Matrix, la: Layout, b: &Matrix, lb: Layout) -> Result<Matrix> {
    let inner_a = match la {
        Layout::Normal => a.cols,
        Layout::Transposed => a.rows,
    };
    let inner_b = match lb {
        Layout::Normal => b.rows,
        Layout::Transposed => b.cols,
    };
    if inner_a != inner_b {
        return Err(Error::DimensionMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    let out = product_unchecked(a, la, b, lb);
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(op));
    }
    Ok(out)
}

fn product_unchecked(a: &Matrix, la: Layout, b: &Matrix, lb: Layout) -> Matrix {
    let m = match la {
        Layout::Normal => a.rows,
        Layout::Transposed => a.cols,
    };
    let n = match lb {
        Layout::Normal => b.cols,
        Layout::Transposed => b.rows,
    };
    let mut c = vec![0.0; m * n];
    gemm(a, la, b, lb, 0.0, &mut c);
    Matrix::from_raw(m, n, c)
}

/// Standard matrix product `a * b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    checked_product("matmul", a, Layout::Normal, b, Layout::Normal)
}

/// `aᵀ * b` without materialising the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    checked_product("matmul_tn", a, Layout::Transposed, b, Layout::Normal)
}

/// `a * bᵀ` without materialising the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    checked_product("matmul_nt", a, Layout::Normal, b, Layout::Transposed)
}

// Unchecked variants for the training hot path; callers guarantee shapes
// and check finiteness of the loss instead of every intermediate.
pub(crate) fn mm(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.rows);
    product_unchecked(a, Layout::Normal, b, Layout::Normal)
}

pub(crate) fn mm_tn(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.rows, b.rows);
    product_unchecked(a, Layout::Transposed, b, Layout::Normal)
}

pub(crate) fn mm_nt(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.cols);
    product_unchecked(a, Layout::Normal, b, Layout::Transposed)
}

/// Outer product `u vᵀ`.
pub fn outer(u: &[f64], v: &[f64]) -> Result<Matrix> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::InvalidArgument("outer product of an empty vector".into()));
    }
    let mut data = Vec::with_capacity(u.len() * v.len());
    for &a in u {
        data.extend(v.iter().map(|&b| a * b));
    }
    Matrix::new(u.len(), v.len(), data)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity of two equally sized vectors.
///
/// Fails with [`Error::ZeroVector`] when either operand has zero norm.
pub fn cosine_similarity_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            op: "cosine_similarity",
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    // the product of norms is symmetric, so swapping operands is exact
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity of two same-shape matrices, flattened.
pub fn cosine_similarity(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            op: "cosine_similarity",
            left: a.shape(),
            right: b.shape(),
        });
    }
    cosine_similarity_slices(&a.data, &b.data)
}

/// Mixes a base seed with a path of integers into an independent child seed
/// (SplitMix64 finalizer applied per component).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Seedable generator with a platform-independent stream (ChaCha8).
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn sign(&mut self) -> f64 {
        if self.inner.next_u32() & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// `n` independent uniform ±1 signs.
pub fn sample_rademacher(rng: &mut Rng, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("rademacher vector of length 0".into()));
    }
    Ok((0..n).map(|_| rng.sign()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::new(r, c, (0..r * c).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap()
    }

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.data_mut()[i * b.cols() + j] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_small_cases() {
        let id = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = m(&[&[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(matmul(&id, &b).unwrap(), b);
        let row = m(&[&[1.0, 2.0]]);
        let col = m(&[&[3.0], &[4.0]]);
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(7);
        let a = random(&mut rng, 7, 5);
        let b = random(&mut rng, 5, 3);
        let got = matmul(&a, &b).unwrap();
        let want = naive(&a, &b);
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let tn = matmul_tn(&a.transpose(), &b).unwrap();
        let nt = matmul_nt(&a, &b.transpose()).unwrap();
        for ((x, y), z) in tn.data().iter().zip(nt.data()).zip(want.data()) {
            assert!((x - z).abs() < 1e-12 && (y - z).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn outer_products() {
        assert_eq!(outer(&[1.0, 2.0], &[3.0, 4.0]).unwrap().data(), &[3.0, 4.0, 6.0, 8.0]);
        assert!(outer(&[0.0; 3], &[1.0, 2.0]).unwrap().is_zero());
        assert!(outer(&[], &[1.0]).is_err());
        let mut rng = Rng::new(3);
        let u: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
        let v: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
        let o = outer(&u, &v).unwrap();
        for i in 0..6 {
            for j in 0..4 {
                assert_eq!(o.get(i, j), u[i] * v[j]);
            }
        }
    }

    #[test]
    fn cosine_cases() {
        let a = m(&[&[1.0, 2.0], &[3.0, -4.0]]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity_slices(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity_slices(&[1.0, 1.0], &[-1.0, -1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            cosine_similarity_slices(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            cosine_similarity(&a, &Matrix::zeros(1, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rademacher_support_and_determinism() {
        assert!(sample_rademacher(&mut Rng::new(0), 0).is_err());
        let one = sample_rademacher(&mut Rng::new(1), 1).unwrap();
        assert!(one[0] == 1.0 || one[0] == -1.0);
        let a = sample_rademacher(&mut Rng::new(99), 64).unwrap();
        let b = sample_rademacher(&mut Rng::new(99), 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rademacher_mean_within_five_sigma() {
        // sd of the mean of 1e5 signs is 1/sqrt(1e5) ≈ 0.00316; 5σ ≈ 0.0158 < 0.02
        let draws = sample_rademacher(&mut Rng::new(2024), 100_000).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn rng_stream_is_pinned() {
        // frozen first outputs guard against silent changes of the generator
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        let xs: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_eq!(xs, vec![12578764544318200737, 17529487244874322312, 7886285670807131020, 11572758976476374866]);
        assert_eq!(derive_seed(7, &[1, 2]), 17454042800205077828);
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = Rng::new(5);
        let mut p = rng.permutation(100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }
}

//! Dense complex matrix and third-order tensor algebra.
//!
//! Matrices are `nalgebra` column-major `DMatrix<Complex64>`. A [`Tensor3`]
//! stores its entries column-major in `(i1, i2, i3)`, so entry `(i1, i2, i3)`
//! lives at `i1 + I1 * (i2 + I2 * i3)`. With that layout the three unfoldings
//! are:
//!
//! * mode 1: `[A_1, ..., A_K]`, column index `i2 + I2 * i3` (a plain reshape);
//! * mode 2: `[A_1^T, ..., A_K^T]`, column index `i1 + I1 * i3`;
//! * mode 3: `[vec(A_1), ..., vec(A_K)]^T`, column index `i1 + I1 * i2`.
//!
//! where `A_k` is the frontal slice `(., ., k)`.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, Dim, Matrix, RawStorage};
use num_complex::Complex64;

use crate::error::{shape_mismatch, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Unfolding mode of a third-order tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(value: usize) -> Result<Self> {
        match value {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            other => Err(Error::InvalidMode(other)),
        }
    }
}

impl Mode {
    fn axis(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }
}

/// Dense complex third-order array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![ZERO; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i3 in 0..dims[2] {
            for i2 in 0..dims[1] {
                for i1 in 0..dims[0] {
                    data.push(f(i1, i2, i3));
                }
            }
        }
        Self { dims, data }
    }

    /// Wraps a column-major buffer.
    pub fn from_vec(dims: [usize; 3], data: Vec<C64>) -> Result<Self> {
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(shape_mismatch(
                "Tensor3::from_vec",
                format!("{expected} entries"),
                format!("{} entries", data.len()),
            ));
        }
        Ok(Self { dims, data })
    }

    /// Stacks frontal slices along the third mode.
    pub fn from_slices(slices: &[CMatrix]) -> Result<Self> {
        let Some(first) = slices.first() else {
            return Err(shape_mismatch("Tensor3::from_slices", "at least one slice", "none"));
        };
        let (rows, cols) = first.shape();
        let mut data = Vec::with_capacity(rows * cols * slices.len());
        for s in slices {
            if s.shape() != (rows, cols) {
                return Err(shape_mismatch(
                    "Tensor3::from_slices",
                    format!("{rows}x{cols}"),
                    format!("{}x{}", s.nrows(), s.ncols()),
                ));
            }
            data.extend_from_slice(s.as_slice());
        }
        Ok(Self {
            dims: [rows, cols, slices.len()],
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    fn offset(&self, i1: usize, i2: usize, i3: usize) -> usize {
        debug_assert!(i1 < self.dims[0] && i2 < self.dims[1] && i3 < self.dims[2]);
        i1 + self.dims[0] * (i2 + self.dims[1] * i3)
    }

    /// Frontal slice `(., ., k)`.
    pub fn slice(&self, k: usize) -> CMatrix {
        let len = self.dims[0] * self.dims[1];
        CMatrix::from_column_slice(self.dims[0], self.dims[1], &self.data[k * len..(k + 1) * len])
    }

    pub fn slices(&self) -> Vec<CMatrix> {
        (0..self.dims[2]).map(|k| self.slice(k)).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// Largest absolute entrywise difference; `None` when the shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor3) -> Option<f64> {
        if self.dims != other.dims {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max),
        )
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = C64;

    fn index(&self, (i1, i2, i3): (usize, usize, usize)) -> &C64 {
        &self.data[self.offset(i1, i2, i3)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i1, i2, i3): (usize, usize, usize)) -> &mut C64 {
        let at = self.offset(i1, i2, i3);
        &mut self.data[at]
    }
}

/// Third-order identity tensor of size `p x p x p`.
pub fn identity_tensor(p: usize) -> Tensor3 {
    Tensor3::from_fn([p, p, p], |i, j, k| if i == j && j == k { ONE } else { ZERO })
}

/// n-mode unfolding.
pub fn unfold(t: &Tensor3, mode: Mode) -> CMatrix {
    let [i1n, i2n, i3n] = t.dims;
    match mode {
        Mode::One => CMatrix::from_column_slice(i1n, i2n * i3n, &t.data),
        Mode::Two => CMatrix::from_fn(i2n, i1n * i3n, |i2, c| t[(c % i1n, i2, c / i1n)]),
        Mode::Three => CMatrix::from_fn(i3n, i1n * i2n, |i3, c| t.data[c + i1n * i2n * i3]),
    }
}

/// Inverse of [`unfold`].
pub fn fold(m: &CMatrix, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
    let [i1n, i2n, i3n] = dims;
    let expected = match mode {
        Mode::One => (i1n, i2n * i3n),
        Mode::Two => (i2n, i1n * i3n),
        Mode::Three => (i3n, i1n * i2n),
    };
    if m.shape() != expected {
        return Err(shape_mismatch(
            "fold",
            format!("{}x{}", expected.0, expected.1),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(match mode {
        Mode::One => Tensor3 {
            dims,
            data: m.as_slice().to_vec(),
        },
        Mode::Two => Tensor3::from_fn(dims, |i1, i2, i3| m[(i2, i1 + i1n * i3)]),
        Mode::Three => Tensor3::from_fn(dims, |i1, i2, i3| m[(i3, i1 + i1n * i2)]),
    })
}

/// Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = CMatrix::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            let mut block = out.view_mut((i * rb, j * cb), (rb, cb));
            block.zip_apply(b, |o, bv| *o = s * bv);
        }
    }
    out
}

/// Column-wise Kronecker (Khatri-Rao) product.
pub fn khatri_rao(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.ncols() != b.ncols() {
        return Err(shape_mismatch(
            "khatri_rao",
            format!("{} columns", a.ncols()),
            format!("{} columns", b.ncols()),
        ));
    }
    let (ra, rb) = (a.nrows(), b.nrows());
    Ok(CMatrix::from_fn(ra * rb, a.ncols(), |r, p| a[(r / rb, p)] * b[(r % rb, p)]))
}

/// Column-stacking vectorization, returned as a column matrix.
pub fn vec(m: &CMatrix) -> CMatrix {
    CMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// Inverse of [`vec`]: reshapes a column-major buffer into `rows x cols`.
pub fn unvec<R: Dim, C: Dim, S: RawStorage<C64, R, C>>(
    v: &Matrix<C64, R, C, S>,
    rows: usize,
    cols: usize,
) -> Result<CMatrix> {
    if v.len() != rows * cols {
        return Err(shape_mismatch(
            "unvec",
            format!("{} entries", rows * cols),
            format!("{} entries", v.len()),
        ));
    }
    Ok(CMatrix::from_iterator(rows, cols, v.iter().copied()))
}

/// Diagonal matrix built from a vector of entries.
pub fn diag(entries: &[C64]) -> CMatrix {
    let n = entries.len();
    let mut out = CMatrix::zeros(n, n);
    for (i, &e) in entries.iter().enumerate() {
        out[(i, i)] = e;
    }
    out
}

/// n-mode product `t x_n m`; `unfold(result, n) = m * unfold(t, n)`.
pub fn mode_n_product(t: &Tensor3, m: &CMatrix, mode: Mode) -> Result<Tensor3> {
    let axis = mode.axis();
    if m.ncols() != t.dims[axis] {
        return Err(shape_mismatch(
            "mode_n_product",
            format!("{} columns", t.dims[axis]),
            format!("{} columns", m.ncols()),
        ));
    }
    let mut dims = t.dims;
    dims[axis] = m.nrows();
    fold(&(m * unfold(t, mode)), mode, dims)
}

/// Slice-wise contraction: frontal slice `k` of the result is `A_k * B_k`.
pub fn modewise_contraction(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    if a.dims[2] != b.dims[2] || a.dims[1] != b.dims[0] {
        return Err(shape_mismatch(
            "modewise_contraction",
            format!("B of shape {}x_x{}", a.dims[1], a.dims[2]),
            format!("{}x{}x{}", b.dims[0], b.dims[1], b.dims[2]),
        ));
    }
    let slices: Vec<CMatrix> = (0..a.dims[2]).map(|k| a.slice(k) * b.slice(k)).collect();
    if slices.is_empty() {
        return Ok(Tensor3::zeros([a.dims[0], b.dims[1], 0]));
    }
    Tensor3::from_slices(&slices)
}

/// Thin SVD with singular values in descending order; `m = u diag(s) v^H`.
struct ThinSvd {
    u: CMatrix,
    s: Vec<f64>,
    v: CMatrix,
}

// nalgebra's complex SVD is unreliable on exactly rank-deficient input, so
// decompositions go through faer.
fn thin_svd(m: &CMatrix) -> Option<ThinSvd> {
    let a = faer::Mat::<C64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = a.thin_svd().ok()?;
    let (u, v) = (svd.U(), svd.V());
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    if s.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(ThinSvd {
        u: CMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        s,
        v: CMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    })
}

/// Singular values in descending order (all NaN if the decomposition fails).
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    match thin_svd(m) {
        Some(svd) => svd.s,
        None => vec![f64::NAN; m.nrows().min(m.ncols())],
    }
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Default relative rank threshold `max(rows, cols) * eps`.
pub fn default_pinv_tol(m: &CMatrix) -> f64 {
    m.nrows().max(m.ncols()) as f64 * f64::EPSILON
}

/// Moore-Penrose pseudo-inverse with the default threshold.
pub fn pinv(m: &CMatrix) -> CMatrix {
    pinv_with_rank(m, default_pinv_tol(m)).0
}

/// Pseudo-inverse treating singular values below `rel_tol * sigma_max` as zero.
pub fn pinv_with_tol(m: &CMatrix, rel_tol: f64) -> CMatrix {
    pinv_with_rank(m, rel_tol).0
}

/// Pseudo-inverse together with the numerical rank it was computed at.
pub fn pinv_with_rank(m: &CMatrix, rel_tol: f64) -> (CMatrix, usize) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (CMatrix::zeros(cols, rows), 0);
    }
    if rows >= 2 * cols {
        // A = QR with orthonormal Q, so A^+ = R^+ Q^H.
        let qr = m.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        let (r_pinv, rank) = svd_pinv(&r, rel_tol);
        (r_pinv * q.adjoint(), rank)
    } else if cols >= 2 * rows {
        let (p, rank) = pinv_with_rank(&m.adjoint(), rel_tol);
        (p.adjoint(), rank)
    } else {
        svd_pinv(m, rel_tol)
    }
}

fn svd_pinv(m: &CMatrix, rel_tol: f64) -> (CMatrix, usize) {
    let mut out = CMatrix::zeros(m.ncols(), m.nrows());
    let Some(svd) = thin_svd(m) else {
        out.fill(C64::new(f64::NAN, f64::NAN));
        return (out, 0);
    };
    let smax = svd.s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (out, 0);
    }
    let rank = svd.s.iter().take_while(|&&s| s > rel_tol * smax).count();
    for i in 0..rank {
        // v_i s^-1 u_i^H
        let inv = C64::new(1.0 / svd.s[i], 0.0);
        out += svd.v.column(i) * svd.u.column(i).adjoint() * inv;
    }
    (out, rank)
}

/// Dominant singular triplet: `sigma * u * v^H` is the best rank-1 approximation.
#[derive(Debug, Clone)]
pub struct Rank1 {
    pub u: CMatrix,
    pub sigma: f64,
    pub v: CMatrix,
}

impl Rank1 {
    pub fn reconstruct(&self) -> CMatrix {
        (&self.u * self.v.adjoint()).map(|z| z * self.sigma)
    }
}

/// Best rank-1 approximation of `m`.
///
/// The unit-modulus freedom of the singular pair is fixed by making the
/// largest-magnitude entry of `u` real and positive (first one on ties).
pub fn rank1_approx(m: &CMatrix) -> Result<Rank1> {
    if m.is_empty() || m.iter().all(|z| *z == ZERO) {
        return Err(Error::ZeroMatrix("rank1_approx"));
    }
    let svd = thin_svd(m).ok_or(Error::NoConvergence("rank1_approx"))?;
    let sigma = svd.s[0];
    if sigma <= 0.0 {
        return Err(Error::ZeroMatrix("rank1_approx"));
    }
    let mut u1 = svd.u.column(0).into_owned();
    let mut v1 = svd.v.column(0).into_owned();
    let pivot = u1
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc })
        .0;
    let phase = C64::from_polar(1.0, -u1[pivot].arg());
    u1 *= phase;
    v1 *= phase;
    Ok(Rank1 {
        u: CMatrix::from_column_slice(u1.len(), 1, u1.as_slice()),
        sigma,
        v: CMatrix::from_column_slice(v1.len(), 1, v1.as_slice()),
    })
}

pub fn frobenius_sqr(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest absolute entrywise difference between two equally shaped matrices.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff shape mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Builds a matrix from frontal-slice style blocks stacked vertically.
pub(crate) fn vstack(blocks: &[CMatrix]) -> CMatrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, 0), b.shape()).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Builds a matrix from blocks placed side by side.
pub(crate) fn hstack(blocks: &[CMatrix]) -> CMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), b.shape()).copy_from(b);
        at += b.ncols();
    }
    out
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn mode_from_usize() {
        assert_eq!(Mode::try_from(2).unwrap(), Mode::Two);
        assert!(matches!(Mode::try_from(0), Err(Error::InvalidMode(0))));
        assert!(matches!(Mode::try_from(4), Err(Error::InvalidMode(4))));
    }

    #[test]
    fn single_entry_mode1() {
        let mut t = Tensor3::zeros([2, 3, 2]);
        t[(0, 0, 0)] = c(2.0, -1.0);
        let m = unfold(&t, Mode::One);
        assert_eq!(m.shape(), (2, 6));
        assert_eq!(m[(0, 0)], c(2.0, -1.0));
        assert_eq!(m.iter().filter(|z| **z != ZERO).count(), 1);
    }

    #[test]
    fn unfolding_shapes() {
        let t = Tensor3::zeros([2, 3, 4]);
        assert_eq!(unfold(&t, Mode::One).shape(), (2, 12));
        assert_eq!(unfold(&t, Mode::Two).shape(), (3, 8));
        assert_eq!(unfold(&t, Mode::Three).shape(), (4, 6));
    }

    #[test]
    fn mode3_is_stacked_vec_of_slices() {
        // enumerate entries 1..=8 through the documented layout
        let t = Tensor3::from_fn([2, 2, 2], |i, j, k| c((1 + i + 2 * j + 4 * k) as f64, 0.0));
        let m = unfold(&t, Mode::Three);
        let expected = CMatrix::from_row_slice(
            2,
            4,
            &[
                c(1., 0.), c(2., 0.), c(3., 0.), c(4., 0.),
                c(5., 0.), c(6., 0.), c(7., 0.), c(8., 0.),
            ],
        );
        assert_eq!(m, expected);
        for k in 0..2 {
            assert_eq!(m.row(k).transpose(), vec(&t.slice(k)));
        }
    }

    #[test]
    fn mode1_and_mode2_are_slice_concatenations() {
        let mut r = rng(3);
        let t = random_tensor(&mut r, [2, 3, 4]);
        let slices = t.slices();
        assert_eq!(unfold(&t, Mode::One), hstack(&slices));
        let transposed: Vec<CMatrix> = slices.iter().map(|s| s.transpose()).collect();
        assert_eq!(unfold(&t, Mode::Two), hstack(&transposed));
    }

    #[test]
    fn fold_zero_matrix_is_zero_tensor() {
        let t = fold(&CMatrix::zeros(3, 8), Mode::Two, [2, 3, 4]).unwrap();
        assert_eq!(t, Tensor3::zeros([2, 3, 4]));
    }

    #[test]
    fn fold_of_mode2_unfolding_by_enumeration() {
        let t = Tensor3::from_fn([2, 3, 2], |i, j, k| c(i as f64, (10 * j + 100 * k) as f64));
        let m = unfold(&t, Mode::Two);
        // column i1 + I1*i3, row i2
        assert_eq!(m[(2, 1 + 2 * 1)], c(1.0, 120.0));
        assert_eq!(fold(&m, Mode::Two, [2, 3, 2]).unwrap(), t);
    }

    #[test]
    fn fold_rejects_bad_shape() {
        assert!(fold(&CMatrix::zeros(3, 3), Mode::One, [2, 3, 4]).is_err());
    }

    #[test]
    fn slices_reassemble_bit_exactly() {
        let mut r = rng(5);
        let t = random_tensor(&mut r, [3, 2, 5]);
        assert_eq!(Tensor3::from_slices(&t.slices()).unwrap(), t);
    }

    #[test]
    fn kron_with_identity_is_block_diagonal() {
        let mut r = rng(7);
        let a = random_matrix(&mut r, 2, 3);
        let k = kron(&CMatrix::identity(2, 2), &a);
        assert_eq!(k.shape(), (4, 6));
        assert_eq!(k.view((0, 0), (2, 3)).into_owned(), a);
        assert_eq!(k.view((2, 3), (2, 3)).into_owned(), a);
        assert!(k.view((0, 3), (2, 3)).iter().all(|z| *z == ZERO));
        assert!(k.view((2, 0), (2, 3)).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn kron_with_scalar() {
        let mut r = rng(8);
        let a = random_matrix(&mut r, 3, 2);
        let s = c(0.5, -2.0);
        assert_eq!(kron(&CMatrix::from_element(1, 1, s), &a), a.map(|z| z * s));
    }

    #[test]
    fn khatri_rao_single_column_is_kron() {
        let mut r = rng(9);
        let a = random_matrix(&mut r, 3, 1);
        let b = random_matrix(&mut r, 2, 1);
        assert_eq!(khatri_rao(&a, &b).unwrap(), kron(&a, &b));
    }

    #[test]
    fn khatri_rao_of_identities() {
        let i2 = CMatrix::identity(2, 2);
        let kr = khatri_rao(&i2, &i2).unwrap();
        let e = |i: usize| CMatrix::from_fn(2, 1, |r, _| if r == i { ONE } else { ZERO });
        assert_eq!(kr.column(0).into_owned(), kron(&e(0), &e(0)));
        assert_eq!(kr.column(1).into_owned(), kron(&e(1), &e(1)));
    }

    #[test]
    fn khatri_rao_rejects_column_mismatch() {
        assert!(khatri_rao(&CMatrix::zeros(2, 3), &CMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn vec_of_identity() {
        let v = vec(&CMatrix::identity(2, 2));
        assert_eq!(v.as_slice(), &[ONE, ZERO, ZERO, ONE]);
        assert!(unvec(&v, 3, 1).is_err());
        assert_eq!(unvec(&v, 2, 2).unwrap(), CMatrix::identity(2, 2));
    }

    #[test]
    fn mode_n_product_identity_and_zero() {
        let mut r = rng(10);
        let t = random_tensor(&mut r, [2, 3, 4]);
        for (mode, n) in [(Mode::One, 2), (Mode::Two, 3), (Mode::Three, 4)] {
            assert_eq!(mode_n_product(&t, &CMatrix::identity(n, n), mode).unwrap(), t);
            let z = mode_n_product(&t, &CMatrix::zeros(5, n), mode).unwrap();
            assert!(z.data().iter().all(|v| *v == ZERO));
        }
        assert!(mode_n_product(&t, &CMatrix::zeros(2, 5), Mode::One).is_err());
    }

    #[test]
    fn mode1_product_matches_slice_multiplication() {
        let mut r = rng(11);
        let t = random_tensor(&mut r, [3, 2, 4]);
        let m = random_matrix(&mut r, 5, 3);
        let p = mode_n_product(&t, &m, Mode::One).unwrap();
        assert_eq!(p.dims(), [5, 2, 4]);
        for k in 0..4 {
            assert!(max_abs_diff(&p.slice(k), &(&m * t.slice(k))) < 1e-12);
        }
    }

    #[test]
    fn contraction_identity_slices_and_single_slice() {
        let mut r = rng(12);
        let a = random_tensor(&mut r, [2, 3, 4]);
        let id = Tensor3::from_slices(&vec![CMatrix::identity(3, 3); 4]).unwrap();
        assert_eq!(modewise_contraction(&a, &id).unwrap(), a);

        let a1 = random_tensor(&mut r, [2, 3, 1]);
        let b1 = random_tensor(&mut r, [3, 4, 1]);
        let c1 = modewise_contraction(&a1, &b1).unwrap();
        assert_eq!(c1.slice(0), a1.slice(0) * b1.slice(0));
    }

    #[test]
    fn contraction_by_enumeration() {
        let mut r = rng(13);
        let a = random_tensor(&mut r, [2, 3, 2]);
        let b = random_tensor(&mut r, [3, 4, 2]);
        let out = modewise_contraction(&a, &b).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..4 {
                    let mut acc = ZERO;
                    for p in 0..3 {
                        acc += a[(i, p, k)] * b[(p, j, k)];
                    }
                    assert!((out[(i, j, k)] - acc).norm() < 1e-12);
                }
            }
        }
        assert!(modewise_contraction(&a, &random_tensor(&mut r, [2, 4, 2])).is_err());
        assert!(modewise_contraction(&a, &random_tensor(&mut r, [3, 4, 3])).is_err());
    }

    fn moore_penrose_residuals(a: &CMatrix, p: &CMatrix) -> [f64; 4] {
        let apa = a * p * a;
        let pap = p * a * p;
        let ap = a * p;
        let pa = p * a;
        [
            max_abs_diff(&apa, a),
            max_abs_diff(&pap, p),
            max_abs_diff(&ap.adjoint(), &ap),
            max_abs_diff(&pa.adjoint(), &pa),
        ]
    }

    #[test]
    fn pinv_identity_and_zero() {
        let i = CMatrix::identity(4, 4);
        assert!(max_abs_diff(&pinv(&i), &i) < 1e-14);
        let z = pinv(&CMatrix::zeros(3, 5));
        assert_eq!(z.shape(), (5, 3));
        assert!(z.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn pinv_left_inverse_of_tall_full_rank() {
        let mut r = rng(14);
        let a = random_matrix(&mut r, 6, 3);
        let p = pinv(&a);
        assert!(max_abs_diff(&(&p * &a), &CMatrix::identity(3, 3)) < 1e-10);
    }

    #[test]
    fn pinv_satisfies_moore_penrose_on_all_paths() {
        let mut r = rng(15);
        // square, tall (QR path), wide (adjoint path) and rank deficient
        let rank2 = random_matrix(&mut r, 7, 2) * random_matrix(&mut r, 2, 5);
        for a in [
            random_matrix(&mut r, 4, 4),
            random_matrix(&mut r, 12, 3),
            random_matrix(&mut r, 2, 9),
            rank2.clone(),
            rank2.transpose(),
        ] {
            let p = pinv(&a);
            let scale = a.norm().max(1.0) * p.norm().max(1.0);
            for res in moore_penrose_residuals(&a, &p) {
                assert!(res < 1e-10 * scale, "residual {res}");
            }
        }
        assert_eq!(pinv_with_rank(&rank2, 1e-10).1, 2);
    }

    #[test]
    fn pinv_truncates_small_singular_values() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(1.0, 0.0),
            c(1e-14, 0.0),
        ]));
        let p = pinv_with_tol(&a, 1e-10);
        assert!((p[(0, 0)] - ONE).norm() < 1e-14);
        assert_eq!(p[(1, 1)], ZERO);
    }

    #[test]
    fn rank1_of_exact_outer_product() {
        let mut r = rng(16);
        let x = random_matrix(&mut r, 5, 1);
        let g = random_matrix(&mut r, 4, 1);
        let m = &x * g.transpose();
        let r1 = rank1_approx(&m).unwrap();
        assert!(max_abs_diff(&r1.reconstruct(), &m) < 1e-12 * m.norm());
        assert!((r1.u.norm() - 1.0).abs() < 1e-12);
        assert!((r1.v.norm() - 1.0).abs() < 1e-12);
        assert!(r1.sigma > 0.0);
        // phase convention
        let pivot = r1.u.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let p = r1.u.iter().find(|z| (z.norm() - pivot).abs() < 1e-15).unwrap();
        assert!(p.im.abs() < 1e-15 && p.re > 0.0);
    }

    #[test]
    fn rank1_of_identity_has_unit_sigma() {
        let r1 = rank1_approx(&CMatrix::identity(2, 2)).unwrap();
        assert!((r1.sigma - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank1_rejects_zero() {
        assert!(matches!(rank1_approx(&CMatrix::zeros(3, 2)), Err(Error::ZeroMatrix(_))));
    }

    /// Power iteration on M^H M, independent of the SVD path.
    fn power_iteration_rank1(m: &CMatrix) -> CMatrix {
        let gram = m.adjoint() * m;
        let mut v = CMatrix::from_element(m.ncols(), 1, ONE);
        for _ in 0..5000 {
            let next = &gram * &v;
            v = next.map(|z| z / next.norm());
        }
        let mv = m * &v;
        mv * v.adjoint()
    }

    #[test]
    fn rank1_matches_power_iteration_oracle() {
        let mut r = rng(17);
        let m = random_matrix(&mut r, 4, 3);
        let oracle = power_iteration_rank1(&m);
        let r1 = rank1_approx(&m).unwrap();
        assert!(max_abs_diff(&r1.reconstruct(), &oracle) < 1e-10);
    }

    #[test]
    fn rank1_beats_random_candidates() {
        let mut r = rng(18);
        let m = random_matrix(&mut r, 5, 4);
        let best = frobenius_sqr(&(&m - rank1_approx(&m).unwrap().reconstruct()));
        for _ in 0..200 {
            let a = random_matrix(&mut r, 5, 1);
            let b = random_matrix(&mut r, 4, 1);
            // optimal scaling of the random direction pair
            let cand = &a * b.adjoint();
            let s = cand.dotc(&m) / cand.dotc(&cand);
            let err = frobenius_sqr(&(&m - cand.map(|z| z * s)));
            assert!(best <= err + 1e-12);
        }
    }

    fn small_dims() -> impl Strategy<Value = [usize; 3]> {
        (1usize..5, 1usize..5, 1usize..5).prop_map(|(a, b, c)| [a, b, c])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn unfold_fold_round_trip(dims in small_dims(), seed in any::<u64>()) {
            let t = random_tensor(&mut rng(seed), dims);
            for mode in [Mode::One, Mode::Two, Mode::Three] {
                let m = unfold(&t, mode);
                prop_assert_eq!(fold(&m, mode, dims).unwrap(), t.clone());
                prop_assert_eq!(unfold(&fold(&m, mode, dims).unwrap(), mode), m);
            }
        }

        #[test]
        fn pinv_is_idempotent_on_full_rank(r in 1usize..6, c in 1usize..6, seed in any::<u64>()) {
            let a = random_matrix(&mut rng(seed), r, c);
            let back = pinv(&pinv(&a));
            prop_assert!(max_abs_diff(&back, &a) < 1e-8 * a.norm().max(1.0));
        }
    }
}

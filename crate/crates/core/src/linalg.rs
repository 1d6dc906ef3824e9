//! Small dense kernels for operators that factor over bath spins.
//!
//! Basis convention: spin `k = 0` is the leftmost tensor factor and therefore
//! the most significant bit of a basis index. Index bit value 0 is `|↑⟩`
//! (the `+1/2` eigenstate of `I_z`).

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type DenseMatrix = DMatrix<C64>;
pub type DenseVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn pauli_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// `exp(-i θ/2 n̂·σ)` for the rotation vector `axis · t`, i.e. `θ = t |axis|`.
pub fn su2_rotation(axis: [f64; 3], t: f64) -> Mat2 {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let theta = t * norm;
    if theta == 0.0 {
        return identity2();
    }
    let (s, c) = (0.5 * theta).sin_cos();
    let (nx, ny, nz) = (axis[0] / norm, axis[1] / norm, axis[2] / norm);
    // cos(θ/2)·1 − i sin(θ/2)(n_x σ_x + n_y σ_y + n_z σ_z)
    Mat2::new(
        C64::new(c, -s * nz),
        C64::new(-s * ny, -s * nx),
        C64::new(s * ny, -s * nx),
        C64::new(c, s * nz),
    )
}

/// An operator `A_0 ⊗ A_1 ⊗ … ⊗ A_{N-1}` stored by its 2×2 factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductOperator {
    factors: Vec<Mat2>,
}

impl ProductOperator {
    pub fn new(factors: Vec<Mat2>) -> Self {
        Self { factors }
    }

    pub fn factors(&self) -> &[Mat2] {
        &self.factors
    }

    pub fn n_spins(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.factors.len()
    }

    /// In-place `v ← A v` without assembling the 2^N × 2^N matrix.
    pub fn apply_in_place(&self, v: &mut [C64]) {
        debug_assert_eq!(v.len(), self.dim());
        let n = self.factors.len();
        for (k, m) in self.factors.iter().enumerate() {
            let stride = 1usize << (n - 1 - k);
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            if b == ZERO && c == ZERO && a == ONE && d == ONE {
                continue;
            }
            for block in v.chunks_exact_mut(2 * stride) {
                let (hi, lo) = block.split_at_mut(stride);
                for (x0, x1) in hi.iter_mut().zip(lo.iter_mut()) {
                    let (u, w) = (*x0, *x1);
                    *x0 = a * u + b * w;
                    *x1 = c * u + d * w;
                }
            }
        }
    }

    /// Explicit Kronecker assembly, leftmost factor first.
    pub fn to_dense(&self) -> DenseMatrix {
        self.factors.iter().fold(DenseMatrix::from_element(1, 1, ONE), |acc, f| {
            acc.kronecker(&DenseMatrix::from_column_slice(2, 2, f.as_slice()))
        })
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.factors.iter().map(|f| f.adjoint()).collect())
    }
}

/// Applies `op` to every column of a column-major square matrix: `M ← op · M`.
pub fn apply_to_columns(m: &mut DenseMatrix, op: impl Fn(&mut [C64])) {
    let rows = m.nrows();
    for col in m.as_mut_slice().chunks_exact_mut(rows) {
        op(col);
    }
}

/// `op · M · op†` for an operator given only by its action on vectors.
pub fn sandwich(m: &DenseMatrix, op: impl Fn(&mut [C64])) -> DenseMatrix {
    let mut left = m.clone();
    apply_to_columns(&mut left, &op);
    let mut right = left.adjoint();
    apply_to_columns(&mut right, &op);
    right.adjoint()
}

/// Largest absolute entry of `a − b`.
pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Complex product `a·b` through four real matrix products, which take the
/// blocked real GEMM path instead of the generic complex kernel.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

pub fn trace(m: &DenseMatrix) -> C64 {
    m.diagonal().iter().sum()
}

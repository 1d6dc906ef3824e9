//! Bath states: density operators for the exact engine, normalized pure
//! states for the Monte Carlo unraveling.

use nalgebra::SymmetricEigen;

use crate::bath::{check_density_limit, check_pure_limit};
use crate::error::{Error, Result};
use crate::linalg::{trace, DenseMatrix, DenseVector, C64};

pub const TRACE_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const EIGEN_TOL: f64 = 1e-10;
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum BathState {
    Density { rho: DenseMatrix, n_spins: usize },
    Pure { psi: DenseVector, n_spins: usize },
}

fn n_spins_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("bath dimension {dim} is not 2^N with N >= 1")));
    }
    Ok(dim.trailing_zeros() as usize)
}

impl BathState {
    /// `1/2^N`, the unpolarized bath.
    pub fn maximally_mixed(n_spins: usize) -> Result<Self> {
        check_density_limit(n_spins)?;
        let dim = 1usize << n_spins;
        let rho = DenseMatrix::identity(dim, dim) * C64::from(1.0 / dim as f64);
        Ok(Self::Density { rho, n_spins })
    }

    /// Computational basis state `index` (spin 0 is the most significant bit).
    pub fn basis(n_spins: usize, index: usize) -> Result<Self> {
        check_pure_limit(n_spins)?;
        let dim = 1usize << n_spins;
        if index >= dim {
            return Err(Error::InvalidParameter(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut psi = DenseVector::zeros(dim);
        psi[index] = C64::new(1.0, 0.0);
        Ok(Self::Pure { psi, n_spins })
    }

    /// Validates trace, hermiticity and positivity.
    pub fn from_density(rho: DenseMatrix) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::InvalidParameter("density operator must be square".into()));
        }
        let n_spins = n_spins_for_dim(rho.nrows())?;
        check_density_limit(n_spins)?;
        let s = Self::Density { rho, n_spins };
        s.validate()?;
        Ok(s)
    }

    pub fn from_pure(psi: DenseVector) -> Result<Self> {
        let n_spins = n_spins_for_dim(psi.len())?;
        check_pure_limit(n_spins)?;
        let s = Self::Pure { psi, n_spins };
        s.validate()?;
        Ok(s)
    }

    pub fn n_spins(&self) -> usize {
        match self {
            Self::Density { n_spins, .. } | Self::Pure { n_spins, .. } => *n_spins,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins()
    }

    pub fn is_pure_representation(&self) -> bool {
        matches!(self, Self::Pure { .. })
    }

    /// Density-operator view; pure states are expanded to `|ψ⟩⟨ψ|`.
    pub fn to_density(&self) -> Result<DenseMatrix> {
        match self {
            Self::Density { rho, .. } => Ok(rho.clone()),
            Self::Pure { psi, n_spins } => {
                check_density_limit(*n_spins)?;
                Ok(psi * psi.adjoint())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Density { rho, .. } => {
                let tr = trace(rho);
                if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
                    return Err(Error::InvalidParameter(format!("density trace is {tr}, expected 1")));
                }
                let herm = crate::linalg::max_abs_diff(rho, &rho.adjoint());
                if herm > HERMITIAN_TOL {
                    return Err(Error::InvalidParameter(format!("density is not Hermitian (defect {herm:e})")));
                }
                let min_eig = SymmetricEigen::new(rho.clone())
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                if min_eig < -EIGEN_TOL {
                    return Err(Error::InvalidParameter(format!("density has negative eigenvalue {min_eig:e}")));
                }
                Ok(())
            }
            Self::Pure { psi, .. } => {
                let norm = psi.norm();
                if (norm - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidParameter(format!("pure state norm is {norm}, expected 1")));
                }
                Ok(())
            }
        }
    }
}

/// `Tr[ρ²]`; exactly 1 for pure states.
pub fn bath_purity(state: &BathState) -> f64 {
    match state {
        BathState::Pure { .. } => 1.0,
        BathState::Density { rho, .. } => rho.iter().map(|z| z.norm_sqr()).sum(),
    }
}

//! Covariance smoothing by hard thresholding in an orthonormal basis:
//! `A~(lambda) = B f_lambda[B^t A B] B^t`.

use nalgebra::DMatrix;

use crate::basis::{sorted_eigen, DiracBasis, SmoothingBasis};
use crate::error::{Error, Result};
use crate::grm::{symmetrize, MatrixKind, RelationshipMatrix};
use crate::scalar::Real;

/// Smoothing switches. The defaults threshold every coefficient, diagonal
/// included, and leave the result unrepaired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SmoothOptions {
    /// Keep diagonal coefficients of the transformed matrix untouched.
    pub preserve_diagonal: bool,
    /// Clip negative eigenvalues of the result (see [`psd_repair`]).
    pub psd_repair: bool,
}

/// A thresholded relationship matrix.
#[derive(Debug, Clone)]
pub struct SmoothedMatrix<T: Real> {
    pub values: RelationshipMatrix<T>,
    pub lambda: T,
    /// Coefficients (upper triangle including diagonal) set to zero.
    pub zeroed_count: usize,
    pub psd_repaired: bool,
}

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if lambda >= T::zero() {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "smoothing parameter must be non-negative, got {}",
            lambda
        )))
    }
}

/// Hard threshold `f(a) = a if |a| >= lambda else 0`, applied to every entry.
pub fn threshold_entries<T: Real>(m: &DMatrix<T>, lambda: T) -> Result<DMatrix<T>> {
    check_lambda(lambda)?;
    Ok(threshold_counted(m, lambda, false).0)
}

fn threshold_counted<T: Real>(m: &DMatrix<T>, lambda: T, preserve_diagonal: bool) -> (DMatrix<T>, usize) {
    let n = m.nrows();
    let mut out = m.clone();
    let mut zeroed = 0;
    for j in 0..m.ncols() {
        for i in 0..n {
            if preserve_diagonal && i == j {
                continue;
            }
            if out[(i, j)].abs() < lambda {
                out[(i, j)] = T::zero();
                if i <= j {
                    zeroed += 1;
                }
            }
        }
    }
    (out, zeroed)
}

/// Caches `B^t A B` so a grid of thresholds can be applied cheaply.
#[derive(Debug, Clone)]
pub struct Smoother<'a, T: Real> {
    basis: &'a DMatrix<T>,
    transformed: DMatrix<T>,
    sample_ids: Vec<String>,
}

impl<'a, T: Real> Smoother<'a, T> {
    pub fn new(a_hat: &RelationshipMatrix<T>, basis: &'a impl SmoothingBasis<T>) -> Result<Self> {
        let b = basis.basis();
        if b.nrows() != a_hat.n() {
            return Err(Error::Dimension(format!(
                "basis is {0}x{0}, matrix is {1}x{1}",
                b.nrows(),
                a_hat.n()
            )));
        }
        if basis.sample_ids() != a_hat.sample_ids() {
            return Err(Error::Dimension(
                "basis and matrix have different sample identifiers".into(),
            ));
        }
        Ok(Self {
            basis: b,
            transformed: symmetrize(b.transpose() * a_hat.values() * b),
            sample_ids: a_hat.sample_ids().to_vec(),
        })
    }

    /// Uses a precomputed `B^t A B` (e.g. the one stored in a treelet).
    pub fn from_transformed(basis: &'a impl SmoothingBasis<T>) -> Self {
        Self {
            basis: basis.basis(),
            transformed: basis.transformed().clone(),
            sample_ids: basis.sample_ids().to_vec(),
        }
    }

    pub fn transformed(&self) -> &DMatrix<T> {
        &self.transformed
    }

    pub fn smooth(&self, lambda: T, opts: SmoothOptions) -> Result<SmoothedMatrix<T>> {
        check_lambda(lambda)?;
        let (thresholded, zeroed_count) = threshold_counted(&self.transformed, lambda, opts.preserve_diagonal);
        let back = symmetrize(self.basis * thresholded * self.basis.transpose());
        let values = RelationshipMatrix::new(back, self.sample_ids.clone(), MatrixKind::Smoothed)?;
        let smoothed = SmoothedMatrix {
            values,
            lambda,
            zeroed_count,
            psd_repaired: false,
        };
        Ok(if opts.psd_repair {
            psd_repair(smoothed)
        } else {
            smoothed
        })
    }
}

/// `B f_lambda[B^t A B] B^t` for the given basis.
pub fn smooth_covariance<T: Real>(
    a_hat: &RelationshipMatrix<T>,
    basis: &impl SmoothingBasis<T>,
    lambda: T,
    opts: SmoothOptions,
) -> Result<SmoothedMatrix<T>> {
    Smoother::new(a_hat, basis)?.smooth(lambda, opts)
}

/// Entry-wise thresholding of `A` itself (the Dirac-basis special case).
pub fn simple_threshold<T: Real>(
    a_hat: &RelationshipMatrix<T>,
    lambda: T,
    opts: SmoothOptions,
) -> Result<SmoothedMatrix<T>> {
    check_lambda(lambda)?;
    let (values, zeroed_count) = threshold_counted(a_hat.values(), lambda, opts.preserve_diagonal);
    let values = RelationshipMatrix::new(values, a_hat.sample_ids().to_vec(), MatrixKind::Smoothed)?;
    let smoothed = SmoothedMatrix {
        values,
        lambda,
        zeroed_count,
        psd_repaired: false,
    };
    Ok(if opts.psd_repair {
        psd_repair(smoothed)
    } else {
        smoothed
    })
}

/// Simple thresholding expressed through the generic basis route; equal to
/// [`simple_threshold`].
pub fn dirac_smooth<T: Real>(
    a_hat: &RelationshipMatrix<T>,
    lambda: T,
    opts: SmoothOptions,
) -> Result<SmoothedMatrix<T>> {
    smooth_covariance(a_hat, &DiracBasis::new(a_hat), lambda, opts)
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to 0.
pub fn psd_repair_matrix<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let (values, vectors) = sorted_eigen(m.clone());
    if values.iter().all(|&v| v >= T::zero()) {
        return m.clone();
    }
    let clipped = nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| if v > T::zero() { v } else { T::zero() }),
    );
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| vectors[(i, j)] * clipped[j]);
    symmetrize(scaled * vectors.transpose())
}

/// Repairs a smoothed matrix to be positive semi-definite.
pub fn psd_repair<T: Real>(m: SmoothedMatrix<T>) -> SmoothedMatrix<T> {
    let ids = m.values.sample_ids().to_vec();
    let repaired = psd_repair_matrix(m.values.values());
    SmoothedMatrix {
        values: RelationshipMatrix::new(repaired, ids, MatrixKind::Smoothed).expect("repair keeps shape and symmetry"),
        lambda: m.lambda,
        zeroed_count: m.zeroed_count,
        psd_repaired: true,
    }
}

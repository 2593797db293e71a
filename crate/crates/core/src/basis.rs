//! Orthonormal bases in which a relationship matrix can be thresholded.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::grm::{symmetrize, RelationshipMatrix};
use crate::scalar::Real;

/// An orthonormal basis `B` together with `B^t A B` for the matrix `A` it
/// was derived from.
pub trait SmoothingBasis<T: Real> {
    fn basis(&self) -> &DMatrix<T>;
    fn transformed(&self) -> &DMatrix<T>;
    fn sample_ids(&self) -> &[String];
}

/// The standard (Kronecker delta) basis: thresholding in it is plain
/// entry-wise thresholding of `A`.
#[derive(Debug, Clone)]
pub struct DiracBasis<T: Real> {
    basis: DMatrix<T>,
    transformed: DMatrix<T>,
    sample_ids: Vec<String>,
}

impl<T: Real> DiracBasis<T> {
    pub fn new(a: &RelationshipMatrix<T>) -> Self {
        Self {
            basis: DMatrix::identity(a.n(), a.n()),
            transformed: a.values().clone(),
            sample_ids: a.sample_ids().to_vec(),
        }
    }
}

impl<T: Real> SmoothingBasis<T> for DiracBasis<T> {
    fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }
    fn transformed(&self) -> &DMatrix<T> {
        &self.transformed
    }
    fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }
}

/// Eigenbasis of `A` (principal components), eigenvalues in decreasing order.
#[derive(Debug, Clone)]
pub struct PcaBasis<T: Real> {
    basis: DMatrix<T>,
    transformed: DMatrix<T>,
    sample_ids: Vec<String>,
}

impl<T: Real> PcaBasis<T> {
    pub fn new(a: &RelationshipMatrix<T>) -> Self {
        let (values, vectors) = sorted_eigen(a.values().clone());
        Self {
            transformed: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values)),
            basis: vectors,
            sample_ids: a.sample_ids().to_vec(),
        }
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        self.transformed.diagonal().iter().copied().collect()
    }
}

impl<T: Real> SmoothingBasis<T> for PcaBasis<T> {
    fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }
    fn transformed(&self) -> &DMatrix<T> {
        &self.transformed
    }
    fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted decreasingly and
/// eigenvectors permuted to match.
pub fn sorted_eigen<T: Real>(m: DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grm::MatrixKind;

    #[test]
    fn pca_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let a = RelationshipMatrix::new(
            m.clone(),
            vec!["a".into(), "b".into(), "c".into()],
            MatrixKind::RawEstimate,
        )
        .unwrap();
        let p = PcaBasis::new(&a);
        let ev = p.eigenvalues();
        assert!(ev[0] >= ev[1] && ev[1] >= ev[2]);
        let back = p.basis() * p.transformed() * p.basis().transpose();
        assert!((back - m).amax() < 1e-12);
    }
}

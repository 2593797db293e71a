//! Treelet decomposition of a covariance matrix.
//!
//! The treelet is built greedily bottom-up: at each level the two most
//! similar active ("sum") variables are decorrelated by a Jacobi rotation,
//! the rotated variable with the smaller variance is retired as a
//! "difference" coefficient and the other stays active. After `N - 1` levels
//! the accumulated rotations form an orthonormal multiscale basis `B` and the
//! working covariance equals `B^t A B`.

use nalgebra::DMatrix;

use crate::basis::SmoothingBasis;
use crate::error::{Error, Result};
use crate::grm::{symmetrize, RelationshipMatrix};
use crate::scalar::Real;

/// Pair-selection score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Similarity {
    /// `|C_ij| / sqrt(C_ii C_jj)`; 0 when either variance is not positive.
    #[default]
    Correlation,
    /// `|C_ij|`.
    Covariance,
}

impl Similarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Similarity::Correlation => "correlation",
            Similarity::Covariance => "covariance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "correlation" => Ok(Similarity::Correlation),
            "covariance" => Ok(Similarity::Covariance),
            other => Err(Error::Invalid(format!("unknown similarity {other:?}"))),
        }
    }

    #[inline]
    pub(crate) fn score<T: Real>(self, cii: T, cjj: T, cij: T) -> T {
        match self {
            Similarity::Covariance => cij.abs(),
            Similarity::Correlation => {
                let v = cii * cjj;
                if cii > T::zero() && cjj > T::zero() && v > T::zero() {
                    cij.abs() / v.sqrt()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Build options.
#[derive(Debug, Clone, Copy, Default)]
pub struct TreeletConfig {
    /// Number of rotations; `None` builds the full tree (`N - 1`).
    pub levels: Option<usize>,
    pub similarity: Similarity,
}

/// Outcome of decorrelating one 2x2 block `[[a, b], [b, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRotation<T> {
    pub cos: T,
    pub sin: T,
    /// Variance of `cos * x_first + sin * x_second`.
    pub var_first: T,
    /// Variance of `-sin * x_first + cos * x_second`.
    pub var_second: T,
}

impl<T: Real> PairRotation<T> {
    pub fn angle(&self) -> T {
        self.sin.atan2(self.cos)
    }
}

/// Jacobi rotation zeroing the off-diagonal of `[[a, b], [b, d]]`.
///
/// The angle lies in `[-pi/4, pi/4]`: `tan(2 theta) = 2b / (a - d)` solved via
/// `t = sgn(zeta) / (|zeta| + sqrt(1 + zeta^2))` with `zeta = (a - d) / 2b`.
/// Equal variances give `theta = sgn(b) pi/4`.
pub fn jacobi_pair_rotation<T: Real>(a: T, b: T, d: T) -> PairRotation<T> {
    if b == T::zero() {
        return PairRotation {
            cos: T::one(),
            sin: T::zero(),
            var_first: a,
            var_second: d,
        };
    }
    let zeta = (a - d) / (b + b);
    let t = if zeta == T::zero() {
        b.signum()
    } else {
        zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
    };
    let cos = T::one() / (T::one() + t * t).sqrt();
    let sin = t * cos;
    // Standard Jacobi updates: a' = a + t b, d' = d - t b.
    PairRotation {
        cos,
        sin,
        var_first: a + t * b,
        var_second: d - t * b,
    }
}

/// One level of the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<T> {
    /// 1-based level.
    pub level: usize,
    /// Rotated pair, `i < j`.
    pub i: usize,
    pub j: usize,
    pub cos: T,
    pub sin: T,
    /// Index that stays active (sum variable).
    pub retained: usize,
    /// Index retired as a difference coefficient.
    pub retired: usize,
}

/// A completed (or level-truncated) treelet decomposition.
#[derive(Debug, Clone)]
pub struct TreeletDecomposition<T: Real> {
    rotations: Vec<Rotation<T>>,
    basis: DMatrix<T>,
    transformed: DMatrix<T>,
    sample_ids: Vec<String>,
    similarity: Similarity,
}

impl<T: Real> TreeletDecomposition<T> {
    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rotations(&self) -> &[Rotation<T>] {
        &self.rotations
    }

    pub fn levels(&self) -> usize {
        self.rotations.len()
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    /// `B^t A B` for the matrix the tree was built from.
    pub fn transformed(&self) -> &DMatrix<T> {
        &self.transformed
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    /// Indices still active after the last level (one per tree root).
    pub fn active(&self) -> Vec<usize> {
        let mut active = vec![true; self.n()];
        for r in &self.rotations {
            active[r.retired] = false;
        }
        (0..self.n()).filter(|&i| active[i]).collect()
    }

    /// Leaf clusters after `level` merges, each listed by sorted member index.
    /// Clusters are ordered by their smallest member.
    pub fn clusters_at(&self, level: usize) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for r in self.rotations.iter().take(level) {
            let moved = std::mem::take(&mut members[r.retired]);
            members[r.retained].extend(moved);
        }
        let mut out: Vec<Vec<usize>> = members
            .into_iter()
            .filter(|m| !m.is_empty())
            .map(|mut m| {
                m.sort_unstable();
                m
            })
            .collect();
        out.sort_by_key(|m| m[0]);
        out
    }

    /// Rebuilds a decomposition from stored rotations and the matrix they
    /// were learned on.
    pub fn from_rotations(
        a: &RelationshipMatrix<T>,
        rotations: Vec<Rotation<T>>,
        similarity: Similarity,
    ) -> Result<Self> {
        let n = a.n();
        for r in &rotations {
            if r.i >= n || r.j >= n || r.i >= r.j {
                return Err(Error::Format(format!(
                    "rotation at level {} has invalid pair ({}, {}) for N = {n}",
                    r.level, r.i, r.j
                )));
            }
        }
        let basis = basis_from_rotations(n, &rotations);
        let transformed = symmetrize(basis.transpose() * a.values() * &basis);
        Ok(Self {
            rotations,
            basis,
            transformed,
            sample_ids: a.sample_ids().to_vec(),
            similarity,
        })
    }

    /// `B^t A B` for any compatible matrix.
    pub fn transform_covariance(&self, a: &RelationshipMatrix<T>) -> Result<DMatrix<T>> {
        transform_covariance(self, a)
    }
}

impl<T: Real> SmoothingBasis<T> for TreeletDecomposition<T> {
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

/// Ordered product `J(1) J(2) ... J(L)` of the rotation matrices.
pub fn basis_from_rotations<T: Real>(n: usize, rotations: &[Rotation<T>]) -> DMatrix<T> {
    let mut b = DMatrix::<T>::identity(n, n);
    for r in rotations {
        rotate_columns(&mut b, r.i, r.j, r.cos, r.sin);
    }
    b
}

/// `M <- M J` where `J` rotates coordinates `p`, `q`:
/// new column p = c col_p + s col_q, new column q = -s col_p + c col_q.
fn rotate_columns<T: Real>(m: &mut DMatrix<T>, p: usize, q: usize, c: T, s: T) {
    for k in 0..m.nrows() {
        let (mp, mq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * mp + s * mq;
        m[(k, q)] = c * mq - s * mp;
    }
}

/// Builds the treelet of a symmetric matrix.
pub fn build_treelet<T: Real>(a_hat: &RelationshipMatrix<T>, config: TreeletConfig) -> Result<TreeletDecomposition<T>> {
    let n = a_hat.n();
    if n < 2 {
        return Err(Error::Invalid(format!("treelet needs N >= 2, got {n}")));
    }
    let max_levels = n - 1;
    let levels = config.levels.unwrap_or(max_levels);
    if levels > max_levels {
        return Err(Error::Invalid(format!(
            "levels = {levels} exceeds N - 1 = {max_levels}"
        )));
    }
    let mut cov = a_hat.values().clone();
    for j in 0..n {
        for i in (j + 1)..n {
            if cov[(i, j)] != cov[(j, i)] {
                return Err(Error::Invalid(format!("input not symmetric at ({i}, {j})")));
            }
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("input has non-finite entries".into()));
    }

    let sim = config.similarity;
    let mut active = vec![true; n];
    // Similarity cache, upper triangle (i < j) only.
    let mut score = DMatrix::<T>::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            score[(i, j)] = sim.score(cov[(i, i)], cov[(j, j)], cov[(i, j)]);
        }
    }

    let mut basis = DMatrix::<T>::identity(n, n);
    let mut rotations = Vec::with_capacity(levels);
    for level in 1..=levels {
        let (p, q) = best_pair(&score, &active);
        let rot = jacobi_pair_rotation(cov[(p, p)], cov[(p, q)], cov[(q, q)]);
        apply_rotation(&mut cov, p, q, &rot);
        rotate_columns(&mut basis, p, q, rot.cos, rot.sin);

        let (retained, retired) = if rot.var_second > rot.var_first { (q, p) } else { (p, q) };
        active[retired] = false;
        for k in 0..n {
            if k != retained && active[k] {
                let (i, j) = if k < retained { (k, retained) } else { (retained, k) };
                score[(i, j)] = sim.score(cov[(i, i)], cov[(j, j)], cov[(i, j)]);
            }
        }
        rotations.push(Rotation {
            level,
            i: p,
            j: q,
            cos: rot.cos,
            sin: rot.sin,
            retained,
            retired,
        });
    }

    Ok(TreeletDecomposition {
        rotations,
        basis,
        transformed: cov,
        sample_ids: a_hat.sample_ids().to_vec(),
        similarity: sim,
    })
}

/// Lexicographically first pair of active indices with maximal score.
fn best_pair<T: Real>(score: &DMatrix<T>, active: &[bool]) -> (usize, usize) {
    let n = active.len();
    let mut best: Option<(usize, usize, T)> = None;
    for i in 0..n {
        if !active[i] {
            continue;
        }
        for j in (i + 1)..n {
            if !active[j] {
                continue;
            }
            let s = score[(i, j)];
            match best {
                Some((_, _, b)) if !(s > b) => {}
                _ => best = Some((i, j, s)),
            }
        }
    }
    let (i, j, _) = best.expect("at least two active indices remain");
    (i, j)
}

/// In-place `C <- J^t C J` for the rotation of coordinates `p < q`.
fn apply_rotation<T: Real>(cov: &mut DMatrix<T>, p: usize, q: usize, rot: &PairRotation<T>) {
    let (c, s) = (rot.cos, rot.sin);
    let n = cov.nrows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let (ckp, ckq) = (cov[(k, p)], cov[(k, q)]);
        let new_p = c * ckp + s * ckq;
        let new_q = c * ckq - s * ckp;
        cov[(k, p)] = new_p;
        cov[(p, k)] = new_p;
        cov[(k, q)] = new_q;
        cov[(q, k)] = new_q;
    }
    cov[(p, p)] = rot.var_first;
    cov[(q, q)] = rot.var_second;
    cov[(p, q)] = T::zero();
    cov[(q, p)] = T::zero();
}

/// `B^t A B` for a matrix compatible with the decomposition.
pub fn transform_covariance<T: Real>(
    decomp: &TreeletDecomposition<T>,
    a: &RelationshipMatrix<T>,
) -> Result<DMatrix<T>> {
    if a.n() != decomp.n() {
        return Err(Error::Dimension(format!(
            "decomposition is {0}x{0}, matrix is {1}x{1}",
            decomp.n(),
            a.n()
        )));
    }
    Ok(symmetrize(decomp.basis.transpose() * a.values() * &decomp.basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grm::MatrixKind;
    use std::f64::consts::FRAC_PI_4;

    fn rel(rows: &[&[f64]]) -> RelationshipMatrix<f64> {
        let n = rows.len();
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let ids = (0..n).map(|i| format!("s{i}")).collect();
        RelationshipMatrix::new(m, ids, MatrixKind::RawEstimate).unwrap()
    }

    #[test]
    fn pair_rotation_positive_correlation() {
        let r = jacobi_pair_rotation(1.0, 0.5, 1.0);
        assert!((r.angle() - FRAC_PI_4).abs() < 1e-15);
        assert!((r.var_first - 1.5).abs() < 1e-15);
        assert!((r.var_second - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pair_rotation_negative_correlation() {
        let r = jacobi_pair_rotation(1.0, -0.5, 1.0);
        assert!((r.angle() + FRAC_PI_4).abs() < 1e-15);
        assert!((r.var_first - 1.5).abs() < 1e-15);
        assert!((r.var_second - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pair_rotation_already_diagonal() {
        let r = jacobi_pair_rotation(2.0, 0.0, 1.0);
        assert_eq!((r.cos, r.sin), (1.0, 0.0));
        assert_eq!((r.var_first, r.var_second), (2.0, 1.0));
    }

    #[test]
    fn pair_rotation_zeroes_offdiagonal() {
        // Closed form: off-diagonal of R^t M R is cs(d - a) + b(c^2 - s^2).
        for &(a, b, d) in &[(3.0f64, 0.7, -1.0), (0.2, -2.0, 0.1), (1.0, 1e-9, 1.0 + 1e-12)] {
            let r = jacobi_pair_rotation(a, b, d);
            let off = r.cos * r.sin * (d - a) + b * (r.cos * r.cos - r.sin * r.sin);
            assert!(off.abs() < 1e-12, "{off}");
            assert!(r.angle().abs() <= FRAC_PI_4 + 1e-15);
            let v1 = r.cos * r.cos * a + 2.0 * r.cos * r.sin * b + r.sin * r.sin * d;
            assert!((v1 - r.var_first).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_tree() {
        let t = build_treelet(&rel(&[&[1.0, 0.5], &[0.5, 1.0]]), TreeletConfig::default()).unwrap();
        assert_eq!(t.levels(), 1);
        let r = t.rotations()[0];
        assert!((r.sin.atan2(r.cos) - FRAC_PI_4).abs() < 1e-15);
        assert_eq!((r.retained, r.retired), (0, 1));
        let tr = t.transformed();
        assert!((tr[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((tr[(1, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(tr[(0, 1)], 0.0);
    }

    #[test]
    fn identity_gives_identity_basis() {
        let n = 6;
        let a = RelationshipMatrix::new(
            DMatrix::identity(n, n),
            (0..n).map(|i| i.to_string()).collect(),
            MatrixKind::RawEstimate,
        )
        .unwrap();
        let t = build_treelet(&a, TreeletConfig::default()).unwrap();
        assert_eq!(t.basis(), &DMatrix::<f64>::identity(n, n));
        assert_eq!(t.transformed(), &DMatrix::<f64>::identity(n, n));
        // Ties resolve to the smallest pair and keep the smaller index.
        for (k, r) in t.rotations().iter().enumerate() {
            assert_eq!((r.i, r.j), (0, k + 1));
            assert_eq!(r.retained, 0);
        }
    }

    #[test]
    fn block_structure_merges_within_blocks_first() {
        let a = rel(&[
            &[1.0, 0.0, 0.5, 0.0],
            &[0.0, 1.0, 0.0, 0.5],
            &[0.5, 0.0, 1.0, 0.0],
            &[0.0, 0.5, 0.0, 1.0],
        ]);
        let t = build_treelet(&a, TreeletConfig::default()).unwrap();
        let first: Vec<(usize, usize)> = t.rotations()[..2].iter().map(|r| (r.i, r.j)).collect();
        assert_eq!(first, vec![(0, 2), (1, 3)]);
        assert_eq!(t.clusters_at(2), vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_treelet(&rel(&[&[1.0]]), TreeletConfig::default()).is_err());
        let a = rel(&[&[1.0, 0.1], &[0.1, 1.0]]);
        let cfg = TreeletConfig {
            levels: Some(2),
            ..Default::default()
        };
        assert!(build_treelet(&a, cfg).is_err());
    }

    #[test]
    fn partial_levels() {
        let a = rel(&[&[1.0, 0.3, 0.1], &[0.3, 1.0, 0.2], &[0.1, 0.2, 1.0]]);
        let cfg = TreeletConfig {
            levels: Some(1),
            ..Default::default()
        };
        let t = build_treelet(&a, cfg).unwrap();
        assert_eq!(t.levels(), 1);
        assert_eq!(t.active().len(), 2);
    }

    #[test]
    fn transform_dimension_mismatch() {
        let t = build_treelet(&rel(&[&[1.0, 0.2], &[0.2, 1.0]]), TreeletConfig::default()).unwrap();
        let other = rel(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert!(matches!(transform_covariance(&t, &other), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_variance_variables_merge_last() {
        let a = rel(&[&[0.0, 0.0, 0.0], &[0.0, 1.0, 0.4], &[0.0, 0.4, 1.0]]);
        let t = build_treelet(&a, TreeletConfig::default()).unwrap();
        assert_eq!((t.rotations()[0].i, t.rotations()[0].j), (1, 2));
        let last = t.rotations()[1];
        assert_eq!((last.cos, last.sin), (1.0, 0.0));
    }
}

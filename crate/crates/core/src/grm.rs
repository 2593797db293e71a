//! Additive genetic relationship matrices: the method-of-moments estimate
//! from scaled genotypes, the degree-of-relationship transform and the
//! recursive pedigree expectation.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_traits::Num;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genotype::ScaledPanel;
use crate::scalar::Real;

/// What a relationship matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Truth,
    RawEstimate,
    Smoothed,
}

/// Symmetric `N x N` relationship matrix with its sample identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipMatrix<T: Real> {
    values: DMatrix<T>,
    sample_ids: Vec<String>,
    kind: MatrixKind,
}

impl<T: Real> RelationshipMatrix<T> {
    /// Validates shape and exact symmetry.
    pub fn new(values: DMatrix<T>, sample_ids: Vec<String>, kind: MatrixKind) -> Result<Self> {
        check_shape(&values, &sample_ids)?;
        let n = values.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                if values[(i, j)] != values[(j, i)] {
                    return Err(Error::Invalid(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            values,
            sample_ids,
            kind,
        })
    }

    /// Replaces `values` by `(values + values^t) / 2` before wrapping.
    pub fn symmetrized(values: DMatrix<T>, sample_ids: Vec<String>, kind: MatrixKind) -> Result<Self> {
        check_shape(&values, &sample_ids)?;
        Ok(Self {
            values: symmetrize(values),
            sample_ids,
            kind,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<T> {
        self.values
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: MatrixKind) -> Self {
        self.kind = kind;
        self
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[(i, j)]
    }

    /// Principal submatrix on `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let values = DMatrix::from_fn(indices.len(), indices.len(), |a, b| {
            self.values[(indices[a], indices[b])]
        });
        Self {
            values,
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            kind: self.kind,
        }
    }

    /// Errors unless `other` has the same dimension and identifiers.
    pub fn ensure_compatible<U: Real>(&self, other: &RelationshipMatrix<U>) -> Result<()> {
        if self.n() != other.n() {
            return Err(Error::Dimension(format!("{} vs {}", self.n(), other.n())));
        }
        if self.sample_ids != other.sample_ids {
            return Err(Error::Dimension("sample identifiers differ".into()));
        }
        Ok(())
    }

    /// Lossless-as-possible scalar conversion.
    pub fn cast<U: Real>(&self) -> RelationshipMatrix<U> {
        RelationshipMatrix {
            values: self.values.map(|v| U::lit(v.as_f64())),
            sample_ids: self.sample_ids.clone(),
            kind: self.kind,
        }
    }
}

fn check_shape<T: Real>(values: &DMatrix<T>, ids: &[String]) -> Result<()> {
    if !values.is_square() {
        return Err(Error::Dimension(format!(
            "relationship matrix is {}x{}",
            values.nrows(),
            values.ncols()
        )));
    }
    if ids.len() != values.nrows() {
        return Err(Error::Dimension(format!(
            "{} ids for a {}x{} matrix",
            ids.len(),
            values.nrows(),
            values.ncols()
        )));
    }
    Ok(())
}

/// `(m + m^t) / 2`, computed so the result is exactly symmetric.
pub fn symmetrize<T: Real>(mut m: DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    let half = T::lit(0.5);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

const GRM_BLOCK: usize = 1024;

/// Method-of-moments relationship estimate `Z Z^t / m`.
///
/// Columns are reduced in fixed-size blocks whose partial products are summed
/// in block order, so the result does not depend on the thread count.
pub fn estimate_grm<T: Real>(z: &ScaledPanel<T>) -> Result<RelationshipMatrix<T>> {
    let m = z.n_snps();
    if m == 0 {
        return Err(Error::Invalid("cannot estimate a GRM from zero SNPs".into()));
    }
    let n = z.n_samples();
    let starts: Vec<usize> = (0..m).step_by(GRM_BLOCK).collect();
    let partials: Vec<DMatrix<T>> = starts
        .par_iter()
        .map(|&s| {
            let width = GRM_BLOCK.min(m - s);
            let block = z.z.columns(s, width);
            block * block.transpose()
        })
        .collect();
    let mut acc = DMatrix::<T>::zeros(n, n);
    for p in &partials {
        acc += p;
    }
    let inv_m = T::one() / T::from_usize_lossy(m);
    // Mirror the lower triangle; the blocked product is not bitwise symmetric.
    for j in 0..n {
        acc[(j, j)] *= inv_m;
        for i in (j + 1)..n {
            let v = acc[(i, j)] * inv_m;
            acc[(i, j)] = v;
            acc[(j, i)] = v;
        }
    }
    RelationshipMatrix::new(acc, z.sample_ids.clone(), MatrixKind::RawEstimate)
}

/// Degree of relationship `-log2(a)`; unrelated (`a <= 0`) maps to `+inf`.
pub fn degree_of_relationship<T: Real>(a: T) -> T {
    if a > T::zero() {
        -a.log2()
    } else {
        T::lit(f64::INFINITY)
    }
}

/// One pedigree record. Parents are either both known or both unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PedigreeMember {
    pub id: String,
    pub father: Option<String>,
    pub mother: Option<String>,
}

impl PedigreeMember {
    pub fn founder(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            father: None,
            mother: None,
        }
    }

    pub fn child(id: impl Into<String>, father: impl Into<String>, mother: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            father: Some(father.into()),
            mother: Some(mother.into()),
        }
    }
}

/// Validated pedigree in topological order (parents before children).
#[derive(Debug, Clone)]
pub struct Pedigree {
    members: Vec<PedigreeMember>,
    parents: Vec<Option<(usize, usize)>>,
    index: HashMap<String, usize>,
}

impl Pedigree {
    /// Validates and topologically sorts the members. Input order is kept
    /// wherever it already satisfies the parent-first constraint.
    pub fn new(members: Vec<PedigreeMember>) -> Result<Self> {
        let mut pos = HashMap::with_capacity(members.len());
        for (i, m) in members.iter().enumerate() {
            if pos.insert(m.id.clone(), i).is_some() {
                return Err(Error::Pedigree(format!("duplicate member {}", m.id)));
            }
        }
        let mut raw_parents = Vec::with_capacity(members.len());
        for m in &members {
            let p = match (&m.father, &m.mother) {
                (None, None) => None,
                (Some(f), Some(mo)) => {
                    let lookup = |id: &String| {
                        pos.get(id)
                            .copied()
                            .ok_or_else(|| Error::Pedigree(format!("parent {id} of {} not in pedigree", m.id)))
                    };
                    let (fi, mi) = (lookup(f)?, lookup(mo)?);
                    if fi == mi {
                        return Err(Error::Pedigree(format!("{} has the same father and mother", m.id)));
                    }
                    Some((fi, mi))
                }
                _ => return Err(Error::Pedigree(format!("{} has exactly one known parent", m.id))),
            };
            raw_parents.push(p);
        }

        // Stable Kahn ordering: repeatedly emit the earliest member whose
        // parents are already placed.
        let n = members.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut pending = vec![0usize; n];
        for (i, p) in raw_parents.iter().enumerate() {
            if let Some((f, m)) = p {
                children[*f].push(i);
                children[*m].push(i);
                pending[i] = 2;
            }
        }
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&i) = ready.iter().next() {
            ready.remove(&i);
            order.push(i);
            for &c in &children[i] {
                pending[c] -= 1;
                if pending[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| pending[i] > 0).unwrap_or(0);
            return Err(Error::Pedigree(format!(
                "cycle detected involving {}",
                members[stuck].id
            )));
        }

        let mut new_pos = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            new_pos[old] = new;
        }
        let parents = order
            .iter()
            .map(|&old| raw_parents[old].map(|(f, m)| (new_pos[f], new_pos[m])))
            .collect();
        let mut members_opt: Vec<Option<PedigreeMember>> = members.into_iter().map(Some).collect();
        let members: Vec<PedigreeMember> = order
            .iter()
            .map(|&old| members_opt[old].take().expect("each member placed once"))
            .collect();
        let index = members.iter().enumerate().map(|(i, m)| (m.id.clone(), i)).collect();
        Ok(Self {
            members,
            parents,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[PedigreeMember] {
        &self.members
    }

    /// Parent indices (father, mother) of member `i`, in pedigree order.
    pub fn parents(&self, i: usize) -> Option<(usize, usize)> {
        self.parents[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn founders(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.parents[i].is_none())
    }

    pub fn ids(&self) -> Vec<String> {
        self.members.iter().map(|m| m.id.clone()).collect()
    }
}

/// Expected additive relationships by the tabular recursion
/// `A_ij = (A_jk + A_jl) / 2` for `i` with parents `k`, `l`.
///
/// Written over any numeric type so it can run in exact rational arithmetic.
/// Diagonal entries are 1 (non-inbred convention). Row-major, pedigree order.
pub fn expected_relationship_table<T: Num + Clone>(ped: &Pedigree) -> Vec<Vec<T>> {
    let n = ped.len();
    let two = T::one() + T::one();
    let mut a: Vec<Vec<T>> = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        a[i][i] = T::one();
        if let Some((k, l)) = ped.parents(i) {
            for j in 0..i {
                let v = (a[j][k].clone() + a[j][l].clone()) / two.clone();
                a[i][j] = v.clone();
                a[j][i] = v;
            }
        }
    }
    a
}

/// Pedigree-expected relationship matrix in pedigree order.
pub fn pedigree_expected_relationship<T: Real>(ped: &Pedigree) -> RelationshipMatrix<T> {
    let table = expected_relationship_table::<T>(ped);
    let n = ped.len();
    let values = DMatrix::from_fn(n, n, |i, j| table[i][j]);
    RelationshipMatrix {
        values,
        sample_ids: ped.ids(),
        kind: MatrixKind::Truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::ScaledPanel;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn single_snp_outer_product() {
        let r2 = 2f64.sqrt();
        let z = ScaledPanel {
            z: DMatrix::from_column_slice(2, 1, &[-r2, r2]),
            retained: vec![0],
            sample_ids: ids(2),
        };
        let a = estimate_grm(&z).unwrap();
        let expect = [[2.0, -2.0], [-2.0, 2.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.get(i, j) - expect[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_panel_gives_zero_matrix() {
        let z = ScaledPanel::<f64> {
            z: DMatrix::zeros(4, 7),
            retained: (0..7).collect(),
            sample_ids: ids(4),
        };
        assert!(estimate_grm(&z).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_snps_rejected() {
        let z = ScaledPanel::<f64> {
            z: DMatrix::zeros(3, 0),
            retained: vec![],
            sample_ids: ids(3),
        };
        assert!(estimate_grm(&z).is_err());
    }

    #[test]
    fn degrees() {
        assert_eq!(degree_of_relationship(0.5f64), 1.0);
        assert_eq!(degree_of_relationship(0.125f64), 3.0);
        assert_eq!(degree_of_relationship(-0.01f64), f64::INFINITY);
        assert_eq!(degree_of_relationship(0.0f64), f64::INFINITY);
    }

    #[test]
    fn cycle_rejected() {
        let ped = Pedigree::new(vec![
            PedigreeMember::child("a", "b", "c"),
            PedigreeMember::child("b", "a", "c"),
            PedigreeMember::founder("c"),
        ]);
        assert!(matches!(ped, Err(Error::Pedigree(ref m)) if m.contains("cycle")));
    }

    #[test]
    fn half_known_parents_rejected() {
        let ped = Pedigree::new(vec![
            PedigreeMember::founder("f"),
            PedigreeMember {
                id: "x".into(),
                father: Some("f".into()),
                mother: None,
            },
        ]);
        assert!(ped.is_err());
    }

    #[test]
    fn children_listed_first_are_reordered() {
        let ped = Pedigree::new(vec![
            PedigreeMember::child("kid", "dad", "mum"),
            PedigreeMember::founder("dad"),
            PedigreeMember::founder("mum"),
        ])
        .unwrap();
        assert_eq!(ped.ids(), vec!["dad", "mum", "kid"]);
        assert_eq!(ped.parents(2), Some((0, 1)));
    }

    #[test]
    fn unrelated_families_are_zero() {
        let ped = Pedigree::new(vec![
            PedigreeMember::founder("a1"),
            PedigreeMember::founder("a2"),
            PedigreeMember::child("a3", "a1", "a2"),
            PedigreeMember::founder("b1"),
            PedigreeMember::founder("b2"),
            PedigreeMember::child("b3", "b1", "b2"),
        ])
        .unwrap();
        let a = pedigree_expected_relationship::<f64>(&ped);
        let (i, j) = (ped.index_of("a3").unwrap(), ped.index_of("b3").unwrap());
        assert_eq!(a.get(i, j), 0.0);
        assert_eq!(a.get(i, i), 1.0);
    }
}

//! Genotype panels, allele frequency estimation and genotype scaling.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Stored in place of a count when the genotype was not observed.
pub const MISSING: u8 = u8::MAX;

/// Per-SNP metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SnpMeta {
    pub id: String,
    pub chromosome: u32,
    /// Base pairs or index units; only relative spacing within a chromosome matters.
    pub position: u64,
    /// Minor allele frequency, populated by [`estimate_allele_freqs`].
    pub maf: Option<f64>,
}

impl SnpMeta {
    pub fn new(id: impl Into<String>, chromosome: u32, position: u64) -> Self {
        Self {
            id: id.into(),
            chromosome,
            position,
            maf: None,
        }
    }

    pub fn is_monomorphic(&self) -> bool {
        self.maf == Some(0.0)
    }
}

/// Minor-allele counts for `N` samples at `m` SNPs.
///
/// Counts are stored SNP-major (`counts[k * N + i]`) so a SNP column is a
/// contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypePanel {
    counts: Vec<u8>,
    snps: Vec<SnpMeta>,
    sample_ids: Vec<String>,
}

impl GenotypePanel {
    /// Builds a panel from SNP-major counts, validating every invariant.
    pub fn new(sample_ids: Vec<String>, snps: Vec<SnpMeta>, counts: Vec<u8>) -> Result<Self> {
        let n = sample_ids.len();
        if n == 0 {
            return Err(Error::Invalid("no samples".into()));
        }
        if counts.len() != n * snps.len() {
            return Err(Error::Dimension(format!(
                "{} counts for {} samples x {} SNPs",
                counts.len(),
                n,
                snps.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Invalid(format!("duplicate sample id {id}")));
            }
        }
        for (k, col) in counts.chunks(n.max(1)).enumerate() {
            for (i, &c) in col.iter().enumerate() {
                if c > 2 && c != MISSING {
                    return Err(Error::GenotypeDomain {
                        row: i + 1,
                        col: k + 1,
                        value: c.to_string(),
                    });
                }
            }
        }
        Ok(Self {
            counts,
            snps,
            sample_ids,
        })
    }

    /// Builds a panel from per-sample rows, `None` meaning missing.
    pub fn from_rows(sample_ids: Vec<String>, snps: Vec<SnpMeta>, rows: &[Vec<Option<u8>>]) -> Result<Self> {
        let n = rows.len();
        let m = snps.len();
        if sample_ids.len() != n {
            return Err(Error::Dimension(format!("{} ids for {} rows", sample_ids.len(), n)));
        }
        let mut counts = vec![MISSING; n * m];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "row {} has {} entries, expected {m}",
                    i + 1,
                    row.len()
                )));
            }
            for (k, v) in row.iter().enumerate() {
                counts[k * n + i] = v.unwrap_or(MISSING);
            }
        }
        Self::new(sample_ids, snps, counts)
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_snps(&self) -> usize {
        self.snps.len()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn snps(&self) -> &[SnpMeta] {
        &self.snps
    }

    /// Replaces the SNP metadata (e.g. from a sidecar file).
    pub fn with_snps(mut self, snps: Vec<SnpMeta>) -> Result<Self> {
        if snps.len() != self.snps.len() {
            return Err(Error::Dimension(format!(
                "{} SNP records for {} columns",
                snps.len(),
                self.snps.len()
            )));
        }
        self.snps = snps;
        Ok(self)
    }

    /// Raw count at (sample, SNP); [`MISSING`] when unobserved.
    #[inline]
    pub fn get(&self, sample: usize, snp: usize) -> u8 {
        self.counts[snp * self.n_samples() + sample]
    }

    #[inline]
    pub fn column(&self, snp: usize) -> &[u8] {
        let n = self.n_samples();
        &self.counts[snp * n..(snp + 1) * n]
    }

    /// Per-sample view; `None` for missing.
    pub fn row(&self, sample: usize) -> Vec<Option<u8>> {
        (0..self.n_snps())
            .map(|k| match self.get(sample, k) {
                MISSING => None,
                c => Some(c),
            })
            .collect()
    }

    /// New panel restricted to the given SNP columns, in the given order.
    pub fn select_snps(&self, indices: &[usize]) -> Self {
        let n = self.n_samples();
        let mut counts = Vec::with_capacity(n * indices.len());
        for &k in indices {
            counts.extend_from_slice(self.column(k));
        }
        Self {
            counts,
            snps: indices.iter().map(|&k| self.snps[k].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
        }
    }

    /// New panel restricted to the given samples, in the given order.
    pub fn select_samples(&self, indices: &[usize]) -> Self {
        let mut counts = Vec::with_capacity(indices.len() * self.n_snps());
        for k in 0..self.n_snps() {
            let col = self.column(k);
            counts.extend(indices.iter().map(|&i| col[i]));
        }
        Self {
            counts,
            snps: self.snps.clone(),
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        }
    }

    /// Indices of SNPs whose estimated MAF is at least `maf_min`.
    pub fn common_snps(&self, maf_min: f64) -> Vec<usize> {
        self.snps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.maf.is_some_and(|p| p >= maf_min && p > 0.0))
            .map(|(k, _)| k)
            .collect()
    }
}

/// Estimates per-SNP minor allele frequencies from the sample and recodes
/// counts so the allele with frequency at most 0.5 is the one counted.
///
/// Idempotent: a folded panel folds to itself.
pub fn estimate_allele_freqs(mut panel: GenotypePanel) -> Result<GenotypePanel> {
    let n = panel.n_samples();
    for k in 0..panel.n_snps() {
        let col = &mut panel.counts[k * n..(k + 1) * n];
        let (sum, observed) = col
            .iter()
            .filter(|&&c| c != MISSING)
            .fold((0usize, 0usize), |(s, o), &c| (s + c as usize, o + 1));
        if observed == 0 {
            return Err(Error::AllMissing(panel.snps[k].id.clone()));
        }
        let mut p = sum as f64 / (2 * observed) as f64;
        if p > 0.5 {
            for c in col.iter_mut().filter(|c| **c != MISSING) {
                *c = 2 - *c;
            }
            p = (2 * observed - sum) as f64 / (2 * observed) as f64;
        }
        panel.snps[k].maf = Some(p);
    }
    Ok(panel)
}

/// Genotypes centred by `2p` and scaled by `sqrt(2p(1-p))`, one column per
/// retained SNP.
#[derive(Debug, Clone)]
pub struct ScaledPanel<T: Real> {
    pub z: DMatrix<T>,
    /// Column indices into the source panel's SNP list.
    pub retained: Vec<usize>,
    pub sample_ids: Vec<String>,
}

impl<T: Real> ScaledPanel<T> {
    pub fn n_samples(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_snps(&self) -> usize {
        self.z.ncols()
    }

    /// Sub-panel with the given columns (positions within this panel).
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            z: self.z.select_columns(cols.iter()),
            retained: cols.iter().map(|&c| self.retained[c]).collect(),
            sample_ids: self.sample_ids.clone(),
        }
    }
}

/// Scales a frequency-annotated panel. SNPs with `maf < maf_min` are dropped
/// and missing entries become 0 (mean imputation).
pub fn scale_genotypes<T: Real>(panel: &GenotypePanel, maf_min: f64) -> Result<ScaledPanel<T>> {
    if !(maf_min > 0.0) {
        return Err(Error::Invalid(format!("maf_min must be positive, got {maf_min}")));
    }
    let mut retained = Vec::new();
    for (k, snp) in panel.snps().iter().enumerate() {
        let p = snp
            .maf
            .ok_or_else(|| Error::Invalid(format!("allele frequency of {} not estimated", snp.id)))?;
        if p >= maf_min {
            retained.push(k);
        }
    }
    if retained.is_empty() {
        return Err(Error::NoSnpsSurvive { maf_min });
    }
    let n = panel.n_samples();
    let mut z = DMatrix::<T>::zeros(n, retained.len());
    for (c, &k) in retained.iter().enumerate() {
        let p = panel.snps()[k].maf.unwrap_or_default();
        let centre = 2.0 * p;
        let scale = (2.0 * p * (1.0 - p)).sqrt();
        for (i, &g) in panel.column(k).iter().enumerate() {
            if g != MISSING {
                z[(i, c)] = T::lit((g as f64 - centre) / scale);
            }
        }
    }
    Ok(ScaledPanel {
        z,
        retained,
        sample_ids: panel.sample_ids().to_vec(),
    })
}

/// Default MAF cut-off used throughout.
pub const DEFAULT_MAF_MIN: f64 = 0.05;

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(rows: &[&[Option<u8>]]) -> GenotypePanel {
        let m = rows[0].len();
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        let snps = (0..m).map(|k| SnpMeta::new(format!("rs{k}"), 1, k as u64)).collect();
        let rows: Vec<Vec<Option<u8>>> = rows.iter().map(|r| r.to_vec()).collect();
        GenotypePanel::from_rows(ids, snps, &rows).unwrap()
    }

    #[test]
    fn frequency_half() {
        let p = estimate_allele_freqs(panel(&[&[Some(0)], &[Some(2)]])).unwrap();
        assert_eq!(p.snps()[0].maf, Some(0.5));
    }

    #[test]
    fn monomorphic_flagged() {
        let p = estimate_allele_freqs(panel(&[&[Some(0)], &[Some(0)], &[Some(0)]])).unwrap();
        assert_eq!(p.snps()[0].maf, Some(0.0));
        assert!(p.snps()[0].is_monomorphic());
    }

    #[test]
    fn folding_recodes_counts() {
        let p = estimate_allele_freqs(panel(&[&[Some(2)], &[Some(2)], &[Some(1)], &[Some(1)]])).unwrap();
        assert_eq!(p.snps()[0].maf, Some(0.25));
        assert_eq!(p.column(0), &[0, 0, 1, 1]);
    }

    #[test]
    fn folding_is_idempotent() {
        let once = estimate_allele_freqs(panel(&[
            &[Some(2), Some(0), None],
            &[Some(1), Some(2), Some(1)],
            &[Some(2), None, Some(2)],
        ]))
        .unwrap();
        let twice = estimate_allele_freqs(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn all_missing_snp_is_named() {
        let err = estimate_allele_freqs(panel(&[&[Some(1), None], &[Some(0), None]])).unwrap_err();
        assert!(matches!(err, Error::AllMissing(ref id) if id == "rs1"), "{err}");
    }

    #[test]
    fn scaling_hand_values() {
        let p = estimate_allele_freqs(panel(&[&[Some(0)], &[Some(2)]])).unwrap();
        let z = scale_genotypes::<f64>(&p, 0.05).unwrap();
        let r2 = 2f64.sqrt();
        assert!((z.z[(0, 0)] + r2).abs() < 1e-15);
        assert!((z.z[(1, 0)] - r2).abs() < 1e-15);
    }

    #[test]
    fn missing_imputed_to_zero() {
        let p = estimate_allele_freqs(panel(&[&[Some(0)], &[None], &[Some(2)]])).unwrap();
        assert_eq!(p.snps()[0].maf, Some(0.5));
        let z = scale_genotypes::<f64>(&p, 0.05).unwrap();
        let r2 = 2f64.sqrt();
        assert!((z.z[(0, 0)] + r2).abs() < 1e-15);
        assert_eq!(z.z[(1, 0)], 0.0);
        assert!((z.z[(2, 0)] - r2).abs() < 1e-15);
    }

    #[test]
    fn monomorphic_dropped() {
        let p = estimate_allele_freqs(panel(&[&[Some(0), Some(1)], &[Some(0), Some(0)]])).unwrap();
        let z = scale_genotypes::<f64>(&p, 0.05).unwrap();
        assert_eq!(z.retained, vec![1]);
    }

    #[test]
    fn nothing_survives() {
        let p = estimate_allele_freqs(panel(&[&[Some(0)], &[Some(0)]])).unwrap();
        assert!(matches!(
            scale_genotypes::<f64>(&p, 0.05),
            Err(Error::NoSnpsSurvive { .. })
        ));
    }

    #[test]
    fn rejects_out_of_domain_counts() {
        let err = GenotypePanel::new(vec!["a".into()], vec![SnpMeta::new("x", 1, 0)], vec![3]).unwrap_err();
        assert!(matches!(err, Error::GenotypeDomain { row: 1, col: 1, .. }));
    }

    #[test]
    fn rejects_duplicate_ids() {
        assert!(GenotypePanel::new(vec!["a".into(), "a".into()], vec![SnpMeta::new("x", 1, 0)], vec![0, 1],).is_err());
    }

    #[test]
    fn scaled_columns_have_zero_mean() {
        let p = estimate_allele_freqs(panel(&[
            &[Some(0), Some(1), Some(2)],
            &[Some(1), None, Some(2)],
            &[Some(2), Some(1), Some(0)],
            &[None, Some(0), Some(1)],
            &[Some(1), Some(2), Some(1)],
        ]))
        .unwrap();
        let z = scale_genotypes::<f64>(&p, 0.01).unwrap();
        for c in 0..z.n_snps() {
            assert!(z.z.column(c).sum().abs() < 1e-12);
        }
    }
}

//! Accuracy of relationship estimates against known truth, broken down by
//! degree of relationship.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grm::RelationshipMatrix;
use crate::scalar::Real;

/// Default threshold below which an estimate counts as zero.
pub const DEFAULT_ZERO_EPS: f64 = 1e-5;

/// Degree-of-relationship bin of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DegreeBin {
    /// Closer than the first reported degree.
    Close,
    /// A single degree, or the first degree of a pooled range.
    Degree(u32),
    /// Beyond the last reported degree.
    Distant,
    /// Truth value zero or negative.
    Unrelated,
}

/// Bin layout: integer degrees `min..=max`, optionally pooling everything
/// from `pool_from` up to `max` into one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeBins {
    pub min: u32,
    pub max: u32,
    pub pool_from: Option<u32>,
}

impl Default for DegreeBins {
    fn default() -> Self {
        Self {
            min: 3,
            max: 11,
            pool_from: None,
        }
    }
}

impl DegreeBins {
    /// Bin of a pair with true relationship `a`. Degrees are rounded to the
    /// nearest integer.
    pub fn bin_of(&self, a: f64) -> DegreeBin {
        if !(a > 0.0) {
            return DegreeBin::Unrelated;
        }
        let r = (-a.log2()).round();
        if r < f64::from(self.min) {
            DegreeBin::Close
        } else if r > f64::from(self.max) {
            DegreeBin::Distant
        } else {
            let r = r as u32;
            match self.pool_from {
                Some(p) if r >= p => DegreeBin::Degree(p),
                _ => DegreeBin::Degree(r),
            }
        }
    }

    pub fn label(&self, bin: DegreeBin) -> String {
        match bin {
            DegreeBin::Close => format!("R<{}", self.min),
            DegreeBin::Degree(r) => match self.pool_from {
                Some(p) if r == p && p < self.max => format!("{p}-{}", self.max),
                _ => r.to_string(),
            },
            DegreeBin::Distant => format!("R>{}", self.max),
            DegreeBin::Unrelated => "unrelated".to_string(),
        }
    }
}

/// Row of the RMSE table.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub bin: String,
    pub method: String,
    pub rmse: f64,
    pub pairs: usize,
}

/// Row of the zero-fraction table.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroRow {
    pub bin: String,
    pub method: String,
    pub zero_fraction: f64,
    pub pairs: usize,
}

/// Label used for rows pooling every pair.
pub const TOTAL_LABEL: &str = "total";

fn pairs_by_bin<T: Real, U: Real>(
    truth: &RelationshipMatrix<T>,
    estimate: &RelationshipMatrix<U>,
    bins: &DegreeBins,
) -> Result<BTreeMap<DegreeBin, Vec<(f64, f64)>>> {
    truth.ensure_compatible(estimate)?;
    let n = truth.n();
    let mut out: BTreeMap<DegreeBin, Vec<(f64, f64)>> = BTreeMap::new();
    for j in 1..n {
        for i in 0..j {
            let t = truth.get(i, j).as_f64();
            out.entry(bins.bin_of(t))
                .or_default()
                .push((t, estimate.get(i, j).as_f64()));
        }
    }
    Ok(out)
}

fn rmse(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    (pairs.iter().map(|(t, e)| (e - t).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// RMSE over off-diagonal pairs per degree bin (non-empty bins only, in bin
/// order), followed by a `total` row over all pairs.
pub fn rmse_by_degree<T: Real, U: Real>(
    truth: &RelationshipMatrix<T>,
    estimate: &RelationshipMatrix<U>,
    bins: &DegreeBins,
    method: &str,
) -> Result<Vec<RmseRow>> {
    let groups = pairs_by_bin(truth, estimate, bins)?;
    let mut rows: Vec<RmseRow> = groups
        .iter()
        .map(|(&bin, pairs)| RmseRow {
            bin: bins.label(bin),
            method: method.to_string(),
            rmse: rmse(pairs),
            pairs: pairs.len(),
        })
        .collect();
    let all: Vec<(f64, f64)> = groups.into_values().flatten().collect();
    rows.push(RmseRow {
        bin: TOTAL_LABEL.to_string(),
        method: method.to_string(),
        rmse: rmse(&all),
        pairs: all.len(),
    });
    Ok(rows)
}

/// Fraction of off-diagonal estimates with `|value| < eps`, per degree bin,
/// followed by a `total` row.
pub fn zero_proportion<T: Real, U: Real>(
    estimate: &RelationshipMatrix<U>,
    truth: &RelationshipMatrix<T>,
    bins: &DegreeBins,
    eps: f64,
    method: &str,
) -> Result<Vec<ZeroRow>> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("zero threshold must be positive, got {eps}")));
    }
    let groups = pairs_by_bin(truth, estimate, bins)?;
    let frac = |pairs: &[(f64, f64)]| {
        if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().filter(|(_, e)| e.abs() < eps).count() as f64 / pairs.len() as f64
        }
    };
    let mut rows: Vec<ZeroRow> = groups
        .iter()
        .map(|(&bin, pairs)| ZeroRow {
            bin: bins.label(bin),
            method: method.to_string(),
            zero_fraction: frac(pairs),
            pairs: pairs.len(),
        })
        .collect();
    let all: Vec<(f64, f64)> = groups.into_values().flatten().collect();
    rows.push(ZeroRow {
        bin: TOTAL_LABEL.to_string(),
        method: method.to_string(),
        zero_fraction: frac(&all),
        pairs: all.len(),
    });
    Ok(rows)
}

/// Tables for several estimates of the same truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub per_degree: Vec<RmseRow>,
    pub zero_proportions: Vec<ZeroRow>,
}

impl EvalReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<T: Real, U: Real>(
        &mut self,
        method: &str,
        truth: &RelationshipMatrix<T>,
        estimate: &RelationshipMatrix<U>,
        bins: &DegreeBins,
        eps: f64,
    ) -> Result<()> {
        self.per_degree.extend(rmse_by_degree(truth, estimate, bins, method)?);
        self.zero_proportions
            .extend(zero_proportion(estimate, truth, bins, eps, method)?);
        Ok(())
    }

    /// Overall RMSE of `method`.
    pub fn overall(&self, method: &str) -> Option<f64> {
        self.row(method, TOTAL_LABEL).map(|r| r.rmse)
    }

    pub fn row(&self, method: &str, bin: &str) -> Option<&RmseRow> {
        self.per_degree.iter().find(|r| r.method == method && r.bin == bin)
    }

    pub fn zero_fraction(&self, method: &str, bin: &str) -> Option<f64> {
        self.zero_proportions
            .iter()
            .find(|r| r.method == method && r.bin == bin)
            .map(|r| r.zero_fraction)
    }
}

//! Smoothing-parameter selection by SNP subsampling.
//!
//! Chromosomes are split at random into a training and a test half. A large
//! blackout-spaced SNP sample from the training half gives the matrix that is
//! smoothed over the lambda grid; many small samples from the test half give
//! independent noisy estimates against which the smoothed matrices are scored
//! with a weighted squared-error risk.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use crate::basis::{DiracBasis, SmoothingBasis};
use crate::error::{Error, Result};
use crate::genotype::{estimate_allele_freqs, scale_genotypes, GenotypePanel, SnpMeta, DEFAULT_MAF_MIN};
use crate::grm::{estimate_grm, RelationshipMatrix};
use crate::scalar::Real;
use crate::stream_rng;
use crate::tcs::{SmoothOptions, Smoother};
use crate::treelet::{build_treelet, Similarity, TreeletConfig, TreeletDecomposition};

/// Units of the blackout window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlackoutUnit {
    /// Ordinal distance along the chromosome.
    #[default]
    Snps,
    /// Distance in `SnpMeta::position` units.
    BasePairs,
}

impl BlackoutUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            BlackoutUnit::Snps => "snps",
            BlackoutUnit::BasePairs => "bp",
        }
    }
}

/// How the genome is divided into training and test halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Whole chromosomes; requires at least two.
    #[default]
    Chromosomes,
    /// Fallback for single-chromosome panels: each chromosome is cut into
    /// this many contiguous blocks, which are then split like chromosomes.
    PositionBlocks(usize),
}

/// Basis in which the training matrix is thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothingMethod {
    #[default]
    Treelet,
    /// Entry-wise thresholding (Dirac basis).
    Simple,
}

impl SmoothingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SmoothingMethod::Treelet => "tcs",
            SmoothingMethod::Simple => "simple",
        }
    }
}

/// Threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaGrid {
    Explicit(Vec<f64>),
    /// 0 followed by `points - 1` log-spaced values spanning the absolute
    /// off-diagonal transformed coefficients of the first repeat's training
    /// matrix (see [`auto_lambda_grid`]).
    Auto {
        points: usize,
    },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto { points: 50 }
    }
}

/// Subsampling configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleConfig {
    /// Training SNP count `M`.
    pub training_snps: usize,
    /// Blackout window `b`.
    pub blackout: u64,
    pub blackout_unit: BlackoutUnit,
    /// Test subsample size `k`.
    pub test_snps: usize,
    /// Number of test subsamples `L`.
    pub test_subsamples: usize,
    pub lambda_grid: LambdaGrid,
    pub repeats: usize,
    pub rng_seed: u64,
    pub maf_min: f64,
    pub split: SplitMode,
    pub method: SmoothingMethod,
    pub similarity: Similarity,
    pub smooth: SmoothOptions,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        Self {
            training_snps: 5000,
            blackout: 10,
            blackout_unit: BlackoutUnit::Snps,
            test_snps: 50,
            test_subsamples: 50,
            lambda_grid: LambdaGrid::default(),
            repeats: 10,
            rng_seed: 0,
            maf_min: DEFAULT_MAF_MIN,
            split: SplitMode::Chromosomes,
            method: SmoothingMethod::Treelet,
            similarity: Similarity::Correlation,
            smooth: SmoothOptions::default(),
        }
    }
}

impl SubsampleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.training_snps == 0 || self.test_snps == 0 || self.test_subsamples == 0 || self.repeats == 0 {
            return bad("M, k, L and repeats must be positive");
        }
        if self.test_snps >= self.training_snps {
            return bad("test subsample size k must be smaller than M");
        }
        if let LambdaGrid::Explicit(g) = &self.lambda_grid {
            if g.is_empty() {
                return bad("lambda grid is empty");
            }
            if g.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
                return bad("lambda grid values must be finite and non-negative");
            }
            if g.windows(2).any(|w| w[0] >= w[1]) {
                return bad("lambda grid must be strictly increasing");
            }
        }
        if let LambdaGrid::Auto { points } = self.lambda_grid {
            if points == 0 {
                return bad("lambda grid needs at least one point");
            }
        }
        if let SplitMode::PositionBlocks(0 | 1) = self.split {
            return bad("position-block split needs at least two blocks");
        }
        Ok(())
    }
}

/// Summary of the risk weights (pooled over repeats, off-diagonal only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightsSummary {
    pub mean: f64,
    pub max: f64,
    pub nonzero_fraction: f64,
}

/// Outcome of [`select_lambda`].
#[derive(Debug, Clone)]
pub struct TuningResult<T: Real> {
    /// `(lambda, H(lambda))` averaged over repeats.
    pub risk_curve: Vec<(T, T)>,
    pub lambda_hat: T,
    pub weights_summary: WeightsSummary,
    /// Per-repeat risk values, aligned with `risk_curve`.
    pub per_repeat: Vec<Vec<T>>,
}

impl<T: Real> TuningResult<T> {
    pub fn risk_at(&self, lambda: T) -> Option<T> {
        self.risk_curve.iter().find(|(l, _)| *l == lambda).map(|&(_, h)| h)
    }
}

/// Randomly assigns half the chromosomes to training (the extra one when odd)
/// and the rest to test. Both sets are returned sorted.
pub fn split_chromosomes(snps: &[SnpMeta], rng: &mut impl Rng) -> Result<(Vec<u32>, Vec<u32>)> {
    let chroms: BTreeSet<u32> = snps.iter().map(|s| s.chromosome).collect();
    if chroms.len() < 2 {
        return Err(Error::Invalid(
            "need at least two chromosomes to split; use the position-block split mode".into(),
        ));
    }
    let mut chroms: Vec<u32> = chroms.into_iter().collect();
    chroms.shuffle(rng);
    let n_train = chroms.len().div_ceil(2);
    let mut train = chroms[..n_train].to_vec();
    let mut test = chroms[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Relabels chromosomes as contiguous position blocks (by SNP order within
/// each chromosome), for panels that cannot be split by chromosome.
pub fn position_block_labels(snps: &[SnpMeta], blocks: usize) -> Vec<SnpMeta> {
    let mut by_chrom: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (k, s) in snps.iter().enumerate() {
        by_chrom.entry(s.chromosome).or_default().push(k);
    }
    let mut out = snps.to_vec();
    let mut label = 1u32;
    for idx in by_chrom.values_mut() {
        idx.sort_by_key(|&k| (snps[k].position, k));
        let per = idx.len().div_ceil(blocks).max(1);
        for (rank, &k) in idx.iter().enumerate() {
            out[k].chromosome = label + (rank / per) as u32;
        }
        label += idx.len().div_ceil(per) as u32;
    }
    out
}

/// Coordinate of each SNP along its chromosome in the requested unit.
fn coordinates(snps: &[SnpMeta], unit: BlackoutUnit) -> Vec<u64> {
    match unit {
        BlackoutUnit::BasePairs => snps.iter().map(|s| s.position).collect(),
        BlackoutUnit::Snps => {
            let mut by_chrom: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (k, s) in snps.iter().enumerate() {
                by_chrom.entry(s.chromosome).or_default().push(k);
            }
            let mut coord = vec![0u64; snps.len()];
            for idx in by_chrom.values_mut() {
                idx.sort_by_key(|&k| (snps[k].position, k));
                for (rank, &k) in idx.iter().enumerate() {
                    coord[k] = rank as u64;
                }
            }
            coord
        }
    }
}

/// Largest number of candidates that can be chosen with pairwise spacing
/// `>= blackout` on each chromosome (leftmost greedy packing is optimal on a
/// line).
pub fn max_feasible(snps: &[SnpMeta], candidates: &[usize], blackout: u64, unit: BlackoutUnit) -> usize {
    if blackout == 0 {
        return candidates.len();
    }
    leftmost_packing(snps, candidates, blackout, unit).len()
}

/// Candidates chosen left to right on each chromosome, each at least
/// `blackout` past the previous pick.
fn leftmost_packing(snps: &[SnpMeta], candidates: &[usize], blackout: u64, unit: BlackoutUnit) -> Vec<usize> {
    let coord = coordinates(snps, unit);
    let mut by_chrom: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &k in candidates {
        by_chrom.entry(snps[k].chromosome).or_default().push(k);
    }
    let mut out = Vec::new();
    for mut ks in by_chrom.into_values() {
        ks.sort_unstable_by_key(|&k| (coord[k], k));
        let mut last: Option<u64> = None;
        for k in ks {
            if last.is_none_or(|l| coord[k] >= l + blackout) {
                out.push(k);
                last = Some(coord[k]);
            }
        }
    }
    out
}

const BLACKOUT_RESTARTS: usize = 50;

/// Samples `count` SNPs from `candidates` such that any two on the same
/// chromosome are at least `blackout` apart. Returned indices are sorted.
pub fn sample_blackout(
    snps: &[SnpMeta],
    candidates: &[usize],
    count: usize,
    blackout: u64,
    unit: BlackoutUnit,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let feasible = max_feasible(snps, candidates, blackout, unit);
    if count > feasible {
        return Err(Error::Infeasible {
            requested: count,
            max_feasible: feasible,
        });
    }
    if blackout == 0 {
        let mut pick: Vec<usize> = candidates.choose_multiple(rng, count).copied().collect();
        pick.sort_unstable();
        return Ok(pick);
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let coord = coordinates(snps, unit);
    let mut order = candidates.to_vec();
    for _ in 0..BLACKOUT_RESTARTS {
        order.shuffle(rng);
        let mut taken: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
        let mut picked = Vec::with_capacity(count);
        for &k in &order {
            let x = coord[k];
            let set = taken.entry(snps[k].chromosome).or_default();
            let lo = x.saturating_sub(blackout - 1);
            let hi = x.saturating_add(blackout - 1);
            if set.range(lo..=hi).next().is_none() {
                set.insert(x);
                picked.push(k);
                if picked.len() == count {
                    picked.sort_unstable();
                    return Ok(picked);
                }
            }
        }
    }
    // Random orders can miss a tight packing; a subset of the optimal one
    // always fits.
    let mut pick: Vec<usize> = leftmost_packing(snps, candidates, blackout, unit)
        .choose_multiple(rng, count)
        .copied()
        .collect();
    pick.sort_unstable();
    Ok(pick)
}

/// Risk weights `w_ij = |[B^t A B]_ij|` off the diagonal and `w_ii = 0`.
pub fn treelet_weights<T: Real>(decomp: &impl SmoothingBasis<T>) -> DMatrix<T> {
    let t = decomp.transformed();
    DMatrix::from_fn(
        t.nrows(),
        t.ncols(),
        |i, j| {
            if i == j {
                T::zero()
            } else {
                t[(i, j)].abs()
            }
        },
    )
}

/// Weighted risk
/// `H = 1 / ((N - 1) N L) * sum_l sum_{i<j} w_ij (A^_{ij,l} - A~_ij)^2`.
pub fn weighted_risk<T: Real>(
    a_tilde: &RelationshipMatrix<T>,
    test_estimates: &[RelationshipMatrix<T>],
    weights: &DMatrix<T>,
) -> Result<T> {
    let n = a_tilde.n();
    if test_estimates.is_empty() {
        return Err(Error::Invalid("weighted risk needs at least one test estimate".into()));
    }
    if weights.nrows() != n || weights.ncols() != n {
        return Err(Error::Dimension(format!(
            "weights are {}x{}, matrix is {n}x{n}",
            weights.nrows(),
            weights.ncols()
        )));
    }
    for t in test_estimates {
        a_tilde.ensure_compatible(t)?;
    }
    if n < 2 {
        return Ok(T::zero());
    }
    let mut total = T::zero();
    for test in test_estimates {
        for j in 1..n {
            for i in 0..j {
                let r = test.get(i, j) - a_tilde.get(i, j);
                total += weights[(i, j)] * r * r;
            }
        }
    }
    let norm = T::from_usize_lossy((n - 1) * n * test_estimates.len());
    Ok(total / norm)
}

/// Grid of `points` thresholds: 0, then log-spaced from 1/1000 of the 99.9th
/// percentile of the absolute off-diagonal entries of `transformed` up to
/// their maximum, so the last point zeroes every off-diagonal coefficient.
pub fn auto_lambda_grid<T: Real>(transformed: &DMatrix<T>, points: usize) -> Vec<f64> {
    let n = transformed.nrows();
    let mut off: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for j in 1..n {
        for i in 0..j {
            off.push(transformed[(i, j)].abs().as_f64());
        }
    }
    if off.is_empty() || points <= 1 {
        return vec![0.0];
    }
    off.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let q = off[((off.len() - 1) as f64 * 0.999).round() as usize];
    let top = off[off.len() - 1];
    if !(q > 0.0) {
        return vec![0.0];
    }
    let (lo, q) = (q * 1e-3, top);
    let steps = points - 1;
    let mut grid = vec![0.0];
    for s in 0..steps {
        let frac = if steps == 1 { 1.0 } else { s as f64 / (steps - 1) as f64 };
        grid.push(lo * (q / lo).powf(frac));
    }
    grid
}

/// Relationship estimate from a SNP subset, re-estimating frequencies on it.
pub fn grm_from_subset<T: Real>(panel: &GenotypePanel, snps: &[usize], maf_min: f64) -> Result<RelationshipMatrix<T>> {
    let sub = estimate_allele_freqs(panel.select_snps(snps))?;
    let z = scale_genotypes::<T>(&sub, maf_min)?;
    estimate_grm(&z)
}

struct RepeatSetup<T: Real> {
    train: RelationshipMatrix<T>,
    decomp: TreeletDecomposition<T>,
    tests: Vec<RelationshipMatrix<T>>,
}

fn prepare_repeat<T: Real>(
    panel: &GenotypePanel,
    snps: &[SnpMeta],
    config: &SubsampleConfig,
    repeat: usize,
) -> Result<RepeatSetup<T>> {
    let mut rng = stream_rng(config.rng_seed, repeat as u64);
    let (train_chroms, test_chroms) = split_chromosomes(snps, &mut rng)?;
    let on = |chroms: &[u32]| -> Vec<usize> {
        snps.iter()
            .enumerate()
            .filter(|(_, s)| chroms.binary_search(&s.chromosome).is_ok())
            .map(|(k, _)| k)
            .collect()
    };
    let (train_pool, test_pool) = (on(&train_chroms), on(&test_chroms));
    let train_idx = sample_blackout(
        snps,
        &train_pool,
        config.training_snps,
        config.blackout,
        config.blackout_unit,
        &mut rng,
    )?;
    let test_sets = (0..config.test_subsamples)
        .map(|_| {
            sample_blackout(
                snps,
                &test_pool,
                config.test_snps,
                config.blackout,
                config.blackout_unit,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let train = grm_from_subset::<T>(panel, &train_idx, config.maf_min)?;
    let decomp = build_treelet(
        &train,
        TreeletConfig {
            levels: None,
            similarity: config.similarity,
        },
    )?;
    let tests = test_sets
        .par_iter()
        .map(|idx| grm_from_subset::<T>(panel, idx, config.maf_min))
        .collect::<Result<Vec<_>>>()?;
    Ok(RepeatSetup { train, decomp, tests })
}

fn repeat_risks<T: Real>(setup: &RepeatSetup<T>, grid: &[T], config: &SubsampleConfig) -> Result<Vec<T>> {
    let weights = treelet_weights(&setup.decomp);
    let dirac;
    let smoother = match config.method {
        SmoothingMethod::Treelet => Smoother::from_transformed(&setup.decomp),
        SmoothingMethod::Simple => {
            dirac = DiracBasis::new(&setup.train);
            Smoother::from_transformed(&dirac)
        }
    };
    grid.par_iter()
        .map(|&lambda| {
            let smoothed = smoother.smooth(lambda, config.smooth)?;
            weighted_risk(&smoothed.values, &setup.tests, &weights)
        })
        .collect()
}

/// Selects the smoothing parameter minimizing the repeat-averaged weighted
/// risk. Ties go to the smallest lambda. Deterministic in `config.rng_seed`:
/// every repeat draws from its own stream, so thread count does not matter.
pub fn select_lambda<T: Real>(panel: &GenotypePanel, config: &SubsampleConfig) -> Result<TuningResult<T>> {
    config.validate()?;
    let snps = match config.split {
        SplitMode::Chromosomes => panel.snps().to_vec(),
        SplitMode::PositionBlocks(blocks) => position_block_labels(panel.snps(), blocks),
    };
    let setups = (0..config.repeats)
        .into_par_iter()
        .map(|r| prepare_repeat::<T>(panel, &snps, config, r))
        .collect::<Result<Vec<_>>>()?;

    let grid_f64 = match &config.lambda_grid {
        LambdaGrid::Explicit(g) => g.clone(),
        LambdaGrid::Auto { points } => auto_lambda_grid(setups[0].decomp.transformed(), *points),
    };
    let grid: Vec<T> = grid_f64.iter().map(|&l| T::lit(l)).collect();

    let per_repeat = setups
        .iter()
        .map(|s| repeat_risks(s, &grid, config))
        .collect::<Result<Vec<_>>>()?;

    let reps = T::from_usize_lossy(config.repeats);
    let risk_curve: Vec<(T, T)> = grid
        .iter()
        .enumerate()
        .map(|(g, &l)| (l, per_repeat.iter().map(|r| r[g]).sum::<T>() / reps))
        .collect();
    let mut best = 0;
    for (g, &(_, h)) in risk_curve.iter().enumerate() {
        if h < risk_curve[best].1 {
            best = g;
        }
    }

    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut nonzero = 0usize;
    let mut count = 0usize;
    for s in &setups {
        let w = treelet_weights(&s.decomp);
        let n = w.nrows();
        for j in 1..n {
            for i in 0..j {
                let v = w[(i, j)].as_f64();
                sum += v;
                max = max.max(v);
                nonzero += usize::from(v > 0.0);
                count += 1;
            }
        }
    }
    let count = count.max(1) as f64;
    Ok(TuningResult {
        lambda_hat: risk_curve[best].0,
        risk_curve,
        weights_summary: WeightsSummary {
            mean: sum / count,
            max,
            nonzero_fraction: nonzero as f64 / count,
        },
        per_repeat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grm::MatrixKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snps_on(chroms: &[u32], per: usize) -> Vec<SnpMeta> {
        chroms
            .iter()
            .flat_map(|&c| (0..per).map(move |k| SnpMeta::new(format!("{c}_{k}"), c, k as u64 * 100)))
            .collect()
    }

    #[test]
    fn split_22() {
        let snps = snps_on(&(1..=22).collect::<Vec<_>>(), 1);
        let (tr, te) = split_chromosomes(&snps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((tr.len(), te.len()), (11, 11));
        assert!(tr.iter().all(|c| !te.contains(c)));
    }

    #[test]
    fn split_odd_gives_training_extra() {
        let snps = snps_on(&[1, 2, 3], 1);
        let (tr, te) = split_chromosomes(&snps, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!((tr.len(), te.len()), (2, 1));
        let snps = snps_on(&[1, 2], 1);
        let (tr, te) = split_chromosomes(&snps, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));
    }

    #[test]
    fn split_single_chromosome_errors() {
        let snps = snps_on(&[4], 10);
        assert!(split_chromosomes(&snps, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let relabeled = position_block_labels(&snps, 2);
        let chroms: BTreeSet<u32> = relabeled.iter().map(|s| s.chromosome).collect();
        assert_eq!(chroms.len(), 2);
    }

    #[test]
    fn blackout_spacing() {
        let snps = snps_on(&[1], 100);
        let all: Vec<usize> = (0..100).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let pick = sample_blackout(&snps, &all, 5, 10, BlackoutUnit::Snps, &mut rng).unwrap();
            assert_eq!(pick.len(), 5);
            for w in pick.windows(2) {
                assert!(w[1] - w[0] >= 10);
            }
        }
    }

    #[test]
    fn blackout_zero_is_plain_sampling() {
        let snps = snps_on(&[1], 10);
        let all: Vec<usize> = (0..10).collect();
        let pick = sample_blackout(
            &snps,
            &all,
            10,
            0,
            BlackoutUnit::Snps,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(pick, all);
    }

    #[test]
    fn blackout_infeasible_reports_max() {
        let snps = snps_on(&[1], 20);
        let all: Vec<usize> = (0..20).collect();
        let err = sample_blackout(
            &snps,
            &all,
            5,
            10,
            BlackoutUnit::Snps,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Infeasible {
                requested: 5,
                max_feasible: 2
            }
        ));
    }

    #[test]
    fn blackout_base_pair_units() {
        // Positions are 100 apart: a 250 bp window leaves every third SNP.
        let snps = snps_on(&[1], 30);
        let all: Vec<usize> = (0..30).collect();
        assert_eq!(max_feasible(&snps, &all, 250, BlackoutUnit::BasePairs), 10);
        let pick = sample_blackout(
            &snps,
            &all,
            6,
            250,
            BlackoutUnit::BasePairs,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        for w in pick.windows(2) {
            assert!(snps[w[1]].position - snps[w[0]].position >= 250);
        }
    }

    fn rel(n: usize, f: impl Fn(usize, usize) -> f64) -> RelationshipMatrix<f64> {
        RelationshipMatrix::new(
            DMatrix::from_fn(n, n, |i, j| f(i.min(j), i.max(j))),
            (0..n).map(|i| i.to_string()).collect(),
            MatrixKind::RawEstimate,
        )
        .unwrap()
    }

    #[test]
    fn risk_hand_value() {
        let tilde = rel(2, |i, j| if i == j { 1.0 } else { 0.1 });
        let test = rel(2, |i, j| if i == j { 1.0 } else { 0.5 });
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = 2.0;
        w[(1, 0)] = 2.0;
        let h = weighted_risk(&tilde, &[test], &w).unwrap();
        assert!((h - 0.16).abs() < 1e-15);
    }

    #[test]
    fn risk_zero_cases() {
        let tilde = rel(3, |i, j| (i + j) as f64 * 0.1);
        let same = tilde.clone();
        let w = DMatrix::from_element(3, 3, 1.0);
        assert_eq!(weighted_risk(&tilde, &[same], &w).unwrap(), 0.0);
        let other = rel(3, |_, _| 5.0);
        assert_eq!(weighted_risk(&tilde, &[other], &DMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn risk_dimension_mismatch() {
        let a = rel(2, |_, _| 0.0);
        let b = rel(3, |_, _| 0.0);
        assert!(weighted_risk(&a, &[b], &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn auto_grid_shape() {
        let t = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.1 * (i + j) as f64 });
        let g = auto_lambda_grid(&t, 10);
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!((g[9] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = SubsampleConfig::default();
        assert!(c.validate().is_ok());
        c.test_snps = c.training_snps;
        assert!(c.validate().is_err());
        let c = SubsampleConfig {
            lambda_grid: LambdaGrid::Explicit(vec![0.1, 0.05]),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}

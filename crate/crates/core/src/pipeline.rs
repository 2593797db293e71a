//! End-to-end run: simulate a panel, estimate the GRM from a SNP subset,
//! tune and apply both smoothers, fit REML on each matrix and score them
//! against the pedigree truth.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::eval::{DegreeBins, EvalReport, DEFAULT_ZERO_EPS};
use crate::genotype::{estimate_allele_freqs, scale_genotypes, DEFAULT_MAF_MIN};
use crate::grm::RelationshipMatrix;
use crate::pedsim::{phenotype_rng, simulate_panel, simulate_phenotype, SimulatedPanel, SimulationSpec};
use crate::reml::{fit_variance_components, PhenotypeVector, VarianceComponents};
use crate::stream_rng;
use crate::tcs::{simple_threshold, smooth_covariance, SmoothedMatrix};
use crate::treelet::{build_treelet, TreeletConfig, TreeletDecomposition};
use crate::tuning::{grm_from_subset, select_lambda, SmoothingMethod, SubsampleConfig, TuningResult};

const TAG_SUBSET: u64 = 5 << 40;

/// Named parameter bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub simulation: SimulationSpec,
    /// SNPs used for the raw GRM (`m`).
    pub grm_snps: usize,
    pub tuning: SubsampleConfig,
    pub bins: DegreeBins,
    pub zero_eps: f64,
}

impl Preset {
    /// Scaled-down run: 20 families of 10, m = 10,000, M = 2,000, b = 10,
    /// k = 50, L = 20, 3 repeats.
    pub fn desk(seed: u64) -> Self {
        Self {
            name: "desk".into(),
            simulation: SimulationSpec {
                rng_seed: seed,
                ..SimulationSpec::default()
            },
            grm_snps: 10_000,
            tuning: SubsampleConfig {
                training_snps: 2000,
                test_subsamples: 20,
                repeats: 3,
                rng_seed: seed,
                ..SubsampleConfig::default()
            },
            bins: DegreeBins::default(),
            zero_eps: DEFAULT_ZERO_EPS,
        }
    }

    /// Full scale: 100 families of 10, m = 100,000, M = 5,000, k = 50,
    /// L = 50, 10 repeats.
    pub fn paper(seed: u64) -> Self {
        Self {
            name: "paper".into(),
            simulation: SimulationSpec {
                rng_seed: seed,
                ..SimulationSpec::paper()
            },
            grm_snps: 100_000,
            tuning: SubsampleConfig {
                rng_seed: seed,
                ..SubsampleConfig::default()
            },
            bins: DegreeBins::default(),
            zero_eps: DEFAULT_ZERO_EPS,
        }
    }

    pub fn by_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(seed)),
            "paper" => Ok(Self::paper(seed)),
            other => Err(Error::Invalid(format!(
                "unknown preset {other:?} (expected desk or paper)"
            ))),
        }
    }

    /// Sets the seed of every random component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.simulation.rng_seed = seed;
        self.tuning.rng_seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.simulation.rng_seed
    }
}

/// REML fit on one of the pipeline's matrices.
#[derive(Debug, Clone)]
pub struct NamedFit {
    pub method: String,
    pub lambda: Option<f64>,
    pub fit: Result<VarianceComponents<f64>, String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub sim: SimulatedPanel,
    /// Panel columns behind the raw GRM.
    pub grm_snps: Vec<usize>,
    pub a_hat: RelationshipMatrix<f64>,
    pub treelet: TreeletDecomposition<f64>,
    pub tcs_tuning: TuningResult<f64>,
    pub simple_tuning: TuningResult<f64>,
    pub tcs: SmoothedMatrix<f64>,
    pub simple: SmoothedMatrix<f64>,
    pub phenotype: PhenotypeVector<f64>,
    pub fits: Vec<NamedFit>,
    pub report: EvalReport,
}

/// Splits the common SNPs of `sim` into `m` GRM columns (sorted) and the
/// remainder, from which causal SNPs are drawn.
pub fn split_grm_snps(sim: &SimulatedPanel, m: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let common = estimate_allele_freqs(sim.panel.clone())?.common_snps(DEFAULT_MAF_MIN);
    if common.len() < m {
        return Err(Error::Invalid(format!(
            "{m} GRM SNPs requested but only {} common SNPs simulated",
            common.len()
        )));
    }
    let mut rng = stream_rng(seed, TAG_SUBSET);
    let order = sample(&mut rng, common.len(), common.len()).into_vec();
    let mut grm: Vec<usize> = order[..m].iter().map(|&k| common[k]).collect();
    let mut rest: Vec<usize> = order[m..].iter().map(|&k| common[k]).collect();
    grm.sort_unstable();
    rest.sort_unstable();
    Ok((grm, rest))
}

/// Polygenic phenotype of the panel samples with `causal_count` causal SNPs
/// (at most all of them) drawn from the panel columns `causal_pool`.
pub fn polygenic_phenotype(
    sim: &SimulatedPanel,
    causal_pool: &[usize],
    causal_count: usize,
    h2: f64,
    seed: u64,
) -> Result<PhenotypeVector<f64>> {
    let causal_panel = estimate_allele_freqs(sim.panel.select_snps(causal_pool))?;
    let z = scale_genotypes::<f64>(&causal_panel, DEFAULT_MAF_MIN)?;
    let mut rng = phenotype_rng(seed, 0);
    let (y, _) = simulate_phenotype(&z, causal_count.min(z.n_snps()), h2, &mut rng)?;
    Ok(y)
}

/// Runs the full chain for `preset`.
pub fn run_pipeline(preset: &Preset) -> Result<PipelineOutput> {
    let seed = preset.seed();
    let spec = &preset.simulation;
    log::info!("simulating {} families of {}", spec.n_families, spec.family_size);
    let sim = simulate_panel(spec)?;
    let (grm_snps, causal_pool) = split_grm_snps(&sim, preset.grm_snps, seed)?;
    let a_hat = grm_from_subset::<f64>(&sim.panel, &grm_snps, preset.tuning.maf_min)?;

    log::info!("tuning");
    let tcs_tuning = select_lambda::<f64>(&sim.panel, &preset.tuning)?;
    let simple_cfg = SubsampleConfig {
        method: SmoothingMethod::Simple,
        ..preset.tuning.clone()
    };
    let simple_tuning = select_lambda::<f64>(&sim.panel, &simple_cfg)?;

    let treelet = build_treelet(
        &a_hat,
        TreeletConfig {
            levels: None,
            similarity: preset.tuning.similarity,
        },
    )?;
    let tcs = smooth_covariance(&a_hat, &treelet, tcs_tuning.lambda_hat, preset.tuning.smooth)?;
    let simple = simple_threshold(&a_hat, simple_tuning.lambda_hat, preset.tuning.smooth)?;

    log::info!("fitting variance components");
    let phenotype = polygenic_phenotype(&sim, &causal_pool, spec.causal_count, spec.h2_true, seed)?;
    let fits = [
        ("raw", None, &a_hat),
        ("tcs", Some(tcs_tuning.lambda_hat), &tcs.values),
        ("simple", Some(simple_tuning.lambda_hat), &simple.values),
    ]
    .into_iter()
    .map(|(method, lambda, a)| NamedFit {
        method: method.to_string(),
        lambda,
        fit: fit_variance_components(&phenotype, a).map_err(|e| e.to_string()),
    })
    .collect();

    let mut report = EvalReport::new();
    for (method, a) in [("raw", &a_hat), ("tcs", &tcs.values), ("simple", &simple.values)] {
        report.add(method, &sim.truth, a, &preset.bins, preset.zero_eps)?;
    }
    Ok(PipelineOutput {
        sim,
        grm_snps,
        a_hat,
        treelet,
        tcs_tuning,
        simple_tuning,
        tcs,
        simple,
        phenotype,
        fits,
        report,
    })
}

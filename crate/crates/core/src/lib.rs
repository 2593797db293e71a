//! Genetic relationship matrices from SNP panels, treelet covariance
//! smoothing with subsampling-based tuning, and REML heritability estimation,
//! together with a pedigree simulator that provides ground truth.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64` and
//! `*F32` aliases below fix the scalar for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod error;
pub mod eval;
pub mod formats;
pub mod genotype;
pub mod grm;
pub mod pedsim;
pub mod pipeline;
pub mod reml;
pub mod scalar;
pub mod tcs;
pub mod treelet;
pub mod tuning;

pub use basis::{DiracBasis, PcaBasis, SmoothingBasis};
pub use error::{Error, Result};
pub use genotype::{estimate_allele_freqs, scale_genotypes, GenotypePanel, ScaledPanel, SnpMeta};
pub use grm::{
    degree_of_relationship, estimate_grm, pedigree_expected_relationship, MatrixKind, Pedigree, PedigreeMember,
    RelationshipMatrix,
};
pub use pipeline::{run_pipeline, PipelineOutput, Preset};
pub use scalar::Real;
pub use tcs::{simple_threshold, smooth_covariance, SmoothOptions, SmoothedMatrix, Smoother};
pub use treelet::{build_treelet, Similarity, TreeletConfig, TreeletDecomposition};
pub use tuning::{select_lambda, SubsampleConfig, TuningResult};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Library version, written into output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type RelationshipMatrixF64 = RelationshipMatrix<f64>;
pub type RelationshipMatrixF32 = RelationshipMatrix<f32>;
pub type ScaledPanelF64 = ScaledPanel<f64>;
pub type ScaledPanelF32 = ScaledPanel<f32>;
pub type TreeletDecompositionF64 = TreeletDecomposition<f64>;
pub type TreeletDecompositionF32 = TreeletDecomposition<f32>;
pub type SmoothedMatrixF64 = SmoothedMatrix<f64>;
pub type SmoothedMatrixF32 = SmoothedMatrix<f32>;
pub type TuningResultF64 = TuningResult<f64>;
pub type TuningResultF32 = TuningResult<f32>;

/// Independent random stream `stream` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

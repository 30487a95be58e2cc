//! Peptide embedding codec, property conditioning, synthetic negatives,
//! gradient-boosted classification, embedding-space diffusion, and
//! generation/evaluation metrics.

pub mod conditioning;
pub mod data;
pub mod diffusion;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod fasta;
pub mod features;
pub mod gbdt;
pub mod metrics;
pub mod seq;
pub mod synthetic;

pub use conditioning::{ConditioningVector, PropertyMask, PropertyRanges};
pub use diffusion::{
    CadsConfig, Denoiser, EncodedCondition, NoiseSchedule, ToyConfig, ToyDenoiser,
};
pub use embedding::{Codec, CodecSpace, EmbeddingMatrix, ScaleTable, Token};
pub use error::{Error, Result};
pub use evaluation::{EvalReport, LrPlus, RobustnessReport, ScoredExample};
pub use fasta::{FastaFile, FastaRecord};
pub use features::FeatureVector;
pub use gbdt::{GbdtModel, LabeledExample, Provenance, TrainConfig};
pub use metrics::{FitnessTable, MetricsReport};
pub use seq::{PeptideSequence, Residue};
pub use synthetic::{NegativeMode, NegativeSpec, SyntheticRecord};

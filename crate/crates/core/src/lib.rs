//! Appearance-guided association for online video instance tracking.
//!
//! Each frame's detections are matched to persistent track slots by solving a
//! maximum-score assignment over a fused score: object-embedding similarity
//! plus similarity between mask-pooled appearance queries and a short
//! confidence-weighted memory of what each slot looked like recently.
//!
//! Alongside the tracker the crate carries a seeded synthetic benchmark
//! (Bezier trajectories, depth-ordered elliptical masks, a detector
//! simulator) and the evaluation used to compare association variants.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below name the common double-precision instantiations.

pub mod appearance_pool;
pub mod assignment;
pub mod contrastive;
pub mod dataset_io;
pub mod error;
pub mod memory_bank;
pub mod metrics;
pub mod scalar;
pub mod scenario_gen;
pub mod similarity;
pub mod tracker;

pub use appearance_pool::{
    masked_average_pool, masked_average_pool_with, pool_all_instances, FeatureMap, InstanceMask,
    PoolOptions,
};
pub use assignment::{
    brute_force_assignment, invert_permutation, solve_assignment, tie_tolerance,
    AssignmentResult, ScoreMatrix,
};
pub use contrastive::{
    contrastive_loss, gradient_check, refine_embeddings, silhouette_cosine, ContrastivePair,
    LabeledEmbeddings, LossReport, RefineConfig, RefineResult,
};
pub use error::{Error, Result};
pub use memory_bank::{MemoryBank, MemoryReadout, MemoryRecord};
pub use scalar::Scalar;
pub use similarity::{cosine, cosine_similarity_matrix, fuse_scores, EmbeddingSet, FusionWeights};
pub use tracker::{
    track_video, FrameDetections, FrameOutput, Prediction, TrackOutput, Tracker, TrackerConfig,
};

pub type ScoreMatrix64 = ScoreMatrix<f64>;
pub type ScoreMatrix32 = ScoreMatrix<f32>;
pub type EmbeddingSet64 = EmbeddingSet<f64>;
pub type EmbeddingSet32 = EmbeddingSet<f32>;
pub type FusionWeights64 = FusionWeights<f64>;
pub type MemoryBank64 = MemoryBank<f64>;
pub type TrackerConfig64 = TrackerConfig<f64>;
pub type Tracker64 = Tracker<f64>;
pub type FrameDetections64 = FrameDetections<f64>;
pub type TrackOutput64 = TrackOutput<f64>;
pub type FeatureMap64 = FeatureMap<f64>;
pub type InstanceMask64 = InstanceMask<f64>;
pub type ContrastivePair64 = ContrastivePair<f64>;

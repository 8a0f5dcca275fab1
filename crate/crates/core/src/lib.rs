//! Factorization-machine recommender for implicit company-well interaction
//! data.
//!
//! The pipeline is: load interactions and well attributes ([`dataset`]),
//! train a second-order factorization machine ([`fm`]) with a pairwise
//! ranking loss ([`train`]), rank unseen wells per company ([`ranker`]) and
//! score the rankings on leave-one-out splits ([`metrics`]).

pub mod config;
pub mod dataset;
pub mod error;
pub mod fm;
pub mod metrics;
pub mod ranker;
pub mod rng;
pub mod synthetic;
pub mod train;

pub use config::{LossKind, Schedule, TrainConfig};
pub use dataset::{
    encode_row, load_interactions, load_well_features, split_leave_one_out, Dataset, EncodedRow,
    InteractionSet, SplitPair, WellFeatureTable,
};
pub use error::{Error, Result};
pub use fm::{init_model, load_model, save_model, sigmoid, FmModel};
pub use metrics::{evaluate, EvalReport, RelevanceMode, ThresholdClassification, ThresholdSpec};
pub use ranker::{
    mean_well_scores, popularity_baseline, recommend_top_k, score_all_wells, RankedList,
};
pub use train::{train, LossTrace, TripleSample};

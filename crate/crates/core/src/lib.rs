//! End-to-end verification engine: an encoder and a learned
//! pseudo-distance trained jointly on labeled data, scored and audited
//! against analytic Gaussian oracles.
//!
//! The crate is organized bottom-up:
//!
//! - [`mat`], [`rng`], [`nn`], [`gradcheck`] — deterministic dense-matrix
//!   and backpropagation substrate;
//! - [`models`] — encoder, distance model, classifier head;
//! - [`pairing`], [`losses`], [`trainer`] — batch construction, the
//!   training objective, and the SGD loop;
//! - [`scoring`], [`retrieval`], [`audit`] — trials, EER/ROC metrics,
//!   clustering and distance-property audits;
//! - [`oracle`] — synthetic Gaussian tasks with closed-form pair
//!   likelihood ratios;
//! - [`io`] — IDX/CSV ingestion, checkpoints, config files.

pub mod audit;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod mat;
pub mod models;
pub mod nn;
pub mod oracle;
pub mod pairing;
pub mod retrieval;
pub mod rng;
pub mod scoring;
pub mod trainer;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use gradcheck::{grad_check, GradCheckReport, ParamAccess};
pub use mat::Matrix;
pub use models::{
    classify_logits, distance_score, encode, init_models, DistanceConfig, EncoderConfig, HeadInit,
    Mode, ModelBundle,
};
pub use nn::Param;
pub use rng::Rng;

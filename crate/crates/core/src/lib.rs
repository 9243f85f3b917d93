//! Membership-inference privacy auditing for binary classifiers.
//!
//! The crate runs the membership-inference game against a dense feed-forward
//! classifier, trains shadow ensembles, scores every challenge candidate with
//! the likelihood-ratio attack (LiRA) and the robust membership inference
//! attack (RMIA), and evaluates the scores at fixed low false positive rates
//! against the random-guessing baseline.
//!
//! Module map:
//!
//! * [`data`]: CSV ingestion, deduplication, splitting, class weights.
//! * [`nnet`]: from-scratch MLP with AdamW, weighted cross-entropy and early stopping.
//! * [`game`]: challenge construction, target training, shadow ensembles.
//! * [`attacks`]: LiRA and RMIA scoring.
//! * [`stats`]: Gaussian fits, exact/approximate rank tests, hypergeometric mean.
//! * [`eval`]: ROC sweeps, TPR at fixed FPR, overlap and characteristic analyses.
//! * [`config`], [`synth`], [`pipeline`], [`report`]: the end-to-end experiment driver.

pub mod attacks;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod game;
pub mod nnet;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

//! Prediction of ASR word error rate from transcripts and audio.
//!
//! The crate is organised around the pipeline it implements:
//!
//! * [`corpus`] — dataset model, JSON-lines manifest ingestion, train/dev
//!   splitting and a synthetic corpus generator so every experiment runs
//!   without proprietary speech data.
//! * [`scoring`] — reference WER via word-level edit alignment, plus the
//!   evaluation metrics (MAE, Kendall τ-b, Wilcoxon signed-rank, per-group
//!   aggregation, WER histograms).
//! * [`dsp`] — audio front-end: WAV loading with resampling to 8 kHz,
//!   mel-spectrogram, MFCC and averaged signal features.
//! * [`textfeat`] — word-embedding tables and utterance-to-matrix encoding.
//! * [`nn`] — a small neural-network engine (1-D convolutions, pooling,
//!   dense layers, dropout, batch norm), MAE loss, the Adadelta optimizer
//!   and finite-difference gradient checking.
//! * [`models`] — the three predictor architectures (text CNN, deep signal
//!   CNN, joint fusion), the two prediction heads and the training protocol
//!   with restarts and dev-set selection.
//! * [`baseline`] — engineered-feature regression baseline: POS, LM, LEX
//!   and SIG feature extractors with extra-trees and ridge regressors.
//!
//! Batch operations (feature extraction, mini-batch training, restart
//! training, dataset prediction) run data-parallel with rayon when the
//! default `parallel` feature is enabled and fall back to equivalent
//! sequential loops without it. Results are bit-identical either way:
//! every parallel reduction uses a fixed tree shape or a fixed element
//! order.

pub mod baseline;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod models;
pub mod nn;
pub mod parallel;
pub mod scoring;
pub mod tensor;
pub mod textfeat;

pub use error::{Error, Result};
pub use tensor::Tensor2;

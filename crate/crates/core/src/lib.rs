//! Cough-audio screening toolkit.
//!
//! The pipeline runs WAV decoding and resampling to a canonical rate, energy-gated
//! single-cough segmentation, per-signal MinMax normalization, frame-level
//! MFCC / chroma / spectral-contrast extraction averaged into fixed-length
//! vectors, and two classifiers (an Adam-trained MLP and an RBF SVM solved
//! with SMO). Six train/test scenarios over the COUGHVID and Virufy
//! datasets are evaluated with accuracy, per-class precision/recall/F1 and AUC.
//!
//! Every numeric kernel (FFT, windows, filterbanks, DCT, backprop, SMO) lives
//! in this crate.

pub mod audio;
pub mod cache;
pub mod config;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod manifest;
pub mod models;
pub mod preprocess;
pub mod synth;

pub use audio::{AudioClip, CANONICAL_SAMPLE_RATE};
pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureVector};
pub use preprocess::{CoughSegment, Dataset, Label};

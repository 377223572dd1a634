//! Frame-level MFCC, chroma and spectral-contrast descriptors and their
//! aggregation into fixed-length vectors.

pub mod chroma;
pub mod contrast;
pub mod mel;
pub mod stft;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{CoughSegment, Dataset, Label};

pub use chroma::{chroma, ChromaMap};
pub use contrast::{spectral_contrast, sub_bands, ContrastParams, SubBand};
pub use mel::{mel_filterbank, mfcc};
pub use stft::{stft, Spectrogram, StftPlan};

pub const N_MFCC: usize = 13;
pub const N_CHROMA: usize = chroma::N_CHROMA;
pub const N_CONTRAST: usize = contrast::DEFAULT_N_BANDS + 1;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid feature parameters: {0}")]
    InvalidParams(String),
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in {0} features")]
    NonFinite(FeatureKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mfcc,
    Chroma,
    Contrast,
    Combined,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::Mfcc,
        FeatureKind::Chroma,
        FeatureKind::Contrast,
        FeatureKind::Combined,
    ];

    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Mfcc => N_MFCC,
            FeatureKind::Chroma => N_CHROMA,
            FeatureKind::Contrast => N_CONTRAST,
            FeatureKind::Combined => N_MFCC + N_CHROMA + N_CONTRAST,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Chroma => "chroma",
            FeatureKind::Contrast => "contrast",
            FeatureKind::Combined => "combined",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "MFCC",
            FeatureKind::Chroma => "Chroma",
            FeatureKind::Contrast => "Spectral Contrast",
            FeatureKind::Combined => "Combined (MFCC, Chroma and Spectral Contrast)",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mfcc" => Ok(FeatureKind::Mfcc),
            "chroma" => Ok(FeatureKind::Chroma),
            "contrast" | "spectral_contrast" => Ok(FeatureKind::Contrast),
            "combined" => Ok(FeatureKind::Combined),
            other => Err(format!("unknown feature kind {other:?}")),
        }
    }
}

/// Aggregated descriptor of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
    pub segment_id: String,
    pub dataset: Dataset,
    pub label: Label,
}

impl FeatureVector {
    /// Recording the segment was cut from (segment ids are `<parent>#<n>`).
    pub fn group(&self) -> &str {
        self.segment_id
            .rsplit_once('#')
            .map_or(self.segment_id.as_str(), |(parent, _)| parent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureParams {
    pub n_fft: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub chroma_fmin: f64,
    pub contrast_fmin: f64,
    pub contrast_quantile: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop_length: 512,
            n_mels: 128,
            chroma_fmin: chroma::DEFAULT_CHROMA_FMIN,
            contrast_fmin: contrast::DEFAULT_CONTRAST_FMIN,
            contrast_quantile: contrast::DEFAULT_QUANTILE,
        }
    }
}

/// Element-wise mean over frames.
pub fn aggregate_frames(frames: &Array2<f64>) -> Result<Vec<f64>, FeatureError> {
    if frames.nrows() == 0 {
        return Err(FeatureError::EmptyInput);
    }
    Ok(frames
        .mean_axis(Axis(0))
        .ok_or(FeatureError::EmptyInput)?
        .to_vec())
}

/// Precomputed STFT plan, mel filterbank, chroma map and contrast bands for
/// one sample rate. Immutable after construction, so one instance can serve
/// a pool of extraction workers.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    sample_rate: u32,
    plan: StftPlan,
    filterbank: Array2<f64>,
    chroma_map: ChromaMap,
    bands: Vec<SubBand>,
}

/// Per-frame descriptor matrices for one segment.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub mfcc: Array2<f64>,
    pub chroma: Array2<f64>,
    pub contrast: Array2<f64>,
}

impl FeatureExtractor {
    pub fn new(params: &FeatureParams, sample_rate: u32) -> Result<Self, FeatureError> {
        let plan = StftPlan::new(params.n_fft, params.hop_length)?;
        let filterbank = mel_filterbank(params.n_mels, params.n_fft, sample_rate)?;
        let chroma_map = ChromaMap::new(params.n_fft, sample_rate, params.chroma_fmin)?;
        let bands = sub_bands(
            params.n_fft,
            sample_rate,
            &ContrastParams {
                n_bands: contrast::DEFAULT_N_BANDS,
                fmin: params.contrast_fmin,
                quantile: params.contrast_quantile,
            },
        )?;
        Ok(Self {
            sample_rate,
            plan,
            filterbank,
            chroma_map,
            bands,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn filterbank(&self) -> &Array2<f64> {
        &self.filterbank
    }

    pub fn spectrogram(&self, samples: &[f64]) -> Result<Spectrogram, FeatureError> {
        self.plan.compute(samples, self.sample_rate)
    }

    pub fn frames(&self, samples: &[f64]) -> Result<FrameFeatures, FeatureError> {
        let spec = self.spectrogram(samples)?;
        Ok(FrameFeatures {
            mfcc: mfcc(&spec, &self.filterbank, N_MFCC)?,
            chroma: chroma(&spec, &self.chroma_map)?,
            contrast: spectral_contrast(&spec, &self.bands)?,
        })
    }

    /// STFT, the selected descriptor(s), then frame averaging.
    pub fn extract(&self, segment: &CoughSegment, kind: FeatureKind) -> Result<FeatureVector, FeatureError> {
        let mut out = self.extract_many(segment, &[kind])?;
        Ok(out.remove(0))
    }

    /// All requested kinds from a single STFT pass.
    pub fn extract_many(
        &self,
        segment: &CoughSegment,
        kinds: &[FeatureKind],
    ) -> Result<Vec<FeatureVector>, FeatureError> {
        if segment.sample_rate != self.sample_rate {
            return Err(FeatureError::InvalidParams(format!(
                "segment at {} Hz, extractor built for {} Hz",
                segment.sample_rate, self.sample_rate
            )));
        }
        let frames = self.frames(&segment.samples)?;
        let m = aggregate_frames(&frames.mfcc)?;
        let c = aggregate_frames(&frames.chroma)?;
        let s = aggregate_frames(&frames.contrast)?;
        kinds
            .iter()
            .map(|&kind| {
                let values = match kind {
                    FeatureKind::Mfcc => m.clone(),
                    FeatureKind::Chroma => c.clone(),
                    FeatureKind::Contrast => s.clone(),
                    FeatureKind::Combined => [m.as_slice(), &c, &s].concat(),
                };
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(FeatureError::NonFinite(kind));
                }
                Ok(FeatureVector {
                    values,
                    kind,
                    segment_id: segment.id.clone(),
                    dataset: segment.dataset,
                    label: segment.label,
                })
            })
            .collect()
    }
}

/// One-shot extraction with default parameters at the segment's rate.
pub fn extract_feature_set(segment: &CoughSegment, kind: FeatureKind) -> Result<FeatureVector, FeatureError> {
    FeatureExtractor::new(&FeatureParams::default(), segment.sample_rate)?.extract(segment, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_frames(&array![[1.5, -2.0]]).unwrap(), vec![1.5, -2.0]);
        assert_eq!(aggregate_frames(&array![[1.0], [3.0]]).unwrap(), vec![2.0]);
        assert_eq!(
            aggregate_frames(&Array2::<f64>::zeros((0, 3))),
            Err(FeatureError::EmptyInput)
        );
    }

    #[test]
    fn kind_dims() {
        assert_eq!(FeatureKind::Mfcc.dim(), 13);
        assert_eq!(FeatureKind::Chroma.dim(), 12);
        assert_eq!(FeatureKind::Contrast.dim(), 7);
        assert_eq!(FeatureKind::Combined.dim(), 32);
        assert!("zcr".parse::<FeatureKind>().is_err());
    }

    #[test]
    fn group_from_segment_id() {
        let fv = FeatureVector {
            values: vec![],
            kind: FeatureKind::Mfcc,
            segment_id: "data/a.wav#002".into(),
            dataset: Dataset::Virufy,
            label: Label::Positive,
        };
        assert_eq!(fv.group(), "data/a.wav");
    }
}

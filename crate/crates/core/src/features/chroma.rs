//! 12-bin pitch-class profile by bin averaging.

use ndarray::Array2;

use super::{FeatureError, Spectrogram};

pub const N_CHROMA: usize = 12;
/// C1 in 12-TET with A4 = 440 Hz.
pub const DEFAULT_CHROMA_FMIN: f64 = 32.703_195_662_574_83;

/// Nearest pitch class (C = 0 ... B = 11) of a frequency, A4 = 440 Hz.
pub fn pitch_class(hz: f64) -> usize {
    let midi = 69.0 + 12.0 * (hz / 440.0).log2();
    (midi.round() as i64).rem_euclid(12) as usize
}

/// Assignment of STFT bins to pitch classes; bins below `fmin` are unmapped.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromaMap {
    assignment: Vec<Option<usize>>,
    counts: [usize; N_CHROMA],
}

impl ChromaMap {
    pub fn new(n_fft: usize, sample_rate: u32, fmin: f64) -> Result<Self, FeatureError> {
        if !(fmin > 0.0) {
            return Err(FeatureError::InvalidParams("chroma fmin must be positive".into()));
        }
        let mut counts = [0; N_CHROMA];
        let assignment = super::stft::bin_frequencies(n_fft, sample_rate)
            .into_iter()
            .map(|f| {
                (f >= fmin).then(|| {
                    let pc = pitch_class(f);
                    counts[pc] += 1;
                    pc
                })
            })
            .collect();
        Ok(Self { assignment, counts })
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn counts(&self) -> [usize; N_CHROMA] {
        self.counts
    }
}

/// Per frame and pitch class k, the mean magnitude over the bins mapped to k.
/// Classes with no mapped bin are zero.
pub fn chroma(spec: &Spectrogram, map: &ChromaMap) -> Result<Array2<f64>, FeatureError> {
    if map.assignment.len() != spec.n_bins() {
        return Err(FeatureError::InvalidParams(format!(
            "chroma map covers {} bins, spectrogram has {}",
            map.assignment.len(),
            spec.n_bins()
        )));
    }
    let mut out = Array2::zeros((spec.n_frames(), N_CHROMA));
    for (frame, mut dst) in spec.magnitudes.rows().into_iter().zip(out.rows_mut()) {
        for (&m, pc) in frame.iter().zip(&map.assignment) {
            if let Some(pc) = pc {
                dst[*pc] += m;
            }
        }
        for (k, v) in dst.iter_mut().enumerate() {
            if map.counts[k] > 0 {
                *v /= map.counts[k] as f64;
            }
        }
    }
    Ok(out)
}

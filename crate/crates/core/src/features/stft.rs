use ndarray::Array2;

use super::FeatureError;
use crate::dsp::window::hann;
use crate::dsp::{Complex, RealFft};

/// Frame-major STFT magnitudes (`n_frames x (n_fft/2 + 1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
    pub n_fft: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.magnitudes.ncols()
    }

    /// Centre frequency in Hz of each bin.
    pub fn bin_frequencies(&self) -> Vec<f64> {
        bin_frequencies(self.n_fft, self.sample_rate)
    }
}

pub fn bin_frequencies(n_fft: usize, sample_rate: u32) -> Vec<f64> {
    (0..=n_fft / 2)
        .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
        .collect()
}

/// Reusable STFT configuration: Hann window, centred frames, reflection padding.
#[derive(Debug, Clone)]
pub struct StftPlan {
    fft: RealFft,
    window: Vec<f64>,
    hop: usize,
}

impl StftPlan {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self, FeatureError> {
        if hop == 0 {
            return Err(FeatureError::InvalidParams("hop must be positive".into()));
        }
        let fft = RealFft::new(n_fft).ok_or_else(|| {
            FeatureError::InvalidParams(format!("n_fft {n_fft} is not a power of two"))
        })?;
        Ok(Self {
            fft,
            window: hann(n_fft),
            hop,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.fft.len()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Input shorter than one window is zero-padded to `n_fft` before the
    /// `n_fft/2` reflection padding on each side.
    pub fn padded_signal(&self, samples: &[f64]) -> Vec<f64> {
        let n_fft = self.n_fft();
        let mut x = samples.to_vec();
        if x.len() < n_fft {
            x.resize(n_fft, 0.0);
        }
        let pad = n_fft / 2;
        let len = x.len() as isize;
        (-(pad as isize)..len + pad as isize)
            .map(|i| x[reflect_index(i, len)])
            .collect()
    }

    pub fn compute(&self, samples: &[f64], sample_rate: u32) -> Result<Spectrogram, FeatureError> {
        if samples.is_empty() {
            return Err(FeatureError::EmptyInput);
        }
        let n_fft = self.n_fft();
        let padded = self.padded_signal(samples);
        let n_frames = 1 + (padded.len() - n_fft) / self.hop;
        let n_bins = n_fft / 2 + 1;
        let mut magnitudes = Array2::zeros((n_frames, n_bins));
        let mut frame = vec![0.0; n_fft];
        let mut scratch: Vec<Complex> = Vec::with_capacity(n_fft);
        for (t, mut row) in magnitudes.rows_mut().into_iter().enumerate() {
            let start = t * self.hop;
            for ((f, &x), &w) in frame.iter_mut().zip(&padded[start..start + n_fft]).zip(&self.window) {
                *f = x * w;
            }
            let mags = self.fft.magnitudes(&frame, &mut scratch);
            row.iter_mut().zip(mags).for_each(|(dst, m)| *dst = m);
        }
        Ok(Spectrogram {
            magnitudes,
            n_fft,
            hop: self.hop,
            sample_rate,
        })
    }
}

/// numpy "reflect" indexing (edge sample not repeated), periodic for pads
/// longer than the signal.
fn reflect_index(i: isize, len: isize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i.rem_euclid(period);
    (if m < len { m } else { period - m }) as usize
}

/// Magnitude STFT of `samples` with a Hann window and centred frames.
pub fn stft(samples: &[f64], sample_rate: u32, n_fft: usize, hop: usize) -> Result<Spectrogram, FeatureError> {
    StftPlan::new(n_fft, hop)?.compute(samples, sample_rate)
}

//! Octave sub-band spectral contrast.

use ndarray::Array2;

use super::{FeatureError, Spectrogram};

pub const DEFAULT_CONTRAST_FMIN: f64 = 200.0;
pub const DEFAULT_N_BANDS: usize = 6;
pub const DEFAULT_QUANTILE: f64 = 0.02;
/// Added before taking logs of peak and valley means.
pub const CONTRAST_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastParams {
    pub n_bands: usize,
    pub fmin: f64,
    pub quantile: f64,
}

impl Default for ContrastParams {
    fn default() -> Self {
        Self {
            n_bands: DEFAULT_N_BANDS,
            fmin: DEFAULT_CONTRAST_FMIN,
            quantile: DEFAULT_QUANTILE,
        }
    }
}

/// Bin layout of one sub-band: which bins to sort and how many to average
/// at each end.
#[derive(Debug, Clone, PartialEq)]
pub struct SubBand {
    pub bins: Vec<usize>,
    pub n_extreme: usize,
}

/// Band 0 is `[0, fmin]`; band k >= 1 spans `[fmin 2^(k-1), fmin 2^k]` plus
/// the bin just below it; the last band extends to Nyquist. Every band but
/// the last drops its top bin so neighbours do not share it.
pub fn sub_bands(n_fft: usize, sample_rate: u32, params: &ContrastParams) -> Result<Vec<SubBand>, FeatureError> {
    if params.n_bands < 1 {
        return Err(FeatureError::InvalidParams("n_bands must be at least 1".into()));
    }
    if !(params.fmin > 0.0) || !(params.quantile > 0.0 && params.quantile < 1.0) {
        return Err(FeatureError::InvalidParams("contrast fmin > 0 and 0 < quantile < 1 required".into()));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let mut edges = vec![0.0];
    edges.extend((0..=params.n_bands).map(|k| params.fmin * 2f64.powi(k as i32)));
    if edges[..params.n_bands + 1].iter().any(|&e| e >= nyquist) {
        return Err(FeatureError::InvalidParams(format!(
            "contrast band edges exceed Nyquist ({nyquist} Hz)"
        )));
    }
    let freqs = super::stft::bin_frequencies(n_fft, sample_rate);
    let mut bands = Vec::with_capacity(params.n_bands + 1);
    for k in 0..=params.n_bands {
        let (lo, hi) = (edges[k], edges[k + 1]);
        let mut member: Vec<bool> = freqs.iter().map(|&f| f >= lo && f <= hi).collect();
        if let Some(first) = member.iter().position(|&m| m) {
            if k > 0 && first > 0 {
                member[first - 1] = true;
            }
        }
        if k == params.n_bands {
            if let Some(last) = member.iter().rposition(|&m| m) {
                member[last..].iter_mut().for_each(|m| *m = true);
            }
        }
        let count = member.iter().filter(|&&m| m).count();
        let mut bins: Vec<usize> = (0..freqs.len()).filter(|&i| member[i]).collect();
        if k < params.n_bands {
            bins.pop();
        }
        if bins.is_empty() {
            return Err(FeatureError::InvalidParams(format!(
                "contrast sub-band {k} contains no FFT bins at n_fft {n_fft}"
            )));
        }
        let n_extreme = ((params.quantile * count as f64).round_ties_even() as usize)
            .max(1)
            .min(bins.len());
        bands.push(SubBand { bins, n_extreme });
    }
    Ok(bands)
}

/// Per frame and sub-band: `ln(eps + peak) - ln(eps + valley)`, where peak
/// and valley are the means of the largest and smallest `quantile` share of
/// the band's magnitudes (at least one bin each).
pub fn spectral_contrast(spec: &Spectrogram, bands: &[SubBand]) -> Result<Array2<f64>, FeatureError> {
    if let Some(max_bin) = bands.iter().flat_map(|b| b.bins.iter()).max() {
        if *max_bin >= spec.n_bins() {
            return Err(FeatureError::InvalidParams("sub-band layout does not match spectrogram".into()));
        }
    }
    let mut out = Array2::zeros((spec.n_frames(), bands.len()));
    let mut buf = Vec::new();
    for (frame, mut dst) in spec.magnitudes.rows().into_iter().zip(out.rows_mut()) {
        for (band, d) in bands.iter().zip(dst.iter_mut()) {
            buf.clear();
            buf.extend(band.bins.iter().map(|&b| frame[b]));
            buf.sort_by(f64::total_cmp);
            let n = band.n_extreme;
            let valley = buf[..n].iter().sum::<f64>() / n as f64;
            let peak = buf[buf.len() - n..].iter().sum::<f64>() / n as f64;
            *d = (CONTRAST_EPS + peak).ln() - (CONTRAST_EPS + valley).ln();
        }
    }
    Ok(out)
}

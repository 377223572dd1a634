//! Slaney mel filterbank, orthonormal DCT-II and MFCC.

use ndarray::Array2;

use super::{FeatureError, Spectrogram};

/// Log floor applied to mel energies before taking decibels.
pub const LOG_FLOOR: f64 = 1e-10;

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    } else {
        F_SP * mel
    }
}

/// Centre frequencies (Hz) of `n_filters` filters plus the two outer edges.
pub fn mel_edges(n_filters: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect()
}

/// Triangular, area-normalized mel filters from 0 Hz to Nyquist
/// (`n_filters x (n_fft/2 + 1)`).
pub fn mel_filterbank(n_filters: usize, n_fft: usize, sample_rate: u32) -> Result<Array2<f64>, FeatureError> {
    if n_filters < 13 {
        return Err(FeatureError::InvalidParams(format!(
            "need at least 13 mel filters, got {n_filters}"
        )));
    }
    if n_fft < 2 || sample_rate == 0 {
        return Err(FeatureError::InvalidParams("n_fft and sample rate must be positive".into()));
    }
    let n_bins = n_fft / 2 + 1;
    let freqs: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
        .collect();
    let edges = mel_edges(n_filters, sample_rate);
    let mut fb = Array2::zeros((n_filters, n_bins));
    for m in 0..n_filters {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for (k, &f) in freqs.iter().enumerate() {
            let rising = (f - lo) / (centre - lo);
            let falling = (hi - f) / (hi - centre);
            fb[[m, k]] = rising.min(falling).max(0.0) * norm;
        }
        if fb.row(m).iter().all(|&w| w == 0.0) {
            return Err(FeatureError::InvalidParams(format!(
                "mel filter {m} covers no FFT bin; lower n_filters or raise n_fft"
            )));
        }
    }
    Ok(fb)
}

/// Orthonormal DCT-II of `x`, truncated to the first `n_out` coefficients.
pub fn dct2_ortho(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            let sum: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .sum();
            scale * sum
        })
        .collect()
}

/// Log-mel energies in dB: `10 log10(max(fb . |X|^2, floor))`, one row per frame.
pub fn log_mel(spec: &Spectrogram, filterbank: &Array2<f64>) -> Result<Array2<f64>, FeatureError> {
    if filterbank.ncols() != spec.n_bins() {
        return Err(FeatureError::InvalidParams(format!(
            "filterbank has {} bins, spectrogram {}",
            filterbank.ncols(),
            spec.n_bins()
        )));
    }
    let power = spec.magnitudes.mapv(|m| m * m);
    let energies = power.dot(&filterbank.t());
    Ok(energies.mapv(|e| 10.0 * e.max(LOG_FLOOR).log10()))
}

/// MFCCs per frame: DCT-II (orthonormal) of the log-mel energies.
pub fn mfcc(spec: &Spectrogram, filterbank: &Array2<f64>, n_coeffs: usize) -> Result<Array2<f64>, FeatureError> {
    if n_coeffs == 0 || n_coeffs > filterbank.nrows() {
        return Err(FeatureError::InvalidParams(format!(
            "n_coeffs must be in 1..={}",
            filterbank.nrows()
        )));
    }
    let logmel = log_mel(spec, filterbank)?;
    let mut out = Array2::zeros((logmel.nrows(), n_coeffs));
    for (src, mut dst) in logmel.rows().into_iter().zip(out.rows_mut()) {
        let row: Vec<f64> = src.to_vec();
        for (d, c) in dst.iter_mut().zip(dct2_ortho(&row, n_coeffs)) {
            *d = c;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_anchor_points() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(1000.0) - 15.0).abs() < 1e-12);
        for hz in [0.0, 300.0, 999.0, 1000.0, 4000.0, 11_025.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn filterbank_shape_and_structure() {
        let fb = mel_filterbank(128, 2048, 22_050).unwrap();
        assert_eq!(fb.dim(), (128, 1025));
        assert!(fb.iter().all(|&w| w >= 0.0));
        let support: Vec<(usize, usize)> = fb
            .rows()
            .into_iter()
            .map(|r| {
                let first = r.iter().position(|&w| w > 0.0).unwrap();
                let last = r.iter().rposition(|&w| w > 0.0).unwrap();
                (first, last)
            })
            .collect();
        for i in 0..support.len() {
            assert!(fb.row(i).sum() > 0.0);
            for j in i + 2..support.len() {
                let (a, b) = (support[i], support[j]);
                assert!(a.1 < b.0, "rows {i} and {j} overlap");
            }
        }
        let edges = mel_edges(128, 22_050);
        assert!(edges.windows(2).all(|w| w[1] > w[0]));
        assert!((edges[129] - 11_025.0).abs() < 1e-6);
    }

    #[test]
    fn filterbank_rejects_bad_params() {
        assert!(mel_filterbank(12, 2048, 22_050).is_err());
        // 128 filters cannot all land on bins of a 64-point FFT.
        assert!(mel_filterbank(128, 64, 22_050).is_err());
    }

    #[test]
    fn dct_of_constant() {
        let c = -3.25;
        let out = dct2_ortho(&[c; 128], 13);
        assert!((out[0] - c * 128f64.sqrt()).abs() < 1e-9);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-9));
    }
}

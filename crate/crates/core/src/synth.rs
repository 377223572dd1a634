//! Synthetic two-class cough corpus for dataset-free testing.
//!
//! Class A (labelled positive) bursts concentrate their energy in
//! 300-800 Hz, class B (negative) in 1-3 kHz. Each burst is a sum of random
//! sinusoids inside the band, shaped by a randomized attack/decay envelope.
//! Recordings hold several bursts separated by silence, so the same corpus
//! can feed the segmenter or be cut directly at the known burst positions.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav_file, AudioClip};
use crate::preprocess::{CoughSegment, Dataset, Label};

pub const CLASS_A_BAND: (f64, f64) = (300.0, 800.0);
pub const CLASS_B_BAND: (f64, f64) = (1000.0, 3000.0);

const N_PARTIALS: usize = 32;
const LEAD_S: f64 = 0.3;
const GAP_S: f64 = 0.5;
const PAD_S: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub per_class: usize,
    pub segments_per_recording: usize,
    pub sample_rate: u32,
    /// Dataset tags assigned to recordings round-robin.
    pub datasets: Vec<Dataset>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: 200,
            segments_per_recording: 2,
            sample_rate: crate::CANONICAL_SAMPLE_RATE,
            datasets: vec![Dataset::Synthetic],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.per_class < 2 {
            return Err("synthetic per_class must be at least 2".into());
        }
        if self.segments_per_recording == 0 || self.sample_rate == 0 || self.datasets.is_empty() {
            return Err("synthetic segments_per_recording, sample_rate and datasets must be non-empty".into());
        }
        Ok(())
    }
}

/// One generated recording and the sample spans of its bursts.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub clip: AudioClip,
    pub label: Label,
    pub dataset: Dataset,
    pub bursts: Vec<(usize, usize)>,
}

pub fn class_band(label: Label) -> (f64, f64) {
    match label {
        Label::Positive => CLASS_A_BAND,
        Label::Negative => CLASS_B_BAND,
    }
}

fn burst(rng: &mut ChaCha8Rng, band: (f64, f64), sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    let len = (rng.gen_range(0.25..0.6) * sr) as usize;
    let partials: Vec<(f64, f64)> = (0..N_PARTIALS)
        .map(|_| (rng.gen_range(band.0..band.1), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let attack = rng.gen_range(0.005..0.03) * sr;
    let decay = rng.gen_range(0.05..0.2) * sr;
    // Peak-envelope RMS between 0.05 and 0.2, leaving headroom for 16-bit export.
    let gain = rng.gen_range(0.05..0.2) / (N_PARTIALS as f64 / 2.0).sqrt();
    (0..len)
        .map(|n| {
            let t = n as f64;
            let env = if t < attack { t / attack } else { (-(t - attack) / decay).exp() };
            let s: f64 = partials
                .iter()
                .map(|&(f, ph)| (2.0 * PI * f * t / sr + ph).sin())
                .sum();
            gain * env * s
        })
        .collect()
}

/// Deterministic recordings: `per_class` bursts per class, grouped
/// `segments_per_recording` to a recording.
pub fn synth_recordings(cfg: &SynthConfig, seed: u64) -> Vec<SynthRecording> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = cfg.sample_rate as f64;
    let lead = vec![0.0; (LEAD_S * sr) as usize];
    let gap = vec![0.0; (GAP_S * sr) as usize];
    let mut out = Vec::new();
    let mut rec_index = 0;
    for label in [Label::Positive, Label::Negative] {
        let mut remaining = cfg.per_class;
        let mut k = 0;
        while remaining > 0 {
            let count = cfg.segments_per_recording.min(remaining);
            remaining -= count;
            let mut samples = lead.clone();
            let mut bursts = Vec::with_capacity(count);
            for b in 0..count {
                if b > 0 {
                    samples.extend(&gap);
                }
                let x = burst(&mut rng, class_band(label), cfg.sample_rate);
                bursts.push((samples.len(), samples.len() + x.len()));
                samples.extend(x);
            }
            samples.extend(&lead);
            let dataset = cfg.datasets[rec_index % cfg.datasets.len()];
            out.push(SynthRecording {
                clip: AudioClip::new(samples, cfg.sample_rate, format!("synth-{label}-{k:04}")),
                label,
                dataset,
                bursts,
            });
            rec_index += 1;
            k += 1;
        }
    }
    out
}

/// Cuts every recording at its known burst positions (plus 50 ms padding),
/// giving exactly `per_class` un-normalized segments per class.
pub fn synth_dataset(cfg: &SynthConfig, seed: u64) -> Vec<CoughSegment> {
    synth_recordings(cfg, seed)
        .into_iter()
        .flat_map(|rec| {
            let sr = rec.clip.sample_rate as f64;
            let pad = (PAD_S * sr).round() as usize;
            let len = rec.clip.samples.len();
            rec.bursts
                .iter()
                .enumerate()
                .map(|(k, &(s, e))| {
                    let (s, e) = (s.saturating_sub(pad), (e + pad).min(len));
                    CoughSegment {
                        id: format!("{}#{k:03}", rec.clip.source_id),
                        samples: rec.clip.samples[s..e].to_vec(),
                        sample_rate: rec.clip.sample_rate,
                        start_s: s as f64 / sr,
                        end_s: e as f64 / sr,
                        parent_id: rec.clip.source_id.clone(),
                        label: rec.label,
                        dataset: rec.dataset,
                        degenerate: false,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Writes the recordings as 16-bit WAV files plus a `manifest.csv` (paths
/// relative to `dir`) that [`crate::manifest::load_manifest`] accepts.
pub fn write_synth_corpus(dir: &Path, cfg: &SynthConfig, seed: u64) -> crate::Result<PathBuf> {
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| crate::Error::io(&audio_dir, e))?;
    let manifest = dir.join("manifest.csv");
    let cache_err = |e: csv::Error| crate::Error::Cache(format!("{}: {e}", manifest.display()));
    let mut w = csv::Writer::from_path(&manifest).map_err(cache_err)?;
    w.write_record(["path", "dataset", "label"]).map_err(cache_err)?;
    for rec in synth_recordings(cfg, seed) {
        let rel = format!("audio/{}.wav", rec.clip.source_id);
        write_wav_file(&dir.join(&rel), &rec.clip)?;
        w.write_record([rel.as_str(), rec.dataset.as_str(), rec.label.as_str()])
            .map_err(cache_err)?;
    }
    w.flush().map_err(|e| crate::Error::io(&manifest, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let cfg = SynthConfig {
            per_class: 5,
            ..SynthConfig::default()
        };
        let a = synth_dataset(&cfg, 9);
        assert_eq!(a.len(), 10);
        assert_eq!(a.iter().filter(|s| s.label == Label::Positive).count(), 5);
        assert_eq!(a, synth_dataset(&cfg, 9));
        assert_ne!(a, synth_dataset(&cfg, 10));
        // 5 per class in pairs -> 3 recordings per class.
        assert_eq!(synth_recordings(&cfg, 9).len(), 6);
    }

    #[test]
    fn round_robin_dataset_tags() {
        let cfg = SynthConfig {
            per_class: 4,
            datasets: vec![Dataset::Coughvid, Dataset::Virufy],
            ..SynthConfig::default()
        };
        let recs = synth_recordings(&cfg, 1);
        let tags: Vec<Dataset> = recs.iter().map(|r| r.dataset).collect();
        assert_eq!(tags, vec![Dataset::Coughvid, Dataset::Virufy, Dataset::Coughvid, Dataset::Virufy]);
    }
}

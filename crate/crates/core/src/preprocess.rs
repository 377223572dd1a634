//! Single-cough segmentation and per-signal MinMax normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }

    /// Class index used by the classifiers: negative = 0, positive = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// SVM target: +1 for positive, -1 for negative.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "covid-19" | "covid" | "1" => Ok(Label::Positive),
            "negative" | "neg" | "healthy" | "0" => Ok(Label::Negative),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "COUGHVID")]
    Coughvid,
    #[serde(rename = "Virufy")]
    Virufy,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Coughvid => "COUGHVID",
            Dataset::Virufy => "Virufy",
            Dataset::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coughvid" => Ok(Dataset::Coughvid),
            "virufy" => Ok(Dataset::Virufy),
            "synthetic" | "synth" => Ok(Dataset::Synthetic),
            other => Err(format!("unknown dataset {other:?}")),
        }
    }
}

/// One single-cough excerpt of a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoughSegment {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub start_s: f64,
    pub end_s: f64,
    pub parent_id: String,
    pub label: Label,
    pub dataset: Dataset,
    /// Set by [`normalize_signal`] when the segment had zero amplitude range.
    pub degenerate: bool,
}

impl CoughSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Energy-gate segmenter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmenterConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    /// Onset when frame RMS exceeds `k_on * median(RMS)`.
    pub k_on: f64,
    /// Release when frame RMS drops below `k_off * median(RMS)`.
    pub k_off: f64,
    /// Absolute onset floor, used when the median is (near) zero, e.g. digital silence.
    pub min_rms: f64,
    pub min_gap_s: f64,
    pub min_cough_duration_s: f64,
    pub padding_s: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            frame_length: 1024,
            hop_length: 512,
            k_on: 2.0,
            k_off: 1.2,
            min_rms: 0.005,
            min_gap_s: 0.15,
            min_cough_duration_s: 0.2,
            padding_s: 0.05,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.frame_length == 0 || self.hop_length == 0 {
            return Err("segmenter frame_length and hop_length must be positive".into());
        }
        if !(self.k_on > 0.0 && self.k_off > 0.0 && self.k_off <= self.k_on) {
            return Err("segmenter requires 0 < k_off <= k_on".into());
        }
        if !(self.min_rms > 0.0) {
            return Err("segmenter min_rms must be positive".into());
        }
        for (name, v) in [
            ("min_gap_s", self.min_gap_s),
            ("min_cough_duration_s", self.min_cough_duration_s),
            ("padding_s", self.padding_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("segmenter {name} must be a non-negative number"));
            }
        }
        Ok(())
    }

    fn thresholds(&self, median: f64) -> (f64, f64) {
        let on = (self.k_on * median).max(self.min_rms);
        let off = (self.k_off * median).max(self.min_rms * self.k_off / self.k_on);
        (on, off)
    }
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// RMS of frames starting every `hop` samples; trailing frames are zero-padded.
pub fn frame_rms(x: &[f64], frame: usize, hop: usize) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n_frames = if x.len() <= frame {
        1
    } else {
        (x.len() - frame).div_ceil(hop) + 1
    };
    (0..n_frames)
        .map(|i| {
            let start = i * hop;
            let end = (start + frame).min(x.len());
            let energy: f64 = x[start..end].iter().map(|v| v * v).sum();
            (energy / frame as f64).sqrt()
        })
        .collect()
}

/// Mean RMS over whole frames inside `x` (the whole slice when shorter than a frame).
fn mean_frame_rms(x: &[f64], frame: usize, hop: usize) -> f64 {
    if x.len() <= frame {
        return rms(x);
    }
    let values: Vec<f64> = (0..=(x.len() - frame) / hop)
        .map(|i| rms(&x[i * hop..i * hop + frame]))
        .collect();
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Splits a canonical-rate clip into single-cough segments.
///
/// Frame RMS drives a hysteresis gate (onset above `k_on` times the median,
/// release below `k_off` times the median). Each active run is tightened to
/// the first and last sample whose magnitude exceeds the release level,
/// runs closer than `min_gap_s` are merged, runs shorter than
/// `min_cough_duration_s` or with mean frame RMS under the onset threshold
/// are discarded, and survivors are padded by `padding_s` on both sides.
/// Segments carry the un-normalized samples of the parent clip.
pub fn segment_coughs(
    clip: &AudioClip,
    label: Label,
    dataset: Dataset,
    cfg: &SegmenterConfig,
) -> Vec<CoughSegment> {
    let x = &clip.samples;
    if x.is_empty() {
        return Vec::new();
    }
    let (frame, hop) = (cfg.frame_length, cfg.hop_length);
    let frames = frame_rms(x, frame, hop);
    let (on, off) = cfg.thresholds(median(&frames));

    // Active runs as inclusive frame index ranges.
    let mut runs = Vec::new();
    let mut current: Option<usize> = None;
    for (i, &r) in frames.iter().enumerate() {
        match current {
            None if r > on => current = Some(i),
            Some(start) if r < off => {
                runs.push((start, i - 1));
                current = None;
            }
            _ => {}
        }
    }
    if let Some(start) = current {
        runs.push((start, frames.len() - 1));
    }

    let sr = clip.sample_rate as f64;
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (f0, f1) in runs {
        let lo = (f0 * hop).saturating_sub(frame);
        let hi = (f1 * hop + 2 * frame).min(x.len());
        let first = x[lo..hi].iter().position(|v| v.abs() > off);
        let last = x[lo..hi].iter().rposition(|v| v.abs() > off);
        if let (Some(a), Some(b)) = (first, last) {
            spans.push((lo + a, lo + b + 1));
        }
    }

    let min_gap = (cfg.min_gap_s * sr).round() as usize;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for span in spans {
        match merged.last_mut() {
            Some(prev) if span.0 < prev.1 + min_gap => {
                *prev = (prev.0.min(span.0), prev.1.max(span.1));
            }
            _ => merged.push(span),
        }
    }

    let min_len = (cfg.min_cough_duration_s * sr).round() as usize;
    let pad = (cfg.padding_s * sr).round() as usize;
    merged
        .into_iter()
        .filter(|&(s, e)| e - s >= min_len.max(1))
        .filter(|&(s, e)| mean_frame_rms(&x[s..e], frame, hop) >= on)
        .enumerate()
        .map(|(k, (s, e))| {
            let s = s.saturating_sub(pad);
            let e = (e + pad).min(x.len());
            CoughSegment {
                id: format!("{}#{k:03}", clip.source_id),
                samples: x[s..e].to_vec(),
                sample_rate: clip.sample_rate,
                start_s: s as f64 / sr,
                end_s: e as f64 / sr,
                parent_id: clip.source_id.clone(),
                label,
                dataset,
                degenerate: false,
            }
        })
        .collect()
}

/// MinMax-rescales samples into [0, 1]. Constant signals become all zeros and
/// are flagged degenerate.
pub fn normalize_signal(segment: &CoughSegment) -> CoughSegment {
    let (lo, hi) = segment
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let mut out = segment.clone();
    if segment.samples.is_empty() || !(range > 0.0) {
        out.samples.iter_mut().for_each(|v| *v = 0.0);
        out.degenerate = true;
    } else {
        out.samples.iter_mut().for_each(|v| *v = (*v - lo) / range);
        out.degenerate = false;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(samples: Vec<f64>) -> CoughSegment {
        CoughSegment {
            id: "s".into(),
            samples,
            sample_rate: 22_050,
            start_s: 0.0,
            end_s: 1.0,
            parent_id: "p".into(),
            label: Label::Positive,
            dataset: Dataset::Synthetic,
            degenerate: false,
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_signal(&seg(vec![-2.0, 0.0, 2.0])).samples, vec![0.0, 0.5, 1.0]);
        let flat = normalize_signal(&seg(vec![5.0, 5.0, 5.0]));
        assert_eq!(flat.samples, vec![0.0, 0.0, 0.0]);
        assert!(flat.degenerate);
        let ramp = vec![0.0, 0.5, 1.0];
        assert_eq!(normalize_signal(&seg(ramp.clone())).samples, ramp);
    }

    #[test]
    fn silence_yields_no_segments() {
        let clip = AudioClip::new(vec![0.0; 44_100], 22_050, "z");
        assert!(segment_coughs(&clip, Label::Negative, Dataset::Synthetic, &SegmenterConfig::default()).is_empty());
    }

    #[test]
    fn frame_rms_counts() {
        assert_eq!(frame_rms(&[1.0; 10], 1024, 512).len(), 1);
        assert_eq!(frame_rms(&[1.0; 2048], 1024, 512).len(), 3);
        assert_eq!(frame_rms(&[1.0; 2049], 1024, 512).len(), 4);
    }

    #[test]
    fn labels_parse() {
        assert_eq!("COVID-19".parse::<Label>().unwrap(), Label::Positive);
        assert_eq!("healthy".parse::<Label>().unwrap(), Label::Negative);
        assert!("symptomatic".parse::<Label>().is_err());
        assert_eq!("coughvid".parse::<Dataset>().unwrap(), Dataset::Coughvid);
    }
}

//! WAV decoding, mono conversion and resampling to the canonical rate.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::window::kaiser;

/// Rate every clip is resampled to before segmentation (librosa's 22 kHz default).
pub const CANONICAL_SAMPLE_RATE: u32 = 22_050;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV container: {0}")]
    MalformedContainer(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no frames")]
    EmptyAudio,
    #[error("invalid sample rate {0}")]
    InvalidRate(u32),
}

/// A decoded mono waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Self {
        Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::MalformedContainer("fmt chunk shorter than 16 bytes".into()));
    }
    let mut format = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let bits = read_u16(body, 14);
    if format == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the subformat GUID, whose
        // first two bytes carry the plain format tag.
        if body.len() < 26 {
            return Err(AudioError::MalformedContainer("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        format = read_u16(body, 24);
    }
    Ok(FmtChunk {
        format,
        channels,
        sample_rate,
        bits,
    })
}

/// Decodes a RIFF/WAVE byte buffer into a mono clip scaled to [-1, 1].
///
/// Integer PCM is divided by the magnitude of its type's minimum (128, 32768,
/// 2^23, 2^31); float data is clamped. Multichannel frames are averaged.
pub fn decode_wav(bytes: &[u8], source_id: &str) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedContainer("missing RIFF/WAVE header".into()));
    }
    let mut fmt = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start.saturating_add(size).min(bytes.len());
        match id {
            b"fmt " => {
                if start + size > bytes.len() {
                    return Err(AudioError::MalformedContainer("truncated fmt chunk".into()));
                }
                fmt = Some(parse_fmt(&bytes[start..end])?);
            }
            // A short data chunk is tolerated: streamed writers often leave the size unset.
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        if data.is_some() && fmt.is_some() {
            break;
        }
        pos = start.saturating_add(size).saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| AudioError::MalformedContainer("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedContainer("no data chunk".into()))?;
    if fmt.channels == 0 {
        return Err(AudioError::MalformedContainer("zero channels".into()));
    }
    if fmt.sample_rate == 0 {
        return Err(AudioError::MalformedContainer("zero sample rate".into()));
    }

    let bytes_per_sample = match (fmt.format, fmt.bits) {
        (WAVE_FORMAT_PCM, 8) => 1,
        (WAVE_FORMAT_PCM, 16) => 2,
        (WAVE_FORMAT_PCM, 24) => 3,
        (WAVE_FORMAT_PCM, 32) => 4,
        (WAVE_FORMAT_IEEE_FLOAT, 32) => 4,
        (WAVE_FORMAT_IEEE_FLOAT, 64) => 8,
        (f, b) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format tag {f:#06x} with {b} bits per sample"
            )))
        }
    };
    let channels = fmt.channels as usize;
    let frame_bytes = bytes_per_sample * channels;
    let n_frames = data.len() / frame_bytes;
    if n_frames == 0 {
        return Err(AudioError::EmptyAudio);
    }

    let decode_one = |b: &[u8]| -> f64 {
        match (fmt.format, bytes_per_sample) {
            (WAVE_FORMAT_PCM, 1) => (b[0] as f64 - 128.0) / 128.0,
            (WAVE_FORMAT_PCM, 2) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32_768.0,
            (WAVE_FORMAT_PCM, 3) => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                v as f64 / 8_388_608.0
            }
            (WAVE_FORMAT_PCM, 4) => {
                i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0
            }
            (_, 4) => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            _ => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    };

    let mut samples = Vec::with_capacity(n_frames);
    for frame in data.chunks_exact(frame_bytes).take(n_frames) {
        let sum: f64 = frame.chunks_exact(bytes_per_sample).map(decode_one).sum();
        let v = sum / channels as f64;
        if !v.is_finite() {
            return Err(AudioError::MalformedContainer("non-finite float sample".into()));
        }
        samples.push(v.clamp(-1.0, 1.0));
    }
    Ok(AudioClip::new(samples, fmt.sample_rate, source_id))
}

/// Encodes a clip as 16-bit mono PCM. Samples are clamped to the i16 range.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&WAVE_FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let q = (s * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read_wav_file(path: &Path) -> crate::Result<AudioClip> {
    let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(decode_wav(&bytes, &path.display().to_string())?)
}

pub fn write_wav_file(path: &Path, clip: &AudioClip) -> crate::Result<()> {
    std::fs::write(path, encode_wav_pcm16(clip)).map_err(|e| crate::Error::io(path, e))
}

/// Kaiser-windowed sinc resampler parameters.
#[derive(Debug, Clone, Copy)]
pub struct ResamplerConfig {
    /// Zero crossings of the sinc kept on each side of the centre tap.
    pub zero_crossings: usize,
    pub kaiser_beta: f64,
}

impl Default for ResamplerConfig {
    fn default() -> Self {
        Self {
            zero_crossings: 64,
            kaiser_beta: 14.0,
        }
    }
}

/// Largest interpolation factor for which per-phase filters are tabulated.
const MAX_TABULATED_PHASES: u64 = 2048;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

struct SincKernel {
    cutoff: f64,
    half_width: f64,
    cfg: ResamplerConfig,
}

impl SincKernel {
    fn new(cutoff: f64, cfg: ResamplerConfig) -> Self {
        Self {
            cutoff,
            half_width: cfg.zero_crossings as f64 / cutoff,
            cfg,
        }
    }

    /// Filter taps for an output instant at input position `centre + frac`;
    /// tap `k` multiplies input sample `centre - first_offset + k`.
    fn taps(&self, frac: f64) -> (isize, Vec<f64>) {
        let lo = (frac - self.half_width).ceil() as isize;
        let hi = (frac + self.half_width).floor() as isize;
        let taps = (lo..=hi)
            .map(|j| {
                let d = frac - j as f64;
                self.cutoff * sinc(self.cutoff * d) * kaiser(d / self.half_width, self.cfg.kaiser_beta)
            })
            .collect();
        (lo, taps)
    }
}

/// Resamples `clip` to `target_rate` with the default Kaiser-sinc filter.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    resample_with(clip, target_rate, ResamplerConfig::default())
}

/// Band-limited resampling by a polyphase windowed-sinc filter.
///
/// The output has `round(len * target / source)` samples; output sample `i`
/// sits at input position `i * source / target`. When downsampling, the sinc
/// cutoff is lowered to the output Nyquist frequency.
pub fn resample_with(
    clip: &AudioClip,
    target_rate: u32,
    cfg: ResamplerConfig,
) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate(target_rate));
    }
    if clip.sample_rate == 0 {
        return Err(AudioError::InvalidRate(clip.sample_rate));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = clip.sample_rate as u64;
    let dst = target_rate as u64;
    let g = gcd(src, dst);
    let (up, down) = (dst / g, src / g);
    let n_in = clip.samples.len();
    let n_out = ((n_in as u128 * dst as u128 + src as u128 / 2) / src as u128) as usize;
    let kernel = SincKernel::new((dst as f64 / src as f64).min(1.0), cfg);

    let table: Option<Vec<(isize, Vec<f64>)>> = (up <= MAX_TABULATED_PHASES)
        .then(|| (0..up).map(|p| kernel.taps(p as f64 / up as f64)).collect());

    let x = &clip.samples;
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out as u64 {
        let num = i * down;
        let centre = (num / up) as isize;
        let phase = num % up;
        let computed;
        let (lo, taps) = match &table {
            Some(t) => {
                let (lo, taps) = &t[phase as usize];
                (*lo, taps.as_slice())
            }
            None => {
                computed = kernel.taps(phase as f64 / up as f64);
                (computed.0, computed.1.as_slice())
            }
        };
        let mut acc = 0.0;
        for (k, &h) in taps.iter().enumerate() {
            let idx = centre + lo + k as isize;
            if idx >= 0 && (idx as usize) < n_in {
                acc += h * x[idx as usize];
            }
        }
        out.push(acc);
    }
    Ok(AudioClip::new(out, target_rate, clip.source_id.clone()))
}

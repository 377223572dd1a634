//! Low-level numeric kernels shared by the audio and feature modules.

pub mod fft;
pub mod window;

pub use fft::{Complex, RealFft};

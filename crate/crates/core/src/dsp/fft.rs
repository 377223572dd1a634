//! Iterative radix-2 FFT.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// Forward FFT plan for a fixed power-of-two length.
///
/// Twiddles and the bit-reversal permutation are computed once; the plan is
/// immutable and can be shared across threads.
#[derive(Debug, Clone)]
pub struct RealFft {
    len: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl RealFft {
    /// Returns `None` unless `len` is a power of two.
    pub fn new(len: usize) -> Option<Self> {
        if len == 0 || !len.is_power_of_two() {
            return None;
        }
        let twiddles = (0..len / 2)
            .map(|k| {
                let theta = -2.0 * PI * k as f64 / len as f64;
                Complex::new(theta.cos(), theta.sin())
            })
            .collect();
        let bits = len.trailing_zeros();
        let bitrev = (0..len)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Some(Self {
            len,
            twiddles,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward transform, X[k] = Σ x[n] e^{-2πikn/N}.
    pub fn transform(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.len, "buffer length must match plan");
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }

    /// Full complex spectrum (all `len` bins) of a real frame.
    pub fn spectrum(&self, frame: &[f64]) -> Vec<Complex> {
        let mut buf: Vec<Complex> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.transform(&mut buf);
        buf
    }

    /// Magnitudes of the non-negative frequency bins (`len/2 + 1` values).
    pub fn magnitudes(&self, frame: &[f64], scratch: &mut Vec<Complex>) -> Vec<f64> {
        scratch.clear();
        scratch.extend(frame.iter().map(|&x| Complex::new(x, 0.0)));
        self.transform(scratch);
        scratch[..self.len / 2 + 1].iter().map(|c| c.norm()).collect()
    }
}

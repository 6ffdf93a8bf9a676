//! Linear convolution through zero-padded FFTs, with the kernel spectrum cached.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) struct LinearConvolver {
    len: usize,
    kernel_len: usize,
    signal_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex<f64>>,
}

impl fmt::Debug for LinearConvolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearConvolver")
            .field("len", &self.len)
            .field("kernel_len", &self.kernel_len)
            .field("signal_len", &self.signal_len)
            .finish()
    }
}

impl LinearConvolver {
    /// Prepares `signal * kernel` for signals of exactly `signal_len` samples.
    pub(crate) fn new(kernel: &[f64], signal_len: usize) -> Self {
        let len = (signal_len + kernel.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut kernel_hat: Vec<Complex<f64>> = kernel.iter().map(|&k| Complex::new(k, 0.0)).collect();
        kernel_hat.resize(len, Complex::new(0.0, 0.0));
        forward.process(&mut kernel_hat);
        Self {
            len,
            kernel_len: kernel.len(),
            signal_len,
            forward,
            inverse,
            kernel_hat,
        }
    }

    /// Full linear convolution, `signal_len + kernel_len - 1` samples.
    pub(crate) fn convolve(&self, signal: &[f64]) -> Vec<f64> {
        assert_eq!(signal.len(), self.signal_len, "signal length differs from the plan");
        let mut buf: Vec<Complex<f64>> = signal.iter().map(|&s| Complex::new(s, 0.0)).collect();
        buf.resize(self.len, Complex::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf.iter()
            .take(self.signal_len + self.kernel_len - 1)
            .map(|c| c.re * scale)
            .collect()
    }
}

/// Plain full linear convolution.
#[cfg(test)]
fn direct_convolve(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; signal.len() + kernel.len() - 1];
    for (j, &k) in kernel.iter().enumerate() {
        if k == 0.0 {
            continue;
        }
        for (i, &s) in signal.iter().enumerate() {
            out[i + j] += s * k;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_matches_direct() {
        let s: Vec<f64> = (0..37).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let k: Vec<f64> = (0..13).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = direct_convolve(&s, &k);
        let b = LinearConvolver::new(&k, s.len()).convolve(&s);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

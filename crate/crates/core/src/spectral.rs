//! FFT helpers on uniform periodic grids.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Signed integer frequency of FFT bin `j` for a grid of `n` points.
pub fn frequency(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

pub fn fft(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(data);
}

/// Inverse FFT including the `1/n` normalization.
pub fn ifft(data: &mut [Complex64]) {
    let n = data.len();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(data);
    let s = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v *= s;
    }
}

/// Spectral derivative of complex samples of a function with the given
/// period. The Nyquist mode is dropped for even `n`.
pub fn derivative(values: &[Complex64], period: f64) -> Vec<Complex64> {
    let n = values.len();
    let mut buf = values.to_vec();
    fft(&mut buf);
    let w = 2.0 * std::f64::consts::PI / period;
    for (j, v) in buf.iter_mut().enumerate() {
        if n % 2 == 0 && j == n / 2 {
            *v = Complex64::new(0.0, 0.0);
        } else {
            *v *= Complex64::new(0.0, w * frequency(j, n));
        }
    }
    ifft(&mut buf);
    buf
}

pub fn derivative_real(values: &[f64], period: f64) -> Vec<f64> {
    let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    derivative(&c, period).into_iter().map(|v| v.re).collect()
}

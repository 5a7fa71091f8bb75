//! Two-dimensional DFT on a square torus, row-major storage.

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// In-place 2D FFT of an `n × n` row-major buffer.
pub fn fft2(data: &mut [Complex64], n: usize, direction: FftDirection) {
    assert_eq!(data.len(), n * n);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft(n, direction);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            column[i] = data[i * n + j];
        }
        fft.process(&mut column);
        for i in 0..n {
            data[i * n + j] = column[i];
        }
    }
}

/// Wraps a signed lag onto `0..n`.
pub fn wrap(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

//! Small signal-processing helpers shared by the filter and reverb code.

use realfft::RealFftPlanner;

/// Full linear convolution, output length `a.len() + b.len() - 1`.
///
/// Short kernels are convolved directly; everything else goes through a
/// zero-padded real FFT.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 64 {
        return convolve_direct(a, b);
    }

    let fft_len = out_len.next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut buf_a = vec![0.0; fft_len];
    buf_a[..a.len()].copy_from_slice(a);
    let mut buf_b = vec![0.0; fft_len];
    buf_b[..b.len()].copy_from_slice(b);
    let mut spec_a = fwd.make_output_vec();
    let mut spec_b = fwd.make_output_vec();
    fwd.process(&mut buf_a, &mut spec_a).expect("fft length is consistent");
    fwd.process(&mut buf_b, &mut spec_b).expect("fft length is consistent");

    for (x, y) in spec_a.iter_mut().zip(&spec_b) {
        *x *= y;
    }
    // imaginary parts of DC and Nyquist must be exactly zero for realfft
    spec_a[0].im = 0.0;
    if let Some(last) = spec_a.last_mut() {
        last.im = 0.0;
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut spec_a, &mut out).expect("fft length is consistent");
    let scale = 1.0 / fft_len as f64;
    out.truncate(out_len);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

pub(crate) fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

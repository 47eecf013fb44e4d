//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames are left-aligned on a signal that is zero-padded at the front by
//! `window_len - hop` samples, so every input sample lies under the full set
//! of overlapping windows. The analysis window is a periodic Hann window
//! scaled to unit L1 norm; power values are therefore independent of the
//! window length for stationary signals.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::dsp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 512,
            hop: 256,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize) -> Result<Self> {
        let cfg = Self {
            window_len,
            hop,
            window: WindowKind::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || !self.window_len.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "window length {} must be even and at least 2",
                self.window_len
            )));
        }
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::InvalidParameter(format!(
                "hop {} must be in 1..={}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    /// Number of frequency bins, DC through Nyquist.
    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Zero samples prepended before the first frame.
    pub fn front_padding(&self) -> usize {
        self.window_len - self.hop
    }

    /// Frames needed to cover `len` samples: `ceil((len + window_len - hop) / hop)`.
    pub fn frames_for(&self, len: usize) -> usize {
        (len + self.front_padding()).div_ceil(self.hop)
    }

    /// Analysis window, unit L1 norm.
    pub fn window(&self) -> Vec<f64> {
        let mut w = match self.window {
            WindowKind::Hann => dsp::hann(self.window_len),
        };
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        w
    }
}

/// Complex STFT, `K x N` with `K = window_len / 2 + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
    pub original_len: usize,
}

/// Squared-magnitude spectrogram, `K x N`, all entries nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub values: Array2<f64>,
    pub config: StftConfig,
    pub sample_rate: u32,
    pub original_len: usize,
}

impl PowerSpectrogram {
    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    /// Same metadata, new values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        if values.dim() != self.values.dim() {
            return Err(crate::error::shape_err(
                "power spectrogram",
                self.values.dim(),
                values.dim(),
            ));
        }
        Ok(Self {
            values,
            config: self.config,
            sample_rate: self.sample_rate,
            original_len: self.original_len,
        })
    }

    /// CSV with one row per frequency bin and one column per frame.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn stft_forward(signal: &AudioSignal, config: &StftConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    if signal.is_empty() {
        return Err(Error::EmptyInput("cannot transform an empty signal".into()));
    }
    let len = config.window_len;
    let frames = config.frames_for(signal.len());
    let pad = config.front_padding();
    let mut padded = vec![0.0; (frames - 1) * config.hop + len];
    padded[pad..pad + signal.len()].copy_from_slice(&signal.samples);

    let window = config.window();
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let mut frame = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut values = Array2::<Complex64>::zeros((config.bins(), frames));
    for n in 0..frames {
        let start = n * config.hop;
        for (i, f) in frame.iter_mut().enumerate() {
            *f = padded[start + i] * window[i];
        }
        fft.process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
            .expect("buffer sizes come from the planner");
        for (k, c) in spectrum.iter().enumerate() {
            values[[k, n]] = *c;
        }
    }
    Ok(ComplexSpectrogram {
        values,
        config: *config,
        sample_rate: signal.sample_rate,
        original_len: signal.len(),
    })
}

pub fn power_spectrogram(c: &ComplexSpectrogram) -> PowerSpectrogram {
    PowerSpectrogram {
        values: c.values.mapv(|z| z.norm_sqr()),
        config: c.config,
        sample_rate: c.sample_rate,
        original_len: c.original_len,
    }
}

/// Rebuilds a signal from a power spectrogram, borrowing the phase of
/// `phase_source`. Bins where the source is exactly zero get phase 0.
pub fn istft(power: &PowerSpectrogram, phase_source: &ComplexSpectrogram) -> Result<AudioSignal> {
    if power.values.dim() != phase_source.values.dim() {
        return Err(crate::error::shape_err(
            "istft power vs phase",
            phase_source.values.dim(),
            power.values.dim(),
        ));
    }
    let mut z = Array2::<Complex64>::zeros(power.values.dim());
    Zip::from(&mut z)
        .and(&power.values)
        .and(&phase_source.values)
        .for_each(|z, &p, &y| {
            let r = y.norm();
            let phasor = if r > 0.0 { y / r } else { Complex64::new(1.0, 0.0) };
            *z = phasor * p.max(0.0).sqrt();
        });
    istft_complex(&ComplexSpectrogram {
        values: z,
        config: phase_source.config,
        sample_rate: phase_source.sample_rate,
        original_len: phase_source.original_len,
    })
}

/// Weighted overlap-add inverse of [`stft_forward`].
pub fn istft_complex(spec: &ComplexSpectrogram) -> Result<AudioSignal> {
    let config = spec.config;
    config.validate()?;
    let len = config.window_len;
    if spec.values.nrows() != config.bins() {
        return Err(Error::Shape(format!(
            "{} bins for window length {len}",
            spec.values.nrows()
        )));
    }
    let frames = spec.values.ncols();
    let window = config.window();
    let total = (frames.max(1) - 1) * config.hop + len;
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(len);
    let mut spectrum = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let scale = 1.0 / len as f64;

    for n in 0..frames {
        for (k, s) in spectrum.iter_mut().enumerate() {
            *s = spec.values[[k, n]];
        }
        spectrum[0].im = 0.0;
        spectrum[len / 2].im = 0.0;
        ifft.process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
            .expect("buffer sizes come from the planner");
        let start = n * config.hop;
        for i in 0..len {
            acc[start + i] += frame[i] * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    let pad = config.front_padding();
    let end = (pad + spec.original_len).min(total);
    let samples = (pad..end)
        .map(|t| if norm[t] > 1e-300 { acc[t] / norm[t] } else { 0.0 })
        .collect();
    AudioSignal::new(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> AudioSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioSignal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(512, 0).is_err());
        assert!(StftConfig::new(512, 513).is_err());
        assert!(StftConfig::new(511, 256).is_err());
        let c = StftConfig::default();
        assert_eq!(c.bins(), 257);
        assert_eq!(c.frames_for(1000), (1000 + 256usize).div_ceil(256));
        assert!((c.window().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_signal_rejected() {
        let sig = AudioSignal::new(vec![], 16000).unwrap();
        assert!(matches!(
            stft_forward(&sig, &StftConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let sig = AudioSignal::new(vec![0.0; 2000], 16000).unwrap();
        let c = stft_forward(&sig, &StftConfig::default()).unwrap();
        assert!(c.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn impulse_spectrum_is_flat() {
        let cfg = StftConfig::default();
        let mut s = vec![0.0; 4096];
        let pos = cfg.window_len / 2;
        s[pos] = 1.0;
        let c = stft_forward(&AudioSignal::new(s, 16000).unwrap(), &cfg).unwrap();
        let w = cfg.window();
        // frame n covers padded index n*hop .. n*hop + 512; the impulse sits at
        // padded index pos + 256.
        let padded = pos + cfg.front_padding();
        for n in 0..c.values.ncols() {
            let start = n * cfg.hop;
            if padded < start || padded >= start + cfg.window_len {
                assert!(c.values.column(n).iter().all(|z| z.norm() < 1e-15));
                continue;
            }
            let expected = w[padded - start];
            for z in c.values.column(n) {
                assert!((z.norm() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let k0 = 40;
        let f = k0 as f64 * 16000.0 / cfg.window_len as f64;
        let s: Vec<f64> = (0..8000)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 16000.0).cos())
            .collect();
        let c = stft_forward(&AudioSignal::new(s, 16000).unwrap(), &cfg).unwrap();
        // interior frames only, edges straddle the padding
        for n in 2..c.values.ncols() - 2 {
            let col = c.values.column(n);
            let argmax = (0..col.len())
                .max_by(|&a, &b| col[a].norm().partial_cmp(&col[b].norm()).unwrap())
                .unwrap();
            assert_eq!(argmax, k0);
            // Hann-windowed cosine at a bin centre: |X_k0| = 1/2 with unit-L1 window
            assert!((col[k0].norm() - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn power_is_squared_magnitude() {
        let values = array![[Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)]];
        let c = ComplexSpectrogram {
            values,
            config: StftConfig::new(2, 1).unwrap(),
            sample_rate: 16000,
            original_len: 1,
        };
        let p = power_spectrogram(&c);
        assert_eq!(p.values[[0, 0]], 25.0);
        assert_eq!(p.values[[0, 1]], 0.0);

        let c = stft_forward(&random_signal(3000, 1), &StftConfig::default()).unwrap();
        let p = power_spectrogram(&c);
        for (z, v) in c.values.iter().zip(p.values.iter()) {
            assert!(((z * z.conj()).re - v).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_scaling() {
        let cfg = StftConfig::default();
        let x = random_signal(16000, 7);
        let c = stft_forward(&x, &cfg).unwrap();
        let p = power_spectrogram(&c);
        let y = istft(&p, &c).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(rel_l2(&y.samples, &x.samples) < 1e-6);

        let p4 = p.with_values(p.values.mapv(|v| 4.0 * v)).unwrap();
        let y2 = istft(&p4, &c).unwrap();
        let twice: Vec<f64> = x.samples.iter().map(|v| 2.0 * v).collect();
        assert!(rel_l2(&y2.samples, &twice) < 1e-6);

        let zero = p.with_values(Array2::zeros(p.values.dim())).unwrap();
        assert!(istft(&zero, &c).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let c = stft_forward(&random_signal(3000, 2), &StftConfig::default()).unwrap();
        let p = PowerSpectrogram {
            values: Array2::zeros((257, 3)),
            config: c.config,
            sample_rate: 16000,
            original_len: 3000,
        };
        assert!(matches!(istft(&p, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn parseval_per_frame() {
        // sum_k c_k |X_k|^2 = L * sum_t (x_t w_t)^2 with c_k = 1 at DC and
        // Nyquist and 2 elsewhere
        let cfg = StftConfig::default();
        let x = random_signal(5000, 9);
        let c = stft_forward(&x, &cfg).unwrap();
        let p = power_spectrogram(&c);
        let w = cfg.window();
        let mut padded = vec![0.0; (p.frames() - 1) * cfg.hop + cfg.window_len];
        padded[cfg.front_padding()..cfg.front_padding() + x.len()].copy_from_slice(&x.samples);
        let k_last = cfg.bins() - 1;
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for n in 0..p.frames() {
            for k in 0..cfg.bins() {
                let ck = if k == 0 || k == k_last { 1.0 } else { 2.0 };
                lhs += ck * p.values[[k, n]];
            }
            let start = n * cfg.hop;
            rhs += cfg.window_len as f64
                * (0..cfg.window_len)
                    .map(|i| (padded[start + i] * w[i]).powi(2))
                    .sum::<f64>();
        }
        assert!((lhs - rhs).abs() / rhs < 1e-6);
    }

    #[test]
    fn csv_export_layout() {
        let c = stft_forward(&random_signal(1000, 4), &StftConfig::new(8, 4).unwrap()).unwrap();
        let p = power_spectrogram(&c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        p.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].split(',').count(), p.frames());
    }
}

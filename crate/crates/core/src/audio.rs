//! PCM audio I/O and the low-frequency pre-filter applied to recordings.

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use log::warn;

use crate::dsp;
use crate::error::{Error, Result};

/// Default pre-filter length for real recordings.
pub const HIGHPASS_TAPS: usize = 5000;
/// Default pre-filter cut-off in Hz.
pub const HIGHPASS_CUTOFF_HZ: f64 = 30.0;

/// A mono signal with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Io(e),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAVE feature".into()),
        hound::Error::FormatError(reason) => Error::Parse {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Reads a RIFF/WAVE file (PCM16 or IEEE float32). Only the first channel is kept.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    if channels > 1 {
        warn!(
            "{}: {} channels, keeping channel 0 only",
            path.display(),
            channels
        );
    }

    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} samples (expected 16-bit PCM or 32-bit float)"
            )))
        }
    };

    AudioSignal::new(samples, spec.sample_rate).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes a mono PCM16 file. Samples are clipped to `[-1, 1]` first.
pub fn write_wav(signal: &AudioSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &signal.samples {
        writer
            .write_sample(quantize_pcm16(s))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))?;
    Ok(())
}

fn quantize_pcm16(x: f64) -> i16 {
    let q = (x.clamp(-1.0, 1.0) * 32768.0).round();
    q.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Linear-phase FIR high-pass coefficients (Hamming-windowed sinc, spectral
/// inversion of the matching low-pass). Even tap counts are bumped to odd.
pub fn design_highpass(taps: usize, cutoff_hz: f64, sample_rate: u32) -> Result<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::InvalidParameter(format!(
            "cut-off {cutoff_hz} Hz outside (0, {nyquist})"
        )));
    }
    if taps == 0 {
        return Err(Error::InvalidParameter("filter needs at least one tap".into()));
    }
    let n = taps | 1;
    let center = (n / 2) as f64;
    let fc = cutoff_hz / sample_rate as f64;
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut lowpass: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - center;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (two_pi * fc * t).sin() / (std::f64::consts::PI * t)
            };
            let hamming = if n == 1 {
                1.0
            } else {
                0.54 - 0.46 * (two_pi * i as f64 / (n - 1) as f64).cos()
            };
            sinc * hamming
        })
        .collect();
    let gain: f64 = lowpass.iter().sum();
    lowpass.iter_mut().for_each(|v| *v /= gain);

    let mut highpass: Vec<f64> = lowpass.iter().map(|v| -v).collect();
    highpass[n / 2] += 1.0;
    Ok(highpass)
}

/// Applies the high-pass pre-filter, keeping the input length.
///
/// The signal is extended at both ends by repeating its edge samples, the
/// filter is run, and the `(taps - 1) / 2` sample group delay is trimmed.
pub fn highpass_filter(signal: &AudioSignal, taps: usize, cutoff_hz: f64) -> Result<AudioSignal> {
    let h = design_highpass(taps, cutoff_hz, signal.sample_rate)?;
    if signal.is_empty() {
        return Ok(signal.clone());
    }
    let half = h.len() / 2;
    let first = signal.samples[0];
    let last = *signal.samples.last().unwrap();

    let mut extended = Vec::with_capacity(signal.len() + 2 * half);
    extended.extend(std::iter::repeat_n(first, half));
    extended.extend_from_slice(&signal.samples);
    extended.extend(std::iter::repeat_n(last, half));

    let full = dsp::convolve(&extended, &h);
    // output[i] aligns with extended[i + half], i.e. input sample i, after
    // removing another `half` samples of filter delay.
    let start = 2 * half;
    let samples = full[start..start + signal.len()].to_vec();
    Ok(AudioSignal {
        samples,
        sample_rate: signal.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f64, secs: f64, rate: u32) -> AudioSignal {
        let n = (secs * rate as f64) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin() * 0.5)
            .collect();
        AudioSignal::new(samples, rate).unwrap()
    }

    #[test]
    fn rejects_bad_signal() {
        assert!(AudioSignal::new(vec![f64::NAN], 16000).is_err());
        assert!(AudioSignal::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("three.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 16384, -16384] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();

        let sig = read_wav(&path).unwrap();
        assert_eq!(sig.sample_rate, 16000);
        let expected = [0.0, 0.5, -0.5];
        for (a, b) in sig.samples.iter().zip(expected) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn empty_data_chunk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        write_wav(&AudioSignal::new(vec![], 16000).unwrap(), &path).unwrap();
        let sig = read_wav(&path).unwrap();
        assert!(sig.is_empty());
    }

    #[test]
    fn header_and_clipping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.wav");
        write_wav(&AudioSignal::new(vec![0.0], 16000).unwrap(), &path).unwrap();
        let r = hound::WavReader::open(&path).unwrap();
        let spec = r.spec();
        assert_eq!(
            (spec.sample_rate, spec.channels, spec.bits_per_sample),
            (16000, 1, 16)
        );
        assert_eq!(r.len(), 1);

        write_wav(&AudioSignal::new(vec![2.0, -3.0], 16000).unwrap(), &path).unwrap();
        let raw: Vec<i16> = hound::WavReader::open(&path)
            .unwrap()
            .into_samples::<i16>()
            .map(|s| s.unwrap())
            .collect();
        assert_eq!(raw, vec![32767, -32768]);
    }

    #[test]
    fn float_and_multichannel_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for (l, r) in [(0.25f32, 0.9f32), (-0.5, 0.9), (0.125, 0.9)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        let sig = read_wav(&path).unwrap();
        assert_eq!(sig.samples, vec![0.25, -0.5, 0.125]);
        assert_eq!(sig.sample_rate, 8000);
    }

    #[test]
    fn unsupported_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pcm24.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(1000i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(Error::UnsupportedFormat(_))));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"RIFX0000WAVEnotreally").unwrap();
        assert!(matches!(read_wav(&junk), Err(Error::Parse { .. })));
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sig = AudioSignal::new(samples, 16000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        write_wav(&sig, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), sig.len());
        for (a, b) in back.samples.iter().zip(&sig.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn highpass_removes_dc() {
        let sig = AudioSignal::new(vec![1.0; 16000], 16000).unwrap();
        let h = design_highpass(5001, 30.0, 16000).unwrap();
        // frequency response at 0 Hz is the coefficient sum
        assert!(h.iter().sum::<f64>().abs() < 1e-12);
        let out = highpass_filter(&sig, 5001, 30.0).unwrap();
        assert_eq!(out.len(), sig.len());
        assert!(out.samples.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn highpass_passes_speech_band() {
        let sig = tone(1000.0, 2.0, 16000);
        let out = highpass_filter(&sig, HIGHPASS_TAPS, HIGHPASS_CUTOFF_HZ).unwrap();
        let trim = 2600;
        let a = dsp::rms(&sig.samples[trim..sig.len() - trim]);
        let b = dsp::rms(&out.samples[trim..out.len() - trim]);
        assert!((a - b).abs() / a < 0.01, "{a} vs {b}");
        // no delay left over
        let i = sig.len() / 2;
        assert!((sig.samples[i] - out.samples[i]).abs() < 0.01);
    }

    #[test]
    fn highpass_zero_and_linear() {
        let zero = AudioSignal::new(vec![0.0; 3000], 16000).unwrap();
        let out = highpass_filter(&zero, 501, 30.0).unwrap();
        assert!(out.samples.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..3000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..3000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let f = |s: Vec<f64>| {
            highpass_filter(&AudioSignal::new(s, 16000).unwrap(), 501, 30.0)
                .unwrap()
                .samples
        };
        let (fx, fy, fm) = (f(x), f(y), f(mix));
        for i in 0..fm.len() {
            assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn highpass_rejects_bad_cutoff() {
        let sig = tone(100.0, 0.1, 16000);
        assert!(matches!(
            highpass_filter(&sig, 101, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            highpass_filter(&sig, 101, 8000.0),
            Err(Error::InvalidParameter(_))
        ));
    }
}

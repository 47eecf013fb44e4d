//! Intrusive quality measures: frequency-weighted segmental SNR and LPC
//! cepstral distance.
//!
//! Both work on short Hann-windowed frames of the clean reference and the
//! test signal after trimming them to a common length. Frames where the
//! reference is silent carry no information and are skipped.

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::dsp::hann;
use crate::error::{Error, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub frame_ms: f64,
    /// Fraction of a frame shared with the next one.
    pub overlap: f64,
    pub bands: usize,
    pub weight_exponent: f64,
    pub snr_floor_db: f64,
    pub snr_ceiling_db: f64,
    pub lpc_order: usize,
    pub cepstral_coeffs: usize,
    /// Frames more than this many dB below the loudest frame of a signal
    /// count as silent.
    pub silence_db: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            overlap: 0.75,
            bands: 25,
            weight_exponent: 0.2,
            snr_floor_db: -10.0,
            snr_ceiling_db: 35.0,
            lpc_order: 10,
            cepstral_coeffs: 16,
            silence_db: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub fwssnr: f64,
    pub cepstral_distance: f64,
    pub fwssnr_frames: Vec<f64>,
    pub cepstral_frames: Vec<f64>,
}

struct Framing {
    len: usize,
    hop: usize,
    count: usize,
}

impl MetricConfig {
    fn framing(&self, sample_rate: u32, samples: usize) -> Result<Framing> {
        if !(self.overlap >= 0.0 && self.overlap < 1.0) {
            return Err(Error::InvalidParameter("overlap must be in [0, 1)".into()));
        }
        if self.bands == 0 || self.lpc_order == 0 || self.cepstral_coeffs == 0 {
            return Err(Error::InvalidParameter(
                "band, LPC order and cepstral counts must be positive".into(),
            ));
        }
        let len = (self.frame_ms * 1e-3 * sample_rate as f64).round() as usize;
        if len < 2 {
            return Err(Error::InvalidParameter("frame is shorter than two samples".into()));
        }
        let hop = ((len as f64 * (1.0 - self.overlap)).round() as usize).max(1);
        if samples < len {
            return Err(Error::InsufficientData(format!(
                "{samples} samples is shorter than one {len}-sample frame"
            )));
        }
        Ok(Framing {
            len,
            hop,
            count: (samples - len) / hop + 1,
        })
    }
}

fn aligned<'a>(clean: &'a AudioSignal, test: &'a AudioSignal) -> Result<(&'a [f64], &'a [f64])> {
    if clean.sample_rate != test.sample_rate {
        return Err(Error::InvalidParameter(format!(
            "sample rates differ: {} vs {}",
            clean.sample_rate, test.sample_rate
        )));
    }
    let n = clean.len().min(test.len());
    Ok((&clean.samples[..n], &test.samples[..n]))
}

fn frames<'a>(x: &'a [f64], f: &'a Framing) -> impl Iterator<Item = &'a [f64]> + 'a {
    (0..f.count).map(move |i| &x[i * f.hop..i * f.hop + f.len])
}

fn energy(frame: &[f64]) -> f64 {
    frame.iter().map(|v| v * v).sum()
}

/// Which frames of the reference are loud enough to score.
fn active_frames(x: &[f64], f: &Framing, silence_db: f64) -> Vec<bool> {
    let e: Vec<f64> = frames(x, f).map(energy).collect();
    let max = e.iter().cloned().fold(0.0, f64::max);
    let floor = 10f64.powf(-silence_db / 10.0);
    e.iter().map(|&v| max > 0.0 && v > floor * max).collect()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over `n_fft / 2 + 1` bins, one row per band.
/// Every band keeps at least one bin even when its triangle falls between
/// bin centres.
pub fn mel_filterbank(bands: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let bins = n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    (0..bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let mut row: Vec<f64> = (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect();
            if row.iter().all(|&w| w == 0.0) {
                let k = ((mid / bin_hz).round() as usize).min(bins - 1);
                row[k] = 1.0;
            }
            row
        })
        .collect()
}

struct MagnitudeAnalyzer {
    window: Vec<f64>,
    fft: std::sync::Arc<dyn realfft::RealToComplex<f64>>,
    buf: Vec<f64>,
    spec: Vec<realfft::num_complex::Complex<f64>>,
}

impl MagnitudeAnalyzer {
    fn new(frame_len: usize) -> Self {
        let n_fft = (2 * frame_len).next_power_of_two();
        let fft = RealFftPlanner::<f64>::new().plan_fft_forward(n_fft);
        Self {
            window: hann(frame_len),
            buf: fft.make_input_vec(),
            spec: fft.make_output_vec(),
            fft,
        }
    }

    fn n_fft(&self) -> usize {
        self.buf.len()
    }

    fn magnitudes(&mut self, frame: &[f64]) -> Vec<f64> {
        self.buf.fill(0.0);
        for (b, (x, w)) in self.buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            *b = x * w;
        }
        self.fft
            .process(&mut self.buf, &mut self.spec)
            .expect("fft length is consistent");
        self.spec.iter().map(|c| c.norm()).collect()
    }
}

fn band_spectrum(bank: &[Vec<f64>], mag: &[f64]) -> Vec<f64> {
    bank.iter()
        .map(|row| row.iter().zip(mag).map(|(w, m)| w * m).sum())
        .collect()
}

fn normalize_area(v: &mut [f64]) -> bool {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}

/// Per-frame fwsSNR values (dB) over the active reference frames.
pub fn fwssnr_frames(clean: &AudioSignal, test: &AudioSignal, config: &MetricConfig) -> Result<Vec<f64>> {
    let (c, t) = aligned(clean, test)?;
    let f = config.framing(clean.sample_rate, c.len())?;
    let mut analyzer = MagnitudeAnalyzer::new(f.len);
    let bank = mel_filterbank(config.bands, analyzer.n_fft(), clean.sample_rate);
    let active = active_frames(c, &f, config.silence_db);
    let (lo, hi) = (config.snr_floor_db, config.snr_ceiling_db);

    let mut out = Vec::new();
    for ((cf, tf), keep) in frames(c, &f).zip(frames(t, &f)).zip(active) {
        if !keep {
            continue;
        }
        let mut cb = band_spectrum(&bank, &analyzer.magnitudes(cf));
        let mut tb = band_spectrum(&bank, &analyzer.magnitudes(tf));
        normalize_area(&mut cb);
        if !normalize_area(&mut tb) {
            out.push(lo);
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (&x, &y) in cb.iter().zip(&tb) {
            let err = (x - y) * (x - y);
            let snr = if err == 0.0 {
                hi
            } else {
                (10.0 * (x * x / err).log10()).clamp(lo, hi)
            };
            let w = x.powf(config.weight_exponent);
            num += w * snr;
            den += w;
        }
        out.push(if den > 0.0 { num / den } else { lo });
    }
    if out.is_empty() {
        return Err(Error::DegenerateInput("reference signal is silent".into()));
    }
    Ok(out)
}

/// Frequency-weighted segmental SNR in dB, clamped per band to
/// `[snr_floor_db, snr_ceiling_db]`.
pub fn fwssnr(clean: &AudioSignal, test: &AudioSignal) -> Result<f64> {
    fwssnr_with(clean, test, &MetricConfig::default())
}

pub fn fwssnr_with(clean: &AudioSignal, test: &AudioSignal, config: &MetricConfig) -> Result<f64> {
    Ok(mean(&fwssnr_frames(clean, test, config)?))
}

fn autocorrelation(x: &[f64], order: usize) -> Vec<f64> {
    (0..=order)
        .map(|lag| x.iter().zip(&x[lag.min(x.len())..]).map(|(a, b)| a * b).sum())
        .collect()
}

/// Levinson–Durbin recursion. Returns predictor coefficients `a_1..a_p`
/// with `x[n] ≈ Σ a_k x[n-k]`; a zero-energy input gives all zeros.
pub fn levinson(r: &[f64]) -> Vec<f64> {
    let p = r.len().saturating_sub(1);
    let mut a = vec![0.0; p];
    if p == 0 || r[0] <= 0.0 {
        return a;
    }
    // slight white-noise correction keeps the recursion stable on pure tones
    let r0 = r[0] * (1.0 + 1e-9);
    let mut err = r0;
    for i in 0..p {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        let prev = a.clone();
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
    }
    a
}

/// Cepstrum `c_1..c_n` of the all-pole model `1 / (1 - Σ a_k z^-k)`.
pub fn lpc_to_cepstrum(a: &[f64], n: usize) -> Vec<f64> {
    let p = a.len();
    let mut c = vec![0.0; n];
    for i in 1..=n {
        let mut v = if i <= p { a[i - 1] } else { 0.0 };
        for k in i.saturating_sub(p).max(1)..i {
            v += (k as f64 / i as f64) * c[k - 1] * a[i - k - 1];
        }
        c[i - 1] = v;
    }
    c
}

fn frame_cepstrum(frame: &[f64], window: &[f64], config: &MetricConfig) -> Vec<f64> {
    let x: Vec<f64> = frame.iter().zip(window).map(|(a, b)| a * b).collect();
    let a = levinson(&autocorrelation(&x, config.lpc_order));
    lpc_to_cepstrum(&a, config.cepstral_coeffs)
}

/// Per-frame cepstral distances over frames where either signal is active.
pub fn cepstral_frames(clean: &AudioSignal, test: &AudioSignal, config: &MetricConfig) -> Result<Vec<f64>> {
    let (c, t) = aligned(clean, test)?;
    let f = config.framing(clean.sample_rate, c.len())?;
    let window = hann(f.len);
    let active_c = active_frames(c, &f, config.silence_db);
    let active_t = active_frames(t, &f, config.silence_db);
    let scale = 10.0 / std::f64::consts::LN_10;

    let mut out = Vec::new();
    for (i, (cf, tf)) in frames(c, &f).zip(frames(t, &f)).enumerate() {
        if !(active_c[i] || active_t[i]) {
            continue;
        }
        let cc = frame_cepstrum(cf, &window, config);
        let tc = frame_cepstrum(tf, &window, config);
        let sq: f64 = cc.iter().zip(&tc).map(|(a, b)| (a - b) * (a - b)).sum();
        out.push(scale * (2.0 * sq).sqrt());
    }
    if out.is_empty() {
        return Err(Error::DegenerateInput("both signals are silent".into()));
    }
    Ok(out)
}

/// Frame-averaged LPC cepstral distance (`c_0` excluded). Zero for identical
/// inputs, larger is worse.
pub fn cepstral_distance(clean: &AudioSignal, test: &AudioSignal) -> Result<f64> {
    cepstral_distance_with(clean, test, &MetricConfig::default())
}

pub fn cepstral_distance_with(clean: &AudioSignal, test: &AudioSignal, config: &MetricConfig) -> Result<f64> {
    Ok(mean(&cepstral_frames(clean, test, config)?))
}

pub fn evaluate(clean: &AudioSignal, test: &AudioSignal, config: &MetricConfig) -> Result<MetricReport> {
    let fw = fwssnr_frames(clean, test, config)?;
    let cd = cepstral_frames(clean, test, config)?;
    Ok(MetricReport {
        schema_version: METRICS_SCHEMA_VERSION,
        fwssnr: mean(&fw),
        cepstral_distance: mean(&cd),
        fwssnr_frames: fw,
        cepstral_frames: cd,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

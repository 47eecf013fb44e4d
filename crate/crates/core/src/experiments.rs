//! Desk-scale experiments: synthetic room responses, a bundled speech-like
//! corpus, the (β₁, β*) dictionary-quality grid and the restoration
//! benchmark.
//!
//! Every job draws its randomness from a ChaCha stream keyed by the master
//! seed and the job index, so results do not depend on how rayon schedules
//! the work.

use std::f64::consts::{LN_10, PI};
use std::io::Write;
use std::path::Path;

use log::info;
use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::divergence::Beta;
use crate::dsp;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricConfig};
use crate::model::{ModelState, ReverbKernel};
use crate::pipeline::{self, DereverbConfig};
use crate::stft::{self, PowerSpectrogram};
use crate::updates;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Background noise level of the speech-like signals, in dB below their peak.
pub const NOISE_FLOOR_DB: f64 = 50.0;

/// Derives an independent seed for job `index` under `master`.
pub fn job_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRir {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub t60: f64,
}

impl SyntheticRir {
    /// A single unit tap: convolution leaves the signal unchanged.
    pub fn identity(sample_rate: u32) -> Self {
        Self {
            taps: vec![1.0],
            sample_rate,
            t60: 0.0,
        }
    }

    /// Amplitude envelope `exp(-t · 3 ln 10 / t60)`, which is 1e-3 (-60 dB)
    /// at `t = t60`.
    pub fn envelope(&self, t: f64) -> f64 {
        if self.t60 <= 0.0 {
            return if t == 0.0 { 1.0 } else { 0.0 };
        }
        (-t * 3.0 * LN_10 / self.t60).exp()
    }
}

/// White Gaussian noise under an exponential decay reaching -60 dB at `t60`,
/// scaled to unit peak.
pub fn synth_rir(t60: f64, length: f64, sample_rate: u32, seed: u64) -> Result<SyntheticRir> {
    if !(t60 > 0.0 && t60.is_finite()) {
        return Err(Error::InvalidParameter("t60 must be positive".into()));
    }
    if !(length > 0.0) || sample_rate == 0 {
        return Err(Error::InvalidParameter("length and sample rate must be positive".into()));
    }
    let n = ((length * sample_rate as f64).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = 3.0 * LN_10 / t60;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            rng.sample::<f64, _>(StandardNormal) * (-t * decay).exp()
        })
        .collect();
    let peak = taps.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    taps.iter_mut().for_each(|v| *v /= peak);
    Ok(SyntheticRir {
        taps,
        sample_rate,
        t60,
    })
}

/// Convolves with the room response, keeps the first `clean.len()` samples
/// and rescales to the clean peak.
pub fn apply_reverb(clean: &AudioSignal, rir: &SyntheticRir) -> Result<AudioSignal> {
    if clean.sample_rate != rir.sample_rate {
        return Err(Error::InvalidParameter(format!(
            "signal at {} Hz, room response at {} Hz",
            clean.sample_rate, rir.sample_rate
        )));
    }
    if rir.taps.is_empty() {
        return Err(Error::EmptyInput("room response has no taps".into()));
    }
    let mut y = dsp::convolve(&clean.samples, &rir.taps);
    y.truncate(clean.len());
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target = clean.peak();
    if peak > 0.0 {
        y.iter_mut().for_each(|v| *v *= target / peak);
    }
    AudioSignal::new(y, clean.sample_rate)
}

fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    let tilt = 1.0 / (1.0 + f / 500.0);
    let res: f64 = formants
        .iter()
        .map(|&(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
        .sum();
    tilt * (0.05 + res)
}

fn voiced_phone<R: Rng>(out: &mut [f64], base_f0: f64, fs: f64, phase: &mut f64, rng: &mut R) {
    let f0_start = base_f0 * rng.gen_range(0.85..1.2);
    let f0_end = f0_start * rng.gen_range(0.85..1.15);
    let formants = [
        (rng.gen_range(300.0..800.0), 90.0),
        (rng.gen_range(900.0..2300.0), 120.0),
        (rng.gen_range(2400.0..3200.0), 180.0),
    ];
    let top = (fs / 2.0).min(5000.0);
    let level: f64 = rng.gen_range(0.4..1.0);
    let len = out.len().max(1) as f64;
    for (i, v) in out.iter_mut().enumerate() {
        let r = i as f64 / len;
        let f0 = f0_start + (f0_end - f0_start) * r;
        *phase += 2.0 * PI * f0 / fs;
        let mut acc = 0.0;
        let mut h = 1.0;
        while h * f0 < top {
            acc += formant_gain(h * f0, &formants) * (h * *phase).sin();
            h += 1.0;
        }
        *v += level * (PI * r).sin().powf(0.3) * acc;
    }
}

/// Gaussian noise through a two-pole resonator.
fn fricative_phone<R: Rng>(out: &mut [f64], fs: f64, rng: &mut R) {
    let centre = rng.gen_range(2500.0..6000.0f64).min(0.8 * fs / 2.0);
    let r = (-2.0 * PI * centre * rng.gen_range(0.3..0.8) / fs).exp();
    let theta = 2.0 * PI * centre / fs;
    let level: f64 = rng.gen_range(0.05..0.2);
    let (mut s1, mut s2) = (0.0, 0.0);
    let len = out.len().max(1) as f64;
    for (i, v) in out.iter_mut().enumerate() {
        let e: f64 = rng.sample(StandardNormal);
        let y = e + 2.0 * r * theta.cos() * s1 - r * r * s2;
        s2 = s1;
        s1 = y;
        *v += level * (1.0 - r) * (PI * i as f64 / len).sin() * y;
    }
}

/// Speech-like test signal: "words" of two to five 50-140 ms phones
/// separated by pauses. Three in four phones are voiced (harmonics of a
/// gliding pitch shaped by three formants), the rest are resonant noise
/// bursts. Peak-normalized to 0.5 over a white noise floor
/// [`NOISE_FLOOR_DB`] below that peak.
pub fn speech_like(seconds: f64, sample_rate: u32, seed: u64) -> Result<AudioSignal> {
    if !(seconds > 0.0) || sample_rate == 0 {
        return Err(Error::InvalidParameter("duration and sample rate must be positive".into()));
    }
    let total = (seconds * sample_rate as f64).round() as usize;
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; total];
    let base_f0: f64 = rng.gen_range(95.0..210.0);
    let mut phase = 0.0;

    let mut pos = (0.05 * fs) as usize;
    while pos < total {
        for _ in 0..rng.gen_range(2..6) {
            let end = (pos + (rng.gen_range(0.05..0.14) * fs) as usize).min(total);
            if rng.gen_bool(0.25) {
                fricative_phone(&mut x[pos..end], fs, &mut rng);
            } else {
                voiced_phone(&mut x[pos..end], base_f0, fs, &mut phase, &mut rng);
            }
            pos = end;
            if pos >= total {
                break;
            }
        }
        pos += (rng.gen_range(0.05..0.2) * fs) as usize;
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    let floor = 0.5 * 10f64.powf(-NOISE_FLOOR_DB / 20.0);
    for v in x.iter_mut() {
        *v += floor * rng.sample::<f64, _>(StandardNormal);
    }
    AudioSignal::new(x, sample_rate)
}

/// `count` speech-like signals with seeds derived from `seed`.
pub fn speech_corpus(count: usize, seconds: f64, sample_rate: u32, seed: u64) -> Result<Vec<AudioSignal>> {
    (0..count)
        .map(|i| speech_like(seconds, sample_rate, job_seed(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Dictionary learning settings. `beta1` and `rng_seed` are overridden
    /// per cell and trial.
    pub learning: DereverbConfig,
    /// Iterations when fitting activations to the clean spectrogram.
    pub fit_iters: usize,
    pub metrics: MetricConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            learning: DereverbConfig {
                atoms: 32,
                max_iters_stage1: 200,
                ..Default::default()
            },
            fit_iters: 200,
            metrics: MetricConfig::default(),
        }
    }
}

/// Default grid axis: 0.25, 0.5, …, 2.5.
pub fn default_beta_axis() -> Vec<f64> {
    (1..=10).map(|i| 0.25 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub schema_version: u32,
    pub beta1: Vec<f64>,
    pub beta_star: Vec<f64>,
    /// `distances[i][j]` is the mean cepstral distance at
    /// `(beta1[i], beta_star[j])`.
    pub distances: Vec<Vec<f64>>,
    pub trials: usize,
    pub signals: usize,
    pub seed: u64,
}

impl GridResult {
    /// Cell `(i, j)` with the smallest mean distance.
    pub fn argmin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.distances.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                if d < self.distances[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "beta1,beta_star,mean_cepstral_distance")?;
        for (i, b1) in self.beta1.iter().enumerate() {
            for (j, bs) in self.beta_star.iter().enumerate() {
                writeln!(out, "{b1},{bs},{}", self.distances[i][j])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Fits activations to `s` with the dictionary fixed, no reverberation and
/// no penalty, stopping like Stage 2 on `‖ΔWU‖²_F ≤ δ`.
pub fn fit_activations(
    s: &Array2<f64>,
    dictionary: &crate::model::Dictionary,
    beta: Beta,
    iters: usize,
    config: &DereverbConfig,
    seed: u64,
) -> Result<ModelState> {
    let (_, u) = pipeline::random_init(s, dictionary.atoms(), seed);
    let kernel = ReverbKernel::delta(s.nrows(), 1);
    let mut state = ModelState::new(dictionary.clone(), u, kernel)?;
    let zeros = ndarray::Array1::zeros(s.ncols());
    let delta = pipeline::tolerance(s, config.delta_coeff);
    for _ in 0..iters {
        let prev = state.synthesis().clone();
        let u = updates::update_u(&state, s, beta, &zeros, config.epsilon)?;
        state.set_activations(u)?;
        let change: f64 = ndarray::Zip::from(state.synthesis())
            .and(&prev)
            .fold(0.0, |acc, a, b| acc + (a - b) * (a - b));
        if change <= delta {
            break;
        }
    }
    Ok(state)
}

struct GridJob {
    beta1_index: usize,
    signal: usize,
}

/// For each `(β₁, β*)`: learn a dictionary on the reverberant spectrogram
/// with `β₁`, represent the clean spectrogram on it with `β*`, and score the
/// cepstral distance between the clean-phase resyntheses of the
/// representation and of the clean spectrogram. Cells are averaged over
/// trials and signals.
pub fn beta_grid(
    clean_signals: &[AudioSignal],
    rir: &SyntheticRir,
    beta1_grid: &[f64],
    beta_star_grid: &[f64],
    trials: usize,
    seed: u64,
    config: &GridConfig,
) -> Result<GridResult> {
    if clean_signals.is_empty() || beta1_grid.is_empty() || beta_star_grid.is_empty() {
        return Err(Error::EmptyInput("grid needs signals and both β axes".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let b1: Vec<Beta> = beta1_grid.iter().map(|&b| Beta::new(b)).collect::<Result<_>>()?;
    let bs: Vec<Beta> = beta_star_grid.iter().map(|&b| Beta::new(b)).collect::<Result<_>>()?;
    config.learning.validate()?;
    let stft_cfg = config.learning.stft()?;

    struct Prepared {
        clean_spec: stft::ComplexSpectrogram,
        clean_power: PowerSpectrogram,
        clean_resynth: AudioSignal,
        reverb_power: Array2<f64>,
    }
    let prepared: Vec<Prepared> = clean_signals
        .iter()
        .map(|clean| {
            let clean_spec = stft::stft_forward(clean, &stft_cfg)?;
            let clean_power = stft::power_spectrogram(&clean_spec);
            let clean_resynth = stft::istft(&clean_power, &clean_spec)?;
            let reverb = apply_reverb(clean, rir)?;
            let reverb_power = stft::power_spectrogram(&stft::stft_forward(&reverb, &stft_cfg)?).values;
            Ok(Prepared {
                clean_spec,
                clean_power,
                clean_resynth,
                reverb_power,
            })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<GridJob> = (0..b1.len())
        .flat_map(|i| {
            (0..trials).flat_map(move |_| {
                (0..clean_signals.len()).map(move |s| GridJob {
                    beta1_index: i,
                    signal: s,
                })
            })
        })
        .collect();

    let per_job: Vec<Vec<f64>> = jobs
        .par_iter()
        .enumerate()
        .map(|(index, job)| {
            let p = &prepared[job.signal];
            let cell_seed = job_seed(seed, index as u64);
            let learning = DereverbConfig {
                beta1: b1[job.beta1_index],
                rng_seed: cell_seed,
                ..config.learning.clone()
            };
            let stage1 = pipeline::stage1_learn_dictionary(&p.reverb_power, &learning)?;
            bs.iter()
                .enumerate()
                .map(|(j, &beta_star)| {
                    let fit = fit_activations(
                        &p.clean_power.values,
                        &stage1.dictionary,
                        beta_star,
                        config.fit_iters,
                        &learning,
                        job_seed(cell_seed, j as u64),
                    )?;
                    let approx = p.clean_power.with_values(fit.dry())?;
                    let resynth = stft::istft(&approx, &p.clean_spec)?;
                    metrics::cepstral_distance_with(&p.clean_resynth, &resynth, &config.metrics)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let per_cell = (trials * clean_signals.len()) as f64;
    let mut distances = vec![vec![0.0; bs.len()]; b1.len()];
    for (job, row) in jobs.iter().zip(&per_job) {
        for (j, d) in row.iter().enumerate() {
            distances[job.beta1_index][j] += d / per_cell;
        }
    }
    info!("beta grid: {} cells, {} jobs", b1.len() * bs.len(), jobs.len());
    Ok(GridResult {
        schema_version: REPORT_SCHEMA_VERSION,
        beta1: beta1_grid.to_vec(),
        beta_star: beta_star_grid.to_vec(),
        distances,
        trials,
        signals: clean_signals.len(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub dereverb: DereverbConfig,
    pub metrics: MetricConfig,
    /// Length of each synthetic room response in seconds.
    pub rir_seconds: f64,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            dereverb: DereverbConfig::default(),
            metrics: MetricConfig::default(),
            rir_seconds: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub fwssnr_mean: f64,
    pub fwssnr_std: f64,
    pub cepstral_mean: f64,
    pub cepstral_std: f64,
}

impl Summary {
    fn from_pairs(values: &[(f64, f64)]) -> Self {
        let (fw, cd): (Vec<f64>, Vec<f64>) = values.iter().cloned().unzip();
        let (fwssnr_mean, fwssnr_std) = mean_std(&fw);
        let (cepstral_mean, cepstral_std) = mean_std(&cd);
        Self {
            fwssnr_mean,
            fwssnr_std,
            cepstral_mean,
            cepstral_std,
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub signal: usize,
    pub reverberant_fwssnr: f64,
    pub restored_fwssnr: f64,
    pub reverberant_cepstral: f64,
    pub restored_cepstral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub t60: f64,
    pub reverberant: Summary,
    pub restored: Summary,
    pub trials: Vec<TrialResult>,
}

impl ConditionReport {
    /// Trials where the restored signal has the higher fwsSNR.
    pub fn fwssnr_wins(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.restored_fwssnr > t.reverberant_fwssnr)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub seed: u64,
    pub conditions: Vec<ConditionReport>,
}

impl BenchmarkReport {
    /// One row per condition and signal kind, mean with standard deviation.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t60,kind,fwssnr_mean,fwssnr_std,cepstral_mean,cepstral_std")?;
        for c in &self.conditions {
            for (kind, s) in [("reverberant", &c.reverberant), ("restored", &c.restored)] {
                writeln!(
                    out,
                    "{},{kind},{},{},{},{}",
                    c.t60, s.fwssnr_mean, s.fwssnr_std, s.cepstral_mean, s.cepstral_std
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path)
    }

    /// Table with "mean (std)" cells.
    pub fn to_table(&self) -> String {
        let mut s = String::from("t60 [s]   | fwsSNR reverberant | fwsSNR restored | CD reverberant | CD restored\n");
        for c in &self.conditions {
            s.push_str(&format!(
                "{:<9} | {:>7.3} ({:.3})    | {:>7.3} ({:.3}) | {:>6.3} ({:.3}) | {:>6.3} ({:.3})\n",
                c.t60,
                c.reverberant.fwssnr_mean,
                c.reverberant.fwssnr_std,
                c.restored.fwssnr_mean,
                c.restored.fwssnr_std,
                c.reverberant.cepstral_mean,
                c.reverberant.cepstral_std,
                c.restored.cepstral_mean,
                c.restored.cepstral_std,
            ));
        }
        s
    }
}

/// Reverberates every clean signal for every `t60` (0 means no reverb),
/// dereverberates, and scores both versions against the clean signal.
pub fn benchmark(clean_set: &[AudioSignal], t60_list: &[f64], config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if clean_set.is_empty() || t60_list.is_empty() {
        return Err(Error::EmptyInput("benchmark needs signals and conditions".into()));
    }
    config.dereverb.validate()?;
    let jobs: Vec<(usize, usize)> = (0..t60_list.len())
        .flat_map(|c| (0..clean_set.len()).map(move |s| (c, s)))
        .collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .enumerate()
        .map(|(index, &(c, s))| {
            let clean = &clean_set[s];
            let seed = job_seed(config.seed, index as u64);
            let t60 = t60_list[c];
            let rir = if t60 > 0.0 {
                synth_rir(t60, config.rir_seconds, clean.sample_rate, seed)?
            } else {
                SyntheticRir::identity(clean.sample_rate)
            };
            let reverberant = apply_reverb(clean, &rir)?;
            let cfg = DereverbConfig {
                rng_seed: job_seed(seed, 1),
                ..config.dereverb.clone()
            };
            let restored = pipeline::dereverberate(&reverberant, &cfg)?.restored_signal;
            let m = &config.metrics;
            Ok(TrialResult {
                signal: s,
                reverberant_fwssnr: metrics::fwssnr_with(clean, &reverberant, m)?,
                restored_fwssnr: metrics::fwssnr_with(clean, &restored, m)?,
                reverberant_cepstral: metrics::cepstral_distance_with(clean, &reverberant, m)?,
                restored_cepstral: metrics::cepstral_distance_with(clean, &restored, m)?,
            })
        })
        .collect::<Result<_>>()?;

    let conditions = t60_list
        .iter()
        .enumerate()
        .map(|(c, &t60)| {
            let trials: Vec<TrialResult> = results[c * clean_set.len()..(c + 1) * clean_set.len()].to_vec();
            let rev: Vec<(f64, f64)> = trials
                .iter()
                .map(|t| (t.reverberant_fwssnr, t.reverberant_cepstral))
                .collect();
            let res: Vec<(f64, f64)> = trials.iter().map(|t| (t.restored_fwssnr, t.restored_cepstral)).collect();
            ConditionReport {
                t60,
                reverberant: Summary::from_pairs(&rev),
                restored: Summary::from_pairs(&res),
                trials,
            }
        })
        .collect();
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: config.seed,
        conditions,
    })
}

//! Two-stage dereverberation.
//!
//! Stage 1 learns a dictionary from the reverberant power spectrogram with
//! the kernel pinned to a delta and no sparsity penalty. Stage 2 freezes the
//! dictionary and alternates activation and kernel updates under a second
//! divergence. The restored spectrogram is the observation times the gain
//! `W U / X`, resynthesized with the observed phase.

use log::{debug, warn};
use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::divergence::Beta;
use crate::error::{Error, Result};
use crate::model::{Activations, Dictionary, ModelState, ReverbKernel};
use crate::stft::{self, ComplexSpectrogram, PowerSpectrogram, StftConfig};
use crate::updates::{self, PenaltyWeights};

/// How the Stage-2 activation penalty is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LambdaURule {
    /// `λ_n = mean(Y) · lambda_u_coeff` for every frame.
    #[default]
    Simulated,
    /// `λ_n = mean(Y) / ‖U¹_n‖₁ · recording_lambda_u_coeff`, with `U¹` the
    /// Stage-1 activations. Silent frames get large penalties.
    Recording,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DereverbConfig {
    pub window_len: usize,
    pub hop: usize,
    pub beta1: Beta,
    pub beta2: Beta,
    pub atoms: usize,
    pub kernel_frames: usize,
    pub lambda_u_rule: LambdaURule,
    pub lambda_u_coeff: f64,
    pub recording_lambda_u_coeff: f64,
    pub lambda_h_coeff: f64,
    pub delta_coeff: f64,
    pub max_iters_stage1: usize,
    pub max_iters_stage2: usize,
    pub rng_seed: u64,
    pub epsilon: f64,
}

impl Default for DereverbConfig {
    fn default() -> Self {
        Self {
            window_len: 512,
            hop: 256,
            beta1: Beta::new(0.75).unwrap(),
            beta2: Beta::new(2.0).unwrap(),
            atoms: 64,
            kernel_frames: 20,
            lambda_u_rule: LambdaURule::Simulated,
            lambda_u_coeff: 1e-3,
            recording_lambda_u_coeff: 1e-1,
            lambda_h_coeff: 0.3,
            delta_coeff: 1e-3,
            max_iters_stage1: 500,
            max_iters_stage2: 300,
            rng_seed: 0,
            epsilon: crate::model::EPSILON,
        }
    }
}

impl DereverbConfig {
    pub fn stft(&self) -> Result<StftConfig> {
        StftConfig::new(self.window_len, self.hop)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft()?;
        let positive = [
            ("atoms", self.atoms),
            ("kernel_frames", self.kernel_frames),
            ("max_iters_stage1", self.max_iters_stage1),
            ("max_iters_stage2", self.max_iters_stage2),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        let nonneg = [
            ("lambda_u_coeff", self.lambda_u_coeff),
            ("recording_lambda_u_coeff", self.recording_lambda_u_coeff),
            ("lambda_h_coeff", self.lambda_h_coeff),
            ("delta_coeff", self.delta_coeff),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Output {
    pub dictionary: Dictionary,
    pub activations: Activations,
    pub iterations: usize,
    /// `false` when the iteration cap stopped the loop before the tolerance.
    pub converged: bool,
    pub cost_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Stage2Output {
    pub state: ModelState,
    pub weights: PenaltyWeights,
    pub iterations: usize,
    pub converged: bool,
    pub cost_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub gain: Array2<f64>,
    pub restored_power: PowerSpectrogram,
    pub restored_signal: AudioSignal,
}

#[derive(Debug, Clone)]
pub struct DereverbResult {
    pub restored_signal: AudioSignal,
    pub restored_power: PowerSpectrogram,
    pub gain: Array2<f64>,
    pub factors: ModelState,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub stage1_converged: bool,
    pub stage2_converged: bool,
    pub cost_trace_stage1: Vec<f64>,
    pub cost_trace_stage2: Vec<f64>,
}

fn check_spectrogram(y: &Array2<f64>) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyInput("spectrogram has no entries".into()));
    }
    if y.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter(
            "spectrogram entries must be finite and nonnegative".into(),
        ));
    }
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("spectrogram is identically zero".into()));
    }
    Ok(())
}

/// Stopping tolerance `δ = coeff · ‖Y‖_F`.
pub fn tolerance(y: &Array2<f64>, coeff: f64) -> f64 {
    coeff * y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn frob_sq_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    ndarray::Zip::from(a)
        .and(b)
        .fold(0.0, |acc, x, y| acc + (x - y) * (x - y))
}

/// Random nonnegative starting point: uniform (0, 1) entries, unit-L1
/// dictionary columns, activations rescaled so `mean(W U) = mean(Y)`.
pub fn random_init(y: &Array2<f64>, atoms: usize, seed: u64) -> (Dictionary, Activations) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bins, frames) = y.dim();
    let mut w = Dictionary::random(bins, atoms, &mut rng);
    let mut u = Activations::random(atoms, frames, &mut rng);
    for mut col in w.0.columns_mut() {
        let s = col.sum();
        col.mapv_inplace(|v| v / s);
    }
    let model_mean = w.0.dot(&u.0).mean().unwrap_or(0.0);
    let data_mean = y.mean().unwrap_or(0.0);
    if model_mean > 0.0 && data_mean > 0.0 {
        u.0.mapv_inplace(|v| v * data_mean / model_mean);
    }
    (w, u)
}

/// Plain (non-convolutive) NMF under `β₁`: returns a unit-L1 dictionary and
/// the matching activations.
pub fn stage1_learn_dictionary(y: &Array2<f64>, config: &DereverbConfig) -> Result<Stage1Output> {
    config.validate()?;
    check_spectrogram(y)?;
    let (bins, frames) = y.dim();
    let beta = config.beta1;
    let eps = config.epsilon;
    let (w, u) = random_init(y, config.atoms, config.rng_seed);
    let kernel = ReverbKernel::delta(bins, config.kernel_frames);
    let mut state = ModelState::new(w, u, kernel)?;
    let no_penalty = PenaltyWeights::zeros(bins, frames);
    let delta = tolerance(y, config.delta_coeff);

    let mut trace = vec![updates::cost(&state, y, beta, &no_penalty)?];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters_stage1 {
        iterations += 1;
        let w_prev = state.dictionary.0.clone();
        let w = updates::update_w(&state, y, beta, eps)?;
        state.set_dictionary(w)?;
        let u = updates::update_u(&state, y, beta, &no_penalty.lambda_u, eps)?;
        state.set_activations(u)?;
        state.normalize_dictionary()?;
        #[cfg(debug_assertions)]
        state.debug_check();
        trace.push(updates::cost(&state, y, beta, &no_penalty)?);

        let change = frob_sq_diff(&state.dictionary.0, &w_prev);
        if change <= delta {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("stage 1 stopped at the iteration cap ({iterations}) before converging");
    }
    debug!("stage 1: {iterations} iterations, final cost {:?}", trace.last());
    debug_assert!(state.kernel.is_delta());
    Ok(Stage1Output {
        dictionary: state.dictionary,
        activations: state.activations,
        iterations,
        converged,
        cost_trace: trace,
    })
}

/// Stage-2 penalty weights for the configured rule. `stage1_u` is only read
/// by [`LambdaURule::Recording`].
pub fn stage2_weights(y: &Array2<f64>, stage1_u: &Activations, config: &DereverbConfig) -> PenaltyWeights {
    let mean = y.mean().unwrap_or(0.0);
    let frames = y.ncols();
    let lambda_u = match config.lambda_u_rule {
        LambdaURule::Simulated => Array1::from_elem(frames, mean * config.lambda_u_coeff),
        LambdaURule::Recording => {
            let norms = stage1_u.0.sum_axis(Axis(0));
            norms.mapv(|l1| mean / l1.max(config.epsilon) * config.recording_lambda_u_coeff)
        }
    };
    let lambda_h = y
        .rows()
        .into_iter()
        .map(|row| config.lambda_h_coeff * row.dot(&row))
        .collect();
    PenaltyWeights {
        lambda_u,
        lambda_h,
    }
}

/// Fits activations and kernel under `β₂` with the dictionary held fixed.
pub fn stage2_fit(
    y: &Array2<f64>,
    w_hat: &Dictionary,
    u_init: &Activations,
    config: &DereverbConfig,
) -> Result<Stage2Output> {
    config.validate()?;
    check_spectrogram(y)?;
    let weights = stage2_weights(y, u_init, config);
    stage2_fit_with(y, w_hat, u_init, config, weights)
}

/// [`stage2_fit`] with explicit penalty weights.
pub fn stage2_fit_with(
    y: &Array2<f64>,
    w_hat: &Dictionary,
    u_init: &Activations,
    config: &DereverbConfig,
    weights: PenaltyWeights,
) -> Result<Stage2Output> {
    let (bins, _) = y.dim();
    let beta = config.beta2;
    let eps = config.epsilon;
    let kernel = ReverbKernel::exponential(bins, config.kernel_frames);
    let mut state = ModelState::new(w_hat.clone(), u_init.clone(), kernel)?;
    let delta = tolerance(y, config.delta_coeff);

    let mut trace = vec![updates::cost(&state, y, beta, &weights)?];
    let mut converged = false;
    let mut iterations = 0;
    let mut dry_prev = state.dry();
    while iterations < config.max_iters_stage2 {
        iterations += 1;
        let u = updates::update_u(&state, y, beta, &weights.lambda_u, eps)?;
        state.set_activations(u)?;
        let h = updates::update_h(&state, y, beta, &weights.lambda_h)?;
        state.set_kernel(h)?;
        state.normalize_kernel()?;
        #[cfg(debug_assertions)]
        state.debug_check();
        trace.push(updates::cost(&state, y, beta, &weights)?);

        let dry = state.dry();
        let change = frob_sq_diff(&dry, &dry_prev);
        dry_prev = dry;
        if change <= delta {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("stage 2 stopped at the iteration cap ({iterations}) before converging");
    }
    debug_assert!(state.dictionary == *w_hat);
    Ok(Stage2Output {
        state,
        weights,
        iterations,
        converged,
        cost_trace: trace,
    })
}

/// Gain `G = W U / X` (zero where `X` is zero).
pub fn gain(state: &ModelState) -> Array2<f64> {
    let dry = state.dry();
    let mut g = Array2::zeros(dry.dim());
    ndarray::Zip::from(&mut g)
        .and(&dry)
        .and(state.synthesis())
        .for_each(|g, &d, &x| *g = if x > 0.0 { d / x } else { 0.0 });
    g
}

/// Applies the gain to the observation and resynthesizes with its phase.
pub fn reconstruct(y: &PowerSpectrogram, phase: &ComplexSpectrogram, state: &ModelState) -> Result<Reconstruction> {
    if state.synthesis().dim() != y.values.dim() {
        return Err(crate::error::shape_err(
            "model vs observation",
            y.values.dim(),
            state.synthesis().dim(),
        ));
    }
    let gain = gain(state);
    let restored_power = y.with_values(&gain * &y.values)?;
    let restored_signal = stft::istft(&restored_power, phase)?;
    Ok(Reconstruction {
        gain,
        restored_power,
        restored_signal,
    })
}

/// Full pipeline on a time-domain signal.
pub fn dereverberate(signal: &AudioSignal, config: &DereverbConfig) -> Result<DereverbResult> {
    config.validate()?;
    if signal.len() < config.window_len {
        return Err(Error::InsufficientData(format!(
            "signal has {} samples, need at least {}",
            signal.len(),
            config.window_len
        )));
    }
    let spec = stft::stft_forward(signal, &config.stft()?)?;
    let y = stft::power_spectrogram(&spec);

    let s1 = stage1_learn_dictionary(&y.values, config)?;
    let s2 = stage2_fit(&y.values, &s1.dictionary, &s1.activations, config)?;
    let rec = reconstruct(&y, &spec, &s2.state)?;
    Ok(DereverbResult {
        restored_signal: rec.restored_signal,
        restored_power: rec.restored_power,
        gain: rec.gain,
        factors: s2.state,
        stage1_iters: s1.iterations,
        stage2_iters: s2.iterations,
        stage1_converged: s1.converged,
        stage2_converged: s2.converged,
        cost_trace_stage1: s1.cost_trace,
        cost_trace_stage2: s2.cost_trace,
    })
}

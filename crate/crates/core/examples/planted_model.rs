//! Builds a spectrogram from known factors, runs both stages without
//! penalties, and compares the recovered reverberation kernel with the
//! planted one.
//!
//!     cargo run --release --example planted_model

use beta_dereverb::divergence::{beta_divergence, Beta};
use beta_dereverb::model::{synthesize, Activations, Dictionary, ReverbKernel};
use beta_dereverb::pipeline::{stage1_learn_dictionary, stage2_fit_with, DereverbConfig};
use beta_dereverb::updates::PenaltyWeights;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (bins, frames, atoms, taps) = (64, 200, 8, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut w = Dictionary::random(bins, atoms, &mut rng);
    for mut col in w.0.columns_mut() {
        let s = col.sum();
        col.mapv_inplace(|v| v / s);
    }
    let u = Activations(Array2::from_shape_fn((atoms, frames), |_| {
        if rng.gen::<f64>() < 0.3 { rng.gen::<f64>() } else { 0.0 }
    }));
    let h = ReverbKernel(Array2::from_shape_fn((bins, taps), |(_, m)| (-0.7 * m as f64).exp()));
    let y = synthesize(&w, &u, &h)?;

    let config = DereverbConfig {
        atoms,
        kernel_frames: taps,
        delta_coeff: 0.0,
        lambda_h_coeff: 0.0,
        max_iters_stage1: 500,
        max_iters_stage2: 300,
        ..Default::default()
    };
    let stage1 = stage1_learn_dictionary(&y, &config)?;
    let weights = PenaltyWeights::zeros(bins, frames);
    let stage2 = stage2_fit_with(&y, &stage1.dictionary, &stage1.activations, &config, weights)?;

    let euclid = Beta::new(2.0)?;
    let mean = Array2::from_elem(y.dim(), y.mean().unwrap_or(0.0));
    let ratio = beta_divergence(&y, stage2.state.synthesis(), euclid)? / beta_divergence(&y, &mean, euclid)?;
    println!("stage 1: {} iterations, stage 2: {} iterations", stage1.iterations, stage2.iterations);
    println!("fit error relative to the mean model: {ratio:.2e}");
    let recovered = stage2.state.kernel.0.mean_axis(ndarray::Axis(0)).unwrap();
    println!("{:>4} {:>8} {:>9}", "lag", "planted", "recovered");
    for m in 0..taps {
        println!("{m:>4} {:>8.4} {:>9.4}", h.0[[0, m]], recovered[m]);
    }
    Ok(())
}

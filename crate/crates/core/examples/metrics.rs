//! Scores increasingly noisy copies of a speech-like signal with the
//! frequency-weighted segmental SNR and the cepstral distance.
//!
//!     cargo run --release --example metrics

use beta_dereverb::audio::AudioSignal;
use beta_dereverb::experiments::speech_like;
use beta_dereverb::metrics::{evaluate, MetricConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clean = speech_like(2.0, 16_000, 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 1.0)?;
    let config = MetricConfig::default();
    println!("{:>8} {:>10} {:>10}", "noise", "fwsSNR", "cepstral");
    for level in [0.0, 0.001, 0.01, 0.05, 0.2] {
        let noisy: Vec<f64> = clean.samples.iter().map(|s| s + level * normal.sample(&mut rng)).collect();
        let test = AudioSignal::new(noisy, clean.sample_rate)?;
        let r = evaluate(&clean, &test, &config)?;
        println!("{level:>8} {:>10.3} {:>10.3}", r.fwssnr, r.cepstral_distance);
    }
    Ok(())
}

//! Analyses a signal, resynthesizes it from the power spectrogram and the
//! original phase, and reports the reconstruction error.
//!
//!     cargo run --example stft_roundtrip

use beta_dereverb::experiments::speech_like;
use beta_dereverb::stft::{istft, power_spectrogram, stft_forward, StftConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let signal = speech_like(1.0, 16_000, 3)?;
    for (len, hop) in [(512, 256), (512, 128), (1024, 256)] {
        let config = StftConfig::new(len, hop)?;
        let spec = stft_forward(&signal, &config)?;
        let power = power_spectrogram(&spec);
        let back = istft(&power, &spec)?;
        let err = signal
            .samples
            .iter()
            .zip(&back.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "window {len:>4} hop {hop:>3}: {} bins x {} frames, max error {err:.2e}",
            power.bins(),
            power.frames()
        );
    }
    Ok(())
}

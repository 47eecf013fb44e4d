//! Removes a DC offset and a rumble component with the linear-phase
//! high-pass used before processing recordings.
//!
//!     cargo run --release --example highpass

use beta_dereverb::audio::{highpass_filter, AudioSignal, HIGHPASS_CUTOFF_HZ, HIGHPASS_TAPS};
use beta_dereverb::dsp::rms;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rate = 16_000;
    let tone = |f: f64| -> Vec<f64> {
        (0..2 * rate).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / rate as f64).sin()).collect()
    };
    let speech_band = tone(440.0);
    let rumble = tone(8.0);
    let mixed: Vec<f64> = speech_band.iter().zip(&rumble).map(|(a, b)| 0.2 + 0.5 * a + 0.5 * b).collect();
    let filtered = highpass_filter(&AudioSignal::new(mixed, rate as u32)?, HIGHPASS_TAPS, HIGHPASS_CUTOFF_HZ)?;

    let mid = rate / 2..3 * rate / 2;
    let residual: Vec<f64> = filtered.samples[mid.clone()]
        .iter()
        .zip(&speech_band[mid])
        .map(|(y, s)| y - 0.5 * s)
        .collect();
    let mean = filtered.samples.iter().sum::<f64>() / filtered.len() as f64;
    println!("{HIGHPASS_TAPS} taps, cutoff {HIGHPASS_CUTOFF_HZ} Hz");
    println!("output mean {mean:.2e}, residual rms after removing the 440 Hz tone {:.2e}", rms(&residual));
    Ok(())
}

//! Reverberates a speech-like signal with a synthetic room, dereverberates
//! it and writes the three versions as WAV files.
//!
//!     cargo run --release --example dereverb_synthetic -- [out_dir] [t60]

use std::path::PathBuf;

use beta_dereverb::audio::write_wav;
use beta_dereverb::experiments::{apply_reverb, speech_like, synth_rir};
use beta_dereverb::metrics::{evaluate, MetricConfig};
use beta_dereverb::pipeline::{dereverberate, DereverbConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "dereverb_out".into()));
    let t60: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0.45);
    std::fs::create_dir_all(&out_dir)?;

    let clean = speech_like(3.0, 16_000, 1)?;
    let rir = synth_rir(t60, 1.0, clean.sample_rate, 2)?;
    let reverberant = apply_reverb(&clean, &rir)?;
    let result = dereverberate(&reverberant, &DereverbConfig::default())?;

    write_wav(&clean, out_dir.join("clean.wav"))?;
    write_wav(&reverberant, out_dir.join("reverberant.wav"))?;
    write_wav(&result.restored_signal, out_dir.join("restored.wav"))?;

    let metrics = MetricConfig::default();
    let before = evaluate(&clean, &reverberant, &metrics)?;
    let after = evaluate(&clean, &result.restored_signal, &metrics)?;
    println!("iterations: stage 1 {}, stage 2 {}", result.stage1_iters, result.stage2_iters);
    println!("fwsSNR   {:>7.3} -> {:>7.3} dB", before.fwssnr, after.fwssnr);
    println!("cepstral {:>7.3} -> {:>7.3} dB", before.cepstral_distance, after.cepstral_distance);
    println!("wrote {}", out_dir.display());
    Ok(())
}

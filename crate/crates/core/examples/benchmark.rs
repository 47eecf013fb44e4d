//! Reverberates the bundled speech-like corpus and compares metrics before
//! and after dereverberation.
//!
//!     cargo run --release --example benchmark -- [signals] [seconds]

use beta_dereverb::experiments::{benchmark, speech_corpus, BenchmarkConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(4);
    let seconds: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(2.0);

    let seed: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(1);
    let corpus = speech_corpus(count, seconds, 16_000, seed)?;
    let config = BenchmarkConfig::default();
    let start = std::time::Instant::now();
    let report = benchmark(&corpus, &[0.0, 0.45], &config)?;
    print!("{}", report.to_table());
    for c in &report.conditions {
        println!("t60 {}: restored fwsSNR higher in {}/{} trials", c.t60, c.fwssnr_wins(), c.trials.len());
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

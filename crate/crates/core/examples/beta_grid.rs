//! Small sweep over learning and fitting divergences on reverberated
//! speech-like signals, printed as a table of mean cepstral distances.
//!
//!     cargo run --release --example beta_grid -- [seed]

use beta_dereverb::experiments::{beta_grid, speech_corpus, synth_rir, GridConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(0);
    let axis = [0.5, 1.0, 1.5, 2.0];
    let clean = speech_corpus(2, 2.0, 16_000, seed)?;
    let rir = synth_rir(0.45, 1.0, 16_000, seed + 1)?;
    let grid = beta_grid(&clean, &rir, &axis, &axis, 1, seed, &GridConfig::default())?;

    print!("{:>8}", "b1 \\ b*");
    for b in &grid.beta_star {
        print!("{b:>8}");
    }
    println!();
    for (i, b1) in grid.beta1.iter().enumerate() {
        print!("{b1:>8}");
        for d in &grid.distances[i] {
            print!("{d:>8.3}");
        }
        println!();
    }
    let (i, j) = grid.argmin();
    println!("minimum at beta1 = {}, beta* = {}", grid.beta1[i], grid.beta_star[j]);
    Ok(())
}

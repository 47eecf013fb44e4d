//! Tabulates the beta-divergence family on a few scalar pairs and shows
//! the convex/concave split used by the majorization updates.
//!
//!     cargo run --example divergence

use beta_dereverb::divergence::{divergence_entry, split_entry, Beta};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = [(1.0, 2.0), (2.0, 1.0), (1.0, 0.1), (0.1, 1.0)];
    println!("{:>5} {:>8} {:>8} {:>10} {:>10} {:>10}", "beta", "y", "x", "d", "convex", "concave");
    for b in [0.0, 0.5, 0.75, 1.0, 1.5, 2.0] {
        let beta = Beta::new(b)?;
        for (y, x) in pairs {
            let d = divergence_entry(y, x, beta);
            let (convex, concave) = split_entry(y, x, beta);
            println!("{b:>5} {y:>8} {x:>8} {d:>10.5} {convex:>10.5} {concave:>10.5}");
        }
    }
    println!("\nscaling both arguments by 10 multiplies d by 10^beta:");
    for b in [0.0, 1.0, 2.0] {
        let beta = Beta::new(b)?;
        let ratio = divergence_entry(10.0, 20.0, beta) / divergence_entry(1.0, 2.0, beta);
        println!("  beta {b}: ratio {ratio:.4}");
    }
    Ok(())
}

//! Dereverberates a short signal, checkpoints the fitted factors to JSON
//! and restores them.
//!
//!     cargo run --release --example factor_dump -- [path]

use beta_dereverb::experiments::speech_like;
use beta_dereverb::model::FactorDump;
use beta_dereverb::pipeline::{dereverberate, DereverbConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "factors.json".into());
    let signal = speech_like(1.0, 16_000, 9)?;
    let config = DereverbConfig { atoms: 16, ..Default::default() };
    let result = dereverberate(&signal, &config)?;

    result.factors.to_dump().write(&path)?;
    let restored = FactorDump::read(&path)?.into_state()?;
    let (k, j, n, m) = restored.dims();
    println!("wrote {path}: K={k} J={j} N={n} M={m}");
    println!("round trip exact: {}", restored.synthesis() == result.factors.synthesis());
    Ok(())
}

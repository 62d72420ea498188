//! Rewrite the bundled synthetic probe under `data/synthetic/`.
//!
//! `cargo run --example regenerate_fixtures [-- <dir>]`

use std::path::PathBuf;

fn main() -> ctxprobe::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic"));
    let probe = ctxprobe::fixtures::synthetic_probe();
    probe.write(&dir)?;
    let exp = probe.expectations();
    println!("wrote {} facts to {}", probe.facts.len(), dir.display());
    println!("expected P@1 without context (macro): {:.2}", ctxprobe::fixtures::Expectations::macro_average(&exp.p1_none));
    Ok(())
}

//! Writes the small synthetic catalogue (pages, corpus, seed queries and a
//! matching config) to a directory, ready for the command-line tool.
//!
//! `cargo run --example fixture_bundle -- data/fixture`

use std::path::PathBuf;

use metasynth::fixture::{bundled_fixture, fixture_settings, write_bundle};

fn main() -> metasynth::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixture".into()));
    let fx = bundled_fixture();
    write_bundle(&dir, &fx, &fixture_settings())?;
    println!(
        "wrote {} pages, {} corpus documents and {} seed queries to {}",
        fx.pages.len(),
        fx.corpus.len(),
        fx.seeds.len(),
        dir.display()
    );
    Ok(())
}

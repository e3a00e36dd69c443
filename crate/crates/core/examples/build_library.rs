//! Harvests a library from seed queries over the synthetic corpus and saves
//! it as JSON lines.
//!
//! `cargo run --example build_library -- [out.jsonl]`

use metasynth::fixture::{fixture_settings, synthetic_catalog};
use metasynth::{build_library, ExemplarLibrary, SimulatedSearch};

fn main() -> metasynth::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "library.jsonl".into());
    let fx = synthetic_catalog(40, 20, 1);
    let settings = fixture_settings();
    let embedder = settings.build_embedder()?;
    let search = SimulatedSearch::new(fx.corpus, embedder.clone())?;

    let (lib, report) = build_library(&fx.seeds, &search, embedder.clone(), &settings.pipeline)?;
    println!(
        "fetched {}, dropped {} near-duplicates, stored {} under {} queries",
        report.stats.fetched,
        report.stats.duplicates,
        lib.len(),
        lib.query_count()
    );
    for q in lib.queries().take(3) {
        println!("{q:?} -> {} exemplars", lib.exemplar_ids(q).len());
    }

    lib.save(out.as_ref())?;
    let reloaded = ExemplarLibrary::load(out.as_ref(), embedder)?;
    println!("saved to {out}; reload equal: {}", reloaded == lib);
    Ok(())
}

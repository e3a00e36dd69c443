//! Builds a library from seed queries, then generates snippets for a batch of
//! synthetic product pages and reports how each one went.
//!
//! `cargo run --example end_to_end -- [pages]`

use std::collections::BTreeMap;
use std::sync::Arc;

use metasynth::fixture::{fixture_settings, synthetic_catalog};
use metasynth::{build_library, MetaSynth, SimulatedSearch};

fn main() -> metasynth::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50);
    let fx = synthetic_catalog(n, 0, 42);
    let settings = fixture_settings();
    let embedder = settings.build_embedder()?;
    let search = Arc::new(SimulatedSearch::new(fx.corpus.clone(), embedder.clone())?);

    let (mut lib, report) = build_library(&fx.seeds, &*search, embedder, &settings.pipeline)?;
    println!(
        "library: {} exemplars under {} queries ({} fetched, {} duplicates)",
        lib.len(),
        lib.query_count(),
        report.stats.fetched,
        report.stats.duplicates
    );

    let ms = MetaSynth::new(
        settings.pipeline.clone(),
        settings.guardrails.clone(),
        search,
        settings.build_llm()?,
        settings.build_panel(lib.embedder().clone()),
    );
    let batch = ms.run_batch(&fx.pages, &mut lib, settings.workers)?;

    let mut modes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut stops: BTreeMap<String, usize> = BTreeMap::new();
    for (id, outcome) in &batch.pages {
        match outcome {
            Ok(o) => {
                *modes.entry(o.mode()).or_default() += 1;
                *stops.entry(format!("{:?}", o.trace.stop_reason)).or_default() += 1;
                if !o.accepted() {
                    let last = o.trace.final_iteration();
                    println!("{id}: not accepted; {:?}", last.scores);
                    println!("   {}", o.snippet().joined());
                }
            }
            Err(e) => println!("{id}: error: {e}"),
        }
    }
    if let Some((_, Ok(o))) = batch.pages.first() {
        println!("example ({}): {}", o.page_id, o.snippet().joined());
    }
    println!("modes: {modes:?}");
    println!("stop reasons: {stops:?}");
    println!(
        "accepted {}/{}; library grew by {} exemplars, {} queries",
        batch.accepted(),
        batch.pages.len(),
        batch.library_added,
        batch.library_queries_added
    );
    Ok(())
}

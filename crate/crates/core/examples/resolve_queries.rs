//! Shows both retrieval paths: a page close to a seeded query takes the
//! matched path, an unseeded product goes through expansion and filtering.

use metasynth::fixture::{fixture_settings, synthetic_catalog};
use metasynth::{build_library, resolve_queries, SimulatedSearch};

fn main() -> metasynth::Result<()> {
    let fx = synthetic_catalog(30, 10, 3);
    let settings = fixture_settings();
    let embedder = settings.build_embedder()?;
    let search = SimulatedSearch::new(fx.corpus.clone(), embedder.clone())?;
    let llm = settings.build_llm()?;
    let (mut lib, _) = build_library(&fx.seeds, &search, embedder, &settings.pipeline)?;

    for page in fx.pages.iter().take(8) {
        let before = lib.len();
        match resolve_queries(page, &mut lib, &search, &*llm, &settings.pipeline) {
            Ok(r) => println!(
                "{} {:<28} {:?} s*={:.3} queries={:?} pool={} added={}",
                page.page_id(),
                page.attribute("name").unwrap_or(""),
                r.mode,
                r.s_star,
                r.query_texts(),
                r.pool(&lib).len(),
                lib.len() - before
            ),
            Err(e) => println!("{} {e}", page.page_id()),
        }
    }
    Ok(())
}

//! Picks exemplars for one page at a few relevance/diversity trade-offs.

use metasynth::fixture::{fixture_settings, synthetic_catalog};
use metasynth::{build_library, select_exemplars, ExemplarId, SimulatedSearch};

fn main() -> metasynth::Result<()> {
    let fx = synthetic_catalog(40, 40, 5);
    let mut settings = fixture_settings();
    let embedder = settings.build_embedder()?;
    let search = SimulatedSearch::new(fx.corpus.clone(), embedder.clone())?;
    let (lib, _) = build_library(&fx.seeds, &search, embedder.clone(), &settings.pipeline)?;

    let page = &fx.pages[0];
    let z = embedder.embed_page(page)?;
    let pool: Vec<(ExemplarId, _)> = (0..lib.len()).map(|i| (ExemplarId(i), &lib.exemplars()[i])).collect();
    println!("page: {}", page.attribute("name").unwrap_or(""));

    for (lambda, gamma) in [(1.0, 0.0), (0.7, 0.1), (0.3, 0.1)] {
        settings.pipeline.lambda = lambda;
        settings.pipeline.gamma = gamma;
        let sel = select_exemplars(&pool, &z, &settings.pipeline);
        println!("lambda {lambda} gamma {gamma}:");
        for (id, score) in sel.selected.iter().zip(&sel.scores) {
            let e = lib.get(*id).unwrap();
            println!("  {score:>7.4}  #{} {}", e.rank, e.title);
        }
    }
    Ok(())
}

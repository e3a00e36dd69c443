//! Ranks three pipeline variants per page with the mock judge and summarizes
//! the rankings as NDCG, MRR and average rank.

use std::sync::Arc;

use metasynth::fixture::{fixture_settings, synthetic_catalog};
use metasynth::metrics::{Judge, Variant};
use metasynth::{build_library, compare_methods, GainKind, JudgedItem, MetaSynth, MockJudge, PipelineVariant, SimulatedSearch};

fn main() -> metasynth::Result<()> {
    let fx = synthetic_catalog(30, 15, 21);
    let settings = fixture_settings();
    let embedder = settings.build_embedder()?;
    let search = Arc::new(SimulatedSearch::new(fx.corpus.clone(), embedder.clone())?);
    let (lib, _) = build_library(&fx.seeds, &*search, embedder.clone(), &settings.pipeline)?;
    let judge = MockJudge::new(settings.build_panel(embedder.clone()));

    let variants = [PipelineVariant::FULL, PipelineVariant::NO_RETRIEVAL, PipelineVariant::NO_EVALUATION];
    let mut items = Vec::new();
    for page in &fx.pages {
        let mut outs = Vec::new();
        for v in variants {
            let ms = MetaSynth::new(
                settings.pipeline.clone(),
                settings.guardrails.clone(),
                search.clone(),
                settings.build_llm()?,
                settings.build_panel(embedder.clone()),
            )
            .with_variant(v);
            let o = ms.generate_page(page, &mut lib.clone())?;
            outs.push(Variant {
                method: v.name().into(),
                snippet: o.snippet().clone(),
            });
        }
        let ranking = judge.rank(page, &outs, &settings.guardrails)?;
        items.push(JudgedItem {
            item_id: page.page_id().into(),
            variants: outs,
            ranking,
        });
    }
    print!("{}", compare_methods(&items, GainKind::Graded)?.to_text());
    Ok(())
}

//! Runs the evaluate/refine loop on a page with a scripted generator whose
//! first draft breaks the guardrails, and prints each iteration.

use metasynth::fixture::{fixture_guardrails, synthetic_catalog};
use metasynth::llm::format_completion;
use metasynth::{run_loop, EvaluatorPanel, HashingEmbedder, PipelineConfig, ScriptedGenerator};
use std::sync::Arc;

fn main() -> metasynth::Result<()> {
    let page = synthetic_catalog(1, 0, 11).pages.remove(0);
    let name = page.attribute("name").unwrap_or("").to_string();
    let feature = page.attribute("feature").unwrap_or("").to_string();
    let brand = page.attribute("brand").unwrap_or("").to_string();
    let llm = ScriptedGenerator::new(vec![
        format_completion(&name, "Guaranteed best price on this one."),
        format_completion(&name, &format!("{feature}. Premium, stylish pick.")),
        format_completion(
            &format!("{brand} {name}"),
            &format!("{brand} {name} with {feature}. A premium, stylish {name}. Free shipping. Shop now!"),
        ),
    ]);
    let panel = EvaluatorPanel::new(Arc::new(HashingEmbedder::default()));
    let guardrails = fixture_guardrails();
    let cfg = PipelineConfig::default();

    let trace = run_loop(&page, &[], &guardrails, &cfg, &llm, &panel)?;
    for (i, it) in trace.iterations.iter().enumerate() {
        println!("[{i}] {}", it.snippet.joined());
        let s = &it.scores;
        println!(
            "    rel {:.2} promo {:.2} cta {:.2} brand {:.2} hard {} missing {:?}",
            s.rel,
            s.promo,
            s.cta,
            s.brand,
            s.hard_violations.len(),
            s.missing_required
        );
        for line in &it.feedback.consolidated {
            println!("    -> {line}");
        }
    }
    println!("stop: {:?}, calls {}", trace.stop_reason, trace.generator_calls);
    Ok(())
}

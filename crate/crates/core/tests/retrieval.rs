mod common;

use std::sync::Arc;

use common::CountingSearch;
use metasynth::retrieval::{augment_library, relevance_filter};
use metasynth::{
    resolve_queries, Attribute, EmbeddingProvider, Error, ExemplarLibrary, HashingEmbedder,
    MockGenerator, PipelineConfig, ProductPage, ResolutionMode, ScriptedGenerator, SearchClient,
    SimulatedCorpusDoc, SimulatedSearch,
};

const TARGET: &str = "https://shop.example/zeta-widget";

fn doc(url: &str, title: &str, description: &str) -> SimulatedCorpusDoc {
    SimulatedCorpusDoc {
        url: url.into(),
        title: title.into(),
        description: description.into(),
        popularity: 0.0,
    }
}

fn embedder() -> Arc<dyn EmbeddingProvider> {
    Arc::new(HashingEmbedder::default())
}

/// Target ranks 1 for "zeta widget", 3 for "orbit lamp" (two purer matches
/// ahead of it) and 4 for "nova" (three purer matches ahead).
fn ranked_corpus() -> SimulatedSearch {
    let docs = vec![
        doc(TARGET, "Zeta Widget", "orbit lamp nova"),
        doc("https://a.example/1", "Orbit Lamp", "orbit lamp"),
        doc("https://a.example/2", "Orbit Lamp", "orbit lamp classic"),
        doc("https://c.example/1", "Nova", "nova"),
        doc("https://c.example/2", "Nova", "nova nova"),
        doc("https://c.example/3", "Nova", "nova shine"),
        doc("https://d.example/1", "Kettle", "steel kettle"),
    ];
    SimulatedSearch::new(docs, embedder()).unwrap()
}

fn rank_of(search: &dyn SearchClient, q: &str, url: &str) -> Option<u32> {
    search
        .search(q, 50)
        .unwrap()
        .into_iter()
        .find(|r| r.url == url)
        .map(|r| r.rank)
}

#[test]
fn relevance_filter_keeps_ranks_up_to_k_hit() {
    let search = ranked_corpus();
    let k_hit = 3;
    assert_eq!(rank_of(&search, "zeta widget", TARGET), Some(1));
    assert_eq!(rank_of(&search, "orbit lamp", TARGET), Some(k_hit));
    assert_eq!(rank_of(&search, "nova", TARGET), Some(k_hit + 1));

    let kept = relevance_filter(&["zeta widget", "orbit lamp", "nova"], TARGET, &search, k_hit as usize).unwrap();
    assert_eq!(kept, vec!["zeta widget", "orbit lamp"]);

    // Canonicalization: case and trailing slash do not matter.
    let kept = relevance_filter(&["zeta widget"], "HTTPS://SHOP.example/zeta-widget/", &search, 1).unwrap();
    assert_eq!(kept.len(), 1);
    assert!(relevance_filter(&[] as &[&str], TARGET, &search, 3).unwrap().is_empty());
    assert!(relevance_filter(&["zeta widget"], "https://elsewhere.example/", &search, 3)
        .unwrap()
        .is_empty());
}

#[test]
fn augmentation_skips_target_and_is_idempotent() {
    let search = ranked_corpus();
    let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
    // Top 3 for "orbit lamp" includes the target at rank 3.
    let added = augment_library(&mut lib, &["orbit lamp"], &search, 3, TARGET).unwrap();
    assert!(added <= 2);
    assert!(lib.exemplars().iter().all(|e| e.url != TARGET));
    let before = lib.clone();
    assert_eq!(augment_library(&mut lib, &["orbit lamp"], &search, 3, TARGET).unwrap(), 0);
    assert_eq!(lib, before);
}

#[test]
fn disjoint_queries_each_add_k_aug() {
    let search = SimulatedSearch::new(
        vec![
            doc("https://k.example/1", "Steel kettle", "fast boil kettle"),
            doc("https://k.example/2", "Copper kettle", "stovetop kettle with whistle"),
            doc("https://k.example/3", "Glass kettle", "see the water"),
            doc("https://c.example/1", "Oak chair", "solid dining chair"),
            doc("https://c.example/2", "Mesh office chair", "lumbar support"),
        ],
        embedder(),
    )
    .unwrap();
    let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
    let added = augment_library(&mut lib, &["kettle", "chair"], &search, 2, TARGET).unwrap();
    assert_eq!(added, 4);
    assert_eq!(lib.exemplar_ids("kettle").len(), 2);
    assert_eq!(lib.exemplar_ids("chair").len(), 2);
}

fn page(id: &str, url: &str, attrs: &[(&str, &str)]) -> ProductPage {
    ProductPage::new(id, url, attrs.iter().map(|(n, v)| Attribute::new(*n, *v)).collect()).unwrap()
}

#[test]
fn matched_mode_never_searches() {
    let search = CountingSearch::new(ranked_corpus());
    let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
    lib.ingest_results("name red ceramic mug", &ranked_corpus().search("orbit lamp", 2).unwrap(), None)
        .unwrap();
    let p = page("p", "https://shop.example/mug", &[("name", "Red Ceramic Mug")]);
    let cfg = PipelineConfig::default();
    let res = resolve_queries(&p, &mut lib, &search, &MockGenerator::default(), &cfg).unwrap();
    assert_eq!(res.mode, ResolutionMode::Matched);
    assert!((res.s_star - 1.0).abs() < 1e-9);
    assert!(res.queries.iter().all(|(_, s)| s.unwrap() >= cfg.tau_q));
    assert_eq!(res.pool(&lib).len(), 2);
    assert_eq!(search.calls(), 0);
}

#[test]
fn expanded_mode_augments_and_replays() {
    let search = ranked_corpus();
    let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
    let p = page("z", TARGET, &[("name", "Zeta Widget"), ("brand", "Orbit")]);
    let cfg = PipelineConfig {
        k_hit: 3,
        k_aug: 3,
        ..PipelineConfig::default()
    };
    let res = resolve_queries(&p, &mut lib, &search, &MockGenerator::default(), &cfg).unwrap();
    assert_eq!(res.mode, ResolutionMode::Expanded);
    assert_eq!(res.s_star, f64::NEG_INFINITY);
    assert!(res.expansion_attempted);
    assert!(res.augmented_count > 0);
    for (q, sim) in &res.queries {
        assert!(sim.is_none());
        assert!(rank_of(&search, q, TARGET).is_some_and(|r| r as usize <= cfg.k_hit), "{q}");
        assert!(lib.has_query(q));
    }
    assert!(lib.exemplars().iter().all(|e| e.url != TARGET));

    // A second resolution either matches now or repeats the same expansion,
    // and adds nothing.
    let len = lib.len();
    let again = resolve_queries(&p, &mut lib, &search, &MockGenerator::default(), &cfg).unwrap();
    assert_eq!(lib.len(), len);
    if again.mode == ResolutionMode::Expanded {
        assert_eq!(again.query_texts(), res.query_texts());
        assert_eq!(again.augmented_count, 0);
    }
}

#[test]
fn no_coverage_paths() {
    let search = ranked_corpus();
    let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
    let p = page("p", "https://nowhere.example/x", &[("name", "Quartz Clock")]);
    let failing = ScriptedGenerator::new(Vec::<String>::new()).with_failure_at(0, "offline");
    let err = resolve_queries(&p, &mut lib, &search, &failing, &PipelineConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NoCoverage { .. }));

    // Expansion works but no query reaches the page.
    match resolve_queries(&p, &mut lib, &search, &MockGenerator::default(), &PipelineConfig::default()) {
        Err(Error::NoCoverage { expanded, .. }) => assert!(!expanded.is_empty()),
        other => panic!("{other:?}"),
    }
    assert!(lib.is_empty());
}

#[test]
fn simulated_search_examples() {
    let one = SimulatedSearch::new(vec![doc("https://x.example/", "Only", "doc")], embedder()).unwrap();
    let r = one.search("anything", 5).unwrap();
    assert_eq!((r.len(), r[0].rank), (1, 1));

    let two = SimulatedSearch::new(
        vec![
            doc("https://a.example/", "Garden hose", "green rubber"),
            doc("https://b.example/", "Red mug", "ceramic red mug"),
        ],
        embedder(),
    )
    .unwrap();
    assert_eq!(two.search("red ceramic mug", 1).unwrap()[0].url, "https://b.example/");
    assert_eq!(two.search("red ceramic mug", 10).unwrap().len(), 2);

    let empty = SimulatedSearch::new(vec![], embedder()).unwrap();
    assert!(empty.search("x", 3).unwrap().is_empty());
}

//! Deterministic synthetic catalogue for demos and tests: product pages, a
//! search corpus containing them, and seed queries.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{SearchSettings, Settings};
use crate::error::Result;
use crate::model::{default_thresholds, Attribute, Guardrails, ProductPage, RequiredElement};
use crate::search::SimulatedCorpusDoc;

const PRODUCTS: [&str; 16] = [
    "mug", "lamp", "backpack", "sneakers", "headphones", "blender", "chair", "jacket",
    "watch", "tent", "kettle", "pillow", "wallet", "speaker", "umbrella", "bottle",
];
const MATERIALS: [&str; 8] = [
    "ceramic", "bamboo", "leather", "steel", "cotton", "wool", "glass", "canvas",
];
const COLORS: [&str; 8] = [
    "red", "navy", "olive", "black", "ivory", "teal", "amber", "grey",
];
const BRANDS: [&str; 10] = [
    "Acme", "Northwind", "Fabrikam", "Contoso", "Lumen", "Tallis", "Orbit", "Vega",
    "Kestrel", "Halden",
];
const FEATURES: [&str; 10] = [
    "dishwasher safe",
    "water resistant",
    "lightweight design",
    "handmade finish",
    "two year warranty",
    "recycled materials",
    "compact storage",
    "ergonomic grip",
    "quick charging",
    "machine washable",
];
const PROMO: [&str; 8] = [
    "premium", "perfect", "exclusive", "stylish", "upgrade", "save", "discover", "shop",
];
const CTAS: [&str; 4] = ["Shop now", "Buy now", "Order today", "Explore the range"];
/// Claims the fixture guardrails forbid; some corpus descriptions use them.
const RISKY: [&str; 3] = ["Guaranteed lowest price", "Best price online", "Cheapest deal"];

/// Products whose generic queries are seeded; the rest need expansion.
const SEEDED_PRODUCTS: usize = 8;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub pages: Vec<ProductPage>,
    pub corpus: Vec<SimulatedCorpusDoc>,
    pub seeds: Vec<String>,
}

fn slug(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join("-")
}

/// `n_pages` product pages, one corpus document per page at the page's own
/// URL, and `n_competitors` rival listings for randomly chosen pages.
pub fn synthetic_catalog(n_pages: usize, n_competitors: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pages = Vec::with_capacity(n_pages);
    let mut corpus = Vec::with_capacity(n_pages + n_competitors);
    let mut specs = Vec::with_capacity(n_pages);
    for i in 0..n_pages {
        let product = PRODUCTS[rng.gen_range(0..PRODUCTS.len())];
        let material = *MATERIALS.choose(&mut rng).unwrap();
        let color = *COLORS.choose(&mut rng).unwrap();
        let brand = *BRANDS.choose(&mut rng).unwrap();
        let feature = *FEATURES.choose(&mut rng).unwrap();
        let name = format!("{} {material} {product}", capitalize(color));
        let id = format!("p{:04}", i + 1);
        let url = format!("https://shop.example/products/{id}-{}", slug(&name));
        let attributes = vec![
            Attribute::new("name", name.clone()),
            Attribute::new("brand", brand),
            Attribute::new("feature", feature),
            Attribute::new("material", material),
            Attribute::new("color", color),
            Attribute::new("category", product),
        ];
        pages.push(ProductPage::new(id, url.clone(), attributes).expect("valid page"));
        corpus.push(listing(&mut rng, url, brand, &name, feature));
        specs.push((product, material));
    }
    let n_competitors = if n_pages == 0 { 0 } else { n_competitors };
    for j in 0..n_competitors {
        let (product, material) = specs[rng.gen_range(0..n_pages)];
        let rival = *BRANDS.choose(&mut rng).unwrap();
        let color = *COLORS.choose(&mut rng).unwrap();
        let name = format!("{} {material} {product}", capitalize(color));
        let url = format!(
            "https://{}.example/{}-{}",
            rival.to_lowercase(),
            slug(&name),
            j + 1
        );
        let feature = *FEATURES.choose(&mut rng).unwrap();
        corpus.push(listing(&mut rng, url, rival, &name, feature));
    }
    Fixture {
        pages,
        corpus,
        seeds: seed_queries(),
    }
}

fn listing(rng: &mut ChaCha8Rng, url: String, brand: &str, name: &str, feature: &str) -> SimulatedCorpusDoc {
    let promo: Vec<&str> = PROMO.choose_multiple(rng, 2).copied().collect();
    let mut description = format!(
        "{} {name} with {feature}. {} everyday pick.",
        capitalize(promo[0]),
        capitalize(promo[1]),
    );
    if rng.gen_bool(0.2) {
        description.push(' ');
        description.push_str(RISKY.choose(rng).unwrap());
        description.push('.');
    }
    description.push(' ');
    description.push_str(CTAS.choose(rng).unwrap());
    description.push('!');
    SimulatedCorpusDoc {
        url,
        title: format!("{brand} {name}"),
        description,
        popularity: rng.gen_range(0.0..100.0f64).round(),
    }
}

/// Generic queries for the first few product types.
pub fn seed_queries() -> Vec<String> {
    let mut seeds = Vec::new();
    for product in &PRODUCTS[..SEEDED_PRODUCTS] {
        seeds.push(format!("buy {product} online"));
        for material in &MATERIALS[..4] {
            seeds.push(format!("{material} {product}"));
        }
    }
    seeds
}

/// Prohibits the corpus's risky claims and requires a shipping mention.
pub fn fixture_guardrails() -> Guardrails {
    Guardrails::new(
        &["guaranteed", "best price", "re:\\bcheapest\\b"],
        vec![RequiredElement::new("shipping", &["free shipping", "fast delivery"]).expect("valid")],
        default_thresholds(),
    )
    .expect("valid guardrails")
}

/// Settings used with the fixture: simulated search over `corpus.jsonl`,
/// mock generator, hashing embedder.
pub fn fixture_settings() -> Settings {
    let mut s = Settings {
        guardrails: fixture_guardrails(),
        search: SearchSettings::Simulated {
            corpus: PathBuf::from("corpus.jsonl"),
        },
        workers: 2,
        ..Settings::default()
    };
    s.pipeline.k_lib = 5;
    // Hashed page text carries attribute names, so query similarity runs low.
    s.pipeline.tau_q = 0.35;
    s
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// JSON-lines text, one value per line.
pub fn to_jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("serializable") + "\n")
        .collect()
}

/// Writes `pages.jsonl`, `corpus.jsonl`, `seeds.txt` and `config.json` to `dir`.
pub fn write_bundle(dir: &Path, fixture: &Fixture, settings: &Settings) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("pages.jsonl"), to_jsonl(&fixture.pages))?;
    std::fs::write(dir.join("corpus.jsonl"), to_jsonl(&fixture.corpus))?;
    let mut seeds = std::fs::File::create(dir.join("seeds.txt"))?;
    for s in &fixture.seeds {
        writeln!(seeds, "{s}")?;
    }
    std::fs::write(dir.join("config.json"), settings.to_json() + "\n")?;
    Ok(())
}

/// The small catalogue shipped under `data/fixture`.
pub fn bundled_fixture() -> Fixture {
    synthetic_catalog(10, 3, 7)
}

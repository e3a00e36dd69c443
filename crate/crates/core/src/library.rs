//! The exemplar library: harvested top-ranked snippets, deduplicated by
//! embedding similarity and indexed by the query that surfaced them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::model::{Exemplar, EmbeddingVector, PipelineConfig};
use crate::search::{SearchClient, SearchResult};

pub const LIBRARY_FORMAT: &str = "metasynth-lib/1";

/// Position of an exemplar in its library's insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExemplarId(pub usize);

impl fmt::Display for ExemplarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AddOutcome {
    Added(ExemplarId),
    /// Rejected; `of` is the stored exemplar it collided with.
    Duplicate { of: ExemplarId, similarity: f64 },
}

impl AddOutcome {
    pub fn is_added(&self) -> bool {
        matches!(self, AddOutcome::Added(_))
    }
}

/// Counters from ingesting one batch of search results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub fetched: usize,
    pub added: usize,
    pub duplicates: usize,
    pub excluded: usize,
    pub invalid: usize,
}

impl std::ops::AddAssign for IngestStats {
    fn add_assign(&mut self, o: Self) {
        self.fetched += o.fetched;
        self.added += o.added;
        self.duplicates += o.duplicates;
        self.excluded += o.excluded;
        self.invalid += o.invalid;
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BuildReport {
    pub stats: IngestStats,
    /// Seed queries whose search failed, with the reason.
    pub skipped: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    dimension: usize,
    epsilon_dup: f64,
}

#[derive(Clone)]
pub struct ExemplarLibrary {
    embedder: Arc<dyn EmbeddingProvider>,
    dimension: usize,
    epsilon_dup: f64,
    exemplars: Vec<Exemplar>,
    // Row-major N x d copy of the exemplar embeddings.
    matrix: Vec<f64>,
    query_index: BTreeMap<String, Vec<ExemplarId>>,
    query_embeddings: BTreeMap<String, EmbeddingVector>,
    pairs: HashSet<(String, String)>,
}

impl fmt::Debug for ExemplarLibrary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExemplarLibrary")
            .field("embedder", &self.embedder.name())
            .field("dimension", &self.dimension)
            .field("epsilon_dup", &self.epsilon_dup)
            .field("exemplars", &self.exemplars.len())
            .field("queries", &self.query_index.len())
            .finish()
    }
}

impl PartialEq for ExemplarLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension
            && self.epsilon_dup == other.epsilon_dup
            && self.exemplars == other.exemplars
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ExemplarLibrary {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>, epsilon_dup: f64) -> Result<Self> {
        if !(epsilon_dup > 0.0 && epsilon_dup < 1.0) {
            return Err(Error::invalid(format!(
                "epsilon_dup {epsilon_dup} outside (0, 1)"
            )));
        }
        Ok(Self {
            dimension: embedder.dimension(),
            embedder,
            epsilon_dup,
            exemplars: Vec::new(),
            matrix: Vec::new(),
            query_index: BTreeMap::new(),
            query_embeddings: BTreeMap::new(),
            pairs: HashSet::new(),
        })
    }

    pub fn embedder(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.embedder
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn epsilon_dup(&self) -> f64 {
        self.epsilon_dup
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn get(&self, id: ExemplarId) -> Option<&Exemplar> {
        self.exemplars.get(id.0)
    }

    pub fn query_count(&self) -> usize {
        self.query_index.len()
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.query_index.keys().map(String::as_str)
    }

    pub fn has_query(&self, query: &str) -> bool {
        self.query_index.contains_key(query)
    }

    /// `I(q)`: ids stored under `query`, in insertion order.
    pub fn exemplar_ids(&self, query: &str) -> &[ExemplarId] {
        self.query_index.get(query).map_or(&[], Vec::as_slice)
    }

    pub fn query_embedding(&self, query: &str) -> Option<&EmbeddingVector> {
        self.query_embeddings.get(query)
    }

    /// Makes `query` a library query, with an empty exemplar list if new.
    pub fn register_query(&mut self, query: &str) -> Result<()> {
        if self.query_index.contains_key(query) {
            return Ok(());
        }
        let emb = self.embedder.embed_text(query)?;
        self.query_embeddings.insert(query.to_string(), emb);
        self.query_index.insert(query.to_string(), Vec::new());
        Ok(())
    }

    /// Most similar stored exemplar to `v`; first wins on ties.
    fn nearest_exemplar(&self, v: &[f64]) -> Option<(ExemplarId, f64)> {
        let mut best: Option<(ExemplarId, f64)> = None;
        for (i, row) in self.matrix.chunks_exact(self.dimension).enumerate() {
            let s = dot(v, row);
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((ExemplarId(i), s));
            }
        }
        best
    }

    /// Stores `e` unless it is within `epsilon_dup` of an existing exemplar
    /// (or repeats a stored query/url pair).
    pub fn add_exemplar(&mut self, e: Exemplar) -> Result<AddOutcome> {
        if e.embedding.dimension() != self.dimension {
            return Err(Error::invalid(format!(
                "exemplar dimension {} != library dimension {}",
                e.embedding.dimension(),
                self.dimension
            )));
        }
        e.validate()?;
        if let Some((of, similarity)) = self.nearest_exemplar(e.embedding.values()) {
            if similarity > self.epsilon_dup {
                return Ok(AddOutcome::Duplicate { of, similarity });
            }
        }
        if self.pairs.contains(&(e.query.clone(), e.url.clone())) {
            let of = self
                .exemplars
                .iter()
                .position(|x| x.query == e.query && x.url == e.url)
                .map(ExemplarId)
                .expect("pair index out of sync");
            let similarity = dot(e.embedding.values(), self.exemplars[of.0].embedding.values());
            return Ok(AddOutcome::Duplicate { of, similarity });
        }
        self.register_query(&e.query)?;
        Ok(AddOutcome::Added(self.push(e)))
    }

    fn push(&mut self, e: Exemplar) -> ExemplarId {
        let id = ExemplarId(self.exemplars.len());
        self.matrix.extend_from_slice(e.embedding.values());
        self.pairs.insert((e.query.clone(), e.url.clone()));
        self.query_index
            .get_mut(&e.query)
            .expect("query registered before push")
            .push(id);
        self.exemplars.push(e);
        id
    }

    /// Turns search results into exemplars and adds them in rank order.
    pub fn ingest_results(
        &mut self,
        query: &str,
        results: &[SearchResult],
        exclude_url: Option<&str>,
    ) -> Result<IngestStats> {
        self.register_query(query)?;
        let exclude = exclude_url.map(crate::model::canonicalize_url);
        let mut stats = IngestStats::default();
        for r in results {
            stats.fetched += 1;
            if exclude.as_deref() == Some(crate::model::canonicalize_url(&r.url).as_str()) {
                stats.excluded += 1;
                continue;
            }
            let embedding = match self.embedder.embed_exemplar(&r.title, &r.description) {
                Ok(v) => v,
                Err(err) => {
                    log::warn!("skipping result {} for {query:?}: {err}", r.url);
                    stats.invalid += 1;
                    continue;
                }
            };
            let e = Exemplar {
                query: query.to_string(),
                url: r.url.clone(),
                title: r.title.clone(),
                description: r.description.clone(),
                rank: r.rank.max(1),
                embedding,
            };
            match self.add_exemplar(e)? {
                AddOutcome::Added(_) => stats.added += 1,
                AddOutcome::Duplicate { .. } => stats.duplicates += 1,
            }
        }
        Ok(stats)
    }

    fn check_dim(&self, z: &EmbeddingVector) -> Result<()> {
        if z.dimension() != self.dimension {
            return Err(Error::invalid(format!(
                "query vector dimension {} != library dimension {}",
                z.dimension(),
                self.dimension
            )));
        }
        Ok(())
    }

    /// The stored query closest to `z` and its similarity; ties go to the
    /// lexicographically smallest query.
    pub fn nearest_query(&self, z: &EmbeddingVector) -> Result<(String, f64)> {
        self.check_dim(z)?;
        let mut best: Option<(&str, f64)> = None;
        // BTreeMap iteration is lexicographic, so strict `>` keeps the smallest on ties.
        for (q, emb) in &self.query_embeddings {
            let s = crate::model::cosine_unchecked(z.values(), emb.values());
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((q, s));
            }
        }
        best.map(|(q, s)| (q.to_string(), s))
            .ok_or_else(|| Error::NotFound("library has no queries".into()))
    }

    /// Every stored query with similarity `>= tau_q`, most similar first.
    pub fn queries_above(&self, z: &EmbeddingVector, tau_q: f64) -> Result<Vec<(String, f64)>> {
        self.check_dim(z)?;
        let mut hits: Vec<(String, f64)> = self
            .query_embeddings
            .iter()
            .map(|(q, emb)| (q, crate::model::cosine_unchecked(z.values(), emb.values())))
            .filter(|(_, s)| *s >= tau_q)
            .map(|(q, s)| (q.clone(), s))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(hits)
    }

    /// `E(x)`: union of `I(q)` over `queries`, first occurrence order.
    pub fn exemplars_for_queries<S: AsRef<str>>(&self, queries: &[S]) -> Vec<ExemplarId> {
        let mut seen = HashSet::new();
        queries
            .iter()
            .flat_map(|q| self.exemplar_ids(q.as_ref()).iter().copied())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    /// Writes the JSON-lines library file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = Header {
            format: LIBRARY_FORMAT.into(),
            dimension: self.dimension,
            epsilon_dup: self.epsilon_dup,
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for e in &self.exemplars {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a library file and rebuilds the indexes.
    pub fn load(path: &Path, embedder: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::LibraryNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut lines = BufReader::new(file).lines();
        let fmt_err = |line: usize, message: String| Error::LibraryFormat { line, message };

        let header_line = lines
            .next()
            .ok_or_else(|| fmt_err(1, "missing header".into()))??;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| fmt_err(1, format!("bad header: {e}")))?;
        if header.format != LIBRARY_FORMAT {
            return Err(fmt_err(
                1,
                format!("unsupported format {:?}", header.format),
            ));
        }
        if header.dimension != embedder.dimension() {
            return Err(fmt_err(
                1,
                format!(
                    "library dimension {} does not match embedder dimension {}",
                    header.dimension,
                    embedder.dimension()
                ),
            ));
        }
        let mut lib = Self::new(embedder, header.epsilon_dup).map_err(|e| fmt_err(1, e.to_string()))?;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Exemplar =
                serde_json::from_str(&line).map_err(|err| fmt_err(lineno, err.to_string()))?;
            if e.embedding.dimension() != lib.dimension {
                return Err(fmt_err(
                    lineno,
                    format!("embedding has dimension {}", e.embedding.dimension()),
                ));
            }
            e.validate().map_err(|err| fmt_err(lineno, err.to_string()))?;
            if lib.pairs.contains(&(e.query.clone(), e.url.clone())) {
                return Err(fmt_err(
                    lineno,
                    format!("duplicate (query, url) pair ({:?}, {:?})", e.query, e.url),
                ));
            }
            lib.register_query(&e.query)
                .map_err(|err| fmt_err(lineno, err.to_string()))?;
            lib.push(e);
        }
        Ok(lib)
    }
}

/// Harvests the top `k_lib` results of every seed query into a new library.
///
/// A failing seed query is skipped and reported; the build fails only when
/// every seed query failed.
pub fn build_library<S: AsRef<str>>(
    seed_queries: &[S],
    search: &dyn SearchClient,
    embedder: Arc<dyn EmbeddingProvider>,
    cfg: &PipelineConfig,
) -> Result<(ExemplarLibrary, BuildReport)> {
    if seed_queries.is_empty() {
        return Err(Error::invalid("no seed queries"));
    }
    if embedder.dimension() != cfg.dimension {
        return Err(Error::config(
            "dimension",
            format!(
                "embedder dimension {} differs from configured {}",
                embedder.dimension(),
                cfg.dimension
            ),
        ));
    }
    let mut lib = ExemplarLibrary::new(embedder, cfg.epsilon_dup)?;
    let mut report = BuildReport::default();
    for q in seed_queries {
        let q = q.as_ref().trim();
        if q.is_empty() {
            report.skipped.push((q.to_string(), "empty query".into()));
            continue;
        }
        match search.search(q, cfg.k_lib) {
            Ok(results) => report.stats += lib.ingest_results(q, &results, None)?,
            Err(e) => {
                log::warn!("seed query {q:?} skipped: {e}");
                report.skipped.push((q.to_string(), e.to_string()));
            }
        }
    }
    if report.skipped.len() == seed_queries.len() {
        return Err(Error::BuildFailed {
            skipped: report.skipped,
        });
    }
    Ok((lib, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use crate::model::cosine_similarity;
    use crate::search::{SimulatedCorpusDoc, SimulatedSearch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn embedder() -> Arc<dyn EmbeddingProvider> {
        Arc::new(HashingEmbedder::default())
    }

    fn exemplar(q: &str, url: &str, title: &str, desc: &str, rank: u32) -> Exemplar {
        Exemplar {
            query: q.into(),
            url: url.into(),
            title: title.into(),
            description: desc.into(),
            rank,
            embedding: HashingEmbedder::default().embed_exemplar(title, desc).unwrap(),
        }
    }

    fn doc(url: &str, title: &str, desc: &str) -> SimulatedCorpusDoc {
        SimulatedCorpusDoc {
            url: url.into(),
            title: title.into(),
            description: desc.into(),
            popularity: 0.0,
        }
    }

    struct Failing;
    impl SearchClient for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn max_k(&self) -> usize {
            10
        }
        fn search(&self, _: &str, _: usize) -> Result<Vec<SearchResult>> {
            Err(Error::SearchTransport("down".into()))
        }
    }

    #[test]
    fn add_to_empty_then_reject_identical() {
        let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
        let e = exemplar("mug", "https://a.example/1", "Red Mug", "Ceramic", 1);
        assert_eq!(lib.add_exemplar(e.clone()).unwrap(), AddOutcome::Added(ExemplarId(0)));
        match lib.add_exemplar(e).unwrap() {
            AddOutcome::Duplicate { of, similarity } => {
                assert_eq!(of, ExemplarId(0));
                assert!((similarity - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(lib.len(), 1);
    }

    #[test]
    fn close_but_below_threshold_both_added() {
        // Two unit vectors with dot product 0.93 built by hand.
        let d = 256;
        let mut a = vec![0.0; d];
        a[0] = 1.0;
        let mut b = vec![0.0; d];
        b[0] = 0.93;
        b[1] = (1.0f64 - 0.93 * 0.93).sqrt();
        let a = EmbeddingVector::from_unit(a).unwrap();
        let b = EmbeddingVector::from_unit(b).unwrap();
        assert!((cosine_similarity(&a, &b).unwrap() - 0.93).abs() < 1e-12);

        let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
        let mut e1 = exemplar("q", "https://a.example/1", "t1", "d1", 1);
        e1.embedding = a;
        let mut e2 = exemplar("q", "https://a.example/2", "t2", "d2", 2);
        e2.embedding = b;
        assert!(lib.add_exemplar(e1).unwrap().is_added());
        assert!(lib.add_exemplar(e2).unwrap().is_added());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
        let mut e = exemplar("q", "https://a.example/1", "t", "d", 1);
        e.embedding = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        assert!(matches!(lib.add_exemplar(e), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn build_single_query() {
        let docs = vec![
            doc("https://a.example/1", "Red ceramic mug", "Glazed stoneware mug"),
            doc("https://a.example/2", "Travel tumbler", "Insulated steel cup"),
            doc("https://a.example/3", "Espresso cups", "Set of four porcelain cups"),
        ];
        let s = SimulatedSearch::new(docs, embedder()).unwrap();
        let (lib, report) =
            build_library(&["coffee mug"], &s, embedder(), &PipelineConfig::default()).unwrap();
        assert_eq!(lib.len(), 3);
        assert_eq!(lib.exemplar_ids("coffee mug").len(), 3);
        assert_eq!(report.stats.fetched, 3);
        assert_eq!(report.stats.added, 3);
    }

    #[test]
    fn shared_result_stored_once() {
        // Two seed queries that both surface every doc; the second query's
        // copies are all rejected as duplicates.
        let docs = vec![
            doc("https://a.example/1", "Red ceramic mug", "Glazed stoneware mug"),
            doc("https://a.example/2", "Blue ceramic mug", "Hand thrown mug"),
        ];
        let s = SimulatedSearch::new(docs, embedder()).unwrap();
        let (lib, report) =
            build_library(&["mug", "ceramic mug"], &s, embedder(), &PipelineConfig::default())
                .unwrap();
        assert_eq!(report.stats.fetched, 4);
        assert_eq!(lib.len(), 2);
        assert_eq!(report.stats.duplicates, 2);
        assert!(lib.exemplar_ids("ceramic mug").is_empty());
        assert!(lib.has_query("ceramic mug"));
        for i in 0..lib.len() {
            for j in 0..i {
                let s = cosine_similarity(
                    &lib.exemplars()[i].embedding,
                    &lib.exemplars()[j].embedding,
                )
                .unwrap();
                assert!(s <= lib.epsilon_dup() + 1e-9);
            }
        }
    }

    #[test]
    fn build_fails_when_every_query_fails() {
        let r = build_library(&["a", "b"], &Failing, embedder(), &PipelineConfig::default());
        match r {
            Err(Error::BuildFailed { skipped }) => assert_eq!(skipped.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    fn query_lib(queries: &[&str]) -> ExemplarLibrary {
        let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
        for q in queries {
            lib.register_query(q).unwrap();
        }
        lib
    }

    #[test]
    fn nearest_query_cases() {
        let e = HashingEmbedder::default();
        let empty = query_lib(&[]);
        assert!(matches!(
            empty.nearest_query(&e.embed_text("x").unwrap()),
            Err(Error::NotFound(_))
        ));

        let lib = query_lib(&["red mug"]);
        let z = e.embed_text("red mug").unwrap();
        let (q, s) = lib.nearest_query(&z).unwrap();
        assert_eq!(q, "red mug");
        assert!((s - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let words = ["red", "mug", "blue", "lamp", "desk", "oak", "steel", "cup"];
        for _ in 0..50 {
            let qs: Vec<String> = (0..5)
                .map(|_| {
                    (0..2)
                        .map(|_| words[rng.gen_range(0..words.len())])
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            let refs: Vec<&str> = qs.iter().map(String::as_str).collect();
            let lib = query_lib(&refs);
            let z = e
                .embed_text(words[rng.gen_range(0..words.len())])
                .unwrap();
            // exhaustive scan oracle
            let mut best: Option<(String, f64)> = None;
            for q in &qs {
                let s = cosine_similarity(&z, &e.embed_text(q).unwrap()).unwrap();
                let better = match &best {
                    None => true,
                    Some((bq, bs)) => s > *bs || (s == *bs && q < bq),
                };
                if better {
                    best = Some((q.clone(), s));
                }
            }
            let (bq, bs) = best.unwrap();
            let (q, s) = lib.nearest_query(&z).unwrap();
            assert_eq!(q, bq);
            assert_eq!(s, bs);
        }
    }

    #[test]
    fn queries_above_cases() {
        let e = HashingEmbedder::default();
        let qs = ["red mug", "red ceramic mug", "laptop sleeve", "oak desk"];
        let lib = query_lib(&qs);
        let z = e.embed_text("red mug").unwrap();

        let all = lib.queries_above(&z, 0.0).unwrap();
        let nonneg = qs
            .iter()
            .filter(|q| cosine_similarity(&z, &e.embed_text(q).unwrap()).unwrap() >= 0.0)
            .count();
        assert_eq!(all.len(), nonneg);
        assert!(lib.queries_above(&z, 1.0 + 1e-9).unwrap().is_empty());

        let got = lib.queries_above(&z, 0.5).unwrap();
        let mut oracle: Vec<(String, f64)> = qs
            .iter()
            .map(|q| {
                (
                    q.to_string(),
                    cosine_similarity(&z, &e.embed_text(q).unwrap()).unwrap(),
                )
            })
            .filter(|(_, s)| *s >= 0.5)
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        assert_eq!(got, oracle);
        assert_eq!(got[0].0, "red mug");
    }

    #[test]
    fn pool_union_semantics() {
        let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
        let a = lib
            .add_exemplar(exemplar("q1", "https://a.example/1", "alpha one", "first", 1))
            .unwrap();
        lib.add_exemplar(exemplar("q1", "https://a.example/2", "beta two", "second", 2))
            .unwrap();
        lib.add_exemplar(exemplar("q1", "https://a.example/3", "gamma three", "third", 3))
            .unwrap();
        lib.add_exemplar(exemplar("q2", "https://a.example/4", "delta four", "fourth", 1))
            .unwrap();
        assert!(a.is_added());
        let ids = |v: &[usize]| v.iter().map(|&i| ExemplarId(i)).collect::<Vec<_>>();
        assert_eq!(lib.exemplars_for_queries(&["q1"]), ids(&[0, 1, 2]));
        assert_eq!(lib.exemplars_for_queries(&["q1", "q2"]), ids(&[0, 1, 2, 3]));
        assert_eq!(lib.exemplars_for_queries(&["q2", "q1", "q2"]), ids(&[3, 0, 1, 2]));
        assert!(lib.exemplars_for_queries(&["unknown"]).is_empty());
    }

    #[test]
    fn persistence_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.jsonl");

        let empty = ExemplarLibrary::new(embedder(), 0.9).unwrap();
        empty.save(&path).unwrap();
        assert_eq!(ExemplarLibrary::load(&path, embedder()).unwrap(), empty);

        let mut lib = ExemplarLibrary::new(embedder(), 0.95).unwrap();
        lib.add_exemplar(exemplar("q1", "https://a.example/1", "Red Mug", "Ceramic || glazed", 1))
            .unwrap();
        lib.add_exemplar(exemplar("q1", "https://a.example/2", "Café cup", "Ünïcode \"quoted\"", 2))
            .unwrap();
        lib.add_exemplar(exemplar("q2", "https://a.example/3", "Oak desk", "Solid wood", 1))
            .unwrap();
        lib.save(&path).unwrap();
        let back = ExemplarLibrary::load(&path, embedder()).unwrap();
        assert_eq!(back, lib);
        assert_eq!(back.exemplar_ids("q1"), lib.exemplar_ids("q1"));

        // truncate mid-record
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.len() - 40;
        std::fs::write(&path, &text[..cut]).unwrap();
        match ExemplarLibrary::load(&path, embedder()) {
            Err(Error::LibraryFormat { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }

        assert!(matches!(
            ExemplarLibrary::load(&dir.path().join("missing.jsonl"), embedder()),
            Err(Error::LibraryNotFound(_))
        ));
    }
}

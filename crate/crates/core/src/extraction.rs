//! On-topic corpus extraction.
//!
//! Seed queries are found by phrase matching, expanded through the
//! query-click graph (two steps: query → clicked URL → co-clicked query)
//! under a character-trigram similarity gate, and cleaned with stoplists.
//! Relevant URLs are then the SERP clicks of relevant queries, extended by
//! URL prefix, plus configured advocacy sites, minus blocked and news domains.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ingest;
use crate::model::{Dataset, LogRecord, QueryRecord, StanceLabel};
use crate::urlnorm::{host_matches, host_of, UrlNormalizer};
use crate::{Error, Result};

/// A site whose stance is known up front, e.g. an advocacy group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvocacyEntry {
    pub url: String,
    pub label: StanceLabel,
}

/// Edge weighting of the two-step walk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Clicks,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub seed_phrases: Vec<String>,
    /// Terms that disqualify a seed query when they occur as whole tokens.
    pub exclusion_terms: Vec<String>,
    pub similarity_threshold: f64,
    /// Navigational and seasonal queries removed after expansion.
    pub stoplist: Vec<String>,
    pub manual_removals: Vec<String>,
    /// Domains never used as seed URLs (video hosting and the like).
    pub blocked_domains: Vec<String>,
    pub blocked_urls: Vec<String>,
    pub advocacy: Vec<AdvocacyEntry>,
    /// CSV of `url,label` rows appended to `advocacy` on load.
    pub advocacy_file: Option<PathBuf>,
    pub news_whitelist: Vec<String>,
    /// One domain per line, appended to `news_whitelist` on load.
    pub news_whitelist_file: Option<PathBuf>,
    pub walk_weighting: Weighting,
    pub normalizer: UrlNormalizer,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        ExtractionConfig {
            seed_phrases: s(&["gun control", "gun rights"]),
            exclusion_terms: s(&["xbox", "wii", "gun controller", "game", "playstation"]),
            similarity_threshold: 0.5,
            stoplist: s(&["google", "facebook"]),
            manual_removals: Vec::new(),
            blocked_domains: s(&["youtube.com", "youtu.be", "vimeo.com", "dailymotion.com"]),
            blocked_urls: Vec::new(),
            advocacy: Vec::new(),
            advocacy_file: None,
            news_whitelist: Vec::new(),
            news_whitelist_file: None,
            walk_weighting: Weighting::default(),
            normalizer: UrlNormalizer::default(),
        }
    }
}

impl ExtractionConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExtractionConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("extraction config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config; `advocacy_file` and `news_whitelist_file` are
    /// resolved relative to the config's directory and merged in.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(f) = cfg.advocacy_file.clone() {
            cfg.advocacy.extend(load_advocacy(&base.join(f))?);
        }
        if let Some(f) = cfg.news_whitelist_file.clone() {
            cfg.news_whitelist.extend(ingest::load_list(&base.join(f))?);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(Error::Config(format!(
                "similarity_threshold {} outside [0, 1]",
                self.similarity_threshold
            )));
        }
        Ok(())
    }
}

/// Reads advocacy rows `url,label` (header optional).
pub fn read_advocacy<R: std::io::Read>(reader: R, source: &str) -> Result<Vec<AdvocacyEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 1;
        let row = row.map_err(|e| Error::parse(source, line, e.to_string()))?;
        if row.len() != 2 {
            return Err(Error::parse(source, line, "expected url,label"));
        }
        if i == 0 && row[0].eq_ignore_ascii_case("url") {
            continue;
        }
        let label = row[1]
            .parse()
            .map_err(|_| Error::parse(source, line, format!("unknown label {:?}", &row[1])))?;
        out.push(AdvocacyEntry {
            url: row[0].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn load_advocacy(path: &Path) -> Result<Vec<AdvocacyEntry>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_advocacy(f, &path.display().to_string())
}

fn tokens(s: &str) -> Vec<&str> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect()
}

/// True when the tokens of `term` occur contiguously among the tokens of `text`.
fn has_token_run(text: &[&str], term: &str) -> bool {
    let term = tokens(term);
    !term.is_empty() && text.windows(term.len()).any(|w| w == term.as_slice())
}

/// Distinct queries containing a seed phrase and none of the exclusion terms.
pub fn find_seed_queries(
    queries: &[QueryRecord],
    cfg: &ExtractionConfig,
) -> Result<BTreeSet<String>> {
    if cfg.seed_phrases.iter().all(|p| p.trim().is_empty()) {
        return Err(Error::Extraction("no seed phrases configured".into()));
    }
    let phrases: Vec<String> = cfg
        .seed_phrases
        .iter()
        .map(|p| p.trim().to_lowercase())
        .filter(|p| !p.is_empty())
        .collect();
    let exclusions: Vec<String> = cfg
        .exclusion_terms
        .iter()
        .map(|t| t.to_lowercase())
        .collect();
    Ok(queries
        .iter()
        .map(|q| q.query.as_str())
        .filter(|q| phrases.iter().any(|p| q.contains(p.as_str())))
        .filter(|q| {
            let toks = tokens(q);
            !exclusions.iter().any(|t| has_token_run(&toks, t))
        })
        .map(str::to_string)
        .collect())
}

fn trigram_counts(s: &str) -> HashMap<[char; 3], u32> {
    let chars: Vec<char> = s.chars().collect();
    let mut counts = HashMap::new();
    for w in chars.windows(3) {
        *counts.entry([w[0], w[1], w[2]]).or_insert(0) += 1;
    }
    counts
}

/// Cosine similarity of character-trigram count vectors. Spaces count as
/// characters; strings shorter than three characters have no trigrams and
/// score 0 against everything.
pub fn trigram_cosine(a: &str, b: &str) -> f64 {
    let ta = trigram_counts(a);
    let tb = trigram_counts(b);
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let dot: f64 = ta
        .iter()
        .filter_map(|(g, &x)| tb.get(g).map(|&y| x as f64 * y as f64))
        .sum();
    let na: f64 = ta.values().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = tb.values().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Bipartite query ↔ clicked-URL graph with click counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryClickGraph {
    query_urls: BTreeMap<String, BTreeMap<String, u64>>,
    url_queries: BTreeMap<String, BTreeMap<String, u64>>,
}

impl QueryClickGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// One edge increment per query record with a click; URLs normalized.
    pub fn from_records(records: &[QueryRecord], norm: &UrlNormalizer) -> Self {
        let mut g = Self::new();
        for r in records {
            if let Some(url) = r.clicked_url.as_deref() {
                let u = norm.normalize(url);
                if !u.is_empty() {
                    g.add_click(&r.query, &u);
                }
            }
        }
        g
    }

    pub fn add_click(&mut self, query: &str, url: &str) {
        *self
            .query_urls
            .entry(query.to_string())
            .or_default()
            .entry(url.to_string())
            .or_insert(0) += 1;
        *self
            .url_queries
            .entry(url.to_string())
            .or_default()
            .entry(query.to_string())
            .or_insert(0) += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.query_urls.is_empty()
    }

    pub fn contains_query(&self, q: &str) -> bool {
        self.query_urls.contains_key(q)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.query_urls.keys().map(String::as_str)
    }

    pub fn urls(&self) -> impl Iterator<Item = &str> {
        self.url_queries.keys().map(String::as_str)
    }

    pub fn clicks(&self, query: &str, url: &str) -> u64 {
        self.query_urls
            .get(query)
            .and_then(|m| m.get(url))
            .copied()
            .unwrap_or(0)
    }

    pub fn total_clicks(&self) -> u64 {
        self.query_urls.values().flat_map(|m| m.values()).sum()
    }

    /// Distribution over queries reached from `seed` in two steps. Empty if
    /// the seed is not in the graph.
    pub fn two_step(&self, seed: &str, weighting: Weighting) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        let Some(urls) = self.query_urls.get(seed) else {
            return out;
        };
        let step = |edges: &BTreeMap<String, u64>, c: u64| match weighting {
            Weighting::Clicks => c as f64 / edges.values().sum::<u64>() as f64,
            Weighting::Uniform => 1.0 / edges.len() as f64,
        };
        for (url, &c1) in urls {
            let p1 = step(urls, c1);
            let back = &self.url_queries[url];
            for (q, &c2) in back {
                *out.entry(q.clone()).or_insert(0.0) += p1 * step(back, c2);
            }
        }
        out
    }
}

/// A co-clicked query considered during expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub query: String,
    /// Largest two-step walk probability from any seed.
    pub walk_probability: f64,
    /// Largest trigram cosine against any seed.
    pub similarity: f64,
    pub accepted: bool,
}

/// Every non-seed query two steps away from a seed, with its walk
/// probability and similarity score.
pub fn expansion_candidates(
    graph: &QueryClickGraph,
    seeds: &BTreeSet<String>,
    cfg: &ExtractionConfig,
) -> Vec<Candidate> {
    let missing = seeds.iter().filter(|s| !graph.contains_query(s)).count();
    if missing > 0 {
        log::warn!("{missing} seed queries have no clicks and are not expanded");
    }
    let mut reach: BTreeMap<String, f64> = BTreeMap::new();
    for s in seeds {
        for (q, p) in graph.two_step(s, cfg.walk_weighting) {
            if seeds.contains(&q) {
                continue;
            }
            let e = reach.entry(q).or_insert(0.0);
            *e = e.max(p);
        }
    }
    reach
        .into_iter()
        .map(|(query, walk_probability)| {
            let similarity = seeds
                .iter()
                .map(|s| trigram_cosine(&query, s))
                .fold(0.0, f64::max);
            Candidate {
                accepted: similarity >= cfg.similarity_threshold,
                query,
                walk_probability,
                similarity,
            }
        })
        .collect()
}

/// Seeds plus the co-clicked queries that pass the similarity gate.
pub fn expand_queries(
    graph: &QueryClickGraph,
    seeds: &BTreeSet<String>,
    cfg: &ExtractionConfig,
) -> BTreeSet<String> {
    let mut out = seeds.clone();
    out.extend(
        expansion_candidates(graph, seeds, cfg)
            .into_iter()
            .filter(|c| c.accepted)
            .map(|c| c.query),
    );
    out
}

/// Removes exact stoplist and manual-removal entries.
pub fn filter_queries(candidates: &BTreeSet<String>, cfg: &ExtractionConfig) -> BTreeSet<String> {
    let drop: BTreeSet<String> = cfg
        .stoplist
        .iter()
        .chain(&cfg.manual_removals)
        .map(|q| q.trim().to_lowercase())
        .collect();
    candidates
        .iter()
        .filter(|q| !drop.contains(q.as_str()))
        .cloned()
        .collect()
}

fn is_blocked(url: &str, domains: &[String], urls: &BTreeSet<String>) -> bool {
    let host = host_of(url);
    urls.contains(url) || domains.iter().any(|d| host_matches(host, d))
}

/// True when `seeds` holds `url` or a prefix of it ending at a `/` or `?`
/// boundary.
fn has_seed_prefix(url: &str, seeds: &BTreeSet<String>) -> bool {
    seeds.contains(url)
        || url
            .match_indices(['/', '?'])
            .any(|(i, _)| seeds.contains(&url[..i]))
}

/// Normalized URLs of the on-topic corpus.
pub fn extract_relevant_urls(
    ds: &Dataset,
    relevant_queries: &BTreeSet<String>,
    cfg: &ExtractionConfig,
) -> Result<BTreeSet<String>> {
    if relevant_queries.is_empty() {
        return Err(Error::Extraction("relevant query set is empty".into()));
    }
    let norm = &cfg.normalizer;
    let blocked_urls: BTreeSet<String> =
        cfg.blocked_urls.iter().map(|u| norm.normalize(u)).collect();

    let seeds: BTreeSet<String> = ds
        .queries
        .iter()
        .filter(|q| relevant_queries.contains(&q.query))
        .filter_map(|q| q.clicked_url.as_deref())
        .map(|u| norm.normalize(u))
        .filter(|u| !u.is_empty() && !is_blocked(u, &cfg.blocked_domains, &blocked_urls))
        .collect();

    let mut relevant = seeds.clone();
    for v in &ds.visits {
        let u = norm.normalize(&v.url);
        if !relevant.contains(&u) && has_seed_prefix(&u, &seeds) {
            relevant.insert(u);
        }
    }
    relevant.extend(cfg.advocacy.iter().map(|a| norm.normalize(&a.url)));
    relevant.retain(|u| {
        let host = host_of(u);
        !cfg.news_whitelist.iter().any(|d| host_matches(host, d))
    });
    Ok(relevant)
}

/// Visits to `urls`, with each URL rewritten to its normalized form.
pub fn restrict_to_urls(ds: &Dataset, urls: &BTreeSet<String>, norm: &UrlNormalizer) -> Dataset {
    let visits = ds
        .visits
        .iter()
        .filter_map(|v| {
            let u = norm.normalize(&v.url);
            urls.contains(&u).then(|| LogRecord {
                url: u,
                ..v.clone()
            })
        })
        .collect();
    Dataset {
        visits,
        queries: ds.queries.clone(),
        labels: ds.labels.clone(),
        event_time: ds.event_time,
    }
}

/// Relevant queries by descending frequency, ties in lexicographic order.
pub fn rank_queries(queries: &[QueryRecord], relevant: &BTreeSet<String>) -> Vec<(String, u64)> {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for q in queries.iter().filter(|q| relevant.contains(&q.query)) {
        *freq.entry(q.query.as_str()).or_insert(0) += 1;
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().map(|(q, n)| (q.to_string(), n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Everything produced by one extraction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub seed_queries: BTreeSet<String>,
    pub candidates: Vec<Candidate>,
    pub relevant_queries: BTreeSet<String>,
    pub relevant_urls: BTreeSet<String>,
    /// Visits restricted to `relevant_urls`, URLs normalized.
    #[serde(skip)]
    pub corpus: Dataset,
}

/// Runs seeds → expansion → filtering → URL extraction → restriction.
pub fn extract(ds: &Dataset, cfg: &ExtractionConfig) -> Result<Extraction> {
    cfg.validate()?;
    let seed_queries = find_seed_queries(&ds.queries, cfg)?;
    if seed_queries.is_empty() {
        return Err(Error::Extraction("no query matches the seed phrases".into()));
    }
    let graph = QueryClickGraph::from_records(&ds.queries, &cfg.normalizer);
    let candidates = expansion_candidates(&graph, &seed_queries, cfg);
    let mut expanded = seed_queries.clone();
    expanded.extend(candidates.iter().filter(|c| c.accepted).map(|c| c.query.clone()));
    let relevant_queries = filter_queries(&expanded, cfg);
    let relevant_urls = extract_relevant_urls(ds, &relevant_queries, cfg)?;
    let corpus = restrict_to_urls(ds, &relevant_urls, &cfg.normalizer);
    Ok(Extraction {
        seed_queries,
        candidates,
        relevant_queries,
        relevant_urls,
        corpus,
    })
}

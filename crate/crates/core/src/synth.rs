//! Seeded synthetic browsing logs with exact bookkeeping.
//!
//! Each user walks a Markov chain over stance states. Every step visits a
//! page on a domain of the current state, never the same domain twice in a
//! row, so every step past the first is one countable transition. The first
//! time a user reaches a domain, a topical query clicking that domain's
//! section root is logged just before the visit, which makes every topical
//! page discoverable by the extraction pipeline. Off-topic, video and news
//! noise is interleaved so the pipeline has something to filter out.
//!
//! The generator counts what it emits using the canonical form it builds
//! each URL from, not the normalizer, so the bookkeeping is an independent
//! oracle for ingestion, extraction and transition counting.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::extraction::ExtractionConfig;
use crate::ingest;
use crate::model::{
    Dataset, LabelMap, LabelScope, LogRecord, QueryRecord, StanceLabel, Summary, Tier, Timestamp,
};
use crate::transitions::TransitionMatrix;
use crate::{Error, Result};

/// Topical queries and their relative weights. Their realized counts are
/// recorded so query ranking can be checked against them.
pub const TOPICAL_QUERIES: &[(&str, u32)] = &[
    ("gun control", 40),
    ("gun control laws", 25),
    ("gun rights", 15),
    ("gun control debate", 10),
    ("gun control petition", 6),
    ("gun rights groups", 4),
];

/// A misspelling co-clicked with topical queries; similar enough to be
/// accepted by query expansion.
pub const EXPANSION_QUERY: &str = "gun contrl";
/// Co-clicked with topical queries but too dissimilar to be accepted.
pub const DISTRACTOR_QUERY: &str = "second amendment";
/// Contains a seed phrase but also an exclusion token.
pub const EXCLUDED_QUERY: &str = "gun controller xbox";
pub const OFF_TOPIC_QUERY: &str = "weather tomorrow";
/// Topical queries whose clicks land on blocked or news domains.
pub const VIDEO_QUERY: &str = "gun control video";
pub const NEWS_QUERY: &str = "gun control news";

/// News domain the suggested extraction config filters out.
pub const NEWS_DOMAIN: &str = "news-synth.com";
const VIDEO_DOMAIN: &str = "youtube.com";
const GAME_DOMAIN: &str = "games-synth.com";
const OFF_TOPIC_DOMAINS: usize = 5;
const OFF_TOPIC_PAGES: usize = 20;

/// Rates of interleaved noise, each a per-step probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub off_topic: f64,
    pub video: f64,
    pub news: f64,
    /// Probability that a topical query is followed by the co-clicked
    /// expansion and distractor queries.
    pub co_clicks: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            off_topic: 0.1,
            video: 0.02,
            news: 0.02,
            co_clicks: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub users: usize,
    pub sessions_min: usize,
    pub sessions_max: usize,
    /// Topical steps per session.
    pub steps_min: usize,
    pub steps_max: usize,
    /// Ground-truth chain, 3 or 6 states in tier order.
    pub matrix: Vec<Vec<f64>>,
    /// Chain used for steps at or after `event_time`, if different.
    pub after_matrix: Option<Vec<Vec<f64>>>,
    /// Initial state distribution; uniform when absent.
    pub initial: Option<Vec<f64>>,
    pub domains_per_state: usize,
    pub urls_per_domain: usize,
    pub start_time: Timestamp,
    pub event_time: Timestamp,
    pub end_time: Timestamp,
    /// Relative arrival rate of new users after the event.
    pub arrival_multiplier: f64,
    pub noise: NoiseConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            users: 500,
            sessions_min: 1,
            sessions_max: 4,
            steps_min: 2,
            steps_max: 12,
            matrix: vec![
                vec![0.45, 0.25, 0.30],
                vec![0.10, 0.35, 0.55],
                vec![0.05, 0.15, 0.80],
            ],
            after_matrix: None,
            initial: None,
            domains_per_state: 4,
            urls_per_domain: 10,
            start_time: 1_351_728_000,
            event_time: 1_355_443_200,
            end_time: 1_356_998_400,
            arrival_multiplier: 3.0,
            noise: NoiseConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Synth(msg.into())
}

impl SynthConfig {
    /// Reads a config from `.toml`, or JSON for any other extension.
    /// Missing fields take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg: SynthConfig = if is_toml {
            toml::from_str(&text).map_err(|e| Error::Config(format!("synth config: {e}")))?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tier(&self) -> Result<Tier> {
        Tier::from_n_states(self.matrix.len())
            .ok_or_else(|| invalid(format!("matrix has {} states, expected 3 or 6", self.matrix.len())))
    }

    pub fn validate(&self) -> Result<Tier> {
        let tier = self.tier()?;
        let chain = |m: &Vec<Vec<f64>>| -> Result<()> {
            let t = TransitionMatrix::from_probabilities(tier, m.clone())
                .map_err(|e| invalid(format!("invalid matrix: {e}")))?;
            if t.empty_rows.iter().any(|e| *e) {
                return Err(invalid("every matrix row needs positive mass"));
            }
            Ok(())
        };
        chain(&self.matrix)?;
        if let Some(m) = &self.after_matrix {
            chain(m)?;
        }
        if let Some(init) = &self.initial {
            if init.len() != tier.n_states() || init.iter().any(|p| !p.is_finite() || *p < 0.0) || init.iter().sum::<f64>() <= 0.0 {
                return Err(invalid("initial distribution must be non-negative with positive mass"));
            }
        }
        if self.domains_per_state < 2 {
            return Err(invalid("domains_per_state must be at least 2"));
        }
        if self.urls_per_domain == 0 || self.users == 0 {
            return Err(invalid("users and urls_per_domain must be positive"));
        }
        if self.sessions_min == 0 || self.sessions_min > self.sessions_max {
            return Err(invalid("need 1 <= sessions_min <= sessions_max"));
        }
        if self.steps_min == 0 || self.steps_min > self.steps_max {
            return Err(invalid("need 1 <= steps_min <= steps_max"));
        }
        if !(self.start_time > 0 && self.start_time <= self.event_time && self.event_time < self.end_time) {
            return Err(invalid("need 0 < start_time <= event_time < end_time"));
        }
        if !(self.arrival_multiplier.is_finite() && self.arrival_multiplier >= 0.0) {
            return Err(invalid("arrival_multiplier must be non-negative"));
        }
        let n = &self.noise;
        if [n.off_topic, n.video, n.news, n.co_clicks].iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("noise rates must lie in [0, 1]"));
        }
        Ok(tier)
    }

    /// Extraction settings under which the pipeline recovers exactly the
    /// topical pages.
    pub fn extraction_config(&self) -> ExtractionConfig {
        ExtractionConfig {
            news_whitelist: vec![NEWS_DOMAIN.to_string()],
            ..ExtractionConfig::default()
        }
    }

    /// Domain hosting pages of state `state`, number `idx`.
    pub fn domain(tier: Tier, state: usize, idx: usize) -> String {
        format!("{}{idx}-synth.org", tier.ordering()[state].to_ascii_lowercase())
    }

    /// Stance label of a synthetic domain: expanded states map to
    /// themselves, high-level states alternate between their members.
    pub fn domain_label(tier: Tier, state: usize, idx: usize) -> StanceLabel {
        match tier {
            Tier::Expanded => StanceLabel::STANCES[state],
            Tier::High => StanceLabel::STANCES[2 * state + idx % 2],
        }
    }

    pub fn labels(&self) -> Result<LabelMap> {
        let tier = self.tier()?;
        let mut labels = LabelMap::new();
        for s in 0..tier.n_states() {
            for d in 0..self.domains_per_state {
                labels.insert(LabelScope::Domain, Self::domain(tier, s, d), Self::domain_label(tier, s, d));
            }
        }
        Ok(labels)
    }
}

/// Distinct-id tallies mirroring the dataset summary.
#[derive(Debug, Default)]
struct Tally {
    users: BTreeSet<String>,
    sessions: BTreeSet<(String, String)>,
    urls: BTreeSet<String>,
    domains: BTreeSet<String>,
    visits: u64,
}

impl Tally {
    fn add(&mut self, user: &str, session: &str, canonical: &str, domain: &str) {
        self.users.insert(user.to_string());
        self.sessions.insert((user.to_string(), session.to_string()));
        self.urls.insert(canonical.to_string());
        self.domains.insert(domain.to_string());
        self.visits += 1;
    }

    fn summary(&self) -> Summary {
        Summary {
            users: self.users.len() as u64,
            sessions: self.sessions.len() as u64,
            unique_urls: self.urls.len() as u64,
            unique_domains: self.domains.len() as u64,
            total_visits: self.visits,
        }
    }
}

/// Everything the generator knows about what it emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bookkeeping {
    pub tier: Tier,
    pub raw: Summary,
    pub on_topic: Summary,
    pub on_topic_before: Summary,
    pub on_topic_after: Summary,
    pub queries: u64,
    /// Realized state-to-state transition counts over whole user histories.
    pub transitions: Vec<Vec<u64>>,
    /// Transitions with both ends before the event.
    pub transitions_before: Vec<Vec<u64>>,
    /// Transitions with both ends at or after the event.
    pub transitions_after: Vec<Vec<u64>>,
    /// State index sequence of each user's topical steps.
    pub trails: BTreeMap<String, Vec<usize>>,
    /// Emitted count of every query string.
    pub query_frequencies: BTreeMap<String, u64>,
    /// Queries the extraction pipeline is expected to keep.
    pub relevant_queries: BTreeSet<String>,
    /// Canonical URLs of all topical visits.
    pub on_topic_urls: BTreeSet<String>,
}

impl Bookkeeping {
    pub fn total_transitions(&self) -> u64 {
        self.transitions.iter().flatten().sum()
    }
}

pub struct SynthOutput {
    pub dataset: Dataset,
    pub bookkeeping: Bookkeeping,
}

/// Raw spellings of one canonical URL that normalize back to it.
fn raw_variant(rng: &mut ChaCha8Rng, canonical: &str) -> String {
    let (base, query) = canonical.split_once('?').map_or((canonical, None), |(b, q)| (b, Some(q)));
    let (host, path) = base.split_once('/').map_or((base, ""), |(h, p)| (h, p));
    let sid: u32 = rng.gen_range(1000..10_000);
    let q = query.map(|q| format!("?{q}")).unwrap_or_default();
    let extra = |params: &str| match query {
        Some(q) => format!("?{q}&{params}"),
        None => format!("?{params}"),
    };
    match rng.gen_range(0..6) {
        0 => format!("http://www.{host}/{path}/{q}"),
        1 => format!("https://{host}/{path}{}", extra(&format!("sessionid={sid}"))),
        2 => format!("m.{host}/{path}{q}#top"),
        3 => format!("http://{host}/{path}{}", extra(&format!("utm_source=feed&uid={sid}"))),
        4 => format!("HTTP://WWW.{}/{path}{q}", host.to_ascii_uppercase()),
        _ => canonical.to_string(),
    }
}

struct Emitter {
    rng: ChaCha8Rng,
    visits: Vec<LogRecord>,
    queries: Vec<QueryRecord>,
    raw: Tally,
    on_topic: Tally,
    on_topic_before: Tally,
    on_topic_after: Tally,
    query_frequencies: BTreeMap<String, u64>,
    relevant: BTreeSet<String>,
    event_time: Timestamp,
}

impl Emitter {
    fn visit(&mut self, user: &str, session: &str, canonical: &str, domain: &str, ts: Timestamp, topical: bool) {
        let url = raw_variant(&mut self.rng, canonical);
        self.visits.push(LogRecord {
            user_id: user.to_string(),
            session_id: session.to_string(),
            url,
            timestamp: ts,
        });
        self.raw.add(user, session, canonical, domain);
        if topical {
            self.on_topic.add(user, session, canonical, domain);
            if ts < self.event_time {
                self.on_topic_before.add(user, session, canonical, domain);
            } else {
                self.on_topic_after.add(user, session, canonical, domain);
            }
        }
    }

    fn query(&mut self, user: &str, session: &str, query: &str, clicked: Option<&str>, ts: Timestamp, relevant: bool) {
        let clicked_url = clicked.map(|c| raw_variant(&mut self.rng, c));
        self.queries.push(QueryRecord {
            user_id: user.to_string(),
            session_id: session.to_string(),
            query: query.to_string(),
            clicked_url,
            timestamp: ts,
        });
        *self.query_frequencies.entry(query.to_string()).or_insert(0) += 1;
        if relevant {
            self.relevant.insert(query.to_string());
        }
    }
}

fn weighted(weights: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(weights).map_err(|e| invalid(format!("bad weights: {e}")))
}

/// Generates logs, labels and bookkeeping. The same config always yields
/// the same output.
pub fn generate_logs(cfg: &SynthConfig) -> Result<SynthOutput> {
    let tier = cfg.validate()?;
    let n = tier.n_states();
    let before_rows: Vec<WeightedIndex<f64>> = cfg.matrix.iter().map(|r| weighted(r)).collect::<Result<_>>()?;
    let after_rows: Vec<WeightedIndex<f64>> = match &cfg.after_matrix {
        Some(m) => m.iter().map(|r| weighted(r)).collect::<Result<_>>()?,
        None => before_rows.clone(),
    };
    let initial = weighted(&cfg.initial.clone().unwrap_or_else(|| vec![1.0; n]))?;
    let topical_queries = weighted(&TOPICAL_QUERIES.iter().map(|(_, w)| *w as f64).collect::<Vec<_>>())?;

    let pre_len = (cfg.event_time - cfg.start_time) as f64;
    let post_len = (cfg.end_time - cfg.event_time) as f64 * cfg.arrival_multiplier;
    let p_post = if pre_len + post_len > 0.0 { post_len / (pre_len + post_len) } else { 0.0 };

    let mut em = Emitter {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        visits: Vec::new(),
        queries: Vec::new(),
        raw: Tally::default(),
        on_topic: Tally::default(),
        on_topic_before: Tally::default(),
        on_topic_after: Tally::default(),
        query_frequencies: BTreeMap::new(),
        relevant: BTreeSet::new(),
        event_time: cfg.event_time,
    };
    let mut transitions = vec![vec![0u64; n]; n];
    let mut transitions_before = vec![vec![0u64; n]; n];
    let mut transitions_after = vec![vec![0u64; n]; n];
    let mut trails = BTreeMap::new();
    let width = cfg.users.to_string().len();

    for u in 0..cfg.users {
        let user = format!("u{u:0width$}");
        let arrival = if em.rng.gen_bool(p_post.clamp(0.0, 1.0)) {
            em.rng.gen_range(cfg.event_time..cfg.end_time)
        } else if cfg.start_time < cfg.event_time {
            em.rng.gen_range(cfg.start_time..cfg.event_time)
        } else {
            cfg.event_time
        };
        let mut ts = arrival;
        let mut state: Option<usize> = None;
        let mut prev: Option<(usize, Timestamp)> = None;
        let mut last_domain: Option<usize> = None;
        let mut seen_domains: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut trail = Vec::new();
        let sessions = em.rng.gen_range(cfg.sessions_min..=cfg.sessions_max);
        for s in 0..sessions {
            let session = format!("{user}-s{s}");
            if s > 0 {
                ts += em.rng.gen_range(3_600..259_200);
            }
            let steps = em.rng.gen_range(cfg.steps_min..=cfg.steps_max);
            for _ in 0..steps {
                ts += em.rng.gen_range(20..300);
                let next = match state {
                    None => initial.sample(&mut em.rng),
                    Some(cur) => {
                        let rows = if ts < cfg.event_time { &before_rows } else { &after_rows };
                        rows[cur].sample(&mut em.rng)
                    }
                };
                // A different domain than the previous step, even within
                // the same state.
                let d = loop {
                    let d = em.rng.gen_range(0..cfg.domains_per_state);
                    if state != Some(next) || last_domain != Some(d) {
                        break d;
                    }
                };
                let domain = SynthConfig::domain(tier, next, d);
                let page = em.rng.gen_range(0..cfg.urls_per_domain);
                let canonical = format!("{domain}/topic/p{page}");

                if seen_domains.insert((next, d)) {
                    let root = format!("{domain}/topic");
                    let q = TOPICAL_QUERIES[topical_queries.sample(&mut em.rng)].0;
                    em.query(&user, &session, q, Some(&root), ts - 5, true);
                    if em.rng.gen_bool(cfg.noise.co_clicks) {
                        em.query(&user, &session, EXPANSION_QUERY, Some(&root), ts - 4, true);
                        em.query(&user, &session, DISTRACTOR_QUERY, Some(&root), ts - 3, false);
                    }
                }
                em.visit(&user, &session, &canonical, &domain, ts, true);

                if let Some((p, pts)) = prev {
                    transitions[p][next] += 1;
                    if pts < cfg.event_time && ts < cfg.event_time {
                        transitions_before[p][next] += 1;
                    } else if pts >= cfg.event_time {
                        transitions_after[p][next] += 1;
                    }
                }
                trail.push(next);
                prev = Some((next, ts));
                state = Some(next);
                last_domain = Some(d);

                emit_noise(&mut em, cfg, &user, &session, ts);
            }
        }
        trails.insert(user, trail);
    }

    // Global time order; ties keep emission order.
    em.visits.sort_by_key(|v| v.timestamp);
    em.queries.sort_by_key(|q| q.timestamp);

    let bookkeeping = Bookkeeping {
        tier,
        raw: em.raw.summary(),
        on_topic: em.on_topic.summary(),
        on_topic_before: em.on_topic_before.summary(),
        on_topic_after: em.on_topic_after.summary(),
        queries: em.queries.len() as u64,
        transitions,
        transitions_before,
        transitions_after,
        trails,
        query_frequencies: em.query_frequencies,
        relevant_queries: em.relevant,
        on_topic_urls: em.on_topic.urls.clone(),
    };
    let mut dataset = Dataset::new(em.visits, em.queries).with_labels(cfg.labels()?);
    dataset.event_time = Some(cfg.event_time);
    Ok(SynthOutput { dataset, bookkeeping })
}

/// Off-topic, video and news visits (with their queries) just after a
/// topical step, before the next one.
fn emit_noise(em: &mut Emitter, cfg: &SynthConfig, user: &str, session: &str, ts: Timestamp) {
    if em.rng.gen_bool(cfg.noise.off_topic) {
        let d = em.rng.gen_range(0..OFF_TOPIC_DOMAINS);
        let domain = format!("offtopic{d}-synth.com");
        let page = format!("{domain}/page{}", em.rng.gen_range(0..OFF_TOPIC_PAGES));
        if em.rng.gen_bool(0.5) {
            em.query(user, session, OFF_TOPIC_QUERY, Some(&page), ts + 8, false);
            em.visit(user, session, &page, &domain, ts + 9, false);
        } else {
            let game = format!("{GAME_DOMAIN}/xbox");
            em.query(user, session, EXCLUDED_QUERY, Some(&game), ts + 8, false);
            em.visit(user, session, &game, GAME_DOMAIN, ts + 9, false);
        }
    }
    if em.rng.gen_bool(cfg.noise.video) {
        let video = format!("{VIDEO_DOMAIN}/watch?v=g{}", em.rng.gen_range(0..50));
        em.query(user, session, VIDEO_QUERY, Some(&video), ts + 10, true);
        em.visit(user, session, &video, VIDEO_DOMAIN, ts + 11, false);
    }
    if em.rng.gen_bool(cfg.noise.news) {
        let section = format!("{NEWS_DOMAIN}/politics/guns");
        let story = format!("{section}/story{}", em.rng.gen_range(0..30));
        em.query(user, session, NEWS_QUERY, Some(&section), ts + 12, true);
        em.visit(user, session, &story, NEWS_DOMAIN, ts + 13, false);
    }
}

/// Writes `visits.tsv`, `queries.tsv`, `labels.csv`, `bookkeeping.json`,
/// `synth.json` and `extraction.toml` into `dir`.
pub fn write_output(out: &SynthOutput, cfg: &SynthConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Error::io(p, e))
    };
    ingest::write_visits(create("visits.tsv")?, &out.dataset.visits)?;
    ingest::write_queries(create("queries.tsv")?, &out.dataset.queries)?;
    ingest::write_labels(create("labels.csv")?, &out.dataset.labels)?;
    let mut w = create("bookkeeping.json")?;
    serde_json::to_writer_pretty(&mut w, &out.bookkeeping)?;
    w.flush().map_err(|e| Error::io(dir.join("bookkeeping.json"), e))?;
    let mut w = create("synth.json")?;
    serde_json::to_writer_pretty(&mut w, cfg)?;
    w.flush().map_err(|e| Error::io(dir.join("synth.json"), e))?;
    let toml = toml::to_string_pretty(&cfg.extraction_config())
        .map_err(|e| Error::Config(format!("extraction config: {e}")))?;
    std::fs::write(dir.join("extraction.toml"), toml).map_err(|e| Error::io(dir.join("extraction.toml"), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transitions::{build_transition_matrix, mobility_indices, TrailOptions};
    use crate::urlnorm::UrlNormalizer;

    fn small() -> SynthConfig {
        SynthConfig {
            users: 60,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate_logs(&small()).unwrap();
        let b = generate_logs(&small()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.bookkeeping, b.bookkeeping);
        let c = generate_logs(&SynthConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.dataset.visits, c.dataset.visits);
    }

    #[test]
    fn raw_variants_normalize_to_canonical() {
        let norm = UrlNormalizer::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            for c in ["gc1-synth.org/topic/p3", "youtube.com/watch?v=g4", "gc0-synth.org/topic"] {
                assert_eq!(norm.normalize(&raw_variant(&mut rng, c)), c);
            }
        }
    }

    #[test]
    fn bookkeeping_matches_summary_and_trails() {
        let out = generate_logs(&small()).unwrap();
        let norm = UrlNormalizer::default();
        assert_eq!(out.dataset.summarize(&norm), out.bookkeeping.raw);
        let trail_steps: usize = out.bookkeeping.trails.values().map(Vec::len).sum();
        assert_eq!(out.bookkeeping.on_topic.total_visits as usize, trail_steps);
        let transitions: usize = out.bookkeeping.trails.values().map(|t| t.len().saturating_sub(1)).sum();
        assert_eq!(out.bookkeeping.total_transitions() as usize, transitions);
        let m = build_transition_matrix(&out.dataset, Tier::High, &TrailOptions::default(), &norm).unwrap();
        assert_eq!(m.counts.unwrap(), out.bookkeeping.transitions);
    }

    #[test]
    fn identity_chain_is_immobile() {
        let cfg = SynthConfig {
            matrix: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            ..small()
        };
        let out = generate_logs(&cfg).unwrap();
        let norm = UrlNormalizer::default();
        let m = build_transition_matrix(&out.dataset, Tier::High, &TrailOptions::default(), &norm).unwrap();
        assert_eq!(mobility_indices(&m).unwrap().ir, 1.0);
    }

    #[test]
    fn expanded_tier_labels() {
        let cfg = SynthConfig {
            matrix: vec![vec![1.0 / 6.0; 6]; 6],
            ..small()
        };
        let out = generate_logs(&cfg).unwrap();
        assert_eq!(out.bookkeeping.transitions.len(), 6);
        assert_eq!(out.dataset.labels.domains.get("hb1-synth.org"), Some(&StanceLabel::HB));
        assert_eq!(
            SynthConfig::domain_label(Tier::High, 2, 1),
            StanceLabel::ER
        );
    }

    #[test]
    fn invalid_configs() {
        let bad = |c: SynthConfig| assert!(generate_logs(&c).is_err());
        bad(SynthConfig { matrix: vec![vec![0.5, 0.5, 0.5]; 3], ..small() });
        bad(SynthConfig { matrix: vec![vec![0.5, 0.5]; 2], ..small() });
        bad(SynthConfig { domains_per_state: 1, ..small() });
        bad(SynthConfig { steps_min: 3, steps_max: 2, ..small() });
        bad(SynthConfig { event_time: 1, ..small() });
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let out = generate_logs(&cfg).unwrap();
        write_output(&out, &cfg, dir.path()).unwrap();
        let ds = ingest::load_logs(&dir.path().join("visits.tsv"), Some(&dir.path().join("queries.tsv"))).unwrap();
        assert_eq!(ds.visits, out.dataset.visits);
        assert_eq!(ds.queries, out.dataset.queries);
        let cfg2 = ExtractionConfig::load(&dir.path().join("extraction.toml")).unwrap();
        assert_eq!(cfg2, cfg.extraction_config());
        assert_eq!(SynthConfig::load(&dir.path().join("synth.json")).unwrap(), cfg);
    }

    #[test]
    fn toml_config_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.toml");
        std::fs::write(&path, "seed = 9\nusers = 5\nmatrix = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]\n").unwrap();
        let cfg = SynthConfig::load(&path).unwrap();
        assert_eq!((cfg.seed, cfg.users), (9, 5));
        assert_eq!(cfg.domains_per_state, SynthConfig::default().domains_per_state);
        std::fs::write(&path, "domains_per_state = 1\n").unwrap();
        assert!(SynthConfig::load(&path).is_err());
    }
}

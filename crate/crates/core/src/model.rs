//! Shared domain types: log records, stance labels, label maps and datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::urlnorm::UrlNormalizer;
use crate::{Error, Result};

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

/// One page visit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub user_id: String,
    pub session_id: String,
    pub url: String,
    pub timestamp: Timestamp,
}

/// One search query and the result the user clicked, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub user_id: String,
    pub session_id: String,
    pub query: String,
    pub clicked_url: Option<String>,
    pub timestamp: Timestamp,
}

/// Expanded stance label of a page, plus the two annotation-only outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StanceLabel {
    /// Extreme gun control.
    EC,
    /// Moderate gun control.
    MC,
    /// Highly balanced.
    HB,
    /// Purely factual.
    PF,
    /// Moderate gun rights.
    MR,
    /// Extreme gun rights.
    ER,
    OffTopic,
    NotAccessible,
}

/// High-level stance obtained by folding an expanded label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum HighLevel {
    /// Gun control.
    GC,
    /// Balanced or factual.
    BF,
    /// Gun rights.
    GR,
    OffTopic,
    NotAccessible,
}

impl StanceLabel {
    /// All eight expanded categories, stance states first in control→rights order.
    pub const ALL: [StanceLabel; 8] = [
        StanceLabel::EC,
        StanceLabel::MC,
        StanceLabel::HB,
        StanceLabel::PF,
        StanceLabel::MR,
        StanceLabel::ER,
        StanceLabel::OffTopic,
        StanceLabel::NotAccessible,
    ];

    pub const STANCES: [StanceLabel; 6] = [
        StanceLabel::EC,
        StanceLabel::MC,
        StanceLabel::HB,
        StanceLabel::PF,
        StanceLabel::MR,
        StanceLabel::ER,
    ];

    pub fn high_level(self) -> HighLevel {
        match self {
            StanceLabel::EC | StanceLabel::MC => HighLevel::GC,
            StanceLabel::HB | StanceLabel::PF => HighLevel::BF,
            StanceLabel::MR | StanceLabel::ER => HighLevel::GR,
            StanceLabel::OffTopic => HighLevel::OffTopic,
            StanceLabel::NotAccessible => HighLevel::NotAccessible,
        }
    }

    /// False for `OffTopic` and `NotAccessible`, which never enter entropy or
    /// transition computations.
    pub fn is_stance(self) -> bool {
        !matches!(self, StanceLabel::OffTopic | StanceLabel::NotAccessible)
    }

    pub fn code(self) -> &'static str {
        match self {
            StanceLabel::EC => "EC",
            StanceLabel::MC => "MC",
            StanceLabel::HB => "HB",
            StanceLabel::PF => "PF",
            StanceLabel::MR => "MR",
            StanceLabel::ER => "ER",
            StanceLabel::OffTopic => "OFF",
            StanceLabel::NotAccessible => "NA",
        }
    }
}

impl HighLevel {
    pub const STANCES: [HighLevel; 3] = [HighLevel::GC, HighLevel::BF, HighLevel::GR];

    pub fn is_stance(self) -> bool {
        !matches!(self, HighLevel::OffTopic | HighLevel::NotAccessible)
    }

    pub fn code(self) -> &'static str {
        match self {
            HighLevel::GC => "GC",
            HighLevel::BF => "BF",
            HighLevel::GR => "GR",
            HighLevel::OffTopic => "OFF",
            HighLevel::NotAccessible => "NA",
        }
    }

    /// The two expanded labels that fold into this group.
    pub fn members(self) -> &'static [StanceLabel] {
        match self {
            HighLevel::GC => &[StanceLabel::EC, StanceLabel::MC],
            HighLevel::BF => &[StanceLabel::HB, StanceLabel::PF],
            HighLevel::GR => &[StanceLabel::MR, StanceLabel::ER],
            HighLevel::OffTopic => &[StanceLabel::OffTopic],
            HighLevel::NotAccessible => &[StanceLabel::NotAccessible],
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl fmt::Display for HighLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for StanceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let label = match s.trim().to_ascii_uppercase().as_str() {
            "EC" => StanceLabel::EC,
            "MC" => StanceLabel::MC,
            "HB" => StanceLabel::HB,
            "PF" => StanceLabel::PF,
            "MR" => StanceLabel::MR,
            "ER" => StanceLabel::ER,
            "OFF" | "OFFTOPIC" => StanceLabel::OffTopic,
            "NA" | "NOTACCESSIBLE" => StanceLabel::NotAccessible,
            other => return Err(Error::Config(format!("unknown stance label {other:?}"))),
        };
        Ok(label)
    }
}

impl FromStr for HighLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let label = match s.trim().to_ascii_uppercase().as_str() {
            "GC" => HighLevel::GC,
            "BF" => HighLevel::BF,
            "GR" => HighLevel::GR,
            "OFF" | "OFFTOPIC" => HighLevel::OffTopic,
            "NA" | "NOTACCESSIBLE" => HighLevel::NotAccessible,
            other => return Err(Error::Config(format!("unknown high-level label {other:?}"))),
        };
        Ok(label)
    }
}

impl From<StanceLabel> for String {
    fn from(l: StanceLabel) -> String {
        l.code().to_string()
    }
}

impl TryFrom<String> for StanceLabel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<HighLevel> for String {
    fn from(l: HighLevel) -> String {
        l.code().to_string()
    }
}

impl TryFrom<String> for HighLevel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Label granularity. Also fixes the ordered Markov state list: index 0 is
/// the most control-leaning state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    High,
    Expanded,
}

impl Tier {
    /// Ordered stance states for this tier.
    pub fn ordering(self) -> &'static [&'static str] {
        match self {
            Tier::High => &["GC", "BF", "GR"],
            Tier::Expanded => &["EC", "MC", "HB", "PF", "MR", "ER"],
        }
    }

    pub fn n_states(self) -> usize {
        self.ordering().len()
    }

    /// Index of `label` in [`Tier::ordering`], or `None` for the
    /// annotation-only outcomes.
    pub fn state_index(self, label: StanceLabel) -> Option<usize> {
        match self {
            Tier::Expanded => StanceLabel::STANCES.iter().position(|&s| s == label),
            Tier::High => HighLevel::STANCES
                .iter()
                .position(|&s| s == label.high_level()),
        }
    }

    pub fn from_n_states(n: usize) -> Option<Tier> {
        match n {
            3 => Some(Tier::High),
            6 => Some(Tier::Expanded),
            _ => None,
        }
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(Tier::High),
            "expanded" => Ok(Tier::Expanded),
            other => Err(Error::Config(format!(
                "unknown tier {other:?}, expected high|expanded"
            ))),
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::High => "high",
            Tier::Expanded => "expanded",
        })
    }
}

/// Whether a label-map key names a single page or a whole domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScope {
    Url,
    Domain,
}

/// Stance labels keyed by normalized URL or by bare domain.
///
/// Lookups prefer the URL entry and fall back to the domain entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub urls: BTreeMap<String, StanceLabel>,
    pub domains: BTreeMap<String, StanceLabel>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scope: LabelScope, key: impl Into<String>, label: StanceLabel) {
        match scope {
            LabelScope::Url => self.urls.insert(key.into(), label),
            LabelScope::Domain => self.domains.insert(key.into(), label),
        };
    }

    pub fn resolve(&self, normalized_url: &str, domain: &str) -> Option<StanceLabel> {
        self.urls
            .get(normalized_url)
            .or_else(|| self.domains.get(domain))
            .copied()
    }

    pub fn is_empty(&self) -> bool {
        self.urls.is_empty() && self.domains.is_empty()
    }

    pub fn len(&self) -> usize {
        self.urls.len() + self.domains.len()
    }

    /// Iterates `(scope, key, label)` in a stable order, domains first.
    pub fn iter(&self) -> impl Iterator<Item = (LabelScope, &str, StanceLabel)> {
        self.domains
            .iter()
            .map(|(k, &l)| (LabelScope::Domain, k.as_str(), l))
            .chain(self.urls.iter().map(|(k, &l)| (LabelScope::Url, k.as_str(), l)))
    }
}

/// Counts reported for a dataset or one of its halves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub users: u64,
    pub sessions: u64,
    pub unique_urls: u64,
    pub unique_domains: u64,
    pub total_visits: u64,
}

/// Visit and query records with their label map.
///
/// A dataset is never mutated in place; every transformation returns a new one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub visits: Vec<LogRecord>,
    pub queries: Vec<QueryRecord>,
    pub labels: LabelMap,
    pub event_time: Option<Timestamp>,
}

impl Dataset {
    pub fn new(visits: Vec<LogRecord>, queries: Vec<QueryRecord>) -> Self {
        Dataset {
            visits,
            queries,
            ..Default::default()
        }
    }

    pub fn with_labels(mut self, labels: LabelMap) -> Self {
        self.labels = labels;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty() && self.queries.is_empty()
    }

    /// Splits into `(before, after)`. A record stamped exactly at
    /// `event_time` belongs to the after half.
    pub fn split_by_event(&self, event_time: Timestamp) -> (Dataset, Dataset) {
        let (vb, va): (Vec<_>, Vec<_>) = self
            .visits
            .iter()
            .cloned()
            .partition(|v| v.timestamp < event_time);
        let (qb, qa): (Vec<_>, Vec<_>) = self
            .queries
            .iter()
            .cloned()
            .partition(|q| q.timestamp < event_time);
        let half = |visits, queries| Dataset {
            visits,
            queries,
            labels: self.labels.clone(),
            event_time: Some(event_time),
        };
        (half(vb, qb), half(va, qa))
    }

    pub fn users(&self) -> BTreeSet<&str> {
        self.visits.iter().map(|v| v.user_id.as_str()).collect()
    }

    /// Keeps only visits (and queries) by the given users.
    pub fn restrict_users(&self, users: &BTreeSet<String>) -> Dataset {
        Dataset {
            visits: self
                .visits
                .iter()
                .filter(|v| users.contains(&v.user_id))
                .cloned()
                .collect(),
            queries: self
                .queries
                .iter()
                .filter(|q| users.contains(&q.user_id))
                .cloned()
                .collect(),
            labels: self.labels.clone(),
            event_time: self.event_time,
        }
    }

    /// Drops visits whose normalized URL is in `urls`.
    pub fn exclude_urls(&self, urls: &BTreeSet<String>, norm: &UrlNormalizer) -> Dataset {
        if urls.is_empty() {
            return self.clone();
        }
        Dataset {
            visits: self
                .visits
                .iter()
                .filter(|v| !urls.contains(&norm.normalize(&v.url)))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// Counts distinct users, `(user, session)` pairs, normalized URLs and
    /// domains over the visit records.
    pub fn summarize(&self, norm: &UrlNormalizer) -> Summary {
        let mut users = BTreeSet::new();
        let mut sessions = BTreeSet::new();
        let mut urls = BTreeSet::new();
        let mut domains = BTreeSet::new();
        for v in &self.visits {
            users.insert(v.user_id.as_str());
            sessions.insert((v.user_id.as_str(), v.session_id.as_str()));
            let u = norm.normalize(&v.url);
            domains.insert(norm.domain_of_normalized(&u));
            urls.insert(u);
        }
        Summary {
            users: users.len() as u64,
            sessions: sessions.len() as u64,
            unique_urls: urls.len() as u64,
            unique_domains: domains.len() as u64,
            total_visits: self.visits.len() as u64,
        }
    }
}

/// Users that appear in the visit records of both halves.
pub fn common_users(before: &Dataset, after: &Dataset) -> BTreeSet<String> {
    let a = after.users();
    before
        .users()
        .into_iter()
        .filter(|u| a.contains(u))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn visit(user: &str, session: &str, url: &str, ts: Timestamp) -> LogRecord {
        LogRecord {
            user_id: user.into(),
            session_id: session.into(),
            url: url.into(),
            timestamp: ts,
        }
    }

    #[test]
    fn fold_matches_table() {
        use StanceLabel::*;
        let expected = [
            (EC, HighLevel::GC),
            (MC, HighLevel::GC),
            (HB, HighLevel::BF),
            (PF, HighLevel::BF),
            (MR, HighLevel::GR),
            (ER, HighLevel::GR),
            (OffTopic, HighLevel::OffTopic),
            (NotAccessible, HighLevel::NotAccessible),
        ];
        for (e, h) in expected {
            assert_eq!(e.high_level(), h);
        }
    }

    #[test]
    fn state_indices_follow_control_to_rights_order() {
        assert_eq!(Tier::Expanded.state_index(StanceLabel::EC), Some(0));
        assert_eq!(Tier::Expanded.state_index(StanceLabel::ER), Some(5));
        assert_eq!(Tier::High.state_index(StanceLabel::MC), Some(0));
        assert_eq!(Tier::High.state_index(StanceLabel::PF), Some(1));
        assert_eq!(Tier::High.state_index(StanceLabel::ER), Some(2));
        assert_eq!(Tier::High.state_index(StanceLabel::OffTopic), None);
        assert_eq!(Tier::Expanded.state_index(StanceLabel::NotAccessible), None);
    }

    #[test]
    fn label_codes_round_trip() {
        for l in StanceLabel::ALL {
            assert_eq!(l.code().parse::<StanceLabel>().unwrap(), l);
        }
        assert!("XX".parse::<StanceLabel>().is_err());
        let json = serde_json::to_string(&StanceLabel::OffTopic).unwrap();
        assert_eq!(json, "\"OFF\"");
    }

    #[test]
    fn event_boundary_goes_after() {
        let ds = Dataset::new(
            vec![visit("u", "s", "a.com", 10), visit("u", "s", "b.com", 20)],
            vec![],
        );
        let (b, a) = ds.split_by_event(20);
        assert_eq!(b.visits.len(), 1);
        assert_eq!(a.visits.len(), 1);
        assert_eq!(a.visits[0].timestamp, 20);

        let (b, a) = ds.split_by_event(100);
        assert_eq!(b.visits.len(), 2);
        assert!(a.visits.is_empty());
    }

    #[test]
    fn common_users_cases() {
        let b = Dataset::new(vec![visit("a", "s", "x.com", 1)], vec![]);
        let a = Dataset::new(vec![visit("b", "s", "x.com", 2)], vec![]);
        assert!(common_users(&b, &a).is_empty());
        let a2 = Dataset::new(vec![visit("a", "s2", "y.com", 3)], vec![]);
        assert_eq!(common_users(&b, &a2).len(), 1);
    }

    #[test]
    fn summary_counts() {
        let norm = UrlNormalizer::default();
        assert_eq!(Dataset::default().summarize(&norm), Summary::default());
        let ds = Dataset::new(
            vec![
                visit("u", "s", "http://www.example.com/a", 1),
                visit("u", "s", "example.com/a/", 2),
            ],
            vec![],
        );
        let s = ds.summarize(&norm);
        assert_eq!(
            s,
            Summary {
                users: 1,
                sessions: 1,
                unique_urls: 1,
                unique_domains: 1,
                total_visits: 2
            }
        );
    }

    #[test]
    fn label_map_prefers_url_entry() {
        let mut m = LabelMap::new();
        m.insert(LabelScope::Domain, "example.com", StanceLabel::MR);
        m.insert(LabelScope::Url, "example.com/x", StanceLabel::PF);
        assert_eq!(m.resolve("example.com/x", "example.com"), Some(StanceLabel::PF));
        assert_eq!(m.resolve("example.com/y", "example.com"), Some(StanceLabel::MR));
        assert_eq!(m.resolve("other.com/y", "other.com"), None);
    }
}

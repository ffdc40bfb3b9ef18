//! Label-entropy diversity of domains and users, and domain label propagation.
//!
//! Entropy is normalized by the maximum entropy `log2(k)` for `k`
//! categories, so 0 means a single label and 1 means a uniform spread.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{common_users, Dataset, HighLevel, LabelMap, LabelScope, StanceLabel, Tier};
use crate::urlnorm::UrlNormalizer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyStat {
    pub id: String,
    pub raw_bits: f64,
    pub normalized: f64,
    pub n_observations: u64,
}

/// Shannon entropy of a count vector in the given logarithm base.
/// Zero counts contribute nothing.
pub fn shannon_entropy(counts: &[u64], base: f64) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log(base)
        })
        .sum();
    // A single category yields -0.0.
    h.max(0.0)
}

/// Entropy of `counts` in bits divided by `log2(k)`.
pub fn normalized_entropy_counts(id: &str, counts: &[u64], k: usize) -> Result<EntropyStat> {
    if k < 2 {
        return Err(Error::Diversity(format!("category count {k} must be at least 2")));
    }
    let nonzero = counts.iter().filter(|&&c| c > 0).count();
    if nonzero == 0 {
        return Err(Error::Diversity(format!("{id}: no observations")));
    }
    if nonzero > k {
        return Err(Error::Diversity(format!(
            "{id}: {nonzero} distinct labels exceed {k} categories"
        )));
    }
    let raw_bits = shannon_entropy(counts, 2.0);
    Ok(EntropyStat {
        id: id.to_string(),
        raw_bits,
        normalized: (raw_bits / (k as f64).log2()).clamp(0.0, 1.0),
        n_observations: counts.iter().sum(),
    })
}

/// Normalized entropy of a multiset of labels over `k` categories.
pub fn normalized_entropy<T: Ord>(
    id: &str,
    labels: impl IntoIterator<Item = T>,
    k: usize,
) -> Result<EntropyStat> {
    let mut counts: BTreeMap<T, u64> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    let counts: Vec<u64> = counts.into_values().collect();
    normalized_entropy_counts(id, &counts, k)
}

/// Tier state index of every stance label, `None` for the rest.
fn state(label: StanceLabel, tier: Tier) -> Option<usize> {
    tier.state_index(label)
}

/// URL-level stance labels grouped by domain.
fn labels_by_domain(labels: &LabelMap, norm: &UrlNormalizer) -> BTreeMap<String, Vec<StanceLabel>> {
    let mut out: BTreeMap<String, Vec<StanceLabel>> = BTreeMap::new();
    for (url, &l) in &labels.urls {
        if l.is_stance() {
            out.entry(norm.domain_of_normalized(url)).or_default().push(l);
        }
    }
    out
}

/// Entropy of each domain's labeled URLs. Domains with fewer than
/// `min_urls` labeled URLs are skipped.
pub fn domain_diversity(
    ds: &Dataset,
    tier: Tier,
    norm: &UrlNormalizer,
    min_urls: usize,
) -> Vec<EntropyStat> {
    labels_by_domain(&ds.labels, norm)
        .into_iter()
        .filter(|(_, ls)| ls.len() >= min_urls.max(1))
        .filter_map(|(domain, ls)| {
            let states = ls.iter().filter_map(|&l| state(l, tier));
            normalized_entropy(&domain, states, tier.n_states()).ok()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    /// Domains with high-level normalized entropy strictly below this are labeled.
    pub entropy_threshold: f64,
    pub forum_domains: Vec<String>,
    /// Stances of advocacy domains, applied regardless of entropy.
    pub advocacy: BTreeMap<String, StanceLabel>,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            entropy_threshold: 0.5,
            forum_domains: Vec::new(),
            advocacy: BTreeMap::new(),
        }
    }
}

/// Majority high-level group, then majority member within it. `None` on a
/// tie at either stage.
pub fn dominant_label(labels: &[StanceLabel]) -> Option<StanceLabel> {
    fn unique_max<K: Copy + Ord>(counts: &BTreeMap<K, usize>) -> Option<K> {
        let max = *counts.values().max()?;
        let mut top = counts.iter().filter(|(_, &c)| c == max);
        let (&k, _) = top.next()?;
        top.next().is_none().then_some(k)
    }
    let mut groups: BTreeMap<HighLevel, usize> = BTreeMap::new();
    for l in labels.iter().filter(|l| l.is_stance()) {
        *groups.entry(l.high_level()).or_insert(0) += 1;
    }
    let group = unique_max(&groups)?;
    let mut members: BTreeMap<StanceLabel, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|l| l.high_level() == group) {
        *members.entry(l).or_insert(0) += 1;
    }
    unique_max(&members)
}

/// Outcome of label propagation for one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDecision {
    pub domain: String,
    pub label: Option<StanceLabel>,
    pub rule: PropagationRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationRule {
    Forum,
    Advocacy,
    LowEntropy,
    Tie,
    Diverse,
}

/// Extends the label map with domain-level labels.
///
/// Forum domains take their dominant label and advocacy domains their
/// configured stance. Any other domain whose high-level entropy in `stats`
/// is below the threshold takes its dominant label. Labeled URLs inside a
/// newly labeled domain are rewritten to the domain label; ties leave the
/// domain unlabeled and its URL labels untouched.
pub fn propagate_domain_labels(
    ds: &Dataset,
    stats: &[EntropyStat],
    cfg: &PropagationConfig,
    norm: &UrlNormalizer,
) -> (LabelMap, Vec<DomainDecision>) {
    let by_domain = labels_by_domain(&ds.labels, norm);
    let entropy: BTreeMap<&str, f64> = stats.iter().map(|s| (s.id.as_str(), s.normalized)).collect();
    let forums: BTreeSet<String> = cfg.forum_domains.iter().map(|d| crate::ingest::normalize_domain(d)).collect();
    let advocacy: BTreeMap<String, StanceLabel> = cfg
        .advocacy
        .iter()
        .map(|(d, &l)| (crate::ingest::normalize_domain(d), l))
        .collect();

    let mut domains: BTreeSet<&str> = by_domain.keys().map(String::as_str).collect();
    domains.extend(advocacy.keys().map(String::as_str));

    let mut decisions = Vec::new();
    for domain in domains {
        let labels = by_domain.get(domain).map(Vec::as_slice).unwrap_or(&[]);
        let (label, rule) = if let Some(&l) = advocacy.get(domain) {
            (Some(l), PropagationRule::Advocacy)
        } else if forums.contains(domain) {
            let l = dominant_label(labels);
            (l, if l.is_some() { PropagationRule::Forum } else { PropagationRule::Tie })
        } else if entropy
            .get(domain)
            .is_some_and(|&h| h < cfg.entropy_threshold)
        {
            let l = dominant_label(labels);
            (l, if l.is_some() { PropagationRule::LowEntropy } else { PropagationRule::Tie })
        } else {
            (None, PropagationRule::Diverse)
        };
        decisions.push(DomainDecision {
            domain: domain.to_string(),
            label,
            rule,
        });
    }

    let mut out = ds.labels.clone();
    let assigned: BTreeMap<&str, StanceLabel> = decisions
        .iter()
        .filter_map(|d| d.label.map(|l| (d.domain.as_str(), l)))
        .collect();
    for (domain, &label) in &assigned {
        out.insert(LabelScope::Domain, *domain, label);
    }
    for (url, label) in out.urls.iter_mut() {
        if !label.is_stance() {
            continue;
        }
        if let Some(&l) = assigned.get(norm.domain_of_normalized(url).as_str()) {
            *label = l;
        }
    }
    (out, decisions)
}

/// Whether each distinct site counts once or each visit counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Distinct,
    Visits,
}

/// Per-user stance observations: the set of distinct domains visited and,
/// per observation, the state index.
fn user_observations(
    ds: &Dataset,
    tier: Tier,
    norm: &UrlNormalizer,
    weighting: Weighting,
) -> BTreeMap<String, (BTreeSet<String>, Vec<usize>)> {
    let mut seen: BTreeMap<String, BTreeSet<(String, usize)>> = BTreeMap::new();
    let mut visits: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for v in &ds.visits {
        let url = norm.normalize(&v.url);
        let domain = norm.domain_of_normalized(&url);
        let Some(s) = ds.labels.resolve(&url, &domain).and_then(|l| state(l, tier)) else {
            continue;
        };
        seen.entry(v.user_id.clone()).or_default().insert((domain, s));
        visits.entry(v.user_id.clone()).or_default().push(s);
    }
    seen.into_iter()
        .map(|(user, pairs)| {
            let domains = pairs.iter().map(|(d, _)| d.clone()).collect();
            let obs = match weighting {
                Weighting::Distinct => pairs.iter().map(|&(_, s)| s).collect(),
                Weighting::Visits => visits.remove(&user).unwrap_or_default(),
            };
            (user, (domains, obs))
        })
        .collect()
}

/// Normalized label entropy of every user with at least `min_domains`
/// distinct labeled domains. Each distinct `(domain, label)` pair counts once
/// unless `weighting` is [`Weighting::Visits`].
pub fn user_diversity(
    ds: &Dataset,
    min_domains: usize,
    tier: Tier,
    norm: &UrlNormalizer,
    weighting: Weighting,
) -> Vec<EntropyStat> {
    let obs = user_observations(ds, tier, norm, weighting);
    let mut out: Vec<EntropyStat> = obs
        .par_iter()
        .filter(|(_, (domains, _))| domains.len() >= min_domains)
        .filter_map(|(user, (_, states))| {
            normalized_entropy(user, states.iter().copied(), tier.n_states()).ok()
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityChange {
    pub user_id: String,
    pub h_before: f64,
    pub h_after: f64,
    pub delta: f64,
}

/// Mean delta and the split into unchanged / increased / decreased users.
/// Percentages are in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub users: u64,
    pub mean_delta: f64,
    pub pct_unchanged: f64,
    pub pct_increased: f64,
    pub mean_increase: f64,
    pub pct_decreased: f64,
    pub mean_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityChangeReport {
    pub changes: Vec<DiversityChange>,
    /// `None` when no user qualifies.
    pub summary: Option<ChangeSummary>,
}

/// Deltas under this magnitude count as unchanged.
pub const UNCHANGED_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeOptions {
    pub min_domains_each: usize,
    pub tier: Tier,
    pub weighting: Weighting,
    /// Normalized URLs removed from both periods first.
    pub exclusions: BTreeSet<String>,
}

impl Default for ChangeOptions {
    fn default() -> Self {
        ChangeOptions {
            min_domains_each: 2,
            tier: Tier::High,
            weighting: Weighting::Distinct,
            exclusions: BTreeSet::new(),
        }
    }
}

/// Change in normalized user entropy between two periods, for common users
/// with enough labeled domains in each.
pub fn diversity_change(
    before: &Dataset,
    after: &Dataset,
    opts: &ChangeOptions,
    norm: &UrlNormalizer,
) -> DiversityChangeReport {
    let before = before.exclude_urls(&opts.exclusions, norm);
    let after = after.exclude_urls(&opts.exclusions, norm);
    let common = common_users(&before, &after);
    let hb = user_diversity(
        &before.restrict_users(&common),
        opts.min_domains_each,
        opts.tier,
        norm,
        opts.weighting,
    );
    let ha: BTreeMap<String, f64> = user_diversity(
        &after.restrict_users(&common),
        opts.min_domains_each,
        opts.tier,
        norm,
        opts.weighting,
    )
    .into_iter()
    .map(|s| (s.id, s.normalized))
    .collect();

    let changes: Vec<DiversityChange> = hb
        .into_iter()
        .filter_map(|b| {
            ha.get(&b.id).map(|&a| DiversityChange {
                delta: a - b.normalized,
                h_before: b.normalized,
                h_after: a,
                user_id: b.id,
            })
        })
        .collect();
    let summary = summarize_changes(&changes);
    DiversityChangeReport { changes, summary }
}

fn summarize_changes(changes: &[DiversityChange]) -> Option<ChangeSummary> {
    if changes.is_empty() {
        return None;
    }
    let n = changes.len() as f64;
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let up: Vec<f64> = changes.iter().map(|c| c.delta).filter(|&d| d >= UNCHANGED_EPS).collect();
    let down: Vec<f64> = changes.iter().map(|c| c.delta).filter(|&d| d <= -UNCHANGED_EPS).collect();
    let same = changes.len() - up.len() - down.len();
    Some(ChangeSummary {
        users: changes.len() as u64,
        mean_delta: changes.iter().map(|c| c.delta).sum::<f64>() / n,
        pct_unchanged: 100.0 * same as f64 / n,
        pct_increased: 100.0 * up.len() as f64 / n,
        mean_increase: mean(&up),
        pct_decreased: 100.0 * down.len() as f64 / n,
        mean_decrease: mean(&down),
    })
}

//! Report payloads and their plain-text rendering.

use std::collections::BTreeMap;
use std::fmt::Write;

use polarlens::annotation::AgreementReport;
use polarlens::diversity::{
    ChangeSummary, DiversityChangeReport, DomainDecision, EntropyStat, PropagationRule,
};
use polarlens::extraction::{rank_queries, Extraction};
use polarlens::transitions::{DistanceReport, MediatorReport, MobilityReport, TransitionMatrix};
use polarlens::{Dataset, LabelMap, StanceLabel, Summary, Tier, Timestamp, UrlNormalizer};
use serde::{Deserialize, Serialize};

/// Number of top queries listed per period.
const TOP_QUERIES: usize = 15;

/// Percentage with two decimals.
pub fn fmt_pct(fraction_or_pct: f64) -> String {
    format!("{fraction_or_pct:.2}")
}

/// Index value with four decimals.
pub fn fmt_index(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_opt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), fmt_pct)
}

fn fmt_opt_index(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), fmt_index)
}

/// Transition matrix of one period with its indices and its distances
/// from the identity (full immobility).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub period: String,
    pub matrix: TransitionMatrix,
    pub mobility: MobilityReport,
    pub distances: DistanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediatorPeriod {
    pub period: String,
    pub report: MediatorReport,
}

/// Location summary of a set of normalized entropies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySpread {
    pub count: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Percent of entities with entropy exactly 0.
    pub pct_zero: Option<f64>,
}

impl EntropySpread {
    pub fn new(stats: &[EntropyStat]) -> Self {
        let mut v: Vec<f64> = stats.iter().map(|s| s.normalized).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return EntropySpread {
                count: 0,
                mean: None,
                median: None,
                pct_zero: None,
            };
        }
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        EntropySpread {
            count: n,
            mean: Some(v.iter().sum::<f64>() / n as f64),
            median: Some(median),
            pct_zero: Some(100.0 * v.iter().filter(|&&x| x == 0.0).count() as f64 / n as f64),
        }
    }
}

/// Everything the diversity stage produces.
pub struct DiversitySection {
    pub domain_stats: Vec<EntropyStat>,
    pub decisions: Vec<DomainDecision>,
    pub propagated: LabelMap,
    /// The input corpus carrying the propagated labels.
    pub labeled: Dataset,
    pub user_stats: Vec<EntropyStat>,
    pub change: BTreeMap<String, DiversityChangeReport>,
    pub summary: DiversitySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversitySummary {
    pub tier: Tier,
    /// Share of each expanded label among the manual stance labels.
    pub label_distribution: Option<BTreeMap<StanceLabel, f64>>,
    pub domains: EntropySpread,
    /// Domain count per propagation rule.
    pub propagation: BTreeMap<String, usize>,
    pub users: EntropySpread,
    pub change: BTreeMap<String, Option<ChangeSummary>>,
}

fn rule_name(rule: PropagationRule) -> &'static str {
    match rule {
        PropagationRule::Forum => "forum",
        PropagationRule::Advocacy => "advocacy",
        PropagationRule::LowEntropy => "low_entropy",
        PropagationRule::Tie => "tie",
        PropagationRule::Diverse => "diverse",
    }
}

impl DiversitySummary {
    pub fn new(
        tier: Tier,
        domain_stats: &[EntropyStat],
        decisions: &[DomainDecision],
        user_stats: &[EntropyStat],
        change: &BTreeMap<String, DiversityChangeReport>,
        label_distribution: Option<BTreeMap<StanceLabel, f64>>,
    ) -> Self {
        let mut propagation = BTreeMap::new();
        for d in decisions {
            *propagation.entry(rule_name(d.rule).to_string()).or_insert(0) += 1;
        }
        DiversitySummary {
            tier,
            label_distribution,
            domains: EntropySpread::new(domain_stats),
            propagation,
            users: EntropySpread::new(user_stats),
            change: change.iter().map(|(k, r)| (k.clone(), r.summary)).collect(),
        }
    }
}

/// The bundled report: dataset sizes, agreement, diversity, transition
/// matrices with indices and distances, and mediator shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub event_time: Option<Timestamp>,
    /// Dataset sizes keyed by stage and period.
    pub datasets: BTreeMap<String, Summary>,
    pub relevant_queries: Option<usize>,
    pub relevant_urls: Option<usize>,
    pub top_queries: BTreeMap<String, Vec<(String, u64)>>,
    pub agreement: Option<BTreeMap<Tier, AgreementReport>>,
    pub diversity: DiversitySummary,
    pub transitions: Vec<MatrixReport>,
    pub mediators: Vec<MediatorPeriod>,
}

impl Report {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        raw: &Dataset,
        corpus: &Dataset,
        extraction: Option<&Extraction>,
        norm: &UrlNormalizer,
        event_time: Option<Timestamp>,
        agreement: Option<BTreeMap<Tier, AgreementReport>>,
        diversity: DiversitySummary,
        transitions: Vec<MatrixReport>,
        mediators: Vec<MediatorPeriod>,
    ) -> Self {
        let mut datasets = BTreeMap::new();
        datasets.insert("raw".to_string(), raw.summarize(norm));
        datasets.insert("corpus".to_string(), corpus.summarize(norm));
        let mut top_queries = BTreeMap::new();
        if let Some(t) = event_time {
            let (before, after) = corpus.split_by_event(t);
            datasets.insert("corpus_before".to_string(), before.summarize(norm));
            datasets.insert("corpus_after".to_string(), after.summarize(norm));
            if let Some(ex) = extraction {
                let (rb, ra) = raw.split_by_event(t);
                for (name, ds) in [("before", &rb), ("after", &ra)] {
                    let ranked = rank_queries(&ds.queries, &ex.relevant_queries);
                    top_queries.insert(name.to_string(), ranked.into_iter().take(TOP_QUERIES).collect());
                }
            }
        }
        if let Some(ex) = extraction {
            let ranked = rank_queries(&raw.queries, &ex.relevant_queries);
            top_queries.insert("overall".to_string(), ranked.into_iter().take(TOP_QUERIES).collect());
        }
        Report {
            event_time,
            datasets,
            relevant_queries: extraction.map(|e| e.relevant_queries.len()),
            relevant_urls: extraction.map(|e| e.relevant_urls.len()),
            top_queries,
            agreement,
            diversity,
            transitions,
            mediators,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("== Datasets ==\n");
        let _ = writeln!(
            s,
            "{:<16}{:>10}{:>10}{:>12}{:>10}{:>12}",
            "dataset", "users", "sessions", "urls", "domains", "visits"
        );
        for (name, d) in &self.datasets {
            let _ = writeln!(
                s,
                "{:<16}{:>10}{:>10}{:>12}{:>10}{:>12}",
                name, d.users, d.sessions, d.unique_urls, d.unique_domains, d.total_visits
            );
        }
        if let (Some(q), Some(u)) = (self.relevant_queries, self.relevant_urls) {
            let _ = writeln!(s, "relevant queries: {q}, relevant urls: {u}");
        }
        for (period, ranked) in &self.top_queries {
            let _ = writeln!(s, "\ntop queries ({period}):");
            for (q, n) in ranked {
                let _ = writeln!(s, "  {n:>8}  {q}");
            }
        }
        if let Some(a) = &self.agreement {
            s.push_str("\n== Agreement ==\n");
            s.push_str(&render_agreement(a));
        }
        s.push_str("\n== Diversity ==\n");
        s.push_str(&render_diversity(&self.diversity));
        s.push_str("\n== Transitions ==\n");
        for r in &self.transitions {
            s.push_str(&render_matrix(&r.period, &r.matrix));
            s.push('\n');
        }
        s.push_str(&render_mobility(&self.transitions));
        s.push_str("\n== Mediators ==\n");
        s.push_str(&render_mediators(&self.mediators));
        s
    }
}

pub fn render_agreement(reports: &BTreeMap<Tier, AgreementReport>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10}{:>4}{:>10}{:>12}{:>10}{:>13}{:>10}",
        "tier", "k", "P_o %", "free k %", "P_e", "fixed k %", "co-judged"
    );
    for (tier, r) in reports {
        let _ = writeln!(
            s,
            "{:<10}{:>4}{:>10}{:>12}{:>10}{:>13}{:>10}",
            tier.to_string(),
            r.category_count,
            fmt_pct(100.0 * r.overall_agreement),
            fmt_pct(100.0 * r.kappa_free),
            fmt_index(r.chance_expected),
            fmt_pct(100.0 * r.kappa_fixed),
            r.co_judged
        );
    }
    s
}

pub fn render_diversity(d: &DiversitySummary) -> String {
    let mut s = String::new();
    if let Some(dist) = &d.label_distribution {
        s.push_str("label distribution (%):");
        for (label, p) in dist {
            let _ = write!(s, " {}={}", label.code(), fmt_pct(100.0 * p));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "tier: {}", d.tier);
    let _ = writeln!(
        s,
        "{:<10}{:>8}{:>10}{:>10}{:>10}",
        "entity", "count", "mean", "median", "% zero"
    );
    for (name, e) in [("domains", &d.domains), ("users", &d.users)] {
        let _ = writeln!(
            s,
            "{:<10}{:>8}{:>10}{:>10}{:>10}",
            name,
            e.count,
            fmt_opt_index(e.mean),
            fmt_opt_index(e.median),
            fmt_opt_pct(e.pct_zero)
        );
    }
    if !d.propagation.is_empty() {
        s.push_str("propagation:");
        for (rule, n) in &d.propagation {
            let _ = write!(s, " {rule}={n}");
        }
        s.push('\n');
    }
    for (name, c) in &d.change {
        match c {
            Some(c) => {
                let _ = writeln!(
                    s,
                    "change ({name}): users {}, mean delta {}%, unchanged {}%, increased {}% (mean {}%), decreased {}% (mean {}%)",
                    c.users,
                    fmt_pct(100.0 * c.mean_delta),
                    fmt_pct(c.pct_unchanged),
                    fmt_pct(c.pct_increased),
                    fmt_pct(100.0 * c.mean_increase),
                    fmt_pct(c.pct_decreased),
                    fmt_pct(100.0 * c.mean_decrease),
                );
            }
            None => {
                let _ = writeln!(s, "change ({name}): no qualifying users");
            }
        }
    }
    s
}

/// Matrix rows in percent, one line per state.
pub fn render_matrix(name: &str, m: &TransitionMatrix) -> String {
    let states = m.tier.ordering();
    let mut s = String::new();
    let _ = write!(s, "{name}");
    if let Some(n) = m.total_transitions() {
        let _ = write!(s, " ({n} transitions)");
    }
    s.push('\n');
    let _ = write!(s, "{:<6}", "");
    for st in states {
        let _ = write!(s, "{st:>9}");
    }
    s.push('\n');
    for (i, row) in m.probabilities.iter().enumerate() {
        let _ = write!(s, "{:<6}", states[i]);
        for p in row {
            let _ = write!(s, "{:>9}", fmt_pct(100.0 * p));
        }
        if m.empty_rows[i] {
            s.push_str("  (no observations)");
        }
        s.push('\n');
    }
    s
}

/// Mobility indices and distances, one line per period.
pub fn render_mobility(reports: &[MatrixReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}",
        "period", "IR", "MU", "MD", "M_E", "M_2", "M_D", "M_SVD"
    );
    for r in reports {
        let m = &r.mobility;
        let _ = write!(s, "{:<14}", r.period);
        for v in [m.ir, m.mu, m.md, m.m_e, m.m_2, m.m_d, m.m_svd] {
            let _ = write!(s, "{:>9}", fmt_index(v));
        }
        s.push('\n');
    }
    s.push('\n');
    let _ = writeln!(
        s,
        "{:<14}{:>9}{:>9}{:>9}{:>9}{:>9}",
        "distance to I", "L1", "L2", "D_SVD", "D1", "D3"
    );
    for r in reports {
        let d = &r.distances;
        let _ = write!(s, "{:<14}", r.period);
        for v in [d.l1, d.l2, d.d_svd, d.d1, d.d3] {
            let _ = write!(s, "{:>9}", fmt_index(v));
        }
        s.push('\n');
    }
    s
}

pub fn render_mediators(periods: &[MediatorPeriod]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10}{:<12}{:>9}{:>10}{:>10}{:>12}",
        "period", "direction", "direct", "mediated", "% direct", "% mediated"
    );
    for p in periods {
        for (dir, d) in [
            ("GC -> GR", &p.report.control_to_rights),
            ("GR -> GC", &p.report.rights_to_control),
        ] {
            let _ = writeln!(
                s,
                "{:<10}{:<12}{:>9}{:>10}{:>10}{:>12}",
                p.period,
                dir,
                d.direct,
                d.indirect,
                fmt_opt_pct(d.pct_direct),
                fmt_opt_pct(d.pct_direct.map(|x| 100.0 - x))
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(v: f64) -> EntropyStat {
        EntropyStat {
            id: String::new(),
            raw_bits: 0.0,
            normalized: v,
            n_observations: 1,
        }
    }

    #[test]
    fn spread_of_even_count() {
        let e = EntropySpread::new(&[stat(0.0), stat(1.0), stat(0.5), stat(0.0)]);
        assert_eq!(e.count, 4);
        assert_eq!(e.mean, Some(0.375));
        assert_eq!(e.median, Some(0.25));
        assert_eq!(e.pct_zero, Some(50.0));
        assert_eq!(EntropySpread::new(&[]).mean, None);
    }

    #[test]
    fn formatting_precision() {
        assert_eq!(fmt_pct(53.4249), "53.42");
        assert_eq!(fmt_index(0.53424), "0.5342");
        assert_eq!(fmt_opt_pct(None), "-");
    }
}

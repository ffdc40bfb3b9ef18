//! Manual stance judgments and two-rater agreement statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{LabelMap, StanceLabel, Tier};
use crate::urlnorm::UrlNormalizer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub url: String,
    pub rater_id: String,
    pub label: StanceLabel,
}

/// How chance agreement is estimated for the fixed-marginal kappa.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginals {
    /// Each rater's own label distribution (Cohen).
    #[default]
    PerRater,
    /// Both raters' labels pooled into one distribution (Scott).
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub overall_agreement: f64,
    pub kappa_free: f64,
    pub kappa_fixed: f64,
    pub chance_expected: f64,
    pub category_count: u32,
    pub co_judged: u64,
}

impl AgreementReport {
    /// Builds a report from an observed agreement rate, a chance-expected
    /// rate and the number of categories.
    pub fn from_rates(overall: f64, chance_expected: f64, k: u32) -> Self {
        let uniform = 1.0 / k as f64;
        let kappa_free = (overall - uniform) / (1.0 - uniform);
        let kappa_fixed = if (1.0 - chance_expected).abs() < f64::EPSILON {
            // Both raters used one label throughout; only perfect agreement is possible.
            if overall >= 1.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (overall - chance_expected) / (1.0 - chance_expected)
        };
        AgreementReport {
            overall_agreement: overall,
            kappa_free,
            kappa_fixed,
            chance_expected,
            category_count: k,
            co_judged: 0,
        }
    }
}

/// Number of categories at a tier, counting `OffTopic` and `NotAccessible`.
pub fn category_count(tier: Tier) -> u32 {
    match tier {
        Tier::High => 5,
        Tier::Expanded => 8,
    }
}

fn category(label: StanceLabel, tier: Tier) -> String {
    match tier {
        Tier::High => label.high_level().code().to_string(),
        Tier::Expanded => label.code().to_string(),
    }
}

/// Agreement between exactly two raters over the URLs both judged.
pub fn agreement_report(
    judgments: &[Judgment],
    tier: Tier,
    marginals: Marginals,
) -> Result<AgreementReport> {
    let mut by_rater: BTreeMap<&str, BTreeMap<&str, StanceLabel>> = BTreeMap::new();
    for j in judgments {
        if by_rater
            .entry(j.rater_id.as_str())
            .or_default()
            .insert(j.url.as_str(), j.label)
            .is_some()
        {
            return Err(Error::Annotation(format!(
                "duplicate judgment of {} by {}",
                j.url, j.rater_id
            )));
        }
    }
    match by_rater.len() {
        2 => {}
        n if n < 2 => {
            return Err(Error::Annotation(format!(
                "agreement requires two raters, found {n}"
            )))
        }
        n => {
            return Err(Error::Annotation(format!(
                "agreement requires exactly two raters, found {n}"
            )))
        }
    }
    let mut raters = by_rater.values();
    let a = raters.next().expect("two raters");
    let b = raters.next().expect("two raters");

    let mut agree = 0u64;
    let mut n = 0u64;
    let mut marg_a: BTreeMap<String, f64> = BTreeMap::new();
    let mut marg_b: BTreeMap<String, f64> = BTreeMap::new();
    for (url, &la) in a {
        let Some(&lb) = b.get(url) else { continue };
        let (ca, cb) = (category(la, tier), category(lb, tier));
        n += 1;
        agree += (ca == cb) as u64;
        *marg_a.entry(ca).or_insert(0.0) += 1.0;
        *marg_b.entry(cb).or_insert(0.0) += 1.0;
    }
    if n == 0 {
        return Err(Error::Annotation("raters share no judged URL".into()));
    }
    let total = n as f64;
    let cats: BTreeSet<&String> = marg_a.keys().chain(marg_b.keys()).collect();
    let chance: f64 = cats
        .iter()
        .map(|c| {
            let pa = marg_a.get(*c).copied().unwrap_or(0.0) / total;
            let pb = marg_b.get(*c).copied().unwrap_or(0.0) / total;
            match marginals {
                Marginals::PerRater => pa * pb,
                Marginals::Pooled => ((pa + pb) / 2.0).powi(2),
            }
        })
        .sum();
    let mut report = AgreementReport::from_rates(agree as f64 / total, chance, category_count(tier));
    report.co_judged = n;
    Ok(report)
}

/// Share of each expanded stance among the stance-bearing entries of a label map.
pub fn label_distribution(labels: &LabelMap) -> Result<BTreeMap<StanceLabel, f64>> {
    let stances: Vec<StanceLabel> = labels
        .iter()
        .map(|(_, _, l)| l)
        .filter(|l| l.is_stance())
        .collect();
    if stances.is_empty() {
        return Err(Error::Annotation("label map has no stance labels".into()));
    }
    let mut out = BTreeMap::new();
    for l in &stances {
        *out.entry(*l).or_insert(0.0) += 1.0;
    }
    let n = stances.len() as f64;
    out.values_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Reads judgment rows `url,rater_id,label`; the header row is optional and
/// URLs are normalized.
pub fn read_judgments<R: Read>(reader: R, source: &str, norm: &UrlNormalizer) -> Result<Vec<Judgment>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 1;
        let row = row.map_err(|e| Error::parse(source, line, e.to_string()))?;
        if row.len() != 3 {
            return Err(Error::parse(source, line, "expected url,rater_id,label"));
        }
        if i == 0 && row[0].eq_ignore_ascii_case("url") {
            continue;
        }
        let label = row[2]
            .parse()
            .map_err(|_| Error::parse(source, line, format!("unknown label {:?}", &row[2])))?;
        out.push(Judgment {
            url: norm.normalize(&row[0]),
            rater_id: row[1].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn load_judgments(path: &Path, norm: &UrlNormalizer) -> Result<Vec<Judgment>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_judgments(f, &path.display().to_string(), norm)
}

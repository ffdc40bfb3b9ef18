//! Stance-state Markov transition matrices, mobility indices, distances
//! from immobility, and the mediator analysis.
//!
//! States follow the tier ordering (control-leaning first), so the upper
//! triangle of a matrix holds moves toward the rights-leaning end.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Dataset, HighLevel, StanceLabel, Tier};
use crate::urlnorm::UrlNormalizer;
use crate::{Error, Result};

/// Tolerance on row sums of probability rows.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Percent rows further than this from 100 are rejected on load.
pub const PERCENT_ROW_TOL: f64 = 0.5;

/// Row-stochastic matrix over the states of one tier.
///
/// Rows never observed as a source are all-zero in `probabilities` and
/// flagged in `empty_rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct TransitionMatrix {
    pub tier: Tier,
    pub counts: Option<Vec<Vec<u64>>>,
    pub probabilities: Vec<Vec<f64>>,
    pub empty_rows: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    ordering: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<Vec<u64>>>,
    probabilities: Vec<Vec<f64>>,
}

impl From<TransitionMatrix> for MatrixRepr {
    fn from(m: TransitionMatrix) -> Self {
        MatrixRepr {
            ordering: m.tier.ordering().iter().map(|s| s.to_string()).collect(),
            counts: m.counts,
            probabilities: m.probabilities,
        }
    }
}

impl TryFrom<MatrixRepr> for TransitionMatrix {
    type Error = Error;

    fn try_from(r: MatrixRepr) -> Result<Self> {
        let tier = tier_of_ordering(&r.ordering)?;
        match r.counts {
            Some(counts) => {
                let m = TransitionMatrix::from_counts(tier, counts)?;
                let close = m
                    .probabilities
                    .iter()
                    .flatten()
                    .zip(r.probabilities.iter().flatten())
                    .all(|(a, b)| (a - b).abs() <= ROW_SUM_TOL);
                if !close || r.probabilities.len() != m.n() {
                    return Err(Error::Transitions(
                        "probabilities disagree with counts".into(),
                    ));
                }
                Ok(m)
            }
            None => TransitionMatrix::from_probabilities(tier, r.probabilities),
        }
    }
}

fn tier_of_ordering(ordering: &[String]) -> Result<Tier> {
    let tier = Tier::from_n_states(ordering.len()).ok_or_else(|| {
        Error::Transitions(format!("ordering has {} states, expected 3 or 6", ordering.len()))
    })?;
    let expected = tier.ordering();
    if ordering.iter().zip(expected).any(|(a, b)| !a.trim().eq_ignore_ascii_case(b)) {
        return Err(Error::Transitions(format!(
            "state ordering {ordering:?} must be {expected:?}"
        )));
    }
    Ok(tier)
}

fn check_square<T>(rows: &[Vec<T>], n: usize) -> Result<()> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Transitions(format!("matrix must be {n}x{n}")));
    }
    Ok(())
}

impl TransitionMatrix {
    pub fn identity(tier: Tier) -> Self {
        let n = tier.n_states();
        let probabilities = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        TransitionMatrix {
            tier,
            counts: None,
            probabilities,
            empty_rows: vec![false; n],
        }
    }

    pub fn from_counts(tier: Tier, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = tier.n_states();
        check_square(&counts, n)?;
        let mut empty_rows = vec![false; n];
        let probabilities = counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    empty_rows[i] = true;
                    vec![0.0; n]
                } else {
                    row.iter().map(|&c| c as f64 / total as f64).collect()
                }
            })
            .collect();
        Ok(TransitionMatrix {
            tier,
            counts: Some(counts),
            probabilities,
            empty_rows,
        })
    }

    /// Validates that every row is either all zero (flagged empty) or sums to 1.
    pub fn from_probabilities(tier: Tier, probabilities: Vec<Vec<f64>>) -> Result<Self> {
        let n = tier.n_states();
        check_square(&probabilities, n)?;
        let mut empty_rows = vec![false; n];
        for (i, row) in probabilities.iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0 + ROW_SUM_TOL) {
                return Err(Error::Transitions(format!(
                    "row {} has an entry outside [0, 1]",
                    tier.ordering()[i]
                )));
            }
            let sum: f64 = row.iter().sum();
            if sum == 0.0 {
                empty_rows[i] = true;
            } else if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Transitions(format!(
                    "row {} sums to {sum}, not 1",
                    tier.ordering()[i]
                )));
            }
        }
        Ok(TransitionMatrix {
            tier,
            counts: None,
            probabilities,
            empty_rows,
        })
    }

    /// Reads a matrix of percentages with header `state,<codes...>` and one
    /// row per state in tier order. Rows are rescaled to sum to exactly 1, so
    /// published tables rounded to two decimals load as stochastic matrices.
    pub fn read_percent_csv<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(source, 1, e.to_string()))?
            .clone();
        let codes: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let tier = tier_of_ordering(&codes).map_err(|e| Error::parse(source, 1, e.to_string()))?;
        let n = tier.n_states();
        let mut rows = Vec::with_capacity(n);
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx as u64 + 2;
            let rec = rec.map_err(|e| Error::parse(source, line, e.to_string()))?;
            if rec.len() != n + 1 {
                return Err(Error::parse(source, line, format!("expected {} columns", n + 1)));
            }
            let expected = tier.ordering().get(rows.len()).copied().unwrap_or("");
            if !rec[0].eq_ignore_ascii_case(expected) {
                return Err(Error::parse(
                    source,
                    line,
                    format!("row label {:?}, expected {expected:?}", &rec[0]),
                ));
            }
            let vals = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite() && *v >= 0.0)
                        .ok_or_else(|| Error::parse(source, line, format!("bad percentage {s:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let sum: f64 = vals.iter().sum();
            if (sum - 100.0).abs() > PERCENT_ROW_TOL {
                return Err(Error::parse(source, line, format!("row sums to {sum}%, not 100%")));
            }
            rows.push(vals.iter().map(|v| v / sum).collect());
        }
        if rows.len() != n {
            return Err(Error::parse(source, rows.len() as u64 + 1, format!("expected {n} rows")));
        }
        TransitionMatrix::from_probabilities(tier, rows)
    }

    /// Loads a matrix from a percent CSV (`.csv`) or the JSON form.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            TransitionMatrix::read_percent_csv(file, &path.display().to_string())
        } else {
            Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
        }
    }

    pub fn n(&self) -> usize {
        self.probabilities.len()
    }

    pub fn total_transitions(&self) -> Option<u64> {
        self.counts.as_ref().map(|c| c.iter().flatten().sum())
    }

    /// Probabilities with empty rows replaced by identity rows, used for
    /// the spectral indices and distances.
    fn effective(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if self.empty_rows[i] {
                    (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
                } else {
                    row.clone()
                }
            })
            .collect()
    }

    fn dmatrix(&self) -> DMatrix<f64> {
        let p = self.effective();
        DMatrix::from_fn(self.n(), self.n(), |i, j| p[i][j])
    }

    /// Codes of the flagged empty rows.
    pub fn empty_states(&self) -> Vec<String> {
        self.empty_rows
            .iter()
            .zip(self.tier.ordering())
            .filter(|(e, _)| **e)
            .map(|(_, c)| c.to_string())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityReport {
    pub ir: f64,
    pub mu: f64,
    pub md: f64,
    pub m_e: f64,
    pub m_2: f64,
    pub m_d: f64,
    pub m_svd: f64,
    /// Eigenvalues as `[re, im]`, sorted by descending modulus.
    pub eigenvalues: Vec<[f64; 2]>,
    pub singular_values: Vec<f64>,
    pub empty_rows: Vec<String>,
}

/// Prais form of the trace index, `(n − Σ Re λ) / (n − 1)`.
pub fn prais_index(eigenvalues: &[[f64; 2]]) -> f64 {
    let n = eigenvalues.len() as f64;
    (n - eigenvalues.iter().map(|e| e[0]).sum::<f64>()) / (n - 1.0)
}

fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<[f64; 2]>> {
    let schur = Schur::try_new(m.clone(), 1e-14, 100_000)
        .ok_or_else(|| Error::Transitions("eigenvalue iteration did not converge".into()))?;
    let mut eig: Vec<[f64; 2]> = schur
        .complex_eigenvalues()
        .iter()
        .map(|c| [c.re, c.im])
        .collect();
    let modulus = |e: &[f64; 2]| e[0].hypot(e[1]);
    eig.sort_by(|a, b| modulus(b).total_cmp(&modulus(a)));
    Ok(eig)
}

/// `|λ2|`: the largest modulus after removing the eigenvalue nearest 1.
fn second_modulus(eig: &[[f64; 2]]) -> f64 {
    let unit = eig
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (a[0] - 1.0).hypot(a[1]).total_cmp(&(b[0] - 1.0).hypot(b[1]))
        })
        .map(|(i, _)| i);
    eig.iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != unit)
        .map(|(_, e)| e[0].hypot(e[1]))
        .fold(0.0, f64::max)
}

fn svd_mobility(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let n = m.nrows();
    let diff = m - DMatrix::<f64>::identity(n, n);
    let mut sv: Vec<f64> = diff.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    (sv.iter().sum::<f64>() / n as f64, sv)
}

/// Trace, eigenvalue, determinant and singular-value mobility indices.
///
/// IR, MU and MD average over non-empty rows only.
pub fn mobility_indices(p: &TransitionMatrix) -> Result<MobilityReport> {
    let n = p.n();
    for (i, row) in p.probabilities.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if !p.empty_rows[i] && (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Transitions(format!(
                "row {} sums to {sum}, not 1",
                p.tier.ordering()[i]
            )));
        }
    }
    let rows = p.empty_rows.iter().filter(|e| !**e).count();
    if rows == 0 {
        return Err(Error::Transitions("matrix has no populated rows".into()));
    }
    let (mut ir, mut mu, mut md) = (0.0, 0.0, 0.0);
    for (i, row) in p.probabilities.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            match i.cmp(&j) {
                std::cmp::Ordering::Equal => ir += v,
                std::cmp::Ordering::Less => mu += v,
                std::cmp::Ordering::Greater => md += v,
            }
        }
    }
    let rows = rows as f64;

    let m = p.dmatrix();
    let trace = m.trace();
    let eig = eigenvalues(&m)?;
    let (m_svd, singular_values) = svd_mobility(&m);
    Ok(MobilityReport {
        ir: ir / rows,
        mu: mu / rows,
        md: md / rows,
        m_e: (n as f64 - trace) / (n as f64 - 1.0),
        m_2: 1.0 - second_modulus(&eig),
        m_d: 1.0 - m.determinant().abs(),
        m_svd,
        eigenvalues: eig,
        singular_values,
        empty_rows: p.empty_states(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub l1: f64,
    pub l2: f64,
    pub d_svd: f64,
    pub d1: f64,
    pub d3: f64,
}

/// Distances of `p` from the reference `q` (usually the identity).
///
/// `d1` and `d3` weight each cell by `i − j`, so mass above the diagonal
/// (toward the rights-leaning end) counts negative.
pub fn immobility_distances(p: &TransitionMatrix, q: &TransitionMatrix) -> Result<DistanceReport> {
    if p.tier != q.tier {
        return Err(Error::Transitions(format!(
            "cannot compare a {}-state matrix with a {}-state matrix",
            p.n(),
            q.n()
        )));
    }
    let (pe, qe) = (p.effective(), q.effective());
    let (mut l1, mut l2, mut d1, mut d3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..p.n() {
        for j in 0..p.n() {
            let d = pe[i][j] - qe[i][j];
            let w = i as f64 - j as f64;
            l1 += d.abs();
            l2 += d * d;
            d1 += w * d;
            d3 += w * d.signum() * d * d;
        }
    }
    let d_svd = svd_mobility(&p.dmatrix()).0 - svd_mobility(&q.dmatrix()).0;
    Ok(DistanceReport {
        l1,
        l2: l2.sqrt(),
        d_svd,
        d1,
        d3,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrailOptions {
    /// Restart trails at session boundaries instead of spanning a user's
    /// whole history.
    pub per_session: bool,
    pub users: Option<BTreeSet<String>>,
}

/// One labeled step of a trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub domain: String,
    pub label: StanceLabel,
}

/// Time-ordered stance steps per user (or per `(user, session)` in
/// per-session mode).
///
/// Visits without a stance label are dropped, then consecutive visits to the
/// same domain collapse into the first of them.
pub fn trails(ds: &Dataset, opts: &TrailOptions, norm: &UrlNormalizer) -> BTreeMap<String, Vec<Step>> {
    let mut grouped: BTreeMap<String, Vec<(i64, usize)>> = BTreeMap::new();
    for (idx, v) in ds.visits.iter().enumerate() {
        if opts.users.as_ref().is_some_and(|u| !u.contains(&v.user_id)) {
            continue;
        }
        let key = if opts.per_session {
            format!("{}\t{}", v.user_id, v.session_id)
        } else {
            v.user_id.clone()
        };
        grouped.entry(key).or_default().push((v.timestamp, idx));
    }
    grouped
        .into_par_iter()
        .map(|(key, mut visits)| {
            // Stable: equal timestamps keep file order.
            visits.sort_by_key(|&(ts, _)| ts);
            let mut steps: Vec<Step> = Vec::new();
            for (_, idx) in visits {
                let url = norm.normalize(&ds.visits[idx].url);
                let domain = norm.domain_of_normalized(&url);
                let Some(label) = ds.labels.resolve(&url, &domain).filter(|l| l.is_stance()) else {
                    continue;
                };
                if steps.last().is_some_and(|s| s.domain == domain) {
                    continue;
                }
                steps.push(Step { domain, label });
            }
            (key, steps)
        })
        .collect()
}

fn count_transitions<'a>(
    trails: impl ParallelIterator<Item = &'a Vec<Step>>,
    tier: Tier,
) -> Vec<Vec<u64>> {
    let n = tier.n_states();
    trails
        .fold(
            || vec![vec![0u64; n]; n],
            |mut acc, steps| {
                for w in steps.windows(2) {
                    if let (Some(a), Some(b)) = (tier.state_index(w[0].label), tier.state_index(w[1].label)) {
                        acc[a][b] += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![vec![0u64; n]; n],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        *x += y;
                    }
                }
                a
            },
        )
}

/// Counts consecutive distinct-domain transitions over all trails.
pub fn build_transition_matrix(
    ds: &Dataset,
    tier: Tier,
    opts: &TrailOptions,
    norm: &UrlNormalizer,
) -> Result<TransitionMatrix> {
    let trails = trails(ds, opts, norm);
    let counts = count_transitions(trails.par_iter().map(|(_, t)| t), tier);
    if counts.iter().flatten().all(|&c| c == 0) {
        return Err(Error::Transitions("no qualifying transitions".into()));
    }
    TransitionMatrix::from_counts(tier, counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub direct: u64,
    pub indirect: u64,
    /// Share of direct segments in percent; `None` without segments.
    pub pct_direct: Option<f64>,
}

impl DirectionStats {
    fn record(&mut self, direct: bool) {
        if direct {
            self.direct += 1;
        } else {
            self.indirect += 1;
        }
    }

    fn finish(mut self) -> Self {
        let total = self.direct + self.indirect;
        self.pct_direct = (total > 0).then(|| 100.0 * self.direct as f64 / total as f64);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MediatorReport {
    pub control_to_rights: DirectionStats,
    pub rights_to_control: DirectionStats,
}

/// Classifies every cross-stance segment of a trail. A segment runs from
/// the last GC (GR) step before a GR (GC) step to that step, and is direct
/// when no BF step lies between them.
pub fn classify_segments(labels: impl IntoIterator<Item = HighLevel>) -> MediatorReport {
    let mut report = MediatorReport::default();
    let mut anchor: Option<HighLevel> = None;
    let mut mediated = false;
    for l in labels {
        match l {
            HighLevel::GC | HighLevel::GR => {
                match (anchor, l) {
                    (Some(HighLevel::GC), HighLevel::GR) => report.control_to_rights.record(!mediated),
                    (Some(HighLevel::GR), HighLevel::GC) => report.rights_to_control.record(!mediated),
                    _ => {}
                }
                anchor = Some(l);
                mediated = false;
            }
            HighLevel::BF => mediated |= anchor.is_some(),
            _ => {}
        }
    }
    report
}

/// Direct versus mediated crossings between the two poles.
pub fn mediator_analysis(ds: &Dataset, opts: &TrailOptions, norm: &UrlNormalizer) -> Result<MediatorReport> {
    let merged = trails(ds, opts, norm)
        .par_iter()
        .map(|(_, steps)| classify_segments(steps.iter().map(|s| s.label.high_level())))
        .reduce(MediatorReport::default, |a, b| MediatorReport {
            control_to_rights: DirectionStats {
                direct: a.control_to_rights.direct + b.control_to_rights.direct,
                indirect: a.control_to_rights.indirect + b.control_to_rights.indirect,
                pct_direct: None,
            },
            rights_to_control: DirectionStats {
                direct: a.rights_to_control.direct + b.rights_to_control.direct,
                indirect: a.rights_to_control.indirect + b.rights_to_control.indirect,
                pct_direct: None,
            },
        });
    let report = MediatorReport {
        control_to_rights: merged.control_to_rights.finish(),
        rights_to_control: merged.rights_to_control.finish(),
    };
    if report.control_to_rights.pct_direct.is_none() && report.rights_to_control.pct_direct.is_none() {
        return Err(Error::Transitions("no cross-stance segments".into()));
    }
    Ok(report)
}

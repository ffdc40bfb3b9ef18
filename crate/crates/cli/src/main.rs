//! `polarlens` command-line front end.

mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use polarlens::annotation::{
    agreement_report, label_distribution, load_judgments, AgreementReport, Marginals,
};
use polarlens::diversity::{
    diversity_change, domain_diversity, propagate_domain_labels, user_diversity, ChangeOptions,
    PropagationConfig, Weighting,
};
use polarlens::extraction::{extract, rank_queries, ExtractionConfig};
use polarlens::ingest::{load_labels, load_list, load_logs, write_labels, write_visits};
use polarlens::synth::{generate_logs, write_output, SynthConfig};
use polarlens::transitions::{
    build_transition_matrix, immobility_distances, mediator_analysis, mobility_indices, TrailOptions,
    TransitionMatrix,
};
use polarlens::{common_users, Dataset, Tier, Timestamp, UrlNormalizer};

use crate::report::{
    render_matrix, render_mobility, DiversitySection, DiversitySummary, MatrixReport,
    MediatorPeriod, Report,
};

#[derive(Parser)]
#[command(name = "polarlens", version, about = "Stance diversity and mobility analytics for browsing logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the on-topic corpus: relevant queries and URLs.
    Extract(ExtractArgs),
    /// Inter-rater agreement of two raters' judgments.
    Agree(AgreeArgs),
    /// Domain and user label entropy, label propagation, before/after change.
    Diversity(DiversityArgs),
    /// Transition matrices with mobility indices and distances.
    Transitions(TransitionsArgs),
    /// Direct versus mediated crossings between the two poles.
    Mediators(MediatorArgs),
    /// Generate a seeded synthetic corpus with bookkeeping.
    Synth(SynthArgs),
    /// Run every stage and write report.json and report.txt.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct LogArgs {
    /// Visit log TSV: user, session, url, timestamp.
    #[arg(long)]
    logs: PathBuf,
    /// Query log TSV. When given, the on-topic corpus is extracted first;
    /// otherwise the visit log is taken as the corpus.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Extraction config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Split point in epoch seconds; records at this time count as after.
    #[arg(long)]
    event_time: Option<Timestamp>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    #[command(flatten)]
    logs: LogArgs,
    /// Label CSV: scope,key,label with scope url or domain.
    #[arg(long)]
    labels: PathBuf,
    /// Restart trails at session boundaries.
    #[arg(long)]
    per_session: bool,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    logs: LogArgs,
    /// Number of top queries to list per period.
    #[arg(long, default_value_t = 15)]
    top: usize,
}

#[derive(Args)]
struct AgreeArgs {
    /// Judgments CSV: url,rater_id,label.
    #[arg(long)]
    judgments: PathBuf,
    /// Only this tier; both tiers when omitted.
    #[arg(long)]
    tier: Option<Tier>,
    /// Pool both raters' marginals for the chance term.
    #[arg(long)]
    pooled: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct DiversityOpts {
    /// Newline-separated URLs removed before the before/after comparison.
    #[arg(long)]
    exclude_urls: Option<PathBuf>,
    /// Newline-separated forum domains labeled by their dominant stance.
    #[arg(long)]
    forum_domains: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    entropy_threshold: f64,
    /// Minimum distinct labeled domains for a user to be scored.
    #[arg(long, default_value_t = 3)]
    min_domains: usize,
    /// Minimum distinct labeled domains in each period for the change.
    #[arg(long, default_value_t = 2)]
    min_domains_each: usize,
    /// Weight user entropy by visits instead of distinct domains.
    #[arg(long)]
    frequency: bool,
}

#[derive(Args)]
struct DiversityArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    opts: DiversityOpts,
    #[arg(long, default_value = "high")]
    tier: Tier,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("input").required(true).multiple(true)
    .args(["logs", "matrix", "before_matrix", "after_matrix"])))]
struct TransitionsArgs {
    /// Visit log TSV; needs --labels.
    #[arg(long, requires = "labels", conflicts_with_all = ["matrix", "before_matrix", "after_matrix"])]
    logs: Option<PathBuf>,
    #[arg(long, requires = "logs")]
    queries: Option<PathBuf>,
    #[arg(long, requires = "logs")]
    labels: Option<PathBuf>,
    #[arg(long, requires = "logs")]
    config: Option<PathBuf>,
    #[arg(long)]
    event_time: Option<Timestamp>,
    #[arg(long)]
    per_session: bool,
    /// Matrix file (percent CSV or JSON); repeatable, named by file stem.
    #[arg(long)]
    matrix: Vec<PathBuf>,
    #[arg(long)]
    before_matrix: Option<PathBuf>,
    #[arg(long)]
    after_matrix: Option<PathBuf>,
    #[arg(long, default_value = "high")]
    tier: Tier,
    /// Restrict before/after matrices to users active in both periods.
    #[arg(long)]
    common_users: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MediatorArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    common_users: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator config (TOML or JSON); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    opts: DiversityOpts,
    /// Judgments CSV for the agreement section.
    #[arg(long)]
    judgments: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Caps the worker pool at `POLARLENS_THREADS` when set.
fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("POLARLENS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("POLARLENS_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Extract(a) => cmd_extract(a),
        Command::Agree(a) => cmd_agree(a),
        Command::Diversity(a) => cmd_diversity(a),
        Command::Transitions(a) => cmd_transitions(a),
        Command::Mediators(a) => cmd_mediators(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_lines<'a>(dir: &Path, name: &str, lines: impl IntoIterator<Item = &'a String>) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    write_text(dir, name, &text)
}

fn load_config(path: Option<&Path>) -> Result<ExtractionConfig> {
    match path {
        Some(p) => Ok(ExtractionConfig::load(p)?),
        None => Ok(ExtractionConfig::default()),
    }
}

/// Raw logs, the on-topic corpus and the extraction that produced it.
struct Loaded {
    raw: Dataset,
    corpus: Dataset,
    extraction: Option<polarlens::extraction::Extraction>,
    config: ExtractionConfig,
}

impl Loaded {
    fn norm(&self) -> &UrlNormalizer {
        &self.config.normalizer
    }
}

fn load(args: &LogArgs, labels: Option<&Path>) -> Result<Loaded> {
    let config = load_config(args.config.as_deref())?;
    let mut raw = load_logs(&args.logs, args.queries.as_deref())?;
    raw.event_time = args.event_time;
    let (mut corpus, extraction) = if args.queries.is_some() {
        let ex = extract(&raw, &config)?;
        (ex.corpus.clone(), Some(ex))
    } else {
        (raw.clone(), None)
    };
    if let Some(path) = labels {
        corpus.labels = load_labels(path, &config.normalizer)?;
    }
    corpus.event_time = args.event_time;
    Ok(Loaded {
        raw,
        corpus,
        extraction,
        config,
    })
}

fn split(ds: &Dataset, event_time: Option<Timestamp>) -> Option<(Dataset, Dataset)> {
    event_time.map(|t| ds.split_by_event(t))
}

fn load_exclusions(path: Option<&Path>, norm: &UrlNormalizer) -> Result<BTreeSet<String>> {
    match path {
        Some(p) => Ok(load_list(p)?.iter().map(|u| norm.normalize(u)).collect()),
        None => Ok(BTreeSet::new()),
    }
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    let loaded = load(&a.logs, None)?;
    let ex = loaded
        .extraction
        .as_ref()
        .context("extract needs --queries")?;
    let out = &a.logs.out;
    ensure_dir(out)?;
    let norm = loaded.norm();
    write_json(out, "extraction.json", ex)?;
    write_lines(out, "relevant_queries.txt", &ex.relevant_queries)?;
    write_lines(out, "relevant_urls.txt", &ex.relevant_urls)?;
    write_visits(create(&out.join("corpus_visits.tsv"))?, &ex.corpus.visits)?;

    let mut summary = BTreeMap::new();
    summary.insert("raw", loaded.raw.summarize(norm));
    summary.insert("corpus", ex.corpus.summarize(norm));
    let mut top = BTreeMap::new();
    let rank = |ds: &Dataset| -> Vec<(String, u64)> {
        rank_queries(&ds.queries, &ex.relevant_queries).into_iter().take(a.top).collect()
    };
    top.insert("overall", rank(&loaded.raw));
    if let Some((before, after)) = split(&loaded.raw, a.logs.event_time) {
        let (cb, ca) = ex.corpus.split_by_event(a.logs.event_time.unwrap_or_default());
        summary.insert("corpus_before", cb.summarize(norm));
        summary.insert("corpus_after", ca.summarize(norm));
        top.insert("before", rank(&before));
        top.insert("after", rank(&after));
    }
    write_json(out, "summary.json", &summary)?;
    write_json(out, "top_queries.json", &top)?;
    println!(
        "seed queries: {}\nrelevant queries: {}\nrelevant urls: {}\ncorpus visits: {}",
        ex.seed_queries.len(),
        ex.relevant_queries.len(),
        ex.relevant_urls.len(),
        ex.corpus.visits.len()
    );
    Ok(())
}

fn agreement(judgments: &Path, tier: Option<Tier>, pooled: bool) -> Result<BTreeMap<Tier, AgreementReport>> {
    let j = load_judgments(judgments, &UrlNormalizer::default())?;
    let marginals = if pooled { Marginals::Pooled } else { Marginals::PerRater };
    let tiers = match tier {
        Some(t) => vec![t],
        None => vec![Tier::High, Tier::Expanded],
    };
    tiers
        .into_iter()
        .map(|t| Ok((t, agreement_report(&j, t, marginals)?)))
        .collect()
}

fn cmd_agree(a: AgreeArgs) -> Result<()> {
    let reports = agreement(&a.judgments, a.tier, a.pooled)?;
    ensure_dir(&a.out)?;
    write_json(&a.out, "agreement.json", &reports)?;
    print!("{}", report::render_agreement(&reports));
    Ok(())
}

fn propagation_config(opts: &DiversityOpts, cfg: &ExtractionConfig) -> Result<PropagationConfig> {
    let forum_domains = match &opts.forum_domains {
        Some(p) => load_list(p)?,
        None => Vec::new(),
    };
    let advocacy = cfg
        .advocacy
        .iter()
        .map(|a| (cfg.normalizer.domain(&a.url), a.label))
        .collect();
    Ok(PropagationConfig {
        entropy_threshold: opts.entropy_threshold,
        forum_domains,
        advocacy,
    })
}

fn cmd_diversity(a: DiversityArgs) -> Result<()> {
    let loaded = load(&a.corpus.logs, Some(&a.corpus.labels))?;
    let out = &a.corpus.logs.out;
    ensure_dir(out)?;
    let d = diversity_section(&loaded.corpus, &a.opts, &loaded.config, a.tier, a.corpus.logs.event_time)?;
    write_json(out, "domain_entropy.json", &d.domain_stats)?;
    write_json(out, "propagation.json", &d.decisions)?;
    write_labels(create(&out.join("propagated_labels.csv"))?, &d.propagated)?;
    write_json(out, "user_entropy.json", &d.user_stats)?;
    if !d.change.is_empty() {
        write_json(out, "diversity_change.json", &d.change)?;
    }
    print!("{}", report::render_diversity(&d.summary));
    Ok(())
}

/// Domain entropy, propagation, user entropy and the before/after change.
fn diversity_section(
    corpus: &Dataset,
    opts: &DiversityOpts,
    cfg: &ExtractionConfig,
    tier: Tier,
    event_time: Option<Timestamp>,
) -> Result<DiversitySection> {
    let norm = &cfg.normalizer;
    let high_stats = domain_diversity(corpus, Tier::High, norm, 1);
    let domain_stats = match tier {
        Tier::High => high_stats.clone(),
        Tier::Expanded => domain_diversity(corpus, tier, norm, 1),
    };
    let (propagated, decisions) =
        propagate_domain_labels(corpus, &high_stats, &propagation_config(opts, cfg)?, norm);
    let labeled = corpus.clone().with_labels(propagated.clone());
    let weighting = if opts.frequency { Weighting::Visits } else { Weighting::Distinct };
    let user_stats = user_diversity(&labeled, opts.min_domains, tier, norm, weighting);

    let mut change = BTreeMap::new();
    if let Some((before, after)) = split(&labeled, event_time) {
        let mut copts = ChangeOptions {
            min_domains_each: opts.min_domains_each,
            tier,
            weighting,
            exclusions: BTreeSet::new(),
        };
        change.insert("all_urls".to_string(), diversity_change(&before, &after, &copts, norm));
        if opts.exclude_urls.is_some() {
            copts.exclusions = load_exclusions(opts.exclude_urls.as_deref(), norm)?;
            change.insert("with_exclusions".to_string(), diversity_change(&before, &after, &copts, norm));
        }
    }
    let summary = DiversitySummary::new(tier, &domain_stats, &decisions, &user_stats, &change, label_distribution(&corpus.labels).ok());
    Ok(DiversitySection {
        domain_stats,
        decisions,
        propagated,
        labeled,
        user_stats,
        change,
        summary,
    })
}

fn trail_options(per_session: bool, users: Option<BTreeSet<String>>) -> TrailOptions {
    TrailOptions { per_session, users }
}

/// Matrix, indices and distances for one period.
fn analyze(name: &str, m: TransitionMatrix) -> Result<MatrixReport> {
    let mobility = mobility_indices(&m)?;
    let distances = immobility_distances(&m, &TransitionMatrix::identity(m.tier))?;
    Ok(MatrixReport {
        period: name.to_string(),
        matrix: m,
        mobility,
        distances,
    })
}

fn cmd_transitions(a: TransitionsArgs) -> Result<()> {
    let out = a.out.clone();
    let reports = match (&a.logs, &a.labels) {
        (Some(logs), Some(labels)) => {
            let args = LogArgs {
                logs: logs.clone(),
                queries: a.queries.clone(),
                config: a.config.clone(),
                event_time: a.event_time,
                out: a.out.clone(),
            };
            let loaded = load(&args, Some(labels))?;
            log_transitions(&loaded.corpus, a.tier, a.per_session, a.event_time, a.common_users, loaded.norm())?
        }
        _ => {
            let mut inputs: Vec<(String, PathBuf)> = Vec::new();
            if let Some(p) = &a.before_matrix {
                inputs.push(("before".into(), p.clone()));
            }
            if let Some(p) = &a.after_matrix {
                inputs.push(("after".into(), p.clone()));
            }
            for p in &a.matrix {
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                inputs.push((stem, p.clone()));
            }
            anyhow::ensure!(!inputs.is_empty(), "no matrix given");
            inputs
                .into_iter()
                .map(|(name, p)| {
                    let m = TransitionMatrix::load(&p).with_context(|| format!("loading {}", p.display()))?;
                    analyze(&name, m)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    ensure_dir(&out)?;
    for r in &reports {
        write_json(&out, &format!("matrix_{}.json", r.period), &r.matrix)?;
    }
    write_json(&out, "transitions.json", &reports)?;
    let mut text = String::new();
    for r in &reports {
        text.push_str(&render_matrix(&r.period, &r.matrix));
        text.push('\n');
    }
    text.push_str(&render_mobility(&reports));
    write_text(&out, "transitions.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn log_transitions(
    corpus: &Dataset,
    tier: Tier,
    per_session: bool,
    event_time: Option<Timestamp>,
    common: bool,
    norm: &UrlNormalizer,
) -> Result<Vec<MatrixReport>> {
    let mut reports = vec![analyze(
        "overall",
        build_transition_matrix(corpus, tier, &trail_options(per_session, None), norm)?,
    )?];
    if let Some((before, after)) = split(corpus, event_time) {
        let users = common.then(|| common_users(&before, &after));
        for (name, half) in [("before", &before), ("after", &after)] {
            let m = build_transition_matrix(half, tier, &trail_options(per_session, users.clone()), norm)
                .with_context(|| format!("{name} period"))?;
            reports.push(analyze(name, m)?);
        }
    }
    Ok(reports)
}

fn mediator_periods(
    corpus: &Dataset,
    per_session: bool,
    event_time: Option<Timestamp>,
    common: bool,
    norm: &UrlNormalizer,
) -> Result<Vec<MediatorPeriod>> {
    let mut periods = vec![MediatorPeriod {
        period: "overall".into(),
        report: mediator_analysis(corpus, &trail_options(per_session, None), norm)?,
    }];
    if let Some((before, after)) = split(corpus, event_time) {
        let users = common.then(|| common_users(&before, &after));
        for (name, half) in [("before", &before), ("after", &after)] {
            let report = mediator_analysis(half, &trail_options(per_session, users.clone()), norm)
                .with_context(|| format!("{name} period"))?;
            periods.push(MediatorPeriod {
                period: name.into(),
                report,
            });
        }
    }
    Ok(periods)
}

fn cmd_mediators(a: MediatorArgs) -> Result<()> {
    let loaded = load(&a.corpus.logs, Some(&a.corpus.labels))?;
    let periods = mediator_periods(&loaded.corpus, a.corpus.per_session, a.corpus.logs.event_time, a.common_users, loaded.norm())?;
    let out = &a.corpus.logs.out;
    ensure_dir(out)?;
    write_json(out, "mediators.json", &periods)?;
    print!("{}", report::render_mediators(&periods));
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(users) = a.users {
        cfg.users = users;
    }
    let out = generate_logs(&cfg)?;
    write_output(&out, &cfg, &a.out)?;
    let b = &out.bookkeeping;
    println!(
        "visits: {} ({} on topic)\nqueries: {}\nusers: {}\ntransitions: {}\nevent time: {}",
        b.raw.total_visits,
        b.on_topic.total_visits,
        b.queries,
        b.raw.users,
        b.total_transitions(),
        cfg.event_time
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let args = &a.corpus;
    let loaded = load(&args.logs, Some(&args.labels))?;
    let norm = loaded.norm().clone();
    let event_time = args.logs.event_time;

    let agreement = a
        .judgments
        .as_deref()
        .map(|j| agreement(j, None, false))
        .transpose()?;
    let DiversitySection {
        labeled,
        summary: diversity,
        ..
    } = diversity_section(&loaded.corpus, &a.opts, &loaded.config, Tier::High, event_time)?;
    // Later stages see the propagated domain labels.
    let corpus = &labeled;

    let mut transitions = Vec::new();
    for tier in [Tier::Expanded, Tier::High] {
        let all = build_transition_matrix(corpus, tier, &trail_options(args.per_session, None), &norm)?;
        transitions.push(analyze(&format!("all-{}", tier.n_states()), all)?);
        if let Some((before, after)) = split(corpus, event_time) {
            let users = Some(common_users(&before, &after));
            for (name, half) in [("before", &before), ("after", &after)] {
                let m = build_transition_matrix(half, tier, &trail_options(args.per_session, users.clone()), &norm)
                    .with_context(|| format!("common users, {name} period, {} states", tier.n_states()))?;
                transitions.push(analyze(&format!("{name}-{}", tier.n_states()), m)?);
            }
        }
    }
    let mediators = mediator_periods(corpus, args.per_session, event_time, true, &norm)?;

    let report = Report::assemble(
        &loaded.raw,
        corpus,
        loaded.extraction.as_ref(),
        &norm,
        event_time,
        agreement,
        diversity,
        transitions,
        mediators,
    );
    let out = &args.logs.out;
    ensure_dir(out)?;
    write_json(out, "report.json", &report)?;
    let text = report.render();
    write_text(out, "report.txt", &text)?;
    print!("{text}");
    Ok(())
}

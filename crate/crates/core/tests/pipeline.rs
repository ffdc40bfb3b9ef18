//! End-to-end checks against the synthetic generator's bookkeeping.

use polarlens::diversity::{diversity_change, user_diversity, ChangeOptions, Weighting};
use polarlens::extraction::{extract, rank_queries};
use polarlens::synth::{generate_logs, SynthConfig, DISTRACTOR_QUERY, EXCLUDED_QUERY, EXPANSION_QUERY};
use polarlens::transitions::{build_transition_matrix, mediator_analysis, TrailOptions};
use polarlens::{common_users, Tier, UrlNormalizer};

fn max_error(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    p.iter()
        .flatten()
        .zip(q.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn ranking_follows_planted_frequencies() {
    let cfg = SynthConfig {
        users: 300,
        ..Default::default()
    };
    let out = generate_logs(&cfg).unwrap();
    let ex = extract(&out.dataset, &cfg.extraction_config()).unwrap();
    assert_eq!(ex.relevant_queries, out.bookkeeping.relevant_queries);
    assert!(ex.relevant_queries.contains(EXPANSION_QUERY));
    assert!(!ex.relevant_queries.contains(DISTRACTOR_QUERY));
    assert!(!ex.relevant_queries.contains(EXCLUDED_QUERY));

    let ranked = rank_queries(&out.dataset.queries, &ex.relevant_queries);
    let mut expected: Vec<(String, u64)> = out
        .bookkeeping
        .relevant_queries
        .iter()
        .map(|q| (q.clone(), out.bookkeeping.query_frequencies[q]))
        .collect();
    expected.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    assert_eq!(ranked, expected);
    assert_eq!(ranked[0].0, "gun control");
}

#[test]
fn estimation_error_shrinks_with_more_transitions() {
    let truth = SynthConfig::default().matrix;
    let norm = UrlNormalizer::default();
    let mut errors = Vec::new();
    for users in [40, 400, 4_000] {
        let cfg = SynthConfig {
            users,
            seed: 11,
            sessions_min: 2,
            sessions_max: 4,
            steps_min: 5,
            steps_max: 15,
            ..Default::default()
        };
        let out = generate_logs(&cfg).unwrap();
        let m = build_transition_matrix(&out.dataset, Tier::High, &TrailOptions::default(), &norm).unwrap();
        assert_eq!(m.counts.as_ref().unwrap(), &out.bookkeeping.transitions);
        errors.push((out.bookkeeping.total_transitions(), max_error(&m.probabilities, &truth)));
    }
    assert!(errors[0].0 >= 1_000 && errors[2].0 >= 100_000, "{errors:?}");
    assert!(errors[0].1 > errors[1].1 && errors[1].1 > errors[2].1, "{errors:?}");
    assert!(errors[2].1 <= 0.02);
}

#[test]
fn event_shock_changes_the_after_matrix() {
    let after = vec![
        vec![0.20, 0.30, 0.50],
        vec![0.10, 0.30, 0.60],
        vec![0.05, 0.25, 0.70],
    ];
    let cfg = SynthConfig {
        users: 3_000,
        seed: 3,
        after_matrix: Some(after.clone()),
        ..Default::default()
    };
    let out = generate_logs(&cfg).unwrap();
    let norm = UrlNormalizer::default();
    let (before, post) = out.dataset.split_by_event(cfg.event_time);
    let opts = TrailOptions::default();
    let mb = build_transition_matrix(&before, Tier::High, &opts, &norm).unwrap();
    let ma = build_transition_matrix(&post, Tier::High, &opts, &norm).unwrap();
    assert_eq!(mb.counts.as_ref().unwrap(), &out.bookkeeping.transitions_before);
    assert_eq!(ma.counts.as_ref().unwrap(), &out.bookkeeping.transitions_after);
    assert!(max_error(&mb.probabilities, &cfg.matrix) < 0.05);
    assert!(max_error(&ma.probabilities, &after) < 0.05);
    // The arrival multiplier puts most users after the event.
    assert!(out.bookkeeping.on_topic_after.users > out.bookkeeping.on_topic_before.users);
}

#[test]
fn downstream_analyses_run_on_synthetic_corpus() {
    let cfg = SynthConfig {
        users: 400,
        ..Default::default()
    };
    let out = generate_logs(&cfg).unwrap();
    let norm = UrlNormalizer::default();
    let ex = extract(&out.dataset, &cfg.extraction_config()).unwrap();
    let corpus = ex.corpus;

    let users = user_diversity(&corpus, 3, Tier::High, &norm, Weighting::Distinct);
    assert!(!users.is_empty());
    assert!(users.iter().all(|s| (0.0..=1.0).contains(&s.normalized)));

    let (before, after) = corpus.split_by_event(cfg.event_time);
    let change = diversity_change(&before, &after, &ChangeOptions::default(), &norm);
    let common = common_users(&before, &after);
    assert!(change.changes.iter().all(|c| common.contains(&c.user_id)));
    if let Some(s) = change.summary {
        assert!((s.pct_unchanged + s.pct_increased + s.pct_decreased - 100.0).abs() < 1e-9);
    }

    let med = mediator_analysis(&corpus, &TrailOptions::default(), &norm).unwrap();
    let c2r = med.control_to_rights;
    assert!(c2r.direct + c2r.indirect > 0);
    assert!(c2r.pct_direct.is_some_and(|p| (0.0..=100.0).contains(&p)));
}

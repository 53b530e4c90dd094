//! Reports shared by the HTTP endpoints and the CLI.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use arena_core::metrics::{evaluate_scorer, reports_from, AssetScores, MetricReport};
use arena_core::rating::track_generators;
use arena_core::validation::{
    combine_reports, reports_to_text, AnnotatorReport, ScoreValidationConfig, Thresholds, ValidatedVote,
};
use arena_core::{ArenaError, ArenaState, Dimension, Result, Track, VoteSource};
use serde::Serialize;

pub type GoldScores = BTreeMap<String, BTreeMap<Dimension, i32>>;

/// Reads a JSON map `asset_id -> dimension -> score`.
pub fn load_gold_scores(path: &Path) -> Result<GoldScores> {
    let text = std::fs::read_to_string(path).map_err(|e| ArenaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ArenaError::format(path, e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub thresholds: Thresholds,
    pub valid_votes: usize,
    pub unique_dimension_votes: usize,
    pub quarantined_votes: usize,
    /// Arena votes, kept without validation.
    pub arena_passthrough: usize,
    pub final_dimension_scores: usize,
    pub rank_violations: usize,
    pub quarantined_annotators: Vec<String>,
    pub annotators: Vec<AnnotatorReport>,
}

impl ValidationSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "valid votes: {}", self.valid_votes);
        let _ = writeln!(out, "unique dimension-votes: {}", self.unique_dimension_votes);
        let _ = writeln!(out, "quarantined votes: {}", self.quarantined_votes);
        let _ = writeln!(out, "arena votes (unvalidated): {}", self.arena_passthrough);
        let _ = writeln!(out, "final dimension-scores: {}", self.final_dimension_scores);
        let _ = writeln!(out, "rank violations: {}", self.rank_violations);
        let q = if self.quarantined_annotators.is_empty() {
            "-".to_string()
        } else {
            self.quarantined_annotators.join(",")
        };
        let _ = writeln!(out, "quarantined annotators: {q}\n");
        out + &reports_to_text(&self.annotators)
    }
}

pub fn validation_summary(state: &ArenaState, thresholds: &Thresholds, gold: &GoldScores) -> Result<ValidationSummary> {
    let votes = state.validate_votes(thresholds)?;
    let cfg = ScoreValidationConfig { thresholds: *thresholds, ..ScoreValidationConfig::default() };
    let scores = state.validate_scores(gold, &cfg)?;
    let annotators = combine_reports(&votes.reports, &scores.reports);
    Ok(ValidationSummary {
        thresholds: *thresholds,
        valid_votes: votes.valid_votes.len(),
        unique_dimension_votes: votes.unique_dimension_votes(),
        quarantined_votes: votes.quarantined.len(),
        arena_passthrough: votes.arena_passthrough,
        final_dimension_scores: scores.final_scores.len(),
        rank_violations: scores.rank_violations.len(),
        quarantined_annotators: annotators
            .iter()
            .filter(|r| r.is_quarantined())
            .map(|r| r.annotator_id.clone())
            .collect(),
        annotators,
    })
}

/// Cleaned expert votes on one track.
pub fn expert_votes(state: &ArenaState, thresholds: &Thresholds, track: Track) -> Result<Vec<ValidatedVote>> {
    let mut out = Vec::new();
    for v in state.validate_votes(thresholds)?.valid_votes {
        if v.source == VoteSource::ExpertPack && on_track(state, &v, track)? {
            out.push(v);
        }
    }
    Ok(out)
}

pub fn on_track(state: &ArenaState, v: &ValidatedVote, track: Track) -> Result<bool> {
    let pair = state
        .pairs
        .get(&v.pair_id)
        .ok_or_else(|| ArenaError::UnknownIds { kind: "pair", ids: vec![v.pair_id.clone()] })?;
    Ok(state.track_of(pair)? == track)
}

/// Alignment and Kendall tau tables, one row per scorer.
pub fn metric_reports(
    state: &ArenaState,
    scorers: &[(String, AssetScores)],
    votes: &[ValidatedVote],
    track: Track,
    binarized: bool,
) -> Result<(MetricReport, MetricReport)> {
    let gens = track_generators(&state.catalog, track);
    let mut evals = Vec::new();
    if !votes.is_empty() {
        for (name, scores) in scorers {
            evals.push(evaluate_scorer(name, scores, votes, &state.pairs, &state.catalog, &gens, binarized)?);
        }
    }
    Ok(reports_from(&evals))
}

pub fn metrics_to_text(alignment: &MetricReport, tau: &MetricReport) -> String {
    format!(
        "Pairwise rating alignment\n{}\nKendall tau ranking alignment\n{}",
        alignment.to_text(),
        tau.to_text()
    )
}

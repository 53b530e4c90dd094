//! Annotation cleaning.
//!
//! Comparison votes are checked three ways per annotator: strong conflicts
//! against curator gold keys, strong conflicts against the partner annotator on
//! cross-annotation packs, and the share of Tie/BothBad choices. Absolute
//! scores are checked for consistency with the annotator's own ranking, error
//! rate against gold scores, and conflicts between the two annotators of an
//! asset.
//!
//! Ratios are computed once over all raw records and compared against the
//! thresholds afterwards, so lowering a threshold can only add flags.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::model::{AbsoluteScore, ComparisonVote, Dimension, VoteChoice, VoteSource};
use crate::scheduler::{BattlePair, Pack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub gold_conflict: f64,
    pub cross_conflict: f64,
    pub tie_ratio: f64,
    pub score_error: f64,
    pub score_conflict: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            gold_conflict: 0.25,
            cross_conflict: 0.35,
            tie_ratio: 0.6,
            score_error: 0.3,
            score_conflict: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorFlag {
    GoldConflict,
    CrossConflict,
    LazyTie,
    ScoreError,
    ScoreConflict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorReport {
    pub annotator_id: String,
    pub gold_strong_conflict_ratio: f64,
    pub cross_strong_conflict_ratio: f64,
    pub tie_bothbad_ratio: f64,
    pub score_error_rate: f64,
    pub score_conflict_ratio: f64,
    pub flags: BTreeSet<AnnotatorFlag>,
    pub vote_count: usize,
    pub gold_comparisons: usize,
    pub cross_comparisons: usize,
    pub score_count: usize,
    pub rank_violations: usize,
}

impl AnnotatorReport {
    fn new(annotator_id: &str) -> Self {
        AnnotatorReport {
            annotator_id: annotator_id.to_string(),
            ..AnnotatorReport::default()
        }
    }

    pub fn is_quarantined(&self) -> bool {
        !self.flags.is_empty()
    }

    fn apply_thresholds(&mut self, t: &Thresholds) {
        let checks = [
            (self.gold_strong_conflict_ratio, t.gold_conflict, AnnotatorFlag::GoldConflict),
            (self.cross_strong_conflict_ratio, t.cross_conflict, AnnotatorFlag::CrossConflict),
            (self.tie_bothbad_ratio, t.tie_ratio, AnnotatorFlag::LazyTie),
            (self.score_error_rate, t.score_error, AnnotatorFlag::ScoreError),
            (self.score_conflict_ratio, t.score_conflict, AnnotatorFlag::ScoreConflict),
        ];
        for (ratio, limit, flag) in checks {
            if ratio > limit {
                self.flags.insert(flag);
            } else {
                self.flags.remove(&flag);
            }
        }
    }
}

/// Tab-separated per-annotator table: counts, the five ratios and flags.
pub fn reports_to_text(reports: &[AnnotatorReport]) -> String {
    let mut s = String::from(
        "annotator\tvotes\tgold_conflict\tcross_conflict\ttie_bothbad\tscores\tscore_error\tscore_conflict\trank_violations\tflags\n",
    );
    for r in reports {
        let flags: Vec<String> = r
            .flags
            .iter()
            .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            .collect();
        s.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:.4}\t{:.4}\t{}\t{}\n",
            r.annotator_id,
            r.vote_count,
            r.gold_strong_conflict_ratio,
            r.cross_strong_conflict_ratio,
            r.tie_bothbad_ratio,
            r.score_count,
            r.score_error_rate,
            r.score_conflict_ratio,
            r.rank_violations,
            if flags.is_empty() { "-".to_string() } else { flags.join(",") }
        ));
    }
    s
}

/// Opposing directional choices on the same pair and dimension.
pub fn is_strong_conflict(a: VoteChoice, b: VoteChoice) -> bool {
    matches!(
        (a, b),
        (VoteChoice::LeftBetter, VoteChoice::RightBetter)
            | (VoteChoice::RightBetter, VoteChoice::LeftBetter)
    )
}

/// Merges two annotators' choices for one dimension: agreement is kept, a
/// directional choice beats Tie/BothBad, and opposing or mixed non-directional
/// choices become Tie.
pub fn resolve_choice(a: VoteChoice, b: VoteChoice) -> VoteChoice {
    use VoteChoice::*;
    match (a, b) {
        _ if a == b => a,
        (LeftBetter, RightBetter) | (RightBetter, LeftBetter) => Tie,
        (d, Tie | BothBad) | (Tie | BothBad, d) if d.is_directional() => d,
        _ => Tie,
    }
}

pub fn resolve_cross_votes(
    a: &BTreeMap<Dimension, VoteChoice>,
    b: &BTreeMap<Dimension, VoteChoice>,
) -> Result<BTreeMap<Dimension, VoteChoice>> {
    Dimension::ALL
        .iter()
        .map(|d| match (a.get(d), b.get(d)) {
            (Some(&x), Some(&y)) => Ok((*d, resolve_choice(x, y))),
            _ => Err(ArenaError::invalid(d.as_str(), "both votes must cover every dimension")),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedVote {
    pub seq_no: u64,
    pub vote: ComparisonVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedScore {
    pub seq_no: u64,
    pub score: AbsoluteScore,
}

/// One unique vote per pair after cleaning; feeds the rating replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedVote {
    pub seq_no: u64,
    pub pair_id: String,
    pub choices: [VoteChoice; 5],
    pub source: VoteSource,
    pub annotators: Vec<String>,
}

impl ValidatedVote {
    /// Wraps a raw vote without any cleaning.
    pub fn from_raw(r: &RecordedVote) -> Self {
        ValidatedVote {
            seq_no: r.seq_no,
            pair_id: r.vote.pair_id.clone(),
            choices: r.vote.choice_array(),
            source: r.vote.source,
            annotators: vec![r.vote.annotator_id.clone()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VoteValidation {
    /// Unique votes, ordered by the sequence number of their first record.
    pub valid_votes: Vec<ValidatedVote>,
    /// Raw expert votes set aside because their annotator was flagged.
    pub quarantined: Vec<RecordedVote>,
    pub reports: Vec<AnnotatorReport>,
    /// Arena votes are passed through unchanged; pack-level checks do not apply to them.
    pub arena_passthrough: usize,
}

impl VoteValidation {
    pub fn unique_dimension_votes(&self) -> usize {
        self.valid_votes.len() * Dimension::COUNT
    }
}

#[derive(Default)]
struct Tally {
    hits: usize,
    total: usize,
}

impl Tally {
    fn add(&mut self, a: VoteChoice, b: VoteChoice) {
        if a.is_directional() && b.is_directional() {
            self.total += 1;
            if a != b {
                self.hits += 1;
            }
        }
    }

    fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

/// Cleans expert votes. Strong-conflict ratios are taken over dimension
/// comparisons where both sides are directional; the tie ratio is over all of
/// an annotator's dimension-votes.
pub fn validate_votes(
    votes: &[RecordedVote],
    pairs: &BTreeMap<String, BattlePair>,
    packs: &BTreeMap<String, Pack>,
    gold_keys: &BTreeMap<String, [VoteChoice; 5]>,
    thresholds: &Thresholds,
) -> Result<VoteValidation> {
    let unknown: BTreeSet<&str> = votes
        .iter()
        .filter(|v| !pairs.contains_key(&v.vote.pair_id))
        .map(|v| v.vote.pair_id.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(ArenaError::UnknownIds {
            kind: "pair",
            ids: unknown.into_iter().map(String::from).collect(),
        });
    }
    let unkeyed: Vec<String> = packs
        .values()
        .flat_map(|p| p.gold_pair_ids.iter())
        .filter(|id| !gold_keys.contains_key(*id))
        .cloned()
        .collect();
    if !unkeyed.is_empty() {
        return Err(ArenaError::Config(format!(
            "gold pairs without answer keys: {}",
            unkeyed.join(", ")
        )));
    }
    for v in votes {
        v.vote.validate()?;
    }

    let mut ordered: Vec<&RecordedVote> = votes.iter().collect();
    ordered.sort_by_key(|v| v.seq_no);
    let (expert, arena): (Vec<&RecordedVote>, Vec<&RecordedVote>) = ordered
        .into_iter()
        .partition(|v| v.vote.source == VoteSource::ExpertPack);

    let is_cross = |pair_id: &str| {
        pairs[pair_id]
            .pack_id
            .as_ref()
            .and_then(|id| packs.get(id))
            .is_some_and(|p| p.flags.is_cross_annotation)
    };

    let mut by_pair: BTreeMap<&str, Vec<&RecordedVote>> = BTreeMap::new();
    for v in &expert {
        by_pair.entry(v.vote.pair_id.as_str()).or_default().push(v);
    }

    let mut gold: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut cross: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut lazy: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();

    for v in &expert {
        let who = v.vote.annotator_id.as_str();
        let choices = v.vote.choice_array();
        *counts.entry(who).or_default() += 1;
        let l = lazy.entry(who).or_default();
        for c in choices {
            l.total += 1;
            if !c.is_directional() {
                l.hits += 1;
            }
        }
        if let Some(key) = gold_keys.get(&v.vote.pair_id) {
            let g = gold.entry(who).or_default();
            for (c, k) in choices.iter().zip(key) {
                g.add(*c, *k);
            }
        }
        if is_cross(&v.vote.pair_id) {
            let x = cross.entry(who).or_default();
            for other in &by_pair[v.vote.pair_id.as_str()] {
                if other.vote.annotator_id == who {
                    continue;
                }
                for (a, b) in choices.iter().zip(other.vote.choice_array()) {
                    x.add(*a, b);
                }
            }
        }
    }

    let mut reports: Vec<AnnotatorReport> = counts
        .iter()
        .map(|(who, &n)| {
            let mut r = AnnotatorReport::new(who);
            r.vote_count = n;
            if let Some(t) = gold.get(who) {
                r.gold_strong_conflict_ratio = t.ratio();
                r.gold_comparisons = t.total;
            }
            if let Some(t) = cross.get(who) {
                r.cross_strong_conflict_ratio = t.ratio();
                r.cross_comparisons = t.total;
            }
            r.tie_bothbad_ratio = lazy[who].ratio();
            r.apply_thresholds(thresholds);
            r
        })
        .collect();
    reports.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));

    let flagged: BTreeSet<&str> = reports
        .iter()
        .filter(|r| r.is_quarantined())
        .map(|r| r.annotator_id.as_str())
        .collect();

    let mut quarantined = Vec::new();
    let mut merged: BTreeMap<&str, ValidatedVote> = BTreeMap::new();
    for v in &expert {
        if flagged.contains(v.vote.annotator_id.as_str()) {
            quarantined.push((*v).clone());
            continue;
        }
        match merged.get_mut(v.vote.pair_id.as_str()) {
            None => {
                merged.insert(v.vote.pair_id.as_str(), ValidatedVote::from_raw(v));
            }
            Some(m) => {
                let other = v.vote.choice_array();
                for (c, o) in m.choices.iter_mut().zip(other) {
                    *c = resolve_choice(*c, o);
                }
                if !m.annotators.contains(&v.vote.annotator_id) {
                    m.annotators.push(v.vote.annotator_id.clone());
                }
            }
        }
    }

    let mut valid_votes: Vec<ValidatedVote> = merged.into_values().collect();
    valid_votes.extend(arena.iter().map(|v| ValidatedVote::from_raw(v)));
    valid_votes.sort_by_key(|v| v.seq_no);

    Ok(VoteValidation {
        valid_votes,
        quarantined,
        reports,
        arena_passthrough: arena.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreValidationConfig {
    /// Allowed absolute deviation on the raw integer scale.
    pub deviation_threshold: i32,
    pub thresholds: Thresholds,
    /// Weights of the first and second surviving record of an asset.
    pub record_weights: (f64, f64),
}

impl Default for ScoreValidationConfig {
    fn default() -> Self {
        ScoreValidationConfig {
            deviation_threshold: 1,
            thresholds: Thresholds::default(),
            record_weights: (0.5, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankViolation {
    pub annotator_id: String,
    pub dimension: Dimension,
    /// Asset the annotator ranked higher...
    pub ranked_higher: String,
    /// ...but scored strictly lower than this one.
    pub ranked_lower: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalScore {
    pub asset_id: String,
    pub dimension: Dimension,
    pub raw: f64,
    pub normalized: f64,
    pub records: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreValidation {
    pub final_scores: Vec<FinalScore>,
    pub rank_violations: Vec<RankViolation>,
    pub reports: Vec<AnnotatorReport>,
}

impl ScoreValidation {
    /// Final normalized scores as `asset -> [dimension]`; missing entries are `None`.
    pub fn by_asset(&self) -> BTreeMap<String, [Option<f64>; 5]> {
        let mut out: BTreeMap<String, [Option<f64>; 5]> = BTreeMap::new();
        for f in &self.final_scores {
            out.entry(f.asset_id.clone()).or_insert([None; 5])[f.dimension.index()] =
                Some(f.normalized);
        }
        out
    }
}

pub fn validate_scores(
    scores: &[RecordedScore],
    gold_scores: &BTreeMap<String, BTreeMap<Dimension, i32>>,
    config: &ScoreValidationConfig,
) -> Result<ScoreValidation> {
    let mut ordered: Vec<&RecordedScore> = scores.iter().collect();
    ordered.sort_by_key(|s| s.seq_no);
    for s in &ordered {
        s.score.validate(&crate::model::ScoreRange::DEFAULT_ALLOWED)?;
    }
    let dev = config.deviation_threshold;

    // Latest record per (annotator, asset).
    let mut latest: BTreeMap<(&str, &str), &RecordedScore> = BTreeMap::new();
    for s in &ordered {
        latest.insert((s.score.annotator_id.as_str(), s.score.asset_id.as_str()), s);
    }

    let mut violations: BTreeSet<(String, Dimension, String, String)> = BTreeSet::new();
    for s in latest.values() {
        let who = s.score.annotator_id.as_str();
        for (&d, ranking) in &s.score.rank_context {
            for (i, hi) in ranking.iter().enumerate() {
                let Some(hs) = latest.get(&(who, hi.as_str())) else { continue };
                for lo in &ranking[i + 1..] {
                    let Some(ls) = latest.get(&(who, lo.as_str())) else { continue };
                    if hs.score.raw_scores[&d] < ls.score.raw_scores[&d] {
                        violations.insert((who.to_string(), d, hi.clone(), lo.clone()));
                    }
                }
            }
        }
    }
    let bad_cells: BTreeSet<(&str, &str, Dimension)> = violations
        .iter()
        .flat_map(|(who, d, hi, lo)| {
            [(who.as_str(), hi.as_str(), *d), (who.as_str(), lo.as_str(), *d)]
        })
        .collect();

    let mut by_asset: BTreeMap<&str, Vec<&RecordedScore>> = BTreeMap::new();
    for s in latest.values() {
        by_asset.entry(s.score.asset_id.as_str()).or_default().push(s);
    }
    for recs in by_asset.values_mut() {
        recs.sort_by_key(|s| s.seq_no);
    }

    let mut error: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut conflict: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let off = |a: i32, b: i32| (a - b).abs() > dev;
    for s in latest.values() {
        let who = s.score.annotator_id.as_str();
        *counts.entry(who).or_default() += 1;
        if let Some(g) = gold_scores.get(&s.score.asset_id) {
            let t = error.entry(who).or_default();
            for (d, &gv) in g {
                if let Some(&v) = s.score.raw_scores.get(d) {
                    t.total += 1;
                    t.hits += usize::from(off(v, gv));
                }
            }
        }
        for other in &by_asset[s.score.asset_id.as_str()] {
            if other.score.annotator_id == who {
                continue;
            }
            let t = conflict.entry(who).or_default();
            for d in Dimension::ALL {
                t.total += 1;
                t.hits += usize::from(off(s.score.raw_scores[&d], other.score.raw_scores[&d]));
            }
        }
    }

    let mut rank_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (who, ..) in &violations {
        *rank_counts.entry(who.as_str()).or_default() += 1;
    }

    let mut reports: Vec<AnnotatorReport> = counts
        .iter()
        .map(|(who, &n)| {
            let mut r = AnnotatorReport::new(who);
            r.score_count = n;
            r.score_error_rate = error.get(who).map_or(0.0, Tally::ratio);
            r.score_conflict_ratio = conflict.get(who).map_or(0.0, Tally::ratio);
            r.rank_violations = rank_counts.get(who).copied().unwrap_or(0);
            r.apply_thresholds(&config.thresholds);
            r
        })
        .collect();
    reports.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
    let flagged: BTreeSet<&str> = reports
        .iter()
        .filter(|r| r.is_quarantined())
        .map(|r| r.annotator_id.as_str())
        .collect();

    let (w1, w2) = config.record_weights;
    let mut final_scores = Vec::new();
    for (asset, recs) in &by_asset {
        for d in Dimension::ALL {
            let surviving: Vec<&&RecordedScore> = recs
                .iter()
                .filter(|s| {
                    let who = s.score.annotator_id.as_str();
                    !flagged.contains(who) && !bad_cells.contains(&(who, *asset, d))
                })
                .take(2)
                .collect();
            let (raw, norm) = match surviving.as_slice() {
                [] => continue,
                [only] => (f64::from(only.score.raw_scores[&d]), only.score.normalized(d)?),
                [a, b] => {
                    let total = w1 + w2;
                    let raw = (w1 * f64::from(a.score.raw_scores[&d])
                        + w2 * f64::from(b.score.raw_scores[&d]))
                        / total;
                    let norm = (w1 * a.score.normalized(d)? + w2 * b.score.normalized(d)?) / total;
                    (raw, norm)
                }
                _ => unreachable!(),
            };
            final_scores.push(FinalScore {
                asset_id: asset.to_string(),
                dimension: d,
                raw,
                normalized: norm,
                records: surviving.len(),
            });
        }
    }

    Ok(ScoreValidation {
        final_scores,
        rank_violations: violations
            .into_iter()
            .map(|(annotator_id, dimension, ranked_higher, ranked_lower)| RankViolation {
                annotator_id,
                dimension,
                ranked_higher,
                ranked_lower,
            })
            .collect(),
        reports,
    })
}

/// Joins vote and score reports for the same annotators.
pub fn combine_reports(
    votes: &[AnnotatorReport],
    scores: &[AnnotatorReport],
) -> Vec<AnnotatorReport> {
    let mut out: BTreeMap<String, AnnotatorReport> =
        votes.iter().map(|r| (r.annotator_id.clone(), r.clone())).collect();
    for s in scores {
        let r = out
            .entry(s.annotator_id.clone())
            .or_insert_with(|| AnnotatorReport::new(&s.annotator_id));
        r.score_error_rate = s.score_error_rate;
        r.score_conflict_ratio = s.score_conflict_ratio;
        r.score_count = s.score_count;
        r.rank_violations = s.rank_violations;
        r.flags.extend(s.flags.iter().copied());
    }
    out.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ScoreRange, VoteChoice::*};
    use crate::scheduler::PackFlags;

    #[test]
    fn resolve_table() {
        assert_eq!(resolve_choice(LeftBetter, LeftBetter), LeftBetter);
        assert_eq!(resolve_choice(LeftBetter, RightBetter), Tie);
        assert_eq!(resolve_choice(Tie, RightBetter), RightBetter);
        assert_eq!(resolve_choice(BothBad, Tie), Tie);
        assert_eq!(resolve_choice(BothBad, BothBad), BothBad);
        assert_eq!(resolve_choice(BothBad, LeftBetter), LeftBetter);
    }

    #[test]
    fn resolve_is_symmetric_and_mirror_equivariant() {
        for a in VoteChoice::ALL {
            for b in VoteChoice::ALL {
                assert_eq!(resolve_choice(a, b), resolve_choice(b, a));
                assert_eq!(
                    resolve_choice(a.mirrored(), b.mirrored()),
                    resolve_choice(a, b).mirrored()
                );
            }
        }
    }

    /// For any vote distribution with P(Left) = P(Right), the merged vote's
    /// expected Elo outcome stays at one half (exact enumeration of all 16
    /// choice pairs).
    #[test]
    fn merge_keeps_elo_expectation_symmetric() {
        for (pd, pt, pb) in [(0.3, 0.2, 0.2), (0.45, 0.05, 0.05), (0.1, 0.5, 0.3), (0.0, 0.6, 0.4)] {
            let prob = |c: VoteChoice| match c {
                LeftBetter | RightBetter => pd,
                Tie => pt,
                BothBad => pb,
            };
            let mut expected = 0.0;
            for a in VoteChoice::ALL {
                for b in VoteChoice::ALL {
                    expected += prob(a) * prob(b) * resolve_choice(a, b).left_outcome();
                }
            }
            let mass: f64 = VoteChoice::ALL.iter().map(|&c| prob(c)).sum::<f64>().powi(2);
            assert!((expected / mass - 0.5).abs() < 1e-12);
        }
    }

    fn fixture(cross: bool, gold: &[&str]) -> (BTreeMap<String, BattlePair>, BTreeMap<String, Pack>) {
        let pairs: BTreeMap<String, BattlePair> = (0..30)
            .map(|i| {
                let id = format!("pr{i:02}");
                (
                    id.clone(),
                    BattlePair {
                        pair_id: id,
                        prompt_id: "p".into(),
                        left_asset_id: "l".into(),
                        right_asset_id: "r".into(),
                        pack_id: Some("pk".into()),
                    },
                )
            })
            .collect();
        let pack = Pack {
            pack_id: "pk".into(),
            pair_ids: pairs.keys().cloned().collect(),
            flags: PackFlags { is_cross_annotation: cross, is_short: false },
            gold_pair_ids: gold.iter().map(|s| s.to_string()).collect(),
        };
        (pairs, [("pk".to_string(), pack)].into_iter().collect())
    }

    fn rv(seq: u64, pair: &str, who: &str, c: [VoteChoice; 5]) -> RecordedVote {
        RecordedVote {
            seq_no: seq,
            vote: ComparisonVote::new(pair, who, c, seq, VoteSource::ExpertPack),
        }
    }

    #[test]
    fn gold_agreement_and_lazy_tie() {
        let (pairs, packs) = fixture(false, &["pr00", "pr01"]);
        let keys: BTreeMap<String, [VoteChoice; 5]> = [
            ("pr00".to_string(), [LeftBetter; 5]),
            ("pr01".to_string(), [RightBetter; 5]),
        ]
        .into_iter()
        .collect();
        let mut votes = vec![
            rv(1, "pr00", "good", [LeftBetter; 5]),
            rv(2, "pr01", "good", [RightBetter; 5]),
        ];
        for (i, p) in pairs.keys().enumerate() {
            votes.push(rv(10 + i as u64, p, "lazy", [Tie; 5]));
        }
        let out = validate_votes(&votes, &pairs, &packs, &keys, &Thresholds::default()).unwrap();
        let good = out.reports.iter().find(|r| r.annotator_id == "good").unwrap();
        assert_eq!(good.gold_strong_conflict_ratio, 0.0);
        assert!(good.flags.is_empty());
        let lazy = out.reports.iter().find(|r| r.annotator_id == "lazy").unwrap();
        assert_eq!(lazy.tie_bothbad_ratio, 1.0);
        assert!(lazy.flags.contains(&AnnotatorFlag::LazyTie));
        assert_eq!(out.quarantined.len(), 30);
        assert_eq!(out.valid_votes.len(), 2);
    }

    #[test]
    fn gold_pair_without_key_is_config_error() {
        let (pairs, packs) = fixture(false, &["pr03"]);
        let err = validate_votes(&[], &pairs, &packs, &BTreeMap::new(), &Thresholds::default());
        assert!(matches!(err, Err(ArenaError::Config(_))));
    }

    #[test]
    fn unknown_pair_rejected() {
        let (pairs, packs) = fixture(false, &[]);
        let votes = [rv(1, "nope", "a", [Tie; 5])];
        assert!(validate_votes(&votes, &pairs, &packs, &BTreeMap::new(), &Thresholds::default())
            .is_err());
    }

    #[test]
    fn cross_pack_dedup_and_conflict() {
        let (pairs, packs) = fixture(true, &[]);
        let mut votes = Vec::new();
        let mut seq = 0;
        for p in pairs.keys() {
            seq += 1;
            votes.push(rv(seq, p, "a", [LeftBetter, LeftBetter, Tie, RightBetter, BothBad]));
            seq += 1;
            votes.push(rv(seq, p, "b", [LeftBetter, RightBetter, RightBetter, Tie, Tie]));
        }
        let lenient = Thresholds { cross_conflict: 1.0, ..Thresholds::default() };
        let out = validate_votes(&votes, &pairs, &packs, &BTreeMap::new(), &lenient).unwrap();
        assert_eq!(out.valid_votes.len(), 30);
        assert_eq!(out.unique_dimension_votes(), 150);
        assert_eq!(out.valid_votes[0].choices, [LeftBetter, Tie, RightBetter, RightBetter, Tie]);
        assert_eq!(out.valid_votes[0].annotators, ["a", "b"]);
        // Two directional comparisons per pair (dims 0 and 1); one is a strong conflict.
        let a = &out.reports[0];
        assert_eq!(a.cross_comparisons, 60);
        assert!((a.cross_strong_conflict_ratio - 0.5).abs() < 1e-12);
        assert!(a.flags.is_empty());
        let strict =
            validate_votes(&votes, &pairs, &packs, &BTreeMap::new(), &Thresholds::default()).unwrap();
        assert!(strict.reports[0].flags.contains(&AnnotatorFlag::CrossConflict));
        assert!(strict.valid_votes.is_empty());
        assert_eq!(strict.quarantined.len(), 60);
    }

    #[test]
    fn lowering_threshold_never_unflags() {
        let (pairs, packs) = fixture(true, &[]);
        let mut votes = Vec::new();
        for (i, p) in pairs.keys().enumerate() {
            let c = if i % 3 == 0 { [Tie; 5] } else { [LeftBetter; 5] };
            votes.push(rv(2 * i as u64 + 1, p, "a", c));
            votes.push(rv(2 * i as u64 + 2, p, "b", [RightBetter, LeftBetter, Tie, Tie, BothBad]));
        }
        let mut prev: Option<BTreeSet<String>> = None;
        for step in (0..=10).rev() {
            let t = step as f64 / 10.0;
            let th = Thresholds {
                gold_conflict: t,
                cross_conflict: t,
                tie_ratio: t,
                score_error: t,
                score_conflict: t,
            };
            let out = validate_votes(&votes, &pairs, &packs, &BTreeMap::new(), &th).unwrap();
            let flagged: BTreeSet<String> = out
                .reports
                .iter()
                .filter(|r| r.is_quarantined())
                .map(|r| r.annotator_id.clone())
                .collect();
            if let Some(p) = &prev {
                assert!(p.is_subset(&flagged));
            }
            prev = Some(flagged);
        }
    }

    fn score(seq: u64, asset: &str, who: &str, s: [i32; 5]) -> RecordedScore {
        RecordedScore {
            seq_no: seq,
            score: AbsoluteScore {
                asset_id: asset.into(),
                annotator_id: who.into(),
                raw_scores: Dimension::ALL.into_iter().zip(s).collect(),
                ranges: Dimension::ALL.iter().map(|d| (*d, ScoreRange::new(0, 9))).collect(),
                rank_context: BTreeMap::new(),
                timestamp: seq,
            },
        }
    }

    #[test]
    fn two_records_merge_to_mean() {
        let scores = [score(1, "x", "a", [7, 3, 8, 1, 9]), score(2, "x", "b", [8, 3, 7, 2, 9])];
        let out = validate_scores(&scores, &BTreeMap::new(), &ScoreValidationConfig::default())
            .unwrap();
        let raw: Vec<f64> = out.final_scores.iter().map(|f| f.raw).collect();
        assert_eq!(raw, [7.5, 3.0, 7.5, 1.5, 9.0]);
        assert!((out.final_scores[0].normalized - 7.5 / 9.0).abs() < 1e-12);
        assert!(out.reports.iter().all(|r| r.flags.is_empty()));
    }

    #[test]
    fn rank_contradiction_flagged() {
        let mut x = score(1, "X", "a", [8, 5, 5, 5, 5]);
        let y = score(2, "Y", "a", [5, 5, 5, 5, 5]);
        x.score
            .rank_context
            .insert(Dimension::GeoPlausibility, vec!["Y".into(), "X".into()]);
        x.score.rank_context.insert(Dimension::GeoDetails, vec!["Y".into(), "X".into()]);
        let out = validate_scores(&[x, y], &BTreeMap::new(), &ScoreValidationConfig::default())
            .unwrap();
        assert_eq!(
            out.rank_violations,
            [RankViolation {
                annotator_id: "a".into(),
                dimension: Dimension::GeoPlausibility,
                ranked_higher: "Y".into(),
                ranked_lower: "X".into(),
            }]
        );
        assert_eq!(out.reports[0].rank_violations, 1);
        // The contradicted cells are dropped from the final table.
        assert_eq!(out.final_scores.len(), 8);
    }

    #[test]
    fn gold_error_rate_uses_raw_deviation() {
        let gold: BTreeMap<String, BTreeMap<Dimension, i32>> = [(
            "g".to_string(),
            Dimension::ALL.into_iter().zip([5, 5, 5, 5, 5]).collect(),
        )]
        .into_iter()
        .collect();
        let scores = [score(1, "g", "a", [6, 4, 5, 7, 2]), score(2, "g", "b", [5, 5, 5, 5, 5])];
        let out = validate_scores(&scores, &gold, &ScoreValidationConfig::default()).unwrap();
        let a = out.reports.iter().find(|r| r.annotator_id == "a").unwrap();
        assert!((a.score_error_rate - 0.4).abs() < 1e-12);
        assert!(a.flags.contains(&AnnotatorFlag::ScoreError));
        assert!((a.score_conflict_ratio - 0.4).abs() < 1e-12);
    }
}

//! Scorer vs human agreement: softmax win probability, pairwise alignment,
//! Kendall's tau over leaderboards.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::ingest::Catalog;
use crate::model::{Dimension, VoteChoice};
use crate::rating::{rank_from_table, BothBadPolicy, EloTable, RankBy};
use crate::scheduler::{pair_generators, BattlePair};
use crate::validation::ValidatedVote;

/// `exp(l) / (exp(l) + exp(r))`, shifted by the max so large scores do not overflow.
pub fn win_probability(s_left: f64, s_right: f64) -> Result<f64> {
    if !(s_left.is_finite() && s_right.is_finite()) {
        return Err(ArenaError::invalid("score", "scores must be finite"));
    }
    Ok(softmax_left(s_left, s_right))
}

pub(crate) fn softmax_left(s_left: f64, s_right: f64) -> f64 {
    let m = s_left.max(s_right);
    let l = (s_left - m).exp();
    let r = (s_right - m).exp();
    l / (l + r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattlePrediction {
    pub pair_id: String,
    pub dimension: Dimension,
    pub p_left: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanJudgment {
    pub pair_id: String,
    pub dimension: Dimension,
    pub q_left: f64,
}

pub fn judgment_value(c: VoteChoice) -> f64 {
    match c {
        VoteChoice::LeftBetter => 1.0,
        VoteChoice::RightBetter => 0.0,
        VoteChoice::Tie | VoteChoice::BothBad => 0.5,
    }
}

pub fn judgments_from_votes(votes: &[ValidatedVote]) -> Vec<HumanJudgment> {
    votes
        .iter()
        .flat_map(|v| {
            Dimension::ALL.into_iter().map(move |d| HumanJudgment {
                pair_id: v.pair_id.clone(),
                dimension: d,
                q_left: judgment_value(v.choices[d.index()]),
            })
        })
        .collect()
}

/// Mean of `p q + (1 - p)(1 - q)` over matching (pair, dimension) keys.
pub fn pairwise_alignment(preds: &[BattlePrediction], judgments: &[HumanJudgment]) -> Result<f64> {
    if preds.is_empty() {
        return Err(ArenaError::invalid("predictions", "no predictions to evaluate"));
    }
    let mut p: BTreeMap<(&str, Dimension), f64> = BTreeMap::new();
    for x in preds {
        if !(0.0..=1.0).contains(&x.p_left) {
            return Err(ArenaError::invalid(
                "p_left",
                format!("{} on pair '{}' is outside [0, 1]", x.p_left, x.pair_id),
            ));
        }
        if p.insert((&x.pair_id, x.dimension), x.p_left).is_some() {
            return Err(ArenaError::Duplicate { kind: "prediction", id: x.pair_id.clone() });
        }
    }
    let mut q: BTreeMap<(&str, Dimension), f64> = BTreeMap::new();
    for x in judgments {
        if ![0.0, 0.5, 1.0].contains(&x.q_left) {
            return Err(ArenaError::invalid(
                "q_left",
                format!("{} on pair '{}' is not one of 0, 0.5, 1", x.q_left, x.pair_id),
            ));
        }
        if q.insert((&x.pair_id, x.dimension), x.q_left).is_some() {
            return Err(ArenaError::Duplicate { kind: "judgment", id: x.pair_id.clone() });
        }
    }
    let missing: BTreeSet<String> = p
        .keys()
        .filter(|k| !q.contains_key(k))
        .chain(q.keys().filter(|k| !p.contains_key(k)))
        .map(|(id, _)| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ArenaError::UnknownIds { kind: "pair", ids: missing.into_iter().collect() });
    }
    let total: f64 = p.iter().map(|(k, &pi)| pi * q[k] + (1.0 - pi) * (1.0 - q[k])).sum();
    Ok(total / p.len() as f64)
}

/// Kendall tau-a between two strict rankings of the same items, in O(n log n).
pub fn kendall_tau<T: Eq + Hash>(rank_a: &[T], rank_b: &[T]) -> Result<f64> {
    let n = rank_a.len();
    if n < 2 {
        return Err(ArenaError::invalid("ranking", "need at least two items"));
    }
    let pos: HashMap<&T, usize> = rank_b.iter().enumerate().map(|(i, x)| (x, i)).collect();
    if pos.len() != rank_b.len() || rank_b.len() != n {
        return Err(ArenaError::invalid("ranking", "rankings differ in length or repeat items"));
    }
    let mut seq = Vec::with_capacity(n);
    let mut seen = BTreeSet::new();
    for x in rank_a {
        let &i = pos
            .get(x)
            .ok_or_else(|| ArenaError::invalid("ranking", "rankings cover different items"))?;
        if !seen.insert(i) {
            return Err(ArenaError::invalid("ranking", "rankings differ in length or repeat items"));
        }
        seq.push(i);
    }
    let discordant = count_inversions(&mut seq);
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((pairs - 2.0 * discordant as f64) / pairs)
}

fn count_inversions(v: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            merged.push(v[i]);
            i += 1;
        } else {
            inv += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    inv
}

/// Per-asset, per-dimension scalar scores from any scorer.
pub type AssetScores = BTreeMap<String, BTreeMap<Dimension, f64>>;

/// A single score or one score per rendered view; views are averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ViewScores {
    Single(f64),
    Views(Vec<f64>),
}

impl ViewScores {
    pub fn value(&self) -> Option<f64> {
        match self {
            ViewScores::Single(v) => Some(*v),
            ViewScores::Views(v) if v.is_empty() => None,
            ViewScores::Views(v) => Some(v.iter().sum::<f64>() / v.len() as f64),
        }
    }
}

/// External scorer output:
/// `{"version": 1, "scorer": "name", "scores": {"<asset_id>": {"<dimension>": 0.3 | [v1, v2, ...]}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerFile {
    pub version: u32,
    pub scorer: String,
    pub scores: BTreeMap<String, BTreeMap<Dimension, ViewScores>>,
}

impl ScorerFile {
    pub fn from_scores(scorer: &str, scores: &AssetScores) -> Self {
        ScorerFile {
            version: 1,
            scorer: scorer.to_string(),
            scores: scores
                .iter()
                .map(|(a, m)| (a.clone(), m.iter().map(|(d, v)| (*d, ViewScores::Single(*v))).collect()))
                .collect(),
        }
    }

    pub fn asset_scores(&self) -> Result<AssetScores> {
        let mut out = AssetScores::new();
        for (asset, dims) in &self.scores {
            let mut m = BTreeMap::new();
            for (d, v) in dims {
                let x = v
                    .value()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| ArenaError::invalid(d.as_str(), format!("asset '{asset}' has no finite score")))?;
                m.insert(*d, x);
            }
            out.insert(asset.clone(), m);
        }
        Ok(out)
    }
}

pub fn load_scorer_file(path: impl AsRef<Path>) -> Result<ScorerFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ArenaError::io(path, e))?;
    let f: ScorerFile =
        serde_json::from_slice(&bytes).map_err(|e| ArenaError::format(path, e.to_string()))?;
    if f.version != 1 {
        return Err(ArenaError::format(path, format!("unsupported scorer file version {}", f.version)));
    }
    Ok(f)
}

pub fn metric_to_predictions(
    scores: &AssetScores,
    pairs: &[BattlePair],
    dims: &[Dimension],
) -> Result<Vec<BattlePrediction>> {
    let get = |asset: &str, d: Dimension| {
        scores.get(asset).and_then(|m| m.get(&d)).copied().ok_or_else(|| {
            ArenaError::invalid(d.as_str(), format!("no score for asset '{asset}'"))
        })
    };
    let mut out = Vec::with_capacity(pairs.len() * dims.len());
    for p in pairs {
        for &d in dims {
            out.push(BattlePrediction {
                pair_id: p.pair_id.clone(),
                dimension: d,
                p_left: win_probability(get(&p.left_asset_id, d)?, get(&p.right_asset_id, d)?)?,
            });
        }
    }
    Ok(out)
}

/// Rounds each prediction to a hard outcome, 0.5 at exact equality.
pub fn binarize(preds: &[BattlePrediction]) -> Vec<BattlePrediction> {
    preds
        .iter()
        .map(|p| BattlePrediction {
            p_left: if p.p_left > 0.5 {
                1.0
            } else if p.p_left < 0.5 {
                0.0
            } else {
                0.5
            },
            ..p.clone()
        })
        .collect()
}

/// Elo table driven by a scorer's binarized predictions, in the given order.
pub fn scorer_elo(
    preds: &[BattlePrediction],
    pairs: &BTreeMap<String, BattlePair>,
    catalog: &Catalog,
    generators: &[String],
) -> Result<EloTable> {
    let mut table = EloTable::with_generators(generators.iter().cloned());
    for p in binarize(preds) {
        let pair = pairs.get(&p.pair_id).ok_or_else(|| ArenaError::UnknownIds {
            kind: "pair",
            ids: vec![p.pair_id.clone()],
        })?;
        let (l, r) = pair_generators(pair, catalog)?;
        table.update(l, r, p.dimension, p.p_left)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    PairwiseAlignment,
    KendallTau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub values: BTreeMap<Dimension, f64>,
    pub average: f64,
}

impl MetricRow {
    fn new(method: &str, values: BTreeMap<Dimension, f64>) -> Self {
        let average = values.values().sum::<f64>() / values.len().max(1) as f64;
        MetricRow { method: method.to_string(), values, average }
    }
}

/// Methods by rows, five dimensions plus the average as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub kind: MetricKind,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}", "Method");
        for d in Dimension::ALL {
            let _ = write!(out, " | {:>12}", d.label());
        }
        let _ = writeln!(out, " | {:>8}", "Average");
        for r in &self.rows {
            let _ = write!(out, "{:<width$}", r.method);
            for d in Dimension::ALL {
                match r.values.get(&d) {
                    Some(v) => {
                        let _ = write!(out, " | {v:>12.3}");
                    }
                    None => {
                        let _ = write!(out, " | {:>12}", "-");
                    }
                }
            }
            let _ = writeln!(out, " | {:>8.3}", r.average);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerEvaluation {
    pub alignment: MetricRow,
    pub kendall_tau: MetricRow,
    pub binarized: bool,
}

/// Alignment against `votes` and Kendall tau between the scorer's Elo ranking
/// and the human Elo ranking, per dimension.
pub fn evaluate_scorer(
    method: &str,
    scores: &AssetScores,
    votes: &[ValidatedVote],
    pairs: &BTreeMap<String, BattlePair>,
    catalog: &Catalog,
    generators: &[String],
    binarized: bool,
) -> Result<ScorerEvaluation> {
    let mut ordered: Vec<&ValidatedVote> = votes.iter().collect();
    ordered.sort_by_key(|v| v.seq_no);
    let voted: Vec<BattlePair> = ordered
        .iter()
        .map(|v| {
            pairs.get(&v.pair_id).cloned().ok_or_else(|| ArenaError::UnknownIds {
                kind: "pair",
                ids: vec![v.pair_id.clone()],
            })
        })
        .collect::<Result<_>>()?;
    let preds = metric_to_predictions(scores, &voted, &Dimension::ALL)?;
    let used = if binarized { binarize(&preds) } else { preds.clone() };
    let judgments = judgments_from_votes(votes);

    let human = crate::rating::replay_leaderboard(votes, pairs, catalog, generators, BothBadPolicy::Draw)?;
    let machine = scorer_elo(&preds, pairs, catalog, generators)?;

    let mut align = BTreeMap::new();
    let mut tau = BTreeMap::new();
    for d in Dimension::ALL {
        let p: Vec<BattlePrediction> = used.iter().filter(|x| x.dimension == d).cloned().collect();
        let q: Vec<HumanJudgment> = judgments.iter().filter(|x| x.dimension == d).cloned().collect();
        align.insert(d, pairwise_alignment(&p, &q)?);
        let a = rank_from_table(&human, RankBy::Dimension(d));
        let b = rank_from_table(&machine, RankBy::Dimension(d));
        tau.insert(d, kendall_tau(&a, &b)?);
    }
    Ok(ScorerEvaluation {
        alignment: MetricRow::new(method, align),
        kendall_tau: MetricRow::new(method, tau),
        binarized,
    })
}

pub fn reports_from(evals: &[ScorerEvaluation]) -> (MetricReport, MetricReport) {
    (
        MetricReport {
            kind: MetricKind::PairwiseAlignment,
            rows: evals.iter().map(|e| e.alignment.clone()).collect(),
        },
        MetricReport {
            kind: MetricKind::KendallTau,
            rows: evals.iter().map(|e| e.kendall_tau.clone()).collect(),
        },
    )
}

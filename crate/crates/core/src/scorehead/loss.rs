use serde::{Deserialize, Serialize};

use super::{accumulate_score_grad, five_score_unchecked, ScoreHeadParams};
use crate::error::{ArenaError, Result};
use crate::model::{Dimension, VoteChoice};

use super::data::BattleEmbeddings;

/// Training target used for BothBad votes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BothBadTarget {
    #[default]
    Tie,
    Skip,
}

pub fn choice_target(c: VoteChoice, both_bad: BothBadTarget) -> Option<f64> {
    match (c, both_bad) {
        (VoteChoice::LeftBetter, _) => Some(1.0),
        (VoteChoice::RightBetter, _) => Some(0.0),
        (VoteChoice::Tie, _) | (VoteChoice::BothBad, BothBadTarget::Tie) => Some(0.5),
        (VoteChoice::BothBad, BothBadTarget::Skip) => None,
    }
}

/// Five targets, or `None` if any dimension is skipped.
pub fn targets_from_choices(c: &[VoteChoice; 5], both_bad: BothBadTarget) -> Option<[f64; 5]> {
    let mut t = [0.0; 5];
    for (slot, &choice) in t.iter_mut().zip(c) {
        *slot = choice_target(choice, both_bad)?;
    }
    Some(t)
}

pub fn validate_target(target: &[f64; 5]) -> Result<()> {
    for (d, t) in Dimension::ALL.iter().zip(target) {
        if ![0.0, 0.5, 1.0].contains(t) {
            return Err(ArenaError::invalid(d.as_str(), format!("target {t} is not one of 0, 0.5, 1")));
        }
    }
    Ok(())
}

/// `log(exp(a) / (exp(a) + exp(b)))` without overflow.
fn log_softmax(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    a - m - ((a - m).exp() + (b - m).exp()).ln()
}

fn xlogy_ratio(p: f64, log_q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p.ln() - log_q)
    }
}

/// KL((p, 1-p) || (p̂, 1-p̂)) and dKL/ds_left (which is p̂ - p).
fn kl_and_grad(target: f64, s_left: f64, s_right: f64) -> (f64, f64) {
    let lp = log_softmax(s_left, s_right);
    let lq = log_softmax(s_right, s_left);
    let kl = xlogy_ratio(target, lp) + xlogy_ratio(1.0 - target, lq);
    (kl.max(0.0), lp.exp() - target)
}

/// Mean over the five dimensions of the KL divergence between the target and
/// the softmax of the left/right scores.
pub fn preference_loss(params: &ScoreHeadParams, battle: &BattleEmbeddings, target: &[f64; 5]) -> Result<f64> {
    validate_target(target)?;
    battle.check(params)?;
    Ok(loss_unchecked(params, battle, target, None))
}

/// Loss and its gradient in the flat parameter layout of [`ScoreHeadParams::to_flat`].
pub fn preference_loss_grad(
    params: &ScoreHeadParams,
    battle: &BattleEmbeddings,
    target: &[f64; 5],
) -> Result<(f64, Vec<f64>)> {
    validate_target(target)?;
    battle.check(params)?;
    let mut g = vec![0.0; params.len()];
    let l = loss_unchecked(params, battle, target, Some(&mut g));
    Ok((l, g))
}

pub(crate) fn loss_unchecked(
    params: &ScoreHeadParams,
    b: &BattleEmbeddings,
    target: &[f64; 5],
    grad: Option<&mut [f64]>,
) -> f64 {
    let sl = five_score_unchecked(params, &b.prompt, &b.left.normal, &b.left.rgb);
    let sr = five_score_unchecked(params, &b.prompt, &b.right.normal, &b.right.rgb);
    let mut total = 0.0;
    let mut coef = [0.0; 5];
    for i in 0..5 {
        let (kl, g) = kl_and_grad(target[i], sl.0[i], sr.0[i]);
        total += kl;
        coef[i] = g / 5.0;
    }
    if let Some(grad) = grad {
        accumulate_score_grad(grad, &coef, &b.prompt, &b.left.normal, &b.left.rgb);
        let neg = coef.map(|c| -c);
        accumulate_score_grad(grad, &neg, &b.prompt, &b.right.normal, &b.right.rgb);
    }
    total / 5.0
}

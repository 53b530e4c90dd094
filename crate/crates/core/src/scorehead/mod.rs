//! Score heads over frozen embeddings: three temperature-scaled cosine heads
//! and two affine heads, plus the absolute-score predictors.

mod absolute;
mod checkpoint;
mod data;
mod loss;
mod train;

pub use absolute::{absolute_mse, train_absolute, AbsoluteHeadParams, ScoredAsset};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use data::{
    asset_embeddings, battle_embeddings, preference_set, prompt_kind, score_catalog, AssetEmbeddings,
    BattleEmbeddings,
};
pub use loss::{
    choice_target, preference_loss, preference_loss_grad, targets_from_choices, validate_target,
    BothBadTarget,
};
pub use train::{curve_to_csv, minimize, train_preference, CurvePoint, Divergence, TrainConfig, Trained};

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::model::Dimension;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHeadParams {
    pub sigma_geo: f64,
    pub sigma_align: f64,
    pub sigma_coher: f64,
    pub w_g: Vec<f64>,
    pub bias_g: f64,
    pub w_t: Vec<f64>,
    pub bias_t: f64,
}

impl ScoreHeadParams {
    /// Unit temperatures, zero linear heads.
    pub fn init(d: usize) -> Self {
        ScoreHeadParams {
            sigma_geo: 1.0,
            sigma_align: 1.0,
            sigma_coher: 1.0,
            w_g: vec![0.0; d],
            bias_g: 0.0,
            w_t: vec![0.0; d],
            bias_t: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_g.len()
    }

    pub fn len(&self) -> usize {
        5 + 2 * self.dim()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat layout: sigma_geo, sigma_align, sigma_coher, bias_g, bias_t, w_g, w_t.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = vec![self.sigma_geo, self.sigma_align, self.sigma_coher, self.bias_g, self.bias_t];
        v.extend_from_slice(&self.w_g);
        v.extend_from_slice(&self.w_t);
        v
    }

    pub fn from_flat(d: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 5 + 2 * d {
            return Err(ArenaError::invalid(
                "params",
                format!("expected {} values for d={d}, got {}", 5 + 2 * d, v.len()),
            ));
        }
        Ok(ScoreHeadParams {
            sigma_geo: v[0],
            sigma_align: v[1],
            sigma_coher: v[2],
            bias_g: v[3],
            bias_t: v[4],
            w_g: v[5..5 + d].to_vec(),
            w_t: v[5 + d..].to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    pub(crate) fn check_dims(&self, vs: &[&[f64]]) -> Result<()> {
        let d = self.dim();
        match vs.iter().find(|v| v.len() != d) {
            Some(v) => Err(ArenaError::invalid(
                "embedding",
                format!("embedding has length {} but the heads expect {d}", v.len()),
            )),
            None => Ok(()),
        }
    }
}

/// Per-dimension scores of one asset, indexed by [`Dimension::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveScore(pub [f64; 5]);

impl FiveScore {
    pub fn get(&self, d: Dimension) -> f64 {
        self.0[d.index()]
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / 5.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn five_score(params: &ScoreHeadParams, e_p: &[f64], e_n: &[f64], e_r: &[f64]) -> Result<FiveScore> {
    params.check_dims(&[e_p, e_n, e_r])?;
    Ok(five_score_unchecked(params, e_p, e_n, e_r))
}

pub(crate) fn five_score_unchecked(p: &ScoreHeadParams, e_p: &[f64], e_n: &[f64], e_r: &[f64]) -> FiveScore {
    let mut s = [0.0; 5];
    s[Dimension::GeoPlausibility.index()] = p.sigma_geo * dot(e_p, e_n);
    s[Dimension::GeoDetails.index()] = dot(&p.w_g, e_n) + p.bias_g;
    s[Dimension::TexQuality.index()] = dot(&p.w_t, e_r) + p.bias_t;
    s[Dimension::GeoTexCoherence.index()] = p.sigma_coher * dot(e_n, e_r);
    s[Dimension::PromptAlignment.index()] = p.sigma_align * dot(e_p, e_r);
    FiveScore(s)
}

/// Adds `coef * d(score_d)/d(params)` for every dimension into `grad` (flat layout).
pub(crate) fn accumulate_score_grad(
    grad: &mut [f64],
    coef: &[f64; 5],
    e_p: &[f64],
    e_n: &[f64],
    e_r: &[f64],
) {
    let d = e_n.len();
    grad[0] += coef[Dimension::GeoPlausibility.index()] * dot(e_p, e_n);
    grad[1] += coef[Dimension::PromptAlignment.index()] * dot(e_p, e_r);
    grad[2] += coef[Dimension::GeoTexCoherence.index()] * dot(e_n, e_r);
    let cg = coef[Dimension::GeoDetails.index()];
    let ct = coef[Dimension::TexQuality.index()];
    grad[3] += cg;
    grad[4] += ct;
    for i in 0..d {
        grad[5 + i] += cg * e_n[i];
        grad[5 + d + i] += ct * e_r[i];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    #[default]
    Average,
    Single(Dimension),
}

pub fn reward_from(score: &FiveScore, mode: RewardMode) -> f64 {
    match mode {
        RewardMode::Average => score.mean(),
        RewardMode::Single(d) => score.get(d),
    }
}

/// Human-feedback reward of one asset for a prompt.
pub fn reward(
    params: &ScoreHeadParams,
    e_p: &[f64],
    e_n: &[f64],
    e_r: &[f64],
    mode: RewardMode,
) -> Result<f64> {
    Ok(reward_from(&five_score(params, e_p, e_n, e_r)?, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::win_probability;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = dot(v, v).sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn head_examples() {
        let mut p = ScoreHeadParams::init(3);
        let e = unit(&[1.0, 2.0, 2.0]);
        let s = five_score(&p, &e, &e, &[0.0, 1.0, -1.0]).unwrap();
        assert!((s.get(Dimension::GeoPlausibility) - 1.0).abs() < 1e-12);
        p.sigma_align = 7.5;
        let s = five_score(&p, &[1.0, 0.0, 0.0], &e, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.get(Dimension::PromptAlignment), 0.0);
        p.bias_g = 0.3;
        for e_n in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]] {
            let s = five_score(&p, &e, &e_n, &e).unwrap();
            assert_eq!(s.get(Dimension::GeoDetails), 0.3);
        }
        assert!(five_score(&p, &e, &e, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn reward_modes() {
        assert_eq!(reward_from(&FiveScore([1.0; 5]), RewardMode::Average), 1.0);
        let s = FiveScore([0.2, 0.4, 0.6, 0.8, 1.0]);
        assert!((reward_from(&s, RewardMode::Average) - 0.6).abs() < 1e-12);
        for d in Dimension::ALL {
            assert_eq!(reward_from(&s, RewardMode::Single(d)), s.get(d));
        }
    }

    #[test]
    fn temperature_scaling_sharpens() {
        let e_p = unit(&[1.0, 0.2, 0.1]);
        let (l, r) = (unit(&[0.9, 0.3, 0.0]), unit(&[0.1, 1.0, 0.4]));
        let base = ScoreHeadParams::init(3);
        let sl = five_score(&base, &e_p, &l, &l).unwrap().get(Dimension::GeoPlausibility);
        let sr = five_score(&base, &e_p, &r, &r).unwrap().get(Dimension::GeoPlausibility);
        let p0 = win_probability(sl, sr).unwrap();
        for lambda in [1.5, 3.0, 10.0] {
            let mut p = base.clone();
            p.sigma_geo *= lambda;
            let s = five_score(&p, &e_p, &l, &l).unwrap().get(Dimension::GeoPlausibility);
            assert!((s - lambda * sl).abs() < 1e-12);
            let pl = win_probability(s, lambda * sr).unwrap();
            assert_eq!(pl > 0.5, p0 > 0.5);
            assert!((pl - 0.5).abs() > (p0 - 0.5).abs());
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut p = ScoreHeadParams::init(4);
        p.w_t[2] = -0.5;
        p.bias_g = 0.25;
        let v = p.to_flat();
        assert_eq!(v.len(), p.len());
        assert_eq!(ScoreHeadParams::from_flat(4, &v).unwrap(), p);
        assert!(ScoreHeadParams::from_flat(3, &v).is_err());
    }
}

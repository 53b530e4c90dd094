use serde::{Deserialize, Serialize};

use super::train::{check_training_set, minimize, TrainConfig, Trained};
use super::{dot, Checkpoint};
use crate::error::{ArenaError, Result};

/// Five linear predictors over `normal ⊕ rgb` (length `2d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteHeadParams {
    pub weights: [Vec<f64>; 5],
    pub biases: [f64; 5],
}

impl AbsoluteHeadParams {
    pub fn zeros(d: usize) -> Self {
        AbsoluteHeadParams {
            weights: std::array::from_fn(|_| vec![0.0; 2 * d]),
            biases: [0.0; 5],
        }
    }

    /// Embedding dimensionality `d` (half the input width).
    pub fn dim(&self) -> usize {
        self.weights[0].len() / 2
    }

    /// Flat layout: per head, `2d` weights then the bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(5 * (self.weights[0].len() + 1));
        for (w, b) in self.weights.iter().zip(self.biases) {
            v.extend_from_slice(w);
            v.push(b);
        }
        v
    }

    pub fn from_flat(d: usize, v: &[f64]) -> Result<Self> {
        let stride = 2 * d + 1;
        if v.len() != 5 * stride {
            return Err(ArenaError::invalid(
                "params",
                format!("expected {} values for d={d}, got {}", 5 * stride, v.len()),
            ));
        }
        Ok(AbsoluteHeadParams {
            weights: std::array::from_fn(|i| v[i * stride..i * stride + 2 * d].to_vec()),
            biases: std::array::from_fn(|i| v[i * stride + 2 * d]),
        })
    }

    pub fn predict(&self, normal: &[f64], rgb: &[f64]) -> Result<[f64; 5]> {
        let d = self.dim();
        if normal.len() != d || rgb.len() != d {
            return Err(ArenaError::invalid(
                "embedding",
                format!("expected two vectors of length {d}, got {} and {}", normal.len(), rgb.len()),
            ));
        }
        Ok(self.predict_unchecked(normal, rgb))
    }

    fn predict_unchecked(&self, normal: &[f64], rgb: &[f64]) -> [f64; 5] {
        let d = normal.len();
        std::array::from_fn(|i| {
            dot(&self.weights[i][..d], normal) + dot(&self.weights[i][d..], rgb) + self.biases[i]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAsset {
    pub normal: Vec<f64>,
    pub rgb: Vec<f64>,
    /// Normalized final scores in [`crate::model::Dimension::ALL`] order.
    pub targets: [f64; 5],
}

/// Mean over assets and dimensions of the squared error.
pub fn absolute_mse(params: &AbsoluteHeadParams, assets: &[ScoredAsset]) -> Result<f64> {
    check_training_set(assets.len())?;
    let mut total = 0.0;
    for a in assets {
        let y = params.predict(&a.normal, &a.rgb)?;
        total += y.iter().zip(&a.targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
    }
    Ok(total / (5 * assets.len()) as f64)
}

pub fn train_absolute(
    init: &AbsoluteHeadParams,
    assets: &[ScoredAsset],
    cfg: &TrainConfig,
) -> Result<Trained<AbsoluteHeadParams>> {
    check_training_set(assets.len())?;
    let d = init.dim();
    for a in assets {
        init.predict(&a.normal, &a.rgb)?;
        if let Some(t) = a.targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(ArenaError::invalid("targets", format!("normalized score {t} outside [0, 1]")));
        }
    }
    let stride = 2 * d + 1;
    let result = minimize(init.to_flat(), assets.len(), cfg, |flat, idx, grad| {
        let p = AbsoluteHeadParams::from_flat(d, flat).expect("flat layout");
        let scale = 1.0 / (5 * idx.len()) as f64;
        let mut total = 0.0;
        for &i in idx {
            let a = &assets[i];
            let y = p.predict_unchecked(&a.normal, &a.rgb);
            for h in 0..5 {
                let r = y[h] - a.targets[h];
                total += r * r;
                let c = 2.0 * r * scale;
                let g = &mut grad[h * stride..(h + 1) * stride];
                for j in 0..d {
                    g[j] += c * a.normal[j];
                    g[d + j] += c * a.rgb[j];
                }
                g[2 * d] += c;
            }
        }
        total * scale
    });
    match result {
        Ok((flat, curve)) => Ok(Trained { params: AbsoluteHeadParams::from_flat(d, &flat)?, curve }),
        Err(div) => {
            let ck = Checkpoint::Absolute(AbsoluteHeadParams::from_flat(d, &div.last_finite)?);
            Err(div.into_error(ck))
        }
    }
}

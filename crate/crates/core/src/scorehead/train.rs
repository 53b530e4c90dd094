use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::BattleEmbeddings;
use super::loss::{loss_unchecked, validate_target};
use super::{Checkpoint, ScoreHeadParams};
use crate::error::{ArenaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    /// Mini-batch size; 0 means full batch.
    pub batch: usize,
    pub seed: u64,
    #[serde(default)]
    pub momentum: f64,
    /// Linear ramp from 0 to `lr` over this many steps.
    #[serde(default)]
    pub warmup_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 0.1, steps: 1000, batch: 32, seed: 0, momentum: 0.0, warmup_steps: 0 }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.lr
        } else {
            self.lr * (step + 1) as f64 / self.warmup_steps as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub lr: f64,
    /// Mean mini-batch loss before this step's update.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained<P> {
    pub params: P,
    pub curve: Vec<CurvePoint>,
}

/// `step,lr,loss` lines with a header.
pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("step,lr,loss\n");
    for p in curve {
        s.push_str(&format!("{},{:e},{:e}\n", p.step, p.lr, p.loss));
    }
    s
}

/// Where a run stopped producing finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub step: usize,
    pub loss: f64,
    pub last_finite: Vec<f64>,
}

impl Divergence {
    pub(crate) fn into_error(self, checkpoint: Checkpoint) -> ArenaError {
        ArenaError::Diverged { step: self.step, loss: self.loss, checkpoint: Box::new(checkpoint) }
    }
}

/// Mini-batch gradient descent with optional momentum over `n` examples.
/// `objective(params, batch, grad)` returns the mean loss over `batch` and
/// writes the mean gradient into `grad` (zeroed beforehand).
pub fn minimize<F>(
    init: Vec<f64>,
    n: usize,
    cfg: &TrainConfig,
    mut objective: F,
) -> std::result::Result<(Vec<f64>, Vec<CurvePoint>), Divergence>
where
    F: FnMut(&[f64], &[usize], &mut [f64]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = if cfg.batch == 0 || cfg.batch > n { n } else { cfg.batch };
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut params = init;
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut curve = Vec::with_capacity(cfg.steps);
    let mut idx = Vec::with_capacity(batch);

    for step in 0..cfg.steps {
        idx.clear();
        while idx.len() < batch {
            if cursor == n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = objective(&params, &idx, &mut grad);
        let lr = cfg.lr_at(step);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Divergence { step, loss, last_finite: params });
        }
        curve.push(CurvePoint { step, lr, loss });
        if lr == 0.0 {
            continue;
        }
        let mut next = params.clone();
        for ((p, v), g) in next.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = cfg.momentum * *v + g;
            *p -= lr * *v;
        }
        if next.iter().any(|p| !p.is_finite()) {
            return Err(Divergence { step, loss: f64::NAN, last_finite: params });
        }
        params = next;
    }
    Ok((params, curve))
}

pub(crate) fn check_training_set(n: usize) -> Result<()> {
    if n == 0 {
        Err(ArenaError::invalid("training_set", "empty training set"))
    } else {
        Ok(())
    }
}

/// Trains the five preference heads on mean KL loss.
pub fn train_preference(
    init: &ScoreHeadParams,
    battles: &[(BattleEmbeddings, [f64; 5])],
    cfg: &TrainConfig,
) -> Result<Trained<ScoreHeadParams>> {
    check_training_set(battles.len())?;
    for (b, t) in battles {
        validate_target(t)?;
        b.check(init)?;
    }
    let d = init.dim();
    let result = minimize(init.to_flat(), battles.len(), cfg, |flat, idx, grad| {
        let p = ScoreHeadParams::from_flat(d, flat).expect("flat layout");
        let mut total = 0.0;
        let mut g = vec![0.0; grad.len()];
        for &i in idx {
            let (b, t) = &battles[i];
            total += loss_unchecked(&p, b, t, Some(&mut g));
        }
        let scale = 1.0 / idx.len() as f64;
        for (dst, src) in grad.iter_mut().zip(&g) {
            *dst = src * scale;
        }
        total * scale
    });
    match result {
        Ok((flat, curve)) => Ok(Trained { params: ScoreHeadParams::from_flat(d, &flat)?, curve }),
        Err(div) => {
            let ck = Checkpoint::Preference(ScoreHeadParams::from_flat(d, &div.last_finite)?);
            Err(div.into_error(ck))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_ramps_linearly() {
        let cfg = TrainConfig { lr: 3e-6, warmup_steps: 500, ..TrainConfig::default() };
        assert!((cfg.lr_at(0) - 3e-6 / 500.0).abs() < 1e-20);
        assert!((cfg.lr_at(249) - 1.5e-6).abs() < 1e-18);
        assert_eq!(cfg.lr_at(499), 3e-6);
        assert_eq!(cfg.lr_at(10_000), 3e-6);
    }

    #[test]
    fn quadratic_converges_and_diverges() {
        let target = [3.0, -2.0];
        let obj = |p: &[f64], _: &[usize], g: &mut [f64]| {
            let mut l = 0.0;
            for i in 0..2 {
                g[i] = 2.0 * (p[i] - target[i]);
                l += (p[i] - target[i]).powi(2);
            }
            l
        };
        let cfg = TrainConfig { lr: 0.1, steps: 200, batch: 1, momentum: 0.5, ..TrainConfig::default() };
        let (p, curve) = minimize(vec![0.0, 0.0], 1, &cfg, obj).unwrap();
        assert!((p[0] - 3.0).abs() < 1e-6 && (p[1] + 2.0).abs() < 1e-6);
        assert_eq!(curve.len(), 200);
        let bad = TrainConfig { lr: 1e6, steps: 500, ..cfg };
        let div = minimize(vec![0.0, 0.0], 1, &bad, obj).unwrap_err();
        assert!(div.step > 0 && div.last_finite.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn csv_export() {
        let s = curve_to_csv(&[CurvePoint { step: 0, lr: 0.5, loss: 0.25 }]);
        assert_eq!(s, "step,lr,loss\n0,5e-1,2.5e-1\n");
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{five_score, ScoreHeadParams};
use crate::error::{ArenaError, Result};
use crate::ingest::{Catalog, EmbeddingKind, EmbeddingStore};
use crate::metrics::AssetScores;
use crate::model::{Dimension, Modality};
use crate::scheduler::BattlePair;
use crate::validation::ValidatedVote;

use super::loss::{targets_from_choices, BothBadTarget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetEmbeddings {
    pub normal: Vec<f64>,
    pub rgb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BattleEmbeddings {
    pub prompt: Vec<f64>,
    pub left: AssetEmbeddings,
    pub right: AssetEmbeddings,
}

impl BattleEmbeddings {
    pub(crate) fn check(&self, params: &ScoreHeadParams) -> Result<()> {
        params.check_dims(&[
            &self.prompt,
            &self.left.normal,
            &self.left.rgb,
            &self.right.normal,
            &self.right.rgb,
        ])
    }
}

pub fn prompt_kind(m: Modality) -> EmbeddingKind {
    match m {
        Modality::Text => EmbeddingKind::PromptText,
        Modality::Image => EmbeddingKind::PromptImage,
    }
}

pub fn asset_embeddings(asset_id: &str, store: &EmbeddingStore) -> Result<AssetEmbeddings> {
    Ok(AssetEmbeddings {
        normal: store.lookup_f64(asset_id, EmbeddingKind::NormalViews)?,
        rgb: store.lookup_f64(asset_id, EmbeddingKind::RgbViews)?,
    })
}

pub fn battle_embeddings(pair: &BattlePair, catalog: &Catalog, store: &EmbeddingStore) -> Result<BattleEmbeddings> {
    let prompt = catalog.prompt(&pair.prompt_id)?;
    Ok(BattleEmbeddings {
        prompt: store.lookup_f64(&prompt.prompt_id, prompt_kind(prompt.modality))?,
        left: asset_embeddings(&pair.left_asset_id, store)?,
        right: asset_embeddings(&pair.right_asset_id, store)?,
    })
}

/// Embeddings and targets for every vote that has a complete target.
pub fn preference_set(
    votes: &[ValidatedVote],
    pairs: &BTreeMap<String, BattlePair>,
    catalog: &Catalog,
    store: &EmbeddingStore,
    both_bad: BothBadTarget,
) -> Result<Vec<(BattleEmbeddings, [f64; 5])>> {
    let mut out = Vec::with_capacity(votes.len());
    for v in votes {
        let pair = pairs.get(&v.pair_id).ok_or_else(|| ArenaError::UnknownIds {
            kind: "pair",
            ids: vec![v.pair_id.clone()],
        })?;
        if let Some(t) = targets_from_choices(&v.choices, both_bad) {
            out.push((battle_embeddings(pair, catalog, store)?, t));
        }
    }
    Ok(out)
}

/// Five scores for every catalog asset that has embeddings.
pub fn score_catalog(params: &ScoreHeadParams, catalog: &Catalog, store: &EmbeddingStore) -> Result<AssetScores> {
    let mut out = AssetScores::new();
    for asset in catalog.assets.values() {
        let prompt = catalog.prompt(&asset.prompt_id)?;
        let Ok(e_p) = store.lookup_f64(&prompt.prompt_id, prompt_kind(prompt.modality)) else {
            continue;
        };
        let Ok(e) = asset_embeddings(&asset.asset_id, store) else { continue };
        let s = five_score(params, &e_p, &e.normal, &e.rgb)?;
        out.insert(
            asset.asset_id.clone(),
            Dimension::ALL.into_iter().map(|d| (d, s.get(d))).collect(),
        );
    }
    Ok(out)
}

//! Prompt, generator and asset catalogs.
//!
//! Manifests are JSON documents:
//!
//! ```json
//! { "version": 1,
//!   "prompts":    [ { "prompt_id": "...", "modality": "text", "content_ref": "...",
//!                     "subject": "...", "scenario": "single_object", "split": "train" } ],
//!   "generators": [ { "generator_id": "...", "display_name": "...", "track": "text_to_3d" } ],
//!   "assets":     [ { "asset_id": "...", "prompt_id": "...", "generator_id": "...",
//!                     "render_refs": { "geometry": "...", "normal": "...", "rgb": "..." },
//!                     "embedding_ref": "..." } ] }
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::model::{Asset, Generator, PromptSpec, Track};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub prompts: Vec<PromptSpec>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub assets: Vec<Asset>,
}

/// A single catalog mutation as recorded in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "item", rename_all = "snake_case")]
pub enum CatalogChange {
    AddPrompt(PromptSpec),
    AddGenerator(Generator),
    AddAsset(Asset),
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub prompts: BTreeMap<String, PromptSpec>,
    pub generators: BTreeMap<String, Generator>,
    pub assets: BTreeMap<String, Asset>,
    by_prompt_generator: HashMap<(String, String), String>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.prompts == other.prompts
            && self.generators == other.generators
            && self.assets == other.assets
    }
}

impl Catalog {
    pub fn from_manifest(manifest: Manifest) -> Result<Catalog> {
        if manifest.version != MANIFEST_VERSION {
            return Err(ArenaError::Config(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                manifest.version
            )));
        }
        let mut catalog = Catalog::default();
        for p in manifest.prompts {
            catalog.apply(CatalogChange::AddPrompt(p))?;
        }
        for g in manifest.generators {
            catalog.apply(CatalogChange::AddGenerator(g))?;
        }

        let dangling: BTreeSet<String> = manifest
            .assets
            .iter()
            .flat_map(|a| {
                let p = (!catalog.prompts.contains_key(&a.prompt_id)).then(|| a.prompt_id.clone());
                let g = (!catalog.generators.contains_key(&a.generator_id))
                    .then(|| a.generator_id.clone());
                p.into_iter().chain(g)
            })
            .collect();
        if !dangling.is_empty() {
            return Err(ArenaError::UnknownIds {
                kind: "prompt/generator references",
                ids: dangling.into_iter().collect(),
            });
        }
        for a in manifest.assets {
            catalog.apply(CatalogChange::AddAsset(a))?;
        }
        Ok(catalog)
    }

    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            version: MANIFEST_VERSION,
            prompts: self.prompts.values().cloned().collect(),
            generators: self.generators.values().cloned().collect(),
            assets: self.assets.values().cloned().collect(),
        }
    }

    /// Checks a change against the current catalog without applying it.
    pub fn check(&self, change: &CatalogChange) -> Result<()> {
        match change {
            CatalogChange::AddPrompt(p) => {
                p.validate()?;
                if self.prompts.contains_key(&p.prompt_id) {
                    return Err(ArenaError::Duplicate { kind: "prompt", id: p.prompt_id.clone() });
                }
            }
            CatalogChange::AddGenerator(g) => {
                if g.generator_id.is_empty() {
                    return Err(ArenaError::invalid("generator_id", "empty generator id"));
                }
                if self.generators.contains_key(&g.generator_id) {
                    return Err(ArenaError::Duplicate {
                        kind: "generator",
                        id: g.generator_id.clone(),
                    });
                }
            }
            CatalogChange::AddAsset(a) => {
                if a.asset_id.is_empty() {
                    return Err(ArenaError::invalid("asset_id", "empty asset id"));
                }
                let mut missing = Vec::new();
                if !self.prompts.contains_key(&a.prompt_id) {
                    missing.push(a.prompt_id.clone());
                }
                if !self.generators.contains_key(&a.generator_id) {
                    missing.push(a.generator_id.clone());
                }
                if !missing.is_empty() {
                    return Err(ArenaError::UnknownIds {
                        kind: "prompt/generator references",
                        ids: missing,
                    });
                }
                if self.assets.contains_key(&a.asset_id) {
                    return Err(ArenaError::Duplicate { kind: "asset", id: a.asset_id.clone() });
                }
                let key = (a.prompt_id.clone(), a.generator_id.clone());
                if self.by_prompt_generator.contains_key(&key) {
                    return Err(ArenaError::Duplicate {
                        kind: "(prompt, generator) asset",
                        id: format!("{}/{}", key.0, key.1),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, change: CatalogChange) -> Result<()> {
        self.check(&change)?;
        match change {
            CatalogChange::AddPrompt(p) => {
                self.prompts.insert(p.prompt_id.clone(), p);
            }
            CatalogChange::AddGenerator(g) => {
                self.generators.insert(g.generator_id.clone(), g);
            }
            CatalogChange::AddAsset(a) => {
                self.by_prompt_generator
                    .insert((a.prompt_id.clone(), a.generator_id.clone()), a.asset_id.clone());
                self.assets.insert(a.asset_id.clone(), a);
            }
        }
        Ok(())
    }

    /// Changes that would bring this catalog up to `manifest`, skipping items
    /// already present with identical content.
    pub fn diff(&self, manifest: &Manifest) -> Result<Vec<CatalogChange>> {
        let target = Catalog::from_manifest(manifest.clone())?;
        let mut changes = Vec::new();
        for (id, p) in &target.prompts {
            match self.prompts.get(id) {
                None => changes.push(CatalogChange::AddPrompt(p.clone())),
                Some(existing) if existing != p => {
                    return Err(ArenaError::Duplicate { kind: "prompt", id: id.clone() })
                }
                _ => {}
            }
        }
        for (id, g) in &target.generators {
            match self.generators.get(id) {
                None => changes.push(CatalogChange::AddGenerator(g.clone())),
                Some(existing) if existing != g => {
                    return Err(ArenaError::Duplicate { kind: "generator", id: id.clone() })
                }
                _ => {}
            }
        }
        for (id, a) in &target.assets {
            match self.assets.get(id) {
                None => changes.push(CatalogChange::AddAsset(a.clone())),
                Some(existing) if existing != a => {
                    return Err(ArenaError::Duplicate { kind: "asset", id: id.clone() })
                }
                _ => {}
            }
        }
        Ok(changes)
    }

    pub fn asset_for(&self, prompt_id: &str, generator_id: &str) -> Option<&Asset> {
        self.by_prompt_generator
            .get(&(prompt_id.to_string(), generator_id.to_string()))
            .and_then(|id| self.assets.get(id))
    }

    pub fn asset(&self, asset_id: &str) -> Result<&Asset> {
        self.assets.get(asset_id).ok_or_else(|| ArenaError::UnknownIds {
            kind: "asset",
            ids: vec![asset_id.to_string()],
        })
    }

    pub fn prompt(&self, prompt_id: &str) -> Result<&PromptSpec> {
        self.prompts.get(prompt_id).ok_or_else(|| ArenaError::UnknownIds {
            kind: "prompt",
            ids: vec![prompt_id.to_string()],
        })
    }

    pub fn generator(&self, generator_id: &str) -> Result<&Generator> {
        self.generators.get(generator_id).ok_or_else(|| ArenaError::UnknownIds {
            kind: "generator",
            ids: vec![generator_id.to_string()],
        })
    }

    /// Generators of one track with their assets and the prompts those cover.
    pub fn track_subset(&self, track: Track) -> Result<Catalog> {
        let generators: Vec<Generator> = self.generators.values().filter(|g| g.track == track).cloned().collect();
        let assets: Vec<Asset> = self
            .assets
            .values()
            .filter(|a| self.generators.get(&a.generator_id).is_some_and(|g| g.track == track))
            .cloned()
            .collect();
        let covered: BTreeSet<&str> = assets.iter().map(|a| a.prompt_id.as_str()).collect();
        let prompts = self.prompts.values().filter(|p| covered.contains(p.prompt_id.as_str())).cloned().collect();
        Catalog::from_manifest(Manifest { version: MANIFEST_VERSION, prompts, generators, assets })
    }

    pub fn incomplete_assets(&self) -> impl Iterator<Item = &Asset> {
        self.assets.values().filter(|a| !a.is_complete())
    }

    /// Assets grouped by prompt, in id order.
    pub fn assets_by_prompt(&self) -> BTreeMap<&str, Vec<&Asset>> {
        let mut out: BTreeMap<&str, Vec<&Asset>> = BTreeMap::new();
        for a in self.assets.values() {
            out.entry(a.prompt_id.as_str()).or_default().push(a);
        }
        out
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ArenaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ArenaError::format(path, e.to_string()))
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    Catalog::from_manifest(load_manifest(path)?)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text).map_err(|e| ArenaError::io(path, e))
}

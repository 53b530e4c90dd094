//! File formats: catalog manifests, embedding stores and the event log.

pub mod catalog;
pub mod embeddings;
pub mod eventlog;

pub use catalog::{load_catalog, load_manifest, write_manifest, Catalog, CatalogChange, Manifest};
pub use embeddings::{load_embedding_set, load_embeddings, EmbeddingKey, EmbeddingKind, EmbeddingStore};
pub use eventlog::{read_log, write_log, Event, EventLog, GoldKey, LoggedEvent, Recovery, ScheduleBatch, SyncPolicy};

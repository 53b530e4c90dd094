//! The event log paired with the state folded from it.

use std::path::Path;

use arena_core::ingest::{Event, EventLog, LoggedEvent, Manifest, Recovery, SyncPolicy};
use arena_core::rating::BothBadPolicy;
use arena_core::{ArenaState, Result};

pub struct Store {
    pub log: EventLog,
    pub state: ArenaState,
}

impl Store {
    pub fn open(path: &Path, sync: SyncPolicy, policy: BothBadPolicy) -> Result<(Store, Recovery)> {
        let (log, events, recovery) = EventLog::open(path, sync)?;
        let state = ArenaState::replay(&events, policy)?;
        Ok((Store { log, state }, recovery))
    }

    /// Checks, persists, then folds in one event.
    pub fn append(&mut self, event: Event) -> Result<u64> {
        append_checked(&mut self.log, &self.state, &event)
            .and_then(|seq_no| self.state.apply(&LoggedEvent { seq_no, event }).map(|_| seq_no))
    }

    /// Appends whatever the manifest adds to the current catalog.
    pub fn merge_catalog(&mut self, manifest: &Manifest) -> Result<usize> {
        let changes = self.state.catalog.diff(manifest)?;
        let n = changes.len();
        for c in changes {
            self.append(Event::Catalog(c))?;
        }
        Ok(n)
    }
}

/// The write half: validation against `state` and the durable append. The
/// caller folds the event in afterwards.
pub fn append_checked(log: &mut EventLog, state: &ArenaState, event: &Event) -> Result<u64> {
    state.check(event)?;
    log.append(event)
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::dsl::{ParamValue, TemplateProgram};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckpointError {
    #[error("unknown checkpoint {0}")]
    UnknownCheckpoint(u64),
}

/// Everything needed to reproduce a render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub program: Option<TemplateProgram>,
    pub params: BTreeMap<String, ParamValue>,
    pub data: Option<Dataset>,
    pub mapping: BTreeMap<String, String>,
    pub markup_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default)]
    pub label: String,
    pub snapshot: Snapshot,
    #[serde(default)]
    pub bookmarked: bool,
}

/// Append-only checkpoint history with strictly increasing ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLog {
    checkpoints: Vec<Checkpoint>,
    next_id: u64,
}

impl CheckpointLog {
    pub fn push(&mut self, snapshot: Snapshot, label: impl Into<String>, timestamp: u64) -> &Checkpoint {
        self.next_id = self.next_id.max(self.checkpoints.last().map_or(0, |c| c.id)) + 1;
        self.checkpoints.push(Checkpoint { id: self.next_id, timestamp, label: label.into(), snapshot, bookmarked: false });
        self.checkpoints.last().expect("just pushed")
    }

    pub fn get(&self, id: u64) -> Result<&Checkpoint, CheckpointError> {
        self.checkpoints.iter().find(|c| c.id == id).ok_or(CheckpointError::UnknownCheckpoint(id))
    }

    pub fn set_bookmark(&mut self, id: u64, bookmarked: bool) -> Result<&Checkpoint, CheckpointError> {
        let c = self.checkpoints.iter_mut().find(|c| c.id == id).ok_or(CheckpointError::UnknownCheckpoint(id))?;
        c.bookmarked = bookmarked;
        Ok(c)
    }

    pub fn all(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn latest(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(n: f64) -> Snapshot {
        Snapshot {
            program: None,
            params: BTreeMap::from([("w".to_string(), ParamValue::Number(n))]),
            data: None,
            mapping: BTreeMap::new(),
            markup_digest: None,
        }
    }

    #[test]
    fn ids_increase_and_history_is_kept() {
        let mut log = CheckpointLog::default();
        let ids: Vec<u64> = (0..5).map(|i| log.push(snap(i as f64), "", 0).id).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log.get(ids[1]).unwrap().snapshot, snap(1.0));
        assert_eq!(log.get(99), Err(CheckpointError::UnknownCheckpoint(99)));
    }

    #[test]
    fn bookmark_survives_serialization() {
        let mut log = CheckpointLog::default();
        let id = log.push(snap(0.1 + 0.2), "turn", 7).id;
        log.set_bookmark(id, true).unwrap();
        let back: CheckpointLog = serde_json::from_str(&serde_json::to_string(&log).unwrap()).unwrap();
        assert_eq!(back, log);
        assert!(back.get(id).unwrap().bookmarked);
    }
}

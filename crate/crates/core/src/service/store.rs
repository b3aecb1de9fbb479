//! One JSON document per session, replaced atomically on every save.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::canonical::to_canonical_string;
use crate::workflow::ConversationState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    /// Canonical serialization of the [`ConversationState`].
    pub state: String,
    pub revision: u64,
}

impl SessionRecord {
    pub fn new(session_id: &str, created_at: DateTime<Utc>, state: &ConversationState) -> Result<Self, ServiceError> {
        Ok(Self {
            session_id: session_id.to_string(),
            created_at,
            state: state.to_canonical().map_err(|e| ServiceError::StorageFailure(e.to_string()))?,
            revision: 0,
        })
    }

    pub fn state(&self) -> Result<ConversationState, ServiceError> {
        ConversationState::from_canonical(&self.state).map_err(|e| ServiceError::StorageFailure(e.to_string()))
    }

    /// Next revision holding `state`.
    pub fn advance(&self, state: &ConversationState) -> Result<Self, ServiceError> {
        Ok(Self {
            session_id: self.session_id.clone(),
            created_at: self.created_at,
            state: state.to_canonical().map_err(|e| ServiceError::StorageFailure(e.to_string()))?,
            revision: self.revision + 1,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FileStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::StorageFailure(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Option<PathBuf> {
        valid_id(id).then(|| self.dir.join(format!("{id}.json")))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.path(id).is_some_and(|p| p.is_file())
    }

    pub fn load(&self, id: &str) -> Result<SessionRecord, ServiceError> {
        let path = self.path(id).ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::UnknownSession(id.to_string())),
            Err(e) => return Err(ServiceError::StorageFailure(e.to_string())),
        };
        serde_json::from_str(&text).map_err(|e| ServiceError::StorageFailure(format!("{}: {e}", path.display())))
    }

    /// Writes to a temporary file in the same directory, syncs it and
    /// renames it over the old document.
    pub fn save(&self, record: &SessionRecord) -> Result<(), ServiceError> {
        let fail = |e: &dyn std::fmt::Display| ServiceError::StorageFailure(e.to_string());
        let path = self.path(&record.session_id).ok_or_else(|| ServiceError::UnknownSession(record.session_id.clone()))?;
        let text = to_canonical_string(record).map_err(|e| fail(&e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| fail(&e))?;
        tmp.write_all(text.as_bytes()).map_err(|e| fail(&e))?;
        tmp.as_file().sync_all().map_err(|e| fail(&e))?;
        tmp.persist(&path).map_err(|e| fail(&e.error))?;
        Ok(())
    }
}

//! Job records and their state machine.
//!
//! A job moves `queued -> running -> {done, failed}`; a queued job may also
//! fail directly (for example when the service restarts before it ran).
//! Every transition is appended to the record's history and persisted.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::dataset::write_json;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Ingest,
    TrainManifold,
    TrainGan,
    Interpolate,
    Denoise,
}

impl JobKind {
    /// Training and ingestion rewrite project files and run one at a time;
    /// renders only read them and may run side by side.
    pub fn is_exclusive(self) -> bool {
        matches!(self, JobKind::Ingest | JobKind::TrainManifold | JobKind::TrainGan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Failed) | (Running, Done) | (Running, Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: JobState,
    /// Seconds since the Unix epoch.
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobError {
    pub error: String,
    pub message: String,
}

impl From<&Error> for JobError {
    fn from(e: &Error) -> Self {
        JobError {
            error: e.kind().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub project: String,
    pub kind: JobKind,
    /// The submitted configuration, kept byte-for-byte.
    pub config: Box<RawValue>,
    pub state: JobState,
    pub progress: f64,
    pub history: Vec<Transition>,
    pub error: Option<JobError>,
    pub result: Option<Value>,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// A job's live record. Only the task running the job writes to it; readers
/// take lock-free snapshots.
pub struct JobHandle {
    record: ArcSwap<JobRecord>,
    path: PathBuf,
}

impl JobHandle {
    pub fn create(id: String, project: String, kind: JobKind, config: Box<RawValue>, path: PathBuf) -> Result<Self> {
        let record = JobRecord {
            id,
            project,
            kind,
            config,
            state: JobState::Queued,
            progress: 0.0,
            history: vec![Transition {
                state: JobState::Queued,
                at: now(),
            }],
            error: None,
            result: None,
        };
        write_json(&path, &record)?;
        Ok(JobHandle {
            record: ArcSwap::from_pointee(record),
            path,
        })
    }

    pub fn restore(record: JobRecord, path: PathBuf) -> Self {
        JobHandle {
            record: ArcSwap::from_pointee(record),
            path,
        }
    }

    pub fn snapshot(&self) -> Arc<JobRecord> {
        self.record.load_full()
    }

    /// Moves to `next`, applying `update` to the new record, and persists it.
    /// Disallowed transitions are rejected and leave the record untouched.
    pub fn transition(&self, next: JobState, update: impl FnOnce(&mut JobRecord)) -> Result<()> {
        let current = self.snapshot();
        if !current.state.can_become(next) {
            return Err(Error::Core(chad_core::Error::Contract(format!(
                "job {}: {:?} -> {:?} is not a valid transition",
                current.id, current.state, next
            ))));
        }
        let mut record = (*current).clone();
        record.state = next;
        record.history.push(Transition { state: next, at: now() });
        update(&mut record);
        let record = Arc::new(record);
        self.record.store(record.clone());
        write_json(&self.path, &*record)
    }

    /// Updates progress in memory only; it is persisted with the next
    /// transition.
    pub fn set_progress(&self, progress: f64) {
        let current = self.snapshot();
        if current.state != JobState::Running || (progress - current.progress).abs() < 0.005 {
            return;
        }
        let mut record = (*current).clone();
        record.progress = progress.clamp(0.0, 1.0);
        self.record.store(Arc::new(record));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_forward_transitions_are_allowed() {
        use JobState::*;
        let all = [Queued, Running, Done, Failed];
        let allowed: Vec<_> = all
            .iter()
            .flat_map(|&a| all.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a.can_become(b))
            .collect();
        assert_eq!(
            allowed,
            vec![(Queued, Running), (Queued, Failed), (Running, Done), (Running, Failed)]
        );
    }

    #[test]
    fn transitions_are_recorded_and_persisted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j1.json");
        let config = RawValue::from_string(r#"{"lr": 0.00001}"#.into()).unwrap();
        let job = JobHandle::create("j1".into(), "p1".into(), JobKind::TrainManifold, config, path.clone()).unwrap();
        job.transition(JobState::Running, |_| {}).unwrap();
        assert!(job.transition(JobState::Queued, |_| {}).is_err());
        job.transition(JobState::Done, |r| r.progress = 1.0).unwrap();
        let saved: JobRecord = crate::dataset::read_json(&path).unwrap();
        let states: Vec<_> = saved.history.iter().map(|t| t.state).collect();
        assert_eq!(states, vec![JobState::Queued, JobState::Running, JobState::Done]);
        assert_eq!(saved.config.get(), r#"{"lr": 0.00001}"#);
    }
}

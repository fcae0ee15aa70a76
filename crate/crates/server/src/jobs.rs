//! Job records and their on-disk store.
//!
//! Each job lives in `<results>/<id>/` as `job.json` plus, once done, the
//! canonical cube export `cube.json`. Records are rewritten on every state
//! change, so a restarted service sees the last committed state.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use gantryflow_core::cube::{DiscardCounts, StatsCube};
use gantryflow_core::ingest::IngestReport;
use gantryflow_core::DateRange;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOB_FILE: &str = "job.json";
pub const CUBE_FILE: &str = "cube.json";
const INTERRUPTED: &str = "interrupted by service restart";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_travel_seconds: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict_path: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRequest {
    pub dataset: String,
    pub corridors: Vec<String>,
    /// Inclusive departure-date filter; the whole dataset when absent.
    #[serde(default)]
    pub date_range: Option<DateRange>,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Pending, JobStatus::Running)
                | (JobStatus::Running, JobStatus::Done)
                | (JobStatus::Running, JobStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub state: JobStatus,
    pub at: DateTime<Utc>,
}

/// Summary of a finished extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobOutput {
    /// Cube export file, relative to the job directory.
    pub cube: String,
    pub cells: usize,
    pub transits: u64,
    pub dates: usize,
    pub ingest: IngestReport,
    pub discarded: DiscardCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub request: JobRequest,
    pub state: JobStatus,
    /// Set only when `state` is `Failed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Set only when `state` is `Done`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<JobOutput>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub transitions: Vec<Transition>,
}

impl JobRecord {
    pub fn new(request: JobRequest) -> Self {
        let now = Utc::now();
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            request,
            state: JobStatus::Pending,
            reason: None,
            result: None,
            created_at: now,
            updated_at: now,
            transitions: vec![Transition {
                state: JobStatus::Pending,
                at: now,
            }],
        }
    }

    fn advance(&mut self, next: JobStatus) -> Result<(), StoreError> {
        if !self.state.can_become(next) {
            return Err(StoreError::BadTransition {
                id: self.id.clone(),
                from: self.state,
                to: next,
            });
        }
        let now = Utc::now();
        self.state = next;
        self.updated_at = now;
        self.transitions.push(Transition { state: next, at: now });
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("job {id}: cannot move from {from:?} to {to:?}")]
    BadTransition {
        id: String,
        from: JobStatus,
        to: JobStatus,
    },
    #[error("job store I/O on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("job store data in {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

struct Entry {
    record: JobRecord,
    cube: Option<Arc<StatsCube>>,
}

pub struct JobStore {
    dir: PathBuf,
    jobs: RwLock<BTreeMap<String, Entry>>,
}

impl JobStore {
    /// Opens or creates the store. Jobs that were running when the
    /// previous process stopped are marked failed; the ids of jobs that
    /// never started are returned so the caller can queue them again.
    pub fn open(dir: &Path) -> Result<(Self, Vec<String>), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let store = Self {
            dir: dir.to_path_buf(),
            jobs: RwLock::new(BTreeMap::new()),
        };
        let mut requeue = Vec::new();
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.join(JOB_FILE).is_file())
            .collect();
        entries.sort();
        for job_dir in entries {
            let path = job_dir.join(JOB_FILE);
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let mut record: JobRecord = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            let mut cube = None;
            match record.state {
                JobStatus::Pending => requeue.push(record.id.clone()),
                JobStatus::Running => {
                    record.advance(JobStatus::Failed)?;
                    record.reason = Some(INTERRUPTED.into());
                    store.persist(&record)?;
                }
                JobStatus::Done => match store.read_cube(&record.id) {
                    Ok(c) => cube = Some(Arc::new(c)),
                    Err(e) => tracing::error!(job = %record.id, "cannot reload result: {e}"),
                },
                JobStatus::Failed => {}
            }
            store
                .jobs
                .write()
                .expect("job store lock")
                .insert(record.id.clone(), Entry { record, cube });
        }
        Ok((store, requeue))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn job_dir(&self, id: &str) -> PathBuf {
        self.dir.join(id)
    }

    fn persist(&self, record: &JobRecord) -> Result<(), StoreError> {
        let dir = self.job_dir(&record.id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut text = serde_json::to_string_pretty(record).expect("job record serializes");
        text.push('\n');
        write_atomic(&dir.join(JOB_FILE), text.as_bytes())
    }

    fn read_cube(&self, id: &str) -> Result<StatsCube, StoreError> {
        let path = self.job_dir(id).join(CUBE_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        StatsCube::from_json(&text).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn insert(&self, record: JobRecord) -> Result<(), StoreError> {
        self.persist(&record)?;
        self.jobs
            .write()
            .expect("job store lock")
            .insert(record.id.clone(), Entry { record, cube: None });
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.jobs
            .read()
            .expect("job store lock")
            .get(id)
            .map(|e| e.record.clone())
    }

    /// All jobs, oldest first.
    pub fn list(&self) -> Vec<JobRecord> {
        let mut all: Vec<JobRecord> = self
            .jobs
            .read()
            .expect("job store lock")
            .values()
            .map(|e| e.record.clone())
            .collect();
        all.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        all
    }

    /// The record and, when done and loadable, its cube.
    pub fn result(&self, id: &str) -> Option<(JobRecord, Option<Arc<StatsCube>>)> {
        self.jobs
            .read()
            .expect("job store lock")
            .get(id)
            .map(|e| (e.record.clone(), e.cube.clone()))
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut Entry) -> Result<(), StoreError>) -> Result<(), StoreError> {
        let mut jobs = self.jobs.write().expect("job store lock");
        let entry = jobs.get_mut(id).ok_or_else(|| StoreError::UnknownJob(id.to_string()))?;
        let before = entry.record.clone();
        f(entry)?;
        if let Err(e) = self.persist(&entry.record) {
            entry.record = before;
            return Err(e);
        }
        Ok(())
    }

    pub fn mark_running(&self, id: &str) -> Result<(), StoreError> {
        self.update(id, |e| e.record.advance(JobStatus::Running))
    }

    pub fn mark_failed(&self, id: &str, reason: String) -> Result<(), StoreError> {
        self.update(id, |e| {
            e.record.advance(JobStatus::Failed)?;
            e.record.reason = Some(reason);
            Ok(())
        })
    }

    /// Writes the cube export, then records the job as done.
    pub fn mark_done(&self, id: &str, cube: StatsCube) -> Result<(), StoreError> {
        let dir = self.job_dir(id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&dir.join(CUBE_FILE), cube.to_json().as_bytes())?;
        let output = JobOutput {
            cube: CUBE_FILE.into(),
            cells: cube.cells().len(),
            transits: cube.total_count(),
            dates: cube.dates().len(),
            ingest: cube.metadata.ingest,
            discarded: cube.metadata.discarded,
        };
        let cube = Arc::new(cube);
        self.update(id, move |e| {
            e.record.advance(JobStatus::Done)?;
            e.record.result = Some(output);
            e.cube = Some(cube);
            Ok(())
        })
    }
}

//! Background pipeline jobs with polling.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use mindfuse_core::workspace::{Workspace, WorkspaceError};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::Semaphore;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Ingest,
    Pillars,
    Personas,
    Challenges,
    Briefs,
    TelemetryAnalysis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    fn is_active(self) -> bool {
        matches!(self, JobState::Queued | JobState::Running)
    }

    fn may_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done | JobState::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobHandle {
    pub job_id: String,
    pub kind: JobKind,
    pub state: JobState,
    /// Where to poll for this job.
    pub result_ref: String,
    pub result: Option<Value>,
    pub error: Option<String>,
}

type Work = Box<dyn FnOnce(&Workspace) -> Result<Value, WorkspaceError> + Send>;

/// In-memory job table; at most one active job per kind.
pub struct JobRegistry {
    jobs: Mutex<BTreeMap<String, JobHandle>>,
    workers: Arc<Semaphore>,
}

impl JobRegistry {
    pub fn new(workers: usize) -> Self {
        JobRegistry {
            jobs: Mutex::new(BTreeMap::new()),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    pub fn get(&self, job_id: &str) -> Option<JobHandle> {
        self.jobs.lock().expect("job table lock").get(job_id).cloned()
    }

    pub fn list(&self) -> Vec<JobHandle> {
        self.jobs.lock().expect("job table lock").values().cloned().collect()
    }

    fn update(&self, job_id: &str, next: JobState, result: Option<Value>, error: Option<String>) {
        let mut jobs = self.jobs.lock().expect("job table lock");
        let job = jobs.get_mut(job_id).expect("jobs are never removed");
        assert!(job.state.may_become(next), "job {job_id}: {:?} -> {next:?}", job.state);
        job.state = next;
        job.result = result;
        job.error = error;
    }

    /// Queues `work` to run on the worker pool under the store's write lock.
    pub fn submit(
        self: &Arc<Self>,
        kind: JobKind,
        workspace: Arc<Workspace>,
        store_lock: Arc<RwLock<()>>,
        work: Work,
    ) -> Result<JobHandle, ApiError> {
        let handle = {
            let mut jobs = self.jobs.lock().expect("job table lock");
            if let Some(active) = jobs.values().find(|j| j.kind == kind && j.state.is_active()) {
                return Err(ApiError::conflict(format!(
                    "a {kind:?} job is already {:?}: {}",
                    active.state, active.job_id
                )
                .to_lowercase()));
            }
            let job_id = format!("job-{}", uuid::Uuid::new_v4().simple());
            let handle = JobHandle {
                result_ref: format!("/api/v1/pipeline/jobs/{job_id}"),
                job_id,
                kind,
                state: JobState::Queued,
                result: None,
                error: None,
            };
            jobs.insert(handle.job_id.clone(), handle.clone());
            handle
        };

        let registry = Arc::clone(self);
        let job_id = handle.job_id.clone();
        tokio::spawn(async move {
            let _permit = registry.workers.clone().acquire_owned().await.expect("semaphore never closes");
            registry.update(&job_id, JobState::Running, None, None);
            let outcome = tokio::task::spawn_blocking(move || {
                let _guard = store_lock.write().unwrap_or_else(|p| p.into_inner());
                work(&workspace)
            })
            .await;
            match outcome {
                Ok(Ok(value)) => registry.update(&job_id, JobState::Done, Some(value), None),
                Ok(Err(e)) => {
                    log::warn!("job {job_id} failed: {e}");
                    registry.update(&job_id, JobState::Failed, None, Some(e.to_string()))
                }
                Err(join) => registry.update(&job_id, JobState::Failed, None, Some(format!("job panicked: {join}"))),
            }
        });
        Ok(handle)
    }
}

//! Session events and job types.

use remap_core::{Architecture, TrainingConfig, TrainingRecord};
use serde::{Deserialize, Serialize};

use crate::dataset::Manifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_final(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Cancelled)
    }

    /// Legal transitions: queued to running or cancelled, running to a final state.
    pub fn can_become(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Queued, JobState::Cancelled)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
                | (JobState::Running, JobState::Cancelled)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed => "failed",
            JobState::Cancelled => "cancelled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub model_id: String,
    pub config: TrainingConfig,
    pub state: JobState,
    /// Lower runs first; equal ranks run in submission order.
    pub rank: i64,
    pub submitted_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        name: String,
        dataset: Manifest,
        config: TrainingConfig,
        created_at: u64,
    },
    ModelAdded {
        model_id: String,
        architecture: Architecture,
    },
    RecordFinished {
        model_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        job_id: Option<String>,
        config: TrainingConfig,
        record: TrainingRecord,
    },
    JobQueued {
        job_id: String,
        model_id: String,
        config: TrainingConfig,
        rank: i64,
        submitted_at: u64,
    },
    JobStateChanged {
        job_id: String,
        state: JobState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    JobReordered {
        job_id: String,
        rank: i64,
    },
    ProjectionsRefit,
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions() {
        use JobState::*;
        let all = [Queued, Running, Done, Failed, Cancelled];
        let legal: Vec<_> =
            all.iter().flat_map(|&a| all.iter().map(move |&b| (a, b))).filter(|&(a, b)| a.can_become(b)).collect();
        assert_eq!(
            legal,
            vec![(Queued, Running), (Queued, Cancelled), (Running, Done), (Running, Failed), (Running, Cancelled)]
        );
        assert!(all.iter().filter(|s| s.is_final()).all(|s| all.iter().all(|&n| !s.can_become(n))));
    }

    #[test]
    fn tagged_form() {
        let e = Event::JobReordered { job_id: "j0001".into(), rank: -1 };
        assert_eq!(serde_json::to_string(&e).unwrap(), r#"{"type":"job_reordered","job_id":"j0001","rank":-1}"#);
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Enforcement pipeline: context handler, PEP, obligation service and the
//! continuity scheduler.

mod context;
mod engine;
mod trace;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::activity::{ActionId, ActivityId, ActivityState};
use crate::pdp::Decision;

pub use engine::{Engine, EngineConfig};
pub use trace::{FlowObserver, FlowStep, RecordingObserver};

/// A decision request: `subject` asks to perform `action_id` on the
/// activity `resource`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestContext {
    pub subject: String,
    pub resource: ActivityId,
    pub action_id: ActionId,
}

impl RequestContext {
    pub fn new(subject: impl Into<String>, resource: ActivityId, action_id: ActionId) -> Self {
        Self {
            subject: subject.into(),
            resource,
            action_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationFailure {
    pub obligation_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseContext {
    pub activity: ActivityId,
    pub action: ActionId,
    /// Enforced decision; always `Permit` or `Deny`.
    pub decision: Decision,
    /// What the PDP actually returned.
    pub pdp_decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    pub obligations_fulfilled: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obligation_failures: Vec<ObligationFailure>,
    /// Responses of policies run through `call-*` obligations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chained: Vec<ResponseContext>,
    pub final_activity_state: ActivityState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuityConfig {
    pub repetitions: u32,
    #[serde(with = "millis")]
    pub interval: Duration,
}

impl ContinuityConfig {
    pub fn new(repetitions: u32, interval: Duration) -> Self {
        Self {
            repetitions: repetitions.max(1),
            interval: interval.max(Duration::from_micros(1)),
        }
    }
}

impl Default for ContinuityConfig {
    fn default() -> Self {
        Self::new(10, Duration::from_millis(5))
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    /// Every repetition ran with a permit.
    Exhausted,
    /// An iteration was denied.
    Revoked,
    /// The activity left `Running` by other means.
    Finished,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Exhausted => "exhausted",
            StopReason::Revoked => "revoked",
            StopReason::Finished => "finished",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub n: u32,
    pub decision: Decision,
    /// Milliseconds since the loop started, at the end of this iteration.
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub activity: ActivityId,
    pub iterations: Vec<Iteration>,
    pub final_state: ActivityState,
    /// `None` while the loop is still running.
    pub stop_reason: Option<StopReason>,
}

impl ContinuityReport {
    pub fn is_complete(&self) -> bool {
        self.stop_reason.is_some()
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Activities and their seven-state life cycle.
//!
//! An activity moves through its life cycle only in response to a requested
//! action and the decision taken on it. [`apply_transition`] is the single
//! place where that graph lives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pdp::Decision;

/// Identifier of an activity. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActivityId(String);

impl ActivityId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvariantViolation("activity id must not be empty".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ActivityId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl TryFrom<&str> for ActivityId {
    type Error = Error;

    fn try_from(value: &str) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ActivityId> for String {
    fn from(id: ActivityId) -> Self {
        id.0
    }
}

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for ActivityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityState {
    Inactive,
    Dormant,
    Aborted,
    Running,
    Hold,
    Revoked,
    Finished,
}

impl ActivityState {
    pub const ALL: [ActivityState; 7] = [
        ActivityState::Inactive,
        ActivityState::Dormant,
        ActivityState::Aborted,
        ActivityState::Running,
        ActivityState::Hold,
        ActivityState::Revoked,
        ActivityState::Finished,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityState::Inactive => "inactive",
            ActivityState::Dormant => "dormant",
            ActivityState::Aborted => "aborted",
            ActivityState::Running => "running",
            ActivityState::Hold => "hold",
            ActivityState::Revoked => "revoked",
            ActivityState::Finished => "finished",
        }
    }

    /// Whether `action` has at least one outgoing edge from this state.
    ///
    /// Used by the PEP to reject a request before any policy is evaluated.
    pub fn accepts(self, action: ActionId) -> bool {
        std::iter::once(None)
            .chain(Decision::ALL.into_iter().map(Some))
            .any(|decision| next_state(self, action, decision).is_some())
    }
}

impl fmt::Display for ActivityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivityState::ALL
            .into_iter()
            .find(|state| state.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown activity state `{s}`")))
    }
}

/// Actions that can be requested on an activity.
///
/// `ContinueActivity` and `PostUpdate` are internal: they are only ever
/// issued by the obligation service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionId {
    #[serde(rename = "startActivity")]
    StartActivity,
    #[serde(rename = "continueActivity")]
    ContinueActivity,
    #[serde(rename = "holdActivity")]
    HoldActivity,
    #[serde(rename = "finishActivity")]
    FinishActivity,
    #[serde(rename = "postUpdate")]
    PostUpdate,
}

impl ActionId {
    pub const ALL: [ActionId; 5] = [
        ActionId::StartActivity,
        ActionId::ContinueActivity,
        ActionId::HoldActivity,
        ActionId::FinishActivity,
        ActionId::PostUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionId::StartActivity => "startActivity",
            ActionId::ContinueActivity => "continueActivity",
            ActionId::HoldActivity => "holdActivity",
            ActionId::FinishActivity => "finishActivity",
            ActionId::PostUpdate => "postUpdate",
        }
    }

    pub fn is_external(self) -> bool {
        !matches!(self, ActionId::ContinueActivity | ActionId::PostUpdate)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActionId::ALL
            .into_iter()
            .find(|action| action.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown action `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub id: ActivityId,
    #[serde(rename = "state")]
    pub current_state: ActivityState,
    pub mutable: bool,
}

impl ActivityRecord {
    pub fn new(id: ActivityId, current_state: ActivityState, mutable: bool) -> Self {
        Self {
            id,
            current_state,
            mutable,
        }
    }
}

/// The life-cycle edge table. `None` as decision means the request has only
/// been intercepted and no decision exists yet.
fn next_state(
    state: ActivityState,
    action: ActionId,
    decision: Option<Decision>,
) -> Option<ActivityState> {
    use ActionId::*;
    use ActivityState::*;

    match (state, action, decision) {
        (Inactive, StartActivity, None) => Some(Dormant),
        (Dormant, StartActivity, Some(Decision::Deny)) => Some(Aborted),
        (Dormant, StartActivity, Some(Decision::Permit)) => Some(Running),
        (Running, ContinueActivity, Some(Decision::Deny)) => Some(Revoked),
        (Running, ContinueActivity, Some(Decision::Permit)) => Some(Running),
        (Running, HoldActivity, Some(Decision::Permit)) => Some(Hold),
        (Running, FinishActivity, Some(Decision::Permit)) => Some(Finished),
        (Finished, PostUpdate, Some(Decision::Permit)) => Some(Inactive),
        _ => None,
    }
}

/// Moves `record` along the life-cycle graph.
///
/// Pass `decision = None` for the interception edge (`Inactive` to
/// `Dormant` on `startActivity`), which happens before any decision.
pub fn apply_transition(
    record: &ActivityRecord,
    action: ActionId,
    decision: Option<Decision>,
) -> Result<ActivityRecord> {
    let to = next_state(record.current_state, action, decision).ok_or_else(|| {
        Error::IllegalTransition {
            activity: record.id.clone(),
            state: record.current_state,
            action,
            decision,
        }
    })?;
    Ok(ActivityRecord {
        current_state: to,
        ..record.clone()
    })
}

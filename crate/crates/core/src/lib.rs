// SPDX-License-Identifier: Apache-2.0

//! Activity-dependency access control.
//!
//! An activity may only start, keep running or finish while the
//! activities it depends on are in the states it needs. The engine
//! evaluates XACML-style policies extended with dependency functions,
//! updates mutable dependents where the policy allows it, and enforces the
//! result along the activity life cycle.

pub mod activity;
pub mod corpus;
pub mod error;
pub mod orchestration;
pub mod pdp;
pub mod policy;
pub mod store;

pub use activity::{apply_transition, ActionId, ActivityId, ActivityRecord, ActivityState};
pub use error::{Error, Result};
pub use orchestration::{
    ContinuityConfig, ContinuityReport, Engine, EngineConfig, FlowObserver, FlowStep, RecordingObserver,
    RequestContext, ResponseContext, StopReason,
};
pub use pdp::{Decision, EvaluationContext, EvaluationResult, PolicyIndex};
pub use policy::PolicySet;
pub use store::{DependencyStore, Fixture, Phase, Txn, WriteCause};

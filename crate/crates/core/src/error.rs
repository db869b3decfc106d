// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use crate::activity::{ActionId, ActivityId, ActivityState};
use crate::pdp::Decision;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),

    #[error("illegal transition for `{activity}`: {action} from {state} with decision {decision:?}")]
    IllegalTransition {
        activity: ActivityId,
        state: ActivityState,
        action: ActionId,
        decision: Option<Decision>,
    },

    #[error("action {0} cannot be requested externally")]
    InternalAction(ActionId),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("xml syntax error: {0}")]
    XmlSyntax(String),

    #[error("json syntax error: {0}")]
    JsonSyntax(String),

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("unknown obligation `{0}`")]
    UnknownObligation(String),

    #[error("obligation `{id}` failed: {reason}")]
    Obligation { id: String, reason: String },

    #[error("activity `{0}` is busy")]
    Busy(String),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// SPDX-License-Identifier: Apache-2.0

use super::{validate, ObligationRegistry, PolicySet};
use crate::error::{Error, Result};

/// Deterministic JSON rendering of a policy set: fixed key order per object,
/// source order for policies and rules, sorted obligation parameters.
pub fn to_canonical_json(ps: &PolicySet) -> String {
    serde_json::to_string_pretty(ps).expect("policy model serializes")
}

pub fn from_canonical_json(text: &str) -> Result<PolicySet> {
    let ps: PolicySet = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::SchemaViolation(e.to_string()),
        _ => Error::JsonSyntax(e.to_string()),
    })?;
    validate(&ps, &ObligationRegistry::default())?;
    Ok(ps)
}

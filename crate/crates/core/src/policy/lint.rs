// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::Serialize;

use super::{CombiningAlg, PolicySet, CALL_POLICY_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub policy_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}", self.policy_id)?;
        if let Some(rule) = &self.rule_id {
            write!(f, "/{rule}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Corpus-level checks that a valid document can still fail:
/// rules shadowed under first-applicable, and policy-call obligations
/// naming policies that do not exist.
pub fn validate_corpus(ps: &PolicySet) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for policy in &ps.policies {
        if policy.rule_combining_alg == CombiningAlg::FirstApplicable {
            let last = policy.rules.len().saturating_sub(1);
            for (i, rule) in policy.rules.iter().enumerate().take(last) {
                if rule.condition.is_none() && rule.target.is_empty() {
                    out.push(Diagnostic {
                        severity: Severity::Warning,
                        policy_id: policy.policy_id.clone(),
                        rule_id: Some(rule.rule_id.clone()),
                        message: format!(
                            "unconditioned {} rule always applies and shadows the {} rule(s) after it",
                            rule.effect,
                            last - i
                        ),
                    });
                }
            }
        }
        for ob in &policy.obligations {
            if let Some(called) = ob.obligation_id.strip_prefix(CALL_POLICY_PREFIX) {
                if ps.policy(called).is_none() {
                    out.push(Diagnostic {
                        severity: Severity::Error,
                        policy_id: policy.policy_id.clone(),
                        rule_id: None,
                        message: format!(
                            "obligation `{}` calls unknown policy `{called}`",
                            ob.obligation_id
                        ),
                    });
                }
            }
        }
    }
    out
}

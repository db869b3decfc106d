// SPDX-License-Identifier: Apache-2.0

//! XACML_AD policy object model.
//!
//! Documents are read with [`parse_policy_set`] (XML) or
//! [`from_canonical_json`]; both run the same [`validate`] pass, so a
//! `PolicySet` in hand is always well typed: function arities and argument
//! types are checked, bound-dependent attributes only appear inside a
//! quantifier or `ForAll`, and provisional actions are `Update`s in the
//! policy's own phase.

mod functions;
mod json;
mod lint;
mod xml;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::activity::{ActionId, ActivityState};
use crate::error::{Error, Result};
use crate::store::Phase;

pub use functions::{Function, ValueType};
pub use json::{from_canonical_json, to_canonical_json};
pub use lint::{validate_corpus, Diagnostic, Severity};
pub use xml::{parse_policy_set, parse_policy_set_with, to_xml, AD_NS, XACML_NS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombiningAlg {
    FirstApplicable,
    OnlyOneApplicable,
    PermitOverrides,
    DenyOverrides,
}

impl CombiningAlg {
    pub fn as_str(self) -> &'static str {
        match self {
            CombiningAlg::FirstApplicable => "first-applicable",
            CombiningAlg::OnlyOneApplicable => "only-one-applicable",
            CombiningAlg::PermitOverrides => "permit-overrides",
            CombiningAlg::DenyOverrides => "deny-overrides",
        }
    }

    /// Accepts the short identifier or any XACML URN ending in it.
    pub fn from_id(id: &str) -> Option<Self> {
        let short = id.rsplit(':').next().unwrap_or(id);
        [
            CombiningAlg::FirstApplicable,
            CombiningAlg::OnlyOneApplicable,
            CombiningAlg::PermitOverrides,
            CombiningAlg::DenyOverrides,
        ]
        .into_iter()
        .find(|alg| alg.as_str() == short)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    Permit,
    Deny,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Permit => "Permit",
            Effect::Deny => "Deny",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    pub policy_set_id: String,
    pub policy_combining_alg: CombiningAlg,
    pub policies: Vec<Policy>,
}

impl PolicySet {
    pub fn policy(&self, id: &str) -> Option<&Policy> {
        self.policies.iter().find(|p| p.policy_id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub policy_id: String,
    pub rule_combining_alg: CombiningAlg,
    pub target: Target,
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub obligations: Vec<ObligationExpression>,
}

impl Policy {
    /// The action ids this policy's target names, in document order.
    pub fn target_actions(&self) -> impl Iterator<Item = &str> {
        self.target.actions.iter().map(|m| m.value.as_str())
    }

    /// The dependency phase this policy decides on, derived from its action
    /// match. `None` when the target names no phase-bearing action or more
    /// than one.
    pub fn phase(&self) -> Option<Phase> {
        let mut phases = self
            .target_actions()
            .filter_map(|a| a.parse::<ActionId>().ok())
            .filter_map(Phase::for_action);
        let first = phases.next()?;
        phases.all(|p| p == first).then_some(first)
    }
}

/// Which requests a policy or rule applies to. An empty section matches
/// everything; otherwise any one match in the section must hold.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    #[serde(default)]
    pub subjects: Vec<Match>,
    #[serde(default)]
    pub resources: Vec<Match>,
    #[serde(default)]
    pub actions: Vec<Match>,
}

impl Target {
    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty() && self.resources.is_empty() && self.actions.is_empty()
    }
}

/// `string-equal(value, attribute)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub attribute: Attribute,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub rule_id: String,
    pub effect: Effect,
    #[serde(default, skip_serializing_if = "Target::is_empty")]
    pub target: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provisional_actions: Option<Vec<ProvisionalAction>>,
}

/// Iteration binding of a provisional action: one variable ranging over the
/// dependent-activity set of the action's phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForAll {
    pub variable_id: String,
}

pub const UPDATE_ACTION: &str = "Update";

/// A state update on each dependent activity of the phase whose guard
/// condition holds. The update sets the dependent to its desired state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionalAction {
    pub fulfillment_phase: Phase,
    pub action: String,
    pub condition: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub for_all: Option<ForAll>,
}

/// Attributes a designator or target match can refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribute {
    SubjectId,
    ResourceId,
    ActionId,
    /// Id of the dependent bound by the enclosing quantifier or `ForAll`.
    DependentId,
    /// Desired state of the bound dependent.
    DesiredState,
}

impl Attribute {
    pub fn value_type(self) -> ValueType {
        match self {
            Attribute::DesiredState => ValueType::State,
            _ => ValueType::String,
        }
    }

    pub fn is_bound(self) -> bool {
        matches!(self, Attribute::DependentId | Attribute::DesiredState)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "data_type", content = "value", rename_all = "kebab-case")]
pub enum Value {
    String(String),
    Boolean(bool),
    #[serde(rename = "activity-state")]
    State(ActivityState),
    Phase(Phase),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::String(_) => ValueType::String,
            Value::Boolean(_) => ValueType::Bool,
            Value::State(_) => ValueType::State,
            Value::Phase(_) => ValueType::Phase,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantifier {
    Exists,
    ForAll,
}

/// Condition expression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expr {
    Apply { function: Function, args: Vec<Expr> },
    Designator { attribute: Attribute },
    Value { value: Value },
    /// Boolean quantifier over the requested activity's dependents in `phase`.
    Quantified {
        quantifier: Quantifier,
        variable_id: String,
        phase: Phase,
        body: Box<Expr>,
    },
}

impl Expr {
    pub fn apply(function: Function, args: Vec<Expr>) -> Self {
        Expr::Apply { function, args }
    }

    pub fn attr(attribute: Attribute) -> Self {
        Expr::Designator { attribute }
    }

    pub fn value(value: Value) -> Self {
        Expr::Value { value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObligationExpression {
    pub obligation_id: String,
    pub fulfill_on: Effect,
    #[serde(default)]
    pub parameters: BTreeMap<String, Value>,
}

pub const UPDATE_STATE_OBLIGATION: &str = "updateRequestedActivityState";
pub const CALL_POLICY_PREFIX: &str = "call-";

/// Obligation ids a policy document may use.
#[derive(Debug, Clone)]
pub struct ObligationRegistry {
    ids: HashSet<String>,
}

impl Default for ObligationRegistry {
    fn default() -> Self {
        Self::new([
            UPDATE_STATE_OBLIGATION,
            "call-continueActivityPolicy",
            "call-postUpdatePolicy",
        ])
    }
}

impl ObligationRegistry {
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            ids: ids.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids.contains(id)
    }
}

/// Structural and type validation shared by the XML and JSON readers.
pub fn validate(ps: &PolicySet, registry: &ObligationRegistry) -> Result<()> {
    let mut policy_ids = HashSet::new();
    for policy in &ps.policies {
        if policy.policy_id.is_empty() {
            return Err(schema("policy with empty PolicyId"));
        }
        if !policy_ids.insert(policy.policy_id.as_str()) {
            return Err(schema(format!("duplicate PolicyId `{}`", policy.policy_id)));
        }
        validate_policy(policy, registry)?;
    }
    Ok(())
}

fn validate_policy(policy: &Policy, registry: &ObligationRegistry) -> Result<()> {
    let pid = &policy.policy_id;
    validate_target(&policy.target, pid)?;
    let mut rule_ids = HashSet::new();
    for rule in &policy.rules {
        if rule.rule_id.is_empty() {
            return Err(schema(format!("rule with empty RuleId in `{pid}`")));
        }
        if !rule_ids.insert(rule.rule_id.as_str()) {
            return Err(schema(format!("duplicate RuleId `{}` in `{pid}`", rule.rule_id)));
        }
        validate_target(&rule.target, &rule.rule_id)?;
        if let Some(cond) = &rule.condition {
            expect_bool(cond, false).map_err(|e| in_rule(e, pid, &rule.rule_id))?;
        }
        for pa in rule.provisional_actions.iter().flatten() {
            if pa.action != UPDATE_ACTION {
                return Err(schema(format!(
                    "rule `{}`: ProvisionalAction must be `{UPDATE_ACTION}`, found `{}`",
                    rule.rule_id, pa.action
                )));
            }
            match policy.phase() {
                Some(phase) if phase == pa.fulfillment_phase => {}
                Some(phase) => {
                    return Err(schema(format!(
                        "rule `{}`: FulfillmentPhase `{}` does not match policy phase `{phase}`",
                        rule.rule_id, pa.fulfillment_phase
                    )))
                }
                None => {
                    return Err(schema(format!(
                        "rule `{}`: provisional actions need a policy targeting startActivity, continueActivity or postUpdate",
                        rule.rule_id
                    )))
                }
            }
            if pa.for_all.as_ref().is_some_and(|f| f.variable_id.is_empty()) {
                return Err(schema(format!("rule `{}`: ForAll without VariableId", rule.rule_id)));
            }
            expect_bool(&pa.condition, true).map_err(|e| in_rule(e, pid, &rule.rule_id))?;
        }
    }
    for ob in &policy.obligations {
        if !registry.contains(&ob.obligation_id) {
            return Err(schema(format!(
                "policy `{pid}`: unknown ObligationId `{}`",
                ob.obligation_id
            )));
        }
        if ob.obligation_id == UPDATE_STATE_OBLIGATION
            && !matches!(ob.parameters.get("state"), Some(Value::State(_)))
        {
            return Err(schema(format!(
                "policy `{pid}`: {UPDATE_STATE_OBLIGATION} needs an activity-state `state` parameter"
            )));
        }
    }
    Ok(())
}

fn validate_target(target: &Target, owner: &str) -> Result<()> {
    let sections = [
        (&target.subjects, Attribute::SubjectId),
        (&target.resources, Attribute::ResourceId),
        (&target.actions, Attribute::ActionId),
    ];
    for (matches, attribute) in sections {
        if let Some(m) = matches.iter().find(|m| m.attribute != attribute) {
            return Err(schema(format!(
                "`{owner}`: target match on {:?} placed in the {attribute:?} section",
                m.attribute
            )));
        }
    }
    Ok(())
}

fn expect_bool(expr: &Expr, bound: bool) -> Result<()> {
    match type_of(expr, bound)? {
        ValueType::Bool => Ok(()),
        other => Err(schema(format!("condition has type {other}, expected boolean"))),
    }
}

/// Static type of `expr`. `bound` says whether a dependent variable is in
/// scope.
fn type_of(expr: &Expr, bound: bool) -> Result<ValueType> {
    match expr {
        Expr::Value { value } => Ok(value.value_type()),
        Expr::Designator { attribute } => {
            if attribute.is_bound() && !bound {
                return Err(schema(format!("{attribute:?} used outside a ForAll/Exists binding")));
            }
            Ok(attribute.value_type())
        }
        Expr::Apply { function, args } => {
            let sig = function.signature();
            match sig.params {
                functions::Params::Fixed(params) => {
                    if params.len() != args.len() {
                        return Err(schema(format!(
                            "`{}` takes {} argument(s), got {}",
                            function.id(),
                            params.len(),
                            args.len()
                        )));
                    }
                    for (i, (want, arg)) in params.iter().zip(args).enumerate() {
                        let got = type_of(arg, bound)?;
                        if got != *want {
                            return Err(schema(format!(
                                "`{}` argument {} has type {got}, expected {want}",
                                function.id(),
                                i + 1
                            )));
                        }
                    }
                }
                functions::Params::Variadic(want) => {
                    for arg in args {
                        let got = type_of(arg, bound)?;
                        if got != want {
                            return Err(schema(format!(
                                "`{}` argument has type {got}, expected {want}",
                                function.id()
                            )));
                        }
                    }
                }
            }
            Ok(sig.returns)
        }
        Expr::Quantified {
            variable_id, body, ..
        } => {
            if bound {
                return Err(schema("nested dependent bindings are not supported"));
            }
            if variable_id.is_empty() {
                return Err(schema("quantifier without VariableId"));
            }
            expect_bool(body, true)?;
            Ok(ValueType::Bool)
        }
    }
}

fn schema(msg: impl Into<String>) -> Error {
    Error::SchemaViolation(msg.into())
}

fn in_rule(err: Error, policy: &str, rule: &str) -> Error {
    match err {
        Error::SchemaViolation(msg) => schema(format!("policy `{policy}`, rule `{rule}`: {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bool_lit(b: bool) -> Expr {
        Expr::value(Value::Boolean(b))
    }

    #[test]
    fn arity_checked() {
        let e = Expr::apply(Function::Not, vec![bool_lit(true), bool_lit(false)]);
        assert!(matches!(type_of(&e, false), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn types_checked() {
        let e = Expr::apply(
            Function::StateEqual,
            vec![Expr::attr(Attribute::ResourceId), Expr::value(Value::Phase(Phase::Pre))],
        );
        assert!(type_of(&e, false).is_err());
    }

    #[test]
    fn bound_attribute_needs_binding() {
        let e = Expr::apply(Function::IsMutable, vec![Expr::attr(Attribute::DependentId)]);
        assert!(type_of(&e, false).is_err());
        let q = Expr::Quantified {
            quantifier: Quantifier::Exists,
            variable_id: "d".into(),
            phase: Phase::Pre,
            body: Box::new(e),
        };
        assert_eq!(type_of(&q, false).unwrap(), ValueType::Bool);
        assert!(type_of(&q, true).is_err());
    }

    #[test]
    fn combining_ids() {
        assert_eq!(CombiningAlg::from_id("first-applicable"), Some(CombiningAlg::FirstApplicable));
        assert_eq!(
            CombiningAlg::from_id("urn:oasis:names:tc:xacml:1.0:policy-combining-algorithm:only-one-applicable"),
            Some(CombiningAlg::OnlyOneApplicable)
        );
        assert_eq!(CombiningAlg::from_id("ordered-deny-overrides"), None);
    }
}

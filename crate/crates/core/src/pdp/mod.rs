// SPDX-License-Identifier: Apache-2.0

//! Policy decision point.
//!
//! Evaluation reads and writes activity information only through the
//! [`InformationPoint`] in the [`EvaluationContext`], normally an open store
//! transaction. Provisional updates run inside that transaction; any policy
//! or policy set that does not end in `Permit` undoes its own writes before
//! returning, so the caller can commit on `Permit` and keep nothing else.

mod condition;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::activity::ActionId;
use crate::error::Result;
use crate::orchestration::{FlowObserver, FlowStep, RequestContext};
use crate::policy::{
    Attribute, CombiningAlg, Effect, Match, ObligationExpression, Policy, PolicySet, Rule, Target,
};
use crate::store::{InformationPoint, WriteCause};

pub use condition::{chain_requirements, eval_condition, ChainEntry};

pub const DEFAULT_CHAIN_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Permit,
    Deny,
    NotApplicable,
    Indeterminate,
}

impl Decision {
    pub const ALL: [Decision; 4] = [
        Decision::Permit,
        Decision::Deny,
        Decision::NotApplicable,
        Decision::Indeterminate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Permit => "permit",
            Decision::Deny => "deny",
            Decision::NotApplicable => "not-applicable",
            Decision::Indeterminate => "indeterminate",
        }
    }

    fn effect(self) -> Option<Effect> {
        match self {
            Decision::Permit => Some(Effect::Permit),
            Decision::Deny => Some(Effect::Deny),
            _ => None,
        }
    }
}

impl From<Effect> for Decision {
    fn from(e: Effect) -> Self {
        match e {
            Effect::Permit => Decision::Permit,
            Effect::Deny => Decision::Deny,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub struct EvaluationContext<'a> {
    pub request: &'a RequestContext,
    pub info: &'a mut dyn InformationPoint,
    /// How many dependency levels are read, counting the direct dependents
    /// as level one. At least 1.
    pub chain_depth_limit: usize,
    pub observer: Option<&'a dyn FlowObserver>,
}

impl<'a> EvaluationContext<'a> {
    pub fn new(request: &'a RequestContext, info: &'a mut dyn InformationPoint) -> Self {
        Self {
            request,
            info,
            chain_depth_limit: DEFAULT_CHAIN_DEPTH,
            observer: None,
        }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.chain_depth_limit = depth.max(1);
        self
    }

    pub fn with_observer(mut self, observer: &'a dyn FlowObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    fn note(&self, step: FlowStep) {
        if let Some(o) = self.observer {
            o.record(step);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub decision: Decision,
    /// Obligations of the deciding policy (or policies) whose `FulfillOn`
    /// equals the decision.
    pub obligations: Vec<ObligationExpression>,
    pub policy_id: Option<String>,
    pub rule_id: Option<String>,
    /// Why the result is `Indeterminate`, if it is.
    pub error: Option<String>,
}

impl EvaluationResult {
    fn bare(decision: Decision) -> Self {
        Self {
            decision,
            obligations: Vec::new(),
            policy_id: None,
            rule_id: None,
            error: None,
        }
    }

    fn indeterminate(error: impl Into<String>) -> Self {
        Self {
            error: Some(error.into()),
            ..Self::bare(Decision::Indeterminate)
        }
    }
}

/// Policy retrieval point: an index from action id to the policies whose
/// target can match it, in document order. Policies without an action match
/// are candidates for every action.
#[derive(Debug, Clone)]
pub struct PolicyIndex {
    by_action: HashMap<String, Vec<usize>>,
    wildcard: Vec<usize>,
}

impl PolicyIndex {
    pub fn build(ps: &PolicySet) -> Self {
        let mut by_action: HashMap<String, Vec<usize>> = HashMap::new();
        let mut wildcard = Vec::new();
        for (i, p) in ps.policies.iter().enumerate() {
            if p.target.actions.is_empty() {
                wildcard.push(i);
            }
            for action in p.target_actions() {
                let list = by_action.entry(action.to_owned()).or_default();
                if list.last() != Some(&i) {
                    list.push(i);
                }
            }
        }
        Self { by_action, wildcard }
    }

    /// Candidate policy indices for `action`, ascending.
    pub fn candidates(&self, action: ActionId) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .by_action
            .get(action.as_str())
            .into_iter()
            .flatten()
            .chain(&self.wildcard)
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The first candidate policy for `action`, if any.
    pub fn lookup<'p>(&self, ps: &'p PolicySet, action: ActionId) -> Option<&'p Policy> {
        self.candidates(action).first().map(|&i| &ps.policies[i])
    }
}

/// Evaluates the whole policy set against the request.
///
/// Fails only when the requested activity is unknown; every other problem
/// ends in `Indeterminate`.
pub fn evaluate(ps: &PolicySet, ctx: &mut EvaluationContext<'_>) -> Result<EvaluationResult> {
    let all: Vec<usize> = (0..ps.policies.len()).collect();
    evaluate_candidates(ps, &all, ctx)
}

/// Same as [`evaluate`] but only considers the policies the index returns.
pub fn evaluate_indexed(
    ps: &PolicySet,
    index: &PolicyIndex,
    ctx: &mut EvaluationContext<'_>,
) -> Result<EvaluationResult> {
    let candidates = index.candidates(ctx.request.action_id);
    evaluate_candidates(ps, &candidates, ctx)
}

fn evaluate_candidates(
    ps: &PolicySet,
    candidates: &[usize],
    ctx: &mut EvaluationContext<'_>,
) -> Result<EvaluationResult> {
    ctx.info.activity(ctx.request.resource.as_str())?;
    ctx.note(FlowStep::PolicyRetrieval);
    let matching: Vec<&Policy> = candidates
        .iter()
        .map(|&i| &ps.policies[i])
        .filter(|p| target_matches(&p.target, ctx.request))
        .collect();

    let savepoint = ctx.info.savepoint();
    let result = match ps.policy_combining_alg {
        CombiningAlg::OnlyOneApplicable => match matching.as_slice() {
            [] => EvaluationResult::bare(Decision::NotApplicable),
            [only] => evaluate_policy(only, ctx)?,
            _ => EvaluationResult::indeterminate(format!(
                "{} policies match action {}",
                matching.len(),
                ctx.request.action_id
            )),
        },
        CombiningAlg::FirstApplicable => {
            let mut out = EvaluationResult::bare(Decision::NotApplicable);
            for p in matching {
                let r = evaluate_policy(p, ctx)?;
                if r.decision != Decision::NotApplicable {
                    out = r;
                    break;
                }
            }
            out
        }
        CombiningAlg::PermitOverrides | CombiningAlg::DenyOverrides => {
            let mut results = Vec::new();
            for p in matching {
                results.push(evaluate_policy(p, ctx)?);
            }
            overrides(ps.policy_combining_alg, results)
        }
    };
    if result.decision != Decision::Permit {
        ctx.info.restore(savepoint);
    }
    Ok(result)
}

/// Combines policy results under permit- or deny-overrides, collecting the
/// obligations of every policy that reached the final decision.
fn overrides(alg: CombiningAlg, results: Vec<EvaluationResult>) -> EvaluationResult {
    let winner = if alg == CombiningAlg::PermitOverrides {
        Decision::Permit
    } else {
        Decision::Deny
    };
    let loser = if winner == Decision::Permit {
        Decision::Deny
    } else {
        Decision::Permit
    };
    let decision = [winner, Decision::Indeterminate, loser]
        .into_iter()
        .find(|d| results.iter().any(|r| r.decision == *d))
        .unwrap_or(Decision::NotApplicable);
    let mut out = EvaluationResult::bare(decision);
    for r in results.into_iter().filter(|r| r.decision == decision) {
        if out.policy_id.is_none() {
            out.policy_id = r.policy_id;
            out.rule_id = r.rule_id;
        }
        out.error = out.error.or(r.error);
        out.obligations.extend(r.obligations);
    }
    out
}

fn target_matches(target: &Target, request: &RequestContext) -> bool {
    let section = |matches: &[Match]| {
        matches.is_empty()
            || matches.iter().any(|m| {
                let actual = match m.attribute {
                    Attribute::SubjectId => request.subject.as_str(),
                    Attribute::ResourceId => request.resource.as_str(),
                    Attribute::ActionId => request.action_id.as_str(),
                    Attribute::DependentId | Attribute::DesiredState => return false,
                };
                actual == m.value
            })
    };
    section(&target.subjects) && section(&target.resources) && section(&target.actions)
}

/// Evaluates one policy whose target is already known to match.
pub fn evaluate_policy(policy: &Policy, ctx: &mut EvaluationContext<'_>) -> Result<EvaluationResult> {
    let savepoint = ctx.info.savepoint();
    let mut decided: Option<(Decision, Option<&str>)> = None;
    let mut error = None;

    match policy.rule_combining_alg {
        CombiningAlg::FirstApplicable => {
            for rule in &policy.rules {
                match evaluate_rule(rule, ctx) {
                    Ok(Decision::NotApplicable) => continue,
                    Ok(d) => {
                        decided = Some((d, Some(&rule.rule_id)));
                        break;
                    }
                    Err(e) => {
                        error = Some(format!("rule `{}`: {e}", rule.rule_id));
                        decided = Some((Decision::Indeterminate, Some(&rule.rule_id)));
                        break;
                    }
                }
            }
        }
        CombiningAlg::PermitOverrides | CombiningAlg::DenyOverrides => {
            let winner = if policy.rule_combining_alg == CombiningAlg::PermitOverrides {
                Decision::Permit
            } else {
                Decision::Deny
            };
            let mut seen: Vec<(Decision, &str)> = Vec::new();
            for rule in &policy.rules {
                let d = match evaluate_rule(rule, ctx) {
                    Ok(d) => d,
                    Err(e) => {
                        error.get_or_insert_with(|| format!("rule `{}`: {e}", rule.rule_id));
                        Decision::Indeterminate
                    }
                };
                seen.push((d, &rule.rule_id));
                if d == winner {
                    break;
                }
            }
            let loser = if winner == Decision::Permit { Decision::Deny } else { Decision::Permit };
            decided = [winner, Decision::Indeterminate, loser]
                .into_iter()
                .find_map(|want| seen.iter().find(|(d, _)| *d == want).map(|(d, id)| (*d, Some(*id))));
        }
        CombiningAlg::OnlyOneApplicable => {
            let mut applicable = Vec::new();
            for rule in &policy.rules {
                let mark = ctx.info.savepoint();
                match evaluate_rule(rule, ctx) {
                    Ok(Decision::NotApplicable) => {}
                    Ok(d) => applicable.push((d, rule.rule_id.as_str())),
                    Err(e) => {
                        ctx.info.restore(mark);
                        error = Some(format!("rule `{}`: {e}", rule.rule_id));
                        applicable.push((Decision::Indeterminate, rule.rule_id.as_str()));
                    }
                }
            }
            decided = match applicable.as_slice() {
                [] => None,
                [(d, id)] => Some((*d, Some(*id))),
                _ => {
                    error.get_or_insert_with(|| "more than one rule applies".into());
                    Some((Decision::Indeterminate, None))
                }
            };
        }
    }

    let (decision, rule_id) = decided.unwrap_or((Decision::NotApplicable, None));
    if decision != Decision::Permit {
        ctx.info.restore(savepoint);
    }
    let obligations = match decision.effect() {
        Some(effect) => policy
            .obligations
            .iter()
            .filter(|o| o.fulfill_on == effect)
            .cloned()
            .collect(),
        None => Vec::new(),
    };
    Ok(EvaluationResult {
        decision,
        obligations,
        policy_id: Some(policy.policy_id.clone()),
        rule_id: rule_id.map(str::to_owned),
        error: if decision == Decision::Indeterminate { error } else { None },
    })
}

/// Evaluates a single rule: `NotApplicable` unless its target and condition
/// hold; otherwise runs its provisional actions and returns its effect.
pub fn evaluate_rule(rule: &Rule, ctx: &mut EvaluationContext<'_>) -> Result<Decision> {
    if !target_matches(&rule.target, ctx.request) {
        return Ok(Decision::NotApplicable);
    }
    if let Some(cond) = &rule.condition {
        if !eval_condition(cond, ctx)? {
            return Ok(Decision::NotApplicable);
        }
    }
    for pa in rule.provisional_actions.iter().flatten() {
        let resource = ctx.request.resource.as_str().to_owned();
        let specs = ctx.info.dependencies(&resource, pa.fulfillment_phase)?;
        for spec in &specs {
            if condition::eval_bound(&pa.condition, ctx, spec)? {
                ctx.note(FlowStep::ProvisionalUpdate);
                ctx.info
                    .set_state(spec.dependent.as_str(), spec.desired_state, WriteCause::Provisional)?;
            }
        }
    }
    Ok(rule.effect.into())
}

// SPDX-License-Identifier: Apache-2.0

use crate::activity::{ActivityId, ActivityState};
use crate::error::{Error, Result};
use crate::policy::{Attribute, Expr, Function, Quantifier, Value};
use crate::store::{DependencySpec, InformationPoint};

use super::EvaluationContext;

/// Evaluates a boolean condition with no dependent bound.
pub fn eval_condition(expr: &Expr, ctx: &mut EvaluationContext<'_>) -> Result<bool> {
    as_bool(eval(expr, ctx, None)?)
}

/// Evaluates a boolean condition with `spec` bound as the current dependent.
pub(crate) fn eval_bound(expr: &Expr, ctx: &mut EvaluationContext<'_>, spec: &DependencySpec) -> Result<bool> {
    as_bool(eval(expr, ctx, Some(spec))?)
}

fn as_bool(v: Value) -> Result<bool> {
    match v {
        Value::Boolean(b) => Ok(b),
        other => Err(Error::Evaluation(format!("expected boolean, got {}", other.value_type()))),
    }
}

fn eval(expr: &Expr, ctx: &mut EvaluationContext<'_>, bound: Option<&DependencySpec>) -> Result<Value> {
    match expr {
        Expr::Value { value } => Ok(value.clone()),
        Expr::Designator { attribute } => designator(*attribute, ctx, bound),
        Expr::Quantified {
            quantifier,
            phase,
            body,
            ..
        } => {
            if bound.is_some() {
                return Err(Error::Evaluation("nested dependent binding".into()));
            }
            let resource = ctx.request.resource.as_str().to_owned();
            let specs = ctx.info.dependencies(&resource, *phase)?;
            let mut result = *quantifier == Quantifier::ForAll;
            for spec in &specs {
                let holds = as_bool(eval(body, ctx, Some(spec))?)?;
                match quantifier {
                    Quantifier::Exists if holds => {
                        result = true;
                        break;
                    }
                    Quantifier::ForAll if !holds => {
                        result = false;
                        break;
                    }
                    _ => {}
                }
            }
            Ok(Value::Boolean(result))
        }
        Expr::Apply { function, args } => apply(*function, args, ctx, bound),
    }
}

fn designator(attribute: Attribute, ctx: &EvaluationContext<'_>, bound: Option<&DependencySpec>) -> Result<Value> {
    let unbound = || Error::Evaluation(format!("{attribute:?} used without a bound dependent"));
    Ok(match attribute {
        Attribute::SubjectId => Value::String(ctx.request.subject.clone()),
        Attribute::ResourceId => Value::String(ctx.request.resource.to_string()),
        Attribute::ActionId => Value::String(ctx.request.action_id.as_str().to_owned()),
        Attribute::DependentId => Value::String(bound.ok_or_else(unbound)?.dependent.to_string()),
        Attribute::DesiredState => Value::State(bound.ok_or_else(unbound)?.desired_state),
    })
}

fn apply(
    function: Function,
    args: &[Expr],
    ctx: &mut EvaluationContext<'_>,
    bound: Option<&DependencySpec>,
) -> Result<Value> {
    match function {
        Function::And | Function::Or => {
            let short = function == Function::Or;
            for arg in args {
                if as_bool(eval(arg, ctx, bound)?)? == short {
                    return Ok(Value::Boolean(short));
                }
            }
            return Ok(Value::Boolean(!short));
        }
        Function::Not => {
            let [arg] = args else {
                return Err(arity(function, 1, args.len()));
            };
            return Ok(Value::Boolean(!as_bool(eval(arg, ctx, bound)?)?));
        }
        _ => {}
    }

    let values = args
        .iter()
        .map(|a| eval(a, ctx, bound))
        .collect::<Result<Vec<_>>>()?;
    let info = &*ctx.info;
    let depth = ctx.chain_depth_limit;
    let out = match (function, values.as_slice()) {
        (Function::StateEqual, [Value::String(a), Value::State(s)]) => info.activity(a)?.current_state == *s,
        (Function::IsMutable, [Value::String(a)]) => info.activity(a)?.mutable,
        (Function::DependencySetEmpty, [Value::String(a), Value::Phase(p)]) => info.dependencies(a, *p)?.is_empty(),
        (Function::AllInDesiredState, [Value::String(a), Value::Phase(p)]) => {
            let mut all = true;
            for spec in info.dependencies(a, *p)? {
                if info.activity(spec.dependent.as_str())?.current_state != spec.desired_state {
                    all = false;
                    break;
                }
            }
            all
        }
        (Function::ChainEmpty, [Value::String(a), Value::State(t)]) => {
            chain_requirements(info, a, *t, depth)?.is_empty()
        }
        (Function::ChainAllInRequiredState, [Value::String(a), Value::State(t)]) => chain_requirements(info, a, *t, depth)?
            .iter()
            .all(ChainEntry::satisfied),
        (Function::ChainHasImmutableUpdateNeeded, [Value::String(a), Value::State(t)]) => {
            chain_requirements(info, a, *t, depth)?
                .iter()
                .any(|e| !e.satisfied() && !e.mutable)
        }
        (Function::StringEqual, [Value::String(a), Value::String(b)]) => a == b,
        (f, vals) => {
            return Err(Error::Evaluation(format!(
                "`{}` cannot be applied to ({})",
                f.id(),
                vals.iter().map(|v| v.value_type().to_string()).collect::<Vec<_>>().join(", ")
            )))
        }
    };
    Ok(Value::Boolean(out))
}

fn arity(f: Function, want: usize, got: usize) -> Error {
    Error::Evaluation(format!("`{}` takes {want} argument(s), got {got}", f.id()))
}

/// One requirement found while walking a transition-dependency chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainEntry {
    pub activity: ActivityId,
    pub required: ActivityState,
    pub current: ActivityState,
    pub mutable: bool,
    /// Dependency level; requirements of a direct dependent are level 2.
    pub level: usize,
}

impl ChainEntry {
    pub fn satisfied(&self) -> bool {
        self.current == self.required
    }
}

/// Requirements that `activity` (a level-one dependent) needs before it can
/// move to `target`, read down to `depth_limit` levels. A requirement's own
/// chain is followed only when that requirement is unmet, since a
/// requirement already in place does not change state.
pub fn chain_requirements(
    info: &dyn InformationPoint,
    activity: &str,
    target: ActivityState,
    depth_limit: usize,
) -> Result<Vec<ChainEntry>> {
    let mut out = Vec::new();
    walk(info, activity, target, 2, depth_limit, &mut out)?;
    Ok(out)
}

fn walk(
    info: &dyn InformationPoint,
    activity: &str,
    target: ActivityState,
    level: usize,
    limit: usize,
    out: &mut Vec<ChainEntry>,
) -> Result<()> {
    if level > limit {
        return Ok(());
    }
    for req in info.transition_dependencies(activity, target)? {
        let record = info.activity(req.activity.as_str())?;
        let entry = ChainEntry {
            activity: req.activity,
            required: req.state,
            current: record.current_state,
            mutable: record.mutable,
            level,
        };
        let descend = !entry.satisfied();
        let (next, state) = (entry.activity.clone(), entry.required);
        out.push(entry);
        if descend {
            walk(info, next.as_str(), state, level + 1, limit, out)?;
        }
    }
    Ok(())
}

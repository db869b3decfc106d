// SPDX-License-Identifier: Apache-2.0

//! XML reader and writer for XACML_AD documents.
//!
//! Standard elements live in the XACML 3.0 namespace (elements without a
//! namespace are read as XACML too); the extension elements
//! `ProvisionalActions`, `ProvisionalAction`, `ForAll` and `Exists` live in
//! [`AD_NS`]. Unknown elements in either namespace are rejected; elements
//! from any other namespace are skipped.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{
    validate, Attribute, CombiningAlg, Effect, Expr, ForAll, Function, Match, ObligationExpression,
    ObligationRegistry, Policy, PolicySet, ProvisionalAction, Quantifier, Rule, Target, Value,
};
use crate::activity::ActivityState;
use crate::error::{Error, Result};
use crate::store::Phase;

pub const XACML_NS: &str = "urn:oasis:names:tc:xacml:3.0:core:schema:wd-17";
pub const AD_NS: &str = "urn:xacml-ad:1.0";

const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";
const AD_STATE: &str = "urn:xacml-ad:data-type:activity-state";
const AD_PHASE: &str = "urn:xacml-ad:data-type:phase";

const CAT_SUBJECT: &str = "urn:oasis:names:tc:xacml:1.0:subject-category:access-subject";
const CAT_RESOURCE: &str = "urn:oasis:names:tc:xacml:3.0:attribute-category:resource";
const CAT_ACTION: &str = "urn:oasis:names:tc:xacml:3.0:attribute-category:action";
const CAT_BOUND: &str = "urn:xacml-ad:attribute-category:bound-dependent";

const STRING_EQUAL: &str = "urn:oasis:names:tc:xacml:1.0:function:string-equal";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ns {
    Core,
    Ad,
}

/// Parses and validates a policy set using the default obligation registry.
pub fn parse_policy_set(document: &str) -> Result<PolicySet> {
    parse_policy_set_with(document, &ObligationRegistry::default())
}

pub fn parse_policy_set_with(document: &str, registry: &ObligationRegistry) -> Result<PolicySet> {
    let doc = Document::parse(document).map_err(|e| Error::XmlSyntax(e.to_string()))?;
    let root = doc.root_element();
    match name(root) {
        Some((Ns::Core, "PolicySet")) => {}
        _ => return Err(schema(format!("root element must be PolicySet, found `{}`", root.tag_name().name()))),
    }
    let ps = policy_set(root)?;
    validate(&ps, registry)?;
    Ok(ps)
}

fn name<'a>(node: Node<'a, '_>) -> Option<(Ns, &'a str)> {
    if !node.is_element() {
        return None;
    }
    let tag = node.tag_name();
    match tag.namespace() {
        None | Some(XACML_NS) => Some((Ns::Core, tag.name())),
        Some(AD_NS) => Some((Ns::Ad, tag.name())),
        Some(_) => None,
    }
}

/// Element children in known namespaces, minus `Description`.
fn children<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = (Ns, &'a str, Node<'a, 'i>)> {
    node.children()
        .filter_map(|c| name(c).map(|(ns, n)| (ns, n, c)))
        .filter(|(ns, n, _)| !(*ns == Ns::Core && *n == "Description"))
}

fn unexpected(parent: Node, ns: Ns, child: &str) -> Error {
    let prefix = if ns == Ns::Ad { "XACML_AD:" } else { "" };
    schema(format!(
        "unexpected element <{prefix}{child}> inside <{}>",
        parent.tag_name().name()
    ))
}

fn required<'a>(node: Node<'a, '_>, attr: &str) -> Result<&'a str> {
    node.attribute(attr)
        .ok_or_else(|| schema(format!("<{}> is missing attribute `{attr}`", node.tag_name().name())))
}

fn policy_set(node: Node) -> Result<PolicySet> {
    let policy_set_id = required(node, "PolicySetId")?.to_owned();
    let policy_combining_alg = combining(required(node, "PolicyCombiningAlgId")?)?;
    let mut policies = Vec::new();
    for (ns, n, child) in children(node) {
        match (ns, n) {
            (Ns::Core, "Policy") => policies.push(policy(child)?),
            (Ns::Core, "Target") if target(child)?.is_empty() => {}
            _ => return Err(unexpected(node, ns, n)),
        }
    }
    Ok(PolicySet {
        policy_set_id,
        policy_combining_alg,
        policies,
    })
}

fn combining(id: &str) -> Result<CombiningAlg> {
    CombiningAlg::from_id(id).ok_or_else(|| schema(format!("unknown combining algorithm `{id}`")))
}

fn policy(node: Node) -> Result<Policy> {
    let policy_id = required(node, "PolicyId")?.to_owned();
    let rule_combining_alg = combining(required(node, "RuleCombiningAlgId")?)?;
    let mut tgt = Target::default();
    let mut rules = Vec::new();
    let mut obligations = Vec::new();
    for (ns, n, child) in children(node) {
        match (ns, n) {
            (Ns::Core, "Target") => tgt = target(child)?,
            (Ns::Core, "Rule") => rules.push(rule(child)?),
            (Ns::Core, "ObligationExpressions") => {
                for (ns, n, ob) in children(child) {
                    match (ns, n) {
                        (Ns::Core, "ObligationExpression") => obligations.push(obligation(ob)?),
                        _ => return Err(unexpected(child, ns, n)),
                    }
                }
            }
            _ => return Err(unexpected(node, ns, n)),
        }
    }
    Ok(Policy {
        policy_id,
        rule_combining_alg,
        target: tgt,
        rules,
        obligations,
    })
}

fn target(node: Node) -> Result<Target> {
    let mut out = Target::default();
    for (ns, n, section) in children(node) {
        let (list, match_tag, attribute) = match (ns, n) {
            (Ns::Core, "AccessSubject") => (&mut out.subjects, "SubjectMatch", Attribute::SubjectId),
            (Ns::Core, "Resource") => (&mut out.resources, "ResourceMatch", Attribute::ResourceId),
            (Ns::Core, "Action") => (&mut out.actions, "ActionMatch", Attribute::ActionId),
            _ => return Err(unexpected(node, ns, n)),
        };
        for (ns, n, m) in children(section) {
            if ns != Ns::Core || n != match_tag {
                return Err(unexpected(section, ns, n));
            }
            let parsed = target_match(m)?;
            if parsed.attribute != attribute {
                return Err(schema(format!("<{match_tag}> must compare {attribute:?}")));
            }
            list.push(parsed);
        }
    }
    Ok(out)
}

fn target_match(node: Node) -> Result<Match> {
    let match_id = required(node, "MatchId")?;
    if Function::from_id(match_id) != Some(Function::StringEqual) {
        return Err(schema(format!("unsupported MatchId `{match_id}`")));
    }
    let mut value = None;
    let mut attribute = None;
    for (ns, n, child) in children(node) {
        match (ns, n) {
            (Ns::Core, "AttributeValue") if value.is_none() => match attribute_value(child)? {
                Value::String(s) => value = Some(s),
                other => return Err(schema(format!("target match value must be a string, got {}", other.value_type()))),
            },
            (Ns::Core, "AttributeDesignator") if attribute.is_none() => attribute = Some(designator(child)?),
            _ => return Err(unexpected(node, ns, n)),
        }
    }
    match (value, attribute) {
        (Some(value), Some(attribute)) => Ok(Match { attribute, value }),
        _ => Err(schema("match needs one AttributeValue and one AttributeDesignator")),
    }
}

fn rule(node: Node) -> Result<Rule> {
    let rule_id = required(node, "RuleId")?.to_owned();
    let effect = match required(node, "Effect")? {
        "Permit" => Effect::Permit,
        "Deny" => Effect::Deny,
        other => return Err(schema(format!("rule `{rule_id}`: unknown Effect `{other}`"))),
    };
    let mut out = Rule {
        rule_id,
        effect,
        target: Target::default(),
        condition: None,
        provisional_actions: None,
    };
    for (ns, n, child) in children(node) {
        match (ns, n) {
            (Ns::Core, "Target") => out.target = target(child)?,
            (Ns::Core, "Condition") if out.condition.is_none() => out.condition = Some(condition(child)?),
            (Ns::Ad, "ProvisionalActions") if out.provisional_actions.is_none() => {
                out.provisional_actions = Some(provisional_actions(child)?)
            }
            _ => return Err(unexpected(node, ns, n)),
        }
    }
    Ok(out)
}

fn condition(node: Node) -> Result<Expr> {
    let mut exprs = children(node);
    let Some((ns, n, child)) = exprs.next() else {
        return Err(schema("empty <Condition>"));
    };
    let expr = expression(ns, n, child, node)?;
    if let Some((ns, n, _)) = exprs.next() {
        return Err(unexpected(node, ns, n));
    }
    Ok(expr)
}

fn expression(ns: Ns, n: &str, node: Node, parent: Node) -> Result<Expr> {
    match (ns, n) {
        (Ns::Core, "Apply") => {
            let id = required(node, "FunctionId")?;
            let function = Function::from_id(id).ok_or_else(|| schema(format!("unknown FunctionId `{id}`")))?;
            let args = children(node)
                .map(|(ns, n, c)| expression(ns, n, c, node))
                .collect::<Result<_>>()?;
            Ok(Expr::Apply { function, args })
        }
        (Ns::Core, "AttributeValue") => Ok(Expr::value(attribute_value(node)?)),
        (Ns::Core, "AttributeDesignator") => Ok(Expr::attr(designator(node)?)),
        (Ns::Ad, "Exists") | (Ns::Ad, "ForAll") => {
            let quantifier = if n == "Exists" { Quantifier::Exists } else { Quantifier::ForAll };
            let variable_id = required(node, "VariableId")?.to_owned();
            let phase = required(node, "Phase")?
                .parse::<Phase>()
                .map_err(|e| schema(e.to_string()))?;
            let body = condition(node)?;
            Ok(Expr::Quantified {
                quantifier,
                variable_id,
                phase,
                body: Box::new(body),
            })
        }
        _ => Err(unexpected(parent, ns, n)),
    }
}

fn attribute_value(node: Node) -> Result<Value> {
    let data_type = node.attribute("DataType").unwrap_or(XSD_STRING);
    let text = node.text().unwrap_or("").trim();
    let bad = |e: Error| schema(format!("bad {data_type} literal `{text}`: {e}"));
    match data_type {
        XSD_STRING | "string" => Ok(Value::String(text.to_owned())),
        XSD_BOOLEAN | "boolean" => match text {
            "true" | "1" => Ok(Value::Boolean(true)),
            "false" | "0" => Ok(Value::Boolean(false)),
            _ => Err(schema(format!("bad boolean literal `{text}`"))),
        },
        AD_STATE | "activity-state" => text.parse::<ActivityState>().map(Value::State).map_err(bad),
        AD_PHASE | "phase" => text.parse::<Phase>().map(Value::Phase).map_err(bad),
        other => Err(schema(format!("unsupported DataType `{other}`"))),
    }
}

fn designator(node: Node) -> Result<Attribute> {
    let id = required(node, "AttributeId")?;
    let attribute = match id {
        "subject-id" | "urn:oasis:names:tc:xacml:1.0:subject:subject-id" => Attribute::SubjectId,
        "resource-id" | "urn:oasis:names:tc:xacml:1.0:resource:resource-id" => Attribute::ResourceId,
        "action-id" | "urn:oasis:names:tc:xacml:1.0:action:action-id" => Attribute::ActionId,
        "dependent-id" | "urn:xacml-ad:attribute:dependent-id" => Attribute::DependentId,
        "desired-state" | "urn:xacml-ad:attribute:desired-state" => Attribute::DesiredState,
        other => return Err(schema(format!("unknown AttributeId `{other}`"))),
    };
    if let Some(category) = node.attribute("Category") {
        let expected = category_of(attribute);
        let short = expected.rsplit(':').next().unwrap_or(expected);
        if category != expected && category != short {
            return Err(schema(format!("attribute `{id}` does not belong to category `{category}`")));
        }
    }
    Ok(attribute)
}

fn category_of(attribute: Attribute) -> &'static str {
    match attribute {
        Attribute::SubjectId => CAT_SUBJECT,
        Attribute::ResourceId => CAT_RESOURCE,
        Attribute::ActionId => CAT_ACTION,
        Attribute::DependentId | Attribute::DesiredState => CAT_BOUND,
    }
}

fn provisional_actions(node: Node) -> Result<Vec<ProvisionalAction>> {
    let mut out = Vec::new();
    for (ns, n, child) in children(node) {
        match (ns, n) {
            (Ns::Ad, "ProvisionalAction") => out.push(provisional_action(child, None)?),
            (Ns::Ad, "ForAll") => {
                let binding = ForAll {
                    variable_id: required(child, "VariableId")?.to_owned(),
                };
                let mut any = false;
                for (ns, n, pa) in children(child) {
                    match (ns, n) {
                        (Ns::Ad, "ProvisionalAction") => {
                            out.push(provisional_action(pa, Some(binding.clone()))?);
                            any = true;
                        }
                        _ => return Err(unexpected(child, ns, n)),
                    }
                }
                if !any {
                    return Err(schema("<ForAll> without ProvisionalAction"));
                }
            }
            _ => return Err(unexpected(node, ns, n)),
        }
    }
    if out.is_empty() {
        return Err(schema("empty <ProvisionalActions>"));
    }
    Ok(out)
}

fn provisional_action(node: Node, for_all: Option<ForAll>) -> Result<ProvisionalAction> {
    let fulfillment_phase = required(node, "FulfillmentPhase")?
        .parse::<Phase>()
        .map_err(|e| schema(e.to_string()))?;
    let action = required(node, "ProvisionalAction")?.to_owned();
    let mut cond = None;
    for (ns, n, child) in children(node) {
        match (ns, n) {
            (Ns::Core, "Condition") if cond.is_none() => cond = Some(condition(child)?),
            _ => return Err(unexpected(node, ns, n)),
        }
    }
    let condition = cond.ok_or_else(|| schema("<ProvisionalAction> needs a <Condition>"))?;
    Ok(ProvisionalAction {
        fulfillment_phase,
        action,
        condition,
        for_all,
    })
}

fn obligation(node: Node) -> Result<ObligationExpression> {
    let obligation_id = required(node, "ObligationId")?.to_owned();
    let fulfill_on = match required(node, "FulfillOn")? {
        "Permit" => Effect::Permit,
        "Deny" => Effect::Deny,
        other => return Err(schema(format!("unknown FulfillOn `{other}`"))),
    };
    let mut parameters = BTreeMap::new();
    for (ns, n, child) in children(node) {
        match (ns, n) {
            (Ns::Core, "AttributeAssignmentExpression") => {
                let key = required(child, "AttributeId")?.to_owned();
                let mut values = children(child);
                let value = match values.next() {
                    Some((Ns::Core, "AttributeValue", v)) => attribute_value(v)?,
                    _ => return Err(schema("AttributeAssignmentExpression needs one AttributeValue")),
                };
                if values.next().is_some() {
                    return Err(schema("AttributeAssignmentExpression needs one AttributeValue"));
                }
                if parameters.insert(key.clone(), value).is_some() {
                    return Err(schema(format!("duplicate obligation parameter `{key}`")));
                }
            }
            _ => return Err(unexpected(node, ns, n)),
        }
    }
    Ok(ObligationExpression {
        obligation_id,
        fulfill_on,
        parameters,
    })
}

fn schema(msg: impl Into<String>) -> Error {
    Error::SchemaViolation(msg.into())
}

/// Renders a policy set as an XACML_AD document that
/// [`parse_policy_set`] reads back to an equal model.
pub fn to_xml(ps: &PolicySet) -> String {
    let mut w = XmlWriter::default();
    w.line(
        0,
        &format!(
            r#"<PolicySet xmlns="{XACML_NS}" xmlns:XACML_AD="{AD_NS}" PolicySetId="{}" PolicyCombiningAlgId="{}">"#,
            esc(&ps.policy_set_id),
            ps.policy_combining_alg.as_str()
        ),
    );
    for p in &ps.policies {
        w.line(
            1,
            &format!(
                r#"<Policy PolicyId="{}" RuleCombiningAlgId="{}">"#,
                esc(&p.policy_id),
                p.rule_combining_alg.as_str()
            ),
        );
        w.target(2, &p.target);
        for r in &p.rules {
            w.line(2, &format!(r#"<Rule RuleId="{}" Effect="{}">"#, esc(&r.rule_id), r.effect));
            if !r.target.is_empty() {
                w.target(3, &r.target);
            }
            if let Some(c) = &r.condition {
                w.line(3, "<Condition>");
                w.expr(4, c);
                w.line(3, "</Condition>");
            }
            if let Some(pas) = &r.provisional_actions {
                w.line(3, "<XACML_AD:ProvisionalActions>");
                for pa in pas {
                    let depth = if let Some(f) = &pa.for_all {
                        w.line(4, &format!(r#"<XACML_AD:ForAll VariableId="{}">"#, esc(&f.variable_id)));
                        5
                    } else {
                        4
                    };
                    w.line(
                        depth,
                        &format!(
                            r#"<XACML_AD:ProvisionalAction FulfillmentPhase="{}" ProvisionalAction="{}">"#,
                            pa.fulfillment_phase,
                            esc(&pa.action)
                        ),
                    );
                    w.line(depth + 1, "<Condition>");
                    w.expr(depth + 2, &pa.condition);
                    w.line(depth + 1, "</Condition>");
                    w.line(depth, "</XACML_AD:ProvisionalAction>");
                    if pa.for_all.is_some() {
                        w.line(4, "</XACML_AD:ForAll>");
                    }
                }
                w.line(3, "</XACML_AD:ProvisionalActions>");
            }
            w.line(2, "</Rule>");
        }
        if !p.obligations.is_empty() {
            w.line(2, "<ObligationExpressions>");
            for ob in &p.obligations {
                w.line(
                    3,
                    &format!(
                        r#"<ObligationExpression ObligationId="{}" FulfillOn="{}">"#,
                        esc(&ob.obligation_id),
                        ob.fulfill_on
                    ),
                );
                for (k, v) in &ob.parameters {
                    w.line(4, &format!(r#"<AttributeAssignmentExpression AttributeId="{}">"#, esc(k)));
                    w.value(5, v);
                    w.line(4, "</AttributeAssignmentExpression>");
                }
                w.line(3, "</ObligationExpression>");
            }
            w.line(2, "</ObligationExpressions>");
        }
        w.line(1, "</Policy>");
    }
    w.line(0, "</PolicySet>");
    w.out
}

#[derive(Default)]
struct XmlWriter {
    out: String,
}

impl XmlWriter {
    fn line(&mut self, depth: usize, s: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn target(&mut self, depth: usize, t: &Target) {
        if t.is_empty() {
            self.line(depth, "<Target/>");
            return;
        }
        self.line(depth, "<Target>");
        let sections = [
            ("AccessSubject", "SubjectMatch", &t.subjects),
            ("Resource", "ResourceMatch", &t.resources),
            ("Action", "ActionMatch", &t.actions),
        ];
        for (section, tag, matches) in sections {
            if matches.is_empty() {
                continue;
            }
            self.line(depth + 1, &format!("<{section}>"));
            for m in matches {
                self.line(depth + 2, &format!(r#"<{tag} MatchId="{STRING_EQUAL}">"#));
                self.value(depth + 3, &Value::String(m.value.clone()));
                self.designator(depth + 3, m.attribute);
                self.line(depth + 2, &format!("</{tag}>"));
            }
            self.line(depth + 1, &format!("</{section}>"));
        }
        self.line(depth, "</Target>");
    }

    fn designator(&mut self, depth: usize, a: Attribute) {
        let id = match a {
            Attribute::SubjectId => "urn:oasis:names:tc:xacml:1.0:subject:subject-id",
            Attribute::ResourceId => "urn:oasis:names:tc:xacml:1.0:resource:resource-id",
            Attribute::ActionId => "urn:oasis:names:tc:xacml:1.0:action:action-id",
            Attribute::DependentId => "urn:xacml-ad:attribute:dependent-id",
            Attribute::DesiredState => "urn:xacml-ad:attribute:desired-state",
        };
        self.line(
            depth,
            &format!(r#"<AttributeDesignator Category="{}" AttributeId="{id}"/>"#, category_of(a)),
        );
    }

    fn value(&mut self, depth: usize, v: &Value) {
        let (dt, text) = match v {
            Value::String(s) => (XSD_STRING, esc(s)),
            Value::Boolean(b) => (XSD_BOOLEAN, b.to_string()),
            Value::State(s) => (AD_STATE, s.to_string()),
            Value::Phase(p) => (AD_PHASE, p.to_string()),
        };
        self.line(depth, &format!(r#"<AttributeValue DataType="{dt}">{text}</AttributeValue>"#));
    }

    fn expr(&mut self, depth: usize, e: &Expr) {
        match e {
            Expr::Value { value } => self.value(depth, value),
            Expr::Designator { attribute } => self.designator(depth, *attribute),
            Expr::Apply { function, args } => {
                if args.is_empty() {
                    self.line(depth, &format!(r#"<Apply FunctionId="{}"/>"#, function.urn()));
                    return;
                }
                self.line(depth, &format!(r#"<Apply FunctionId="{}">"#, function.urn()));
                for a in args {
                    self.expr(depth + 1, a);
                }
                self.line(depth, "</Apply>");
            }
            Expr::Quantified {
                quantifier,
                variable_id,
                phase,
                body,
            } => {
                let tag = match quantifier {
                    Quantifier::Exists => "Exists",
                    Quantifier::ForAll => "ForAll",
                };
                let mut open = String::new();
                let _ = write!(
                    open,
                    r#"<XACML_AD:{tag} VariableId="{}" Phase="{phase}">"#,
                    esc(variable_id)
                );
                self.line(depth, &open);
                self.expr(depth + 1, body);
                self.line(depth, &format!("</XACML_AD:{tag}>"));
            }
        }
    }
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrap(body: &str) -> String {
        format!(
            r#"<PolicySet xmlns="{XACML_NS}" xmlns:XACML_AD="{AD_NS}" PolicySetId="t" PolicyCombiningAlgId="only-one-applicable">{body}</PolicySet>"#
        )
    }

    const START_TARGET: &str = r#"<Target><Action><ActionMatch MatchId="string-equal">
        <AttributeValue>startActivity</AttributeValue>
        <AttributeDesignator AttributeId="action-id"/></ActionMatch></Action></Target>"#;

    fn pa_rule(action: &str, phase: &str) -> String {
        wrap(&format!(
            r#"<Policy PolicyId="p" RuleCombiningAlgId="first-applicable">{START_TARGET}
              <Rule RuleId="r" Effect="Permit">
                <XACML_AD:ProvisionalActions>
                  <XACML_AD:ProvisionalAction FulfillmentPhase="{phase}" ProvisionalAction="{action}">
                    <Condition><AttributeValue DataType="boolean">true</AttributeValue></Condition>
                  </XACML_AD:ProvisionalAction>
                </XACML_AD:ProvisionalActions>
              </Rule></Policy>"#
        ))
    }

    #[test]
    fn empty_policy_set() {
        let ps = parse_policy_set(&wrap("")).unwrap();
        assert!(ps.policies.is_empty());
        assert_eq!(ps.policy_set_id, "t");
    }

    #[test]
    fn provisional_action_must_be_update() {
        assert!(parse_policy_set(&pa_rule("Update", "pre")).is_ok());
        let err = parse_policy_set(&pa_rule("Delete", "pre")).unwrap_err();
        assert!(matches!(err, Error::SchemaViolation(_)), "{err}");
    }

    #[test]
    fn provisional_phase_must_match_policy() {
        assert!(matches!(
            parse_policy_set(&pa_rule("Update", "post")),
            Err(Error::SchemaViolation(_))
        ));
    }

    #[test]
    fn missing_fulfillment_phase() {
        let doc = pa_rule("Update", "pre").replace(r#"FulfillmentPhase="pre" "#, "");
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn malformed_xml() {
        assert!(matches!(parse_policy_set("<PolicySet"), Err(Error::XmlSyntax(_))));
    }

    #[test]
    fn unknown_combining_algorithm() {
        let doc = wrap("").replace("only-one-applicable", "majority-vote");
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn unknown_function() {
        let doc = wrap(&format!(
            r#"<Policy PolicyId="p" RuleCombiningAlgId="first-applicable">{START_TARGET}
              <Rule RuleId="r" Effect="Permit"><Condition>
                <Apply FunctionId="urn:xacml-ad:function:phase-of-moon"/>
              </Condition></Rule></Policy>"#
        ));
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn duplicate_ids() {
        let p = r#"<Policy PolicyId="p" RuleCombiningAlgId="first-applicable"><Target/></Policy>"#;
        assert!(matches!(
            parse_policy_set(&wrap(&format!("{p}{p}"))),
            Err(Error::SchemaViolation(_))
        ));
        let r = r#"<Rule RuleId="r" Effect="Permit"/>"#;
        let doc = wrap(&format!(
            r#"<Policy PolicyId="p" RuleCombiningAlgId="first-applicable"><Target/>{r}{r}</Policy>"#
        ));
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn unknown_element_in_known_namespace_rejected() {
        let doc = wrap(r#"<Policy PolicyId="p" RuleCombiningAlgId="first-applicable"><Target/><Advice/></Policy>"#);
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
        let doc = wrap(r#"<Policy PolicyId="p" RuleCombiningAlgId="first-applicable"><Target/><XACML_AD:Retry/></Policy>"#);
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn foreign_namespace_skipped() {
        let doc = wrap(
            r#"<Policy xmlns:doc="urn:example:doc" PolicyId="p" RuleCombiningAlgId="first-applicable"><doc:note>hi</doc:note><Target/></Policy>"#,
        );
        assert_eq!(parse_policy_set(&doc).unwrap().policies.len(), 1);
    }

    #[test]
    fn extension_elements_need_extension_namespace() {
        let doc = pa_rule("Update", "pre")
            .replace("XACML_AD:ProvisionalActions", "ProvisionalActions");
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn bound_attribute_outside_binding() {
        let doc = wrap(&format!(
            r#"<Policy PolicyId="p" RuleCombiningAlgId="first-applicable">{START_TARGET}
              <Rule RuleId="r" Effect="Permit"><Condition>
                <Apply FunctionId="is-mutable"><AttributeDesignator AttributeId="dependent-id"/></Apply>
              </Condition></Rule></Policy>"#
        ));
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
    }

    #[test]
    fn unknown_obligation_rejected() {
        let doc = wrap(&format!(
            r#"<Policy PolicyId="p" RuleCombiningAlgId="first-applicable">{START_TARGET}
              <ObligationExpressions><ObligationExpression ObligationId="sendEmail" FulfillOn="Permit"/></ObligationExpressions>
              </Policy>"#
        ));
        assert!(matches!(parse_policy_set(&doc), Err(Error::SchemaViolation(_))));
        let registry = ObligationRegistry::new(["sendEmail"]);
        assert!(parse_policy_set_with(&doc, &registry).is_ok());
    }

    #[test]
    fn order_preserved() {
        let rules: String = (0..5)
            .map(|i| format!(r#"<Rule RuleId="r{i}" Effect="Permit"/>"#))
            .collect();
        let doc = wrap(&format!(
            r#"<Policy PolicyId="b" RuleCombiningAlgId="first-applicable"><Target/>{rules}</Policy>
               <Policy PolicyId="a" RuleCombiningAlgId="first-applicable"><Target/></Policy>"#
        ));
        let ps = parse_policy_set(&doc).unwrap();
        let ids: Vec<_> = ps.policies.iter().map(|p| p.policy_id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
        let rule_ids: Vec<_> = ps.policies[0].rules.iter().map(|r| r.rule_id.as_str()).collect();
        assert_eq!(rule_ids, ["r0", "r1", "r2", "r3", "r4"]);
    }

    #[test]
    fn writer_round_trips_corpus() {
        let ps = crate::corpus::default_policy_set();
        assert_eq!(parse_policy_set(&to_xml(&ps)).unwrap(), ps);
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Generated policy models survive XML and canonical JSON round trips.

use std::collections::BTreeMap;

use actipol_core::policy::*;
use actipol_core::{ActivityState, Phase};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_&<>\"'-]{1,12}"
}

fn state() -> impl Strategy<Value = ActivityState> {
    prop::sample::select(ActivityState::ALL.to_vec())
}

fn phase() -> impl Strategy<Value = Phase> {
    prop::sample::select(Phase::ALL.to_vec())
}

fn string_expr(bound: bool) -> BoxedStrategy<Expr> {
    let mut attrs = vec![Attribute::SubjectId, Attribute::ResourceId, Attribute::ActionId];
    if bound {
        attrs.push(Attribute::DependentId);
    }
    prop_oneof![
        prop::sample::select(attrs).prop_map(Expr::attr),
        text().prop_map(|s| Expr::value(Value::String(s))),
    ]
    .boxed()
}

fn state_expr(bound: bool) -> BoxedStrategy<Expr> {
    let literal = state().prop_map(|s| Expr::value(Value::State(s)));
    if bound {
        prop_oneof![literal, Just(Expr::attr(Attribute::DesiredState))].boxed()
    } else {
        literal.boxed()
    }
}

fn leaf(bound: bool) -> BoxedStrategy<Expr> {
    let s = || string_expr(bound);
    let st = || state_expr(bound);
    let ph = || phase().prop_map(|p| Expr::value(Value::Phase(p)));
    let chain_fn = prop::sample::select(vec![
        Function::ChainEmpty,
        Function::ChainAllInRequiredState,
        Function::ChainHasImmutableUpdateNeeded,
    ]);
    let set_fn = prop::sample::select(vec![Function::DependencySetEmpty, Function::AllInDesiredState]);
    prop_oneof![
        any::<bool>().prop_map(|b| Expr::value(Value::Boolean(b))),
        (s(), st()).prop_map(|(a, b)| Expr::apply(Function::StateEqual, vec![a, b])),
        s().prop_map(|a| Expr::apply(Function::IsMutable, vec![a])),
        (set_fn, s(), ph()).prop_map(|(f, a, b)| Expr::apply(f, vec![a, b])),
        (chain_fn, s(), st()).prop_map(|(f, a, b)| Expr::apply(f, vec![a, b])),
        (s(), s()).prop_map(|(a, b)| Expr::apply(Function::StringEqual, vec![a, b])),
    ]
    .boxed()
}

fn boolean(bound: bool) -> BoxedStrategy<Expr> {
    leaf(bound)
        .prop_recursive(3, 24, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(|a| Expr::apply(Function::And, a)),
                prop::collection::vec(inner.clone(), 1..4).prop_map(|a| Expr::apply(Function::Or, a)),
                inner.prop_map(|a| Expr::apply(Function::Not, vec![a])),
            ]
        })
        .boxed()
}

fn quantified() -> impl Strategy<Value = Expr> {
    (
        prop::sample::select(vec![Quantifier::Exists, Quantifier::ForAll]),
        "[a-z]{1,6}",
        phase(),
        boolean(true),
    )
        .prop_map(|(quantifier, variable_id, phase, body)| Expr::Quantified {
            quantifier,
            variable_id,
            phase,
            body: Box::new(body),
        })
}

fn condition() -> impl Strategy<Value = Expr> {
    prop_oneof![
        boolean(false),
        quantified(),
        (quantified(), boolean(false)).prop_map(|(q, b)| Expr::apply(Function::And, vec![q, b])),
    ]
}

fn matches(attribute: Attribute) -> impl Strategy<Value = Vec<Match>> {
    prop::collection::vec(text().prop_map(move |value| Match { attribute, value }), 0..2)
}

fn rule_target() -> impl Strategy<Value = Target> {
    (matches(Attribute::SubjectId), matches(Attribute::ResourceId)).prop_map(|(subjects, resources)| Target {
        subjects,
        resources,
        actions: Vec::new(),
    })
}

fn effect() -> impl Strategy<Value = Effect> {
    prop::sample::select(vec![Effect::Permit, Effect::Deny])
}

fn provisional(phase: Phase) -> impl Strategy<Value = ProvisionalAction> {
    (boolean(true), prop::option::of("[a-z]{1,6}")).prop_map(move |(condition, var)| ProvisionalAction {
        fulfillment_phase: phase,
        action: UPDATE_ACTION.into(),
        condition,
        for_all: var.map(|variable_id| ForAll { variable_id }),
    })
}

fn rules(phase: Option<Phase>) -> impl Strategy<Value = Vec<Rule>> {
    let pa = match phase {
        Some(p) => prop::option::of(prop::collection::vec(provisional(p), 1..3)).boxed(),
        None => Just(None).boxed(),
    };
    prop::collection::vec((effect(), rule_target(), prop::option::of(condition()), pa), 0..4).prop_map(|rs| {
        rs.into_iter()
            .enumerate()
            .map(|(i, (effect, target, condition, provisional_actions))| Rule {
                rule_id: format!("rule{i}"),
                effect,
                target,
                condition,
                provisional_actions,
            })
            .collect()
    })
}

fn obligation() -> impl Strategy<Value = ObligationExpression> {
    (
        prop::sample::select(vec![
            UPDATE_STATE_OBLIGATION,
            "call-continueActivityPolicy",
            "call-postUpdatePolicy",
        ]),
        effect(),
        state(),
    )
        .prop_map(|(id, fulfill_on, s)| {
            let mut parameters = BTreeMap::new();
            if id == UPDATE_STATE_OBLIGATION {
                parameters.insert("state".to_owned(), Value::State(s));
            }
            ObligationExpression {
                obligation_id: id.to_owned(),
                fulfill_on,
                parameters,
            }
        })
}

fn algorithm() -> impl Strategy<Value = CombiningAlg> {
    prop::sample::select(vec![
        CombiningAlg::FirstApplicable,
        CombiningAlg::OnlyOneApplicable,
        CombiningAlg::PermitOverrides,
        CombiningAlg::DenyOverrides,
    ])
}

fn policy() -> impl Strategy<Value = Policy> {
    prop::sample::select(vec!["startActivity", "continueActivity", "finishActivity", "postUpdate"]).prop_flat_map(
        |action| {
            let phase = action.parse().ok().and_then(Phase::for_action);
            (
                algorithm(),
                rules(phase),
                prop::collection::vec(obligation(), 0..4),
            )
                .prop_map(move |(alg, rules, obligations)| Policy {
                    policy_id: String::new(),
                    rule_combining_alg: alg,
                    target: Target {
                        actions: vec![Match {
                            attribute: Attribute::ActionId,
                            value: action.to_owned(),
                        }],
                        ..Target::default()
                    },
                    rules,
                    obligations,
                })
        },
    )
}

fn policy_set() -> impl Strategy<Value = PolicySet> {
    (text(), algorithm(), prop::collection::vec(policy(), 0..4)).prop_map(|(id, alg, policies)| PolicySet {
        policy_set_id: id,
        policy_combining_alg: alg,
        policies: policies
            .into_iter()
            .enumerate()
            .map(|(i, p)| Policy {
                policy_id: format!("policy{i}"),
                ..p
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn xml_round_trip(ps in policy_set()) {
        let xml = to_xml(&ps);
        let back = parse_policy_set(&xml).map_err(|e| TestCaseError::fail(format!("{e}\n{xml}")))?;
        prop_assert_eq!(back, ps);
    }

    #[test]
    fn json_round_trip(ps in policy_set()) {
        let json = to_canonical_json(&ps);
        prop_assert_eq!(from_canonical_json(&json).unwrap(), ps.clone());
        prop_assert_eq!(to_canonical_json(&from_canonical_json(&json).unwrap()), json);
    }

    #[test]
    fn xml_json_xml(ps in policy_set()) {
        let via_json = from_canonical_json(&to_canonical_json(&parse_policy_set(&to_xml(&ps)).unwrap())).unwrap();
        prop_assert_eq!(to_xml(&via_json), to_xml(&ps));
    }
}

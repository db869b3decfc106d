// SPDX-License-Identifier: Apache-2.0

//! The registered condition functions.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueType {
    String,
    Bool,
    State,
    Phase,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::String => "string",
            ValueType::Bool => "boolean",
            ValueType::State => "activity-state",
            ValueType::Phase => "phase",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Function {
    /// `state-equal(activity, state)`
    StateEqual,
    /// `is-mutable(activity)`
    IsMutable,
    /// `dependency-set-empty(subject, phase)`
    DependencySetEmpty,
    /// `all-in-desired-state(subject, phase)`
    AllInDesiredState,
    /// `chain-empty(activity, target-state)`: no transition requirements
    /// within the chain depth limit.
    ChainEmpty,
    /// `chain-all-in-required-state(activity, target-state)`
    ChainAllInRequiredState,
    /// `chain-has-immutable-update-needed(activity, target-state)`: some
    /// in-scope requirement is unmet and immutable.
    ChainHasImmutableUpdateNeeded,
    StringEqual,
    And,
    Or,
    Not,
}

pub(crate) enum Params {
    Fixed(&'static [ValueType]),
    Variadic(ValueType),
}

pub(crate) struct Signature {
    pub params: Params,
    pub returns: ValueType,
}

const AD_FUNCTION_PREFIX: &str = "urn:xacml-ad:function:";
const XACML_FUNCTION_PREFIX: &str = "urn:oasis:names:tc:xacml:1.0:function:";

impl Function {
    pub const ALL: [Function; 11] = [
        Function::StateEqual,
        Function::IsMutable,
        Function::DependencySetEmpty,
        Function::AllInDesiredState,
        Function::ChainEmpty,
        Function::ChainAllInRequiredState,
        Function::ChainHasImmutableUpdateNeeded,
        Function::StringEqual,
        Function::And,
        Function::Or,
        Function::Not,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Function::StateEqual => "state-equal",
            Function::IsMutable => "is-mutable",
            Function::DependencySetEmpty => "dependency-set-empty",
            Function::AllInDesiredState => "all-in-desired-state",
            Function::ChainEmpty => "chain-empty",
            Function::ChainAllInRequiredState => "chain-all-in-required-state",
            Function::ChainHasImmutableUpdateNeeded => "chain-has-immutable-update-needed",
            Function::StringEqual => "string-equal",
            Function::And => "and",
            Function::Or => "or",
            Function::Not => "not",
        }
    }

    /// The URN form used in XML documents.
    pub fn urn(self) -> String {
        match self {
            Function::StringEqual | Function::And | Function::Or | Function::Not => {
                format!("{XACML_FUNCTION_PREFIX}{}", self.id())
            }
            _ => format!("{AD_FUNCTION_PREFIX}{}", self.id()),
        }
    }

    /// Resolves a short id or its URN form.
    pub fn from_id(id: &str) -> Option<Function> {
        let short = id
            .strip_prefix(AD_FUNCTION_PREFIX)
            .or_else(|| id.strip_prefix(XACML_FUNCTION_PREFIX))
            .unwrap_or(id);
        Function::ALL.into_iter().find(|f| f.id() == short)
    }

    pub(crate) fn signature(self) -> Signature {
        use ValueType::*;
        let (params, returns) = match self {
            Function::StateEqual => (Params::Fixed(&[String, State]), Bool),
            Function::IsMutable => (Params::Fixed(&[String]), Bool),
            Function::DependencySetEmpty | Function::AllInDesiredState => {
                (Params::Fixed(&[String, Phase]), Bool)
            }
            Function::ChainEmpty
            | Function::ChainAllInRequiredState
            | Function::ChainHasImmutableUpdateNeeded => (Params::Fixed(&[String, State]), Bool),
            Function::StringEqual => (Params::Fixed(&[String, String]), Bool),
            Function::And | Function::Or => (Params::Variadic(Bool), Bool),
            Function::Not => (Params::Fixed(&[Bool]), Bool),
        };
        Signature { params, returns }
    }
}

impl Serialize for Function {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.id())
    }
}

impl<'de> Deserialize<'de> for Function {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let id = String::deserialize(d)?;
        Function::from_id(&id).ok_or_else(|| serde::de::Error::custom(format!("unknown function `{id}`")))
    }
}

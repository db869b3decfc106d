// SPDX-License-Identifier: Apache-2.0

//! The shipped policy corpus and the sample smart-farm fixture.

use crate::policy::{parse_policy_set, PolicySet};
use crate::store::Fixture;

pub const POLICY_XML: &str = include_str!("../corpus/xacml_ad_policies.xml");
pub const FIXTURE_JSON: &str = include_str!("../corpus/smart_farm.json");

pub fn default_policy_set() -> PolicySet {
    parse_policy_set(POLICY_XML).expect("shipped corpus is valid")
}

pub fn default_fixture() -> Fixture {
    Fixture::from_json(FIXTURE_JSON).expect("shipped fixture is valid")
}

// SPDX-License-Identifier: Apache-2.0

//! Reference semantics for dependency decisions, written straight from the
//! prose rules with no policy machinery. Used to cross-check the policy
//! engine.
//!
//! A request on `subject` in some phase is decided as follows:
//!
//! * no dependencies in that phase: permit;
//! * every dependent already in its desired state: permit;
//! * some dependent needing an update is immutable, or a requirement in
//!   its chain is unmet and immutable: deny (not-applicable in the post
//!   phase, which has no deny rule);
//! * every dependent needing an update is mutable and its chain is met:
//!   permit, and those dependents move to their desired states;
//! * anything else: not-applicable.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Permit,
    Deny,
    NotApplicable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Permit => "permit",
            Verdict::Deny => "deny",
            Verdict::NotApplicable => "not-applicable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Ongoing,
    Post,
}

impl std::str::FromStr for Phase {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, OracleError> {
        match s {
            "pre" => Ok(Phase::Pre),
            "ongoing" => Ok(Phase::Ongoing),
            "post" => Ok(Phase::Post),
            _ => Err(OracleError::InvalidWorld(format!("unknown phase `{s}`"))),
        }
    }
}

/// States are kept as their lowercase names; the oracle only compares them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub state: String,
    pub mutable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub dependent: String,
    pub desired_state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Need {
    pub activity: String,
    pub state: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleWorld {
    pub activities: BTreeMap<String, Activity>,
    /// (subject, phase) to its dependencies, in declaration order.
    pub dependencies: BTreeMap<(String, Phase), Vec<Dependency>>,
    /// (activity, target state) to what must hold for that move.
    pub transitions: BTreeMap<(String, String), Vec<Need>>,
}

#[derive(Deserialize)]
struct FileActivity {
    id: String,
    state: String,
    mutable: bool,
}

#[derive(Deserialize)]
struct FileDependency {
    subject: String,
    phase: Phase,
    dependent: String,
    desired_state: String,
}

#[derive(Deserialize)]
struct FileTransition {
    activity: String,
    target_state: String,
    requirements: Vec<Need>,
}

#[derive(Deserialize)]
struct FileWorld {
    #[serde(default)]
    activities: Vec<FileActivity>,
    #[serde(default)]
    dependencies: Vec<FileDependency>,
    #[serde(default)]
    transition_dependencies: Vec<FileTransition>,
}

impl OracleWorld {
    /// Reads the store fixture format.
    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let file: FileWorld = serde_json::from_str(text).map_err(|e| OracleError::InvalidWorld(e.to_string()))?;
        let mut world = OracleWorld::default();
        for a in file.activities {
            world.activities.insert(
                a.id,
                Activity {
                    state: a.state,
                    mutable: a.mutable,
                },
            );
        }
        for d in file.dependencies {
            world.dependencies.entry((d.subject, d.phase)).or_default().push(Dependency {
                dependent: d.dependent,
                desired_state: d.desired_state,
            });
        }
        for t in file.transition_dependencies {
            world
                .transitions
                .entry((t.activity, t.target_state))
                .or_default()
                .extend(t.requirements);
        }
        Ok(world)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn state(&self, id: &str) -> Result<&str, OracleError> {
        self.get(id).map(|a| a.state.as_str())
    }

    fn get(&self, id: &str) -> Result<&Activity, OracleError> {
        self.activities
            .get(id)
            .ok_or_else(|| OracleError::UnknownActivity(id.to_owned()))
    }
}

struct ChainItem {
    met: bool,
    mutable: bool,
}

/// Requirements for `activity` to reach `target`, starting at level 2 and
/// following only unmet requirements, down to `depth_limit`.
fn chain(
    world: &OracleWorld,
    activity: &str,
    target: &str,
    level: usize,
    depth_limit: usize,
    out: &mut Vec<ChainItem>,
) -> Result<(), OracleError> {
    if level > depth_limit {
        return Ok(());
    }
    let key = (activity.to_owned(), target.to_owned());
    for need in world.transitions.get(&key).into_iter().flatten() {
        let a = world.get(&need.activity)?;
        let met = a.state == need.state;
        out.push(ChainItem {
            met,
            mutable: a.mutable,
        });
        if !met {
            chain(world, &need.activity, &need.state, level + 1, depth_limit, out)?;
        }
    }
    Ok(())
}

/// Decides a request on `subject` in `phase` and returns the verdict with
/// the world after any dependent updates.
pub fn oracle_decide(
    world: OracleWorld,
    subject: &str,
    phase: Phase,
    depth_limit: usize,
) -> Result<(Verdict, OracleWorld), OracleError> {
    world.get(subject)?;
    let deps = world
        .dependencies
        .get(&(subject.to_owned(), phase))
        .cloned()
        .unwrap_or_default();
    if deps.is_empty() {
        return Ok((Verdict::Permit, world));
    }

    let mut to_update = Vec::new();
    for d in &deps {
        if world.state(&d.dependent)? != d.desired_state {
            to_update.push(d);
        }
    }
    if to_update.is_empty() {
        return Ok((Verdict::Permit, world));
    }

    let mut blocked = false;
    let mut chains_met = true;
    for d in &to_update {
        let dependent = world.get(&d.dependent)?;
        let mut items = Vec::new();
        chain(&world, &d.dependent, &d.desired_state, 2, depth_limit.max(1), &mut items)?;
        if !dependent.mutable || items.iter().any(|i| !i.met && !i.mutable) {
            blocked = true;
        }
        if items.iter().any(|i| !i.met) {
            chains_met = false;
        }
    }
    if blocked {
        let verdict = if phase == Phase::Post { Verdict::NotApplicable } else { Verdict::Deny };
        return Ok((verdict, world));
    }
    if !chains_met {
        return Ok((Verdict::NotApplicable, world));
    }

    let mut updated = world.clone();
    for d in to_update {
        if let Some(a) = updated.activities.get_mut(&d.dependent) {
            a.state = d.desired_state.clone();
        }
    }
    Ok((Verdict::Permit, updated))
}

// SPDX-License-Identifier: Apache-2.0

//! The policy information point.
//!
//! Holds activity records, phase-scoped dependency sets and transition
//! dependencies. Readers see the last committed snapshot; all writes go
//! through a [`Txn`], and transactions are serialized by a single writer
//! lock. A transaction keeps its writes in an overlay on top of the snapshot
//! it started from and publishes them atomically on [`Txn::commit`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard, RwLock};
use serde::{Deserialize, Serialize};

use crate::activity::{ActionId, ActivityId, ActivityRecord, ActivityState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pre,
    Ongoing,
    Post,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Pre, Phase::Ongoing, Phase::Post];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Ongoing => "ongoing",
            Phase::Post => "post",
        }
    }

    /// The phase whose dependencies an action is decided on, if any.
    pub fn for_action(action: ActionId) -> Option<Phase> {
        match action {
            ActionId::StartActivity => Some(Phase::Pre),
            ActionId::ContinueActivity => Some(Phase::Ongoing),
            ActionId::PostUpdate => Some(Phase::Post),
            ActionId::HoldActivity | ActionId::FinishActivity => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown phase `{s}`")))
    }
}

/// `subject` requires `dependent` to be in `desired_state` during `phase`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencySpec {
    pub subject: ActivityId,
    pub phase: Phase,
    pub dependent: ActivityId,
    pub desired_state: ActivityState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub activity: ActivityId,
    pub state: ActivityState,
}

/// `activity` may only move to `target_state` while every requirement holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDependency {
    pub activity: ActivityId,
    pub target_state: ActivityState,
    pub requirements: Vec<Requirement>,
}

/// On-disk store contents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    #[serde(default)]
    pub activities: Vec<ActivityRecord>,
    #[serde(default)]
    pub dependencies: Vec<DependencySpec>,
    #[serde(default)]
    pub transition_dependencies: Vec<TransitionDependency>,
}

impl Fixture {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::JsonSyntax(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture serializes")
    }
}

/// Administrative write accepted by [`DependencyStore::admin_upsert`].
#[derive(Debug, Clone)]
pub enum AdminUpdate {
    Activity(ActivityRecord),
    Dependency(DependencySpec),
    TransitionDependency(TransitionDependency),
}

/// Why a state write happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "action")]
pub enum WriteCause {
    /// Provisional update of a dependent activity issued by the PDP.
    Provisional,
    /// Life-cycle move of the requested activity.
    Lifecycle(ActionId),
    Admin,
}

/// One committed state write.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditEvent {
    pub activity: ActivityId,
    pub from: ActivityState,
    pub to: ActivityState,
    pub mutable: bool,
    pub cause: WriteCause,
}

#[derive(Debug, Clone, Default)]
struct StoreData {
    activities: Arc<BTreeMap<ActivityId, ActivityRecord>>,
    dependencies: Arc<BTreeMap<(ActivityId, Phase), Vec<DependencySpec>>>,
    transitions: Arc<BTreeMap<(ActivityId, ActivityState), Vec<Requirement>>>,
}

impl StoreData {
    fn activity(&self, id: &str) -> Result<&ActivityRecord> {
        self.activities
            .get(id)
            .ok_or_else(|| Error::UnknownActivity(id.to_owned()))
    }

    fn dependencies(&self, subject: &str, phase: Phase) -> Result<Vec<DependencySpec>> {
        let id = self.activity(subject)?.id.clone();
        Ok(self
            .dependencies
            .get(&(id, phase))
            .cloned()
            .unwrap_or_default())
    }

    fn transition_dependencies(&self, activity: &str, target: ActivityState) -> Result<Vec<Requirement>> {
        let id = self.activity(activity)?.id.clone();
        Ok(self
            .transitions
            .get(&(id, target))
            .cloned()
            .unwrap_or_default())
    }

    fn require(&self, id: &ActivityId, what: &str) -> Result<()> {
        if self.activities.contains_key(id) {
            Ok(())
        } else {
            Err(Error::InvariantViolation(format!("{what} `{id}` is not a known activity")))
        }
    }

    fn upsert(&mut self, update: AdminUpdate) -> Result<Vec<AuditEvent>> {
        match update {
            AdminUpdate::Activity(record) => {
                let previous = self.activities.get(&record.id).map(|r| r.current_state);
                let event = previous.filter(|from| *from != record.current_state).map(|from| AuditEvent {
                    activity: record.id.clone(),
                    from,
                    to: record.current_state,
                    mutable: record.mutable,
                    cause: WriteCause::Admin,
                });
                Arc::make_mut(&mut self.activities).insert(record.id.clone(), record);
                Ok(event.into_iter().collect())
            }
            AdminUpdate::Dependency(spec) => {
                if spec.subject == spec.dependent {
                    return Err(Error::InvariantViolation(format!(
                        "activity `{}` cannot depend on itself",
                        spec.subject
                    )));
                }
                self.require(&spec.subject, "subject")?;
                self.require(&spec.dependent, "dependent")?;
                let list = Arc::make_mut(&mut self.dependencies)
                    .entry((spec.subject.clone(), spec.phase))
                    .or_default();
                match list.iter_mut().find(|s| s.dependent == spec.dependent) {
                    Some(existing) => *existing = spec,
                    None => list.push(spec),
                }
                Ok(Vec::new())
            }
            AdminUpdate::TransitionDependency(dep) => {
                self.require(&dep.activity, "activity")?;
                for (i, req) in dep.requirements.iter().enumerate() {
                    if req.activity == dep.activity {
                        return Err(Error::InvariantViolation(format!(
                            "activity `{}` cannot require itself",
                            dep.activity
                        )));
                    }
                    if dep.requirements[..i].iter().any(|r| r.activity == req.activity) {
                        return Err(Error::InvariantViolation(format!(
                            "duplicate requirement `{}` for `{}`",
                            req.activity, dep.activity
                        )));
                    }
                    self.require(&req.activity, "requirement")?;
                }
                Arc::make_mut(&mut self.transitions).insert((dep.activity, dep.target_state), dep.requirements);
                Ok(Vec::new())
            }
        }
    }

    fn to_fixture(&self) -> Fixture {
        Fixture {
            activities: self.activities.values().cloned().collect(),
            dependencies: self.dependencies.values().flatten().cloned().collect(),
            transition_dependencies: self
                .transitions
                .iter()
                .map(|((activity, target_state), requirements)| TransitionDependency {
                    activity: activity.clone(),
                    target_state: *target_state,
                    requirements: requirements.clone(),
                })
                .collect(),
        }
    }
}

/// Read and write access to activity information, as seen by the PDP.
pub trait InformationPoint {
    fn activity(&self, id: &str) -> Result<ActivityRecord>;

    /// Dependency specs of `subject` for `phase`, in insertion order.
    fn dependencies(&self, subject: &str, phase: Phase) -> Result<Vec<DependencySpec>>;

    fn transition_dependencies(&self, activity: &str, target: ActivityState) -> Result<Vec<Requirement>>;

    fn set_state(&mut self, id: &str, state: ActivityState, cause: WriteCause) -> Result<()>;

    fn savepoint(&self) -> Savepoint;

    fn restore(&mut self, savepoint: Savepoint);
}

/// Marks a point inside a transaction that later writes can be undone to.
#[derive(Debug, Clone)]
pub struct Savepoint {
    writes: BTreeMap<ActivityId, ActivityState>,
    pending: usize,
}

pub struct DependencyStore {
    committed: RwLock<Arc<StoreData>>,
    writer: Mutex<()>,
    version: AtomicU64,
    audit: Option<Mutex<Vec<AuditEvent>>>,
}

impl fmt::Debug for DependencyStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DependencyStore")
            .field("version", &self.version())
            .field("activities", &self.committed.read().activities.len())
            .finish()
    }
}

impl Default for DependencyStore {
    fn default() -> Self {
        Self::new()
    }
}

impl DependencyStore {
    pub fn new() -> Self {
        Self {
            committed: RwLock::new(Arc::new(StoreData::default())),
            writer: Mutex::new(()),
            version: AtomicU64::new(0),
            audit: None,
        }
    }

    /// Same as [`DependencyStore::new`], but every committed state write is
    /// appended to an audit log readable through [`DependencyStore::audit_log`].
    pub fn with_audit() -> Self {
        Self {
            audit: Some(Mutex::new(Vec::new())),
            ..Self::new()
        }
    }

    pub fn from_fixture(fixture: &Fixture) -> Result<Self> {
        let store = Self::new();
        store.load_fixture(fixture)?;
        Ok(store)
    }

    /// Replaces the whole store content. Duplicate keys in `fixture` are
    /// rejected and leave the store untouched.
    pub fn load_fixture(&self, fixture: &Fixture) -> Result<()> {
        let mut data = StoreData::default();
        for record in &fixture.activities {
            if data.activities.contains_key(&record.id) {
                return Err(Error::InvariantViolation(format!("duplicate activity `{}`", record.id)));
            }
            data.upsert(AdminUpdate::Activity(record.clone()))?;
        }
        for spec in &fixture.dependencies {
            let key = (spec.subject.clone(), spec.phase);
            if data
                .dependencies
                .get(&key)
                .is_some_and(|l| l.iter().any(|s| s.dependent == spec.dependent))
            {
                return Err(Error::InvariantViolation(format!(
                    "duplicate dependency ({}, {}, {})",
                    spec.subject, spec.phase, spec.dependent
                )));
            }
            data.upsert(AdminUpdate::Dependency(spec.clone()))?;
        }
        for dep in &fixture.transition_dependencies {
            if data.transitions.contains_key(&(dep.activity.clone(), dep.target_state)) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate transition dependency ({}, {})",
                    dep.activity, dep.target_state
                )));
            }
            data.upsert(AdminUpdate::TransitionDependency(dep.clone()))?;
        }
        let _writer = self.writer.lock();
        *self.committed.write() = Arc::new(data);
        self.version.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    fn snapshot(&self) -> Arc<StoreData> {
        Arc::clone(&self.committed.read())
    }

    pub fn get_activity(&self, id: &str) -> Result<ActivityRecord> {
        self.snapshot().activity(id).cloned()
    }

    pub fn get_dependencies(&self, subject: &str, phase: Phase) -> Result<Vec<DependencySpec>> {
        self.snapshot().dependencies(subject, phase)
    }

    pub fn get_transition_dependencies(&self, activity: &str, target: ActivityState) -> Result<Vec<Requirement>> {
        self.snapshot().transition_dependencies(activity, target)
    }

    pub fn activity_ids(&self) -> Vec<ActivityId> {
        self.snapshot().activities.keys().cloned().collect()
    }

    /// Exports the committed state in fixture form. Output order is
    /// deterministic, so two equal stores export byte-identical JSON.
    pub fn export(&self) -> Fixture {
        self.snapshot().to_fixture()
    }

    /// Number of commits so far. Reads never change it.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::SeqCst)
    }

    pub fn audit_log(&self) -> Vec<AuditEvent> {
        self.audit.as_ref().map(|a| a.lock().clone()).unwrap_or_default()
    }

    /// Opens a transaction. Blocks while another transaction is open.
    pub fn begin_txn(&self) -> Txn<'_> {
        let guard = self.writer.lock();
        Txn {
            store: self,
            _writer: guard,
            base: self.snapshot(),
            writes: BTreeMap::new(),
            pending: Vec::new(),
        }
    }

    pub fn admin_upsert(&self, update: AdminUpdate) -> Result<()> {
        self.admin_upsert_all(std::iter::once(update))
    }

    /// Applies several admin updates atomically; any failure leaves the
    /// store unchanged.
    pub fn admin_upsert_all(&self, updates: impl IntoIterator<Item = AdminUpdate>) -> Result<()> {
        let _writer = self.writer.lock();
        let mut data = StoreData::clone(&self.snapshot());
        let mut events = Vec::new();
        for update in updates {
            events.extend(data.upsert(update)?);
        }
        self.publish(data, events);
        Ok(())
    }

    fn publish(&self, data: StoreData, events: Vec<AuditEvent>) {
        *self.committed.write() = Arc::new(data);
        self.version.fetch_add(1, Ordering::SeqCst);
        if let Some(audit) = &self.audit {
            audit.lock().extend(events);
        }
    }
}

/// An open evaluation transaction. Dropping it without commit discards its
/// writes.
pub struct Txn<'s> {
    store: &'s DependencyStore,
    _writer: MutexGuard<'s, ()>,
    base: Arc<StoreData>,
    writes: BTreeMap<ActivityId, ActivityState>,
    pending: Vec<AuditEvent>,
}

impl Txn<'_> {
    pub fn get_activity(&self, id: &str) -> Result<ActivityRecord> {
        let mut record = self.base.activity(id)?.clone();
        if let Some(state) = self.writes.get(id) {
            record.current_state = *state;
        }
        Ok(record)
    }

    pub fn set_state(&mut self, id: &str, state: ActivityState, cause: WriteCause) -> Result<()> {
        let record = self.get_activity(id)?;
        self.pending.push(AuditEvent {
            activity: record.id.clone(),
            from: record.current_state,
            to: state,
            mutable: record.mutable,
            cause,
        });
        self.writes.insert(record.id, state);
        Ok(())
    }

    pub fn has_writes(&self) -> bool {
        !self.writes.is_empty()
    }

    pub fn commit(self) {
        if self.writes.is_empty() {
            return;
        }
        let mut data = StoreData::clone(&self.base);
        let activities = Arc::make_mut(&mut data.activities);
        for (id, state) in self.writes {
            if let Some(record) = activities.get_mut(&id) {
                record.current_state = state;
            }
        }
        self.store.publish(data, self.pending);
    }

    pub fn rollback(self) {}
}

impl InformationPoint for Txn<'_> {
    fn activity(&self, id: &str) -> Result<ActivityRecord> {
        self.get_activity(id)
    }

    fn dependencies(&self, subject: &str, phase: Phase) -> Result<Vec<DependencySpec>> {
        self.base.dependencies(subject, phase)
    }

    fn transition_dependencies(&self, activity: &str, target: ActivityState) -> Result<Vec<Requirement>> {
        self.base.transition_dependencies(activity, target)
    }

    fn set_state(&mut self, id: &str, state: ActivityState, cause: WriteCause) -> Result<()> {
        Txn::set_state(self, id, state, cause)
    }

    fn savepoint(&self) -> Savepoint {
        Savepoint {
            writes: self.writes.clone(),
            pending: self.pending.len(),
        }
    }

    fn restore(&mut self, savepoint: Savepoint) {
        self.writes = savepoint.writes;
        self.pending.truncate(savepoint.pending);
    }
}

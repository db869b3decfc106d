// SPDX-License-Identifier: Apache-2.0

use super::trace::{FlowObserver, FlowStep};
use crate::activity::{ActivityRecord, ActivityState};
use crate::error::Result;
use crate::store::{DependencySpec, InformationPoint, Requirement, Savepoint, Txn, WriteCause};

/// Context handler: relays the PDP's information queries and provisional
/// writes to the PIP transaction, recording each round trip.
pub(crate) struct ContextHandler<'t, 's> {
    txn: &'t mut Txn<'s>,
    observer: Option<&'t dyn FlowObserver>,
}

impl<'t, 's> ContextHandler<'t, 's> {
    pub fn new(txn: &'t mut Txn<'s>, observer: Option<&'t dyn FlowObserver>) -> Self {
        Self { txn, observer }
    }

    fn round_trip<T>(&self, query: impl FnOnce(&Txn<'s>) -> T) -> T {
        self.note(FlowStep::InfoRequest);
        self.note(FlowStep::PipQuery);
        let out = query(self.txn);
        self.note(FlowStep::InfoResponse);
        out
    }

    fn note(&self, step: FlowStep) {
        if let Some(o) = self.observer {
            o.record(step);
        }
    }
}

impl InformationPoint for ContextHandler<'_, '_> {
    fn activity(&self, id: &str) -> Result<ActivityRecord> {
        self.round_trip(|t| t.activity(id))
    }

    fn dependencies(&self, subject: &str, phase: crate::store::Phase) -> Result<Vec<DependencySpec>> {
        self.round_trip(|t| t.dependencies(subject, phase))
    }

    fn transition_dependencies(&self, activity: &str, target: ActivityState) -> Result<Vec<Requirement>> {
        self.round_trip(|t| t.transition_dependencies(activity, target))
    }

    fn set_state(&mut self, id: &str, state: ActivityState, cause: WriteCause) -> Result<()> {
        self.txn.set_state(id, state, cause)
    }

    fn savepoint(&self) -> Savepoint {
        self.txn.savepoint()
    }

    fn restore(&mut self, savepoint: Savepoint) {
        self.txn.restore(savepoint)
    }
}

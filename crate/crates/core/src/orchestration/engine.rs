// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Instant;

use parking_lot::Mutex;

use super::context::ContextHandler;
use super::trace::{FlowObserver, FlowStep};
use super::{
    ContinuityConfig, ContinuityReport, Iteration, ObligationFailure, RequestContext, ResponseContext, StopReason,
};
use crate::activity::{apply_transition, ActionId, ActivityId, ActivityRecord, ActivityState};
use crate::error::{Error, Result};
use crate::pdp::{self, Decision, EvaluationContext, EvaluationResult, PolicyIndex, DEFAULT_CHAIN_DEPTH};
use crate::policy::{ObligationExpression, PolicySet, Value, UPDATE_STATE_OBLIGATION};
use crate::store::{AdminUpdate, DependencyStore, Fixture, Txn, WriteCause};

const CALL_CONTINUE: &str = "call-continueActivityPolicy";
const CALL_POST_UPDATE: &str = "call-postUpdatePolicy";
const SCHEDULER_SUBJECT: &str = "continuity-scheduler";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub continuity: ContinuityConfig,
    pub chain_depth_limit: usize,
    /// When false, `call-continueActivityPolicy` is acknowledged but no loop
    /// is started; callers drive [`Engine::run_continuity`] themselves.
    pub auto_continuity: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            continuity: ContinuityConfig::default(),
            chain_depth_limit: DEFAULT_CHAIN_DEPTH,
            auto_continuity: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    External,
    Continuity,
    Chained,
}

#[derive(Default)]
struct LoopSlot {
    generation: u64,
    handle: Option<JoinHandle<()>>,
}

struct Inner {
    policies: PolicySet,
    index: PolicyIndex,
    store: Arc<DependencyStore>,
    config: EngineConfig,
    admission: Mutex<HashMap<ActivityId, Arc<Mutex<()>>>>,
    loops: Mutex<HashMap<ActivityId, LoopSlot>>,
    reports: Mutex<HashMap<ActivityId, ContinuityReport>>,
}

/// The PEP with its context handler, obligation service and continuity
/// scheduler. Cloning is cheap and clones share all state.
#[derive(Clone)]
pub struct Engine {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("policies", &self.inner.policies.policies.len())
            .field("config", &self.inner.config)
            .finish()
    }
}

fn note(observer: Option<&dyn FlowObserver>, step: FlowStep) {
    if let Some(o) = observer {
        o.record(step);
    }
}

impl Engine {
    pub fn new(policies: PolicySet, store: Arc<DependencyStore>, config: EngineConfig) -> Self {
        let index = PolicyIndex::build(&policies);
        Self {
            inner: Arc::new(Inner {
                policies,
                index,
                store,
                config,
                admission: Mutex::default(),
                loops: Mutex::default(),
                reports: Mutex::default(),
            }),
        }
    }

    pub fn policies(&self) -> &PolicySet {
        &self.inner.policies
    }

    pub fn store(&self) -> &Arc<DependencyStore> {
        &self.inner.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.inner.config
    }

    pub fn handle_request(&self, req: &RequestContext) -> Result<ResponseContext> {
        self.handle(req, None)
    }

    /// [`Engine::handle_request`], reporting each hop of the data flow to
    /// `observer`. Continuity iterations started by the request are not
    /// observed.
    pub fn handle_request_observed(&self, req: &RequestContext, observer: &dyn FlowObserver) -> Result<ResponseContext> {
        self.handle(req, Some(observer))
    }

    fn handle(&self, req: &RequestContext, obs: Option<&dyn FlowObserver>) -> Result<ResponseContext> {
        note(obs, FlowStep::PepIntercept);
        if !req.action_id.is_external() {
            return Err(Error::InternalAction(req.action_id));
        }
        let lock = self.admission_lock(&req.resource);
        let _guard = lock.lock();
        self.process(req, Origin::External, obs)
    }

    fn admission_lock(&self, id: &ActivityId) -> Arc<Mutex<()>> {
        self.inner.admission.lock().entry(id.clone()).or_default().clone()
    }

    /// Whether a request on `id` is being processed right now.
    pub fn is_busy(&self, id: &str) -> bool {
        let lock = self.inner.admission.lock().get(id).cloned();
        lock.is_some_and(|l| l.try_lock().is_none())
    }

    fn process(&self, req: &RequestContext, origin: Origin, obs: Option<&dyn FlowObserver>) -> Result<ResponseContext> {
        note(obs, FlowStep::ContextRequest);
        let id = req.resource.as_str();
        let store = &self.inner.store;
        let mut txn = store.begin_txn();
        let record = txn.get_activity(id)?;
        if !record.current_state.accepts(req.action_id) {
            return Err(Error::IllegalTransition {
                activity: record.id,
                state: record.current_state,
                action: req.action_id,
                decision: None,
            });
        }

        match req.action_id {
            ActionId::HoldActivity => return self.hold(req, txn, &record),
            ActionId::StartActivity => {
                let dormant = apply_transition(&record, ActionId::StartActivity, None)?;
                txn.set_state(id, dormant.current_state, WriteCause::Lifecycle(ActionId::StartActivity))?;
            }
            _ => {}
        }

        let result = {
            let mut handler = ContextHandler::new(&mut txn, obs);
            note(obs, FlowStep::PdpNotify);
            let mut ctx = EvaluationContext::new(req, &mut handler).with_depth(self.inner.config.chain_depth_limit);
            if let Some(o) = obs {
                ctx = ctx.with_observer(o);
            }
            pdp::evaluate_indexed(&self.inner.policies, &self.inner.index, &mut ctx)?
        };
        note(obs, FlowStep::Decision);
        note(obs, FlowStep::ContextResponse);

        let (decision, obligations, reason) = self.enforce(req, &result);
        note(obs, FlowStep::PepResponse);
        if !obligations.is_empty() {
            note(obs, FlowStep::ObligationService);
        }

        let mut fulfilled = Vec::new();
        let mut failures = Vec::new();
        let mut deferred = Vec::new();
        for ob in obligations {
            if ob.obligation_id == UPDATE_STATE_OBLIGATION {
                match update_state(&mut txn, &ob, decision, id) {
                    Ok(()) => fulfilled.push(ob.obligation_id),
                    Err(e) => failures.push(failure(&ob, &e)),
                }
            } else {
                deferred.push(ob);
            }
        }
        txn.commit();

        let mut chained = Vec::new();
        for ob in deferred {
            match self.call(&ob, req, origin, obs) {
                Ok(resp) => {
                    chained.extend(resp);
                    fulfilled.push(ob.obligation_id);
                }
                Err(e) => {
                    tracing::warn!(activity = id, obligation = %ob.obligation_id, error = %e, "obligation failed");
                    failures.push(failure(&ob, &e));
                }
            }
        }

        Ok(ResponseContext {
            activity: req.resource.clone(),
            action: req.action_id,
            decision,
            pdp_decision: result.decision,
            reason,
            policy_id: result.policy_id,
            rule_id: result.rule_id,
            obligations_fulfilled: fulfilled,
            obligation_failures: failures,
            chained,
            final_activity_state: store.get_activity(id)?.current_state,
        })
    }

    fn hold(&self, req: &RequestContext, mut txn: Txn<'_>, record: &ActivityRecord) -> Result<ResponseContext> {
        let held = apply_transition(record, ActionId::HoldActivity, Some(Decision::Permit))?;
        txn.set_state(record.id.as_str(), held.current_state, WriteCause::Lifecycle(ActionId::HoldActivity))?;
        txn.commit();
        Ok(ResponseContext {
            activity: req.resource.clone(),
            action: req.action_id,
            decision: Decision::Permit,
            pdp_decision: Decision::Permit,
            reason: Some("hold is not governed by a dependency policy".into()),
            policy_id: None,
            rule_id: None,
            obligations_fulfilled: Vec::new(),
            obligation_failures: Vec::new(),
            chained: Vec::new(),
            final_activity_state: self.inner.store.get_activity(record.id.as_str())?.current_state,
        })
    }

    /// Deny-biased enforcement: anything but `Permit` is enforced as `Deny`.
    /// When the PDP gave no decision, the deny-side obligations of the
    /// policy governing the action still apply.
    fn enforce(
        &self,
        req: &RequestContext,
        result: &EvaluationResult,
    ) -> (Decision, Vec<ObligationExpression>, Option<String>) {
        match result.decision {
            Decision::Permit | Decision::Deny => (result.decision, result.obligations.clone(), None),
            other => {
                let ps = &self.inner.policies;
                let policy = result
                    .policy_id
                    .as_deref()
                    .and_then(|p| ps.policy(p))
                    .or_else(|| self.inner.index.lookup(ps, req.action_id));
                let obligations = policy
                    .map(|p| {
                        p.obligations
                            .iter()
                            .filter(|o| Decision::from(o.fulfill_on) == Decision::Deny)
                            .cloned()
                            .collect()
                    })
                    .unwrap_or_default();
                let mut reason = format!("policy decision was {other}");
                if let Some(e) = &result.error {
                    reason.push_str(": ");
                    reason.push_str(e);
                }
                (Decision::Deny, obligations, Some(reason))
            }
        }
    }

    fn call(
        &self,
        ob: &ObligationExpression,
        req: &RequestContext,
        origin: Origin,
        obs: Option<&dyn FlowObserver>,
    ) -> Result<Option<ResponseContext>> {
        match ob.obligation_id.as_str() {
            CALL_CONTINUE => {
                if origin != Origin::Continuity && self.inner.config.auto_continuity {
                    self.schedule(req);
                }
                Ok(None)
            }
            CALL_POST_UPDATE => {
                let post = RequestContext::new(req.subject.clone(), req.resource.clone(), ActionId::PostUpdate);
                self.process(&post, Origin::Chained, obs).map(Some)
            }
            other => Err(Error::UnknownObligation(other.to_owned())),
        }
    }

    /// Runs one obligation outside a request, for an activity whose
    /// decision is already committed.
    pub fn fulfill_obligation(&self, ob: &ObligationExpression, decision: Decision, activity: &ActivityId) -> Result<()> {
        if Decision::from(ob.fulfill_on) != decision {
            return Err(Error::Obligation {
                id: ob.obligation_id.clone(),
                reason: format!("fulfilled on {} but decision is {decision}", ob.fulfill_on),
            });
        }
        let lock = self.admission_lock(activity);
        let _guard = lock.lock();
        if ob.obligation_id == UPDATE_STATE_OBLIGATION {
            let mut txn = self.inner.store.begin_txn();
            update_state(&mut txn, ob, decision, activity.as_str())?;
            txn.commit();
            return Ok(());
        }
        let req = RequestContext::new(SCHEDULER_SUBJECT, activity.clone(), ActionId::ContinueActivity);
        self.call(ob, &req, Origin::External, None).map(drop)
    }

    fn schedule(&self, req: &RequestContext) {
        let engine = self.clone();
        let activity = req.resource.clone();
        let subject = req.subject.clone();
        let cfg = self.inner.config.continuity;
        let mut loops = self.inner.loops.lock();
        let slot = loops.entry(activity.clone()).or_default();
        slot.generation += 1;
        let generation = slot.generation;
        self.inner.reports.lock().insert(
            activity.clone(),
            ContinuityReport {
                activity: activity.clone(),
                iterations: Vec::new(),
                final_state: ActivityState::Running,
                stop_reason: None,
            },
        );
        let handle = thread::Builder::new()
            .name(format!("continuity-{activity}"))
            .spawn(move || {
                engine.continuity_loop(&activity, &subject, cfg, Some(generation), &mut |_, _| {});
            })
            .expect("spawn continuity thread");
        // A loop left from an earlier run of this activity sees the bumped
        // generation and stops on its next iteration.
        slot.handle = Some(handle);
    }

    /// Runs the continuity loop for `activity` on the calling thread.
    pub fn run_continuity(&self, activity: &ActivityId, cfg: ContinuityConfig) -> ContinuityReport {
        self.run_continuity_with(activity, cfg, |_, _| {})
    }

    /// [`Engine::run_continuity`] calling `hook(n, store)` before iteration
    /// `n` is evaluated, so tests can change the store mid-loop.
    pub fn run_continuity_with(
        &self,
        activity: &ActivityId,
        cfg: ContinuityConfig,
        mut hook: impl FnMut(u32, &DependencyStore),
    ) -> ContinuityReport {
        self.continuity_loop(activity, SCHEDULER_SUBJECT, cfg, None, &mut hook)
    }

    fn continuity_loop(
        &self,
        activity: &ActivityId,
        subject: &str,
        cfg: ContinuityConfig,
        generation: Option<u64>,
        hook: &mut dyn FnMut(u32, &DependencyStore),
    ) -> ContinuityReport {
        let started = Instant::now();
        let req = RequestContext::new(subject, activity.clone(), ActionId::ContinueActivity);
        let mut report = ContinuityReport {
            activity: activity.clone(),
            iterations: Vec::new(),
            final_state: ActivityState::Running,
            stop_reason: None,
        };
        for n in 1..=cfg.repetitions {
            if n > 1 {
                thread::sleep(cfg.interval);
            }
            hook(n, &self.inner.store);

            let lock = self.admission_lock(activity);
            let _guard = lock.lock();
            let current = generation.is_none_or(|g| self.loop_generation(activity) == g);
            let running = self
                .inner
                .store
                .get_activity(activity.as_str())
                .is_ok_and(|r| r.current_state == ActivityState::Running);
            if !current || !running {
                report.stop_reason = Some(StopReason::Finished);
                break;
            }
            let decision = match self.process(&req, Origin::Continuity, None) {
                Ok(resp) => resp.decision,
                Err(e) => {
                    tracing::warn!(activity = %activity, error = %e, "continuity evaluation failed");
                    Decision::Deny
                }
            };
            report.iterations.push(Iteration {
                n,
                decision,
                elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            if decision != Decision::Permit {
                report.stop_reason = Some(StopReason::Revoked);
                break;
            }
            if generation.is_some() {
                self.publish(&report, generation);
            }
        }
        report.stop_reason.get_or_insert(StopReason::Exhausted);
        if let Ok(r) = self.inner.store.get_activity(activity.as_str()) {
            report.final_state = r.current_state;
        }
        self.publish(&report, generation);
        report
    }

    fn loop_generation(&self, activity: &ActivityId) -> u64 {
        self.inner.loops.lock().get(activity).map_or(0, |s| s.generation)
    }

    fn publish(&self, report: &ContinuityReport, generation: Option<u64>) {
        if generation.is_some_and(|g| self.loop_generation(&report.activity) != g) {
            return;
        }
        self.inner.reports.lock().insert(report.activity.clone(), report.clone());
    }

    /// Latest report for `activity`; incomplete while its loop runs.
    pub fn continuity_report(&self, activity: &str) -> Option<ContinuityReport> {
        self.inner.reports.lock().get(activity).cloned()
    }

    /// Blocks until the scheduled loop of `activity` ends and returns its report.
    pub fn wait_continuity(&self, activity: &str) -> Option<ContinuityReport> {
        let handle = self.inner.loops.lock().get_mut(activity).and_then(|s| s.handle.take());
        if let Some(h) = handle {
            let _ = h.join();
        }
        self.continuity_report(activity)
    }

    /// Waits for every scheduled loop.
    pub fn wait_all(&self) {
        let handles: Vec<_> = self
            .inner
            .loops
            .lock()
            .values_mut()
            .filter_map(|s| s.handle.take())
            .collect();
        for h in handles {
            let _ = h.join();
        }
    }

    /// Admin writes, refused with [`Error::Busy`] when a request on one of the
    /// touched activities is in flight.
    pub fn admin_update(&self, updates: Vec<AdminUpdate>) -> Result<()> {
        let ids: BTreeSet<ActivityId> = updates
            .iter()
            .filter_map(|u| match u {
                AdminUpdate::Activity(r) => Some(r.id.clone()),
                _ => None,
            })
            .collect();
        let locks: Vec<_> = ids.iter().map(|id| (id, self.admission_lock(id))).collect();
        let mut guards = Vec::with_capacity(locks.len());
        for (id, lock) in &locks {
            guards.push(lock.try_lock().ok_or_else(|| Error::Busy(id.to_string()))?);
        }
        self.inner.store.admin_upsert_all(updates)
    }

    /// Waits for all loops, then replaces the store contents with `fixture`.
    pub fn reset(&self, fixture: &Fixture) -> Result<()> {
        self.wait_all();
        self.inner.reports.lock().clear();
        self.inner.store.load_fixture(fixture)
    }
}

fn failure(ob: &ObligationExpression, e: &Error) -> ObligationFailure {
    ObligationFailure {
        obligation_id: ob.obligation_id.clone(),
        reason: e.to_string(),
    }
}

/// Moves `activity` to the obligation's `state` parameter, provided the
/// life cycle has an edge from the current state to it under `decision`.
fn update_state(txn: &mut Txn<'_>, ob: &ObligationExpression, decision: Decision, activity: &str) -> Result<()> {
    let fail = |reason: String| Error::Obligation {
        id: ob.obligation_id.clone(),
        reason,
    };
    let target = match ob.parameters.get("state") {
        Some(Value::State(s)) => *s,
        Some(other) => return Err(fail(format!("`state` parameter has type {}", other.value_type()))),
        None => return Err(fail("missing `state` parameter".into())),
    };
    let record = txn.get_activity(activity)?;
    let action = ActionId::ALL
        .into_iter()
        .find(|a| apply_transition(&record, *a, Some(decision)).is_ok_and(|r| r.current_state == target))
        .ok_or_else(|| {
            fail(format!(
                "no life-cycle edge from {} to {target} on {decision}",
                record.current_state
            ))
        })?;
    txn.set_state(activity, target, WriteCause::Lifecycle(action))
}

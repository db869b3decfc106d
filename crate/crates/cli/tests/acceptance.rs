// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use actipol_bench::{run_bench, BenchSpec, Mode, Target};
use actipol_core::activity::ActivityRecord;
use actipol_core::corpus::{default_fixture, default_policy_set, POLICY_XML};
use actipol_core::policy::{self, CombiningAlg, Effect};
use actipol_core::store::{AdminUpdate, DependencySpec, Requirement, TransitionDependency};
use actipol_core::*;
use actipol_oracle::{oracle_decide, OracleWorld, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ActivityState::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("oracle equivalence", oracle_equivalence),
        ("corpus fidelity", corpus_fidelity),
        ("life-cycle scenario", life_cycle),
        ("atomicity", atomicity),
        ("performance", performance),
        ("flow trace", flow_trace),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.1}s] {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1}s] {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}

fn id(s: &str) -> ActivityId {
    ActivityId::new(s).unwrap()
}

fn to_oracle(f: &Fixture) -> OracleWorld {
    let mut w = OracleWorld::default();
    for a in &f.activities {
        w.activities.insert(
            a.id.to_string(),
            actipol_oracle::Activity {
                state: a.current_state.as_str().to_owned(),
                mutable: a.mutable,
            },
        );
    }
    for d in &f.dependencies {
        w.dependencies
            .entry((d.subject.to_string(), d.phase.as_str().parse().unwrap()))
            .or_default()
            .push(actipol_oracle::Dependency {
                dependent: d.dependent.to_string(),
                desired_state: d.desired_state.as_str().to_owned(),
            });
    }
    for t in &f.transition_dependencies {
        w.transitions.insert(
            (t.activity.to_string(), t.target_state.as_str().to_owned()),
            t.requirements
                .iter()
                .map(|r| actipol_oracle::Need {
                    activity: r.activity.to_string(),
                    state: r.state.as_str().to_owned(),
                })
                .collect(),
        );
    }
    w
}

fn action_for(phase: Phase) -> ActionId {
    match phase {
        Phase::Pre => ActionId::StartActivity,
        Phase::Ongoing => ActionId::ContinueActivity,
        Phase::Post => ActionId::PostUpdate,
    }
}

/// Compares engine and oracle on one world; `Err` describes the mismatch.
fn compare(ps: &PolicySet, f: &Fixture, subject: &str, phase: Phase, depth: usize) -> Result<(), String> {
    let store = DependencyStore::from_fixture(f).map_err(|e| e.to_string())?;
    let req = RequestContext::new("u", id(subject), action_for(phase));
    let mut txn = store.begin_txn();
    let result = pdp::evaluate(ps, &mut EvaluationContext::new(&req, &mut txn).with_depth(depth))
        .map_err(|e| e.to_string())?;
    let (verdict, after) = oracle_decide(to_oracle(f), subject, phase.as_str().parse().unwrap(), depth)
        .map_err(|e| e.to_string())?;
    let want = match verdict {
        Verdict::Permit => Decision::Permit,
        Verdict::Deny => Decision::Deny,
        Verdict::NotApplicable => Decision::NotApplicable,
    };
    let mismatch = |what: String| format!("{what} (phase {phase}, depth {depth})\n{}", f.to_json());
    if result.decision != want {
        return Err(mismatch(format!("engine {} vs oracle {}", result.decision, want)));
    }
    for a in &f.activities {
        let got = txn.get_activity(a.id.as_str()).unwrap().current_state;
        let expected = after.state(a.id.as_str()).unwrap();
        if got.as_str() != expected {
            return Err(mismatch(format!("{} is {got}, oracle says {expected}", a.id)));
        }
    }
    Ok(())
}

/// Four activities, `a0` the subject. `a1` and `a2` may be pre-dependents
/// desiring finished or running; each may carry one chain requirement.
fn exhaustive_worlds() -> impl Iterator<Item = Fixture> {
    let desired = [None, Some(Finished), Some(Running)];
    let chain1 = [None, Some(("a3", Finished)), Some(("a2", Finished)), Some(("a0", Running))];
    let chain2 = [None, Some(("a3", Finished)), Some(("a1", Running))];
    let states = [Dormant, Running, Finished];
    let mut topologies = Vec::new();
    for d1 in desired {
        for d2 in desired {
            for c1 in chain1 {
                for c2 in chain2 {
                    topologies.push((d1, d2, c1, c2));
                }
            }
        }
    }
    topologies.into_iter().flat_map(move |(d1, d2, c1, c2)| {
        (0..81 * 16).map(move |k| {
            let (mut s, m) = (k / 16, k % 16);
            let mut f = Fixture::default();
            for i in 0..4 {
                let state = states[s % 3];
                s /= 3;
                f.activities
                    .push(ActivityRecord::new(id(&format!("a{i}")), state, m >> i & 1 == 1));
            }
            for (dep, want, chain) in [("a1", d1, c1), ("a2", d2, c2)] {
                if let Some(want) = want {
                    f.dependencies.push(DependencySpec {
                        subject: id("a0"),
                        phase: Phase::Pre,
                        dependent: id(dep),
                        desired_state: want,
                    });
                }
                if let Some((req, state)) = chain {
                    f.transition_dependencies.push(TransitionDependency {
                        activity: id(dep),
                        target_state: want.unwrap_or(Finished),
                        requirements: vec![Requirement {
                            activity: id(req),
                            state,
                        }],
                    });
                }
            }
            f
        })
    })
}

fn random_world(rng: &mut ChaCha8Rng, n: usize) -> Fixture {
    let states = ActivityState::ALL;
    let mut f = Fixture::default();
    for i in 0..n {
        let s = states[rng.random_range(0..states.len())];
        f.activities.push(ActivityRecord::new(id(&format!("a{i}")), s, rng.random_bool(0.5)));
    }
    for phase in Phase::ALL {
        for j in 1..n {
            if rng.random_bool(0.4) {
                f.dependencies.push(DependencySpec {
                    subject: id("a0"),
                    phase,
                    dependent: id(&format!("a{j}")),
                    desired_state: states[rng.random_range(0..states.len())],
                });
            }
        }
    }
    for a in 1..n {
        for target in states {
            if !rng.random_bool(0.15) {
                continue;
            }
            let mut requirements = Vec::new();
            for r in (0..n).filter(|&r| r != a) {
                if rng.random_bool(0.3) {
                    requirements.push(Requirement {
                        activity: id(&format!("a{r}")),
                        state: states[rng.random_range(0..states.len())],
                    });
                }
            }
            if !requirements.is_empty() {
                f.transition_dependencies.push(TransitionDependency {
                    activity: id(&format!("a{a}")),
                    target_state: target,
                    requirements,
                });
            }
        }
    }
    f
}

fn oracle_equivalence() -> Outcome {
    let ps = default_policy_set();
    let mut exhaustive = 0;
    for f in exhaustive_worlds() {
        compare(&ps, &f, "a0", Phase::Pre, 2)?;
        exhaustive += 1;
    }
    ensure!(exhaustive <= 200_000, "{exhaustive} exhaustive cases exceed the bound");

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let random = 10_000;
    for _ in 0..random {
        let f = random_world(&mut rng, 6);
        let phase = Phase::ALL[rng.random_range(0..3)];
        let depth = rng.random_range(1..=3);
        compare(&ps, &f, "a0", phase, depth)?;
    }
    Ok(format!("{exhaustive} exhaustive + {random} random worlds agree"))
}

fn corpus_fidelity() -> Outcome {
    let ps = policy::parse_policy_set(POLICY_XML).map_err(|e| e.to_string())?;
    let diags = policy::validate_corpus(&ps);
    ensure!(diags.is_empty(), "diagnostics: {diags:?}");
    ensure!(
        ps.policy_combining_alg == CombiningAlg::OnlyOneApplicable,
        "policy set combines with {:?}",
        ps.policy_combining_alg
    );

    use Effect::{Deny as D, Permit as P};
    let expected: [(&str, CombiningAlg, &[(&str, Effect)], &[(&str, Effect)]); 4] = [
        (
            "startActivityPolicy",
            CombiningAlg::FirstApplicable,
            &[
                ("startActivityNoPreDep", P),
                ("startActivityWithPreDepNoUpdate", P),
                ("startActivityWithImmutablePreDepWithUpdateNeeded", D),
                ("startActivityWithPreDepUpdateNoDepOfDep", P),
                ("startActivityWithPreDepUpdateWithDepOfDepNoUpdateNeeded", P),
            ],
            &[
                ("updateRequestedActivityState", P),
                ("call-continueActivityPolicy", P),
                ("updateRequestedActivityState", D),
            ],
        ),
        (
            "continueActivityPolicy",
            CombiningAlg::FirstApplicable,
            &[
                ("continueActivityNoOnDep", P),
                ("continueActivityWithOnDepNoUpdate", P),
                ("ongoingActivityWithImmutableOnDepWithUpdateNeeded", D),
                ("continueActivityWithOnDepUpdateNoDepOfDep", P),
                ("continueActivityWithOnDepUpdateWithDepOfDepNoUpdateNeeded", P),
            ],
            &[("call-continueActivityPolicy", P), ("updateRequestedActivityState", D)],
        ),
        (
            "finishActivityPolicy",
            CombiningAlg::PermitOverrides,
            &[("finishActivityNoDependency", P)],
            &[("updateRequestedActivityState", P), ("call-postUpdatePolicy", P)],
        ),
        (
            "postUpdatePolicy",
            CombiningAlg::FirstApplicable,
            &[
                ("postUpdateNoPostDep", P),
                ("postUpdateWithPostDepNoUpdate", P),
                ("postUpdateWithPostDepUpdateNoDepOfDep", P),
                ("postUpdateWithPostDepUpdateWithDepOfDepNoUpdateNeeded", P),
            ],
            &[("updateRequestedActivityState", P)],
        ),
    ];
    ensure!(ps.policies.len() == expected.len(), "{} policies", ps.policies.len());
    for (policy, (pid, alg, rules, obligations)) in ps.policies.iter().zip(expected) {
        ensure!(policy.policy_id == pid, "policy `{}`, expected `{pid}`", policy.policy_id);
        ensure!(policy.rule_combining_alg == alg, "{pid} combines with {:?}", policy.rule_combining_alg);
        let got: Vec<_> = policy.rules.iter().map(|r| (r.rule_id.as_str(), r.effect)).collect();
        ensure!(got == rules, "{pid} rules {got:?}");
        let got: Vec<_> = policy
            .obligations
            .iter()
            .map(|o| (o.obligation_id.as_str(), o.fulfill_on))
            .collect();
        ensure!(got == obligations, "{pid} obligations {got:?}");
    }

    let json = policy::to_canonical_json(&ps);
    let via_json = policy::from_canonical_json(&json).map_err(|e| e.to_string())?;
    let back = policy::parse_policy_set(&policy::to_xml(&via_json)).map_err(|e| e.to_string())?;
    ensure!(back == ps, "XML -> JSON -> XML changed the model");
    Ok("4 policies, 15 rules, zero diagnostics, round trip identical".into())
}

fn engine(fixture: &Fixture, auto: bool, cfg: ContinuityConfig) -> Engine {
    let store = Arc::new(DependencyStore::with_audit());
    store.load_fixture(fixture).unwrap();
    let config = EngineConfig {
        continuity: cfg,
        auto_continuity: auto,
        ..EngineConfig::default()
    };
    Engine::new(default_policy_set(), store, config)
}

fn life_cycle() -> Outcome {
    let cfg = ContinuityConfig::new(10, Duration::from_millis(5));
    let e = engine(&default_fixture(), false, cfg);
    let irrigation = id("irrigation");
    let req = |action| RequestContext::new("farmer", irrigation.clone(), action);
    let state = |e: &Engine| e.store().get_activity("irrigation").unwrap().current_state;

    ensure!(state(&e) == Inactive, "initial state {}", state(&e));
    let start = e.handle_request(&req(ActionId::StartActivity)).map_err(|e| e.to_string())?;
    ensure!(
        start.decision == Decision::Permit && start.final_activity_state == Running && state(&e) == Running,
        "start: {start:?}"
    );
    let report = e.run_continuity(&irrigation, cfg);
    ensure!(
        report.iterations.len() == 10 && report.iterations.iter().all(|i| i.decision == Decision::Permit),
        "continuity: {report:?}"
    );
    ensure!(report.stop_reason == Some(StopReason::Exhausted) && state(&e) == Running, "after loop: {report:?}");
    let finish = e.handle_request(&req(ActionId::FinishActivity)).map_err(|e| e.to_string())?;
    ensure!(finish.final_activity_state == Inactive && state(&e) == Inactive, "finish: {finish:?}");
    ensure!(
        finish.chained.len() == 1 && finish.chained[0].decision == Decision::Permit,
        "post-update: {:?}",
        finish.chained
    );

    let path: Vec<(ActivityState, ActivityState)> = e
        .store()
        .audit_log()
        .into_iter()
        .filter(|ev| ev.activity == irrigation)
        .map(|ev| (ev.from, ev.to))
        .collect();
    let want = [(Inactive, Dormant), (Dormant, Running), (Running, Finished), (Finished, Inactive)];
    ensure!(path == want, "life-cycle path {path:?}");

    // violation injected before iteration k
    for k in 1..=10u32 {
        let e = engine(&default_fixture(), false, cfg);
        e.handle_request(&req(ActionId::StartActivity)).map_err(|e| e.to_string())?;
        let report = e.run_continuity_with(&irrigation, cfg, |n, store| {
            if n == k {
                store
                    .admin_upsert(AdminUpdate::Activity(ActivityRecord::new(id("weather-monitoring"), Finished, false)))
                    .unwrap();
            }
        });
        let decisions: Vec<Decision> = report.iterations.iter().map(|i| i.decision).collect();
        let mut want = vec![Decision::Permit; k as usize - 1];
        want.push(Decision::Deny);
        ensure!(decisions == want, "k={k}: {decisions:?}");
        ensure!(
            report.stop_reason == Some(StopReason::Revoked) && state(&e) == Revoked,
            "k={k}: {report:?}"
        );
    }

    // the same flow with the scheduler driving the loop
    let e = engine(&default_fixture(), true, cfg);
    e.handle_request(&req(ActionId::StartActivity)).map_err(|e| e.to_string())?;
    let report = e.wait_continuity("irrigation").ok_or("no scheduled loop")?;
    ensure!(report.iterations.len() == 10, "scheduled loop: {report:?}");
    let finish = e.handle_request(&req(ActionId::FinishActivity)).map_err(|e| e.to_string())?;
    ensure!(finish.final_activity_state == Inactive, "scheduled finish: {finish:?}");
    Ok("inactive -> dormant -> running -> (10 permits) -> finished -> inactive; revocation at each k in 1..=10".into())
}

fn atomicity() -> Outcome {
    let ps = default_policy_set();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa70);
    let mut denied = 0;
    let mut tries = 0;
    while denied < 1000 {
        tries += 1;
        ensure!(tries < 200_000, "could not generate enough denied requests");
        let mut f = random_world(&mut rng, 6);
        f.activities[0].current_state = Dormant;
        let store = DependencyStore::from_fixture(&f).unwrap();
        let before = store.export().to_json();
        let req = RequestContext::new("u", id("a0"), ActionId::StartActivity);
        let mut txn = store.begin_txn();
        let result = pdp::evaluate(&ps, &mut EvaluationContext::new(&req, &mut txn)).map_err(|e| e.to_string())?;
        txn.commit();
        if result.decision == Decision::Permit {
            continue;
        }
        denied += 1;
        ensure!(store.export().to_json() == before, "{} changed the store", result.decision);

        // same world through the PEP: only the subject moves, to aborted
        let mut f2 = f.clone();
        f2.activities[0].current_state = Inactive;
        let e = engine(&f2, false, ContinuityConfig::default());
        let resp = e.handle_request(&req).map_err(|e| e.to_string())?;
        ensure!(resp.decision == Decision::Deny && resp.final_activity_state == Aborted, "{resp:?}");
        let mut after = e.store().export();
        after.activities[0].current_state = Dormant;
        ensure!(after.to_json() == before, "enforced deny changed other activities");
    }

    let mut pairs = 0;
    while pairs < 100 {
        let f = overlapping_world(&mut rng);
        let serial = |first: &str, second: &str| {
            let e = engine(&f, false, ContinuityConfig::default());
            let a = e.handle_request(&RequestContext::new("u", id(first), ActionId::StartActivity));
            let b = e.handle_request(&RequestContext::new("u", id(second), ActionId::StartActivity));
            (e.store().export().to_json(), a.map(|r| r.decision).ok(), b.map(|r| r.decision).ok())
        };
        let (ab, ab_x, ab_y) = serial("x", "y");
        let (ba, ba_y, ba_x) = serial("y", "x");

        let e = engine(&f, false, ContinuityConfig::default());
        let (rx, ry) = std::thread::scope(|s| {
            let hx = s.spawn(|| e.handle_request(&RequestContext::new("u", id("x"), ActionId::StartActivity)));
            let hy = s.spawn(|| e.handle_request(&RequestContext::new("u", id("y"), ActionId::StartActivity)));
            (hx.join().unwrap(), hy.join().unwrap())
        });
        let got = (e.store().export().to_json(), rx.map(|r| r.decision).ok(), ry.map(|r| r.decision).ok());
        let xy = (ab, ab_x, ab_y);
        let yx = (ba, ba_x, ba_y);
        ensure!(got == xy || got == yx, "concurrent outcome matches no serial order\n{}", f.to_json());
        pairs += 1;
    }
    Ok(format!("{denied} denied evaluations left the store unchanged; {pairs} concurrent pairs serializable"))
}

/// Two subjects `x` and `y` sharing some of the dependents `d0..d3`.
fn overlapping_world(rng: &mut ChaCha8Rng) -> Fixture {
    let states = [Dormant, Running, Finished, Inactive];
    let mut f = Fixture::default();
    f.activities.push(ActivityRecord::new(id("x"), Inactive, true));
    f.activities.push(ActivityRecord::new(id("y"), Inactive, true));
    for i in 0..4 {
        let s = states[rng.random_range(0..states.len())];
        f.activities.push(ActivityRecord::new(id(&format!("d{i}")), s, rng.random_bool(0.7)));
    }
    for subject in ["x", "y"] {
        for i in 0..4 {
            if rng.random_bool(0.6) {
                f.dependencies.push(DependencySpec {
                    subject: id(subject),
                    phase: Phase::Pre,
                    dependent: id(&format!("d{i}")),
                    desired_state: [Finished, Running][rng.random_range(0..2)],
                });
            }
        }
    }
    if rng.random_bool(0.5) {
        f.transition_dependencies.push(TransitionDependency {
            activity: id("d0"),
            target_state: Finished,
            requirements: vec![Requirement {
                activity: id("d1"),
                state: Running,
            }],
        });
    }
    f
}

fn performance() -> Outcome {
    let counts = vec![10, 20, 30, 40, 50];
    let spec = BenchSpec {
        mode: Mode::StartOnly,
        request_counts: counts.clone(),
        continuity: vec![ContinuityConfig::new(10, Duration::from_millis(5))],
        warmup_runs: 1,
        concurrency: 1,
    };
    let start = run_bench(&spec, &Target::loopback(50)).map_err(|e| e.to_string())?;
    let worst_mean = start.runs.iter().map(|r| r.stats.mean_ms).fold(0.0, f64::max);
    ensure!(worst_mean <= 25.0, "mean start latency {worst_mean:.2} ms");
    let totals: Vec<f64> = start.runs.iter().map(|r| r.total_ms).collect();
    ensure!(totals.windows(2).all(|w| w[0] < w[1]), "totals not increasing: {totals:?}");

    let full = BenchSpec {
        mode: Mode::FullCycle,
        request_counts: vec![10],
        continuity: vec![
            ContinuityConfig::new(10, Duration::from_millis(5)),
            ContinuityConfig::new(20, Duration::from_millis(10)),
        ],
        warmup_runs: 0,
        concurrency: 1,
    };
    let cycles = run_bench(&full, &Target::loopback(10)).map_err(|e| e.to_string())?;
    let mut means = BTreeMap::new();
    for run in &cycles.runs {
        let floor = f64::from(run.repetitions - 1) * run.interval_ms as f64;
        let fastest = run.samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
        ensure!(fastest >= floor, "{}x{}ms: sample {fastest:.1} ms below floor {floor} ms", run.repetitions, run.interval_ms);
        means.insert((run.repetitions, run.interval_ms), run.stats.mean_ms);
    }
    let (short, long) = (means[&(10, 5)], means[&(20, 10)]);
    ensure!(short < long, "full-cycle mean 10x5 {short:.1} ms not below 20x10 {long:.1} ms");
    Ok(format!(
        "start mean <= {worst_mean:.2} ms, totals {:?} ms; full cycle 10x5 {short:.1} ms < 20x10 {long:.1} ms",
        totals.iter().map(|t| t.round() as i64).collect::<Vec<_>>()
    ))
}

fn flow_trace() -> Outcome {
    use FlowStep::*;
    let e = engine(&default_fixture(), false, ContinuityConfig::default());
    let obs = RecordingObserver::new();
    e.handle_request_observed(&RequestContext::new("farmer", id("sowing"), ActionId::StartActivity), &obs)
        .map_err(|e| e.to_string())?;
    let golden = [
        PepIntercept,
        ContextRequest,
        PdpNotify,
        InfoRequest,
        PipQuery,
        InfoResponse,
        PolicyRetrieval,
        InfoRequest,
        PipQuery,
        InfoResponse,
        Decision,
        ContextResponse,
        PepResponse,
        ObligationService,
    ];
    let got = obs.collapsed();
    ensure!(got == golden, "trace {got:?}");
    Ok(format!("{} steps match the golden trace", golden.len()))
}

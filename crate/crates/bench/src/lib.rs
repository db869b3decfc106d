// SPDX-License-Identifier: Apache-2.0

//! Latency harness: batches of sequential `startActivity` requests, or full
//! start / continuity / finish cycles, against an in-process engine or an
//! HTTP endpoint.

mod report;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use actipol_core::activity::ActivityRecord;
use actipol_core::policy::PolicySet;
use actipol_core::store::{DependencySpec, Requirement, TransitionDependency};
use actipol_core::{
    corpus, ActionId, ActivityId, ActivityState, ContinuityConfig, ContinuityReport, Decision, DependencyStore, Engine,
    EngineConfig, Fixture, Phase, RequestContext,
};
use actipol_server::{BackgroundServer, WireResponse};
use serde::{Deserialize, Serialize};

pub use report::{emit_report, BenchReport, Format, RunResult, Stats};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("fixture has {available} startable activities, {needed} needed")]
    FixtureTooSmall { needed: usize, available: usize },
    #[error("{action} on `{activity}` was denied ({reason}); latency runs only measure the permit path")]
    UnexpectedDeny {
        activity: String,
        action: ActionId,
        reason: String,
    },
    #[error("invalid bench spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Engine(#[from] actipol_core::Error),
    #[error(transparent)]
    Service(#[from] actipol_server::ServiceError),
    #[error("http: {0}")]
    Http(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<reqwest::Error> for BenchError {
    fn from(e: reqwest::Error) -> Self {
        BenchError::Http(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    StartOnly,
    FullCycle,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::StartOnly => "start_only",
            Mode::FullCycle => "full_cycle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchSpec {
    pub mode: Mode,
    pub request_counts: Vec<usize>,
    pub continuity: Vec<ContinuityConfig>,
    /// Full passes at the largest count run before measuring and discarded.
    pub warmup_runs: usize,
    /// Issue each batch from this many threads instead of one. Results are
    /// not comparable with sequential runs.
    pub concurrency: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            mode: Mode::StartOnly,
            request_counts: vec![10, 20, 30, 40, 50],
            continuity: [(10, 5), (10, 10), (20, 5), (20, 10)]
                .into_iter()
                .map(|(r, ms)| ContinuityConfig::new(r, Duration::from_millis(ms)))
                .collect(),
            warmup_runs: 1,
            concurrency: 1,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.request_counts.is_empty() || self.request_counts.contains(&0) {
            return Err(BenchError::InvalidSpec("request counts must be positive".into()));
        }
        if self.request_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BenchError::InvalidSpec("request counts must be ascending".into()));
        }
        if self.continuity.is_empty() {
            return Err(BenchError::InvalidSpec("at least one continuity configuration is needed".into()));
        }
        if self.concurrency == 0 {
            return Err(BenchError::InvalidSpec("concurrency must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parses `10x5` as ten repetitions at 5 ms.
pub fn parse_continuity(s: &str) -> Result<ContinuityConfig, BenchError> {
    let bad = || BenchError::InvalidSpec(format!("continuity `{s}` is not REPSxMILLIS"));
    let (reps, ms) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let reps: u32 = reps.trim().parse().map_err(|_| bad())?;
    let ms: u64 = ms.trim().parse().map_err(|_| bad())?;
    if reps == 0 || ms == 0 {
        return Err(bad());
    }
    Ok(ContinuityConfig::new(reps, Duration::from_millis(ms)))
}

/// What the requests are sent to.
#[derive(Debug, Clone)]
pub enum Target {
    /// A fresh in-process engine per continuity configuration.
    Local { policies: PolicySet, fixture: Fixture },
    /// A fresh HTTP server on a loopback port per continuity configuration.
    Loopback { policies: PolicySet, fixture: Fixture },
    /// An already running server. Its continuity settings are its own; the
    /// spec's configurations only label the results. The store is reset by
    /// writing `fixture`'s activities back through the admin API.
    Remote { base_url: String, fixture: Fixture },
}

impl Target {
    pub fn local(n: usize) -> Self {
        Target::Local {
            policies: corpus::default_policy_set(),
            fixture: bench_fixture(n),
        }
    }

    pub fn loopback(n: usize) -> Self {
        Target::Loopback {
            policies: corpus::default_policy_set(),
            fixture: bench_fixture(n),
        }
    }

    fn fixture(&self) -> &Fixture {
        match self {
            Target::Local { fixture, .. } | Target::Loopback { fixture, .. } | Target::Remote { fixture, .. } => fixture,
        }
    }
}

pub const BENCH_PREFIX: &str = "bench-";

/// A world with `n` startable activities `bench-000`... Each needs one of
/// a few finished, immutable groundwork activities before it starts and a
/// running, immutable monitor while it runs, so every request takes the
/// permit path through a non-trivial rule.
pub fn bench_fixture(n: usize) -> Fixture {
    let id = |s: String| ActivityId::new(s).expect("non-empty id");
    let mut f = Fixture::default();
    let groundwork: Vec<ActivityId> = (0..4).map(|i| id(format!("groundwork-{i}"))).collect();
    for g in &groundwork {
        f.activities.push(ActivityRecord::new(g.clone(), ActivityState::Finished, false));
    }
    let monitor = id("monitor".into());
    f.activities.push(ActivityRecord::new(monitor.clone(), ActivityState::Running, false));
    let staging = id("staging".into());
    f.activities.push(ActivityRecord::new(staging.clone(), ActivityState::Finished, true));
    f.transition_dependencies.push(TransitionDependency {
        activity: staging.clone(),
        target_state: ActivityState::Finished,
        requirements: vec![Requirement {
            activity: groundwork[0].clone(),
            state: ActivityState::Finished,
        }],
    });
    for i in 0..n {
        let a = id(format!("{BENCH_PREFIX}{i:03}"));
        f.activities.push(ActivityRecord::new(a.clone(), ActivityState::Inactive, true));
        f.dependencies.push(DependencySpec {
            subject: a.clone(),
            phase: Phase::Pre,
            dependent: groundwork[i % groundwork.len()].clone(),
            desired_state: ActivityState::Finished,
        });
        if i % 2 == 0 {
            f.dependencies.push(DependencySpec {
                subject: a.clone(),
                phase: Phase::Pre,
                dependent: staging.clone(),
                desired_state: ActivityState::Finished,
            });
        }
        f.dependencies.push(DependencySpec {
            subject: a,
            phase: Phase::Ongoing,
            dependent: monitor.clone(),
            desired_state: ActivityState::Running,
        });
    }
    f
}

fn startable(fixture: &Fixture) -> Vec<ActivityId> {
    fixture
        .activities
        .iter()
        .filter(|a| a.current_state == ActivityState::Inactive)
        .map(|a| a.id.clone())
        .collect()
}

/// One prepared configuration of the target.
trait Driver: Sync {
    fn request(&self, activity: &ActivityId, action: ActionId) -> Result<(), BenchError>;
    fn wait_continuity(&self, activity: &ActivityId) -> Result<ContinuityReport, BenchError>;
    fn reset(&self) -> Result<(), BenchError>;
}

struct LocalDriver {
    engine: Engine,
    fixture: Fixture,
}

fn engine_for(policies: &PolicySet, fixture: &Fixture, cfg: ContinuityConfig) -> Result<Engine, BenchError> {
    let store = Arc::new(DependencyStore::from_fixture(fixture)?);
    let config = EngineConfig {
        continuity: cfg,
        ..EngineConfig::default()
    };
    Ok(Engine::new(policies.clone(), store, config))
}

impl Driver for LocalDriver {
    fn request(&self, activity: &ActivityId, action: ActionId) -> Result<(), BenchError> {
        let resp = self
            .engine
            .handle_request(&RequestContext::new("bench", activity.clone(), action))?;
        if resp.decision != Decision::Permit {
            return Err(BenchError::UnexpectedDeny {
                activity: activity.to_string(),
                action,
                reason: resp.reason.unwrap_or_else(|| format!("rule {:?}", resp.rule_id)),
            });
        }
        Ok(())
    }

    fn wait_continuity(&self, activity: &ActivityId) -> Result<ContinuityReport, BenchError> {
        self.engine
            .wait_continuity(activity.as_str())
            .ok_or_else(|| BenchError::Http(format!("no continuity loop for `{activity}`")))
    }

    fn reset(&self) -> Result<(), BenchError> {
        Ok(self.engine.reset(&self.fixture)?)
    }
}

struct HttpDriver {
    base_url: String,
    client: reqwest::blocking::Client,
    fixture: Fixture,
    _server: Option<BackgroundServer>,
}

impl HttpDriver {
    fn new(base_url: String, fixture: Fixture, server: Option<BackgroundServer>) -> Result<Self, BenchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_owned(),
            client,
            fixture,
            _server: server,
        })
    }
}

impl Driver for HttpDriver {
    fn request(&self, activity: &ActivityId, action: ActionId) -> Result<(), BenchError> {
        let resp = self
            .client
            .get(format!("{}/v1/decide", self.base_url))
            .query(&[("subject", "bench"), ("activity", activity.as_str()), ("action", action.as_str())])
            .send()?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BenchError::Http(format!("{status}: {}", resp.text().unwrap_or_default())));
        }
        let wire: WireResponse = resp.json()?;
        if wire.decision != Decision::Permit.as_str() {
            return Err(BenchError::UnexpectedDeny {
                activity: activity.to_string(),
                action,
                reason: wire.reason.unwrap_or_else(|| format!("rule {:?}", wire.rule_id)),
            });
        }
        Ok(())
    }

    fn wait_continuity(&self, activity: &ActivityId) -> Result<ContinuityReport, BenchError> {
        let url = format!("{}/v1/reports/continuity/{activity}", self.base_url);
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            let resp = self.client.get(&url).send()?;
            if resp.status().is_success() {
                let report: ContinuityReport = resp.json()?;
                if report.is_complete() {
                    return Ok(report);
                }
            }
            if Instant::now() > deadline {
                return Err(BenchError::Http(format!("continuity loop of `{activity}` did not finish")));
            }
            thread::sleep(Duration::from_millis(1));
        }
    }

    /// Retries while the server reports an activity busy; continuity
    /// iterations of the previous batch may still be evaluating.
    fn reset(&self) -> Result<(), BenchError> {
        for _ in 0..200 {
            let resp = self
                .client
                .put(format!("{}/v1/admin/activities", self.base_url))
                .json(&self.fixture.activities)
                .send()?;
            match resp.status() {
                s if s.is_success() => return Ok(()),
                reqwest::StatusCode::CONFLICT => thread::sleep(Duration::from_millis(1)),
                s => return Err(BenchError::Http(format!("reset failed: {s}: {}", resp.text().unwrap_or_default()))),
            }
        }
        Err(BenchError::Http("reset kept conflicting with running requests".into()))
    }
}

fn driver(target: &Target, cfg: ContinuityConfig) -> Result<Box<dyn Driver>, BenchError> {
    Ok(match target {
        Target::Local { policies, fixture } => Box::new(LocalDriver {
            engine: engine_for(policies, fixture, cfg)?,
            fixture: fixture.clone(),
        }),
        Target::Loopback { policies, fixture } => {
            let server = BackgroundServer::start(engine_for(policies, fixture, cfg)?)?;
            Box::new(HttpDriver::new(server.base_url(), fixture.clone(), Some(server))?)
        }
        Target::Remote { base_url, fixture } => Box::new(HttpDriver::new(base_url.clone(), fixture.clone(), None)?),
    })
}

struct Batch {
    samples: Vec<f64>,
    total_ms: f64,
    stop_reasons: BTreeMap<String, usize>,
}

fn one(driver: &dyn Driver, mode: Mode, activity: &ActivityId) -> Result<(f64, Option<ContinuityReport>), BenchError> {
    let started = Instant::now();
    driver.request(activity, ActionId::StartActivity)?;
    if mode == Mode::StartOnly {
        return Ok((started.elapsed().as_secs_f64() * 1e3, None));
    }
    let report = driver.wait_continuity(activity)?;
    if report.final_state == ActivityState::Running {
        driver.request(activity, ActionId::FinishActivity)?;
    }
    Ok((started.elapsed().as_secs_f64() * 1e3, Some(report)))
}

fn batch(driver: &dyn Driver, mode: Mode, activities: &[ActivityId], concurrency: usize) -> Result<Batch, BenchError> {
    let started = Instant::now();
    let results: Vec<(f64, Option<ContinuityReport>)> = if concurrency <= 1 {
        activities
            .iter()
            .map(|a| one(driver, mode, a))
            .collect::<Result<_, _>>()?
    } else {
        let chunk = activities.len().div_ceil(concurrency);
        thread::scope(|s| {
            let handles: Vec<_> = activities
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|a| one(driver, mode, a)).collect::<Result<Vec<_>, _>>()))
                .collect();
            let mut all = Vec::new();
            for h in handles {
                all.extend(h.join().expect("bench worker panicked")?);
            }
            Ok::<_, BenchError>(all)
        })?
    };
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    let mut stop_reasons = BTreeMap::new();
    let mut samples = Vec::with_capacity(results.len());
    for (ms, report) in results {
        samples.push(ms);
        if let Some(reason) = report.and_then(|r| r.stop_reason) {
            *stop_reasons.entry(reason.as_str().to_owned()).or_default() += 1;
        }
    }
    Ok(Batch {
        samples,
        total_ms,
        stop_reasons,
    })
}

/// Runs every (continuity, count) combination of `spec` against `target`.
pub fn run_bench(spec: &BenchSpec, target: &Target) -> Result<BenchReport, BenchError> {
    spec.validate()?;
    let activities = startable(target.fixture());
    let needed = *spec.request_counts.last().expect("validated non-empty");
    if activities.len() < needed {
        return Err(BenchError::FixtureTooSmall {
            needed,
            available: activities.len(),
        });
    }
    let mut report = BenchReport::default();
    for &cfg in &spec.continuity {
        let driver = driver(target, cfg)?;
        for _ in 0..spec.warmup_runs {
            driver.reset()?;
            batch(driver.as_ref(), spec.mode, &activities[..needed], spec.concurrency)?;
        }
        for &count in &spec.request_counts {
            driver.reset()?;
            let b = batch(driver.as_ref(), spec.mode, &activities[..count], spec.concurrency)?;
            report.runs.push(RunResult {
                mode: spec.mode,
                count,
                repetitions: cfg.repetitions,
                interval_ms: cfg.interval.as_millis() as u64,
                concurrency: spec.concurrency,
                total_ms: b.total_ms,
                stats: Stats::of(&b.samples),
                samples_ms: b.samples,
                stop_reasons: b.stop_reasons,
            });
        }
        driver.reset()?;
    }
    Ok(report)
}

//! Fixed-step simulation loop.
//!
//! One [`Simulation`] owns the sim clock, the barrier registry and the
//! mission. Each step advances the executor, replays the person and barrier
//! scripts, audits true contact (distance < 0, independent of the monitor's
//! margin) and runs the monitor whenever a tick boundary is crossed.
//!
//! Replans are handed to planner worker threads. Their results are collected
//! at the start of the following step, so a run is a pure function of the
//! scenario and seed no matter how long the workers take.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::thread::JoinHandle;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::arm::{ArmDescription, JointConfig};
use crate::barriers::{BarrierError, BarrierId, BarrierRegistry, PersonState, WorldSnapshot};
use crate::cancel::CancelToken;
use crate::collision::{distance_capsule_barrier, CapsuleShape, NO_BARRIER_CLEARANCE};
use crate::mission::{
    MissionError, MissionState, MonitorAction, MonitorConfig, Phase, ReplanOutcome,
};
use crate::planner::{plan_subpath, JointPath, PlanError, PlanRequest, PlannerConfig};
use crate::scenario::{BarrierAction, BarrierSpec, LoadedScenario, ScenarioSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Mission(#[from] MissionError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
}

fn six_decimals<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
    let raw = serde_json::value::RawValue::from_string(format!("{t:.6}"))
        .map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    #[serde(serialize_with = "six_decimals")]
    pub t: f64,
    pub event: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Running,
    Done,
    Failed,
    Dnf,
}

/// Deterministic record of a run. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub scenario: String,
    pub seed: u64,
    pub outcome: Outcome,
    /// Sim time at which the last sub-path completed; `None` unless Done.
    pub completion_time: Option<f64>,
    pub sim_time_end: f64,
    pub stop_count: u32,
    pub replan_count_current: u32,
    pub replan_count_future: u32,
    pub min_clearance_over_run: f64,
    pub ground_truth_collision_count: u32,
    pub monitor_ticks: u32,
    pub events: Vec<TimelineEvent>,
}

impl MetricsLog {
    fn new(scenario: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.to_owned(),
            seed,
            outcome: Outcome::Running,
            completion_time: None,
            sim_time_end: 0.0,
            stop_count: 0,
            replan_count_current: 0,
            replan_count_future: 0,
            min_clearance_over_run: NO_BARRIER_CLEARANCE,
            ground_truth_collision_count: 0,
            monitor_ticks: 0,
            events: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

/// A true-contact entry event from the ground-truth audit.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEvent {
    pub barrier: BarrierId,
    pub distance: f64,
}

/// Per-barrier minimum signed distance of the arm in configuration `q`.
fn barrier_distances(capsules: &[CapsuleShape], snapshot: &WorldSnapshot) -> Vec<(BarrierId, f64)> {
    snapshot
        .barriers
        .iter()
        .map(|b| {
            let d = capsules
                .iter()
                .map(|c| distance_capsule_barrier(c, &b.shape))
                .fold(f64::INFINITY, f64::min);
            (b.id.clone(), d)
        })
        .collect()
}

/// Contact audit with edge-triggered entry events per barrier.
#[derive(Debug, Clone, Default)]
pub struct GroundTruthAuditor {
    in_contact: BTreeSet<BarrierId>,
}

impl GroundTruthAuditor {
    /// Returns new contact entries and the arm's overall clearance.
    pub fn audit(
        &mut self,
        arm: &ArmDescription,
        q: &JointConfig,
        snapshot: &WorldSnapshot,
    ) -> (Vec<CollisionEvent>, f64) {
        let caps = arm.link_capsules_world(q).expect("robot config matches arm");
        let mut entries = Vec::new();
        let mut now = BTreeSet::new();
        let mut clearance = NO_BARRIER_CLEARANCE;
        for (id, d) in barrier_distances(&caps, snapshot) {
            clearance = clearance.min(d);
            if d < 0.0 {
                if !self.in_contact.contains(&id) {
                    entries.push(CollisionEvent {
                        barrier: id.clone(),
                        distance: d,
                    });
                }
                now.insert(id);
            }
        }
        self.in_contact = now;
        (entries, clearance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JobKind {
    Stop,
    Future(usize),
}

struct Job {
    kind: JobKind,
    request: PlanRequest,
    cancel: CancelToken,
    handle: JoinHandle<Result<JointPath, PlanError>>,
}

fn spawn_job(
    arm: &Arc<ArmDescription>,
    kind: JobKind,
    request: PlanRequest,
    cfg: PlannerConfig,
) -> Job {
    let cancel = CancelToken::new();
    let worker_arm = arm.clone();
    let worker_req = request.clone();
    let worker_cancel = cancel.clone();
    let handle = std::thread::spawn(move || {
        plan_subpath(&worker_arm, &worker_req, &cfg, Some(&worker_cancel))
    });
    Job {
        kind,
        request,
        cancel,
        handle,
    }
}

pub struct Simulation {
    arm: Arc<ArmDescription>,
    spec: ScenarioSpec,
    registry: BarrierRegistry,
    mission: MissionState,
    planner: PlannerConfig,
    monitor: MonitorConfig,
    seed: u64,
    dt: f64,
    step_index: u64,
    ticks_fired: u64,
    robot_q: JointConfig,
    traj_time: f64,
    interactive_person: Option<PersonState>,
    next_barrier_event: usize,
    jobs: Vec<Job>,
    future_attempts: u64,
    auditor: GroundTruthAuditor,
    metrics: MetricsLog,
    last_actions: Vec<MonitorAction>,
}

impl Drop for Simulation {
    fn drop(&mut self) {
        for job in self.jobs.drain(..) {
            job.cancel.cancel();
            let _ = job.handle.join();
        }
    }
}

impl Simulation {
    pub fn new(loaded: &LoadedScenario) -> Result<Self, SimError> {
        Self::with_seed(loaded, loaded.spec.seeds.planner)
    }

    pub fn with_seed(loaded: &LoadedScenario, seed: u64) -> Result<Self, SimError> {
        let spec = loaded.spec.clone();
        let arm = Arc::new(loaded.arm.clone());
        let start_xy = spec
            .person_script
            .position_at(0.0)
            .unwrap_or(spec.person_start);
        let mut registry = BarrierRegistry::new(spec.person, start_xy);
        for b in &spec.initial_barriers {
            spawn_from_spec(&mut registry, b)?;
        }
        let home = spec.home_config(&arm);
        let mut mission = MissionState::new(home.clone(), spec.workspace);
        for w in &spec.waypoints {
            mission.add_waypoint(w.position, w.label.clone())?;
        }
        let metrics = MetricsLog::new(&spec.name, seed);
        Ok(Self {
            planner: spec.planner,
            monitor: spec.monitor,
            dt: spec.sim.dt,
            arm,
            registry,
            mission,
            seed,
            step_index: 0,
            ticks_fired: 0,
            robot_q: home,
            traj_time: 0.0,
            interactive_person: None,
            next_barrier_event: 0,
            jobs: Vec::new(),
            future_attempts: 0,
            auditor: GroundTruthAuditor::default(),
            metrics,
            last_actions: Vec::new(),
            spec,
        })
    }

    pub fn arm(&self) -> &ArmDescription {
        &self.arm
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn mission(&self) -> &MissionState {
        &self.mission
    }

    pub fn registry(&self) -> &BarrierRegistry {
        &self.registry
    }

    pub fn metrics(&self) -> &MetricsLog {
        &self.metrics
    }

    pub fn robot_q(&self) -> &JointConfig {
        &self.robot_q
    }

    pub fn traj_time(&self) -> f64 {
        self.traj_time
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn monitor_config(&self) -> &MonitorConfig {
        &self.monitor
    }

    pub fn set_monitor_config(&mut self, cfg: MonitorConfig) {
        self.monitor = cfg;
    }

    /// Sim time, s. Computed from the step count so it never drifts.
    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    /// Actions emitted by the most recent monitor tick.
    pub fn last_actions(&self) -> &[MonitorAction] {
        &self.last_actions
    }

    pub fn snapshot(&self) -> Arc<WorldSnapshot> {
        self.registry.snapshot()
    }

    fn log(&mut self, event: &str, detail: String) {
        self.metrics.events.push(TimelineEvent {
            t: self.time(),
            event: event.to_owned(),
            detail,
        });
    }

    fn flush_mission_events(&mut self) {
        for ev in self.mission.take_events() {
            match ev.event.as_str() {
                "stop" => self.metrics.stop_count += 1,
                "replan_current_success" => self.metrics.replan_count_current += 1,
                "replan_future_success" => self.metrics.replan_count_future += 1,
                "completed" => self.metrics.completion_time = Some(self.time()),
                _ => {}
            }
            self.log(&ev.event, ev.detail);
        }
    }

    // ---- commands -------------------------------------------------------

    pub fn add_waypoint(&mut self, target: Vector3<f64>, label: String) -> Result<usize, SimError> {
        let wp = self.mission.add_waypoint(target, label)?;
        self.flush_mission_events();
        Ok(wp.id)
    }

    pub fn lock_path(&mut self) -> Result<(), SimError> {
        let snapshot = self.registry.snapshot();
        let res = self.mission.lock_path(
            &self.arm,
            &snapshot,
            &self.planner,
            &self.monitor,
            self.seed,
        );
        self.flush_mission_events();
        res.map_err(Into::into)
    }

    pub fn execute(&mut self) -> Result<(), SimError> {
        self.mission.execute()?;
        self.traj_time = 0.0;
        self.flush_mission_events();
        Ok(())
    }

    pub fn spawn_obstacle(&mut self, spec: &BarrierSpec) -> Result<BarrierId, SimError> {
        let id = spawn_from_spec(&mut self.registry, spec)?;
        self.log("barrier_spawned", id.to_string());
        Ok(id)
    }

    pub fn transform_barrier(
        &mut self,
        id: &BarrierId,
        pose: crate::geometry::Pose,
        scale: Vector3<f64>,
    ) -> Result<(), SimError> {
        self.registry.transform_barrier(id, pose, scale)?;
        self.log("barrier_transformed", id.to_string());
        Ok(())
    }

    pub fn delete_barrier(&mut self, id: &BarrierId) -> Result<(), SimError> {
        self.registry.delete_barrier(id)?;
        self.log("barrier_deleted", id.to_string());
        Ok(())
    }

    /// Interactive person input; it overrides any script from now on.
    pub fn move_person(&mut self, p: PersonState) -> Result<(), SimError> {
        self.registry.update_person(&p)?;
        self.interactive_person = Some(p);
        Ok(())
    }

    // ---- stepping -------------------------------------------------------

    fn collect_jobs(&mut self) {
        let jobs = std::mem::take(&mut self.jobs);
        for job in jobs {
            let result = job
                .handle
                .join()
                .unwrap_or(Err(PlanError::Cancelled));
            match job.kind {
                JobKind::Stop => {
                    self.mission.finish_stop_replan(
                        &self.arm,
                        result,
                        &job.request,
                        &self.planner,
                        &self.monitor,
                    );
                }
                JobKind::Future(i) => {
                    let outcome = self.mission.finish_future_replan(
                        &self.arm,
                        i,
                        result,
                        job.request.snapshot.version,
                    );
                    if outcome == ReplanOutcome::Stale {
                        self.log("replan_future_stale", format!("sub-path {i}"));
                    }
                }
            }
        }
        self.flush_mission_events();
    }

    fn apply_scripts(&mut self) {
        let t = self.time();
        if self.interactive_person.is_none() {
            if let Some(xy) = self.spec.person_script.position_at(t) {
                let p = PersonState::at(xy.x, xy.y, 1.7);
                self.registry
                    .update_person(&p)
                    .expect("script positions are finite");
            }
        }
        while let Some(ev) = self.spec.barrier_script.get(self.next_barrier_event) {
            if ev.t > t + 1e-9 {
                break;
            }
            let ev = ev.clone();
            self.next_barrier_event += 1;
            let result = match &ev.action {
                BarrierAction::Spawn(spec) => self.spawn_obstacle(spec).map(|_| ()),
                BarrierAction::Delete(id) => self.delete_barrier(id),
                BarrierAction::Transform { id, pose, scale } => {
                    self.transform_barrier(id, *pose, *scale)
                }
            };
            if let Err(e) = result {
                self.log("barrier_script_error", e.to_string());
            }
        }
        self.registry.set_time(t);
    }

    fn advance_executor(&mut self) {
        if self.mission.phase != Phase::Executing {
            return;
        }
        let Some(current) = self.mission.current_subpath else {
            return;
        };
        let traj = &self.mission.subpaths[current].trajectory;
        self.traj_time += self.dt;
        if self.traj_time >= traj.duration() {
            self.robot_q = traj.end().clone();
            self.mission.complete_current(&self.robot_q);
            self.traj_time = 0.0;
        } else {
            self.robot_q = traj.sample(self.traj_time);
        }
        self.flush_mission_events();
    }

    fn audit(&mut self, snapshot: &WorldSnapshot) {
        let (entries, clearance) = self.auditor.audit(&self.arm, &self.robot_q, snapshot);
        self.metrics.min_clearance_over_run = self.metrics.min_clearance_over_run.min(clearance);
        for e in entries {
            self.metrics.ground_truth_collision_count += 1;
            self.log(
                "collision",
                format!("{} distance {:.6}", e.barrier, e.distance),
            );
        }
    }

    fn job_pending(&self, kind: JobKind) -> bool {
        self.jobs.iter().any(|j| j.kind == kind)
    }

    fn submit(&mut self, kind: JobKind, request: PlanRequest) {
        let job = spawn_job(&self.arm, kind, request, self.planner);
        self.jobs.push(job);
    }

    fn monitor_tick(&mut self, snapshot: &Arc<WorldSnapshot>) {
        self.metrics.monitor_ticks += 1;
        let actions = self
            .mission
            .monitor_tick(&self.arm, snapshot, self.traj_time, &self.monitor);
        if !actions.is_empty() {
            let detail = actions
                .iter()
                .map(|a| match a {
                    MonitorAction::StopAndReplanCurrent { subpath, .. } => {
                        format!("stop_and_replan_current({subpath})")
                    }
                    MonitorAction::ReplanFuture { subpath, .. } => {
                        format!("replan_future({subpath})")
                    }
                })
                .collect::<Vec<_>>()
                .join(", ");
            self.log("monitor", format!("v{} {detail}", snapshot.version));
        }
        for action in &actions {
            match *action {
                MonitorAction::StopAndReplanCurrent { version, .. } => {
                    self.mission
                        .begin_stop(self.robot_q.clone(), self.traj_time, version);
                }
                MonitorAction::ReplanFuture { subpath, version } => {
                    self.mission.mark_future_invalid(subpath, version);
                    // a newer invalidation supersedes any in-flight attempt
                    for job in &self.jobs {
                        if job.kind == JobKind::Future(subpath) {
                            job.cancel.cancel();
                        }
                    }
                }
            }
        }
        self.last_actions = actions;
        self.flush_mission_events();
        self.dispatch_replans(snapshot);
    }

    /// Submits planning for every sub-path waiting on one, unless a job for
    /// it is already in flight.
    fn dispatch_replans(&mut self, snapshot: &Arc<WorldSnapshot>) {
        self.dispatch_stop(snapshot);
        self.dispatch_futures(snapshot);
    }

    fn dispatch_stop(&mut self, snapshot: &Arc<WorldSnapshot>) {
        if self.mission.phase != Phase::Stopped || self.job_pending(JobKind::Stop) {
            return;
        }
        if let Some(req) = self.mission.stop_replan_request(
            &self.arm,
            snapshot,
            &self.planner,
            &self.monitor,
            self.seed,
        ) {
            let subpath = self.mission.pending_stop.as_ref().map_or(0, |s| s.subpath);
            self.log("replan_current_start", format!("sub-path {subpath}"));
            self.submit(JobKind::Stop, req);
        }
    }

    fn dispatch_futures(&mut self, snapshot: &Arc<WorldSnapshot>) {
        let current = self.mission.current_subpath.unwrap_or(0);
        let waiting: Vec<usize> = self
            .mission
            .subpaths
            .iter()
            .filter(|s| s.index > current && s.status == crate::mission::SubPathStatus::Replanning)
            .map(|s| s.index)
            .collect();
        for i in waiting {
            let live_in_flight = self
                .jobs
                .iter()
                .any(|j| j.kind == JobKind::Future(i) && !j.cancel.is_cancelled());
            if live_in_flight {
                continue;
            }
            self.future_attempts += 1;
            let req = self.mission.future_replan_request(
                i,
                snapshot,
                &self.planner,
                &self.monitor,
                self.seed,
                self.future_attempts,
            );
            self.submit(JobKind::Future(i), req);
        }
    }

    /// Advances the simulation by one fixed step.
    pub fn step(&mut self) {
        self.step_index += 1;
        self.collect_jobs();
        self.apply_scripts();
        self.advance_executor();
        let snapshot = self.registry.snapshot();
        self.audit(&snapshot);
        let period = 1.0 / self.monitor.tick_hz;
        let next_tick = (self.ticks_fired + 1) as f64 * period;
        if self.time() >= next_tick - 1e-9 {
            self.ticks_fired += 1;
            self.monitor_tick(&snapshot);
        }
        // a junction wait starts between ticks; its first attempt goes out at once
        let fresh_stop = self
            .mission
            .pending_stop
            .as_ref()
            .is_some_and(|s| s.failures == 0);
        if self.mission.phase == Phase::Stopped && fresh_stop && !self.job_pending(JobKind::Stop) {
            self.dispatch_stop(&snapshot);
        }
        self.metrics.sim_time_end = self.time();
        self.metrics.outcome = match self.mission.phase {
            Phase::Done => Outcome::Done,
            Phase::Failed => Outcome::Failed,
            _ => Outcome::Running,
        };
    }

    pub fn finished(&self) -> bool {
        matches!(self.mission.phase, Phase::Done | Phase::Failed)
    }

    /// Steps until the mission ends or `max_time` elapses (DNF).
    pub fn run_to_end(&mut self, max_time: f64) -> &MetricsLog {
        while !self.finished() && self.time() < max_time - 1e-9 {
            self.step();
        }
        if !self.finished() {
            self.metrics.outcome = Outcome::Dnf;
            self.log("dnf", format!("max_time {max_time:.3} s reached"));
        }
        for job in self.jobs.drain(..) {
            job.cancel.cancel();
            let _ = job.handle.join();
        }
        &self.metrics
    }

    pub fn into_metrics(mut self) -> MetricsLog {
        std::mem::replace(&mut self.metrics, MetricsLog::new("", 0))
    }
}

fn spawn_from_spec(registry: &mut BarrierRegistry, spec: &BarrierSpec) -> Result<BarrierId, BarrierError> {
    match &spec.id {
        Some(id) => registry.spawn_obstacle_with_id(id.clone(), spec.shape, spec.label.clone()),
        None => registry.spawn_obstacle(spec.shape, spec.label.clone()),
    }
}

/// Plans, executes and steps a scenario to completion.
pub fn run_headless(loaded: &LoadedScenario, seed: u64) -> Result<MetricsLog, SimError> {
    let mut sim = Simulation::with_seed(loaded, seed)?;
    if let Err(e) = sim.lock_path() {
        sim.metrics.outcome = Outcome::Failed;
        sim.log("lock_failed", e.to_string());
        return Ok(sim.into_metrics());
    }
    sim.execute()?;
    let max_time = loaded.spec.sim.max_time;
    sim.run_to_end(max_time);
    Ok(sim.into_metrics())
}

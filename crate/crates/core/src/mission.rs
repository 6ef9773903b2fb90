//! Waypoint programming workflow and the path-modifier monitor.
//!
//! Users collect end-effector waypoints, lock them (which plans one sub-path
//! per waypoint against a single world snapshot) and execute. While the
//! robot moves, [`MissionState::monitor_tick`] re-validates the remaining
//! part of the executing sub-path and every planned future sub-path and
//! decides between stopping to replan the current motion or replanning
//! future sub-paths without stopping. Applying those decisions is split
//! into request/finish halves so planning can happen off the scheduler.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmDescription, JointConfig};
use crate::barriers::WorldSnapshot;
use crate::collision::{self, capsules_min_clearance};
use crate::geometry;
use crate::planner::{
    plan_subpath, time_parameterize, Goal, JointPath, PlanError, PlanRequest, PlannerConfig,
    Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub tick_hz: f64,
    pub d_safe: f64,
    pub eps_q: f64,
    /// Failed stop-and-replan attempts tolerated before the mission fails.
    pub max_stop_retries: u32,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            tick_hz: 0.75,
            d_safe: collision::DEFAULT_D_SAFE,
            eps_q: collision::DEFAULT_EPS_Q,
            max_stop_retries: 30,
        }
    }
}

/// Axis-aligned box of admissible waypoint targets, m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            min: [-1.5, -1.5, 0.0],
            max: [1.5, 1.5, 1.5],
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub id: usize,
    #[serde(with = "geometry::vec3")]
    pub ee_target: Vector3<f64>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubPathStatus {
    Unplanned,
    Planned,
    Executing,
    Invalid,
    Replanning,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPath {
    pub index: usize,
    /// Junction config: home for sub-path 0, else the goal of sub-path i-1.
    pub start: JointConfig,
    pub goal: JointConfig,
    pub trajectory: Trajectory,
    pub status: SubPathStatus,
    pub planned_against_version: u64,
    /// Snapshot version of the latest tick that found this sub-path invalid.
    #[serde(skip)]
    pub invalidated_at_version: Option<u64>,
    /// Set after a stop-recovery replan: configs this close to the halted
    /// config only need half the margin.
    #[serde(skip)]
    pub recovery: Option<(JointConfig, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collecting,
    Locked,
    Executing,
    Stopped,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum MonitorAction {
    StopAndReplanCurrent { subpath: usize, version: u64 },
    ReplanFuture { subpath: usize, version: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingStop {
    pub subpath: usize,
    pub halted_q: JointConfig,
    pub t_halt: f64,
    pub failures: u32,
}

/// Evidence that a stop-and-replan resumed exactly from the halted config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopReplanRecord {
    pub subpath: usize,
    pub halted_q: JointConfig,
    pub new_start: JointConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub event: String,
    pub detail: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MissionError {
    #[error("command not allowed in phase {0:?}")]
    WrongPhase(Phase),
    #[error("target {0:?} outside the workspace")]
    OutOfWorkspace([f64; 3]),
    #[error("no waypoints to plan")]
    NoWaypoints,
    #[error("planning sub-path {index} failed: {cause}")]
    PlanningFailed { index: usize, cause: PlanError },
}

/// Outcome of feeding a future-replan result back.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplanOutcome {
    Applied,
    /// Planned against a snapshot older than the latest invalidation.
    Stale,
    /// The sub-path is no longer waiting for this result.
    Discarded,
    Failed(PlanError),
}

/// Deterministic per-request planner seed.
pub fn derive_seed(base: u64, subpath: usize, attempt: u64) -> u64 {
    let mut z = base
        ^ (subpath as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ attempt.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Validity of a knot sequence, honouring a recovery relaxation.
fn knots_valid(
    arm: &ArmDescription,
    knots: &[JointConfig],
    snapshot: &WorldSnapshot,
    cfg: &MonitorConfig,
    recovery: Option<&(JointConfig, f64)>,
) -> bool {
    match recovery {
        None => collision::path_valid(arm, knots, snapshot, cfg.d_safe, cfg.eps_q)
            .map(|r| r.valid)
            .unwrap_or(false),
        Some((start, radius)) => collision::for_each_sample(knots, cfg.eps_q, |q| {
            let threshold = if q.max_abs_diff(start) <= *radius {
                cfg.d_safe * 0.5
            } else {
                cfg.d_safe
            };
            match arm.link_capsules_world(q) {
                Ok(caps) => capsules_min_clearance(&caps, snapshot).0 >= threshold,
                Err(_) => false,
            }
        }),
    }
}

#[derive(Debug, Clone)]
pub struct MissionState {
    pub phase: Phase,
    pub current_subpath: Option<usize>,
    pub waypoints: Vec<Waypoint>,
    pub subpaths: Vec<SubPath>,
    pub home: JointConfig,
    pub workspace: Workspace,
    pub pending_stop: Option<PendingStop>,
    pub stop_records: Vec<StopReplanRecord>,
    events: Vec<MissionEvent>,
}

impl MissionState {
    pub fn new(home: JointConfig, workspace: Workspace) -> Self {
        Self {
            phase: Phase::Collecting,
            current_subpath: None,
            waypoints: Vec::new(),
            subpaths: Vec::new(),
            home,
            workspace,
            pending_stop: None,
            stop_records: Vec::new(),
            events: Vec::new(),
        }
    }

    fn emit(&mut self, event: &str, detail: String) {
        self.events.push(MissionEvent {
            event: event.to_owned(),
            detail,
        });
    }

    /// Drains events accumulated since the last call.
    pub fn take_events(&mut self) -> Vec<MissionEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn completed_count(&self) -> usize {
        self.subpaths
            .iter()
            .filter(|s| s.status == SubPathStatus::Completed)
            .count()
    }

    pub fn add_waypoint(
        &mut self,
        ee_target: Vector3<f64>,
        label: impl Into<String>,
    ) -> Result<Waypoint, MissionError> {
        if self.phase != Phase::Collecting {
            return Err(MissionError::WrongPhase(self.phase));
        }
        if !ee_target.iter().all(|v| v.is_finite()) || !self.workspace.contains(&ee_target) {
            return Err(MissionError::OutOfWorkspace(ee_target.into()));
        }
        let wp = Waypoint {
            id: self.waypoints.len(),
            ee_target,
            label: label.into(),
        };
        self.waypoints.push(wp.clone());
        self.emit("waypoint_added", format!("{} {}", wp.id, wp.label));
        Ok(wp)
    }

    /// Plans every sub-path in order against one snapshot.
    pub fn lock_path(
        &mut self,
        arm: &ArmDescription,
        snapshot: &Arc<WorldSnapshot>,
        planner: &PlannerConfig,
        monitor: &MonitorConfig,
        seed: u64,
    ) -> Result<(), MissionError> {
        if self.phase != Phase::Collecting {
            return Err(MissionError::WrongPhase(self.phase));
        }
        if self.waypoints.is_empty() {
            return Err(MissionError::NoWaypoints);
        }
        let mut planned = Vec::with_capacity(self.waypoints.len());
        let mut start = self.home.clone();
        for wp in self.waypoints.clone() {
            let req = PlanRequest {
                start: start.clone(),
                goal: Goal::EePosition(wp.ee_target),
                snapshot: snapshot.clone(),
                d_safe: monitor.d_safe,
                eps_q: monitor.eps_q,
                time_budget: planner.time_budget,
                rng_seed: derive_seed(seed, wp.id, 0),
                recovery: false,
            };
            let path = match plan_subpath(arm, &req, planner, None) {
                Ok(p) => p,
                Err(cause) => {
                    for s in &mut self.subpaths {
                        s.status = SubPathStatus::Unplanned;
                    }
                    self.emit("lock_failed", format!("sub-path {}: {cause}", wp.id));
                    return Err(MissionError::PlanningFailed {
                        index: wp.id,
                        cause,
                    });
                }
            };
            let goal = path.end().clone();
            planned.push(SubPath {
                index: wp.id,
                start: start.clone(),
                goal: goal.clone(),
                trajectory: time_parameterize(&path, arm),
                status: SubPathStatus::Planned,
                planned_against_version: snapshot.version,
                invalidated_at_version: None,
                recovery: None,
            });
            start = goal;
        }
        self.subpaths = planned;
        self.phase = Phase::Locked;
        self.emit("locked", format!("{} sub-paths", self.subpaths.len()));
        Ok(())
    }

    pub fn execute(&mut self) -> Result<(), MissionError> {
        if self.phase != Phase::Locked {
            return Err(MissionError::WrongPhase(self.phase));
        }
        self.phase = Phase::Executing;
        self.current_subpath = Some(0);
        self.subpaths[0].status = SubPathStatus::Executing;
        self.emit("executing", "sub-path 0".into());
        Ok(())
    }

    /// Pure decision step: which sub-paths does `snapshot` invalidate?
    ///
    /// `traj_time` is the executor's position on the current sub-path's
    /// trajectory; only the motion from there on is checked.
    pub fn monitor_tick(
        &self,
        arm: &ArmDescription,
        snapshot: &WorldSnapshot,
        traj_time: f64,
        cfg: &MonitorConfig,
    ) -> Vec<MonitorAction> {
        let mut actions = Vec::new();
        if !matches!(self.phase, Phase::Executing | Phase::Stopped) {
            return actions;
        }
        let Some(current) = self.current_subpath else {
            return actions;
        };
        let cur = &self.subpaths[current];
        if self.phase == Phase::Executing
            && self.pending_stop.is_none()
            && cur.status == SubPathStatus::Executing
        {
            let remainder = cur.trajectory.remainder_from(traj_time);
            if !knots_valid(arm, &remainder, snapshot, cfg, cur.recovery.as_ref()) {
                actions.push(MonitorAction::StopAndReplanCurrent {
                    subpath: current,
                    version: snapshot.version,
                });
            }
        }
        for sp in &self.subpaths[current + 1..] {
            if sp.status != SubPathStatus::Planned {
                continue;
            }
            if !knots_valid(arm, &sp.trajectory.configs(), snapshot, cfg, None) {
                actions.push(MonitorAction::ReplanFuture {
                    subpath: sp.index,
                    version: snapshot.version,
                });
            }
        }
        actions
    }

    /// Halts the robot at `robot_q` (trajectory time `t_halt`) and marks the
    /// current sub-path for replanning.
    pub fn begin_stop(&mut self, robot_q: JointConfig, t_halt: f64, version: u64) {
        let Some(current) = self.current_subpath else {
            return;
        };
        if self.pending_stop.is_some() {
            return;
        }
        let sp = &mut self.subpaths[current];
        sp.status = SubPathStatus::Replanning;
        sp.invalidated_at_version = Some(version);
        self.phase = Phase::Stopped;
        self.emit("stop", format!("sub-path {current} at t={t_halt:.6}"));
        self.pending_stop = Some(PendingStop {
            subpath: current,
            halted_q: robot_q,
            t_halt,
            failures: 0,
        });
    }

    /// Builds the replan request for the pending stop. The start may lie in
    /// the safety margin, in which case a recovery request is issued.
    pub fn stop_replan_request(
        &self,
        arm: &ArmDescription,
        snapshot: &Arc<WorldSnapshot>,
        planner: &PlannerConfig,
        monitor: &MonitorConfig,
        seed: u64,
    ) -> Option<PlanRequest> {
        let stop = self.pending_stop.as_ref()?;
        let sp = &self.subpaths[stop.subpath];
        let recovery = !collision::config_valid(arm, &stop.halted_q, snapshot, monitor.d_safe)
            .unwrap_or(false);
        Some(PlanRequest {
            start: stop.halted_q.clone(),
            goal: Goal::Config(sp.goal.clone()),
            snapshot: snapshot.clone(),
            d_safe: monitor.d_safe,
            eps_q: monitor.eps_q,
            time_budget: planner.time_budget,
            rng_seed: derive_seed(seed, stop.subpath, 1 + u64::from(stop.failures)),
            recovery,
        })
    }

    /// Applies a stop-and-replan result. Returns `true` when execution resumed.
    pub fn finish_stop_replan(
        &mut self,
        arm: &ArmDescription,
        result: Result<JointPath, PlanError>,
        request: &PlanRequest,
        planner: &PlannerConfig,
        monitor: &MonitorConfig,
    ) -> bool {
        let Some(stop) = self.pending_stop.as_mut() else {
            return false;
        };
        match result {
            Ok(path) => {
                let stop = self.pending_stop.take().expect("checked above");
                let tail = time_parameterize(&path, arm);
                let sp = &mut self.subpaths[stop.subpath];
                sp.trajectory = sp.trajectory.splice(stop.t_halt, &tail);
                sp.status = SubPathStatus::Executing;
                sp.planned_against_version = request.snapshot.version;
                sp.invalidated_at_version = None;
                sp.recovery = request
                    .recovery
                    .then(|| (stop.halted_q.clone(), planner.escape_radius));
                self.stop_records.push(StopReplanRecord {
                    subpath: stop.subpath,
                    halted_q: stop.halted_q.clone(),
                    new_start: path.start().clone(),
                });
                self.phase = Phase::Executing;
                self.emit(
                    "replan_current_success",
                    format!("sub-path {} ({} knots)", stop.subpath, path.knots.len()),
                );
                true
            }
            Err(cause) => {
                stop.failures += 1;
                let (subpath, failures) = (stop.subpath, stop.failures);
                self.emit(
                    "replan_current_fail",
                    format!("sub-path {subpath} attempt {failures}: {cause}"),
                );
                if failures >= monitor.max_stop_retries {
                    self.phase = Phase::Failed;
                    self.emit("failed", format!("sub-path {subpath} could not be replanned"));
                }
                false
            }
        }
    }

    /// Marks a future sub-path as needing a new trajectory.
    pub fn mark_future_invalid(&mut self, index: usize, version: u64) {
        let Some(current) = self.current_subpath else {
            return;
        };
        if index <= current {
            return;
        }
        let sp = &mut self.subpaths[index];
        if sp.status == SubPathStatus::Completed {
            return;
        }
        sp.status = SubPathStatus::Invalid;
        sp.invalidated_at_version = Some(version.max(sp.invalidated_at_version.unwrap_or(0)));
        sp.status = SubPathStatus::Replanning;
        self.emit("replan_future_start", format!("sub-path {index}"));
    }

    /// Request for a future sub-path between its fixed junction configs.
    pub fn future_replan_request(
        &self,
        index: usize,
        snapshot: &Arc<WorldSnapshot>,
        planner: &PlannerConfig,
        monitor: &MonitorConfig,
        seed: u64,
        attempt: u64,
    ) -> PlanRequest {
        let sp = &self.subpaths[index];
        PlanRequest {
            start: sp.start.clone(),
            goal: Goal::Config(sp.goal.clone()),
            snapshot: snapshot.clone(),
            d_safe: monitor.d_safe,
            eps_q: monitor.eps_q,
            time_budget: planner.time_budget,
            rng_seed: derive_seed(seed, index, 1000 + attempt),
            recovery: false,
        }
    }

    pub fn finish_future_replan(
        &mut self,
        arm: &ArmDescription,
        index: usize,
        result: Result<JointPath, PlanError>,
        planned_against_version: u64,
    ) -> ReplanOutcome {
        let current = self.current_subpath.unwrap_or(0);
        let sp = &mut self.subpaths[index];
        if index <= current || sp.status != SubPathStatus::Replanning {
            return ReplanOutcome::Discarded;
        }
        if sp
            .invalidated_at_version
            .is_some_and(|v| planned_against_version < v)
        {
            return ReplanOutcome::Stale;
        }
        match result {
            Ok(path) => {
                debug_assert_eq!(path.start(), &sp.start);
                sp.trajectory = time_parameterize(&path, arm);
                sp.status = SubPathStatus::Planned;
                sp.planned_against_version = planned_against_version;
                sp.invalidated_at_version = None;
                self.emit("replan_future_success", format!("sub-path {index}"));
                ReplanOutcome::Applied
            }
            Err(cause) => {
                self.emit("replan_future_fail", format!("sub-path {index}: {cause}"));
                ReplanOutcome::Failed(cause)
            }
        }
    }

    /// Called by the executor when the current trajectory has been fully
    /// traversed. Starts the next sub-path, waits at the junction if it is
    /// still being replanned, or finishes the mission.
    pub fn complete_current(&mut self, robot_q: &JointConfig) {
        let Some(current) = self.current_subpath else {
            return;
        };
        self.subpaths[current].status = SubPathStatus::Completed;
        self.emit("subpath_completed", format!("sub-path {current}"));
        let next = current + 1;
        if next == self.subpaths.len() {
            self.phase = Phase::Done;
            self.emit("completed", format!("{} sub-paths", self.subpaths.len()));
            return;
        }
        self.current_subpath = Some(next);
        match self.subpaths[next].status {
            SubPathStatus::Planned => {
                self.subpaths[next].status = SubPathStatus::Executing;
                self.emit("executing", format!("sub-path {next}"));
            }
            _ => {
                // Still replanning: wait at the junction and treat it as a stop.
                let version = self.subpaths[next].invalidated_at_version.unwrap_or(0);
                self.subpaths[next].trajectory = Trajectory {
                    knots: vec![crate::planner::TrajectoryKnot {
                        t: 0.0,
                        q: robot_q.clone(),
                    }],
                };
                self.begin_stop(robot_q.clone(), 0.0, version);
            }
        }
    }

    /// Synchronous stop-and-replan: halt, plan, and resume if planning succeeds.
    #[allow(clippy::too_many_arguments)]
    pub fn apply_stop_and_replan(
        &mut self,
        arm: &ArmDescription,
        robot_q: JointConfig,
        t_halt: f64,
        snapshot: &Arc<WorldSnapshot>,
        planner: &PlannerConfig,
        monitor: &MonitorConfig,
        seed: u64,
    ) -> bool {
        self.begin_stop(robot_q, t_halt, snapshot.version);
        let Some(req) = self.stop_replan_request(arm, snapshot, planner, monitor, seed) else {
            return false;
        };
        let result = plan_subpath(arm, &req, planner, None);
        self.finish_stop_replan(arm, result, &req, planner, monitor)
    }

    /// Synchronous future replan of sub-path `index`.
    pub fn apply_replan_future(
        &mut self,
        arm: &ArmDescription,
        index: usize,
        snapshot: &Arc<WorldSnapshot>,
        planner: &PlannerConfig,
        monitor: &MonitorConfig,
        seed: u64,
    ) -> ReplanOutcome {
        if self.subpaths[index].status == SubPathStatus::Planned {
            self.mark_future_invalid(index, snapshot.version);
        }
        let req = self.future_replan_request(index, snapshot, planner, monitor, seed, 0);
        let result = plan_subpath(arm, &req, planner, None);
        self.finish_future_replan(arm, index, result, snapshot.version)
    }

    /// Junction configs agree exactly for every consecutive pair, and every
    /// trajectory runs between its junctions. A sub-path held at its start
    /// while awaiting a replan is exempt from the end check.
    pub fn chain_continuous(&self) -> bool {
        let ends_ok = |s: &SubPath| {
            s.status == SubPathStatus::Replanning || s.trajectory.end() == &s.goal
        };
        self.subpaths.windows(2).all(|w| w[0].goal == w[1].start)
            && self
                .subpaths
                .iter()
                .all(|s| s.trajectory.start() == &s.start && ends_ok(s))
            && self
            .subpaths
            .first()
            .is_none_or(|s| s.start == self.home && s.trajectory.start() == &self.home)
    }
}

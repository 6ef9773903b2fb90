//! Single owner of the simulation; commands and snapshots go through here.

use serde_json::Value;

use vbarrier_core::barriers::BarrierError;
use vbarrier_core::mission::MissionError;
use vbarrier_core::scenario::{BarrierSpec, LoadedScenario};
use vbarrier_core::sim::SimError;
use vbarrier_core::{ArmDescription, PersonState, Simulation, SubPathStatus, Trajectory};

use crate::protocol::{
    Command, CommandMessage, ErrorCode, MetricsSnapshot, ResponseMessage, RobotView,
    StateMessage, SubPathView, WaypointMarker, MAX_SIM_SPEED, MIN_SIM_SPEED,
};

/// Joint-space arclength between polyline samples, rad.
pub const POLYLINE_STEP: f64 = 0.1;

pub struct Session {
    loaded: LoadedScenario,
    sim: Simulation,
    paused: bool,
    speed: f64,
}

fn sim_error_code(e: &SimError) -> ErrorCode {
    match e {
        SimError::Mission(m) => match m {
            MissionError::WrongPhase(_) => ErrorCode::WrongPhase,
            MissionError::OutOfWorkspace(_) => ErrorCode::OutOfWorkspace,
            MissionError::NoWaypoints => ErrorCode::NoWaypoints,
            MissionError::PlanningFailed { .. } => ErrorCode::PlanningFailed,
        },
        SimError::Barrier(b) => match b {
            BarrierError::UnknownBarrier(_) => ErrorCode::UnknownBarrier,
            BarrierError::PersonBarrierImmutable => ErrorCode::PersonBarrierImmutable,
            BarrierError::InvalidDimensions(_) => ErrorCode::InvalidDimensions,
            BarrierError::DuplicateId(_) => ErrorCode::DuplicateId,
            BarrierError::NonFinitePerson => ErrorCode::InvalidPerson,
        },
    }
}

/// End-effector polyline, sampled every [`POLYLINE_STEP`] of joint arclength.
pub fn ee_polyline(arm: &ArmDescription, traj: &Trajectory) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    let mut push = |q: &vbarrier_core::JointConfig| {
        if let Ok(p) = arm.ee_position(q) {
            out.push([p.x, p.y, p.z]);
        }
    };
    let Some(first) = traj.knots.first() else {
        return out;
    };
    push(&first.q);
    // distance along the current segment where the next sample falls
    let mut next = POLYLINE_STEP;
    for pair in traj.knots.windows(2) {
        let (a, b) = (&pair[0].q, &pair[1].q);
        let len = a.distance(b);
        while next < len {
            push(&a.lerp(b, next / len));
            next += POLYLINE_STEP;
        }
        next -= len;
    }
    if traj.knots.len() > 1 {
        push(&traj.knots[traj.knots.len() - 1].q);
    }
    out
}

impl Session {
    pub fn new(loaded: LoadedScenario) -> Result<Self, SimError> {
        let sim = Simulation::new(&loaded)?;
        Ok(Self {
            loaded,
            sim,
            paused: true,
            speed: 1.0,
        })
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn dt(&self) -> f64 {
        self.loaded.spec.sim.dt
    }

    /// Advances one fixed step unless paused or finished.
    pub fn step(&mut self) -> bool {
        if self.paused || self.sim.finished() {
            return false;
        }
        self.sim.step();
        true
    }

    pub fn handle_command(&mut self, msg: CommandMessage) -> ResponseMessage {
        let id = msg.request_id;
        match self.dispatch(msg.command) {
            Ok(()) => ResponseMessage::ok(id),
            Err((code, detail)) => ResponseMessage::error(id, code, detail),
        }
    }

    fn dispatch(&mut self, cmd: Command) -> Result<(), (ErrorCode, String)> {
        let sim_err = |e: SimError| (sim_error_code(&e), e.to_string());
        match cmd {
            Command::AddWaypoint { position, label } => {
                self.sim.add_waypoint(position, label).map_err(sim_err)?;
            }
            Command::LockPath => self.sim.lock_path().map_err(sim_err)?,
            Command::Execute => self.sim.execute().map_err(sim_err)?,
            Command::SpawnBarrier { id, shape, label } => {
                let spec = BarrierSpec { id, shape, label };
                self.sim.spawn_obstacle(&spec).map_err(sim_err)?;
            }
            Command::TransformBarrier { id, pose, scale } => {
                self.sim.transform_barrier(&id, pose, scale).map_err(sim_err)?
            }
            Command::DeleteBarrier { id } => self.sim.delete_barrier(&id).map_err(sim_err)?,
            Command::MovePerson { position, yaw } => {
                let p = PersonState {
                    headset_position: position,
                    headset_yaw: yaw,
                };
                self.sim.move_person(p).map_err(sim_err)?;
            }
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reset => {
                self.sim = Simulation::new(&self.loaded).map_err(|e| {
                    (ErrorCode::Internal, format!("reset failed: {e}"))
                })?;
                self.paused = true;
            }
            Command::SetSimSpeed { speed } => {
                if !(speed.is_finite() && (MIN_SIM_SPEED..=MAX_SIM_SPEED).contains(&speed)) {
                    return Err((
                        ErrorCode::InvalidSpeed,
                        format!("speed {speed} outside [{MIN_SIM_SPEED}, {MAX_SIM_SPEED}]"),
                    ));
                }
                self.speed = speed;
            }
        }
        Ok(())
    }

    pub fn state_message(&self) -> StateMessage {
        let sim = &self.sim;
        let arm = sim.arm();
        let mission = sim.mission();
        // one snapshot so the barrier list and its version agree
        let snapshot = sim.snapshot();
        let q = sim.robot_q().clone();
        let ee = arm
            .forward_kinematics(&q)
            .map(|fk| fk.ee)
            .unwrap_or_default();
        let waypoints = mission
            .waypoints
            .iter()
            .map(|w| WaypointMarker {
                id: w.id,
                position: w.ee_target.into(),
                label: w.label.clone(),
            })
            .collect();
        let subpaths = mission
            .subpaths
            .iter()
            .map(|sp| SubPathView {
                index: sp.index,
                status: sp.status,
                planned_against_version: sp.planned_against_version,
                waypoint: mission.waypoints.get(sp.index).map_or(sp.index, |w| w.id),
                polyline: match sp.status {
                    SubPathStatus::Unplanned => Vec::new(),
                    _ => ee_polyline(arm, &sp.trajectory),
                },
            })
            .collect();
        let m = sim.metrics();
        StateMessage {
            sim_time: sim.time(),
            step: sim.step_index(),
            paused: self.paused,
            sim_speed: self.speed,
            phase: mission.phase,
            current_subpath: mission.current_subpath,
            robot: RobotView { q, ee },
            barriers_version: snapshot.version,
            barriers: snapshot.barriers.clone(),
            waypoints,
            subpaths,
            metrics: MetricsSnapshot {
                outcome: m.outcome,
                completion_time: m.completion_time,
                stop_count: m.stop_count,
                replan_count_current: m.replan_count_current,
                replan_count_future: m.replan_count_future,
                min_clearance_over_run: m.min_clearance_over_run,
                ground_truth_collision_count: m.ground_truth_collision_count,
                monitor_ticks: m.monitor_ticks,
            },
        }
    }
}

/// Convenience for tests and scripted clients.
pub fn request(id: &str, command: Command) -> CommandMessage {
    CommandMessage::new(Value::String(id.to_owned()), command)
}

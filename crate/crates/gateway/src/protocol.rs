//! Wire types for the `/ws` endpoint.
//!
//! Every frame is one UTF-8 JSON object with a `type` field. Clients send
//! commands; the server sends `state` broadcasts and one `response` per
//! command. All numbers are SI (m, s, rad).

use nalgebra::Vector3;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use vbarrier_core::geometry::{self, Pose};
use vbarrier_core::{
    Barrier, BarrierId, BarrierShape, JointConfig, Phase, SubPathStatus,
};
use vbarrier_core::sim::Outcome;

pub const MIN_SIM_SPEED: f64 = 0.1;
pub const MAX_SIM_SPEED: f64 = 10.0;

fn unit_scale() -> Vector3<f64> {
    Vector3::new(1.0, 1.0, 1.0)
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Command payloads, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    AddWaypoint {
        #[serde(with = "geometry::vec3")]
        position: Vector3<f64>,
        #[serde(default)]
        label: String,
    },
    LockPath,
    Execute,
    SpawnBarrier {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<BarrierId>,
        shape: BarrierShape,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    TransformBarrier {
        id: BarrierId,
        pose: Pose,
        /// Multiplicative, relative to the current size.
        #[serde(with = "geometry::vec3", default = "unit_scale")]
        scale: Vector3<f64>,
    },
    DeleteBarrier {
        id: BarrierId,
    },
    MovePerson {
        /// Headset position; only x and y move the person barrier.
        #[serde(with = "geometry::vec3")]
        position: Vector3<f64>,
        #[serde(default, skip_serializing_if = "is_zero")]
        yaw: f64,
    },
    Pause,
    Resume,
    Reset,
    SetSimSpeed {
        speed: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::AddWaypoint { .. } => "add_waypoint",
            Command::LockPath => "lock_path",
            Command::Execute => "execute",
            Command::SpawnBarrier { .. } => "spawn_barrier",
            Command::TransformBarrier { .. } => "transform_barrier",
            Command::DeleteBarrier { .. } => "delete_barrier",
            Command::MovePerson { .. } => "move_person",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Reset => "reset",
            Command::SetSimSpeed { .. } => "set_sim_speed",
        }
    }
}

/// A command plus the client's correlation token.
///
/// `request_id` may be any JSON value and is echoed verbatim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandMessage {
    #[serde(skip_serializing_if = "Value::is_null")]
    pub request_id: Value,
    #[serde(flatten)]
    pub command: Command,
}

impl CommandMessage {
    pub fn new(request_id: impl Into<Value>, command: Command) -> Self {
        Self {
            request_id: request_id.into(),
            command,
        }
    }

    /// Parses one frame. On failure the error response still carries the
    /// request id when one could be read.
    pub fn parse(text: &str) -> Result<Self, ResponseMessage> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            ResponseMessage::error(Value::Null, ErrorCode::Schema, format!("invalid JSON: {e}"))
        })?;
        Self::from_value(value)
    }

    pub fn from_value(mut value: Value) -> Result<Self, ResponseMessage> {
        let Some(obj) = value.as_object_mut() else {
            return Err(ResponseMessage::error(
                Value::Null,
                ErrorCode::Schema,
                "message must be a JSON object",
            ));
        };
        let request_id = obj.remove("request_id").unwrap_or(Value::Null);
        match Command::deserialize(value) {
            Ok(command) => Ok(Self {
                request_id,
                command,
            }),
            Err(e) => Err(ResponseMessage::error(request_id, ErrorCode::Schema, e.to_string())),
        }
    }
}

impl<'de> Deserialize<'de> for CommandMessage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(d)?;
        Self::from_value(value).map_err(|r| {
            let detail = r.error.map(|e| e.detail).unwrap_or_default();
            serde::de::Error::custom(detail)
        })
    }
}

/// Stable error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Schema,
    WrongPhase,
    OutOfWorkspace,
    NoWaypoints,
    PlanningFailed,
    UnknownBarrier,
    PersonBarrierImmutable,
    InvalidDimensions,
    DuplicateId,
    InvalidPerson,
    InvalidSpeed,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMessage {
    #[serde(default)]
    pub request_id: Value,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl ResponseMessage {
    pub fn ok(request_id: Value) -> Self {
        Self {
            request_id,
            ok: true,
            error: None,
        }
    }

    pub fn error(request_id: Value, code: ErrorCode, detail: impl Into<String>) -> Self {
        Self {
            request_id,
            ok: false,
            error: Some(ErrorBody {
                code,
                detail: detail.into(),
            }),
        }
    }

    pub fn code(&self) -> Option<ErrorCode> {
        self.error.as_ref().map(|e| e.code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub q: JointConfig,
    pub ee: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointMarker {
    pub id: usize,
    pub position: [f64; 3],
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPathView {
    pub index: usize,
    pub status: SubPathStatus,
    pub planned_against_version: u64,
    /// Id of the waypoint this sub-path ends at.
    pub waypoint: usize,
    /// End-effector positions along the trajectory.
    pub polyline: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub outcome: Outcome,
    pub completion_time: Option<f64>,
    pub stop_count: u32,
    pub replan_count_current: u32,
    pub replan_count_future: u32,
    pub min_clearance_over_run: f64,
    pub ground_truth_collision_count: u32,
    pub monitor_ticks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub sim_time: f64,
    pub step: u64,
    pub paused: bool,
    pub sim_speed: f64,
    pub phase: Phase,
    pub current_subpath: Option<usize>,
    pub robot: RobotView,
    pub barriers_version: u64,
    pub barriers: Vec<Barrier>,
    pub waypoints: Vec<WaypointMarker>,
    pub subpaths: Vec<SubPathView>,
    pub metrics: MetricsSnapshot,
}

/// Everything the server sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateMessage),
    Response(ResponseMessage),
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

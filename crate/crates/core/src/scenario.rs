//! Declarative experiment input.
//!
//! Scenario files are JSON. Relative `arm_file` paths resolve against the
//! scenario file's directory. Semantic problems are reported as diagnostics
//! carrying a JSON pointer and, when the source text is available, the
//! 1-based line of the offending value.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmDescription, ArmError, JointConfig};
use crate::barriers::{BarrierId, PersonBarrierConfig, MAX_DIMENSION, MIN_DIMENSION};
use crate::collision::BarrierShape;
use crate::geometry::{self, Pose};
use crate::mission::{MonitorConfig, Workspace};
use crate::planner::PlannerConfig;

/// Scripted person speeds above this trigger a warning, m/s.
pub const PERSON_SPEED_CAP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSpec {
    #[serde(with = "geometry::vec3")]
    pub position: Vector3<f64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<BarrierId>,
    pub shape: BarrierShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonKey {
    pub t: f64,
    #[serde(with = "geometry::vec2")]
    pub xy: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PersonScript {
    Keys(Vec<PersonKey>),
    /// Must be the string `"interactive"`.
    Mode(String),
}

impl Default for PersonScript {
    fn default() -> Self {
        PersonScript::Keys(Vec::new())
    }
}

impl PersonScript {
    pub fn is_interactive(&self) -> bool {
        matches!(self, PersonScript::Mode(m) if m == "interactive")
    }

    pub fn keys(&self) -> &[PersonKey] {
        match self {
            PersonScript::Keys(k) => k,
            PersonScript::Mode(_) => &[],
        }
    }

    /// Piecewise-linear person position, held constant outside the script.
    pub fn position_at(&self, t: f64) -> Option<Vector2<f64>> {
        let keys = self.keys();
        let first = keys.first()?;
        if t <= first.t {
            return Some(first.xy);
        }
        let last = keys[keys.len() - 1];
        if t >= last.t {
            return Some(last.xy);
        }
        let hi = keys.partition_point(|k| k.t <= t);
        let (a, b) = (keys[hi - 1], keys[hi]);
        Some(a.xy + (b.xy - a.xy) * ((t - a.t) / (b.t - a.t)))
    }

    /// Fastest segment speed, m/s.
    pub fn max_speed(&self) -> f64 {
        self.keys()
            .windows(2)
            .filter(|w| w[1].t > w[0].t)
            .map(|w| (w[1].xy - w[0].xy).norm() / (w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BarrierAction {
    Spawn(BarrierSpec),
    Delete(BarrierId),
    Transform {
        id: BarrierId,
        pose: Pose,
        #[serde(with = "geometry::vec3")]
        scale: Vector3<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierEvent {
    pub t: f64,
    #[serde(flatten)]
    pub action: BarrierAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub dt: f64,
    pub max_time: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt: 0.02,
            max_time: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub planner: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub arm_file: PathBuf,
    /// Start configuration; all zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<JointConfig>,
    #[serde(default)]
    pub workspace: Workspace,
    #[serde(default)]
    pub waypoints: Vec<WaypointSpec>,
    #[serde(default)]
    pub initial_barriers: Vec<BarrierSpec>,
    #[serde(default)]
    pub person: PersonBarrierConfig,
    /// Person position when the script is empty or interactive.
    #[serde(default = "default_person_start", with = "geometry::vec2")]
    pub person_start: Vector2<f64>,
    #[serde(default)]
    pub person_script: PersonScript,
    #[serde(default)]
    pub barrier_script: Vec<BarrierEvent>,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default = "default_planner")]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default)]
    pub seeds: Seeds,
}

fn default_person_start() -> Vector2<f64> {
    Vector2::new(10.0, 0.0)
}

/// Scenario planners are iteration-bounded so runs replay identically.
fn default_planner() -> PlannerConfig {
    PlannerConfig {
        enforce_wall_clock: false,
        floor_z: Some(0.0),
        ..PlannerConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    /// JSON pointer of the offending value, e.g. `/person_script/3/t`.
    pub pointer: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.pointer, self.message),
            None => write!(f, "{}: {}", self.pointer, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("scenario invalid:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("arm file missing: {0}")]
    ArmFileMissing(String),
    #[error(transparent)]
    Arm(#[from] ArmError),
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// A parsed, validated scenario with its arm.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub spec: ScenarioSpec,
    pub arm: ArmDescription,
    pub warnings: Vec<String>,
}

impl ScenarioSpec {
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Semantic checks that do not need the arm. Returns the diagnostics;
    /// `source` is used to attach line numbers.
    pub fn diagnostics(&self, source: Option<&str>) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut push = |pointer: String, message: String| {
            let line = source.and_then(|s| locate_line(s, &pointer));
            out.push(Diagnostic {
                pointer,
                line,
                message,
            });
        };
        if !(self.sim.dt.is_finite() && self.sim.dt > 0.0) {
            push("/sim/dt".into(), "dt must be positive".into());
        }
        if !(self.sim.max_time.is_finite() && self.sim.max_time > 0.0) {
            push("/sim/max_time".into(), "max_time must be positive".into());
        }
        if !(self.monitor.tick_hz.is_finite() && self.monitor.tick_hz > 0.0) {
            push("/monitor/tick_hz".into(), "tick_hz must be positive".into());
        }
        if !(self.monitor.eps_q.is_finite() && self.monitor.eps_q > 0.0) {
            push("/monitor/eps_q".into(), "eps_q must be positive".into());
        }
        if !(self.monitor.d_safe.is_finite() && self.monitor.d_safe >= 0.0) {
            push("/monitor/d_safe".into(), "d_safe must be non-negative".into());
        }
        if !(self.planner.step > 0.0 && self.planner.max_iters > 0) {
            push("/planner".into(), "step and max_iters must be positive".into());
        }
        if !(self.person.radius > 0.0 && self.person.height > 0.0) {
            push("/person".into(), "person radius and height must be positive".into());
        }
        match &self.person_script {
            PersonScript::Mode(m) if m != "interactive" => push(
                "/person_script".into(),
                format!("expected a list of keys or \"interactive\", got {m:?}"),
            ),
            PersonScript::Mode(_) => {}
            PersonScript::Keys(keys) => {
                for (i, k) in keys.iter().enumerate() {
                    if !(k.t.is_finite() && k.t >= 0.0) {
                        push(format!("/person_script/{i}/t"), "time must be >= 0".into());
                    }
                    if i > 0 && k.t <= keys[i - 1].t {
                        push(
                            format!("/person_script/{i}/t"),
                            format!(
                                "script times must strictly increase ({} after {})",
                                k.t,
                                keys[i - 1].t
                            ),
                        );
                    }
                }
            }
        }
        for (i, ev) in self.barrier_script.iter().enumerate() {
            if !(ev.t.is_finite() && ev.t >= 0.0) {
                push(format!("/barrier_script/{i}/t"), "time must be >= 0".into());
            }
            if i > 0 && ev.t < self.barrier_script[i - 1].t {
                push(
                    format!("/barrier_script/{i}/t"),
                    "barrier events must be in time order".into(),
                );
            }
            if let BarrierAction::Spawn(spec) = &ev.action {
                if let Some(msg) = obstacle_shape_problem(&spec.shape) {
                    push(format!("/barrier_script/{i}/spawn/shape"), msg);
                }
            }
        }
        for (i, b) in self.initial_barriers.iter().enumerate() {
            if let Some(msg) = obstacle_shape_problem(&b.shape) {
                push(format!("/initial_barriers/{i}/shape"), msg);
            }
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if !self.workspace.contains(&w.position) {
                push(
                    format!("/waypoints/{i}/position"),
                    "waypoint outside the workspace".into(),
                );
            }
        }
        out
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let speed = self.person_script.max_speed();
        if speed > PERSON_SPEED_CAP {
            w.push(format!(
                "person script reaches {speed:.3} m/s, above the {PERSON_SPEED_CAP} m/s the monitor cadence is sized for"
            ));
        }
        w
    }

    pub fn home_config(&self, arm: &ArmDescription) -> JointConfig {
        self.home.clone().unwrap_or_else(|| JointConfig::zeros(arm.dof()))
    }
}

fn obstacle_shape_problem(shape: &BarrierShape) -> Option<String> {
    let bad = |v: f64| !(v.is_finite() && (MIN_DIMENSION..=MAX_DIMENSION).contains(&v));
    match shape {
        BarrierShape::Sphere(s) if bad(s.radius) => Some(format!(
            "radius {} outside [{MIN_DIMENSION}, {MAX_DIMENSION}]",
            s.radius
        )),
        BarrierShape::OrientedBox(b) if b.half_extents.iter().any(|v| bad(*v)) => Some(format!(
            "half_extents outside [{MIN_DIMENSION}, {MAX_DIMENSION}]"
        )),
        BarrierShape::VerticalCylinder(_) => Some("obstacles must be boxes or spheres".into()),
        _ => None,
    }
}

/// Reads, parses and validates a scenario file and its arm.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    load_scenario_str(&text, base)
}

pub fn load_scenario_str(text: &str, base_dir: &Path) -> Result<LoadedScenario, ScenarioError> {
    let mut spec = ScenarioSpec::from_json_str(text)?;
    let mut diags = spec.diagnostics(Some(text));
    if !diags.is_empty() {
        return Err(ScenarioError::Invalid(diags));
    }
    let arm_path = if spec.arm_file.is_absolute() {
        spec.arm_file.clone()
    } else {
        base_dir.join(&spec.arm_file)
    };
    if !arm_path.is_file() {
        return Err(ScenarioError::ArmFileMissing(arm_path.display().to_string()));
    }
    let arm = ArmDescription::load(&arm_path)?;
    if let Some(home) = &spec.home {
        if home.len() != arm.dof() || !arm.within_limits(home) {
            diags.push(Diagnostic {
                pointer: "/home".into(),
                line: locate_line(text, "/home"),
                message: format!("home must have {} joints within limits", arm.dof()),
            });
            return Err(ScenarioError::Invalid(diags));
        }
    }
    spec.arm_file = arm_path;
    let warnings = spec.warnings();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LoadedScenario {
        spec,
        arm,
        warnings,
    })
}

/// 1-based line on which the value at JSON `pointer` starts.
pub fn locate_line(text: &str, pointer: &str) -> Option<usize> {
    let segments: Vec<String> = pointer
        .split('/')
        .skip(1)
        .map(|s| s.replace("~1", "/").replace("~0", "~"))
        .collect();
    let mut scanner = Scanner {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let offset = scanner.find(&segments)?;
    Some(text[..offset].bytes().filter(|b| *b == b'\n').count() + 1)
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Scanner<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Finds the start offset of the value addressed by `path`.
    fn find(&mut self, path: &[String]) -> Option<usize> {
        self.skip_ws();
        let Some((head, rest)) = path.split_first() else {
            return Some(self.pos);
        };
        match self.peek()? {
            b'{' => {
                self.pos += 1;
                loop {
                    self.skip_ws();
                    if self.peek()? == b'}' {
                        return None;
                    }
                    let key = self.string()?;
                    self.skip_ws();
                    if self.peek()? != b':' {
                        return None;
                    }
                    self.pos += 1;
                    if key == *head {
                        return self.find(rest);
                    }
                    self.skip_value()?;
                    self.skip_ws();
                    if self.peek()? == b',' {
                        self.pos += 1;
                    }
                }
            }
            b'[' => {
                let want: usize = head.parse().ok()?;
                self.pos += 1;
                let mut idx = 0;
                loop {
                    self.skip_ws();
                    if self.peek()? == b']' {
                        return None;
                    }
                    if idx == want {
                        return self.find(rest);
                    }
                    self.skip_value()?;
                    idx += 1;
                    self.skip_ws();
                    if self.peek()? == b',' {
                        self.pos += 1;
                    }
                }
            }
            _ => None,
        }
    }

    fn string(&mut self) -> Option<String> {
        if self.peek()? != b'"' {
            return None;
        }
        self.pos += 1;
        let start = self.pos;
        while self.peek()? != b'"' {
            if self.peek()? == b'\\' {
                self.pos += 1;
            }
            self.pos += 1;
        }
        let raw = std::str::from_utf8(&self.bytes[start..self.pos]).ok()?;
        self.pos += 1;
        Some(raw.to_owned())
    }

    fn skip_value(&mut self) -> Option<()> {
        self.skip_ws();
        match self.peek()? {
            b'"' => {
                self.string()?;
            }
            b'{' | b'[' => {
                let mut depth = 0usize;
                loop {
                    match self.peek()? {
                        b'"' => {
                            self.string()?;
                            continue;
                        }
                        b'{' | b'[' => depth += 1,
                        b'}' | b']' => {
                            depth -= 1;
                            if depth == 0 {
                                self.pos += 1;
                                return Some(());
                            }
                        }
                        _ => {}
                    }
                    self.pos += 1;
                }
            }
            _ => {
                while let Some(b) = self.peek() {
                    if b == b',' || b == b'}' || b == b']' || b.is_ascii_whitespace() {
                        break;
                    }
                    self.pos += 1;
                }
            }
        }
        Some(())
    }
}

//! Joint-space sub-path planning.
//!
//! Sub-paths are found with RRT-Connect, shortened by random shortcutting,
//! and timed by the slowest joint of every segment. Edge checks run at a
//! finer resolution than the requested `eps_q` and skip samples whose
//! neighbourhood is already certified by a Lipschitz bound on clearance.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmDescription, ArmError, IkOptions, JointConfig};
use crate::barriers::WorldSnapshot;
use crate::cancel::CancelToken;
use crate::collision::{self, capsules_min_clearance, NO_BARRIER_CLEARANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no IK solution reaches the goal")]
    GoalUnreachable,
    #[error("every goal configuration violates the safety margin")]
    GoalInCollision,
    #[error("start configuration is in collision")]
    StartInCollision,
    #[error("planning budget exhausted")]
    PlanningTimeout,
    #[error("planning cancelled")]
    Cancelled,
    #[error(transparent)]
    Arm(#[from] ArmError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Goal {
    Config(JointConfig),
    /// End-effector position target, m.
    EePosition(Vector3<f64>),
}

#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub start: JointConfig,
    pub goal: Goal,
    pub snapshot: Arc<WorldSnapshot>,
    pub d_safe: f64,
    pub eps_q: f64,
    /// Wall-clock budget, s. Only enforced when
    /// [`PlannerConfig::enforce_wall_clock`] is set.
    pub time_budget: f64,
    pub rng_seed: u64,
    /// Stop-recovery request: the start may sit inside the `d_safe` margin.
    /// Configurations within `escape_radius` of the start only need `d_safe / 2`.
    pub recovery: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// RRT extension step, rad (L-infinity).
    pub step: f64,
    pub max_iters: usize,
    /// Default per-sub-path budget, s.
    pub time_budget: f64,
    /// When false the wall-clock budget is ignored and only `max_iters`
    /// bounds the search, which keeps runs reproducible on any machine.
    pub enforce_wall_clock: bool,
    pub shortcut_attempts: usize,
    /// Edges are checked at `eps_q / check_subdivision`.
    pub check_subdivision: u32,
    /// Lowest allowed capsule point for every link but the base, m.
    pub floor_z: Option<f64>,
    /// Joint-space radius around a recovery start where the relaxed margin applies.
    pub escape_radius: f64,
    pub ik_restarts: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            step: 0.2,
            max_iters: 20_000,
            time_budget: 0.5,
            enforce_wall_clock: true,
            shortcut_attempts: 100,
            check_subdivision: 16,
            floor_z: None,
            escape_radius: 0.4,
            ik_restarts: 10,
        }
    }
}

/// Ordered joint-space waypoints of a planned motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointPath {
    pub knots: Vec<JointConfig>,
}

impl JointPath {
    pub fn new(knots: Vec<JointConfig>) -> Self {
        Self { knots }
    }

    pub fn arclength(&self) -> f64 {
        self.knots.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub fn start(&self) -> &JointConfig {
        &self.knots[0]
    }

    pub fn end(&self) -> &JointConfig {
        &self.knots[self.knots.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryKnot {
    pub t: f64,
    pub q: JointConfig,
}

/// Time-stamped knots, linearly interpolated in joint space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    pub knots: Vec<TrajectoryKnot>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.t)
    }

    pub fn start(&self) -> &JointConfig {
        &self.knots[0].q
    }

    pub fn end(&self) -> &JointConfig {
        &self.knots[self.knots.len() - 1].q
    }

    pub fn configs(&self) -> Vec<JointConfig> {
        self.knots.iter().map(|k| k.q.clone()).collect()
    }

    /// Configuration at time `t`, clamped to the trajectory's time range.
    /// Knot times reproduce knots exactly.
    pub fn sample(&self, t: f64) -> JointConfig {
        let first = &self.knots[0];
        if t <= first.t {
            return first.q.clone();
        }
        let last = &self.knots[self.knots.len() - 1];
        if t >= last.t {
            return last.q.clone();
        }
        // first index with knot.t > t; guaranteed in 1..len
        let hi = self.knots.partition_point(|k| k.t <= t);
        let (a, b) = (&self.knots[hi - 1], &self.knots[hi]);
        a.q.lerp(&b.q, (t - a.t) / (b.t - a.t))
    }

    /// Remaining geometry from time `t`: the sample at `t` followed by all
    /// later knots.
    pub fn remainder_from(&self, t: f64) -> Vec<JointConfig> {
        let mut out = vec![self.sample(t)];
        out.extend(self.knots.iter().filter(|k| k.t > t).map(|k| k.q.clone()));
        out
    }

    /// Keeps the motion up to `t_halt` and continues with `tail`, whose first
    /// knot must be the configuration at `t_halt`.
    pub fn splice(&self, t_halt: f64, tail: &Trajectory) -> Trajectory {
        let mut knots: Vec<TrajectoryKnot> =
            self.knots.iter().filter(|k| k.t < t_halt).cloned().collect();
        let t0 = if knots.is_empty() { 0.0 } else { t_halt };
        knots.push(TrajectoryKnot {
            t: t0,
            q: tail.knots[0].q.clone(),
        });
        knots.extend(tail.knots.iter().skip(1).map(|k| TrajectoryKnot {
            t: t0 + k.t,
            q: k.q.clone(),
        }));
        Trajectory { knots }
    }
}

/// Segment duration = slowest joint's |dq| / vel_max, at least 1 ms.
pub fn time_parameterize(path: &JointPath, arm: &ArmDescription) -> Trajectory {
    let mut t = 0.0;
    let mut knots = Vec::with_capacity(path.knots.len());
    knots.push(TrajectoryKnot {
        t,
        q: path.knots[0].clone(),
    });
    for w in path.knots.windows(2) {
        let dt = w[0]
            .0
            .iter()
            .zip(&w[1].0)
            .zip(&arm.joints)
            .map(|((a, b), j)| (b - a).abs() / j.vel_max)
            .fold(0.0, f64::max)
            .max(1e-3);
        t += dt;
        knots.push(TrajectoryKnot {
            t,
            q: w[1].clone(),
        });
    }
    Trajectory { knots }
}

/// Upper bound on how fast any capsule point can move per radian of
/// L-infinity joint motion, m/rad.
pub fn clearance_lipschitz(arm: &ArmDescription) -> f64 {
    (0..arm.dof())
        .map(|j| {
            // every downstream joint lies within the summed offsets of joint j
            let offsets: f64 = arm.joints[j + 1..]
                .iter()
                .map(|k| k.origin.position.norm())
                .sum();
            let capsule_extent = arm.link_capsules[j..]
                .iter()
                .flatten()
                .map(|c| c.p0.norm().max(c.p1.norm()))
                .fold(0.0, f64::max);
            offsets + capsule_extent
        })
        .sum()
}

/// Validity predicate shared by the tree search and shortcutting.
pub(crate) struct Checker<'a> {
    arm: &'a ArmDescription,
    snapshot: &'a WorldSnapshot,
    d_safe: f64,
    fine_eps: f64,
    floor_z: Option<f64>,
    relaxed: Option<(JointConfig, f64)>,
    lipschitz: f64,
}

impl<'a> Checker<'a> {
    pub(crate) fn new(
        arm: &'a ArmDescription,
        snapshot: &'a WorldSnapshot,
        d_safe: f64,
        eps_q: f64,
        cfg: &PlannerConfig,
    ) -> Self {
        Self {
            arm,
            snapshot,
            d_safe,
            fine_eps: eps_q / f64::from(cfg.check_subdivision.max(1)),
            floor_z: cfg.floor_z,
            relaxed: None,
            lipschitz: clearance_lipschitz(arm),
        }
    }

    fn with_recovery(mut self, start: &JointConfig, radius: f64) -> Self {
        self.relaxed = Some((start.clone(), radius));
        self
    }

    fn threshold(&self, q: &JointConfig) -> f64 {
        match &self.relaxed {
            Some((start, radius)) if q.max_abs_diff(start) <= *radius => self.d_safe * 0.5,
            _ => self.d_safe,
        }
    }

    /// Signed slack against all constraints; negative means invalid.
    /// The second value is slack against the strict threshold, used for skipping.
    fn slack(&self, q: &JointConfig) -> (f64, f64) {
        let caps = self
            .arm
            .link_capsules_world_indexed(q)
            .expect("planner configs match the arm");
        let shapes: Vec<_> = caps.iter().map(|(_, c)| *c).collect();
        let (clearance, _) = capsules_min_clearance(&shapes, self.snapshot);
        let floor = match self.floor_z {
            Some(fz) => caps
                .iter()
                .filter(|(link, _)| *link > 0)
                .map(|(_, c)| c.p0.z.min(c.p1.z) - c.radius - fz)
                .fold(f64::INFINITY, f64::min),
            None => f64::INFINITY,
        };
        let barrier_slack = if clearance >= NO_BARRIER_CLEARANCE {
            f64::INFINITY
        } else {
            clearance
        };
        (
            (barrier_slack - self.threshold(q)).min(floor),
            (barrier_slack - self.d_safe).min(floor),
        )
    }

    pub(crate) fn config_ok(&self, q: &JointConfig) -> bool {
        self.slack(q).0 >= 0.0
    }

    /// Checks the straight joint-space segment `a -> b` at the fine
    /// resolution. Samples are the same dyadic subdivision `path_valid` uses.
    pub(crate) fn edge_ok(&self, a: &JointConfig, b: &JointConfig) -> bool {
        let span = a.max_abs_diff(b);
        let mut n: u64 = 1;
        while (span / n as f64) > self.fine_eps && n < (1 << 24) {
            n *= 2;
        }
        let h = span / n as f64;
        let mut i: u64 = 0;
        while i <= n {
            let q = if i == n {
                b.clone()
            } else {
                a.lerp(b, i as f64 / n as f64)
            };
            let (slack, strict) = self.slack(&q);
            if slack < 0.0 {
                return false;
            }
            if i == n {
                break;
            }
            let skip = if h > 0.0 && strict > 0.0 {
                ((strict / self.lipschitz) / h).floor() as u64
            } else {
                0
            };
            i = (i + skip.max(1)).min(n);
        }
        true
    }
}

struct Tree {
    nodes: Vec<JointConfig>,
    parent: Vec<usize>,
}

impl Tree {
    fn new(root: JointConfig) -> Self {
        Self {
            nodes: vec![root],
            parent: vec![usize::MAX],
        }
    }

    fn nearest(&self, q: &JointConfig) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.distance(q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn push(&mut self, q: JointConfig, parent: usize) -> usize {
        self.nodes.push(q);
        self.parent.push(parent);
        self.nodes.len() - 1
    }

    /// Root-to-node sequence.
    fn branch(&self, mut idx: usize) -> Vec<JointConfig> {
        let mut out = Vec::new();
        while idx != usize::MAX {
            out.push(self.nodes[idx].clone());
            idx = self.parent[idx];
        }
        out.reverse();
        out
    }
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

fn extend(tree: &mut Tree, target: &JointConfig, step: f64, checker: &Checker) -> Extend {
    let near = tree.nearest(target);
    let q_near = &tree.nodes[near];
    let gap = q_near.max_abs_diff(target);
    let (q_new, reached) = if gap <= step {
        (target.clone(), true)
    } else {
        (q_near.lerp(target, step / gap), false)
    };
    if !checker.edge_ok(q_near, &q_new) {
        return Extend::Trapped;
    }
    let idx = tree.push(q_new, near);
    if reached {
        Extend::Reached(idx)
    } else {
        Extend::Advanced(idx)
    }
}

fn connect(tree: &mut Tree, target: &JointConfig, step: f64, checker: &Checker) -> Extend {
    loop {
        match extend(tree, target, step, checker) {
            Extend::Advanced(_) => continue,
            other => return other,
        }
    }
}

struct Budget<'a> {
    started: Instant,
    wall: Option<f64>,
    cancel: Option<&'a CancelToken>,
}

impl Budget<'_> {
    fn over_time(&self) -> bool {
        self.wall
            .is_some_and(|limit| self.started.elapsed().as_secs_f64() > limit)
    }

    fn check(&self) -> Result<(), PlanError> {
        if self.cancel.is_some_and(CancelToken::is_cancelled) {
            return Err(PlanError::Cancelled);
        }
        if self.over_time() {
            return Err(PlanError::PlanningTimeout);
        }
        Ok(())
    }
}

fn rrt_connect(
    arm: &ArmDescription,
    start: &JointConfig,
    goal: &JointConfig,
    checker: &Checker,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
    budget: &Budget,
) -> Result<Vec<JointConfig>, PlanError> {
    if checker.edge_ok(start, goal) {
        return Ok(vec![start.clone(), goal.clone()]);
    }
    let mut a = Tree::new(start.clone());
    let mut b = Tree::new(goal.clone());
    let mut a_is_start = true;
    for _ in 0..cfg.max_iters {
        budget.check()?;
        let q_rand = arm.random_config(rng);
        let new_idx = match extend(&mut a, &q_rand, cfg.step, checker) {
            Extend::Trapped => None,
            Extend::Advanced(i) | Extend::Reached(i) => Some(i),
        };
        if let Some(i) = new_idx {
            let q_new = a.nodes[i].clone();
            if let Extend::Reached(j) = connect(&mut b, &q_new, cfg.step, checker) {
                let mut from_a = a.branch(i);
                let mut from_b = b.branch(j);
                from_b.pop();
                from_b.reverse();
                from_a.extend(from_b);
                if !a_is_start {
                    from_a.reverse();
                }
                return Ok(from_a);
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    Err(PlanError::PlanningTimeout)
}

/// Stops early, keeping the path so far, once the wall-clock budget runs out.
fn shortcut_with(
    path: JointPath,
    checker: &Checker,
    attempts: usize,
    rng_seed: u64,
    budget: Option<&Budget>,
) -> JointPath {
    let mut knots = path.knots;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..attempts {
        if knots.len() < 3 || budget.is_some_and(Budget::over_time) {
            break;
        }
        let i = rng.random_range(0..knots.len() - 2);
        let j = rng.random_range(i + 2..knots.len());
        if checker.edge_ok(&knots[i], &knots[j]) {
            knots.drain(i + 1..j);
        }
    }
    JointPath { knots }
}

/// Random shortcutting: repeatedly joins two non-adjacent knots directly
/// when the straight segment between them is valid.
pub fn shortcut(
    arm: &ArmDescription,
    path: &JointPath,
    snapshot: &WorldSnapshot,
    d_safe: f64,
    eps_q: f64,
    attempts: usize,
    rng_seed: u64,
) -> JointPath {
    let cfg = PlannerConfig::default();
    let checker = Checker::new(arm, snapshot, d_safe, eps_q, &cfg);
    shortcut_with(path.clone(), &checker, attempts, rng_seed, None)
}

/// Resolves an end-effector target into the first IK solution that passes
/// the planner's validity predicate.
fn resolve_goal(
    arm: &ArmDescription,
    target: Vector3<f64>,
    seed: &JointConfig,
    checker: &Checker,
    cfg: &PlannerConfig,
    rng_seed: u64,
) -> Result<JointConfig, PlanError> {
    let opts = IkOptions {
        max_restarts: cfg.ik_restarts,
        rng_seed,
        ..IkOptions::default()
    };
    let mut any = false;
    for q in arm.ik_candidates(target, seed, opts)? {
        any = true;
        if checker.config_ok(&q) {
            return Ok(q);
        }
    }
    Err(if any {
        PlanError::GoalInCollision
    } else {
        PlanError::GoalUnreachable
    })
}

/// Plans a valid joint path from `req.start` to the requested goal.
pub fn plan_subpath(
    arm: &ArmDescription,
    req: &PlanRequest,
    cfg: &PlannerConfig,
    cancel: Option<&CancelToken>,
) -> Result<JointPath, PlanError> {
    if req.start.len() != arm.dof() {
        return Err(ArmError::DimensionMismatch {
            expected: arm.dof(),
            got: req.start.len(),
        }
        .into());
    }
    let budget = Budget {
        started: Instant::now(),
        wall: cfg.enforce_wall_clock.then_some(req.time_budget),
        cancel,
    };
    let mut checker = Checker::new(arm, &req.snapshot, req.d_safe, req.eps_q, cfg);
    if req.recovery {
        checker = checker.with_recovery(&req.start, cfg.escape_radius);
    }
    if !checker.config_ok(&req.start) {
        return Err(PlanError::StartInCollision);
    }
    let goal = match &req.goal {
        Goal::Config(q) => {
            if q.len() != arm.dof() {
                return Err(ArmError::DimensionMismatch {
                    expected: arm.dof(),
                    got: q.len(),
                }
                .into());
            }
            if !checker.config_ok(q) {
                return Err(PlanError::GoalInCollision);
            }
            q.clone()
        }
        Goal::EePosition(target) => {
            resolve_goal(arm, *target, &req.start, &checker, cfg, req.rng_seed)?
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(req.rng_seed);
    let raw = rrt_connect(arm, &req.start, &goal, &checker, cfg, &mut rng, &budget)?;
    let path = shortcut_with(
        JointPath::new(raw),
        &checker,
        cfg.shortcut_attempts,
        req.rng_seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
        Some(&budget),
    );
    if cancel.is_some_and(CancelToken::is_cancelled) {
        return Err(PlanError::Cancelled);
    }
    debug_assert!(path.start() == &req.start && path.end() == &goal);
    Ok(path)
}

/// Convenience: does `path` pass [`collision::path_valid`]?
pub fn path_is_valid(
    arm: &ArmDescription,
    path: &JointPath,
    snapshot: &WorldSnapshot,
    d_safe: f64,
    eps_q: f64,
) -> bool {
    collision::path_valid(arm, &path.knots, snapshot, d_safe, eps_q)
        .map(|r| r.valid)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{BarrierShape, Sphere};
    use crate::barriers::{Barrier, BarrierId, BarrierKind};
    use std::f64::consts::FRAC_PI_2;

    fn planar() -> ArmDescription {
        ArmDescription::from_json_str(include_str!("../../../data/arms/planar2.json")).unwrap()
    }

    fn request(start: Vec<f64>, goal: Goal, snapshot: WorldSnapshot) -> PlanRequest {
        PlanRequest {
            start: JointConfig(start),
            goal,
            snapshot: Arc::new(snapshot),
            d_safe: 0.05,
            eps_q: 0.05,
            time_budget: 2.0,
            rng_seed: 7,
            recovery: false,
        }
    }

    fn sphere_world(center: Vector3<f64>, r: f64) -> WorldSnapshot {
        WorldSnapshot::new(
            1,
            vec![Barrier {
                id: BarrierId::from("ball"),
                kind: BarrierKind::Obstacle,
                shape: BarrierShape::Sphere(Sphere { center, radius: r }),
                label: None,
            }],
            0.0,
        )
    }

    #[test]
    fn empty_world_straight_plan() {
        let arm = planar();
        let req = request(vec![0.0, 0.0], Goal::Config(JointConfig(vec![FRAC_PI_2, 0.0])), WorldSnapshot::empty());
        let path = plan_subpath(&arm, &req, &PlannerConfig::default(), None).unwrap();
        assert_eq!(path.start(), &req.start);
        assert_eq!(path.end(), &JointConfig(vec![FRAC_PI_2, 0.0]));
        assert!(path_is_valid(&arm, &path, &req.snapshot, 0.05, 0.005));
    }

    #[test]
    fn goal_inside_sphere_is_in_collision() {
        let arm = planar();
        let target = Vector3::new(1.2, 0.8, 0.0);
        let req = request(vec![0.0, 0.0], Goal::EePosition(target), sphere_world(target, 0.3));
        assert_eq!(
            plan_subpath(&arm, &req, &PlannerConfig::default(), None).unwrap_err(),
            PlanError::GoalInCollision
        );
    }

    #[test]
    fn unreachable_target() {
        let arm = planar();
        let req = request(vec![0.0, 0.0], Goal::EePosition(Vector3::new(3.0, 0.0, 0.0)), WorldSnapshot::empty());
        assert_eq!(
            plan_subpath(&arm, &req, &PlannerConfig::default(), None).unwrap_err(),
            PlanError::GoalUnreachable
        );
    }

    #[test]
    fn planar_detour_around_sphere() {
        let arm = planar();
        // Sweeping joint 1 from -1 to 1 with a straight arm passes (1.5, 0).
        let snap = sphere_world(Vector3::new(1.5, 0.0, 0.0), 0.2);
        let req = request(vec![-1.0, 0.0], Goal::Config(JointConfig(vec![1.0, 0.0])), snap);
        let path = plan_subpath(&arm, &req, &PlannerConfig::default(), None).unwrap();
        assert!(path.knots.len() > 2);
        assert!(path_is_valid(&arm, &path, &req.snapshot, 0.05, 0.005));
        let again = plan_subpath(&arm, &req, &PlannerConfig::default(), None).unwrap();
        assert_eq!(path, again);
    }

    #[test]
    fn start_in_collision_reported() {
        let arm = planar();
        let snap = sphere_world(Vector3::new(1.5, 0.0, 0.0), 0.2);
        let req = request(vec![0.0, 0.0], Goal::Config(JointConfig(vec![1.0, 0.0])), snap);
        assert_eq!(
            plan_subpath(&arm, &req, &PlannerConfig::default(), None).unwrap_err(),
            PlanError::StartInCollision
        );
    }

    #[test]
    fn recovery_allows_start_inside_margin() {
        let arm = planar();
        // Clearance at q=(0,0) is 0.03: inside d_safe, outside d_safe / 2.
        let snap = sphere_world(Vector3::new(1.5, 0.28, 0.0), 0.2);
        let mut req = request(vec![0.0, 0.0], Goal::Config(JointConfig(vec![-1.0, 0.0])), snap);
        assert_eq!(
            plan_subpath(&arm, &req, &PlannerConfig::default(), None).unwrap_err(),
            PlanError::StartInCollision
        );
        req.recovery = true;
        let path = plan_subpath(&arm, &req, &PlannerConfig::default(), None).unwrap();
        assert_eq!(path.start(), &req.start);
    }

    #[test]
    fn cancelled_planning() {
        let arm = planar();
        let snap = sphere_world(Vector3::new(1.5, 0.0, 0.0), 0.2);
        let req = request(vec![-1.0, 0.0], Goal::Config(JointConfig(vec![1.0, 0.0])), snap);
        let token = CancelToken::new();
        token.cancel();
        assert_eq!(
            plan_subpath(&arm, &req, &PlannerConfig::default(), Some(&token)).unwrap_err(),
            PlanError::Cancelled
        );
    }

    #[test]
    fn time_parameterization_formula() {
        let arm = planar();
        let p = JointPath::new(vec![JointConfig(vec![0.0, 0.0]), JointConfig(vec![1.0, 0.0])]);
        assert_eq!(time_parameterize(&p, &arm).duration(), 1.0);
        let p = JointPath::new(vec![JointConfig(vec![0.0, 0.0]), JointConfig(vec![0.5, 1.0])]);
        assert_eq!(time_parameterize(&p, &arm).duration(), 1.0);
        let p = JointPath::new(vec![JointConfig(vec![0.0, 0.0]), JointConfig(vec![0.0, 0.0])]);
        assert_eq!(time_parameterize(&p, &arm).duration(), 1e-3);
    }

    #[test]
    fn trajectory_samples_reproduce_knots() {
        let arm = planar();
        let p = JointPath::new(vec![
            JointConfig(vec![0.0, 0.0]),
            JointConfig(vec![0.3, -0.7]),
            JointConfig(vec![1.1, 0.2]),
        ]);
        let traj = time_parameterize(&p, &arm);
        for (k, q) in traj.knots.iter().zip(&p.knots) {
            assert_eq!(&traj.sample(k.t), q);
        }
    }

    #[test]
    fn splice_keeps_prefix_and_halted_config() {
        let arm = planar();
        let p = JointPath::new(vec![JointConfig(vec![0.0, 0.0]), JointConfig(vec![1.0, 0.0])]);
        let traj = time_parameterize(&p, &arm);
        let halted = traj.sample(0.4);
        let tail = time_parameterize(
            &JointPath::new(vec![halted.clone(), JointConfig(vec![0.4, 0.5]), JointConfig(vec![1.0, 0.0])]),
            &arm,
        );
        let spliced = traj.splice(0.4, &tail);
        assert_eq!(spliced.start(), traj.start());
        assert_eq!(spliced.sample(0.4), halted);
        assert_eq!(spliced.end(), &JointConfig(vec![1.0, 0.0]));
        assert!(spliced.knots.windows(2).all(|w| w[1].t > w[0].t));
    }
}

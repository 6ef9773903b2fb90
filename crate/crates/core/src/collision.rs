//! Signed-distance queries between arm capsules and barrier primitives, and
//! configuration / path validity against a world snapshot.
//!
//! Every barrier primitive here is convex, so its signed distance field is a
//! convex function of position. Restricted to a segment it stays convex in
//! the segment parameter, which lets the capsule queries minimize it with a
//! golden-section search instead of per-primitive closest-point case analysis.
//! Inside a primitive the field is the exact (negative) depth.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmDescription, ArmError, JointConfig};
use crate::barriers::{BarrierId, WorldSnapshot};
use crate::cancel::CancelToken;
use crate::geometry::{self, Pose};

/// Clearance reported when there is nothing to collide with.
pub const NO_BARRIER_CLEARANCE: f64 = 1e9;

/// Default validity margin, m.
pub const DEFAULT_D_SAFE: f64 = 0.05;
/// Default joint-space checking resolution, rad.
pub const DEFAULT_EPS_Q: f64 = 0.05;

const GOLDEN_ITERS: usize = 64;
const MAX_HALVINGS: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("path has no knots")]
    EmptyPath,
    #[error("validity check cancelled")]
    Cancelled,
    #[error(transparent)]
    Arm(#[from] ArmError),
}

/// Segment swept by a sphere. `p0 == p1` is a plain sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsuleShape {
    #[serde(with = "geometry::vec3")]
    pub p0: Vector3<f64>,
    #[serde(with = "geometry::vec3")]
    pub p1: Vector3<f64>,
    pub radius: f64,
}

impl CapsuleShape {
    pub fn new(p0: Vector3<f64>, p1: Vector3<f64>, radius: f64) -> Self {
        Self { p0, p1, radius }
    }

    pub fn point_at(&self, s: f64) -> Vector3<f64> {
        self.p0 + (self.p1 - self.p0) * s
    }

    fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        let mid = (self.p0 + self.p1) * 0.5;
        (mid, (self.p1 - self.p0).norm() * 0.5 + self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerticalCylinder {
    #[serde(with = "geometry::vec2")]
    pub center_xy: Vector2<f64>,
    pub z0: f64,
    pub height: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientedBox {
    pub pose: Pose,
    #[serde(with = "geometry::vec3")]
    pub half_extents: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sphere {
    #[serde(with = "geometry::vec3")]
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BarrierShape {
    VerticalCylinder(VerticalCylinder),
    OrientedBox(OrientedBox),
    Sphere(Sphere),
}

impl BarrierShape {
    /// Signed distance from a world point to the primitive's surface.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            BarrierShape::VerticalCylinder(c) => cylinder_sdf(c, p),
            BarrierShape::OrientedBox(b) => {
                let local = b.pose.orientation.inverse_transform_vector(&(p - b.pose.position));
                box_sdf(&b.half_extents, &local)
            }
            BarrierShape::Sphere(s) => (p - s.center).norm() - s.radius,
        }
    }

    /// Bounding sphere used for cheap lower bounds.
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        match self {
            BarrierShape::VerticalCylinder(c) => {
                let half_h = c.height * 0.5;
                (
                    Vector3::new(c.center_xy.x, c.center_xy.y, c.z0 + half_h),
                    (c.radius * c.radius + half_h * half_h).sqrt(),
                )
            }
            BarrierShape::OrientedBox(b) => (b.pose.position, b.half_extents.norm()),
            BarrierShape::Sphere(s) => (s.center, s.radius),
        }
    }

    /// True when every dimension is finite and strictly positive.
    pub fn dimensions_positive(&self) -> bool {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match self {
            BarrierShape::VerticalCylinder(c) => pos(c.radius) && pos(c.height),
            BarrierShape::OrientedBox(b) => b.half_extents.iter().all(|v| pos(*v)),
            BarrierShape::Sphere(s) => pos(s.radius),
        }
    }
}

fn cylinder_sdf(c: &VerticalCylinder, p: &Vector3<f64>) -> f64 {
    let radial = (Vector2::new(p.x, p.y) - c.center_xy).norm() - c.radius;
    let half_h = c.height * 0.5;
    let axial = (p.z - (c.z0 + half_h)).abs() - half_h;
    let inside = radial.max(axial).min(0.0);
    let outside = Vector2::new(radial.max(0.0), axial.max(0.0)).norm();
    inside + outside
}

fn box_sdf(half: &Vector3<f64>, local: &Vector3<f64>) -> f64 {
    let q = local.abs() - half;
    let outside = q.map(|v| v.max(0.0)).norm();
    let inside = q.max().min(0.0);
    outside + inside
}

/// Minimum of a convex function on [0, 1].
fn minimize_convex(f: impl Fn(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    f1.min(f2).min(f(0.0)).min(f(1.0))
}

fn segment_min_sdf(c: &CapsuleShape, sdf: impl Fn(&Vector3<f64>) -> f64) -> f64 {
    if c.p0 == c.p1 {
        return sdf(&c.p0);
    }
    minimize_convex(|s| sdf(&c.point_at(s)))
}

/// Distance from a point to a segment.
pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

pub fn distance_capsule_sphere(c: &CapsuleShape, s: &Sphere) -> f64 {
    point_segment_distance(&s.center, &c.p0, &c.p1) - c.radius - s.radius
}

pub fn distance_capsule_cylinder(c: &CapsuleShape, cyl: &VerticalCylinder) -> f64 {
    segment_min_sdf(c, |p| cylinder_sdf(cyl, p)) - c.radius
}

pub fn distance_capsule_obb(c: &CapsuleShape, b: &OrientedBox) -> f64 {
    let inv = b.pose.orientation.inverse();
    let local = CapsuleShape {
        p0: inv * (c.p0 - b.pose.position),
        p1: inv * (c.p1 - b.pose.position),
        radius: c.radius,
    };
    segment_min_sdf(&local, |p| box_sdf(&b.half_extents, p)) - c.radius
}

pub fn distance_capsule_barrier(c: &CapsuleShape, shape: &BarrierShape) -> f64 {
    match shape {
        BarrierShape::VerticalCylinder(cyl) => distance_capsule_cylinder(c, cyl),
        BarrierShape::OrientedBox(b) => distance_capsule_obb(c, b),
        BarrierShape::Sphere(s) => distance_capsule_sphere(c, s),
    }
}

fn lower_bound(c: &CapsuleShape, shape: &BarrierShape) -> f64 {
    let (cc, cr) = c.bounding_sphere();
    let (bc, br) = shape.bounding_sphere();
    (cc - bc).norm() - cr - br
}

/// Minimum clearance between a set of world capsules and the snapshot.
pub fn capsules_min_clearance(
    capsules: &[CapsuleShape],
    snapshot: &WorldSnapshot,
) -> (f64, Option<BarrierId>) {
    let mut best = NO_BARRIER_CLEARANCE;
    let mut who: Option<&BarrierId> = None;
    for barrier in snapshot.barriers.iter() {
        for c in capsules {
            if lower_bound(c, &barrier.shape) >= best {
                continue;
            }
            let d = distance_capsule_barrier(c, &barrier.shape);
            if d < best {
                best = d;
                who = Some(&barrier.id);
            }
        }
    }
    (best, who.cloned())
}

/// True when every capsule keeps at least `threshold` from every barrier.
pub fn capsules_clear(capsules: &[CapsuleShape], snapshot: &WorldSnapshot, threshold: f64) -> bool {
    snapshot.barriers.iter().all(|barrier| {
        capsules.iter().all(|c| {
            lower_bound(c, &barrier.shape) >= threshold
                || distance_capsule_barrier(c, &barrier.shape) >= threshold
        })
    })
}

pub fn min_clearance(
    arm: &ArmDescription,
    q: &JointConfig,
    snapshot: &WorldSnapshot,
) -> Result<(f64, Option<BarrierId>), ArmError> {
    let caps = arm.link_capsules_world(q)?;
    Ok(capsules_min_clearance(&caps, snapshot))
}

/// Closed threshold: clearance exactly `d_safe` is valid.
pub fn config_valid(
    arm: &ArmDescription,
    q: &JointConfig,
    snapshot: &WorldSnapshot,
    d_safe: f64,
) -> Result<bool, ArmError> {
    let caps = arm.link_capsules_world(q)?;
    Ok(capsules_clear(&caps, snapshot, d_safe))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    pub valid: bool,
    pub first_invalid_sample: Option<usize>,
    pub min_clearance: f64,
    pub offending_barrier: Option<BarrierId>,
    pub samples_checked: usize,
}

/// Number of halvings needed so no joint moves more than `eps_q` per piece.
fn halvings(a: &JointConfig, b: &JointConfig, eps_q: f64) -> u32 {
    let span = a.max_abs_diff(b);
    let mut k = 0;
    while k < MAX_HALVINGS && span / f64::from(1u32 << k) > eps_q {
        k += 1;
    }
    k
}

/// Samples along a piecewise-linear joint path such that consecutive samples
/// differ by at most `eps_q` per joint. Each interval is split into `2^k`
/// equal pieces, so a smaller `eps_q` always yields a superset of samples.
pub fn densify(knots: &[JointConfig], eps_q: f64) -> Vec<JointConfig> {
    let Some(first) = knots.first() else {
        return Vec::new();
    };
    let mut out = vec![first.clone()];
    for pair in knots.windows(2) {
        let n = 1u32 << halvings(&pair[0], &pair[1], eps_q);
        for i in 1..n {
            out.push(pair[0].lerp(&pair[1], f64::from(i) / f64::from(n)));
        }
        out.push(pair[1].clone());
    }
    out
}

/// Calls `visit` on each densified sample in order, stopping when it returns
/// `false`. Returns whether every sample was visited.
pub fn for_each_sample(
    knots: &[JointConfig],
    eps_q: f64,
    mut visit: impl FnMut(&JointConfig) -> bool,
) -> bool {
    let Some(first) = knots.first() else {
        return true;
    };
    if !visit(first) {
        return false;
    }
    for pair in knots.windows(2) {
        let n = 1u32 << halvings(&pair[0], &pair[1], eps_q);
        for i in 1..n {
            if !visit(&pair[0].lerp(&pair[1], f64::from(i) / f64::from(n))) {
                return false;
            }
        }
        if !visit(&pair[1]) {
            return false;
        }
    }
    true
}

/// Discretized validity of a piecewise-linear joint path.
pub fn path_valid(
    arm: &ArmDescription,
    knots: &[JointConfig],
    snapshot: &WorldSnapshot,
    d_safe: f64,
    eps_q: f64,
) -> Result<ValidityReport, CollisionError> {
    path_valid_cancellable(arm, knots, snapshot, d_safe, eps_q, None)
}

pub fn path_valid_cancellable(
    arm: &ArmDescription,
    knots: &[JointConfig],
    snapshot: &WorldSnapshot,
    d_safe: f64,
    eps_q: f64,
    cancel: Option<&CancelToken>,
) -> Result<ValidityReport, CollisionError> {
    if knots.is_empty() {
        return Err(CollisionError::EmptyPath);
    }
    if let Some(bad) = knots.iter().find(|q| q.len() != arm.dof()) {
        return Err(ArmError::DimensionMismatch {
            expected: arm.dof(),
            got: bad.len(),
        }
        .into());
    }
    let mut report = ValidityReport {
        valid: true,
        first_invalid_sample: None,
        min_clearance: NO_BARRIER_CLEARANCE,
        offending_barrier: None,
        samples_checked: 0,
    };
    let mut cancelled = false;
    for_each_sample(knots, eps_q, |q| {
        if cancel.is_some_and(CancelToken::is_cancelled) {
            cancelled = true;
            return false;
        }
        let caps = arm
            .link_capsules_world(q)
            .expect("dimension checked above");
        let (clearance, who) = capsules_min_clearance(&caps, snapshot);
        if clearance < report.min_clearance {
            report.min_clearance = clearance;
        }
        if report.valid && clearance < d_safe {
            report.valid = false;
            report.first_invalid_sample = Some(report.samples_checked);
            report.offending_barrier = who;
        }
        report.samples_checked += 1;
        true
    });
    if cancelled {
        return Err(CollisionError::Cancelled);
    }
    Ok(report)
}

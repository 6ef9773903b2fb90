//! Versioned registry of virtual barriers.
//!
//! The registry always holds exactly one person barrier, a vertical cylinder
//! that follows the tracked headset, plus any number of user-managed obstacle
//! barriers (boxes and spheres). Every accepted mutation bumps the version;
//! readers get immutable [`WorldSnapshot`]s.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{BarrierShape, OrientedBox, Sphere, VerticalCylinder};
use crate::geometry::{self, Pose};

/// Allowed range for every obstacle dimension (radius or half extent), m.
pub const MIN_DIMENSION: f64 = 0.05;
pub const MAX_DIMENSION: f64 = 2.0;

/// Person moves smaller than this do not produce a new version.
const PERSON_DEDUP_EPS: f64 = 1e-6;

pub const PERSON_ID: &str = "person";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BarrierId(pub String);

impl BarrierId {
    pub fn person() -> Self {
        Self(PERSON_ID.to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BarrierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BarrierId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    Person,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub id: BarrierId,
    pub kind: BarrierKind,
    pub shape: BarrierShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Immutable view of all barriers at one registry version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub version: u64,
    pub barriers: Vec<Barrier>,
    pub timestamp: f64,
}

impl WorldSnapshot {
    /// Snapshot with no barriers at all, not even a person.
    pub fn empty() -> Self {
        Self {
            version: 0,
            barriers: Vec::new(),
            timestamp: 0.0,
        }
    }

    pub fn new(version: u64, barriers: Vec<Barrier>, timestamp: f64) -> Self {
        Self {
            version,
            barriers,
            timestamp,
        }
    }

    pub fn get(&self, id: &BarrierId) -> Option<&Barrier> {
        self.barriers.iter().find(|b| &b.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonState {
    #[serde(with = "geometry::vec3")]
    pub headset_position: Vector3<f64>,
    #[serde(default)]
    pub headset_yaw: f64,
}

impl PersonState {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            headset_position: Vector3::new(x, y, z),
            headset_yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonBarrierConfig {
    #[serde(default = "default_person_radius")]
    pub radius: f64,
    #[serde(default = "default_person_height")]
    pub height: f64,
}

fn default_person_radius() -> f64 {
    0.4
}

fn default_person_height() -> f64 {
    2.0
}

impl Default for PersonBarrierConfig {
    fn default() -> Self {
        Self {
            radius: default_person_radius(),
            height: default_person_height(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("unknown barrier {0}")]
    UnknownBarrier(BarrierId),
    #[error("the person barrier cannot be edited")]
    PersonBarrierImmutable,
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("barrier id {0} already in use")]
    DuplicateId(BarrierId),
    #[error("person position must be finite")]
    NonFinitePerson,
}

fn check_dim(v: f64, what: &str) -> Result<(), BarrierError> {
    if v.is_finite() && (MIN_DIMENSION..=MAX_DIMENSION).contains(&v) {
        Ok(())
    } else {
        Err(BarrierError::InvalidDimensions(format!(
            "{what} = {v} outside [{MIN_DIMENSION}, {MAX_DIMENSION}] m"
        )))
    }
}

fn check_obstacle_shape(shape: &BarrierShape) -> Result<(), BarrierError> {
    match shape {
        BarrierShape::Sphere(s) => check_dim(s.radius, "radius"),
        BarrierShape::OrientedBox(b) => {
            for (axis, v) in ["x", "y", "z"].iter().zip(b.half_extents.iter()) {
                check_dim(*v, &format!("half_extent.{axis}"))?;
            }
            Ok(())
        }
        BarrierShape::VerticalCylinder(_) => Err(BarrierError::InvalidDimensions(
            "obstacles must be boxes or spheres".into(),
        )),
    }
}

/// Single-writer barrier store.
#[derive(Debug, Clone)]
pub struct BarrierRegistry {
    version: u64,
    barriers: Vec<Barrier>,
    next_obstacle: u64,
    person: PersonBarrierConfig,
    person_xy: Vector2<f64>,
    sim_time: f64,
}

impl BarrierRegistry {
    pub fn new(person: PersonBarrierConfig, person_xy: Vector2<f64>) -> Self {
        let mut reg = Self {
            version: 0,
            barriers: Vec::new(),
            next_obstacle: 1,
            person,
            person_xy,
            sim_time: 0.0,
        };
        reg.barriers.push(Barrier {
            id: BarrierId::person(),
            kind: BarrierKind::Person,
            shape: reg.person_shape(),
            label: Some("person".into()),
        });
        reg
    }

    fn person_shape(&self) -> BarrierShape {
        BarrierShape::VerticalCylinder(VerticalCylinder {
            center_xy: self.person_xy,
            z0: 0.0,
            height: self.person.height,
            radius: self.person.radius,
        })
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn person_xy(&self) -> Vector2<f64> {
        self.person_xy
    }

    pub fn barriers(&self) -> &[Barrier] {
        &self.barriers
    }

    pub fn set_time(&mut self, t: f64) {
        self.sim_time = t;
    }

    fn find_obstacle_mut(&mut self, id: &BarrierId) -> Result<&mut Barrier, BarrierError> {
        let b = self
            .barriers
            .iter_mut()
            .find(|b| &b.id == id)
            .ok_or_else(|| BarrierError::UnknownBarrier(id.clone()))?;
        if b.kind == BarrierKind::Person {
            return Err(BarrierError::PersonBarrierImmutable);
        }
        Ok(b)
    }

    pub fn spawn_obstacle(
        &mut self,
        shape: BarrierShape,
        label: Option<String>,
    ) -> Result<BarrierId, BarrierError> {
        check_obstacle_shape(&shape)?;
        let id = loop {
            let candidate = BarrierId(format!("obstacle-{}", self.next_obstacle));
            self.next_obstacle += 1;
            if !self.barriers.iter().any(|b| b.id == candidate) {
                break candidate;
            }
        };
        self.insert(id.clone(), shape, label);
        Ok(id)
    }

    /// Spawn under a caller-chosen id (scenario files name their barriers).
    pub fn spawn_obstacle_with_id(
        &mut self,
        id: BarrierId,
        shape: BarrierShape,
        label: Option<String>,
    ) -> Result<BarrierId, BarrierError> {
        check_obstacle_shape(&shape)?;
        if self.barriers.iter().any(|b| b.id == id) {
            return Err(BarrierError::DuplicateId(id));
        }
        self.insert(id.clone(), shape, label);
        Ok(id)
    }

    fn insert(&mut self, id: BarrierId, shape: BarrierShape, label: Option<String>) {
        self.barriers.push(Barrier {
            id,
            kind: BarrierKind::Obstacle,
            shape,
            label,
        });
        self.version += 1;
    }

    /// Moves an obstacle to `new_pose` and multiplies its dimensions by
    /// `new_scale`. Spheres use the x component of the scale and ignore the
    /// pose orientation.
    pub fn transform_barrier(
        &mut self,
        id: &BarrierId,
        new_pose: Pose,
        new_scale: Vector3<f64>,
    ) -> Result<(), BarrierError> {
        if new_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(BarrierError::InvalidDimensions(
                "scale components must be positive".into(),
            ));
        }
        if new_pose.position.iter().any(|v| !v.is_finite()) {
            return Err(BarrierError::InvalidDimensions("position must be finite".into()));
        }
        let barrier = self.find_obstacle_mut(id)?;
        let shape = match barrier.shape {
            BarrierShape::OrientedBox(b) => BarrierShape::OrientedBox(OrientedBox {
                pose: new_pose,
                half_extents: b.half_extents.component_mul(&new_scale),
            }),
            BarrierShape::Sphere(s) => BarrierShape::Sphere(Sphere {
                center: new_pose.position,
                radius: s.radius * new_scale.x,
            }),
            BarrierShape::VerticalCylinder(_) => return Err(BarrierError::PersonBarrierImmutable),
        };
        check_obstacle_shape(&shape)?;
        barrier.shape = shape;
        self.version += 1;
        Ok(())
    }

    pub fn delete_barrier(&mut self, id: &BarrierId) -> Result<(), BarrierError> {
        self.find_obstacle_mut(id)?;
        self.barriers.retain(|b| &b.id != id);
        self.version += 1;
        Ok(())
    }

    /// Re-centers the person cylinder under the headset. Returns whether the
    /// registry version changed.
    pub fn update_person(&mut self, p: &PersonState) -> Result<bool, BarrierError> {
        if p.headset_position.iter().any(|v| !v.is_finite()) {
            return Err(BarrierError::NonFinitePerson);
        }
        let xy = p.headset_position.xy();
        if (xy - self.person_xy).norm() <= PERSON_DEDUP_EPS {
            return Ok(false);
        }
        self.person_xy = xy;
        let shape = self.person_shape();
        if let Some(b) = self.barriers.iter_mut().find(|b| b.kind == BarrierKind::Person) {
            b.shape = shape;
        }
        self.version += 1;
        Ok(true)
    }

    pub fn snapshot(&self) -> Arc<WorldSnapshot> {
        Arc::new(WorldSnapshot {
            version: self.version,
            barriers: self.barriers.clone(),
            timestamp: self.sim_time,
        })
    }
}

impl Default for BarrierRegistry {
    fn default() -> Self {
        Self::new(PersonBarrierConfig::default(), Vector2::new(10.0, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn sphere(c: [f64; 3], r: f64) -> BarrierShape {
        BarrierShape::Sphere(Sphere { center: c.into(), radius: r })
    }

    fn cube(h: f64) -> BarrierShape {
        BarrierShape::OrientedBox(OrientedBox { pose: Pose::identity(), half_extents: Vector3::repeat(h) })
    }

    #[test]
    fn spawn_bumps_version_by_one() {
        let mut reg = BarrierRegistry::default();
        for _ in 0..7 {
            reg.spawn_obstacle(cube(0.1), None).unwrap();
        }
        assert_eq!(reg.version(), 7);
        let id = reg.spawn_obstacle(sphere([0.5, 0.5, 0.1], 0.15), None).unwrap();
        assert_eq!(reg.version(), 8);
        let snap = reg.snapshot();
        assert_eq!(snap.get(&id).unwrap().shape, sphere([0.5, 0.5, 0.1], 0.15));
    }

    #[test]
    fn oversized_box_rejected() {
        let mut reg = BarrierRegistry::default();
        let err = reg.spawn_obstacle(cube(3.0), None).unwrap_err();
        assert!(matches!(err, BarrierError::InvalidDimensions(_)));
        assert_eq!(reg.version(), 0);
    }

    #[test]
    fn cylinder_obstacles_rejected() {
        let mut reg = BarrierRegistry::default();
        let cyl = BarrierShape::VerticalCylinder(VerticalCylinder {
            center_xy: Vector2::zeros(),
            z0: 0.0,
            height: 1.0,
            radius: 0.2,
        });
        assert!(reg.spawn_obstacle(cyl, None).is_err());
    }

    #[test]
    fn scale_is_multiplicative() {
        let mut reg = BarrierRegistry::default();
        let id = reg.spawn_obstacle(cube(0.1), None).unwrap();
        reg.transform_barrier(&id, Pose::identity(), Vector3::repeat(2.0)).unwrap();
        match reg.snapshot().get(&id).unwrap().shape {
            BarrierShape::OrientedBox(b) => assert_eq!(b.half_extents, Vector3::repeat(0.2)),
            _ => unreachable!(),
        }
        // 0.2 * 20 = 4.0 > 2.0
        let err = reg.transform_barrier(&id, Pose::identity(), Vector3::repeat(20.0)).unwrap_err();
        assert!(matches!(err, BarrierError::InvalidDimensions(_)));
    }

    #[test]
    fn person_barrier_is_immutable() {
        let mut reg = BarrierRegistry::default();
        let person = BarrierId::person();
        assert_eq!(
            reg.transform_barrier(&person, Pose::identity(), Vector3::repeat(1.0)),
            Err(BarrierError::PersonBarrierImmutable)
        );
        assert_eq!(reg.delete_barrier(&person), Err(BarrierError::PersonBarrierImmutable));
    }

    #[test]
    fn delete_twice() {
        let mut reg = BarrierRegistry::default();
        let id = reg.spawn_obstacle(cube(0.1), None).unwrap();
        reg.delete_barrier(&id).unwrap();
        assert!(reg.snapshot().get(&id).is_none());
        assert_eq!(reg.delete_barrier(&id), Err(BarrierError::UnknownBarrier(id)));
    }

    #[test]
    fn person_follows_headset_and_dedups() {
        let mut reg = BarrierRegistry::default();
        assert!(reg.update_person(&PersonState::at(1.0, 2.0, 1.7)).unwrap());
        assert!(!reg.update_person(&PersonState::at(1.0, 2.0, 1.7)).unwrap());
        assert_eq!(reg.version(), 1);
        let snap = reg.snapshot();
        match snap.get(&BarrierId::person()).unwrap().shape {
            BarrierShape::VerticalCylinder(c) => {
                assert_eq!(c.center_xy, Vector2::new(1.0, 2.0));
                assert_eq!(c.z0, 0.0);
                assert_eq!(c.height, 2.0);
                assert_eq!(c.radius, 0.4);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn snapshots_are_immutable() {
        let mut reg = BarrierRegistry::default();
        assert_eq!(reg.snapshot().barriers.len(), 1);
        let id = reg.spawn_obstacle(cube(0.1), None).unwrap();
        let before = reg.snapshot();
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 1.0);
        reg.transform_barrier(&id, Pose::new(Vector3::new(1.0, 0.0, 0.0), rot), Vector3::repeat(1.5))
            .unwrap();
        assert_eq!(before.get(&id).unwrap().shape, cube(0.1));
        assert!(reg.snapshot().version > before.version);
    }

    #[test]
    fn duplicate_named_ids_rejected() {
        let mut reg = BarrierRegistry::default();
        reg.spawn_obstacle_with_id("crate".into(), cube(0.1), None).unwrap();
        assert!(matches!(
            reg.spawn_obstacle_with_id("crate".into(), cube(0.1), None),
            Err(BarrierError::DuplicateId(_))
        ));
        assert!(matches!(
            reg.spawn_obstacle_with_id("person".into(), cube(0.1), None),
            Err(BarrierError::DuplicateId(_))
        ));
    }
}

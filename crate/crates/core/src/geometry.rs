//! Rigid transforms shared by the kinematics and collision code.

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Position in meters plus a unit-quaternion orientation.
///
/// On the wire a pose is `{"position": [x, y, z], "orientation": [w, x, y, z]}`.
/// Deserialization renormalizes a non-unit quaternion; a zero quaternion is rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    position: [f64; 3],
    #[serde(default = "identity_wxyz")]
    orientation: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let q = self.orientation.quaternion();
        PoseRepr {
            position: self.position.into(),
            orientation: [q.w, q.i, q.j, q.k],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        let [w, x, y, z] = repr.orientation;
        let quat = Quaternion::new(w, x, y, z);
        let norm = quat.norm();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(serde::de::Error::custom("orientation quaternion must be non-zero"));
        }
        if repr.position.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("position must be finite"));
        }
        Ok(Pose {
            position: Vector3::from(repr.position),
            // already-unit input is kept bit-exact so poses round-trip
            orientation: if (norm - 1.0).abs() <= 1e-12 {
                UnitQuaternion::new_unchecked(quat)
            } else {
                UnitQuaternion::from_quaternion(quat)
            },
        })
    }
}

/// Serde helper for `Vector3<f64>` as a plain `[x, y, z]` array.
pub mod vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::from(a))
    }
}

/// Serde helper for `Vector2<f64>` as `[x, y]`.
pub mod vec2 {
    use nalgebra::Vector2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector2<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector2<f64>, D::Error> {
        let a = <[f64; 2]>::deserialize(d)?;
        Ok(Vector2::from(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_json_renormalizes_quaternion() {
        let pose: Pose =
            serde_json::from_str(r#"{"position":[1,2,3],"orientation":[2,0,0,0]}"#).unwrap();
        assert_eq!(pose.position, Vector3::new(1.0, 2.0, 3.0));
        assert!((pose.orientation.quaternion().norm() - 1.0).abs() < 1e-12);
        let back = serde_json::to_string(&pose).unwrap();
        assert_eq!(back, r#"{"position":[1.0,2.0,3.0],"orientation":[1.0,0.0,0.0,0.0]}"#);
    }

    #[test]
    fn zero_quaternion_rejected() {
        let r: Result<Pose, _> =
            serde_json::from_str(r#"{"position":[0,0,0],"orientation":[0,0,0,0]}"#);
        assert!(r.is_err());
    }
}

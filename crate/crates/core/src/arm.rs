//! Kinematic model of the simulated arm.
//!
//! The arm is a serial chain of revolute joints. Joint `i` sits at
//! `parent_frame * origin_i` and rotates about its local `axis_i`; the frame
//! obtained after that rotation is the frame of link `i`, to which the link's
//! collision capsules are attached. The end-effector frame is the last link
//! frame composed with `ee_offset`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, Isometry3, Matrix3, Matrix3xX, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::CapsuleShape;
use crate::geometry::{self, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArmError {
    #[error("configuration has {got} joints, arm has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no IK solution within tolerance for target {target:?}")]
    Unreachable { target: [f64; 3] },
    #[error("invalid arm description: {0}")]
    InvalidDescription(String),
    #[error("cannot read arm file {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Joint-angle vector in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn zeros(dof: usize) -> Self {
        Self(vec![0.0; dof])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self + (other - self) * s`.
    pub fn lerp(&self, other: &JointConfig, s: f64) -> JointConfig {
        JointConfig(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + (b - a) * s)
                .collect(),
        )
    }

    /// Largest per-joint difference (L-infinity distance).
    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Euclidean joint-space distance.
    pub fn distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl fmt::Display for JointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.4}")?;
        }
        write!(f, "]")
    }
}

/// One revolute joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Fixed transform from the parent link frame to the joint frame.
    pub origin: Pose,
    #[serde(with = "geometry::vec3")]
    pub axis: Vector3<f64>,
    pub limit_lo: f64,
    pub limit_hi: f64,
    pub vel_max: f64,
}

/// Serial-chain arm loaded from a JSON description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmDescription {
    pub name: String,
    pub joints: Vec<JointSpec>,
    /// `link_capsules[i]` are expressed in the frame of link `i`.
    pub link_capsules: Vec<Vec<CapsuleShape>>,
    pub ee_offset: Pose,
}

/// Output of forward kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct FkResult {
    pub link_frames: Vec<Pose>,
    pub ee: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    pub tol: f64,
    pub max_restarts: usize,
    pub max_iters: usize,
    pub damping: f64,
    /// Per-iteration cap on the largest joint update, rad.
    pub max_step: f64,
    pub rng_seed: u64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_restarts: 10,
            max_iters: 200,
            damping: 0.1,
            max_step: 0.5,
            rng_seed: 0,
        }
    }
}

impl ArmDescription {
    pub fn from_json_str(text: &str) -> Result<Self, ArmError> {
        let arm: ArmDescription = serde_json::from_str(text)
            .map_err(|e| ArmError::InvalidDescription(e.to_string()))?;
        arm.validate()?;
        Ok(arm)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ArmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ArmError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ArmError> {
        let bad = |m: String| Err(ArmError::InvalidDescription(m));
        if self.joints.is_empty() {
            return bad("arm needs at least one joint".into());
        }
        if self.link_capsules.len() != self.joints.len() {
            return bad(format!(
                "link_capsules has {} entries for {} joints",
                self.link_capsules.len(),
                self.joints.len()
            ));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(j.limit_lo.is_finite() && j.limit_hi.is_finite() && j.limit_lo < j.limit_hi) {
                return bad(format!("joint {i}: limit_lo must be < limit_hi"));
            }
            if !(j.vel_max.is_finite() && j.vel_max > 0.0) {
                return bad(format!("joint {i}: vel_max must be positive"));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return bad(format!("joint {i}: axis must be unit length"));
            }
        }
        for (i, caps) in self.link_capsules.iter().enumerate() {
            for c in caps {
                if !(c.radius.is_finite() && c.radius > 0.0) {
                    return bad(format!("link {i}: capsule radius must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn capsule_count(&self) -> usize {
        self.link_capsules.iter().map(Vec::len).sum()
    }

    fn check_dim(&self, q: &JointConfig) -> Result<(), ArmError> {
        if q.len() != self.dof() {
            return Err(ArmError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.len() == self.dof()
            && self
                .joints
                .iter()
                .zip(&q.0)
                .all(|(j, v)| *v >= j.limit_lo && *v <= j.limit_hi)
    }

    pub fn clamp(&self, q: &mut JointConfig) {
        for (j, v) in self.joints.iter().zip(q.0.iter_mut()) {
            *v = v.clamp(j.limit_lo, j.limit_hi);
        }
    }

    /// Uniform random configuration within the joint limits.
    pub fn random_config<R: Rng + ?Sized>(&self, rng: &mut R) -> JointConfig {
        JointConfig(
            self.joints
                .iter()
                .map(|j| rng.random_range(j.limit_lo..=j.limit_hi))
                .collect(),
        )
    }

    /// Sum of all fixed offsets along the chain: an upper bound on how far
    /// any point of the chain can lie from the base origin.
    pub fn reach(&self) -> f64 {
        let links: f64 = self
            .joints
            .iter()
            .map(|j| j.origin.position.norm())
            .sum();
        links + self.ee_offset.position.norm()
    }

    /// Link frames as isometries, without dimension checking.
    fn frames_iso(&self, q: &JointConfig) -> Vec<Isometry3<f64>> {
        let mut frames = Vec::with_capacity(self.dof());
        let mut current = Isometry3::identity();
        for (joint, angle) in self.joints.iter().zip(&q.0) {
            let axis = Unit::new_unchecked(joint.axis);
            current = current
                * joint.origin.to_isometry()
                * UnitQuaternion::from_axis_angle(&axis, *angle);
            frames.push(current);
        }
        frames
    }

    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<FkResult, ArmError> {
        self.check_dim(q)?;
        let frames = self.frames_iso(q);
        let ee = frames[frames.len() - 1] * self.ee_offset.to_isometry();
        Ok(FkResult {
            link_frames: frames.iter().map(Pose::from_isometry).collect(),
            ee: Pose::from_isometry(&ee),
        })
    }

    pub fn ee_position(&self, q: &JointConfig) -> Result<Vector3<f64>, ArmError> {
        self.check_dim(q)?;
        Ok(self.ee_position_unchecked(q))
    }

    fn ee_position_unchecked(&self, q: &JointConfig) -> Vector3<f64> {
        let frames = self.frames_iso(q);
        (frames[frames.len() - 1] * Translation3::from(self.ee_offset.position))
            .translation
            .vector
    }

    /// World-frame collision capsules, in link order.
    pub fn link_capsules_world(&self, q: &JointConfig) -> Result<Vec<CapsuleShape>, ArmError> {
        self.check_dim(q)?;
        let frames = self.frames_iso(q);
        let mut out = Vec::with_capacity(self.capsule_count());
        for (frame, caps) in frames.iter().zip(&self.link_capsules) {
            for c in caps {
                out.push(CapsuleShape {
                    p0: frame.transform_point(&c.p0.into()).coords,
                    p1: frame.transform_point(&c.p1.into()).coords,
                    radius: c.radius,
                });
            }
        }
        Ok(out)
    }

    /// Like [`Self::link_capsules_world`] but also reports the link index of
    /// each capsule.
    pub fn link_capsules_world_indexed(
        &self,
        q: &JointConfig,
    ) -> Result<Vec<(usize, CapsuleShape)>, ArmError> {
        self.check_dim(q)?;
        let frames = self.frames_iso(q);
        let mut out = Vec::with_capacity(self.capsule_count());
        for (link, (frame, caps)) in frames.iter().zip(&self.link_capsules).enumerate() {
            for c in caps {
                out.push((
                    link,
                    CapsuleShape {
                        p0: frame.transform_point(&c.p0.into()).coords,
                        p1: frame.transform_point(&c.p1.into()).coords,
                        radius: c.radius,
                    },
                ));
            }
        }
        Ok(out)
    }

    /// Positional Jacobian (3 x DOF), column j = axis_j x (p_ee - p_j).
    pub fn jacobian_position(&self, q: &JointConfig) -> Result<Matrix3xX<f64>, ArmError> {
        self.check_dim(q)?;
        Ok(self.jacobian_unchecked(q))
    }

    fn jacobian_unchecked(&self, q: &JointConfig) -> Matrix3xX<f64> {
        let frames = self.frames_iso(q);
        let last = frames[frames.len() - 1];
        let p_ee = (last * Translation3::from(self.ee_offset.position))
            .translation
            .vector;
        let mut jac = Matrix3xX::zeros(self.dof());
        for (j, (frame, joint)) in frames.iter().zip(&self.joints).enumerate() {
            let axis_world = frame.rotation * joint.axis;
            let col = axis_world.cross(&(p_ee - frame.translation.vector));
            jac.set_column(j, &col);
        }
        jac
    }

    /// Damped least squares from a single start configuration.
    /// Returns the final configuration and its residual error.
    fn dls_descent(
        &self,
        target: &Vector3<f64>,
        start: JointConfig,
        opts: &IkOptions,
    ) -> (JointConfig, f64) {
        let mut q = start;
        self.clamp(&mut q);
        let lambda2 = opts.damping * opts.damping;
        let mut err = target - self.ee_position_unchecked(&q);
        for _ in 0..opts.max_iters {
            if err.norm() <= opts.tol {
                break;
            }
            let jac = self.jacobian_unchecked(&q);
            let jjt: Matrix3<f64> = &jac * jac.transpose() + Matrix3::identity() * lambda2;
            let Some(inv) = jjt.try_inverse() else {
                break;
            };
            let dq = jac.transpose() * (inv * err);
            let biggest = dq.amax();
            let scale = if biggest > opts.max_step {
                opts.max_step / biggest
            } else {
                1.0
            };
            for (v, d) in q.0.iter_mut().zip(dq.iter()) {
                *v += d * scale;
            }
            self.clamp(&mut q);
            err = target - self.ee_position_unchecked(&q);
        }
        let residual = err.norm();
        (q, residual)
    }

    /// Lazily yields every converged IK solution: first from `seed`, then
    /// from `opts.max_restarts` random starts drawn from `opts.rng_seed`.
    pub fn ik_candidates<'a>(
        &'a self,
        target: Vector3<f64>,
        seed: &JointConfig,
        opts: IkOptions,
    ) -> Result<impl Iterator<Item = JointConfig> + 'a, ArmError> {
        self.check_dim(seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
        let seed = seed.clone();
        Ok((0..=opts.max_restarts).filter_map(move |attempt| {
            let start = if attempt == 0 {
                seed.clone()
            } else {
                self.random_config(&mut rng)
            };
            let (q, residual) = self.dls_descent(&target, start, &opts);
            (residual <= opts.tol).then_some(q)
        }))
    }

    /// Position-only inverse kinematics.
    pub fn solve_ik(
        &self,
        target: Vector3<f64>,
        seed: &JointConfig,
        opts: IkOptions,
    ) -> Result<JointConfig, ArmError> {
        self.ik_candidates(target, seed, opts)?
            .next()
            .ok_or(ArmError::Unreachable {
                target: target.into(),
            })
    }
}

/// Dense matrix view of the positional Jacobian, handy for tests and tools.
pub fn jacobian_as_dmatrix(jac: &Matrix3xX<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(3, jac.ncols(), jac.iter().copied())
}

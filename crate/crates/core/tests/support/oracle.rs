//! Brute-force reference distances, written without the crate's geometry code.

#![allow(dead_code)]

use nalgebra::{Isometry3, Vector3};

pub fn sdf_sphere(p: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> f64 {
    (p - c).norm() - r
}

/// Finite vertical cylinder from `z0` to `z0 + h`.
pub fn sdf_vcyl(p: &Vector3<f64>, cx: f64, cy: f64, z0: f64, h: f64, r: f64) -> f64 {
    let radial = ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt() - r;
    let axial = (p.z - (z0 + 0.5 * h)).abs() - 0.5 * h;
    let outside = (radial.max(0.0).powi(2) + axial.max(0.0).powi(2)).sqrt();
    outside + radial.max(axial).min(0.0)
}

pub fn sdf_box(p: &Vector3<f64>, pose: &Isometry3<f64>, half: &Vector3<f64>) -> f64 {
    let rot = pose.rotation.to_rotation_matrix();
    let local = rot.matrix().transpose() * (p - pose.translation.vector);
    let q = local.abs() - half;
    let outside = q.map(|v| v.max(0.0)).norm();
    outside + q.x.max(q.y).max(q.z).min(0.0)
}

/// Capsule distance from `n + 1` uniform samples along the axis, refined by
/// a second dense pass around the best sample.
pub fn dense_capsule_distance(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    radius: f64,
    n: usize,
    sdf: impl Fn(&Vector3<f64>) -> f64,
) -> f64 {
    let at = |s: f64| p0 + (p1 - p0) * s;
    let mut best = f64::INFINITY;
    let mut best_i = 0;
    for i in 0..=n {
        let d = sdf(&at(i as f64 / n as f64));
        if d < best {
            best = d;
            best_i = i;
        }
    }
    let lo = (best_i.saturating_sub(1)) as f64 / n as f64;
    let hi = ((best_i + 1).min(n)) as f64 / n as f64;
    let m = 1000;
    for j in 0..=m {
        let d = sdf(&at(lo + (hi - lo) * j as f64 / m as f64));
        best = best.min(d);
    }
    best - radius
}

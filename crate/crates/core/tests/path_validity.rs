use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vbarrier_core::barriers::{Barrier, BarrierId, BarrierKind, WorldSnapshot};
use vbarrier_core::collision::{densify, min_clearance, path_valid, Sphere};
use vbarrier_core::{ArmDescription, BarrierShape, JointConfig};

fn planar() -> ArmDescription {
    ArmDescription::from_json_str(include_str!("../../../data/arms/planar2.json")).unwrap()
}

fn cobot() -> ArmDescription {
    ArmDescription::from_json_str(include_str!("../../../data/arms/cobot6.json")).unwrap()
}

fn sphere_snapshot(spheres: &[(Vector3<f64>, f64)]) -> WorldSnapshot {
    let barriers = spheres
        .iter()
        .enumerate()
        .map(|(i, (c, r))| Barrier {
            id: BarrierId(format!("s{i}")),
            kind: BarrierKind::Obstacle,
            shape: BarrierShape::Sphere(Sphere { center: *c, radius: *r }),
            label: None,
        })
        .collect();
    WorldSnapshot::new(1, barriers, 0.0)
}

#[test]
fn single_knot_reports_config_clearance() {
    let arm = planar();
    let snap = sphere_snapshot(&[(Vector3::new(0.0, 1.5, 0.0), 0.2)]);
    let q = JointConfig(vec![0.0, 0.0]);
    let r = path_valid(&arm, &[q.clone()], &snap, 0.05, 0.05).unwrap();
    let (want, who) = min_clearance(&arm, &q, &snap).unwrap();
    assert!(r.valid);
    assert_eq!(r.min_clearance, want);
    assert_eq!(r.samples_checked, 1);
    assert_eq!(who, Some(BarrierId("s0".into())));
}

#[test]
fn midpoint_sweep_through_sphere_is_caught() {
    let arm = planar();
    let a = JointConfig(vec![0.0, 0.0]);
    let b = JointConfig(vec![1.0, 0.0]);
    let mid = a.lerp(&b, 0.5);
    let tip = arm.ee_position(&mid).unwrap();
    let snap = sphere_snapshot(&[(tip, 0.1)]);
    let r = path_valid(&arm, &[a, b], &snap, 0.05, 0.05).unwrap();
    assert!(!r.valid);
    let first = r.first_invalid_sample.unwrap();
    assert!(first > 0 && first + 1 < densify(&[JointConfig(vec![0.0, 0.0]), JointConfig(vec![1.0, 0.0])], 0.05).len());
    assert_eq!(r.offending_barrier, Some(BarrierId("s0".into())));
}

#[test]
fn verdict_agrees_with_ten_times_finer_discretization() {
    let arm = cobot();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (d_safe, eps) = (0.05, 0.05);
    let mut invalid = 0;
    for case in 0..200 {
        let n_knots = rng.random_range(2..5);
        let mut knots = vec![arm.random_config(&mut rng)];
        for _ in 1..n_knots {
            let prev = knots.last().unwrap().clone();
            let next = JointConfig(prev.0.iter().map(|x| x + rng.random_range(-0.6..0.6)).collect());
            knots.push(next);
        }
        let spheres: Vec<_> = (0..rng.random_range(1..4))
            .map(|_| {
                let q = knots[rng.random_range(0..knots.len())].lerp(&knots[knots.len() - 1], rng.random_range(0.0..1.0));
                let p = arm.ee_position(&q).unwrap();
                let jitter = Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
                (p + jitter, rng.random_range(0.05..0.2))
            })
            .collect();
        let snap = sphere_snapshot(&spheres);
        let coarse = path_valid(&arm, &knots, &snap, d_safe, eps).unwrap();
        let fine = path_valid(&arm, &knots, &snap, d_safe, eps / 10.0).unwrap();
        if !fine.valid {
            invalid += 1;
        }
        if coarse.valid != fine.valid {
            assert!(
                (fine.min_clearance - d_safe).abs() <= 2e-3,
                "case {case}: coarse {} fine {} with fine clearance {}",
                coarse.valid,
                fine.valid,
                fine.min_clearance
            );
        }
    }
    // the generator must exercise both verdicts
    assert!(invalid > 20 && invalid < 180, "{invalid} invalid cases");
}

#[test]
fn finer_resolution_never_misses_a_coarse_hit() {
    let arm = planar();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let knots: Vec<_> = (0..3).map(|_| arm.random_config(&mut rng)).collect();
        let c = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0);
        let snap = sphere_snapshot(&[(c, rng.random_range(0.05..0.4))]);
        let coarse = path_valid(&arm, &knots, &snap, 0.05, 0.08).unwrap();
        let fine = path_valid(&arm, &knots, &snap, 0.05, 0.01).unwrap();
        // halving-based densification: finer samples are a superset
        if !coarse.valid {
            assert!(!fine.valid);
        }
        assert!(fine.min_clearance <= coarse.min_clearance);
    }
}

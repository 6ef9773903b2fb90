//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vbarrier_core::barriers::{Barrier, BarrierId, BarrierKind, WorldSnapshot};
use vbarrier_core::collision::{
    config_valid, distance_capsule_barrier, path_valid, OrientedBox, Sphere, VerticalCylinder,
};
use vbarrier_core::planner::{plan_subpath, Goal};
use vbarrier_core::scenario::{load_scenario, BarrierSpec, LoadedScenario};
use vbarrier_core::sim::Outcome;
use vbarrier_core::{
    ArmDescription, BarrierShape, CapsuleShape, IkOptions, JointConfig, MonitorAction,
    PlanRequest, PlannerConfig, Pose, Simulation,
};

const BUNDLED: [&str; 3] = [
    "scenario_paper_table.json",
    "scenario_crossing.json",
    "scenario_replan_ahead.json",
];

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn scenario(name: &str) -> LoadedScenario {
    load_scenario(data_dir().join("scenarios").join(name)).expect("bundled scenario loads")
}

fn arm(name: &str) -> ArmDescription {
    let text = std::fs::read_to_string(data_dir().join("arms").join(name)).expect("arm file");
    ArmDescription::from_json_str(&text).expect("arm parses")
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

// ---- geometry -------------------------------------------------------------

fn random_capsule(rng: &mut impl Rng) -> CapsuleShape {
    let p0 = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let dir = v(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let p1 = p0 + dir.normalize() * rng.random_range(0.0..0.8);
    CapsuleShape::new(p0, p1, rng.random_range(0.01..0.15))
}

fn random_shape(kind: usize, rng: &mut impl Rng) -> BarrierShape {
    let c = v(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
    match kind {
        0 => BarrierShape::Sphere(Sphere { center: c, radius: rng.random_range(0.05..0.5) }),
        1 => BarrierShape::VerticalCylinder(VerticalCylinder {
            center_xy: Vector2::new(c.x, c.y),
            z0: rng.random_range(-1.0..0.0),
            height: rng.random_range(0.1..1.5),
            radius: rng.random_range(0.05..0.5),
        }),
        _ => BarrierShape::OrientedBox(OrientedBox {
            pose: Pose::new(
                c,
                UnitQuaternion::from_euler_angles(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-3.0..3.0),
                ),
            ),
            half_extents: v(
                rng.random_range(0.05..0.4),
                rng.random_range(0.05..0.4),
                rng.random_range(0.05..0.4),
            ),
        }),
    }
}

fn oracle_distance(c: &CapsuleShape, shape: &BarrierShape) -> f64 {
    let n = 10_000;
    match shape {
        BarrierShape::Sphere(s) => oracle::dense_capsule_distance(&c.p0, &c.p1, c.radius, n, |p| {
            oracle::sdf_sphere(p, &s.center, s.radius)
        }),
        BarrierShape::VerticalCylinder(cy) => {
            oracle::dense_capsule_distance(&c.p0, &c.p1, c.radius, n, |p| {
                oracle::sdf_vcyl(p, cy.center_xy.x, cy.center_xy.y, cy.z0, cy.height, cy.radius)
            })
        }
        BarrierShape::OrientedBox(b) => {
            let iso = b.pose.to_isometry();
            oracle::dense_capsule_distance(&c.p0, &c.p1, c.radius, n, |p| {
                oracle::sdf_box(p, &iso, &b.half_extents)
            })
        }
    }
}

fn geometry_oracle() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sign_mismatch = 0;
    let mut max_err = 0.0_f64;
    let mut separated = 0;
    for kind in 0..3 {
        for _ in 0..1000 {
            let c = random_capsule(&mut rng);
            let shape = random_shape(kind, &mut rng);
            let got = distance_capsule_barrier(&c, &shape);
            let want = oracle_distance(&c, &shape);
            if (got < 0.0) != (want < 0.0) {
                sign_mismatch += 1;
            }
            if want > 0.0 {
                separated += 1;
                max_err = max_err.max((got - want).abs());
            }
        }
    }
    let elapsed = started.elapsed();
    verdict(
        sign_mismatch == 0 && max_err <= 1e-3 && elapsed < Duration::from_secs(30),
        format!(
            "3000 pairs, sign mismatches {sign_mismatch}, max separated error {max_err:.2e} m over {separated}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---- kinematics -----------------------------------------------------------

fn kinematics() -> Verdict {
    let started = Instant::now();
    let cobot = arm("cobot6.json");
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 1e-6;
    let mut jac_err = 0.0_f64;
    for _ in 0..100 {
        let q = cobot.random_config(&mut rng);
        let jac = cobot.jacobian_position(&q).unwrap();
        for j in 0..cobot.dof() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp.0[j] += h;
            qm.0[j] -= h;
            let fd = (cobot.ee_position(&qp).unwrap() - cobot.ee_position(&qm).unwrap()) / (2.0 * h);
            for r in 0..3 {
                jac_err = jac_err.max((jac[(r, j)] - fd[r]).abs());
            }
        }
    }
    let mut ik_err = 0.0_f64;
    let mut ik_failures = 0;
    let seed = JointConfig::zeros(cobot.dof());
    for i in 0..100 {
        let target = cobot.ee_position(&cobot.random_config(&mut rng)).unwrap();
        let opts = IkOptions { rng_seed: i, ..IkOptions::default() };
        match cobot.solve_ik(target, &seed, opts) {
            Ok(q) => ik_err = ik_err.max((cobot.ee_position(&q).unwrap() - target).norm()),
            Err(_) => ik_failures += 1,
        }
    }
    let planar = arm("planar2.json");
    let mut fk_err = 0.0_f64;
    for _ in 0..100 {
        let (a, b) = (rng.random_range(-3.1..3.1), rng.random_range(-3.1..3.1));
        let p = planar.ee_position(&JointConfig(vec![a, b])).unwrap();
        let want = v(a.cos() + (a + b).cos(), a.sin() + (a + b).sin(), 0.0);
        fk_err = fk_err.max((p - want).amax());
    }
    let elapsed = started.elapsed();
    verdict(
        jac_err <= 1e-5
            && ik_failures == 0
            && ik_err <= 1e-4
            && fk_err <= 1e-12
            && elapsed < Duration::from_secs(10),
        format!(
            "jacobian {jac_err:.2e}, IK residual {ik_err:.2e} m ({ik_failures} failures), planar FK {fk_err:.1e}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---- planner --------------------------------------------------------------

const D_SAFE: f64 = 0.05;
const EPS_Q: f64 = 0.05;

fn snapshot_of(shape: BarrierShape) -> WorldSnapshot {
    let b = Barrier {
        id: BarrierId("block".into()),
        kind: BarrierKind::Obstacle,
        shape,
        label: None,
    };
    WorldSnapshot::new(1, vec![b], 0.0)
}

struct Scene {
    start: JointConfig,
    goal: JointConfig,
    snapshot: WorldSnapshot,
}

/// A scene whose straight line is blocked but which a one-via detour solves.
fn blocked_scene(arm: &ArmDescription, rng: &mut ChaCha8Rng) -> Scene {
    loop {
        let start = arm.random_config(rng);
        let goal = arm.random_config(rng);
        if start.distance(&goal) < 1.0 {
            continue;
        }
        let mid = start.lerp(&goal, rng.random_range(0.3..0.7));
        let fk = arm.forward_kinematics(&mid).unwrap();
        let frame = rng.random_range(2..fk.link_frames.len());
        let c = fk.link_frames[frame].position;
        let shape = if rng.random_bool(0.5) {
            BarrierShape::Sphere(Sphere { center: c, radius: rng.random_range(0.06..0.12) })
        } else {
            let r = rng.random_range(0.05..0.1);
            BarrierShape::OrientedBox(OrientedBox {
                pose: Pose::new(c, UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..1.5))),
                half_extents: v(r, r, r),
            })
        };
        let snap = snapshot_of(shape);
        if !config_valid(arm, &start, &snap, D_SAFE).unwrap()
            || !config_valid(arm, &goal, &snap, D_SAFE).unwrap()
            || path_valid(arm, &[start.clone(), goal.clone()], &snap, D_SAFE, EPS_Q).unwrap().valid
        {
            continue;
        }
        let certified = (0..300).any(|_| {
            let via = arm.random_config(rng);
            path_valid(arm, &[start.clone(), via, goal.clone()], &snap, D_SAFE, EPS_Q / 10.0)
                .unwrap()
                .valid
        });
        if certified {
            return Scene { start, goal, snapshot: snap };
        }
    }
}

fn planner_validity() -> Verdict {
    let started = Instant::now();
    let cobot = arm("cobot6.json");
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let scenes: Vec<Scene> = (0..50).map(|_| blocked_scene(&cobot, &mut rng)).collect();
    let cfg = PlannerConfig { enforce_wall_clock: true, ..PlannerConfig::default() };
    let (mut solved, mut invalid, mut slowest) = (0, 0, 0.0_f64);
    for (i, scene) in scenes.into_iter().enumerate() {
        let req = PlanRequest {
            start: scene.start.clone(),
            goal: Goal::Config(scene.goal.clone()),
            snapshot: Arc::new(scene.snapshot),
            d_safe: D_SAFE,
            eps_q: EPS_Q,
            time_budget: 2.0,
            rng_seed: i as u64,
            recovery: false,
        };
        let t = Instant::now();
        let result = plan_subpath(&cobot, &req, &cfg, None);
        let took = t.elapsed().as_secs_f64();
        slowest = slowest.max(took);
        if let Ok(path) = result {
            if took <= 2.0 {
                solved += 1;
            }
            let ends_ok = path.start() == &scene.start && path.end() == &scene.goal;
            let report = path_valid(&cobot, &path.knots, &req.snapshot, D_SAFE, EPS_Q / 10.0).unwrap();
            if !(ends_ok && report.valid) {
                invalid += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    verdict(
        solved >= 48 && invalid == 0 && elapsed < Duration::from_secs(180),
        format!(
            "{solved}/50 solved within 2 s, {invalid} invalid at eps_q/10, slowest {slowest:.2} s, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---- monitor latency ------------------------------------------------------

fn monitor_latency() -> Verdict {
    let loaded = scenario("scenario_paper_table.json");
    let period = 1.0 / loaded.spec.monitor.tick_hz;
    let mut worst = 0.0_f64;
    let mut misses = Vec::new();
    for &t0 in &[1.0, 3.3, 6.1, 8.9, 12.2, 14.6, 17.5] {
        let mut sim = Simulation::new(&loaded).unwrap();
        let parked = BarrierSpec {
            id: Some("probe".into()),
            shape: BarrierShape::Sphere(Sphere { center: v(-1.2, -1.2, 1.4), radius: 0.05 }),
            label: None,
        };
        sim.spawn_obstacle(&parked).unwrap();
        sim.lock_path().unwrap();
        sim.execute().unwrap();
        while sim.time() < t0 - 1e-9 {
            sim.step();
        }
        let t_teleport = sim.time();
        let current = sim.mission().current_subpath.unwrap();
        let traj = sim.mission().subpaths[current].trajectory.clone();
        let target = sim.arm().ee_position(&traj.sample(0.999 * traj.duration())).unwrap();
        sim.transform_barrier(&"probe".into(), Pose::new(target, UnitQuaternion::identity()), v(1.0, 1.0, 1.0))
            .unwrap();
        // first tick boundary after the teleport
        let boundary = ((t_teleport / period).floor() + 1.0) * period;
        let ticks_before = sim.metrics().monitor_ticks;
        loop {
            sim.step();
            if sim.metrics().monitor_ticks > ticks_before {
                break;
            }
        }
        let t_tick = sim.time();
        let stopped = sim
            .last_actions()
            .iter()
            .any(|a| matches!(a, MonitorAction::StopAndReplanCurrent { .. }));
        let latency = t_tick - t_teleport;
        worst = worst.max(latency);
        let on_boundary = t_tick >= boundary - 1e-9 && t_tick < boundary + sim.spec().sim.dt;
        if !(stopped && on_boundary && latency <= 1.334) {
            misses.push(format!("t0={t0}"));
        }
    }
    verdict(
        misses.is_empty(),
        format!("7 teleports, worst latency {worst:.3} s, misses [{}]", misses.join(", ")),
    )
}

// ---- scenarios ------------------------------------------------------------

struct Run {
    sim: Simulation,
}

fn run(name: &str) -> Run {
    let loaded = scenario(name);
    let mut sim = Simulation::new(&loaded).unwrap();
    sim.lock_path().unwrap();
    sim.execute().unwrap();
    sim.run_to_end(loaded.spec.sim.max_time);
    Run { sim }
}

fn person_crossing() -> Verdict {
    let loaded = scenario("scenario_crossing.json");
    let speed = loaded.spec.person_script.max_speed();
    let r = run("scenario_crossing.json");
    let m = r.sim.metrics();
    let completed = r.sim.mission().completed_count();
    let t = m.completion_time.unwrap_or(f64::INFINITY);
    verdict(
        m.outcome == Outcome::Done
            && completed == 8
            && m.ground_truth_collision_count == 0
            && m.stop_count >= 1
            && speed <= 1.0
            && t < 120.0,
        format!(
            "{:?}, {completed}/8 waypoints, collisions {}, stops {}, person {speed:.2} m/s, {t:.2} s sim",
            m.outcome, m.ground_truth_collision_count, m.stop_count
        ),
    )
}

fn replan_ahead() -> Verdict {
    let r = run("scenario_replan_ahead.json");
    let m = r.sim.metrics();
    // the first monitor reaction after the spawn must only touch future sub-paths
    let spawn = m.events.iter().position(|e| e.event == "barrier_spawned");
    let reaction = spawn.and_then(|i| m.events[i..].iter().find(|e| e.event == "monitor"));
    let future_only = reaction.is_some_and(|e| {
        e.detail.contains("replan_future") && !e.detail.contains("stop_and_replan_current")
    });
    verdict(
        m.outcome == Outcome::Done
            && m.stop_count == 0
            && m.replan_count_future >= 1
            && m.ground_truth_collision_count == 0
            && future_only,
        format!(
            "{:?}, stops {}, future replans {}, collisions {}, reaction {:?}",
            m.outcome,
            m.stop_count,
            m.replan_count_future,
            m.ground_truth_collision_count,
            reaction.map(|e| e.detail.as_str()).unwrap_or("none")
        ),
    )
}

fn chain_continuity() -> Verdict {
    let mut bad = Vec::new();
    let mut records = 0;
    for name in BUNDLED {
        let r = run(name);
        let mission = r.sim.mission();
        records += mission.stop_records.len();
        let resumed_exactly = mission.stop_records.iter().all(|s| s.halted_q == s.new_start);
        if !mission.chain_continuous() || !resumed_exactly {
            bad.push(name);
        }
    }
    verdict(
        bad.is_empty() && records >= 1,
        format!("3 scenarios, {records} stop-and-replans checked, broken {bad:?}"),
    )
}

fn cli_run(scenario: &Path, out: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_vbarrier"))
        .arg("run")
        .arg("--scenario")
        .arg(scenario)
        .arg("--metrics")
        .arg(out)
        .output()
        .expect("cli runs");
    assert!(status.status.code().is_some(), "cli terminated by signal");
    std::fs::read(out).unwrap_or_default()
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut differing = Vec::new();
    for name in BUNDLED {
        let path = data_dir().join("scenarios").join(name);
        let a = cli_run(&path, &dir.path().join("a.json"));
        let b = cli_run(&path, &dir.path().join("b.json"));
        if a.is_empty() || a != b {
            differing.push(name);
        }
    }
    verdict(differing.is_empty(), format!("3 scenarios run twice, differing {differing:?}"))
}

fn table_scenario() -> Verdict {
    let r = run("scenario_paper_table.json");
    let m = r.sim.metrics();
    let t = m.completion_time.unwrap_or(f64::INFINITY);
    verdict(
        m.outcome == Outcome::Done && m.ground_truth_collision_count == 0 && t < 300.0,
        format!(
            "{:?}, {} waypoints, collisions {}, {t:.2} s sim",
            m.outcome,
            r.sim.mission().completed_count(),
            m.ground_truth_collision_count
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("geometry oracle", geometry_oracle),
        ("kinematics", kinematics),
        ("planner validity", planner_validity),
        ("monitor latency", monitor_latency),
        ("person crossing", person_crossing),
        ("replan ahead", replan_ahead),
        ("chain continuity", chain_continuity),
        ("determinism", determinism),
        ("table scenario", table_scenario),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

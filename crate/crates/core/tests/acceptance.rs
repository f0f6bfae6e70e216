//! Acceptance suite: one test per top-level criterion, each printing a
//! PASS/FAIL line with the measured numbers. Run with `--nocapture` to see
//! the lines of passing tests.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::Rng;

use narrowgap::dynamics::{
    actuator_response, fit_thrust_map, integrate_step, throttle_from_thrust, thrust_from_throttle, ActuatorOutput,
    CalibrationSample, CommandHistory, CommandSetpoint, DynamicsParams, QuadrotorState, ResponseParams,
    ThrustMapParams, CONTROL_DT,
};
use narrowgap::env::{
    generate_dataset, BatchEnv, Env, EpisodeConfig, HoverPolicy, Policy, ResetSource, SeedGenConfig,
    SeedTrajectoryDataset,
};
use narrowgap::geometry::{clearance_check, Clearance, ColliderSpec, GapShape, GapSpec};
use narrowgap::planner::{monte_carlo_success, BaselineConfig, MonteCarloGrid};
use narrowgap::randomization::{maybe_spawn_perturbation, PerturbationConfig, PerturbationState};
use narrowgap::reward::{speed_reward, traversing_reward, RewardConfig};
use narrowgap::seeding::rng_from;
use narrowgap::sensing::{render_mask_with, CameraModel, MaskImage, RenderConfig};

fn report(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn random_attitude<R: Rng>(rng: &mut R, roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(
        rng.random_range(-roll..=roll),
        rng.random_range(-pitch..=pitch),
        rng.random_range(-yaw..=yaw),
    )
}

// ---------------------------------------------------------------- integrator

fn state_error(a: &QuadrotorState, b: &QuadrotorState) -> f64 {
    (a.position - b.position).norm()
        + (a.velocity - b.velocity).norm()
        + (a.bodyrate - b.bodyrate).norm()
        + a.attitude.angle_to(&b.attitude)
}

/// Integrate a command profile held constant over each control interval,
/// with `n` RK4 steps per interval.
fn integrate_profile(start: &QuadrotorState, cmds: &[ActuatorOutput], n: usize, params: &DynamicsParams) -> QuadrotorState {
    let dt = CONTROL_DT / n as f64;
    let mut s = *start;
    for c in cmds {
        for _ in 0..n {
            s = integrate_step(&s, c, params, &Vector3::zeros(), dt).unwrap();
        }
    }
    s
}

#[test]
fn integrator_fourth_order() {
    let t0 = Instant::now();
    let mut rng = rng_from(101);
    let params = DynamicsParams::default();
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        // smooth profile: a few sinusoids per channel, sampled per interval
        let amp: [f64; 4] = std::array::from_fn(|i| if i == 0 { 3.0 } else { rng.random_range(0.5..2.0) });
        let freq: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.5..3.0));
        let phase: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
        let cmds: Vec<ActuatorOutput> = (0..60)
            .map(|k| {
                let t = k as f64 * CONTROL_DT;
                let v: [f64; 4] = std::array::from_fn(|i| amp[i] * (2.0 * PI * freq[i] * t + phase[i]).sin());
                ActuatorOutput::from_array([9.81 + v[0], v[1], v[2], v[3]])
            })
            .collect();
        let start = QuadrotorState {
            velocity: Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0),
            attitude: random_attitude(&mut rng, 0.5, 0.5, PI),
            ..QuadrotorState::at_rest(Vector3::new(0.0, 0.0, 2.0))
        };
        let reference = integrate_profile(&start, &cmds, 64, &params);
        let coarse = state_error(&integrate_profile(&start, &cmds, 1, &params), &reference);
        let fine = state_error(&integrate_profile(&start, &cmds, 2, &params), &reference);
        worst = worst.min(coarse / fine);
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        "integrator fourth order",
        worst >= 8.0 && secs < 10.0,
        format!("min error ratio {worst:.2} (>= 8) over 20 profiles, {secs:.2}s (< 10s)"),
    );
}

// ---------------------------------------------------------- collision oracle

type P2 = Vector2<f64>;

/// Passable-region geometry rebuilt from the shape parameters, without the
/// library's region code.
enum OracleShape {
    Convex(Vec<P2>),
    Ellipse(f64, f64),
    Arch { hw: f64, bottom: f64, spring: f64, r: f64 },
}

fn ccw(mut v: Vec<P2>) -> Vec<P2> {
    let area: f64 = (0..v.len())
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            a.x * b.y - a.y * b.x
        })
        .sum();
    if area < 0.0 {
        v.reverse();
    }
    v
}

fn oracle_shape(shape: &GapShape) -> OracleShape {
    match *shape {
        GapShape::Rectangle { width, height } => {
            let (w, h) = (width / 2.0, height / 2.0);
            OracleShape::Convex(ccw(vec![P2::new(-w, -h), P2::new(w, -h), P2::new(w, h), P2::new(-w, h)]))
        }
        GapShape::Triangle { vertices } => OracleShape::Convex(ccw(vertices.iter().map(|v| P2::new(v[0], v[1])).collect())),
        GapShape::Parallelogram { base, side, angle } => {
            let e = P2::new(side * angle.cos(), side * angle.sin());
            let c = (P2::new(base, 0.0) + e) / 2.0;
            OracleShape::Convex(ccw(vec![-c, P2::new(base, 0.0) - c, P2::new(base, 0.0) + e - c, e - c]))
        }
        GapShape::Diamond { width, height } => {
            let (w, h) = (width / 2.0, height / 2.0);
            OracleShape::Convex(ccw(vec![P2::new(w, 0.0), P2::new(0.0, h), P2::new(-w, 0.0), P2::new(0.0, -h)]))
        }
        GapShape::Ellipse { a, b } => OracleShape::Ellipse(a, b),
        GapShape::Arch { radius, leg_height, width } => {
            let bottom = -(leg_height + radius) / 2.0;
            OracleShape::Arch {
                hw: width / 2.0,
                bottom,
                spring: bottom + leg_height,
                r: radius,
            }
        }
    }
}

impl OracleShape {
    fn contains(&self, p: &P2) -> bool {
        match self {
            OracleShape::Convex(v) => (0..v.len()).all(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                (b - a).perp(&(p - a)) >= -1e-12
            }),
            OracleShape::Ellipse(a, b) => (p.x / a).powi(2) + (p.y / b).powi(2) <= 1.0 + 1e-12,
            OracleShape::Arch { hw, bottom, spring, r } => {
                (p.x.abs() <= hw + 1e-12 && p.y >= bottom - 1e-12 && p.y <= spring + 1e-12)
                    || (p.y >= spring - 1e-12 && (p - P2::new(0.0, *spring)).norm() <= r + 1e-12)
            }
        }
    }

    /// Dense boundary polyline, closed.
    fn boundary(&self, n: usize) -> Vec<P2> {
        let lerp_loop = |v: &[P2]| -> Vec<P2> {
            let per = n / v.len();
            (0..v.len())
                .flat_map(|i| {
                    let (a, b) = (v[i], v[(i + 1) % v.len()]);
                    (0..per).map(move |k| a + (b - a) * (k as f64 / per as f64))
                })
                .collect()
        };
        match self {
            OracleShape::Convex(v) => lerp_loop(v),
            OracleShape::Ellipse(a, b) => (0..n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    P2::new(a * t.cos(), b * t.sin())
                })
                .collect(),
            OracleShape::Arch { hw, bottom, spring, r } => {
                // legs and floor, then the arc from the right spring point over the top
                let mut pts = lerp_loop(&[P2::new(-hw, *spring), P2::new(-hw, *bottom), P2::new(*hw, *bottom), P2::new(*hw, *spring)]);
                pts.pop();
                let m = n / 2;
                for k in 0..=m {
                    let t = PI * k as f64 / m as f64;
                    pts.push(P2::new(r * t.cos(), spring + r * t.sin()));
                }
                // shoulders between disc and legs when the disc is narrower or wider
                pts.push(P2::new(-hw, *spring));
                pts
            }
        }
    }
}

fn seg_dist(p: &P2, a: &P2, b: &P2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared().max(1e-300)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn boundary_distance(p: &P2, boundary: &[P2]) -> f64 {
    (0..boundary.len())
        .map(|i| seg_dist(p, &boundary[i], &boundary[(i + 1) % boundary.len()]))
        .fold(f64::INFINITY, f64::min)
}

/// Points of the collider surface lying on the gap plane, in plane
/// coordinates: each box face is clipped against the plane separately.
fn sampled_cross_section(state: &QuadrotorState, gap: &GapSpec, collider: &ColliderSpec, total: usize) -> Vec<P2> {
    let frame = gap.frame();
    let h = collider.half_extents;
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let mut out = Vec::new();
    let per_face = total / 6;
    for k in 0..3 {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        for s in [-1.0, 1.0] {
            let world = |a: f64, b: f64| {
                state.position + state.attitude * (axes[k] * (s * h[k]) + axes[i] * (a * h[i]) + axes[j] * (b * h[j]))
            };
            // plane distance is affine on the face: c0 + a ca + b cb
            let d = |p: Vector3<f64>| frame.to_local(&p).x;
            let c0 = d(world(0.0, 0.0));
            let ca = d(world(1.0, 0.0)) - c0;
            let cb = d(world(0.0, 1.0)) - c0;
            let (swap, (c1, c2)) = if cb.abs() >= ca.abs() { (false, (ca, cb)) } else { (true, (cb, ca)) };
            if c2.abs() < 1e-15 {
                continue;
            }
            // other = -(c0 + u c1) / c2 must lie in [-1, 1]
            let (mut lo, mut hi) = (-1.0f64, 1.0f64);
            if c1.abs() > 1e-15 {
                let u1 = (-c2 - c0) / c1;
                let u2 = (c2 - c0) / c1;
                lo = lo.max(u1.min(u2));
                hi = hi.min(u1.max(u2));
            } else if (c0 / c2).abs() > 1.0 {
                continue;
            }
            if lo > hi {
                continue;
            }
            for m in 0..per_face {
                let u = lo + (hi - lo) * m as f64 / (per_face - 1) as f64;
                let v = (-(c0 + u * c1) / c2).clamp(-1.0, 1.0);
                let (a, b) = if swap { (v, u) } else { (u, v) };
                let l = frame.to_local(&world(a, b));
                out.push(P2::new(l.y, l.z));
            }
        }
    }
    out
}

#[test]
fn collision_checker_matches_sampling_oracle() {
    let t0 = Instant::now();
    let shapes = [
        GapShape::default_rectangle(),
        GapShape::default_triangle(),
        GapShape::default_parallelogram(),
        GapShape::default_ellipse(),
        GapShape::default_diamond(),
        GapShape::default_arch(),
    ];
    let collider = ColliderSpec::default();
    let mut rng = rng_from(202);
    let poses_per_shape = 100_000 / shapes.len() + 1;
    let (mut total, mut disagreements, mut far) = (0usize, 0usize, 0usize);
    let mut classes = [0usize; 3];
    let mut worst_far = 0.0f64;
    for shape in &shapes {
        let oracle = oracle_shape(shape);
        let boundary = oracle.boundary(20_000);
        for _ in 0..poses_per_shape {
            let roll = rng.random_range(-PI..PI);
            let gap = GapSpec::new(Vector3::new(0.0, 0.0, 1.5), roll, shape.clone());
            // half the poses roughly aligned with the gap so in-plane passes occur
            let aligned = rng.random_bool(0.5);
            let (lat, att) = if aligned {
                (0.12, UnitQuaternion::from_euler_angles(roll + rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
            } else {
                (0.5, random_attitude(&mut rng, PI, 1.2, PI))
            };
            let state = QuadrotorState {
                position: gap.center + Vector3::new(rng.random_range(-0.25..0.25), rng.random_range(-lat..lat), rng.random_range(-lat..lat)),
                attitude: att,
                ..QuadrotorState::at_rest(Vector3::zeros())
            };
            let got = clearance_check(&state, &gap, &collider).class;
            let pts = sampled_cross_section(&state, &gap, &collider, 10_000);
            let want = if pts.is_empty() {
                Clearance::Free
            } else if pts.iter().all(|p| oracle.contains(p)) {
                Clearance::InPlaneSafe
            } else {
                Clearance::Collision
            };
            total += 1;
            classes[want as usize] += 1;
            if got != want {
                disagreements += 1;
                let d = pts.iter().map(|p| boundary_distance(p, &boundary)).fold(f64::INFINITY, f64::min);
                if d > 1e-3 {
                    far += 1;
                    worst_far = worst_far.max(d);
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        "collision oracle",
        far == 0 && total >= 100_000 && secs < 300.0,
        format!(
            "{total} poses (free/in-plane/collision {classes:?}), {disagreements} disagreements, {far} beyond 1 mm (worst {worst_far:.2e} m), {secs:.1}s (< 300s)"
        ),
    );
}

// -------------------------------------------------------------------- reward

#[test]
fn reward_telescopes_on_clean_pass() {
    let cfg = RewardConfig::default();
    let mut rng = rng_from(303);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        // monotone pass from well before the plane to well past it, with
        // random step lengths (some jumping most of the band)
        let mut x = rng.random_range(-1.5..-0.3);
        let mut sum = 0.0;
        while x < 0.5 {
            let next = x + rng.random_range(0.0..0.35);
            sum += traversing_reward(x, next, false, 0.0, 0.0, &cfg);
            x = next;
        }
        worst = worst.max((sum - 4.0).abs());
    }
    report("reward telescoping", worst <= 1e-9, format!("max |sum - 4.0| = {worst:.2e} over 1000 passes (<= 1e-9)"));
}

#[test]
fn speed_term_values() {
    let cfg = RewardConfig::default();
    let (r0, r4) = (speed_reward(0.0, &cfg), speed_reward(4.0, &cfg));
    report(
        "speed term",
        (r0 - 0.049084).abs() <= 1e-6 && r4 == 0.0,
        format!("r(0) = {r0:.7} (0.049084 ± 1e-6), r(4) = {r4}"),
    );
}

// ------------------------------------------------------------------ actuator

fn run_response(params: &ResponseParams, inputs: &[[f64; 4]]) -> Vec<[f64; 4]> {
    let mut hist = CommandHistory::prefilled(params.required_history(), CommandSetpoint::from_array([0.0; 4]));
    inputs
        .iter()
        .map(|c| {
            hist.push(CommandSetpoint::from_array(*c));
            actuator_response(&hist, params, &[1.0; 4]).unwrap().to_array()
        })
        .collect()
}

#[test]
fn actuator_delay_ramp_linearity() {
    let mut rng = rng_from(404);
    let mut problems = Vec::new();
    let k0 = 5;
    for h in 1..=4 {
        for w in 1..=4 {
            let params = ResponseParams { delay: [h, h + 1, h, h + 2], window: w };
            let inputs: Vec<[f64; 4]> = (0..30).map(|k| if k >= k0 { [1.0; 4] } else { [0.0; 4] }).collect();
            let out = run_response(&params, &inputs);
            for n in 0..4 {
                let hn = params.delay[n];
                let first = out.iter().position(|o| o[n] != 0.0).unwrap();
                let full = out.iter().position(|o| o[n] == 1.0).unwrap();
                if first != k0 + hn {
                    problems.push(format!("h={hn} w={w}: delay {}", first - k0));
                }
                if full - first + 1 != w {
                    problems.push(format!("h={hn} w={w}: ramp {}", full - first + 1));
                }
            }
        }
    }
    let mut worst_lin = 0.0f64;
    for _ in 0..200 {
        let params = ResponseParams {
            delay: std::array::from_fn(|_| rng.random_range(1..=4)),
            window: rng.random_range(1..=5),
        };
        let x: Vec<[f64; 4]> = (0..20).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
        let y: Vec<[f64; 4]> = (0..20).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mix: Vec<[f64; 4]> = x.iter().zip(&y).map(|(p, q)| std::array::from_fn(|i| a * p[i] + b * q[i])).collect();
        let (rx, ry, rm) = (run_response(&params, &x), run_response(&params, &y), run_response(&params, &mix));
        for k in 0..20 {
            for i in 0..4 {
                worst_lin = worst_lin.max((rm[k][i] - (a * rx[k][i] + b * ry[k][i])).abs());
            }
        }
    }
    report(
        "actuator model",
        problems.is_empty() && worst_lin <= 1e-12,
        format!("delay/ramp mismatches {problems:?}, max linearity error {worst_lin:.2e} (<= 1e-12)"),
    );
}

// ---------------------------------------------------------------- thrust map

#[test]
fn thrust_map_fit_and_round_trip() {
    let truths = [(2.6, 1.0, 0.35), (2.3, 1.4, 0.42), (1.1, 1.9, 0.1), (3.5, 0.7, 0.8)];
    let mut worst_fit = 0.0f64;
    let mut worst_rt = 0.0f64;
    for (l1, l2, l3) in truths {
        let truth = ThrustMapParams { lambda1: l1, lambda2: l2, lambda3: l3, ..ThrustMapParams::default() };
        let mut samples = Vec::new();
        for vi in 0..6 {
            let voltage = 13.0 + 3.8 * vi as f64 / 5.0;
            for ti in 1..=10 {
                let throttle = ti as f64 / 10.0;
                let thrust = thrust_from_throttle(throttle, voltage, &truth).unwrap();
                samples.push(CalibrationSample { voltage, throttle, thrust });
            }
        }
        let fit = fit_thrust_map(&samples).unwrap().params;
        worst_fit = worst_fit
            .max((fit.lambda1 - l1).abs())
            .max((fit.lambda2 - l2).abs())
            .max((fit.lambda3 - l3).abs());
        for k in 0..=1000 {
            let throttle = k as f64 / 1000.0;
            for voltage in [13.0, 14.7, 16.8] {
                let t = thrust_from_throttle(throttle, voltage, &truth).unwrap();
                worst_rt = worst_rt.max((throttle_from_thrust(t, voltage, &truth).unwrap() - throttle).abs());
            }
        }
    }
    report(
        "thrust map",
        worst_fit <= 1e-6 && worst_rt <= 1e-10,
        format!("max parameter error {worst_fit:.2e} (<= 1e-6), max round trip error {worst_rt:.2e} (<= 1e-10)"),
    );
}

// ------------------------------------------------------------ informed reset

#[test]
fn informed_reset_fraction() {
    let cfg = Arc::new(EpisodeConfig::default().resolve().unwrap());
    let data = generate_dataset(&cfg.track, 16, &cfg.episode.collider, &SeedGenConfig::default(), &mut rng_from(505)).unwrap();
    let mut env = Env::new(cfg, Arc::new(data));
    let n = 10_000u64;
    let informed = (0..n)
        .filter(|&s| env.reset(s).unwrap().info.reset_source == ResetSource::Dataset)
        .count();
    let f = informed as f64 / n as f64;
    report("informed reset", (f - 0.5).abs() <= 0.02, format!("dataset fraction {f:.4} over {n} resets (0.50 ± 0.02)"));
}

// -------------------------------------------------------------- perturbation

#[test]
fn perturbation_eligibility() {
    let cfg = PerturbationConfig::default();
    let mut rng = rng_from(606);
    let idle = PerturbationState::default();
    let (mut ineligible, mut bad_spawns, mut eligible, mut spawns) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..1_000_000 {
        let x_g = rng.random_range(-4.0..4.0);
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let rate = if dir.norm() > 1e-9 { dir.normalize() * rng.random_range(0.0..6.0) } else { Vector3::zeros() };
        let state = QuadrotorState { bodyrate: rate, ..QuadrotorState::at_rest(Vector3::zeros()) };
        let next = maybe_spawn_perturbation(&mut rng, &state, x_g, &idle, &cfg);
        if x_g.abs() <= 1.5 || rate.norm() >= 3.0 {
            ineligible += 1;
            bad_spawns += next.active as usize;
        } else {
            eligible += 1;
            spawns += next.active as usize;
        }
    }
    let rate = spawns as f64 / eligible as f64;
    report(
        "perturbation eligibility",
        bad_spawns == 0 && (rate - 0.10).abs() <= 0.005,
        format!("{bad_spawns} spawns in {ineligible} ineligible steps, eligible spawn rate {rate:.4} over {eligible} (0.10 ± 0.005)"),
    );
}

// ---------------------------------------------------------------------- mask

/// Signed distance of `p` to a convex counterclockwise polygon (negative inside).
fn polygon_sdf(p: &P2, v: &[P2]) -> f64 {
    let n = v.len();
    let inside = (0..n).all(|i| (v[(i + 1) % n] - v[i]).perp(&(p - v[i])) >= 0.0);
    let d = (0..n).map(|i| seg_dist(p, &v[i], &v[(i + 1) % n])).fold(f64::INFINITY, f64::min);
    if inside {
        -d
    } else {
        d
    }
}

fn project_rect(state: &QuadrotorState, gap: &GapSpec, cam: &CameraModel, hw: f64, hh: f64) -> Option<Vec<P2>> {
    let frame = gap.frame();
    let corners = [P2::new(-hw, -hh), P2::new(hw, -hh), P2::new(hw, hh), P2::new(-hw, hh)];
    let px: Option<Vec<P2>> = corners
        .iter()
        .map(|c| {
            let w = frame.plane_to_world(c);
            cam.project(&(state.attitude.inverse() * (w - state.position)))
        })
        .collect();
    px.map(ccw)
}

#[test]
fn mask_corners_match_pinhole_projection() {
    let cam = CameraModel::default();
    let render = RenderConfig { border: 0.15, max_range: 10.0 };
    let (width, height) = (0.6, 0.2);
    let shape = GapShape::Rectangle { width, height };
    let mut rng = rng_from(707);
    let (mut poses, mut bad_pixels, mut checked) = (0usize, 0usize, 0usize);
    while poses < 500 {
        let gap = GapSpec::new(Vector3::new(0.0, 0.0, 1.5), rng.random_range(-1.2..1.2), shape.clone());
        let state = QuadrotorState {
            attitude: random_attitude(&mut rng, 0.4, 0.25, 0.25),
            ..QuadrotorState::at_rest(Vector3::new(rng.random_range(-6.0..-1.5), rng.random_range(-0.4..0.4), rng.random_range(1.2..1.8)))
        };
        let (Some(inner), Some(outer)) = (
            project_rect(&state, &gap, &cam, width / 2.0, height / 2.0),
            project_rect(&state, &gap, &cam, width / 2.0 + render.border, height / 2.0 + render.border),
        ) else {
            continue;
        };
        let margin = 4.0;
        if !outer.iter().all(|q| q.x > margin && q.y > margin && q.x < cam.width as f64 - margin && q.y < cam.height as f64 - margin) {
            continue;
        }
        poses += 1;
        let mask = render_mask_with(&state, &gap, &cam, &render);
        // around every corner, pixels more than 1 px from the analytic frame
        // boundary must match the analytic inside/outside classification
        for q in inner.iter().chain(&outer) {
            for v in (q.y as i64 - 4)..=(q.y as i64 + 4) {
                for u in (q.x as i64 - 4)..=(q.x as i64 + 4) {
                    if u < 0 || v < 0 || u >= cam.width as i64 || v >= cam.height as i64 {
                        continue;
                    }
                    let c = P2::new(u as f64 + 0.5, v as f64 + 0.5);
                    let (so, si) = (polygon_sdf(&c, &outer), polygon_sdf(&c, &inner));
                    if so.abs() <= 1.0 || si.abs() <= 1.0 {
                        continue;
                    }
                    checked += 1;
                    let expect = so < 0.0 && si > 0.0;
                    if (mask.get(u as u32, v as u32) == 1) != expect {
                        bad_pixels += 1;
                    }
                }
            }
        }
    }
    // gap behind the camera and gap far outside the field of view
    let gap = GapSpec::new(Vector3::new(0.0, 0.0, 1.5), 0.3, shape);
    let behind = QuadrotorState::at_rest(Vector3::new(1.0, 0.0, 1.5));
    let aside = QuadrotorState {
        attitude: UnitQuaternion::from_euler_angles(0.0, 0.0, 1.6),
        ..QuadrotorState::at_rest(Vector3::new(-2.0, 0.0, 1.5))
    };
    let blank = |s: &QuadrotorState| -> MaskImage { render_mask_with(s, &gap, &cam, &render) };
    let (b1, b2) = (blank(&behind).count(), blank(&aside).count());
    report(
        "mask rendering",
        bad_pixels == 0 && checked > 0 && b1 == 0 && b2 == 0,
        format!("{poses} poses, {bad_pixels}/{checked} corner-neighbourhood pixels off by more than 1 px; behind {b1} px, out of view {b2} px"),
    );
}

// --------------------------------------------------------------- baseline MC

#[test]
fn baseline_monte_carlo_trend() {
    let t0 = Instant::now();
    let grid = MonteCarloGrid::default();
    let cells = monte_carlo_success(&grid, &BaselineConfig::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let mut violations = Vec::new();
    for &delta in &grid.delta {
        for &phi in &grid.phi_gap {
            let mut series: Vec<_> = cells.iter().filter(|c| c.delta == delta && c.phi_gap == phi).collect();
            series.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
            println!(
                "  delta {delta} phi {phi}: {}",
                series.iter().map(|c| format!("eps {} -> {:.3}", c.epsilon, c.success_rate)).collect::<Vec<_>>().join(", ")
            );
            // an increase counts only when the intervals separate
            for w in series.windows(2) {
                if w[1].success_rate > w[0].success_rate && w[1].ci_lo > w[0].ci_hi {
                    violations.push(format!("delta {delta} phi {phi}: eps {} -> {}", w[0].epsilon, w[1].epsilon));
                }
            }
        }
    }
    let zero = cells
        .iter()
        .find(|c| c.epsilon == 0.0 && c.delta == 0.0 && c.phi_gap == 0.0)
        .map(|c| c.success_rate)
        .unwrap_or(f64::NAN);
    report(
        "baseline monte carlo",
        violations.is_empty() && zero == 1.0 && grid.epsilon.len() == 4 && grid.seeds == 200 && secs < 900.0,
        format!("{} cells x {} seeds, increases {violations:?}, zero-noise 0° success {zero}, {secs:.1}s (< 900s)", cells.len(), grid.seeds),
    );
}

// --------------------------------------------------------------- determinism

fn single_log(seed: u64, data: &Arc<SeedTrajectoryDataset>, cfg: &Arc<narrowgap::env::ResolvedConfig>) -> Vec<u8> {
    let mut env = Env::new(cfg.clone(), data.clone());
    env.reset(seed).unwrap();
    let mut out = Vec::new();
    let mut policy = HoverPolicy;
    while !env.is_done() {
        let a = policy.act(&env);
        let a = [a[0] + 0.5 * (env.state().position.z - 1.5).signum(), 0.3, -0.2, 0.1];
        let (_, rec) = env.step_with_record(a).unwrap();
        serde_json::to_writer(&mut out, &rec).unwrap();
        out.push(b'\n');
    }
    out
}

fn batch_log(seeds: &[u64], data: &Arc<SeedTrajectoryDataset>, cfg: &Arc<narrowgap::env::ResolvedConfig>) -> Vec<u8> {
    let mut b = BatchEnv::new(cfg.clone(), data.clone(), seeds.len());
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &b.reset(seeds).unwrap()).unwrap();
    for k in 0..400 {
        let actions: Vec<[f64; 4]> = (0..seeds.len()).map(|i| [9.0 + 0.01 * ((k + i) % 7) as f64, 0.2, -0.1, 0.05]).collect();
        serde_json::to_writer(&mut out, &b.step(&actions).unwrap()).unwrap();
        out.push(b'\n');
    }
    out
}

#[test]
fn deterministic_logs() {
    let cfg = Arc::new(
        EpisodeConfig::from_toml_str("randomization = \"single_distill\"\nobservation = \"mask\"\nhorizon = 240")
            .unwrap()
            .resolve()
            .unwrap(),
    );
    let data = Arc::new(generate_dataset(&cfg.track, 8, &cfg.episode.collider, &SeedGenConfig::default(), &mut rng_from(808)).unwrap());
    let single_ok = (0..8).all(|s| single_log(s, &data, &cfg) == single_log(s, &data, &cfg));
    let seeds = [11, 12, 13, 14, 15, 16];
    let (a, b) = (batch_log(&seeds, &data, &cfg), batch_log(&seeds, &data, &cfg));
    let batch_ok = a == b;
    report(
        "determinism",
        single_ok && batch_ok,
        format!("single-env logs identical: {single_ok}; batched logs identical: {batch_ok} ({} bytes)", a.len()),
    );
}

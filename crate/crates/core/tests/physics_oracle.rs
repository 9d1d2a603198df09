use core::f64::consts::PI;

use proptest::prelude::*;
use pushrl_core::geom::{wrap_angle, Pose2, Vec2};
use pushrl_core::physics::*;

const R: f64 = 0.02;

fn square() -> ConvexShape {
    ConvexShape::square("square", 0.075).unwrap()
}

fn pusher() -> PusherParams {
    PusherParams { tip_radius: R }
}

/// Minimum distance from `q` to the polygon boundary by dense sampling.
fn brute_boundary_distance(shape: &ConvexShape, q: Vec2) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..shape.edge_count() {
        let (a, b) = shape.edge(i);
        for k in 0..=20_000 {
            let p = a + (b - a) * (k as f64 / 20_000.0);
            best = best.min((p - q).norm());
        }
    }
    best
}

#[test]
fn depth_matches_sampled_distance() {
    let s = square();
    // Tip centre 18 mm behind the -x face.
    let pose = Pose2::new(-0.0375 - 0.018 + R, 0.004, 0.0);
    let c = detect_contact(&pose, &pusher(), &s, &Pose2::default()).unwrap();
    let brute = brute_boundary_distance(&s, pusher().tip_center(&pose));
    assert!((c.depth - 0.002).abs() < 1e-12);
    assert!((R - brute - c.depth).abs() < 1e-7);
    assert!((c.normal - Vec2::new(-1.0, 0.0)).norm() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closest_boundary_matches_sampling(sides in 3usize..9, ang in -PI..PI, dist in 0.0..0.08f64) {
        let s = ConvexShape::regular("poly", sides, 0.04).unwrap();
        let q = Vec2::from_angle(ang) * (0.04 + dist);
        let b = s.closest_boundary(q);
        prop_assert!((b.distance - brute_boundary_distance(&s, q)).abs() < 1e-6);
    }
}

/// 3×3 homogeneous transform of a pose.
fn hom(x: f64, y: f64, t: f64) -> [[f64; 3]; 3] {
    [[t.cos(), -t.sin(), x], [t.sin(), t.cos(), y], [0.0, 0.0, 1.0]]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Inverse of a rigid homogeneous transform.
fn hom_inv(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let (c, s) = (m[0][0], m[1][0]);
    let (x, y) = (m[0][2], m[1][2]);
    [[c, s, -(c * x + s * y)], [-s, c, s * x - c * y], [0.0, 0.0, 1.0]]
}

fn surface_oracle(contact: &Contact, pusher_pose: &Pose2) -> (f64, f64, f64) {
    let n_in = -contact.normal;
    let world_contact = hom(contact.point.x, contact.point.y, n_in.y.atan2(n_in.x));
    let m = mat_mul(&hom_inv(&hom(pusher_pose.x, pusher_pose.y, pusher_pose.theta)), &world_contact);
    (m[0][2], m[1][2], m[1][0].atan2(m[0][0]))
}

fn face_contact() -> Contact {
    Contact { point: Vec2::ZERO, normal: Vec2::new(-1.0, 0.0), depth: 0.0, edge_index: 0, mode: ContactMode::Sticking }
}

#[test]
fn surface_pose_identity_for_normal_contact() {
    let sp = surface_pose(&face_contact(), &Pose2::new(0.0, 0.0, 0.0)).unwrap();
    assert_eq!((sp.x, sp.y, sp.theta), (0.0, 0.0, 0.0));
}

#[test]
fn surface_pose_rotated_pusher() {
    let c = face_contact();
    let p = Pose2::new(0.0, 0.0, 10f64.to_radians());
    let sp = surface_pose(&c, &p).unwrap();
    let (x, y, t) = surface_oracle(&c, &p);
    assert!((sp.theta + 10f64.to_radians()).abs() < 1e-12);
    assert!((sp.x - x).abs() < 1e-12 && (sp.y - y).abs() < 1e-12 && (sp.theta - t).abs() < 1e-12);
}

#[test]
fn surface_pose_tangent_shift() {
    let c = face_contact();
    let p = Pose2::new(0.0, -0.005, 0.0);
    let sp = surface_pose(&c, &p).unwrap();
    let (x, y, t) = surface_oracle(&c, &p);
    assert!((sp.y.abs() - 0.005).abs() < 1e-12);
    assert_eq!(sp.theta, 0.0);
    assert!((sp.x - x).abs() < 1e-12 && (sp.y - y).abs() < 1e-12 && (sp.theta - t).abs() < 1e-12);
}

#[test]
fn surface_pose_needs_contact() {
    let mut c = face_contact();
    c.mode = ContactMode::Separated;
    assert_eq!(surface_pose(&c, &Pose2::default()).unwrap_err(), PhysicsError::NoContact);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn surface_pose_agrees_with_homogeneous_transforms(
        px in -0.1..0.1f64, py in -0.1..0.1f64, pt in -PI..PI,
        cx in -0.1..0.1f64, cy in -0.1..0.1f64, na in -PI..PI,
    ) {
        let c = Contact { point: Vec2::new(cx, cy), normal: Vec2::from_angle(na), ..face_contact() };
        let p = Pose2::new(px, py, pt);
        let sp = surface_pose(&c, &p).unwrap();
        let (x, y, t) = surface_oracle(&c, &p);
        prop_assert!((sp.x - x).abs() < 1e-12 && (sp.y - y).abs() < 1e-12);
        prop_assert!(wrap_angle(sp.theta - t).abs() < 1e-12);
    }
}

/// Penalty-contact rigid-body simulation of a slider on a uniformly
/// pressured support, pushed by a kinematic disc at constant velocity.
struct PenaltySim {
    shape: ConvexShape,
    pose: Pose2,
    vel: Vec2,
    omega: f64,
    support: Vec<Vec2>,
    mass: f64,
    inertia: f64,
    mu_ground: f64,
    mu_contact: f64,
}

struct PenaltyResult {
    object: Pose2,
    /// Pusher displacement along the contact face, object frame.
    slip: f64,
}

impl PenaltySim {
    fn new(shape: ConvexShape, mu_contact: f64) -> Self {
        let half = 0.0375;
        let n = 12;
        let mut support = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let p = Vec2::new(-half + (i as f64 + 0.5) * 2.0 * half / n as f64, -half + (j as f64 + 0.5) * 2.0 * half / n as f64);
                if shape.contains(p) {
                    support.push(p);
                }
            }
        }
        let mass = 0.2;
        let inertia = mass * support.iter().map(|p| p.norm_sq()).sum::<f64>() / support.len() as f64;
        Self { shape, pose: Pose2::default(), vel: Vec2::ZERO, omega: 0.0, support, mass, inertia, mu_ground: 0.4, mu_contact }
    }

    fn run(&mut self, start: Vec2, velocity: Vec2, duration: f64) -> PenaltyResult {
        let dt = 2e-6;
        let eps = 2e-3;
        let k = 2e3;
        let g = 9.81;
        let per_point = self.mu_ground * self.mass * g / self.support.len() as f64;
        let steps = (duration / dt) as usize;
        let mut centre = start;
        let local_start = self.pose.inverse_transform_point(centre);
        let mut touched = false;
        for _ in 0..steps {
            let mut force = Vec2::ZERO;
            let mut torque = 0.0;
            let com = self.pose.position();
            for p in &self.support {
                let r = p.rotate(self.pose.theta);
                let v = self.vel + r.perp() * self.omega;
                let f = v * (-per_point / (v.norm_sq() + eps * eps).sqrt());
                force += f;
                torque += r.cross(f);
            }
            let local = self.pose.inverse_transform_point(centre);
            let b = self.shape.closest_boundary(local);
            let pen = R - b.distance;
            if pen > 0.0 {
                let n_out = self.pose.transform_vector(b.normal);
                let point = self.pose.transform_point(b.point);
                let r = point - com;
                let fn_mag = k * pen;
                let v_obj = self.vel + r.perp() * self.omega;
                let rel = velocity - v_obj;
                let t = n_out.perp();
                let vt = rel.dot(t);
                let ft = t * (self.mu_contact * fn_mag * vt / (vt * vt + eps * eps).sqrt());
                let f = -n_out * fn_mag + ft;
                force += f;
                torque += r.cross(f);
                touched = true;
            }
            self.vel += force * (dt / self.mass);
            self.omega += torque * dt / self.inertia;
            let p = self.pose.position() + self.vel * dt;
            self.pose = Pose2::from_parts(p, self.pose.theta + self.omega * dt);
            centre += velocity * dt;
        }
        assert!(touched);
        let pusher_local = self.pose.inverse_transform_point(centre) - local_start;
        PenaltyResult { object: self.pose, slip: pusher_local.y }
    }
}

/// One quasi-static push split into small steps, from the same start.
fn quasi_static_push(contact_y: f64, velocity: Vec2, distance: f64, mu: f64) -> (Pose2, Vec<ContactMode>, f64) {
    let shape = square();
    let mut slider = SliderParams::for_shape(&shape);
    slider.mu_contact = mu;
    let p = pusher();
    let mut object = Pose2::default();
    let mut pusher_pose = Pose2::new(-0.0375 + 0.0005, contact_y, 0.0);
    let start_local = object.inverse_transform_point(p.tip_center(&pusher_pose));
    let steps = 100;
    let d = velocity.normalized() * (distance / steps as f64);
    let mut modes = Vec::new();
    for _ in 0..steps {
        let c = detect_contact(&pusher_pose, &p, &shape, &object).unwrap();
        let local = pusher_pose.inverse_transform_vector(d);
        let s = quasi_static_step(&object, &slider, &c, &pusher_pose, &p, &PusherMotion::new(local.x, local.y, 0.0)).unwrap();
        object = s.object_pose;
        pusher_pose = s.pusher_pose;
        modes.push(s.mode);
    }
    let slip = (object.inverse_transform_point(p.tip_center(&pusher_pose)) - start_local).y;
    (object, modes, slip)
}

#[test]
fn offset_push_rotation_sign_matches_penalty_oracle() {
    for offset in [0.015, -0.015] {
        let (qs, modes, _) = quasi_static_push(offset, Vec2::new(1.0, 0.0), 0.005, 0.3);
        assert!(modes.iter().all(|m| *m == ContactMode::Sticking));
        let mut sim = PenaltySim::new(square(), 0.3);
        let start = Vec2::new(-0.0375 - R + 0.0002, offset);
        let oracle = sim.run(start, Vec2::new(0.05, 0.0), 0.1);
        assert!(oracle.object.theta.abs() > 1e-3);
        assert_eq!(qs.theta.signum(), oracle.object.theta.signum());
        // Pushing left of the centre turns the slider clockwise.
        assert_eq!(qs.theta.signum(), -offset.signum());
    }
}

#[test]
fn steep_push_slides_like_penalty_oracle() {
    for dir in [1.0, -1.0] {
        let v = Vec2::new(0.2, dir).normalized();
        let (qs, modes, slip) = quasi_static_push(0.0, v, 0.005, 0.3);
        let expected = if dir > 0.0 { ContactMode::SlidingLeft } else { ContactMode::SlidingRight };
        assert!(modes.iter().all(|m| *m == expected), "{modes:?}");
        let mut sim = PenaltySim::new(square(), 0.3);
        let oracle = sim.run(Vec2::new(-0.0375 - R + 0.0002, 0.0), v * 0.05, 0.1);
        assert_eq!(slip.signum(), dir);
        assert_eq!(oracle.slip.signum(), dir);
        assert!(oracle.slip.abs() > 1e-3);
        assert_eq!(qs.y.signum(), oracle.object.y.signum());
        assert_eq!(qs.theta.signum(), oracle.object.theta.signum());
    }
}

// ---------------------------------------------------------------------------
// Randomized invariants.

#[derive(Debug, Clone)]
struct Scene {
    object: Pose2,
    slider: SliderParams,
    contact: Contact,
    velocity: Vec2,
}

fn scene() -> impl Strategy<Value = Scene> {
    (
        (0.03..0.12f64, 0.03..0.12f64),
        (-0.2..0.2f64, -0.2..0.2f64, -PI..PI),
        (0.05..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        (-0.99..0.99f64, -PI..PI, 0.0..0.002f64),
    )
        .prop_filter_map("valid slider", |((dx, dy), (ox, oy, ot), (mu, cx, cy), (s, va, speed))| {
            let shape = ConvexShape::rectangle("box", dx, dy).ok()?;
            let cof_offset = Vec2::new(cx, cy) * (0.5 * shape.inradius());
            let slider = SliderParams { mu_contact: mu, c_ls: 0.6 * shape.circumradius(), cof_offset };
            slider.validate(&shape).ok()?;
            let object = Pose2::new(ox, oy, ot);
            let local_point = Vec2::new(-dx / 2.0, s * dy / 2.0);
            let contact = Contact {
                point: object.transform_point(local_point),
                normal: object.transform_vector(Vec2::new(-1.0, 0.0)),
                depth: 0.001,
                edge_index: 0,
                mode: ContactMode::Sticking,
            };
            // Direction measured from the inward normal, covering withdrawal too.
            let velocity = (-contact.normal).rotate(va) * speed;
            Some(Scene { object, slider, contact, velocity })
        })
}

fn approaching(s: &Scene) -> bool {
    s.velocity.dot(-s.contact.normal) > 0.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn sticking_reproduces_contact_velocity(s in scene()) {
        let sol = solve_contact_motion(&s.object, &s.slider, &s.contact, s.velocity).unwrap();
        if sol.mode == ContactMode::Sticking {
            let v = sol.twist.point_velocity(s.contact.point - sol.cof);
            prop_assert!((v - s.velocity).norm() < 1e-9);
        }
    }

    #[test]
    fn force_stays_in_friction_cone(s in scene()) {
        let sol = solve_contact_motion(&s.object, &s.slider, &s.contact, s.velocity).unwrap();
        if approaching(&s) {
            let inward = -s.contact.normal;
            let angle = inward.cross(sol.force).atan2(inward.dot(sol.force));
            let half = s.slider.mu_contact.atan();
            prop_assert!(angle.abs() <= half + 1e-9);
            if matches!(sol.mode, ContactMode::SlidingLeft | ContactMode::SlidingRight) {
                prop_assert!((angle.abs() - half).abs() < 1e-9);
            }
        } else {
            prop_assert_eq!(sol.mode, ContactMode::Separated);
        }
    }

    #[test]
    fn mirrored_scene_mirrors_twist(s in scene()) {
        let m = |v: Vec2| Vec2::new(v.x, -v.y);
        let mirrored = Scene {
            object: Pose2::new(s.object.x, -s.object.y, -s.object.theta),
            slider: SliderParams { cof_offset: m(s.slider.cof_offset), ..s.slider },
            contact: Contact { point: m(s.contact.point), normal: m(s.contact.normal), ..s.contact },
            velocity: m(s.velocity),
        };
        let a = solve_contact_motion(&s.object, &s.slider, &s.contact, s.velocity).unwrap();
        let b = solve_contact_motion(&mirrored.object, &mirrored.slider, &mirrored.contact, mirrored.velocity).unwrap();
        prop_assert!((a.twist.v.x - b.twist.v.x).abs() < 1e-9);
        prop_assert!((a.twist.v.y + b.twist.v.y).abs() < 1e-9);
        prop_assert!((a.twist.omega + b.twist.omega).abs() < 1e-9);
        let swapped = match a.mode {
            ContactMode::SlidingLeft => ContactMode::SlidingRight,
            ContactMode::SlidingRight => ContactMode::SlidingLeft,
            other => other,
        };
        prop_assert_eq!(b.mode, swapped);
    }

    #[test]
    fn withdrawing_pusher_never_pulls(s in scene()) {
        let shape = ConvexShape::rectangle("box", 0.075, 0.075).unwrap();
        let slider = SliderParams::for_shape(&shape);
        let inward = -s.contact.normal;
        let away = if s.velocity.dot(inward) > 0.0 { -s.velocity } else { s.velocity };
        let pusher_pose = Pose2::from_parts(s.contact.point, inward.angle());
        let local = pusher_pose.inverse_transform_vector(away);
        let step = quasi_static_step(&s.object, &slider, &s.contact, &pusher_pose, &pusher(), &PusherMotion::new(local.x, local.y, 0.0)).unwrap();
        prop_assert_eq!(step.object_pose, s.object);
        prop_assert_eq!(step.mode, ContactMode::Separated);
    }

    #[test]
    fn push_through_cof_does_not_rotate(s in scene()) {
        let inward = -s.contact.normal;
        let cof = s.object.transform_point(s.slider.cof_offset);
        // Contact point on the line through the COF along the normal.
        let point = cof - inward * 0.05;
        let contact = Contact { point, ..s.contact };
        let sol = solve_contact_motion(&s.object, &s.slider, &contact, inward * (s.velocity.norm() + 1e-4)).unwrap();
        prop_assert_eq!(sol.mode, ContactMode::Sticking);
        prop_assert!(sol.twist.omega.abs() < 1e-12);
    }

    #[test]
    fn steps_wrap_and_repeat_exactly(s in scene(), dtheta in -0.05..0.05f64) {
        let inward = -s.contact.normal;
        let pusher_pose = Pose2::from_parts(s.contact.point, inward.angle() + 0.3);
        let local = pusher_pose.inverse_transform_vector(s.velocity);
        let motion = PusherMotion::new(local.x, local.y, dtheta);
        let shape = ConvexShape::rectangle("box", 0.075, 0.075).unwrap();
        let slider = SliderParams::for_shape(&shape);
        let a = quasi_static_step(&s.object, &slider, &s.contact, &pusher_pose, &pusher(), &motion).unwrap();
        let b = quasi_static_step(&s.object, &slider, &s.contact, &pusher_pose, &pusher(), &motion).unwrap();
        prop_assert!(a.object_pose.theta > -PI && a.object_pose.theta <= PI);
        prop_assert!(a.pusher_pose.theta > -PI && a.pusher_pose.theta <= PI);
        prop_assert_eq!(a.object_pose.x.to_bits(), b.object_pose.x.to_bits());
        prop_assert_eq!(a.object_pose.y.to_bits(), b.object_pose.y.to_bits());
        prop_assert_eq!(a.object_pose.theta.to_bits(), b.object_pose.theta.to_bits());
        prop_assert_eq!(a.mode, b.mode);
    }
}

#[test]
fn normal_push_through_centre_translates() {
    let shape = square();
    let slider = SliderParams::for_shape(&shape);
    let pose = Pose2::new(-0.0375 + 0.002, 0.0, 0.0);
    let c = detect_contact(&pose, &pusher(), &shape, &Pose2::default()).unwrap();
    let s = quasi_static_step(&Pose2::default(), &slider, &c, &pose, &pusher(), &PusherMotion::new(0.001, 0.0, 0.0)).unwrap();
    assert_eq!(s.mode, ContactMode::Sticking);
    assert!((s.object_pose.x - 0.001).abs() < 1e-15);
    assert_eq!(s.object_pose.y, 0.0);
    assert_eq!(s.object_pose.theta, 0.0);
}

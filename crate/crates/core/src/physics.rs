//! Quasi-static pusher–slider simulation.
//!
//! The slider is a convex polygon resting on a support plane whose friction
//! is summarized by an ellipsoidal limit surface centred on the center of
//! friction (COF). A contact wrench `(f, m)` applied about the COF produces
//! the twist `(v, ω) ∝ (f, m / c²)` where `c` is the limit-surface ratio
//! `τ_max / f_max`. The pusher is a circular tip of radius `R`; its pose is
//! the front point of the tip, so the circle centre sits `R` behind it along
//! the heading.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::geom::{Pose2, Vec2};

/// Gap below which a non-touching pusher is still reported, as `Separated`.
pub const CONTACT_PROXIMITY: f64 = 0.005;

/// Largest pusher translation accepted by one quasi-static step.
pub const MAX_STEP_TRANSLATION: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhysicsError {
    #[error("invalid shape `{name}`: {reason}")]
    InvalidShape { name: String, reason: &'static str },
    #[error("invalid slider parameters: {0}")]
    InvalidSlider(&'static str),
    #[error("invalid pusher parameters: {0}")]
    InvalidPusher(&'static str),
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("no surface pose without contact")]
    NoContact,
    #[error("pusher translation {0} m exceeds the small-motion limit")]
    MotionTooLarge(f64),
}

/// Convex polygon in its body frame, counter-clockwise, centroid at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShape", into = "RawShape")]
pub struct ConvexShape {
    name: String,
    vertices: Vec<Vec2>,
}

#[derive(Serialize, Deserialize)]
struct RawShape {
    name: String,
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<RawShape> for ConvexShape {
    type Error = PhysicsError;
    fn try_from(raw: RawShape) -> Result<Self, Self::Error> {
        ConvexShape::new(raw.name, raw.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect())
    }
}

impl From<ConvexShape> for RawShape {
    fn from(s: ConvexShape) -> Self {
        RawShape { name: s.name, vertices: s.vertices.iter().map(|v| [v.x, v.y]).collect() }
    }
}

/// Which part of the boundary is closest to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub point: Vec2,
    /// Outward unit normal at the feature.
    pub normal: Vec2,
    pub edge_index: usize,
    /// Euclidean distance from the query to the polygon; zero when inside.
    pub distance: f64,
}

impl ConvexShape {
    /// Validates strict convexity and counter-clockwise winding, then
    /// translates the vertices so the area centroid is the body origin.
    pub fn new(name: impl Into<String>, vertices: Vec<Vec2>) -> Result<Self, PhysicsError> {
        let name = name.into();
        let bad = |reason| PhysicsError::InvalidShape { name: name.clone(), reason };
        if vertices.len() < 3 {
            return Err(bad("fewer than 3 vertices"));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite vertex"));
        }
        let n = vertices.len();
        let mut turning = 0.0;
        for i in 0..n {
            let e0 = vertices[(i + 1) % n] - vertices[i];
            let e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
            let c = e0.cross(e1);
            if !(c > 0.0) {
                return Err(bad("not strictly convex and counter-clockwise"));
            }
            turning += libm::atan2(c, e0.dot(e1));
        }
        if (turning - TAU).abs() > 1e-6 {
            return Err(bad("self-intersecting outline"));
        }

        let mut area2 = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = a.cross(b);
            area2 += c;
            cx += (a.x + b.x) * c;
            cy += (a.y + b.y) * c;
        }
        let centroid = Vec2::new(cx / (3.0 * area2), cy / (3.0 * area2));
        let vertices = vertices.into_iter().map(|v| v - centroid).collect();
        Ok(Self { name, vertices })
    }

    /// Axis-aligned rectangle; `depth` along x, `width` along y.
    pub fn rectangle(name: impl Into<String>, depth: f64, width: f64) -> Result<Self, PhysicsError> {
        let (hx, hy) = (depth / 2.0, width / 2.0);
        Self::new(name, alloc::vec![Vec2::new(-hx, -hy), Vec2::new(hx, -hy), Vec2::new(hx, hy), Vec2::new(-hx, hy),])
    }

    pub fn square(name: impl Into<String>, edge: f64) -> Result<Self, PhysicsError> {
        Self::rectangle(name, edge, edge)
    }

    /// Regular `n`-gon on a circle of radius `circumradius`, with one flat
    /// face whose outward normal is `-x`.
    pub fn regular(name: impl Into<String>, sides: usize, circumradius: f64) -> Result<Self, PhysicsError> {
        let n = sides as f64;
        let vertices = (0..sides).map(|k| Vec2::from_angle(PI - PI / n + TAU * k as f64 / n) * circumradius).collect();
        Self::new(name, vertices)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge(&self, i: usize) -> (Vec2, Vec2) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn outward_normal(&self, i: usize) -> Vec2 {
        let (a, b) = self.edge(i);
        let e = b - a;
        Vec2::new(e.y, -e.x).normalized()
    }

    pub fn circumradius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Distance from the centroid to the nearest edge line.
    pub fn inradius(&self) -> f64 {
        (0..self.edge_count()).map(|i| -self.outward_normal(i).dot(-self.vertices[i])).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, q: Vec2) -> bool {
        (0..self.edge_count()).all(|i| {
            let (a, b) = self.edge(i);
            (b - a).cross(q - a) >= 0.0
        })
    }

    /// Closest boundary feature to a body-frame point.
    pub fn closest_boundary(&self, q: Vec2) -> BoundaryPoint {
        let inside = self.contains(q);
        let mut best: Option<(f64, BoundaryPoint)> = None;
        for i in 0..self.edge_count() {
            let (a, b) = self.edge(i);
            let e = b - a;
            let t = ((q - a).dot(e) / e.norm_sq()).clamp(0.0, 1.0);
            let p = a + e * t;
            let d = (q - p).norm();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                let edge_normal = self.outward_normal(i);
                let normal = if inside || (t > 0.0 && t < 1.0) || d == 0.0 { edge_normal } else { (q - p) * (1.0 / d) };
                best = Some((d, BoundaryPoint { point: p, normal, edge_index: i, distance: if inside { 0.0 } else { d } }));
            }
        }
        best.expect("shape has edges").1
    }
}

/// Support-friction parameters of the slider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliderParams {
    /// Pusher–object Coulomb coefficient.
    pub mu_contact: f64,
    /// Limit-surface ratio `τ_max / f_max`, meters.
    pub c_ls: f64,
    /// Center of friction relative to the centroid, body frame.
    pub cof_offset: Vec2,
}

impl SliderParams {
    pub const DEFAULT_MU: f64 = 0.3;
    pub const DEFAULT_C_LS_SCALE: f64 = 0.6;

    pub fn for_shape(shape: &ConvexShape) -> Self {
        Self { mu_contact: Self::DEFAULT_MU, c_ls: Self::DEFAULT_C_LS_SCALE * shape.circumradius(), cof_offset: Vec2::ZERO }
    }

    /// Besides the basic ranges this requires `μ (r_max + |cof|) < 2 c`,
    /// which keeps both friction-cone edges mapped to approaching contact
    /// velocities so the motion cone is well defined.
    pub fn validate(&self, shape: &ConvexShape) -> Result<(), PhysicsError> {
        if !(self.mu_contact > 0.0) || !self.mu_contact.is_finite() {
            return Err(PhysicsError::InvalidSlider("mu_contact must be positive"));
        }
        if !(self.c_ls > 0.0) || !self.c_ls.is_finite() {
            return Err(PhysicsError::InvalidSlider("c_ls must be positive"));
        }
        if !self.cof_offset.is_finite() || self.cof_offset.norm() >= shape.inradius() {
            return Err(PhysicsError::InvalidSlider("cof_offset must lie inside the inradius"));
        }
        if self.mu_contact * (shape.circumradius() + self.cof_offset.norm()) >= 2.0 * self.c_ls {
            return Err(PhysicsError::InvalidSlider("mu_contact too large for c_ls"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PusherParams {
    pub tip_radius: f64,
}

impl Default for PusherParams {
    fn default() -> Self {
        Self { tip_radius: 0.02 }
    }
}

impl PusherParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        if self.tip_radius > 0.0 && self.tip_radius.is_finite() {
            Ok(())
        } else {
            Err(PhysicsError::InvalidPusher("tip_radius must be positive"))
        }
    }

    /// Centre of the tip circle for a pusher at `pose`.
    pub fn tip_center(&self, pose: &Pose2) -> Vec2 {
        pose.position() - pose.heading() * self.tip_radius
    }
}

/// Contact state. Left/right refer to the pusher's slip relative to the
/// object, looking along the push direction (the inward normal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContactMode {
    Sticking,
    SlidingLeft,
    SlidingRight,
    Separated,
}

impl ContactMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContactMode::Sticking => "sticking",
            ContactMode::SlidingLeft => "sliding_left",
            ContactMode::SlidingRight => "sliding_right",
            ContactMode::Separated => "separated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sticking" => ContactMode::Sticking,
            "sliding_left" => ContactMode::SlidingLeft,
            "sliding_right" => ContactMode::SlidingRight,
            "separated" => ContactMode::Separated,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// Closest point on the object boundary, world frame.
    pub point: Vec2,
    /// Unit normal from the object surface towards the pusher, world frame.
    pub normal: Vec2,
    pub depth: f64,
    pub edge_index: usize,
    pub mode: ContactMode,
}

impl Contact {
    /// Contact-surface frame: origin at the contact point, x axis along the
    /// inward normal (the direction a normal push travels).
    pub fn frame(&self) -> Pose2 {
        Pose2::from_parts(self.point, (-self.normal).angle())
    }

    pub fn is_touching(&self) -> bool {
        self.mode != ContactMode::Separated
    }
}

/// Circle-vs-polygon proximity query.
pub fn detect_contact(pusher_pose: &Pose2, pusher: &PusherParams, shape: &ConvexShape, object_pose: &Pose2) -> Option<Contact> {
    let center = pusher.tip_center(pusher_pose);
    let local = object_pose.inverse_transform_point(center);
    let b = shape.closest_boundary(local);
    let gap = b.distance - pusher.tip_radius;
    if gap > CONTACT_PROXIMITY {
        return None;
    }
    Some(Contact {
        point: object_pose.transform_point(b.point),
        normal: object_pose.transform_vector(b.normal),
        depth: (pusher.tip_radius - b.distance).max(0.0),
        edge_index: b.edge_index,
        mode: if gap > 0.0 { ContactMode::Separated } else { ContactMode::Sticking },
    })
}

/// Contact-surface pose expressed in the pusher frame.
pub fn surface_pose(contact: &Contact, pusher_pose: &Pose2) -> Result<Pose2, PhysicsError> {
    if !contact.is_touching() {
        return Err(PhysicsError::NoContact);
    }
    Ok(contact.frame().relative_to(pusher_pose))
}

/// Rigid-body velocity about the COF, world frame, per unit step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub v: Vec2,
    pub omega: f64,
}

impl Twist {
    /// Velocity of the material point at `r` relative to the twist origin.
    pub fn point_velocity(&self, r: Vec2) -> Vec2 {
        self.v + r.perp() * self.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSolution {
    pub mode: ContactMode,
    pub twist: Twist,
    /// Contact force on the object (arbitrary scale), world frame.
    pub force: Vec2,
    /// COF position, world frame.
    pub cof: Vec2,
}

/// Classify a contact-point displacement against the motion cone and compute
/// the resulting object twist.
pub fn solve_contact_motion(
    object_pose: &Pose2,
    slider: &SliderParams,
    contact: &Contact,
    contact_velocity: Vec2,
) -> Result<ContactSolution, PhysicsError> {
    if !object_pose.is_finite() || !contact_velocity.is_finite() || !contact.point.is_finite() || !contact.normal.is_finite() {
        return Err(PhysicsError::NonFinite("solve_contact_motion"));
    }
    let cof = object_pose.transform_point(slider.cof_offset);
    let still = ContactSolution { mode: ContactMode::Sticking, twist: Twist::default(), force: Vec2::ZERO, cof };
    if contact_velocity == Vec2::ZERO {
        return Ok(still);
    }
    let inward = -contact.normal;
    if contact_velocity.dot(inward) <= 0.0 {
        return Ok(ContactSolution { mode: ContactMode::Separated, ..still });
    }

    let r = contact.point - cof;
    let q = r.perp();
    let c2 = slider.c_ls * slider.c_ls;
    // Contact-point velocity produced by a unit force f: A f, A = I + q qᵀ / c².
    let apply = |f: Vec2| f + q * (q.dot(f) / c2);
    let twist_of = |f: Vec2| Twist { v: f, omega: q.dot(f) / c2 };

    let tangent = inward.perp();
    let f_left = inward + tangent * slider.mu_contact;
    let f_right = inward - tangent * slider.mu_contact;
    let v_left = apply(f_left);
    let v_right = apply(f_right);

    let past_left = contact_velocity.cross(v_left) < 0.0;
    let past_right = v_right.cross(contact_velocity) < 0.0;
    let (mode, edge) = match (past_left, past_right) {
        (false, false) => {
            // Inside the motion cone (boundary included): invert A.
            let det = 1.0 + q.norm_sq() / c2;
            let f = contact_velocity - q * (q.dot(contact_velocity) / (c2 * det));
            return Ok(ContactSolution { mode: ContactMode::Sticking, twist: twist_of(f), force: f, cof });
        }
        (true, _) => (ContactMode::SlidingLeft, f_left),
        (false, true) => (ContactMode::SlidingRight, f_right),
    };
    // Scale the edge force so the normal velocities agree.
    let k = contact_velocity.dot(inward) / apply(edge).dot(inward);
    let f = edge * k;
    Ok(ContactSolution { mode, twist: twist_of(f), force: f, cof })
}

/// Pusher motion in its own frame: `(dx, dy)` translation of the tip,
/// `dtheta` rotation about the tip.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PusherMotion {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl PusherMotion {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.dx * k, self.dy * k, self.dtheta * k)
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite() && self.dtheta.is_finite()
    }

    /// Pusher pose after the motion.
    pub fn apply(&self, pose: &Pose2) -> Pose2 {
        let p = pose.transform_point(Vec2::new(self.dx, self.dy));
        Pose2::from_parts(p, pose.theta + self.dtheta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiStaticStep {
    pub object_pose: Pose2,
    pub pusher_pose: Pose2,
    pub mode: ContactMode,
    pub solution: ContactSolution,
}

/// Displace a pose by a twist held constant over one step (SE(2) exponential).
pub fn integrate_twist(object_pose: &Pose2, cof_offset: Vec2, cof: Vec2, twist: &Twist) -> Pose2 {
    let w = twist.omega;
    let (a, b) = if w.abs() < 1e-12 { (1.0 - w * w / 6.0, w / 2.0) } else { (libm::sin(w) / w, (1.0 - libm::cos(w)) / w) };
    let d = Vec2::new(a * twist.v.x - b * twist.v.y, b * twist.v.x + a * twist.v.y);
    let theta = object_pose.theta + w;
    let new_cof = cof + d;
    Pose2::from_parts(new_cof - cof_offset.rotate(theta), theta)
}

/// Advance the object by one quasi-static step of the pusher.
///
/// A withdrawing pusher leaves the object where it is; a zero motion returns
/// everything unchanged with `Sticking`.
pub fn quasi_static_step(
    object_pose: &Pose2,
    slider: &SliderParams,
    contact: &Contact,
    pusher_pose: &Pose2,
    pusher: &PusherParams,
    motion: &PusherMotion,
) -> Result<QuasiStaticStep, PhysicsError> {
    if !object_pose.is_finite() || !pusher_pose.is_finite() || !motion.is_finite() {
        return Err(PhysicsError::NonFinite("quasi_static_step"));
    }
    if !contact.is_touching() {
        return Err(PhysicsError::NoContact);
    }
    let travel = libm::hypot(motion.dx, motion.dy);
    if travel > MAX_STEP_TRANSLATION {
        return Err(PhysicsError::MotionTooLarge(travel));
    }
    let new_pusher = motion.apply(pusher_pose);
    let contact_velocity = pusher.tip_center(&new_pusher) - pusher.tip_center(pusher_pose);
    let solution = solve_contact_motion(object_pose, slider, contact, contact_velocity)?;
    let object = match solution.mode {
        ContactMode::Separated => *object_pose,
        _ => integrate_twist(object_pose, slider.cof_offset, solution.cof, &solution.twist),
    };
    Ok(QuasiStaticStep { object_pose: object, pusher_pose: new_pusher, mode: solution.mode, solution })
}

//! Goal-conditioned pushing task on top of the quasi-static simulator.
//!
//! The pusher always advances `dx_fixed` along its heading; the agent picks a
//! lateral offset and a heading change each step. Observations are built
//! from the contact-surface frame (origin at the contact point, x along the
//! push direction).

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Pose2, Vec2};
use crate::physics::{
    self, detect_contact, quasi_static_step, Contact, ContactMode, ConvexShape, PhysicsError, PusherMotion, PusherParams, SliderParams,
};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid env config: {0}")]
    InvalidConfig(&'static str),
    #[error("goal ({0}, {1}) lies outside the workspace")]
    GoalOutsideWorkspace(f64, f64),
    #[error("episode finished")]
    EpisodeFinished,
    #[error("environment has not been reset")]
    NotReset,
    #[error("non-finite action")]
    NonFiniteAction,
    #[error("no initial contact could be established")]
    NoInitialContact,
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

/// Axis-aligned workspace rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { x_min: 0.0, x_max: 0.4, y_min: -0.3, y_max: 0.3 }
    }
}

impl Workspace {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn diagonal(&self) -> f64 {
        libm::hypot(self.width(), self.height())
    }

    /// Distance from `p` to the given edge line.
    pub fn edge_distance(&self, p: Vec2, edge: BandEdge) -> f64 {
        match edge {
            BandEdge::Near => p.x - self.x_min,
            BandEdge::Far => self.x_max - p.x,
            BandEdge::Left => self.y_max - p.y,
            BandEdge::Right => p.y - self.y_min,
        }
    }
}

/// Workspace edges, seen from the start pose looking along +x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandEdge {
    /// `x = x_min`, the edge the start pose sits on.
    Near,
    Far,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub workspace: Workspace,
    pub goal_band_width: f64,
    /// Edges whose bands make up the training goal distribution.
    pub goal_band_edges: Vec<BandEdge>,
    pub approach_distance: f64,
    pub success_tolerance: f64,
    pub dx_fixed: f64,
    pub dy_max: f64,
    pub dtheta_max: f64,
    pub max_steps: usize,
    pub contact_loss_terminates: bool,
    /// Tip penetration at reset.
    pub initial_depth: f64,
    /// Object heading at reset (before any disturbance).
    pub initial_object_theta: f64,
    /// Physics substeps per action.
    pub substeps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            workspace: Workspace::default(),
            goal_band_width: 0.05,
            goal_band_edges: alloc::vec![BandEdge::Far, BandEdge::Left, BandEdge::Right],
            approach_distance: 0.1,
            success_tolerance: 0.025,
            dx_fixed: 0.001,
            dy_max: 0.001,
            dtheta_max: PI / 180.0,
            max_steps: 1000,
            contact_loss_terminates: true,
            initial_depth: 0.002,
            initial_object_theta: 0.0,
            substeps: 4,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ws = &self.workspace;
        let extent = ws.width().min(ws.height());
        if !(ws.width() > 0.0 && ws.height() > 0.0) {
            return Err(EnvError::InvalidConfig("workspace must have positive extent"));
        }
        if !(self.success_tolerance > 0.0 && self.success_tolerance < self.approach_distance) {
            return Err(EnvError::InvalidConfig("need 0 < success_tolerance < approach_distance"));
        }
        if !(self.approach_distance < extent) {
            return Err(EnvError::InvalidConfig("approach_distance must be below the workspace extent"));
        }
        if !(self.dx_fixed > 0.0) || !(self.dy_max >= 0.0) || !(self.dtheta_max >= 0.0) {
            return Err(EnvError::InvalidConfig("action magnitudes must be positive"));
        }
        if self.substeps == 0 {
            return Err(EnvError::InvalidConfig("substeps must be positive"));
        }
        if libm::hypot(self.dx_fixed, self.dy_max) / self.substeps as f64 > physics::MAX_STEP_TRANSLATION {
            return Err(EnvError::InvalidConfig("per-substep translation above the small-motion limit"));
        }
        if self.max_steps == 0 {
            return Err(EnvError::InvalidConfig("max_steps must be positive"));
        }
        if !(self.goal_band_width > 0.0) || self.goal_band_edges.is_empty() {
            return Err(EnvError::InvalidConfig("goal band needs a positive width and at least one edge"));
        }
        if !(self.initial_depth >= 0.0) {
            return Err(EnvError::InvalidConfig("initial_depth must be non-negative"));
        }
        Ok(())
    }

    /// Lower/upper action bounds as `[dy, dtheta]`.
    pub fn action_bounds(&self) -> ([f64; 2], [f64; 2]) {
        ([-self.dy_max, -self.dtheta_max], [self.dy_max, self.dtheta_max])
    }

    /// Uniform draw from the union of the configured edge bands.
    pub fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Goal {
        let ws = &self.workspace;
        loop {
            let p = Vec2::new(ws.x_min + ws.width() * rng.random::<f64>(), ws.y_min + ws.height() * rng.random::<f64>());
            if self.goal_band_edges.iter().any(|&e| ws.edge_distance(p, e) <= self.goal_band_width) {
                return Goal { x: p.x, y: p.y };
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub x: f64,
    pub y: f64,
}

impl Goal {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub dy: f64,
    pub dtheta: f64,
}

impl Action {
    pub fn new(dy: f64, dtheta: f64) -> Self {
        Self { dy, dtheta }
    }

    pub fn clamped(&self, config: &EnvConfig) -> Action {
        Action { dy: self.dy.clamp(-config.dy_max, config.dy_max), dtheta: self.dtheta.clamp(-config.dtheta_max, config.dtheta_max) }
    }

    /// From `[-1, 1]²` to physical units.
    pub fn from_normalized(a: &[f64], config: &EnvConfig) -> Action {
        Action::new(a[0] * config.dy_max, a[1] * config.dtheta_max)
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.dy, self.dtheta]
    }
}

/// Goal-aware tactile-pose observation: contact surface in the pusher frame,
/// goal in the contact frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyObservation {
    pub x_po: f64,
    pub y_po: f64,
    pub theta_po: f64,
    pub x_og: f64,
    pub y_og: f64,
    pub theta_og: f64,
}

impl PolicyObservation {
    pub const DIM: usize = 6;

    pub fn to_array(&self) -> [f64; 6] {
        [self.x_po, self.y_po, self.theta_po, self.x_og, self.y_og, self.theta_og]
    }
}

/// Goal-free pose state: contact surface in the pusher frame, contact frame
/// in the world.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelState {
    pub x_po: f64,
    pub y_po: f64,
    pub theta_po: f64,
    pub x_o: f64,
    pub y_o: f64,
    pub theta_o: f64,
}

impl ModelState {
    pub const DIM: usize = 6;
    /// Indices of angular components.
    pub const ANGLE_DIMS: [usize; 2] = [2, 5];

    pub fn to_array(&self) -> [f64; 6] {
        [self.x_po, self.y_po, self.theta_po, self.x_o, self.y_o, self.theta_o]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { x_po: s[0], y_po: s[1], theta_po: s[2], x_o: s[3], y_o: s[4], theta_o: s[5] }
    }

    /// Contact frame in the world.
    pub fn contact_frame(&self) -> Pose2 {
        Pose2::new(self.x_o, self.y_o, self.theta_o)
    }

    pub fn pusher_theta(&self) -> f64 {
        wrap_angle(self.theta_o - self.theta_po)
    }

    /// Pusher pose implied by the two halves of the state.
    pub fn pusher_pose(&self) -> Pose2 {
        self.contact_frame().compose(&Pose2::new(self.x_po, self.y_po, self.theta_po).inverse())
    }
}

/// World-frame direction from the contact position to the goal.
pub fn bearing(o: Vec2, g: Vec2) -> f64 {
    let d = g - o;
    if d.x == 0.0 && d.y == 0.0 {
        return 0.0;
    }
    wrap_angle(libm::atan2(d.y, d.x))
}

/// `1 - cos(a - b)`: zero when aligned, two when opposed.
pub fn cosine_distance(a: f64, b: f64) -> f64 {
    1.0 - libm::cos(a - b)
}

/// Two-zone shaped reward: bearing alignment far from the goal, Euclidean
/// distance inside the approach zone, plus a normal-push term everywhere.
pub fn reward(contact_frame: &Pose2, pusher_theta: f64, goal: &Goal, config: &EnvConfig) -> f64 {
    let o = contact_frame.position();
    let g = goal.position();
    let dist = (o - g).norm();
    let normal_term = cosine_distance(pusher_theta, contact_frame.theta);
    if dist > config.approach_distance {
        -(cosine_distance(contact_frame.theta, bearing(o, g)) + normal_term)
    } else {
        -(dist + normal_term)
    }
}

/// [`reward`] evaluated on a model state.
pub fn model_state_reward(state: &ModelState, goal: &Goal, config: &EnvConfig) -> f64 {
    reward(&state.contact_frame(), state.pusher_theta(), goal, config)
}

pub fn observe(contact_frame: &Pose2, pusher_pose: &Pose2, goal: &Goal) -> (PolicyObservation, ModelState) {
    let sp = contact_frame.relative_to(pusher_pose);
    let o = contact_frame.position();
    let g_local = contact_frame.inverse_transform_point(goal.position());
    let obs = PolicyObservation {
        x_po: sp.x,
        y_po: sp.y,
        theta_po: sp.theta,
        x_og: g_local.x,
        y_og: g_local.y,
        theta_og: wrap_angle(bearing(o, goal.position()) - contact_frame.theta),
    };
    let state =
        ModelState { x_po: sp.x, y_po: sp.y, theta_po: sp.theta, x_o: contact_frame.x, y_o: contact_frame.y, theta_o: contact_frame.theta };
    (obs, state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub mode: ContactMode,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: PolicyObservation,
    pub model_state: ModelState,
    pub reward: f64,
    /// Reached the goal.
    pub terminated: bool,
    /// Lost contact.
    pub failed: bool,
    /// Hit `max_steps`.
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.failed || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalChoice {
    Seeded(u64),
    Fixed(Goal),
}

#[derive(Debug, Clone)]
pub struct PushEnv {
    config: EnvConfig,
    shape: ConvexShape,
    slider: SliderParams,
    pusher: PusherParams,
    contact_angle_offset: f64,
    state: Option<EpisodeState>,
}

#[derive(Debug, Clone)]
struct EpisodeState {
    goal: Goal,
    object_pose: Pose2,
    pusher_pose: Pose2,
    /// Last contact reported by the proximity query (kept when it vanishes).
    contact: Contact,
    in_contact: bool,
    steps: usize,
    done: bool,
}

impl PushEnv {
    pub fn new(config: EnvConfig, shape: ConvexShape, slider: SliderParams, pusher: PusherParams) -> Result<Self, EnvError> {
        config.validate()?;
        slider.validate(&shape)?;
        pusher.validate()?;
        Ok(Self { config, shape, slider, pusher, contact_angle_offset: 0.0, state: None })
    }

    /// Rotate the object about the initial contact point by `angle` at every
    /// reset; the pusher pose is unaffected.
    pub fn with_contact_angle_offset(mut self, angle: f64) -> Self {
        self.contact_angle_offset = angle;
        self
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn shape(&self) -> &ConvexShape {
        &self.shape
    }

    pub fn slider(&self) -> &SliderParams {
        &self.slider
    }

    pub fn pusher(&self) -> &PusherParams {
        &self.pusher
    }

    fn episode(&self) -> Result<&EpisodeState, EnvError> {
        self.state.as_ref().ok_or(EnvError::NotReset)
    }

    pub fn goal(&self) -> Option<Goal> {
        self.state.as_ref().map(|s| s.goal)
    }

    pub fn object_pose(&self) -> Option<Pose2> {
        self.state.as_ref().map(|s| s.object_pose)
    }

    pub fn pusher_pose(&self) -> Option<Pose2> {
        self.state.as_ref().map(|s| s.pusher_pose)
    }

    pub fn contact(&self) -> Option<Contact> {
        self.state.as_ref().map(|s| s.contact)
    }

    pub fn in_contact(&self) -> bool {
        self.state.as_ref().is_some_and(|s| s.in_contact)
    }

    pub fn steps(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.steps)
    }

    /// Contact point at the nominal start configuration (the world origin).
    pub fn start_position(&self) -> Vec2 {
        Vec2::ZERO
    }

    pub fn reset(&mut self, goal: GoalChoice) -> Result<(PolicyObservation, ModelState), EnvError> {
        let goal = match goal {
            GoalChoice::Fixed(g) => {
                if !g.x.is_finite() || !g.y.is_finite() || !self.config.workspace.contains(g.position()) {
                    return Err(EnvError::GoalOutsideWorkspace(g.x, g.y));
                }
                g
            }
            GoalChoice::Seeded(seed) => self.config.sample_goal(&mut rng::seeded(seed)),
        };

        // Push face: the edge whose outward normal points most towards -x.
        let theta0 = self.config.initial_object_theta;
        let face = (0..self.shape.edge_count())
            .min_by(|&a, &b| {
                let na = self.shape.outward_normal(a).rotate(theta0).x;
                let nb = self.shape.outward_normal(b).rotate(theta0).x;
                na.total_cmp(&nb)
            })
            .expect("shape has edges");
        let (a, b) = self.shape.edge(face);
        let e = b - a;
        let t = ((-a).dot(e) / e.norm_sq()).clamp(0.0, 1.0);
        let contact_body = a + e * t;
        let normal = self.shape.outward_normal(face).rotate(theta0);

        let mut object_pose = Pose2::from_parts(-contact_body.rotate(theta0), theta0);
        let pusher_pose = Pose2::from_parts(-normal * self.config.initial_depth, (-normal).angle());
        if self.contact_angle_offset != 0.0 {
            let off = self.contact_angle_offset;
            object_pose = Pose2::from_parts(object_pose.position().rotate(off), object_pose.theta + off);
        }
        let contact = detect_contact(&pusher_pose, &self.pusher, &self.shape, &object_pose)
            .filter(|c| c.is_touching())
            .ok_or(EnvError::NoInitialContact)?;

        let ep = EpisodeState { goal, object_pose, pusher_pose, contact, in_contact: true, steps: 0, done: false };
        let out = observe(&contact.frame(), &pusher_pose, &goal);
        self.state = Some(ep);
        Ok(out)
    }

    pub fn observe(&self) -> Result<(PolicyObservation, ModelState), EnvError> {
        let ep = self.episode()?;
        Ok(observe(&ep.contact.frame(), &ep.pusher_pose, &ep.goal))
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        let config = &self.config;
        let ep = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::EpisodeFinished);
        }
        if !action.dy.is_finite() || !action.dtheta.is_finite() {
            return Err(EnvError::NonFiniteAction);
        }
        let action = action.clamped(config);
        let motion = PusherMotion::new(config.dx_fixed, action.dy, action.dtheta).scaled(1.0 / config.substeps as f64);

        let mut mode = ep.contact.mode;
        for _ in 0..config.substeps {
            if ep.in_contact {
                let s = quasi_static_step(&ep.object_pose, &self.slider, &ep.contact, &ep.pusher_pose, &self.pusher, &motion)?;
                mode = s.mode;
                ep.object_pose = s.object_pose;
                ep.pusher_pose = s.pusher_pose;
                if s.mode != ContactMode::Separated {
                    // Hold the penetration depth: removes the second-order
                    // drift of a finite step along a rotating contact.
                    if let Some(c) = detect_contact(&ep.pusher_pose, &self.pusher, &self.shape, &ep.object_pose) {
                        if c.is_touching() {
                            let shift = -c.normal * (c.depth - ep.contact.depth);
                            ep.object_pose = Pose2::from_parts(ep.object_pose.position() + shift, ep.object_pose.theta);
                        }
                    }
                }
            } else {
                ep.pusher_pose = motion.apply(&ep.pusher_pose);
                mode = ContactMode::Separated;
            }
            match detect_contact(&ep.pusher_pose, &self.pusher, &self.shape, &ep.object_pose) {
                Some(c) => {
                    ep.in_contact = c.is_touching();
                    ep.contact = c;
                }
                None => {
                    ep.in_contact = false;
                    ep.contact.mode = ContactMode::Separated;
                }
            }
        }
        if ep.in_contact && mode != ContactMode::Separated {
            ep.contact.mode = mode;
        }
        ep.steps += 1;

        let frame = ep.contact.frame();
        let (observation, model_state) = observe(&frame, &ep.pusher_pose, &ep.goal);
        let r = reward(&frame, ep.pusher_pose.theta, &ep.goal, config);
        let distance = (frame.position() - ep.goal.position()).norm();
        let terminated = distance <= config.success_tolerance;
        let failed = !terminated && !ep.in_contact && config.contact_loss_terminates;
        let truncated = !terminated && !failed && ep.steps >= config.max_steps;
        ep.done = terminated || failed || truncated;
        Ok(StepResult { observation, model_state, reward: r, terminated, failed, truncated, info: StepInfo { mode, distance } })
    }
}

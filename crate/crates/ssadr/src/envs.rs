//! Randomization space and the two goal-directed toy environments.
//!
//! A `RandomizationSpace` is a bounded box of physical simulator parameters.
//! Points inside it are handled in normalized coordinates (`EnvParams`,
//! components in [0, 1]); `make_env` resolves them to physical units and
//! builds a steppable `EnvInstance`. Both environments are closed-form and
//! deterministic: identical parameters, goal and action sequence reproduce
//! bit-identical trajectories.

use crate::error::{Error, Result};
use rand::Rng;

/// Episode length cap shared by both environments.
pub const DEFAULT_MAX_STEPS: u32 = 100;
/// An episode succeeds when the achieved point is closer to the goal than this.
pub const GOAL_THRESHOLD: f64 = 0.025;
/// Reacher link length in meters (4 links).
pub const LINK_LENGTH: f64 = 0.1;
/// Number of reacher links / joints.
pub const N_LINKS: usize = 4;
/// Maximum reach of the arm (all links extended).
pub const REACHER_RADIUS: f64 = LINK_LENGTH * N_LINKS as f64;
/// Pusher agent displacement per unit action per step.
pub const AGENT_SPEED: f64 = 0.05;
/// Agent-puck center distance below which contact occurs.
pub const CONTACT_RADIUS: f64 = 0.08;
/// Pusher agent start position.
pub const AGENT_START: [f64; 2] = [0.2, 0.5];
/// Pusher puck start position.
pub const PUCK_START: [f64; 2] = [0.4, 0.5];

const BOUND_EPS: f64 = 1e-9;

/// Which toy task an instance simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Reacher,
    Pusher,
}

impl EnvKind {
    /// Number of randomized physical parameters.
    pub fn n_rand(self) -> usize {
        match self {
            EnvKind::Reacher => 8,
            EnvKind::Pusher => 1,
        }
    }

    pub fn state_dim(self) -> usize {
        8
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::Reacher => 4,
            EnvKind::Pusher => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Reacher => "reacher",
            EnvKind::Pusher => "pusher",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "reacher" => Ok(EnvKind::Reacher),
            "pusher" => Ok(EnvKind::Pusher),
            other => Err(Error::Config(format!(
                "unknown environment '{other}' (valid: pusher, reacher)"
            ))),
        }
    }

    /// Fixed goal used by the constant-goal training regime and smoke tests.
    pub fn canonical_goal(self) -> [f64; 2] {
        match self {
            EnvKind::Reacher => [0.25, 0.15],
            EnvKind::Pusher => [0.7, 0.5],
        }
    }
}

/// Whether the pusher friction range excludes the degenerate low end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeMode {
    Calibrated,
    Uncalibrated,
}

impl RangeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "calibrated" => Ok(RangeMode::Calibrated),
            "uncalibrated" => Ok(RangeMode::Uncalibrated),
            other => Err(Error::Config(format!(
                "unknown range mode '{other}' (valid: calibrated, uncalibrated)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RangeMode::Calibrated => "calibrated",
            RangeMode::Uncalibrated => "uncalibrated",
        }
    }
}

/// Bounded box of physical simulator parameters with a designated
/// reference point (the "default" environment).
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizationSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    reference: Vec<f64>,
}

impl RandomizationSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, reference: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != reference.len() || lower.is_empty() {
            return Err(Error::Config(format!(
                "randomization space needs equal non-zero dimensions, got {}/{}/{}",
                lower.len(),
                upper.len(),
                reference.len()
            )));
        }
        for i in 0..lower.len() {
            if !(lower[i] < upper[i]) {
                return Err(Error::Config(format!(
                    "bound {i}: lower {} must be < upper {}",
                    lower[i], upper[i]
                )));
            }
            if reference[i] < lower[i] || reference[i] > upper[i] {
                return Err(Error::Config(format!(
                    "reference point component {i} ({}) outside [{}, {}]",
                    reference[i], lower[i], upper[i]
                )));
            }
        }
        Ok(Self {
            lower,
            upper,
            reference,
        })
    }

    /// Standard training box for an environment kind.
    ///
    /// Pusher randomizes puck friction: [0.1, 0.9] calibrated, widened to
    /// [0.01, 0.9] uncalibrated so the degenerate icy band lies inside the
    /// box. Reacher randomizes 4 joint gains in [0.005, 0.05] rad/step and
    /// 4 joint dampings in [0, 0.05]; the uncalibrated mode is only
    /// distinct for the pusher.
    pub fn for_env(kind: EnvKind, mode: RangeMode) -> Self {
        match kind {
            EnvKind::Pusher => {
                let lo = match mode {
                    RangeMode::Calibrated => 0.1,
                    RangeMode::Uncalibrated => 0.01,
                };
                RandomizationSpace::new(vec![lo], vec![0.9], vec![0.5]).unwrap()
            }
            EnvKind::Reacher => {
                let mut lower = vec![0.005; N_LINKS];
                lower.extend(vec![0.0; N_LINKS]);
                let mut upper = vec![0.05; N_LINKS];
                upper.extend(vec![0.05; N_LINKS]);
                let mut reference = vec![0.025; N_LINKS];
                reference.extend(vec![0.01; N_LINKS]);
                RandomizationSpace::new(lower, upper, reference).unwrap()
            }
        }
    }

    pub fn n_dims(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    /// Map normalized coordinates into physical units: lower + n·(upper − lower).
    pub fn denormalize(&self, params: &EnvParams) -> Result<PhysicalParams> {
        if params.len() != self.n_dims() {
            return Err(Error::Config(format!(
                "parameter dimension {} does not match space dimension {}",
                params.len(),
                self.n_dims()
            )));
        }
        let values = params
            .values()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&n, (&lo, &hi))| lo + n * (hi - lo))
            .collect();
        Ok(PhysicalParams { values })
    }

    /// Map physical units into normalized coordinates, clipping to [0, 1].
    pub fn normalize(&self, physical: &[f64]) -> Result<EnvParams> {
        if physical.len() != self.n_dims() {
            return Err(Error::Config(format!(
                "physical dimension {} does not match space dimension {}",
                physical.len(),
                self.n_dims()
            )));
        }
        let values = physical
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&p, (&lo, &hi))| (p - lo) / (hi - lo))
            .collect();
        Ok(EnvParams::new(values))
    }

    /// The reference point in normalized coordinates.
    pub fn reference_params(&self) -> EnvParams {
        self.normalize(&self.reference).unwrap()
    }

    pub fn reference_physical(&self) -> PhysicalParams {
        PhysicalParams {
            values: self.reference.clone(),
        }
    }

    /// True when every component of `physical` lies inside the box.
    pub fn contains_physical(&self, physical: &[f64]) -> bool {
        physical.len() == self.n_dims()
            && physical
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&p, (&lo, &hi))| p >= lo && p <= hi)
    }
}

/// A point of the randomization space in normalized coordinates.
/// Components are clipped into [0, 1] at construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnvParams {
    values: Vec<f64>,
}

impl EnvParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Resolved physical parameters. Unlike `EnvParams` these are not tied to a
/// box; the hard evaluation environments deliberately lie outside it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysicalParams {
    values: Vec<f64>,
}

impl PhysicalParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Out-of-distribution evaluation parameters, resolved directly in physical
/// units: an icy pusher surface (friction below the training box) and a
/// weak reacher arm (gains at 0.6× the training lower bound, dampings at
/// the training upper bound). Pure function.
pub fn hard_env_params(kind: EnvKind) -> PhysicalParams {
    match kind {
        EnvKind::Pusher => PhysicalParams::new(vec![0.05]),
        EnvKind::Reacher => {
            let mut values = vec![0.6 * 0.005; N_LINKS];
            values.extend(vec![0.05; N_LINKS]);
            PhysicalParams::new(values)
        }
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// One goal-directed episode's worth of mutable simulator state.
///
/// State layouts (length 8, goal always in the last two slots):
/// - Reacher: (θ₁..θ₄, effector x, effector y, goal x, goal y)
/// - Pusher:  (agent x, agent y, puck x, puck y, puck vx, puck vy, goal x, goal y)
#[derive(Debug, Clone)]
pub struct EnvInstance {
    kind: EnvKind,
    params: PhysicalParams,
    state: Vec<f64>,
    goal: [f64; 2],
    step_count: u32,
    max_steps: u32,
    done: bool,
}

/// Build an environment instance from normalized parameters.
pub fn make_env(space: &RandomizationSpace, params: &EnvParams, kind: EnvKind) -> Result<EnvInstance> {
    if space.n_dims() != kind.n_rand() {
        return Err(Error::Config(format!(
            "space dimension {} does not match {} (needs {})",
            space.n_dims(),
            kind.name(),
            kind.n_rand()
        )));
    }
    let physical = space.denormalize(params)?;
    make_env_physical(kind, physical)
}

/// Build an environment instance directly from physical parameters
/// (used for the hard out-of-distribution evaluations).
pub fn make_env_physical(kind: EnvKind, params: PhysicalParams) -> Result<EnvInstance> {
    if params.len() != kind.n_rand() {
        return Err(Error::Config(format!(
            "{} takes {} physical parameters, got {}",
            kind.name(),
            kind.n_rand(),
            params.len()
        )));
    }
    let mut env = EnvInstance {
        kind,
        params,
        state: vec![0.0; kind.state_dim()],
        goal: [0.0; 2],
        step_count: 0,
        max_steps: DEFAULT_MAX_STEPS,
        done: false,
    };
    env.reset(kind.canonical_goal())?;
    Ok(env)
}

impl EnvInstance {
    pub fn with_max_steps(mut self, max_steps: u32) -> Self {
        assert!(max_steps > 0, "max_steps must be positive");
        self.max_steps = max_steps;
        let goal = self.goal;
        self.reset(goal).expect("goal was already validated");
        self
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Reset to the fixed initial layout with a new goal; returns the state.
    ///
    /// The goal must lie in the reachable region: the disk of radius 0.4 m
    /// about the reacher base, or the unit workspace square for the pusher.
    pub fn reset(&mut self, goal: [f64; 2]) -> Result<Vec<f64>> {
        match self.kind {
            EnvKind::Reacher => {
                let r = (goal[0] * goal[0] + goal[1] * goal[1]).sqrt();
                if r > REACHER_RADIUS + BOUND_EPS {
                    return Err(Error::Usage(format!(
                        "goal ({}, {}) outside the reachable disk of radius {REACHER_RADIUS}",
                        goal[0], goal[1]
                    )));
                }
            }
            EnvKind::Pusher => {
                if goal.iter().any(|&g| g < -BOUND_EPS || g > 1.0 + BOUND_EPS) {
                    return Err(Error::Usage(format!(
                        "goal ({}, {}) outside the unit workspace square",
                        goal[0], goal[1]
                    )));
                }
            }
        }
        self.goal = goal;
        self.step_count = 0;
        self.done = false;
        match self.kind {
            EnvKind::Reacher => {
                // Straight arm along +x.
                self.state.fill(0.0);
                let ee = forward_kinematics(&self.state[..N_LINKS]);
                self.state[4] = ee[0];
                self.state[5] = ee[1];
            }
            EnvKind::Pusher => {
                self.state[0] = AGENT_START[0];
                self.state[1] = AGENT_START[1];
                self.state[2] = PUCK_START[0];
                self.state[3] = PUCK_START[1];
                self.state[4] = 0.0;
                self.state[5] = 0.0;
            }
        }
        self.state[6] = goal[0];
        self.state[7] = goal[1];
        Ok(self.state.clone())
    }

    /// The point the reward measures: end-effector (reacher) or puck center (pusher).
    pub fn achieved_point(&self) -> [f64; 2] {
        match self.kind {
            EnvKind::Reacher => [self.state[4], self.state[5]],
            EnvKind::Pusher => [self.state[2], self.state[3]],
        }
    }

    /// Euclidean distance between the achieved point and the goal.
    pub fn distance_to_goal(&self) -> f64 {
        let p = self.achieved_point();
        let dx = p[0] - self.goal[0];
        let dy = p[1] - self.goal[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Advance one step. Components of `action` are clipped to [-1, 1].
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage(
                "step() called on a finished episode; reset it first".into(),
            ));
        }
        if action.len() != self.kind.action_dim() {
            return Err(Error::Usage(format!(
                "{} takes {} action components, got {}",
                self.kind.name(),
                self.kind.action_dim(),
                action.len()
            )));
        }
        let mut act = [0.0; 4];
        for (slot, &a) in act.iter_mut().zip(action) {
            *slot = a.clamp(-1.0, 1.0);
        }

        match self.kind {
            EnvKind::Reacher => self.step_reacher(&act[..N_LINKS]),
            EnvKind::Pusher => self.step_pusher(&act[..2]),
        }

        self.step_count += 1;
        let distance = self.distance_to_goal();
        let success = distance < GOAL_THRESHOLD;
        self.done = success || self.step_count >= self.max_steps;
        Ok(StepResult {
            next_state: self.state.clone(),
            reward: -distance,
            done: self.done,
            success,
        })
    }

    fn step_reacher(&mut self, action: &[f64]) {
        let (gains, dampings) = self.params.values().split_at(N_LINKS);
        for j in 0..N_LINKS {
            self.state[j] += gains[j] * action[j] - dampings[j] * self.state[j];
        }
        let ee = forward_kinematics(&self.state[..N_LINKS]);
        self.state[4] = ee[0];
        self.state[5] = ee[1];
    }

    fn step_pusher(&mut self, action: &[f64]) {
        let friction = self.params.values()[0];
        let push = [AGENT_SPEED * action[0], AGENT_SPEED * action[1]];

        self.state[0] = (self.state[0] + push[0]).clamp(0.0, 1.0);
        self.state[1] = (self.state[1] + push[1]).clamp(0.0, 1.0);

        let dx = self.state[2] - self.state[0];
        let dy = self.state[3] - self.state[1];
        let dist = (dx * dx + dy * dy).sqrt();
        if dist < CONTACT_RADIUS {
            // Contact: the puck takes the push velocity projected onto the
            // agent→puck normal.
            let n = if dist > 1e-12 {
                [dx / dist, dy / dist]
            } else {
                [1.0, 0.0]
            };
            let along = push[0] * n[0] + push[1] * n[1];
            self.state[4] = along * n[0];
            self.state[5] = along * n[1];
        }

        // Walled table: the puck stays inside the workspace.
        self.state[2] = (self.state[2] + self.state[4]).clamp(0.0, 1.0);
        self.state[3] = (self.state[3] + self.state[5]).clamp(0.0, 1.0);
        self.state[4] *= 1.0 - friction;
        self.state[5] *= 1.0 - friction;
    }
}

/// End-effector position of the 4-link planar arm at the given joint angles.
pub fn forward_kinematics(angles: &[f64]) -> [f64; 2] {
    let mut cum = 0.0;
    let mut x = 0.0;
    let mut y = 0.0;
    for &theta in angles {
        cum += theta;
        x += LINK_LENGTH * cum.cos();
        y += LINK_LENGTH * cum.sin();
    }
    [x, y]
}

/// Sample a goal uniformly from the reachable region.
pub fn sample_goal(kind: EnvKind, rng: &mut impl Rng) -> [f64; 2] {
    match kind {
        EnvKind::Reacher => {
            let r = REACHER_RADIUS * rng.random::<f64>().sqrt();
            let ang = std::f64::consts::TAU * rng.random::<f64>();
            [r * ang.cos(), r * ang.sin()]
        }
        EnvKind::Pusher => [rng.random::<f64>(), rng.random::<f64>()],
    }
}

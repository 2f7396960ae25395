//! Off-policy deterministic actor-critic with replay buffer and target
//! networks. Trains the task-solving policy from environment rewards; the
//! goal-setting policy reuses its actor weights by value copy.

use crate::approx::{Activation, Adam, Approximator};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// One environment interaction stored for replay.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub goal: [f64; 2],
}

/// Fixed-capacity FIFO replay store.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(4096)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Insert, evicting the oldest element once full.
    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.storage[idx]
    }

    /// Contents oldest-first (for inspection; sampling uses raw indices).
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        let (tail, head) = self.storage.split_at(self.cursor);
        head.iter().chain(tail.iter())
    }

    fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.len())).collect()
    }
}

/// Hyperparameters for one agent.
#[derive(Debug, Clone)]
pub struct DdpgConfig {
    /// Inclusive bounds the Bellman regression target is clamped to
    /// (the attainable return range of the task; rewards here are
    /// non-positive, so overestimation above zero is always spurious).
    pub target_clamp: (f64, f64),
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: (usize, usize),
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    /// Soft target update rate in (0, 1].
    pub tau: f64,
    /// Gaussian exploration noise scale on actions.
    pub exploration_noise: f64,
    pub batch_size: usize,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            target_clamp: (-150.0, 0.0),
            state_dim: 8,
            action_dim: 2,
            hidden: (64, 64),
            actor_lr: 0.001,
            critic_lr: 0.001,
            gamma: 0.99,
            tau: 0.005,
            exploration_noise: 0.1,
            batch_size: 100,
        }
    }
}

/// Actor-critic pair with slow-moving target copies.
#[derive(Debug)]
pub struct DdpgAgent {
    pub actor: Approximator,
    pub critic: Approximator,
    pub target_actor: Approximator,
    pub target_critic: Approximator,
    actor_opt: Adam,
    critic_opt: Adam,
    cfg: DdpgConfig,
}

impl DdpgAgent {
    pub fn new(cfg: DdpgConfig, rng: &mut impl Rng) -> Self {
        assert!(cfg.tau > 0.0 && cfg.tau <= 1.0, "tau must be in (0, 1]");
        // Policy input is the state with the 2-D goal appended.
        let obs = cfg.state_dim + 2;
        let actor_sizes = [obs, cfg.hidden.0, cfg.hidden.1, cfg.action_dim];
        let critic_sizes = [obs + cfg.action_dim, cfg.hidden.0, cfg.hidden.1, 1];
        let actor = Approximator::new(&actor_sizes, Activation::Tanh, rng);
        let critic = Approximator::new(&critic_sizes, Activation::Identity, rng);
        let target_actor = actor.clone();
        let target_critic = critic.clone();
        let actor_opt = Adam::new(actor.params().len(), cfg.actor_lr);
        let critic_opt = Adam::new(critic.params().len(), cfg.critic_lr);
        Self {
            actor,
            critic,
            target_actor,
            target_critic,
            actor_opt,
            critic_opt,
            cfg,
        }
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.cfg
    }

    pub fn action_dim(&self) -> usize {
        self.cfg.action_dim
    }

    fn obs(state: &[f64], goal: [f64; 2]) -> Vec<f64> {
        let mut x = Vec::with_capacity(state.len() + 2);
        x.extend_from_slice(state);
        x.extend_from_slice(&goal);
        x
    }

    /// Deterministic policy output on (state ⊕ goal); with `explore`,
    /// zero-mean Gaussian noise is added and the result clipped to [-1, 1].
    pub fn act(
        &self,
        state: &[f64],
        goal: [f64; 2],
        explore: bool,
        rng: &mut impl Rng,
    ) -> Result<Vec<f64>> {
        let noise = if explore { self.cfg.exploration_noise } else { 0.0 };
        policy_action(&self.actor, state, goal, noise, rng)
    }

    /// Detached copy of the online actor parameters.
    pub fn copy_actor_params(&self) -> Vec<f64> {
        self.actor.params().to_vec()
    }

    /// One minibatch update: regress the critic toward the bootstrapped
    /// target, ascend the actor on the critic, soft-update both targets.
    /// Returns `None` (skipped) when the buffer holds fewer than
    /// `batch_size` transitions.
    pub fn update(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut impl Rng,
    ) -> Result<Option<(f64, f64)>> {
        let batch = self.cfg.batch_size;
        if buffer.len() < batch {
            return Ok(None);
        }
        let idx = buffer.sample_indices(batch, rng);
        let inv = 1.0 / batch as f64;

        // Critic regression toward r + γ(1-done)·Q'(s', π'(s')).
        let mut critic_grad = vec![0.0; self.critic.params().len()];
        let mut critic_loss = 0.0;
        for &i in &idx {
            let t = buffer.get(i);
            let next_obs = Self::obs(&t.next_state, t.goal);
            let next_action = self.target_actor.forward(&next_obs)?;
            let mut next_in = next_obs.clone();
            next_in.extend_from_slice(&next_action);
            let q_next = self.target_critic.forward_scalar(&next_in)?;
            let target = (t.reward + self.cfg.gamma * (1.0 - f64::from(t.done as u8)) * q_next)
                .clamp(self.cfg.target_clamp.0, self.cfg.target_clamp.1);

            let mut q_in = Self::obs(&t.state, t.goal);
            q_in.extend_from_slice(&t.action);
            let q = self.critic.forward_scalar(&q_in)?;
            let diff = q - target;
            critic_loss += diff * diff * inv;
            let g = self.critic.gradient(&q_in, &[2.0 * diff * inv])?;
            for (acc, gi) in critic_grad.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        self.critic_opt
            .step(self.critic.params_mut(), &critic_grad)?;

        // Actor ascent on Q(s, π(s)).
        let mut actor_grad = vec![0.0; self.actor.params().len()];
        let mut actor_objective = 0.0;
        let obs_dim = self.cfg.state_dim + 2;
        for &i in &idx {
            let t = buffer.get(i);
            let obs = Self::obs(&t.state, t.goal);
            let action = self.actor.forward(&obs)?;
            let mut q_in = obs.clone();
            q_in.extend_from_slice(&action);
            actor_objective += self.critic.forward_scalar(&q_in)? * inv;
            let (_, input_grad) = self.critic.gradient_with_input(&q_in, &[1.0])?;
            let dq_da = &input_grad[obs_dim..];
            // Ascend: Adam minimizes, so feed the negated chain product.
            let upstream: Vec<f64> = dq_da.iter().map(|g| -g * inv).collect();
            let g = self.actor.gradient(&obs, &upstream)?;
            for (acc, gi) in actor_grad.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        self.actor_opt.step(self.actor.params_mut(), &actor_grad)?;

        soft_update(&mut self.target_critic, &self.critic, self.cfg.tau);
        soft_update(&mut self.target_actor, &self.actor, self.cfg.tau);

        for (name, net) in [("actor", &self.actor), ("critic", &self.critic)] {
            if net.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Numeric(format!(
                    "{name} parameters left the finite range after update"
                )));
            }
        }
        Ok(Some((critic_loss, actor_objective)))
    }
}

/// Run any actor network on (state ⊕ goal), with optional Gaussian action
/// noise, clipped to [-1, 1]. Shared by the learning agent and the
/// goal-setting policy that acts with copied weights.
pub fn policy_action(
    actor: &Approximator,
    state: &[f64],
    goal: [f64; 2],
    noise: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let mut x = Vec::with_capacity(state.len() + 2);
    x.extend_from_slice(state);
    x.extend_from_slice(&goal);
    let mut action = actor.forward(&x)?;
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise)
            .map_err(|e| Error::Numeric(format!("bad exploration noise scale: {e}")))?;
        for a in &mut action {
            *a = (*a + normal.sample(rng)).clamp(-1.0, 1.0);
        }
    }
    Ok(action)
}

/// θ_target ← τ·θ_online + (1-τ)·θ_target, element-wise.
pub fn soft_update(target: &mut Approximator, online: &Approximator, tau: f64) {
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t += tau * (o - *t);
    }
}

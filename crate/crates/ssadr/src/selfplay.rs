//! Asymmetric self-play harness.
//!
//! Alice acts in the reference environment and decides when to stop; her
//! final achieved point becomes Bob's goal in a randomized instance. The
//! time each side takes couples into a single self-supervised reward that
//! trains Alice's stopping policy (plain policy gradient) and, upstream,
//! the environment-sampling particles.

use crate::approx::{Activation, Adam, Approximator};
use crate::ddpg::{policy_action, DdpgAgent, ReplayBuffer, Transition};
use crate::envs::EnvInstance;
use crate::error::{Error, Result};
use rand::Rng;

/// Mean hold duration (steps) of coherent exploration actions.
pub const EXPLORE_HOLD_STEPS: f64 = 8.0;

/// Goal-setter reward: υ·max(0, t_b − t_a). Largest when the proposer is
/// fast and the solver is slow; never negative.
pub fn alice_reward(t_a: u32, t_b: u32, upsilon: f64) -> f64 {
    upsilon * (t_b as f64 - t_a as f64).max(0.0)
}

/// Uniform random action in [-1, 1]^k (replay warmup).
pub fn uniform_action(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Temporally-coherent exploration in bursts: with probability mix/hold a
/// burst begins, and a uniform random action is then held for a geometric
/// number of steps (so exploration still covers a `mix` fraction of steps).
/// White action noise only jitters an agent in place; held actions produce
/// the sustained excursions (and sustained accidental pushes) that contact
/// tasks need to generate any learning signal at all.
#[derive(Debug)]
pub struct BurstExplorer {
    dim: usize,
    mean_hold: f64,
    action: Vec<f64>,
    remaining: u32,
}

impl BurstExplorer {
    pub fn new(dim: usize, mean_hold: f64) -> Self {
        Self {
            dim,
            mean_hold: mean_hold.max(1.0),
            action: vec![0.0; dim],
            remaining: 0,
        }
    }

    /// The exploration action for this step, or `None` when the policy
    /// should act. `mix` ≥ 1 explores every step (back-to-back holds).
    pub fn step(&mut self, mix: f64, rng: &mut impl Rng) -> Option<Vec<f64>> {
        if self.remaining == 0 {
            let start = mix >= 1.0 || rng.random::<f64>() < mix / self.mean_hold;
            if !start {
                return None;
            }
            self.action = uniform_action(self.dim, rng);
            let u: f64 = rng.random::<f64>();
            let draw = (-(1.0 - u).ln() * self.mean_hold).ceil();
            self.remaining = (draw as u32).clamp(1, 4 * self.mean_hold as u32);
        }
        self.remaining -= 1;
        Some(self.action.clone())
    }
}

/// Solver's self-play reward: −υ·t_b (time penalty); never positive.
pub fn bob_selfplay_reward(t_b: u32, upsilon: f64) -> f64 {
    -upsilon * t_b as f64
}

/// One stop/continue choice made by the stopping policy, with everything
/// needed to recompute its likelihood gradient.
#[derive(Debug, Clone)]
pub struct StopDecision {
    /// Network input: initial state ⊕ current state.
    pub input: Vec<f64>,
    pub stopped: bool,
    pub log_prob: f64,
}

/// Product of one self-play episode.
#[derive(Debug, Clone)]
pub struct SelfPlayOutcome {
    /// Steps the goal-setter used (the stop decision counts as a step).
    pub t_a: u32,
    /// Steps the solver used; the episode cap on failure.
    pub t_b: u32,
    /// The proposed goal: the achieved point at the stop.
    pub target: [f64; 2],
    pub alice_reward: f64,
    pub bob_success: bool,
    /// Sampled stop/continue decisions (the forced stop at the step limit
    /// is not a sampled decision and is not listed).
    pub decisions: Vec<StopDecision>,
    /// Environment steps the goal-setter actually executed.
    pub alice_env_steps: u32,
    /// Environment steps the solver actually executed (differs from `t_b`
    /// on failure or when truncated by the step budget).
    pub bob_env_steps: u32,
}

impl SelfPlayOutcome {
    pub fn stop_log_probs(&self) -> Vec<f64> {
        self.decisions.iter().map(|d| d.log_prob).collect()
    }
}

/// Knobs for one episode run.
#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub upsilon: f64,
    /// Action noise for Alice's acting policy (she inherits the solver's
    /// exploration scale unless configured otherwise).
    pub alice_noise: f64,
    /// Exploration for Bob (disabled during evaluation-style runs).
    pub bob_explore: bool,
    /// Hard cap on Bob's environment steps this episode (budget
    /// truncation at the end of training); `u32::MAX` for no cap.
    pub bob_step_cap: u32,
    /// Goal given to Alice's acting policy (her private intent; the
    /// proposed goal for Bob is wherever she actually stops).
    pub alice_goal: [f64; 2],
    /// Probability per step of taking a uniform random action instead of
    /// the policy action (1.0 during replay warmup; a small persistent
    /// fraction afterwards keeps contact discovery alive).
    pub explore_mix: f64,
    /// Store the goal-setter's environment transitions (toward her intent
    /// goal) in the shared replay buffer; both acting policies train from
    /// environment rewards, and her phase supplies state coverage the
    /// solver's phase cannot reach yet.
    pub share_alice_experience: bool,
    /// When set, every stored transition carries this constant reward (a
    /// per-step time penalty summing to the self-play solver reward)
    /// instead of the environment reward.
    pub constant_bob_reward: Option<f64>,
}

/// Bernoulli stopping policy with a running-mean reward baseline.
#[derive(Debug)]
pub struct StoppingPolicy {
    net: Approximator,
    opt: Adam,
    baseline: f64,
    baseline_rate: f64,
}

impl StoppingPolicy {
    pub fn new(state_dim: usize, hidden: (usize, usize), lr: f64, rng: &mut impl Rng) -> Self {
        let net = Approximator::new(
            &[2 * state_dim, hidden.0, hidden.1, 1],
            Activation::Sigmoid,
            rng,
        );
        let opt = Adam::new(net.params().len(), lr);
        Self {
            net,
            opt,
            baseline: 0.0,
            baseline_rate: 0.01,
        }
    }

    pub fn net(&self) -> &Approximator {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Approximator {
        &mut self.net
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    /// STOP probability for (initial state ⊕ current state).
    pub fn stop_prob(&self, initial: &[f64], current: &[f64]) -> Result<f64> {
        let mut input = Vec::with_capacity(initial.len() + current.len());
        input.extend_from_slice(initial);
        input.extend_from_slice(current);
        self.net.forward_scalar(&input)
    }
}

/// Run one self-play episode: Alice explores the reference instance until
/// her stopping policy fires (forced at the step limit), then Bob chases
/// her final achieved point in the randomized instance. Bob's transitions
/// are pushed to the replay buffer with the proposed goal attached.
pub fn run_selfplay_episode(
    alice_actor: &Approximator,
    stopping: &StoppingPolicy,
    bob: &DdpgAgent,
    buffer: &mut ReplayBuffer,
    env_ref: &mut EnvInstance,
    env_rand: &mut EnvInstance,
    opts: &EpisodeOptions,
    rng: &mut impl Rng,
) -> Result<SelfPlayOutcome> {
    // Alice's phase.
    let initial_state = env_ref.reset(opts.alice_goal)?;
    let max_steps = env_ref.max_steps();
    let mut explorer = BurstExplorer::new(env_ref.kind().action_dim(), EXPLORE_HOLD_STEPS);
    let mut decisions = Vec::new();
    let mut alice_env_steps = 0u32;
    let mut t_a = 0u32;
    let target;
    loop {
        t_a += 1;
        let current = env_ref.state().to_vec();
        let forced = t_a >= max_steps || env_ref.is_done();
        if forced {
            target = env_ref.achieved_point();
            break;
        }
        let p = stopping.stop_prob(&initial_state, &current)?;
        let stopped = rng.random::<f64>() < p;
        let mut input = Vec::with_capacity(2 * current.len());
        input.extend_from_slice(&initial_state);
        input.extend_from_slice(&current);
        decisions.push(StopDecision {
            input,
            stopped,
            log_prob: if stopped { p.ln() } else { (1.0 - p).ln() },
        });
        if stopped {
            target = env_ref.achieved_point();
            break;
        }
        let action = match explorer.step(opts.explore_mix, rng) {
            Some(a) => a,
            None => policy_action(alice_actor, &current, opts.alice_goal, opts.alice_noise, rng)?,
        };
        let result = env_ref.step(&action)?;
        alice_env_steps += 1;
        if opts.share_alice_experience {
            buffer.push(Transition {
                state: current,
                action,
                reward: result.reward,
                next_state: result.next_state,
                done: result.success,
                goal: opts.alice_goal,
            });
        }
    }

    // Bob's phase.
    env_rand.reset(target)?;
    let bob_max = env_rand.max_steps();
    let mut explorer = BurstExplorer::new(env_rand.kind().action_dim(), EXPLORE_HOLD_STEPS);
    let mut bob_env_steps = 0u32;
    let mut success = false;
    while bob_env_steps < opts.bob_step_cap && !env_rand.is_done() {
        let state = env_rand.state().to_vec();
        let action = match explorer.step(opts.explore_mix, rng) {
            Some(a) => a,
            None => bob.act(&state, target, opts.bob_explore, rng)?,
        };
        let result = env_rand.step(&action)?;
        bob_env_steps += 1;
        // Time limits are not true terminals: only success cuts the
        // bootstrap in the stored transition.
        buffer.push(Transition {
            state,
            action,
            reward: opts.constant_bob_reward.unwrap_or(result.reward),
            next_state: result.next_state,
            done: result.success,
            goal: target,
        });
        if result.success {
            success = true;
        }
    }
    let t_b = if success { bob_env_steps } else { bob_max };

    let reward = alice_reward(t_a, t_b, opts.upsilon);
    debug_assert!(reward >= 0.0);
    Ok(SelfPlayOutcome {
        t_a,
        t_b,
        target,
        alice_reward: reward,
        bob_success: success,
        decisions,
        alice_env_steps,
        bob_env_steps,
    })
}

/// Surrogate objective whose ascent is the plain policy gradient:
/// advantage · Σ_t log π(decision_t). Returned as a loss (negated).
pub fn stop_surrogate_loss(
    net: &Approximator,
    decisions: &[StopDecision],
    advantage: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for d in decisions {
        let p = net.forward_scalar(&d.input)?;
        let log_prob = if d.stopped { p.ln() } else { (1.0 - p).ln() };
        total += log_prob;
    }
    Ok(-advantage * total)
}

/// Analytic gradient of [`stop_surrogate_loss`] in the network parameters.
pub fn stop_surrogate_gradient(
    net: &Approximator,
    decisions: &[StopDecision],
    advantage: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; net.params().len()];
    for d in decisions {
        let p = net.forward_scalar(&d.input)?;
        // d(-adv·logπ)/dp through the Bernoulli likelihood.
        let upstream = if d.stopped {
            -advantage / p
        } else {
            advantage / (1.0 - p)
        };
        let g = net.gradient(&d.input, &[upstream])?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    Ok(grad)
}

/// One policy-gradient step on the stopping policy from a finished episode;
/// the reward baseline (running mean, rate 0.01) is updated afterwards.
/// Returns the surrogate loss before the step.
pub fn update_stopping_policy(
    stopping: &mut StoppingPolicy,
    outcome: &SelfPlayOutcome,
) -> Result<f64> {
    if outcome.decisions.iter().any(|d| !d.log_prob.is_finite()) {
        return Err(Error::Numeric(
            "non-finite stop log-probability in episode outcome".into(),
        ));
    }
    let advantage = outcome.alice_reward - stopping.baseline;
    let loss = stop_surrogate_loss(&stopping.net, &outcome.decisions, advantage)?;
    let grad = stop_surrogate_gradient(&stopping.net, &outcome.decisions, advantage)?;
    stopping.opt.step(stopping.net.params_mut(), &grad)?;
    stopping.baseline += stopping.baseline_rate * (outcome.alice_reward - stopping.baseline);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::DdpgConfig;
    use crate::envs::{make_env, EnvKind, RandomizationSpace, RangeMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn pusher_pair() -> (EnvInstance, EnvInstance) {
        let space = RandomizationSpace::for_env(EnvKind::Pusher, RangeMode::Calibrated);
        let env_ref = make_env(&space, &space.reference_params(), EnvKind::Pusher).unwrap();
        let env_rand = make_env(&space, &space.reference_params(), EnvKind::Pusher).unwrap();
        (env_ref, env_rand)
    }

    fn bob_agent(seed: u64) -> DdpgAgent {
        DdpgAgent::new(
            DdpgConfig {
                state_dim: 8,
                action_dim: 2,
                hidden: (16, 16),
                batch_size: 16,
                ..DdpgConfig::default()
            },
            &mut rng(seed),
        )
    }

    fn options() -> EpisodeOptions {
        EpisodeOptions {
            upsilon: 0.2,
            alice_noise: 0.1,
            bob_explore: true,
            bob_step_cap: u32::MAX,
            alice_goal: [0.7, 0.5],
            explore_mix: 0.0,
            share_alice_experience: false,
            constant_bob_reward: None,
        }
    }

    #[test]
    fn alice_reward_examples() {
        assert_eq!(alice_reward(10, 30, 0.2), 4.0);
        assert_eq!(alice_reward(30, 10, 0.2), 0.0);
        assert_eq!(alice_reward(17, 17, 0.9), 0.0);
    }

    #[test]
    fn bob_reward_examples() {
        assert_eq!(bob_selfplay_reward(30, 0.2), -6.0);
        assert_eq!(bob_selfplay_reward(0, 0.2), 0.0);
        let mut last = 1.0;
        for t in 0..50 {
            let r = bob_selfplay_reward(t, 0.2);
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn rewards_match_direct_formulas_on_random_fixture() {
        let mut r = rng(1);
        for _ in 0..1000 {
            let t_a: u32 = r.random_range(0..=100);
            let t_b: u32 = r.random_range(0..=100);
            let upsilon: f64 = r.random_range(0.01..2.0);
            let direct_a = upsilon * ((t_b as f64) - (t_a as f64)).max(0.0);
            assert_eq!(alice_reward(t_a, t_b, upsilon), direct_a);
            assert!(alice_reward(t_a, t_b, upsilon) >= 0.0);
            let direct_b = -upsilon * t_b as f64;
            assert_eq!(bob_selfplay_reward(t_b, upsilon), direct_b);
            assert!(bob_selfplay_reward(t_b, upsilon) <= 0.0);
        }
    }

    /// A stopping net whose output bias saturates the sigmoid to ~1.
    fn always_stop_policy(rng_seed: u64) -> StoppingPolicy {
        let mut sp = StoppingPolicy::new(8, (8, 8), 0.001, &mut rng(rng_seed));
        let n = sp.net.params().len();
        let zeros = vec![0.0; n];
        sp.net.set_params(&zeros).unwrap();
        sp.net.params_mut()[n - 1] = 40.0;
        sp
    }

    #[test]
    fn saturated_stop_probability_gives_t_a_one() {
        let stopping = always_stop_policy(3);
        let bob = bob_agent(4);
        let alice = bob.actor.clone();
        let (mut env_ref, mut env_rand) = pusher_pair();
        let mut buf = ReplayBuffer::new(1000);
        let outcome = run_selfplay_episode(
            &alice,
            &stopping,
            &bob,
            &mut buf,
            &mut env_ref,
            &mut env_rand,
            &options(),
            &mut rng(5),
        )
        .unwrap();
        assert_eq!(outcome.t_a, 1);
        // The proposed goal is the untouched puck start; Bob succeeds on
        // his first step.
        assert_eq!(outcome.target, [0.4, 0.5]);
        assert!(outcome.bob_success);
        assert_eq!(outcome.t_b, 1);
        assert_eq!(outcome.alice_reward, 0.0);
        assert_eq!(buf.len(), 1);
    }

    /// A stopping net saturated to never stop: Alice runs to the limit.
    #[test]
    fn never_stopping_forces_stop_at_step_limit() {
        let mut sp = always_stop_policy(6);
        let n = sp.net.params().len();
        sp.net.params_mut()[n - 1] = -40.0;
        let bob = bob_agent(7);
        let alice = bob.actor.clone();
        let (mut env_ref, mut env_rand) = pusher_pair();
        let mut buf = ReplayBuffer::new(10_000);
        let outcome = run_selfplay_episode(
            &alice,
            &sp,
            &bob,
            &mut buf,
            &mut env_ref,
            &mut env_rand,
            &options(),
            &mut rng(8),
        )
        .unwrap();
        assert_eq!(outcome.t_a, env_ref.max_steps());
        // The forced stop is not a sampled decision.
        assert_eq!(outcome.decisions.len() as u32, outcome.t_a - 1);
        assert!(outcome.t_a + outcome.t_b <= 2 * env_ref.max_steps());
    }

    #[test]
    fn episode_invariants_across_seeds() {
        for seed in 0..10 {
            let stopping = StoppingPolicy::new(8, (16, 16), 0.001, &mut rng(100 + seed));
            let bob = bob_agent(200 + seed);
            let alice = bob.actor.clone();
            let (mut env_ref, mut env_rand) = pusher_pair();
            let mut buf = ReplayBuffer::new(10_000);
            let outcome = run_selfplay_episode(
                &alice,
                &stopping,
                &bob,
                &mut buf,
                &mut env_ref,
                &mut env_rand,
                &options(),
                &mut rng(300 + seed),
            )
            .unwrap();
            assert!(outcome.alice_reward >= 0.0);
            assert!(outcome.t_a >= 1 && outcome.t_a <= env_ref.max_steps());
            assert!(outcome.t_b >= 1 && outcome.t_b <= env_rand.max_steps());
            assert!(outcome.t_a + outcome.t_b <= 2 * env_ref.max_steps());
            if outcome.t_b <= outcome.t_a {
                assert_eq!(outcome.alice_reward, 0.0);
            }
            assert_eq!(buf.len() as u32, outcome.bob_env_steps);
        }
    }

    #[test]
    fn identical_seeds_give_identical_outcomes() {
        let run = |seed: u64| {
            let stopping = StoppingPolicy::new(8, (16, 16), 0.001, &mut rng(11));
            let bob = bob_agent(12);
            let alice = bob.actor.clone();
            let (mut env_ref, mut env_rand) = pusher_pair();
            let mut buf = ReplayBuffer::new(10_000);
            run_selfplay_episode(
                &alice,
                &stopping,
                &bob,
                &mut buf,
                &mut env_ref,
                &mut env_rand,
                &options(),
                &mut rng(seed),
            )
            .unwrap()
        };
        let a = run(77);
        let b = run(77);
        assert_eq!(a.t_a, b.t_a);
        assert_eq!(a.t_b, b.t_b);
        assert_eq!(a.target, b.target);
        assert_eq!(a.alice_reward, b.alice_reward);
        assert_eq!(a.stop_log_probs(), b.stop_log_probs());
    }

    #[test]
    fn bob_step_cap_truncates_and_counts_as_failure() {
        let mut sp = always_stop_policy(13);
        let n = sp.net.params().len();
        sp.net.params_mut()[n - 1] = -40.0; // Alice never stops voluntarily.
        let bob = bob_agent(14);
        // Alice rams straight +x at full strength, towing the puck to the
        // far wall, so her forced-stop target is unreachable in 3 steps.
        let mut alice = Approximator::zeros(bob.actor.layer_sizes(), Activation::Tanh);
        let n_alice = alice.params().len();
        alice.params_mut()[n_alice - 2] = 40.0; // pre-squash bias on action x
        let (mut env_ref, mut env_rand) = pusher_pair();
        let mut buf = ReplayBuffer::new(10_000);
        let mut opts = options();
        opts.bob_step_cap = 3;
        opts.alice_noise = 0.0;
        // Intent goal off the tow line so her own episode never succeeds.
        opts.alice_goal = [0.9, 0.9];
        let outcome = run_selfplay_episode(
            &alice, &sp, &bob, &mut buf, &mut env_ref, &mut env_rand, &opts, &mut rng(15),
        )
        .unwrap();
        assert!(
            outcome.target[0] > 0.9,
            "towing should leave the puck at the far wall, target {:?}",
            outcome.target
        );
        assert!(!outcome.bob_success);
        assert_eq!(outcome.bob_env_steps, 3);
        assert_eq!(outcome.t_b, env_rand.max_steps());
    }

    fn fixed_decisions(net: &Approximator, seed: u64, n: usize) -> Vec<StopDecision> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| {
                let input: Vec<f64> = (0..net.input_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
                let stopped = r.random::<f64>() < 0.3;
                StopDecision {
                    input,
                    stopped,
                    log_prob: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let sp = StoppingPolicy::new(4, (12, 12), 0.001, &mut rng(21));
        let decisions = fixed_decisions(&sp.net, 22, 7);
        let advantage = 1.7;
        let analytic = stop_surrogate_gradient(&sp.net, &decisions, advantage).unwrap();
        let mut r = rng(23);
        for _ in 0..64 {
            let idx = r.random_range(0..sp.net.params().len());
            let mut plus = sp.net.clone();
            plus.params_mut()[idx] += 1e-5;
            let mut minus = sp.net.clone();
            minus.params_mut()[idx] -= 1e-5;
            let numeric = (stop_surrogate_loss(&plus, &decisions, advantage).unwrap()
                - stop_surrogate_loss(&minus, &decisions, advantage).unwrap())
                / 2e-5;
            let denom = analytic[idx].abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic[idx] - numeric).abs() / denom <= 1e-4,
                "param {idx}: {} vs {numeric}",
                analytic[idx]
            );
        }
    }

    #[test]
    fn zero_advantage_leaves_policy_unchanged() {
        let mut sp = StoppingPolicy::new(4, (12, 12), 0.01, &mut rng(31));
        sp.baseline = 2.5;
        let before = sp.net.params().to_vec();
        let outcome = SelfPlayOutcome {
            t_a: 5,
            t_b: 10,
            target: [0.0, 0.0],
            alice_reward: 2.5, // equals baseline
            bob_success: true,
            decisions: fixed_decisions(&sp.net, 32, 5),
            alice_env_steps: 4,
            bob_env_steps: 10,
        };
        update_stopping_policy(&mut sp, &outcome).unwrap();
        assert_eq!(sp.net.params(), &before[..]);
        // Baseline moved toward the reward (no-op here since equal).
        assert_eq!(sp.baseline, 2.5);
    }

    #[test]
    fn advantage_sign_flips_update_direction() {
        let base = StoppingPolicy::new(4, (12, 12), 0.01, &mut rng(41));
        let decisions = fixed_decisions(&base.net, 42, 6);
        let run = |reward: f64| -> Vec<f64> {
            let mut sp = StoppingPolicy::new(4, (12, 12), 0.01, &mut rng(41));
            sp.baseline = 1.0;
            let outcome = SelfPlayOutcome {
                t_a: 5,
                t_b: 10,
                target: [0.0, 0.0],
                alice_reward: reward,
                bob_success: false,
                decisions: decisions.clone(),
                alice_env_steps: 4,
                bob_env_steps: 10,
            };
            update_stopping_policy(&mut sp, &outcome).unwrap();
            sp.net
                .params()
                .iter()
                .zip(base.net.params())
                .map(|(a, b)| a - b)
                .collect()
        };
        let up = run(2.0); // advantage +1
        let down = run(0.0); // advantage -1
        let mut checked = 0;
        for (u, d) in up.iter().zip(&down) {
            if u.abs() > 1e-12 || d.abs() > 1e-12 {
                assert!(
                    (u * d) < 0.0,
                    "deltas should have opposite signs: {u} vs {d}"
                );
                checked += 1;
            }
        }
        assert!(checked > 0, "at least some parameters must move");
    }

    /// With identical deterministic weights for both sides, no noise, and
    /// the same environment, the solver replays the goal-setter's action
    /// sequence and reaches her final state no later than she did.
    #[test]
    fn deterministic_retrace_reaches_goal_within_setter_time() {
        // Goal-blind constant-action policy: bias-only network, so the
        // goal inputs (which differ between the two phases) are ignored.
        let bob_cfg = DdpgConfig {
            state_dim: 8,
            action_dim: 2,
            hidden: (8, 8),
            exploration_noise: 0.0,
            ..DdpgConfig::default()
        };
        let mut bob = DdpgAgent::new(bob_cfg, &mut rng(81));
        let mut constant_actor = Approximator::zeros(bob.actor.layer_sizes(), Activation::Tanh);
        let n = constant_actor.params().len();
        // Pre-squash biases: tow the puck up-right at moderate speed.
        constant_actor.params_mut()[n - 2] = 1.2;
        constant_actor.params_mut()[n - 1] = 0.4;
        bob.actor = constant_actor.clone();

        let mut sp = always_stop_policy(82);
        let n_sp = sp.net.params().len();
        sp.net.params_mut()[n_sp - 1] = -40.0; // stop only at the limit

        let (mut env_ref, mut env_rand) = pusher_pair();
        let mut buf = ReplayBuffer::new(100_000);
        let mut opts = options();
        opts.alice_noise = 0.0;
        opts.alice_goal = [0.9, 0.9];
        let outcome = run_selfplay_episode(
            &constant_actor,
            &sp,
            &bob,
            &mut buf,
            &mut env_ref,
            &mut env_rand,
            &opts,
            &mut rng(83),
        )
        .unwrap();
        assert!(
            outcome.bob_success,
            "replaying the same deterministic actions must reach the proposed goal"
        );
        assert!(
            outcome.t_b <= outcome.t_a,
            "retrace should take no longer: t_b {} vs t_a {}",
            outcome.t_b,
            outcome.t_a
        );
    }

    #[test]
    fn constant_reward_option_sums_to_selfplay_reward() {
        let stopping = StoppingPolicy::new(8, (16, 16), 0.001, &mut rng(61));
        let bob = bob_agent(62);
        let alice = bob.actor.clone();
        let (mut env_ref, mut env_rand) = pusher_pair();
        let mut buf = ReplayBuffer::new(10_000);
        let mut opts = options();
        opts.constant_bob_reward = Some(-opts.upsilon);
        let outcome = run_selfplay_episode(
            &alice,
            &stopping,
            &bob,
            &mut buf,
            &mut env_ref,
            &mut env_rand,
            &opts,
            &mut rng(63),
        )
        .unwrap();
        let total: f64 = buf.iter_fifo().map(|t| t.reward).sum();
        let expected = bob_selfplay_reward(outcome.bob_env_steps, opts.upsilon);
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn baseline_tracks_running_mean() {
        let mut sp = StoppingPolicy::new(4, (8, 8), 0.001, &mut rng(51));
        let outcome = |r: f64| SelfPlayOutcome {
            t_a: 1,
            t_b: 1,
            target: [0.0, 0.0],
            alice_reward: r,
            bob_success: true,
            decisions: vec![],
            alice_env_steps: 0,
            bob_env_steps: 1,
        };
        update_stopping_policy(&mut sp, &outcome(10.0)).unwrap();
        assert!((sp.baseline() - 0.1).abs() < 1e-12);
        update_stopping_policy(&mut sp, &outcome(10.0)).unwrap();
        assert!((sp.baseline() - (0.1 + 0.01 * 9.9)).abs() < 1e-12);
    }
}

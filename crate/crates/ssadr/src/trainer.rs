//! Training orchestration: the coupled-curriculum regime, its three
//! baselines, the evaluation schedule, and run artifacts (metrics stream,
//! resolved config, checkpoints).
//!
//! Every stochastic choice in a run draws from one seeded generator, so a
//! (config, seed) pair reproduces its metrics file byte for byte.
//! Evaluation goals come from a separate generator derived from
//! (seed, evaluation index) only, making evaluation sets identical across
//! regimes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::adr::{
    estimate_grad_j, featurize_trajectory, init_particles, sample_params, svpg_update,
    Discriminator, Particle, ParticleEpisode,
};
use crate::approx::Approximator;
use crate::config::{Algo, BobReward, RunConfig, UdrGoalMode};
use crate::ddpg::{DdpgAgent, DdpgConfig, ReplayBuffer, Transition};
use crate::envs::{
    hard_env_params, make_env, make_env_physical, sample_goal, EnvInstance, EnvKind, EnvParams,
    PhysicalParams, RandomizationSpace,
};
use crate::error::{Error, Result};
use crate::metrics::{EvalEnv, EvalRecord, MetricsWriter, Record};
use crate::selfplay::{
    run_selfplay_episode, update_stopping_policy, BurstExplorer, EpisodeOptions, StoppingPolicy,
    EXPLORE_HOLD_STEPS,
};

/// Planned evaluation points: every `interval` solver steps up to `total`.
#[derive(Debug, Clone)]
pub struct EvalSchedule {
    interval: u64,
    total: u64,
}

impl EvalSchedule {
    pub fn new(total_timesteps: u64, eval_interval: u64) -> Result<Self> {
        if eval_interval == 0 || total_timesteps % eval_interval != 0 {
            return Err(Error::Config(format!(
                "eval_interval {eval_interval} must divide total_timesteps {total_timesteps}"
            )));
        }
        Ok(Self {
            interval: eval_interval,
            total: total_timesteps,
        })
    }

    /// Number of evaluations planned per evaluation environment.
    pub fn planned_per_env(&self) -> u64 {
        self.total / self.interval
    }

    pub fn marks(&self) -> Vec<u64> {
        (1..=self.planned_per_env()).map(|k| k * self.interval).collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the k-th evaluation of a run: depends on (seed, index) only,
/// never on the regime, so every algorithm sees the same goal sets.
pub fn eval_stream_seed(seed: u64, eval_index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(eval_index.wrapping_add(1)))
}

/// Roll an arbitrary policy on fixed-seed uniform goals; returns the final
/// distance of each episode. No exploration, no replay writes.
pub fn evaluate_with_policy<F>(
    kind: EnvKind,
    params: &PhysicalParams,
    max_steps: u32,
    n_episodes: usize,
    eval_seed: u64,
    eval_index: u64,
    mut policy: F,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], [f64; 2]) -> Result<Vec<f64>>,
{
    let mut rng = ChaCha12Rng::seed_from_u64(eval_stream_seed(eval_seed, eval_index));
    let mut distances = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut env = make_env_physical(kind, params.clone())?.with_max_steps(max_steps);
        let goal = sample_goal(kind, &mut rng);
        env.reset(goal)?;
        while !env.is_done() {
            let action = policy(env.state(), goal)?;
            env.step(&action)?;
        }
        distances.push(env.distance_to_goal());
    }
    Ok(distances)
}

/// Deterministic evaluation of a trained agent (no exploration noise).
pub fn evaluate(
    bob: &DdpgAgent,
    kind: EnvKind,
    params: &PhysicalParams,
    max_steps: u32,
    n_episodes: usize,
    eval_seed: u64,
    eval_index: u64,
) -> Result<Vec<f64>> {
    let mut dummy = ChaCha12Rng::seed_from_u64(0);
    evaluate_with_policy(
        kind,
        params,
        max_steps,
        n_episodes,
        eval_seed,
        eval_index,
        |state, goal| bob.act(state, goal, false, &mut dummy),
    )
}

/// Final distances of the do-nothing policy (trend-check baseline).
pub fn zero_action_distances(
    kind: EnvKind,
    params: &PhysicalParams,
    max_steps: u32,
    n_episodes: usize,
    eval_seed: u64,
    eval_index: u64,
) -> Result<Vec<f64>> {
    let dim = kind.action_dim();
    evaluate_with_policy(
        kind,
        params,
        max_steps,
        n_episodes,
        eval_seed,
        eval_index,
        |_, _| Ok(vec![0.0; dim]),
    )
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Everything a finished (or aborted) run leaves on disk, plus summary
/// numbers for callers.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub bob_env_steps: u64,
    pub alice_env_steps: u64,
    pub reference_rollout_steps: u64,
    pub final_default_distance: f64,
    pub final_hard_distance: f64,
}

/// Train under the configured regime, writing metrics, resolved config and
/// a final checkpoint into the run directory. On a numeric failure a
/// diagnostic checkpoint is written and the error propagated.
pub fn train(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let resolved_path = run_dir.join("config.resolved");
    std::fs::write(&resolved_path, cfg.to_resolved_string())
        .map_err(|e| Error::io(&resolved_path, e))?;

    let mut trainer = Trainer::new(cfg.clone(), &run_dir)?;
    match trainer.run() {
        Ok(()) => trainer.finish(),
        Err(err) => {
            if matches!(err, Error::Numeric(_)) {
                let _ = trainer.write_checkpoint(&run_dir.join("diagnostic-checkpoint"));
            }
            Err(err)
        }
    }
}

/// Coupled goal-and-environment curriculum regime.
pub fn train_ssadr(cfg: &RunConfig) -> Result<RunArtifacts> {
    train(&RunConfig { algo: Algo::Ssadr, ..cfg.clone() })
}

/// Uniform domain randomization baseline.
pub fn train_udr(cfg: &RunConfig) -> Result<RunArtifacts> {
    train(&RunConfig { algo: Algo::Udr, ..cfg.clone() })
}

/// Goal-curriculum-only baseline (reference environment everywhere).
pub fn train_unsup_default(cfg: &RunConfig) -> Result<RunArtifacts> {
    train(&RunConfig { algo: Algo::UnsupDefault, ..cfg.clone() })
}

/// Discriminator-reward environment curriculum baseline.
pub fn train_adr_disc(cfg: &RunConfig) -> Result<RunArtifacts> {
    train(&RunConfig { algo: Algo::AdrDisc, ..cfg.clone() })
}

struct Trainer {
    cfg: RunConfig,
    run_dir: PathBuf,
    space: RandomizationSpace,
    bob: DdpgAgent,
    buffer: ReplayBuffer,
    stopping: StoppingPolicy,
    particles: Vec<Particle>,
    discriminator: Option<Discriminator>,
    rng: ChaCha12Rng,
    writer: Option<MetricsWriter>,
    metrics_path: PathBuf,
    bob_steps: u64,
    alice_steps: u64,
    ref_rollout_steps: u64,
    episode_index: u64,
    marks: Vec<u64>,
    next_mark: usize,
    final_default: f64,
    final_hard: f64,
    // Most recent goal-setter weights, for the copy-delay invariant.
    last_alice_params: Vec<f64>,
}

impl Trainer {
    fn new(cfg: RunConfig, run_dir: &Path) -> Result<Self> {
        let space = RandomizationSpace::for_env(cfg.env, cfg.range_mode);
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        let bob = DdpgAgent::new(
            DdpgConfig {
                state_dim: cfg.env.state_dim(),
                action_dim: cfg.env.action_dim(),
                hidden: cfg.hidden,
                actor_lr: cfg.actor_lr,
                critic_lr: cfg.critic_lr,
                gamma: cfg.gamma,
                tau: cfg.tau,
                exploration_noise: cfg.exploration_noise,
                batch_size: cfg.batch_size,
                ..DdpgConfig::default()
            },
            &mut rng,
        );
        let stopping = StoppingPolicy::new(
            cfg.env.state_dim(),
            cfg.stopping_hidden,
            cfg.stopping_lr,
            &mut rng,
        );
        let particles = init_particles(
            cfg.svpg.n_particles,
            cfg.env.n_rand(),
            cfg.svpg.reward_window,
            &mut rng,
        );
        let discriminator = if cfg.algo == Algo::AdrDisc {
            let feature_len =
                crate::adr::FEATURE_STEPS * (cfg.env.state_dim() + cfg.env.action_dim());
            Some(Discriminator::new(
                feature_len,
                cfg.disc_hidden,
                cfg.disc_lr,
                &mut rng,
            ))
        } else {
            None
        };
        let metrics_path = run_dir.join("metrics.jsonl");
        let writer = MetricsWriter::create(
            &metrics_path,
            cfg.algo.name(),
            cfg.env,
            cfg.seed,
            cfg.range_mode.name(),
        )?;
        let marks = EvalSchedule::new(cfg.total_timesteps, cfg.eval_interval)?.marks();
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            space,
            bob,
            stopping,
            particles,
            discriminator,
            rng,
            writer: Some(writer),
            metrics_path,
            bob_steps: 0,
            alice_steps: 0,
            ref_rollout_steps: 0,
            episode_index: 0,
            marks,
            next_mark: 0,
            final_default: f64::NAN,
            final_hard: f64::NAN,
            last_alice_params: Vec::new(),
            run_dir: run_dir.to_path_buf(),
            cfg,
        })
    }

    fn write_record(&mut self, record: Record) -> Result<()> {
        self.writer
            .as_mut()
            .expect("writer lives until finish()")
            .write(&record)
    }

    fn run(&mut self) -> Result<()> {
        match self.cfg.algo {
            Algo::Ssadr => self.run_selfplay_regime(false),
            Algo::UnsupDefault => self.run_selfplay_regime(true),
            Algo::Udr => self.run_udr(),
            Algo::AdrDisc => self.run_adr_disc(),
        }
    }

    fn remaining_cap(&self) -> u32 {
        let remaining = self.cfg.total_timesteps - self.bob_steps;
        remaining.min(self.cfg.max_episode_steps as u64) as u32
    }

    fn in_warmup(&self) -> bool {
        self.bob_steps < self.cfg.warmup_steps
    }

    /// Uniform-action probability for training rollouts: 1 during warmup,
    /// the configured persistent mix afterwards.
    fn explore_mix(&self) -> f64 {
        if self.in_warmup() {
            1.0
        } else {
            self.cfg.exploration_mix
        }
    }

    /// The coupled regime; with `reference_only` the environment curriculum
    /// is disabled and the solver always trains on the reference instance.
    fn run_selfplay_regime(&mut self, reference_only: bool) -> Result<()> {
        let ref_params = self.space.reference_params();
        while self.bob_steps < self.cfg.total_timesteps {
            // The goal-setter acts with the solver's weights from before
            // this iteration's updates (one-iteration delay).
            let alice_actor = self.bob.actor.clone();
            self.last_alice_params = alice_actor.params().to_vec();

            let mut env_ref = make_env(&self.space, &ref_params, self.cfg.env)?
                .with_max_steps(self.cfg.max_episode_steps);
            let (env_params, particle_idx, score) = if reference_only {
                (ref_params.clone(), None, None)
            } else {
                let idx = (self.episode_index % self.cfg.svpg.n_particles as u64) as usize;
                let sample =
                    sample_params(&self.particles[idx], self.cfg.svpg.proposal_sigma, &mut self.rng);
                (sample.params, Some(idx), Some(sample.score))
            };
            let mut env_rand = make_env(&self.space, &env_params, self.cfg.env)?
                .with_max_steps(self.cfg.max_episode_steps);

            let opts = EpisodeOptions {
                upsilon: self.cfg.upsilon,
                alice_noise: if self.cfg.alice_explore {
                    self.cfg.exploration_noise
                } else {
                    0.0
                },
                bob_explore: true,
                bob_step_cap: self.remaining_cap(),
                alice_goal: sample_goal(self.cfg.env, &mut self.rng),
                explore_mix: self.explore_mix(),
                share_alice_experience: self.cfg.share_alice_experience,
                constant_bob_reward: match self.cfg.bob_reward {
                    BobReward::Env => None,
                    BobReward::Selfplay => Some(-self.cfg.upsilon),
                },
            };
            let outcome = run_selfplay_episode(
                &alice_actor,
                &self.stopping,
                &self.bob,
                &mut self.buffer,
                &mut env_ref,
                &mut env_rand,
                &opts,
                &mut self.rng,
            )?;
            if outcome.alice_reward < 0.0 {
                return Err(Error::Numeric(format!(
                    "goal-setter reward {} violated its non-negativity contract",
                    outcome.alice_reward
                )));
            }
            let episode_steps = outcome.bob_env_steps as u64;
            self.bob_steps += episode_steps;
            self.alice_steps += outcome.alice_env_steps as u64;

            if let (Some(idx), Some(score)) = (particle_idx, score) {
                let physical = self.space.denormalize(&env_params)?;
                self.write_record(Record::Sample {
                    timestep: self.bob_steps,
                    particle: Some(idx),
                    xi: env_params.values().to_vec(),
                    physical: physical.values().to_vec(),
                })?;
                self.particles[idx].record_episode(ParticleEpisode {
                    params: env_params.clone(),
                    score,
                    reward: outcome.alice_reward,
                });
            }
            self.write_record(Record::Selfplay {
                timestep: self.bob_steps,
                t_a: outcome.t_a,
                t_b: outcome.t_b,
                r_a: outcome.alice_reward,
                particle: particle_idx,
            })?;

            let stop_loss = update_stopping_policy(&mut self.stopping, &outcome)?;
            self.write_record(Record::Loss {
                timestep: self.bob_steps,
                name: "stopping_loss".into(),
                value: stop_loss,
            })?;

            if !reference_only
                && (self.episode_index + 1) % self.cfg.svpg.n_particles as u64 == 0
            {
                self.update_particles()?;
            }

            self.ddpg_updates(episode_steps)?;

            // Reward-evaluated rollout interleaved with the self-play
            // episode: a plain uniform-goal episode in an instance drawn
            // the same way. Self-play alone cannot start the curriculum
            // here, since a proposer that cannot move the puck only
            // proposes goals that are already satisfied.
            if self.cfg.rollout_interleave && self.bob_steps < self.cfg.total_timesteps {
                let goal = sample_goal(self.cfg.env, &mut self.rng);
                let mut env = make_env(&self.space, &env_params, self.cfg.env)?
                    .with_max_steps(self.cfg.max_episode_steps);
                let (rollout_steps, _, _) = self.rollout_training_episode(&mut env, goal, false)?;
                self.ddpg_updates(rollout_steps)?;
            }

            self.run_scheduled_evals()?;
            self.episode_index += 1;
        }
        Ok(())
    }

    fn run_udr(&mut self) -> Result<()> {
        let fixed_goal = self.cfg.env.canonical_goal();
        while self.bob_steps < self.cfg.total_timesteps {
            let values: Vec<f64> = (0..self.cfg.env.n_rand())
                .map(|_| self.rng.random::<f64>())
                .collect();
            let env_params = EnvParams::new(values);
            let mut env = make_env(&self.space, &env_params, self.cfg.env)?
                .with_max_steps(self.cfg.max_episode_steps);
            let goal = match self.cfg.udr_goal_mode {
                UdrGoalMode::Fixed => fixed_goal,
                UdrGoalMode::Uniform => sample_goal(self.cfg.env, &mut self.rng),
            };
            let (episode_steps, _success, _pairs) =
                self.rollout_training_episode(&mut env, goal, false)?;

            let physical = self.space.denormalize(&env_params)?;
            self.write_record(Record::Sample {
                timestep: self.bob_steps,
                particle: None,
                xi: env_params.values().to_vec(),
                physical: physical.values().to_vec(),
            })?;

            self.ddpg_updates(episode_steps)?;
            self.run_scheduled_evals()?;
            self.episode_index += 1;
        }
        Ok(())
    }

    fn run_adr_disc(&mut self) -> Result<()> {
        let ref_params = self.space.reference_params();
        while self.bob_steps < self.cfg.total_timesteps {
            let idx = (self.episode_index % self.cfg.svpg.n_particles as u64) as usize;
            let sample =
                sample_params(&self.particles[idx], self.cfg.svpg.proposal_sigma, &mut self.rng);
            let goal = sample_goal(self.cfg.env, &mut self.rng);

            // Training rollout in the randomized instance.
            let mut env_rand = make_env(&self.space, &sample.params, self.cfg.env)?
                .with_max_steps(self.cfg.max_episode_steps);
            let (episode_steps, _success, rand_pairs) =
                self.rollout_training_episode(&mut env_rand, goal, true)?;

            // Reference rollout of the same policy for the discriminator;
            // not counted against the training budget, not stored.
            let mut env_ref = make_env(&self.space, &ref_params, self.cfg.env)?
                .with_max_steps(self.cfg.max_episode_steps);
            let ref_pairs = self.rollout_reference_episode(&mut env_ref, goal)?;

            let disc = self.discriminator.as_mut().expect("adr-disc has one");
            let rand_feats = featurize_trajectory(&rand_pairs);
            let ref_feats = featurize_trajectory(&ref_pairs);
            // Particle reward from the current discriminator, then one
            // balanced training step.
            let reward = disc.reward(&rand_feats)?;
            let disc_loss = disc.train(&[ref_feats], &[rand_feats.clone()])?;
            if reward > 0.0 {
                return Err(Error::Numeric(format!(
                    "discriminator reward {reward} violated its non-positivity contract"
                )));
            }

            let physical = self.space.denormalize(&sample.params)?;
            self.write_record(Record::Sample {
                timestep: self.bob_steps,
                particle: Some(idx),
                xi: sample.params.values().to_vec(),
                physical: physical.values().to_vec(),
            })?;
            self.write_record(Record::Loss {
                timestep: self.bob_steps,
                name: "disc_loss".into(),
                value: disc_loss,
            })?;
            self.write_record(Record::Loss {
                timestep: self.bob_steps,
                name: "disc_reward".into(),
                value: reward,
            })?;
            self.particles[idx].record_episode(ParticleEpisode {
                params: sample.params.clone(),
                score: sample.score,
                reward,
            });
            if (self.episode_index + 1) % self.cfg.svpg.n_particles as u64 == 0 {
                self.update_particles()?;
            }

            self.ddpg_updates(episode_steps)?;
            self.run_scheduled_evals()?;
            self.episode_index += 1;
        }
        Ok(())
    }

    /// One exploratory episode that feeds the replay buffer. Returns the
    /// steps taken, success flag and (state, action) pairs.
    fn rollout_training_episode(
        &mut self,
        env: &mut EnvInstance,
        goal: [f64; 2],
        collect_pairs: bool,
    ) -> Result<(u64, bool, Vec<(Vec<f64>, Vec<f64>)>)> {
        env.reset(goal)?;
        let cap = self.remaining_cap();
        let mut steps = 0u32;
        let mut success = false;
        let mut pairs = Vec::new();
        let uniform_episode = !self.in_warmup()
            && self.rng.random::<f64>() < self.cfg.uniform_episode_fraction;
        let mut explorer = BurstExplorer::new(env.kind().action_dim(), EXPLORE_HOLD_STEPS);
        let mix = if uniform_episode { 1.0 } else { self.explore_mix() };
        while steps < cap && !env.is_done() {
            let state = env.state().to_vec();
            let action = match explorer.step(mix, &mut self.rng) {
                Some(a) => a,
                None => self.bob.act(&state, goal, true, &mut self.rng)?,
            };
            let result = env.step(&action)?;
            steps += 1;
            if collect_pairs {
                pairs.push((state.clone(), action.clone()));
            }
            // Only success is a true terminal for bootstrapping.
            self.buffer.push(Transition {
                state,
                action,
                reward: result.reward,
                next_state: result.next_state,
                done: result.success,
                goal,
            });
            if result.success {
                success = true;
            }
        }
        self.bob_steps += steps as u64;
        Ok((steps as u64, success, pairs))
    }

    /// Reference-environment rollout for discriminator features only.
    fn rollout_reference_episode(
        &mut self,
        env: &mut EnvInstance,
        goal: [f64; 2],
    ) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        env.reset(goal)?;
        let mut pairs = Vec::new();
        let mut explorer = BurstExplorer::new(env.kind().action_dim(), EXPLORE_HOLD_STEPS);
        while !env.is_done() {
            let state = env.state().to_vec();
            let action = match explorer.step(self.explore_mix(), &mut self.rng) {
                Some(a) => a,
                None => self.bob.act(&state, goal, true, &mut self.rng)?,
            };
            env.step(&action)?;
            self.ref_rollout_steps += 1;
            pairs.push((state, action));
        }
        Ok(pairs)
    }

    fn update_particles(&mut self) -> Result<()> {
        let dims = self.cfg.env.n_rand();
        let grads: Vec<Vec<f64>> = self
            .particles
            .iter()
            .map(|p| estimate_grad_j(&p.episode_slice()).unwrap_or_else(|| vec![0.0; dims]))
            .collect();
        svpg_update(&mut self.particles, &grads, &self.cfg.svpg)
    }

    /// One optimizer update per post-warmup environment step taken this
    /// episode.
    fn ddpg_updates(&mut self, episode_steps: u64) -> Result<()> {
        let start = self.bob_steps - episode_steps;
        let eligible = self.bob_steps.saturating_sub(self.cfg.warmup_steps.max(start));
        if eligible == 0 {
            return Ok(());
        }
        let mut critic_sum = 0.0;
        let mut actor_sum = 0.0;
        let mut applied = 0u64;
        for _ in 0..eligible {
            if let Some((critic_loss, actor_objective)) =
                self.bob.update(&self.buffer, &mut self.rng)?
            {
                critic_sum += critic_loss;
                actor_sum += actor_objective;
                applied += 1;
            }
        }
        if applied > 0 {
            if !critic_sum.is_finite() || !actor_sum.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training losses at step {}: critic {critic_sum}, actor {actor_sum}",
                    self.bob_steps
                )));
            }
            self.write_record(Record::Loss {
                timestep: self.bob_steps,
                name: "critic_loss".into(),
                value: critic_sum / applied as f64,
            })?;
            self.write_record(Record::Loss {
                timestep: self.bob_steps,
                name: "actor_objective".into(),
                value: actor_sum / applied as f64,
            })?;
        }
        Ok(())
    }

    fn run_scheduled_evals(&mut self) -> Result<()> {
        while self.next_mark < self.marks.len() && self.marks[self.next_mark] <= self.bob_steps {
            let mark = self.marks[self.next_mark];
            let eval_index = self.next_mark as u64;
            let default_params = self.space.reference_physical();
            let hard_params = hard_env_params(self.cfg.env);
            for (eval_env, params) in [
                (EvalEnv::Default, default_params),
                (EvalEnv::Hard, hard_params),
            ] {
                let distances = evaluate(
                    &self.bob,
                    self.cfg.env,
                    &params,
                    self.cfg.max_episode_steps,
                    self.cfg.eval_episodes,
                    self.cfg.seed,
                    eval_index,
                )?;
                let mean_distance = mean(&distances);
                if !mean_distance.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite evaluation distance at mark {mark}"
                    )));
                }
                match eval_env {
                    EvalEnv::Default => self.final_default = mean_distance,
                    EvalEnv::Hard => self.final_hard = mean_distance,
                    EvalEnv::Explicit => {}
                }
                self.write_record(Record::Eval(EvalRecord {
                    timestep: self.bob_steps,
                    mark,
                    eval_env,
                    mean_final_distance: mean_distance,
                    distances,
                    seed: self.cfg.seed,
                    algo: self.cfg.algo.name().to_string(),
                }))?;
            }
            self.next_mark += 1;
        }
        Ok(())
    }

    fn write_checkpoint(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut networks = BTreeMap::new();
        let mut save = |name: &str, net: &Approximator| -> Result<()> {
            let file = format!("{name}.json");
            let path = dir.join(&file);
            std::fs::write(&path, net.to_blob()).map_err(|e| Error::io(&path, e))?;
            networks.insert(name.to_string(), file);
            Ok(())
        };
        save("actor", &self.bob.actor)?;
        save("critic", &self.bob.critic)?;
        save("target_actor", &self.bob.target_actor)?;
        save("target_critic", &self.bob.target_critic)?;
        match self.cfg.algo {
            Algo::Ssadr | Algo::UnsupDefault => save("stopping", self.stopping.net())?,
            Algo::AdrDisc => {
                if let Some(d) = &self.discriminator {
                    save("discriminator", d.net())?;
                }
            }
            Algo::Udr => {}
        }
        let manifest = CheckpointManifest {
            version: 1,
            algo: self.cfg.algo.name().to_string(),
            env: self.cfg.env,
            seed: self.cfg.seed,
            bob_env_steps: self.bob_steps,
            alice_env_steps: self.alice_steps,
            networks,
            particles: self
                .particles
                .iter()
                .map(|p| p.location().to_vec())
                .collect(),
        };
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Checkpoint(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }

    fn finish(mut self) -> Result<RunArtifacts> {
        let checkpoint_dir = self.run_dir.join("checkpoint");
        self.write_checkpoint(&checkpoint_dir)?;
        if let Some(writer) = self.writer.take() {
            writer.finish()?;
        }
        println!(
            "run complete: algo={} env={} seed={} bob_steps={} alice_steps={} ref_rollout_steps={}",
            self.cfg.algo.name(),
            self.cfg.env.name(),
            self.cfg.seed,
            self.bob_steps,
            self.alice_steps,
            self.ref_rollout_steps
        );
        Ok(RunArtifacts {
            run_dir: self.run_dir.clone(),
            metrics_path: self.metrics_path.clone(),
            checkpoint_dir,
            bob_env_steps: self.bob_steps,
            alice_env_steps: self.alice_steps,
            reference_rollout_steps: self.ref_rollout_steps,
            final_default_distance: self.final_default,
            final_hard_distance: self.final_hard,
        })
    }
}

/// On-disk description of a saved run.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub algo: String,
    pub env: EnvKind,
    pub seed: u64,
    pub bob_env_steps: u64,
    pub alice_env_steps: u64,
    /// Role name → blob file, one network per file.
    pub networks: BTreeMap<String, String>,
    pub particles: Vec<Vec<f64>>,
}

/// A checkpoint loaded for evaluation: the manifest plus the acting policy.
pub struct LoadedCheckpoint {
    pub manifest: CheckpointManifest,
    pub actor: Approximator,
}

pub fn load_checkpoint(dir: &Path) -> Result<LoadedCheckpoint> {
    let manifest_path = dir.join("manifest.json");
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("bad manifest {}: {e}", manifest_path.display())))?;
    if manifest.version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            manifest.version
        )));
    }
    let actor_file = manifest
        .networks
        .get("actor")
        .ok_or_else(|| Error::Checkpoint("manifest lists no actor network".into()))?;
    let actor_path = dir.join(actor_file);
    let blob = std::fs::read_to_string(&actor_path).map_err(|e| Error::io(&actor_path, e))?;
    let actor = Approximator::from_blob(&blob)?;
    let expected_in = manifest.env.state_dim() + 2;
    if actor.input_dim() != expected_in || actor.output_dim() != manifest.env.action_dim() {
        return Err(Error::Checkpoint(format!(
            "actor shape {}→{} does not match environment {} ({}→{})",
            actor.input_dim(),
            actor.output_dim(),
            manifest.env.name(),
            expected_in,
            manifest.env.action_dim()
        )));
    }
    Ok(LoadedCheckpoint { manifest, actor })
}

/// Evaluate a loaded checkpoint's policy (used by the command line).
pub fn evaluate_checkpoint(
    ckpt: &LoadedCheckpoint,
    params: &PhysicalParams,
    max_steps: u32,
    n_episodes: usize,
    eval_seed: u64,
) -> Result<Vec<f64>> {
    let mut dummy = ChaCha12Rng::seed_from_u64(0);
    let actor = &ckpt.actor;
    evaluate_with_policy(
        ckpt.manifest.env,
        params,
        max_steps,
        n_episodes,
        eval_seed,
        0,
        |state, goal| crate::ddpg::policy_action(actor, state, goal, 0.0, &mut dummy),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("ssadr-trainer-{}-{name}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn micro_cfg(algo: Algo, name: &str) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.algo = algo;
        cfg.env = EnvKind::Pusher;
        cfg.seed = 1;
        cfg.total_timesteps = 600;
        cfg.eval_interval = 300;
        cfg.eval_episodes = 2;
        cfg.warmup_steps = 200;
        cfg.hidden = (8, 8);
        cfg.stopping_hidden = (8, 8);
        cfg.disc_hidden = (8, 8);
        cfg.batch_size = 16;
        cfg.svpg.n_particles = 3;
        cfg.out_dir = tmp_dir(name);
        cfg
    }

    #[test]
    fn paper_scale_schedule_plans_two_hundred_marks() {
        let schedule = EvalSchedule::new(1_000_000, 5_000).unwrap();
        assert_eq!(schedule.planned_per_env(), 200);
        let marks = schedule.marks();
        assert_eq!(marks.len(), 200);
        assert_eq!(marks[0], 5_000);
        assert_eq!(*marks.last().unwrap(), 1_000_000);
    }

    #[test]
    fn schedule_rejects_non_divisible_interval() {
        assert!(EvalSchedule::new(1_000_000, 7_000).is_err());
    }

    #[test]
    fn eval_goals_shared_across_regimes() {
        // Same (seed, index) must give identical evaluation goal streams
        // regardless of anything else; different indices must differ.
        let a = eval_stream_seed(3, 0);
        let b = eval_stream_seed(3, 0);
        let c = eval_stream_seed(3, 1);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_action_pusher_distance_is_initial_puck_distance() {
        let params = PhysicalParams::new(vec![0.5]);
        let distances =
            zero_action_distances(EnvKind::Pusher, &params, 100, 8, 11, 0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(eval_stream_seed(11, 0));
        for d in distances {
            let goal = sample_goal(EnvKind::Pusher, &mut rng);
            let expect = ((goal[0] - 0.4f64).powi(2) + (goal[1] - 0.5f64).powi(2)).sqrt();
            assert!((d - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn all_regimes_consume_exact_budget_and_evaluate_on_schedule() {
        for (algo, name) in [
            (Algo::Ssadr, "ssadr"),
            (Algo::Udr, "udr"),
            (Algo::UnsupDefault, "unsup"),
            (Algo::AdrDisc, "disc"),
        ] {
            let cfg = micro_cfg(algo, name);
            let artifacts = train(&cfg).unwrap();
            assert_eq!(artifacts.bob_env_steps, 600, "{name}");
            let records = crate::metrics::read_records(&artifacts.metrics_path).unwrap();
            let evals: Vec<&EvalRecord> = records
                .iter()
                .filter_map(|r| match r {
                    Record::Eval(e) => Some(e),
                    _ => None,
                })
                .collect();
            assert_eq!(evals.len(), 4, "{name}: 2 marks × 2 eval envs");
            for env in [EvalEnv::Default, EvalEnv::Hard] {
                let marks: Vec<u64> = evals
                    .iter()
                    .filter(|e| e.eval_env == env)
                    .map(|e| e.mark)
                    .collect();
                assert_eq!(marks, vec![300, 600], "{name}");
            }
            assert!(artifacts.checkpoint_dir.join("manifest.json").exists());
            assert!(artifacts.run_dir.join("config.resolved").exists());
        }
    }

    #[test]
    fn identical_seeds_reproduce_metrics_bytes() {
        let mut cfg = micro_cfg(Algo::Ssadr, "det-a");
        let a = train(&cfg).unwrap();
        cfg.out_dir = tmp_dir("det-b");
        let b = train(&cfg).unwrap();
        let bytes_a = std::fs::read(&a.metrics_path).unwrap();
        let bytes_b = std::fs::read(&b.metrics_path).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn goal_setter_uses_previous_iteration_weights() {
        let cfg = micro_cfg(Algo::Ssadr, "delay");
        let run_dir = cfg.run_dir();
        std::fs::create_dir_all(&run_dir).unwrap();
        let mut t = Trainer::new(cfg, &run_dir).unwrap();
        let ref_params = t.space.reference_params();
        let _ = ref_params;
        let mut prev_bob = t.bob.copy_actor_params();
        for _ in 0..4 {
            let before = t.bob_steps;
            // One outer iteration = run until episode index advances.
            let target = t.episode_index + 1;
            while t.episode_index < target && t.bob_steps < t.cfg.total_timesteps {
                t.run_one_for_test().unwrap();
            }
            assert_eq!(t.last_alice_params, prev_bob,
                "goal-setter must act with the solver weights recorded before this iteration");
            prev_bob = t.bob.copy_actor_params();
            assert!(t.bob_steps > before);
        }
    }

    impl Trainer {
        /// Drive exactly one self-play iteration (test hook).
        fn run_one_for_test(&mut self) -> Result<()> {
            let saved_total = self.cfg.total_timesteps;
            self.cfg.total_timesteps = self.bob_steps + 1;
            let result = self.run_selfplay_regime(false);
            self.cfg.total_timesteps = saved_total;
            result
        }
    }

    #[test]
    fn zero_upsilon_degenerates_to_repulsion_only() {
        // With a zero reward scale every episode reward is 0, so particle
        // gradients vanish and locations move by repulsion alone.
        let mut cfg = micro_cfg(Algo::Ssadr, "zero-upsilon");
        cfg.upsilon = 0.0;
        let run_dir = cfg.run_dir();
        std::fs::create_dir_all(&run_dir).unwrap();
        let mut t = Trainer::new(cfg, &run_dir).unwrap();
        t.run().unwrap();
        for p in &t.particles {
            for e in p.episodes() {
                assert_eq!(e.reward, 0.0);
            }
        }
        let records = crate::metrics::read_records(&t.metrics_path).unwrap();
        for r in records {
            if let Record::Selfplay { r_a, .. } = r {
                assert_eq!(r_a, 0.0);
            }
        }
    }

    #[test]
    fn udr_parameter_histogram_is_uniform() {
        // Chi-squared goodness of fit on the UDR sampling path, 20 bins.
        // Critical value for 19 degrees of freedom at p = 0.01.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 20_000usize;
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let v: f64 = rng.random::<f64>();
            counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 36.191, "chi-squared statistic {chi2} too large");
    }

    #[test]
    fn checkpoint_round_trip_for_eval() {
        let cfg = micro_cfg(Algo::Udr, "ckpt");
        let artifacts = train(&cfg).unwrap();
        let ckpt = load_checkpoint(&artifacts.checkpoint_dir).unwrap();
        assert_eq!(ckpt.manifest.env, EnvKind::Pusher);
        assert_eq!(ckpt.manifest.bob_env_steps, 600);
        let distances = evaluate_checkpoint(
            &ckpt,
            &PhysicalParams::new(vec![0.5]),
            100,
            3,
            7,
        )
        .unwrap();
        assert_eq!(distances.len(), 3);
        assert!(distances.iter().all(|d| d.is_finite() && *d >= 0.0));
    }
}

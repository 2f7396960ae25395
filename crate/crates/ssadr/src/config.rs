//! Run configuration: defaults, file loading, and the fully-resolved dump
//! written next to every run's metrics.
//!
//! The file format is a flat key-value document with one section per
//! subsystem. Unknown keys and malformed values are rejected with the line
//! number they appeared on. `to_resolved_string` emits every effective
//! value in a fixed order so a run directory is self-describing and
//! reloadable.

use std::path::{Path, PathBuf};

use crate::adr::{Bandwidth, SvpgConfig};
use crate::envs::{EnvKind, RangeMode};
use crate::error::{Error, Result};

/// Training regime selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    /// Coupled goal and environment curriculum from the self-play reward.
    Ssadr,
    /// Uniform domain randomization.
    Udr,
    /// Goal curriculum only; every episode uses the reference environment.
    UnsupDefault,
    /// Environment curriculum driven by the discriminator reward.
    AdrDisc,
}

pub const ALGO_NAMES: &str = "ssadr, udr, unsup-default, adr-disc";

impl Algo {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ssadr" => Ok(Algo::Ssadr),
            "udr" => Ok(Algo::Udr),
            "unsup-default" | "unsup_default" => Ok(Algo::UnsupDefault),
            "adr-disc" | "adr_disc" => Ok(Algo::AdrDisc),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (valid: {ALGO_NAMES})"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Ssadr => "ssadr",
            Algo::Udr => "udr",
            Algo::UnsupDefault => "unsup-default",
            Algo::AdrDisc => "adr-disc",
        }
    }
}

/// Goal handling for the uniform-randomization regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UdrGoalMode {
    /// One fixed canonical goal for the whole run.
    Fixed,
    /// A fresh uniform goal every episode.
    Uniform,
}

impl UdrGoalMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(UdrGoalMode::Fixed),
            "uniform" => Ok(UdrGoalMode::Uniform),
            other => Err(Error::Config(format!(
                "unknown goal mode '{other}' (valid: fixed, uniform)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UdrGoalMode::Fixed => "fixed",
            UdrGoalMode::Uniform => "uniform",
        }
    }
}

/// Which reward trains the solver from self-play episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobReward {
    /// Dense environment reward (negative distance to the proposed goal).
    Env,
    /// Constant per-step time penalty summing to the self-play reward.
    Selfplay,
}

impl BobReward {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "env" => Ok(BobReward::Env),
            "selfplay" => Ok(BobReward::Selfplay),
            other => Err(Error::Config(format!(
                "unknown bob reward '{other}' (valid: env, selfplay)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BobReward::Env => "env",
            BobReward::Selfplay => "selfplay",
        }
    }
}

/// Everything a single training run needs. Desk-scale defaults; the larger
/// published protocol (1M steps, 400/300 hidden units, 25 evaluation
/// episodes) is reachable through the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algo: Algo,
    pub env: EnvKind,
    pub seed: u64,
    pub total_timesteps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub max_episode_steps: u32,
    pub range_mode: RangeMode,
    pub out_dir: PathBuf,

    pub upsilon: f64,
    pub stopping_lr: f64,
    pub stopping_hidden: (usize, usize),
    pub alice_explore: bool,
    /// Interleave a plain uniform-goal rollout after each self-play
    /// episode (self-play alone cannot bootstrap manipulation: a goal
    /// proposer that cannot yet move the puck only proposes already-solved
    /// goals).
    pub rollout_interleave: bool,
    /// Feed the goal-setter's environment transitions into the shared
    /// replay buffer.
    pub share_alice_experience: bool,

    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub exploration_noise: f64,
    /// Per-step probability of a uniform random action during training
    /// rollouts (persistent exploration beyond the warmup phase).
    pub exploration_mix: f64,
    /// Fraction of plain rollout episodes acted fully uniformly
    /// (persistent coverage of contact events after warmup).
    pub uniform_episode_fraction: f64,
    pub replay_capacity: usize,
    pub warmup_steps: u64,
    pub hidden: (usize, usize),
    pub bob_reward: BobReward,

    pub svpg: SvpgConfig,

    pub udr_goal_mode: UdrGoalMode,

    pub disc_hidden: (usize, usize),
    pub disc_lr: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Ssadr,
            env: EnvKind::Pusher,
            seed: 0,
            total_timesteps: 200_000,
            eval_interval: 5_000,
            eval_episodes: 20,
            max_episode_steps: 100,
            range_mode: RangeMode::Calibrated,
            out_dir: PathBuf::from("runs"),

            upsilon: 0.2,
            stopping_lr: 0.001,
            stopping_hidden: (64, 64),
            alice_explore: true,
            rollout_interleave: true,
            share_alice_experience: true,

            gamma: 0.99,
            actor_lr: 0.001,
            critic_lr: 0.001,
            batch_size: 100,
            tau: 0.005,
            exploration_noise: 0.1,
            exploration_mix: 0.1,
            uniform_episode_fraction: 0.1,
            replay_capacity: 100_000,
            warmup_steps: 1_000,
            hidden: (64, 64),
            bob_reward: BobReward::Env,

            svpg: SvpgConfig::default(),

            udr_goal_mode: UdrGoalMode::Fixed,

            disc_hidden: (64, 64),
            disc_lr: 0.001,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_timesteps == 0 {
            return Err(Error::Config("total_timesteps must be positive".into()));
        }
        if self.eval_interval == 0 || self.total_timesteps % self.eval_interval != 0 {
            return Err(Error::Config(format!(
                "eval_interval {} must divide total_timesteps {}",
                self.eval_interval, self.total_timesteps
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::Config("max_episode_steps must be positive".into()));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("stopping_lr", self.stopping_lr),
            ("disc_lr", self.disc_lr),
            ("svpg.learning_rate", self.svpg.learning_rate),
            ("svpg.proposal_sigma", self.svpg.proposal_sigma),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.upsilon < 0.0 {
            return Err(Error::Config(format!(
                "upsilon must be >= 0, got {}",
                self.upsilon
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!(
                "tau must be in (0, 1], got {}",
                self.tau
            )));
        }
        if self.exploration_noise < 0.0 {
            return Err(Error::Config("exploration_noise must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.exploration_mix) {
            return Err(Error::Config(format!(
                "exploration_mix must be in [0, 1], got {}",
                self.exploration_mix
            )));
        }
        if !(0.0..=1.0).contains(&self.uniform_episode_fraction) {
            return Err(Error::Config(format!(
                "uniform_episode_fraction must be in [0, 1], got {}",
                self.uniform_episode_fraction
            )));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::Config(format!(
                "need replay_capacity >= batch_size > 0, got {} / {}",
                self.replay_capacity, self.batch_size
            )));
        }
        if self.svpg.n_particles == 0 {
            return Err(Error::Config("svpg particles must be >= 1".into()));
        }
        if self.svpg.temperature < 0.0 {
            return Err(Error::Config("svpg temperature must be >= 0".into()));
        }
        if self.svpg.reward_window == 0 {
            return Err(Error::Config("svpg reward_window must be >= 1".into()));
        }
        if let Bandwidth::Fixed(h) = self.svpg.bandwidth {
            if !(h > 0.0) {
                return Err(Error::Config(format!(
                    "fixed bandwidth must be > 0, got {h}"
                )));
            }
        }
        Ok(())
    }

    /// Load defaults overlaid with a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Parse the sectioned key-value format. Errors cite 1-based lines.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::Config(format!("line {line_no}: unterminated section header"))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {line_no}: expected 'key = value', got '{line}'"
                ))
            })?;
            cfg.apply_kv(&section, key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {line_no}: {e}")))?;
        }
        Ok(cfg)
    }

    /// Apply one key-value pair (also used for CLI overrides).
    pub fn apply_kv(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let unknown = || Error::Config(format!("unknown key '{key}' in section '[{section}]'"));
        match section {
            "run" => match key {
                "algo" => self.algo = Algo::parse(value)?,
                "env" => self.env = EnvKind::parse(value)?,
                "seed" => self.seed = parse_num(key, value)?,
                "total_timesteps" => self.total_timesteps = parse_num(key, value)?,
                "eval_interval" => self.eval_interval = parse_num(key, value)?,
                "eval_episodes" => self.eval_episodes = parse_num(key, value)?,
                "max_episode_steps" => self.max_episode_steps = parse_num(key, value)?,
                "range" => self.range_mode = RangeMode::parse(value)?,
                "out" => self.out_dir = PathBuf::from(value),
                _ => return Err(unknown()),
            },
            "selfplay" => match key {
                "upsilon" => self.upsilon = parse_num(key, value)?,
                "stopping_lr" => self.stopping_lr = parse_num(key, value)?,
                "stopping_hidden" => self.stopping_hidden = parse_pair(key, value)?,
                "alice_explore" => self.alice_explore = parse_bool(key, value)?,
                "rollout_interleave" => self.rollout_interleave = parse_bool(key, value)?,
                "share_alice_experience" => {
                    self.share_alice_experience = parse_bool(key, value)?
                }
                _ => return Err(unknown()),
            },
            "ddpg" => match key {
                "gamma" => self.gamma = parse_num(key, value)?,
                "actor_lr" => self.actor_lr = parse_num(key, value)?,
                "critic_lr" => self.critic_lr = parse_num(key, value)?,
                "batch_size" => self.batch_size = parse_num(key, value)?,
                "tau" => self.tau = parse_num(key, value)?,
                "exploration_noise" => self.exploration_noise = parse_num(key, value)?,
                "exploration_mix" => self.exploration_mix = parse_num(key, value)?,
                "uniform_episode_fraction" => {
                    self.uniform_episode_fraction = parse_num(key, value)?
                }
                "replay_capacity" => self.replay_capacity = parse_num(key, value)?,
                "warmup_steps" => self.warmup_steps = parse_num(key, value)?,
                "hidden" => self.hidden = parse_pair(key, value)?,
                "bob_reward" => self.bob_reward = BobReward::parse(value)?,
                _ => return Err(unknown()),
            },
            "svpg" => match key {
                "particles" => self.svpg.n_particles = parse_num(key, value)?,
                "learning_rate" => self.svpg.learning_rate = parse_num(key, value)?,
                "temperature" => self.svpg.temperature = parse_num(key, value)?,
                "proposal_sigma" => self.svpg.proposal_sigma = parse_num(key, value)?,
                "bandwidth" => self.svpg.bandwidth = parse_bandwidth(value)?,
                "reward_window" => self.svpg.reward_window = parse_num(key, value)?,
                _ => return Err(unknown()),
            },
            "udr" => match key {
                "goal_mode" => self.udr_goal_mode = UdrGoalMode::parse(value)?,
                _ => return Err(unknown()),
            },
            "discriminator" => match key {
                "hidden" => self.disc_hidden = parse_pair(key, value)?,
                "lr" => self.disc_lr = parse_num(key, value)?,
                _ => return Err(unknown()),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown section '[{other}]' (valid: run, selfplay, ddpg, svpg, udr, discriminator)"
                )))
            }
        }
        Ok(())
    }

    /// Every effective value, in the file format, in a fixed order.
    pub fn to_resolved_string(&self) -> String {
        let bandwidth = match self.svpg.bandwidth {
            Bandwidth::MedianHeuristic => "median".to_string(),
            Bandwidth::Fixed(h) => format!("fixed:{h}"),
        };
        format!(
            "[run]\n\
             algo = {}\n\
             env = {}\n\
             seed = {}\n\
             total_timesteps = {}\n\
             eval_interval = {}\n\
             eval_episodes = {}\n\
             max_episode_steps = {}\n\
             range = {}\n\
             out = {}\n\
             \n\
             [selfplay]\n\
             upsilon = {}\n\
             stopping_lr = {}\n\
             stopping_hidden = {},{}\n\
             alice_explore = {}\n\
             rollout_interleave = {}\n\
             share_alice_experience = {}\n\
             \n\
             [ddpg]\n\
             gamma = {}\n\
             actor_lr = {}\n\
             critic_lr = {}\n\
             batch_size = {}\n\
             tau = {}\n\
             exploration_noise = {}\n\
             exploration_mix = {}\n\
             uniform_episode_fraction = {}\n\
             replay_capacity = {}\n\
             warmup_steps = {}\n\
             hidden = {},{}\n\
             bob_reward = {}\n\
             \n\
             [svpg]\n\
             particles = {}\n\
             learning_rate = {}\n\
             temperature = {}\n\
             proposal_sigma = {}\n\
             bandwidth = {}\n\
             reward_window = {}\n\
             \n\
             [udr]\n\
             goal_mode = {}\n\
             \n\
             [discriminator]\n\
             hidden = {},{}\n\
             lr = {}\n",
            self.algo.name(),
            self.env.name(),
            self.seed,
            self.total_timesteps,
            self.eval_interval,
            self.eval_episodes,
            self.max_episode_steps,
            self.range_mode.name(),
            self.out_dir.display(),
            self.upsilon,
            self.stopping_lr,
            self.stopping_hidden.0,
            self.stopping_hidden.1,
            self.alice_explore,
            self.rollout_interleave,
            self.share_alice_experience,
            self.gamma,
            self.actor_lr,
            self.critic_lr,
            self.batch_size,
            self.tau,
            self.exploration_noise,
            self.exploration_mix,
            self.uniform_episode_fraction,
            self.replay_capacity,
            self.warmup_steps,
            self.hidden.0,
            self.hidden.1,
            self.bob_reward.name(),
            self.svpg.n_particles,
            self.svpg.learning_rate,
            self.svpg.temperature,
            self.svpg.proposal_sigma,
            bandwidth,
            self.svpg.reward_window,
            self.udr_goal_mode.name(),
            self.disc_hidden.0,
            self.disc_hidden.1,
            self.disc_lr,
        )
    }

    /// Directory this run writes into: `<out>/<algo>-<env>-seed<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!(
            "{}-{}-seed{}",
            self.algo.name(),
            self.env.name(),
            self.seed
        ))
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value for {key}: '{value}' ({e})")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!(
            "bad value for {key}: '{other}' (expected true/false)"
        ))),
    }
}

fn parse_pair(key: &str, value: &str) -> Result<(usize, usize)> {
    let (a, b) = value.split_once(',').ok_or_else(|| {
        Error::Config(format!(
            "bad value for {key}: '{value}' (expected '<first>,<second>')"
        ))
    })?;
    Ok((parse_num(key, a.trim())?, parse_num(key, b.trim())?))
}

fn parse_bandwidth(value: &str) -> Result<Bandwidth> {
    if value == "median" {
        return Ok(Bandwidth::MedianHeuristic);
    }
    if let Some(h) = value.strip_prefix("fixed:") {
        return Ok(Bandwidth::Fixed(parse_num("bandwidth", h)?));
    }
    Err(Error::Config(format!(
        "bad bandwidth '{value}' (expected 'median' or 'fixed:<h>')"
    )))
}

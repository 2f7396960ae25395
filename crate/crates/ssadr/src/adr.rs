//! Environment-curriculum engine: an interacting particle ensemble over the
//! randomization space, plus the discriminator-reward baseline.
//!
//! Each particle proposes environments by sampling a clipped Gaussian around
//! a trainable location. Locations move by kernel-weighted return gradients
//! (attraction to rewarding regions) plus a kernel repulsion term that keeps
//! the ensemble spread out.

use std::collections::VecDeque;

use crate::approx::{Activation, Adam, Approximator};
use crate::envs::EnvParams;
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Trajectory features are (state, action) pairs subsampled at this many
/// evenly spaced indices.
pub const FEATURE_STEPS: usize = 10;

/// Kernel bandwidth selection.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Bandwidth {
    /// h = median(pairwise squared distance) / ln(N + 1).
    MedianHeuristic,
    Fixed(f64),
}

/// Ensemble hyperparameters.
#[derive(Debug, Clone)]
pub struct SvpgConfig {
    pub n_particles: usize,
    /// Step size ε of the interacting update.
    pub learning_rate: f64,
    /// Repulsion temperature α.
    pub temperature: f64,
    /// Proposal noise scale σ around each particle location.
    pub proposal_sigma: f64,
    pub bandwidth: Bandwidth,
    /// How many recent episodes each particle keeps for its return
    /// gradient estimate.
    pub reward_window: usize,
}

impl Default for SvpgConfig {
    fn default() -> Self {
        Self {
            n_particles: 10,
            learning_rate: 0.03,
            temperature: 10.0,
            proposal_sigma: 0.05,
            bandwidth: Bandwidth::MedianHeuristic,
            reward_window: 8,
        }
    }
}

/// One environment proposal drawn from a particle, with the log-density
/// score of the pre-clip draw (the quantity the gradient estimator needs).
#[derive(Debug, Clone)]
pub struct ParticleSample {
    pub params: EnvParams,
    pub score: Vec<f64>,
}

/// A completed episode credited to one particle.
#[derive(Debug, Clone)]
pub struct ParticleEpisode {
    pub params: EnvParams,
    pub score: Vec<f64>,
    pub reward: f64,
}

/// One member of the ensemble: a trainable location in the normalized
/// randomization box and a rolling window of recent episode outcomes.
#[derive(Debug, Clone)]
pub struct Particle {
    location: Vec<f64>,
    episodes: VecDeque<ParticleEpisode>,
    window: usize,
}

impl Particle {
    pub fn new(location: Vec<f64>, window: usize) -> Self {
        Self {
            location: location.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            episodes: VecDeque::with_capacity(window),
            window: window.max(1),
        }
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn episodes(&self) -> impl Iterator<Item = &ParticleEpisode> {
        self.episodes.iter()
    }

    pub fn episode_slice(&self) -> Vec<ParticleEpisode> {
        self.episodes.iter().cloned().collect()
    }

    pub fn record_episode(&mut self, episode: ParticleEpisode) {
        if self.episodes.len() == self.window {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    /// Running return estimate over the reward window.
    pub fn mean_reward(&self) -> Option<f64> {
        if self.episodes.is_empty() {
            return None;
        }
        Some(self.episodes.iter().map(|e| e.reward).sum::<f64>() / self.episodes.len() as f64)
    }
}

/// Fresh ensemble with locations drawn uniformly in the unit box.
pub fn init_particles(n: usize, dims: usize, window: usize, rng: &mut impl Rng) -> Vec<Particle> {
    (0..n)
        .map(|_| {
            let loc = (0..dims).map(|_| rng.random::<f64>()).collect();
            Particle::new(loc, window)
        })
        .collect()
}

/// Draw ξ = clip(φ + σ·z, 0, 1) and record the pre-clip score
/// ∇_φ log N(ξ_pre; φ, σ²I) = z/σ.
pub fn sample_params(particle: &Particle, sigma: f64, rng: &mut impl Rng) -> ParticleSample {
    let dims = particle.location.len();
    let mut values = Vec::with_capacity(dims);
    let mut score = Vec::with_capacity(dims);
    for &phi in &particle.location {
        let z: f64 = StandardNormal.sample(rng);
        values.push(phi + sigma * z);
        score.push(if sigma > 0.0 { z / sigma } else { 0.0 });
    }
    ParticleSample {
        params: EnvParams::new(values),
        score,
    }
}

/// RBF kernel exp(−‖a−b‖²/h).
pub fn kernel(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "kernel arguments must share length");
    assert!(bandwidth > 0.0, "kernel bandwidth must be positive");
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / bandwidth).exp()
}

/// Gradient of the kernel with respect to its second argument:
/// ∇_b exp(−‖a−b‖²/h) = (2/h)(a − b)·k.
pub fn kernel_grad_second(a: &[f64], b: &[f64], bandwidth: f64) -> Vec<f64> {
    let k = kernel(a, b, bandwidth);
    a.iter()
        .zip(b)
        .map(|(x, y)| 2.0 * (x - y) / bandwidth * k)
        .collect()
}

/// Median-heuristic bandwidth over particle locations:
/// median pairwise squared distance divided by ln(N+1).
pub fn median_bandwidth(locations: &[Vec<f64>]) -> f64 {
    let n = locations.len();
    if n < 2 {
        return 1.0;
    }
    let mut sq_dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sq: f64 = locations[i]
                .iter()
                .zip(&locations[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sq_dists.push(sq);
        }
    }
    sq_dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sq_dists.len() / 2;
    let median = if sq_dists.len() % 2 == 1 {
        sq_dists[mid]
    } else {
        0.5 * (sq_dists[mid - 1] + sq_dists[mid])
    };
    (median / ((n + 1) as f64).ln()).max(1e-8)
}

/// Score-function estimate of the return gradient for one particle:
/// mean over episodes of (r − r̄)·score, with r̄ the batch mean.
/// `None` when the batch is empty (nothing to estimate).
pub fn estimate_grad_j(episodes: &[ParticleEpisode]) -> Option<Vec<f64>> {
    if episodes.is_empty() {
        return None;
    }
    let dims = episodes[0].score.len();
    let mean: f64 = episodes.iter().map(|e| e.reward).sum::<f64>() / episodes.len() as f64;
    let mut grad = vec![0.0; dims];
    for e in episodes {
        let adv = e.reward - mean;
        for (g, s) in grad.iter_mut().zip(&e.score) {
            *g += adv * s;
        }
    }
    for g in &mut grad {
        *g /= episodes.len() as f64;
    }
    Some(grad)
}

/// Interacting ensemble update:
/// φ_i ← clip(φ_i + (ε/N)·Σ_j [∇J_j·k(φ_i,φ_j) + α·∇_{φ_j}k(φ_i,φ_j)]).
pub fn svpg_update(particles: &mut [Particle], grads: &[Vec<f64>], cfg: &SvpgConfig) -> Result<()> {
    if particles.len() != grads.len() {
        return Err(Error::Usage(format!(
            "svpg_update with {} particles and {} gradients",
            particles.len(),
            grads.len()
        )));
    }
    let locations: Vec<Vec<f64>> = particles.iter().map(|p| p.location.clone()).collect();
    let updated = svpg_step(&locations, grads, cfg);
    for (p, new_loc) in particles.iter_mut().zip(updated) {
        p.location = new_loc;
    }
    Ok(())
}

/// Pure form of the update used by `svpg_update`, returning clipped
/// locations.
pub fn svpg_step(locations: &[Vec<f64>], grads: &[Vec<f64>], cfg: &SvpgConfig) -> Vec<Vec<f64>> {
    let n = locations.len();
    let h = match cfg.bandwidth {
        Bandwidth::MedianHeuristic => median_bandwidth(locations),
        Bandwidth::Fixed(h) => h,
    };
    let scale = cfg.learning_rate / n as f64;
    locations
        .iter()
        .map(|loc_i| {
            let mut delta = vec![0.0; loc_i.len()];
            for (loc_j, grad_j) in locations.iter().zip(grads) {
                let k = kernel(loc_i, loc_j, h);
                let k_grad = kernel_grad_second(loc_i, loc_j, h);
                for ((d, g), kg) in delta.iter_mut().zip(grad_j).zip(&k_grad) {
                    *d += g * k + cfg.temperature * kg;
                }
            }
            loc_i
                .iter()
                .zip(&delta)
                .map(|(x, d)| (x + scale * d).clamp(0.0, 1.0))
                .collect()
        })
        .collect()
}

/// Fixed-length trajectory features: (state, action) pairs subsampled at
/// [`FEATURE_STEPS`] evenly spaced indices, zero-padded for short episodes.
pub fn featurize_trajectory(pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    assert!(!pairs.is_empty(), "cannot featurize an empty trajectory");
    let per_step = pairs[0].0.len() + pairs[0].1.len();
    let mut features = vec![0.0; FEATURE_STEPS * per_step];
    for slot in 0..FEATURE_STEPS {
        let idx = if pairs.len() >= FEATURE_STEPS {
            slot * pairs.len() / FEATURE_STEPS
        } else if slot < pairs.len() {
            slot
        } else {
            break;
        };
        let (state, action) = &pairs[idx];
        let base = slot * per_step;
        features[base..base + state.len()].copy_from_slice(state);
        features[base + state.len()..base + per_step].copy_from_slice(action);
    }
    features
}

/// Binary classifier scoring whether a trajectory came from a randomized
/// instance; its log-probability is the environment-difficulty reward of
/// the discriminator-driven baseline.
#[derive(Debug)]
pub struct Discriminator {
    net: Approximator,
    opt: Adam,
}

impl Discriminator {
    pub fn new(feature_len: usize, hidden: (usize, usize), lr: f64, rng: &mut impl Rng) -> Self {
        let net = Approximator::new(
            &[feature_len, hidden.0, hidden.1, 1],
            Activation::Sigmoid,
            rng,
        );
        let opt = Adam::new(net.params().len(), lr);
        Self { net, opt }
    }

    pub fn feature_len(&self) -> usize {
        self.net.input_dim()
    }

    pub fn net(&self) -> &Approximator {
        &self.net
    }

    /// Probability the features came from a randomized instance.
    pub fn probability(&self, features: &[f64]) -> Result<f64> {
        self.net.forward_scalar(features)
    }

    /// log D(features); non-positive since D ∈ (0, 1).
    pub fn reward(&self, features: &[f64]) -> Result<f64> {
        Ok(self.probability(features)?.ln())
    }

    /// One binary cross-entropy step: randomized trajectories labeled 1,
    /// reference trajectories labeled 0. Returns the pre-step loss.
    pub fn train(&mut self, ref_feats: &[Vec<f64>], rand_feats: &[Vec<f64>]) -> Result<f64> {
        let (loss, grad) = bce_loss_grad(&self.net, ref_feats, rand_feats)?;
        self.opt.step(self.net.params_mut(), &grad)?;
        Ok(loss)
    }
}

/// Mean binary cross-entropy of a classifier over a labeled pair of
/// batches (reference = 0, randomized = 1) and its parameter gradient.
pub fn bce_loss_grad(
    net: &Approximator,
    ref_feats: &[Vec<f64>],
    rand_feats: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if ref_feats.is_empty() || rand_feats.is_empty() {
        return Err(Error::Usage(
            "discriminator training needs both reference and randomized batches".into(),
        ));
    }
    let total = (ref_feats.len() + rand_feats.len()) as f64;
    let mut grad = vec![0.0; net.params().len()];
    let mut loss = 0.0;
    for (feats, label) in ref_feats
        .iter()
        .map(|f| (f, 0.0))
        .chain(rand_feats.iter().map(|f| (f, 1.0)))
    {
        let p = net.forward_scalar(feats)?.clamp(1e-12, 1.0 - 1e-12);
        loss -= (label * p.ln() + (1.0 - label) * (1.0 - p).ln()) / total;
        let dl_dp = (-label / p + (1.0 - label) / (1.0 - p)) / total;
        let g = net.gradient(feats, &[dl_dp])?;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    Ok((loss, grad))
}

/// The loss alone, for derivative cross-checks.
pub fn bce_loss(net: &Approximator, ref_feats: &[Vec<f64>], rand_feats: &[Vec<f64>]) -> Result<f64> {
    let total = (ref_feats.len() + rand_feats.len()) as f64;
    let mut loss = 0.0;
    for (feats, label) in ref_feats
        .iter()
        .map(|f| (f, 0.0))
        .chain(rand_feats.iter().map(|f| (f, 1.0)))
    {
        let p = net.forward_scalar(feats)?.clamp(1e-12, 1.0 - 1e-12);
        loss -= (label * p.ln() + (1.0 - label) * (1.0 - p).ln()) / total;
    }
    Ok(loss)
}

//! PPO training with action masking and curriculum learning.
//!
//! One iteration: collect a batch of episodes with sampling-mode actions,
//! estimate advantages with GAE, run clipped-surrogate updates over shuffled
//! minibatches, then raise the difficulty by one if the batch success rate
//! cleared the threshold. Everything is driven by derived random streams, so
//! a run is reproducible from its seed; with `threads = 1` it is the
//! deterministic reference mode (parallel runs chunk work identically and
//! reduce in fixed order, so they match it bit for bit).

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::env::{sample_instance, CurriculumState, EpisodeState, RewardConfig};
use crate::lattice::{
    build_lattice, preset_by_name, sample_connected_mask, Lattice, TopologyMask,
};
use crate::policy::{masked_stats, math, PolicyNet};
use crate::rng::{rng_for, tags};
use crate::{Error, Result};

/// Where episode topologies come from.
#[derive(Debug, Clone)]
pub enum TopologyRegime {
    /// Fresh connected mask sampled per episode with node count in range.
    Generic { size_min: usize, size_max: usize },
    /// The same mask every episode (topology-specific model).
    Fixed(TopologyMask),
    /// With probability `probability` a uniformly chosen forced mask,
    /// otherwise a fresh sampled one (fine-tuning regime).
    ForcedMix {
        masks: Vec<TopologyMask>,
        probability: f64,
        size_min: usize,
        size_max: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub rows: usize,
    pub cols: usize,
    pub hidden: Vec<usize>,
    pub batch_episodes: usize,
    pub ppo_epochs: usize,
    pub minibatch_size: usize,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub regime: TopologyRegime,
    pub reward: RewardConfig,
    pub success_threshold: f64,
    pub seed: u64,
    pub threads: usize,
    /// Episode cap is `2 * difficulty + max_steps_slack`.
    pub max_steps_slack: usize,
    pub start_difficulty: usize,
    /// Stop early once the curriculum reaches this difficulty.
    pub stop_at_difficulty: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Run a greedy + sampling evaluation pass every N iterations.
    pub eval_every: Option<usize>,
    pub eval_episodes: usize,
}

impl TrainConfig {
    /// Spec defaults for a lattice.
    pub fn new(rows: usize, cols: usize) -> TrainConfig {
        TrainConfig {
            rows,
            cols,
            hidden: crate::policy::DEFAULT_HIDDEN.to_vec(),
            batch_episodes: 256,
            ppo_epochs: 4,
            minibatch_size: 1024,
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 3e-4,
            max_iterations: 200,
            regime: TopologyRegime::Generic {
                size_min: 2,
                size_max: rows * cols,
            },
            reward: RewardConfig::default(),
            success_threshold: 0.85,
            seed: 0,
            threads: 1,
            max_steps_slack: 8,
            start_difficulty: 1,
            stop_at_difficulty: None,
            checkpoint_every: None,
            checkpoint_dir: None,
            eval_every: None,
            eval_episodes: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::InvalidArgument("clip_epsilon must be in (0,1)".into()));
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must be in (0,1]")));
            }
        }
        if !(self.success_threshold > 0.0 && self.success_threshold < 1.0) {
            return Err(Error::InvalidArgument(
                "success_threshold must be in (0,1)".into(),
            ));
        }
        if self.batch_episodes == 0 || self.minibatch_size == 0 || self.ppo_epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch_episodes, minibatch_size and ppo_epochs must be positive".into(),
            ));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        if self.start_difficulty == 0 {
            return Err(Error::InvalidArgument(
                "start_difficulty must be at least 1".into(),
            ));
        }
        self.reward.validate()?;
        let n = self.rows * self.cols;
        match &self.regime {
            TopologyRegime::Generic { size_min, size_max } => {
                if *size_min < 1 || size_min > size_max || *size_max > n {
                    return Err(Error::InvalidArgument(format!(
                        "generic size range ({size_min},{size_max}) invalid for {n} nodes"
                    )));
                }
            }
            TopologyRegime::Fixed(mask) => {
                self.check_mask_dims(mask)?;
            }
            TopologyRegime::ForcedMix {
                masks,
                probability,
                size_min,
                size_max,
            } => {
                if masks.is_empty() {
                    return Err(Error::InvalidArgument(
                        "forced_mix requires at least one mask".into(),
                    ));
                }
                if !(0.0..=1.0).contains(probability) {
                    return Err(Error::InvalidArgument(
                        "forced_mix probability must be in [0,1]".into(),
                    ));
                }
                if *size_min < 1 || size_min > size_max || *size_max > n {
                    return Err(Error::InvalidArgument(
                        "forced_mix sampled-size range invalid".into(),
                    ));
                }
                for mask in masks {
                    self.check_mask_dims(mask)?;
                }
            }
        }
        Ok(())
    }

    fn check_mask_dims(&self, mask: &TopologyMask) -> Result<()> {
        let lat = mask.lattice();
        if lat.rows() != self.rows || lat.cols() != self.cols {
            return Err(Error::InvalidArgument(format!(
                "topology lattice {}x{} does not match config lattice {}x{}",
                lat.rows(),
                lat.cols(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }
}

/// Flat transition storage for one collected batch.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub num_edges: usize,
    /// T x obs_dim, row-major.
    pub obs: Vec<f64>,
    pub actions: Vec<usize>,
    /// Log-probabilities at sampling time, under the masked distribution.
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// T x num_edges active-edge snapshots, exactly as used when sampling.
    pub edge_masks: Vec<bool>,
    pub episodes: Vec<EpisodeMeta>,
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeMeta {
    pub start: usize,
    pub len: usize,
    pub success: bool,
    pub gates: usize,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchStats {
    pub success_rate: f64,
    pub mean_gates_on_success: f64,
}

fn pick_mask(
    regime: &TopologyRegime,
    lattice: &std::sync::Arc<Lattice>,
    rng: &mut ChaCha8Rng,
) -> Result<TopologyMask> {
    match regime {
        TopologyRegime::Generic { size_min, size_max } => {
            sample_connected_mask(lattice, (*size_min, *size_max), rng)
        }
        TopologyRegime::Fixed(mask) => Ok(mask.clone()),
        TopologyRegime::ForcedMix {
            masks,
            probability,
            size_min,
            size_max,
        } => {
            // p = 0 draws nothing, so the stream (and hence the trajectory)
            // matches the plain generic regime exactly.
            if *probability > 0.0 && rng.gen::<f64>() < *probability {
                Ok(masks[rng.gen_range(0..masks.len())].clone())
            } else {
                sample_connected_mask(lattice, (*size_min, *size_max), rng)
            }
        }
    }
}

/// Play `cfg.batch_episodes` episodes with sampling-mode actions.
///
/// Episodes run in lockstep so the policy forward passes are batched; each
/// episode owns a random stream derived from one draw off `rng`, which keeps
/// the batch reproducible under any parallel schedule.
pub fn collect_batch(
    net: &PolicyNet,
    cfg: &TrainConfig,
    difficulty: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(RolloutBatch, BatchStats)> {
    let base: u64 = rng.gen();
    let lattice = build_lattice(cfg.rows, cfg.cols)?;
    let chunk = 64usize;
    let n_chunks = cfg.batch_episodes.div_ceil(chunk);

    let run_chunk = |c: usize| -> Result<Vec<EpisodeRecord>> {
        let lo = c * chunk;
        let hi = ((c + 1) * chunk).min(cfg.batch_episodes);
        collect_episode_range(net, cfg, difficulty, &lattice, base, lo, hi)
    };

    let chunks: Vec<Vec<EpisodeRecord>> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..n_chunks)
                .into_par_iter()
                .map(run_chunk)
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        (0..n_chunks).map(run_chunk).collect::<Result<_>>()?
    };

    let mut batch = RolloutBatch {
        obs_dim: net.obs_dim(),
        num_edges: net.num_edges(),
        ..Default::default()
    };
    let mut successes = 0usize;
    let mut gates_sum = 0usize;
    for rec in chunks.into_iter().flatten() {
        let start = batch.len();
        batch.obs.extend_from_slice(&rec.obs);
        batch.actions.extend_from_slice(&rec.actions);
        batch.log_probs.extend_from_slice(&rec.log_probs);
        batch.rewards.extend_from_slice(&rec.rewards);
        batch.values.extend_from_slice(&rec.values);
        batch.dones.extend_from_slice(&rec.dones);
        batch.edge_masks.extend_from_slice(&rec.edge_masks);
        batch.episodes.push(EpisodeMeta {
            start,
            len: rec.actions.len(),
            success: rec.success,
            gates: rec.gates,
        });
        if rec.success {
            successes += 1;
            gates_sum += rec.gates;
        }
    }
    let stats = BatchStats {
        success_rate: successes as f64 / cfg.batch_episodes as f64,
        mean_gates_on_success: if successes > 0 {
            gates_sum as f64 / successes as f64
        } else {
            f64::NAN
        },
    };
    Ok((batch, stats))
}

struct EpisodeRecord {
    obs: Vec<f64>,
    actions: Vec<usize>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    edge_masks: Vec<bool>,
    success: bool,
    gates: usize,
}

/// Run episodes `lo..hi` of a batch in lockstep.
fn collect_episode_range(
    net: &PolicyNet,
    cfg: &TrainConfig,
    difficulty: usize,
    lattice: &std::sync::Arc<Lattice>,
    base: u64,
    lo: usize,
    hi: usize,
) -> Result<Vec<EpisodeRecord>> {
    struct Live {
        state: EpisodeState,
        rng: ChaCha8Rng,
        rec: EpisodeRecord,
    }
    let max_steps = 2 * difficulty + cfg.max_steps_slack;
    let mut live: Vec<Live> = Vec::with_capacity(hi - lo);
    let mut out: Vec<Option<EpisodeRecord>> = (lo..hi).map(|_| None).collect();
    for e in lo..hi {
        let mut ep_rng = rng_for(base, &[e as u64]);
        let mask = pick_mask(&cfg.regime, lattice, &mut ep_rng)?;
        let perm = sample_instance(&mask, difficulty, &mut ep_rng)?;
        let state = EpisodeState::new(perm, mask, max_steps);
        let rec = EpisodeRecord {
            obs: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            dones: Vec::new(),
            edge_masks: Vec::new(),
            success: state.succeeded(),
            gates: 0,
        };
        if state.done {
            // Identity at step zero: success with an empty circuit.
            out[e - lo] = Some(rec);
        } else {
            live.push(Live {
                state,
                rng: ep_rng,
                rec,
            });
        }
    }

    let obs_dim = net.obs_dim();
    let n_edges = net.num_edges();
    let mut obs_batch: Vec<f64> = Vec::new();
    let mut logits: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    while live.iter().any(|l| !l.state.done) {
        let alive: Vec<usize> = (0..live.len()).filter(|&i| !live[i].state.done).collect();
        let rows = alive.len();
        obs_batch.resize(rows * obs_dim, 0.0);
        logits.resize(rows * n_edges, 0.0);
        values.resize(rows, 0.0);
        for (row, &i) in alive.iter().enumerate() {
            crate::policy::encode_into(
                &live[i].state.perm,
                &live[i].state.mask,
                &mut obs_batch[row * obs_dim..(row + 1) * obs_dim],
            );
        }
        math::forward_rows(net, &obs_batch[..rows * obs_dim], rows, &mut logits, &mut values, None);
        for (row, &i) in alive.iter().enumerate() {
            let l = &mut live[i];
            let stats = masked_stats(
                &logits[row * n_edges..(row + 1) * n_edges],
                l.state.mask.edge_flags(),
            );
            let action = crate::policy::sample_index(&stats.probs, &mut l.rng);
            debug_assert!(l.state.mask.is_edge_active(action));
            l.rec.edge_masks.extend_from_slice(l.state.mask.edge_flags());
            let (reward, done) = l.state.step(action, &cfg.reward)?;
            l.rec
                .obs
                .extend_from_slice(&obs_batch[row * obs_dim..(row + 1) * obs_dim]);
            l.rec.actions.push(action);
            l.rec.log_probs.push(stats.log_probs[action]);
            l.rec.rewards.push(reward);
            l.rec.values.push(values[row]);
            l.rec.dones.push(done);
        }
    }
    let mut live_iter = live.into_iter();
    for slot in out.iter_mut() {
        if slot.is_none() {
            let mut l = live_iter.next().expect("live episode accounted");
            l.rec.success = l.state.succeeded();
            l.rec.gates = l.state.steps_taken;
            *slot = Some(l.rec);
        }
    }
    Ok(out.into_iter().map(|o| o.expect("all episodes filled")).collect())
}

/// Generalized advantage estimation with bootstrap value 0 at terminal and
/// truncation boundaries. Returns `(advantages, value targets)`.
pub fn compute_gae(rollout: &RolloutBatch, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let t = rollout.len();
    let mut advantages = vec![0.0; t];
    let mut returns = vec![0.0; t];
    for ep in &rollout.episodes {
        let mut acc = 0.0;
        for i in (ep.start..ep.start + ep.len).rev() {
            let next_value = if rollout.dones[i] {
                0.0
            } else {
                rollout.values[i + 1]
            };
            let delta = rollout.rewards[i] + gamma * next_value - rollout.values[i];
            acc = delta + gamma * lambda * if rollout.dones[i] { 0.0 } else { acc };
            advantages[i] = acc;
            returns[i] = acc + rollout.values[i];
        }
    }
    (advantages, returns)
}

/// First-order adaptive-moment optimizer.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / b1c;
            let vhat = self.v[i] / b2c;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Loss statistics for one update (averaged per transition).
#[derive(Debug, Clone, Copy, Default)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// Maximum global gradient L2 norm before scaling.
const GRAD_CLIP: f64 = 0.5;
/// Rows per gradient-accumulation chunk; fixed so the reduction order (and
/// therefore the result) is identical for every thread count.
const GRAD_CHUNK: usize = 64;

/// Full PPO loss and its analytic gradient over the given transitions.
///
/// `advantages` must already be normalized if normalization is wanted; the
/// loss is `-surrogate + value_coef * value_mse - entropy_coef * entropy`,
/// with the surrogate clipped at `clip_epsilon` and the entropy taken over
/// the masked distribution.
pub fn ppo_loss_and_grad(
    net: &PolicyNet,
    rollout: &RolloutBatch,
    indices: &[usize],
    advantages: &[f64],
    returns: &[f64],
    cfg: &TrainConfig,
) -> Result<(LossStats, Vec<f64>)> {
    let b = indices.len();
    if b == 0 {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let chunks: Vec<&[usize]> = indices.chunks(GRAD_CHUNK).collect();

    let eval_chunk = |chunk: &[usize]| -> (LossStats, Vec<f64>) {
        let rows = chunk.len();
        let obs_dim = rollout.obs_dim;
        let n_edges = rollout.num_edges;
        let mut obs = vec![0.0; rows * obs_dim];
        for (r, &idx) in chunk.iter().enumerate() {
            obs[r * obs_dim..(r + 1) * obs_dim]
                .copy_from_slice(&rollout.obs[idx * obs_dim..(idx + 1) * obs_dim]);
        }
        let mut logits = vec![0.0; rows * n_edges];
        let mut values = vec![0.0; rows];
        let mut cache = math::new_cache(net);
        math::forward_rows(net, &obs, rows, &mut logits, &mut values, Some(&mut cache));

        let mut dlogits = vec![0.0; rows * n_edges];
        let mut dvalues = vec![0.0; rows];
        let mut stats_sum = LossStats::default();
        let inv_b = 1.0 / b as f64;
        for (r, &idx) in chunk.iter().enumerate() {
            let flags = &rollout.edge_masks[idx * n_edges..(idx + 1) * n_edges];
            let ms = masked_stats(&logits[r * n_edges..(r + 1) * n_edges], flags);
            let action = rollout.actions[idx];
            let adv = advantages[idx];
            let logp_new = ms.log_probs[action];
            let ratio = (logp_new - rollout.log_probs[idx]).exp();
            let unclipped = ratio * adv;
            let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
            let surrogate = unclipped.min(clipped);
            stats_sum.policy_loss += -surrogate;
            // d(-surrogate)/d(logp): zero when the clipped branch binds.
            let dlogp = if unclipped <= clipped { -ratio * adv } else { 0.0 } * inv_b;

            let v = values[r];
            let ret = returns[idx];
            stats_sum.value_loss += (v - ret) * (v - ret);
            dvalues[r] = cfg.value_coef * 2.0 * (v - ret) * inv_b;

            stats_sum.entropy += ms.entropy;
            let drow = &mut dlogits[r * n_edges..(r + 1) * n_edges];
            for j in 0..n_edges {
                let p = ms.probs[j];
                if p == 0.0 {
                    continue;
                }
                let indicator = if j == action { 1.0 } else { 0.0 };
                let mut d = dlogp * (indicator - p);
                // Entropy bonus: dH/dz_j = -p (log p + H).
                d += cfg.entropy_coef * inv_b * p * (ms.log_probs[j] + ms.entropy);
                drow[j] = d;
            }
        }
        let mut grad = vec![0.0; net.param_count() as usize];
        math::backward_rows(net, &obs, rows, &cache, &dlogits, &dvalues, &mut grad);
        (stats_sum, grad)
    };

    let partials: Vec<(LossStats, Vec<f64>)> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            chunks.par_iter().map(|c| eval_chunk(c)).collect()
        })
    } else {
        chunks.iter().map(|c| eval_chunk(c)).collect()
    };

    let mut grad = vec![0.0; net.param_count() as usize];
    let mut stats = LossStats::default();
    for (s, g) in partials {
        stats.policy_loss += s.policy_loss;
        stats.value_loss += s.value_loss;
        stats.entropy += s.entropy;
        for (acc, x) in grad.iter_mut().zip(&g) {
            *acc += x;
        }
    }
    let inv_b = 1.0 / b as f64;
    stats.policy_loss *= inv_b;
    stats.value_loss *= inv_b;
    stats.entropy *= inv_b;
    Ok((stats, grad))
}

fn normalize_advantages(raw: &[f64], indices: &[usize], out: &mut [f64]) {
    let b = indices.len() as f64;
    let mean = indices.iter().map(|&i| raw[i]).sum::<f64>() / b;
    let var = indices.iter().map(|&i| (raw[i] - mean) * (raw[i] - mean)).sum::<f64>() / b;
    let std = var.sqrt();
    for &i in indices {
        out[i] = (raw[i] - mean) / (std + 1e-8);
    }
}

/// One PPO update over a collected batch: `ppo_epochs` passes of shuffled
/// minibatches with per-minibatch advantage normalization and a global
/// gradient-norm clip.
pub fn ppo_update(
    net: &mut PolicyNet,
    opt: &mut Adam,
    rollout: &RolloutBatch,
    advantages: &[f64],
    returns: &[f64],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossStats> {
    if rollout.is_empty() {
        return Err(Error::InvalidArgument(
            "ppo_update requires a non-empty rollout".into(),
        ));
    }
    let t = rollout.len();
    let mut indices: Vec<usize> = (0..t).collect();
    let mut norm_adv = vec![0.0; t];
    let mut total = LossStats::default();
    let mut n_batches = 0usize;
    for _epoch in 0..cfg.ppo_epochs {
        for i in (1..t).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        for mb in indices.chunks(cfg.minibatch_size) {
            normalize_advantages(advantages, mb, &mut norm_adv);
            let (stats, mut grad) =
                ppo_loss_and_grad(net, rollout, mb, &norm_adv, returns, cfg)?;
            let loss = stats.policy_loss + cfg.value_coef * stats.value_loss
                - cfg.entropy_coef * stats.entropy;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "minibatch {n_batches}: policy {} value {} entropy {}",
                    stats.policy_loss, stats.value_loss, stats.entropy
                )));
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "minibatch {n_batches}: gradient norm is not finite"
                )));
            }
            if norm > GRAD_CLIP {
                let scale = GRAD_CLIP / norm;
                for g in &mut grad {
                    *g *= scale;
                }
            }
            opt.step(net.params_mut(), &grad);
            net.quantize_params();
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            n_batches += 1;
        }
    }
    total.policy_loss /= n_batches as f64;
    total.value_loss /= n_batches as f64;
    total.entropy /= n_batches as f64;
    Ok(total)
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub difficulty: usize,
    pub success_rate: f64,
    pub mean_gates: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub const LOG_HEADER: &str =
    "iteration,difficulty,success_rate,mean_gates,policy_loss,value_loss,entropy";

impl IterRecord {
    pub fn to_log_line(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6e},{:.6e},{:.6e}",
            self.iteration,
            self.difficulty,
            self.success_rate,
            self.mean_gates,
            self.policy_loss,
            self.value_loss,
            self.entropy
        )
    }

    pub fn parse_log_line(line: &str) -> Result<IterRecord> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "log line has {} fields, expected 7",
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Parse(format!("bad log field `{}`", fields[i])))
        };
        Ok(IterRecord {
            iteration: num(0)? as usize,
            difficulty: num(1)? as usize,
            success_rate: num(2)?,
            mean_gates: num(3)?,
            policy_loss: num(4)?,
            value_loss: num(5)?,
            entropy: num(6)?,
        })
    }
}

/// Serialize a training log (with header and `#` eval comment lines).
pub fn write_log(records: &[IterRecord], evals: &[EvalRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    let mut ev = evals.iter().peekable();
    for rec in records {
        out.push_str(&rec.to_log_line());
        out.push('\n');
        while ev.peek().is_some_and(|e| e.iteration == rec.iteration) {
            let e = ev.next().unwrap();
            out.push_str(&format!(
                "# eval iteration={} greedy={:.4} sampling={:.4}\n",
                e.iteration, e.greedy_rate, e.sampling_rate
            ));
        }
    }
    out
}

/// Parse a training log produced by [`write_log`].
pub fn parse_log(text: &str) -> Result<Vec<IterRecord>> {
    let mut out = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') || line == LOG_HEADER {
            continue;
        }
        out.push(IterRecord::parse_log_line(line)?);
    }
    Ok(out)
}

/// Success rates of a periodic evaluation pass.
#[derive(Debug, Clone, Copy)]
pub struct EvalRecord {
    pub iteration: usize,
    pub greedy_rate: f64,
    pub sampling_rate: f64,
}

/// Training output: final network, per-iteration log, eval snapshots.
#[derive(Debug)]
pub struct TrainOutcome {
    pub net: PolicyNet,
    pub log: Vec<IterRecord>,
    pub evals: Vec<EvalRecord>,
    pub final_difficulty: usize,
}

/// Train a fresh network under `cfg`.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(cfg, |_| {})
}

/// Train with a per-iteration callback (used for streaming logs).
pub fn train_with(cfg: &TrainConfig, on_iter: impl FnMut(&IterRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let net = PolicyNet::new(cfg.rows, cfg.cols, &cfg.hidden, cfg.seed)?;
    run_training(net, cfg, on_iter)
}

/// Continue training from an existing network (topology-forcing fine-tune
/// or any regime change). Optimizer state starts fresh; the base network is
/// not modified.
pub fn fine_tune(base: &PolicyNet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    fine_tune_with(base, cfg, |_| {})
}

pub fn fine_tune_with(
    base: &PolicyNet,
    cfg: &TrainConfig,
    on_iter: impl FnMut(&IterRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if base.rows() != cfg.rows || base.cols() != cfg.cols {
        return Err(Error::InvalidArgument(format!(
            "base net lattice {}x{} does not match config {}x{}",
            base.rows(),
            base.cols(),
            cfg.rows,
            cfg.cols
        )));
    }
    run_training(base.clone(), cfg, on_iter)
}

fn run_training(
    mut net: PolicyNet,
    cfg: &TrainConfig,
    mut on_iter: impl FnMut(&IterRecord),
) -> Result<TrainOutcome> {
    let mut opt = Adam::new(cfg.learning_rate, net.param_count() as usize);
    let mut curriculum = CurriculumState::new(cfg.success_threshold);
    curriculum.difficulty = cfg.start_difficulty;
    let mut log = Vec::new();
    let mut evals = Vec::new();

    for iter in 0..cfg.max_iterations {
        let difficulty = curriculum.difficulty;
        let mut collect_rng = rng_for(cfg.seed, &[tags::ROLLOUT, iter as u64]);
        let (rollout, stats) = collect_batch(&net, cfg, difficulty, &mut collect_rng)?;
        let loss = if rollout.is_empty() {
            LossStats::default()
        } else {
            let (adv, ret) = compute_gae(&rollout, cfg.gamma, cfg.gae_lambda);
            let mut update_rng = rng_for(cfg.seed, &[tags::UPDATE, iter as u64]);
            ppo_update(&mut net, &mut opt, &rollout, &adv, &ret, cfg, &mut update_rng)
                .map_err(|e| match e {
                    Error::NonFiniteLoss(msg) => {
                        Error::NonFiniteLoss(format!("iteration {iter}: {msg}"))
                    }
                    other => other,
                })?
        };
        curriculum.observe_batch(stats.success_rate);
        let record = IterRecord {
            iteration: iter,
            difficulty,
            success_rate: stats.success_rate,
            mean_gates: stats.mean_gates_on_success,
            policy_loss: loss.policy_loss,
            value_loss: loss.value_loss,
            entropy: loss.entropy,
        };
        on_iter(&record);
        log.push(record);

        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, cfg.checkpoint_dir.as_ref()) {
            if (iter + 1) % every == 0 {
                std::fs::create_dir_all(dir)
                    .map_err(|e| Error::io(dir.display().to_string(), e))?;
                let path = dir.join(format!("checkpoint_{:06}.permnet", iter + 1));
                net.save(&path)?;
            }
        }
        if let Some(every) = cfg.eval_every {
            if (iter + 1) % every == 0 {
                evals.push(evaluate(&net, cfg, curriculum.difficulty, iter)?);
            }
        }
        if cfg
            .stop_at_difficulty
            .is_some_and(|target| curriculum.difficulty >= target)
        {
            break;
        }
    }
    Ok(TrainOutcome {
        net,
        log,
        evals,
        final_difficulty: curriculum.difficulty,
    })
}

/// Success rate of greedy and sampling inference on fresh instances at the
/// given difficulty. Training always samples; this is the periodic check.
fn evaluate(
    net: &PolicyNet,
    cfg: &TrainConfig,
    difficulty: usize,
    iteration: usize,
) -> Result<EvalRecord> {
    let lattice = build_lattice(cfg.rows, cfg.cols)?;
    let max_steps = 2 * difficulty + cfg.max_steps_slack;
    let mut rates = [0.0f64; 2];
    for (mi, mode) in [crate::policy::ActMode::Greedy, crate::policy::ActMode::Sampling]
        .into_iter()
        .enumerate()
    {
        let mut successes = 0;
        for e in 0..cfg.eval_episodes {
            let mut rng = rng_for(cfg.seed, &[tags::ROLLOUT, iteration as u64, mi as u64, e as u64]);
            let mask = pick_mask(&cfg.regime, &lattice, &mut rng)?;
            let perm = sample_instance(&mask, difficulty, &mut rng)?;
            let mut state = EpisodeState::new(perm, mask, max_steps);
            while !state.done {
                let action =
                    crate::policy::act(net, &state.perm, &state.mask, mode, &mut rng)?;
                state.step(action, &cfg.reward)?;
            }
            if state.succeeded() {
                successes += 1;
            }
        }
        rates[mi] = successes as f64 / cfg.eval_episodes as f64;
    }
    Ok(EvalRecord {
        iteration,
        greedy_rate: rates[0],
        sampling_rate: rates[1],
    })
}

/// Text form of the training configuration (TOML). Unset keys take the
/// defaults of [`TrainConfig::new`]; topology references resolve either to a
/// built-in preset name or to a topology file path.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTrainConfig {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub batch_episodes: Option<usize>,
    pub ppo_epochs: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub clip_epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub gae_lambda: Option<f64>,
    pub value_coef: Option<f64>,
    pub entropy_coef: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_iterations: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub success_threshold: Option<f64>,
    pub success_reward: Option<f64>,
    pub step_penalty: Option<f64>,
    pub regime: Option<String>,
    pub size_min: Option<usize>,
    pub size_max: Option<usize>,
    pub topology: Option<String>,
    pub force_topologies: Option<Vec<String>>,
    pub force_prob: Option<f64>,
    pub max_steps_slack: Option<usize>,
    pub start_difficulty: Option<usize>,
    pub stop_at_difficulty: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub eval_every: Option<usize>,
    pub eval_episodes: Option<usize>,
}

impl RawTrainConfig {
    pub fn from_toml_str(text: &str) -> Result<RawTrainConfig> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Resolve a topology reference: builtin preset name or file path.
    pub fn resolve_topology(reference: &str, rows: usize, cols: usize) -> Result<TopologyMask> {
        if let Some(preset) = preset_by_name(reference) {
            let lattice = build_lattice(rows, cols)?;
            return preset.resolve(&lattice);
        }
        let text = std::fs::read_to_string(reference)
            .map_err(|e| Error::io(reference.to_string(), e))?;
        TopologyMask::from_file_str(&text)
    }

    pub fn resolve(&self) -> Result<TrainConfig> {
        let rows = self.rows.unwrap_or(5);
        let cols = self.cols.unwrap_or(5);
        let mut cfg = TrainConfig::new(rows, cols);
        if let Some(v) = &self.hidden {
            cfg.hidden = v.clone();
        }
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(
            batch_episodes,
            ppo_epochs,
            minibatch_size,
            clip_epsilon,
            gamma,
            gae_lambda,
            value_coef,
            entropy_coef,
            learning_rate,
            max_iterations,
            seed,
            threads,
            success_threshold,
            max_steps_slack,
            start_difficulty
        );
        if let Some(v) = self.success_reward {
            cfg.reward.success_reward = v;
        }
        if let Some(v) = self.step_penalty {
            cfg.reward.step_penalty = v;
        }
        cfg.stop_at_difficulty = self.stop_at_difficulty;
        cfg.checkpoint_every = self.checkpoint_every;
        cfg.eval_every = self.eval_every;
        if let Some(v) = self.eval_episodes {
            cfg.eval_episodes = v;
        }

        let size_min = self.size_min.unwrap_or(2);
        let size_max = self.size_max.unwrap_or(rows * cols);
        match self.regime.as_deref().unwrap_or("generic") {
            "generic" => {
                cfg.regime = TopologyRegime::Generic { size_min, size_max };
            }
            "fixed" => {
                let reference = self.topology.as_deref().ok_or_else(|| {
                    Error::InvalidArgument("fixed regime requires `topology`".into())
                })?;
                let mask = Self::resolve_topology(reference, rows, cols)?;
                cfg.regime = TopologyRegime::Fixed(mask);
            }
            "forced_mix" => {
                let refs = self.force_topologies.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("forced_mix regime requires `force_topologies`".into())
                })?;
                let masks = refs
                    .iter()
                    .map(|r| Self::resolve_topology(r, rows, cols))
                    .collect::<Result<Vec<_>>>()?;
                cfg.regime = TopologyRegime::ForcedMix {
                    masks,
                    probability: self.force_prob.unwrap_or(0.25),
                    size_min,
                    size_max,
                };
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown regime `{other}` (expected generic, fixed or forced_mix)"
                )));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TopologyMask;

    fn tiny_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::new(2, 2);
        cfg.hidden = vec![16, 16, 16];
        cfg.batch_episodes = 16;
        cfg.minibatch_size = 64;
        cfg.max_iterations = 3;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny_cfg();
        cfg.clip_epsilon = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.regime = TopologyRegime::Generic {
            size_min: 0,
            size_max: 4,
        };
        assert!(cfg.validate().is_err());
        assert!(tiny_cfg().validate().is_ok());
    }

    #[test]
    fn collect_batch_regimes() {
        let cfg = tiny_cfg();
        let net = PolicyNet::new(2, 2, &cfg.hidden, 1).unwrap();
        let mut rng = rng_for(0, &[70]);
        let (batch, stats) = collect_batch(&net, &cfg, 1, &mut rng).unwrap();
        assert_eq!(batch.episodes.len(), 16);
        assert!(stats.success_rate >= 0.0 && stats.success_rate <= 1.0);
        // All sampled actions are active under their stored masks.
        for i in 0..batch.len() {
            let flags = &batch.edge_masks[i * batch.num_edges..(i + 1) * batch.num_edges];
            assert!(flags[batch.actions[i]]);
        }

        // Fixed regime: every episode mask identical; encode guarantees the
        // mask block of each observation matches.
        let lat = build_lattice(2, 2).unwrap();
        let mask = TopologyMask::from_nodes_induced(&lat, &[0, 1, 3]).unwrap();
        let mut cfg_fixed = tiny_cfg();
        cfg_fixed.regime = TopologyRegime::Fixed(mask.clone());
        let (batch, _) = collect_batch(&net, &cfg_fixed, 1, &mut rng).unwrap();
        let n = 4;
        for i in 0..batch.len() {
            let node_block = &batch.obs[i * batch.obs_dim + n * n..i * batch.obs_dim + n * n + n];
            for (j, &f) in mask.node_flags().iter().enumerate() {
                assert_eq!(node_block[j], if f { 1.0 } else { 0.0 });
            }
        }

        // Forced mix with p = 1 and one mask behaves like fixed.
        let mut cfg_forced = tiny_cfg();
        cfg_forced.regime = TopologyRegime::ForcedMix {
            masks: vec![mask.clone()],
            probability: 1.0,
            size_min: 2,
            size_max: 4,
        };
        let (batch, _) = collect_batch(&net, &cfg_forced, 1, &mut rng).unwrap();
        for i in 0..batch.len() {
            let edge_block = &batch.edge_masks[i * batch.num_edges..(i + 1) * batch.num_edges];
            assert_eq!(edge_block, mask.edge_flags());
        }
    }

    #[test]
    fn untrained_net_still_succeeds_sometimes_at_difficulty_one() {
        // Analytic floor: one correct swap among <=4 edges over >=10 steps.
        let cfg = tiny_cfg();
        let mut any = 0.0;
        for seed in 0..10u64 {
            let net = PolicyNet::new(2, 2, &cfg.hidden, seed).unwrap();
            let mut rng = rng_for(seed, &[71]);
            let (_, stats) = collect_batch(&net, &cfg, 1, &mut rng).unwrap();
            any += stats.success_rate;
        }
        assert!(any / 10.0 > 0.0, "no successes across 10 seeds");
    }

    #[test]
    fn gae_base_cases_and_oracle() {
        // Single transition: advantage = r - v.
        let mut batch = RolloutBatch {
            obs_dim: 1,
            num_edges: 1,
            obs: vec![0.0],
            actions: vec![0],
            log_probs: vec![0.0],
            rewards: vec![2.5],
            values: vec![0.7],
            dones: vec![true],
            edge_masks: vec![true],
            episodes: vec![EpisodeMeta {
                start: 0,
                len: 1,
                success: true,
                gates: 1,
            }],
        };
        let (adv, ret) = compute_gae(&batch, 0.99, 0.95);
        assert!((adv[0] - (2.5 - 0.7)).abs() < 1e-12);
        assert!((ret[0] - 2.5).abs() < 1e-12);

        // gamma = lambda = 1: advantage telescopes to reward-to-go minus value.
        batch.rewards = vec![1.0, 2.0, 3.0];
        batch.values = vec![0.5, 0.25, 0.125];
        batch.dones = vec![false, false, true];
        batch.actions = vec![0, 0, 0];
        batch.log_probs = vec![0.0; 3];
        batch.obs = vec![0.0; 3];
        batch.edge_masks = vec![true; 3];
        batch.episodes = vec![EpisodeMeta {
            start: 0,
            len: 3,
            success: true,
            gates: 3,
        }];
        let (adv, _) = compute_gae(&batch, 1.0, 1.0);
        assert!((adv[0] - (6.0 - 0.5)).abs() < 1e-12);
        assert!((adv[1] - (5.0 - 0.25)).abs() < 1e-12);
        assert!((adv[2] - (3.0 - 0.125)).abs() < 1e-12);

        // Random episodes against the direct quadratic recomputation.
        let mut rng = rng_for(5, &[72]);
        for _ in 0..100 {
            let len = rng.gen_range(1..12);
            let rewards: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut dones = vec![false; len];
            dones[len - 1] = true;
            let batch = RolloutBatch {
                obs_dim: 1,
                num_edges: 1,
                obs: vec![0.0; len],
                actions: vec![0; len],
                log_probs: vec![0.0; len],
                rewards: rewards.clone(),
                values: values.clone(),
                dones,
                edge_masks: vec![true; len],
                episodes: vec![EpisodeMeta {
                    start: 0,
                    len,
                    success: false,
                    gates: len,
                }],
            };
            let (gamma, lambda) = (0.99, 0.95);
            let (adv, _) = compute_gae(&batch, gamma, lambda);
            for t in 0..len {
                // A_t = sum_l (gamma*lambda)^l * delta_{t+l}
                let mut expect = 0.0;
                for l in 0..len - t {
                    let i = t + l;
                    let next_v = if i + 1 < len { values[i + 1] } else { 0.0 };
                    let delta = rewards[i] + gamma * next_v - values[i];
                    expect += (gamma * lambda).powi(l as i32) * delta;
                }
                assert!(
                    (adv[t] - expect).abs() < 1e-10,
                    "t={t}: {} vs {expect}",
                    adv[t]
                );
            }
        }
    }

    #[test]
    fn zero_advantage_zero_entropy_update_is_noop() {
        let mut cfg = tiny_cfg();
        cfg.entropy_coef = 0.0;
        let mut net = PolicyNet::new(2, 2, &cfg.hidden, 1).unwrap();
        let mut rng = rng_for(0, &[73]);
        let (batch, _) = collect_batch(&net, &cfg, 2, &mut rng).unwrap();
        assert!(!batch.is_empty());
        let before = net.params().to_vec();
        let zeros = vec![0.0; batch.len()];
        // Value targets equal to stored values: zero value gradient too.
        let targets = batch.values.clone();
        let mut opt = Adam::new(cfg.learning_rate, net.param_count() as usize);
        let mut urng = rng_for(0, &[74]);
        ppo_update(&mut net, &mut opt, &batch, &zeros, &targets, &cfg, &mut urng).unwrap();
        assert_eq!(before, net.params());
    }

    #[test]
    fn surrogate_matches_scalar_reimplementation() {
        let cfg = tiny_cfg();
        let net = PolicyNet::new(2, 2, &cfg.hidden, 3).unwrap();
        let mut rng = rng_for(1, &[75]);
        let (mut batch, _) = collect_batch(&net, &cfg, 2, &mut rng).unwrap();
        assert!(batch.len() >= 4);
        // Force ratios away from 1 so both clip branches occur.
        for (i, lp) in batch.log_probs.iter_mut().enumerate() {
            *lp += if i % 2 == 0 { 0.4 } else { -0.4 };
        }
        let (adv, ret) = compute_gae(&batch, cfg.gamma, cfg.gae_lambda);
        let indices: Vec<usize> = (0..batch.len()).collect();
        let mut norm = vec![0.0; batch.len()];
        normalize_advantages(&adv, &indices, &mut norm);
        let (stats, _) = ppo_loss_and_grad(&net, &batch, &indices, &norm, &ret, &cfg).unwrap();

        // Scalar oracle.
        let mut expect = 0.0;
        let mut clipped_seen = 0;
        for &i in &indices {
            let obs = &batch.obs[i * batch.obs_dim..(i + 1) * batch.obs_dim];
            let (logits, _) = net.forward(obs).unwrap();
            let flags = &batch.edge_masks[i * batch.num_edges..(i + 1) * batch.num_edges];
            let ms = masked_stats(&logits, flags);
            let ratio = (ms.log_probs[batch.actions[i]] - batch.log_probs[i]).exp();
            let r_clip = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
            if r_clip != ratio {
                clipped_seen += 1;
            }
            expect += -(ratio * norm[i]).min(r_clip * norm[i]);
        }
        expect /= indices.len() as f64;
        assert!(clipped_seen > 0, "test should exercise the clipped branch");
        assert!(
            (stats.policy_loss - expect).abs() < 1e-9,
            "{} vs {expect}",
            stats.policy_loss
        );
    }

    #[test]
    fn ppo_gradient_matches_finite_differences() {
        // Small net, fixed rollout; full loss; central differences.
        let mut cfg = tiny_cfg();
        cfg.hidden = vec![6, 6, 6];
        let net = PolicyNet::new(2, 2, &cfg.hidden, 5).unwrap();
        assert!(net.param_count() <= 1000);
        let mut rng = rng_for(2, &[76]);
        let mut cfg_small = cfg.clone();
        cfg_small.batch_episodes = 3;
        let (batch, _) = collect_batch(&net, &cfg_small, 2, &mut rng).unwrap();
        let take = batch.len().min(8);
        let indices: Vec<usize> = (0..take).collect();
        let (adv, ret) = compute_gae(&batch, cfg.gamma, cfg.gae_lambda);
        let mut norm = vec![0.0; batch.len()];
        normalize_advantages(&adv, &indices, &mut norm);

        let loss_of = |net: &PolicyNet| -> f64 {
            let (s, _) = ppo_loss_and_grad(net, &batch, &indices, &norm, &ret, &cfg).unwrap();
            s.policy_loss + cfg.value_coef * s.value_loss - cfg.entropy_coef * s.entropy
        };
        let (_, grad) = ppo_loss_and_grad(&net, &batch, &indices, &norm, &ret, &cfg).unwrap();

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for idx in 0..net.param_count() as usize {
            let mut plus = net.clone();
            plus.params_mut()[idx] += h;
            let mut minus = net.clone();
            minus.params_mut()[idx] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let denom = fd.abs().max(grad[idx].abs()).max(1e-6);
            max_rel = max_rel.max((fd - grad[idx]).abs() / denom);
        }
        assert!(max_rel <= 1e-3, "max relative error {max_rel}");
    }

    #[test]
    fn training_is_reproducible_and_curriculum_monotone() {
        let mut cfg = tiny_cfg();
        cfg.max_iterations = 4;
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.net.params(), b.net.params());
        assert_eq!(a.net.to_bytes(), b.net.to_bytes());
        assert_eq!(a.log.len(), b.log.len());
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!(x.to_log_line(), y.to_log_line());
        }
        for w in a.log.windows(2) {
            assert!(w[1].difficulty >= w[0].difficulty);
            if w[1].difficulty > w[0].difficulty {
                assert_eq!(w[1].difficulty, w[0].difficulty + 1);
                assert!(w[0].success_rate > cfg.success_threshold);
            }
        }
    }

    #[test]
    fn parallel_collection_matches_single_thread() {
        let mut cfg = tiny_cfg();
        cfg.batch_episodes = 96;
        let net = PolicyNet::new(2, 2, &cfg.hidden, 2).unwrap();
        let mut rng1 = rng_for(4, &[77]);
        let (b1, s1) = collect_batch(&net, &cfg, 2, &mut rng1).unwrap();
        let mut cfg4 = cfg.clone();
        cfg4.threads = 4;
        let mut rng2 = rng_for(4, &[77]);
        let (b2, s2) = collect_batch(&net, &cfg4, 2, &mut rng2).unwrap();
        assert_eq!(b1.actions, b2.actions);
        assert_eq!(b1.rewards, b2.rewards);
        assert_eq!(b1.obs, b2.obs);
        assert_eq!(s1.success_rate, s2.success_rate);
    }

    #[test]
    fn max_iterations_zero_returns_fresh_net() {
        let mut cfg = tiny_cfg();
        cfg.max_iterations = 0;
        let out = train(&cfg).unwrap();
        let fresh = PolicyNet::new(cfg.rows, cfg.cols, &cfg.hidden, cfg.seed).unwrap();
        assert_eq!(out.net.params(), fresh.params());
        assert!(out.log.is_empty());
    }

    #[test]
    fn fine_tune_checks_dims_and_changes_params() {
        let mut cfg = tiny_cfg();
        cfg.max_iterations = 2;
        let base = train(&cfg).unwrap().net;

        let bad = TrainConfig::new(3, 3);
        assert!(fine_tune(&base, &bad).is_err());

        let mut ft_cfg = cfg.clone();
        ft_cfg.seed = 99;
        let tuned = fine_tune(&base, &ft_cfg).unwrap();
        assert_ne!(tuned.net.params(), base.params());
    }

    #[test]
    fn fine_tune_with_p_zero_equals_plain_training_continuation() {
        let lat = build_lattice(2, 2).unwrap();
        let mask = TopologyMask::full(&lat);
        let mut cfg = tiny_cfg();
        cfg.max_iterations = 2;
        let base = train(&cfg).unwrap().net;

        let mut mix = cfg.clone();
        mix.regime = TopologyRegime::ForcedMix {
            masks: vec![mask],
            probability: 0.0,
            size_min: 2,
            size_max: 4,
        };
        let a = fine_tune(&base, &mix).unwrap();

        let mut generic = cfg.clone();
        generic.regime = TopologyRegime::Generic {
            size_min: 2,
            size_max: 4,
        };
        let b = fine_tune(&base, &generic).unwrap();
        // p = 0 is regime degeneracy: same seed, identical trajectory.
        assert_eq!(a.net.params(), b.net.params());
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!(x.to_log_line(), y.to_log_line());
        }
        assert_ne!(a.net.params(), base.params());
    }

    #[test]
    fn log_round_trip() {
        let recs = vec![
            IterRecord {
                iteration: 0,
                difficulty: 1,
                success_rate: 0.5,
                mean_gates: 1.25,
                policy_loss: -0.01,
                value_loss: 3.5,
                entropy: 1.2,
            },
            IterRecord {
                iteration: 1,
                difficulty: 2,
                success_rate: 0.875,
                mean_gates: 2.0,
                policy_loss: 0.02,
                value_loss: 2.25,
                entropy: 1.0,
            },
        ];
        let evals = vec![EvalRecord {
            iteration: 1,
            greedy_rate: 0.75,
            sampling_rate: 0.875,
        }];
        let text = write_log(&recs, &evals);
        let back = parse_log(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].iteration, 0);
        assert_eq!(back[1].difficulty, 2);
        assert!((back[1].success_rate - 0.875).abs() < 1e-9);
    }

    #[test]
    fn raw_config_round_trip_and_errors() {
        let raw = RawTrainConfig::from_toml_str(
            "rows = 2\ncols = 2\nhidden = [8, 8, 8]\nseed = 3\nregime = \"generic\"\nsize_max = 3\n",
        )
        .unwrap();
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.rows, 2);
        assert_eq!(cfg.hidden, vec![8, 8, 8]);
        match cfg.regime {
            TopologyRegime::Generic { size_min, size_max } => {
                assert_eq!((size_min, size_max), (2, 3));
            }
            _ => panic!("wrong regime"),
        }
        assert!(RawTrainConfig::from_toml_str("bogus_key = 1\n").is_err());
        let raw = RawTrainConfig::from_toml_str("regime = \"fixed\"\n").unwrap();
        assert!(raw.resolve().is_err());
    }
}

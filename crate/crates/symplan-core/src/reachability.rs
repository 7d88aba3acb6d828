//! Two-tower reachability estimator.
//!
//! `R(a, b) = phi(a) . psi(b)` where each tower is a one-hidden-layer MLP
//! with rectified-linear activation. Training minimizes a binary
//! noise-contrastive objective over hindsight-sampled positive pairs and
//! uniformly sampled negatives, with plain SGD and hand-rolled reverse-mode
//! gradients so every derivative stays finite-difference checkable. The
//! feasibility threshold `delta` is the minimum score over the consecutive
//! key-frame pairs observed in the data.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PlayDataset;
use crate::scalar::Real;
use crate::segmentation::KeyFrameSet;

/// Scores are clamped to this magnitude before the sigmoid.
pub const SCORE_CLAMP: f64 = 30.0;

/// One tower: input -> hidden (ReLU) -> embedding, all row-major.
#[derive(Debug, Clone)]
pub struct TowerParams<T> {
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

impl<T: Real> TowerParams<T> {
    fn init(input: usize, hidden: usize, embed: usize, rng: &mut ChaCha8Rng) -> Self {
        let uniform = |fan_in: usize, len: usize, rng: &mut ChaCha8Rng| -> Vec<T> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..len)
                .map(|_| T::of(rng.gen_range(-bound..bound)))
                .collect()
        };
        Self {
            w1: uniform(input, hidden * input, rng),
            b1: vec![T::zero(); hidden],
            w2: uniform(hidden, embed * hidden, rng),
            b2: vec![T::zero(); embed],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w1: vec![T::zero(); self.w1.len()],
            b1: vec![T::zero(); self.b1.len()],
            w2: vec![T::zero(); self.w2.len()],
            b2: vec![T::zero(); self.b2.len()],
        }
    }
}

/// Paired encoders whose inner product is the reachability score.
#[derive(Debug, Clone)]
pub struct TwoTowerModel<T> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub phi: TowerParams<T>,
    pub psi: TowerParams<T>,
}

/// Which tower a parameter tensor belongs to; used by gradient bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tower {
    Phi,
    Psi,
}

impl<T: Real> TwoTowerModel<T> {
    pub fn init(input_dim: usize, hidden_dim: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            input_dim,
            hidden_dim,
            embed_dim,
            phi: TowerParams::init(input_dim, hidden_dim, embed_dim, &mut rng),
            psi: TowerParams::init(input_dim, hidden_dim, embed_dim, &mut rng),
        }
    }

    fn check_width(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::WidthMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    #[allow(clippy::needless_range_loop)]
    fn forward(&self, tower: Tower, x: &[T]) -> (Vec<T>, Vec<T>) {
        let p = match tower {
            Tower::Phi => &self.phi,
            Tower::Psi => &self.psi,
        };
        let mut hidden = vec![T::zero(); self.hidden_dim];
        for h in 0..self.hidden_dim {
            let mut acc = p.b1[h];
            let row = &p.w1[h * self.input_dim..(h + 1) * self.input_dim];
            for (w, &xi) in row.iter().zip(x) {
                acc = acc + *w * xi;
            }
            hidden[h] = acc.max(T::zero());
        }
        let mut out = vec![T::zero(); self.embed_dim];
        for e in 0..self.embed_dim {
            let mut acc = p.b2[e];
            let row = &p.w2[e * self.hidden_dim..(e + 1) * self.hidden_dim];
            for (w, &h) in row.iter().zip(&hidden) {
                acc = acc + *w * h;
            }
            out[e] = acc;
        }
        (hidden, out)
    }

    pub fn phi_embed(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_width(x)?;
        Ok(self.forward(Tower::Phi, x).1)
    }

    pub fn psi_embed(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_width(x)?;
        Ok(self.forward(Tower::Psi, x).1)
    }

    /// Reachability score `phi(a) . psi(b)`; deterministic and asymmetric.
    pub fn score(&self, a: &[T], b: &[T]) -> Result<T> {
        let pa = self.phi_embed(a)?;
        let pb = self.psi_embed(b)?;
        Ok(pa.iter().zip(&pb).map(|(&x, &y)| x * y).sum())
    }

    /// All parameter tensors, for optimizer updates and gradient checks.
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        vec![
            &mut self.phi.w1,
            &mut self.phi.b1,
            &mut self.phi.w2,
            &mut self.phi.b2,
            &mut self.psi.w1,
            &mut self.psi.b1,
            &mut self.psi.w2,
            &mut self.psi.b2,
        ]
    }

    pub fn num_params(&self) -> usize {
        [&self.phi, &self.psi]
            .iter()
            .map(|p| p.w1.len() + p.b1.len() + p.w2.len() + p.b2.len())
            .sum()
    }
}

/// Gradients mirroring the model's parameter layout.
#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub phi: TowerParams<T>,
    pub psi: TowerParams<T>,
}

impl<T: Real> ModelGrads<T> {
    fn zeros_like(model: &TwoTowerModel<T>) -> Self {
        Self {
            phi: model.phi.zeros_like(),
            psi: model.psi.zeros_like(),
        }
    }

    pub fn tensors(&self) -> Vec<&Vec<T>> {
        vec![
            &self.phi.w1,
            &self.phi.b1,
            &self.phi.w2,
            &self.phi.b2,
            &self.psi.w1,
            &self.psi.b1,
            &self.psi.w2,
            &self.psi.b2,
        ]
    }
}

/// Anchor/positive/negative triples, all of width `K*D`.
#[derive(Debug, Clone)]
pub struct PairBatch<T> {
    pub anchors: Vec<Vec<T>>,
    pub positives: Vec<Vec<T>>,
    pub negatives: Vec<Vec<T>>,
}

impl<T> PairBatch<T> {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Geometric future offset with success probability `1 - gamma`, support
/// starting at 1.
fn geometric_offset(rng: &mut impl Rng, gamma: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    let u: f64 = rng.gen();
    if u <= 0.0 {
        return usize::MAX / 2;
    }
    1 + (u.ln() / gamma.ln()).floor() as usize
}

/// Hindsight sampling: anchors uniform over valid (trajectory, frame)
/// positions, positives at a geometric future offset truncated at the
/// trajectory end, negatives uniform over the whole dataset.
pub fn sample_pair_batch<T: Real>(
    dataset: &PlayDataset<T>,
    gamma: f64,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<PairBatch<T>> {
    let mut anchor_positions: Vec<(usize, usize)> = Vec::new();
    let mut all_positions: Vec<(usize, usize)> = Vec::new();
    for (ti, traj) in dataset.trajectories().iter().enumerate() {
        for t in 0..traj.num_frames() {
            all_positions.push((ti, t));
            if t + 1 < traj.num_frames() {
                anchor_positions.push((ti, t));
            }
        }
    }
    if anchor_positions.is_empty() {
        return Err(Error::InvalidParameter {
            name: "dataset",
            reason: "no trajectory has a future frame to sample".into(),
        });
    }
    let mut anchors = Vec::with_capacity(batch);
    let mut positives = Vec::with_capacity(batch);
    let mut negatives = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (ti, t) = anchor_positions[rng.gen_range(0..anchor_positions.len())];
        let traj = &dataset.trajectories()[ti];
        let offset = geometric_offset(rng, gamma);
        let future = (t + offset).min(traj.num_frames() - 1);
        anchors.push(traj.frame_feature(t)?.to_vec());
        positives.push(traj.frame_feature(future)?.to_vec());
        let (nj, s) = all_positions[rng.gen_range(0..all_positions.len())];
        negatives.push(dataset.trajectories()[nj].frame_feature(s)?.to_vec());
    }
    Ok(PairBatch {
        anchors,
        positives,
        negatives,
    })
}

fn clamp_score<T: Real>(s: T) -> (T, bool) {
    let cap = T::of(SCORE_CLAMP);
    if s > cap {
        (cap, true)
    } else if s < -cap {
        (-cap, true)
    } else {
        (s, false)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-(x.abs())).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

struct TowerTape<T> {
    input: Vec<T>,
    hidden: Vec<T>,
}

#[allow(clippy::needless_range_loop)]
fn tower_backward<T: Real>(
    model: &TwoTowerModel<T>,
    tower: Tower,
    tape: &TowerTape<T>,
    d_out: &[T],
    grads: &mut TowerParams<T>,
) {
    let p = match tower {
        Tower::Phi => &model.phi,
        Tower::Psi => &model.psi,
    };
    let (hidden_dim, input_dim) = (model.hidden_dim, model.input_dim);
    let mut d_hidden = vec![T::zero(); hidden_dim];
    for e in 0..model.embed_dim {
        grads.b2[e] = grads.b2[e] + d_out[e];
        let row = e * hidden_dim;
        for h in 0..hidden_dim {
            grads.w2[row + h] = grads.w2[row + h] + d_out[e] * tape.hidden[h];
            d_hidden[h] = d_hidden[h] + p.w2[row + h] * d_out[e];
        }
    }
    for h in 0..hidden_dim {
        if tape.hidden[h] > T::zero() {
            grads.b1[h] = grads.b1[h] + d_hidden[h];
            let row = h * input_dim;
            for i in 0..input_dim {
                grads.w1[row + i] = grads.w1[row + i] + d_hidden[h] * tape.input[i];
            }
        }
    }
}

/// Binary NCE loss over a batch, with gradients for every parameter:
/// `-(1/B) sum_i [log sig(R(a_i, p_i)) + log(1 - sig(R(a_i, n_i)))]`.
pub fn nce_binary_loss<T: Real>(
    model: &TwoTowerModel<T>,
    batch: &PairBatch<T>,
) -> Result<(T, ModelGrads<T>)> {
    let b = batch.len();
    if b == 0 || batch.positives.len() != b || batch.negatives.len() != b {
        return Err(Error::InvalidParameter {
            name: "batch",
            reason: "anchors, positives, and negatives must share a positive length".into(),
        });
    }
    let mut grads = ModelGrads::zeros_like(model);
    let inv_b = T::one() / T::of(b as f64);
    let mut loss = T::zero();
    for i in 0..b {
        model.check_width(&batch.anchors[i])?;
        model.check_width(&batch.positives[i])?;
        model.check_width(&batch.negatives[i])?;
        let (ah, ao) = model.forward(Tower::Phi, &batch.anchors[i]);
        let (ph, po) = model.forward(Tower::Psi, &batch.positives[i]);
        let (nh, no) = model.forward(Tower::Psi, &batch.negatives[i]);
        let raw_pos: T = ao.iter().zip(&po).map(|(&x, &y)| x * y).sum();
        let raw_neg: T = ao.iter().zip(&no).map(|(&x, &y)| x * y).sum();
        let (s_pos, pos_clamped) = clamp_score(raw_pos);
        let (s_neg, neg_clamped) = clamp_score(raw_neg);
        // -log sig(s) = softplus(-s); -log(1 - sig(s)) = softplus(s)
        loss = loss + inv_b * (softplus(-s_pos) + softplus(s_neg));

        // d/ds of the two terms; a clamped score contributes no gradient
        let d_pos = if pos_clamped {
            T::zero()
        } else {
            inv_b * (sigmoid(s_pos) - T::one())
        };
        let d_neg = if neg_clamped {
            T::zero()
        } else {
            inv_b * sigmoid(s_neg)
        };

        let d_anchor_out: Vec<T> = po
            .iter()
            .zip(&no)
            .map(|(&p, &n)| d_pos * p + d_neg * n)
            .collect();
        let d_pos_out: Vec<T> = ao.iter().map(|&a| d_pos * a).collect();
        let d_neg_out: Vec<T> = ao.iter().map(|&a| d_neg * a).collect();

        let anchor_tape = TowerTape {
            input: batch.anchors[i].clone(),
            hidden: ah,
        };
        let pos_tape = TowerTape {
            input: batch.positives[i].clone(),
            hidden: ph,
        };
        let neg_tape = TowerTape {
            input: batch.negatives[i].clone(),
            hidden: nh,
        };
        tower_backward(
            model,
            Tower::Phi,
            &anchor_tape,
            &d_anchor_out,
            &mut grads.phi,
        );
        tower_backward(model, Tower::Psi, &pos_tape, &d_pos_out, &mut grads.psi);
        tower_backward(model, Tower::Psi, &neg_tape, &d_neg_out, &mut grads.psi);
    }
    Ok((loss, grads))
}

/// Training configuration for [`train_reachability`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachabilityConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
    /// Percentile of consecutive key-frame pair scores used as the
    /// threshold; 0 means the minimum.
    pub delta_percentile: f64,
    pub seed: u64,
}

impl Default for ReachabilityConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            batch_size: 128,
            hidden_dim: 64,
            embed_dim: 16,
            learning_rate: 1e-2,
            epochs: 1500,
            grad_clip: 10.0,
            delta_percentile: 0.0,
            seed: 0,
        }
    }
}

/// A trained estimator plus its feasibility threshold.
#[derive(Debug, Clone)]
pub struct ReachabilityArtifact<T> {
    pub model: TwoTowerModel<T>,
    pub delta: T,
    pub gamma: f64,
    pub training_log: Vec<T>,
}

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_PATIENCE: usize = 50;

/// SGD on the binary NCE loss, one sampled batch per epoch. Fails with
/// `DivergedTraining` if the loss stays above ten times the initial loss for
/// fifty consecutive steps.
pub fn train_reachability<T: Real>(
    dataset: &PlayDataset<T>,
    keyframes: &[KeyFrameSet],
    config: &ReachabilityConfig,
) -> Result<ReachabilityArtifact<T>> {
    let input_dim = dataset.num_objects() * dataset.dim();
    let mut model =
        TwoTowerModel::init(input_dim, config.hidden_dim, config.embed_dim, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut training_log = Vec::with_capacity(config.epochs);
    let mut initial_loss: Option<f64> = None;
    let mut over_budget = 0usize;
    let lr = T::of(config.learning_rate);
    for step in 0..config.epochs {
        let batch = sample_pair_batch(dataset, config.gamma, config.batch_size, &mut rng)?;
        let (loss, grads) = nce_binary_loss(&model, &batch)?;
        let loss_f = loss.as_f64();
        let init = *initial_loss.get_or_insert(loss_f);
        if init > 0.0 && loss_f > DIVERGENCE_FACTOR * init {
            over_budget += 1;
            if over_budget >= DIVERGENCE_PATIENCE {
                return Err(Error::DivergedTraining {
                    step,
                    loss: loss_f,
                    initial: init,
                });
            }
        } else {
            over_budget = 0;
        }
        let norm_sq: T = grads
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|&g| g * g)
            .sum();
        let norm = norm_sq.sqrt();
        let clip = T::of(config.grad_clip);
        let scale = if norm > clip { clip / norm } else { T::one() };
        for (param, grad) in model.tensors_mut().into_iter().zip(grads.tensors()) {
            for (p, &g) in param.iter_mut().zip(grad) {
                *p = *p - lr * scale * g;
            }
        }
        training_log.push(loss);
    }
    let delta = compute_threshold(&model, dataset, keyframes, config.delta_percentile)?;
    Ok(ReachabilityArtifact {
        model,
        delta,
        gamma: config.gamma,
        training_log,
    })
}

/// Threshold over all consecutive key-frame pair scores: the minimum when
/// `percentile` is 0, otherwise the `ceil(q/100 * n)`-th smallest.
pub fn compute_threshold<T: Real>(
    model: &TwoTowerModel<T>,
    dataset: &PlayDataset<T>,
    keyframes: &[KeyFrameSet],
    percentile: f64,
) -> Result<T> {
    let mut scores: Vec<T> = Vec::new();
    for kf in keyframes {
        let traj = dataset.trajectory(&kf.trajectory_id)?;
        for (start, end) in kf.pairs() {
            scores.push(model.score(traj.frame_feature(start)?, traj.frame_feature(end)?)?);
        }
    }
    if scores.is_empty() {
        return Err(Error::NoKeyFramePairs);
    }
    scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = scores.len();
    let rank = ((percentile / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    Ok(scores[rank - 1])
}

#[derive(Debug, Serialize, Deserialize)]
struct ReachabilityHeader {
    kind: String,
    input_dim: usize,
    hidden_dim: usize,
    embed_dim: usize,
    gamma: f64,
    delta: f64,
    param_count: usize,
}

fn tower_param_iter<T: Real>(p: &TowerParams<T>) -> impl Iterator<Item = T> + '_ {
    p.w1.iter().chain(&p.b1).chain(&p.w2).chain(&p.b2).copied()
}

/// Write a model file: one JSON header line, then the parameters as raw
/// little-endian 32-bit floats (phi tensors first, then psi).
pub fn save_reachability<T: Real>(artifact: &ReachabilityArtifact<T>, path: &Path) -> Result<()> {
    let m = &artifact.model;
    let params: Vec<T> = tower_param_iter(&m.phi)
        .chain(tower_param_iter(&m.psi))
        .collect();
    let header = ReachabilityHeader {
        kind: "reachability".into(),
        input_dim: m.input_dim,
        hidden_dim: m.hidden_dim,
        embed_dim: m.embed_dim,
        gamma: artifact.gamma,
        delta: artifact.delta.as_f64(),
        param_count: params.len(),
    };
    let mut file = fs::File::create(path)?;
    serde_json::to_writer(&mut file, &header)?;
    file.write_all(b"\n")?;
    for v in params {
        file.write_all(&v.as_f32().to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_header_and_blob(path: &Path, expected_kind: &str) -> Result<(String, Vec<f32>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::BadModelFile(format!("{}: no header line", path.display())))?;
    let header = String::from_utf8(bytes[..split].to_vec())
        .map_err(|_| Error::BadModelFile(format!("{}: header is not UTF-8", path.display())))?;
    let blob = &bytes[split + 1..];
    if blob.len() % 4 != 0 {
        return Err(Error::BadModelFile(format!(
            "{}: parameter blob length {} is not a multiple of 4",
            path.display(),
            blob.len()
        )));
    }
    if !header.contains(expected_kind) {
        return Err(Error::BadModelFile(format!(
            "{}: expected a {expected_kind} model",
            path.display()
        )));
    }
    let values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, values))
}

pub fn load_reachability<T: Real>(path: &Path) -> Result<ReachabilityArtifact<T>> {
    let (header, values) = read_header_and_blob(path, "reachability")?;
    let header: ReachabilityHeader = serde_json::from_str(&header)?;
    if values.len() != header.param_count {
        return Err(Error::BadModelFile(format!(
            "{}: expected {} parameters, found {}",
            path.display(),
            header.param_count,
            values.len()
        )));
    }
    let (i, h, e) = (header.input_dim, header.hidden_dim, header.embed_dim);
    let tower_len = h * i + h + e * h + e;
    if values.len() != 2 * tower_len {
        return Err(Error::BadModelFile(format!(
            "{}: parameter count does not match dims",
            path.display()
        )));
    }
    let mut it = values.into_iter().map(|v| T::of(v as f64));
    let mut take = |len: usize| -> Vec<T> { it.by_ref().take(len).collect() };
    let mut tower = || TowerParams {
        w1: take(h * i),
        b1: take(h),
        w2: take(e * h),
        b2: take(e),
    };
    let phi = tower();
    let psi = tower();
    Ok(ReachabilityArtifact {
        model: TwoTowerModel {
            input_dim: i,
            hidden_dim: h,
            embed_dim: e,
            phi,
            psi,
        },
        delta: T::of(header.delta),
        gamma: header.gamma,
        training_log: Vec::new(),
    })
}

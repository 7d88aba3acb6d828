//! Next-symbolic-state predictor.
//!
//! A linear-softmax head over frame features: the inputs are already
//! embeddings, so multinomial logistic regression trained by full-batch
//! gradient descent on cross-entropy is enough, and every gradient is
//! finite-difference checkable. The output vocabulary is the graph node set.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PlayDataset;
use crate::reachability::read_header_and_blob;
use crate::scalar::Real;
use crate::segmentation::KeyFrameSet;
use crate::symbols::{SymbolicState, SymbolicTransition};

/// Linear softmax classifier over the symbolic-state vocabulary.
#[derive(Debug, Clone)]
pub struct SoftmaxPredictor<T> {
    pub input_dim: usize,
    /// Row-major `num_classes x input_dim`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    /// Ordered states defining the output indices.
    pub node_vocab: Vec<SymbolicState>,
}

impl<T: Real> SoftmaxPredictor<T> {
    pub fn num_classes(&self) -> usize {
        self.node_vocab.len()
    }

    fn logits(&self, feature: &[T]) -> Result<Vec<T>> {
        if feature.len() != self.input_dim {
            return Err(Error::WidthMismatch {
                expected: self.input_dim,
                actual: feature.len(),
            });
        }
        let c = self.num_classes();
        let mut out = vec![T::zero(); c];
        for (cls, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[cls * self.input_dim..(cls + 1) * self.input_dim];
            let mut acc = self.bias[cls];
            for (w, &x) in row.iter().zip(feature) {
                acc = acc + *w * x;
            }
            *slot = acc;
        }
        Ok(out)
    }

    /// Softmax distribution over the vocabulary.
    pub fn probabilities(&self, feature: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.logits(feature)?))
    }
}

fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Labelled examples tied to a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    pub vocab: Vec<SymbolicState>,
    /// (frame feature, vocabulary index of the next symbolic state).
    pub examples: Vec<(Vec<T>, usize)>,
}

/// Build the supervised set from extracted transitions.
///
/// Every frame in `(start, end]` of a transition-bearing sub-skill is
/// labelled with that transition's after-state (so the end key frame targets
/// the state it sits at). A key frame not covered this way targets the next
/// transition's after-state when one follows it; otherwise it is dropped.
pub fn build_training_set<T: Real>(
    dataset: &PlayDataset<T>,
    keyframes: &[KeyFrameSet],
    transitions: &[SymbolicTransition],
    vocab: &[SymbolicState],
) -> Result<TrainingSet<T>> {
    let index_of = |state: &SymbolicState| -> Result<usize> {
        vocab
            .iter()
            .position(|v| v == state)
            .ok_or_else(|| Error::UnknownState(state.to_string()))
    };
    let mut examples = Vec::new();
    for kf in keyframes {
        let traj = dataset.trajectory(&kf.trajectory_id)?;
        let mut own: Vec<&SymbolicTransition> = transitions
            .iter()
            .filter(|t| t.provenance.0.trajectory_id == kf.trajectory_id)
            .collect();
        own.sort_by_key(|t| t.provenance.0.frame_index);
        let covered: Vec<usize> = own.iter().map(|t| t.provenance.1.frame_index).collect();
        for t in &own {
            let target = index_of(&t.after)?;
            for frame in t.provenance.0.frame_index + 1..=t.provenance.1.frame_index {
                examples.push((traj.frame_feature(frame)?.to_vec(), target));
            }
        }
        for &frame in &kf.indices {
            if covered.contains(&frame) {
                continue;
            }
            if let Some(next) = own.iter().find(|t| t.provenance.0.frame_index >= frame) {
                examples.push((traj.frame_feature(frame)?.to_vec(), index_of(&next.after)?));
            }
        }
    }
    Ok(TrainingSet {
        vocab: vocab.to_vec(),
        examples,
    })
}

/// Training configuration for [`train_predictor`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 300,
            seed: 0,
        }
    }
}

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_PATIENCE: usize = 50;

/// Mean cross-entropy and its gradient over the full example set.
pub fn cross_entropy_and_grads<T: Real>(
    predictor: &SoftmaxPredictor<T>,
    examples: &[(Vec<T>, usize)],
) -> Result<(T, Vec<T>, Vec<T>)> {
    let c = predictor.num_classes();
    let d = predictor.input_dim;
    let mut grad_w = vec![T::zero(); c * d];
    let mut grad_b = vec![T::zero(); c];
    let mut loss = T::zero();
    let inv_n = T::one() / T::of(examples.len() as f64);
    for (x, target) in examples {
        let probs = predictor.probabilities(x)?;
        let p = probs[*target].max(T::of(1e-300));
        loss = loss - inv_n * p.ln();
        for cls in 0..c {
            let delta = if cls == *target {
                probs[cls] - T::one()
            } else {
                probs[cls]
            } * inv_n;
            grad_b[cls] = grad_b[cls] + delta;
            let row = cls * d;
            for (i, &xi) in x.iter().enumerate() {
                grad_w[row + i] = grad_w[row + i] + delta * xi;
            }
        }
    }
    Ok((loss, grad_w, grad_b))
}

/// Full-batch gradient descent from a zero initialization. The seed is kept
/// for interface symmetry; the fit itself is deterministic.
pub fn train_predictor<T: Real>(
    training: &TrainingSet<T>,
    config: &PredictorConfig,
) -> Result<SoftmaxPredictor<T>> {
    if training.examples.is_empty() || training.vocab.is_empty() {
        return Err(Error::InvalidParameter {
            name: "examples",
            reason: "need at least one example and a nonempty vocabulary".into(),
        });
    }
    let input_dim = training.examples[0].0.len();
    let c = training.vocab.len();
    if training.examples.iter().any(|(_, t)| *t >= c) {
        return Err(Error::InvalidParameter {
            name: "examples",
            reason: "target index outside the vocabulary".into(),
        });
    }
    let mut predictor = SoftmaxPredictor {
        input_dim,
        weights: vec![T::zero(); c * input_dim],
        bias: vec![T::zero(); c],
        node_vocab: training.vocab.clone(),
    };
    let lr = T::of(config.learning_rate);
    let mut initial: Option<f64> = None;
    let mut over_budget = 0usize;
    for step in 0..config.epochs {
        let (loss, grad_w, grad_b) = cross_entropy_and_grads(&predictor, &training.examples)?;
        let loss_f = loss.as_f64();
        let init = *initial.get_or_insert(loss_f);
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
        for (w, g) in predictor.weights.iter_mut().zip(&grad_w) {
            *w = *w - lr * *g;
        }
        for (b, g) in predictor.bias.iter_mut().zip(&grad_b) {
            *b = *b - lr * *g;
        }
    }
    Ok(predictor)
}

/// Top-`m` candidate states by probability, descending, ties to the lower
/// vocabulary index. Asking for more than the vocabulary returns all of it.
pub fn predict_next<T: Real>(
    predictor: &SoftmaxPredictor<T>,
    feature: &[T],
    m: usize,
) -> Result<Vec<(SymbolicState, T)>> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "candidate count must be at least 1".into(),
        });
    }
    let probs = predictor.probabilities(feature)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .expect("finite probabilities")
            .then(a.cmp(&b))
    });
    Ok(order
        .into_iter()
        .take(m.min(probs.len()))
        .map(|i| (predictor.node_vocab[i].clone(), probs[i]))
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictorHeader {
    kind: String,
    input_dim: usize,
    num_classes: usize,
    node_vocab: Vec<Vec<usize>>,
    param_count: usize,
}

/// Serialization mirrors the reachability format: a JSON header line, then
/// weights and bias as raw little-endian 32-bit floats.
pub fn save_predictor<T: Real>(predictor: &SoftmaxPredictor<T>, path: &Path) -> Result<()> {
    let header = PredictorHeader {
        kind: "predictor".into(),
        input_dim: predictor.input_dim,
        num_classes: predictor.num_classes(),
        node_vocab: predictor.node_vocab.iter().map(|s| s.0.clone()).collect(),
        param_count: predictor.weights.len() + predictor.bias.len(),
    };
    let mut file = fs::File::create(path)?;
    serde_json::to_writer(&mut file, &header)?;
    file.write_all(b"\n")?;
    for v in predictor.weights.iter().chain(&predictor.bias) {
        file.write_all(&v.as_f32().to_le_bytes())?;
    }
    Ok(())
}

pub fn load_predictor<T: Real>(path: &Path) -> Result<SoftmaxPredictor<T>> {
    let (header, values) = read_header_and_blob(path, "predictor")?;
    let header: PredictorHeader = serde_json::from_str(&header)?;
    let expected = header.num_classes * header.input_dim + header.num_classes;
    if values.len() != header.param_count || values.len() != expected {
        return Err(Error::BadModelFile(format!(
            "{}: expected {expected} parameters, found {}",
            path.display(),
            values.len()
        )));
    }
    let split = header.num_classes * header.input_dim;
    Ok(SoftmaxPredictor {
        input_dim: header.input_dim,
        weights: values[..split].iter().map(|&v| T::of(v as f64)).collect(),
        bias: values[split..].iter().map(|&v| T::of(v as f64)).collect(),
        node_vocab: header.node_vocab.into_iter().map(SymbolicState).collect(),
    })
}

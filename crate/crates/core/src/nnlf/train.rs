use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::ModelWeights;
use super::net::{backward, forward_trace, residual_loss};
use super::tensor::TensorStack;
use crate::error::{Error, Result};

/// One training example: network inputs and the pristine planes the
/// filtered reconstruction should match, normalized like the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPair {
    pub inputs: TensorStack,
    pub target: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Patches per step.
    pub batch: usize,
    /// Side of the square patches cut from the pairs; whole pairs are used
    /// when they are smaller.
    pub patch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            step_size: 0.01,
            batch: 4,
            patch: 32,
            seed: 0,
        }
    }
}

pub const MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelWeights,
    /// Mean batch loss before each step.
    pub losses: Vec<f64>,
}

fn sample(pair: &TrainPair, patch: usize, rng: &mut impl Rng) -> (TensorStack<f64>, Vec<f64>) {
    let (h, w) = (pair.inputs.height(), pair.inputs.width());
    let (ph, pw) = (patch.min(h), patch.min(w));
    let y = rng.gen_range(0..=h - ph);
    let x = rng.gen_range(0..=w - pw);
    let inputs = pair.inputs.crop(y, x, ph, pw).cast::<f64>();
    let planes = pair.target.len() / (h * w);
    let mut target = Vec::with_capacity(planes * ph * pw);
    for c in 0..planes {
        for r in y..y + ph {
            let row = (c * h + r) * w;
            target.extend(pair.target[row + x..row + x + pw].iter().map(|&v| v as f64));
        }
    }
    (inputs, target)
}

/// Gradient descent with momentum on the residual MSE. Deterministic for a
/// given seed. Gradients are accumulated in f64.
pub fn train(init: &ModelWeights, pairs: &[TrainPair], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if pairs.is_empty() {
        return Err(Error::invalid("training needs at least one pair"));
    }
    init.validate()?;
    for p in pairs {
        let want = init.kind.output_channels() * p.inputs.plane_len();
        if p.inputs.channels() != init.kind.input_channels() || p.target.len() != want {
            return Err(Error::invalid("training pair does not match the model"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model: ModelWeights<f64> = init.cast();
    let mut velocity = vec![0.0f64; model.param_count()];
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut grad_sum = vec![0.0f64; velocity.len()];
        let mut loss_sum = 0.0;
        for _ in 0..cfg.batch.max(1) {
            let pair = &pairs[rng.gen_range(0..pairs.len())];
            let (inputs, target) = sample(pair, cfg.patch, &mut rng);
            let trace = forward_trace(&model, &inputs)?;
            let (loss, g) = residual_loss(&inputs, trace.output(), &target);
            loss_sum += loss;
            for (s, v) in grad_sum.iter_mut().zip(backward(&model, &trace, &g).params()) {
                *s += v;
            }
        }
        let n = cfg.batch.max(1) as f64;
        let loss = loss_sum / n;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step, loss });
        }
        losses.push(loss);
        for ((p, v), g) in model.params_mut().into_iter().zip(velocity.iter_mut()).zip(&grad_sum) {
            *v = MOMENTUM * *v - cfg.step_size * g / n;
            *p += *v;
        }
    }
    let model: ModelWeights = model.cast();
    if model.params().iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged {
            step: cfg.steps,
            loss: f64::INFINITY,
        });
    }
    Ok(TrainOutcome { model, losses })
}

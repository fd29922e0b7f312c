//! Mini-batch training loop and loss log.

use rayon::prelude::*;

use super::adam::{adam_step, AdamState, DEFAULT_LR};
use super::model::{ModelConfig, ModelInput, SegModel};
use super::ops::softmax_cross_entropy;
use crate::dataio::{Arch, DEFAULT_POINTS};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, streams, SplitMix64};

/// One preprocessed training cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: ModelInput<f32>,
    /// Class id per point.
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Points sampled per scan.
    pub points: usize,
    pub seed: u64,
    /// Report each epoch's loss on standard error.
    pub progress: bool,
}

impl TrainConfig {
    pub fn for_arch(arch: Arch) -> Self {
        let (epochs, batch_size) = match arch {
            Arch::Dgcnn => (50, 4),
            Arch::PointNet => (100, 16),
        };
        Self {
            epochs,
            batch_size,
            lr: DEFAULT_LR,
            points: DEFAULT_POINTS,
            seed: 0,
            progress: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.points == 0 {
            return Err(Error::invalid("points per cloud must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SegModel<f32>,
    /// Mean per-cloud loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Loss of one cloud and the gradients of all parameters.
fn cloud_gradients(model: &SegModel<f32>, sample: &TrainSample) -> Result<(f32, super::model::ParamSet<f32>)> {
    let (logits, tape) = model.forward_tape(&sample.input)?;
    let (loss, d_logits) = softmax_cross_entropy(&logits, &sample.labels)?;
    let (grads, _) = model.backward(&tape, &d_logits)?;
    Ok((loss, grads))
}

/// Trains a freshly initialised model on `samples`.
///
/// Weights come from the seed's init stream and batch order from its shuffle
/// stream. Clouds inside a batch are processed in parallel but their
/// gradients are summed in batch order, so results do not depend on the
/// thread count.
pub fn train(model_config: ModelConfig, config: &TrainConfig, samples: &[TrainSample]) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = SegModel::<f32>::init(model_config, derive_seed(config.seed, streams::INIT))?;
    if samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    for s in samples {
        if s.labels.len() != s.input.n() {
            return Err(Error::shape("labels do not match the point count"));
        }
    }
    let mut adam = AdamState::new(&model.params, config.lr);
    let mut rng = SplitMix64::new(derive_seed(config.seed, streams::SHUFFLE));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.below(i + 1));
        }
        let mut total = 0.0f64;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<(f32, _)>> = batch
                .par_iter()
                .map(|&i| cloud_gradients(&model, &samples[i]))
                .collect();
            let mut sum = model.params.zeros_like();
            let mut batch_loss = 0.0f64;
            for r in results {
                let (loss, grads) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_no,
                    });
                }
                batch_loss += loss as f64;
                sum.add_assign(&grads);
            }
            sum.scale(1.0 / batch.len() as f32);
            adam_step(&mut model.params, &sum, &mut adam)?;
            total += batch_loss;
        }
        let mean = total / samples.len() as f64;
        if config.progress {
            eprintln!("epoch {:>3}  loss {mean:.6}", epoch + 1);
        }
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Loss log: `#`-prefixed `key=value` header lines, then one
/// `epoch<TAB>loss` line per epoch (1-based).
pub fn render_loss_log(header: &[(String, String)], losses: &[f64]) -> String {
    let mut out = String::new();
    for (k, v) in header {
        out.push_str(&format!("# {k}={v}\n"));
    }
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{}\t{l:.6}\n", i + 1));
    }
    out
}

/// Header fields recorded in every loss log.
pub fn loss_log_header(model: &ModelConfig, config: &TrainConfig) -> Vec<(String, String)> {
    [
        ("arch", model.arch.name().to_string()),
        ("epochs", config.epochs.to_string()),
        ("batch", config.batch_size.to_string()),
        ("lr", config.lr.to_string()),
        ("k", model.k.to_string()),
        ("points", config.points.to_string()),
        ("dynamic_graph", model.dynamic_graph.to_string()),
        ("seed", config.seed.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

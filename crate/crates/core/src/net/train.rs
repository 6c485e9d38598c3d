//! Classification training of the descriptor network.
//!
//! Description is cast as classification: every segment is its own class.
//! Minimizes softmax cross-entropy with Adam, applies a fresh random
//! column rotation to each sample every epoch, and returns the parameters
//! of the epoch with the highest validation accuracy.

use super::input::{augment_rotate, VisualTensor};
use super::model::{forward_trace, loss_and_grads, NetConfig, NetError, NetParams};
use super::scalar::Scalar;
use super::tensor::Feat3;
use crate::log_debug;
use crate::rng::{derive_seed, Pcg32};
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Worker threads for per-sample gradient computation; results are
    /// reduced in sample order so any thread count gives identical output.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 64,
            seed: 1,
            validation_fraction: 0.25,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainSample {
    pub voxels: Feat3<f32>,
    pub visual: VisualTensor,
    pub class: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: NetParams<f32>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Deterministic stratified split: per class, every `1/fraction`-th sample
/// goes to validation, always keeping at least one training sample.
pub fn validation_split(classes: &[usize], fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        by_class.entry(*c).or_default().push(i);
    }
    let step = (1.0 / fraction.clamp(0.05, 0.5)).round() as usize;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (_, members) in by_class {
        for (k, idx) in members.iter().enumerate() {
            if members.len() > 1 && k % step == step - 1 {
                val.push(*idx);
            } else {
                train.push(*idx);
            }
        }
    }
    (train, val)
}

struct Adam<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: usize,
}

impl<T: Scalar> Adam<T> {
    fn new(params: &NetParams<T>) -> Self {
        Self {
            m: params.tensors().iter().map(|(_, t)| vec![T::ZERO; t.len()]).collect(),
            v: params.tensors().iter().map(|(_, t)| vec![T::ZERO; t.len()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut NetParams<T>, grads: &NetParams<T>, lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let b1 = T::from_f64(BETA1);
        let b2 = T::from_f64(BETA2);
        let one_m_b1 = T::from_f64(1.0 - BETA1);
        let one_m_b2 = T::from_f64(1.0 - BETA2);
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let alpha = T::from_f64(lr / bc1);
        let inv_sqrt_bc2 = T::from_f64(1.0 / bc2.sqrt());
        let eps = T::from_f64(EPS);
        let gts = grads.tensors();
        for (ti, (_, tensor)) in params.tensors_mut().into_iter().enumerate() {
            let g = gts[ti].1;
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            for i in 0..tensor.len() {
                m[i] = b1 * m[i] + one_m_b1 * g[i];
                v[i] = b2 * v[i] + one_m_b2 * g[i] * g[i];
                tensor[i] -= alpha * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
            }
        }
    }
}

fn add_grads<T: Scalar>(acc: &mut NetParams<T>, other: &NetParams<T>, scale: f32) {
    let s = T::from_f64(f64::from(scale));
    let src = other.tensors();
    for (ti, (_, t)) in acc.tensors_mut().into_iter().enumerate() {
        for (a, b) in t.iter_mut().zip(src[ti].1.iter()) {
            *a += s * *b;
        }
    }
}

fn predict_class(params: &NetParams<f32>, sample: &TrainSample) -> Result<usize, NetError> {
    let trace = forward_trace(params, &sample.voxels, &sample.visual.0)?;
    let mut best = 0usize;
    let mut best_v = f32::NEG_INFINITY;
    for (i, v) in trace.logits.iter().enumerate() {
        if *v > best_v {
            best_v = *v;
            best = i;
        }
    }
    Ok(best)
}

/// Mean gradient of one batch. Gradients accumulate directly into one
/// parameter-shaped buffer per worker; worker buffers are reduced in
/// chunk order so any thread count gives identical results.
fn batch_grads(
    params: &NetParams<f32>,
    batch: &[(usize, TrainSample)],
    threads: usize,
) -> Result<(f64, NetParams<f32>), NetError> {
    let scale = 1.0 / batch.len() as f32;
    if threads <= 1 || batch.len() <= 1 {
        let mut total = NetParams::<f32>::zeros(params.config);
        let mut loss_acc = 0.0f64;
        for (_, s) in batch {
            let loss = loss_and_grads(params, &s.voxels, &s.visual.0, s.class, &mut total)?;
            loss_acc += f64::from(loss);
        }
        scale_grads(&mut total, scale);
        return Ok((loss_acc / batch.len() as f64, total));
    }
    let chunk = batch.len().div_ceil(threads);
    let chunks: Vec<&[(usize, TrainSample)]> = batch.chunks(chunk).collect();
    type Partial = Option<Result<(f64, NetParams<f32>), NetError>>;
    let mut partials: Vec<Partial> = (0..chunks.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot, samples) in partials.iter_mut().zip(chunks.iter()) {
            scope.spawn(move || {
                let mut acc = NetParams::<f32>::zeros(params.config);
                let mut loss_acc = 0.0f64;
                for (_, s) in *samples {
                    match loss_and_grads(params, &s.voxels, &s.visual.0, s.class, &mut acc) {
                        Ok(loss) => loss_acc += f64::from(loss),
                        Err(e) => {
                            *slot = Some(Err(e));
                            return;
                        }
                    }
                }
                *slot = Some(Ok((loss_acc, acc)));
            });
        }
    });
    let mut total = NetParams::<f32>::zeros(params.config);
    let mut loss_acc = 0.0f64;
    for p in partials {
        let (loss, g) = p.expect("chunk computed")?;
        loss_acc += loss;
        add_grads(&mut total, &g, 1.0);
    }
    scale_grads(&mut total, scale);
    Ok((loss_acc / batch.len() as f64, total))
}

fn scale_grads<T: Scalar>(grads: &mut NetParams<T>, scale: f32) {
    let s = T::from_f64(f64::from(scale));
    for (_, t) in grads.tensors_mut() {
        for v in t.iter_mut() {
            *v *= s;
        }
    }
}

/// Trains the network. `samples` must cover at least two classes and every
/// class needs at least one sample (the 50-pixel rule is applied upstream).
pub fn train(samples: &[TrainSample], config: &TrainConfig) -> Result<TrainOutcome, NetError> {
    if config.epochs == 0 {
        return Err(NetError::BadConfig("epochs must be at least 1".into()));
    }
    let n_classes = samples.iter().map(|s| s.class).max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(NetError::TooFewClasses(n_classes));
    }
    let mut seen = vec![false; n_classes];
    for s in samples {
        seen[s.class] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(NetError::EmptyClass(missing));
    }
    let (h, w) = (samples[0].visual.height(), samples[0].visual.width());
    let net_config = NetConfig::new(h, w, n_classes)?;
    let mut params = NetParams::<f32>::init(net_config, derive_seed(config.seed, "init"));
    let classes: Vec<usize> = samples.iter().map(|s| s.class).collect();
    let (train_idx, val_idx) = validation_split(&classes, config.validation_fraction);
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = train_idx.clone();
    let mut rng = Pcg32::new(derive_seed(config.seed, "epochs"));
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, NetParams<f32>)> = None;
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            // Fresh uniform rotation per sample per epoch.
            let batch: Vec<(usize, TrainSample)> = chunk
                .iter()
                .map(|&i| {
                    let shift = rng.below(w);
                    let s = &samples[i];
                    (
                        i,
                        TrainSample {
                            voxels: s.voxels.clone(),
                            visual: augment_rotate(&s.visual, shift),
                            class: s.class,
                        },
                    )
                })
                .collect();
            let (loss, grads) = batch_grads(&params, &batch, config.threads)?;
            if !loss.is_finite() {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    detail: format!("batch of {} samples", batch.len()),
                });
            }
            adam.step(&mut params, &grads, config.learning_rate);
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches.max(1) as f64;
        let mut correct = 0usize;
        for &i in &val_idx {
            if predict_class(&params, &samples[i])? == samples[i].class {
                correct += 1;
            }
        }
        let val_accuracy = if val_idx.is_empty() {
            0.0
        } else {
            correct as f64 / val_idx.len() as f64
        };
        log_debug!("epoch {epoch}: loss {train_loss:.4}, val acc {val_accuracy:.3}");
        history.push(EpochStats {
            epoch,
            train_loss,
            val_accuracy,
        });
        let improved = best.as_ref().is_none_or(|(_, acc, _)| val_accuracy > *acc);
        if improved {
            best = Some((epoch, val_accuracy, params.clone()));
        }
    }
    let (best_epoch, _, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_split_is_stratified_and_deterministic() {
        let classes = vec![0, 0, 0, 0, 1, 1, 1, 1, 2];
        let (train, val) = validation_split(&classes, 0.25);
        let (train2, val2) = validation_split(&classes, 0.25);
        assert_eq!(train, train2);
        assert_eq!(val, val2);
        // Class 2 has a single sample: it stays in training.
        assert!(train.contains(&8));
        // Every class keeps at least one training sample.
        for c in 0..3 {
            assert!(train.iter().any(|i| classes[*i] == c));
        }
        assert_eq!(train.len() + val.len(), classes.len());
        assert!(!val.is_empty());
    }
}

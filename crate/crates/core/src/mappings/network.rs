use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MappingError;
use crate::cues::FormMatrix;

/// One fully connected layer, `out = in · weights + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            weights: DMatrix::zeros(inputs, outputs),
            bias: DVector::zeros(outputs),
        }
    }

    fn affine(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = input * &self.weights;
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.bias[j]);
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![1000],
            epochs: 100,
            patience: 5,
            validation_fraction: 0.05,
            batch_size: 512,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub monitor_loss: f64,
}

/// Meaning → form network: ReLU hidden layers and a logistic output layer,
/// trained with mean binary cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardNetwork {
    layers: Vec<DenseLayer>,
    pub trained_epochs: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a 0/1 target, computed stably.
fn bce_from_logit(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

impl FeedforwardNetwork {
    /// Glorot-uniform weights and zero biases. `sizes` lists every layer
    /// width from input to output.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                DenseLayer {
                    weights: DMatrix::from_fn(w[0], w[1], |_, _| rng.gen_range(-limit..=limit)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        FeedforwardNetwork {
            layers,
            trained_epochs: 0,
            best_epoch: 0,
            history: Vec::new(),
        }
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Self {
        assert!(!layers.is_empty());
        for w in layers.windows(2) {
            assert_eq!(w[0].weights.ncols(), w[1].weights.nrows(), "layer widths must chain");
        }
        FeedforwardNetwork {
            layers,
            trained_epochs: 0,
            best_epoch: 0,
            history: Vec::new(),
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].weights.nrows())
            .chain(self.layers.iter().map(|l| l.weights.ncols()))
            .collect()
    }

    pub fn input_dims(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dims(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.layer_sizes())
    }

    fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Pre-activations of every layer.
    fn forward_logits(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            if i + 1 < self.layers.len() {
                a = z.map(|v| v.max(0.0));
            }
            zs.push(z);
        }
        zs
    }

    /// Logistic outputs for every row of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, MappingError> {
        if x.ncols() != self.input_dims() {
            return Err(MappingError::Dimension {
                expected: self.input_dims(),
                found: x.ncols(),
            });
        }
        let zs = self.forward_logits(x);
        Ok(zs.last().unwrap().map(sigmoid))
    }

    /// Per-cue support in [0, 1] for one meaning vector.
    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>, MappingError> {
        let x = DMatrix::from_row_slice(1, s.len(), s);
        Ok(self.predict(&x)?.iter().copied().collect())
    }

    /// Mean binary cross-entropy over all entries of `targets`.
    pub fn loss(&self, x: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
        let zs = self.forward_logits(x);
        mean_bce(zs.last().unwrap(), targets)
    }

    /// Loss and its gradient with respect to every layer's parameters.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, targets: &DMatrix<f64>) -> (f64, Vec<LayerGradient>) {
        let zs = self.forward_logits(x);
        let out = zs.last().unwrap();
        let loss = mean_bce(out, targets);
        let scale = 1.0 / (out.nrows() * out.ncols()) as f64;

        let mut delta = out.zip_map(targets, |z, t| (sigmoid(z) - t) * scale);
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 {
                x.clone()
            } else {
                zs[l - 1].map(|v| v.max(0.0))
            };
            let gw = input.tr_mul(&delta);
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            grads.push(LayerGradient { weights: gw, bias: gb });
            if l > 0 {
                let back = &delta * self.layers[l].weights.transpose();
                delta = back.zip_map(&zs[l - 1], |d, z| if z > 0.0 { d } else { 0.0 });
            }
        }
        grads.reverse();
        (loss, grads)
    }
}

/// Parameter count of a fully connected network with biases.
pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn mean_bce(logits: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(targets.iter())
        .map(|(&z, &t)| bce_from_logit(z, t))
        .sum();
    total / (logits.nrows() * logits.ncols()) as f64
}

struct AdamState {
    m: Vec<LayerGradient>,
    v: Vec<LayerGradient>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    fn new(net: &FeedforwardNetwork) -> Self {
        let zeros: Vec<LayerGradient> = net
            .layers
            .iter()
            .map(|l| LayerGradient {
                weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                bias: DVector::zeros(l.bias.len()),
            })
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, net: &mut FeedforwardNetwork, grads: &[LayerGradient], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (i, g) in grads.iter().enumerate() {
            let layer = &mut net.layers[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            adam_update(
                layer.weights.as_mut_slice(),
                g.weights.as_slice(),
                m.weights.as_mut_slice(),
                v.weights.as_mut_slice(),
                lr,
                c1,
                c2,
            );
            adam_update(
                layer.bias.as_mut_slice(),
                g.bias.as_slice(),
                m.bias.as_mut_slice(),
                v.bias.as_mut_slice(),
                lr,
                c1,
                c2,
            );
        }
    }
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
    }
}

fn sgd_step(net: &mut FeedforwardNetwork, grads: &[LayerGradient], lr: f64) {
    for (layer, g) in net.layers.iter_mut().zip(grads) {
        layer.weights -= &g.weights * lr;
        layer.bias.axpy(-lr, &g.bias, 1.0);
    }
}

fn dense_targets(forms: &FormMatrix, rows: &[usize]) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(rows.len(), forms.ncols());
    for (r, &i) in rows.iter().enumerate() {
        for &c in forms.row(i) {
            t[(r, c as usize)] = 1.0;
        }
    }
    t
}

/// Train a meaning → form network on row-aligned `semantics` and `forms`.
///
/// Rows are put into a canonical order (by row id, then content) before any
/// seeded shuffling, so the result does not depend on the input row order.
/// Training stops after `epochs` or once the monitored loss (validation
/// loss, or training loss when `validation_fraction` is 0) has not improved
/// for `patience` epochs; the best parameters are restored.
pub fn train_network(
    semantics: &DMatrix<f64>,
    row_ids: &[String],
    forms: &FormMatrix,
    config: &TrainConfig,
) -> Result<FeedforwardNetwork, MappingError> {
    let n = semantics.nrows();
    if forms.nrows() != n || row_ids.len() != n {
        return Err(MappingError::RowMismatch {
            left: n,
            right: forms.nrows(),
        });
    }
    if n == 0 || config.hidden.contains(&0) || config.batch_size == 0 {
        return Err(MappingError::BadConfig(
            "training needs rows, non-empty hidden layers and a positive batch size".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(MappingError::BadConfig(format!(
            "validation fraction {} outside [0, 1)",
            config.validation_fraction
        )));
    }

    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by(|&a, &b| {
        row_ids[a]
            .cmp(&row_ids[b])
            .then_with(|| forms.row(a).cmp(forms.row(b)))
            .then_with(|| {
                let ra = semantics.row(a).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                let rb = semantics.row(b).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                ra.cmp(&rb)
            })
    });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sizes = vec![semantics.ncols()];
    sizes.extend(&config.hidden);
    sizes.push(forms.ncols());
    let mut net = FeedforwardNetwork::new(&sizes, rng.gen());

    let mut shuffled = canonical.clone();
    shuffled.shuffle(&mut rng);
    let n_val = if config.validation_fraction > 0.0 && n > 1 {
        ((config.validation_fraction * n as f64).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let (val_rows, train_rows) = shuffled.split_at(n_val);
    let mut train_rows = train_rows.to_vec();

    let monitor_rows: Vec<usize> = if val_rows.is_empty() {
        train_rows.clone()
    } else {
        val_rows.to_vec()
    };
    let monitor_x = semantics.select_rows(&monitor_rows);
    let monitor_t = dense_targets(forms, &monitor_rows);

    let mut adam = AdamState::new(&net);
    let mut best = (f64::INFINITY, net.layers.clone(), 0usize);
    let mut stale = 0;
    let mut history = Vec::new();

    for epoch in 1..=config.epochs {
        train_rows.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_rows.chunks(config.batch_size) {
            let x = semantics.select_rows(batch);
            let t = dense_targets(forms, batch);
            let (loss, grads) = net.loss_and_gradients(&x, &t);
            if !loss.is_finite() {
                return Err(MappingError::NonFiniteLoss { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            match config.optimizer {
                Optimizer::Adam => adam.step(&mut net, &grads, config.learning_rate),
                Optimizer::Sgd => sgd_step(&mut net, &grads, config.learning_rate),
            }
        }
        let monitor = net.loss(&monitor_x, &monitor_t);
        if !monitor.is_finite() || !net.all_finite() {
            return Err(MappingError::NonFiniteLoss { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_rows.len() as f64,
            monitor_loss: monitor,
        });
        if monitor < best.0 {
            best = (monitor, net.layers.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    net.trained_epochs = history.len();
    net.layers = best.1;
    net.best_epoch = best.2;
    net.history = history;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shape_parameter_count() {
        assert_eq!(parameter_count(&[300, 1000, 3103]), 3_407_103);
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let net = FeedforwardNetwork::from_layers(vec![DenseLayer::zeros(4, 3), DenseLayer::zeros(3, 5)]);
        let out = net.forward(&[0.3, -1.0, 2.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.5; 5]);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(MappingError::Dimension { expected: 4, found: 1 })
        ));
    }

    #[test]
    fn stable_bce() {
        assert!((bce_from_logit(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_from_logit(800.0, 1.0).abs() < 1e-300);
        assert!((bce_from_logit(-800.0, 1.0) - 800.0).abs() < 1e-9);
    }
}

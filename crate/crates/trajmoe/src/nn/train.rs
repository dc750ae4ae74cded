//! Seeded mini-batch training with adaptive moment estimation, early
//! stopping on held-out loss, and the model file format.

use super::{backprop, evaluate_loss, Head, MlpSpec, MlpWeights, Targets};
use crate::dataset::Standardization;
use crate::error::Error;
use crate::{DMat, DVec};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch: 64,
            max_epochs: 2000,
            patience: 50,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_test_loss: f64,
}

struct Adam {
    m: MlpWeights,
    v: MlpWeights,
    t: u64,
}

impl Adam {
    fn new(spec: &MlpSpec) -> Adam {
        Adam {
            m: MlpWeights::zeros_like(spec),
            v: MlpWeights::zeros_like(spec),
            t: 0,
        }
    }

    fn step(&mut self, weights: &mut MlpWeights, grads: &MlpWeights, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let eps = 1e-8;
        for l in 0..weights.w.len() {
            let update = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *w -= cfg.step * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            };
            for i in 0..weights.w[l].len() {
                update(
                    &mut weights.w[l][i],
                    &mut self.m.w[l][i],
                    &mut self.v.w[l][i],
                    grads.w[l][i],
                );
            }
            for i in 0..weights.b[l].len() {
                update(
                    &mut weights.b[l][i],
                    &mut self.m.b[l][i],
                    &mut self.v.b[l][i],
                    grads.b[l][i],
                );
            }
        }
    }
}

/// Train from a fresh seeded init; see [`train_from`].
pub fn train(
    spec: &MlpSpec,
    x_train: &DMat,
    y_train: &Targets,
    x_test: &DMat,
    y_test: &Targets,
    cfg: &TrainConfig,
) -> Result<(MlpWeights, TrainHistory), Error> {
    train_from(spec, MlpWeights::init(spec, cfg.seed), x_train, y_train, x_test, y_test, cfg)
}

/// Mini-batch training from given initial weights. Batch order is a seeded
/// shuffle per epoch, so runs are bit-reproducible. Returns the weights at
/// the best held-out loss, not the final ones, with the epoch history.
pub fn train_from(
    spec: &MlpSpec,
    mut weights: MlpWeights,
    x_train: &DMat,
    y_train: &Targets,
    x_test: &DMat,
    y_test: &Targets,
    cfg: &TrainConfig,
) -> Result<(MlpWeights, TrainHistory), Error> {
    assert!(x_train.ncols() > 0 && x_test.ncols() > 0, "empty split");
    assert_eq!(x_train.ncols(), y_train.len());
    assert_eq!(x_test.ncols(), y_test.len());

    let n = x_train.ncols();
    let batch = cfg.batch.clamp(1, n);
    let mut opt = Adam::new(spec);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, MlpWeights, usize)> = None;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.max_epochs {
        crate::dataset::shuffle(&mut order, cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37));
        let mut train_loss = 0.0;
        let mut grads = MlpWeights::zeros_like(spec);
        for chunk in order.chunks(batch) {
            let xb = DMat::from_columns(
                &chunk.iter().map(|&i| x_train.column(i).clone_owned()).collect::<Vec<_>>(),
            );
            let yb = y_train.select(chunk);
            let loss = backprop(spec, &weights, &xb, &yb, &mut grads).map_err(|e| {
                Error::invalid(format!("training diverged in epoch {epoch}: {e}"))
            })?;
            train_loss += loss * chunk.len() as f64;
            opt.step(&mut weights, &grads, cfg);
        }
        train_loss /= n as f64;
        let test_loss = evaluate_loss(spec, &weights, x_test, y_test);
        if !test_loss.is_finite() {
            return Err(Error::invalid(format!(
                "training diverged in epoch {epoch}: non-finite held-out loss"
            )));
        }
        history.epochs.push(EpochStats {
            train_loss,
            test_loss,
        });
        let improved = best.as_ref().map_or(true, |(b, _, _)| test_loss < *b);
        if improved {
            best = Some((test_loss, weights.clone(), epoch));
        } else if epoch - best.as_ref().unwrap().2 >= cfg.patience {
            break;
        }
    }
    let (best_test_loss, best_weights, best_epoch) = best.unwrap();
    history.best_epoch = best_epoch;
    history.best_test_loss = best_test_loss;
    Ok((best_weights, history))
}

/// A trained network plus the normalization that makes it usable on raw
/// inputs and outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub weights: MlpWeights,
    pub normalization: Option<Standardization>,
}

#[derive(Serialize, Deserialize)]
struct MlpFile {
    version: u32,
    model: MlpModel,
}

const MLP_VERSION: u32 = 1;

pub fn save_mlp(model: &MlpModel, path: &Path, overwrite: bool) -> Result<(), Error> {
    if !overwrite && path.exists() {
        return Err(Error::WouldOverwrite(path.display().to_string()));
    }
    let file = MlpFile {
        version: MLP_VERSION,
        model: model.clone(),
    };
    let text = serde_json::to_string(&file).expect("model serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_mlp(path: &Path) -> Result<MlpModel, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: MlpFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "model file",
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if file.version != MLP_VERSION {
        return Err(Error::Format {
            what: "model file",
            path: path.display().to_string(),
            detail: format!("version {} (this build reads {})", file.version, MLP_VERSION),
        });
    }
    let m = &file.model;
    let shapes_ok = m.weights.w.len() == m.spec.layers.len() - 1
        && m.weights.w.iter().zip(&m.weights.b).enumerate().all(|(l, (w, b))| {
            w.nrows() == m.spec.layers[l + 1]
                && w.ncols() == m.spec.layers[l]
                && b.len() == m.spec.layers[l + 1]
        });
    if !shapes_ok {
        return Err(Error::Format {
            what: "model file",
            path: path.display().to_string(),
            detail: "weight shapes do not match the layer sizes".into(),
        });
    }
    Ok(file.model)
}

// Serde shape for weights: row-major matrices as nested arrays.
#[derive(Serialize, Deserialize)]
struct LayerRecord {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Serialize for MlpWeights {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let layers: Vec<LayerRecord> = self
            .w
            .iter()
            .zip(&self.b)
            .map(|(w, b)| LayerRecord {
                w: (0..w.nrows())
                    .map(|i| w.row(i).iter().copied().collect())
                    .collect(),
                b: b.iter().copied().collect(),
            })
            .collect();
        layers.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MlpWeights {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let layers = Vec::<LayerRecord>::deserialize(d)?;
        let mut w = Vec::new();
        let mut b = Vec::new();
        for layer in layers {
            let rows = layer.w.len();
            let cols = layer.w.first().map_or(0, |r| r.len());
            if layer.w.iter().any(|r| r.len() != cols) || rows == 0 || cols == 0 {
                return Err(serde::de::Error::custom("ragged or empty weight matrix"));
            }
            w.push(DMat::from_fn(rows, cols, |i, j| layer.w[i][j]));
            b.push(DVec::from_vec(layer.b));
        }
        Ok(MlpWeights { w, b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_net_learns_a_linear_map() {
        let spec = MlpSpec::new(vec![1, 1], Head::Linear);
        let x = DMat::from_fn(1, 100, |_, j| (j as f64 - 50.0) / 50.0);
        let y = Targets::Values(&x * 2.0);
        let x_test = DMat::from_fn(1, 20, |_, j| (j as f64 - 10.0) / 10.0);
        let y_test = Targets::Values(&x_test * 2.0);
        let cfg = TrainConfig {
            max_epochs: 2000,
            patience: 200,
            ..TrainConfig::default()
        };
        let (w, hist) = train(&spec, &x, &y, &x_test, &y_test, &cfg).unwrap();
        assert!(
            hist.best_test_loss <= 1e-6,
            "test loss {}",
            hist.best_test_loss
        );
        assert!((w.w[0][(0, 0)] - 2.0).abs() < 2e-3);
    }

    #[test]
    fn classifier_separates_two_blobs_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 80;
        let x = DMat::from_fn(2, n, |i, j| {
            let c = if j < n / 2 { -3.0 } else { 3.0 };
            c + rng.gen_range(-1.0..1.0) + i as f64 * 0.0
        });
        let labels: Vec<usize> = (0..n).map(|j| (j >= n / 2) as usize).collect();
        let y = Targets::Labels(labels.clone());
        let spec = MlpSpec::new(vec![2, 8, 2], Head::Logits);
        let cfg = TrainConfig {
            max_epochs: 300,
            ..TrainConfig::default()
        };
        let (w, _) = train(&spec, &x, &y, &x, &y, &cfg).unwrap();
        let acc = super::super::classification_accuracy(&spec, &w, &x, &labels);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMat::from_fn(2, 40, |_, _| rng.gen_range(-1.0..1.0));
        let y = Targets::Values(DMat::from_fn(3, 40, |_, j| x.column(j).sum()));
        let spec = MlpSpec::new(vec![2, 6, 3], Head::Linear);
        let cfg = TrainConfig {
            max_epochs: 40,
            ..TrainConfig::default()
        };
        let (w1, h1) = train(&spec, &x, &y, &x, &y, &cfg).unwrap();
        let (w2, h2) = train(&spec, &x, &y, &x, &y, &cfg).unwrap();
        for l in 0..w1.w.len() {
            assert_eq!(w1.w[l], w2.w[l]);
            assert_eq!(w1.b[l], w2.b[l]);
        }
        assert_eq!(h1.best_test_loss.to_bits(), h2.best_test_loss.to_bits());
    }

    #[test]
    fn recorded_best_loss_matches_reevaluation_of_returned_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMat::from_fn(1, 30, |_, _| rng.gen_range(-1.0..1.0));
        let y = Targets::Values(x.map(|v| v.sin()));
        let spec = MlpSpec::new(vec![1, 10, 1], Head::Linear);
        let cfg = TrainConfig {
            max_epochs: 60,
            ..TrainConfig::default()
        };
        let (w, hist) = train(&spec, &x, &y, &x, &y, &cfg).unwrap();
        let re = evaluate_loss(&spec, &w, &x, &y);
        assert!((re - hist.best_test_loss).abs() <= 1e-12);
    }

    #[test]
    fn early_stopping_respects_patience() {
        // A target the net fits almost immediately: after the best epoch,
        // at most `patience` more epochs are recorded.
        let x = DMat::from_fn(1, 10, |_, j| j as f64);
        let y = Targets::Values(DMat::zeros(1, 10));
        let spec = MlpSpec::new(vec![1, 1], Head::Linear);
        let cfg = TrainConfig {
            max_epochs: 2000,
            patience: 10,
            ..TrainConfig::default()
        };
        let (_, hist) = train(&spec, &x, &y, &x, &y, &cfg).unwrap();
        assert!(hist.epochs.len() <= hist.best_epoch + 11);
    }

    #[test]
    fn model_file_round_trips_and_validates() {
        let spec = MlpSpec::new(vec![2, 4, 3], Head::Logits);
        let model = MlpModel {
            weights: MlpWeights::init(&spec, 9),
            spec,
            normalization: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mlp.json");
        save_mlp(&model, &path, false).unwrap();
        let back = load_mlp(&path).unwrap();
        assert_eq!(back.spec, model.spec);
        for l in 0..model.weights.w.len() {
            assert_eq!(back.weights.w[l], model.weights.w[l]);
        }
        assert!(matches!(save_mlp(&model, &path, false), Err(Error::WouldOverwrite(_))));

        let text = std::fs::read_to_string(&path).unwrap();
        let bad = text.replacen("\"version\":1", "\"version\":7", 1);
        std::fs::write(&path, bad).unwrap();
        assert!(load_mlp(&path).is_err());
    }
}

//! Small multilayer perceptrons with analytic backpropagation.
//!
//! Everything downstream (the single-network baseline, the gating
//! classifier, the per-cluster regressors) is built from the one network
//! shape defined here: affine layers with a leaky rectifier between hidden
//! layers and a linear output, trained against either a smooth-L1
//! regression loss or a softmax cross-entropy classification loss.
//!
//! Batches are column-major: one sample per column, so a layer is a single
//! matrix product.

mod train;

pub use train::{load_mlp, save_mlp, train, train_from, EpochStats, MlpModel, TrainConfig, TrainHistory};

use crate::error::Error;
use crate::{DMat, DVec};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What the last layer's raw output means. Both heads are affine; the tag
/// records whether values are read directly or fed to a softmax.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    Logits,
}

/// Network shape: layer widths from input to output, the negative-side
/// slope of the hidden rectifier, and the output head tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layers: Vec<usize>,
    pub alpha: f64,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(layers: Vec<usize>, head: Head) -> MlpSpec {
        assert!(layers.len() >= 2, "a network needs input and output layers");
        assert!(layers.iter().all(|&s| s >= 1), "zero-width layer");
        MlpSpec {
            layers,
            alpha: 0.2,
            head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layers.last().unwrap()
    }

    fn n_affine(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Weight matrices and bias vectors, one pair per affine layer.
#[derive(Clone, Debug)]
pub struct MlpWeights {
    pub w: Vec<DMat>,
    pub b: Vec<DVec>,
}

impl MlpWeights {
    /// Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> MlpWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Vec::new();
        let mut b = Vec::new();
        for l in 0..spec.n_affine() {
            let (fan_in, fan_out) = (spec.layers[l], spec.layers[l + 1]);
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.push(DMat::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-lim..lim)));
            b.push(DVec::zeros(fan_out));
        }
        MlpWeights { w, b }
    }

    pub fn zeros_like(spec: &MlpSpec) -> MlpWeights {
        MlpWeights {
            w: (0..spec.n_affine())
                .map(|l| DMat::zeros(spec.layers[l + 1], spec.layers[l]))
                .collect(),
            b: (0..spec.n_affine())
                .map(|l| DVec::zeros(spec.layers[l + 1]))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|m| m.iter().all(|v| v.is_finite()))
            && self.b.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn leaky(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        alpha * z
    }
}

fn leaky_slope(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        alpha
    }
}

/// Forward pass on a batch, one sample per column.
pub fn forward_batch(spec: &MlpSpec, weights: &MlpWeights, x: &DMat) -> DMat {
    assert_eq!(x.nrows(), spec.input_dim(), "input width mismatch");
    let mut a = x.clone();
    for l in 0..spec.n_affine() {
        let mut z = &weights.w[l] * &a;
        for mut col in z.column_iter_mut() {
            col += &weights.b[l];
        }
        if l + 1 < spec.n_affine() {
            z.apply(|v| *v = leaky(*v, spec.alpha));
        }
        a = z;
    }
    a
}

/// Forward pass on one input vector.
pub fn forward(spec: &MlpSpec, weights: &MlpWeights, x: &DVec) -> DVec {
    let out = forward_batch(spec, weights, &DMat::from_columns(&[x.clone()]));
    out.column(0).clone_owned()
}

/// Smooth-L1 value and gradient in the prediction: quadratic within the
/// knee at |d| = beta, linear beyond, averaged over components. beta = 1.
pub fn smooth_l1_loss(pred: &DVec, target: &DVec) -> (f64, DVec) {
    assert_eq!(pred.len(), target.len());
    let beta = 1.0;
    let inv = 1.0 / pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = DVec::zeros(pred.len());
    for i in 0..pred.len() {
        let d = pred[i] - target[i];
        if d.abs() < beta {
            loss += 0.5 * d * d;
            grad[i] = d * inv;
        } else {
            loss += beta * (d.abs() - 0.5 * beta);
            grad[i] = beta * d.signum() * inv;
        }
    }
    (loss * inv, grad)
}

/// Cross-entropy of one label under softmax of the logits, stabilized by
/// max subtraction; gradient is softmax minus the one-hot target.
pub fn cross_entropy_loss(logits: &DVec, label: usize) -> (f64, DVec) {
    assert!(label < logits.len(), "label outside logit range");
    let m = logits.max();
    let exps = logits.map(|v| (v - m).exp());
    let z: f64 = exps.sum();
    let loss = z.ln() - (logits[label] - m);
    let mut grad = exps / z;
    grad[label] -= 1.0;
    (loss, grad)
}

/// Regression targets (one column per sample) or class labels.
#[derive(Clone, Debug)]
pub enum Targets {
    Values(DMat),
    Labels(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values(m) => m.ncols(),
            Targets::Labels(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The subset at `idx`, in order.
    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Values(m) => Targets::Values(DMat::from_columns(
                &idx.iter().map(|&i| m.column(i).clone_owned()).collect::<Vec<_>>(),
            )),
            Targets::Labels(l) => Targets::Labels(idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Mean batch loss and its exact gradient in every weight and bias.
/// The loss follows the targets: smooth L1 for values, cross entropy for
/// labels. A non-finite per-sample loss aborts with the column index.
pub fn backprop(
    spec: &MlpSpec,
    weights: &MlpWeights,
    x: &DMat,
    targets: &Targets,
    grads: &mut MlpWeights,
) -> Result<f64, Error> {
    let n = x.ncols();
    assert!(n > 0, "empty batch");
    assert_eq!(targets.len(), n, "batch target count mismatch");

    // Forward, keeping pre-activations for the backward pass.
    let mut acts: Vec<DMat> = vec![x.clone()];
    let mut pres: Vec<DMat> = Vec::new();
    for l in 0..spec.n_affine() {
        let mut z = &weights.w[l] * acts.last().unwrap();
        for mut col in z.column_iter_mut() {
            col += &weights.b[l];
        }
        pres.push(z.clone());
        if l + 1 < spec.n_affine() {
            z.apply(|v| *v = leaky(*v, spec.alpha));
        }
        acts.push(z);
    }
    let out = acts.last().unwrap();

    // Per-sample loss and output-side gradient.
    let mut total = 0.0;
    let mut delta = DMat::zeros(out.nrows(), n);
    for j in 0..n {
        let col = out.column(j).clone_owned();
        let (loss, g) = match targets {
            Targets::Values(t) => smooth_l1_loss(&col, &t.column(j).clone_owned()),
            Targets::Labels(l) => cross_entropy_loss(&col, l[j]),
        };
        if !loss.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite loss on batch column {j}"
            )));
        }
        total += loss;
        delta.column_mut(j).copy_from(&(g / n as f64));
    }

    // Backward through the affine stack.
    for l in (0..spec.n_affine()).rev() {
        grads.w[l] = &delta * acts[l].transpose();
        for (i, g) in grads.b[l].iter_mut().enumerate() {
            *g = delta.row(i).sum();
        }
        if l > 0 {
            let mut back = weights.w[l].tr_mul(&delta);
            back.zip_apply(&pres[l - 1], |v, z| *v *= leaky_slope(z, spec.alpha));
            delta = back;
        }
    }
    Ok(total / n as f64)
}

/// Mean loss of a whole set without gradients.
pub fn evaluate_loss(spec: &MlpSpec, weights: &MlpWeights, x: &DMat, targets: &Targets) -> f64 {
    let out = forward_batch(spec, weights, x);
    let n = x.ncols();
    let mut total = 0.0;
    for j in 0..n {
        let col = out.column(j).clone_owned();
        total += match targets {
            Targets::Values(t) => smooth_l1_loss(&col, &t.column(j).clone_owned()).0,
            Targets::Labels(l) => cross_entropy_loss(&col, l[j]).0,
        };
    }
    total / n as f64
}

/// Fraction of labels predicted by the maximal output.
pub fn classification_accuracy(
    spec: &MlpSpec,
    weights: &MlpWeights,
    x: &DMat,
    labels: &[usize],
) -> f64 {
    let out = forward_batch(spec, weights, x);
    let mut hits = 0usize;
    for (j, &l) in labels.iter().enumerate() {
        let col = out.column(j);
        let argmax = (0..col.len())
            .max_by(|&a, &b| col[a].partial_cmp(&col[b]).unwrap())
            .unwrap();
        if argmax == l {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

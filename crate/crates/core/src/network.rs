//! Fully-connected softmax classifier with per-sample gradient capture.
//!
//! Each layer computes `s_l = W_l a_{l-1}` where `a_{l-1}` carries a trailing
//! constant 1, so the last column of `W_l` is the bias. Batches are stored one
//! sample per row.
//!
//! Gradients are taken of the loss `−log p(y|x)`, so `u_l = ∂(−log p)/∂s_l`. The
//! Fisher statistics built from them are outer products and do not see the sign.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{dims, Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, s: f64) -> f64 {
        match self {
            Activation::Tanh => s.tanh(),
            Activation::Relu => s.max(0.0),
        }
    }

    fn derivative(self, s: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = s.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation `{other}` (expected tanh or relu)"
            ))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    weights: Vec<Matrix>,
    activations: Vec<Activation>,
}

/// Per-sample input activations and pre-activation gradients of one layer.
///
/// Row `i` of `a` is `a_{l-1}` for sample `i` (homogeneous 1 included), row `i`
/// of `u` is the matching `u_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradientBatch {
    a: Matrix,
    u: Matrix,
}

impl LayerGradientBatch {
    pub fn new(a: Matrix, u: Matrix) -> Result<Self> {
        if a.nrows() != u.nrows() {
            return Err(dims(format!(
                "activation rows ({}) and gradient rows ({}) differ",
                a.nrows(),
                u.nrows()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::DegenerateBatch("empty batch".into()));
        }
        Ok(Self { a, u })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn batch_size(&self) -> usize {
        self.a.nrows()
    }

    /// Input side of the block (including the bias coordinate).
    pub fn in_dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.u.ncols()
    }

    /// Dimension of this layer's Fisher block.
    pub fn block_dim(&self) -> usize {
        self.in_dim() * self.out_dim()
    }

    /// `u_i a_iᵀ`, shaped like the weight matrix.
    pub fn sample_gradient(&self, i: usize) -> Matrix {
        self.u.row(i).transpose() * self.a.row(i)
    }

    /// Mini-batch weight gradient `(1/N) Σ u_i a_iᵀ`.
    pub fn mean_gradient(&self) -> Matrix {
        self.u.transpose() * &self.a / self.batch_size() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub accuracy: f64,
}

impl LossReport {
    pub fn from_logits(logits: &Matrix, targets: &[usize]) -> Result<Self> {
        check_targets(logits, targets)?;
        let n = logits.nrows();
        let mut loss = 0.0;
        let mut correct = 0usize;
        for (i, &y) in targets.iter().enumerate() {
            let row = logits.row(i);
            let max = row.max();
            let lse = max + row.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            let predicted = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                    if v > best.1 {
                        (k, v)
                    } else {
                        best
                    }
                })
                .0;
            if predicted == y {
                correct += 1;
            }
        }
        Ok(Self {
            loss: loss / n as f64,
            accuracy: correct as f64 / n as f64,
        })
    }
}

/// Values retained by [`DenseNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    fingerprint: u64,
    inputs: Vec<Matrix>,
    preacts: Vec<Matrix>,
}

impl ActivationCache {
    /// `a_{l-1}` for every layer, one sample per row, bias column included.
    pub fn layer_inputs(&self) -> &[Matrix] {
        &self.inputs
    }

    /// `s_l` for every layer, one sample per row.
    pub fn preactivations(&self) -> &[Matrix] {
        &self.preacts
    }

    pub fn logits(&self) -> &Matrix {
        self.preacts.last().expect("network has at least one layer")
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Matrix,
    pub cache: ActivationCache,
}

fn with_bias(x: &Matrix) -> Matrix {
    x.clone().insert_column(x.ncols(), 1.0)
}

fn check_targets(logits: &Matrix, targets: &[usize]) -> Result<()> {
    if targets.len() != logits.nrows() {
        return Err(dims(format!(
            "{} targets for {} samples",
            targets.len(),
            logits.nrows()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&y| y >= logits.ncols()) {
        return Err(dims(format!(
            "target class {bad} out of range for {} outputs",
            logits.ncols()
        )));
    }
    Ok(())
}

/// Row-wise softmax.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut probs = logits.clone();
    for mut row in probs.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let total = row.sum();
        row /= total;
    }
    probs
}

/// Draws one label per row from `softmax(logits)`.
pub fn sample_model_labels<R: Rng + ?Sized>(logits: &Matrix, rng: &mut R) -> Result<Vec<usize>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let probs = softmax(logits);
    probs
        .row_iter()
        .map(|row| {
            let dist = WeightedIndex::new(row.iter().copied())
                .map_err(|e| Error::DegenerateBatch(format!("softmax weights: {e}")))?;
            Ok(dist.sample(rng))
        })
        .collect()
}

impl DenseNet {
    /// `weights[l]` is `out_l × (in_l + 1)`; `activations` has one entry per hidden
    /// layer (the output layer feeds the softmax directly).
    pub fn new(weights: Vec<Matrix>, activations: Vec<Activation>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs at least one layer".into(),
            ));
        }
        if activations.len() + 1 != weights.len() {
            return Err(Error::InvalidConfig(format!(
                "{} layers need {} hidden activations, got {}",
                weights.len(),
                weights.len() - 1,
                activations.len()
            )));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() + 1 {
                return Err(dims(format!(
                    "layer {} expects {} inputs (with bias) but layer {l} produces {}",
                    l + 1,
                    pair[1].ncols(),
                    pair[0].nrows()
                )));
            }
        }
        if weights.iter().any(|w| w.nrows() == 0 || w.ncols() < 2) {
            return Err(Error::InvalidConfig(
                "every layer needs at least one input and output".into(),
            ));
        }
        if weights
            .iter()
            .flat_map(|w| w.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite weight".into()));
        }
        Ok(Self {
            weights,
            activations,
        })
    }

    /// Network with all-zero weights. `widths` lists input, hidden and output sizes.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "need at least input and output widths".into(),
            ));
        }
        let weights = widths
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0] + 1))
            .collect();
        Self::new(weights, vec![activation; widths.len() - 2])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(
        widths: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        for w in &mut net.weights {
            let fan_in = w.ncols() - 1;
            let fan_out = w.nrows();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for j in 0..fan_in {
                for i in 0..fan_out {
                    w[(i, j)] = rng.random_range(-limit..limit);
                }
            }
        }
        Ok(net)
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols() - 1
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].nrows()
    }

    /// Input, hidden and output widths.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.weights.iter().map(|w| w.nrows()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for w in &self.weights {
            w.shape().hash(&mut h);
            for v in w.iter() {
                v.to_bits().hash(&mut h);
            }
        }
        self.activations.hash(&mut h);
        h.finish()
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<ForwardPass> {
        if inputs.ncols() != self.input_dim() {
            return Err(dims(format!(
                "input has {} features, network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        let mut layer_inputs = Vec::with_capacity(self.weights.len());
        let mut preacts = Vec::with_capacity(self.weights.len());
        let mut a = with_bias(inputs);
        for (l, w) in self.weights.iter().enumerate() {
            let s = &a * w.transpose();
            layer_inputs.push(a);
            if let Some(act) = self.activations.get(l) {
                a = with_bias(&s.map(|v| act.apply(v)));
            } else {
                a = Matrix::zeros(0, 0);
            }
            preacts.push(s);
        }
        let logits = preacts.last().cloned().expect("at least one layer");
        Ok(ForwardPass {
            logits,
            cache: ActivationCache {
                fingerprint: self.fingerprint(),
                inputs: layer_inputs,
                preacts,
            },
        })
    }

    /// Per-sample, per-layer `(a_{l-1}, u_l)` for the loss `−log p(targets | x)`.
    pub fn backward(
        &self,
        cache: &ActivationCache,
        targets: &[usize],
    ) -> Result<Vec<LayerGradientBatch>> {
        if cache.fingerprint != self.fingerprint() || cache.inputs.len() != self.weights.len() {
            return Err(Error::StaleCache);
        }
        let logits = cache.logits();
        check_targets(logits, targets)?;

        let mut u = softmax(logits);
        for (i, &y) in targets.iter().enumerate() {
            u[(i, y)] -= 1.0;
        }

        let depth = self.weights.len();
        let mut out = Vec::with_capacity(depth);
        for l in (0..depth).rev() {
            let next = if l > 0 {
                let w = &self.weights[l];
                let in_dim = w.ncols() - 1;
                let mut back = &u * w.columns(0, in_dim);
                let act = self.activations[l - 1];
                back.zip_apply(&cache.preacts[l - 1], |g, s| *g *= act.derivative(s));
                Some(back)
            } else {
                None
            };
            out.push(LayerGradientBatch::new(cache.inputs[l].clone(), u)?);
            match next {
                Some(back) => u = back,
                None => break,
            }
        }
        out.reverse();
        Ok(out)
    }

    /// Mean-loss weight gradients for a labelled batch.
    pub fn gradients(&self, inputs: &Matrix, targets: &[usize]) -> Result<Vec<Matrix>> {
        let pass = self.forward(inputs)?;
        Ok(self
            .backward(&pass.cache, targets)?
            .iter()
            .map(LayerGradientBatch::mean_gradient)
            .collect())
    }

    pub fn evaluate(&self, inputs: &Matrix, targets: &[usize]) -> Result<LossReport> {
        let pass = self.forward(inputs)?;
        LossReport::from_logits(&pass.logits, targets)
    }

    /// Flattened parameters, layer by layer, each in column-major order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .collect()
    }
}

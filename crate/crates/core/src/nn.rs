//! Small dense-network substrate with hand-written reverse-mode gradients.
//!
//! Everything is `f64`. Layers store weights as `in_dim × out_dim` so that a
//! forward pass is the row-vector product `x W + b`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Additive penalty applied to masked-out logits.
pub const MASK_PENALTY: f64 = 1e9;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("mask has no legal entries")]
    EmptyMask,
    #[error("backward called without a recorded forward pass")]
    EmptyTape,
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("parameter layout mismatch: {0}")]
    Layout(String),
    #[error("learning rate must be positive, got {0}")]
    LearningRate(f64),
}

fn check_dim(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::Dimension { expected, got })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A borrowed view of one parameter tensor.
pub struct NamedTensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [f64],
}

/// Anything made of flat `f64` tensors in a fixed order. Gradients use the
/// same type as the parameters they belong to.
pub trait Parameters {
    fn tensors(&self) -> Vec<NamedTensor<'_>>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.values.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Array2::zeros((in_dim, out_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Uniform in ±sqrt(6 / (in + out)), zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((in_dim, out_dim), || rng.random_range(-limit..limit));
        Self {
            weights,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn affine(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, NnError> {
        check_dim(self.in_dim(), x.len())?;
        Ok(x.dot(&self.weights) + &self.bias)
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>, act: Activation) -> Result<Array1<f64>, NnError> {
        Ok(self.affine(x)?.mapv_into(|z| act.apply(z)))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the layer input.
    fn backward(
        &self,
        input: ArrayView1<'_, f64>,
        output: ArrayView1<'_, f64>,
        act: Activation,
        upstream: ArrayView1<'_, f64>,
        grads: &mut DenseLayer,
    ) -> Array1<f64> {
        let dz: Array1<f64> = upstream
            .iter()
            .zip(output.iter())
            .map(|(&u, &y)| u * act.derivative_from_output(y))
            .collect();
        for (i, &xi) in input.iter().enumerate() {
            if xi != 0.0 {
                let mut row = grads.weights.row_mut(i);
                row.scaled_add(xi, &dz);
            }
        }
        grads.bias += &dz;
        self.weights.dot(&dz)
    }

    fn tensors_named(&self, prefix: &str) -> Vec<NamedTensor<'_>> {
        vec![
            NamedTensor {
                name: format!("{prefix}weights"),
                shape: self.weights.shape().to_vec(),
                values: self.weights.as_slice().expect("standard layout"),
            },
            NamedTensor {
                name: format!("{prefix}bias"),
                shape: self.bias.shape().to_vec(),
                values: self.bias.as_slice().expect("standard layout"),
            },
        ]
    }

    fn tensors_mut_all(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

impl Parameters for DenseLayer {
    fn tensors(&self) -> Vec<NamedTensor<'_>> {
        self.tensors_named("")
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors_mut_all()
    }
}

/// `max(0, x W + b)`.
pub fn affine_relu(layer: &DenseLayer, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, NnError> {
    layer.forward(x, Activation::Relu)
}

/// Forward values recorded for one [`Mlp`] pass.
#[derive(Clone, Debug, Default)]
pub struct GradientTape {
    // activations[0] is the input, activations[i + 1] the output of layer i
    activations: Vec<Array1<f64>>,
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    pub fn clear(&mut self) {
        self.activations.clear();
    }

    pub fn output(&self) -> Option<&Array1<f64>> {
        self.activations.last()
    }
}

/// A stack of dense layers, each followed by its own activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub activations: Vec<Activation>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>, activations: Vec<Activation>) -> Self {
        assert_eq!(layers.len(), activations.len(), "one activation per layer");
        for w in layers.windows(2) {
            assert_eq!(w[0].out_dim(), w[1].in_dim(), "layer widths must chain");
        }
        Self { layers, activations }
    }

    pub fn init<R: Rng + ?Sized>(widths: &[usize], activations: &[Activation], rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], rng))
            .collect();
        Self::new(layers, activations.to_vec())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            activations: self.activations.clone(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, NnError> {
        let mut h = x.to_owned();
        for (layer, &act) in self.layers.iter().zip(&self.activations) {
            h = layer.forward(h.view(), act)?;
        }
        Ok(h)
    }

    /// Forward pass that overwrites `tape` with the values backward needs.
    pub fn forward_recorded(&self, x: ArrayView1<'_, f64>, tape: &mut GradientTape) -> Result<Array1<f64>, NnError> {
        tape.clear();
        tape.activations.push(x.to_owned());
        for (layer, &act) in self.layers.iter().zip(&self.activations) {
            let h = layer.forward(tape.activations.last().unwrap().view(), act)?;
            tape.activations.push(h);
        }
        Ok(tape.activations.last().unwrap().clone())
    }

    /// Backpropagates `upstream` (gradient w.r.t. the network output) through
    /// the recorded pass, accumulating into `grads`. Returns the input gradient.
    pub fn backward(
        &self,
        tape: &GradientTape,
        upstream: ArrayView1<'_, f64>,
        grads: &mut Mlp,
    ) -> Result<Array1<f64>, NnError> {
        if tape.activations.len() != self.layers.len() + 1 {
            return Err(NnError::EmptyTape);
        }
        check_dim(self.out_dim(), upstream.len())?;
        let mut g = upstream.to_owned();
        for i in (0..self.layers.len()).rev() {
            g = self.layers[i].backward(
                tape.activations[i].view(),
                tape.activations[i + 1].view(),
                self.activations[i],
                g.view(),
                &mut grads.layers[i],
            );
        }
        Ok(g)
    }

    pub(crate) fn tensors_with_prefix(&self, prefix: &str) -> Vec<NamedTensor<'_>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.tensors_named(&format!("{prefix}layer{i}.")))
            .collect()
    }

    pub(crate) fn tensors_mut_all(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(DenseLayer::tensors_mut_all).collect()
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<NamedTensor<'_>> {
        self.tensors_with_prefix("")
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.tensors_mut_all()
    }
}

/// Softmax restricted to `mask`: masked logits receive `-MASK_PENALTY`
/// before a max-shifted exponentiation, so their probability is exactly zero.
pub fn masked_softmax(logits: ArrayView1<'_, f64>, mask: &[bool]) -> Result<Array1<f64>, NnError> {
    check_dim(logits.len(), mask.len())?;
    if !mask.iter().any(|&b| b) {
        return Err(NnError::EmptyMask);
    }
    let shifted: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&z, &keep)| if keep { z } else { z - MASK_PENALTY })
        .collect();
    let max = shifted
        .iter()
        .zip(mask)
        .filter(|(_, &keep)| keep)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Array1<f64> = shifted
        .iter()
        .zip(mask)
        .map(|(&z, &keep)| if keep { (z - max).exp() } else { 0.0 })
        .collect();
    let sum = out.sum();
    out /= sum;
    Ok(out)
}

/// Gradient w.r.t. the logits given the gradient w.r.t. the softmax output.
pub fn softmax_backward(probs: ArrayView1<'_, f64>, upstream: ArrayView1<'_, f64>) -> Array1<f64> {
    let dot: f64 = probs.iter().zip(upstream.iter()).map(|(p, u)| p * u).sum();
    probs
        .iter()
        .zip(upstream.iter())
        .map(|(&p, &u)| p * (u - dot))
        .collect()
}

/// Shannon entropy (nats) over the non-zero entries.
pub fn entropy(probs: ArrayView1<'_, f64>) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// d entropy / d logits for a softmax distribution: `-p_j (ln p_j + H)`.
pub fn entropy_logit_grad(probs: ArrayView1<'_, f64>) -> Array1<f64> {
    let h = entropy(probs);
    probs
        .mapv(|p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
}

/// d ln p_a / d logits for a softmax distribution: `1[j = a] - p_j`.
pub fn log_prob_logit_grad(probs: ArrayView1<'_, f64>, action: usize) -> Array1<f64> {
    let mut g = -probs.to_owned();
    g[action] += 1.0;
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Ascend,
    Descend,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    /// `p ← p ± lr·g`.
    Plain,
    /// Bias-corrected first/second moment step.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    lr: f64,
    kind: OptimizerKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Optimizer {
    pub fn new(lr: f64, kind: OptimizerKind) -> Result<Self, NnError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NnError::LearningRate(lr));
        }
        Ok(Self {
            lr,
            kind,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        })
    }

    pub fn plain(lr: f64) -> Result<Self, NnError> {
        Self::new(lr, OptimizerKind::Plain)
    }

    pub fn adam(lr: f64) -> Result<Self, NnError> {
        Self::new(lr, OptimizerKind::default())
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Nothing is modified when any gradient is non-finite.
    pub fn apply_update<P: Parameters + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &P,
        direction: Direction,
    ) -> Result<(), NnError> {
        let grad_tensors = grads.tensors();
        for g in &grad_tensors {
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient(g.name.clone()));
            }
        }
        let sign = match direction {
            Direction::Ascend => 1.0,
            Direction::Descend => -1.0,
        };
        let targets = params.tensors_mut();
        if targets.len() != grad_tensors.len() {
            return Err(NnError::Layout(format!(
                "{} parameter tensors vs {} gradient tensors",
                targets.len(),
                grad_tensors.len()
            )));
        }
        for (p, g) in targets.iter().zip(&grad_tensors) {
            if p.len() != g.values.len() {
                return Err(NnError::Layout(format!("tensor `{}` size differs", g.name)));
            }
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Plain => {
                for (p, g) in targets.into_iter().zip(&grad_tensors) {
                    for (pi, gi) in p.iter_mut().zip(g.values) {
                        *pi += sign * self.lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if self.first.is_empty() {
                    self.first = grad_tensors.iter().map(|g| vec![0.0; g.values.len()]).collect();
                    self.second = self.first.clone();
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (k, (p, g)) in targets.into_iter().zip(&grad_tensors).enumerate() {
                    let (m, v) = (&mut self.first[k], &mut self.second[k]);
                    for i in 0..p.len() {
                        let gi = g.values[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] += sign * self.lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_affine(layer: &DenseLayer, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; layer.out_dim()];
        for j in 0..layer.out_dim() {
            let mut acc = layer.bias[j];
            for i in 0..layer.in_dim() {
                acc += x[i] * layer.weights[[i, j]];
            }
            out[j] = acc;
        }
        out
    }

    #[test]
    fn affine_relu_examples() {
        let mut layer = DenseLayer::zeros(2, 2);
        layer.weights = Array2::eye(2);
        assert_eq!(affine_relu(&layer, array![1.0, -2.0].view()).unwrap(), array![1.0, 0.0]);
        let zero = DenseLayer::zeros(3, 2);
        assert_eq!(affine_relu(&zero, array![0.0, 0.0, 0.0].view()).unwrap(), array![0.0, 0.0]);
        assert_eq!(
            affine_relu(&zero, array![1.0].view()),
            Err(NnError::Dimension { expected: 3, got: 1 })
        );
    }

    #[test]
    fn affine_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut layer = DenseLayer::init(5, 4, &mut rng);
            layer.bias = Array1::from_shape_simple_fn(4, || rng.random_range(-1.0..1.0));
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = layer.affine(ArrayView1::from(&x)).unwrap();
            let want = naive_affine(&layer, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
            let relu = affine_relu(&layer, ArrayView1::from(&x)).unwrap();
            for (g, w) in relu.iter().zip(&want) {
                assert!((g - w.max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_softmax_examples() {
        let p = masked_softmax(array![3.0, -1.0, 7.0].view(), &[false, true, false]).unwrap();
        assert_eq!(p, array![0.0, 1.0, 0.0]);

        let p = masked_softmax(Array1::from_elem(5, 0.5).view(), &[true, false, true, true, false]).unwrap();
        for (i, &v) in p.iter().enumerate() {
            let want = if [0, 2, 3].contains(&i) { 1.0 / 3.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-15);
        }

        let p = masked_softmax(array![2.0, 1.0, 0.0].view(), &[true, true, false]).unwrap();
        let (e2, e1) = (2f64.exp(), 1f64.exp());
        assert!((p[0] - e2 / (e2 + e1)).abs() < 1e-15);
        assert!((p[1] - e1 / (e2 + e1)).abs() < 1e-15);
        assert_eq!(p[2], 0.0);

        assert_eq!(
            masked_softmax(array![1.0, 2.0].view(), &[false, false]),
            Err(NnError::EmptyMask)
        );
    }

    #[test]
    fn masked_softmax_is_stable_for_large_logits() {
        let p = masked_softmax(array![1000.0, 999.0, -1000.0].view(), &[true, true, true]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bias_gradient_of_sum_is_ones() {
        let net = Mlp::new(vec![DenseLayer::zeros(3, 4)], vec![Activation::Identity]);
        let mut tape = GradientTape::new();
        net.forward_recorded(array![0.3, -1.0, 2.0].view(), &mut tape).unwrap();
        let mut grads = net.zeros_like();
        net.backward(&tape, Array1::ones(4).view(), &mut grads).unwrap();
        assert_eq!(grads.layers[0].bias, Array1::<f64>::ones(4));
    }

    #[test]
    fn backward_without_forward_fails() {
        let net = Mlp::new(vec![DenseLayer::zeros(2, 2)], vec![Activation::Relu]);
        let mut grads = net.zeros_like();
        assert_eq!(
            net.backward(&GradientTape::new(), array![1.0, 1.0].view(), &mut grads),
            Err(NnError::EmptyTape)
        );
    }

    #[test]
    fn masked_logit_gets_zero_gradient() {
        let probs = masked_softmax(array![0.3, 1.2, -0.4].view(), &[true, false, true]).unwrap();
        let g = softmax_backward(probs.view(), array![1.0, 5.0, -2.0].view());
        assert_eq!(g[1], 0.0);
        assert_eq!(entropy_logit_grad(probs.view())[1], 0.0);
        assert_eq!(log_prob_logit_grad(probs.view(), 0)[1], 0.0);
    }

    /// Sum of sigmoid(output) as a scalar objective, for finite differences.
    fn objective(net: &Mlp, x: &Array1<f64>, w: &Array1<f64>) -> f64 {
        net.forward(x.view()).unwrap().iter().zip(w).map(|(o, wi)| o * wi).sum()
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..10 {
            let mut net = Mlp::init(
                &[4, 6, 5, 3],
                &[Activation::Relu, Activation::Sigmoid, Activation::Identity],
                &mut rng,
            );
            for l in &mut net.layers {
                l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
            let x = Array1::from_shape_simple_fn(4, || rng.random_range(-1.0..1.0));
            let w = Array1::from_shape_simple_fn(3, || rng.random_range(-1.0..1.0));
            let mut tape = GradientTape::new();
            net.forward_recorded(x.view(), &mut tape).unwrap();
            let mut grads = net.zeros_like();
            net.backward(&tape, w.view(), &mut grads).unwrap();
            let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.values.to_vec()).collect();
            let h = 1e-5;
            let n = analytic.len();
            for k in 0..n {
                let mut plus = net.clone();
                let mut minus = net.clone();
                bump(&mut plus, k, h);
                bump(&mut minus, k, -h);
                let fd = (objective(&plus, &x, &w) - objective(&minus, &x, &w)) / (2.0 * h);
                let a = analytic[k];
                let denom = a.abs().max(fd.abs()).max(1e-6);
                // ReLU kinks make a handful of coordinates non-differentiable
                if (a - fd).abs() / denom >= 1e-4 {
                    assert!((a - fd).abs() < 1e-6, "coord {k}: analytic {a}, fd {fd}");
                }
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    fn bump(net: &mut Mlp, mut k: usize, h: f64) {
        for t in net.tensors_mut() {
            if k < t.len() {
                t[k] += h;
                return;
            }
            k -= t.len();
        }
    }

    #[test]
    fn plain_update_examples() {
        let mut p = DenseLayer::zeros(1, 1);
        let mut g = DenseLayer::zeros(1, 1);
        g.weights[[0, 0]] = 1.0;
        let mut opt = Optimizer::plain(0.1).unwrap();
        opt.apply_update(&mut p, &g, Direction::Descend).unwrap();
        assert!((p.weights[[0, 0]] + 0.1).abs() < 1e-15);
        assert_eq!(p.bias[0], 0.0);

        // two steps at lr equal one step at 2 lr
        let mut a = DenseLayer::zeros(1, 1);
        let mut b = DenseLayer::zeros(1, 1);
        let mut opt2 = Optimizer::plain(0.2).unwrap();
        opt.apply_update(&mut a, &g, Direction::Ascend).unwrap();
        opt.apply_update(&mut a, &g, Direction::Ascend).unwrap();
        opt2.apply_update(&mut b, &g, Direction::Ascend).unwrap();
        assert!((a.weights[[0, 0]] - b.weights[[0, 0]]).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_identity_for_both_optimizers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = DenseLayer::init(3, 2, &mut rng);
        let zeros = DenseLayer::zeros(3, 2);
        for mut opt in [Optimizer::plain(0.5).unwrap(), Optimizer::adam(0.5).unwrap()] {
            let mut p = layer.clone();
            opt.apply_update(&mut p, &zeros, Direction::Descend).unwrap();
            assert_eq!(p, layer);
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_by_name() {
        let mut p = DenseLayer::zeros(1, 1);
        let mut g = DenseLayer::zeros(1, 1);
        g.bias[0] = f64::NAN;
        let err = Optimizer::adam(0.1)
            .unwrap()
            .apply_update(&mut p, &g, Direction::Descend)
            .unwrap_err();
        assert_eq!(err, NnError::NonFiniteGradient("bias".into()));
        assert_eq!(p, DenseLayer::zeros(1, 1));
        assert!(Optimizer::plain(0.0).is_err());
    }
}

//! Bernoulli–Bernoulli RBM trained with contrastive divergence.
//!
//! Energy `E(v, h) = -aᵀv - bᵀh - vᵀWh`; row `i` of `W` is the embedding of
//! entity `i`.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EpochLoss};
use crate::nn::{sigmoid, Direction, NamedTensor, Optimizer, OptimizerKind, Parameters};

#[derive(Clone, Debug, PartialEq)]
pub struct RbmParams {
    /// `m × k`
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl RbmParams {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            weights: Array2::zeros((visible, hidden)),
            visible_bias: Array1::zeros(visible),
            hidden_bias: Array1::zeros(hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(visible: usize, hidden: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (visible + hidden) as f64).sqrt();
        Self {
            weights: Array2::from_shape_simple_fn((visible, hidden), || rng.random_range(-limit..limit)),
            ..Self::zeros(visible, hidden)
        }
    }

    pub fn visible_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden_count(&self) -> usize {
        self.weights.ncols()
    }

    /// `P(h_j = 1 | v) = σ(b_j + Σ_i v_i W_ij)`
    pub fn hidden_probs(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        (v.dot(&self.weights) + &self.hidden_bias).mapv_into(sigmoid)
    }

    /// `P(v_i = 1 | h) = σ(a_i + Σ_j W_ij h_j)`
    pub fn visible_probs(&self, h: ArrayView1<'_, f64>) -> Array1<f64> {
        (self.weights.dot(&h) + &self.visible_bias).mapv_into(sigmoid)
    }

    pub fn entity_embedding(&self, id: usize) -> Result<ArrayView1<'_, f64>, EmbeddingError> {
        if id >= self.visible_count() {
            return Err(EmbeddingError::EntityOutOfRange {
                id,
                m: self.visible_count(),
            });
        }
        Ok(self.weights.row(id))
    }

    /// Mean binary cross-entropy of the mean-field reconstruction `v → h → v`.
    pub fn reconstruction_cross_entropy(&self, data: &[Array1<f64>]) -> f64 {
        let total: f64 = data
            .iter()
            .map(|v| {
                let recon = self.visible_probs(self.hidden_probs(v.view()).view());
                v.iter()
                    .zip(recon.iter())
                    .map(|(&x, &p)| {
                        let p = p.clamp(1e-12, 1.0 - 1e-12);
                        -(x * p.ln() + (1.0 - x) * (1.0 - p).ln())
                    })
                    .sum::<f64>()
            })
            .sum();
        total / data.len() as f64
    }
}

impl Parameters for RbmParams {
    fn tensors(&self) -> Vec<NamedTensor<'_>> {
        vec![
            NamedTensor {
                name: "rbm.weights".into(),
                shape: self.weights.shape().to_vec(),
                values: self.weights.as_slice().expect("standard layout"),
            },
            NamedTensor {
                name: "rbm.visible_bias".into(),
                shape: self.visible_bias.shape().to_vec(),
                values: self.visible_bias.as_slice().expect("standard layout"),
            },
            NamedTensor {
                name: "rbm.hidden_bias".into(),
                shape: self.hidden_bias.shape().to_vec(),
                values: self.hidden_bias.as_slice().expect("standard layout"),
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weights.as_slice_mut().expect("standard layout"),
            self.visible_bias.as_slice_mut().expect("standard layout"),
            self.hidden_bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Sufficient statistics `(v hᵀ, v, h)` with `h` replaced by `P(h | v)`.
pub fn phase_statistics(params: &RbmParams, v: ArrayView1<'_, f64>) -> RbmParams {
    let h = params.hidden_probs(v);
    let mut weights = Array2::zeros(params.weights.raw_dim());
    for (i, &vi) in v.iter().enumerate() {
        if vi != 0.0 {
            weights.row_mut(i).scaled_add(vi, &h);
        }
    }
    RbmParams {
        weights,
        visible_bias: v.to_owned(),
        hidden_bias: h,
    }
}

fn bernoulli<R: Rng + ?Sized>(probs: &Array1<f64>, rng: &mut R) -> Array1<f64> {
    probs.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// CD-k log-likelihood gradient estimate for one sample: positive-phase
/// statistics at `v0` minus negative-phase statistics at the chain end.
///
/// Hidden states are sampled binary along the chain; intermediate visible
/// states are sampled, the final one is left as probabilities. Returns the
/// gradient and the chain end.
pub fn cd_gradient<R: Rng + ?Sized>(
    params: &RbmParams,
    v0: ArrayView1<'_, f64>,
    steps: usize,
    rng: &mut R,
) -> (RbmParams, Array1<f64>) {
    let positive = phase_statistics(params, v0);
    let mut v = v0.to_owned();
    let mut h = bernoulli(&positive.hidden_bias, rng);
    for step in 0..steps.max(1) {
        let pv = params.visible_probs(h.view());
        if step + 1 == steps.max(1) {
            v = pv;
        } else {
            v = bernoulli(&pv, rng);
            h = bernoulli(&params.hidden_probs(v.view()), rng);
        }
    }
    let negative = phase_statistics(params, v.view());
    let grad = RbmParams {
        weights: positive.weights - negative.weights,
        visible_bias: positive.visible_bias - negative.visible_bias,
        hidden_bias: positive.hidden_bias - negative.hidden_bias,
    };
    (grad, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbmConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub cd_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RbmConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 100,
            lr: 1e-3,
            cd_steps: 1,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RbmTraining {
    pub params: RbmParams,
    /// Reconstruction cross-entropy measured after each epoch.
    pub log: Vec<EpochLoss>,
}

pub fn rbm_train(characters: &[Vec<bool>], cfg: &RbmConfig) -> Result<RbmTraining, EmbeddingError> {
    let first = characters.first().ok_or(EmbeddingError::EmptyTrainingSet)?;
    if cfg.hidden == 0 {
        return Err(EmbeddingError::ZeroHidden);
    }
    let m = first.len();
    let data: Vec<Array1<f64>> = characters
        .iter()
        .enumerate()
        .map(|(row, c)| {
            if c.len() != m {
                Err(EmbeddingError::Width {
                    row,
                    expected: m,
                    got: c.len(),
                })
            } else {
                Ok(c.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            }
        })
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = RbmParams::init(m, cfg.hidden, &mut rng);
    let mut opt = Optimizer::new(cfg.lr, OptimizerKind::default())?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut acc = RbmParams::zeros(m, cfg.hidden);
            for &i in chunk {
                let (g, _) = cd_gradient(&params, data[i].view(), cfg.cd_steps, &mut rng);
                acc.weights += &g.weights;
                acc.visible_bias += &g.visible_bias;
                acc.hidden_bias += &g.hidden_bias;
            }
            let scale = 1.0 / chunk.len() as f64;
            for t in acc.tensors_mut() {
                t.iter_mut().for_each(|x| *x *= scale);
            }
            opt.apply_update(&mut params, &acc, Direction::Ascend)?;
        }
        let loss = params.reconstruction_cross_entropy(&data);
        log::debug!("rbm epoch {epoch}: reconstruction cross-entropy {loss:.5}");
        log.push(EpochLoss { epoch, loss });
    }
    Ok(RbmTraining { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn shape_contract() {
        let data: Vec<Vec<bool>> = (0..10).map(|i| (0..8).map(|j| (i + j) % 3 == 0).collect()).collect();
        let cfg = RbmConfig {
            hidden: 4,
            epochs: 2,
            ..Default::default()
        };
        let trained = rbm_train(&data, &cfg).unwrap();
        assert_eq!(trained.params.weights.shape(), &[8, 4]);
        assert_eq!(trained.log.len(), 2);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert_eq!(
            rbm_train(&[], &RbmConfig::default()).unwrap_err(),
            EmbeddingError::EmptyTrainingSet
        );
    }

    #[test]
    fn entity_embedding_is_a_row() {
        let mut p = RbmParams::zeros(4, 4);
        p.weights = Array2::eye(4);
        assert_eq!(p.entity_embedding(2).unwrap(), array![0.0, 0.0, 1.0, 0.0].view());
        assert_eq!(p.entity_embedding(0).unwrap().len(), 4);
        assert!(p.entity_embedding(4).is_err());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data: Vec<Vec<bool>> = (0..40).map(|i| (0..6).map(|j| (i * 7 + j) % 4 == 0).collect()).collect();
        let cfg = RbmConfig {
            hidden: 3,
            epochs: 3,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(rbm_train(&data, &cfg).unwrap().params, rbm_train(&data, &cfg).unwrap().params);
    }
}

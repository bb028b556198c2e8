//! Two-layer sigmoid autoencoder with tied decoder weights.
//!
//! Encoder `x → σ(x W₁ + b₁) → σ(· W₂ + b₂) = code`, decoder
//! `code → σ(· W₂ᵀ + c₁) → σ(· W₁ᵀ + c₂) = x̂`, trained on binary
//! cross-entropy against inputs in `[0, 1]`.

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EpochLoss};
use crate::nn::{sigmoid, DenseLayer, Direction, NamedTensor, Optimizer, OptimizerKind, Parameters};

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderParams {
    /// `l → d_h`
    pub encoder_hidden: DenseLayer,
    /// `d_h → d_e`
    pub encoder_code: DenseLayer,
    pub decoder_hidden_bias: Array1<f64>,
    pub decoder_output_bias: Array1<f64>,
}

/// Intermediate values of one pass, kept for the backward sweep.
struct Pass {
    hidden: Array1<f64>,
    code: Array1<f64>,
    dec_hidden: Array1<f64>,
    logits: Array1<f64>,
}

fn bce_with_logits(x: f64, z: f64) -> f64 {
    z.max(0.0) - x * z + (-z.abs()).exp().ln_1p()
}

impl AutoencoderParams {
    pub fn zeros(input: usize, hidden: usize, code: usize) -> Self {
        Self {
            encoder_hidden: DenseLayer::zeros(input, hidden),
            encoder_code: DenseLayer::zeros(hidden, code),
            decoder_hidden_bias: Array1::zeros(hidden),
            decoder_output_bias: Array1::zeros(input),
        }
    }

    pub fn init<R: rand::Rng + ?Sized>(input: usize, hidden: usize, code: usize, rng: &mut R) -> Self {
        Self {
            encoder_hidden: DenseLayer::init(input, hidden, rng),
            encoder_code: DenseLayer::init(hidden, code, rng),
            decoder_hidden_bias: Array1::zeros(hidden),
            decoder_output_bias: Array1::zeros(input),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_hidden.in_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder_code.out_dim()
    }

    fn check_width(&self, x: &[f64]) -> Result<(), EmbeddingError> {
        if x.len() != self.input_dim() {
            return Err(EmbeddingError::Width {
                row: 0,
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn pass(&self, x: ArrayView1<'_, f64>) -> Pass {
        let hidden = (x.dot(&self.encoder_hidden.weights) + &self.encoder_hidden.bias).mapv_into(sigmoid);
        let code = (hidden.dot(&self.encoder_code.weights) + &self.encoder_code.bias).mapv_into(sigmoid);
        let dec_hidden = (self.encoder_code.weights.dot(&code) + &self.decoder_hidden_bias).mapv_into(sigmoid);
        let logits = self.encoder_hidden.weights.dot(&dec_hidden) + &self.decoder_output_bias;
        Pass {
            hidden,
            code,
            dec_hidden,
            logits,
        }
    }

    /// Patient representation `p_e`.
    pub fn encode_patient(&self, features: &[f64]) -> Result<Array1<f64>, EmbeddingError> {
        self.check_width(features)?;
        let x = ArrayView1::from(features);
        let hidden = (x.dot(&self.encoder_hidden.weights) + &self.encoder_hidden.bias).mapv_into(sigmoid);
        Ok((hidden.dot(&self.encoder_code.weights) + &self.encoder_code.bias).mapv_into(sigmoid))
    }

    pub fn decode(&self, code: ArrayView1<'_, f64>) -> Array1<f64> {
        let dec_hidden = (self.encoder_code.weights.dot(&code) + &self.decoder_hidden_bias).mapv_into(sigmoid);
        (self.encoder_hidden.weights.dot(&dec_hidden) + &self.decoder_output_bias).mapv_into(sigmoid)
    }

    pub fn reconstruct(&self, features: &[f64]) -> Result<Array1<f64>, EmbeddingError> {
        self.check_width(features)?;
        Ok(self.pass(ArrayView1::from(features)).logits.mapv_into(sigmoid))
    }

    /// Summed binary cross-entropy of the reconstruction of one sample.
    pub fn loss(&self, features: &[f64]) -> Result<f64, EmbeddingError> {
        self.check_width(features)?;
        let pass = self.pass(ArrayView1::from(features));
        Ok(features
            .iter()
            .zip(pass.logits.iter())
            .map(|(&x, &z)| bce_with_logits(x, z))
            .sum())
    }

    /// Adds the gradient of [`loss`](Self::loss) at `features` into `grads`
    /// and returns the loss.
    pub fn accumulate_gradient(&self, features: &[f64], grads: &mut AutoencoderParams) -> Result<f64, EmbeddingError> {
        self.check_width(features)?;
        let x = ArrayView1::from(features);
        let p = self.pass(x);
        let w1 = &self.encoder_hidden.weights;
        let w2 = &self.encoder_code.weights;

        // output layer: d loss / d logits = x̂ - x
        let d_out: Array1<f64> = p
            .logits
            .iter()
            .zip(x.iter())
            .map(|(&z, &xi)| sigmoid(z) - xi)
            .collect();
        for (i, &d) in d_out.iter().enumerate() {
            grads.encoder_hidden.weights.row_mut(i).scaled_add(d, &p.dec_hidden);
        }
        grads.decoder_output_bias += &d_out;

        let d_dec_hidden = d_out.dot(w1) * p.dec_hidden.mapv(|g| g * (1.0 - g));
        for (j, &d) in d_dec_hidden.iter().enumerate() {
            grads.encoder_code.weights.row_mut(j).scaled_add(d, &p.code);
        }
        grads.decoder_hidden_bias += &d_dec_hidden;

        let d_code = d_dec_hidden.dot(w2) * p.code.mapv(|c| c * (1.0 - c));
        for (j, &hj) in p.hidden.iter().enumerate() {
            grads.encoder_code.weights.row_mut(j).scaled_add(hj, &d_code);
        }
        grads.encoder_code.bias += &d_code;

        let d_hidden = w2.dot(&d_code) * p.hidden.mapv(|h| h * (1.0 - h));
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                grads.encoder_hidden.weights.row_mut(i).scaled_add(xi, &d_hidden);
            }
        }
        grads.encoder_hidden.bias += &d_hidden;

        Ok(x.iter()
            .zip(p.logits.iter())
            .map(|(&xi, &z)| bce_with_logits(xi, z))
            .sum())
    }
}

impl Parameters for AutoencoderParams {
    fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut out = Vec::with_capacity(6);
        for (name, layer) in [("ae.encoder_hidden", &self.encoder_hidden), ("ae.encoder_code", &self.encoder_code)] {
            out.push(NamedTensor {
                name: format!("{name}.weights"),
                shape: layer.weights.shape().to_vec(),
                values: layer.weights.as_slice().expect("standard layout"),
            });
            out.push(NamedTensor {
                name: format!("{name}.bias"),
                shape: layer.bias.shape().to_vec(),
                values: layer.bias.as_slice().expect("standard layout"),
            });
        }
        out.push(NamedTensor {
            name: "ae.decoder_hidden_bias".into(),
            shape: self.decoder_hidden_bias.shape().to_vec(),
            values: self.decoder_hidden_bias.as_slice().expect("standard layout"),
        });
        out.push(NamedTensor {
            name: "ae.decoder_output_bias".into(),
            shape: self.decoder_output_bias.shape().to_vec(),
            values: self.decoder_output_bias.as_slice().expect("standard layout"),
        });
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder_hidden.tensors_mut();
        out.extend(self.encoder_code.tensors_mut());
        out.push(self.decoder_hidden_bias.as_slice_mut().expect("standard layout"));
        out.push(self.decoder_output_bias.as_slice_mut().expect("standard layout"));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeConfig {
    pub hidden: usize,
    pub code: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            code: 32,
            epochs: 100,
            lr: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AeTraining {
    pub params: AutoencoderParams,
    /// Mean per-sample BCE measured after each epoch.
    pub log: Vec<EpochLoss>,
}

pub fn ae_train(features: &[Vec<f64>], cfg: &AeConfig) -> Result<AeTraining, EmbeddingError> {
    let first = features.first().ok_or(EmbeddingError::EmptyTrainingSet)?;
    if cfg.hidden == 0 || cfg.code == 0 {
        return Err(EmbeddingError::ZeroHidden);
    }
    let l = first.len();
    for (row, f) in features.iter().enumerate() {
        if f.len() != l {
            return Err(EmbeddingError::Width {
                row,
                expected: l,
                got: f.len(),
            });
        }
        if let Some((col, &value)) = f.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(EmbeddingError::OutOfUnitInterval { row, col, value });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = AutoencoderParams::init(l, cfg.hidden, cfg.code, &mut rng);
    let mut opt = Optimizer::new(cfg.lr, OptimizerKind::default())?;
    let mut grads = AutoencoderParams::zeros(l, cfg.hidden, cfg.code);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            grads.fill_zero();
            for &i in chunk {
                params.accumulate_gradient(&features[i], &mut grads)?;
            }
            let scale = 1.0 / chunk.len() as f64;
            for t in grads.tensors_mut() {
                t.iter_mut().for_each(|x| *x *= scale);
            }
            opt.apply_update(&mut params, &grads, Direction::Descend)?;
        }
        let mut total = 0.0;
        for f in features {
            total += params.loss(f)?;
        }
        let loss = total / features.len() as f64;
        log::debug!("autoencoder epoch {epoch}: bce {loss:.5}");
        log.push(EpochLoss { epoch, loss });
    }
    Ok(AeTraining { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn bump(p: &mut AutoencoderParams, mut k: usize, h: f64) {
        for t in p.tensors_mut() {
            if k < t.len() {
                t[k] += h;
                return;
            }
            k -= t.len();
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut p = AutoencoderParams::init(5, 4, 3, &mut rng);
            for t in p.tensors_mut() {
                t.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
            }
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let mut g = AutoencoderParams::zeros(5, 4, 3);
            p.accumulate_gradient(&x, &mut g).unwrap();
            let analytic: Vec<f64> = g.tensors().iter().flat_map(|t| t.values.to_vec()).collect();
            let h = 1e-5;
            for (k, &a) in analytic.iter().enumerate() {
                let (mut plus, mut minus) = (p.clone(), p.clone());
                bump(&mut plus, k, h);
                bump(&mut minus, k, -h);
                let fd = (plus.loss(&x).unwrap() - minus.loss(&x).unwrap()) / (2.0 * h);
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-4 || (a - fd).abs() < 1e-9, "coord {k}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn rejects_unscaled_features() {
        let err = ae_train(&[vec![0.2, 1.7]], &AeConfig::default()).unwrap_err();
        assert!(matches!(err, EmbeddingError::OutOfUnitInterval { col: 1, .. }));
        assert!(err.to_string().contains("scaled"));
        assert_eq!(ae_train(&[], &AeConfig::default()).unwrap_err(), EmbeddingError::EmptyTrainingSet);
    }

    #[test]
    fn code_width_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<Vec<f64>> = (0..20).map(|_| (0..33).map(|_| rng.random::<f64>()).collect()).collect();
        let cfg = AeConfig {
            hidden: 16,
            code: 8,
            epochs: 2,
            ..Default::default()
        };
        let trained = ae_train(&data, &cfg).unwrap();
        let code = trained.params.encode_patient(&data[0]).unwrap();
        assert_eq!(code.len(), 8);
        assert_eq!(code, trained.params.encode_patient(&data[0]).unwrap());
        assert!(trained.params.encode_patient(&data[0][..5]).is_err());
    }

    #[test]
    fn zero_weights_code_is_sigmoid_of_zero() {
        let p = AutoencoderParams::zeros(4, 3, 2);
        let code = p.encode_patient(&[0.0; 4]).unwrap();
        assert!(code.iter().all(|&c| c == 0.5));
    }

    #[test]
    fn constant_dataset_reconstructs_the_constant() {
        let data = vec![vec![0.3; 6]; 16];
        let cfg = AeConfig {
            hidden: 4,
            code: 2,
            epochs: 400,
            lr: 1e-2,
            batch_size: 16,
            seed: 2,
        };
        let trained = ae_train(&data, &cfg).unwrap();
        let recon = trained.params.reconstruct(&data[0]).unwrap();
        assert!(recon.iter().all(|&r| (r - 0.3).abs() < 0.02), "{recon:?}");
        assert!(trained.log.last().unwrap().loss < trained.log[0].loss);
    }

    #[test]
    fn memorizes_a_single_vector() {
        let x = vec![0.1, 0.9, 0.5, 0.25, 0.75, 0.6, 0.15, 0.85];
        let cfg = AeConfig {
            hidden: 8,
            code: 4,
            epochs: 3000,
            lr: 1e-2,
            batch_size: 1,
            seed: 4,
        };
        let trained = ae_train(std::slice::from_ref(&x), &cfg).unwrap();
        let code = trained.params.encode_patient(&x).unwrap();
        let recon = trained.params.decode(code.view());
        for (r, t) in recon.iter().zip(&x) {
            assert!((r - t).abs() < 0.05, "{recon:?}");
        }
    }
}

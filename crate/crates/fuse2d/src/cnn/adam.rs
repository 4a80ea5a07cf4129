//! Adam optimizer with bias correction and per-layer freezing.

use super::model::{Gradients, Model};
use super::Scalar;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl<F: Scalar> Model<F> {
    /// One Adam update over all trainable layers.
    ///
    /// Frozen layers are skipped entirely: their parameters, moments and step
    /// counts stay bit-identical. Each unfrozen layer advances its own step
    /// count, so bias correction stays exact when layers start training at
    /// different times.
    pub fn adam_step(&mut self, grads: &Gradients<F>, cfg: &AdamConfig) -> Result<()> {
        if grads.layers.len() != self.layers().len() {
            return Err(Error::InvalidModel(format!(
                "gradients for {} layers, model has {}",
                grads.layers.len(),
                self.layers().len()
            )));
        }
        let lr = F::cast(cfg.learning_rate);
        let b1 = F::cast(cfg.beta1);
        let b2 = F::cast(cfg.beta2);
        let eps = F::cast(cfg.epsilon);
        let one = F::one();

        for li in 0..self.layers().len() {
            {
                let layer = &self.layers()[li];
                if layer.frozen() || !layer.has_params() {
                    continue;
                }
            }
            let lg = &grads.layers[li];
            for g in lg.d_weights.iter().chain(&lg.d_bias) {
                if !g.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite gradient in layer {li}"
                    )));
                }
            }
            let layer = self.layer_mut(li);
            layer.step += 1;
            let t = layer.step;
            // Bias corrections computed in f64 for accuracy, then narrowed.
            let bc1 = F::cast(1.0 - cfg.beta1.powi(t as i32));
            let bc2 = F::cast(1.0 - cfg.beta2.powi(t as i32));

            update_params(
                &mut layer.weights,
                &lg.d_weights,
                &mut layer.m_w,
                &mut layer.v_w,
                lr,
                b1,
                b2,
                eps,
                bc1,
                bc2,
                one,
            );
            update_params(
                &mut layer.bias,
                &lg.d_bias,
                &mut layer.m_b,
                &mut layer.v_b,
                lr,
                b1,
                b2,
                eps,
                bc1,
                bc2,
                one,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_params<F: Scalar>(
    params: &mut [F],
    grads: &[F],
    m: &mut [F],
    v: &mut [F],
    lr: F,
    b1: F,
    b2: F,
    eps: F,
    bc1: F,
    bc2: F,
    one: F,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::super::model::{init_model, LayerGrads, LayerSpec, Shape};
    use super::*;

    fn scalar_model() -> Model<f64> {
        // Input (1,1,1): the dense layer has 2 weights and 2 biases; we drive
        // only weight 0.
        let arch = vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ];
        let mut model: Model<f64> = init_model(&arch, Shape::new(1, 1, 1), 0).unwrap();
        model.set_params(1, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        model
    }

    fn grads_for(model: &Model<f64>, dense_w0: f64) -> Gradients<f64> {
        Gradients {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    d_weights: {
                        let mut g = vec![0.0; l.weights().len()];
                        if !g.is_empty() {
                            g[0] = dense_w0;
                        }
                        g
                    },
                    d_bias: vec![0.0; l.bias().len()],
                })
                .collect(),
        }
    }

    #[test]
    fn single_step_closed_form() {
        let mut model = scalar_model();
        let grads = grads_for(&model, 1.0);
        model.adam_step(&grads, &AdamConfig::default()).unwrap();
        // m_hat = 1, v_hat = 1: step = -lr / (1 + eps).
        let expect = -0.001 / (1.0 + 1e-8);
        let got = model.layers()[1].weights()[0];
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
    }

    #[test]
    fn trajectory_matches_scalar_oracle() {
        let mut model = scalar_model();
        let cfg = AdamConfig::default();

        // Independent scalar recurrence as the oracle.
        let mut w = 0.0f64;
        let mut m = 0.0f64;
        let mut v = 0.0f64;
        for t in 1..=25u32 {
            let g = (t as f64).sin() + 1.1;
            let grads = grads_for(&model, g);
            model.adam_step(&grads, &cfg).unwrap();

            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t as i32));
            let v_hat = v / (1.0 - cfg.beta2.powi(t as i32));
            w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);

            let got = model.layers()[1].weights()[0];
            assert!((got - w).abs() < 1e-9, "step {t}: {got} vs {w}");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let arch = vec![
            LayerSpec::Conv { filters: 4 },
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ];
        let mut model: Model<f32> = init_model(&arch, Shape::new(4, 4, 3), 8).unwrap();
        let before = model.clone();
        let grads = Gradients {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    d_weights: vec![0.0; l.weights().len()],
                    d_bias: vec![0.0; l.bias().len()],
                })
                .collect(),
        };
        model.adam_step(&grads, &AdamConfig::default()).unwrap();
        for (a, b) in model.layers().iter().zip(before.layers()) {
            assert_eq!(a.weights(), b.weights());
            assert_eq!(a.bias(), b.bias());
        }
        // Unfrozen layers still advanced their step counter.
        assert_eq!(model.layers()[0].step(), 1);
    }

    #[test]
    fn frozen_layer_state_is_bit_stable() {
        let arch = vec![
            LayerSpec::Conv { filters: 4 },
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ];
        let mut model: Model<f32> = init_model(&arch, Shape::new(4, 4, 3), 8).unwrap();
        model.freeze_features();
        let conv_before = model.layers()[0].clone();

        let grads = Gradients {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    d_weights: vec![1.0; l.weights().len()],
                    d_bias: vec![1.0; l.bias().len()],
                })
                .collect(),
        };
        for _ in 0..7 {
            model.adam_step(&grads, &AdamConfig::default()).unwrap();
        }
        let conv_after = &model.layers()[0];
        assert_eq!(conv_after.weights(), conv_before.weights());
        assert_eq!(conv_after.m_w, conv_before.m_w);
        assert_eq!(conv_after.v_w, conv_before.v_w);
        assert_eq!(conv_after.step(), 0);
        // The dense head did move.
        assert_ne!(model.layers()[3].weights()[0], 0.0);
        assert_eq!(model.layers()[3].step(), 7);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut model = scalar_model();
        let grads = grads_for(&model, f64::NAN);
        assert!(matches!(
            model.adam_step(&grads, &AdamConfig::default()),
            Err(Error::Diverged(_))
        ));
    }
}

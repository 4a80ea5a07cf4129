//! Finite-difference verification of the analytic gradients.
//!
//! The whole check runs in f64: for every parameter, the loss is evaluated at
//! +h and -h and the central difference is compared against the gradient from
//! backprop. Relative errors are floored at 1e-4 in the denominator so that
//! near-zero gradients are compared absolutely instead of amplifying
//! finite-difference noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::weighted_cross_entropy;
use super::model::{init_model, LayerSpec, Model, Shape};
use super::ImageBatch;
use crate::error::{Error, Result};

/// Denominator floor for the relative error.
const REL_FLOOR: f64 = 1e-4;

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over every parameter of every layer.
    pub max_rel_err: f64,
    /// Number of parameters checked.
    pub checked_params: usize,
    /// Worst relative error per parameterized layer.
    pub per_layer: Vec<(String, f64)>,
}

/// The small architecture used for gradient checking: one conv/pool block and
/// a dense head over an 8x8x3 input, covering every layer kind.
pub fn check_arch() -> (Vec<LayerSpec>, Shape) {
    (
        vec![
            LayerSpec::Conv { filters: 4 },
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8, relu: true },
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ],
        Shape::new(8, 8, 3),
    )
}

/// Runs the finite-difference sweep over a freshly initialized model.
pub fn run_gradient_check(
    arch: &[LayerSpec],
    input_shape: Shape,
    n_examples: usize,
    seed: u64,
    step: f64,
) -> Result<GradCheckReport> {
    if n_examples == 0 || step <= 0.0 {
        return Err(Error::InvalidConfig(
            "gradient check needs examples and a positive step".into(),
        ));
    }
    let mut model: Model<f64> = init_model(arch, input_shape, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));

    let example_len = input_shape.count();
    let mut batch = ImageBatch::empty(input_shape.h, input_shape.w, input_shape.c);
    for _ in 0..n_examples {
        let ex: Vec<f64> = (0..example_len).map(|_| rng.gen_range(0.05..0.95)).collect();
        batch.push(&ex);
    }
    let labels: Vec<u8> = (0..n_examples).map(|_| rng.gen_range(0..2u8)).collect();
    let weights: Vec<f64> = (0..n_examples).map(|_| rng.gen_range(0.5..1.5)).collect();

    let (_, cache) = model.forward_training(&batch)?;
    let analytic = model.backward(&cache, &labels, &weights)?;

    let loss_of = |m: &Model<f64>| -> Result<f64> {
        let (probs, _) = m.forward_training(&batch)?;
        weighted_cross_entropy(&probs, &labels, &weights)
    };

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut per_layer = Vec::new();
    for li in 0..model.layers.len() {
        if !model.layers[li].has_params() {
            continue;
        }
        let mut layer_max = 0.0f64;
        for is_bias in [false, true] {
            let n_params = if is_bias {
                model.layers[li].bias.len()
            } else {
                model.layers[li].weights.len()
            };
            for pi in 0..n_params {
                let set = |m: &mut Model<f64>, v: f64| {
                    if is_bias {
                        m.layers[li].bias[pi] = v;
                    } else {
                        m.layers[li].weights[pi] = v;
                    }
                };
                let original = if is_bias {
                    model.layers[li].bias[pi]
                } else {
                    model.layers[li].weights[pi]
                };
                set(&mut model, original + step);
                let up = loss_of(&model)?;
                set(&mut model, original - step);
                let down = loss_of(&model)?;
                set(&mut model, original);

                let fd = (up - down) / (2.0 * step);
                let g = if is_bias {
                    analytic.layers[li].d_bias[pi]
                } else {
                    analytic.layers[li].d_weights[pi]
                };
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(REL_FLOOR);
                layer_max = layer_max.max(rel);
                checked += 1;
            }
        }
        max_rel = max_rel.max(layer_max);
        let name = match model.layers[li].spec() {
            LayerSpec::Conv { filters } => format!("conv({filters})"),
            LayerSpec::Dense { units, .. } => format!("dense({units})"),
            other => format!("{other:?}"),
        };
        per_layer.push((name, layer_max));
    }

    Ok(GradCheckReport {
        max_rel_err: max_rel,
        checked_params: checked,
        per_layer,
    })
}

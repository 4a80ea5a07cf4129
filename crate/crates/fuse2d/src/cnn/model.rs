//! Layer and model definitions: shape validation, initialization, the
//! forward pass with activation caching, and exact backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::softmax;
use super::{ImageBatch, Scalar};
use crate::error::{Error, Result};

/// Spatial activation shape in HWC order. Flat vectors are `(1, 1, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Shape { h, w, c }
    }

    pub fn count(&self) -> usize {
        self.h * self.w * self.c
    }

    fn is_flat(&self) -> bool {
        self.h == 1 && self.w == 1
    }
}

/// One layer of the architecture.
///
/// Convolutions are fixed to 3x3 kernels, stride 1, zero "same" padding and
/// ReLU activation; pooling is 2x2 max with stride 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { filters: usize },
    MaxPool,
    Flatten,
    Dense { units: usize, relu: bool },
    Softmax,
}

/// A layer with its parameters, optimizer state and freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    pub(super) spec: LayerSpec,
    pub(super) in_shape: Shape,
    pub(super) out_shape: Shape,
    pub(super) weights: Vec<F>,
    pub(super) bias: Vec<F>,
    pub(super) m_w: Vec<F>,
    pub(super) v_w: Vec<F>,
    pub(super) m_b: Vec<F>,
    pub(super) v_b: Vec<F>,
    pub(super) step: u64,
    pub(super) frozen: bool,
}

impl<F: Scalar> Layer<F> {
    pub fn spec(&self) -> LayerSpec {
        self.spec
    }

    pub fn in_shape(&self) -> Shape {
        self.in_shape
    }

    pub fn out_shape(&self) -> Shape {
        self.out_shape
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn bias(&self) -> &[F] {
        &self.bias
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    /// Number of optimizer steps this layer's parameters have taken.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Adam state: step count and the moment vectors for weights and biases.
    pub fn optimizer_state(&self) -> (u64, &[F], &[F], &[F], &[F]) {
        (self.step, &self.m_w, &self.v_w, &self.m_b, &self.v_b)
    }

    pub fn has_params(&self) -> bool {
        !self.weights.is_empty()
    }

}

/// Gradients of one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<F> {
    pub d_weights: Vec<F>,
    pub d_bias: Vec<F>,
}

/// Gradients for the whole model, one entry per layer (empty for layers
/// without parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<LayerGrads<F>>,
}

/// Per-layer pooling argmax indices of one example.
type ArgmaxRecords = Vec<Vec<u32>>;

/// Cached activations of a training forward pass: for every example, the
/// input of each layer plus the final probabilities, and the pooling argmax
/// indices needed for backprop.
pub struct BatchCache<F> {
    pub(super) acts: Vec<Vec<Vec<F>>>,
    pub(super) argmax: Vec<Vec<Vec<u32>>>,
}

impl<F> BatchCache<F> {
    pub fn len(&self) -> usize {
        self.acts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acts.is_empty()
    }
}

/// The classifier: an ordered layer list over a fixed input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    pub(super) input_shape: Shape,
    pub(super) layers: Vec<Layer<F>>,
}

// ---------------------------------------------------------------------------
// Validation and initialization
// ---------------------------------------------------------------------------

pub(super) fn plan_shapes(arch: &[LayerSpec], input: Shape) -> Result<Vec<(Shape, Shape)>> {
    let bad = |msg: String| Err(Error::InvalidModel(msg));
    if arch.len() < 2 {
        return bad("architecture needs at least a Dense(2) and a Softmax".into());
    }
    match arch[arch.len() - 1] {
        LayerSpec::Softmax => {}
        other => return bad(format!("last layer must be Softmax, found {other:?}")),
    }
    match arch[arch.len() - 2] {
        LayerSpec::Dense { units: 2, relu: false } => {}
        other => {
            return bad(format!(
                "layer before Softmax must be Dense(2) without activation, found {other:?}"
            ))
        }
    }

    let mut shapes = Vec::with_capacity(arch.len());
    let mut shape = input;
    let mut seen_flatten = false;
    for (i, spec) in arch.iter().enumerate() {
        let out = match *spec {
            LayerSpec::Conv { filters } => {
                if seen_flatten {
                    return bad(format!("layer {i}: Conv after Flatten"));
                }
                if filters == 0 {
                    return bad(format!("layer {i}: Conv with zero filters"));
                }
                Shape::new(shape.h, shape.w, filters)
            }
            LayerSpec::MaxPool => {
                if seen_flatten {
                    return bad(format!("layer {i}: MaxPool after Flatten"));
                }
                if !shape.h.is_multiple_of(2) || !shape.w.is_multiple_of(2) {
                    return bad(format!(
                        "layer {i}: MaxPool needs even spatial dims, got {}x{}",
                        shape.h, shape.w
                    ));
                }
                Shape::new(shape.h / 2, shape.w / 2, shape.c)
            }
            LayerSpec::Flatten => {
                if seen_flatten {
                    return bad(format!("layer {i}: second Flatten"));
                }
                seen_flatten = true;
                Shape::new(1, 1, shape.count())
            }
            LayerSpec::Dense { units, .. } => {
                if !shape.is_flat() {
                    return bad(format!("layer {i}: Dense on unflattened input"));
                }
                if units == 0 {
                    return bad(format!("layer {i}: Dense with zero units"));
                }
                Shape::new(1, 1, units)
            }
            LayerSpec::Softmax => {
                if i != arch.len() - 1 {
                    return bad(format!("layer {i}: Softmax must be terminal"));
                }
                shape
            }
        };
        shapes.push((shape, out));
        shape = out;
    }
    Ok(shapes)
}

/// Builds a model with He-uniform weights (`bound = sqrt(6 / fan_in)`) and
/// zero biases, drawn deterministically from the seed.
pub fn init_model<F: Scalar>(arch: &[LayerSpec], input_shape: Shape, seed: u64) -> Result<Model<F>> {
    let shapes = plan_shapes(arch, input_shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .iter()
        .zip(shapes)
        .map(|(&spec, (in_shape, out_shape))| {
            let (w_len, b_len, fan_in) = match spec {
                LayerSpec::Conv { filters } => {
                    (9 * in_shape.c * filters, filters, 9 * in_shape.c)
                }
                LayerSpec::Dense { units, .. } => {
                    (in_shape.c * units, units, in_shape.c)
                }
                _ => (0, 0, 1),
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            let weights: Vec<F> = (0..w_len)
                .map(|_| F::cast(rng.gen_range(-bound..bound)))
                .collect();
            Layer {
                spec,
                in_shape,
                out_shape,
                bias: vec![F::zero(); b_len],
                m_w: vec![F::zero(); w_len],
                v_w: vec![F::zero(); w_len],
                m_b: vec![F::zero(); b_len],
                v_b: vec![F::zero(); b_len],
                weights,
                step: 0,
                frozen: false,
            }
        })
        .collect();
    Ok(Model {
        input_shape,
        layers,
    })
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

fn relu_inplace<F: Scalar>(xs: &mut [F]) {
    for x in xs.iter_mut() {
        if *x < F::zero() {
            *x = F::zero();
        }
    }
}

/// Zeroes gradient entries where the ReLU output was clipped.
fn mask_relu<F: Scalar>(grad: &mut [F], output: &[F]) {
    for (g, &o) in grad.iter_mut().zip(output) {
        if o <= F::zero() {
            *g = F::zero();
        }
    }
}

/// 3x3 cross-correlation with zero "same" padding and stride 1. The bias is
/// added; activation is the caller's business.
fn conv_forward<F: Scalar>(
    inp: &[F],
    h: usize,
    w: usize,
    c_in: usize,
    weights: &[F],
    bias: &[F],
    c_out: usize,
) -> Vec<F> {
    let mut out = vec![F::zero(); h * w * c_out];
    for y in 0..h {
        for x in 0..w {
            let acc = &mut out[(y * w + x) * c_out..(y * w + x + 1) * c_out];
            acc.copy_from_slice(bias);
            for ky in 0..3 {
                let iy = y + ky;
                if iy < 1 || iy > h {
                    continue;
                }
                let iy = iy - 1;
                for kx in 0..3 {
                    let ix = x + kx;
                    if ix < 1 || ix > w {
                        continue;
                    }
                    let ix = ix - 1;
                    let in_off = (iy * w + ix) * c_in;
                    let w_off = (ky * 3 + kx) * c_in * c_out;
                    for ci in 0..c_in {
                        let a = inp[in_off + ci];
                        if a == F::zero() {
                            continue;
                        }
                        let ws = &weights[w_off + ci * c_out..w_off + (ci + 1) * c_out];
                        for (dst, &wv) in acc.iter_mut().zip(ws) {
                            *dst = *dst + a * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Backward pass of the same-padding convolution. Accumulates parameter
/// gradients and returns the gradient with respect to the input, unless the
/// caller opts out of input propagation.
#[allow(clippy::too_many_arguments)]
fn conv_backward<F: Scalar>(
    inp: &[F],
    h: usize,
    w: usize,
    c_in: usize,
    weights: &[F],
    c_out: usize,
    dout: &[F],
    dw: &mut [F],
    db: &mut [F],
    want_din: bool,
) -> Vec<F> {
    let mut din = vec![F::zero(); if want_din { h * w * c_in } else { 0 }];
    for y in 0..h {
        for x in 0..w {
            let g = &dout[(y * w + x) * c_out..(y * w + x + 1) * c_out];
            for (dst, &gv) in db.iter_mut().zip(g) {
                *dst = *dst + gv;
            }
            for ky in 0..3 {
                let iy = y + ky;
                if iy < 1 || iy > h {
                    continue;
                }
                let iy = iy - 1;
                for kx in 0..3 {
                    let ix = x + kx;
                    if ix < 1 || ix > w {
                        continue;
                    }
                    let ix = ix - 1;
                    let in_off = (iy * w + ix) * c_in;
                    let w_off = (ky * 3 + kx) * c_in * c_out;
                    for ci in 0..c_in {
                        let a = inp[in_off + ci];
                        let ws = &weights[w_off + ci * c_out..w_off + (ci + 1) * c_out];
                        let dws = &mut dw[w_off + ci * c_out..w_off + (ci + 1) * c_out];
                        let mut acc = F::zero();
                        for ((dst, &wv), &gv) in dws.iter_mut().zip(ws).zip(g) {
                            *dst = *dst + a * gv;
                            acc = acc + wv * gv;
                        }
                        if want_din {
                            din[in_off + ci] = din[in_off + ci] + acc;
                        }
                    }
                }
            }
        }
    }
    din
}

/// 2x2 max-pooling with stride 2. Ties pick the first cell in row-major
/// order, and the chosen flat input index is recorded for backprop.
fn pool_forward<F: Scalar>(inp: &[F], h: usize, w: usize, c: usize) -> (Vec<F>, Vec<u32>) {
    let oh = h / 2;
    let ow = w / 2;
    let mut out = vec![F::zero(); oh * ow * c];
    let mut argmax = vec![0u32; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = F::neg_infinity();
                let mut best_idx = 0u32;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = ((oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                        if inp[idx] > best {
                            best = inp[idx];
                            best_idx = idx as u32;
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    (out, argmax)
}

fn pool_backward<F: Scalar>(argmax: &[u32], dout: &[F], din_len: usize) -> Vec<F> {
    let mut din = vec![F::zero(); din_len];
    for (&idx, &g) in argmax.iter().zip(dout) {
        din[idx as usize] = din[idx as usize] + g;
    }
    din
}

/// Fully connected layer with `[n_in, n_out]` weight layout.
fn dense_forward<F: Scalar>(inp: &[F], weights: &[F], bias: &[F], n_out: usize) -> Vec<F> {
    let mut out = bias.to_vec();
    for (i, &a) in inp.iter().enumerate() {
        if a == F::zero() {
            continue;
        }
        let ws = &weights[i * n_out..(i + 1) * n_out];
        for (dst, &wv) in out.iter_mut().zip(ws) {
            *dst = *dst + a * wv;
        }
    }
    out
}

fn dense_backward<F: Scalar>(
    inp: &[F],
    weights: &[F],
    n_out: usize,
    dout: &[F],
    dw: &mut [F],
    db: &mut [F],
    want_din: bool,
) -> Vec<F> {
    for (dst, &g) in db.iter_mut().zip(dout) {
        *dst = *dst + g;
    }
    let mut din = vec![F::zero(); if want_din { inp.len() } else { 0 }];
    for (i, &a) in inp.iter().enumerate() {
        let ws = &weights[i * n_out..(i + 1) * n_out];
        let dws = &mut dw[i * n_out..(i + 1) * n_out];
        let mut acc = F::zero();
        for ((dst, &wv), &g) in dws.iter_mut().zip(ws).zip(dout) {
            *dst = *dst + a * g;
            acc = acc + wv * g;
        }
        if want_din {
            din[i] = acc;
        }
    }
    din
}

// ---------------------------------------------------------------------------
// Model passes
// ---------------------------------------------------------------------------

impl<F: Scalar> Model<F> {
    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    /// Total number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Replaces the parameters of one layer; shapes must match exactly.
    pub fn set_params(&mut self, layer: usize, weights: &[F], bias: &[F]) -> Result<()> {
        let l = self
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::InvalidModel(format!("no layer {layer}")))?;
        if weights.len() != l.weights.len() || bias.len() != l.bias.len() {
            return Err(Error::InvalidModel(format!(
                "layer {layer} takes {}+{} parameters, got {}+{}",
                l.weights.len(),
                l.bias.len(),
                weights.len(),
                bias.len()
            )));
        }
        l.weights.copy_from_slice(weights);
        l.bias.copy_from_slice(bias);
        Ok(())
    }

    pub(super) fn layer_mut(&mut self, i: usize) -> &mut Layer<F> {
        &mut self.layers[i]
    }

    fn check_batch(&self, batch: &ImageBatch<F>) -> Result<()> {
        let s = self.input_shape;
        if batch.h != s.h || batch.w != s.w || batch.c != s.c {
            return Err(Error::InvalidModel(format!(
                "batch is {}x{}x{}, model expects {}x{}x{}",
                batch.h, batch.w, batch.c, s.h, s.w, s.c
            )));
        }
        if batch.is_empty() {
            return Err(Error::InvalidModel("empty batch".into()));
        }
        Ok(())
    }

    /// Runs one example through every layer, recording the input of each
    /// layer plus the final probabilities.
    fn forward_one(&self, example: &[F]) -> Result<(Vec<Vec<F>>, ArgmaxRecords)> {
        let mut acts: Vec<Vec<F>> = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax: Vec<Vec<u32>> = vec![Vec::new(); self.layers.len()];
        acts.push(example.to_vec());
        for (li, layer) in self.layers.iter().enumerate() {
            let inp = &acts[li];
            let s = layer.in_shape;
            let out = match layer.spec {
                LayerSpec::Conv { filters } => {
                    let mut out =
                        conv_forward(inp, s.h, s.w, s.c, &layer.weights, &layer.bias, filters);
                    relu_inplace(&mut out);
                    out
                }
                LayerSpec::MaxPool => {
                    let (out, arg) = pool_forward(inp, s.h, s.w, s.c);
                    argmax[li] = arg;
                    out
                }
                LayerSpec::Flatten => inp.clone(),
                LayerSpec::Dense { units, relu } => {
                    let mut out = dense_forward(inp, &layer.weights, &layer.bias, units);
                    if relu {
                        relu_inplace(&mut out);
                    }
                    out
                }
                LayerSpec::Softmax => {
                    if inp.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("network activations".into()));
                    }
                    softmax(inp)
                }
            };
            acts.push(out);
        }
        Ok((acts, argmax))
    }

    /// Inference pass: per-example class probabilities.
    pub fn forward(&self, batch: &ImageBatch<F>) -> Result<Vec<Vec<F>>> {
        self.check_batch(batch)?;
        (0..batch.len())
            .map(|e| Ok(self.forward_one(batch.example(e))?.0.pop().expect("output")))
            .collect()
    }

    /// Training pass: probabilities plus the cache consumed by [`Model::backward`].
    pub fn forward_training(
        &self,
        batch: &ImageBatch<F>,
    ) -> Result<(Vec<Vec<F>>, BatchCache<F>)> {
        self.check_batch(batch)?;
        let mut cache = BatchCache {
            acts: Vec::with_capacity(batch.len()),
            argmax: Vec::with_capacity(batch.len()),
        };
        let mut probs = Vec::with_capacity(batch.len());
        for e in 0..batch.len() {
            let (acts, argmax) = self.forward_one(batch.example(e))?;
            probs.push(acts.last().expect("output").clone());
            cache.acts.push(acts);
            cache.argmax.push(argmax);
        }
        Ok((probs, cache))
    }

    /// Exact gradients of the weighted cross-entropy over the cached batch.
    ///
    /// Frozen layers receive gradients like any other; freezing only affects
    /// the optimizer step.
    pub fn backward(
        &self,
        cache: &BatchCache<F>,
        labels: &[u8],
        weights: &[F],
    ) -> Result<Gradients<F>> {
        self.backward_from(cache, labels, weights, 0)
    }

    /// Like [`Model::backward`] but stops propagating below `stop_layer`;
    /// layers before it get zero gradients. Used by stage-2 training where
    /// the whole feature extractor is frozen.
    pub(super) fn backward_from(
        &self,
        cache: &BatchCache<F>,
        labels: &[u8],
        weights: &[F],
        stop_layer: usize,
    ) -> Result<Gradients<F>> {
        if cache.is_empty() {
            return Err(Error::InvalidTraining("backward on an empty cache".into()));
        }
        if labels.len() != cache.len() || weights.len() != cache.len() {
            return Err(Error::InvalidTraining(format!(
                "cache holds {} examples, got {} labels and {} weights",
                cache.len(),
                labels.len(),
                weights.len()
            )));
        }
        let mut weight_sum = F::zero();
        for &w in weights {
            if w < F::zero() {
                return Err(Error::InvalidTraining("negative sample weight".into()));
            }
            weight_sum = weight_sum + w;
        }
        if weight_sum == F::zero() {
            return Err(Error::InvalidTraining("all sample weights are zero".into()));
        }

        let mut grads = Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    d_weights: vec![F::zero(); l.weights.len()],
                    d_bias: vec![F::zero(); l.bias.len()],
                })
                .collect(),
        };

        let n_classes = self.layers[self.layers.len() - 2].out_shape.c;
        for e in 0..cache.len() {
            let acts = &cache.acts[e];
            let probs = acts.last().expect("softmax output");
            let y = labels[e] as usize;
            if y >= n_classes {
                return Err(Error::InvalidTraining(format!(
                    "label {y} outside the {n_classes}-class output"
                )));
            }
            let scale = weights[e] / weight_sum;
            if scale == F::zero() {
                continue;
            }
            // Fused softmax + cross-entropy gradient at the logits.
            let mut dout: Vec<F> = probs
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    let target = if k == y { F::one() } else { F::zero() };
                    (p - target) * scale
                })
                .collect();

            for li in (stop_layer..self.layers.len() - 1).rev() {
                let layer = &self.layers[li];
                let inp = &acts[li];
                let out = &acts[li + 1];
                let s = layer.in_shape;
                let want_din = li > stop_layer;
                let lg = &mut grads.layers[li];
                dout = match layer.spec {
                    LayerSpec::Conv { filters } => {
                        mask_relu(&mut dout, out);
                        conv_backward(
                            inp,
                            s.h,
                            s.w,
                            s.c,
                            &layer.weights,
                            filters,
                            &dout,
                            &mut lg.d_weights,
                            &mut lg.d_bias,
                            want_din,
                        )
                    }
                    LayerSpec::MaxPool => {
                        if !want_din {
                            break;
                        }
                        pool_backward(&cache.argmax[e][li], &dout, s.count())
                    }
                    LayerSpec::Flatten => dout,
                    LayerSpec::Dense { units, relu } => {
                        if relu {
                            mask_relu(&mut dout, out);
                        }
                        dense_backward(
                            inp,
                            &layer.weights,
                            units,
                            &dout,
                            &mut lg.d_weights,
                            &mut lg.d_bias,
                            want_din,
                        )
                    }
                    LayerSpec::Softmax => unreachable!("softmax handled at the loss"),
                };
            }
        }
        Ok(grads)
    }

    /// Argmax prediction with ties broken toward class index 0. Returns the
    /// labels and the per-class probabilities in input order.
    pub fn predict(&self, batch: &ImageBatch<F>) -> Result<(Vec<usize>, Vec<Vec<F>>)> {
        let probs = self.forward(batch)?;
        let labels = probs
            .iter()
            .map(|p| {
                let mut best = 0usize;
                for (k, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = k;
                    }
                }
                best
            })
            .collect();
        Ok((labels, probs))
    }

    /// Flags the feature extractor (Conv, MaxPool, Flatten) as frozen so the
    /// optimizer leaves it untouched. Dense layers and the softmax stay
    /// trainable. Idempotent.
    pub fn freeze_features(&mut self) {
        for layer in &mut self.layers {
            if matches!(
                layer.spec,
                LayerSpec::Conv { .. } | LayerSpec::MaxPool | LayerSpec::Flatten
            ) {
                layer.frozen = true;
            }
        }
    }

    /// Index of the first layer the optimizer may still update, used to skip
    /// dead backprop work below a fully frozen prefix.
    pub(super) fn first_trainable_layer(&self) -> usize {
        self.layers
            .iter()
            .position(|l| !l.frozen)
            .unwrap_or(self.layers.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv { filters: 4 },
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8, relu: true },
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ]
    }

    /// The production architecture: three conv/pool blocks, then the head.
    fn full_arch() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv { filters: 64 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { filters: 128 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { filters: 256 },
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 128, relu: true },
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ]
    }

    #[test]
    fn full_arch_flatten_is_65536() {
        let shapes = plan_shapes(&full_arch(), Shape::new(128, 128, 3)).unwrap();
        // 128 -> 64 -> 32 -> 16 spatial, 256 channels at the flatten.
        let flatten_out = shapes[6].1;
        assert_eq!(flatten_out.count(), 16 * 16 * 256);
        assert_eq!(flatten_out.count(), 65536);
    }

    #[test]
    fn init_is_deterministic() {
        let a: Model<f32> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 3).unwrap();
        let b: Model<f32> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 3).unwrap();
        assert_eq!(a, b);
        let c: Model<f32> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 4).unwrap();
        assert_ne!(a.layers[0].weights, c.layers[0].weights);
    }

    #[test]
    fn chain_must_end_dense2_softmax() {
        let mut arch = tiny_arch();
        arch.pop(); // drop softmax
        assert!(init_model::<f32>(&arch, Shape::new(8, 8, 3), 0).is_err());

        let mut arch = tiny_arch();
        arch[4] = LayerSpec::Dense { units: 3, relu: false };
        assert!(init_model::<f32>(&arch, Shape::new(8, 8, 3), 0).is_err());

        let mut arch = tiny_arch();
        arch[4] = LayerSpec::Dense { units: 2, relu: true };
        assert!(init_model::<f32>(&arch, Shape::new(8, 8, 3), 0).is_err());
    }

    #[test]
    fn pool_rejects_odd_dims() {
        assert!(init_model::<f32>(&tiny_arch(), Shape::new(7, 8, 3), 0).is_err());
    }

    #[test]
    fn zero_model_outputs_half() {
        let mut model: Model<f64> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 0).unwrap();
        for i in 0..model.layers.len() {
            let (w_len, b_len) = (model.layers[i].weights.len(), model.layers[i].bias.len());
            model
                .set_params(i, &vec![0.0; w_len], &vec![0.0; b_len])
                .unwrap();
        }
        let batch = ImageBatch::new(vec![0.0; 8 * 8 * 3], 1, 8, 8, 3).unwrap();
        let probs = model.forward(&batch).unwrap();
        assert_eq!(probs[0], vec![0.5, 0.5]);
    }

    #[test]
    fn dense_identity_passes_logits_through() {
        let arch = vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ];
        let mut model: Model<f64> = init_model(&arch, Shape::new(1, 1, 2), 0).unwrap();
        model
            .set_params(1, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0])
            .unwrap();
        let batch = ImageBatch::new(vec![0.3, 0.7], 1, 1, 1, 2).unwrap();
        let (probs, cache) = model.forward_training(&batch).unwrap();
        // acts[2] is the dense output, i.e. the logits.
        assert_eq!(cache.acts[0][2], vec![0.3, 0.7]);
        let expect = softmax(&[0.3, 0.7]);
        assert_eq!(probs[0], expect);
    }

    #[test]
    fn conv_same_padding_preserves_dims() {
        let model: Model<f32> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 1).unwrap();
        assert_eq!(model.layers[0].out_shape, Shape::new(8, 8, 4));
        assert_eq!(model.layers[1].out_shape, Shape::new(4, 4, 4));
    }

    #[test]
    fn predict_breaks_ties_toward_zero() {
        let arch = vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ];
        let mut model: Model<f64> = init_model(&arch, Shape::new(1, 1, 2), 0).unwrap();
        model.set_params(1, &[0.0; 4], &[0.0; 2]).unwrap();
        let batch = ImageBatch::new(vec![0.5, 0.5, 0.9, 0.1], 2, 1, 1, 2).unwrap();
        let (labels, probs) = model.predict(&batch).unwrap();
        assert_eq!(labels, vec![0, 0]);
        assert_eq!(probs.len(), 2);
    }

    #[test]
    fn batch_order_is_preserved() {
        let rng_vals = |n: usize, seed: u64| -> Vec<f64> {
            use rand::{Rng, SeedableRng};
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| r.gen_range(0.0..1.0)).collect()
        };
        let model: Model<f64> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 5).unwrap();
        let ex_a = rng_vals(8 * 8 * 3, 1);
        let ex_b = rng_vals(8 * 8 * 3, 2);
        let mut batch = ImageBatch::empty(8, 8, 3);
        batch.push(&ex_a);
        batch.push(&ex_b);
        let joint = model.forward(&batch).unwrap();
        let single_a = ImageBatch::new(ex_a, 1, 8, 8, 3).unwrap();
        let single_b = ImageBatch::new(ex_b, 1, 8, 8, 3).unwrap();
        assert_eq!(joint[0], model.forward(&single_a).unwrap()[0]);
        assert_eq!(joint[1], model.forward(&single_b).unwrap()[0]);
    }

    #[test]
    fn freeze_marks_feature_extractor() {
        let mut model: Model<f32> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 0).unwrap();
        model.freeze_features();
        let frozen: Vec<bool> = model.layers().iter().map(|l| l.frozen()).collect();
        assert_eq!(frozen, vec![true, true, true, false, false, false]);
        // Idempotent.
        model.freeze_features();
        let again: Vec<bool> = model.layers().iter().map(|l| l.frozen()).collect();
        assert_eq!(frozen, again);
        assert_eq!(model.first_trainable_layer(), 3);
    }

    #[test]
    fn zero_weight_examples_contribute_no_gradient() {
        let model: Model<f64> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 9).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let ex_a: Vec<f64> = (0..192).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ex_b: Vec<f64> = (0..192).map(|_| rng.gen_range(0.0..1.0)).collect();

        let mut both = ImageBatch::empty(8, 8, 3);
        both.push(&ex_a);
        both.push(&ex_b);
        let (_, cache) = model.forward_training(&both).unwrap();
        let g_weighted = model.backward(&cache, &[0, 1], &[1.0, 0.0]).unwrap();

        let only_a = ImageBatch::new(ex_a, 1, 8, 8, 3).unwrap();
        let (_, cache_a) = model.forward_training(&only_a).unwrap();
        let g_alone = model.backward(&cache_a, &[0], &[1.0]).unwrap();

        for (lw, la) in g_weighted.layers.iter().zip(&g_alone.layers) {
            for (x, y) in lw.d_weights.iter().zip(&la.d_weights) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_example_with_halved_weight_matches() {
        let model: Model<f64> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 9).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ex: Vec<f64> = (0..192).map(|_| rng.gen_range(0.0..1.0)).collect();

        let single = ImageBatch::new(ex.clone(), 1, 8, 8, 3).unwrap();
        let (_, c1) = model.forward_training(&single).unwrap();
        let g1 = model.backward(&c1, &[1], &[1.0]).unwrap();

        let mut doubled = ImageBatch::empty(8, 8, 3);
        doubled.push(&ex);
        doubled.push(&ex);
        let (_, c2) = model.forward_training(&doubled).unwrap();
        let g2 = model.backward(&c2, &[1, 1], &[0.5, 0.5]).unwrap();

        for (la, lb) in g1.layers.iter().zip(&g2.layers) {
            for (x, y) in la.d_weights.iter().zip(&lb.d_weights) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn backward_rejects_bad_labels_and_weights() {
        let model: Model<f64> = init_model(&tiny_arch(), Shape::new(8, 8, 3), 9).unwrap();
        let batch = ImageBatch::new(vec![0.5; 192], 1, 8, 8, 3).unwrap();
        let (_, cache) = model.forward_training(&batch).unwrap();
        assert!(model.backward(&cache, &[2], &[1.0]).is_err());
        assert!(model.backward(&cache, &[0], &[0.0]).is_err());
        assert!(model.backward(&cache, &[0], &[-1.0]).is_err());
    }
}

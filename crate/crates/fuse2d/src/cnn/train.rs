//! Mini-batch training: single-stage, or two-stage with a frozen feature
//! extractor in the second stage.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamConfig;
use super::loss::weighted_cross_entropy;
use super::model::{init_model, LayerSpec, Model, Shape};
use super::{ImageBatch, Scalar};
use crate::error::{Error, Result};

/// Network size preset.
///
/// `Full` is the production architecture over 128x128x3 inputs; `Tiny` is a
/// reduced copy over 32x32x3 inputs so the whole suite trains in seconds on a
/// CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Full,
    Tiny,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Profile::Full),
            "tiny" => Ok(Profile::Tiny),
            other => Err(Error::InvalidConfig(format!("unknown profile {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Full => "full",
            Profile::Tiny => "tiny",
        }
    }

    pub fn input_shape(self) -> Shape {
        match self {
            Profile::Full => Shape::new(128, 128, 3),
            Profile::Tiny => Shape::new(32, 32, 3),
        }
    }

    /// Three conv/pool blocks, a dense hidden layer and the 2-way head.
    pub fn arch(self) -> Vec<LayerSpec> {
        let (f1, f2, f3, hidden) = match self {
            Profile::Full => (64, 128, 256, 128),
            Profile::Tiny => (8, 16, 32, 32),
        };
        vec![
            LayerSpec::Conv { filters: f1 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { filters: f2 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { filters: f3 },
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: hidden,
                relu: true,
            },
            LayerSpec::Dense {
                units: 2,
                relu: false,
            },
            LayerSpec::Softmax,
        ]
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stage-2 epoch count; defaults to `epochs` when unset.
    pub stage2_epochs: Option<usize>,
    pub shuffle: bool,
    pub seed: u64,
    pub profile: Profile,
    /// Subject held out of training for per-epoch validation accuracy.
    pub validation_subject: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 16,
            stage2_epochs: None,
            shuffle: true,
            seed: 0,
            profile: Profile::Full,
            validation_subject: None,
        }
    }
}

/// A labeled image set with per-example weights and subject provenance.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: ImageBatch<f32>,
    pub labels: Vec<u8>,
    pub subjects: Vec<String>,
    pub weights: Vec<f32>,
}

impl Dataset {
    /// Builds a dataset with unit weights.
    pub fn new(images: ImageBatch<f32>, labels: Vec<u8>, subjects: Vec<String>) -> Result<Self> {
        let weights = vec![1.0; labels.len()];
        Dataset::with_weights(images, labels, subjects, weights)
    }

    pub fn with_weights(
        images: ImageBatch<f32>,
        labels: Vec<u8>,
        subjects: Vec<String>,
        weights: Vec<f32>,
    ) -> Result<Self> {
        if labels.len() != images.len() || subjects.len() != images.len()
            || weights.len() != images.len()
        {
            return Err(Error::InvalidTraining(format!(
                "{} images vs {} labels / {} subjects / {} weights",
                images.len(),
                labels.len(),
                subjects.len(),
                weights.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidTraining(format!(
                "label {bad} outside the binary range"
            )));
        }
        Ok(Dataset {
            images,
            labels,
            subjects,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let mut images = ImageBatch::empty(
            self.images.height(),
            self.images.width(),
            self.images.channels(),
        );
        let mut labels = Vec::new();
        let mut subjects = Vec::new();
        let mut weights = Vec::new();
        for i in 0..self.len() {
            if keep(i) {
                images.push(self.images.example(i));
                labels.push(self.labels[i]);
                subjects.push(self.subjects[i].clone());
                weights.push(self.weights[i]);
            }
        }
        Dataset {
            images,
            labels,
            subjects,
            weights,
        }
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub stage: u8,
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

pub type TrainHistory = Vec<EpochStats>;

fn argmax_tie_zero<F: Scalar>(probs: &[F]) -> usize {
    let mut best = 0usize;
    for (k, &v) in probs.iter().enumerate() {
        if v > probs[best] {
            best = k;
        }
    }
    best
}

/// Trains a fresh model on `stage1`, then (when `stage2` is non-empty)
/// freezes the feature extractor and continues on the union of the stage-2
/// datasets, updating only the dense head.
///
/// When `cfg.validation_subject` is set, that subject's examples are removed
/// from every stage and scored after each epoch. The whole run is a pure
/// function of the datasets, the config and the seed.
pub fn fit_two_stage(
    stage1: &Dataset,
    stage2: &[Dataset],
    cfg: &TrainConfig,
) -> Result<(Model<f32>, TrainHistory)> {
    if stage1.is_empty() {
        return Err(Error::InvalidTraining("stage-1 dataset is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidConfig(
            "batch size and epochs must be positive".into(),
        ));
    }
    let shape = cfg.profile.input_shape();
    let check_shape = |ds: &Dataset| -> Result<()> {
        if ds.images.height() != shape.h
            || ds.images.width() != shape.w
            || ds.images.channels() != shape.c
        {
            return Err(Error::InvalidTraining(format!(
                "dataset images are {}x{}x{}, profile {} expects {}x{}x{}",
                ds.images.height(),
                ds.images.width(),
                ds.images.channels(),
                cfg.profile.as_str(),
                shape.h,
                shape.w,
                shape.c
            )));
        }
        Ok(())
    };
    check_shape(stage1)?;
    for ds in stage2 {
        if ds.is_empty() {
            return Err(Error::InvalidTraining("a stage-2 dataset is empty".into()));
        }
        check_shape(ds)?;
    }

    // Split off the validation subject everywhere.
    let (train1, val) = match &cfg.validation_subject {
        Some(id) => {
            let val = stage1.subset(|i| &stage1.subjects[i] == id);
            let train = stage1.subset(|i| &stage1.subjects[i] != id);
            if val.is_empty() {
                return Err(Error::InvalidTraining(format!(
                    "validation subject {id} not present in stage-1 data"
                )));
            }
            if train.is_empty() {
                return Err(Error::InvalidTraining(
                    "validation subject holds the whole stage-1 dataset".into(),
                ));
            }
            (train, Some(val))
        }
        None => (stage1.clone(), None),
    };

    let mut model: Model<f32> = init_model(&cfg.profile.arch(), shape, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();

    run_stage(&mut model, &train1, val.as_ref(), cfg, cfg.epochs, 1, &mut rng, &mut history)?;

    if !stage2.is_empty() {
        model.freeze_features();
        let mut union = stage2[0].subset(|_| true);
        for ds in &stage2[1..] {
            for i in 0..ds.len() {
                union.images.push(ds.images.example(i));
                union.labels.push(ds.labels[i]);
                union.subjects.push(ds.subjects[i].clone());
                union.weights.push(ds.weights[i]);
            }
        }
        if let Some(id) = &cfg.validation_subject {
            union = union.subset_by_subject(id);
        }
        if union.is_empty() {
            return Err(Error::InvalidTraining(
                "stage-2 data is empty after removing the validation subject".into(),
            ));
        }
        let epochs2 = cfg.stage2_epochs.unwrap_or(cfg.epochs);
        run_stage(&mut model, &union, val.as_ref(), cfg, epochs2, 2, &mut rng, &mut history)?;
    }

    Ok((model, history))
}

impl Dataset {
    fn subset_by_subject(&self, exclude: &str) -> Dataset {
        self.subset(|i| self.subjects[i] != exclude)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    model: &mut Model<f32>,
    data: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    epochs: usize,
    stage: u8,
    rng: &mut ChaCha8Rng,
    history: &mut TrainHistory,
) -> Result<()> {
    // Backprop may stop at the first trainable layer; everything below is
    // frozen and its gradients would be discarded anyway.
    let stop = model.first_trainable_layer();
    if stop >= model.layers().len() {
        return Err(Error::InvalidTraining("every layer is frozen".into()));
    }

    let n = data.len();
    let mut indices: Vec<usize> = (0..n).collect();
    for epoch in 1..=epochs {
        if cfg.shuffle {
            indices.shuffle(rng);
        }
        let mut loss_sum = 0.0f64;
        let mut weight_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            let mut batch = ImageBatch::empty(
                data.images.height(),
                data.images.width(),
                data.images.channels(),
            );
            let mut labels = Vec::with_capacity(chunk.len());
            let mut weights = Vec::with_capacity(chunk.len());
            for &i in chunk {
                batch.push(data.images.example(i));
                labels.push(data.labels[i]);
                weights.push(data.weights[i]);
            }
            let (probs, cache) = model.forward_training(&batch).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged(format!(
                    "non-finite activations in stage {stage} epoch {epoch}"
                )),
                other => other,
            })?;
            let loss = weighted_cross_entropy(&probs, &labels, &weights)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss in stage {stage} epoch {epoch}"
                )));
            }
            for (p, &y) in probs.iter().zip(&labels) {
                if argmax_tie_zero(p) == y as usize {
                    correct += 1;
                }
            }
            let grads = model.backward_from(&cache, &labels, &weights, stop)?;
            model.adam_step(&grads, &cfg.adam)?;

            let batch_weight: f64 = weights.iter().map(|&w| w as f64).sum();
            loss_sum += loss as f64 * batch_weight;
            weight_sum += batch_weight;
        }
        let val_acc = match val {
            Some(v) => Some(evaluate_accuracy(model, v)?),
            None => None,
        };
        history.push(EpochStats {
            stage,
            epoch,
            loss: loss_sum / weight_sum,
            train_acc: correct as f64 / n as f64,
            val_acc,
        });
    }
    Ok(())
}

/// Plain accuracy of the model on a dataset.
pub fn evaluate_accuracy(model: &Model<f32>, data: &Dataset) -> Result<f64> {
    let (pred, _) = model.predict(&data.images)?;
    let correct = pred
        .iter()
        .zip(&data.labels)
        .filter(|(p, y)| **p == **y as usize)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Writes the training history as `epoch,stage,loss,train_acc,val_acc` CSV.
pub fn write_history_csv(history: &TrainHistory, path: &Path) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "epoch,stage,loss,train_acc,val_acc").map_err(|e| Error::io(path, e))?;
    for row in history {
        let val = row.val_acc.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            row.epoch, row.stage, row.loss, row.train_acc, val
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::serial::model_to_bytes;
    use super::*;
    use rand::Rng;

    /// Trivially separable 32x32x3 images: class 1 is bright in the top half,
    /// class 0 in the bottom half, plus noise.
    fn separable_dataset(n: usize, seed: u64, subject: &str) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = ImageBatch::empty(32, 32, 3);
        let mut labels = Vec::new();
        for i in 0..n {
            let y = (i % 2) as u8;
            let mut img = vec![0.0f32; 32 * 32 * 3];
            for row in 0..32 {
                for col in 0..32 {
                    let bright = if (y == 1) == (row < 16) { 0.9 } else { 0.1 };
                    for ch in 0..3 {
                        img[(row * 32 + col) * 3 + ch] =
                            bright + rng.gen_range(-0.05..0.05);
                    }
                }
            }
            images.push(&img);
            labels.push(y);
        }
        let subjects = vec![subject.to_string(); n];
        Dataset::new(images, labels, subjects).unwrap()
    }

    fn quick_config(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 8,
            seed,
            profile: Profile::Tiny,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable_dataset(16, 3, "S01");
        let (m1, h1) = fit_two_stage(&data, &[], &quick_config(5)).unwrap();
        let (m2, h2) = fit_two_stage(&data, &[], &quick_config(5)).unwrap();
        assert_eq!(model_to_bytes(&m1), model_to_bytes(&m2));
        assert_eq!(h1, h2);

        let (m3, _) = fit_two_stage(&data, &[], &quick_config(6)).unwrap();
        assert_ne!(model_to_bytes(&m1), model_to_bytes(&m3));
    }

    #[test]
    fn single_stage_leaves_features_unfrozen() {
        let data = separable_dataset(8, 3, "S01");
        let (model, history) = fit_two_stage(&data, &[], &quick_config(1)).unwrap();
        assert!(model.layers().iter().all(|l| !l.frozen()));
        assert!(history.iter().all(|h| h.stage == 1));
        assert_eq!(history.len(), 2);
    }

    #[test]
    fn two_stage_freezes_conv_parameters() {
        let data = separable_dataset(12, 3, "S01");
        let extra = separable_dataset(12, 9, "S01");
        let cfg = quick_config(2);

        let (after_stage1, _) = fit_two_stage(&data, &[], &cfg).unwrap();
        let (after_both, history) = fit_two_stage(&data, &[extra], &cfg).unwrap();

        // Stage 1 is bitwise identical in both runs, so comparing conv layers
        // across runs checks that stage 2 left them alone.
        for li in 0..7 {
            assert_eq!(
                after_both.layers()[li].weights(),
                after_stage1.layers()[li].weights(),
                "layer {li} changed in stage 2"
            );
        }
        // The dense head did change.
        assert_ne!(
            after_both.layers()[7].weights(),
            after_stage1.layers()[7].weights()
        );
        assert!(history.iter().any(|h| h.stage == 2));
    }

    #[test]
    fn validation_subject_is_held_out() {
        let mut data = separable_dataset(16, 3, "S01");
        let other = separable_dataset(8, 4, "S02");
        for i in 0..other.len() {
            data.images.push(other.images.example(i));
            data.labels.push(other.labels[i]);
            data.subjects.push(other.subjects[i].clone());
            data.weights.push(other.weights[i]);
        }
        let cfg = TrainConfig {
            validation_subject: Some("S02".into()),
            ..quick_config(1)
        };
        let (_, history) = fit_two_stage(&data, &[], &cfg).unwrap();
        assert!(history.iter().all(|h| h.val_acc.is_some()));

        let missing = TrainConfig {
            validation_subject: Some("S99".into()),
            ..quick_config(1)
        };
        assert!(fit_two_stage(&data, &[], &missing).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = separable_dataset(8, 3, "S01");
        let empty = Dataset::new(ImageBatch::empty(32, 32, 3), vec![], vec![]).unwrap();
        assert!(fit_two_stage(&empty, &[], &quick_config(1)).is_err());
        assert!(fit_two_stage(&data, &[empty], &quick_config(1)).is_err());

        let mut bad_labels = separable_dataset(8, 3, "S01");
        bad_labels.labels[0] = 2;
        // Label validation happens at construction; mutate after to hit the
        // training-time check.
        assert!(Dataset::new(bad_labels.images.clone(), bad_labels.labels.clone(),
            bad_labels.subjects.clone()).is_err());
    }

    #[test]
    fn history_csv_layout() {
        let data = separable_dataset(8, 3, "S01");
        let (_, history) = fit_two_stage(&data, &[], &quick_config(1)).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("history.csv");
        write_history_csv(&history, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "epoch,stage,loss,train_acc,val_acc");
        assert_eq!(lines.count(), history.len());
    }
}

//! Command-line pipeline driver.
//!
//! ```text
//! fuse2d synth      make deterministic synthetic recordings
//! fuse2d images     recordings -> fused PNG datasets + manifest.csv
//! fuse2d train      manifests -> model.f2dm + history.csv (+ meta json)
//! fuse2d eval       model + held-out manifest -> report.json (+ roc.csv)
//! fuse2d gradcheck  finite-difference check of the backprop gradients
//! ```
//!
//! Exit codes: 0 success, 2 usage error, 3 data validation error,
//! 4 training divergence.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fuse2d::cnn::{
    self, check_arch, fit_two_stage, load_model, run_gradient_check, save_model,
    write_history_csv, AdamConfig, Profile, TrainConfig,
};
use fuse2d::colorize::{apply_scheme, upscale_nearest, write_png, ColorScheme};
use fuse2d::dataset::{
    load_dataset, manifest_subjects, read_manifest, write_manifest, ManifestEntry,
};
use fuse2d::fusion::{
    assemble_matrix, normalize_window, parse_arrangement_selector, slide_windows, BandLayout,
    FillPolicy, WindowConfig,
};
use fuse2d::ingest::{load_recording, preprocess, write_recording, ClassLabel, PreprocessConfig};
use fuse2d::synth::{generate_synthetic, SynthConfig};

// ---------------------------------------------------------------------------
// Command-line surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "fuse2d",
    version,
    about = "Fuse multirate biosignals into 2D images and train a CNN stress classifier"
)]
struct Cli {
    /// JSON config file mirroring the long flags; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic recordings in the ingest directory format.
    Synth(SynthArgs),
    /// Convert recordings into fused PNG images plus a manifest.
    Images(ImagesArgs),
    /// Train a model, single-stage or two-stage with feature freezing.
    Train(TrainArgs),
    /// Evaluate a model on a held-out image set and write report.json.
    Eval(EvalArgs),
    /// Compare backprop gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of subjects.
    #[arg(long)]
    subjects: Option<u32>,
    /// Seconds per condition (each subject gets no-stress then stress).
    #[arg(long)]
    seconds: Option<u32>,
    /// Class separation factor; 0 makes both conditions indistinguishable.
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; one subdirectory per subject.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImagesArgs {
    /// Directory holding one recording directory per subject.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for PNGs and manifest.csv.
    #[arg(long)]
    out: PathBuf,
    /// Arrangement selector: "all", or a comma list like "PEA,EPA,EAP".
    #[arg(long)]
    arrangement: Option<String>,
    /// Color scheme: gray, manual or custom.
    #[arg(long)]
    scheme: Option<String>,
    /// Window length in seconds.
    #[arg(long)]
    window: Option<u32>,
    /// Stride in seconds.
    #[arg(long)]
    stride: Option<u32>,
    /// Fill policy for uncovered rows: zeros or repeat.
    #[arg(long)]
    fill: Option<String>,
    /// Skip the linear detrend of PPG and EDA.
    #[arg(long)]
    no_detrend: bool,
    /// Only process these subject ids (comma list).
    #[arg(long)]
    subjects: Option<String>,
    /// Also dump each 32x32 matrix as CSV next to its PNG.
    #[arg(long)]
    dump_matrices: bool,
    /// Parallel workers for image generation.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Image directory (containing manifest.csv) for stage-1 training.
    #[arg(long)]
    stage1: PathBuf,
    /// Comma list of image directories for stage-2 fine-tuning.
    #[arg(long)]
    stage2: Option<String>,
    /// Per-dataset sample weights aligned with --stage2 (default 1.0 each).
    #[arg(long)]
    stage2_weights: Option<String>,
    /// Do not re-include the stage-1 images in stage 2.
    #[arg(long)]
    stage2_exclude_stage1: bool,
    /// Network profile: full (128x128 input) or tiny (32x32 input).
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stage-2 epochs; defaults to --epochs.
    #[arg(long)]
    stage2_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Subject held out for per-epoch validation metrics. Defaults to the
    /// last training subject in sorted order.
    #[arg(long)]
    val_subject: Option<String>,
    /// Disable the validation holdout.
    #[arg(long)]
    no_val: bool,
    /// Model output path.
    #[arg(long, default_value = "model.f2dm")]
    out: PathBuf,
    /// History CSV path; defaults to "<out>.history.csv".
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Image directory (containing manifest.csv) to evaluate on.
    #[arg(long)]
    data: PathBuf,
    /// Report output path.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Optional ROC curve CSV output.
    #[arg(long)]
    roc: Option<PathBuf>,
    /// Positive class for TP/FP accounting: nostress (default) or stress.
    #[arg(long)]
    positive: Option<String>,
    /// Manifest whose subjects count as training data for the leak guard,
    /// used when the model has no meta sidecar.
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    /// Evaluate even when test subjects overlap the training subjects.
    #[arg(long)]
    allow_leak: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Batch size of the check.
    #[arg(long, default_value_t = 4)]
    examples: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
}

// ---------------------------------------------------------------------------
// Config file and error classification
// ---------------------------------------------------------------------------

/// Optional JSON config; every field mirrors a long flag.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    subjects: Option<u32>,
    seconds: Option<u32>,
    separation: Option<f64>,
    window: Option<u32>,
    stride: Option<u32>,
    arrangement: Option<String>,
    scheme: Option<String>,
    fill: Option<String>,
    detrend: Option<bool>,
    workers: Option<usize>,
    profile: Option<String>,
    epochs: Option<usize>,
    stage2_epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    val_subject: Option<String>,
    positive: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let raw = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&raw)
                    .map_err(|e| anyhow!(Usage(format!("config {}: {e}", p.display()))))
            }
        }
    }
}

/// A bad flag or flag combination; maps to exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<Usage>()) {
        return 2;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fuse2d::Error>() {
            return match e {
                fuse2d::Error::Diverged(_) => 4,
                _ => 3,
            };
        }
    }
    3
}

fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> anyhow::Result<u64> {
    if let Some(s) = flag.or(file.seed) {
        return Ok(s);
    }
    if let Ok(var) = std::env::var("FUSE2D_SEED") {
        return var
            .parse()
            .map_err(|_| usage(format!("FUSE2D_SEED={var:?} is not a number")));
    }
    Err(usage("a seed is required: pass --seed, set it in --config, or export FUSE2D_SEED"))
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(args: SynthArgs, file: &FileConfig) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed, file)?;
    let config = SynthConfig {
        subjects: args.subjects.or(file.subjects).unwrap_or(2),
        seconds_per_condition: args.seconds.or(file.seconds).unwrap_or(60),
        class_separation: args.separation.or(file.separation).unwrap_or(1.0),
    };
    if config.subjects == 0 || config.seconds_per_condition == 0 {
        return Err(usage("--subjects and --seconds must be positive"));
    }
    let recordings = generate_synthetic(&config, seed)?;
    for rec in &recordings {
        write_recording(&args.out.join(rec.subject_id()), rec)?;
    }
    println!(
        "wrote {} subjects x {} s to {}",
        recordings.len(),
        2 * config.seconds_per_condition,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// images
// ---------------------------------------------------------------------------

/// Recording directories under `root`, sorted by name for determinism.
fn discover_recordings(root: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(root)
        .with_context(|| format!("reading data directory {}", root.display()))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("subject.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(anyhow!(fuse2d::Error::MissingFile(root.join("*/subject.json"))))
            .context("no recording directories found");
    }
    Ok(dirs)
}

fn cmd_images(args: ImagesArgs, file: &FileConfig) -> anyhow::Result<()> {
    let selector = args
        .arrangement
        .or_else(|| file.arrangement.clone())
        .unwrap_or_else(|| "PEA".to_string());
    let arrangements =
        parse_arrangement_selector(&selector).map_err(|e| usage(e.to_string()))?;
    let scheme = ColorScheme::parse(
        &args.scheme.or_else(|| file.scheme.clone()).unwrap_or_else(|| "custom".into()),
    )
    .map_err(|e| usage(e.to_string()))?;
    let fill = match args
        .fill
        .or_else(|| file.fill.clone())
        .unwrap_or_else(|| "zeros".into())
        .to_ascii_lowercase()
        .as_str()
    {
        "zeros" => FillPolicy::Zeros,
        "repeat" => FillPolicy::RepeatBands,
        other => return Err(usage(format!("unknown fill policy {other:?}"))),
    };
    let window_cfg = WindowConfig {
        window_s: args.window.or(file.window).unwrap_or(5),
        stride_s: args.stride.or(file.stride).unwrap_or(1),
    };
    window_cfg.validate().map_err(|e| usage(e.to_string()))?;
    let layout = BandLayout {
        fill,
        ..BandLayout::default()
    };
    let detrend = !args.no_detrend && file.detrend.unwrap_or(true);
    let workers = args.workers.or(file.workers).unwrap_or(1).max(1);
    let subject_filter: Option<BTreeSet<String>> = args
        .subjects
        .map(|s| s.split(',').map(|x| x.trim().to_string()).collect());

    std::fs::create_dir_all(&args.out)
        .map_err(|e| fuse2d::Error::Io { path: args.out.clone(), source: e })?;

    // Deterministic order: subjects sorted, then window start, then
    // arrangement order as selected.
    let pre_cfg = PreprocessConfig { detrend };
    let mut windows = Vec::new();
    for dir in discover_recordings(&args.data)? {
        let rec = load_recording(&dir)?;
        if let Some(filter) = &subject_filter {
            if !filter.contains(rec.subject_id()) {
                continue;
            }
        }
        let pre = preprocess(&rec, &pre_cfg)?;
        windows.extend(slide_windows(&pre, &window_cfg)?);
    }
    if windows.is_empty() {
        return Err(anyhow!(fuse2d::Error::InvalidTraining(
            "no labeled windows were produced; every window was dropped or filtered".into()
        )));
    }

    // One task per window; each task writes every arrangement of it.
    let tasks: Vec<(usize, &fuse2d::fusion::Window)> = windows.iter().enumerate().collect();
    let render = |(_, w): &(usize, &fuse2d::fusion::Window)| -> fuse2d::Result<Vec<ManifestEntry>> {
        let normalized = normalize_window(w)?;
        let mut entries = Vec::with_capacity(arrangements.len());
        for arr in &arrangements {
            let matrix = assemble_matrix(&normalized, arr, &layout)?;
            if args.dump_matrices {
                let csv_name = format!("{}.csv", matrix.file_stem());
                fuse2d::fusion::write_matrix_csv(&matrix, &args.out.join(csv_name))?;
            }
            let img = upscale_nearest(&apply_scheme(&matrix, scheme)?)?;
            let name = format!("{}.png", img.file_stem());
            write_png(&img, &args.out.join(&name))?;
            entries.push(ManifestEntry {
                path: name,
                subject: w.subject_id.clone(),
                start_s: w.start_s,
                arrangement: arr.name(),
                scheme: scheme.as_str().to_string(),
                label: w.label,
            });
        }
        Ok(entries)
    };

    let results: Vec<fuse2d::Result<Vec<ManifestEntry>>> = if workers > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .context("building worker pool")?;
        pool.install(|| tasks.par_iter().map(render).collect())
    } else {
        tasks.iter().map(render).collect()
    };

    let mut entries = Vec::new();
    for r in results {
        entries.extend(r?);
    }
    write_manifest(&entries, &args.out.join("manifest.csv"))?;
    println!(
        "wrote {} images ({} windows x {} arrangements, scheme {scheme}) to {}",
        entries.len(),
        windows.len(),
        arrangements.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Sidecar metadata written next to the model; the eval leak guard reads it.
#[derive(Serialize, Deserialize)]
struct ModelMeta {
    train_subjects: Vec<String>,
    val_subject: Option<String>,
    seed: u64,
    profile: String,
    arrangements: Vec<String>,
}

fn meta_path(model_path: &Path) -> PathBuf {
    let mut os = model_path.as_os_str().to_os_string();
    os.push(".meta.json");
    PathBuf::from(os)
}

fn manifest_in(dir: &Path) -> PathBuf {
    dir.join("manifest.csv")
}

fn cmd_train(args: TrainArgs, file: &FileConfig) -> anyhow::Result<()> {
    let seed = resolve_seed(args.seed, file)?;
    let profile = Profile::parse(
        &args.profile.or_else(|| file.profile.clone()).unwrap_or_else(|| "full".into()),
    )
    .map_err(|e| usage(e.to_string()))?;

    let stage2_dirs: Vec<PathBuf> = match &args.stage2 {
        Some(list) => list.split(',').map(|s| PathBuf::from(s.trim())).collect(),
        None => Vec::new(),
    };
    let stage2_weights: Vec<f32> = match &args.stage2_weights {
        Some(list) => {
            let parsed: Result<Vec<f32>, _> =
                list.split(',').map(|s| s.trim().parse::<f32>()).collect();
            let parsed = parsed.map_err(|_| usage("--stage2-weights must be numbers"))?;
            if parsed.len() != stage2_dirs.len() {
                return Err(usage(format!(
                    "{} stage-2 weights for {} stage-2 directories",
                    parsed.len(),
                    stage2_dirs.len()
                )));
            }
            parsed
        }
        None => vec![1.0; stage2_dirs.len()],
    };

    let stage1 = load_dataset(&manifest_in(&args.stage1), profile)?;
    let classes: BTreeSet<u8> = stage1.labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(anyhow!(fuse2d::Error::InvalidTraining(
            "stage-1 training set contains a single class".into()
        )));
    }

    let mut stage2 = Vec::new();
    let mut arrangement_set = BTreeSet::new();
    for e in read_manifest(&manifest_in(&args.stage1))? {
        arrangement_set.insert(e.arrangement);
    }
    for (dir, weight) in stage2_dirs.iter().zip(&stage2_weights) {
        let mut ds = load_dataset(&manifest_in(dir), profile)?;
        ds.weights.iter_mut().for_each(|w| *w = *weight);
        for e in read_manifest(&manifest_in(dir))? {
            arrangement_set.insert(e.arrangement);
        }
        stage2.push(ds);
    }
    if !stage2.is_empty() && !args.stage2_exclude_stage1 {
        stage2.push(stage1.clone());
    }

    // Validation holdout: explicit subject, or the last training subject in
    // sorted order when there is more than one.
    let subjects: BTreeSet<String> = stage1.subjects.iter().cloned().collect();
    let val_subject = if args.no_val {
        None
    } else {
        match args.val_subject.or_else(|| file.val_subject.clone()) {
            Some(id) => Some(id),
            None if subjects.len() > 1 => subjects.iter().next_back().cloned(),
            None => {
                log::warn!("single training subject: validation holdout disabled");
                None
            }
        }
    };

    let cfg = TrainConfig {
        adam: AdamConfig {
            learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(0.001),
            ..AdamConfig::default()
        },
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(64),
        epochs: args.epochs.or(file.epochs).unwrap_or(16),
        stage2_epochs: args.stage2_epochs.or(file.stage2_epochs),
        shuffle: true,
        seed,
        profile,
        validation_subject: val_subject.clone(),
    };

    let (model, history) = fit_two_stage(&stage1, &stage2, &cfg)?;

    save_model(&model, &args.out)?;
    let history_path = args
        .history
        .unwrap_or_else(|| PathBuf::from(format!("{}.history.csv", args.out.display())));
    write_history_csv(&history, &history_path)?;

    let mut train_subjects: BTreeSet<String> = subjects;
    for ds in &stage2 {
        train_subjects.extend(ds.subjects.iter().cloned());
    }
    let meta = ModelMeta {
        train_subjects: train_subjects.into_iter().collect(),
        val_subject,
        seed,
        profile: profile.as_str().to_string(),
        arrangements: arrangement_set.into_iter().collect(),
    };
    let meta_file = meta_path(&args.out);
    std::fs::write(&meta_file, serde_json::to_string_pretty(&meta)? + "\n")
        .map_err(|e| fuse2d::Error::Io { path: meta_file.clone(), source: e })?;

    let last = history.last().expect("at least one epoch");
    println!(
        "trained {} model ({} params) to train_acc {:.4}; wrote {}, {} and {}",
        profile.as_str(),
        model.param_count(),
        last.train_acc,
        args.out.display(),
        history_path.display(),
        meta_file.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn profile_for_model(model: &cnn::Model<f32>) -> anyhow::Result<Profile> {
    let shape = model.input_shape();
    for p in [Profile::Full, Profile::Tiny] {
        if p.input_shape() == shape {
            return Ok(p);
        }
    }
    Err(anyhow!(fuse2d::Error::InvalidModel(format!(
        "model input {}x{}x{} matches no known profile",
        shape.h, shape.w, shape.c
    ))))
}

fn cmd_eval(args: EvalArgs, file: &FileConfig) -> anyhow::Result<()> {
    let positive = match args
        .positive
        .or_else(|| file.positive.clone())
        .unwrap_or_else(|| "nostress".into())
        .as_str()
    {
        "nostress" => ClassLabel::NoStress,
        "stress" => ClassLabel::Stress,
        other => return Err(usage(format!("--positive must be nostress or stress, got {other:?}"))),
    };

    let model = load_model(&args.model)?;
    let profile = profile_for_model(&model)?;
    let manifest = manifest_in(&args.data);
    let entries = read_manifest(&manifest)?;
    let test_subjects = manifest_subjects(&entries);

    // Subject-independence guard.
    let meta_file = meta_path(&args.model);
    let train_subjects: Option<BTreeSet<String>> = if let Some(tm) = &args.train_manifest {
        Some(manifest_subjects(&read_manifest(tm)?))
    } else if meta_file.is_file() {
        let raw = std::fs::read_to_string(&meta_file)
            .map_err(|e| fuse2d::Error::Io { path: meta_file.clone(), source: e })?;
        let meta: ModelMeta = serde_json::from_str(&raw)
            .with_context(|| format!("parsing {}", meta_file.display()))?;
        Some(meta.train_subjects.into_iter().collect())
    } else {
        None
    };
    if !args.allow_leak {
        match &train_subjects {
            Some(train) => {
                let overlap: Vec<&String> = test_subjects.intersection(train).collect();
                if !overlap.is_empty() {
                    return Err(anyhow!(fuse2d::Error::InvalidTraining(format!(
                        "test subjects {overlap:?} were part of training; evaluation would leak \
                         (pass --allow-leak to override)"
                    ))));
                }
            }
            None => {
                return Err(anyhow!(fuse2d::Error::InvalidTraining(format!(
                    "{} is missing and no --train-manifest was given; cannot verify subject \
                     independence (pass --allow-leak to override)",
                    meta_file.display()
                ))));
            }
        }
    }

    let data = load_dataset(&manifest, profile)?;
    let (pred_idx, probs) = model.predict(&data.images)?;
    let pred: Vec<ClassLabel> = pred_idx
        .iter()
        .map(|&i| ClassLabel::from_index(i).expect("binary output"))
        .collect();
    let truth: Vec<ClassLabel> = data
        .labels
        .iter()
        .map(|&y| ClassLabel::from_index(y as usize).expect("binary label"))
        .collect();
    let scores: Vec<f64> = probs.iter().map(|p| p[positive.index()] as f64).collect();

    let cm = fuse2d::metrics::confusion_counts(&pred, &truth, positive)?;
    let m = fuse2d::metrics::classification_metrics(&cm)?;
    let auc = fuse2d::metrics::roc_auc(&scores, &truth, positive)?;

    let negative = match positive {
        ClassLabel::NoStress => ClassLabel::Stress,
        ClassLabel::Stress => ClassLabel::NoStress,
    };
    let neg_m = fuse2d::metrics::classification_metrics(&fuse2d::metrics::confusion_counts(
        &pred, &truth, negative,
    )?)?;

    let mut report = fuse2d::metrics::EvalReport {
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        auc,
        confusion: cm,
        meta: fuse2d::metrics::RunMeta {
            model_id: args.model.display().to_string(),
            dataset_id: args.data.display().to_string(),
            arrangements: {
                let set: BTreeSet<String> =
                    entries.iter().map(|e| e.arrangement.clone()).collect();
                set.into_iter().collect()
            },
            seed: 0,
            positive_class: positive.as_str().to_string(),
            negative_precision: neg_m.precision,
            negative_recall: neg_m.recall,
        },
    };
    if meta_file.is_file() {
        if let Ok(meta) = serde_json::from_str::<ModelMeta>(
            &std::fs::read_to_string(&meta_file).unwrap_or_default(),
        ) {
            report.meta.seed = meta.seed;
        }
    }

    fuse2d::metrics::write_report(&report, &args.out)?;
    if let Some(roc_path) = &args.roc {
        let points = fuse2d::metrics::roc_points(&scores, &truth, positive)?;
        fuse2d::metrics::write_roc_csv(&points, roc_path)?;
    }
    println!(
        "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  auc {:.4}  ({} examples) -> {}",
        report.accuracy,
        report.precision,
        report.recall,
        report.f1,
        report.auc,
        data.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

fn cmd_gradcheck(args: GradcheckArgs) -> anyhow::Result<()> {
    let (arch, shape) = check_arch();
    let report = run_gradient_check(&arch, shape, args.examples, args.seed, args.step)?;
    for (name, err) in &report.per_layer {
        println!("{name:12} max relative error {err:.3e}");
    }
    println!(
        "checked {} parameters, max relative error {:.3e}",
        report.checked_params, report.max_rel_err
    );
    if report.max_rel_err >= 1e-3 {
        return Err(anyhow!(fuse2d::Error::InvalidModel(format!(
            "gradient check failed: {:.3e} >= 1e-3",
            report.max_rel_err
        ))));
    }
    println!("gradient check passed");
    Ok(())
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(exit_code_for(&err));
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args, &file),
        Command::Images(args) => cmd_images(args, &file),
        Command::Train(args) => cmd_train(args, &file),
        Command::Eval(args) => cmd_eval(args, &file),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

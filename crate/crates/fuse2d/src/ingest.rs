//! Loading and preconditioning of multirate physiological recordings.
//!
//! A recording bundles three channels sampled at different rates (PPG 64 Hz,
//! EDA 4 Hz, ACC 32 Hz by default) together with interval labels. The on-disk
//! format is a directory of plain text files:
//!
//! ```text
//! <subject>/
//!   subject.json   {"id": "S01", "rates": {"ppg": 64, "eda": 4, "acc": 32}}
//!   ppg.csv        one decimal value per line
//!   eda.csv        one decimal value per line
//!   acc.csv        "x,y,z" per line
//!   labels.csv     "start_s,end_s,label", label in {stress, nostress, ignore}
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default PPG sampling rate in Hz.
pub const PPG_RATE: u32 = 64;
/// Default EDA sampling rate in Hz.
pub const EDA_RATE: u32 = 4;
/// Default ACC sampling rate in Hz.
pub const ACC_RATE: u32 = 32;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// The three signal modalities handled by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignalKind {
    Ppg,
    Eda,
    Acc,
}

impl SignalKind {
    /// One-letter code used in arrangement names and band maps.
    pub fn code(self) -> char {
        match self {
            SignalKind::Ppg => 'P',
            SignalKind::Eda => 'E',
            SignalKind::Acc => 'A',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'P' => Some(SignalKind::Ppg),
            'E' => Some(SignalKind::Eda),
            'A' => Some(SignalKind::Acc),
            _ => None,
        }
    }
}

/// Sampling-rate description for one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSpec {
    pub kind: SignalKind,
    /// Samples per second; always positive.
    pub rate: u32,
}

impl ChannelSpec {
    pub fn new(kind: SignalKind, rate: u32) -> Result<Self> {
        if rate == 0 {
            return Err(Error::InvalidConfig(format!(
                "channel {:?} has zero sampling rate",
                kind
            )));
        }
        Ok(ChannelSpec { kind, rate })
    }

    /// The default rates: PPG 64 Hz, EDA 4 Hz, ACC 32 Hz.
    pub fn default_for(kind: SignalKind) -> Self {
        let rate = match kind {
            SignalKind::Ppg => PPG_RATE,
            SignalKind::Eda => EDA_RATE,
            SignalKind::Acc => ACC_RATE,
        };
        ChannelSpec { kind, rate }
    }
}

/// Binary class assigned to a kept window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassLabel {
    /// The "positive" class in the default evaluation convention.
    NoStress,
    Stress,
}

impl ClassLabel {
    /// Class index used by the classifier: NoStress = 0, Stress = 1.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::NoStress => 0,
            ClassLabel::Stress => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(ClassLabel::NoStress),
            1 => Some(ClassLabel::Stress),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::NoStress => "nostress",
            ClassLabel::Stress => "stress",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nostress" => Some(ClassLabel::NoStress),
            "stress" => Some(ClassLabel::Stress),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label carried by an interval of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalLabel {
    Stress,
    NoStress,
    /// Data to exclude from windowing (transitional or unlabeled conditions).
    Ignore,
}

impl IntervalLabel {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stress" => Some(IntervalLabel::Stress),
            "nostress" => Some(IntervalLabel::NoStress),
            "ignore" => Some(IntervalLabel::Ignore),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntervalLabel::Stress => "stress",
            IntervalLabel::NoStress => "nostress",
            IntervalLabel::Ignore => "ignore",
        }
    }

    /// The binary class for windowing, or `None` for ignored intervals.
    pub fn class(self) -> Option<ClassLabel> {
        match self {
            IntervalLabel::Stress => Some(ClassLabel::Stress),
            IntervalLabel::NoStress => Some(ClassLabel::NoStress),
            IntervalLabel::Ignore => None,
        }
    }
}

/// Half-open labeled interval `[start_s, end_s)` in whole seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelInterval {
    pub start_s: u32,
    pub end_s: u32,
    pub label: IntervalLabel,
}

impl LabelInterval {
    pub fn new(start_s: u32, end_s: u32, label: IntervalLabel) -> Result<Self> {
        if end_s <= start_s {
            return Err(Error::InvalidRecording(format!(
                "label interval [{start_s}, {end_s}) is empty or reversed"
            )));
        }
        Ok(LabelInterval {
            start_s,
            end_s,
            label,
        })
    }

    /// True if `[start_s, start_s + len_s)` lies fully inside this interval.
    pub fn contains_span(&self, start_s: u32, len_s: u32) -> bool {
        start_s >= self.start_s && start_s + len_s <= self.end_s
    }
}

/// One subject's multirate recording. Immutable after construction; all
/// channel lengths are consistent with an integer duration in seconds.
#[derive(Debug, Clone)]
pub struct Recording {
    subject_id: String,
    ppg: Vec<f64>,
    eda: Vec<f64>,
    acc_xyz: Vec<[f64; 3]>,
    labels: Vec<LabelInterval>,
    specs: [ChannelSpec; 3],
}

impl Recording {
    /// Builds a recording, validating channel/rate consistency and labels.
    pub fn new(
        subject_id: impl Into<String>,
        ppg: Vec<f64>,
        eda: Vec<f64>,
        acc_xyz: Vec<[f64; 3]>,
        labels: Vec<LabelInterval>,
        specs: [ChannelSpec; 3],
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        let [ps, es, as_] = specs;
        if ps.kind != SignalKind::Ppg || es.kind != SignalKind::Eda || as_.kind != SignalKind::Acc
        {
            return Err(Error::InvalidConfig(
                "channel specs must be ordered [ppg, eda, acc]".into(),
            ));
        }
        if !ppg.len().is_multiple_of(ps.rate as usize) {
            return Err(Error::InvalidRecording(format!(
                "PPG length {} is not a whole number of seconds at {} Hz",
                ppg.len(),
                ps.rate
            )));
        }
        let duration = (ppg.len() / ps.rate as usize) as u32;
        for (name, len, rate) in [
            ("EDA", eda.len(), es.rate),
            ("ACC", acc_xyz.len(), as_.rate),
        ] {
            let expected = duration as usize * rate as usize;
            if len != expected {
                return Err(Error::InvalidRecording(format!(
                    "{name} has {len} samples, expected {expected} for {duration} s at {rate} Hz"
                )));
            }
        }
        validate_labels(&labels, duration)?;
        Ok(Recording {
            subject_id,
            ppg,
            eda,
            acc_xyz,
            labels,
            specs,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    /// Duration in whole seconds.
    pub fn duration_s(&self) -> u32 {
        (self.ppg.len() / self.specs[0].rate as usize) as u32
    }

    pub fn ppg(&self) -> &[f64] {
        &self.ppg
    }

    pub fn eda(&self) -> &[f64] {
        &self.eda
    }

    pub fn acc_xyz(&self) -> &[[f64; 3]] {
        &self.acc_xyz
    }

    pub fn labels(&self) -> &[LabelInterval] {
        &self.labels
    }

    pub fn specs(&self) -> &[ChannelSpec; 3] {
        &self.specs
    }

    /// Rate of one channel in Hz.
    pub fn rate(&self, kind: SignalKind) -> u32 {
        match kind {
            SignalKind::Ppg => self.specs[0].rate,
            SignalKind::Eda => self.specs[1].rate,
            SignalKind::Acc => self.specs[2].rate,
        }
    }
}

fn validate_labels(labels: &[LabelInterval], duration_s: u32) -> Result<()> {
    for iv in labels {
        if iv.end_s > duration_s {
            return Err(Error::InvalidRecording(format!(
                "label interval [{}, {}) extends past the {duration_s} s recording",
                iv.start_s, iv.end_s
            )));
        }
    }
    let mut sorted: Vec<&LabelInterval> = labels.iter().collect();
    sorted.sort_by_key(|iv| iv.start_s);
    for pair in sorted.windows(2) {
        if pair[1].start_s < pair[0].end_s {
            return Err(Error::InvalidRecording(format!(
                "label intervals [{}, {}) and [{}, {}) overlap",
                pair[0].start_s, pair[0].end_s, pair[1].start_s, pair[1].end_s
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Loading and writing the directory format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SubjectMeta {
    id: String,
    rates: SubjectRates,
}

#[derive(Serialize, Deserialize)]
struct SubjectRates {
    ppg: u32,
    eda: u32,
    acc: u32,
}

/// Loads one recording from its directory.
///
/// The duration is derived from the PPG channel; trailing samples that do not
/// complete a whole second are truncated with a warning. Channels whose whole
/// second count disagrees with the PPG channel produce an error.
pub fn load_recording(dir: &Path) -> Result<Recording> {
    let meta_path = dir.join("subject.json");
    if !meta_path.is_file() {
        return Err(Error::MissingFile(meta_path));
    }
    let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: SubjectMeta = serde_json::from_str(&raw)
        .map_err(|e| Error::row(&meta_path, e.line(), e.to_string()))?;

    let specs = [
        ChannelSpec::new(SignalKind::Ppg, meta.rates.ppg)?,
        ChannelSpec::new(SignalKind::Eda, meta.rates.eda)?,
        ChannelSpec::new(SignalKind::Acc, meta.rates.acc)?,
    ];

    let mut ppg = read_scalar_csv(&dir.join("ppg.csv"))?;
    let mut eda = read_scalar_csv(&dir.join("eda.csv"))?;
    let mut acc = read_triple_csv(&dir.join("acc.csv"))?;
    let labels = read_labels_csv(&dir.join("labels.csv"))?;

    // The PPG channel defines the duration; every channel must cover the same
    // number of whole seconds.
    let duration = (ppg.len() / specs[0].rate as usize) as u32;
    if duration == 0 {
        return Err(Error::InvalidRecording(format!(
            "PPG has only {} samples, less than one second at {} Hz",
            ppg.len(),
            specs[0].rate
        )));
    }
    let mut truncated = false;
    for (name, len, rate) in [
        ("ppg.csv", ppg.len(), specs[0].rate),
        ("eda.csv", eda.len(), specs[1].rate),
        ("acc.csv", acc.len(), specs[2].rate),
    ] {
        let whole = (len / rate as usize) as u32;
        if whole != duration {
            return Err(Error::InvalidRecording(format!(
                "{name} covers {whole} whole seconds but PPG covers {duration}"
            )));
        }
        if len % rate as usize != 0 {
            truncated = true;
        }
    }
    if truncated {
        log::warn!(
            "{}: trailing partial second truncated to {duration} s",
            dir.display()
        );
    }
    ppg.truncate(duration as usize * specs[0].rate as usize);
    eda.truncate(duration as usize * specs[1].rate as usize);
    acc.truncate(duration as usize * specs[2].rate as usize);

    Recording::new(meta.id, ppg, eda, acc, labels, specs)
}

/// Writes a recording as the directory format understood by [`load_recording`].
pub fn write_recording(dir: &Path, rec: &Recording) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = SubjectMeta {
        id: rec.subject_id().to_string(),
        rates: SubjectRates {
            ppg: rec.specs()[0].rate,
            eda: rec.specs()[1].rate,
            acc: rec.specs()[2].rate,
        },
    };
    let meta_path = dir.join("subject.json");
    let body = serde_json::to_string_pretty(&meta).expect("subject meta serializes");
    fs::write(&meta_path, body + "\n").map_err(|e| Error::io(&meta_path, e))?;

    write_lines(&dir.join("ppg.csv"), rec.ppg().iter().map(f64::to_string))?;
    write_lines(&dir.join("eda.csv"), rec.eda().iter().map(f64::to_string))?;
    write_lines(
        &dir.join("acc.csv"),
        rec.acc_xyz()
            .iter()
            .map(|[x, y, z]| format!("{x},{y},{z}")),
    )?;
    write_lines(
        &dir.join("labels.csv"),
        rec.labels()
            .iter()
            .map(|iv| format!("{},{},{}", iv.start_s, iv.end_s, iv.label.as_str())),
    )?;
    Ok(())
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_scalar_csv(path: &Path) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::row(path, i + 1, format!("expected a number, got {line:?}")))?;
        out.push(v);
    }
    Ok(out)
}

fn read_triple_csv(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut triple = [0.0f64; 3];
        for slot in triple.iter_mut() {
            let field = parts.next().ok_or_else(|| {
                Error::row(path, i + 1, format!("expected x,y,z, got {line:?}"))
            })?;
            *slot = field.trim().parse().map_err(|_| {
                Error::row(path, i + 1, format!("expected a number, got {field:?}"))
            })?;
        }
        if parts.next().is_some() {
            return Err(Error::row(path, i + 1, format!("too many fields in {line:?}")));
        }
        out.push(triple);
    }
    Ok(out)
}

fn read_labels_csv(path: &Path) -> Result<Vec<LabelInterval>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::row(
                path,
                i + 1,
                format!("expected start_s,end_s,label, got {line:?}"),
            ));
        }
        let start_s: u32 = fields[0].trim().parse().map_err(|_| {
            Error::row(path, i + 1, format!("bad start second {:?}", fields[0]))
        })?;
        let end_s: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::row(path, i + 1, format!("bad end second {:?}", fields[1])))?;
        let label = IntervalLabel::parse(fields[2]).ok_or_else(|| {
            Error::row(path, i + 1, format!("unknown label {:?}", fields[2]))
        })?;
        out.push(LabelInterval::new(start_s, end_s, label)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Preconditioning
// ---------------------------------------------------------------------------

/// Removes the least-squares line over the sample index from a channel.
///
/// The residual has zero mean and zero refit slope to within numerical
/// precision, and the output length equals the input length.
pub fn detrend_linear(channel: &[f64]) -> Result<Vec<f64>> {
    if channel.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "detrend needs at least 2 samples, got {}",
            channel.len()
        )));
    }
    let n = channel.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = channel.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &y) in channel.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(channel
        .iter()
        .enumerate()
        .map(|(i, &y)| y - (y_mean + slope * (i as f64 - x_mean)))
        .collect())
}

/// Composite acceleration magnitude `sqrt(x^2 + y^2 + z^2)` per sample.
pub fn acc_magnitude(acc_xyz: &[[f64; 3]]) -> Vec<f64> {
    acc_xyz
        .iter()
        .map(|[x, y, z]| (x * x + y * y + z * z).sqrt())
        .collect()
}

/// Preconditioning options applied before windowing.
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    /// Detrend PPG and EDA with a whole-recording least-squares line. The ACC
    /// magnitude is never detrended; its baseline carries motion information.
    pub detrend: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { detrend: true }
    }
}

/// Applies preconditioning, returning a new recording with the same labels.
pub fn preprocess(rec: &Recording, cfg: &PreprocessConfig) -> Result<Recording> {
    if !cfg.detrend {
        return Ok(rec.clone());
    }
    Recording::new(
        rec.subject_id(),
        detrend_linear(rec.ppg())?,
        detrend_linear(rec.eda())?,
        rec.acc_xyz().to_vec(),
        rec.labels().to_vec(),
        *rec.specs(),
    )
}

// ---------------------------------------------------------------------------
// Subject-independent split
// ---------------------------------------------------------------------------

/// Partitions recordings into train and test sides by subject id.
///
/// Every id in `test_ids` must exist, and at least one subject must remain on
/// the training side.
pub fn split_by_subject(
    recordings: Vec<Recording>,
    test_ids: &BTreeSet<String>,
) -> Result<(Vec<Recording>, Vec<Recording>)> {
    if test_ids.is_empty() {
        return Err(Error::InvalidConfig("no test subjects given".into()));
    }
    let present: BTreeSet<&str> = recordings.iter().map(|r| r.subject_id()).collect();
    for id in test_ids {
        if !present.contains(id.as_str()) {
            return Err(Error::UnknownSubject(id.clone()));
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = recordings
        .into_iter()
        .partition(|r| test_ids.contains(r.subject_id()));
    if train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    Ok((train, test))
}

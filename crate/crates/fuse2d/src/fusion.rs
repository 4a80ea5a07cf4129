//! Segmentation of recordings into windows and assembly of 32x32
//! signal-representation matrices.
//!
//! Each kept window is normalized per channel, low-rate channels are aligned
//! by sample repetition, and the channels are written row-major into a 32x32
//! grid as contiguous row bands. The band order is given by an
//! [`Arrangement`]; permuting it yields row-block permutations of the same
//! window, which downstream training uses as augmentation.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{acc_magnitude, ClassLabel, Recording, SignalKind};

/// Side length of the signal representation matrix.
pub const MATRIX_SIDE: usize = 32;
/// Total number of matrix cells.
pub const MATRIX_CELLS: usize = MATRIX_SIDE * MATRIX_SIDE;

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

/// Segmentation parameters in whole seconds.
#[derive(Debug, Clone, Copy)]
pub struct WindowConfig {
    pub window_s: u32,
    pub stride_s: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_s: 5,
            stride_s: 1,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_s == 0 || self.stride_s == 0 {
            return Err(Error::InvalidConfig(
                "window and stride must be at least 1 s".into(),
            ));
        }
        Ok(())
    }
}

/// One labeled window of per-channel samples. The ACC channel holds the
/// composite magnitude, not raw axes.
#[derive(Debug, Clone)]
pub struct Window {
    pub subject_id: String,
    pub start_s: u32,
    pub label: ClassLabel,
    pub ppg: Vec<f64>,
    pub eda: Vec<f64>,
    pub acc: Vec<f64>,
}

impl Window {
    /// Samples of one channel.
    pub fn channel(&self, kind: SignalKind) -> &[f64] {
        match kind {
            SignalKind::Ppg => &self.ppg,
            SignalKind::Eda => &self.eda,
            SignalKind::Acc => &self.acc,
        }
    }
}

/// Cuts a recording into labeled windows.
///
/// Window starts are `0, stride, 2*stride, ...` up to `duration - window`,
/// giving `floor((T - W) / S) + 1` candidates. A candidate is kept only when
/// its span lies fully inside a single stress or no-stress interval; windows
/// that straddle boundaries or fall in ignored regions are dropped.
pub fn slide_windows(rec: &Recording, cfg: &WindowConfig) -> Result<Vec<Window>> {
    cfg.validate()?;
    let duration = rec.duration_s();
    if duration < cfg.window_s {
        return Err(Error::WindowTooLong {
            window_s: cfg.window_s,
            duration_s: duration,
        });
    }
    let acc_mag = acc_magnitude(rec.acc_xyz());
    let ppg_rate = rec.rate(SignalKind::Ppg) as usize;
    let eda_rate = rec.rate(SignalKind::Eda) as usize;
    let acc_rate = rec.rate(SignalKind::Acc) as usize;

    let mut out = Vec::new();
    let mut start = 0u32;
    while start + cfg.window_s <= duration {
        let label = rec
            .labels()
            .iter()
            .find(|iv| iv.contains_span(start, cfg.window_s))
            .and_then(|iv| iv.label.class());
        if let Some(label) = label {
            let s = start as usize;
            let w = cfg.window_s as usize;
            out.push(Window {
                subject_id: rec.subject_id().to_string(),
                start_s: start,
                label,
                ppg: rec.ppg()[s * ppg_rate..(s + w) * ppg_rate].to_vec(),
                eda: rec.eda()[s * eda_rate..(s + w) * eda_rate].to_vec(),
                acc: acc_mag[s * acc_rate..(s + w) * acc_rate].to_vec(),
            });
        }
        start += cfg.stride_s;
    }
    Ok(out)
}

/// Min-max normalizes each channel of a window into [0, 1].
///
/// A constant channel maps to 0.5 everywhere. Non-finite samples are
/// rejected.
pub fn normalize_window(w: &Window) -> Result<Window> {
    let mut out = w.clone();
    for (name, channel) in [
        ("ppg", &mut out.ppg),
        ("eda", &mut out.eda),
        ("acc", &mut out.acc),
    ] {
        normalize_channel(name, channel)?;
    }
    Ok(out)
}

fn normalize_channel(name: &str, channel: &mut [f64]) -> Result<()> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in channel.iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} channel")));
        }
        min = min.min(v);
        max = max.max(v);
    }
    if min == max {
        channel.iter_mut().for_each(|v| *v = 0.5);
    } else {
        let span = max - min;
        channel.iter_mut().for_each(|v| *v = (*v - min) / span);
    }
    Ok(())
}

/// Repeats each sample `factor` times consecutively.
pub fn repeat_samples(samples: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::InvalidLayout("repetition factor must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(samples.len() * factor);
    for &s in samples {
        out.extend(std::iter::repeat_n(s, factor));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Arrangements
// ---------------------------------------------------------------------------

/// An ordering of signal bands inside the matrix, e.g. PEA or EAP.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Arrangement {
    order: Vec<SignalKind>,
}

impl Arrangement {
    /// Builds an arrangement, rejecting duplicate signals.
    pub fn new(order: Vec<SignalKind>) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::InvalidArrangement("empty arrangement".into()));
        }
        for (i, kind) in order.iter().enumerate() {
            if order[..i].contains(kind) {
                return Err(Error::InvalidArrangement(format!(
                    "signal {} appears more than once",
                    kind.code()
                )));
            }
        }
        Ok(Arrangement { order })
    }

    /// Parses a code string such as "PEA" or "EAP".
    pub fn parse(s: &str) -> Result<Self> {
        let order: Vec<SignalKind> = s
            .chars()
            .map(|c| {
                SignalKind::from_code(c)
                    .ok_or_else(|| Error::InvalidArrangement(format!("unknown signal code {c:?}")))
            })
            .collect::<Result<_>>()?;
        Arrangement::new(order)
    }

    pub fn order(&self) -> &[SignalKind] {
        &self.order
    }

    /// Code name, e.g. "PEA".
    pub fn name(&self) -> String {
        self.order.iter().map(|k| k.code()).collect()
    }

    /// The primary PPG-EDA-ACC order.
    pub fn identity() -> Self {
        Arrangement {
            order: vec![SignalKind::Ppg, SignalKind::Eda, SignalKind::Acc],
        }
    }
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// All `n!` permutations of the given signals, in lexicographic order with
/// respect to the input listing.
pub fn enumerate_arrangements(signals: &[SignalKind]) -> Result<Vec<Arrangement>> {
    // Reject duplicates up front.
    Arrangement::new(signals.to_vec())?;
    let mut result = Vec::new();
    let mut current = Vec::with_capacity(signals.len());
    let mut used = vec![false; signals.len()];
    permute(signals, &mut used, &mut current, &mut result);
    Ok(result)
}

fn permute(
    signals: &[SignalKind],
    used: &mut [bool],
    current: &mut Vec<SignalKind>,
    result: &mut Vec<Arrangement>,
) {
    if current.len() == signals.len() {
        result.push(Arrangement {
            order: current.clone(),
        });
        return;
    }
    for i in 0..signals.len() {
        if !used[i] {
            used[i] = true;
            current.push(signals[i]);
            permute(signals, used, current, result);
            current.pop();
            used[i] = false;
        }
    }
}

/// Resolves an arrangement selector against the full PPG/EDA/ACC signal set.
///
/// `"all"` expands to every permutation; otherwise the selector is a comma
/// list of codes such as `"PEA,EPA,EAP"`. Each named arrangement must use all
/// three signals exactly once, and repeats are rejected.
pub fn parse_arrangement_selector(selector: &str) -> Result<Vec<Arrangement>> {
    let full = [SignalKind::Ppg, SignalKind::Eda, SignalKind::Acc];
    if selector.trim().eq_ignore_ascii_case("all") {
        return enumerate_arrangements(&full);
    }
    let mut out: Vec<Arrangement> = Vec::new();
    for item in selector.split(',') {
        let arr = Arrangement::parse(item.trim())?;
        if arr.order().len() != full.len() {
            return Err(Error::InvalidArrangement(format!(
                "{} does not use all of P, E, A",
                item.trim()
            )));
        }
        if out.contains(&arr) {
            return Err(Error::InvalidArrangement(format!(
                "duplicate arrangement {}",
                arr.name()
            )));
        }
        out.push(arr);
    }
    if out.is_empty() {
        return Err(Error::InvalidArrangement("empty selector".into()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Matrix assembly
// ---------------------------------------------------------------------------

/// What to do with matrix cells not covered by any signal band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillPolicy {
    /// Leave uncovered rows at 0.0 (default).
    Zeros,
    /// Cycle the concatenated band sequence until the matrix is full.
    RepeatBands,
}

/// Per-signal sample repetition factors plus the fill policy.
///
/// Under the defaults one 5-second window yields 320 PPG cells (x1), 160 EDA
/// cells (20 samples x8) and 160 ACC cells (x1): 640 cells in 20 rows, with
/// 12 rows left to the fill policy.
#[derive(Debug, Clone, Copy)]
pub struct BandLayout {
    pub ppg_repeat: usize,
    pub eda_repeat: usize,
    pub acc_repeat: usize,
    pub fill: FillPolicy,
}

impl Default for BandLayout {
    fn default() -> Self {
        BandLayout {
            ppg_repeat: 1,
            eda_repeat: 8,
            acc_repeat: 1,
            fill: FillPolicy::Zeros,
        }
    }
}

impl BandLayout {
    pub fn repeat_for(&self, kind: SignalKind) -> usize {
        match kind {
            SignalKind::Ppg => self.ppg_repeat,
            SignalKind::Eda => self.eda_repeat,
            SignalKind::Acc => self.acc_repeat,
        }
    }
}

/// Per-row ownership tag of the assembled matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowTag {
    Signal(SignalKind),
    Fill,
}

/// A 32x32 grid of normalized values with band provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    cells: Vec<f64>,
    band_map: [RowTag; MATRIX_SIDE],
    subject_id: String,
    start_s: u32,
    arrangement: String,
}

impl SignalMatrix {
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * MATRIX_SIDE + col]
    }

    pub fn band_map(&self) -> &[RowTag; MATRIX_SIDE] {
        &self.band_map
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn start_s(&self) -> u32 {
        self.start_s
    }

    /// Name of the arrangement the matrix was assembled under.
    pub fn arrangement(&self) -> &str {
        &self.arrangement
    }

    /// `<subject>_<start_s>_<arrangement>` stem for output files.
    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.subject_id, self.start_s, self.arrangement)
    }
}

/// Assembles a normalized window into a 32x32 matrix under the given
/// arrangement and band layout.
///
/// Bands are written row-major in arrangement order; every band must fill
/// whole rows and the bands together must fit in the matrix. Uncovered rows
/// are handled by the fill policy and tagged [`RowTag::Fill`].
pub fn assemble_matrix(
    w: &Window,
    arrangement: &Arrangement,
    layout: &BandLayout,
) -> Result<SignalMatrix> {
    let mut cells = Vec::with_capacity(MATRIX_CELLS);
    let mut band_map = [RowTag::Fill; MATRIX_SIDE];

    for kind in arrangement.order() {
        let samples = w.channel(*kind);
        for &v in samples {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::NotNormalized(format!(
                    "{} sample {v} outside [0, 1]; normalize the window first",
                    kind.code()
                )));
            }
        }
        let band = repeat_samples(samples, layout.repeat_for(*kind))?;
        if band.len() % MATRIX_SIDE != 0 {
            return Err(Error::InvalidLayout(format!(
                "{} band has {} cells, not a whole number of {MATRIX_SIDE}-cell rows",
                kind.code(),
                band.len()
            )));
        }
        if cells.len() + band.len() > MATRIX_CELLS {
            return Err(Error::InvalidLayout(format!(
                "bands need {} cells, more than the {MATRIX_CELLS} available",
                cells.len() + band.len()
            )));
        }
        let first_row = cells.len() / MATRIX_SIDE;
        let rows = band.len() / MATRIX_SIDE;
        for tag in band_map.iter_mut().skip(first_row).take(rows) {
            *tag = RowTag::Signal(*kind);
        }
        cells.extend_from_slice(&band);
    }

    let used = cells.len();
    match layout.fill {
        FillPolicy::Zeros => cells.resize(MATRIX_CELLS, 0.0),
        FillPolicy::RepeatBands => {
            for i in 0..MATRIX_CELLS - used {
                cells.push(cells[i % used]);
            }
        }
    }

    Ok(SignalMatrix {
        cells,
        band_map,
        subject_id: w.subject_id.clone(),
        start_s: w.start_s,
        arrangement: arrangement.name(),
    })
}

/// Dumps a matrix as 32 rows of 32 comma-separated decimals.
pub fn write_matrix_csv(m: &SignalMatrix, path: &Path) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for row in m.cells.chunks(MATRIX_SIDE) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

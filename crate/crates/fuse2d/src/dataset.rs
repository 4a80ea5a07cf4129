//! Image dataset manifests and loading of PNG datasets into training arrays.
//!
//! A generated image directory holds the PNGs plus a `manifest.csv` with one
//! row per file: `path,subject,start_s,arrangement,scheme,label`. Paths are
//! relative to the manifest's directory.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::cnn::{Dataset, ImageBatch, Profile};
use crate::colorize::{downsample_block_topleft, IMAGE_SIDE, UPSCALE};
use crate::error::{Error, Result};
use crate::ingest::ClassLabel;

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// PNG path relative to the manifest's directory.
    pub path: String,
    pub subject: String,
    pub start_s: u32,
    pub arrangement: String,
    pub scheme: String,
    pub label: ClassLabel,
}

const HEADER: &str = "path,subject,start_s,arrangement,scheme,label";

/// Writes a manifest with a header row, in entry order.
pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{HEADER}").map_err(|e| Error::io(path, e))?;
    for e in entries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.path,
            e.subject,
            e.start_s,
            e.arrangement,
            e.scheme,
            e.label.as_str()
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads a manifest written by [`write_manifest`].
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == HEADER => {}
        _ => {
            return Err(Error::row(path, 1, format!("expected header {HEADER:?}")));
        }
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::row(path, i + 1, format!("expected 6 fields, got {}", fields.len())));
        }
        let start_s: u32 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::row(path, i + 1, format!("bad start second {:?}", fields[2])))?;
        let label = ClassLabel::parse(fields[5])
            .ok_or_else(|| Error::row(path, i + 1, format!("unknown label {:?}", fields[5])))?;
        entries.push(ManifestEntry {
            path: fields[0].trim().to_string(),
            subject: fields[1].trim().to_string(),
            start_s,
            arrangement: fields[3].trim().to_string(),
            scheme: fields[4].trim().to_string(),
            label,
        });
    }
    Ok(entries)
}

/// Distinct subject ids in a manifest.
pub fn manifest_subjects(entries: &[ManifestEntry]) -> BTreeSet<String> {
    entries.iter().map(|e| e.subject.clone()).collect()
}

/// Loads every image named by a manifest into a training dataset.
///
/// PNGs must be the 128x128 RGB files produced by the image pipeline. For the
/// tiny profile each 4x4 block's top-left pixel is taken, recovering the
/// 32x32 pre-upscale image exactly. Pixel bytes are scaled by 1/255.
pub fn load_dataset(manifest_path: &Path, profile: Profile) -> Result<Dataset> {
    let entries = read_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(Error::InvalidTraining(format!(
            "{}: manifest lists no images",
            manifest_path.display()
        )));
    }
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let shape = profile.input_shape();
    let mut images = ImageBatch::empty(shape.h, shape.w, shape.c);
    let mut labels = Vec::with_capacity(entries.len());
    let mut subjects = Vec::with_capacity(entries.len());
    for e in &entries {
        let png_path = root.join(&e.path);
        let img = image::open(&png_path).map_err(|err| match err {
            image::ImageError::IoError(io) => Error::io(&png_path, io),
            other => Error::InvalidImage(format!("{}: {other}", png_path.display())),
        })?;
        let rgb = img.to_rgb8();
        if rgb.width() as usize != IMAGE_SIDE || rgb.height() as usize != IMAGE_SIDE {
            return Err(Error::InvalidImage(format!(
                "{}: {}x{} pixels, expected {IMAGE_SIDE}x{IMAGE_SIDE}",
                png_path.display(),
                rgb.width(),
                rgb.height()
            )));
        }
        let bytes = match profile {
            Profile::Full => rgb.into_raw(),
            Profile::Tiny => downsample_block_topleft(rgb.as_raw(), IMAGE_SIDE, UPSCALE),
        };
        let scaled: Vec<f32> = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        images.push(&scaled);
        labels.push(e.label.index() as u8);
        subjects.push(e.subject.clone());
    }
    Dataset::new(images, labels, subjects)
}

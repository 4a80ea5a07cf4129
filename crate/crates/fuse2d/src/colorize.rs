//! Conversion of signal matrices into RGB images.
//!
//! Three schemes are supported: plain grayscale, a fixed per-signal channel
//! assignment (green PPG, red EDA, blue ACC), and a custom colorization that
//! sweeps hue from blue to red with a brightness floor so that lower values
//! come out darker. The 32x32 image is then upscaled x4 with nearest-neighbor
//! replication to the 128x128 classifier input size.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{RowTag, SignalMatrix, MATRIX_SIDE};
use crate::ingest::SignalKind;

/// Side length of the upscaled image.
pub const IMAGE_SIDE: usize = 128;
/// Nearest-neighbor replication factor.
pub const UPSCALE: usize = IMAGE_SIDE / MATRIX_SIDE;

/// Custom colorization clamps values at this ceiling before mapping.
pub const CUSTOM_CLAMP: f64 = 0.95;
/// Brightness floor of the custom scheme; keeps v = 0 visibly dark blue.
pub const CUSTOM_VALUE_FLOOR: f64 = 0.15;

// ---------------------------------------------------------------------------
// Schemes
// ---------------------------------------------------------------------------

/// How matrix values are turned into colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorScheme {
    Grayscale,
    ManualRgb,
    Custom,
}

impl ColorScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gray" | "grey" | "grayscale" => Ok(ColorScheme::Grayscale),
            "manual" | "rgb" => Ok(ColorScheme::ManualRgb),
            "custom" => Ok(ColorScheme::Custom),
            other => Err(Error::InvalidConfig(format!("unknown color scheme {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColorScheme::Grayscale => "gray",
            ColorScheme::ManualRgb => "manual",
            ColorScheme::Custom => "custom",
        }
    }
}

impl fmt::Display for ColorScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A colorized 32x32 matrix, one RGB triple per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbMatrix {
    pixels: Vec<u8>,
    scheme: ColorScheme,
    subject_id: String,
    start_s: u32,
    arrangement: String,
}

impl RgbMatrix {
    /// Raw row-major RGB bytes, `32 * 32 * 3` long.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * MATRIX_SIDE + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn scheme(&self) -> ColorScheme {
        self.scheme
    }
}

/// The final 128x128 RGB image fed to the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedImage {
    pixels: Vec<u8>,
    scheme: ColorScheme,
    subject_id: String,
    start_s: u32,
    arrangement: String,
}

impl FusedImage {
    /// Raw row-major RGB bytes, `128 * 128 * 3` long.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * IMAGE_SIDE + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn scheme(&self) -> ColorScheme {
        self.scheme
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn start_s(&self) -> u32 {
        self.start_s
    }

    pub fn arrangement(&self) -> &str {
        &self.arrangement
    }

    /// `<subject>_<start_s>_<arrangement>_<scheme>` stem for output files.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_{}_{}_{}",
            self.subject_id, self.start_s, self.arrangement, self.scheme
        )
    }
}

// ---------------------------------------------------------------------------
// Value-to-color maps
// ---------------------------------------------------------------------------

/// Round-half-up conversion of a [0, 1] intensity to an 8-bit channel.
fn to_byte(v: f64) -> u8 {
    (255.0 * v + 0.5).floor() as u8
}

fn check_cells(m: &SignalMatrix) -> Result<()> {
    for (i, &v) in m.cells().iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::NotNormalized(format!(
                "cell {i} holds {v}, outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// Grayscale color of one matrix value: R = G = B = round(255 v).
pub fn grayscale_rgb(v: f64) -> [u8; 3] {
    let b = to_byte(v);
    [b, b, b]
}

/// Custom-scheme color of one matrix value.
///
/// Values are clamped at 0.95, then mapped through an HSV sweep: hue runs
/// from blue (240 degrees) at the bottom to red (0) at the top, saturation is
/// fixed at 1, and the HSV value component rises linearly from the darkness
/// floor so that lower matrix values are always darker.
pub fn custom_rgb(v: f64) -> [u8; 3] {
    let u = v.min(CUSTOM_CLAMP) / CUSTOM_CLAMP;
    let hue = 240.0 * (1.0 - u);
    let (r, g, b) = hsv_to_rgb(hue, 1.0, custom_value_component(v));
    [to_byte(r), to_byte(g), to_byte(b)]
}

/// The HSV value component used by the custom scheme; strictly increasing in
/// the clamped value.
pub fn custom_value_component(v: f64) -> f64 {
    let u = v.min(CUSTOM_CLAMP) / CUSTOM_CLAMP;
    CUSTOM_VALUE_FLOOR + (1.0 - CUSTOM_VALUE_FLOOR) * u
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

fn map_with(
    m: &SignalMatrix,
    scheme: ColorScheme,
    mut color: impl FnMut(usize, f64) -> [u8; 3],
) -> RgbMatrix {
    let mut pixels = Vec::with_capacity(m.cells().len() * 3);
    for (i, &v) in m.cells().iter().enumerate() {
        pixels.extend_from_slice(&color(i / MATRIX_SIDE, v));
    }
    RgbMatrix {
        pixels,
        scheme,
        subject_id: m.subject_id().to_string(),
        start_s: m.start_s(),
        arrangement: m.arrangement().to_string(),
    }
}

/// Maps matrix values to gray intensities.
pub fn map_grayscale(m: &SignalMatrix) -> Result<RgbMatrix> {
    check_cells(m)?;
    Ok(map_with(m, ColorScheme::Grayscale, |_, v| grayscale_rgb(v)))
}

/// Maps each signal band to a fixed channel: PPG green, EDA red, ACC blue.
/// Fill rows are black.
pub fn map_manual_rgb(m: &SignalMatrix) -> Result<RgbMatrix> {
    check_cells(m)?;
    let tags = *m.band_map();
    Ok(map_with(m, ColorScheme::ManualRgb, move |row, v| {
        let b = to_byte(v);
        match tags[row] {
            RowTag::Signal(SignalKind::Ppg) => [0, b, 0],
            RowTag::Signal(SignalKind::Eda) => [b, 0, 0],
            RowTag::Signal(SignalKind::Acc) => [0, 0, b],
            RowTag::Fill => [0, 0, 0],
        }
    }))
}

/// Maps matrix values through the custom blue-to-red sweep.
pub fn map_custom(m: &SignalMatrix) -> Result<RgbMatrix> {
    check_cells(m)?;
    Ok(map_with(m, ColorScheme::Custom, |_, v| custom_rgb(v)))
}

/// Applies the named scheme.
pub fn apply_scheme(m: &SignalMatrix, scheme: ColorScheme) -> Result<RgbMatrix> {
    match scheme {
        ColorScheme::Grayscale => map_grayscale(m),
        ColorScheme::ManualRgb => map_manual_rgb(m),
        ColorScheme::Custom => map_custom(m),
    }
}

// ---------------------------------------------------------------------------
// Upscale and file output
// ---------------------------------------------------------------------------

/// Replicates every source pixel into a 4x4 block, producing the 128x128
/// classifier input.
pub fn upscale_nearest(img: &RgbMatrix) -> Result<FusedImage> {
    if img.pixels.len() != MATRIX_SIDE * MATRIX_SIDE * 3 {
        return Err(Error::InvalidImage(format!(
            "expected a {MATRIX_SIDE}x{MATRIX_SIDE} RGB input, got {} bytes",
            img.pixels.len()
        )));
    }
    let mut pixels = vec![0u8; IMAGE_SIDE * IMAGE_SIDE * 3];
    for row in 0..IMAGE_SIDE {
        for col in 0..IMAGE_SIDE {
            let src = ((row / UPSCALE) * MATRIX_SIDE + col / UPSCALE) * 3;
            let dst = (row * IMAGE_SIDE + col) * 3;
            pixels[dst..dst + 3].copy_from_slice(&img.pixels[src..src + 3]);
        }
    }
    Ok(FusedImage {
        pixels,
        scheme: img.scheme,
        subject_id: img.subject_id.clone(),
        start_s: img.start_s,
        arrangement: img.arrangement.clone(),
    })
}

/// Recovers the 32x32 pixel grid from an upscaled image by sampling each
/// block's top-left pixel. Exact inverse of [`upscale_nearest`].
pub fn downsample_block_topleft(pixels: &[u8], side: usize, factor: usize) -> Vec<u8> {
    let out_side = side / factor;
    let mut out = Vec::with_capacity(out_side * out_side * 3);
    for row in 0..out_side {
        for col in 0..out_side {
            let src = ((row * factor) * side + col * factor) * 3;
            out.extend_from_slice(&pixels[src..src + 3]);
        }
    }
    out
}

/// Writes an image as an 8-bit RGB PNG without alpha.
pub fn write_png(img: &FusedImage, path: &Path) -> Result<()> {
    let buffer: image::RgbImage =
        image::ImageBuffer::from_raw(IMAGE_SIDE as u32, IMAGE_SIDE as u32, img.pixels.clone())
            .expect("pixel buffer matches dimensions");
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::InvalidImage(format!("{}: {other}", path.display())),
        })
}

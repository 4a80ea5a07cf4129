//! Browser demo of the signal-to-image fusion pipeline.
//!
//! Exposes three operations to a static page via wasm-bindgen:
//!
//! - [`render_fused`]: synthesize a subject, pick one 5-second window and
//!   return the fused 128x128 image as RGBA bytes for a canvas.
//! - [`window_traces`]: the same window's normalized channel samples as JSON,
//!   for drawing the raw signal traces.
//! - [`palette_strip`]: the custom colorization palette as an RGBA strip.
//!
//! Build with `wasm-pack build --target web` (see the crate README). The
//! logic lives in plain Rust functions so `cargo test` covers it on the host;
//! the wasm-bindgen wrappers only translate errors into `JsValue`.

use wasm_bindgen::prelude::*;

use fuse2d::colorize::{apply_scheme, custom_rgb, upscale_nearest, ColorScheme, IMAGE_SIDE};
use fuse2d::fusion::{
    assemble_matrix, normalize_window, slide_windows, Arrangement, BandLayout, FillPolicy,
    Window, WindowConfig,
};
use fuse2d::ingest::{preprocess, ClassLabel, PreprocessConfig};
use fuse2d::synth::{generate_synthetic, SynthConfig};

/// Seconds per condition in the demo's synthetic subject.
const DEMO_SECONDS: u32 = 30;

/// Synthesizes one subject and returns its windows of the requested class.
fn class_windows(seed: u32, separation: f64, stress: bool) -> Result<Vec<Window>, fuse2d::Error> {
    let cfg = SynthConfig {
        subjects: 1,
        seconds_per_condition: DEMO_SECONDS,
        class_separation: separation,
    };
    let rec = generate_synthetic(&cfg, seed as u64)?.remove(0);
    let pre = preprocess(&rec, &PreprocessConfig::default())?;
    let wanted = if stress {
        ClassLabel::Stress
    } else {
        ClassLabel::NoStress
    };
    Ok(slide_windows(&pre, &WindowConfig::default())?
        .into_iter()
        .filter(|w| w.label == wanted)
        .collect())
}

fn pick_window(
    seed: u32,
    separation: f64,
    stress: bool,
    index: u32,
) -> Result<Window, fuse2d::Error> {
    let windows = class_windows(seed, separation, stress)?;
    let i = index as usize % windows.len();
    Ok(windows[i].clone())
}

fn render_fused_impl(
    seed: u32,
    stress: bool,
    separation: f64,
    window_index: u32,
    arrangement: &str,
    scheme: &str,
    repeat_fill: bool,
) -> Result<Vec<u8>, fuse2d::Error> {
    let window = pick_window(seed, separation, stress, window_index)?;
    let arr = Arrangement::parse(arrangement)?;
    let scheme = ColorScheme::parse(scheme)?;
    let layout = BandLayout {
        fill: if repeat_fill {
            FillPolicy::RepeatBands
        } else {
            FillPolicy::Zeros
        },
        ..BandLayout::default()
    };
    let normalized = normalize_window(&window)?;
    let matrix = assemble_matrix(&normalized, &arr, &layout)?;
    let image = upscale_nearest(&apply_scheme(&matrix, scheme)?)?;

    let rgb = image.pixels();
    let mut rgba = Vec::with_capacity(rgb.len() / 3 * 4);
    for px in rgb.chunks_exact(3) {
        rgba.extend_from_slice(px);
        rgba.push(255);
    }
    Ok(rgba)
}

fn window_traces_impl(
    seed: u32,
    stress: bool,
    separation: f64,
    window_index: u32,
) -> Result<String, fuse2d::Error> {
    let window = pick_window(seed, separation, stress, window_index)?;
    let normalized = normalize_window(&window)?;
    let series = |xs: &[f64]| {
        let body: Vec<String> = xs.iter().map(|v| format!("{v:.4}")).collect();
        format!("[{}]", body.join(","))
    };
    Ok(format!(
        "{{\"label\":\"{}\",\"start_s\":{},\"ppg\":{},\"eda\":{},\"acc\":{}}}",
        normalized.label.as_str(),
        normalized.start_s,
        series(&normalized.ppg),
        series(&normalized.eda),
        series(&normalized.acc)
    ))
}

fn palette_strip_impl(width: u32, height: u32) -> Vec<u8> {
    let mut rgba = Vec::with_capacity((width * height * 4) as usize);
    for _row in 0..height {
        for col in 0..width {
            let v = col as f64 / (width.max(2) - 1) as f64;
            let [r, g, b] = custom_rgb(v);
            rgba.extend_from_slice(&[r, g, b, 255]);
        }
    }
    rgba
}

// ---------------------------------------------------------------------------
// wasm exports
// ---------------------------------------------------------------------------

fn err_js(e: fuse2d::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Number of selectable windows per class, for slider bounds.
#[wasm_bindgen]
pub fn windows_per_class() -> u32 {
    DEMO_SECONDS - 4 // 5-second windows, 1-second stride, one condition
}

/// Side length of the rendered image.
#[wasm_bindgen]
pub fn image_side() -> u32 {
    IMAGE_SIDE as u32
}

/// Renders one fused window as RGBA bytes (`image_side()^2 * 4` long).
///
/// `arrangement` is a three-letter code like "PEA"; `scheme` is one of
/// "gray", "manual", "custom"; `repeat_fill` cycles the band sequence into
/// the unused rows instead of leaving them black.
#[wasm_bindgen]
pub fn render_fused(
    seed: u32,
    stress: bool,
    separation: f64,
    window_index: u32,
    arrangement: &str,
    scheme: &str,
    repeat_fill: bool,
) -> Result<Vec<u8>, JsValue> {
    render_fused_impl(
        seed,
        stress,
        separation,
        window_index,
        arrangement,
        scheme,
        repeat_fill,
    )
    .map_err(err_js)
}

/// The selected window's normalized channels as JSON:
/// `{"label": "...", "start_s": n, "ppg": [...], "eda": [...], "acc": [...]}`.
#[wasm_bindgen]
pub fn window_traces(
    seed: u32,
    stress: bool,
    separation: f64,
    window_index: u32,
) -> Result<String, JsValue> {
    window_traces_impl(seed, stress, separation, window_index).map_err(err_js)
}

/// The custom palette as a `width x height` RGBA strip, v = 0 on the left.
#[wasm_bindgen]
pub fn palette_strip(width: u32, height: u32) -> Vec<u8> {
    palette_strip_impl(width, height)
}

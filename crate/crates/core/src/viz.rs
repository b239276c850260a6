//! Figure rendering: dictionary montages, activation overlays, per-site
//! coefficient charts, and histograms. Everything renders into an
//! [`ImageTensor`] first (deterministically) and optionally writes a PNG.

use std::path::{Path, PathBuf};

use crate::tensor::{ActivationTensor, Dictionary, ImageTensor};

#[derive(Debug, thiserror::Error)]
pub enum VizError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to encode {path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("element index {index} out of range (dictionary has {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("no values to render")]
    EmptyInput,
    #[error("invalid render parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    Grayscale,
    #[default]
    SignedDiverging,
}

#[derive(Debug, Clone, Default)]
pub struct RenderConfig {
    /// Pixels per dictionary element cell in montages; 0 means the native
    /// patch size.
    pub cell_size: usize,
    pub colormap: Colormap,
    /// Blend strength for overlays, in [0, 1].
    pub overlay_alpha: f64,
    /// Where to write the PNG; rendering is in-memory when absent.
    pub output: Option<PathBuf>,
}

impl RenderConfig {
    pub fn new() -> Self {
        Self { cell_size: 0, colormap: Colormap::SignedDiverging, overlay_alpha: 0.6, output: None }
    }
}

/// Clamp to [0, 1] and quantize to 8-bit RGB.
pub fn tensor_to_rgb(img: &ImageTensor<f64>) -> image::RgbImage {
    image::RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let px = |ch: usize| {
            let v = if img.channels() == 3 { img.get(y as usize, x as usize, ch) } else { img.get(y as usize, x as usize, 0) };
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn save_png(img: &ImageTensor<f64>, path: &Path) -> Result<(), VizError> {
    tensor_to_rgb(img).save(path).map_err(|e| VizError::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn maybe_save(img: &ImageTensor<f64>, cfg: &RenderConfig) -> Result<(), VizError> {
    match &cfg.output {
        Some(path) => save_png(img, path),
        None => Ok(()),
    }
}

/// Grid of all dictionary elements, each min-max normalized for display,
/// with 1-pixel separators. Cells for a degenerate (constant) element render
/// mid-gray.
pub fn montage(dict: &Dictionary<f64>, cfg: &RenderConfig) -> Result<ImageTensor<f64>, VizError> {
    let k_total = dict.num_elements();
    let grid = (k_total as f64).sqrt().ceil() as usize;
    let patch = dict.patch();
    let cell = if cfg.cell_size == 0 { patch } else { cfg.cell_size };
    let side = grid * cell + grid.saturating_sub(1);
    let mut out = ImageTensor::zeros(side, side, 3);

    for k in 0..k_total {
        let elem = dict.element(k);
        let lo = elem.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = elem.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        let channels = dict.channels();
        let sample = |pr: usize, pc: usize, ch: usize| -> f64 {
            if range == 0.0 {
                return 0.5;
            }
            let c = if channels == 3 {
                elem[(pr * patch + pc) * channels + ch]
            } else {
                // Mean over channels for non-RGB banks.
                let base = (pr * patch + pc) * channels;
                elem[base..base + channels].iter().sum::<f64>() / channels as f64
            };
            (c - lo) / range
        };
        let (gr, gc) = (k / grid, k % grid);
        let (r0, c0) = (gr * (cell + 1), gc * (cell + 1));
        for i in 0..cell {
            for j in 0..cell {
                let pr = i * patch / cell;
                let pc = j * patch / cell;
                for ch in 0..3 {
                    out.set(r0 + i, c0 + j, ch, sample(pr, pc, ch));
                }
            }
        }
    }
    maybe_save(&out, cfg)?;
    Ok(out)
}

const HEAT_POS: [f64; 3] = [0.9, 0.1, 0.1];
const HEAT_NEG: [f64; 3] = [0.1, 0.2, 0.9];
const HEAT_GRAY: [f64; 3] = [1.0, 1.0, 1.0];

/// Alpha-blend the activation map of one element over the image.
///
/// Each activation covers its receptive field (a patch-sized block at the
/// strided offset); overlapping sites keep the strongest signed value.
/// Pixels whose covering activations are all zero are left untouched.
pub fn overlay(
    image: &ImageTensor<f64>,
    acts: &ActivationTensor<f64>,
    element: usize,
    patch: usize,
    stride: usize,
    cfg: &RenderConfig,
) -> Result<ImageTensor<f64>, VizError> {
    if element >= acts.num_elements() {
        return Err(VizError::IndexOutOfRange { index: element, len: acts.num_elements() });
    }
    if !(0.0..=1.0).contains(&cfg.overlay_alpha) {
        return Err(VizError::BadParameter(format!("overlay alpha {} not in [0,1]", cfg.overlay_alpha)));
    }
    let expect_h = (acts.map_height() - 1) * stride + patch;
    let expect_w = (acts.map_width() - 1) * stride + patch;
    if image.height() != expect_h || image.width() != expect_w {
        return Err(VizError::Geometry(format!(
            "image {}x{} does not match map {}x{} with patch {patch} stride {stride}",
            image.height(),
            image.width(),
            acts.map_height(),
            acts.map_width()
        )));
    }

    let mut heat = vec![0.0f64; image.height() * image.width()];
    for r in 0..acts.map_height() {
        for c in 0..acts.map_width() {
            let v = acts.get(r, c, element);
            if v == 0.0 {
                continue;
            }
            for pr in 0..patch {
                for pc in 0..patch {
                    let slot = &mut heat[(r * stride + pr) * image.width() + (c * stride + pc)];
                    if v.abs() > slot.abs() {
                        *slot = v;
                    }
                }
            }
        }
    }
    let max_abs = heat.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut out = image.clone();
    if max_abs > 0.0 && cfg.overlay_alpha > 0.0 {
        for r in 0..image.height() {
            for c in 0..image.width() {
                let v = heat[r * image.width() + c];
                if v == 0.0 {
                    continue;
                }
                let color = match cfg.colormap {
                    Colormap::Grayscale => HEAT_GRAY,
                    Colormap::SignedDiverging => {
                        if v > 0.0 {
                            HEAT_POS
                        } else {
                            HEAT_NEG
                        }
                    }
                };
                let w = cfg.overlay_alpha * v.abs() / max_abs;
                for ch in 0..image.channels() {
                    let base = out.get(r, c, ch);
                    out.set(r, c, ch, base + w * (color[ch.min(2)] - base));
                }
            }
        }
    }
    maybe_save(&out, cfg)?;
    Ok(out)
}

const CHART_HEIGHT: usize = 128;
const BAR_WIDTH: usize = 3;

/// Bar chart of the K coefficients at one map site. With `omit_zeros` only
/// nonzero coefficients get a bar (the sparse-code view); otherwise every
/// element has a slot. Positive bars rise from the midline, negative bars
/// hang below it.
pub fn coeff_chart(coeffs: &[f64], omit_zeros: bool, cfg: &RenderConfig) -> Result<ImageTensor<f64>, VizError> {
    let selected: Vec<f64> = if omit_zeros {
        coeffs.iter().copied().filter(|v| *v != 0.0).collect()
    } else {
        coeffs.to_vec()
    };
    let n = selected.len();
    let width = (n * (BAR_WIDTH + 1) + 1).max(32);
    let mut out = ImageTensor::from_fn(CHART_HEIGHT, width, 3, |_, _, _| 1.0);
    let baseline = CHART_HEIGHT / 2;
    for c in 0..width {
        for ch in 0..3 {
            out.set(baseline, c, ch, 0.0);
        }
    }
    let max_abs = selected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs > 0.0 {
        let half = baseline - 2;
        for (i, v) in selected.iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let bar_h = ((v.abs() / max_abs) * half as f64).round() as usize;
            let color = if *v > 0.0 { HEAT_POS } else { HEAT_NEG };
            let c0 = i * (BAR_WIDTH + 1) + 1;
            for dh in 1..=bar_h {
                let r = if *v > 0.0 { baseline - dh } else { baseline + dh };
                for dc in 0..BAR_WIDTH {
                    for ch in 0..3 {
                        out.set(r, c0 + dc, ch, color[ch]);
                    }
                }
            }
        }
    }
    maybe_save(&out, cfg)?;
    Ok(out)
}

/// One histogram bin: half-open `[lo, hi)` except the last, which is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width binned counts rendered as a bar chart; the bin table is also
/// written as `<output>.csv` (columns `bin_lo,bin_hi,count`) when an output
/// path is set.
pub fn histogram(values: &[f64], bins: usize, cfg: &RenderConfig) -> Result<(ImageTensor<f64>, Vec<HistBin>), VizError> {
    if values.is_empty() {
        return Err(VizError::EmptyInput);
    }
    if bins == 0 {
        return Err(VizError::BadParameter("bins must be at least 1".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut table: Vec<HistBin> = (0..bins)
        .map(|i| HistBin { lo: lo + width * i as f64, hi: lo + width * (i + 1) as f64, count: 0 })
        .collect();
    for v in values {
        let idx = if width == 0.0 {
            0
        } else {
            (((v - lo) / width).floor() as usize).min(bins - 1)
        };
        table[idx].count += 1;
    }

    let max_count = table.iter().map(|b| b.count).max().unwrap_or(0);
    let chart_w = (bins * (BAR_WIDTH + 1) + 1).max(32);
    let mut out = ImageTensor::from_fn(CHART_HEIGHT, chart_w, 3, |_, _, _| 1.0);
    for c in 0..chart_w {
        for ch in 0..3 {
            out.set(CHART_HEIGHT - 1, c, ch, 0.0);
        }
    }
    if max_count > 0 {
        for (i, bin) in table.iter().enumerate() {
            let bar_h = ((bin.count as f64 / max_count as f64) * (CHART_HEIGHT - 2) as f64).round() as usize;
            let c0 = i * (BAR_WIDTH + 1) + 1;
            for dh in 1..=bar_h {
                for dc in 0..BAR_WIDTH {
                    for ch in 0..3 {
                        out.set(CHART_HEIGHT - 1 - dh, c0 + dc, ch, 0.25);
                    }
                }
            }
        }
    }

    if let Some(path) = &cfg.output {
        save_png(&out, path)?;
        let csv_path = path.with_extension("csv");
        let mut text = String::from("bin_lo,bin_hi,count\n");
        for bin in &table {
            text.push_str(&format!("{},{},{}\n", bin.lo, bin.hi, bin.count));
        }
        std::fs::write(&csv_path, text).map_err(|source| VizError::Io { path: csv_path, source })?;
    }
    Ok((out, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::init_dictionary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn montage_grid_arithmetic() {
        let dict: Dictionary<f64> = init_dictionary(1, 64, 8, 3, 4);
        let cfg = RenderConfig::new();
        let img = montage(&dict, &cfg).unwrap();
        // 8x8 grid of 8px cells with 7 separators.
        assert_eq!(img.height(), 8 * 8 + 7);
        assert_eq!(img.width(), 8 * 8 + 7);
    }

    #[test]
    fn montage_constant_element_renders_mid_gray() {
        let dict = Dictionary::new(1, 2, 1, 1, vec![0.7; 4]).unwrap();
        let img = montage(&dict, &RenderConfig::new()).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(img.get(r, c, 0), 0.5);
            }
        }
    }

    #[test]
    fn montage_contains_every_element_exactly_once() {
        let dict: Dictionary<f64> = init_dictionary(9, 10, 4, 1, 2);
        let img = montage(&dict, &RenderConfig::new()).unwrap();
        let grid = 4usize; // ceil(sqrt(10))
        let patch = 4usize;
        for k in 0..10 {
            let elem = dict.element(k);
            let lo = elem.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = elem.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (r0, c0) = ((k / grid) * (patch + 1), (k % grid) * (patch + 1));
            for pr in 0..patch {
                for pc in 0..patch {
                    let want = (elem[pr * patch + pc] - lo) / (hi - lo);
                    assert_eq!(img.get(r0 + pr, c0 + pc, 0), want, "element {k} cell mismatch");
                }
            }
        }
        // Cells past the last element stay black, as do separators.
        let (r0, c0) = ((10 / grid) * (patch + 1), (10 % grid) * (patch + 1));
        assert_eq!(img.get(r0, c0, 0), 0.0);
        assert_eq!(img.get(patch, 0, 0), 0.0);
    }

    #[test]
    fn montage_bytes_are_stable_across_runs() {
        let dict: Dictionary<f64> = init_dictionary(7, 16, 6, 3, 2);
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for name in ["a.png", "b.png"] {
            let cfg = RenderConfig { output: Some(dir.path().join(name)), ..RenderConfig::new() };
            montage(&dict, &cfg).unwrap();
            bytes.push(std::fs::read(dir.path().join(name)).unwrap());
        }
        assert_eq!(bytes[0], bytes[1]);
    }

    fn display_image(h: usize, w: usize) -> ImageTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        ImageTensor::from_fn(h, w, 3, |_, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn overlay_with_zero_map_is_untouched() {
        let image = display_image(10, 10);
        let acts = ActivationTensor::zeros(3, 3, 2);
        let out = overlay(&image, &acts, 1, 4, 3, &RenderConfig::new()).unwrap();
        assert_eq!(out.as_slice(), image.as_slice());
    }

    #[test]
    fn overlay_single_site_highlights_one_patch_block() {
        let image = display_image(10, 10);
        let mut acts = ActivationTensor::zeros(3, 3, 1);
        acts.set(1, 2, 0, 2.0);
        let out = overlay(&image, &acts, 0, 4, 3, &RenderConfig::new()).unwrap();
        let mut changed = 0;
        for r in 0..10 {
            for c in 0..10 {
                let differs = (0..3).any(|ch| out.get(r, c, ch) != image.get(r, c, ch));
                if differs {
                    changed += 1;
                    assert!((3..7).contains(&r) && (6..10).contains(&c), "unexpected change at {r},{c}");
                }
            }
        }
        assert_eq!(changed, 16);
    }

    #[test]
    fn overlay_alpha_zero_is_identity() {
        let image = display_image(10, 10);
        let mut acts = ActivationTensor::zeros(3, 3, 1);
        acts.set(0, 0, 0, 1.0);
        let cfg = RenderConfig { overlay_alpha: 0.0, ..RenderConfig::new() };
        let out = overlay(&image, &acts, 0, 4, 3, &cfg).unwrap();
        assert_eq!(out.as_slice(), image.as_slice());
    }

    #[test]
    fn overlay_validates_element_and_geometry() {
        let image = display_image(10, 10);
        let acts = ActivationTensor::zeros(3, 3, 2);
        assert!(matches!(
            overlay(&image, &acts, 5, 4, 3, &RenderConfig::new()),
            Err(VizError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            overlay(&image, &acts, 0, 4, 2, &RenderConfig::new()),
            Err(VizError::Geometry(_))
        ));
    }

    #[test]
    fn coeff_chart_visible_bar_count_matches_nonzeros() {
        let mut coeffs = vec![0.0; 128];
        coeffs[3] = 1.0;
        coeffs[17] = -0.5;
        coeffs[40] = 0.25;
        coeffs[77] = 0.9;
        coeffs[101] = -0.1;
        let img = coeff_chart(&coeffs, true, &RenderConfig::new()).unwrap();
        // Count bar groups along the midline's neighbors.
        let baseline = CHART_HEIGHT / 2;
        let mut groups = 0;
        let mut in_bar = false;
        for c in 0..img.width() {
            let colored = img.get(baseline - 1, c, 0) != 1.0 || img.get(baseline + 1, c, 0) != 1.0;
            if colored && !in_bar {
                groups += 1;
            }
            in_bar = colored;
        }
        assert_eq!(groups, 5);
    }

    #[test]
    fn coeff_chart_all_zero_renders_empty_axes() {
        let img = coeff_chart(&[0.0; 16], false, &RenderConfig::new()).unwrap();
        let baseline = CHART_HEIGHT / 2;
        for r in 0..CHART_HEIGHT {
            for c in 0..img.width() {
                let expect = if r == baseline { 0.0 } else { 1.0 };
                assert_eq!(img.get(r, c, 0), expect);
            }
        }
    }

    #[test]
    fn coeff_chart_heights_proportional_within_one_pixel() {
        let coeffs = [1.0, 0.5, -0.25];
        let img = coeff_chart(&coeffs, false, &RenderConfig::new()).unwrap();
        let baseline = CHART_HEIGHT / 2;
        let half = (baseline - 2) as f64;
        for (i, v) in coeffs.iter().enumerate() {
            let c = i * (BAR_WIDTH + 1) + 1;
            let mut h = 0;
            for dh in 1..baseline {
                let r = if *v > 0.0 { baseline - dh } else { baseline + dh };
                if img.get(r, c, 0) != 1.0 && r != baseline {
                    h += 1;
                }
            }
            let expect = (v.abs() / 1.0 * half).round();
            assert!((h as f64 - expect).abs() <= 1.0, "bar {i}: {h} vs {expect}");
        }
    }

    #[test]
    fn histogram_single_value_is_one_full_bar() {
        let (img, table) = histogram(&[0.7], 10, &RenderConfig::new()).unwrap();
        assert_eq!(table[0].count, 1);
        assert!(table[1..].iter().all(|b| b.count == 0));
        // Full-height bar in bin 0.
        assert_eq!(img.get(1, 1, 0), 0.25);
    }

    #[test]
    fn histogram_counts_are_conserved_and_uniform_values_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (_, table) = histogram(&values, 10, &RenderConfig::new()).unwrap();
        assert_eq!(table.iter().map(|b| b.count).sum::<usize>(), 1000);
        let sigma = (1000.0f64 * 0.1 * 0.9).sqrt();
        for bin in &table {
            assert!((bin.count as f64 - 100.0).abs() <= 3.0 * sigma, "bin {bin:?}");
        }
    }

    #[test]
    fn histogram_writes_companion_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RenderConfig { output: Some(dir.path().join("h.png")), ..RenderConfig::new() };
        let (_, table) = histogram(&[0.0, 0.5, 0.5, 1.0], 2, &cfg).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
        assert!(csv.starts_with("bin_lo,bin_hi,count\n"));
        let total: usize = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 4);
        assert_eq!(table.len(), 2);
        assert!(dir.path().join("h.png").exists());
    }

    #[test]
    fn histogram_rejects_empty_and_zero_bins() {
        assert!(matches!(histogram(&[], 4, &RenderConfig::new()), Err(VizError::EmptyInput)));
        assert!(matches!(histogram(&[1.0], 0, &RenderConfig::new()), Err(VizError::BadParameter(_))));
    }
}

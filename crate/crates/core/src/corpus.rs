//! Corpus construction: a deterministic synthetic information-graphic
//! generator (line charts and bar charts on white backgrounds), PNG
//! ingestion with bilinear resizing, and the line-oriented manifest format
//! that ties them together.
//!
//! Pixel values are reals in [0, 1]; per-image mean subtraction (default on)
//! keeps the white background from dominating every learned element.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::tensor::ImageTensor;
use crate::train::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("unsupported channel layout {color} in {path} (only gray and rgb are accepted)")]
    UnsupportedChannels { path: PathBuf, color: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{} corpus entries failed: {}", failures.len(), format_failures(failures))]
    Build { failures: Vec<(usize, String)> },
}

fn format_failures(failures: &[(usize, String)]) -> String {
    let mut out = String::new();
    for (i, (index, message)) in failures.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        let _ = write!(out, "#{index}: {message}");
    }
    out
}

/// Parameters of one synthetic graphic. Rendering is a pure function of the
/// spec and the output size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub seed: u64,
    /// Number of data series, 1 through 4.
    pub num_series: u8,
    pub axes: bool,
    pub legend: bool,
    pub gridlines: bool,
    pub text_blocks: bool,
}

impl SynthSpec {
    /// Derive a fully specified graphic from a single seed; this is what the
    /// corpus generator uses to vary layout across a run.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x517E, 0));
        Self {
            seed,
            num_series: rng.gen_range(1..=4),
            axes: rng.gen_bool(0.9),
            legend: rng.gen_bool(0.4),
            gridlines: rng.gen_bool(0.4),
            text_blocks: rng.gen_bool(0.6),
        }
    }

    fn flags_string(&self) -> String {
        let mut s = String::new();
        if self.axes {
            s.push('a');
        }
        if self.legend {
            s.push('l');
        }
        if self.gridlines {
            s.push('g');
        }
        if self.text_blocks {
            s.push('t');
        }
        if s.is_empty() {
            s.push('-');
        }
        s
    }
}

/// One manifest entry: an on-disk PNG or a synthetic spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusEntry {
    File(PathBuf),
    Synth(SynthSpec),
}

/// Parsed manifest: entries plus the target geometry and preprocessing flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub entries: Vec<CorpusEntry>,
    pub target_height: usize,
    pub target_width: usize,
    pub mean_subtract: bool,
    /// Seed recorded by whichever generator wrote the manifest.
    pub seed: u64,
}

impl Default for CorpusManifest {
    fn default() -> Self {
        Self { entries: Vec::new(), target_height: 64, target_width: 64, mean_subtract: true, seed: 0 }
    }
}

impl CorpusManifest {
    /// Parse the line-oriented format. `#` starts a comment; directives are
    /// `size:HxW`, `mean_subtract:bool`, `seed:N`; entries are `file:<path>`
    /// (relative paths resolve against `base_dir`) or
    /// `synth:<seed>:<num_series>:<flags>` with flags a subset of `algt` or
    /// `-` for none.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CorpusError> {
        let mut manifest = CorpusManifest::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| CorpusError::Manifest { line: line_no, message };
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| err(format!("expected key:value, got {line:?}")))?;
            match key {
                "size" => {
                    let (h, w) = rest
                        .split_once('x')
                        .ok_or_else(|| err(format!("size must be HxW, got {rest:?}")))?;
                    manifest.target_height =
                        h.trim().parse().map_err(|_| err(format!("bad height {h:?}")))?;
                    manifest.target_width =
                        w.trim().parse().map_err(|_| err(format!("bad width {w:?}")))?;
                    if manifest.target_height == 0 || manifest.target_width == 0 {
                        return Err(err("size must be positive".into()));
                    }
                }
                "mean_subtract" => {
                    manifest.mean_subtract = rest
                        .trim()
                        .parse()
                        .map_err(|_| err(format!("bad boolean {rest:?}")))?;
                }
                "seed" => {
                    manifest.seed = rest.trim().parse().map_err(|_| err(format!("bad seed {rest:?}")))?;
                }
                "file" => {
                    let p = Path::new(rest.trim());
                    let path = if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
                    manifest.entries.push(CorpusEntry::File(path));
                }
                "synth" => {
                    let mut parts = rest.splitn(3, ':');
                    let seed: u64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(format!("bad synth seed in {rest:?}")))?;
                    let num_series: u8 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .filter(|n| (1..=4).contains(n))
                        .ok_or_else(|| err(format!("synth series count must be 1-4 in {rest:?}")))?;
                    let flags = parts.next().ok_or_else(|| err(format!("missing synth flags in {rest:?}")))?;
                    let mut spec = SynthSpec {
                        seed,
                        num_series,
                        axes: false,
                        legend: false,
                        gridlines: false,
                        text_blocks: false,
                    };
                    for ch in flags.chars() {
                        match ch {
                            'a' => spec.axes = true,
                            'l' => spec.legend = true,
                            'g' => spec.gridlines = true,
                            't' => spec.text_blocks = true,
                            '-' => {}
                            other => return Err(err(format!("unknown synth flag {other:?}"))),
                        }
                    }
                    manifest.entries.push(CorpusEntry::Synth(spec));
                }
                other => return Err(err(format!("unknown entry kind {other:?}"))),
            }
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Serialize back to the manifest text format with a header.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# corpus manifest\n");
        let _ = writeln!(out, "size:{}x{}", self.target_height, self.target_width);
        let _ = writeln!(out, "mean_subtract:{}", self.mean_subtract);
        let _ = writeln!(out, "seed:{}", self.seed);
        for entry in &self.entries {
            match entry {
                CorpusEntry::File(path) => {
                    let _ = writeln!(out, "file:{}", path.display());
                }
                CorpusEntry::Synth(spec) => {
                    let _ = writeln!(out, "synth:{}:{}:{}", spec.seed, spec.num_series, spec.flags_string());
                }
            }
        }
        out
    }
}

/// Bilinear resize with pixel-center alignment. Interpolation is computed in
/// lerp form, so constant images are preserved exactly.
pub fn resize_bilinear(image: &ImageTensor<f64>, out_h: usize, out_w: usize) -> ImageTensor<f64> {
    if image.height() == out_h && image.width() == out_w {
        return image.clone();
    }
    let channels = image.channels();
    let in_h = image.height();
    let in_w = image.width();
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let src_coord = |out_idx: usize, out_len: usize, in_len: usize| -> (usize, usize, f64) {
        let s = (out_idx as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5;
        let s = s.clamp(0.0, (in_len - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(in_len - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = ImageTensor::zeros(out_h, out_w, channels);
    for r in 0..out_h {
        let (r0, r1, fr) = src_coord(r, out_h, in_h);
        for c in 0..out_w {
            let (c0, c1, fc) = src_coord(c, out_w, in_w);
            for ch in 0..channels {
                let top = lerp(image.get(r0, c0, ch), image.get(r0, c1, ch), fc);
                let bottom = lerp(image.get(r1, c0, ch), image.get(r1, c1, ch), fc);
                out.set(r, c, ch, lerp(top, bottom, fr));
            }
        }
    }
    out
}

/// Decode a PNG into a 3-channel [0, 1] tensor resized to the target.
/// Grayscale inputs are replicated across channels; alpha is rejected.
pub fn load_image(path: &Path, target_h: usize, target_w: usize) -> Result<ImageTensor<f64>, CorpusError> {
    let decoded = image::open(path).map_err(|e| CorpusError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let raw = match &decoded {
        image::DynamicImage::ImageLuma8(img) => {
            ImageTensor::from_fn(img.height() as usize, img.width() as usize, 3, |r, c, _| {
                img.get_pixel(c as u32, r as u32)[0] as f64 / 255.0
            })
        }
        image::DynamicImage::ImageLuma16(img) => {
            ImageTensor::from_fn(img.height() as usize, img.width() as usize, 3, |r, c, _| {
                img.get_pixel(c as u32, r as u32)[0] as f64 / 65535.0
            })
        }
        image::DynamicImage::ImageRgb8(img) => {
            ImageTensor::from_fn(img.height() as usize, img.width() as usize, 3, |r, c, ch| {
                img.get_pixel(c as u32, r as u32)[ch] as f64 / 255.0
            })
        }
        image::DynamicImage::ImageRgb16(img) => {
            ImageTensor::from_fn(img.height() as usize, img.width() as usize, 3, |r, c, ch| {
                img.get_pixel(c as u32, r as u32)[ch] as f64 / 65535.0
            })
        }
        other => {
            return Err(CorpusError::UnsupportedChannels {
                path: path.to_path_buf(),
                color: format!("{:?}", other.color()),
            })
        }
    };
    Ok(resize_bilinear(&raw, target_h, target_w))
}

/// Optional per-image mean subtraction.
pub fn preprocess(image: ImageTensor<f64>, mean_subtract: bool) -> ImageTensor<f64> {
    if !mean_subtract {
        return image;
    }
    let mean = image.mean();
    let mut out = image;
    for v in out.as_mut_slice() {
        *v -= mean;
    }
    out
}

const PALETTE: [[f64; 3]; 6] = [
    [0.85, 0.11, 0.15],
    [0.13, 0.28, 0.84],
    [0.05, 0.62, 0.25],
    [0.95, 0.52, 0.08],
    [0.55, 0.10, 0.65],
    [0.00, 0.62, 0.65],
];

const INK: [f64; 3] = [0.0, 0.0, 0.0];
const GRID: [f64; 3] = [0.82, 0.82, 0.82];
const TEXT: [f64; 3] = [0.15, 0.15, 0.15];

fn paint(img: &mut ImageTensor<f64>, r: i64, c: i64, color: [f64; 3]) {
    if r < 0 || c < 0 || r as usize >= img.height() || c as usize >= img.width() {
        return;
    }
    for ch in 0..3 {
        img.set(r as usize, c as usize, ch, color[ch]);
    }
}

fn fill_rect(img: &mut ImageTensor<f64>, r0: i64, c0: i64, r1: i64, c1: i64, color: [f64; 3]) {
    for r in r0..=r1 {
        for c in c0..=c1 {
            paint(img, r, c, color);
        }
    }
}

fn draw_segment(img: &mut ImageTensor<f64>, from: (i64, i64), to: (i64, i64), thickness: i64, color: [f64; 3]) {
    let steps = (to.0 - from.0).abs().max((to.1 - from.1).abs()).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let r = from.0 as f64 + t * (to.0 - from.0) as f64;
        let c = from.1 as f64 + t * (to.1 - from.1) as f64;
        let (r, c) = (r.round() as i64, c.round() as i64);
        for dr in 0..thickness {
            for dc in 0..thickness {
                paint(img, r + dr, c + dc, color);
            }
        }
    }
}

/// Render one synthetic information graphic: white background, optional
/// black axes and light gridlines, 1-4 colored line or bar series, optional
/// legend swatches and dark text-proxy blocks. Deterministic per spec.
pub fn synth_graphic(spec: &SynthSpec, height: usize, width: usize) -> ImageTensor<f64> {
    let mut img = ImageTensor::from_fn(height, width, 3, |_, _, _| 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0x9AF1C, 0));

    let h = height as i64;
    let w = width as i64;
    let margin = (h.min(w) / 16).max(3);
    let top = margin;
    let bottom = h - 1 - margin;
    let left = margin;
    let right = w - 1 - margin;
    let plot_h = (bottom - top).max(1);
    let plot_w = (right - left).max(1);

    if spec.gridlines {
        for i in 1..=3 {
            let r = top + plot_h * i / 4;
            for c in left..=right {
                paint(&mut img, r, c, GRID);
            }
        }
    }

    if spec.axes {
        for r in top..=bottom {
            paint(&mut img, r, left, INK);
        }
        for c in left..=right {
            paint(&mut img, bottom, c, INK);
        }
    }

    let thickness = (h / 64).max(1);
    let color_start = rng.gen_range(0..PALETTE.len());
    for series in 0..spec.num_series as usize {
        let color = PALETTE[(color_start + series) % PALETTE.len()];
        if rng.gen_bool(0.5) {
            // Polyline across the plot area.
            let knots = rng.gen_range(8..=12);
            let mut prev: Option<(i64, i64)> = None;
            let mut y = rng.gen_range(0.15..0.85);
            for i in 0..knots {
                let c = left + 1 + (plot_w - 2) * i / (knots - 1);
                let r = top + 1 + ((plot_h - 2) as f64 * y) as i64;
                if let Some(p) = prev {
                    draw_segment(&mut img, p, (r, c), thickness, color);
                }
                prev = Some((r, c));
                y = (y + rng.gen_range(-0.22..0.22)).clamp(0.05, 0.95);
            }
        } else {
            // A handful of slim filled bars rising from the x axis.
            let bars = rng.gen_range(3..=5);
            let bar_w = (plot_w / (bars * 3)).clamp(1, 3);
            for b in 0..bars {
                let c0 = left + 2 + (plot_w - 4) * b / bars + rng.gen_range(0..3);
                let bar_h = ((plot_h as f64) * rng.gen_range(0.2..0.6)) as i64 + 8;
                let r0 = (bottom - 1 - bar_h).max(top);
                fill_rect(&mut img, r0, c0, bottom - 1, c0 + bar_w - 1, color);
            }
        }
    }

    if spec.legend {
        for series in 0..spec.num_series as i64 {
            let color = PALETTE[(color_start + series as usize) % PALETTE.len()];
            let r0 = top + 1 + series * 5;
            let c0 = right - 12;
            fill_rect(&mut img, r0, c0, r0 + 2, c0 + 2, color);
            fill_rect(&mut img, r0 + 1, c0 + 4, r0 + 1, c0 + 9, TEXT);
        }
    }

    if spec.text_blocks {
        let blocks = rng.gen_range(1..=3);
        for _ in 0..blocks {
            let r0 = rng.gen_range(0..(margin + 2).max(1));
            let c0 = rng.gen_range(left..(right - 12).max(left + 1));
            let len = rng.gen_range(6..=12);
            fill_rect(&mut img, r0, c0, r0 + 1, c0 + len, TEXT);
        }
    }

    img
}

/// Materialize every manifest entry in order, then preprocess. Per-entry
/// failures are aggregated with their indices.
pub fn build_corpus(manifest: &CorpusManifest) -> Result<Vec<ImageTensor<f64>>, CorpusError> {
    let results: Vec<Result<ImageTensor<f64>, CorpusError>> = manifest
        .entries
        .par_iter()
        .map(|entry| match entry {
            CorpusEntry::File(path) => load_image(path, manifest.target_height, manifest.target_width),
            CorpusEntry::Synth(spec) => Ok(synth_graphic(spec, manifest.target_height, manifest.target_width)),
        })
        .collect();

    let mut images = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (index, result) in results.into_iter().enumerate() {
        match result {
            Ok(img) => images.push(preprocess(img, manifest.mean_subtract)),
            Err(e) => failures.push((index, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(CorpusError::Build { failures });
    }
    Ok(images)
}

//! `lcad`: train, encode, analyze, and render convolutional sparse coding
//! models and their denoising-autoencoder baseline.

mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lcad_core::ae::{ae_forward, ae_train_epoch, AeTrainConfig, AutoencoderModel};
use lcad_core::checkpoint::{load_activations, save_activations, ActGeometry, Model};
use lcad_core::corpus::{
    build_corpus, load_image, preprocess, synth_graphic, CorpusEntry, CorpusManifest, SynthSpec,
};
use lcad_core::lca::{encode, LcaConfig};
use lcad_core::metrics::{InterStdMode, MetricsReport};
use lcad_core::tensor::{ActivationTensor, ImageTensor};
use lcad_core::train::{init_dictionary, train_epoch, EpochStats, TrainConfig, TrainStats};
use lcad_core::viz::{coeff_chart, histogram, montage, overlay, save_png, Colormap, RenderConfig};
use lcad_core::ModelKind;

/// `HxW` pixel size argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Size {
    height: usize,
    width: usize,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
        let height = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
        let width = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
        if height == 0 || width == 0 {
            return Err("size must be positive".into());
        }
        Ok(Size { height, width })
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

#[derive(Parser)]
#[command(
    name = "lcad",
    version,
    about = "Convolutional sparse coding with a locally competitive solver, plus a matched autoencoder baseline and interpretability analysis",
    after_help = "Any subcommand also accepts --config FILE, a `key = value` overlay whose keys \
                  are long flag names; explicit flags win over config values."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic information-graphic corpus (PNGs plus manifest)
    Synth(SynthArgs),
    /// Train a sparse coding dictionary with the competitive solver
    TrainSc(TrainScArgs),
    /// Train the denoising convolutional autoencoder baseline
    TrainAe(TrainAeArgs),
    /// Encode one image with a trained checkpoint
    Encode(EncodeArgs),
    /// Encode a corpus and write the interpretability metrics report
    Analyze(AnalyzeArgs),
    /// Render figures from checkpoints, activations, and reports
    #[command(subcommand)]
    Render(RenderCommand),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the PNGs and manifest
    #[arg(long)]
    out: PathBuf,
    /// Number of graphics to generate
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Base seed; image i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image size as HxW
    #[arg(long, default_value_t = Size { height: 64, width: 64 })]
    size: Size,
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Sparsity threshold of the objective and the shrinkage
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Euler step size of the solver dynamics
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    /// Maximum solver steps per encode
    #[arg(long, default_value_t = 600)]
    max_steps: usize,
    /// Stop when the mean absolute potential update falls below this
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl SolverFlags {
    fn to_config(&self) -> LcaConfig<f64> {
        LcaConfig {
            lambda: self.lambda,
            step_size: self.eta,
            max_steps: self.max_steps,
            tolerance: self.tol,
            ..LcaConfig::default()
        }
    }
}

/// Solver flags for dictionary training, where partially converged codes
/// are fine for gradients and the step budget dominates the run time.
#[derive(Args, Clone)]
struct TrainSolverFlags {
    /// Sparsity threshold of the objective and the shrinkage
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Euler step size of the solver dynamics
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    /// Maximum solver steps per training encode
    #[arg(long, default_value_t = 150)]
    max_steps: usize,
    /// Stop when the mean absolute potential update falls below this
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

impl TrainSolverFlags {
    fn to_config(&self) -> LcaConfig<f64> {
        LcaConfig {
            lambda: self.lambda,
            step_size: self.eta,
            max_steps: self.max_steps,
            tolerance: self.tol,
            ..LcaConfig::default()
        }
    }
}

#[derive(Args, Clone, Copy)]
struct GeometryFlags {
    /// Number of dictionary elements / filters
    #[arg(long, default_value_t = 64)]
    k: usize,
    /// Square patch side in pixels
    #[arg(long, default_value_t = 8)]
    patch: usize,
    /// Stride between patch placements in pixels
    #[arg(long, default_value_t = 4)]
    stride: usize,
}

#[derive(Args)]
struct TrainScArgs {
    /// Corpus manifest file
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[command(flatten)]
    solver: TrainSolverFlags,
    #[command(flatten)]
    geometry: GeometryFlags,
    /// Dictionary learning rate
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Images per dictionary update
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Worker threads; 0 uses all cores (results are thread-count independent)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch statistics CSV
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct TrainAeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Gaussian corruption standard deviation
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[command(flatten)]
    geometry: GeometryFlags,
    /// SGD learning rate
    #[arg(long, default_value_t = 2e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Worker threads; 0 uses all cores (results are thread-count independent)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverChoice {
    /// Competitive sparse inference (sparse-coding checkpoints)
    Lca,
    /// Feed-forward pass (autoencoder checkpoints)
    Ae,
}

#[derive(Args)]
struct EncodeArgs {
    /// Trained checkpoint (kind decides the encoder)
    #[arg(long)]
    ckpt: PathBuf,
    /// Input PNG
    #[arg(long)]
    image: PathBuf,
    /// Force a solver; mismatching the checkpoint kind is an error
    #[arg(long, value_enum)]
    solver: Option<SolverChoice>,
    #[command(flatten)]
    lca: SolverFlags,
    /// Input is resized to this size before encoding
    #[arg(long, default_value_t = Size { height: 64, width: 64 })]
    size: Size,
    /// Skip per-image mean subtraction
    #[arg(long, default_value_t = false)]
    no_mean_subtract: bool,
    /// Activation tensor output (LCAD kind 2)
    #[arg(long)]
    out_acts: PathBuf,
    /// Energy trace CSV (sparse-coding checkpoints only)
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Metrics report CSV output
    #[arg(long)]
    report: PathBuf,
    #[command(flatten)]
    lca: SolverFlags,
    /// Report the across-image std over pooled pair values instead of
    /// per-image means
    #[arg(long, default_value_t = false)]
    pooled_inter: bool,
    /// Worker threads; 0 uses all cores (results are thread-count independent)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum RenderCommand {
    /// Grid of dictionary elements or autoencoder filters
    Montage(MontageArgs),
    /// Activation heat map of one element blended over its input image
    Overlay(OverlayArgs),
    /// Bar chart of the coefficients at one map site
    Coeffs(CoeffsArgs),
    /// Histogram of a metrics report column
    Hist(HistArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Bank {
    Encoder,
    Decoder,
}

#[derive(Args)]
struct MontageArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pixels per element cell; 0 keeps the native patch size
    #[arg(long, default_value_t = 16)]
    cell_size: usize,
    /// Which autoencoder bank to draw (sparse-coding checkpoints only have one)
    #[arg(long, value_enum, default_value_t = Bank::Encoder)]
    bank: Bank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ColormapChoice {
    Grayscale,
    SignedDiverging,
}

#[derive(Args)]
struct OverlayArgs {
    /// Input PNG (resized to match the activation geometry)
    #[arg(long)]
    image: PathBuf,
    /// Activation tensor written by `encode`
    #[arg(long)]
    acts: PathBuf,
    /// Element index to visualize
    #[arg(long)]
    element: usize,
    #[arg(long)]
    out: PathBuf,
    /// Blend strength in [0, 1]
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = ColormapChoice::SignedDiverging)]
    colormap: ColormapChoice,
}

#[derive(Args)]
struct CoeffsArgs {
    /// Activation tensor written by `encode`
    #[arg(long)]
    acts: PathBuf,
    /// Map row of the site
    #[arg(long)]
    row: usize,
    /// Map column of the site
    #[arg(long)]
    col: usize,
    #[arg(long)]
    out: PathBuf,
    /// Draw bars only for nonzero coefficients
    #[arg(long, default_value_t = false)]
    omit_zeros: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HistField {
    /// Per-image fraction of nonzero coefficients
    PercentActive,
    /// Per-element usage frequency
    Usage,
}

#[derive(Args)]
struct HistArgs {
    /// Metrics report CSV written by `analyze`
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum)]
    field: HistField,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let (args, config_path) = match config::apply_overlay(raw) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let cli = Cli::try_parse_from(&args).unwrap_or_else(|e| {
        if let Some(path) = &config_path {
            eprintln!("note: the flag list includes values from config file {}", path.display());
        }
        e.exit()
    });
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::TrainSc(args) => with_threads(args.threads, || cmd_train_sc(args)),
        Command::TrainAe(args) => with_threads(args.threads, || cmd_train_ae(args)),
        Command::Encode(args) => cmd_encode(args),
        Command::Analyze(args) => with_threads(args.threads, || cmd_analyze(args)),
        Command::Render(cmd) => match cmd {
            RenderCommand::Montage(args) => cmd_render_montage(args),
            RenderCommand::Overlay(args) => cmd_render_overlay(args),
            RenderCommand::Coeffs(args) => cmd_render_coeffs(args),
            RenderCommand::Hist(args) => cmd_render_hist(args),
        },
    }
}

/// Run `f` on a pool with the requested thread count; 0 keeps the default
/// global pool. Work is always reduced in a fixed order, so results do not
/// depend on the count.
fn with_threads<T>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building thread pool")?;
    pool.install(f)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let mut entries = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let spec = SynthSpec::from_seed(args.seed.wrapping_add(i as u64));
        let img = synth_graphic(&spec, args.size.height, args.size.width);
        let name = format!("img_{i:04}.png");
        save_png(&img, &args.out.join(&name)).map_err(|e| anyhow!(e))?;
        entries.push(CorpusEntry::File(PathBuf::from(name)));
    }
    let manifest = CorpusManifest {
        entries,
        target_height: args.size.height,
        target_width: args.size.width,
        mean_subtract: true,
        seed: args.seed,
    };
    let manifest_path = args.out.join("manifest.txt");
    std::fs::write(&manifest_path, manifest.to_text())
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    println!(
        "synth: wrote {} images ({}) and manifest to {}",
        args.count,
        args.size,
        args.out.display()
    );
    Ok(())
}

fn load_corpus(path: &Path) -> Result<(CorpusManifest, Vec<ImageTensor<f64>>)> {
    let manifest = CorpusManifest::load(path).map_err(|e| anyhow!(e))?;
    if manifest.entries.is_empty() {
        bail!("manifest {} has no entries", path.display());
    }
    let corpus = build_corpus(&manifest).map_err(|e| anyhow!(e))?;
    Ok((manifest, corpus))
}

fn print_epoch(epoch: usize, stats: &EpochStats<f64>) {
    println!(
        "epoch={}, mse={:.6}, energy={:.6}, active={:.4}",
        epoch + 1,
        stats.mse,
        stats.energy,
        stats.percent_active
    );
}

fn write_stats(stats: &TrainStats<f64>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    stats.write_csv(&mut buf)?;
    std::fs::write(path, buf).with_context(|| format!("writing stats {}", path.display()))
}

fn cmd_train_sc(args: TrainScArgs) -> Result<()> {
    let (_, corpus) = load_corpus(&args.manifest)?;
    let cfg = TrainConfig {
        lca: args.solver.to_config(),
        dict_learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
        normalize_every_update: true,
    };
    let mut dict = init_dictionary(args.seed, args.geometry.k, args.geometry.patch, 3, args.geometry.stride);
    let mut stats = TrainStats::default();
    for epoch in 0..cfg.epochs {
        let (next, row) = train_epoch(&corpus, dict, &cfg, epoch)?;
        dict = next;
        print_epoch(epoch, &row);
        stats.epochs.push(row);
    }
    Model::SparseCoding(dict).save(&args.out).map_err(|e| anyhow!(e))?;
    if let Some(path) = &args.stats {
        write_stats(&stats, path)?;
    }
    println!("train-sc: checkpoint written to {}", args.out.display());
    Ok(())
}

fn cmd_train_ae(args: TrainAeArgs) -> Result<()> {
    let (_, corpus) = load_corpus(&args.manifest)?;
    let cfg = AeTrainConfig {
        noise_sigma: args.sigma,
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
    };
    let mut model =
        AutoencoderModel::init(args.seed, args.geometry.k, args.geometry.patch, 3, args.geometry.stride);
    let mut stats = TrainStats::default();
    for epoch in 0..cfg.epochs {
        let (next, row) = ae_train_epoch(&corpus, model, &cfg, epoch)?;
        model = next;
        print_epoch(epoch, &row);
        stats.epochs.push(row);
    }
    Model::Autoencoder(model).save(&args.out).map_err(|e| anyhow!(e))?;
    if let Some(path) = &args.stats {
        write_stats(&stats, path)?;
    }
    println!("train-ae: checkpoint written to {}", args.out.display());
    Ok(())
}

fn check_solver_choice(choice: Option<SolverChoice>, kind: ModelKind) -> Result<()> {
    let Some(choice) = choice else { return Ok(()) };
    let matches = matches!(
        (choice, kind),
        (SolverChoice::Lca, ModelKind::SparseCoding) | (SolverChoice::Ae, ModelKind::Autoencoder)
    );
    if !matches {
        bail!(
            "requested solver {:?} does not match checkpoint kind {}",
            choice,
            kind.label()
        );
    }
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let model = Model::load(&args.ckpt).map_err(|e| anyhow!(e))?;
    check_solver_choice(args.solver, model.kind())?;
    let image = load_image(&args.image, args.size.height, args.size.width).map_err(|e| anyhow!(e))?;
    let image = preprocess(image, !args.no_mean_subtract);
    let shape = model.dict_shape();
    let geometry = ActGeometry { patch: shape.patch, channels: shape.channels, stride: shape.stride };

    match model {
        Model::SparseCoding(dict) => {
            let state = encode(&image, &dict, &args.lca.to_config())?;
            save_activations(&state.activations, &geometry, &args.out_acts).map_err(|e| anyhow!(e))?;
            if let Some(path) = &args.trace {
                let mut text = String::from("step,energy\n");
                for (i, e) in state.energy_trace.iter().enumerate() {
                    text.push_str(&format!("{},{}\n", i + 1, e));
                }
                std::fs::write(path, text).with_context(|| format!("writing trace {}", path.display()))?;
            }
            println!(
                "encode: steps={}, converged={}, energy={:.6}, active={:.4}",
                state.steps_taken,
                state.converged,
                state.energy_trace.last().copied().unwrap_or(0.0),
                lcad_core::metrics::percent_active(&state.activations),
            );
        }
        Model::Autoencoder(model) => {
            if args.trace.is_some() {
                bail!("--trace requires a sparse-coding checkpoint; autoencoder inference has no energy trace");
            }
            let (acts, _) = ae_forward(&image, &model)?;
            save_activations(&acts, &geometry, &args.out_acts).map_err(|e| anyhow!(e))?;
            println!(
                "encode: dense forward pass, active={:.4}",
                lcad_core::metrics::percent_active(&acts),
            );
        }
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let model = Model::load(&args.ckpt).map_err(|e| anyhow!(e))?;
    let (_, corpus) = load_corpus(&args.manifest)?;
    let inter_mode = if args.pooled_inter { InterStdMode::Pooled } else { InterStdMode::PerImageMeans };

    // Unit-normalize the encoding weights so response magnitudes are
    // comparable across model families before computing correlations.
    let (kind, codes): (ModelKind, Vec<ActivationTensor<f64>>) = match model {
        Model::SparseCoding(mut dict) => {
            dict.normalize_elements();
            let cfg = args.lca.to_config();
            let codes = corpus
                .par_iter()
                .map(|image| encode(image, &dict, &cfg).map(|s| s.activations))
                .collect::<Result<Vec<_>, _>>()?;
            (ModelKind::SparseCoding, codes)
        }
        Model::Autoencoder(mut model) => {
            model.encoder.normalize_elements();
            let codes = corpus
                .par_iter()
                .map(|image| ae_forward(image, &model).map(|(acts, _)| acts))
                .collect::<Result<Vec<_>, _>>()?;
            (ModelKind::Autoencoder, codes)
        }
    };

    let report = MetricsReport::compute(&codes, kind, inter_mode).map_err(|e| anyhow!(e))?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    std::fs::write(&args.report, buf).with_context(|| format!("writing report {}", args.report.display()))?;
    println!(
        "analyze: kind={}, images={}, median_active={:.4}, crosscorr_mean={:.6}",
        kind.label(),
        codes.len(),
        report.percent_active_median(),
        report.crosscorr_mean
    );
    Ok(())
}

fn cmd_render_montage(args: MontageArgs) -> Result<()> {
    let model = Model::load(&args.ckpt).map_err(|e| anyhow!(e))?;
    let bank = match (&model, args.bank) {
        (Model::SparseCoding(dict), Bank::Encoder) => dict.clone(),
        (Model::SparseCoding(_), Bank::Decoder) => {
            bail!("sparse-coding checkpoints have a single bank; use --bank encoder")
        }
        (Model::Autoencoder(m), Bank::Encoder) => m.encoder.clone(),
        (Model::Autoencoder(m), Bank::Decoder) => m.decoder.clone(),
    };
    let cfg = RenderConfig { cell_size: args.cell_size, output: Some(args.out.clone()), ..RenderConfig::new() };
    montage(&bank, &cfg).map_err(|e| anyhow!(e))?;
    println!("render montage: wrote {}", args.out.display());
    Ok(())
}

fn cmd_render_overlay(args: OverlayArgs) -> Result<()> {
    let (acts, geometry) = load_activations(&args.acts).map_err(|e| anyhow!(e))?;
    let image_h = (acts.map_height() - 1) * geometry.stride + geometry.patch;
    let image_w = (acts.map_width() - 1) * geometry.stride + geometry.patch;
    let image = load_image(&args.image, image_h, image_w).map_err(|e| anyhow!(e))?;
    let cfg = RenderConfig {
        overlay_alpha: args.alpha,
        colormap: match args.colormap {
            ColormapChoice::Grayscale => Colormap::Grayscale,
            ColormapChoice::SignedDiverging => Colormap::SignedDiverging,
        },
        output: Some(args.out.clone()),
        ..RenderConfig::new()
    };
    overlay(&image, &acts, args.element, geometry.patch, geometry.stride, &cfg).map_err(|e| anyhow!(e))?;
    println!("render overlay: wrote {}", args.out.display());
    Ok(())
}

fn cmd_render_coeffs(args: CoeffsArgs) -> Result<()> {
    let (acts, _) = load_activations(&args.acts).map_err(|e| anyhow!(e))?;
    if args.row >= acts.map_height() || args.col >= acts.map_width() {
        bail!(
            "site ({}, {}) outside the {}x{} activation map",
            args.row,
            args.col,
            acts.map_height(),
            acts.map_width()
        );
    }
    let cfg = RenderConfig { output: Some(args.out.clone()), ..RenderConfig::new() };
    coeff_chart(acts.site(args.row, args.col), args.omit_zeros, &cfg).map_err(|e| anyhow!(e))?;
    println!("render coeffs: wrote {}", args.out.display());
    Ok(())
}

/// Pull a column out of the three-block metrics report CSV.
fn report_column(path: &Path, field: HistField) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading report {}", path.display()))?;
    let (header, column) = match field {
        HistField::Usage => ("k,usage_frequency", 1),
        HistField::PercentActive => ("index,percent_active,intra_mean", 1),
    };
    let mut values = Vec::new();
    let mut in_block = false;
    for line in text.lines() {
        let line = line.trim();
        if line == header {
            in_block = true;
            continue;
        }
        if in_block {
            if line.is_empty() {
                break;
            }
            let cell = line
                .split(',')
                .nth(column)
                .ok_or_else(|| anyhow!("malformed report row {line:?}"))?;
            values.push(cell.parse::<f64>().with_context(|| format!("parsing {cell:?}"))?);
        }
    }
    if values.is_empty() {
        bail!("report {} has no `{}` block", path.display(), header);
    }
    Ok(values)
}

fn cmd_render_hist(args: HistArgs) -> Result<()> {
    let values = report_column(&args.report, args.field)?;
    let cfg = RenderConfig { output: Some(args.out.clone()), ..RenderConfig::new() };
    histogram(&values, args.bins, &cfg).map_err(|e| anyhow!(e))?;
    println!("render hist: wrote {} (+ bin table CSV)", args.out.display());
    Ok(())
}

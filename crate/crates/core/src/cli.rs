//! Command-line front end.
//!
//! Every subcommand resolves its settings from built-in defaults, an
//! optional `--config` JSON file and explicit flags, in increasing priority.
//! The resolved settings are echoed to stdout and, for commands with an
//! output path, written next to it as `<output>.config.json`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::afd::{
    build_ground_truth, classification_scores, compute_afi, morph_open, sweep_thresholds,
    threshold_map, AfiKind, BinaryMap, Direction, GtConfig,
};
use crate::hpf::{hpf_fuse, GainMode, HpfConfig};
use crate::nn::{load_params, save_params};
use crate::quality::{evaluate_scenes, reports_csv, QWindow, QualityReport};
use crate::raster::{
    composite_false_color, export_png, import_raw, load_scene, save_sraf, write_text, BandGrid,
    RawDtype, Scene, Stretch,
};
use crate::resample::{downsample_box, upsample_bicubic, upsample_nearest, ScaleFactor};
use crate::synth::{generate_scene, write_synth, FireBlob, SynthConfig};
use crate::train::{make_wald_pair, super_resolve, train_with_progress, TrainConfig};

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(crate::Error),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "swirsr",
    version,
    about = "SWIR super-resolution and active-fire mapping toolkit"
)]
struct Cli {
    /// JSON file with settings for the subcommand; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a raw little-endian raster into an SRAF band.
    Import(ImportArgs),
    /// Generate a synthetic fire scene.
    Synth(SynthArgs),
    /// Resample bands by an integer ratio.
    Resample(ResampleArgs),
    /// High-pass-filter fusion of the SWIR bands with a 10 m guide.
    Hpf(HpfArgs),
    /// Train or fine-tune the super-resolution network.
    Train(TrainArgs),
    /// Super-resolve the SWIR bands of a scene.
    Sr(SrArgs),
    /// Compare an estimate against a reference.
    Metrics(MetricsArgs),
    /// Compute an active-fire index and its threshold map.
    Afi(AfiArgs),
    /// Burned-area ground truth from two acquisitions.
    Gt(GtArgs),
    /// Precision, recall and IoU of a fire map.
    Score(ScoreArgs),
    /// Score an active-fire index over a list of thresholds.
    Sweep(SweepArgs),
    /// Render bands as an 8-bit PNG.
    ExportPng(ExportPngArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportArgs {
    /// Raw input file.
    #[arg(long)]
    raw: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long, default_value = "u16")]
    dtype: String,
    #[arg(long, default_value_t = 10000.0)]
    divisor: f64,
    /// Band identifier, e.g. B08.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    gsd: f64,
    /// Output SRAF file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthArgs {
    /// Side length of the square 10 m grid.
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Overrides the width given by --size.
    #[arg(long)]
    width: Option<usize>,
    /// Overrides the height given by --size.
    #[arg(long)]
    height: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    octaves: usize,
    #[arg(long, default_value_t = 0.3)]
    smoke: f64,
    /// Intensity of the default fires.
    #[arg(long, default_value_t = 0.5)]
    intensity: f64,
    /// Explicit fire list; only settable from a config file.
    #[arg(skip)]
    fire_blobs: Option<Vec<FireBlob>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ResampleMethod {
    Box,
    Nearest,
    Bicubic,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResampleArgs {
    /// Scene file or directory.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Bands to resample (default: all).
    #[arg(long, value_delimiter = ',')]
    bands: Vec<String>,
    #[arg(long, value_enum, default_value = "bicubic")]
    method: ResampleMethod,
    #[arg(long, default_value_t = 2)]
    ratio: usize,
    /// Output SRAF file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GainArg {
    Unit,
    Std,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HpfArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [String::from("B11"), String::from("B12")])]
    swir: Vec<String>,
    #[arg(long, default_value = "B08")]
    guide: String,
    /// Side of the box filter defining the low-pass part of the guide.
    #[arg(long = "box", default_value_t = 5)]
    box_size: usize,
    #[arg(long, value_enum, default_value = "unit")]
    gain: GainArg,
    #[arg(long, default_value_t = 2)]
    ratio: usize,
    /// Output SRAF file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainArgs {
    /// Scene directories; several give several training pairs.
    #[arg(long, value_delimiter = ',')]
    scene: Vec<PathBuf>,
    /// Start from these weights instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 17)]
    patch: usize,
    #[arg(long, default_value_t = 10_000)]
    patches: usize,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0.002)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [String::from("B08")])]
    guide: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [String::from("B11"), String::from("B12")])]
    swir: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [48usize, 32])]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    ratio: usize,
    /// Output weights JSON; the loss history goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Omit the optimizer state from the weights file.
    #[arg(long)]
    no_adam_state: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SrMethod {
    Cnn,
    Bicubic,
    Hpf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SrArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cnn")]
    method: SrMethod,
    /// SWIR bands for the bicubic and hpf methods.
    #[arg(long, value_delimiter = ',', default_values_t = [String::from("B11"), String::from("B12")])]
    swir: Vec<String>,
    #[arg(long, default_value = "B08")]
    guide: String,
    #[arg(long, default_value_t = 2)]
    ratio: usize,
    /// Output SRAF file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsArgs {
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long)]
    est: Option<PathBuf>,
    /// Restrict to these reference bands.
    #[arg(long, value_delimiter = ',')]
    bands: Vec<String>,
    /// Scale ratio between the coarse and fine grids; ERGAS uses its inverse.
    #[arg(long, default_value_t = 2)]
    ratio: usize,
    /// Sliding Q-index window; global when absent.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value = "estimate")]
    method: String,
    /// Output CSV; a JSON copy is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DirectionArg {
    Greater,
    Less,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Greater => Direction::Greater,
            DirectionArg::Less => Direction::Less,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AfiArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Extra bands, typically super-resolved SWIR, merged into the scene.
    #[arg(long)]
    est: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    kind: u8,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "greater")]
    direction: DirectionArg,
    /// Opening radius applied to the threshold map.
    #[arg(long, default_value_t = 0)]
    open: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtArgs {
    /// Scene before the fire.
    #[arg(long)]
    before: Option<PathBuf>,
    /// Scene after the fire.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    tau: f64,
    #[arg(long, default_value_t = 1)]
    radius: usize,
    /// Output SRAF file; a PNG is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreArgs {
    /// Ground-truth map.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Predicted map.
    #[arg(long)]
    est: Option<PathBuf>,
    /// Output JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    est: Option<PathBuf>,
    /// Ground-truth map.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    kind: u8,
    /// Thresholds to score.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0])]
    alpha: Vec<f64>,
    #[arg(long, value_enum, default_value = "greater")]
    direction: DirectionArg,
    #[arg(long, default_value_t = 0)]
    open: usize,
    /// Output CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportPngArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    /// One or three bands; the B12/B11/B08 false-colour composite when empty.
    #[arg(long, value_delimiter = ',')]
    bands: Vec<String>,
    /// Fixed stretch bounds `lo,hi`; per-band min/max when empty.
    #[arg(long, value_delimiter = ',')]
    stretch: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Runs the tool on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on usage errors, 2 on data errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    let sub = matches
        .subcommand()
        .map(|(_, m)| m)
        .expect("a subcommand is required");
    match dispatch(cli, sub) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{}", Cli::command().render_usage());
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli, m: &ArgMatches) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => Some(read_config(path)?),
        None => None,
    };
    let file = file.as_ref();
    match cli.command {
        Command::Import(a) => cmd_import(resolve("import", a, m, file)?),
        Command::Synth(a) => cmd_synth(resolve("synth", a, m, file)?),
        Command::Resample(a) => cmd_resample(resolve("resample", a, m, file)?),
        Command::Hpf(a) => cmd_hpf(resolve("hpf", a, m, file)?),
        Command::Train(a) => cmd_train(resolve("train", a, m, file)?),
        Command::Sr(a) => cmd_sr(resolve("sr", a, m, file)?),
        Command::Metrics(a) => cmd_metrics(resolve("metrics", a, m, file)?),
        Command::Afi(a) => cmd_afi(resolve("afi", a, m, file)?),
        Command::Gt(a) => cmd_gt(resolve("gt", a, m, file)?),
        Command::Score(a) => cmd_score(resolve("score", a, m, file)?),
        Command::Sweep(a) => cmd_sweep(resolve("sweep", a, m, file)?),
        Command::ExportPng(a) => cmd_export_png(resolve("export-png", a, m, file)?),
    }
}

/// A config file is either a bare settings object or a previously written
/// sidecar `{"command": ..., "config": {...}}`.
fn read_config(path: &Path) -> CliResult<(Option<String>, Map<String, Value>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(usage(format!(
            "config {} must hold a JSON object",
            path.display()
        )));
    };
    if let Some(Value::Object(inner)) = obj.get("config") {
        let command = obj
            .get("command")
            .and_then(Value::as_str)
            .map(str::to_string);
        let inner = inner.clone();
        obj = inner;
        return Ok((command, obj));
    }
    Ok((None, obj))
}

/// Resolved settings of one run, as echoed and written to the sidecar.
#[derive(Serialize)]
struct RunRecord<'a, T> {
    command: &'a str,
    config: &'a T,
}

fn resolve<T: Serialize + DeserializeOwned>(
    command: &str,
    args: T,
    m: &ArgMatches,
    file: Option<&(Option<String>, Map<String, Value>)>,
) -> CliResult<T> {
    let Some((file_command, settings)) = file else {
        return Ok(args);
    };
    if let Some(c) = file_command.as_deref().filter(|c| *c != command) {
        return Err(usage(format!(
            "config was written for `{c}`, not `{command}`"
        )));
    }
    let Value::Object(mut merged) = serde_json::to_value(&args).expect("arguments serialize")
    else {
        unreachable!("argument structs serialize to objects");
    };
    for (key, value) in settings {
        let explicit = m.ids().any(|id| id.as_str() == key)
            && m.value_source(key) == Some(ValueSource::CommandLine);
        if !explicit {
            merged.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| usage(format!("invalid config for `{command}`: {e}")))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    out.with_file_name(format!("{name}.config.json"))
}

/// Prints the resolved settings.
fn echo<T: Serialize>(command: &str, args: &T) -> String {
    let text = serde_json::to_string_pretty(&RunRecord {
        command,
        config: args,
    })
    .expect("settings serialize");
    println!("{text}");
    text
}

/// Writes the settings sidecar of a finished run.
fn write_sidecar(out: &Path, text: &str) -> CliResult<()> {
    write_text(&sidecar_path(out), text)?;
    Ok(())
}

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| usage(format!("missing required flag --{flag}")))
}

/// `out` itself when it names an `.sraf` file, otherwise `out/default_name`.
fn sraf_target(out: &Path, default_name: &str) -> PathBuf {
    if out.extension().is_some_and(|e| e == "sraf") {
        out.to_path_buf()
    } else {
        out.join(default_name)
    }
}

fn ratio(r: usize) -> CliResult<ScaleFactor> {
    ScaleFactor::new(r).map_err(|e| usage(e.to_string()))
}

fn cmd_import(a: ImportArgs) -> CliResult<()> {
    let text = echo("import", &a);
    let raw = required(&a.raw, "raw")?;
    let out = required(&a.out, "out")?;
    let dtype: RawDtype = a
        .dtype
        .parse()
        .map_err(|e: crate::Error| usage(e.to_string()))?;
    let band = import_raw(
        raw,
        *required(&a.width, "width")?,
        *required(&a.height, "height")?,
        dtype,
        a.divisor,
        required(&a.name, "name")?,
        a.gsd,
    )?;
    save_sraf(&Scene::from_bands("", [band])?, out)?;
    write_sidecar(out, &text)
}

fn cmd_synth(mut a: SynthArgs) -> CliResult<()> {
    let width = a.width.unwrap_or(a.size);
    let height = a.height.unwrap_or(a.size);
    let mut cfg = SynthConfig::with_size(width, height, a.seed);
    cfg.texture_octaves = a.octaves;
    cfg.smoke_opacity = a.smoke;
    for b in &mut cfg.fire_blobs {
        b.intensity = a.intensity;
    }
    match &a.fire_blobs {
        Some(blobs) => cfg.fire_blobs = blobs.clone(),
        None => a.fire_blobs = Some(cfg.fire_blobs.clone()),
    }
    a.width = Some(width);
    a.height = Some(height);
    let text = echo("synth", &a);
    let out = required(&a.out, "out")?;
    let synth = generate_scene(&cfg)?;
    let manifest = write_synth(out, &cfg, &synth)?;
    eprintln!(
        "wrote {} scene file(s), {} fire pixels",
        manifest.scene.len(),
        synth.fire_gt.count()
    );
    write_sidecar(out, &text)
}

fn selected<'a>(scene: &'a Scene, names: &[String]) -> CliResult<Vec<&'a BandGrid>> {
    if names.is_empty() {
        Ok(scene.bands().collect())
    } else {
        Ok(names
            .iter()
            .map(|n| scene.band(n))
            .collect::<crate::Result<_>>()?)
    }
}

fn cmd_resample(a: ResampleArgs) -> CliResult<()> {
    let text = echo("resample", &a);
    let scene = load_scene(required(&a.scene, "scene")?)?;
    let out = required(&a.out, "out")?;
    let r = ratio(a.ratio)?;
    let mut result = Scene::new(scene.acquisition_label.clone());
    for band in selected(&scene, &a.bands)? {
        result.insert(match a.method {
            ResampleMethod::Box => downsample_box(band, r)?,
            ResampleMethod::Nearest => upsample_nearest(band, r),
            ResampleMethod::Bicubic => upsample_bicubic(band, r)?,
        })?;
    }
    save_sraf(&result, out)?;
    write_sidecar(out, &text)
}

fn cmd_hpf(a: HpfArgs) -> CliResult<()> {
    let text = echo("hpf", &a);
    let scene = load_scene(required(&a.scene, "scene")?)?;
    let out = required(&a.out, "out")?;
    if a.ratio != 2 {
        return Err(usage("hpf fusion supports --ratio 2 only"));
    }
    let cfg = HpfConfig {
        box_size: a.box_size,
        gain_mode: match a.gain {
            GainArg::Unit => GainMode::Unit,
            GainArg::Std => GainMode::StdMatch,
        },
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let fused = hpf_bands(&scene, &a.swir, &a.guide, &cfg)?;
    save_sraf(
        &Scene::from_bands("", fused)?,
        sraf_target(out, "swir_hpf.sraf"),
    )?;
    write_sidecar(out, &text)
}

fn hpf_bands(
    scene: &Scene,
    swir: &[String],
    guide: &str,
    cfg: &HpfConfig,
) -> CliResult<Vec<BandGrid>> {
    let guide = scene.band(guide)?;
    swir.iter()
        .map(|name| {
            let fused = hpf_fuse(scene.band(name)?, guide, cfg)?;
            Ok(fused.with_name(format!("{name}_sr")))
        })
        .collect()
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let text = echo("train", &a);
    if a.scene.is_empty() {
        return Err(usage("missing required flag --scene"));
    }
    let out = required(&a.out, "out")?;
    let cfg = TrainConfig {
        patch: a.patch,
        patch_count: a.patches,
        train_fraction: a.train_fraction,
        batch: a.batch,
        epochs: a.epochs,
        eta: a.eta,
        seed: a.seed,
        guide_bands: a.guide.clone(),
        swir_bands: a.swir.clone(),
        ratio: a.ratio,
        hidden_widths: a.widths.clone(),
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let init = match &a.init {
        Some(path) => Some(load_params(path)?.0),
        None => None,
    };
    let pairs = a
        .scene
        .iter()
        .map(|p| make_wald_pair(&load_scene(p)?, &cfg))
        .collect::<crate::Result<Vec<_>>>()?;
    let outcome = train_with_progress(&pairs, &cfg, init, |s| {
        eprintln!(
            "epoch {:>4}  train {:.6}  val {:.6}",
            s.epoch, s.train_loss, s.val_loss
        );
    })?;
    let adam = (!a.no_adam_state).then_some(&outcome.adam);
    save_params(out, &outcome.params, adam)?;
    write_text(&out.with_extension("history.csv"), &outcome.history_csv())?;
    write_sidecar(out, &text)
}

fn cmd_sr(a: SrArgs) -> CliResult<()> {
    let text = echo("sr", &a);
    let scene = load_scene(required(&a.scene, "scene")?)?;
    let out = required(&a.out, "out")?;
    let bands = match a.method {
        SrMethod::Cnn => {
            let (params, _) = load_params(required(&a.weights, "weights")?)?;
            super_resolve(&scene, &params)?
        }
        SrMethod::Bicubic => {
            let r = ratio(a.ratio)?;
            a.swir
                .iter()
                .map(|name| {
                    Ok(upsample_bicubic(scene.band(name)?, r)?.with_name(format!("{name}_sr")))
                })
                .collect::<CliResult<_>>()?
        }
        SrMethod::Hpf => {
            if a.ratio != 2 {
                return Err(usage("hpf fusion supports --ratio 2 only"));
            }
            hpf_bands(&scene, &a.swir, &a.guide, &HpfConfig::default())?
        }
    };
    save_sraf(
        &Scene::from_bands("", bands)?,
        sraf_target(out, "swir_sr.sraf"),
    )?;
    write_sidecar(out, &text)
}

fn cmd_metrics(a: MetricsArgs) -> CliResult<()> {
    let text = echo("metrics", &a);
    let mut reference = load_scene(required(&a.reference, "ref")?)?;
    let estimate = load_scene(required(&a.est, "est")?)?;
    if a.ratio == 0 {
        return Err(usage("--ratio must be positive"));
    }
    let window = match a.window {
        Some(w) => QWindow::Sliding(w),
        None => QWindow::Global,
    };
    if !a.bands.is_empty() {
        let names: Vec<&str> = a.bands.iter().map(String::as_str).collect();
        reference = reference.select(&names)?;
    }
    let mut reports: Vec<QualityReport> = Vec::new();
    let groups = reference.resolution_groups();
    let multi = groups.len() > 1;
    for (gsd, bands) in groups {
        let group = Scene::from_bands("", bands.into_iter().cloned())?;
        let method = if multi {
            format!("{}@{gsd}m", a.method)
        } else {
            a.method.clone()
        };
        reports.push(evaluate_scenes(
            &method,
            &group,
            &estimate,
            1.0 / a.ratio as f64,
            window,
        )?);
    }
    let csv = reports_csv(&reports);
    print!("{csv}");
    if let Some(out) = &a.out {
        write_text(out, &csv)?;
        let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
        write_text(&out.with_extension("json"), &json)?;
        write_sidecar(out, &text)?;
    }
    Ok(())
}

fn read_map(path: &Path) -> CliResult<BinaryMap> {
    let scene = load_scene(path)?;
    let band = scene.bands().next().ok_or_else(|| {
        CliError::Data(crate::Error::MissingBand(format!(
            "{} holds no band",
            path.display()
        )))
    })?;
    Ok(BinaryMap::from_band(band))
}

fn scene_with_estimate(scene: &Option<PathBuf>, est: &Option<PathBuf>) -> CliResult<Scene> {
    let mut scene = load_scene(required(scene, "scene")?)?;
    if let Some(est) = est {
        scene.merge(load_scene(est)?)?;
    }
    Ok(scene)
}

fn kind(k: u8) -> CliResult<AfiKind> {
    AfiKind::from_index(k).map_err(|e| usage(e.to_string()))
}

fn cmd_afi(a: AfiArgs) -> CliResult<()> {
    let text = echo("afi", &a);
    let kind = kind(a.kind)?;
    let scene = scene_with_estimate(&a.scene, &a.est)?;
    let out = required(&a.out, "out")?;
    let afi = compute_afi(kind, &scene)?;
    let raw = threshold_map(&afi.index, a.alpha, a.direction.into())?;
    let map = morph_open(&raw, a.open);
    let gsd = afi.index.gsd_m();
    let k = kind.index();
    save_sraf(
        &Scene::from_bands("", [afi.index])?,
        out.join(format!("afi{k}.sraf")),
    )?;
    save_sraf(
        &Scene::from_bands("", [map.to_band("fire_map", gsd)?])?,
        out.join("fire_map.sraf"),
    )?;
    map.export_png(out.join("fire_map.png"))?;
    eprintln!(
        "{kind}: {} fire pixels, {} zero-denominator pixels",
        map.count(),
        afi.zero_denominator.count()
    );
    write_sidecar(out, &text)
}

fn cmd_gt(a: GtArgs) -> CliResult<()> {
    let text = echo("gt", &a);
    let before = load_scene(required(&a.before, "before")?)?;
    let after = load_scene(required(&a.scene, "scene")?)?;
    let out = required(&a.out, "out")?;
    let cfg = GtConfig {
        ndvi_delta_threshold: a.tau,
        opening_radius: a.radius,
    };
    let map = build_ground_truth(&before, &after, &cfg)?;
    let gsd = after.band(crate::afd::NIR_BAND)?.gsd_m();
    let target = sraf_target(out, "burned_gt.sraf");
    save_sraf(
        &Scene::from_bands("", [map.to_band("burned_gt", gsd)?])?,
        &target,
    )?;
    map.export_png(target.with_extension("png"))?;
    eprintln!("{} burned pixels", map.count());
    write_sidecar(out, &text)
}

fn cmd_score(a: ScoreArgs) -> CliResult<()> {
    let text = echo("score", &a);
    let gt = read_map(required(&a.reference, "ref")?)?;
    let pred = read_map(required(&a.est, "est")?)?;
    let scores = classification_scores(&pred, &gt)?;
    let json = serde_json::to_string_pretty(&scores).expect("scores serialize");
    println!("{json}");
    if let Some(out) = &a.out {
        write_text(out, &json)?;
        write_sidecar(out, &text)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let text = echo("sweep", &a);
    let kind = kind(a.kind)?;
    let scene = scene_with_estimate(&a.scene, &a.est)?;
    let gt = read_map(required(&a.reference, "ref")?)?;
    let afi = compute_afi(kind, &scene)?;
    let sweep = if a.open == 0 {
        sweep_thresholds(&afi.index, &gt, &a.alpha, a.direction.into())?
    } else {
        opened_sweep(&afi.index, &gt, &a.alpha, a.direction.into(), a.open)?
    };
    let csv = sweep.to_csv();
    print!("{csv}");
    let best = sweep.best_row();
    eprintln!("best alpha {} (IoU {:.4})", best.alpha, best.iou);
    if let Some(out) = &a.out {
        write_text(out, &csv)?;
        write_sidecar(out, &text)?;
    }
    Ok(())
}

fn opened_sweep(
    index: &BandGrid,
    gt: &BinaryMap,
    alphas: &[f64],
    direction: Direction,
    radius: usize,
) -> CliResult<crate::afd::Sweep> {
    if alphas.is_empty() {
        return Err(usage("threshold list is empty"));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    let mut best = 0;
    for &alpha in alphas {
        let map = morph_open(&threshold_map(index, alpha, direction)?, radius);
        let s = classification_scores(&map, gt)?;
        if rows.is_empty()
            || s.iou
                > rows
                    .get(best)
                    .map_or(f64::NEG_INFINITY, |r: &crate::afd::SweepRow| r.iou)
        {
            best = rows.len();
        }
        rows.push(crate::afd::SweepRow {
            alpha,
            precision: s.precision,
            recall: s.recall,
            iou: s.iou,
        });
    }
    Ok(crate::afd::Sweep { rows, best })
}

fn cmd_export_png(a: ExportPngArgs) -> CliResult<()> {
    let text = echo("export-png", &a);
    let scene = load_scene(required(&a.scene, "scene")?)?;
    let out = required(&a.out, "out")?;
    let stretch = match a.stretch.as_slice() {
        [] => Stretch::MinMax,
        [lo, hi] => Stretch::Fixed { lo: *lo, hi: *hi },
        _ => return Err(usage("--stretch takes two values: lo,hi")),
    };
    if a.bands.is_empty() {
        let rgb = composite_false_color(&scene)?;
        export_png(&[&rgb[0], &rgb[1], &rgb[2]], out, stretch)?;
    } else {
        if a.bands.len() != 1 && a.bands.len() != 3 {
            return Err(usage("--bands takes one or three band names"));
        }
        export_png(&selected(&scene, &a.bands)?, out, stretch)?;
    }
    write_sidecar(out, &text)
}

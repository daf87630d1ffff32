//! Command-line surface. Every subcommand reads optional defaults from a
//! JSON config file (keys are the long flag names in snake_case), lets
//! flags override them, and writes the resolved configuration next to its
//! outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    self, relative_dir, DatasetManifest, NamedPairing, PairingMode, PairingPlan, SplitSpec,
};
use crate::error::Error;
use crate::fda::{self, FdaParams, RangePolicy, DEFAULT_ALPHA};
use crate::image::{read_image, write_f32le, write_image, Image2D};
use crate::metrics::{evaluate_batch, DEFAULT_EPSILON};
use crate::simulator::{
    generate_dataset, list_images, PhantomGeometry, PsfParams, SimulationParams, DEFAULT_OUT_SIZE,
};
use crate::spectral::log_magnitude_image;

#[derive(Debug, Parser)]
#[command(name = "usfda", version, about = "Low-frequency spectrum adaptation for ultrasound images")]
pub struct Cli {
    /// Print errors as JSON on stderr.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads for per-image work (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// JSON file with default values for the subcommand's flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate speckle images with anechoic regions from mask files.
    Simulate(SimulateArgs),
    /// Swap the low-frequency magnitude of source images with target images.
    Adapt(AdaptArgs),
    /// Seeded train/val/test split of an image directory.
    Split(SplitArgs),
    /// Dice scores of predicted masks against ground truth.
    Evaluate(EvaluateArgs),
    /// Render the low-frequency mask as an image.
    Mask(MaskArgs),
    /// Render the centred log-magnitude spectrum of an image.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormatArg {
    Png,
    Pgm,
}

impl ImageFormatArg {
    fn extension(self) -> &'static str {
        match self {
            ImageFormatArg::Png => "png",
            ImageFormatArg::Pgm => "pgm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingArg {
    Random,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeArg {
    Clip,
    Rescale,
}

impl From<RangeArg> for RangePolicy {
    fn from(r: RangeArg) -> Self {
        match r {
            RangeArg::Clip => RangePolicy::Clip,
            RangeArg::Rescale => RangePolicy::Rescale,
        }
    }
}

/// `self.field = self.field.or(file.field)` for each listed field.
macro_rules! overlay {
    ($flags:ident, $file:ident; $($field:ident),+ $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field; } )+
    };
}

fn required<T>(value: Option<T>, flag: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| Error::Configuration(format!("--{flag} is required")).into())
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Directory of binary mask images (PNG or PGM).
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with pulse/beam parameters; missing keys use defaults.
    #[arg(long)]
    pub psf_config: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub n_scatterers: Option<usize>,
    #[arg(long)]
    pub width_mm: Option<f64>,
    #[arg(long)]
    pub depth_mm: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<ImageFormatArg>,
}

#[derive(Debug, Serialize)]
pub struct SimulateConfig {
    pub masks: PathBuf,
    pub out: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub psf_config: Option<PathBuf>,
    pub format: ImageFormatArg,
    pub simulation: SimulationParams,
}

impl SimulateArgs {
    fn resolve(mut self, file: Self) -> anyhow::Result<SimulateConfig> {
        overlay!(self, file; masks, out, count, seed, psf_config, size, n_scatterers, width_mm, depth_mm, format);
        let psf = match &self.psf_config {
            Some(path) => read_json::<PsfParams>(path)?,
            None => PsfParams::default(),
        };
        let geometry = PhantomGeometry::default();
        Ok(SimulateConfig {
            masks: required(self.masks, "masks")?,
            out: required(self.out, "out")?,
            count: required(self.count, "count")?,
            seed: self.seed.unwrap_or(0),
            psf_config: self.psf_config,
            format: self.format.unwrap_or(ImageFormatArg::Png),
            simulation: SimulationParams {
                phantom: PhantomGeometry {
                    width_mm: self.width_mm.unwrap_or(geometry.width_mm),
                    depth_mm: self.depth_mm.unwrap_or(geometry.depth_mm),
                    n_scatterers: self.n_scatterers.unwrap_or(geometry.n_scatterers),
                },
                psf,
                out_size: self.size.unwrap_or(DEFAULT_OUT_SIZE),
            },
        })
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub pairing: Option<PairingArg>,
    /// Iteration index for random pairing.
    #[arg(long)]
    pub iteration: Option<u64>,
    /// Manifest holding a fixed pairing named "adapt" to reuse.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub range: Option<RangeArg>,
    /// Also write each adapted image as float32 with a JSON sidecar.
    #[arg(long)]
    #[serde(default)]
    pub float_sidecar: bool,
}

#[derive(Debug, Serialize)]
pub struct AdaptConfig {
    pub source: PathBuf,
    pub target: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub pairing: PairingArg,
    pub iteration: u64,
    pub manifest: Option<PathBuf>,
    pub fda: FdaParams,
    pub float_sidecar: bool,
}

impl AdaptArgs {
    fn resolve(mut self, file: Self) -> anyhow::Result<AdaptConfig> {
        overlay!(self, file; source, target, out, alpha, seed, pairing, iteration, manifest, range);
        let fda = FdaParams {
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
            range_policy: self.range.map(Into::into).unwrap_or_default(),
        };
        fda.validate()?;
        Ok(AdaptConfig {
            source: required(self.source, "source")?,
            target: required(self.target, "target")?,
            out: required(self.out, "out")?,
            seed: self.seed.unwrap_or(0),
            pairing: self.pairing.unwrap_or(PairingArg::Random),
            iteration: self.iteration.unwrap_or(0),
            manifest: self.manifest,
            fda,
            float_sidecar: self.float_sidecar || file.float_sidecar,
        })
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitArgs {
    /// Directory whose image files form the corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct SplitConfig {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub spec: SplitSpec,
}

impl SplitArgs {
    fn resolve(mut self, file: Self) -> anyhow::Result<SplitConfig> {
        overlay!(self, file; corpus, out, train, val, test, seed);
        Ok(SplitConfig {
            corpus: required(self.corpus, "corpus")?,
            out: required(self.out, "out")?,
            spec: SplitSpec {
                train: self.train.unwrap_or(0),
                val: self.val.unwrap_or(0),
                test: self.test.unwrap_or(0),
                seed: self.seed.unwrap_or(0),
            },
        })
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Also write a plain-text table.
    #[arg(long)]
    #[serde(default)]
    pub table: bool,
}

#[derive(Debug, Serialize)]
pub struct EvaluateConfig {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub out: PathBuf,
    pub epsilon: f64,
    pub table: bool,
}

impl EvaluateArgs {
    fn resolve(mut self, file: Self) -> anyhow::Result<EvaluateConfig> {
        overlay!(self, file; pred, gt, out, epsilon);
        Ok(EvaluateConfig {
            pred: required(self.pred, "pred")?,
            gt: required(self.gt, "gt")?,
            out: required(self.out, "out")?,
            epsilon: self.epsilon.unwrap_or(DEFAULT_EPSILON),
            table: self.table || file.table,
        })
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Output image file (`.png` or `.pgm`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct MaskConfig {
    pub alpha: f64,
    pub width: usize,
    pub height: usize,
    pub out: PathBuf,
}

impl MaskArgs {
    fn resolve(mut self, file: Self) -> anyhow::Result<MaskConfig> {
        overlay!(self, file; alpha, width, height, out);
        Ok(MaskConfig {
            alpha: self.alpha.unwrap_or(DEFAULT_ALPHA),
            width: self.width.unwrap_or(DEFAULT_OUT_SIZE),
            height: self.height.unwrap_or(DEFAULT_OUT_SIZE),
            out: required(self.out, "out")?,
        })
    }
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct SpectrumConfig {
    pub input: PathBuf,
    pub out: PathBuf,
}

impl SpectrumArgs {
    fn resolve(mut self, file: Self) -> anyhow::Result<SpectrumConfig> {
        overlay!(self, file; input, out);
        Ok(SpectrumConfig {
            input: required(self.input, "input")?,
            out: required(self.out, "out")?,
        })
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())).into())
}

fn file_defaults<T: DeserializeOwned + Default>(config: Option<&Path>) -> anyhow::Result<T> {
    config.map_or_else(|| Ok(T::default()), read_json)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Config path for single-file outputs: `<out>.config.json`.
fn sidecar_config(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".config.json");
    name.into()
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!(Error::Configuration("--jobs must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .context("building worker pool")?;
        return pool.install(|| dispatch(cli.command, cli.config.as_deref()));
    }
    dispatch(cli.command, cli.config.as_deref())
}

fn dispatch(command: Command, config: Option<&Path>) -> anyhow::Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args.resolve(file_defaults(config)?)?),
        Command::Adapt(args) => cmd_adapt(args.resolve(file_defaults(config)?)?),
        Command::Split(args) => cmd_split(args.resolve(file_defaults(config)?)?),
        Command::Evaluate(args) => cmd_evaluate(args.resolve(file_defaults(config)?)?),
        Command::Mask(args) => cmd_mask(args.resolve(file_defaults(config)?)?),
        Command::Spectrum(args) => cmd_spectrum(args.resolve(file_defaults(config)?)?),
    }
}

pub fn cmd_simulate(cfg: SimulateConfig) -> anyhow::Result<()> {
    let samples = generate_dataset(&cfg.masks, cfg.count, cfg.seed, &cfg.simulation)?;
    let out = &cfg.out;
    for sub in ["bmode", "ground_truth", "envelope", "provenance"] {
        create_dir(&out.join(sub))?;
    }
    let ext = cfg.format.extension();
    let mut written = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        let stem = format!("sample_{i:04}");
        let bmode = format!("bmode/{stem}.{ext}");
        let gt = format!("ground_truth/{stem}.{ext}");
        let env = format!("envelope/{stem}.f32");
        let prov = format!("provenance/{stem}.json");
        write_image(&out.join(&bmode), &sample.bmode)?;
        write_image(&out.join(&gt), &sample.ground_truth)?;
        write_f32le(&out.join(&env), &sample.envelope)?;
        write_json(&out.join(&prov), &sample.provenance)?;
        written.extend([bmode, gt, env.clone(), format!("{env}.json"), prov]);
    }
    let mut manifest = DatasetManifest {
        simulation: Some(cfg.simulation),
        seed: Some(cfg.seed),
        ..Default::default()
    };
    manifest.add_files(out, &written)?;
    dataset::write_manifest(&out.join("manifest.json"), &manifest)?;
    write_json(&out.join("config.json"), &cfg)?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

fn load_dir(dir: &Path) -> anyhow::Result<(Vec<String>, Vec<Image2D>)> {
    let paths = list_images(dir)?;
    let names = paths.iter().map(|p| file_name(p)).collect();
    let images = paths.iter().map(|p| read_image(p)).collect::<Result<Vec<_>, _>>()?;
    Ok((names, images))
}

pub fn cmd_adapt(cfg: AdaptConfig) -> anyhow::Result<()> {
    let (source_names, sources) = load_dir(&cfg.source)?;
    let (target_names, targets) = load_dir(&cfg.target)?;
    if targets.is_empty() {
        bail!(Error::Configuration(format!("no target images in {}", cfg.target.display())));
    }

    let plan = match (cfg.pairing, &cfg.manifest) {
        (PairingArg::Fixed, Some(path)) => {
            let manifest = dataset::load_manifest(path)?;
            let named = manifest.pairing("adapt").ok_or_else(|| {
                Error::Manifest(format!("{} has no pairing named \"adapt\"", path.display()))
            })?;
            if named.plan.mode != PairingMode::Fixed {
                bail!(Error::Manifest(format!(
                    "pairing in {} is not a fixed pairing",
                    path.display()
                )));
            }
            named.plan.clone()
        }
        (PairingArg::Fixed, None) => {
            PairingPlan::fixed_from_seed(&source_names, target_names.clone(), cfg.seed)?
        }
        (PairingArg::Random, _) => PairingPlan::random(target_names.clone(), cfg.seed)?,
    };
    let resolution = plan.resolve(&source_names, cfg.iteration)?;
    // Pool indices refer to the plan; map them onto the loaded target files.
    let pairing = resolution
        .indices
        .iter()
        .map(|&i| {
            let name = &plan.target_pool[i];
            target_names.iter().position(|n| n == name).ok_or_else(|| {
                Error::Manifest(format!("target {name} is not in {}", cfg.target.display()))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let adapted = fda::adapt_batch(&sources, &targets, &pairing, &cfg.fda)?;
    create_dir(&cfg.out)?;
    let mut written = Vec::new();
    for (name, img) in source_names.iter().zip(&adapted) {
        write_image(&cfg.out.join(name), img)?;
        written.push(name.clone());
        if cfg.float_sidecar {
            let raw = format!("{name}.f32");
            write_f32le(&cfg.out.join(&raw), img)?;
            written.extend([raw.clone(), format!("{raw}.json")]);
        }
    }
    let mut manifest = DatasetManifest {
        pairings: vec![NamedPairing {
            name: "adapt".into(),
            plan,
            resolutions: vec![resolution],
        }],
        fda: Some(cfg.fda),
        seed: Some(cfg.seed),
        ..Default::default()
    };
    manifest.add_files(&cfg.out, &written)?;
    dataset::write_manifest(&cfg.out.join("manifest.json"), &manifest)?;
    write_json(&cfg.out.join("config.json"), &cfg)?;
    println!("adapted {} images into {}", adapted.len(), cfg.out.display());
    Ok(())
}

pub fn cmd_split(cfg: SplitConfig) -> anyhow::Result<()> {
    let ids: Vec<String> = list_images(&cfg.corpus)?.iter().map(|p| file_name(p)).collect();
    let split = dataset::split(&ids, &cfg.spec)?;
    create_dir(&cfg.out)?;
    let mut manifest = DatasetManifest {
        root: relative_dir(&cfg.out, &cfg.corpus)?,
        split_spec: Some(cfg.spec),
        split: Some(split.clone()),
        seed: Some(cfg.spec.seed),
        ..Default::default()
    };
    manifest.add_files(&cfg.corpus, &ids)?;
    write_json(&cfg.out.join("split.json"), &split)?;
    dataset::write_manifest(&cfg.out.join("manifest.json"), &manifest)?;
    write_json(&cfg.out.join("config.json"), &cfg)?;
    println!(
        "train {} / val {} / test {} / unassigned {}",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        split.unassigned.len()
    );
    Ok(())
}

pub fn cmd_evaluate(cfg: EvaluateConfig) -> anyhow::Result<()> {
    let report = evaluate_batch(&cfg.pred, &cfg.gt, cfg.epsilon)?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    if cfg.table {
        let path = cfg.out.join("report.txt");
        fs::write(&path, report.to_table()).map_err(|e| Error::io(&path, e))?;
    }
    write_json(&cfg.out.join("config.json"), &cfg)?;
    println!("mean dsc {:.6} over {} pairs", report.mean, report.dsc.len());
    Ok(())
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

pub fn cmd_mask(cfg: MaskConfig) -> anyhow::Result<()> {
    let mask = fda::build_mask(cfg.width, cfg.height, cfg.alpha)?;
    create_parent(&cfg.out)?;
    write_image(&cfg.out, &mask.to_image())?;
    write_json(&sidecar_config(&cfg.out), &cfg)?;
    println!("{} of {} bins set", mask.count(), cfg.width * cfg.height);
    Ok(())
}

pub fn cmd_spectrum(cfg: SpectrumConfig) -> anyhow::Result<()> {
    let img = read_image(&cfg.input)?;
    create_parent(&cfg.out)?;
    write_image(&cfg.out, &log_magnitude_image(&img))?;
    write_json(&sidecar_config(&cfg.out), &cfg)?;
    Ok(())
}

/// Error category for JSON error output.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or("other", Error::kind)
}

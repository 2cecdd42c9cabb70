//! Command-line driver: scene synthesis, prior synthesis, estimation,
//! evaluation and parameter sweeps over scene bundle directories.
//!
//! A bundle directory holds `scene.json`, `intrinsics.json`, `depth.pgm`,
//! `gt_boxes.json` and `meshes/<class>.obj`; `prior` adds `prior.json`,
//! `estimate` adds `estimate.json`, and `eval` writes `metrics.json` and
//! `curve.csv`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use posefilter::filter::{run_scene, ClassOutcome, FilterConfig};
use posefilter::metrics::{accuracy_curve, AccuracyCurve, PoseError, DEFAULT_T_MAX};
use posefilter::priors::{load_prior, synth_prior, CorruptionSpec, DetectionPrior, CORRUPTION_PRESETS};
use posefilter::synth::{
    catalog, default_intrinsics, generate_scene, Bundle, SceneGenConfig, Setting, PRIOR_FILE,
};
use posefilter::{LikelihoodWeights, TriangleMesh};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const ESTIMATE_FILE: &str = "estimate.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const CURVE_FILE: &str = "curve.csv";

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Input = 2,
    Runtime = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        CliError { kind: ExitKind::Input, error: error.into() }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        CliError { kind: ExitKind::Runtime, error: error.into() }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Causes already quoted by their parent message are skipped.
        let mut last = String::new();
        for (i, cause) in self.error.chain().enumerate() {
            let text = cause.to_string();
            if i == 0 {
                write!(f, "{text}")?;
            } else if !last.contains(&text) {
                write!(f, ": {text}")?;
            }
            last = text;
        }
        Ok(())
    }
}

pub type CliResult<T> = Result<T, CliError>;

trait OrInput<T> {
    fn or_input(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrInput<T> for Result<T, E> {
    fn or_input(self) -> CliResult<T> {
        self.map_err(CliError::input)
    }
}

#[derive(Debug, Parser)]
#[command(name = "posefilter", version, about = "Depth-based 6-DoF pose estimation by iterated likelihood weighting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene bundle.
    Synth(SynthArgs),
    /// Write a (corrupted) detection prior for a bundle.
    Prior(PriorArgs),
    /// Estimate object poses in a bundle.
    Estimate(EstimateArgs),
    /// Score an estimate against the bundle's ground truth.
    Eval(EvalArgs),
    /// Run a grid of settings, corruption presets and seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Number of objects.
    #[arg(long, default_value_t = 3)]
    pub objects: usize,
    #[arg(long, default_value = "base")]
    pub setting: Setting,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 96)]
    pub size: usize,
    /// Leave out the supporting table.
    #[arg(long)]
    pub no_table: bool,
    /// Comma-separated catalog classes to draw from.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Scene bundle directory.
    #[arg(long)]
    pub scene: PathBuf,
    /// Corruption preset: clean, jitter, falsepos, dropout or dark.
    #[arg(long, default_value = "clean")]
    pub preset: String,
    /// Corruption spec file (JSON) used instead of the preset.
    #[arg(long, conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Override the drop probability of true boxes.
    #[arg(long)]
    pub drop: Option<f64>,
    /// Override the center jitter std in pixels.
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Override the number of spurious boxes per class.
    #[arg(long)]
    pub false_positives: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; `<scene>/prior.json` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EstimateArgs {
    /// Scene bundle directory.
    #[arg(long, required_unless_present = "replay")]
    pub scene: Option<PathBuf>,
    /// Prior file; `<scene>/prior.json` by default.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Classes to estimate; the scene's objects by default. Classes without
    /// a mesh in the bundle use the catalog primitive of that name.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Filter configuration file (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Samples per iteration [default: 625].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Iteration limit [default: 400].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Inlier distance in meters [default: 0.005].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Convergence threshold on the best weight [default: 0.9].
    #[arg(long)]
    pub wbar: Option<f64>,
    /// Likelihood coefficients alpha_box,alpha_b,alpha_r,alpha_e,alpha_p
    /// [default: 0.1,0.1,0.3,0.25,0.25].
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plain iterated likelihood weighting (no coarse search weight, single
    /// diffusion scale, joint moves).
    #[arg(long)]
    pub literal: bool,
    /// Scoring threads; does not affect the result.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Re-run from the manifest of an earlier estimate file.
    #[arg(long, conflicts_with_all = ["scene", "prior", "classes", "config", "samples", "iters", "epsilon", "wbar", "alphas", "seed", "literal"])]
    pub replay: Option<PathBuf>,
    /// Output file; `<scene>/estimate.json` by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Scene bundle directory.
    #[arg(long)]
    pub scene: PathBuf,
    /// Estimate file; `<scene>/estimate.json` by default.
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    /// Output directory; the scene directory by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest threshold of the accuracy curve in meters.
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    pub t_max: f64,
    /// Number of thresholds on the curve.
    #[arg(long, default_value_t = 401)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Comma-separated settings.
    #[arg(long, value_delimiter = ',', default_value = "base")]
    pub settings: Vec<Setting>,
    /// Comma-separated corruption presets or corruption spec files (*.json).
    #[arg(long, value_delimiter = ',', default_value = "clean")]
    pub presets: Vec<String>,
    /// Number of seeds per cell, starting at `--first-seed`.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[arg(long, default_value_t = 1)]
    pub objects: usize,
    #[arg(long, default_value_t = 96)]
    pub size: usize,
    #[arg(long)]
    pub no_table: bool,
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Filter configuration file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Aggregate CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-run bundles; `<out>.runs` by default.
    #[arg(long)]
    pub work: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; messages go to stdout and stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitKind::Usage as i32 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Prior(a) => cmd_prior(&a).map(|_| ()),
        Command::Estimate(a) => cmd_estimate(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Sweep(a) => cmd_sweep(&a).map(|_| ()),
    }
}

fn usage(message: impl fmt::Display) -> CliError {
    CliError { kind: ExitKind::Usage, error: anyhow!("{message}") }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(CliError::runtime)?;
    }
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::runtime)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).or_input()?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).or_input()
}

fn scene_config(objects: usize, setting: Setting, size: usize, no_table: bool, classes: &Option<Vec<String>>) -> CliResult<SceneGenConfig> {
    if objects == 0 {
        return Err(usage("--objects must be at least 1"));
    }
    let k = default_intrinsics(size, size).or_input()?;
    let mut config = SceneGenConfig::new(objects, setting, k);
    config.table = !no_table;
    config.classes = classes.clone();
    Ok(config)
}

/// Generates a scene from `seed`, corrupts its observation with the same
/// stream and writes the bundle.
pub fn cmd_synth(args: &SynthArgs) -> CliResult<Bundle> {
    let config = scene_config(args.objects, args.setting, args.size, args.no_table, &args.classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let scene = generate_scene(&config, &mut rng).or_input()?;
    let observation = scene.observe(&mut rng).map_err(CliError::runtime)?;
    Bundle::write(&args.out, &scene, args.seed, &observation).map_err(CliError::runtime)
}

fn corruption(args: &PriorArgs) -> CliResult<CorruptionSpec> {
    let mut spec = match &args.spec {
        Some(path) => read_json(path)?,
        None => CorruptionSpec::preset(&args.preset)
            .map_err(|_| usage(format!("unknown preset '{}' (expected one of {})", args.preset, CORRUPTION_PRESETS.join(", "))))?,
    };
    if let Some(p) = args.drop {
        spec.drop_prob = p;
    }
    if let Some(j) = args.jitter {
        spec.center_jitter_px = j;
    }
    if let Some(n) = args.false_positives {
        spec.false_positives = n;
    }
    spec.validate().or_input()?;
    Ok(spec)
}

/// Corrupts the bundle's ground-truth boxes and writes the prior.
pub fn cmd_prior(args: &PriorArgs) -> CliResult<DetectionPrior> {
    let spec = corruption(args)?;
    let bundle = Bundle::load(&args.scene).or_input()?;
    let gt = bundle.gt_boxes().or_input()?;
    let k = bundle.scene.intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let prior = synth_prior(&gt, k.width, k.height, &spec, &mut rng).map_err(CliError::runtime)?;
    let out = args.out.clone().unwrap_or_else(|| args.scene.join(PRIOR_FILE));
    prior.write(&out).map_err(CliError::runtime)?;
    Ok(prior)
}

/// Everything needed to reproduce an estimate. The worker count is left out
/// because it does not affect the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub scene: PathBuf,
    pub prior: PathBuf,
    pub classes: Vec<String>,
    pub config: FilterConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub manifest: RunManifest,
    pub estimates: Vec<ClassOutcome>,
}

fn filter_config(base: Option<&Path>, literal: bool) -> CliResult<FilterConfig> {
    match base {
        Some(path) => read_json(path),
        None if literal => Ok(FilterConfig::literal()),
        None => Ok(FilterConfig::default()),
    }
}

fn manifest_from_args(args: &EstimateArgs) -> CliResult<RunManifest> {
    let scene = args.scene.clone().ok_or_else(|| usage("--scene is required"))?;
    let prior = args.prior.clone().unwrap_or_else(|| scene.join(PRIOR_FILE));
    let mut config = filter_config(args.config.as_deref(), args.literal)?;
    if let Some(n) = args.samples {
        config.num_samples = n;
    }
    if let Some(n) = args.iters {
        config.max_iterations = n;
    }
    if let Some(e) = args.epsilon {
        config.likelihood.epsilon = e;
    }
    if let Some(w) = args.wbar {
        config.convergence_threshold = w;
    }
    if let Some(a) = &args.alphas {
        if a.len() != 5 {
            return Err(usage(format!("--alphas takes 5 comma-separated values, got {}", a.len())));
        }
        config.likelihood.weights = LikelihoodWeights::new(a[0], a[1], a[2], a[3], a[4]).or_input()?;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate().or_input()?;
    let classes = match &args.classes {
        Some(c) => c.clone(),
        None => Bundle::load(&scene).or_input()?.scene.classes(),
    };
    Ok(RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scene,
        prior,
        classes,
        config,
    })
}

/// Mesh for `class`: the bundle's own, else the catalog primitive.
fn class_mesh(bundle: &Bundle, class: &str) -> CliResult<TriangleMesh> {
    if bundle.scene.object(class).is_some() {
        return bundle.mesh(class).or_input();
    }
    let (_, shape) = catalog()
        .into_iter()
        .find(|(name, _)| *name == class)
        .ok_or_else(|| CliError::input(anyhow!("no mesh for class '{class}' in the bundle or the catalog")))?;
    shape.mesh().map_err(CliError::runtime)
}

/// Runs the filter for every class of the manifest.
pub fn estimate_from_manifest(manifest: &RunManifest, workers: Option<usize>) -> CliResult<EstimateFile> {
    manifest.config.validate().or_input()?;
    let bundle = Bundle::load(&manifest.scene).or_input()?;
    let observation = bundle.observation().or_input()?;
    let (prior, warnings) = load_prior(&manifest.prior).or_input()?;
    for w in &warnings {
        eprintln!("warning: prior {}: {}", w.context, w.message);
    }
    let mut meshes = BTreeMap::new();
    for class in &manifest.classes {
        meshes.insert(class.clone(), class_mesh(&bundle, class)?);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(CliError::runtime)?;
    let estimates = pool
        .install(|| run_scene(&manifest.classes, &meshes, &prior, &observation, &manifest.config))
        .or_input()?;
    Ok(EstimateFile { manifest: manifest.clone(), estimates })
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<EstimateFile> {
    if args.workers == Some(0) {
        return Err(usage("--workers must be at least 1"));
    }
    let manifest = match &args.replay {
        Some(path) => read_json::<EstimateFile>(path)?.manifest,
        None => manifest_from_args(args)?,
    };
    let result = estimate_from_manifest(&manifest, args.workers)?;
    let out = args.out.clone().unwrap_or_else(|| manifest.scene.join(ESTIMATE_FILE));
    write_json(&out, &result)?;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectMetrics {
    pub class: String,
    pub symmetric: bool,
    /// `None` when the estimate for this class failed.
    pub add: Option<f64>,
    pub add_s: Option<f64>,
    /// ADD-S for symmetric objects, ADD otherwise.
    pub error: Option<f64>,
    pub best_weight: Option<f64>,
    pub converged: bool,
    pub present: bool,
    pub iterations_run: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub class: String,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub objects: Vec<ObjectMetrics>,
    /// Estimated classes that are not in the scene, with their best weights.
    pub absent: BTreeMap<String, Option<f64>>,
    pub curve: AccuracyCurve,
    /// Per-class AUC followed by an "all" row.
    pub auc_table: Vec<AucRow>,
}

/// Errors of failed estimates enter the curves as misses.
fn curve_errors(objects: &[&ObjectMetrics]) -> Vec<f64> {
    objects.iter().map(|o| o.error.unwrap_or(f64::MAX)).collect()
}

/// Compares an estimate file with the bundle's ground truth.
pub fn evaluate(bundle: &Bundle, estimate: &EstimateFile, t_max: f64, steps: usize) -> CliResult<MetricsReport> {
    let by_class: BTreeMap<&str, &ClassOutcome> = estimate.estimates.iter().map(|o| (o.object_class(), o)).collect();
    let mut objects = Vec::new();
    for gt in &bundle.scene.objects {
        let outcome = by_class
            .get(gt.class.as_str())
            .ok_or_else(|| CliError::input(anyhow!("estimate has no entry for class '{}'", gt.class)))?;
        let mesh = bundle.mesh(&gt.class).or_input()?;
        objects.push(match outcome.report() {
            Some(r) => {
                let e = PoseError::compute(&mesh, &gt.pose, &r.best_pose);
                ObjectMetrics {
                    class: gt.class.clone(),
                    symmetric: gt.symmetric,
                    add: Some(e.add),
                    add_s: Some(e.add_s),
                    error: Some(e.for_symmetry(gt.symmetric)),
                    best_weight: Some(r.best_weight),
                    converged: r.converged,
                    present: r.present,
                    iterations_run: r.iterations_run,
                }
            }
            None => ObjectMetrics {
                class: gt.class.clone(),
                symmetric: gt.symmetric,
                add: None,
                add_s: None,
                error: None,
                best_weight: None,
                converged: false,
                present: false,
                iterations_run: 0,
            },
        });
    }
    let absent = estimate
        .estimates
        .iter()
        .filter(|o| bundle.scene.object(o.object_class()).is_none())
        .map(|o| (o.object_class().to_string(), o.report().map(|r| r.best_weight)))
        .collect();
    let all: Vec<&ObjectMetrics> = objects.iter().collect();
    let curve = if all.is_empty() {
        accuracy_curve(&[f64::MAX], t_max, steps)
    } else {
        accuracy_curve(&curve_errors(&all), t_max, steps)
    }
    .or_input()?;
    let mut auc_table = Vec::new();
    for o in &objects {
        let c = accuracy_curve(&curve_errors(&[o]), t_max, steps).or_input()?;
        auc_table.push(AucRow { class: o.class.clone(), auc: c.auc });
    }
    auc_table.push(AucRow { class: "all".into(), auc: curve.auc });
    Ok(MetricsReport { objects, absent, curve, auc_table })
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<MetricsReport> {
    let bundle = Bundle::load(&args.scene).or_input()?;
    let path = args.estimate.clone().unwrap_or_else(|| args.scene.join(ESTIMATE_FILE));
    let estimate: EstimateFile = read_json(&path)?;
    let report = evaluate(&bundle, &estimate, args.t_max, args.steps)?;
    let out = args.out.clone().unwrap_or_else(|| args.scene.clone());
    write_json(&out.join(METRICS_FILE), &report)?;
    fs::write(out.join(CURVE_FILE), report.curve.to_csv())
        .with_context(|| format!("writing {}", out.join(CURVE_FILE).display()))
        .map_err(CliError::runtime)?;
    Ok(report)
}

/// One aggregated grid cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub preset: String,
    pub runs: usize,
    pub failed_runs: usize,
    pub convergence_rate: f64,
    pub median_error: Option<f64>,
    pub auc: Option<f64>,
    pub status: String,
}

pub const SWEEP_HEADER: &str = "setting,preset,runs,failed_runs,convergence_rate,median_error,auc,status";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.setting,
            self.preset,
            self.runs,
            self.failed_runs,
            self.convergence_rate,
            opt(self.median_error),
            opt(self.auc),
            self.status
        )
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

fn preset_args(preset: &str, scene: &Path, seed: u64) -> PriorArgs {
    let is_file = preset.ends_with(".json");
    PriorArgs {
        scene: scene.to_path_buf(),
        preset: if is_file { "clean".into() } else { preset.to_string() },
        spec: is_file.then(|| PathBuf::from(preset)),
        drop: None,
        jitter: None,
        false_positives: None,
        seed,
        out: None,
    }
}

/// Runs synth, prior, estimate and eval for every (setting, preset, seed)
/// and writes one aggregated row per (setting, preset).
pub fn cmd_sweep(args: &SweepArgs) -> CliResult<Vec<SweepRow>> {
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let work = args.work.clone().unwrap_or_else(|| {
        let mut w = args.out.clone().into_os_string();
        w.push(".runs");
        PathBuf::from(w)
    });
    let mut rows = Vec::new();
    for &setting in &args.settings {
        for preset in &args.presets {
            let cell = work.join(format!("{}_{}", setting.name(), sanitize(preset)));
            let mut errors = Vec::new();
            let (mut runs, mut failed, mut converged) = (0, 0, 0);
            for seed in args.first_seed..args.first_seed + args.seeds {
                let dir = cell.join(format!("seed_{seed}"));
                let outcome = sweep_run(args, setting, preset, seed, &dir);
                match outcome {
                    Ok(report) => {
                        for o in &report.objects {
                            runs += 1;
                            match o.error {
                                Some(e) => errors.push(e),
                                None => failed += 1,
                            }
                            converged += o.converged as usize;
                        }
                    }
                    Err(e) => {
                        eprintln!("warning: sweep run {}/{preset}/seed {seed} failed: {e}", setting.name());
                        runs += args.objects;
                        failed += args.objects;
                    }
                }
            }
            let all_failed = failed == runs;
            let mut misses: Vec<f64> = errors.clone();
            misses.extend(std::iter::repeat_n(f64::MAX, failed));
            let auc = if all_failed {
                None
            } else {
                Some(accuracy_curve(&misses, DEFAULT_T_MAX, 401).or_input()?.auc)
            };
            rows.push(SweepRow {
                setting: setting.name().to_string(),
                preset: preset.clone(),
                runs,
                failed_runs: failed,
                convergence_rate: if runs == 0 { 0.0 } else { converged as f64 / runs as f64 },
                median_error: median(&mut errors),
                auc,
                status: if all_failed { "failed" } else { "ok" }.to_string(),
            });
        }
    }
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::runtime)?;
    }
    fs::write(&args.out, csv)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(CliError::runtime)?;
    Ok(rows)
}

fn sanitize(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.to_string())
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn sweep_run(args: &SweepArgs, setting: Setting, preset: &str, seed: u64, dir: &Path) -> CliResult<MetricsReport> {
    cmd_synth(&SynthArgs {
        objects: args.objects,
        setting,
        seed,
        out: dir.to_path_buf(),
        size: args.size,
        no_table: args.no_table,
        classes: args.classes.clone(),
    })?;
    cmd_prior(&preset_args(preset, dir, seed))?;
    cmd_estimate(&EstimateArgs {
        scene: Some(dir.to_path_buf()),
        config: args.config.clone(),
        samples: args.samples,
        iters: args.iters,
        seed: Some(seed),
        workers: args.workers,
        ..Default::default()
    })?;
    cmd_eval(&EvalArgs {
        scene: dir.to_path_buf(),
        estimate: None,
        out: None,
        t_max: DEFAULT_T_MAX,
        steps: 401,
    })
}

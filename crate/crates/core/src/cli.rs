//! Command-line front end: `generate`, `train`, `eval`, `explain` and
//! `render`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::cluster::{sort_detections, Algorithm, ClusterParams, Point};
use crate::dataio::{read_checkpoint, read_scan, write_checkpoint, write_dataset, Arch, DEFAULT_POINTS};
use crate::error::{Error, Result};
use crate::evalx::{render_table, DEFAULT_D_MATCH};
use crate::explain::{auto_destination, explain, Perturbation, PerturbationSpec, VerdictThresholds, DEFAULT_RADIUS};
use crate::geometry::ScanGeometry;
use crate::pipeline::{detect, evaluate, load_dataset, training_samples, PipelineConfig, Predictor};
use crate::render::{segmentation_panel, velocity_panel};
use crate::rng::derive_seed;
use crate::segnet::{loss_log_header, render_loss_log, train, InputMode, ModelConfig, SegModel, TrainConfig};
use crate::synthgen::{random_scene, synth_scan, SceneConfig, VortexClass};

/// Environment variable capping the worker thread count (0 = automatic).
pub const THREADS_ENV: &str = "VORTEXSEG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "vortexseg", version, about = "Wake-vortex detection in LiDAR range-height scans")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a dataset of scans.
    Generate(GenerateArgs),
    /// Train a segmentation model on a dataset.
    Train(TrainArgs),
    /// Run the detection pipeline on a dataset and report metrics.
    Eval(EvalArgs),
    /// Perturb a vortex core and compare predictions before and after.
    Explain(ExplainArgs),
    /// Render a scan (and optionally its segmentation) as PPM images.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub min_vortices: usize,
    #[arg(long, default_value_t = 3)]
    pub max_vortices: usize,
    #[arg(long, default_value_t = 120)]
    pub beams: usize,
    #[arg(long, default_value_t = 120)]
    pub gates: usize,
    /// Degrees.
    #[arg(long, default_value_t = 0.0)]
    pub elevation_min: f64,
    /// Degrees.
    #[arg(long, default_value_t = 30.0)]
    pub elevation_max: f64,
    /// Metres.
    #[arg(long, default_value_t = 100.0)]
    pub range_min: f64,
    /// Metres.
    #[arg(long, default_value_t = 700.0)]
    pub range_max: f64,
}

/// Options shared by every command that prepares point clouds.
#[derive(Debug, Args, Clone)]
pub struct CloudArgs {
    /// Points sampled per scan.
    #[arg(long, default_value_t = DEFAULT_POINTS)]
    pub points: usize,
    /// Feed raw velocities instead of per-cloud min-max normalised ones.
    /// Must match the setting used for training.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "dgcnn")]
    pub model: Arch,
    /// Defaults to 50 for dgcnn and 100 for pointnet.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to 4 for dgcnn and 16 for pointnet.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = crate::segnet::DEFAULT_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = crate::segnet::DEFAULT_K)]
    pub k: usize,
    /// Build the neighbour graph once from (y, z) instead of per layer.
    #[arg(long)]
    pub static_graph: bool,
    /// Use (elevation, range, velocity) inputs instead of (y, z, velocity).
    #[arg(long)]
    pub polar: bool,
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Loss log path; defaults to the checkpoint path with `.loss.tsv` appended.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Print each epoch's loss to standard error.
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
#[group(id = "predictor", required = true, multiple = false, args = ["ckpt", "oracle"])]
pub struct PredictorArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Copy labels from ground truth instead of running a model.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long, default_value = "agglo")]
    pub cluster: Algorithm,
    /// Ward merge threshold, metres.
    #[arg(long)]
    pub linkage_threshold: Option<f64>,
    /// Neighbourhood radius for DBSCAN and OPTICS extraction, metres.
    #[arg(long)]
    pub eps: Option<f64>,
    /// OPTICS maximum reachability radius, metres.
    #[arg(long)]
    pub eps_max: Option<f64>,
    #[arg(long)]
    pub min_pts: Option<usize>,
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    /// Maximum detection-to-truth distance for a match, metres.
    #[arg(long, default_value_t = DEFAULT_D_MATCH)]
    pub d_match: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    /// Directory for summary.txt, records.tsv and scans.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Mask,
    Move,
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ClassArg {
    Port,
    Starboard,
}

impl From<ClassArg> for VortexClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Port => VortexClass::Port,
            ClassArg::Starboard => VortexClass::Starboard,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub scan: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Core centre as `Y,Z` in metres.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true, conflicts_with = "auto")]
    pub center: Option<Point>,
    /// Use the strongest detection of the unperturbed scan as the centre
    /// (and, for move without --dest, pick a clear destination).
    #[arg(long)]
    pub auto: bool,
    /// Move destination or second swap centre as `Y,Z`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub dest: Option<Point>,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: f64,
    /// Class judged by the verdicts; defaults to the majority predicted
    /// vortex class inside the core before perturbation.
    #[arg(long, value_enum)]
    pub target: Option<ClassArg>,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
    /// Directory for report.txt and the before/after panels.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "seg_predictor", multiple = false, args = ["ckpt", "oracle"])]
pub struct RenderArgs {
    #[arg(long)]
    pub scan: PathBuf,
    /// Velocity panel path.
    #[arg(long)]
    pub out: PathBuf,
    /// Segmentation panel path; requires --ckpt or --oracle.
    #[arg(long, requires = "seg_predictor")]
    pub seg_out: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub oracle: bool,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub cloud: CloudArgs,
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let (y, z) = s.split_once(',').ok_or_else(|| format!("expected Y,Z but got {s:?}"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("{v:?} is not a finite number"))
    };
    Ok((num(y)?, num(z)?))
}

/// Parses arguments and runs the command. Help and version requests print
/// to standard output and succeed.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Usage(e.render().to_string())),
    };
    init_threads()?;
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Render(a) => cmd_render(&a),
    }
}

fn init_threads() -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Usage(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    // Fails only if the pool already exists, e.g. on a second in-process run.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let config = SceneConfig {
        count_range: (a.min_vortices, a.max_vortices),
        noise_sigma: a.noise_sigma,
        geometry: ScanGeometry {
            n_beams: a.beams,
            n_gates: a.gates,
            elevation_min: a.elevation_min,
            elevation_max: a.elevation_max,
            range_min: a.range_min,
            range_max: a.range_max,
        },
        ..SceneConfig::default()
    };
    config.validate()?;
    let scans = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let scene = random_scene(derive_seed(a.seed, i as u64), &config)?;
            synth_scan(&config.geometry, &scene)
        })
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&a.out, &scans)?;
    eprintln!("wrote {} scans to {}", scans.len(), a.out.display());
    Ok(())
}

fn pipeline_config(cloud: &CloudArgs, cluster: &ClusterArgs) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::for_points(cloud.points);
    config.normalize = !cloud.no_normalize;
    config.d_match = cluster.d_match;
    let p: &mut ClusterParams = &mut config.cluster;
    p.algorithm = cluster.cluster;
    if let Some(v) = cluster.linkage_threshold {
        p.linkage_threshold = v;
    }
    if let Some(v) = cluster.eps {
        p.dbscan_eps = v;
        p.optics_eps = v;
    }
    if let Some(v) = cluster.eps_max {
        p.optics_eps_max = v;
    }
    if let Some(v) = cluster.min_pts {
        p.dbscan_min_pts = v;
        p.optics_min_pts = v;
    }
    if let Some(v) = cluster.min_cluster_size {
        p.min_cluster_size = v;
    }
    p.validate()?;
    if cloud.points == 0 {
        return Err(Error::Usage("--points must be at least 1".into()));
    }
    if !(config.d_match > 0.0) {
        return Err(Error::Usage("--d-match must be positive".into()));
    }
    Ok(config)
}

fn load_predictor(ckpt: Option<&Path>, oracle: bool) -> Result<Predictor> {
    match (ckpt, oracle) {
        (Some(path), false) => {
            let model = SegModel::from_checkpoint(&read_checkpoint(path)?)?;
            Ok(Predictor::Model(Box::new(model)))
        }
        (None, true) => Ok(Predictor::Oracle),
        _ => Err(Error::Usage("exactly one of --ckpt and --oracle is required".into())),
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut model = ModelConfig::for_arch(a.model);
    model.k = a.k;
    model.dynamic_graph = !a.static_graph;
    model.input_mode = if a.polar { InputMode::Polar } else { InputMode::Cartesian };
    let mut config = TrainConfig::for_arch(a.model);
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(b) = a.batch {
        config.batch_size = b;
    }
    config.lr = a.lr;
    config.points = a.cloud.points;
    config.seed = a.seed;
    config.progress = a.progress;

    let scans: Vec<_> = load_dataset(&a.data)?.into_iter().map(|(_, s)| s).collect();
    let mut pipeline = PipelineConfig::for_points(config.points);
    pipeline.normalize = !a.cloud.no_normalize;
    let samples = training_samples(&scans, &pipeline, model.input_mode)?;
    let outcome = train(model.clone(), &config, &samples)?;

    write_checkpoint(&outcome.model.to_checkpoint(), &a.out)?;
    let log = a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".loss.tsv");
        PathBuf::from(p)
    });
    let mut header = loss_log_header(&model, &config);
    header.push(("normalize".into(), pipeline.normalize.to_string()));
    write_text(&log, &render_loss_log(&header, &outcome.epoch_losses))?;
    if let Some(last) = outcome.epoch_losses.last() {
        eprintln!("final loss {last:.6}");
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let config = pipeline_config(&a.cloud, &a.cluster)?;
    let predictor = load_predictor(a.predictor.ckpt.as_deref(), a.predictor.oracle)?;
    let scans = load_dataset(&a.data)?;
    let report = evaluate(&scans, &predictor, &config)?;
    let label = format!("{} + {}", predictor.name(), config.cluster.algorithm);
    let table = render_table(&[(label, &report)]);
    print!("{table}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_text(&dir.join("summary.txt"), &table)?;
        write_text(&dir.join("records.tsv"), &report.records())?;
        write_text(&dir.join("scans.tsv"), &report.scan_summary())?;
    }
    Ok(())
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let config = pipeline_config(&a.cloud, &a.cluster)?;
    let predictor = load_predictor(a.predictor.ckpt.as_deref(), a.predictor.oracle)?;
    let scan = read_scan(&a.scan)?;
    if !(a.radius > 0.0 && a.radius.is_finite()) {
        return Err(Error::Usage("--radius must be positive".into()));
    }
    let center = match (a.center, a.auto) {
        (Some(c), false) => c,
        (None, true) => {
            let mut dets = detect(&scan, &predictor, &config)?.detections;
            sort_detections(&mut dets);
            dets.first()
                .map(|d| d.center)
                .ok_or_else(|| Error::invalid("--auto found no detection in the scan"))?
        }
        _ => return Err(Error::Usage("one of --center and --auto is required".into())),
    };
    let method = match (a.method, a.dest) {
        (Method::Mask, _) => Perturbation::Mask,
        (Method::Move, Some(destination)) => Perturbation::Move { destination },
        (Method::Move, None) if a.auto => {
            let destination = auto_destination(&scan, center, a.radius, 2.0 * config.d_match)
                .ok_or_else(|| Error::invalid("no clear destination for the moved core"))?;
            Perturbation::Move { destination }
        }
        (Method::Move, None) => return Err(Error::Usage("--method move requires --dest (or --auto)".into())),
        (Method::Swap, Some(second)) => Perturbation::Swap { second },
        (Method::Swap, None) => return Err(Error::Usage("--method swap requires --dest, the second centre".into())),
    };
    let spec = PerturbationSpec {
        method,
        center,
        radius: a.radius,
        target_class: a.target.map(VortexClass::from),
    };
    let perturbed = spec.apply(&scan)?;
    let report = explain(&scan, &predictor, &spec, &config, &VerdictThresholds::default())?;
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_text(&dir.join("report.txt"), &text)?;
        for (name, s) in [("before", &scan), ("after", &perturbed)] {
            velocity_panel(s).write_ppm(dir.join(format!("{name}.ppm")))?;
            let r = detect(s, &predictor, &config)?;
            segmentation_panel(s.geometry(), &r.cloud, &r.predicted, &r.detections)?
                .write_ppm(dir.join(format!("{name}_seg.ppm")))?;
        }
    }
    Ok(())
}

pub fn cmd_render(a: &RenderArgs) -> Result<()> {
    let scan = read_scan(&a.scan)?;
    velocity_panel(&scan).write_ppm(&a.out)?;
    if let Some(path) = &a.seg_out {
        let config = pipeline_config(&a.cloud, &a.cluster)?;
        let predictor = load_predictor(a.ckpt.as_deref(), a.oracle)?;
        let r = detect(&scan, &predictor, &config)?;
        segmentation_panel(scan.geometry(), &r.cloud, &r.predicted, &r.detections)?.write_ppm(path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("300,80").unwrap(), (300.0, 80.0));
        assert_eq!(parse_point(" -5.5 , 2").unwrap(), (-5.5, 2.0));
        assert!(parse_point("300").is_err());
        assert!(parse_point("a,1").is_err());
        assert!(parse_point("nan,1").is_err());
    }

    #[test]
    fn usage_errors() {
        for args in [
            vec!["vortexseg"],
            vec!["vortexseg", "eval", "--data", "x"],
            vec!["vortexseg", "eval", "--data", "x", "--oracle", "--ckpt", "c"],
            vec!["vortexseg", "train", "--data", "x", "--out", "y", "--model", "resnet"],
            vec!["vortexseg", "explain", "--scan", "s", "--oracle", "--method", "warp", "--auto"],
        ] {
            assert!(matches!(run(args.clone()), Err(Error::Usage(_))), "{args:?}");
        }
        assert!(run(["vortexseg", "--help"]).is_ok());
    }
}

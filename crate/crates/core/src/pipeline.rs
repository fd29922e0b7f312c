//! Scan → point cloud → per-point classes → detections, plus dataset-level
//! training and evaluation built on it.

use rayon::prelude::*;

use crate::cluster::{refine, ClusterParams, Detection};
use crate::dataio::{
    label_points, normalize_velocity, sample_points, Dataset, Label, LidarScan, PointCloud,
    DEFAULT_LABEL_RADIUS, DEFAULT_POINTS,
};
use crate::error::{Error, Result};
use crate::evalx::{EvalReport, ScanEval, DEFAULT_D_MATCH};
use crate::rng::{derive_seed, streams};
use crate::segnet::{train, InputMode, ModelConfig, ModelInput, SegModel, TrainConfig, TrainOutcome, TrainSample};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Points sampled from each scan.
    pub points: usize,
    /// Truth labelling radius, metres.
    pub label_radius: f64,
    /// Min-max normalise velocities per cloud; otherwise raw m/s are fed.
    pub normalize: bool,
    pub cluster: ClusterParams,
    /// Maximum detection-to-truth distance for a match, metres.
    pub d_match: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_points(DEFAULT_POINTS)
    }
}

impl PipelineConfig {
    /// Defaults with clustering parameters scaled to `points`.
    pub fn for_points(points: usize) -> Self {
        Self {
            points,
            label_radius: DEFAULT_LABEL_RADIUS,
            normalize: true,
            cluster: ClusterParams::for_point_count(points),
            d_match: DEFAULT_D_MATCH,
        }
    }
}

/// Samples a scan with its own sampling stream, labels the points from the
/// stored truth and normalises velocities. The same scan seed always yields
/// the same cells, so perturbed copies of a scan are sampled identically.
pub fn prepare_cloud(scan: &LidarScan, config: &PipelineConfig) -> Result<PointCloud> {
    let seed = derive_seed(scan.seed(), streams::SAMPLE);
    let cloud = sample_points(scan, config.points, seed)?;
    let cloud = label_points(cloud, scan.truth(), config.label_radius);
    if config.normalize {
        normalize_velocity(cloud)
    } else {
        let mut cloud = cloud;
        for p in &mut cloud.points {
            p.vr_norm = p.vr as f64;
        }
        Ok(cloud)
    }
}

/// Source of per-point class labels.
#[derive(Debug, Clone)]
pub enum Predictor {
    Model(Box<SegModel<f32>>),
    /// Labels copied from ground truth; isolates clustering and evaluation.
    Oracle,
}

impl Predictor {
    pub fn label(&self, cloud: &PointCloud) -> Result<Vec<Label>> {
        match self {
            Predictor::Oracle => Ok(cloud.labels()),
            Predictor::Model(model) => {
                let input = ModelInput::from_cloud(cloud, model.config.input_mode)?;
                model
                    .predict_ids(&input)?
                    .into_iter()
                    .map(|id| Label::from_id(id).ok_or_else(|| Error::invalid(format!("class id {id}"))))
                    .collect()
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Oracle => "oracle",
            Predictor::Model(m) => m.config.arch.name(),
        }
    }
}

/// Everything the pipeline produced for one scan.
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub cloud: PointCloud,
    pub predicted: Vec<Label>,
    pub detections: Vec<Detection>,
}

pub fn detect(scan: &LidarScan, predictor: &Predictor, config: &PipelineConfig) -> Result<ScanResult> {
    let cloud = prepare_cloud(scan, config)?;
    let predicted = predictor.label(&cloud)?;
    let detections = refine(&cloud, &predicted, &config.cluster)?;
    Ok(ScanResult {
        cloud,
        predicted,
        detections,
    })
}

/// Runs the pipeline on every scan (in parallel) and aggregates the metrics
/// in scan order.
pub fn evaluate(scans: &[(String, LidarScan)], predictor: &Predictor, config: &PipelineConfig) -> Result<EvalReport> {
    let evals: Vec<Result<ScanEval>> = scans
        .par_iter()
        .map(|(id, scan)| {
            let r = detect(scan, predictor, config)?;
            Ok(ScanEval::new(id.clone(), scan.truth().to_vec(), r.detections, config.d_match))
        })
        .collect();
    EvalReport::from_scans(evals.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Loads a non-empty dataset as `(entry name, scan)` pairs.
pub fn load_dataset(root: impl AsRef<std::path::Path>) -> Result<Vec<(String, LidarScan)>> {
    let ds = Dataset::open_non_empty(root)?;
    let scans = ds.load_all()?;
    Ok(ds.entries().iter().cloned().zip(scans).collect())
}

/// Preprocessed training clouds with truth-derived labels.
pub fn training_samples(scans: &[LidarScan], config: &PipelineConfig, mode: InputMode) -> Result<Vec<TrainSample>> {
    scans
        .par_iter()
        .map(|scan| {
            let cloud = prepare_cloud(scan, config)?;
            Ok(TrainSample {
                input: ModelInput::from_cloud(&cloud, mode)?,
                labels: cloud.points.iter().map(|p| p.label.id()).collect(),
            })
        })
        .collect()
}

/// Trains on scans with the sampling density given by `train.points`.
pub fn train_on_scans(scans: &[LidarScan], model: ModelConfig, train_config: &TrainConfig) -> Result<TrainOutcome> {
    if scans.is_empty() {
        return Err(Error::invalid("no training scans"));
    }
    let pipeline = PipelineConfig::for_points(train_config.points);
    let samples = training_samples(scans, &pipeline, model.input_mode)?;
    train(model, train_config, &samples)
}

//! The end-to-end experiment: MC and LHC designs of 100 and 1000 points by default.
//!
//! A [`Campaign`] owns an output directory with a fixed layout:
//!
//! ```text
//! data/NAME.csv  data/NAME_train.csv  data/NAME_test.csv  data/NAME.json
//! models/NAME.json  models/NAME.train.json
//! metrics/NAME.json
//! boundary/NAME.csv  boundary/NAME.json  boundary/NAME_corner_cases.csv
//! compare/A_vs_B.json
//! slices/NAME.csv  slices/NAME.svg
//! report.json  report.md
//! ```
//!
//! Each stage reads only the files of earlier stages, so stages can be rerun
//! independently. Nothing time- or host-dependent is written, which keeps the
//! artifacts byte-identical across runs with the same master seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::boundary::{
    boundary_distance, boundary_scenarios, confidence_slice, extract_boundary,
    mean_predictive_entropy, svg, BoundaryError, BoundaryEstimate, DistanceSpace, GridSpec,
};
use crate::gpc::{
    laplace_fit, optimize_hyperparams, GpcError, GpcModel, HyperBounds, HyperOptOptions,
    KernelParams, Metrics, ModelLoadError, RestartRecord, TrainingSet,
};
use crate::io::{self, IoError};
use crate::sampling::{
    label, split_items, DesignSpec, LabeledSample, Method, ParameterBox, SamplingError,
    DEFAULT_MINIMAX_ITERS,
};
use crate::scenario::{Outcome, PhysicsConfig, ScenarioError};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("{0}")]
    Usage(String),
    #[error("missing {what}: {path} (run `{stage}` first)")]
    Missing {
        what: &'static str,
        path: PathBuf,
        stage: &'static str,
    },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Gpc(#[from] GpcError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    ModelLoad(#[from] ModelLoadError),
}

impl CampaignError {
    /// 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use CampaignError as E;
        match self {
            E::Usage(_) => 1,
            E::Missing { .. } | E::Io(_) | E::ModelLoad(_) => 2,
            E::Scenario(ScenarioError::NonTermination { .. }) => 3,
            E::Scenario(_) => 2,
            E::Sampling(SamplingError::Simulation { source, .. }) => match source {
                ScenarioError::NonTermination { .. } => 3,
                _ => 2,
            },
            E::Sampling(_) => 2,
            E::Gpc(
                GpcError::NotPositiveDefinite { .. }
                | GpcError::NoConvergence { .. }
                | GpcError::AllRestartsFailed { .. },
            ) => 3,
            E::Gpc(_) => 2,
            E::Boundary(BoundaryError::EmptyBoundary) => 3,
            E::Boundary(_) => 2,
        }
    }
}

/// Per-dataset seed: the first eight bytes of SHA-256 over the master seed
/// (little-endian) followed by the label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn default_fraction() -> f64 {
    0.9
}

fn default_minimax() -> usize {
    DEFAULT_MINIMAX_ITERS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub method: Method,
    pub n_total: usize,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// Overrides the seed derived from the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_minimax")]
    pub minimax_iters: usize,
}

impl DatasetConfig {
    pub fn new(name: &str, method: Method, n_total: usize) -> Self {
        Self {
            name: name.to_string(),
            method,
            n_total,
            train_fraction: default_fraction(),
            seed: None,
            minimax_iters: DEFAULT_MINIMAX_ITERS,
        }
    }
}

/// MC100, MC1000, LHC100, LHC1000 with a 90/10 split.
pub fn default_datasets() -> Vec<DatasetConfig> {
    vec![
        DatasetConfig::new("MC100", Method::MonteCarlo, 100),
        DatasetConfig::new("MC1000", Method::MonteCarlo, 1000),
        DatasetConfig::new("LHC100", Method::LatinHypercube, 100),
        DatasetConfig::new("LHC1000", Method::LatinHypercube, 1000),
    ]
}

fn default_comparisons() -> Vec<(String, String)> {
    [("MC100", "LHC100"), ("MC1000", "LHC1000"), ("MC100", "MC1000"), ("LHC100", "LHC1000")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSettings {
    pub restarts: usize,
    pub max_evals: usize,
    pub bounds: HyperBounds,
}

impl Default for HyperSettings {
    fn default() -> Self {
        let o = HyperOptOptions::default();
        Self {
            restarts: o.restarts,
            max_evals: o.max_evals,
            bounds: o.bounds,
        }
    }
}

impl HyperSettings {
    pub fn options(&self, seed: u64) -> HyperOptOptions {
        HyperOptOptions {
            restarts: self.restarts,
            seed,
            max_evals: self.max_evals,
            bounds: self.bounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    /// Name of the fixed dimension.
    pub dim: String,
    pub value: f64,
    /// Half-width of the data overlay slab.
    pub band: f64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            dim: "aperture_angle".into(),
            value: 17.5,
            band: 1.5,
        }
    }
}

fn default_resolution() -> usize {
    crate::boundary::DEFAULT_RESOLUTION
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_corner_cases() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    #[serde(default = "ParameterBox::scenario_default")]
    pub bounds: ParameterBox,
    #[serde(default = "default_datasets")]
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub physics: PhysicsConfig,
    /// Grid points per dimension for boundary extraction and entropy.
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default)]
    pub hyperopt: HyperSettings,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub slice: SliceConfig,
    /// Spread-out boundary points exported per model.
    #[serde(default = "default_corner_cases")]
    pub corner_cases: usize,
    #[serde(default = "default_comparisons")]
    pub comparisons: Vec<(String, String)>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl CampaignConfig {
    /// Reads a campaign JSON file. A file that is not a campaign config but
    /// parses as a physics config (JSON or `key = value`) overrides only the
    /// physics constants.
    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let campaign_err = match serde_json::from_str::<CampaignConfig>(&text) {
            Ok(c) => return Ok(c),
            Err(e) => e,
        };
        match PhysicsConfig::from_file(path) {
            Ok(physics) => Ok(Self {
                physics,
                ..Self::default()
            }),
            Err(_) => Err(CampaignError::Usage(format!(
                "{}: not a campaign or physics config: {campaign_err}",
                path.display()
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let usage = |m: String| Err(CampaignError::Usage(m));
        if self.bounds.ndim() != 3 {
            return usage(format!(
                "the scenario box needs 3 dimensions, got {}",
                self.bounds.ndim()
            ));
        }
        self.physics
            .validate()
            .map_err(|e| CampaignError::Usage(e.to_string()))?;
        if self.grid_resolution < 2 {
            return usage(format!("grid_resolution must be >= 2, got {}", self.grid_resolution));
        }
        if self.hyperopt.restarts < 1 || self.hyperopt.max_evals < 1 {
            return usage("hyperopt restarts and max_evals must be >= 1".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for ds in &self.datasets {
            let ok_name = !ds.name.is_empty()
                && ds
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok_name {
                return usage(format!(
                    "dataset name `{}` must be non-empty ASCII letters, digits, `-` or `_`",
                    ds.name
                ));
            }
            if !seen.insert(ds.name.as_str()) {
                return usage(format!("duplicate dataset name `{}`", ds.name));
            }
            let spec = DesignSpec {
                method: ds.method,
                n_total: ds.n_total,
                train_fraction: ds.train_fraction,
                seed: 0,
                minimax_iters: ds.minimax_iters,
            };
            spec.validate()
                .map_err(|e| CampaignError::Usage(format!("{}: {e}", ds.name)))?;
            if spec.n_test() == 0 || spec.n_train() == 0 {
                return usage(format!("{}: split leaves an empty train or test set", ds.name));
            }
        }
        for (a, b) in &self.comparisons {
            for n in [a, b] {
                if !seen.contains(n.as_str()) {
                    return usage(format!("comparison names unknown dataset `{n}`"));
                }
            }
        }
        if self.bounds.dim_index(&self.slice.dim).is_none() {
            return usage(format!("slice dimension `{}` is not in the box", self.slice.dim));
        }
        Ok(())
    }
}

/// Provenance sidecar written next to each labeled data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub design: DesignSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub n_collisions: usize,
    pub bounds: ParameterBox,
    pub physics: PhysicsConfig,
    pub all: String,
    pub train: String,
    pub test: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub name: String,
    pub n_train: usize,
    pub hyperopt_seed: u64,
    pub settings: HyperSettings,
    pub kernel: KernelParams,
    pub log_marginal: f64,
    pub stationarity_residual: f64,
    pub restarts: Vec<RestartRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub name: String,
    pub resolution: Vec<usize>,
    pub n_points: usize,
    /// Largest `|p - 0.5|` over the re-evaluated boundary points.
    pub max_abs_p_deviation: Option<f64>,
    pub mean_predictive_entropy: f64,
    pub corner_cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    /// Hausdorff distance in raw parameter units; `None` if either boundary is empty.
    pub raw: Option<f64>,
    /// The same in unit-cube coordinates.
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub name: String,
    pub dim: String,
    pub value: f64,
    pub band: f64,
    pub overlay_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub name: String,
    pub method: Method,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub n_misclassified: usize,
    pub log_marginal: f64,
    pub stationarity_residual: f64,
    pub kernel: KernelParams,
    pub boundary_points: usize,
    pub mean_predictive_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub master_seed: u64,
    pub datasets: Vec<DatasetReport>,
    pub comparisons: Vec<Comparison>,
    /// Paths relative to the output directory; all exist when written.
    pub artifacts: Vec<String>,
}

/// Hyperparameter search followed by the final Laplace fit.
pub fn train_model(
    bounds: &ParameterBox,
    train: &[LabeledSample],
    settings: &HyperSettings,
    seed: u64,
) -> Result<(GpcModel, Vec<RestartRecord>), CampaignError> {
    let training = TrainingSet::from_samples(bounds.clone(), train)?;
    training.require_both_classes()?;
    let result = optimize_hyperparams(&training, &settings.options(seed))?;
    let model = laplace_fit(&training, &result.kernel)?;
    Ok((model, result.restarts))
}

pub struct Campaign {
    pub config: CampaignConfig,
}

impl Campaign {
    pub fn new(config: CampaignConfig) -> Result<Self, CampaignError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    fn path(&self, rel: String) -> PathBuf {
        self.config.out_dir.join(rel)
    }

    pub fn data_path(&self, name: &str) -> PathBuf {
        self.path(format!("data/{name}.csv"))
    }
    pub fn train_path(&self, name: &str) -> PathBuf {
        self.path(format!("data/{name}_train.csv"))
    }
    pub fn test_path(&self, name: &str) -> PathBuf {
        self.path(format!("data/{name}_test.csv"))
    }
    pub fn manifest_path(&self, name: &str) -> PathBuf {
        self.path(format!("data/{name}.json"))
    }
    pub fn model_path(&self, name: &str) -> PathBuf {
        self.path(format!("models/{name}.json"))
    }
    pub fn train_summary_path(&self, name: &str) -> PathBuf {
        self.path(format!("models/{name}.train.json"))
    }
    pub fn metrics_path(&self, name: &str) -> PathBuf {
        self.path(format!("metrics/{name}.json"))
    }
    pub fn boundary_path(&self, name: &str) -> PathBuf {
        self.path(format!("boundary/{name}.csv"))
    }
    pub fn boundary_summary_path(&self, name: &str) -> PathBuf {
        self.path(format!("boundary/{name}.json"))
    }
    pub fn corner_cases_path(&self, name: &str) -> PathBuf {
        self.path(format!("boundary/{name}_corner_cases.csv"))
    }
    pub fn compare_path(&self, a: &str, b: &str) -> PathBuf {
        self.path(format!("compare/{a}_vs_{b}.json"))
    }
    pub fn slice_csv_path(&self, name: &str) -> PathBuf {
        self.path(format!("slices/{name}.csv"))
    }
    pub fn slice_svg_path(&self, name: &str) -> PathBuf {
        self.path(format!("slices/{name}.svg"))
    }
    pub fn slice_summary_path(&self, name: &str) -> PathBuf {
        self.path(format!("slices/{name}.json"))
    }
    pub fn report_path(&self) -> PathBuf {
        self.path("report.json".into())
    }
    pub fn report_md_path(&self) -> PathBuf {
        self.path("report.md".into())
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::uniform(self.config.bounds.clone(), self.config.grid_resolution)
            .expect("validated resolution")
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetConfig, CampaignError> {
        self.config
            .datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| {
                let known: Vec<_> = self.config.datasets.iter().map(|d| d.name.as_str()).collect();
                CampaignError::Usage(format!("unknown dataset `{name}` (known: {})", known.join(", ")))
            })
    }

    /// Resolves a name list; an empty list selects every configured data set.
    pub fn select(&self, names: &[String]) -> Result<Vec<&DatasetConfig>, CampaignError> {
        if names.is_empty() {
            return Ok(self.config.datasets.iter().collect());
        }
        names.iter().map(|n| self.dataset(n)).collect()
    }

    pub fn design_spec(&self, ds: &DatasetConfig) -> DesignSpec {
        DesignSpec {
            method: ds.method,
            n_total: ds.n_total,
            train_fraction: ds.train_fraction,
            seed: ds
                .seed
                .unwrap_or_else(|| derive_seed(self.config.master_seed, &ds.name)),
            minimax_iters: ds.minimax_iters,
        }
    }

    pub fn hyperopt_seed(&self, name: &str) -> u64 {
        derive_seed(self.config.master_seed, &format!("{name}/hyperopt"))
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.config.out_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn need(&self, path: PathBuf, what: &'static str, stage: &'static str) -> Result<PathBuf, CampaignError> {
        if path.is_file() {
            Ok(path)
        } else {
            Err(CampaignError::Missing { what, path, stage })
        }
    }

    fn load_model(&self, name: &str) -> Result<GpcModel, CampaignError> {
        let path = self.need(self.model_path(name), "model", "train")?;
        let text = std::fs::read_to_string(&path).map_err(|source| IoError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(GpcModel::from_json(&text)?)
    }

    /// Draws, simulates and splits each selected data set.
    pub fn sample(&self, names: &[String]) -> Result<Vec<DatasetManifest>, CampaignError> {
        let mut out = Vec::new();
        for ds in self.select(names)? {
            let spec = self.design_spec(ds);
            log::info!("sampling {} ({:?}, n = {}, seed = {})", ds.name, spec.method, spec.n_total, spec.seed);
            let set = spec.generate(&self.config.bounds)?;
            let labeled = label(&set, &self.config.physics)?;
            let (train, test) = split_items(&labeled, &spec)?;
            io::write_labeled_csv(&self.data_path(&ds.name), &labeled)?;
            io::write_labeled_csv(&self.train_path(&ds.name), &train)?;
            io::write_labeled_csv(&self.test_path(&ds.name), &test)?;
            let manifest = DatasetManifest {
                name: ds.name.clone(),
                n_train: train.len(),
                n_test: test.len(),
                n_collisions: labeled
                    .iter()
                    .filter(|s| s.outcome == Outcome::Collision)
                    .count(),
                bounds: self.config.bounds.clone(),
                physics: self.config.physics,
                all: self.rel(&self.data_path(&ds.name)),
                train: self.rel(&self.train_path(&ds.name)),
                test: self.rel(&self.test_path(&ds.name)),
                design: spec,
            };
            io::write_json(&self.manifest_path(&ds.name), &manifest)?;
            out.push(manifest);
        }
        Ok(out)
    }

    pub fn train(&self, names: &[String]) -> Result<Vec<TrainSummary>, CampaignError> {
        let mut out = Vec::new();
        for ds in self.select(names)? {
            let path = self.need(self.train_path(&ds.name), "training data", "sample")?;
            let train = io::read_labeled_csv(&path)?;
            let seed = self.hyperopt_seed(&ds.name);
            log::info!("training {} on {} points", ds.name, train.len());
            let (model, restarts) =
                train_model(&self.config.bounds, &train, &self.config.hyperopt, seed)?;
            let summary = TrainSummary {
                name: ds.name.clone(),
                n_train: train.len(),
                hyperopt_seed: seed,
                settings: self.config.hyperopt.clone(),
                kernel: model.kernel.clone(),
                log_marginal: model.log_marginal,
                stationarity_residual: model.stationarity_residual(),
                restarts,
            };
            io::write_atomic(&self.model_path(&ds.name), model.to_json().as_bytes())?;
            io::write_json(&self.train_summary_path(&ds.name), &summary)?;
            out.push(summary);
        }
        Ok(out)
    }

    pub fn evaluate(&self, names: &[String]) -> Result<Vec<(String, Metrics)>, CampaignError> {
        let mut out = Vec::new();
        for ds in self.select(names)? {
            let model = self.load_model(&ds.name)?;
            let path = self.need(self.test_path(&ds.name), "test data", "sample")?;
            let metrics = model.evaluate(&io::read_labeled_csv(&path)?)?;
            log::info!(
                "{}: {}/{} correct",
                ds.name,
                metrics.n_correct,
                metrics.n_test
            );
            io::write_json(&self.metrics_path(&ds.name), &metrics)?;
            out.push((ds.name.clone(), metrics));
        }
        Ok(out)
    }

    /// Extracts the boundary of each selected model. A model that predicts a
    /// single class everywhere yields an empty boundary file and a warning.
    pub fn boundary(&self, names: &[String]) -> Result<Vec<BoundarySummary>, CampaignError> {
        let grid = self.grid();
        let mut out = Vec::new();
        for ds in self.select(names)? {
            let model = self.load_model(&ds.name)?;
            let estimate = match extract_boundary(&model, &grid, &ds.name) {
                Ok(b) => b,
                Err(BoundaryError::EmptyBoundary) => {
                    log::warn!("{}: {}", ds.name, BoundaryError::EmptyBoundary);
                    BoundaryEstimate {
                        points: Vec::new(),
                        probabilities: Vec::new(),
                        grid: grid.clone(),
                        model_id: ds.name.clone(),
                    }
                }
                Err(e) => return Err(e.into()),
            };
            let corners = if estimate.is_empty() {
                Vec::new()
            } else {
                boundary_scenarios(&model, &estimate, self.config.corner_cases)?
            };
            let summary = BoundarySummary {
                name: ds.name.clone(),
                resolution: grid.resolution.clone(),
                n_points: estimate.len(),
                max_abs_p_deviation: estimate
                    .probabilities
                    .iter()
                    .map(|p| (p - 0.5).abs())
                    .reduce(f64::max),
                mean_predictive_entropy: mean_predictive_entropy(&model, &grid),
                corner_cases: corners.len(),
            };
            log::info!("{}: {} boundary points", ds.name, estimate.len());
            io::write_boundary_csv(&self.boundary_path(&ds.name), &estimate)?;
            io::write_atomic(
                &self.corner_cases_path(&ds.name),
                io::scenarios_csv_string(&corners).as_bytes(),
            )?;
            io::write_json(&self.boundary_summary_path(&ds.name), &summary)?;
            out.push(summary);
        }
        Ok(out)
    }

    pub fn load_boundary(&self, name: &str) -> Result<BoundaryEstimate, CampaignError> {
        self.dataset(name)?;
        let path = self.need(self.boundary_path(name), "boundary", "boundary")?;
        let (points, probabilities) = io::read_boundary_csv(&path, self.config.bounds.ndim())?;
        Ok(BoundaryEstimate {
            points,
            probabilities,
            grid: self.grid(),
            model_id: name.to_string(),
        })
    }

    /// Hausdorff distances for the given pairs, or the configured pairs when
    /// `pairs` is empty.
    pub fn compare(&self, pairs: &[(String, String)]) -> Result<Vec<Comparison>, CampaignError> {
        let pairs = if pairs.is_empty() {
            &self.config.comparisons[..]
        } else {
            pairs
        };
        let mut out = Vec::new();
        for (a, b) in pairs {
            let (ba, bb) = (self.load_boundary(a)?, self.load_boundary(b)?);
            let c = compare_boundaries(&ba, &bb)?;
            io::write_json(&self.compare_path(a, b), &c)?;
            out.push(c);
        }
        Ok(out)
    }

    pub fn slice(&self, names: &[String], settings: &SliceConfig) -> Result<Vec<SliceSummary>, CampaignError> {
        let bx = &self.config.bounds;
        let dim = bx.dim_index(&settings.dim).ok_or_else(|| {
            CampaignError::Usage(format!("unknown dimension `{}`", settings.dim))
        })?;
        let grid = self.grid();
        let mut out = Vec::new();
        for ds in self.select(names)? {
            let model = self.load_model(&ds.name)?;
            let path = self.need(self.data_path(&ds.name), "labeled data", "sample")?;
            let data = io::read_labeled_csv(&path)?;
            let s = confidence_slice(&model, &grid, dim, settings.value, &data, settings.band)?;
            io::write_atomic(
                &self.slice_csv_path(&ds.name),
                io::slice_csv_string(&s, bx).as_bytes(),
            )?;
            io::write_atomic(&self.slice_svg_path(&ds.name), svg::render_slice(&s, bx).as_bytes())?;
            let summary = SliceSummary {
                name: ds.name.clone(),
                dim: settings.dim.clone(),
                value: settings.value,
                band: settings.band,
                overlay_points: s.overlay.len(),
            };
            io::write_json(&self.slice_summary_path(&ds.name), &summary)?;
            out.push(summary);
        }
        Ok(out)
    }

    /// Aggregates existing stage outputs into `report.json` and `report.md`.
    pub fn report(&self) -> Result<CampaignReport, CampaignError> {
        let mut datasets = Vec::new();
        let mut artifacts = Vec::new();
        for ds in &self.config.datasets {
            let n = &ds.name;
            let manifest: DatasetManifest =
                io::read_json(&self.need(self.manifest_path(n), "dataset manifest", "sample")?)?;
            let train: TrainSummary =
                io::read_json(&self.need(self.train_summary_path(n), "training summary", "train")?)?;
            let metrics: Metrics =
                io::read_json(&self.need(self.metrics_path(n), "metrics", "evaluate")?)?;
            let boundary: BoundarySummary = io::read_json(&self.need(
                self.boundary_summary_path(n),
                "boundary summary",
                "boundary",
            )?)?;
            datasets.push(DatasetReport {
                name: n.clone(),
                method: manifest.design.method,
                n_train: manifest.n_train,
                n_test: manifest.n_test,
                seed: manifest.design.seed,
                accuracy: metrics.accuracy,
                n_misclassified: metrics.n_misclassified,
                log_marginal: train.log_marginal,
                stationarity_residual: train.stationarity_residual,
                kernel: train.kernel,
                boundary_points: boundary.n_points,
                mean_predictive_entropy: boundary.mean_predictive_entropy,
            });
            for p in [
                self.data_path(n),
                self.train_path(n),
                self.test_path(n),
                self.manifest_path(n),
                self.model_path(n),
                self.train_summary_path(n),
                self.metrics_path(n),
                self.boundary_path(n),
                self.boundary_summary_path(n),
                self.corner_cases_path(n),
                self.slice_csv_path(n),
                self.slice_svg_path(n),
                self.slice_summary_path(n),
            ] {
                if p.is_file() {
                    artifacts.push(self.rel(&p));
                }
            }
        }
        let mut comparisons = Vec::new();
        for (a, b) in &self.config.comparisons {
            let path = self.need(self.compare_path(a, b), "comparison", "compare")?;
            comparisons.push(io::read_json(&path)?);
            artifacts.push(self.rel(&path));
        }
        artifacts.push(self.rel(&self.report_md_path()));
        let report = CampaignReport {
            master_seed: self.config.master_seed,
            datasets,
            comparisons,
            artifacts,
        };
        io::write_atomic(&self.report_md_path(), render_markdown(&report).as_bytes())?;
        io::write_json(&self.report_path(), &report)?;
        Ok(report)
    }

    /// Every stage in order, for all configured data sets.
    pub fn run_all(&self) -> Result<CampaignReport, CampaignError> {
        self.sample(&[])?;
        self.train(&[])?;
        self.evaluate(&[])?;
        self.boundary(&[])?;
        self.compare(&[])?;
        self.slice(&[], &self.config.slice.clone())?;
        self.report()
    }
}

/// Distances in both spaces; `None` when either side is empty.
pub fn compare_boundaries(a: &BoundaryEstimate, b: &BoundaryEstimate) -> Result<Comparison, CampaignError> {
    let dist = |space| match boundary_distance(a, b, space) {
        Ok(d) => Ok(Some(d)),
        Err(BoundaryError::EmptyInput) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(Comparison {
        a: a.model_id.clone(),
        b: b.model_id.clone(),
        raw: dist(DistanceSpace::Raw)?,
        normalized: dist(DistanceSpace::Normalized)?,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|d| format!("{d:.4}")).unwrap_or_else(|| "n/a".into())
}

fn render_markdown(r: &CampaignReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Campaign report\n\nMaster seed: {}\n", r.master_seed);
    let _ = writeln!(
        s,
        "| data set | train | test | accuracy | misclassified | log marginal | boundary points | mean entropy |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for d in &r.datasets {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.3} | {} | {:.4} | {} | {:.4} |",
            d.name,
            d.n_train,
            d.n_test,
            d.accuracy,
            d.n_misclassified,
            d.log_marginal,
            d.boundary_points,
            d.mean_predictive_entropy
        );
    }
    let _ = writeln!(s, "\n## Boundary distances (Hausdorff)\n");
    let _ = writeln!(s, "| pair | raw units | normalized |");
    let _ = writeln!(s, "|---|---|---|");
    for c in &r.comparisons {
        let _ = writeln!(
            s,
            "| {} vs {} | {} | {} |",
            c.a,
            c.b,
            fmt_opt(c.raw),
            fmt_opt(c.normalized)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_has_four_datasets() {
        let c = CampaignConfig::default();
        let rows: Vec<_> = c
            .datasets
            .iter()
            .map(|d| {
                let spec = DesignSpec::new(d.method, d.n_total, 0);
                (d.name.as_str(), spec.n_train(), spec.n_test())
            })
            .collect();
        assert_eq!(
            rows,
            vec![("MC100", 90, 10), ("MC1000", 900, 100), ("LHC100", 90, 10), ("LHC1000", 900, 100)]
        );
        assert_eq!(c.comparisons.len(), 4);
        assert_eq!(c.slice, SliceConfig::default());
        assert_eq!((c.slice.value, c.slice.band), (17.5, 1.5));
        c.validate().unwrap();
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "MC100"), derive_seed(7, "MC100"));
        assert_ne!(derive_seed(7, "MC100"), derive_seed(7, "LHC100"));
        assert_ne!(derive_seed(7, "MC100"), derive_seed(8, "MC100"));
    }

    #[test]
    fn config_rejects_bad_input() {
        let bad = |json: &str| {
            let c: CampaignConfig = serde_json::from_str(json).unwrap();
            c.validate().unwrap_err().exit_code()
        };
        assert_eq!(bad(r#"{"grid_resolution": 1}"#), 1);
        assert_eq!(
            bad(r#"{"datasets": [{"name": "A", "method": "monte_carlo", "n_total": 1}], "comparisons": []}"#),
            1
        );
        assert_eq!(bad(r#"{"comparisons": [["MC100", "nope"]]}"#), 1);
        assert!(serde_json::from_str::<CampaignConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn physics_only_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("physics.cfg");
        std::fs::write(&path, "decel = 7.5\n").unwrap();
        let c = CampaignConfig::load(&path).unwrap();
        assert_eq!(c.physics.decel, 7.5);
        assert_eq!(c.datasets.len(), 4);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CampaignError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CampaignError::Gpc(GpcError::SingleClass).exit_code(), 2);
        assert_eq!(CampaignError::Gpc(GpcError::NoConvergence { iterations: 3 }).exit_code(), 3);
    }
}

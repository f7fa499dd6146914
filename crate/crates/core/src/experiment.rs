//! Experiment configuration and orchestration behind the `sgmc` binary.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! name = "netflix-sgmc"
//! seed = 0
//!
//! [data]
//! kind = "community"        # or "feature-ratings", "files"
//! density = 0.15
//!
//! [model]
//! variant = "sgmc"          # dmf | fm | sgmc | sgmc-z
//! p_max = 20
//! q_max = 20
//! trainable = ["P", "C"]
//!
//! [train]
//! learning_rate = 5e-3
//! mu_r = 0.001
//! mu_c = 0.001
//! rho_r = 0.1
//! ```
//!
//! Every random consumer draws from `stream_seed(seed, purpose)`, so the
//! top-level seed together with the resolved config fixes every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{self, GraphFormat, RatingFormat};
use crate::error::{Error, Result};
use crate::graphs::{perturb_graph, LaplacianSpectrum, WeightedGraph};
use crate::metrics::{self, auc, aupr, dti_splits, effective_rank, masked_scores, rmse, CvScheme, MetricRow};
use crate::objectives::MaskedMatrix;
use crate::seeding::stream_seed;
use crate::spectral::{Basis, FactorModel, SpectralFilterBank, Trainable, Variant};
use crate::synthdata::{
    cold_start_subset, histogram_levels, value_histogram, CommunityBenchmark, FeatureRatingBenchmark, ML100K_HISTOGRAM,
};
use crate::trainer::{split_validation, train, TrainConfig, TrainOutcome};

/// Default output root when neither `--out` nor the variable is given.
pub const OUT_DIR_ENV: &str = "SGMC_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Prefix of every run id.
    pub name: String,
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    /// `train.seed` is replaced by the `validation` stream of `seed`.
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub cold_start: ColdStartConfig,
    pub noisy_graph: NoisyGraphConfig,
    pub dti: DtiConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            seed: 0,
            data: DataConfig::Community(CommunityBenchmark::default()),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            cold_start: ColdStartConfig::default(),
            noisy_graph: NoisyGraphConfig::default(),
            dti: DtiConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataConfig {
    Community(CommunityBenchmark),
    FeatureRatings(FeatureRatingsData),
    Files(FileData),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureRatingsData {
    #[serde(flatten)]
    pub benchmark: FeatureRatingBenchmark,
    /// Ratings whose value histogram is matched; the 100k MovieLens
    /// histogram when absent.
    pub reference: Option<PathBuf>,
    pub reference_format: Option<RatingFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileData {
    pub ratings: PathBuf,
    pub format: RatingFormat,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    /// Held-out ratings; otherwise `test_fraction` of `ratings` is held out.
    pub test_ratings: Option<PathBuf>,
    pub test_fraction: f64,
    pub row_graph: Option<PathBuf>,
    pub col_graph: Option<PathBuf>,
    pub graph_format: GraphFormat,
}

impl Default for FileData {
    fn default() -> Self {
        Self {
            ratings: PathBuf::new(),
            format: RatingFormat::MovielensTab,
            rows: None,
            cols: None,
            test_ratings: None,
            test_fraction: 0.2,
            row_graph: None,
            col_graph: None,
            graph_format: GraphFormat::DenseCsv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Widths of `P` and `Q`; also the largest filter sizes for SGMC-Z.
    pub p_max: usize,
    pub q_max: usize,
    pub p_skip: usize,
    pub q_skip: usize,
    pub trainable: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Sgmc,
            p_max: 20,
            q_max: 20,
            p_skip: 1,
            q_skip: 1,
            trainable: vec!["P".into(), "C".into(), "Q".into()],
        }
    }
}

/// Grid of the hyperparameter sweep; an empty axis keeps the base value.
/// `mu` and `rho` set the row and column weights together.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub init_scale: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub p_max: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColdStartConfig {
    pub n_c: Vec<usize>,
    pub n_r: Vec<usize>,
}

impl Default for ColdStartConfig {
    fn default() -> Self {
        Self {
            n_c: vec![100],
            n_r: vec![1, 5, 10],
        }
    }
}

/// Noise levels as multiples of each graph's mean edge weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisyGraphConfig {
    pub levels: Vec<f64>,
}

impl Default for NoisyGraphConfig {
    fn default() -> Self {
        Self {
            levels: vec![0.0, 0.1, 0.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtiConfig {
    pub seeds: Vec<u64>,
    pub folds: usize,
    pub schemes: Vec<CvScheme>,
}

impl Default for DtiConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            folds: 10,
            schemes: CvScheme::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config and applies `key=value` overrides. A `[data]` table
    /// without `kind` is a community benchmark.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        if let Some(toml::Value::Table(data)) = value.get_mut("data") {
            data.entry("kind").or_insert_with(|| "community".into());
        }
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        if let DataConfig::Files(f) = &mut cfg.data {
            let base = path.parent().unwrap_or(Path::new("."));
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            fix(&mut f.ratings);
            f.test_ratings.iter_mut().for_each(fix);
            f.row_graph.iter_mut().for_each(fix);
            f.col_graph.iter_mut().for_each(fix);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate().map_err(as_config)?;
        Trainable::from_names(&self.model.trainable)?;
        if self.model.p_max == 0 || self.model.q_max == 0 || self.model.p_skip == 0 || self.model.q_skip == 0 {
            return Err(Error::Config("model widths and skips must be positive".into()));
        }
        if self.dti.folds < 2 {
            return Err(Error::Config("dti.folds must be at least 2".into()));
        }
        Ok(())
    }

    /// Config with the training seed taken from the top-level seed,
    /// truncated to 63 bits so it stays a TOML integer.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.train.seed = stream_seed(self.seed, "validation") >> 1;
        cfg
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Applies `key.path=value`; the value is read as a TOML literal and falls
/// back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for part in path {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Everything a training run needs, loaded or generated.
#[derive(Debug, Clone)]
pub struct Problem {
    pub train: MaskedMatrix,
    pub test: Option<MaskedMatrix>,
    pub row_graph: WeightedGraph,
    pub col_graph: WeightedGraph,
    pub row_spectrum: LaplacianSpectrum,
    pub col_spectrum: LaplacianSpectrum,
    pub truth: Option<Array2<f64>>,
    /// Content hash of the inputs.
    pub input_hash: String,
}

impl Problem {
    /// Same problem on other graphs.
    pub fn with_graphs(&self, row_graph: WeightedGraph, col_graph: WeightedGraph) -> Result<Self> {
        Ok(Self {
            row_spectrum: LaplacianSpectrum::of_graph(&row_graph)?,
            col_spectrum: LaplacianSpectrum::of_graph(&col_graph)?,
            row_graph,
            col_graph,
            ..self.clone()
        })
    }
}

/// `sha256("blob <len>\0" ‖ bytes)` in hex.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn hash_parts(parts: &[String]) -> String {
    git_blob_hash(parts.join("\n").as_bytes())
}

fn matrix_bytes(x: &Array2<f64>) -> Vec<u8> {
    x.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn load_problem(data: &DataConfig, seed: u64) -> Result<Problem> {
    match data {
        DataConfig::Community(bench) => {
            let d = bench.generate(seed)?;
            let input_hash = hash_parts(&[
                git_blob_hash(&matrix_bytes(&d.truth)),
                git_blob_hash(&matrix_bytes(d.train.mask())),
                git_blob_hash(&matrix_bytes(d.row_graph.adjacency())),
                git_blob_hash(&matrix_bytes(d.col_graph.adjacency())),
            ]);
            Ok(Problem {
                train: d.train,
                test: Some(d.test),
                row_graph: d.row_graph,
                col_graph: d.col_graph,
                row_spectrum: d.row_spectrum,
                col_spectrum: d.col_spectrum,
                truth: Some(d.truth),
                input_hash,
            })
        }
        DataConfig::FeatureRatings(f) => {
            let (reference, ref_hash) = match &f.reference {
                Some(path) => {
                    let bytes = fs::read(path)?;
                    let text = String::from_utf8_lossy(&bytes);
                    let format = f.reference_format.unwrap_or(RatingFormat::MovielensTab);
                    let shape = reference_shape(&text, format)?;
                    let r = dataio::parse_ratings(&text, format, Some(shape))?;
                    let levels: Vec<f64> = r.observed().into_iter().map(|(i, j)| r.values()[[i, j]]).collect();
                    (levels, git_blob_hash(&bytes))
                }
                None => (histogram_levels(&ML100K_HISTOGRAM), "ml100k-histogram".into()),
            };
            let d = f.benchmark.generate(&reference, seed)?;
            let input_hash = hash_parts(&[
                ref_hash,
                git_blob_hash(&matrix_bytes(&d.truth)),
                git_blob_hash(&matrix_bytes(d.train.mask())),
            ]);
            Ok(Problem {
                train: d.train,
                test: Some(d.test),
                row_graph: d.row_graph,
                col_graph: d.col_graph,
                row_spectrum: d.row_spectrum,
                col_spectrum: d.col_spectrum,
                truth: Some(d.truth),
                input_hash,
            })
        }
        DataConfig::Files(f) => load_files(f, seed),
    }
}

/// Largest 1-based ids of a sparse ratings file, or the dense shape.
fn reference_shape(text: &str, format: RatingFormat) -> Result<(usize, usize)> {
    if format == RatingFormat::DenseCsv {
        return Ok(dataio::parse_ratings(text, format, None)?.shape());
    }
    let (sep, offset) = match format {
        RatingFormat::MovielensTab => ('\t', 0),
        _ => (',', 1),
    };
    let mut shape = (0, 0);
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut f = l.split(sep);
        let mut next = || -> Result<usize> {
            f.next().and_then(|s| s.trim().parse::<usize>().ok()).ok_or(Error::Parse {
                line: i + 1,
                message: "bad index".into(),
            })
        };
        let (r, c) = (next()? + offset, next()? + offset);
        shape = (shape.0.max(r), shape.1.max(c));
    }
    Ok(shape)
}

fn load_files(f: &FileData, seed: u64) -> Result<Problem> {
    let shape = match (f.rows, f.cols) {
        (Some(r), Some(c)) => Some((r, c)),
        (None, None) => None,
        _ => return Err(Error::Config("give both data.rows and data.cols".into())),
    };
    let bytes = fs::read(&f.ratings)?;
    let mut hashes = vec![git_blob_hash(&bytes)];
    let all = dataio::parse_ratings(&String::from_utf8_lossy(&bytes), f.format, shape)?;
    let (m, n) = all.shape();
    let (train, test) = match &f.test_ratings {
        Some(p) => {
            let tb = fs::read(p)?;
            hashes.push(git_blob_hash(&tb));
            let test = dataio::parse_ratings(&String::from_utf8_lossy(&tb), f.format, Some((m, n)))?;
            (all, Some(test))
        }
        None if f.test_fraction > 0.0 => {
            let (keep, hold) = split_validation(&all, f.test_fraction, stream_seed(seed, "test-split"))?;
            (all.with_mask(keep)?, Some(all.with_mask(hold)?))
        }
        None => (all, None),
    };
    let mut graph = |path: &Option<PathBuf>, size: usize| -> Result<WeightedGraph> {
        match path {
            Some(p) => {
                hashes.push(git_blob_hash(&fs::read(p)?));
                dataio::load_graph(p, f.graph_format, size)
            }
            None => Ok(WeightedGraph::empty(size)),
        }
    };
    let row_graph = graph(&f.row_graph, m)?;
    let col_graph = graph(&f.col_graph, n)?;
    Ok(Problem {
        train,
        test,
        row_spectrum: LaplacianSpectrum::of_graph(&row_graph)?,
        col_spectrum: LaplacianSpectrum::of_graph(&col_graph)?,
        row_graph,
        col_graph,
        truth: None,
        input_hash: hash_parts(&hashes),
    })
}

/// Identity-initialised model for a problem.
pub fn build_model(model: &ModelConfig, init_scale: f64, problem: &Problem) -> Result<FactorModel> {
    let bank = match model.variant {
        Variant::SgmcZ => Some(SpectralFilterBank::new(model.p_max, model.q_max, model.p_skip, model.q_skip)?),
        _ => None,
    };
    FactorModel::identity_init(
        model.variant,
        Basis::from_spectrum(&problem.row_spectrum),
        Basis::from_spectrum(&problem.col_spectrum),
        model.p_max,
        model.q_max,
        init_scale,
        Trainable::from_names(&model.trainable)?,
        bank,
    )
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub run_id: String,
    pub outcome: TrainOutcome,
    pub test_rmse: Option<f64>,
    pub effective_rank: f64,
}

impl RunResult {
    fn metric_row(&self, scheme: &str, seed: u64) -> MetricRow {
        MetricRow {
            run_id: self.run_id.clone(),
            scheme: scheme.into(),
            fold: 0,
            seed,
            auc: None,
            aupr: None,
            rmse: self.test_rmse,
        }
    }
}

/// Trains the configured model on `problem`; scores the final iterate.
pub fn run_training(cfg: &ExperimentConfig, problem: &Problem, run_id: &str) -> Result<RunResult> {
    let cfg = cfg.resolved();
    let model = build_model(&cfg.model, cfg.train.init_scale, problem)?;
    let outcome = train(model, &problem.train, &cfg.train, problem.test.as_ref())?;
    let x = outcome.model.product_matrix();
    let test_rmse = match &problem.test {
        Some(t) => Some(rmse(&x.view(), &t.values().view(), &t.mask().view())?),
        None => None,
    };
    let effective_rank = effective_rank(&x.view())?;
    Ok(RunResult {
        run_id: run_id.into(),
        outcome,
        test_rmse,
        effective_rank,
    })
}

/// Files written by a command, with their content hashes.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Artifacts {
    pub files: BTreeMap<String, String>,
}

struct OutDir {
    root: PathBuf,
    artifacts: Artifacts,
}

impl OutDir {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Artifacts::default(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        dataio::atomic_write(&self.root.join(name), bytes)?;
        self.artifacts.files.insert(name.into(), git_blob_hash(bytes));
        Ok(())
    }

    fn write_metrics(&mut self, rows: &[MetricRow]) -> Result<()> {
        let mut buf = Vec::new();
        metrics::write_metric_rows(&mut buf, rows)?;
        self.write("metrics.csv", &buf)
    }

    fn finish(mut self, command: &str, cfg: &ExperimentConfig, problem_hash: &str, extra: serde_json::Value) -> Result<Artifacts> {
        let resolved = cfg.resolved();
        let streams: BTreeMap<&str, u64> = ["row-graph", "col-graph", "truth", "mask", "validation", "test-split", "cold-start", "row-noise", "col-noise"]
            .into_iter()
            .map(|p| (p, stream_seed(cfg.seed, p)))
            .collect();
        let manifest = serde_json::json!({
            "command": command,
            "name": cfg.name,
            "seed": cfg.seed,
            "streams": streams,
            "input_hash": problem_hash,
            "config": resolved,
            "config_toml": resolved.to_toml_string()?,
            "outputs": self.artifacts.files,
            "summary": extra,
        });
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        self.write("manifest.json", &bytes)?;
        Ok(self.artifacts)
    }
}

/// Output root: the explicit directory, else `$SGMC_OUT_DIR`, else `runs`.
pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// `synth-gen`: writes the dataset in the dataio formats.
pub fn synth_gen(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts> {
    let p = load_problem(&cfg.data, cfg.seed)?;
    let mut dir = OutDir::new(out)?;
    if let Some(t) = &p.truth {
        dir.write("truth.csv", dataio::dense_csv(t, None).as_bytes())?;
    }
    dir.write("train.csv", dataio::dense_csv(p.train.values(), Some(p.train.mask())).as_bytes())?;
    dir.write("train_triplets.csv", dataio::triplets_csv(&p.train).as_bytes())?;
    if let Some(t) = &p.test {
        dir.write("test.csv", dataio::dense_csv(t.values(), Some(t.mask())).as_bytes())?;
    }
    dir.write("row_graph.csv", dataio::dense_csv(p.row_graph.adjacency(), None).as_bytes())?;
    dir.write("col_graph.csv", dataio::dense_csv(p.col_graph.adjacency(), None).as_bytes())?;
    dir.write("row_graph_edges.csv", dataio::edge_list_csv(&p.row_graph).as_bytes())?;
    dir.write("col_graph_edges.csv", dataio::edge_list_csv(&p.col_graph).as_bytes())?;
    let hist: Vec<(f64, usize)> = value_histogram(&p.train.values().view()).into_iter().take(64).collect();
    let (m, n) = p.train.shape();
    dir.finish(
        "synth-gen",
        cfg,
        &p.input_hash,
        serde_json::json!({ "rows": m, "cols": n, "observed": p.train.count(), "train_histogram_head": hist }),
    )
}

/// `train`: trace, metrics, checkpoint and manifest of one run.
pub fn train_command(cfg: &ExperimentConfig, out: &Path) -> Result<(RunResult, Artifacts)> {
    let problem = load_problem(&cfg.data, cfg.seed)?;
    let run = run_training(cfg, &problem, &cfg.name)?;
    let mut dir = OutDir::new(out)?;
    let mut trace = Vec::new();
    run.outcome.trace.write_csv(&mut trace)?;
    dir.write("trace.csv", &trace)?;
    let mut model = Vec::new();
    run.outcome.model.write_to(&mut model)?;
    dir.write("model.bin", &model)?;
    dir.write_metrics(&[run.metric_row("holdout", cfg.seed)])?;
    let best = run.outcome.best_record();
    let artifacts = dir.finish(
        "train",
        cfg,
        &problem.input_hash,
        serde_json::json!({
            "iterations": run.outcome.iterations,
            "converged": run.outcome.converged,
            "test_rmse": run.test_rmse,
            "effective_rank": run.effective_rank,
            "best_iteration": run.outcome.best_iteration,
            "best_val_rmse": best.val_rmse,
            "best_test_rmse": best.test_rmse,
        }),
    )?;
    Ok((run, artifacts))
}

/// `eval`: scores a saved model against the configured test set.
pub fn eval_command(cfg: &ExperimentConfig, model_path: &Path, out: &Path) -> Result<Artifacts> {
    let problem = load_problem(&cfg.data, cfg.seed)?;
    let model = FactorModel::read_from(fs::File::open(model_path)?)?;
    if model.shape() != problem.train.shape() {
        return Err(Error::ShapeMismatch(format!(
            "model is {:?}, data {:?}",
            model.shape(),
            problem.train.shape()
        )));
    }
    let test = problem
        .test
        .as_ref()
        .ok_or_else(|| Error::Config("eval needs a test set".into()))?;
    let x = model.product_matrix();
    let r = rmse(&x.view(), &test.values().view(), &test.mask().view())?;
    let train_r = rmse(&x.view(), &problem.train.values().view(), &problem.train.mask().view())?;
    let mut dir = OutDir::new(out)?;
    let row = |scheme: &str, v: f64| MetricRow {
        run_id: cfg.name.clone(),
        scheme: scheme.into(),
        fold: 0,
        seed: cfg.seed,
        auc: None,
        aupr: None,
        rmse: Some(v),
    };
    dir.write_metrics(&[row("train", train_r), row("holdout", r)])?;
    let model_hash = git_blob_hash(&fs::read(model_path)?);
    dir.finish(
        "eval",
        cfg,
        &problem.input_hash,
        serde_json::json!({ "model_hash": model_hash, "effective_rank": effective_rank(&x.view())? }),
    )
}

fn run_cells<C: Sync>(
    cells: &[C],
    run: impl Fn(&C) -> Result<RunResult> + Sync + Send,
) -> Result<Vec<RunResult>> {
    cells.par_iter().map(run).collect()
}

fn axis<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

/// Sweep cells in row-major order over `(init_scale, mu, rho, p_max)`.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let s = &cfg.sweep;
    let mut cells = Vec::new();
    for &alpha in &axis(&s.init_scale, cfg.train.init_scale) {
        for &mu in &axis(&s.mu, cfg.train.weights.mu_r) {
            for &rho in &axis(&s.rho, cfg.train.weights.rho_r) {
                for &p in &axis(&s.p_max, cfg.model.p_max) {
                    let mut c = cfg.clone();
                    c.train.init_scale = alpha;
                    if !s.mu.is_empty() {
                        c.train.weights.mu_r = mu;
                        c.train.weights.mu_c = mu;
                    }
                    if !s.rho.is_empty() {
                        c.train.weights.rho_r = rho;
                        c.train.weights.rho_c = rho;
                    }
                    if !s.p_max.is_empty() {
                        c.model.p_max = p;
                        c.model.q_max = p;
                    }
                    let id = format!("{}/alpha={alpha}/mu={mu}/rho={rho}/p_max={p}", cfg.name);
                    cells.push((id, c));
                }
            }
        }
    }
    cells
}

/// `sweep`: one holdout metric row per grid cell.
pub fn sweep_command(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricRow>> {
    let problem = load_problem(&cfg.data, cfg.seed)?;
    let cells = sweep_cells(cfg);
    let runs = run_cells(&cells, |(id, c)| run_training(c, &problem, id))?;
    let rows: Vec<MetricRow> = runs.iter().map(|r| r.metric_row("holdout", cfg.seed)).collect();
    write_grid(cfg, out, "sweep", &problem, &rows, &runs)?;
    Ok(rows)
}

/// `cold-start`: training ratings thinned for the `n_c` sparsest users.
pub fn cold_start_command(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricRow>> {
    let problem = load_problem(&cfg.data, cfg.seed)?;
    let grid: Vec<(usize, usize)> = cfg
        .cold_start
        .n_c
        .iter()
        .flat_map(|&c| cfg.cold_start.n_r.iter().map(move |&r| (c, r)))
        .collect();
    let runs = run_cells(&grid, |&(n_c, n_r)| {
        let train = cold_start_subset(&problem.train, n_c, n_r, stream_seed(cfg.seed, "cold-start"))?;
        let p = Problem {
            train,
            ..problem.clone()
        };
        run_training(cfg, &p, &format!("{}/n_c={n_c}/n_r={n_r}", cfg.name))
    })?;
    let rows: Vec<MetricRow> = runs.iter().map(|r| r.metric_row("holdout", cfg.seed)).collect();
    write_grid(cfg, out, "cold-start", &problem, &rows, &runs)?;
    Ok(rows)
}

/// Both graphs perturbed with noise `level · w̄`.
pub fn noisy_problem(problem: &Problem, level: f64, seed: u64) -> Result<Problem> {
    let rg = perturb_graph(&problem.row_graph, level * problem.row_graph.mean_edge_weight(), stream_seed(seed, "row-noise"))?;
    let cg = perturb_graph(&problem.col_graph, level * problem.col_graph.mean_edge_weight(), stream_seed(seed, "col-noise"))?;
    problem.with_graphs(rg, cg)
}

/// `noisy-graph`: one run per adjacency noise level.
pub fn noisy_graph_command(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricRow>> {
    let problem = load_problem(&cfg.data, cfg.seed)?;
    let runs = run_cells(&cfg.noisy_graph.levels, |&level| {
        let p = noisy_problem(&problem, level, cfg.seed)?;
        run_training(cfg, &p, &format!("{}/noise={level}", cfg.name))
    })?;
    let rows: Vec<MetricRow> = runs.iter().map(|r| r.metric_row("holdout", cfg.seed)).collect();
    write_grid(cfg, out, "noisy-graph", &problem, &rows, &runs)?;
    Ok(rows)
}

fn write_grid(cfg: &ExperimentConfig, out: &Path, command: &str, problem: &Problem, rows: &[MetricRow], runs: &[RunResult]) -> Result<Artifacts> {
    let mut dir = OutDir::new(out)?;
    dir.write_metrics(rows)?;
    let summary: Vec<serde_json::Value> = runs
        .iter()
        .map(|r| {
            serde_json::json!({
                "run_id": r.run_id,
                "iterations": r.outcome.iterations,
                "converged": r.outcome.converged,
                "test_rmse": r.test_rmse,
                "effective_rank": r.effective_rank,
            })
        })
        .collect();
    dir.finish(command, cfg, &problem.input_hash, serde_json::Value::Array(summary))
}

/// One fold of the drug–target protocol: train on the interaction matrix
/// restricted to `train_mask`, score the held-out entries.
pub fn dti_fold(
    cfg: &ExperimentConfig,
    problem: &Problem,
    scheme: CvScheme,
    fold: usize,
    seed: u64,
    masks: &(Array2<f64>, Array2<f64>),
) -> Result<MetricRow> {
    let labels = problem.train.values();
    let train_mask = &masks.0 * problem.train.mask();
    let test_mask = &masks.1 * problem.train.mask();
    let p = Problem {
        train: problem.train.with_mask(train_mask)?,
        test: None,
        ..problem.clone()
    };
    let mut c = cfg.clone();
    c.seed = seed + fold as u64;
    let run = run_training(&c, &p, &format!("{}/{scheme}/seed={seed}/fold={fold}", cfg.name))?;
    let x = run.outcome.model.product_matrix();
    let scores = masked_scores(&x.view(), &labels.view(), &test_mask.view());
    let score_or_none = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateLabels(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(MetricRow {
        run_id: run.run_id,
        scheme: scheme.to_string(),
        fold,
        seed,
        auc: score_or_none(auc(&scores))?,
        aupr: score_or_none(aupr(&scores))?,
        rmse: Some(rmse(&x.view(), &labels.view(), &test_mask.view())?),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `dti-cv`: seeds × folds × schemes over a fully observed interaction
/// matrix given as `data`.
pub fn dti_cv_command(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricRow>> {
    let problem = load_problem(&cfg.data, cfg.seed)?;
    let shape = problem.train.shape();
    let mut jobs = Vec::new();
    for &scheme in &cfg.dti.schemes {
        for &seed in &cfg.dti.seeds {
            let splits = dti_splits(shape, scheme, cfg.dti.folds, stream_seed(seed, &format!("dti-{scheme}")))?;
            for (fold, masks) in splits.into_iter().enumerate() {
                jobs.push((scheme, seed, fold, masks));
            }
        }
    }
    let rows: Vec<MetricRow> = jobs
        .par_iter()
        .map(|(scheme, seed, fold, masks)| dti_fold(cfg, &problem, *scheme, *fold, *seed, masks))
        .collect::<Result<_>>()?;
    let mut summary = serde_json::Map::new();
    for scheme in &cfg.dti.schemes {
        let of = |f: fn(&MetricRow) -> Option<f64>| -> Vec<f64> {
            rows.iter().filter(|r| r.scheme == scheme.to_string()).filter_map(f).collect()
        };
        let stat = |v: Vec<f64>| {
            let (m, s) = mean_std(&v);
            serde_json::json!({ "mean": m, "std": s, "n": v.len() })
        };
        summary.insert(
            scheme.to_string(),
            serde_json::json!({
                "auc": stat(of(|r| r.auc)),
                "aupr": stat(of(|r| r.aupr)),
                "rmse": stat(of(|r| r.rmse)),
            }),
        );
    }
    let mut dir = OutDir::new(out)?;
    dir.write_metrics(&rows)?;
    dir.finish("dti-cv", cfg, &problem.input_hash, serde_json::Value::Object(summary))?;
    Ok(rows)
}

/// Calibrated community-benchmark configs for each variant.
pub fn synthetic_netflix(variant: Variant) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: format!("netflix-{}", variant.name()),
        ..Default::default()
    };
    let (m, t) = (&mut cfg.model, &mut cfg.train);
    m.variant = variant;
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    match variant {
        Variant::Dmf => {
            (m.p_max, m.q_max) = (200, 200);
            m.trainable = names(&["P", "C", "Q"]);
            t.learning_rate = 0.05;
            t.init_scale = 0.01;
            t.min_iters = 10_000;
        }
        Variant::Fm => {
            (m.p_max, m.q_max) = (200, 200);
            m.trainable = names(&["C"]);
            t.learning_rate = 5e-3;
            (t.weights.mu_r, t.weights.mu_c) = (0.4, 0.4);
        }
        Variant::Sgmc => {
            (m.p_max, m.q_max) = (20, 20);
            m.trainable = names(&["P", "C"]);
            t.learning_rate = 5e-3;
            (t.weights.mu_r, t.weights.mu_c) = (0.001, 0.001);
            t.weights.rho_r = 0.1;
        }
        Variant::SgmcZ => {
            (m.p_max, m.q_max) = (500, 500);
            (m.p_skip, m.q_skip) = (3, 1);
            m.trainable = names(&["P", "C"]);
            t.learning_rate = 2e-6;
            (t.weights.mu_r, t.weights.mu_c) = (0.4, 0.4);
            (t.weights.rho_r, t.weights.rho_c) = (0.1, 0.1);
        }
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
name = "tiny"
seed = 3
[data]
kind = "community"
rows = 12
cols = 10
rank = 2
density = 0.5
row_communities = 2
col_communities = 2
[model]
variant = "sgmc"
p_max = 4
q_max = 4
trainable = ["P", "C"]
[train]
learning_rate = 1e-2
max_iters = 200
eval_every = 50
mu_r = 0.001
"#,
            &[],
        )
        .unwrap()
    }

    #[test]
    fn parses_nested_config() {
        let cfg = tiny();
        assert_eq!(cfg.model.p_max, 4);
        assert_eq!(cfg.train.weights.mu_r, 0.001);
        match &cfg.data {
            DataConfig::Community(b) => assert_eq!((b.rows, b.cols), (12, 10)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in ["bogus = 1", "[train]\nlerning_rate = 1.0", "[data]\nkind = \"community\"\nrowz = 3"] {
            let err = ExperimentConfig::from_toml_str(bad, &[]).unwrap_err();
            assert_eq!(err.category(), "config", "{bad}");
        }
    }

    #[test]
    fn negative_learning_rate_is_a_config_error() {
        let err = ExperimentConfig::from_toml_str("[train]\nlearning_rate = -1.0", &[]).unwrap_err();
        assert_eq!(err.category(), "config");
        assert_ne!(err.exit_code(), 0);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = ExperimentConfig::from_toml_str(
            "",
            &[
                "train.learning_rate=0.25".into(),
                "model.variant=dmf".into(),
                "model.trainable=[\"C\"]".into(),
                "name=abc".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.learning_rate, 0.25);
        assert_eq!(cfg.model.variant, Variant::Dmf);
        assert_eq!(cfg.model.trainable, vec!["C".to_string()]);
        assert_eq!(cfg.name, "abc");
        assert!(ExperimentConfig::from_toml_str("", &["novalue".into()]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        for v in [Variant::Dmf, Variant::Fm, Variant::Sgmc, Variant::SgmcZ] {
            let cfg = synthetic_netflix(v);
            let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap(), &[]).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn sweep_grid_is_row_major() {
        let mut cfg = tiny();
        cfg.sweep.init_scale = vec![0.1, 1.0];
        cfg.sweep.p_max = vec![2, 3, 4];
        let cells = sweep_cells(&cfg);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[1].1.model.q_max, 3);
        assert_eq!(cells[3].1.train.init_scale, 1.0);
        assert_eq!(cells[0].1.train.weights.mu_r, 0.001);
    }

    #[test]
    fn train_writes_artifacts_deterministically() {
        let cfg = tiny();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (_, art_a) = train_command(&cfg, a.path()).unwrap();
        let (_, art_b) = train_command(&cfg, b.path()).unwrap();
        for f in ["trace.csv", "metrics.csv", "model.bin", "manifest.json"] {
            assert!(a.path().join(f).exists(), "{f}");
        }
        assert_eq!(art_a.files, art_b.files);
        let metrics = fs::read_to_string(a.path().join("metrics.csv")).unwrap();
        assert!(metrics.starts_with("run_id,scheme,fold,seed,auc,aupr,rmse\n"));

        let e = tempfile::tempdir().unwrap();
        eval_command(&cfg, &a.path().join("model.bin"), e.path()).unwrap();
        let eval = fs::read_to_string(e.path().join("metrics.csv")).unwrap();
        let holdout_train = metrics.lines().nth(1).unwrap().rsplit(',').next().unwrap().to_string();
        let holdout_eval = eval.lines().nth(2).unwrap().rsplit(',').next().unwrap().to_string();
        assert_eq!(holdout_train, holdout_eval);
    }

    #[test]
    fn manifest_reproduces_run() {
        let cfg = tiny();
        let a = tempfile::tempdir().unwrap();
        train_command(&cfg, a.path()).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
        let replay = ExperimentConfig::from_toml_str(manifest["config_toml"].as_str().unwrap(), &[]).unwrap();
        let b = tempfile::tempdir().unwrap();
        train_command(&replay, b.path()).unwrap();
        assert_eq!(
            fs::read(a.path().join("metrics.csv")).unwrap(),
            fs::read(b.path().join("metrics.csv")).unwrap()
        );
    }

    #[test]
    fn synth_gen_exports_reload_identically() {
        let cfg = tiny();
        let dir = tempfile::tempdir().unwrap();
        synth_gen(&cfg, dir.path()).unwrap();
        let original = load_problem(&cfg.data, cfg.seed).unwrap();
        let files = DataConfig::Files(FileData {
            ratings: dir.path().join("train.csv"),
            format: RatingFormat::DenseCsv,
            test_ratings: Some(dir.path().join("test.csv")),
            row_graph: Some(dir.path().join("row_graph.csv")),
            col_graph: Some(dir.path().join("col_graph.csv")),
            ..Default::default()
        });
        let back = load_problem(&files, 0).unwrap();
        let normalise = |m: &MaskedMatrix| m.with_mask(m.mask().clone()).unwrap().values() * m.mask();
        assert_eq!(back.train.mask(), original.train.mask());
        assert_eq!(back.train.values(), &normalise(&original.train));
        assert_eq!(back.test.unwrap().mask(), original.test.unwrap().mask());
        assert_eq!(back.row_graph, original.row_graph);
        assert_eq!(back.col_graph, original.col_graph);
        let truth = dataio::load_dense_matrix(&dir.path().join("truth.csv")).unwrap();
        assert_eq!(Some(truth), original.truth);
        let edges = dataio::load_graph(&dir.path().join("row_graph_edges.csv"), GraphFormat::EdgeList, 12).unwrap();
        assert_eq!(edges, original.row_graph);
    }

    #[test]
    fn dti_fold_scores_held_out_entries() {
        let mut labels = Array2::zeros((6, 5));
        for i in 0..6 {
            labels[[i, i % 5]] = 1.0;
        }
        let train = MaskedMatrix::fully_observed(labels.clone()).unwrap();
        let g = WeightedGraph::empty(6);
        let h = WeightedGraph::empty(5);
        let problem = Problem {
            train,
            test: None,
            row_spectrum: LaplacianSpectrum::of_graph(&g).unwrap(),
            col_spectrum: LaplacianSpectrum::of_graph(&h).unwrap(),
            row_graph: g,
            col_graph: h,
            truth: None,
            input_hash: String::new(),
        };
        let mut cfg = ExperimentConfig::default();
        cfg.model.p_max = 5;
        cfg.model.q_max = 5;
        cfg.train.max_iters = 50;
        cfg.train.val_fraction = 0.2;
        let splits = dti_splits((6, 5), CvScheme::Pairs, 3, 1).unwrap();
        let row = dti_fold(&cfg, &problem, CvScheme::Pairs, 0, 0, &splits[0]).unwrap();
        assert_eq!(row.scheme, "CVS1");
        assert!(row.rmse.unwrap().is_finite());
    }

    #[test]
    fn output_root_prefers_explicit_path() {
        assert_eq!(output_root(Some(Path::new("x"))), PathBuf::from("x"));
    }

    #[test]
    fn mean_std_of_constant() {
        assert_eq!(mean_std(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}

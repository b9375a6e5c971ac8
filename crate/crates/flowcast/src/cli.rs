//! Batch command-line front end.
//!
//! Subcommands: `synth`, `build-adj`, `train`, `predict`, `eval`, `simulate`.
//! Every run is deterministic for a fixed seed and inputs, and no command
//! leaves partial output files behind: artifacts are staged in memory,
//! written to a temp file and renamed into place only after the computation
//! has fully succeeded.
//!
//! Exit codes: 0 success, 2 input/configuration error, 3 runtime/numeric
//! error.

use crate::checkpoint::{Checkpoint, CheckpointError, PipelineEcho};
use crate::conformal::{self, ConformalError, IntervalRow, QuantileState};
use crate::data::{self, DataError};
use crate::evalsuite::{self, BaselineConfig, BaselineKind, EvalError, Forecaster, GcnForecaster};
use crate::graph::{self, GraphError, KernelMode};
use crate::microsim::{self, Corridor, IdmParams, SimConfig, SimError};
use crate::neural::{self, ModelConfig, NeuralError, RmspropConfig, TrainConfig};
use crate::chart;
use chrono::{NaiveDateTime, NaiveTime};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Errors split by exit code.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Diverged { .. } | NeuralError::NonFinite(_) => {
                CliError::Runtime(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ConformalError> for CliError {
    fn from(e: ConformalError) -> Self {
        match e {
            ConformalError::InvalidAlpha(_) => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Domain(_) | SimError::Shape(_) | SimError::EmptyWindow => {
                CliError::Input(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Neural(n) => n.into(),
            EvalError::Fit(m) => CliError::Runtime(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Full run configuration: a JSON file sets any subset of these fields, and
/// command-line flags override the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub quiet: bool,

    pub counts: Option<PathBuf>,
    pub stations: Option<PathBuf>,
    pub travel_times: Option<PathBuf>,

    pub kernel: KernelMode,
    pub sigma2: f64,
    pub epsilon: f64,

    pub look_back: usize,
    pub horizon: usize,
    pub gcn_dims: Vec<usize>,
    pub lstm_hidden: Vec<usize>,

    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub alpha: f64,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,

    pub synth_stations: usize,
    pub synth_days: usize,
    pub synth_noise: f64,

    pub checkpoint: Option<PathBuf>,
    pub intervals: Option<PathBuf>,
    pub models: Vec<String>,
    pub ar_order: usize,
    pub fnn_hidden: usize,

    pub corridor_length_m: f64,
    pub speed_limit_mps: f64,
    pub sim_dt: f64,
    pub runs: usize,
    pub demand_veh_per_hour: Option<f64>,
    pub window_start: String,
    pub window_end: String,
    pub idm_accel_max: f64,
    pub idm_decel_comfort: f64,
    pub idm_t_headway: f64,
    pub idm_min_gap: f64,
    pub idm_vehicle_length: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out: PathBuf::from("out"),
            quiet: false,
            counts: None,
            stations: None,
            travel_times: None,
            kernel: KernelMode::Gaussian,
            sigma2: graph::DEFAULT_SIGMA2,
            epsilon: graph::DEFAULT_EPSILON,
            look_back: 96,
            horizon: 1,
            gcn_dims: vec![8],
            lstm_hidden: vec![32],
            epochs: 200,
            batch_size: 32,
            patience: 10,
            min_delta: 1e-5,
            learning_rate: 0.0002,
            rms_decay: 0.9,
            rms_eps: 1e-8,
            alpha: 0.1,
            train_frac: 0.7,
            val_frac: 0.15,
            test_frac: 0.15,
            synth_stations: 6,
            synth_days: 30,
            synth_noise: 16.0,
            checkpoint: None,
            intervals: None,
            models: vec!["proposed".into(), "lstm".into(), "fnn".into(), "ar".into(), "ha".into()],
            ar_order: 8,
            fnn_hidden: 64,
            corridor_length_m: 3000.0,
            speed_limit_mps: 29.0,
            sim_dt: 0.5,
            runs: 200,
            demand_veh_per_hour: None,
            window_start: "07:30".into(),
            window_end: "08:30".into(),
            idm_accel_max: 1.5,
            idm_decel_comfort: 2.0,
            idm_t_headway: 1.5,
            idm_min_gap: 2.0,
            idm_vehicle_length: 5.0,
        }
    }
}

impl RunConfig {
    fn model_config(&self, stations: usize) -> ModelConfig {
        ModelConfig {
            stations,
            look_back: self.look_back,
            horizon: self.horizon,
            gcn_dims: self.gcn_dims.clone(),
            gcn_activation: neural::Activation::Relu,
            lstm_hidden: self.lstm_hidden.clone(),
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            min_delta: self.min_delta,
            optimizer: RmspropConfig {
                learning_rate: self.learning_rate,
                decay: self.rms_decay,
                eps: self.rms_eps,
            },
            alpha: self.alpha,
            seed: self.seed,
        }
    }

    fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            ar_order: self.ar_order,
            fnn_hidden: self.fnn_hidden,
            lstm_hidden: *self.lstm_hidden.last().unwrap_or(&32),
            train: self.train_config(),
        }
    }

    fn fractions(&self) -> (f64, f64, f64) {
        (self.train_frac, self.val_frac, self.test_frac)
    }

    fn idm(&self) -> IdmParams {
        IdmParams {
            accel_max: self.idm_accel_max,
            decel_comfort: self.idm_decel_comfort,
            v_desired: self.speed_limit_mps,
            t_headway: self.idm_t_headway,
            min_gap: self.idm_min_gap,
            vehicle_length: self.idm_vehicle_length,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "flowcast",
    version,
    about = "Traffic-flow forecasting on travel-time-weighted station graphs"
)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic corridor corpus (counts, stations, travel times).
    Synth {
        #[arg(long)]
        stations: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        /// Measurement-noise std-dev, vehicles per 15 min.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Build the weighted adjacency matrix (CSV + heatmap SVG).
    BuildAdj {
        #[arg(long, value_name = "PATH")]
        stations: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        travel_times: Option<PathBuf>,
        /// gaussian | inverse-time
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Train the forecaster; writes checkpoint, report CSV and curve SVGs.
    Train {
        #[arg(long, value_name = "PATH")]
        counts: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        stations: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        travel_times: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        look_back: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Forecast the held-out test span with conformal intervals.
    Predict {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        counts: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        stations: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        travel_times: Option<PathBuf>,
    },
    /// Fit baselines and the proposed model, score them on the test split.
    Eval {
        #[arg(long, value_name = "PATH")]
        counts: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        stations: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        travel_times: Option<PathBuf>,
        /// Comma-separated: proposed,lstm,fnn,ar,ha
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Monte-Carlo corridor simulation driven by predicted upper bounds.
    Simulate {
        /// Interval CSV from `predict` (demand source).
        #[arg(long, value_name = "PATH")]
        intervals: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        /// Override the demand instead of deriving it from the intervals.
        #[arg(long)]
        demand: Option<f64>,
        #[arg(long)]
        corridor_length: Option<f64>,
        #[arg(long)]
        speed_limit: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_name = "HH:MM")]
        window_start: Option<String>,
        #[arg(long, value_name = "HH:MM")]
        window_end: Option<String>,
    },
}

/// Parse arguments, execute, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let bytes = std::fs::read(p)
                .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Input(format!("config {}: {e}", p.display())))
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if cli.quiet {
        cfg.quiet = true;
    }

    match cli.cmd {
        Cmd::Synth { stations, days, noise } => {
            if let Some(v) = stations {
                cfg.synth_stations = v;
            }
            if let Some(v) = days {
                cfg.synth_days = v;
            }
            if let Some(v) = noise {
                cfg.synth_noise = v;
            }
            cmd_synth(&cfg)
        }
        Cmd::BuildAdj { stations, travel_times, kernel, sigma2, epsilon } => {
            if stations.is_some() {
                cfg.stations = stations;
            }
            if travel_times.is_some() {
                cfg.travel_times = travel_times;
            }
            if let Some(k) = kernel {
                cfg.kernel = parse_kernel(&k)?;
            }
            if let Some(v) = sigma2 {
                cfg.sigma2 = v;
            }
            if let Some(v) = epsilon {
                cfg.epsilon = v;
            }
            cmd_build_adj(&cfg)
        }
        Cmd::Train {
            counts,
            stations,
            travel_times,
            epochs,
            batch_size,
            patience,
            look_back,
            horizon,
            learning_rate,
            alpha,
        } => {
            if counts.is_some() {
                cfg.counts = counts;
            }
            if stations.is_some() {
                cfg.stations = stations;
            }
            if travel_times.is_some() {
                cfg.travel_times = travel_times;
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = patience {
                cfg.patience = v;
            }
            if let Some(v) = look_back {
                cfg.look_back = v;
            }
            if let Some(v) = horizon {
                cfg.horizon = v;
            }
            if let Some(v) = learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = alpha {
                cfg.alpha = v;
            }
            cmd_train(&cfg)
        }
        Cmd::Predict { checkpoint, counts, stations, travel_times } => {
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            if counts.is_some() {
                cfg.counts = counts;
            }
            if stations.is_some() {
                cfg.stations = stations;
            }
            if travel_times.is_some() {
                cfg.travel_times = travel_times;
            }
            cmd_predict(&cfg)
        }
        Cmd::Eval { counts, stations, travel_times, models, epochs } => {
            if counts.is_some() {
                cfg.counts = counts;
            }
            if stations.is_some() {
                cfg.stations = stations;
            }
            if travel_times.is_some() {
                cfg.travel_times = travel_times;
            }
            if let Some(m) = models {
                cfg.models = m;
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            cmd_eval(&cfg)
        }
        Cmd::Simulate {
            intervals,
            runs,
            demand,
            corridor_length,
            speed_limit,
            dt,
            window_start,
            window_end,
        } => {
            if intervals.is_some() {
                cfg.intervals = intervals;
            }
            if let Some(v) = runs {
                cfg.runs = v;
            }
            if demand.is_some() {
                cfg.demand_veh_per_hour = demand;
            }
            if let Some(v) = corridor_length {
                cfg.corridor_length_m = v;
            }
            if let Some(v) = speed_limit {
                cfg.speed_limit_mps = v;
            }
            if let Some(v) = dt {
                cfg.sim_dt = v;
            }
            if let Some(v) = window_start {
                cfg.window_start = v;
            }
            if let Some(v) = window_end {
                cfg.window_end = v;
            }
            cmd_simulate(&cfg)
        }
    }
}

fn parse_kernel(s: &str) -> CliResult<KernelMode> {
    match s.to_ascii_lowercase().as_str() {
        "gaussian" => Ok(KernelMode::Gaussian),
        "inverse-time" | "inverse_time" | "inversetime" => Ok(KernelMode::InverseTime),
        other => Err(CliError::Input(format!(
            "unknown kernel {other:?} (expected gaussian or inverse-time)"
        ))),
    }
}

fn parse_clock(s: &str) -> CliResult<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map_err(|_| CliError::Input(format!("bad clock time {s:?} (expected HH:MM)")))
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Input(format!("missing {what} (set the flag or config field)")))
}

fn say(cfg: &RunConfig, msg: impl AsRef<str>) {
    if !cfg.quiet {
        println!("{}", msg.as_ref());
    }
}

/// Staged output files, committed only after full success.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    /// Write-to-temp then rename, so failures never leave partial artifacts.
    fn commit(self, cfg: &RunConfig) -> CliResult<()> {
        std::fs::create_dir_all(&cfg.out)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", cfg.out.display())))?;
        for (name, bytes) in &self.files {
            let path = cfg.out.join(name);
            let tmp = cfg.out.join(format!("{name}.tmp~"));
            std::fs::write(&tmp, bytes)
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", tmp.display())))?;
            std::fs::rename(&tmp, &path)
                .map_err(|e| CliError::Input(format!("cannot rename {}: {e}", path.display())))?;
            say(cfg, format!("wrote {}", path.display()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(cfg: &RunConfig) -> CliResult<()> {
    let opt = data::SynthOptions { noise_std: cfg.synth_noise, ..data::SynthOptions::default() };
    let corpus = data::synth_corpus_with(cfg.synth_stations, cfg.synth_days, cfg.seed, &opt)?;
    let ids: Vec<String> = corpus.meta.iter().map(|m| m.station_id.clone()).collect();
    let mut outputs = Outputs::new();
    outputs.add("counts.csv", data::counts_csv(&corpus.frame));
    outputs.add("stations.csv", data::stations_csv(&corpus.meta));
    outputs.add("travel_times.csv", data::travel_times_csv(&ids, &corpus.travel_seconds));
    say(
        cfg,
        format!(
            "synthetic corpus: {} stations x {} days, seed {}",
            cfg.synth_stations, cfg.synth_days, cfg.seed
        ),
    );
    outputs.commit(cfg)
}

// ---------------------------------------------------------------------------
// build-adj
// ---------------------------------------------------------------------------

struct GraphInputs {
    ids: Vec<String>,
    adj: graph::WeightedAdjacency,
}

fn build_graph(cfg: &RunConfig) -> CliResult<GraphInputs> {
    let stations_path = require(&cfg.stations, "--stations")?;
    let tt_path = require(&cfg.travel_times, "--travel-times")?;
    let meta = data::load_stations(stations_path)?;
    let ids: Vec<String> = meta.iter().map(|m| m.station_id.clone()).collect();
    let avail = graph::availability_scores(&meta)?;
    let t = graph::load_travel_times(tt_path, &ids)?;
    let adj = graph::build_adjacency(&t, &avail, cfg.kernel, cfg.sigma2, cfg.epsilon)?;
    Ok(GraphInputs { ids, adj })
}

fn cmd_build_adj(cfg: &RunConfig) -> CliResult<()> {
    let g = build_graph(cfg)?;
    let mut outputs = Outputs::new();
    outputs.add("adjacency.csv", graph::adjacency_csv(&g.adj, &g.ids));
    outputs.add(
        "adjacency_heatmap.svg",
        chart::heatmap("Weighted adjacency (availability-attenuated)", g.adj.matrix(), &g.ids),
    );
    say(
        cfg,
        format!(
            "adjacency: {} nodes, kernel {:?}, fingerprint {:016x}",
            g.adj.n(),
            g.adj.kernel_mode,
            g.adj.fingerprint()
        ),
    );
    outputs.commit(cfg)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct PreparedPipeline {
    graph: GraphInputs,
    splits: data::SupervisedSplits,
}

fn prepare_pipeline(cfg: &RunConfig) -> CliResult<PreparedPipeline> {
    let counts_path = require(&cfg.counts, "--counts")?;
    let stations_path = require(&cfg.stations, "--stations")?;
    let (frame, _) = data::load_counts(counts_path, stations_path)?;
    let graph = build_graph(cfg)?;
    let splits = data::prepare_supervised(&frame, cfg.look_back, cfg.horizon, cfg.fractions())?;
    Ok(PreparedPipeline { graph, splits })
}

fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let p = prepare_pipeline(cfg)?;
    let stations = p.graph.ids.len();
    let model_cfg = cfg.model_config(stations);
    let train_cfg = cfg.train_config();
    say(
        cfg,
        format!(
            "training: {} train / {} val / {} test samples, {stations} stations, seed {}",
            p.splits.train.len(),
            p.splits.val.len(),
            p.splits.test.len(),
            cfg.seed
        ),
    );
    let (params, report, q_state) =
        neural::train(&p.splits.train, &p.splits.val, &p.graph.adj, &model_cfg, &train_cfg)?;

    let ck = Checkpoint {
        params,
        echo: PipelineEcho {
            model: model_cfg,
            train: train_cfg,
            fractions: [cfg.train_frac, cfg.val_frac, cfg.test_frac],
            kernel: cfg.kernel,
            sigma2: cfg.sigma2,
            epsilon: cfg.epsilon,
        },
        norm: p.splits.norm.clone(),
        station_ids: p.graph.ids.clone(),
        adjacency_fingerprint: p.graph.adj.fingerprint(),
        alpha: cfg.alpha,
        q_adjusted: q_state.q_adjusted(),
        seed: cfg.seed,
    };

    let mut outputs = Outputs::new();
    outputs.add("checkpoint.bin", ck.to_bytes()?);
    outputs.add("train_report.csv", report.to_csv());
    outputs.add(
        "loss_curve.svg",
        chart::line_chart(
            "Loss versus epochs",
            "epoch",
            "MSE (normalized)",
            &[
                chart::Series::new("train", report.train_loss.clone()),
                chart::Series::new("validation", report.val_loss.clone()),
            ],
            None,
        ),
    );
    outputs.add(
        "mae_curve.svg",
        chart::line_chart(
            "Validation MAE versus epochs",
            "epoch",
            "MAE (normalized)",
            &[chart::Series::new("validation", report.val_mae.clone())],
            None,
        ),
    );
    say(
        cfg,
        format!(
            "finished: {} epochs (best {}), final val loss {:.6}, val MAE {:.6}, q_adjusted {:.6}",
            report.epochs_run(),
            report.best_epoch,
            report.val_loss.last().copied().unwrap_or(f64::NAN),
            report.val_mae.last().copied().unwrap_or(f64::NAN),
            q_state.q_adjusted().unwrap_or(f64::NAN),
        ),
    );
    outputs.commit(cfg)
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

fn cmd_predict(cfg: &RunConfig) -> CliResult<()> {
    let ck_path = cfg
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("checkpoint.bin"));
    let ck = Checkpoint::load(&ck_path)?;
    let counts_path = require(&cfg.counts, "--counts")?;
    let stations_path = require(&cfg.stations, "--stations")?;
    let tt_path = require(&cfg.travel_times, "--travel-times")?;

    let (frame, meta) = data::load_counts(counts_path, stations_path)?;
    let ids: Vec<String> = meta.iter().map(|m| m.station_id.clone()).collect();
    if ids != ck.station_ids {
        return Err(CliError::Input(format!(
            "station list differs from the checkpoint ({} vs {} stations)",
            ids.len(),
            ck.station_ids.len()
        )));
    }
    let avail = graph::availability_scores(&meta)?;
    let t = graph::load_travel_times(tt_path, &ids)?;
    let adj = graph::build_adjacency(&t, &avail, ck.echo.kernel, ck.echo.sigma2, ck.echo.epsilon)?;
    if adj.fingerprint() != ck.adjacency_fingerprint {
        return Err(CliError::Input(
            "adjacency built from these inputs differs from the one the model was trained on"
                .into(),
        ));
    }

    // Reproduce the training-time pipeline with the stored scaling.
    let normalized = ck.norm.apply(&frame);
    let ds = data::window(&normalized, ck.echo.model.look_back, ck.echo.model.horizon)?;
    let (f0, f1, f2) = (ck.echo.fractions[0], ck.echo.fractions[1], ck.echo.fractions[2]);
    let (_, _, test) = data::split(&ds, (f0, f1, f2))?;

    let q = ck
        .q_adjusted
        .ok_or_else(|| CliError::Input("checkpoint carries no conformal quantile".into()))?;
    let q_state = QuantileState::with_saved_quantile(ck.alpha, q)?;

    let a_hat = adj.row_normalized();
    let pred = neural::predict(
        &ck.params,
        &ck.echo.model,
        &a_hat,
        &test.inputs.view(),
        ck.echo.train.batch_size,
    )?;
    let batch = conformal::intervals(&pred, &q_state)?;
    let picp = conformal::picp(&batch, &test.targets)?;
    let mpiw = conformal::mpiw(&batch)?;

    let mut rows = Vec::new();
    let mut negative_lower = 0usize;
    for i in 0..test.len() {
        for k in 0..test.horizon {
            let ts = test.target_timestamp(i, k);
            for s in 0..test.n_stations() {
                let covered =
                    batch.lower[[i, k, s]] <= test.targets[[i, k, s]]
                        && test.targets[[i, k, s]] <= batch.upper[[i, k, s]];
                let lower_v = ck.norm.denormalize_value(s, batch.lower[[i, k, s]]);
                if lower_v < 0.0 {
                    negative_lower += 1;
                }
                rows.push(IntervalRow {
                    sample: i,
                    station: ids[s].clone(),
                    t: ts,
                    forecast: ck.norm.denormalize_value(s, pred[[i, k, s]]),
                    lower: lower_v,
                    upper: ck.norm.denormalize_value(s, batch.upper[[i, k, s]]),
                    actual: ck.norm.denormalize_value(s, test.targets[[i, k, s]]),
                    covered,
                });
            }
        }
    }

    // Bounds chart for the first station over the test span.
    let span = test.len().min(288);
    let station = 0usize;
    let actual: Vec<f64> =
        (0..span).map(|i| ck.norm.denormalize_value(station, test.targets[[i, 0, station]])).collect();
    let forecast: Vec<f64> =
        (0..span).map(|i| ck.norm.denormalize_value(station, pred[[i, 0, station]])).collect();
    let band = chart::Band {
        label: format!("{:.0}% interval", (1.0 - ck.alpha) * 100.0),
        lower: (0..span)
            .map(|i| ck.norm.denormalize_value(station, batch.lower[[i, 0, station]]))
            .collect(),
        upper: (0..span)
            .map(|i| ck.norm.denormalize_value(station, batch.upper[[i, 0, station]]))
            .collect(),
    };
    let svg = chart::line_chart(
        &format!("Forecast with uncertainty bounds — {}", ids[station]),
        "test sample (15-min steps)",
        "vehicles / 15 min",
        &[chart::Series::new("actual", actual), chart::Series::new("forecast", forecast)],
        Some(&band),
    );

    let mut outputs = Outputs::new();
    outputs.add("intervals.csv", conformal::intervals_csv(&rows));
    outputs.add("bounds_chart.svg", svg);
    println!("PICP {picp:.4} (target {:.2}), MPIW {mpiw:.6} (normalized units)", 1.0 - ck.alpha);
    if negative_lower > 0 {
        say(
            cfg,
            format!(
                "note: {negative_lower} lower bounds are negative in vehicle units; reported as-is (flows cannot be negative, clip downstream for display)"
            ),
        );
    }
    outputs.commit(cfg)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(cfg: &RunConfig) -> CliResult<()> {
    let p = prepare_pipeline(cfg)?;
    let stations = p.graph.ids.len();
    let splits = &p.splits;
    let baseline_cfg = cfg.baseline_config();

    // Fit everything first, keeping ownership alive for the comparison pass.
    let mut fitted: Vec<(String, Box<dyn Forecaster>)> = Vec::new();
    for name in &cfg.models {
        say(cfg, format!("fitting {name}"));
        match name.to_ascii_lowercase().as_str() {
            "proposed" | "gcn" => {
                let model_cfg = cfg.model_config(stations);
                let (params, _, _) =
                    neural::train(&splits.train, &splits.val, &p.graph.adj, &model_cfg, &cfg.train_config())?;
                fitted.push((
                    name.clone(),
                    Box::new(GcnForecaster::new(params, model_cfg, &p.graph.adj)),
                ));
            }
            other => {
                let kind = BaselineKind::parse(other).ok_or_else(|| {
                    CliError::Input(format!(
                        "unknown model {name:?} (expected proposed, lstm, fnn, ar or ha)"
                    ))
                })?;
                let model =
                    evalsuite::fit_baseline(kind, &splits.train, &splits.val, &baseline_cfg, cfg.seed)?;
                fitted.push((name.clone(), Box::new(model)));
            }
        }
    }
    let refs: Vec<(&str, &dyn Forecaster)> =
        fitted.iter().map(|(n, m)| (n.as_str(), m.as_ref())).collect();
    let rows = evalsuite::compare(&refs, &splits.test)?;

    let fingerprint = splits.test.fingerprint();
    let mut outputs = Outputs::new();
    outputs.add("comparison.csv", evalsuite::comparison_csv(&rows, cfg.seed, fingerprint));
    say(cfg, format!("{:<12} {:>10} {:>10}", "model", "MAE", "RMSE"));
    for r in &rows {
        say(cfg, format!("{:<12} {:>10.4} {:>10.4}", r.model, r.report.mae, r.report.rmse));
    }
    outputs.commit(cfg)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn read_upper_bounds(path: &Path) -> CliResult<(Vec<NaiveDateTime>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let expect = ["sample", "station", "t", "forecast", "lower", "upper", "actual", "covered"];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(CliError::Input(format!(
            "{} does not match the interval export schema",
            path.display()
        )));
    }
    let mut times = Vec::new();
    let mut uppers = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let t = NaiveDateTime::parse_from_str(&rec[2], "%Y-%m-%dT%H:%M:%S")
            .map_err(|e| CliError::Input(format!("{}: bad timestamp {:?}: {e}", path.display(), &rec[2])))?;
        let upper: f64 = rec[5]
            .parse()
            .map_err(|_| CliError::Input(format!("{}: bad upper bound {:?}", path.display(), &rec[5])))?;
        times.push(t);
        uppers.push(upper);
    }
    Ok((times, uppers))
}

fn cmd_simulate(cfg: &RunConfig) -> CliResult<()> {
    let demand = match cfg.demand_veh_per_hour {
        Some(d) => d,
        None => {
            let intervals_path =
                cfg.intervals.clone().unwrap_or_else(|| cfg.out.join("intervals.csv"));
            let (times, uppers) = read_upper_bounds(&intervals_path)?;
            let start = parse_clock(&cfg.window_start)?;
            let end = parse_clock(&cfg.window_end)?;
            let d = microsim::demand_from_flows(&times, &uppers, start, end)?;
            say(
                cfg,
                format!(
                    "demand from upper bounds in [{}, {}): {d:.1} vehicles/hour",
                    cfg.window_start, cfg.window_end
                ),
            );
            d
        }
    };

    let corridor = Corridor { length: cfg.corridor_length_m, speed_limit: cfg.speed_limit_mps };
    let idm = cfg.idm();
    let mut sim_cfg = SimConfig::new(demand);
    sim_cfg.dt = cfg.sim_dt;
    sim_cfg.n_runs = cfg.runs;
    sim_cfg.seed = cfg.seed;
    let dist = microsim::monte_carlo(&corridor, &idm, &sim_cfg)?;

    let mut outputs = Outputs::new();
    outputs.add("travel_time_samples.csv", dist.to_csv());
    outputs.add("travel_time_summary.json", dist.summary_json());
    outputs.add(
        "travel_time_hist.svg",
        chart::histogram(
            &format!("Probe travel times over {} runs", cfg.runs),
            "travel time (minutes)",
            &dist.samples_min(),
            24,
        ),
    );
    say(
        cfg,
        format!(
            "travel time: mean {:.2} min, std {:.2}, p5 {:.2}, p50 {:.2}, p95 {:.2}, excluded {}",
            dist.mean, dist.std, dist.p5, dist.p50, dist.p95, dist.excluded_runs
        ),
    );
    outputs.commit(cfg)
}

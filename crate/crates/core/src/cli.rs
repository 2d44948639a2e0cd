//! Experiment orchestration: the experiment configuration, run manifests,
//! CSV/JSON artifact I/O, and the subcommand implementations behind the
//! thin binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{cost_report, empirical_cost, ArchDescriptor, CostReport};
use crate::burst::{
    burst_decide, compute_metrics, expand_decisions_for_plot, step_labels, train_burst,
    BurstNetParams, BurstTrainConfig, StepLabelRule,
};
use crate::error::{Error, Result};
use crate::nn::{train, Checkpoint, RecurrentKind, TrainConfig};
use crate::predict::{
    chunk_features, evaluate_stream, run_stream, trace_features, Driver, PredictionBlock,
    StreamRun, StreamingConfig,
};
use crate::sim::{label_congestion, run_simulation, CellConfig, LabelConfig, RachConfig, TraceRecord};

/// Everything one experiment needs, loadable from a single JSON file.
/// Every field has a default, so partial configs are fine.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub cell: CellConfig,
    pub rach: RachConfig,
    pub label: LabelConfig,
    pub streaming: StreamingConfig,
    pub train: TrainConfig,
    pub burst: BurstTrainConfig,
    pub kind: RecurrentKind,
    pub hidden_sizes: Vec<usize>,
    pub total_slots: u64,
    pub l_buff: usize,
    pub driver: Driver,
    /// Width of the lead-time buckets in the stream evaluation, in slots.
    pub bucket_slots: usize,
    pub burst_label_rule: StepLabelRule,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cell: CellConfig::paper_default(),
            rach: RachConfig::default(),
            label: LabelConfig::default(),
            streaming: StreamingConfig::default(),
            train: TrainConfig::default(),
            burst: BurstTrainConfig::default(),
            kind: RecurrentKind::Lstm,
            hidden_sizes: vec![64, 64],
            total_slots: 32_000,
            l_buff: 200,
            driver: Driver::Flsp,
            bucket_slots: 100,
            burst_label_rule: StepLabelRule::Any,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.streaming.validate()?;
        self.train.validate()?;
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden_sizes must be positive".into()));
        }
        if self.l_buff == 0 {
            return Err(Error::Config("l_buff must be positive".into()));
        }
        if self.bucket_slots == 0 {
            return Err(Error::Config("bucket_slots must be positive".into()));
        }
        if self.total_slots < (self.streaming.l_hist + self.streaming.l_f) as u64 {
            return Err(Error::Config(format!(
                "total_slots = {} cannot cover warm-up plus one cycle ({})",
                self.total_slots,
                self.streaming.l_hist + self.streaming.l_f
            )));
        }
        let ch = 2 * (self.streaming.l_f + self.streaming.l_p);
        if let Some(hidden) = self.burst.hidden {
            if hidden == 0 {
                return Err(Error::Config("burst hidden width must be positive".into()));
            }
        }
        // The burst net consumes one chunk per cycle; its input is fixed by
        // the streaming geometry, so reject impossible combinations early.
        if ch == 0 {
            return Err(Error::Config("chunk size must be positive".into()));
        }
        Ok(())
    }

    /// Chunk width the burst detector must accept under this geometry.
    pub fn chunk_size(&self) -> usize {
        2 * (self.streaming.l_f + self.streaming.l_p)
    }
}

/// Key-order-independent SHA-256 of a serializable value: serialized through
/// `serde_json::Value`, whose object keys are stored sorted.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Per-component seed: the run seed mixed with a stable label, so commands
/// draw from independent, reproducible substreams.
pub fn substream_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// What a command produced and from what.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub created_unix_secs: u64,
}

impl RunManifest {
    fn new(command: &str, cfg: &ExperimentConfig, artifacts: &[PathBuf]) -> Result<Self> {
        Ok(RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash(cfg)?,
            seed: cfg.seed,
            artifacts: artifacts
                .iter()
                .map(|p| p.to_string_lossy().into_owned())
                .collect(),
            created_unix_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

// ---------------------------------------------------------------------------
// Artifact formats
// ---------------------------------------------------------------------------

const TRACE_HEADER: &str = "slot,arrivals,attempts,detected,collided,dropped,congested,label";

/// Trace rows plus their per-slot congestion labels.
pub fn write_trace_csv(
    path: &Path,
    records: &[TraceRecord],
    congested: &[bool],
    expected: &[bool],
) -> Result<()> {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for (i, r) in records.iter().enumerate() {
        let c = u8::from(congested[i]);
        let e = u8::from(expected[i]);
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.slot, r.arrivals, r.attempts, r.detected, r.collided_preambles, r.dropped, c, e
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

/// A trace CSV back as records plus both label columns.
pub fn read_trace_csv(path: &Path) -> Result<(Vec<TraceRecord>, Vec<bool>, Vec<bool>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty trace file", path.display())))?;
    if header != TRACE_HEADER {
        return Err(Error::Config(format!(
            "{}: unexpected trace header {header:?}",
            path.display()
        )));
    }
    let mut records = Vec::new();
    let mut congested = Vec::new();
    let mut expected = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Config(format!(
                "{}: row {} has {} fields, expected 8",
                path.display(),
                n + 2,
                f.len()
            )));
        }
        let num = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::Config(format!("{}: bad number {s:?}", path.display())))
        };
        records.push(TraceRecord {
            slot: num(f[0])?,
            arrivals: num(f[1])?,
            attempts: num(f[2])?,
            detected: num(f[3])?,
            collided_preambles: num(f[4])?,
            dropped: num(f[5])?,
        });
        congested.push(num(f[6])? != 0);
        expected.push(num(f[7])? != 0);
    }
    Ok((records, congested, expected))
}

const PRED_HEADER: &str = "slot,pred_detected,pred_collided,lead_slots";

/// Prediction blocks flattened to one row per predicted slot. `slot` is the
/// forecast trace slot, `lead_slots` how far past the last real slot it is;
/// `slot - lead_slots` is constant within a block, so blocks survive the
/// round trip.
pub fn write_predictions_csv(path: &Path, blocks: &[PredictionBlock]) -> Result<()> {
    let mut s = String::from(PRED_HEADER);
    s.push('\n');
    for b in blocks {
        for (i, p) in b.preds.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                b.start_slot + i as u64,
                p[0],
                p[1],
                i + 1
            ));
        }
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionBlock>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty predictions file", path.display())))?;
    if header != PRED_HEADER {
        return Err(Error::Config(format!(
            "{}: unexpected predictions header {header:?}",
            path.display()
        )));
    }
    let mut blocks: Vec<PredictionBlock> = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Config(format!(
                "{}: row {} has {} fields, expected 4",
                path.display(),
                n + 2,
                f.len()
            )));
        }
        let bad = |s: &str| Error::Config(format!("{}: bad number {s:?}", path.display()));
        let slot: u64 = f[0].parse().map_err(|_| bad(f[0]))?;
        let det: f64 = f[1].parse().map_err(|_| bad(f[1]))?;
        let col: f64 = f[2].parse().map_err(|_| bad(f[2]))?;
        let lead: u64 = f[3].parse().map_err(|_| bad(f[3]))?;
        if lead == 0 || lead > slot {
            return Err(Error::Config(format!(
                "{}: row {}: invalid lead {lead} for slot {slot}",
                path.display(),
                n + 2
            )));
        }
        let start = slot - lead + 1;
        match blocks.last_mut() {
            Some(b) if b.start_slot == start && b.preds.len() as u64 == lead - 1 => {
                b.preds.push([det, col]);
            }
            _ => blocks.push(PredictionBlock {
                start_slot: start,
                preds: vec![[det, col]],
            }),
        }
    }
    Ok(blocks)
}

fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, l));
    }
    fs::write(path, s)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn ensure_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// Simulate one cell trace, label it, and write `trace.csv`.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_out(out)?;
    let sim_seed = substream_seed(cfg.seed, "simulate");
    let result = run_simulation(&cfg.cell, &cfg.rach, cfg.total_slots, sim_seed)?;
    let labels = label_congestion(&result.records, &cfg.label, cfg.rach.slot_period)?;
    let trace_path = out.join("trace.csv");
    write_trace_csv(&trace_path, &result.records, &labels.congested, &labels.expected)?;
    let summary_path = out.join("sim_summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&result.summary)?)?;
    let mut artifacts = vec![trace_path, summary_path];
    let manifest = RunManifest::new("simulate", cfg, &artifacts)?.write(out)?;
    artifacts.push(manifest);
    Ok(artifacts)
}

fn load_or_simulate_rows(
    cfg: &ExperimentConfig,
    traces: &[PathBuf],
    label: &str,
) -> Result<Vec<Vec<[f64; 2]>>> {
    if traces.is_empty() {
        let seed = substream_seed(cfg.seed, label);
        let result = run_simulation(&cfg.cell, &cfg.rach, cfg.total_slots, seed)?;
        Ok(vec![trace_features(&result.records)])
    } else {
        traces
            .iter()
            .map(|p| Ok(trace_features(&read_trace_csv(p)?.0)))
            .collect()
    }
}

/// Train the traffic predictor on the given trace CSVs (or on one freshly
/// simulated trace) and write `checkpoint.json` plus the loss history.
pub fn cmd_train(cfg: &ExperimentConfig, traces: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    ensure_out(out)?;
    let rows = load_or_simulate_rows(cfg, traces, "train-trace")?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = substream_seed(cfg.seed, "train");
    let trained = train(&rows, cfg.kind, &cfg.hidden_sizes, &train_cfg)?;
    let ckpt_path = out.join("checkpoint.json");
    Checkpoint::new(trained.model, trained.norm).save(&ckpt_path)?;
    let loss_path = out.join("loss_history.csv");
    write_loss_csv(&loss_path, &trained.loss_history)?;
    let mut artifacts = vec![ckpt_path, loss_path];
    let manifest = RunManifest::new("train", cfg, &artifacts)?.write(out)?;
    artifacts.push(manifest);
    Ok(artifacts)
}

/// Stream one trace through the configured driver.
fn drive(cfg: &ExperimentConfig, ckpt: &Checkpoint, rows: &[[f64; 2]]) -> Result<StreamRun> {
    let l_buff = match cfg.driver {
        Driver::Flsp => None,
        Driver::Rolling => Some(cfg.l_buff),
    };
    run_stream(&ckpt.model, &ckpt.norm, cfg.streaming, cfg.driver, l_buff, rows)
}

/// Run the streaming predictor over a trace and write the prediction rows
/// plus a cost report.
pub fn cmd_predict(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    trace: &Path,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    ensure_out(out)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let (records, _, _) = read_trace_csv(trace)?;
    let rows = trace_features(&records);
    let run = drive(cfg, &ckpt, &rows)?;
    let pred_path = out.join("predictions.csv");
    write_predictions_csv(&pred_path, &run.blocks)?;

    let arch = ArchDescriptor::from_model(&ckpt.model);
    let l_buff = match cfg.driver {
        Driver::Flsp => None,
        Driver::Rolling => Some(cfg.l_buff),
    };
    let cost = empirical_cost(&run, &cfg.streaming, cfg.driver, l_buff, &arch)?;
    let report = cost_report(&arch, &cfg.streaming, cfg.l_buff)?;
    let cost_path = out.join("cost_report.json");
    fs::write(
        &cost_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "closed_form": report,
            "measured": cost,
            "driver": cfg.driver,
        }))?,
    )?;
    let mut artifacts = vec![pred_path, cost_path];
    let manifest = RunManifest::new("predict", cfg, &artifacts)?.write(out)?;
    artifacts.push(manifest);
    Ok(artifacts)
}

/// Build chunk/label pairs for the burst detector from a labeled trace and
/// a streaming run over it.
fn burst_dataset(
    cfg: &ExperimentConfig,
    run: &StreamRun,
    rows: &[[f64; 2]],
    expected: &[bool],
) -> Result<Vec<(ndarray::Array1<f64>, bool)>> {
    let labels = step_labels(expected, &run.cycle_starts, cfg.streaming.l_f, cfg.burst_label_rule)?;
    Ok(run
        .blocks
        .iter()
        .zip(&run.cycle_starts)
        .zip(labels)
        .map(|((block, &start), label)| {
            let fresh = &rows[start as usize..start as usize + cfg.streaming.l_f];
            (chunk_features(fresh, block), label)
        })
        .collect())
}

/// Train the burst detector on chunks produced by streaming the trace
/// through the predictor.
pub fn cmd_train_burst(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    trace: &Path,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    ensure_out(out)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let (records, _, expected) = read_trace_csv(trace)?;
    let rows = trace_features(&records);
    let run = drive(cfg, &ckpt, &rows)?;
    let dataset = burst_dataset(cfg, &run, &rows, &expected)?;
    let mut burst_cfg = cfg.burst;
    burst_cfg.seed = substream_seed(cfg.seed, "train-burst");
    let trained = train_burst(&dataset, &burst_cfg)?;
    let ckpt_path = out.join("burst_checkpoint.json");
    fs::write(&ckpt_path, serde_json::to_string(&trained.params)?)?;
    let loss_path = out.join("burst_loss_history.csv");
    write_loss_csv(&loss_path, &trained.loss_history)?;
    let mut artifacts = vec![ckpt_path, loss_path];
    let manifest = RunManifest::new("train-burst", cfg, &artifacts)?.write(out)?;
    artifacts.push(manifest);
    Ok(artifacts)
}

/// Score predictions (and optionally burst decisions) against the realized
/// trace; write metrics JSON and plot-ready CSVs.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    predictions: &Path,
    trace: &Path,
    burst_checkpoint: Option<&Path>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    ensure_out(out)?;
    let blocks = read_predictions_csv(predictions)?;
    let (records, congested, expected) = read_trace_csv(trace)?;
    let rows = trace_features(&records);
    let stream_eval = evaluate_stream(&blocks, &rows, cfg.bucket_slots, cfg.rach.slot_period)?;

    let mut artifacts = Vec::new();
    let mut metrics = serde_json::json!({
        "stream": stream_eval,
        "config_hash": config_hash(cfg)?,
    });

    // Plot data: the realized traffic with labels, one row per slot.
    let overlay_path = out.join("traffic_overlay.csv");
    {
        let mut s = String::from("slot,detected,collided,congested,label\n");
        for (i, r) in records.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.slot,
                r.detected,
                r.collided_preambles,
                u8::from(congested[i]),
                u8::from(expected[i])
            ));
        }
        fs::write(&overlay_path, s)?;
    }
    artifacts.push(overlay_path);

    if let Some(bpath) = burst_checkpoint {
        let net: BurstNetParams = serde_json::from_str(&fs::read_to_string(bpath)?)?;
        net.validate()?;
        // Reconstruct each block's fresh window from its start slot.
        let l_f = cfg.streaming.l_f;
        let mut cycle_starts = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let start = b.start_slot as usize;
            if start <= l_f {
                return Err(Error::Config(
                    "prediction block starts before one fresh window of trace".into(),
                ));
            }
            cycle_starts.push((start - 1 - l_f) as u64);
        }
        if net.input_size() != cfg.chunk_size() {
            return Err(Error::Config(format!(
                "burst net expects {} inputs but the streaming geometry produces chunks of {}",
                net.input_size(),
                cfg.chunk_size()
            )));
        }
        let labels = step_labels(&expected, &cycle_starts, l_f, cfg.burst_label_rule)?;
        let mut probs = Vec::with_capacity(blocks.len());
        let mut decisions = Vec::with_capacity(blocks.len());
        for (b, &start) in blocks.iter().zip(&cycle_starts) {
            let fresh = &rows[start as usize..start as usize + l_f];
            let (p, d) = burst_decide(&net, &chunk_features(fresh, b))?;
            probs.push(p);
            decisions.push(d);
        }
        let m = compute_metrics(&probs, &decisions, &labels)?;
        metrics["burst"] = serde_json::to_value(m)?;

        let dec_path = out.join("decisions.csv");
        let mut s = String::from("step,probability,decision,label\n");
        for (i, ((p, d), y)) in probs.iter().zip(&decisions).zip(&labels).enumerate() {
            s.push_str(&format!("{},{},{},{}\n", i, p, u8::from(*d), u8::from(*y)));
        }
        fs::write(&dec_path, s)?;
        artifacts.push(dec_path);

        // Burst regions for overlay plots: decisions replicated l_f slots
        // and scaled to be visible against the traffic curves.
        let regions = expand_decisions_for_plot(&decisions, l_f, 20.0);
        let regions_path = out.join("burst_regions.csv");
        let mut s = String::from("slot,scaled_decision\n");
        let first = cycle_starts.first().copied().unwrap_or(0);
        for (i, v) in regions.iter().enumerate() {
            s.push_str(&format!("{},{}\n", first + i as u64, v));
        }
        fs::write(&regions_path, s)?;
        artifacts.push(regions_path);
    }

    let metrics_path = out.join("metrics.json");
    fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;
    artifacts.push(metrics_path);
    let manifest = RunManifest::new("evaluate", cfg, &artifacts)?.write(out)?;
    artifacts.push(manifest);
    Ok(artifacts)
}

/// Closed-form cost report for an architecture JSON (or, by default, the
/// configured model geometry).
pub fn cmd_flops(cfg: &ExperimentConfig, arch_path: Option<&Path>) -> Result<CostReport> {
    let arch = match arch_path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => {
            let dense_in = *cfg.hidden_sizes.last().unwrap();
            let dense = vec![(dense_in, dense_in), (2 * dense_in, 2)];
            ArchDescriptor::Recurrent {
                kind: cfg.kind,
                input: 2,
                hidden: cfg.hidden_sizes.clone(),
                dense,
            }
        }
    };
    cost_report(&arch, &cfg.streaming, cfg.l_buff)
}

/// Comparison of both drivers over the same trace and checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriverComparison {
    pub flsp_cell_evals: u64,
    pub rolling_cell_evals: u64,
    pub measured_ratio: f64,
    pub predicted_ratio: f64,
    pub flsp_mse: f64,
    pub rolling_mse: f64,
}

/// Run both drivers over one trace and report costs and accuracy.
pub fn cmd_compare_drivers(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    trace: &Path,
    out: &Path,
) -> Result<DriverComparison> {
    ensure_out(out)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let (records, _, _) = read_trace_csv(trace)?;
    let rows = trace_features(&records);
    let flsp = run_stream(&ckpt.model, &ckpt.norm, cfg.streaming, Driver::Flsp, None, &rows)?;
    let rolling = run_stream(
        &ckpt.model,
        &ckpt.norm,
        cfg.streaming,
        Driver::Rolling,
        Some(cfg.l_buff),
        &rows,
    )?;
    let f_eval = evaluate_stream(&flsp.blocks, &rows, cfg.bucket_slots, cfg.rach.slot_period)?;
    let r_eval = evaluate_stream(&rolling.blocks, &rows, cfg.bucket_slots, cfg.rach.slot_period)?;
    // Steady-state per-cycle ratio from the geometry.
    let predicted = (cfg.streaming.l_f + cfg.streaming.l_p) as f64
        / (cfg.l_buff + cfg.streaming.l_p) as f64;
    let cmp = DriverComparison {
        flsp_cell_evals: flsp.cell_evals,
        rolling_cell_evals: rolling.cell_evals,
        measured_ratio: flsp.cell_evals as f64 / rolling.cell_evals as f64,
        predicted_ratio: predicted,
        flsp_mse: f_eval.overall_mse,
        rolling_mse: r_eval.overall_mse,
    };
    fs::write(out.join("driver_comparison.json"), serde_json::to_string_pretty(&cmp)?)?;
    RunManifest::new("compare-drivers", cfg, &[out.join("driver_comparison.json")])?.write(out)?;
    Ok(cmp)
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DriverArg {
    Flsp,
    Rolling,
}

impl From<DriverArg> for Driver {
    fn from(d: DriverArg) -> Driver {
        match d {
            DriverArg::Flsp => Driver::Flsp,
            DriverArg::Rolling => Driver::Rolling,
        }
    }
}

/// Flags shared by every subcommand; each overrides the loaded config.
#[derive(Debug, Clone, Args)]
pub struct CommonOpts {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Streaming driver.
    #[arg(long, value_enum)]
    pub driver: Option<DriverArg>,
    /// Rolling-buffer length.
    #[arg(long)]
    pub lbuff: Option<usize>,
    /// Predictions per cycle.
    #[arg(long)]
    pub lp: Option<usize>,
    /// Fresh slots per cycle.
    #[arg(long)]
    pub lf: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl CommonOpts {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.driver {
            cfg.driver = d.into();
        }
        if let Some(b) = self.lbuff {
            cfg.l_buff = b;
        }
        if let Some(p) = self.lp {
            cfg.streaming.l_p = p;
        }
        if let Some(f) = self.lf {
            cfg.streaming.l_f = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "rachcast", version, about = "RACH traffic simulation, streaming prediction, and burst detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a labeled cell trace.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train the traffic predictor.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Trace CSVs to train on; simulates one when omitted.
        traces: Vec<PathBuf>,
    },
    /// Train the burst detector on streamed chunks.
    TrainBurst {
        #[command(flatten)]
        common: CommonOpts,
        /// Predictor checkpoint JSON.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled trace CSV.
        #[arg(long)]
        trace: PathBuf,
    },
    /// Stream a trace through a driver and write predictions.
    Predict {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Score predictions (and optional burst decisions) against a trace.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Burst detector checkpoint; enables detection metrics.
        #[arg(long)]
        burst_checkpoint: Option<PathBuf>,
    },
    /// Closed-form parameter/FLOP report.
    Flops {
        #[command(flatten)]
        common: CommonOpts,
        /// Architecture descriptor JSON; uses the configured geometry when
        /// omitted.
        #[arg(long)]
        arch: Option<PathBuf>,
    },
    /// Run both drivers over a trace and compare cost and accuracy.
    CompareDrivers {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
}

/// Execute a parsed command. The binary maps the error to its exit code.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = common.resolve()?;
            cmd_simulate(&cfg, &common.out)?;
        }
        Command::Train { common, traces } => {
            let cfg = common.resolve()?;
            cmd_train(&cfg, &traces, &common.out)?;
        }
        Command::TrainBurst {
            common,
            checkpoint,
            trace,
        } => {
            let cfg = common.resolve()?;
            cmd_train_burst(&cfg, &checkpoint, &trace, &common.out)?;
        }
        Command::Predict {
            common,
            checkpoint,
            trace,
        } => {
            let cfg = common.resolve()?;
            cmd_predict(&cfg, &checkpoint, &trace, &common.out)?;
        }
        Command::Evaluate {
            common,
            predictions,
            trace,
            burst_checkpoint,
        } => {
            let cfg = common.resolve()?;
            cmd_evaluate(
                &cfg,
                &predictions,
                &trace,
                burst_checkpoint.as_deref(),
                &common.out,
            )?;
        }
        Command::Flops { common, arch } => {
            let cfg = common.resolve()?;
            let report = cmd_flops(&cfg, arch.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::CompareDrivers {
            common,
            checkpoint,
            trace,
        } => {
            let cfg = common.resolve()?;
            let cmp = cmd_compare_drivers(&cfg, &checkpoint, &trace, &common.out)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
        }
    }
    Ok(())
}

/// Exit code for an error, per the documented contract: 2 for configuration
/// and I/O problems, 3 for numeric failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.total_slots = 400;
        cfg.hidden_sizes = vec![8];
        cfg.streaming.l_hist = 100;
        cfg.streaming.l_f = 20;
        cfg.streaming.l_p = 40;
        cfg.l_buff = 50;
        cfg.train.epochs = 1;
        cfg.train.window = 16;
        cfg.train.stride = 16;
        cfg.burst.hidden = Some(8);
        cfg.burst.epochs = 2;
        cfg.bucket_slots = 20;
        cfg
    }

    #[test]
    fn config_hash_is_key_order_independent() {
        let a = config_hash(&serde_json::json!({"x": 1, "y": [1, 2]})).unwrap();
        let b = config_hash(&serde_json::json!({"y": [1, 2], "x": 1})).unwrap();
        assert_eq!(a, b);
        let c = config_hash(&serde_json::json!({"x": 2, "y": [1, 2]})).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn substreams_differ_by_label_and_seed() {
        assert_ne!(substream_seed(1, "simulate"), substream_seed(1, "train"));
        assert_ne!(substream_seed(1, "simulate"), substream_seed(2, "simulate"));
        assert_eq!(substream_seed(7, "x"), substream_seed(7, "x"));
    }

    #[test]
    fn config_validation_catches_bad_geometry() {
        let mut cfg = desk_cfg();
        cfg.streaming.l_f = 100;
        cfg.streaming.l_p = 50;
        assert!(cfg.validate().is_err());
        let mut cfg = desk_cfg();
        cfg.total_slots = 50;
        assert!(cfg.validate().is_err());
        assert!(desk_cfg().validate().is_ok());
    }

    #[test]
    fn trace_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = desk_cfg();
        let arts = cmd_simulate(&cfg, dir.path()).unwrap();
        let trace = &arts[0];
        let (records, congested, expected) = read_trace_csv(trace).unwrap();
        assert_eq!(records.len(), cfg.total_slots as usize);
        assert_eq!(congested.len(), records.len());
        assert_eq!(expected.len(), records.len());
        // Re-writing reproduces the file byte for byte.
        let copy = dir.path().join("copy.csv");
        write_trace_csv(&copy, &records, &congested, &expected).unwrap();
        assert_eq!(fs::read(trace).unwrap(), fs::read(&copy).unwrap());
    }

    #[test]
    fn simulate_is_reproducible_byte_for_byte() {
        let cfg = desk_cfg();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        cmd_simulate(&cfg, d1.path()).unwrap();
        cmd_simulate(&cfg, d2.path()).unwrap();
        assert_eq!(
            fs::read(d1.path().join("trace.csv")).unwrap(),
            fs::read(d2.path().join("trace.csv")).unwrap()
        );
    }

    #[test]
    fn predictions_csv_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blocks: Vec<PredictionBlock> = (0..4)
            .map(|k| PredictionBlock {
                start_slot: 101 + k * 20,
                preds: (0..40)
                    .map(|_| [rng.random_range(0.0..54.0), rng.random_range(0.0..54.0)])
                    .collect(),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_predictions_csv(&path, &blocks).unwrap();
        let back = read_predictions_csv(&path).unwrap();
        assert_eq!(blocks, back);
    }

    #[test]
    fn full_pipeline_runs_and_reruns_identically() {
        let cfg = desk_cfg();
        let run = |dir: &Path| {
            let sim = dir.join("sim");
            cmd_simulate(&cfg, &sim).unwrap();
            let trace = sim.join("trace.csv");
            let tr = dir.join("train");
            cmd_train(&cfg, &[trace.clone()], &tr).unwrap();
            let ckpt = tr.join("checkpoint.json");
            let pr = dir.join("pred");
            cmd_predict(&cfg, &ckpt, &trace, &pr).unwrap();
            let tb = dir.join("burst");
            cmd_train_burst(&cfg, &ckpt, &trace, &tb).unwrap();
            let ev = dir.join("eval");
            cmd_evaluate(
                &cfg,
                &pr.join("predictions.csv"),
                &trace,
                Some(&tb.join("burst_checkpoint.json")),
                &ev,
            )
            .unwrap();
            (
                fs::read(trace).unwrap(),
                fs::read(pr.join("predictions.csv")).unwrap(),
                fs::read(ev.join("metrics.json")).unwrap(),
            )
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run(d1.path());
        let b = run(d2.path());
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn compare_drivers_reports_the_cost_gap() {
        let cfg = desk_cfg();
        let dir = tempfile::tempdir().unwrap();
        cmd_simulate(&cfg, dir.path()).unwrap();
        let trace = dir.path().join("trace.csv");
        cmd_train(&cfg, &[trace.clone()], dir.path()).unwrap();
        let cmp = cmd_compare_drivers(
            &cfg,
            &dir.path().join("checkpoint.json"),
            &trace,
            dir.path(),
        )
        .unwrap();
        // l_f < l_buff, so the feedback driver must be cheaper.
        assert!(cmp.flsp_cell_evals < cmp.rolling_cell_evals);
        assert!((cmp.predicted_ratio - 60.0 / 90.0).abs() < 1e-12);
    }

    #[test]
    fn flops_command_uses_config_geometry() {
        let mut cfg = desk_cfg();
        cfg.kind = RecurrentKind::Gru;
        cfg.hidden_sizes = vec![2500, 2500];
        let report = cmd_flops(&cfg, None).unwrap();
        assert_eq!(report.params, 62_557_502);
    }

    #[test]
    fn run_rejects_bad_config_with_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.json");
        fs::write(&bad, r#"{"l_buff": 0}"#).unwrap();
        let cli = Cli::parse_from([
            "rachcast",
            "simulate",
            "--config",
            bad.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        let err = run(cli).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert_eq!(exit_code(&Error::Numeric("x".into())), 3);
    }
}

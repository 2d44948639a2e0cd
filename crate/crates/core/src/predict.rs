//! Streaming prediction drivers. The feedback driver keeps the recurrent
//! state alive across cycles and only pays for fresh slots plus the
//! recursion; the rolling baseline re-warms from zero over a bounded buffer
//! every cycle. Both count model evaluations so their costs can be compared
//! exactly.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{model_forward, Checkpoint, ModelParams, Normalizer, RecurrentState};
use crate::sim::TraceRecord;

/// Geometry of the streaming loop: warm-up length, fresh slots per cycle,
/// and recursion depth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StreamingConfig {
    /// Real slots consumed during warm-up.
    pub l_hist: usize,
    /// Fresh real slots ingested per cycle.
    pub l_f: usize,
    /// Recursive predictions produced per cycle.
    pub l_p: usize,
    /// Ceiling for fed-back predictions in raw units (the preamble count:
    /// neither detected nor collided preambles can exceed it).
    pub feedback_max: f64,
    /// Permit `l_f > l_p`. Off by default: producing fewer predictions than
    /// the slots they must cover leaves part of the stream unforecast.
    pub allow_fresh_exceeding_pred: bool,
}

impl Default for StreamingConfig {
    fn default() -> Self {
        StreamingConfig {
            l_hist: 6000,
            l_f: 100,
            l_p: 200,
            feedback_max: 54.0,
            allow_fresh_exceeding_pred: false,
        }
    }
}

impl StreamingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_hist == 0 || self.l_f == 0 || self.l_p == 0 {
            return Err(Error::Config(
                "streaming lengths l_hist, l_f, l_p must all be positive".into(),
            ));
        }
        if self.l_f > self.l_p && !self.allow_fresh_exceeding_pred {
            return Err(Error::Config(format!(
                "l_f = {} exceeds l_p = {}; predictions would not cover the \
                 stream (set allow_fresh_exceeding_pred to override)",
                self.l_f, self.l_p
            )));
        }
        if !(self.feedback_max > 0.0) {
            return Err(Error::Config("feedback_max must be positive".into()));
        }
        Ok(())
    }
}

/// One cycle's forecast: `preds[i]` is the raw-unit `[detected, collided]`
/// estimate for trace slot `start_slot + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBlock {
    pub start_slot: u64,
    pub preds: Vec<[f64; 2]>,
}

/// Extract the `[detected, collided]` feature rows the predictor consumes.
pub fn trace_features(records: &[TraceRecord]) -> Vec<[f64; 2]> {
    records
        .iter()
        .map(|r| [r.detected as f64, r.collided_preambles as f64])
        .collect()
}

fn clamp_raw(raw: &Array1<f64>, max: f64) -> [f64; 2] {
    [raw[0].clamp(0.0, max), raw[1].clamp(0.0, max)]
}

/// Shared inference core: a model, its normalizer, and the recursion that
/// spins predictions out of a recurrent state without touching it.
#[derive(Debug, Clone)]
struct Engine {
    model: ModelParams,
    norm: Normalizer,
    cfg: StreamingConfig,
}

impl Engine {
    fn new(model: ModelParams, norm: Normalizer, cfg: StreamingConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        if model.input_size() != 2 || model.output_size() != 2 {
            return Err(Error::Dimension(format!(
                "streaming drivers expect a 2-in/2-out model, got {}-in/{}-out",
                model.input_size(),
                model.output_size()
            )));
        }
        Ok(Engine { model, norm, cfg })
    }

    /// Advance `state` over normalized rows; returns the final output.
    fn ingest(&self, state: &mut RecurrentState, rows: &[[f64; 2]]) -> Array1<f64> {
        let seq: Vec<Array1<f64>> = rows
            .iter()
            .map(|r| self.norm.apply(&Array1::from(vec![r[0], r[1]])))
            .collect();
        let (outs, end) = model_forward(&self.model, &seq, state);
        *state = end;
        outs.into_iter().last().expect("ingest needs at least one row")
    }

    /// Recursive forecast from a snapshot of `state`. The live state and
    /// `last_output` are left untouched; each of the `l_p` evaluations feeds
    /// the previous estimate back in, after clamping it to physical range in
    /// raw units. Returns the block and the number of evaluations (`l_p`).
    fn recurse(
        &self,
        state: &RecurrentState,
        last_output: &Array1<f64>,
        slots_seen: u64,
    ) -> (PredictionBlock, u64) {
        let mut st = state.clone();
        let mut fed = clamp_raw(&self.norm.invert(last_output), self.cfg.feedback_max);
        let mut preds = Vec::with_capacity(self.cfg.l_p);
        for _ in 0..self.cfg.l_p {
            let x = self.norm.apply(&Array1::from(vec![fed[0], fed[1]]));
            let (outs, next) = model_forward(&self.model, std::slice::from_ref(&x), &st);
            st = next;
            fed = clamp_raw(&self.norm.invert(&outs[0]), self.cfg.feedback_max);
            preds.push(fed);
        }
        (
            PredictionBlock {
                // The model maps slot t to an estimate of slot t + 1; the
                // cached output already covers `slots_seen`, so the first
                // recursive estimate lands one slot later.
                start_slot: slots_seen + 1,
                preds,
            },
            self.cfg.l_p as u64,
        )
    }
}

/// Feedback driver: warm up once, then per cycle ingest `l_f` fresh slots
/// into the live state and recurse `l_p` deep from a snapshot. Per-cycle
/// cost is exactly `l_f + l_p` model evaluations.
#[derive(Debug, Clone)]
pub struct FlspSession {
    engine: Engine,
    state: RecurrentState,
    last_output: Option<Array1<f64>>,
    slots_seen: u64,
    cell_evals: u64,
}

impl FlspSession {
    pub fn new(model: ModelParams, norm: Normalizer, cfg: StreamingConfig) -> Result<Self> {
        let engine = Engine::new(model, norm, cfg)?;
        let state = engine.model.zero_state();
        Ok(FlspSession {
            engine,
            state,
            last_output: None,
            slots_seen: 0,
            cell_evals: 0,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: StreamingConfig) -> Result<Self> {
        Self::new(ckpt.model.clone(), ckpt.norm.clone(), cfg)
    }

    /// Warm the live state over the history prefix. Costs one evaluation
    /// per slot.
    pub fn init_with_history(&mut self, history: &[[f64; 2]]) -> Result<()> {
        if history.len() != self.engine.cfg.l_hist {
            return Err(Error::Dimension(format!(
                "history has {} slots, expected l_hist = {}",
                history.len(),
                self.engine.cfg.l_hist
            )));
        }
        if self.slots_seen != 0 {
            return Err(Error::Config("session already initialized".into()));
        }
        self.last_output = Some(self.engine.ingest(&mut self.state, history));
        self.slots_seen = history.len() as u64;
        self.cell_evals += history.len() as u64;
        Ok(())
    }

    /// Forecast `l_p` slots from the current state without consuming data.
    /// Re-callable: the live state is never disturbed.
    pub fn recursive_predict(&mut self) -> Result<PredictionBlock> {
        let last = self
            .last_output
            .as_ref()
            .ok_or_else(|| Error::Config("call init_with_history first".into()))?;
        let (block, evals) = self.engine.recurse(&self.state, last, self.slots_seen);
        self.cell_evals += evals;
        Ok(block)
    }

    /// One streaming cycle: ingest exactly `l_f` fresh slots, then forecast.
    pub fn step(&mut self, fresh: &[[f64; 2]]) -> Result<PredictionBlock> {
        if self.last_output.is_none() {
            return Err(Error::Config("call init_with_history first".into()));
        }
        if fresh.len() != self.engine.cfg.l_f {
            return Err(Error::Dimension(format!(
                "fresh chunk has {} slots, expected l_f = {}",
                fresh.len(),
                self.engine.cfg.l_f
            )));
        }
        self.last_output = Some(self.engine.ingest(&mut self.state, fresh));
        self.slots_seen += fresh.len() as u64;
        self.cell_evals += fresh.len() as u64;
        self.recursive_predict()
    }

    pub fn cell_evals(&self) -> u64 {
        self.cell_evals
    }

    pub fn slots_seen(&self) -> u64 {
        self.slots_seen
    }
}

/// Rolling baseline: keeps the most recent `l_buff` real slots (unbounded if
/// `None`) and re-warms the state from zero over the whole buffer every
/// cycle before recursing. Per-cycle cost is `buffer_len + l_p` evaluations.
#[derive(Debug, Clone)]
pub struct RollingSession {
    engine: Engine,
    buffer: Vec<[f64; 2]>,
    l_buff: Option<usize>,
    slots_seen: u64,
    cell_evals: u64,
}

impl RollingSession {
    pub fn new(
        model: ModelParams,
        norm: Normalizer,
        cfg: StreamingConfig,
        l_buff: Option<usize>,
    ) -> Result<Self> {
        if l_buff == Some(0) {
            return Err(Error::Config("l_buff must be positive".into()));
        }
        let engine = Engine::new(model, norm, cfg)?;
        Ok(RollingSession {
            engine,
            buffer: Vec::new(),
            l_buff,
            slots_seen: 0,
            cell_evals: 0,
        })
    }

    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        cfg: StreamingConfig,
        l_buff: Option<usize>,
    ) -> Result<Self> {
        Self::new(ckpt.model.clone(), ckpt.norm.clone(), cfg, l_buff)
    }

    /// Seed the buffer with the history prefix. Free: the re-warm is paid on
    /// every cycle instead.
    pub fn init_with_history(&mut self, history: &[[f64; 2]]) -> Result<()> {
        if history.len() != self.engine.cfg.l_hist {
            return Err(Error::Dimension(format!(
                "history has {} slots, expected l_hist = {}",
                history.len(),
                self.engine.cfg.l_hist
            )));
        }
        if self.slots_seen != 0 {
            return Err(Error::Config("session already initialized".into()));
        }
        self.buffer.extend_from_slice(history);
        self.trim();
        self.slots_seen = history.len() as u64;
        Ok(())
    }

    fn trim(&mut self) {
        if let Some(cap) = self.l_buff {
            if self.buffer.len() > cap {
                self.buffer.drain(..self.buffer.len() - cap);
            }
        }
    }

    /// One cycle: append the fresh slots, re-warm from zero over the whole
    /// buffer, then forecast.
    pub fn step(&mut self, fresh: &[[f64; 2]]) -> Result<PredictionBlock> {
        if self.slots_seen == 0 {
            return Err(Error::Config("call init_with_history first".into()));
        }
        if fresh.len() != self.engine.cfg.l_f {
            return Err(Error::Dimension(format!(
                "fresh chunk has {} slots, expected l_f = {}",
                fresh.len(),
                self.engine.cfg.l_f
            )));
        }
        self.buffer.extend_from_slice(fresh);
        self.slots_seen += fresh.len() as u64;
        self.trim();

        let mut state = self.engine.model.zero_state();
        let last = self.engine.ingest(&mut state, &self.buffer);
        self.cell_evals += self.buffer.len() as u64;
        let (block, evals) = self.engine.recurse(&state, &last, self.slots_seen);
        self.cell_evals += evals;
        Ok(block)
    }

    pub fn cell_evals(&self) -> u64 {
        self.cell_evals
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }
}

/// Which streaming driver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Flsp,
    Rolling,
}

/// Output of a full streaming run over one trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamRun {
    pub blocks: Vec<PredictionBlock>,
    pub cell_evals: u64,
    /// Slot index of the first fresh slot of each cycle, aligned with
    /// `blocks`.
    pub cycle_starts: Vec<u64>,
}

/// Drive a full trace through the chosen driver: warm up on the first
/// `l_hist` slots, then cycle over consecutive `l_f`-slot chunks until the
/// trace is exhausted.
pub fn run_stream(
    model: &ModelParams,
    norm: &Normalizer,
    cfg: StreamingConfig,
    driver: Driver,
    l_buff: Option<usize>,
    rows: &[[f64; 2]],
) -> Result<StreamRun> {
    cfg.validate()?;
    if rows.len() < cfg.l_hist + cfg.l_f {
        return Err(Error::Dimension(format!(
            "trace has {} slots; need at least l_hist + l_f = {}",
            rows.len(),
            cfg.l_hist + cfg.l_f
        )));
    }
    enum Session {
        Flsp(FlspSession),
        Rolling(RollingSession),
    }
    let mut session = match driver {
        Driver::Flsp => Session::Flsp(FlspSession::new(model.clone(), norm.clone(), cfg)?),
        Driver::Rolling => {
            Session::Rolling(RollingSession::new(model.clone(), norm.clone(), cfg, l_buff)?)
        }
    };
    match &mut session {
        Session::Flsp(s) => s.init_with_history(&rows[..cfg.l_hist])?,
        Session::Rolling(s) => s.init_with_history(&rows[..cfg.l_hist])?,
    }
    let mut blocks = Vec::new();
    let mut cycle_starts = Vec::new();
    let mut pos = cfg.l_hist;
    while pos + cfg.l_f <= rows.len() {
        let fresh = &rows[pos..pos + cfg.l_f];
        let block = match &mut session {
            Session::Flsp(s) => s.step(fresh)?,
            Session::Rolling(s) => s.step(fresh)?,
        };
        cycle_starts.push(pos as u64);
        blocks.push(block);
        pos += cfg.l_f;
    }
    let cell_evals = match &session {
        Session::Flsp(s) => s.cell_evals(),
        Session::Rolling(s) => s.cell_evals(),
    };
    Ok(StreamRun {
        blocks,
        cell_evals,
        cycle_starts,
    })
}

/// Feature vector for one cycle, consumed by the burst detector: the fresh
/// detected series, fresh collided series, predicted detected series, then
/// predicted collided series — `2 * (l_f + l_p)` values.
pub fn chunk_features(fresh: &[[f64; 2]], block: &PredictionBlock) -> Array1<f64> {
    let mut v = Vec::with_capacity(2 * (fresh.len() + block.preds.len()));
    v.extend(fresh.iter().map(|r| r[0]));
    v.extend(fresh.iter().map(|r| r[1]));
    v.extend(block.preds.iter().map(|p| p[0]));
    v.extend(block.preds.iter().map(|p| p[1]));
    Array1::from(v)
}

/// Accuracy of one lead-time bucket: predictions `bucket_slots * k` to
/// `bucket_slots * (k + 1) - 1` slots ahead of the last real slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeadBucket {
    /// Nominal lead time: the far edge of the bucket, in seconds.
    pub lead_seconds: f64,
    pub mse: f64,
    pub count: u64,
}

/// Per-lead and overall accuracy of a streaming run against the realized
/// trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamEval {
    pub buckets: Vec<LeadBucket>,
    pub overall_mse: f64,
    pub compared: u64,
    pub skipped: u64,
}

/// Score prediction blocks against the realized rows, grouping by how far
/// ahead each prediction reaches. Predictions that run past the end of the
/// trace are skipped (counted, not scored).
pub fn evaluate_stream(
    blocks: &[PredictionBlock],
    rows: &[[f64; 2]],
    bucket_slots: usize,
    slot_period: f64,
) -> Result<StreamEval> {
    if bucket_slots == 0 {
        return Err(Error::Config("bucket_slots must be positive".into()));
    }
    let n_buckets = blocks
        .iter()
        .map(|b| b.preds.len().div_ceil(bucket_slots))
        .max()
        .unwrap_or(0);
    let mut sums = vec![0.0; n_buckets];
    let mut counts = vec![0u64; n_buckets];
    let mut skipped = 0u64;
    for block in blocks {
        for (i, p) in block.preds.iter().enumerate() {
            let slot = block.start_slot as usize + i;
            let Some(actual) = rows.get(slot) else {
                skipped += 1;
                continue;
            };
            let d0 = p[0] - actual[0];
            let d1 = p[1] - actual[1];
            let k = i / bucket_slots;
            sums[k] += d0 * d0 + d1 * d1;
            counts[k] += 1;
        }
    }
    let buckets: Vec<LeadBucket> = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(k, (s, &c))| LeadBucket {
            lead_seconds: ((k + 1) * bucket_slots) as f64 * slot_period,
            mse: if c == 0 { 0.0 } else { s / (2.0 * c as f64) },
            count: c,
        })
        .collect();
    let total: u64 = counts.iter().sum();
    let overall = if total == 0 {
        0.0
    } else {
        sums.iter().sum::<f64>() / (2.0 * total as f64)
    };
    Ok(StreamEval {
        buckets,
        overall_mse: overall,
        compared: total,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_model, RecurrentKind};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_engine(seed: u64) -> (ModelParams, Normalizer) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = build_model(RecurrentKind::Gru, 2, &[6], 2, 0.0, &mut rng);
        let norm = Normalizer {
            mean: vec![10.0, 5.0],
            std: vec![8.0, 4.0],
        };
        (model, norm)
    }

    fn toy_rows(seed: u64, n: usize) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.random_range(0.0..54.0), rng.random_range(0.0..54.0)])
            .collect()
    }

    fn toy_cfg() -> StreamingConfig {
        StreamingConfig {
            l_hist: 40,
            l_f: 10,
            l_p: 20,
            feedback_max: 54.0,
            ..StreamingConfig::default()
        }
    }

    #[test]
    fn config_rejects_fresh_exceeding_pred() {
        let cfg = StreamingConfig {
            l_f: 30,
            l_p: 20,
            ..toy_cfg()
        };
        assert!(cfg.validate().is_err());
        let cfg = StreamingConfig {
            allow_fresh_exceeding_pred: true,
            ..cfg
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn counters_follow_the_cost_law() {
        let (model, norm) = toy_engine(1);
        let cfg = toy_cfg();
        let rows = toy_rows(2, 120);

        let mut flsp = FlspSession::new(model.clone(), norm.clone(), cfg).unwrap();
        flsp.init_with_history(&rows[..40]).unwrap();
        assert_eq!(flsp.cell_evals(), 40);
        for k in 1..=5u64 {
            flsp.step(&rows[40 + (k as usize - 1) * 10..40 + k as usize * 10])
                .unwrap();
            assert_eq!(flsp.cell_evals(), 40 + k * 30);
        }

        let mut roll = RollingSession::new(model, norm, cfg, Some(45)).unwrap();
        roll.init_with_history(&rows[..40]).unwrap();
        assert_eq!(roll.cell_evals(), 0);
        roll.step(&rows[40..50]).unwrap();
        // Buffer saturates at 45 after the first step (40 + 10 trimmed).
        assert_eq!(roll.cell_evals(), 45 + 20);
        roll.step(&rows[50..60]).unwrap();
        assert_eq!(roll.cell_evals(), 2 * (45 + 20));
    }

    #[test]
    fn per_cycle_cost_ratio_matches_geometry() {
        // (l_f, l_p, l_buff) = (100, 200, 200): 300 vs 400 evals per cycle.
        let flsp = 100u64 + 200;
        let rolling = 200u64 + 200;
        assert_eq!(flsp as f64 / rolling as f64, 0.75);
    }

    #[test]
    fn predict_is_pure_and_repeatable() {
        let (model, norm) = toy_engine(3);
        let cfg = toy_cfg();
        let rows = toy_rows(4, 80);
        let mut s = FlspSession::new(model, norm, cfg).unwrap();
        s.init_with_history(&rows[..40]).unwrap();
        let a = s.recursive_predict().unwrap();
        let b = s.recursive_predict().unwrap();
        assert_eq!(a, b);
        // Interleaving extra predictions must not change the stream.
        let after = s.step(&rows[40..50]).unwrap();
        let mut fresh_session = {
            let (model, norm) = toy_engine(3);
            FlspSession::new(model, norm, cfg).unwrap()
        };
        fresh_session.init_with_history(&rows[..40]).unwrap();
        let after2 = fresh_session.step(&rows[40..50]).unwrap();
        assert_eq!(after, after2);
    }

    #[test]
    fn flsp_matches_rolling_with_unbounded_buffer_bitwise() {
        let (model, norm) = toy_engine(5);
        let cfg = toy_cfg();
        let rows = toy_rows(6, 200);
        let a = run_stream(&model, &norm, cfg, Driver::Flsp, None, &rows).unwrap();
        let b = run_stream(&model, &norm, cfg, Driver::Rolling, None, &rows).unwrap();
        assert_eq!(a.blocks.len(), b.blocks.len());
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn bounded_rolling_differs_from_unbounded_eventually() {
        let (model, norm) = toy_engine(7);
        let cfg = toy_cfg();
        let rows = toy_rows(8, 200);
        let unbounded = run_stream(&model, &norm, cfg, Driver::Rolling, None, &rows).unwrap();
        let bounded = run_stream(&model, &norm, cfg, Driver::Rolling, Some(15), &rows).unwrap();
        assert!(unbounded
            .blocks
            .iter()
            .zip(&bounded.blocks)
            .any(|(x, y)| x != y));
    }

    #[test]
    fn predictions_respect_physical_range() {
        let (model, _) = toy_engine(9);
        // A deliberately wild normalizer makes raw outputs huge before the
        // clamp.
        let norm = Normalizer {
            mean: vec![1e6, -1e6],
            std: vec![1e5, 1e5],
        };
        let cfg = toy_cfg();
        let rows = toy_rows(10, 80);
        let run = run_stream(&model, &norm, cfg, Driver::Flsp, None, &rows).unwrap();
        for block in &run.blocks {
            for p in &block.preds {
                assert!((0.0..=54.0).contains(&p[0]));
                assert!((0.0..=54.0).contains(&p[1]));
            }
        }
    }

    #[test]
    fn chunk_features_layout_and_length() {
        let fresh = vec![[1.0, 2.0], [3.0, 4.0]];
        let block = PredictionBlock {
            start_slot: 0,
            preds: vec![[5.0, 6.0], [7.0, 8.0], [9.0, 10.0]],
        };
        let v = chunk_features(&fresh, &block);
        assert_eq!(v.len(), 2 * (2 + 3));
        assert_eq!(
            v.to_vec(),
            vec![1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 9.0, 6.0, 8.0, 10.0]
        );
        // Paper-scale geometry: (l_f, l_p) = (100, 400) gives 1000 values.
        assert_eq!(2 * (100 + 400), 1000);
    }

    #[test]
    fn evaluate_stream_matches_brute_force() {
        let (model, norm) = toy_engine(11);
        let cfg = toy_cfg();
        let rows = toy_rows(12, 160);
        let run = run_stream(&model, &norm, cfg, Driver::Flsp, None, &rows).unwrap();
        let eval = evaluate_stream(&run.blocks, &rows, 5, 0.005).unwrap();

        // Brute force: every (prediction, actual) pair, bucketed by index.
        let mut sums = vec![0.0; 4];
        let mut counts = vec![0u64; 4];
        for b in &run.blocks {
            for (i, p) in b.preds.iter().enumerate() {
                if let Some(a) = rows.get(b.start_slot as usize + i) {
                    let k = i / 5;
                    sums[k] += (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2);
                    counts[k] += 1;
                }
            }
        }
        assert_eq!(eval.buckets.len(), 4);
        for k in 0..4 {
            assert_eq!(eval.buckets[k].count, counts[k]);
            let expect = sums[k] / (2.0 * counts[k] as f64);
            assert!((eval.buckets[k].mse - expect).abs() < 1e-12);
        }
        assert!((eval.buckets[0].lead_seconds - 0.025).abs() < 1e-12);
        assert!((eval.buckets[3].lead_seconds - 0.1).abs() < 1e-12);
        assert_eq!(
            eval.compared + eval.skipped,
            run.blocks.len() as u64 * cfg.l_p as u64
        );
    }

    #[test]
    fn stream_runs_are_deterministic() {
        let (model, norm) = toy_engine(13);
        let cfg = toy_cfg();
        let rows = toy_rows(14, 150);
        let a = run_stream(&model, &norm, cfg, Driver::Flsp, None, &rows).unwrap();
        let b = run_stream(&model, &norm, cfg, Driver::Flsp, None, &rows).unwrap();
        assert_eq!(a.blocks, b.blocks);
        assert_eq!(a.cell_evals, b.cell_evals);
    }
}

//! End-to-end burst detection: forecast traffic with the stateful streaming
//! driver, feed fresh-plus-predicted chunks to a small dense classifier, and
//! score congestion warnings one second ahead.

use rachcast::burst::{
    burst_decide, compute_metrics, step_labels, train_burst, BurstTrainConfig, StepLabelRule,
};
use rachcast::nn::{train, RecurrentKind, TrainConfig};
use rachcast::predict::{chunk_features, run_stream, trace_features, Driver, StreamingConfig};
use rachcast::sim::{
    label_congestion, run_simulation_with_events, CellConfig, ClusterPlan, LabelConfig,
    RachConfig, SimResult,
};

fn simulate(total_slots: u64, seed: u64) -> rachcast::Result<SimResult> {
    let cell = CellConfig::clustered_default();
    let rach = RachConfig::default();
    let secs = total_slots as f64 * rach.slot_period;
    let events = ClusterPlan::default().events(secs, seed ^ 0x5eed);
    run_simulation_with_events(&cell, &rach, events, total_slots, seed)
}

fn main() -> rachcast::Result<()> {
    let rach = RachConfig::default();
    let label_cfg = LabelConfig::default(); // 1 s warning horizon

    let train_sim = simulate(24_000, 11)?;
    let train_rows = trace_features(&train_sim.records);

    println!("training an LSTM(32) traffic predictor (stateful BPTT)...");
    let tcfg = TrainConfig {
        epochs: 40,
        window: 300,
        burn_in: 100,
        stateful: true,
        chrono_t_max: Some(600.0),
        dropout: 0.2,
        seed: 11,
        ..TrainConfig::default()
    };
    let predictor = train(&[train_rows.clone()], RecurrentKind::Lstm, &[32], &tcfg)?;

    let cfg = StreamingConfig {
        l_hist: 1000,
        l_f: 100,
        l_p: 200,
        ..StreamingConfig::default()
    };

    // Build the classifier's training set: one chunk per streaming cycle,
    // labeled positive when congestion occurs within the warning horizon.
    let run = run_stream(&predictor.model, &predictor.norm, cfg, Driver::Flsp, None, &train_rows)?;
    let labels = label_congestion(&train_sim.records, &label_cfg, rach.slot_period)?;
    let ys = step_labels(&labels.expected, &run.cycle_starts, cfg.l_f, StepLabelRule::Any)?;
    let dataset: Vec<_> = run
        .blocks
        .iter()
        .zip(run.cycle_starts.iter().zip(&ys))
        .map(|(b, (&s, &y))| {
            let fresh = &train_rows[s as usize..s as usize + cfg.l_f];
            (chunk_features(fresh, b), y)
        })
        .collect();
    let positives = ys.iter().filter(|&&y| y).count();
    println!("classifier dataset: {} chunks, {positives} positive", dataset.len());

    let bcfg = BurstTrainConfig {
        epochs: 30,
        learning_rate: 1e-2,
        dropout: 0.2,
        ..BurstTrainConfig::default()
    };
    let net = train_burst(&dataset, &bcfg)?;
    println!("classifier final loss: {:.4}", net.loss_history.last().unwrap());

    // Score on fresh traces.
    let mut probs = Vec::new();
    let mut decs = Vec::new();
    let mut labs = Vec::new();
    for seed in 100..104 {
        let sim = simulate(6_000, seed)?;
        let rows = trace_features(&sim.records);
        let labels = label_congestion(&sim.records, &label_cfg, rach.slot_period)?;
        let run = run_stream(&predictor.model, &predictor.norm, cfg, Driver::Flsp, None, &rows)?;
        let ys = step_labels(&labels.expected, &run.cycle_starts, cfg.l_f, StepLabelRule::Any)?;
        for (b, (&s, &y)) in run.blocks.iter().zip(run.cycle_starts.iter().zip(&ys)) {
            let chunk = chunk_features(&rows[s as usize..s as usize + cfg.l_f], b);
            let (p, d) = burst_decide(&net.params, &chunk)?;
            probs.push(p);
            decs.push(d);
            labs.push(y);
        }
    }
    let m = compute_metrics(&probs, &decs, &labs)?;
    println!(
        "held-out: tp {} fp {} fn {} tn {}  precision {:.3}  recall {:.3}  f1 {:.3}",
        m.true_positives,
        m.false_positives,
        m.false_negatives,
        m.true_negatives,
        m.precision,
        m.recall,
        m.f1
    );
    Ok(())
}

//! Train a small recurrent traffic predictor on a simulated trace and save
//! a reusable checkpoint.
//!
//! The training loop is hand-rolled: exact backpropagation through time,
//! Adam, inverted dropout, and per-feature normalization fitted on the
//! training data. Kept small so it finishes in under a minute.

use std::path::Path;

use rachcast::nn::{train, Checkpoint, RecurrentKind, TrainConfig};
use rachcast::predict::trace_features;
use rachcast::sim::{run_simulation, CellConfig, RachConfig};

fn main() -> rachcast::Result<()> {
    let cell = CellConfig::paper_default();
    let rach = RachConfig::default();

    let sim = run_simulation(&cell, &rach, 8_000, 7)?;
    let rows = trace_features(&sim.records);

    let cfg = TrainConfig {
        epochs: 5,
        window: 256,
        stride: 128,
        burn_in: 64,
        dropout: 0.2,
        seed: 7,
        ..TrainConfig::default()
    };
    println!(
        "training a GRU(32) one-step predictor on {} slots ({} windows of {})",
        rows.len(),
        (rows.len() - cfg.window) / cfg.stride + 1,
        cfg.window
    );
    let trained = train(&[rows], RecurrentKind::Gru, &[32], &cfg)?;
    for (e, loss) in trained.loss_history.iter().enumerate() {
        println!("epoch {:2}: mean batch loss {loss:.5}", e + 1);
    }

    let out = Path::new("target/demo_checkpoint.json");
    Checkpoint::new(trained.model, trained.norm).save(out)?;
    let back = Checkpoint::load(out)?;
    println!(
        "checkpoint saved to {} ({:?}, hidden {:?}) and reloaded bit-exact",
        out.display(),
        back.model.kind(),
        back.model.hidden_sizes()
    );
    Ok(())
}

//! Simulate bursty random-access traffic in a single cell and label the
//! congested stretches.
//!
//! Prints per-second aggregates around the largest burst plus the packet
//! conservation summary, so you can eyeball the collision ramp that the
//! predictor later learns to anticipate.

use rachcast::sim::{label_congestion, run_simulation, CellConfig, LabelConfig, RachConfig};

fn main() -> rachcast::Result<()> {
    let cell = CellConfig::paper_default();
    let rach = RachConfig::default();
    let total_slots = 12_000; // one minute at 5 ms per slot

    let sim = run_simulation(&cell, &rach, total_slots, 42)?;
    let labels = label_congestion(&sim.records, &LabelConfig::default(), rach.slot_period)?;

    println!(
        "simulated {} slots ({:.0} s), {} device groups",
        total_slots,
        total_slots as f64 * rach.slot_period,
        cell.groups.len()
    );
    let s = &sim.summary;
    println!(
        "packets: generated {}  detected {}  dropped {}  residual {}",
        s.generated, s.detected, s.dropped, s.residual_backlog
    );

    // Aggregate to one row per second.
    let per_sec = (1.0 / rach.slot_period) as usize;
    println!("\n  sec  arrivals  attempts  detected  collided  congested");
    for (sec, chunk) in sim.records.chunks(per_sec).enumerate() {
        let arr: u64 = chunk.iter().map(|r| r.arrivals).sum();
        let att: u64 = chunk.iter().map(|r| r.attempts).sum();
        let det: u64 = chunk.iter().map(|r| r.detected).sum();
        let col: u64 = chunk.iter().map(|r| r.collided_preambles).sum();
        let cong = chunk
            .iter()
            .enumerate()
            .filter(|(i, _)| labels.congested[sec * per_sec + i])
            .count();
        if arr > 0 || cong > 0 {
            println!("{sec:5}  {arr:8}  {att:8}  {det:8}  {col:8}  {cong:5}/{per_sec}");
        }
    }

    let congested = labels.congested.iter().filter(|&&b| b).count();
    let expected = labels.expected.iter().filter(|&&b| b).count();
    println!("\ncongested slots: {congested}, expected-congestion labels (1 s lookahead): {expected}");
    Ok(())
}

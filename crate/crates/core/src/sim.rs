//! Deterministic discrete-slot simulator of an mMTC cell.
//!
//! Devices are organized into groups with independent periodic traffic and
//! Beta-shaped burst events. Every RACH opportunity (slot) the newly arrived
//! and backed-off devices contend over `K` orthogonal preambles; a preamble
//! picked by exactly one device succeeds, everything else collides and
//! retries after a uniform backoff until the retry budget is exhausted.
//!
//! All randomness flows from one seeded ChaCha stream, so a `(config, seed)`
//! pair reproduces the trace byte for byte.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

/// One group of IoT devices sharing traffic statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceGroup {
    /// Number of devices in the group.
    pub size: u64,
    /// Per-second probability that a burst event starts in this group.
    pub event_probability: f64,
    /// Periodic packets per device per second.
    pub periodic_rate: f64,
}

impl DeviceGroup {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.event_probability) {
            return Err(Error::Config(format!(
                "event_probability {} outside [0,1]",
                self.event_probability
            )));
        }
        if self.periodic_rate < 0.0 || !self.periodic_rate.is_finite() {
            return Err(Error::Config(format!(
                "periodic_rate {} must be finite and >= 0",
                self.periodic_rate
            )));
        }
        Ok(())
    }
}

/// A Beta-shaped surge of access intensity in one group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BurstEvent {
    /// Index of the group the event belongs to.
    pub group: usize,
    /// Event start time in seconds.
    pub start_time: f64,
    /// Event duration `T` in seconds.
    pub duration: f64,
    /// Beta shape parameters; both must exceed 1 so the intensity vanishes
    /// at the endpoints.
    pub alpha: f64,
    pub beta: f64,
}

impl BurstEvent {
    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 {
            return Err(Error::Config("event duration must be positive".into()));
        }
        if self.alpha <= 1.0 || self.beta <= 1.0 {
            return Err(Error::Config(
                "Beta shape parameters must both exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// RACH channel configuration (paper-style defaults in [`RachConfig::default`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RachConfig {
    /// Number of contention-based preambles `K`.
    pub preamble_count: u32,
    /// Seconds between RACH opportunities.
    pub slot_period: f64,
    /// Retry budget per packet, counting the first transmission.
    pub max_transmissions: u32,
    /// Backoff window in milliseconds; retry delay is uniform in [0, value].
    pub backoff_ms: u32,
}

impl Default for RachConfig {
    fn default() -> Self {
        Self {
            preamble_count: 54,
            slot_period: 0.005,
            max_transmissions: 10,
            backoff_ms: 20,
        }
    }
}

impl RachConfig {
    pub fn validate(&self) -> Result<()> {
        if self.preamble_count < 1 {
            return Err(Error::Config("preamble_count must be >= 1".into()));
        }
        if self.slot_period <= 0.0 {
            return Err(Error::Config("slot_period must be positive".into()));
        }
        if self.max_transmissions < 1 {
            return Err(Error::Config("max_transmissions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Cell-level traffic configuration: groups plus burst-event statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellConfig {
    pub groups: Vec<DeviceGroup>,
    /// Uniform range for burst durations, in seconds.
    pub event_duration_min: f64,
    pub event_duration_max: f64,
    /// Beta shape parameters shared by all events.
    pub alpha: f64,
    pub beta: f64,
}

impl CellConfig {
    pub fn validate(&self) -> Result<()> {
        for g in &self.groups {
            g.validate()?;
        }
        if self.event_duration_min <= 0.0 || self.event_duration_max < self.event_duration_min {
            return Err(Error::Config("invalid event duration range".into()));
        }
        if self.alpha <= 1.0 || self.beta <= 1.0 {
            return Err(Error::Config(
                "Beta shape parameters must both exceed 1".into(),
            ));
        }
        Ok(())
    }

    /// Paper-style cell: ten groups, 60k devices, one periodic packet per
    /// device per minute.
    pub fn paper_default() -> Self {
        let sizes = [
            15000u64, 8000, 3000, 3000, 3000, 15000, 8000, 3000, 2000, 2000,
        ];
        let probs = [
            0.006, 0.009, 0.09, 0.1, 0.2, 0.004, 0.004, 0.05, 0.1, 0.2,
        ];
        let groups = sizes
            .iter()
            .zip(probs.iter())
            .map(|(&size, &p)| DeviceGroup {
                size,
                event_probability: p,
                periodic_rate: 1.0 / 60.0,
            })
            .collect();
        Self {
            groups,
            event_duration_min: 8.0,
            event_duration_max: 15.0,
            alpha: 3.0,
            beta: 4.0,
        }
    }

    /// Small cell matched to [`ClusterPlan`]'s defaults: group 0 emits the
    /// precursors, group 1 the main congesting bursts, group 2 periodic
    /// background traffic. Events are scheduled explicitly via
    /// [`run_simulation_with_events`], so the groups' own event
    /// probabilities are zero.
    pub fn clustered_default() -> Self {
        Self {
            groups: vec![
                DeviceGroup { size: 2000, event_probability: 0.0, periodic_rate: 0.0 },
                DeviceGroup { size: 15000, event_probability: 0.0, periodic_rate: 0.0 },
                DeviceGroup { size: 10000, event_probability: 0.0, periodic_rate: 1.0 / 60.0 },
            ],
            event_duration_min: 1.0,
            event_duration_max: 4.0,
            alpha: 3.0,
            beta: 4.0,
        }
    }
}

/// Correlated burst scheduling: a small precursor event heralds a main burst
/// after a fixed quiet gap, and a fraction of main bursts arrive unheralded.
/// Useful for studying predictors that must remember context older than a
/// short input buffer: during the gap the channel is quiet, so only a model
/// that retained the precursor can anticipate the main ramp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterPlan {
    /// Group emitting the small precursor bursts.
    pub precursor_group: usize,
    /// Group emitting the main (typically congesting) bursts.
    pub main_group: usize,
    /// Probability that a main burst is heralded by a precursor.
    pub precursor_probability: f64,
    /// Precursor duration in seconds.
    pub precursor_duration: f64,
    /// Quiet gap between precursor end and main-burst start, in seconds.
    pub gap: f64,
    /// Uniform range for main-burst durations, in seconds.
    pub main_duration_min: f64,
    pub main_duration_max: f64,
    /// Uniform range for the idle spacing after each cluster, in seconds.
    pub spacing_min: f64,
    pub spacing_max: f64,
    /// Beta shape parameters shared by all scheduled events.
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ClusterPlan {
    fn default() -> Self {
        Self {
            precursor_group: 0,
            main_group: 1,
            precursor_probability: 0.75,
            precursor_duration: 1.5,
            gap: 1.0,
            main_duration_min: 2.5,
            main_duration_max: 3.5,
            spacing_min: 4.0,
            spacing_max: 8.0,
            alpha: 3.0,
            beta: 4.0,
        }
    }
}

impl ClusterPlan {
    /// Deterministically schedule clusters over `[0, total_seconds]`.
    pub fn events(&self, total_seconds: f64, seed: u64) -> Vec<BurstEvent> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lead = self.precursor_duration + self.gap;
        let mut events = Vec::new();
        let mut t = 2.0 + rng.random_range(0.0..self.spacing_min.max(0.1));
        while t + lead + self.main_duration_max + 2.0 < total_seconds {
            let main_dur = rng.random_range(self.main_duration_min..self.main_duration_max);
            if rng.random_range(0.0..1.0) < self.precursor_probability {
                events.push(BurstEvent {
                    group: self.precursor_group,
                    start_time: t,
                    duration: self.precursor_duration,
                    alpha: self.alpha,
                    beta: self.beta,
                });
            }
            events.push(BurstEvent {
                group: self.main_group,
                start_time: t + lead,
                duration: main_dur,
                alpha: self.alpha,
                beta: self.beta,
            });
            t += lead + main_dur + rng.random_range(self.spacing_min..self.spacing_max);
        }
        events
    }
}

/// Per-slot ground truth emitted by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u64,
    /// Devices that became packet-ready this slot.
    pub arrivals: u64,
    /// Total transmissions this slot (arrivals plus retries).
    pub attempts: u64,
    /// Preambles picked by exactly one device.
    pub detected: u64,
    /// Preambles picked by two or more devices.
    pub collided_preambles: u64,
    /// Devices whose final allowed transmission failed this slot.
    pub dropped: u64,
}

/// How congestion flags are derived from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Windowed collided-attempt rate against a threshold (default).
    SlidingWindow,
    /// Attempts exceed the preamble count for N consecutive slots.
    ConsecutiveOverload,
}

/// Congestion labeling parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Sliding window length in seconds.
    pub window_seconds: f64,
    /// Threshold on the per-second collided-attempt rate within the window.
    pub collision_threshold: f64,
    /// Lead time in seconds: the expected label at slot `s` is set when any
    /// congested slot falls within the next `t_pred` seconds.
    pub t_pred_seconds: f64,
    pub mode: LabelMode,
    /// Run length for [`LabelMode::ConsecutiveOverload`].
    pub consecutive_slots: u64,
    /// Attempt threshold (the available preamble count) for
    /// [`LabelMode::ConsecutiveOverload`].
    pub overload_attempts: u64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            window_seconds: 3.0,
            collision_threshold: 7000.0,
            t_pred_seconds: 1.0,
            mode: LabelMode::SlidingWindow,
            consecutive_slots: 250,
            overload_attempts: 54,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_seconds <= 0.0 {
            return Err(Error::Config("window_seconds must be positive".into()));
        }
        if self.collision_threshold < 0.0 {
            return Err(Error::Config("collision_threshold must be >= 0".into()));
        }
        if self.t_pred_seconds < 0.0 {
            return Err(Error::Config("t_pred_seconds must be >= 0".into()));
        }
        Ok(())
    }
}

/// Beta burst intensity `p(t) = t^(a-1) (T-t)^(b-1) / (T^(a+b-1) B(a,b))`.
///
/// Integrates to 1 over `[0, T]`.
pub fn beta_intensity(t: f64, ev: &BurstEvent) -> Result<f64> {
    if !(0.0..=ev.duration).contains(&t) {
        return Err(Error::Domain(format!(
            "t={} outside burst support [0, {}]",
            t, ev.duration
        )));
    }
    let (a, b, big_t) = (ev.alpha, ev.beta, ev.duration);
    if t == 0.0 || t == big_t {
        // a > 1 and b > 1, so the density vanishes at both endpoints.
        return Ok(0.0);
    }
    let log_p = (a - 1.0) * t.ln() + (b - 1.0) * (big_t - t).ln()
        - (a + b - 1.0) * big_t.ln()
        - ln_beta(a, b);
    Ok(log_p.exp())
}

/// Expected burst arrivals in the absolute time interval `[t0, t1]`:
/// `n_l * ∫ p(t) dt` with bounds clamped to the event support. Evaluated as a
/// regularized incomplete-Beta difference.
pub fn expected_arrivals(t0: f64, t1: f64, ev: &BurstEvent, group_size: u64) -> f64 {
    let lo = (t0 - ev.start_time).clamp(0.0, ev.duration);
    let hi = (t1 - ev.start_time).clamp(0.0, ev.duration);
    if hi <= lo || group_size == 0 {
        return 0.0;
    }
    let cdf = |t: f64| beta_reg(ev.alpha, ev.beta, t / ev.duration);
    group_size as f64 * (cdf(hi) - cdf(lo))
}

/// Result of one contention round.
#[derive(Debug, Clone)]
pub struct ContentionOutcome {
    /// Per-device success flag, in the order devices were passed in.
    pub success: Vec<bool>,
    /// Preambles picked by exactly one device.
    pub detected: u64,
    /// Preambles picked by two or more devices.
    pub collided_preambles: u64,
}

/// Run one slotted-ALOHA contention round: each of `transmitters` devices
/// picks a preamble uniformly from `K`; singleton preambles succeed.
pub fn contend<R: Rng>(transmitters: usize, rach: &RachConfig, rng: &mut R) -> ContentionOutcome {
    let k = rach.preamble_count as usize;
    let mut picks = Vec::with_capacity(transmitters);
    let mut counts = vec![0u32; k];
    for _ in 0..transmitters {
        let p = rng.random_range(0..k);
        picks.push(p);
        counts[p] += 1;
    }
    let success: Vec<bool> = picks.iter().map(|&p| counts[p] == 1).collect();
    let detected = counts.iter().filter(|&&c| c == 1).count() as u64;
    let collided_preambles = counts.iter().filter(|&&c| c >= 2).count() as u64;
    ContentionOutcome {
        success,
        detected,
        collided_preambles,
    }
}

/// Totals across a full run, including the drain phase past the last
/// recorded slot (arrivals stop, the backlog contends until empty).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SimSummary {
    pub generated: u64,
    pub detected: u64,
    pub dropped: u64,
    /// Devices still backlogged when the drain cap was hit (0 in practice:
    /// the retry budget bounds every packet's lifetime).
    pub residual_backlog: u64,
}

/// A completed simulation: one record per slot plus conservation totals.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub records: Vec<TraceRecord>,
    pub events: Vec<BurstEvent>,
    pub summary: SimSummary,
}

struct BacklogEntry {
    ready_slot: u64,
    transmissions: u32,
}

/// Run the cell for `total_slots` RACH opportunities.
///
/// Per slot: periodic arrivals are Binomial(n_l, p_u * slot_period) per
/// group, burst arrivals are Poisson with the Beta-integral mean summed over
/// active events, both merged with backlogged retries before contending.
/// Failures re-enter after a uniform integer backoff in [0, backoff_ms] ms
/// quantized to slots; a device failing its `max_transmissions`-th attempt
/// is dropped in that slot.
pub fn run_simulation(
    cell: &CellConfig,
    rach: &RachConfig,
    total_slots: u64,
    seed: u64,
) -> Result<SimResult> {
    simulate(cell, rach, total_slots, seed, None)
}

/// Like [`run_simulation`], but with a fixed event list instead of random
/// event generation. Useful for controlled experiments and oracles.
pub fn run_simulation_with_events(
    cell: &CellConfig,
    rach: &RachConfig,
    events: Vec<BurstEvent>,
    total_slots: u64,
    seed: u64,
) -> Result<SimResult> {
    for ev in &events {
        ev.validate()?;
        if ev.group >= cell.groups.len() {
            return Err(Error::Config(format!("event group {} out of range", ev.group)));
        }
    }
    simulate(cell, rach, total_slots, seed, Some(events))
}

fn simulate(
    cell: &CellConfig,
    rach: &RachConfig,
    total_slots: u64,
    seed: u64,
    preset_events: Option<Vec<BurstEvent>>,
) -> Result<SimResult> {
    cell.validate()?;
    rach.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slot_period = rach.slot_period;
    let slots_per_second = (1.0 / slot_period).round() as u64;

    let generate_events = preset_events.is_none();
    let mut events: Vec<BurstEvent> = preset_events.unwrap_or_default();
    let mut backlog: Vec<BacklogEntry> = Vec::new();
    let mut records = Vec::with_capacity(total_slots as usize);
    let mut summary = SimSummary::default();

    let backoff_slots = |rng: &mut ChaCha8Rng| -> u64 {
        let delay_ms = rng.random_range(0..=rach.backoff_ms) as f64;
        (delay_ms / (slot_period * 1000.0)).floor() as u64
    };

    // Drain phase: after `total_slots`, no new arrivals or events; the retry
    // budget empties the backlog within max_transmissions backoff windows.
    let drain_cap = total_slots + (rach.max_transmissions as u64 + 1) * (slots_per_second + 1);

    let mut slot = 0u64;
    loop {
        let generating = slot < total_slots;
        if !generating && backlog.is_empty() {
            break;
        }
        if slot >= drain_cap {
            break;
        }

        let t0 = slot as f64 * slot_period;
        let t1 = (slot + 1) as f64 * slot_period;

        let mut arrivals = 0u64;
        if generating {
            // New burst events trigger on second boundaries.
            if generate_events && slot % slots_per_second == 0 {
                for (gi, g) in cell.groups.iter().enumerate() {
                    if g.size > 0
                        && g.event_probability > 0.0
                        && rng.random_range(0.0..1.0) < g.event_probability
                    {
                        let duration = rng
                            .random_range(cell.event_duration_min..=cell.event_duration_max);
                        events.push(BurstEvent {
                            group: gi,
                            start_time: t0,
                            duration,
                            alpha: cell.alpha,
                            beta: cell.beta,
                        });
                    }
                }
            }

            // Periodic arrivals.
            for g in &cell.groups {
                let p = g.periodic_rate * slot_period;
                if g.size > 0 && p > 0.0 {
                    let bin = Binomial::new(g.size, p.min(1.0))
                        .map_err(|e| Error::Config(format!("binomial: {e}")))?;
                    arrivals += bin.sample(&mut rng);
                }
            }

            // Burst arrivals: Poisson draw on the summed Beta-integral mean.
            let mut lambda = 0.0;
            for ev in &events {
                if t1 > ev.start_time && t0 < ev.start_time + ev.duration {
                    lambda += expected_arrivals(t0, t1, ev, cell.groups[ev.group].size);
                }
            }
            if lambda > 0.0 {
                let poi = Poisson::new(lambda)
                    .map_err(|e| Error::Numeric(format!("poisson: {e}")))?;
                arrivals += poi.sample(&mut rng) as u64;
            }
            summary.generated += arrivals;
        }

        // Gather this slot's transmitters: new arrivals first, then backlog
        // whose backoff expired, in arrival order.
        let mut transmitters: Vec<u32> = Vec::with_capacity(arrivals as usize);
        transmitters.resize(arrivals as usize, 0); // transmissions so far
        let mut still_waiting = Vec::with_capacity(backlog.len());
        for entry in backlog.drain(..) {
            if entry.ready_slot <= slot {
                transmitters.push(entry.transmissions);
            } else {
                still_waiting.push(entry);
            }
        }
        backlog = still_waiting;

        let attempts = transmitters.len() as u64;
        let outcome = contend(transmitters.len(), rach, &mut rng);
        let mut dropped = 0u64;
        for (i, prior) in transmitters.iter().enumerate() {
            if outcome.success[i] {
                continue;
            }
            let transmissions = prior + 1;
            if transmissions >= rach.max_transmissions {
                dropped += 1;
            } else {
                let ready_slot = slot + 1 + backoff_slots(&mut rng);
                backlog.push(BacklogEntry {
                    ready_slot,
                    transmissions,
                });
            }
        }
        summary.detected += outcome.detected;
        summary.dropped += dropped;

        if generating {
            records.push(TraceRecord {
                slot,
                arrivals,
                attempts,
                detected: outcome.detected,
                collided_preambles: outcome.collided_preambles,
                dropped,
            });
        }
        slot += 1;
    }

    summary.residual_backlog = backlog.len() as u64;
    Ok(SimResult {
        records,
        events,
        summary,
    })
}

/// Congestion flags plus their lead-time-shifted expected labels.
#[derive(Debug, Clone)]
pub struct CongestionLabels {
    /// `congested[s]`: the trailing window ending at slot `s` is congested.
    pub congested: Vec<bool>,
    /// `expected[s]`: any congested flag within `(s, s + t_pred/slot_period]`.
    pub expected: Vec<bool>,
}

/// Label a trace with ground-truth congestion and lead-time-shifted expected
/// labels.
///
/// In the default sliding-window mode, the collided-attempt rate is the sum
/// of `attempts - detected` over the trailing window divided by the window
/// length in seconds; a slot is congested when that per-second rate exceeds
/// `collision_threshold`. Short prefixes use the partial window.
pub fn label_congestion(
    trace: &[TraceRecord],
    cfg: &LabelConfig,
    slot_period: f64,
) -> Result<CongestionLabels> {
    cfg.validate()?;
    if trace.is_empty() {
        return Err(Error::Config("cannot label an empty trace".into()));
    }
    let n = trace.len();
    let congested = match cfg.mode {
        LabelMode::SlidingWindow => {
            let w = ((cfg.window_seconds / slot_period).round() as usize).max(1);
            let mut prefix = vec![0u64; n + 1];
            for (i, r) in trace.iter().enumerate() {
                prefix[i + 1] = prefix[i] + (r.attempts - r.detected);
            }
            (0..n)
                .map(|s| {
                    let lo = s.saturating_sub(w - 1);
                    let len = s + 1 - lo;
                    let sum = (prefix[s + 1] - prefix[lo]) as f64;
                    let rate = sum / (len as f64 * slot_period);
                    rate > cfg.collision_threshold
                })
                .collect()
        }
        LabelMode::ConsecutiveOverload => {
            // Mark every slot of each run of >= consecutive_slots slots whose
            // attempts exceed the available preambles.
            let need = cfg.consecutive_slots.max(1) as usize;
            let mut flags = vec![false; n];
            let mut run_start = 0usize;
            for s in 0..=n {
                let over = s < n && trace[s].attempts > cfg.overload_attempts;
                if !over {
                    if s - run_start >= need {
                        for f in flags.iter_mut().take(s).skip(run_start) {
                            *f = true;
                        }
                    }
                    run_start = s + 1;
                }
            }
            flags
        }
    };

    let lead = (cfg.t_pred_seconds / slot_period).round() as usize;
    let expected = (0..n)
        .map(|s| {
            let hi = (s + lead).min(n - 1);
            congested[s + 1..=hi].iter().any(|&c| c) && lead > 0
        })
        .collect();

    Ok(CongestionLabels {
        congested,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_event(duration: f64) -> BurstEvent {
        BurstEvent {
            group: 0,
            start_time: 0.0,
            duration,
            alpha: 3.0,
            beta: 4.0,
        }
    }

    #[test]
    fn beta_intensity_vanishes_at_origin() {
        let ev = test_event(10.0);
        assert_eq!(beta_intensity(0.0, &ev).unwrap(), 0.0);
        assert_eq!(beta_intensity(10.0, &ev).unwrap(), 0.0);
    }

    #[test]
    fn beta_intensity_closed_form_point() {
        // t^2 (T-t)^3 / (T^6 B(3,4)), B(3,4) = 1/60.
        let ev = test_event(10.0);
        let p = beta_intensity(4.0, &ev).unwrap();
        assert!((p - 0.20736).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn beta_intensity_rejects_out_of_support() {
        let ev = test_event(10.0);
        assert!(beta_intensity(-0.1, &ev).is_err());
        assert!(beta_intensity(10.1, &ev).is_err());
    }

    #[test]
    fn beta_intensity_integrates_to_one() {
        // Composite Simpson over [0, T].
        let ev = test_event(12.5);
        let n = 20_000usize;
        let h = ev.duration / n as f64;
        let mut sum = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += w * beta_intensity(i as f64 * h, &ev).unwrap();
        }
        sum *= h / 3.0;
        assert!((sum - 1.0).abs() < 1e-9, "integral = {sum}");
    }

    #[test]
    fn expected_arrivals_normalizes_to_group_size() {
        let ev = test_event(10.0);
        let n_l = 3000u64;
        let slot = 0.005;
        let mut total = 0.0;
        let slots = (ev.duration / slot).ceil() as u64 + 10;
        for i in 0..slots {
            total += expected_arrivals(i as f64 * slot, (i + 1) as f64 * slot, &ev, n_l);
        }
        assert!((total - n_l as f64).abs() < 1e-6 * n_l as f64);
    }

    #[test]
    fn expected_arrivals_matches_pointwise_density() {
        // n_l * p(4) * dt with a slot short enough for the midpoint rule.
        let ev = test_event(10.0);
        let got = expected_arrivals(4.0, 4.005, &ev, 3000);
        let approx = 3000.0 * 0.20736 * 0.005;
        assert!((got - approx).abs() < 1e-3, "got {got}, approx {approx}");
    }

    #[test]
    fn expected_arrivals_zero_group() {
        let ev = test_event(10.0);
        assert_eq!(expected_arrivals(4.0, 4.005, &ev, 0), 0.0);
    }

    #[test]
    fn contend_trivial_cases() {
        let rach = RachConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let none = contend(0, &rach, &mut rng);
        assert_eq!((none.detected, none.collided_preambles), (0, 0));
        let one = contend(1, &rach, &mut rng);
        assert_eq!((one.detected, one.collided_preambles), (1, 0));
        assert!(one.success[0]);
    }

    #[test]
    fn contend_matches_analytic_expectation() {
        // Mean detected over seeded trials vs M (1 - 1/K)^(M-1).
        let rach = RachConfig::default();
        let k = rach.preamble_count as f64;
        for m in [10usize, 54, 150] {
            let mut rng = ChaCha8Rng::seed_from_u64(7 + m as u64);
            let trials = 20_000;
            let mut sum = 0u64;
            for _ in 0..trials {
                sum += contend(m, &rach, &mut rng).detected;
            }
            let mean = sum as f64 / trials as f64;
            let analytic = m as f64 * (1.0 - 1.0 / k).powi(m as i32 - 1);
            assert!(
                (mean - analytic).abs() < 0.02 * analytic,
                "M={m}: mean {mean} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn contend_counts_within_preamble_budget() {
        let rach = RachConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [5usize, 54, 200, 1000] {
            let out = contend(m, &rach, &mut rng);
            assert!(out.detected + out.collided_preambles <= rach.preamble_count as u64);
        }
    }

    fn single_event_cell(size: u64) -> CellConfig {
        CellConfig {
            groups: vec![DeviceGroup {
                size,
                event_probability: 1.0,
                periodic_rate: 0.0,
            }],
            event_duration_min: 8.0,
            event_duration_max: 8.0,
            alpha: 3.0,
            beta: 4.0,
        }
    }

    #[test]
    fn empty_cell_gives_all_zero_trace() {
        let mut cell = CellConfig::paper_default();
        for g in &mut cell.groups {
            g.size = 0;
        }
        let res = run_simulation(&cell, &RachConfig::default(), 500, 9).unwrap();
        assert_eq!(res.records.len(), 500);
        assert!(res.records.iter().all(|r| r.arrivals == 0
            && r.attempts == 0
            && r.detected == 0
            && r.collided_preambles == 0
            && r.dropped == 0));
    }

    #[test]
    fn single_event_generates_about_group_size() {
        // One forced 8 s event of 3000 devices, no periodic traffic. The
        // Poissonized total should land within 3 sigma of the group size.
        let mut cell = single_event_cell(3000);
        cell.groups[0].event_probability = 0.0;
        let ev = test_event(8.0);
        let res =
            run_simulation_with_events(&cell, &RachConfig::default(), vec![ev], 2000, 11).unwrap();
        let total: u64 = res.records.iter().map(|r| r.arrivals).sum();
        let sd = (3000f64).sqrt();
        assert!(
            (total as f64 - 3000.0).abs() < 3.0 * sd,
            "total arrivals {total}"
        );
    }

    #[test]
    fn simulation_is_deterministic() {
        let cell = CellConfig::paper_default();
        let rach = RachConfig::default();
        let a = run_simulation(&cell, &rach, 2000, 42).unwrap();
        let b = run_simulation(&cell, &rach, 2000, 42).unwrap();
        assert_eq!(a.records, b.records);
        let c = run_simulation(&cell, &rach, 2000, 43).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn per_slot_invariants_hold() {
        let cell = CellConfig::paper_default();
        let rach = RachConfig::default();
        let res = run_simulation(&cell, &rach, 4000, 5).unwrap();
        for r in &res.records {
            assert!(r.detected + r.collided_preambles <= rach.preamble_count as u64);
            assert!(r.detected <= r.attempts);
        }
    }

    #[test]
    fn packets_are_conserved() {
        let cell = CellConfig::paper_default();
        let res = run_simulation(&cell, &RachConfig::default(), 3000, 17).unwrap();
        let s = res.summary;
        assert_eq!(s.residual_backlog, 0);
        assert_eq!(s.generated, s.detected + s.dropped);
    }

    #[test]
    fn idle_trace_gets_no_labels() {
        let trace: Vec<TraceRecord> = (0..1000)
            .map(|slot| TraceRecord {
                slot,
                arrivals: 2,
                attempts: 2,
                detected: 2,
                collided_preambles: 0,
                dropped: 0,
            })
            .collect();
        let labels = label_congestion(&trace, &LabelConfig::default(), 0.005).unwrap();
        assert!(labels.congested.iter().all(|&c| !c));
        assert!(labels.expected.iter().all(|&e| !e));
    }

    #[test]
    fn sustained_collisions_label_interior_slots() {
        // attempts - detected = 8000 per slot for 5 s: per-second rate is
        // 8000/0.005 = 1.6e6, far above the 7000 threshold.
        let trace: Vec<TraceRecord> = (0..1000)
            .map(|slot| TraceRecord {
                slot,
                arrivals: 8000,
                attempts: 8010,
                detected: 10,
                collided_preambles: 54,
                dropped: 0,
            })
            .collect();
        let labels = label_congestion(&trace, &LabelConfig::default(), 0.005).unwrap();
        assert!(labels.congested[500]);
        assert!(labels.congested[999]);
    }

    #[test]
    fn expected_labels_shift_congestion_earlier() {
        let mut trace: Vec<TraceRecord> = (0..2000)
            .map(|slot| TraceRecord {
                slot,
                arrivals: 0,
                attempts: 0,
                detected: 0,
                collided_preambles: 0,
                dropped: 0,
            })
            .collect();
        for r in trace.iter_mut().skip(1000).take(400) {
            r.attempts = 100_000;
            r.detected = 10;
        }
        let cfg = LabelConfig {
            t_pred_seconds: 0.5,
            ..LabelConfig::default()
        };
        let labels = label_congestion(&trace, &cfg, 0.005).unwrap();
        let lead = 100usize;
        for s in 0..(2000 - lead) {
            let want = labels.congested[s + 1..=s + lead].iter().any(|&c| c);
            assert_eq!(labels.expected[s], want, "slot {s}");
        }
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(label_congestion(&[], &LabelConfig::default(), 0.005).is_err());
    }
}

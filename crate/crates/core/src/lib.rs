//! # rachcast
//!
//! A desk-scale workbench for bursty random-access traffic in an mMTC cell:
//!
//! - [`sim`] — deterministic slotted-ALOHA RACH simulator with Beta-shaped
//!   burst events and ground-truth congestion labels,
//! - [`nn`] — from-scratch LSTM/GRU + dense-head stack with hand-derived
//!   backpropagation through time and an Adam optimizer,
//! - [`predict`] — streaming prediction drivers: the FLSP state-snapshot
//!   algorithm and the rolling-buffer baseline,
//! - [`burst`] — burst/congestion detection head and rare-event metrics,
//! - [`analysis`] — closed-form parameter and FLOP calculators,
//! - [`cli`] — experiment orchestration behind the `rachcast` binary.
//!
//! Everything is seeded and reproducible: the same configuration and seed
//! produce byte-identical traces, checkpoints, and reports.

pub mod analysis;
pub mod burst;
pub mod cli;
pub mod error;
pub mod nn;
pub mod predict;
pub mod sim;

pub use error::{Error, Result};

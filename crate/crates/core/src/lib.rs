//! Trace-driven simulator of a banked NUCA last-level cache with
//! compression-aware power gating.
//!
//! Two compressed organizations are modeled next to a plain baseline:
//!
//! * **NIZ** keeps a zero bit per line; all-zero lines cost a flag access and
//!   stay readable when their bank is gated.
//! * **NFV** keeps an FV bit and a one-hot codeword per line for the 32
//!   most frequent line values found by static profiling.
//!
//! Banks are gated at interval boundaries by a statistic-based or
//! threshold-based policy and brought back by the power-on rules; energy is
//! split into static, dynamic, overhead and TSV interconnect components.

pub mod cache;
pub mod energy;
pub mod error;
pub mod fv;
pub mod line;
pub mod policy;
pub mod sim;
pub mod trace;
pub mod tsv;

pub use cache::{AccessKind, AccessOutcome, Cache, CacheGeometry, CacheMode, IntervalCounters};
pub use energy::{EnergyLedger, EnergyParams, EnergyReport};
pub use error::{ConfigError, FvError, SimError, TraceError};
pub use fv::{profile_frequent_values, Codeword, FvTable};
pub use line::{is_zero_line, LineValue};
pub use policy::{PolicyConfig, PolicyEngine, PolicyKind, PowerAction, PowerDecision};
pub use sim::{compare, run, RunResult, SimConfig, Simulator};
pub use trace::{generate_synthetic, parse_trace, AccessOp, AccessRecord, WorkloadSpec};
pub use tsv::{TransitionStats, TsvBundle, TsvParams};

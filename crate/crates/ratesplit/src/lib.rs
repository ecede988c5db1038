//! Link-level simulation and optimization toolkit for rate-splitting
//! transmission in the multi-user MIMO downlink.
//!
//! A transmitter with `M` antennas serves `K` single-antenna users on the
//! same resource. When the transmitter's channel knowledge is imperfect,
//! residual multi-user interference caps the throughput of purely private
//! (broadcast) precoding. Rate splitting lifts the cap by carving part of
//! each message into one shared stream that every receiver decodes and
//! cancels before its own private stream, turning a fraction of the
//! interference into useful signal.
//!
//! The crate simulates that transmission chain end to end: channel and
//! channel-knowledge models ([`channel`]), precoder construction and SIC
//! rate evaluation ([`transceiver`]), high-SNR slope calculators ([`dof`]),
//! power-split / feedback-budget / precoder optimization ([`optimizer`]),
//! a two-tier hierarchical variant for massive arrays ([`hrs`]),
//! multi-transmitter layouts ([`multicell`]), and a seeded Monte Carlo
//! experiment runner with CSV/JSON output ([`experiments`]).
//!
//! The `examples/` directory is the front door — one runnable program per
//! capability:
//!
//! - `dof_regions` — closed-form sum-DoF values and two-user DoF polygons.
//! - `sumrate_vs_snr` — ergodic sum rate of RS vs. linear baselines under
//!   quantized feedback.
//! - `power_split` — how the optimal common/private power split moves
//!   with SNR.
//! - `feedback_bits` — feedback budget needed to hold a fixed rate gap.
//! - `optimized_precoders` — sample-average weighted-MMSE precoder
//!   optimization vs. fixed directions.
//! - `hrs_massive` — hierarchical rate splitting with clustered users.
//! - `two_cell` — two coordinated transmitters sharing channel knowledge
//!   but not data.
//! - `trs_three_cell` — layered splitting matched to a three-cell
//!   interference topology.
//!
//! A thin CLI (`rs-sim run <config>`) drives the same experiment runner
//! from flat key=value config files; see the README for the format.

pub mod channel;
pub mod dof;
pub mod error;
pub mod experiments;
pub mod hrs;
pub mod linalg;
pub mod multicell;
pub mod optimizer;
pub mod seeding;
pub mod transceiver;

pub use error::{Error, Result};

//! Seeded Monte Carlo experiment runner: flat config files in, result
//! tables out.
//!
//! Each experiment id names one study (a rate-vs-SNR sweep, a feedback
//! budget search, …) with its own scenario knobs and defaults. A run is
//! fully determined by `(config, master seed)`: every trial draws from its
//! own RNG streams keyed by `(seed, trial, lane)`, workers share nothing,
//! and per-trial results are reduced in trial order — so output files are
//! identical for any worker count.
//!
//! Within a trial all schemes see the same channel, the same estimate, and
//! the same codebooks (common random numbers); scheme differences are never
//! diluted by draw noise.
//!
//! The config format is one `key=value` per line with dotted scenario keys
//! (`scenario.M=4`), full-line `#` comments, and nothing else. Unknown or
//! inapplicable keys are errors, not warnings, and validation reports every
//! violation at once rather than the first one found.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    one_ring_covariance, ChannelRealization, CsitModel, SpatialCovariance, RVQ_MAX_BITS,
};
use crate::dof::{dof_region_two_user, fmt17, Strategy};
use crate::error::{Error, Result};
use crate::hrs::{
    effective_csit, group_users, hrs_assemble, hrs_evaluate_rates, outer_precoder, HrsPowerSplit,
};
use crate::linalg::CMat;
use crate::multicell::{
    estimate_links, trs_build_plan_with, trs_evaluate_rates, trs_precoders, two_cell_mean_sum_rate,
    two_cell_rs_rates, CellLinks, CellTopology, LayeredPlan, TrsSplits, TwoCellScheme,
};
use crate::optimizer::{
    optimize_power_split, required_feedback_bits, wmmse_multi_start, FeedbackScheme,
    FeedbackSearch, Objective, PowerSplitScenario, WmmseOptions,
};
use crate::seeding::{trial_rng, LANE_CHANNEL, LANE_CSIT};
use crate::transceiver::{
    baseline_rates, common_precoder, evaluate_rates, zf_directions, CommonDirection, PrecoderSet,
    Scheme,
};

/// Environment variable consulted for the master seed when neither a CLI
/// flag nor the config file sets one. Whatever wins is echoed into the
/// output's seed column, so a row never hides where its randomness came
/// from.
pub const SEED_ENV: &str = "RS_SIM_SEED";

/// Exact header of the CSV output.
pub const CSV_HEADER: &str = "experiment,scheme,x_name,x_value,metric,mean,ci95,trials,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    DofRegion,
    SumRateVsSnr,
    OptimizedPrecoders,
    HrsMassive,
    TwoCell,
    TrsThreeCell,
    FeedbackBits,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::DofRegion,
        ExperimentKind::SumRateVsSnr,
        ExperimentKind::OptimizedPrecoders,
        ExperimentKind::HrsMassive,
        ExperimentKind::TwoCell,
        ExperimentKind::TrsThreeCell,
        ExperimentKind::FeedbackBits,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::DofRegion => "dof-region",
            ExperimentKind::SumRateVsSnr => "sumrate-vs-snr",
            ExperimentKind::OptimizedPrecoders => "optimized-precoders",
            ExperimentKind::HrsMassive => "hrs-massive",
            ExperimentKind::TwoCell => "two-cell",
            ExperimentKind::TrsThreeCell => "trs-three-cell",
            ExperimentKind::FeedbackBits => "feedback-bits",
        }
    }

    /// Closed-form experiments are exempt from the Monte Carlo trial floor.
    fn monte_carlo(self) -> bool {
        !matches!(self, ExperimentKind::DofRegion)
    }

    fn default_trials(self) -> usize {
        match self {
            ExperimentKind::DofRegion => 1,
            ExperimentKind::SumRateVsSnr | ExperimentKind::TwoCell | ExperimentKind::TrsThreeCell => 2000,
            ExperimentKind::OptimizedPrecoders => 200,
            ExperimentKind::HrsMassive | ExperimentKind::FeedbackBits => 500,
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| {
                let ids: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.id()).collect();
                Error::Config(format!("unknown experiment '{s}' (one of {})", ids.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}' (csv or json)"))),
        }
    }
}

/// Per-experiment scenario parameters. One variant per experiment id, so a
/// config can never carry knobs its experiment would silently ignore.
#[derive(Debug, Clone)]
pub enum Scenario {
    DofRegion {
        alpha: f64,
    },
    SumRate {
        antennas: usize,
        users: usize,
        csit: CsitModel,
        snr_db: Vec<f64>,
    },
    OptimizedPrecoders {
        antennas: usize,
        users: usize,
        csit: CsitModel,
        snr_db: Vec<f64>,
        /// Conditional channel samples per precoder update.
        samples: usize,
        /// Alternating-optimization restarts per instance.
        starts: usize,
    },
    HrsMassive {
        antennas: usize,
        users: usize,
        groups: usize,
        /// Instantaneous-estimate quality exponent.
        alpha: f64,
        /// Angular half-width of each scattering cluster, degrees.
        spread_deg: f64,
        snr_db: Vec<f64>,
    },
    TwoCell {
        alpha: f64,
        snr_db: Vec<f64>,
    },
    TrsThreeCell {
        /// Cross-estimate quality inside the paired cells.
        alpha: f64,
        /// Cross-estimate quality toward the remaining cell.
        beta: f64,
        snr_db: Vec<f64>,
    },
    FeedbackBits {
        antennas: usize,
        users: usize,
        snr_db: f64,
        /// Tolerated ergodic sum-rate gap to perfect-knowledge zero-forcing.
        target_gap: f64,
        /// Search ceiling on the per-user codebook exponent.
        max_bits: u32,
    },
}

impl Scenario {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Scenario::DofRegion { .. } => ExperimentKind::DofRegion,
            Scenario::SumRate { .. } => ExperimentKind::SumRateVsSnr,
            Scenario::OptimizedPrecoders { .. } => ExperimentKind::OptimizedPrecoders,
            Scenario::HrsMassive { .. } => ExperimentKind::HrsMassive,
            Scenario::TwoCell { .. } => ExperimentKind::TwoCell,
            Scenario::TrsThreeCell { .. } => ExperimentKind::TrsThreeCell,
            Scenario::FeedbackBits { .. } => ExperimentKind::FeedbackBits,
        }
    }
}

/// A fully resolved run description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub trials: usize,
    pub master_seed: u64,
    /// Destination file; stdout when absent.
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn kind(&self) -> ExperimentKind {
        self.scenario.kind()
    }

    /// Check every invariant and report all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if self.kind().monte_carlo() {
            if self.trials < 100 {
                v.push(format!(
                    "trials: Monte Carlo experiments need at least 100 trials, got {}",
                    self.trials
                ));
            }
        } else if self.trials == 0 {
            v.push("trials: at least one trial required".into());
        }
        match &self.scenario {
            Scenario::DofRegion { alpha } => check_unit_range(&mut v, "scenario.alpha", *alpha),
            Scenario::SumRate { antennas, users, csit, snr_db } => {
                check_array(&mut v, *antennas, *users);
                check_csit(&mut v, *csit);
                check_grid(&mut v, snr_db);
            }
            Scenario::OptimizedPrecoders { antennas, users, csit, snr_db, samples, starts } => {
                check_array(&mut v, *antennas, *users);
                check_csit(&mut v, *csit);
                check_grid(&mut v, snr_db);
                if *samples == 0 {
                    v.push("scenario.samples: at least one conditional sample required".into());
                }
                if *starts == 0 {
                    v.push("scenario.starts: at least one start required".into());
                }
            }
            Scenario::HrsMassive { antennas, users, groups, alpha, spread_deg, snr_db } => {
                check_array(&mut v, *antennas, *users);
                if *groups == 0 {
                    v.push("scenario.G: at least one group required".into());
                } else if users % groups != 0 {
                    v.push(format!(
                        "scenario.G: {users} users do not split into {groups} equal clusters"
                    ));
                }
                if !(*alpha >= 0.0) || !alpha.is_finite() {
                    v.push(format!("scenario.alpha: quality exponent must be ≥ 0, got {alpha}"));
                }
                if !(*spread_deg > 0.0) || *spread_deg > 90.0 {
                    v.push(format!(
                        "scenario.spread_deg: cluster half-width must be in (0, 90], got {spread_deg}"
                    ));
                }
                check_grid(&mut v, snr_db);
            }
            Scenario::TwoCell { alpha, snr_db } => {
                check_unit_range(&mut v, "scenario.alpha", *alpha);
                check_grid(&mut v, snr_db);
            }
            Scenario::TrsThreeCell { alpha, beta, snr_db } => {
                check_unit_range(&mut v, "scenario.alpha", *alpha);
                check_unit_range(&mut v, "scenario.beta", *beta);
                if alpha.is_finite() && beta.is_finite() && alpha > beta {
                    v.push(format!(
                        "scenario.alpha: intra-pair quality {alpha} must not exceed the \
                         inter-group quality {beta}, or the pair's common layer is unjustified"
                    ));
                }
                check_grid(&mut v, snr_db);
            }
            Scenario::FeedbackBits { antennas, users, snr_db, target_gap, max_bits } => {
                check_array(&mut v, *antennas, *users);
                if !snr_db.is_finite() {
                    v.push(format!("scenario.snr_db: operating point must be finite, got {snr_db}"));
                }
                if !(*target_gap > 0.0) || !target_gap.is_finite() {
                    v.push(format!("scenario.target_gap: must be positive, got {target_gap}"));
                }
                if *max_bits == 0 || *max_bits > RVQ_MAX_BITS {
                    v.push(format!(
                        "scenario.max_bits: must be in 1..={RVQ_MAX_BITS}, got {max_bits}"
                    ));
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("\n")))
        }
    }
}

fn check_grid(v: &mut Vec<String>, grid: &[f64]) {
    if grid.is_empty() {
        v.push("scenario.snr_db: at least one operating point required".into());
        return;
    }
    if grid.iter().any(|x| !x.is_finite()) {
        v.push("scenario.snr_db: operating points must be finite".into());
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        v.push("scenario.snr_db: operating points must be strictly increasing".into());
    }
}

fn check_array(v: &mut Vec<String>, antennas: usize, users: usize) {
    if users == 0 {
        v.push("scenario.K: at least one user required".into());
    } else if antennas < users {
        v.push(format!(
            "scenario.M: {users} users need at least {users} antennas for \
             zero-forcing directions, got {antennas}"
        ));
    }
}

fn check_unit_range(v: &mut Vec<String>, key: &str, x: f64) {
    if !(0.0..=1.0).contains(&x) {
        v.push(format!("{key}: quality exponent must be in [0, 1], got {x}"));
    }
}

fn check_csit(v: &mut Vec<String>, csit: CsitModel) {
    if let Err(e) = csit.validate() {
        v.push(format!("scenario.csit: {e}"));
    }
}

/// CLI-level overrides; any field set here beats the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// Key=value lines split into a map, with syntax problems accumulated.
struct Raw {
    entries: BTreeMap<String, String>,
    violations: Vec<String>,
}

/// Every key any experiment accepts. Leftovers inside this list are
/// "not a setting of this experiment"; leftovers outside it are typos.
const VOCABULARY: [&str; 19] = [
    "experiment",
    "trials",
    "seed",
    "output",
    "format",
    "scenario.M",
    "scenario.K",
    "scenario.G",
    "scenario.B",
    "scenario.alpha",
    "scenario.beta",
    "scenario.csit",
    "scenario.snr_db",
    "scenario.spread_deg",
    "scenario.profile",
    "scenario.samples",
    "scenario.starts",
    "scenario.target_gap",
    "scenario.max_bits",
];

impl Raw {
    fn from_text(text: &str) -> Self {
        let mut entries = BTreeMap::new();
        let mut violations = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                violations.push(format!("line {}: expected key=value, got '{line}'", i + 1));
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if entries.insert(key.clone(), value).is_some() {
                violations.push(format!("{key}: set more than once"));
            }
        }
        Self { entries, violations }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Typed lookup falling back to `default`; parse failures are recorded
    /// and the default keeps the extraction going so later violations still
    /// surface.
    fn field<T>(&mut self, key: &str, default: T) -> T
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => default,
            Some(text) => match text.parse() {
                Ok(value) => value,
                Err(e) => {
                    self.violations.push(format!("{key}: {e} (got '{text}')"));
                    default
                }
            },
        }
    }

    fn optional<T>(&mut self, key: &str) -> Option<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let text = self.take(key)?;
        match text.parse() {
            Ok(value) => Some(value),
            Err(e) => {
                self.violations.push(format!("{key}: {e} (got '{text}')"));
                None
            }
        }
    }

    /// Comma-separated real list, e.g. `5,10,15`.
    fn grid(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        match self.take(key) {
            None => default.to_vec(),
            Some(text) => {
                let mut grid = Vec::new();
                for part in text.split(',') {
                    match part.trim().parse::<f64>() {
                        Ok(x) => grid.push(x),
                        Err(e) => {
                            self.violations.push(format!("{key}: {e} (got '{}')", part.trim()));
                        }
                    }
                }
                grid
            }
        }
    }

    /// The knowledge model shared by the single-cell rate experiments.
    /// `scenario.csit` picks the family; `scenario.B` / `scenario.alpha`
    /// parameterize it and are rejected for families they don't apply to
    /// (they stay in the map and fall out as inapplicable keys).
    fn csit(&mut self, default: CsitModel) -> CsitModel {
        let family = self.take("scenario.csit");
        let family = match family.as_deref() {
            None => match default {
                CsitModel::Perfect => "perfect",
                CsitModel::Exponent { .. } => "exponent",
                CsitModel::Rvq { .. } => "rvq",
            },
            Some("perfect") => "perfect",
            Some("exponent") => "exponent",
            Some("rvq") => "rvq",
            Some(other) => {
                self.violations.push(format!(
                    "scenario.csit: expected perfect, exponent, or rvq, got '{other}'"
                ));
                return default;
            }
        };
        match family {
            "perfect" => CsitModel::Perfect,
            "exponent" => {
                let fallback = match default {
                    CsitModel::Exponent { alpha } => alpha,
                    _ => 0.6,
                };
                CsitModel::Exponent { alpha: self.field("scenario.alpha", fallback) }
            }
            _ => {
                let fallback = match default {
                    CsitModel::Rvq { bits } => bits,
                    _ => 10,
                };
                CsitModel::Rvq { bits: self.field("scenario.B", fallback) }
            }
        }
    }

    /// Leftover keys become violations; vocabulary keys are only flagged
    /// when the experiment is known (otherwise they may belong to the
    /// experiment the author failed to name).
    fn finish(mut self, kind: Option<ExperimentKind>) -> Vec<String> {
        for key in self.entries.keys() {
            if !VOCABULARY.contains(&key.as_str()) {
                self.violations.push(format!("unknown key '{key}'"));
            } else if let Some(kind) = kind {
                self.violations
                    .push(format!("{key}: not a setting of experiment '{}'", kind.id()));
            }
        }
        self.violations
    }
}

/// Parse a config, apply overrides and the seed environment variable, and
/// validate. `env_seed` is the raw value of [`SEED_ENV`], injected by the
/// caller so the precedence chain (flag, file, environment, zero) is
/// testable without touching process state.
pub fn parse_config_with(
    text: &str,
    overrides: &Overrides,
    env_seed: Option<&str>,
) -> Result<ExperimentConfig> {
    let mut raw = Raw::from_text(text);

    let kind = match raw.take("experiment") {
        None => {
            let ids: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.id()).collect();
            raw.violations.push(format!("experiment: required (one of {})", ids.join(", ")));
            None
        }
        Some(id) => match id.parse::<ExperimentKind>() {
            Ok(kind) => Some(kind),
            Err(e) => {
                raw.violations.push(match e {
                    Error::Config(msg) => msg,
                    other => other.to_string(),
                });
                None
            }
        },
    };

    // File values are always extracted (so their keys are consumed) even
    // when an override wins.
    let file_seed: Option<u64> = raw.optional("seed");
    let file_trials: Option<usize> = raw.optional("trials");
    let file_output: Option<PathBuf> = raw.optional("output");
    let file_format: Option<OutputFormat> = raw.optional("format");
    let output = overrides.out.clone().or(file_output);
    let format = overrides.format.or(file_format).unwrap_or_default();

    let master_seed = match (overrides.seed.or(file_seed), env_seed) {
        (Some(seed), _) => seed,
        (None, Some(text)) => match text.parse() {
            Ok(seed) => seed,
            Err(e) => {
                raw.violations.push(format!("{SEED_ENV}: {e} (got '{text}')"));
                0
            }
        },
        (None, None) => 0,
    };

    let scenario = kind.map(|kind| extract_scenario(kind, &mut raw));
    let trials = overrides
        .trials
        .or(file_trials)
        .or_else(|| kind.map(ExperimentKind::default_trials))
        .unwrap_or(1);

    let violations = raw.finish(kind);
    if !violations.is_empty() {
        return Err(Error::Config(violations.join("\n")));
    }
    let config = ExperimentConfig {
        // Violations are empty here, so the kind resolved and the scenario
        // was extracted.
        scenario: scenario.expect("experiment id resolved"),
        trials,
        master_seed,
        output,
        format,
    };
    config.validate()?;
    Ok(config)
}

/// Parse a config with no overrides and no environment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with(text, &Overrides::default(), None)
}

/// Read, parse, and validate a config file, consulting [`SEED_ENV`] for the
/// default seed.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let env_seed = std::env::var(SEED_ENV).ok();
    parse_config_with(&text, overrides, env_seed.as_deref())
}

fn extract_scenario(kind: ExperimentKind, raw: &mut Raw) -> Scenario {
    match kind {
        ExperimentKind::DofRegion => {
            Scenario::DofRegion { alpha: raw.field("scenario.alpha", 0.6) }
        }
        ExperimentKind::SumRateVsSnr => Scenario::SumRate {
            antennas: raw.field("scenario.M", 4),
            users: raw.field("scenario.K", 2),
            csit: raw.csit(CsitModel::Rvq { bits: 10 }),
            snr_db: raw.grid("scenario.snr_db", &[5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0]),
        },
        ExperimentKind::OptimizedPrecoders => Scenario::OptimizedPrecoders {
            antennas: raw.field("scenario.M", 4),
            users: raw.field("scenario.K", 2),
            csit: raw.csit(CsitModel::Exponent { alpha: 0.6 }),
            snr_db: raw.grid("scenario.snr_db", &[0.0, 10.0, 20.0, 30.0]),
            samples: raw.field("scenario.samples", 32),
            starts: raw.field("scenario.starts", 2),
        },
        ExperimentKind::HrsMassive => {
            // The large-array profile is opt-in; an explicit antenna count
            // still wins over either profile.
            let profile_antennas = match raw.take("scenario.profile").as_deref() {
                None | Some("desk") => 16,
                Some("full") => 100,
                Some(other) => {
                    raw.violations
                        .push(format!("scenario.profile: expected desk or full, got '{other}'"));
                    16
                }
            };
            Scenario::HrsMassive {
                antennas: raw.field("scenario.M", profile_antennas),
                users: raw.field("scenario.K", 8),
                groups: raw.field("scenario.G", 2),
                alpha: raw.field("scenario.alpha", 0.5),
                spread_deg: raw.field("scenario.spread_deg", 10.0),
                snr_db: raw.grid("scenario.snr_db", &[30.0]),
            }
        }
        ExperimentKind::TwoCell => Scenario::TwoCell {
            alpha: raw.field("scenario.alpha", 0.5),
            snr_db: raw.grid("scenario.snr_db", &[0.0, 10.0, 20.0, 30.0, 40.0]),
        },
        ExperimentKind::TrsThreeCell => Scenario::TrsThreeCell {
            alpha: raw.field("scenario.alpha", 0.3),
            beta: raw.field("scenario.beta", 0.9),
            snr_db: raw.grid("scenario.snr_db", &[0.0, 10.0, 20.0, 30.0, 40.0]),
        },
        ExperimentKind::FeedbackBits => Scenario::FeedbackBits {
            antennas: raw.field("scenario.M", 4),
            users: raw.field("scenario.K", 2),
            snr_db: raw.field("scenario.snr_db", 15.0),
            target_gap: raw.field("scenario.target_gap", 6.0),
            max_bits: raw.field("scenario.max_bits", 20),
        },
    }
}

/// One output row: a metric of one scheme at one x-grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub scheme: String,
    pub x_name: String,
    pub x_value: f64,
    pub metric: String,
    pub mean: f64,
    /// 95% confidence half-width, `1.96·stdErr` over the per-trial values;
    /// zero for closed-form rows.
    pub ci95: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    fn push_samples(
        &mut self,
        config: &ExperimentConfig,
        scheme: &str,
        x_name: &str,
        x_value: f64,
        metric: &str,
        samples: &[f64],
    ) {
        let (mean, ci95) = mean_and_ci95(samples);
        self.rows.push(ResultRow {
            experiment: config.kind().id().to_string(),
            scheme: scheme.to_string(),
            x_name: x_name.to_string(),
            x_value,
            metric: metric.to_string(),
            mean,
            ci95,
            trials: samples.len(),
            seed: config.master_seed,
        });
    }

    /// A row with no sampling variance (closed forms, search outputs).
    fn push_exact(
        &mut self,
        config: &ExperimentConfig,
        scheme: &str,
        x_name: &str,
        x_value: f64,
        metric: &str,
        value: f64,
    ) {
        self.rows.push(ResultRow {
            experiment: config.kind().id().to_string(),
            scheme: scheme.to_string(),
            x_name: x_name.to_string(),
            x_value,
            metric: metric.to_string(),
            mean: value,
            ci95: 0.0,
            trials: config.trials,
            seed: config.master_seed,
        });
    }

    /// First row matching (scheme, metric, x-value).
    pub fn row(&self, scheme: &str, metric: &str, x_value: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.metric == metric && (r.x_value - x_value).abs() <= 1e-9)
    }

    /// Floats are written with [`fmt17`], so they re-parse to the same bits
    /// and reruns diff cleanly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.experiment,
                r.scheme,
                r.x_name,
                fmt17(r.x_value),
                r.metric,
                fmt17(r.mean),
                fmt17(r.ci95),
                r.trials,
                r.seed
            )?;
        }
        Ok(())
    }

    /// The same rows as a JSON array of objects, one object per CSV row.
    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.rows)
            .map_err(|e| Error::NumericalFailure(format!("serializing results: {e}")))?;
        writeln!(out)?;
        Ok(())
    }
}

fn mean_and_ci95(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Mean-rate slope of one scheme in bits per octave of transmit power,
/// read off a table between two grid points: ΔR / log2(P_hi/P_lo). The
/// finite-window stand-in for a DoF measurement.
pub fn measure_slope(table: &ResultTable, scheme: &str, window_db: (f64, f64)) -> Result<f64> {
    let (low, high) = window_db;
    if !(high > low) {
        return Err(Error::InvalidArgument(format!(
            "slope needs an increasing window, got {low} → {high} dB"
        )));
    }
    let rate_at = |db: f64| {
        table
            .rows
            .iter()
            .find(|r| {
                r.scheme == scheme
                    && r.metric == "sum_rate"
                    && r.x_name == "snr_db"
                    && (r.x_value - db).abs() <= 1e-9
            })
            .map(|r| r.mean)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no sum-rate row for scheme '{scheme}' at {db} dB"))
            })
    };
    Ok((rate_at(high)? - rate_at(low)?) / ((high - low) / 10.0 * 10f64.log2()))
}

/// Dispatch a validated config to its runner.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    match &config.scenario {
        Scenario::DofRegion { alpha } => run_dof_region(config, *alpha),
        Scenario::SumRate { antennas, users, csit, snr_db } => {
            run_sumrate(config, *antennas, *users, *csit, snr_db)
        }
        Scenario::OptimizedPrecoders { antennas, users, csit, snr_db, samples, starts } => {
            run_optimized(config, *antennas, *users, *csit, snr_db, *samples, *starts)
        }
        Scenario::HrsMassive { antennas, users, groups, alpha, spread_deg, snr_db } => {
            run_hrs(config, *antennas, *users, *groups, *alpha, *spread_deg, snr_db)
        }
        Scenario::TwoCell { alpha, snr_db } => run_two_cell(config, *alpha, snr_db),
        Scenario::TrsThreeCell { alpha, beta, snr_db } => {
            run_trs(config, *alpha, *beta, snr_db)
        }
        Scenario::FeedbackBits { antennas, users, snr_db, target_gap, max_bits } => {
            run_feedback(config, *antennas, *users, *snr_db, *target_gap, *max_bits)
        }
    }
}

/// Write the table where the config points: its output path, else stdout.
pub fn write_output(config: &ExperimentConfig, table: &ResultTable) -> Result<()> {
    match &config.output {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            write_table(table, config.format, std::io::BufWriter::new(file))
        }
        None => write_table(table, config.format, std::io::stdout().lock()),
    }
}

pub fn write_table<W: Write>(table: &ResultTable, format: OutputFormat, out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => table.write_csv(out),
        OutputFormat::Json => table.write_json(out),
    }
}

fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Failures inside a trial keep the trial index; the original error text
/// survives in the message.
fn at_trial(trial: u64, e: Error) -> Error {
    Error::NumericalFailure(format!("trial {trial}: {e}"))
}

fn run_dof_region(config: &ExperimentConfig, alpha: f64) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for strategy in Strategy::ALL {
        let region = dof_region_two_user(strategy, alpha);
        for (i, &(d1, d2)) in region.vertices.iter().enumerate() {
            table.push_exact(config, strategy.name(), "vertex_index", i as f64, "d1", d1);
            table.push_exact(config, strategy.name(), "vertex_index", i as f64, "d2", d2);
        }
    }
    Ok(table)
}

/// Rate splitting against the linear baselines, all four schemes priced on
/// the same draws. The private power share is re-tuned at every operating
/// point on the identical trial batch, so the reported curve is the tuned
/// one rather than a single compromise split.
fn run_sumrate(
    config: &ExperimentConfig,
    antennas: usize,
    users: usize,
    csit: CsitModel,
    snr_db: &[f64],
) -> Result<ResultTable> {
    const SCHEMES: [Strategy; 4] = [Strategy::Rs, Strategy::Zfbf, Strategy::SuMu, Strategy::Tdma];
    let mut table = ResultTable::default();
    for &db in snr_db {
        let power = from_db(db);
        let scenario = PowerSplitScenario {
            antennas,
            users,
            power,
            csit,
            seed: config.master_seed,
        };
        // Same seed, same lanes: the split search prices exactly the batch
        // evaluated below.
        let split = optimize_power_split(&scenario, config.trials, 1e-4)?;
        let per_trial: Vec<[f64; 4]> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| {
                sumrate_trial(trial, config.master_seed, antennas, users, csit, power, split.rho)
                    .map_err(|e| at_trial(trial, e))
            })
            .collect::<Result<_>>()?;
        for (which, strategy) in SCHEMES.into_iter().enumerate() {
            let samples: Vec<f64> = per_trial.iter().map(|r| r[which]).collect();
            table.push_samples(config, strategy.name(), "snr_db", db, "sum_rate", &samples);
        }
        table.push_exact(config, Strategy::Rs.name(), "snr_db", db, "private_share", split.rho);
    }
    Ok(table)
}

fn sumrate_trial(
    trial: u64,
    seed: u64,
    antennas: usize,
    users: usize,
    csit: CsitModel,
    power: f64,
    rho: f64,
) -> Result<[f64; 4]> {
    let mut channel_rng = trial_rng(seed, trial, LANE_CHANNEL);
    let h = ChannelRealization::draw_iid(users, antennas, &mut channel_rng);
    let mut csit_rng = trial_rng(seed, trial, LANE_CSIT);
    let estimate = csit.realize(&h, power, &mut csit_rng)?;

    let dirs = zf_directions(&estimate.matrix)?;
    let common = common_precoder(&estimate.matrix, CommonDirection::DominantSvd)?;
    let rs = evaluate_rates(&h, &PrecoderSet::rate_splitting(&dirs, &common, rho, power)?)?;
    let zfbf = baseline_rates(&h, &estimate.matrix, power, Scheme::Zfbf)?;
    let tdma = baseline_rates(&h, &estimate.matrix, power, Scheme::Tdma)?;
    // Per-realization switching picks the better of the two by sum rate.
    let sumu = zfbf.sum_rate.max(tdma.sum_rate);
    Ok([rs.sum_rate, zfbf.sum_rate, sumu, tdma.sum_rate])
}

/// Sample-average optimized precoders against the fixed-direction designs
/// they are initialized from, evaluated on the true channel.
fn run_optimized(
    config: &ExperimentConfig,
    antennas: usize,
    users: usize,
    csit: CsitModel,
    snr_db: &[f64],
    samples: usize,
    starts: usize,
) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for &db in snr_db {
        let power = from_db(db);
        let scenario = PowerSplitScenario {
            antennas,
            users,
            power,
            csit,
            seed: config.master_seed,
        };
        let split = optimize_power_split(&scenario, config.trials, 1e-4)?;
        let per_trial: Vec<[f64; 3]> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| {
                optimized_trial(
                    trial,
                    config.master_seed,
                    antennas,
                    users,
                    csit,
                    power,
                    split.rho,
                    samples,
                    starts,
                )
                .map_err(|e| at_trial(trial, e))
            })
            .collect::<Result<_>>()?;
        for (which, scheme) in ["rs-wmmse", "rs-zf", "zfbf"].into_iter().enumerate() {
            let values: Vec<f64> = per_trial.iter().map(|r| r[which]).collect();
            table.push_samples(config, scheme, "snr_db", db, "sum_rate", &values);
        }
    }
    Ok(table)
}

#[allow(clippy::too_many_arguments)]
fn optimized_trial(
    trial: u64,
    seed: u64,
    antennas: usize,
    users: usize,
    csit: CsitModel,
    power: f64,
    rho: f64,
    samples: usize,
    starts: usize,
) -> Result<[f64; 3]> {
    let mut channel_rng = trial_rng(seed, trial, LANE_CHANNEL);
    let h = ChannelRealization::draw_iid(users, antennas, &mut channel_rng);
    let mut csit_rng = trial_rng(seed, trial, LANE_CSIT);
    let estimate = csit.realize(&h, power, &mut csit_rng)?;

    let dirs = zf_directions(&estimate.matrix)?;
    let common = common_precoder(&estimate.matrix, CommonDirection::DominantSvd)?;
    let zf_rs = evaluate_rates(&h, &PrecoderSet::rate_splitting(&dirs, &common, rho, power)?)?;
    let zfbf = baseline_rates(&h, &estimate.matrix, power, Scheme::Zfbf)?;

    // One derived stream per trial keeps the conditional sample batch and
    // the restart draws independent across trials but fixed under reruns.
    let trial_seed = seed.wrapping_add((trial + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut opts = WmmseOptions::new(samples, Objective::SumRate, 150, 1e-5);
    opts.init_rho = rho;
    opts.sample_seed = trial_seed;
    let state =
        wmmse_multi_start(&estimate.matrix, estimate.quality, power, &opts, starts, trial_seed)?;
    let optimized = evaluate_rates(&h, &state.precoders)?;

    Ok([optimized.sum_rate, zf_rs.sum_rate, zfbf.sum_rate])
}

/// Two-tier transmission over clustered users. The three schemes share the
/// identical private structure and differ only in which common layers may
/// carry power: both tiers, the outer layer alone, or none. Each scheme's
/// power split is picked from a fixed grid by batch mean, so the scheme
/// means are ordered by construction and the interesting quantity is the
/// size of the gaps.
fn run_hrs(
    config: &ExperimentConfig,
    antennas: usize,
    users: usize,
    groups: usize,
    alpha: f64,
    spread_deg: f64,
    snr_db: &[f64],
) -> Result<ResultTable> {
    const OUTER_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    const INNER_GRID: [f64; 5] = [0.6, 0.7, 0.8, 0.9, 1.0];

    let per_cluster = users / groups;
    let azimuth_step = 120.0 / groups as f64;
    let covariances: Vec<SpatialCovariance> = (0..users)
        .map(|k| {
            let g = (k / per_cluster) as f64;
            one_ring_covariance(
                (g * azimuth_step).to_radians(),
                spread_deg.to_radians(),
                antennas,
                0.5,
            )
        })
        .collect::<Result<_>>()?;
    let grouping = group_users(&covariances, groups, config.master_seed)?;
    let outers: Vec<CMat> =
        (0..groups).map(|g| outer_precoder(&grouping, g)).collect::<Result<_>>()?;

    let candidates: Vec<(f64, f64)> = OUTER_GRID
        .iter()
        .flat_map(|&o| INNER_GRID.iter().map(move |&i| (o, i)))
        .collect();

    let mut table = ResultTable::default();
    for &db in snr_db {
        let power = from_db(db);
        let tau = power.powf(-alpha).min(1.0).sqrt();
        // rates[trial][candidate]
        let rates: Vec<Vec<f64>> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| {
                hrs_trial(
                    trial,
                    config.master_seed,
                    &covariances,
                    &grouping,
                    &outers,
                    &candidates,
                    tau,
                    power,
                )
                .map_err(|e| at_trial(trial, e))
            })
            .collect::<Result<_>>()?;

        let candidate_mean = |c: usize| {
            rates.iter().map(|r| r[c]).sum::<f64>() / rates.len() as f64
        };
        let best_candidate = |allowed: &dyn Fn(f64, f64) -> bool| {
            candidates
                .iter()
                .enumerate()
                .filter(|(_, &(o, i))| allowed(o, i))
                .map(|(c, _)| c)
                .max_by(|&a, &b| candidate_mean(a).total_cmp(&candidate_mean(b)))
                .expect("grids are nonempty")
        };
        let schemes = [
            ("hrs", best_candidate(&|_, _| true)),
            ("rs", best_candidate(&|_, inner| inner == 1.0)),
            ("no-common", best_candidate(&|outer, inner| outer == 1.0 && inner == 1.0)),
        ];
        for (name, candidate) in schemes {
            let samples: Vec<f64> = rates.iter().map(|r| r[candidate]).collect();
            table.push_samples(config, name, "snr_db", db, "sum_rate", &samples);
            let (outer, inner) = candidates[candidate];
            table.push_exact(config, name, "snr_db", db, "outer_share", outer);
            table.push_exact(config, name, "snr_db", db, "inner_share", inner);
        }
        // Schemes share every draw, so the honest uncertainty of a gap is the
        // confidence interval of the per-trial differences — far tighter than
        // the per-scheme intervals, which ignore the pairing.
        let paired = |a: usize, b: usize| -> Vec<f64> {
            rates.iter().map(|r| r[a] - r[b]).collect()
        };
        let gain_of_outer = paired(schemes[1].1, schemes[2].1);
        let gain_of_inner = paired(schemes[0].1, schemes[1].1);
        table.push_samples(config, "hrs", "snr_db", db, "gain_over_rs", &gain_of_inner);
        table.push_samples(config, "rs", "snr_db", db, "gain_over_no_common", &gain_of_outer);
    }
    Ok(table)
}

#[allow(clippy::too_many_arguments)]
fn hrs_trial(
    trial: u64,
    seed: u64,
    covariances: &[SpatialCovariance],
    grouping: &crate::hrs::Grouping,
    outers: &[CMat],
    candidates: &[(f64, f64)],
    tau: f64,
    power: f64,
) -> Result<Vec<f64>> {
    let mut channel_rng = trial_rng(seed, trial, LANE_CHANNEL);
    let channels: Vec<_> =
        covariances.iter().map(|c| c.draw(&mut channel_rng)).collect::<Result<_>>()?;
    let h = ChannelRealization::from_user_channels(&channels)?;

    // Estimation error drawn from each user's own covariance keeps the
    // estimate inside the physical subspace the outer tier works with.
    let mut csit_rng = trial_rng(seed, trial, LANE_CSIT);
    let estimated: Vec<_> = covariances
        .iter()
        .enumerate()
        .map(|(k, cov)| {
            let err = cov.draw(&mut csit_rng)?;
            Ok(channels[k].scale((1.0 - tau * tau).sqrt()) + err.scale(tau))
        })
        .collect::<Result<_>>()?;
    let estimate = ChannelRealization::from_user_channels(&estimated)?.matrix;
    let csit = effective_csit(&estimate, grouping, outers)?;

    candidates
        .iter()
        .map(|&(outer, inner)| {
            let splits = HrsPowerSplit::uniform(outer, inner, grouping.groups);
            let set = hrs_assemble(grouping, &csit, &splits, power)?;
            Ok(hrs_evaluate_rates(&h, &set, grouping)?.sum_rate)
        })
        .collect()
}

/// Two coordinated transmitters: rate splitting with the tuned split
/// against zero-forcing alone. The split search and the per-trial rows
/// price the identical draws, so the row means reproduce the search's
/// objective values.
fn run_two_cell(config: &ExperimentConfig, alpha: f64, snr_db: &[f64]) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for &db in snr_db {
        let power = from_db(db);
        for (name, scheme) in
            [("rs", TwoCellScheme::RateSplitting), ("zf", TwoCellScheme::ZeroForcing)]
        {
            let outcome =
                two_cell_mean_sum_rate(alpha, power, scheme, config.trials, config.master_seed)?;
            let samples: Vec<f64> = (0..config.trials as u64)
                .into_par_iter()
                .map(|trial| {
                    let mut channel_rng = trial_rng(config.master_seed, trial, LANE_CHANNEL);
                    let links = CellLinks::draw_iid(2, 2, &mut channel_rng);
                    let mut csit_rng = trial_rng(config.master_seed, trial, LANE_CSIT);
                    two_cell_rs_rates(&links, alpha, power, outcome.split, &mut csit_rng)
                        .map(|r| r.sum_rate)
                        .map_err(|e| at_trial(trial, e))
                })
                .collect::<Result<_>>()?;
            table.push_samples(config, name, "snr_db", db, "sum_rate", &samples);
            if let TwoCellScheme::RateSplitting = scheme {
                table.push_exact(config, name, "snr_db", db, "private_share", outcome.split);
            }
        }
    }
    Ok(table)
}

/// Layered splitting matched to the three-cell quality topology against a
/// private-only plan. The layered shares are picked per operating point
/// from a grid whose corner is exactly the private-only plan, so the
/// layered batch mean can never trail the baseline and the gap measures
/// what the common layers buy.
fn run_trs(
    config: &ExperimentConfig,
    alpha: f64,
    beta: f64,
    snr_db: &[f64],
) -> Result<ResultTable> {
    // Per transmitter: the lone user's private share (its remainder feeds
    // the top layer), the paired transmitters' common share, and the paired
    // transmitters' private share.
    const SOLO_GRID: [f64; 4] = [0.3, 0.6, 0.9, 1.0];
    const GROUP_GRID: [f64; 4] = [0.0, 0.1, 0.3, 0.5];
    const PAIR_GRID: [f64; 4] = [0.05, 0.2, 0.5, 1.0];

    let topology = CellTopology::three_cell(alpha, beta);
    let mut candidates = Vec::new();
    for &solo in &SOLO_GRID {
        for &group in &GROUP_GRID {
            for &pair in &PAIR_GRID {
                if group + pair <= 1.0 {
                    candidates.push((solo, group, pair));
                }
            }
        }
    }
    let plans: Vec<LayeredPlan> = candidates
        .iter()
        .map(|&(solo, group, pair)| {
            trs_build_plan_with(
                &topology,
                &TrsSplits {
                    system_share: 1.0 - solo,
                    group_share: group,
                    private_shares: vec![solo, pair, pair],
                },
            )
        })
        .collect::<Result<_>>()?;
    let baseline = candidates
        .iter()
        .position(|&c| c == (1.0, 0.0, 1.0))
        .expect("the grids contain the private-only corner");

    let mut table = ResultTable::default();
    for &db in snr_db {
        let power = from_db(db);
        // rates[trial][candidate]
        let rates: Vec<Vec<f64>> = (0..config.trials as u64)
            .into_par_iter()
            .map(|trial| {
                trs_trial(trial, config.master_seed, &topology, &plans, power)
                    .map_err(|e| at_trial(trial, e))
            })
            .collect::<Result<_>>()?;
        let candidate_mean =
            |c: usize| rates.iter().map(|r| r[c]).sum::<f64>() / rates.len() as f64;
        let best = (0..candidates.len())
            .max_by(|&a, &b| candidate_mean(a).total_cmp(&candidate_mean(b)))
            .expect("the candidate grid is nonempty");
        for (name, candidate) in [("trs", best), ("zf", baseline)] {
            let samples: Vec<f64> = rates.iter().map(|r| r[candidate]).collect();
            table.push_samples(config, name, "snr_db", db, "sum_rate", &samples);
        }
        let (solo, group, pair) = candidates[best];
        table.push_exact(config, "trs", "snr_db", db, "solo_private_share", solo);
        table.push_exact(config, "trs", "snr_db", db, "group_common_share", group);
        table.push_exact(config, "trs", "snr_db", db, "pair_private_share", pair);
    }
    Ok(table)
}

fn trs_trial(
    trial: u64,
    seed: u64,
    topology: &CellTopology,
    plans: &[LayeredPlan],
    power: f64,
) -> Result<Vec<f64>> {
    let mut channel_rng = trial_rng(seed, trial, LANE_CHANNEL);
    let links = CellLinks::draw_iid(topology.cells, topology.antennas_per_tx, &mut channel_rng);
    let mut csit_rng = trial_rng(seed, trial, LANE_CSIT);
    let estimates = estimate_links(&links, topology, power, &mut csit_rng)?;
    // The plans share one stream layout and differ only in power shares,
    // and directions never depend on shares, so one precoder set serves
    // every candidate.
    let precoders = trs_precoders(&plans[0], &estimates)?;
    plans
        .iter()
        .map(|plan| Ok(trs_evaluate_rates(&links, plan, &precoders, power)?.sum_rate))
        .collect()
}

/// Smallest feedback budget holding the target rate gap, per scheme, with
/// the gap curve the search walked. Both schemes share draws, so the bit
/// difference is read off one common random experiment.
fn run_feedback(
    config: &ExperimentConfig,
    antennas: usize,
    users: usize,
    snr_db: f64,
    target_gap: f64,
    max_bits: u32,
) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for (name, scheme) in
        [("rs", FeedbackScheme::RateSplitting), ("zfbf", FeedbackScheme::ZeroForcing)]
    {
        let search = FeedbackSearch {
            target_gap,
            power: from_db(snr_db),
            antennas,
            users,
            scheme,
            trials: config.trials,
            seed: config.master_seed,
            max_bits,
        };
        let report = required_feedback_bits(&search)?;
        table.push_exact(config, name, "snr_db", snr_db, "reference_rate", report.reference_rate);
        for &(bits, gap) in &report.gap_by_bits {
            table.push_exact(config, name, "bits", f64::from(bits), "rate_gap", gap);
        }
        let bits = report.bits.ok_or_else(|| {
            Error::SearchFailure(format!(
                "{name}: no budget of at most {max_bits} bits holds the sum-rate gap \
                 within {target_gap} bits/s/Hz"
            ))
        })?;
        table.push_exact(config, name, "target_gap", target_gap, "required_bits", f64::from(bits));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multicell::trs_mean_sum_rate;
    use approx::assert_abs_diff_eq;

    fn config_for(kind: ExperimentKind, extra: &str) -> ExperimentConfig {
        let text = format!("experiment={}\n{extra}", kind.id());
        parse_config(&text).unwrap()
    }

    #[test]
    fn every_key_of_a_full_config_lands() {
        let text = "\
            # sweep with everything spelled out\n\
            experiment=sumrate-vs-snr\n\
            trials=250\n\
            seed=7\n\
            output=run.csv\n\
            format=json\n\
            scenario.M=6\n\
            scenario.K=3\n\
            scenario.csit=rvq\n\
            scenario.B=12\n\
            scenario.snr_db=0,10,20\n";
        let config = parse_config(text).unwrap();
        assert_eq!(config.kind(), ExperimentKind::SumRateVsSnr);
        assert_eq!(config.trials, 250);
        assert_eq!(config.master_seed, 7);
        assert_eq!(config.output.as_deref(), Some(Path::new("run.csv")));
        assert_eq!(config.format, OutputFormat::Json);
        match &config.scenario {
            Scenario::SumRate { antennas, users, csit, snr_db } => {
                assert_eq!((*antennas, *users), (6, 3));
                assert_eq!(*csit, CsitModel::Rvq { bits: 12 });
                assert_eq!(snr_db, &[0.0, 10.0, 20.0]);
            }
            other => panic!("wrong scenario {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_an_id_only_config() {
        let config = config_for(ExperimentKind::SumRateVsSnr, "");
        assert_eq!(config.trials, 2000);
        assert_eq!(config.master_seed, 0);
        assert_eq!(config.format, OutputFormat::Csv);
        assert!(config.output.is_none());
        match &config.scenario {
            Scenario::SumRate { antennas, users, csit, snr_db } => {
                assert_eq!((*antennas, *users), (4, 2));
                assert_eq!(*csit, CsitModel::Rvq { bits: 10 });
                assert_eq!(snr_db.len(), 7);
            }
            other => panic!("wrong scenario {other:?}"),
        }
    }

    #[test]
    fn violations_are_reported_together() {
        let text = "\
            experiment=sumrate-vs-snr\n\
            trials=fifty\n\
            scenario.B=ten\n\
            scenario.G=2\n\
            scenario.banana=1\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let message = err.to_string();
        for needle in [
            "trials: ",
            "scenario.B: ",
            "scenario.G: not a setting of experiment 'sumrate-vs-snr'",
            "unknown key 'scenario.banana'",
        ] {
            assert!(message.contains(needle), "missing '{needle}' in:\n{message}");
        }
    }

    #[test]
    fn syntax_and_duplicates_are_rejected() {
        let text = "experiment=dof-region\njust a stray line\nseed=1\nseed=2\n";
        let message = parse_config(text).unwrap_err().to_string();
        assert!(message.contains("line 2: expected key=value"), "{message}");
        assert!(message.contains("seed: set more than once"), "{message}");
    }

    #[test]
    fn unknown_experiment_lists_the_valid_ids() {
        let message = parse_config("experiment=sumrate\n").unwrap_err().to_string();
        assert!(message.contains("unknown experiment 'sumrate'"), "{message}");
        assert!(message.contains("dof-region"), "{message}");
        assert!(message.contains("trs-three-cell"), "{message}");
        // A missing id is its own violation, and scenario keys are not
        // second-guessed when the experiment is unknown.
        let message = parse_config("scenario.M=4\n").unwrap_err().to_string();
        assert!(message.contains("experiment: required"), "{message}");
        assert!(!message.contains("scenario.M"), "{message}");
    }

    #[test]
    fn csit_parameters_must_match_the_family() {
        let err = parse_config(
            "experiment=sumrate-vs-snr\nscenario.csit=perfect\nscenario.B=10\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("scenario.B"), "{err}");

        let err = parse_config(
            "experiment=sumrate-vs-snr\nscenario.csit=rvq\nscenario.alpha=0.5\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("scenario.alpha"), "{err}");

        let config =
            parse_config("experiment=sumrate-vs-snr\nscenario.csit=exponent\nscenario.alpha=0.7\n")
                .unwrap();
        match config.scenario {
            Scenario::SumRate { csit, .. } => {
                assert_eq!(csit, CsitModel::Exponent { alpha: 0.7 })
            }
            other => panic!("wrong scenario {other:?}"),
        }
    }

    #[test]
    fn rate_experiments_enforce_the_trial_floor() {
        let err = parse_config("experiment=two-cell\ntrials=50\n").unwrap_err();
        assert!(err.to_string().contains("at least 100 trials"), "{err}");
        assert_eq!(err.exit_code(), 2);
        // The closed-form experiment has no Monte Carlo floor.
        assert_eq!(config_for(ExperimentKind::DofRegion, "").trials, 1);
    }

    #[test]
    fn snr_grid_must_climb() {
        for grid in ["20,10", "10,10,20", ""] {
            let text = format!("experiment=two-cell\nscenario.snr_db={grid}\n");
            let err = parse_config(&text).unwrap_err();
            assert!(err.to_string().contains("scenario.snr_db"), "{grid}: {err}");
        }
        // A single operating point is a legal (trivially increasing) grid.
        parse_config("experiment=two-cell\nscenario.snr_db=20\n").unwrap();
    }

    #[test]
    fn trs_quality_pattern_is_checked_up_front() {
        let err =
            parse_config("experiment=trs-three-cell\nscenario.alpha=0.9\nscenario.beta=0.2\n")
                .unwrap_err();
        assert!(err.to_string().contains("scenario.alpha"), "{err}");
    }

    #[test]
    fn seed_precedence_is_flag_file_environment() {
        let text = "experiment=dof-region\nseed=5\n";
        let flag = Overrides { seed: Some(9), ..Overrides::default() };

        assert_eq!(parse_config_with(text, &flag, Some("3")).unwrap().master_seed, 9);
        assert_eq!(
            parse_config_with(text, &Overrides::default(), Some("3")).unwrap().master_seed,
            5
        );
        assert_eq!(
            parse_config_with("experiment=dof-region\n", &Overrides::default(), Some("3"))
                .unwrap()
                .master_seed,
            3
        );
        assert_eq!(
            parse_config_with("experiment=dof-region\n", &Overrides::default(), None)
                .unwrap()
                .master_seed,
            0
        );
        let err =
            parse_config_with("experiment=dof-region\n", &Overrides::default(), Some("junk"))
                .unwrap_err();
        assert!(err.to_string().contains(SEED_ENV), "{err}");
    }

    #[test]
    fn overrides_beat_file_values() {
        let text = "experiment=dof-region\ntrials=4\nformat=csv\noutput=a.csv\n";
        let overrides = Overrides {
            seed: Some(11),
            trials: Some(6),
            out: Some(PathBuf::from("b.json")),
            format: Some(OutputFormat::Json),
        };
        let config = parse_config_with(text, &overrides, None).unwrap();
        assert_eq!(config.trials, 6);
        assert_eq!(config.master_seed, 11);
        assert_eq!(config.output.as_deref(), Some(Path::new("b.json")));
        assert_eq!(config.format, OutputFormat::Json);
    }

    #[test]
    fn missing_config_file_is_a_config_error() {
        let err = load_config(Path::new("/nonexistent/run.conf"), &Overrides::default())
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn ci_arithmetic_matches_the_definition() {
        let (mean, ci) = mean_and_ci95(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(mean, 2.5, epsilon = 1e-15);
        // Sample variance 5/3, standard error √(5/12).
        assert_abs_diff_eq!(ci, 1.96 * (5.0f64 / 12.0).sqrt(), epsilon = 1e-15);
        assert_eq!(mean_and_ci95(&[7.0]), (7.0, 0.0));
        let (_, ci) = mean_and_ci95(&[2.0, 2.0, 2.0]);
        assert_eq!(ci, 0.0);
    }

    #[test]
    fn csv_layout_round_trips() {
        let mut table = ResultTable::default();
        let config = config_for(ExperimentKind::DofRegion, "seed=3\n");
        table.push_exact(&config, "rs", "vertex_index", 2.0, "d1", 0.1 + 0.2);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row = lines.next().unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 9);
        assert_eq!(fields[0], "dof-region");
        assert_eq!(fields[8], "3");
        // The 17-digit form reparses to the identical bits.
        assert_eq!(fields[5].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert!(lines.next().is_none());
    }

    #[test]
    fn json_mirrors_the_rows() {
        let config = config_for(ExperimentKind::DofRegion, "");
        let table = run_experiment(&config).unwrap();
        let mut buf = Vec::new();
        table.write_json(&mut buf).unwrap();
        let parsed: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let rows = parsed.as_array().unwrap();
        assert_eq!(rows.len(), table.rows.len());
        assert_eq!(rows[0]["experiment"], "dof-region");
        assert_eq!(rows[0]["x_name"], "vertex_index");
        assert!(rows[0]["mean"].is_number());
    }

    #[test]
    fn dof_region_rows_are_the_polygons_verbatim() {
        let config = config_for(ExperimentKind::DofRegion, "scenario.alpha=0.6\n");
        let table = run_experiment(&config).unwrap();
        let expected: usize = Strategy::ALL
            .iter()
            .map(|&s| 2 * dof_region_two_user(s, 0.6).vertices.len())
            .sum();
        assert_eq!(table.rows.len(), expected);
        assert!(table.rows.iter().all(|r| r.ci95 == 0.0));

        let region = dof_region_two_user(Strategy::Rs, 0.6);
        for (i, &(d1, d2)) in region.vertices.iter().enumerate() {
            assert_eq!(table.row("rs", "d1", i as f64).unwrap().mean, d1);
            assert_eq!(table.row("rs", "d2", i as f64).unwrap().mean, d2);
        }
    }

    #[test]
    fn slope_reads_the_table_and_rejects_missing_points() {
        let config = config_for(ExperimentKind::SumRateVsSnr, "");
        let mut table = ResultTable::default();
        table.push_samples(&config, "rs", "snr_db", 30.0, "sum_rate", &[10.0]);
        // One decade of power at slope one adds log2(10) bits.
        table.push_samples(&config, "rs", "snr_db", 40.0, "sum_rate", &[10.0 + 10f64.log2()]);
        let slope = measure_slope(&table, "rs", (30.0, 40.0)).unwrap();
        assert_abs_diff_eq!(slope, 1.0, epsilon = 1e-12);

        assert!(measure_slope(&table, "rs", (20.0, 40.0)).is_err());
        assert!(measure_slope(&table, "zfbf", (30.0, 40.0)).is_err());
        assert!(measure_slope(&table, "rs", (40.0, 30.0)).is_err());
    }

    #[test]
    fn sumrate_runner_reruns_identically_and_moves_with_the_seed() {
        let text = "experiment=sumrate-vs-snr\ntrials=100\nscenario.B=6\nscenario.snr_db=10,20\n";
        let config = parse_config(text).unwrap();
        let first = run_experiment(&config).unwrap();
        let second = run_experiment(&config).unwrap();
        assert_eq!(first, second);
        // Four scheme rows plus the tuned-split row, per grid point.
        assert_eq!(first.rows.len(), 10);
        assert!(first.row("rs", "private_share", 20.0).is_some());

        let reseeded = parse_config_with(
            text,
            &Overrides { seed: Some(1), ..Overrides::default() },
            None,
        )
        .unwrap();
        let third = run_experiment(&reseeded).unwrap();
        assert_ne!(first.rows[0].mean, third.rows[0].mean);
        assert!(third.rows.iter().all(|r| r.seed == 1));
    }

    #[test]
    fn two_cell_rows_reproduce_the_search_objective() {
        let config =
            parse_config("experiment=two-cell\ntrials=120\nscenario.snr_db=20\n").unwrap();
        let table = run_experiment(&config).unwrap();
        for (name, scheme) in
            [("rs", TwoCellScheme::RateSplitting), ("zf", TwoCellScheme::ZeroForcing)]
        {
            let outcome = two_cell_mean_sum_rate(0.5, from_db(20.0), scheme, 120, 0).unwrap();
            let row = table.row(name, "sum_rate", 20.0).unwrap();
            assert_abs_diff_eq!(row.mean, outcome.mean_sum_rate, epsilon = 1e-9);
            assert!(row.ci95 > 0.0);
        }
    }

    #[test]
    fn trs_rows_reproduce_the_mean_helper_and_nest_the_baseline() {
        let config =
            parse_config("experiment=trs-three-cell\ntrials=110\nscenario.snr_db=15\n").unwrap();
        let table = run_experiment(&config).unwrap();

        // The baseline corner of the share grid is exactly the private-only
        // plan, so its row must match the standalone mean helper on the
        // identical draws.
        let topology = CellTopology::three_cell(0.3, 0.9);
        let private_only = TrsSplits {
            system_share: 0.0,
            group_share: 0.0,
            private_shares: vec![1.0; 3],
        };
        let expected =
            trs_mean_sum_rate(&topology, &private_only, from_db(15.0), 110, 0).unwrap();
        let zf = table.row("zf", "sum_rate", 15.0).unwrap();
        assert_abs_diff_eq!(zf.mean, expected, epsilon = 1e-9);

        // The tuned layered plan is picked from a grid containing that
        // corner, so its batch mean can never trail.
        let trs = table.row("trs", "sum_rate", 15.0).unwrap();
        assert!(trs.mean >= zf.mean - 1e-12, "{} vs {}", trs.mean, zf.mean);
        for metric in ["solo_private_share", "group_common_share", "pair_private_share"] {
            let share = table.row("trs", metric, 15.0).unwrap();
            assert!(share.ci95 == 0.0 && (0.0..=1.0).contains(&share.mean));
        }
    }

    #[test]
    fn hrs_scheme_means_are_ordered_by_construction() {
        let text = "\
            experiment=hrs-massive\n\
            trials=100\n\
            scenario.M=8\n\
            scenario.K=4\n\
            scenario.snr_db=25\n";
        let config = parse_config(text).unwrap();
        let table = run_experiment(&config).unwrap();
        let hrs = table.row("hrs", "sum_rate", 25.0).unwrap().mean;
        let rs = table.row("rs", "sum_rate", 25.0).unwrap().mean;
        let none = table.row("no-common", "sum_rate", 25.0).unwrap().mean;
        assert!(hrs >= rs - 1e-12 && rs >= none - 1e-12, "{hrs} / {rs} / {none}");
        // The paired gap rows restate the same ordering with the tight
        // common-draw uncertainty.
        let inner_gain = table.row("hrs", "gain_over_rs", 25.0).unwrap();
        let outer_gain = table.row("rs", "gain_over_no_common", 25.0).unwrap();
        assert!((inner_gain.mean - (hrs - rs)).abs() < 1e-9);
        assert!((outer_gain.mean - (rs - none)).abs() < 1e-9);
        assert!(inner_gain.ci95 >= 0.0 && outer_gain.ci95 >= 0.0);
    }

    #[test]
    fn optimized_runner_beats_its_own_starting_point_on_average() {
        let text = "\
            experiment=optimized-precoders\n\
            trials=100\n\
            scenario.alpha=0.6\n\
            scenario.snr_db=25\n\
            scenario.samples=8\n\
            scenario.starts=1\n";
        let config = parse_config(text).unwrap();
        let table = run_experiment(&config).unwrap();
        let optimized = table.row("rs-wmmse", "sum_rate", 25.0).unwrap().mean;
        let fixed = table.row("rs-zf", "sum_rate", 25.0).unwrap().mean;
        let zfbf = table.row("zfbf", "sum_rate", 25.0).unwrap().mean;
        assert!(optimized > fixed, "{optimized} vs {fixed}");
        assert!(fixed > zfbf, "{fixed} vs {zfbf}");
    }

    #[test]
    fn feedback_rows_echo_the_budget_search() {
        let text = "\
            experiment=feedback-bits\n\
            trials=100\n\
            scenario.snr_db=10\n\
            scenario.target_gap=4\n\
            scenario.max_bits=12\n";
        let config = parse_config(text).unwrap();
        let table = run_experiment(&config).unwrap();

        for (name, scheme) in
            [("rs", FeedbackScheme::RateSplitting), ("zfbf", FeedbackScheme::ZeroForcing)]
        {
            let mut search = FeedbackSearch::new(4.0, from_db(10.0), 4, scheme, 100);
            search.max_bits = 12;
            let report = required_feedback_bits(&search).unwrap();
            let required = table.row(name, "required_bits", 4.0).unwrap().mean;
            assert_eq!(required, f64::from(report.bits.unwrap()));
            let gap_rows =
                table.rows.iter().filter(|r| r.scheme == name && r.metric == "rate_gap").count();
            assert_eq!(gap_rows, report.gap_by_bits.len());
            let reference = table.row(name, "reference_rate", 10.0).unwrap().mean;
            assert_abs_diff_eq!(reference, report.reference_rate, epsilon = 0.0);
        }
    }

    #[test]
    fn unattainable_feedback_target_is_a_search_failure() {
        let text = "\
            experiment=feedback-bits\n\
            trials=100\n\
            scenario.snr_db=30\n\
            scenario.target_gap=0.001\n\
            scenario.max_bits=3\n";
        let config = parse_config(text).unwrap();
        let err = run_experiment(&config).unwrap_err();
        assert!(matches!(err, Error::SearchFailure(_)), "{err}");
        assert_eq!(err.exit_code(), 3);
    }
}

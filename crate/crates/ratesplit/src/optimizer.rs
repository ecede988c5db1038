//! Finite-SNR design searches: the 1-D power-split search, the
//! feedback-budget search, and a sample-average weighted-MMSE alternating
//! optimizer for the precoders themselves.

use crate::channel::{ChannelRealization, CsitModel, CsitQuality, RVQ_MAX_BITS};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_mat, golden_section_max, unit_vector, CMat, CVec};
use crate::seeding::{trial_rng, LANE_CHANNEL, LANE_CODEBOOK_BASE, LANE_CSIT, LANE_SCHEME};
use crate::transceiver::{
    baseline_rates, bits, common_precoder, zf_directions, CommonDirection, MessageSplit,
    PrecoderSet, Scheme,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::LN_2;
use std::str::FromStr;

/// Receive powers of one realization against fixed beam directions. Rates at
/// any power split follow from these scalars alone, which keeps repeated 1-D
/// searches over the split cheap: the expensive channel algebra happens once.
#[derive(Debug, Clone)]
pub struct StreamGains {
    /// Per-user receive power of the common direction.
    pub common: Vec<f64>,
    /// `cross[k][j]` is user k's receive power from private direction j.
    pub cross: Vec<Vec<f64>>,
}

impl StreamGains {
    pub fn measure(h: &ChannelRealization, dirs: &[CVec], common_dir: &CVec) -> Self {
        let users = h.users();
        let amp_common = &h.matrix * common_dir;
        let per_dir: Vec<CVec> = dirs.iter().map(|d| &h.matrix * d).collect();
        let common = (0..users).map(|u| amp_common[u].norm_sqr()).collect();
        let cross = (0..users)
            .map(|u| per_dir.iter().map(|a| a[u].norm_sqr()).collect())
            .collect();
        Self { common, cross }
    }

    /// Sum rate when the private streams share `rho·power` uniformly and the
    /// common stream takes the remainder, following the layered SIC chain.
    pub fn sum_rate(&self, rho: f64, power: f64) -> f64 {
        let users = self.cross.len();
        let per_stream = rho * power / users as f64;
        let common_power = (1.0 - rho) * power;
        let mut worst_common = f64::INFINITY;
        let mut total = 0.0;
        for u in 0..users {
            let own = per_stream * self.cross[u][u];
            let all: f64 = self.cross[u].iter().map(|g| per_stream * g).sum();
            total += bits(own / (1.0 + (all - own).max(0.0)));
            worst_common = worst_common.min(common_power * self.common[u] / (1.0 + all));
        }
        total + bits(worst_common)
    }
}

/// Everything the power-split search needs to draw its Monte Carlo batch.
#[derive(Debug, Clone)]
pub struct PowerSplitScenario {
    pub antennas: usize,
    pub users: usize,
    pub power: f64,
    pub csit: CsitModel,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct PowerSplitOutcome {
    /// Private share of the power budget at the ergodic-rate peak.
    pub rho: f64,
    /// Mean sum rate achieved at that share.
    pub sum_rate: f64,
    pub evaluations: usize,
}

fn validate_split_scenario(scenario: &PowerSplitScenario) -> Result<()> {
    scenario.csit.validate()?;
    if scenario.users == 0 || scenario.antennas < scenario.users {
        return Err(Error::InvalidArgument(format!(
            "{} users need at most {} antennas for zero-forcing directions",
            scenario.users, scenario.antennas
        )));
    }
    if !(scenario.power > 0.0) || !scenario.power.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "transmit power must be positive, got {}",
            scenario.power
        )));
    }
    Ok(())
}

fn split_search_gains(scenario: &PowerSplitScenario, trials: usize) -> Result<Vec<StreamGains>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut channel_rng = trial_rng(scenario.seed, trial, LANE_CHANNEL);
            let h = ChannelRealization::draw_iid(scenario.users, scenario.antennas, &mut channel_rng);
            let mut csit_rng = trial_rng(scenario.seed, trial, LANE_CSIT);
            let estimate = scenario.csit.realize(&h, scenario.power, &mut csit_rng)?;
            let dirs = zf_directions(&estimate.matrix)?;
            let common = common_precoder(&estimate.matrix, CommonDirection::DominantSvd)?;
            Ok(StreamGains::measure(&h, &dirs, &common))
        })
        .collect()
}

/// The frozen Monte Carlo objective the split search maximizes. Exposed so
/// callers can probe the exact curve the search saw (confidence checks,
/// plotting) without re-drawing channels.
pub fn split_objective(
    scenario: &PowerSplitScenario,
    trials: usize,
) -> Result<impl Fn(f64) -> f64> {
    validate_split_scenario(scenario)?;
    let power = scenario.power;
    let gains = split_search_gains(scenario, trials)?;
    Ok(move |rho: f64| {
        gains.iter().map(|g| g.sum_rate(rho, power)).sum::<f64>() / gains.len() as f64
    })
}

/// Golden-section search for the private power share that maximizes the mean
/// sum rate, with zero-forcing private directions and the default common
/// direction. The Monte Carlo batch is drawn once and held fixed, so the
/// objective is deterministic and the search is noise-free.
pub fn optimize_power_split(
    scenario: &PowerSplitScenario,
    trials: usize,
    tol: f64,
) -> Result<PowerSplitOutcome> {
    if trials < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 trials for a stable mean, got {trials}"
        )));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let objective = split_objective(scenario, trials)?;
    let best = golden_section_max(objective, 0.0, 1.0, tol, 200)?;
    Ok(PowerSplitOutcome { rho: best.x, sum_rate: best.value, evaluations: best.evaluations })
}

/// Which transmission scheme the feedback search sizes the codebook for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackScheme {
    RateSplitting,
    ZeroForcing,
}

impl FromStr for FeedbackScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rs" => Ok(Self::RateSplitting),
            "zfbf" => Ok(Self::ZeroForcing),
            other => Err(Error::Config(format!("unknown scheme '{other}' (expected rs or zfbf)"))),
        }
    }
}

/// Search for the smallest quantization codebook that keeps a scheme within a
/// target ergodic-rate gap of perfect-CSIT zero-forcing.
#[derive(Debug, Clone)]
pub struct FeedbackSearch {
    pub target_gap: f64,
    pub power: f64,
    pub antennas: usize,
    pub users: usize,
    pub scheme: FeedbackScheme,
    pub trials: usize,
    pub seed: u64,
    /// Search ceiling. Codebooks double per bit, so lowering this bounds the
    /// cost of a hopeless search; the hard cap is the codebook limit.
    pub max_bits: u32,
}

impl FeedbackSearch {
    pub fn new(
        target_gap: f64,
        power: f64,
        antennas: usize,
        scheme: FeedbackScheme,
        trials: usize,
    ) -> Self {
        Self {
            target_gap,
            power,
            antennas,
            users: 2,
            scheme,
            trials,
            seed: 0,
            max_bits: RVQ_MAX_BITS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeedbackReport {
    /// Smallest feedback budget meeting the gap, or None if the ceiling was
    /// reached first (an unattainable target, reported rather than raised).
    pub bits: Option<u32>,
    /// Ergodic perfect-CSIT zero-forcing sum rate used as the yardstick.
    pub reference_rate: f64,
    /// `(bits, ergodic gap)` for every codebook size tried, in search order.
    pub gap_by_bits: Vec<(u32, f64)>,
}

/// One trial's channel plus an incrementally grown quantization codebook per
/// user. Growing the same stream keeps codebooks nested across budgets, so
/// every budget sees a strict superset of the previous candidates and the
/// comparison across budgets shares all randomness.
struct FeedbackTrial {
    h: ChannelRealization,
    codeword_rngs: Vec<ChaCha8Rng>,
    drawn: u64,
    /// Best (receive power, codeword) seen per user.
    best: Vec<(f64, CVec)>,
    reference: f64,
}

impl FeedbackTrial {
    fn grow_to(&mut self, count: u64) {
        let users = self.best.len();
        let antennas = self.h.antennas();
        for u in 0..users {
            let channel = self.h.user_channel(u);
            let rng = &mut self.codeword_rngs[u];
            for _ in self.drawn..count {
                let word = unit_vector(antennas, rng);
                let score = channel.dotc(&word).norm_sqr();
                if score > self.best[u].0 {
                    self.best[u] = (score, word);
                }
            }
        }
        self.drawn = count;
    }

    fn quantized_estimate(&self) -> CMat {
        let users = self.best.len();
        let antennas = self.h.antennas();
        let mut rows = CMat::zeros(users, antennas);
        for (u, (_, word)) in self.best.iter().enumerate() {
            rows.set_row(u, &word.adjoint());
        }
        rows
    }
}

/// Smallest integer feedback budget whose ergodic sum rate trails
/// perfect-CSIT zero-forcing by at most `target_gap`. Budgets are tried in
/// ascending order with identical channel and codebook draws, so the returned
/// budget is the first crossing of a single deterministic gap curve.
pub fn required_feedback_bits(search: &FeedbackSearch) -> Result<FeedbackReport> {
    if !(search.target_gap > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target gap must be positive, got {}",
            search.target_gap
        )));
    }
    if search.trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if search.users == 0 || search.antennas < search.users {
        return Err(Error::InvalidArgument(format!(
            "{} users need at most {} antennas",
            search.users, search.antennas
        )));
    }
    if !(search.power > 0.0) || !search.power.is_finite() {
        return Err(Error::InvalidArgument(format!("power must be positive, got {}", search.power)));
    }
    if search.max_bits == 0 || search.max_bits > RVQ_MAX_BITS {
        return Err(Error::InvalidArgument(format!(
            "budget ceiling must be in 1..={RVQ_MAX_BITS}, got {}",
            search.max_bits
        )));
    }

    let mut trials: Vec<FeedbackTrial> = (0..search.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut channel_rng = trial_rng(search.seed, trial, LANE_CHANNEL);
            let h = ChannelRealization::draw_iid(search.users, search.antennas, &mut channel_rng);
            let reference = baseline_rates(&h, &h.matrix, search.power, Scheme::Zfbf)?.sum_rate;
            let codeword_rngs = (0..search.users)
                .map(|u| trial_rng(search.seed, trial, LANE_CODEBOOK_BASE + u as u64))
                .collect();
            let best = vec![(f64::NEG_INFINITY, CVec::zeros(search.antennas)); search.users];
            Ok(FeedbackTrial { h, codeword_rngs, drawn: 0, best, reference })
        })
        .collect::<Result<_>>()?;

    let reference_rate =
        trials.iter().map(|t| t.reference).sum::<f64>() / search.trials as f64;
    let mut gap_by_bits = Vec::new();

    for budget in 1..=search.max_bits {
        let gains: Vec<StreamGains> = trials
            .par_iter_mut()
            .map(|trial| {
                trial.grow_to(1u64 << budget);
                let estimate = trial.quantized_estimate();
                let dirs = zf_directions(&estimate)?;
                let common = common_precoder(&estimate, CommonDirection::DominantSvd)?;
                Ok(StreamGains::measure(&trial.h, &dirs, &common))
            })
            .collect::<Result<_>>()?;
        let mean_rate = |rho: f64| {
            gains.iter().map(|g| g.sum_rate(rho, search.power)).sum::<f64>()
                / search.trials as f64
        };
        let achieved = match search.scheme {
            FeedbackScheme::ZeroForcing => mean_rate(1.0),
            FeedbackScheme::RateSplitting => golden_section_max(mean_rate, 0.0, 1.0, 1e-3, 200)?.value,
        };
        let gap = reference_rate - achieved;
        gap_by_bits.push((budget, gap));
        if gap <= search.target_gap {
            return Ok(FeedbackReport { bits: Some(budget), reference_rate, gap_by_bits });
        }
    }
    Ok(FeedbackReport { bits: None, reference_rate, gap_by_bits })
}

/// What the alternating optimizer maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    SumRate,
    MaxMin,
}

/// Knobs beyond the required arguments; `new` fills the standard defaults.
#[derive(Debug, Clone)]
pub struct WmmseOptions {
    pub samples: usize,
    pub objective: Objective,
    pub max_iter: usize,
    pub epsilon: f64,
    /// Private share of the power at initialization.
    pub init_rho: f64,
    pub init_common: CommonDirection,
    /// Seed for the conditional channel draws.
    pub sample_seed: u64,
}

impl WmmseOptions {
    pub fn new(samples: usize, objective: Objective, max_iter: usize, epsilon: f64) -> Self {
        Self {
            samples,
            objective,
            max_iter,
            epsilon,
            init_rho: 0.5,
            init_common: CommonDirection::DominantSvd,
            sample_seed: 0,
        }
    }
}

/// Converged state of one alternating-optimization run.
#[derive(Debug, Clone)]
pub struct WmmseState {
    pub precoders: PrecoderSet,
    /// Receive filters, indexed `[user][sample]`.
    pub common_filters: Vec<Vec<Complex64>>,
    pub private_filters: Vec<Vec<Complex64>>,
    /// MSE weights, same indexing.
    pub common_weights: Vec<Vec<f64>>,
    pub private_weights: Vec<Vec<f64>>,
    /// Objective value (bits) at initialization and after each accepted
    /// iteration. Nondecreasing by construction: candidate precoders that
    /// fail to improve the objective are rejected, not recorded.
    pub objective_trace: Vec<f64>,
    pub common_power_trace: Vec<f64>,
    pub private_power_trace: Vec<f64>,
    /// Common-rate apportioning behind the final max-min value.
    pub split: MessageSplit,
}

impl WmmseState {
    /// Final objective value in bits.
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds at least the initial point")
    }

    /// Convergence trace, one row per accepted iterate.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "iteration,objective,commonPower,privatePower")?;
        for (i, obj) in self.objective_trace.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                i,
                crate::dof::fmt17(*obj),
                crate::dof::fmt17(self.common_power_trace[i]),
                crate::dof::fmt17(self.private_power_trace[i]),
            )?;
        }
        Ok(())
    }
}

/// Error variance of the conditional channel model implied by a quality tag.
fn conditional_error_var(quality: CsitQuality, power: f64, antennas: usize) -> Result<f64> {
    match quality {
        CsitQuality::Exponent { alpha } => {
            if alpha.is_nan() || alpha < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "quality exponent must be ≥ 0, got {alpha}"
                )));
            }
            if alpha.is_infinite() {
                Ok(0.0)
            } else {
                Ok(power.powf(-alpha).min(1.0))
            }
        }
        CsitQuality::Rvq { bits } => {
            if bits == 0 || bits > RVQ_MAX_BITS {
                return Err(Error::InvalidArgument(format!(
                    "codebook exponent must be in 1..={RVQ_MAX_BITS}, got {bits}"
                )));
            }
            if antennas < 2 {
                return Err(Error::InvalidArgument(
                    "quantized feedback needs at least two antennas".into(),
                ));
            }
            // Mean chordal error of a random codebook of that size.
            Ok((2.0f64).powf(-(bits as f64) / (antennas as f64 - 1.0)))
        }
    }
}

/// The sample-average surrogate of the conditional rate problem: the
/// transmitter's estimate plus a fixed batch of posterior channel draws.
/// All candidate designs are scored against the same batch, so comparisons
/// between them are paired and deterministic.
pub struct SaaProblem {
    samples: Vec<CMat>,
    power: f64,
    users: usize,
    antennas: usize,
}

/// Fresh per-sample filters and weights for a fixed precoder set, plus the
/// per-user average rates they imply (in nats).
struct Refresh {
    common_filters: Vec<Vec<Complex64>>,
    private_filters: Vec<Vec<Complex64>>,
    common_weights: Vec<Vec<f64>>,
    private_weights: Vec<Vec<f64>>,
    common_nats: Vec<f64>,
    private_nats: Vec<f64>,
}

struct Candidate {
    common: CVec,
    private: Vec<CVec>,
    score: f64,
    split: MessageSplit,
    refresh: Refresh,
}

impl SaaProblem {
    pub fn new(
        hhat: &CMat,
        quality: CsitQuality,
        power: f64,
        samples: usize,
        sample_seed: u64,
    ) -> Result<Self> {
        let users = hhat.nrows();
        let antennas = hhat.ncols();
        if users == 0 || antennas == 0 {
            return Err(Error::DegenerateInput("empty estimate matrix".into()));
        }
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one conditional sample".into()));
        }
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::InvalidArgument(format!("power must be positive, got {power}")));
        }
        let tau = conditional_error_var(quality, power, antennas)?.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let samples = (0..samples)
            .map(|_| {
                let noise = complex_gaussian_mat(users, antennas, &mut rng);
                hhat + noise.scale(tau)
            })
            .collect();
        Ok(Self { samples, power, users, antennas })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn samples(&self) -> usize {
        self.samples.len()
    }

    /// Receive amplitudes of every stream at every user, one table per
    /// sample. Column 0 is the common stream.
    fn amplitudes(&self, common: &CVec, private: &[CVec]) -> Vec<CMat> {
        let mut stacked = CMat::zeros(self.antennas, self.users + 1);
        stacked.set_column(0, common);
        for (j, p) in private.iter().enumerate() {
            stacked.set_column(j + 1, p);
        }
        self.samples.iter().map(|h| h * &stacked).collect()
    }

    fn refresh(&self, tables: &[CMat]) -> Refresh {
        let s_count = tables.len() as f64;
        let mut out = Refresh {
            common_filters: vec![Vec::with_capacity(tables.len()); self.users],
            private_filters: vec![Vec::with_capacity(tables.len()); self.users],
            common_weights: vec![Vec::with_capacity(tables.len()); self.users],
            private_weights: vec![Vec::with_capacity(tables.len()); self.users],
            common_nats: vec![0.0; self.users],
            private_nats: vec![0.0; self.users],
        };
        for k in 0..self.users {
            for table in tables {
                let own = table[(k, k + 1)].norm_sqr();
                let total_private: f64 = (1..=self.users).map(|j| table[(k, j)].norm_sqr()).sum();
                let others = (total_private - own).max(0.0);
                let common_total = 1.0 + table[(k, 0)].norm_sqr() + total_private;
                let private_total = 1.0 + total_private;
                // MMSE filter a/T and its error (interference+noise)/T; the
                // ratio forms keep the error strictly positive.
                out.common_filters[k].push(table[(k, 0)] / common_total);
                out.private_filters[k].push(table[(k, k + 1)] / private_total);
                out.common_weights[k].push(common_total / private_total);
                out.private_weights[k].push(private_total / (1.0 + others));
                out.common_nats[k] += (common_total / private_total).ln() / s_count;
                out.private_nats[k] += (private_total / (1.0 + others)).ln() / s_count;
            }
        }
        out
    }

    fn scored(&self, refresh: &Refresh, objective: Objective) -> (f64, MessageSplit) {
        let common_bits =
            refresh.common_nats.iter().cloned().fold(f64::INFINITY, f64::min) / LN_2;
        let private_bits: Vec<f64> = refresh.private_nats.iter().map(|r| r / LN_2).collect();
        let (split, min_total) = MessageSplit::maxmin(common_bits, &private_bits);
        let value = match objective {
            Objective::SumRate => common_bits + private_bits.iter().sum::<f64>(),
            Objective::MaxMin => min_total,
        };
        (value, split)
    }

    fn evaluate(&self, common: &CVec, private: &[CVec], objective: Objective) -> Result<Candidate> {
        let tables = self.amplitudes(common, private);
        let refresh = self.refresh(&tables);
        let (score, split) = self.scored(&refresh, objective);
        if !score.is_finite() {
            return Err(Error::NumericalFailure("objective left the finite range".into()));
        }
        Ok(Candidate { common: common.clone(), private: private.to_vec(), score, split, refresh })
    }

    /// Average sum rate (bits) of an arbitrary precoder set against this
    /// problem's sample batch. Useful for paired comparisons between designs.
    pub fn average_sum_rate(&self, set: &PrecoderSet) -> Result<f64> {
        if set.antennas() != self.antennas || set.users() != self.users {
            return Err(Error::DimensionMismatch(format!(
                "precoders for {}x{}, problem is {}x{}",
                set.users(),
                set.antennas(),
                self.users,
                self.antennas
            )));
        }
        Ok(self.evaluate(&set.common, &set.private, Objective::SumRate)?.score)
    }

    /// One weighted quadratic precoder update: minimize the weighted MSE form
    /// at fixed filters/weights, with `mu` mixing the per-user common-stream
    /// terms, `nu` weighting the private terms, and `common_scale` scaling
    /// the whole common branch. The power constraint enters through a single
    /// multiplier found by bisection.
    fn precoder_step(
        &self,
        refresh: &Refresh,
        mu: &[f64],
        nu: &[f64],
        common_scale: f64,
    ) -> Result<(CVec, Vec<CVec>)> {
        let m = self.antennas;
        let s_count = self.samples.len() as f64;
        let mut quad_common = CMat::zeros(m, m);
        let mut quad_private = CMat::zeros(m, m);
        let mut lin_common = CVec::zeros(m);
        let mut lin_private = vec![CVec::zeros(m); self.users];
        for k in 0..self.users {
            for (s, sample) in self.samples.iter().enumerate() {
                let h = sample.row(k).adjoint();
                let w_c = refresh.common_weights[k][s];
                let g_c = refresh.common_filters[k][s];
                let w_p = refresh.private_weights[k][s];
                let g_p = refresh.private_filters[k][s];
                let c_common = common_scale * mu[k] * w_c / s_count;
                let c_private = nu[k] * w_p / s_count;
                // The common-stream MSE sees every beam; the private MSE is
                // post-cancellation, so its quadratic skips the common beam.
                quad_common.gerc(Complex64::from(c_common * g_c.norm_sqr()), &h, &h, Complex64::ONE);
                quad_private.gerc(Complex64::from(c_private * g_p.norm_sqr()), &h, &h, Complex64::ONE);
                lin_common.axpy(g_c * c_common, &h, Complex64::ONE);
                lin_private[k].axpy(g_p * c_private, &h, Complex64::ONE);
            }
        }
        // Private beams appear in both MSE kinds.
        let quad_private = &quad_private + &quad_common;

        let solve_at = |lambda: f64| -> Result<(CVec, Vec<CVec>, f64)> {
            let mut mc = quad_common.clone();
            let mut mp = quad_private.clone();
            for i in 0..m {
                mc[(i, i)] += Complex64::from(lambda);
                mp[(i, i)] += Complex64::from(lambda);
            }
            let chol_c = mc
                .cholesky()
                .ok_or_else(|| Error::NumericalFailure("common quadratic not positive definite".into()))?;
            let chol_p = mp
                .cholesky()
                .ok_or_else(|| Error::NumericalFailure("private quadratic not positive definite".into()))?;
            let common = chol_c.solve(&lin_common);
            let private: Vec<CVec> = lin_private.iter().map(|b| chol_p.solve(b)).collect();
            let used = common.norm_squared()
                + private.iter().map(|p| p.norm_squared()).sum::<f64>();
            Ok((common, private, used))
        };

        let mut lo = 1e-12;
        let mut hi = 1e6;
        let at_lo = solve_at(lo)?;
        if at_lo.2 <= self.power {
            return Ok((at_lo.0, at_lo.1));
        }
        let mut best = solve_at(hi)?;
        if best.2 > self.power {
            return Err(Error::SearchFailure(format!(
                "power multiplier not bracketed: {} used at the bracket top",
                best.2
            )));
        }
        // Geometric bisection: power used is decreasing in the multiplier,
        // and the feasible endpoint is kept so the result never overspends.
        while hi / lo > 1.0 + 1e-10 {
            let mid = (lo * hi).sqrt();
            let probe = solve_at(mid)?;
            if probe.2 > self.power {
                lo = mid;
            } else {
                hi = mid;
                best = probe;
            }
        }
        Ok((best.0, best.1))
    }
}

/// Multiplicative-weights step toward the entries with the lowest scores
/// (the binding users of a min).
fn reweight(weights: &mut [f64], scores: &[f64]) {
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo).max(1e-9);
    for (w, s) in weights.iter_mut().zip(scores) {
        *w *= (2.0 * (hi - s) / spread).exp();
    }
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        let uniform = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = uniform);
        return;
    }
    for w in weights.iter_mut() {
        *w = (*w / total).max(1e-12);
    }
}

fn solve_alternating(
    problem: &SaaProblem,
    init_common: CVec,
    init_private: Vec<CVec>,
    opts: &WmmseOptions,
) -> Result<WmmseState> {
    let users = problem.users;
    let mut mu = vec![1.0 / users as f64; users];
    let mut nu = vec![1.0; users];
    let mut current = problem.evaluate(&init_common, &init_private, opts.objective)?;

    let mut objective_trace = vec![current.score];
    let mut common_power_trace = vec![current.common.norm_squared()];
    let mut private_power_trace =
        vec![current.private.iter().map(|p| p.norm_squared()).sum::<f64>()];

    let rounds = match (users, opts.objective) {
        (1, _) => 1,
        (_, Objective::SumRate) => 12,
        (_, Objective::MaxMin) => 16,
    };

    for _ in 0..opts.max_iter {
        let mut best: Option<Candidate> = None;
        for _ in 0..rounds {
            let common_scale = match opts.objective {
                Objective::SumRate => 1.0,
                Objective::MaxMin => nu.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            };
            let (cand_common, cand_private) =
                problem.precoder_step(&current.refresh, &mu, &nu, common_scale)?;
            let candidate = problem.evaluate(&cand_common, &cand_private, opts.objective)?;
            reweight(&mut mu, &candidate.refresh.common_nats);
            if opts.objective == Objective::MaxMin {
                let totals: Vec<f64> = candidate
                    .refresh
                    .private_nats
                    .iter()
                    .zip(&candidate.split.common_share)
                    .map(|(r, share)| r / LN_2 + share)
                    .collect();
                reweight(&mut nu, &totals);
            }
            if best.as_ref().is_none_or(|b| candidate.score > b.score) {
                best = Some(candidate);
            }
        }
        let best = best.expect("at least one proposal per iteration");
        // Accept only improvements: the trace stays monotone by construction
        // and a stalled proposal pool means we have converged.
        if best.score <= current.score {
            break;
        }
        let gain = best.score - current.score;
        current = best;
        objective_trace.push(current.score);
        common_power_trace.push(current.common.norm_squared());
        private_power_trace.push(current.private.iter().map(|p| p.norm_squared()).sum::<f64>());
        if gain < opts.epsilon {
            break;
        }
    }

    let Candidate { common, private, split, refresh, .. } = current;
    Ok(WmmseState {
        precoders: PrecoderSet::from_columns(common, private, problem.power)?,
        common_filters: refresh.common_filters,
        private_filters: refresh.private_filters,
        common_weights: refresh.common_weights,
        private_weights: refresh.private_weights,
        objective_trace,
        common_power_trace,
        private_power_trace,
        split,
    })
}

/// Alternating optimization of the precoders against the sample-average
/// surrogate: closed-form per-sample receive filters, closed-form MSE
/// weights, then a weighted quadratic precoder update under the power
/// budget. Proposals that fail to improve the objective are rejected, so the
/// recorded trace is nondecreasing.
pub fn wmmse_optimize(
    hhat: &CMat,
    quality: CsitQuality,
    power: f64,
    samples: usize,
    objective: Objective,
    max_iter: usize,
    epsilon: f64,
) -> Result<WmmseState> {
    wmmse_optimize_with(
        hhat,
        quality,
        power,
        &WmmseOptions::new(samples, objective, max_iter, epsilon),
    )
}

/// As [`wmmse_optimize`], with the remaining knobs exposed.
pub fn wmmse_optimize_with(
    hhat: &CMat,
    quality: CsitQuality,
    power: f64,
    opts: &WmmseOptions,
) -> Result<WmmseState> {
    if hhat.nrows() > hhat.ncols() {
        return Err(Error::InvalidArgument(format!(
            "{} users exceed {} antennas; the zero-forcing start needs users ≤ antennas",
            hhat.nrows(),
            hhat.ncols()
        )));
    }
    if !(opts.epsilon > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "need a positive tolerance and at least one iteration".into(),
        ));
    }
    if !(0.0..=1.0).contains(&opts.init_rho) {
        return Err(Error::InvalidArgument(format!(
            "initial private share must be in [0, 1], got {}",
            opts.init_rho
        )));
    }
    let problem = SaaProblem::new(hhat, quality, power, opts.samples, opts.sample_seed)?;
    let dirs = zf_directions(hhat)?;
    let common_dir = common_precoder(hhat, opts.init_common)?;
    let start = PrecoderSet::rate_splitting(&dirs, &common_dir, opts.init_rho, power)?;
    solve_alternating(&problem, start.common.clone(), start.private.clone(), opts)
}

/// Multi-start wrapper: start 0 uses the configured deterministic
/// initialization, later starts draw random beams. The alternating scheme is
/// non-convex, so the best final objective across starts is kept. All starts
/// share one sample batch, keeping their objectives comparable.
pub fn wmmse_multi_start(
    hhat: &CMat,
    quality: CsitQuality,
    power: f64,
    opts: &WmmseOptions,
    starts: usize,
    seed: u64,
) -> Result<WmmseState> {
    if starts == 0 {
        return Err(Error::InvalidArgument("need at least one start".into()));
    }
    let mut best = wmmse_optimize_with(hhat, quality, power, opts)?;
    let problem = SaaProblem::new(hhat, quality, power, opts.samples, opts.sample_seed)?;
    for start in 1..starts as u64 {
        let mut rng = trial_rng(seed, start, LANE_SCHEME);
        let users = hhat.nrows();
        let antennas = hhat.ncols();
        let rho = 0.1 + 0.8 * rng.random::<f64>();
        let dirs: Vec<CVec> = (0..users).map(|_| unit_vector(antennas, &mut rng)).collect();
        let common_dir = unit_vector(antennas, &mut rng);
        let start_set = PrecoderSet::rate_splitting(&dirs, &common_dir, rho, power)?;
        let state =
            solve_alternating(&problem, start_set.common.clone(), start_set.private.clone(), opts)?;
        if state.objective() > best.objective() {
            best = state;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complex_gaussian_mat;

    fn scenario(power: f64, csit: CsitModel) -> PowerSplitScenario {
        PowerSplitScenario { antennas: 4, users: 2, power, csit, seed: 11 }
    }

    #[test]
    fn split_returns_full_private_share_when_estimates_are_exact() {
        // Vanishing residual interference: nothing for a common stream to
        // cover. Note the residual-to-noise ratio scales as power^(1−alpha),
        // so alpha must exceed 1 for a large-power surrogate of exactness.
        let s = scenario(1e6, CsitModel::Exponent { alpha: 2.0 });
        let out = optimize_power_split(&s, 100, 1e-3).unwrap();
        assert!(out.rho > 0.99, "rho = {}", out.rho);

        let exact = scenario(1e4, CsitModel::Perfect);
        let out = optimize_power_split(&exact, 100, 1e-3).unwrap();
        assert!(out.rho > 0.99, "rho = {}", out.rho);
    }

    #[test]
    fn split_prefers_private_streams_at_low_power() {
        let s = scenario(1.0, CsitModel::Rvq { bits: 10 });
        let out = optimize_power_split(&s, 300, 1e-3).unwrap();
        assert!(out.rho >= 0.95, "rho = {}", out.rho);
    }

    #[test]
    fn split_shrinks_as_power_grows() {
        let rhos: Vec<f64> = [1.0, 100.0, 1e4]
            .iter()
            .map(|&p| {
                optimize_power_split(&scenario(p, CsitModel::Rvq { bits: 10 }), 300, 1e-3)
                    .unwrap()
                    .rho
            })
            .collect();
        assert!(rhos[0] > rhos[1] && rhos[1] > rhos[2], "{rhos:?}");
    }

    #[test]
    fn split_peak_is_a_local_maximum_of_the_frozen_objective() {
        let s = scenario(100.0, CsitModel::Rvq { bits: 10 });
        let tol = 1e-3;
        let out = optimize_power_split(&s, 200, tol).unwrap();
        let f = split_objective(&s, 200).unwrap();
        let peak = f(out.rho);
        assert!((peak - out.sum_rate).abs() < 1e-12);
        for probe in [(out.rho - tol).max(0.0), (out.rho + tol).min(1.0)] {
            assert!(f(probe) <= peak + 1e-6, "f({probe}) = {} > {peak}", f(probe));
        }
    }

    #[test]
    fn split_search_budget_is_enforced() {
        let s = scenario(100.0, CsitModel::Rvq { bits: 4 });
        let err = optimize_power_split(&s, 100, 1e-40).unwrap_err();
        assert!(matches!(err, Error::SearchFailure(_)), "{err:?}");
    }

    #[test]
    fn split_rejects_thin_trials_and_bad_tolerances() {
        let s = scenario(100.0, CsitModel::Rvq { bits: 4 });
        assert!(optimize_power_split(&s, 99, 1e-3).is_err());
        assert!(optimize_power_split(&s, 100, 0.0).is_err());
    }

    #[test]
    fn feedback_single_bit_satisfies_a_huge_gap() {
        for scheme in [FeedbackScheme::RateSplitting, FeedbackScheme::ZeroForcing] {
            let mut search = FeedbackSearch::new(50.0, 10.0, 4, scheme, 50);
            search.seed = 3;
            let report = required_feedback_bits(&search).unwrap();
            assert_eq!(report.bits, Some(1));
            assert_eq!(report.gap_by_bits.len(), 1);
        }
    }

    #[test]
    fn feedback_tighter_gap_needs_at_least_as_many_bits() {
        let p = 10f64.powf(1.5);
        let mut tight = FeedbackSearch::new(4.0, p, 4, FeedbackScheme::RateSplitting, 150);
        tight.seed = 9;
        let mut loose = tight.clone();
        loose.target_gap = 6.0;
        let need_tight = required_feedback_bits(&tight).unwrap().bits.unwrap();
        let need_loose = required_feedback_bits(&loose).unwrap().bits.unwrap();
        assert!(need_tight >= need_loose, "{need_tight} < {need_loose}");
    }

    #[test]
    fn feedback_reports_an_unattainable_ceiling_without_panicking() {
        let mut search = FeedbackSearch::new(0.05, 100.0, 4, FeedbackScheme::ZeroForcing, 60);
        search.max_bits = 4;
        search.seed = 5;
        let report = required_feedback_bits(&search).unwrap();
        assert_eq!(report.bits, None);
        assert_eq!(report.gap_by_bits.len(), 4);
        // The gap curve should at least be heading the right way overall.
        assert!(report.gap_by_bits[3].1 < report.gap_by_bits[0].1);
    }

    #[test]
    fn feedback_scheme_names_parse() {
        assert_eq!("rs".parse::<FeedbackScheme>().unwrap(), FeedbackScheme::RateSplitting);
        assert_eq!("zfbf".parse::<FeedbackScheme>().unwrap(), FeedbackScheme::ZeroForcing);
        assert!("dirty-paper".parse::<FeedbackScheme>().is_err());
    }

    fn random_estimate(users: usize, antennas: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        complex_gaussian_mat(users, antennas, &mut rng)
    }

    #[test]
    fn wmmse_trace_is_monotone_and_inside_the_power_budget() {
        let power = 100.0;
        for seed in 0..20 {
            let hhat = random_estimate(2, 4, seed);
            let mut opts = WmmseOptions::new(8, Objective::SumRate, 40, 1e-6);
            opts.sample_seed = seed + 1000;
            let state =
                wmmse_optimize_with(&hhat, CsitQuality::Exponent { alpha: 0.6 }, power, &opts)
                    .unwrap();
            for pair in state.objective_trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-8, "trace dipped: {pair:?}");
            }
            for i in 0..state.objective_trace.len() {
                let used = state.common_power_trace[i] + state.private_power_trace[i];
                assert!(used <= power + 1e-9, "iterate {i} used {used}");
            }
        }
    }

    /// Water-filling on the zero-forcing-diagonalized channel: the classical
    /// optimum for private-only transmission under exact estimates.
    fn zf_waterfill_rate(h: &CMat, power: f64) -> f64 {
        let dirs = zf_directions(h).unwrap();
        let gains: Vec<f64> = (0..h.nrows())
            .map(|k| (h.row(k) * &dirs[k])[(0, 0)].norm_sqr())
            .collect();
        let mut order: Vec<usize> = (0..gains.len()).collect();
        order.sort_by(|&a, &b| gains[b].partial_cmp(&gains[a]).unwrap());
        // Add users strongest-first until the water level covers each one.
        for active in (1..=order.len()).rev() {
            let inv_sum: f64 = order[..active].iter().map(|&k| 1.0 / gains[k]).sum();
            let level = (power + inv_sum) / active as f64;
            if order[..active].iter().all(|&k| level >= 1.0 / gains[k]) {
                return order[..active]
                    .iter()
                    .map(|&k| (level * gains[k]).log2())
                    .sum();
            }
        }
        0.0
    }

    #[test]
    fn wmmse_matches_waterfilling_under_exact_estimates() {
        let power = 10.0;
        for seed in 0..10 {
            let hhat = random_estimate(2, 4, seed + 40);
            let oracle = zf_waterfill_rate(&hhat, power);
            let state = wmmse_optimize(
                &hhat,
                CsitQuality::Exponent { alpha: f64::INFINITY },
                power,
                1,
                Objective::SumRate,
                200,
                1e-9,
            )
            .unwrap();
            assert!(
                state.objective() >= oracle - 1e-3,
                "seed {seed}: {} < {oracle}",
                state.objective()
            );
        }
    }

    #[test]
    fn wmmse_keeps_the_common_stream_silent_when_it_starts_silent() {
        let power = 100.0;
        let hhat = random_estimate(2, 4, 77);
        let mut opts = WmmseOptions::new(1, Objective::SumRate, 60, 1e-8);
        opts.init_rho = 1.0;
        let state =
            wmmse_optimize_with(&hhat, CsitQuality::Exponent { alpha: 1.0 }, power, &opts).unwrap();
        for used in &state.common_power_trace {
            assert!(*used <= 1e-12, "common stream woke up: {used}");
        }
        assert!(state.common_power_trace.last().unwrap() < &(0.01 * power));
    }

    #[test]
    fn wmmse_filters_and_weights_are_blockwise_optimal() {
        let power = 20.0;
        let hhat = random_estimate(2, 4, 5);
        let state = wmmse_optimize(
            &hhat,
            CsitQuality::Exponent { alpha: f64::INFINITY },
            power,
            1,
            Objective::SumRate,
            5,
            1e-6,
        )
        .unwrap();
        // Exact estimates and one sample: the sample equals the estimate, so
        // the MSE surface is reconstructible here.
        let set = &state.precoders;
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        for k in 0..2 {
            let row = hhat.row(k);
            let amp_c = (row * &set.common)[(0, 0)];
            let amps: Vec<Complex64> = set.private.iter().map(|p| (row * p)[(0, 0)]).collect();
            let total_private: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            let t_common = 1.0 + amp_c.norm_sqr() + total_private;
            let mse = |g: Complex64, signal: Complex64, total: f64| {
                g.norm_sqr() * total - 2.0 * (g.conj() * signal).re + 1.0
            };
            let g_c = state.common_filters[k][0];
            let base = mse(g_c, amp_c, t_common);
            for _ in 0..50 {
                let perturbed = g_c + crate::linalg::standard_complex(&mut rng) * 0.1;
                assert!(mse(perturbed, amp_c, t_common) >= base - 1e-12);
            }
            // The weight minimizes w·mse − ln w at w = 1/mse.
            let w = state.common_weights[k][0];
            let objective = |w: f64| w * base - w.ln();
            assert!((w - 1.0 / base).abs() < 1e-9);
            for probe in [0.5 * w, 0.9 * w, 1.1 * w, 2.0 * w] {
                assert!(objective(probe) >= objective(w) - 1e-12);
            }
        }
    }

    #[test]
    fn wmmse_maxmin_lifts_the_weakest_user() {
        let power = 100.0;
        let quality = CsitQuality::Exponent { alpha: 0.6 };
        let mut fair_total = 0.0;
        let mut greedy_total = 0.0;
        for seed in 0..5 {
            let hhat = random_estimate(2, 4, 900 + seed);
            let mut opts = WmmseOptions::new(10, Objective::MaxMin, 60, 1e-6);
            opts.sample_seed = seed;
            let fair = wmmse_optimize_with(&hhat, quality, power, &opts).unwrap();
            opts.objective = Objective::SumRate;
            let greedy = wmmse_optimize_with(&hhat, quality, power, &opts).unwrap();
            fair_total += fair.objective();
            let greedy_floor = {
                let problem = SaaProblem::new(&hhat, quality, power, 10, seed).unwrap();
                let cand = problem
                    .evaluate(&greedy.precoders.common, &greedy.precoders.private, Objective::MaxMin)
                    .unwrap();
                cand.score
            };
            greedy_total += greedy_floor;
        }
        assert!(
            fair_total >= greedy_total - 1e-6,
            "max-min floor {fair_total} below sum-rate floor {greedy_total}"
        );
    }

    #[test]
    fn optimized_precoders_beat_fixed_directions_on_average() {
        let power = 1000.0;
        let quality = CsitQuality::Exponent { alpha: 0.6 };
        let mut optimized = 0.0;
        let mut fixed = 0.0;
        let draws = 20;
        for seed in 0..draws {
            let hhat = random_estimate(2, 4, 3000 + seed);
            let mut opts = WmmseOptions::new(20, Objective::SumRate, 60, 1e-5);
            opts.sample_seed = seed;
            let state = wmmse_optimize_with(&hhat, quality, power, &opts).unwrap();
            optimized += state.objective();

            let problem = SaaProblem::new(&hhat, quality, power, 20, seed).unwrap();
            let dirs = zf_directions(&hhat).unwrap();
            let common_dir = common_precoder(&hhat, CommonDirection::DominantSvd).unwrap();
            let rate_at = |rho: f64| {
                let set = PrecoderSet::rate_splitting(&dirs, &common_dir, rho, power).unwrap();
                problem.average_sum_rate(&set).unwrap()
            };
            fixed += golden_section_max(rate_at, 0.0, 1.0, 1e-3, 200).unwrap().value;
        }
        assert!(
            optimized / draws as f64 > fixed / draws as f64,
            "optimized {optimized} ≤ fixed {fixed}"
        );
    }

    #[test]
    fn wmmse_trace_csv_has_the_expected_layout() {
        let hhat = random_estimate(2, 4, 8);
        let state = wmmse_optimize(
            &hhat,
            CsitQuality::Exponent { alpha: 0.8 },
            50.0,
            4,
            Objective::SumRate,
            10,
            1e-6,
        )
        .unwrap();
        let mut buf = Vec::new();
        state.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,objective,commonPower,privatePower"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), state.objective_trace.len());
        let first: Vec<&str> = rows[0].split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[1].parse::<f64>().unwrap(), state.objective_trace[0]);
    }

    #[test]
    fn multi_start_never_returns_a_worse_objective() {
        let hhat = random_estimate(2, 4, 17);
        let quality = CsitQuality::Exponent { alpha: 0.6 };
        let opts = WmmseOptions::new(6, Objective::SumRate, 30, 1e-6);
        let single = wmmse_optimize_with(&hhat, quality, 100.0, &opts).unwrap();
        let multi = wmmse_multi_start(&hhat, quality, 100.0, &opts, 3, 44).unwrap();
        assert!(multi.objective() >= single.objective() - 1e-12);
    }
}

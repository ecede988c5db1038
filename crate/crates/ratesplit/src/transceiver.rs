//! Precoder construction, power splitting, and the SIC rate chain.
//!
//! A rate-splitting transmission superposes one common stream (decoded by
//! every user, then cancelled) on top of K private streams. `rho` is the
//! fraction of the power budget spent on the private streams; the remainder
//! goes to the common stream. `rho = 1` degenerates to conventional
//! private-only transmission.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::{dominant_right_singular, right_pseudoinverse, unit_vector, CMat, CVec};

/// Transmit-side description of one rate-splitting transmission.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    /// Common-stream precoder; zero vector when `rho = 1`.
    pub common: CVec,
    /// Private-stream precoders, one per user.
    pub private: Vec<CVec>,
    /// Fraction of the budget carried by the private streams.
    pub rho: f64,
    /// Total power budget (equals transmit SNR; noise power is 1).
    pub power: f64,
}

impl PrecoderSet {
    /// Scale unit directions into a precoder set: each private stream gets
    /// ρP/K, the common stream gets (1−ρ)P.
    pub fn rate_splitting(
        dirs: &[CVec],
        common_dir: &CVec,
        rho: f64,
        power: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("rho must be in [0,1], got {rho}")));
        }
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::InvalidArgument(format!("power must be positive, got {power}")));
        }
        if dirs.is_empty() {
            return Err(Error::DegenerateInput("no private directions".into()));
        }
        let m = common_dir.len();
        if dirs.iter().any(|d| d.len() != m) {
            return Err(Error::DimensionMismatch("direction lengths differ".into()));
        }
        for d in dirs.iter().chain(std::iter::once(common_dir)) {
            if (d.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument("directions must be unit-norm".into()));
            }
        }
        let k = dirs.len();
        let private_scale = (rho * power / k as f64).sqrt();
        let common_scale = ((1.0 - rho) * power).sqrt();
        let common = if rho == 1.0 { CVec::zeros(m) } else { common_dir.scale(common_scale) };
        Ok(Self {
            common,
            private: dirs.iter().map(|d| d.scale(private_scale)).collect(),
            rho,
            power,
        })
    }

    /// Conventional private-only transmission (no common stream).
    pub fn private_only(dirs: &[CVec], power: f64) -> Result<Self> {
        if dirs.is_empty() {
            return Err(Error::DegenerateInput("no private directions".into()));
        }
        let probe = CVec::from_element(dirs[0].len(), Complex64::ONE)
            .unscale((dirs[0].len() as f64).sqrt());
        Self::rate_splitting(dirs, &probe, 1.0, power)
    }

    /// Wrap explicit precoder columns (e.g. optimizer output), checking the
    /// power budget. `rho` is recorded as the private share actually used.
    pub fn from_columns(common: CVec, private: Vec<CVec>, power: f64) -> Result<Self> {
        if private.is_empty() {
            return Err(Error::DegenerateInput("no private precoders".into()));
        }
        if private.iter().any(|p| p.len() != common.len()) {
            return Err(Error::DimensionMismatch("precoder lengths differ".into()));
        }
        let private_power: f64 = private.iter().map(|p| p.norm_squared()).sum();
        let used = private_power + common.norm_squared();
        if used > power + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "precoders use {used:.6} of a {power:.6} budget"
            )));
        }
        let rho = if used > 0.0 { (private_power / used).clamp(0.0, 1.0) } else { 1.0 };
        Ok(Self { common, private, rho, power })
    }

    pub fn users(&self) -> usize {
        self.private.len()
    }

    pub fn antennas(&self) -> usize {
        self.common.len()
    }

    /// Total emitted power across all streams.
    pub fn power_used(&self) -> f64 {
        self.common.norm_squared() + self.private.iter().map(|p| p.norm_squared()).sum::<f64>()
    }
}

/// Rates produced by the SIC chain for one realization.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Per-user SINR of the common stream (private streams as noise).
    pub sinr_common: Vec<f64>,
    /// Common-stream rate: pinned by the weakest decoder.
    pub rate_common: f64,
    /// Per-user private rate after the common stream is cancelled.
    pub rate_private: Vec<f64>,
    pub sum_rate: f64,
    /// Worst user total when the whole common rate is granted to the user
    /// with the weakest private rate.
    pub min_user_rate: f64,
    /// Per-user totals under a uniform split of the common rate.
    pub user_totals: Vec<f64>,
}

impl RateReport {
    fn from_sinrs(sinr_common: Vec<f64>, sinr_private: &[f64]) -> Self {
        let rate_common = bits(sinr_common.iter().cloned().fold(f64::INFINITY, f64::min));
        let rate_private: Vec<f64> = sinr_private.iter().map(|&s| bits(s)).collect();
        Self::from_rates(sinr_common, rate_common, rate_private)
    }

    fn from_rates(sinr_common: Vec<f64>, rate_common: f64, rate_private: Vec<f64>) -> Self {
        let k = rate_private.len();
        let sum_rate = rate_common + rate_private.iter().sum::<f64>();
        let weakest = (0..k)
            .min_by(|&a, &b| rate_private[a].partial_cmp(&rate_private[b]).unwrap())
            .unwrap_or(0);
        let min_user_rate = (0..k)
            .map(|i| if i == weakest { rate_private[i] + rate_common } else { rate_private[i] })
            .fold(f64::INFINITY, f64::min);
        let user_totals: Vec<f64> =
            rate_private.iter().map(|r| r + rate_common / k as f64).collect();
        Self { sinr_common, rate_common, rate_private, sum_rate, min_user_rate, user_totals }
    }

    /// Common rate if only `users` had to decode the common stream.
    /// Shrinking the decoder set can only relax the bottleneck.
    pub fn common_rate_for(&self, users: &[usize]) -> f64 {
        bits(users.iter().map(|&k| self.sinr_common[k]).fold(f64::INFINITY, f64::min))
    }
}

/// Shannon rate in bits for an SINR.
pub fn bits(sinr: f64) -> f64 {
    if sinr.is_finite() {
        (1.0 + sinr).log2()
    } else {
        f64::INFINITY
    }
}

/// Apportioning of the common rate among the users' message shares.
#[derive(Debug, Clone)]
pub struct MessageSplit {
    pub common_share: Vec<f64>,
}

impl MessageSplit {
    /// Shares must be nonnegative and sum to the common rate.
    pub fn validate(&self, rate_common: f64) -> Result<()> {
        if self.common_share.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidArgument("negative common-rate share".into()));
        }
        let total: f64 = self.common_share.iter().sum();
        if (total - rate_common).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "shares sum to {total}, expected {rate_common}"
            )));
        }
        Ok(())
    }

    /// Water-fill the common rate onto the private rates so the minimum user
    /// total is maximized. Returns the split and the achieved minimum.
    pub fn maxmin(rate_common: f64, rate_private: &[f64]) -> (Self, f64) {
        let k = rate_private.len();
        if k == 0 {
            return (Self { common_share: Vec::new() }, 0.0);
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| rate_private[a].partial_cmp(&rate_private[b]).unwrap());
        // Raise the lowest totals together until the budget runs out.
        let mut level = rate_private[order[0]];
        let mut remaining = rate_common;
        let mut filled = 0;
        loop {
            let next = if filled + 1 < k { rate_private[order[filled + 1]] } else { f64::INFINITY };
            let span = (filled + 1) as f64;
            let lift = (next - level).min(remaining / span);
            level += lift;
            remaining -= lift * span;
            if remaining <= 1e-15 || !lift.is_finite() {
                break;
            }
            filled += 1;
            if filled >= k {
                break;
            }
        }
        let mut shares = vec![0.0; k];
        for &i in &order {
            shares[i] = (level - rate_private[i]).max(0.0);
        }
        // Absorb rounding so the shares sum exactly to the budget.
        let used: f64 = shares.iter().sum();
        let slack = rate_common - used;
        shares[order[0]] = (shares[order[0]] + slack).max(0.0);
        let min_total = (0..k)
            .map(|i| rate_private[i] + shares[i])
            .fold(f64::INFINITY, f64::min);
        (Self { common_share: shares }, min_total)
    }
}

/// Zero-forcing directions: normalized columns of the right pseudoinverse of
/// the estimate matrix, so stream j is invisible to every estimated row but j.
pub fn zf_directions(estimate_rows: &CMat) -> Result<Vec<CVec>> {
    let pinv = right_pseudoinverse(estimate_rows)?;
    let mut dirs = Vec::with_capacity(estimate_rows.nrows());
    for j in 0..pinv.ncols() {
        let col = pinv.column(j).into_owned();
        let n = col.norm();
        if n <= 1e-300 {
            return Err(Error::IllConditioned("vanishing pseudoinverse column".into()));
        }
        dirs.push(col.unscale(n));
    }
    Ok(dirs)
}

/// How the common-stream direction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommonDirection {
    /// Leading right singular vector of the estimate matrix — maximizes the
    /// total estimated receive energy Σ|hhat_k^H q|² over unit q.
    DominantSvd,
    /// Normalized sum of the per-user estimated directions.
    MatchedSum,
    /// Seeded random unit vector (control baseline).
    UniformRandom { seed: u64 },
}

/// Common-stream direction for the given estimate rows.
pub fn common_precoder(estimate_rows: &CMat, strategy: CommonDirection) -> Result<CVec> {
    if estimate_rows.nrows() == 0 || estimate_rows.ncols() == 0 {
        return Err(Error::DegenerateInput("empty estimate".into()));
    }
    match strategy {
        CommonDirection::DominantSvd => dominant_right_singular(estimate_rows),
        CommonDirection::MatchedSum => {
            let m = estimate_rows.ncols();
            let mut sum = CVec::zeros(m);
            for k in 0..estimate_rows.nrows() {
                let row = estimate_rows.row(k).adjoint();
                let n = row.norm();
                if n <= 1e-300 {
                    return Err(Error::DegenerateInput("zero estimate row".into()));
                }
                sum += row.unscale(n);
            }
            let n = sum.norm();
            if n <= 1e-12 {
                return Err(Error::DegenerateInput("estimated directions cancel".into()));
            }
            Ok(sum.unscale(n))
        }
        CommonDirection::UniformRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(unit_vector(estimate_rows.ncols(), &mut rng))
        }
    }
}

/// Rates through the two-stage SIC chain: every user first decodes the common
/// stream with all private streams as noise, cancels it, then decodes its
/// private stream with the other private streams as noise. SIC is perfect.
pub fn evaluate_rates(h: &ChannelRealization, set: &PrecoderSet) -> Result<RateReport> {
    let k = h.users();
    if set.users() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} users in channel, {} private streams",
            k,
            set.users()
        )));
    }
    if set.antennas() != h.antennas() {
        return Err(Error::DimensionMismatch(format!(
            "{} antennas in channel, {} in precoders",
            h.antennas(),
            set.antennas()
        )));
    }
    let amp_common = &h.matrix * &set.common;
    let amps: Vec<CVec> = set.private.iter().map(|p| &h.matrix * p).collect();

    let mut sinr_common = Vec::with_capacity(k);
    let mut sinr_private = Vec::with_capacity(k);
    for user in 0..k {
        let own = amps[user][user].norm_sqr();
        let total_private: f64 = amps.iter().map(|a| a[user].norm_sqr()).sum();
        sinr_common.push(amp_common[user].norm_sqr() / (1.0 + total_private));
        sinr_private.push(own / (1.0 + total_private - own));
    }
    Ok(RateReport::from_sinrs(sinr_common, &sinr_private))
}

/// Conventional baselines evaluated on the true channel with knowledge `hhat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Serve the single best user with full power on its estimated direction.
    Tdma,
    /// Zero-forcing beamforming to all users, no common stream.
    Zfbf,
    /// Per-realization switch to whichever of the two sum rates is larger.
    SuMu,
}

/// Rates of a conventional baseline for one realization.
pub fn baseline_rates(
    h: &ChannelRealization,
    estimate_rows: &CMat,
    power: f64,
    scheme: Scheme,
) -> Result<RateReport> {
    let k = h.users();
    if estimate_rows.nrows() != k || estimate_rows.ncols() != h.antennas() {
        return Err(Error::DimensionMismatch("estimate does not match channel".into()));
    }
    match scheme {
        Scheme::Tdma => {
            let mut best_user = 0;
            let mut best_rate = f64::NEG_INFINITY;
            for user in 0..k {
                let dir = estimate_rows.row(user).adjoint();
                let n = dir.norm();
                if n <= 1e-300 {
                    return Err(Error::DegenerateInput("zero estimate row".into()));
                }
                let gain = h.matrix.row(user).adjoint().dotc(&dir.unscale(n)).norm_sqr();
                let rate = bits(power * gain);
                if rate > best_rate {
                    best_rate = rate;
                    best_user = user;
                }
            }
            let mut rate_private = vec![0.0; k];
            rate_private[best_user] = best_rate;
            Ok(RateReport::from_rates(vec![0.0; k], 0.0, rate_private))
        }
        Scheme::Zfbf => {
            let dirs = zf_directions(estimate_rows)?;
            evaluate_rates(h, &PrecoderSet::private_only(&dirs, power)?)
        }
        Scheme::SuMu => {
            let tdma = baseline_rates(h, estimate_rows, power, Scheme::Tdma)?;
            let zfbf = baseline_rates(h, estimate_rows, power, Scheme::Zfbf)?;
            Ok(if tdma.sum_rate > zfbf.sum_rate { tdma } else { zfbf })
        }
    }
}

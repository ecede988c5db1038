//! Fading draws and transmitter-side channel-knowledge models.
//!
//! Conventions used everywhere downstream:
//! - `ChannelRealization::matrix` is K×M with row k equal to h_k^H, so
//!   `matrix * p` is the vector of per-user receive amplitudes of a
//!   precoder column `p`.
//! - Noise power is 1, so the power budget `P` is the transmit SNR.
//! - Channel knowledge at the transmitter is an estimate matrix of the same
//!   shape plus a quality tag: either an SNR-exponent error model or a
//!   random-codebook quantization of each user's direction.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_mat, complex_gaussian_vec, hermitian_sqrt, unit_vector, CMat, CVec};

/// Largest accepted quantization codebook exponent (2^30 codewords).
pub const RVQ_MAX_BITS: u32 = 30;

/// One narrowband fading realization for K users and M transmit antennas.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// K×M, row k = h_k^H.
    pub matrix: CMat,
}

impl ChannelRealization {
    /// i.i.d. CN(0,1) entries — the uncorrelated Rayleigh reference case.
    pub fn draw_iid<R: Rng + ?Sized>(users: usize, antennas: usize, rng: &mut R) -> Self {
        Self { matrix: complex_gaussian_mat(users, antennas, rng) }
    }

    /// Build from per-user channel vectors h_k (stored as rows h_k^H).
    pub fn from_user_channels(channels: &[CVec]) -> Result<Self> {
        let k = channels.len();
        if k == 0 {
            return Err(Error::DegenerateInput("no users".into()));
        }
        let m = channels[0].len();
        if channels.iter().any(|h| h.len() != m) {
            return Err(Error::DimensionMismatch("user channels differ in length".into()));
        }
        let mut matrix = CMat::zeros(k, m);
        for (i, h) in channels.iter().enumerate() {
            for j in 0..m {
                matrix[(i, j)] = h[j].conj();
            }
        }
        Ok(Self { matrix })
    }

    pub fn users(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.matrix.ncols()
    }

    /// User k's channel vector h_k (adjoint of row k).
    pub fn user_channel(&self, k: usize) -> CVec {
        self.matrix.row(k).adjoint()
    }
}

/// Quality tag carried by an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsitQuality {
    /// Error power decays as P^(−alpha). `alpha = +inf` encodes a perfect
    /// estimate; values above 1 behave like 1 for slope purposes.
    Exponent { alpha: f64 },
    /// Direction-only feedback from a random codebook of 2^bits unit vectors.
    Rvq { bits: u32 },
}

/// Channel knowledge at the transmitter.
#[derive(Debug, Clone)]
pub struct CsitEstimate {
    /// K×M, row k = hhat_k^H. Unit rows for the quantized kind.
    pub matrix: CMat,
    pub quality: CsitQuality,
    /// Per-user error power τ² (exponent kind only; empty for quantized).
    pub error_var: Vec<f64>,
}

impl CsitEstimate {
    pub fn users(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Gaussian-error estimate: hhat = √(1−τ²)·h + τ·e with τ² = min(1, P^(−alpha))
/// and e i.i.d. CN(0,1). The √(1−τ²) shrinkage keeps E‖hhat_k‖² = M at every
/// SNR, so estimate power never drifts with the operating point.
pub fn gaussian_csit<R: Rng + ?Sized>(
    h: &ChannelRealization,
    alpha: f64,
    power: f64,
    rng: &mut R,
) -> Result<CsitEstimate> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("quality exponent must be ≥ 0, got {alpha}")));
    }
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::InvalidArgument(format!("power must be positive and finite, got {power}")));
    }
    let tau_sq = if alpha.is_infinite() { 0.0 } else { power.powf(-alpha).min(1.0) };
    let tau = tau_sq.sqrt();
    let keep = (1.0 - tau_sq).sqrt();
    let noise = complex_gaussian_mat(h.users(), h.antennas(), rng);
    let matrix = h.matrix.scale(keep) + noise.scale(tau);
    Ok(CsitEstimate {
        matrix,
        quality: CsitQuality::Exponent { alpha },
        error_var: vec![tau_sq; h.users()],
    })
}

/// Result of quantizing one channel direction.
#[derive(Debug, Clone)]
pub struct RvqOutcome {
    /// Chosen unit-norm codeword.
    pub direction: CVec,
    /// sin²θ between the channel and the codeword: the invariant
    /// interference fraction left by the quantizer.
    pub sin_sq: f64,
}

/// Quantize against an explicit codeword sequence (test hook and the engine
/// behind [`rvq_quantize`]). Keeps only the running best, so codebook size
/// costs no memory.
pub fn rvq_quantize_with<I>(h: &CVec, codebook: I) -> Result<RvqOutcome>
where
    I: IntoIterator<Item = CVec>,
{
    let h_energy = h.norm_squared();
    if h_energy <= 0.0 {
        return Err(Error::DegenerateInput("cannot quantize a zero channel".into()));
    }
    let mut best: Option<(f64, CVec)> = None;
    for w in codebook {
        if w.len() != h.len() {
            return Err(Error::DimensionMismatch("codeword length differs from channel".into()));
        }
        let align = h.dotc(&w).norm_sqr();
        if best.as_ref().is_none_or(|(b, _)| align > *b) {
            best = Some((align, w));
        }
    }
    let (align, direction) =
        best.ok_or_else(|| Error::DegenerateInput("empty codebook".into()))?;
    let sin_sq = (1.0 - align / h_energy).clamp(0.0, 1.0);
    Ok(RvqOutcome { direction, sin_sq })
}

/// Random vector quantization of a channel direction: draw 2^bits random unit
/// codewords and keep the one best aligned with h. Codebooks are drawn fresh
/// per call; reusing one across fading realizations would bias ergodic means.
///
/// Drawing sequentially from one RNG stream makes codebooks nested across
/// `bits` for a fixed stream: the first 2^b draws coincide, which the
/// feedback-budget search exploits to compare budgets without extra noise.
pub fn rvq_quantize<R: Rng + ?Sized>(h: &CVec, bits: u32, rng: &mut R) -> Result<RvqOutcome> {
    if bits == 0 || bits > RVQ_MAX_BITS {
        return Err(Error::InvalidArgument(format!(
            "codebook exponent must be in 1..={RVQ_MAX_BITS}, got {bits}"
        )));
    }
    let m = h.len();
    rvq_quantize_with(h, (0..1u64 << bits).map(|_| unit_vector(m, rng)))
}

/// Quantize every user of a realization with one RNG stream (users in index
/// order). Returns the estimate (unit rows) and the per-user sin²θ values.
pub fn rvq_csit<R: Rng + ?Sized>(
    h: &ChannelRealization,
    bits: u32,
    rng: &mut R,
) -> Result<(CsitEstimate, Vec<f64>)> {
    let k = h.users();
    let mut matrix = CMat::zeros(k, h.antennas());
    let mut sin_sq = Vec::with_capacity(k);
    for user in 0..k {
        let outcome = rvq_quantize(&h.user_channel(user), bits, rng)?;
        for j in 0..h.antennas() {
            matrix[(user, j)] = outcome.direction[j].conj();
        }
        sin_sq.push(outcome.sin_sq);
    }
    Ok((CsitEstimate { matrix, quality: CsitQuality::Rvq { bits }, error_var: Vec::new() }, sin_sq))
}

/// Scenario-level description of how the transmitter learns the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsitModel {
    Perfect,
    Exponent { alpha: f64 },
    Rvq { bits: u32 },
}

impl CsitModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CsitModel::Perfect => Ok(()),
            CsitModel::Exponent { alpha } => {
                if alpha >= 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("quality exponent must be ≥ 0, got {alpha}")))
                }
            }
            CsitModel::Rvq { bits } => {
                if bits >= 1 && bits <= RVQ_MAX_BITS {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "codebook exponent must be in 1..={RVQ_MAX_BITS}, got {bits}"
                    )))
                }
            }
        }
    }

    /// Produce the transmitter's estimate for one realization.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        h: &ChannelRealization,
        power: f64,
        rng: &mut R,
    ) -> Result<CsitEstimate> {
        match *self {
            CsitModel::Perfect => Ok(CsitEstimate {
                matrix: h.matrix.clone(),
                quality: CsitQuality::Exponent { alpha: f64::INFINITY },
                error_var: vec![0.0; h.users()],
            }),
            CsitModel::Exponent { alpha } => gaussian_csit(h, alpha, power, rng),
            CsitModel::Rvq { bits } => rvq_csit(h, bits, rng).map(|(est, _)| est),
        }
    }
}

/// Transmit-side spatial covariance of one user's channel.
#[derive(Debug, Clone)]
pub struct SpatialCovariance {
    /// M×M Hermitian PSD with trace M.
    pub matrix: CMat,
    /// Nominal azimuth of the scattering cluster, radians.
    pub azimuth: f64,
    /// Half-width of the scattering interval, radians.
    pub spread: f64,
    /// Antenna spacing in carrier wavelengths.
    pub spacing: f64,
}

impl SpatialCovariance {
    /// Check the structural invariants: Hermitian, PSD, trace = M.
    pub fn validate(&self) -> Result<()> {
        let m = self.matrix.nrows();
        if !self.matrix.is_square() || m == 0 {
            return Err(Error::DimensionMismatch("covariance must be square and nonempty".into()));
        }
        let herm_gap = (&self.matrix - self.matrix.adjoint()).norm();
        if herm_gap > 1e-12 * self.matrix.norm().max(1.0) {
            return Err(Error::NumericalFailure(format!("covariance not Hermitian (gap {herm_gap:.3e})")));
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 * max.max(1.0) {
            return Err(Error::NumericalFailure(format!("covariance not PSD (eigenvalue {min:.3e})")));
        }
        let trace: f64 = (0..m).map(|i| self.matrix[(i, i)].re).sum();
        if (trace - m as f64).abs() > 1e-9 * m as f64 {
            return Err(Error::NumericalFailure(format!("covariance trace {trace} != {m}")));
        }
        Ok(())
    }

    /// Hermitian square root used to color white draws: h = factor · g.
    pub fn sqrt_factor(&self) -> Result<CMat> {
        hermitian_sqrt(&self.matrix)
    }

    /// Draw one channel vector with E[h h^H] equal to this covariance.
    /// Hot loops should compute [`Self::sqrt_factor`] once and multiply.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CVec> {
        Ok(self.sqrt_factor()? * complex_gaussian_vec(self.matrix.nrows(), rng))
    }

    /// Smallest r such that the top-r eigenvalues capture `fraction` of the
    /// trace. Used to pick how many spatial directions a cluster spans.
    pub fn effective_rank(&self, fraction: f64) -> usize {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut lams: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        lams.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = lams.iter().sum();
        let mut acc = 0.0;
        for (i, lam) in lams.iter().enumerate() {
            acc += lam;
            if acc >= fraction * total {
                return i + 1;
            }
        }
        lams.len()
    }

    /// The r dominant eigenvectors, as an M×r matrix with orthonormal columns.
    pub fn dominant_eigenvectors(&self, r: usize) -> CMat {
        crate::linalg::top_eigenvectors(&self.matrix, r)
    }
}

/// One-ring covariance for a uniform linear array: scatterers occupy
/// [azimuth − spread, azimuth + spread] and each entry is the average phase
/// ramp over that arc,
/// R[p,q] = (1/2Δ) ∫ exp(j·2π·spacing·(p−q)·sin φ) dφ.
/// Entries are integrated adaptively to 1e-10 absolute tolerance.
pub fn one_ring_covariance(
    azimuth: f64,
    spread: f64,
    antennas: usize,
    spacing: f64,
) -> Result<SpatialCovariance> {
    if antennas == 0 {
        return Err(Error::InvalidArgument("need at least one antenna".into()));
    }
    if !azimuth.is_finite() {
        return Err(Error::InvalidArgument("azimuth must be finite".into()));
    }
    if !(spread > 0.0 && spread <= std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!("angular spread must be in (0, π], got {spread}")));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidArgument(format!("antenna spacing must be positive, got {spacing}")));
    }
    let lo = azimuth - spread;
    let hi = azimuth + spread;
    let mut lags = Vec::with_capacity(antennas);
    for d in 0..antennas {
        let omega = 2.0 * std::f64::consts::PI * spacing * d as f64;
        let f = |phi: f64| Complex64::from_polar(1.0, omega * phi.sin());
        lags.push(oscillatory_integral(&f, lo, hi, omega, 1e-10).unscale(2.0 * spread));
    }
    let mut matrix = CMat::zeros(antennas, antennas);
    for p in 0..antennas {
        for q in 0..antennas {
            matrix[(p, q)] = if p >= q { lags[p - q] } else { lags[q - p].conj() };
        }
    }
    // Diagonal lags integrate a constant, so the trace is already M; the
    // explicit rescale just pins the invariant against quadrature fuzz.
    let trace: f64 = (0..antennas).map(|i| matrix[(i, i)].re).sum();
    let cov = SpatialCovariance {
        matrix: matrix.scale(antennas as f64 / trace),
        azimuth,
        spread,
        spacing,
    };
    cov.validate()?;
    Ok(cov)
}

fn simpson_slice(f: &impl Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, Complex64, Complex64, Complex64) {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (fa + fm.scale(4.0) + fb).scale((b - a) / 6.0);
    (fa, fm, fb, whole)
}

fn adaptive_simpson(f: &impl Fn(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Complex64 {
    let (fa, fm, fb, whole) = simpson_slice(f, a, b);
    adaptive_step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Integrates exp(j·phase(φ)) where the phase changes by at most `phase_rate`
/// per unit of φ. A single adaptive pass can alias to zero error when the
/// initial samples land on equal phases (e.g. a full period between probes),
/// so the interval is pre-split into panels short enough that each spans well
/// under half a period before the adaptive refinement takes over.
fn oscillatory_integral(
    f: &impl Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    phase_rate: f64,
    tol: f64,
) -> Complex64 {
    let travel = phase_rate.abs() * (b - a).abs();
    let panels = ((travel / std::f64::consts::FRAC_PI_2).ceil() as usize).clamp(9, 1 << 14);
    let width = (b - a) / panels as f64;
    let panel_tol = tol / panels as f64;
    (0..panels)
        .map(|i| {
            let left = a + width * i as f64;
            adaptive_simpson(f, left, left + width, panel_tol)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step(
    f: &impl Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (fa + flm.scale(4.0) + fm).scale((m - a) / 6.0);
    let right = (fm + frm.scale(4.0) + fb).scale((b - m) / 6.0);
    let refined = left + right;
    let err = refined - whole;
    if depth == 0 || err.norm() <= 15.0 * tol {
        return refined + err.unscale(15.0);
    }
    adaptive_step(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)
}

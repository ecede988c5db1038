//! Hierarchical rate splitting for large arrays: users are grouped by the
//! similarity of their spatial covariances, an outer precoder per group
//! suppresses inter-group interference from long-term statistics alone, and
//! inner precoding works on the reduced effective channels. Two layers of
//! common messages (one for everyone, one per group) absorb the interference
//! neither tier can null.

use crate::channel::{ChannelRealization, SpatialCovariance};
use crate::error::{Error, Result};
use crate::linalg::{null_space_basis, top_eigenvectors, CMat, CVec};
use crate::transceiver::{bits, common_precoder, zf_directions, CommonDirection};
use num_complex::Complex64;

/// Fraction of covariance trace a group's outer precoder must capture.
const RANK_FRACTION: f64 = 0.95;

/// Assignment of users to spatial groups, with per-group aggregate statistics.
#[derive(Debug, Clone)]
pub struct Grouping {
    /// `assignments[k]` is user k's group index.
    pub assignments: Vec<usize>,
    pub groups: usize,
    /// Normalized average of the member covariances, per group.
    pub group_covariances: Vec<SpatialCovariance>,
    /// Eigenspace rank each group's outer precoder should span.
    pub dominant_ranks: Vec<usize>,
    /// Total chordal distance from users to their group medoids; zero means
    /// the clustering is exact (or the metric is degenerate).
    pub within_distance: f64,
}

impl Grouping {
    pub fn users(&self) -> usize {
        self.assignments.len()
    }

    /// Members of group g, ascending.
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&k| self.assignments[k] == g).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.assignments.is_empty() {
            return Err(Error::DegenerateInput("empty grouping".into()));
        }
        if self.group_covariances.len() != self.groups || self.dominant_ranks.len() != self.groups {
            return Err(Error::DimensionMismatch("per-group fields disagree on the group count".into()));
        }
        if self.assignments.iter().any(|&g| g >= self.groups) {
            return Err(Error::InvalidArgument("assignment to a nonexistent group".into()));
        }
        for g in 0..self.groups {
            let members = self.members(g).len();
            if members == 0 {
                return Err(Error::DegenerateInput(format!("group {g} has no members")));
            }
            if self.dominant_ranks[g] < members {
                return Err(Error::InvalidArgument(format!(
                    "group {g} rank {} below its {members} members; inner zero-forcing needs rank ≥ members",
                    self.dominant_ranks[g]
                )));
            }
        }
        Ok(())
    }
}

/// Chordal distance between the dominant eigenspaces of two covariances,
/// computed as the Frobenius distance of their projectors (rank-agnostic).
fn projector(cov: &SpatialCovariance) -> CMat {
    let r = cov.effective_rank(RANK_FRACTION).max(1);
    let u = cov.dominant_eigenvectors(r);
    &u * u.adjoint()
}

/// Cluster users by spatial similarity: k-medoids under the chordal distance
/// between dominant eigenspaces, with farthest-point initialization. The seed
/// only breaks ties, so equal inputs give equal groupings.
pub fn group_users(
    covariances: &[SpatialCovariance],
    groups: usize,
    seed: u64,
) -> Result<Grouping> {
    let users = covariances.len();
    if users == 0 {
        return Err(Error::DegenerateInput("no users to group".into()));
    }
    if groups == 0 || groups > users {
        return Err(Error::InvalidArgument(format!(
            "group count must be in 1..={users}, got {groups}"
        )));
    }
    for cov in covariances {
        cov.validate()?;
    }
    let antennas = covariances[0].matrix.nrows();
    if covariances.iter().any(|c| c.matrix.nrows() != antennas) {
        return Err(Error::DimensionMismatch("covariances of mixed antenna counts".into()));
    }

    let projectors: Vec<CMat> = covariances.iter().map(projector).collect();
    let dist = |i: usize, j: usize| (&projectors[i] - &projectors[j]).norm();
    // The seed feeds deterministic tie-breaking only: rotate index preference
    // so distinct seeds can land on distinct (equally good) medoid sets.
    let prefer = |i: usize, j: usize| (i + seed as usize) % users <= (j + seed as usize) % users;

    // Farthest-point start: the most central user, then whoever is farthest
    // from the chosen set.
    let mut medoids: Vec<usize> = Vec::with_capacity(groups);
    let central = (0..users)
        .min_by(|&a, &b| {
            let da: f64 = (0..users).map(|j| dist(a, j)).sum();
            let db: f64 = (0..users).map(|j| dist(b, j)).sum();
            da.partial_cmp(&db).unwrap().then(if prefer(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater })
        })
        .unwrap();
    medoids.push(central);
    while medoids.len() < groups {
        let next = (0..users)
            .filter(|i| !medoids.contains(i))
            .max_by(|&a, &b| {
                let da = medoids.iter().map(|&m| dist(a, m)).fold(f64::INFINITY, f64::min);
                let db = medoids.iter().map(|&m| dist(b, m)).fold(f64::INFINITY, f64::min);
                da.partial_cmp(&db).unwrap().then(if prefer(b, a) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater })
            })
            .unwrap();
        medoids.push(next);
    }

    let mut assignments = vec![0usize; users];
    for _ in 0..100 {
        // Assign: nearest medoid, medoids pinned to their own cluster.
        for k in 0..users {
            assignments[k] = if let Some(g) = medoids.iter().position(|&m| m == k) {
                g
            } else {
                (0..groups)
                    .min_by(|&a, &b| {
                        dist(k, medoids[a]).partial_cmp(&dist(k, medoids[b])).unwrap()
                    })
                    .unwrap()
            };
        }
        // Update: each medoid moves to its cluster's most central member.
        let mut moved = false;
        for g in 0..groups {
            let members: Vec<usize> = (0..users).filter(|&k| assignments[k] == g).collect();
            let best = *members
                .iter()
                .min_by(|&&a, &&b| {
                    let da: f64 = members.iter().map(|&j| dist(a, j)).sum();
                    let db: f64 = members.iter().map(|&j| dist(b, j)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best != medoids[g] {
                medoids[g] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let within_distance: f64 = (0..users).map(|k| dist(k, medoids[assignments[k]])).sum();

    let mut group_covariances = Vec::with_capacity(groups);
    let mut dominant_ranks = Vec::with_capacity(groups);
    for g in 0..groups {
        let members: Vec<usize> = (0..users).filter(|&k| assignments[k] == g).collect();
        let mut matrix = CMat::zeros(antennas, antennas);
        for &k in &members {
            matrix += &covariances[k].matrix;
        }
        let trace: f64 = (0..antennas).map(|i| matrix[(i, i)].re).sum();
        let matrix = matrix.scale(antennas as f64 / trace);
        let spacing = covariances[members[0]].spacing;
        let azimuth = {
            let (s, c) = members
                .iter()
                .fold((0.0, 0.0), |(s, c), &k| {
                    (s + covariances[k].azimuth.sin(), c + covariances[k].azimuth.cos())
                });
            s.atan2(c)
        };
        let spread = members.iter().map(|&k| covariances[k].spread).fold(0.0, f64::max);
        let cov = SpatialCovariance { matrix, azimuth, spread, spacing };
        cov.validate()?;
        let rank = cov.effective_rank(RANK_FRACTION).max(members.len()).min(antennas);
        group_covariances.push(cov);
        dominant_ranks.push(rank);
    }

    let grouping = Grouping { assignments, groups, group_covariances, dominant_ranks, within_distance };
    grouping.validate()?;
    Ok(grouping)
}

/// Outer precoder of group g: its covariance's dominant directions after
/// projection onto the orthogonal complement of every other group's dominant
/// eigenspace (block-diagonalization from statistics alone). Columns are
/// orthonormal. Errors when the other groups leave fewer null-space
/// dimensions than the requested rank.
pub fn outer_precoder(grouping: &Grouping, g: usize) -> Result<CMat> {
    grouping.validate()?;
    if g >= grouping.groups {
        return Err(Error::InvalidArgument(format!(
            "group {g} out of range for {} groups",
            grouping.groups
        )));
    }
    let antennas = grouping.group_covariances[g].matrix.nrows();
    let rank = grouping.dominant_ranks[g];
    if grouping.groups == 1 {
        return Ok(grouping.group_covariances[g].dominant_eigenvectors(rank));
    }
    let foreign_rank: usize =
        (0..grouping.groups).filter(|&o| o != g).map(|o| grouping.dominant_ranks[o]).sum();
    let mut foreign = CMat::zeros(antennas, foreign_rank);
    let mut col = 0;
    for other in (0..grouping.groups).filter(|&o| o != g) {
        let u = grouping.group_covariances[other].dominant_eigenvectors(grouping.dominant_ranks[other]);
        for j in 0..u.ncols() {
            foreign.set_column(col, &u.column(j));
            col += 1;
        }
    }
    let basis = null_space_basis(&foreign)?;
    if basis.ncols() < rank {
        return Err(Error::InfeasibleOuter {
            rank,
            null_dim: basis.ncols(),
            antennas,
        });
    }
    // Dominant directions of this group's covariance compressed into the
    // protected subspace; mapping back keeps columns orthonormal.
    let compressed = basis.adjoint() * &grouping.group_covariances[g].matrix * &basis;
    let w = top_eigenvectors(&compressed, rank);
    Ok(&basis * w)
}

/// What the transmitter knows when assembling a hierarchical design: the
/// outer precoders (long-term), each group's effective-channel estimates
/// against its own outer precoder (short-term, low-dimensional), and the
/// full-antenna estimates used for the one beam that must reach everyone.
#[derive(Debug, Clone)]
pub struct EffectiveCsit {
    pub outers: Vec<CMat>,
    /// `per_group[g]` stacks ĥ_k^H·B_g for each member k of group g.
    pub per_group: Vec<CMat>,
    /// K×M estimate rows for the outer common beam.
    pub full: CMat,
}

/// Compress full-antenna estimates through each group's outer precoder.
pub fn effective_csit(full: &CMat, grouping: &Grouping, outers: &[CMat]) -> Result<EffectiveCsit> {
    grouping.validate()?;
    if outers.len() != grouping.groups {
        return Err(Error::DimensionMismatch("one outer precoder per group required".into()));
    }
    if full.nrows() != grouping.users() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimate rows for {} users",
            full.nrows(),
            grouping.users()
        )));
    }
    let per_group = (0..grouping.groups)
        .map(|g| {
            let members = grouping.members(g);
            let mut rows = CMat::zeros(members.len(), outers[g].ncols());
            for (i, &k) in members.iter().enumerate() {
                let eff = full.row(k) * &outers[g];
                rows.set_row(i, &eff);
            }
            rows
        })
        .collect();
    Ok(EffectiveCsit { outers: outers.to_vec(), per_group, full: full.clone() })
}

/// Power apportioning across the hierarchy: `outer` is the share given to
/// everything below the outer common message (split equally across groups);
/// `inner[g]` is group g's share given to private streams over its own
/// common message.
#[derive(Debug, Clone)]
pub struct HrsPowerSplit {
    pub outer: f64,
    pub inner: Vec<f64>,
}

impl HrsPowerSplit {
    pub fn uniform(outer: f64, inner: f64, groups: usize) -> Self {
        Self { outer, inner: vec![inner; groups] }
    }

    fn validate(&self, groups: usize) -> Result<()> {
        if self.inner.len() != groups {
            return Err(Error::DimensionMismatch(format!(
                "{} inner splits for {groups} groups",
                self.inner.len()
            )));
        }
        for share in std::iter::once(self.outer).chain(self.inner.iter().cloned()) {
            if !(0.0..=1.0).contains(&share) {
                return Err(Error::InvalidArgument(format!("power share {share} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A full two-tier design. Inner vectors live in each group's effective
/// space; the outer precoders are orthonormal, so effective-space norms are
/// transmit powers.
#[derive(Debug, Clone)]
pub struct HrsPrecoderSet {
    /// Full-antenna beam carrying the message every user decodes first.
    pub outer_common: CVec,
    pub outer_precoders: Vec<CMat>,
    /// Per-group common beam in effective coordinates, power included.
    pub inner_common: Vec<CVec>,
    /// Per-group, per-member private beams in effective coordinates.
    pub inner_private: Vec<Vec<CVec>>,
    pub rho_outer: f64,
    pub rho_inner: Vec<f64>,
    pub power: f64,
}

impl HrsPrecoderSet {
    pub fn power_used(&self) -> f64 {
        self.outer_common.norm_squared()
            + self
                .inner_common
                .iter()
                .map(|c| c.norm_squared())
                .chain(self.inner_private.iter().flatten().map(|p| p.norm_squared()))
                .sum::<f64>()
    }

    /// User k's private beam mapped to the antenna domain.
    pub fn full_private_beam(&self, grouping: &Grouping, k: usize) -> CVec {
        let g = grouping.assignments[k];
        let slot = grouping.members(g).iter().position(|&m| m == k).unwrap();
        &self.outer_precoders[g] * &self.inner_private[g][slot]
    }
}

/// Build the two-tier design: inner zero-forcing on each group's effective
/// estimates, per-group common beams along the effective dominant direction,
/// and an outer common beam along the dominant direction of the full
/// estimates. Group budgets are equal shares of the non-outer power.
pub fn hrs_assemble(
    grouping: &Grouping,
    csit: &EffectiveCsit,
    splits: &HrsPowerSplit,
    power: f64,
) -> Result<HrsPrecoderSet> {
    grouping.validate()?;
    splits.validate(grouping.groups)?;
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::InvalidArgument(format!("power must be positive, got {power}")));
    }
    if csit.outers.len() != grouping.groups || csit.per_group.len() != grouping.groups {
        return Err(Error::DimensionMismatch("per-group CSIT does not match the grouping".into()));
    }
    let antennas = csit.full.ncols();
    for (g, outer) in csit.outers.iter().enumerate() {
        if outer.nrows() != antennas {
            return Err(Error::DimensionMismatch(format!("outer precoder {g} row count")));
        }
        let gram = outer.adjoint() * outer;
        let defect = (0..gram.nrows())
            .flat_map(|i| (0..gram.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| {
                let target = if i == j { Complex64::ONE } else { Complex64::ZERO };
                (gram[(i, j)] - target).norm()
            })
            .fold(0.0, f64::max);
        if defect > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "outer precoder {g} columns not orthonormal (defect {defect:.3e})"
            )));
        }
        let members = grouping.members(g).len();
        if csit.per_group[g].nrows() != members || csit.per_group[g].ncols() != outer.ncols() {
            return Err(Error::DimensionMismatch(format!("effective estimates of group {g}")));
        }
    }

    let outer_dir = common_precoder(&csit.full, CommonDirection::DominantSvd)?;
    let outer_common = outer_dir.scale(((1.0 - splits.outer) * power).sqrt());
    let group_budget = splits.outer * power / grouping.groups as f64;

    let mut inner_common = Vec::with_capacity(grouping.groups);
    let mut inner_private = Vec::with_capacity(grouping.groups);
    for g in 0..grouping.groups {
        let eff = &csit.per_group[g];
        let members = eff.nrows();
        let dirs = zf_directions(eff)?;
        let common_dir = common_precoder(eff, CommonDirection::DominantSvd)?;
        let private_power = splits.inner[g] * group_budget / members as f64;
        inner_private.push(
            dirs.into_iter().map(|d| d.scale(private_power.sqrt())).collect::<Vec<_>>(),
        );
        inner_common.push(common_dir.scale(((1.0 - splits.inner[g]) * group_budget).sqrt()));
    }

    let set = HrsPrecoderSet {
        outer_common,
        outer_precoders: csit.outers.clone(),
        inner_common,
        inner_private,
        rho_outer: splits.outer,
        rho_inner: splits.inner.clone(),
        power,
    };
    let used = set.power_used();
    if used > power + 1e-9 {
        return Err(Error::NumericalFailure(format!(
            "assembled streams use {used} of a {power} budget"
        )));
    }
    Ok(set)
}

/// Per-layer rates of the three-stage decode chain.
#[derive(Debug, Clone)]
pub struct HrsRateReport {
    /// Rate of the message decoded first by everyone.
    pub outer_common_rate: f64,
    /// Rate of each group's own common message.
    pub group_common_rates: Vec<f64>,
    pub rate_private: Vec<f64>,
    pub sum_rate: f64,
    /// Per-user SINR of the outer common message (stage one).
    pub sinr_outer: Vec<f64>,
    /// Per-user SINR of the own-group common message (stage two).
    pub sinr_group: Vec<f64>,
    /// Per-user private SINR (stage three).
    pub sinr_private: Vec<f64>,
}

/// Evaluate the three-stage SIC chain: every user decodes the outer common
/// message against everything, strips it, decodes its own group's common
/// message against the remainder, strips that, then decodes its private
/// stream. Other groups' common and private beams stay as noise throughout.
pub fn hrs_evaluate_rates(
    h: &ChannelRealization,
    set: &HrsPrecoderSet,
    grouping: &Grouping,
) -> Result<HrsRateReport> {
    grouping.validate()?;
    let users = h.users();
    if users != grouping.users() {
        return Err(Error::DimensionMismatch(format!(
            "{users} channel rows for {} grouped users",
            grouping.users()
        )));
    }
    if h.antennas() != set.outer_common.len() {
        return Err(Error::DimensionMismatch("antenna count of the outer common beam".into()));
    }
    if set.outer_precoders.len() != grouping.groups
        || set.inner_common.len() != grouping.groups
        || set.inner_private.len() != grouping.groups
    {
        return Err(Error::DimensionMismatch("per-group beam lists".into()));
    }
    for g in 0..grouping.groups {
        if set.inner_private[g].len() != grouping.members(g).len() {
            return Err(Error::DimensionMismatch(format!("private beam count of group {g}")));
        }
    }

    let mut sinr_outer = vec![0.0; users];
    let mut sinr_group = vec![0.0; users];
    let mut sinr_private = vec![0.0; users];
    // Stream powers received by user k: outer common, per-group common,
    // per-group per-member private.
    for k in 0..users {
        let row = h.matrix.row(k);
        let own_group = grouping.assignments[k];
        let outer_power = (row * &set.outer_common)[(0, 0)].norm_sqr();
        let mut group_common_power = vec![0.0; grouping.groups];
        let mut private_power = vec![Vec::new(); grouping.groups];
        let mut own_private = 0.0;
        let mut total = 0.0;
        for g in 0..grouping.groups {
            let eff = row * &set.outer_precoders[g];
            group_common_power[g] = (&eff * &set.inner_common[g])[(0, 0)].norm_sqr();
            total += group_common_power[g];
            for (slot, beam) in set.inner_private[g].iter().enumerate() {
                let p = (&eff * beam)[(0, 0)].norm_sqr();
                if g == own_group && grouping.members(g)[slot] == k {
                    own_private = p;
                }
                private_power[g].push(p);
                total += p;
            }
        }
        let all = 1.0 + outer_power + total;
        sinr_outer[k] = outer_power / (all - outer_power);
        let after_outer = all - outer_power;
        sinr_group[k] =
            group_common_power[own_group] / (after_outer - group_common_power[own_group]);
        let after_group = after_outer - group_common_power[own_group];
        sinr_private[k] = own_private / (after_group - own_private);
    }

    let outer_common_rate = bits(sinr_outer.iter().cloned().fold(f64::INFINITY, f64::min));
    let group_common_rates: Vec<f64> = (0..grouping.groups)
        .map(|g| {
            bits(
                grouping
                    .members(g)
                    .iter()
                    .map(|&k| sinr_group[k])
                    .fold(f64::INFINITY, f64::min),
            )
        })
        .collect();
    let rate_private: Vec<f64> = sinr_private.iter().map(|&s| bits(s)).collect();
    let sum_rate = outer_common_rate
        + group_common_rates.iter().sum::<f64>()
        + rate_private.iter().sum::<f64>();
    Ok(HrsRateReport {
        outer_common_rate,
        group_common_rates,
        rate_private,
        sum_rate,
        sinr_outer,
        sinr_group,
        sinr_private,
    })
}

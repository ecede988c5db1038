//! Closed-form degrees-of-freedom (high-SNR slope) calculators and the
//! two-user achievable regions they trace out.
//!
//! The CSIT quality exponent `alpha` measures how fast channel-knowledge
//! error decays with SNR. Splitting off a common stream recovers the slope
//! that residual interference destroys: with K users the private streams
//! keep Kα of the perfect-knowledge slope and the common stream adds the
//! missing 1 − α on top.

use std::io::Write;

use crate::error::{Error, Result};

/// Transmission strategy whose slope or region is being described.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Rs,
    Zfbf,
    Tdma,
    SuMu,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Rs, Strategy::Zfbf, Strategy::Tdma, Strategy::SuMu];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Rs => "rs",
            Strategy::Zfbf => "zfbf",
            Strategy::Tdma => "tdma",
            Strategy::SuMu => "sumu",
        }
    }
}

/// Exponents outside [0,1] carry no extra slope, so they are clamped.
fn clamp_alpha(alpha: f64) -> f64 {
    if !(0.0..=1.0).contains(&alpha) {
        log::warn!("quality exponent {alpha} outside [0,1]; clamping");
        alpha.clamp(0.0, 1.0)
    } else {
        alpha
    }
}

/// Sum DoF of rate splitting: Kα from the private streams plus the extra
/// 1 − α carried by the common stream, i.e. 1 + (K−1)α.
pub fn rs_sum_dof(users: usize, alpha: f64) -> f64 {
    assert!(users >= 1, "need at least one user");
    1.0 + (users as f64 - 1.0) * clamp_alpha(alpha)
}

/// Sum DoF of pure zero-forcing: each of the K streams keeps only the
/// fraction α that survives the estimation error.
pub fn zf_sum_dof(users: usize, alpha: f64) -> f64 {
    assert!(users >= 1, "need at least one user");
    users as f64 * clamp_alpha(alpha)
}

/// Sum DoF of the two-cell layout: coordinated zero-forcing alone reaches
/// 2α; adding a common stream from one transmitter lifts it to 1 + α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoCellDof {
    pub zf: f64,
    pub rs: f64,
}

pub fn two_cell_dof(alpha: f64) -> TwoCellDof {
    let a = clamp_alpha(alpha);
    TwoCellDof { zf: 2.0 * a, rs: 1.0 + a }
}

/// Convex achievable DoF region of a two-user strategy.
#[derive(Debug, Clone)]
pub struct DofRegion {
    pub strategy: Strategy,
    pub alpha: f64,
    /// Counterclockwise convex polygon starting at the origin. Degenerate
    /// regions (a segment or the origin alone) keep fewer than 3 vertices.
    pub vertices: Vec<(f64, f64)>,
}

/// Two-user region polygons.
///
/// - `tdma`: time sharing trades the two single-user slopes, d1 + d2 ≤ 1.
/// - `zfbf`: both streams throttled to α, the square [0,α]².
/// - `sumu`: switch between the previous two, the hull of their union.
/// - `rs`: single-user corners (1,0),(0,1) joined through (1,α),(α,1) —
///   one full-slope stream plus an α-slope stream, in either role.
pub fn dof_region_two_user(strategy: Strategy, alpha: f64) -> DofRegion {
    let a = clamp_alpha(alpha);
    let candidates: Vec<(f64, f64)> = match strategy {
        Strategy::Tdma => vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
        Strategy::Zfbf => vec![(0.0, 0.0), (a, 0.0), (0.0, a), (a, a)],
        Strategy::SuMu => vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (a, 0.0), (0.0, a), (a, a)],
        Strategy::Rs => vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, a), (a, 1.0)],
    };
    DofRegion { strategy, alpha: a, vertices: convex_hull(candidates) }
}

impl DofRegion {
    /// Point containment with a 1e-12 slack on every edge test.
    pub fn contains(&self, d1: f64, d2: f64) -> bool {
        const TOL: f64 = 1e-12;
        match self.vertices.len() {
            0 => false,
            1 => {
                let (x, y) = self.vertices[0];
                (d1 - x).abs() <= TOL && (d2 - y).abs() <= TOL
            }
            2 => segment_distance(self.vertices[0], self.vertices[1], (d1, d2)) <= TOL,
            _ => {
                let n = self.vertices.len();
                (0..n).all(|i| {
                    let (ax, ay) = self.vertices[i];
                    let (bx, by) = self.vertices[(i + 1) % n];
                    (bx - ax) * (d2 - ay) - (by - ay) * (d1 - ax) >= -TOL
                })
            }
        }
    }

    /// Maximum of w1·d1 + w2·d2 over the region (attained at a vertex).
    pub fn max_weighted(&self, w1: f64, w2: f64) -> f64 {
        self.vertices
            .iter()
            .map(|&(x, y)| w1 * x + w2 * y)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn segment_distance(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Monotone-chain convex hull, counterclockwise, collinear points dropped.
/// All our point sets contain the origin as their min, so the hull starts
/// there.
fn convex_hull(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    if points.len() <= 2 {
        return points;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &points {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in points.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        // All points collinear: keep the extreme pair (or single point).
        let first = *points.first().unwrap();
        let last = *points.last().unwrap();
        return if first == last { vec![first] } else { vec![first, last] };
    }
    lower
}

/// Region vertices as CSV rows: `strategy,alpha,vertex_index,d1,d2`.
pub fn write_regions_csv<W: Write>(regions: &[DofRegion], mut out: W) -> Result<()> {
    writeln!(out, "strategy,alpha,vertex_index,d1,d2")?;
    for region in regions {
        for (i, &(d1, d2)) in region.vertices.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                region.strategy.name(),
                fmt17(region.alpha),
                i,
                fmt17(d1),
                fmt17(d2)
            )?;
        }
    }
    Ok(())
}

/// Shortest decimal form that round-trips f64 exactly (17 significant digits).
pub(crate) fn fmt17(x: f64) -> String {
    let s = format!("{x:.17e}");
    // Confirm round-trip, fall back to ryu-style shortest via Display if odd.
    match s.parse::<f64>() {
        Ok(back) if back == x => s,
        _ => format!("{x}"),
    }
}

/// Parse helper for strategy names in configs.
impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rs" => Ok(Strategy::Rs),
            "zfbf" => Ok(Strategy::Zfbf),
            "tdma" => Ok(Strategy::Tdma),
            "sumu" => Ok(Strategy::SuMu),
            other => Err(Error::InvalidArgument(format!("unknown strategy '{other}'"))),
        }
    }
}

//! Independent layered-decoding oracle: every rate recomputed from raw dot
//! products, sharing no arithmetic with the evaluators under test.

use nalgebra::DVector;
use num_complex::Complex64;

pub type Beam = DVector<Complex64>;

/// One superposed transmission seen by a set of receivers. `rows[u]` holds
/// the entries of the receive row h_u^H, `beams` carry their power, and
/// `chains[u]` lists the beams user u strips, in decode order.
pub struct SicCase {
    pub rows: Vec<Beam>,
    pub beams: Vec<Beam>,
    pub chains: Vec<Vec<usize>>,
}

/// Worst-decoder rate of every beam: each receiver walks its chain treating
/// everything it has not yet stripped as noise, and a beam's rate is the
/// smallest log2(1+SINR) over the receivers that decode it.
pub fn stream_rates(case: &SicCase) -> Vec<f64> {
    let gain = |u: usize, b: usize| {
        case.rows[u]
            .iter()
            .zip(case.beams[b].iter())
            .map(|(r, w)| r * w)
            .sum::<Complex64>()
            .norm_sqr()
    };
    let mut rates = vec![f64::INFINITY; case.beams.len()];
    let mut decoded = vec![false; case.beams.len()];
    for (u, chain) in case.chains.iter().enumerate() {
        for (stage, &target) in chain.iter().enumerate() {
            let noise: f64 = (0..case.beams.len())
                .filter(|b| *b != target && !chain[..stage].contains(b))
                .map(|b| gain(u, b))
                .sum();
            let sinr = gain(u, target) / (1.0 + noise);
            rates[target] = rates[target].min((1.0 + sinr).log2());
            decoded[target] = true;
        }
    }
    rates.iter().zip(&decoded).map(|(&r, &d)| if d { r } else { 0.0 }).collect()
}

/// |a − b| against |b| with an absolute floor of one, so rates near zero are
/// held to the same 1e-12 scale as large ones.
pub fn rate_mismatch(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

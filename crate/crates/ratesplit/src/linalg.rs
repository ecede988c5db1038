//! Small complex-matrix and search helpers shared across modules.
//!
//! Everything here works on dynamically sized `nalgebra` matrices over
//! `Complex64`. Hermitian eigendecomposition is the single workhorse: square
//! roots, null spaces, pseudoinverses and dominant singular vectors are all
//! derived from it rather than from a general SVD, which keeps the numerics
//! predictable for the small (K ≤ M ≤ ~100) problems this crate handles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative eigenvalue threshold below which a direction counts as rank-null.
pub const RANK_TOL: f64 = 1e-9;
/// Condition-number ceiling for matrices that must be inverted.
pub const COND_LIMIT: f64 = 1e12;

/// One sample of a standard circularly symmetric complex Gaussian:
/// real and imaginary parts i.i.d. N(0, 1/2), so E|z|² = 1.
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im).scale(std::f64::consts::FRAC_1_SQRT_2)
}

/// Vector of i.i.d. standard complex Gaussian entries.
pub fn complex_gaussian_vec<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVec {
    CVec::from_fn(len, |_, _| standard_complex(rng))
}

/// Matrix of i.i.d. standard complex Gaussian entries, drawn row-major so the
/// draw order is independent of storage layout.
pub fn complex_gaussian_mat<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = standard_complex(rng);
        }
    }
    m
}

/// Uniformly random unit vector (Gaussian draw, normalized).
pub fn unit_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVec {
    loop {
        let g = complex_gaussian_vec(len, rng);
        let n = g.norm();
        if n > 1e-12 {
            return g.unscale(n);
        }
    }
}

fn argmax_eigenvalue(values: &DVector<f64>) -> (usize, f64) {
    let mut idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            idx = i;
        }
    }
    (idx, best)
}

/// The r eigenvectors of a Hermitian matrix with the largest eigenvalues,
/// as orthonormal columns (r is capped at the dimension).
pub fn top_eigenvectors(mat: &CMat, r: usize) -> CMat {
    let eig = SymmetricEigen::new(mat.clone());
    let n = mat.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let r = r.min(n);
    let mut out = CMat::zeros(n, r);
    for (j, &idx) in order.iter().take(r).enumerate() {
        out.set_column(j, &eig.eigenvectors.column(idx));
    }
    out
}

/// Leading right singular vector of `a`, via the Gram matrix on the smaller
/// side. For a = UΣV^H this is v₁, the unit vector maximizing ‖a·q‖.
pub fn dominant_right_singular(a: &CMat) -> Result<CVec> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::DegenerateInput("empty matrix in singular-vector computation".into()));
    }
    let v = if rows <= cols {
        let eig = SymmetricEigen::new(a * a.adjoint());
        let (idx, lam) = argmax_eigenvalue(&eig.eigenvalues);
        if lam <= 0.0 {
            return Err(Error::DegenerateInput("zero matrix in singular-vector computation".into()));
        }
        a.adjoint() * eig.eigenvectors.column(idx)
    } else {
        let eig = SymmetricEigen::new(a.adjoint() * a);
        let (idx, lam) = argmax_eigenvalue(&eig.eigenvalues);
        if lam <= 0.0 {
            return Err(Error::DegenerateInput("zero matrix in singular-vector computation".into()));
        }
        eig.eigenvectors.column(idx).into_owned()
    };
    let n = v.norm();
    if n <= 1e-300 {
        return Err(Error::DegenerateInput("vanishing singular vector".into()));
    }
    Ok(v.unscale(n))
}

/// Hermitian PSD square root: r = U√Λ U^H. Eigenvalues slightly below zero
/// (within `RANK_TOL` of the largest) are clamped; anything lower is an error.
pub fn hermitian_sqrt(r: &CMat) -> Result<CMat> {
    if !r.is_square() {
        return Err(Error::DimensionMismatch("square matrix required for sqrt".into()));
    }
    let eig = SymmetricEigen::new(r.clone());
    let (_, max) = argmax_eigenvalue(&eig.eigenvalues);
    let floor = -RANK_TOL * max.max(1.0);
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < floor {
            return Err(Error::InvalidArgument(format!(
                "matrix is not positive semidefinite (eigenvalue {lam:.3e})"
            )));
        }
        roots[i] = lam.max(0.0).sqrt();
    }
    let u = &eig.eigenvectors;
    let scaled = CMat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)].scale(roots[j]));
    Ok(&scaled * u.adjoint())
}

/// Orthonormal basis of the orthogonal complement of span(cols).
///
/// Rank is decided by the eigenvalues of cols·cols^H relative to the largest,
/// so nearly dependent input columns do not shrink the complement.
pub fn null_space_basis(cols: &CMat) -> Result<CMat> {
    let m = cols.nrows();
    if m == 0 {
        return Err(Error::DegenerateInput("empty matrix in null-space computation".into()));
    }
    let eig = SymmetricEigen::new(cols * cols.adjoint());
    let (_, max) = argmax_eigenvalue(&eig.eigenvalues);
    let cut = RANK_TOL * max.max(1.0);
    let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] <= cut).collect();
    let mut basis = CMat::zeros(m, keep.len());
    for (out, &i) in keep.iter().enumerate() {
        basis.set_column(out, &eig.eigenvectors.column(i));
    }
    Ok(basis)
}

/// Right pseudoinverse a^H (a a^H)⁻¹ of a full-row-rank wide matrix.
///
/// Fails if rows exceed columns or the Gram matrix has condition number
/// above `COND_LIMIT`.
pub fn right_pseudoinverse(a: &CMat) -> Result<CMat> {
    let (rows, cols) = a.shape();
    if rows == 0 {
        return Err(Error::DegenerateInput("empty matrix in pseudoinverse".into()));
    }
    if rows > cols {
        return Err(Error::InfeasibleZeroForcing { users: rows, antennas: cols });
    }
    let eig = SymmetricEigen::new(a * a.adjoint());
    let (_, max) = argmax_eigenvalue(&eig.eigenvalues);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || max / min > COND_LIMIT {
        return Err(Error::IllConditioned(format!(
            "Gram spectrum [{min:.3e}, {max:.3e}] exceeds condition limit"
        )));
    }
    // (a a^H)⁻¹ from the spectral factors already at hand.
    let u = &eig.eigenvectors;
    let scaled = CMat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)].unscale(eig.eigenvalues[j]));
    let gram_inv = &scaled * u.adjoint();
    Ok(a.adjoint() * gram_inv)
}

/// Result of a bracketed 1-D maximization.
#[derive(Debug, Clone, Copy)]
pub struct GoldenResult {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search for the maximum of a unimodal function on [lo, hi].
///
/// Stops once the bracket is narrower than `xtol` and returns the better of
/// the two interior probes. Exceeding `max_evals` objective evaluations is a
/// search error, not a silent truncation.
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    xtol: f64,
    max_evals: usize,
) -> Result<GoldenResult> {
    if !(lo < hi) || !xtol.is_finite() || xtol <= 0.0 {
        return Err(Error::InvalidArgument(format!("bad golden-section bracket [{lo}, {hi}] / tol {xtol}")));
    }
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut evals = 0;
    let mut eval = |x: f64, evals: &mut usize| -> Result<f64> {
        *evals += 1;
        if *evals > max_evals {
            return Err(Error::SearchFailure(format!(
                "golden-section budget of {max_evals} evaluations exhausted"
            )));
        }
        Ok(f(x))
    };
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1, &mut evals)?;
    let mut f2 = eval(x2, &mut evals)?;
    while b - a > xtol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1, &mut evals)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2, &mut evals)?;
        }
    }
    let (x, value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    Ok(GoldenResult { x, value, evaluations: evals })
}

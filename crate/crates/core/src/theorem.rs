//! Numerical checks of the unitary entropy-reduction argument.
//!
//! For correlated Gaussian channels with covariance `S`, the sum of marginal
//! entropies is monotone in `Π_i S_ii`. Hadamard's inequality bounds that
//! product below by `det S`, unitary conjugation preserves `det S`, and the
//! eigenbasis of `S` attains the bound. [`verify_theorem1`] walks the unitary
//! path from `I` to that eigenbasis and looks for a point where the diagonal
//! product has already dropped.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OlmaError, Result};
use crate::transforms::{Complex64, UnitaryMatrix, UnitaryPath};

/// Default number of λ samples on `[0, 1]`.
pub const DEFAULT_GRID: usize = 101;

/// Threshold on the largest normalized off-diagonal `|S_ij|/√(S_ii·S_jj)`.
pub const CORRELATION_THRESHOLD: f64 = 1e-6;

/// Draws `l` i.i.d. columns from `N(0, cov)` as `L·Z`, with `L` the Cholesky
/// factor of `cov` and `Z` standard normals.
///
/// `Z` is filled column by column from a `ChaCha8Rng` seeded with `seed`, so the
/// output is a pure function of `(cov, l, seed)`.
pub fn sample_correlated_gaussian(
    cov: &DMatrix<f64>,
    steps: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(OlmaError::Shape(format!(
            "covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if steps == 0 {
        return Err(OlmaError::InvalidArgument(
            "need at least one sample".into(),
        ));
    }
    let chol = Cholesky::new(cov.clone()).ok_or(OlmaError::NotPositiveDefinite)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cov.nrows();
    let z: DMatrix<f64> = DMatrix::from_fn(c, steps, |_, _| StandardNormal.sample(&mut rng));
    Ok(chol.l() * z)
}

/// `S = (1/l)·G·G*`.
pub fn empirical_covariance(g: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    if g.ncols() == 0 || g.nrows() == 0 {
        return Err(OlmaError::Empty("sample matrix"));
    }
    let l = g.ncols() as f64;
    Ok((g * g.adjoint()).map(|z| z / l))
}

/// Real-valued convenience wrapper around [`empirical_covariance`].
pub fn empirical_covariance_real(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if g.ncols() == 0 || g.nrows() == 0 {
        return Err(OlmaError::Empty("sample matrix"));
    }
    let l = g.ncols() as f64;
    Ok(g * g.transpose() / l)
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn hermitian_deviation(s: &DMatrix<Complex64>) -> f64 {
    let scale = s.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    (s - s.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        / scale
}

fn check_hermitian(s: &DMatrix<Complex64>) -> Result<()> {
    if !s.is_square() || s.nrows() == 0 {
        return Err(OlmaError::Shape(format!(
            "matrix is {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let dev = hermitian_deviation(s);
    if dev > 1e-10 {
        return Err(OlmaError::NotHermitian(dev));
    }
    Ok(())
}

fn diag_product(s: &DMatrix<Complex64>) -> f64 {
    s.diagonal().iter().map(|z| z.re).product()
}

/// Determinant of a Hermitian PSD matrix: Cholesky when positive definite,
/// product of eigenvalues otherwise.
fn hermitian_determinant(s: &DMatrix<Complex64>) -> Result<f64> {
    if let Some(det) = pd_determinant(s) {
        return Ok(det);
    }
    let eig = SymmetricEigen::new(s.clone());
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
        return Err(OlmaError::NotPositiveDefinite);
    }
    Ok(eig.eigenvalues.iter().map(|v| v.max(0.0)).product())
}

/// `det S` through a Cholesky factor, or `None` when `S` is not positive
/// definite. Complex square roots never fail, so the factor's diagonal is
/// checked for being real and positive.
fn pd_determinant(s: &DMatrix<Complex64>) -> Option<f64> {
    let chol = Cholesky::new(s.clone())?;
    let l = chol.l();
    let ok = l
        .diagonal()
        .iter()
        .all(|z| z.re > 0.0 && z.im.abs() <= 1e-12 * z.re);
    ok.then(|| chol.determinant())
}

/// Diagonal product, determinant and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HadamardGap {
    pub diag_product: f64,
    pub determinant: f64,
    pub gap: f64,
}

pub fn hadamard_gap(s: &DMatrix<Complex64>) -> Result<HadamardGap> {
    check_hermitian(s)?;
    let diag_product = diag_product(s);
    let determinant = hermitian_determinant(s)?;
    Ok(HadamardGap {
        diag_product,
        determinant,
        gap: diag_product - determinant,
    })
}

/// Diagnostics for one covariance matrix along the path `φ(λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    /// `Π_i S_ii`
    pub diag_product_original: f64,
    /// `det S`
    pub determinant: f64,
    pub lambda_grid: Vec<f64>,
    /// `Π_i (φ(λ)·S·φ(λ)*)_ii` at each grid point.
    pub diag_product_at_lambda: Vec<f64>,
    /// `det(φ(λ)·S·φ(λ)*)` at each grid point.
    pub determinant_at_lambda: Vec<f64>,
    /// `tr(φ(λ)·S·φ(λ)*)` at each grid point.
    pub trace_at_lambda: Vec<f64>,
    /// Largest `|off-diagonal|` of the conjugated matrix at `λ = 1`.
    pub max_offdiag_at_end: f64,
    /// Smallest grid λ whose diagonal product is strictly below the original.
    pub witness_lambda: Option<f64>,
}

impl Theorem1Report {
    pub fn witness_index(&self) -> Option<usize> {
        let w = self.witness_lambda?;
        self.lambda_grid.iter().position(|&l| l == w)
    }
}

/// Eigenvectors of `S` as columns, ordered by descending eigenvalue, each with
/// its first non-negligible component rotated onto the positive real axis.
pub fn ordered_eigenbasis(s: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    check_hermitian(s)?;
    let n = s.nrows();
    let eig = SymmetricEigen::try_new(s.clone(), 1e-15, 10_000)
        .ok_or_else(|| OlmaError::InvalidArgument("eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut basis = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(lead) = col.iter().copied().find(|z| z.norm() > 1e-12) {
            let rot = lead.conj() / lead.norm();
            col.iter_mut().for_each(|z| *z *= rot);
        }
        basis.set_column(dst, &col);
        values.push(eig.eigenvalues[src]);
    }
    Ok((values, basis))
}

fn max_normalized_correlation(s: &DMatrix<Complex64>) -> f64 {
    let n = s.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let denom = (s[(i, i)].re * s[(j, j)].re).sqrt();
                worst = worst.max(s[(i, j)].norm() / denom);
            }
        }
    }
    worst
}

/// Samples the diagonal product of `φ(λ)·S·φ(λ)*` on a uniform grid of
/// `grid_size` points, where `φ` runs from `I` to `F_v = U*` and `S = U·Λ·U*`.
pub fn verify_theorem1(s: &DMatrix<Complex64>, grid_size: usize) -> Result<Theorem1Report> {
    if grid_size < 2 {
        return Err(OlmaError::InvalidArgument(
            "grid needs at least two points".into(),
        ));
    }
    check_hermitian(s)?;
    let determinant = pd_determinant(s).ok_or(OlmaError::NotPositiveDefinite)?;
    if max_normalized_correlation(s) <= CORRELATION_THRESHOLD {
        return Err(OlmaError::Uncorrelated);
    }
    let diag_product_original = diag_product(s);

    let (_, eigvecs) = ordered_eigenbasis(s)?;
    let target = UnitaryMatrix::with_tolerance(eigvecs.adjoint(), 1e-8)?;
    let path = UnitaryPath::new(&target)?;

    let last = (grid_size - 1) as f64;
    let lambda_grid: Vec<f64> = (0..grid_size).map(|k| k as f64 / last).collect();
    let mut diag_product_at_lambda = Vec::with_capacity(grid_size);
    let mut determinant_at_lambda = Vec::with_capacity(grid_size);
    let mut trace_at_lambda = Vec::with_capacity(grid_size);
    let mut max_offdiag_at_end = 0.0;
    for (k, &lambda) in lambda_grid.iter().enumerate() {
        let phi = path.at(lambda)?;
        let conj = phi.matrix() * s * phi.matrix().adjoint();
        // Re-symmetrize round-off before the determinant.
        let conj = (&conj + conj.adjoint()).map(|z| z * 0.5);
        diag_product_at_lambda.push(diag_product(&conj));
        determinant_at_lambda.push(hermitian_determinant(&conj)?);
        trace_at_lambda.push(conj.diagonal().iter().map(|z| z.re).sum());
        if k + 1 == grid_size {
            let n = conj.nrows();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        max_offdiag_at_end = f64::max(max_offdiag_at_end, conj[(i, j)].norm());
                    }
                }
            }
        }
    }

    let end = *diag_product_at_lambda.last().expect("grid is non-empty");
    if (end - determinant).abs() > 1e-8 * determinant {
        return Err(OlmaError::InvalidArgument(format!(
            "diagonal product at the path end {end:.12e} differs from det(S) {determinant:.12e}"
        )));
    }

    let tol = 1e-9 * diag_product_original;
    let witness_lambda = lambda_grid
        .iter()
        .zip(&diag_product_at_lambda)
        .find(|(_, &p)| p < diag_product_original - tol)
        .map(|(&l, _)| l);

    Ok(Theorem1Report {
        diag_product_original,
        determinant,
        lambda_grid,
        diag_product_at_lambda,
        determinant_at_lambda,
        trace_at_lambda,
        max_offdiag_at_end,
        witness_lambda,
    })
}

/// Random SPD matrix `A·Aᵀ/c + 0.1·I` with standard normal `A`; off-diagonal
/// entries are non-zero with probability one.
pub fn random_spd(c: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: DMatrix<f64> = DMatrix::from_fn(c, c, |_, _| StandardNormal.sample(&mut rng));
    &a * a.transpose() / c as f64 + DMatrix::identity(c, c) * 0.1
}

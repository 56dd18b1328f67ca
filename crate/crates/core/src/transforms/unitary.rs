use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{OlmaError, Result};

/// Default per-entry tolerance on `U·U* − I` accepted at construction.
pub const UNITARY_TOL: f64 = 1e-9;

/// A complex square matrix with `U·U* = I` (checked at construction).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(DMatrix<Complex64>);

impl UnitaryMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        Self::with_tolerance(entries, UNITARY_TOL)
    }

    pub fn with_tolerance(entries: DMatrix<Complex64>, tol: f64) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(OlmaError::Shape(format!(
                "unitary matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dev = unitarity_deviation(&entries);
        if dev > tol {
            return Err(OlmaError::NotUnitary(dev));
        }
        Ok(Self(entries))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Embeds a real orthogonal matrix.
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// Largest entry of `|U·U* − I|`.
    pub fn deviation(&self) -> f64 {
        unitarity_deviation(&self.0)
    }
}

fn unitarity_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let prod = m * m.adjoint();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((prod[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Eigenphase in `(−π, π]`; phases within `1e-12` of `−π` are mapped to `+π`.
fn principal_phase(z: Complex64) -> f64 {
    let theta = z.arg();
    if theta <= -PI + 1e-12 {
        theta + 2.0 * PI
    } else {
        theta
    }
}

/// The principal-logarithm path `φ(λ) = V·diag(e^{iλθ_j})·V*` from `I` to `U`.
///
/// `U` is normal, so its complex Schur form `U = V·T·V*` has `T` diagonal up to
/// rounding and `θ_j = arg T_jj`. The decomposition is computed once; sample the
/// path with [`UnitaryPath::at`].
#[derive(Debug, Clone)]
pub struct UnitaryPath {
    basis: DMatrix<Complex64>,
    phases: Vec<f64>,
}

impl UnitaryPath {
    pub fn new(u: &UnitaryMatrix) -> Result<Self> {
        let (basis, t) = Schur::try_new(u.matrix().clone(), 1e-15, 10_000)
            .ok_or_else(|| {
                OlmaError::InvalidArgument("Schur decomposition did not converge".into())
            })?
            .unpack();
        let phases = (0..u.dim()).map(|j| principal_phase(t[(j, j)])).collect();
        Ok(Self { basis, phases })
    }

    /// Eigenphases of the endpoint, each in `(−π, π]`.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn at(&self, lambda: f64) -> Result<UnitaryMatrix> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(OlmaError::InvalidArgument(format!(
                "path parameter {lambda} outside [0, 1]"
            )));
        }
        let n = self.phases.len();
        if lambda == 0.0 {
            return Ok(UnitaryMatrix::identity(n));
        }
        let mut scaled = self.basis.clone();
        for (j, &theta) in self.phases.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, lambda * theta);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= phase);
        }
        UnitaryMatrix::with_tolerance(scaled * self.basis.adjoint(), 1e-8)
    }
}

/// Point `φ(λ)` on the path `φ(0) = I`, `φ(1) = U`; see [`UnitaryPath`].
pub fn unitary_log_path(u: &UnitaryMatrix, lambda: f64) -> Result<UnitaryMatrix> {
    if lambda == 0.0 {
        return Ok(UnitaryMatrix::identity(u.dim()));
    }
    UnitaryPath::new(u)?.at(lambda)
}

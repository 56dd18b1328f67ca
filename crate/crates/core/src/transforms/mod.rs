//! Discrete Fourier transform, single-level Haar wavelet transform and a
//! principal-logarithm path on the unitary group.

mod fourier;
mod unitary;
mod wavelet;

pub use fourier::{dft, dft_complex, fft_adjoint, fft_forward, idft, Normalization, Spectrum};
pub use unitary::{unitary_log_path, UnitaryMatrix, UnitaryPath, UNITARY_TOL};
pub use wavelet::{haar_dwt, haar_forward_into, haar_idwt, haar_inverse_into, WaveletCoeffs};

pub use num_complex::Complex64;

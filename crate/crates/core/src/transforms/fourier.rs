use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{OlmaError, Result};

/// Scaling applied by [`dft`] and undone by [`idft`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `X[k] = Σ x[m] e^{-2πi km/n}`; the inverse carries the `1/n`.
    Unnormalized,
    /// Both directions scaled by `1/√n`, so the transform is unitary.
    Orthonormal,
}

/// DFT coefficients with the normalization they were produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub normalization: Normalization,
}

impl Spectrum {
    pub fn from_complex(coeffs: &[Complex64], normalization: Normalization) -> Self {
        Self {
            re: coeffs.iter().map(|z| z.re).collect(),
            im: coeffs.iter().map(|z| z.im).collect(),
            normalization,
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn coeffs(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    /// Squared moduli `|X[k]|²`.
    pub fn power(&self) -> Vec<f64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(re, im)| re * re + im * im)
            .collect()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unnormalized forward transform, `X[k] = Σ x[m] e^{-2πi km/n}`.
pub fn fft_forward(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// In-place adjoint of [`fft_forward`]: `x[m] = Σ X[k] e^{+2πi km/n}` (no `1/n`).
pub fn fft_adjoint(buf: &mut [Complex64]) {
    if buf.len() <= 1 {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
}

/// DFT of a real sequence.
pub fn dft(seq: &[f64], normalization: Normalization) -> Result<Spectrum> {
    let buf: Vec<Complex64> = seq.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    dft_complex(&buf, normalization)
}

/// DFT of a complex sequence.
pub fn dft_complex(seq: &[Complex64], normalization: Normalization) -> Result<Spectrum> {
    if seq.is_empty() {
        return Err(OlmaError::Empty("dft input"));
    }
    let mut buf = seq.to_vec();
    fft_forward(&mut buf);
    if normalization == Normalization::Orthonormal {
        let s = 1.0 / (buf.len() as f64).sqrt();
        buf.iter_mut().for_each(|z| *z *= s);
    }
    Ok(Spectrum::from_complex(&buf, normalization))
}

/// Inverse of [`dft`] under the spectrum's normalization.
pub fn idft(spec: &Spectrum) -> Result<Vec<Complex64>> {
    if spec.is_empty() {
        return Err(OlmaError::Empty("idft input"));
    }
    if spec.re.len() != spec.im.len() {
        return Err(OlmaError::Shape(format!(
            "spectrum has {} real and {} imaginary parts",
            spec.re.len(),
            spec.im.len()
        )));
    }
    let mut buf = spec.coeffs();
    fft_adjoint(&mut buf);
    let n = buf.len() as f64;
    let s = match spec.normalization {
        Normalization::Unnormalized => 1.0 / n,
        Normalization::Orthonormal => 1.0 / n.sqrt(),
    };
    buf.iter_mut().for_each(|z| *z *= s);
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct O(n²) evaluation of the defining sum.
    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(m, &v)| {
                        let ang = -2.0 * std::f64::consts::PI * (k * m) as f64 / n as f64;
                        Complex64::from_polar(v, ang)
                    })
                    .sum()
            })
            .collect()
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn impulse_and_constant() {
        let s = dft(&[1.0, 0.0, 0.0, 0.0], Normalization::Unnormalized).unwrap();
        assert!(close(&s.coeffs(), &[Complex64::new(1.0, 0.0); 4], 1e-15));
        let s = dft(&[1.0, 1.0, 1.0, 1.0], Normalization::Unnormalized).unwrap();
        let want = [4.0, 0.0, 0.0, 0.0].map(|r| Complex64::new(r, 0.0));
        assert!(close(&s.coeffs(), &want, 1e-15));
    }

    #[test]
    fn shifted_impulse() {
        let s = dft(&[0.0, 1.0, 0.0, 0.0], Normalization::Unnormalized).unwrap();
        let want = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ];
        assert!(close(&s.coeffs(), &want, 1e-15));
    }

    #[test]
    fn inverse_of_constant_spectrum() {
        let spec = Spectrum {
            re: vec![4.0, 0.0, 0.0, 0.0],
            im: vec![0.0; 4],
            normalization: Normalization::Unnormalized,
        };
        let x = idft(&spec).unwrap();
        assert!(close(&x, &[Complex64::new(1.0, 0.0); 4], 1e-15));
    }

    #[test]
    fn round_trip_small() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let back = idft(&dft(&x, Normalization::Unnormalized).unwrap()).unwrap();
        for (a, b) in back.iter().zip(x) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(dft(&[], Normalization::Orthonormal).is_err());
        let spec = Spectrum {
            re: vec![],
            im: vec![],
            normalization: Normalization::Orthonormal,
        };
        assert!(idft(&spec).is_err());
    }

    proptest! {
        #[test]
        fn matches_direct_sum(x in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let fast = dft(&x, Normalization::Unnormalized).unwrap().coeffs();
            let slow = naive_dft(&x);
            let scale = x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!(close(&fast, &slow, 1e-12 * scale));
        }

        #[test]
        fn conjugate_symmetry(x in prop::collection::vec(-10.0f64..10.0, 2..40)) {
            let s = dft(&x, Normalization::Unnormalized).unwrap().coeffs();
            let n = s.len();
            for k in 1..n {
                prop_assert!((s[k] - s[n - k].conj()).norm() < 1e-9);
            }
        }

        #[test]
        fn orthonormal_round_trip(x in prop::collection::vec(-10.0f64..10.0, 7)) {
            let back = idft(&dft(&x, Normalization::Orthonormal).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a.re - b).abs() <= 1e-12 * b.abs().max(1.0));
                prop_assert!(a.im.abs() <= 1e-12);
            }
        }
    }
}

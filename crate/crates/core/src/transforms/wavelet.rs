use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{OlmaError, Result};

/// Single-level Haar coefficients of an even-length sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletCoeffs {
    /// Approximation coefficients, pairwise scaled sums.
    pub approx: Vec<f64>,
    /// Detail coefficients, pairwise scaled differences.
    pub detail: Vec<f64>,
}

impl WaveletCoeffs {
    /// `[approx..., detail...]`
    pub fn concatenated(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.approx.len());
        out.extend_from_slice(&self.approx);
        out.extend_from_slice(&self.detail);
        out
    }
}

/// Writes `[approx..., detail...]` into `out` (same length as `seq`).
///
/// Pairs are consecutive and disjoint: `(seq[2k], seq[2k+1])` in 0-based terms.
pub fn haar_forward_into(seq: &[f64], out: &mut [f64]) -> Result<()> {
    let n = seq.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(OlmaError::OddLength(n));
    }
    if out.len() != n {
        return Err(OlmaError::Shape(format!(
            "output of {} for input of {n}",
            out.len()
        )));
    }
    let half = n / 2;
    for (k, pair) in seq.chunks_exact(2).enumerate() {
        out[k] = (pair[0] + pair[1]) * FRAC_1_SQRT_2;
        out[half + k] = (pair[0] - pair[1]) * FRAC_1_SQRT_2;
    }
    Ok(())
}

/// Inverse of [`haar_forward_into`]; also its transpose, the transform being
/// orthonormal.
pub fn haar_inverse_into(coeffs: &[f64], out: &mut [f64]) -> Result<()> {
    let n = coeffs.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(OlmaError::OddLength(n));
    }
    if out.len() != n {
        return Err(OlmaError::Shape(format!(
            "output of {} for input of {n}",
            out.len()
        )));
    }
    let (approx, detail) = coeffs.split_at(n / 2);
    for (k, (a, d)) in approx.iter().zip(detail).enumerate() {
        out[2 * k] = (a + d) * FRAC_1_SQRT_2;
        out[2 * k + 1] = (a - d) * FRAC_1_SQRT_2;
    }
    Ok(())
}

/// Single-level Haar DWT. Odd lengths are rejected, never padded.
pub fn haar_dwt(seq: &[f64]) -> Result<WaveletCoeffs> {
    let mut out = vec![0.0; seq.len()];
    haar_forward_into(seq, &mut out)?;
    let detail = out.split_off(seq.len() / 2);
    Ok(WaveletCoeffs {
        approx: out,
        detail,
    })
}

pub fn haar_idwt(coeffs: &WaveletCoeffs) -> Result<Vec<f64>> {
    if coeffs.approx.len() != coeffs.detail.len() {
        return Err(OlmaError::Shape(format!(
            "{} approximation vs {} detail coefficients",
            coeffs.approx.len(),
            coeffs.detail.len()
        )));
    }
    let joined = coeffs.concatenated();
    let mut out = vec![0.0; joined.len()];
    haar_inverse_into(&joined, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn assert_close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-14, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn forward_examples() {
        let c = haar_dwt(&[1.0, 1.0]).unwrap();
        assert_close(&c.approx, &[SQRT_2]);
        assert_close(&c.detail, &[0.0]);

        let c = haar_dwt(&[3.0, 1.0]).unwrap();
        assert_close(&c.approx, &[2.0 * SQRT_2]);
        assert_close(&c.detail, &[SQRT_2]);

        let c = haar_dwt(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_close(&c.approx, &[FRAC_1_SQRT_2, 0.0]);
        assert_close(&c.detail, &[FRAC_1_SQRT_2, 0.0]);
    }

    #[test]
    fn inverse_examples() {
        let x = haar_idwt(&WaveletCoeffs {
            approx: vec![SQRT_2],
            detail: vec![0.0],
        })
        .unwrap();
        assert_close(&x, &[1.0, 1.0]);

        let x = haar_idwt(&WaveletCoeffs {
            approx: vec![1.0],
            detail: vec![1.0],
        })
        .unwrap();
        assert_close(&x, &[SQRT_2, 0.0]);
    }

    #[test]
    fn odd_and_mismatched_rejected() {
        assert!(matches!(
            haar_dwt(&[1.0, 2.0, 3.0]),
            Err(OlmaError::OddLength(3))
        ));
        assert!(haar_dwt(&[]).is_err());
        let bad = WaveletCoeffs {
            approx: vec![1.0, 2.0],
            detail: vec![1.0],
        };
        assert!(matches!(haar_idwt(&bad), Err(OlmaError::Shape(_))));
    }

    proptest::proptest! {
        #[test]
        fn round_trip_and_energy(half in proptest::collection::vec(-50.0f64..50.0, 2..64)) {
            let x: Vec<f64> = half.iter().chain(half.iter().rev()).map(|v| v * 0.37 + 1.0).collect();
            let c = haar_dwt(&x).unwrap();
            let back = haar_idwt(&c).unwrap();
            for (a, b) in back.iter().zip(&x) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            let e_in: f64 = x.iter().map(|v| v * v).sum();
            let e_out: f64 = c.concatenated().iter().map(|v| v * v).sum();
            proptest::prop_assert!((e_in - e_out).abs() <= 1e-12 * e_in.max(1.0));
        }
    }
}

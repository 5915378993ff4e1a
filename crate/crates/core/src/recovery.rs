//! Parameterized three-qubit error set that the rotated code corrects
//! exactly, and the rule for choosing its parameters from the channel.

use thiserror::Error;

use crate::channel::{pauli_string, ErrorKind, ErrorProbabilities};
use crate::linalg::{CMatrix, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("q2 = {0} outside [0, 2/3]")]
    Q2OutOfRange(f64),
    #[error("q3 = {0} outside [0, 1]")]
    Q3OutOfRange(f64),
    #[error("radicand {name} = {value} is negative")]
    NegativeRadicand { name: &'static str, value: f64 },
    #[error("optimal parameters need n = 3 probabilities, got n = {0}")]
    WrongQubitCount(usize),
}

// Rounding slack so that boundary values such as q2 = 1/3 + q3 = 0 with
// 3*q2 computed in floating point are still accepted.
const RADICAND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryParams {
    q2: f64,
    q3: f64,
}

impl RecoveryParams {
    pub fn new(q2: f64, q3: f64) -> Result<Self, RecoveryError> {
        if !(0.0..=2.0 / 3.0 + RADICAND_SLACK).contains(&q2) {
            return Err(RecoveryError::Q2OutOfRange(q2));
        }
        if !(0.0..=1.0).contains(&q3) {
            return Err(RecoveryError::Q3OutOfRange(q3));
        }
        let params = Self { q2, q3 };
        for (name, value) in params.radicands() {
            if value < -RADICAND_SLACK {
                return Err(RecoveryError::NegativeRadicand { name, value });
            }
        }
        Ok(params)
    }

    pub fn q2(&self) -> f64 {
        self.q2
    }

    pub fn q3(&self) -> f64 {
        self.q3
    }

    fn radicands(&self) -> [(&'static str, f64); 4] {
        let (q2, q3) = (self.q2, self.q3);
        [
            ("2 - 3 q2 - q3", 2.0 - 3.0 * q2 - q3),
            ("3 q2 + q3 - 1", 3.0 * q2 + q3 - 1.0),
            ("1 - q3", 1.0 - q3),
            ("q3", q3),
        ]
    }
}

/// The operators `A_0..A_3`:
///
/// ```text
/// A0 = I⊗I⊗I
/// A1 = I⊗Z⊗I
/// A2 = sqrt(2 - 3 q2 - q3) I⊗I⊗Z - i sqrt(3 q2 + q3 - 1) Z⊗I⊗Z
/// A3 = sqrt(1 - q3) I⊗Z⊗Z - i sqrt(q3) Z⊗Z⊗Z
/// ```
pub fn recovery_error_set(params: &RecoveryParams) -> [CMatrix; 4] {
    let z = |s: &[usize]| pauli_string(3, s, ErrorKind::Dephasing);
    let root = |x: f64| x.max(0.0).sqrt();
    let (q2, q3) = (params.q2, params.q3);
    let mi = |x: f64| C64::new(0.0, -x);
    let a2 = &z(&[2]).scale_real(root(2.0 - 3.0 * q2 - q3))
        + &z(&[0, 2]).scale(mi(root(3.0 * q2 + q3 - 1.0)));
    let a3 = &z(&[1, 2]).scale_real(root(1.0 - q3)) + &z(&[0, 1, 2]).scale(mi(root(q3)));
    [z(&[]), z(&[1]), a2, a3]
}

/// `p2 > p3` favours correcting double errors, `p2 < p3` triple errors.
/// Ties go to `(2/3, 0)`.
pub fn optimal_q(p: &ErrorProbabilities) -> Result<RecoveryParams, RecoveryError> {
    if p.n != 3 {
        return Err(RecoveryError::WrongQubitCount(p.n));
    }
    if p.p[2] < p.p[3] {
        Ok(RecoveryParams {
            q2: 1.0 / 3.0,
            q3: 1.0,
        })
    } else {
        Ok(RecoveryParams {
            q2: 2.0 / 3.0,
            q3: 0.0,
        })
    }
}

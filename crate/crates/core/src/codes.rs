//! Two-dimensional logical codes and the ancilla-entangled probe state.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{hadamard_all, ErrorKind};
use crate::linalg::{haar_unitary, kron_vec, CMatrix, DimSplit, C64, ONE, ZERO};

const ORTHONORMAL_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error("code needs at least 2 qubits, got {0}")]
    TooFewQubits(usize),
    #[error("codeword dimension {actual} does not match 2^{n}")]
    WrongDimension { n: usize, actual: usize },
    #[error("codewords are not orthonormal (max Gram deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("transformation is not unitary (max |U^dagger U - I| = {0:e})")]
    NotUnitary(f64),
    #[error("rotated qubit position {position} out of range for {n} qubits")]
    BadPosition { n: usize, position: usize },
    #[error("unknown code preset '{0}' (expected repetition, rotated[k], anti4 or random(seed))")]
    UnknownPreset(String),
    #[error("preset {preset} is only defined for n = {required}")]
    PresetSize { preset: String, required: usize },
}

/// Logical qubit spanned by two orthonormal codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct Code {
    n: usize,
    codewords: [Vec<C64>; 2],
    projector: CMatrix,
}

impl Code {
    pub fn from_codewords(n: usize, first: Vec<C64>, second: Vec<C64>) -> Result<Self, CodeError> {
        if n < 2 {
            return Err(CodeError::TooFewQubits(n));
        }
        let dim = 1usize << n;
        for w in [&first, &second] {
            if w.len() != dim {
                return Err(CodeError::WrongDimension { n, actual: w.len() });
            }
        }
        let dot =
            |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
        let gram_dev = [
            (dot(&first, &first) - ONE).norm(),
            (dot(&second, &second) - ONE).norm(),
            dot(&first, &second).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if gram_dev > ORTHONORMAL_TOL {
            return Err(CodeError::NotOrthonormal(gram_dev));
        }
        let projector = &CMatrix::outer(&first, &first) + &CMatrix::outer(&second, &second);
        Ok(Self {
            n,
            codewords: [first, second],
            projector,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn codewords(&self) -> &[Vec<C64>; 2] {
        &self.codewords
    }

    pub fn projector(&self) -> &CMatrix {
        &self.projector
    }
}

fn plus() -> Vec<C64> {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    vec![s, s]
}

fn minus() -> Vec<C64> {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    vec![s, -s]
}

fn product_state(factors: &[Vec<C64>]) -> Vec<C64> {
    factors.iter().fold(vec![ONE], |acc, f| kron_vec(&acc, f))
}

/// `|+...+>` and `|-...->`.
pub fn repetition_code(n: usize) -> Result<Code, CodeError> {
    if n < 2 {
        return Err(CodeError::TooFewQubits(n));
    }
    let first = product_state(&vec![plus(); n]);
    let second = product_state(&vec![minus(); n]);
    Code::from_codewords(n, first, second)
}

/// Repetition code with the qubit at `position` rotated to the computational
/// basis: `|0,+...+>` and `|1,-...->` for `position = 0`.
pub fn rotated_code(n: usize, position: usize) -> Result<Code, CodeError> {
    if n < 2 {
        return Err(CodeError::TooFewQubits(n));
    }
    if position >= n {
        return Err(CodeError::BadPosition { n, position });
    }
    let zero = vec![ONE, ZERO];
    let one = vec![ZERO, ONE];
    let first: Vec<Vec<C64>> = (0..n)
        .map(|q| if q == position { zero.clone() } else { plus() })
        .collect();
    let second: Vec<Vec<C64>> = (0..n)
        .map(|q| if q == position { one.clone() } else { minus() })
        .collect();
    Code::from_codewords(n, product_state(&first), product_state(&second))
}

/// Four-qubit code `|+,-,-,->`, `|+,+,+,->`.
pub fn anti_aligned_code4() -> Code {
    let first = product_state(&[plus(), minus(), minus(), minus()]);
    let second = product_state(&[plus(), plus(), plus(), minus()]);
    Code::from_codewords(4, first, second).expect("fixed codewords are orthonormal")
}

/// `U P U^dagger`, carried on the codewords.
pub fn transform_code(code: &Code, u: &CMatrix) -> Result<Code, CodeError> {
    if !u.is_square() || u.rows() != code.dim() {
        return Err(CodeError::WrongDimension {
            n: code.n,
            actual: u.rows(),
        });
    }
    let dev = u
        .dagger()
        .matmul(u)
        .max_abs_diff(&CMatrix::identity(code.dim()));
    if dev > UNITARY_TOL {
        return Err(CodeError::NotUnitary(dev));
    }
    let [a, b] = &code.codewords;
    Code::from_codewords(code.n, u.mul_vec(a), u.mul_vec(b))
}

/// Joint ancilla ⊗ system density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeState {
    pub rho: CMatrix,
    pub split: DimSplit,
}

/// `(|0>|Psi_1> + |1>|Psi_2>)/sqrt(2)` as a density matrix.
pub fn probe_state(code: &Code) -> ProbeState {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let [a, b] = &code.codewords;
    let psi: Vec<C64> = kron_vec(&[s, ZERO], a)
        .iter()
        .zip(kron_vec(&[ZERO, s], b))
        .map(|(x, y)| x + y)
        .collect();
    ProbeState {
        rho: CMatrix::outer(&psi, &psi),
        split: DimSplit::new(2, code.dim()),
    }
}

/// Named code constructions accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodePreset {
    Repetition,
    Rotated(usize),
    AntiAligned4,
    /// Haar-random transform of the repetition code.
    Random(u64),
}

impl CodePreset {
    /// Builds the code for a dephasing channel, or its Hadamard conjugate for
    /// a bitflip channel (e.g. `repetition` becomes `|0..0>, |1..1>`).
    pub fn build(self, n: usize, kind: ErrorKind) -> Result<Code, CodeError> {
        let code = match self {
            CodePreset::Repetition => repetition_code(n)?,
            CodePreset::Rotated(k) => rotated_code(n, k)?,
            CodePreset::AntiAligned4 => {
                if n != 4 {
                    return Err(CodeError::PresetSize {
                        preset: self.to_string(),
                        required: 4,
                    });
                }
                anti_aligned_code4()
            }
            CodePreset::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = haar_unitary(1 << n, &mut rng);
                transform_code(&repetition_code(n)?, &u)?
            }
        };
        match kind {
            ErrorKind::Dephasing => Ok(code),
            ErrorKind::Bitflip => transform_code(&code, &hadamard_all(n)),
        }
    }
}

impl fmt::Display for CodePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodePreset::Repetition => write!(f, "repetition"),
            CodePreset::Rotated(k) => write!(f, "rotated[{k}]"),
            CodePreset::AntiAligned4 => write!(f, "anti4"),
            CodePreset::Random(seed) => write!(f, "random({seed})"),
        }
    }
}

impl FromStr for CodePreset {
    type Err = CodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || CodeError::UnknownPreset(s.to_string());
        let arg = |prefix: &str, open: char, close: char| -> Option<&str> {
            s.strip_prefix(prefix)?
                .strip_prefix(open)?
                .strip_suffix(close)
        };
        match s {
            "repetition" | "standard" => Ok(CodePreset::Repetition),
            "rotated" => Ok(CodePreset::Rotated(0)),
            "anti4" => Ok(CodePreset::AntiAligned4),
            _ => {
                if let Some(k) = arg("rotated", '[', ']') {
                    k.trim().parse().map(CodePreset::Rotated).map_err(|_| bad())
                } else if let Some(seed) = arg("random", '(', ')') {
                    seed.trim()
                        .parse()
                        .map(CodePreset::Random)
                        .map_err(|_| bad())
                } else {
                    Err(bad())
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hadamard, hermitian_eigenvalues, kron_all, partial_trace, Subsystem};

    fn assert_projector(code: &Code) {
        let p = code.projector();
        assert!(p.matmul(p).max_abs_diff(p) < 1e-12);
        assert!((p.trace().re - 2.0).abs() < 1e-12);
        let vals = hermitian_eigenvalues(p).unwrap();
        let ones = vals.iter().filter(|v| (*v - 1.0).abs() < 1e-10).count();
        assert_eq!(ones, 2);
        assert!(vals
            .iter()
            .all(|v| v.abs() < 1e-10 || (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn repetition_three_matches_explicit_projector() {
        let code = repetition_code(3).unwrap();
        // |+++><+++| + |---><---| has entries (1 + (-1)^{|x|+|y|})/8
        let expected = CMatrix::from_fn(8, 8, |x, y| {
            let parity = (x.count_ones() + y.count_ones()) % 2;
            C64::new(if parity == 0 { 0.25 } else { 0.0 }, 0.0)
        });
        assert!(code.projector().max_abs_diff(&expected) < 1e-15);
        assert_projector(&code);
        assert_projector(&repetition_code(2).unwrap());
        assert!(repetition_code(1).is_err());
    }

    #[test]
    fn rotated_codes() {
        let code = rotated_code(3, 0).unwrap();
        let s = 0.5;
        // |0++> has amplitude 1/2 on indices 0..4
        assert!(code.codewords()[0][..4]
            .iter()
            .all(|z| (z.re - s).abs() < 1e-15));
        assert!(code.codewords()[0][4..].iter().all(|z| z.norm() == 0.0));
        for pos in 0..3 {
            assert_projector(&rotated_code(3, pos).unwrap());
        }
        assert!(rotated_code(3, 3).is_err());
    }

    #[test]
    fn anti_aligned_code() {
        let code = anti_aligned_code4();
        assert_projector(&code);
    }

    #[test]
    fn transform_by_hadamard_on_first_qubit_gives_rotated() {
        let id = CMatrix::identity(2);
        let h0 = kron_all([&hadamard(), &id, &id]);
        let t = transform_code(&repetition_code(3).unwrap(), &h0).unwrap();
        let r = rotated_code(3, 0).unwrap();
        assert!(t.projector().max_abs_diff(r.projector()) < 1e-14);

        let same = transform_code(&r, &CMatrix::identity(8)).unwrap();
        assert_eq!(same.projector(), r.projector());

        let not_unitary = CMatrix::identity(8).scale_real(2.0);
        assert!(matches!(
            transform_code(&r, &not_unitary),
            Err(CodeError::NotUnitary(_))
        ));
    }

    #[test]
    fn probe_state_properties() {
        for code in [
            repetition_code(3).unwrap(),
            rotated_code(4, 2).unwrap(),
            anti_aligned_code4(),
        ] {
            let probe = probe_state(&code);
            assert!((probe.rho.trace().re - 1.0).abs() < 1e-14);
            let purity = probe.rho.matmul(&probe.rho).trace().re;
            assert!((purity - 1.0).abs() < 1e-12);
            let red = partial_trace(&probe.rho, probe.split, Subsystem::A).unwrap();
            assert!(red.max_abs_diff(&code.projector().scale_real(0.5)) < 1e-14);
        }
    }

    #[test]
    fn preset_parsing() {
        assert_eq!(
            "repetition".parse::<CodePreset>().unwrap(),
            CodePreset::Repetition
        );
        assert_eq!(
            "rotated".parse::<CodePreset>().unwrap(),
            CodePreset::Rotated(0)
        );
        assert_eq!(
            "rotated[2]".parse::<CodePreset>().unwrap(),
            CodePreset::Rotated(2)
        );
        assert_eq!(
            "anti4".parse::<CodePreset>().unwrap(),
            CodePreset::AntiAligned4
        );
        assert_eq!(
            "random(17)".parse::<CodePreset>().unwrap(),
            CodePreset::Random(17)
        );
        assert!("rotated[x]".parse::<CodePreset>().is_err());
        assert!("steane".parse::<CodePreset>().is_err());
        for p in ["repetition", "rotated[1]", "anti4", "random(3)"] {
            assert_eq!(p.parse::<CodePreset>().unwrap().to_string(), p);
        }
        assert!(CodePreset::AntiAligned4
            .build(3, ErrorKind::Dephasing)
            .is_err());
        let a = CodePreset::Random(5)
            .build(3, ErrorKind::Dephasing)
            .unwrap();
        let b = CodePreset::Random(5)
            .build(3, ErrorKind::Dephasing)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bitflip_presets_are_computational() {
        let code = CodePreset::Repetition.build(3, ErrorKind::Bitflip).unwrap();
        let mut expected = CMatrix::zeros(8, 8);
        expected[(0, 0)] = ONE;
        expected[(7, 7)] = ONE;
        assert!(code.projector().max_abs_diff(&expected) < 1e-14);
    }
}

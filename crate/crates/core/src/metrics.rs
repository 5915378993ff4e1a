//! Correctability and entanglement measures.
//!
//! [`deviation`] evaluates the Knill–Laflamme residuals
//! `Lambda_ij = P E_i^dagger E_j P - alpha_ij P` and their aggregate
//! `delta_c = sum_ij Tr(Lambda_ij Lambda_ij^dagger)` exactly as written, for
//! any "P" (a code projector or the reduced state `P/2`).
//!
//! Note that on the three-qubit channel the direct evaluation yields terms
//! proportional to `p_i p_j`, e.g. `delta_c(P_3) = 4 (p0 p3 + 3 p1 p2)`,
//! whereas [`closed_form_delta`] and [`regime_inequality`] use the
//! square-root forms `2 (sqrt(p0 p3) + 3 sqrt(p1 p2))`. Both are kept: the
//! closed forms drive code-selection decisions, the direct form drives the
//! rate correlation study.

use thiserror::Error;

use crate::channel::{binomial, ErrorProbabilities};
use crate::codes::Code;
use crate::linalg::{
    hermitian_eigenvalues, partial_transpose, CMatrix, DimSplit, LinalgError, Subsystem, C64,
    HERMITIAN_TOL,
};

/// Pairs with `Tr(Lambda Lambda^dagger)` above this are reported as violating.
pub const VIOLATION_TOL: f64 = 1e-10;

/// Default forward-difference step for initial rates, in units of `1/gamma_c`.
pub const DEFAULT_RATE_STEP: f64 = 1e-3;

const NEGATIVITY_ROUTE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference matrix has zero trace")]
    ZeroTrace,
    #[error("dimension mismatch: reference is {reference}x{reference}, error operator is {error}x{error}")]
    DimensionMismatch { reference: usize, error: usize },
    #[error("negativity routes disagree: sum(|l|-l) = {eigen}, ||rho^T||-1 = {norm} (is the state normalized?)")]
    InconsistentNegativity { eigen: f64, norm: f64 },
    #[error("closed forms need n = 3 probabilities, got n = {0}")]
    WrongQubitCount(usize),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Knill–Laflamme residuals of an error set against a reference matrix.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub alpha: CMatrix,
    /// `lambda_norms[i][j] = Tr(Lambda_ij Lambda_ij^dagger)`.
    pub lambda_norms: Vec<Vec<f64>>,
    pub delta_c: f64,
    pub violating_pairs: Vec<(usize, usize)>,
}

impl DeviationReport {
    /// One row per pair: `i,j,alpha_re,alpha_im,lambda_norm`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["i", "j", "alpha_re", "alpha_im", "lambda_norm"])
            .expect("in-memory write");
        for (i, row) in self.lambda_norms.iter().enumerate() {
            for (j, norm) in row.iter().enumerate() {
                let a = self.alpha[(i, j)];
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    a.re.to_string(),
                    a.im.to_string(),
                    norm.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// `P E_i^dagger E_j P` for every pair, computed from `F_j = E_j P`.
fn sandwiched_products(
    reference: &CMatrix,
    errors: &[CMatrix],
) -> Result<Vec<Vec<CMatrix>>, MetricsError> {
    let d = reference.rows();
    if let Some(e) = errors.iter().find(|e| e.rows() != d || e.cols() != d) {
        return Err(MetricsError::DimensionMismatch {
            reference: d,
            error: e.rows(),
        });
    }
    let f: Vec<CMatrix> = errors.iter().map(|e| e.matmul(reference)).collect();
    let f_dag: Vec<CMatrix> = f.iter().map(CMatrix::dagger).collect();
    Ok(f_dag
        .iter()
        .map(|fi| f.iter().map(|fj| fi.matmul(fj)).collect())
        .collect())
}

/// Evaluates `alpha`, `Lambda` and `delta_c` with `reference` in the role of P.
pub fn deviation(reference: &CMatrix, errors: &[CMatrix]) -> Result<DeviationReport, MetricsError> {
    let tr = reference.trace();
    if tr.norm() == 0.0 {
        return Err(MetricsError::ZeroTrace);
    }
    let products = sandwiched_products(reference, errors)?;
    let m = errors.len();
    let mut alpha = CMatrix::zeros(m, m);
    let mut lambda_norms = vec![vec![0.0; m]; m];
    let mut violating_pairs = Vec::new();
    let mut delta_c = 0.0;
    for (i, row) in products.iter().enumerate() {
        for (j, prod) in row.iter().enumerate() {
            let a = prod.trace() / tr;
            let lambda = prod - &reference.scale(a);
            let norm = lambda.frobenius_sqr();
            alpha[(i, j)] = a;
            lambda_norms[i][j] = norm;
            delta_c += norm;
            if norm > VIOLATION_TOL {
                violating_pairs.push((i, j));
            }
        }
    }
    Ok(DeviationReport {
        alpha,
        lambda_norms,
        delta_c,
        violating_pairs,
    })
}

/// Outcome of checking `P E_i^dagger E_j P = alpha_ij P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlVerdict {
    pub satisfied: bool,
    /// `max_ij max |P E_i^dagger E_j P - alpha_ij P|` (elementwise). The
    /// verdict is basis independent; this magnitude is not.
    pub max_violation: f64,
}

pub fn kl_check(code: &Code, errors: &[CMatrix], tol: f64) -> Result<KlVerdict, MetricsError> {
    let p = code.projector();
    let tr = p.trace();
    let products = sandwiched_products(p, errors)?;
    let max_violation = products
        .iter()
        .flatten()
        .map(|prod| prod.max_abs_diff(&p.scale(prod.trace() / tr)))
        .fold(0.0, f64::max);
    Ok(KlVerdict {
        satisfied: max_violation <= tol,
        max_violation,
    })
}

/// `||rho^{T_B}||_1 - 1`, cross-checked against `sum_i |l_i| - l_i`.
pub fn negativity(rho: &CMatrix, split: DimSplit) -> Result<f64, MetricsError> {
    rho.ensure_hermitian(HERMITIAN_TOL)?;
    let pt = partial_transpose(rho, split, Subsystem::B)?;
    let eig = hermitian_eigenvalues(&pt)?;
    let eigen: f64 = eig.iter().map(|l| l.abs() - l).sum();
    let norm = eig.iter().map(|l| l.abs()).sum::<f64>() - 1.0;
    if (eigen - norm).abs() > NEGATIVITY_ROUTE_TOL {
        return Err(MetricsError::InconsistentNegativity { eigen, norm });
    }
    Ok(norm.max(0.0))
}

/// Slope of a curve at `t = 0` by forward differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialRate {
    pub h: f64,
    /// `(f(h) - f(0)) / h`.
    pub forward: f64,
    /// Same with step `h/2`.
    pub half_step: f64,
    /// `2 * half_step - forward`, first-order error cancelled.
    pub richardson: f64,
}

impl InitialRate {
    /// Whether the two forward differences agree to `rel_tol` (relative).
    pub fn step_consistent(&self, rel_tol: f64) -> bool {
        let scale = self.forward.abs().max(self.half_step.abs());
        scale == 0.0 || (self.forward - self.half_step).abs() <= rel_tol * scale
    }
}

pub fn initial_rate(curve: impl Fn(f64) -> f64, h: f64) -> Result<InitialRate, MetricsError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(MetricsError::InvalidStep(h));
    }
    let f0 = curve(0.0);
    let forward = (curve(h) - f0) / h;
    let half_step = (curve(h / 2.0) - f0) / (h / 2.0);
    Ok(InitialRate {
        h,
        forward,
        half_step,
        richardson: 2.0 * half_step - forward,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeClass {
    /// `|+++>, |--->`.
    Standard,
    /// `|0++>, |1-->`.
    Rotated,
}

/// Square-root closed forms of `delta_c` for the two three-qubit code classes.
pub fn closed_form_delta(class: CodeClass, p: &ErrorProbabilities) -> Result<f64, MetricsError> {
    if p.n != 3 {
        return Err(MetricsError::WrongQubitCount(p.n));
    }
    let s = |i: usize, j: usize| (p.p[i] * p.p[j]).sqrt();
    Ok(match class {
        CodeClass::Standard => 2.0 * (s(0, 3) + 3.0 * s(1, 2)),
        CodeClass::Rotated => 2.0 * (s(0, 1) + 2.0 * s(1, 2) + s(2, 3)),
    })
}

/// Integer coefficients of `sqrt(p_i p_j)` terms, keyed by `i <= j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeTerms {
    pub lhs: Vec<(usize, usize, u64)>,
    pub rhs: Vec<(usize, usize, u64)>,
}

fn merge_terms(raw: impl IntoIterator<Item = (usize, usize, u64)>) -> Vec<(usize, usize, u64)> {
    let mut map = std::collections::BTreeMap::new();
    for (i, j, c) in raw {
        *map.entry((i.min(j), i.max(j))).or_insert(0) += c;
    }
    map.into_iter()
        .filter(|(_, c)| *c != 0)
        .map(|((i, j), c)| (i, j, c))
        .collect()
}

/// Expands `sum_i C(n,i) sqrt(p_i p_{n-i})` (repetition code) and
/// `2 sum_i C(n-1,i) sqrt(p_i p_{i+1})` (rotated code) into merged terms.
pub fn regime_terms(n: usize) -> RegimeTerms {
    let lhs = merge_terms((0..=n).map(|i| (i, n - i, binomial(n, i))));
    let rhs = merge_terms((0..n).map(|i| (i, i + 1, 2 * binomial(n - 1, i))));
    RegimeTerms { lhs, rhs }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeVerdict {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs > rhs` beyond rounding: the rotated code beats the repetition
    /// code.
    pub rotated_optimal: bool,
}

/// Relative margin below which the two sides count as tied.
pub const REGIME_TOL: f64 = 1e-12;

pub fn regime_inequality(p: &ErrorProbabilities) -> RegimeVerdict {
    let terms = regime_terms(p.n);
    let eval = |ts: &[(usize, usize, u64)]| -> f64 {
        ts.iter()
            .map(|&(i, j, c)| c as f64 * (p.p[i] * p.p[j]).sqrt())
            .sum()
    };
    let lhs = eval(&terms.lhs);
    let rhs = eval(&terms.rhs);
    RegimeVerdict {
        lhs,
        rhs,
        rotated_optimal: lhs - rhs > REGIME_TOL * lhs.max(rhs),
    }
}

/// Pearson correlation coefficient; NaN when either series is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Reference state `rho_red = P / 2` for the reduced-state variant.
pub fn reduced_reference(code: &Code) -> CMatrix {
    code.projector().scale(C64::new(0.5, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{kraus_set, pauli_string, ErrorKind, RateProfile};
    use crate::codes::{probe_state, repetition_code, rotated_code};
    use crate::linalg::{kron, CMatrix, C64, ONE};

    fn single_dephasing_set(q: f64) -> Vec<CMatrix> {
        [vec![], vec![0], vec![1], vec![2]]
            .iter()
            .map(|s| pauli_string(3, s, ErrorKind::Dephasing).scale_real(q.sqrt()))
            .collect()
    }

    #[test]
    fn trivial_channel_has_zero_deviation() {
        let k = kraus_set(&RateProfile::dephasing(&[0.2, 0.2, 1.0]).unwrap(), 0.0).unwrap();
        let rep = deviation(repetition_code(3).unwrap().projector(), &k.elements).unwrap();
        assert!(rep.delta_c < 1e-20);
        assert!(rep.violating_pairs.is_empty());
    }

    #[test]
    fn single_errors_are_correctable() {
        let code = repetition_code(3).unwrap();
        let rep = deviation(code.projector(), &single_dephasing_set(0.25)).unwrap();
        assert!(rep.delta_c < 1e-20);
        let kl = kl_check(&code, &single_dephasing_set(1.0), 1e-10).unwrap();
        assert!(kl.satisfied, "{kl:?}");
        assert!(rep.alpha.is_hermitian(1e-10));
    }

    #[test]
    fn full_channel_violating_pairs() {
        let k = kraus_set(&RateProfile::dephasing(&[0.2, 0.2, 1.0]).unwrap(), 0.2).unwrap();
        let code = repetition_code(3).unwrap();
        let rep = deviation(code.projector(), &k.elements).unwrap();
        let mut expected = vec![
            (0, 7),
            (7, 0),
            (1, 6),
            (6, 1),
            (2, 5),
            (5, 2),
            (3, 4),
            (4, 3),
        ];
        expected.sort();
        assert_eq!(rep.violating_pairs, expected);
        let sum: f64 = rep.lambda_norms.iter().flatten().sum();
        assert!((sum - rep.delta_c).abs() < 1e-12);
        // direct evaluation gives the product form 4 (p0 p3 + 3 p1 p2)
        let p = &k.probabilities.p;
        assert!((rep.delta_c - 4.0 * (p[0] * p[3] + 3.0 * p[1] * p[2])).abs() < 1e-12);
        assert!(!kl_check(&code, &k.elements, 1e-10).unwrap().satisfied);

        let rot = deviation(rotated_code(3, 0).unwrap().projector(), &k.elements).unwrap();
        let mut expected = vec![
            (0, 1),
            (1, 0),
            (2, 4),
            (4, 2),
            (3, 5),
            (5, 3),
            (6, 7),
            (7, 6),
        ];
        expected.sort();
        assert_eq!(rot.violating_pairs, expected);
    }

    #[test]
    fn reduced_reference_scales_by_sixteenth() {
        let k = kraus_set(&RateProfile::dephasing(&[0.3, 0.1, 0.5]).unwrap(), 0.4).unwrap();
        let code = rotated_code(3, 1).unwrap();
        let full = deviation(code.projector(), &k.elements).unwrap().delta_c;
        let red = deviation(&reduced_reference(&code), &k.elements)
            .unwrap()
            .delta_c;
        assert!((red * 16.0 - full).abs() < 1e-12);
    }

    #[test]
    fn deviation_rejects_bad_input() {
        let errs = single_dephasing_set(1.0);
        assert!(matches!(
            deviation(&CMatrix::zeros(8, 8), &errs),
            Err(MetricsError::ZeroTrace)
        ));
        assert!(matches!(
            deviation(&CMatrix::identity(4), &errs),
            Err(MetricsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn csv_has_row_per_pair() {
        let rep = deviation(
            repetition_code(3).unwrap().projector(),
            &single_dephasing_set(0.25),
        )
        .unwrap();
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 1 + 16);
        assert!(csv.starts_with("i,j,alpha_re,alpha_im,lambda_norm\n0,0,"));
    }

    #[test]
    fn negativity_cases() {
        let probe = probe_state(&repetition_code(3).unwrap());
        assert!((negativity(&probe.rho, probe.split).unwrap() - 1.0).abs() < 1e-12);
        let a = CMatrix::real_diag(&[0.3, 0.7]);
        let b = CMatrix::real_diag(&[0.5, 0.25, 0.25, 0.0]);
        assert!(
            negativity(&kron(&a, &b), DimSplit::new(2, 4))
                .unwrap()
                .abs()
                < 1e-14
        );
        let mut not_h = CMatrix::identity(4).scale_real(0.25);
        not_h[(0, 1)] = ONE;
        assert!(negativity(&not_h, DimSplit::new(2, 2)).is_err());
        // unnormalized input makes the two routes disagree
        assert!(matches!(
            negativity(&CMatrix::identity(4), DimSplit::new(2, 2)),
            Err(MetricsError::InconsistentNegativity { .. })
        ));
    }

    #[test]
    fn initial_rate_cases() {
        let r = initial_rate(|_| 3.0, 1e-3).unwrap();
        assert_eq!((r.forward, r.richardson), (0.0, 0.0));
        let r = initial_rate(|t| (-4.0 * t).exp(), 1e-3).unwrap();
        assert!((r.forward + 4.0).abs() < 0.04);
        assert!((r.richardson + 4.0).abs() < 1e-4);
        assert!(r.step_consistent(0.02));
        assert!(initial_rate(|t| t, 0.0).is_err());
    }

    #[test]
    fn closed_forms() {
        let p0 = ErrorProbabilities::from_values(vec![1.0, 0.0, 0.0, 0.0], 0.0);
        assert_eq!(closed_form_delta(CodeClass::Standard, &p0).unwrap(), 0.0);
        assert_eq!(closed_form_delta(CodeClass::Rotated, &p0).unwrap(), 0.0);
        let p = ErrorProbabilities::from_values(vec![0.66, 0.10 / 3.0, 0.10 / 3.0, 0.13], 0.1);
        let std = closed_form_delta(CodeClass::Standard, &p).unwrap();
        let rot = closed_form_delta(CodeClass::Rotated, &p).unwrap();
        // 2(sqrt(.0858) + .1) and 2(sqrt(.022) + 2/30 + sqrt(.004333))
        assert!((std - 0.7858).abs() < 1e-3, "{std}");
        assert!((rot - 0.5616).abs() < 1e-3, "{rot}");
        let four = ErrorProbabilities::from_values(vec![1.0, 0.0, 0.0, 0.0, 0.0], 0.0);
        assert!(closed_form_delta(CodeClass::Standard, &four).is_err());
    }

    #[test]
    fn regime_terms_three_qubits() {
        let t = regime_terms(3);
        assert_eq!(t.lhs, vec![(0, 3, 2), (1, 2, 6)]);
        assert_eq!(t.rhs, vec![(0, 1, 2), (1, 2, 4), (2, 3, 2)]);
        let v = regime_inequality(&ErrorProbabilities::from_values(
            vec![1.0, 0.0, 0.0, 0.0],
            0.0,
        ));
        assert_eq!((v.lhs, v.rhs, v.rotated_optimal), (0.0, 0.0, false));
    }

    #[test]
    fn equal_outer_rates_tie() {
        let rates = crate::channel::RateProfile::dephasing(&[1.0, 0.2, 1.0]).unwrap();
        let v = regime_inequality(&crate::channel::error_probabilities(&rates, 0.1).unwrap());
        assert!((v.lhs - v.rhs).abs() < 1e-14);
        assert!(!v.rotated_optimal);
    }

    #[test]
    fn regime_terms_even_n_merge_middle() {
        let t = regime_terms(4);
        assert_eq!(t.lhs, vec![(0, 4, 2), (1, 3, 8), (2, 2, 6)]);
        assert_eq!(t.rhs, vec![(0, 1, 2), (1, 2, 6), (2, 3, 6), (3, 4, 2)]);
    }

    #[test]
    fn pearson_basic() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&xs, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &[-1.0, -2.0, -3.0, -4.0]) + 1.0).abs() < 1e-15);
        assert!(pearson(&xs, &[1.0; 4]).is_nan());
    }

    #[test]
    fn alpha_is_hermitian_for_complex_errors() {
        let e = CMatrix::from_fn(8, 8, |r, c| {
            C64::new((r * 3 + c) as f64 * 0.01, (r as f64 - c as f64) * 0.02)
        });
        let errs = vec![CMatrix::identity(8), e];
        let rep = deviation(repetition_code(3).unwrap().projector(), &errs).unwrap();
        assert!(rep.alpha.is_hermitian(1e-10));
    }
}

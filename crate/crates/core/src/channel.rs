//! Correlated dephasing and bitflip channels on `n` qubits.
//!
//! A [`RateProfile`] assigns one Lindblad rate `gamma_k` to every k-qubit
//! error string (the same rate for every choice of k qubits). Under the
//! generator `drho/dt = sum_j 2 L rho L^dagger - {L^dagger L, rho}` with
//! `L_S = sqrt(gamma_|S|) Z_S`, a computational-basis coherence whose bra and
//! ket differ on `w` qubits decays as
//!
//! ```text
//! f_w(t) = exp(-4 t sum_k gamma_k N(k, w, n)),
//! N(k, w, n) = sum_{j odd} C(w, j) C(n - w, k - j),
//! ```
//!
//! where `N` counts the weight-k strings anticommuting with that coherence.
//! The Kraus form `sum_S p_|S| Z_S rho Z_S` multiplies the same coherence by
//! `sum_k K_k(w) p_k` with `K` the binary Krawtchouk polynomials, so the
//! per-string probabilities follow from inverting that linear map.
//!
//! Bitflip channels are the Hadamard conjugate of the dephasing channel.

use thiserror::Error;

use crate::linalg::{hadamard, kron, kron_all, pauli_x, pauli_z, CMatrix, DimSplit, LinalgError};

pub const MIN_QUBITS: usize = 2;
pub const MAX_QUBITS: usize = 6;

/// Probabilities below this are treated as an internal inconsistency.
const NEGATIVE_PROBABILITY_TOL: f64 = 1e-9;

/// Default RK4 step in units of `1/gamma_c`.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid rate profile: {0}")]
    InvalidRates(String),
    #[error("time must be finite and non-negative, got {0}")]
    InvalidTime(f64),
    #[error("probability p_{k} = {value:e} is negative beyond tolerance")]
    NegativeProbability { k: usize, value: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorKind {
    #[default]
    Dephasing,
    Bitflip,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Dephasing => "dephasing",
            ErrorKind::Bitflip => "bitflip",
        }
    }

    fn pauli(self) -> CMatrix {
        match self {
            ErrorKind::Dephasing => pauli_z(),
            ErrorKind::Bitflip => pauli_x(),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            ErrorKind::Dephasing => "Z",
            ErrorKind::Bitflip => "X",
        }
    }
}

impl std::str::FromStr for ErrorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dephasing" | "z" => Ok(ErrorKind::Dephasing),
            "bitflip" | "x" => Ok(ErrorKind::Bitflip),
            other => Err(format!(
                "unknown error kind '{other}' (expected dephasing|bitflip)"
            )),
        }
    }
}

/// Lindblad rates `gamma_1..gamma_n` in units of the characteristic rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateProfile {
    gamma: Vec<f64>,
    kind: ErrorKind,
}

impl RateProfile {
    pub fn new(gamma: Vec<f64>, kind: ErrorKind) -> Result<Self, ChannelError> {
        let n = gamma.len();
        if !(MIN_QUBITS..=MAX_QUBITS).contains(&n) {
            return Err(ChannelError::InvalidRates(format!(
                "need between {MIN_QUBITS} and {MAX_QUBITS} rates (one per error weight), got {n}"
            )));
        }
        if let Some((k, g)) = gamma
            .iter()
            .enumerate()
            .find(|(_, g)| !g.is_finite() || **g < 0.0)
        {
            return Err(ChannelError::InvalidRates(format!(
                "gamma_{} = {g} must be finite and non-negative",
                k + 1
            )));
        }
        Ok(Self { gamma, kind })
    }

    pub fn dephasing(gamma: &[f64]) -> Result<Self, ChannelError> {
        Self::new(gamma.to_vec(), ErrorKind::Dephasing)
    }

    pub fn bitflip(gamma: &[f64]) -> Result<Self, ChannelError> {
        Self::new(gamma.to_vec(), ErrorKind::Bitflip)
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    /// `gamma_k` for weight `k` in `1..=n`.
    pub fn gamma(&self, k: usize) -> f64 {
        self.gamma[k - 1]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gamma
    }

    pub fn kind(&self) -> ErrorKind {
        self.kind
    }

    pub fn with_kind(&self, kind: ErrorKind) -> Self {
        Self {
            gamma: self.gamma.clone(),
            kind,
        }
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Number of weight-`k` strings that anticommute with a weight-`w` coherence.
pub fn anticommuting_count(k: usize, w: usize, n: usize) -> u64 {
    (1..=k.min(w))
        .step_by(2)
        .map(|j| binomial(w, j) * binomial(n - w, k - j))
        .sum()
}

/// Binary Krawtchouk polynomial `K_k(w) = sum_j (-1)^j C(w,j) C(n-w,k-j)`.
pub fn krawtchouk(k: usize, w: usize, n: usize) -> i64 {
    (0..=k.min(w))
        .map(|j| {
            let term = (binomial(w, j) * binomial(n - w, k - j)) as i64;
            if j % 2 == 0 {
                term
            } else {
                -term
            }
        })
        .sum()
}

fn check_time(t: f64) -> Result<(), ChannelError> {
    if !t.is_finite() || t < 0.0 {
        return Err(ChannelError::InvalidTime(t));
    }
    Ok(())
}

/// Coherence decay factors `f_0..f_n` at time `t`.
pub fn decay_factors(rates: &RateProfile, t: f64) -> Vec<f64> {
    let n = rates.n();
    (0..=n)
        .map(|w| {
            let exponent: f64 = (1..=n)
                .map(|k| rates.gamma(k) * anticommuting_count(k, w, n) as f64)
                .sum();
            (-4.0 * t * exponent).exp()
        })
        .collect()
}

/// Time-dependent probabilities `p_0..p_n` of one particular weight-k error
/// string (so the total probability of weight k is `C(n,k) p_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProbabilities {
    pub n: usize,
    pub t: f64,
    pub p: Vec<f64>,
}

impl ErrorProbabilities {
    pub fn from_values(p: Vec<f64>, t: f64) -> Self {
        Self {
            n: p.len() - 1,
            t,
            p,
        }
    }

    /// `C(n,k) p_k`, the probability that exactly `k` qubits are hit.
    pub fn grouped(&self) -> Vec<f64> {
        self.p
            .iter()
            .enumerate()
            .map(|(k, p)| binomial(self.n, k) as f64 * p)
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.grouped().iter().sum()
    }
}

/// Probabilities from the decay factors by Krawtchouk inversion.
///
/// Orthogonality `sum_w C(n,w) K_k(w) K_l(w) = 2^n C(n,k) delta_kl` gives
/// `p_k = 2^-n / C(n,k) * sum_w C(n,w) K_k(w) f_w`.
pub fn error_probabilities(
    rates: &RateProfile,
    t: f64,
) -> Result<ErrorProbabilities, ChannelError> {
    check_time(t)?;
    let n = rates.n();
    let f = decay_factors(rates, t);
    let norm = (1u64 << n) as f64;
    let mut p = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let acc: f64 = (0..=n)
            .map(|w| binomial(n, w) as f64 * krawtchouk(k, w, n) as f64 * f[w])
            .sum();
        let value = acc / (norm * binomial(n, k) as f64);
        if value < -NEGATIVE_PROBABILITY_TOL {
            return Err(ChannelError::NegativeProbability { k, value });
        }
        p.push(value.max(0.0));
    }
    Ok(ErrorProbabilities { n, t, p })
}

/// Closed-form three-qubit dephasing probabilities, written out term by term.
pub fn three_qubit_closed_form(g1: f64, g2: f64, g3: f64, t: f64) -> [f64; 4] {
    let a = (-8.0 * (g1 + g2) * t).exp();
    let b = (-4.0 * (3.0 * g1 + g3) * t).exp();
    let c = (-4.0 * (g1 + 2.0 * g2 + g3) * t).exp();
    let sqrt_p0 = 1.0 / (2.0 * 2f64.sqrt())
        * (-4.0 * (3.0 * g1 + 2.0 * g2 + g3) * t).exp()
        * (3.0 * (8.0 * (2.0 * g1 + g2 + g3) * t).exp()
            + (8.0 * (3.0 * g1 + 2.0 * g2 + g3) * t).exp()
            + 3.0 * (4.0 * (5.0 * g1 + 2.0 * g2 + g3) * t).exp()
            + (4.0 * (3.0 * g1 + 4.0 * g2 + g3) * t).exp())
        .sqrt();
    let p1 = (1.0 - a - b + c) / 8.0;
    let p2 = (1.0 - a + b - c) / 8.0;
    let p3 = (1.0 + 3.0 * a - b - 3.0 * c) / 8.0;
    [sqrt_p0 * sqrt_p0, p1, p2, p3]
}

/// Qubit subsets ordered by weight, then lexicographically.
pub fn subsets_by_weight(n: usize) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = (0u32..(1 << n))
        .map(|mask| (0..n).filter(|q| mask & (1 << q) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
}

/// Tensor product with the kind's Pauli on `subset` and identity elsewhere.
pub fn pauli_string(n: usize, subset: &[usize], kind: ErrorKind) -> CMatrix {
    let p = kind.pauli();
    let id = CMatrix::identity(2);
    let factors: Vec<&CMatrix> = (0..n)
        .map(|q| if subset.contains(&q) { &p } else { &id })
        .collect();
    kron_all(factors)
}

/// `H^{⊗n}`.
pub fn hadamard_all(n: usize) -> CMatrix {
    let h = hadamard();
    kron_all(std::iter::repeat_n(&h, n))
}

/// Maps an operator written for dephasing noise to the equivalent one for
/// `kind`: unchanged for dephasing, conjugated by `H^n` for bit flips.
pub fn noise_frame(op: &CMatrix, kind: ErrorKind) -> CMatrix {
    match kind {
        ErrorKind::Dephasing => op.clone(),
        ErrorKind::Bitflip => {
            let f = hadamard_all(op.rows().trailing_zeros() as usize);
            &(&f * op) * &f
        }
    }
}

/// Operation elements of the channel at a fixed time, one per qubit subset.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub n: usize,
    pub kind: ErrorKind,
    pub subsets: Vec<Vec<usize>>,
    pub elements: Vec<CMatrix>,
    pub probabilities: ErrorProbabilities,
}

impl KrausSet {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `max |sum E^dagger E - I|`.
    pub fn completeness_error(&self) -> f64 {
        let d = 1 << self.n;
        let sum = self
            .elements
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, e| &acc + &e.dagger().matmul(e));
        sum.max_abs_diff(&CMatrix::identity(d))
    }

    /// Human-readable labels such as `E4 = sqrt(p2) Z⊗Z⊗I`.
    pub fn labels(&self) -> Vec<String> {
        kraus_labels(self.n, self.kind)
    }
}

pub fn kraus_labels(n: usize, kind: ErrorKind) -> Vec<String> {
    subsets_by_weight(n)
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ops: Vec<&str> = (0..n)
                .map(|q| if s.contains(&q) { kind.symbol() } else { "I" })
                .collect();
            format!("E{i} = sqrt(p{}) {}", s.len(), ops.join("⊗"))
        })
        .collect()
}

pub fn kraus_set(rates: &RateProfile, t: f64) -> Result<KrausSet, ChannelError> {
    let probabilities = error_probabilities(rates, t)?;
    let n = rates.n();
    let subsets = subsets_by_weight(n);
    let dephasing: Vec<CMatrix> = subsets
        .iter()
        .map(|s| {
            pauli_string(n, s, ErrorKind::Dephasing).scale_real(probabilities.p[s.len()].sqrt())
        })
        .collect();
    let elements = match rates.kind() {
        ErrorKind::Dephasing => dephasing,
        ErrorKind::Bitflip => {
            let h = hadamard_all(n);
            dephasing.iter().map(|e| e.conjugate_by(&h)).collect()
        }
    };
    Ok(KrausSet {
        n,
        kind: rates.kind(),
        subsets,
        elements,
        probabilities,
    })
}

/// `L rho L^dagger` computed as `(L (L rho)^dagger)^dagger`, so that sparse
/// `L` keeps both products cheap.
fn sandwich(l: &CMatrix, rho: &CMatrix) -> CMatrix {
    l.matmul(&l.matmul(rho).dagger()).dagger()
}

/// Applies the channel to the system factor of an ancilla ⊗ system state.
pub fn apply_channel(
    rho: &CMatrix,
    kraus: &KrausSet,
    split: DimSplit,
) -> Result<CMatrix, ChannelError> {
    let d_sys = 1usize << kraus.n;
    if split.dim_b != d_sys || !rho.is_square() || rho.rows() != split.total() {
        return Err(LinalgError::DimensionMismatch {
            expected: format!("{0}x{0} with system dimension {d_sys}", split.dim_a * d_sys),
            actual: format!(
                "{}x{} (split {}x{})",
                rho.rows(),
                rho.cols(),
                split.dim_a,
                split.dim_b
            ),
        }
        .into());
    }
    let id_a = CMatrix::identity(split.dim_a);
    let mut out = CMatrix::zeros(rho.rows(), rho.cols());
    for e in &kraus.elements {
        out = &out + &sandwich(&kron(&id_a, e), rho);
    }
    Ok(out)
}

/// Jump operators `sqrt(gamma_|S|) P_S` for every non-empty subset, lifted to
/// the ancilla-extended space as `I_A ⊗ L`.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    pub rates: RateProfile,
    pub ancilla_dim: usize,
    jumps: Vec<CMatrix>,
    jump_norms: Vec<CMatrix>,
}

impl LindbladGenerator {
    pub fn new(rates: &RateProfile, ancilla_dim: usize) -> Self {
        let n = rates.n();
        let id_a = CMatrix::identity(ancilla_dim);
        let jumps: Vec<CMatrix> = subsets_by_weight(n)
            .into_iter()
            .filter(|s| !s.is_empty())
            .map(|s| {
                let l = pauli_string(n, &s, rates.kind()).scale_real(rates.gamma(s.len()).sqrt());
                kron(&id_a, &l)
            })
            .collect();
        let jump_norms = jumps.iter().map(|l| l.dagger().matmul(l)).collect();
        Self {
            rates: rates.clone(),
            ancilla_dim,
            jumps,
            jump_norms,
        }
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    pub fn dim(&self) -> usize {
        self.ancilla_dim << self.rates.n()
    }

    /// `sum_j 2 L_j rho L_j^dagger - {L_j^dagger L_j, rho}`.
    pub fn derivative(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(rho.rows(), rho.cols());
        for (l, ll) in self.jumps.iter().zip(&self.jump_norms) {
            let gain = sandwich(l, rho).scale_real(2.0);
            let anti = &ll.matmul(rho) + &ll.matmul(&rho.dagger()).dagger();
            out = &out + &(&gain - &anti);
        }
        out
    }

    fn rk4_step(&self, rho: &CMatrix, h: f64) -> CMatrix {
        let k1 = self.derivative(rho);
        let k2 = self.derivative(&(rho + &k1.scale_real(h / 2.0)));
        let k3 = self.derivative(&(rho + &k2.scale_real(h / 2.0)));
        let k4 = self.derivative(&(rho + &k3.scale_real(h)));
        let incr = &(&k1 + &k2.scale_real(2.0)) + &(&k3.scale_real(2.0) + &k4);
        rho + &incr.scale_real(h / 6.0)
    }

    fn advance(&self, mut rho: CMatrix, span: f64, dt: f64) -> CMatrix {
        if span <= 0.0 {
            return rho;
        }
        let steps = (span / dt).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for _ in 0..steps {
            rho = self.rk4_step(&rho, h);
        }
        rho
    }
}

/// Fixed-step RK4 integration of the master equation from `0` to `t`.
pub fn integrate_lindblad(gen: &LindbladGenerator, rho0: &CMatrix, t: f64, dt: f64) -> CMatrix {
    assert!(dt > 0.0, "step must be positive");
    gen.advance(rho0.clone(), t, dt)
}

/// States at each of the ascending `times`, integrating once along the way.
pub fn integrate_lindblad_trajectory(
    gen: &LindbladGenerator,
    rho0: &CMatrix,
    times: &[f64],
    dt: f64,
) -> Vec<CMatrix> {
    assert!(dt > 0.0, "step must be positive");
    assert!(
        times.windows(2).all(|w| w[0] <= w[1]),
        "times must be ascending"
    );
    let mut out = Vec::with_capacity(times.len());
    let mut rho = rho0.clone();
    let mut now = 0.0;
    for &t in times {
        rho = gen.advance(rho, t - now, dt);
        now = t;
        out.push(rho.clone());
    }
    out
}

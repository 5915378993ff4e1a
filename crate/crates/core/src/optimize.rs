//! Search over encoding unitaries `U = exp(i H)` applied to a base code.
//!
//! The generator `H` is a full Hermitian matrix of dimension `d = 2^n`,
//! parameterized by `d^2` reals (the diagonal, then real and imaginary parts
//! of the upper triangle). Each run is an adaptive Nelder–Mead simplex
//! search; the identity and single-qubit Hadamard generators are always
//! included as deterministic starts alongside the seeded random ones.
//!
//! Generators are read in the frame of the noise: under bit-flip noise the
//! applied unitary is `H^n exp(i H) H^n`, so a given generator plays the same
//! role for both error kinds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    apply_channel, kraus_set, noise_frame, ChannelError, ErrorKind, KrausSet, RateProfile,
};
use crate::codes::{probe_state, transform_code, Code, CodeError};
use crate::linalg::{
    hadamard, kron_all, random_hermitian, unitary_from_generator, CMatrix, LinalgError, C64,
};
use crate::metrics::{
    deviation, initial_rate, negativity, InitialRate, MetricsError, DEFAULT_RATE_STEP,
};

pub const DEFAULT_OBJECTIVE_TIME: f64 = 0.5;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("restarts must be at least 1")]
    NoRestarts,
    #[error("generator has dimension {actual}, expected {expected}")]
    GeneratorDimension { expected: usize, actual: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    /// Minus the probe negativity at the given time.
    NegativityAt(f64),
    /// Initial slope of `delta_c` with the reduced state `U P U^dagger / 2`.
    DeltaSlope,
}

/// Objective for one rate profile and base code, with the fixed-time Kraus
/// set cached.
#[derive(Debug, Clone)]
pub struct Objective {
    rates: RateProfile,
    base: Code,
    kind: ObjectiveKind,
    kraus_at_target: Option<KrausSet>,
}

impl Objective {
    pub fn new(
        rates: &RateProfile,
        base: &Code,
        kind: ObjectiveKind,
    ) -> Result<Self, OptimizeError> {
        let kraus_at_target = match kind {
            ObjectiveKind::NegativityAt(t) => Some(kraus_set(rates, t)?),
            ObjectiveKind::DeltaSlope => None,
        };
        Ok(Self {
            rates: rates.clone(),
            base: base.clone(),
            kind,
            kraus_at_target,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn evaluate(&self, generator: &CMatrix) -> Result<f64, OptimizeError> {
        let d = self.dim();
        if generator.rows() != d || generator.cols() != d {
            return Err(OptimizeError::GeneratorDimension {
                expected: d,
                actual: generator.rows(),
            });
        }
        let u = encoding_unitary(generator, self.rates.kind())?;
        let code = transform_code(&self.base, &u)?;
        self.evaluate_code(&code)
    }

    pub fn evaluate_code(&self, code: &Code) -> Result<f64, OptimizeError> {
        match self.kind {
            ObjectiveKind::NegativityAt(_) => {
                let kraus = self.kraus_at_target.as_ref().expect("cached for this kind");
                let probe = probe_state(code);
                let rho = apply_channel(&probe.rho, kraus, probe.split)?;
                Ok(-negativity(&rho, probe.split)?)
            }
            ObjectiveKind::DeltaSlope => {
                let reference = code.projector().scale_real(0.5);
                Ok(delta_slope(&self.rates, &reference)?.forward)
            }
        }
    }

    /// Objective as a function of the packed real parameters. Failures map
    /// to `+inf` so the simplex moves away from them.
    pub fn evaluate_params(&self, params: &[f64]) -> f64 {
        self.evaluate(&generator_from_params(params, self.dim()))
            .unwrap_or(f64::INFINITY)
    }
}

/// `exp(i H)`, conjugated by `H^n` for bit-flip noise.
pub fn encoding_unitary(generator: &CMatrix, kind: ErrorKind) -> Result<CMatrix, LinalgError> {
    Ok(noise_frame(&unitary_from_generator(generator)?, kind))
}

/// Initial rate of `delta_c(t)` against a fixed reference matrix.
pub fn delta_slope(rates: &RateProfile, reference: &CMatrix) -> Result<InitialRate, OptimizeError> {
    let delta_at = |t: f64| {
        kraus_set(rates, t)
            .ok()
            .and_then(|k| deviation(reference, &k.elements).ok())
            .map_or(f64::NAN, |r| r.delta_c)
    };
    let rate = initial_rate(delta_at, DEFAULT_RATE_STEP)?;
    // kraus_set and deviation only fail on malformed input, checked by the caller
    debug_assert!(rate.forward.is_finite());
    Ok(rate)
}

/// Convenience wrapper around [`Objective`].
pub fn objective(
    generator: &CMatrix,
    rates: &RateProfile,
    base: &Code,
    kind: ObjectiveKind,
) -> Result<f64, OptimizeError> {
    Objective::new(rates, base, kind)?.evaluate(generator)
}

/// Unpacks `d^2` reals into a Hermitian matrix.
pub fn generator_from_params(params: &[f64], d: usize) -> CMatrix {
    assert_eq!(params.len(), d * d, "need d^2 parameters");
    let mut h = CMatrix::zeros(d, d);
    for (i, x) in params[..d].iter().enumerate() {
        h[(i, i)] = C64::new(*x, 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in i + 1..d {
            let z = C64::new(params[k], params[k + 1]);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            k += 2;
        }
    }
    h
}

pub fn params_from_generator(h: &CMatrix) -> Vec<f64> {
    let d = h.rows();
    let mut out: Vec<f64> = (0..d).map(|i| h[(i, i)].re).collect();
    for i in 0..d {
        for j in i + 1..d {
            out.push(h[(i, j)].re);
            out.push(h[(i, j)].im);
        }
    }
    out
}

/// Generator of a Hadamard gate on `qubit`: `(pi/2)(I - H)` there, zero elsewhere.
pub fn hadamard_generator(n: usize, qubit: usize) -> CMatrix {
    let id = CMatrix::identity(2);
    let local = (&id - &hadamard()).scale_real(std::f64::consts::FRAC_PI_2);
    // exp(i (A ⊗ I)) = exp(iA) ⊗ I
    let factors: Vec<&CMatrix> = (0..n)
        .map(|q| if q == qubit { &local } else { &id })
        .collect();
    kron_all(factors)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub initial_step: f64,
    pub max_evaluations: usize,
    /// Stop once every vertex is within this distance of the best one.
    pub diameter_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.25,
            max_evaluations: 5000,
            diameter_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value after each iteration; nonincreasing.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Nelder–Mead with dimension-adaptive coefficients (Gao & Han).
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadOutcome {
    let dim = x0.len();
    let nf = dim.max(1) as f64;
    let (alpha, beta, gamma, delta) =
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);

    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], count: &mut usize| {
        *count += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(x0, &mut evaluations);
    simplex.push((x0.to_vec(), v0));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut evaluations);
        simplex.push((x, v));
    }
    let mut history = Vec::new();

    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
    };

    while evaluations < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(simplex[0].1);
        let best = simplex[0].0.clone();
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&best)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if diameter < opts.diameter_tol || dim == 0 {
            break;
        }

        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let (worst, f_worst) = simplex[dim].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[dim - 1].1;

        let xr = lerp(&centroid, &worst, -alpha);
        let fr = eval(&xr, &mut evaluations);
        let mut shrink = false;
        if fr < f_best {
            let xe = lerp(&centroid, &xr, beta);
            let fe = eval(&xe, &mut evaluations);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < f_second {
            simplex[dim] = (xr, fr);
        } else if fr < f_worst {
            let xoc = lerp(&centroid, &xr, gamma);
            let foc = eval(&xoc, &mut evaluations);
            if foc <= fr {
                simplex[dim] = (xoc, foc);
            } else {
                shrink = true;
            }
        } else {
            let xic = lerp(&centroid, &worst, gamma);
            let fic = eval(&xic, &mut evaluations);
            if fic < f_worst {
                simplex[dim] = (xic, fic);
            } else {
                shrink = true;
            }
        }
        if shrink {
            for vertex in simplex.iter_mut().skip(1) {
                let x = lerp(&best, &vertex.0, delta);
                let v = eval(&x, &mut evaluations);
                *vertex = (x, v);
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    if history.last() != Some(&simplex[0].1) {
        history.push(simplex[0].1);
    }
    let (x, value) = simplex.swap_remove(0);
    NelderMeadOutcome {
        x,
        value,
        history,
        evaluations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartKind {
    Identity,
    Hadamard,
    /// Random generator drawn from stream `index` of the run seed.
    Random(u64),
}

impl std::fmt::Display for StartKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartKind::Identity => write!(f, "identity"),
            StartKind::Hadamard => write!(f, "hadamard"),
            StartKind::Random(i) => write!(f, "random#{i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub best_generator: CMatrix,
    pub best_objective: f64,
    pub best_start: StartKind,
    /// Best-so-far trace of the winning run.
    pub objective_history: Vec<f64>,
    /// Total objective evaluations across all starts.
    pub evaluations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub restarts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
    /// Scale of the random starting generators.
    pub start_scale: f64,
}

impl OptimizeOptions {
    pub fn new(restarts: usize, seed: u64) -> Self {
        Self {
            restarts,
            seed,
            nelder_mead: NelderMeadOptions::default(),
            start_scale: 1.0,
        }
    }
}

fn random_start(d: usize, seed: u64, stream: u64, scale: f64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    random_hermitian(d, &mut rng).scale_real(scale)
}

/// Minimizes the objective over encoding unitaries of `base`.
pub fn optimize_code(
    rates: &RateProfile,
    base: &Code,
    kind: ObjectiveKind,
    opts: &OptimizeOptions,
) -> Result<OptimizationResult, OptimizeError> {
    if opts.restarts == 0 {
        return Err(OptimizeError::NoRestarts);
    }
    let obj = Objective::new(rates, base, kind)?;
    let d = obj.dim();
    let mut starts = vec![
        (StartKind::Identity, CMatrix::zeros(d, d)),
        (StartKind::Hadamard, hadamard_generator(base.n(), 0)),
    ];
    for i in 0..opts.restarts as u64 {
        starts.push((
            StartKind::Random(i),
            random_start(d, opts.seed, i, opts.start_scale),
        ));
    }

    let runs: Vec<(StartKind, NelderMeadOutcome)> = starts
        .into_par_iter()
        .map(|(kind, h)| {
            let x0 = params_from_generator(&h);
            (
                kind,
                nelder_mead(|x| obj.evaluate_params(x), &x0, &opts.nelder_mead),
            )
        })
        .collect();

    let evaluations = runs.iter().map(|(_, r)| r.evaluations).sum();
    // first minimum in start order, so ties resolve deterministically
    let (best_start, best) = runs
        .into_iter()
        .reduce(|a, b| if b.1.value < a.1.value { b } else { a })
        .expect("at least one start");
    Ok(OptimizationResult {
        best_generator: generator_from_params(&best.x, d),
        best_objective: best.value,
        best_start,
        objective_history: best.history,
        evaluations,
        seed: opts.seed,
    })
}

/// Negativity of the transformed probe along `times`.
pub fn replay_negativity(
    generator: &CMatrix,
    rates: &RateProfile,
    base: &Code,
    times: &[f64],
) -> Result<Vec<f64>, OptimizeError> {
    let u = encoding_unitary(generator, rates.kind())?;
    let code = transform_code(base, &u)?;
    let probe = probe_state(&code);
    times
        .iter()
        .map(|&t| {
            let k = kraus_set(rates, t)?;
            let rho = apply_channel(&probe.rho, &k, probe.split)?;
            Ok(negativity(&rho, probe.split)?)
        })
        .collect()
}

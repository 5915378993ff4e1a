//! Experiment drivers behind the command-line tool.
//!
//! Every runner is a deterministic function of an [`ExperimentConfig`]:
//! sampling uses per-index ChaCha streams derived from the seed, and parallel
//! work is collected in index order, so repeated runs give byte-identical CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    apply_channel, error_probabilities, kraus_labels, kraus_set, noise_frame,
    three_qubit_closed_form, ChannelError, ErrorKind, ErrorProbabilities, RateProfile,
};
use crate::codes::{probe_state, transform_code, Code, CodeError, CodePreset};
use crate::linalg::{haar_unitary, CMatrix};
use crate::metrics::{
    deviation, initial_rate, kl_check, negativity, pearson, reduced_reference, regime_inequality,
    MetricsError, DEFAULT_RATE_STEP,
};
use crate::optimize::{
    delta_slope, optimize_code, replay_negativity, ObjectiveKind, OptimizationResult,
    OptimizeError, OptimizeOptions, DEFAULT_OBJECTIVE_TIME,
};
use crate::recovery::{recovery_error_set, RecoveryParams};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const KL_TOL: f64 = 1e-10;
const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("config field '{field}': {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical consistency check failed: {0}")]
    Consistency(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

impl ExperimentError {
    /// Whether the failure is an internal numerical inconsistency rather than
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ExperimentError::Consistency(_)
                | ExperimentError::Channel(ChannelError::NegativeProbability { .. })
                | ExperimentError::Metrics(MetricsError::InconsistentNegativity { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Haar,
    /// Every sample uses the untransformed base code.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveChoice {
    Negativity,
    DeltaSlope,
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub gamma: Vec<f64>,
    pub kind: ErrorKind,
    pub codes: Vec<CodePreset>,
    pub t_max: f64,
    pub t_steps: usize,
    pub samples: usize,
    pub seed: u64,
    pub out: Option<String>,
    pub sampler: Sampler,
    /// Explicit time list for `tables`, `regime-map` and `probabilities`.
    pub times: Option<Vec<f64>>,
    pub t_star: f64,
    pub restarts: usize,
    pub objective: ObjectiveChoice,
    pub max_evaluations: usize,
    /// Two 1-based rate indices spanned by the regime map.
    pub axes: (usize, usize),
    /// `(min, max, points)` along each regime-map axis.
    pub grid: (f64, f64, usize),
    pub q_steps: usize,
}

/// Keys accepted in config files and as `--key value` flags.
pub const CONFIG_KEYS: &[&str] = &[
    "n",
    "gamma",
    "kind",
    "code",
    "tmax",
    "steps",
    "samples",
    "seed",
    "out",
    "sampler",
    "times",
    "tstar",
    "restarts",
    "objective",
    "max-evals",
    "axes",
    "grid",
    "qsteps",
];

fn parse_list<T: std::str::FromStr>(field: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| ConfigError::new(field, format!("cannot parse '{s}'")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError::new(field, format!("cannot parse '{}'", value.trim())))
}

/// Splits a preset list on commas that are not inside brackets.
fn split_presets(value: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in value.char_indices() {
        match ch {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(value[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(value[start..].trim());
    out.into_iter().filter(|s| !s.is_empty()).collect()
}

/// Parses flat `key = value` text. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            ConfigError::new(
                "config",
                format!("line {}: expected key=value, got '{line}'", lineno + 1),
            )
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    /// Resolves a config from key/value pairs; later pairs override earlier
    /// ones, so callers pass file entries first and flags last.
    pub fn from_pairs<K, V>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self, ConfigError>
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in pairs {
            let key = k.as_ref().trim().replace('_', "-");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::new(&key, "unknown key"));
            }
            map.insert(key, v.as_ref().to_string());
        }
        let get = |k: &str| map.get(k).map(String::as_str);

        let gamma: Option<Vec<f64>> = get("gamma").map(|v| parse_list("gamma", v)).transpose()?;
        let n = match (get("n"), &gamma) {
            (Some(v), _) => parse_one("n", v)?,
            (None, Some(g)) => g.len(),
            (None, None) => 3,
        };
        let gamma = match gamma {
            Some(g) => g,
            None => default_gamma(n).ok_or_else(|| {
                ConfigError::new(
                    "gamma",
                    format!("no default rates for n = {n}; pass --gamma"),
                )
            })?,
        };
        if gamma.len() != n {
            return Err(ConfigError::new(
                "gamma",
                format!(
                    "expected {n} rates (one per error weight), got {}",
                    gamma.len()
                ),
            ));
        }
        RateProfile::dephasing(&gamma).map_err(|e| ConfigError::new("gamma", e.to_string()))?;

        let kind = get("kind")
            .map(|v| v.parse().map_err(|e: String| ConfigError::new("kind", e)))
            .transpose()?
            .unwrap_or_default();
        let codes = match get("code") {
            Some(v) => split_presets(v)
                .into_iter()
                .map(|s| {
                    s.parse::<CodePreset>()
                        .map_err(|e| ConfigError::new("code", e.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => default_codes(n),
        };
        if codes.is_empty() {
            return Err(ConfigError::new(
                "code",
                "at least one code preset is required",
            ));
        }
        for c in &codes {
            c.build(n, kind)
                .map_err(|e| ConfigError::new("code", e.to_string()))?;
        }

        let (default_tmax, default_steps) = default_time_grid(n);
        let t_max: f64 = get("tmax")
            .map(|v| parse_one("tmax", v))
            .transpose()?
            .unwrap_or(default_tmax);
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(ConfigError::new("tmax", "must be positive"));
        }
        let t_steps: usize = get("steps")
            .map(|v| parse_one("steps", v))
            .transpose()?
            .unwrap_or(default_steps);
        if t_steps < 2 {
            return Err(ConfigError::new("steps", "must be at least 2"));
        }
        let samples: usize = get("samples")
            .map(|v| parse_one("samples", v))
            .transpose()?
            .unwrap_or(1000);
        if samples < 1 {
            return Err(ConfigError::new("samples", "must be at least 1"));
        }
        let seed = get("seed")
            .map(|v| parse_one("seed", v))
            .transpose()?
            .unwrap_or(1);
        let sampler = match get("sampler").unwrap_or("haar").trim() {
            "haar" => Sampler::Haar,
            "identity" => Sampler::Identity,
            other => {
                return Err(ConfigError::new(
                    "sampler",
                    format!("unknown sampler '{other}' (haar|identity)"),
                ))
            }
        };
        let times: Option<Vec<f64>> = get("times").map(|v| parse_list("times", v)).transpose()?;
        if let Some(ts) = &times {
            if ts.is_empty() || ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(ConfigError::new(
                    "times",
                    "need one or more non-negative times",
                ));
            }
            if ts.windows(2).any(|w| w[1] < w[0]) {
                return Err(ConfigError::new("times", "must be ascending"));
            }
        }
        let t_star: f64 = get("tstar")
            .map(|v| parse_one("tstar", v))
            .transpose()?
            .unwrap_or(DEFAULT_OBJECTIVE_TIME);
        if !(t_star.is_finite() && t_star >= 0.0) {
            return Err(ConfigError::new("tstar", "must be non-negative"));
        }
        let restarts: usize = get("restarts")
            .map(|v| parse_one("restarts", v))
            .transpose()?
            .unwrap_or(8);
        if restarts < 1 {
            return Err(ConfigError::new("restarts", "must be at least 1"));
        }
        let objective = match get("objective").unwrap_or("negativity").trim() {
            "negativity" => ObjectiveChoice::Negativity,
            "delta-slope" | "delta_slope" => ObjectiveChoice::DeltaSlope,
            other => {
                return Err(ConfigError::new(
                    "objective",
                    format!("unknown objective '{other}' (negativity|delta-slope)"),
                ))
            }
        };
        let max_evaluations: usize = get("max-evals")
            .map(|v| parse_one("max-evals", v))
            .transpose()?
            .unwrap_or(5000);
        if max_evaluations < 1 {
            return Err(ConfigError::new("max-evals", "must be at least 1"));
        }
        let axes = match get("axes") {
            Some(v) => {
                let a: Vec<usize> = parse_list("axes", v)?;
                if a.len() != 2 || a[0] == a[1] || a.iter().any(|&k| k < 1 || k > n) {
                    return Err(ConfigError::new(
                        "axes",
                        format!("need two distinct rate indices in 1..={n}"),
                    ));
                }
                (a[0], a[1])
            }
            None => (1, n),
        };
        let grid = match get("grid") {
            Some(v) => {
                let g: Vec<f64> = parse_list("grid", v)?;
                if g.len() != 3 || g[0] < 0.0 || g[1] < g[0] || g[2] < 1.0 || g[2].fract() != 0.0 {
                    return Err(ConfigError::new(
                        "grid",
                        "expected min,max,points with 0 <= min <= max and points >= 1",
                    ));
                }
                (g[0], g[1], g[2] as usize)
            }
            None => (0.0, 2.0, 21),
        };
        let q_steps: usize = get("qsteps")
            .map(|v| parse_one("qsteps", v))
            .transpose()?
            .unwrap_or(5);
        if q_steps < 2 {
            return Err(ConfigError::new("qsteps", "must be at least 2"));
        }

        Ok(Self {
            n,
            gamma,
            kind,
            codes,
            t_max,
            t_steps,
            samples,
            seed,
            out: get("out").map(str::to_string),
            sampler,
            times,
            t_star,
            restarts,
            objective,
            max_evaluations,
            axes,
            grid,
            q_steps,
        })
    }

    pub fn rates(&self) -> RateProfile {
        RateProfile::new(self.gamma.clone(), self.kind).expect("validated at construction")
    }

    pub fn time_grid(&self) -> Vec<f64> {
        let last = (self.t_steps - 1) as f64;
        (0..self.t_steps)
            .map(|i| self.t_max * i as f64 / last)
            .collect()
    }

    fn metadata(&self, command: &str) -> Vec<(String, String)> {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut m = vec![
            ("tool".into(), format!("corrqec {TOOL_VERSION}")),
            ("command".into(), command.into()),
            ("n".into(), self.n.to_string()),
            ("gamma".into(), join(&self.gamma)),
            ("kind".into(), self.kind.name().into()),
            (
                "code".into(),
                self.codes
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("tmax".into(), self.t_max.to_string()),
            ("steps".into(), self.t_steps.to_string()),
            ("samples".into(), self.samples.to_string()),
            ("seed".into(), self.seed.to_string()),
            (
                "sampler".into(),
                format!("{:?}", self.sampler).to_lowercase(),
            ),
        ];
        if let Some(ts) = &self.times {
            m.push(("times".into(), join(ts)));
        }
        m.extend([
            ("tstar".into(), self.t_star.to_string()),
            ("restarts".into(), self.restarts.to_string()),
            (
                "objective".into(),
                format!("{:?}", self.objective).to_lowercase(),
            ),
            ("max-evals".into(), self.max_evaluations.to_string()),
            ("axes".into(), format!("{},{}", self.axes.0, self.axes.1)),
            (
                "grid".into(),
                format!("{},{},{}", self.grid.0, self.grid.1, self.grid.2),
            ),
            ("qsteps".into(), self.q_steps.to_string()),
        ]);
        m
    }
}

/// Rates used in the reference examples for 3 and 4 qubits.
pub fn default_gamma(n: usize) -> Option<Vec<f64>> {
    match n {
        3 => Some(vec![0.2, 0.2, 1.0]),
        4 => Some(vec![0.2, 0.3, 0.1, 2.0]),
        _ => None,
    }
}

fn default_codes(n: usize) -> Vec<CodePreset> {
    if n == 4 {
        vec![
            CodePreset::Repetition,
            CodePreset::AntiAligned4,
            CodePreset::Rotated(0),
        ]
    } else {
        vec![CodePreset::Repetition, CodePreset::Rotated(0)]
    }
}

fn default_time_grid(n: usize) -> (f64, usize) {
    if n == 4 {
        (0.5, 101)
    } else {
        (3.0, 301)
    }
}

/// Time points at which the reference probability tables are tabulated.
pub fn default_table_times(n: usize) -> Option<Vec<f64>> {
    match n {
        3 => Some(vec![0.0, 0.1, 0.2, 0.4, 0.6]),
        4 => Some(vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4]),
        _ => None,
    }
}

/// CSV text with a `#`-prefixed metadata block.
#[derive(Debug, Clone, Default)]
pub struct CsvDocument {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footer: Vec<String>,
}

impl CsvDocument {
    fn new(metadata: Vec<(String, String)>, header: Vec<String>) -> Self {
        Self {
            metadata,
            header,
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
        for line in &self.footer {
            let _ = writeln!(out, "# {line}");
        }
        out
    }
}

// Shortest round-trip form, with exponent notation for very small or large
// magnitudes.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn build_codes(config: &ExperimentConfig) -> Result<Vec<Code>, ExperimentError> {
    Ok(config
        .codes
        .iter()
        .map(|c| c.build(config.n, config.kind))
        .collect::<Result<Vec<_>, _>>()?)
}

/// Negativity and deviation of each code's probe along a time grid.
#[derive(Debug, Clone)]
pub struct DecayTable {
    pub codes: Vec<CodePreset>,
    pub times: Vec<f64>,
    /// `negativity[c][i]` for code `c` at `times[i]`.
    pub negativity: Vec<Vec<f64>>,
    /// `delta_c` with the code projector as reference.
    pub delta_projector: Vec<Vec<f64>>,
    /// `delta_c` with the reduced probe state `P/2` as reference.
    pub delta_reduced: Vec<Vec<f64>>,
}

pub fn run_decay(config: &ExperimentConfig) -> Result<DecayTable, ExperimentError> {
    let rates = config.rates();
    let codes = build_codes(config)?;
    let times = config.time_grid();
    let probes: Vec<_> = codes.iter().map(probe_state).collect();
    let reduced: Vec<CMatrix> = codes.iter().map(reduced_reference).collect();

    type Point = Vec<(f64, f64, f64)>;
    let per_time: Vec<Point> = times
        .par_iter()
        .map(|&t| -> Result<Point, ExperimentError> {
            let kraus = kraus_set(&rates, t)?;
            codes
                .iter()
                .zip(&probes)
                .zip(&reduced)
                .map(|((code, probe), red)| {
                    let rho = apply_channel(&probe.rho, &kraus, probe.split)?;
                    let neg = negativity(&rho, probe.split)?;
                    let dp = deviation(code.projector(), &kraus.elements)?.delta_c;
                    let dr = deviation(red, &kraus.elements)?.delta_c;
                    Ok((neg, dp, dr))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let column =
        |c: usize, f: fn(&(f64, f64, f64)) -> f64| per_time.iter().map(|row| f(&row[c])).collect();
    let n_codes = codes.len();
    Ok(DecayTable {
        codes: config.codes.clone(),
        times,
        negativity: (0..n_codes).map(|c| column(c, |x| x.0)).collect(),
        delta_projector: (0..n_codes).map(|c| column(c, |x| x.1)).collect(),
        delta_reduced: (0..n_codes).map(|c| column(c, |x| x.2)).collect(),
    })
}

impl DecayTable {
    pub fn to_csv(&self, config: &ExperimentConfig) -> String {
        let mut header = vec!["t".to_string()];
        for prefix in ["negativity", "delta_P", "delta_red"] {
            header.extend(self.codes.iter().map(|c| format!("{prefix}[{c}]")));
        }
        let mut doc = CsvDocument::new(config.metadata("decay"), header);
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt(*t)];
            for series in [&self.negativity, &self.delta_projector, &self.delta_reduced] {
                row.extend(series.iter().map(|s| fmt(s[i])));
            }
            doc.rows.push(row);
        }
        doc.render()
    }
}

/// Initial rates of `delta_c` (reduced-state reference) and negativity over
/// randomly transformed codes.
#[derive(Debug, Clone)]
pub struct ScatterResult {
    pub delta_rates: Vec<f64>,
    pub negativity_rates: Vec<f64>,
    /// Correlation between the `delta_c` rate and the negativity decay rate
    /// (`-dN/dt`).
    pub pearson_r: f64,
}

fn sample_unitary(seed: u64, index: u64, dim: usize) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    haar_unitary(dim, &mut rng)
}

pub fn run_scatter(config: &ExperimentConfig) -> Result<ScatterResult, ExperimentError> {
    if config.samples < 2 {
        return Err(ConfigError::new("samples", "scatter needs at least 2 samples").into());
    }
    let rates = config.rates();
    let base = config.codes[0].build(config.n, config.kind)?;
    let dim = base.dim();
    let k0 = kraus_set(&rates, 0.0)?;
    let kh = kraus_set(&rates, DEFAULT_RATE_STEP)?;
    let kh2 = kraus_set(&rates, DEFAULT_RATE_STEP / 2.0)?;

    let points: Vec<(f64, f64)> = (0..config.samples as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64), ExperimentError> {
            let code = match config.sampler {
                Sampler::Haar => {
                    let u = noise_frame(&sample_unitary(config.seed, i, dim), config.kind);
                    transform_code(&base, &u)?
                }
                Sampler::Identity => base.clone(),
            };
            let d_rate = delta_slope(&rates, &reduced_reference(&code))?.forward;
            let probe = probe_state(&code);
            let neg_at = |t: f64| {
                let k = if t == 0.0 {
                    &k0
                } else if t == DEFAULT_RATE_STEP {
                    &kh
                } else {
                    &kh2
                };
                apply_channel(&probe.rho, k, probe.split)
                    .ok()
                    .and_then(|rho| negativity(&rho, probe.split).ok())
                    .unwrap_or(f64::NAN)
            };
            let n_rate = initial_rate(neg_at, DEFAULT_RATE_STEP)?.forward;
            if n_rate.is_nan() {
                return Err(ExperimentError::Consistency(format!(
                    "negativity failed for sample {i}"
                )));
            }
            Ok((d_rate, n_rate))
        })
        .collect::<Result<_, _>>()?;

    let delta_rates: Vec<f64> = points.iter().map(|p| p.0).collect();
    let negativity_rates: Vec<f64> = points.iter().map(|p| p.1).collect();
    let decay: Vec<f64> = negativity_rates.iter().map(|x| -x).collect();
    Ok(ScatterResult {
        pearson_r: pearson(&delta_rates, &decay),
        delta_rates,
        negativity_rates,
    })
}

impl ScatterResult {
    pub fn to_csv(&self, config: &ExperimentConfig) -> String {
        let header = ["sample", "d_delta_dt", "d_negativity_dt"]
            .map(String::from)
            .to_vec();
        let mut doc = CsvDocument::new(config.metadata("scatter"), header);
        for (i, (d, n)) in self
            .delta_rates
            .iter()
            .zip(&self.negativity_rates)
            .enumerate()
        {
            doc.rows.push(vec![i.to_string(), fmt(*d), fmt(*n)]);
        }
        doc.footer
            .push(format!("summary pearson_r={}", self.pearson_r));
        doc.render()
    }
}

/// Grouped probabilities `C(n,k) p_k` at a list of times.
#[derive(Debug, Clone)]
pub struct ProbabilityTable {
    pub n: usize,
    pub times: Vec<f64>,
    pub probabilities: Vec<ErrorProbabilities>,
}

impl ProbabilityTable {
    /// Row labels: `p0`, `3p1`, `3p2`, `p3` for three qubits.
    pub fn labels(&self) -> Vec<String> {
        (0..=self.n)
            .map(|k| match crate::channel::binomial(self.n, k) {
                1 => format!("p{k}"),
                c => format!("{c}p{k}"),
            })
            .collect()
    }

    /// `grouped[k][i]` for weight `k` at `times[i]`.
    pub fn grouped(&self) -> Vec<Vec<f64>> {
        let cols: Vec<Vec<f64>> = self.probabilities.iter().map(|p| p.grouped()).collect();
        (0..=self.n)
            .map(|k| cols.iter().map(|c| c[k]).collect())
            .collect()
    }

    pub fn to_csv(&self, config: &ExperimentConfig) -> String {
        let header = ["quantity", "t", "value_2dp", "value"]
            .map(String::from)
            .to_vec();
        let mut doc = CsvDocument::new(config.metadata("tables"), header);
        for (label, row) in self.labels().iter().zip(self.grouped()) {
            for (t, v) in self.times.iter().zip(row) {
                doc.rows
                    .push(vec![label.clone(), fmt(*t), format!("{v:.2}"), fmt(v)]);
            }
        }
        doc.render()
    }
}

fn table_times(config: &ExperimentConfig) -> Vec<f64> {
    config
        .times
        .clone()
        .or_else(|| default_table_times(config.n))
        .unwrap_or_else(|| config.time_grid())
}

pub fn run_tables(config: &ExperimentConfig) -> Result<ProbabilityTable, ExperimentError> {
    let rates = config.rates();
    let times = table_times(config);
    let probabilities = times
        .iter()
        .map(|&t| error_probabilities(&rates, t))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &probabilities {
        if (p.total() - 1.0).abs() > CONSISTENCY_TOL {
            return Err(ExperimentError::Consistency(format!(
                "grouped probabilities at t={} sum to {}",
                p.t,
                p.total()
            )));
        }
    }
    Ok(ProbabilityTable {
        n: config.n,
        times,
        probabilities,
    })
}

/// Per-string probabilities over the time grid, cross-checked against trace
/// preservation and, for three qubits, the closed-form expressions.
pub fn run_probabilities(config: &ExperimentConfig) -> Result<String, ExperimentError> {
    let rates = config.rates();
    let times = config.times.clone().unwrap_or_else(|| config.time_grid());
    let n = config.n;
    let mut header = vec!["t".to_string()];
    header.extend((0..=n).map(|k| format!("p{k}")));
    let table = ProbabilityTable {
        n,
        times: vec![],
        probabilities: vec![],
    };
    header.extend(table.labels().into_iter().map(|l| format!("grouped_{l}")));
    header.push("total".into());
    let mut meta = config.metadata("probabilities");
    for label in kraus_labels(n, config.kind) {
        meta.push(("kraus".into(), label));
    }
    let mut doc = CsvDocument::new(meta, header);
    for &t in &times {
        let p = error_probabilities(&rates, t)?;
        let total = p.total();
        if (total - 1.0).abs() > CONSISTENCY_TOL {
            return Err(ExperimentError::Consistency(format!(
                "probabilities at t={t} sum to {total}"
            )));
        }
        if n == 3 {
            let cf = three_qubit_closed_form(rates.gamma(1), rates.gamma(2), rates.gamma(3), t);
            let worst =
                p.p.iter()
                    .zip(cf)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
            if worst > CONSISTENCY_TOL {
                return Err(ExperimentError::Consistency(format!(
                    "closed form disagrees with Krawtchouk inversion by {worst:e} at t={t}"
                )));
            }
        }
        let mut row = vec![fmt(t)];
        row.extend(p.p.iter().map(|x| fmt(*x)));
        row.extend(p.grouped().iter().map(|x| fmt(*x)));
        row.push(fmt(total));
        doc.rows.push(row);
    }
    Ok(doc.render())
}

#[derive(Debug, Clone)]
pub struct RegimePoint {
    pub gamma: Vec<f64>,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rotated_optimal: bool,
}

/// Evaluates the regime inequality over a 2-D grid of two chosen rates,
/// holding the others at their configured values.
pub fn run_regime_map(config: &ExperimentConfig) -> Result<Vec<RegimePoint>, ExperimentError> {
    let (lo, hi, points) = config.grid;
    let axis = |i: usize| {
        if points == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (points - 1) as f64
        }
    };
    let times = config.times.clone().unwrap_or_else(|| vec![0.1]);
    let mut jobs = Vec::new();
    for i in 0..points {
        for j in 0..points {
            for &t in &times {
                let mut gamma = config.gamma.clone();
                gamma[config.axes.0 - 1] = axis(i);
                gamma[config.axes.1 - 1] = axis(j);
                jobs.push((gamma, t));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(gamma, t)| {
            let rates = RateProfile::new(gamma.clone(), config.kind)?;
            let v = regime_inequality(&error_probabilities(&rates, t)?);
            Ok(RegimePoint {
                gamma,
                t,
                lhs: v.lhs,
                rhs: v.rhs,
                rotated_optimal: v.rotated_optimal,
            })
        })
        .collect()
}

pub fn regime_map_csv(points: &[RegimePoint], config: &ExperimentConfig) -> String {
    let mut header: Vec<String> = (1..=config.n).map(|k| format!("gamma{k}")).collect();
    header.extend(["t", "lhs", "rhs", "rotated_optimal"].map(String::from));
    let mut doc = CsvDocument::new(config.metadata("regime-map"), header);
    for p in points {
        let mut row: Vec<String> = p.gamma.iter().map(|g| fmt(*g)).collect();
        row.extend([
            fmt(p.t),
            fmt(p.lhs),
            fmt(p.rhs),
            p.rotated_optimal.to_string(),
        ]);
        doc.rows.push(row);
    }
    doc.render()
}

#[derive(Debug, Clone)]
pub struct RecoveryCheckRow {
    pub q2: f64,
    pub q3: f64,
    pub rotated_satisfied: bool,
    pub rotated_violation: f64,
    pub standard_satisfied: bool,
    pub standard_violation: f64,
}

/// `q_steps x q_steps` grid over the valid region. `q3` spans `[0, 1]`; for
/// each `q3` the admissible `q2` band `[(1 - q3)/3, (2 - q3)/3]` is cut into
/// `q_steps` cells and sampled at their midpoints. This skips the corner
/// `(1/3, 0)`, where the set acts on the last two qubits only and the
/// standard code corrects it too.
pub fn recovery_grid(q_steps: usize) -> Vec<RecoveryParams> {
    let mut out = Vec::with_capacity(q_steps * q_steps);
    for j in 0..q_steps {
        let q3 = j as f64 / (q_steps - 1) as f64;
        for i in 0..q_steps {
            let q2 = (1.0 - q3) / 3.0 + (i as f64 + 0.5) / (3.0 * q_steps as f64);
            out.push(RecoveryParams::new(q2, q3).expect("grid stays inside the valid region"));
        }
    }
    out
}

/// Knill–Laflamme verdicts of the parameterized error set for the rotated
/// and standard three-qubit codes (dephasing basis).
pub fn run_recovery_check(
    config: &ExperimentConfig,
) -> Result<Vec<RecoveryCheckRow>, ExperimentError> {
    let rotated = CodePreset::Rotated(0).build(3, ErrorKind::Dephasing)?;
    let standard = CodePreset::Repetition.build(3, ErrorKind::Dephasing)?;
    recovery_grid(config.q_steps)
        .into_iter()
        .map(|params| {
            let set = recovery_error_set(&params);
            let r = kl_check(&rotated, &set, KL_TOL)?;
            let s = kl_check(&standard, &set, KL_TOL)?;
            Ok(RecoveryCheckRow {
                q2: params.q2(),
                q3: params.q3(),
                rotated_satisfied: r.satisfied,
                rotated_violation: r.max_violation,
                standard_satisfied: s.satisfied,
                standard_violation: s.max_violation,
            })
        })
        .collect()
}

pub fn recovery_check_csv(rows: &[RecoveryCheckRow], config: &ExperimentConfig) -> String {
    let header = [
        "q2",
        "q3",
        "rotated_kl",
        "rotated_max_violation",
        "standard_kl",
        "standard_max_violation",
    ]
    .map(String::from)
    .to_vec();
    let mut doc = CsvDocument::new(config.metadata("recovery-check"), header);
    for r in rows {
        doc.rows.push(vec![
            fmt(r.q2),
            fmt(r.q3),
            r.rotated_satisfied.to_string(),
            fmt(r.rotated_violation),
            r.standard_satisfied.to_string(),
            fmt(r.standard_violation),
        ]);
    }
    doc.render()
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub result: OptimizationResult,
    pub objective: ObjectiveKind,
    /// Negativity curve of the optimized code and of every configured preset.
    pub times: Vec<f64>,
    pub optimized_curve: Vec<f64>,
    pub preset_curves: Vec<(CodePreset, Vec<f64>)>,
}

/// Optimizes an encoding of the first configured code and replays the
/// resulting negativity decay next to every configured preset.
pub fn run_optimize(config: &ExperimentConfig) -> Result<OptimizeReport, ExperimentError> {
    let rates = config.rates();
    let base = config.codes[0].build(config.n, config.kind)?;
    let objective = match config.objective {
        ObjectiveChoice::Negativity => ObjectiveKind::NegativityAt(config.t_star),
        ObjectiveChoice::DeltaSlope => ObjectiveKind::DeltaSlope,
    };
    let mut opts = OptimizeOptions::new(config.restarts, config.seed);
    opts.nelder_mead.max_evaluations = config.max_evaluations;
    let result = optimize_code(&rates, &base, objective, &opts)?;
    let times = config.time_grid();
    let optimized_curve = replay_negativity(&result.best_generator, &rates, &base, &times)?;
    let zero = CMatrix::zeros(base.dim(), base.dim());
    let preset_curves = config
        .codes
        .iter()
        .map(|p| -> Result<_, ExperimentError> {
            let code = p.build(config.n, config.kind)?;
            Ok((*p, replay_negativity(&zero, &rates, &code, &times)?))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OptimizeReport {
        result,
        objective,
        times,
        optimized_curve,
        preset_curves,
    })
}

impl OptimizeReport {
    pub fn to_csv(&self, config: &ExperimentConfig) -> String {
        let mut meta = config.metadata("optimize");
        let r = &self.result;
        meta.push(("best_objective".into(), fmt(r.best_objective)));
        meta.push(("best_start".into(), r.best_start.to_string()));
        meta.push(("evaluations".into(), r.evaluations.to_string()));
        meta.push(("result_seed".into(), r.seed.to_string()));
        meta.push((
            "best_generator_params".into(),
            crate::optimize::params_from_generator(&r.best_generator)
                .iter()
                .map(|x| fmt(*x))
                .collect::<Vec<_>>()
                .join(";"),
        ));
        let mut header = vec!["t".to_string(), "negativity[optimized]".to_string()];
        header.extend(
            self.preset_curves
                .iter()
                .map(|(p, _)| format!("negativity[{p}]")),
        );
        let mut doc = CsvDocument::new(meta, header);
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt(*t), fmt(self.optimized_curve[i])];
            row.extend(self.preset_curves.iter().map(|(_, c)| fmt(c[i])));
            doc.rows.push(row);
        }
        doc.render()
    }
}

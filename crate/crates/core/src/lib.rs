//! Approximate quantum error correction under correlated dephasing and
//! bitflip noise.
//!
//! The crate builds n-qubit channels with independent and correlated errors
//! from per-weight Lindblad rates, evaluates how far a code is from
//! satisfying the Knill–Laflamme conditions, tracks the negativity of an
//! ancilla-entangled probe state as it decays, and compares the repetition
//! code with its single-qubit rotated variant.
//!
//! ```
//! use corrqec_core::channel::{apply_channel, kraus_set, RateProfile};
//! use corrqec_core::codes::{probe_state, repetition_code, rotated_code};
//! use corrqec_core::metrics::negativity;
//!
//! let rates = RateProfile::dephasing(&[0.2, 0.2, 1.0]).unwrap();
//! let kraus = kraus_set(&rates, 0.5).unwrap();
//! let n = |code| {
//!     let probe = probe_state(&code);
//!     let rho = apply_channel(&probe.rho, &kraus, probe.split).unwrap();
//!     negativity(&rho, probe.split).unwrap()
//! };
//! assert!(n(rotated_code(3, 0).unwrap()) > n(repetition_code(3).unwrap()));
//! ```

pub mod channel;
pub mod codes;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod optimize;
pub mod recovery;

pub use channel::{ErrorKind, ErrorProbabilities, KrausSet, RateProfile};
pub use codes::{Code, CodePreset, ProbeState};
pub use linalg::{CMatrix, DimSplit, C64};
pub use metrics::DeviationReport;
pub use optimize::OptimizationResult;
pub use recovery::RecoveryParams;

//! Identification of harmonic transfer functions from sideband frequency
//! responses and closed-loop pole analysis of stabilization feedback for
//! periodically pumped linear systems.
//!
//! Pipeline: [`freqdata`] (sideband data and Hermitian transform) →
//! [`vecfit`] (common-pole rational fitting) → [`htf`] (truncation and
//! matrix assembly) → [`feedback`] (pole loci versus a resistor value).
//! [`oracle`] provides exact references built from Fourier-coefficient
//! state-space models.

pub mod error;
pub mod feedback;
pub mod freqdata;
pub mod htf;
pub mod linalg;
pub mod oracle;
pub mod poles;
pub mod vecfit;

pub use error::{Error, Result};
pub use feedback::{FeedbackSpec, PoleLocus, PoleRecord, StabilityReport, Topology};
pub use freqdata::{FrequencyGrid, HermitianResponseSet, ResponseKind, SidebandResponseSet};
pub use htf::{CentralColumn, HarmonicTransferFunction, TruncationReport};
pub use num_complex::Complex64;
pub use oracle::{HarmonicStateSpace, MathieuSpec, PltvSystem};
pub use poles::StripPole;
pub use vecfit::{CoeffField, FitConfig, RationalModel, StateSpaceRealization, Weighting};

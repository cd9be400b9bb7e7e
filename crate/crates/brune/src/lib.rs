//! Brune synthesis and quantization of multiport impedance models.
//!
//! The pipeline goes from sampled impedance data to a physical lumped
//! circuit and on to a quantized Hamiltonian with dissipation spectra:
//!
//! 1. [`fitting`] fits samples to a stable pole-residue model (vector
//!    fitting) and enforces passivity on a frequency grid.
//! 2. [`model`] turns the fit into a real state-space realization and
//!    checks the positive-real property.
//! 3. [`oneport`] / [`multiport`] run the state-space Brune recursion,
//!    peeling resistor + transformer + LC stages until only a resistive
//!    termination remains.
//! 4. [`loops`] eliminates the ideal transformers, producing real-valued
//!    effective Kirchhoff loop matrices.
//! 5. [`quantize`] assembles capacitance/stiffness matrices and harmonic
//!    normal modes; [`dissipation`] attaches Caldeira-Leggett baths and
//!    estimates relaxation rates.
//!
//! File formats and the CLI driver live in [`io`] and [`pipeline`].

pub mod dissipation;
pub mod error;
pub mod fitting;
pub mod grid;
pub mod io;
pub mod loops;
pub mod model;
pub mod multiport;
pub mod oneport;
pub mod pipeline;
pub mod quantize;
pub mod synthetic;

pub use error::{Error, Result};
pub use grid::GridSpec;
pub use model::{
    check_positive_real, companion_realization, FrequencySamples, PoleResidueModel, PrReport,
    PrVerdict, StateSpaceModel,
};

//! Classical and quantum Lagrangian descriptors for the Hamiltonian saddle
//! `H = (λ/2)(p² − q²)`.
//!
//! The classical descriptor integrates `|q|^{1/2} + |p|^{1/2}` along exact
//! trajectories. The quantum descriptor averages the same integrand over
//! Gaussian fluctuations sampled on the rotated contour, truncated to `N`
//! sine modes on `[−T, T]`.

pub mod classical;
pub mod error;
pub mod experiments;
pub mod io;
pub mod rng;
pub mod saddle;
pub mod spectrum;
pub mod thimble;

pub use classical::{ClassicalLd, FieldKind, FieldMeta, GridSpec, LdField, Quadrature, QuadratureRule};
pub use error::{Error, Result};
pub use saddle::{PhasePoint, SaddleParams, TimeGrid};
pub use spectrum::ModeBasis;
pub use thimble::{SampleSharing, SamplerConfig, ThimbleSampler};

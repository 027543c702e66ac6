//! Spin squeezing of atomic ensembles in optical cavities.
//!
//! Bichromatic drives on a three-level ensemble in a cavity realize, after
//! adiabatic elimination of the excited state and the cavity field, either a
//! one-axis twisting or a two-axis countertwisting interaction on the
//! collective spin, together with collective (cavity) and local (spontaneous
//! emission) decay channels. This crate builds that effective model from
//! physical parameters, integrates the linearized second-moment equations of
//! motion, validates them against exact solvers on the Dicke ladder, and
//! optimizes squeezing and squeezing-operation fidelity over the drive
//! parameters.
//!
//! Modules:
//! - [`model`]: physical parameters -> effective Hamiltonian/Lindblad
//!   coefficients, drive tuning, validity margins.
//! - [`moments`]: linearized moment dynamics and the squeezing parameter.
//! - [`dicke`]: exact pure-state, collective-Lindblad, and tiny-N
//!   product-space reference solvers.
//! - [`estimates`]: closed-form scaling estimates (optimal detuning,
//!   squeezing time, attainable squeezing).
//! - [`gaussian`]: canonical-quadrature Gaussian states, ideal squeezing,
//!   and single-mode fidelity.
//! - [`cli`]: scenario configs, squeezing/fidelity optimization campaigns,
//!   and figure-style dataset emission.
//!
//! Every runnable capability has a corresponding program under `examples/`.

pub mod cli;
pub mod dicke;
pub mod estimates;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod ode;
pub mod opt;
pub mod scheme;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("delta and kappa_tilde are both zero: effective coefficients diverge")]
    ZeroResolvent,

    #[error("required drive exceeds weak-drive cap: |Omega|/Delta = {required:.3e} > {cap:.3e}")]
    WeakDriveCap { required: f64, cap: f64 },

    #[error("planar limit violated: <J_z> = {jz:.3e} is not positive enough")]
    PlanarLimit { jz: f64 },

    #[error("state dimension {n} exceeds the guard ({max}) for the product-space solver")]
    DimensionGuard { n: u64, max: u64 },

    #[error("unphysical state: {0}")]
    Unphysical(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

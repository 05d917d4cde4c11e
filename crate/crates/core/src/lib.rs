//! Matter-wave-mediated tunnelling of a driven ultracold atom among lattice
//! sites coupled through a shared one-dimensional continuum.
//!
//! Units are dimensionless: frequencies in the trap frequency ω̃, lengths in
//! the oscillator length z̄, times in 1/ω̃.
//!
//! * [`kernel`]: J(ω), f(t), f̃(s) and the branch decomposition D(s).
//! * [`spectrum`]: BOCs, BICs, residue weights, scans, phase diagram.
//! * [`dynamics`]: Volterra and Markov evolution, long-time asymptotics.
//! * [`oracle`]: exact diagonalisation of a discretised continuum.

pub mod dynamics;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod spectrum;

pub use dynamics::{
    asymptotic_form, compare_longtime, markov_solution, solve_volterra, AmplitudeTrajectory, AsymptoticForm,
    DynamicsError, VolterraOptions,
};
pub use kernel::{BranchDecomposition, Kernel, KernelError};
pub use model::{LatticeConfig, ModelError, ScenarioConfig, UnitSystem};
pub use oracle::{exact_evolution, DiscretizedSystem, OracleError, OracleOptions};
pub use spectrum::{
    find_bics, find_bocs, phase_diagram, scan_spectrum, BoundKind, BoundState, SpectrumError, Thresholds,
};

use thiserror::Error;

/// Any failure of the library, split into input and numerical errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl Error {
    /// True for schema or validation problems with the input, as opposed to
    /// numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Model(_)
                | Error::Spectrum(SpectrumError::InvalidGrid(_))
                | Error::Spectrum(SpectrumError::AnalyticUnavailable(_))
                | Error::Dynamics(DynamicsError::InvalidStep { .. })
                | Error::Oracle(OracleError::InvalidOptions(_))
        )
    }
}

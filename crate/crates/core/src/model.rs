//! Scenario description shared by every other module.
//!
//! Everything is dimensionless: frequencies in units of the trap frequency
//! ω̃, lengths in units of the oscillator length z̄ = √(ħ/(mω̃)), and time in
//! units of 1/ω̃.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest separation (in z̄) for which neglecting the overlap of trapped
/// wave functions on neighbouring sites is reasonable.
pub const MIN_SEPARATION: f64 = 2.0;

/// Physical scales used to convert dimensionless results back to SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// ω̃ / 2π in Hz.
    pub trap_frequency_hz: f64,
    /// z̄ in metres.
    pub oscillator_length_m: f64,
    /// Informational only: bare frequency of the trapped state, Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bare_frequency_a_hz: Option<f64>,
    /// Informational only: bare frequency of the free state, Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bare_frequency_b_hz: Option<f64>,
    /// Informational only: drive frequency, Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive_frequency_hz: Option<f64>,
}

impl Default for UnitSystem {
    /// 40 kHz trap, z̄ = 0.065 nm.
    fn default() -> Self {
        Self {
            trap_frequency_hz: 40e3,
            oscillator_length_m: 0.065e-9,
            bare_frequency_a_hz: None,
            bare_frequency_b_hz: None,
            drive_frequency_hz: None,
        }
    }
}

impl UnitSystem {
    pub fn new(trap_frequency_hz: f64, oscillator_length_m: f64) -> Result<Self, ModelError> {
        let units = Self {
            trap_frequency_hz,
            oscillator_length_m,
            ..Self::default()
        };
        units.check()?;
        Ok(units)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(self.trap_frequency_hz > 0.0 && self.trap_frequency_hz.is_finite()) {
            return Err(ModelError::Units(format!(
                "trap_frequency_hz must be positive, got {}",
                self.trap_frequency_hz
            )));
        }
        if !(self.oscillator_length_m > 0.0 && self.oscillator_length_m.is_finite()) {
            return Err(ModelError::Units(format!(
                "oscillator_length_m must be positive, got {}",
                self.oscillator_length_m
            )));
        }
        Ok(())
    }

    /// ω̃ in rad/s.
    pub fn angular_trap_frequency(&self) -> f64 {
        2.0 * PI * self.trap_frequency_hz
    }

    /// Angular frequency (rad/s) to units of ω̃.
    pub fn frequency_to_dimensionless(&self, omega_rad_s: f64) -> f64 {
        omega_rad_s / self.angular_trap_frequency()
    }

    pub fn frequency_to_physical(&self, omega: f64) -> f64 {
        omega * self.angular_trap_frequency()
    }

    pub fn length_to_dimensionless(&self, metres: f64) -> f64 {
        metres / self.oscillator_length_m
    }

    pub fn length_to_physical(&self, length: f64) -> f64 {
        length * self.oscillator_length_m
    }

    pub fn time_to_dimensionless(&self, seconds: f64) -> f64 {
        seconds * self.angular_trap_frequency()
    }

    pub fn time_to_physical(&self, time: f64) -> f64 {
        time / self.angular_trap_frequency()
    }

    /// ω0 = ω_a + ω̃/2 − ω_b + ω_L from the optional metadata, in units of ω̃.
    pub fn detuning_from_metadata(&self) -> Option<f64> {
        let (a, b, l) = (
            self.bare_frequency_a_hz?,
            self.bare_frequency_b_hz?,
            self.drive_frequency_hz?,
        );
        Some((a - b + l) / self.trap_frequency_hz + 0.5)
    }
}

/// The physical scenario in dimensionless units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Site positions z_j / z̄, strictly increasing.
    #[serde(rename = "positions_zbar")]
    pub positions: Vec<f64>,
    /// ω0 / ω̃.
    #[serde(rename = "omega0_wtilde")]
    pub detuning: f64,
    /// Ω / ω̃.
    #[serde(rename = "omega_rabi_wtilde")]
    pub drive: f64,
    /// 1-based index of the initially occupied site.
    #[serde(default = "default_initial_site")]
    pub initial_site: usize,
    /// Optional normalised superposition replacing the single occupied site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_amplitudes: Option<Vec<[f64; 2]>>,
}

fn default_initial_site() -> usize {
    1
}

/// One violated invariant of a [`LatticeConfig`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoSites,
    PositionsNotIncreasing { index: usize },
    NonFinite(&'static str),
    NegativeDrive(f64),
    InitialSiteOutOfRange { site: usize, n_sites: usize },
    SiteCountMismatch { declared: usize, positions: usize },
    InitialAmplitudes(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSites => write!(f, "at least one site is required"),
            Violation::PositionsNotIncreasing { index } => {
                write!(f, "positions not strictly increasing at index {index}")
            }
            Violation::NonFinite(what) => write!(f, "{what} must be finite"),
            Violation::NegativeDrive(v) => write!(f, "drive must be non-negative, got {v}"),
            Violation::InitialSiteOutOfRange { site, n_sites } => {
                write!(f, "initial site {site} outside [1, {n_sites}]")
            }
            Violation::SiteCountMismatch { declared, positions } => {
                write!(f, "n_sites = {declared} but {positions} positions given")
            }
            Violation::InitialAmplitudes(msg) => write!(f, "initial amplitudes: {msg}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid lattice configuration: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("invalid unit system: {0}")]
    Units(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl LatticeConfig {
    pub fn new(positions: Vec<f64>, detuning: f64, drive: f64) -> Self {
        Self {
            positions,
            detuning,
            drive,
            initial_site: 1,
            initial_amplitudes: None,
        }
    }

    /// `n_sites` sites at 0, d, 2d, ...
    pub fn uniform(n_sites: usize, spacing: f64, detuning: f64, drive: f64) -> Self {
        Self::new((0..n_sites).map(|j| j as f64 * spacing).collect(), detuning, drive)
    }

    pub fn with_initial_site(mut self, site: usize) -> Self {
        self.initial_site = site;
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_drive(mut self, drive: f64) -> Self {
        self.drive = drive;
        self
    }

    pub fn n_sites(&self) -> usize {
        self.positions.len()
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.positions.is_empty() {
            out.push(Violation::NoSites);
        }
        if self.positions.iter().any(|p| !p.is_finite()) {
            out.push(Violation::NonFinite("positions"));
        }
        for (i, w) in self.positions.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                out.push(Violation::PositionsNotIncreasing { index: i + 1 });
            }
        }
        if !self.detuning.is_finite() {
            out.push(Violation::NonFinite("detuning"));
        }
        if !self.drive.is_finite() {
            out.push(Violation::NonFinite("drive"));
        } else if self.drive < 0.0 {
            out.push(Violation::NegativeDrive(self.drive));
        }
        if self.initial_site < 1 || self.initial_site > self.n_sites() {
            out.push(Violation::InitialSiteOutOfRange {
                site: self.initial_site,
                n_sites: self.n_sites(),
            });
        }
        if let Some(amps) = &self.initial_amplitudes {
            if amps.len() != self.n_sites() {
                out.push(Violation::InitialAmplitudes(format!(
                    "{} amplitudes for {} sites",
                    amps.len(),
                    self.n_sites()
                )));
            } else {
                let norm: f64 = amps.iter().map(|[re, im]| re * re + im * im).sum();
                if (norm - 1.0).abs() > 1e-10 {
                    out.push(Violation::InitialAmplitudes(format!("norm {norm} differs from 1")));
                }
            }
        }
        out
    }

    /// Returns the config unchanged when every invariant holds.
    pub fn validate(self) -> Result<Self, ModelError> {
        let v = self.violations();
        if v.is_empty() {
            for w in self.warnings() {
                log::warn!("{w}");
            }
            Ok(self)
        } else {
            Err(ModelError::Invalid(v))
        }
    }

    /// Soft diagnostics that do not invalidate the config.
    pub fn warnings(&self) -> Vec<String> {
        let min = self
            .positions
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(f64::INFINITY, f64::min);
        if min < MIN_SEPARATION {
            vec![format!(
                "minimum site separation {min} z̄ is below {MIN_SEPARATION} z̄; \
                 wave-function overlap between sites is no longer negligible"
            )]
        } else {
            Vec::new()
        }
    }

    /// Matrix of |z_j − z_l| / z̄.
    pub fn separations(&self) -> DMatrix<f64> {
        let n = self.n_sites();
        DMatrix::from_fn(n, n, |j, l| (self.positions[j] - self.positions[l]).abs())
    }

    /// Common spacing when the sites are equally spaced (always for N ≤ 2).
    pub fn uniform_spacing(&self) -> Option<f64> {
        match self.n_sites() {
            0 => None,
            1 => Some(0.0),
            _ => {
                let d = self.positions[1] - self.positions[0];
                self.positions
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - d).abs() <= 1e-12 * d.abs().max(1.0))
                    .then_some(d)
            }
        }
    }

    /// Same lattice re-spaced uniformly at `spacing`, anchored at the first site.
    pub fn with_spacing(mut self, spacing: f64) -> Self {
        let z0 = self.positions.first().copied().unwrap_or(0.0);
        for (i, z) in self.positions.iter_mut().enumerate() {
            *z = z0 + i as f64 * spacing;
        }
        self
    }

    /// c(0) as a complex vector.
    pub fn initial_state(&self) -> DVector<Complex64> {
        match &self.initial_amplitudes {
            Some(a) => DVector::from_iterator(a.len(), a.iter().map(|[re, im]| Complex64::new(*re, *im))),
            None => {
                let mut c = DVector::from_element(self.n_sites(), Complex64::new(0.0, 0.0));
                c[self.initial_site - 1] = Complex64::new(1.0, 0.0);
                c
            }
        }
    }
}

/// JSON scenario form with the declared site count and unit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_sites: usize,
    #[serde(flatten)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub units: UnitSystem,
}

impl ScenarioConfig {
    pub fn from_lattice(lattice: LatticeConfig, units: UnitSystem) -> Self {
        Self {
            n_sites: lattice.n_sites(),
            lattice,
            units,
        }
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        let mut v = self.lattice.violations();
        if self.n_sites != self.lattice.n_sites() {
            v.push(Violation::SiteCountMismatch {
                declared: self.n_sites,
                positions: self.lattice.n_sites(),
            });
        }
        if !v.is_empty() {
            return Err(ModelError::Invalid(v));
        }
        self.units.check()?;
        Ok(self)
    }
}

//! Brute-force reference: the continuum is replaced by K plane waves
//! k_n = 2πn/L, n ∈ [−K/2, K/2), in a periodic box of length L, and the
//! resulting finite Hamiltonian is diagonalised exactly.
//!
//! Each ±k pair is rotated into a cos/sin pair so the Hamiltonian is real
//! symmetric, and modes whose coupling to every site is negligible are
//! dropped: they are eigenstates of H on their own and never populated.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::AmplitudeTrajectory;
use crate::model::LatticeConfig;
use crate::spectrum::Thresholds;

pub const DEFAULT_BOX_LENGTH: f64 = 400.0;
pub const DEFAULT_MODES: usize = 4096;
/// Relative coupling below which a mode is treated as decoupled.
pub const DEFLATION: f64 = 1e-14;
/// Largest mode count for which the plane-wave Hamiltonian may be built.
pub const PLANE_WAVE_LIMIT: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle options: {0}")]
    InvalidOptions(String),
    #[error("Nyquist mode k = {k:.3} still couples with relative strength {ratio:.3e}; increase K or decrease L")]
    UnderResolved { k: f64, ratio: f64 },
    #[error("plane-wave Hamiltonian of {modes} modes exceeds the limit of {limit}")]
    TooLarge { modes: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub box_length: f64,
    pub n_modes: usize,
    pub deflation: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            box_length: DEFAULT_BOX_LENGTH,
            n_modes: DEFAULT_MODES,
            deflation: DEFLATION,
        }
    }
}

impl OracleOptions {
    pub fn new(box_length: f64, n_modes: usize) -> Self {
        Self {
            box_length,
            n_modes,
            ..Self::default()
        }
    }
}

/// Sites plus the retained real modes.
#[derive(Debug, Clone)]
pub struct DiscretizedSystem {
    config: LatticeConfig,
    options: OracleOptions,
    /// ω_m = k_m²/2 of the retained modes.
    pub mode_energies: Vec<f64>,
    /// N × M real couplings of site j to retained mode m.
    pub couplings: DMatrix<f64>,
    /// Modes dropped as decoupled.
    pub deflated: usize,
}

impl DiscretizedSystem {
    pub fn build(config: &LatticeConfig, options: &OracleOptions) -> Result<Self, OracleError> {
        let l = options.box_length;
        let k_modes = options.n_modes;
        if !(l > 0.0) || !l.is_finite() {
            return Err(OracleError::InvalidOptions(format!("box length {l}")));
        }
        if k_modes < 2 || !k_modes.is_multiple_of(2) {
            return Err(OracleError::InvalidOptions(format!(
                "mode count {k_modes} must be even and ≥ 2"
            )));
        }
        let n = config.n_sites();
        let amp = 0.5 * config.drive * (4.0 * PI).powf(0.25) / l.sqrt();
        let dk = 2.0 * PI / l;
        let nyq = dk * (k_modes / 2) as f64;
        let nyq_ratio = (-0.5 * nyq * nyq).exp();
        if nyq_ratio > options.deflation {
            return Err(OracleError::UnderResolved {
                k: nyq,
                ratio: nyq_ratio,
            });
        }
        let threshold = options.deflation * amp.abs() * 2f64.sqrt();
        let mut energies = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut deflated = 1; // the Nyquist mode
        let mut push = |e: f64, c: Vec<f64>, deflated: &mut usize| {
            if c.iter().any(|x| x.abs() > threshold) {
                energies.push(e);
                cols.push(c);
            } else {
                *deflated += 1;
            }
        };
        push(0.0, vec![amp; n], &mut deflated);
        for m in 1..k_modes / 2 {
            let k = dk * m as f64;
            let g = 2f64.sqrt() * amp * (-0.5 * k * k).exp();
            let e = 0.5 * k * k;
            push(
                e,
                config.positions.iter().map(|z| g * (k * z).cos()).collect(),
                &mut deflated,
            );
            push(
                e,
                config.positions.iter().map(|z| g * (k * z).sin()).collect(),
                &mut deflated,
            );
        }
        let m = energies.len();
        let couplings = DMatrix::from_fn(n, m, |j, c| cols[c][j]);
        Ok(Self {
            config: config.clone(),
            options: *options,
            mode_energies: energies,
            couplings,
            deflated,
        })
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn options(&self) -> &OracleOptions {
        &self.options
    }

    pub fn n_retained(&self) -> usize {
        self.mode_energies.len()
    }

    pub fn dim(&self) -> usize {
        self.config.n_sites() + self.n_retained()
    }

    /// Time for a component of momentum k to circle the box.
    pub fn recurrence_time(&self, k: f64) -> f64 {
        self.options.box_length / k
    }

    /// Real symmetric H in the (sites, retained modes) basis.
    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let n = self.config.n_sites();
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for j in 0..n {
            h[(j, j)] = self.config.detuning;
        }
        for (m, &e) in self.mode_energies.iter().enumerate() {
            h[(n + m, n + m)] = e;
            for j in 0..n {
                h[(j, n + m)] = self.couplings[(j, m)];
                h[(n + m, j)] = self.couplings[(j, m)];
            }
        }
        h
    }

    /// Hermitian H in the plane-wave basis with all K modes, for small K.
    pub fn plane_wave_hamiltonian(&self) -> Result<DMatrix<Complex64>, OracleError> {
        let k_modes = self.options.n_modes;
        if k_modes > PLANE_WAVE_LIMIT {
            return Err(OracleError::TooLarge {
                modes: k_modes,
                limit: PLANE_WAVE_LIMIT,
            });
        }
        let n = self.config.n_sites();
        let l = self.options.box_length;
        let amp = 0.5 * self.config.drive * (4.0 * PI).powf(0.25) / l.sqrt();
        let d = n + k_modes;
        let mut h = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
        for j in 0..n {
            h[(j, j)] = Complex64::new(self.config.detuning, 0.0);
        }
        for (idx, m) in (-(k_modes as i64) / 2..(k_modes as i64) / 2).enumerate() {
            let k = 2.0 * PI * m as f64 / l;
            h[(n + idx, n + idx)] = Complex64::new(0.5 * k * k, 0.0);
            for (j, z) in self.config.positions.iter().enumerate() {
                let g = Complex64::from_polar(amp * (-0.5 * k * k).exp(), -k * z);
                h[(j, n + idx)] = g;
                h[(n + idx, j)] = g.conj();
            }
        }
        Ok(h)
    }

    /// f_jl(t) = Σ_m g_jm g_lm e^{−iω_m t}, the discretised memory kernel.
    pub fn discretized_kernel(&self, t: f64) -> DMatrix<Complex64> {
        let n = self.config.n_sites();
        let mut f = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (m, &e) in self.mode_energies.iter().enumerate() {
            let ph = Complex64::from_polar(1.0, -e * t);
            for j in 0..n {
                for l in 0..n {
                    f[(j, l)] += ph * self.couplings[(j, m)] * self.couplings[(l, m)];
                }
            }
        }
        f
    }

    pub fn diagonalize(&self) -> OracleSpectrum {
        let n = self.config.n_sites();
        let eig = SymmetricEigen::new(self.hamiltonian());
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let site_components = DMatrix::from_fn(n, order.len(), |j, c| eig.eigenvectors[(j, order[c])]);
        OracleSpectrum {
            energies,
            site_components,
        }
    }
}

/// Below-band eigenstate of the discretised Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBoundState {
    pub energy: f64,
    /// Σ_j |⟨a_j|E⟩|², the discretised counterpart of |Z|.
    pub site_weight: f64,
}

/// Eigenvalues (ascending) and the site rows of the eigenvectors.
#[derive(Debug, Clone)]
pub struct OracleSpectrum {
    pub energies: Vec<f64>,
    pub site_components: DMatrix<f64>,
}

impl OracleSpectrum {
    pub fn site_weight(&self, idx: usize) -> f64 {
        self.site_components.column(idx).norm_squared()
    }

    /// Every eigenvalue below the band edge.
    pub fn below_band(&self) -> Vec<OracleBoundState> {
        self.energies
            .iter()
            .enumerate()
            .take_while(|(_, &e)| e < 0.0)
            .map(|(i, &e)| OracleBoundState {
                energy: e,
                site_weight: self.site_weight(i),
            })
            .collect()
    }

    /// Below-band states that pass the same reporting convention as BOCs.
    pub fn bound_state_energies(&self, th: &Thresholds) -> Vec<OracleBoundState> {
        self.below_band()
            .into_iter()
            .filter(|b| b.energy <= -th.eps_edge && b.site_weight >= th.eps_z)
            .collect()
    }

    /// In-band states whose site weight stands out against the median of
    /// the band by `contrast`, the discretised signature of a BIC.
    pub fn in_band_candidates(&self, contrast: f64) -> Vec<OracleBoundState> {
        let band: Vec<(f64, f64)> = self
            .energies
            .iter()
            .enumerate()
            .filter(|(_, &e)| e >= 0.0)
            .map(|(i, &e)| (e, self.site_weight(i)))
            .collect();
        if band.is_empty() {
            return Vec::new();
        }
        let mut w: Vec<f64> = band.iter().map(|b| b.1).collect();
        w.sort_by(f64::total_cmp);
        let median = w[w.len() / 2];
        band.into_iter()
            .filter(|b| b.1 > contrast * median)
            .map(|(energy, site_weight)| OracleBoundState { energy, site_weight })
            .collect()
    }

    /// Σ_E |⟨a_j|E⟩|² per site; equals 1 by completeness.
    pub fn completeness(&self) -> Vec<f64> {
        self.site_components.row_iter().map(|r| r.norm_squared()).collect()
    }

    /// c(t) = Σ_E x_E (x_Eᵀ c0) e^{−iEt} on the given times.
    pub fn evolve(&self, c0: &DVector<Complex64>, times: &[f64]) -> AmplitudeTrajectory {
        let n = self.site_components.nrows();
        let d = self.energies.len();
        let x = &self.site_components;
        let w: Vec<Complex64> = (0..d).map(|e| (0..n).map(|j| c0[j] * x[(j, e)]).sum()).collect();
        let rows: Vec<Vec<Complex64>> = times
            .par_iter()
            .map(|&t| {
                let mut c = vec![Complex64::new(0.0, 0.0); n];
                for e in 0..d {
                    let p = w[e] * Complex64::from_polar(1.0, -self.energies[e] * t);
                    for j in 0..n {
                        c[j] += p * x[(j, e)];
                    }
                }
                c
            })
            .collect();
        AmplitudeTrajectory {
            times: times.to_vec(),
            amplitudes: DMatrix::from_fn(times.len(), n, |i, j| rows[i][j]),
        }
    }
}

/// Exact evolution of c(0) under the discretised Hamiltonian.
pub fn exact_evolution(
    config: &LatticeConfig,
    options: &OracleOptions,
    times: &[f64],
) -> Result<AmplitudeTrajectory, OracleError> {
    let sys = DiscretizedSystem::build(config, options)?;
    Ok(sys.diagonalize().evolve(&config.initial_state(), times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;

    #[test]
    fn rotated_basis_matches_plane_waves() {
        let cfg = LatticeConfig::uniform(2, 3.0, 0.1, 0.5);
        let opts = OracleOptions::new(20.0, 64);
        let sys = DiscretizedSystem::build(&cfg, &opts).unwrap();
        let pw = sys.plane_wave_hamiltonian().unwrap();
        let mut full: Vec<f64> = SymmetricEigen::new(pw).eigenvalues.iter().copied().collect();
        full.sort_by(f64::total_cmp);
        // Deflated modes stay at their bare energies.
        let mut reduced = sys.diagonalize().energies;
        let dk = 2.0 * PI / opts.box_length;
        let kept: Vec<f64> = sys.mode_energies.clone();
        let mut all_bare: Vec<f64> = vec![0.0];
        for m in 1..opts.n_modes / 2 {
            let e = 0.5 * (dk * m as f64).powi(2);
            all_bare.push(e);
            all_bare.push(e);
        }
        all_bare.push(0.5 * (dk * (opts.n_modes / 2) as f64).powi(2));
        for e in kept {
            let i = all_bare.iter().position(|&b| (b - e).abs() < 1e-12).unwrap();
            all_bare.remove(i);
        }
        reduced.extend(all_bare);
        reduced.sort_by(f64::total_cmp);
        assert_eq!(reduced.len(), full.len());
        for (a, b) in reduced.iter().zip(&full) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn deflation_keeps_coupled_modes() {
        let cfg = LatticeConfig::uniform(2, 5.0, 0.05, 0.13);
        let sys = DiscretizedSystem::build(&cfg, &OracleOptions::default()).unwrap();
        assert_eq!(sys.n_retained() + sys.deflated, DEFAULT_MODES);
        assert!(sys.n_retained() > 900 && sys.n_retained() < 1200);
        // A single site at the origin never couples to the sine modes.
        let one =
            DiscretizedSystem::build(&LatticeConfig::new(vec![0.0], 0.05, 0.13), &OracleOptions::default()).unwrap();
        assert!(one.n_retained() < 600);
    }

    #[test]
    fn under_resolved_box_is_rejected() {
        let cfg = LatticeConfig::uniform(2, 5.0, 0.05, 0.13);
        assert!(matches!(
            DiscretizedSystem::build(&cfg, &OracleOptions::new(400.0, 256)),
            Err(OracleError::UnderResolved { .. })
        ));
        assert!(DiscretizedSystem::build(&cfg, &OracleOptions::new(400.0, 255)).is_err());
    }

    #[test]
    fn discretized_kernel_matches_continuum_before_recurrence() {
        let cfg = LatticeConfig::uniform(3, 5.0, 0.05, 0.13);
        let sys = DiscretizedSystem::build(&cfg, &OracleOptions::default()).unwrap();
        let k = Kernel::new(&cfg);
        for t in [0.0, 1.0, 10.0, 50.0] {
            let a = sys.discretized_kernel(t);
            let b = k.kernel_time(t).unwrap();
            assert!((a - b).camax() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn completeness_and_unitarity() {
        let cfg = LatticeConfig::uniform(2, 5.0, -0.02, 0.13);
        let sys = DiscretizedSystem::build(&cfg, &OracleOptions::new(200.0, 2048)).unwrap();
        let spec = sys.diagonalize();
        for w in spec.completeness() {
            assert!((w - 1.0).abs() < 1e-10);
        }
        let tr = spec.evolve(&cfg.initial_state(), &[0.0, 5.0, 50.0]);
        assert!((tr.amplitudes[(0, 0)] - 1.0).norm() < 1e-10);
        assert!(tr.trapped_norms().iter().all(|&p| p <= 1.0 + 1e-10));
    }

    #[test]
    fn decoupled_sites_rotate_freely() {
        let cfg = LatticeConfig::uniform(2, 5.0, 0.2, 0.0);
        let tr = exact_evolution(&cfg, &OracleOptions::new(50.0, 512), &[0.0, 3.0]).unwrap();
        assert!((tr.amplitudes[(1, 0)] - Complex64::from_polar(1.0, -0.6)).norm() < 1e-12);
    }
}

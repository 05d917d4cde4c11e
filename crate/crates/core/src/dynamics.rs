//! Time evolution of the site amplitudes: the non-Markovian Volterra
//! equation ċ + iω0 c + ∫₀ᵗ f(t−τ) c(τ) dτ = 0, its Markovian closed form,
//! and the bound-state long-time asymptotics.
//!
//! The Volterra solver works in a frame rotating at ω_r, c = e^{−iω_r t} u,
//! where the kernel becomes F(σ) = f(σ) e^{iω_r σ}. Convolution weights of
//! the piecewise-linear interpolant (product trapezoidal rule) are computed
//! once by Gauss-Legendre quadrature, so the step size only has to resolve
//! the slowly varying F, not the carrier e^{−iω0 t}.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{Kernel, KernelError};
use crate::model::LatticeConfig;
use crate::quad::gauss_legendre_10;
use crate::spectrum::{bound_states, BoundKind, BoundState, SpectrumError, Thresholds};

pub const DEFAULT_STEP: f64 = 0.02;
pub const DEFAULT_T_MAX: f64 = 200.0;
/// Allowed excess of the trapped norm over its initial value.
pub const NORM_TOLERANCE: f64 = 5e-3;
/// Times at which the closed-form kernel is checked against quadrature.
pub const KERNEL_CHECK_TIMES: [f64; 3] = [0.0, 1.0, 10.0];

const HISTORY_CHUNK: usize = 4096;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("invalid time stepping: h = {h}, t_max = {t_max}")]
    InvalidStep { h: f64, t_max: f64 },
    #[error("trapped norm {norm:.6} at t = {t} exceeds the tolerance; reduce h (currently {h})")]
    Unstable { t: f64, norm: f64, h: f64 },
    #[error("Markov rates are undefined at the band edge ω0 = 0")]
    BandEdge,
    #[error("trajectory ends at t = {t_end}, before the tail start {t_tail}")]
    TrajectoryTooShort { t_end: f64, t_tail: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Matrix-valued memory kernel f(t), t ≥ 0.
pub trait MemoryKernel: Sync {
    fn dim(&self) -> usize;
    /// Writes f(t) into `out` (dim × dim).
    fn eval(&self, t: f64, out: &mut DMatrix<Complex64>);
}

impl MemoryKernel for Kernel {
    fn dim(&self) -> usize {
        self.n_sites()
    }

    fn eval(&self, t: f64, out: &mut DMatrix<Complex64>) {
        let comps = self.kernel_time_components(t);
        let n = self.n_sites();
        for j in 0..n {
            for l in 0..n {
                out[(j, l)] = comps[self.pair_index(j, l)];
            }
        }
    }
}

/// Kernel given by a closure, for scalar and reduced problems.
pub struct FnKernel<F> {
    dim: usize,
    f: F,
}

impl<F> FnKernel<F>
where
    F: Fn(f64, &mut DMatrix<Complex64>) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> MemoryKernel for FnKernel<F>
where
    F: Fn(f64, &mut DMatrix<Complex64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, out: &mut DMatrix<Complex64>) {
        (self.f)(t, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolterraOptions {
    pub t_max: f64,
    pub h: f64,
    /// Rotating-frame frequency; `None` uses ω0.
    pub frame: Option<f64>,
    pub norm_tolerance: f64,
}

impl Default for VolterraOptions {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_T_MAX,
            h: DEFAULT_STEP,
            frame: None,
            norm_tolerance: NORM_TOLERANCE,
        }
    }
}

impl VolterraOptions {
    pub fn new(t_max: f64, h: f64) -> Self {
        Self {
            t_max,
            h,
            ..Self::default()
        }
    }
}

/// c_j(t_i) on a time grid; rows are times, columns sites.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrajectory {
    pub times: Vec<f64>,
    pub amplitudes: DMatrix<Complex64>,
}

impl AmplitudeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.amplitudes.ncols()
    }

    pub fn state(&self, i: usize) -> DVector<Complex64> {
        self.amplitudes.row(i).transpose()
    }

    /// P(t_i) = Σ_j |c_j(t_i)|².
    pub fn trapped_norm(&self, i: usize) -> f64 {
        self.amplitudes.row(i).iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn trapped_norms(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.trapped_norm(i)).collect()
    }

    /// |c_j(t)| for 0-based site `j`.
    pub fn abs(&self, j: usize) -> Vec<f64> {
        self.amplitudes.column(j).iter().map(|c| c.norm()).collect()
    }

    /// Largest |c_j(t_i) − other_j(t_i)| over shared samples, matched by time.
    pub fn max_deviation(&self, other: &AmplitudeTrajectory) -> f64 {
        let mut worst: f64 = 0.0;
        let mut k = 0;
        for (i, &t) in self.times.iter().enumerate() {
            while k < other.times.len() && other.times[k] < t - 1e-9 {
                k += 1;
            }
            if k < other.times.len() && (other.times[k] - t).abs() <= 1e-9 {
                for j in 0..self.n_sites() {
                    worst = worst.max((self.amplitudes[(i, j)] - other.amplitudes[(k, j)]).norm());
                }
            }
        }
        worst
    }

    /// Every `stride`-th sample.
    pub fn decimate(&self, stride: usize) -> AmplitudeTrajectory {
        let stride = stride.max(1);
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        let n = self.n_sites();
        AmplitudeTrajectory {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            amplitudes: DMatrix::from_fn(idx.len(), n, |r, c| self.amplitudes[(idx[r], c)]),
        }
    }

    /// CSV: t, re_c1, im_c1, …, abs_c1, …, trapped_norm.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> std::io::Result<()> {
        let n = self.n_sites();
        let mut header = vec!["t".to_string()];
        for j in 1..=n {
            header.push(format!("re_c{j}"));
            header.push(format!("im_c{j}"));
        }
        for j in 1..=n {
            header.push(format!("abs_c{j}"));
        }
        header.push("trapped_norm".into());
        writeln!(w, "{}", header.join(","))?;
        for i in (0..self.len()).step_by(stride.max(1)) {
            let mut row = vec![format!("{:.10e}", self.times[i])];
            for j in 0..n {
                let c = self.amplitudes[(i, j)];
                row.push(format!("{:.12e}", c.re));
                row.push(format!("{:.12e}", c.im));
            }
            for j in 0..n {
                row.push(format!("{:.12e}", self.amplitudes[(i, j)].norm()));
            }
            row.push(format!("{:.12e}", self.trapped_norm(i)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Convolution weights of the product trapezoidal rule,
/// A_j = h∫₀¹ F((j+θ)h)(1−θ)dθ and B_j = h∫₀¹ F((j+θ)h)θ dθ, stored flat
/// (dim² entries per j, row-major).
struct Moments {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

fn moments<K: MemoryKernel>(kernel: &K, frame: f64, h: f64, n_steps: usize, panel: f64) -> Moments {
    let n = kernel.dim();
    let nn = n * n;
    let sub = (h / panel).ceil().max(1.0) as usize;
    let (gx, gw) = gauss_legendre_10();
    let per_j: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..n_steps)
        .into_par_iter()
        .map(|j| {
            let mut a = vec![ZERO; nn];
            let mut b = vec![ZERO; nn];
            let mut f = DMatrix::zeros(n, n);
            for p in 0..sub {
                let lo = p as f64 / sub as f64;
                let half = 0.5 / sub as f64;
                for (x, w) in gx.iter().zip(&gw) {
                    let theta = lo + half * (1.0 + x);
                    let sigma = (j as f64 + theta) * h;
                    kernel.eval(sigma, &mut f);
                    let rot = Complex64::from_polar(h * w * half, frame * sigma);
                    for r in 0..n {
                        for c in 0..n {
                            let v = f[(r, c)] * rot;
                            a[r * n + c] += v * (1.0 - theta);
                            b[r * n + c] += v * theta;
                        }
                    }
                }
            }
            (a, b)
        })
        .collect();
    let mut a = Vec::with_capacity(n_steps * nn);
    let mut b = Vec::with_capacity(n_steps * nn);
    for (x, y) in per_j {
        a.extend(x);
        b.extend(y);
    }
    Moments { a, b }
}

#[inline]
fn matvec_acc(m: &[Complex64], u: &[Complex64], out: &mut [Complex64]) {
    let n = u.len();
    for r in 0..n {
        let mut acc = ZERO;
        for c in 0..n {
            acc += m[r * n + c] * u[c];
        }
        out[r] += acc;
    }
}

/// Solves u̇ + iω0 u + ∫₀ᵗ f(t−τ) u(τ) dτ = 0 for a generic kernel.
///
/// `panel` bounds the Gauss-Legendre sub-panel width used for the weights;
/// it should resolve the fastest oscillation of F.
pub fn solve_volterra_kernel<K: MemoryKernel>(
    kernel: &K,
    omega0: f64,
    c0: &DVector<Complex64>,
    opts: &VolterraOptions,
    panel: f64,
) -> Result<AmplitudeTrajectory, DynamicsError> {
    let n = kernel.dim();
    if c0.len() != n {
        return Err(DynamicsError::DimensionMismatch {
            expected: n,
            got: c0.len(),
        });
    }
    let h = opts.h;
    if !(h > 0.0) || !(opts.t_max >= h) || !h.is_finite() || !opts.t_max.is_finite() {
        return Err(DynamicsError::InvalidStep { h, t_max: opts.t_max });
    }
    let steps = (opts.t_max / h).round() as usize;
    let frame = opts.frame.unwrap_or(omega0);
    let dw = omega0 - frame;
    let nn = n * n;
    let mom = moments(kernel, frame, h, steps.max(1), panel);
    // W_k = A_k + B_{k−1} multiplies u_{n−k} for 1 ≤ k ≤ n−1.
    let mut w = vec![ZERO; (steps + 1) * nn];
    for k in 1..steps {
        for e in 0..nn {
            w[k * nn + e] = mom.a[k * nn + e] + mom.b[(k - 1) * nn + e];
        }
    }
    // Implicit trapezoidal step: (I + (h/2)(iΔω + A_0)) u_n = rhs.
    let lhs = DMatrix::from_fn(n, n, |r, c| {
        let id = if r == c {
            Complex64::new(1.0, 0.5 * h * dw)
        } else {
            ZERO
        };
        id + mom.a[r * n + c] * (0.5 * h)
    });
    let lu = lhs.lu();

    let mut u = vec![ZERO; (steps + 1) * n];
    u[..n].copy_from_slice(c0.as_slice());
    let p0: f64 = c0.iter().map(|c| c.norm_sqr()).sum();
    let limit = p0 * (1.0 + opts.norm_tolerance);
    // G_{n−1} = −iΔω u_{n−1} − I_{n−1}; I_0 = 0.
    let mut g_prev: Vec<Complex64> = u[..n].iter().map(|x| Complex64::new(0.0, -dw) * x).collect();
    let mut hist = vec![ZERO; n];
    for step in 1..=steps {
        // H_n = Σ_{k=1}^{n−1} W_k u_{n−k} + B_{n−1} u_0
        hist.iter_mut().for_each(|x| *x = ZERO);
        let terms = step - 1;
        if terms > 0 {
            if terms > HISTORY_CHUNK {
                let chunks: Vec<Vec<Complex64>> = (0..terms.div_ceil(HISTORY_CHUNK))
                    .into_par_iter()
                    .map(|ci| {
                        let mut acc = vec![ZERO; n];
                        let k0 = 1 + ci * HISTORY_CHUNK;
                        let k1 = (k0 + HISTORY_CHUNK).min(step);
                        for k in k0..k1 {
                            let m = step - k;
                            matvec_acc(&w[k * nn..(k + 1) * nn], &u[m * n..(m + 1) * n], &mut acc);
                        }
                        acc
                    })
                    .collect();
                for c in chunks {
                    for (h, v) in hist.iter_mut().zip(c) {
                        *h += v;
                    }
                }
            } else {
                for k in 1..step {
                    let m = step - k;
                    matvec_acc(&w[k * nn..(k + 1) * nn], &u[m * n..(m + 1) * n], &mut hist);
                }
            }
        }
        matvec_acc(&mom.b[(step - 1) * nn..step * nn], &u[..n], &mut hist);

        let prev = &u[(step - 1) * n..step * n];
        let rhs = DVector::from_iterator(n, (0..n).map(|r| prev[r] + 0.5 * h * (g_prev[r] - hist[r])));
        let un = lu.solve(&rhs).ok_or(DynamicsError::Unstable {
            t: step as f64 * h,
            norm: f64::NAN,
            h,
        })?;
        let norm: f64 = un.iter().map(|c| c.norm_sqr()).sum();
        if !(norm <= limit) {
            return Err(DynamicsError::Unstable {
                t: step as f64 * h,
                norm,
                h,
            });
        }
        // I_n = A_0 u_n + H_n
        let mut i_n = hist.clone();
        matvec_acc(&mom.a[..nn], un.as_slice(), &mut i_n);
        for r in 0..n {
            g_prev[r] = Complex64::new(0.0, -dw) * un[r] - i_n[r];
        }
        u[step * n..(step + 1) * n].copy_from_slice(un.as_slice());
    }

    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let amplitudes = DMatrix::from_fn(steps + 1, n, |i, j| {
        u[i * n + j] * Complex64::from_polar(1.0, -frame * times[i])
    });
    Ok(AmplitudeTrajectory { times, amplitudes })
}

/// Sub-panel width for the weight quadrature of a lattice kernel.
pub fn weight_panel(kernel: &Kernel, frame: f64) -> f64 {
    let d_max = kernel.distances().iter().copied().fold(0.0, f64::max);
    1.0 / (1.0 + frame.abs() + d_max * d_max / 8.0)
}

/// Volterra solution for a lattice configuration, after checking the
/// closed-form kernel against direct quadrature.
pub fn solve_volterra_opts(
    config: &LatticeConfig,
    opts: &VolterraOptions,
) -> Result<AmplitudeTrajectory, DynamicsError> {
    let kernel = Kernel::new(config);
    kernel.validate_closed_form(&KERNEL_CHECK_TIMES, 1e-8)?;
    let frame = opts.frame.unwrap_or(config.detuning);
    let panel = weight_panel(&kernel, frame);
    solve_volterra_kernel(&kernel, config.detuning, &config.initial_state(), opts, panel)
}

pub fn solve_volterra(config: &LatticeConfig, t_max: f64, h: f64) -> Result<AmplitudeTrajectory, DynamicsError> {
    solve_volterra_opts(config, &VolterraOptions::new(t_max, h))
}

/// Constant decay matrix κ and Lamb shift Δ of the memoryless limit.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovRates {
    pub kappa: DMatrix<f64>,
    pub delta: DMatrix<f64>,
}

impl MarkovRates {
    /// −(κ + iω0 + iΔ).
    pub fn generator(&self, omega0: f64) -> DMatrix<Complex64> {
        let n = self.kappa.nrows();
        DMatrix::from_fn(n, n, |r, c| {
            let w = if r == c { omega0 } else { 0.0 };
            -Complex64::new(self.kappa[(r, c)], w + self.delta[(r, c)])
        })
    }
}

/// κ = πJ(ω0) above the band edge, zero below; Δ = PV∫J(ω)/(ω0 − ω) dω.
pub fn markov_rates(config: &LatticeConfig) -> Result<MarkovRates, DynamicsError> {
    let w0 = config.detuning;
    if w0 == 0.0 {
        return Err(DynamicsError::BandEdge);
    }
    let kernel = Kernel::new(config);
    let n = config.n_sites();
    let kappa = if w0 > 0.0 {
        kernel.spectral_density(w0)?.map(|x| PI * x)
    } else {
        DMatrix::zeros(n, n)
    };
    let delta = -kernel.principal_value(w0)?;
    Ok(MarkovRates { kappa, delta })
}

/// c_MA(t) = exp[−(κ + iω0 + iΔ)t] c(0) on the given times.
pub fn markov_solution(config: &LatticeConfig, times: &[f64]) -> Result<AmplitudeTrajectory, DynamicsError> {
    let rates = markov_rates(config)?;
    let g = rates.generator(config.detuning);
    let c0 = config.initial_state();
    let n = config.n_sites();
    let rows: Vec<DVector<Complex64>> = times
        .par_iter()
        .map(|&t| (&g * Complex64::new(t, 0.0)).exp() * &c0)
        .collect();
    Ok(AmplitudeTrajectory {
        times: times.to_vec(),
        amplitudes: DMatrix::from_fn(times.len(), n, |i, j| rows[i][j]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticTerm {
    pub frequency: f64,
    /// M_{·l} Z_l for this pole.
    pub coefficient: DVector<Complex64>,
    pub kind: BoundKind,
    /// 1-based branch; 0 for the decoupled trivial pole.
    pub branch: usize,
}

/// c^∞(t) = Σ_α Σ_l M_{·l} Z_l^α e^{−iϖ_l^α t}.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticForm {
    pub n_sites: usize,
    pub terms: Vec<AsymptoticTerm>,
    /// Ω = 0: the single trivial pole at ϖ = ω0 carries all of c(0).
    pub decoupled: bool,
}

impl AsymptoticForm {
    pub fn from_states(n_sites: usize, states: &[BoundState]) -> Self {
        Self {
            n_sites,
            terms: states
                .iter()
                .map(|s| AsymptoticTerm {
                    frequency: s.frequency,
                    coefficient: s.site_amplitudes.clone(),
                    kind: s.kind,
                    branch: s.branch,
                })
                .collect(),
            decoupled: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.frequency).collect()
    }

    pub fn evaluate(&self, t: f64) -> DVector<Complex64> {
        let mut c = DVector::from_element(self.n_sites, ZERO);
        for term in &self.terms {
            c += &term.coefficient * Complex64::from_polar(1.0, -term.frequency * t);
        }
        c
    }

    /// CSV: varpi, site, re_coeff, im_coeff.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "varpi,site,re_coeff,im_coeff")?;
        for term in &self.terms {
            for (j, c) in term.coefficient.iter().enumerate() {
                writeln!(w, "{:.12e},{},{:.12e},{:.12e}", term.frequency, j + 1, c.re, c.im)?;
            }
        }
        Ok(())
    }
}

/// Residue asymptotics from the reported BOCs and exact BICs.
pub fn asymptotic_form(config: &LatticeConfig, n_max: usize, th: &Thresholds) -> Result<AsymptoticForm, DynamicsError> {
    if config.drive == 0.0 {
        return Ok(AsymptoticForm {
            n_sites: config.n_sites(),
            terms: vec![AsymptoticTerm {
                frequency: config.detuning,
                coefficient: config.initial_state(),
                kind: if config.detuning < 0.0 {
                    BoundKind::Boc
                } else {
                    BoundKind::Bic
                },
                branch: 0,
            }],
            decoupled: true,
        });
    }
    let states = bound_states(config, n_max, th)?;
    Ok(AsymptoticForm::from_states(config.n_sites(), &states))
}

/// max over t ≥ t_tail of | |c_j(t)| − |c_j^∞(t)| | per site.
pub fn compare_longtime(
    trajectory: &AmplitudeTrajectory,
    asymptotic: &AsymptoticForm,
    t_tail: f64,
) -> Result<Vec<f64>, DynamicsError> {
    let t_end = trajectory.times.last().copied().unwrap_or(f64::NEG_INFINITY);
    if t_end < t_tail {
        return Err(DynamicsError::TrajectoryTooShort { t_end, t_tail });
    }
    if asymptotic.n_sites != trajectory.n_sites() {
        return Err(DynamicsError::DimensionMismatch {
            expected: trajectory.n_sites(),
            got: asymptotic.n_sites,
        });
    }
    let mut dev = vec![0.0f64; trajectory.n_sites()];
    for (i, &t) in trajectory.times.iter().enumerate() {
        if t < t_tail {
            continue;
        }
        let c = asymptotic.evaluate(t);
        for (j, d) in dev.iter_mut().enumerate() {
            *d = d.max((trajectory.amplitudes[(i, j)].norm() - c[j].norm()).abs());
        }
    }
    Ok(dev)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPeak {
    /// Angular frequency.
    pub frequency: f64,
    pub power: f64,
}

/// Angular-frequency resolution 2π/T of a window of length T.
pub fn frequency_resolution(window: f64) -> f64 {
    2.0 * PI / window
}

/// Hann-windowed power |Σ w(t)(s(t) − s̄) e^{iνt}|² of the samples with
/// t ≥ t_tail at each angular frequency ν.
pub fn tail_spectrum(times: &[f64], signal: &[f64], t_tail: f64, freqs: &[f64]) -> Vec<f64> {
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t_tail).collect();
    if idx.len() < 2 {
        return vec![0.0; freqs.len()];
    }
    let t0 = times[idx[0]];
    let span = times[*idx.last().unwrap()] - t0;
    let mean = idx.iter().map(|&i| signal[i]).sum::<f64>() / idx.len() as f64;
    let samples: Vec<(f64, f64)> = idx
        .iter()
        .map(|&i| {
            let x = (times[i] - t0) / span;
            let w = 0.5 - 0.5 * (2.0 * PI * x).cos();
            (times[i] - t0, w * (signal[i] - mean))
        })
        .collect();
    freqs
        .par_iter()
        .map(|&nu| {
            let mut acc = ZERO;
            for &(t, s) in &samples {
                acc += Complex64::from_polar(s, nu * t);
            }
            acc.norm_sqr()
        })
        .collect()
}

/// Local maxima of the tail spectrum on [0, nu_max], strongest first.
/// The grid oversamples the window resolution eightfold.
pub fn spectral_peaks(times: &[f64], signal: &[f64], t_tail: f64, nu_max: f64) -> Vec<SpectralPeak> {
    let t_end = times.last().copied().unwrap_or(t_tail);
    let res = frequency_resolution((t_end - t_tail).max(f64::MIN_POSITIVE));
    let dnu = res / 8.0;
    let n = (nu_max / dnu).ceil() as usize + 1;
    let freqs: Vec<f64> = (0..n).map(|i| i as f64 * dnu).collect();
    let p = tail_spectrum(times, signal, t_tail, &freqs);
    let mut peaks: Vec<SpectralPeak> = (1..n.saturating_sub(1))
        .filter(|&i| p[i] > p[i - 1] && p[i] >= p[i + 1])
        .map(|i| SpectralPeak {
            frequency: freqs[i],
            power: p[i],
        })
        .collect();
    peaks.sort_by(|a, b| b.power.total_cmp(&a.power));
    peaks
}

/// Strongest tail frequency of |c_j(t)|² for 0-based site `j`.
pub fn dominant_frequency(traj: &AmplitudeTrajectory, j: usize, t_tail: f64, nu_max: f64) -> Option<SpectralPeak> {
    let sig: Vec<f64> = traj.amplitudes.column(j).iter().map(|c| c.norm_sqr()).collect();
    spectral_peaks(&traj.times, &sig, t_tail, nu_max).into_iter().next()
}

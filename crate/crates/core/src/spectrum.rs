//! Bound states: BOCs below the band (real poles on s = iа, a > 0) and BICs
//! embedded in it (removable singularities on the cut), their residue
//! weights, parameter scans and the bound-state-count phase diagram.
//!
//! On the positive imaginary axis every branch is real: D_j(ia) = −i r_j(a)
//! with r_j an eigenvalue of R(a) = ∫J/(ω+a) dω, so the pole function
//! Y_j(ϖ) = ω0 − r_j(−ϖ) is real and strictly decreasing in ϖ < 0.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use roots::{find_root_brent, Convergency, SearchError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{complex_eigen, BranchMethod, Kernel, KernelError};
use crate::model::LatticeConfig;

/// Largest |ϖ| searched for a BOC before giving up on a bracket.
pub const BRACKET_LIMIT: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("branch {branch}: no sign change of Y(ϖ) − ϖ on [{lo}, {hi}]")]
    NoBracket { branch: usize, lo: f64, hi: f64 },
    #[error("root search did not converge on [{lo}, {hi}]")]
    NotConverged { lo: f64, hi: f64 },
    #[error("analytic BIC formula needs {0}")]
    AnalyticUnavailable(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("BOC count does not change between ω0 = {lo} and {hi}")]
    NoTransition { lo: f64, hi: f64 },
}

/// Reporting conventions for bound states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// A BOC must satisfy ϖ ≤ −eps_edge.
    pub eps_edge: f64,
    /// A BOC must satisfy |Z| ≥ eps_z.
    pub eps_z: f64,
    /// A BIC candidate is exact when the matching residual is ≤ tol_bic.
    pub tol_bic: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            eps_edge: 1e-4,
            eps_z: 1e-3,
            tol_bic: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    #[serde(rename = "BOC")]
    Boc,
    #[serde(rename = "BIC")]
    Bic,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Boc => "BOC",
            BoundKind::Bic => "BIC",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundState {
    pub kind: BoundKind,
    /// 1-based branch label.
    pub branch: usize,
    /// ϖ in ω̃ units; negative for a BOC, positive for a BIC.
    pub frequency: f64,
    /// Z = [1 + ∂_s D_j]⁻¹ at s = −iϖ.
    pub residue_weight: Complex64,
    /// Contribution M_{·j} Z to c(∞).
    pub site_amplitudes: DVector<Complex64>,
}

impl BoundState {
    /// Σ_l |a_l|², this state's share of the time-averaged trapped norm.
    pub fn weight(&self) -> f64 {
        self.site_amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateStatus {
    Reported,
    /// The root lies in (−eps_edge, 0).
    TooCloseToEdge,
    /// The root exists but |Z| < eps_z.
    WeightBelowThreshold,
}

/// Per-branch outcome of the BOC search, including rejected roots.
#[derive(Debug, Clone, PartialEq)]
pub struct BocCandidate {
    pub branch: usize,
    pub frequency: Option<f64>,
    pub residue_weight: Option<Complex64>,
    pub status: CandidateStatus,
    /// Y_j(−eps_edge) + eps_edge; positive means no root below −eps_edge.
    pub edge_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BocSearch {
    /// Ω = 0: every site is a trivial pole at ϖ = ω0 and nothing is counted.
    pub decoupled: bool,
    pub candidates: Vec<BocCandidate>,
    pub states: Vec<BoundState>,
}

struct Tolerance {
    x: f64,
    y: f64,
    max_iter: usize,
}

impl Convergency<f64> for Tolerance {
    fn is_root_found(&mut self, y: f64) -> bool {
        y.abs() < self.y
    }
    fn is_converged(&mut self, a: f64, b: f64) -> bool {
        (a - b).abs() < self.x * a.abs().max(b.abs()).max(1e-300)
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= self.max_iter
    }
}

/// Brent's method on [lo, hi] for a fallible `f`.
pub(crate) fn brent<E, F>(mut f: F, lo: f64, hi: f64, rel_x: f64, abs_y: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<SpectrumError>,
{
    let failure: RefCell<Option<E>> = RefCell::new(None);
    let mut conv = Tolerance {
        x: rel_x,
        y: abs_y,
        max_iter: 200,
    };
    let out = find_root_brent(
        lo,
        hi,
        |x| {
            if failure.borrow().is_some() {
                return 0.0;
            }
            match f(x) {
                Ok(v) => v,
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    0.0
                }
            }
        },
        &mut conv,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    match out {
        Ok(x) => Ok(x),
        Err(SearchError::NoBracketing) => Err(SpectrumError::NoBracket { branch: 0, lo, hi }.into()),
        Err(_) => Err(SpectrumError::NotConverged { lo, hi }.into()),
    }
}

/// (r_j(a), q_j(a)) for every branch on s = i a: D_j = −i r_j, ∂_s D_j = q_j.
/// Closed-form geometries keep their analytic labels; otherwise branches are
/// the eigenvalues of R(a) in descending order.
pub fn axis_values(kernel: &Kernel, a: f64) -> Result<Vec<(f64, f64)>, KernelError> {
    match kernel.analytic_method() {
        Some(_) => {
            let (d, dd) = kernel.branch_values_with_derivatives(Complex64::new(0.0, a))?;
            Ok(d.iter().zip(&dd).map(|(v, w)| (-v.im, w.re)).collect())
        }
        None => Ok(kernel.axis_branches(a)?.into_iter().map(|(r, q, _)| (r, q)).collect()),
    }
}

/// Y_j(ϖ) = ω0 − i D_j(−iϖ) for ϖ < 0 and 0-based branch `j`.
pub fn pole_function(kernel: &Kernel, j: usize, varpi: f64) -> Result<f64, KernelError> {
    if !(varpi < 0.0) {
        return Err(KernelError::BranchCut(Complex64::new(0.0, -varpi)));
    }
    let v = axis_values(kernel, -varpi)?;
    let (r, _) = v
        .get(j)
        .copied()
        .ok_or(KernelError::BranchIndex { index: j, n: v.len() })?;
    Ok(kernel.config().detuning - r)
}

fn site_amplitudes_on_axis(kernel: &Kernel, j: usize, a: f64, z: Complex64) -> Result<DVector<Complex64>, KernelError> {
    let c0 = kernel.config().initial_state();
    let col = match kernel.analytic_method() {
        Some(_) => kernel
            .branch_decompose(Complex64::new(0.0, a))?
            .mixing(&c0)
            .column(j)
            .into_owned(),
        None => {
            let (_, _, v) = kernel.axis_branches(a)?.swap_remove(j);
            let v = v.map(|x| Complex64::new(x, 0.0));
            let proj = (v.transpose() * &c0)[(0, 0)];
            v * proj
        }
    };
    Ok(col * z)
}

fn locate_boc(kernel: &Kernel, j: usize, th: &Thresholds) -> Result<(BocCandidate, Option<BoundState>), SpectrumError> {
    let w0 = kernel.config().detuning;
    let g = |varpi: f64| -> Result<f64, SpectrumError> { Ok(pole_function(kernel, j, varpi)? - varpi) };
    let hi = -th.eps_edge;
    let edge_value = g(hi)?;
    if edge_value > 0.0 {
        return Ok((
            BocCandidate {
                branch: j + 1,
                frequency: None,
                residue_weight: None,
                status: CandidateStatus::TooCloseToEdge,
                edge_value,
            },
            None,
        ));
    }
    let mut lo = -(5.0f64).max(4.0 * w0.abs() + 1.0);
    loop {
        if g(lo)? > 0.0 {
            break;
        }
        if lo <= -BRACKET_LIMIT {
            return Err(SpectrumError::NoBracket { branch: j + 1, lo, hi });
        }
        lo = (2.0 * lo).max(-BRACKET_LIMIT);
    }
    let mut root = brent(g, lo, hi, 1e-15, 1e-14).map_err(|e| match e {
        SpectrumError::NoBracket { lo, hi, .. } => SpectrumError::NoBracket { branch: j + 1, lo, hi },
        other => other,
    })?;
    // Newton polish with g' = −(1 + q).
    let mut q = 0.0;
    for _ in 0..3 {
        let (r, qq) = axis_values(kernel, -root)?[j];
        q = qq;
        let resid = w0 - r - root;
        if resid.abs() <= 1e-13 {
            break;
        }
        let next = root + resid / (1.0 + q);
        if next < 0.0 {
            root = next;
        }
    }
    let z = Complex64::new(1.0 / (1.0 + q), 0.0);
    let status = if z.norm() < th.eps_z {
        CandidateStatus::WeightBelowThreshold
    } else {
        CandidateStatus::Reported
    };
    let state = if status == CandidateStatus::Reported {
        Some(BoundState {
            kind: BoundKind::Boc,
            branch: j + 1,
            frequency: root,
            residue_weight: z,
            site_amplitudes: site_amplitudes_on_axis(kernel, j, -root, z)?,
        })
    } else {
        None
    };
    Ok((
        BocCandidate {
            branch: j + 1,
            frequency: Some(root),
            residue_weight: Some(z),
            status,
            edge_value,
        },
        state,
    ))
}

/// Full BOC search with the per-branch diagnostics.
pub fn search_bocs(config: &LatticeConfig, th: &Thresholds) -> Result<BocSearch, SpectrumError> {
    if config.drive == 0.0 {
        return Ok(BocSearch {
            decoupled: true,
            candidates: Vec::new(),
            states: Vec::new(),
        });
    }
    let kernel = Kernel::new(config);
    let mut candidates = Vec::new();
    let mut states = Vec::new();
    for j in 0..config.n_sites() {
        let (c, s) = locate_boc(&kernel, j, th)?;
        candidates.push(c);
        states.extend(s);
    }
    Ok(BocSearch {
        decoupled: false,
        candidates,
        states,
    })
}

/// Reported BOCs with residue weights and site amplitudes.
pub fn find_bocs(config: &LatticeConfig, th: &Thresholds) -> Result<Vec<BoundState>, SpectrumError> {
    Ok(search_bocs(config, th)?.states)
}

/// One BIC frequency of the geometry and the detuning that would make it exact.
#[derive(Debug, Clone, PartialEq)]
pub struct BicCandidate {
    pub n: usize,
    /// 1-based branch label; 0 when continuation could not assign one.
    pub branch: usize,
    pub frequency: f64,
    /// ω0 for which the pole condition holds exactly at this ϖ.
    pub omega0_exact: f64,
    /// |ω0 − ϖ − iD_j(−iϖ)| for the configured ω0.
    pub residual: f64,
    pub residue_weight: Complex64,
    pub site_amplitudes: DVector<Complex64>,
    pub method: BranchMethod,
}

impl BicCandidate {
    pub fn is_exact(&self, tol_bic: f64) -> bool {
        self.residual <= tol_bic
    }

    pub fn to_bound_state(&self) -> BoundState {
        BoundState {
            kind: BoundKind::Bic,
            branch: self.branch,
            frequency: self.frequency,
            residue_weight: self.residue_weight,
            site_amplitudes: self.site_amplitudes.clone(),
        }
    }
}

fn bic_candidate(
    kernel: &Kernel,
    n: usize,
    branch: usize,
    varpi: f64,
    v: &DVector<f64>,
    method: BranchMethod,
) -> Result<BicCandidate, KernelError> {
    let (d, dd) = kernel.projected_on_cut(v, varpi)?;
    let omega0_exact = varpi - d.im;
    let z = Complex64::new(1.0 / (1.0 + dd.re), 0.0);
    let c0 = kernel.config().initial_state();
    let vc = v.map(|x| Complex64::new(x, 0.0));
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    let proj = (vc.transpose() * &c0)[(0, 0)] / norm2;
    Ok(BicCandidate {
        n,
        branch,
        frequency: varpi,
        omega0_exact,
        residual: (kernel.config().detuning - omega0_exact).abs(),
        residue_weight: z,
        site_amplitudes: vc * proj * z,
        method,
    })
}

/// BIC frequencies from the closed forms: N = 2 gives ϖ = (nπ/d)²/2 on
/// branch 1 for odd n and branch 2 for even n; uniform N = 3 gives
/// ϖ = (nπ/d)²/8 on branch 1 for even n.
pub fn find_bics_analytic(config: &LatticeConfig, n_max: usize) -> Result<Vec<BicCandidate>, SpectrumError> {
    let kernel = Kernel::new(config);
    let mut out = Vec::new();
    match kernel.analytic_method() {
        Some(BranchMethod::Scalar) => {}
        Some(BranchMethod::AnalyticTwoSite) => {
            let d = kernel.distances()[1];
            let s = 1.0 / 2f64.sqrt();
            for n in 1..=n_max {
                let varpi = 0.5 * (n as f64 * PI / d).powi(2);
                let (branch, v) = if n % 2 == 1 {
                    (1, DVector::from_vec(vec![s, s]))
                } else {
                    (2, DVector::from_vec(vec![s, -s]))
                };
                out.push(bic_candidate(
                    &kernel,
                    n,
                    branch,
                    varpi,
                    &v,
                    BranchMethod::AnalyticTwoSite,
                )?);
            }
        }
        Some(BranchMethod::AnalyticThreeSite) => {
            let d = config.uniform_spacing().unwrap_or(0.0).abs();
            let s = 1.0 / 2f64.sqrt();
            let v = DVector::from_vec(vec![s, 0.0, -s]);
            for n in (2..=n_max).step_by(2) {
                let varpi = (n as f64 * PI / d).powi(2) / 8.0;
                out.push(bic_candidate(
                    &kernel,
                    n,
                    1,
                    varpi,
                    &v,
                    BranchMethod::AnalyticThreeSite,
                )?);
            }
        }
        _ => {
            return Err(SpectrumError::AnalyticUnavailable(
                "N = 1, N = 2, or uniformly spaced N = 3".into(),
            ))
        }
    }
    Ok(out)
}

/// On the cut the branches are eigenvalues of A(ϖ) = πJ(ϖ) − iP(ϖ) with
/// Re λ = π v†Jv / v†v ≥ 0; a BIC is a branch whose real part vanishes.
/// Returns every branch as (Re λ normalised by πJ₀₀, real eigenvector),
/// sorted by ascending real part.
fn cut_branches(kernel: &Kernel, varpi: f64) -> Result<Vec<(f64, DVector<f64>)>, KernelError> {
    let j = kernel.spectral_density(varpi)?;
    let p = kernel.principal_value(varpi)?;
    let n = j.nrows();
    let a = DMatrix::from_fn(n, n, |r, c| Complex64::new(PI * j[(r, c)], -p[(r, c)]));
    let (vals, vecs) = complex_eigen(&a, Complex64::new(0.0, -varpi))?;
    let scale = PI * j[(0, 0)].abs().max(f64::MIN_POSITIVE);
    let mut out: Vec<(f64, DVector<f64>)> = (0..n)
        .map(|k| {
            let col = vecs.column(k);
            let big = col
                .iter()
                .max_by(|x, y| x.norm().total_cmp(&y.norm()))
                .copied()
                .unwrap_or(Complex64::new(1.0, 0.0));
            let phase = big.conj() / big.norm();
            let mut v = DVector::from_iterator(n, col.iter().map(|x| (x * phase).re));
            let norm = v.norm();
            if norm > 0.0 {
                v /= norm;
            }
            (vals[k].re / scale, v)
        })
        .collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}

fn projected(kernel: &Kernel, v: &DVector<f64>, omega: f64, derivative: bool) -> Result<f64, KernelError> {
    let m = if derivative {
        kernel.spectral_density_derivative(omega)?
    } else {
        kernel.spectral_density(omega)?
    };
    Ok((v.transpose() * m * v)[(0, 0)])
}

/// Minimises vᵀJ(ω)v on [w_lo, w_hi] by Brent on its derivative, then moves
/// v to the on-cut eigenvector it overlaps most, until ϖ is stationary.
fn refine_bic(
    kernel: &Kernel,
    start: &DVector<f64>,
    w_lo: f64,
    w_hi: f64,
) -> Result<Option<(f64, DVector<f64>)>, SpectrumError> {
    let mut v = start.clone();
    let mut varpi = f64::NAN;
    for _ in 0..60 {
        let dlo = projected(kernel, &v, w_lo, true)?;
        let dhi = projected(kernel, &v, w_hi, true)?;
        if dlo * dhi > 0.0 {
            return Ok(None);
        }
        let next: f64 = brent(
            |w| projected(kernel, &v, w, true).map_err(SpectrumError::from),
            w_lo,
            w_hi,
            1e-15,
            0.0,
        )?;
        let branches = cut_branches(kernel, next)?;
        v = branches
            .into_iter()
            .max_by(|a, b| a.1.dot(&v).abs().total_cmp(&b.1.dot(&v).abs()))
            .map(|b| b.1)
            .unwrap_or(v);
        let moved = (next - varpi).abs();
        varpi = next;
        if moved <= 1e-15 * varpi {
            break;
        }
    }
    Ok(Some((varpi, v)))
}

/// Numeric BIC search for any geometry: scan all on-cut branches for minima
/// of Re λ in x = √(2ϖ) up to (n_max + ½)π / d_min, refine each with
/// [`refine_bic`], and keep the removable zeros. Near-coincident BICs on
/// different branches are kept apart by their eigenvectors.
pub fn find_bics_numeric(config: &LatticeConfig, n_max: usize) -> Result<Vec<BicCandidate>, SpectrumError> {
    let kernel = Kernel::new(config);
    if config.n_sites() < 2 || config.drive == 0.0 {
        return Ok(Vec::new());
    }
    let dist = kernel.distances();
    let d_min = dist[1..].iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = dist.iter().copied().fold(0.0, f64::max);
    let x_hi = ((n_max as f64 + 0.5) * PI / d_min).min(kernel.x_max() - 1e-3);
    let dx = PI / (8.0 * d_max);
    let n_pts = (x_hi / dx).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n_pts)
        .map(|i| 0.5 * dx + i as f64 * dx)
        .filter(|&x| x <= x_hi)
        .collect();
    let scan: Vec<Vec<(f64, DVector<f64>)>> = xs
        .par_iter()
        .map(|&x| cut_branches(&kernel, 0.5 * x * x))
        .collect::<Result<_, _>>()?;

    let mut hits: Vec<(f64, DVector<f64>)> = Vec::new();
    for i in 1..scan.len().saturating_sub(1) {
        for (m, v0) in &scan[i] {
            // Same branch at the neighbours by eigenvector overlap.
            let follow = |row: &Vec<(f64, DVector<f64>)>| {
                row.iter()
                    .max_by(|a, b| a.1.dot(v0).abs().total_cmp(&b.1.dot(v0).abs()))
                    .map(|b| b.0)
                    .unwrap_or(f64::INFINITY)
            };
            if !(*m < 0.5 && *m <= follow(&scan[i - 1]) && *m <= follow(&scan[i + 1])) {
                continue;
            }
            let (w_lo, w_hi) = (0.5 * xs[i - 1].powi(2), 0.5 * xs[i + 1].powi(2));
            if let Some((varpi, v)) = refine_bic(&kernel, v0, w_lo, w_hi)? {
                let dup = hits
                    .iter()
                    .any(|(w, u)| (w - varpi).abs() <= 1e-9 * varpi && u.dot(&v).abs() > 0.99);
                if !dup {
                    hits.push((varpi, v));
                }
            }
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut found = Vec::new();
    for (varpi, v) in hits {
        let n = match config.uniform_spacing() {
            Some(_) => ((2.0 * varpi).sqrt() * d_max / PI).round() as usize,
            None => found.len() + 1,
        };
        let branch = label_on_cut(&kernel, varpi, &v);
        match bic_candidate(&kernel, n, branch, varpi, &v, BranchMethod::Numeric) {
            Ok(c) => found.push(c),
            Err(KernelError::NotRemovable { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(found)
}

/// Branch label of a real on-cut eigenvector by overlap with the
/// decomposition just right of the cut.
fn label_on_cut(kernel: &Kernel, varpi: f64, v: &DVector<f64>) -> usize {
    let s = Complex64::new(1e-7, -varpi);
    match kernel.branch_decompose(s) {
        Ok(dec) => {
            let vc = v.map(|x| Complex64::new(x, 0.0));
            (0..dec.n_branches())
                .max_by(|&a, &b| {
                    let oa = dec.vectors.column(a).dotc(&vc).norm() / dec.vectors.column(a).norm();
                    let ob = dec.vectors.column(b).dotc(&vc).norm() / dec.vectors.column(b).norm();
                    oa.total_cmp(&ob)
                })
                .map(|j| j + 1)
                .unwrap_or(0)
        }
        Err(_) => 0,
    }
}

/// BIC candidates, analytic when the geometry allows it.
pub fn find_bics(config: &LatticeConfig, n_max: usize) -> Result<Vec<BicCandidate>, SpectrumError> {
    if config.drive == 0.0 {
        return Ok(Vec::new());
    }
    match find_bics_analytic(config, n_max) {
        Err(SpectrumError::AnalyticUnavailable(_)) => find_bics_numeric(config, n_max),
        Ok(mut analytic) if config.n_sites() == 3 => {
            // The closed form covers the antisymmetric branch only; the
            // symmetric pair (branches 2, 3) can host BICs as well.
            let numeric_n = n_max.div_ceil(2);
            for c in find_bics_numeric(config, numeric_n)? {
                if c.branch != 1 && c.n <= n_max {
                    analytic.push(c);
                }
            }
            analytic.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
            Ok(analytic)
        }
        other => other,
    }
}

/// BOCs and exact BICs of one configuration.
pub fn bound_states(config: &LatticeConfig, n_max: usize, th: &Thresholds) -> Result<Vec<BoundState>, SpectrumError> {
    let mut states = find_bocs(config, th)?;
    states.extend(
        find_bics(config, n_max)?
            .iter()
            .filter(|c| c.is_exact(th.tol_bic))
            .map(BicCandidate::to_bound_state),
    );
    Ok(states)
}

/// Recomputes Z and site amplitudes for already located states.
pub fn residues(config: &LatticeConfig, states: &[BoundState]) -> Result<Vec<BoundState>, SpectrumError> {
    let kernel = Kernel::new(config);
    states
        .iter()
        .map(|st| {
            let j = st.branch.checked_sub(1).ok_or(KernelError::BranchIndex {
                index: 0,
                n: config.n_sites(),
            })?;
            match st.kind {
                BoundKind::Boc => {
                    let a = -st.frequency;
                    let (_, q) = *axis_values(&kernel, a)?.get(j).ok_or(KernelError::BranchIndex {
                        index: j,
                        n: config.n_sites(),
                    })?;
                    let z = Complex64::new(1.0 / (1.0 + q), 0.0);
                    Ok(BoundState {
                        residue_weight: z,
                        site_amplitudes: site_amplitudes_on_axis(&kernel, j, a, z)?,
                        ..st.clone()
                    })
                }
                BoundKind::Bic => {
                    let amp = &st.site_amplitudes;
                    let v = amp.map(|x| x.re);
                    let norm = v.norm();
                    let v = if norm > 0.0 { v / norm } else { v };
                    let c = bic_candidate(&kernel, 0, st.branch, st.frequency, &v, BranchMethod::Numeric)?;
                    Ok(BoundState {
                        residue_weight: c.residue_weight,
                        site_amplitudes: c.site_amplitudes,
                        ..st.clone()
                    })
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanParameter {
    Omega0,
    D,
}

impl ScanParameter {
    pub fn name(self) -> &'static str {
        match self {
            ScanParameter::Omega0 => "omega0",
            ScanParameter::D => "d",
        }
    }

    pub fn apply(self, config: &LatticeConfig, value: f64) -> LatticeConfig {
        match self {
            ScanParameter::Omega0 => config.clone().with_detuning(value),
            ScanParameter::D => config.clone().with_spacing(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    pub value: f64,
    pub states: Vec<BoundState>,
}

/// BIC marker located by refining the swept parameter to the exact match.
#[derive(Debug, Clone, PartialEq)]
pub struct BicMarker {
    pub value: f64,
    pub n: usize,
    pub branch: usize,
    pub frequency: f64,
    pub residue_weight: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumScan {
    pub parameter: ScanParameter,
    pub grid: Vec<f64>,
    pub points: Vec<ScanPoint>,
    pub bic_markers: Vec<BicMarker>,
    /// Band edge in ω̃ units.
    pub band_edge: f64,
    pub config: LatticeConfig,
}

fn check_grid(grid: &[f64]) -> Result<(), SpectrumError> {
    if grid.is_empty() {
        return Err(SpectrumError::InvalidGrid("empty grid".into()));
    }
    if !grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(SpectrumError::InvalidGrid("grid must be strictly increasing".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(SpectrumError::InvalidGrid("non-finite grid value".into()));
    }
    Ok(())
}

/// Bound states at every grid value plus exact-match BIC markers.
pub fn scan_spectrum(
    config: &LatticeConfig,
    parameter: ScanParameter,
    grid: &[f64],
    n_max: usize,
    th: &Thresholds,
) -> Result<SpectrumScan, SpectrumError> {
    check_grid(grid)?;
    if parameter == ScanParameter::D && config.uniform_spacing().is_none() {
        return Err(SpectrumError::InvalidGrid(
            "a d scan needs a uniformly spaced lattice".into(),
        ));
    }
    let points = grid
        .par_iter()
        .map(|&value| {
            let cfg = parameter.apply(config, value);
            Ok(ScanPoint {
                value,
                states: find_bocs(&cfg, th)?,
            })
        })
        .collect::<Result<Vec<_>, SpectrumError>>()?;
    let lo = grid[0];
    let hi = grid[grid.len() - 1];
    let bic_markers = match parameter {
        ScanParameter::Omega0 => find_bics(config, n_max)?
            .into_iter()
            .filter(|c| c.omega0_exact >= lo && c.omega0_exact <= hi)
            .map(|c| BicMarker {
                value: c.omega0_exact,
                n: c.n,
                branch: c.branch,
                frequency: c.frequency,
                residue_weight: c.residue_weight,
            })
            .collect(),
        ScanParameter::D => bic_d_loci(config, config.detuning, n_max, grid)?
            .into_iter()
            .map(|l| {
                let c = find_bics(&config.clone().with_spacing(l.d), n_max)?
                    .into_iter()
                    .find(|c| c.n == l.n)
                    .map(|c| c.residue_weight)
                    .unwrap_or(Complex64::new(f64::NAN, 0.0));
                Ok(BicMarker {
                    value: l.d,
                    n: l.n,
                    branch: l.branch,
                    frequency: l.varpi,
                    residue_weight: c,
                })
            })
            .collect::<Result<_, SpectrumError>>()?,
    };
    Ok(SpectrumScan {
        parameter,
        grid: grid.to_vec(),
        points,
        bic_markers,
        band_edge: 0.0,
        config: config.clone(),
    })
}

/// Point on a BIC curve: with spacing d the n-th BIC at ϖ is exact for ω0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicLocus {
    pub n: usize,
    pub branch: usize,
    pub d: f64,
    pub omega0_exact: f64,
    pub varpi: f64,
}

/// Exact-match curves ω0(d) for n = 1..n_max on the given spacings.
pub fn bic_curves(template: &LatticeConfig, d_grid: &[f64], n_max: usize) -> Result<Vec<BicLocus>, SpectrumError> {
    let per_d = d_grid
        .par_iter()
        .map(|&d| {
            let cfg = template.clone().with_spacing(d);
            Ok(find_bics(&cfg, n_max)?
                .into_iter()
                .map(|c| BicLocus {
                    n: c.n,
                    branch: c.branch,
                    d,
                    omega0_exact: c.omega0_exact,
                    varpi: c.frequency,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, SpectrumError>>()?;
    let mut out: Vec<BicLocus> = per_d.into_iter().flatten().collect();
    out.sort_by(|a, b| a.n.cmp(&b.n).then(a.d.total_cmp(&b.d)));
    Ok(out)
}

/// Spacings at which some BIC is exact for detuning `omega0`, found by
/// sign changes of ω0*(d) − ω0 on `d_grid` refined with Brent.
pub fn bic_d_loci(
    template: &LatticeConfig,
    omega0: f64,
    n_max: usize,
    d_grid: &[f64],
) -> Result<Vec<BicLocus>, SpectrumError> {
    check_grid(d_grid)?;
    let curves = bic_curves(template, d_grid, n_max)?;
    let exact_at = |n: usize, d: f64| -> Result<(f64, f64, usize), SpectrumError> {
        let c = find_bics(&template.clone().with_spacing(d), n_max)?
            .into_iter()
            .find(|c| c.n == n)
            .ok_or(SpectrumError::InvalidGrid(format!("BIC n = {n} missing at d = {d}")))?;
        Ok((c.omega0_exact, c.frequency, c.branch))
    };
    let mut out = Vec::new();
    for n in 1..=n_max {
        let curve: Vec<&BicLocus> = curves.iter().filter(|l| l.n == n).collect();
        for w in curve.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (a.omega0_exact - omega0, b.omega0_exact - omega0);
            if fa == 0.0 {
                out.push(*a);
                continue;
            }
            if fa * fb < 0.0 {
                let d = brent(
                    |d| Ok::<f64, SpectrumError>(exact_at(n, d)?.0 - omega0),
                    a.d,
                    b.d,
                    1e-13,
                    1e-14,
                )?;
                let (w0, varpi, branch) = exact_at(n, d)?;
                out.push(BicLocus {
                    n,
                    branch,
                    d,
                    omega0_exact: w0,
                    varpi,
                });
            }
        }
    }
    out.sort_by(|a, b| a.d.total_cmp(&b.d));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagramGrid {
    pub d_grid: Vec<f64>,
    pub omega0_grid: Vec<f64>,
    /// `n_boc[(i, k)]` for d_grid[i], omega0_grid[k].
    pub n_boc: DMatrix<usize>,
    pub bic_curves: Vec<BicLocus>,
    /// Ω = 0: every cell is the decoupled special case and counts are zero.
    pub decoupled: bool,
}

pub fn phase_diagram(
    template: &LatticeConfig,
    d_grid: &[f64],
    omega0_grid: &[f64],
    n_max: usize,
    th: &Thresholds,
) -> Result<PhaseDiagramGrid, SpectrumError> {
    check_grid(d_grid)?;
    check_grid(omega0_grid)?;
    let nd = d_grid.len();
    let nw = omega0_grid.len();
    let counts = (0..nd * nw)
        .into_par_iter()
        .map(|idx| {
            let cfg = template
                .clone()
                .with_spacing(d_grid[idx / nw])
                .with_detuning(omega0_grid[idx % nw]);
            Ok(find_bocs(&cfg, th)?.len())
        })
        .collect::<Result<Vec<_>, SpectrumError>>()?;
    let n_boc = DMatrix::from_row_slice(nd, nw, &counts);
    let bic_curves = if template.drive == 0.0 {
        Vec::new()
    } else {
        bic_curves(template, d_grid, n_max)?
    };
    Ok(PhaseDiagramGrid {
        d_grid: d_grid.to_vec(),
        omega0_grid: omega0_grid.to_vec(),
        n_boc,
        bic_curves,
        decoupled: template.drive == 0.0,
    })
}

/// ω0 at which the reported BOC count changes, by bisection between two
/// detunings with different counts.
pub fn locate_count_transition(
    config: &LatticeConfig,
    lo: f64,
    hi: f64,
    th: &Thresholds,
    tol: f64,
) -> Result<f64, SpectrumError> {
    let count = |w: f64| -> Result<usize, SpectrumError> { Ok(find_bocs(&config.clone().with_detuning(w), th)?.len()) };
    let (mut a, mut b) = (lo, hi);
    let ca = count(a)?;
    if count(b)? == ca {
        return Err(SpectrumError::NoTransition { lo, hi });
    }
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if count(m)? == ca {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// CSV: param, branch, kind, varpi, reZ, imZ.
pub fn write_scan_csv<W: Write>(scan: &SpectrumScan, mut w: W) -> std::io::Result<()> {
    writeln!(w, "param,branch,kind,varpi,reZ,imZ")?;
    let mut rows: Vec<(f64, usize, BoundKind, f64, Complex64)> = Vec::new();
    for p in &scan.points {
        for s in &p.states {
            rows.push((p.value, s.branch, s.kind, s.frequency, s.residue_weight));
        }
    }
    for m in &scan.bic_markers {
        rows.push((m.value, m.branch, BoundKind::Bic, m.frequency, m.residue_weight));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (p, b, k, f, z) in rows {
        writeln!(
            w,
            "{:.12e},{},{},{:.12e},{:.12e},{:.12e}",
            p,
            b,
            k.as_str(),
            f,
            z.re,
            z.im
        )?;
    }
    Ok(())
}

/// CSV: d, omega0, n_boc.
pub fn write_phase_csv<W: Write>(grid: &PhaseDiagramGrid, mut w: W) -> std::io::Result<()> {
    writeln!(w, "d,omega0,n_boc")?;
    for (i, d) in grid.d_grid.iter().enumerate() {
        for (k, w0) in grid.omega0_grid.iter().enumerate() {
            writeln!(w, "{:.12e},{:.12e},{}", d, w0, grid.n_boc[(i, k)])?;
        }
    }
    Ok(())
}

/// CSV: n, d, omega0_exact, varpi.
pub fn write_bic_curve_csv<W: Write>(loci: &[BicLocus], mut w: W) -> std::io::Result<()> {
    writeln!(w, "n,d,omega0_exact,varpi")?;
    for l in loci {
        writeln!(w, "{},{:.12e},{:.12e},{:.12e}", l.n, l.d, l.omega0_exact, l.varpi)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_site(w0: f64) -> LatticeConfig {
        LatticeConfig::uniform(2, 5.0, w0, 0.13)
    }

    #[test]
    fn two_bocs_below_band() {
        let s = find_bocs(&two_site(-0.02), &Thresholds::default()).unwrap();
        assert_eq!(s.len(), 2);
        for b in &s {
            assert!(b.frequency < 0.0);
            assert!(b.residue_weight.norm() <= 1.0 + 1e-9);
        }
        // Branch 1 (J0 + J1) binds deeper.
        assert!(s[0].frequency < s[1].frequency);
    }

    #[test]
    fn one_boc_in_middle_regime() {
        let s = find_bocs(&two_site(0.06), &Thresholds::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].branch, 1);
        // Symmetric branch: equal site amplitudes.
        let a = &s[0].site_amplitudes;
        assert_relative_eq!(a[0].norm(), a[1].norm(), max_relative = 1e-12);
    }

    #[test]
    fn rejected_candidates_carry_reasons() {
        let r = search_bocs(&two_site(0.06), &Thresholds::default()).unwrap();
        assert_eq!(r.candidates.len(), 2);
        assert_eq!(r.candidates[1].status, CandidateStatus::TooCloseToEdge);
        assert!(r.candidates[1].edge_value > 0.0);
    }

    #[test]
    fn root_certificate() {
        let cfg = two_site(-0.02);
        let k = Kernel::new(&cfg);
        for b in find_bocs(&cfg, &Thresholds::default()).unwrap() {
            let y = pole_function(&k, b.branch - 1, b.frequency).unwrap();
            assert!((y - b.frequency).abs() <= 1e-10);
        }
    }

    #[test]
    fn deep_boc_has_unit_weight() {
        let b = find_bocs(&two_site(-3.0), &Thresholds::default()).unwrap();
        assert_eq!(b.len(), 2);
        for s in b {
            assert!(s.residue_weight.re > 0.999);
            assert!((s.frequency + 3.0).abs() < 1e-2);
        }
    }

    #[test]
    fn decoupled_case_not_counted() {
        let r = search_bocs(&LatticeConfig::uniform(2, 5.0, -0.1, 0.0), &Thresholds::default()).unwrap();
        assert!(r.decoupled);
        assert!(r.states.is_empty());
    }

    #[test]
    fn thresholds_control_reporting() {
        let cfg = two_site(0.4);
        assert!(find_bocs(&cfg, &Thresholds::default()).unwrap().len() <= 1);
        let loose = Thresholds {
            eps_edge: 1e-12,
            eps_z: 0.0,
            ..Thresholds::default()
        };
        // The band-edge divergence guarantees a formal root on every branch
        // whose spectral combination is nonzero at ω = 0.
        assert_eq!(
            search_bocs(&cfg, &loose).unwrap().candidates[0].status,
            CandidateStatus::Reported
        );
    }

    #[test]
    fn three_site_bocs_general_and_analytic_agree() {
        let cfg = LatticeConfig::uniform(3, 5.0, -0.05, 0.13);
        let th = Thresholds::default();
        let a = find_bocs(&cfg, &th).unwrap();
        assert_eq!(a.len(), 3);
        // Same lattice shifted by a tiny non-uniformity forces the numeric path.
        let mut g = cfg.clone();
        g.positions[2] += 1e-9;
        let kg = Kernel::new(&g);
        assert_eq!(kg.analytic_method(), None);
        let b = find_bocs(&g, &th).unwrap();
        let mut fa: Vec<f64> = a.iter().map(|s| s.frequency).collect();
        let mut fb: Vec<f64> = b.iter().map(|s| s.frequency).collect();
        fa.sort_by(f64::total_cmp);
        fb.sort_by(f64::total_cmp);
        for (x, y) in fa.iter().zip(&fb) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn two_site_bic_frequencies() {
        let c = find_bics_analytic(&two_site(0.05), 3).unwrap();
        for (i, b) in c.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!((b.frequency - (n * PI / 5.0).powi(2) / 2.0).abs() < 1e-15);
            assert_eq!(b.branch, if i % 2 == 0 { 1 } else { 2 });
            assert!(b.residue_weight.re > 0.0 && b.residue_weight.re <= 1.0);
        }
        assert!((c[0].frequency - PI * PI / 50.0).abs() < 1e-15);
    }

    #[test]
    fn numeric_bic_search_matches_formula() {
        let a = find_bics_analytic(&two_site(0.05), 3).unwrap();
        let b = find_bics_numeric(&two_site(0.05), 3).unwrap();
        assert_eq!(b.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.n, y.n);
            assert_eq!(x.branch, y.branch);
            assert!((x.frequency - y.frequency).abs() < 1e-10);
            assert!((x.omega0_exact - y.omega0_exact).abs() < 1e-8);
        }
    }

    #[test]
    fn three_site_bic_frequency() {
        let c = find_bics_analytic(&LatticeConfig::uniform(3, 5.0, 0.05, 0.13), 2).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].frequency - PI * PI / 50.0).abs() < 1e-15);
        // The antisymmetric mode leaves the middle site untouched.
        assert_eq!(c[0].site_amplitudes[1].norm(), 0.0);
    }

    #[test]
    fn three_site_numeric_finds_analytic_bic() {
        let cfg = LatticeConfig::uniform(3, 5.0, 0.05, 0.13);
        let a = find_bics_analytic(&cfg, 2).unwrap();
        let b = find_bics_numeric(&cfg, 1).unwrap();
        let hit = b.iter().find(|c| (c.frequency - a[0].frequency).abs() < 1e-10);
        assert!(hit.is_some(), "{b:?}");
        assert_eq!(hit.unwrap().branch, 1);
    }

    #[test]
    fn three_site_symmetric_sector_bic() {
        let cfg = LatticeConfig::uniform(3, 5.0, 0.05, 0.13);
        let c = find_bics(&cfg, 2).unwrap();
        assert!(c
            .iter()
            .any(|b| b.branch == 1 && (b.frequency - PI * PI / 50.0).abs() < 1e-15));
        let sym = c.iter().find(|b| b.branch != 1).expect("symmetric-sector BIC");
        let a = &sym.site_amplitudes;
        assert!((a[0] - a[2]).norm() < 1e-7 * a[1].norm());
        // Distinct from the antisymmetric one despite lying within 1e-4 of it.
        assert!((sym.frequency - PI * PI / 50.0).abs() > 1e-6);
    }

    #[test]
    fn analytic_bics_need_uniform_three_site() {
        let cfg = LatticeConfig::new(vec![0.0, 3.0, 10.0], 0.05, 0.13);
        assert!(matches!(
            find_bics_analytic(&cfg, 2),
            Err(SpectrumError::AnalyticUnavailable(_))
        ));
    }

    #[test]
    fn bic_exact_match_detuning() {
        let c = find_bics(&two_site(0.05), 1).unwrap();
        assert!((c[0].omega0_exact - 0.18).abs() < 0.01);
        let exact = two_site(c[0].omega0_exact);
        let states = bound_states(&exact, 1, &Thresholds::default()).unwrap();
        assert!(states.iter().any(|s| s.kind == BoundKind::Bic && s.branch == 1));
    }

    #[test]
    fn bic_d_loci_at_fixed_detuning() {
        let grid: Vec<f64> = (0..=60).map(|i| 2.0 + 0.3 * i as f64).collect();
        let loci = bic_d_loci(&two_site(0.05), 0.05, 2, &grid).unwrap();
        let ds: Vec<f64> = loci.iter().map(|l| l.d).collect();
        assert_eq!(ds.len(), 2, "{ds:?}");
        assert!((ds[0] - 8.67).abs() < 0.05);
        assert!((ds[1] - 17.36).abs() < 0.05);
    }

    #[test]
    fn omega0_scan_and_csv() {
        let grid: Vec<f64> = (0..11).map(|i| -0.1 + 0.05 * i as f64).collect();
        let scan = scan_spectrum(&two_site(0.0), ScanParameter::Omega0, &grid, 1, &Thresholds::default()).unwrap();
        assert_eq!(scan.points[0].states.len(), 2);
        assert_eq!(scan.points[10].states.len(), 1);
        assert_eq!(scan.bic_markers.len(), 1);
        let mut buf = Vec::new();
        write_scan_csv(&scan, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("param,branch,kind,varpi,reZ,imZ\n"));
        assert_eq!(text.lines().filter(|l| l.contains(",BIC,")).count(), 1);
    }

    #[test]
    fn scan_rejects_bad_grid() {
        let e = scan_spectrum(
            &two_site(0.0),
            ScanParameter::Omega0,
            &[0.1, 0.0],
            1,
            &Thresholds::default(),
        );
        assert!(matches!(e, Err(SpectrumError::InvalidGrid(_))));
    }

    #[test]
    fn d_scan_transition() {
        let grid = [3.0, 4.0, 6.0, 7.0];
        let scan = scan_spectrum(&two_site(0.05), ScanParameter::D, &grid, 1, &Thresholds::default()).unwrap();
        let counts: Vec<usize> = scan.points.iter().map(|p| p.states.len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 2]);
    }

    #[test]
    fn phase_diagram_counts_and_bic_curve() {
        let d = [3.0, 5.0, 8.0];
        let w = [-0.05, 0.1, 0.5];
        let pd = phase_diagram(&two_site(0.0), &d, &w, 1, &Thresholds::default()).unwrap();
        assert!(pd.n_boc.iter().all(|&n| n <= 2));
        assert_eq!(pd.n_boc[(0, 0)], 2);
        let at5 = pd.bic_curves.iter().find(|l| l.d == 5.0 && l.n == 1).unwrap();
        assert!((at5.omega0_exact - 0.18).abs() < 0.01);
        let mut buf = Vec::new();
        write_phase_csv(&pd, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }

    #[test]
    fn phase_diagram_decoupled() {
        let pd = phase_diagram(
            &LatticeConfig::uniform(2, 5.0, 0.0, 0.0),
            &[3.0, 5.0],
            &[-0.1, 0.1],
            1,
            &Thresholds::default(),
        )
        .unwrap();
        assert!(pd.decoupled);
        assert!(pd.n_boc.iter().all(|&n| n == 0));
    }

    #[test]
    fn weights_are_complete() {
        for cfg in [
            two_site(-0.02),
            two_site(-0.3),
            LatticeConfig::uniform(3, 5.0, -0.05, 0.13),
        ] {
            let total: f64 = find_bocs(&cfg, &Thresholds::default())
                .unwrap()
                .iter()
                .map(BoundState::weight)
                .sum();
            assert!(total <= 1.0 + 1e-6, "{total}");
        }
    }

    #[test]
    fn residues_round_trip() {
        let cfg = two_site(-0.02);
        let s = find_bocs(&cfg, &Thresholds::default()).unwrap();
        let r = residues(&cfg, &s).unwrap();
        for (a, b) in s.iter().zip(&r) {
            assert!((a.residue_weight - b.residue_weight).norm() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn pole_function_decreasing(w0 in -0.3f64..0.4, d in 2.0f64..12.0, n in 1usize..4) {
            let k = Kernel::new(&LatticeConfig::uniform(n, d, w0, 0.13));
            let pts: Vec<f64> = (0..40).map(|i| -5.0 * (1e-6f64 / 5.0).powf(i as f64 / 39.0)).collect();
            for j in 0..n {
                let y: Vec<f64> = pts.iter().map(|&p| pole_function(&k, j, p).unwrap()).collect();
                for w in y.windows(2) {
                    prop_assert!(w[1] - w[0] < 0.0);
                }
            }
        }

        #[test]
        fn reported_bocs_satisfy_invariants(w0 in -0.3f64..0.3, d in 2.0f64..10.0, n in 1usize..4) {
            let cfg = LatticeConfig::uniform(n, d, w0, 0.13);
            let k = Kernel::new(&cfg);
            let th = Thresholds::default();
            for b in find_bocs(&cfg, &th).unwrap() {
                prop_assert!(b.frequency <= -th.eps_edge);
                prop_assert!(b.residue_weight.norm() <= 1.0 + 1e-9);
                prop_assert!(b.residue_weight.norm() >= th.eps_z);
                let y = pole_function(&k, b.branch - 1, b.frequency).unwrap();
                prop_assert!((y - b.frequency).abs() <= 1e-10);
            }
        }

        #[test]
        fn bic_parity_split(d in 2.0f64..20.0) {
            for c in find_bics(&LatticeConfig::uniform(2, d, 0.1, 0.13), 6).unwrap() {
                prop_assert_eq!(c.branch, if c.n % 2 == 1 { 1 } else { 2 });
                prop_assert!(c.frequency > 0.0);
            }
        }
    }
}

//! Spectral density J(ω), memory kernel f(t), Laplace kernel f̃(s) and its
//! branch (eigen) decomposition D(s) = V_s⁻¹ f̃(s) V_s.
//!
//! Every frequency integral is carried out in x = √(2ω), which turns
//! J(ω) dω into the smooth Gaussian C e^{−x²} cos(d x) dx with
//! C = Ω² / (2√π) and removes the ω^{−1/2} band-edge singularity.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::model::LatticeConfig;
use crate::quad::{GaussKronrod, QuadError};

/// Frequency cutoff of all ω integrals; e^{−2ω} < 1e−34 beyond it.
pub const DEFAULT_OMEGA_MAX: f64 = 40.0;

/// Reference point at which numeric branches receive their labels.
pub const BRANCH_REFERENCE_S: Complex64 = Complex64::new(1.0, 0.0);

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("spectral density requested at non-positive frequency ω = {0}")]
    NonPositiveFrequency(f64),
    #[error("memory kernel requested at negative time t = {0}")]
    NegativeTime(f64),
    #[error("Laplace kernel requested on the branch cut at s = {0}")]
    BranchCut(Complex64),
    #[error("branch spectral combination does not vanish at ϖ = {varpi}: weight {weight:.3e}")]
    NotRemovable { varpi: f64, weight: f64 },
    #[error("near-degenerate branches at s = {s}: gap {gap:.3e}")]
    Degenerate { s: Complex64, gap: f64 },
    #[error("closed-form kernel disagrees with quadrature at t = {t}: relative error {error:.3e}")]
    ClosedFormMismatch { t: f64, error: f64 },
    #[error("branch index {index} out of range for {n} branches")]
    BranchIndex { index: usize, n: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// How the branches at a given s were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchMethod {
    Scalar,
    AnalyticTwoSite,
    AnalyticThreeSite,
    Numeric,
}

impl BranchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BranchMethod::Scalar => "scalar",
            BranchMethod::AnalyticTwoSite => "analytic-N2",
            BranchMethod::AnalyticThreeSite => "analytic-N3",
            BranchMethod::Numeric => "numeric-general",
        }
    }
}

/// Evaluation of D(s), V_s and V_s⁻¹ at one point s.
#[derive(Debug, Clone)]
pub struct BranchDecomposition {
    pub s: Complex64,
    pub method: BranchMethod,
    /// D_j(s), j = 1..N stored 0-based.
    pub values: Vec<Complex64>,
    /// Columns are the branch eigenvectors.
    pub vectors: DMatrix<Complex64>,
    pub inverse: DMatrix<Complex64>,
}

impl BranchDecomposition {
    pub fn n_branches(&self) -> usize {
        self.values.len()
    }

    /// V_s D(s) V_s⁻¹.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        &self.vectors * d * &self.inverse
    }

    /// M with M_{jl} = (V_s)_{jl} (V_s⁻¹ c(0))_l, so that
    /// c̃(s) = M [s + iω0 + D(s)]⁻¹ (1, …, 1)ᵀ.
    pub fn mixing(&self, c0: &DVector<Complex64>) -> DMatrix<Complex64> {
        let w = &self.inverse * c0;
        let mut m = self.vectors.clone();
        for (l, mut col) in m.column_iter_mut().enumerate() {
            col *= w[l];
        }
        m
    }
}

/// Evaluators for one lattice configuration. Pure functions of (config, s or t).
#[derive(Debug, Clone)]
pub struct Kernel {
    config: LatticeConfig,
    omega_max: f64,
    quad: GaussKronrod,
    /// Distinct pairwise separations, `distances[0] == 0`.
    distances: Vec<f64>,
    /// Row-major N×N map from site pair to index into `distances`.
    pair_index: Vec<usize>,
}

impl Kernel {
    pub fn new(config: &LatticeConfig) -> Self {
        Self::with_cutoff(config, DEFAULT_OMEGA_MAX)
    }

    pub fn with_cutoff(config: &LatticeConfig, omega_max: f64) -> Self {
        let n = config.n_sites();
        let sep = config.separations();
        let mut distances = vec![0.0];
        let mut pair_index = vec![0; n * n];
        for j in 0..n {
            for l in 0..n {
                let d = sep[(j, l)];
                let tol = 1e-12 * d.max(1.0);
                let idx = match distances.iter().position(|&x| (x - d).abs() <= tol) {
                    Some(i) => i,
                    None => {
                        distances.push(d);
                        distances.len() - 1
                    }
                };
                pair_index[j * n + l] = idx;
            }
        }
        Self {
            config: config.clone(),
            omega_max,
            quad: GaussKronrod::with_tolerances(1e-17, 1e-12),
            distances,
            pair_index,
        }
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn n_sites(&self) -> usize {
        self.config.n_sites()
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    pub fn x_max(&self) -> f64 {
        (2.0 * self.omega_max).sqrt()
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn quadrature(&self) -> &GaussKronrod {
        &self.quad
    }

    /// Index into [`Self::distances`] for the site pair (j, l), 0-based.
    pub fn pair_index(&self, j: usize, l: usize) -> usize {
        self.pair_index[j * self.n_sites() + l]
    }

    /// C in J(ω) dω = C e^{−x²} cos(d x) dx.
    pub fn density_prefactor(&self) -> f64 {
        self.config.drive * self.config.drive / (2.0 * PI.sqrt())
    }

    fn expand<T: nalgebra::Scalar + Copy>(&self, comps: &[T]) -> DMatrix<T> {
        let n = self.n_sites();
        DMatrix::from_fn(n, n, |j, l| comps[self.pair_index(j, l)])
    }

    /// J_m(ω) for every distinct separation.
    pub fn spectral_density_components(&self, omega: f64) -> Result<Vec<f64>, KernelError> {
        if !(omega > 0.0) {
            return Err(KernelError::NonPositiveFrequency(omega));
        }
        let om = self.config.drive;
        let k = (2.0 * omega).sqrt();
        let base = om * om * (-2.0 * omega).exp() / (8.0 * PI * omega).sqrt();
        Ok(self.distances.iter().map(|d| base * (k * d).cos()).collect())
    }

    /// J(ω) = Ω² e^{−2ω} / √(8πω) · cos(√(2ω) d̄_{jl}).
    pub fn spectral_density(&self, omega: f64) -> Result<DMatrix<f64>, KernelError> {
        Ok(self.expand(&self.spectral_density_components(omega)?))
    }

    /// dJ/dω.
    pub fn spectral_density_derivative(&self, omega: f64) -> Result<DMatrix<f64>, KernelError> {
        if !(omega > 0.0) {
            return Err(KernelError::NonPositiveFrequency(omega));
        }
        let om = self.config.drive;
        let k = (2.0 * omega).sqrt();
        let base = om * om * (-2.0 * omega).exp() / (8.0 * PI * omega).sqrt();
        let comps: Vec<f64> = self
            .distances
            .iter()
            .map(|d| base * ((-2.0 - 0.5 / omega) * (k * d).cos() - (k * d).sin() * d / k))
            .collect();
        Ok(self.expand(&comps))
    }

    /// f_m(t) = (Ω²/4)(1 + it/2)^{−1/2} exp[−d²/(4(1 + it/2))] per separation.
    pub fn kernel_time_components(&self, t: f64) -> Vec<Complex64> {
        let amp = 0.25 * self.config.drive * self.config.drive;
        let z = Complex64::new(1.0, 0.5 * t);
        let pre = z.sqrt().inv() * amp;
        self.distances
            .iter()
            .map(|d| pre * (-(d * d) / (4.0 * z)).exp())
            .collect()
    }

    pub fn kernel_time(&self, t: f64) -> Result<DMatrix<Complex64>, KernelError> {
        if t < 0.0 {
            return Err(KernelError::NegativeTime(t));
        }
        Ok(self.expand(&self.kernel_time_components(t)))
    }

    /// f(t) by direct quadrature of ∫ J(ω) e^{−iωt} dω.
    pub fn kernel_time_quadrature(&self, t: f64) -> Result<Vec<Complex64>, KernelError> {
        let c = self.density_prefactor();
        let xm = self.x_max();
        let nd = self.distances.len();
        // Split so every panel holds a bounded number of e^{−i x² t/2} oscillations.
        let mut pts = vec![0.0, xm];
        let n_split = ((t.abs() * xm * xm / 2.0) / (4.0 * PI)).ceil().min(2000.0) as usize;
        for i in 1..n_split {
            pts.push(xm * (i as f64 / n_split as f64).sqrt());
        }
        let r = self.quad.integrate(
            |x, out| {
                let g = Complex64::new(-x * x, -0.5 * x * x * t).exp() * c;
                for (o, d) in out.iter_mut().zip(&self.distances) {
                    *o = g * (d * x).cos();
                }
            },
            &pts,
            nd,
        )?;
        Ok(r.values)
    }

    /// Checks the closed-form kernel against quadrature; returns the worst
    /// relative error (relative to f(0)).
    pub fn validate_closed_form(&self, times: &[f64], tol: f64) -> Result<f64, KernelError> {
        let scale = 0.25 * self.config.drive * self.config.drive;
        if scale == 0.0 {
            return Ok(0.0);
        }
        let mut worst: f64 = 0.0;
        for &t in times {
            let closed = self.kernel_time_components(t);
            let quad = self.kernel_time_quadrature(t)?;
            let err = closed
                .iter()
                .zip(&quad)
                .map(|(a, b)| (a - b).norm() / scale)
                .fold(0.0, f64::max);
            if err > tol {
                return Err(KernelError::ClosedFormMismatch { t, error: err });
            }
            worst = worst.max(err);
        }
        Ok(worst)
    }

    fn check_off_cut(&self, s: Complex64) -> Result<(), KernelError> {
        let on_axis = s.re.abs() <= 1e-14 * s.norm().max(1.0);
        if s.norm() == 0.0 || (on_axis && s.im < 0.0) || !s.re.is_finite() || !s.im.is_finite() {
            return Err(KernelError::BranchCut(s));
        }
        Ok(())
    }

    fn laplace_breakpoints(&self, s: Complex64) -> Vec<f64> {
        let xm = self.x_max();
        let mut pts = vec![0.0, xm];
        let mut push = |x: f64| {
            if x > 0.0 && x < xm {
                pts.push(x);
            }
        };
        if s.im >= 0.0 {
            let w = (2.0 * s.norm()).sqrt();
            for k in [1.0, 4.0, 16.0] {
                push(k * w);
            }
        } else {
            let xs = (-2.0 * s.im).sqrt();
            let w = (s.re.abs() / xs).max(1e-14 * xs);
            push(xs);
            for k in [1.0, 8.0, 64.0] {
                push(xs - k * w);
                push(xs + k * w);
            }
            push(0.5 * xs);
        }
        pts
    }

    /// f̃_m(s) (and −∫J_m/(s+iω)² when `with_derivative`) per separation.
    fn laplace_raw(
        &self,
        s: Complex64,
        with_derivative: bool,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>), KernelError> {
        self.check_off_cut(s)?;
        let nd = self.distances.len();
        let c = self.density_prefactor();
        let pts = self.laplace_breakpoints(s);
        let dim = if with_derivative { 2 * nd } else { nd };
        let r = self.quad.integrate(
            |x, out| {
                let den = s + I * (0.5 * x * x);
                let g = c * (-x * x).exp() / den;
                for (m, d) in self.distances.iter().enumerate() {
                    let v = g * (d * x).cos();
                    out[m] = v;
                    if with_derivative {
                        out[nd + m] = -v / den;
                    }
                }
            },
            &pts,
            dim,
        )?;
        let mut v = r.values;
        let deriv = if with_derivative { v.split_off(nd) } else { Vec::new() };
        Ok((v, deriv))
    }

    /// f̃_m(s) = ∫ J_m(ω) / (s + iω) dω per separation.
    pub fn laplace_components(&self, s: Complex64) -> Result<Vec<Complex64>, KernelError> {
        Ok(self.laplace_raw(s, false)?.0)
    }

    /// (f̃_m(s), ∂_s f̃_m(s)) per separation.
    pub fn laplace_components_with_derivative(
        &self,
        s: Complex64,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>), KernelError> {
        self.laplace_raw(s, true)
    }

    pub fn laplace_kernel(&self, s: Complex64) -> Result<DMatrix<Complex64>, KernelError> {
        Ok(self.expand(&self.laplace_components(s)?))
    }

    pub fn laplace_kernel_derivative(&self, s: Complex64) -> Result<DMatrix<Complex64>, KernelError> {
        Ok(self.expand(&self.laplace_components_with_derivative(s)?.1))
    }

    /// On the positive imaginary axis s = i a (a > 0): f̃ = −i R and
    /// ∂_s f̃ = Q with R = ∫J/(ω+a) dω and Q = ∫J/(ω+a)² dω, both real
    /// symmetric. Returned per separation.
    pub fn resolvent_components(&self, a: f64) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
        let (f, df) = self.laplace_components_with_derivative(Complex64::new(0.0, a))?;
        Ok((f.iter().map(|v| -v.im).collect(), df.iter().map(|v| v.re).collect()))
    }

    pub fn resolvent(&self, a: f64) -> Result<(DMatrix<f64>, DMatrix<f64>), KernelError> {
        let (r, q) = self.resolvent_components(a)?;
        Ok((self.expand(&r), self.expand(&q)))
    }

    /// P(ϖ) = PV ∫ J(ω) / (ω − ϖ) dω per separation. Ordinary integral for
    /// ϖ ≤ 0; for ϖ > 0 the pole at x* = √(2ϖ) is removed by folding the
    /// symmetric window [x* − δ, x* + δ] onto itself.
    pub fn principal_value_components(&self, varpi: f64) -> Result<Vec<f64>, KernelError> {
        let nd = self.distances.len();
        let c = self.density_prefactor();
        let xm = self.x_max();
        let dist = &self.distances;
        if varpi <= 0.0 {
            let a = -varpi;
            if a == 0.0 {
                return Err(KernelError::BranchCut(Complex64::new(0.0, 0.0)));
            }
            let r = self.resolvent_components(a)?.0;
            return Ok(r);
        }
        let xs = (2.0 * varpi).sqrt();
        let integrand = |x: f64, out: &mut [Complex64]| {
            let g = c * (-x * x).exp() / (0.5 * x * x - varpi);
            for (o, d) in out.iter_mut().zip(dist) {
                *o = Complex64::new(g * (d * x).cos(), 0.0);
            }
        };
        if xs >= xm {
            let r = self.quad.integrate(integrand, &[0.0, 0.5 * xm, xm], nd)?;
            return Ok(r.values.iter().map(|v| v.re).collect());
        }
        let delta = (0.5 * xs).min(1.0).min(xm - xs);
        let mut total = vec![0.0; nd];
        let outer = [(0.0, xs - delta), (xs + delta, xm)];
        for (a, b) in outer {
            if b > a {
                let r = self.quad.integrate(integrand, &[a, b], nd)?;
                for (t, v) in total.iter_mut().zip(&r.values) {
                    *t += v.re;
                }
            }
        }
        // g(x) = 2C e^{−x²} cos(dx) / (x + x*), integrand = g / (x − x*).
        let g = |x: f64, d: f64| 2.0 * c * (-x * x).exp() * (d * x).cos() / (x + xs);
        let mut pts = vec![0.0, delta];
        for k in [1e-3, 1e-1] {
            pts.push(k * delta);
        }
        let r = self.quad.integrate(
            |u, out| {
                for (o, d) in out.iter_mut().zip(dist) {
                    *o = Complex64::new((g(xs + u, *d) - g(xs - u, *d)) / u, 0.0);
                }
            },
            &pts,
            nd,
        )?;
        for (t, v) in total.iter_mut().zip(&r.values) {
            *t += v.re;
        }
        Ok(total)
    }

    pub fn principal_value(&self, varpi: f64) -> Result<DMatrix<f64>, KernelError> {
        Ok(self.expand(&self.principal_value_components(varpi)?))
    }

    /// Projected spectral combination w_v(ω) = v† J(ω) v.
    pub fn projected_density(&self, v: &DVector<Complex64>, omega: f64) -> Result<f64, KernelError> {
        let j = self.spectral_density(omega)?;
        Ok(quadratic_form(&j, v))
    }

    /// d w_v / dω.
    pub fn projected_density_derivative(&self, v: &DVector<Complex64>, omega: f64) -> Result<f64, KernelError> {
        let j = self.spectral_density_derivative(omega)?;
        Ok(quadratic_form(&j, v))
    }

    /// Branch value and derivative on the cut at a removable singularity.
    ///
    /// `v` is the (real, unit) branch eigenvector whose spectral combination
    /// vanishes at ϖ. Returns (D(−iϖ), ∂_s D(−iϖ)) computed from the projected
    /// density |Σ_j v_j e^{−i x z_j}|², which has a double zero at x* = √(2ϖ),
    /// so both integrals are ordinary.
    pub fn projected_on_cut(&self, v: &DVector<f64>, varpi: f64) -> Result<(Complex64, Complex64), KernelError> {
        if !(varpi > 0.0) {
            return Err(KernelError::NonPositiveFrequency(varpi));
        }
        let xs = (2.0 * varpi).sqrt();
        let pos = &self.config.positions;
        let amp = |x: f64| -> f64 {
            let mut a = Complex64::new(0.0, 0.0);
            for (vj, z) in v.iter().zip(pos) {
                a += Complex64::from_polar(*vj, -x * z);
            }
            a.norm_sqr()
        };
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        let weight = amp(xs);
        if weight > 1e-10 * norm2 {
            return Err(KernelError::NotRemovable { varpi, weight });
        }
        let c = self.density_prefactor();
        let xm = self.x_max();
        let mut pts = vec![0.0, xm];
        if xs < xm {
            pts.push(xs);
            pts.push(0.5 * xs);
            if xs + 0.5 < xm {
                pts.push(xs + 0.5);
            }
        }
        let r = self.quad.integrate(
            |x, out| {
                let den = 0.5 * x * x - varpi;
                let w = c * (-x * x).exp() * amp(x) / norm2;
                let a = w / den;
                out[0] = Complex64::new(0.0, -a);
                out[1] = Complex64::new(a / den, 0.0);
            },
            &pts,
            2,
        )?;
        Ok((r.values[0], r.values[1]))
    }

    /// D(s), V_s, V_s⁻¹. Uniform N = 2 and N = 3 use the closed forms;
    /// anything else is diagonalised numerically and labelled by
    /// continuation from [`BRANCH_REFERENCE_S`].
    pub fn branch_decompose(&self, s: Complex64) -> Result<BranchDecomposition, KernelError> {
        let f = self.laplace_components(s)?;
        match self.analytic_method() {
            Some(m) => Ok(analytic_decomposition(m, s, &f)),
            None => self.numeric_decomposition_tracked(s, None),
        }
    }

    /// Like [`Self::branch_decompose`] but numeric branches are matched to
    /// `previous` by maximal eigenvector overlap.
    pub fn branch_decompose_from(
        &self,
        s: Complex64,
        previous: &BranchDecomposition,
    ) -> Result<BranchDecomposition, KernelError> {
        match self.analytic_method() {
            Some(m) => Ok(analytic_decomposition(m, s, &self.laplace_components(s)?)),
            None => self.numeric_decomposition_tracked(s, Some(previous)),
        }
    }

    /// Closed-form branch structure available for this geometry.
    pub fn analytic_method(&self) -> Option<BranchMethod> {
        match (self.n_sites(), self.config.uniform_spacing()) {
            (1, _) => Some(BranchMethod::Scalar),
            (2, _) => Some(BranchMethod::AnalyticTwoSite),
            (3, Some(_)) => Some(BranchMethod::AnalyticThreeSite),
            _ => None,
        }
    }

    fn numeric_at(&self, s: Complex64) -> Result<BranchDecomposition, KernelError> {
        let f = self.laplace_kernel(s)?;
        let (values, vectors) = complex_eigen(&f, s)?;
        let inverse = vectors
            .clone()
            .try_inverse()
            .ok_or(KernelError::Degenerate { s, gap: 0.0 })?;
        Ok(BranchDecomposition {
            s,
            method: BranchMethod::Numeric,
            values,
            vectors,
            inverse,
        })
    }

    fn numeric_decomposition_tracked(
        &self,
        s: Complex64,
        previous: Option<&BranchDecomposition>,
    ) -> Result<BranchDecomposition, KernelError> {
        if let Some(prev) = previous {
            let next = self.numeric_at(s)?;
            return reorder_by_overlap(prev, next);
        }
        // Label at the reference point by descending real part, then continue.
        let mut current = self.numeric_at(BRANCH_REFERENCE_S)?;
        let order = {
            let mut idx: Vec<usize> = (0..current.values.len()).collect();
            idx.sort_by(|&a, &b| current.values[b].re.total_cmp(&current.values[a].re));
            idx
        };
        current = permute(&current, &order);
        if (s - BRANCH_REFERENCE_S).norm() == 0.0 {
            return Ok(current);
        }
        let mut steps = 8;
        loop {
            let mut ok = true;
            let mut walker = current.clone();
            for k in 1..=steps {
                let sk = BRANCH_REFERENCE_S + (s - BRANCH_REFERENCE_S) * (k as f64 / steps as f64);
                match reorder_by_overlap(&walker, self.numeric_at(sk)?) {
                    Ok(next) => walker = next,
                    Err(e) => {
                        if steps >= 128 {
                            return Err(e);
                        }
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(walker);
            }
            steps *= 2;
        }
    }

    /// ∂_s D_j(s) for 0-based branch `j`.
    pub fn branch_derivative(&self, j: usize, s: Complex64) -> Result<Complex64, KernelError> {
        let (_, d) = self.branch_values_with_derivatives(s)?;
        d.get(j)
            .copied()
            .ok_or(KernelError::BranchIndex { index: j, n: d.len() })
    }

    /// (D_j(s), ∂_s D_j(s)) for all branches, sharing one quadrature.
    pub fn branch_values_with_derivatives(
        &self,
        s: Complex64,
    ) -> Result<(Vec<Complex64>, Vec<Complex64>), KernelError> {
        let (f, df) = self.laplace_components_with_derivative(s)?;
        match self.analytic_method() {
            Some(BranchMethod::Scalar) => Ok((vec![f[0]], vec![df[0]])),
            Some(BranchMethod::AnalyticTwoSite) => {
                Ok((vec![f[0] + f[1], f[0] - f[1]], vec![df[0] + df[1], df[0] - df[1]]))
            }
            Some(BranchMethod::AnalyticThreeSite) => {
                let e = three_site_e(s, f[1], f[2]);
                let de = (8.0 * f[1] * df[1] + f[2] * df[2]) / e;
                Ok((
                    vec![f[0] - f[2], f[0] + 0.5 * (f[2] - e), f[0] + 0.5 * (f[2] + e)],
                    vec![df[0] - df[2], df[0] + 0.5 * (df[2] - de), df[0] + 0.5 * (df[2] + de)],
                ))
            }
            _ => {
                let dec = self.numeric_decomposition_tracked(s, None)?;
                let dm = self.expand(&df);
                // Hellmann-Feynman: ∂_s D_j = (V⁻¹ ∂_s f̃ V)_{jj}.
                let proj = &dec.inverse * dm * &dec.vectors;
                let d = (0..dec.n_branches()).map(|j| proj[(j, j)]).collect();
                Ok((dec.values, d))
            }
        }
    }

    /// Real symmetric eigen-structure of R(a) on the positive imaginary
    /// axis s = i a, sorted by descending eigenvalue. Returns
    /// (r_j, q_j = v_jᵀ Q v_j, v_j) per branch.
    pub fn axis_branches(&self, a: f64) -> Result<Vec<(f64, f64, DVector<f64>)>, KernelError> {
        let (r, q) = self.resolvent(a)?;
        let eig = SymmetricEigen::new(r);
        let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
        Ok(idx
            .into_iter()
            .map(|i| {
                let v = eig.eigenvectors.column(i).into_owned();
                let qj = (v.transpose() * &q * &v)[(0, 0)];
                (eig.eigenvalues[i], qj, v)
            })
            .collect())
    }
}

fn quadratic_form(m: &DMatrix<f64>, v: &DVector<Complex64>) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..v.len() {
        for l in 0..v.len() {
            acc += v[j].conj() * m[(j, l)] * v[l];
        }
    }
    acc.re
}

/// ẽ = √(8 f̃₁² + f̃₂²) continued from large real s, where it tends to a
/// positive multiple of 1/s: ẽ = √(s²(8f̃₁² + f̃₂²)) / s with the principal root.
pub fn three_site_e(s: Complex64, f1: Complex64, f2: Complex64) -> Complex64 {
    (s * s * (8.0 * f1 * f1 + f2 * f2)).sqrt() / s
}

fn analytic_decomposition(method: BranchMethod, s: Complex64, f: &[Complex64]) -> BranchDecomposition {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    match method {
        BranchMethod::Scalar => BranchDecomposition {
            s,
            method,
            values: vec![f[0]],
            vectors: DMatrix::from_element(1, 1, one),
            inverse: DMatrix::from_element(1, 1, one),
        },
        BranchMethod::AnalyticTwoSite => {
            let v = DMatrix::from_row_slice(2, 2, &[one, one, one, -one]);
            BranchDecomposition {
                s,
                method,
                values: vec![f[0] + f[1], f[0] - f[1]],
                inverse: v.map(|x| x * 0.5),
                vectors: v,
            }
        }
        BranchMethod::AnalyticThreeSite => {
            let (f0, f1, f2) = (f[0], f[1], f[2]);
            let e = three_site_e(s, f1, f2);
            let v22 = f1 * (e - 3.0 * f2) / (f2 * e - 2.0 * f1 * f1 - f2 * f2);
            let v23 = f1 * (e + 3.0 * f2) / (f2 * e + 2.0 * f1 * f1 + f2 * f2);
            let v = DMatrix::from_row_slice(3, 3, &[-one, one, one, zero, v22, v23, one, one, one]);
            let inverse = v.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(3, 3));
            BranchDecomposition {
                s,
                method,
                values: vec![f0 - f2, f0 + 0.5 * (f2 - e), f0 + 0.5 * (f2 + e)],
                vectors: v,
                inverse,
            }
        }
        BranchMethod::Numeric => unreachable!("numeric decompositions are built by Kernel"),
    }
}

/// The printed three-site mixing matrix for c(0) = (1, 0, 0)ᵀ.
pub fn three_site_mixing(s: Complex64, f: &[Complex64]) -> DMatrix<Complex64> {
    let e = three_site_e(s, f[1], f[2]);
    let r = f[2] / e;
    let q = f[1] / e;
    let h = Complex64::new(0.5, 0.0);
    let z = Complex64::new(0.0, 0.0);
    DMatrix::from_row_slice(
        3,
        3,
        &[
            h,
            (1.0 - r) / 4.0,
            (1.0 + r) / 4.0,
            z,
            -q,
            q,
            -h,
            (1.0 - r) / 4.0,
            (1.0 + r) / 4.0,
        ],
    )
}

/// Eigenvalues and eigenvectors of a small complex matrix via complex Schur
/// form and triangular back-substitution. Eigenvectors are scaled to
/// vᵀv = 1 (complex-symmetric normalisation) when that is well defined.
pub fn complex_eigen(
    a: &DMatrix<Complex64>,
    s: Complex64,
) -> Result<(Vec<Complex64>, DMatrix<Complex64>), KernelError> {
    let n = a.nrows();
    let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (q, t) = a.clone().schur().unpack();
    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in 0..i {
            gap = gap.min((values[i] - values[j]).norm());
        }
    }
    if n > 1 && gap <= 1e-10 * scale {
        return Err(KernelError::Degenerate { s, gap });
    }
    let mut vectors = DMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        let mut y = DVector::from_element(n, Complex64::new(0.0, 0.0));
        y[k] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in (j + 1)..=k {
                acc += t[(j, i)] * y[i];
            }
            y[j] = -acc / (t[(j, j)] - lambda);
        }
        let mut v = &q * y;
        let vtv: Complex64 = v.iter().map(|x| x * x).sum();
        let vhv: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        let norm = if vtv.norm() > 1e-8 * vhv {
            vtv.sqrt()
        } else {
            Complex64::new(vhv.sqrt(), 0.0)
        };
        v /= norm;
        vectors.set_column(k, &v);
    }
    Ok((values, vectors))
}

fn permute(dec: &BranchDecomposition, order: &[usize]) -> BranchDecomposition {
    let n = order.len();
    let mut vectors = DMatrix::zeros(n, n);
    let mut inverse = DMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &dec.vectors.column(old));
        inverse.set_row(new, &dec.inverse.row(old));
    }
    BranchDecomposition {
        s: dec.s,
        method: dec.method,
        values: order.iter().map(|&o| dec.values[o]).collect(),
        vectors,
        inverse,
    }
}

fn overlap(a: &DMatrix<Complex64>, i: usize, b: &DMatrix<Complex64>, j: usize) -> f64 {
    let ca = a.column(i);
    let cb = b.column(j);
    let num: Complex64 = ca.iter().zip(cb.iter()).map(|(x, y)| x.conj() * y).sum();
    num.norm() / (ca.norm() * cb.norm())
}

/// Re-labels `next` so each branch continues the one of `prev` with which its
/// eigenvector overlaps most.
fn reorder_by_overlap(
    prev: &BranchDecomposition,
    next: BranchDecomposition,
) -> Result<BranchDecomposition, KernelError> {
    let n = prev.n_branches();
    let mut order = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for i in 0..n {
        let mut scores: Vec<(f64, usize)> = (0..n)
            .filter(|&j| !taken[j])
            .map(|j| (overlap(&prev.vectors, i, &next.vectors, j), j))
            .collect();
        scores.sort_by(|a, b| b.0.total_cmp(&a.0));
        if scores.len() > 1 && scores[0].0 - scores[1].0 < 0.1 {
            let gap = (next.values[scores[0].1] - next.values[scores[1].1]).norm();
            return Err(KernelError::Degenerate { s: next.s, gap });
        }
        order[i] = scores[0].1;
        taken[scores[0].1] = true;
    }
    Ok(permute(&next, &order))
}

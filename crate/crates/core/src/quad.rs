//! Globally adaptive Gauss-Kronrod (G10/K21) quadrature for vector-valued
//! complex integrands on finite intervals.
//!
//! All entries of a matrix-valued integral share one subdivision; the
//! refinement is driven by the worst component. Breakpoints let callers
//! split at known near-singular or resonant abscissae.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use thiserror::Error;

/// Kronrod abscissae on [0, 1]; odd indices are the Gauss abscissae.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_932_299_024,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Ten-point Gauss-Legendre rule on [-1, 1] as (abscissae, weights).
pub fn gauss_legendre_10() -> ([f64; 10], [f64; 10]) {
    let mut x = [0.0; 10];
    let mut w = [0.0; 10];
    for (i, (&n, &wt)) in XGK.iter().skip(1).step_by(2).zip(WG.iter()).enumerate() {
        x[2 * i] = -n;
        x[2 * i + 1] = n;
        w[2 * i] = wt;
        w[2 * i + 1] = wt;
    }
    (x, w)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature did not converge after {intervals} intervals: error estimate {error:.3e} > tolerance {tolerance:.3e}")]
    NotConverged {
        intervals: usize,
        error: f64,
        tolerance: f64,
    },
    #[error("integrand returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
    #[error("invalid integration range [{a}, {b}]")]
    InvalidRange { a: f64, b: f64 },
}

#[derive(Debug, Clone)]
pub struct Integral {
    pub values: Vec<Complex64>,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GaussKronrod {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for GaussKronrod {
    fn default() -> Self {
        Self {
            abs_tol: 1e-15,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    values: Vec<Complex64>,
    error: f64,
    /// Largest ∫|f| over components; sets the roundoff floor.
    abs: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

impl GaussKronrod {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Integrates `f` over `[points[0], points[last]]`, splitting at every
    /// interior point. `f(x, out)` writes the `dim` integrand components.
    pub fn integrate<F>(&self, mut f: F, points: &[f64], dim: usize) -> Result<Integral, QuadError>
    where
        F: FnMut(f64, &mut [Complex64]),
    {
        let mut pts: Vec<f64> = points.to_vec();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1.0));
        if pts.len() < 2 || !pts.iter().all(|p| p.is_finite()) {
            return Err(QuadError::InvalidRange {
                a: *points.first().unwrap_or(&f64::NAN),
                b: *points.last().unwrap_or(&f64::NAN),
            });
        }

        let mut scratch = Scratch::new(dim);
        let mut heap = BinaryHeap::new();
        for w in pts.windows(2) {
            heap.push(self.rule(&mut f, w[0], w[1], &mut scratch)?);
        }

        loop {
            let mut total = vec![Complex64::new(0.0, 0.0); dim];
            let mut error = 0.0;
            let mut abs = 0.0;
            for s in heap.iter() {
                for (t, v) in total.iter_mut().zip(&s.values) {
                    *t += v;
                }
                error += s.error;
                abs += s.abs;
            }
            let scale = total.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let tolerance = self.abs_tol.max(self.rel_tol * scale).max(100.0 * f64::EPSILON * abs);
            if error <= tolerance {
                return Ok(Integral {
                    values: total,
                    error,
                    intervals: heap.len(),
                });
            }
            if heap.len() >= self.max_intervals {
                return Err(QuadError::NotConverged {
                    intervals: heap.len(),
                    error,
                    tolerance,
                });
            }
            let worst = heap.pop().expect("heap holds at least one segment");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Segment at floating-point resolution; accept what it has.
                heap.push(Segment { error: 0.0, ..worst });
                continue;
            }
            heap.push(self.rule(&mut f, worst.a, mid, &mut scratch)?);
            heap.push(self.rule(&mut f, mid, worst.b, &mut scratch)?);
        }
    }

    /// Scalar convenience wrapper.
    pub fn integrate_scalar<F>(&self, mut f: F, points: &[f64]) -> Result<(Complex64, f64), QuadError>
    where
        F: FnMut(f64) -> Complex64,
    {
        let r = self.integrate(|x, out| out[0] = f(x), points, 1)?;
        Ok((r.values[0], r.error))
    }

    /// Real-valued convenience wrapper.
    pub fn integrate_real<F>(&self, mut f: F, points: &[f64]) -> Result<(f64, f64), QuadError>
    where
        F: FnMut(f64) -> f64,
    {
        let (v, e) = self.integrate_scalar(|x| Complex64::new(f(x), 0.0), points)?;
        Ok((v.re, e))
    }

    fn rule<F>(&self, f: &mut F, a: f64, b: f64, s: &mut Scratch) -> Result<Segment, QuadError>
    where
        F: FnMut(f64, &mut [Complex64]),
    {
        let dim = s.dim;
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);

        s.kronrod.fill(Complex64::new(0.0, 0.0));
        s.gauss.fill(Complex64::new(0.0, 0.0));
        s.res_abs.fill(0.0);

        // Node values are kept so the mean-deviation estimate can be formed.
        let mut eval = |x: f64, slot: usize, s: &mut Scratch| -> Result<(), QuadError> {
            let out = &mut s.nodes[slot * dim..(slot + 1) * dim];
            f(x, out);
            if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(QuadError::NonFinite { x });
            }
            Ok(())
        };

        eval(center, 0, s)?;
        for c in 0..dim {
            let v = s.nodes[c];
            s.kronrod[c] = v * WGK[10];
            s.res_abs[c] = WGK[10] * v.norm();
        }
        for j in 0..10 {
            let dx = half * XGK[j];
            eval(center - dx, 1 + 2 * j, s)?;
            eval(center + dx, 2 + 2 * j, s)?;
            for c in 0..dim {
                let lo = s.nodes[(1 + 2 * j) * dim + c];
                let hi = s.nodes[(2 + 2 * j) * dim + c];
                s.kronrod[c] += (lo + hi) * WGK[j];
                s.res_abs[c] += WGK[j] * (lo.norm() + hi.norm());
                if j % 2 == 1 {
                    s.gauss[c] += (lo + hi) * WG[j / 2];
                }
            }
        }

        let mut values = Vec::with_capacity(dim);
        let mut error: f64 = 0.0;
        let mut abs: f64 = 0.0;
        for c in 0..dim {
            let mean = s.kronrod[c] * 0.5;
            let mut res_asc = WGK[10] * (s.nodes[c] - mean).norm();
            for j in 0..10 {
                let lo = s.nodes[(1 + 2 * j) * dim + c];
                let hi = s.nodes[(2 + 2 * j) * dim + c];
                res_asc += WGK[j] * ((lo - mean).norm() + (hi - mean).norm());
            }
            let raw = ((s.kronrod[c] - s.gauss[c]) * half).norm();
            let res_abs = s.res_abs[c] * half.abs();
            res_asc *= half.abs();
            abs = abs.max(res_abs);
            error = error.max(rescale_error(raw, res_abs, res_asc));
            values.push(s.kronrod[c] * half);
        }
        Ok(Segment {
            a,
            b,
            values,
            error,
            abs,
        })
    }
}

struct Scratch {
    dim: usize,
    nodes: Vec<Complex64>,
    kronrod: Vec<Complex64>,
    gauss: Vec<Complex64>,
    res_abs: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            nodes: vec![Complex64::new(0.0, 0.0); 21 * dim],
            kronrod: vec![Complex64::new(0.0, 0.0); dim],
            gauss: vec![Complex64::new(0.0, 0.0); dim],
            res_abs: vec![0.0; dim],
        }
    }
}

fn rescale_error(raw: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut err = raw;
    if res_asc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / res_asc).powf(1.5);
        err = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    err
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rules_integrate_polynomials_exactly() {
        // K21 is exact through degree 31, G10 through degree 19.
        for deg in [0u32, 5, 19, 31] {
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            let mut k = WGK[10] * if deg == 0 { 1.0 } else { 0.0 };
            for j in 0..10 {
                k += WGK[j] * (XGK[j].powi(deg as i32) + (-XGK[j]).powi(deg as i32));
            }
            assert!((k - exact).abs() < 1e-14, "kronrod degree {deg}");
        }
        let (x, w) = gauss_legendre_10();
        for deg in [0i32, 4, 18, 19] {
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            let g: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            assert!((g - exact).abs() < 1e-14, "gauss degree {deg}");
        }
    }

    #[test]
    fn gaussian_integral() {
        let q = GaussKronrod::default();
        let (v, _) = q.integrate_real(|x| (-x * x).exp(), &[0.0, 10.0]).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn oscillatory_complex_integrand() {
        // ∫_0^π e^{i 40 x} dx = (e^{i 40π} - 1)/(40 i) = 0
        let q = GaussKronrod::default();
        let (v, _) = q
            .integrate_scalar(|x| Complex64::new(0.0, 40.0 * x).exp(), &[0.0, std::f64::consts::PI])
            .unwrap();
        assert!(v.norm() < 1e-13);
    }

    #[test]
    fn sharp_peak_needs_breakpoint_or_refinement() {
        // Lorentzian of width 1e-4 at 0.3.
        let eps = 1e-4;
        let q = GaussKronrod::default();
        let (v, _) = q
            .integrate_real(|x| eps / ((x - 0.3).powi(2) + eps * eps), &[0.0, 0.3, 1.0])
            .unwrap();
        let exact = (0.7f64 / eps).atan() + (0.3f64 / eps).atan();
        assert_relative_eq!(v, exact, max_relative = 1e-11);
    }

    #[test]
    fn vector_components_share_subdivision() {
        let q = GaussKronrod::default();
        let r = q
            .integrate(
                |x, out| {
                    out[0] = Complex64::new(x.sin(), 0.0);
                    out[1] = Complex64::new(0.0, x.cos());
                },
                &[0.0, 1.0],
                2,
            )
            .unwrap();
        assert_relative_eq!(r.values[0].re, 1.0 - 1f64.cos(), max_relative = 1e-13);
        assert_relative_eq!(r.values[1].im, 1f64.sin(), max_relative = 1e-13);
    }

    #[test]
    fn reports_non_convergence() {
        let q = GaussKronrod {
            max_intervals: 3,
            ..GaussKronrod::default()
        };
        let err = q.integrate_real(|x| (1.0 / x).sin(), &[1e-6, 1.0]).unwrap_err();
        assert!(matches!(err, QuadError::NotConverged { .. }));
    }

    #[test]
    fn rejects_non_finite_integrand() {
        let q = GaussKronrod::default();
        let err = q.integrate_real(|_| f64::NAN, &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, QuadError::NonFinite { .. }));
    }
}

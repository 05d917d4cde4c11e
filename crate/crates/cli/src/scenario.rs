//! Scenario files and their resolution against command-line overrides.
//!
//! Precedence is built-in defaults, then the file, then flags.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use mwtunnel::dynamics::{DEFAULT_STEP, DEFAULT_T_MAX};
use mwtunnel::model::{LatticeConfig, ScenarioConfig, UnitSystem};
use mwtunnel::oracle::OracleOptions;
use mwtunnel::spectrum::{ScanParameter, Thresholds};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SPACING: f64 = 5.0;
pub const DEFAULT_DETUNING: f64 = 0.05;
pub const DEFAULT_DRIVE: f64 = 0.13;
pub const DEFAULT_N_MAX: usize = 3;

/// Input that does not match the schema. Maps to exit code 1.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error: {}", self.0)
    }
}

impl std::error::Error for SchemaError {}

pub fn schema(msg: impl Into<String>) -> anyhow::Error {
    SchemaError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SpectrumScan,
    Dynamics,
    PhaseDiagram,
    Bics,
    Verify,
    Reproduce,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::SpectrumScan => "spectrum-scan",
            Kind::Dynamics => "dynamics",
            Kind::PhaseDiagram => "phase-diagram",
            Kind::Bics => "bics",
            Kind::Verify => "verify",
            Kind::Reproduce => "reproduce",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub const fn new(start: f64, stop: f64, points: usize) -> Self {
        Self { start, stop, points }
    }

    pub fn values(&self) -> Result<Vec<f64>, anyhow::Error> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(schema("grid bounds must be finite"));
        }
        match self.points {
            0 => Err(schema("grid must have at least one point")),
            1 => Ok(vec![self.start]),
            n => {
                if self.stop <= self.start {
                    return Err(schema(format!(
                        "grid stop {} must exceed start {}",
                        self.stop, self.start
                    )));
                }
                let step = (self.stop - self.start) / (n - 1) as f64;
                Ok((0..n).map(|i| self.start + step * i as f64).collect())
            }
        }
    }
}

/// `start:stop:points`.
pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected start:stop:points, got {s:?}"));
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"));
    Ok(Grid {
        start: num(parts[0])?,
        stop: num(parts[1])?,
        points: parts[2].trim().parse().map_err(|e| format!("{:?}: {e}", parts[2]))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub parameter: ScanParameter,
    #[serde(flatten)]
    pub grid: Grid,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub eps_edge: Option<f64>,
    pub eps_z: Option<f64>,
    pub tol_bic: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub box_length: Option<f64>,
    pub n_modes: Option<usize>,
}

/// On-disk scenario. Every field is optional except `kind`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub kind: Option<Kind>,
    pub name: Option<String>,
    pub target: Option<String>,
    pub n_sites: Option<usize>,
    pub positions_zbar: Option<Vec<f64>>,
    pub omega0_wtilde: Option<f64>,
    pub omega_rabi_wtilde: Option<f64>,
    pub initial_site: Option<usize>,
    pub initial_amplitudes: Option<Vec<[f64; 2]>>,
    pub units: Option<UnitSystem>,
    pub t_max: Option<f64>,
    pub h: Option<f64>,
    pub output_stride: Option<usize>,
    pub scan: Option<ScanSpec>,
    pub d_grid: Option<Grid>,
    pub omega0_grid: Option<Grid>,
    pub n_max: Option<usize>,
    pub thresholds: Option<ThresholdSpec>,
    pub oracle: Option<OracleSpec>,
    pub verify_tolerance: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

const KNOWN_KEYS: &[&str] = &[
    "kind",
    "name",
    "target",
    "n_sites",
    "positions_zbar",
    "omega0_wtilde",
    "omega_rabi_wtilde",
    "initial_site",
    "initial_amplitudes",
    "units",
    "t_max",
    "h",
    "output_stride",
    "scan",
    "d_grid",
    "omega0_grid",
    "n_max",
    "thresholds",
    "oracle",
    "verify_tolerance",
    "output_dir",
];

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, anyhow::Error> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| schema(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| schema("scenario must be a JSON object"))?;
        let known: BTreeSet<&str> = KNOWN_KEYS.iter().copied().collect();
        let unknown: Vec<&String> = obj.keys().filter(|k| !known.contains(k.as_str())).collect();
        if !unknown.is_empty() {
            return Err(schema(format!("unknown keys {unknown:?}")));
        }
        serde_json::from_value(value).map_err(|e| schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, anyhow::Error> {
        let text = std::fs::read_to_string(path).map_err(|e| schema(format!("cannot read {}: {e}", path.display())))?;
        let mut file = Self::parse(&text).map_err(|e| schema(format!("{}: {e}", path.display())))?;
        if file.name.is_none() {
            file.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(file)
    }
}

/// Flags shared by every subcommand; each overrides the scenario file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Detuning ω0 in units of ω̃.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub omega0: Option<f64>,
    /// Uniform site spacing in units of z̄.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub d: Option<f64>,
    /// Drive strength Ω in units of ω̃.
    #[arg(long = "omega-rabi", global = true, allow_negative_numbers = true)]
    pub omega_rabi: Option<f64>,
    #[arg(long = "n-sites", global = true)]
    pub n_sites: Option<usize>,
    /// 1-based initially occupied site.
    #[arg(long = "initial-site", global = true)]
    pub initial_site: Option<usize>,
    #[arg(long = "t-max", global = true, allow_negative_numbers = true)]
    pub t_max: Option<f64>,
    /// Volterra step.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Write every k-th trajectory sample.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    #[arg(long = "eps-edge", global = true, allow_negative_numbers = true)]
    pub eps_edge: Option<f64>,
    #[arg(long = "eps-z", global = true, allow_negative_numbers = true)]
    pub eps_z: Option<f64>,
    #[arg(long = "tol-bic", global = true, allow_negative_numbers = true)]
    pub tol_bic: Option<f64>,
    /// Highest BIC index searched.
    #[arg(long = "n-max", global = true)]
    pub n_max: Option<usize>,
    /// Oracle box length in units of z̄.
    #[arg(long = "oracle-L", global = true, allow_negative_numbers = true)]
    pub oracle_l: Option<f64>,
    /// Oracle mode count.
    #[arg(long = "oracle-K", global = true)]
    pub oracle_k: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleParams {
    pub box_length: f64,
    pub n_modes: usize,
    pub deflation: f64,
}

impl OracleParams {
    pub fn options(&self) -> OracleOptions {
        OracleOptions {
            box_length: self.box_length,
            n_modes: self.n_modes,
            deflation: self.deflation,
        }
    }
}

/// Fully resolved inputs; serialised verbatim into the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: Kind,
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub config: ScenarioConfig,
    pub t_max: f64,
    pub h: f64,
    pub output_stride: usize,
    pub n_max: usize,
    pub thresholds: Thresholds,
    pub oracle: OracleParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Grid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0_grid: Option<Grid>,
    pub verify_tolerance: f64,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Resolved {
    pub fn lattice(&self) -> &LatticeConfig {
        &self.config.lattice
    }
}

fn lattice(file: &ScenarioFile, o: &Overrides) -> Result<(usize, LatticeConfig), anyhow::Error> {
    let detuning = o.omega0.or(file.omega0_wtilde).unwrap_or(DEFAULT_DETUNING);
    let drive = o.omega_rabi.or(file.omega_rabi_wtilde).unwrap_or(DEFAULT_DRIVE);
    let positions = match (&file.positions_zbar, o.n_sites, o.d) {
        (Some(p), None, None) => p.clone(),
        (Some(p), n, d) => {
            let n = n.unwrap_or(p.len());
            let spacing = match d {
                Some(d) => d,
                None => LatticeConfig::new(p.clone(), detuning, drive)
                    .uniform_spacing()
                    .filter(|&s| s > 0.0 || n == 1)
                    .ok_or_else(|| schema("--n-sites on non-uniform positions needs --d"))?,
            };
            let z0 = p.first().copied().unwrap_or(0.0);
            (0..n).map(|j| z0 + spacing * j as f64).collect()
        }
        (None, n, d) => {
            let n = n.or(file.n_sites).unwrap_or(2);
            let spacing = d.unwrap_or(DEFAULT_SPACING);
            (0..n).map(|j| spacing * j as f64).collect()
        }
    };
    let declared = match (o.n_sites, o.d) {
        (None, None) => file.n_sites.unwrap_or(positions.len()),
        _ => positions.len(),
    };
    let mut cfg = LatticeConfig::new(positions, detuning, drive);
    cfg.initial_site = o.initial_site.or(file.initial_site).unwrap_or(1);
    cfg.initial_amplitudes = file.initial_amplitudes.clone();
    Ok((declared, cfg))
}

pub fn resolve(kind: Kind, file: &ScenarioFile, o: &Overrides) -> Result<Resolved, anyhow::Error> {
    let (declared, lattice) = lattice(file, o)?;
    let config = ScenarioConfig {
        n_sites: declared,
        lattice,
        units: file.units.unwrap_or_default(),
    }
    .validate()?;
    let defaults = Thresholds::default();
    let ts = file.thresholds.unwrap_or_default();
    let thresholds = Thresholds {
        eps_edge: o.eps_edge.or(ts.eps_edge).unwrap_or(defaults.eps_edge),
        eps_z: o.eps_z.or(ts.eps_z).unwrap_or(defaults.eps_z),
        tol_bic: o.tol_bic.or(ts.tol_bic).unwrap_or(defaults.tol_bic),
    };
    for (name, v) in [
        ("eps_edge", thresholds.eps_edge),
        ("eps_z", thresholds.eps_z),
        ("tol_bic", thresholds.tol_bic),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(schema(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    let os = file.oracle.unwrap_or_default();
    let od = OracleOptions::default();
    let oracle = OracleParams {
        box_length: o.oracle_l.or(os.box_length).unwrap_or(od.box_length),
        n_modes: o.oracle_k.or(os.n_modes).unwrap_or(od.n_modes),
        deflation: od.deflation,
    };
    let default_t_max = if kind == Kind::Verify { 150.0 } else { DEFAULT_T_MAX };
    let t_max = o.t_max.or(file.t_max).unwrap_or(default_t_max);
    let h = o.h.or(file.h).unwrap_or(DEFAULT_STEP);
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(schema(format!("t_max must be positive, got {t_max}")));
    }
    if !(h.is_finite() && h > 0.0 && h <= t_max) {
        return Err(schema(format!("h must lie in (0, t_max], got {h}")));
    }
    let output_stride = o.stride.or(file.output_stride).unwrap_or(1);
    if output_stride == 0 {
        return Err(schema("output stride must be at least 1"));
    }
    let verify_tolerance = file.verify_tolerance.unwrap_or(2e-3);
    let output_dir = o
        .out
        .clone()
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Resolved {
        command: kind,
        scenario: file.name.clone().unwrap_or_else(|| kind.name().to_string()),
        target: file.target.clone(),
        config,
        t_max,
        h,
        output_stride,
        n_max: o.n_max.or(file.n_max).unwrap_or(DEFAULT_N_MAX),
        thresholds,
        oracle,
        scan: file.scan,
        d_grid: file.d_grid,
        omega0_grid: file.omega0_grid,
        verify_tolerance,
        output_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing_and_values() {
        let g = parse_grid("-0.1:0.4:6").unwrap();
        let v = g.values().unwrap();
        assert_eq!(v.len(), 6);
        assert!((v[5] - 0.4).abs() < 1e-15 && (v[1] + 0.0).abs() < 1e-15);
        assert!(parse_grid("1:2").is_err());
        assert!(Grid::new(1.0, 0.0, 3).values().is_err());
        assert_eq!(Grid::new(2.0, 2.0, 1).values().unwrap(), vec![2.0]);
    }

    #[test]
    fn flags_override_file() {
        let file = ScenarioFile::parse(
            r#"{"kind": "dynamics", "n_sites": 2, "positions_zbar": [0, 5], "omega0_wtilde": 0.1, "omega_rabi_wtilde": 0.13, "t_max": 50}"#,
        )
        .unwrap();
        let o = Overrides {
            omega0: Some(-0.02),
            d: Some(7.0),
            ..Default::default()
        };
        let r = resolve(Kind::Dynamics, &file, &o).unwrap();
        assert_eq!(r.lattice().positions, vec![0.0, 7.0]);
        assert_eq!(r.lattice().detuning, -0.02);
        assert_eq!(r.t_max, 50.0);
        assert_eq!(r.thresholds, Thresholds::default());
    }

    #[test]
    fn n_sites_override_rebuilds_uniform_lattice() {
        let file = ScenarioFile::parse(r#"{"positions_zbar": [1, 4]}"#).unwrap();
        let o = Overrides {
            n_sites: Some(3),
            ..Default::default()
        };
        let r = resolve(Kind::Bics, &file, &o).unwrap();
        assert_eq!(r.lattice().positions, vec![1.0, 4.0, 7.0]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_schema_errors() {
        let e = ScenarioFile::parse(r#"{"omega0": 0.1}"#).unwrap_err();
        assert!(e.downcast_ref::<SchemaError>().is_some());
        let e = ScenarioFile::parse(r#"{"kind": "nonsense"}"#).unwrap_err();
        assert!(e.downcast_ref::<SchemaError>().is_some());
        let file = ScenarioFile::parse(r#"{"n_sites": 3, "positions_zbar": [0, 5]}"#).unwrap();
        assert!(resolve(Kind::Bics, &file, &Overrides::default()).is_err());
    }
}

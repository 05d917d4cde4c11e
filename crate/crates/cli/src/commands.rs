use anyhow::Result;
use mwtunnel::dynamics::{
    asymptotic_form, compare_longtime, markov_solution, solve_volterra_opts, AmplitudeTrajectory, VolterraOptions,
};
use mwtunnel::model::LatticeConfig;
use mwtunnel::oracle::{DiscretizedSystem, OracleOptions};
use mwtunnel::spectrum::{
    bic_d_loci, bound_states, find_bics, find_bocs, phase_diagram, scan_spectrum, search_bocs, write_bic_curve_csv,
    write_phase_csv, write_scan_csv, BoundState, CandidateStatus, ScanParameter,
};
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;

use crate::output::OutputDir;
use crate::scenario::{schema, Grid, Resolved, ScanSpec};

/// Lifts a library error into the classified top-level error.
trait Lib<T> {
    fn lib(self) -> Result<T>;
}

impl<T, E: Into<mwtunnel::Error>> Lib<T> for std::result::Result<T, E> {
    fn lib(self) -> Result<T> {
        self.map_err(|e| anyhow::Error::new(e.into()))
    }
}

/// Verdict of a command that checks rather than computes.
pub enum Verdict {
    Done,
    Failed(String),
}

pub const DEFAULT_OMEGA0_GRID: Grid = Grid::new(-0.1, 0.4, 101);
pub const DEFAULT_D_GRID: Grid = Grid::new(2.0, 20.0, 37);
pub const DEFAULT_PHASE_OMEGA0_GRID: Grid = Grid::new(-0.1, 0.4, 51);
/// Start of the window compared against the bound-state asymptotics.
pub const TAIL_START: f64 = 100.0;

#[derive(Debug, Serialize)]
struct StateRow {
    kind: &'static str,
    branch: usize,
    varpi: f64,
    re_z: f64,
    im_z: f64,
}

fn state_rows(states: &[BoundState]) -> Vec<StateRow> {
    states
        .iter()
        .map(|s| StateRow {
            kind: s.kind.as_str(),
            branch: s.branch,
            varpi: s.frequency,
            re_z: s.residue_weight.re,
            im_z: s.residue_weight.im,
        })
        .collect()
}

fn lattice_context(cfg: &LatticeConfig) -> Value {
    json!({
        "n_sites": cfg.n_sites(),
        "positions_zbar": cfg.positions,
        "omega0_wtilde": cfg.detuning,
        "omega_rabi_wtilde": cfg.drive,
        "initial_site": cfg.initial_site,
    })
}

#[derive(Debug, Serialize)]
struct DynamicsSummary {
    label: String,
    bound_states: Vec<StateRow>,
    max_trapped_norm: f64,
    final_trapped_norm: f64,
    tail_start: Option<f64>,
    tail_deviation: Option<Vec<f64>>,
}

/// Volterra trajectory, its bound-state asymptotics and the Markov
/// reference, written as `<prefix>trajectory.csv` and friends.
fn dynamics_files(r: &Resolved, cfg: &LatticeConfig, prefix: &str, out: &mut OutputDir) -> Result<DynamicsSummary> {
    let tr = solve_volterra_opts(cfg, &VolterraOptions::new(r.t_max, r.h)).lib()?;
    let asym = asymptotic_form(cfg, r.n_max, &r.thresholds).lib()?;
    let ctx = lattice_context(cfg);
    let stride = r.output_stride;
    out.csv(&format!("{prefix}trajectory.csv"), ctx.clone(), |w| {
        tr.write_csv(w, stride)
    })?;
    out.csv(&format!("{prefix}asymptotic.csv"), ctx.clone(), |w| asym.write_csv(w))?;
    let sampled: AmplitudeTrajectory = tr.decimate(stride);
    match markov_solution(cfg, &sampled.times) {
        Ok(mk) => out.csv(&format!("{prefix}markov.csv"), ctx, |w| mk.write_csv(w, 1))?,
        Err(e) => out.note(format!("{prefix}markov.csv skipped: {e}")),
    }
    let norms = tr.trapped_norms();
    let (tail_start, tail_deviation) = if r.t_max > TAIL_START {
        (Some(TAIL_START), Some(compare_longtime(&tr, &asym, TAIL_START).lib()?))
    } else {
        (None, None)
    };
    let states = bound_states(cfg, r.n_max, &r.thresholds).lib()?;
    let summary = DynamicsSummary {
        label: prefix.trim_end_matches('_').to_string(),
        bound_states: state_rows(&states),
        max_trapped_norm: norms.iter().copied().fold(0.0, f64::max),
        final_trapped_norm: norms.last().copied().unwrap_or(0.0),
        tail_start,
        tail_deviation,
    };
    let tag = if summary.label.is_empty() {
        String::new()
    } else {
        format!("[{}] ", summary.label)
    };
    out.note(format!(
        "{tag}ω0 = {}, sites at {:?}: {} asymptotic terms, final trapped norm {:.6}",
        cfg.detuning,
        cfg.positions,
        asym.terms.len(),
        summary.final_trapped_norm
    ));
    Ok(summary)
}

pub fn dynamics(r: &Resolved, out: &mut OutputDir) -> Result<Verdict> {
    let summary = dynamics_files(r, r.lattice(), "", out)?;
    out.json("dynamics_summary.json", &summary)?;
    Ok(Verdict::Done)
}

fn scan_files(
    r: &Resolved,
    cfg: &LatticeConfig,
    spec: ScanSpec,
    name: &str,
    out: &mut OutputDir,
) -> Result<mwtunnel::spectrum::SpectrumScan> {
    let grid = spec.grid.values()?;
    let scan = scan_spectrum(cfg, spec.parameter, &grid, r.n_max, &r.thresholds).lib()?;
    let mut ctx = lattice_context(cfg);
    ctx["scan_parameter"] = json!(spec.parameter.name());
    ctx["band_edge"] = json!(scan.band_edge);
    out.csv(name, ctx, |w| write_scan_csv(&scan, w))?;
    let max = scan.points.iter().map(|p| p.states.len()).max().unwrap_or(0);
    out.note(format!(
        "{name}: {} grid points, up to {max} BOCs, {} BIC markers",
        grid.len(),
        scan.bic_markers.len()
    ));
    Ok(scan)
}

pub fn spectrum(r: &Resolved, out: &mut OutputDir) -> Result<Verdict> {
    let spec = r.scan.unwrap_or(ScanSpec {
        parameter: ScanParameter::Omega0,
        grid: DEFAULT_OMEGA0_GRID,
    });
    scan_files(r, r.lattice(), spec, "spectrum_scan.csv", out)?;
    Ok(Verdict::Done)
}

fn phase_files(r: &Resolved, template: &LatticeConfig, out: &mut OutputDir) -> Result<()> {
    let d_grid = r.d_grid.unwrap_or(DEFAULT_D_GRID).values()?;
    let w_grid = r.omega0_grid.unwrap_or(DEFAULT_PHASE_OMEGA0_GRID).values()?;
    let grid = phase_diagram(template, &d_grid, &w_grid, r.n_max, &r.thresholds).lib()?;
    let ctx = lattice_context(template);
    out.csv("phase_diagram.csv", ctx.clone(), |w| write_phase_csv(&grid, w))?;
    out.csv("bic_curves.csv", ctx, |w| write_bic_curve_csv(&grid.bic_curves, w))?;
    out.note(format!(
        "phase diagram: {} × {} points, {} BIC curve samples",
        d_grid.len(),
        w_grid.len(),
        grid.bic_curves.len()
    ));
    Ok(())
}

pub fn phase(r: &Resolved, out: &mut OutputDir) -> Result<Verdict> {
    if r.lattice().uniform_spacing().is_none() {
        return Err(schema("phase diagrams need a uniformly spaced lattice"));
    }
    phase_files(r, r.lattice(), out)?;
    Ok(Verdict::Done)
}

fn status_name(s: CandidateStatus) -> &'static str {
    match s {
        CandidateStatus::Reported => "reported",
        CandidateStatus::TooCloseToEdge => "too-close-to-edge",
        CandidateStatus::WeightBelowThreshold => "weight-below-threshold",
    }
}

pub fn bics(r: &Resolved, out: &mut OutputDir) -> Result<Verdict> {
    let cfg = r.lattice();
    let bics = find_bics(cfg, r.n_max).lib()?;
    let search = search_bocs(cfg, &r.thresholds).lib()?;
    let tol = r.thresholds.tol_bic;
    let ctx = lattice_context(cfg);
    out.csv("bics.csv", ctx.clone(), |w| {
        writeln!(w, "n,branch,varpi,omega0_exact,residual,exact,reZ,imZ,method")?;
        for c in &bics {
            writeln!(
                w,
                "{},{},{:.12e},{:.12e},{:.6e},{},{:.12e},{:.12e},{}",
                c.n,
                c.branch,
                c.frequency,
                c.omega0_exact,
                c.residual,
                c.is_exact(tol),
                c.residue_weight.re,
                c.residue_weight.im,
                c.method.name()
            )?;
        }
        Ok(())
    })?;
    out.csv("bocs.csv", ctx, |w| {
        writeln!(w, "branch,status,varpi,reZ,imZ,edge_value")?;
        for c in &search.candidates {
            let varpi = c.frequency.map(|v| format!("{v:.12e}")).unwrap_or_default();
            let (re, im) = c
                .residue_weight
                .map(|z| (format!("{:.12e}", z.re), format!("{:.12e}", z.im)))
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{varpi},{re},{im},{:.12e}",
                c.branch,
                status_name(c.status),
                c.edge_value
            )?;
        }
        Ok(())
    })?;
    out.note(format!(
        "{} BIC frequencies up to n = {} ({} exact at ω0 = {}), {} reported BOCs",
        bics.len(),
        r.n_max,
        bics.iter().filter(|c| c.is_exact(tol)).count(),
        cfg.detuning,
        search.states.len()
    ));
    Ok(Verdict::Done)
}

#[derive(Debug, Serialize)]
struct EnergyPair {
    spectrum: Option<f64>,
    oracle: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EnergyWeight {
    energy: f64,
    site_weight: f64,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    tolerance: f64,
    t_max: f64,
    retained_modes: usize,
    trajectory_deviation: f64,
    box_doubling_change: f64,
    bound_states: Vec<EnergyPair>,
    max_energy_difference: f64,
    /// Localised in-band eigenstates, the discrete image of a BIC.
    in_band_candidates: Vec<EnergyWeight>,
    exact_bics: Vec<f64>,
    passed: bool,
}

pub fn verify(r: &Resolved, out: &mut OutputDir) -> Result<Verdict> {
    let cfg = r.lattice();
    let tol = r.verify_tolerance;
    let tr = solve_volterra_opts(cfg, &VolterraOptions::new(r.t_max, r.h)).lib()?;
    let opts = r.oracle.options();
    let sys = DiscretizedSystem::build(cfg, &opts).lib()?;
    let spec = sys.diagonalize();
    let exact = spec.evolve(&cfg.initial_state(), &tr.times);
    let deviation = tr.max_deviation(&exact);
    let doubled = OracleOptions {
        box_length: 2.0 * opts.box_length,
        n_modes: 2 * opts.n_modes,
        ..opts
    };
    let big = DiscretizedSystem::build(cfg, &doubled).lib()?.diagonalize();
    let change = big.evolve(&cfg.initial_state(), &tr.times).max_deviation(&exact);

    let mut mine: Vec<f64> = find_bocs(cfg, &r.thresholds)
        .lib()?
        .iter()
        .map(|b| b.frequency)
        .collect();
    mine.sort_by(f64::total_cmp);
    let theirs: Vec<f64> = spec
        .bound_state_energies(&r.thresholds)
        .iter()
        .map(|b| b.energy)
        .collect();
    let n = mine.len().max(theirs.len());
    let pairs: Vec<EnergyPair> = (0..n)
        .map(|i| EnergyPair {
            spectrum: mine.get(i).copied(),
            oracle: theirs.get(i).copied(),
        })
        .collect();
    let max_energy_difference = mine.iter().zip(&theirs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let exact_bics: Vec<f64> = find_bics(cfg, r.n_max)
        .lib()?
        .into_iter()
        .filter(|c| c.is_exact(r.thresholds.tol_bic))
        .map(|c| c.frequency)
        .collect();
    // Localised states survive box doubling with the same energy and weight;
    // continuum states move and dilute as 1/L. Far-band box modes that
    // barely couple also survive, hence the weight floor.
    let big_band = big.in_band_candidates(1.0);
    let localized: Vec<EnergyWeight> = spec
        .in_band_candidates(100.0)
        .iter()
        .filter(|b| b.site_weight >= r.thresholds.eps_z)
        .filter(|b| {
            big_band
                .iter()
                .any(|c| (c.energy - b.energy).abs() <= 1e-6 && c.site_weight >= 0.75 * b.site_weight)
        })
        .map(|b| EnergyWeight {
            energy: b.energy,
            site_weight: b.site_weight,
        })
        .collect();
    let passed = deviation <= tol && change <= tol && mine.len() == theirs.len() && max_energy_difference <= tol;
    let report = VerifyReport {
        tolerance: tol,
        t_max: r.t_max,
        retained_modes: sys.n_retained(),
        trajectory_deviation: deviation,
        box_doubling_change: change,
        bound_states: pairs,
        max_energy_difference,
        in_band_candidates: localized,
        exact_bics,
        passed,
    };
    let ctx = lattice_context(cfg);
    let stride = r.output_stride;
    out.csv("verify_volterra.csv", ctx.clone(), |w| tr.write_csv(w, stride))?;
    out.csv("verify_oracle.csv", ctx, |w| exact.write_csv(w, stride))?;
    out.json("verify_report.json", &report)?;
    out.note(format!(
        "Volterra vs oracle {deviation:.3e}, box doubling {change:.3e}, BOCs {}/{} (max Δϖ {max_energy_difference:.3e}), tolerance {tol:.1e}",
        mine.len(),
        theirs.len()
    ));
    if passed {
        Ok(Verdict::Done)
    } else {
        Ok(Verdict::Failed(format!(
            "oracle verification exceeded tolerance {tol:.1e}; see verify_report.json"
        )))
    }
}

fn fixed(r: &Resolved, n_sites: usize, detuning: f64) -> LatticeConfig {
    let cfg = r.lattice();
    let d = cfg
        .uniform_spacing()
        .filter(|&d| d > 0.0)
        .unwrap_or(crate::scenario::DEFAULT_SPACING);
    let mut c = LatticeConfig::uniform(n_sites, d, detuning, cfg.drive);
    c.initial_site = cfg.initial_site.min(n_sites);
    c
}

fn label(w0: f64) -> String {
    format!("w0_{w0}_").replace('-', "m")
}

pub fn reproduce(r: &Resolved, target: &str, out: &mut OutputDir) -> Result<Verdict> {
    let mut summaries = Vec::new();
    match target {
        "fig2" => {
            let base = fixed(r, 2, r.lattice().detuning);
            let spec = ScanSpec {
                parameter: ScanParameter::Omega0,
                grid: DEFAULT_OMEGA0_GRID,
            };
            scan_files(r, &base, spec, "spectrum_scan.csv", out)?;
            // The BIC case uses the exact matching detuning of the n = 1 BIC.
            let w_bic = find_bics(&base, 1).lib()?.first().map(|c| c.omega0_exact);
            let w_bic = w_bic.ok_or_else(|| schema("no n = 1 BIC for this geometry"))?;
            for (name, w0) in [
                (label(-0.02), -0.02),
                (label(0.06), 0.06),
                ("w0_bic_".to_string(), w_bic),
            ] {
                summaries.push(dynamics_files(r, &base.clone().with_detuning(w0), &name, out)?);
            }
        }
        "fig3" => {
            let base = fixed(r, 2, r.lattice().detuning);
            let spec = ScanSpec {
                parameter: ScanParameter::D,
                grid: Grid::new(2.0, 20.0, 181),
            };
            let scan = scan_files(r, &base, spec, "spectrum_scan.csv", out)?;
            let d_grid = spec.grid.values()?;
            let loci = bic_d_loci(&base, base.detuning, r.n_max, &d_grid).lib()?;
            out.csv("bic_loci.csv", lattice_context(&base), |w| {
                write_bic_curve_csv(&loci, w)
            })?;
            let mut ds = vec![4.0, 7.0];
            ds.extend(scan.bic_markers.iter().map(|m| m.value).take(1));
            for d in ds {
                let name = format!("d_{d:.4}_");
                summaries.push(dynamics_files(r, &base.clone().with_spacing(d), &name, out)?);
            }
        }
        "fig3d" => {
            phase_files(r, &fixed(r, 2, r.lattice().detuning), out)?;
        }
        "fig4" => {
            let base = fixed(r, 3, r.lattice().detuning);
            let spec = ScanSpec {
                parameter: ScanParameter::Omega0,
                grid: Grid::new(-0.1, 0.5, 121),
            };
            scan_files(r, &base, spec, "spectrum_scan.csv", out)?;
            for w0 in [0.4, -0.05] {
                summaries.push(dynamics_files(r, &base.clone().with_detuning(w0), &label(w0), out)?);
            }
        }
        other => {
            return Err(schema(format!(
                "unknown reproduction target {other:?}; expected fig2, fig3, fig3d or fig4"
            )))
        }
    }
    if !summaries.is_empty() {
        out.json("dynamics_summary.json", &summaries)?;
    }
    Ok(Verdict::Done)
}

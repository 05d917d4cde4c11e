//! Exact diagonalisation of the discretised continuum against the
//! continuum-limit solvers.

use std::f64::consts::PI;

use mwtunnel::dynamics::{solve_volterra, AmplitudeTrajectory};
use mwtunnel::model::LatticeConfig;
use mwtunnel::oracle::{DiscretizedSystem, OracleOptions};
use mwtunnel::spectrum::{find_bics, find_bocs, Thresholds};

fn evolve(cfg: &LatticeConfig, opts: &OracleOptions, tr: &AmplitudeTrajectory) -> AmplitudeTrajectory {
    let sys = DiscretizedSystem::build(cfg, opts).unwrap();
    sys.diagonalize().evolve(&cfg.initial_state(), &tr.times)
}

#[test]
fn doubling_box_leaves_short_time_dynamics_unchanged() {
    let cfg = LatticeConfig::uniform(2, 5.0, 0.06, 0.13);
    let tr = solve_volterra(&cfg, 150.0, 0.1).unwrap();
    let small = evolve(&cfg, &OracleOptions::new(400.0, 4096), &tr);
    let large = evolve(&cfg, &OracleOptions::new(800.0, 8192), &tr);
    assert!(small.max_deviation(&large) < 1e-5, "{}", small.max_deviation(&large));
}

#[test]
fn bound_state_counts_agree_across_detuning() {
    let th = Thresholds::default();
    let opts = OracleOptions::new(400.0, 4096);
    for i in 0..10 {
        let w0 = -0.1 + 0.05 * i as f64;
        let cfg = LatticeConfig::uniform(2, 5.0, w0, 0.13);
        let mut bocs: Vec<f64> = find_bocs(&cfg, &th).unwrap().iter().map(|b| b.frequency).collect();
        bocs.sort_by(f64::total_cmp);
        let oracle = DiscretizedSystem::build(&cfg, &opts)
            .unwrap()
            .diagonalize()
            .bound_state_energies(&th);
        assert_eq!(bocs.len(), oracle.len(), "ω0 = {w0}");
        for (a, b) in bocs.iter().zip(&oracle) {
            assert!((a - b.energy).abs() < 2e-3, "ω0 = {w0}: {a} vs {}", b.energy);
        }
    }
}

#[test]
fn bic_shows_as_localized_in_band_state() {
    let w0 = find_bics(&LatticeConfig::uniform(2, 5.0, 0.0, 0.13), 1).unwrap()[0].omega0_exact;
    let cfg = LatticeConfig::uniform(2, 5.0, w0, 0.13);
    let spec = DiscretizedSystem::build(&cfg, &OracleOptions::new(400.0, 4096))
        .unwrap()
        .diagonalize();
    let target = PI * PI / 50.0;
    let matched = spec
        .in_band_candidates(100.0)
        .into_iter()
        .filter(|b| (b.energy - target).abs() < 2e-3)
        .map(|b| b.site_weight)
        .fold(0.0, f64::max);
    // Off the matching detuning the in-band weight delocalises.
    let off = LatticeConfig::uniform(2, 5.0, w0 + 0.05, 0.13);
    let spec = DiscretizedSystem::build(&off, &OracleOptions::new(400.0, 4096))
        .unwrap()
        .diagonalize();
    let strongest = spec
        .in_band_candidates(100.0)
        .into_iter()
        .filter(|b| (b.energy - target).abs() < 2e-3)
        .map(|b| b.site_weight)
        .fold(0.0, f64::max);
    assert!(matched > 0.5 && strongest < 0.1 * matched, "{matched} vs {strongest}");
}

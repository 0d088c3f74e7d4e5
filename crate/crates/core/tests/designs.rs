mod common;

use common::*;
use secure_dfrc::design::{
    solve_robust, solve_sdr, solve_zf, AngularUncertaintySet, CsiUncertainty, DesignResult, SecurityThresholds,
};
use secure_dfrc::evaluation::constraint_residuals;
use secure_dfrc::radar::{radar_only_design, BeampatternSpec};
use secure_dfrc::scenario::{generate_channel, AngleGrid, Scenario, SystemConfig, Target};

fn scenario(k: usize, angles: &[f64], seed: u64) -> (Scenario, BeampatternSpec) {
    let cfg = SystemConfig {
        grid: AngleGrid::full(1.0),
        ..SystemConfig::default()
    };
    let h = generate_channel(k, cfg.num_antennas, seed).unwrap();
    let targets = angles.iter().map(|&a| Target::new(a)).collect();
    (
        Scenario::new(cfg, h, targets).unwrap(),
        BeampatternSpec::for_targets(angles),
    )
}

fn model(sc: &Scenario, spec: &BeampatternSpec) -> LossModel {
    let cfg = &sc.config;
    LossModel::new(
        cfg.num_antennas,
        cfg.spacing_ratio,
        &grid(-90.0, 90.0, 1.0),
        &spec.center_angles,
        spec.beam_width_deg,
        &spec.crosscorr_angles,
        spec.eta,
    )
}

/// SINRs from the precoders by explicit sums over streams.
fn loop_sinrs(sc: &Scenario, d: &DesignResult) -> (Vec<f64>, Vec<f64>) {
    let m = sc.num_antennas();
    let wc = &d.precoders.comm;
    let wr = &d.precoders.radar;
    let k = wc.ncols();
    let dot = |x: &Vec_, col: nalgebra::DVectorView<num_complex::Complex64>| {
        (0..m).map(|i| x[i].conj() * col[i]).sum::<num_complex::Complex64>().norm_sqr()
    };
    let users = (0..k)
        .map(|u| {
            let h = sc.user_channel(u);
            let sig = dot(&h, wc.column(u));
            let mut inter = sc.config.noise_var_lu;
            for j in 0..k {
                if j != u {
                    inter += dot(&h, wc.column(j));
                }
            }
            for j in 0..wr.ncols() {
                inter += dot(&h, wr.column(j));
            }
            sig / inter
        })
        .collect();
    let eves = sc
        .targets
        .iter()
        .map(|t| {
            let a = steer(m, sc.config.spacing_ratio, t.angle_deg);
            let g = t.path_loss.norm_sqr();
            let sig: f64 = (0..k).map(|j| dot(&a, wc.column(j))).sum();
            let rad: f64 = (0..wr.ncols()).map(|j| dot(&a, wr.column(j))).sum();
            g * sig / (g * rad + sc.config.noise_var_eve)
        })
        .collect();
    (users, eves)
}

fn check_power(d: &DesignResult, sc: &Scenario) {
    let m = sc.num_antennas();
    let r = d.transmitted_covariance();
    for i in 0..m {
        let p = r.as_matrix()[(i, i)].re;
        assert!((p - sc.config.total_power / m as f64).abs() < 1e-6, "antenna {i} power {p}");
    }
}

#[test]
fn sdr_meets_constraints_by_direct_evaluation() {
    let (sc, spec) = scenario(3, &[-30.0, 25.0], 17);
    let th = SecurityThresholds::from_db(12.0, 0.0).unwrap();
    let d = solve_sdr(&sc, &spec, &th).unwrap();
    check_power(&d, &sc);
    let (users, eves) = loop_sinrs(&sc, &d);
    for g in users {
        assert!(g >= th.gamma_c * (1.0 - 1e-4), "user {g}");
    }
    for g in eves {
        assert!(g <= th.gamma_e * (1.0 + 1e-4), "eve {g}");
    }
    let (ur, er) = constraint_residuals(&d.precoders, &sc, &th);
    assert!(ur.iter().chain(&er).all(|r| *r >= -1e-6), "{ur:?} {er:?}");
    let ours = model(&sc, &spec).loss_at(d.transmitted_covariance().as_matrix(), d.alpha);
    assert!((ours - d.objective).abs() <= 1e-9 * ours.max(1e-12));
    assert!((d.objective - d.relaxed_objective).abs() <= 1e-6 * d.relaxed_objective);
}

#[test]
fn zf_removes_interference_and_radar_leakage() {
    let (sc, spec) = scenario(2, &[10.0], 23);
    let th = SecurityThresholds::from_db(10.0, 0.0).unwrap();
    let d = solve_zf(&sc, &spec, &th).unwrap();
    check_power(&d, &sc);
    let h = &sc.channel;
    let scale = h.norm() * sc.config.total_power.sqrt();
    assert!((h * &d.precoders.radar).norm() <= 1e-6 * scale);
    let hw = h * &d.precoders.comm;
    let rho = d.rho.as_ref().unwrap();
    for i in 0..2 {
        for j in 0..2 {
            if i == j {
                assert!((hw[(i, i)].re - rho[i].sqrt()).abs() <= 1e-6 * scale);
                assert!(hw[(i, i)].im.abs() <= 1e-6 * scale);
            } else {
                assert!(hw[(i, j)].norm() <= 1e-6 * scale);
            }
        }
    }
    let (users, _) = loop_sinrs(&sc, &d);
    for (u, g) in users.iter().enumerate() {
        assert!((g - rho[u] / sc.config.noise_var_lu).abs() <= 1e-6 * g);
    }
}

#[test]
fn zf_pays_for_structure_with_pattern_loss() {
    let (sc, spec) = scenario(2, &[-15.0], 29);
    let th = SecurityThresholds::from_db(10.0, 0.0).unwrap();
    let sdr = solve_sdr(&sc, &spec, &th).unwrap();
    let zf = solve_zf(&sc, &spec, &th).unwrap();
    assert!(zf.objective >= sdr.objective * (1.0 - 1e-6));
}

#[test]
fn radar_only_thresholds_reduce_to_radar_only_design() {
    let (sc, spec) = scenario(2, &[0.0, 40.0], 31);
    let d = solve_sdr(&sc, &spec, &SecurityThresholds::radar_only()).unwrap();
    let r = radar_only_design(&spec, &sc.config).unwrap();
    assert!((d.objective - r.objective).abs() <= 1e-6 * r.objective.max(1e-12));
}

#[test]
fn zero_uncertainty_robust_design_is_the_sdr_design() {
    let (sc, spec) = scenario(2, &[5.0], 37);
    let th = SecurityThresholds::from_db(10.0, 0.0).unwrap();
    let sdr = solve_sdr(&sc, &spec, &th).unwrap();
    let angles = AngularUncertaintySet::from_targets(&sc, 1.0).unwrap();
    let rob = solve_robust(&sc, &spec, &th, &CsiUncertainty::perfect(2), &angles).unwrap();
    assert!((rob.objective - sdr.objective).abs() <= 1e-6 * sdr.objective.max(1e-12));
}

#[test]
fn robust_design_keeps_nominal_users_above_threshold() {
    let cfg = SystemConfig {
        grid: AngleGrid::full(1.0),
        ..SystemConfig::default()
    };
    let h = generate_channel(2, 10, 41).unwrap();
    let sc = Scenario::new(cfg, h, vec![Target::new(-10.0).with_uncertainty(3.0)]).unwrap();
    let spec = BeampatternSpec::for_targets(&[-10.0]);
    let th = SecurityThresholds::from_db(10.0, 0.0).unwrap();
    let csi = CsiUncertainty::relative(&sc, 0.05).unwrap();
    let angles = AngularUncertaintySet::from_targets(&sc, 1.0).unwrap();
    let rob = solve_robust(&sc, &spec, &th, &csi, &angles).unwrap();
    check_power(&rob, &sc);
    let (users, _) = loop_sinrs(&sc, &rob);
    for g in users {
        assert!(g >= th.gamma_c * (1.0 - 1e-4));
    }
}


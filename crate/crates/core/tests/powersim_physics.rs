//! Physics-level checks of the swing-equation simulator: energy
//! conservation, integrator order, equal-area critical clearing time,
//! center-of-inertia identities, feature conventions, and the scenario-grid
//! dataset generator.

use nalgebra::DMatrix;
use num_complex::Complex;
use tsa_core::powersim::{
    coi_frame, extract_features, generate_dataset, initial_conditions, simulate_fault,
    solve_power_flow, stability_label, wscc9, Branch, Bus, BusType, DynamicModel, Generator,
    Load, PowerCase, ScenarioConfig, SwingSystem,
};

type C64 = Complex<f64>;

/// Lossless two-machine system with B12 = 2, driven off equilibrium.
fn lossless_pair() -> SwingSystem {
    let mut y = DMatrix::from_element(2, 2, C64::new(0.0, 0.0));
    y[(0, 0)] = C64::new(0.0, -2.0);
    y[(1, 1)] = C64::new(0.0, -2.0);
    y[(0, 1)] = C64::new(0.0, 2.0);
    y[(1, 0)] = C64::new(0.0, 2.0);
    SwingSystem::new(vec![0.1, 0.2], vec![0.5, -0.5], vec![1.0, 1.1], &y)
}

/// Total energy of the lossless pair: kinetic plus the sine-coupling
/// potential, conserved exactly by the continuous dynamics.
fn pair_energy(state: &[f64]) -> f64 {
    let (d1, d2, w1, w2) = (state[0], state[1], state[2], state[3]);
    let ke = 0.5 * 0.1 * w1 * w1 + 0.5 * 0.2 * w2 * w2;
    let pot = -0.5 * d1 - (-0.5) * d2 - 1.0 * 1.1 * 2.0 * (d1 - d2).cos();
    ke + pot
}

#[test]
fn lossless_energy_drift_is_tiny() {
    let sys = lossless_pair();
    let dt = 0.01;
    let mut state = vec![0.3, 0.0, 0.0, 0.0];
    let e0 = pair_energy(&state);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        state = sys.rk4_step(&state, dt);
        worst = worst.max((pair_energy(&state) - e0).abs());
    }
    assert!(worst < 1e-6, "energy drift {worst}");
}

#[test]
fn integrator_is_fourth_order() {
    let sys = lossless_pair();
    let x0 = vec![0.3, 0.0, 0.0, 0.0];
    let integrate = |dt: f64, t_end: f64| -> Vec<f64> {
        let steps = (t_end / dt).round() as usize;
        let mut s = x0.clone();
        for _ in 0..steps {
            s = sys.rk4_step(&s, dt);
        }
        s
    };
    let reference = integrate(0.0025, 1.0); // dt/8
    let err = |dt: f64| -> f64 {
        integrate(dt, 1.0)
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let e_coarse = err(0.02);
    let e_fine = err(0.01);
    assert!(
        e_coarse / e_fine >= 8.0,
        "error ratio {} (coarse {e_coarse:.3e}, fine {e_fine:.3e})",
        e_coarse / e_fine
    );
}

#[test]
fn wscc9_equilibrium_holds_without_fault() {
    let case = wscc9();
    let traj = simulate_fault(&case, 5, 0.0, 5.0, 0.01).unwrap();
    assert!(!traj.diverged);
    let d0 = traj.angles[0].clone();
    for delta in &traj.angles {
        for (a, b) in delta.iter().zip(&d0) {
            assert!((a - b).abs() < 1e-4, "angle drifted {}", (a - b).abs());
        }
    }
    assert_eq!(stability_label(&traj), 1);
}

#[test]
fn coi_identities_hold_along_trajectory() {
    let case = wscc9();
    let traj = simulate_fault(&case, 7, 0.1, 2.0, 0.005).unwrap();
    for idx in [0, 100, 200, traj.len() - 1] {
        let (d_rel, w_rel) = coi_frame(&traj, idx);
        let md: f64 = traj.m.iter().zip(&d_rel).map(|(m, d)| m * d).sum();
        let mw: f64 = traj.m.iter().zip(&w_rel).map(|(m, w)| m * w).sum();
        assert!(md.abs() < 1e-9, "sum M delta = {md}");
        assert!(mw.abs() < 1e-10, "sum M omega = {mw}");
    }
}

#[test]
fn coi_two_equal_machines_hand_case() {
    let case = wscc9();
    let mut traj = simulate_fault(&case, 5, 0.0, 0.1, 0.05).unwrap();
    // overwrite with a synthetic frame: two equal inertias at delta = (0, 1)
    traj.m = vec![1.0, 1.0];
    traj.pm = vec![0.0, 0.0];
    traj.angles[0] = vec![0.0, 1.0];
    traj.speeds[0] = vec![0.0, 0.0];
    let (d_rel, _) = coi_frame(&traj, 0);
    assert!((d_rel[0] + 0.5).abs() < 1e-15);
    assert!((d_rel[1] - 0.5).abs() < 1e-15);
}

/// Single machine against a near-infinite bus, with every equal-area
/// quantity computed by hand from the terminal conditions.
struct SmibOracle {
    case: PowerCase,
    m1: f64,
    pm: f64,
    pmax: f64,
    delta0: f64,
    t_critical: f64,
}

fn smib(p: f64) -> SmibOracle {
    let (x_line, xd1, xd2, h1) = (0.4, 0.1, 0.05, 3.0);
    let case = PowerCase {
        f0: 60.0,
        base_mva: 100.0,
        buses: vec![
            Bus { id: 1, bus_type: BusType::Pv, vm: 1.0, va: 0.0 },
            Bus { id: 2, bus_type: BusType::Slack, vm: 1.0, va: 0.0 },
        ],
        branches: vec![Branch { from: 1, to: 2, r: 0.0, x: x_line, b: 0.0 }],
        loads: vec![],
        generators: vec![
            Generator { bus: 1, h: h1, xd_prime: xd1, p_gen: p },
            Generator { bus: 2, h: 1e5, xd_prime: xd2, p_gen: 0.0 },
        ],
    };
    // hand power flow for the lossless two-bus link
    let theta1 = (p * x_line).asin();
    let q1 = (1.0 - theta1.cos()) / x_line;
    let q2 = (1.0 - theta1.cos()) / x_line;
    let v1 = C64::from_polar(1.0, theta1);
    let v2 = C64::new(1.0, 0.0);
    let i1 = (C64::new(p, q1) / v1).conj();
    let i2 = (C64::new(-p, q2) / v2).conj();
    let e1 = v1 + C64::new(0.0, xd1) * i1;
    let e2 = v2 + C64::new(0.0, xd2) * i2;
    let pmax = e1.norm() * e2.norm() / (xd1 + x_line + xd2);
    let delta0 = e1.arg() - e2.arg();
    assert!((pmax * delta0.sin() - p).abs() < 1e-9, "hand power flow inconsistent");
    // equal-area critical angle and clearing time (fault wipes out P_e)
    let omega_s = 2.0 * std::f64::consts::PI * 60.0;
    let m1 = 2.0 * h1 / omega_s;
    let delta_max = std::f64::consts::PI - delta0;
    let cos_cr = (p * (delta_max - delta0) + pmax * delta_max.cos()) / pmax;
    let delta_cr = cos_cr.acos();
    let t_critical = (2.0 * m1 * (delta_cr - delta0) / p).sqrt();
    SmibOracle { case, m1, pm: p, pmax, delta0, t_critical }
}

#[test]
fn smib_initial_angle_matches_closed_form() {
    let oracle = smib(0.8);
    let pf = solve_power_flow(&oracle.case).unwrap();
    let ics = initial_conditions(&oracle.case, &pf).unwrap();
    let d0 = ics.delta0[0] - ics.delta0[1];
    assert!(
        (d0 - (oracle.pm / oracle.pmax).asin()).abs() < 1e-9,
        "delta0 {d0} vs asin(Pm/Pmax) {}",
        (oracle.pm / oracle.pmax).asin()
    );
    assert!((d0 - oracle.delta0).abs() < 1e-9);
}

#[test]
fn smib_critical_clearing_time_brackets_equal_area_value() {
    let oracle = smib(0.8);
    let dt = 0.0025;
    let model = DynamicModel::new(&oracle.case).unwrap();
    let label_at = |steps: usize| -> i8 {
        let t_clear = steps as f64 * dt;
        let traj = model.simulate(1, t_clear, 5.0, dt).unwrap();
        stability_label(&traj)
    };
    // last stable clearing step on the grid
    let t_cr_steps = (oracle.t_critical / dt).floor() as usize;
    let mut last_stable = None;
    for k in (t_cr_steps.saturating_sub(4)..=t_cr_steps + 4).rev() {
        if label_at(k) == 1 {
            last_stable = Some(k);
            break;
        }
    }
    let last_stable = last_stable.expect("no stable clearing time found near the oracle value");
    assert_eq!(label_at(last_stable + 1), -1, "label did not flip at the next step");
    let t_flip = (last_stable as f64 + 0.5) * dt;
    assert!(
        (t_flip - oracle.t_critical).abs() <= dt,
        "flip at {t_flip:.4}, equal-area value {:.4}",
        oracle.t_critical
    );
}

#[test]
fn smib_subcritical_swings_bounded_supercritical_runs_away() {
    let oracle = smib(0.8);
    let model = DynamicModel::new(&oracle.case).unwrap();
    let stable = model.simulate(1, 0.1, 5.0, 0.0025).unwrap();
    assert_eq!(stability_label(&stable), 1);
    let max_sep = stable
        .angles
        .iter()
        .map(|d| (d[0] - d[1]).abs())
        .fold(0.0, f64::max);
    assert!(max_sep < std::f64::consts::PI, "first swing stays below pi, got {max_sep}");

    let unstable = model.simulate(1, 0.35, 5.0, 0.0025).unwrap();
    assert_eq!(stability_label(&unstable), -1);
    let final_sep = unstable
        .angles
        .last()
        .map(|d| (d[0] - d[1]).abs())
        .unwrap();
    assert!(final_sep > 2.0 * std::f64::consts::PI, "runaway separation {final_sep}");
}

#[test]
fn smib_first_step_acceleration_matches_hand_value() {
    let oracle = smib(0.8);
    let traj = simulate_fault(&oracle.case, 1, 0.1, 1.0, 0.005).unwrap();
    let f = extract_features(&traj, 60.0).unwrap();
    let tz2 = f.values[1];
    let expected = oracle.pm / oracle.m1; // fault-on P_e is ~1e-5
    assert!(
        (tz2 - expected).abs() / expected < 1e-2,
        "Tz2 {tz2} vs Pm/M {expected}"
    );
    // Tz3 is the initial absolute rotor angle of that machine
    assert!((f.values[2] - traj.angles[0][0]).abs() < 1e-12);
}

#[test]
fn equilibrium_trajectory_features_vanish() {
    let case = wscc9();
    let traj = simulate_fault(&case, 5, 0.0, 5.0, 0.005).unwrap();
    let f = extract_features(&traj, case.f0).unwrap();
    assert!(f.values[1].abs() < 1e-6, "Tz2 = {}", f.values[1]); // max acceleration
    assert!(f.values[3].abs() < 1e-6, "Tz4 = {}", f.values[3]); // mean accelerating power
    for idx in [4, 6, 8, 9, 12, 13, 14, 17, 19, 20, 21, 22, 26, 27, 28, 29] {
        assert!(f.values[idx].abs() < 1e-10, "kinetic feature Tz{} = {}", idx + 1, f.values[idx]);
    }
    // Tz11: pre-fault maximum angle spread
    let d0 = &traj.angles[0];
    let mut spread = 0.0f64;
    for i in 0..3 {
        for j in (i + 1)..3 {
            spread = spread.max((d0[i] - d0[j]).abs());
        }
    }
    assert!((f.values[10] - spread).abs() < 1e-9);
}

#[test]
fn symmetric_machines_have_zero_relative_features() {
    // identical machines at both ends of a symmetric chain, fault dead center
    let case = PowerCase {
        f0: 60.0,
        base_mva: 100.0,
        buses: vec![
            Bus { id: 1, bus_type: BusType::Slack, vm: 1.0, va: 0.0 },
            Bus { id: 2, bus_type: BusType::Pv, vm: 1.0, va: 0.0 },
            Bus { id: 3, bus_type: BusType::Pq, vm: 1.0, va: 0.0 },
        ],
        branches: vec![
            Branch { from: 1, to: 3, r: 0.0, x: 0.2, b: 0.0 },
            Branch { from: 2, to: 3, r: 0.0, x: 0.2, b: 0.0 },
        ],
        loads: vec![],
        generators: vec![
            Generator { bus: 1, h: 4.0, xd_prime: 0.15, p_gen: 0.0 },
            Generator { bus: 2, h: 4.0, xd_prime: 0.15, p_gen: 0.0 },
        ],
    };
    let traj = simulate_fault(&case, 3, 0.1, 2.0, 0.005).unwrap();
    let f = extract_features(&traj, 60.0).unwrap();
    for idx in [10, 16, 24, 31] {
        assert!(
            f.values[idx].abs() < 1e-9,
            "relative swing Tz{} = {}",
            idx + 1,
            f.values[idx]
        );
    }
}

#[test]
fn generator_permutation_leaves_features_unchanged() {
    let mut case = wscc9();
    let traj = simulate_fault(&case, 8, 0.1, 2.0, 0.005).unwrap();
    let f = extract_features(&traj, 60.0).unwrap();
    case.generators.swap(0, 2);
    let traj_p = simulate_fault(&case, 8, 0.1, 2.0, 0.005).unwrap();
    let f_p = extract_features(&traj_p, 60.0).unwrap();
    for (a, b) in f.values.iter().zip(&f_p.values) {
        assert!((a - b).abs() < 1e-9, "feature changed: {a} vs {b}");
    }
}

#[test]
fn wscc9_bus7_fault_cleared_at_100ms_is_stable() {
    let case = wscc9();
    let traj = simulate_fault(&case, 7, 0.1, 5.0, 0.005).unwrap();
    assert_eq!(stability_label(&traj), 1);
    // independent check: integrating at dt/10 gives the same label
    let fine = simulate_fault(&case, 7, 0.1, 5.0, 0.0005).unwrap();
    assert_eq!(stability_label(&fine), 1);
    // and trajectories agree closely at matching instants
    let coarse_end = traj.angles.last().unwrap();
    let fine_end = fine.angles.last().unwrap();
    for (a, b) in coarse_end.iter().zip(fine_end) {
        assert!((a - b).abs() < 1e-5, "dt convergence: {a} vs {b}");
    }
}

#[test]
fn stability_label_rules() {
    let case = wscc9();
    let mut traj = simulate_fault(&case, 5, 0.0, 0.1, 0.05).unwrap();
    assert_eq!(stability_label(&traj), 1);
    // any pair exceeding 360 degrees separation flips the label
    traj.angles.push(vec![0.0, 361.0f64.to_radians(), 0.0]);
    traj.speeds.push(vec![0.0; 3]);
    traj.elec_power.push(vec![0.0; 3]);
    traj.times.push(1.0);
    assert_eq!(stability_label(&traj), -1);
    traj.angles.pop();
    traj.speeds.pop();
    traj.elec_power.pop();
    traj.times.pop();
    traj.diverged = true;
    assert_eq!(stability_label(&traj), -1);
}

#[test]
fn time_grid_must_divide() {
    let case = wscc9();
    assert!(simulate_fault(&case, 5, 0.13, 5.0, 0.004).is_err());
    assert!(simulate_fault(&case, 5, 0.1, 5.0, 0.003).is_err());
}

#[test]
fn dataset_generation_is_deterministic_with_both_classes() {
    let case = wscc9();
    let config = ScenarioConfig { horizon: 3.0, ..ScenarioConfig::default_for(&case) };
    let (data, skipped) = generate_dataset(&case, &config).unwrap();
    assert!(data.n_samples() <= 4 * 5 * 9);
    assert_eq!(data.n_features(), 33);
    assert_eq!(data.feature_names()[0], "Tz1");
    let (pos, neg) = data.class_counts();
    assert!(pos > 0 && neg > 0, "classes: {pos} stable, {neg} unstable");
    assert!(skipped.len() < 10, "too many skipped: {skipped:?}");

    let (data2, _) = generate_dataset(&case, &config).unwrap();
    assert_eq!(data, data2);
}

//! Stage-dependent nodal admittance construction (buses plus generator
//! internal nodes) and Kron reduction onto the generator nodes.

use nalgebra::DMatrix;

use super::case::PowerCase;
use super::powerflow::{branch_admittance, C64};
use super::PowersimError;

/// Network stage of the fault timeline. Post-fault equals pre-fault because
/// the fault is cleared without topology change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prefault,
    /// Three-phase short at the given bus id, modeled as a large shunt.
    Fault(usize),
    Postfault,
}

/// Shunt conductance standing in for a bolted three-phase fault, p.u.
pub const FAULT_ADMITTANCE: f64 = 1e7;

/// Full admittance matrix over buses plus generator internal nodes. Loads
/// become constant admittances at the solved bus voltages, generators attach
/// through 1/(j xd'). Node order: buses in case order, then one internal
/// node per generator in case order.
pub fn build_admittance(
    case: &PowerCase,
    bus_voltages: &[C64],
    stage: Stage,
) -> Result<DMatrix<C64>, PowersimError> {
    let n = case.n_buses();
    let m = case.n_generators();
    assert_eq!(bus_voltages.len(), n, "one solved voltage per bus");
    let mut y = DMatrix::from_element(n + m, n + m, C64::new(0.0, 0.0));
    y.view_mut((0, 0), (n, n)).copy_from(&branch_admittance(case));
    for load in &case.loads {
        let i = case.bus_index(load.bus).expect("validated");
        let vsq = bus_voltages[i].norm_sqr();
        if vsq == 0.0 {
            return Err(PowersimError::Validation(format!("zero voltage at load bus {}", load.bus)));
        }
        y[(i, i)] += C64::new(load.p, -load.q) / vsq;
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let i = case.bus_index(gen.bus).expect("validated");
        let yg = C64::new(1.0, 0.0) / C64::new(0.0, gen.xd_prime);
        let k = n + g;
        y[(i, i)] += yg;
        y[(k, k)] += yg;
        y[(i, k)] -= yg;
        y[(k, i)] -= yg;
    }
    if let Stage::Fault(bus) = stage {
        let i = case
            .bus_index(bus)
            .ok_or_else(|| PowersimError::Validation(format!("fault bus {bus} unknown")))?;
        y[(i, i)] += C64::new(FAULT_ADMITTANCE, 0.0);
    }
    Ok(y)
}

/// Kron reduction: Y_red = Y_rr - Y_re Y_ee^-1 Y_er, keeping `retained`
/// (in the given order) and eliminating everything else.
pub fn kron_reduce(y: &DMatrix<C64>, retained: &[usize]) -> Result<DMatrix<C64>, PowersimError> {
    let n = y.nrows();
    assert_eq!(n, y.ncols(), "admittance matrix must be square");
    let eliminated: Vec<usize> = (0..n).filter(|i| !retained.contains(i)).collect();
    let r = retained.len();
    let e = eliminated.len();
    if e == 0 {
        let mut out = DMatrix::from_element(r, r, C64::new(0.0, 0.0));
        for (a, &i) in retained.iter().enumerate() {
            for (b, &j) in retained.iter().enumerate() {
                out[(a, b)] = y[(i, j)];
            }
        }
        return Ok(out);
    }
    let mut y_rr = DMatrix::from_element(r, r, C64::new(0.0, 0.0));
    let mut y_re = DMatrix::from_element(r, e, C64::new(0.0, 0.0));
    let mut y_er = DMatrix::from_element(e, r, C64::new(0.0, 0.0));
    let mut y_ee = DMatrix::from_element(e, e, C64::new(0.0, 0.0));
    for (a, &i) in retained.iter().enumerate() {
        for (b, &j) in retained.iter().enumerate() {
            y_rr[(a, b)] = y[(i, j)];
        }
        for (b, &j) in eliminated.iter().enumerate() {
            y_re[(a, b)] = y[(i, j)];
        }
    }
    for (a, &i) in eliminated.iter().enumerate() {
        for (b, &j) in retained.iter().enumerate() {
            y_er[(a, b)] = y[(i, j)];
        }
        for (b, &j) in eliminated.iter().enumerate() {
            y_ee[(a, b)] = y[(i, j)];
        }
    }
    let solved = y_ee.lu().solve(&y_er).ok_or(PowersimError::SingularReduction)?;
    Ok(y_rr - y_re * solved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powersim::case::{wscc9, Branch, Bus, BusType, Generator, PowerCase};
    use crate::powersim::powerflow::solve_power_flow;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_bus_case() -> PowerCase {
        PowerCase {
            f0: 60.0,
            base_mva: 100.0,
            buses: vec![
                Bus { id: 1, bus_type: BusType::Slack, vm: 1.0, va: 0.0 },
                Bus { id: 2, bus_type: BusType::Pv, vm: 1.0, va: 0.0 },
            ],
            branches: vec![Branch { from: 1, to: 2, r: 0.0, x: 0.5, b: 0.0 }],
            loads: vec![],
            generators: vec![
                Generator { bus: 1, h: 10.0, xd_prime: 0.1, p_gen: 0.0 },
                Generator { bus: 2, h: 5.0, xd_prime: 0.1, p_gen: 0.0 },
            ],
        }
    }

    #[test]
    fn two_bus_off_diagonal_matches_hand_value() {
        let case = two_bus_case();
        let v = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        let y = build_admittance(&case, &v, Stage::Prefault).unwrap();
        // -1/(j 0.5) = j2 off-diagonal between the two buses
        assert!((y[(0, 1)] - C64::new(0.0, 2.0)).norm() < 1e-12);
        assert!((y[(1, 0)] - C64::new(0.0, 2.0)).norm() < 1e-12);
        // bus diagonal: line -j2 plus generator attachment -j10
        assert!((y[(0, 0)] - C64::new(0.0, -12.0)).norm() < 1e-12);
        // symmetric for reciprocal branches
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(y[(i, j)], y[(j, i)]);
            }
        }
    }

    #[test]
    fn fault_stage_injects_large_shunt() {
        let case = wscc9();
        let v = vec![C64::new(1.0, 0.0); 9];
        let y = build_admittance(&case, &v, Stage::Fault(7)).unwrap();
        let i = case.bus_index(7).unwrap();
        assert!(y[(i, i)].norm() > 1e7);
        let y_pre = build_admittance(&case, &v, Stage::Prefault).unwrap();
        let y_post = build_admittance(&case, &v, Stage::Postfault).unwrap();
        assert_eq!(y_pre, y_post);
    }

    #[test]
    fn kron_identity_when_nothing_eliminated() {
        let case = two_bus_case();
        let v = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        let y = build_admittance(&case, &v, Stage::Prefault).unwrap();
        let all: Vec<usize> = (0..4).collect();
        let red = kron_reduce(&y, &all).unwrap();
        assert_eq!(red, y);
    }

    #[test]
    fn kron_chain_reduces_to_series_combination() {
        // three nodes in a chain with admittances y12, y23; eliminating the
        // middle node leaves the series combination between 1 and 3
        let y12 = C64::new(0.0, -4.0);
        let y23 = C64::new(0.0, -6.0);
        let mut y = DMatrix::from_element(3, 3, C64::new(0.0, 0.0));
        y[(0, 0)] = y12;
        y[(1, 1)] = y12 + y23;
        y[(2, 2)] = y23;
        y[(0, 1)] = -y12;
        y[(1, 0)] = -y12;
        y[(1, 2)] = -y23;
        y[(2, 1)] = -y23;
        let red = kron_reduce(&y, &[0, 2]).unwrap();
        let series = y12 * y23 / (y12 + y23);
        assert!((red[(0, 1)] + series).norm() < 1e-12);
        assert!((red[(0, 0)] - series).norm() < 1e-12);
    }

    #[test]
    fn kron_reduction_matches_full_solve_on_random_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..20 {
            let n = rng.gen_range(4..9);
            let keep = rng.gen_range(2..n.min(4));
            // random connected network with shunts so the eliminated block
            // is invertible
            let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen_bool(0.7) || j == i + 1 {
                        let adm = C64::new(rng.gen_range(0.1..2.0), rng.gen_range(-8.0..-1.0));
                        y[(i, j)] -= adm;
                        y[(j, i)] -= adm;
                        y[(i, i)] += adm;
                        y[(j, j)] += adm;
                    }
                }
                y[(i, i)] += C64::new(rng.gen_range(0.01..0.2), rng.gen_range(-0.5..0.5));
            }
            let retained: Vec<usize> = (0..keep).collect();
            let red = kron_reduce(&y, &retained).unwrap();
            // inject currents at retained nodes, solve both systems
            let mut i_full = DVector::from_element(n, C64::new(0.0, 0.0));
            for k in 0..keep {
                i_full[k] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let v_full = y.clone().lu().solve(&i_full).unwrap();
            let i_red = DVector::from_iterator(keep, (0..keep).map(|k| i_full[k]));
            let v_red = red.clone().lu().solve(&i_red).unwrap();
            for k in 0..keep {
                assert!(
                    (v_full[k] - v_red[k]).norm() < 1e-10,
                    "voltage mismatch {} vs {}",
                    v_full[k],
                    v_red[k]
                );
            }
        }
    }

    #[test]
    fn wscc9_reduction_preserves_generator_coupling() {
        let case = wscc9();
        let pf = solve_power_flow(&case).unwrap();
        let y = build_admittance(&case, &pf.v, Stage::Prefault).unwrap();
        let retained: Vec<usize> = (0..3).map(|g| 9 + g).collect();
        let red = kron_reduce(&y, &retained).unwrap();
        assert_eq!(red.nrows(), 3);
        // all pairs coupled after reduction
        for i in 0..3 {
            for j in 0..3 {
                assert!(red[(i, j)].norm() > 1e-3);
            }
        }
    }
}

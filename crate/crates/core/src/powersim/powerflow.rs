//! Newton-Raphson AC power flow in polar form. Loads enter as PQ
//! injections here; the dynamic model converts them to constant admittances
//! at the solved voltages afterwards.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use super::case::{BusType, PowerCase};
use super::PowersimError;

pub type C64 = Complex<f64>;

/// Bus admittance matrix from branches alone (series elements plus half
/// line-charging at each end); loads and generators are not included.
pub fn branch_admittance(case: &PowerCase) -> DMatrix<C64> {
    let n = case.n_buses();
    let mut y = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for br in &case.branches {
        let i = case.bus_index(br.from).expect("validated");
        let j = case.bus_index(br.to).expect("validated");
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        let shunt = C64::new(0.0, br.b / 2.0);
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
        y[(i, i)] += ys + shunt;
        y[(j, j)] += ys + shunt;
    }
    y
}

#[derive(Debug, Clone)]
pub struct PfSolution {
    /// Complex bus voltage per internal bus index.
    pub v: Vec<C64>,
    /// Net complex injection per bus (generation minus load).
    pub s_injection: Vec<C64>,
    /// Complex power delivered by each generator, following case order.
    pub s_gen: Vec<C64>,
    pub iterations: usize,
    /// Worst post-convergence bus power mismatch, p.u.
    pub max_mismatch: f64,
}

/// Solve the pre-fault operating point. Slack voltage is held at its
/// setpoint, PV buses hold P and |V|, PQ buses hold P and Q.
pub fn solve_power_flow(case: &PowerCase) -> Result<PfSolution, PowersimError> {
    case.validate()?;
    let n = case.n_buses();
    let y = branch_admittance(case);
    let g = y.map(|c| c.re);
    let b = y.map(|c| c.im);

    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for gen in &case.generators {
        p_spec[case.bus_index(gen.bus).unwrap()] += gen.p_gen;
    }
    for load in &case.loads {
        let i = case.bus_index(load.bus).unwrap();
        p_spec[i] -= load.p;
        q_spec[i] -= load.q;
    }

    let mut vm: Vec<f64> = case.buses.iter().map(|bus| bus.vm).collect();
    let mut va: Vec<f64> = case.buses.iter().map(|bus| bus.va).collect();
    let slack = case.buses.iter().position(|bus| bus.bus_type == BusType::Slack).unwrap();
    let angle_vars: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let vmag_vars: Vec<usize> =
        (0..n).filter(|&i| case.buses[i].bus_type == BusType::Pq).collect();
    let n_unknowns = angle_vars.len() + vmag_vars.len();

    let calc = |vm: &[f64], va: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for k in 0..n {
                if g[(i, k)] == 0.0 && b[(i, k)] == 0.0 {
                    continue;
                }
                let th = va[i] - va[k];
                let (s, c) = th.sin_cos();
                p[i] += vm[i] * vm[k] * (g[(i, k)] * c + b[(i, k)] * s);
                q[i] += vm[i] * vm[k] * (g[(i, k)] * s - b[(i, k)] * c);
            }
        }
        (p, q)
    };

    const TOL: f64 = 1e-9;
    const MAX_ITERS: usize = 50;
    let mut iterations = 0;
    loop {
        let (p_calc, q_calc) = calc(&vm, &va);
        let mut mism = DVector::zeros(n_unknowns);
        for (r, &i) in angle_vars.iter().enumerate() {
            mism[r] = p_spec[i] - p_calc[i];
        }
        for (r, &i) in vmag_vars.iter().enumerate() {
            mism[angle_vars.len() + r] = q_spec[i] - q_calc[i];
        }
        let worst = mism.amax();
        if worst < TOL {
            let v: Vec<C64> = (0..n).map(|i| C64::from_polar(vm[i], va[i])).collect();
            let mut s_injection = vec![C64::new(0.0, 0.0); n];
            for i in 0..n {
                let mut current = C64::new(0.0, 0.0);
                for k in 0..n {
                    current += y[(i, k)] * v[k];
                }
                s_injection[i] = v[i] * current.conj();
            }
            let s_gen = case
                .generators
                .iter()
                .map(|gen| {
                    let i = case.bus_index(gen.bus).unwrap();
                    let s_load = case
                        .loads
                        .iter()
                        .filter(|l| l.bus == gen.bus)
                        .fold(C64::new(0.0, 0.0), |acc, l| acc + C64::new(l.p, l.q));
                    s_injection[i] + s_load
                })
                .collect();
            return Ok(PfSolution { v, s_injection, s_gen, iterations, max_mismatch: worst });
        }
        if iterations >= MAX_ITERS {
            return Err(PowersimError::PowerFlowDiverged { iterations, mismatch: worst });
        }

        let mut jac = DMatrix::zeros(n_unknowns, n_unknowns);
        for (r, &i) in angle_vars.iter().enumerate() {
            for (c, &j) in angle_vars.iter().enumerate() {
                jac[(r, c)] = if i == j {
                    -q_calc[i] - b[(i, i)] * vm[i] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * vm[j] * (g[(i, j)] * th.sin() - b[(i, j)] * th.cos())
                };
            }
            for (c, &j) in vmag_vars.iter().enumerate() {
                jac[(r, angle_vars.len() + c)] = if i == j {
                    p_calc[i] / vm[i] + g[(i, i)] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * (g[(i, j)] * th.cos() + b[(i, j)] * th.sin())
                };
            }
        }
        for (r, &i) in vmag_vars.iter().enumerate() {
            for (c, &j) in angle_vars.iter().enumerate() {
                jac[(angle_vars.len() + r, c)] = if i == j {
                    p_calc[i] - g[(i, i)] * vm[i] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    -vm[i] * vm[j] * (g[(i, j)] * th.cos() + b[(i, j)] * th.sin())
                };
            }
            for (c, &j) in vmag_vars.iter().enumerate() {
                jac[(angle_vars.len() + r, angle_vars.len() + c)] = if i == j {
                    q_calc[i] / vm[i] - b[(i, i)] * vm[i]
                } else {
                    let th = va[i] - va[j];
                    vm[i] * (g[(i, j)] * th.sin() - b[(i, j)] * th.cos())
                };
            }
        }
        let delta = jac
            .lu()
            .solve(&mism)
            .ok_or(PowersimError::PowerFlowDiverged { iterations, mismatch: worst })?;
        for (r, &i) in angle_vars.iter().enumerate() {
            va[i] += delta[r];
        }
        for (r, &i) in vmag_vars.iter().enumerate() {
            vm[i] += delta[angle_vars.len() + r];
            if vm[i] <= 0.0 {
                return Err(PowersimError::PowerFlowDiverged { iterations, mismatch: worst });
            }
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powersim::case::wscc9;

    #[test]
    fn wscc9_power_flow_converges() {
        let case = wscc9();
        let pf = solve_power_flow(&case).unwrap();
        assert!(pf.max_mismatch < 1e-6);
        // published solution: slack generation about 0.716 + j0.27
        assert!((pf.s_gen[0].re - 0.716).abs() < 0.005, "slack P = {}", pf.s_gen[0].re);
        // generation covers load plus small losses
        let gen_p: f64 = pf.s_gen.iter().map(|s| s.re).sum();
        let (load_p, _) = case.total_load();
        let losses = gen_p - load_p;
        assert!(losses > 0.0 && losses < 0.1, "losses {losses}");
    }

    #[test]
    fn two_bus_textbook_case() {
        // P = V1 V2 sin(d)/x for a lossless line; hand-solvable
        let case = PowerCase {
            f0: 60.0,
            base_mva: 100.0,
            buses: vec![
                super::super::case::Bus { id: 1, bus_type: BusType::Slack, vm: 1.0, va: 0.0 },
                super::super::case::Bus { id: 2, bus_type: BusType::Pv, vm: 1.0, va: 0.0 },
            ],
            branches: vec![super::super::case::Branch { from: 1, to: 2, r: 0.0, x: 0.5, b: 0.0 }],
            loads: vec![super::super::case::Load { bus: 1, p: 0.8, q: 0.0 }],
            generators: vec![
                super::super::case::Generator { bus: 1, h: 10.0, xd_prime: 0.1, p_gen: 0.0 },
                super::super::case::Generator { bus: 2, h: 5.0, xd_prime: 0.1, p_gen: 0.8 },
            ],
        };
        let pf = solve_power_flow(&case).unwrap();
        // delta2 = asin(P x / (V1 V2)) = asin(0.4)
        let d2 = pf.v[1].arg();
        assert!((d2 - 0.4f64.asin()).abs() < 1e-9, "angle {d2}");
    }
}

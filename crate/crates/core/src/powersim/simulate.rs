//! Swing-equation integration: classical generators (constant EMF behind
//! transient reactance) exchanging power over a Kron-reduced network,
//! integrated with fixed-step fourth-order Runge-Kutta.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::case::PowerCase;
use super::network::{build_admittance, kron_reduce, Stage};
use super::powerflow::{solve_power_flow, C64, PfSolution};
use super::PowersimError;

/// Per-generator equilibrium quantities from the pre-fault operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditions {
    /// Internal EMF magnitude, p.u.
    pub e_mag: Vec<f64>,
    /// Initial rotor angle, rad.
    pub delta0: Vec<f64>,
    /// Mechanical power, set to the equilibrium electrical power, p.u.
    pub pm: Vec<f64>,
    /// Inertia coefficient M = 2H/omega_s, per generator.
    pub m: Vec<f64>,
}

/// Internal EMFs from terminal conditions: E = V + j xd' I with
/// I = conj(S_gen / V); P_m is matched to the equilibrium electrical power
/// so the pre-fault system starts at rest.
pub fn initial_conditions(
    case: &PowerCase,
    pf: &PfSolution,
) -> Result<InitialConditions, PowersimError> {
    let omega_s = case.omega_s();
    let mut e_mag = Vec::with_capacity(case.n_generators());
    let mut delta0 = Vec::with_capacity(case.n_generators());
    let mut pm = Vec::with_capacity(case.n_generators());
    let mut m = Vec::with_capacity(case.n_generators());
    for (g, gen) in case.generators.iter().enumerate() {
        let i = case.bus_index(gen.bus).expect("validated");
        let v = pf.v[i];
        let current = (pf.s_gen[g] / v).conj();
        let emf = v + C64::new(0.0, gen.xd_prime) * current;
        e_mag.push(emf.norm());
        delta0.push(emf.arg());
        pm.push(pf.s_gen[g].re);
        m.push(2.0 * gen.h / omega_s);
    }
    Ok(InitialConditions { e_mag, delta0, pm, m })
}

/// Generator swing dynamics over one reduced network:
/// M_i dω_i/dt = P_mi - P_ei(δ), dδ_i/dt = ω_i, with
/// P_ei = E_i² G_ii + Σ_{j≠i} E_i E_j (G_ij cos δ_ij + B_ij sin δ_ij).
#[derive(Debug, Clone)]
pub struct SwingSystem {
    pub m: Vec<f64>,
    pub pm: Vec<f64>,
    pub e: Vec<f64>,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl SwingSystem {
    pub fn new(m: Vec<f64>, pm: Vec<f64>, e: Vec<f64>, y_reduced: &DMatrix<C64>) -> Self {
        assert_eq!(m.len(), y_reduced.nrows());
        Self {
            g: y_reduced.map(|c| c.re),
            b: y_reduced.map(|c| c.im),
            m,
            pm,
            e,
        }
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    /// Electrical power of every machine at the given rotor angles.
    pub fn electrical_power(&self, delta: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut pe = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.e[i] * self.e[i] * self.g[(i, i)];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dij = delta[i] - delta[j];
                let (s, c) = dij.sin_cos();
                acc += self.e[i] * self.e[j] * (self.g[(i, j)] * c + self.b[(i, j)] * s);
            }
            pe[i] = acc;
        }
        pe
    }

    /// State layout: [delta_0..delta_n, omega_0..omega_n].
    fn rhs(&self, state: &[f64], out: &mut [f64]) {
        let n = self.n();
        let pe = self.electrical_power(&state[..n]);
        for i in 0..n {
            out[i] = state[n + i];
            out[n + i] = (self.pm[i] - pe[i]) / self.m[i];
        }
    }

    /// One classical RK4 step of length dt.
    pub fn rk4_step(&self, state: &[f64], dt: f64) -> Vec<f64> {
        let len = state.len();
        let mut k1 = vec![0.0; len];
        let mut k2 = vec![0.0; len];
        let mut k3 = vec![0.0; len];
        let mut k4 = vec![0.0; len];
        let mut tmp = vec![0.0; len];
        self.rhs(state, &mut k1);
        for i in 0..len {
            tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        self.rhs(&tmp, &mut k2);
        for i in 0..len {
            tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        self.rhs(&tmp, &mut k3);
        for i in 0..len {
            tmp[i] = state[i] + dt * k3[i];
        }
        self.rhs(&tmp, &mut k4);
        (0..len)
            .map(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }
}

/// Time series of the fault response plus the constants needed downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Rotor angles, rad: angles[step][generator].
    pub angles: Vec<Vec<f64>>,
    /// Speed deviations from synchronous, rad/s.
    pub speeds: Vec<Vec<f64>>,
    /// Electrical power under the network active at each instant, p.u.
    pub elec_power: Vec<Vec<f64>>,
    pub t0: f64,
    pub t_clear: f64,
    pub dt: f64,
    pub m: Vec<f64>,
    pub pm: Vec<f64>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_generators(&self) -> usize {
        self.m.len()
    }

    /// Grid index nearest to time t.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.len().saturating_sub(1))
    }
}

/// Center-of-inertia frame at one grid index: inertia-weighted mean angle
/// and speed removed from every machine.
pub fn coi_frame(traj: &Trajectory, index: usize) -> (Vec<f64>, Vec<f64>) {
    let m_total: f64 = traj.m.iter().sum();
    let delta = &traj.angles[index];
    let omega = &traj.speeds[index];
    let d_coi: f64 = traj.m.iter().zip(delta).map(|(m, d)| m * d).sum::<f64>() / m_total;
    let w_coi: f64 = traj.m.iter().zip(omega).map(|(m, w)| m * w).sum::<f64>() / m_total;
    (
        delta.iter().map(|d| d - d_coi).collect(),
        omega.iter().map(|w| w - w_coi).collect(),
    )
}

/// Unstable (-1) iff any pair of machines separates by more than 360 deg at
/// any recorded instant, or the integration blew up; stable (+1) otherwise.
pub fn stability_label(traj: &Trajectory) -> i8 {
    if traj.diverged {
        return -1;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    for delta in &traj.angles {
        for i in 0..delta.len() {
            for j in (i + 1)..delta.len() {
                if (delta[i] - delta[j]).abs() > two_pi {
                    return -1;
                }
            }
        }
    }
    1
}

/// Pre-fault operating point with the three reduced networks, ready to
/// simulate any number of fault scenarios.
pub struct DynamicModel {
    pub case: PowerCase,
    pub pf: PfSolution,
    pub ics: InitialConditions,
}

impl DynamicModel {
    pub fn new(case: &PowerCase) -> Result<Self, PowersimError> {
        let pf = solve_power_flow(case)?;
        let ics = initial_conditions(case, &pf)?;
        Ok(Self { case: case.clone(), pf, ics })
    }

    fn reduced_system(&self, stage: Stage) -> Result<SwingSystem, PowersimError> {
        let n = self.case.n_buses();
        let full = build_admittance(&self.case, &self.pf.v, stage)?;
        let retained: Vec<usize> = (0..self.case.n_generators()).map(|g| n + g).collect();
        let reduced = kron_reduce(&full, &retained)?;
        Ok(SwingSystem::new(
            self.ics.m.clone(),
            self.ics.pm.clone(),
            self.ics.e_mag.clone(),
            &reduced,
        ))
    }

    /// Integrate a three-phase fault at `fault_bus` applied at t = 0 and
    /// cleared at `t_clear`, out to `horizon`. `dt` must divide both.
    pub fn simulate(
        &self,
        fault_bus: usize,
        t_clear: f64,
        horizon: f64,
        dt: f64,
    ) -> Result<Trajectory, PowersimError> {
        if dt <= 0.0 || horizon <= 0.0 || t_clear < 0.0 || t_clear > horizon {
            return Err(PowersimError::BadTimeGrid(
                "need 0 <= t_clear <= horizon and dt > 0".into(),
            ));
        }
        let divides = |t: f64| (t / dt - (t / dt).round()).abs() < 1e-9;
        if !divides(t_clear) || !divides(horizon) {
            return Err(PowersimError::BadTimeGrid(format!(
                "dt = {dt} must divide t_clear = {t_clear} and horizon = {horizon}"
            )));
        }
        let steps = (horizon / dt).round() as usize;
        let clear_step = (t_clear / dt).round() as usize;
        let fault_sys = self.reduced_system(Stage::Fault(fault_bus))?;
        let post_sys = self.reduced_system(Stage::Postfault)?;

        let n = self.case.n_generators();
        let mut state: Vec<f64> = self.ics.delta0.iter().copied().chain(vec![0.0; n]).collect();
        let mut traj = Trajectory {
            times: Vec::with_capacity(steps + 1),
            angles: Vec::with_capacity(steps + 1),
            speeds: Vec::with_capacity(steps + 1),
            elec_power: Vec::with_capacity(steps + 1),
            t0: 0.0,
            t_clear,
            dt,
            m: self.ics.m.clone(),
            pm: self.ics.pm.clone(),
            diverged: false,
        };
        for k in 0..=steps {
            let sys = if k < clear_step { &fault_sys } else { &post_sys };
            if state.iter().any(|v| !v.is_finite()) {
                traj.diverged = true;
                break;
            }
            traj.times.push(k as f64 * dt);
            traj.angles.push(state[..n].to_vec());
            traj.speeds.push(state[n..].to_vec());
            traj.elec_power.push(sys.electrical_power(&state[..n]));
            if k < steps {
                state = sys.rk4_step(&state, dt);
            }
        }
        Ok(traj)
    }
}

/// One-call convenience wrapper around [`DynamicModel`].
pub fn simulate_fault(
    case: &PowerCase,
    fault_bus: usize,
    t_clear: f64,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory, PowersimError> {
    DynamicModel::new(case)?.simulate(fault_bus, t_clear, horizon, dt)
}

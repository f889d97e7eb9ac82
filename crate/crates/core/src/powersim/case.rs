//! Power-system case model: buses, branches, constant-impedance loads and
//! classical generators, plus JSON io and the bundled WSCC 3-machine 9-bus
//! reference case.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PowersimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(rename = "type")]
    pub bus_type: BusType,
    /// Voltage magnitude setpoint (slack/PV) or initial guess (PQ), p.u.
    pub vm: f64,
    /// Voltage angle initial guess, rad (slack angle is held fixed).
    pub va: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series reactance, p.u.
    pub x: f64,
    /// Total line-charging susceptance, p.u. (split half per end).
    #[serde(default)]
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    /// Inertia constant H in seconds on the system base.
    pub h: f64,
    /// Transient reactance x_d' in p.u.
    pub xd_prime: f64,
    /// Scheduled active power output, p.u. (nominal for the slack machine).
    pub p_gen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCase {
    pub f0: f64,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    pub generators: Vec<Generator>,
}

impl PowerCase {
    /// Structural validation: one slack, at least two generators with
    /// positive H and x_d', all referenced buses present, at most one
    /// generator per bus, and a connected branch graph.
    pub fn validate(&self) -> Result<(), PowersimError> {
        let find = |id: usize| self.buses.iter().position(|b| b.id == id);
        if self.f0 <= 0.0 || self.base_mva <= 0.0 {
            return Err(PowersimError::Validation("f0 and base_mva must be positive".into()));
        }
        for (i, b) in self.buses.iter().enumerate() {
            if self.buses[..i].iter().any(|o| o.id == b.id) {
                return Err(PowersimError::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.bus_type == BusType::Slack).count();
        if slacks != 1 {
            return Err(PowersimError::Validation(format!("need exactly 1 slack bus, got {slacks}")));
        }
        if self.generators.len() < 2 {
            return Err(PowersimError::Validation("need at least 2 generators".into()));
        }
        for g in &self.generators {
            if g.h <= 0.0 || g.xd_prime <= 0.0 {
                return Err(PowersimError::Validation(format!(
                    "generator at bus {} needs positive H and xd'",
                    g.bus
                )));
            }
            if find(g.bus).is_none() {
                return Err(PowersimError::Validation(format!("generator bus {} unknown", g.bus)));
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if self.generators[..i].iter().any(|o| o.bus == g.bus) {
                return Err(PowersimError::Validation(format!(
                    "more than one generator at bus {}",
                    g.bus
                )));
            }
        }
        for l in &self.loads {
            if find(l.bus).is_none() {
                return Err(PowersimError::Validation(format!("load bus {} unknown", l.bus)));
            }
        }
        for br in &self.branches {
            if find(br.from).is_none() || find(br.to).is_none() {
                return Err(PowersimError::Validation(format!(
                    "branch {}-{} references unknown bus",
                    br.from, br.to
                )));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(PowersimError::Validation(format!(
                    "branch {}-{} has zero impedance",
                    br.from, br.to
                )));
            }
        }
        // every PV/slack bus must host a generator
        for b in &self.buses {
            if b.bus_type != BusType::Pq && !self.generators.iter().any(|g| g.bus == b.id) {
                return Err(PowersimError::Validation(format!(
                    "bus {} is {:?} but has no generator",
                    b.id, b.bus_type
                )));
            }
        }
        // connectivity over branches
        let n = self.buses.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            let id = self.buses[i].id;
            for br in &self.branches {
                let other = if br.from == id {
                    Some(br.to)
                } else if br.to == id {
                    Some(br.from)
                } else {
                    None
                };
                if let Some(o) = other {
                    let oi = find(o).unwrap();
                    if !seen[oi] {
                        seen[oi] = true;
                        stack.push(oi);
                    }
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(PowersimError::Disconnected);
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Internal index of a bus id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Synchronous speed in rad/s.
    pub fn omega_s(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f0
    }

    pub fn total_load(&self) -> (f64, f64) {
        self.loads.iter().fold((0.0, 0.0), |(p, q), l| (p + l.p, q + l.q))
    }

    pub fn from_json_path<P: AsRef<Path>>(path: P) -> Result<Self, PowersimError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let case: PowerCase = serde_json::from_reader(file)?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_json_path<P: AsRef<Path>>(&self, path: P) -> Result<(), PowersimError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }
}

/// The WSCC 3-machine 9-bus test system with its standard published
/// parameters (100 MVA base, 60 Hz).
pub fn wscc9() -> PowerCase {
    PowerCase {
        f0: 60.0,
        base_mva: 100.0,
        buses: vec![
            Bus { id: 1, bus_type: BusType::Slack, vm: 1.040, va: 0.0 },
            Bus { id: 2, bus_type: BusType::Pv, vm: 1.025, va: 0.0 },
            Bus { id: 3, bus_type: BusType::Pv, vm: 1.025, va: 0.0 },
            Bus { id: 4, bus_type: BusType::Pq, vm: 1.0, va: 0.0 },
            Bus { id: 5, bus_type: BusType::Pq, vm: 1.0, va: 0.0 },
            Bus { id: 6, bus_type: BusType::Pq, vm: 1.0, va: 0.0 },
            Bus { id: 7, bus_type: BusType::Pq, vm: 1.0, va: 0.0 },
            Bus { id: 8, bus_type: BusType::Pq, vm: 1.0, va: 0.0 },
            Bus { id: 9, bus_type: BusType::Pq, vm: 1.0, va: 0.0 },
        ],
        branches: vec![
            Branch { from: 1, to: 4, r: 0.0, x: 0.0576, b: 0.0 },
            Branch { from: 2, to: 7, r: 0.0, x: 0.0625, b: 0.0 },
            Branch { from: 3, to: 9, r: 0.0, x: 0.0586, b: 0.0 },
            Branch { from: 4, to: 5, r: 0.010, x: 0.085, b: 0.176 },
            Branch { from: 4, to: 6, r: 0.017, x: 0.092, b: 0.158 },
            Branch { from: 5, to: 7, r: 0.032, x: 0.161, b: 0.306 },
            Branch { from: 6, to: 9, r: 0.039, x: 0.170, b: 0.358 },
            Branch { from: 7, to: 8, r: 0.0085, x: 0.072, b: 0.149 },
            Branch { from: 8, to: 9, r: 0.0119, x: 0.1008, b: 0.209 },
        ],
        loads: vec![
            Load { bus: 5, p: 1.25, q: 0.50 },
            Load { bus: 6, p: 0.90, q: 0.30 },
            Load { bus: 8, p: 1.00, q: 0.35 },
        ],
        generators: vec![
            Generator { bus: 1, h: 23.64, xd_prime: 0.0608, p_gen: 0.716 },
            Generator { bus: 2, h: 6.40, xd_prime: 0.1198, p_gen: 1.63 },
            Generator { bus: 3, h: 3.01, xd_prime: 0.1813, p_gen: 0.85 },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wscc9_validates() {
        wscc9().validate().unwrap();
    }

    #[test]
    fn validation_catches_missing_slack() {
        let mut case = wscc9();
        case.buses[0].bus_type = BusType::Pv;
        assert!(case.validate().is_err());
    }

    #[test]
    fn validation_catches_disconnection() {
        let mut case = wscc9();
        case.branches.retain(|b| !(b.from == 3 && b.to == 9));
        assert!(matches!(case.validate(), Err(PowersimError::Disconnected)));
    }

    #[test]
    fn json_round_trip() {
        let case = wscc9();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("case.json");
        case.to_json_path(&path).unwrap();
        let back = PowerCase::from_json_path(&path).unwrap();
        assert_eq!(back, case);
    }
}

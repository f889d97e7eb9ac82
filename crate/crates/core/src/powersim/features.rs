//! The 33 system-level classification features sampled at the fault
//! instant, the clearing instant, and 3/6/9 cycles after clearing.
//!
//! Kinetic energies use COI-relative speeds (absolute-speed energy would be
//! frame dependent); "system impact" is the total COI kinetic energy; "the
//! machine deviating most from the center of inertia" is the argmax of
//! |COI-relative angle|.

use super::simulate::{coi_frame, Trajectory};
use super::PowersimError;

pub const N_FEATURES: usize = 33;

/// Feature names Tz1..Tz33 in table order.
pub fn feature_names() -> Vec<String> {
    (1..=N_FEATURES).map(|i| format!("Tz{i}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector33 {
    pub values: [f64; N_FEATURES],
}

struct StageSnapshot {
    total_ke: f64,
    max_ke: f64,
    mean_ke: f64,
    angle_of_max_dev: f64,
    speed_of_max_dev: f64,
    ke_of_max_angle: f64,
    angle_of_max_ke: f64,
    max_rel_swing: f64,
}

fn argmax_by<F: Fn(usize) -> f64>(n: usize, f: F) -> usize {
    let mut best = 0;
    for i in 1..n {
        if f(i) > f(best) {
            best = i;
        }
    }
    best
}

fn stage_snapshot(traj: &Trajectory, index: usize) -> StageSnapshot {
    let n = traj.n_generators();
    let (d_rel, w_rel) = coi_frame(traj, index);
    let ke: Vec<f64> =
        (0..n).map(|i| 0.5 * traj.m[i] * w_rel[i] * w_rel[i]).collect();
    let total_ke: f64 = ke.iter().sum();
    let max_ke = ke.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_ke = total_ke / n as f64;
    let i_dev = argmax_by(n, |i| d_rel[i].abs());
    let i_lead = argmax_by(n, |i| d_rel[i]);
    let i_ke = argmax_by(n, |i| ke[i]);
    let delta = &traj.angles[index];
    let mut max_rel_swing = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_rel_swing = max_rel_swing.max((delta[i] - delta[j]).abs());
        }
    }
    StageSnapshot {
        total_ke,
        max_ke,
        mean_ke,
        angle_of_max_dev: d_rel[i_dev],
        speed_of_max_dev: w_rel[i_dev],
        ke_of_max_angle: ke[i_lead],
        angle_of_max_ke: d_rel[i_ke],
        max_rel_swing,
    }
}

/// Compute Tz1..Tz33. Needs the grid to cover t_clear + 9 cycles, where one
/// cycle is 1/f0 seconds; sampling instants snap to the nearest grid point.
pub fn extract_features(traj: &Trajectory, f0: f64) -> Result<FeatureVector33, PowersimError> {
    let n = traj.n_generators();
    let cycle = 1.0 / f0;
    let last_needed = traj.t_clear + 9.0 * cycle;
    let covered = traj.times.last().copied().unwrap_or(f64::NEG_INFINITY);
    if covered + 1e-9 < last_needed {
        return Err(PowersimError::HorizonTooShort { needed: last_needed, covered });
    }
    let idx_t0 = traj.index_of(traj.t0);
    let stage_indices = [
        traj.index_of(traj.t_clear),
        traj.index_of(traj.t_clear + 3.0 * cycle),
        traj.index_of(traj.t_clear + 6.0 * cycle),
        traj.index_of(traj.t_clear + 9.0 * cycle),
    ];

    let mut tz = [0.0; N_FEATURES];
    // Tz1: mean mechanical power
    tz[0] = traj.pm.iter().sum::<f64>() / n as f64;
    // Tz2-Tz4 at the fault instant, under the fault-on network
    let pe0 = &traj.elec_power[idx_t0];
    let accel: Vec<f64> = (0..n).map(|i| (traj.pm[i] - pe0[i]) / traj.m[i]).collect();
    let i_acc = argmax_by(n, |i| accel[i]);
    tz[1] = accel[i_acc];
    tz[2] = traj.angles[idx_t0][i_acc];
    tz[3] = (0..n).map(|i| traj.pm[i] - pe0[i]).sum::<f64>() / n as f64;

    let s_cl = stage_snapshot(traj, stage_indices[0]);
    tz[4] = s_cl.total_ke;
    tz[5] = s_cl.angle_of_max_dev;
    tz[6] = s_cl.ke_of_max_angle;
    tz[7] = s_cl.angle_of_max_ke;
    tz[8] = s_cl.max_ke;
    tz[9] = s_cl.mean_ke;
    tz[10] = s_cl.max_rel_swing;
    tz[11] = s_cl.speed_of_max_dev;

    let s3 = stage_snapshot(traj, stage_indices[1]);
    tz[12] = s3.total_ke;
    tz[13] = s3.max_ke;
    tz[14] = s3.mean_ke;
    tz[15] = s3.angle_of_max_dev;
    tz[16] = s3.max_rel_swing;
    tz[17] = s3.ke_of_max_angle;
    tz[18] = s3.speed_of_max_dev;

    let s6 = stage_snapshot(traj, stage_indices[2]);
    tz[19] = s6.total_ke;
    tz[20] = s6.max_ke;
    tz[21] = s6.mean_ke;
    tz[22] = s6.ke_of_max_angle;
    tz[23] = s6.angle_of_max_dev;
    tz[24] = s6.max_rel_swing;
    tz[25] = s6.speed_of_max_dev;

    let s9 = stage_snapshot(traj, stage_indices[3]);
    tz[26] = s9.total_ke;
    tz[27] = s9.ke_of_max_angle;
    tz[28] = s9.max_ke;
    tz[29] = s9.mean_ke;
    tz[30] = s9.angle_of_max_dev;
    tz[31] = s9.max_rel_swing;
    tz[32] = s9.speed_of_max_dev;

    if tz.iter().any(|v| !v.is_finite()) {
        return Err(PowersimError::NonFiniteFeature);
    }
    Ok(FeatureVector33 { values: tz })
}

//! Middle-layer CoM planning.
//!
//! `optimal_com_velocity` drives the system CoM towards the support
//! center by minimizing a quadratic instability cost over the CoM
//! velocity; `reference_from_com_command` turns the resulting CoM
//! velocity into task-space references for the SL elbows and wrists,
//! using the midpoint mass lumping of the model module so that the
//! SL-CoM velocity is a constant linear map of the tracked-point
//! velocities.

use nalgebra::{SVector, Vector2, Vector3};

use crate::estimator::{layout, StateVector48};
use crate::model::{SlArmModel, SystemComBreakdown};
use crate::{Error, Result};

/// Cost weights and stepping for the CoM planner.
#[derive(Debug, Clone, Copy)]
pub struct PlannerWeights {
    /// CoM-shift weight, 1/m^2.
    pub gamma: f64,
    /// Effort (CoM velocity) weight, s^2/m^2.
    pub zeta: f64,
    /// Planning step, s.
    pub step: f64,
    /// CoM velocity saturation, m/s.
    pub v_max: f64,
}

impl PlannerWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.zeta > 0.0 && self.step > 0.0 && self.v_max > 0.0) {
            return Err(Error::InvalidInput(
                "planner weights gamma, zeta, step and v_max must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for PlannerWeights {
    fn default() -> Self {
        Self { gamma: 1.0, zeta: 0.002, step: 0.01, v_max: 0.25 }
    }
}

/// Planned CoM velocity command.
#[derive(Debug, Clone, Copy)]
pub struct ComCommand {
    /// Optimal CoM velocity, m/s, norm-bounded by `v_max`.
    pub p_star_dot: Vector2<f64>,
    /// Instability cost at the current state under the command.
    pub value: f64,
}

/// Instability cost: CoM-shift term plus effort term.
pub fn instability_cost(
    p: &Vector2<f64>,
    p_dot: &Vector2<f64>,
    p_sup: &Vector2<f64>,
    w: &PlannerWeights,
) -> f64 {
    w.gamma * (p - p_sup).norm_squared() + w.zeta * p_dot.norm_squared()
}

/// Minimize the one-step surrogate
/// `gamma ||p + v*step - p_sup||^2 + zeta ||v||^2` in closed form and
/// saturate the result at `v_max`.
pub fn optimal_com_velocity(
    p_hat: &Vector2<f64>,
    p_sup_hat: &Vector2<f64>,
    w: &PlannerWeights,
) -> Result<ComCommand> {
    w.validate()?;
    let d = p_hat - p_sup_hat;
    let scale = -w.gamma * w.step / (w.gamma * w.step * w.step + w.zeta);
    let mut v = d * scale;
    let n = v.norm();
    if n > w.v_max {
        v *= w.v_max / n;
    }
    Ok(ComCommand { p_star_dot: v, value: instability_cost(p_hat, &v, p_sup_hat, w) })
}

/// Task-space reference for both arms over the MPC horizon.
///
/// Each sample is a 24-vector
/// `[p1e, v1e, p1w, v1w, p2e, v2e, p2w, v2w]` (positions and
/// velocities interleaved per point, xyz each). `times` are offsets
/// from the planning instant.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub samples: Vec<SVector<f64, 24>>,
}

/// Offsets of the tracked blocks inside a reference sample.
pub mod sample_layout {
    /// Position block start for (arm, point) with point 0 = elbow,
    /// 1 = wrist.
    pub const fn pos(arm: usize, point: usize) -> usize {
        arm * 12 + point * 6
    }
    pub const fn vel(arm: usize, point: usize) -> usize {
        arm * 12 + point * 6 + 3
    }
}

impl ReferenceTrajectory {
    /// Consecutive samples must satisfy trapezoidal
    /// position-velocity consistency. The first sample integrates its
    /// own velocity from the planning state, so it is not checked here.
    pub fn max_trapezoid_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 1..self.samples.len() {
            let h = self.times[k] - self.times[k - 1];
            for arm in 0..2 {
                for point in 0..2 {
                    let p0 = sample_layout::pos(arm, point);
                    let v0 = sample_layout::vel(arm, point);
                    for c in 0..3 {
                        let expected = self.samples[k - 1][p0 + c]
                            + 0.5 * h * (self.samples[k - 1][v0 + c] + self.samples[k][v0 + c]);
                        worst = worst.max((self.samples[k][p0 + c] - expected).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Minimum-norm distribution weights of the lumped SL-CoM map: the
/// coefficient each tracked point's horizontal velocity contributes to
/// the SL-CoM velocity. Order: [elbow1, wrist1, elbow2, wrist2].
pub fn lump_coefficients(arms: &[SlArmModel; 2], m_sl: f64) -> [f64; 4] {
    let c = |arm: &SlArmModel| {
        [
            (arm.link_masses[0] + arm.link_masses[1]) / (2.0 * m_sl),
            arm.link_masses[1] / (2.0 * m_sl),
        ]
    };
    let a = c(&arms[0]);
    let b = c(&arms[1]);
    [a[0], a[1], b[0], b[1]]
}

/// Convert a CoM velocity command into elbow/wrist references over the
/// horizon.
///
/// The required SL-CoM velocity compensates the predicted human CoM
/// motion: `v_sl = (m_tot * p_star_dot - m_h * p_h_dot) / m_sl`, and is
/// spread across the eight horizontal task velocities by the
/// minimum-norm pseudo-inverse of the lumped-mass map. Vertical
/// reference velocities are zero; positions integrate the velocities
/// from `current_y` and are clamped to the reachable shell around each
/// predicted shoulder.
pub fn reference_from_com_command(
    cmd: &ComCommand,
    predicted: &[StateVector48],
    com: &SystemComBreakdown,
    current_y: &SVector<f64, 24>,
    horizon: f64,
    arms: &[SlArmModel; 2],
) -> Result<ReferenceTrajectory> {
    let m_sl = com.sl_mass[0] + com.sl_mass[1];
    if m_sl <= 0.0 {
        return Err(Error::DegenerateModel("SL mass is zero; cannot shift the CoM".into()));
    }
    if predicted.is_empty() || !(horizon > 0.0) {
        return Err(Error::InvalidInput("need a positive horizon with predicted states".into()));
    }
    let n = predicted.len();
    let h = horizon / n as f64;

    let coeff = lump_coefficients(arms, m_sl);
    let coeff_sq: f64 = coeff.iter().map(|c| c * c).sum();

    let mut times = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    let mut prev = *current_y;
    let mut first = true;
    for (k, x_pred) in predicted.iter().enumerate() {
        times.push(h * (k + 1) as f64);
        let ph_dot = layout::hcom_vel(x_pred);
        let v_sl = (cmd.p_star_dot * com.total_mass - ph_dot * com.human_mass) / m_sl;

        let mut sample = SVector::<f64, 24>::zeros();
        for arm in 0..2 {
            for point in 0..2 {
                let ci = coeff[arm * 2 + point];
                let v = v_sl * (ci / coeff_sq);
                let p0 = sample_layout::pos(arm, point);
                let v0 = sample_layout::vel(arm, point);
                sample[v0] = v.x;
                sample[v0 + 1] = v.y;
                sample[v0 + 2] = 0.0;
                for c in 0..3 {
                    let vc = if c < 2 { sample[v0 + c] } else { 0.0 };
                    sample[p0 + c] = if first {
                        prev[p0 + c] + h * vc
                    } else {
                        prev[p0 + c] + 0.5 * h * (prev[v0 + c] + vc)
                    };
                }
                // Keep the reference inside the arm's reachable shell.
                let shoulder = layout::arm_point(x_pred, arm, 0);
                let pos = Vector3::new(sample[p0], sample[p0 + 1], sample[p0 + 2]);
                let offset = pos - shoulder;
                let dist = offset.norm();
                let reach = arms[arm].reach();
                if dist > reach {
                    let clamped = shoulder + offset * (reach / dist);
                    sample[p0] = clamped.x;
                    sample[p0 + 1] = clamped.y;
                    sample[p0 + 2] = clamped.z;
                }
            }
        }
        prev = sample;
        first = false;
        samples.push(sample);
    }
    Ok(ReferenceTrajectory { times, samples })
}

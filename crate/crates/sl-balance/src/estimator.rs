//! Linear-quadratic estimation of the 48-dimensional human–SLs state.
//!
//! The process model is block-diagonal constant velocity: each tracked
//! coordinate is a position/velocity pair driven by white acceleration.
//! Measurements are the 24 position entries (marker positions); all
//! velocities are inferred.

use nalgebra::{SMatrix, SVector, Vector2, Vector3};

use crate::{Error, Result};

pub const STATE_DIM: usize = 48;
pub const OBS_DIM: usize = 24;

/// State layout, by index range:
///
/// | range   | contents                              |
/// |---------|---------------------------------------|
/// | 0..2    | system CoM projection p               |
/// | 2..4    | CoM velocity                          |
/// | 4..6    | support center p_sup                  |
/// | 6..8    | support center velocity               |
/// | 8..10   | human CoM projection p_h              |
/// | 10..12  | human CoM velocity                    |
/// | 12..21  | arm 1 shoulder/elbow/wrist positions  |
/// | 21..30  | arm 1 shoulder/elbow/wrist velocities |
/// | 30..39  | arm 2 shoulder/elbow/wrist positions  |
/// | 39..48  | arm 2 shoulder/elbow/wrist velocities |
pub type StateVector48 = SVector<f64, STATE_DIM>;

/// Index of the i-th measured position entry within the state vector.
pub const fn pos_index(i: usize) -> usize {
    match i {
        0 | 1 => i,            // p
        2 | 3 => i + 2,        // p_sup
        4 | 5 => i + 4,        // p_h
        6..=14 => i + 6,       // arm 1 positions
        15..=23 => i + 15,     // arm 2 positions
        _ => panic!("position index out of range"),
    }
}

/// Index of the velocity paired with the i-th measured position entry.
pub const fn vel_index(i: usize) -> usize {
    match i {
        0 | 1 => i + 2,
        2 | 3 => i + 4,
        4 | 5 => i + 6,
        6..=14 => i + 15,
        15..=23 => i + 24,
        _ => panic!("velocity index out of range"),
    }
}

/// Accessors into the documented state layout.
pub mod layout {
    use super::*;

    pub fn com_xy(x: &StateVector48) -> Vector2<f64> {
        Vector2::new(x[0], x[1])
    }
    pub fn com_vel(x: &StateVector48) -> Vector2<f64> {
        Vector2::new(x[2], x[3])
    }
    pub fn sup_xy(x: &StateVector48) -> Vector2<f64> {
        Vector2::new(x[4], x[5])
    }
    pub fn hcom_xy(x: &StateVector48) -> Vector2<f64> {
        Vector2::new(x[8], x[9])
    }
    pub fn hcom_vel(x: &StateVector48) -> Vector2<f64> {
        Vector2::new(x[10], x[11])
    }

    /// Task point of one arm: 0 = shoulder, 1 = elbow, 2 = wrist.
    pub fn arm_point(x: &StateVector48, arm: usize, point: usize) -> Vector3<f64> {
        let base = 12 + arm * 18 + point * 3;
        Vector3::new(x[base], x[base + 1], x[base + 2])
    }

    pub fn arm_point_vel(x: &StateVector48, arm: usize, point: usize) -> Vector3<f64> {
        let base = 21 + arm * 18 + point * 3;
        Vector3::new(x[base], x[base + 1], x[base + 2])
    }

    /// The 24 measured position entries in measurement order.
    pub fn positions(x: &StateVector48) -> SVector<f64, OBS_DIM> {
        SVector::from_fn(|i, _| x[pos_index(i)])
    }

    /// Assemble a state from its position and velocity blocks, in
    /// measurement order.
    pub fn from_positions_velocities(
        pos: &SVector<f64, OBS_DIM>,
        vel: &SVector<f64, OBS_DIM>,
    ) -> StateVector48 {
        let mut x = StateVector48::zeros();
        for i in 0..OBS_DIM {
            x[pos_index(i)] = pos[i];
            x[vel_index(i)] = vel[i];
        }
        x
    }
}

/// A timestamped 24-entry position measurement.
#[derive(Debug, Clone)]
pub struct Observation {
    pub positions: SVector<f64, OBS_DIM>,
    pub timestamp: f64,
}

/// White-acceleration process noise intensity per signal group,
/// (m/s^2)^2 / Hz.
#[derive(Debug, Clone, Copy)]
pub struct ProcessNoise {
    pub com: f64,
    pub sup: f64,
    pub hcom: f64,
    pub sl: f64,
}

impl ProcessNoise {
    fn for_entry(&self, i: usize) -> f64 {
        match i {
            0 | 1 => self.com,
            2 | 3 => self.sup,
            4 | 5 => self.hcom,
            _ => self.sl,
        }
    }
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self { com: 1e-5, sup: 1e-5, hcom: 1e-5, sl: 0.5 }
    }
}

pub type Covariance48 = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type KalmanGain = SMatrix<f64, STATE_DIM, OBS_DIM>;

#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub x_hat: StateVector48,
    pub covariance: Covariance48,
    pub last_gain: Option<KalmanGain>,
    pub process_noise: ProcessNoise,
    /// Measurement noise standard deviation, m.
    pub measurement_sigma: f64,
    pub last_time: f64,
}

impl EstimatorState {
    pub fn new(
        x0: StateVector48,
        position_var: f64,
        velocity_var: f64,
        process_noise: ProcessNoise,
        measurement_sigma: f64,
    ) -> Self {
        let mut p = Covariance48::zeros();
        for i in 0..OBS_DIM {
            p[(pos_index(i), pos_index(i))] = position_var;
            p[(vel_index(i), vel_index(i))] = velocity_var;
        }
        Self {
            x_hat: x0,
            covariance: p,
            last_gain: None,
            process_noise,
            measurement_sigma,
            last_time: 0.0,
        }
    }

    /// Frobenius norm of the most recent Kalman gain.
    pub fn kalman_gain_norm(&self) -> Result<f64> {
        self.last_gain.map(|k| k.norm()).ok_or(Error::NoUpdateYet)
    }
}

fn symmetrize(p: &mut Covariance48) {
    let pt = p.transpose();
    *p = (*p + pt) * 0.5;
}

fn check_psd(p: &Covariance48) -> bool {
    // Shifted Cholesky as a cheap eigenvalue floor check: tolerates
    // eigenvalues down to -1e-9.
    let shifted = p + Covariance48::identity() * 1e-9;
    shifted.cholesky().is_some()
}

/// Propagate the estimate by `dt` seconds under the constant-velocity
/// model.
pub fn lqe_predict(est: &EstimatorState, dt: f64) -> Result<EstimatorState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("predict dt must be positive, got {dt}")));
    }
    let mut out = est.clone();
    for i in 0..OBS_DIM {
        out.x_hat[pos_index(i)] += dt * out.x_hat[vel_index(i)];
    }
    // P <- F P F' + Q, applied structurally: F adds dt * (velocity row)
    // to each paired position row, then the same on columns.
    let p = &mut out.covariance;
    for i in 0..OBS_DIM {
        let (pi, vi) = (pos_index(i), vel_index(i));
        for c in 0..STATE_DIM {
            let add = dt * p[(vi, c)];
            p[(pi, c)] += add;
        }
    }
    for i in 0..OBS_DIM {
        let (pi, vi) = (pos_index(i), vel_index(i));
        for r in 0..STATE_DIM {
            let add = dt * p[(r, vi)];
            p[(r, pi)] += add;
        }
    }
    for i in 0..OBS_DIM {
        let q = out.process_noise.for_entry(i);
        let (pi, vi) = (pos_index(i), vel_index(i));
        p[(pi, pi)] += q * dt.powi(3) / 3.0;
        p[(pi, vi)] += q * dt.powi(2) / 2.0;
        p[(vi, pi)] += q * dt.powi(2) / 2.0;
        p[(vi, vi)] += q * dt;
    }
    out.last_time += dt;
    Ok(out)
}

/// Measurement update with the 24 observed positions.
pub fn lqe_update(est: &EstimatorState, z: &Observation) -> Result<EstimatorState> {
    let mut out = est.clone();
    let p = &est.covariance;
    let r_var = est.measurement_sigma * est.measurement_sigma;

    // S = H P H' + R restricted to the measured rows/columns.
    let mut s = SMatrix::<f64, OBS_DIM, OBS_DIM>::zeros();
    for i in 0..OBS_DIM {
        for j in 0..OBS_DIM {
            s[(i, j)] = p[(pos_index(i), pos_index(j))];
        }
        s[(i, i)] += r_var;
    }
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;

    // K = P H' S^-1.
    let mut pht = KalmanGain::zeros();
    for i in 0..STATE_DIM {
        for j in 0..OBS_DIM {
            pht[(i, j)] = p[(i, pos_index(j))];
        }
    }
    let s_inv = chol.inverse();
    let k = pht * s_inv;

    let innovation = z.positions - layout::positions(&est.x_hat);
    out.x_hat += k * innovation;

    // Joseph form keeps the covariance symmetric PSD.
    let mut i_kh = Covariance48::identity();
    for r in 0..STATE_DIM {
        for j in 0..OBS_DIM {
            i_kh[(r, pos_index(j))] -= k[(r, j)];
        }
    }
    out.covariance = i_kh * p * i_kh.transpose() + k * k.transpose() * r_var;
    symmetrize(&mut out.covariance);
    if !check_psd(&out.covariance) {
        symmetrize(&mut out.covariance);
        if !check_psd(&out.covariance) {
            return Err(Error::Numerical("covariance lost positive semidefiniteness".into()));
        }
    }
    out.last_gain = Some(k);
    out.last_time = z.timestamp;
    Ok(out)
}

/// Open-loop predictions at uniform spacing `horizon / n_steps`. The
/// input estimator is untouched.
pub fn predict_horizon(
    est: &EstimatorState,
    horizon: f64,
    n_steps: usize,
) -> Result<Vec<StateVector48>> {
    if !(horizon > 0.0) || n_steps == 0 {
        return Err(Error::InvalidInput("horizon and n_steps must be positive".into()));
    }
    let dt = horizon / n_steps as f64;
    let mut rolling = est.clone();
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        rolling = lqe_predict(&rolling, dt)?;
        out.push(rolling.x_hat);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn fresh(x0: StateVector48) -> EstimatorState {
        EstimatorState::new(x0, 1e-4, 1e-2, ProcessNoise::default(), 1e-3)
    }

    #[test]
    fn predict_rejects_nonpositive_dt() {
        let est = fresh(StateVector48::zeros());
        assert!(lqe_predict(&est, 0.0).is_err());
        assert!(lqe_predict(&est, -0.1).is_err());
    }

    #[test]
    fn predict_stationary_grows_covariance() {
        let est = fresh(StateVector48::zeros());
        let next = lqe_predict(&est, 0.1).unwrap();
        assert_eq!(next.x_hat, StateVector48::zeros());
        assert!(next.covariance.trace() > est.covariance.trace());
    }

    #[test]
    fn predict_constant_velocity() {
        let mut x = StateVector48::zeros();
        x[2] = 0.1; // CoM x velocity
        let est = fresh(x);
        let next = lqe_predict(&est, 0.5).unwrap();
        assert_relative_eq!(next.x_hat[0], 0.05, epsilon = 1e-15);
        assert_relative_eq!(next.x_hat[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn predict_semigroup() {
        let mut x = StateVector48::zeros();
        let mut rng = StdRng::seed_from_u64(9);
        for v in x.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let est = fresh(x);
        let one = lqe_predict(&est, 0.2).unwrap();
        let two = lqe_predict(&lqe_predict(&est, 0.1).unwrap(), 0.1).unwrap();
        assert!((one.x_hat - two.x_hat).abs().max() <= 1e-14);
        assert!((one.covariance - two.covariance).abs().max() <= 1e-10);
    }

    #[test]
    fn update_uninformative_measurement_leaves_state() {
        let mut x = StateVector48::zeros();
        x[0] = 0.3;
        let mut est = fresh(x);
        est.measurement_sigma = 1e6;
        let z = Observation { positions: SVector::repeat(5.0), timestamp: 0.01 };
        let next = lqe_update(&est, &z).unwrap();
        assert!((next.x_hat - est.x_hat).abs().max() < 1e-6);
        assert!(next.last_gain.unwrap().norm() < 1e-6);
    }

    #[test]
    fn update_perfect_measurement_snaps_positions() {
        let mut est = fresh(StateVector48::zeros());
        est.measurement_sigma = 1e-12;
        let z = Observation {
            positions: SVector::from_fn(|i, _| 0.01 * i as f64),
            timestamp: 0.01,
        };
        let next = lqe_update(&est, &z).unwrap();
        let pos = layout::positions(&next.x_hat);
        assert!((pos - z.positions).abs().max() < 1e-9);
    }

    #[test]
    fn update_matches_scalar_kalman_oracle() {
        // The CoM x pair is decoupled from everything else when the
        // prior is diagonal, so its update must equal the textbook 2x2
        // position-measurement Kalman step.
        let est = fresh(StateVector48::zeros());
        let est = lqe_predict(&est, 0.01).unwrap();
        let p00 = est.covariance[(0, 0)];
        let p01 = est.covariance[(0, 2)];
        let r = est.measurement_sigma * est.measurement_sigma;
        let k_pos = p00 / (p00 + r);
        let k_vel = p01 / (p00 + r);

        let mut z = Observation { positions: SVector::zeros(), timestamp: 0.01 };
        z.positions[0] = 0.02;
        let next = lqe_update(&est, &z).unwrap();
        let gain = next.last_gain.unwrap();
        assert_relative_eq!(gain[(0, 0)], k_pos, epsilon = 1e-12);
        assert_relative_eq!(gain[(2, 0)], k_vel, epsilon = 1e-12);
        assert_relative_eq!(next.x_hat[0], k_pos * 0.02, epsilon = 1e-12);
        assert_relative_eq!(next.x_hat[2], k_vel * 0.02, epsilon = 1e-12);
    }

    #[test]
    fn update_with_predicted_measurement_is_identity_on_state() {
        let mut x = StateVector48::zeros();
        x[0] = 0.2;
        x[4] = -0.1;
        let est = fresh(x);
        let z = Observation { positions: layout::positions(&est.x_hat), timestamp: 0.01 };
        let next = lqe_update(&est, &z).unwrap();
        assert!((next.x_hat - est.x_hat).abs().max() <= 1e-15);
    }

    #[test]
    fn update_never_increases_covariance_trace() {
        let mut est = fresh(StateVector48::zeros());
        let mut rng = StdRng::seed_from_u64(10);
        for step in 0..50 {
            est = lqe_predict(&est, 0.01).unwrap();
            let trace_before = est.covariance.trace();
            let z = Observation {
                positions: SVector::from_fn(|_, _| rng.gen_range(-0.1..0.1)),
                timestamp: 0.01 * step as f64,
            };
            est = lqe_update(&est, &z).unwrap();
            assert!(est.covariance.trace() <= trace_before + 1e-12);
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut est = fresh(StateVector48::zeros());
        let mut rng = StdRng::seed_from_u64(11);
        for step in 0..200 {
            est = lqe_predict(&est, 0.005).unwrap();
            if step % 3 == 0 {
                let z = Observation {
                    positions: SVector::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
                    timestamp: 0.005 * step as f64,
                };
                est = lqe_update(&est, &z).unwrap();
            }
            let asym = (est.covariance - est.covariance.transpose()).abs().max();
            assert!(asym <= 1e-12);
            let eig = est.covariance.symmetric_eigenvalues();
            assert!(eig.min() >= -1e-9, "min eigenvalue {}", eig.min());
        }
    }

    #[test]
    fn gain_norm_requires_update() {
        let est = fresh(StateVector48::zeros());
        assert!(matches!(est.kalman_gain_norm(), Err(Error::NoUpdateYet)));
    }

    #[test]
    fn gain_norm_matches_direct_summation() {
        let mut est = fresh(StateVector48::zeros());
        est.last_gain = Some(KalmanGain::zeros());
        assert_eq!(est.kalman_gain_norm().unwrap(), 0.0);

        let mut k = KalmanGain::zeros();
        k[(5, 7)] = 3.0;
        est.last_gain = Some(k);
        assert_relative_eq!(est.kalman_gain_norm().unwrap(), 3.0);

        let mut rng = StdRng::seed_from_u64(12);
        let k = KalmanGain::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        est.last_gain = Some(k);
        let direct: f64 = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_relative_eq!(est.kalman_gain_norm().unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn predict_horizon_single_step_matches_predict() {
        let mut x = StateVector48::zeros();
        x[2] = 0.4;
        let est = fresh(x);
        let seq = predict_horizon(&est, 0.3, 1).unwrap();
        let direct = lqe_predict(&est, 0.3).unwrap();
        assert_eq!(seq.len(), 1);
        assert!((seq[0] - direct.x_hat).abs().max() <= 1e-15);
        assert!(predict_horizon(&est, -1.0, 3).is_err());
        assert!(predict_horizon(&est, 1.0, 0).is_err());
    }

    #[test]
    fn predict_horizon_exact_on_constant_velocity_truth() {
        let mut x = StateVector48::zeros();
        x[0] = 0.1;
        x[2] = -0.2;
        let est = fresh(x);
        let seq = predict_horizon(&est, 0.5, 5).unwrap();
        for (k, xh) in seq.iter().enumerate() {
            let t = 0.1 * (k + 1) as f64;
            assert_relative_eq!(xh[0], 0.1 - 0.2 * t, epsilon = 1e-14);
        }
    }

    #[test]
    fn prediction_error_grows_with_horizon_on_sinusoid() {
        // Track a sinusoidal CoM with updates at 100 Hz, then compare
        // open-loop prediction error at two horizons.
        let freq = 1.0;
        let amp = 0.05;
        let truth_pos = |t: f64| amp * (2.0 * std::f64::consts::PI * freq * t).sin();
        let mut est = fresh(StateVector48::zeros());
        let dt = 0.01;
        for step in 1..=200 {
            let t = dt * step as f64;
            est = lqe_predict(&est, dt).unwrap();
            let mut z = Observation { positions: SVector::zeros(), timestamp: t };
            z.positions[0] = truth_pos(t);
            est = lqe_update(&est, &z).unwrap();
        }
        let t_now = 2.0;
        let err_at = |h: f64| {
            let preds = predict_horizon(&est, h, 10).unwrap();
            let rmse: f64 = preds
                .iter()
                .enumerate()
                .map(|(k, x)| {
                    let t = t_now + h * (k + 1) as f64 / 10.0;
                    (x[0] - truth_pos(t)).powi(2)
                })
                .sum::<f64>()
                / 10.0;
            rmse.sqrt()
        };
        assert!(err_at(0.5) > err_at(0.1));
    }

    #[test]
    fn tracks_constant_velocity_stream() {
        // 1 mm observation noise at 100 Hz; the steady-state position
        // error must fall well below the raw noise and the velocity
        // estimate must converge.
        let sigma = 1e-3;
        let vx = 0.1;
        let mut est = EstimatorState::new(
            StateVector48::zeros(),
            1e-2,
            1e-1,
            ProcessNoise::default(),
            sigma,
        );
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = StdRng::seed_from_u64(13);
        let dt = 0.01;
        let mut sq_err = 0.0;
        let mut count = 0usize;
        for step in 1..=400 {
            let t = dt * step as f64;
            est = lqe_predict(&est, dt).unwrap();
            let mut z = Observation { positions: SVector::zeros(), timestamp: t };
            z.positions[0] = vx * t + normal.sample(&mut rng);
            est = lqe_update(&est, &z).unwrap();
            if t >= 2.0 {
                sq_err += (est.x_hat[0] - vx * t).powi(2);
                count += 1;
                assert!(
                    (est.x_hat[2] - vx).abs() <= 0.05 * vx,
                    "velocity error {} at t={}",
                    (est.x_hat[2] - vx).abs(),
                    t
                );
            }
        }
        let rmse = (sq_err / count as f64).sqrt();
        assert!(rmse < sigma / 2.0, "steady-state RMSE {rmse}");
    }
}

//! Receding-horizon tracking: command both arms' elbow and wrist
//! points to displaced targets and let the MPC drive the joint-space
//! double integrator there under position/velocity/acceleration
//! limits. Shows the adaptive weights reacting to the (synthetic)
//! Kalman gain norm and the warm start cutting iteration counts.

use nalgebra::{Isometry3, SMatrix};
use sl_balance::estimator::{EstimatorState, ProcessNoise, StateVector48};
use sl_balance::model::SlArmModel;
use sl_balance::mpc::{linearize_task, MpcConfig, MpcController, SlJointState};
use sl_balance::planner::ReferenceTrajectory;

/// Estimator stub carrying a chosen Kalman-gain norm (on hardware this
/// comes from the live filter).
fn estimator_with_gain(norm: f64) -> EstimatorState {
    let mut est =
        EstimatorState::new(StateVector48::zeros(), 1e-4, 1e-2, ProcessNoise::default(), 1e-3);
    let mut k = SMatrix::<f64, 48, 24>::zeros();
    k[(0, 0)] = norm;
    est.last_gain = Some(k);
    est
}

fn main() {
    let arms = [
        SlArmModel::default_with_lateral_offset(0.22),
        SlArmModel::default_with_lateral_offset(-0.22),
    ];
    let cfg = MpcConfig::default_for_arms(&arms);
    let trunk = Isometry3::identity();
    let mut ctrl = MpcController::new(cfg.clone(), arms.clone()).unwrap();

    // Start folded; the target is the task-space image of a different
    // (reachable) joint configuration, so zero tracking error exists.
    let mut s = SlJointState::from_parts(
        &[0.0, 0.3, 0.0, 1.2],
        &[0.0; 4],
        &[0.0, 0.3, 0.0, 1.2],
        &[0.0; 4],
    );
    let s_target = SlJointState::from_parts(
        &[0.2, 0.6, 0.0, 0.9],
        &[0.0; 4],
        &[-0.2, 0.6, 0.0, 0.9],
        &[0.0; 4],
    );
    let target = linearize_task(&s_target, &arms, &trunk).y0;

    let est = estimator_with_gain(100.0);
    let dt = 0.01;
    println!("tracking a task-space step with the default controller:\n");
    for k in 0..=200 {
        let r = ReferenceTrajectory {
            times: (1..=cfg.n_steps).map(|i| cfg.dt_mpc() * i as f64).collect(),
            samples: vec![target; cfg.n_steps],
        };
        let cmd = ctrl.step(&est, &s, &trunk, &r).unwrap();

        // Integrate the joint-space double integrator.
        let mut sv = s.s;
        for arm in 0..2 {
            for j in 0..4 {
                let (qi, vi, ui) = (8 * arm + j, 8 * arm + 4 + j, 4 * arm + j);
                sv[qi] += sv[vi] * dt + 0.5 * cmd.u[ui] * dt * dt;
                sv[vi] += cmd.u[ui] * dt;
            }
        }
        s = SlJointState { s: sv };

        if k % 40 == 0 {
            let err = (linearize_task(&s, &arms, &trunk).y0 - target)
                .fixed_rows::<3>(0)
                .norm();
            println!(
                "t = {:>4.1} s: elbow error {:>7.4} m, {} iterations, q_scale {:.2}, r_scale {:.2}, {:?}",
                k as f64 * dt,
                err,
                cmd.iterations,
                cmd.q_scale,
                cmd.r_scale,
                cmd.status
            );
        }
    }

    // The adaptation: a noisier estimate (larger gain norm) softens
    // tracking and stiffens the input penalty.
    println!("\nadaptive weights vs Kalman-gain norm (K0 = {}):", cfg.k0);
    for norm in [0.0, 250.0, 500.0, 1000.0] {
        let est = estimator_with_gain(norm);
        let mut ctrl = MpcController::new(cfg.clone(), arms.clone()).unwrap();
        let r = ReferenceTrajectory {
            times: (1..=cfg.n_steps).map(|i| cfg.dt_mpc() * i as f64).collect(),
            samples: vec![target; cfg.n_steps],
        };
        let cmd = ctrl.step(&est, &s, &trunk, &r).unwrap();
        println!(
            "  K_F = {norm:>6}: q_scale {:.3}, r_scale {:.3}, |u| = {:.3}",
            cmd.q_scale,
            cmd.r_scale,
            cmd.u.norm()
        );
    }
}

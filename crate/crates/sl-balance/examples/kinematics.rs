//! Forward kinematics and Jacobian of one 4-DOF supernumerary arm:
//! evaluate the chain at a few poses, verify link-length conservation,
//! and cross-check the analytic Jacobian against finite differences.

use nalgebra::{Isometry3, SMatrix};
use sl_balance::model::{sl_forward_kinematics, sl_task_jacobian, SlArmModel};

fn main() {
    let arm = SlArmModel::default_with_lateral_offset(0.22);
    let trunk = Isometry3::identity();

    println!("link lengths: upper {} m, forearm {} m", arm.link_lengths[0], arm.link_lengths[1]);
    println!("reach: {:.3} m\n", arm.reach());

    for q in [[0.0, 0.0, 0.0, 0.0], [0.3, -0.4, 0.2, 1.1], [-0.8, 0.9, -0.3, 0.5]] {
        let pts = sl_forward_kinematics(&q, &arm, &trunk);
        let l1 = (pts.elbow - pts.shoulder).norm();
        let l2 = (pts.wrist - pts.elbow).norm();
        println!("q = {q:?}");
        println!("  shoulder {:.3?}", pts.shoulder.as_slice());
        println!("  elbow    {:.3?}", pts.elbow.as_slice());
        println!("  wrist    {:.3?}", pts.wrist.as_slice());
        println!(
            "  link-length drift: {:.1e}, {:.1e} (should be ~1e-16)",
            (l1 - arm.link_lengths[0]).abs(),
            (l2 - arm.link_lengths[1]).abs()
        );

        // Central finite-difference Jacobian as an independent check.
        let j = sl_task_jacobian(&q, &arm, &trunk);
        let eps = 1e-6;
        let mut j_fd = SMatrix::<f64, 6, 4>::zeros();
        for col in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[col] += eps;
            qm[col] -= eps;
            let fp = sl_forward_kinematics(&qp, &arm, &trunk);
            let fm = sl_forward_kinematics(&qm, &arm, &trunk);
            for r in 0..3 {
                j_fd[(r, col)] = (fp.elbow[r] - fm.elbow[r]) / (2.0 * eps);
                j_fd[(3 + r, col)] = (fp.wrist[r] - fm.wrist[r]) / (2.0 * eps);
            }
        }
        println!("  max |J - J_fd|: {:.1e}\n", (j - j_fd).abs().max());
    }
}

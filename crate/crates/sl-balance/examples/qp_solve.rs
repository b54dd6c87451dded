//! The in-crate ADMM QP solver on a small box-constrained problem:
//! solve it cold, cross-check against the dense active-set reference
//! solver, then demonstrate what a warm start buys on a perturbed
//! problem.

use nalgebra::{DMatrix, DVector};
use sl_balance::qp::{reference, QpProblem, QpSolver, SolverSettings, WarmStart};

fn main() {
    // minimize 1/2 z'Hz + g'z  s.t.  l <= Az <= u
    // A small strictly convex problem whose unconstrained optimum
    // violates the box, so constraints go active.
    let h = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.2, 0.0, 0.2, 2.0]);
    let g = DVector::from_vec(vec![-8.0, -6.0, -2.0]);
    let a = DMatrix::identity(3, 3);
    let l = DVector::from_vec(vec![-1.0, -1.0, -1.0]);
    let u = DVector::from_vec(vec![1.0, 1.0, 1.0]);
    let p = QpProblem { h, g, a, l, u };

    let mut solver = QpSolver::new(SolverSettings::default());
    let cold = solver.solve(&p, None).unwrap();
    println!("cold solve: status {:?}, {} iterations", cold.status, cold.iterations);
    println!("  z = {:.6?}", cold.z.as_slice());
    println!("  residuals: primal {:.1e}, dual {:.1e}", cold.primal_residual, cold.dual_residual);

    // Independent oracle: dense primal active-set method.
    let z0 = DVector::zeros(3);
    let z_ref = reference::solve_reference(&p, &z0, 1000).unwrap();
    println!("  max |z - z_activeset| = {:.1e}\n", (&cold.z - &z_ref).abs().max());

    // Perturb the gradient slightly (the receding-horizon situation)
    // and re-solve warm vs cold.
    let mut p2 = p.clone();
    p2.g[0] += 0.05;
    p2.g[2] -= 0.05;
    let warm = WarmStart { z_init: cold.z.clone(), dual_init: cold.dual.clone() };
    let warm_sol = solver.solve(&p2, Some(&warm)).unwrap();
    let cold_sol = solver.solve(&p2, None).unwrap();
    println!("perturbed problem:");
    println!("  warm start: {} iterations", warm_sol.iterations);
    println!("  cold start: {} iterations", cold_sol.iterations);
    println!("  solutions agree to {:.1e}", (&warm_sol.z - &cold_sol.z).abs().max());
}

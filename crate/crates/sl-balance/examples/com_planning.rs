//! CoM-shift planning: the closed-form velocity law that pulls the
//! system CoM towards the support center, and how its magnitude trades
//! off against the damping weight. Also shows the instability cost
//! decreasing along the commanded flow.

use nalgebra::Vector2;
use sl_balance::planner::{instability_cost, optimal_com_velocity, PlannerWeights};

fn main() {
    let w = PlannerWeights::default();
    let p_sup = Vector2::zeros();

    println!("default weights: gamma {}, zeta {}, step {} s, v_max {} m/s\n", w.gamma, w.zeta, w.step, w.v_max);

    println!("commanded CoM speed vs offset (default weights):");
    for d in [0.001, 0.01, 0.05, 0.1, 0.3] {
        let p = Vector2::new(d, 0.0);
        let cmd = optimal_com_velocity(&p, &p_sup, &w).unwrap();
        println!("  offset {d:>5} m -> speed {:.4} m/s, cost {:.2e}", cmd.p_star_dot.norm(), cmd.value);
    }

    println!("\neffect of the damping weight zeta at a 5 cm offset:");
    let p = Vector2::new(0.05, 0.0);
    for zeta in [0.0005, 0.002, 0.01, 0.05] {
        let wz = PlannerWeights { zeta, ..w };
        let cmd = optimal_com_velocity(&p, &p_sup, &wz).unwrap();
        println!("  zeta {zeta:>6} -> speed {:.4} m/s", cmd.p_star_dot.norm());
    }

    // Integrate the flow: the cost is a Lyapunov function for the
    // kinematic CoM, so it must decrease monotonically.
    println!("\nintegrating p' = v*(p) from a 10 cm offset:");
    let mut p = Vector2::new(0.07, -0.07);
    let dt = 0.05;
    let mut prev_cost = f64::INFINITY;
    for k in 0..=40 {
        let cmd = optimal_com_velocity(&p, &p_sup, &w).unwrap();
        let cost = instability_cost(&p, &cmd.p_star_dot, &p_sup, &w);
        if k % 8 == 0 {
            println!("  t = {:>4.1} s: |p - p_sup| = {:.4} m, cost {:.3e}", k as f64 * dt, p.norm(), cost);
        }
        assert!(cost <= prev_cost + 1e-12, "cost must not increase");
        prev_cost = cost;
        p += cmd.p_star_dot * dt;
    }
}

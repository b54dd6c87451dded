//! Dense primal active-set reference solver.
//!
//! Solves the same problem class as the ADMM path through a textbook
//! working-set method (equality-constrained KKT solves plus blocking
//! constraint steps). Exact on strictly convex problems, and entirely
//! independent of the operator-splitting iteration, which makes it the
//! validation oracle for the main solver. Requires a feasible starting
//! point.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

use super::QpProblem;

struct OneSided {
    rows: DMatrix<f64>,
    rhs: DVector<f64>,
}

/// Rewrite `l <= Az <= u` as `Gz <= h`, dropping infinite bounds.
fn one_sided(p: &QpProblem) -> OneSided {
    let n = p.n();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..p.m() {
        if p.u[i].is_finite() {
            rows.push(p.a.row(i).transpose().into_owned());
            rhs.push(p.u[i]);
        }
        if p.l[i].is_finite() {
            rows.push(-p.a.row(i).transpose().into_owned());
            rhs.push(-p.l[i]);
        }
    }
    let m = rows.len();
    let mut g = DMatrix::zeros(m, n);
    for (r, row) in rows.iter().enumerate() {
        g.row_mut(r).copy_from(&row.transpose());
    }
    OneSided { rows: g, rhs: DVector::from_vec(rhs) }
}

/// Solve the QP starting from the feasible point `z0`.
pub fn solve_reference(p: &QpProblem, z0: &DVector<f64>, max_iters: usize) -> Result<DVector<f64>> {
    p.validate()?;
    let n = p.n();
    if z0.len() != n {
        return Err(Error::InvalidInput("start point dimension mismatch".into()));
    }
    let cons = one_sided(p);
    let m = cons.rhs.len();

    let slack = &cons.rhs - &cons.rows * z0;
    if slack.iter().any(|&s| s < -1e-9) {
        return Err(Error::InvalidInput("reference solver needs a feasible starting point".into()));
    }

    let mut z = z0.clone();
    // Start from the working set of constraints tight at z0.
    let mut working: Vec<usize> =
        (0..m).filter(|&i| (cons.rhs[i] - cons.rows.row(i).transpose().dot(&z)).abs() <= 1e-10).collect();

    for _ in 0..max_iters {
        // Equality-constrained step on the working set.
        let k = working.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        for (r, &i) in working.iter().enumerate() {
            for c in 0..n {
                kkt[(n + r, c)] = cons.rows[(i, c)];
                kkt[(c, n + r)] = cons.rows[(i, c)];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        let grad = &p.h * &z + &p.g;
        for i in 0..n {
            rhs[i] = -grad[i];
        }
        let svd = kkt.svd(true, true);
        let sol = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Numerical(format!("KKT solve failed: {e}")))?;
        let d = DVector::from_fn(n, |i, _| sol[i]);
        let lambda = DVector::from_fn(k, |i, _| sol[n + i]);

        if d.abs().max() <= 1e-11 {
            // Stationary on the working set; check multipliers.
            let (mut worst, mut worst_idx) = (f64::INFINITY, None);
            for (r, _) in working.iter().enumerate() {
                if lambda[r] < worst {
                    worst = lambda[r];
                    worst_idx = Some(r);
                }
            }
            match worst_idx {
                Some(r) if worst < -1e-9 => {
                    working.remove(r);
                }
                _ => return Ok(z),
            }
        } else {
            // Step to the nearest blocking constraint.
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if working.contains(&i) {
                    continue;
                }
                let gd = cons.rows.row(i).transpose().dot(&d);
                if gd > 1e-12 {
                    let gap = cons.rhs[i] - cons.rows.row(i).transpose().dot(&z);
                    let ai = (gap / gd).max(0.0);
                    if ai < alpha - 1e-12 {
                        alpha = ai;
                        blocking = Some(i);
                    }
                }
            }
            z += &d * alpha;
            if let Some(i) = blocking {
                working.push(i);
                working.sort_unstable();
            }
        }
    }
    Err(Error::Numerical("reference active-set solver did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn clamps_like_box_projection() {
        let p = QpProblem {
            h: DMatrix::identity(2, 2),
            g: DVector::from_vec(vec![-2.0, 0.3]),
            a: DMatrix::identity(2, 2),
            l: DVector::repeat(2, -1.0),
            u: DVector::repeat(2, 1.0),
        };
        let z = solve_reference(&p, &DVector::zeros(2), 50).unwrap();
        assert_relative_eq!(z[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(z[1], -0.3, epsilon = 1e-9);
    }

    #[test]
    fn unconstrained_matches_linear_solve() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DVector::from_vec(vec![1.0, -2.0]);
        let p = QpProblem {
            h: h.clone(),
            g: g.clone(),
            a: DMatrix::identity(2, 2),
            l: DVector::repeat(2, f64::NEG_INFINITY),
            u: DVector::repeat(2, f64::INFINITY),
        };
        let z = solve_reference(&p, &DVector::zeros(2), 50).unwrap();
        let direct = h.lu().solve(&(-&g)).unwrap();
        assert!((z - direct).abs().max() <= 1e-10);
    }

    #[test]
    fn rejects_infeasible_start() {
        let p = QpProblem {
            h: DMatrix::identity(1, 1),
            g: DVector::zeros(1),
            a: DMatrix::identity(1, 1),
            l: DVector::from_vec(vec![1.0]),
            u: DVector::from_vec(vec![2.0]),
        };
        assert!(solve_reference(&p, &DVector::zeros(1), 50).is_err());
    }
}

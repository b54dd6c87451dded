//! Receding-horizon joint-acceleration controller.
//!
//! Tracks elbow/wrist task-space references under double-integrator
//! joint dynamics. The horizon cost is condensed into a dense QP over
//! the input sequence (states eliminated by forward substitution),
//! with box constraints on accelerations and on the propagated joint
//! positions/velocities. Tracking and effort weights are adapted from
//! the current estimator gain: when the state estimate is uncertain
//! the controller backs off.

use nalgebra::{DMatrix, DVector, Isometry3, SMatrix, SVector};

use crate::estimator::EstimatorState;
use crate::model::{sl_forward_kinematics, sl_task_jacobian, SlArmModel};
use crate::planner::{sample_layout, ReferenceTrajectory};
use crate::qp::{QpProblem, QpSolver, QpStatus, ScalingRecord, SolverSettings, WarmStart};
use crate::{Error, Result};

pub const JOINT_DIM: usize = 16;
pub const INPUT_DIM: usize = 8;
pub const TASK_DIM: usize = 24;

/// Joint-space state of both arms: `[q1, q̇1, q2, q̇2]`, four joints
/// per arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlJointState {
    pub s: SVector<f64, JOINT_DIM>,
}

impl SlJointState {
    pub fn from_parts(q1: &[f64; 4], qd1: &[f64; 4], q2: &[f64; 4], qd2: &[f64; 4]) -> Self {
        let mut s = SVector::<f64, JOINT_DIM>::zeros();
        for i in 0..4 {
            s[i] = q1[i];
            s[4 + i] = qd1[i];
            s[8 + i] = q2[i];
            s[12 + i] = qd2[i];
        }
        Self { s }
    }

    pub fn q(&self, arm: usize) -> [f64; 4] {
        let o = arm * 8;
        [self.s[o], self.s[o + 1], self.s[o + 2], self.s[o + 3]]
    }

    pub fn qd(&self, arm: usize) -> [f64; 4] {
        let o = arm * 8 + 4;
        [self.s[o], self.s[o + 1], self.s[o + 2], self.s[o + 3]]
    }

    pub fn is_finite(&self) -> bool {
        self.s.iter().all(|v| v.is_finite())
    }
}

/// Controller configuration. Weight matrices are the *nominal* values;
/// they are rescaled every step from the estimator gain.
#[derive(Debug, Clone)]
pub struct MpcConfig {
    /// Horizon length, s.
    pub horizon: f64,
    /// Steps across the horizon.
    pub n_steps: usize,
    /// Nominal task-tracking weight (positions and velocities of both
    /// elbows and wrists).
    pub q0: SMatrix<f64, TASK_DIM, TASK_DIM>,
    /// Nominal input (acceleration) weight.
    pub r0: SMatrix<f64, INPUT_DIM, INPUT_DIM>,
    /// Input-rate (jerk) weight, applied to finite differences of u.
    pub w: SMatrix<f64, INPUT_DIM, INPUT_DIM>,
    /// Gain-norm scale for the weight adaptation.
    pub k0: f64,
    /// Floor for the tracking-weight scale factor.
    pub epsilon_q: f64,
    /// Joint position bounds, both arms stacked.
    pub q_lower: SVector<f64, INPUT_DIM>,
    pub q_upper: SVector<f64, INPUT_DIM>,
    /// Symmetric joint velocity bound per joint.
    pub qd_limit: SVector<f64, INPUT_DIM>,
    /// Symmetric joint acceleration bound per joint.
    pub u_limit: SVector<f64, INPUT_DIM>,
}

impl MpcConfig {
    /// Nominal weights and limits read off the arm models.
    pub fn default_for_arms(arms: &[SlArmModel; 2]) -> Self {
        let mut q0 = SMatrix::<f64, TASK_DIM, TASK_DIM>::zeros();
        for arm in 0..2 {
            for point in 0..2 {
                let p = sample_layout::pos(arm, point);
                let v = sample_layout::vel(arm, point);
                for c in 0..3 {
                    q0[(p + c, p + c)] = 100.0;
                    q0[(v + c, v + c)] = 20.0;
                }
            }
        }
        let mut q_lower = SVector::<f64, INPUT_DIM>::zeros();
        let mut q_upper = SVector::<f64, INPUT_DIM>::zeros();
        let mut qd_limit = SVector::<f64, INPUT_DIM>::zeros();
        let mut u_limit = SVector::<f64, INPUT_DIM>::zeros();
        for (a, arm) in arms.iter().enumerate() {
            for j in 0..4 {
                q_lower[4 * a + j] = arm.joint_limits[j].0;
                q_upper[4 * a + j] = arm.joint_limits[j].1;
                qd_limit[4 * a + j] = arm.velocity_limits[j];
                u_limit[4 * a + j] = arm.acceleration_limits[j];
            }
        }
        Self {
            horizon: 1.0,
            n_steps: 10,
            q0,
            r0: SMatrix::identity() * 0.1,
            w: SMatrix::identity() * 0.001,
            // Gain-norm scale matched to this crate's estimator: the
            // steady-state 48x24 Kalman gain has a Frobenius norm of
            // order 1e2 at millimetre marker noise, so the adaptation
            // midpoint sits there rather than at the handful-sized
            // norms of smaller filters.
            k0: 500.0,
            epsilon_q: 0.05,
            q_lower,
            q_upper,
            qd_limit,
            u_limit,
        }
    }

    pub fn dt_mpc(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        if self.n_steps < 2 {
            return Err(Error::InvalidInput("need at least 2 horizon steps".into()));
        }
        if !(self.k0 > 0.0) {
            return Err(Error::InvalidInput("k0 must be positive".into()));
        }
        if !(self.epsilon_q > 0.0 && self.epsilon_q <= 1.0) {
            return Err(Error::InvalidInput("epsilon_q must be in (0, 1]".into()));
        }
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).abs().max() <= 1e-9;
        let q0 = DMatrix::from_fn(TASK_DIM, TASK_DIM, |i, j| self.q0[(i, j)]);
        let r0 = DMatrix::from_fn(INPUT_DIM, INPUT_DIM, |i, j| self.r0[(i, j)]);
        let w = DMatrix::from_fn(INPUT_DIM, INPUT_DIM, |i, j| self.w[(i, j)]);
        if !sym(&q0) || !sym(&r0) || !sym(&w) {
            return Err(Error::InvalidInput("weight matrices must be symmetric".into()));
        }
        let psd = |m: &DMatrix<f64>| {
            (m + DMatrix::identity(m.nrows(), m.ncols()) * 1e-12).cholesky().is_some()
        };
        if !psd(&q0) || !psd(&w) {
            return Err(Error::InvalidInput("Q0 and W must be positive semidefinite".into()));
        }
        if r0.cholesky().is_none() {
            return Err(Error::InvalidInput("R0 must be positive definite".into()));
        }
        for j in 0..INPUT_DIM {
            let ok = self.q_lower[j].is_finite()
                && self.q_upper[j].is_finite()
                && self.q_lower[j] < self.q_upper[j]
                && self.qd_limit[j] > 0.0
                && self.qd_limit[j].is_finite()
                && self.u_limit[j] > 0.0
                && self.u_limit[j].is_finite();
            if !ok {
                return Err(Error::InvalidInput(format!("bad bounds for joint {j}")));
            }
        }
        Ok(())
    }
}

/// Outcome class of one controller step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandStatus {
    /// QP solved to tolerance.
    Ok,
    /// Iteration cap hit; best iterate returned, clamped to bounds.
    Degraded,
    /// Primal infeasibility detected; zero acceleration commanded.
    SafeStop,
}

/// One tick of controller output plus the values worth logging.
#[derive(Debug, Clone)]
pub struct ControlCommand {
    /// Joint accelerations, rad/s²; always within the acceleration
    /// bounds.
    pub u: SVector<f64, INPUT_DIM>,
    pub status: CommandStatus,
    /// QP wall time, s.
    pub solve_time: f64,
    /// QP iterations spent.
    pub iterations: usize,
    /// Kalman-gain norm the weights were adapted with.
    pub k_f: f64,
    /// Applied scale on the tracking weight.
    pub q_scale: f64,
    /// Applied scale on the effort weight.
    pub r_scale: f64,
}

/// Scale factors for the tracking/effort weights given the gain norm.
pub fn weight_factors(k_f: f64, k0: f64, epsilon_q: f64) -> (f64, f64) {
    let ratio = k_f / k0;
    ((1.0 - ratio).clamp(epsilon_q, 1.0), 1.0 + ratio)
}

/// Rescale the nominal weights by the current gain norm: high gain
/// (uncertain estimate) softens tracking and penalizes effort.
pub fn adapt_weights(
    q0: &SMatrix<f64, TASK_DIM, TASK_DIM>,
    r0: &SMatrix<f64, INPUT_DIM, INPUT_DIM>,
    k_f: f64,
    k0: f64,
    epsilon_q: f64,
) -> (SMatrix<f64, TASK_DIM, TASK_DIM>, SMatrix<f64, INPUT_DIM, INPUT_DIM>) {
    assert!(k_f >= 0.0 && k0 > 0.0, "gain norm must be nonnegative, k0 positive");
    let (qs, rs) = weight_factors(k_f, k0, epsilon_q);
    (q0 * qs, r0 * rs)
}

/// Exact zero-order-hold discretization of the double-integrator joint
/// dynamics over one MPC step.
pub fn discretize_dynamics(
    dt_mpc: f64,
) -> (SMatrix<f64, JOINT_DIM, JOINT_DIM>, SMatrix<f64, JOINT_DIM, INPUT_DIM>) {
    assert!(dt_mpc > 0.0, "dt_mpc must be positive");
    let mut a = SMatrix::<f64, JOINT_DIM, JOINT_DIM>::identity();
    let mut b = SMatrix::<f64, JOINT_DIM, INPUT_DIM>::zeros();
    for arm in 0..2 {
        for j in 0..4 {
            let q = 8 * arm + j;
            let qd = q + 4;
            let u = 4 * arm + j;
            a[(q, qd)] = dt_mpc;
            b[(q, u)] = 0.5 * dt_mpc * dt_mpc;
            b[(qd, u)] = dt_mpc;
        }
    }
    (a, b)
}

/// Affine task map `y ≈ c + M s` valid near the linearization point:
/// position rows through the Jacobian at `s0`, velocity rows exactly
/// `J q̇` at fixed configuration.
#[derive(Debug, Clone)]
pub struct TaskLinearization {
    /// Task vector at the linearization point.
    pub y0: SVector<f64, TASK_DIM>,
    pub m: SMatrix<f64, TASK_DIM, JOINT_DIM>,
    pub c: SVector<f64, TASK_DIM>,
}

/// Linearize the elbow/wrist task map at `s`.
pub fn linearize_task(
    s: &SlJointState,
    arms: &[SlArmModel; 2],
    trunk_pose: &Isometry3<f64>,
) -> TaskLinearization {
    let mut m = SMatrix::<f64, TASK_DIM, JOINT_DIM>::zeros();
    let mut y0 = SVector::<f64, TASK_DIM>::zeros();
    for arm in 0..2 {
        let q = s.q(arm);
        let qd = s.qd(arm);
        let pts = sl_forward_kinematics(&q, &arms[arm], trunk_pose);
        let jac = sl_task_jacobian(&q, &arms[arm], trunk_pose);
        let qcol = 8 * arm;
        let qdcol = qcol + 4;
        for point in 0..2 {
            let p0 = sample_layout::pos(arm, point);
            let v0 = sample_layout::vel(arm, point);
            let world = if point == 0 { pts.elbow } else { pts.wrist };
            for c in 0..3 {
                y0[p0 + c] = world[c];
                let jrow = 3 * point + c;
                let mut vel = 0.0;
                for j in 0..4 {
                    m[(p0 + c, qcol + j)] = jac[(jrow, j)];
                    m[(v0 + c, qdcol + j)] = jac[(jrow, j)];
                    vel += jac[(jrow, j)] * qd[j];
                }
                y0[v0 + c] = vel;
            }
        }
    }
    let c = y0 - m * s.s;
    TaskLinearization { y0, m, c }
}

/// Horizon matrices that depend only on the configuration, shared
/// across ticks.
#[derive(Debug, Clone)]
struct Condensed {
    a_d: SMatrix<f64, JOINT_DIM, JOINT_DIM>,
    /// `A_d^i B_d` for i = 0..n_steps-1.
    ab: Vec<SMatrix<f64, JOINT_DIM, INPUT_DIM>>,
    /// Stacked constraint matrix `[I; gamma]`, where gamma is the
    /// block-lower-triangular input-to-state map, (16·N)×(8·N).
    constraint_a: DMatrix<f64>,
    /// Block-diagonal nominal effort weight, (8·N)².
    k_r: DMatrix<f64>,
    /// Jerk quadratic `Dᵀ (W/dt²) D`, (8·N)².
    k_w: DMatrix<f64>,
}

fn condense(cfg: &MpcConfig) -> Condensed {
    let n = cfg.n_steps;
    let dt = cfg.dt_mpc();
    let (a_d, b_d) = discretize_dynamics(dt);

    let mut ab = Vec::with_capacity(n);
    ab.push(b_d);
    for i in 1..n {
        let next = a_d * ab[i - 1];
        ab.push(next);
    }

    let mut gamma = DMatrix::zeros(JOINT_DIM * n, INPUT_DIM * n);
    for k in 1..=n {
        for j in 0..k {
            let blk = &ab[k - 1 - j];
            for r in 0..JOINT_DIM {
                for c in 0..INPUT_DIM {
                    gamma[(JOINT_DIM * (k - 1) + r, INPUT_DIM * j + c)] = blk[(r, c)];
                }
            }
        }
    }

    let nu = INPUT_DIM * n;
    let mut constraint_a = DMatrix::zeros(nu + JOINT_DIM * n, nu);
    constraint_a.view_mut((0, 0), (nu, nu)).fill_with_identity();
    constraint_a.view_mut((nu, 0), (JOINT_DIM * n, nu)).copy_from(&gamma);

    let mut k_r = DMatrix::zeros(nu, nu);
    for k in 0..n {
        for r in 0..INPUT_DIM {
            for c in 0..INPUT_DIM {
                k_r[(INPUT_DIM * k + r, INPUT_DIM * k + c)] = cfg.r0[(r, c)];
            }
        }
    }

    // Jerk quadratic from the finite-difference operator D (u_k -
    // u_{k-1}, with the k = 0 row against the previously applied
    // input, which only contributes to the linear term).
    let wd = cfg.w / (dt * dt);
    let mut k_w = DMatrix::zeros(nu, nu);
    for k in 0..n {
        let scale = if k + 1 < n { 2.0 } else { 1.0 };
        for r in 0..INPUT_DIM {
            for c in 0..INPUT_DIM {
                k_w[(INPUT_DIM * k + r, INPUT_DIM * k + c)] += scale * wd[(r, c)];
                if k + 1 < n {
                    k_w[(INPUT_DIM * k + r, INPUT_DIM * (k + 1) + c)] -= wd[(r, c)];
                    k_w[(INPUT_DIM * (k + 1) + r, INPUT_DIM * k + c)] -= wd[(r, c)];
                }
            }
        }
    }

    Condensed { a_d, ab, constraint_a, k_r, k_w }
}

fn assemble_qp(
    cond: &Condensed,
    s_now: &SlJointState,
    u_prev: &SVector<f64, INPUT_DIM>,
    r: &ReferenceTrajectory,
    cfg: &MpcConfig,
    lin: &TaskLinearization,
    q_scale: f64,
    r_scale: f64,
) -> Result<QpProblem> {
    let n = cfg.n_steps;
    if r.samples.len() != n {
        return Err(Error::InvalidInput(format!(
            "reference has {} samples but the horizon has {n} steps",
            r.samples.len()
        )));
    }
    let nu = INPUT_DIM * n;
    let dt = cfg.dt_mpc();

    // Free (zero-input) state rollout and the induced task prediction.
    let mut s_free = Vec::with_capacity(n);
    let mut s = s_now.s;
    for _ in 0..n {
        s = cond.a_d * s;
        s_free.push(s);
    }

    // Task response blocks T_i = M · A_d^i · B_d; the condensed task
    // map has block (k, j) = T_{k-1-j}.
    let t: Vec<SMatrix<f64, TASK_DIM, INPUT_DIM>> =
        cond.ab.iter().map(|abi| lin.m * abi).collect();

    let ny = TASK_DIM * n;
    let mut gy = DMatrix::zeros(ny, nu);
    for k in 1..=n {
        for j in 0..k {
            let blk = &t[k - 1 - j];
            for rr in 0..TASK_DIM {
                for cc in 0..INPUT_DIM {
                    gy[(TASK_DIM * (k - 1) + rr, INPUT_DIM * j + cc)] = blk[(rr, cc)];
                }
            }
        }
    }

    // Stacked tracking error of the free response.
    let mut e_free = DVector::zeros(ny);
    for k in 0..n {
        let yhat = lin.c + lin.m * s_free[k];
        for rr in 0..TASK_DIM {
            e_free[TASK_DIM * k + rr] = yhat[rr] - r.samples[k][rr];
        }
    }

    // Q̄ · Gy and Q̄ · e_free, block by block with the scaled weight.
    let qr = cfg.q0 * q_scale;
    let mut qgy = DMatrix::zeros(ny, nu);
    let mut qe = DVector::zeros(ny);
    for k in 0..n {
        let rows = TASK_DIM * k;
        let gblock = gy.view((rows, 0), (TASK_DIM, nu));
        let mut qg = DMatrix::zeros(TASK_DIM, nu);
        for rr in 0..TASK_DIM {
            for m2 in 0..TASK_DIM {
                let w = qr[(rr, m2)];
                if w != 0.0 {
                    for cc in 0..nu {
                        qg[(rr, cc)] += w * gblock[(m2, cc)];
                    }
                    qe[rows + rr] += w * e_free[rows + m2];
                }
            }
        }
        qgy.view_mut((rows, 0), (TASK_DIM, nu)).copy_from(&qg);
    }

    let mut h = gy.transpose() * &qgy;
    h += &cond.k_r * r_scale;
    h += &cond.k_w;
    h *= 2.0;
    // Enforce exact symmetry for the solver's validation.
    let ht = h.transpose();
    h = (h + ht) * 0.5;

    let mut g = gy.transpose() * qe * 2.0;
    // Jerk linear term: only the first block sees u_prev.
    let wd_u = cfg.w * *u_prev / (dt * dt);
    for rr in 0..INPUT_DIM {
        g[rr] -= 2.0 * wd_u[rr];
    }

    // Bounds: inputs boxed directly, states boxed through gamma with
    // the free response moved to the right-hand side.
    let m_total = nu + JOINT_DIM * n;
    let mut l = DVector::zeros(m_total);
    let mut u = DVector::zeros(m_total);
    for k in 0..n {
        for j in 0..INPUT_DIM {
            l[INPUT_DIM * k + j] = -cfg.u_limit[j];
            u[INPUT_DIM * k + j] = cfg.u_limit[j];
        }
    }
    for k in 0..n {
        let base = nu + JOINT_DIM * k;
        for arm in 0..2 {
            for j in 0..4 {
                let joint = 4 * arm + j;
                let qrow = base + 8 * arm + j;
                let qdrow = qrow + 4;
                l[qrow] = cfg.q_lower[joint] - s_free[k][8 * arm + j];
                u[qrow] = cfg.q_upper[joint] - s_free[k][8 * arm + j];
                l[qdrow] = -cfg.qd_limit[joint] - s_free[k][8 * arm + 4 + j];
                u[qdrow] = cfg.qd_limit[joint] - s_free[k][8 * arm + 4 + j];
            }
        }
    }

    Ok(QpProblem { h, g, a: cond.constraint_a.clone(), l, u })
}

/// Build the condensed tracking QP with the nominal (unadapted)
/// weights. `lin` must be the task linearization at `s_now`.
pub fn build_qp(
    s_now: &SlJointState,
    u_prev: &SVector<f64, INPUT_DIM>,
    r: &ReferenceTrajectory,
    cfg: &MpcConfig,
    lin: &TaskLinearization,
) -> Result<QpProblem> {
    assemble_qp(&condense(cfg), s_now, u_prev, r, cfg, lin, 1.0, 1.0)
}

fn clamp_u(mut u: SVector<f64, INPUT_DIM>, limit: &SVector<f64, INPUT_DIM>) -> SVector<f64, INPUT_DIM> {
    for j in 0..INPUT_DIM {
        u[j] = u[j].clamp(-limit[j], limit[j]);
    }
    u
}

fn step_with(
    cond: &Condensed,
    solver: &mut QpSolver,
    scaling: &mut Option<ScalingRecord>,
    est: &EstimatorState,
    s_now: &SlJointState,
    u_prev: &SVector<f64, INPUT_DIM>,
    r: &ReferenceTrajectory,
    cfg: &MpcConfig,
    lin: &TaskLinearization,
    warm: Option<&WarmStart>,
) -> Result<(ControlCommand, WarmStart)> {
    let k_f = est.kalman_gain_norm()?;
    let (q_scale, r_scale) = weight_factors(k_f, cfg.k0, cfg.epsilon_q);
    let p = assemble_qp(cond, s_now, u_prev, r, cfg, lin, q_scale, r_scale)?;

    // Solve in equilibrated variables; the record is computed on the first
    // problem of the sequence and reused (the weights drift slowly, the
    // constraint matrix is constant).
    if scaling.is_none() {
        let (sp0, rec) = crate::qp::scale_problem(&p, 10)?;
        solver.prime_constraints(&sp0.a);
        *scaling = Some(rec);
    }
    let rec = scaling.as_ref().expect("scaling record just initialized");
    let sp = rec.apply(&p);
    let warm_scaled = warm.map(|w| rec.scale_warm(w));

    let started = std::time::Instant::now();
    let sol_scaled = solver.solve(&sp, warm_scaled.as_ref())?;
    let sol = rec.unscale_solution(&p, &sol_scaled);
    let solve_time = started.elapsed().as_secs_f64();

    let (u, status) = match sol.status {
        QpStatus::Solved => {
            (clamp_u(SVector::from_fn(|j, _| sol.z[j]), &cfg.u_limit), CommandStatus::Ok)
        }
        QpStatus::MaxIters => {
            (clamp_u(SVector::from_fn(|j, _| sol.z[j]), &cfg.u_limit), CommandStatus::Degraded)
        }
        QpStatus::Infeasible => (SVector::zeros(), CommandStatus::SafeStop),
    };

    // Carry the full plan as the next warm start. Replanning runs many
    // times per horizon step, so consecutive problems are near-identical
    // and the unshifted solution is the best available start; shifting
    // by a horizon step would perturb it far more than the problem moves.
    let next_warm = WarmStart { z_init: sol.z.clone(), dual_init: sol.dual.clone() };

    let cmd = ControlCommand {
        u,
        status,
        solve_time,
        iterations: sol.iterations,
        k_f,
        q_scale,
        r_scale,
    };
    Ok((cmd, next_warm))
}

/// One controller step as a free function; builds the horizon matrices
/// and a solver on the fly. Prefer [`MpcController`] inside a loop.
pub fn mpc_step(
    est: &EstimatorState,
    s_now: &SlJointState,
    u_prev: &SVector<f64, INPUT_DIM>,
    r: &ReferenceTrajectory,
    cfg: &MpcConfig,
    lin: &TaskLinearization,
    warm: Option<&WarmStart>,
) -> Result<(ControlCommand, WarmStart)> {
    let cond = condense(cfg);
    let mut solver = QpSolver::new(SolverSettings::default());
    let mut scaling = None;
    step_with(&cond, &mut solver, &mut scaling, est, s_now, u_prev, r, cfg, lin, warm)
}

/// Stateful controller: precomputes the horizon matrices once, carries
/// the warm start and the previously applied input between ticks.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub cfg: MpcConfig,
    arms: [SlArmModel; 2],
    cond: Condensed,
    solver: QpSolver,
    scaling: Option<ScalingRecord>,
    warm: Option<WarmStart>,
    u_prev: SVector<f64, INPUT_DIM>,
}

impl MpcController {
    pub fn new(cfg: MpcConfig, arms: [SlArmModel; 2]) -> Result<Self> {
        cfg.validate()?;
        arms[0].validate()?;
        arms[1].validate()?;
        let cond = condense(&cfg);
        let mut settings = SolverSettings::default();
        settings.max_iters = 4000;
        // Control-grade tolerance: the command is re-planned every
        // millisecond, so squeezing the ADMM tail below 1e-4 buys nothing.
        settings.tol = 1e-4;
        let solver = QpSolver::new(settings);
        Ok(Self { cfg, arms, cond, solver, scaling: None, warm: None, u_prev: SVector::zeros() })
    }

    /// Drop the carried warm start and previous input (e.g. between
    /// trials).
    pub fn reset(&mut self) {
        self.warm = None;
        self.u_prev = SVector::zeros();
        self.scaling = None;
    }

    pub fn last_input(&self) -> SVector<f64, INPUT_DIM> {
        self.u_prev
    }

    /// Compute the acceleration command for the current tick. Requires
    /// at least one estimator update (the weight adaptation reads the
    /// Kalman gain).
    pub fn step(
        &mut self,
        est: &EstimatorState,
        s_now: &SlJointState,
        trunk_pose: &Isometry3<f64>,
        r: &ReferenceTrajectory,
    ) -> Result<ControlCommand> {
        let lin = linearize_task(s_now, &self.arms, trunk_pose);
        // Cold solves get the full budget; warm-started ticks are
        // capped so a hard tick cannot stall the loop.
        self.solver.settings.max_iters = if self.warm.is_some() { 100 } else { 4000 };
        let (cmd, next_warm) = step_with(
            &self.cond,
            &mut self.solver,
            &mut self.scaling,
            est,
            s_now,
            &self.u_prev,
            r,
            &self.cfg,
            &lin,
            self.warm.as_ref(),
        )?;
        self.warm = if cmd.status == CommandStatus::SafeStop { None } else { Some(next_warm) };
        self.u_prev = cmd.u;
        Ok(cmd)
    }
}

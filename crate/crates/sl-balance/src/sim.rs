//! Plant and experiment harness.
//!
//! A kinematic human executes a frontal or lateral bow while the SL
//! joints run as double integrators driven by the controller. The
//! multi-rate loop observes at 100 Hz and controls at 1 kHz, injects
//! seeded Gaussian marker noise, and records everything needed for the
//! post-hoc metrics. Three conditions mirror the experimental
//! protocol: the bare human (`HOnly`), the human carrying inert
//! hardware (`NoComp`), and the full control stack (`Comp`).

use std::io::{BufRead, Write as IoWrite};

use nalgebra::{Rotation3, SVector, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::estimator::{
    self, layout, lqe_predict, lqe_update, predict_horizon, EstimatorState, Observation,
    ProcessNoise, StateVector48, OBS_DIM,
};
use crate::model::{
    sl_forward_kinematics, sup_center, system_com, AnthropometricParams, HumanKinematicState,
    SlArmModel, SystemComBreakdown,
};
use crate::mpc::{CommandStatus, MpcConfig, MpcController, SlJointState, INPUT_DIM};
use crate::planner::{
    optimal_com_velocity, reference_from_com_command, sample_layout, PlannerWeights,
};
use crate::{Error, Result};

/// Standing gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Hip height as a fraction of body height (anthropometric tables).
pub const HIP_HEIGHT_RATIO: f64 = 0.53;

/// Half the hip separation used for both stances, m.
pub const HIP_HALF_SEPARATION: f64 = 0.1;

/// Which bow the human performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    FrontalBow,
    LateralBow,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FrontalBow => "frontal",
            Self::LateralBow => "lateral",
        }
    }
}

/// Foot placement. Side-by-side for the frontal bow; in line (narrow
/// lateral support) for the lateral bow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stance {
    SideBySide,
    InLine,
}

/// One bow trial specification.
#[derive(Debug, Clone)]
pub struct TrialScenario {
    pub kind: ScenarioKind,
    /// Belt speed the trunk top must track, m/s.
    pub treadmill_speed: f64,
    /// Trial length, s.
    pub duration: f64,
    pub stance: Stance,
}

impl TrialScenario {
    pub fn frontal() -> Self {
        Self {
            kind: ScenarioKind::FrontalBow,
            treadmill_speed: 0.04,
            duration: 7.5,
            stance: Stance::SideBySide,
        }
    }

    pub fn lateral() -> Self {
        Self {
            kind: ScenarioKind::LateralBow,
            treadmill_speed: 0.04,
            duration: 7.5,
            stance: Stance::InLine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidInput("trial duration must be positive".into()));
        }
        if self.treadmill_speed < 0.0 {
            return Err(Error::InvalidInput("treadmill speed must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Experimental condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Human alone: no backpack, massless arms (kinematics kept for
    /// bookkeeping only).
    HOnly,
    /// Full hardware mass carried, joints frozen at the home pose.
    NoComp,
    /// Full hardware mass with the balance controller active.
    Comp,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::HOnly => "honly",
            Self::NoComp => "nocomp",
            Self::Comp => "comp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "honly" => Ok(Self::HOnly),
            "nocomp" => Ok(Self::NoComp),
            "comp" => Ok(Self::Comp),
            other => Err(Error::InvalidInput(format!("unknown condition '{other}'"))),
        }
    }
}

/// Everything a trial needs besides the scenario and condition.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Control loop rate, Hz.
    pub control_rate: f64,
    /// Observation (mocap) rate, Hz; must divide the control rate.
    pub obs_rate: f64,
    /// Marker noise standard deviation, m.
    pub noise_sigma: f64,
    pub seed: u64,
    pub anthro: AnthropometricParams,
    pub arms: [SlArmModel; 2],
    pub planner: PlannerWeights,
    pub mpc: MpcConfig,
    /// Joint home pose per arm (arms folded, wrists near the
    /// backpack).
    pub home_pose: [[f64; 4]; 2],
}

impl Default for SimConfig {
    fn default() -> Self {
        let arms = [
            SlArmModel::default_with_lateral_offset(0.22),
            SlArmModel::default_with_lateral_offset(-0.22),
        ];
        let mpc = MpcConfig::default_for_arms(&arms);
        Self {
            control_rate: 1000.0,
            obs_rate: 100.0,
            noise_sigma: 1e-3,
            seed: 1,
            anthro: AnthropometricParams::default(),
            arms,
            planner: PlannerWeights::default(),
            mpc,
            home_pose: [[0.0, 1.3, 0.0, 0.4], [0.0, 1.3, 0.0, 0.4]],
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.control_rate > 0.0 && self.obs_rate > 0.0) {
            return Err(Error::InvalidInput("rates must be positive".into()));
        }
        let ratio = self.control_rate / self.obs_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::InvalidInput(
                "control rate must be an integer multiple of the observation rate".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidInput("noise sigma must be nonnegative".into()));
        }
        self.anthro.validate()?;
        self.arms[0].validate()?;
        self.arms[1].validate()?;
        self.planner.validate()?;
        self.mpc.validate()?;
        for (arm, q) in self.home_pose.iter().enumerate() {
            for (j, &qj) in q.iter().enumerate() {
                let (lo, hi) = self.arms[arm].joint_limits[j];
                if !(qj >= lo && qj <= hi) {
                    return Err(Error::InvalidInput(format!(
                        "home pose joint {j} of arm {arm} outside its limits"
                    )));
                }
            }
        }
        Ok(())
    }

    fn obs_interval(&self) -> usize {
        (self.control_rate / self.obs_rate).round() as usize
    }

    /// Parameters as seen under a condition: `HOnly` drops the
    /// backpack and arm masses, everything else is shared so the human
    /// trajectory is identical across conditions.
    pub fn condition_view(&self, condition: Condition) -> (AnthropometricParams, [SlArmModel; 2]) {
        let mut anthro = self.anthro.clone();
        let mut arms = self.arms.clone();
        if condition == Condition::HOnly {
            anthro.backpack_mass = 0.0;
            arms[0].link_masses = [0.0, 0.0];
            arms[1].link_masses = [0.0, 0.0];
        }
        (anthro, arms)
    }
}

/// Prescribed human pose at time `t` of the bow.
///
/// The trunk leans so its top tracks a button receding at the belt
/// speed: θ(t) = arcsin(min(1, v·t / L_t)). The frontal bow pitches
/// forward (+x); the lateral bow rolls to the right (−y) over the
/// narrow in-line stance. Hips stay fixed in the world frame.
pub fn bow_trajectory(
    scenario: &TrialScenario,
    t: f64,
    anthro: &AnthropometricParams,
) -> Result<HumanKinematicState> {
    if !(0.0..=scenario.duration + 1e-9).contains(&t) {
        return Err(Error::InvalidInput(format!(
            "time {t} outside the trial [0, {}]",
            scenario.duration
        )));
    }
    let hip_z = HIP_HEIGHT_RATIO * anthro.body_height;
    let (hip_left, hip_right) = match scenario.stance {
        Stance::SideBySide => (
            Vector3::new(0.0, HIP_HALF_SEPARATION, hip_z),
            Vector3::new(0.0, -HIP_HALF_SEPARATION, hip_z),
        ),
        Stance::InLine => (
            Vector3::new(HIP_HALF_SEPARATION, 0.0, hip_z),
            Vector3::new(-HIP_HALF_SEPARATION, 0.0, hip_z),
        ),
    };
    let theta = (scenario.treadmill_speed * t / anthro.trunk_length).min(1.0).asin();
    let trunk_orientation = match scenario.kind {
        ScenarioKind::FrontalBow => Rotation3::from_axis_angle(&Vector3::y_axis(), theta),
        ScenarioKind::LateralBow => Rotation3::from_axis_angle(&Vector3::x_axis(), theta),
    };
    Ok(HumanKinematicState {
        hip_left,
        hip_right,
        trunk_orientation,
        treadmill_offset: scenario.treadmill_speed * t,
    })
}

/// True world state of the coupled plant.
#[derive(Debug, Clone)]
pub struct PlantState {
    pub human: HumanKinematicState,
    pub joints: SlJointState,
    pub time: f64,
}

/// Advance the plant by one control period: SL joints integrate the
/// exact double integrator (clipped at position/velocity limits, clip
/// count returned), the human follows the prescribed bow. `frozen`
/// holds the joints regardless of `u` (HOnly/NoComp).
pub fn step_plant(
    plant: &PlantState,
    u: &SVector<f64, INPUT_DIM>,
    dt: f64,
    scenario: &TrialScenario,
    anthro: &AnthropometricParams,
    arms: &[SlArmModel; 2],
    frozen: bool,
) -> Result<(PlantState, u32)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("plant step needs dt > 0".into()));
    }
    let t_next = (plant.time + dt).min(scenario.duration);
    let mut joints = plant.joints;
    let mut clips = 0u32;
    if !frozen {
        for arm in 0..2 {
            for j in 0..4 {
                let q_idx = 8 * arm + j;
                let qd_idx = q_idx + 4;
                let a = u[4 * arm + j];
                let mut q = joints.s[q_idx] + joints.s[qd_idx] * dt + 0.5 * a * dt * dt;
                let mut qd = joints.s[qd_idx] + a * dt;
                let (lo, hi) = arms[arm].joint_limits[j];
                if q < lo || q > hi {
                    q = q.clamp(lo, hi);
                    qd = 0.0;
                    clips += 1;
                }
                let vmax = arms[arm].velocity_limits[j];
                if qd.abs() > vmax {
                    qd = qd.clamp(-vmax, vmax);
                    clips += 1;
                }
                joints.s[q_idx] = q;
                joints.s[qd_idx] = qd;
            }
        }
    }
    let human = bow_trajectory(scenario, t_next, anthro)?;
    Ok((PlantState { human, joints, time: t_next }, clips))
}

/// The 24 true marker/derived positions in measurement order, plus the
/// CoM breakdown they came from.
pub fn true_positions(
    plant: &PlantState,
    anthro: &AnthropometricParams,
    arms: &[SlArmModel; 2],
) -> Result<(SVector<f64, OBS_DIM>, SystemComBreakdown)> {
    let q1 = plant.joints.q(0);
    let q2 = plant.joints.q(1);
    let com = system_com(&plant.human, anthro, arms, &q1, &q2)?;
    let sup = sup_center(&plant.human.hip_left, &plant.human.hip_right)?;
    let trunk = plant.human.trunk_pose();
    let mut pos = SVector::<f64, OBS_DIM>::zeros();
    pos[0] = com.total_com_xy.x;
    pos[1] = com.total_com_xy.y;
    pos[2] = sup.x;
    pos[3] = sup.y;
    pos[4] = com.human_com.x;
    pos[5] = com.human_com.y;
    for arm in 0..2 {
        let pts = sl_forward_kinematics(&plant.joints.q(arm), &arms[arm], &trunk);
        let base = 6 + 9 * arm;
        for (p, point) in [pts.shoulder, pts.elbow, pts.wrist].iter().enumerate() {
            for c in 0..3 {
                pos[base + 3 * p + c] = point[c];
            }
        }
    }
    Ok((pos, com))
}

/// Corrupt the true positions with i.i.d. Gaussian marker noise from
/// the trial RNG.
pub fn observe(
    truth: &SVector<f64, OBS_DIM>,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
    timestamp: f64,
) -> Observation {
    let mut positions = *truth;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("positive sigma");
        for i in 0..OBS_DIM {
            positions[i] += normal.sample(rng);
        }
    }
    Observation { positions, timestamp }
}

/// Horizontal ground-reaction force of the fall-free plant: Newton on
/// the total CoM.
pub fn grf_proxy(com_accel_xy: &Vector2<f64>, total_mass: f64) -> Vector2<f64> {
    com_accel_xy * total_mass
}

/// Center of pressure under the linear inverted pendulum relation.
pub fn cop_proxy(
    com_xy: &Vector2<f64>,
    com_accel_xy: &Vector2<f64>,
    com_height: f64,
) -> Result<Vector2<f64>> {
    if !(com_height > 0.0) {
        return Err(Error::InvalidInput("CoM height must be positive".into()));
    }
    Ok(com_xy - com_accel_xy * (com_height / GRAVITY))
}

/// One control tick of the log.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub time: f64,
    pub truth: StateVector48,
    pub estimate: StateVector48,
    /// Planner CoM velocity command (zero outside Comp).
    pub p_star_dot: Vector2<f64>,
    /// Planner instability cost evaluated on the estimate.
    pub cost_v: f64,
    /// First reference sample handed to the MPC (zero outside Comp).
    pub reference: SVector<f64, 24>,
    pub u: SVector<f64, INPUT_DIM>,
    pub solve_time: f64,
    pub solve_iterations: usize,
    pub k_f: f64,
    pub q_scale: f64,
    pub r_scale: f64,
    /// 0 ok, 1 degraded, 2 safe-stop, 3 not-applicable.
    pub status: u8,
    pub clip_events: u32,
    /// True total-CoM height, m (for the CoP proxy).
    pub com_height: f64,
}

/// One observation tick.
#[derive(Debug, Clone)]
pub struct ObsRecord {
    pub time: f64,
    pub raw: SVector<f64, OBS_DIM>,
    pub noisy: SVector<f64, OBS_DIM>,
}

/// Trial identity and bookkeeping, written as the sidecar.
#[derive(Debug, Clone)]
pub struct TrialMeta {
    pub scenario: ScenarioKind,
    pub condition: Condition,
    pub seed: u64,
    pub config_hash: String,
    pub control_rate: f64,
    pub obs_rate: f64,
    pub duration: f64,
    pub total_mass: f64,
    pub safe_stops: usize,
    pub clip_total: u64,
}

/// Complete record of one trial.
#[derive(Debug, Clone)]
pub struct TrialLog {
    pub meta: TrialMeta,
    pub ticks: Vec<TickRecord>,
    pub observations: Vec<ObsRecord>,
}

const STATUS_NA: u8 = 3;

fn status_code(status: CommandStatus) -> u8 {
    match status {
        CommandStatus::Ok => 0,
        CommandStatus::Degraded => 1,
        CommandStatus::SafeStop => 2,
    }
}

/// Run one trial of `scenario` under `condition`. Bitwise
/// deterministic for a fixed (config, seed). `config_hash` is embedded
/// in the metadata so artifacts are traceable to their configuration.
pub fn run_trial(
    scenario: &TrialScenario,
    condition: Condition,
    cfg: &SimConfig,
    config_hash: &str,
) -> Result<TrialLog> {
    scenario.validate()?;
    cfg.validate()?;
    let (anthro, arms) = cfg.condition_view(condition);

    let dt = 1.0 / cfg.control_rate;
    let obs_interval = cfg.obs_interval();
    let n_ticks = (scenario.duration * cfg.control_rate).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let home = SlJointState::from_parts(
        &cfg.home_pose[0],
        &[0.0; 4],
        &cfg.home_pose[1],
        &[0.0; 4],
    );
    let mut plant =
        PlantState { human: bow_trajectory(scenario, 0.0, &anthro)?, joints: home, time: 0.0 };

    let (pos0, com0) = true_positions(&plant, &anthro, &arms)?;
    let x0 = layout::from_positions_velocities(&pos0, &SVector::zeros());
    let mut est = EstimatorState::new(
        x0,
        1e-4,
        1e-2,
        ProcessNoise::default(),
        // Floor the assumed measurement noise so noise-free trials do
        // not drive the gain (and with it K_F) towards the
        // pseudo-inverse blow-up.
        cfg.noise_sigma.max(1e-4),
    );

    let mut controller = if condition == Condition::Comp {
        Some(MpcController::new(cfg.mpc.clone(), arms.clone())?)
    } else {
        None
    };

    let mut ticks = Vec::with_capacity(n_ticks);
    let mut observations = Vec::with_capacity(n_ticks / obs_interval + 1);
    let mut prev_pos = pos0;
    let mut safe_stops = 0usize;
    let mut clip_total = 0u64;

    for k in 0..n_ticks {
        let t = k as f64 * dt;
        let (pos, com) = true_positions(&plant, &anthro, &arms)?;
        let vel = if k == 0 { SVector::zeros() } else { (pos - prev_pos) / dt };
        let truth = layout::from_positions_velocities(&pos, &vel);
        prev_pos = pos;

        if k % obs_interval == 0 {
            let z = observe(&pos, cfg.noise_sigma, &mut rng, t);
            observations.push(ObsRecord { time: t, raw: pos, noisy: z.positions });
            est = lqe_update(&est, &z)?;
        }

        let mut record = TickRecord {
            time: t,
            truth,
            estimate: est.x_hat,
            p_star_dot: Vector2::zeros(),
            cost_v: 0.0,
            reference: SVector::zeros(),
            u: SVector::zeros(),
            solve_time: 0.0,
            solve_iterations: 0,
            k_f: est.kalman_gain_norm().unwrap_or(0.0),
            q_scale: 1.0,
            r_scale: 1.0,
            status: STATUS_NA,
            clip_events: 0,
            com_height: com.total_com.z,
        };

        if let Some(ctrl) = controller.as_mut() {
            let predicted = predict_horizon(&est, cfg.mpc.horizon, cfg.mpc.n_steps)?;
            let cmd = optimal_com_velocity(
                &layout::com_xy(&est.x_hat),
                &layout::sup_xy(&est.x_hat),
                &cfg.planner,
            )?;
            let current_y = estimated_task_vector(&est.x_hat);
            let reference = reference_from_com_command(
                &cmd,
                &predicted,
                &com,
                &current_y,
                cfg.mpc.horizon,
                &arms,
            )?;
            let control =
                ctrl.step(&est, &plant.joints, &plant.human.trunk_pose(), &reference)?;
            if control.status == CommandStatus::SafeStop {
                safe_stops += 1;
            }
            record.p_star_dot = cmd.p_star_dot;
            record.cost_v = cmd.value;
            record.reference = reference.samples[0];
            record.u = control.u;
            record.solve_time = control.solve_time;
            record.solve_iterations = control.iterations;
            record.k_f = control.k_f;
            record.q_scale = control.q_scale;
            record.r_scale = control.r_scale;
            record.status = status_code(control.status);
        }

        let frozen = condition != Condition::Comp;
        let (next, clips) =
            step_plant(&plant, &record.u, dt, scenario, &anthro, &arms, frozen)?;
        record.clip_events = clips;
        clip_total += clips as u64;
        plant = next;
        est = lqe_predict(&est, dt)?;
        ticks.push(record);
    }

    Ok(TrialLog {
        meta: TrialMeta {
            scenario: scenario.kind,
            condition,
            seed: cfg.seed,
            config_hash: config_hash.to_string(),
            control_rate: cfg.control_rate,
            obs_rate: cfg.obs_rate,
            duration: scenario.duration,
            total_mass: com0.total_mass,
            safe_stops,
            clip_total,
        },
        ticks,
        observations,
    })
}

/// Elbow/wrist positions and velocities of both arms pulled out of a
/// state estimate, in reference-sample order.
pub fn estimated_task_vector(x: &StateVector48) -> SVector<f64, 24> {
    let mut y = SVector::<f64, 24>::zeros();
    for arm in 0..2 {
        for point in 0..2 {
            let p = layout::arm_point(x, arm, point + 1);
            let v = layout::arm_point_vel(x, arm, point + 1);
            let p0 = sample_layout::pos(arm, point);
            let v0 = sample_layout::vel(arm, point);
            for c in 0..3 {
                y[p0 + c] = p[c];
                y[v0 + c] = v[c];
            }
        }
    }
    y
}

/// Column base names for the 24 measured positions, measurement order.
pub fn obs_names() -> [&'static str; OBS_DIM] {
    [
        "com_x", "com_y", "sup_x", "sup_y", "hcom_x", "hcom_y", "a1s_x", "a1s_y", "a1s_z",
        "a1e_x", "a1e_y", "a1e_z", "a1w_x", "a1w_y", "a1w_z", "a2s_x", "a2s_y", "a2s_z", "a2e_x",
        "a2e_y", "a2e_z", "a2w_x", "a2w_y", "a2w_z",
    ]
}

impl TrialLog {
    /// CSV header: every column carries its unit in the name.
    fn csv_header() -> String {
        let names = obs_names();
        let mut cols = vec!["t_s".to_string()];
        for prefix in ["true", "est"] {
            for n in names {
                cols.push(format!("{prefix}_{n}_m"));
            }
            for n in names {
                cols.push(format!("{prefix}_{n}_vel_mps"));
            }
        }
        cols.push("pstar_x_mps".into());
        cols.push("pstar_y_mps".into());
        cols.push("cost_v".into());
        for i in 0..24 {
            cols.push(format!("ref_{i}"));
        }
        for i in 0..INPUT_DIM {
            cols.push(format!("u_{i}_radps2"));
        }
        cols.push("solve_iters".into());
        cols.push("k_f".into());
        cols.push("q_scale".into());
        cols.push("r_scale".into());
        cols.push("status".into());
        cols.push("clips".into());
        cols.push("com_height_m".into());
        cols.push("obs_new".into());
        for n in names {
            cols.push(format!("obs_raw_{n}_m"));
        }
        for n in names {
            cols.push(format!("obs_noisy_{n}_m"));
        }
        cols.join(",")
    }

    /// Write the per-tick table. Observation rows repeat the last
    /// observation with `obs_new = 1` on the tick it arrived.
    pub fn write_csv<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", Self::csv_header())?;
        let mut obs_iter = self.observations.iter().peekable();
        let mut last_obs: Option<&ObsRecord> = None;
        let mut line = String::with_capacity(4096);
        for tick in &self.ticks {
            let mut fresh = 0u8;
            if let Some(next) = obs_iter.peek() {
                if next.time <= tick.time + 1e-12 {
                    last_obs = Some(obs_iter.next().unwrap());
                    fresh = 1;
                }
            }
            line.clear();
            line.push_str(&format!("{}", tick.time));
            let (tp, tv) = split_state(&tick.truth);
            let (ep, ev) = split_state(&tick.estimate);
            for block in [&tp, &tv, &ep, &ev] {
                for v in block.iter() {
                    push_field(&mut line, *v);
                }
            }
            push_field(&mut line, tick.p_star_dot.x);
            push_field(&mut line, tick.p_star_dot.y);
            push_field(&mut line, tick.cost_v);
            for v in tick.reference.iter() {
                push_field(&mut line, *v);
            }
            for v in tick.u.iter() {
                push_field(&mut line, *v);
            }
            line.push(',');
            line.push_str(&tick.solve_iterations.to_string());
            push_field(&mut line, tick.k_f);
            push_field(&mut line, tick.q_scale);
            push_field(&mut line, tick.r_scale);
            line.push(',');
            line.push_str(&tick.status.to_string());
            line.push(',');
            line.push_str(&tick.clip_events.to_string());
            push_field(&mut line, tick.com_height);
            line.push(',');
            line.push_str(&fresh.to_string());
            match last_obs {
                Some(o) => {
                    for v in o.raw.iter().chain(o.noisy.iter()) {
                        push_field(&mut line, *v);
                    }
                }
                None => {
                    for _ in 0..2 * OBS_DIM {
                        line.push_str(",0");
                    }
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Sidecar metadata as `key = value` lines.
    pub fn write_meta<W: IoWrite>(&self, w: &mut W) -> Result<()> {
        let m = &self.meta;
        writeln!(w, "scenario = {}", m.scenario.as_str())?;
        writeln!(w, "condition = {}", m.condition.as_str())?;
        writeln!(w, "seed = {}", m.seed)?;
        writeln!(w, "config_hash = {}", m.config_hash)?;
        writeln!(w, "control_rate_hz = {}", m.control_rate)?;
        writeln!(w, "obs_rate_hz = {}", m.obs_rate)?;
        writeln!(w, "duration_s = {}", m.duration)?;
        writeln!(w, "total_mass_kg = {}", m.total_mass)?;
        writeln!(w, "safe_stops = {}", m.safe_stops)?;
        writeln!(w, "clip_total = {}", m.clip_total)?;
        Ok(())
    }

    /// Read a trial back from its CSV and metadata sidecar.
    pub fn read_files(csv: impl BufRead, meta: impl BufRead) -> Result<Self> {
        let meta = read_meta(meta)?;
        let mut lines = csv.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty trial CSV".into()))??;
        if header != Self::csv_header() {
            return Err(Error::InvalidInput("trial CSV header does not match this version".into()));
        }
        let mut ticks = Vec::new();
        let mut observations = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line?;
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("bad number on data row {}", ln + 1))
                    })
                })
                .collect::<Result<_>>()?;
            let expected = 1 + 4 * OBS_DIM + 3 + 24 + INPUT_DIM + 7 + 1 + 2 * OBS_DIM;
            if fields.len() != expected {
                return Err(Error::InvalidInput(format!(
                    "row {} has {} fields, expected {expected}",
                    ln + 1,
                    fields.len()
                )));
            }
            let mut at = 0usize;
            let mut take = |n: usize| {
                let s = &fields[at..at + n];
                at += n;
                s.to_vec()
            };
            let time = take(1)[0];
            let tp = take(OBS_DIM);
            let tv = take(OBS_DIM);
            let ep = take(OBS_DIM);
            let ev = take(OBS_DIM);
            let pstar = take(2);
            let cost_v = take(1)[0];
            let reference = take(24);
            let u = take(INPUT_DIM);
            let iters = take(1)[0];
            let k_f = take(1)[0];
            let q_scale = take(1)[0];
            let r_scale = take(1)[0];
            let status = take(1)[0];
            let clips = take(1)[0];
            let com_height = take(1)[0];
            let fresh = take(1)[0];
            let raw = take(OBS_DIM);
            let noisy = take(OBS_DIM);

            let to24 = |v: &[f64]| SVector::<f64, OBS_DIM>::from_fn(|i, _| v[i]);
            ticks.push(TickRecord {
                time,
                truth: layout::from_positions_velocities(&to24(&tp), &to24(&tv)),
                estimate: layout::from_positions_velocities(&to24(&ep), &to24(&ev)),
                p_star_dot: Vector2::new(pstar[0], pstar[1]),
                cost_v,
                reference: SVector::from_fn(|i, _| reference[i]),
                u: SVector::from_fn(|i, _| u[i]),
                // Wall-clock timing is deliberately not persisted; logs
                // must be byte-reproducible from the seed.
                solve_time: 0.0,
                solve_iterations: iters as usize,
                k_f,
                q_scale,
                r_scale,
                status: status as u8,
                clip_events: clips as u32,
                com_height,
            });
            if fresh == 1.0 {
                observations.push(ObsRecord { time, raw: to24(&raw), noisy: to24(&noisy) });
            }
        }
        Ok(Self { meta, ticks, observations })
    }
}

fn read_meta(r: impl BufRead) -> Result<TrialMeta> {
    let mut map = std::collections::BTreeMap::new();
    for line in r.lines() {
        let line = line?;
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |k: &str| {
        map.get(k).cloned().ok_or_else(|| Error::InvalidInput(format!("sidecar missing '{k}'")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|_| Error::InvalidInput(format!("sidecar key '{k}' not numeric")))
    };
    let scenario = match get("scenario")?.as_str() {
        "frontal" => ScenarioKind::FrontalBow,
        "lateral" => ScenarioKind::LateralBow,
        other => return Err(Error::InvalidInput(format!("unknown scenario '{other}'"))),
    };
    Ok(TrialMeta {
        scenario,
        condition: Condition::parse(&get("condition")?)?,
        seed: num("seed")? as u64,
        config_hash: get("config_hash")?,
        control_rate: num("control_rate_hz")?,
        obs_rate: num("obs_rate_hz")?,
        duration: num("duration_s")?,
        total_mass: num("total_mass_kg")?,
        safe_stops: num("safe_stops")? as usize,
        clip_total: num("clip_total")? as u64,
    })
}

fn push_field(line: &mut String, v: f64) {
    line.push(',');
    line.push_str(&format!("{v}"));
}

fn split_state(x: &StateVector48) -> (SVector<f64, OBS_DIM>, SVector<f64, OBS_DIM>) {
    let p = layout::positions(x);
    let v = SVector::from_fn(|i, _| x[estimator::vel_index(i)]);
    (p, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn anthro() -> AnthropometricParams {
        AnthropometricParams::default()
    }

    #[test]
    fn bow_starts_upright() {
        let s = TrialScenario::frontal();
        let h = bow_trajectory(&s, 0.0, &anthro()).unwrap();
        assert!((h.trunk_orientation.matrix() - Rotation3::identity().matrix()).abs().max() == 0.0);
        assert_eq!(h.treadmill_offset, 0.0);
    }

    /// Oracle: v = 0.04, L_t = 0.5, t = 7.5 gives sin θ = 0.6.
    #[test]
    fn bow_angle_matches_arcsin_law() {
        let s = TrialScenario::frontal();
        let h = bow_trajectory(&s, 7.5, &anthro()).unwrap();
        // Pitch angle from the rotated z axis.
        let z = h.trunk_orientation * Vector3::z();
        assert_relative_eq!(z.x, 0.6, epsilon = 1e-12);
        assert_relative_eq!(z.z, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn lateral_bow_rolls_not_pitches() {
        let f = bow_trajectory(&TrialScenario::frontal(), 5.0, &anthro()).unwrap();
        let l = bow_trajectory(&TrialScenario::lateral(), 5.0, &anthro()).unwrap();
        let zf = f.trunk_orientation * Vector3::z();
        let zl = l.trunk_orientation * Vector3::z();
        assert_relative_eq!(zl.y, -zf.x, epsilon = 1e-12);
        assert_relative_eq!(zl.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(zf.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn bow_rejects_out_of_range_time() {
        let s = TrialScenario::frontal();
        assert!(bow_trajectory(&s, -0.1, &anthro()).is_err());
        assert!(bow_trajectory(&s, 8.0, &anthro()).is_err());
    }

    #[test]
    fn plant_holds_still_without_input() {
        let cfg = SimConfig::default();
        let s = TrialScenario::frontal();
        let joints = SlJointState::from_parts(&[0.1; 4], &[0.0; 4], &[0.2; 4], &[0.0; 4]);
        let plant =
            PlantState { human: bow_trajectory(&s, 0.0, &cfg.anthro).unwrap(), joints, time: 0.0 };
        let (next, clips) =
            step_plant(&plant, &SVector::zeros(), 1e-3, &s, &cfg.anthro, &cfg.arms, false)
                .unwrap();
        assert_eq!(next.joints.s, joints.s);
        assert_eq!(clips, 0);
    }

    /// Oracle: constant input over k steps matches the closed-form
    /// double integrator.
    #[test]
    fn plant_matches_double_integrator_closed_form() {
        let cfg = SimConfig::default();
        let s = TrialScenario::frontal();
        let dt = 1e-3;
        let mut plant = PlantState {
            human: bow_trajectory(&s, 0.0, &cfg.anthro).unwrap(),
            joints: SlJointState::from_parts(&[0.0; 4], &[0.0; 4], &[0.0; 4], &[0.0; 4]),
            time: 0.0,
        };
        let mut u = SVector::<f64, INPUT_DIM>::zeros();
        u[2] = 0.8;
        let k = 500;
        for _ in 0..k {
            let (next, _) =
                step_plant(&plant, &u, dt, &s, &cfg.anthro, &cfg.arms, false).unwrap();
            plant = next;
        }
        let t = k as f64 * dt;
        assert!((plant.joints.s[2] - 0.5 * 0.8 * t * t).abs() <= 1e-12);
        assert!((plant.joints.s[6] - 0.8 * t).abs() <= 1e-12);
    }

    #[test]
    fn plant_clips_at_limits() {
        let cfg = SimConfig::default();
        let s = TrialScenario::frontal();
        let qd0 = cfg.arms[0].velocity_limits[0];
        let joints = SlJointState::from_parts(&[0.0; 4], &[qd0; 4], &[0.0; 4], &[0.0; 4]);
        let plant =
            PlantState { human: bow_trajectory(&s, 0.0, &cfg.anthro).unwrap(), joints, time: 0.0 };
        let mut u = SVector::<f64, INPUT_DIM>::zeros();
        u[0] = 10.0;
        let (next, clips) =
            step_plant(&plant, &u, 1e-3, &s, &cfg.anthro, &cfg.arms, false).unwrap();
        assert!(clips >= 1);
        assert!(next.joints.s[4] <= qd0 + 1e-12);
    }

    #[test]
    fn honly_system_com_equals_human_com() {
        let cfg = SimConfig::default();
        let s = TrialScenario::frontal();
        let (anthro, arms) = cfg.condition_view(Condition::HOnly);
        for t in [0.0, 2.0, 6.0] {
            let plant = PlantState {
                human: bow_trajectory(&s, t, &anthro).unwrap(),
                joints: SlJointState::from_parts(
                    &cfg.home_pose[0],
                    &[0.0; 4],
                    &cfg.home_pose[1],
                    &[0.0; 4],
                ),
                time: t,
            };
            let (_, com) = true_positions(&plant, &anthro, &arms).unwrap();
            assert_relative_eq!(com.total_com, com.human_com, epsilon = 1e-12);
        }
    }

    #[test]
    fn observation_noise_is_seeded_and_unbiased() {
        let truth = SVector::<f64, OBS_DIM>::repeat(0.5);
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let za = observe(&truth, 1e-3, &mut a, 0.0);
        let zb = observe(&truth, 1e-3, &mut b, 0.0);
        assert_eq!(za.positions, zb.positions);

        let z0 = observe(&truth, 0.0, &mut a, 0.0);
        assert_eq!(z0.positions, truth);

        // Statistical oracle: sample variance near sigma^2.
        let sigma = 2e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000 / OBS_DIM + 1;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for _ in 0..n {
            let z = observe(&truth, sigma, &mut rng, 0.0);
            for i in 0..OBS_DIM {
                let e = z.positions[i] - truth[i];
                sum += e;
                sum_sq += e * e;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = sum_sq / count as f64 - mean * mean;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.02, "variance ratio off: {var}");
    }

    #[test]
    fn grf_and_cop_proxies() {
        assert_eq!(grf_proxy(&Vector2::zeros(), 80.0), Vector2::zeros());
        assert_eq!(grf_proxy(&Vector2::new(0.1, 0.0), 100.0), Vector2::new(10.0, 0.0));

        let com = Vector2::new(0.3, 0.2);
        assert_eq!(cop_proxy(&com, &Vector2::zeros(), 1.0).unwrap(), com);
        let shifted = cop_proxy(&com, &Vector2::new(1.0, 0.0), 0.981).unwrap();
        assert_relative_eq!(shifted.x, com.x - 0.1, epsilon = 1e-12);
        assert!(cop_proxy(&com, &Vector2::zeros(), 0.0).is_err());
    }

    #[test]
    fn trial_log_roundtrips_through_csv() {
        let mut cfg = SimConfig::default();
        cfg.seed = 3;
        let mut scenario = TrialScenario::frontal();
        scenario.duration = 0.05;
        let log = run_trial(&scenario, Condition::NoComp, &cfg, "testhash").unwrap();
        let mut csv = Vec::new();
        let mut meta = Vec::new();
        log.write_csv(&mut csv).unwrap();
        log.write_meta(&mut meta).unwrap();
        let back = TrialLog::read_files(&csv[..], &meta[..]).unwrap();
        assert_eq!(back.ticks.len(), log.ticks.len());
        assert_eq!(back.observations.len(), log.observations.len());
        assert_eq!(back.meta.config_hash, "testhash");
        for (a, b) in log.ticks.iter().zip(back.ticks.iter()) {
            assert_eq!(a.truth, b.truth);
            assert_eq!(a.u, b.u);
            assert_eq!(a.status, b.status);
        }
    }

    #[test]
    fn trials_are_bitwise_deterministic() {
        let cfg = SimConfig::default();
        let mut scenario = TrialScenario::frontal();
        scenario.duration = 0.1;
        let a = run_trial(&scenario, Condition::NoComp, &cfg, "h").unwrap();
        let b = run_trial(&scenario, Condition::NoComp, &cfg, "h").unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.write_csv(&mut ba).unwrap();
        b.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn rate_contract_holds() {
        let cfg = SimConfig::default();
        let mut scenario = TrialScenario::frontal();
        scenario.duration = 0.2;
        let log = run_trial(&scenario, Condition::HOnly, &cfg, "h").unwrap();
        assert_eq!(log.ticks.len(), 200);
        assert_eq!(log.observations.len(), 20);
        for w in log.ticks.windows(2) {
            assert!(w[1].time > w[0].time);
        }
    }

    #[test]
    fn human_trajectory_identical_across_conditions() {
        let cfg = SimConfig::default();
        let mut scenario = TrialScenario::lateral();
        scenario.duration = 0.1;
        let a = run_trial(&scenario, Condition::HOnly, &cfg, "h").unwrap();
        let b = run_trial(&scenario, Condition::NoComp, &cfg, "h").unwrap();
        for (ta, tb) in a.ticks.iter().zip(b.ticks.iter()) {
            // Prescribed kinematics (SUP and the trunk-mounted
            // shoulders) must match; mass-derived entries may differ.
            assert_relative_eq!(
                layout::sup_xy(&ta.truth),
                layout::sup_xy(&tb.truth),
                epsilon = 1e-12
            );
            for arm in 0..2 {
                assert_relative_eq!(
                    layout::arm_point(&ta.truth, arm, 0),
                    layout::arm_point(&tb.truth, arm, 0),
                    epsilon = 1e-12
                );
            }
        }
    }

    /// Equilibrium regression: static human (v = 0), no noise, Comp.
    /// Control effort dies out and the CoM stays near its start.
    #[test]
    fn comp_static_human_is_quiescent() {
        let mut cfg = SimConfig::default();
        cfg.noise_sigma = 0.0;
        // No passive offset to fight: start balanced.
        cfg.anthro.backpack_com_offset = Vector3::zeros();
        cfg.home_pose = [[0.0, 0.8, 0.0, 1.6], [0.0, 0.8, 0.0, 1.6]];
        let mut scenario = TrialScenario::frontal();
        scenario.treadmill_speed = 0.0;
        scenario.duration = 1.0;
        // Balance the arms' own backward offset by putting their CoM
        // under the mounts: skip that and just check the distance does
        // not grow and u decays.
        let log = run_trial(&scenario, Condition::Comp, &cfg, "h").unwrap();
        let d0 = {
            let t = &log.ticks[0];
            (layout::com_xy(&t.truth) - layout::sup_xy(&t.truth)).norm()
        };
        let t_end = log.ticks.last().unwrap();
        let d_end = (layout::com_xy(&t_end.truth) - layout::sup_xy(&t_end.truth)).norm();
        assert!(d_end <= d0 + 1e-3, "distance grew: {d0} -> {d_end}");
        let tail_u: f64 = log.ticks[log.ticks.len() - 50..]
            .iter()
            .map(|t| t.u.norm())
            .sum::<f64>()
            / 50.0;
        let head_u: f64 =
            log.ticks[..50].iter().map(|t| t.u.norm()).sum::<f64>() / 50.0;
        assert!(tail_u < head_u + 1e-9, "effort did not decay: {head_u} -> {tail_u}");
    }
}

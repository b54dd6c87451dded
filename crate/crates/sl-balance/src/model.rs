//! Geometric and mass model of the coupled human–SLs system.
//!
//! World frame is z-up; the trunk frame has x forward, y left, z up with
//! its origin at the hip midpoint. "Horizontal projection" always means
//! dropping z.

use nalgebra::{Isometry3, Rotation3, SMatrix, Translation3, UnitQuaternion, Vector2, Vector3};

use crate::{Error, Result};

/// Height of the lower-limb CoM above ground, as a fraction of hip
/// height (Winter anthropometric tables, legs straight and vertical).
pub const LEGS_COM_HEIGHT_RATIO: f64 = 0.53;

/// 6x4 task Jacobian: rows elbow xyz then wrist xyz, columns the four
/// active joints.
pub type TaskJacobian = SMatrix<f64, 6, 4>;

/// Segment masses and geometry of the human plus the fixed backpack.
#[derive(Debug, Clone)]
pub struct AnthropometricParams {
    /// Total body mass, kg.
    pub body_mass: f64,
    /// Body height, m.
    pub body_height: f64,
    /// Trunk mass as a fraction of body mass.
    pub trunk_mass_fraction: f64,
    /// Lower-limb mass as a fraction of body mass.
    pub legs_mass_fraction: f64,
    /// Trunk CoM position along the trunk, as a fraction of trunk
    /// length from the hip.
    pub trunk_com_ratio: f64,
    /// Hip-to-shoulder trunk length, m.
    pub trunk_length: f64,
    /// Fixed backpack mass (power supply, robot bases), kg. Folded
    /// into the trunk for CoM purposes.
    pub backpack_mass: f64,
    /// Backpack CoM offset from the hip midpoint, trunk frame, m.
    pub backpack_com_offset: Vector3<f64>,
}

impl AnthropometricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.body_mass > 0.0 && self.body_height > 0.0 && self.trunk_length > 0.0) {
            return Err(Error::InvalidInput("masses and lengths must be positive".into()));
        }
        let ok_frac = |f: f64| f > 0.0 && f < 1.0;
        if !ok_frac(self.trunk_mass_fraction)
            || !ok_frac(self.legs_mass_fraction)
            || !ok_frac(self.trunk_com_ratio)
        {
            return Err(Error::InvalidInput("mass fractions must lie in (0,1)".into()));
        }
        if self.trunk_mass_fraction + self.legs_mass_fraction > 1.0 {
            return Err(Error::InvalidInput(
                "trunk and legs mass fractions must sum to at most 1".into(),
            ));
        }
        if self.backpack_mass < 0.0 {
            return Err(Error::InvalidInput("backpack mass must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn trunk_mass(&self) -> f64 {
        self.trunk_mass_fraction * self.body_mass
    }

    pub fn legs_mass(&self) -> f64 {
        self.legs_mass_fraction * self.body_mass
    }

    /// Mass of everything the estimator treats as "human": trunk, legs
    /// and the fixed backpack.
    pub fn human_mass(&self) -> f64 {
        self.trunk_mass() + self.legs_mass() + self.backpack_mass
    }
}

impl Default for AnthropometricParams {
    fn default() -> Self {
        // Average adult plus the 30 kg backpack worn during the bow
        // trials; mass fractions and CoM ratios from Winter's tables.
        Self {
            body_mass: 73.7,
            body_height: 1.74,
            trunk_mass_fraction: 0.497,
            legs_mass_fraction: 0.32,
            trunk_com_ratio: 0.5,
            trunk_length: 0.5,
            backpack_mass: 30.0,
            backpack_com_offset: Vector3::new(0.0, 0.0, 0.2),
        }
    }
}

/// Kinematic and mass description of one 4-active-joint SL arm.
///
/// Joint convention: shoulder yaw (about mount z), shoulder pitch
/// (about the yawed y axis), shoulder roll (about the arm axis), elbow
/// pitch. At the zero configuration the arm points along the trunk's
/// backward horizontal axis (-x in the mount frame).
#[derive(Debug, Clone)]
pub struct SlArmModel {
    /// Transform from the trunk frame to the arm base (shoulder).
    pub mount_pose: Isometry3<f64>,
    /// Upper-arm (shoulder to elbow) and forearm (elbow to wrist)
    /// lengths, m.
    pub link_lengths: [f64; 2],
    /// Upper-arm and forearm masses, kg. The segment beyond the wrist
    /// is neglected.
    pub link_masses: [f64; 2],
    /// Position limits per joint, rad.
    pub joint_limits: [(f64, f64); 4],
    /// Velocity limits per joint (symmetric), rad/s.
    pub velocity_limits: [f64; 4],
    /// Acceleration limits per joint (symmetric), rad/s^2.
    pub acceleration_limits: [f64; 4],
}

impl SlArmModel {
    pub fn validate(&self) -> Result<()> {
        if self.link_lengths.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidInput("link lengths must be positive".into()));
        }
        if self.link_masses.iter().any(|&m| m < 0.0) {
            return Err(Error::InvalidInput("link masses must be nonnegative".into()));
        }
        for &(lo, hi) in &self.joint_limits {
            if lo >= hi {
                return Err(Error::InvalidInput("joint limit lower bound must be below upper".into()));
            }
        }
        if self.velocity_limits.iter().chain(self.acceleration_limits.iter()).any(|&v| v <= 0.0) {
            return Err(Error::InvalidInput("velocity/acceleration limits must be positive".into()));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.link_masses[0] + self.link_masses[1]
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths[0] + self.link_lengths[1]
    }

    /// Default arm mounted on the backpack with the given lateral
    /// offset (positive = left side), matching an 8 kg Gen3-class arm
    /// with the wrist assembly lumped out.
    pub fn default_with_lateral_offset(lateral: f64) -> Self {
        Self {
            mount_pose: Isometry3::from_parts(
                Translation3::new(-0.1, lateral, 0.35),
                UnitQuaternion::identity(),
            ),
            link_lengths: [0.31, 0.31],
            link_masses: [4.0, 4.0],
            joint_limits: [(-2.9, 2.9); 4],
            velocity_limits: [1.5; 4],
            acceleration_limits: [10.0; 4],
        }
    }
}

/// Pose of the human skeleton as far as the balance stack needs it.
#[derive(Debug, Clone)]
pub struct HumanKinematicState {
    /// Left hip joint center, world frame, m.
    pub hip_left: Vector3<f64>,
    /// Right hip joint center, world frame, m.
    pub hip_right: Vector3<f64>,
    /// Trunk orientation in the world frame (estimated from the
    /// backpack plane on hardware).
    pub trunk_orientation: Rotation3<f64>,
    /// Accumulated treadmill belt displacement, m (bookkeeping only;
    /// hip positions are already expressed in the world frame).
    pub treadmill_offset: f64,
}

impl HumanKinematicState {
    /// World pose of the trunk frame: origin at the hip midpoint.
    pub fn trunk_pose(&self) -> Isometry3<f64> {
        let mid = (self.hip_left + self.hip_right) * 0.5;
        Isometry3::from_parts(
            Translation3::from(mid),
            UnitQuaternion::from_rotation_matrix(&self.trunk_orientation),
        )
    }
}

/// Mass-weighted CoM decomposition of the full human–SLs system.
#[derive(Debug, Clone)]
pub struct SystemComBreakdown {
    pub human_com: Vector3<f64>,
    pub human_mass: f64,
    /// Per-arm CoM, world frame.
    pub sl_com: [Vector3<f64>; 2],
    pub sl_mass: [f64; 2],
    pub total_com: Vector3<f64>,
    /// Horizontal projection p of the total CoM.
    pub total_com_xy: Vector2<f64>,
    pub total_mass: f64,
}

fn finite3(v: &Vector3<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Center of the human support plane: midpoint of the two hip
/// projections onto the horizontal plane.
pub fn sup_center(hip_left: &Vector3<f64>, hip_right: &Vector3<f64>) -> Result<Vector2<f64>> {
    if !finite3(hip_left) || !finite3(hip_right) {
        return Err(Error::InvalidInput("hip positions must be finite".into()));
    }
    Ok(Vector2::new(
        0.5 * (hip_left.x + hip_right.x),
        0.5 * (hip_left.y + hip_right.y),
    ))
}

/// Human-only CoM (trunk + legs + backpack), world frame.
///
/// The legs are treated as straight and vertical: their CoM sits on the
/// vertical through the support center at a fixed fraction of hip
/// height. The backpack is folded into the trunk as a rigidly attached
/// point mass.
pub fn human_com(state: &HumanKinematicState, anthro: &AnthropometricParams) -> Result<Vector3<f64>> {
    anthro.validate()?;
    let sup = sup_center(&state.hip_left, &state.hip_right)?;
    let hip_mid = (state.hip_left + state.hip_right) * 0.5;
    let r = &state.trunk_orientation;

    let legs_com = Vector3::new(sup.x, sup.y, LEGS_COM_HEIGHT_RATIO * hip_mid.z);
    let trunk_com = hip_mid + r * Vector3::new(0.0, 0.0, anthro.trunk_com_ratio * anthro.trunk_length);
    let backpack_com = hip_mid + r * anthro.backpack_com_offset;

    let m_legs = anthro.legs_mass();
    let m_trunk = anthro.trunk_mass();
    let m_bp = anthro.backpack_mass;
    let total = m_legs + m_trunk + m_bp;
    Ok((legs_com * m_legs + trunk_com * m_trunk + backpack_com * m_bp) / total)
}

/// Forward-kinematics result for one arm.
#[derive(Debug, Clone)]
pub struct ArmPoints {
    pub shoulder: Vector3<f64>,
    pub elbow: Vector3<f64>,
    pub wrist: Vector3<f64>,
    /// False if any joint was outside its position limits (the pose is
    /// still computed).
    pub within_limits: bool,
}

/// Direction of the arm at the zero configuration, mount frame.
const ZERO_AXIS: Vector3<f64> = Vector3::new(-1.0, 0.0, 0.0);

fn shoulder_rotation(q: &[f64; 4]) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), q[0])
        * Rotation3::from_axis_angle(&Vector3::y_axis(), q[1])
        * Rotation3::from_axis_angle(&Vector3::x_axis(), q[2])
}

/// Forward kinematics of the 4-DOF chain: shoulder, elbow and wrist
/// points in the world frame.
pub fn sl_forward_kinematics(
    q: &[f64; 4],
    arm: &SlArmModel,
    trunk_pose: &Isometry3<f64>,
) -> ArmPoints {
    let base = trunk_pose * arm.mount_pose;
    let r0 = base.rotation.to_rotation_matrix();
    let shoulder = base.translation.vector;

    let r_sh = &r0 * shoulder_rotation(q);
    let elbow = shoulder + r_sh * (ZERO_AXIS * arm.link_lengths[0]);
    let r_el = r_sh * Rotation3::from_axis_angle(&Vector3::y_axis(), q[3]);
    let wrist = elbow + r_el * (ZERO_AXIS * arm.link_lengths[1]);

    let within_limits = q
        .iter()
        .zip(arm.joint_limits.iter())
        .all(|(&qi, &(lo, hi))| qi >= lo && qi <= hi);

    ArmPoints { shoulder, elbow, wrist, within_limits }
}

/// Geometric task Jacobian: [elbow xyz; wrist xyz] velocities per unit
/// joint velocity, at fixed trunk pose.
pub fn sl_task_jacobian(
    q: &[f64; 4],
    arm: &SlArmModel,
    trunk_pose: &Isometry3<f64>,
) -> TaskJacobian {
    let base = trunk_pose * arm.mount_pose;
    let r0 = base.rotation.to_rotation_matrix();
    let pts = sl_forward_kinematics(q, arm, trunk_pose);

    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), q[0]);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), q[1]);
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), q[2]);

    // World-frame joint axes and origins.
    let a1 = &r0 * Vector3::z();
    let a2 = &r0 * (rz * Vector3::y());
    let a3 = &r0 * (rz * ry * Vector3::x());
    let a4 = &r0 * (rz * ry * rx * Vector3::y());
    let axes = [a1, a2, a3, a4];
    let origins = [pts.shoulder, pts.shoulder, pts.shoulder, pts.elbow];

    let mut j = TaskJacobian::zeros();
    for (col, (axis, origin)) in axes.iter().zip(origins.iter()).enumerate() {
        // The elbow is proximal to the elbow-pitch joint.
        let ve = if col < 3 { axis.cross(&(pts.elbow - origin)) } else { Vector3::zeros() };
        let vw = axis.cross(&(pts.wrist - origin));
        for r in 0..3 {
            j[(r, col)] = ve[r];
            j[(3 + r, col)] = vw[r];
        }
    }
    j
}

/// Arm CoM under midpoint mass lumping: upper arm at the
/// shoulder–elbow midpoint, forearm at the elbow–wrist midpoint.
pub fn sl_com(q: &[f64; 4], arm: &SlArmModel, trunk_pose: &Isometry3<f64>) -> (Vector3<f64>, f64) {
    let pts = sl_forward_kinematics(q, arm, trunk_pose);
    let m_u = arm.link_masses[0];
    let m_f = arm.link_masses[1];
    let total = m_u + m_f;
    if total == 0.0 {
        // Massless arm: report the geometric center, weightless.
        return ((pts.shoulder + pts.wrist) * 0.5, 0.0);
    }
    let upper = (pts.shoulder + pts.elbow) * 0.5;
    let fore = (pts.elbow + pts.wrist) * 0.5;
    ((upper * m_u + fore * m_f) / total, total)
}

/// Full-system CoM breakdown for the human plus both arms.
pub fn system_com(
    human: &HumanKinematicState,
    anthro: &AnthropometricParams,
    arms: &[SlArmModel; 2],
    q1: &[f64; 4],
    q2: &[f64; 4],
) -> Result<SystemComBreakdown> {
    let h_com = human_com(human, anthro)?;
    let h_mass = anthro.human_mass();
    let trunk = human.trunk_pose();
    let (c1, m1) = sl_com(q1, &arms[0], &trunk);
    let (c2, m2) = sl_com(q2, &arms[1], &trunk);

    let total_mass = h_mass + m1 + m2;
    let total_com = (h_com * h_mass + c1 * m1 + c2 * m2) / total_mass;
    Ok(SystemComBreakdown {
        human_com: h_com,
        human_mass: h_mass,
        sl_com: [c1, c2],
        sl_mass: [m1, m2],
        total_com,
        total_com_xy: total_com.xy(),
        total_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn upright_human() -> HumanKinematicState {
        HumanKinematicState {
            hip_left: Vector3::new(0.0, 0.1, 0.9),
            hip_right: Vector3::new(0.0, -0.1, 0.9),
            trunk_orientation: Rotation3::identity(),
            treadmill_offset: 0.0,
        }
    }

    fn test_arm() -> SlArmModel {
        SlArmModel::default_with_lateral_offset(0.2)
    }

    fn random_q(rng: &mut StdRng) -> [f64; 4] {
        [(); 4].map(|_| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn sup_center_symmetry_and_midpoint() {
        let s = sup_center(&Vector3::new(-0.1, 0.0, 0.9), &Vector3::new(0.1, 0.0, 0.9)).unwrap();
        assert_eq!(s, Vector2::new(0.0, 0.0));
        let s = sup_center(&Vector3::new(0.2, 0.4, 0.9), &Vector3::new(0.4, 0.4, 0.9)).unwrap();
        assert_relative_eq!(s, Vector2::new(0.3, 0.4), epsilon = 1e-15);
    }

    #[test]
    fn sup_center_random_matches_midpoint_oracle() {
        let mut rng = StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let a = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let b = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let s = sup_center(&a, &b).unwrap();
            assert_relative_eq!(s.x, (a.x + b.x) / 2.0, epsilon = 1e-15);
            assert_relative_eq!(s.y, (a.y + b.y) / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn sup_center_rejects_non_finite() {
        let bad = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(sup_center(&bad, &Vector3::zeros()).is_err());
    }

    #[test]
    fn human_com_upright_sits_on_sup_vertical() {
        let mut anthro = AnthropometricParams::default();
        anthro.backpack_com_offset = Vector3::new(0.0, 0.0, 0.4);
        let h = upright_human();
        let com = human_com(&h, &anthro).unwrap();
        assert_relative_eq!(com.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(com.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn human_com_pitched_trunk_shift() {
        // Trunk and legs split the mass evenly; no backpack. The
        // horizontal shift is the trunk lever times sin(theta), halved.
        let anthro = AnthropometricParams {
            trunk_mass_fraction: 0.5,
            legs_mass_fraction: 0.5,
            backpack_mass: 0.0,
            ..AnthropometricParams::default()
        };
        let theta = 30f64.to_radians();
        let mut h = upright_human();
        h.trunk_orientation = Rotation3::from_axis_angle(&Vector3::y_axis(), theta);
        let com = human_com(&h, &anthro).unwrap();
        let expected = 0.5 * anthro.trunk_com_ratio * anthro.trunk_length * theta.sin();
        assert_relative_eq!(com.x, expected, epsilon = 1e-12);
    }

    #[test]
    fn human_com_legs_dominate_limit() {
        let anthro = AnthropometricParams {
            trunk_mass_fraction: 1e-9,
            legs_mass_fraction: 0.999,
            backpack_mass: 0.0,
            ..AnthropometricParams::default()
        };
        let mut h = upright_human();
        h.trunk_orientation = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.8);
        let com = human_com(&h, &anthro).unwrap();
        assert!(com.x.abs() < 1e-9);
        assert!(com.y.abs() < 1e-9);
    }

    #[test]
    fn fk_zero_configuration() {
        let arm = test_arm();
        let trunk = Isometry3::identity();
        let pts = sl_forward_kinematics(&[0.0; 4], &arm, &trunk);
        let d = Vector3::new(-1.0, 0.0, 0.0);
        assert_relative_eq!(pts.elbow, pts.shoulder + d * arm.link_lengths[0], epsilon = 1e-14);
        assert_relative_eq!(pts.wrist, pts.elbow + d * arm.link_lengths[1], epsilon = 1e-14);
        assert!(pts.within_limits);
    }

    #[test]
    fn fk_link_length_conservation() {
        let arm = test_arm();
        let trunk = Isometry3::identity();
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..1000 {
            let q = random_q(&mut rng);
            let pts = sl_forward_kinematics(&q, &arm, &trunk);
            assert_relative_eq!((pts.elbow - pts.shoulder).norm(), arm.link_lengths[0], epsilon = 1e-12);
            assert_relative_eq!((pts.wrist - pts.elbow).norm(), arm.link_lengths[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn fk_rigid_transform_equivariance() {
        let arm = test_arm();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let q = random_q(&mut rng);
            let t = Isometry3::from_parts(
                Translation3::new(rng.gen_range(-1.0..1.0), rng.gen(), rng.gen()),
                UnitQuaternion::from_euler_angles(rng.gen_range(-1.0..1.0), rng.gen(), rng.gen()),
            );
            let base = sl_forward_kinematics(&q, &arm, &Isometry3::identity());
            let moved = sl_forward_kinematics(&q, &arm, &t);
            let xf = |v: &Vector3<f64>| t.transform_point(&nalgebra::Point3::from(*v)).coords;
            assert_relative_eq!(moved.shoulder, xf(&base.shoulder), epsilon = 1e-12);
            assert_relative_eq!(moved.elbow, xf(&base.elbow), epsilon = 1e-12);
            assert_relative_eq!(moved.wrist, xf(&base.wrist), epsilon = 1e-12);
        }
    }

    #[test]
    fn fk_flags_out_of_limit_joints() {
        let arm = test_arm();
        let pts = sl_forward_kinematics(&[3.5, 0.0, 0.0, 0.0], &arm, &Isometry3::identity());
        assert!(!pts.within_limits);
    }

    fn finite_difference_jacobian(
        q: &[f64; 4],
        arm: &SlArmModel,
        trunk: &Isometry3<f64>,
    ) -> TaskJacobian {
        let h = 1e-6;
        let mut j = TaskJacobian::zeros();
        for c in 0..4 {
            let mut qp = *q;
            let mut qm = *q;
            qp[c] += h;
            qm[c] -= h;
            let fp = sl_forward_kinematics(&qp, arm, trunk);
            let fm = sl_forward_kinematics(&qm, arm, trunk);
            let de = (fp.elbow - fm.elbow) / (2.0 * h);
            let dw = (fp.wrist - fm.wrist) / (2.0 * h);
            for r in 0..3 {
                j[(r, c)] = de[r];
                j[(3 + r, c)] = dw[r];
            }
        }
        j
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let arm = test_arm();
        let trunk = Isometry3::identity();
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..100 {
            let q = random_q(&mut rng);
            let j = sl_task_jacobian(&q, &arm, &trunk);
            let jfd = finite_difference_jacobian(&q, &arm, &trunk);
            assert!((j - jfd).abs().max() <= 1e-6, "max err {}", (j - jfd).abs().max());
        }
    }

    #[test]
    fn jacobian_elbow_rows_ignore_elbow_joint() {
        let arm = test_arm();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let q = random_q(&mut rng);
            let j = sl_task_jacobian(&q, &arm, &Isometry3::identity());
            for r in 0..3 {
                assert_eq!(j[(r, 3)], 0.0);
            }
        }
    }

    #[test]
    fn jacobian_rank_deficient_when_stretched() {
        let arm = test_arm();
        let j = sl_task_jacobian(&[0.0; 4], &arm, &Isometry3::identity());
        let svd = j.svd(false, false);
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9).count();
        assert!(rank < 4, "stretched arm should be singular, rank {rank}");
    }

    #[test]
    fn sl_com_symmetric_and_degenerate_masses() {
        let mut arm = test_arm();
        let trunk = Isometry3::identity();
        // Straight arm, equal masses: CoM midway between shoulder and wrist.
        let (com, mass) = sl_com(&[0.0; 4], &arm, &trunk);
        let pts = sl_forward_kinematics(&[0.0; 4], &arm, &trunk);
        assert_relative_eq!(com, (pts.shoulder + pts.wrist) * 0.5, epsilon = 1e-12);
        assert_relative_eq!(mass, 8.0);
        // All mass in the upper arm.
        arm.link_masses = [8.0, 0.0];
        let (com, _) = sl_com(&[0.3, -0.4, 0.5, 1.0], &arm, &trunk);
        let pts = sl_forward_kinematics(&[0.3, -0.4, 0.5, 1.0], &arm, &trunk);
        assert_relative_eq!(com, (pts.shoulder + pts.elbow) * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn sl_com_matches_barycenter_oracle() {
        let arm = SlArmModel {
            link_masses: [3.0, 5.0],
            ..test_arm()
        };
        let trunk = Isometry3::identity();
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..100 {
            let q = random_q(&mut rng);
            let (com, mass) = sl_com(&q, &arm, &trunk);
            let pts = sl_forward_kinematics(&q, &arm, &trunk);
            let expected = ((pts.shoulder + pts.elbow) * 0.5 * 3.0
                + (pts.elbow + pts.wrist) * 0.5 * 5.0)
                / 8.0;
            assert_relative_eq!(com, expected, epsilon = 1e-12);
            assert_relative_eq!(mass, 8.0);
        }
    }

    #[test]
    fn system_com_massless_arms_equals_human() {
        let anthro = AnthropometricParams::default();
        let mut arms = [test_arm(), SlArmModel::default_with_lateral_offset(-0.2)];
        arms[0].link_masses = [0.0, 0.0];
        arms[1].link_masses = [0.0, 0.0];
        let h = upright_human();
        let b = system_com(&h, &anthro, &arms, &[0.1, 0.2, 0.3, 0.4], &[0.4, 0.3, 0.2, 0.1]).unwrap();
        assert_relative_eq!(b.total_com, b.human_com, epsilon = 1e-12);
        assert_relative_eq!(b.total_mass, anthro.human_mass(), epsilon = 1e-12);
    }

    #[test]
    fn system_com_mirrored_arms_keep_lateral_symmetry() {
        let mut anthro = AnthropometricParams::default();
        anthro.backpack_com_offset.y = 0.0;
        let arms = [test_arm(), SlArmModel::default_with_lateral_offset(-0.2)];
        let h = upright_human();
        // Mirror about the sagittal (xz) plane: negate yaw and roll.
        let q1 = [0.5, -0.3, 0.2, 1.1];
        let q2 = [-0.5, -0.3, -0.2, 1.1];
        let b = system_com(&h, &anthro, &arms, &q1, &q2).unwrap();
        let sup = sup_center(&h.hip_left, &h.hip_right).unwrap();
        assert_relative_eq!(b.total_com_xy.y, sup.y, epsilon = 1e-12);
    }

    #[test]
    fn system_com_matches_flat_sum_oracle() {
        let anthro = AnthropometricParams::default();
        let arms = [test_arm(), SlArmModel::default_with_lateral_offset(-0.2)];
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let mut h = upright_human();
            h.trunk_orientation = Rotation3::from_euler_angles(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let q1 = random_q(&mut rng);
            let q2 = random_q(&mut rng);
            let b = system_com(&h, &anthro, &arms, &q1, &q2).unwrap();

            // Flat mass-weighted sum over every point mass.
            let trunk = h.trunk_pose();
            let hip_mid = (h.hip_left + h.hip_right) * 0.5;
            let sup = sup_center(&h.hip_left, &h.hip_right).unwrap();
            let mut acc = Vector3::zeros();
            let mut mass = 0.0;
            let mut add = |p: Vector3<f64>, m: f64| {
                acc += p * m;
                mass += m;
            };
            add(Vector3::new(sup.x, sup.y, LEGS_COM_HEIGHT_RATIO * hip_mid.z), anthro.legs_mass());
            add(
                hip_mid
                    + h.trunk_orientation
                        * Vector3::new(0.0, 0.0, anthro.trunk_com_ratio * anthro.trunk_length),
                anthro.trunk_mass(),
            );
            add(hip_mid + h.trunk_orientation * anthro.backpack_com_offset, anthro.backpack_mass);
            for (arm, q) in arms.iter().zip([&q1, &q2]) {
                let pts = sl_forward_kinematics(q, arm, &trunk);
                add((pts.shoulder + pts.elbow) * 0.5, arm.link_masses[0]);
                add((pts.elbow + pts.wrist) * 0.5, arm.link_masses[1]);
            }
            let flat = acc / mass;
            assert!((b.total_com - flat).norm() / flat.norm().max(1.0) <= 1e-12);
            assert_relative_eq!(b.total_mass, mass, max_relative = 1e-12);
        }
    }
}

//! Body motion descriptors fed to the network.
//!
//! Per active joint, the static descriptor is 9 numbers: the first two
//! columns of the joint's local rotation matrix (a continuous 6D rotation
//! encoding) plus the gravity direction unposed into the joint's global
//! frame. The dynamic descriptor is 12 numbers: the time derivative of the
//! static descriptor plus the joint's world acceleration unposed (and not
//! normalized) into its global frame. Unposing makes both invariant to
//! rotations of the whole motion about the gravity axis.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::body::{forward_kinematics, hemisphere, Pose, Skeleton};
use crate::error::{Error, Result};

/// Width of one static descriptor row.
pub const STATIC_WIDTH: usize = 9;
/// Width of one dynamic descriptor row.
pub const DYNAMIC_WIDTH: usize = 12;

/// Static and dynamic descriptor rows for the active joints of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorFrame {
    /// K x 9: 6D local rotation + unposed gravity unit vector.
    pub static_desc: Vec<[f64; STATIC_WIDTH]>,
    /// K x 12: d/dt of the static rows + unposed joint acceleration (m/s^2).
    pub dynamic_desc: Vec<[f64; DYNAMIC_WIDTH]>,
}

/// Remove the rotation about the gravity (Y) axis from a rotation: the
/// residual of the left swing-twist split q = yaw * residual. Invariant
/// under pre-rotation of q about Y.
fn strip_yaw(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let (w, y) = (q.w, q.j);
    let n = (w * w + y * y).sqrt();
    if n < 1e-12 {
        // The rotation is a half turn about a horizontal axis; yaw is
        // undefined, keep the rotation as is.
        return q;
    }
    let yaw = UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(w / n, 0.0, y / n, 0.0));
    hemisphere(yaw.inverse() * q)
}

/// The rotation whose first two matrix columns make up a joint's 6D entry:
/// the parent-relative local rotation, except for the root where the
/// heading (rotation about gravity) is stripped so the descriptor stays
/// invariant to rotating the whole motion about the gravity axis.
fn six_d_rotation(skel: &Skeleton, pose: &Pose, joint: usize) -> Matrix3<f64> {
    let local = skel.rest_transforms[joint].rotation * pose.joint_rotations[joint];
    let q = if skel.parents[joint].is_none() { strip_yaw(local) } else { local };
    q.to_rotation_matrix().into_inner()
}

fn static_row(skel: &Skeleton, pose: &Pose, globals: &[nalgebra::Isometry3<f64>], j: usize) -> [f64; 9] {
    let m = six_d_rotation(skel, pose, j);
    // Unposed gravity direction: R_j^-1 g / |g| with R_j the global rotation.
    let g_hat = globals[j].rotation.inverse() * Vector3::new(0.0, -1.0, 0.0);
    [
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
        g_hat.x,
        g_hat.y,
        g_hat.z,
    ]
}

/// Static descriptor over all joints (K_total rows).
pub fn static_descriptor_full(pose: &Pose, skel: &Skeleton) -> Result<Vec<[f64; 9]>> {
    let globals = forward_kinematics(skel, pose)?;
    Ok((0..skel.num_joints()).map(|j| static_row(skel, pose, &globals, j)).collect())
}

/// Static descriptor restricted to active joints (K rows).
pub fn static_descriptor(pose: &Pose, skel: &Skeleton) -> Result<Vec<[f64; 9]>> {
    prune_joints(static_descriptor_full(pose, skel)?, &skel.active_mask)
}

/// Dynamic descriptor over all joints for a window of 3 consecutive poses
/// (t-2, t-1, t) at uniform spacing `dt`.
///
/// Columns 0..9 are the backward difference of the static descriptor;
/// columns 9..12 are the 3-point second difference of the global joint
/// position, unposed by the joint's global rotation at time t. Identical
/// poses produce an exactly zero row.
pub fn dynamic_descriptor_full(
    window: &[Pose; 3],
    dt: f64,
    skel: &Skeleton,
) -> Result<Vec<[f64; 12]>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("descriptor dt must be > 0, got {dt}")));
    }
    let [p2, p1, p0] = window; // p0 = t, p1 = t-1, p2 = t-2
    let g0 = forward_kinematics(skel, p0)?;
    let g1 = forward_kinematics(skel, p1)?;
    let g2 = forward_kinematics(skel, p2)?;
    let s0 = (0..skel.num_joints()).map(|j| static_row(skel, p0, &g0, j)).collect::<Vec<_>>();
    let s1 = (0..skel.num_joints()).map(|j| static_row(skel, p1, &g1, j)).collect::<Vec<_>>();

    let mut out = Vec::with_capacity(skel.num_joints());
    for j in 0..skel.num_joints() {
        let mut row = [0.0; 12];
        for c in 0..9 {
            row[c] = (s0[j][c] - s1[j][c]) / dt;
        }
        let accel = (g0[j].translation.vector - g1[j].translation.vector * 2.0
            + g2[j].translation.vector)
            / (dt * dt);
        let local = g0[j].rotation.inverse() * accel;
        row[9] = local.x;
        row[10] = local.y;
        row[11] = local.z;
        out.push(row);
    }
    Ok(out)
}

/// Dynamic descriptor restricted to active joints.
pub fn dynamic_descriptor(window: &[Pose; 3], dt: f64, skel: &Skeleton) -> Result<Vec<[f64; 12]>> {
    prune_joints(dynamic_descriptor_full(window, dt, skel)?, &skel.active_mask)
}

/// Restrict descriptor rows to the active joints, order preserved.
pub fn prune_joints<T>(rows: Vec<T>, active_mask: &[bool]) -> Result<Vec<T>> {
    if rows.len() != active_mask.len() {
        return Err(Error::Shape(format!(
            "{} descriptor rows for {} mask entries",
            rows.len(),
            active_mask.len()
        )));
    }
    if !active_mask.iter().any(|&a| a) {
        return Err(Error::Config("active joint mask selects no joints".into()));
    }
    Ok(rows
        .into_iter()
        .zip(active_mask)
        .filter_map(|(r, &a)| a.then_some(r))
        .collect())
}

/// Descriptor frames for a pose window, front-padded with copies of the
/// first frame so every position has a full 3-pose stencil.
pub fn window_descriptors(
    frames: &[Pose],
    dt: f64,
    skel: &Skeleton,
) -> Result<Vec<DescriptorFrame>> {
    let mut out = Vec::with_capacity(frames.len());
    for i in 0..frames.len() {
        let p0 = frames[i].clone();
        let p1 = frames[i.saturating_sub(1)].clone();
        let p2 = frames[i.saturating_sub(2)].clone();
        out.push(DescriptorFrame {
            static_desc: static_descriptor(&p0, skel)?,
            dynamic_desc: dynamic_descriptor(&[p2, p1, p0], dt, skel)?,
        });
    }
    Ok(out)
}

/// Static descriptor variants for the descriptor ablation. The default is
/// the 6D + unposed-gravity form; the others reproduce the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StaticDescriptorKind {
    #[default]
    SixDGravity,
    SixD,
    Quaternion,
}

/// Dynamic descriptor variants: unposed derivatives (default), raw
/// world-space derivatives, or the minimal pose + root-velocity baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DynamicDescriptorKind {
    #[default]
    LocalSpace,
    FullSpace,
    RootVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorKinds {
    pub statics: StaticDescriptorKind,
    pub dynamics: DynamicDescriptorKind,
}

impl StaticDescriptorKind {
    pub fn width(&self) -> usize {
        match self {
            StaticDescriptorKind::SixDGravity => 9,
            StaticDescriptorKind::SixD => 6,
            StaticDescriptorKind::Quaternion => 4,
        }
    }
}

impl DynamicDescriptorKind {
    pub fn width(&self) -> usize {
        match self {
            DynamicDescriptorKind::LocalSpace => 12,
            DynamicDescriptorKind::FullSpace => 12,
            DynamicDescriptorKind::RootVelocity => 3,
        }
    }
}

/// Static descriptor rows (active joints) for a given variant.
pub fn static_rows(
    pose: &Pose,
    skel: &Skeleton,
    kind: StaticDescriptorKind,
) -> Result<Vec<Vec<f64>>> {
    match kind {
        StaticDescriptorKind::SixDGravity => {
            Ok(static_descriptor(pose, skel)?.into_iter().map(|r| r.to_vec()).collect())
        }
        StaticDescriptorKind::SixD => Ok(static_descriptor(pose, skel)?
            .into_iter()
            .map(|r| r[..6].to_vec())
            .collect()),
        StaticDescriptorKind::Quaternion => {
            let rows = (0..skel.num_joints())
                .map(|j| {
                    let q = if skel.parents[j].is_none() {
                        strip_yaw(skel.rest_transforms[j].rotation * pose.joint_rotations[j])
                    } else {
                        skel.rest_transforms[j].rotation * pose.joint_rotations[j]
                    };
                    let q = hemisphere(q);
                    vec![q.w, q.i, q.j, q.k]
                })
                .collect();
            prune_joints(rows, &skel.active_mask)
        }
    }
}

/// Dynamic descriptor rows (active joints) for a given variant.
pub fn dynamic_rows(
    window: &[Pose; 3],
    dt: f64,
    skel: &Skeleton,
    kind: DynamicDescriptorKind,
) -> Result<Vec<Vec<f64>>> {
    match kind {
        DynamicDescriptorKind::LocalSpace => {
            Ok(dynamic_descriptor(window, dt, skel)?.into_iter().map(|r| r.to_vec()).collect())
        }
        DynamicDescriptorKind::FullSpace => {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("descriptor dt must be > 0, got {dt}")));
            }
            let [p2, p1, p0] = window;
            let g0 = forward_kinematics(skel, p0)?;
            let g1 = forward_kinematics(skel, p1)?;
            let g2 = forward_kinematics(skel, p2)?;
            let rows = (0..skel.num_joints())
                .map(|j| {
                    // world-frame 6D derivative + world acceleration
                    let m0 = g0[j].rotation.to_rotation_matrix().into_inner();
                    let m1 = g1[j].rotation.to_rotation_matrix().into_inner();
                    let mut row = Vec::with_capacity(12);
                    for c in 0..2 {
                        for r in 0..3 {
                            row.push((m0[(r, c)] - m1[(r, c)]) / dt);
                        }
                    }
                    // pad derivative block to 9 like the local variant
                    for r in 0..3 {
                        row.push((m0[(r, 2)] - m1[(r, 2)]) / dt);
                    }
                    let accel = (g0[j].translation.vector - g1[j].translation.vector * 2.0
                        + g2[j].translation.vector)
                        / (dt * dt);
                    row.extend_from_slice(&[accel.x, accel.y, accel.z]);
                    row
                })
                .collect();
            prune_joints(rows, &skel.active_mask)
        }
        DynamicDescriptorKind::RootVelocity => {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("descriptor dt must be > 0, got {dt}")));
            }
            let [_, p1, p0] = window;
            let g0 = forward_kinematics(skel, p0)?;
            let g1 = forward_kinematics(skel, p1)?;
            let v = (g0[0].translation.vector - g1[0].translation.vector) / dt;
            let rows = (0..skel.num_joints()).map(|_| vec![v.x, v.y, v.z]).collect();
            prune_joints(rows, &skel.active_mask)
        }
    }
}

/// Per-frame (static rows, dynamic rows) for a pose window with the first
/// frame replicated to fill the finite-difference stencil.
pub fn window_rows(
    frames: &[Pose],
    dt: f64,
    skel: &Skeleton,
    kinds: DescriptorKinds,
) -> Result<Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>> {
    let mut out = Vec::with_capacity(frames.len());
    for i in 0..frames.len() {
        let p0 = frames[i].clone();
        let p1 = frames[i.saturating_sub(1)].clone();
        let p2 = frames[i.saturating_sub(2)].clone();
        out.push((
            static_rows(&p0, skel, kinds.statics)?,
            dynamic_rows(&[p2, p1, p0], dt, skel, kinds.dynamics)?,
        ));
    }
    Ok(out)
}

/// Rotate a whole motion about the gravity axis: the root's global
/// orientation is pre-rotated by `angle` about +Y (expressed back through
/// the root's rest rotation) and the root translation rotates with it.
/// Descriptors are expected to be invariant under this transform.
pub fn rotate_motion_about_gravity(pose: &Pose, skel: &Skeleton, angle: f64) -> Pose {
    let r = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle);
    let rest = skel.rest_transforms[0].rotation;
    let mut rotations = pose.joint_rotations.clone();
    rotations[0] = rest.inverse() * r * rest * rotations[0];
    Pose::new(rotations, r * pose.root_translation)
}

/// Mirror a pose across the skeleton's sagittal plane: reflect every
/// rotation and the root translation, then swap left/right joint pairs.
pub fn mirror_pose(pose: &Pose, skel: &Skeleton) -> Pose {
    let axis = skel.mirror.axis;
    let reflect = |q: &UnitQuaternion<f64>| -> UnitQuaternion<f64> {
        // Conjugation by the reflection S: R' = S R S. In quaternion terms
        // the vector components parallel to the plane flip sign.
        let mut v = [q.i, q.j, q.k];
        for (i, c) in v.iter_mut().enumerate() {
            if i != axis {
                *c = -*c;
            }
        }
        hemisphere(UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(
            q.w, v[0], v[1], v[2],
        )))
    };
    let mut rotations = vec![UnitQuaternion::identity(); pose.joint_rotations.len()];
    for j in 0..pose.joint_rotations.len() {
        rotations[skel.mirrored_joint(j)] = reflect(&pose.joint_rotations[j]);
    }
    let mut root = pose.root_translation;
    root[axis] = -root[axis];
    Pose { joint_rotations: rotations, root_translation: root }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{MirrorMap, Skeleton};
    use crate::synth::pendulum_skeleton;
    use nalgebra::{Isometry3, UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};

    fn rand_pose(skel: &Skeleton, rng: &mut impl Rng) -> Pose {
        Pose::new(
            (0..skel.num_joints())
                .map(|_| {
                    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ))
                })
                .collect(),
            Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ),
        )
    }

    #[test]
    fn identity_pose_identity_rest_gives_canonical_rows() {
        let skel = Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![None, Some(0)],
            vec![Isometry3::identity(); 2],
            MirrorMap::default(),
            vec![true; 2],
        )
        .unwrap();
        let rows = static_descriptor(&Pose::identity(2), &skel).unwrap();
        for row in rows {
            assert_eq!(&row[..6], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
            assert_eq!(&row[6..], &[0.0, -1.0, 0.0]);
        }
    }

    #[test]
    fn gravity_column_unposes_global_rotation() {
        // Joint globally rotated 90 degrees about X: g_hat = R^T (0,-1,0) = (0,0,1).
        let skel = Skeleton::new(
            vec!["a".into()],
            vec![None],
            vec![Isometry3::identity()],
            MirrorMap::default(),
            vec![true],
        )
        .unwrap();
        let mut pose = Pose::identity(1);
        pose.joint_rotations[0] =
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2);
        let rows = static_descriptor(&pose, &skel).unwrap();
        let g = &rows[0][6..];
        assert!((g[0] - 0.0).abs() < 1e-12 && (g[1] - 0.0).abs() < 1e-12);
        assert!((g[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gravity_column_has_unit_norm_and_reconstructs() {
        let skel = pendulum_skeleton();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pose = rand_pose(&skel, &mut rng);
            let globals = forward_kinematics(&skel, &pose).unwrap();
            let rows = static_descriptor_full(&pose, &skel).unwrap();
            for (j, row) in rows.iter().enumerate() {
                let g = Vector3::new(row[6], row[7], row[8]);
                assert!((g.norm() - 1.0).abs() < 1e-12);
                // R_j g_hat must be parallel to world gravity
                let back = globals[j].rotation * g;
                assert!((back - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn descriptors_invariant_to_rotation_about_gravity() {
        let skel = pendulum_skeleton();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let p0 = rand_pose(&skel, &mut rng);
            let p1 = rand_pose(&skel, &mut rng);
            let p2 = rand_pose(&skel, &mut rng);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);

            let s = static_descriptor(&p0, &skel).unwrap();
            let s_rot =
                static_descriptor(&rotate_motion_about_gravity(&p0, &skel, angle), &skel).unwrap();
            for (a, b) in s.iter().zip(&s_rot) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-6, "static entry moved: {x} vs {y}");
                }
            }

            let w = [p2.clone(), p1.clone(), p0.clone()];
            let wr = [
                rotate_motion_about_gravity(&p2, &skel, angle),
                rotate_motion_about_gravity(&p1, &skel, angle),
                rotate_motion_about_gravity(&p0, &skel, angle),
            ];
            let d = dynamic_descriptor(&w, 1.0 / 30.0, &skel).unwrap();
            let d_rot = dynamic_descriptor(&wr, 1.0 / 30.0, &skel).unwrap();
            for (a, b) in d.iter().zip(&d_rot) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-6, "dynamic entry moved: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn constant_pose_window_gives_exact_zero() {
        let skel = pendulum_skeleton();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let pose = rand_pose(&skel, &mut rng);
        let d = dynamic_descriptor(&[pose.clone(), pose.clone(), pose.clone()], 1.0 / 30.0, &skel)
            .unwrap();
        for row in &d {
            for &v in row {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn constant_velocity_root_has_zero_acceleration_columns() {
        let skel = pendulum_skeleton();
        let make = |k: f64| {
            let mut p = Pose::identity(skel.num_joints());
            p.root_translation = Vector3::new(0.25 * k, 0.0, 0.0);
            p
        };
        let d = dynamic_descriptor(&[make(0.0), make(1.0), make(2.0)], 1.0 / 30.0, &skel).unwrap();
        for row in &d {
            for &v in &row[9..] {
                assert!(v.abs() < 1e-9, "acceleration column {v}");
            }
        }
    }

    #[test]
    fn constant_acceleration_shows_in_acceleration_columns() {
        let skel = pendulum_skeleton();
        let dt = 1.0 / 30.0;
        let a = 3.0; // m/s^2 downward
        let make = |k: f64| {
            let mut p = Pose::identity(skel.num_joints());
            let t = k * dt;
            p.root_translation = Vector3::new(0.0, -0.5 * a * t * t, 0.0);
            p
        };
        let d = dynamic_descriptor(&[make(0.0), make(1.0), make(2.0)], dt, &skel).unwrap();
        for row in &d {
            assert!((row[9] - 0.0).abs() < 1e-9);
            assert!((row[10] + a).abs() < 1e-9, "expected -{a}, got {}", row[10]);
            assert!((row[11] - 0.0).abs() < 1e-9);
        }
    }

    #[test]
    fn six_d_is_sign_invariant_in_quaternion() {
        let skel = pendulum_skeleton();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let pose = rand_pose(&skel, &mut rng);
        // Negate in place to dodge the hemisphere normalization in Pose::new.
        let mut negated = pose.clone();
        for q in &mut negated.joint_rotations {
            *q = UnitQuaternion::new_unchecked(-q.into_inner());
        }
        let a = static_descriptor(&pose, &skel).unwrap();
        let b = static_descriptor(&negated, &skel).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prune_commutes_with_compute() {
        let mut skel = pendulum_skeleton();
        skel.active_mask = vec![true, false, true, false];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let pose = rand_pose(&skel, &mut rng);
        let pruned_after = prune_joints(static_descriptor_full(&pose, &skel).unwrap(), &skel.active_mask).unwrap();
        let pruned_inside = static_descriptor(&pose, &skel).unwrap();
        assert_eq!(pruned_after, pruned_inside);
        assert_eq!(pruned_inside.len(), 2);
    }

    #[test]
    fn prune_rejects_empty_mask() {
        let err = prune_joints(vec![[0.0; 9]; 3], &[false, false, false]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    fn mirrored_skeleton() -> Skeleton {
        // root with symmetric left/right children along X
        Skeleton::new(
            vec!["root".into(), "l".into(), "r".into()],
            vec![None, Some(0), Some(0)],
            vec![
                Isometry3::translation(0.0, 1.0, 0.0),
                Isometry3::translation(0.3, -0.1, 0.0),
                Isometry3::translation(-0.3, -0.1, 0.0),
            ],
            MirrorMap { pairs: vec![(1, 2)], axis: 0 },
            vec![true; 3],
        )
        .unwrap()
    }

    #[test]
    fn mirror_identity_is_identity() {
        let skel = mirrored_skeleton();
        let p = Pose::identity(3);
        let m = mirror_pose(&p, &skel);
        assert_eq!(m, p);
    }

    #[test]
    fn mirror_is_involution() {
        let skel = mirrored_skeleton();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let p = rand_pose(&skel, &mut rng);
            let mm = mirror_pose(&mirror_pose(&p, &skel), &skel);
            for (a, b) in p.joint_rotations.iter().zip(&mm.joint_rotations) {
                assert!(a.angle_to(b) < 1e-9);
            }
            assert!((p.root_translation - mm.root_translation).norm() < 1e-12);
        }
    }

    #[test]
    fn mirrored_fk_equals_reflected_fk() {
        let skel = mirrored_skeleton();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let p = rand_pose(&skel, &mut rng);
            let m = mirror_pose(&p, &skel);
            let g = forward_kinematics(&skel, &p).unwrap();
            let gm = forward_kinematics(&skel, &m).unwrap();
            // joint j in the mirrored pose sits at the reflection of the
            // mirrored joint's position in the original pose
            for j in 0..3 {
                let mut expect = g[skel.mirrored_joint(j)].translation.vector;
                expect.x = -expect.x;
                let got = gm[j].translation.vector;
                assert!(
                    (expect - got).norm() < 1e-9,
                    "joint {j}: {expect:?} vs {got:?}"
                );
            }
        }
    }
}

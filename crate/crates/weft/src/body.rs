//! Skeleton forward kinematics, linear blend skinning and pose sequences.
//!
//! World convention is Y-up with gravity along -Y. Poses hold per-joint
//! unit quaternions local to the parent plus a root translation; global
//! transforms come out of [`forward_kinematics`].

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdf;

/// Left/right joint pairing plus the index of the sagittal reflection axis
/// (0 = X, the default).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MirrorMap {
    pub pairs: Vec<(usize, usize)>,
    pub axis: usize,
}

impl Default for MirrorMap {
    fn default() -> Self {
        MirrorMap { pairs: Vec::new(), axis: 0 }
    }
}

/// Joint hierarchy with rest transforms, topologically sorted
/// (every parent precedes its children).
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub joints: Vec<String>,
    pub parents: Vec<Option<usize>>,
    /// Local rest transform per joint (offset from parent + rest rotation).
    pub rest_transforms: Vec<Isometry3<f64>>,
    pub mirror: MirrorMap,
    /// Selects the K joints fed to descriptors; hands/feet/face joints are
    /// typically masked out.
    pub active_mask: Vec<bool>,
}

impl Skeleton {
    pub fn new(
        joints: Vec<String>,
        parents: Vec<Option<usize>>,
        rest_transforms: Vec<Isometry3<f64>>,
        mirror: MirrorMap,
        active_mask: Vec<bool>,
    ) -> Result<Self> {
        let k = joints.len();
        if parents.len() != k || rest_transforms.len() != k || active_mask.len() != k {
            return Err(Error::Shape("skeleton field lengths disagree".into()));
        }
        for (j, p) in parents.iter().enumerate() {
            match p {
                None => {}
                Some(p) if *p < j => {}
                Some(p) => {
                    return Err(Error::Config(format!(
                        "joint {j} has parent {p}; parents must precede children"
                    )))
                }
            }
        }
        // Involution check on the mirror pairs.
        let mut image: BTreeMap<usize, usize> = BTreeMap::new();
        for &(a, b) in &mirror.pairs {
            if a >= k || b >= k || a == b {
                return Err(Error::Config(format!("invalid mirror pair ({a}, {b})")));
            }
            if image.insert(a, b).is_some() || image.insert(b, a).is_some() {
                return Err(Error::Config(format!(
                    "mirror pair ({a}, {b}) overlaps another pair"
                )));
            }
        }
        if mirror.axis > 2 {
            return Err(Error::Config(format!("mirror axis {} out of range", mirror.axis)));
        }
        Ok(Skeleton { joints, parents, rest_transforms, mirror, active_mask })
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn num_active(&self) -> usize {
        self.active_mask.iter().filter(|&&a| a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.num_joints()).filter(|&j| self.active_mask[j]).collect()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|n| n == name)
    }

    /// Mirror image of a joint index; unpaired joints map to themselves.
    pub fn mirrored_joint(&self, j: usize) -> usize {
        for &(a, b) in &self.mirror.pairs {
            if a == j {
                return b;
            }
            if b == j {
                return a;
            }
        }
        j
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: SkeletonFile = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        file.into_skeleton()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = SkeletonFile::from_skeleton(self);
        std::fs::write(path, serde_json::to_string_pretty(&file).expect("serializable"))?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct JointSpec {
    name: String,
    parent: Option<String>,
    offset: [f64; 3],
    #[serde(default)]
    rest_rotation: Option<[f64; 4]>, // [w, x, y, z]
}

#[derive(Serialize, Deserialize)]
struct SkeletonFile {
    joints: Vec<JointSpec>,
    #[serde(default)]
    mirror_pairs: Vec<[String; 2]>,
    #[serde(default)]
    mirror_axis: Option<String>,
    #[serde(default)]
    active: Option<Vec<String>>,
}

impl SkeletonFile {
    fn into_skeleton(self) -> Result<Skeleton> {
        let names: Vec<String> = self.joints.iter().map(|j| j.name.clone()).collect();
        let index = |n: &str| -> Result<usize> {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::Config(format!("unknown joint '{n}'")))
        };
        let mut parents = Vec::new();
        let mut rests = Vec::new();
        for j in &self.joints {
            parents.push(match &j.parent {
                None => None,
                Some(p) => Some(index(p)?),
            });
            let rot = match j.rest_rotation {
                None => UnitQuaternion::identity(),
                Some([w, x, y, z]) => quat_from_wxyz(w, x, y, z)?,
            };
            rests.push(Isometry3::from_parts(
                Translation3::new(j.offset[0], j.offset[1], j.offset[2]),
                rot,
            ));
        }
        let mut pairs = Vec::new();
        for [a, b] in &self.mirror_pairs {
            pairs.push((index(a)?, index(b)?));
        }
        let axis = match self.mirror_axis.as_deref() {
            None | Some("x") => 0,
            Some("y") => 1,
            Some("z") => 2,
            Some(other) => return Err(Error::Config(format!("mirror axis '{other}'"))),
        };
        let active_mask = match &self.active {
            None => vec![true; names.len()],
            Some(list) => {
                let mut mask = vec![false; names.len()];
                for n in list {
                    mask[index(n)?] = true;
                }
                mask
            }
        };
        Skeleton::new(names, parents, rests, MirrorMap { pairs, axis }, active_mask)
    }

    fn from_skeleton(s: &Skeleton) -> Self {
        SkeletonFile {
            joints: (0..s.num_joints())
                .map(|j| {
                    let iso = &s.rest_transforms[j];
                    let q = iso.rotation;
                    JointSpec {
                        name: s.joints[j].clone(),
                        parent: s.parents[j].map(|p| s.joints[p].clone()),
                        offset: [iso.translation.x, iso.translation.y, iso.translation.z],
                        rest_rotation: Some([q.w, q.i, q.j, q.k]),
                    }
                })
                .collect(),
            mirror_pairs: s
                .mirror
                .pairs
                .iter()
                .map(|&(a, b)| [s.joints[a].clone(), s.joints[b].clone()])
                .collect(),
            mirror_axis: Some(["x", "y", "z"][s.mirror.axis].to_string()),
            active: Some(
                s.active_indices().iter().map(|&j| s.joints[j].clone()).collect(),
            ),
        }
    }
}

fn quat_from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<UnitQuaternion<f64>> {
    let q = nalgebra::Quaternion::new(w, x, y, z);
    let n = q.norm();
    if !n.is_finite() || n < 1e-12 {
        return Err(Error::Config(format!("quaternion [{w}, {x}, {y}, {z}] is not normalizable")));
    }
    Ok(hemisphere(UnitQuaternion::from_quaternion(q)))
}

/// Flip a unit quaternion into the w >= 0 hemisphere.
pub fn hemisphere(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Body pose: per-joint local rotations (hemisphere-normalized unit
/// quaternions) plus the root translation in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub joint_rotations: Vec<UnitQuaternion<f64>>,
    pub root_translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotations: Vec<UnitQuaternion<f64>>, root_translation: Vector3<f64>) -> Self {
        Pose {
            joint_rotations: rotations.into_iter().map(hemisphere).collect(),
            root_translation,
        }
    }

    pub fn identity(num_joints: usize) -> Self {
        Pose {
            joint_rotations: vec![UnitQuaternion::identity(); num_joints],
            root_translation: Vector3::zeros(),
        }
    }
}

/// A pose per frame at a fixed frame rate.
#[derive(Debug, Clone)]
pub struct PoseSequence {
    pub frames: Vec<Pose>,
    pub fps: f64,
}

impl PoseSequence {
    pub fn new(frames: Vec<Pose>, fps: f64) -> Result<Self> {
        if !(fps > 0.0) {
            return Err(Error::Config(format!("fps must be > 0, got {fps}")));
        }
        if frames.is_empty() {
            return Err(Error::Config("pose sequence needs at least one frame".into()));
        }
        Ok(PoseSequence { frames, fps })
    }

    pub fn duration(&self) -> f64 {
        (self.frames.len() - 1) as f64 / self.fps
    }

    pub fn load(path: &Path, skel: &Skeleton) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: SequenceFile = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut frames = Vec::with_capacity(file.frames.len());
        for f in &file.frames {
            let mut rot = vec![UnitQuaternion::identity(); skel.num_joints()];
            for (name, &[w, x, y, z]) in &f.rot {
                let j = skel
                    .joint_index(name)
                    .ok_or_else(|| Error::Config(format!("unknown joint '{name}' in sequence")))?;
                rot[j] = quat_from_wxyz(w, x, y, z)?;
            }
            frames.push(Pose::new(rot, Vector3::new(f.root_t[0], f.root_t[1], f.root_t[2])));
        }
        PoseSequence::new(frames, file.fps)
    }

    pub fn save(&self, path: &Path, skel: &Skeleton) -> Result<()> {
        let file = SequenceFile {
            fps: self.fps,
            frames: self
                .frames
                .iter()
                .map(|p| FrameSpec {
                    root_t: [p.root_translation.x, p.root_translation.y, p.root_translation.z],
                    rot: p
                        .joint_rotations
                        .iter()
                        .enumerate()
                        .map(|(j, q)| (skel.joints[j].clone(), [q.w, q.i, q.j, q.k]))
                        .collect(),
                })
                .collect(),
        };
        std::fs::write(path, serde_json::to_string(&file).expect("serializable"))?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SequenceFile {
    fps: f64,
    frames: Vec<FrameSpec>,
}

#[derive(Serialize, Deserialize)]
struct FrameSpec {
    #[serde(default)]
    root_t: [f64; 3],
    #[serde(default)]
    rot: BTreeMap<String, [f64; 4]>,
}

/// Skeleton + skin mesh + skinning weights: the collider and the source of
/// the pose parameterization.
#[derive(Debug, Clone)]
pub struct BodyModel {
    pub skeleton: Skeleton,
    pub skin_vertices: Vec<Vector3<f64>>,
    pub skin_faces: Vec<[usize; 3]>,
    pub skin_weights: Vec<Vec<f64>>,
    rest_globals: Vec<Isometry3<f64>>,
}

impl BodyModel {
    pub fn new(
        skeleton: Skeleton,
        skin_vertices: Vec<Vector3<f64>>,
        skin_faces: Vec<[usize; 3]>,
        skin_weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if skin_weights.len() != skin_vertices.len() {
            return Err(Error::Weight(format!(
                "{} body weight rows for {} vertices",
                skin_weights.len(),
                skin_vertices.len()
            )));
        }
        let k = skeleton.num_joints();
        if skin_weights.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("body weight row width != joint count".into()));
        }
        let rest_globals = forward_kinematics(&skeleton, &Pose::identity(k))?;
        Ok(BodyModel { skeleton, skin_vertices, skin_faces, skin_weights, rest_globals })
    }

    pub fn rest_globals(&self) -> &[Isometry3<f64>] {
        &self.rest_globals
    }

    /// Pose the skeleton and skin the body mesh; normals are recomputed
    /// angle-weighted on the posed geometry.
    pub fn pose(&self, pose: &Pose) -> Result<PosedBody> {
        let globals = forward_kinematics(&self.skeleton, pose)?;
        let skin_transforms = skinning_transforms(&globals, &self.rest_globals);
        let skin_vertices = skin_lbs(&self.skin_vertices, &self.skin_weights, &skin_transforms)?;
        let skin_normals = sdf::angle_weighted_vertex_normals(&skin_vertices, &self.skin_faces);
        Ok(PosedBody { global_transforms: globals, skin_vertices, skin_normals })
    }
}

/// Posed skeleton transforms plus the skinned body surface.
#[derive(Debug, Clone)]
pub struct PosedBody {
    pub global_transforms: Vec<Isometry3<f64>>,
    pub skin_vertices: Vec<Vector3<f64>>,
    pub skin_normals: Vec<Vector3<f64>>,
}

/// Accumulate local transforms down the hierarchy.
///
/// Local transform of joint j is rest_j composed with the pose rotation;
/// the root additionally gets the pose's root translation in front.
pub fn forward_kinematics(skel: &Skeleton, pose: &Pose) -> Result<Vec<Isometry3<f64>>> {
    let k = skel.num_joints();
    if pose.joint_rotations.len() != k {
        return Err(Error::Shape(format!(
            "pose has {} rotations for {k} joints",
            pose.joint_rotations.len()
        )));
    }
    let mut globals: Vec<Isometry3<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let local = skel.rest_transforms[j]
            * Isometry3::from_parts(Translation3::identity(), pose.joint_rotations[j]);
        let global = match skel.parents[j] {
            None => {
                Isometry3::from_parts(
                    Translation3::from(pose.root_translation),
                    UnitQuaternion::identity(),
                ) * local
            }
            Some(p) => globals[p] * local,
        };
        globals.push(global);
    }
    Ok(globals)
}

/// Per-joint skinning transform G_j * inv(G_j^rest).
pub fn skinning_transforms(
    posed: &[Isometry3<f64>],
    rest: &[Isometry3<f64>],
) -> Vec<Isometry3<f64>> {
    posed.iter().zip(rest).map(|(g, r)| g * r.inverse()).collect()
}

/// Linear blend skinning: x' = sum_j w_j (G_j inv(G_j^rest)) x.
pub fn skin_lbs(
    vertices: &[Vector3<f64>],
    weights: &[Vec<f64>],
    skin_transforms: &[Isometry3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    if weights.len() != vertices.len() {
        return Err(Error::Shape("weights rows != vertex count".into()));
    }
    let mut out = Vec::with_capacity(vertices.len());
    for (x, row) in vertices.iter().zip(weights) {
        if row.len() != skin_transforms.len() {
            return Err(Error::Shape("weight row width != joint count".into()));
        }
        let mut p = Vector3::zeros();
        for (w, t) in row.iter().zip(skin_transforms) {
            if *w != 0.0 {
                p += *w * (t * nalgebra::Point3::from(*x)).coords;
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Blend of skinning rotation matrices for one weight row; this is the
/// Jacobian of the skinned position w.r.t. the rest-pose position.
pub fn blend_rotation(
    row: &[f64],
    skin_transforms: &[Isometry3<f64>],
) -> nalgebra::Matrix3<f64> {
    let mut m = nalgebra::Matrix3::zeros();
    for (w, t) in row.iter().zip(skin_transforms) {
        if *w != 0.0 {
            m += t.rotation.to_rotation_matrix().into_inner() * *w;
        }
    }
    m
}

/// Resample a sequence to a new frame rate: Slerp on rotations (short arc),
/// linear interpolation on the root translation. Endpoints are preserved
/// exactly; sample times that land on a source frame return it unchanged.
pub fn resample_slerp(seq: &PoseSequence, target_fps: f64) -> Result<PoseSequence> {
    if !(target_fps > 0.0) {
        return Err(Error::Config(format!("target fps must be > 0, got {target_fps}")));
    }
    let n = seq.frames.len();
    let count = (seq.duration() * target_fps).round() as usize + 1;
    let mut frames = Vec::with_capacity(count);
    for k in 0..count {
        let s = (k as f64 / target_fps * seq.fps).clamp(0.0, (n - 1) as f64);
        let i = s.floor() as usize;
        let alpha = s - i as f64;
        if alpha == 0.0 || i + 1 >= n {
            frames.push(seq.frames[i.min(n - 1)].clone());
            continue;
        }
        let a = &seq.frames[i];
        let b = &seq.frames[i + 1];
        let rotations = a
            .joint_rotations
            .iter()
            .zip(&b.joint_rotations)
            .map(|(qa, qb)| slerp_short(*qa, *qb, alpha))
            .collect();
        let root = a.root_translation * (1.0 - alpha) + b.root_translation * alpha;
        frames.push(Pose::new(rotations, root));
    }
    PoseSequence::new(frames, target_fps)
}

/// Shortest-arc Slerp; falls back to normalized lerp for nearly parallel or
/// nearly antipodal inputs.
pub fn slerp_short(
    q0: UnitQuaternion<f64>,
    q1: UnitQuaternion<f64>,
    t: f64,
) -> UnitQuaternion<f64> {
    let q1 = if q0.into_inner().dot(&q1.into_inner()) < 0.0 {
        UnitQuaternion::new_unchecked(-q1.into_inner())
    } else {
        q1
    };
    match q0.try_slerp(&q1, t, 1e-12) {
        Some(q) => q,
        None => {
            let mixed = q0.into_inner().lerp(&q1.into_inner(), t);
            UnitQuaternion::from_quaternion(mixed)
        }
    }
}

/// Copy each garment vertex's weights from its nearest body vertex.
pub fn transfer_weights(
    garment_vertices: &[Vector3<f64>],
    body_vertices: &[Vector3<f64>],
    body_weights: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if body_vertices.is_empty() {
        return Err(Error::Config("cannot transfer weights from an empty body".into()));
    }
    let mut out = Vec::with_capacity(garment_vertices.len());
    for g in garment_vertices {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, b) in body_vertices.iter().enumerate() {
            let d = (g - b).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        out.push(body_weights[best].clone());
    }
    Ok(out)
}

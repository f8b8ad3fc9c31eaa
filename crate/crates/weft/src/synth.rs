//! Procedural test assets: closed collider meshes, grid garments, a small
//! pendulum body, and a synthetic motion generator (sinusoidal joint
//! swings, spins about the vertical axis, ballistic root jumps). These
//! replace external motion-capture ingestion for desk-scale experiments.

use nalgebra::{Isometry3, UnitQuaternion, Vector2, Vector3};

use crate::body::{BodyModel, MirrorMap, Pose, PoseSequence, Skeleton};
use crate::error::Result;
use crate::mesh::{FabricParams, GarmentMesh};

/// Sphere mesh by octahedron subdivision; closed, outward winding.
pub fn sphere_mesh(radius: f64, subdivisions: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let mut vertices = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, -1.0),
    ];
    let mut faces = Vec::new();
    for &sx in &[1i32, -1] {
        for &sy in &[1i32, -1] {
            for &sz in &[1i32, -1] {
                let x = if sx > 0 { 0 } else { 1 };
                let y = if sy > 0 { 2 } else { 3 };
                let z = if sz > 0 { 4 } else { 5 };
                if sx * sy * sz > 0 {
                    faces.push([x, y, z]);
                } else {
                    faces.push([x, z, y]);
                }
            }
        }
    }
    let mut midpoints: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    for _ in 0..subdivisions {
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = |a: usize, b: usize, vs: &mut Vec<Vector3<f64>>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    let m = ((vs[a] + vs[b]) / 2.0).normalize();
                    vs.push(m);
                    vs.len() - 1
                })
            };
            let ab = mid(f[0], f[1], &mut vertices);
            let bc = mid(f[1], f[2], &mut vertices);
            let ca = mid(f[2], f[0], &mut vertices);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
        midpoints.clear();
    }
    for v in &mut vertices {
        *v *= radius;
    }
    (vertices, faces)
}

/// rows x cols vertex sheet in the XY plane: vertex (r, c) sits at
/// origin + (c*spacing, -r*spacing, 0). UVs are the isometric (row, col)
/// chart. Returns (vertices, faces, uv).
pub fn grid_sheet(
    rows: usize,
    cols: usize,
    spacing: f64,
    origin: Vector3<f64>,
) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>, Vec<Vector2<f64>>) {
    let mut vertices = Vec::with_capacity(rows * cols);
    let mut uv = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            vertices.push(origin + Vector3::new(c as f64 * spacing, -(r as f64) * spacing, 0.0));
            uv.push(Vector2::new(c as f64 * spacing, r as f64 * spacing));
        }
    }
    let mut faces = Vec::with_capacity((rows - 1) * (cols - 1) * 2);
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let i = r * cols + c;
            faces.push([i, i + 1, i + cols]);
            faces.push([i + 1, i + cols + 1, i + cols]);
        }
    }
    (vertices, faces, uv)
}

/// Grid sheet wrapped as a garment with single-joint weights; handy for
/// swatch tests that do not involve a skeleton.
pub fn grid_garment(rows: usize, cols: usize, spacing: f64, fabric: FabricParams) -> Result<GarmentMesh> {
    let (v, f, uv) = grid_sheet(rows, cols, spacing, Vector3::zeros());
    let n = v.len();
    GarmentMesh::new(v, f, Some(uv), vec![vec![1.0]; n], fabric)
}

/// Number of chain joints in [`pendulum_skeleton`].
pub const PENDULUM_JOINTS: usize = 4;
/// Anchor height of the pendulum in meters.
pub const PENDULUM_TOP: f64 = 1.5;
/// Length of each chain link in meters.
pub const PENDULUM_LINK: f64 = 0.25;
/// Radius of the pendulum's skin tube below the shoulder.
pub const PENDULUM_RADIUS: f64 = 0.05;
/// Widest radius of the shoulder flare near the anchor. The flare widens
/// downward so a garment ring resting on it is supported against gravity.
pub const PENDULUM_SHOULDER: f64 = 0.13;
/// Rest radius of the skirt band; between the tube and the shoulder.
pub const SKIRT_RADIUS: f64 = 0.085;

/// A 4-joint chain hanging from a fixed anchor: root "anchor" at
/// (0, 1.5, 0), three links of 0.25 m going straight down in rest pose.
pub fn pendulum_skeleton() -> Skeleton {
    let names = vec![
        "anchor".to_string(),
        "link1".to_string(),
        "link2".to_string(),
        "link3".to_string(),
    ];
    let parents = vec![None, Some(0), Some(1), Some(2)];
    let mut rest = vec![Isometry3::translation(0.0, PENDULUM_TOP, 0.0)];
    for _ in 1..PENDULUM_JOINTS {
        rest.push(Isometry3::translation(0.0, -PENDULUM_LINK, 0.0));
    }
    Skeleton::new(names, parents, rest, MirrorMap::default(), vec![true; PENDULUM_JOINTS])
        .expect("static skeleton is valid")
}

/// Closed profiled tube skinned rigidly to the pendulum chain: a narrow
/// neck at the anchor flares to a shoulder, tapers back to the link
/// radius, and runs down to the tip. A garment band wider than the tube
/// but narrower than the shoulder rests on the flare, which is what keeps
/// it from sliding off under the frictionless collision model.
pub fn pendulum_body(sides: usize) -> Result<BodyModel> {
    let skel = pendulum_skeleton();
    let k = skel.num_joints();
    // (height, radius, joint carrying the ring)
    let profile: [(f64, f64, usize); 6] = [
        (PENDULUM_TOP, 0.03, 0),
        (PENDULUM_TOP - 0.08, PENDULUM_SHOULDER, 0),
        (PENDULUM_TOP - 0.20, 0.055, 1),
        (PENDULUM_TOP - PENDULUM_LINK, PENDULUM_RADIUS, 1),
        (PENDULUM_TOP - 2.0 * PENDULUM_LINK, PENDULUM_RADIUS, 2),
        (PENDULUM_TOP - 3.0 * PENDULUM_LINK, PENDULUM_RADIUS, 3),
    ];
    let mut vertices = Vec::new();
    let mut weights: Vec<Vec<f64>> = Vec::new();
    for &(y, radius, joint) in &profile {
        for s in 0..sides {
            let a = s as f64 / sides as f64 * std::f64::consts::TAU;
            vertices.push(Vector3::new(radius * a.cos(), y, radius * a.sin()));
            let mut row = vec![0.0; k];
            row[joint] = 1.0;
            weights.push(row);
        }
    }
    // cap centers
    let top_center = vertices.len();
    vertices.push(Vector3::new(0.0, profile[0].0, 0.0));
    let mut row = vec![0.0; k];
    row[0] = 1.0;
    weights.push(row);
    let bottom_center = vertices.len();
    vertices.push(Vector3::new(0.0, profile[profile.len() - 1].0, 0.0));
    let mut row = vec![0.0; k];
    row[k - 1] = 1.0;
    weights.push(row);

    let mut faces = Vec::new();
    let ring = |j: usize, s: usize| j * sides + (s % sides);
    for j in 0..profile.len() - 1 {
        for s in 0..sides {
            // Outward winding: angle increases from +X toward +Z, the next
            // ring is lower.
            let a = ring(j, s);
            let b = ring(j, s + 1);
            let c = ring(j + 1, s);
            let d = ring(j + 1, s + 1);
            faces.push([a, b, c]);
            faces.push([b, d, c]);
        }
    }
    let bottom = profile.len() - 1;
    for s in 0..sides {
        faces.push([top_center, ring(0, s + 1), ring(0, s)]);
        faces.push([bottom_center, ring(bottom, s), ring(bottom, s + 1)]);
    }
    BodyModel::new(skel, vertices, faces, weights)
}

/// One primitive motion of the synthetic generator.
#[derive(Debug, Clone)]
pub enum MotionKind {
    /// Sinusoidal rotation of one joint about a fixed local axis.
    Swing { joint: usize, axis: Vector3<f64>, amplitude: f64, frequency: f64 },
    /// Constant-rate root rotation about the vertical (gravity) axis.
    Spin { rate: f64 },
    /// Sinusoidal vertical bob of the root translation.
    Jump { height: f64, frequency: f64 },
}

/// Compose primitive motions into a pose sequence. Deterministic in its
/// arguments; kinds combine multiplicatively on rotations and additively
/// on the root translation.
pub fn generate_motion(
    skel: &Skeleton,
    kinds: &[MotionKind],
    frames: usize,
    fps: f64,
) -> Result<PoseSequence> {
    let k = skel.num_joints();
    let mut out = Vec::with_capacity(frames);
    for fi in 0..frames {
        let t = fi as f64 / fps;
        let mut rot = vec![UnitQuaternion::identity(); k];
        let mut root_t = Vector3::zeros();
        for kind in kinds {
            match kind {
                MotionKind::Swing { joint, axis, amplitude, frequency } => {
                    let angle = amplitude * (std::f64::consts::TAU * frequency * t).sin();
                    let axis = nalgebra::Unit::new_normalize(*axis);
                    rot[*joint] = rot[*joint] * UnitQuaternion::from_axis_angle(&axis, angle);
                }
                MotionKind::Spin { rate } => {
                    rot[0] = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), rate * t) * rot[0];
                }
                MotionKind::Jump { height, frequency } => {
                    root_t.y += height * (std::f64::consts::TAU * frequency * t).sin().max(0.0);
                }
            }
        }
        out.push(Pose::new(rot, root_t));
    }
    PoseSequence::new(out, fps)
}

/// A sequence that repeats one pose.
pub fn constant_motion(pose: &Pose, frames: usize, fps: f64) -> Result<PoseSequence> {
    PoseSequence::new(vec![pose.clone(); frames], fps)
}

/// Desk-scale scene: the pendulum body plus a closed skirt band resting on
/// the shoulder flare, skinned by nearest-body-vertex weight transfer.
pub struct PendulumScene {
    pub body: BodyModel,
    pub garment: GarmentMesh,
}

/// Build the skirt band for the pendulum: `rows` rings of `cols` vertices
/// wrapped around the chain at [`SKIRT_RADIUS`], hanging from just above
/// the shoulder. `rows * cols` vertices total. No UVs; the rest state
/// falls back to per-face unfolding (the band has a seamless closed loop).
pub fn pendulum_scene(rows: usize, cols: usize, fabric: FabricParams) -> Result<PendulumScene> {
    let body = pendulum_body(10)?;
    let top = PENDULUM_TOP - 0.03;
    let length = 0.55;
    let dy = length / (rows - 1) as f64;
    let mut vertices = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let a = c as f64 / cols as f64 * std::f64::consts::TAU;
            vertices.push(Vector3::new(
                SKIRT_RADIUS * a.cos(),
                top - r as f64 * dy,
                SKIRT_RADIUS * a.sin(),
            ));
        }
    }
    let mut faces = Vec::with_capacity((rows - 1) * cols * 2);
    let at = |r: usize, c: usize| r * cols + (c % cols);
    for r in 0..rows - 1 {
        for c in 0..cols {
            let a = at(r, c);
            let b = at(r, c + 1);
            let cc = at(r + 1, c);
            let d = at(r + 1, c + 1);
            faces.push([a, b, cc]);
            faces.push([b, d, cc]);
        }
    }
    let weights =
        crate::body::transfer_weights(&vertices, &body.skin_vertices, &body.skin_weights)?;
    let garment = GarmentMesh::new(vertices, faces, None, weights, fabric)?;
    Ok(PendulumScene { body, garment })
}

/// The training motion corpus for the pendulum: swings of varying
/// amplitude/axis/frequency, spins, jumps and still poses.
/// `frames_per_seq * 12` frames in total.
pub fn pendulum_motions(skel: &Skeleton, frames_per_seq: usize, fps: f64) -> Vec<PoseSequence> {
    let z = Vector3::z_axis().into_inner();
    let x = Vector3::x_axis().into_inner();
    let specs: Vec<Vec<MotionKind>> = vec![
        vec![MotionKind::Swing { joint: 0, axis: z, amplitude: 0.5, frequency: 0.6 }],
        vec![MotionKind::Swing { joint: 0, axis: z, amplitude: 0.9, frequency: 0.8 }],
        vec![MotionKind::Swing { joint: 0, axis: x, amplitude: 0.7, frequency: 0.5 }],
        vec![
            MotionKind::Swing { joint: 0, axis: z, amplitude: 0.6, frequency: 0.7 },
            MotionKind::Swing { joint: 1, axis: x, amplitude: 0.4, frequency: 1.1 },
        ],
        vec![MotionKind::Swing { joint: 1, axis: z, amplitude: 0.8, frequency: 0.9 }],
        vec![MotionKind::Spin { rate: 3.0 }],
        vec![
            MotionKind::Spin { rate: 4.5 },
            MotionKind::Swing { joint: 0, axis: z, amplitude: 0.3, frequency: 0.5 },
        ],
        vec![MotionKind::Jump { height: 0.12, frequency: 0.9 }],
        vec![
            MotionKind::Jump { height: 0.10, frequency: 0.7 },
            MotionKind::Swing { joint: 0, axis: x, amplitude: 0.4, frequency: 0.6 },
        ],
        vec![MotionKind::Swing { joint: 0, axis: z, amplitude: 1.1, frequency: 0.4 }],
        // still poses close the set; they anchor the static behaviour
        vec![],
        vec![],
    ];
    let mut seqs = Vec::new();
    for (i, kinds) in specs.iter().enumerate() {
        let mut seq = generate_motion(skel, kinds, frames_per_seq, fps).expect("frames > 0");
        if kinds.is_empty() && i % 2 == 1 {
            // a bent still pose rather than the rest pose
            let mut pose = Pose::identity(skel.num_joints());
            pose.joint_rotations[0] =
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.45);
            seq = constant_motion(&pose, frames_per_seq, fps).expect("frames > 0");
        }
        seqs.push(seq);
    }
    seqs
}

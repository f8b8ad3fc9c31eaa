//! Garment mesh: topology extraction, rest-state quantities, lumped masses.
//!
//! The garment is a triangle mesh treated as a particle system. Everything
//! here is computed once per garment and immutable afterwards, so it can be
//! shared freely across parallel evaluations.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::obj;

/// Minimum acceptable triangle rest area in m^2. Below this we refuse the
/// mesh instead of regularizing.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// In-plane cloth material model used for the elastic energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialModel {
    /// Per-edge springs on absolute elongation.
    MassSpring,
    /// Squared stretch/shear constraints on the per-face deformation gradient.
    BaraffWitkinSq,
    /// Saint Venant-Kirchhoff membrane on the Green strain.
    StVk,
}

/// Fabric parameters: surface density, stiffnesses and the collision margin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FabricParams {
    /// Surface density in kg/m^2.
    pub density: f64,
    pub k_stretch: f64,
    pub k_shear: f64,
    pub k_bend: f64,
    pub k_collision: f64,
    /// Collision safety margin epsilon in meters.
    pub collision_eps: f64,
    pub material_model: MaterialModel,
    /// Lame coefficients, StVk only.
    pub lame_mu: f64,
    pub lame_lambda: f64,
}

impl Default for FabricParams {
    fn default() -> Self {
        // Midpoints of the usual ranges: stretch [5,15], shear [0,1],
        // bending [1e-5,1e-4], k_c close to stretch, eps 4 mm.
        FabricParams {
            density: 0.30,
            k_stretch: 10.0,
            k_shear: 0.5,
            k_bend: 5e-5,
            k_collision: 10.0,
            collision_eps: 0.004,
            material_model: MaterialModel::MassSpring,
            lame_mu: 10.0,
            lame_lambda: 10.0,
        }
    }
}

impl FabricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0) {
            return Err(Error::Config(format!("density must be > 0, got {}", self.density)));
        }
        for (name, v) in [
            ("k_stretch", self.k_stretch),
            ("k_shear", self.k_shear),
            ("k_bend", self.k_bend),
            ("k_collision", self.k_collision),
            ("collision_eps", self.collision_eps),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Cloth particle system: rest positions, faces, material-space coordinates,
/// skinning weights and fabric parameters.
#[derive(Debug, Clone)]
pub struct GarmentMesh {
    /// Rest-pose vertex positions, meters.
    pub vertices: Vec<Vector3<f64>>,
    /// Triangle indices.
    pub faces: Vec<[usize; 3]>,
    /// Per-vertex material-space coordinates, meters. When absent the rest
    /// state falls back to a per-face isometric unfold of the 3D triangle.
    pub uv: Option<Vec<Vector2<f64>>>,
    /// N x K_total skinning weights, rows sum to 1.
    pub blend_weights: Vec<Vec<f64>>,
    pub fabric: FabricParams,
}

impl GarmentMesh {
    /// Build and validate a garment from raw arrays.
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
        uv: Option<Vec<Vector2<f64>>>,
        blend_weights: Vec<Vec<f64>>,
        fabric: FabricParams,
    ) -> Result<Self> {
        fabric.validate()?;
        let n = vertices.len();
        if let Some(uv) = &uv {
            if uv.len() != n {
                return Err(Error::Shape(format!("{} uv entries for {} vertices", uv.len(), n)));
            }
        }
        if blend_weights.len() != n {
            return Err(Error::Weight(format!(
                "{} weight rows for {} vertices",
                blend_weights.len(),
                n
            )));
        }
        let mut mesh = GarmentMesh { vertices, faces, uv, blend_weights, fabric };
        mesh.normalize_weights()?;
        mesh.validate_faces()?;
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Number of skinning columns (K_total).
    pub fn num_joints(&self) -> usize {
        self.blend_weights.first().map_or(0, |r| r.len())
    }

    fn validate_faces(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::Topology(format!("face {fi} references vertex >= {n}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Topology(format!("face {fi} repeats a vertex")));
            }
            let area = triangle_area(self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
            if area < DEGENERATE_AREA {
                return Err(Error::Degenerate { face: fi, area });
            }
        }
        // Manifold-or-boundary: no edge may be shared by more than two faces.
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (&(a, b), &c) in &count {
            if c > 2 {
                return Err(Error::NonManifold(a, b));
            }
        }
        Ok(())
    }

    /// Renormalize weight rows; rows further than 1e-3 from unit sum are
    /// rejected rather than silently rescaled.
    fn normalize_weights(&mut self) -> Result<()> {
        for (i, row) in self.blend_weights.iter_mut().enumerate() {
            if row.iter().any(|&w| w < 0.0) {
                return Err(Error::Weight(format!("vertex {i} has a negative blend weight")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-3 {
                return Err(Error::Weight(format!(
                    "vertex {i} weights sum to {sum}, outside 1 +- 1e-3"
                )));
            }
            if sum != 1.0 {
                for w in row.iter_mut() {
                    *w /= sum;
                }
            }
        }
        Ok(())
    }

    /// Total rest area in m^2.
    pub fn total_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| triangle_area(self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]))
            .sum()
    }
}

/// Interior-edge hinge: the shared edge as wound in `faces[0]`, the two
/// opposite vertices, and the two face ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dihedral {
    /// (i, j): directed edge as it appears in the winding of `faces[0]`.
    pub edge: [usize; 2],
    /// Opposite vertex in faces[0], then in faces[1].
    pub opposite: [usize; 2],
    pub faces: [usize; 2],
}

/// Unique edges plus one hinge entry per interior edge.
#[derive(Debug, Clone)]
pub struct Topology {
    /// Unique undirected edges in first-seen face-scan order.
    pub edges: Vec<[usize; 2]>,
    pub dihedrals: Vec<Dihedral>,
}

/// Extract unique edges and interior-edge hinges.
///
/// Deterministic: edges appear in the order they are first seen while
/// scanning faces; dihedrals in edge order.
pub fn build_topology(mesh: &GarmentMesh) -> Result<Topology> {
    // For each undirected edge: (directed-edge-as-first-seen, face, opposite vertex).
    struct EdgeInfo {
        first: [usize; 2],
        faces: Vec<(usize, usize)>, // (face id, opposite vertex)
    }
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut map: HashMap<(usize, usize), EdgeInfo> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for (a, b, opp) in [(f[0], f[1], f[2]), (f[1], f[2], f[0]), (f[2], f[0], f[1])] {
            let key = (a.min(b), a.max(b));
            let entry = map.entry(key).or_insert_with(|| {
                order.push(key);
                EdgeInfo { first: [a, b], faces: Vec::new() }
            });
            entry.faces.push((fi, opp));
            if entry.faces.len() > 2 {
                return Err(Error::NonManifold(key.0, key.1));
            }
        }
    }
    let mut edges = Vec::with_capacity(order.len());
    let mut dihedrals = Vec::new();
    for key in &order {
        let info = &map[key];
        edges.push(info.first);
        if info.faces.len() == 2 {
            let (fa, ka) = info.faces[0];
            let (fb, kb) = info.faces[1];
            dihedrals.push(Dihedral {
                edge: info.first,
                opposite: [ka, kb],
                faces: [fa, fb],
            });
        }
    }
    Ok(Topology { edges, dihedrals })
}

/// Rest-state quantities derived from the garment at its rest pose.
#[derive(Debug, Clone)]
pub struct RestState {
    /// Rest length per topology edge, meters.
    pub edge_lengths: Vec<f64>,
    /// Signed rest dihedral per hinge, radians in (-pi, pi].
    pub rest_dihedrals: Vec<f64>,
    /// Rest area per face, m^2.
    pub face_areas: Vec<f64>,
    /// Per-face inverse material matrix: maps world-edge columns to the
    /// deformation gradient, Ds * inv(Dm).
    pub uv_frames: Vec<Matrix2<f64>>,
    /// Per-hinge l^2 / (8 a), a = sum of the two incident face areas.
    pub dihedral_scale: Vec<f64>,
}

/// Compute rest lengths, rest dihedrals, face areas, material frames and
/// hinge scales. Uses the same signed-angle convention as the runtime
/// dihedral evaluation.
pub fn compute_rest_state(mesh: &GarmentMesh, topo: &Topology) -> Result<RestState> {
    let x = &mesh.vertices;
    let mut face_areas = Vec::with_capacity(mesh.faces.len());
    let mut uv_frames = Vec::with_capacity(mesh.faces.len());
    for (fi, f) in mesh.faces.iter().enumerate() {
        let area = triangle_area(x[f[0]], x[f[1]], x[f[2]]);
        if area < DEGENERATE_AREA {
            return Err(Error::Degenerate { face: fi, area });
        }
        face_areas.push(area);
        let (u0, u1, u2) = match &mesh.uv {
            Some(uv) => (uv[f[0]], uv[f[1]], uv[f[2]]),
            None => unfold_triangle(x[f[0]], x[f[1]], x[f[2]]),
        };
        let dm = Matrix2::from_columns(&[u1 - u0, u2 - u0]);
        let det = dm.determinant();
        if det.abs() < DEGENERATE_AREA {
            return Err(Error::Degenerate { face: fi, area: det.abs() });
        }
        uv_frames.push(dm.try_inverse().expect("checked determinant"));
    }

    let edge_lengths: Vec<f64> = topo
        .edges
        .iter()
        .map(|e| (x[e[1]] - x[e[0]]).norm())
        .collect();
    for (ei, &l) in edge_lengths.iter().enumerate() {
        if l <= 0.0 {
            return Err(Error::Topology(format!("edge {ei} has zero rest length")));
        }
    }

    let mut rest_dihedrals = Vec::with_capacity(topo.dihedrals.len());
    let mut dihedral_scale = Vec::with_capacity(topo.dihedrals.len());
    for d in &topo.dihedrals {
        rest_dihedrals.push(dihedral_angle(
            x[d.edge[0]],
            x[d.edge[1]],
            x[d.opposite[0]],
            x[d.opposite[1]],
        ));
        let l = (x[d.edge[1]] - x[d.edge[0]]).norm();
        let a = face_areas[d.faces[0]] + face_areas[d.faces[1]];
        dihedral_scale.push(l * l / (8.0 * a));
    }

    Ok(RestState { edge_lengths, rest_dihedrals, face_areas, uv_frames, dihedral_scale })
}

/// Barycentric mass lumping: each triangle contributes a third of its rest
/// area to each of its vertices, scaled by the fabric surface density.
pub fn lump_masses(mesh: &GarmentMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.vertices.len()];
    for f in &mesh.faces {
        let area = triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        let share = mesh.fabric.density * area / 3.0;
        for &i in f {
            m[i] += share;
        }
    }
    m
}

/// Load a garment from an ASCII OBJ plus a JSON blend-weights file.
///
/// The weights file is an array of N maps `{joint name: weight}`; names are
/// resolved against `joints` (the skeleton's joint order). Rows within 1e-3
/// of unit sum are renormalized, anything further out is a weight error.
pub fn load_garment(
    obj_path: &Path,
    weights_path: &Path,
    fabric: FabricParams,
    joints: &[String],
) -> Result<GarmentMesh> {
    let parsed = obj::read_obj(obj_path)?;
    let weights = load_weight_rows(weights_path, joints, parsed.vertices.len())?;
    GarmentMesh::new(parsed.vertices, parsed.faces, parsed.uv, weights, fabric)
}

/// Parse a JSON weights file (array of name->weight maps) into dense rows
/// ordered like `joints`.
pub fn load_weight_rows(
    path: &Path,
    joints: &[String],
    expected_rows: usize,
) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<std::collections::BTreeMap<String, f64>> = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if rows.len() != expected_rows {
        return Err(Error::Weight(format!(
            "{} weight rows for {} vertices",
            rows.len(),
            expected_rows
        )));
    }
    let index: HashMap<&str, usize> =
        joints.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut dense = Vec::with_capacity(rows.len());
    for (vi, row) in rows.iter().enumerate() {
        let mut out = vec![0.0; joints.len()];
        for (name, &w) in row {
            let j = *index
                .get(name.as_str())
                .ok_or_else(|| Error::Weight(format!("vertex {vi}: unknown joint '{name}'")))?;
            out[j] += w;
        }
        dense.push(out);
    }
    Ok(dense)
}

/// Area of a 3D triangle.
pub fn triangle_area(a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Isometric unfold of a 3D triangle into 2D material coordinates, used
/// when the OBJ carries no UVs.
fn unfold_triangle(
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
) -> (Vector2<f64>, Vector2<f64>, Vector2<f64>) {
    let e1 = b - a;
    let e2 = c - a;
    let lu = e1.norm();
    let u_axis = e1 / lu;
    let proj = e2.dot(&u_axis);
    let perp = e2 - u_axis * proj;
    (
        Vector2::new(0.0, 0.0),
        Vector2::new(lu, 0.0),
        Vector2::new(proj, perp.norm()),
    )
}

/// Signed dihedral angle between the two faces of a hinge, in (-pi, pi].
///
/// `xi`, `xj` are the shared edge as wound in face A; `xk` is A's opposite
/// vertex, `xl` is B's. Consistently wound coplanar faces give 0; the sign
/// flips if one face's winding flips.
pub fn dihedral_angle(
    xi: Vector3<f64>,
    xj: Vector3<f64>,
    xk: Vector3<f64>,
    xl: Vector3<f64>,
) -> f64 {
    let e = xj - xi;
    let na = e.cross(&(xk - xi));
    let nb = (xi - xj).cross(&(xl - xj));
    signed_angle(na, nb, e)
}

/// Signed dihedral plus its gradient w.r.t. the four hinge vertices,
/// ordered (xi, xj, xk, xl).
pub fn dihedral_angle_grad(
    xi: Vector3<f64>,
    xj: Vector3<f64>,
    xk: Vector3<f64>,
    xl: Vector3<f64>,
) -> (f64, [Vector3<f64>; 4]) {
    let e = xj - xi;
    let l2 = e.norm_squared();
    let l = l2.sqrt();
    let na = e.cross(&(xk - xi));
    let nb = (xi - xj).cross(&(xl - xj));
    let angle = signed_angle(na, nb, e);

    let ga = na * (-l / na.norm_squared()); // d(angle)/d(xk)
    let gb = nb * (-l / nb.norm_squared()); // d(angle)/d(xl)
    let tk = (xk - xi).dot(&e) / l2;
    let tl = (xl - xi).dot(&e) / l2;
    let gi = -ga * (1.0 - tk) - gb * (1.0 - tl);
    let gj = -ga * tk - gb * tl;
    (angle, [gi, gj, ga, gb])
}

fn signed_angle(na: Vector3<f64>, nb: Vector3<f64>, e: Vector3<f64>) -> f64 {
    let na_n = na.normalize();
    let nb_n = nb.normalize();
    let e_n = e.normalize();
    let sin = na_n.cross(&nb_n).dot(&e_n);
    let cos = na_n.dot(&nb_n);
    let angle = sin.atan2(cos);
    // Map -pi to +pi so the range is (-pi, pi].
    if angle <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        angle
    }
}

//! Signed distance from a point to a closed triangle mesh.
//!
//! Distance is to the exact nearest surface point; the sign comes from the
//! angle-weighted pseudo-normal of the nearest feature (face, edge or
//! vertex), which is sign-correct everywhere for closed manifold meshes.
//! Queries go through a small AABB tree; an exhaustive all-triangle scan is
//! kept as the verification path.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Nearest feature of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    /// Corner index 0..3 within the face.
    Vertex(usize),
    /// Edge (corner k, corner k+1 mod 3).
    Edge(usize),
    Face,
}

/// Closest point on triangle (a, b, c) to p, with the feature it lies on.
pub fn closest_point_triangle(
    p: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
) -> (Vector3<f64>, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (a + ab * t, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (a + ac * t, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * t, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

/// Unit vertex normals weighted by the incident interior angles.
pub fn angle_weighted_vertex_normals(
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
) -> Vec<Vector3<f64>> {
    let mut normals = vec![Vector3::zeros(); vertices.len()];
    for f in faces {
        let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        let n = (b - a).cross(&(c - a));
        let nn = n.norm();
        if nn < 1e-18 {
            continue;
        }
        let n = n / nn;
        let corners = [(a, b, c), (b, c, a), (c, a, b)];
        for (k, (v, u, w)) in corners.iter().enumerate() {
            let e1 = (u - v).normalize();
            let e2 = (w - v).normalize();
            let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
            normals[f[k]] += n * angle;
        }
    }
    for n in &mut normals {
        let nn = n.norm();
        if nn > 1e-18 {
            *n /= nn;
        }
    }
    normals
}

#[derive(Debug, Clone)]
struct BvhNode {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    // Leaf when count > 0: faces[start..start+count]. Interior nodes have
    // their left child at (own index + 1) and the right child at `right`.
    right: usize,
    start: usize,
    count: usize,
}

/// Signed-distance queries against one posed mesh. Immutable after
/// construction; queries are read-only and safe to run in parallel.
#[derive(Debug, Clone)]
pub struct BodySdf {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    face_normals: Vec<Vector3<f64>>,
    vertex_normals: Vec<Vector3<f64>>,
    edge_normals: HashMap<(usize, usize), Vector3<f64>>,
    nodes: Vec<BvhNode>,
    order: Vec<usize>, // face ids, permuted by the tree build
}

impl BodySdf {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() || vertices.is_empty() {
            return Err(Error::Config("signed distance requires a non-empty body mesh".into()));
        }
        let mut face_normals = Vec::with_capacity(faces.len());
        for f in &faces {
            let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            let nn = n.norm();
            face_normals.push(if nn > 1e-18 { n / nn } else { Vector3::zeros() });
        }
        let vertex_normals = angle_weighted_vertex_normals(&vertices, &faces);
        let mut edge_accum: HashMap<(usize, usize), Vector3<f64>> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *edge_accum.entry((a.min(b), a.max(b))).or_insert_with(Vector3::zeros) +=
                    face_normals[fi];
            }
        }
        let edge_normals = edge_accum
            .into_iter()
            .map(|(k, n)| {
                let nn = n.norm();
                (k, if nn > 1e-18 { n / nn } else { Vector3::zeros() })
            })
            .collect();

        let mut order: Vec<usize> = (0..faces.len()).collect();
        let mut nodes = Vec::new();
        let centroids: Vec<Vector3<f64>> = faces
            .iter()
            .map(|f| (vertices[f[0]] + vertices[f[1]] + vertices[f[2]]) / 3.0)
            .collect();
        build_bvh(&vertices, &faces, &centroids, &mut order, 0, faces.len(), &mut nodes);

        Ok(BodySdf { vertices, faces, face_normals, vertex_normals, edge_normals, nodes, order })
    }

    /// Signed distance (negative inside) via the AABB tree.
    pub fn signed_distance(&self, p: Vector3<f64>) -> f64 {
        self.signed_distance_grad(p).0
    }

    /// Signed distance plus the unit outward direction of increasing
    /// distance (the pseudo-normal when the query sits on the surface).
    pub fn signed_distance_grad(&self, p: Vector3<f64>) -> (f64, Vector3<f64>) {
        let (dist2, point, face, feature) = self.closest_bvh(p);
        self.finish(p, dist2, point, face, feature)
    }

    /// Exhaustive all-triangle scan; the verification oracle for the tree.
    pub fn signed_distance_brute(&self, p: Vector3<f64>) -> f64 {
        let mut best = (f64::INFINITY, Vector3::zeros(), 0usize, Feature::Face);
        for (fi, f) in self.faces.iter().enumerate() {
            let (c, feat) =
                closest_point_triangle(p, self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
            let d2 = (p - c).norm_squared();
            if d2 < best.0 {
                best = (d2, c, fi, feat);
            }
        }
        self.finish(p, best.0, best.1, best.2, best.3).0
    }

    fn finish(
        &self,
        p: Vector3<f64>,
        dist2: f64,
        point: Vector3<f64>,
        face: usize,
        feature: Feature,
    ) -> (f64, Vector3<f64>) {
        let normal = self.feature_normal(face, feature);
        let delta = p - point;
        let dist = dist2.sqrt();
        if dist < 1e-12 {
            return (0.0, normal);
        }
        let sign = if delta.dot(&normal) >= 0.0 { 1.0 } else { -1.0 };
        (sign * dist, delta * (sign / dist))
    }

    fn feature_normal(&self, face: usize, feature: Feature) -> Vector3<f64> {
        let f = self.faces[face];
        match feature {
            Feature::Face => self.face_normals[face],
            Feature::Vertex(k) => self.vertex_normals[f[k]],
            Feature::Edge(k) => {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                self.edge_normals[&(a.min(b), a.max(b))]
            }
        }
    }

    fn closest_bvh(&self, p: Vector3<f64>) -> (f64, Vector3<f64>, usize, Feature) {
        let mut best = (f64::INFINITY, Vector3::zeros(), 0usize, Feature::Face);
        // (node index, lower bound) stack, nearest-first.
        let mut stack: Vec<(usize, f64)> = vec![(0, aabb_dist2(p, &self.nodes[0]))];
        while let Some((ni, bound)) = stack.pop() {
            if bound >= best.0 {
                continue;
            }
            let node = &self.nodes[ni];
            if node.count > 0 {
                for &fi in &self.order[node.start..node.start + node.count] {
                    let f = self.faces[fi];
                    let (c, feat) = closest_point_triangle(
                        p,
                        self.vertices[f[0]],
                        self.vertices[f[1]],
                        self.vertices[f[2]],
                    );
                    let d2 = (p - c).norm_squared();
                    if d2 < best.0 {
                        best = (d2, c, fi, feat);
                    }
                }
            } else {
                let l = ni + 1;
                let r = node.right;
                let dl = aabb_dist2(p, &self.nodes[l]);
                let dr = aabb_dist2(p, &self.nodes[r]);
                // Push the farther child first so the nearer pops first.
                if dl <= dr {
                    stack.push((r, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((r, dr));
                }
            }
        }
        best
    }
}

fn aabb_dist2(p: Vector3<f64>, n: &BvhNode) -> f64 {
    let mut d2 = 0.0;
    for i in 0..3 {
        let v = p[i].clamp(n.lo[i], n.hi[i]) - p[i];
        d2 += v * v;
    }
    d2
}

const LEAF_SIZE: usize = 4;

fn build_bvh(
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    centroids: &[Vector3<f64>],
    order: &mut [usize],
    start: usize,
    count: usize,
    nodes: &mut Vec<BvhNode>,
) -> usize {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for &fi in &order[start..start + count] {
        for &vi in &faces[fi] {
            lo = lo.inf(&vertices[vi]);
            hi = hi.sup(&vertices[vi]);
        }
    }
    let id = nodes.len();
    nodes.push(BvhNode { lo, hi, right: 0, start, count });
    if count <= LEAF_SIZE {
        return id;
    }
    let extent = hi - lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    order[start..start + count].sort_by(|&a, &b| {
        centroids[a][axis].partial_cmp(&centroids[b][axis]).expect("finite centroids")
    });
    let half = count / 2;
    // Left subtree lands at id + 1; remember where the right one starts.
    build_bvh(vertices, faces, centroids, order, start, half, nodes);
    let right = build_bvh(vertices, faces, centroids, order, start + half, count - half, nodes);
    nodes[id].right = right;
    nodes[id].count = 0;
    id
}

//! Differentiable energy terms over cloth vertex positions.
//!
//! Each term returns its scalar energy and an analytic gradient w.r.t. the
//! vertex positions; the training loop and the classical solver consume the
//! same functions. Every gradient here is checked against central finite
//! differences (see [`crate::gradcheck`]).

use nalgebra::{Matrix2, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{
    dihedral_angle, dihedral_angle_grad, GarmentMesh, MaterialModel, RestState, Topology,
};
use crate::sdf::BodySdf;
use crate::GRAVITY_MAG;

/// Cloth particle positions, with optional history for the inertia term.
#[derive(Debug, Clone)]
pub struct ClothState {
    pub positions: Vec<Vector3<f64>>,
    pub prev: Option<Vec<Vector3<f64>>>,
    pub prev2: Option<Vec<Vector3<f64>>>,
}

impl ClothState {
    pub fn new(positions: Vec<Vector3<f64>>) -> Self {
        ClothState { positions, prev: None, prev2: None }
    }

    pub fn with_history(
        positions: Vec<Vector3<f64>>,
        prev: Vec<Vector3<f64>>,
        prev2: Vec<Vector3<f64>>,
    ) -> Self {
        ClothState { positions, prev: Some(prev), prev2: Some(prev2) }
    }
}

/// Everything constant about a garment that the energies need: topology,
/// rest state, masses, fabric. Build once, share everywhere.
#[derive(Debug, Clone)]
pub struct EnergyContext {
    pub faces: Vec<[usize; 3]>,
    pub topo: Topology,
    pub rest: RestState,
    pub masses: Vec<f64>,
    pub fabric: crate::mesh::FabricParams,
    /// Gravity energy of the rest garment; the gravity metric is reported
    /// relative to this so runs are comparable.
    pub gravity_ref: f64,
    total_mass: f64,
}

impl EnergyContext {
    pub fn new(mesh: &GarmentMesh) -> Result<Self> {
        let topo = crate::mesh::build_topology(mesh)?;
        let rest = crate::mesh::compute_rest_state(mesh, &topo)?;
        let masses = crate::mesh::lump_masses(mesh);
        let total_mass: f64 = masses.iter().sum();
        let (gravity_ref, _) = e_gravity(&mesh.vertices, &masses);
        Ok(EnergyContext {
            faces: mesh.faces.clone(),
            topo,
            rest,
            masses,
            fabric: mesh.fabric,
            gravity_ref,
            total_mass,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn num_vertices(&self) -> usize {
        self.masses.len()
    }

    /// In-plane elastic energy for the configured material model.
    pub fn cloth_energy(&self, x: &[Vector3<f64>]) -> (f64, Vec<Vector3<f64>>) {
        match self.fabric.material_model {
            MaterialModel::MassSpring => {
                e_mass_spring(x, &self.topo, &self.rest, self.fabric.k_stretch)
            }
            MaterialModel::BaraffWitkinSq => e_baraff_witkin_sq(
                x,
                &self.faces,
                &self.rest,
                self.fabric.k_stretch,
                self.fabric.k_shear,
            ),
            MaterialModel::StVk => {
                e_stvk(x, &self.faces, &self.rest, self.fabric.lame_mu, self.fabric.lame_lambda)
            }
        }
    }
}

/// Spring energy on absolute edge elongation:
/// E = sum_edges (k/2) (|x_i - x_j| - l0)^2.
pub fn e_mass_spring(
    x: &[Vector3<f64>],
    topo: &Topology,
    rest: &RestState,
    k: f64,
) -> (f64, Vec<Vector3<f64>>) {
    let mut energy = 0.0;
    let mut grad = vec![Vector3::zeros(); x.len()];
    for (e, &l0) in topo.edges.iter().zip(&rest.edge_lengths) {
        let d = x[e[1]] - x[e[0]];
        let l = d.norm();
        if l < 1e-12 {
            // Collapsed edge: energy is defined, direction is not.
            energy += 0.5 * k * l0 * l0;
            continue;
        }
        let stretch = l - l0;
        energy += 0.5 * k * stretch * stretch;
        let g = d * (k * stretch / l);
        grad[e[1]] += g;
        grad[e[0]] -= g;
    }
    (energy, grad)
}

/// Deformation gradient columns (w_u, w_v) of a face.
fn deformation_gradient(
    x: &[Vector3<f64>],
    f: &[usize; 3],
    dm_inv: &Matrix2<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let e1 = x[f[1]] - x[f[0]];
    let e2 = x[f[2]] - x[f[0]];
    let wu = e1 * dm_inv[(0, 0)] + e2 * dm_inv[(1, 0)];
    let wv = e1 * dm_inv[(0, 1)] + e2 * dm_inv[(1, 1)];
    (wu, wv)
}

/// Scatter per-face gradient w.r.t. (w_u, w_v) back to the three vertices.
fn scatter_face_gradient(
    grad: &mut [Vector3<f64>],
    f: &[usize; 3],
    dm_inv: &Matrix2<f64>,
    d_wu: Vector3<f64>,
    d_wv: Vector3<f64>,
) {
    let g1 = d_wu * dm_inv[(0, 0)] + d_wv * dm_inv[(0, 1)];
    let g2 = d_wu * dm_inv[(1, 0)] + d_wv * dm_inv[(1, 1)];
    grad[f[1]] += g1;
    grad[f[2]] += g2;
    grad[f[0]] -= g1 + g2;
}

/// Squared stretch/shear constraints on the deformation gradient:
/// E = sum_faces a [ (k_s/2)((|w_u|-1)^2 + (|w_v|-1)^2) + (k_sh/2)(w_u . w_v)^2 ].
pub fn e_baraff_witkin_sq(
    x: &[Vector3<f64>],
    faces: &[[usize; 3]],
    rest: &RestState,
    k_stretch: f64,
    k_shear: f64,
) -> (f64, Vec<Vector3<f64>>) {
    let mut energy = 0.0;
    let mut grad = vec![Vector3::zeros(); x.len()];
    for (fi, f) in faces.iter().enumerate() {
        let a = rest.face_areas[fi];
        let dm_inv = &rest.uv_frames[fi];
        let (wu, wv) = deformation_gradient(x, f, dm_inv);
        let (lu, lv) = (wu.norm(), wv.norm());
        let shear = wu.dot(&wv);
        energy += 0.5 * k_stretch * a * ((lu - 1.0).powi(2) + (lv - 1.0).powi(2));
        energy += 0.5 * k_shear * a * shear * shear;

        let mut d_wu = wv * (k_shear * a * shear);
        let mut d_wv = wu * (k_shear * a * shear);
        if lu > 1e-12 {
            d_wu += wu * (k_stretch * a * (lu - 1.0) / lu);
        }
        if lv > 1e-12 {
            d_wv += wv * (k_stretch * a * (lv - 1.0) / lv);
        }
        scatter_face_gradient(&mut grad, f, dm_inv, d_wu, d_wv);
    }
    (energy, grad)
}

/// Saint Venant-Kirchhoff membrane on the Green strain G = (F^T F - I)/2:
/// E = sum_faces a (mu |G|_F^2 + (lambda/2) tr(G)^2).
pub fn e_stvk(
    x: &[Vector3<f64>],
    faces: &[[usize; 3]],
    rest: &RestState,
    mu: f64,
    lambda: f64,
) -> (f64, Vec<Vector3<f64>>) {
    let mut energy = 0.0;
    let mut grad = vec![Vector3::zeros(); x.len()];
    for (fi, f) in faces.iter().enumerate() {
        let a = rest.face_areas[fi];
        let dm_inv = &rest.uv_frames[fi];
        let (wu, wv) = deformation_gradient(x, f, dm_inv);
        let g00 = 0.5 * (wu.dot(&wu) - 1.0);
        let g01 = 0.5 * wu.dot(&wv);
        let g11 = 0.5 * (wv.dot(&wv) - 1.0);
        let tr = g00 + g11;
        energy += a * (mu * (g00 * g00 + 2.0 * g01 * g01 + g11 * g11) + 0.5 * lambda * tr * tr);

        // Second Piola-Kirchhoff S = 2 mu G + lambda tr(G) I; dE/dF = a F S.
        let s00 = 2.0 * mu * g00 + lambda * tr;
        let s01 = 2.0 * mu * g01;
        let s11 = 2.0 * mu * g11 + lambda * tr;
        let d_wu = (wu * s00 + wv * s01) * a;
        let d_wv = (wu * s01 + wv * s11) * a;
        scatter_face_gradient(&mut grad, f, dm_inv, d_wu, d_wv);
    }
    (energy, grad)
}

/// Hinge bending on the deviation from the rest dihedral:
/// E = sum_hinges k_b (l^2 / 8a) (phi - phi_R)^2.
///
/// Returns (energy, gradient, skipped) where `skipped` counts hinges
/// dropped because a face degenerated at runtime.
pub fn e_bending(
    x: &[Vector3<f64>],
    topo: &Topology,
    rest: &RestState,
    k_b: f64,
) -> (f64, Vec<Vector3<f64>>, usize) {
    let mut energy = 0.0;
    let mut grad = vec![Vector3::zeros(); x.len()];
    let mut skipped = 0usize;
    const BRANCH_GUARD: f64 = std::f64::consts::PI - 1e-3;
    for (h, d) in topo.dihedrals.iter().enumerate() {
        let (xi, xj, xk, xl) = (x[d.edge[0]], x[d.edge[1]], x[d.opposite[0]], x[d.opposite[1]]);
        let na = (xj - xi).cross(&(xk - xi));
        let nb = (xi - xj).cross(&(xl - xj));
        if na.norm() < 2.0 * crate::mesh::DEGENERATE_AREA || nb.norm() < 2.0 * crate::mesh::DEGENERATE_AREA
        {
            skipped += 1;
            continue;
        }
        let (phi, dphi) = dihedral_angle_grad(xi, xj, xk, xl);
        let dev = phi - rest.rest_dihedrals[h];
        let scale = k_b * rest.dihedral_scale[h];
        energy += scale * dev * dev;
        // Near the +-pi branch cut the angle wraps; clamp the deviation
        // used for the gradient so forces stay bounded and point back.
        let dev_g = dev.clamp(-BRANCH_GUARD, BRANCH_GUARD);
        let coeff = 2.0 * scale * dev_g;
        grad[d.edge[0]] += dphi[0] * coeff;
        grad[d.edge[1]] += dphi[1] * coeff;
        grad[d.opposite[0]] += dphi[2] * coeff;
        grad[d.opposite[1]] += dphi[3] * coeff;
    }
    (energy, grad, skipped)
}

/// Body-penetration penalty: per vertex E = k_c min(d(x) - eps, 0)^2.
///
/// Returns (energy, gradient, inside_fraction) where inside_fraction is
/// the fraction of vertices with d < 0 (strictly inside the body).
pub fn e_collision(
    x: &[Vector3<f64>],
    body: &BodySdf,
    k_c: f64,
    eps: f64,
) -> (f64, Vec<Vector3<f64>>, f64) {
    let mut energy = 0.0;
    let mut grad = vec![Vector3::zeros(); x.len()];
    let mut inside = 0usize;
    for (i, p) in x.iter().enumerate() {
        let (d, dir) = body.signed_distance_grad(*p);
        if d < 0.0 {
            inside += 1;
        }
        let def = d - eps;
        if def < 0.0 {
            energy += k_c * def * def;
            grad[i] = dir * (2.0 * k_c * def);
        }
    }
    let frac = if x.is_empty() { 0.0 } else { inside as f64 / x.len() as f64 };
    (energy, grad, frac)
}

/// Gravitational potential: E = sum_i m_i g h_i relative to the y = 0 plane.
pub fn e_gravity(x: &[Vector3<f64>], masses: &[f64]) -> (f64, Vec<Vector3<f64>>) {
    let mut energy = 0.0;
    let mut grad = vec![Vector3::zeros(); x.len()];
    for (i, (p, &m)) in x.iter().zip(masses).enumerate() {
        energy += m * GRAVITY_MAG * p.y;
        grad[i] = Vector3::new(0.0, m * GRAVITY_MAG, 0.0);
    }
    (energy, grad)
}

/// Deviation from the inertial trajectory:
/// E = sum_i (m_i / 2 dt^2) |x_i - (2 x1_i - x2_i)|^2.
///
/// The previous states are constants; the gradient is w.r.t. `x` only.
pub fn e_inertia(
    x: &[Vector3<f64>],
    x_prev: &[Vector3<f64>],
    x_prev2: &[Vector3<f64>],
    masses: &[f64],
    dt: f64,
) -> Result<(f64, Vec<Vector3<f64>>)> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("inertia dt must be > 0, got {dt}")));
    }
    if x.len() != x_prev.len() || x.len() != x_prev2.len() {
        return Err(Error::Shape("inertia states have mismatched lengths".into()));
    }
    let mut energy = 0.0;
    let mut grad = vec![Vector3::zeros(); x.len()];
    let inv_dt2 = 1.0 / (dt * dt);
    for i in 0..x.len() {
        let proj = x_prev[i] * 2.0 - x_prev2[i];
        let dev = x[i] - proj;
        energy += 0.5 * masses[i] * inv_dt2 * dev.norm_squared();
        grad[i] = dev * (masses[i] * inv_dt2);
    }
    Ok((energy, grad))
}

/// Which terms participate in [`total_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossMode {
    /// cloth + bending + collision + gravity.
    Static,
    /// Static terms plus inertia at time step dt.
    Dynamic { dt: f64 },
}

/// Per-term energies, the total gradient and the evaluation metrics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnergyReport {
    pub cloth: f64,
    pub bending: f64,
    pub collision: f64,
    pub gravity: f64,
    pub inertia: f64,
    #[serde(skip)]
    pub gradient: Vec<Vector3<f64>>,
    /// Mean edge elongation in mm (mass-spring) or mean principal-stretch
    /// deviation x1000 (continuum models).
    pub strain_metric: f64,
    /// Mean |phi - phi_R| in radians.
    pub bending_metric: f64,
    /// Percentage of vertices strictly inside the body, 0..100.
    pub collision_pct: f64,
    /// (E_gravity - E_gravity(rest)) per unit mass, J/kg.
    pub gravity_metric: f64,
    /// Inertia energy per unit mass.
    pub inertia_metric: f64,
}

impl EnergyReport {
    /// Sum of the enabled term energies.
    pub fn total(&self) -> f64 {
        self.cloth + self.bending + self.collision + self.gravity + self.inertia
    }

    pub fn total_static(&self) -> f64 {
        self.cloth + self.bending + self.collision + self.gravity
    }
}

fn check_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerics(format!("{name} energy is {v}")))
    }
}

/// Evaluate all enabled terms, their summed gradient, and the metrics.
///
/// Static mode sums cloth + bending + collision + gravity; dynamic mode
/// adds the inertia term on the state history (previous states treated as
/// constants, so the gradient is w.r.t. `state.positions` only).
pub fn total_loss(
    ctx: &EnergyContext,
    state: &ClothState,
    body: Option<&BodySdf>,
    mode: LossMode,
) -> Result<EnergyReport> {
    let x = &state.positions;
    let (cloth, cloth_g) = ctx.cloth_energy(x);
    check_finite("cloth", cloth)?;
    let (bending, bending_g, _skipped) = e_bending(x, &ctx.topo, &ctx.rest, ctx.fabric.k_bend);
    check_finite("bending", bending)?;
    let (collision, collision_g, inside) = match body {
        Some(sdf) => e_collision(x, sdf, ctx.fabric.k_collision, ctx.fabric.collision_eps),
        None => (0.0, vec![Vector3::zeros(); x.len()], 0.0),
    };
    check_finite("collision", collision)?;
    let (gravity, gravity_g) = e_gravity(x, &ctx.masses);
    check_finite("gravity", gravity)?;

    let (inertia, inertia_g) = match mode {
        LossMode::Static => (0.0, vec![Vector3::zeros(); x.len()]),
        LossMode::Dynamic { dt } => {
            let prev = state
                .prev
                .as_ref()
                .ok_or_else(|| Error::Config("dynamic loss requires x_{t-1}".into()))?;
            let prev2 = state
                .prev2
                .as_ref()
                .ok_or_else(|| Error::Config("dynamic loss requires x_{t-2}".into()))?;
            let (e, g) = e_inertia(x, prev, prev2, &ctx.masses, dt)?;
            check_finite("inertia", e)?;
            (e, g)
        }
    };

    let mut gradient = cloth_g;
    for i in 0..gradient.len() {
        gradient[i] += bending_g[i] + collision_g[i] + gravity_g[i] + inertia_g[i];
    }

    let total_mass = ctx.total_mass().max(1e-12);
    Ok(EnergyReport {
        cloth,
        bending,
        collision,
        gravity,
        inertia,
        gradient,
        strain_metric: strain_metric(x, ctx),
        bending_metric: bending_metric(x, ctx),
        collision_pct: inside * 100.0,
        gravity_metric: (gravity - ctx.gravity_ref) / total_mass,
        inertia_metric: inertia / total_mass,
    })
}

/// In-plane deformation metric matched to the material model: mean
/// absolute edge elongation in millimeters for mass-spring, mean
/// principal-stretch deviation (x1000) for the continuum models.
pub fn strain_metric(x: &[Vector3<f64>], ctx: &EnergyContext) -> f64 {
    match ctx.fabric.material_model {
        MaterialModel::MassSpring => {
            let mut sum = 0.0;
            for (e, &l0) in ctx.topo.edges.iter().zip(&ctx.rest.edge_lengths) {
                sum += ((x[e[1]] - x[e[0]]).norm() - l0).abs();
            }
            sum / ctx.topo.edges.len().max(1) as f64 * 1000.0
        }
        MaterialModel::BaraffWitkinSq | MaterialModel::StVk => {
            let mut sum = 0.0;
            for (fi, f) in ctx.faces.iter().enumerate() {
                let (wu, wv) = deformation_gradient(x, f, &ctx.rest.uv_frames[fi]);
                // singular values of the 3x2 F from its 2x2 Gram matrix
                let c00 = wu.dot(&wu);
                let c01 = wu.dot(&wv);
                let c11 = wv.dot(&wv);
                let tr = c00 + c11;
                let det = (c00 * c11 - c01 * c01).max(0.0);
                let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
                let s1 = ((tr + disc) / 2.0).max(0.0).sqrt();
                let s2 = ((tr - disc) / 2.0).max(0.0).sqrt();
                sum += 0.5 * ((s1 - 1.0).abs() + (s2 - 1.0).abs());
            }
            sum / ctx.faces.len().max(1) as f64 * 1000.0
        }
    }
}

/// Mean absolute dihedral deviation from rest, radians.
pub fn bending_metric(x: &[Vector3<f64>], ctx: &EnergyContext) -> f64 {
    if ctx.topo.dihedrals.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (h, d) in ctx.topo.dihedrals.iter().enumerate() {
        let (xi, xj, xk, xl) = (x[d.edge[0]], x[d.edge[1]], x[d.opposite[0]], x[d.opposite[1]]);
        let na = (xj - xi).cross(&(xk - xi));
        let nb = (xi - xj).cross(&(xl - xj));
        if na.norm() < 2.0 * crate::mesh::DEGENERATE_AREA || nb.norm() < 2.0 * crate::mesh::DEGENERATE_AREA
        {
            continue;
        }
        sum += (dihedral_angle(xi, xj, xk, xl) - ctx.rest.rest_dihedrals[h]).abs();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Build a single-face context for hand-value tests.
#[cfg(test)]
pub(crate) fn single_face_ctx(
    verts: [Vector3<f64>; 3],
    uv: [nalgebra::Vector2<f64>; 3],
    fabric: crate::mesh::FabricParams,
) -> EnergyContext {
    let mesh = GarmentMesh::new(
        verts.to_vec(),
        vec![[0, 1, 2]],
        Some(uv.to_vec()),
        vec![vec![1.0]; 3],
        fabric,
    )
    .unwrap();
    EnergyContext::new(&mesh).unwrap()
}

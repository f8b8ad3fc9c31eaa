//! Central-finite-difference verification of every analytic gradient.
//!
//! Exposed as a library call (and the `gradcheck` CLI command) so a build
//! can prove its gradients on the machine it runs on, not just in CI.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{
    e_baraff_witkin_sq, e_bending, e_collision, e_gravity, e_inertia, e_mass_spring, e_stvk,
    ClothState, EnergyContext, LossMode,
};
use crate::error::Result;
use crate::mesh::FabricParams;
use crate::sdf::BodySdf;
use crate::synth;

/// Step for central differences, meters.
pub const FD_STEP: f64 = 1e-6;
/// Acceptance threshold on the relative gradient error.
pub const TOLERANCE: f64 = 1e-4;
/// Random configurations per term.
pub const CONFIGS: usize = 20;

#[derive(Debug, Clone)]
pub struct TermCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub terms: Vec<TermCheck>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.terms.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance && !self.terms.is_empty()
    }
}

/// Max-norm relative error between an analytic gradient and central finite
/// differences of `f`, normalized by the finite-difference magnitude.
pub fn fd_relative_error(
    f: &mut dyn FnMut(&[Vector3<f64>]) -> f64,
    analytic: &[Vector3<f64>],
    x: &[Vector3<f64>],
    h: f64,
) -> f64 {
    let mut xs = x.to_vec();
    let mut max_abs_diff = 0.0f64;
    let mut max_fd = 0.0f64;
    for i in 0..x.len() {
        for c in 0..3 {
            let orig = xs[i][c];
            xs[i][c] = orig + h;
            let fp = f(&xs);
            xs[i][c] = orig - h;
            let fm = f(&xs);
            xs[i][c] = orig;
            let fd = (fp - fm) / (2.0 * h);
            max_abs_diff = max_abs_diff.max((analytic[i][c] - fd).abs());
            max_fd = max_fd.max(fd.abs());
        }
    }
    max_abs_diff / max_fd.max(1e-6)
}

/// Run the full 7-term gradient suite on a small random swatch.
///
/// Every term is checked over [`CONFIGS`] seeded random configurations of
/// a 30-vertex swatch near (partially inside) a sphere collider.
pub fn run(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fabric = FabricParams::default();
    fabric.k_shear = 0.7;
    let mesh = synth::grid_garment(5, 6, 0.05, fabric)?;
    let ctx = EnergyContext::new(&mesh)?;
    let (sv, sf) = synth::sphere_mesh(0.12, 2);
    // Sphere centered inside the swatch footprint so some vertices collide.
    let center = Vector3::new(0.12, -0.1, -0.02);
    let body = BodySdf::new(sv.into_iter().map(|v| v + center).collect(), sf)?;

    let mut terms: Vec<TermCheck> = [
        "mass_spring",
        "baraff_witkin_sq",
        "stvk",
        "bending",
        "collision",
        "gravity",
        "inertia",
    ]
    .iter()
    .map(|&name| TermCheck { name, max_rel_err: 0.0 })
    .collect();

    for _ in 0..CONFIGS {
        let x = perturb(&mesh.vertices, 0.02, &mut rng);
        let x1 = perturb(&x, 0.005, &mut rng);
        let x2 = perturb(&x1, 0.005, &mut rng);
        let dt = 1.0 / 30.0;

        let checks: Vec<(usize, f64)> = vec![
            (0, {
                let (_, g) = e_mass_spring(&x, &ctx.topo, &ctx.rest, 10.0);
                fd_relative_error(
                    &mut |p| e_mass_spring(p, &ctx.topo, &ctx.rest, 10.0).0,
                    &g,
                    &x,
                    FD_STEP,
                )
            }),
            (1, {
                let (_, g) = e_baraff_witkin_sq(&x, &ctx.faces, &ctx.rest, 10.0, 0.7);
                fd_relative_error(
                    &mut |p| e_baraff_witkin_sq(p, &ctx.faces, &ctx.rest, 10.0, 0.7).0,
                    &g,
                    &x,
                    FD_STEP,
                )
            }),
            (2, {
                let (_, g) = e_stvk(&x, &ctx.faces, &ctx.rest, 8.0, 4.0);
                fd_relative_error(
                    &mut |p| e_stvk(p, &ctx.faces, &ctx.rest, 8.0, 4.0).0,
                    &g,
                    &x,
                    FD_STEP,
                )
            }),
            (3, {
                let (_, g, _) = e_bending(&x, &ctx.topo, &ctx.rest, 1e-4);
                fd_relative_error(
                    &mut |p| e_bending(p, &ctx.topo, &ctx.rest, 1e-4).0,
                    &g,
                    &x,
                    FD_STEP,
                )
            }),
            (4, {
                let (_, g, _) = e_collision(&x, &body, 10.0, 0.004);
                fd_relative_error(
                    &mut |p| e_collision(p, &body, 10.0, 0.004).0,
                    &g,
                    &x,
                    FD_STEP,
                )
            }),
            (5, {
                let (_, g) = e_gravity(&x, &ctx.masses);
                fd_relative_error(&mut |p| e_gravity(p, &ctx.masses).0, &g, &x, FD_STEP)
            }),
            (6, {
                let (_, g) = e_inertia(&x, &x1, &x2, &ctx.masses, dt)?;
                fd_relative_error(
                    &mut |p| e_inertia(p, &x1, &x2, &ctx.masses, dt).unwrap().0,
                    &g,
                    &x,
                    FD_STEP,
                )
            }),
        ];
        for (idx, err) in checks {
            terms[idx].max_rel_err = terms[idx].max_rel_err.max(err);
        }
    }
    Ok(GradcheckReport { terms, tolerance: TOLERANCE })
}

/// Check that the total-loss gradient equals the sum of term gradients by
/// finite differences of the composed objective.
pub fn check_total_loss(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = synth::grid_garment(4, 4, 0.06, FabricParams::default())?;
    let ctx = EnergyContext::new(&mesh)?;
    let (sv, sf) = synth::sphere_mesh(0.1, 2);
    let center = Vector3::new(0.09, -0.09, 0.0);
    let body = BodySdf::new(sv.into_iter().map(|v| v + center).collect(), sf)?;

    let x = perturb(&mesh.vertices, 0.02, &mut rng);
    let x1 = perturb(&x, 0.004, &mut rng);
    let x2 = perturb(&x1, 0.004, &mut rng);
    let mode = LossMode::Dynamic { dt: 1.0 / 30.0 };

    let state = ClothState::with_history(x.clone(), x1.clone(), x2.clone());
    let report = crate::energy::total_loss(&ctx, &state, Some(&body), mode)?;
    let err = fd_relative_error(
        &mut |p| {
            let s = ClothState::with_history(p.to_vec(), x1.clone(), x2.clone());
            crate::energy::total_loss(&ctx, &s, Some(&body), mode).unwrap().total()
        },
        &report.gradient,
        &x,
        FD_STEP,
    );
    Ok(err)
}

fn perturb(x: &[Vector3<f64>], scale: f64, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
    x.iter()
        .map(|p| {
            p + Vector3::new(
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
            )
        })
        .collect()
}

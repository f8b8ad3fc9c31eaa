//! A garment + body pair with the garment's energy context built once.

use nalgebra::Vector3;

use crate::body::{skin_lbs, skinning_transforms, BodyModel, Pose, PosedBody};
use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::mesh::GarmentMesh;
use crate::sdf::BodySdf;

#[derive(Debug, Clone)]
pub struct Scene {
    pub garment: GarmentMesh,
    pub body: BodyModel,
    pub energy: EnergyContext,
}

impl Scene {
    pub fn new(garment: GarmentMesh, body: BodyModel) -> Result<Self> {
        if garment.num_joints() != body.skeleton.num_joints() {
            return Err(Error::Shape(format!(
                "garment skinned to {} joints, body has {}",
                garment.num_joints(),
                body.skeleton.num_joints()
            )));
        }
        let energy = EnergyContext::new(&garment)?;
        Ok(Scene { garment, body, energy })
    }

    /// Garment rest vertices skinned to a pose (the network's output frame
    /// and the oracle's initial guess).
    pub fn skinned_garment(&self, pose: &Pose) -> Result<Vec<Vector3<f64>>> {
        let globals = crate::body::forward_kinematics(&self.body.skeleton, pose)?;
        let transforms = skinning_transforms(&globals, self.body.rest_globals());
        skin_lbs(&self.garment.vertices, &self.garment.blend_weights, &transforms)
    }

    /// Pose the body and build its signed-distance accelerator.
    pub fn posed_collider(&self, pose: &Pose) -> Result<(PosedBody, BodySdf)> {
        let posed = self.body.pose(pose)?;
        let sdf = BodySdf::new(posed.skin_vertices.clone(), self.body.skin_faces.clone())?;
        Ok((posed, sdf))
    }
}

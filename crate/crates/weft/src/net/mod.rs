//! Disentangled recurrent encoder-decoder for garment deformation.
//!
//! Two encoders share nothing: the static encoder (affine, with biases)
//! sees only the current pose descriptor and emits z_static; the dynamic
//! encoder (per-joint layers, two full layers and a GRU, all strictly
//! bias-free) consumes motion descriptors and emits z_dynamic. Zero motion
//! therefore produces an exactly zero z_dynamic, so the combined code
//! z = z_static + w * z_dynamic falls back to the static subspace by
//! construction. The decoder maps z to per-vertex rest-pose displacements,
//! which are then skinned with the body.

pub mod tape;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::Digest;

use crate::body::Pose;
use crate::descriptors::{window_rows, DescriptorKinds};
use crate::energy::ClothState;
use crate::error::{Error, Result};
use crate::scene::Scene;
pub use tape::{NodeId, Tape};

/// Garment-independent layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Latent dimension d of both z_static and z_dynamic.
    pub latent: usize,
    pub static_hidden: [usize; 3],
    pub dyn_joint_hidden: [usize; 2],
    pub dyn_hidden: usize,
    pub decoder_hidden: [usize; 2],
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            latent: 128,
            static_hidden: [256, 256, 256],
            dyn_joint_hidden: [32, 32],
            dyn_hidden: 256,
            decoder_hidden: [256, 512],
        }
    }
}

impl NetConfig {
    /// A small configuration for desk-scale experiments and tests.
    pub fn desk() -> Self {
        NetConfig {
            latent: 32,
            static_hidden: [64, 64, 64],
            dyn_joint_hidden: [16, 16],
            dyn_hidden: 64,
            decoder_hidden: [64, 128],
        }
    }
}

/// Everything needed to size the parameter arrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    /// Active joint count K.
    pub joints: usize,
    /// Per-joint static descriptor width (9 for the default kind).
    pub static_width: usize,
    /// Per-joint dynamic descriptor width (12 for the default kind).
    pub dynamic_width: usize,
    /// Garment vertex count N; the decoder emits 3N.
    pub vertices: usize,
    pub config: NetConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub bias: bool,
    pub data: Vec<f64>,
}

/// All learnable weights, in a fixed construction order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetParams {
    pub dims: NetDims,
    pub arrays: Vec<ParamArray>,
}

impl NetParams {
    /// Seeded fan-in initialization. The decoder's last layer starts at
    /// zero so the untrained model predicts the plainly skinned garment.
    pub fn init(dims: NetDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = dims.config;
        let d = c.latent;
        let s_in = dims.joints * dims.static_width;
        let [s0, s1, s2] = c.static_hidden;
        let [j0, j1] = c.dyn_joint_hidden;
        let [h0, h1] = c.decoder_hidden;
        let out = 3 * dims.vertices;

        let mut arrays = Vec::new();
        fn matrix(
            arrays: &mut Vec<ParamArray>,
            name: &str,
            rows: usize,
            cols: usize,
            rng: &mut ChaCha8Rng,
        ) {
            let bound = 1.0 / (cols as f64).sqrt();
            arrays.push(ParamArray {
                name: name.to_string(),
                rows,
                cols,
                bias: false,
                data: (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect(),
            });
        }
        fn bias(arrays: &mut Vec<ParamArray>, name: &str, rows: usize) {
            arrays.push(ParamArray {
                name: name.to_string(),
                rows,
                cols: 1,
                bias: true,
                data: vec![0.0; rows],
            });
        }

        matrix(&mut arrays, "enc_s.w0", s0, s_in, &mut rng);
        bias(&mut arrays, "enc_s.b0", s0);
        matrix(&mut arrays, "enc_s.w1", s1, s0, &mut rng);
        bias(&mut arrays, "enc_s.b1", s1);
        matrix(&mut arrays, "enc_s.w2", s2, s1, &mut rng);
        bias(&mut arrays, "enc_s.b2", s2);
        matrix(&mut arrays, "enc_s.w3", d, s2, &mut rng);
        bias(&mut arrays, "enc_s.b3", d);

        matrix(&mut arrays, "enc_d.j0", j0, dims.dynamic_width, &mut rng);
        matrix(&mut arrays, "enc_d.j1", j1, j0, &mut rng);
        matrix(&mut arrays, "enc_d.w0", c.dyn_hidden, j1 * dims.joints, &mut rng);
        matrix(&mut arrays, "enc_d.w1", d, c.dyn_hidden, &mut rng);
        for gate in ["r", "u", "c"] {
            matrix(&mut arrays, &format!("enc_d.gru_w{gate}"), d, d, &mut rng);
            matrix(&mut arrays, &format!("enc_d.gru_u{gate}"), d, d, &mut rng);
        }

        matrix(&mut arrays, "dec.w0", h0, d, &mut rng);
        bias(&mut arrays, "dec.b0", h0);
        matrix(&mut arrays, "dec.w1", h1, h0, &mut rng);
        bias(&mut arrays, "dec.b1", h1);
        // zero-initialized final layer
        arrays.push(ParamArray {
            name: "dec.w2".into(),
            rows: out,
            cols: h1,
            bias: false,
            data: vec![0.0; out * h1],
        });
        bias(&mut arrays, "dec.b2", out);

        let params = NetParams { dims, arrays };
        debug_assert!(params.dynamic_branch_bias_free());
        params
    }

    pub fn index(&self, name: &str) -> usize {
        self.arrays
            .iter()
            .position(|a| a.name == name)
            .unwrap_or_else(|| panic!("unknown parameter array '{name}'"))
    }

    /// Structural check backing the disentanglement contract: no array in
    /// the dynamic encoder is a bias vector.
    pub fn dynamic_branch_bias_free(&self) -> bool {
        self.arrays.iter().filter(|a| a.name.starts_with("enc_d.")).all(|a| !a.bias)
    }

    pub fn num_scalars(&self) -> usize {
        self.arrays.iter().map(|a| a.data.len()).sum()
    }

    /// Hash of everything that must match for a checkpoint to load.
    pub fn config_hash(&self) -> String {
        hash_dims(&self.dims)
    }
}

pub fn hash_dims(dims: &NetDims) -> String {
    let json = serde_json::to_string(dims).expect("dims serialize");
    let digest = sha2::Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// GRU hidden state; zero at the start of every sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
}

impl RecurrentState {
    pub fn zero(latent: usize) -> Self {
        RecurrentState { hidden: vec![0.0; latent] }
    }
}

/// The two latent halves plus the motion scale; z = z_static + w z_dynamic.
#[derive(Debug, Clone)]
pub struct LatentCode {
    pub z_static: Vec<f64>,
    pub z_dynamic: Vec<f64>,
    pub w: f64,
}

impl LatentCode {
    pub fn combined(&self) -> Vec<f64> {
        self.z_static
            .iter()
            .zip(&self.z_dynamic)
            .map(|(s, d)| s + self.w * d)
            .collect()
    }
}

/// Parameter arrays registered as leaves on one tape.
pub struct ModelTape<'p> {
    pub params: &'p NetParams,
    ids: Vec<NodeId>,
}

impl<'p> ModelTape<'p> {
    pub fn new(tape: &mut Tape, params: &'p NetParams) -> Self {
        let ids = params.arrays.iter().map(|a| tape.leaf(a.data.clone())).collect();
        ModelTape { params, ids }
    }

    pub fn id(&self, name: &str) -> NodeId {
        self.ids[self.params.index(name)]
    }

    /// Per-array gradients accumulated by a backward pass, in array order.
    pub fn gradients(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.ids.iter().map(|id| tape.grad(*id).to_vec()).collect()
    }

    fn affine(&self, tape: &mut Tape, w: &str, b: &str, x: NodeId) -> Result<NodeId> {
        let wi = self.params.index(w);
        let arr = &self.params.arrays[wi];
        let y = tape.matvec(self.ids[wi], arr.rows, arr.cols, x)?;
        tape.add(y, self.id(b))
    }

    fn linear(&self, tape: &mut Tape, w: &str, x: NodeId) -> Result<NodeId> {
        let wi = self.params.index(w);
        let arr = &self.params.arrays[wi];
        tape.matvec(self.ids[wi], arr.rows, arr.cols, x)
    }

    /// Static encoder: flattened per-joint rows through 4 affine layers.
    pub fn encode_static(&self, tape: &mut Tape, static_desc: &[Vec<f64>]) -> Result<NodeId> {
        let expect = self.params.dims.joints;
        if static_desc.len() != expect {
            return Err(Error::Shape(format!(
                "{} static rows for {expect} joints",
                static_desc.len()
            )));
        }
        let flat: Vec<f64> = static_desc.iter().flatten().copied().collect();
        let x = tape.leaf(flat);
        let mut h = self.affine(tape, "enc_s.w0", "enc_s.b0", x)?;
        h = tape.relu(h);
        h = self.affine(tape, "enc_s.w1", "enc_s.b1", h)?;
        h = tape.relu(h);
        h = self.affine(tape, "enc_s.w2", "enc_s.b2", h)?;
        h = tape.relu(h);
        self.affine(tape, "enc_s.w3", "enc_s.b3", h)
    }

    /// Gated recurrent cell, bias-free:
    ///   r = sigmoid(Wr x + Ur h), u = sigmoid(Wu x + Uu h),
    ///   c = tanh(Wc x + Uc (r o h)), h' = (1 - u) o h + u o c.
    pub fn gru_cell(&self, tape: &mut Tape, x: NodeId, hidden: NodeId) -> Result<NodeId> {
        let wr = self.linear(tape, "enc_d.gru_wr", x)?;
        let ur = self.linear(tape, "enc_d.gru_ur", hidden)?;
        let r_pre = tape.add(wr, ur)?;
        let r = tape.sigmoid(r_pre);

        let wu = self.linear(tape, "enc_d.gru_wu", x)?;
        let uu = self.linear(tape, "enc_d.gru_uu", hidden)?;
        let u_pre = tape.add(wu, uu)?;
        let u = tape.sigmoid(u_pre);

        let rh = tape.hadamard(r, hidden)?;
        let wc = self.linear(tape, "enc_d.gru_wc", x)?;
        let uc = self.linear(tape, "enc_d.gru_uc", rh)?;
        let c_pre = tape.add(wc, uc)?;
        let c = tape.tanh(c_pre);

        // h' = h - u o h + u o c
        let uh = tape.hadamard(u, hidden)?;
        let keep = tape.sub(hidden, uh)?;
        let uc2 = tape.hadamard(u, c)?;
        tape.add(keep, uc2)
    }

    /// One dynamic-encoder step: per-joint layers, flatten, two full
    /// layers, GRU update. Returns the new hidden state node (= z_dynamic
    /// at this step). All layers bias-free.
    pub fn encode_dynamic_step(
        &self,
        tape: &mut Tape,
        dynamic_desc: &[Vec<f64>],
        hidden: NodeId,
    ) -> Result<NodeId> {
        let expect = self.params.dims.joints;
        if dynamic_desc.len() != expect {
            return Err(Error::Shape(format!(
                "{} dynamic rows for {expect} joints",
                dynamic_desc.len()
            )));
        }
        let mut per_joint = Vec::with_capacity(dynamic_desc.len());
        for row in dynamic_desc {
            let x = tape.leaf(row.clone());
            let mut h = self.linear(tape, "enc_d.j0", x)?;
            h = tape.relu(h);
            h = self.linear(tape, "enc_d.j1", h)?;
            h = tape.relu(h);
            per_joint.push(h);
        }
        let flat = tape.concat(&per_joint);
        let mut h = self.linear(tape, "enc_d.w0", flat)?;
        h = tape.relu(h);
        let x = self.linear(tape, "enc_d.w1", h)?;
        self.gru_cell(tape, x, hidden)
    }

    /// Decoder: latent code to 3N rest-pose displacements.
    pub fn decode(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId> {
        let mut h = self.affine(tape, "dec.w0", "dec.b0", z)?;
        h = tape.relu(h);
        h = self.affine(tape, "dec.w1", "dec.b1", h)?;
        h = tape.relu(h);
        self.affine(tape, "dec.w2", "dec.b2", h)
    }
}

/// Check that network dims agree with the scene and descriptor kinds.
pub fn validate_dims(params: &NetParams, scene: &Scene, kinds: DescriptorKinds) -> Result<()> {
    let k = scene.body.skeleton.num_active();
    let n = scene.garment.num_vertices();
    let d = &params.dims;
    if d.joints != k || d.vertices != n {
        return Err(Error::Shape(format!(
            "model sized for K={} N={}, scene has K={k} N={n}",
            d.joints, d.vertices
        )));
    }
    if d.static_width != kinds.statics.width() || d.dynamic_width != kinds.dynamics.width() {
        return Err(Error::Shape(format!(
            "model descriptor widths ({}, {}) do not match kinds ({}, {})",
            d.static_width,
            d.dynamic_width,
            kinds.statics.width(),
            kinds.dynamics.width()
        )));
    }
    Ok(())
}

fn check_finite_positions(x: &[Vector3<f64>]) -> Result<()> {
    if x.iter().any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite())) {
        return Err(Error::Numerics("prediction contains NaN or infinity".into()));
    }
    Ok(())
}

/// Apply decoded displacements and skin to the pose. Returns the world
/// positions and the per-vertex Jacobian of world position w.r.t. the
/// displacement (the blended rotation), used to chain energy gradients
/// back into the decoder.
fn skin_displaced(
    scene: &Scene,
    delta: &[f64],
    pose: &Pose,
) -> Result<(Vec<Vector3<f64>>, Vec<Matrix3<f64>>)> {
    let n = scene.garment.num_vertices();
    if delta.len() != 3 * n {
        return Err(Error::Shape(format!("decoder emitted {} values for {n} vertices", delta.len())));
    }
    let globals = crate::body::forward_kinematics(&scene.body.skeleton, pose)?;
    let transforms = crate::body::skinning_transforms(&globals, scene.body.rest_globals());
    let displaced: Vec<Vector3<f64>> = scene
        .garment
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| v + Vector3::new(delta[3 * i], delta[3 * i + 1], delta[3 * i + 2]))
        .collect();
    let world = crate::body::skin_lbs(&displaced, &scene.garment.blend_weights, &transforms)?;
    check_finite_positions(&world)?;
    let blend = scene
        .garment
        .blend_weights
        .iter()
        .map(|row| crate::body::blend_rotation(row, &transforms))
        .collect();
    Ok((world, blend))
}

/// Chain an energy gradient dL/d(world position) through the skinning to
/// the flat displacement vector the decoder produced.
pub fn chain_to_delta(grad_world: &[Vector3<f64>], blend: &[Matrix3<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grad_world.len() * 3);
    for (g, b) in grad_world.iter().zip(blend) {
        let d = b.transpose() * g;
        out.extend_from_slice(&[d.x, d.y, d.z]);
    }
    out
}

/// Forward evaluation of a window with the decode-at-last-3-frames scheme,
/// keeping the tape alive for a backward pass.
///
/// Gradient flow: the previous two predictions hang off the shared GRU
/// rollout as unseeded branches, so seeding only `delta_t` reproduces the
/// rule that no gradient travels through x_{t-1} or x_{t-2}.
pub struct TripleForward {
    pub tape: Tape,
    param_ids: Vec<NodeId>,
    /// Displacement node for the last frame (the only one to seed).
    pub delta_t: NodeId,
    pub x_t: Vec<Vector3<f64>>,
    pub x_prev: Vec<Vector3<f64>>,
    pub x_prev2: Vec<Vector3<f64>>,
    /// Jacobians of x_t w.r.t. the decoded displacement.
    pub blend_t: Vec<Matrix3<f64>>,
    pub latent: LatentCode,
}

impl TripleForward {
    /// Seed dL/d(delta_t) and collect per-array parameter gradients.
    pub fn backward(&mut self, seed: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.tape.backward(self.delta_t, seed)?;
        Ok(self.param_ids.iter().map(|id| self.tape.grad(*id).to_vec()).collect())
    }
}

/// Run the recurrent rollout over a window and decode the last three
/// frames. The hidden state starts at zero (training windows are
/// independent); inference uses [`infer_step`] instead.
pub fn decode_triple(
    params: &NetParams,
    scene: &Scene,
    kinds: DescriptorKinds,
    frames: &[Pose],
    dt: f64,
    w: f64,
) -> Result<TripleForward> {
    if frames.len() < 3 {
        return Err(Error::Config(format!(
            "decode_triple needs a window of >= 3 frames, got {}",
            frames.len()
        )));
    }
    validate_dims(params, scene, kinds)?;
    let rows = window_rows(frames, dt, &scene.body.skeleton, kinds)?;
    let mut tape = Tape::new();
    let model = ModelTape::new(&mut tape, params);

    let mut hidden = tape.leaf(vec![0.0; params.dims.config.latent]);
    let mut hiddens = Vec::with_capacity(rows.len());
    for (_, dyn_rows) in &rows {
        hidden = model.encode_dynamic_step(&mut tape, dyn_rows, hidden)?;
        hiddens.push(hidden);
    }

    let n = rows.len();
    let mut decode_at = |idx: usize, tape: &mut Tape| -> Result<(NodeId, Vec<f64>, Vec<f64>)> {
        let z_s = model.encode_static(tape, &rows[idx].0)?;
        let z = tape.add_scaled(z_s, hiddens[idx], w)?;
        let delta = model.decode(tape, z)?;
        Ok((delta, tape.value(z_s).to_vec(), tape.value(hiddens[idx]).to_vec()))
    };

    let (delta_t, z_s, z_d) = decode_at(n - 1, &mut tape)?;
    let (delta_p, _, _) = decode_at(n - 2, &mut tape)?;
    let (delta_p2, _, _) = decode_at(n - 3, &mut tape)?;

    let (x_t, blend_t) = skin_displaced(scene, tape.value(delta_t), &frames[n - 1])?;
    let (x_prev, _) = skin_displaced(scene, tape.value(delta_p), &frames[n - 2])?;
    let (x_prev2, _) = skin_displaced(scene, tape.value(delta_p2), &frames[n - 3])?;

    let param_ids = params.arrays.iter().map(|a| model.id(&a.name)).collect();
    Ok(TripleForward {
        tape,
        param_ids,
        delta_t,
        x_t,
        x_prev,
        x_prev2,
        blend_t,
        latent: LatentCode { z_static: z_s, z_dynamic: z_d, w },
    })
}

/// Forward-only prediction for a window: rollout, combine, decode, skin.
pub fn predict(
    params: &NetParams,
    scene: &Scene,
    kinds: DescriptorKinds,
    frames: &[Pose],
    dt: f64,
    w: f64,
) -> Result<ClothState> {
    if frames.is_empty() {
        return Err(Error::Config("predict needs at least one frame".into()));
    }
    validate_dims(params, scene, kinds)?;
    let rows = window_rows(frames, dt, &scene.body.skeleton, kinds)?;
    let mut tape = Tape::new();
    let model = ModelTape::new(&mut tape, params);
    let mut hidden = tape.leaf(vec![0.0; params.dims.config.latent]);
    for (_, dyn_rows) in &rows {
        hidden = model.encode_dynamic_step(&mut tape, dyn_rows, hidden)?;
    }
    let z_s = model.encode_static(&mut tape, &rows[rows.len() - 1].0)?;
    let z = tape.add_scaled(z_s, hidden, w)?;
    let delta = model.decode(&mut tape, z)?;
    let (x, _) = skin_displaced(scene, tape.value(delta), &frames[frames.len() - 1])?;
    Ok(ClothState::new(x))
}

/// Purely static prediction of a single pose: decode z_static alone.
pub fn predict_static(
    params: &NetParams,
    scene: &Scene,
    kinds: DescriptorKinds,
    pose: &Pose,
) -> Result<ClothState> {
    validate_dims(params, scene, kinds)?;
    let rows = crate::descriptors::static_rows(pose, &scene.body.skeleton, kinds.statics)?;
    let mut tape = Tape::new();
    let model = ModelTape::new(&mut tape, params);
    let z_s = model.encode_static(&mut tape, &rows)?;
    // Identical arithmetic to predict() at w = 0: z = z_s + 0 * z_d.
    let zero = tape.leaf(vec![0.0; params.dims.config.latent]);
    let z = tape.add_scaled(z_s, zero, 0.0)?;
    let delta = model.decode(&mut tape, z)?;
    let (x, _) = skin_displaced(scene, tape.value(delta), pose)?;
    Ok(ClothState::new(x))
}

/// Streaming inference: the recurrent state persists across arbitrarily
/// long sequences; the pose stencil is seeded with still frames.
pub struct StreamState {
    pub recurrent: RecurrentState,
    prev: Option<Pose>,
    prev2: Option<Pose>,
}

impl StreamState {
    pub fn new(latent: usize) -> Self {
        StreamState { recurrent: RecurrentState::zero(latent), prev: None, prev2: None }
    }
}

/// Advance the stream by one pose and predict the garment.
pub fn infer_step(
    params: &NetParams,
    scene: &Scene,
    kinds: DescriptorKinds,
    stream: &mut StreamState,
    pose: &Pose,
    dt: f64,
    w: f64,
) -> Result<Vec<Vector3<f64>>> {
    validate_dims(params, scene, kinds)?;
    let skel = &scene.body.skeleton;
    let p1 = stream.prev.clone().unwrap_or_else(|| pose.clone());
    let p2 = stream.prev2.clone().or_else(|| stream.prev.clone()).unwrap_or_else(|| pose.clone());
    let s_rows = crate::descriptors::static_rows(pose, skel, kinds.statics)?;
    let d_rows = crate::descriptors::dynamic_rows(&[p2, p1, pose.clone()], dt, skel, kinds.dynamics)?;

    let mut tape = Tape::new();
    let model = ModelTape::new(&mut tape, params);
    let hidden_in = tape.leaf(stream.recurrent.hidden.clone());
    let hidden = model.encode_dynamic_step(&mut tape, &d_rows, hidden_in)?;
    let z_s = model.encode_static(&mut tape, &s_rows)?;
    let z = tape.add_scaled(z_s, hidden, w)?;
    let delta = model.decode(&mut tape, z)?;
    let (x, _) = skin_displaced(scene, tape.value(delta), pose)?;

    stream.recurrent.hidden = tape.value(hidden).to_vec();
    stream.prev2 = stream.prev.take();
    stream.prev = Some(pose.clone());
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::FabricParams;
    use crate::synth;

    fn small_scene() -> Scene {
        let parts = synth::pendulum_scene(6, 5, FabricParams::default()).unwrap();
        Scene::new(parts.garment, parts.body).unwrap()
    }

    fn small_params(scene: &Scene, seed: u64) -> NetParams {
        let kinds = DescriptorKinds::default();
        NetParams::init(
            NetDims {
                joints: scene.body.skeleton.num_active(),
                static_width: kinds.statics.width(),
                dynamic_width: kinds.dynamics.width(),
                vertices: scene.garment.num_vertices(),
                config: NetConfig { latent: 8, static_hidden: [16, 16, 16], dyn_joint_hidden: [8, 8], dyn_hidden: 16, decoder_hidden: [16, 24] },
            },
            seed,
        )
    }

    fn swing_window(scene: &Scene, frames: usize) -> Vec<Pose> {
        let seq = synth::generate_motion(
            &scene.body.skeleton,
            &[synth::MotionKind::Swing {
                joint: 0,
                axis: nalgebra::Vector3::z_axis().into_inner(),
                amplitude: 0.5,
                frequency: 1.0,
            }],
            frames,
            30.0,
        )
        .unwrap();
        seq.frames
    }

    #[test]
    fn dynamic_branch_is_structurally_bias_free() {
        let scene = small_scene();
        let p = small_params(&scene, 1);
        assert!(p.dynamic_branch_bias_free());
    }

    #[test]
    fn zero_motion_gives_exactly_zero_dynamic_code() {
        let scene = small_scene();
        for seed in 0..20 {
            let p = small_params(&scene, seed);
            let mut tape = Tape::new();
            let model = ModelTape::new(&mut tape, &p);
            let hidden = tape.leaf(vec![0.0; 8]);
            let zero_rows = vec![vec![0.0; 12]; p.dims.joints];
            let h = model.encode_dynamic_step(&mut tape, &zero_rows, hidden).unwrap();
            assert!(tape.value(h).iter().all(|&v| v == 0.0), "seed {seed}");
        }
    }

    #[test]
    fn gru_zero_input_zero_hidden_is_fixed_point() {
        let scene = small_scene();
        let p = small_params(&scene, 3);
        let mut tape = Tape::new();
        let model = ModelTape::new(&mut tape, &p);
        let x = tape.leaf(vec![0.0; 8]);
        let h0 = tape.leaf(vec![0.0; 8]);
        let h1 = model.gru_cell(&mut tape, x, h0).unwrap();
        assert!(tape.value(h1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn untrained_model_predicts_skinned_garment() {
        let scene = small_scene();
        let p = small_params(&scene, 7);
        let frames = swing_window(&scene, 5);
        let out = predict(&p, &scene, DescriptorKinds::default(), &frames, 1.0 / 30.0, 1.0)
            .unwrap();
        let skinned = scene.skinned_garment(&frames[4]).unwrap();
        for (a, b) in out.positions.iter().zip(&skinned) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn motion_scale_zero_equals_static_prediction_bitwise() {
        let scene = small_scene();
        let mut p = small_params(&scene, 9);
        // give the decoder nonzero weights so the check is not vacuous
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let wi = p.index("dec.w2");
        for v in &mut p.arrays[wi].data {
            *v = rng.random_range(-0.01..0.01);
        }
        let frames = swing_window(&scene, 6);
        let kinds = DescriptorKinds::default();
        let dynamic = predict(&p, &scene, kinds, &frames, 1.0 / 30.0, 0.0).unwrap();
        let statics = predict_static(&p, &scene, kinds, &frames[5]).unwrap();
        for (a, b) in dynamic.positions.iter().zip(&statics.positions) {
            assert_eq!(a, b, "w=0 must match the static path bit-exactly");
        }
    }

    #[test]
    fn constant_window_matches_static_prediction() {
        let scene = small_scene();
        let mut p = small_params(&scene, 11);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(78);
        let wi = p.index("dec.w2");
        for v in &mut p.arrays[wi].data {
            *v = rng.random_range(-0.01..0.01);
        }
        let pose = Pose::identity(scene.body.skeleton.num_joints());
        let frames = vec![pose.clone(); 6];
        let kinds = DescriptorKinds::default();
        let out = predict(&p, &scene, kinds, &frames, 1.0 / 30.0, 1.0).unwrap();
        let statics = predict_static(&p, &scene, kinds, &pose).unwrap();
        for (a, b) in out.positions.iter().zip(&statics.positions) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn still_frame_padding_leaves_dynamic_code_unchanged() {
        let scene = small_scene();
        let mut p = small_params(&scene, 13);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(79);
        let wi = p.index("dec.w2");
        for v in &mut p.arrays[wi].data {
            *v = rng.random_range(-0.01..0.01);
        }
        let frames = swing_window(&scene, 6);
        let kinds = DescriptorKinds::default();
        let t = decode_triple(&p, &scene, kinds, &frames, 1.0 / 30.0, 1.0).unwrap();
        // pad the front with 4 copies of the first frame
        let mut padded = vec![frames[0].clone(); 4];
        padded.extend(frames.iter().cloned());
        let tp = decode_triple(&p, &scene, kinds, &padded, 1.0 / 30.0, 1.0).unwrap();
        for (a, b) in t.latent.z_dynamic.iter().zip(&tp.latent.z_dynamic) {
            assert_eq!(a, b, "still-frame padding changed z_dynamic");
        }
    }

    #[test]
    fn triple_decode_matches_prefix_predictions() {
        let scene = small_scene();
        let mut p = small_params(&scene, 15);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(80);
        let wi = p.index("dec.w2");
        for v in &mut p.arrays[wi].data {
            *v = rng.random_range(-0.01..0.01);
        }
        let frames = swing_window(&scene, 7);
        let kinds = DescriptorKinds::default();
        let t = decode_triple(&p, &scene, kinds, &frames, 1.0 / 30.0, 1.0).unwrap();
        // x_{t-1} equals predict on the window truncated by one, except the
        // truncated run must keep the same stencil padding, i.e. drop the
        // last frame only.
        let out_prev = predict(&p, &scene, kinds, &frames[..6], 1.0 / 30.0, 1.0).unwrap();
        for (a, b) in t.x_prev.iter().zip(&out_prev.positions) {
            assert!((a - b).norm() < 1e-9);
        }
        let out_prev2 = predict(&p, &scene, kinds, &frames[..5], 1.0 / 30.0, 1.0).unwrap();
        for (a, b) in t.x_prev2.iter().zip(&out_prev2.positions) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn window_too_short_is_config_error() {
        let scene = small_scene();
        let p = small_params(&scene, 17);
        let frames = swing_window(&scene, 2);
        let err = decode_triple(&p, &scene, DescriptorKinds::default(), &frames, 1.0 / 30.0, 1.0)
            .err()
            .expect("short window must fail");
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn latent_combination_is_linear_in_w() {
        let code = LatentCode {
            z_static: vec![0.5, -1.0],
            z_dynamic: vec![2.0, 0.25],
            w: 0.75,
        };
        let z = code.combined();
        assert_eq!(z[0], 0.5 + 0.75 * 2.0);
        assert_eq!(z[1], -1.0 + 0.75 * 0.25);
    }

    #[test]
    fn full_model_backward_matches_finite_differences() {
        let scene = small_scene();
        let kinds = DescriptorKinds::default();
        let dt = 1.0 / 30.0;
        for seed in 0..10u64 {
            let mut p = small_params(&scene, seed + 50);
            // non-degenerate decoder
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 99);
            let wi = p.index("dec.w2");
            for v in &mut p.arrays[wi].data {
                *v = rng.random_range(-0.05..0.05);
            }
            let frames = swing_window(&scene, 5);

            let mut fwd = decode_triple(&p, &scene, kinds, &frames, dt, 1.0).unwrap();
            // The previous states are constants of the loss (stop-gradient
            // rule), so the finite-difference objective must hold them at
            // the base forward's values.
            let frozen_prev = fwd.x_prev.clone();
            let frozen_prev2 = fwd.x_prev2.clone();
            let loss = |params: &NetParams| -> f64 {
                let t = decode_triple(params, &scene, kinds, &frames, dt, 1.0).unwrap();
                let state = ClothState::with_history(
                    t.x_t.clone(),
                    frozen_prev.clone(),
                    frozen_prev2.clone(),
                );
                let report = crate::energy::total_loss(
                    &scene.energy,
                    &state,
                    None,
                    crate::energy::LossMode::Dynamic { dt },
                )
                .unwrap();
                report.total()
            };
            let state = ClothState::with_history(
                fwd.x_t.clone(),
                fwd.x_prev.clone(),
                fwd.x_prev2.clone(),
            );
            let report = crate::energy::total_loss(
                &scene.energy,
                &state,
                None,
                crate::energy::LossMode::Dynamic { dt },
            )
            .unwrap();
            let seed_vec = chain_to_delta(&report.gradient, &fwd.blend_t);
            let grads = fwd.backward(&seed_vec).unwrap();

            // probe a handful of parameters in every array
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for (ai, arr) in p.arrays.clone().iter().enumerate() {
                if arr.data.is_empty() {
                    continue;
                }
                for _ in 0..3 {
                    let i = rng.random_range(0..arr.data.len());
                    let orig = p.arrays[ai].data[i];
                    p.arrays[ai].data[i] = orig + h;
                    let fp = loss(&p);
                    p.arrays[ai].data[i] = orig - h;
                    let fm = loss(&p);
                    p.arrays[ai].data[i] = orig;
                    let fd = (fp - fm) / (2.0 * h);
                    let rel = (grads[ai][i] - fd).abs() / fd.abs().max(1e-5);
                    worst = worst.max(rel);
                }
            }
            assert!(worst < 1e-4, "seed {seed}: worst rel err {worst}");
        }
    }
}

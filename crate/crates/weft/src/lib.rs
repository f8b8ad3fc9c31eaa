//! Unsupervised neural cloth simulation.
//!
//! The crate has two simulation paths that share one set of differentiable
//! energy terms:
//!
//! * [`oracle`] — a classical per-frame simulator that drapes a garment by
//!   direct energy minimization and steps dynamics by minimizing the
//!   incremental potential. Slow, but trustworthy; used as the reference.
//! * [`net`] + [`train`] — a recurrent encoder-decoder that learns garment
//!   dynamics from body motion alone, trained by minimizing the same
//!   energies as losses. No ground-truth cloth data is involved.
//!
//! Supporting modules: [`mesh`] (garment topology and rest state),
//! [`body`] (skeleton, skinning, signed distance), [`descriptors`]
//! (pose/motion features fed to the network), [`synth`] (procedural test
//! scenes and motions), and [`gradcheck`] (finite-difference verification
//! of every analytic gradient).

pub mod body;
pub mod descriptors;
pub mod energy;
pub mod error;
pub mod gradcheck;
pub mod mesh;
pub mod net;
pub mod obj;
pub mod oracle;
pub mod scene;
pub mod sdf;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Gravitational acceleration, Y-up world: g = (0, -9.81, 0) m/s^2.
pub const GRAVITY: [f64; 3] = [0.0, -9.81, 0.0];

/// |g| in m/s^2.
pub const GRAVITY_MAG: f64 = 9.81;

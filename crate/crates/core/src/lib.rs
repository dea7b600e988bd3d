//! Differentiable structure-from-motion.
//!
//! The crate turns depth maps, rigid camera motion and pinhole intrinsics into
//! synthesized views through a reverse-mode differentiation engine, scores
//! them with photometric and smoothness losses, builds plane-sweep cost
//! volumes, and recovers the unknowns by direct gradient descent on
//! analytically rendered planar scenes.
//!
//! Module map:
//!
//! * [`tensor`] / [`autodiff`] / [`gradcheck`]: dense `f64` tensors, the
//!   recording graph and finite-difference verification.
//! * [`diagnostics`]: gradient checks over the full loss stack.
//! * [`camera`]: intrinsics, axis-angle poses and the differentiable warp.
//! * [`sampling`]: bilinear sampling and target-view synthesis.
//! * [`losses`]: SSIM, the photometric mix, data fidelity, smoothness and
//!   depth-consistency terms.
//! * [`cost_volume`]: depth planes, features, cost volumes and argmin depth.
//! * [`scenes`]: exact ray-cast renderer for planar textured scenes.
//! * [`optim`]: Adam, the step schedule and the recovery solver.
//! * [`eval`]: median scaling, depth metrics and pose/intrinsic errors.
//! * [`io`] / [`cli`]: PFM/PPM/CSV/JSON formats and the command-line surface.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod camera;
pub mod cli;
pub mod cost_volume;
pub mod diagnostics;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod optim;
pub mod sampling;
pub mod scenes;
pub mod tensor;

pub use autodiff::{Gradients, Graph, Var};
pub use camera::{Intrinsics, PixelGrid, PoseSE3};
pub use error::{Error, Result};
pub use tensor::Tensor;

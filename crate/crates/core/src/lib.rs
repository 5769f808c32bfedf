//! Lagrange-Galerkin finite elements for the 2D convection-diffusion problem
//! `phi_t + u . grad phi - nu Lap phi = f` with homogeneous Dirichlet data.
//!
//! Two composite-term strategies are provided behind [`schemes::CompositeScheme`]:
//! `gslg` integrates `(phi_prev o X_1h, psi_h)` exactly after linearizing the
//! velocity and clipping the image of every element, `lgq` evaluates it with
//! the seven-point degree-5 rule at the exact characteristic feet.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advect;
pub mod error;
pub mod fe_space;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod schemes;

pub use error::{Error, Result};

//! Articulated Gaussian mouse avatars, geodesic correspondence embeddings,
//! triplane neural fields, and a toy single-image reconstructor.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`mesh`]: skinned mesh model, forward kinematics, linear blend skinning
//! - [`splat`]: differentiable Gaussian splatting (forward + analytic backward)
//! - [`avatar`]: UV-anchored Gaussian maps bound to the mesh, per-frame fitting
//! - [`embed`]: geodesic distances, stress-minimized 3D embeddings, HSV colors
//! - [`field`]: triplane grids + multi-head MLP neural field with gradients
//! - [`volume`]: ray-marched volumetric rendering over the field
//! - [`tet`]: tetrahedral grids, marching tetrahedra, SDF distillation
//! - [`raster`]: z-buffered triangle rasterizer for surface renders
//! - [`dataset`]: camera rigs, multi-view scene rendering, manifests
//! - [`recon`]: image-to-triplane toy reconstructor and two-stage training
//! - [`metrics`]: PSNR/SSIM and the novel-view evaluation harness
//!
//! All data-parallel inner loops go through [`par`], which uses rayon by
//! default and falls back to sequential execution when the `parallel`
//! feature is disabled (or when forced at runtime, used by the benchmarks).

pub mod avatar;
pub mod camera;
pub mod container;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod export;
pub mod field;
pub mod fixtures;
pub mod img;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod raster;
pub mod recon;
pub mod splat;
pub mod ssim;
pub mod tape;
pub mod tet;
pub mod volume;

pub use error::{Error, Result};

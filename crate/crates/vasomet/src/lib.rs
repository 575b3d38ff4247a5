//! vasomet: batch morphometry of retinal vascular geometry.
//!
//! The pipeline turns labeled artery/vein masks into quantitative vessel
//! parameters and cohort statistics:
//!
//! 1. **ingest** — manifests, masks, disc annotations, refraction groups,
//!    quality gating.
//! 2. **skeleton / graph** — binary-mask cleanup, thinning to one-pixel
//!    centerlines, extraction of a node/edge graph with per-pixel radius
//!    profiles from the distance transform.
//! 3. **topology** — rooting each system's trees at the optic disc,
//!    Strahler ordering, and junction classification (branching vs.
//!    bifurcation, with arteriovenous crossings excluded).
//! 4. **morphometry** — main angle (MA), branching angle/coefficient
//!    (BA/BC), and bifurcation edge angle/coefficient (BEA/BEC) inside the
//!    peripapillary measurement annulus.
//! 5. **stats** — group descriptives, one-way ANOVA, and pairwise mean
//!    differences with 95% CIs, emitted as table/JSON reports.
//! 6. **synth** — a scripted vascular-tree generator with exact ground
//!    truth, used as the measurement oracle and cohort simulator.
//!
//! Scalar-valued math (geometry fits, distribution functions, descriptive
//! statistics) is generic over [`num::Real`]; the pipeline itself works in
//! [`Scalar`] (`f64`).

pub mod config;
pub mod error;
pub mod geom;
pub mod graph;
pub mod ingest;
pub mod morphometry;
pub mod num;
pub mod plot;
pub mod raster;
pub mod skeleton;
pub mod stats;
pub mod synth;
pub mod topology;

pub use config::RunConfig;
pub use error::{Error, Result};

/// Scalar type used by the concrete pipeline.
pub type Scalar = f64;
/// 2D point/vector in pixel coordinates (x right, y down).
pub type Point = geom::Vec2<Scalar>;

//! Spatial malaria resurgence risk engine.
//!
//! The pipeline runs from field, climate and migrant inputs to per-region
//! risk outcomes:
//!
//! 1. [`climate`]: 30-day temperature windows interpolated at each region,
//!    and the temperature-driven pre-bloodmeal delay and mortality rate.
//! 2. [`entomology`]: mosquito-to-human ratio from traps, and Monte Carlo
//!    draws of the literature parameters.
//! 3. [`transmission`]: vectorial capacity and R0 per draw, summarized by
//!    the median.
//! 4. [`exposure`]: initially infected fraction from migrant sites.
//! 5. [`finalsize`]: attack probability and expected infections.
//! 6. [`surface`]: kernel-density risk rasters and hotspot GeoJSON.
//!
//! [`pipeline`] wires these together under a [`config::RunConfig`] and
//! writes the [`tables`], grids and manifest. [`synth`] generates a
//! self-contained study area; [`oracle`] is an independent stochastic check
//! on the final-size solver.

pub mod climate;
pub mod config;
pub mod entomology;
pub mod exposure;
pub mod finalsize;
pub mod ingest;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod surface;
pub mod synth;
pub mod tables;
pub mod transmission;

pub use model::{planar_distance, DateWindow, ProjectedPoint, Region, RegionClass};

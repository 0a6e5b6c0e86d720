//! Region-aware, instruction-driven image retouching.
//!
//! The crate is organized bottom-up:
//!
//! - [`raster`]: RGB images, luma planes, Gaussian blur, PSNR
//! - [`segmentation`]: panoptic region maps and their RLE JSON format
//! - [`scoring`]: the four regional attribute scores in [-1, 1]
//! - [`parammap`]: per-region target scores (the guidance map) and PMAP files
//! - [`retouch`]: the parametric generator that renders a map onto an image
//! - [`augment`]: semantic replacement and map perturbation for training pairs
//! - [`instruction`]: the editing DSL
//! - [`agent`]: weak/strong edits with feedback refinement and preference memory
//!
//! With the default `parallel` feature, the per-region and per-row loops run
//! on rayon. Disabling it gives a sequential build with identical outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod augment;
pub mod error;
pub mod instruction;
pub mod parammap;
mod par;
pub mod raster;
pub mod retouch;
pub mod rng;
pub mod scoring;
pub mod segmentation;

pub use error::{Error, Result};
pub use parammap::ParameterMap;
pub use raster::{Image, Plane};
pub use scoring::{Attribute, AttributeVector};
pub use segmentation::{RegionId, SegmentationMap};

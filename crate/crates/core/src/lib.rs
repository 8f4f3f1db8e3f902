//! Segment-level correspondence between a 2D image and an untextured 3D mesh.
//!
//! A click on an image pixel is matched to a mesh vertex whose most similar
//! pixel falls inside the clicked segment and whose own segmentation agrees
//! best with it (a "best segmentation buddy"). The matched vertex then seeds
//! a 3D part segmentation. When no such vertex exists the pipeline reports
//! an explicit no-match instead of a forced answer.
//!
//! Modules, bottom-up:
//!
//! - [`tensor_io`]: BSBT containers, feature images, masks, dataset manifests
//! - [`mesh`]: OBJ loading, normalization, adjacency
//! - [`raster`]: cameras, z-buffer rendering, visibility
//! - [`distill`]: averaging per-view pixel features onto vertices
//! - [`matcher`]: the matching algorithm and its baselines
//! - [`segmenters`]: 2D/3D segmentation providers and [`segmenters::correspond`]
//! - [`eval`]: success rate, IoU fidelity, candidate-budget ablation
//! - [`service`]: HTTP session service for interactive use
//! - [`cli`]: the `bsb` command line
//! - [`synthetic`]: planted instances and fixture generators

pub mod cli;
pub mod distill;
pub mod eval;
pub mod matcher;
pub mod mesh;
pub mod raster;
pub mod segmenters;
pub mod service;
pub mod synthetic;
pub mod tensor_io;

pub use matcher::{bsb_match, ClickContext, MatchResult, DEFAULT_K};
pub use mesh::Mesh;
pub use segmenters::{correspond, Seg2DProvider, Seg3DProvider};
pub use tensor_io::{FeatureImage, Mask2D, Mask3D, Pixel, VertexFeatureField};

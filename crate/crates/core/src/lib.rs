//! Multi-illuminant color constancy toolkit.
//!
//! * [`color`]: linear-RGB rasters, sRGB transfer, `I = W * L` and Von Kries
//!   correction.
//! * [`metrics`]: angular error and the six-statistic summary.
//! * [`estimators`]: Grey-World / White-Patch / Shades-of-Grey / Grey-Edge.
//! * [`grayness`]: gray-pixel scoring, clustering and seed sampling.
//! * [`mixture`]: probability maps, reconstruction, losses, oracle and
//!   seed diffusion.
//! * [`augment`]: multi-illuminant relighting of single-illuminant images.
//! * [`dataset`], [`io`], [`report`]: files on disk.

pub mod augment;
pub mod color;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod grayness;
pub mod io;
pub mod metrics;
pub mod mixture;
pub mod numeric;
pub mod report;
pub mod simplex;

pub use augment::{augment, build_illumination_map, shuffle_illuminant, split_dataset, AugmentConfig, AugmentedSample, SegmentMap};
pub use color::{
    apparent_illumination, apply_illumination, linear_to_srgb, srgb_to_linear, von_kries_correct, IlluminationMap, Illuminant,
    LinearImage, Raster, SrgbImage,
};
pub use error::{Error, Result};
pub use estimators::{doing_nothing, grey_world_family, white_patch, EstimatorConfig, Minkowski};
pub use grayness::{cluster_gray_pixels, grayness_map, sample_seeds_from_gt, ClusterConfig, GraynessMap, SeedSet};
pub use metrics::{angular_error, map_angular_error, summarize, ErrorStats};
pub use mixture::{
    import_probability_map, l1_image_distance, mask_loss, oracle_probabilities, reconstruct_illumination, seed_diffusion_estimate,
    total_loss, DiffusionConfig, LossReport, ProbabilityMap,
};

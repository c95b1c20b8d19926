//! Refinement of noisy oriented text boxes into one box per book spine.

pub mod geometry;
pub mod imagecolor;
pub mod io_formats;
pub mod metrics;
pub mod refine;
pub mod synthgen;

pub use geometry::{iou, GeometryError, OrientedBox, Point};
pub use imagecolor::{BoxColors, ColorError, ImageBuffer, Pixel, Rgb};
pub use io_formats::FormatError;
pub use metrics::{evaluate, GroundTruth, MetricsError, MetricsReport};
pub use refine::{refine_pipeline, RefineConfig, RefineError};
pub use synthgen::{generate, CorpusSpec, ShelfSpec, SynthError, SyntheticShelf};

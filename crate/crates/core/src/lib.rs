//! Food recommendation from categorical scene attributes.
//!
//! The crate covers the whole path from an environment image to a food
//! suggestion:
//!
//! * [`schema`]: attribute catalog, one-hot encoding and incremental fusion.
//! * [`dataset`]: survey and manifest loaders, seeded 80/10/10 splits.
//! * [`image`]: PPM I/O, k-means dominant color, RGB histograms.
//! * [`tree`]: CART decision tree (Gini).
//! * [`ensemble`]: self-paced under-sampling ensemble with one-vs-rest wrapper.
//! * [`metrics`]: accuracy, macro precision/recall and F-beta.
//! * [`pipeline`]: attribute providers, fusion and the recommender tree.
//! * [`synthetic`]: deterministic fixtures for tests and demos.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod schema;
pub mod synthetic;
pub mod tree;

pub use dataset::{FoodLabel, SplitSpec, SurveyRecord};
pub use ensemble::{EnsembleState, MulticlassEnsemble, SelfPaceSchedule};
pub use error::{Error, ErrorClass, Result};
pub use image::{ColorPalette, RasterImage};
pub use metrics::{ConfusionMatrix, MetricReport};
pub use pipeline::RecommendationPipeline;
pub use schema::{AttributeSchema, AttributeTuple, BinaryFeatureVector};
pub use tree::{DecisionTreeModel, TreeConfig};

//! Spatially explicit accuracy assessment of binary land-change predictions.
//!
//! The crate compares simulated transition maps against observed change maps
//! and derives a stack of agreement metrics on top of the confusion matrix:
//!
//! * [`raster`]: ASCII grid I/O, masking, and score thresholding.
//! * [`sampling`]: equal-area box tiling, nested A/B/C pools, and seeded
//!   quantile draws.
//! * [`confusion`]: confusion counts and agreement rates.
//! * [`bayes_metrics`]: likelihood ratios, diagnostic odds ratio, and
//!   prevalence-conditional predictive values under two conventions.
//! * [`kde`]: Epanechnikov kernel density estimation and density crossing.
//! * [`convergence`]: the Bayes convergence factor family, normal ML fits,
//!   dominance scoring, and P-P analytics.
//! * [`synth`]: synthetic landscapes and run tables with planted truth.
//! * [`report`]: job orchestration and CSV/JSON artifact emission.

pub mod bayes_metrics;
pub mod confusion;
pub mod convergence;
mod error;
pub mod fmt;
pub mod kde;
pub mod raster;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod synth;

pub use bayes_metrics::{Convention, LikelihoodRatios, PredictiveValues, Ratio};
pub use confusion::{AgreementRates, ConfusionMatrix};
pub use convergence::{CbForm, FitResult, NormalFit, RunRecord};
pub use error::{Error, Result};
pub use kde::KdeModel;
pub use raster::{BinaryGrid, Cell, Grid, ScoreGrid, Threshold};
pub use sampling::{Group, PoolSet, SampleBox};
pub use synth::SynthConfig;

//! Saliency evaluation and boundary-aware training losses.
//!
//! * [`mask`]: map/mask types, PNG I/O, binarization and the 3x3 contour operator.
//! * [`metrics`]: max-F, ave-F, weighted F, MAE, S-measure and E-measure.
//! * [`losses`]: eight losses with analytic gradients, including the
//!   edge-aware loss; [`gradcheck`] verifies them by finite differences.
//! * [`protocols`]: manifests, duplicate detection, objectness scoring and
//!   the standard, objectness-shift and few-shot splits.
//! * [`eval`], [`report`]: batch evaluation, method comparison and drop tables.
//! * [`synth`], [`train`]: a synthetic scene generator and a per-pixel
//!   logistic micro-trainer used to compare losses at desk scale.

pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod mask;
pub mod metrics;
mod par;
pub mod protocols;
pub mod report;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use losses::{LossConfig, LossId, LossResult};
pub use mask::{binarize, extract_contour, BinaryMask, ContourMask, Grid, SaliencyMap};
pub use metrics::{EvalReport, MetricOptions, MetricRecord};

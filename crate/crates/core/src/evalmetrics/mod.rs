//! MAE (summed), MSE and PSNR, the sampling protocols that aggregate them, and
//! the report table.

pub mod evaluate;
pub mod metrics;
pub mod report;

pub use evaluate::{evaluate_cycle, evaluate_synthesis, Direction, IdentityMap, ImageMap, Synthesizer};
pub use metrics::{mae_sum, mse, psnr, psnr_from_mse, ImageView};
pub use report::{format_report, MetricSample, MetricsReport, Stat, CSV_HEADER};

//! Adjusted multiscale scanning (AMS) for anomaly detection in random fields
//! on `{1..n}^d`.
//!
//! Local likelihood-ratio statistics over a system of rectangular regions are
//! calibrated per scale and combined into a global maximum. Critical values
//! come from the Monte-Carlo distribution of a Gaussian surrogate, which
//! stays valid when the baseline and nuisance parameters are estimated from
//! the data, provided the smallest and largest scales are restricted.
//!
//! ```
//! use ams_core::{Calibration, Field, Dtype, ModelFamily, Parity, RegionSystem, Sidedness};
//!
//! let system = RegionSystem::rectangles(16, 2, 2, 4, Parity::All).unwrap();
//! let cal = Calibration::dw(1.0, 2).unwrap();
//! let mut data = vec![0.0; 256];
//! for i in 0..4 {
//!     for j in 0..4 {
//!         data[(6 + i) * 16 + 6 + j] = 3.0;
//!     }
//! }
//! let field = Field::new(data, 16, 2, Dtype::Reals).unwrap();
//! let model = ModelFamily::gaussian(0.0, 1.0).unwrap();
//! let result = ams_core::scan_statistic(&field, &system, &model, &cal, Sidedness::TwoSided).unwrap();
//! assert_eq!(result.argmax_region.offset, vec![6, 6]);
//! assert_eq!(result.argmax_region.extent, vec![4, 4]);
//! ```

// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod detect;
pub mod error;
pub mod experiments;
pub mod io;
pub mod localmeans;
pub mod models;
pub mod quantiles;
pub mod regions;
pub mod sampling;
pub mod statistic;

pub use calibration::{
    min_scale_guard, omega, omega_tilde, validate_growth, Calibration, CalibrationKind,
    GrowthExponents, GrowthValidation, ScaleCalibration, ScaleGuard,
};
pub use detect::{segment, significance_map, Segmentation, SignificanceMap};
pub use error::{AmsError, ErrorCategory, Result};
pub use experiments::{ExperimentConfig, ExperimentOutput, Scenario};
pub use io::{read_grid, write_grid, GridFormat};
pub use localmeans::{fft_scale_sums, naive_scale_sums, Dtype, Field, ScaleSums};
pub use models::{estimate_global, local_lrt, EstimatorReport, ModelFamily, ModelKind, Provenance};
pub use quantiles::{
    empirical_quantile, simulate_mn, CacheStatus, QuantileKey, QuantileStore, QuantileTable,
};
pub use regions::{Parity, Region, RegionSystem};
pub use statistic::{
    reject_regions, scan_statistic, surrogate_statistic, Rejection, ScanResult, Scanner, Sidedness,
};

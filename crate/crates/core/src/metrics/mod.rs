//! Analytic contact model, output-model fitting and the four performance
//! metrics (sensitivity, maximum force, spatial resolution, position
//! accuracy).

mod analytic;
mod fit;
mod performance;

pub use analytic::{analytic_output, hertz_power_law, ContactModelParams, HertzParams};
pub use fit::{fit_output_model, output_model, FitParams, CONVERGED_REL_SSE, CONVERGED_REL_STEP};
pub use performance::{
    fmax_metric, position_accuracy, position_accuracy_metric, sensitivity_metric, spatial_resolution,
    spatial_resolution_metric, PerformanceRecord, METRIC_NAMES,
};

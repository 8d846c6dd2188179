//! Ensemble statistics: emission-energy histograms with Gaussian fits,
//! errors-in-variables gauge regression and strain-induced broadening.

mod broadening;
mod histogram;
mod regression;

pub use broadening::{
    blueshift_fraction, broadening_per_x0_shift, broadening_rate, cross_material_broadening,
    fit_fixed_rate_intercept, predict_ensemble_fwhm, weighted_mean_shift, BroadeningModel,
    BroadeningPoint, CrossMaterialBroadening,
};
pub use histogram::{
    build_histogram, BinnedGaussian, default_origin, fit_gaussian_histogram, EnsembleStats, GaussianSummary,
    HistogramWeighting,
};
pub use regression::{
    gauge_factor_fit, weighted_ols, york_fit, GaugeSample, RegressionPoint, RegressionResult,
    YorkConfig,
};

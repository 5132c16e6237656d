//! Reductions of arrival records: binned responses, impulse-response fits
//! and fading statistics.

mod dgf;
mod fading;
mod response;

pub use dgf::{fit_dgf, DgfFit, MIN_OCCUPIED_BINS};
pub use fading::{
    aperture_intensity, density_histogram, fit_fading, scintillation_ensemble, scintillation_index,
    FadingEnsemble, FadingFit, FitKind, MIN_ITERATIONS,
};
pub use response::{
    bin_arrivals, compute_drms, compute_fwhm, ChannelResponse, ResponseAccumulator, RxConfig,
};

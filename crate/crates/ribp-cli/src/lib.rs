//! Command-line experiments for restricted latent-feature models: prior
//! draws, synthetic image and text studies, exchangeability checks, and
//! generic fit/predict runs on CSV data.

pub mod config;
pub mod exchange_report;
pub mod fit_predict;
pub mod io;
pub mod prior_sample;
pub mod synth_images;
pub mod synth_text;
pub mod unrestricted;

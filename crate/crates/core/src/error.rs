use thiserror::Error;

/// Errors produced by the geometry, metric and solver routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeoError {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric is singular at {point:?}")]
    Singular { point: Vec<f64> },

    #[error("perturbation never drops below eps = {eps} (checked up to radius {max_radius})")]
    Unbounded { eps: f64, max_radius: f64 },

    #[error("curve enters the excluded ball of radius {radius} (closest approach {closest})")]
    EntersBall { radius: f64, closest: f64 },

    #[error("radius {radius} lies outside the curve's radial range [{min}, {max}]")]
    NoCrossing { radius: f64, min: f64, max: f64 },

    #[error("integration stopped at t = {t}: {reason} (last good state x = {position:?}, v = {velocity:?})")]
    Integration {
        t: f64,
        position: Vec<f64>,
        velocity: Vec<f64>,
        reason: String,
    },

    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;

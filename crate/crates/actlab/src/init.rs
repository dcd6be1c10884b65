//! Weight and bias initialization schemes.
//!
//! All schemes draw zero-mean Gaussians; they differ only in how the
//! per-layer variance is chosen. Gaussian draws (rather than uniform) keep
//! the Monte Carlo estimators in [`crate::varprop`] easy to reason about —
//! the variance theory itself only needs zero mean, independence, and equal
//! variance, so a uniform scheme could be swapped in without touching the
//! contracts.
//!
//! Concurrent initialization of distinct layers must use distinct `Rng`
//! streams; the network builder derives them as `seed + layer_index`.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

/// How the weight variance is derived from the layer dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// `gain^2 / n_in` — keeps `n_in * variance = gain^2`, so a layer with
    /// unit-slope activations preserves signal variance.
    FanIn,
    /// `2 * gain^2 / (n_in + n_out)` — the Glorot/Bengio compromise between
    /// forward and backward variance preservation.
    XavierGlorot,
    /// `16 * gain^2 / n_in` — fan-in scaled up by 16x, compensating an
    /// origin slope of 1/4 (the plain sigmoid's) in the forward recursion.
    /// Provided as a diagnostic option.
    ScaledFanIn,
}

/// Initialization scheme: a variance rule plus a gain multiplier on the
/// base standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitScheme {
    pub kind: InitKind,
    pub gain: f64,
}

impl InitScheme {
    pub fn new(kind: InitKind, gain: f64) -> Result<InitScheme> {
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "init gain must be a finite positive real, got {gain}"
            )));
        }
        Ok(InitScheme { kind, gain })
    }

    /// Fan-in scheme with unit gain — the default everywhere in this crate.
    pub fn fan_in() -> InitScheme {
        InitScheme {
            kind: InitKind::FanIn,
            gain: 1.0,
        }
    }

    pub fn xavier() -> InitScheme {
        InitScheme {
            kind: InitKind::XavierGlorot,
            gain: 1.0,
        }
    }

    pub fn scaled_fan_in() -> InitScheme {
        InitScheme {
            kind: InitKind::ScaledFanIn,
            gain: 1.0,
        }
    }

    /// Parse a stable config-file name.
    pub fn from_name(name: &str, gain: f64) -> Result<InitScheme> {
        let kind = match name {
            "fan_in" => InitKind::FanIn,
            "xavier" => InitKind::XavierGlorot,
            "scaled_fan_in" => InitKind::ScaledFanIn,
            other => return Err(Error::UnknownInitScheme(other.to_string())),
        };
        InitScheme::new(kind, gain)
    }

    /// Stable config-file name.
    pub fn name(&self) -> &'static str {
        match self.kind {
            InitKind::FanIn => "fan_in",
            InitKind::XavierGlorot => "xavier",
            InitKind::ScaledFanIn => "scaled_fan_in",
        }
    }

    /// Weight variance for a layer mapping `n_in` units to `n_out` units.
    pub fn variance(&self, n_out: usize, n_in: usize) -> f64 {
        let g2 = self.gain * self.gain;
        match self.kind {
            InitKind::FanIn => g2 / n_in as f64,
            InitKind::XavierGlorot => 2.0 * g2 / (n_in + n_out) as f64,
            InitKind::ScaledFanIn => 16.0 * g2 / n_in as f64,
        }
    }

    /// Draw an `n_out x n_in` weight matrix with i.i.d. zero-mean Gaussian
    /// entries at this scheme's variance.
    pub fn init_weights(&self, rng: &mut Rng, n_out: usize, n_in: usize) -> Result<Matrix> {
        if n_out == 0 || n_in == 0 {
            return Err(Error::InvalidParameter(format!(
                "init_weights needs positive dimensions, got {n_out}x{n_in}"
            )));
        }
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "init gain must be a finite positive real, got {}",
                self.gain
            )));
        }
        let std = self.variance(n_out, n_in).sqrt();
        rng.sample_normal(0.0, std, n_out, n_in)
    }
}

/// Zero bias column vector of length `n_out`. Biases always start at zero
/// so the first forward pass is governed purely by the weight variances.
pub fn init_bias(n_out: usize) -> Result<Matrix> {
    if n_out == 0 {
        return Err(Error::InvalidParameter(
            "init_bias needs a positive dimension".to_string(),
        ));
    }
    Ok(Matrix::zeros(n_out, 1))
}

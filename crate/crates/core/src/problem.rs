//! The Falkner-Skan boundary-value problem
//!
//! ```text
//! g''' + alpha g g'' + beta (1 - g'^2) = 0,   g(0) = g'(0) = 0,   g'(inf) = 1
//! ```
//!
//! on a truncated domain `[0, x_max]`, its collocation grid and the
//! penalty loss used for training.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::Jet3;
use crate::network::NetworkError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("x_max must be positive and finite, got {0}")]
    XMax(f64),
    #[error("need at least 2 collocation points, got {0}")]
    TooFewPoints(usize),
    #[error("alpha and beta must be finite")]
    NonFiniteCoefficient,
    #[error("unknown flow preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sampling {
    Equidistant,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub alpha: f64,
    pub beta: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub sampling: Sampling,
}

impl Default for FlowConfig {
    fn default() -> Self {
        let (alpha, beta) = FlowPreset::Blasius.coefficients();
        FlowConfig {
            alpha,
            beta,
            x_max: 6.0,
            n_points: 18000,
            sampling: Sampling::Equidistant,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.x_max.is_finite() && self.x_max > 0.0) {
            return Err(ProblemError::XMax(self.x_max));
        }
        if self.n_points < 2 {
            return Err(ProblemError::TooFewPoints(self.n_points));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(ProblemError::NonFiniteCoefficient);
        }
        Ok(())
    }
}

/// Classical special cases of the Falkner-Skan family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowPreset {
    Blasius,
    Pohlhausen,
    Homann,
    Hiemenz,
    Hastings,
    Craven,
}

impl FlowPreset {
    pub const ALL: [FlowPreset; 6] = [
        FlowPreset::Blasius,
        FlowPreset::Pohlhausen,
        FlowPreset::Homann,
        FlowPreset::Hiemenz,
        FlowPreset::Hastings,
        FlowPreset::Craven,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FlowPreset::Blasius => "blasius",
            FlowPreset::Pohlhausen => "pohlhausen",
            FlowPreset::Homann => "homann",
            FlowPreset::Hiemenz => "hiemenz",
            FlowPreset::Hastings => "hastings",
            FlowPreset::Craven => "craven",
        }
    }

    pub fn alpha(self) -> f64 {
        match self {
            FlowPreset::Blasius => 0.5,
            FlowPreset::Pohlhausen => 0.0,
            FlowPreset::Homann => 2.0,
            FlowPreset::Hiemenz | FlowPreset::Hastings | FlowPreset::Craven => 1.0,
        }
    }

    /// Admissible `beta` values as `(low, high)`; equal ends for single flows.
    pub fn beta_range(self) -> (f64, f64) {
        match self {
            FlowPreset::Blasius => (0.0, 0.0),
            FlowPreset::Pohlhausen | FlowPreset::Homann | FlowPreset::Hiemenz => (1.0, 1.0),
            FlowPreset::Hastings => (-0.18, 2.0),
            FlowPreset::Craven => (10.0, 40.0),
        }
    }

    /// `(alpha, beta)`, taking the low end of the range for the two families.
    pub fn coefficients(self) -> (f64, f64) {
        (self.alpha(), self.beta_range().0)
    }
}

impl fmt::Display for FlowPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FlowPreset {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        FlowPreset::ALL
            .into_iter()
            .find(|p| p.name() == lower)
            .ok_or_else(|| ProblemError::UnknownPreset(s.to_string()))
    }
}

/// Anything that can report `(g, g', g'', g''')` at a point.
pub trait JetModel {
    fn jet(&self, x: f64) -> Jet3;
}

impl<F: Fn(f64) -> Jet3> JetModel for F {
    fn jet(&self, x: f64) -> Jet3 {
        self(x)
    }
}

/// Training grid on `[0, x_max]`, both endpoints included.
pub fn collocation_points(cfg: &FlowConfig) -> Result<Vec<f64>, ProblemError> {
    cfg.validate()?;
    let n = cfg.n_points;
    let points = match cfg.sampling {
        Sampling::Equidistant => {
            let h = cfg.x_max / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
            v[n - 1] = cfg.x_max;
            v
        }
        Sampling::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = Vec::with_capacity(n);
            v.push(0.0);
            v.extend((0..n - 2).map(|_| rng.random_range(0.0..cfg.x_max)));
            v.push(cfg.x_max);
            v.sort_by(f64::total_cmp);
            v
        }
    };
    Ok(points)
}

/// `g''' + alpha g g'' + beta (1 - g'^2)`.
pub fn residual(g: Jet3, alpha: f64, beta: f64) -> f64 {
    g.d3 + alpha * g.d0 * g.d2 + beta * (1.0 - g.d1 * g.d1)
}

/// Partial derivatives of [`residual`] with respect to each jet component.
pub fn residual_adjoint(g: Jet3, alpha: f64, beta: f64) -> Jet3 {
    Jet3::new(alpha * g.d2, -2.0 * beta * g.d1, alpha * g.d0, 1.0)
}

/// Mean squared residual plus `g(0)^2 + g'(0)^2 + (g'(x_max) - 1)^2`.
pub fn loss<M: JetModel + ?Sized>(
    model: &M,
    cfg: &FlowConfig,
    points: &[f64],
) -> Result<f64, NetworkError> {
    if points.is_empty() {
        return Err(NetworkError::NoPoints);
    }
    let sum: f64 = points
        .iter()
        .map(|&x| residual(model.jet(x), cfg.alpha, cfg.beta).powi(2))
        .sum();
    let g0 = model.jet(0.0);
    let far = model.jet(cfg.x_max).d1 - 1.0;
    let value = sum / points.len() as f64 + g0.d0 * g0.d0 + g0.d1 * g0.d1 + far * far;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(NetworkError::Diverged(value))
    }
}

//! Two-stage training: full-batch Adam warm-up, then L-BFGS refinement.

mod adam;
mod lbfgs;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use lbfgs::{
    lbfgs_run, LbfgsConfig, LbfgsOutcome, LineSearch, MIN_CURVATURE, WOLFE_C1, WOLFE_C2,
};

use crate::network::{init_parameters, loss_gradient, Network, NetworkError};
use crate::problem::{collocation_points, FlowConfig, ProblemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// `|loss_prev - loss| < eps`.
    #[serde(rename = "eps")]
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Adam,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: Stage,
    pub iteration: usize,
    pub loss: f64,
    /// Milliseconds since the start of training; filled in by [`train`].
    pub wall_time_ms: u64,
}

impl TraceEntry {
    fn lbfgs(iteration: usize, loss: f64, since: Instant) -> Self {
        TraceEntry {
            stage: Stage::Lbfgs,
            iteration,
            loss,
            wall_time_ms: since.elapsed().as_millis() as u64,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid optimizer settings: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub params: Vec<f64>,
    pub final_loss: f64,
    pub status: Status,
    pub lbfgs_iterations: usize,
    pub line_search_fallbacks: usize,
    pub trace: Vec<TraceEntry>,
    pub adam_ms: u64,
    pub lbfgs_ms: u64,
}

/// Initializes parameters from `seed`, runs `adam.epochs` Adam steps, then
/// L-BFGS from the Adam iterate.
pub fn train(
    net: &Network,
    flow: &FlowConfig,
    adam: &AdamConfig,
    lbfgs: &LbfgsConfig,
    seed: u64,
) -> Result<TrainingOutcome, TrainError> {
    adam.validate().map_err(TrainError::Config)?;
    lbfgs.validate().map_err(TrainError::Config)?;
    let points = collocation_points(flow)?;
    let mut params = init_parameters(net.spec(), seed);
    let started = Instant::now();
    let elapsed = |t: &Instant| t.elapsed().as_millis() as u64;

    let mut trace = Vec::with_capacity(adam.epochs + 64);
    let mut state = AdamState::new(params.len());
    let mut last_loss = f64::NAN;
    for epoch in 1..=adam.epochs {
        let lg = match loss_gradient(net, &params, flow, &points) {
            Ok(lg) => lg,
            Err(NetworkError::Diverged(loss)) => {
                trace.push(TraceEntry {
                    stage: Stage::Adam,
                    iteration: epoch,
                    loss,
                    wall_time_ms: elapsed(&started),
                });
                return Ok(TrainingOutcome {
                    params,
                    final_loss: loss,
                    status: Status::Diverged,
                    lbfgs_iterations: 0,
                    line_search_fallbacks: 0,
                    trace,
                    adam_ms: elapsed(&started),
                    lbfgs_ms: 0,
                });
            }
            Err(e) => return Err(e.into()),
        };
        trace.push(TraceEntry {
            stage: Stage::Adam,
            iteration: epoch,
            loss: lg.loss,
            wall_time_ms: elapsed(&started),
        });
        last_loss = lg.loss;
        adam_step(&mut params, &lg.grad, &mut state, adam);
    }
    let adam_ms = elapsed(&started);
    log_stage("adam", adam.epochs, last_loss);

    let lbfgs_started = Instant::now();
    let outcome = lbfgs_run(params, lbfgs, |x| {
        match loss_gradient(net, x, flow, &points) {
            Ok(lg) => (lg.loss, lg.grad),
            Err(_) => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    });
    let lbfgs_ms = elapsed(&lbfgs_started);
    log_stage("lbfgs", outcome.iterations, outcome.loss);

    trace.extend(outcome.trace.iter().map(|e| TraceEntry {
        wall_time_ms: adam_ms + e.wall_time_ms,
        ..*e
    }));

    Ok(TrainingOutcome {
        final_loss: outcome.loss,
        status: outcome.status,
        lbfgs_iterations: outcome.iterations,
        line_search_fallbacks: outcome.fallbacks,
        params: outcome.params,
        trace,
        adam_ms,
        lbfgs_ms,
    })
}

fn log_stage(stage: &str, iterations: usize, loss: f64) {
    if std::env::var_os("FSNET_QUIET").is_none() {
        eprintln!("[fsnet] {stage}: {iterations} iterations, loss {loss:.6e}");
    }
}

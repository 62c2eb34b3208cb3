//! Falkner-Skan boundary-layer solutions from networks with Legendre and
//! Chebyshev polynomial blocks.
//!
//! * [`orthopoly`]: basis recurrences and operational derivative matrices.
//! * [`jets`]: value plus first three `x`-derivatives, propagated exactly.
//! * [`network`]: dense layers and polynomial blocks, loss gradients.
//! * [`problem`]: residual, penalty loss, collocation grid, named flows.
//! * [`optimize`]: Adam warm-up followed by L-BFGS.
//! * [`oracle`]: RK4 shooting reference solutions and error norms.
//! * [`cli`]: the `fsnet` command line and its reports.

pub mod cli;
pub mod jets;
pub mod network;
pub mod optimize;
pub mod oracle;
pub mod orthopoly;
pub mod problem;

pub use jets::Jet3;
pub use network::{init_parameters, loss_gradient, ModelSpec, Network};
pub use orthopoly::BasisKind;
pub use problem::{FlowConfig, FlowPreset};

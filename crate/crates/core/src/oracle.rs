//! Reference solutions by shooting: classical RK4 on the first-order system
//!
//! ```text
//! g' = p,  p' = q,  q' = -alpha g q - beta (1 - p^2),   g(0) = p(0) = 0,  q(0) = s
//! ```
//!
//! with `s = g''(0)` chosen so that `g'(x_max) = 1`.
//!
//! The far-field condition is a separatrix: trajectories with `s` slightly
//! too large push `g'` above one, those slightly too small turn `g'` back down
//! before it gets there. For large `beta` the miss grows so fast that
//! `g'(x_max) - 1` is useless as a root function (both sides blow up), so the
//! bracket is narrowed on that overshoot/undershoot classification and the
//! secant step on `g'(x_max) - 1` only polishes when it is informative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jets::Jet3;
use crate::problem::JetModel;

/// Default truncation of the far field for the oracle.
pub const DEFAULT_X_MAX: f64 = 10.0;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-8;
const INITIAL_BRACKET: (f64, f64) = (0.0, 10.0);
const MAX_BRACKET_HI: f64 = 100.0;
const OVERFLOW: f64 = 1e100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("step size must be positive and finite, got {0}")]
    Step(f64),
    #[error("x_max must be positive and finite, got {0}")]
    XMax(f64),
    #[error("integration overflowed at x = {0}")]
    Diverged(f64),
    #[error("no sign change of g'(x_max) - 1 for s in [{lo}, {hi}]; flow is outside the computed solution branch")]
    Bracket { lo: f64, hi: f64 },
    #[error("profiles are sampled at different nodes")]
    NodeMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdeState {
    pub g: f64,
    pub gp: f64,
    pub gpp: f64,
}

impl OdeState {
    fn is_finite(&self) -> bool {
        self.g.abs() < OVERFLOW && self.gp.abs() < OVERFLOW && self.gpp.abs() < OVERFLOW
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Flow {
    alpha: f64,
    beta: f64,
}

impl Flow {
    fn rhs(&self, y: OdeState) -> OdeState {
        OdeState {
            g: y.gp,
            gp: y.gpp,
            gpp: self.third(y),
        }
    }

    fn third(&self, y: OdeState) -> f64 {
        -self.alpha * y.g * y.gpp - self.beta * (1.0 - y.gp * y.gp)
    }

    fn rk4(&self, y: OdeState, h: f64) -> OdeState {
        let add = |a: OdeState, k: OdeState, c: f64| OdeState {
            g: a.g + c * k.g,
            gp: a.gp + c * k.gp,
            gpp: a.gpp + c * k.gpp,
        };
        let k1 = self.rhs(y);
        let k2 = self.rhs(add(y, k1, h / 2.0));
        let k3 = self.rhs(add(y, k2, h / 2.0));
        let k4 = self.rhs(add(y, k3, h));
        OdeState {
            g: y.g + h / 6.0 * (k1.g + 2.0 * k2.g + 2.0 * k3.g + k4.g),
            gp: y.gp + h / 6.0 * (k1.gp + 2.0 * k2.gp + 2.0 * k3.gp + k4.gp),
            gpp: y.gpp + h / 6.0 * (k1.gpp + 2.0 * k2.gpp + 2.0 * k3.gpp + k4.gpp),
        }
    }
}

/// Grid `0, h, 2h, ..., x_max`; the last step is shortened to land on `x_max`.
fn grid(x_max: f64, h: f64) -> Vec<f64> {
    let full = (x_max / h).floor() as usize;
    let mut xs: Vec<f64> = (0..=full).map(|i| i as f64 * h).collect();
    if x_max - xs[full] > 1e-12 * x_max {
        xs.push(x_max);
    } else {
        xs[full] = x_max;
    }
    xs
}

fn check_domain(x_max: f64, h: f64) -> Result<(), OracleError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(OracleError::Step(h));
    }
    if !(x_max.is_finite() && x_max > 0.0) {
        return Err(OracleError::XMax(x_max));
    }
    Ok(())
}

/// States sampled on the integration grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub x: Vec<f64>,
    pub states: Vec<OdeState>,
}

impl Profile {
    pub fn last(&self) -> OdeState {
        *self.states.last().expect("profile has the initial state")
    }
}

/// Fixed-step RK4 from `(0, 0, s)` to `x_max`.
pub fn integrate(
    alpha: f64,
    beta: f64,
    s: f64,
    x_max: f64,
    h: f64,
) -> Result<Profile, OracleError> {
    check_domain(x_max, h)?;
    let flow = Flow { alpha, beta };
    let x = grid(x_max, h);
    let mut states = Vec::with_capacity(x.len());
    let mut y = OdeState {
        g: 0.0,
        gp: 0.0,
        gpp: s,
    };
    states.push(y);
    for w in x.windows(2) {
        y = flow.rk4(y, w[1] - w[0]);
        if !y.is_finite() {
            return Err(OracleError::Diverged(w[1]));
        }
        states.push(y);
    }
    Ok(Profile { x, states })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Miss {
    Over,
    Under,
}

/// Integrates until the trajectory commits to one side of the separatrix.
fn classify(flow: Flow, s: f64, xs: &[f64]) -> Miss {
    let mut y = OdeState {
        g: 0.0,
        gp: 0.0,
        gpp: s,
    };
    for w in xs.windows(2) {
        y = flow.rk4(y, w[1] - w[0]);
        if y.gp > 1.0 || y.gp.is_nan() {
            return Miss::Over;
        }
        if y.gpp < 0.0 {
            return Miss::Under;
        }
    }
    if y.gp > 1.0 {
        Miss::Over
    } else {
        Miss::Under
    }
}

/// `g'(x_max; s) - 1`, or `None` on overflow.
fn far_field(flow: Flow, s: f64, xs: &[f64]) -> Option<f64> {
    let mut y = OdeState {
        g: 0.0,
        gp: 0.0,
        gpp: s,
    };
    for w in xs.windows(2) {
        y = flow.rk4(y, w[1] - w[0]);
        if !y.is_finite() {
            return None;
        }
    }
    Some(y.gp - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub alpha: f64,
    pub beta: f64,
    pub x_max: f64,
    pub h: f64,
    /// `g''(0)`.
    pub s_star: f64,
    pub profile: Profile,
    pub iterations: usize,
    pub bracket: (f64, f64),
    /// `|g'(x_max) - 1|` of the returned profile.
    pub far_field_error: f64,
    /// First grid index replaced by the far-field asymptote
    /// `g' = 1, g'' = 0`, if the trajectory started to leave the separatrix
    /// before `x_max`.
    pub asymptote_from: Option<usize>,
}

/// Builds the profile for `s`, switching to the asymptote once the
/// trajectory starts to leave the separatrix.
fn settled_profile(flow: Flow, s: f64, xs: &[f64]) -> (Vec<OdeState>, Option<usize>) {
    let mut states = Vec::with_capacity(xs.len());
    let mut y = OdeState {
        g: 0.0,
        gp: 0.0,
        gpp: s,
    };
    states.push(y);
    let mut switched = None;
    for (i, w) in xs.windows(2).enumerate() {
        let next = match switched {
            Some(_) => OdeState {
                g: y.g + (w[1] - w[0]),
                gp: 1.0,
                gpp: 0.0,
            },
            None => {
                let cand = flow.rk4(y, w[1] - w[0]);
                let leaving = cand.gp > 1.0 || cand.gpp < 0.0 || !cand.is_finite();
                // Only treat as departure once g' is already at the far field.
                if leaving && (1.0 - y.gp).abs() < 1e-6 {
                    switched = Some(i + 1);
                    OdeState {
                        g: y.g + (w[1] - w[0]),
                        gp: 1.0,
                        gpp: 0.0,
                    }
                } else {
                    cand
                }
            }
        };
        y = next;
        states.push(y);
    }
    (states, switched)
}

/// Finds `s = g''(0)` with `g'(x_max) = 1`: bracket expansion, bisection on
/// the overshoot/undershoot classification, then secant polish on
/// `g'(x_max) - 1`.
pub fn shoot(
    alpha: f64,
    beta: f64,
    x_max: f64,
    h: f64,
    tol: f64,
) -> Result<ShootingResult, OracleError> {
    check_domain(x_max, h)?;
    let flow = Flow { alpha, beta };
    let xs = grid(x_max, h);

    let (mut lo, mut hi) = INITIAL_BRACKET;
    if classify(flow, lo, &xs) == Miss::Over {
        return Err(OracleError::Bracket { lo, hi });
    }
    while classify(flow, hi, &xs) == Miss::Under {
        if hi >= MAX_BRACKET_HI {
            return Err(OracleError::Bracket {
                lo: INITIAL_BRACKET.0,
                hi,
            });
        }
        lo = hi;
        hi = (hi * 2.0).min(MAX_BRACKET_HI);
    }
    let bracket = (lo, hi);

    let mut iterations = 0;
    let mut best = 0.5 * (lo + hi);
    let mut best_f = f64::INFINITY;
    while hi - lo > 4.0 * f64::EPSILON * hi.abs().max(1.0) {
        iterations += 1;
        // Secant through the bracket ends when both far-field misses are
        // finite and moderate, bisection otherwise.
        let f_lo = far_field(flow, lo, &xs).filter(|f| f.abs() < 1.0);
        let f_hi = far_field(flow, hi, &xs).filter(|f| f.abs() < 1.0);
        let mut mid = 0.5 * (lo + hi);
        if let (Some(a), Some(b)) = (f_lo, f_hi) {
            if b != a {
                let cand = lo - a * (hi - lo) / (b - a);
                let margin = 0.01 * (hi - lo);
                if cand > lo + margin && cand < hi - margin {
                    mid = cand;
                }
            }
        }
        if let Some(f) = far_field(flow, mid, &xs) {
            if f.abs() < best_f.abs() {
                best = mid;
                best_f = f;
            }
            if f.abs() <= tol {
                break;
            }
        }
        match classify(flow, mid, &xs) {
            Miss::Over => hi = mid,
            Miss::Under => lo = mid,
        }
        if iterations > 400 {
            break;
        }
    }
    // When the secant never produced an informative value (steep flows), the
    // collapsed bracket is the answer.
    let s_star = if best_f.abs() <= tol {
        best
    } else {
        0.5 * (lo + hi)
    };

    let (states, asymptote_from) = settled_profile(flow, s_star, &xs);
    let far_field_error = (states.last().expect("non-empty").gp - 1.0).abs();
    Ok(ShootingResult {
        alpha,
        beta,
        x_max,
        h,
        s_star,
        profile: Profile { x: xs, states },
        iterations,
        bracket,
        far_field_error,
        asymptote_from,
    })
}

/// Secant iteration on `g'(x_max; s) - 1` from `s0`. Returns the root and the
/// number of secant steps taken; zero if `s0` already meets `tol`.
pub fn polish(
    alpha: f64,
    beta: f64,
    x_max: f64,
    h: f64,
    tol: f64,
    s0: f64,
) -> Result<(f64, usize), OracleError> {
    check_domain(x_max, h)?;
    let flow = Flow { alpha, beta };
    let xs = grid(x_max, h);
    let f = |s: f64| far_field(flow, s, &xs).ok_or(OracleError::Diverged(x_max));
    let mut a = s0;
    let mut fa = f(a)?;
    if fa.abs() <= tol {
        return Ok((a, 0));
    }
    let mut b = s0 * (1.0 + 1e-7) + 1e-12;
    let mut fb = f(b)?;
    for step in 1..=50 {
        if fb.abs() <= tol {
            return Ok((b, step));
        }
        if fb == fa {
            break;
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
        fb = f(b)?;
    }
    Ok((b, 50))
}

impl ShootingResult {
    pub fn shear(&self) -> f64 {
        self.s_star
    }

    /// State at an arbitrary `x` in `[0, x_max]`: one RK4 step from the
    /// nearest grid node at or below `x`.
    pub fn state_at(&self, x: f64) -> OdeState {
        let xs = &self.profile.x;
        let x = x.clamp(0.0, self.x_max);
        let idx = match xs.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => return self.profile.states[i],
            Err(i) => i - 1,
        };
        let y = self.profile.states[idx];
        let dx = x - xs[idx];
        if self.asymptote_from.is_some_and(|k| idx + 1 >= k) {
            return OdeState {
                g: y.g + dx,
                gp: 1.0,
                gpp: 0.0,
            };
        }
        Flow {
            alpha: self.alpha,
            beta: self.beta,
        }
        .rk4(y, dx)
    }

    /// `(x, g, g', g'')` rows at the requested nodes.
    pub fn sample(&self, nodes: &[f64]) -> Vec<(f64, OdeState)> {
        nodes.iter().map(|&x| (x, self.state_at(x))).collect()
    }
}

/// The oracle solution seen as a model; `g'''` comes from the ODE itself.
impl JetModel for ShootingResult {
    fn jet(&self, x: f64) -> Jet3 {
        let y = self.state_at(x);
        let third = Flow {
            alpha: self.alpha,
            beta: self.beta,
        }
        .third(y);
        Jet3::new(y.g, y.gp, y.gpp, third)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub mae: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// Differences in `g` between two profiles given as `(x, g)` pairs on the
/// same nodes.
pub fn error_metrics(
    model: &[(f64, f64)],
    reference: &[(f64, f64)],
) -> Result<ErrorMetrics, OracleError> {
    if model.len() != reference.len() || model.is_empty() {
        return Err(OracleError::NodeMismatch);
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut linf: f64 = 0.0;
    for (&(xm, gm), &(xr, gr)) in model.iter().zip(reference) {
        if (xm - xr).abs() > 1e-12 * xr.abs().max(1.0) {
            return Err(OracleError::NodeMismatch);
        }
        let d = (gm - gr).abs();
        sq += d * d;
        abs += d;
        linf = linf.max(d);
    }
    let n = model.len() as f64;
    Ok(ErrorMetrics {
        mse: sq / n,
        mae: abs / n,
        l1: abs,
        l2: sq.sqrt(),
        linf,
    })
}

//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Stops when the loss changes by less than `eps` between consecutive
//! iterations, or after `max_iters` iterations.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Status, TraceEntry};

/// Sufficient-decrease constant.
pub const WOLFE_C1: f64 = 1e-4;
/// Curvature constant.
pub const WOLFE_C2: f64 = 0.9;
/// Curvature pairs with `s.y` at or below this are dropped.
pub const MIN_CURVATURE: f64 = 1e-12;
const MAX_LINE_SEARCH_EVALS: usize = 25;
const MAX_FALLBACK_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineSearch {
    Wolfe,
    Fixed,
}

impl std::str::FromStr for LineSearch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wolfe" | "strong-wolfe" => Ok(LineSearch::Wolfe),
            "fixed" | "fixed-step" => Ok(LineSearch::Fixed),
            other => Err(format!(
                "unknown line search `{other}` (expected wolfe or fixed)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub lr: f64,
    pub eps: f64,
    pub history: usize,
    pub line_search: LineSearch,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iters: 10000,
            lr: 0.015035,
            eps: 1e-10,
            history: 10,
            line_search: LineSearch::Wolfe,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iters == 0 {
            return Err("lbfgs max_iters must be at least 1".into());
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(format!("lbfgs eps must be positive, got {}", self.eps));
        }
        if self.history == 0 {
            return Err("lbfgs history must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("lbfgs lr must be positive, got {}", self.lr));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub params: Vec<f64>,
    pub loss: f64,
    pub status: Status,
    pub iterations: usize,
    /// Iterations where the line search failed and a steepest-descent step
    /// was taken instead.
    pub fallbacks: usize,
    pub trace: Vec<TraceEntry>,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// `-H g` by the two-loop recursion, with `H_0 = (s.y / y.y) I`.
fn two_loop(grad: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (pair, a) in history.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizer of the cubic interpolating `(x1, f1, g1)` and `(x2, f2, g2)`,
/// clamped to `[lo, hi]`; falls back to the midpoint when the cubic has no
/// real minimizer.
#[allow(clippy::too_many_arguments)]
fn cubic_minimizer(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, lo: f64, hi: f64) -> f64 {
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let disc = d1 * d1 - g1 * g2;
    let candidate = if disc >= 0.0 {
        let d2 = disc.sqrt();
        if x1 <= x2 {
            x2 - (x2 - x1) * (g2 + d2 - d1) / (g2 - g1 + 2.0 * d2)
        } else {
            x1 - (x1 - x2) * (g1 + d2 - d1) / (g1 - g2 + 2.0 * d2)
        }
    } else {
        f64::NAN
    };
    if candidate.is_finite() {
        candidate.clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    }
}

#[derive(Clone)]
struct Probe {
    t: f64,
    f: f64,
    g: Vec<f64>,
    gtd: f64,
}

/// Strong-Wolfe line search along `d` from `x`, starting at step `t0`.
/// Returns the accepted probe or `None` when no acceptable step was found
/// within the evaluation budget.
fn strong_wolfe<F>(obj: &mut F, x: &[f64], d: &[f64], f0: f64, gtd0: f64, t0: f64) -> Option<Probe>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let eval = |obj: &mut F, t: f64| {
        let (f, g) = obj(&axpy(x, t, d));
        let f = if f.is_finite() { f } else { f64::INFINITY };
        let gtd = if f.is_finite() { dot(&g, d) } else { f64::NAN };
        Probe { t, f, g, gtd }
    };
    let accept = |p: &Probe| p.f <= f0 + WOLFE_C1 * p.t * gtd0 && p.gtd.abs() <= -WOLFE_C2 * gtd0;

    let mut evals = 0;
    let mut prev = Probe {
        t: 0.0,
        f: f0,
        g: Vec::new(),
        gtd: gtd0,
    };
    let mut t = t0;
    let (mut lo, mut hi);
    loop {
        let cur = eval(obj, t);
        evals += 1;
        if cur.f > f0 + WOLFE_C1 * t * gtd0 || (evals > 1 && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if cur.gtd.abs() <= -WOLFE_C2 * gtd0 {
            return Some(cur);
        }
        if cur.gtd >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        if evals >= MAX_LINE_SEARCH_EVALS {
            return None;
        }
        let min_step = cur.t + 0.01 * (cur.t - prev.t);
        let max_step = 10.0 * cur.t;
        t = cubic_minimizer(
            prev.t, prev.f, prev.gtd, cur.t, cur.f, cur.gtd, min_step, max_step,
        );
        prev = cur;
    }

    // Zoom: `lo` satisfies sufficient decrease and has the lower value;
    // the minimizer lies between `lo` and `hi`.
    while evals < MAX_LINE_SEARCH_EVALS {
        let (a, b) = (lo.t.min(hi.t), lo.t.max(hi.t));
        if b - a <= 1e-12 * b.max(1.0) {
            return None;
        }
        let mut t = if hi.f.is_finite() && hi.gtd.is_finite() {
            cubic_minimizer(lo.t, lo.f, lo.gtd, hi.t, hi.f, hi.gtd, a, b)
        } else {
            0.5 * (a + b)
        };
        let margin = 0.1 * (b - a);
        if t - a < margin || b - t < margin {
            t = 0.5 * (a + b);
        }
        let cur = eval(obj, t);
        evals += 1;
        if cur.f > f0 + WOLFE_C1 * t * gtd0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if accept(&cur) {
                return Some(cur);
            }
            if cur.gtd * (hi.t - lo.t) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    None
}

/// Steepest-descent step of length `lr`, halved until the loss decreases.
/// Returns `None` if no tried step decreases the loss.
fn fallback_step<F>(
    obj: &mut F,
    x: &[f64],
    f0: f64,
    grad: &[f64],
    lr: f64,
) -> Option<(Vec<f64>, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let norm = dot(grad, grad).sqrt();
    if norm == 0.0 {
        return None;
    }
    let mut t = lr / norm;
    for _ in 0..MAX_FALLBACK_HALVINGS {
        let x_new = axpy(x, -t, grad);
        let (f, g) = obj(&x_new);
        if f.is_finite() && f < f0 {
            return Some((x_new, f, g));
        }
        t *= 0.5;
    }
    None
}

/// Runs L-BFGS from `x0`. `obj` returns the loss and its gradient; a
/// non-finite loss aborts with [`Status::Diverged`] and the last finite
/// iterate.
pub fn lbfgs_run<F>(x0: Vec<f64>, cfg: &LbfgsConfig, mut obj: F) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let started = Instant::now();
    let mut x = x0;
    let (mut f, mut g) = obj(&x);
    let mut trace = Vec::new();
    if !f.is_finite() {
        return LbfgsOutcome {
            params: x,
            loss: f,
            status: Status::Diverged,
            iterations: 0,
            fallbacks: 0,
            trace,
        };
    }
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(cfg.history);
    let mut previous = f;
    let mut fallbacks = 0;
    let mut status = Status::MaxIters;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let mut d = two_loop(&g, &history);
        let mut gtd = dot(&g, &d);
        if gtd >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            gtd = dot(&g, &d);
        }

        let step = if gtd == 0.0 {
            // Zero gradient: nothing to do, the loss is stationary.
            None
        } else {
            debug_assert!(gtd < 0.0, "search direction must descend");
            match cfg.line_search {
                LineSearch::Fixed => {
                    let x_new = axpy(&x, cfg.lr, &d);
                    let (f_new, g_new) = obj(&x_new);
                    Some((x_new, f_new, g_new))
                }
                LineSearch::Wolfe => match strong_wolfe(&mut obj, &x, &d, f, gtd, cfg.lr) {
                    Some(p) => {
                        debug_assert!(p.f <= f + WOLFE_C1 * p.t * gtd);
                        debug_assert!(p.gtd.abs() <= -WOLFE_C2 * gtd);
                        Some((axpy(&x, p.t, &d), p.f, p.g))
                    }
                    None => {
                        fallbacks += 1;
                        history.clear();
                        fallback_step(&mut obj, &x, f, &g, cfg.lr)
                    }
                },
            }
        };

        let (x_new, f_new, g_new) = match step {
            Some(s) => s,
            None => (x.clone(), f, g.clone()),
        };
        if !f_new.is_finite() {
            status = Status::Diverged;
            trace.push(TraceEntry::lbfgs(iter, f_new, started));
            break;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > MIN_CURVATURE {
            if history.len() == cfg.history {
                history.pop_front();
            }
            history.push_back(Pair {
                s,
                y,
                rho: 1.0 / sy,
            });
        }
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(TraceEntry::lbfgs(iter, f, started));

        if (previous - f).abs() < cfg.eps {
            status = Status::Converged;
            break;
        }
        previous = f;
    }

    LbfgsOutcome {
        params: x,
        loss: f,
        status,
        iterations,
        fallbacks,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> (f64, Vec<f64>) {
        (dot(x, x), x.iter().map(|v| 2.0 * v).collect())
    }

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (f, g)
    }

    #[test]
    fn sphere_converges() {
        let cfg = LbfgsConfig {
            eps: 1e-20,
            ..Default::default()
        };
        let out = lbfgs_run(vec![1.0, 1.0], &cfg, sphere);
        assert!(out.iterations <= 200, "{} iterations", out.iterations);
        assert!(dot(&out.params, &out.params).sqrt() <= 1e-8);
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let cfg = LbfgsConfig {
            eps: 1e-20,
            max_iters: 200,
            ..Default::default()
        };
        let out = lbfgs_run(vec![-1.2, 1.0], &cfg, rosenbrock);
        assert!(
            out.loss <= 1e-8,
            "loss {} after {}",
            out.loss,
            out.iterations
        );
    }

    #[test]
    fn flat_function_stops_at_first_iteration() {
        let out = lbfgs_run(vec![3.0, -1.0], &LbfgsConfig::default(), |_x: &[f64]| {
            (5.0, vec![0.0, 0.0])
        });
        assert_eq!(out.status, Status::Converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.params, vec![3.0, -1.0]);
    }

    #[test]
    fn fixed_step_mode_descends_on_quadratic() {
        let cfg = LbfgsConfig {
            line_search: LineSearch::Fixed,
            lr: 0.5,
            max_iters: 50,
            eps: 1e-30,
            ..Default::default()
        };
        let out = lbfgs_run(vec![1.0, -2.0], &cfg, sphere);
        assert!(out.loss < 1e-12, "{}", out.loss);
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        let mut calls = 0;
        let out = lbfgs_run(
            vec![1.0],
            &LbfgsConfig {
                line_search: LineSearch::Fixed,
                ..Default::default()
            },
            |x: &[f64]| {
                calls += 1;
                if calls > 1 {
                    (f64::NAN, vec![f64::NAN])
                } else {
                    (x[0] * x[0], vec![2.0 * x[0]])
                }
            },
        );
        assert_eq!(out.status, Status::Diverged);
        assert_eq!(out.params, vec![1.0]);
    }

    #[test]
    fn convergence_iteration_meets_eps() {
        let cfg = LbfgsConfig {
            eps: 1e-12,
            ..Default::default()
        };
        let out = lbfgs_run(vec![-1.2, 1.0], &cfg, rosenbrock);
        assert_eq!(out.status, Status::Converged);
        let n = out.trace.len();
        assert!((out.trace[n - 1].loss - out.trace[n - 2].loss).abs() < cfg.eps);
    }

    #[test]
    fn cubic_interpolation_of_quadratic_is_exact() {
        // f(t) = (t - 1)^2 sampled at 0 and 0.25.
        let t = cubic_minimizer(0.0, 1.0, -2.0, 0.25, 0.5625, -1.5, 0.0, 10.0);
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn line_search_accepts_wolfe_point() {
        let x = [2.0, -1.0];
        let (f0, g0) = rosenbrock(&x);
        let d: Vec<f64> = g0.iter().map(|v| -v).collect();
        let gtd0 = dot(&g0, &d);
        let mut obj = rosenbrock;
        let p = strong_wolfe(&mut obj, &x, &d, f0, gtd0, 0.015).expect("wolfe step");
        assert!(p.f <= f0 + WOLFE_C1 * p.t * gtd0);
        assert!(p.gtd.abs() <= -WOLFE_C2 * gtd0);
    }

    #[test]
    fn parse_line_search() {
        assert_eq!("wolfe".parse::<LineSearch>().unwrap(), LineSearch::Wolfe);
        assert_eq!("Fixed".parse::<LineSearch>().unwrap(), LineSearch::Fixed);
        assert!("armijo".parse::<LineSearch>().is_err());
    }
}

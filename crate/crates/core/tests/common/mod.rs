//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use fsnet::jets::Jet3;
use fsnet::network::{Activation, LayerSpec, ModelSpec};
use fsnet::orthopoly::BasisKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `P_0..=P_order` of a jet argument, by running the three-term recurrence
/// in jet arithmetic.
pub fn recurrence_jets(basis: BasisKind, order: usize, t: Jet3) -> Vec<Jet3> {
    let mut out = vec![Jet3::constant(1.0)];
    if order == 0 {
        return out;
    }
    out.push(t);
    for n in 1..order {
        let (p, q) = (out[n], out[n - 1]);
        let next = match basis {
            BasisKind::Legendre => {
                let n = n as f64;
                ((t * p).scale(2.0 * n + 1.0) - q.scale(n)).scale(1.0 / (n + 1.0))
            }
            BasisKind::Chebyshev => (t * p).scale(2.0) - q,
        };
        out.push(next);
    }
    out
}

/// Plain-float Legendre recurrence, kept separate from the library.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    // (P_n, P_n')
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes and weights by Newton iteration on the recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Gauss-Chebyshev nodes; every weight is `pi / n`.
pub fn gauss_chebyshev(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64).cos())
        .collect()
}

/// Random dense/block stack with one input and one output.
pub fn random_model(rng: &mut ChaCha8Rng) -> ModelSpec {
    let width = rng.random_range(2..=5);
    let order = rng.random_range(1..=6);
    let mut layers = vec![LayerSpec::Dense {
        in_dim: 1,
        out_dim: width,
        activation: Activation::Tanh,
    }];
    let mut current = width;
    let kinds = rng.random_range(1..=2);
    for k in 0..kinds {
        let block = if (k + rng.random_range(0..2)) % 2 == 0 {
            LayerSpec::LegendreBlock {
                in_dim: current,
                order,
            }
        } else {
            LayerSpec::ChebyshevBlock {
                in_dim: current,
                order,
            }
        };
        current = order + 1;
        layers.push(block);
    }
    layers.push(LayerSpec::Dense {
        in_dim: current,
        out_dim: 1,
        activation: Activation::Linear,
    });
    ModelSpec {
        name: "random".into(),
        layers,
    }
}

pub fn random_params(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central-difference stencil for the `order`-th derivative (1 to 3).
pub fn stencil(f: &impl Fn(f64) -> f64, x: f64, h: f64, order: usize) -> f64 {
    match order {
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        3 => {
            (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h)
        }
        _ => panic!("stencil order {order}"),
    }
}

/// Ridders' extrapolation of the central stencil, starting at step `h0` and
/// shrinking by 1.4 per column. Returns the estimate and its error bound.
pub fn ridders(f: &impl Fn(f64) -> f64, x: f64, h0: f64, order: usize) -> (f64, f64) {
    const SHRINK: f64 = 1.4;
    const SHRINK2: f64 = SHRINK * SHRINK;
    const N: usize = 12;
    let mut table = vec![vec![0.0; N]; N];
    let mut h = h0;
    table[0][0] = stencil(f, x, h, order);
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..N {
        h /= SHRINK;
        table[0][i] = stencil(f, x, h, order);
        let mut fac = SHRINK2;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK2;
            let e = (table[j][i] - table[j - 1][i])
                .abs()
                .max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}

/// First three derivatives of `f` at `x` by Ridders' extrapolation, keeping
/// the estimate with the smallest error bound over several starting steps.
pub fn derivatives(f: impl Fn(f64) -> f64, x: f64) -> [(f64, f64); 3] {
    std::array::from_fn(|k| {
        [0.4, 0.1, 0.025, 0.006]
            .iter()
            .map(|&h0| ridders(&f, x, h0, k + 1))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty step list")
    })
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

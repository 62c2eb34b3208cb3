//! Legendre and Chebyshev (first kind) polynomial sequences and their
//! operational derivative matrices.
//!
//! For a basis vector `P(t) = [P_0(t), ..., P_N(t)]^T` the operational matrix
//! `M` satisfies `d/dt P(t) = M P(t)`. Both matrices are strictly lower
//! triangular with integer entries, so powers `M^k` are exact in `f64` for the
//! orders used here and give higher derivatives by a single mat-vec.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest derivative order `basis_derivatives` hands out. The network's
/// adjoint needs one order beyond the third derivative used by the residual.
pub const MAX_DERIVATIVE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrthoError {
    #[error("evaluation point must be finite, got {0}")]
    NonFinite(f64),
    #[error("operational matrix power must be at least 1")]
    ZeroPower,
    #[error("derivative order {0} exceeds supported maximum {MAX_DERIVATIVE}")]
    DerivativeOrder(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Legendre,
    Chebyshev,
}

impl BasisKind {
    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Legendre => "legendre",
            BasisKind::Chebyshev => "chebyshev",
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BasisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "legendre" => Ok(BasisKind::Legendre),
            "chebyshev" => Ok(BasisKind::Chebyshev),
            other => Err(format!(
                "unknown basis `{other}` (expected legendre or chebyshev)"
            )),
        }
    }
}

/// Values `[P_0(t), ..., P_N(t)]` of one basis at a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyVector {
    pub basis: BasisKind,
    pub values: Vec<f64>,
}

impl PolyVector {
    pub fn order(&self) -> usize {
        self.values.len() - 1
    }
}

/// Fills `out` with `P_0(t), ..., P_{out.len()-1}(t)` using the three-term
/// recurrence. No range check on `t`.
pub(crate) fn fill_basis(basis: BasisKind, t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = t;
    for n in 1..out.len() - 1 {
        out[n + 1] = match basis {
            BasisKind::Legendre => {
                let nf = n as f64;
                ((2.0 * nf + 1.0) * t * out[n] - nf * out[n - 1]) / (nf + 1.0)
            }
            BasisKind::Chebyshev => 2.0 * t * out[n] - out[n - 1],
        };
    }
}

/// Evaluates the basis up to `order` at `t`.
pub fn eval_basis(basis: BasisKind, order: usize, t: f64) -> Result<PolyVector, OrthoError> {
    if !t.is_finite() {
        return Err(OrthoError::NonFinite(t));
    }
    let mut values = vec![0.0; order + 1];
    fill_basis(basis, t, &mut values);
    Ok(PolyVector { basis, values })
}

/// Dense `(N+1) x (N+1)` matrix `M^(k)` with `d^k/dt^k P(t) = M^(k) P(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationalMatrix {
    pub basis: BasisKind,
    pub order: usize,
    pub power: usize,
    entries: Vec<f64>,
}

impl OperationalMatrix {
    pub fn dim(&self) -> usize {
        self.order + 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.entries[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.dim())
    }

    /// `out = M v`. Only the strictly lower triangle is touched.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        debug_assert_eq!(out.len(), n);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.entries[i * n..i * n + i];
            *o = row.iter().zip(v).map(|(m, x)| m * x).sum();
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(v, &mut out);
        out
    }

    fn first_power(basis: BasisKind, order: usize) -> Self {
        let n = order + 1;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                if (i + j) % 2 == 1 {
                    entries[i * n + j] = match basis {
                        BasisKind::Legendre => (2 * j + 1) as f64,
                        BasisKind::Chebyshev => {
                            let c_j = if j == 0 { 2.0 } else { 1.0 };
                            2.0 * i as f64 / c_j
                        }
                    };
                }
            }
        }
        OperationalMatrix {
            basis,
            order,
            power: 1,
            entries,
        }
    }

    fn multiply(&self, rhs: &OperationalMatrix) -> OperationalMatrix {
        let n = self.dim();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..i {
                let a = self.entries[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..k {
                    entries[i * n + j] += a * rhs.entries[k * n + j];
                }
            }
        }
        OperationalMatrix {
            basis: self.basis,
            order: self.order,
            power: self.power + rhs.power,
            entries,
        }
    }
}

type MatrixKey = (BasisKind, usize, usize);

fn matrix_cache() -> &'static RwLock<HashMap<MatrixKey, Arc<OperationalMatrix>>> {
    static CACHE: OnceLock<RwLock<HashMap<MatrixKey, Arc<OperationalMatrix>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Returns `M^(power)` for the given basis and order. Results are cached per
/// `(basis, order, power)` and shared.
pub fn operational_matrix(
    basis: BasisKind,
    order: usize,
    power: usize,
) -> Result<Arc<OperationalMatrix>, OrthoError> {
    if power == 0 {
        return Err(OrthoError::ZeroPower);
    }
    let key = (basis, order, power);
    if let Some(m) = matrix_cache()
        .read()
        .expect("matrix cache poisoned")
        .get(&key)
    {
        return Ok(Arc::clone(m));
    }
    let first = OperationalMatrix::first_power(basis, order);
    let mut acc = first.clone();
    for _ in 1..power {
        acc = acc.multiply(&first);
    }
    let acc = Arc::new(acc);
    let mut cache = matrix_cache().write().expect("matrix cache poisoned");
    Ok(Arc::clone(cache.entry(key).or_insert(acc)))
}

/// `[P(t), M^(1) P(t), ..., M^(max_k) P(t)]`.
pub fn basis_derivatives(
    basis: BasisKind,
    order: usize,
    t: f64,
    max_k: usize,
) -> Result<Vec<Vec<f64>>, OrthoError> {
    if max_k > MAX_DERIVATIVE {
        return Err(OrthoError::DerivativeOrder(max_k));
    }
    let p = eval_basis(basis, order, t)?;
    let mut out = Vec::with_capacity(max_k + 1);
    for k in 1..=max_k {
        out.push(operational_matrix(basis, order, k)?.apply(&p.values));
    }
    out.insert(0, p.values);
    Ok(out)
}

/// Precomputed `M^(1..=MAX_DERIVATIVE)` for one basis/order pair, used on the
/// network hot path to avoid the cache lock.
#[derive(Debug, Clone)]
pub struct DerivativeTable {
    basis: BasisKind,
    order: usize,
    powers: Vec<Arc<OperationalMatrix>>,
}

impl DerivativeTable {
    pub fn new(basis: BasisKind, order: usize) -> Self {
        let powers = (1..=MAX_DERIVATIVE)
            .map(|k| operational_matrix(basis, order, k).expect("power >= 1"))
            .collect();
        DerivativeTable {
            basis,
            order,
            powers,
        }
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Writes `P^(k)(t)` into `out[k]` for `k = 0..out.len()`.
    pub fn eval_into(&self, t: f64, out: &mut [Vec<f64>]) {
        debug_assert!(out.len() <= MAX_DERIVATIVE + 1);
        let (head, tail) = out.split_first_mut().expect("at least the value row");
        fill_basis(self.basis, t, head);
        for (k, row) in tail.iter_mut().enumerate() {
            self.powers[k].apply_into(head, row);
        }
    }
}

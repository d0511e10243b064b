//! The weighted product space `H0 × H1 × … × H_{n-1}` on which the splitting
//! iterates live.
//!
//! A [`ProductPoint`] stores `z ∈ H0` and the dual blocks `w_1, …, w_{n-1}`.
//! The n-th dual block is never stored: it is recomputed from the others as
//! `w_n = -Σ G_i^* w_i` by [`implied_dual_block`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// A point `p = (z, w_1, …, w_{n-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPoint {
    #[serde(with = "crate::serde_vec::vector")]
    pub z: Vector,
    #[serde(with = "crate::serde_vec::vectors")]
    pub w: Vec<Vector>,
}

impl ProductPoint {
    pub fn new(z: Vector, w: Vec<Vector>) -> Self {
        Self { z, w }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(!dims.is_empty(), "product space needs at least the z block");
        Self {
            z: Vector::zeros(dims[0]),
            w: dims[1..].iter().map(|&d| Vector::zeros(d)).collect(),
        }
    }

    /// Block dimensions `(dim H0, dim H1, …, dim H_{n-1})`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.z.len())
            .chain(self.w.iter().map(|b| b.len()))
            .collect()
    }

    pub fn is_compatible(&self, other: &ProductPoint) -> bool {
        self.z.len() == other.z.len()
            && self.w.len() == other.w.len()
            && self.w.iter().zip(&other.w).all(|(a, b)| a.len() == b.len())
    }

    pub fn check_compatible(&self, other: &ProductPoint) -> Result<()> {
        check_dim("product point z block", self.z.len(), other.z.len())?;
        check_dim("product point block count", self.w.len(), other.w.len())?;
        for (a, b) in self.w.iter().zip(&other.w) {
            check_dim("product point w block", a.len(), b.len())?;
        }
        Ok(())
    }

    /// `self + t * other`
    pub fn add_scaled(&self, t: f64, other: &ProductPoint) -> ProductPoint {
        debug_assert!(self.is_compatible(other));
        ProductPoint {
            z: &self.z + &other.z * t,
            w: self.w.iter().zip(&other.w).map(|(a, b)| a + b * t).collect(),
        }
    }

    pub fn sub(&self, other: &ProductPoint) -> ProductPoint {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, t: f64) -> ProductPoint {
        ProductPoint {
            z: &self.z * t,
            w: self.w.iter().map(|b| b * t).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.z
            .iter()
            .chain(self.w.iter().flat_map(|b| b.iter()))
            .all(|v| v.is_finite())
    }

    /// A point with independent standard-normal-ish entries, for probes and tests.
    pub fn random(dims: &[usize], rng: &mut impl Rng) -> ProductPoint {
        let mut draw = |d: usize| Vector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let z = draw(dims[0]);
        let w = dims[1..].iter().map(|&d| draw(d)).collect();
        ProductPoint { z, w }
    }
}

/// The weight `γ > 0` on the z block of the product inner product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMetric {
    gamma: f64,
}

impl GammaMetric {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self { gamma })
        } else {
            Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")))
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `γ⟨z, z'⟩ + Σ ⟨w_i, w_i'⟩`
    pub fn inner(&self, p: &ProductPoint, q: &ProductPoint) -> Result<f64> {
        p.check_compatible(q)?;
        Ok(self.inner_unchecked(p, q))
    }

    pub fn norm(&self, p: &ProductPoint) -> f64 {
        self.inner_unchecked(p, p).max(0.0).sqrt()
    }

    pub fn norm_sq(&self, p: &ProductPoint) -> f64 {
        self.inner_unchecked(p, p)
    }

    pub fn distance(&self, p: &ProductPoint, q: &ProductPoint) -> f64 {
        self.norm(&p.sub(q))
    }

    pub(crate) fn inner_unchecked(&self, p: &ProductPoint, q: &ProductPoint) -> f64 {
        debug_assert!(p.is_compatible(q));
        self.gamma * p.z.dot(&q.z) + p.w.iter().zip(&q.w).map(|(a, b)| a.dot(b)).sum::<f64>()
    }
}

impl Default for GammaMetric {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

/// A bounded linear map `G : H0 → H_i` with access to its adjoint.
pub trait LinearMap: Send + Sync + fmt::Debug {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
    fn adjoint_apply(&self, u: &Vector) -> Vector;

    /// Operator norm when known in closed form.
    fn norm_hint(&self) -> Option<f64> {
        None
    }

    /// Dense representation, used for serialization.
    fn as_dense(&self) -> Option<&Matrix> {
        None
    }
}

/// Dense matrix implementation of [`LinearMap`].
#[derive(Debug, Clone)]
pub struct DenseMap {
    matrix: Matrix,
    norm: Option<f64>,
}

impl DenseMap {
    pub fn new(matrix: Matrix) -> Self {
        Self { matrix, norm: None }
    }

    pub fn with_norm(matrix: Matrix, norm: f64) -> Self {
        Self {
            matrix,
            norm: Some(norm),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::with_norm(Matrix::identity(dim, dim), 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self::with_norm(Matrix::from_element(1, 1, value), value.abs())
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

impl LinearMap for DenseMap {
    fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }

    fn adjoint_apply(&self, u: &Vector) -> Vector {
        self.matrix.tr_mul(u)
    }

    fn norm_hint(&self) -> Option<f64> {
        self.norm
    }

    fn as_dense(&self) -> Option<&Matrix> {
        Some(&self.matrix)
    }
}

const POWER_ITERATIONS: usize = 100;
const POWER_STAGNATION: f64 = 1e-10;

/// Operator norm of `map`, from its hint or by power iteration on `G^* G`.
pub fn operator_norm(map: &dyn LinearMap) -> f64 {
    if let Some(norm) = map.norm_hint() {
        return norm;
    }
    let n = map.input_dim();
    if n == 0 || map.output_dim() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_ed0f_9015);
    let mut v = Vector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    v /= v.norm();
    let mut estimate = 0.0_f64;
    for _ in 0..POWER_ITERATIONS {
        let next = map.adjoint_apply(&map.apply(&v));
        let lambda = next.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        v = next / lambda;
        let converged = (lambda - estimate).abs() <= POWER_STAGNATION * lambda;
        estimate = lambda;
        if converged {
            break;
        }
    }
    estimate.sqrt()
}

/// The family `G_1, …, G_{n-1}`; `G_n` is the identity on `H0` and is never stored.
#[derive(Debug, Clone)]
pub struct LinearOpFamily {
    dim0: usize,
    ops: Vec<Arc<dyn LinearMap>>,
}

impl LinearOpFamily {
    pub fn new(dim0: usize, ops: Vec<Arc<dyn LinearMap>>) -> Result<Self> {
        for op in &ops {
            check_dim("linear map input", dim0, op.input_dim())?;
        }
        Ok(Self { dim0, ops })
    }

    /// Family where every `G_i` is the identity on `H0`.
    pub fn identities(dim0: usize, count: usize) -> Self {
        let ops = (0..count)
            .map(|_| Arc::new(DenseMap::identity(dim0)) as Arc<dyn LinearMap>)
            .collect();
        Self { dim0, ops }
    }

    /// Number of operator terms `n` (including the implicit identity block).
    pub fn n(&self) -> usize {
        self.ops.len() + 1
    }

    pub fn dim0(&self) -> usize {
        self.dim0
    }

    /// `(dim H0, dim H1, …, dim H_{n-1})`
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.dim0)
            .chain(self.ops.iter().map(|g| g.output_dim()))
            .collect()
    }

    /// Dimension of `H_i` for `i ∈ 1..=n` (with `H_n = H0`).
    pub fn block_dim(&self, i: usize) -> Result<usize> {
        self.check_index(i)?;
        Ok(if i == self.n() {
            self.dim0
        } else {
            self.ops[i - 1].output_dim()
        })
    }

    pub fn map(&self, i: usize) -> Option<&Arc<dyn LinearMap>> {
        if i >= 1 && i < self.n() {
            Some(&self.ops[i - 1])
        } else {
            None
        }
    }

    pub fn maps(&self) -> &[Arc<dyn LinearMap>] {
        &self.ops
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= 1 && i <= self.n() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, n: self.n() })
        }
    }

    /// `G_i x`; identity for `i = n`.
    pub fn apply(&self, i: usize, x: &Vector) -> Result<Vector> {
        self.check_index(i)?;
        check_dim("family_apply input", self.dim0, x.len())?;
        Ok(match self.map(i) {
            Some(g) => g.apply(x),
            None => x.clone(),
        })
    }

    /// `G_i^* u`; identity for `i = n`.
    pub fn adjoint(&self, i: usize, u: &Vector) -> Result<Vector> {
        let dim = self.block_dim(i)?;
        check_dim("family_adjoint input", dim, u.len())?;
        Ok(match self.map(i) {
            Some(g) => g.adjoint_apply(u),
            None => u.clone(),
        })
    }

    /// `max_{i=1..n} ||G_i||²`, which is at least 1 because `G_n = I`.
    pub fn max_norm_sq(&self) -> f64 {
        self.ops
            .iter()
            .map(|g| operator_norm(g.as_ref()).powi(2))
            .fold(1.0, f64::max)
    }

    pub fn check_point(&self, p: &ProductPoint) -> Result<()> {
        check_dim("product point z block", self.dim0, p.z.len())?;
        check_dim("product point block count", self.ops.len(), p.w.len())?;
        for (g, w) in self.ops.iter().zip(&p.w) {
            check_dim("product point w block", g.output_dim(), w.len())?;
        }
        Ok(())
    }

    /// Largest relative adjoint mismatch `|⟨Gx,u⟩ - ⟨x,G^*u⟩| / (||Gx|| ||u|| + ||x|| ||G^*u||)`
    /// over random probes.
    pub fn adjoint_mismatch(&self, probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        for g in &self.ops {
            for _ in 0..probes {
                let x = Vector::from_fn(g.input_dim(), |_, _| rng.gen_range(-1.0..1.0));
                let u = Vector::from_fn(g.output_dim(), |_, _| rng.gen_range(-1.0..1.0));
                let gx = g.apply(&x);
                let gtu = g.adjoint_apply(&u);
                let scale = gx.norm() * u.norm() + x.norm() * gtu.norm();
                if scale > 0.0 {
                    worst = worst.max((gx.dot(&u) - x.dot(&gtu)).abs() / scale);
                }
            }
        }
        worst
    }
}

/// `w_n = -Σ_{i<n} G_i^* w_i`
pub fn implied_dual_block(p: &ProductPoint, family: &LinearOpFamily) -> Vector {
    debug_assert_eq!(p.w.len(), family.maps().len());
    let mut out = Vector::zeros(family.dim0());
    for (g, w) in family.maps().iter().zip(&p.w) {
        out -= g.adjoint_apply(w);
    }
    out
}

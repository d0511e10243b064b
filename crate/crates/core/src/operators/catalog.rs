use crate::error::{check_dim, Error, Result};
use crate::product_space::{Matrix, Vector};

use super::sets::{clamp, encode_bounds, validate_bounds};
use super::{
    DenseMatrix, FenchelPair, ForwardDescriptor, ForwardOracle, MonotoneOracle, OperatorDescriptor, OperatorKind,
    Regularity,
};

/// `T = 0`
#[derive(Debug, Clone)]
pub struct ZeroOperator {
    dim: usize,
}

impl ZeroOperator {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl FenchelPair for ZeroOperator {
    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }

    fn conjugate(&self, u: &Vector) -> f64 {
        if u.amax() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl MonotoneOracle for ZeroOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::Zero
    }

    fn resolvent(&self, _lambda: f64, u: &Vector) -> Result<Vector> {
        Ok(u.clone())
    }

    fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        Some(self)
    }

    fn contains(&self, _x: &Vector, y: &Vector, tol: f64) -> Option<bool> {
        Some(y.amax() <= tol)
    }

    fn descriptor(&self) -> Option<OperatorDescriptor> {
        Some(OperatorDescriptor::Zero { dim: self.dim })
    }
}

pub fn soft_threshold(u: &Vector, t: f64) -> Vector {
    u.map(|v| v.signum() * (v.abs() - t).max(0.0))
}

/// `∂(μ||·||₁)`
#[derive(Debug, Clone)]
pub struct L1Norm {
    dim: usize,
    mu: f64,
}

impl L1Norm {
    pub fn new(dim: usize, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidConfig(format!("l1 weight must be >= 0, got {mu}")));
        }
        Ok(Self { dim, mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

impl FenchelPair for L1Norm {
    fn value(&self, x: &Vector) -> f64 {
        self.mu * x.lp_norm(1)
    }

    // Indicator of the ∞-ball of radius μ, with slack for rounding in (u - x)/λ.
    fn conjugate(&self, u: &Vector) -> f64 {
        if u.amax() <= self.mu * (1.0 + 1e-12) + 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl MonotoneOracle for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::Subdifferential
    }

    fn resolvent(&self, lambda: f64, u: &Vector) -> Result<Vector> {
        Ok(soft_threshold(u, lambda * self.mu))
    }

    fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        Some(self)
    }

    fn contains(&self, x: &Vector, y: &Vector, tol: f64) -> Option<bool> {
        Some(x.iter().zip(y.iter()).all(|(&xi, &yi)| {
            if xi == 0.0 {
                yi.abs() <= self.mu + tol
            } else {
                (yi - self.mu * xi.signum()).abs() <= tol
            }
        }))
    }

    fn descriptor(&self) -> Option<OperatorDescriptor> {
        Some(OperatorDescriptor::L1 {
            dim: self.dim,
            mu: self.mu,
        })
    }
}

/// `∇(κ/2 ||·||²) = κI`
#[derive(Debug, Clone)]
pub struct SquaredNorm {
    dim: usize,
    scale: f64,
}

impl SquaredNorm {
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "squared-norm scale must be > 0, got {scale}"
            )));
        }
        Ok(Self { dim, scale })
    }
}

impl FenchelPair for SquaredNorm {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * self.scale * x.norm_squared()
    }

    fn conjugate(&self, u: &Vector) -> f64 {
        0.5 * u.norm_squared() / self.scale
    }
}

impl MonotoneOracle for SquaredNorm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::Subdifferential
    }

    fn resolvent(&self, lambda: f64, u: &Vector) -> Result<Vector> {
        Ok(u / (1.0 + lambda * self.scale))
    }

    fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        Some(self)
    }

    fn contains(&self, x: &Vector, y: &Vector, tol: f64) -> Option<bool> {
        Some((y - x * self.scale).amax() <= tol)
    }

    fn descriptor(&self) -> Option<OperatorDescriptor> {
        Some(OperatorDescriptor::SquaredNorm {
            dim: self.dim,
            scale: self.scale,
        })
    }
}

/// Normal cone of a box; its resolvent is the clamp for every λ.
#[derive(Debug, Clone)]
pub struct BoxNormalCone {
    lower: Vector,
    upper: Vector,
}

impl BoxNormalCone {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        validate_bounds(&lower, &upper)?;
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    fn slack(bound: f64) -> f64 {
        1e-12 * (1.0 + bound.abs())
    }
}

impl FenchelPair for BoxNormalCone {
    fn value(&self, x: &Vector) -> f64 {
        let inside = x.iter().enumerate().all(|(i, &v)| {
            v >= self.lower[i] - Self::slack(self.lower[i]) && v <= self.upper[i] + Self::slack(self.upper[i])
        });
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }

    // Support function of the box.
    fn conjugate(&self, u: &Vector) -> f64 {
        let mut s = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            if ui.abs() <= 1e-12 {
                continue;
            }
            let bound = if ui > 0.0 { self.upper[i] } else { self.lower[i] };
            if !bound.is_finite() {
                return f64::INFINITY;
            }
            s += ui * bound;
        }
        s
    }
}

impl MonotoneOracle for BoxNormalCone {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::NormalCone
    }

    fn resolvent(&self, _lambda: f64, u: &Vector) -> Result<Vector> {
        Ok(clamp(u, &self.lower, &self.upper))
    }

    fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        Some(self)
    }

    fn contains(&self, x: &Vector, y: &Vector, tol: f64) -> Option<bool> {
        Some(x.iter().zip(y.iter()).enumerate().all(|(i, (&xi, &yi))| {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if xi < lo - tol || xi > hi + tol {
                return false;
            }
            let at_lo = (xi - lo).abs() <= tol;
            let at_hi = (xi - hi).abs() <= tol;
            match (at_lo, at_hi) {
                (true, true) => true,
                (true, false) => yi <= tol,
                (false, true) => yi >= -tol,
                (false, false) => yi.abs() <= tol,
            }
        }))
    }

    fn descriptor(&self) -> Option<OperatorDescriptor> {
        Some(OperatorDescriptor::BoxNormalCone {
            lower: encode_bounds(&self.lower),
            upper: encode_bounds(&self.upper),
        })
    }
}

/// Normal cone of `{x : Ax = b}`; the resolvent is the orthogonal projection.
#[derive(Debug, Clone)]
pub struct AffineSubspaceNormalCone {
    a: Matrix,
    b: Vector,
    pinv: Matrix,
    /// Minimal-norm point of the subspace.
    anchor: Vector,
}

impl AffineSubspaceNormalCone {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        check_dim("affine constraint rows", a.nrows(), b.len())?;
        let tol = 1e-12 * (1.0 + a.norm());
        let pinv = a
            .clone()
            .pseudo_inverse(tol)
            .map_err(|e| Error::Oracle(e.to_string()))?;
        let anchor = &pinv * &b;
        if (&a * &anchor - &b).norm() > 1e-9 * (1.0 + b.norm()) {
            return Err(Error::InvalidConfig(
                "affine constraint system Ax = b is inconsistent".into(),
            ));
        }
        Ok(Self { a, b, pinv, anchor })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn rhs(&self) -> &Vector {
        &self.b
    }

    pub fn project(&self, u: &Vector) -> Vector {
        u - &self.pinv * (&self.a * u - &self.b)
    }

    fn residual(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b).norm()
    }

    // Component of u orthogonal to range(Aᵀ).
    fn off_range(&self, u: &Vector) -> f64 {
        (u - &self.pinv * (&self.a * u)).norm()
    }
}

impl FenchelPair for AffineSubspaceNormalCone {
    fn value(&self, x: &Vector) -> f64 {
        if self.residual(x) <= 1e-10 * (1.0 + self.b.norm() + x.norm()) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn conjugate(&self, u: &Vector) -> f64 {
        if self.off_range(u) <= 1e-10 * (1.0 + u.norm()) {
            u.dot(&self.anchor)
        } else {
            f64::INFINITY
        }
    }
}

impl MonotoneOracle for AffineSubspaceNormalCone {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::NormalCone
    }

    fn resolvent(&self, _lambda: f64, u: &Vector) -> Result<Vector> {
        Ok(self.project(u))
    }

    fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        Some(self)
    }

    fn contains(&self, x: &Vector, y: &Vector, tol: f64) -> Option<bool> {
        Some(self.residual(x) <= tol && self.off_range(y) <= tol)
    }

    fn descriptor(&self) -> Option<OperatorDescriptor> {
        Some(OperatorDescriptor::AffineSubspaceNormalCone {
            a: DenseMatrix::from(&self.a),
            b: self.b.iter().copied().collect(),
        })
    }
}

fn check_monotone(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            context: "affine operator matrix",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let min_eig = sym
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 * (1.0 + m.norm()) {
        return Err(Error::InvalidConfig(format!(
            "affine map is not monotone: symmetric part has eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}

pub(crate) fn affine_resolvent(m: &Matrix, q: &Vector, lambda: f64, u: &Vector) -> Result<Vector> {
    let lhs = m * lambda + Matrix::identity(m.nrows(), m.ncols());
    lhs.lu()
        .solve(&(u - q * lambda))
        .ok_or_else(|| Error::Oracle("singular system in affine resolvent".into()))
}

/// `T(x) = Mx + q` with monotone `M`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    m: Matrix,
    q: Vector,
}

impl AffineOperator {
    pub fn new(m: Matrix, q: Vector) -> Result<Self> {
        check_monotone(&m)?;
        check_dim("affine offset", m.nrows(), q.len())?;
        Ok(Self { m, q })
    }
}

impl MonotoneOracle for AffineOperator {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::Affine
    }

    fn resolvent(&self, lambda: f64, u: &Vector) -> Result<Vector> {
        affine_resolvent(&self.m, &self.q, lambda, u)
    }

    fn contains(&self, x: &Vector, y: &Vector, tol: f64) -> Option<bool> {
        Some((y - (&self.m * x + &self.q)).amax() <= tol)
    }

    fn affine_parts(&self) -> Option<(&Matrix, &Vector)> {
        Some((&self.m, &self.q))
    }

    fn descriptor(&self) -> Option<OperatorDescriptor> {
        Some(OperatorDescriptor::Affine {
            m: DenseMatrix::from(&self.m),
            q: self.q.iter().copied().collect(),
        })
    }
}

/// `½||Ax - b||²` with invertible `AᵀA`, so its conjugate has a closed form.
#[derive(Debug, Clone)]
struct LeastSquares {
    a: Matrix,
    b: Vector,
    gram: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl FenchelPair for LeastSquares {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * (&self.a * x - &self.b).norm_squared()
    }

    fn conjugate(&self, u: &Vector) -> f64 {
        let x = self.gram.solve(&(u + self.a.transpose() * &self.b));
        u.dot(&x) - self.value(&x)
    }
}

/// Forward map `F(x) = Mx + q` with a declared modulus.
#[derive(Debug, Clone)]
pub struct AffineForward {
    m: Matrix,
    q: Vector,
    modulus: f64,
    regularity: Regularity,
    pair: Option<LeastSquares>,
}

impl AffineForward {
    pub fn new(m: Matrix, q: Vector, modulus: f64, regularity: Regularity) -> Result<Self> {
        check_monotone(&m)?;
        check_dim("forward offset", m.nrows(), q.len())?;
        if !(modulus > 0.0 && modulus.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "forward modulus must be > 0, got {modulus}"
            )));
        }
        Ok(Self {
            m,
            q,
            modulus,
            regularity,
            pair: None,
        })
    }

    /// `∇(½||Ax - b||²) = Aᵀ(Ax - b)`, cocoercive with `L = ||A||²`.
    pub fn quadratic_gradient(a: &Matrix, b: &Vector) -> Self {
        assert_eq!(a.nrows(), b.len(), "quadratic_gradient: rows of A vs b");
        let m = a.transpose() * a;
        let q = -(a.transpose() * b);
        let sigma = a.clone().singular_values().iter().copied().fold(0.0, f64::max);
        let pair = m.clone().cholesky().map(|gram| LeastSquares {
            a: a.clone(),
            b: b.clone(),
            gram,
        });
        Self {
            m,
            q,
            modulus: (sigma * sigma).max(f64::MIN_POSITIVE),
            regularity: Regularity::Cocoercive,
            pair,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn offset(&self) -> &Vector {
        &self.q
    }
}

impl ForwardOracle for AffineForward {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn eval(&self, x: &Vector) -> Vector {
        &self.m * x + &self.q
    }

    fn modulus(&self) -> f64 {
        self.modulus
    }

    fn regularity(&self) -> Regularity {
        self.regularity
    }

    fn affine_parts(&self) -> Option<(&Matrix, &Vector)> {
        Some((&self.m, &self.q))
    }

    fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        self.pair.as_ref().map(|p| p as &dyn FenchelPair)
    }

    fn descriptor(&self) -> Option<ForwardDescriptor> {
        Some(ForwardDescriptor::Affine {
            m: DenseMatrix::from(&self.m),
            q: self.q.iter().copied().collect(),
            modulus: self.modulus,
            regularity: self.regularity,
        })
    }
}

//! Oracles for the maximal monotone terms of the inclusion.
//!
//! Each term is an [`OperatorBlock`]: either a plain maximal monotone operator
//! accessed through its resolvent, or a split `F + B` where `F` is a
//! single-valued forward map and `B` a backward (resolvent) part whose domain
//! lies inside a projectable set `C`.

mod catalog;
mod sets;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::product_space::{Matrix, Vector};

pub use catalog::{
    soft_threshold, AffineForward, AffineOperator, AffineSubspaceNormalCone, BoxNormalCone, L1Norm, SquaredNorm,
    ZeroOperator,
};
pub use sets::ProjectableSet;

/// Tolerance added to Fenchel–Young gaps and indicator tests.
pub const FENCHEL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Zero,
    Subdifferential,
    NormalCone,
    Affine,
    Custom,
}

/// A convex function with computable conjugate, so that `u ∈ ∂_ε f(x)` can be
/// tested through the Fenchel–Young gap.
pub trait FenchelPair: Send + Sync {
    fn value(&self, x: &Vector) -> f64;
    /// May return `f64::INFINITY` outside the conjugate's domain.
    fn conjugate(&self, u: &Vector) -> f64;
}

/// A maximal monotone operator `T` accessed through `(λT + I)^{-1}`.
pub trait MonotoneOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn kind(&self) -> OperatorKind;

    /// `(λT + I)^{-1}(u)`
    fn resolvent(&self, lambda: f64, u: &Vector) -> Result<Vector>;

    /// Present when `T = ∂f` with `f` and `f*` computable.
    fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        None
    }

    /// Closed-form graph membership `y ∈ T(x)` up to `tol`, when available.
    fn contains(&self, _x: &Vector, _y: &Vector, _tol: f64) -> Option<bool> {
        None
    }

    /// `T = x ↦ Mx + q`, when the operator is affine.
    fn affine_parts(&self) -> Option<(&Matrix, &Vector)> {
        None
    }

    fn descriptor(&self) -> Option<OperatorDescriptor> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    /// `⟨F(x)-F(y), x-y⟩ ≥ (1/L)||F(x)-F(y)||²`
    Cocoercive,
    /// `||F(x)-F(y)|| ≤ L||x-y||`
    Lipschitz,
}

/// A single-valued monotone map used in forward steps.
pub trait ForwardOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Vector) -> Vector;
    /// The declared modulus `L`.
    fn modulus(&self) -> f64;
    fn regularity(&self) -> Regularity;

    fn affine_parts(&self) -> Option<(&Matrix, &Vector)> {
        None
    }

    /// Present when `F = ∇f` with `f` and `f*` computable.
    fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        None
    }

    fn descriptor(&self) -> Option<ForwardDescriptor> {
        None
    }
}

pub fn resolvent(op: &dyn MonotoneOracle, lambda: f64, u: &Vector) -> Result<Vector> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "resolvent step must be positive, got {lambda}"
        )));
    }
    check_dim("resolvent input", op.dim(), u.len())?;
    op.resolvent(lambda, u)
}

pub fn forward_eval(op: &dyn ForwardOracle, x: &Vector) -> Vector {
    op.eval(x)
}

/// `u ∈ ∂_ε f(x)`, tested as `f(x) + f*(u) ≤ ⟨x,u⟩ + ε + 1e-10`.
pub fn eps_subdiff_check(pair: &dyn FenchelPair, x: &Vector, u: &Vector, eps: f64) -> bool {
    fenchel_young_gap(pair, x, u) <= eps + FENCHEL_TOL
}

pub fn fenchel_young_gap(pair: &dyn FenchelPair, x: &Vector, u: &Vector) -> f64 {
    pair.value(x) + pair.conjugate(u) - x.dot(u)
}

/// [`eps_subdiff_check`] on an oracle, failing when no conjugate is available.
pub fn eps_subdiff_check_oracle(op: &dyn MonotoneOracle, x: &Vector, u: &Vector, eps: f64) -> Result<bool> {
    let pair = op
        .fenchel_pair()
        .ok_or_else(|| Error::Unsupported(format!("no conjugate available for {:?} operator", op.kind())))?;
    Ok(eps_subdiff_check(pair, x, u, eps))
}

/// Exact test of `v ∈ F^[ε](x)` for an affine monotone map `F(x) = Mx + q`.
///
/// With `r = v - F(x)` and `S = (M + Mᵀ)/2`, membership holds iff `r ∈ range S`
/// and `¼ rᵀ S⁺ r ≤ ε`.
pub fn affine_enlargement_check(m: &Matrix, q: &Vector, x: &Vector, v: &Vector, eps: f64) -> bool {
    let r = v - (m * x + q);
    let s = (m + m.transpose()) * 0.5;
    let scale = 1.0 + r.norm() * (1.0 + s.norm());
    let pinv = match s.clone().pseudo_inverse(1e-12 * (1.0 + s.norm())) {
        Ok(p) => p,
        Err(_) => return false,
    };
    let sr = &pinv * &r;
    let off_range = (&s * &sr - &r).norm();
    if off_range > 1e-9 * scale {
        return false;
    }
    0.25 * r.dot(&sr) <= eps + FENCHEL_TOL * scale
}

/// One term `G_i^* T_i G_i` of the inclusion.
#[derive(Debug, Clone)]
pub enum OperatorBlock {
    Resolvent(Arc<dyn MonotoneOracle>),
    /// `T = F + B` with `Dom B ⊆ C ⊆ Dom F` (a caller contract).
    Split {
        forward: Arc<dyn ForwardOracle>,
        backward: Arc<dyn MonotoneOracle>,
        set: ProjectableSet,
    },
}

impl OperatorBlock {
    pub fn plain(op: impl MonotoneOracle + 'static) -> Self {
        OperatorBlock::Resolvent(Arc::new(op))
    }

    pub fn split(
        forward: impl ForwardOracle + 'static,
        backward: impl MonotoneOracle + 'static,
        set: ProjectableSet,
    ) -> Result<Self> {
        check_dim("split forward/backward", forward.dim(), backward.dim())?;
        check_dim("split set", forward.dim(), set.dim())?;
        Ok(OperatorBlock::Split {
            forward: Arc::new(forward),
            backward: Arc::new(backward),
            set,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            OperatorBlock::Resolvent(op) => op.dim(),
            OperatorBlock::Split { forward, .. } => forward.dim(),
        }
    }

    pub fn is_split(&self) -> bool {
        matches!(self, OperatorBlock::Split { .. })
    }

    /// Resolvent of the whole term `T`.
    ///
    /// A split block has one only when `F` is affine and `B = 0`, in which case
    /// `(λM + I)x = u - λq` is solved densely.
    pub fn resolvent(&self, lambda: f64, u: &Vector) -> Result<Vector> {
        match self {
            OperatorBlock::Resolvent(op) => resolvent(op.as_ref(), lambda, u),
            OperatorBlock::Split { forward, backward, .. } => {
                if !(lambda > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "resolvent step must be positive, got {lambda}"
                    )));
                }
                check_dim("resolvent input", forward.dim(), u.len())?;
                match (forward.affine_parts(), backward.kind()) {
                    (Some((m, q)), OperatorKind::Zero) => catalog::affine_resolvent(m, q, lambda, u),
                    _ => Err(Error::Unsupported(
                        "exact resolvent of a split block needs an affine forward part and B = 0".into(),
                    )),
                }
            }
        }
    }

    /// Fenchel pair of the whole term, when it is a subdifferential.
    pub fn fenchel_pair(&self) -> Option<&dyn FenchelPair> {
        match self {
            OperatorBlock::Resolvent(op) => op.fenchel_pair(),
            // T = F = ∇f when B = 0 on the whole space.
            OperatorBlock::Split {
                forward,
                backward,
                set: ProjectableSet::Whole { .. },
            } if backward.kind() == OperatorKind::Zero => forward.fenchel_pair(),
            OperatorBlock::Split { .. } => None,
        }
    }

    pub fn descriptor(&self) -> Option<BlockDescriptor> {
        match self {
            OperatorBlock::Resolvent(op) => Some(BlockDescriptor::Resolvent {
                operator: op.descriptor()?,
            }),
            OperatorBlock::Split { forward, backward, set } => Some(BlockDescriptor::Split {
                forward: forward.descriptor()?,
                backward: backward.descriptor()?,
                set: set.descriptor(),
            }),
        }
    }
}

/// Worst violation of firm nonexpansiveness
/// `||J(u)-J(v)||² ≤ ⟨J(u)-J(v), u-v⟩` over random pairs drawn from `[-scale, scale]^d`.
pub fn firm_nonexpansive_violation(
    op: &dyn MonotoneOracle,
    lambda: f64,
    pairs: usize,
    scale: f64,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let u = random_vector(op.dim(), scale, &mut rng);
        let v = random_vector(op.dim(), scale, &mut rng);
        let ju = op.resolvent(lambda, &u)?;
        let jv = op.resolvent(lambda, &v)?;
        let d = &ju - &jv;
        worst = worst.max(d.norm_squared() - d.dot(&(&u - &v)));
    }
    Ok(worst)
}

/// Outcome of a randomized regularity audit of a forward map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardAudit {
    /// `max (1/L)||ΔF||² - ⟨ΔF, Δx⟩`, normalized by `||Δx||²`.
    pub cocoercivity_violation: f64,
    /// `max ||ΔF|| - L||Δx||`, normalized by `||Δx||`.
    pub lipschitz_violation: f64,
    /// `max -⟨ΔF, Δx⟩ / ||Δx||²`
    pub monotonicity_violation: f64,
}

impl ForwardAudit {
    const TOL: f64 = 1e-10;

    pub fn cocoercive(&self) -> bool {
        self.cocoercivity_violation <= Self::TOL
    }

    pub fn lipschitz(&self) -> bool {
        self.lipschitz_violation <= Self::TOL
    }

    pub fn monotone(&self) -> bool {
        self.monotonicity_violation <= Self::TOL
    }

    /// Whether the declared regularity survived the audit.
    pub fn supports(&self, regularity: Regularity) -> bool {
        match regularity {
            Regularity::Cocoercive => self.cocoercive(),
            Regularity::Lipschitz => self.lipschitz(),
        }
    }
}

/// Randomized audit of the declared modulus; it can flag a wrong declaration but
/// never certify a right one.
pub fn audit_forward(op: &dyn ForwardOracle, set: &ProjectableSet, pairs: usize, seed: u64) -> ForwardAudit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = op.modulus();
    let mut audit = ForwardAudit {
        cocoercivity_violation: f64::NEG_INFINITY,
        lipschitz_violation: f64::NEG_INFINITY,
        monotonicity_violation: f64::NEG_INFINITY,
    };
    for _ in 0..pairs {
        let x = set.project(&random_vector(op.dim(), 10.0, &mut rng));
        let y = set.project(&random_vector(op.dim(), 10.0, &mut rng));
        let dx = &x - &y;
        let n2 = dx.norm_squared();
        if n2 == 0.0 {
            continue;
        }
        let df = op.eval(&x) - op.eval(&y);
        let inner = df.dot(&dx);
        audit.cocoercivity_violation = audit.cocoercivity_violation.max((df.norm_squared() / l - inner) / n2);
        audit.lipschitz_violation = audit.lipschitz_violation.max((df.norm() - l * dx.norm()) / dx.norm());
        audit.monotonicity_violation = audit.monotonicity_violation.max(-inner / n2);
    }
    audit
}

pub(crate) fn random_vector(dim: usize, scale: f64, rng: &mut impl Rng) -> Vector {
    Vector::from_fn(dim, |_, _| rng.gen_range(-scale..scale))
}

/// Row-major dense matrix in serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for DenseMatrix {
    fn from(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl DenseMatrix {
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Parse(format!(
                "matrix data has {} entries, expected {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// Serialized catalog operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorDescriptor {
    Zero {
        dim: usize,
    },
    L1 {
        dim: usize,
        mu: f64,
    },
    SquaredNorm {
        dim: usize,
        scale: f64,
    },
    /// `None` bounds are infinite.
    BoxNormalCone {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
    AffineSubspaceNormalCone {
        a: DenseMatrix,
        b: Vec<f64>,
    },
    Affine {
        m: DenseMatrix,
        q: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForwardDescriptor {
    Affine {
        m: DenseMatrix,
        q: Vec<f64>,
        modulus: f64,
        regularity: Regularity,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetDescriptor {
    Whole {
        dim: usize,
    },
    Box {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockDescriptor {
    Resolvent {
        operator: OperatorDescriptor,
    },
    Split {
        forward: ForwardDescriptor,
        backward: OperatorDescriptor,
        set: SetDescriptor,
    },
}

impl OperatorDescriptor {
    pub fn build(&self) -> Result<Arc<dyn MonotoneOracle>> {
        Ok(match self {
            OperatorDescriptor::Zero { dim } => Arc::new(ZeroOperator::new(*dim)),
            OperatorDescriptor::L1 { dim, mu } => Arc::new(L1Norm::new(*dim, *mu)?),
            OperatorDescriptor::SquaredNorm { dim, scale } => Arc::new(SquaredNorm::new(*dim, *scale)?),
            OperatorDescriptor::BoxNormalCone { lower, upper } => Arc::new(BoxNormalCone::new(
                sets::decode_bounds(lower, f64::NEG_INFINITY),
                sets::decode_bounds(upper, f64::INFINITY),
            )?),
            OperatorDescriptor::AffineSubspaceNormalCone { a, b } => Arc::new(AffineSubspaceNormalCone::new(
                a.to_matrix()?,
                Vector::from_vec(b.clone()),
            )?),
            OperatorDescriptor::Affine { m, q } => {
                Arc::new(AffineOperator::new(m.to_matrix()?, Vector::from_vec(q.clone()))?)
            }
        })
    }
}

impl ForwardDescriptor {
    pub fn build(&self) -> Result<Arc<dyn ForwardOracle>> {
        match self {
            ForwardDescriptor::Affine {
                m,
                q,
                modulus,
                regularity,
            } => Ok(Arc::new(AffineForward::new(
                m.to_matrix()?,
                Vector::from_vec(q.clone()),
                *modulus,
                *regularity,
            )?)),
        }
    }
}

impl SetDescriptor {
    pub fn build(&self) -> Result<ProjectableSet> {
        match self {
            SetDescriptor::Whole { dim } => Ok(ProjectableSet::Whole { dim: *dim }),
            SetDescriptor::Box { lower, upper } => ProjectableSet::new_box(
                sets::decode_bounds(lower, f64::NEG_INFINITY),
                sets::decode_bounds(upper, f64::INFINITY),
            ),
        }
    }
}

impl BlockDescriptor {
    pub fn build(&self) -> Result<OperatorBlock> {
        match self {
            BlockDescriptor::Resolvent { operator } => Ok(OperatorBlock::Resolvent(operator.build()?)),
            BlockDescriptor::Split { forward, backward, set } => {
                let forward = forward.build()?;
                let backward = backward.build()?;
                let set = set.build()?;
                check_dim("split forward/backward", forward.dim(), backward.dim())?;
                check_dim("split set", forward.dim(), set.dim())?;
                Ok(OperatorBlock::Split { forward, backward, set })
            }
        }
    }
}

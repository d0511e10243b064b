//! The affine separator built from one round of block subproblems.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::product_space::{implied_dual_block, GammaMetric, LinearOpFamily, ProductPoint, Vector};

/// Output of one block subproblem: a point `(x, y)` of the enlarged graph
/// `y ∈ T^[ε](x)`, computed with step `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTriple {
    #[serde(with = "crate::serde_vec::vector")]
    pub x: Vector,
    #[serde(with = "crate::serde_vec::vector")]
    pub y: Vector,
    pub eps: f64,
    pub lambda: f64,
}

impl BlockTriple {
    pub fn new(x: Vector, y: Vector, eps: f64, lambda: f64) -> Result<Self> {
        check_dim("block triple", x.len(), y.len())?;
        if !(eps >= 0.0) {
            return Err(Error::InvalidConfig(format!("eps must be >= 0, got {eps}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self { x, y, eps, lambda })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// `φ(p) = Σᵢ ⟨Gᵢz − xᵢ, yᵢ − wᵢ⟩ − εᵢ`, stored as `⟨∇φ, p⟩_γ + c`.
#[derive(Debug, Clone)]
pub struct Separator {
    blocks: Vec<BlockTriple>,
    gradient: ProductPoint,
    grad_norm_sq: f64,
    constant: f64,
    metric: GammaMetric,
}

/// The residuals that vanish exactly at an extended solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `||Σ Gᵢ*yᵢ + yₙ||`
    pub dual: f64,
    /// `max_{i<n} ||xᵢ − Gᵢxₙ||`
    pub primal_max: f64,
    pub eps_sum: f64,
}

impl Residuals {
    pub fn within(&self, rho: f64) -> bool {
        self.dual <= rho && self.primal_max <= rho && self.eps_sum <= rho
    }
}

fn check_blocks(blocks: &[BlockTriple], family: &LinearOpFamily) -> Result<()> {
    check_dim("separator block count", family.n(), blocks.len())?;
    for (i, b) in blocks.iter().enumerate() {
        let dim = family.block_dim(i + 1)?;
        check_dim("separator block x", dim, b.x.len())?;
        check_dim("separator block y", dim, b.y.len())?;
    }
    Ok(())
}

/// Dual part `Σ Gᵢ*yᵢ + yₙ` and primal parts `xᵢ − Gᵢxₙ`.
fn raw_gradient(blocks: &[BlockTriple], family: &LinearOpFamily) -> (Vector, Vec<Vector>) {
    let n = family.n();
    let xn = &blocks[n - 1].x;
    let mut dual = blocks[n - 1].y.clone();
    let mut primal = Vec::with_capacity(n - 1);
    for (i, g) in family.maps().iter().enumerate() {
        dual += g.adjoint_apply(&blocks[i].y);
        primal.push(&blocks[i].x - g.apply(xn));
    }
    (dual, primal)
}

pub fn residuals(blocks: &[BlockTriple], family: &LinearOpFamily) -> Result<Residuals> {
    check_blocks(blocks, family)?;
    let (dual, primal) = raw_gradient(blocks, family);
    Ok(Residuals {
        dual: dual.norm(),
        primal_max: primal.iter().map(|v| v.norm()).fold(0.0, f64::max),
        eps_sum: blocks.iter().map(|b| b.eps).sum(),
    })
}

impl Separator {
    pub fn build(blocks: Vec<BlockTriple>, family: &LinearOpFamily, metric: GammaMetric) -> Result<Self> {
        check_blocks(&blocks, family)?;
        let (dual, primal) = raw_gradient(&blocks, family);
        let grad_norm_sq = dual.norm_squared() / metric.gamma() + primal.iter().map(|v| v.norm_squared()).sum::<f64>();
        let gradient = ProductPoint::new(dual / metric.gamma(), primal);
        let constant = -blocks.iter().map(|b| b.x.dot(&b.y) + b.eps).sum::<f64>();
        Ok(Self {
            blocks,
            gradient,
            grad_norm_sq,
            constant,
            metric,
        })
    }

    pub fn blocks(&self) -> &[BlockTriple] {
        &self.blocks
    }

    pub fn gradient(&self) -> &ProductPoint {
        &self.gradient
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.grad_norm_sq
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn metric(&self) -> GammaMetric {
        self.metric
    }

    pub fn eps_sum(&self) -> f64 {
        self.blocks.iter().map(|b| b.eps).sum()
    }

    pub fn eval(&self, p: &ProductPoint) -> Result<f64> {
        Ok(self.metric.inner(&self.gradient, p)? + self.constant)
    }

    pub(crate) fn eval_unchecked(&self, p: &ProductPoint) -> f64 {
        self.metric.inner_unchecked(&self.gradient, p) + self.constant
    }

    /// Direct evaluation of the defining sum; slower, used to cross-check [`Self::eval`].
    pub fn eval_blockwise(&self, p: &ProductPoint, family: &LinearOpFamily) -> Result<f64> {
        family.check_point(p)?;
        let wn = implied_dual_block(p, family);
        let n = family.n();
        let mut total = 0.0;
        for i in 1..=n {
            let b = &self.blocks[i - 1];
            let gz = family.apply(i, &p.z)?;
            let w = if i == n { &wn } else { &p.w[i - 1] };
            total += (gz - &b.x).dot(&(&b.y - w)) - b.eps;
        }
        Ok(total)
    }
}

//! Closed-form block steps for split blocks `T = F + B`: forward-backward
//! (cocoercive `F`) and Tseng's forward-backward-forward (Lipschitz `F`).
//!
//! Both are inner solvers with a fixed step; plain blocks fall back to the
//! exact resolvent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{resolvent, ForwardOracle, MonotoneOracle, OperatorBlock, ProjectableSet, Regularity};
use crate::product_space::Vector;
use crate::separator::BlockTriple;
use crate::solver::{exact_prox_inner, InnerRequest, InnerSolver, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    ForwardBackward,
    Tseng,
}

impl VariantKind {
    /// Whether a forward map with `regularity` is admissible for this variant.
    pub fn accepts(&self, regularity: Regularity) -> bool {
        match self {
            VariantKind::ForwardBackward => regularity == Regularity::Cocoercive,
            // Cocoercive with modulus L implies L-Lipschitz.
            VariantKind::Tseng => true,
        }
    }
}

/// `2σ²/L` for forward-backward, `σ/L` for Tseng.
pub fn variant_stepsize(kind: VariantKind, sigma: f64, l: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "variant steps need 0 < sigma < 1, got {sigma}"
        )));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidConfig(format!("modulus must be > 0, got {l}")));
    }
    Ok(match kind {
        VariantKind::ForwardBackward => 2.0 * sigma * sigma / l,
        VariantKind::Tseng => sigma / l,
    })
}

struct ForwardBackwardParts {
    z_bar: Vector,
    x: Vector,
    u: Vector,
}

// z̄ = P_C(target_z), x = (λB + I)^{-1}(target_z + λ·target_w − λF(z̄)).
fn forward_backward(
    f: &dyn ForwardOracle,
    b: &dyn MonotoneOracle,
    c: &ProjectableSet,
    lambda: f64,
    target_z: &Vector,
    target_w: &Vector,
) -> Result<ForwardBackwardParts> {
    let z_bar = c.project(target_z);
    let u = target_z + target_w * lambda;
    let x = resolvent(b, lambda, &(&u - f.eval(&z_bar) * lambda))?;
    Ok(ForwardBackwardParts { z_bar, x, u })
}

/// One forward-backward step; `ε = L||x − z̄||²/4` and the residual `e` is zero.
pub fn fb_block_step(
    f: &dyn ForwardOracle,
    b: &dyn MonotoneOracle,
    c: &ProjectableSet,
    lambda: f64,
    target_z: &Vector,
    target_w: &Vector,
) -> Result<BlockTriple> {
    let ForwardBackwardParts { z_bar, x, u } = forward_backward(f, b, c, lambda, target_z, target_w)?;
    let y = (&u - &x) / lambda;
    let eps = f.modulus() * (&x - &z_bar).norm_squared() / 4.0;
    BlockTriple::new(x, y, eps, lambda)
}

/// One forward-backward-forward step; `y ∈ (F + B)(x)` exactly and `ε = 0`.
pub fn tseng_block_step(
    f: &dyn ForwardOracle,
    b: &dyn MonotoneOracle,
    c: &ProjectableSet,
    lambda: f64,
    target_z: &Vector,
    target_w: &Vector,
) -> Result<BlockTriple> {
    let ForwardBackwardParts { z_bar, x, u } = forward_backward(f, b, c, lambda, target_z, target_w)?;
    let y = (&u - &x) / lambda + f.eval(&x) - f.eval(&z_bar);
    BlockTriple::new(x, y, 0.0, lambda)
}

/// Variant inner solver: split blocks take the variant step, plain blocks the
/// exact resolvent with the configured λ.
#[derive(Debug, Clone, Copy)]
pub struct VariantSolver {
    pub kind: VariantKind,
}

impl VariantSolver {
    pub fn forward_backward() -> Self {
        Self {
            kind: VariantKind::ForwardBackward,
        }
    }

    pub fn tseng() -> Self {
        Self {
            kind: VariantKind::Tseng,
        }
    }
}

impl InnerSolver for VariantSolver {
    fn name(&self) -> &'static str {
        match self.kind {
            VariantKind::ForwardBackward => "fb",
            VariantKind::Tseng => "tseng",
        }
    }

    fn step_size(&self, block: usize, op: &OperatorBlock, cfg: &SolverConfig) -> Result<f64> {
        match op {
            OperatorBlock::Resolvent(_) => Ok(cfg.lambda),
            OperatorBlock::Split { forward, .. } => {
                if !self.kind.accepts(forward.regularity()) {
                    return Err(Error::InvalidConfig(format!(
                        "block {block}: {:?} forward map is not admissible for {}",
                        forward.regularity(),
                        self.name()
                    )));
                }
                variant_stepsize(self.kind, cfg.sigma, forward.modulus())
            }
        }
    }

    fn solve(&self, req: &InnerRequest<'_>) -> Result<BlockTriple> {
        match req.op {
            OperatorBlock::Resolvent(_) => exact_prox_inner(req.op, req.lambda, req.target_z, req.target_w),
            OperatorBlock::Split { forward, backward, set } => {
                let step = match self.kind {
                    VariantKind::ForwardBackward => fb_block_step,
                    VariantKind::Tseng => tseng_block_step,
                };
                step(
                    forward.as_ref(),
                    backward.as_ref(),
                    set,
                    req.lambda,
                    req.target_z,
                    req.target_w,
                )
            }
        }
    }
}

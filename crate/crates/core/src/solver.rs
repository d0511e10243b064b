//! The inertial projective splitting loop.
//!
//! Each iteration extrapolates `p̃ᵏ`, asks an [`InnerSolver`] for one enlarged
//! graph point per block, builds the separator `φₖ` from them and moves to
//! `P_{Hₖ ∩ Wₖ}(p⁰)`. Projecting the anchor `p⁰` rather than the current iterate
//! is what makes the iterates converge strongly, to `P_{S_e}(p⁰)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::operators::{fenchel_young_gap, OperatorBlock};
use crate::product_space::{implied_dual_block, GammaMetric, LinearOpFamily, ProductPoint, Vector};
use crate::projection::{project_p0_onto_intersection, HalfSpace, ProjectionCase};
use crate::separator::{residuals, BlockTriple, Residuals, Separator};

/// The inclusion `0 ∈ Σᵢ Gᵢ* Tᵢ(Gᵢ z)` with `Gₙ = I`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub family: LinearOpFamily,
    pub blocks: Vec<OperatorBlock>,
}

impl Problem {
    pub fn new(family: LinearOpFamily, blocks: Vec<OperatorBlock>) -> Result<Self> {
        check_dim("operator blocks", family.n(), blocks.len())?;
        for (i, b) in blocks.iter().enumerate() {
            check_dim("operator block dimension", family.block_dim(i + 1)?, b.dim())?;
        }
        Ok(Self { family, blocks })
    }

    pub fn n(&self) -> usize {
        self.family.n()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaSchedule {
    Constant { alpha: f64 },
}

impl AlphaSchedule {
    pub fn at(&self, _k: usize) -> f64 {
        match *self {
            AlphaSchedule::Constant { alpha } => alpha,
        }
    }

    /// `ᾱ = sup αₖ`
    pub fn bound(&self) -> f64 {
        match *self {
            AlphaSchedule::Constant { alpha } => alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    Zero,
    /// `βₖ = β₀/(k+1)`
    Harmonic {
        beta0: f64,
    },
}

impl BetaSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            BetaSchedule::Zero => 0.0,
            BetaSchedule::Harmonic { beta0 } => beta0 / (k as f64 + 1.0),
        }
    }

    /// `β̄ = sup βₖ`
    pub fn bound(&self) -> f64 {
        match *self {
            BetaSchedule::Zero => 0.0,
            BetaSchedule::Harmonic { beta0 } => beta0,
        }
    }

    /// `s̄ ≥ Σ βₖ²`
    pub fn square_sum(&self) -> f64 {
        match *self {
            BetaSchedule::Zero => 0.0,
            BetaSchedule::Harmonic { beta0 } => beta0 * beta0 * std::f64::consts::PI.powi(2) / 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub sigma: f64,
    pub gamma: f64,
    pub alpha: AlphaSchedule,
    pub beta: BetaSchedule,
    /// Step used by inner solvers that do not impose their own.
    pub lambda: f64,
    pub rho: f64,
    pub max_iter: usize,
    /// Solve the blocks of one iteration on separate threads.
    #[serde(default)]
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            gamma: 1.0,
            alpha: AlphaSchedule::Constant { alpha: 0.3 },
            beta: BetaSchedule::Harmonic { beta0: 1.0 },
            lambda: 1.0,
            rho: 1e-8,
            max_iter: 20_000,
            parallel: false,
        }
    }
}

impl SolverConfig {
    /// No inertia at all.
    pub fn plain() -> Self {
        Self {
            alpha: AlphaSchedule::Constant { alpha: 0.0 },
            beta: BetaSchedule::Zero,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.sigma) {
            return bad(format!("sigma must lie in [0, 1), got {}", self.sigma));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        let alpha = self.alpha.bound();
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {alpha}"));
        }
        if let BetaSchedule::Harmonic { beta0 } = self.beta {
            if !(beta0 >= 0.0 && beta0.is_finite()) {
                return bad(format!("beta0 must be >= 0, got {beta0}"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.rho >= 0.0) {
            return bad(format!("rho must be >= 0, got {}", self.rho));
        }
        Ok(())
    }

    pub fn metric(&self) -> GammaMetric {
        GammaMetric::new(self.gamma).expect("validated gamma")
    }
}

/// Relative-error test on one block output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionCheck {
    /// `||e||² + 2λε`
    pub lhs: f64,
    /// `σ²(||target_z − x||² + ||λ(target_w − y)||²)`
    pub rhs: f64,
    pub ok: bool,
}

impl CriterionCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `e = λy + x − (target_z + λ·target_w)`
pub fn prox_residual(t: &BlockTriple, target_z: &Vector, target_w: &Vector) -> Vector {
    &t.y * t.lambda + &t.x - (target_z + target_w * t.lambda)
}

pub fn error_criterion(t: &BlockTriple, target_z: &Vector, target_w: &Vector, sigma: f64) -> CriterionCheck {
    let l = t.lambda;
    let e = prox_residual(t, target_z, target_w);
    let lhs = e.norm_squared() + 2.0 * l * t.eps;
    let rhs = sigma * sigma * ((target_z - &t.x).norm_squared() + ((target_w - &t.y) * l).norm_squared());
    let scale =
        1.0 + target_z.norm_squared() + (target_w * l).norm_squared() + t.x.norm_squared() + (&t.y * l).norm_squared();
    CriterionCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + 1e-12 * scale,
    }
}

/// `x = (λT+I)^{-1}(target_z + λ·target_w)`, `y = (target_z + λ·target_w − x)/λ`, `ε = 0`.
pub fn exact_prox_inner(
    block: &OperatorBlock,
    lambda: f64,
    target_z: &Vector,
    target_w: &Vector,
) -> Result<BlockTriple> {
    let u = target_z + target_w * lambda;
    let x = block.resolvent(lambda, &u)?;
    let y = (&u - &x) / lambda;
    BlockTriple::new(x, y, 0.0, lambda)
}

/// Everything an inner solver sees for one block.
#[derive(Debug, Clone, Copy)]
pub struct InnerRequest<'a> {
    pub k: usize,
    /// 1-based block index.
    pub block: usize,
    pub op: &'a OperatorBlock,
    pub lambda: f64,
    /// `Gᵢ z̃ᵏ`
    pub target_z: &'a Vector,
    /// `w̃ᵢᵏ`
    pub target_w: &'a Vector,
    pub sigma: f64,
}

/// Produces `(xᵢ, yᵢ, εᵢ)` with `yᵢ ∈ Tᵢ^[εᵢ](xᵢ)` meeting the relative-error criterion.
pub trait InnerSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Step for `block`; constant over iterations.
    fn step_size(&self, _block: usize, _op: &OperatorBlock, cfg: &SolverConfig) -> Result<f64> {
        Ok(cfg.lambda)
    }

    fn solve(&self, req: &InnerRequest<'_>) -> Result<BlockTriple>;
}

/// Exact resolvent steps.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactProx;

impl InnerSolver for ExactProx {
    fn name(&self) -> &'static str {
        "generic"
    }

    fn solve(&self, req: &InnerRequest<'_>) -> Result<BlockTriple> {
        exact_prox_inner(req.op, req.lambda, req.target_z, req.target_w)
    }
}

/// Exact step plus a seeded perturbation, halved until the criterion accepts it.
///
/// The resolvent input is shifted by `δ`, giving a genuine residual `e`. On
/// blocks with a computable conjugate the output `x` is also moved by `ξ` off
/// the graph and `ε` is set to the resulting Fenchel–Young gap, so `y ∈ ∂_ε f(x)`
/// holds with `ε > 0`.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedProx {
    pub seed: u64,
    /// Initial perturbation size relative to the criterion's budget.
    pub magnitude: f64,
    pub max_halvings: usize,
}

impl PerturbedProx {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            magnitude: 1.0,
            max_halvings: 40,
        }
    }

    fn rng(&self, k: usize, block: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((k as u64) << 16) | block as u64);
        rng
    }
}

fn unit_direction(dim: usize, rng: &mut impl Rng) -> Vector {
    let v = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

impl InnerSolver for PerturbedProx {
    fn name(&self) -> &'static str {
        "perturbed"
    }

    fn solve(&self, req: &InnerRequest<'_>) -> Result<BlockTriple> {
        let exact = exact_prox_inner(req.op, req.lambda, req.target_z, req.target_w)?;
        if req.sigma == 0.0 {
            return Ok(exact);
        }
        let budget = error_criterion(&exact, req.target_z, req.target_w, req.sigma)
            .rhs
            .sqrt();
        if budget == 0.0 {
            return Ok(exact);
        }
        let l = req.lambda;
        let dim = exact.dim();
        let mut rng = self.rng(req.k, req.block);
        let dir_in = unit_direction(dim, &mut rng);
        let dir_out = unit_direction(dim, &mut rng);
        let pair = req.op.fenchel_pair();
        let u = req.target_z + req.target_w * l;

        let mut t = self.magnitude * budget;
        for _ in 0..self.max_halvings {
            let shifted = &u + &dir_in * (0.5 * t);
            let x = req.op.resolvent(l, &shifted)?;
            let y = (&shifted - &x) / l;
            let (x, eps) = match pair {
                Some(pair) => {
                    let moved = &x + &dir_out * (0.5 * t);
                    let gap = fenchel_young_gap(pair, &moved, &y);
                    if gap.is_finite() {
                        (moved, gap.max(0.0))
                    } else {
                        (x, 0.0)
                    }
                }
                None => (x, 0.0),
            };
            let cand = BlockTriple::new(x, y, eps, l)?;
            if error_criterion(&cand, req.target_z, req.target_w, req.sigma).ok {
                return Ok(cand);
            }
            t *= 0.5;
        }
        Ok(exact)
    }
}

/// `(pᵏ⁻¹, pᵏ)` plus the fixed anchor `p⁰`.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: usize,
    pub p0: ProductPoint,
    pub p_prev: ProductPoint,
    pub p_curr: ProductPoint,
    pub trace: Vec<IterationRecord>,
    /// Block outputs of the most recent iteration.
    pub last_blocks: Vec<BlockTriple>,
}

impl SolverState {
    pub fn new(p0: ProductPoint) -> Self {
        Self {
            k: 0,
            p_prev: p0.clone(),
            p_curr: p0.clone(),
            p0,
            trace: Vec::new(),
            last_blocks: Vec::new(),
        }
    }
}

/// One row of the iteration trace. Fields after `proj_gap` are audit extras
/// not written to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `φₖ(p̃ᵏ)`
    pub phi_tilde: f64,
    /// `||∇φₖ||²_γ`
    pub grad_norm_sq: f64,
    pub res_dual: f64,
    pub res_primal_max: f64,
    pub eps_sum: f64,
    /// `||pᵏ − p⁰||_γ`
    pub dist_p0: f64,
    /// `||pᵏ⁺¹ − pᵏ||_γ`; NaN on the returning iteration.
    pub step_norm: f64,
    /// `||pᵏ⁺¹ − p̃ᵏ||_γ`; NaN on the returning iteration.
    pub proj_gap: f64,
    /// `rhs − lhs` of each block's relative-error test.
    #[serde(default)]
    pub block_slack: Vec<f64>,
    /// `||pᵏ⁺¹−p⁰||² − ||pᵏ−p⁰||² − ||pᵏ⁺¹−pᵏ||²`
    #[serde(default)]
    pub fejer_slack: Option<f64>,
    /// `Σᵢ ||Gᵢz̃ − xᵢ||² + ||w̃ᵢ − yᵢ||²`
    #[serde(default)]
    pub tilde_gap_sq: Option<f64>,
    #[serde(default)]
    pub case: Option<ProjectionCase>,
    /// `φₖ` at the reference point, when one was supplied.
    #[serde(default)]
    pub phi_reference: Option<f64>,
    /// `Wₖ`'s defining value at the reference point (≤ 0 inside).
    #[serde(default)]
    pub w_reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// `xₙᵏ`
    #[serde(with = "crate::serde_vec::vector")]
    pub z: Vector,
    /// `y₁ᵏ, …, yₙ₋₁ᵏ`
    #[serde(with = "crate::serde_vec::vectors")]
    pub w: Vec<Vector>,
    pub residuals: Residuals,
    pub k: usize,
}

impl Solution {
    pub fn as_point(&self) -> ProductPoint {
        ProductPoint::new(self.z.clone(), self.w.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Continue,
    Returned(Solution),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Returned,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: Status,
    /// Number of iterations performed.
    pub iterations: usize,
    pub solution: Option<Solution>,
    /// Final `pᵏ`.
    pub point: ProductPoint,
    /// Residuals of the last block outputs.
    pub residuals: Residuals,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub trace: Vec<IterationRecord>,
}

/// Algorithm driver bound to one problem, config and inner solver.
pub struct Solver<'a> {
    problem: &'a Problem,
    cfg: SolverConfig,
    inner: &'a dyn InnerSolver,
    metric: GammaMetric,
    lambdas: Vec<f64>,
    reference: Option<ProductPoint>,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a Problem, cfg: SolverConfig, inner: &'a dyn InnerSolver) -> Result<Self> {
        cfg.validate()?;
        let lambdas = problem
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| inner.step_size(i + 1, b, &cfg))
            .collect::<Result<Vec<_>>>()?;
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(format!("inner step size {l} is not positive")));
        }
        Ok(Self {
            metric: cfg.metric(),
            problem,
            cfg,
            inner,
            lambdas,
            reference: None,
        })
    }

    /// A known point of the extended-solution set; every iteration then records
    /// `φₖ` and the `Wₖ` value there.
    pub fn with_reference(mut self, p: ProductPoint) -> Result<Self> {
        self.problem.family.check_point(&p)?;
        self.reference = Some(p);
        Ok(self)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn metric(&self) -> GammaMetric {
        self.metric
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda_bounds(&self) -> (f64, f64) {
        let lo = self.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.lambdas.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    }

    pub fn init(&self, p0: ProductPoint) -> Result<SolverState> {
        self.problem.family.check_point(&p0)?;
        if !p0.is_finite() {
            return Err(Error::InvalidConfig("initial point is not finite".into()));
        }
        Ok(SolverState::new(p0))
    }

    fn solve_blocks(&self, k: usize, targets: &[(Vector, Vector)]) -> Result<Vec<BlockTriple>> {
        let one = |i: usize| -> Result<BlockTriple> {
            let (tz, tw) = &targets[i];
            let req = InnerRequest {
                k,
                block: i + 1,
                op: &self.problem.blocks[i],
                lambda: self.lambdas[i],
                target_z: tz,
                target_w: tw,
                sigma: self.cfg.sigma,
            };
            let t = self.inner.solve(&req)?;
            if t.dim() != tz.len() || !t.x.iter().chain(t.y.iter()).all(|v| v.is_finite()) {
                return Err(Error::Oracle(format!(
                    "inner solver returned a malformed triple for block {} at k = {k}",
                    i + 1
                )));
            }
            Ok(t)
        };
        let n = targets.len();
        if self.cfg.parallel && n > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..n).map(|i| s.spawn(move || one(i))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("block solve panicked"))
                    .collect()
            })
        } else {
            (0..n).map(one).collect()
        }
    }

    /// One pass of the algorithm.
    pub fn iterate(&self, state: &mut SolverState) -> Result<Outcome> {
        let k = state.k;
        let fam = &self.problem.family;
        let n = fam.n();
        let m = &self.metric;
        let (_, p_tilde, w_tilde_n) = extrapolate(state, self.cfg.alpha.at(k), self.cfg.beta.at(k), fam);

        let mut targets = Vec::with_capacity(n);
        for i in 1..n {
            targets.push((fam.apply(i, &p_tilde.z)?, p_tilde.w[i - 1].clone()));
        }
        targets.push((p_tilde.z.clone(), w_tilde_n));

        let blocks = self.solve_blocks(k, &targets)?;
        let mut block_slack = Vec::with_capacity(n);
        let mut tilde_gap_sq = 0.0;
        for (i, (t, (tz, tw))) in blocks.iter().zip(&targets).enumerate() {
            let check = error_criterion(t, tz, tw, self.cfg.sigma);
            if !check.ok {
                return Err(Error::ContractViolation {
                    k,
                    block: i + 1,
                    lhs: check.lhs,
                    rhs: check.rhs,
                });
            }
            block_slack.push(check.slack());
            tilde_gap_sq += (tz - &t.x).norm_squared() + (tw - &t.y).norm_squared();
        }

        let res = residuals(&blocks, fam)?;
        let sep = Separator::build(blocks.clone(), fam, *m)?;
        let phi_tilde = sep.eval_unchecked(&p_tilde);
        let dist_p0 = m.distance(&state.p_curr, &state.p0);
        let (phi_reference, w_reference) = match &self.reference {
            Some(r) => (
                Some(sep.eval_unchecked(r)),
                Some(HalfSpace::anchor(&state.p0, &state.p_curr, m).value(r, m)),
            ),
            None => (None, None),
        };
        let mut record = IterationRecord {
            k,
            phi_tilde,
            grad_norm_sq: sep.grad_norm_sq(),
            res_dual: res.dual,
            res_primal_max: res.primal_max,
            eps_sum: res.eps_sum,
            dist_p0,
            step_norm: f64::NAN,
            proj_gap: f64::NAN,
            block_slack,
            fejer_slack: None,
            tilde_gap_sq: Some(tilde_gap_sq),
            case: None,
            phi_reference,
            w_reference,
        };

        if res.within(self.cfg.rho) {
            state.trace.push(record);
            let solution = Solution {
                z: blocks[n - 1].x.clone(),
                w: blocks[..n - 1].iter().map(|b| b.y.clone()).collect(),
                residuals: res,
                k,
            };
            state.last_blocks = blocks;
            return Ok(Outcome::Returned(solution));
        }
        if sep.grad_norm_sq() == 0.0 {
            return Err(Error::DegenerateSeparator {
                k,
                eps_sum: res.eps_sum,
            });
        }

        let proj = project_p0_onto_intersection(&state.p0, &state.p_curr, &sep, m, k)?;
        let next = proj.point;
        let step = m.distance(&next, &state.p_curr);
        let new_dist = m.distance(&next, &state.p0);
        record.step_norm = step;
        record.proj_gap = m.distance(&next, &p_tilde);
        record.fejer_slack = Some(new_dist * new_dist - dist_p0 * dist_p0 - step * step);
        record.case = Some(proj.case);
        state.trace.push(record);
        state.last_blocks = blocks;
        state.p_prev = std::mem::replace(&mut state.p_curr, next);
        state.k += 1;
        Ok(Outcome::Continue)
    }

    /// Iterate from `p0` until the tolerance test fires or `max_iter` passes.
    pub fn solve(&self, p0: ProductPoint) -> Result<SolveReport> {
        let mut state = self.init(p0)?;
        let mut solution = None;
        while state.k < self.cfg.max_iter {
            if let Outcome::Returned(s) = self.iterate(&mut state)? {
                solution = Some(s);
                break;
            }
        }
        let residuals = if state.last_blocks.is_empty() {
            Residuals {
                dual: f64::NAN,
                primal_max: f64::NAN,
                eps_sum: f64::NAN,
            }
        } else {
            residuals(&state.last_blocks, &self.problem.family)?
        };
        let (lambda_min, lambda_max) = self.lambda_bounds();
        Ok(SolveReport {
            status: if solution.is_some() {
                Status::Returned
            } else {
                Status::MaxIter
            },
            iterations: state.trace.len(),
            solution,
            point: state.p_curr,
            residuals,
            lambda_min,
            lambda_max,
            trace: state.trace,
        })
    }
}

/// `p̂ = pᵏ + α(pᵏ − pᵏ⁻¹)`, `p̃ = p̂ + β(p̂ − p⁰)` and the implied `w̃ₙ`.
pub fn extrapolate(
    state: &SolverState,
    alpha: f64,
    beta: f64,
    family: &LinearOpFamily,
) -> (ProductPoint, ProductPoint, Vector) {
    let p_hat = state.p_curr.add_scaled(alpha, &state.p_curr.sub(&state.p_prev));
    let p_tilde = p_hat.add_scaled(beta, &p_hat.sub(&state.p0));
    let wn = implied_dual_block(&p_tilde, family);
    (p_hat, p_tilde, wn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{L1Norm, ZeroOperator};

    fn s(v: f64) -> Vector {
        Vector::from_vec(vec![v])
    }

    #[test]
    fn extrapolation_examples() {
        let fam = LinearOpFamily::identities(1, 0);
        let mut st = SolverState::new(ProductPoint::new(s(1.0), vec![]));
        let (hat, tilde, _) = extrapolate(&st, 0.7, 0.4, &fam);
        assert_eq!(hat.z, s(1.0));
        assert_eq!(tilde.z, s(1.0));

        st.p_prev = ProductPoint::new(s(0.0), vec![]);
        st.p_curr = ProductPoint::new(s(2.0), vec![]);
        let (hat, tilde, _) = extrapolate(&st, 0.5, 0.1, &fam);
        assert_eq!(hat.z, s(3.0));
        assert!((tilde.z[0] - 3.2).abs() < 1e-15);

        let (hat, tilde, _) = extrapolate(&st, 0.0, 0.0, &fam);
        assert_eq!(hat, st.p_curr);
        assert_eq!(tilde, st.p_curr);
    }

    #[test]
    fn criterion_examples() {
        let exact = BlockTriple::new(s(1.0), s(1.0), 0.0, 1.0).unwrap();
        assert!(error_criterion(&exact, &s(2.0), &s(0.0), 0.0).ok);

        let t = BlockTriple::new(s(1.0), s(1.2), 0.0, 1.0).unwrap();
        let c = error_criterion(&t, &s(2.0), &s(0.0), 0.5);
        assert!((c.lhs - 0.04).abs() < 1e-15);
        assert!((c.rhs - 0.25 * 2.44).abs() < 1e-15);
        assert!(c.ok);
        assert!(!error_criterion(&t, &s(2.0), &s(0.0), 0.12).ok);
        assert!(error_criterion(&t, &s(2.0), &s(0.0), 0.13).ok);

        let t = BlockTriple::new(s(1.0), s(1.2), 2.0, 1.0).unwrap();
        let c = error_criterion(&t, &s(2.0), &s(0.0), 0.999_999);
        assert!((c.lhs - 4.04).abs() < 1e-14);
        assert!(!c.ok);
    }

    #[test]
    fn exact_prox_examples() {
        let zero = OperatorBlock::plain(ZeroOperator::new(1));
        let t = exact_prox_inner(&zero, 0.5, &s(2.0), &s(3.0)).unwrap();
        assert_eq!(t.x, s(3.5));
        assert_eq!(t.y, s(0.0));

        let abs = OperatorBlock::plain(L1Norm::new(1, 1.0).unwrap());
        let t = exact_prox_inner(&abs, 1.0, &s(2.0), &s(0.0)).unwrap();
        assert_eq!((t.x[0], t.y[0], t.eps), (1.0, 1.0, 0.0));
        let c = error_criterion(&t, &s(2.0), &s(0.0), 0.0);
        assert_eq!(c.lhs, 0.0);
        assert!(c.ok);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = [
            SolverConfig {
                sigma: 1.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                gamma: 0.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                lambda: -1.0,
                ..SolverConfig::default()
            },
            SolverConfig {
                alpha: AlphaSchedule::Constant { alpha: -0.1 },
                ..SolverConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn harmonic_beta_is_square_summable() {
        let b = BetaSchedule::Harmonic { beta0: 1.0 };
        let partial: f64 = (0..100_000).map(|k| b.at(k).powi(2)).sum();
        assert!(partial <= b.square_sum());
        assert!((b.square_sum() - partial) < 1e-4);
    }

    #[test]
    fn perturbed_inner_respects_criterion() {
        let abs = OperatorBlock::plain(L1Norm::new(3, 0.5).unwrap());
        let inner = PerturbedProx::new(9);
        let tz = Vector::from_vec(vec![1.0, -0.2, 0.3]);
        let tw = Vector::from_vec(vec![0.1, 0.4, -0.5]);
        let mut saw_eps = false;
        for k in 0..50 {
            let req = InnerRequest {
                k,
                block: 1,
                op: &abs,
                lambda: 1.0,
                target_z: &tz,
                target_w: &tw,
                sigma: 0.9,
            };
            let t = inner.solve(&req).unwrap();
            assert!(error_criterion(&t, &tz, &tw, 0.9).ok);
            assert!(prox_residual(&t, &tz, &tw).norm() > 0.0);
            saw_eps |= t.eps > 0.0;
        }
        assert!(saw_eps);
    }
}

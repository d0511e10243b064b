use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::{
    soft_threshold, AffineForward, DenseMatrix, L1Norm, OperatorBlock, ProjectableSet, ZeroOperator,
};
use crate::product_space::{DenseMap, LinearMap, LinearOpFamily, Matrix, ProductPoint, Vector};
use crate::solver::Problem;

use super::{random_matrix, random_vector, spectral_norm, Oracle, ProblemData, ProblemInstance};

const REFERENCE_MAX_ITER: usize = 1_000_000;
const KKT_TOL: f64 = 1e-10;

/// `D z = (z₂ − z₁, …, z_d − z_{d−1})`
pub fn first_difference(dim: usize) -> Matrix {
    let mut d = Matrix::zeros(dim.saturating_sub(1), dim);
    for i in 0..dim.saturating_sub(1) {
        d[(i, i)] = -1.0;
        d[(i, i + 1)] = 1.0;
    }
    d
}

fn smooth_block(a: &Matrix, b: &Vector) -> Result<OperatorBlock> {
    OperatorBlock::split(
        AffineForward::quadratic_gradient(a, b),
        ZeroOperator::new(a.ncols()),
        ProjectableSet::Whole { dim: a.ncols() },
    )
}

fn gram_is_definite(a: &Matrix) -> bool {
    let eig = (a.transpose() * a).symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(0.0, f64::max);
    lo > 1e-10 * hi.max(1.0)
}

/// `min ½||Az − b||² + μ||z||₁` with random data; `T₁ = ∂(μ||·||₁)`, `T₂ = ∇½||A· − b||²`.
pub fn make_lasso(rows: usize, cols: usize, mu: f64, seed: u64) -> Result<ProblemInstance> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidConfig("lasso needs rows, cols >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_matrix(rows, cols, &mut rng);
    let b = random_vector(rows, &mut rng) * 2.0;
    lasso_from_parts(a, b, mu, seed)
}

pub fn lasso_from_parts(a: Matrix, b: Vector, mu: f64, seed: u64) -> Result<ProblemInstance> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidConfig(format!("mu must be > 0, got {mu}")));
    }
    let cols = a.ncols();
    let family = LinearOpFamily::identities(cols, 1);
    let blocks = vec![OperatorBlock::plain(L1Norm::new(cols, mu)?), smooth_block(&a, &b)?];
    let problem = Problem::new(family, blocks)?;
    let p0 = ProductPoint::zeros(&problem.family.dims());

    // A unique minimizer makes S_e a singleton.
    let oracle = if gram_is_definite(&a) {
        let z = lasso_reference(&a, &b, mu)?;
        let w = a.transpose() * (&b - &a * &z);
        Some(Oracle {
            projection: ProductPoint::new(z.clone(), vec![w.clone()]),
            z,
            w: vec![w],
        })
    } else {
        None
    };
    Ok(ProblemInstance {
        seed,
        data: ProblemData::Lasso {
            a: DenseMatrix::from(&a),
            b: b.iter().copied().collect(),
            mu,
        },
        problem,
        p0,
        oracle,
    })
}

/// `max_j` violation of `Aᵀ(b − Az) ∈ μ ∂||z||₁`.
pub(crate) fn lasso_kkt(a: &Matrix, b: &Vector, mu: f64, z: &Vector) -> f64 {
    let g = a.transpose() * (b - a * z);
    g.iter()
        .zip(z.iter())
        .map(|(&gj, &zj)| {
            if zj == 0.0 {
                (gj.abs() - mu).max(0.0)
            } else {
                (gj - mu * zj.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Proximal-gradient reference solution, polished by an exact solve on the
/// detected support.
fn lasso_reference(a: &Matrix, b: &Vector, mu: f64) -> Result<Vector> {
    let cols = a.ncols();
    let l = spectral_norm(a).powi(2);
    let atb = a.transpose() * b;
    let ata = a.transpose() * a;
    let mut z = Vector::zeros(cols);
    for _ in 0..REFERENCE_MAX_ITER {
        let next = soft_threshold(&(&z - (&ata * &z - &atb) / l), mu / l);
        let delta = (&next - &z).norm();
        z = next;
        if delta <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    let support: Vec<usize> = (0..cols).filter(|&j| z[j] != 0.0).collect();
    if !support.is_empty() {
        let s = support.len();
        let sub = Matrix::from_fn(s, s, |i, j| ata[(support[i], support[j])]);
        let rhs = Vector::from_fn(s, |i, _| atb[support[i]] - mu * z[support[i]].signum());
        if let Some(zs) = sub.lu().solve(&rhs) {
            let mut polished = Vector::zeros(cols);
            for (i, &j) in support.iter().enumerate() {
                polished[j] = zs[i];
            }
            let signs_kept = support.iter().all(|&j| polished[j].signum() == z[j].signum());
            if signs_kept && lasso_kkt(a, b, mu, &polished) <= lasso_kkt(a, b, mu, &z) {
                z = polished;
            }
        }
    }
    let kkt = lasso_kkt(a, b, mu, &z);
    if kkt > KKT_TOL {
        return Err(Error::Oracle(format!("lasso reference KKT residual {kkt:e}")));
    }
    Ok(z)
}

/// `min ½||Az − b||² + μ||Dz||₁` with `G₁ = D` the first-difference matrix.
pub fn make_fused(rows: usize, cols: usize, mu: f64, seed: u64) -> Result<ProblemInstance> {
    if cols < 2 || rows == 0 {
        return Err(Error::InvalidConfig(
            "fused problem needs cols >= 2 and rows >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_matrix(rows, cols, &mut rng);
    let b = random_vector(rows, &mut rng) * 2.0;
    fused_from_parts(a, b, mu, seed)
}

pub fn fused_from_parts(a: Matrix, b: Vector, mu: f64, seed: u64) -> Result<ProblemInstance> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidConfig(format!("mu must be > 0, got {mu}")));
    }
    let cols = a.ncols();
    let d = first_difference(cols);
    let d_map: Arc<dyn LinearMap> = Arc::new(DenseMap::with_norm(d.clone(), spectral_norm(&d)));
    let family = LinearOpFamily::new(cols, vec![d_map])?;
    let blocks = vec![OperatorBlock::plain(L1Norm::new(cols - 1, mu)?), smooth_block(&a, &b)?];
    let problem = Problem::new(family, blocks)?;
    let p0 = ProductPoint::zeros(&problem.family.dims());

    let oracle = if gram_is_definite(&a) {
        let (z, u) = fused_reference(&a, &b, &d, mu)?;
        Some(Oracle {
            projection: ProductPoint::new(z.clone(), vec![u.clone()]),
            z,
            w: vec![u],
        })
    } else {
        None
    };
    Ok(ProblemInstance {
        seed,
        data: ProblemData::Fused {
            a: DenseMatrix::from(&a),
            b: b.iter().copied().collect(),
            mu,
        },
        problem,
        p0,
        oracle,
    })
}

/// Violation of `u ∈ μ∂||·||₁(Dz)` and of `Dᵀu = Aᵀ(b − Az)`.
pub(crate) fn fused_kkt(a: &Matrix, b: &Vector, d: &Matrix, mu: f64, z: &Vector, u: &Vector) -> f64 {
    let stat = (d.transpose() * u - a.transpose() * (b - a * z)).amax();
    let dz = d * z;
    let scale = 1e-9 * (1.0 + dz.amax());
    let sub = dz
        .iter()
        .zip(u.iter())
        .map(|(&v, &uj)| {
            if v.abs() <= scale {
                (uj.abs() - mu).max(0.0)
            } else {
                (uj - mu * v.signum()).abs()
            }
        })
        .fold(0.0, f64::max);
    stat.max(sub)
}

/// Projected gradient on the dual box QP
/// `min_{||u||∞ ≤ μ} ½(c − Dᵀu)ᵀH⁻¹(c − Dᵀu)`, `H = AᵀA`, `c = Aᵀb`,
/// polished by an exact solve with the detected bound set fixed.
fn fused_reference(a: &Matrix, b: &Vector, d: &Matrix, mu: f64) -> Result<(Vector, Vector)> {
    let h = (a.transpose() * a)
        .cholesky()
        .ok_or_else(|| Error::Oracle("AᵀA is not positive definite".into()))?;
    let c = a.transpose() * b;
    let primal = |u: &Vector| h.solve(&(&c - d.transpose() * u));
    let q = d * h.solve(&d.transpose());
    let step = 1.0 / spectral_norm(&q);
    let m = d.nrows();
    let clip = |u: Vector| u.map(|v| v.clamp(-mu, mu));
    let mut u = Vector::zeros(m);
    for _ in 0..REFERENCE_MAX_ITER {
        let next = clip(&u + (d * primal(&u)) * step);
        let delta = (&next - &u).norm();
        u = next;
        if delta <= 1e-15 * (1.0 + u.norm()) {
            break;
        }
    }
    let mut z = primal(&u);

    let bound: Vec<usize> = (0..m).filter(|&j| u[j].abs() >= mu * (1.0 - 1e-9)).collect();
    let free: Vec<usize> = (0..m).filter(|j| !bound.contains(j)).collect();
    let mut polished = u.map(|v| {
        if v.abs() >= mu * (1.0 - 1e-9) {
            mu * v.signum()
        } else {
            v
        }
    });
    if !free.is_empty() {
        // (D H⁻¹ Dᵀ)_FF u_F = (D H⁻¹ (c − D_Bᵀ u_B))_F
        let mut ub = polished.clone();
        for &j in &free {
            ub[j] = 0.0;
        }
        let rhs_full = d * h.solve(&(&c - d.transpose() * &ub));
        let qff = Matrix::from_fn(free.len(), free.len(), |i, j| q[(free[i], free[j])]);
        let rhs = Vector::from_fn(free.len(), |i, _| rhs_full[free[i]]);
        if let Some(uf) = qff.lu().solve(&rhs) {
            for (i, &j) in free.iter().enumerate() {
                polished[j] = uf[i];
            }
        }
    }
    let zp = primal(&polished);
    if fused_kkt(a, b, d, mu, &zp, &polished) <= fused_kkt(a, b, d, mu, &z, &u) {
        u = polished;
        z = zp;
    }
    let kkt = fused_kkt(a, b, d, mu, &z, &u);
    if kkt > KKT_TOL {
        return Err(Error::Oracle(format!("fused reference KKT residual {kkt:e}")));
    }
    Ok((z, u))
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::{
    AffineForward, BoxNormalCone, DenseMatrix, OperatorBlock, ProjectableSet, Regularity, ZeroOperator,
};
use crate::product_space::{LinearOpFamily, Matrix, ProductPoint, Vector};
use crate::solver::Problem;

use super::{random_matrix, random_vector, spectral_norm, Oracle, ProblemData, ProblemInstance};

/// Face enumeration visits `3^dim` faces; beyond this no oracle is attached.
pub const SKEW_ORACLE_MAX_DIM: usize = 8;

const MAX_RESAMPLES: usize = 100;

/// `0 ∈ N_box(z) + Mz` with `M = B − Bᵀ`: monotone and Lipschitz but not
/// cocoercive, so it rules out forward–backward steps.
///
/// Instances whose solution is not unique (as detected by the oracle) are
/// redrawn from the same stream.
pub fn make_skew_saddle(dim: usize, seed: u64) -> Result<ProblemInstance> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESAMPLES {
        let b = random_matrix(dim, dim, &mut rng);
        let m = &b - b.transpose();
        let lower = Vector::from_fn(dim, |_, _| rng.gen_range(-1.5..0.5));
        let upper = &lower + Vector::from_fn(dim, |_, _| rng.gen_range(0.5..2.0));
        let p0 = ProductPoint::new(random_vector(dim, &mut rng), vec![random_vector(dim, &mut rng)]);
        let inst = skew_from_parts(m, lower, upper, p0, seed)?;
        if inst.oracle.is_some() || dim > SKEW_ORACLE_MAX_DIM {
            return Ok(inst);
        }
    }
    Err(Error::Oracle(format!(
        "no skew instance with a unique solution after {MAX_RESAMPLES} draws"
    )))
}

/// The oracle is attached only when face enumeration proves the solution unique.
pub fn skew_from_parts(
    m: Matrix,
    lower: Vector,
    upper: Vector,
    p0: ProductPoint,
    seed: u64,
) -> Result<ProblemInstance> {
    let dim = m.nrows();
    if (&m + m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::InvalidConfig("skew problem needs M = -Mᵀ".into()));
    }
    let family = LinearOpFamily::identities(dim, 1);
    let lipschitz = spectral_norm(&m).max(f64::MIN_POSITIVE);
    let blocks = vec![
        OperatorBlock::plain(BoxNormalCone::new(lower.clone(), upper.clone())?),
        OperatorBlock::split(
            AffineForward::new(m.clone(), Vector::zeros(dim), lipschitz, Regularity::Lipschitz)?,
            ZeroOperator::new(dim),
            ProjectableSet::Whole { dim },
        )?,
    ];
    let problem = Problem::new(family, blocks)?;
    problem.family.check_point(&p0)?;

    let oracle = if dim <= SKEW_ORACLE_MAX_DIM {
        unique_box_vi_solution(&m, &lower, &upper).map(|z| {
            let w = -(&m * &z);
            Oracle {
                projection: ProductPoint::new(z.clone(), vec![w.clone()]),
                z,
                w: vec![w],
            }
        })
    } else {
        None
    };
    let encode = |v: &Vector| v.iter().map(|&x| x.is_finite().then_some(x)).collect();
    Ok(ProblemInstance {
        seed,
        data: ProblemData::SkewSaddle {
            m: DenseMatrix::from(&m),
            lower: encode(&lower),
            upper: encode(&upper),
        },
        problem,
        p0,
        oracle,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Face {
    Lower,
    Upper,
    Free,
}

/// Enumerates every face of the box: coordinates at a bound are fixed, the
/// free ones solve `(Mz)_F = 0`. A face contributes a solution when it stays
/// inside the box and `−Mz` lies in the normal cone at the fixed coordinates.
///
/// Returns `None` unless exactly one solution exists. A consistent singular
/// face would carry a line of candidates, so it also counts as non-unique.
fn unique_box_vi_solution(m: &Matrix, lower: &Vector, upper: &Vector) -> Option<Vector> {
    let dim = m.nrows();
    let tol = 1e-10 * (1.0 + m.amax()) * (1.0 + lower.amax().min(1e12) + upper.amax().min(1e12));
    let mut found: Vec<Vector> = Vec::new();
    let mut faces = vec![Face::Lower; dim];
    let total = 3usize.pow(dim as u32);
    for code in 0..total {
        let mut c = code;
        for f in faces.iter_mut() {
            *f = match c % 3 {
                0 => Face::Lower,
                1 => Face::Upper,
                _ => Face::Free,
            };
            c /= 3;
        }
        let mut z = Vector::zeros(dim);
        let mut infinite = false;
        for j in 0..dim {
            match faces[j] {
                Face::Lower => z[j] = lower[j],
                Face::Upper => z[j] = upper[j],
                Face::Free => {}
            }
            if faces[j] != Face::Free && !z[j].is_finite() {
                infinite = true;
            }
        }
        if infinite {
            continue;
        }
        let free: Vec<usize> = (0..dim).filter(|&j| faces[j] == Face::Free).collect();
        if !free.is_empty() {
            let mff = Matrix::from_fn(free.len(), free.len(), |i, j| m[(free[i], free[j])]);
            let mz = m * &z;
            let rhs = Vector::from_fn(free.len(), |i, _| -mz[free[i]]);
            match mff.clone().lu().solve(&rhs) {
                Some(zf) if mff.clone().lu().determinant().abs() > 1e-12 => {
                    for (i, &j) in free.iter().enumerate() {
                        z[j] = zf[i];
                    }
                }
                _ => {
                    // Singular face: is the system consistent?
                    let pinv = mff.clone().pseudo_inverse(1e-12).ok()?;
                    let zf = &pinv * &rhs;
                    if (&mff * &zf - &rhs).amax() <= tol {
                        return None;
                    }
                    continue;
                }
            }
        }
        let mz = m * &z;
        let ok = (0..dim).all(|j| match faces[j] {
            Face::Free => z[j] >= lower[j] - tol && z[j] <= upper[j] + tol,
            Face::Lower => mz[j] >= -tol,
            Face::Upper => mz[j] <= tol,
        });
        if ok && !found.iter().any(|s| (s - &z).amax() <= 1e3 * tol) {
            found.push(z);
        }
    }
    if found.len() == 1 {
        found.pop()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::audit_forward;

    fn residual(m: &Matrix, lower: &Vector, upper: &Vector, z: &Vector) -> f64 {
        // natural map: ||z − P_box(z − Mz)||
        let step = z - m * z;
        let proj = Vector::from_fn(z.len(), |j, _| step[j].clamp(lower[j], upper[j]));
        (z - proj).amax()
    }

    #[test]
    fn rotation_on_whole_plane() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let inf = Vector::from_element(2, f64::INFINITY);
        let inst = skew_from_parts(m, -&inf, inf, ProductPoint::zeros(&[2, 2]), 0).unwrap();
        let o = inst.oracle.unwrap();
        assert_eq!(o.z, Vector::zeros(2));
        assert_eq!(o.w[0], Vector::zeros(2));
    }

    #[test]
    fn zero_matrix_is_not_unique() {
        let inst = skew_from_parts(
            Matrix::zeros(2, 2),
            Vector::from_element(2, -1.0),
            Vector::from_element(2, 1.0),
            ProductPoint::zeros(&[2, 2]),
            0,
        )
        .unwrap();
        assert!(inst.oracle.is_none());
    }

    #[test]
    fn generated_oracle_solves_the_vi() {
        for seed in 0..10 {
            let inst = make_skew_saddle(4, seed).unwrap();
            let ProblemData::SkewSaddle { m, lower, upper } = &inst.data else {
                unreachable!()
            };
            let m = m.to_matrix().unwrap();
            let lo = Vector::from_iterator(4, lower.iter().map(|x| x.unwrap()));
            let hi = Vector::from_iterator(4, upper.iter().map(|x| x.unwrap()));
            let o = inst.oracle.as_ref().unwrap();
            assert!(residual(&m, &lo, &hi, &o.z) < 1e-12, "seed {seed}");
            let r = inst.oracle_residuals().unwrap();
            assert!(r.dual < 1e-12 && r.primal_max < 1e-12);
        }
    }

    #[test]
    fn forward_map_is_not_cocoercive() {
        let inst = make_skew_saddle(4, 4).unwrap();
        let OperatorBlock::Split { forward, set, .. } = &inst.problem.blocks[1] else {
            unreachable!()
        };
        let audit = audit_forward(forward.as_ref(), set, 200, 1);
        assert!(audit.monotone() && audit.lipschitz());
        assert!(!audit.cocoercive());
    }

    #[test]
    fn rejects_nonskew() {
        let m = Matrix::identity(2, 2);
        let b = Vector::from_element(2, 1.0);
        assert!(skew_from_parts(m, -&b, b, ProductPoint::zeros(&[2, 2]), 0).is_err());
    }
}

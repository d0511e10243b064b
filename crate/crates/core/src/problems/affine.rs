use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::{AffineSubspaceNormalCone, DenseMatrix, OperatorBlock};
use crate::product_space::{LinearOpFamily, Matrix, ProductPoint, Vector};
use crate::solver::Problem;

use super::{null_basis, random_matrix, random_vector, range_basis, Oracle, ProblemData, ProblemInstance};

/// Two random affine subspaces of `ℝ^dim` sharing one constraint row, with a
/// random anchor `p⁰`.
///
/// The extended-solution set is `(V₁ ∩ V₂) × (range A₁ᵀ ∩ range A₂ᵀ)`, so its
/// projection is a pair of independent least-squares projections.
pub fn make_affine_feasibility(dim: usize, seed: u64) -> Result<ProblemInstance> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (2 * dim / 5).max(1);
    let a1 = random_matrix(rows, dim, &mut rng);
    let mut a2 = random_matrix(rows, dim, &mut rng);
    a2.set_row(0, &a1.row(0));
    let xb = random_vector(dim, &mut rng);
    let b1 = &a1 * &xb;
    let b2 = &a2 * &xb;
    let p0 = ProductPoint::new(random_vector(dim, &mut rng), vec![random_vector(dim, &mut rng)]);
    affine_from_parts(a1, b1, a2, b2, p0, seed)
}

pub fn affine_from_parts(
    a1: Matrix,
    b1: Vector,
    a2: Matrix,
    b2: Vector,
    p0: ProductPoint,
    seed: u64,
) -> Result<ProblemInstance> {
    let dim = a1.ncols();
    let family = LinearOpFamily::identities(dim, 1);
    let blocks = vec![
        OperatorBlock::plain(AffineSubspaceNormalCone::new(a1.clone(), b1.clone())?),
        OperatorBlock::plain(AffineSubspaceNormalCone::new(a2.clone(), b2.clone())?),
    ];
    let problem = Problem::new(family, blocks)?;
    problem.family.check_point(&p0)?;

    // z* = P_{V₁∩V₂}(z⁰) via the pseudo-inverse of the stacked system.
    let a = Matrix::from_rows(
        &a1.row_iter()
            .chain(a2.row_iter())
            .map(|r| r.into_owned())
            .collect::<Vec<_>>(),
    );
    let b = Vector::from_iterator(b1.len() + b2.len(), b1.iter().chain(b2.iter()).copied());
    let pinv = a
        .clone()
        .pseudo_inverse(1e-12 * (1.0 + a.norm()))
        .map_err(|e| Error::Oracle(e.to_string()))?;
    let z = &p0.z - &pinv * (&a * &p0.z - &b);
    if (&a * &z - &b).norm() > 1e-9 * (1.0 + b.norm()) {
        return Err(Error::InvalidConfig("affine subspaces do not intersect".into()));
    }

    // w* = P_R(w⁰) for R = range A₁ᵀ ∩ range A₂ᵀ.
    let q1 = range_basis(&a1.transpose(), 1e-12);
    let q2 = range_basis(&a2.transpose(), 1e-12);
    let mut k = Matrix::zeros(dim, q1.ncols() + q2.ncols());
    k.columns_mut(0, q1.ncols()).copy_from(&q1);
    k.columns_mut(q1.ncols(), q2.ncols()).copy_from(&(-&q2));
    let coeffs = null_basis(&k, 1e-12);
    let w = if coeffs.ncols() == 0 {
        Vector::zeros(dim)
    } else {
        let span = &q1 * coeffs.rows(0, q1.ncols());
        let q = range_basis(&span, 1e-10);
        &q * (q.transpose() * &p0.w[0])
    };

    let projection = ProductPoint::new(z.clone(), vec![w.clone()]);
    Ok(ProblemInstance {
        seed,
        data: ProblemData::AffineFeasibility {
            a1: DenseMatrix::from(&a1),
            b1: b1.iter().copied().collect(),
            a2: DenseMatrix::from(&a2),
            b2: b2.iter().copied().collect(),
        },
        problem,
        p0,
        oracle: Some(Oracle {
            z,
            w: vec![w],
            projection,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product_space::GammaMetric;
    use rand::Rng;

    #[test]
    fn coordinate_axes() {
        let a1 = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let a2 = Matrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let p0 = ProductPoint::new(
            Vector::from_vec(vec![3.0, -2.0]),
            vec![Vector::from_vec(vec![1.0, 1.0])],
        );
        let inst = affine_from_parts(a1, Vector::zeros(1), a2, Vector::zeros(1), p0, 0).unwrap();
        let o = inst.oracle.unwrap();
        assert!(o.z.norm() < 1e-15);
        // range A₁ᵀ ∩ range A₂ᵀ = {0}
        assert!(o.w[0].norm() < 1e-15);
    }

    #[test]
    fn oracle_triples_have_zero_residuals() {
        let inst = make_affine_feasibility(10, 7).unwrap();
        let r = inst.oracle_residuals().unwrap();
        assert!(r.dual < 1e-10 && r.primal_max < 1e-10 && r.eps_sum == 0.0);
        let o = inst.oracle.as_ref().unwrap();
        assert!(o.w[0].norm() > 1e-3, "shared row should give a nontrivial dual part");
    }

    #[test]
    fn oracle_projection_variational_inequality() {
        let inst = make_affine_feasibility(10, 3).unwrap();
        let o = inst.oracle.as_ref().unwrap();
        let ProblemData::AffineFeasibility { a1, a2, .. } = &inst.data else {
            unreachable!()
        };
        let (a1, a2) = (a1.to_matrix().unwrap(), a2.to_matrix().unwrap());
        let mut a = Matrix::zeros(a1.nrows() + a2.nrows(), 10);
        a.rows_mut(0, a1.nrows()).copy_from(&a1);
        a.rows_mut(a1.nrows(), a2.nrows()).copy_from(&a2);
        let nz = null_basis(&a, 1e-12);
        let rw = o.w[0].normalize();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = GammaMetric::new(2.5).unwrap();
        let d = inst.p0.sub(&o.projection);
        for _ in 0..50 {
            // Another point of S_e: same z-part plus a null-space move, dual part scaled.
            let coef = Vector::from_fn(nz.ncols(), |_, _| rng.gen_range(-3.0..3.0));
            let c = ProductPoint::new(&o.z + &nz * coef, vec![&rw * rng.gen_range(-3.0..3.0)]);
            let gap = m.inner(&d, &c.sub(&o.projection)).unwrap();
            assert!(gap <= 1e-8, "{gap:e}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = make_affine_feasibility(8, 11).unwrap();
        let b = make_affine_feasibility(8, 11).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(
            a.to_json().unwrap(),
            make_affine_feasibility(8, 12).unwrap().to_json().unwrap()
        );
    }
}

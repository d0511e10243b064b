use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ipsplit::diagnostics::{
    complexity_bounds, primal_residuals, read_trace_csv, residuals, write_trace_csv, CertificateParams,
};
use ipsplit::operators::{
    AffineForward, AffineOperator, BoxNormalCone, ForwardOracle, L1Norm, MonotoneOracle, ProjectableSet, Regularity,
    ZeroOperator,
};
use ipsplit::product_space::{
    implied_dual_block, DenseMap, GammaMetric, LinearMap, LinearOpFamily, Matrix, ProductPoint, Vector,
};
use ipsplit::projection::{project_onto_pair, project_p0_onto_intersection, HalfSpace};
use ipsplit::separator::{BlockTriple, Separator};
use ipsplit::solver::{error_criterion, IterationRecord, SolverConfig};
use ipsplit::variants::{fb_block_step, tseng_block_step, variant_stepsize, VariantKind};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vector(d: usize, r: &mut ChaCha8Rng, scale: f64) -> Vector {
    Vector::from_fn(d, |_, _| r.gen_range(-scale..scale))
}

fn matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0))
}

fn family(r: &mut ChaCha8Rng) -> LinearOpFamily {
    let dim0 = r.gen_range(1..=6);
    let maps = (0..r.gen_range(1..=3))
        .map(|_| {
            let rows = r.gen_range(1..=6);
            Arc::new(DenseMap::new(matrix(rows, dim0, r))) as Arc<dyn LinearMap>
        })
        .collect();
    LinearOpFamily::new(dim0, maps).unwrap()
}

fn metric(r: &mut ChaCha8Rng) -> GammaMetric {
    GammaMetric::new([0.25, 1.0, 4.0][r.gen_range(0..3)]).unwrap()
}

fn triples(fam: &LinearOpFamily, r: &mut ChaCha8Rng) -> Vec<BlockTriple> {
    (1..=fam.n())
        .map(|i| {
            let d = fam.block_dim(i).unwrap();
            BlockTriple::new(vector(d, r, 2.0), vector(d, r, 2.0), r.gen_range(0.0..1.0), 1.0).unwrap()
        })
        .collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gamma_inner_is_a_scalar_product(seed in any::<u64>(), s in -3.0f64..3.0, t in -3.0f64..3.0) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        let m = metric(&mut r);
        let dims = fam.dims();
        let (p, q, w) = (
            ProductPoint::random(&dims, &mut r),
            ProductPoint::random(&dims, &mut r),
            ProductPoint::random(&dims, &mut r),
        );
        let ip = |a: &ProductPoint, b: &ProductPoint| m.inner(a, b).unwrap();
        prop_assert!(close(ip(&p, &q), ip(&q, &p), 1e-12));
        let comb = p.scale(s).add_scaled(t, &q);
        prop_assert!(close(ip(&comb, &w), s * ip(&p, &w) + t * ip(&q, &w), 1e-12));
        prop_assert!(ip(&p, &p) > 0.0);
        prop_assert_eq!(ip(&p.scale(0.0), &p.scale(0.0)), 0.0);
    }

    #[test]
    fn family_adjoint_matches_apply(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        for i in 1..=fam.n() {
            let d = fam.block_dim(i).unwrap();
            let x = vector(fam.dim0(), &mut r, 1.0);
            let u = vector(d, &mut r, 1.0);
            let lhs = fam.apply(i, &x).unwrap().dot(&u);
            let rhs = x.dot(&fam.adjoint(i, &u).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + x.norm() * u.norm()));
        }
    }

    #[test]
    fn implied_dual_block_is_linear_and_cancels(seed in any::<u64>(), s in -3.0f64..3.0) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        let dims = fam.dims();
        let (p, q) = (ProductPoint::random(&dims, &mut r), ProductPoint::random(&dims, &mut r));
        let lhs = implied_dual_block(&p.add_scaled(s, &q), &fam);
        let rhs = implied_dual_block(&p, &fam) + implied_dual_block(&q, &fam) * s;
        prop_assert!((lhs - rhs).amax() < 1e-12);
        let mut total = implied_dual_block(&p, &fam);
        for i in 1..fam.n() {
            total += fam.adjoint(i, &p.w[i - 1]).unwrap();
        }
        prop_assert!(total.amax() < 1e-12);
    }

    #[test]
    fn l1_resolvent_lands_in_the_graph(seed in any::<u64>(), mu in 0.01f64..2.0, lambda in 0.01f64..5.0) {
        let mut r = rng(seed);
        let d = r.gen_range(1..=8);
        let u = vector(d, &mut r, 3.0);
        let op = L1Norm::new(d, mu).unwrap();
        let x = op.resolvent(lambda, &u).unwrap();
        let y = (&u - &x) / lambda;
        for j in 0..d {
            if x[j] == 0.0 {
                prop_assert!(y[j].abs() <= mu * (1.0 + 1e-12));
            } else {
                prop_assert!((y[j] - mu * x[j].signum()).abs() <= 1e-12 * (1.0 + mu));
            }
        }
    }

    #[test]
    fn box_resolvent_lands_in_the_graph(seed in any::<u64>(), lambda in 0.01f64..5.0) {
        let mut r = rng(seed);
        let d = r.gen_range(1..=8);
        let lo = vector(d, &mut r, 1.0);
        let hi = &lo + Vector::from_fn(d, |_, _| r.gen_range(0.0..2.0));
        let u = vector(d, &mut r, 3.0);
        let op = BoxNormalCone::new(lo.clone(), hi.clone()).unwrap();
        let x = op.resolvent(lambda, &u).unwrap();
        let y = (&u - &x) / lambda;
        for j in 0..d {
            prop_assert!(x[j] >= lo[j] && x[j] <= hi[j]);
            if x[j] > lo[j] && x[j] < hi[j] {
                prop_assert!(y[j].abs() <= 1e-12);
            } else if x[j] == hi[j] && x[j] > lo[j] {
                prop_assert!(y[j] >= -1e-12);
            } else if x[j] == lo[j] && x[j] < hi[j] {
                prop_assert!(y[j] <= 1e-12);
            }
        }
    }

    #[test]
    fn affine_resolvent_lands_in_the_graph(seed in any::<u64>(), lambda in 0.01f64..5.0) {
        let mut r = rng(seed);
        let d = r.gen_range(1..=6);
        let b = matrix(d, d, &mut r);
        let c = matrix(d, d, &mut r);
        // PSD part plus skew part.
        let m = &c * c.transpose() + (&b - b.transpose());
        let q = vector(d, &mut r, 1.0);
        let op = AffineOperator::new(m.clone(), q.clone()).unwrap();
        let u = vector(d, &mut r, 3.0);
        let x = op.resolvent(lambda, &u).unwrap();
        let y = (&u - &x) / lambda;
        prop_assert!((y - (&m * &x + &q)).amax() <= 1e-10 * (1.0 + m.amax() * x.amax()));
    }

    #[test]
    fn resolvent_graph_samples_are_monotone(seed in any::<u64>(), lambda in 0.05f64..5.0) {
        let mut r = rng(seed);
        let d = r.gen_range(1..=6);
        let lo = vector(d, &mut r, 1.0);
        let hi = &lo + Vector::from_element(d, 1.0);
        let b = matrix(d, d, &mut r);
        let ops: Vec<Box<dyn MonotoneOracle>> = vec![
            Box::new(L1Norm::new(d, 0.7).unwrap()),
            Box::new(BoxNormalCone::new(lo, hi).unwrap()),
            Box::new(AffineOperator::new(&b - b.transpose(), Vector::zeros(d)).unwrap()),
            Box::new(ZeroOperator::new(d)),
        ];
        for op in &ops {
            let (u1, u2) = (vector(d, &mut r, 3.0), vector(d, &mut r, 3.0));
            let (x1, x2) = (op.resolvent(lambda, &u1).unwrap(), op.resolvent(lambda, &u2).unwrap());
            let (y1, y2) = ((&u1 - &x1) / lambda, (&u2 - &x2) / lambda);
            prop_assert!((&x1 - &x2).dot(&(&y1 - &y2)) >= -1e-10, "{:?}", op);
        }
    }

    #[test]
    fn quadratic_gradient_is_cocoercive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (rows, cols) = (r.gen_range(1..=8), r.gen_range(1..=6));
        let a = matrix(rows, cols, &mut r);
        let f = AffineForward::quadratic_gradient(&a, &vector(rows, &mut r, 1.0));
        let (x, y) = (vector(cols, &mut r, 3.0), vector(cols, &mut r, 3.0));
        let df = f.eval(&x) - f.eval(&y);
        prop_assert!((&x - &y).dot(&df) >= df.norm_squared() / f.modulus() - 1e-10);
    }

    #[test]
    fn separator_is_affine_with_its_gradient(seed in any::<u64>(), t in -2.0f64..3.0) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        let m = metric(&mut r);
        let sep = Separator::build(triples(&fam, &mut r), &fam, m).unwrap();
        let dims = fam.dims();
        let (p, q) = (ProductPoint::random(&dims, &mut r), ProductPoint::random(&dims, &mut r));
        let phi = |x: &ProductPoint| sep.eval(x).unwrap();
        let mix = p.scale(t).add_scaled(1.0 - t, &q);
        prop_assert!(close(phi(&mix), t * phi(&p) + (1.0 - t) * phi(&q), 1e-10));
        let diff = m.inner(sep.gradient(), &p.sub(&q)).unwrap();
        prop_assert!(close(phi(&p) - phi(&q), diff, 1e-10));
        prop_assert!(close(phi(&p), sep.eval_blockwise(&p, &fam).unwrap(), 1e-10));
    }

    #[test]
    fn separator_gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        let m = metric(&mut r);
        let sep = Separator::build(triples(&fam, &mut r), &fam, m).unwrap();
        let dims = fam.dims();
        let p = ProductPoint::random(&dims, &mut r);
        let dir = ProductPoint::random(&dims, &mut r);
        let h = 1e-6;
        // Differences of the defining sum, not of the cached affine form.
        let f = |x: &ProductPoint| sep.eval_blockwise(x, &fam).unwrap();
        let fd = (f(&p.add_scaled(h, &dir)) - f(&p.add_scaled(-h, &dir))) / (2.0 * h);
        let exact = m.inner(sep.gradient(), &dir).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()));
    }

    #[test]
    fn gradient_norm_splits_into_residuals(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        let m = metric(&mut r);
        let blocks = triples(&fam, &mut r);
        let res = residuals(&blocks, &fam).unwrap();
        let primal = primal_residuals(&blocks, &fam).unwrap();
        let sep = Separator::build(blocks, &fam, m).unwrap();
        let split = res.dual.powi(2) / m.gamma() + primal.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(close(sep.grad_norm_sq(), split, 1e-12));
    }

    #[test]
    fn zero_gradient_iff_consistent_triples(seed in any::<u64>(), perturb in any::<bool>()) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        let n = fam.n();
        let xn = vector(fam.dim0(), &mut r, 1.0);
        let ws: Vec<Vector> = (1..n).map(|i| vector(fam.block_dim(i).unwrap(), &mut r, 1.0)).collect();
        let p = ProductPoint::new(xn.clone(), ws.clone());
        let yn = implied_dual_block(&p, &fam);
        let mut blocks: Vec<BlockTriple> = (1..n)
            .map(|i| BlockTriple::new(fam.apply(i, &xn).unwrap(), ws[i - 1].clone(), 0.0, 1.0).unwrap())
            .collect();
        blocks.push(BlockTriple::new(xn, yn, 0.0, 1.0).unwrap());
        if perturb {
            blocks[0].x[0] += 0.5;
        }
        let sep = Separator::build(blocks, &fam, GammaMetric::default()).unwrap();
        prop_assert_eq!(sep.grad_norm_sq() <= 1e-24, !perturb);
    }

    #[test]
    fn projection_is_feasible_and_variational(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        let m = metric(&mut r);
        let sep = Separator::build(triples(&fam, &mut r), &fam, m).unwrap();
        let dims = fam.dims();
        let p0 = ProductPoint::random(&dims, &mut r).scale(3.0);
        let pk = ProductPoint::random(&dims, &mut r);
        let proj = project_p0_onto_intersection(&p0, &pk, &sep, &m, 0).unwrap();
        let h = HalfSpace::from_separator(&sep);
        let w = HalfSpace::anchor(&p0, &pk, &m);
        let tol = |hs: &HalfSpace| 1e-9 * (1.0 + m.norm(&hs.normal)) * (1.0 + m.norm(&p0));
        prop_assert!(h.value(&proj.point, &m) <= tol(&h));
        prop_assert!(w.value(&proj.point, &m) <= tol(&w));
        let d = p0.sub(&proj.point);
        for _ in 0..10 {
            // rejection-sampled feasible points
            let c = pk.add_scaled(1.0, &ProductPoint::random(&dims, &mut r));
            if h.value(&c, &m) <= 0.0 && w.value(&c, &m) <= 0.0 {
                let g = m.inner(&d, &c.sub(&proj.point)).unwrap();
                prop_assert!(g <= 1e-8 * (1.0 + m.norm_sq(&d) + m.norm_sq(&c)));
            }
        }
    }

    #[test]
    fn parallel_normals_use_a_single_constraint(seed in any::<u64>(), a in 0.1f64..2.0, b in -1.0f64..1.0) {
        let mut r = rng(seed);
        let dims = [r.gen_range(1..=5), r.gen_range(1..=5)];
        let m = metric(&mut r);
        let n = ProductPoint::random(&dims, &mut r);
        let p = ProductPoint::random(&dims, &mut r).scale(3.0);
        let h1 = HalfSpace::new(n.clone(), b);
        let h2 = HalfSpace::new(n.scale(a), a * b + 0.5);
        let proj = project_onto_pair(&p, &h1, &h2, &m, None).unwrap();
        prop_assert!(h1.value(&proj.point, &m) <= 1e-9 * (1.0 + m.norm(&n)) * (1.0 + m.norm(&p)));
        prop_assert!(h2.value(&proj.point, &m) <= 1e-9 * (1.0 + m.norm(&n)) * (1.0 + m.norm(&p)));
        // The tighter constraint alone decides the result.
        let tight = if b >= (a * b + 0.5) / a { &h1 } else { &h2 };
        let v = tight.value(&p, &m);
        let expected = if v <= 0.0 {
            p.clone()
        } else {
            p.add_scaled(-v / m.norm_sq(&tight.normal), &tight.normal)
        };
        prop_assert!(m.distance(&proj.point, &expected) <= 1e-9 * (1.0 + m.norm(&p)));
    }

    #[test]
    fn variant_steps_meet_the_error_criterion(seed in any::<u64>(), sigma in 0.01f64..0.99) {
        let mut r = rng(seed);
        let d = r.gen_range(1..=6);
        let a = matrix(r.gen_range(1..=8), d, &mut r);
        let fb = AffineForward::quadratic_gradient(&a, &vector(a.nrows(), &mut r, 1.0));
        let bm = matrix(d, d, &mut r);
        let skew = bm.clone() - bm.transpose();
        let norm = skew.clone().singular_values().max().max(1e-3);
        let ts = AffineForward::new(skew, Vector::zeros(d), norm, Regularity::Lipschitz).unwrap();
        let lo = vector(d, &mut r, 1.0);
        let hi = &lo + Vector::from_element(d, 1.5);
        let set = ProjectableSet::new_box(lo.clone(), hi.clone()).unwrap();
        let b = BoxNormalCone::new(lo, hi).unwrap();
        let (tz, tw) = (vector(d, &mut r, 3.0), vector(d, &mut r, 3.0));

        let lambda = variant_stepsize(VariantKind::ForwardBackward, sigma, fb.modulus()).unwrap();
        let t = fb_block_step(&fb, &b, &set, lambda, &tz, &tw).unwrap();
        let check = error_criterion(&t, &tz, &tw, sigma);
        prop_assert!(check.ok, "fb {:?}", check);
        prop_assert!(set.contains(&t.x, 1e-12));
        prop_assert!(2.0 * lambda * t.eps <= sigma * sigma * (&tz - &t.x).norm_squared() * (1.0 + 1e-12) + 1e-15);

        let lambda = variant_stepsize(VariantKind::Tseng, sigma, ts.modulus()).unwrap();
        let t = tseng_block_step(&ts, &b, &set, lambda, &tz, &tw).unwrap();
        let check = error_criterion(&t, &tz, &tw, sigma);
        prop_assert!(check.ok, "tseng {:?}", check);
        prop_assert!(set.contains(&t.x, 1e-12));
        prop_assert_eq!(t.eps, 0.0);
        // y − F(x) ∈ N_box(x)
        let v = &t.y - ts.eval(&t.x);
        prop_assert_eq!(b.contains(&t.x, &v, 1e-9), Some(true));
    }

    #[test]
    fn certificate_bounds_decay_and_scale(seed in any::<u64>(), d0 in 0.01f64..10.0, scale in 0.1f64..10.0) {
        let mut r = rng(seed);
        let fam = family(&mut r);
        let cfg = SolverConfig { sigma: r.gen_range(0.0..0.95), ..SolverConfig::default() };
        let params = CertificateParams::new(&fam, &cfg, r.gen_range(0.1..1.0), r.gen_range(1.0..3.0));
        let (c1, c2) = (params.certificate(d0), params.certificate(d0 * scale));
        let k = r.gen_range(0..10_000);
        let (b, next, scaled) = (complexity_bounds(k, &c1), complexity_bounds(k + 1, &c1), complexity_bounds(k, &c2));
        prop_assert!(next.dual <= b.dual && next.primal <= b.primal && next.eps <= b.eps);
        prop_assert!(close(scaled.dual, scale * b.dual, 1e-12));
        prop_assert!(close(scaled.primal, scale * b.primal, 1e-12));
        prop_assert!(close(scaled.eps, scale * scale * b.eps, 1e-12));
    }

    #[test]
    fn trace_csv_round_trips(seed in any::<u64>(), rows in 1usize..20) {
        let mut r = rng(seed);
        let mut val = || r.gen_range(-1e3f64..1e3).powi(3);
        let trace: Vec<IterationRecord> = (0..rows)
            .map(|k| IterationRecord {
                k,
                phi_tilde: val(),
                grad_norm_sq: val().abs(),
                res_dual: val().abs(),
                res_primal_max: val().abs(),
                eps_sum: val().abs(),
                dist_p0: val().abs(),
                step_norm: if k + 1 == rows { f64::NAN } else { val().abs() },
                proj_gap: if k + 1 == rows { f64::NAN } else { val().abs() },
                block_slack: Vec::new(),
                fejer_slack: None,
                tilde_gap_sq: None,
                case: None,
                phi_reference: None,
                w_reference: None,
            })
            .collect();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        let back = read_trace_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), trace.len());
        for (a, b) in back.iter().zip(&trace) {
            prop_assert_eq!(a.k, b.k);
            prop_assert_eq!(a.phi_tilde, b.phi_tilde);
            prop_assert_eq!(a.eps_sum, b.eps_sum);
            prop_assert_eq!(a.step_norm.is_nan(), b.step_norm.is_nan());
        }
        let mut again = Vec::new();
        write_trace_csv(&mut again, &back).unwrap();
        prop_assert_eq!(again, buf);
    }
}

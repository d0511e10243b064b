//! Invariant suite over the four generated problem families.

use ipsplit::diagnostics::{audit_trace, AuditOptions, CertificateParams};
use ipsplit::problems::{make_affine_feasibility, make_fused, make_lasso, make_skew_saddle, ProblemInstance};
use ipsplit::solver::{ExactProx, InnerSolver, IterationRecord, PerturbedProx, Solver, SolverConfig};
use ipsplit::variants::VariantSolver;

const TOL: f64 = 1e-9;

struct Case {
    label: String,
    inner: Box<dyn InnerSolver>,
    sigma: f64,
    skip_eps: bool,
}

fn cases(inst: &ProblemInstance, seed: u64) -> Vec<Case> {
    let case = |name: &str, inner: Box<dyn InnerSolver>, sigma, skip_eps| Case {
        label: format!("{}/{name}", inst.name()),
        inner,
        sigma,
        skip_eps,
    };
    let mut out = vec![
        case("generic", Box::new(ExactProx), 0.0, false),
        case("inexact", Box::new(PerturbedProx::new(seed)), 0.9, false),
    ];
    if matches!(inst.name(), "lasso" | "fused") {
        out.push(case("fb", Box::new(VariantSolver::forward_backward()), 0.5, false));
    }
    if inst.name() != "affine" {
        out.push(case("tseng", Box::new(VariantSolver::tseng()), 0.5, true));
    }
    out
}

fn row_failures(rows: &[IterationRecord], params: &CertificateParams, scale: f64) -> Vec<String> {
    let (factor, c) = (params.phi_lower_factor(), params.c());
    let mut out = Vec::new();
    for r in rows {
        if !(r.phi_reference.unwrap_or(f64::NAN) <= TOL) {
            out.push(format!("k = {}: solution outside H ({:?})", r.k, r.phi_reference));
        }
        if !(r.w_reference.unwrap_or(f64::NAN) <= TOL * scale) {
            out.push(format!("k = {}: solution outside W ({:?})", r.k, r.w_reference));
        }
        let lower = factor * r.tilde_gap_sq.unwrap_or(f64::NAN);
        if !(r.phi_tilde >= lower - TOL) {
            out.push(format!("k = {}: φ(p̃) = {:e} below {lower:e}", r.k, r.phi_tilde));
        }
        if c * r.phi_tilde < r.grad_norm_sq - TOL * (1.0 + r.grad_norm_sq) {
            out.push(format!("k = {}: c·φ(p̃) below ||∇φ||²", r.k));
        }
    }
    out
}

fn check(inst: &ProblemInstance, case: &Case, max_iter: usize) -> Result<usize, String> {
    let oracle = inst.oracle.as_ref().ok_or("no oracle solution")?;
    let cfg = SolverConfig {
        sigma: case.sigma,
        max_iter,
        ..SolverConfig::default()
    };
    let solver = Solver::new(&inst.problem, cfg.clone(), case.inner.as_ref())
        .and_then(|s| s.with_reference(oracle.point()))
        .map_err(|e| e.to_string())?;
    let metric = solver.metric();
    let (lo, hi) = solver.lambda_bounds();
    let report = solver.solve(inst.p0.clone()).map_err(|e| e.to_string())?;
    let params = CertificateParams::new(&inst.problem.family, &cfg, lo, hi);
    let opts = AuditOptions {
        certificate: Some(params.certificate(oracle.d0(&inst.p0, &metric))),
        skip_eps: case.skip_eps,
    };
    let audit = audit_trace(&report.trace, &opts).map_err(|e| e.to_string())?;
    let mut failures: Vec<String> = audit
        .flags
        .iter()
        .map(|f| format!("k = {}: {:?} slack {:e}", f.k, f.kind, f.slack))
        .collect();
    failures.extend(row_failures(&report.trace, &params, 1.0 + metric.norm_sq(&inst.p0)));
    match failures.first() {
        None => Ok(report.iterations),
        Some(first) => Err(format!("{} failure(s), first: {first}", failures.len())),
    }
}

/// Prints one line per run; true when every run passed.
pub fn run(seed: u64, max_iter: usize) -> bool {
    let instances = [
        make_affine_feasibility(10, seed),
        make_lasso(8, 4, 0.5, seed),
        make_fused(10, 6, 0.5, seed),
        make_skew_saddle(4, seed),
    ];
    let mut all_ok = true;
    for inst in instances {
        let inst = match inst {
            Ok(i) => i,
            Err(e) => {
                println!("FAIL instance: {e}");
                all_ok = false;
                continue;
            }
        };
        for case in cases(&inst, seed) {
            match check(&inst, &case, max_iter) {
                Ok(iters) => println!("ok   {:<16} {iters} iterations", case.label),
                Err(msg) => {
                    println!("FAIL {:<16} {msg}", case.label);
                    all_ok = false;
                }
            }
        }
    }
    all_ok
}

//! Residuals, the explicit complexity constants, trace audits and trace I/O.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::product_space::LinearOpFamily;
use crate::separator::BlockTriple;
use crate::solver::{IterationRecord, SolverConfig};

pub use crate::separator::{residuals, Residuals};

/// `||xᵢ − Gᵢxₙ||` for `i < n`.
pub fn primal_residuals(blocks: &[BlockTriple], family: &LinearOpFamily) -> Result<Vec<f64>> {
    let n = family.n();
    if blocks.len() != n {
        return Err(Error::DimensionMismatch {
            context: "residual blocks",
            expected: n,
            found: blocks.len(),
        });
    }
    (1..n)
        .map(|i| Ok((&blocks[i - 1].x - family.apply(i, &blocks[n - 1].x)?).norm()))
        .collect()
}

/// `c = n·max||Gᵢ||²·4max{1,1/γ} / ((1−σ²)·min{λ̲, 1/λ̄})`
pub fn constant_c(n: usize, max_g_norm_sq: f64, gamma: f64, sigma: f64, lambda_min: f64, lambda_max: f64) -> f64 {
    n as f64 * max_g_norm_sq * 4.0 * (1.0f64).max(1.0 / gamma)
        / ((1.0 - sigma * sigma) * lambda_min.min(1.0 / lambda_max))
}

/// `Ω = (1+ᾱ)[(1+β̄)[1+ᾱ(1+β̄)] + s̄]`
pub fn omega(alpha_bar: f64, beta_bar: f64, s_bar: f64) -> f64 {
    (1.0 + alpha_bar) * ((1.0 + beta_bar) * (1.0 + alpha_bar * (1.0 + beta_bar)) + s_bar)
}

/// Everything needed to evaluate the iteration-complexity bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub n: usize,
    /// `max_i ||Gᵢ||²`, including `Gₙ = I`.
    pub max_g_norm_sq: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub alpha_bar: f64,
    pub beta_bar: f64,
    pub s_bar: f64,
}

impl CertificateParams {
    pub fn new(family: &LinearOpFamily, cfg: &SolverConfig, lambda_min: f64, lambda_max: f64) -> Self {
        Self {
            n: family.n(),
            max_g_norm_sq: family.max_norm_sq(),
            gamma: cfg.gamma,
            sigma: cfg.sigma,
            lambda_min,
            lambda_max,
            alpha_bar: cfg.alpha.bound(),
            beta_bar: cfg.beta.bound(),
            s_bar: cfg.beta.square_sum(),
        }
    }

    pub fn c(&self) -> f64 {
        constant_c(
            self.n,
            self.max_g_norm_sq,
            self.gamma,
            self.sigma,
            self.lambda_min,
            self.lambda_max,
        )
    }

    pub fn omega(&self) -> f64 {
        omega(self.alpha_bar, self.beta_bar, self.s_bar)
    }

    /// `(1−σ²)·min{λ̲, 1/λ̄}/2`, the factor in the lower bound on `φₖ(p̃ᵏ)`.
    pub fn phi_lower_factor(&self) -> f64 {
        (1.0 - self.sigma * self.sigma) * self.lambda_min.min(1.0 / self.lambda_max) / 2.0
    }

    pub fn certificate(&self, d0: f64) -> Certificate {
        Certificate {
            params: *self,
            c: self.c(),
            omega: self.omega(),
            d0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub params: CertificateParams,
    pub c: f64,
    pub omega: f64,
    /// Distance from `p⁰` to the extended-solution set, or a user-supplied upper bound.
    pub d0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub dual: f64,
    pub primal: f64,
    pub eps: f64,
}

impl Certificate {
    /// Bounds that some `ℓ ≤ k` must meet.
    pub fn bounds(&self, k: usize) -> Bounds {
        complexity_bounds(k, self)
    }
}

pub fn complexity_bounds(k: usize, cert: &Certificate) -> Bounds {
    let p = &cert.params;
    let kk = k as f64 + 1.0;
    let mx = (1.0f64).max(1.0 / p.gamma);
    let lam = p.lambda_min.min(1.0 / p.lambda_max);
    let one_m = 1.0 - p.sigma * p.sigma;
    let lead = p.n as f64 * p.max_g_norm_sq * cert.d0 / kk.sqrt();
    let primal = lead * 4.0 * mx * cert.omega.sqrt() / (one_m * lam);
    Bounds {
        dual: primal * p.gamma.sqrt(),
        primal,
        eps: p.n as f64 * p.max_g_norm_sq * cert.d0 * cert.d0 / kk * 4.0 * p.sigma * p.sigma * mx * cert.omega
            / (one_m * one_m * lam),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    Fejer,
    StepSum,
    DualBound,
    PrimalBound,
    EpsBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub k: usize,
    pub kind: FlagKind,
    /// Negative: the amount by which the inequality failed.
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditOptions {
    pub certificate: Option<Certificate>,
    /// Skip the ε-sum bound (ε ≡ 0 for Tseng steps).
    pub skip_eps: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: usize,
    pub flags: Vec<Flag>,
    /// Per-iteration Fejér slack `||pᵏ⁺¹−p⁰||² − ||pᵏ−p⁰||² − ||pᵏ⁺¹−pᵏ||²`.
    pub fejer_slack: Vec<f64>,
    /// `Σ_{j≤k} ||pʲ⁺¹ − p̃ʲ||²`
    pub step_sum: Vec<f64>,
    pub step_sum_bound: Option<f64>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self, kind: FlagKind) -> usize {
        self.flags.iter().filter(|f| f.kind == kind).count()
    }
}

const AUDIT_TOL: f64 = 1e-8;

/// Post-hoc checks of the Fejér expansion, the step-sum bound and the
/// min-over-ℓ complexity bounds.
///
/// Consecutive rows must have consecutive `k`; the Fejér test uses the
/// `dist_p0` of the following row as `||pᵏ⁺¹ − p⁰||`.
pub fn audit_trace(trace: &[IterationRecord], opts: &AuditOptions) -> Result<AuditReport> {
    for (j, r) in trace.iter().enumerate() {
        if r.k != trace[0].k + j {
            return Err(Error::Parse(format!(
                "trace is not contiguous: row {j} has k = {}",
                r.k
            )));
        }
    }
    let mut report = AuditReport {
        rows: trace.len(),
        ..AuditReport::default()
    };
    for pair in trace.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        let slack = next.dist_p0.powi(2) - cur.dist_p0.powi(2) - cur.step_norm.powi(2);
        report.fejer_slack.push(slack);
        if !(slack >= -AUDIT_TOL * (1.0 + next.dist_p0.powi(2))) {
            report.flags.push(Flag {
                k: cur.k,
                kind: FlagKind::Fejer,
                slack,
            });
        }
    }

    let bound = opts.certificate.map(|c| c.omega * c.d0 * c.d0);
    report.step_sum_bound = bound;
    let mut sum = 0.0;
    for r in trace {
        if r.proj_gap.is_nan() {
            continue;
        }
        sum += r.proj_gap.powi(2);
        report.step_sum.push(sum);
        if let Some(b) = bound {
            if !(sum <= b + AUDIT_TOL * (1.0 + b)) {
                report.flags.push(Flag {
                    k: r.k,
                    kind: FlagKind::StepSum,
                    slack: b - sum,
                });
            }
        }
    }

    if let Some(cert) = &opts.certificate {
        let (mut dual, mut primal, mut eps) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for (j, r) in trace.iter().enumerate() {
            dual = dual.min(r.res_dual);
            primal = primal.min(r.res_primal_max);
            eps = eps.min(r.eps_sum);
            let b = cert.bounds(j);
            let mut check = |value: f64, bound: f64, kind| {
                if !(value <= bound + AUDIT_TOL * (1.0 + bound)) {
                    report.flags.push(Flag {
                        k: r.k,
                        kind,
                        slack: bound - value,
                    });
                }
            };
            check(dual, b.dual, FlagKind::DualBound);
            check(primal, b.primal, FlagKind::PrimalBound);
            if !opts.skip_eps {
                check(eps, b.eps, FlagKind::EpsBound);
            }
        }
    }
    Ok(report)
}

pub const CSV_HEADER: &str = "k,phi_tilde,grad_norm_sq,res_dual,res_primal_max,eps_sum,dist_p0,step_norm,proj_gap";

/// Shortest round-trip representation, so identical runs give identical bytes.
pub fn write_trace_csv(w: &mut impl Write, trace: &[IterationRecord]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in trace {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.k,
            r.phi_tilde,
            r.grad_norm_sq,
            r.res_dual,
            r.res_primal_max,
            r.eps_sum,
            r.dist_p0,
            r.step_norm,
            r.proj_gap
        )?;
    }
    Ok(())
}

pub fn read_trace_csv(r: impl BufRead) -> Result<Vec<IterationRecord>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty trace file".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected trace header: {header}")));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Parse(format!(
                "trace line {}: expected 9 fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("trace line {}, field {}: {e}", lineno + 2, i + 1)))
        };
        let k = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("trace line {}: bad k: {e}", lineno + 2)))?;
        out.push(IterationRecord {
            k,
            phi_tilde: num(1)?,
            grad_norm_sq: num(2)?,
            res_dual: num(3)?,
            res_primal_max: num(4)?,
            eps_sum: num(5)?,
            dist_p0: num(6)?,
            step_norm: num(7)?,
            proj_gap: num(8)?,
            block_slack: Vec::new(),
            fejer_slack: None,
            tilde_gap_sq: None,
            case: None,
            phi_reference: None,
            w_reference: None,
        });
    }
    Ok(out)
}

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ipsplit::diagnostics::{audit_trace, read_trace_csv, write_trace_csv, AuditOptions, CertificateParams, Residuals};
use ipsplit::operators::{audit_forward, OperatorBlock};
use ipsplit::problems::{make_affine_feasibility, make_fused, make_lasso, make_skew_saddle, ProblemInstance};
use ipsplit::product_space::ProductPoint;
use ipsplit::solver::{
    AlphaSchedule, BetaSchedule, ExactProx, InnerSolver, PerturbedProx, Solution, Solver, SolverConfig, Status,
};
use ipsplit::variants::VariantSolver;

mod verify;

/// Pairs sampled when auditing a forward map before a forward-backward run.
const FB_AUDIT_PAIRS: usize = 200;

#[derive(Parser)]
#[command(
    name = "ipsplit",
    version,
    about = "Inertial projective splitting for monotone inclusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance file.
    Gen {
        #[command(flatten)]
        source: InstanceArgs,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the solver, writing the trace CSV and a summary JSON.
    Solve(SolveArgs),
    /// Check a trace against the Fejér and complexity bounds.
    Audit {
        #[arg(long)]
        trace: PathBuf,
        /// Upper bound on the distance from p⁰ to the solution set; defaults
        /// to the oracle distance recorded in the summary.
        #[arg(long)]
        d0: Option<f64>,
        /// Defaults to `<trace>.summary.json`.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Audit only the first N rows.
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Run the invariant suite on seeded instances.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ProblemKind {
    Affine,
    Lasso,
    Fused,
    Skew,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Variant {
    Generic,
    Fb,
    Tseng,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source_kind")]
struct SourceKind {
    #[arg(long, value_enum)]
    problem: Option<ProblemKind>,
    /// Instance file written by `gen`.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceArgs {
    #[command(flatten)]
    kind: SourceKind,
    /// Dimension for affine and skew problems.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    /// Overridden by the PS_SEED environment variable.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: InstanceArgs,
    #[arg(long, value_enum, default_value_t = Variant::Generic)]
    variant: Variant,
    /// Replace exact resolvents by a seeded perturbed inner solver.
    #[arg(long)]
    inexact: bool,
    /// Relative error tolerance; defaults to 0 for exact resolvents, 0.5 for
    /// fb and tseng and 0.9 with --inexact.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// `βₖ = beta0/(k+1)`; 0 disables the anchor term.
    #[arg(long, default_value_t = 1.0)]
    beta0: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Resolvent step for blocks without a variant step.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-8)]
    rho: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
    /// Solve the blocks of each iteration in parallel.
    #[arg(long)]
    parallel: bool,
    /// Run fb even when a forward map fails the cocoercivity audit.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    trace: PathBuf,
    /// Defaults to `<trace>.summary.json`.
    #[arg(long)]
    summary: Option<PathBuf>,
}

/// Written next to every trace.
#[derive(Serialize, Deserialize)]
struct Summary {
    problem: String,
    seed: u64,
    variant: Variant,
    inexact: bool,
    status: Status,
    iterations: usize,
    residuals: Residuals,
    objective: Option<f64>,
    lambda_min: f64,
    lambda_max: f64,
    config: SolverConfig,
    certificate: CertificateParams,
    /// Oracle distance from p⁰ to the solution set, when known.
    d0: Option<f64>,
    /// `||z − z*||` for the returned (or last) primal estimate.
    oracle_error: Option<f64>,
    solution: Option<Solution>,
    point: ProductPoint,
}

fn env_seed() -> anyhow::Result<Option<u64>> {
    match std::env::var("PS_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| anyhow!("PS_SEED must be an unsigned integer, got {s:?}")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("PS_SEED: {e}")),
    }
}

fn effective_seed(seed: u64) -> anyhow::Result<u64> {
    Ok(env_seed()?.unwrap_or(seed))
}

fn load_instance(args: &InstanceArgs) -> anyhow::Result<ProblemInstance> {
    let seed = effective_seed(args.seed)?;
    if let Some(path) = &args.kind.instance {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut inst = ProblemInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        if std::env::var_os("PS_SEED").is_some() {
            inst.seed = seed;
        }
        return Ok(inst);
    }
    let kind = args.kind.problem.expect("clap enforces one source");
    let inst = match kind {
        ProblemKind::Affine => make_affine_feasibility(args.dim.unwrap_or(10), seed),
        ProblemKind::Lasso => make_lasso(
            args.rows.unwrap_or(8),
            args.cols.unwrap_or(4),
            args.mu.unwrap_or(0.5),
            seed,
        ),
        ProblemKind::Fused => make_fused(
            args.rows.unwrap_or(10),
            args.cols.unwrap_or(6),
            args.mu.unwrap_or(0.5),
            seed,
        ),
        ProblemKind::Skew => make_skew_saddle(args.dim.unwrap_or(4), seed),
    };
    Ok(inst?)
}

fn default_summary(trace: &Path) -> PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

fn gen(source: &InstanceArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let json = load_instance(source)?.to_json()?;
    match out {
        Some(p) => std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

/// Refuses forward-backward when a forward map fails the audit.
fn fb_gate(inst: &ProblemInstance, seed: u64, force: bool) -> anyhow::Result<()> {
    for (i, b) in inst.problem.blocks.iter().enumerate() {
        let OperatorBlock::Split { forward, set, .. } = b else {
            continue;
        };
        let audit = audit_forward(forward.as_ref(), set, FB_AUDIT_PAIRS, seed);
        if !audit.cocoercive() {
            if force {
                eprintln!(
                    "warning: block {} failed the cocoercivity audit (violation {:e}); continuing",
                    i + 1,
                    audit.cocoercivity_violation
                );
            } else {
                bail!(
                    "block {}: forward map failed the cocoercivity audit (violation {:e}); \
                     use --variant tseng, or --force to override",
                    i + 1,
                    audit.cocoercivity_violation
                );
            }
        }
    }
    Ok(())
}

fn solve(args: &SolveArgs) -> anyhow::Result<()> {
    let inst = load_instance(&args.source)?;
    let sigma = args.sigma.unwrap_or(match (args.variant, args.inexact) {
        (_, true) => 0.9,
        (Variant::Generic, false) => 0.0,
        _ => 0.5,
    });
    let cfg = SolverConfig {
        sigma,
        gamma: args.gamma,
        alpha: AlphaSchedule::Constant { alpha: args.alpha },
        beta: if args.beta0 == 0.0 {
            BetaSchedule::Zero
        } else {
            BetaSchedule::Harmonic { beta0: args.beta0 }
        },
        lambda: args.lambda,
        rho: args.rho,
        max_iter: args.max_iter,
        parallel: args.parallel,
    };
    let inner: Box<dyn InnerSolver> = match (args.variant, args.inexact) {
        (Variant::Generic, true) => Box::new(PerturbedProx::new(inst.seed)),
        (Variant::Generic, false) => Box::new(ExactProx),
        (_, true) => bail!("--inexact applies to the generic variant only"),
        (Variant::Fb, false) => {
            fb_gate(&inst, inst.seed, args.force)?;
            Box::new(VariantSolver::forward_backward())
        }
        (Variant::Tseng, false) => Box::new(VariantSolver::tseng()),
    };

    let solver = Solver::new(&inst.problem, cfg.clone(), inner.as_ref())?;
    let metric = solver.metric();
    let (lambda_min, lambda_max) = solver.lambda_bounds();
    let report = solver.solve(inst.p0.clone())?;

    let file = File::create(&args.trace).with_context(|| format!("creating {}", args.trace.display()))?;
    let mut w = BufWriter::new(file);
    write_trace_csv(&mut w, &report.trace)?;
    w.flush()?;

    let z = report.solution.as_ref().map_or(&report.point.z, |s| &s.z);
    let summary = Summary {
        problem: inst.name().to_string(),
        seed: inst.seed,
        variant: args.variant,
        inexact: args.inexact,
        status: report.status,
        iterations: report.iterations,
        residuals: report.solution.as_ref().map_or(report.residuals, |s| s.residuals),
        objective: inst.data.objective(z),
        lambda_min,
        lambda_max,
        certificate: CertificateParams::new(&inst.problem.family, &cfg, lambda_min, lambda_max),
        d0: inst.oracle.as_ref().map(|o| o.d0(&inst.p0, &metric)),
        oracle_error: inst.oracle.as_ref().map(|o| (z - &o.z).norm()),
        config: cfg,
        solution: report.solution.clone(),
        point: report.point.clone(),
    };
    let path = args.summary.clone().unwrap_or_else(|| default_summary(&args.trace));
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;

    let r = summary.residuals;
    println!(
        "{}: {:?} after {} iterations; dual {:e}, primal {:e}, eps {:e}",
        summary.problem, summary.status, summary.iterations, r.dual, r.primal_max, r.eps_sum
    );
    Ok(())
}

/// Exit status 1 when any flag is raised.
fn audit(trace: &Path, d0: Option<f64>, summary: Option<&Path>, rows: Option<usize>) -> anyhow::Result<bool> {
    let file = File::open(trace).with_context(|| format!("opening {}", trace.display()))?;
    let mut records = read_trace_csv(BufReader::new(file)).with_context(|| format!("parsing {}", trace.display()))?;
    if let Some(n) = rows {
        records.truncate(n);
    }
    let summary_path = summary.map(Path::to_path_buf).unwrap_or_else(|| default_summary(trace));
    let summary: Option<Summary> = if summary_path.exists() {
        let text = std::fs::read_to_string(&summary_path)?;
        Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", summary_path.display()))?)
    } else if summary.is_some() {
        bail!("summary file {} does not exist", summary_path.display());
    } else {
        None
    };
    let d0 = d0.or(summary.as_ref().and_then(|s| s.d0));
    let certificate = match (&summary, d0) {
        (Some(s), Some(d0)) => {
            if !(d0 >= 0.0 && d0.is_finite()) {
                bail!("d0 must be a finite nonnegative number, got {d0}");
            }
            Some(s.certificate.certificate(d0))
        }
        (None, Some(_)) => bail!("the complexity bounds need the summary written by solve"),
        _ => None,
    };
    let opts = AuditOptions {
        certificate,
        skip_eps: summary.as_ref().is_some_and(|s| s.variant == Variant::Tseng),
    };
    let report = audit_trace(&records, &opts)?;

    println!("rows: {}", report.rows);
    match &opts.certificate {
        Some(c) => println!("certificate: d0 = {:e}, c = {:e}, omega = {:e}", c.d0, c.c, c.omega),
        None => println!("certificate: none (Fejér checks only)"),
    }
    println!("flags: {}", report.flags.len());
    for f in &report.flags {
        println!("  k = {}: {:?}, slack {:e}", f.k, f.kind, f.slack);
    }
    Ok(report.is_clean())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Gen { source, out } => gen(&source, out.as_deref())?,
        Command::Solve(args) => solve(&args)?,
        Command::Audit {
            trace,
            d0,
            summary,
            rows,
        } => {
            if !audit(&trace, d0, summary.as_deref(), rows)? {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Verify { seed, max_iter } => {
            if !verify::run(effective_seed(seed)?, max_iter) {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ipsplit::Error>() {
        Some(e) if e.is_contract_error() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

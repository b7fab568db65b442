//! The `cp-oracle` command line.
//!
//! Exit codes: 0 when every checked inequality holds, 2 on invalid input
//! (a JSON error object goes to stderr), 3 when a check fails (the check is
//! named on stderr). Every run that gets as far as its output directory
//! writes `manifest.json` last.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::chaining;
use crate::concentration::{self, ProcessId, TailReport};
use crate::descriptor::{FamilyDescriptor, InstanceDescriptor};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig};
use crate::family::{verify_family, EigencurveFamily};
use crate::output::{self, OutputDir, RunManifest};
use crate::packing::{self, Direction};
use crate::risk::{self, SpectralInstance};
use crate::rng::{derive_seed, SeedStream};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;
pub const OUT_ENV: &str = "CP_ORACLE_OUT";
const DEFAULT_OUT: &str = "cp-oracle-out";

#[derive(Debug, Parser)]
#[command(
    name = "cp-oracle",
    version,
    about = "Mallows' Cp selection over ordered linear smoother families, with Monte Carlo checks of its oracle inequality",
    long_about = "Mallows' Cp selection over totally ordered families of linear smoothers S_θ, \
                  parametrized by trace θ ∈ [0, n], with numerical checks of every inequality \
                  behind the oracle bound E G(θ̂) ≤ m* + C₃√m* + C₄.\n\n\
                  Exit status: 0 all checks hold, 2 invalid input, 3 a check failed (named on stderr)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Master seed; every random draw derives from it by labelled hashing.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory. The CP_ORACLE_OUT environment variable takes precedence.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Problem {
    /// Family descriptor JSON (explicit knots/lambdas, ridge, ridge-polynomial, interpolated, uniform-shrink, projection).
    #[arg(long)]
    pub family: PathBuf,
    /// Instance descriptor JSON: {rho, sigma2}, {mu, basis, sigma2} or {pattern, amplitude, sigma2}.
    #[arg(long)]
    pub instance: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a family is ordered, trace-parametrized and spans 0 to I.
    #[command(long_about = "Checks the three family invariants: every eigenvalue curve λ_i(θ) is \
        nondecreasing (monotonicity), Σ_i λ_i(θ) = θ (trace identity), and λ(0) = 0, λ(n) = 1 with \
        all values in [0, 1] (endpoints). Checked at every knot and at 1000 seeded interior probes.")]
    Family {
        #[arg(long)]
        family: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Oracle trace θ_μ and risk m*, optionally M and d at given traces.
    #[command(long_about = "Minimizes the exact risk M(θ) = Σ ρ_i²(1-λ_i)² + σ² Σ λ_i² exactly over \
        the family and reports θ_μ and m* = M(θ_μ). With --theta, also reports M(θ), d(θ, θ_μ) with \
        d² = Σ (ρ_i² + σ²) Δλ_i², and the deterministic slacks of M(θ) - m* ≥ d²(θ, θ_μ)/3 \
        whenever d² ≥ 3m*.")]
    Risk {
        #[command(flatten)]
        problem: Problem,
        /// Traces at which to evaluate M and d, comma separated.
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo of the Gaussian tail lemma and of the increment envelopes.
    #[command(long_about = "Linear lemma: P{z·a ≥ w|a|} ≤ exp(-w²/2) for random directions a. \
        Quadratic lemma: P{z'Az - tr A ≥ w √(tr A²)} ≤ 2 exp(-w/4) for random spectra, negative \
        eigenvalues included. With --family/--instance also the increments \
        P{|X_i(θ₁) - X_i(θ₂)| > d(θ₁,θ₂) x} ≤ C₁ exp(-C₂ x) of the four elementary processes, with \
        per-process constants derived from the lemma. A check fails when the lower 99% \
        Clopper-Pearson bound exceeds the bound.")]
    VerifyConcentration {
        #[arg(long)]
        family: Option<PathBuf>,
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Replications per experiment (at least 10000).
        #[arg(long, default_value_t = 100_000)]
        reps: u64,
        /// Number of random directions and of random spectra.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Dimension of the random directions and spectra.
        #[arg(long, default_value_t = 5)]
        dim: usize,
        /// Increment thresholds x (default 0,0.5,…,6).
        #[arg(long = "x-grid", value_delimiter = ',')]
        x_grid: Vec<f64>,
        /// First trace of the increment pair (default 0).
        #[arg(long)]
        theta1: Option<f64>,
        /// Second trace of the increment pair (default n).
        #[arg(long)]
        theta2: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Packing numbers, d²-superadditivity and stratification.
    #[command(long_about = "For δ in a grid, checks pack(δ, [a,b], d) ≤ 1 + (r/δ)² and ≤ 2(r/δ)² with \
        r = d(a, b); checks d²(a, b) ≥ Σ_j d²(t_{j-1}, t_j) on seeded random partitions; and cuts \
        each side of θ_μ into strata with d²(a_k, θ_μ) = k r², each of d-diameter at most r.")]
    VerifyPacking {
        #[command(flatten)]
        problem: Problem,
        /// Interval start (default 0).
        #[arg(long)]
        a: Option<f64>,
        /// Interval end (default n).
        #[arg(long)]
        b: Option<f64>,
        /// Packing radii (default r 2^{-k}, k = 0..8).
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        /// Stratification radius (default √(3m*), or d(0, n)/4 when m* = 0).
        #[arg(long)]
        r: Option<f64>,
        /// Random partitions for the superadditivity check.
        #[arg(long, default_value_t = 1000)]
        partitions: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Chaining nets, the γ-schedule, and stratum and weighted suprema.
    #[command(long_about = "Builds nets T_i with δ_i = r 2^{-i} and at most 2·4^i points over the first \
        stratum next to θ_μ, the schedule γ_i = (r/C₂) 2^{-i}(i(m+1) log 2 + x) with limit \
        R_∞ = (r/C₂)(2(m+1) log 2 + x), and the union bound P{S_i > γ_i} ≤ C C₁ e^{-x} 2^{-i} per \
        level. Monte Carlo: the survival of sup_t |Z(t) - Z(t₀)| / (r/C₂) over a stratum for each \
        process, and of the event that |D(θ) - D(θ_μ)| > L(θ, x, r) = (d²(θ, θ_μ) + r²) x / r for some \
        θ, at fixed r and at r_x = max(√(3m*), 7x), for D_mu and D_hat.")]
    VerifyChaining {
        #[command(flatten)]
        problem: Problem,
        #[arg(long, default_value_t = 5000)]
        reps: u64,
        /// Weighted-sup thresholds x (default 0.1,0.2,…,2).
        #[arg(long = "x-grid", value_delimiter = ',')]
        x_grid: Vec<f64>,
        /// Stratum-sup thresholds in units of r/C₂ (default 0.005,0.01,…,0.1).
        #[arg(long = "sup-x-grid", value_delimiter = ',')]
        sup_x_grid: Vec<f64>,
        /// Net depth.
        #[arg(long, default_value_t = chaining::DEFAULT_DEPTH)]
        depth: usize,
        /// Deepest level checked by the union bound.
        #[arg(long, default_value_t = 6)]
        levels: usize,
        /// Union-bound x.
        #[arg(long = "union-x", default_value_t = 1.0)]
        union_x: f64,
        /// Stratification radius (default √(3m*), or d(0, n)/4 when m* = 0).
        #[arg(long)]
        r: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// End-to-end Monte Carlo of Cp selection and the oracle inequality.
    #[command(long_about = "Per replication: y = ρ + ξ, θ̂ minimizing Ĝ(θ) = |y - S_θ y|² + 2σ²θ, and \
        Z = |G(θ̂) - G(θ_μ)|. Reports P{Z ≥ max(x², x√m*)} with a fitted C₁ e^{-C₂ x}, the mean \
        excess E G(θ̂) - m* against C₃√m* + C₄ with C₃ = 2Ĉ₁/Ĉ₂, C₄ = 2Ĉ₁/Ĉ₂², and monitors the \
        event max(|D̂(θ) - D̂(θ_μ)|, |D_mu(θ) - D_mu(θ_μ)|) ≤ L(θ, x, r_x). On every draw where it \
        holds the run checks d(θ̂, θ_μ) < r_x, M(θ̂) ≤ m* + 2x r_x and Z ≤ 4x r_x; any failure exits 3.")]
    Oracle {
        /// Experiment config JSON: {family, instance, reps, seed, x_grid, label, out}.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's replication count.
        #[arg(long)]
        reps: Option<u64>,
        /// Overrides the config's x grid.
        #[arg(long = "x-grid", value_delimiter = ',')]
        x_grid: Vec<f64>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge oracle summaries from run directories into one table.
    #[command(long_about = "Reads manifest.json and summary.json from each directory and tabulates \
        instance, n, m*, mean excess, normalized excess (E G(θ̂) - m*)/(√m* + 1) and the fitted Ĉ₂.")]
    Report {
        /// Oracle run directories.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Default)]
struct Outcome {
    failed: Vec<String>,
}

impl Outcome {
    fn check(&mut self, name: impl Into<String>, passed: bool) {
        if !passed {
            self.failed.push(name.into());
        }
    }
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = match &cli.command {
        Command::Family { common, .. }
        | Command::Risk { common, .. }
        | Command::VerifyConcentration { common, .. }
        | Command::VerifyPacking { common, .. }
        | Command::VerifyChaining { common, .. } => common.threads,
        Command::Oracle { threads, .. } | Command::Report { threads, .. } => *threads,
    };
    let result = match threads {
        Some(0) => Err(Error::field("threads", "must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))
            .and_then(|pool| pool.install(|| run(cli.command))),
        None => run(cli.command),
    };
    match result {
        Ok(outcome) if outcome.failed.is_empty() => EXIT_OK,
        Ok(outcome) => {
            let err = json!({
                "error": "CheckFailed",
                "check": outcome.failed[0],
                "failed_checks": outcome.failed,
            });
            eprintln!("{err}");
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            let mut err = json!({"error": e.kind(), "message": e.to_string()});
            if let Error::InvalidField { field, .. } = &e {
                err["field"] = json!(field);
            }
            eprintln!("{err}");
            EXIT_INVALID
        }
    }
}

fn out_dir(flag: Option<&Path>, fallback: Option<&str>) -> PathBuf {
    if let Some(env) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    flag.map(Path::to_path_buf)
        .or_else(|| fallback.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn read_json(path: &Path, what: &str) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::field(what, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::field(what, format!("malformed JSON in {}: {e}", path.display())))
}

fn load_family(path: &Path) -> Result<(FamilyDescriptor, EigencurveFamily)> {
    let desc = FamilyDescriptor::parse(&read_json(path, "family")?)?;
    let fam = desc.build()?;
    Ok((desc, fam))
}

fn load_problem(p: &Problem) -> Result<(Value, EigencurveFamily, SpectralInstance)> {
    let (fdesc, fam) = load_family(&p.family)?;
    let idesc = InstanceDescriptor::parse(&read_json(&p.instance, "instance")?)?;
    let inst = idesc.build(fam.n())?;
    Ok((json!({"family": fdesc, "instance": idesc}), fam, inst))
}

/// Runs the family checks, writing the report; returns false on failure.
fn family_gate(out: &mut OutputDir, outcome: &mut Outcome, fam: &EigencurveFamily) -> Result<bool> {
    let report = verify_family(fam);
    out.json("family_report.json", &report)?;
    for check in &report.checks {
        outcome.check(check.name.clone(), check.passed);
    }
    Ok(report.passed)
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Family { family, common } => cmd_family(&family, &common),
        Command::Risk { problem, theta, common } => cmd_risk(&problem, &theta, &common),
        Command::VerifyConcentration {
            family,
            instance,
            reps,
            count,
            dim,
            x_grid,
            theta1,
            theta2,
            common,
        } => cmd_concentration(
            family.as_deref(),
            instance.as_deref(),
            ConcentrationArgs {
                reps,
                count,
                dim,
                x_grid,
                theta1,
                theta2,
            },
            &common,
        ),
        Command::VerifyPacking {
            problem,
            a,
            b,
            deltas,
            r,
            partitions,
            common,
        } => cmd_packing(&problem, a, b, deltas, r, partitions, &common),
        Command::VerifyChaining {
            problem,
            reps,
            x_grid,
            sup_x_grid,
            depth,
            levels,
            union_x,
            r,
            common,
        } => cmd_chaining(
            &problem,
            ChainingArgs {
                reps,
                x_grid,
                sup_x_grid,
                depth,
                levels,
                union_x,
                r,
            },
            &common,
        ),
        Command::Oracle {
            config,
            reps,
            x_grid,
            seed,
            out,
            ..
        } => cmd_oracle(&config, reps, x_grid, seed, out.as_deref()),
        Command::Report { dirs, out, .. } => cmd_report(&dirs, out.as_deref()),
    }
}

fn cmd_family(path: &Path, common: &Common) -> Result<Outcome> {
    let (desc, fam) = load_family(path)?;
    let mut out = OutputDir::create(out_dir(common.out.as_deref(), None))?;
    let mut outcome = Outcome::default();
    let report = verify_family(&fam);
    for check in &report.checks {
        outcome.check(check.name.clone(), check.passed);
    }
    out.json("family_report.json", &report)?;
    print_json(&report);
    out.finish(RunManifest::start("family", json!({"family": desc}), common.seed))?;
    Ok(outcome)
}

#[derive(Serialize)]
struct RiskAt {
    theta: f64,
    m: f64,
    d: f64,
    /// `M(θ) - m* - d²/3`, required ≥ 0 when `d² ≥ 3m*`.
    growth_slack: Option<f64>,
}

fn default_radius(inst: &SpectralInstance, fam: &EigencurveFamily, m_star: f64) -> Result<f64> {
    let r = (3.0 * m_star).sqrt();
    if r > 0.0 {
        Ok(r)
    } else {
        Ok(risk::metric_d(inst, fam, 0.0, fam.theta_max())? / 4.0)
    }
}

fn cmd_risk(problem: &Problem, thetas: &[f64], common: &Common) -> Result<Outcome> {
    let (config, fam, inst) = load_problem(problem)?;
    let mut out = OutputDir::create(out_dir(common.out.as_deref(), None))?;
    let mut outcome = Outcome::default();
    if family_gate(&mut out, &mut outcome, &fam)? {
        let oracle = risk::minimize_m(&inst, &fam)?;
        let mut at = Vec::with_capacity(thetas.len());
        for &theta in thetas {
            let m = risk::m_risk(&inst, &fam, theta)?;
            let d2 = risk::metric_d2(&inst, &fam, theta, oracle.theta)?;
            let growth_slack = (d2 >= 3.0 * oracle.m_value).then(|| m - oracle.m_value - d2 / 3.0);
            outcome.check("risk.growth", growth_slack.is_none_or(|s| s >= -1e-10 * m.max(1.0)));
            at.push(RiskAt {
                theta,
                m,
                d: d2.sqrt(),
                growth_slack,
            });
        }
        let summary = json!({"theta_mu": oracle.theta, "m_star": oracle.m_value, "at": at});
        out.json("risk.json", &summary)?;
        print_json(&json!({"theta_mu": oracle.theta, "m_star": oracle.m_value}));
    }
    let mut config = config;
    config["theta"] = json!(thetas);
    out.finish(RunManifest::start("risk", config, common.seed))?;
    Ok(outcome)
}

struct ConcentrationArgs {
    reps: u64,
    count: usize,
    dim: usize,
    x_grid: Vec<f64>,
    theta1: Option<f64>,
    theta2: Option<f64>,
}

fn cmd_concentration(
    family: Option<&Path>,
    instance: Option<&Path>,
    args: ConcentrationArgs,
    common: &Common,
) -> Result<Outcome> {
    if args.dim == 0 {
        return Err(Error::field("dim", "must be positive"));
    }
    if args.reps < concentration::MIN_LEMMA_REPS {
        return Err(Error::field(
            "reps",
            format!("need at least {}, got {}", concentration::MIN_LEMMA_REPS, args.reps),
        ));
    }
    let problem = match (family, instance) {
        (Some(f), Some(i)) => Some(load_problem(&Problem {
            family: f.to_path_buf(),
            instance: i.to_path_buf(),
        })?),
        (None, None) => None,
        (Some(_), None) => return Err(Error::field("instance", "required together with --family")),
        (None, Some(_)) => return Err(Error::field("family", "required together with --instance")),
    };
    let linear_grid: Vec<f64> = (0..=6).map(|k| 0.5 * k as f64).collect();
    let quad_grid: Vec<f64> = (0..=12).map(|k| k as f64).collect();
    let x_grid = if args.x_grid.is_empty() {
        (0..=12).map(|k| 0.5 * k as f64).collect()
    } else {
        args.x_grid.clone()
    };
    let seed = common.seed;
    let mut out = OutputDir::create(out_dir(common.out.as_deref(), None))?;
    let mut outcome = Outcome::default();
    let mut summary = Vec::new();
    let mut note = |report: &TailReport, name: &str, outcome: &mut Outcome| {
        let agreement = report.oracle_agreement();
        outcome.check(name.to_string(), report.bound_holds());
        summary.push(json!({
            "file": format!("{}.csv", report.label),
            "check": name,
            "bound_holds": report.bound_holds(),
            "oracle_agreement": agreement,
            "fit": report.fit,
        }));
    };

    let directions = SeedStream::new(seed, "verify-concentration/directions");
    let spectra = SeedStream::new(seed, "verify-concentration/spectra");
    for k in 0..args.count {
        let a = directions.standard_normals(k as u64, args.dim);
        let sub = derive_seed(seed, &format!("verify-concentration/linear/{k}"));
        let mut rep = concentration::linear_tail_experiment(&a, &linear_grid, args.reps, sub)?;
        rep.label = format!("linear_{k:02}");
        out.tail_csv(&format!("{}.csv", rep.label), &rep)?;
        note(&rep, "concentration.linear", &mut outcome);

        let spec = spectra.standard_normals(k as u64, args.dim);
        let sub = derive_seed(seed, &format!("verify-concentration/quadratic/{k}"));
        let mut rep = concentration::quadratic_tail_experiment(&spec, &quad_grid, args.reps, sub)?;
        rep.label = format!("quadratic_{k:02}");
        out.tail_csv(&format!("{}.csv", rep.label), &rep)?;
        note(&rep, "concentration.quadratic", &mut outcome);
    }

    let mut config = json!({
        "reps": args.reps,
        "count": args.count,
        "dim": args.dim,
        "linear_grid": linear_grid,
        "quadratic_grid": quad_grid,
    });
    if let Some((problem_config, fam, inst)) = &problem {
        if family_gate(&mut out, &mut outcome, fam)? {
            let t1 = args.theta1.unwrap_or(0.0);
            let t2 = args.theta2.unwrap_or(fam.theta_max());
            let sub = derive_seed(seed, "verify-concentration/increment");
            let inc = concentration::increment_tail_experiment(inst, fam, t1, t2, &x_grid, args.reps, sub)?;
            for rep in &inc.reports {
                let name = format!("concentration.increment.{}", rep.label);
                out.tail_csv(&format!("increment_{}.csv", rep.label), rep)?;
                note(rep, &name, &mut outcome);
            }
            config["problem"] = problem_config.clone();
            config["theta1"] = json!(t1);
            config["theta2"] = json!(t2);
            config["x_grid"] = json!(x_grid);
        }
    }
    out.json("concentration_summary.json", &summary)?;
    print_json(&json!({"reports": summary.len(), "failed": outcome.failed.len()}));
    out.finish(RunManifest::start("verify-concentration", config, seed))?;
    Ok(outcome)
}

fn cmd_packing(
    problem: &Problem,
    a: Option<f64>,
    b: Option<f64>,
    deltas: Vec<f64>,
    r: Option<f64>,
    partitions: usize,
    common: &Common,
) -> Result<Outcome> {
    let (mut config, fam, inst) = load_problem(problem)?;
    let mut out = OutputDir::create(out_dir(common.out.as_deref(), None))?;
    let mut outcome = Outcome::default();
    if family_gate(&mut out, &mut outcome, &fam)? {
        let a = a.unwrap_or(0.0);
        let b = b.unwrap_or(fam.theta_max());
        let r_ab = risk::metric_d(&inst, &fam, a, b)?;
        let deltas = if deltas.is_empty() {
            (0..=8).map(|k| r_ab / 2f64.powi(k)).collect()
        } else {
            deltas
        };
        let pack = packing::check_pack_bound(&inst, &fam, a, b, &deltas)?;
        outcome.check("packing.bound", pack.holds());
        output::write_pack_csv(out.csv("pack.csv")?, &pack)?;

        let stream = SeedStream::new(common.seed, "verify-packing/partitions");
        let mut worst_slack = f64::INFINITY;
        for k in 0..partitions {
            let mut rng_pts: Vec<f64> = stream
                .standard_normals(k as u64, 1 + k % 7)
                .iter()
                .map(|z| a + (b - a) * (1.0 - crate::stats::normal_sf(*z)))
                .collect();
            rng_pts.push(a);
            rng_pts.push(b);
            rng_pts.sort_by(f64::total_cmp);
            rng_pts.dedup();
            let slack = packing::check_superadditivity(&inst, &fam, a, b, &rng_pts)?;
            let total = risk::metric_d2(&inst, &fam, a, b)?;
            worst_slack = worst_slack.min(slack / total.max(f64::MIN_POSITIVE));
        }
        outcome.check("packing.superadditivity", partitions == 0 || worst_slack >= -1e-10);

        let oracle = risk::minimize_m(&inst, &fam)?;
        let radius = match r {
            Some(r) => r,
            None => default_radius(&inst, &fam, oracle.m_value)?,
        };
        let mut strata = Vec::new();
        for dir in [Direction::Up, Direction::Down] {
            let s = packing::stratify_from(&inst, &fam, oracle.theta, radius, dir)?;
            let diameter = s.max_diameter(&inst, &fam)?;
            outcome.check("packing.stratum_diameter", diameter <= radius * (1.0 + 1e-9));
            strata.push(json!({"direction": dir, "r": s.r, "boundaries": s.boundaries, "max_diameter": diameter}));
        }
        out.json("stratification.json", &strata)?;
        let summary = json!({
            "a": a, "b": b, "r": r_ab,
            "worst_ratio": pack.worst_ratio,
            "worst_superadditivity_slack": if partitions == 0 { Value::Null } else { json!(worst_slack) },
            "stratification_radius": radius,
        });
        out.json("packing_summary.json", &summary)?;
        print_json(&summary);
        config["a"] = json!(a);
        config["b"] = json!(b);
        config["deltas"] = json!(deltas);
        config["r"] = json!(radius);
        config["partitions"] = json!(partitions);
    }
    out.finish(RunManifest::start("verify-packing", config, common.seed))?;
    Ok(outcome)
}

struct ChainingArgs {
    reps: u64,
    x_grid: Vec<f64>,
    sup_x_grid: Vec<f64>,
    depth: usize,
    levels: usize,
    union_x: f64,
    r: Option<f64>,
}

/// First nondegenerate stratum next to `θ_μ`, upwards if possible.
fn first_stratum(
    inst: &SpectralInstance,
    fam: &EigencurveFamily,
    theta_mu: f64,
    r: f64,
) -> Result<Option<((f64, f64), Direction)>> {
    for dir in [Direction::Up, Direction::Down] {
        let s = packing::stratify_from(inst, fam, theta_mu, r, dir)?;
        if let Some(&(lo, hi)) = s.strata().first() {
            if risk::metric_d(inst, fam, lo, hi)? > 0.0 {
                return Ok(Some(((lo, hi), dir)));
            }
        }
    }
    Ok(None)
}

fn cmd_chaining(problem: &Problem, args: ChainingArgs, common: &Common) -> Result<Outcome> {
    let (mut config, fam, inst) = load_problem(problem)?;
    let mut out = OutputDir::create(out_dir(common.out.as_deref(), None))?;
    let mut outcome = Outcome::default();
    let seed = common.seed;
    if family_gate(&mut out, &mut outcome, &fam)? {
        let x_grid = if args.x_grid.is_empty() {
            (1..=20).map(|k| 0.1 * k as f64).collect()
        } else {
            args.x_grid.clone()
        };
        let sup_grid = if args.sup_x_grid.is_empty() {
            (1..=20).map(|k| 0.005 * k as f64).collect()
        } else {
            args.sup_x_grid.clone()
        };
        let oracle = risk::minimize_m(&inst, &fam)?;
        let r = match args.r {
            Some(r) => r,
            None => default_radius(&inst, &fam, oracle.m_value)?,
        };
        let mut summary = json!({"theta_mu": oracle.theta, "m_star": oracle.m_value, "r": r});

        if let Some((interval, dir)) = first_stratum(&inst, &fam, oracle.theta, r)? {
            let nets = chaining::build_nets_from(&inst, &fam, interval, dir, args.depth)?;
            out.json("nets.json", &nets)?;
            summary["stratum"] = json!({"lo": interval.0, "hi": interval.1, "direction": dir, "sizes": nets.sizes()});
            let mut schedules = Vec::new();
            let mut sups = Vec::new();
            for process in ProcessId::ALL {
                let env = concentration::increment_envelope(process, inst.sigma());
                let sched = chaining::gamma_schedule(nets.r, env.c2, crate::packing::PACK_M, args.union_x, args.depth)?;
                schedules.push(json!({"process": process, "c1": env.c1, "c2": env.c2, "schedule": sched}));
                let sub = derive_seed(seed, &format!("verify-chaining/stratum/{process}"));
                let rep = chaining::simulate_stratum_sup(&inst, &fam, &nets, &sup_grid, args.reps, sub, process)?;
                out.fitted_tail_csv(&format!("stratum_{process}.csv"), &rep.tail)?;
                outcome.check(
                    format!("chaining.stratum_sup.{process}"),
                    rep.tail.fit.as_ref().is_none_or(|f| f.c2 > 0.0),
                );
                sups.push(json!({"process": process, "c1": rep.c1, "fit": rep.tail.fit, "net_only_fit": rep.net_only.fit}));

                let sub = derive_seed(seed, &format!("verify-chaining/union/{process}"));
                let levels = chaining::union_bound_levels(&inst, &fam, &nets, process, args.union_x, args.levels, args.reps, sub)?;
                outcome.check(format!("chaining.union_bound.{process}"), levels.iter().all(|l| l.holds()));
                write_levels(&mut out, &format!("union_{process}.csv"), &levels)?;
            }
            out.json("gamma.json", &schedules)?;
            summary["stratum_sup"] = json!(sups);
        } else {
            summary["stratum"] = Value::Null;
        }

        let mut weighted = Vec::new();
        for process in [ProcessId::DMu, ProcessId::DHat] {
            let sub = derive_seed(seed, &format!("verify-chaining/weighted/{process}"));
            let rep = chaining::simulate_weighted_sup(&inst, &fam, r, &x_grid, args.reps, sub, process)?;
            out.fitted_tail_csv(&format!("weighted_{process}_r.csv"), &rep.fixed_r)?;
            out.fitted_tail_csv(&format!("weighted_{process}_rx.csv"), &rep.at_r_x)?;
            outcome.check(
                format!("chaining.weighted_sup.{process}"),
                rep.fixed_r.is_nonincreasing() && rep.at_r_x.is_nonincreasing(),
            );
            weighted.push(json!({
                "process": process, "points": rep.points,
                "fit_r": rep.fixed_r.fit, "fit_r_x": rep.at_r_x.fit,
            }));
        }
        summary["weighted_sup"] = json!(weighted);
        out.json("chaining_summary.json", &summary)?;
        print_json(&summary);
        config["reps"] = json!(args.reps);
        config["x_grid"] = json!(x_grid);
        config["sup_x_grid"] = json!(sup_grid);
        config["depth"] = json!(args.depth);
        config["levels"] = json!(args.levels);
        config["union_x"] = json!(args.union_x);
        config["r"] = json!(r);
    }
    out.finish(RunManifest::start("verify-chaining", config, seed))?;
    Ok(outcome)
}

fn write_levels(out: &mut OutputDir, name: &str, levels: &[chaining::LevelCheck]) -> Result<()> {
    let mut w = out.csv(name)?;
    w.write_record([
        "level",
        "size",
        "gamma",
        "exceed_count",
        "reps",
        "empirical",
        "ci_lower",
        "ci_upper",
        "bound",
        "parent_distance_bound",
    ])?;
    for l in levels {
        w.write_record([
            l.level.to_string(),
            l.size.to_string(),
            l.gamma.to_string(),
            l.exceed_count.to_string(),
            l.reps.to_string(),
            l.empirical.to_string(),
            l.ci_lower.to_string(),
            l.ci_upper.to_string(),
            l.bound.to_string(),
            l.parent_distance_bound.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_oracle(
    config_path: &Path,
    reps: Option<u64>,
    x_grid: Vec<f64>,
    seed: Option<u64>,
    out_flag: Option<&Path>,
) -> Result<Outcome> {
    let mut config = ExperimentConfig::parse(&read_json(config_path, "config")?)?;
    if let Some(reps) = reps {
        config.reps = reps;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if !x_grid.is_empty() {
        config.x_grid = x_grid;
    }
    config.validate()?;
    let (fam, _) = config.resolve()?;
    let mut out = OutputDir::create(out_dir(out_flag, config.out.as_deref()))?;
    let mut outcome = Outcome::default();
    let mut manifest_config = config.clone();
    manifest_config.out = None;
    let manifest = RunManifest::start(
        "oracle",
        serde_json::to_value(&manifest_config).map_err(|e| Error::Invalid(e.to_string()))?,
        config.seed,
    );
    if family_gate(&mut out, &mut outcome, &fam)? {
        let mut records = out.csv("records.csv")?;
        let mut omega = out.csv("omega.csv")?;
        output::write_record_header(&mut records)?;
        output::write_omega_header(&mut omega)?;
        let grid = config.x_grid.clone();
        let summary = experiment::run_oracle_experiment_with_sink(&config, |chunk| {
            output::write_records(&mut records, chunk)?;
            output::write_omega(&mut omega, chunk, &grid)
        })?;
        drop(records);
        drop(omega);
        output::write_tail_curve(out.csv("tails.csv")?, &summary.tail)?;
        out.json("summary.json", &summary)?;
        outcome.check("oracle.argmin", summary.argmin_violations == 0);
        outcome.check("oracle.chain", summary.chain_failures() == 0);
        outcome.check("oracle.mean_loss", summary.mean_g_loss_hat >= summary.m_star);
        print_json(&json!({
            "label": summary.label,
            "m_star": summary.m_star,
            "excess": summary.excess,
            "normalized_excess": summary.normalized_excess,
            "c2_hat": summary.fit.map(|f| f.c2),
        }));
    }
    out.finish(manifest)?;
    Ok(outcome)
}

/// One row of the consolidated report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub instance: String,
    pub n: usize,
    pub m_star: f64,
    pub mean_excess: f64,
    pub normalized_excess: f64,
    pub c2_hat: Option<f64>,
}

pub fn report_rows(dirs: &[PathBuf]) -> Result<Vec<ReportRow>> {
    dirs.iter()
        .map(|dir| {
            let manifest = RunManifest::read(dir)?;
            if manifest.subcommand != "oracle" {
                return Err(Error::Invalid(format!(
                    "{} holds a `{}` run, expected `oracle`",
                    dir.display(),
                    manifest.subcommand
                )));
            }
            let v = read_json(&dir.join("summary.json"), "summary")?;
            let num = |k: &str| {
                v.get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::field(format!("summary.{k}"), "missing number"))
            };
            Ok(ReportRow {
                instance: v.get("label").and_then(Value::as_str).unwrap_or_default().to_string(),
                n: v.get("n").and_then(Value::as_u64).unwrap_or_default() as usize,
                m_star: num("m_star")?,
                mean_excess: num("excess")?,
                normalized_excess: num("normalized_excess")?,
                c2_hat: v.get("fit").and_then(|f| f.get("c2")).and_then(Value::as_f64),
            })
        })
        .collect()
}

fn cmd_report(dirs: &[PathBuf], out_flag: Option<&Path>) -> Result<Outcome> {
    let rows = report_rows(dirs)?;
    println!(
        "{:<28} {:>6} {:>14} {:>14} {:>14} {:>10}",
        "instance", "n", "m*", "mean excess", "normalized", "C2_hat"
    );
    for row in &rows {
        println!(
            "{:<28} {:>6} {:>14.6} {:>14.6} {:>14.6} {:>10}",
            row.instance,
            row.n,
            row.m_star,
            row.mean_excess,
            row.normalized_excess,
            row.c2_hat.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    if out_flag.is_some() || std::env::var_os(OUT_ENV).is_some() {
        let mut out = OutputDir::create(out_dir(out_flag, None))?;
        let mut w = out.csv("report.csv")?;
        w.write_record(["instance", "n", "m_star", "mean_excess", "normalized_excess", "c2_hat"])?;
        for row in &rows {
            w.write_record([
                row.instance.clone(),
                row.n.to_string(),
                row.m_star.to_string(),
                row.mean_excess.to_string(),
                row.normalized_excess.to_string(),
                row.c2_hat.map(|c| c.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        drop(w);
        let names: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
        out.finish(RunManifest::start("report", json!({"dirs": names}), 0))?;
    }
    Ok(Outcome::default())
}

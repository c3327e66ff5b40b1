//! Command-line entry point: every pipeline behind one binary with
//! reproducible, seeded configuration and structured artifacts (GF01
//! fields, CSV tables, JSON reports embedding the resolved config).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use parabolab::catalog::{parse_case, standard_cases, TestCase};
use parabolab::contact::{contact_set, moreau_envelope, Direction, VertexSet};
use parabolab::covering::{covering_check, hypothesis_min_ratio, random_instance};
use parabolab::density::{
    barrier_probe, contact_point_in_ball, density_scan, nonempty_witness, vertex_measure_compare,
    BarrierParams,
};
use parabolab::gf01::{read_gf01, write_gf01, write_mask_gf01};
use parabolab::grid::{build_ball_grid, GridFunction, GridSpec};
use parabolab::measure::{decay_profile, normalize_and_ratio, w2delta_check, LadderSpec};
use parabolab::operators::{Ellipticity, ExtremalSign, SingularExponent};
use parabolab::solver::{residual_report, solve_plaplace, solve_pucci, SolverConfig};
use parabolab::verify::{run_all, VerifyConfig};

const SCHEMA: &str = "parabolab/1";

#[derive(Parser)]
#[command(
    name = "parabolab",
    version,
    about = "Paraboloid contact sets, envelope transforms and measure-decay estimation on the unit ball"
)]
struct Cli {
    /// Directory receiving all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Cap on worker threads (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Seed for all randomized samplers.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DirArg {
    Lower,
    Upper,
    Both,
}

impl From<DirArg> for Direction {
    fn from(d: DirArg) -> Self {
        match d {
            DirArg::Lower => Direction::Lower,
            DirArg::Upper => Direction::Upper,
            DirArg::Both => Direction::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SolveKind {
    Plaplace,
    Pucci,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SignArg {
    Minus,
    Plus,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum BoundaryArg {
    Zero,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// List catalog cases or dump one as GF01 fields.
    Case(CaseArgs),
    /// Solve a Dirichlet problem and write the solution field.
    Solve(SolveArgs),
    /// Compute a paraboloid contact set of a stored field.
    Contact(ContactArgs),
    /// Inf-convolution envelope of a stored field.
    Envelope(EnvelopeArgs),
    /// Contact complement decay along an opening ladder.
    Decay(DecayArgs),
    /// Hessian integrability estimate, direct and decay routes.
    W2d(W2dArgs),
    /// Density scans, witness, barrier probe and vertex comparison.
    Density(DensityArgs),
    /// Ball-covering hypothesis/conclusion check on raster sets.
    Covering(CoveringArgs),
    /// Full verification suite.
    Verify(VerifyArgs),
}

#[derive(Args, Serialize)]
struct CaseArgs {
    /// Print the catalog and exit.
    #[arg(long)]
    list: bool,
    /// Case name, e.g. quadratic:1, cone, radial_plaplace:1.5, bump.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value_t = 129)]
    resolution: usize,
    #[arg(long, default_value_t = 2)]
    ndim: usize,
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[arg(long, value_enum)]
    kind: SolveKind,
    /// Exponent of the p-Laplace solve, in (1, 2].
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Extremal side of the wide-stencil solve.
    #[arg(long, value_enum, default_value_t = SignArg::Minus)]
    sign: SignArg,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "Lambda", default_value_t = 2.0)]
    lambda_hi: f64,
    /// Gradient-singularity exponent used by the residual report.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 129)]
    resolution: usize,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Take the right-hand side and boundary data from a catalog case.
    #[arg(long)]
    case: Option<String>,
    /// Constant right-hand side when no case is given.
    #[arg(long, default_value_t = 1.0)]
    f_const: f64,
    /// Boundary data when no case is given.
    #[arg(long, value_enum, default_value_t = BoundaryArg::Zero)]
    boundary: BoundaryArg,
    /// Output field path (GF01), relative to the output directory.
    #[arg(long, default_value = "solution.gf")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ContactArgs {
    /// Input field (GF01).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    kappa: f64,
    #[arg(long, value_enum, default_value_t = DirArg::Lower)]
    dir: DirArg,
    /// Override of the touching tolerance (default kappa h^2).
    #[arg(long)]
    tol: Option<f64>,
    /// Vertex-set ball center "x,y[,z]" (default: the whole ball).
    #[arg(long)]
    vertex_center: Option<String>,
    #[arg(long)]
    vertex_radius: Option<f64>,
    #[arg(long, default_value = "contact_mask.gf")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EnvelopeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value = "envelope.gf")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct DecayArgs {
    /// Catalog case (mutually exclusive with --in).
    #[arg(long)]
    case: Option<String>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DirArg::Lower)]
    dir: DirArg,
    #[arg(long, default_value_t = 1.0)]
    t0: f64,
    #[arg(long = "M", default_value_t = 2.0)]
    m: f64,
    #[arg(long, default_value_t = 8)]
    kmax: usize,
    #[arg(long, default_value_t = 129)]
    resolution: usize,
}

#[derive(Args, Serialize)]
struct W2dArgs {
    #[arg(long)]
    case: Option<String>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    #[arg(long = "M", default_value_t = 2.0)]
    m: f64,
    #[arg(long, default_value_t = 1e-9)]
    eps_guard: f64,
    #[arg(long, default_value_t = 129)]
    resolution: usize,
}

#[derive(Args, Serialize)]
struct DensityArgs {
    #[arg(long, default_value = "quadratic:1")]
    case: String,
    #[arg(long, default_value_t = 1.0)]
    opening: f64,
    /// Comma-separated opening multipliers.
    #[arg(long, default_value = "2,4,8")]
    m_list: String,
    #[arg(long, default_value_t = 200)]
    balls: usize,
    #[arg(long, default_value_t = 129)]
    resolution: usize,
    /// Probe-ball center "x,y".
    #[arg(long, default_value = "0.15,0.1")]
    probe_center: String,
    #[arg(long, default_value_t = 0.35)]
    probe_radius: f64,
    /// Barrier steepness.
    #[arg(long, default_value_t = 3.0)]
    barrier_a: f64,
    #[arg(long, default_value_t = 0.15)]
    envelope_eps: f64,
}

#[derive(Args, Serialize)]
struct CoveringArgs {
    /// Inner set E as a GF01 0/1 mask; omit to generate a seeded instance.
    #[arg(long)]
    e_input: Option<PathBuf>,
    /// Outer set F as a GF01 0/1 mask.
    #[arg(long)]
    f_input: Option<PathBuf>,
    /// Density fraction; derived from the sampled minimum when omitted.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 65)]
    resolution: usize,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long, default_value_t = 129)]
    resolution: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating output directory {:?}", cli.out_dir))?;
    match &cli.cmd {
        Command::Case(a) => cmd_case(&cli, a),
        Command::Solve(a) => cmd_solve(&cli, a),
        Command::Contact(a) => cmd_contact(&cli, a),
        Command::Envelope(a) => cmd_envelope(&cli, a),
        Command::Decay(a) => cmd_decay(&cli, a),
        Command::W2d(a) => cmd_w2d(&cli, a),
        Command::Density(a) => cmd_density(&cli, a),
        Command::Covering(a) => cmd_covering(&cli, a),
        Command::Verify(a) => cmd_verify(&cli, a),
    }
}

fn manifest(cli: &Cli, command: &str, params: serde_json::Value) -> serde_json::Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "seed": cli.seed,
        "threads": cli.threads,
        "out_dir": cli.out_dir,
        "params": params,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {path:?}"))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_point(s: &str) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    let parts: Vec<&str> = s.split(',').collect();
    if parts.is_empty() || parts.len() > 3 {
        bail!("expected 1..3 comma-separated coordinates, got {s:?}");
    }
    for (k, p) in parts.iter().enumerate() {
        out[k] = p
            .trim()
            .parse()
            .with_context(|| format!("bad coordinate {p:?}"))?;
    }
    Ok(out)
}

fn load_case(name: &str, resolution: usize, ndim: usize) -> Result<(TestCase, GridSpec)> {
    let case = parse_case(name, ndim)?;
    let spec = build_ball_grid(ndim, resolution)?;
    Ok((case, spec))
}

fn cmd_case(cli: &Cli, a: &CaseArgs) -> Result<ExitCode> {
    if a.list || a.name.is_none() {
        println!(
            "{:<22} {:>6} {:>10} {:>10}  notes",
            "name", "gamma", "lo", "hi"
        );
        for c in standard_cases(a.ndim) {
            println!(
                "{:<22} {:>6} {:>10} {:>10}  {}",
                c.name, c.gamma.gamma, c.ell.lo, c.ell.hi, c.notes
            );
        }
        return Ok(ExitCode::SUCCESS);
    }
    let name = a.name.as_deref().unwrap();
    let (case, spec) = load_case(name, a.resolution, a.ndim)?;
    let u = case.sample_u(&spec)?;
    let f = case.sample_f(&spec)?;
    let stem = name.replace(':', "_");
    let u_path = cli.out_dir.join(format!("{stem}_u.gf"));
    let f_path = cli.out_dir.join(format!("{stem}_f.gf"));
    write_gf01(&u_path, &u)?;
    write_gf01(&f_path, &f)?;
    println!("wrote {} and {}", u_path.display(), f_path.display());
    let meta = json!({
        "config": manifest(cli, "case", serde_json::to_value(a)?),
        "case": {
            "name": case.name,
            "ndim": case.ndim,
            "gamma": case.gamma.gamma,
            "ellipticity": case.ell,
            "notes": case.notes,
            "sup_u": u.sup_norm(),
            "sup_f": f.sup_norm(),
        },
    });
    write_json(&cli.out_dir.join(format!("{stem}_meta.json")), &meta)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> Result<ExitCode> {
    let spec = build_ball_grid(2, a.resolution)?;
    let ell = Ellipticity::new(a.lambda, a.lambda_hi)?;
    let cfg = SolverConfig {
        residual_tolerance: a.tolerance,
        seed: cli.seed,
        ..SolverConfig::default()
    };

    let case = a.case.as_deref().map(|n| parse_case(n, 2)).transpose()?;
    let f = match &case {
        Some(c) => c.sample_f(&spec)?,
        None => GridFunction::sample(&spec, |_| a.f_const)?,
    };
    let boundary = |x: &[f64; 3]| -> f64 {
        match (&case, a.boundary) {
            (Some(c), _) => c.u(x),
            (None, BoundaryArg::Zero) => 0.0,
            (None, BoundaryArg::Linear) => x[0],
        }
    };

    let report = match a.kind {
        SolveKind::Plaplace => solve_plaplace(&f, boundary, a.p, &spec, &cfg)?,
        SolveKind::Pucci => {
            let sign = match a.sign {
                SignArg::Minus => ExtremalSign::Minus,
                SignArg::Plus => ExtremalSign::Plus,
            };
            solve_pucci(&f, boundary, sign, &ell, &spec, &cfg)?
        }
    };

    let out = cli.out_dir.join(&a.out);
    write_gf01(&out, &report.u)?;
    println!(
        "wrote {} ({} iterations, converged: {})",
        out.display(),
        report.iterations,
        report.converged
    );

    let gamma = SingularExponent::new(a.gamma)?;
    let res = residual_report(&report.u, &f, &gamma, &ell, 10.0);
    let log = json!({
        "config": manifest(cli, "solve", serde_json::to_value(a)?),
        "converged": report.converged,
        "iterations": report.iterations,
        "warning": report.warning,
        "energy_monotone": report.energy_monotone,
        "history": report.history,
        "residual_report": {
            "checked_nodes": res.checked_nodes,
            "violations": res.violations,
            "tau": res.tau,
            "worst_lower": res.worst_lower,
            "worst_upper": res.worst_upper,
        },
    });
    write_json(&cli.out_dir.join("solve_log.json"), &log)?;
    Ok(if report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_contact(cli: &Cli, a: &ContactArgs) -> Result<ExitCode> {
    let u = read_gf01(&a.input)?;
    let spec = u.spec().clone();
    let vset = match (&a.vertex_center, a.vertex_radius) {
        (Some(c), Some(r)) => VertexSet::ball(&spec, &parse_point(c)?, r)?,
        (None, None) => VertexSet::full(&spec),
        _ => bail!("--vertex-center and --vertex-radius must be given together"),
    };
    let set = contact_set(&u, a.kappa, &vset, a.dir.into(), a.tol)?;
    let out = cli.out_dir.join(&a.out);
    write_mask_gf01(&out, &set.cells)?;
    println!("wrote {}", out.display());
    let summary = json!({
        "config": manifest(cli, "contact", serde_json::to_value(a)?),
        "kappa": set.kappa,
        "tol": set.tol,
        "direction": set.direction,
        "node_count": set.cells.count(),
        "measure": set.cells.measure(),
        "ball_measure": spec.ball_measure(),
        "interior_count": set.interior().count(),
    });
    write_json(&cli.out_dir.join("contact_summary.json"), &summary)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_envelope(cli: &Cli, a: &EnvelopeArgs) -> Result<ExitCode> {
    let u = read_gf01(&a.input)?;
    let e = moreau_envelope(&u, a.epsilon)?;
    let out = cli.out_dir.join(&a.out);
    write_gf01(&out, &e)?;
    println!("wrote {}", out.display());
    let gap = u
        .spec()
        .masked_nodes()
        .map(|i| u.value(i) - e.value(i))
        .fold(0.0, f64::max);
    let summary = json!({
        "config": manifest(cli, "envelope", serde_json::to_value(a)?),
        "epsilon": a.epsilon,
        "max_gap": gap,
    });
    write_json(&cli.out_dir.join("envelope_summary.json"), &summary)?;
    Ok(ExitCode::SUCCESS)
}

fn input_field(
    case: &Option<String>,
    input: &Option<PathBuf>,
    resolution: usize,
) -> Result<(GridFunction, Option<TestCase>)> {
    match (case, input) {
        (Some(name), None) => {
            let (c, spec) = load_case(name, resolution, 2)?;
            Ok((c.sample_u(&spec)?, Some(c)))
        }
        (None, Some(path)) => Ok((read_gf01(path)?, None)),
        _ => bail!("give exactly one of --case or --in"),
    }
}

fn cmd_decay(cli: &Cli, a: &DecayArgs) -> Result<ExitCode> {
    let (u, _) = input_field(&a.case, &a.input, a.resolution)?;
    let ladder = LadderSpec::new(a.t0, a.m, a.kmax)?;
    let rep = decay_profile(&u, a.dir.into(), &ladder)?;

    let csv_path = cli.out_dir.join("decay_ladder.csv");
    let mut csv = String::from("k,t,measure_lower,measure_upper,measure_both\n");
    for s in &rep.ladder {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.k, s.t, s.complement_lower, s.complement_upper, s.complement_both
        ));
    }
    fs::write(&csv_path, csv)?;
    println!("wrote {}", csv_path.display());

    let report = json!({
        "config": manifest(cli, "decay", serde_json::to_value(a)?),
        "report": rep,
    });
    write_json(&cli.out_dir.join("decay_report.json"), &report)?;
    if let Some(sigma) = rep.sigma {
        println!(
            "fitted sigma {sigma:.4} (theta {:.4}, M {})",
            rep.theta.unwrap(),
            rep.m
        );
    } else {
        println!("saturated ladder: all complements empty");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_w2d(cli: &Cli, a: &W2dArgs) -> Result<ExitCode> {
    let (u, case) = input_field(&a.case, &a.input, a.resolution)?;
    let check = w2delta_check(&u, a.delta, a.m)?;
    let ratio = match &case {
        Some(c) => {
            let spec = u.spec().clone();
            let f = c.sample_f(&spec)?;
            let (_, rep, _, _) = normalize_and_ratio(&u, &f, &c.gamma, a.eps_guard, a.delta)?;
            Some(rep)
        }
        None => None,
    };
    let report = json!({
        "config": manifest(cli, "w2d", serde_json::to_value(a)?),
        "check": check,
        "normalization": ratio,
    });
    write_json(&cli.out_dir.join("w2d_report.json"), &report)?;
    println!(
        "direct {:.6}, decay bound {:.6}, dominated: {}",
        check.direct, check.decay_bound, check.ok
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_density(cli: &Cli, a: &DensityArgs) -> Result<ExitCode> {
    let (case, spec) = load_case(&a.case, a.resolution, 2)?;
    let u = case.sample_u(&spec)?;
    let m_list: Vec<f64> = a
        .m_list
        .split(',')
        .map(|s| s.trim().parse::<f64>().context("bad multiplier"))
        .collect::<Result<_>>()?;

    let scale = 1.0 / (16.0 * u.sup_norm() + 1.0);
    let witness = nonempty_witness(&u.scaled(scale), a.opening)?;
    let scan = density_scan(&u, a.opening, &m_list, a.balls, cli.seed)?;

    let x0 = parse_point(&a.probe_center)?;
    let base = contact_set(
        &u,
        a.opening,
        &VertexSet::full(&spec),
        Direction::Lower,
        None,
    )?;
    let barrier = contact_point_in_ball(&base, &x0, a.probe_radius).map(|(x1, y1)| {
        let params = BarrierParams {
            big_a: a.barrier_a,
            opening: a.opening,
            r: a.probe_radius,
            x0,
            y1,
        };
        barrier_probe(&u, &params, x1).map(|probe| (probe, y1))
    });
    let (barrier_json, compare_json) = match barrier {
        Some(Ok((probe, y1))) => {
            let mut compares = Vec::new();
            for &m in &m_list {
                match vertex_measure_compare(
                    &u,
                    a.opening,
                    m,
                    &probe.x2,
                    &y1,
                    a.probe_radius,
                    &x0,
                    &case.ell,
                    a.envelope_eps,
                ) {
                    Ok(rep) => compares.push(json!({"m": m, "report": rep})),
                    Err(e) => compares.push(json!({"m": m, "skipped": e.to_string()})),
                }
            }
            (
                serde_json::to_value(&probe)?,
                serde_json::Value::Array(compares),
            )
        }
        Some(Err(e)) => (json!({ "skipped": e.to_string() }), json!([])),
        None => (
            json!({"skipped": "probe ball misses the contact set"}),
            json!([]),
        ),
    };

    let report = json!({
        "config": manifest(cli, "density", serde_json::to_value(a)?),
        "witness": witness,
        "witness_scale": scale,
        "scan": scan,
        "barrier": barrier_json,
        "vertex_compare": compare_json,
    });
    write_json(&cli.out_dir.join("density_report.json"), &report)?;
    for e in &scan.entries {
        println!(
            "M = {:>5}: empirical density {:.4} over {} balls",
            e.m, e.min_ratio, e.balls_used
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_covering(cli: &Cli, a: &CoveringArgs) -> Result<ExitCode> {
    let (e, f, generated): (_, _, Option<f64>) = match (&a.e_input, &a.f_input) {
        (Some(pe), Some(pf)) => {
            let ge = read_gf01(pe)?;
            let gf = read_gf01(pf)?;
            let spec = ge.spec().clone();
            let e = parabolab::grid::CellSet::from_pred(&spec, |i| ge.value(i) > 0.5);
            let f = parabolab::grid::CellSet::from_pred(&spec, |i| gf.value(i) > 0.5);
            (e, f, None)
        }
        (None, None) => {
            let spec = build_ball_grid(2, a.resolution)?;
            let (e, f, rho) = random_instance(&spec, cli.seed);
            (e, f, Some(rho))
        }
        _ => bail!("give both --e-input and --f-input, or neither"),
    };
    let (min_ratio, worst, tested) = hypothesis_min_ratio(&e, &f, a.samples, cli.seed ^ 0xc0fe);
    let mu = match a.mu {
        Some(m) => m,
        None => {
            if tested == 0 || min_ratio <= 0.0 {
                bail!("no sampled ball meets E; give --mu explicitly");
            }
            (0.75 * min_ratio).min(0.95)
        }
    };
    let verdict = covering_check(&e, &f, mu, a.samples, cli.seed ^ 0xc0fe)?;
    let report = json!({
        "config": manifest(cli, "covering", serde_json::to_value(a)?),
        "generated_dilation": generated,
        "sampled_min_ratio": min_ratio,
        "sampled_worst_ball": worst,
        "balls_tested": tested,
        "verdict": verdict,
    });
    write_json(&cli.out_dir.join("covering_report.json"), &report)?;
    println!(
        "hypothesis {} (mu = {:.4}), conclusion {:?}",
        if verdict.hypothesis_ok {
            "holds"
        } else {
            "fails"
        },
        mu,
        verdict.conclusion_ok
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<ExitCode> {
    let cfg = VerifyConfig {
        resolution: a.resolution,
        seed: cli.seed,
    };
    let reports = run_all(&cfg);
    let mut all_pass = true;
    for r in &reports {
        println!(
            "criterion {:2} {:34} {} ({:6.2}s / {:>3.0}s budget) {}",
            r.id,
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.seconds,
            r.budget_seconds,
            r.details
        );
        all_pass &= r.pass;
    }
    let summary = json!({
        "config": manifest(cli, "verify", serde_json::to_value(a)?),
        "verify_config": cfg,
        "criteria": reports,
        "all_pass": all_pass,
    });
    let path = cli.out_dir.join("verify_summary.json");
    write_json(&path, &summary)?;
    if all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failing report: {}", path.display());
        Ok(ExitCode::from(1))
    }
}

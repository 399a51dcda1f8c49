//! Command-line front end: parse problem files, run the simulate /
//! certify / verify / stationary / oracle / sweep workflows, and emit
//! CSV and text reports with stable schemas.
//!
//! Exit codes: 0 success, 2 parse/validation/manifest errors, 3 solver
//! failures, 4 audit violations (the report is still written).

use beamlab::*;
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "beamlab",
    version,
    about = "Damped hinged-beam simulation lab with exponential-decay certificates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Problem file (line-based `key = value` with [section] headers).
    problem: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override a problem key after parsing, e.g. --set damping.a=0.2
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the time integrator and write the trajectory CSV.
    Simulate(ProblemArgs),
    /// Evaluate the decay-certificate constant chain.
    Certify(ProblemArgs),
    /// Audit a trajectory CSV against a certificate report.
    Verify {
        /// Trajectory CSV produced by `simulate`.
        trajectory: PathBuf,
        /// Certificate CSV produced by `certify`.
        certificate: PathBuf,
        /// Relative audit tolerance.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        /// Optional directory for the audit report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the stationary problem; optionally chain a simulation and
    /// audit the convergence to the stationary solution.
    Stationary {
        #[command(flatten)]
        common: ProblemArgs,
        /// Also simulate the dynamic problem and write the convergence report.
        #[arg(long)]
        simulate: bool,
        /// Stationary Newton residual tolerance.
        #[arg(long, default_value_t = 1e-10)]
        newton_tol: f64,
    },
    /// Compare the integrator against the linear modal oracle over a
    /// sequence of halved time steps.
    Oracle {
        #[command(flatten)]
        common: ProblemArgs,
        /// Number of dt halvings after the base run.
        #[arg(long, default_value_t = 1)]
        dt_halvings: u32,
    },
    /// Run a family of problems and tabulate certified vs fitted rates.
    Sweep {
        #[command(flatten)]
        common: ProblemArgs,
        /// Parameter range, e.g. --range damping.m=2,3,4 (repeatable;
        /// ranges combine as a cartesian product in flag order).
        #[arg(long = "range", value_name = "SECTION.KEY=V1,V2,...")]
        ranges: Vec<String>,
    },
}

enum Failure {
    /// Parse, validation, or manifest errors -> exit 2.
    Usage(String),
    /// Integrator or stationary solver failures -> exit 3.
    Solver(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Solver(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Solver(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(err: E) -> Failure {
    Failure::Usage(err.to_string())
}

fn solver<E: std::fmt::Display>(err: E) -> Failure {
    Failure::Solver(err.to_string())
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            failure.code()
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Certify(args) => cmd_certify(&args),
        Command::Verify {
            trajectory,
            certificate,
            tol,
            out,
        } => cmd_verify(&trajectory, &certificate, tol, out.as_deref()),
        Command::Stationary {
            common,
            simulate,
            newton_tol,
        } => cmd_stationary(&common, simulate, newton_tol),
        Command::Oracle {
            common,
            dt_halvings,
        } => cmd_oracle(&common, dt_halvings),
        Command::Sweep { common, ranges } => cmd_sweep(&common, &ranges),
    }
}

struct LoadedProblem {
    problem: ValidatedProblem,
    resolved: Vec<(String, String)>,
    problem_sha256: String,
    data_digests: Vec<(PathBuf, String)>,
}

fn load_problem(path: &Path, overrides: &[String]) -> Result<LoadedProblem, Failure> {
    let mut file = parse_problem_file(path).map_err(usage)?;
    for spec in overrides {
        file.apply_override(spec).map_err(usage)?;
    }
    let built = file.build().map_err(usage)?;
    let problem_sha256 = sha256_file(path).map_err(usage)?;
    let mut data_digests = Vec::new();
    for data in &built.loaded_files {
        data_digests.push((data.clone(), sha256_file(data).map_err(usage)?));
    }
    Ok(LoadedProblem {
        problem: built.problem,
        resolved: file.resolved(),
        problem_sha256,
        data_digests,
    })
}

fn sha256_file(path: &Path) -> Result<String, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct ManifestInfo<'a> {
    command: &'a str,
    problem_file: &'a Path,
    loaded: &'a LoadedProblem,
    outputs: Vec<String>,
    steps: usize,
    wall_clock: f64,
}

fn write_manifest(dir: &Path, info: &ManifestInfo) -> Result<(), Failure> {
    let mut out = String::from("[manifest]\n");
    let _ = writeln!(out, "command = {}", info.command);
    let _ = writeln!(out, "problem_file = {}", info.problem_file.display());
    let _ = writeln!(out, "problem_sha256 = {}", info.loaded.problem_sha256);
    let _ = writeln!(
        out,
        "fingerprint = {:016x}",
        info.loaded.problem.fingerprint()
    );
    for (path, digest) in &info.loaded.data_digests {
        let _ = writeln!(out, "data_file = {} sha256={digest}", path.display());
    }
    for o in &info.outputs {
        let _ = writeln!(out, "output = {o}");
    }
    let _ = writeln!(out, "steps = {}", info.steps);
    let _ = writeln!(out, "wall_clock_seconds = {:.3}", info.wall_clock);
    out.push_str("[resolved]\n");
    for (key, value) in &info.loaded.resolved {
        let _ = writeln!(out, "{key} = {value}");
    }
    write_file(&dir.join("manifest.txt"), &out)
}

fn write_file(path: &Path, content: &str) -> Result<(), Failure> {
    std::fs::write(path, content)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn manifest_fingerprint(beside: &Path) -> Result<String, Failure> {
    let dir = beside.parent().unwrap_or(Path::new("."));
    let path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Failure::Usage(format!(
            "missing manifest next to {}: {} ({e})",
            beside.display(),
            path.display()
        ))
    })?;
    for line in text.lines() {
        if let Some((key, value)) = line.split_once('=') {
            if key.trim() == "fingerprint" {
                return Ok(value.trim().to_string());
            }
        }
    }
    Err(Failure::Usage(format!(
        "{}: no fingerprint entry",
        path.display()
    )))
}

fn cmd_simulate(args: &ProblemArgs) -> Result<i32, Failure> {
    let loaded = load_problem(&args.problem, &args.set)?;
    ensure_out(&args.out)?;
    let start = Instant::now();
    let traj = simulate(&loaded.problem).map_err(solver)?;
    let wall = start.elapsed().as_secs_f64();
    write_file(
        &args.out.join("trajectory.csv"),
        &report::trajectory_csv(&traj),
    )?;
    write_manifest(
        &args.out,
        &ManifestInfo {
            command: "simulate",
            problem_file: &args.problem,
            loaded: &loaded,
            outputs: vec!["trajectory.csv".into()],
            steps: traj.steps().len(),
            wall_clock: wall,
        },
    )?;
    println!(
        "simulate: {} steps, {} records -> {}",
        traj.steps().len(),
        traj.records().len(),
        args.out.join("trajectory.csv").display()
    );
    Ok(0)
}

fn certificate_for(loaded: &LoadedProblem) -> Result<Certificate, Failure> {
    let problem = &loaded.problem;
    let op = assemble_biharmonic(problem.grid());
    let init = problem.initial();
    let state = State {
        t: 0.0,
        u: init.u0.clone(),
        v: init.u1.clone(),
    };
    let e0 = energy(&state, &op);
    compute_certificate(problem, e0, &discrete_constants(problem.grid())).map_err(usage)
}

fn cmd_certify(args: &ProblemArgs) -> Result<i32, Failure> {
    let loaded = load_problem(&args.problem, &args.set)?;
    ensure_out(&args.out)?;
    let start = Instant::now();
    let cert = certificate_for(&loaded)?;
    let wall = start.elapsed().as_secs_f64();
    write_file(
        &args.out.join("certificate.txt"),
        &report::certificate_text(&cert),
    )?;
    write_file(
        &args.out.join("certificate.csv"),
        &report::certificate_csv(&cert),
    )?;
    write_manifest(
        &args.out,
        &ManifestInfo {
            command: "certify",
            problem_file: &args.problem,
            loaded: &loaded,
            outputs: vec!["certificate.txt".into(), "certificate.csv".into()],
            steps: 0,
            wall_clock: wall,
        },
    )?;
    println!("r = {}", report::fmt_float(cert.rate));
    Ok(0)
}

fn cmd_verify(
    trajectory: &Path,
    certificate: &Path,
    tol: f64,
    out: Option<&Path>,
) -> Result<i32, Failure> {
    let traj_fp = manifest_fingerprint(trajectory)?;
    let cert_fp = manifest_fingerprint(certificate)?;
    if traj_fp != cert_fp {
        return Err(Failure::Usage(format!(
            "manifest mismatch: trajectory fingerprint {traj_fp} vs certificate fingerprint {cert_fp}"
        )));
    }
    let traj_text = std::fs::read_to_string(trajectory)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", trajectory.display())))?;
    let records = report::parse_trajectory_csv(&traj_text).map_err(usage)?;
    let cert_text = std::fs::read_to_string(certificate)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", certificate.display())))?;
    let cert = report::parse_certificate_csv(&cert_text).map_err(usage)?;
    let audit = audit_records(&records, &cert, tol).map_err(usage)?;
    let text = report::audit_text(&audit, tol);
    print!("{text}");
    if let Some(dir) = out {
        ensure_out(dir)?;
        write_file(&dir.join("audit.txt"), &text)?;
    }
    Ok(if audit.passed { 0 } else { 4 })
}

fn cmd_stationary(args: &ProblemArgs, run_simulation: bool, tol: f64) -> Result<i32, Failure> {
    let loaded = load_problem(&args.problem, &args.set)?;
    ensure_out(&args.out)?;
    let problem = &loaded.problem;
    let op = assemble_biharmonic(problem.grid());
    let start = Instant::now();
    let sol = solve_stationary(problem, &op, tol).map_err(solver)?;
    write_file(
        &args.out.join("u_hat.txt"),
        &report::vector_dump(&sol.u_hat),
    )?;
    let mut summary = format!(
        "residual_norm = {}\nnewton_iterations = {}\n",
        report::fmt_float(sol.residual_norm),
        sol.newton_iterations
    );
    for (i, r) in sol.residual_history.iter().enumerate() {
        let _ = writeln!(summary, "residual[{i}] = {}", report::fmt_float(*r));
    }
    write_file(&args.out.join("stationary.txt"), &summary)?;
    let mut outputs = vec!["u_hat.txt".into(), "stationary.txt".into()];
    let mut steps = 0;
    let mut exit = 0;

    if run_simulation {
        let traj = simulate_with_operator(problem, &op).map_err(solver)?;
        steps = traj.steps().len();
        write_file(
            &args.out.join("trajectory.csv"),
            &report::trajectory_csv(&traj),
        )?;
        outputs.push("trajectory.csv".into());
        let cert = shifted_certificate(problem, &sol, &op).map_err(usage)?;
        let convergence = convergence_check(&traj, &sol, &cert, &op).map_err(usage)?;
        write_file(
            &args.out.join("convergence.csv"),
            &report::convergence_csv(&convergence),
        )?;
        outputs.push("convergence.csv".into());
        let mut text = String::new();
        let _ = writeln!(text, "certified_rate = {}", report::fmt_float(cert.rate));
        match &convergence.difference_rate {
            Some(fit) => {
                let _ = writeln!(text, "h2star_diff_rate = {}", report::fmt_float(fit.rate));
            }
            None => text.push_str("h2star_diff_rate = none (series not fittable)\n"),
        }
        match &convergence.velocity_rate {
            Some(fit) => {
                let _ = writeln!(text, "l2_v_rate = {}", report::fmt_float(fit.rate));
            }
            None => text.push_str("l2_v_rate = none (series not fittable)\n"),
        }
        text.push_str(&report::audit_text(&convergence.audit, 0.05));
        write_file(&args.out.join("convergence.txt"), &text)?;
        outputs.push("convergence.txt".into());
        print!("{text}");
        if !convergence.audit.passed {
            exit = 4;
        }
    } else {
        println!(
            "stationary: residual {} in {} iterations",
            report::fmt_float(sol.residual_norm),
            sol.newton_iterations
        );
    }

    write_manifest(
        &args.out,
        &ManifestInfo {
            command: "stationary",
            problem_file: &args.problem,
            loaded: &loaded,
            outputs,
            steps,
            wall_clock: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(exit)
}

fn cmd_oracle(args: &ProblemArgs, halvings: u32) -> Result<i32, Failure> {
    let loaded = load_problem(&args.problem, &args.set)?;
    ensure_out(&args.out)?;
    let problem = &loaded.problem;
    let op = assemble_biharmonic(problem.grid());
    let start = Instant::now();
    let rows = dt_order_study(problem, &op, halvings).map_err(|e| match e {
        beamlab::oracle::OracleStudyError::Solver(s) => solver(s),
        other => usage(other),
    })?;
    let csv = report::oracle_csv(&rows);
    write_file(&args.out.join("oracle.csv"), &csv)?;
    write_manifest(
        &args.out,
        &ManifestInfo {
            command: "oracle",
            problem_file: &args.problem,
            loaded: &loaded,
            outputs: vec!["oracle.csv".into()],
            steps: 0,
            wall_clock: start.elapsed().as_secs_f64(),
        },
    )?;
    print!("{csv}");
    Ok(0)
}

struct SweepEntry {
    overrides: Vec<String>,
}

fn expand_ranges(ranges: &[String]) -> Result<Vec<SweepEntry>, Failure> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for range in ranges {
        let Some((key, values)) = range.split_once('=') else {
            return Err(Failure::Usage(format!(
                "range {range:?} is not of the form section.key=v1,v2,..."
            )));
        };
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.is_empty() || values.iter().any(|v| v.is_empty()) {
            return Err(Failure::Usage(format!("range {range:?} has empty values")));
        }
        axes.push((key.trim().to_string(), values));
    }
    let mut entries = vec![SweepEntry {
        overrides: Vec::new(),
    }];
    for (key, values) in &axes {
        let mut next = Vec::with_capacity(entries.len() * values.len());
        for entry in &entries {
            for value in values {
                let mut overrides = entry.overrides.clone();
                overrides.push(format!("{key}={value}"));
                next.push(SweepEntry { overrides });
            }
        }
        entries = next;
    }
    Ok(entries)
}

struct SweepRow {
    m: f64,
    a1: f64,
    a2: f64,
    n: usize,
    dt: f64,
    r_certified: f64,
    r_fitted: f64,
}

fn run_sweep_entry(
    path: &Path,
    base_overrides: &[String],
    entry: &SweepEntry,
) -> Result<SweepRow, Failure> {
    let mut overrides = base_overrides.to_vec();
    overrides.extend(entry.overrides.iter().cloned());
    let loaded = load_problem(path, &overrides)?;
    let problem = &loaded.problem;
    let cert = certificate_for(&loaded)?;
    let traj = simulate(problem).map_err(solver)?;
    let fit = fit_decay_rate(&traj.energy_series(), tail_window(problem.config().t_end))
        .map_err(usage)?;
    Ok(SweepRow {
        m: problem.damping().m,
        a1: problem.damping().a1,
        a2: problem.damping().a2,
        n: problem.grid().subdivisions(),
        dt: problem.config().dt,
        r_certified: cert.rate,
        r_fitted: fit.rate,
    })
}

fn cmd_sweep(args: &ProblemArgs, ranges: &[String]) -> Result<i32, Failure> {
    let entries = expand_ranges(ranges)?;
    ensure_out(&args.out)?;
    let start = Instant::now();

    // entries are independent (no shared mutable state in the solver);
    // run them on a small thread pool and merge rows in input order
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(entries.len().max(1));
    let results: Vec<Result<SweepRow, Failure>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk_start in 0..workers {
            let entries = &entries;
            let args_ref = &args;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut idx = chunk_start;
                while idx < entries.len() {
                    out.push((
                        idx,
                        run_sweep_entry(&args_ref.problem, &args_ref.set, &entries[idx]),
                    ));
                    idx += workers;
                }
                out
            }));
        }
        let mut collected: Vec<Option<Result<SweepRow, Failure>>> =
            (0..entries.len()).map(|_| None).collect();
        for handle in handles {
            for (idx, res) in handle.join().expect("sweep worker panicked") {
                collected[idx] = Some(res);
            }
        }
        collected
            .into_iter()
            .map(|r| r.expect("all indices filled"))
            .collect()
    });

    let mut csv = String::from("m,a1,a2,N,dt,r_certified,r_fitted\n");
    for (i, result) in results.into_iter().enumerate() {
        let row = result.map_err(|f| {
            Failure::Usage(format!(
                "sweep entry {i} ({:?}): {}",
                entries[i].overrides,
                f.message()
            ))
        })?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            report::fmt_float(row.m),
            report::fmt_float(row.a1),
            report::fmt_float(row.a2),
            row.n,
            report::fmt_float(row.dt),
            report::fmt_float(row.r_certified),
            report::fmt_float(row.r_fitted)
        );
    }
    write_file(&args.out.join("sweep.csv"), &csv)?;

    // manifest records the template digest; per-entry parameters are in the rows
    let loaded = load_problem(&args.problem, &args.set)?;
    write_manifest(
        &args.out,
        &ManifestInfo {
            command: "sweep",
            problem_file: &args.problem,
            loaded: &loaded,
            outputs: vec!["sweep.csv".into()],
            steps: 0,
            wall_clock: start.elapsed().as_secs_f64(),
        },
    )?;
    print!("{csv}");
    Ok(0)
}

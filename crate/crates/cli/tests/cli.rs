//! End-to-end tests driving the compiled binary: exit-code contract,
//! output schemas, byte stability, and the chained workflows.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beamlab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_problem(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const LINEAR_SHORT: &str = "\
[domain]
c = 0.0
d = 3.141592653589793
[grid]
n = 64
[damping]
m = 2.0
a = 0.1
[initial]
u0 = sine k=1 amp=1.0
u1 = zero
[time]
dt = 1e-3
T = 10.0
output_stride = 10
";

#[test]
fn simulate_writes_monotone_energy_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(tmp.path(), "linear.problem", LINEAR_SHORT);
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "simulate",
        problem.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,E,H,dissipation,l2_u,h2star_u,l2_v,sup_u,newton_iters"
    );
    let energies: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(energies.len() > 100);
    for pair in energies.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-11);
    }
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = simulate"));
    assert!(manifest.contains("fingerprint = "));
    assert!(manifest.contains("damping.a = 0.1"));
}

#[test]
fn simulate_is_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(tmp.path(), "linear.problem", LINEAR_SHORT);
    let (d1, d2) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&d1, &d2] {
        let out = run(&[
            "simulate",
            problem.to_str().unwrap(),
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let a = fs::read(d1.join("trajectory.csv")).unwrap();
    let b = fs::read(d2.join("trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_hypothesis_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(
        tmp.path(),
        "bad.problem",
        &LINEAR_SHORT.replace("m = 2.0", "m = 1.5"),
    );
    let out = run(&[
        "simulate",
        problem.to_str().unwrap(),
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("m >= 2"), "{err}");
}

#[test]
fn missing_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        tmp.path().join("nope.problem").to_str().unwrap(),
        "--out",
        tmp.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certify_reports_the_worked_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(tmp.path(), "linear.problem", LINEAR_SHORT);
    let out_dir = tmp.path().join("cert");
    let out = run(&[
        "certify",
        problem.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    let value: f64 = line.trim().strip_prefix("r = ").unwrap().parse().unwrap();
    assert!((value - 0.0621118).abs() < 1e-3, "r = {value}");
    let text = fs::read_to_string(out_dir.join("certificate.txt")).unwrap();
    assert!(text.contains("eps = "));
    assert!(text.contains("prefactor = "));
    let csv = fs::read_to_string(out_dir.join("certificate.csv")).unwrap();
    assert!(csv.starts_with("constant,value,formula"));
}

#[test]
fn certify_rejects_restoring_term_and_zero_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cubic = write_problem(
        tmp.path(),
        "cubic.problem",
        &LINEAR_SHORT.replace(
            "[initial]",
            "[restoring]\nkind = odd-power\nlambda = 1.0\np = 3\n[initial]",
        ),
    );
    let out = run(&[
        "certify",
        cubic.to_str().unwrap(),
        "--out",
        tmp.path().join("c1").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("G = 0"), "{}", stderr(&out));

    let zero = write_problem(
        tmp.path(),
        "zero.problem",
        &LINEAR_SHORT.replace("u0 = sine k=1 amp=1.0", "u0 = zero"),
    );
    let out = run(&[
        "certify",
        zero.to_str().unwrap(),
        "--out",
        tmp.path().join("c2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("E(0) = 0"), "{}", stderr(&out));
}

#[test]
fn verify_chain_passes_and_corruption_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(tmp.path(), "linear.problem", LINEAR_SHORT);
    let sim_dir = tmp.path().join("sim");
    let cert_dir = tmp.path().join("cert");
    assert!(run(&[
        "simulate",
        problem.to_str().unwrap(),
        "--out",
        sim_dir.to_str().unwrap(),
    ])
    .status
    .success());
    assert!(run(&[
        "certify",
        problem.to_str().unwrap(),
        "--out",
        cert_dir.to_str().unwrap(),
    ])
    .status
    .success());

    let traj = sim_dir.join("trajectory.csv");
    let cert = cert_dir.join("certificate.csv");
    let audit_dir = tmp.path().join("audit");
    let out = run(&[
        "verify",
        traj.to_str().unwrap(),
        cert.to_str().unwrap(),
        "--out",
        audit_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = fs::read_to_string(audit_dir.join("audit.txt")).unwrap();
    assert_eq!(report.matches(": PASS (worst margin").count(), 4);
    assert!(report.contains("overall: PASS"));

    // corrupt: rebuild the energy column as a borderline envelope times
    // e^{+0.01 t}, which must trip the energy-envelope check
    let cert_text = fs::read_to_string(&cert).unwrap();
    let constant = |name: &str| -> f64 {
        cert_text
            .lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .and_then(|l| l.split(',').nth(1))
            .unwrap()
            .parse()
            .unwrap()
    };
    let (rate, prefactor) = (constant("r"), constant("prefactor"));
    let csv = fs::read_to_string(&traj).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap().to_string();
    let mut h0: Option<f64> = None;
    let mut corrupted = vec![header];
    for line in lines {
        let mut cols: Vec<String> = line.split(',').map(str::to_string).collect();
        let t: f64 = cols[0].parse().unwrap();
        let h = h0.get_or_insert_with(|| cols[2].parse().unwrap());
        let energy = prefactor * *h * ((0.01 - rate) * t).exp();
        cols[1] = format!("{energy:.16e}");
        corrupted.push(cols.join(","));
    }
    let bad_dir = tmp.path().join("bad");
    fs::create_dir_all(&bad_dir).unwrap();
    fs::write(bad_dir.join("trajectory.csv"), corrupted.join("\n") + "\n").unwrap();
    fs::copy(sim_dir.join("manifest.txt"), bad_dir.join("manifest.txt")).unwrap();

    let out = run(&[
        "verify",
        bad_dir.join("trajectory.csv").to_str().unwrap(),
        cert.to_str().unwrap(),
        "--out",
        tmp.path().join("audit2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let text = stdout(&out);
    assert!(text.contains("check energy-envelope: FAIL"), "{text}");
    assert!(text.contains("first violation"), "{text}");
}

#[test]
fn verify_rejects_mismatched_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let p1 = write_problem(tmp.path(), "p1.problem", LINEAR_SHORT);
    let p2 = write_problem(
        tmp.path(),
        "p2.problem",
        &LINEAR_SHORT.replace("a = 0.1", "a = 0.2"),
    );
    let (sim, cert) = (tmp.path().join("sim"), tmp.path().join("cert"));
    assert!(run(&[
        "simulate",
        p1.to_str().unwrap(),
        "--out",
        sim.to_str().unwrap()
    ])
    .status
    .success());
    assert!(run(&[
        "certify",
        p2.to_str().unwrap(),
        "--out",
        cert.to_str().unwrap()
    ])
    .status
    .success());
    let out = run(&[
        "verify",
        sim.join("trajectory.csv").to_str().unwrap(),
        cert.join("certificate.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("manifest mismatch"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn overrides_are_applied_and_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(tmp.path(), "linear.problem", LINEAR_SHORT);
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "simulate",
        problem.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--set",
        "grid.n=32",
        "--set",
        "time.T=1.0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("grid.n = 32"));
    assert!(manifest.contains("time.T = 1.0"));
    assert!(manifest.contains("steps = 1000"));
}

#[test]
fn stationary_with_simulation_audits_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(
        tmp.path(),
        "forced.problem",
        "\
[domain]
c = 0.0
d = 3.141592653589793
[grid]
n = 32
[damping]
m = 2.0
a = 0.1
[forcing]
kind = static
profile = sine k=1 amp=1.0
[initial]
u0 = zero
u1 = zero
[time]
dt = 1e-3
T = 30.0
newton_tol = 1e-10
output_stride = 10
",
    );
    let out_dir = tmp.path().join("st");
    let out = run(&[
        "stationary",
        problem.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--simulate",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let u_hat = fs::read_to_string(out_dir.join("u_hat.txt")).unwrap();
    assert_eq!(u_hat.lines().count(), 31);
    let convergence = fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert!(convergence.starts_with("t,h2star_diff,l2_v"));
    let text = stdout(&out);
    assert!(text.contains("overall: PASS"), "{text}");
}

#[test]
fn stationary_cubic_writes_residual_history() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(
        tmp.path(),
        "cubic.problem",
        "\
[domain]
c = 0.0
d = 3.141592653589793
[grid]
n = 64
[damping]
m = 2.0
a = 0.1
[restoring]
kind = odd-power
lambda = 1.0
p = 3
[forcing]
kind = static
profile = sine k=1 amp=1.0
[initial]
u0 = zero
u1 = zero
[time]
dt = 1e-3
T = 1.0
",
    );
    let out_dir = tmp.path().join("st");
    let out = run(&[
        "stationary",
        problem.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary = fs::read_to_string(out_dir.join("stationary.txt")).unwrap();
    assert!(summary.contains("residual_norm = "));
    assert!(summary.contains("residual[0]"));
}

#[test]
fn oracle_table_shows_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(
        tmp.path(),
        "linear.problem",
        &LINEAR_SHORT.replace("T = 10.0", "T = 2.0"),
    );
    let out_dir = tmp.path().join("oracle");
    let out = run(&[
        "oracle",
        problem.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--dt-halvings",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("oracle.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "dt,max_l2_error,max_h2star_error,observed_order"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    let order: f64 = rows[1].split(',').nth(3).unwrap().parse().unwrap();
    assert!((1.9..=2.1).contains(&order), "order {order}");
}

#[test]
fn sweep_rows_in_input_order_with_certified_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = write_problem(tmp.path(), "linear.problem", LINEAR_SHORT);
    let out_dir = tmp.path().join("sweep");
    let out = run(&[
        "sweep",
        problem.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--range",
        "damping.m=2,3,4",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "m,a1,a2,N,dt,r_certified,r_fitted");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (row, expected_m) in rows.iter().zip([2.0, 3.0, 4.0]) {
        assert_eq!(row[0], expected_m);
        let (r_cert, r_fit) = (row[5], row[6]);
        assert!(r_fit >= r_cert, "m={expected_m}: {r_fit} < {r_cert}");
    }
}

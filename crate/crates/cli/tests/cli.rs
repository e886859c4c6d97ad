use std::fs;
use std::path::Path;
use std::process::Command;

use vacuumflow_cli::{dispatch, EXIT_ABORTED, EXIT_CONFIG, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("vacuumflow").chain(args.iter().copied());
    let code = dispatch(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const ZERO: &str = "gamma = 1.5\nmu = 1\ndelta = 1\nalpha0 = 1\nalpha1 = 4\ntau_end = 0.05\nN = 32\n\
                    a_eta = 0\na_v = 0\na_q = 0\nsnapshot_every = 10\n";

const SMALL: &str = "# small perturbation\ngamma = 1.5\nmu = 1\ndelta = 1\nalpha0 = 1\nalpha1 = 2\n\
                     tau_end = 0.03\nN = 32\na_eta = 0.01\na_v = 0.005\na_q = 0.01\nsnapshot_every = 10\n";

#[test]
fn indices_row_for_three_halves() {
    let (code, out, _) = run(&["indices", "--gamma", "1.5"]);
    assert_eq!(code, EXIT_OK);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("gamma,I0,I1,I2,case,r1,sigma1"));
    assert!(lines.next().unwrap().starts_with("1.5,true,true,true,3,"));
}

#[test]
fn unknown_subcommand_prints_usage() {
    let (code, _, err) = run(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("Usage"), "{err}");
    let (code, _, _) = run(&[]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn zero_run_round_trip_through_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.cfg", ZERO);
    let (code, out, err) = run(&["simulate", "--config", &cfg]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("status = completed"));
    let rec = dir.path().join("zero.run");
    let series = fs::read_to_string(rec.join("series.csv")).unwrap();
    for line in series.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert!(v[3..9].iter().all(|&x| x == 0.0), "{line}");
    }
    let status = fs::read_to_string(rec.join("status.txt")).unwrap();
    assert!(status.starts_with("vacuumflow-record-1\nstatus = completed"));

    let (code, out, err) = run(&["diagnose", "--run", rec.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    for name in ["E0", "E1", "D0", "D1"] {
        assert!(out.contains(&format!("{name} = 0.000000e0")), "{out}");
    }
    assert!(rec.join("energy.csv").exists());
    let decay = fs::read_to_string(rec.join("decay.csv")).unwrap();
    assert!(decay.starts_with("quantity,fitted_exponent"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "gamma = 0.9\n");
    let (code, _, err) = run(&["simulate", "--config", &cfg]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("gamma must exceed 1 (line 1)"), "{err}");

    let cfg = write_config(dir.path(), "missing.cfg", "gamma = 1.5\n");
    let (code, _, err) = run(&["simulate", "--config", &cfg]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("mu"), "{err}");

    let (code, _, _) = run(&["diagnose", "--run", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn unstable_step_aborts_with_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replace("tau_end = 0.03", "tau_end = 2\ndtau = 0.5");
    let cfg = write_config(dir.path(), "wild.cfg", &body);
    let (code, out, _) = run(&["simulate", "--config", &cfg]);
    assert_eq!(code, EXIT_ABORTED, "{out}");
    assert!(out.contains("status = aborted"));
    assert!(dir.path().join("wild.run/status.txt").exists());
}

#[test]
fn selfsim_writes_both_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ss");
    let (code, out, err) = run(&[
        "selfsim", "--gamma", "1.6666666666666667", "--alpha1", "0", "--end", "5", "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("beta1"));
    let alpha = fs::read_to_string(out_dir.join("alpha.csv")).unwrap();
    assert!(alpha.starts_with("time,alpha,alpha_prime,invariant\n"));
    let prof = fs::read_to_string(out_dir.join("profile.csv")).unwrap();
    assert!(prof.starts_with("x,rho_bar,p_bar,s\n"));

    let (code, _, _) = run(&["selfsim", "--gamma", "1.5", "--coord", "s", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn sweep_output_is_independent_of_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.cfg", SMALL);
    let serial = dir.path().join("serial");
    let parallel = dir.path().join("parallel");
    let vary = ["--vary", "alpha1=1,2", "--vary", "a_eta=0.01,0.002"];
    let mut args = vec!["sweep", "--config", &cfg, "--threads", "1", "--out", serial.to_str().unwrap()];
    args.extend(vary);
    let (code, _, err) = run(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    let mut args = vec!["sweep", "--config", &cfg, "--threads", "4", "--out", parallel.to_str().unwrap()];
    args.extend(vary);
    let (code, _, err) = run(&args);
    assert_eq!(code, EXIT_OK, "{err}");

    let a = tree(&serial);
    let b = tree(&parallel);
    assert_eq!(a.len(), b.len());
    assert_eq!(a, b);
    let summary = String::from_utf8(a.iter().find(|(n, _)| n == "summary.csv").unwrap().1.clone()).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.starts_with("run,alpha1,a_eta,status,"));
}

#[test]
fn sweep_rejects_bad_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.cfg", SMALL);
    let out = dir.path().join("o");
    let (code, _, err) = run(&["sweep", "--config", &cfg, "--vary", "dtau=-1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(err.contains("dtau"), "{err}");
}

#[test]
fn binary_honours_thread_cap_and_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_vacuumflow");
    let st = Command::new(exe).args(["indices", "--gamma", "1.2", "2.0"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    let text = String::from_utf8(st.stdout).unwrap();
    assert!(text.contains("\n2,true,true,false,2,"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "base.cfg", SMALL);
    let st = Command::new(exe)
        .env("VACUUMFLOW_THREADS", "1")
        .args(["sweep", "--config", &cfg, "--vary", "mu=1,2", "--out"])
        .arg(dir.path().join("s"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(dir.path().join("s/run_001/series.csv").exists());

    let st = Command::new(exe).arg("bogus").output().unwrap();
    assert_eq!(st.status.code(), Some(1));
}

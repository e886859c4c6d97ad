//! Subcommand dispatch for the `vacuumflow` binary.
//!
//! Exit codes: 0 success, 1 usage, 2 bad configuration or unreadable input,
//! 3 a run that stopped before `tau_end`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use vacuumflow::config::{parse_config, RunConfig};
use vacuumflow::diagnostics::{
    decay_fit, energy_report, entropy_monitor, q_field, DecayQuantity, EnergyReport,
};
use vacuumflow::indices::{central_witness, regime, Case, I0, I1, I2};
use vacuumflow::profiles::{build_density_profile, entropy_profile, pressure_profile, profile_csv, DensityKind};
use vacuumflow::record::{read_run_record, simulate, write_run_record, RunRecord};
use vacuumflow::selfsim::{asymptote_check, integrate_alpha_t, integrate_alpha_tau, SelfSimParams};
use vacuumflow::solver::{RunStatus, Solver};
use vacuumflow::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;

/// Nodes with `x` below this are left out of the interior `q` bound.
const Q_INTERIOR_X: f64 = 0.05;

/// Environment variable capping the number of concurrent sweep runs.
pub const THREADS_ENV: &str = "VACUUMFLOW_THREADS";

#[derive(Parser, Debug)]
#[command(name = "vacuumflow", version, about = "Expanding viscous gas flows near vacuum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the expansion rate and write it with the background profile.
    Selfsim(SelfsimArgs),
    /// Print the admissible-regime table for one or more adiabatic exponents.
    Indices(IndicesArgs),
    /// Run the perturbation solver and store a run record.
    Simulate(SimulateArgs),
    /// Compute energy functionals and decay fits for a stored run.
    Diagnose(DiagnoseArgs),
    /// Run a grid of configurations concurrently.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SelfsimArgs {
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha0: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha1: f64,
    /// Integration horizon in the chosen time coordinate.
    #[arg(long, default_value_t = 10.0)]
    end: f64,
    /// `t` for physical time, `tau` for rescaled time.
    #[arg(long, default_value = "t")]
    coord: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value = "entropy_bounded")]
    profile: String,
    /// Defaults to 1/(gamma-1).
    #[arg(long)]
    varrho: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    c_nu: f64,
    #[arg(long, default_value_t = 0.0)]
    s_bar: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IndicesArgs {
    #[arg(long, num_args = 1.., required = true)]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    grid: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Record directory; defaults to `<config stem>.run` beside the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long)]
    run: PathBuf,
    /// Where to write energy.csv and decay.csv; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tolerance for reporting negative entropy increments.
    #[arg(long, default_value_t = 1e-10)]
    entropy_tol: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=v1,v2,...`; repeat for a Cartesian product.
    #[arg(long, required = true)]
    vary: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Worker count, further capped by VACUUMFLOW_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

enum Failure {
    Config(String),
    Aborted(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `argv` (program name first) and runs the subcommand, writing
/// reports to `out` and errors to `err`.
pub fn dispatch<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Selfsim(a) => cmd_selfsim(a, out),
        Command::Indices(a) => cmd_indices(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Diagnose(a) => cmd_diagnose(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Aborted(m)) => {
            let _ = writeln!(err, "run aborted: {m}");
            EXIT_ABORTED
        }
    }
}

fn cmd_selfsim(a: SelfsimArgs, out: &mut dyn Write) -> Outcome {
    let params = SelfSimParams::new(a.delta, a.gamma, a.alpha0, a.alpha1)?;
    let traj = match a.coord.as_str() {
        "t" => integrate_alpha_t(params, a.end, a.tol)?,
        "tau" => integrate_alpha_tau(params, a.end, a.tol)?,
        other => return Err(Failure::Config(format!("coord must be `t` or `tau`, got `{other}`"))),
    };
    let kind: DensityKind = a
        .profile
        .parse()
        .map_err(|_| Failure::Config(format!("unknown profile `{}`", a.profile)))?;
    let varrho = a.varrho.unwrap_or(1.0 / (a.gamma - 1.0));
    let density = build_density_profile(kind, varrho, a.scale, a.gamma, a.n)?;
    let pressure = pressure_profile(&density, a.delta)?;
    let entropy = entropy_profile(&density, &pressure, a.c_nu, a.s_bar, a.gamma)?;

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("alpha.csv"), traj.to_csv())?;
    fs::write(a.out.join("profile.csv"), profile_csv(&density, &pressure, &entropy))?;

    let _ = writeln!(out, "beta1 = {:.6e}", traj.beta1);
    let _ = writeln!(out, "beta2 = {:.6e}", traj.beta2);
    let _ = writeln!(out, "invariant drift = {:.3e}", traj.max_invariant_drift());
    if a.coord == "t" {
        match asymptote_check(&traj) {
            Ok(asy) => {
                let _ = writeln!(out, "asymptote c1 = {:.6e}, c2 = {:.6e}", asy.c1, asy.c2);
            }
            Err(e) => {
                let _ = writeln!(out, "asymptote: {e}");
            }
        }
    }
    let _ = writeln!(out, "profile mass = {:.6e}", density.mass);
    let _ = writeln!(out, "entropy bounded = {}", entropy.bounded);
    let _ = writeln!(out, "wrote {}", a.out.display());
    Ok(())
}

/// Regime table: interval membership, the strongest case with a lattice
/// witness and that witness.
pub fn indices_table(gammas: &[f64], grid: usize) -> vacuumflow::Result<String> {
    let mut s = String::from("gamma,I0,I1,I2,case,r1,sigma1\n");
    for &g in gammas {
        let reg = regime(g);
        let mut found = None;
        for case in [Case::Three, Case::Two, Case::One] {
            if let Some(w) = central_witness(g, case, grid)? {
                found = Some((case, w));
                break;
            }
        }
        let _ = write!(s, "{g},{},{},{},", reg.i0, reg.i1, reg.i2);
        match found {
            Some((case, (r1, sigma1))) => {
                let _ = writeln!(s, "{},{r1},{sigma1}", case.number());
            }
            None => s.push_str("none,,\n"),
        }
    }
    Ok(s)
}

fn cmd_indices(a: IndicesArgs, out: &mut dyn Write) -> Outcome {
    let table = indices_table(&a.gamma, a.grid)?;
    let _ = write!(out, "{table}");
    let _ = writeln!(
        out,
        "# I0 = ({:.6}, inf), I1 = ({:.6}, {:.6}), I2 = ({:.6}, {:.6})",
        I0.0, I1.0, I1.1, I2.0, I2.1
    );
    Ok(())
}

fn load_config(path: &Path) -> std::result::Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn default_run_dir(config: &Path) -> PathBuf {
    let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    config.with_file_name(format!("{stem}.run"))
}

fn run_summary(rec: &RunRecord) -> String {
    let mut s = String::new();
    let last = rec.series.last();
    let _ = writeln!(s, "status = {}", rec.status.as_str());
    let _ = writeln!(s, "steps = {}", rec.series.len().saturating_sub(1));
    if let Some(r) = last {
        let _ = writeln!(s, "tau = {:.6e}", r.tau);
        let _ = writeln!(s, "alpha = {:.6e}", r.alpha);
        let _ = writeln!(s, "sup_eta = {:.6e}", r.sup_eta);
        let _ = writeln!(s, "sup_etatau = {:.6e}", r.sup_etatau);
        let _ = writeln!(s, "sup_B = {:.6e}", r.sup_b);
    }
    let _ = writeln!(s, "e_in = {:.6e}", rec.e_in);
    if let Some(m) = &rec.message {
        let _ = writeln!(s, "message = {m}");
    }
    s
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Outcome {
    let config = load_config(&a.config)?;
    let dir = a.out.unwrap_or_else(|| default_run_dir(&a.config));
    let (rec, solver) = simulate(&config)?;
    write_run_record(&dir, &rec, &solver)?;
    let _ = write!(out, "{}", run_summary(&rec));
    let _ = writeln!(out, "record = {}", dir.display());
    if rec.status == RunStatus::Completed {
        Ok(())
    } else {
        Err(Failure::Aborted(rec.message.clone().unwrap_or_else(|| rec.status.as_str().into())))
    }
}

fn decay_csv(rec: &RunRecord, sigma1: Option<f64>) -> (String, Vec<String>) {
    let mut csv = String::from("quantity,fitted_exponent,target,tau_start,tau_end,r_squared,note\n");
    let mut lines = Vec::new();
    for q in DecayQuantity::ALL {
        let target = if q == DecayQuantity::FrakB { Some(1.0) } else { sigma1 };
        let shown = target.map_or("NaN".to_string(), |t| t.to_string());
        match decay_fit(&rec.series, q, target.unwrap_or(f64::NAN)) {
            Ok(f) => {
                let _ = writeln!(
                    csv,
                    "{},{:.16e},{shown},{:.16e},{:.16e},{:.16e},",
                    q.as_str(),
                    f.fitted_exponent,
                    f.window.0,
                    f.window.1,
                    f.r_squared
                );
                lines.push(format!(
                    "decay {}: exponent {:.4} (target -{shown}), r2 {:.4}",
                    q.as_str(),
                    f.fitted_exponent,
                    f.r_squared
                ));
            }
            Err(e) => {
                let note = e.to_string().replace(',', ";");
                let _ = writeln!(csv, "{},NaN,{shown},NaN,NaN,NaN,{note}", q.as_str());
                lines.push(format!("decay {}: {e}", q.as_str()));
            }
        }
    }
    (csv, lines)
}

fn cmd_diagnose(a: DiagnoseArgs, out: &mut dyn Write) -> Outcome {
    let rec = read_run_record(&a.run)?;
    let (profile, pressure) = rec.config.build_profiles()?;
    let solver = Solver::new(rec.config.solver.clone(), &profile, &pressure)?;
    let set = rec.config.index_set()?;
    let dir = a.out.unwrap_or_else(|| a.run.clone());
    fs::create_dir_all(&dir)?;

    let _ = writeln!(out, "status = {}", rec.status.as_str());
    let report: Option<EnergyReport> = match &set {
        Some(s) if s.feasible() => Some(energy_report(&rec.snapshots, &solver, s, rec.e_in)?),
        _ => None,
    };
    match (&set, &report) {
        (Some(s), Some(r)) => {
            let _ = writeln!(out, "r1 = {}, sigma1 = {}", s.r1, s.sigma1);
            let _ = writeln!(out, "E0 = {:.6e}", r.e0);
            let _ = writeln!(out, "E1 = {:.6e}", r.e1);
            let _ = writeln!(out, "D0 = {:.6e}", r.d0);
            let _ = writeln!(out, "D1 = {:.6e}", r.d1);
            let _ = writeln!(out, "E_in = {:.6e}", r.e_in);
            fs::write(dir.join("energy.csv"), r.to_csv())?;
        }
        _ => {
            let _ = writeln!(out, "no admissible index pair for gamma = {}; energies skipped", rec.config.solver.gamma);
        }
    }

    let (csv, lines) = decay_csv(&rec, set.as_ref().map(|s| s.sigma1));
    fs::write(dir.join("decay.csv"), csv)?;
    for l in lines {
        let _ = writeln!(out, "{l}");
    }

    let mon = entropy_monitor(&rec.series, a.entropy_tol);
    let _ = writeln!(
        out,
        "entropy increments: min {:.3e}, violations {}",
        mon.min_increment, mon.violations
    );
    if let Some(last) = rec.snapshots.last() {
        let q = q_field(last, solver.grid(), solver.p_bar(), rec.config.solver.gamma, Q_INTERIOR_X);
        let _ = writeln!(out, "sup|q| at tau = {:.4}: {:.6e}", last.tau, q.sup_global);
    }
    Ok(())
}

/// Expands `key=v1,v2` arguments into the list of override sets, first
/// key varying slowest.
pub fn expand_grid(vary: &[String]) -> std::result::Result<Vec<Vec<(String, String)>>, String> {
    let mut grid: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for arg in vary {
        let (key, values) = arg
            .split_once('=')
            .ok_or_else(|| format!("--vary expects key=v1,v2,..., got `{arg}`"))?;
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(format!("--vary {key} has no values"));
        }
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((key.trim().to_string(), v.to_string()));
                    p
                })
            })
            .collect();
    }
    Ok(grid)
}

/// Worker count: the requested value capped by the environment variable.
/// Zero lets the pool choose.
pub fn sweep_threads(requested: Option<usize>, env: Option<&str>) -> usize {
    let cap = env.and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    match (requested.filter(|&n| n > 0), cap) {
        (Some(r), Some(c)) => r.min(c),
        (Some(r), None) => r,
        (None, Some(c)) => c,
        (None, None) => 0,
    }
}

struct SweepRow {
    status: RunStatus,
    steps: usize,
    last: Option<vacuumflow::solver::SeriesRow>,
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write) -> Outcome {
    let base = load_config(&a.config)?;
    let grid = expand_grid(&a.vary).map_err(Failure::Config)?;
    let configs: Vec<RunConfig> = grid
        .iter()
        .map(|overrides| {
            overrides.iter().try_fold(base.clone(), |c, (k, v)| {
                c.with_override(k, v).map_err(|e| Failure::Config(format!("override {k} = {v}: {e}")))
            })
        })
        .collect::<std::result::Result<_, _>>()?;
    fs::create_dir_all(&a.out)?;

    let threads = sweep_threads(a.threads, std::env::var(THREADS_ENV).ok().as_deref());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    let results: Vec<std::result::Result<SweepRow, String>> = pool.install(|| {
        configs
            .par_iter()
            .enumerate()
            .map(|(k, cfg)| {
                let (rec, solver) = simulate(cfg).map_err(|e| e.to_string())?;
                write_run_record(&a.out.join(format!("run_{k:03}")), &rec, &solver).map_err(|e| e.to_string())?;
                Ok(SweepRow {
                    status: rec.status,
                    steps: rec.series.len().saturating_sub(1),
                    last: rec.series.last().copied(),
                })
            })
            .collect()
    });

    let keys: Vec<&str> = grid.first().map(|g| g.iter().map(|(k, _)| k.as_str()).collect()).unwrap_or_default();
    let mut csv = String::from("run");
    for k in &keys {
        let _ = write!(csv, ",{k}");
    }
    csv.push_str(",status,steps,tau,alpha,sup_eta,sup_etatau,sup_B,Z_min_increment,E0,E1,D0,D1\n");
    let mut aborted = 0;
    let mut failures = Vec::new();
    for (k, (overrides, res)) in grid.iter().zip(&results).enumerate() {
        let _ = write!(csv, "run_{k:03}");
        for (_, v) in overrides {
            let _ = write!(csv, ",{v}");
        }
        match res {
            Ok(row) => {
                if row.status != RunStatus::Completed {
                    aborted += 1;
                }
                let _ = write!(csv, ",{},{}", row.status.as_str(), row.steps);
                let r = row.last.expect("a run always records its initial row");
                for v in [r.tau, r.alpha, r.sup_eta, r.sup_etatau, r.sup_b, r.z_min_increment, r.e0, r.e1, r.d0, r.d1] {
                    let _ = write!(csv, ",{v:.16e}");
                }
                csv.push('\n');
            }
            Err(m) => {
                failures.push(format!("run_{k:03}: {m}"));
                csv.push_str(",error,0,NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN\n");
            }
        }
    }
    fs::write(a.out.join("summary.csv"), &csv)?;
    let _ = writeln!(out, "{} runs, {} aborted, {} failed; summary in {}", grid.len(), aborted, failures.len(), a.out.join("summary.csv").display());
    if !failures.is_empty() {
        return Err(Failure::Config(failures.join("; ")));
    }
    if aborted > 0 {
        return Err(Failure::Aborted(format!("{aborted} of {} runs stopped early", grid.len())));
    }
    Ok(())
}

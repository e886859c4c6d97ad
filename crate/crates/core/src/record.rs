//! On-disk run records.
//!
//! ```text
//! <dir>/config.txt          canonical configuration
//! <dir>/series.csv          one row per step
//! <dir>/snapshots/NNNNNN.csv  nodal fields at step NNNNNN
//! <dir>/status.txt          format tag, status, initial energy, message
//! ```
//!
//! Reals are written with 17 significant digits, so reading a record back
//! reproduces every number bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{emit_config, parse_config, RunConfig};
use crate::diagnostics::q_field;
use crate::error::{Error, Result};
use crate::solver::{frak_b, PerturbationState, RunOutput, RunStatus, SeriesRow, Solver, SERIES_HEADER};

pub const FORMAT_TAG: &str = "vacuumflow-record-1";
pub const SNAPSHOT_HEADER: &str = "x,eta,v,zeta,B,q,eta_tt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub snapshots: Vec<PerturbationState>,
    pub series: Vec<SeriesRow>,
    pub status: RunStatus,
    pub message: Option<String>,
    pub e_in: f64,
}

impl RunRecord {
    pub fn from_output(config: RunConfig, out: RunOutput) -> Self {
        Self {
            config,
            snapshots: out.snapshots,
            series: out.series,
            status: out.status,
            message: out.message,
            e_in: out.initial.e_in,
        }
    }
}

/// Builds the profiles for `config`, runs the solver and wraps the result.
pub fn simulate(config: &RunConfig) -> Result<(RunRecord, Solver)> {
    let (profile, pressure) = config.build_profiles()?;
    let solver = Solver::new(config.solver.clone(), &profile, &pressure)?;
    let index = config.index_set()?;
    let out = solver.run(index.as_ref())?;
    Ok((RunRecord::from_output(config.clone(), out), solver))
}

pub fn series_csv(series: &[SeriesRow]) -> String {
    let mut out = String::with_capacity(series.len() * 300);
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for row in series {
        let vals = row.values();
        for (k, v) in vals.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn snapshot_csv(state: &PerturbationState, solver: &Solver) -> String {
    let grid = solver.grid();
    let b = frak_b(&state.eta, &state.v, grid);
    let q = q_field(state, grid, solver.p_bar(), solver.config().gamma, 0.0);
    let mut out = String::from(SNAPSHOT_HEADER);
    out.push('\n');
    for (i, x) in grid.nodes().iter().enumerate() {
        let _ = writeln!(
            out,
            "{x:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            state.eta[i], state.v[i], state.zeta[i], b[i], q.q[i], state.accel[i]
        );
    }
    out
}

pub fn write_run_record(dir: &Path, record: &RunRecord, solver: &Solver) -> Result<()> {
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    fs::write(dir.join("config.txt"), emit_config(&record.config))?;
    fs::write(dir.join("series.csv"), series_csv(&record.series))?;
    for s in &record.snapshots {
        fs::write(snaps.join(format!("{:06}.csv", s.step)), snapshot_csv(s, solver))?;
    }
    let mut status = format!("{FORMAT_TAG}\nstatus = {}\ne_in = {:.16e}\n", record.status.as_str(), record.e_in);
    if let Some(m) = &record.message {
        let _ = writeln!(status, "message = {}", m.replace('\n', " "));
    }
    fs::write(dir.join("status.txt"), status)?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::record(path, e.to_string()))
}

fn parse_row<const K: usize>(line: &str) -> std::result::Result<[f64; K], String> {
    let mut out = [0.0; K];
    let mut fields = line.split(',');
    for (k, slot) in out.iter_mut().enumerate() {
        let f = fields.next().ok_or_else(|| format!("expected {K} fields, found {k}"))?;
        *slot = f.trim().parse().map_err(|_| format!("field {} is not a number: `{f}`", k + 1))?;
    }
    if fields.next().is_some() {
        return Err(format!("more than {K} fields"));
    }
    Ok(out)
}

pub fn read_run_record(dir: &Path) -> Result<RunRecord> {
    let status_path = dir.join("status.txt");
    let status_text = read(&status_path)?;
    let mut lines = status_text.lines();
    match lines.next() {
        Some(tag) if tag.trim() == FORMAT_TAG => {}
        other => {
            return Err(Error::record(
                &status_path,
                format!("expected format tag `{FORMAT_TAG}`, found `{}`", other.unwrap_or("")),
            ))
        }
    }
    let mut status = None;
    let mut e_in = None;
    let mut message = None;
    for line in lines {
        match line.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            Some(("status", v)) => status = RunStatus::parse(v),
            Some(("e_in", v)) => e_in = v.parse::<f64>().ok(),
            Some(("message", v)) => message = Some(v.to_string()),
            _ => {}
        }
    }
    let status = status.ok_or_else(|| Error::record(&status_path, "missing or unknown status"))?;
    let e_in = e_in.ok_or_else(|| Error::record(&status_path, "missing e_in"))?;

    let config_path = dir.join("config.txt");
    let config = parse_config(&read(&config_path)?).map_err(|e| Error::record(&config_path, e.to_string()))?;

    let series_path = dir.join("series.csv");
    let series_text = read(&series_path)?;
    let mut series_lines = series_text.lines();
    if series_lines.next().map(str::trim) != Some(SERIES_HEADER) {
        return Err(Error::record(&series_path, "missing or unexpected header"));
    }
    let mut series = Vec::new();
    for (k, line) in series_lines.enumerate() {
        let row = parse_row::<13>(line)
            .map_err(|m| Error::record(&series_path, format!("row {} (line {}): {m}", k + 1, k + 2)))?;
        series.push(SeriesRow::from_values(row));
    }
    if series.is_empty() {
        return Err(Error::record(&series_path, "no data rows"));
    }

    let snap_dir = dir.join("snapshots");
    let entries = fs::read_dir(&snap_dir).map_err(|e| Error::record(&snap_dir, e.to_string()))?;
    let mut files: Vec<(usize, std::path::PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let step = path
            .file_stem()
            .and_then(|s| s.to_str())
            .filter(|_| path.extension().and_then(|e| e.to_str()) == Some("csv"))
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::record(&path, "snapshot files must be named NNNNNN.csv"))?;
        files.push((step, path));
    }
    files.sort();
    let n1 = config.solver.n + 1;
    let mut snapshots = Vec::with_capacity(files.len());
    for (step, path) in files {
        let row = series
            .get(step)
            .ok_or_else(|| Error::record(&path, format!("step {step} has no series row")))?;
        let text = read(&path)?;
        let mut it = text.lines();
        if it.next().map(str::trim) != Some(SNAPSHOT_HEADER) {
            return Err(Error::record(&path, "missing or unexpected header"));
        }
        let mut st = PerturbationState::zero(config.solver.n, row.alpha, row.alpha_tau);
        st.step = step;
        st.tau = row.tau;
        let mut count = 0;
        for (i, line) in it.enumerate() {
            let vals = parse_row::<7>(line)
                .map_err(|m| Error::record(&path, format!("row {}: {m}", i + 1)))?;
            if i >= n1 {
                return Err(Error::record(&path, format!("more than {n1} rows")));
            }
            st.eta[i] = vals[1];
            st.v[i] = vals[2];
            st.zeta[i] = vals[3];
            st.accel[i] = vals[6];
            count += 1;
        }
        if count != n1 {
            return Err(Error::record(&path, format!("expected {n1} rows, found {count}")));
        }
        snapshots.push(st);
    }
    Ok(RunRecord {
        config,
        snapshots,
        series,
        status,
        message,
        e_in,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        parse_config(
            "gamma = 1.5\nmu = 1\ndelta = 1\nalpha0 = 1\nalpha1 = 2\ntau_end = 0.02\n\
             N = 32\ndtau = 1e-3\na_eta = 0.01\na_v = 0.005\na_q = 0.01\nsnapshot_every = 7",
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let (rec, solver) = simulate(&small_config()).unwrap();
        assert_eq!(rec.status, RunStatus::Completed);
        let dir = tempfile::tempdir().unwrap();
        write_run_record(dir.path(), &rec, &solver).unwrap();
        let back = read_run_record(dir.path()).unwrap();
        assert_eq!(back.config, rec.config);
        assert_eq!(back.status, rec.status);
        assert_eq!(back.e_in.to_bits(), rec.e_in.to_bits());
        assert_eq!(back.series.len(), rec.series.len());
        for (a, b) in back.series.iter().zip(&rec.series) {
            for (x, y) in a.values().iter().zip(b.values().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.snapshots, rec.snapshots);
        let steps: Vec<usize> = back.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 7, 14, 20]);
    }

    #[test]
    fn missing_snapshots_and_bad_rows_are_reported() {
        let (rec, solver) = simulate(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run_record(dir.path(), &rec, &solver).unwrap();

        let series = dir.path().join("series.csv");
        let text = fs::read_to_string(&series).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let cut = &lines[4][..20].to_string();
        lines[4] = cut;
        fs::write(&series, lines.join("\n")).unwrap();
        let err = read_run_record(dir.path()).unwrap_err().to_string();
        assert!(err.contains("row 4"), "{err}");

        fs::write(&series, text).unwrap();
        fs::remove_dir_all(dir.path().join("snapshots")).unwrap();
        assert!(matches!(read_run_record(dir.path()), Err(Error::Record { .. })));
    }

    #[test]
    fn format_tag_is_required() {
        let (rec, solver) = simulate(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run_record(dir.path(), &rec, &solver).unwrap();
        fs::write(dir.path().join("status.txt"), "vacuumflow-record-0\nstatus = completed\ne_in = 0\n").unwrap();
        let err = read_run_record(dir.path()).unwrap_err().to_string();
        assert!(err.contains(FORMAT_TAG));
    }
}

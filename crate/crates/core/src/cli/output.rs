//! Artifact writers: CSV and JSON files written atomically.

use crate::bus::{BusRun, BusTrace, EvidenceEstimate, Inadmissibility};
use crate::sus::{CcdfCurve, LevelRecord};
use serde::Serialize;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Full-precision text form of a float; infinities as `inf` / `-inf`.
pub fn fmt_full(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // Adding zero maps −0 to +0.
        format!("{:.16e}", x + 0.0)
    }
}

/// Three significant digits with a signed two-digit exponent, e.g. `2.33e+186`.
pub fn fmt_sci3(x: f64) -> String {
    if !x.is_finite() {
        return fmt_full(x);
    }
    let s = format!("{x:.2e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

/// `level,b_i,seed_count,acceptance_rate,gamma_i,delta_i,c_k,a_k`.
pub fn levels_csv(levels: &[LevelRecord], inadmissibility: &[Inadmissibility]) -> String {
    let mut s = String::from("level,b_i,seed_count,acceptance_rate,gamma_i,delta_i,c_k,a_k\n");
    for l in levels {
        let (gamma, delta) = l.cov.map_or((f64::NAN, f64::NAN), |c| (c.gamma, c.delta));
        let acceptance = if l.index == 0 { f64::NAN } else { l.stats.acceptance_rate() };
        let a = if l.index == 0 {
            1.0
        } else {
            inadmissibility.iter().find(|a| a.level == l.index).map_or(f64::NAN, |a| a.a)
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            l.index,
            fmt_full(l.threshold),
            l.seed_count(),
            fmt_full(acceptance),
            fmt_full(gamma),
            fmt_full(delta),
            fmt_full((-l.threshold).exp()),
            fmt_full(a)
        );
    }
    s
}

/// `b,ln_ccdf,V`.
pub fn ccdf_csv(curve: &CcdfCurve) -> String {
    let mut s = String::from("b,ln_ccdf,V\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", fmt_full(p.b), fmt_full(p.ln_ccdf), fmt_full(p.v));
    }
    s
}

/// `theta1,...,thetan`.
pub fn samples_csv(theta: &[Vec<f64>], dim: usize) -> String {
    let header: Vec<String> = (1..=dim).map(|j| format!("theta{j}")).collect();
    let mut s = header.join(",");
    s.push('\n');
    for t in theta {
        let row: Vec<String> = t.iter().map(|x| fmt_full(*x)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Serialize)]
pub struct EvidenceJson {
    pub ln_evidence: f64,
    pub cov_proxy: f64,
    pub stopping_level: usize,
    pub b_m: f64,
    pub a_sequence: Vec<f64>,
    pub tol: f64,
}

impl EvidenceJson {
    pub fn new(e: &EvidenceEstimate, a_sequence: Vec<f64>, tol: f64) -> Self {
        Self {
            ln_evidence: e.ln_evidence,
            cov_proxy: e.cov_proxy,
            stopping_level: e.stopping_level,
            b_m: e.b_m,
            a_sequence,
            tol,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Console table `level | b_k | c_k | a_k`.
pub fn level_table(trace: &BusTrace) -> String {
    let mut s = format!("{:>5}  {:>11}  {:>11}  {:>11}\n", "level", "b_k", "c_k", "a_k");
    for l in &trace.levels {
        let (b, c, a) = if l.index == 0 {
            (String::new(), String::new(), String::new())
        } else {
            let a = trace
                .inadmissibility
                .iter()
                .find(|a| a.level == l.index)
                .map_or(String::new(), |a| fmt_sci3(a.a));
            (fmt_sci3(l.threshold), fmt_sci3((-l.threshold).exp()), a)
        };
        let _ = writeln!(s, "{:>5}  {b:>11}  {c:>11}  {a:>11}", l.index);
    }
    s
}

/// Writes the four update artifacts into `dir`.
pub fn write_update(dir: &Path, run: &BusRun, dim: usize) -> io::Result<()> {
    write_trace(dir, &run.trace, &run.ccdf)?;
    write_atomic(&dir.join("posterior.csv"), samples_csv(&run.posterior.theta, dim).as_bytes())?;
    let ev = EvidenceJson::new(&run.evidence, run.a_sequence(), run.tol);
    write_atomic(&dir.join("evidence.json"), to_json(&ev).as_bytes())
}

/// Writes `levels.csv` and `ccdf.csv`.
pub fn write_trace(dir: &Path, trace: &BusTrace, ccdf: &CcdfCurve) -> io::Result<()> {
    write_atomic(
        &dir.join("levels.csv"),
        levels_csv(&trace.levels, &trace.inadmissibility).as_bytes(),
    )?;
    write_atomic(&dir.join("ccdf.csv"), ccdf_csv(ccdf).as_bytes())
}

//! Benchmark report: aggregate tables and plot-ready series, computed
//! purely from persisted rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use doe_core::doe::{DoeResult, Method};
use serde::{Deserialize, Serialize};

use crate::bench::MethodStatus;

/// Where and on what a benchmark ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub feeder: String,
    pub feeder_fingerprint: String,
    pub seed: u64,
    pub parallel: bool,
}

impl Environment {
    pub fn current(feeder: &doe_core::grid::Feeder, seed: u64, parallel: bool) -> Self {
        Self {
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            feeder: feeder.name.clone(),
            feeder_fingerprint: feeder.fingerprint(),
            seed,
            parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub environment: Environment,
    pub statuses: Vec<MethodStatus>,
    pub rows: Vec<DoeResult>,
}

/// Per-method means over the solved intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub intervals: usize,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j: f64,
    /// Means of the oracle-verified split (NaN without verification).
    pub verified_j1: f64,
    pub verified_j2: f64,
    pub verified_j3: f64,
    pub verified_j: f64,
    /// Intervals whose verified deltas are not all zero.
    pub violating_intervals: usize,
    pub mean_time: f64,
    pub max_time: f64,
    pub limit_reached: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn summarize(rows: &[DoeResult]) -> Vec<MethodSummary> {
    let mut by: BTreeMap<Method, Vec<&DoeResult>> = BTreeMap::new();
    for r in rows {
        by.entry(r.method).or_default().push(r);
    }
    by.into_iter()
        .map(|(method, rs)| {
            let ver = || rs.iter().filter_map(|r| r.verified.as_ref());
            MethodSummary {
                method,
                intervals: rs.len(),
                j1: mean(rs.iter().map(|r| r.objective.j1)),
                j2: mean(rs.iter().map(|r| r.objective.j2)),
                j3: mean(rs.iter().map(|r| r.objective.j3)),
                j: mean(rs.iter().map(|r| r.objective.total())),
                verified_j1: mean(ver().map(|v| v.objective.j1)),
                verified_j2: mean(ver().map(|v| v.objective.j2)),
                verified_j3: mean(ver().map(|v| v.objective.j3)),
                verified_j: mean(ver().map(|v| v.objective.total())),
                violating_intervals: ver()
                    .filter(|v| v.deltas.v > 0.0 || v.deltas.ol > 0.0 || v.deltas.rpf > 0.0)
                    .count(),
                mean_time: mean(rs.iter().map(|r| r.wall_time)),
                max_time: rs.iter().map(|r| r.wall_time).fold(0.0, f64::max),
                limit_reached: rs.iter().filter(|r| r.limit_reached).count(),
            }
        })
        .collect()
}

/// B1 against B2 on one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tightness {
    pub t: usize,
    /// `|J_B2 − J_B1| / max(1, |J_B1|)`
    pub objective_rel: f64,
    /// Largest envelope difference, kW.
    pub envelope_abs: f64,
}

/// Intervals solved by both B1 and B2.
pub fn tightness(rows: &[DoeResult]) -> Vec<Tightness> {
    let pick = |m: Method| -> BTreeMap<usize, &DoeResult> {
        rows.iter().filter(|r| r.method == m).map(|r| (r.t, r)).collect()
    };
    let b2 = pick(Method::B2);
    pick(Method::B1)
        .into_iter()
        .filter_map(|(t, a)| {
            let b = b2.get(&t)?;
            let (ja, jb) = (a.objective.total(), b.objective.total());
            Some(Tightness {
                t,
                objective_rel: (jb - ja).abs() / ja.abs().max(1.0),
                envelope_abs: a
                    .envelope
                    .iter()
                    .zip(&b.envelope)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max),
            })
        })
        .collect()
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else {
        format!("{v:.3}")
    }
}

pub fn render_markdown(report: &BenchmarkReport) -> String {
    let mut s = String::new();
    let e = &report.environment;
    let _ = writeln!(s, "# DOE benchmark\n");
    let _ = writeln!(
        s,
        "Feeder `{}` ({}), seed {}, {} threads on {}/{}, doe {}{}.\n",
        e.feeder,
        &e.feeder_fingerprint[..e.feeder_fingerprint.len().min(12)],
        e.seed,
        e.threads,
        e.os,
        e.arch,
        e.package_version,
        if e.parallel {
            ", intervals solved in parallel"
        } else {
            ""
        },
    );
    let _ = writeln!(s, "## Objective and solution time\n");
    let _ = writeln!(
        s,
        "Modeled terms are what each method optimized; verified terms re-score its envelope with the power-flow oracle. Times are means per interval.\n"
    );
    let _ = writeln!(
        s,
        "| Method | Intervals | J1 | J2 | J3 | J | Verified J2 | Verified J3 | Verified J | Violating | Time (s) | Max time (s) | Limit hit |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|---|---|---|");
    for m in summarize(&report.rows) {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {:.4} | {:.4} | {} |",
            m.method,
            m.intervals,
            cell(m.j1),
            cell(m.j2),
            cell(m.j3),
            cell(m.j),
            cell(m.verified_j2),
            cell(m.verified_j3),
            cell(m.verified_j),
            m.violating_intervals,
            m.mean_time,
            m.max_time,
            m.limit_reached,
        );
    }
    let tight = tightness(&report.rows);
    if !tight.is_empty() {
        let worst_j = tight.iter().map(|t| t.objective_rel).fold(0.0, f64::max);
        let worst_e = tight.iter().map(|t| t.envelope_abs).fold(0.0, f64::max);
        let _ = writeln!(s, "\n## B1 against B2\n");
        let _ = writeln!(
            s,
            "Over {} intervals the largest relative objective difference is {worst_j:.2e} and the largest envelope difference {worst_e:.3} kW.",
            tight.len()
        );
    }
    let failed: Vec<&MethodStatus> = report.statuses.iter().filter(|st| !st.ok()).collect();
    if !failed.is_empty() {
        let _ = writeln!(s, "\n## Failures\n");
        for st in failed {
            for (t, msg) in &st.failures {
                let _ = writeln!(s, "- {} interval {t}: {msg}", st.method);
            }
        }
    }
    s
}

/// Long-format series: one line per method and interval with J1, J2, J3,
/// the verified J3 and the solution time.
pub fn series_csv(rows: &[DoeResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "interval", "j1", "j2", "j3", "verified_j3", "time_s"])
        .expect("in-memory write");
    for r in rows {
        let vj3 = r
            .verified
            .as_ref()
            .map_or(String::new(), |v| format!("{:?}", v.objective.j3));
        w.write_record([
            r.method.name().to_string(),
            r.t.to_string(),
            format!("{:?}", r.objective.j1),
            format!("{:?}", r.objective.j2),
            format!("{:?}", r.objective.j3),
            vj3,
            format!("{:?}", r.wall_time),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

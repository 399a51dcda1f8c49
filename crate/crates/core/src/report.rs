//! Stable text formats: trajectory CSV, certificate trace (text and CSV),
//! audit and convergence reports. All floating-point columns use fixed
//! 17-significant-digit scientific notation so identical runs produce
//! identical bytes; wall-clock information never enters these files.

use crate::certificate::{certificate_from_parts, AuditReport, Certificate, CertificateError};
use crate::integrator::Trajectory;
use crate::lyapunov::EnergyRecord;
use crate::operators::DiscreteConstants;
use crate::oracle::OrderRow;
use crate::stationary::ConvergenceReport;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("line {line}: expected {expected} columns, got {got}")]
    ColumnCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: cannot parse {value:?} as a number")]
    BadNumber { line: usize, value: String },
    #[error("missing header line")]
    MissingHeader,
    #[error("unexpected header {got:?} (expected {expected:?})")]
    WrongHeader { expected: String, got: String },
    #[error("certificate table is missing constant {0:?}")]
    MissingConstant(&'static str),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

/// 17 significant digits: one leading digit plus 16 after the point.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub const TRAJECTORY_HEADER: &str = "t,E,H,dissipation,l2_u,h2star_u,l2_v,sup_u,newton_iters";

pub fn trajectory_csv(traj: &Trajectory) -> String {
    records_csv(traj.records())
}

pub fn records_csv(records: &[EnergyRecord]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_float(r.t),
            fmt_float(r.energy),
            fmt_float(r.perturbed),
            fmt_float(r.dissipation),
            fmt_float(r.l2_u),
            fmt_float(r.h2star_u),
            fmt_float(r.l2_v),
            fmt_float(r.sup_u),
            r.newton_iters
        ));
    }
    out
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<EnergyRecord>, ReportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ReportError::MissingHeader)?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(ReportError::WrongHeader {
            expected: TRAJECTORY_HEADER.to_string(),
            got: header.to_string(),
        });
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 9 {
            return Err(ReportError::ColumnCount {
                line,
                expected: 9,
                got: cols.len(),
            });
        }
        let num = |value: &str| -> Result<f64, ReportError> {
            value.trim().parse().map_err(|_| ReportError::BadNumber {
                line,
                value: value.to_string(),
            })
        };
        records.push(EnergyRecord {
            t: num(cols[0])?,
            energy: num(cols[1])?,
            perturbed: num(cols[2])?,
            dissipation: num(cols[3])?,
            l2_u: num(cols[4])?,
            h2star_u: num(cols[5])?,
            l2_v: num(cols[6])?,
            sup_u: num(cols[7])?,
            newton_iters: cols[8].trim().parse().map_err(|_| ReportError::BadNumber {
                line,
                value: cols[8].to_string(),
            })?,
        });
    }
    Ok(records)
}

/// Human-readable certificate trace: one `name = value # formula` line per
/// entry, with the headline rate last.
pub fn certificate_text(cert: &Certificate) -> String {
    let mut out = String::new();
    for e in cert.trace() {
        out.push_str(&format!(
            "{} = {} # {}\n",
            e.name,
            fmt_float(e.value),
            e.formula
        ));
    }
    out.push_str(&format!("r = {}\n", fmt_float(cert.rate)));
    out
}

pub const CERTIFICATE_HEADER: &str = "constant,value,formula";

pub fn certificate_csv(cert: &Certificate) -> String {
    let mut out = String::from(CERTIFICATE_HEADER);
    out.push('\n');
    for e in cert.trace() {
        out.push_str(&format!(
            "{},{},{}\n",
            e.name,
            fmt_float(e.value),
            e.formula
        ));
    }
    out
}

/// Rebuild a certificate from its CSV trace. Only the chain inputs
/// (m, a1, a2, B, k_inf, E0) are read; the chain is re-evaluated, which
/// both reconstructs the remaining constants and checks that the stored
/// trace was internally consistent.
pub fn parse_certificate_csv(text: &str) -> Result<Certificate, ReportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ReportError::MissingHeader)?;
    if header.trim() != CERTIFICATE_HEADER {
        return Err(ReportError::WrongHeader {
            expected: CERTIFICATE_HEADER.to_string(),
            got: header.to_string(),
        });
    }
    let mut get = |_name: &str| -> Option<f64> { None };
    let _ = &mut get;
    let mut values = std::collections::BTreeMap::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut cols = raw.splitn(3, ',');
        let name = cols.next().unwrap_or("").trim().to_string();
        let value = cols.next().unwrap_or("");
        let parsed: f64 = value.trim().parse().map_err(|_| ReportError::BadNumber {
            line,
            value: value.to_string(),
        })?;
        values.insert(name, parsed);
    }
    let fetch = |name: &'static str| -> Result<f64, ReportError> {
        values
            .get(name)
            .copied()
            .ok_or(ReportError::MissingConstant(name))
    };
    let b = fetch("B")?;
    let constants = DiscreteConstants {
        b,
        k_inf: fetch("k_inf")?,
        mu1: 1.0 / (b * b),
    };
    let cert = certificate_from_parts(
        fetch("m")?,
        fetch("a1")?,
        fetch("a2")?,
        &constants,
        fetch("E0")?,
        0,
    )?;
    Ok(cert)
}

pub fn audit_text(report: &AuditReport, tol: f64) -> String {
    let mut out = format!("audit tolerance = {}\n", fmt_float(tol));
    for c in &report.checks {
        match c.first_violation {
            None => out.push_str(&format!(
                "check {}: PASS (worst margin {} at t = {})\n",
                c.name,
                fmt_float(c.worst_margin),
                fmt_float(c.worst_time)
            )),
            Some((index, t)) => out.push_str(&format!(
                "check {}: FAIL (first violation at record {} t = {}, worst margin {} at t = {})\n",
                c.name,
                index,
                fmt_float(t),
                fmt_float(c.worst_margin),
                fmt_float(c.worst_time)
            )),
        }
    }
    out.push_str(if report.passed {
        "overall: PASS\n"
    } else {
        "overall: FAIL\n"
    });
    out
}

pub const CONVERGENCE_HEADER: &str = "t,h2star_diff,l2_v";

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for (t, diff, vel) in &report.series {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_float(*t),
            fmt_float(*diff),
            fmt_float(*vel)
        ));
    }
    out
}

pub const ORACLE_HEADER: &str = "dt,max_l2_error,max_h2star_error,observed_order";

pub fn oracle_csv(rows: &[OrderRow]) -> String {
    let mut out = String::from(ORACLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_float(r.dt),
            fmt_float(r.max_l2_error),
            fmt_float(r.max_h2star_error),
            r.observed_order.map(fmt_float).unwrap_or_default()
        ));
    }
    out
}

/// One value per line, the dump format for nodal vectors.
pub fn vector_dump(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        out.push_str(&fmt_float(*v));
        out.push('\n');
    }
    out
}

//! CSV emission. Floats carry nine significant digits; rows keep the order
//! in which they were computed, so output is byte-identical across runs.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::barrier::{fmt_g, ConditionReport};
use crate::error::{Error, Result};
use crate::verify::{CheckKind, CheckReport, TwoPointReport};

pub const TWO_POINT_HEADER: [&str; 4] = ["t", "worst", "xi", "yi"];
pub const GRADIENT_HEADER: [&str; 5] = ["t", "node", "grad", "bound", "ratio"];
pub const LIYAU_HEADER: [&str; 5] = ["t", "node", "lhs", "rhs", "margin"];
pub const BARRIER_HEADER: [&str; 3] = ["s", "t", "residual"];
pub const SUMMARY_HEADER: [&str; 4] = ["check", "pass", "worst", "tol"];
pub const ERROR_HEADER: [&str; 3] = ["kind", "exit_code", "message"];
pub const EPSILON_HEADER: [&str; 2] = ["epsilon", "worst"];

/// One line of `summary.csv`. `tol` is the threshold `worst` was compared
/// against.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub check: String,
    pub pass: bool,
    pub worst: f64,
    pub tol: f64,
}

pub fn fmt(v: f64) -> String {
    fmt_g(v)
}

pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.write_record(&r)?;
    }
    out.flush().map_err(Error::from)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_two_point(path: &Path, r: &TwoPointReport) -> Result<()> {
    let rows = r.series.iter().map(|s| vec![fmt(s.t), fmt(s.worst), s.xi.to_string(), s.yi.to_string()]);
    write_table(create(path)?, &TWO_POINT_HEADER, rows)
}

pub fn write_node_check(path: &Path, r: &CheckReport) -> Result<()> {
    let header: &[&str] = match r.kind {
        CheckKind::Gradient => &GRADIENT_HEADER,
        CheckKind::LiYau => &LIYAU_HEADER,
    };
    let rows = r.rows.iter().map(|n| vec![fmt(n.t), n.node.to_string(), fmt(n.a), fmt(n.b), fmt(n.c)]);
    write_table(create(path)?, header, rows)
}

pub fn write_condition(path: &Path, r: &ConditionReport) -> Result<()> {
    let rows = r.rows.iter().map(|x| vec![fmt(x.s), fmt(x.t), fmt(x.residual)]);
    write_table(create(path)?, &BARRIER_HEADER, rows)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let rows = rows.iter().map(|r| vec![r.check.clone(), r.pass.to_string(), fmt(r.worst), fmt(r.tol)]);
    write_table(create(path)?, &SUMMARY_HEADER, rows)
}

pub fn write_error(path: &Path, e: &Error) -> Result<()> {
    let row = vec![e.kind().to_string(), e.exit_code().to_string(), e.to_string()];
    write_table(create(path)?, &ERROR_HEADER, [row])
}

pub fn write_epsilon(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    write_table(create(path)?, &EPSILON_HEADER, rows.iter().map(|(e, w)| vec![fmt(*e), fmt(*w)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt(1.0), "1.00000000e0");
        assert_eq!(fmt(-0.000123456789123), "-1.23456789e-4");
        assert_eq!(fmt(19.313708498984763), "1.93137085e1");
    }

    #[test]
    fn summary_layout() {
        let mut buf = Vec::new();
        let rows = [SummaryRow { check: "liyau".into(), pass: true, worst: -2.5, tol: 0.0 }];
        write_table(
            &mut buf,
            &SUMMARY_HEADER,
            rows.iter().map(|r| vec![r.check.clone(), r.pass.to_string(), fmt(r.worst), fmt(r.tol)]),
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "check,pass,worst,tol\nliyau,true,-2.50000000e0,0.00000000e0\n");
    }
}

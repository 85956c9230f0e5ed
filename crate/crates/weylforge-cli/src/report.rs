//! Versioned JSON reports and plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use weylforge::constants::Constants;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const SCHEMA: &str = "weylforge.report/1";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    /// committed constant the check was made against
    pub constant: String,
    pub threshold: f64,
    pub measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub doc: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema: &'static str,
    pub config: ExperimentConfig,
    pub constants_version: u32,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
    pub details: serde_json::Value,
    /// wall-clock seconds; excluded from determinism comparisons
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig, constants: &Constants, columns: &[(&str, &str)]) -> Self {
        ExperimentReport {
            schema: SCHEMA,
            config: config.clone(),
            constants_version: constants.version,
            columns: columns.iter().map(|&(n, d)| Column { name: n.into(), doc: d.into() }).collect(),
            rows: Vec::new(),
            verdicts: Vec::new(),
            details: serde_json::Value::Null,
            timings: BTreeMap::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn row(&mut self, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(values);
    }

    pub fn verdict(&mut self, name: &str, constant: &str, threshold: f64, measured: f64, passed: bool) {
        self.verdicts.push(Verdict { name: name.into(), passed, constant: constant.into(), threshold, measured });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// The JSON without timings.
    pub fn numeric_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("reports serialize");
        if let Some(o) = v.as_object_mut() {
            o.remove("timings");
        }
        serde_json::to_string(&v).expect("reports serialize")
    }

    pub fn csv(&self) -> Result<String, CliError> {
        if self.rows.is_empty() {
            return Err(CliError::EmptyReport);
        }
        let mut s = String::new();
        for c in &self.columns {
            let _ = writeln!(s, "# {}: {}", c.name, c.doc);
        }
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let _ = writeln!(s, "{}", names.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        Ok(s)
    }

    pub fn dat(&self) -> Result<String, CliError> {
        if self.rows.is_empty() {
            return Err(CliError::EmptyReport);
        }
        let mut s = format!("# {}\n", self.config.experiment);
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let _ = writeln!(s, "# {}", names.join(" "));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x:.12e}")).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Written {
    pub json: PathBuf,
    pub csv: PathBuf,
    pub dat: PathBuf,
}

/// JSON at `--out` (or `<out-dir>/<experiment>.json`), CSV and .dat beside it.
pub fn write_all(report: &ExperimentReport) -> Result<Written, CliError> {
    let cfg = &report.config;
    let json = cfg.out.clone().unwrap_or_else(|| cfg.out_dir.join(format!("{}.json", cfg.experiment)));
    if let Some(dir) = json.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&json, report.to_json())?;
    let (csv, dat) = emit_plotdata(report, &json.with_extension(""))?;
    Ok(Written { json, csv, dat })
}

pub fn emit_plotdata(report: &ExperimentReport, stem: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let (csv, dat) = (stem.with_extension("csv"), stem.with_extension("dat"));
    std::fs::write(&csv, report.csv()?)?;
    std::fs::write(&dat, report.dat()?)?;
    Ok((csv, dat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Experiment, ExperimentConfig};

    fn report(rows: usize) -> ExperimentReport {
        let cfg = ExperimentConfig::defaults(Experiment::CrtVerify);
        let mut r = ExperimentReport::new(&cfg, &Constants::embedded(), &[("a", "first"), ("b", "second")]);
        for i in 0..rows {
            r.row(vec![i as f64, 0.5]);
        }
        r
    }

    #[test]
    fn single_row_csv() {
        let csv = report(1).csv().unwrap();
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec!["a,b", "0,0.5"]);
        assert_eq!(csv.lines().filter(|l| l.starts_with('#')).count(), 2);
    }

    #[test]
    fn empty_report_is_rejected() {
        assert!(matches!(report(0).csv(), Err(CliError::EmptyReport)));
        assert!(matches!(report(0).dat(), Err(CliError::EmptyReport)));
    }

    #[test]
    fn timings_do_not_affect_numeric_json() {
        let mut a = report(2);
        let b = a.clone();
        a.timings.insert("total".into(), 1.0);
        assert_eq!(a.numeric_json(), b.numeric_json());
        assert!(a.to_json().contains(SCHEMA));
    }
}

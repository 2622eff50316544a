//! Result tables: the one persistence format every experiment writes.
//!
//! A table file is CSV prefixed by `#` metadata lines: a format/version
//! marker, the tool version, a content hash of the config echo, the
//! config echo itself, then free-form `meta:` entries. Numbers are
//! written with the shortest decimal representation that parses back to
//! the same bits, so a fixed (config, seed) pair produces byte-identical
//! files on every platform and thread count; replay checking is plain
//! byte equality.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::stats;
use crate::{Error, Result};

const FORMAT_MARKER: &str = "# rwre-table v1";
const TOOL_VERSION: &str = concat!("rwre-core ", env!("CARGO_PKG_VERSION"));

/// Columns, numeric rows, and the metadata block that makes a file
/// self-describing and replayable.
#[derive(Debug, Clone)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Canonical config lines this table was produced from (no out path).
    pub config_echo: Vec<String>,
    /// Ordered experiment-specific annotations.
    pub meta: Vec<(String, String)>,
    /// Producing tool and version, as recorded in the file.
    pub tool: String,
    /// Runtime-only: elapsed seconds, reported on stderr by the CLI.
    /// Never serialized; identical runs must produce identical bytes.
    pub wall_time_seconds: Option<f64>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &c in columns {
            if c.is_empty() || c.contains(',') || c.contains('\n') || c.contains('\r') {
                return Err(Error::Parameter(format!("invalid column name {c:?}")));
            }
            if !seen.insert(c) {
                return Err(Error::Parameter(format!("duplicate column name `{c}`")));
            }
        }
        if columns.is_empty() {
            return Err(Error::Parameter("a table needs at least one column".into()));
        }
        Ok(ResultTable {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            config_echo: Vec::new(),
            meta: Vec::new(),
            tool: TOOL_VERSION.to_string(),
            wall_time_seconds: None,
        })
    }

    pub fn for_config(columns: &[&str], config: &ExperimentConfig) -> Result<Self> {
        let mut t = Self::new(columns)?;
        t.config_echo = config.echo_lines();
        Ok(t)
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row arity mismatch");
        self.rows.push(row.to_vec());
    }

    /// Appends or replaces a metadata entry; keys stay unique and keep
    /// their first position so output order is deterministic.
    pub fn set_meta(&mut self, key: &str, value: impl std::fmt::Display) {
        assert!(!key.contains('\n') && !key.contains('='), "invalid meta key {key:?}");
        let value = value.to_string();
        assert!(!value.contains('\n'), "meta values are single-line");
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_values(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Content hash of the config echo, computed the way git hashes a
    /// blob (`sha256("blob {len}\0" + content)`), so the same semantic
    /// config always maps to the same digest.
    pub fn config_sha256(&self) -> String {
        let content = self.config_echo.join("\n") + "\n";
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", content.len()));
        hasher.update(&content);
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            write!(hex, "{byte:02x}").expect("writing to String cannot fail");
        }
        hex
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(FORMAT_MARKER);
        out.push('\n');
        let _ = writeln!(out, "# tool = {}", self.tool);
        if !self.config_echo.is_empty() {
            let _ = writeln!(out, "# config_sha256 = {}", self.config_sha256());
            for line in &self.config_echo {
                let _ = writeln!(out, "# config: {line}");
            }
        }
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# meta: {k} = {v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let Some((_, first)) = lines.next() else {
            return Err(table_err(1, "empty file".into()));
        };
        if first != FORMAT_MARKER {
            return Err(table_err(1, format!("expected `{FORMAT_MARKER}`, got `{first}`")));
        }
        let mut tool = String::new();
        let mut stored_hash = None;
        let mut config_echo = Vec::new();
        let mut meta = Vec::new();
        let mut header: Option<(usize, &str)> = None;
        for (idx, line) in lines.by_ref() {
            let line_no = idx + 1;
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some(v) = rest.strip_prefix("tool = ") {
                    tool = v.to_string();
                } else if let Some(v) = rest.strip_prefix("config_sha256 = ") {
                    stored_hash = Some((line_no, v.to_string()));
                } else if let Some(v) = rest.strip_prefix("config: ") {
                    config_echo.push(v.to_string());
                } else if let Some(v) = rest.strip_prefix("meta: ") {
                    let Some((k, val)) = v.split_once(" = ") else {
                        return Err(table_err(line_no, format!("malformed meta entry `{v}`")));
                    };
                    meta.push((k.to_string(), val.to_string()));
                } else {
                    return Err(table_err(line_no, format!("unrecognized metadata line `{line}`")));
                }
            } else {
                header = Some((line_no, line));
                break;
            }
        }
        let Some((header_line, header)) = header else {
            return Err(table_err(text.lines().count(), "missing column header".into()));
        };
        let columns: Vec<&str> = header.split(',').collect();
        let mut table = Self::new(&columns)
            .map_err(|e| table_err(header_line, format!("bad header: {e}")))?;
        table.tool = tool;
        table.config_echo = config_echo;
        table.meta = meta;
        if let Some((line_no, stored)) = stored_hash {
            let actual = table.config_sha256();
            if stored != actual {
                return Err(table_err(
                    line_no,
                    format!("config hash mismatch: stored {stored}, content hashes to {actual}"),
                ));
            }
        }
        for (idx, line) in lines {
            let line_no = idx + 1;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != table.columns.len() {
                return Err(table_err(
                    line_no,
                    format!("row has {} cells, expected {}", cells.len(), table.columns.len()),
                ));
            }
            let mut row = Vec::with_capacity(cells.len());
            for cell in cells {
                row.push(parse_float(cell).ok_or_else(|| {
                    table_err(line_no, format!("invalid numeric cell `{cell}`"))
                })?);
            }
            table.rows.push(row);
        }
        Ok(table)
    }
}

fn table_err(line: usize, msg: String) -> Error {
    Error::Table { line, msg }
}

/// Shortest decimal string that parses back to exactly `x`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

pub fn parse_float(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

/// Byte equality of two table files.
pub fn replay_check(path_a: &Path, path_b: &Path) -> Result<bool> {
    Ok(std::fs::read(path_a)? == std::fs::read(path_b)?)
}

/// One fitted line from [`summarize`].
#[derive(Debug, Clone)]
pub struct FitSummary {
    /// The spec that produced the fit, e.g. `log(median) ~ log(n)`.
    pub label: String,
    pub x_column: String,
    pub y_column: String,
    pub x_log: bool,
    pub y_log: bool,
    pub fit: stats::LinearFit<f64>,
    /// 95% normal interval on the slope.
    pub slope_ci: (f64, f64),
    /// Points used; log axes drop nonpositive values.
    pub points_used: usize,
    pub points_dropped: usize,
}

/// Least-squares summaries of a table. Experiments stamp the fits that
/// make sense for them in the `summary_fit` metadata entry
/// (semicolon-separated `y ~ x` specs, each side optionally `log(...)`);
/// a table without a stamp gets column 2 against column 1, linear.
pub fn summarize(table: &ResultTable) -> Result<Vec<FitSummary>> {
    if table.rows.is_empty() {
        return Err(Error::Parameter("cannot summarize a table with no rows".into()));
    }
    let specs: Vec<String> = match table.meta_value("summary_fit") {
        Some(v) => v.split(';').map(|s| s.trim().to_string()).collect(),
        None => {
            if table.columns.len() < 2 {
                return Err(Error::Parameter(
                    "no summary_fit stamp and fewer than two columns".into(),
                ));
            }
            vec![format!("{} ~ {}", table.columns[1], table.columns[0])]
        }
    };
    specs.iter().map(|spec| fit_one(table, spec)).collect()
}

fn fit_one(table: &ResultTable, spec: &str) -> Result<FitSummary> {
    let Some((y_part, x_part)) = spec.split_once('~') else {
        return Err(Error::Parameter(format!("fit spec `{spec}` is missing `~`")));
    };
    let (y_log, y_column) = parse_term(y_part.trim())?;
    let (x_log, x_column) = parse_term(x_part.trim())?;
    let ys_raw = table
        .column_values(&y_column)
        .ok_or_else(|| Error::Parameter(format!("no column `{y_column}` to fit")))?;
    let xs_raw = table
        .column_values(&x_column)
        .ok_or_else(|| Error::Parameter(format!("no column `{x_column}` to fit")))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0usize;
    for (&x, &y) in xs_raw.iter().zip(&ys_raw) {
        let usable = x.is_finite() && y.is_finite() && (!x_log || x > 0.0) && (!y_log || y > 0.0);
        if !usable {
            dropped += 1;
            continue;
        }
        xs.push(if x_log { x.ln() } else { x });
        ys.push(if y_log { y.ln() } else { y });
    }
    let fit = stats::linear_fit(&xs, &ys).ok_or_else(|| {
        Error::Parameter(format!("fit `{spec}` has fewer than two usable points"))
    })?;
    let z = stats::z_for_confidence(0.95);
    Ok(FitSummary {
        label: spec.to_string(),
        x_column,
        y_column,
        x_log,
        y_log,
        slope_ci: (fit.slope - z * fit.slope_se, fit.slope + z * fit.slope_se),
        fit,
        points_used: xs.len(),
        points_dropped: dropped,
    })
}

fn parse_term(term: &str) -> Result<(bool, String)> {
    if let Some(inner) = term.strip_prefix("log(").and_then(|t| t.strip_suffix(')')) {
        Ok((true, inner.trim().to_string()))
    } else if term.is_empty() || term.contains('(') || term.contains(')') {
        Err(Error::Parameter(format!("malformed fit term `{term}`")))
    } else {
        Ok((false, term.to_string()))
    }
}

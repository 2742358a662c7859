//! Method-by-dataset tables, the rank-of-average-rank statistic and the
//! sectioned key=value configuration format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

fn check_cells(cells: &[Vec<f64>]) -> Result<usize> {
    if cells.len() < 2 {
        return Err(Error::UndefinedInput(format!("ranking needs at least 2 rows, got {}", cells.len())));
    }
    let m = cells[0].len();
    if m == 0 {
        return Err(Error::UndefinedInput("ranking needs at least 1 column".into()));
    }
    for (i, row) in cells.iter().enumerate() {
        if row.len() != m {
            return Err(Error::LengthMismatch(format!("row {i} has {} cells, expected {m}", row.len())));
        }
        if let Some(j) = row.iter().position(|v| v.is_nan()) {
            return Err(Error::UndefinedInput(format!("NaN cell at row {i}, column {j}")));
        }
    }
    Ok(m)
}

/// Per-column ranks (best = 1, ties averaged), doubled so they stay integral.
fn doubled_column_ranks(cells: &[Vec<f64>], col: usize) -> Vec<u64> {
    let n = cells.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cells[b][col].total_cmp(&cells[a][col]));
    let mut out = vec![0; n];
    let mut start = 0;
    while start < n {
        let v = cells[order[start]][col];
        let mut end = start;
        while end + 1 < n && cells[order[end + 1]][col] == v {
            end += 1;
        }
        // positions start+1 ..= end+1 averaged, times two
        let doubled = (start + 1 + end + 1) as u64;
        for &r in &order[start..=end] {
            out[r] = doubled;
        }
        start = end + 1;
    }
    out
}

/// Mean of each row's per-column ranks (higher cell = better).
pub fn average_ranks(cells: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = check_cells(cells)?;
    let mut sums = vec![0u64; cells.len()];
    for col in 0..m {
        for (s, r) in sums.iter_mut().zip(doubled_column_ranks(cells, col)) {
            *s += r;
        }
    }
    Ok(sums.iter().map(|&s| s as f64 / (2 * m) as f64).collect())
}

/// Ranks rows by their average per-column rank; ties share the minimum rank.
pub fn rank_of_average_rank(cells: &[Vec<f64>]) -> Result<Vec<usize>> {
    let m = check_cells(cells)?;
    let mut sums = vec![0u64; cells.len()];
    for col in 0..m {
        for (s, r) in sums.iter_mut().zip(doubled_column_ranks(cells, col)) {
            *s += r;
        }
    }
    Ok(sums.iter().map(|s| 1 + sums.iter().filter(|o| *o < s).count()).collect())
}

/// Methods as rows, datasets as columns, plus the rank column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportTable {
    pub metric: String,
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub ranks: Vec<usize>,
}

impl ReportTable {
    pub fn new(metric: impl Into<String>, rows: Vec<String>, columns: Vec<String>, cells: Vec<Vec<f64>>) -> Result<Self> {
        if cells.len() != rows.len() {
            return Err(Error::LengthMismatch(format!("{} row labels for {} rows", rows.len(), cells.len())));
        }
        if cells.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::LengthMismatch("cell rows must match the column labels".into()));
        }
        // a single method ranks first trivially
        let ranks = if rows.len() == 1 { vec![1] } else { rank_of_average_rank(&cells)? };
        Ok(Self { metric: metric.into(), rows, columns, cells, ranks })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",rank\n");
        for ((name, row), rank) in self.rows.iter().zip(&self.cells).zip(&self.ranks) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v:.4}");
            }
            let _ = writeln!(out, ",{rank}");
        }
        out
    }

    /// Space-aligned text table.
    pub fn render(&self) -> String {
        let first = self.rows.iter().map(String::len).chain([self.metric.len()]).max().unwrap_or(0);
        let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(6)).collect();
        let mut out = format!("{:<first$}", self.metric);
        for (c, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push_str("  rank\n");
        for ((name, row), rank) in self.rows.iter().zip(&self.cells).zip(&self.ranks) {
            let _ = write!(out, "{name:<first$}");
            for (v, w) in row.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$.4}");
            }
            let _ = writeln!(out, "  {rank:>4}");
        }
        out
    }
}

/// Flat `key = value` lines grouped under `[section]` headers. Keys before
/// the first header belong to the unnamed section, which every lookup
/// falls back to. `#` and `;` start comment lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    pub path: PathBuf,
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Config { path: path.to_path_buf(), line, msg };
        let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err(lineno, "unterminated section header".into()))?;
                current = name.trim().to_string();
                if current.is_empty() {
                    return Err(err(lineno, "empty section name".into()));
                }
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(lineno, format!("expected key = value, found `{line}`")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(err(lineno, "empty key".into()));
            }
            let section = sections.entry(current.clone()).or_default();
            if section.insert(k.to_string(), (v.trim().to_string(), lineno)).is_some() {
                return Err(err(lineno, format!("duplicate key `{k}`")));
            }
        }
        Ok(Self { path: path.to_path_buf(), sections })
    }

    fn lookup(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .or_else(|| self.sections.get("").and_then(|s| s.get(key)))
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.lookup(section, key).map(|(v, _)| v.as_str())
    }

    /// Typed lookup; parse failures report the offending line.
    pub fn get_parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.lookup(section, key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e| Error::Config {
                path: self.path.clone(),
                line: *line,
                msg: format!("bad value for `{key}`: {e}"),
            }),
        }
    }

    pub fn keys(&self, section: &str) -> Vec<&str> {
        self.sections.get(section).map(|s| s.keys().map(String::as_str).collect()).unwrap_or_default()
    }
}

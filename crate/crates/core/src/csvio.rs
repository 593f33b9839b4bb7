//! Shared helpers for the `id,...` keyed CSV files.

use std::collections::HashMap;
use std::io::Read;

use crate::{Error, Result};

/// A CSV table keyed by its first column.
pub(crate) struct KeyedTable {
    pub header: Vec<String>,
    /// (line number, id, remaining cells)
    pub rows: Vec<(usize, String, Vec<String>)>,
}

pub(crate) fn read_keyed<R: Read>(reader: R, first_line: usize) -> Result<KeyedTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("id") {
        return Err(Error::Parse {
            line: first_line,
            column: header.first().cloned().unwrap_or_default(),
            message: "first header column must be `id`".into(),
        });
    }
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize + first_line - 1)
            .unwrap_or(0);
        let id = record.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                column: "id".into(),
                message: "empty instrument id".into(),
            });
        }
        if seen.insert(id.clone(), ()).is_some() {
            return Err(Error::DuplicateId(id));
        }
        let cells = record.iter().skip(1).map(str::to_string).collect();
        rows.push((line, id, cells));
    }
    Ok(KeyedTable { header, rows })
}

impl KeyedTable {
    /// Reorders rows to follow `ids`. Every id must be present exactly once.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Vec<&(usize, String, Vec<String>)>> {
        let index: HashMap<&str, usize> = self
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| (r.1.as_str(), k))
            .collect();
        if let Some(extra) = self.rows.iter().find(|r| !ids.contains(&r.1)) {
            return Err(Error::UnknownId(extra.1.clone()));
        }
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&k| &self.rows[k])
                    .ok_or_else(|| Error::MissingId(id.clone()))
            })
            .collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.1.clone()).collect()
    }
}

pub(crate) fn parse_number(cell: &str, line: usize, column: &str) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            line,
            column: column.to_string(),
            message: format!("`{cell}` is not a finite number"),
        })
}

pub(crate) fn parse_optional(cell: &str, line: usize, column: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_number(cell, line, column).map(Some)
    }
}

/// Reads a two-column `id,<name>` vector file aligned to `ids`, or in file order when `ids` is `None`.
pub fn read_vector<R: Read>(reader: R, ids: Option<&[String]>) -> Result<(Vec<String>, Vec<f64>)> {
    let table = read_keyed(reader, 1)?;
    if table.header.len() != 2 {
        return Err(Error::DimensionMismatch {
            what: "vector file columns",
            expected: 2,
            actual: table.header.len(),
        });
    }
    let ids: Vec<String> = match ids {
        Some(ids) => ids.to_vec(),
        None => table.ids(),
    };
    let rows = table.aligned_to(&ids)?;
    let values = rows
        .iter()
        .map(|(line, _, cells)| parse_number(&cells[0], *line, &table.header[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok((ids, values))
}

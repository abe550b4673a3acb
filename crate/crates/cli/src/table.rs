use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::CliError;

/// A numeric CSV table with a header row.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

const MAX_LISTED: usize = 20;

fn list_rows(rows: &[usize]) -> String {
    let mut s: Vec<String> = rows.iter().take(MAX_LISTED).map(|r| r.to_string()).collect();
    if rows.len() > MAX_LISTED {
        s.push(format!("... ({} rows in total)", rows.len()));
    }
    s.join(", ")
}

impl Table {
    /// Reads a CSV file. Empty, NaN and non-numeric cells are rejected; the
    /// error lists the offending data rows (1-based, header excluded).
    pub fn read(path: &Path) -> Result<Table, CliError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(CliError::data(format!("{}: missing header row", path.display())));
        }
        let mut rows = Vec::new();
        let mut missing = Vec::new();
        let mut text_columns: Vec<usize> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let mut row = Vec::with_capacity(columns.len());
            let mut bad = false;
            for (j, cell) in record.iter().enumerate() {
                let cell = cell.trim();
                if cell.is_empty() {
                    bad = true;
                    row.push(f64::NAN);
                    continue;
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(v),
                    Ok(_) => {
                        bad = true;
                        row.push(f64::NAN);
                    }
                    Err(_) => {
                        if !text_columns.contains(&j) {
                            text_columns.push(j);
                        }
                        row.push(f64::NAN);
                    }
                }
            }
            if bad {
                missing.push(i + 1);
            }
            rows.push(row);
        }
        if !text_columns.is_empty() {
            let names: Vec<&str> = text_columns.iter().map(|&j| columns[j].as_str()).collect();
            return Err(CliError::data(format!(
                "{}: non-numeric values in column(s) {}; encode categorical predictors as dummy columns and pass --groups",
                path.display(),
                names.join(", ")
            )));
        }
        if !missing.is_empty() {
            return Err(CliError::data(format!(
                "{}: missing or NaN cells in row(s) {}",
                path.display(),
                list_rows(&missing)
            )));
        }
        if rows.is_empty() {
            return Err(CliError::data(format!("{}: no data rows", path.display())));
        }
        Ok(Table { columns, rows })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let j = self
            .index(name)
            .ok_or_else(|| CliError::data(format!("column '{name}' not found")))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Matrix of the named columns in the given order.
    pub fn select(&self, names: &[String]) -> Result<Array2<f64>, CliError> {
        let missing: Vec<&str> = names
            .iter()
            .filter(|n| self.index(n).is_none())
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(CliError::data(format!("missing column(s): {}", missing.join(", "))));
        }
        let idx: Vec<usize> = names.iter().map(|n| self.index(n).unwrap()).collect();
        Ok(Array2::from_shape_fn((self.rows.len(), idx.len()), |(i, k)| self.rows[i][idx[k]]))
    }

    /// Splits off the response column; the rest become predictors.
    pub fn split_response(&self, response: &str) -> Result<(Array2<f64>, Vec<f64>, Vec<String>), CliError> {
        let y = self.column(response)?;
        let names: Vec<String> = self.columns.iter().filter(|c| *c != response).cloned().collect();
        if names.is_empty() {
            return Err(CliError::data("no predictor columns besides the response"));
        }
        let x = self.select(&names)?;
        Ok((x, y, names))
    }
}

/// Writes a CSV with the given header and rows.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::data(e.to_string())
}

/// Reads a `column,group` file into a group index per predictor. Predictors
/// not listed get a group of their own.
pub fn read_groups(path: &Path, predictors: &[String]) -> Result<Vec<usize>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut label_of: HashMap<String, String> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if record.len() != 2 {
            return Err(CliError::data(format!("{}: expected column,group rows", path.display())));
        }
        let column = record[0].trim().to_string();
        if !predictors.contains(&column) {
            return Err(CliError::data(format!("{}: unknown column '{column}'", path.display())));
        }
        label_of.insert(column, record[1].trim().to_string());
    }
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut assignment = Vec::with_capacity(predictors.len());
    for name in predictors {
        let label = match label_of.get(name) {
            Some(l) => format!("g:{l}"),
            None => format!("c:{name}"),
        };
        let next = ids.len();
        assignment.push(*ids.entry(label).or_insert(next));
    }
    Ok(assignment)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

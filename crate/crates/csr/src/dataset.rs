//! Time-series ingestion and preprocessing.
//!
//! A [`TimeSeriesTable`] holds named, equal-length numeric columns with a
//! missing-value mask. Preprocessing applies the five-point derivative
//! transform per variable and builds a [`LaggedDesignMatrix`] where cell
//! `((v, lag), t)` is the value of `v` at `t - lag`. A [`Partition`] splits
//! the observation range into fitness, validation and test intervals.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("input has no header row")]
    EmptyInput,
    #[error("duplicate column name `{0}` in header")]
    DuplicateColumn(String),
    #[error("empty column name at header position {0}")]
    EmptyColumnName(usize),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    UnparsableCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("five-point derivative needs at least 5 observations, got {0}")]
    SeriesTooShort(usize),
    #[error("column `{0}` has missing values; the derivative transform needs a fully observed series")]
    MissingInDerivative(String),
    #[error("max_lag {max_lag} must be smaller than the table length {len}")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("partition range [{start}, {end}] is invalid for table length {len}")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },
    #[error("partition ranges must be ordered fitness < validation < test by start index")]
    RangesOutOfOrder,
    #[error("fitness and validation ranges overlap")]
    OverlappingRanges,
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvOptions {
    /// Field delimiter, a single byte.
    pub delimiter: char,
    /// Cell contents treated as missing values (compared after trimming).
    pub missing_tokens: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: ',',
            missing_tokens: vec!["NA".to_string(), String::new()],
        }
    }
}

/// Named, equal-length numeric columns; `None` marks a missing observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl TimeSeriesTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<Option<f64>>>) -> Self {
        assert_eq!(names.len(), columns.len());
        if let Some(first) = columns.first() {
            assert!(columns.iter().all(|c| c.len() == first.len()));
        }
        TimeSeriesTable { names, columns }
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, index: usize) -> &[Option<f64>] {
        &self.columns[index]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&[Option<f64>], DatasetError> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.to_string()))?;
        Ok(&self.columns[idx])
    }

    /// Returns a copy of the table with the five-point derivative applied to
    /// the named columns. Order and names are preserved.
    pub fn with_derivative(&self, variables: &[String]) -> Result<TimeSeriesTable, DatasetError> {
        let mut columns = self.columns.clone();
        for name in variables {
            let idx = self
                .column_index(name)
                .ok_or_else(|| DatasetError::UnknownColumn(name.clone()))?;
            let values: Vec<f64> = self.columns[idx]
                .iter()
                .map(|v| v.ok_or_else(|| DatasetError::MissingInDerivative(name.clone())))
                .collect::<Result<_, _>>()?;
            columns[idx] = five_point_derivative(&values)?;
        }
        Ok(TimeSeriesTable {
            names: self.names.clone(),
            columns,
        })
    }

    /// Serializes the table back to CSV. Loading the output with the same
    /// missing token yields an identical table.
    pub fn to_csv(&self, options: &CsvOptions) -> String {
        let delim = options.delimiter;
        let missing = options.missing_tokens.first().cloned().unwrap_or_default();
        let mut out = String::new();
        out.push_str(&self.names.join(&delim.to_string()));
        out.push('\n');
        for t in 0..self.len() {
            for (i, col) in self.columns.iter().enumerate() {
                if i > 0 {
                    out.push(delim);
                }
                match col[t] {
                    Some(v) => out.push_str(&format!("{v:?}")),
                    None => out.push_str(&missing),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a header-row CSV into a table. Rows are observations in file order.
pub fn load_csv<R: Read>(source: R, options: &CsvOptions) -> Result<TimeSeriesTable, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let mut names = Vec::with_capacity(headers.len());
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        if h.is_empty() {
            return Err(DatasetError::EmptyColumnName(i));
        }
        if names.iter().any(|n| n == h) {
            return Err(DatasetError::DuplicateColumn(h.to_string()));
        }
        names.push(h.to_string());
    }

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != names.len() {
            return Err(DatasetError::RaggedRow {
                row: row_idx + 1,
                expected: names.len(),
                found: record.len(),
            });
        }
        for (col_idx, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if options.missing_tokens.iter().any(|m| m == cell) {
                columns[col_idx].push(None);
            } else {
                let value: f64 =
                    cell.parse()
                        .map_err(|_| DatasetError::UnparsableCell {
                            row: row_idx + 1,
                            column: names[col_idx].clone(),
                            value: cell.to_string(),
                        })?;
                columns[col_idx].push(Some(value));
            }
        }
    }
    Ok(TimeSeriesTable { names, columns })
}

/// Central five-point approximation of the first derivative:
/// `(f(t-2) - 8 f(t-1) + 8 f(t+1) - f(t+2)) / 12`.
///
/// The first and last two points have no centered stencil and come back as
/// missing; no smoothing is applied.
pub fn five_point_derivative(values: &[f64]) -> Result<Vec<Option<f64>>, DatasetError> {
    let n = values.len();
    if n < 5 {
        return Err(DatasetError::SeriesTooShort(n));
    }
    let mut out = vec![None; n];
    for t in 2..n - 2 {
        out[t] = Some(
            (values[t - 2] - 8.0 * values[t - 1] + 8.0 * values[t + 1] - values[t + 2]) / 12.0,
        );
    }
    Ok(out)
}

/// Inclusive, 0-based index intervals for fitness evaluation, validation and
/// test. Fitness and validation are disjoint; intervals are ordered by start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub fitness: (usize, usize),
    pub validation: (usize, usize),
    pub test: (usize, usize),
}

impl Partition {
    pub fn new(
        fitness: (usize, usize),
        validation: (usize, usize),
        test: (usize, usize),
        len: usize,
    ) -> Result<Self, DatasetError> {
        for &(start, end) in &[fitness, validation, test] {
            if start > end || end >= len {
                return Err(DatasetError::RangeOutOfBounds { start, end, len });
            }
        }
        if !(fitness.0 < validation.0 && validation.0 < test.0) {
            return Err(DatasetError::RangesOutOfOrder);
        }
        if fitness.1 >= validation.0 {
            return Err(DatasetError::OverlappingRanges);
        }
        Ok(Partition {
            fitness,
            validation,
            test,
        })
    }

    /// Builds a partition from 1-based inclusive observation numbers, the
    /// convention used in run configurations.
    pub fn from_one_based(
        fitness: (usize, usize),
        validation: (usize, usize),
        test: (usize, usize),
        len: usize,
    ) -> Result<Self, DatasetError> {
        let shift = |(a, b): (usize, usize)| (a.saturating_sub(1), b.saturating_sub(1));
        Partition::new(shift(fitness), shift(validation), shift(test), len)
    }

    pub fn fitness_rows(&self) -> impl Iterator<Item = usize> {
        self.fitness.0..=self.fitness.1
    }

    pub fn validation_rows(&self) -> impl Iterator<Item = usize> {
        self.validation.0..=self.validation.1
    }

    pub fn test_rows(&self) -> impl Iterator<Item = usize> {
        self.test.0..=self.test.1
    }
}

/// Lagged view of a table: cell `((v, lag), t)` equals `v` at `t - lag`.
/// Missing observations are stored as NaN so model evaluation propagates them
/// without branching. Rows below `max_lag` cannot resolve all lags.
#[derive(Debug, Clone)]
pub struct LaggedDesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    max_lag: usize,
}

impl LaggedDesignMatrix {
    pub fn from_table(table: &TimeSeriesTable, max_lag: usize) -> Result<Self, DatasetError> {
        if max_lag >= table.len() {
            return Err(DatasetError::LagTooLarge {
                max_lag,
                len: table.len(),
            });
        }
        let columns = (0..table.num_columns())
            .map(|i| {
                table
                    .column(i)
                    .iter()
                    .map(|v| v.unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        Ok(LaggedDesignMatrix {
            names: table.names().to_vec(),
            columns,
            max_lag,
        })
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// First row index at which every lag up to `max_lag` resolves.
    pub fn first_valid_row(&self) -> usize {
        self.max_lag
    }

    /// Value of `(var, lag)` at row `t`; requires `t >= lag`.
    #[inline]
    pub fn cell(&self, var: usize, lag: usize, t: usize) -> f64 {
        debug_assert!(t >= lag);
        self.columns[var][t - lag]
    }

    /// Raw value of `var` at row `t` (NaN when missing).
    #[inline]
    pub fn value(&self, var: usize, t: usize) -> f64 {
        self.columns[var][t]
    }

    /// Rows of `range` usable for model evaluation: at or past `max_lag`,
    /// with a finite target value and no missing cell in any variable's lag
    /// window. Rows touching missing data are excluded, not imputed.
    pub fn usable_rows(&self, range: (usize, usize), target: usize) -> Vec<usize> {
        (range.0..=range.1)
            .filter(|&t| t >= self.max_lag && t < self.len())
            .filter(|&t| self.value(target, t).is_finite())
            .filter(|&t| {
                self.columns
                    .iter()
                    .all(|col| col[t - self.max_lag..=t].iter().all(|v| v.is_finite()))
            })
            .collect()
    }
}

//! Tabular input: ids, numeric features and an optional index column.
//!
//! CSV layout: a header row, `id` first, one or more numeric feature columns,
//! and the index last. An empty index cell marks a row whose index is to be
//! estimated.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::IndexedSample;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("dataset needs at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("no rows carry an index value")]
    NoIndexedRows,
    #[error("feature vector has {found} entries, dataset has {expected} features")]
    Dimension { found: usize, expected: usize },
}

fn parse_err(line: u64, message: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        message: message.into(),
    }
}

/// Per-column `(min, max)` used to map features into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaling {
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a Vec<f64>>,
    {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            for (k, &x) in row.iter().enumerate() {
                min[k] = min[k].min(x);
                max[k] = max[k].max(x);
            }
        }
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Columns whose range is zero; they map to 0.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&k| self.max[k] - self.min[k] == 0.0)
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, DataError> {
        if x.len() != self.dim() {
            return Err(DataError::Dimension {
                found: x.len(),
                expected: self.dim(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(k, &v)| {
                let range = self.max[k] - self.min[k];
                if range == 0.0 {
                    0.0
                } else {
                    (v - self.min[k]) / range
                }
            })
            .collect())
    }
}

/// Which rows the scaling parameters are fitted on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleFit {
    #[default]
    AllRows,
    IndexedRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub index: Vec<Option<f64>>,
    /// Set once the features have been min-max scaled.
    pub scaling: Option<Scaling>,
}

impl Dataset {
    pub fn from_csv_path(path: &Path) -> Result<Self, DataError> {
        let file = std::fs::File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        if header.len() < 3 {
            return Err(parse_err(
                1,
                "expected columns: id, at least one feature, index",
            ));
        }
        let m = header.len() - 2;
        let feature_names: Vec<String> = header.iter().skip(1).take(m).map(String::from).collect();

        let mut ds = Dataset {
            ids: Vec::new(),
            feature_names,
            features: Vec::new(),
            index: Vec::new(),
            scaling: None,
        };
        let mut seen = HashSet::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != header.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} fields, found {}", header.len(), record.len()),
                ));
            }
            let id = record[0].to_string();
            if id.is_empty() {
                return Err(parse_err(line, "empty id"));
            }
            if !seen.insert(id.clone()) {
                return Err(parse_err(line, format!("duplicate id `{id}`")));
            }
            let mut row = Vec::with_capacity(m);
            for k in 0..m {
                let cell = &record[k + 1];
                let v: f64 = cell.parse().map_err(|_| {
                    parse_err(
                        line,
                        format!("column `{}`: `{cell}` is not a number", &header[k + 1]),
                    )
                })?;
                if !v.is_finite() {
                    return Err(parse_err(
                        line,
                        format!("column `{}` is not finite", &header[k + 1]),
                    ));
                }
                row.push(v);
            }
            let cell = &record[m + 1];
            let index = if cell.is_empty() {
                None
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, format!("index `{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, "index is not finite"));
                }
                Some(v)
            };
            ds.ids.push(id);
            ds.features.push(row);
            ds.index.push(index);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn indexed_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.index[i].is_some())
            .collect()
    }

    pub fn unindexed_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.index[i].is_none())
            .collect()
    }

    /// Indexed rows as a sample, in file order.
    pub fn indexed_sample(&self) -> Result<IndexedSample, DataError> {
        let rows = self.indexed_rows();
        if rows.is_empty() {
            return Err(DataError::NoIndexedRows);
        }
        let points = rows.iter().map(|&i| self.features[i].clone()).collect();
        let values = rows
            .iter()
            .map(|&i| self.index[i].unwrap_or_default())
            .collect();
        IndexedSample::new(points, values).map_err(|e| parse_err(0, e.to_string()))
    }

    pub fn indexed_ids(&self) -> Vec<String> {
        self.indexed_rows()
            .into_iter()
            .map(|i| self.ids[i].clone())
            .collect()
    }

    /// Min-max scales every feature column into `[0, 1]`. The index column is
    /// left untouched. Constant columns map to 0 with a warning.
    pub fn minmax_scale(&self, fit: ScaleFit) -> Result<Self, DataError> {
        let fit_rows: Vec<&Vec<f64>> = match fit {
            ScaleFit::AllRows => self.features.iter().collect(),
            ScaleFit::IndexedRows => self
                .indexed_rows()
                .into_iter()
                .map(|i| &self.features[i])
                .collect(),
        };
        if fit_rows.len() < 2 {
            return Err(DataError::TooFewRows {
                needed: 2,
                found: fit_rows.len(),
            });
        }
        let scaling = Scaling::fit(fit_rows, self.dim());
        for k in scaling.constant_columns() {
            log::warn!(
                "feature column `{}` is constant; scaled to 0",
                self.feature_names[k]
            );
        }
        let features = self
            .features
            .iter()
            .map(|x| scaling.apply(x))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            ids: self.ids.clone(),
            feature_names: self.feature_names.clone(),
            features,
            index: self.index.clone(),
            scaling: Some(scaling),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "id,walk_score,transit_score,bike_score,index
New York,88,88.6,69.3,63
Los Angeles,68.6,52.9,58.7,49
Chicago,77.2,65,72.2,57
Toronto,61,78.2,61,
Houston,47.5,36.2,48.6,48
Montreal,65.4,67,72.6,
";

    #[test]
    fn reads_the_city_table() {
        let ds = Dataset::from_csv_reader(TABLE.as_bytes()).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.indexed_rows(), vec![0, 1, 2, 4]);
        assert_eq!(ds.unindexed_rows(), vec![3, 5]);
        assert_eq!(ds.features[3], vec![61.0, 78.2, 61.0]);
        assert_eq!(ds.index[4], Some(48.0));
    }

    #[test]
    fn walk_score_endpoints_scale_to_unit_interval() {
        let ds = Dataset::from_csv_reader(TABLE.as_bytes())
            .unwrap()
            .minmax_scale(ScaleFit::AllRows)
            .unwrap();
        let houston = ds.ids.iter().position(|i| i == "Houston").unwrap();
        let nyc = ds.ids.iter().position(|i| i == "New York").unwrap();
        assert_eq!(ds.features[houston][0], 0.0);
        assert_eq!(ds.features[nyc][0], 1.0);
        for row in &ds.features {
            assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        // index column is not rescaled
        assert_eq!(ds.index[nyc], Some(63.0));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let csv = "id,a,b,index\nx,5,0,1\ny,5,1,2\nz,5,0.5,\n";
        let ds = Dataset::from_csv_reader(csv.as_bytes())
            .unwrap()
            .minmax_scale(ScaleFit::AllRows)
            .unwrap();
        let col: Vec<f64> = ds.features.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![0.0, 0.0, 0.0]);
        let col: Vec<f64> = ds.features.iter().map(|r| r[1]).collect();
        assert_eq!(col, vec![0.0, 1.0, 0.5]);
        assert_eq!(ds.scaling.unwrap().constant_columns(), vec![0]);
    }

    #[test]
    fn indexed_only_fit_leaves_other_rows_unclamped() {
        let csv = "id,a,index\nx,0,1\ny,1,2\nz,2,\n";
        let ds = Dataset::from_csv_reader(csv.as_bytes())
            .unwrap()
            .minmax_scale(ScaleFit::IndexedRows)
            .unwrap();
        assert_eq!(ds.features[2], vec![2.0]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let csv = "id,a,index\nx,0,1\ny,abc,2\n";
        match Dataset::from_csv_reader(csv.as_bytes()) {
            Err(DataError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
        let csv = "id,a,index\nx,0,1\nx,1,2\n";
        assert!(matches!(
            Dataset::from_csv_reader(csv.as_bytes()),
            Err(DataError::Parse { line: 3, .. })
        ));
        let csv = "id,a,index\nx,0,1\ny,1\n";
        assert!(matches!(
            Dataset::from_csv_reader(csv.as_bytes()),
            Err(DataError::Parse { line: 3, .. })
        ));
        assert!(Dataset::from_csv_reader("id,index\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn scaling_rejects_wrong_dimension() {
        let s = Scaling {
            min: vec![0.0],
            max: vec![1.0],
        };
        assert!(s.apply(&[0.5, 0.5]).is_err());
    }
}

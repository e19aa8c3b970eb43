use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marker for a missing feature cell. Never escapes into a [`crate::nn::Matrix`].
pub const MISSING: f64 = f64::NAN;

pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub treatment: String,
    pub outcome: String,
    pub client: String,
    /// Feature columns in order; every other column when absent.
    #[serde(default)]
    pub features: Option<Vec<String>>,
}

/// Raw tabular data in the unified `(X, T, Y, client_id)` layout.
#[derive(Debug, Clone)]
pub struct DataTable {
    feature_names: Vec<String>,
    /// Row-major `n x d`, [`MISSING`] marks empty cells.
    features: Vec<f64>,
    treatment: Vec<u8>,
    outcome: Vec<u8>,
    client_id: Vec<String>,
}

impl DataTable {
    pub fn new(
        feature_names: Vec<String>,
        features: Vec<f64>,
        treatment: Vec<u8>,
        outcome: Vec<u8>,
        client_id: Vec<String>,
    ) -> Result<Self> {
        let n = treatment.len();
        let d = feature_names.len();
        if n == 0 || d == 0 {
            return Err(Error::Validation(format!("table needs n >= 1 and d >= 1, got n={n}, d={d}")));
        }
        if features.len() != n * d {
            return Err(Error::dim("DataTable features", n * d, features.len()));
        }
        if outcome.len() != n || client_id.len() != n {
            return Err(Error::dim("DataTable columns", n, outcome.len().min(client_id.len())));
        }
        for (i, (&t, &y)) in treatment.iter().zip(&outcome).enumerate() {
            if t > 1 || y > 1 {
                return Err(Error::Validation(format!("row {i}: treatment and outcome must be 0 or 1")));
            }
        }
        if features.iter().any(|v| v.is_infinite()) {
            return Err(Error::Validation("features must be finite or missing".into()));
        }
        Ok(Self {
            feature_names,
            features,
            treatment,
            outcome,
            client_id,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.treatment.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.n_features();
        &mut self.features[i * d..(i + 1) * d]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features() + j]
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[u8] {
        &self.outcome
    }

    pub fn client_ids(&self) -> &[String] {
        &self.client_id
    }

    pub fn missing_count(&self) -> usize {
        self.features.iter().filter(|v| is_missing(**v)).count()
    }

    /// Distinct client labels in lexicographic order.
    pub fn client_labels(&self) -> Vec<String> {
        self.client_id.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Exact equality, treating missing cells as equal to each other.
    pub fn same_as(&self, other: &DataTable) -> bool {
        self.feature_names == other.feature_names
            && self.treatment == other.treatment
            && self.outcome == other.outcome
            && self.client_id == other.client_id
            && self.features.len() == other.features.len()
            && self
                .features
                .iter()
                .zip(&other.features)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (is_missing(*a) && is_missing(*b)))
    }
}

fn parse_binary(raw: &str, row: usize, column: &str) -> Result<u8> {
    match raw.trim() {
        "0" | "0.0" => Ok(0),
        "1" | "1.0" => Ok(1),
        other => Err(Error::Validation(format!(
            "data row {row}, column `{column}`: expected 0 or 1, got `{other}`"
        ))),
    }
}

/// Reads a headered, comma-separated file. Empty feature cells become
/// [`MISSING`]; data rows are numbered from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<DataTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    let t_col = find(&schema.treatment)?;
    let y_col = find(&schema.outcome)?;
    let c_col = find(&schema.client)?;
    let feature_names: Vec<String> = match &schema.features {
        Some(f) => f.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != t_col && *i != y_col && *i != c_col)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let f_cols = feature_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut features = Vec::new();
    let mut treatment = Vec::new();
    let mut outcome = Vec::new();
    let mut client_id = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let cell = |c: usize| record.get(c).unwrap_or("").trim();
        treatment.push(parse_binary(cell(t_col), row, &schema.treatment)?);
        outcome.push(parse_binary(cell(y_col), row, &schema.outcome)?);
        client_id.push(cell(c_col).to_string());
        for (&c, name) in f_cols.iter().zip(&feature_names) {
            let raw = cell(c);
            if raw.is_empty() {
                features.push(MISSING);
            } else {
                let v: f64 = raw.parse().map_err(|e: std::num::ParseFloatError| Error::Parse {
                    row,
                    column: name.clone(),
                    message: format!("`{raw}`: {e}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: name.clone(),
                        message: format!("`{raw}` is not finite"),
                    });
                }
                features.push(v);
            }
        }
    }
    DataTable::new(feature_names, features, treatment, outcome, client_id)
}

/// Writes a table in the layout [`read_csv`] accepts with schema
/// `treatment="t"`, `outcome="y"`, `client="client_id"`.
pub fn write_csv<W: std::io::Write>(table: &DataTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = table.feature_names.iter().map(String::as_str).collect();
    header.extend(["t", "y", "client_id"]);
    w.write_record(&header)?;
    for i in 0..table.n_rows() {
        let mut rec: Vec<String> = table
            .row(i)
            .iter()
            .map(|&v| if is_missing(v) { String::new() } else { format!("{v}") })
            .collect();
        rec.push(table.treatment[i].to_string());
        rec.push(table.outcome[i].to_string());
        rec.push(table.client_id[i].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema {
            treatment: "t".into(),
            outcome: "y".into(),
            client: "site".into(),
            features: None,
        }
    }

    #[test]
    fn empty_cell_becomes_missing() {
        let csv = "a,b,t,y,site\n1.5,2,1,0,x\n,3,0,1,y\n4,5,1,1,x\n";
        let table = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(table.n_rows(), 3);
        assert_eq!(table.n_features(), 2);
        assert_eq!(table.missing_count(), 1);
        assert!(is_missing(table.value(1, 0)));
        assert_eq!(table.client_labels(), vec!["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn non_binary_outcome_names_row() {
        let csv = "a,t,y,site\n1,1,0,x\n2,0,2,x\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "a,t,y\n1,1,0\n";
        assert!(matches!(read_csv(csv.as_bytes(), &schema()), Err(Error::Schema(_))));
    }

    #[test]
    fn bad_number_is_parse_error() {
        let csv = "a,t,y,site\n1,1,0,x\nabc,0,1,x\n";
        match read_csv(csv.as_bytes(), &schema()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_then_read_round_trips() {
        let csv = "a,b,t,y,site\n0.1,-2e-7,1,0,x\n,3.25,0,1,y\n";
        let table = read_csv(csv.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        write_csv(&table, &mut buf).unwrap();
        let back = read_csv(
            buf.as_slice(),
            &CsvSchema {
                treatment: "t".into(),
                outcome: "y".into(),
                client: "client_id".into(),
                features: None,
            },
        )
        .unwrap();
        assert!(table.same_as(&back));
    }
}

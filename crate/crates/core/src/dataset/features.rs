use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;

use super::{csv_reader, csv_writer, parse_f64, DataError, FeatureManifest};

/// Static feature values, one row per program, one column per manifest
/// feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    program_ids: Vec<String>,
    feature_ids: Vec<String>,
    values: DMatrix<f64>,
    index: HashMap<String, usize>,
}

impl FeatureMatrix {
    /// Values must be finite and nonnegative (they are counts or averages of
    /// counts); program ids must be unique.
    pub fn new(program_ids: Vec<String>, feature_ids: Vec<String>, values: DMatrix<f64>) -> Result<Self, DataError> {
        if program_ids.is_empty() {
            return Err(DataError::InsufficientData("feature matrix has no programs".into()));
        }
        if feature_ids.is_empty() {
            return Err(DataError::InsufficientData("feature matrix has no features".into()));
        }
        if values.nrows() != program_ids.len() || values.ncols() != feature_ids.len() {
            return Err(DataError::Schema {
                column: String::new(),
                message: format!(
                    "matrix is {}x{} but {} programs and {} features were named",
                    values.nrows(),
                    values.ncols(),
                    program_ids.len(),
                    feature_ids.len()
                ),
            });
        }
        let mut index = HashMap::with_capacity(program_ids.len());
        for (i, id) in program_ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(DataError::Duplicate {
                    kind: "program_id",
                    id: id.clone(),
                });
            }
        }
        for (i, row) in values.row_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(DataError::InvalidValue {
                        line: i as u64 + 2,
                        column: feature_ids[j].clone(),
                        message: format!("feature values must be finite and nonnegative, got {v}"),
                    });
                }
            }
        }
        Ok(Self {
            program_ids,
            feature_ids,
            values,
            index,
        })
    }

    /// Load `features.csv`. The header must be `program_id` followed by the
    /// manifest ids in manifest order.
    pub fn load(path: impl AsRef<Path>, manifest: &FeatureManifest) -> Result<Self, DataError> {
        let path = path.as_ref();
        let mut reader = csv_reader(path)?;
        let headers = reader.headers().map_err(|e| DataError::csv(path, e))?.clone();
        check_header(&headers, manifest)?;

        let p = manifest.len();
        let mut program_ids = Vec::new();
        let mut data = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| DataError::csv(path, e))?;
            let line = record.position().map_or(0, |pos| pos.line());
            if record.len() != p + 1 {
                return Err(DataError::Schema {
                    column: String::new(),
                    message: format!("line {line}: expected {} cells, found {}", p + 1, record.len()),
                });
            }
            program_ids.push(record[0].trim().to_string());
            for (cell, id) in record.iter().skip(1).zip(manifest.ids()) {
                data.push(parse_f64(line, id, cell)?);
            }
        }
        let n = program_ids.len();
        let values = DMatrix::from_row_slice(n, p, &data);
        Self::new(program_ids, manifest.ids().map(str::to_string).collect(), values)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut w = csv_writer(path)?;
        let err = |e| DataError::csv(path, e);
        let mut header = vec!["program_id".to_string()];
        header.extend(self.feature_ids.iter().cloned());
        w.write_record(&header).map_err(err)?;
        for (i, id) in self.program_ids.iter().enumerate() {
            let mut row = Vec::with_capacity(self.n_features() + 1);
            row.push(id.clone());
            row.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|e| DataError::io(path, e))
    }

    pub fn program_ids(&self) -> &[String] {
        &self.program_ids
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_programs(&self) -> usize {
        self.program_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn program_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }
}

fn check_header(headers: &csv::StringRecord, manifest: &FeatureManifest) -> Result<(), DataError> {
    if headers.get(0).map(str::trim) != Some("program_id") {
        return Err(DataError::Schema {
            column: headers.get(0).unwrap_or("").to_string(),
            message: "first column must be `program_id`".into(),
        });
    }
    let found: Vec<&str> = headers.iter().skip(1).map(str::trim).collect();
    for name in &found {
        if manifest.index_of(name).is_none() {
            return Err(DataError::Schema {
                column: name.to_string(),
                message: "column is not in the feature manifest".into(),
            });
        }
    }
    for id in manifest.ids() {
        if !found.contains(&id) {
            return Err(DataError::Schema {
                column: id.to_string(),
                message: "manifest feature is missing from the file".into(),
            });
        }
    }
    if found.iter().copied().ne(manifest.ids()) {
        let (pos, name) = found
            .iter()
            .zip(manifest.ids())
            .enumerate()
            .find(|(_, (a, b))| *a != b)
            .map(|(i, (a, _))| (i, *a))
            .unwrap_or((0, ""));
        let message = if found.len() != manifest.len() {
            "column appears more than once".to_string()
        } else {
            format!("column {} is out of manifest order", pos + 2)
        };
        return Err(DataError::Schema {
            column: name.to_string(),
            message,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        file
    }

    fn header(manifest: &FeatureManifest) -> String {
        let mut h = String::from("program_id");
        for id in manifest.ids() {
            h.push(',');
            h.push_str(id);
        }
        h
    }

    #[test]
    fn loads_thirty_by_fifty_six() {
        let m = FeatureManifest::milepost();
        let mut text = header(&m);
        text.push('\n');
        for i in 0..30 {
            text.push_str(&format!("prog{i}"));
            for j in 0..56 {
                text.push_str(&format!(",{}", i * j));
            }
            text.push('\n');
        }
        let file = write_file(&text);
        let fm = FeatureMatrix::load(file.path(), &m).unwrap();
        assert_eq!(fm.n_programs(), 30);
        assert_eq!(fm.n_features(), 56);
        assert_eq!(fm.values()[(3, 5)], 15.0);
        assert_eq!(fm.program_index("prog7"), Some(7));
    }

    #[test]
    fn single_program_all_zero_is_valid() {
        let m = FeatureManifest::milepost();
        let text = format!("{}\nonly{}\n", header(&m), ",0".repeat(56));
        let fm = FeatureMatrix::load(write_file(&text).path(), &m).unwrap();
        assert_eq!(fm.n_programs(), 1);
        assert!(fm.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn extra_column_is_a_schema_error_naming_it() {
        let m = FeatureManifest::milepost();
        let text = format!("{},ft57\nx{}\n", header(&m), ",1".repeat(57));
        let err = FeatureMatrix::load(write_file(&text).path(), &m).unwrap_err();
        match err {
            DataError::Schema { column, .. } => assert_eq!(column, "ft57"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_column_is_a_schema_error_naming_it() {
        let m = FeatureManifest::milepost();
        let h = header(&m).replace(",ft13", "");
        let text = format!("{h}\nx{}\n", ",1".repeat(55));
        let err = FeatureMatrix::load(write_file(&text).path(), &m).unwrap_err();
        match err {
            DataError::Schema { column, .. } => assert_eq!(column, "ft13"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_line_and_column() {
        let m = FeatureManifest::milepost();
        let mut cells = vec!["1"; 56];
        cells[2] = "lots";
        let text = format!("{}\nx,{}\n", header(&m), cells.join(","));
        let err = FeatureMatrix::load(write_file(&text).path(), &m).unwrap_err();
        match err {
            DataError::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "ft3");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_program_rejected() {
        let m = FeatureManifest::milepost();
        let row = format!("a{}\n", ",1".repeat(56));
        let text = format!("{}\n{row}{row}", header(&m));
        let err = FeatureMatrix::load(write_file(&text).path(), &m).unwrap_err();
        assert!(matches!(err, DataError::Duplicate { kind: "program_id", .. }));
    }

    #[test]
    fn negative_count_rejected() {
        let err =
            FeatureMatrix::new(vec!["a".into()], vec!["f".into()], DMatrix::from_element(1, 1, -1.0)).unwrap_err();
        assert!(matches!(err, DataError::InvalidValue { .. }));
    }
}

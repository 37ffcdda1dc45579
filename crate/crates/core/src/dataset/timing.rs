use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_reader, csv_writer, parse_f64, ConfigurationCatalog, DataError, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub mean_seconds: f64,
    pub repetitions: u32,
}

/// Measured execution time per (program, configuration) cell.
///
/// Stored densely; a cell is `None` until recorded. The table knows its
/// program and configuration universe so that incompleteness can be
/// reported by id.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    program_ids: Vec<String>,
    config_ids: Vec<String>,
    program_index: HashMap<String, usize>,
    config_index: HashMap<String, usize>,
    cells: Vec<Option<TimingRecord>>,
    recorded: usize,
}

impl TimingTable {
    /// An empty table over the given programs and configurations. Ids are
    /// assumed unique (they come from validated matrices and catalogs).
    pub fn new(program_ids: Vec<String>, config_ids: Vec<String>) -> Self {
        let program_index = program_ids.iter().cloned().zip(0..).collect();
        let config_index = config_ids.iter().cloned().zip(0..).collect();
        let cells = vec![None; program_ids.len() * config_ids.len()];
        Self {
            program_ids,
            config_ids,
            program_index,
            config_index,
            cells,
            recorded: 0,
        }
    }

    pub fn for_bundle(features: &FeatureMatrix, catalog: &ConfigurationCatalog) -> Self {
        Self::new(
            features.program_ids().to_vec(),
            catalog.ids().map(str::to_string).collect(),
        )
    }

    /// Load `timings.csv` against an already loaded feature matrix and
    /// catalog. An empty file yields an empty (incomplete) table.
    pub fn load(
        path: impl AsRef<Path>,
        features: &FeatureMatrix,
        catalog: &ConfigurationCatalog,
    ) -> Result<Self, DataError> {
        let path = path.as_ref();
        let mut table = Self::for_bundle(features, catalog);
        let mut reader = csv_reader(path)?;
        let headers = match reader.headers() {
            Ok(h) => h.clone(),
            Err(e) => return Err(DataError::csv(path, e)),
        };
        if headers.is_empty() {
            return Ok(table);
        }
        let expected = ["program_id", "config_id", "mean_seconds", "repetitions"];
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        if names != expected {
            let column = names
                .iter()
                .zip(expected)
                .find(|(a, b)| *a != b)
                .map(|(a, _)| a.to_string())
                .or_else(|| names.get(expected.len()).map(|s| s.to_string()))
                .unwrap_or_else(|| expected[names.len().min(3)].to_string());
            return Err(DataError::Schema {
                column,
                message: format!("expected header `{}`", expected.join(",")),
            });
        }
        for record in reader.records() {
            let record = record.map_err(|e| DataError::csv(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let program = record.get(0).unwrap_or("").trim();
            let config = record.get(1).unwrap_or("").trim();
            let p = table.program_idx(program).ok_or_else(|| DataError::UnknownReference {
                kind: "program_id",
                id: program.to_string(),
            })?;
            let c = table.config_idx(config).ok_or_else(|| DataError::UnknownReference {
                kind: "config_id",
                id: config.to_string(),
            })?;
            let mean_seconds = parse_f64(line, "mean_seconds", record.get(2).unwrap_or(""))?;
            let reps_cell = record.get(3).unwrap_or("").trim();
            let repetitions: u32 = reps_cell
                .parse()
                .map_err(|e: std::num::ParseIntError| DataError::Parse {
                    line,
                    column: "repetitions".into(),
                    value: reps_cell.to_string(),
                    message: e.to_string(),
                })?;
            table
                .insert(
                    p,
                    c,
                    TimingRecord {
                        mean_seconds,
                        repetitions,
                    },
                )
                .map_err(|e| match e {
                    DataError::InvalidValue { column, message, .. } => {
                        DataError::InvalidValue { line, column, message }
                    }
                    other => other,
                })?;
        }
        Ok(table)
    }

    /// Record one cell. Times must be positive and finite, repetitions at
    /// least one, and the cell must not already be recorded.
    pub fn insert(&mut self, program: usize, config: usize, record: TimingRecord) -> Result<(), DataError> {
        if !(record.mean_seconds.is_finite() && record.mean_seconds > 0.0) {
            return Err(DataError::InvalidValue {
                line: 0,
                column: "mean_seconds".into(),
                message: format!("execution time must be positive, got {}", record.mean_seconds),
            });
        }
        if record.repetitions == 0 {
            return Err(DataError::InvalidValue {
                line: 0,
                column: "repetitions".into(),
                message: "repetitions must be at least 1".into(),
            });
        }
        let slot = &mut self.cells[program * self.config_ids.len() + config];
        if slot.is_some() {
            return Err(DataError::Duplicate {
                kind: "timing record",
                id: format!("{}/{}", self.program_ids[program], self.config_ids[config]),
            });
        }
        *slot = Some(record);
        self.recorded += 1;
        Ok(())
    }

    pub fn insert_by_id(&mut self, program_id: &str, config_id: &str, record: TimingRecord) -> Result<(), DataError> {
        let p = self
            .program_idx(program_id)
            .ok_or_else(|| DataError::UnknownReference {
                kind: "program_id",
                id: program_id.to_string(),
            })?;
        let c = self.config_idx(config_id).ok_or_else(|| DataError::UnknownReference {
            kind: "config_id",
            id: config_id.to_string(),
        })?;
        self.insert(p, c, record)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut w = csv_writer(path)?;
        let err = |e| DataError::csv(path, e);
        w.write_record(["program_id", "config_id", "mean_seconds", "repetitions"])
            .map_err(err)?;
        for (p, c, rec) in self.records() {
            w.write_record([
                self.program_ids[p].as_str(),
                self.config_ids[c].as_str(),
                rec.mean_seconds.to_string().as_str(),
                rec.repetitions.to_string().as_str(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| DataError::io(path, e))
    }

    pub fn get(&self, program: usize, config: usize) -> Option<&TimingRecord> {
        self.cells[program * self.config_ids.len() + config].as_ref()
    }

    pub fn seconds(&self, program: usize, config: usize) -> Option<f64> {
        self.get(program, config).map(|r| r.mean_seconds)
    }

    /// Recorded cells in (program, config) order.
    pub fn records(&self) -> impl Iterator<Item = (usize, usize, &TimingRecord)> {
        let width = self.config_ids.len();
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(k, cell)| cell.as_ref().map(|r| (k / width, k % width, r)))
    }

    pub fn len(&self) -> usize {
        self.recorded
    }

    pub fn is_empty(&self) -> bool {
        self.recorded == 0
    }

    pub fn program_ids(&self) -> &[String] {
        &self.program_ids
    }

    pub fn config_ids(&self) -> &[String] {
        &self.config_ids
    }

    pub fn program_idx(&self, id: &str) -> Option<usize> {
        self.program_index.get(id).copied()
    }

    pub fn config_idx(&self, id: &str) -> Option<usize> {
        self.config_index.get(id).copied()
    }

    /// Configurations without a record for `program`, in catalog order.
    pub fn missing_for(&self, program: usize) -> Vec<&str> {
        (0..self.config_ids.len())
            .filter(|&c| self.get(program, c).is_none())
            .map(|c| self.config_ids[c].as_str())
            .collect()
    }

    pub fn is_complete_for(&self, program: usize) -> bool {
        (0..self.config_ids.len()).all(|c| self.get(program, c).is_some())
    }

    pub fn require_complete(&self, program: usize) -> Result<(), DataError> {
        let missing = self.missing_for(program);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(DataError::IncompleteTimings {
                program_id: self.program_ids[program].clone(),
                missing: missing.into_iter().map(str::to_string).collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Configuration, FeatureMatrix};
    use nalgebra::DMatrix;
    use std::io::Write;

    fn context(n: usize, c: usize) -> (FeatureMatrix, ConfigurationCatalog) {
        let fm = FeatureMatrix::new(
            (0..n).map(|i| format!("p{i}")).collect(),
            vec!["f".into()],
            DMatrix::from_fn(n, 1, |i, _| i as f64),
        )
        .unwrap();
        let mut entries = vec![Configuration {
            id: "null".into(),
            flags: vec![],
        }];
        entries.extend((1..c).map(|k| Configuration {
            id: format!("c{k}"),
            flags: vec![format!("-f{k}")],
        }));
        (fm, ConfigurationCatalog::new(entries).unwrap())
    }

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        file
    }

    #[test]
    fn full_grid_loads_every_record() {
        let (fm, cat) = context(30, 192);
        let mut text = String::from("program_id,config_id,mean_seconds,repetitions\n");
        for p in fm.program_ids() {
            for c in cat.ids() {
                text.push_str(&format!("{p},{c},1.5,3\n"));
            }
        }
        let t = TimingTable::load(write_file(&text).path(), &fm, &cat).unwrap();
        assert_eq!(t.len(), 5760);
        assert!((0..30).all(|p| t.is_complete_for(p)));
    }

    #[test]
    fn empty_file_gives_empty_table() {
        let (fm, cat) = context(2, 2);
        let t = TimingTable::load(write_file("").path(), &fm, &cat).unwrap();
        assert!(t.is_empty());
        let err = t.require_complete(0).unwrap_err();
        assert!(matches!(err, DataError::IncompleteTimings { ref missing, .. } if missing.len() == 2));
    }

    #[test]
    fn negative_time_is_a_value_error() {
        let (fm, cat) = context(2, 2);
        let text = "program_id,config_id,mean_seconds,repetitions\np0,null,-1.0,1\n";
        let err = TimingTable::load(write_file(text).path(), &fm, &cat).unwrap_err();
        assert!(matches!(err, DataError::InvalidValue { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_ids_are_reference_errors() {
        let (fm, cat) = context(2, 2);
        let text = "program_id,config_id,mean_seconds,repetitions\nzz,null,1.0,1\n";
        let err = TimingTable::load(write_file(text).path(), &fm, &cat).unwrap_err();
        assert!(matches!(err, DataError::UnknownReference { kind: "program_id", .. }));
        let text = "program_id,config_id,mean_seconds,repetitions\np0,c9,1.0,1\n";
        let err = TimingTable::load(write_file(text).path(), &fm, &cat).unwrap_err();
        assert!(matches!(err, DataError::UnknownReference { kind: "config_id", .. }));
    }

    #[test]
    fn duplicate_cell_rejected() {
        let (fm, cat) = context(2, 2);
        let text = "program_id,config_id,mean_seconds,repetitions\np0,c1,1.0,1\np0,c1,2.0,1\n";
        let err = TimingTable::load(write_file(text).path(), &fm, &cat).unwrap_err();
        assert!(matches!(err, DataError::Duplicate { .. }));
    }
}

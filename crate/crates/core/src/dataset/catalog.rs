use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{csv_reader, csv_writer, DataError};

/// Id of the mandatory baseline configuration with every tunable parameter
/// disabled.
pub const NULL_CONFIG_ID: &str = "null";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub id: String,
    pub flags: Vec<String>,
}

/// The space of compiler configurations, in a fixed order. Catalog order is
/// the tie-break order for the timing oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationCatalog {
    entries: Vec<Configuration>,
    index: HashMap<String, usize>,
    null_index: usize,
}

impl ConfigurationCatalog {
    pub fn new(entries: Vec<Configuration>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, c) in entries.iter().enumerate() {
            if c.id.is_empty() {
                return Err(DataError::Schema {
                    column: "config_id".into(),
                    message: format!("configuration {} has an empty id", i + 1),
                });
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(DataError::Duplicate {
                    kind: "config_id",
                    id: c.id.clone(),
                });
            }
        }
        let null_index = *index.get(NULL_CONFIG_ID).ok_or_else(|| DataError::Schema {
            column: "config_id".into(),
            message: format!("catalog has no `{NULL_CONFIG_ID}` configuration"),
        })?;
        Ok(Self {
            entries,
            index,
            null_index,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let mut reader = csv_reader(path)?;
        let headers = reader.headers().map_err(|e| DataError::csv(path, e))?.clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        if names != ["config_id", "flags"] {
            let column = names
                .iter()
                .zip(["config_id", "flags"])
                .find(|(a, b)| *a != b)
                .map(|(a, _)| a.to_string())
                .or_else(|| names.get(2).map(|s| s.to_string()))
                .unwrap_or_else(|| "flags".to_string());
            return Err(DataError::Schema {
                column,
                message: "expected header `config_id,flags`".into(),
            });
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| DataError::csv(path, e))?;
            entries.push(Configuration {
                id: record.get(0).unwrap_or("").trim().to_string(),
                flags: record
                    .get(1)
                    .unwrap_or("")
                    .split_whitespace()
                    .map(str::to_string)
                    .collect(),
            });
        }
        Self::new(entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut w = csv_writer(path)?;
        let err = |e| DataError::csv(path, e);
        w.write_record(["config_id", "flags"]).map_err(err)?;
        for c in &self.entries {
            w.write_record([c.id.as_str(), c.flags.join(" ").as_str()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| DataError::io(path, e))
    }

    pub fn entries(&self) -> &[Configuration] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|c| c.id.as_str())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn null_index(&self) -> usize {
        self.null_index
    }

    pub fn get(&self, index: usize) -> &Configuration {
        &self.entries[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn loads_flags_as_tokens() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "config_id,flags").unwrap();
        writeln!(file, "null,").unwrap();
        writeln!(file, "c1,-O2 -funroll-loops").unwrap();
        let cat = ConfigurationCatalog::load(file.path()).unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.null_index(), 0);
        assert_eq!(cat.get(1).flags, vec!["-O2", "-funroll-loops"]);
    }

    #[test]
    fn null_config_is_mandatory() {
        let err = ConfigurationCatalog::new(vec![Configuration {
            id: "c1".into(),
            flags: vec![],
        }])
        .unwrap_err();
        assert!(matches!(err, DataError::Schema { .. }));
    }

    #[test]
    fn duplicate_config_rejected() {
        let c = Configuration {
            id: "null".into(),
            flags: vec![],
        };
        let err = ConfigurationCatalog::new(vec![c.clone(), c]).unwrap_err();
        assert!(matches!(err, DataError::Duplicate { .. }));
    }
}

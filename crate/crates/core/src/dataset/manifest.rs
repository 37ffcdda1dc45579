use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{csv_reader, DataError};

/// Coarse grouping of static features, used only to annotate reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureCategory {
    Cfg,
    Op,
    Phi,
    Other,
}

impl fmt::Display for FeatureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureCategory::Cfg => "cfg",
            FeatureCategory::Op => "op",
            FeatureCategory::Phi => "phi",
            FeatureCategory::Other => "other",
        })
    }
}

impl FromStr for FeatureCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cfg" => Ok(FeatureCategory::Cfg),
            "op" => Ok(FeatureCategory::Op),
            "phi" => Ok(FeatureCategory::Phi),
            "other" => Ok(FeatureCategory::Other),
            other => Err(format!("unknown feature category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub id: String,
    pub description: String,
    pub category: Option<FeatureCategory>,
}

/// Ordered list of feature identifiers. Column `j` of every feature matrix
/// loaded against this manifest is `entries[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    entries: Vec<FeatureEntry>,
}

use FeatureCategory::{Cfg, Op, Other, Phi};

/// The 56 Milepost GCC / cTuning static features.
const MILEPOST_FEATURES: [(&str, FeatureCategory); 56] = [
    ("number of basic blocks in the method", Cfg),
    ("number of basic blocks with a single successor", Cfg),
    ("number of basic blocks with two successors", Cfg),
    ("number of basic blocks with more than two successors", Cfg),
    ("number of basic blocks with a single predecessor", Cfg),
    ("number of basic blocks with two predecessors", Cfg),
    ("number of basic blocks with more than two predecessors", Cfg),
    (
        "number of basic blocks with a single predecessor and a single successor",
        Cfg,
    ),
    (
        "number of basic blocks with a single predecessor and two successors",
        Cfg,
    ),
    ("number of basic blocks with two predecessors and one successor", Cfg),
    ("number of basic blocks with two successors and two predecessors", Cfg),
    (
        "number of basic blocks with more than two successors and more than two predecessors",
        Cfg,
    ),
    ("number of basic blocks with fewer than 15 instructions", Cfg),
    ("number of basic blocks with instruction count in [15, 500]", Cfg),
    ("number of basic blocks with more than 500 instructions", Cfg),
    ("number of edges in the control flow graph", Cfg),
    ("number of critical edges in the control flow graph", Cfg),
    ("number of abnormal edges in the control flow graph", Cfg),
    ("number of direct calls in the method", Other),
    ("number of conditional branches in the method", Cfg),
    ("number of assignment instructions in the method", Op),
    ("number of binary integer operations in the method", Op),
    ("number of binary floating point operations in the method", Op),
    ("number of instructions in the method", Op),
    ("average number of instructions in basic blocks", Op),
    ("average number of phi-nodes at the beginning of a basic block", Phi),
    ("average number of arguments for a phi-node", Phi),
    ("number of basic blocks with no phi nodes", Phi),
    ("number of basic blocks with phi node count in [0, 3]", Phi),
    ("number of basic blocks with more than 3 phi nodes", Phi),
    (
        "number of basic blocks where the total phi-node argument count is greater than 5",
        Phi,
    ),
    (
        "number of basic blocks where the total phi-node argument count is in [1, 5]",
        Phi,
    ),
    ("number of switch instructions in the method", Cfg),
    ("number of unary operations in the method", Op),
    ("number of instructions doing pointer arithmetic in the method", Op),
    ("number of indirect references via pointers", Other),
    ("number of times the address of a variable is taken", Other),
    ("number of times the address of a function is taken", Other),
    ("number of indirect calls in the method", Other),
    (
        "number of assignment instructions with an integer constant left operand",
        Op,
    ),
    ("number of binary operations with an integer constant operand", Op),
    ("number of calls with pointer arguments", Other),
    ("number of calls with more than 4 arguments", Other),
    ("number of calls returning a pointer", Other),
    ("number of calls returning an integer", Other),
    ("number of occurrences of integer constant zero", Other),
    ("number of occurrences of 32-bit integer constants", Other),
    ("number of occurrences of integer constant one", Other),
    ("number of occurrences of 64-bit integer constants", Other),
    ("number of references to local variables in the method", Other),
    (
        "number of references (def/use) to static/extern variables in the method",
        Other,
    ),
    ("number of local variables referred to in the method", Other),
    ("number of static/extern variables referred to in the method", Other),
    ("number of local variables that are pointers", Other),
    ("number of static/extern variables that are pointers", Other),
    ("number of unconditional branches in the method", Cfg),
];

impl Default for FeatureManifest {
    fn default() -> Self {
        Self::milepost()
    }
}

impl FeatureManifest {
    /// The built-in manifest: `ft1` .. `ft56`.
    pub fn milepost() -> Self {
        let entries = MILEPOST_FEATURES
            .iter()
            .enumerate()
            .map(|(i, (description, category))| FeatureEntry {
                id: format!("ft{}", i + 1),
                description: (*description).to_string(),
                category: Some(*category),
            })
            .collect();
        Self { entries }
    }

    pub fn new(entries: Vec<FeatureEntry>) -> Result<Self, DataError> {
        if entries.is_empty() {
            return Err(DataError::Schema {
                column: String::new(),
                message: "manifest has no features".into(),
            });
        }
        let mut seen = HashSet::new();
        for entry in &entries {
            if entry.id.is_empty() || entry.id == "program_id" {
                return Err(DataError::Schema {
                    column: entry.id.clone(),
                    message: "invalid feature id".into(),
                });
            }
            if !seen.insert(entry.id.as_str()) {
                return Err(DataError::Duplicate {
                    kind: "feature_id",
                    id: entry.id.clone(),
                });
            }
        }
        Ok(Self { entries })
    }

    /// Read a `feature_id,description,category` file. The category cell may
    /// be empty.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let mut reader = csv_reader(path)?;
        let headers = reader.headers().map_err(|e| DataError::csv(path, e))?.clone();
        let expected = ["feature_id", "description", "category"];
        for (i, name) in expected.iter().enumerate() {
            if headers.get(i).map(str::trim) != Some(*name) {
                return Err(DataError::Schema {
                    column: headers.get(i).unwrap_or("").to_string(),
                    message: format!("expected column {} to be `{name}`", i + 1),
                });
            }
        }
        if let Some(extra) = headers.get(expected.len()) {
            return Err(DataError::Schema {
                column: extra.to_string(),
                message: "unexpected column".into(),
            });
        }
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| DataError::csv(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let category = match record.get(2).map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(s.parse().map_err(|message| DataError::Parse {
                    line,
                    column: "category".into(),
                    value: s.to_string(),
                    message,
                })?),
            };
            entries.push(FeatureEntry {
                id: record.get(0).unwrap_or("").trim().to_string(),
                description: record.get(1).unwrap_or("").to_string(),
                category,
            });
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FeatureEntry] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn category_of(&self, id: &str) -> Option<FeatureCategory> {
        self.entries.iter().find(|e| e.id == id).and_then(|e| e.category)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn builtin_manifest_has_56_ordered_ids() {
        let m = FeatureManifest::milepost();
        assert_eq!(m.len(), 56);
        let ids: Vec<_> = m.ids().collect();
        assert_eq!(ids[0], "ft1");
        assert_eq!(ids[55], "ft56");
        assert_eq!(m.index_of("ft24"), Some(23));
        assert_eq!(m.category_of("ft30"), Some(FeatureCategory::Phi));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let entry = FeatureEntry {
            id: "a".into(),
            description: String::new(),
            category: None,
        };
        let err = FeatureManifest::new(vec![entry.clone(), entry]).unwrap_err();
        assert!(matches!(err, DataError::Duplicate { .. }));
    }

    #[test]
    fn loads_override_file() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "feature_id,description,category").unwrap();
        writeln!(file, "a,loops,cfg").unwrap();
        writeln!(file, "b,\"adds, subs\",").unwrap();
        let m = FeatureManifest::load(file.path()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[1].description, "adds, subs");
        assert_eq!(m.entries()[1].category, None);
    }

    #[test]
    fn bad_category_is_a_parse_error() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "feature_id,description,category").unwrap();
        writeln!(file, "a,loops,loopy").unwrap();
        let err = FeatureManifest::load(file.path()).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }), "{err}");
    }
}

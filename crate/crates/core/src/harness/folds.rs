use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Deserialize;
use thiserror::Error;

pub const MIN_FOLD: u32 = 1;
pub const MAX_FOLD: u32 = 10;

#[derive(Debug, Error)]
pub enum FoldError {
    #[error("cannot read folds file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("folds file {path}, line {line}: {reason}")]
    Malformed { path: PathBuf, line: u64, reason: String },
    #[error("record {0} has no fold assignment")]
    MissingRecord(String),
}

#[derive(Debug, Deserialize)]
struct Row {
    record_id: String,
    fold: String,
}

/// Record id to fold number, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldAssignment {
    folds: IndexMap<String, u32>,
}

impl FoldAssignment {
    /// Reads a `record_id,fold` CSV with a header row.
    pub fn load(path: &Path) -> Result<Self, FoldError> {
        let text = std::fs::read_to_string(path).map_err(|source| FoldError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, FoldError> {
        let malformed = |line: u64, reason: String| FoldError::Malformed {
            path: path.to_owned(),
            line,
            reason,
        };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["record_id", "fold"] {
            let got = headers.iter().collect::<Vec<_>>().join(",");
            return Err(malformed(1, format!("expected header record_id,fold, got {got}")));
        }
        let mut folds = IndexMap::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| malformed(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let row: Row = rec.deserialize(Some(&headers)).map_err(|e| malformed(line, e.to_string()))?;
            let fold: u32 = row
                .fold
                .parse()
                .ok()
                .filter(|f| (MIN_FOLD..=MAX_FOLD).contains(f))
                .ok_or_else(|| malformed(line, format!("fold {:?} is not an integer in 1..=10", row.fold)))?;
            if row.record_id.is_empty() {
                return Err(malformed(line, "empty record_id".into()));
            }
            if folds.insert(row.record_id.clone(), fold).is_some() {
                return Err(malformed(line, format!("record {} listed twice", row.record_id)));
            }
        }
        Ok(Self { folds })
    }

    pub fn fold_of(&self, id: &str) -> Result<u32, FoldError> {
        self.folds
            .get(id)
            .copied()
            .ok_or_else(|| FoldError::MissingRecord(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FoldAssignment, FoldError> {
        FoldAssignment::parse(text, Path::new("folds.csv"))
    }

    #[test]
    fn reads_assignments() {
        let f = parse("record_id,fold\na,1\nb, 10\n").unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.fold_of("b").unwrap(), 10);
        assert!(matches!(f.fold_of("c"), Err(FoldError::MissingRecord(id)) if id == "c"));
    }

    #[test]
    fn rejects_bad_files() {
        for bad in [
            "id,fold\na,1\n",
            "record_id,fold\na,0\n",
            "record_id,fold\na,11\n",
            "record_id,fold\na,x\n",
            "record_id,fold\na,1\na,2\n",
            "record_id,fold\na\n",
        ] {
            assert!(matches!(parse(bad), Err(FoldError::Malformed { .. })), "{bad:?}");
        }
    }

    #[test]
    fn error_names_the_line() {
        match parse("record_id,fold\na,1\nb,12\n") {
            Err(FoldError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}

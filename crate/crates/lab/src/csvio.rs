//! Labeled tabular data from CSV files.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use pobandit_core::datasets::LabeledDataset;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot open {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error at row {row}, column {column}: {message}")]
    ParseError { row: usize, column: usize, message: String },
    #[error("label column {0:?} not found in header")]
    MissingLabel(String),
    #[error("non-numeric feature {value:?} at row {row}, column {column}")]
    NonNumericFeature { row: usize, column: usize, value: String },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] pobandit_core::Error),
}

/// A loaded dataset together with the original class names; class index `i`
/// is `classes[i]`, with names in sorted order.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub data: LabeledDataset,
    pub classes: Vec<String>,
    pub feature_names: Vec<String>,
}

pub fn load_csv(path: &Path, label_column: &str) -> Result<LoadedDataset, LoadError> {
    let file = std::fs::File::open(path).map_err(|source| LoadError::Io { path: path.to_owned(), source })?;
    read_csv(file, label_column)
}

/// Rows and columns in errors are 1-based, counting the header as row 1.
pub fn read_csv(reader: impl Read, label_column: &str) -> Result<LoadedDataset, LoadError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(&e, 1))?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| LoadError::MissingLabel(label_column.to_owned()))?;
    let feature_names: Vec<String> =
        header.iter().enumerate().filter(|&(i, _)| i != label_idx).map(|(_, h)| h.to_owned()).collect();

    let mut raw = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| parse_error(&e, row))?;
        let mut features = Vec::with_capacity(feature_names.len());
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                continue;
            }
            let value: f64 = field.parse().map_err(|_| LoadError::NonNumericFeature {
                row,
                column: col + 1,
                value: field.to_owned(),
            })?;
            if !value.is_finite() {
                return Err(LoadError::NonNumericFeature { row, column: col + 1, value: field.to_owned() });
            }
            features.push(value);
        }
        raw.push(features);
        raw_labels.push(record[label_idx].to_owned());
    }
    if raw.is_empty() {
        return Err(LoadError::EmptyDataset);
    }

    let classes: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw_labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label collected above"))
        .collect();
    let data = LabeledDataset::new(raw, labels, classes.len())?;
    Ok(LoadedDataset { data, classes, feature_names })
}

fn parse_error(e: &csv::Error, fallback_row: usize) -> LoadError {
    let (row, column) = match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, len, .. } => {
            (pos.as_ref().map_or(fallback_row, |p| p.line() as usize), *len as usize + 1)
        }
        _ => (e.position().map_or(fallback_row, |p| p.line() as usize), 0),
    };
    LoadError::ParseError { row, column, message: e.to_string() }
}

/// Writes features and labels as a CSV with columns `f1..fd,<label_column>`.
pub fn write_labeled_csv(
    path: &Path,
    features: &[Vec<f64>],
    labels: &[usize],
    label_column: &str,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    let d = features.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (1..=d).map(|j| format!("f{j}")).collect();
    header.push(label_column.to_owned());
    w.write_record(&header)?;
    for (x, l) in features.iter().zip(labels) {
        let mut rec: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
        rec.push(l.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, label: &str) -> Result<LoadedDataset, LoadError> {
        read_csv(text.as_bytes(), label)
    }

    #[test]
    fn three_rows_two_classes() {
        let d = load("a,b,class\n1,2,x\n3,5,y\n2,2,x\n", "class").unwrap();
        assert_eq!(d.data.d_x(), 2);
        assert_eq!(d.data.num_classes(), 2);
        assert_eq!(d.classes, vec!["x", "y"]);
        assert_eq!(d.data.labels(), &[0, 1, 0]);
        assert_eq!(d.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn label_column_may_be_anywhere() {
        let d = load("class,a\n2,0.5\n1,1.5\n", "class").unwrap();
        assert_eq!(d.data.d_x(), 1);
        assert_eq!(d.data.labels(), &[1, 0]);
    }

    #[test]
    fn constant_column_is_zeroed() {
        let d = load("a,b,l\n1,7,0\n2,7,1\n3,7,0\n", "l").unwrap();
        assert!(d.data.features().iter().all(|r| r[1] == 0.0));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(matches!(load("a,b,l\n", "l"), Err(LoadError::EmptyDataset)));
    }

    #[test]
    fn missing_label() {
        assert!(matches!(load("a,b\n1,2\n", "l"), Err(LoadError::MissingLabel(_))));
    }

    #[test]
    fn non_numeric_feature_reports_position() {
        match load("a,b,l\n1,2,0\n1,oops,1\n", "l") {
            Err(LoadError::NonNumericFeature { row, column, value }) => {
                assert_eq!((row, column, value.as_str()), (3, 2, "oops"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(load("a,l\nNaN,0\n", "l"), Err(LoadError::NonNumericFeature { .. })));
    }

    #[test]
    fn ragged_row_is_parse_error() {
        match load("a,b,l\n1,2,0\n1,2\n", "l") {
            Err(LoadError::ParseError { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let features = vec![vec![0.5, -1.0], vec![1.25, 2.0], vec![0.0, 0.0]];
        write_labeled_csv(&path, &features, &[1, 0, 1], "label").unwrap();
        let d = load_csv(&path, "label").unwrap();
        assert_eq!(d.data.len(), 3);
        assert_eq!(d.classes, vec!["0", "1"]);
    }
}

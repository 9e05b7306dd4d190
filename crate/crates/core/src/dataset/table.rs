use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use super::{impute_column_means, Dataset, Task};
use crate::error::{Error, Result};

/// Which CSV column holds the class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Numbers select by position, anything else by header name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) if s == "last" => LabelColumn::Last,
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

pub fn load_csv_mcc(path: &Path, label_column: &LabelColumn) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_mcc(&text, label_column, path)
}

/// Parses a headed CSV into a multi-class dataset. Class names are mapped to
/// indices in order of first appearance; `?` and empty cells are treated as
/// missing and imputed with the column mean.
pub fn parse_csv_mcc(text: &str, label_column: &LabelColumn, source: &Path) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(err(1, "empty file".into()));
    }
    let label_pos = match label_column {
        LabelColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(1, format!("label column `{name}` not in header")))?,
        LabelColumn::Index(i) if *i < header.len() => *i,
        LabelColumn::Index(i) => return Err(err(1, format!("label column {i} out of range"))),
        LabelColumn::Last => header.len() - 1,
    };
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_pos)
        .map(|(_, h)| h.clone())
        .collect();

    let mut classes: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (i, cell) in record.iter().enumerate() {
            if i == label_pos {
                let k = match classes.iter().position(|c| c == cell) {
                    Some(k) => k,
                    None => {
                        classes.push(cell.to_string());
                        classes.len() - 1
                    }
                };
                labels.push(vec![k]);
            } else if cell.is_empty() || cell == "?" {
                values.push(f64::NAN);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| err(line, format!("non-numeric value `{cell}` in column `{}`", header[i])))?;
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(err(1, "no data rows".into()));
    }
    if classes.len() < 2 {
        return Err(Error::Data(format!(
            "{}: need at least 2 classes, found {}",
            source.display(),
            classes.len()
        )));
    }
    let mut features =
        Array2::from_shape_vec((labels.len(), feature_names.len()), values).expect("consistent record width");
    impute_column_means(&mut features);
    Dataset::new(features, labels, classes, feature_names, Task::Mcc)
}

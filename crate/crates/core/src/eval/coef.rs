use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{csv_field, SblrModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub class: usize,
    pub name: String,
    /// Training instances relevant to both this class and the focus class.
    pub cooccurrence: usize,
    /// Weight of this class's evidence in the focus class's model.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub focus: usize,
    pub focus_name: String,
    pub intercept: f64,
    /// Sorted by co-occurrence, most frequent first; ties by class index.
    pub rows: Vec<CoefficientRow>,
}

impl CoefficientReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,cooccurrence,coefficient\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                csv_field(&r.name),
                r.cooccurrence,
                r.coefficient
            ));
        }
        out
    }
}

/// Coefficients that `focus`'s model puts on every class's evidence,
/// alongside how often each class co-occurs with `focus` in `d`.
pub fn coefficient_report(model: &SblrModel, d: &Dataset, focus: usize) -> Result<CoefficientReport> {
    let m = model.n_labels();
    if d.n_labels() != m {
        return Err(Error::Dimension {
            expected: m,
            actual: d.n_labels(),
        });
    }
    if focus >= m {
        return Err(Error::Param(format!("class index {focus} out of range (m = {m})")));
    }
    let mut counts = vec![0usize; m];
    for set in d.labels() {
        if set.binary_search(&focus).is_ok() {
            for &k in set {
                counts[k] += 1;
            }
        }
    }
    let weights = model.coefficients().weights(focus);
    let mut rows: Vec<CoefficientRow> = (0..m)
        .map(|k| CoefficientRow {
            class: k,
            name: d.label_names()[k].clone(),
            cooccurrence: counts[k],
            coefficient: weights[k],
        })
        .collect();
    rows.sort_by(|a, b| b.cooccurrence.cmp(&a.cooccurrence).then(a.class.cmp(&b.class)));
    Ok(CoefficientReport {
        focus,
        focus_name: d.label_names()[focus].clone(),
        intercept: model.coefficients().row(focus)[0],
        rows,
    })
}

/// `|beta|` with the intercept dropped: row k is class k's model, column t
/// the evidence of class t.
pub fn abs_coefficient_csv(model: &SblrModel, label_names: &[String]) -> String {
    let mut out = String::from("class");
    for n in label_names {
        out.push(',');
        out.push_str(&csv_field(n));
    }
    out.push('\n');
    for k in 0..model.n_labels() {
        out.push_str(&csv_field(&label_names[k]));
        for w in model.coefficients().weights(k) {
            out.push_str(&format!(",{}", w.abs()));
        }
        out.push('\n');
    }
    out
}

//! MULAN-flavoured ARFF reader.
//!
//! Label attributes are named by a companion XML file; every other numeric
//! attribute is a feature and nominal attributes are one-hot expanded. Both
//! dense and sparse (`{index value, ...}`) data rows are accepted.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{impute_column_means, Dataset, LabelSet, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum AttrType {
    Numeric,
    Nominal(Vec<String>),
    Unsupported(String),
}

#[derive(Debug, Clone)]
struct Attribute {
    name: String,
    ty: AttrType,
}

/// Where an ARFF attribute ends up in the dataset.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Label(usize),
    Numeric(usize),
    /// First one-hot column of a nominal feature.
    OneHot(usize),
}

pub fn load_arff_mulan(data_path: &Path, labels_xml_path: &Path) -> Result<Dataset> {
    let xml = fs::read_to_string(labels_xml_path).map_err(|e| Error::io(labels_xml_path, e))?;
    let labels = parse_label_xml(&xml).map_err(|msg| Error::Parse {
        path: labels_xml_path.to_path_buf(),
        line: 0,
        msg,
    })?;
    let text = fs::read_to_string(data_path).map_err(|e| Error::io(data_path, e))?;
    parse_arff_mulan(&text, &labels, data_path)
}

/// Label names declared in a MULAN labels file, in document order. Nested
/// (hierarchical) label elements are flattened.
pub fn parse_label_xml(xml: &str) -> std::result::Result<Vec<String>, String> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| e.to_string())?;
    let names: Vec<String> = doc
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "label")
        .map(|n| {
            n.attribute("name")
                .map(str::to_owned)
                .ok_or_else(|| "label element without a name attribute".to_string())
        })
        .collect::<std::result::Result<_, _>>()?;
    if names.is_empty() {
        return Err("labels file declares no labels".into());
    }
    Ok(names)
}

pub fn parse_arff_mulan(text: &str, label_names: &[String], source: &Path) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        msg,
    };
    if label_names.is_empty() {
        return Err(err(0, "empty label space".into()));
    }

    let mut attrs: Vec<Attribute> = Vec::new();
    let mut lines = text.lines().enumerate();
    let mut in_data = false;
    for (no, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            continue;
        }
        if lower.starts_with("@attribute") {
            let attr = parse_attribute(&line["@attribute".len()..]).map_err(|m| err(no + 1, m))?;
            attrs.push(attr);
            continue;
        }
        if lower.starts_with("@data") {
            in_data = true;
            break;
        }
        return Err(err(no + 1, format!("unexpected header line `{line}`")));
    }
    if !in_data {
        return Err(err(0, "missing @data section".into()));
    }

    // Map label names to attribute positions.
    let by_name: HashMap<&str, usize> = attrs.iter().enumerate().map(|(i, a)| (a.name.as_str(), i)).collect();
    let mut slots: Vec<Option<Slot>> = vec![None; attrs.len()];
    for (k, name) in label_names.iter().enumerate() {
        let &pos = by_name
            .get(name.as_str())
            .ok_or_else(|| err(0, format!("label attribute `{name}` not found in header")))?;
        if let AttrType::Unsupported(t) = &attrs[pos].ty {
            return Err(err(0, format!("label attribute `{name}` has type {t}")));
        }
        slots[pos] = Some(Slot::Label(k));
    }
    let mut feature_names = Vec::new();
    for (pos, attr) in attrs.iter().enumerate() {
        if slots[pos].is_some() {
            continue;
        }
        match &attr.ty {
            AttrType::Numeric => {
                slots[pos] = Some(Slot::Numeric(feature_names.len()));
                feature_names.push(attr.name.clone());
            }
            AttrType::Nominal(values) => {
                slots[pos] = Some(Slot::OneHot(feature_names.len()));
                feature_names.extend(values.iter().map(|v| format!("{}={}", attr.name, v)));
            }
            AttrType::Unsupported(t) => {
                return Err(err(0, format!("attribute `{}` has unsupported type {t}", attr.name)));
            }
        }
    }
    let d = feature_names.len();

    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<LabelSet> = Vec::new();
    for (no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let cells = parse_row(line, attrs.len()).map_err(|m| err(no + 1, m))?;
        let mut feat = vec![0.0; d];
        let mut set = LabelSet::new();
        for (pos, cell) in cells.iter().enumerate() {
            let attr = &attrs[pos];
            match slots[pos].expect("every attribute has a slot") {
                Slot::Label(k) => {
                    let on = match cell {
                        Cell::Omitted => false,
                        Cell::Value(v) => binary_value(v, &attr.ty)
                            .ok_or_else(|| err(no + 1, format!("non-binary value `{v}` for label `{}`", attr.name)))?,
                        Cell::Missing => return Err(err(no + 1, format!("missing value for label `{}`", attr.name))),
                    };
                    if on {
                        set.push(k);
                    }
                }
                Slot::Numeric(c) => {
                    feat[c] = match cell {
                        Cell::Omitted => 0.0,
                        Cell::Missing => f64::NAN,
                        Cell::Value(v) => v
                            .parse::<f64>()
                            .map_err(|_| err(no + 1, format!("non-numeric value `{v}` for `{}`", attr.name)))?,
                    };
                }
                Slot::OneHot(c) => {
                    let AttrType::Nominal(values) = &attr.ty else {
                        unreachable!()
                    };
                    match cell {
                        Cell::Missing => {
                            for f in &mut feat[c..c + values.len()] {
                                *f = f64::NAN;
                            }
                        }
                        Cell::Omitted => feat[c] = 1.0,
                        Cell::Value(v) => {
                            let idx = values
                                .iter()
                                .position(|x| x == v)
                                .ok_or_else(|| err(no + 1, format!("undeclared value `{v}` for `{}`", attr.name)))?;
                            feat[c + idx] = 1.0;
                        }
                    }
                }
            }
        }
        rows.extend(feat);
        labels.push(set);
    }
    let n = labels.len();
    let mut features = Array2::from_shape_vec((n, d), rows).expect("row length is d");
    impute_column_means(&mut features);
    Dataset::new(features, labels, label_names.to_vec(), feature_names, Task::Mlc)
}

fn binary_value(v: &str, ty: &AttrType) -> Option<bool> {
    match ty {
        AttrType::Nominal(_) | AttrType::Numeric => match v.parse::<f64>().ok()? {
            x if x == 1.0 => Some(true),
            x if x == 0.0 => Some(false),
            _ => None,
        },
        AttrType::Unsupported(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Value(String),
    Missing,
    /// Not listed in a sparse row.
    Omitted,
}

fn parse_row(line: &str, n_attrs: usize) -> std::result::Result<Vec<Cell>, String> {
    if let Some(body) = line.strip_prefix('{') {
        let end = body.rfind('}').ok_or("unterminated sparse row")?;
        let mut cells = vec![Cell::Omitted; n_attrs];
        for entry in split_quoted(&body[..end], ',')? {
            let entry = entry.trim();
            if entry.is_empty() {
                continue;
            }
            let (idx, value) = entry
                .split_once(char::is_whitespace)
                .ok_or_else(|| format!("malformed sparse entry `{entry}`"))?;
            let idx: usize = idx.parse().map_err(|_| format!("bad sparse index `{idx}`"))?;
            if idx >= n_attrs {
                return Err(format!("sparse index {idx} out of range"));
            }
            cells[idx] = to_cell(value.trim());
        }
        return Ok(cells);
    }
    let parts = split_quoted(line, ',')?;
    if parts.len() != n_attrs {
        return Err(format!("expected {n_attrs} values, found {}", parts.len()));
    }
    Ok(parts.iter().map(|p| to_cell(p.trim())).collect())
}

fn to_cell(raw: &str) -> Cell {
    if raw == "?" {
        Cell::Missing
    } else {
        Cell::Value(unquote(raw))
    }
}

fn parse_attribute(rest: &str) -> std::result::Result<Attribute, String> {
    let rest = rest.trim_start();
    let (name, tail) = if rest.starts_with(['\'', '"']) {
        let q = rest.as_bytes()[0] as char;
        let close = find_closing_quote(rest, q).ok_or("unterminated attribute name")?;
        (unquote(&rest[..=close]), &rest[close + 1..])
    } else {
        let split = rest
            .find(char::is_whitespace)
            .ok_or("attribute declaration without a type")?;
        (rest[..split].to_string(), &rest[split..])
    };
    let tail = tail.trim();
    let ty = if let Some(body) = tail.strip_prefix('{') {
        let end = body.rfind('}').ok_or("unterminated nominal specification")?;
        let values = split_quoted(&body[..end], ',')?
            .iter()
            .map(|v| unquote(v.trim()))
            .collect();
        AttrType::Nominal(values)
    } else {
        match tail.split_whitespace().next().map(str::to_ascii_lowercase).as_deref() {
            Some("numeric" | "real" | "integer") => AttrType::Numeric,
            Some(other) => AttrType::Unsupported(other.to_string()),
            None => return Err("attribute declaration without a type".into()),
        }
    };
    Ok(Attribute { name, ty })
}

fn find_closing_quote(s: &str, q: char) -> Option<usize> {
    let mut escaped = false;
    for (i, c) in s.char_indices().skip(1) {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == q {
            return Some(i);
        }
    }
    None
}

fn unquote(s: &str) -> String {
    let b = s.as_bytes();
    if b.len() >= 2 && (b[0] == b'\'' || b[0] == b'"') && b[b.len() - 1] == b[0] {
        let inner = &s[1..s.len() - 1];
        let mut out = String::with_capacity(inner.len());
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            if c == '\\' {
                if let Some(next) = chars.next() {
                    out.push(next);
                }
            } else {
                out.push(c);
            }
        }
        out
    } else {
        s.to_string()
    }
}

/// Splits on `sep` outside of single or double quotes.
fn split_quoted(s: &str, sep: char) -> std::result::Result<Vec<&str>, String> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match quote {
            Some(_) if c == '\\' => escaped = true,
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if c == '\'' || c == '"' => quote = Some(c),
            None if c == sep => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            None => {}
        }
    }
    if quote.is_some() {
        return Err("unterminated quoted value".into());
    }
    parts.push(&s[start..]);
    Ok(parts)
}

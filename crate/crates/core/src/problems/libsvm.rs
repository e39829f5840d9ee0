//! Reader for the LIBSVM sparse text format.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read};

use crate::error::{Error, Result};
use crate::problems::logistic::{Dataset, SparseRow};

/// Parses `<label> <idx>:<val> ...` lines with 1-based ascending indices.
///
/// Labels `{-1, +1}` are kept, `{0, 1}` become `{-1, +1}`, and any other
/// two-valued label set maps its smaller value to `-1`. Text after `#` is
/// ignored, as are blank lines.
pub fn parse_libsvm<R: Read>(reader: R) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            reason: format!("bad label `{label_tok}`"),
        })?;
        if !label.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("bad label `{label_tok}`"),
            });
        }
        let mut row = SparseRow::default();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                reason: format!("expected index:value, got `{tok}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("bad index `{idx}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    reason: "indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("bad value `{val}`"),
            })?;
            if row.indices.last().is_some_and(|&last| idx - 1 <= last) {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("index {idx} not ascending"),
                });
            }
            n = n.max(idx);
            row.indices.push(idx - 1);
            row.values.push(val);
        }
        rows.push(row);
        raw_labels.push(label);
    }
    let labels = normalize_labels(&raw_labels)?;
    Ok(Dataset { rows, labels, n })
}

pub fn parse_libsvm_str(text: &str) -> Result<Dataset> {
    parse_libsvm(text.as_bytes())
}

fn normalize_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let distinct: BTreeSet<u64> = raw.iter().map(|v| v.to_bits()).collect();
    let values: Vec<f64> = {
        let mut v: Vec<f64> = distinct.iter().map(|&b| f64::from_bits(b)).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v.dedup();
        v
    };
    let known = |v: f64| v == 1.0 || v == -1.0 || v == 0.0;
    match values.as_slice() {
        [] => Ok(Vec::new()),
        [v] if known(*v) => Ok(raw.iter().map(|&l| if l > 0.0 { 1.0 } else { -1.0 }).collect()),
        [v] => Err(Error::NonBinaryLabels(format!("single unrecognised label {v}"))),
        [lo, _] => Ok(raw.iter().map(|&l| if l == *lo { -1.0 } else { 1.0 }).collect()),
        many => Err(Error::NonBinaryLabels(format!("{} distinct labels", many.len()))),
    }
}

//! Sparse text format.
//!
//! ```text
//! # comment
//! N d m
//! LABELS FEATURES
//! ```
//!
//! `LABELS` is a comma-separated list of 0-based positive label indices,
//! where `?j` marks label `j` as missing and every unlisted label is
//! negative. An empty `LABELS` field means all-negative. `FEATURES` are
//! space-separated `index:value` pairs with strictly increasing 0-based
//! indices; absent features are zero.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Label, LabelMatrix, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub fn load_dataset(path: impl AsRef<Path>) -> Result<MultiLabelDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text, path)
}

/// Parses dataset text; `origin` only labels error messages.
pub fn parse_dataset(text: &str, origin: &Path) -> Result<MultiLabelDataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l))
        .filter(|(_, l)| !l.trim_start().starts_with('#'));

    let (header_no, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| err(1, "missing `N d m` header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(header_no, format!("bad header {header:?}: {e}")))?;
    let [n, d, m] = dims[..] else {
        return Err(err(
            header_no,
            format!("header must be `N d m`, got {header:?}"),
        ));
    };

    let mut features = Matrix::zeros(d, n);
    let mut labels = LabelMatrix::filled(m, n, Label::Neg);
    let mut seen = 0;
    for (line_no, line) in lines {
        if seen == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(err(
                line_no,
                format!("more than the declared {n} instances"),
            ));
        }
        parse_instance(line, seen, d, m, &mut features, &mut labels)
            .map_err(|msg| err(line_no, msg))?;
        seen += 1;
    }
    if seen < n {
        return Err(err(
            text.lines().count(),
            format!("declared {n} instances, found {seen}"),
        ));
    }
    MultiLabelDataset::new(features, labels)
}

fn parse_instance(
    line: &str,
    i: usize,
    d: usize,
    m: usize,
    features: &mut Matrix,
    labels: &mut LabelMatrix,
) -> std::result::Result<(), String> {
    let mut tokens = line.split_whitespace().peekable();
    if let Some(first) = tokens.peek() {
        if !first.contains(':') {
            let field = tokens.next().unwrap();
            for item in field.split(',') {
                let (value, idx) = match item.strip_prefix('?') {
                    Some(rest) => (Label::Missing, rest),
                    None => (Label::Pos, item),
                };
                let j: usize = idx
                    .parse()
                    .map_err(|_| format!("bad label entry {item:?}"))?;
                if j >= m {
                    return Err(format!("label index {j} out of range (m = {m})"));
                }
                if labels.get(j, i) != Label::Neg {
                    return Err(format!("label {j} listed twice"));
                }
                labels.set(j, i, value);
            }
        }
    }

    let mut prev: Option<usize> = None;
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| format!("expected index:value, got {tok:?}"))?;
        let k: usize = idx
            .parse()
            .map_err(|_| format!("bad feature index in {tok:?}"))?;
        let v: f64 = val
            .parse()
            .map_err(|_| format!("bad feature value in {tok:?}"))?;
        if k >= d {
            return Err(format!("feature index {k} out of range (d = {d})"));
        }
        if !v.is_finite() {
            return Err(format!("non-finite feature value in {tok:?}"));
        }
        match prev {
            Some(p) if p == k => return Err(format!("duplicate feature index {k}")),
            Some(p) if p > k => {
                return Err(format!("feature indices not increasing ({p} then {k})"))
            }
            _ => {}
        }
        prev = Some(k);
        features.set(k, i, v);
    }
    Ok(())
}

/// Serializes a dataset; [`parse_dataset`] inverts it bit-exactly.
pub fn format_dataset(ds: &MultiLabelDataset) -> String {
    let (n, d, m) = (ds.n_instances(), ds.n_features(), ds.n_labels());
    let mut out = format!("{n} {d} {m}\n");
    for i in 0..n {
        let mut first = true;
        for j in 0..m {
            let tag = match ds.labels().get(j, i) {
                Label::Pos => "",
                Label::Missing => "?",
                Label::Neg => continue,
            };
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{tag}{j}").unwrap();
        }
        for k in 0..d {
            let v = ds.features().get(k, i);
            // +0.0 is implied by absence; -0.0 is written so bits survive.
            if v.to_bits() != 0 {
                write!(out, " {k}:{v:?}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(ds: &MultiLabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_dataset(ds)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

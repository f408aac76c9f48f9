//! Multi-label datasets with three-state labels, the GML text format,
//! label masking and train/test splitting.
//!
//! Instances are stored column-wise: a [`FeatureMatrix`] is `d x n` and a
//! [`LabelMatrix`] is `l x n`. Label entries are `+1`, `-1` or `0`, where `0`
//! marks a missing (unobserved) label.
//!
//! # GML format
//!
//! ```text
//! n d l
//! +:<positive label csv>|-:<negative label csv>|<feat:value ...>
//! ```
//!
//! One line per instance after the header. Label and feature indices are
//! 1-based. Lines starting with `#` are comments and ignored anywhere.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GlocalError, Result};

/// Dense `d x n` instance matrix; column `i` is instance `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (d, n) = values.dim();
        if d == 0 || n == 0 {
            return Err(GlocalError::InvalidArgument(format!(
                "feature matrix must be non-empty, got {d}x{n}"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(GlocalError::NonFinite(format!(
                "feature entry {} of {d}x{n} matrix",
                pos
            )));
        }
        Ok(Self { values })
    }

    pub fn d(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Columns `cols` (in that order) as a new matrix.
    pub fn select(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select(Axis(1), cols),
        }
    }

    /// Append a constant `1.0` feature row, giving the linear map an intercept.
    pub fn with_bias(&self) -> FeatureMatrix {
        let (d, n) = self.values.dim();
        let mut values = Array2::ones((d + 1, n));
        values.slice_mut(ndarray::s![..d, ..]).assign(&self.values);
        FeatureMatrix { values }
    }
}

/// `l x n` label matrix with entries in `{-1, 0, +1}`; `0` means missing.
///
/// The observation indicator is derived from the values, so its support
/// always equals the nonzero support of the labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    values: Array2<i8>,
}

impl LabelMatrix {
    pub fn new(values: Array2<i8>) -> Result<Self> {
        let (l, n) = values.dim();
        if l < 2 {
            return Err(GlocalError::InvalidArgument(format!(
                "label matrix needs at least 2 labels, got {l}"
            )));
        }
        if n == 0 {
            return Err(GlocalError::InvalidArgument(
                "label matrix has no instances".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !matches!(v, -1..=1)) {
            return Err(GlocalError::InvalidArgument(format!(
                "label value {v} not in {{-1, 0, +1}}"
            )));
        }
        Ok(Self { values })
    }

    pub fn l(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<i8> {
        &self.values
    }

    /// Label values as reals.
    pub fn to_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    /// Observation indicator `J`: 1 where a label is observed, 0 otherwise.
    pub fn indicator(&self) -> Array2<f64> {
        self.values.mapv(|v| if v != 0 { 1.0 } else { 0.0 })
    }

    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn select(&self, cols: &[usize]) -> LabelMatrix {
        LabelMatrix {
            values: self.values.select(Axis(1), cols),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: LabelMatrix,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, labels: LabelMatrix) -> Result<Self> {
        if features.n() != labels.n() {
            return Err(GlocalError::Shape(format!(
                "{} feature columns vs {} label columns",
                features.n(),
                labels.n()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn n(&self) -> usize {
        self.features.n()
    }

    pub fn d(&self) -> usize {
        self.features.d()
    }

    pub fn l(&self) -> usize {
        self.labels.l()
    }

    /// Sub-dataset made of instance columns `cols`.
    pub fn select(&self, cols: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(cols),
            labels: self.labels.select(cols),
        }
    }
}

/// Masking request: keep `rho` percent of the label positions observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    rho: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn new(rho: f64, seed: u64) -> Result<Self> {
        if !(0.0..=100.0).contains(&rho) {
            return Err(GlocalError::InvalidArgument(format!(
                "rho must lie in [0, 100], got {rho}"
            )));
        }
        Ok(Self { rho, seed })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// A label hidden by masking: 0-based label and instance index plus the
/// value it had before masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HiddenEntry {
    pub label: usize,
    pub instance: usize,
    pub value: i8,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, s)| (i + 1, s.trim()))
        .filter(|(_, s)| !s.is_empty() && !s.starts_with('#'))
}

fn parse_positive(tok: &str, line: usize, what: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(GlocalError::parse(
            line,
            format!("{what} must be a positive integer, got {tok:?}"),
        )),
    }
}

fn parse_label_field(
    field: &str,
    prefix: &str,
    l: usize,
    line: usize,
    seen: &mut HashSet<usize>,
) -> Result<Vec<usize>> {
    let body = field.trim().strip_prefix(prefix).ok_or_else(|| {
        GlocalError::parse(line, format!("label field must start with {prefix:?}"))
    })?;
    let mut out = Vec::new();
    for tok in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let idx = parse_positive(tok, line, "label index")?;
        if idx > l {
            return Err(GlocalError::parse(
                line,
                format!("label index {idx} out of range 1..={l}"),
            ));
        }
        if !seen.insert(idx) {
            return Err(GlocalError::parse(
                line,
                format!("duplicate label index {idx}"),
            ));
        }
        out.push(idx - 1);
    }
    Ok(out)
}

/// Parse a dataset in GML format.
pub fn parse_gml(text: &str) -> Result<Dataset> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| GlocalError::parse(1, "missing header line"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 3 {
        return Err(GlocalError::parse(
            hline,
            format!("header must be `n d l`, got {header:?}"),
        ));
    }
    let n = parse_positive(dims[0], hline, "n")?;
    let d = parse_positive(dims[1], hline, "d")?;
    let l = parse_positive(dims[2], hline, "l")?;

    let mut x = Array2::<f64>::zeros((d, n));
    let mut y = Array2::<i8>::zeros((l, n));
    let mut count = 0;
    for (lineno, line) in lines {
        if count == n {
            return Err(GlocalError::parse(
                lineno,
                format!("more than the declared {n} instance lines"),
            ));
        }
        let parts: Vec<&str> = line.splitn(3, '|').collect();
        if parts.len() != 3 {
            return Err(GlocalError::parse(lineno, "expected `+:..|-:..|features`"));
        }
        let mut seen = HashSet::new();
        for j in parse_label_field(parts[0], "+:", l, lineno, &mut seen)? {
            y[[j, count]] = 1;
        }
        for j in parse_label_field(parts[1], "-:", l, lineno, &mut seen)? {
            y[[j, count]] = -1;
        }
        let mut seen_feat = HashSet::new();
        for pair in parts[2].split_whitespace() {
            let (fi, fv) = pair.split_once(':').ok_or_else(|| {
                GlocalError::parse(lineno, format!("feature {pair:?} is not `index:value`"))
            })?;
            let fi = parse_positive(fi, lineno, "feature index")?;
            if fi > d {
                return Err(GlocalError::parse(
                    lineno,
                    format!("feature index {fi} out of range 1..={d}"),
                ));
            }
            if !seen_feat.insert(fi) {
                return Err(GlocalError::parse(
                    lineno,
                    format!("duplicate feature index {fi}"),
                ));
            }
            let v: f64 = fv.parse().map_err(|_| {
                GlocalError::parse(lineno, format!("non-numeric feature value {fv:?}"))
            })?;
            if !v.is_finite() {
                return Err(GlocalError::parse(
                    lineno,
                    format!("non-finite feature value {fv:?}"),
                ));
            }
            x[[fi - 1, count]] = v;
        }
        count += 1;
    }
    if count != n {
        return Err(GlocalError::parse(
            hline,
            format!("header declares {n} instances but {count} were found"),
        ));
    }
    Dataset::new(FeatureMatrix::new(x)?, LabelMatrix::new(y)?)
}

/// Serialise a dataset to GML. Only nonzero features are written; values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_gml(data: &Dataset) -> String {
    write_gml_with_comment(data, None)
}

pub fn write_gml_with_comment(data: &Dataset, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "{} {} {}", data.n(), data.d(), data.l());
    let y = data.labels.values();
    let x = data.features.values();
    for i in 0..data.n() {
        let col = y.column(i);
        let join = |want: i8| {
            col.iter()
                .enumerate()
                .filter(|(_, &v)| v == want)
                .map(|(j, _)| (j + 1).to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let feats = x
            .column(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(f, v)| format!("{}:{}", f + 1, v))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(out, "+:{}|-:{}|{}", join(1), join(-1), feats);
    }
    out
}

/// Keep exactly `round(rho/100 * l * n)` label positions, sampled uniformly
/// without replacement, and zero the rest.
///
/// Returns the masked dataset together with every previously observed entry
/// that the mask hid, in column-major order. Positions that were already
/// missing stay missing even when sampled.
pub fn apply_mask(data: &Dataset, spec: &MaskSpec) -> (Dataset, Vec<HiddenEntry>) {
    let (l, n) = data.labels.values().dim();
    let total = l * n;
    let keep = ((spec.rho / 100.0) * total as f64).round() as usize;
    let keep = keep.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut kept = vec![false; total];
    for pos in index::sample(&mut rng, total, keep) {
        kept[pos] = true;
    }

    let orig = data.labels.values();
    let mut masked = orig.clone();
    let mut hidden = Vec::new();
    for i in 0..n {
        for j in 0..l {
            // position index is column-major: instance-major, then label
            if !kept[i * l + j] {
                let v = orig[[j, i]];
                if v != 0 {
                    hidden.push(HiddenEntry {
                        label: j,
                        instance: i,
                        value: v,
                    });
                }
                masked[[j, i]] = 0;
            }
        }
    }
    let masked = Dataset {
        features: data.features.clone(),
        labels: LabelMatrix { values: masked },
    };
    (masked, hidden)
}

/// Random instance split; returns sorted `(train, test)` column indices.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(GlocalError::InvalidArgument(format!(
            "cannot split {n} instance(s)"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(GlocalError::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(GlocalError::InvalidArgument(format!(
            "train fraction {train_fraction} of {n} instances leaves one side empty"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.n(), train_fraction, seed)?;
    Ok((data.select(&train), data.select(&test)))
}

/// Sidecar listing of hidden entries: `label_idx instance_idx value`, 1-based.
pub fn write_hidden(entries: &[HiddenEntry], comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    for e in entries {
        let _ = writeln!(out, "{} {} {}", e.label + 1, e.instance + 1, e.value);
    }
    out
}

pub fn parse_hidden(text: &str) -> Result<Vec<HiddenEntry>> {
    content_lines(text)
        .map(|(lineno, line)| {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(GlocalError::parse(
                    lineno,
                    "expected `label_idx instance_idx value`",
                ));
            }
            let label = parse_positive(toks[0], lineno, "label index")? - 1;
            let instance = parse_positive(toks[1], lineno, "instance index")? - 1;
            let value = match toks[2] {
                "1" | "+1" => 1,
                "-1" => -1,
                other => {
                    return Err(GlocalError::parse(
                        lineno,
                        format!("hidden value must be +1 or -1, got {other:?}"),
                    ))
                }
            };
            Ok(HiddenEntry {
                label,
                instance,
                value,
            })
        })
        .collect()
}

/// Label matrix holding only the hidden entries (everything else 0).
pub fn hidden_truth(entries: &[HiddenEntry], l: usize, n: usize) -> Result<Array2<i8>> {
    let mut t = Array2::<i8>::zeros((l, n));
    for e in entries {
        if e.label >= l || e.instance >= n {
            return Err(GlocalError::Shape(format!(
                "hidden entry ({}, {}) outside {l}x{n}",
                e.label + 1,
                e.instance + 1
            )));
        }
        t[[e.label, e.instance]] = e.value;
    }
    Ok(t)
}

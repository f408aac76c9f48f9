//! Learned parameters, inference and the model file format.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::correlation::LaplacianFactor;
use crate::dataset::FeatureMatrix;
use crate::error::{GlocalError, Result};

pub const MODEL_MAGIC: &str = "GLOCAL-MODEL";
pub const MODEL_VERSION: u32 = 1;

/// Trade-off weights and optimisation budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Weight of `‖V - WᵀX‖²`.
    pub lambda: f64,
    /// Frobenius regulariser on `U`, `V`, `W`.
    pub lambda2: f64,
    /// Global manifold term.
    pub lambda3: f64,
    /// Local manifold terms.
    pub lambda4: f64,
    /// Latent dimension.
    pub k: usize,
    /// Number of instance groups.
    pub g: usize,
    pub outer_iters: usize,
    pub inner_steps: usize,
    pub warm_iters: usize,
    /// Relative objective change that stops the outer loop.
    pub tol: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lambda2: 0.1,
            lambda3: 0.1,
            lambda4: 0.1,
            k: 3,
            g: 4,
            outer_iters: 50,
            inner_steps: 5,
            warm_iters: 20,
            tol: 1e-5,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("tol", self.tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GlocalError::InvalidArgument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.k == 0 {
            return Err(GlocalError::InvalidArgument("k must be >= 1".into()));
        }
        if self.g == 0 {
            return Err(GlocalError::InvalidArgument("g must be >= 1".into()));
        }
        Ok(())
    }
}

/// `U` (`l x k`), `V` (`k x n`), `W` (`d x k`) and one factor per group.
///
/// Inference uses `U` and `W` only; `V` is kept for inspecting the recovered
/// training labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GlocalModel {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub w: Array2<f64>,
    pub factors: Vec<LaplacianFactor>,
}

impl GlocalModel {
    pub fn new(
        u: Array2<f64>,
        v: Array2<f64>,
        w: Array2<f64>,
        factors: Vec<LaplacianFactor>,
    ) -> Result<Self> {
        let m = Self { u, v, w, factors };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let k = self.u.ncols();
        if self.v.nrows() != k || self.w.ncols() != k {
            return Err(GlocalError::Shape(format!(
                "U is {:?}, V is {:?}, W is {:?}: latent dimensions disagree",
                self.u.dim(),
                self.v.dim(),
                self.w.dim()
            )));
        }
        for (m, z) in self.factors.iter().enumerate() {
            if z.as_array().dim() != self.u.dim() {
                return Err(GlocalError::Shape(format!(
                    "Z{} is {:?}, expected {:?}",
                    m + 1,
                    z.as_array().dim(),
                    self.u.dim()
                )));
            }
        }
        let all = self
            .u
            .iter()
            .chain(self.v.iter())
            .chain(self.w.iter())
            .chain(self.factors.iter().flat_map(|z| z.as_array().iter()));
        for v in all {
            if !v.is_finite() {
                return Err(GlocalError::NonFinite("model parameter".into()));
            }
        }
        Ok(())
    }

    pub fn l(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.u.ncols()
    }

    pub fn g(&self) -> usize {
        self.factors.len()
    }
}

/// Real-valued label scores `U Wᵀ X` (`l x n`).
pub fn score(model: &GlocalModel, features: &FeatureMatrix) -> Result<Array2<f64>> {
    if features.d() != model.d() {
        return Err(GlocalError::Shape(format!(
            "model expects {} features, data has {}",
            model.d(),
            features.d()
        )));
    }
    Ok(model.u.dot(&model.w.t().dot(features.values())))
}

/// Sign of a score; exactly zero maps to `-1`.
pub fn sign(s: f64) -> i8 {
    if s > 0.0 {
        1
    } else {
        -1
    }
}

/// `±1` predictions.
pub fn predict(model: &GlocalModel, features: &FeatureMatrix) -> Result<Array2<i8>> {
    Ok(score(model, features)?.mapv(sign))
}

fn write_block(out: &mut String, name: &str, a: &Array2<f64>) {
    let _ = writeln!(out, "{name} {} {}", a.nrows(), a.ncols());
    for row in a.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

/// Serialise a model. Values carry 17 significant digits, enough to read
/// back the identical `f64`.
pub fn save_model(model: &GlocalModel, comment: Option<&str>) -> String {
    let mut out = format!("{MODEL_MAGIC} v{MODEL_VERSION}\n");
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(
        out,
        "{} {} {} {}",
        model.l(),
        model.d(),
        model.k(),
        model.g()
    );
    write_block(&mut out, "U", &model.u);
    write_block(&mut out, "W", &model.w);
    write_block(&mut out, "V", &model.v);
    for (m, z) in model.factors.iter().enumerate() {
        write_block(&mut out, &format!("Z{}", m + 1), z.as_array());
    }
    out
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read_block<'a>(
    toks: &mut impl Iterator<Item = (usize, &'a str)>,
    name: &str,
    rows: usize,
    cols: Option<usize>,
) -> Result<Array2<f64>> {
    let (hline, header) = toks
        .next()
        .ok_or_else(|| GlocalError::Shape(format!("expected block {name}, found end of file")))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let dims: Option<(usize, usize)> = match parts.as_slice() {
        [n, r, c] if *n == name => r.parse().ok().zip(c.parse().ok()),
        _ => None,
    };
    let (r, c) = dims.ok_or_else(|| {
        GlocalError::parse(
            hline,
            format!("expected `{name} rows cols`, got {header:?}"),
        )
    })?;
    if r != rows || cols.is_some_and(|c0| c0 != c) {
        return Err(GlocalError::Shape(format!(
            "block {name} declared {r}x{c}, header implies {rows}x{}",
            cols.map_or("?".to_string(), |c| c.to_string())
        )));
    }
    let want = r * c;
    let mut vals = Vec::with_capacity(want);
    while vals.len() < want {
        let Some((lineno, line)) = toks.next() else {
            break;
        };
        for t in line.split_whitespace() {
            let v: f64 = t
                .parse()
                .map_err(|_| GlocalError::parse(lineno, format!("bad number {t:?} in {name}")))?;
            if !v.is_finite() {
                return Err(GlocalError::NonFinite(format!(
                    "line {lineno} in block {name}"
                )));
            }
            vals.push(v);
        }
    }
    if vals.len() != want {
        return Err(GlocalError::Shape(format!(
            "block {name}: expected {want} values, found {}",
            vals.len()
        )));
    }
    Array2::from_shape_vec((r, c), vals).map_err(|e| GlocalError::Shape(e.to_string()))
}

pub fn load_model(text: &str) -> Result<GlocalModel> {
    let mut toks = content_lines(text);
    let (mline, magic) = toks
        .next()
        .ok_or_else(|| GlocalError::parse(1, "empty model file"))?;
    let version = magic
        .strip_prefix(MODEL_MAGIC)
        .map(str::trim)
        .and_then(|v| v.strip_prefix('v'))
        .ok_or_else(|| GlocalError::parse(mline, format!("missing `{MODEL_MAGIC}` magic line")))?;
    match version.parse::<u32>() {
        Ok(MODEL_VERSION) => {}
        _ => return Err(GlocalError::Version(version.to_string())),
    }

    let (dline, dims) = toks
        .next()
        .ok_or_else(|| GlocalError::Shape("missing `l d k g` line".into()))?;
    let nums: Vec<usize> = dims
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| GlocalError::parse(dline, "expected `l d k g`"))?;
    let [l, d, k, g] = nums[..] else {
        return Err(GlocalError::parse(dline, "expected `l d k g`"));
    };

    let u = read_block(&mut toks, "U", l, Some(k))?;
    let w = read_block(&mut toks, "W", d, Some(k))?;
    let v = read_block(&mut toks, "V", k, None)?;
    let mut factors = Vec::with_capacity(g);
    for m in 0..g {
        let z = read_block(&mut toks, &format!("Z{}", m + 1), l, Some(k))?;
        factors.push(LaplacianFactor::from_unit_rows(z)?);
    }
    if let Some((line, _)) = toks.next() {
        return Err(GlocalError::Shape(format!(
            "trailing content at line {line} after {g} factor blocks"
        )));
    }
    GlocalModel::new(u, v, w, factors)
}
